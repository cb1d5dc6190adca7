// SPDX-License-Identifier: Apache-2.0
#include "rerank/access.hpp"

#include <algorithm>
#include <cmath>

namespace rerank {

void CostLedger::record(const std::string& algo, std::int64_t query_id, Phase phase,
                        const SearchQuery* q, const QueryOutcome* out) {
    total_.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lk(mu_);
    ++counts_[Key{algo, query_id, static_cast<int>(phase)}];
    if (log_enabled_) {
        QueryRecord rec;
        rec.algo = algo;
        rec.query_id = query_id;
        rec.phase = phase;
        if (q) rec.query = *q;
        if (out) {
            rec.status = out->status;
            for (const auto& t : out->tuples) rec.returned.push_back(t.id);
        }
        log_.push_back(std::move(rec));
    }
}

long long CostLedger::total(Phase phase) const {
    std::lock_guard lk(mu_);
    long long n = 0;
    for (const auto& [key, cnt] : counts_)
        if (std::get<2>(key) == static_cast<int>(phase)) n += cnt;
    return n;
}

long long CostLedger::count(const std::string& algo, std::int64_t query_id, Phase phase) const {
    std::lock_guard lk(mu_);
    auto it = counts_.find(Key{algo, query_id, static_cast<int>(phase)});
    return it == counts_.end() ? 0 : it->second;
}

long long CostLedger::count_algo(const std::string& algo) const {
    std::lock_guard lk(mu_);
    long long n = 0;
    for (const auto& [key, cnt] : counts_)
        if (std::get<0>(key) == algo) n += cnt;
    return n;
}

long long CostLedger::count_query(const std::string& algo, std::int64_t query_id) const {
    std::lock_guard lk(mu_);
    long long n = 0;
    for (const auto& [key, cnt] : counts_)
        if (std::get<0>(key) == algo && std::get<1>(key) == query_id) n += cnt;
    return n;
}

std::vector<QueryRecord> CostLedger::log_snapshot() const {
    std::lock_guard lk(mu_);
    return log_;
}

void CostLedger::reset() {
    std::lock_guard lk(mu_);
    total_.store(0);
    counts_.clear();
    log_.clear();
}

namespace {

// Compiled predicate list for one scan over the tuple store.
struct CompiledQuery {
    struct Range {
        std::size_t idx;
        double lo, hi;
        bool lo_open, hi_open;
    };
    struct Eq {
        std::size_t idx;
        std::string value;
    };
    std::vector<Range> ranges;
    std::vector<Eq> eqs;

    CompiledQuery(const Schema& schema, const SearchQuery& q) {
        for (const auto& r : q.ranges) {
            int idx = schema.ordinal_index(r.attr);
            ranges.push_back({static_cast<std::size_t>(idx), r.lower, r.upper, r.lower_open,
                              r.upper_open});
        }
        for (const auto& e : q.equalities) {
            int idx = schema.categorical_index(e.attr);
            eqs.push_back({static_cast<std::size_t>(idx), e.value});
        }
    }

    bool matches(const Tuple& t) const {
        for (const auto& r : ranges) {
            double v = t.ordinal[r.idx];
            if (r.lo_open ? !(v > r.lo) : !(v >= r.lo)) return false;
            if (r.hi_open ? !(v < r.hi) : !(v <= r.hi)) return false;
        }
        for (const auto& e : eqs)
            if (t.categorical[e.idx] != e.value) return false;
        return true;
    }
};

}  // namespace

SimulatedDatabase::SimulatedDatabase(Schema schema, std::vector<Tuple> tuples,
                                     RankingFunction system_ranking, int k)
    : schema_(std::move(schema)), tuples_(std::move(tuples)), k_(k) {
    if (k_ < 1) throw std::invalid_argument("database: system k must be positive");
    scorer_ = [f = std::move(system_ranking), this](const Tuple& t) {
        return f.score(schema_, t);
    };
}

SimulatedDatabase::SimulatedDatabase(Schema schema, std::vector<Tuple> tuples, SystemScorer scorer,
                                     int k)
    : schema_(std::move(schema)), tuples_(std::move(tuples)), scorer_(std::move(scorer)), k_(k) {
    if (k_ < 1) throw std::invalid_argument("database: system k must be positive");
    if (!scorer_) throw std::invalid_argument("database: missing system scorer");
}

QueryOutcome SimulatedDatabase::top_k(const SearchQuery& q) {
    CompiledQuery cq(schema_, q);
    std::vector<const Tuple*> matching;
    for (const auto& t : tuples_)
        if (cq.matches(t)) matching.push_back(&t);

    QueryOutcome out;
    if (matching.empty()) {
        out.status = Status::Underflow;
        return out;
    }
    if (matching.size() <= static_cast<std::size_t>(k_)) {
        out.status = Status::Valid;
        for (const Tuple* t : matching) out.tuples.push_back(*t);
        return out;
    }
    out.status = Status::Overflow;
    std::vector<std::pair<double, const Tuple*>> scored;
    scored.reserve(matching.size());
    for (const Tuple* t : matching) scored.emplace_back(scorer_(*t), t);
    auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second->id < b.second->id;
    };
    std::nth_element(scored.begin(), scored.begin() + k_ - 1, scored.end(), better);
    std::sort(scored.begin(), scored.begin() + k_, better);
    for (int i = 0; i < k_; ++i) out.tuples.push_back(*scored[static_cast<std::size_t>(i)].second);
    return out;
}

QueryOutcome SimulatedDatabase::top_k_by_attr(const SearchQuery& q, const std::string& attr,
                                              bool descending) {
    int idx = schema_.ordinal_index(attr);
    if (idx < 0) throw std::invalid_argument("database: unknown order-by attribute: " + attr);
    CompiledQuery cq(schema_, q);
    std::vector<const Tuple*> matching;
    for (const auto& t : tuples_)
        if (cq.matches(t)) matching.push_back(&t);

    QueryOutcome out;
    if (matching.empty()) {
        out.status = Status::Underflow;
        return out;
    }
    auto better = [&](const Tuple* a, const Tuple* b) {
        double va = a->ordinal[static_cast<std::size_t>(idx)];
        double vb = b->ordinal[static_cast<std::size_t>(idx)];
        if (va != vb) return descending ? va > vb : va < vb;
        return a->id < b->id;
    };
    if (matching.size() <= static_cast<std::size_t>(k_)) {
        out.status = Status::Valid;
    } else {
        out.status = Status::Overflow;
        std::nth_element(matching.begin(), matching.begin() + k_ - 1, matching.end(), better);
        matching.resize(static_cast<std::size_t>(k_));
    }
    std::sort(matching.begin(), matching.end(), better);
    for (const Tuple* t : matching) out.tuples.push_back(*t);
    return out;
}

AdversarialDatabase::AdversarialDatabase(std::string attr, double v0, double v_inf, int k,
                                         std::size_t budget, std::uint64_t seed)
    : schema_(Schema({OrdinalDomain{std::move(attr), v0, v_inf, DomainKind::Continuous, 0.0, {}}},
                     {})),
      v0_(v0),
      v_inf_(v_inf),
      k_(k),
      budget_(budget),
      seed_(seed),
      v_q_(v_inf) {
    if (k_ < 1) throw std::invalid_argument("adversary: system k must be positive");
    if (budget_ < static_cast<std::size_t>(k_) + 1)
        throw std::invalid_argument("adversary: budget must exceed system k");
    tuples_.reserve(budget_ + 1);  // pointers into tuples_ must stay stable
}

std::vector<const Tuple*> AdversarialDatabase::history_in(double lo, bool lo_open, double hi,
                                                          bool hi_open) const {
    std::vector<const Tuple*> out;
    for (const auto& t : tuples_) {
        double v = t.ordinal[0];
        if (lo_open ? !(v > lo) : !(v >= lo)) continue;
        if (hi_open ? !(v < hi) : !(v <= hi)) continue;
        out.push_back(&t);
    }
    return out;
}

QueryOutcome AdversarialDatabase::answer_concrete(double lo, bool lo_open, double hi,
                                                  bool hi_open) {
    auto in_range = history_in(lo, lo_open, hi, hi_open);
    QueryOutcome out;
    if (in_range.empty()) {
        out.status = Status::Underflow;
        return out;
    }
    // Concrete mode ranks by descending value: the best tuple surfaces last.
    auto better = [](const Tuple* a, const Tuple* b) {
        if (a->ordinal[0] != b->ordinal[0]) return a->ordinal[0] > b->ordinal[0];
        return a->id < b->id;
    };
    std::sort(in_range.begin(), in_range.end(), better);
    if (in_range.size() <= static_cast<std::size_t>(k_)) {
        out.status = Status::Valid;
    } else {
        out.status = Status::Overflow;
        in_range.resize(static_cast<std::size_t>(k_));
    }
    for (const Tuple* t : in_range) out.tuples.push_back(*t);
    return out;
}

QueryOutcome AdversarialDatabase::top_k(const SearchQuery& q) {
    if (!q.equalities.empty())
        throw std::invalid_argument("adversary: equality predicates unsupported");
    double lo = v0_, hi = v_inf_;
    bool lo_open = true, hi_open = true;
    for (const auto& r : q.ranges) {
        if (r.attr != schema_.ordinal(0).name)
            throw std::invalid_argument("adversary: single-attribute queries only");
        lo = std::max(lo, r.lower);
        hi = std::min(hi, r.upper);
        if (r.lower > v0_) lo_open = r.lower_open;
        if (r.upper < v_inf_) hi_open = r.upper_open;
    }
    if (q.ranges.size() > 1) throw std::invalid_argument("adversary: one range predicate only");

    QueryOutcome out;
    bool anchored = lo <= v0_;  // lower bound sits at the domain floor
    if (finalized_) {
        out = answer_concrete(lo, lo_open, hi, hi_open);
    } else if (!anchored) {
        // Bounded-below probe: only already-disclosed tuples exist there.
        v_q_ = std::min(v_q_, lo);
        out = answer_concrete(lo, lo_open, hi, hi_open);
    } else {
        auto known = history_in(lo, lo_open, hi, hi_open);
        std::size_t need =
            known.size() >= static_cast<std::size_t>(k_) ? 0 : static_cast<std::size_t>(k_) - known.size();
        if (tuples_.size() + need > budget_ - 1) {
            // Budget spent: disclose the hidden best tuple and come clean.
            Tuple hidden;
            hidden.id = next_id_++;
            hidden.ordinal = {(v0_ + v_q_) / 2.0};
            tuples_.push_back(std::move(hidden));
            finalized_ = true;
            out = answer_concrete(lo, lo_open, hi, hi_open);
        } else {
            double w = std::min(v_q_, hi);
            double fill_lo = (v0_ + w) / 2.0;
            std::vector<const Tuple*> freshly;
            for (std::size_t i = 0; i < need; ++i) {
                double frac = (static_cast<double>(i) + 1.0) / (static_cast<double>(need) + 1.0);
                // deterministic jitter keeps fills distinct across rounds
                std::uint64_t h = seed_ ^ (0x9e3779b97f4a7c15ull * (tuples_.size() + 1));
                h ^= h >> 33;
                double jitter = (static_cast<double>(h % 1000) / 1000.0 - 0.5) * 0.4 /
                                (static_cast<double>(need) + 1.0);
                Tuple t;
                t.id = next_id_++;
                t.ordinal = {fill_lo + (w - fill_lo) * std::clamp(frac + jitter, 0.05, 0.95)};
                tuples_.push_back(std::move(t));
                freshly.push_back(&tuples_[tuples_.size() - 1]);
            }
            v_q_ = fill_lo;
            out.status = Status::Overflow;
            // history first (largest values preferred), then the fresh fills
            auto better = [](const Tuple* a, const Tuple* b) {
                if (a->ordinal[0] != b->ordinal[0]) return a->ordinal[0] > b->ordinal[0];
                return a->id < b->id;
            };
            std::sort(known.begin(), known.end(), better);
            if (known.size() > static_cast<std::size_t>(k_))
                known.resize(static_cast<std::size_t>(k_));
            for (const Tuple* t : known) out.tuples.push_back(*t);
            for (const Tuple* t : freshly) out.tuples.push_back(*t);
        }
    }

    QueryRecord rec;
    rec.algo = "adversary";
    rec.phase = Phase::Search;
    rec.query = q;
    rec.status = out.status;
    for (const auto& t : out.tuples) rec.returned.push_back(t.id);
    calls_.push_back(std::move(rec));
    return out;
}

std::vector<Tuple> AdversarialDatabase::materialize(bool include_hidden) const {
    std::vector<Tuple> db = tuples_;
    if (include_hidden && !finalized_) {
        Tuple hidden;
        hidden.id = next_id_;
        hidden.ordinal = {(v0_ + v_q_) / 2.0};
        db.push_back(std::move(hidden));
    }
    return db;
}

void HistoryStore::insert(const Tuple& t) {
    auto [it, fresh] = seen_.emplace(t.id, t);
    if (!fresh) return;
    for (std::size_t i = 0; i < schema_->ordinal_count(); ++i) {
        auto& ids = by_attr_[schema_->ordinal(i).name][t.ordinal[i]];
        ids.insert(std::lower_bound(ids.begin(), ids.end(), t.id), t.id);
    }
}

const Tuple* HistoryStore::find(TupleId id) const {
    auto it = seen_.find(id);
    return it == seen_.end() ? nullptr : &it->second;
}

std::optional<Tuple> HistoryStore::min_above(const SearchQuery& q, const std::string& attr,
                                             double bound) const {
    return best_beyond(q, attr, bound, false);
}

std::optional<Tuple> HistoryStore::best_beyond(const SearchQuery& q, const std::string& attr,
                                               double oriented_bound, bool descending) const {
    auto view_it = by_attr_.find(attr);
    if (view_it == by_attr_.end()) return std::nullopt;
    const auto& view = view_it->second;

    auto scan_ids = [&](const std::vector<TupleId>& ids) -> std::optional<Tuple> {
        for (TupleId id : ids) {
            const Tuple& t = seen_.at(id);
            if (matches(*schema_, q, t)) return t;
        }
        return std::nullopt;
    };

    if (!descending) {
        for (auto it = view.upper_bound(oriented_bound); it != view.end(); ++it)
            if (auto r = scan_ids(it->second)) return r;
    } else {
        double raw_bound = -oriented_bound;
        auto it = view.lower_bound(raw_bound);
        while (it != view.begin()) {
            --it;
            if (auto r = scan_ids(it->second)) return r;
        }
    }
    return std::nullopt;
}

std::optional<RankedTuple> HistoryStore::min_score(const SearchQuery& q, const RankingFunction& f,
                                                   const SearchQuery* region) const {
    std::optional<RankedTuple> best;
    for (const auto& [id, t] : seen_) {
        if (!matches(*schema_, q, t)) continue;
        if (region && !matches(*schema_, *region, t)) continue;
        RankedTuple rt{t, f.score(*schema_, t)};
        if (!best || ranked_less(rt, *best)) best = std::move(rt);
    }
    return best;
}

QueryOutcome AccessChannel::execute(const SearchQuery& q) {
    q.validate(db_->schema());
    QueryOutcome out = db_->top_k(q);
    db_->ledger().record(ctx_.algo, ctx_.query_id, ctx_.phase, &q, &out);
    for (const auto& t : out.tuples) hist_->insert(t);
    return out;
}

QueryOutcome execute(TopKInterface& db, const SearchQuery& q, HistoryStore& hist,
                     const AccessContext& ctx) {
    AccessChannel ch(db, hist, ctx);
    return ch.execute(q);
}

}  // namespace rerank
