// SPDX-License-Identifier: Apache-2.0
#include "rerank/core.hpp"

#include <algorithm>
#include <random>
#include <unordered_set>

namespace rerank {

std::int64_t OrdinalDomain::grid_count() const {
    if (!is_grid()) return 0;
    return static_cast<std::int64_t>(std::llround((hi - lo) / step)) + 1;
}

double OrdinalDomain::snap_down(double v) const {
    if (!is_grid()) return v;
    if (v >= hi) return hi;
    if (v < lo) return lo - step;  // below the whole domain
    double idx = std::floor((v - lo) / step + 1e-9);
    return lo + idx * step;
}

double OrdinalDomain::snap_up(double v) const {
    if (!is_grid()) return v;
    if (v <= lo) return lo;
    if (v > hi) return hi + step;  // above the whole domain
    double idx = std::ceil((v - lo) / step - 1e-9);
    return lo + idx * step;
}

Schema::Schema(std::vector<OrdinalDomain> ordinals, std::vector<CategoricalDomain> categoricals)
    : ordinals_(std::move(ordinals)), categoricals_(std::move(categoricals)) {
    std::unordered_set<std::string> names;
    for (const auto& d : ordinals_) {
        if (!names.insert(d.name).second)
            throw std::invalid_argument("schema: duplicate attribute name: " + d.name);
        if (!(d.lo < d.hi))
            throw std::invalid_argument("schema: domain lower bound must be below upper: " + d.name);
        if (d.kind == DomainKind::Grid) {
            if (!(d.step > 0))
                throw std::invalid_argument("schema: grid step must be positive: " + d.name);
            double count = (d.hi - d.lo) / d.step;
            if (std::fabs(count - std::llround(count)) > 1e-6)
                throw std::invalid_argument("schema: grid step must divide the domain width: " + d.name);
        }
    }
    for (const auto& c : categoricals_) {
        if (!names.insert(c.name).second)
            throw std::invalid_argument("schema: duplicate attribute name: " + c.name);
    }
}

int Schema::ordinal_index(std::string_view name) const {
    for (std::size_t i = 0; i < ordinals_.size(); ++i)
        if (ordinals_[i].name == name) return static_cast<int>(i);
    return -1;
}

int Schema::categorical_index(std::string_view name) const {
    for (std::size_t i = 0; i < categoricals_.size(); ++i)
        if (categoricals_[i].name == name) return static_cast<int>(i);
    return -1;
}

const OrdinalDomain& Schema::ordinal(std::string_view name) const {
    int i = ordinal_index(name);
    if (i < 0) throw std::invalid_argument("schema: unknown ordinal attribute: " + std::string(name));
    return ordinals_[static_cast<std::size_t>(i)];
}

RangePredicate RangePredicate::open(std::string attr, double lo, double hi) {
    return RangePredicate{std::move(attr), lo, hi, true, true};
}

RangePredicate RangePredicate::closed(std::string attr, double lo, double hi) {
    return RangePredicate{std::move(attr), lo, hi, false, false};
}

RangePredicate RangePredicate::at_most(std::string attr, double hi, bool open_hi) {
    return RangePredicate{std::move(attr), kNegInf, hi, true, open_hi};
}

RangePredicate RangePredicate::at_least(std::string attr, double lo, bool open_lo) {
    return RangePredicate{std::move(attr), lo, kPosInf, open_lo, true};
}

RangePredicate RangePredicate::equals(std::string attr, double v) {
    return RangePredicate{std::move(attr), v, v, false, false};
}

RangePredicate RangePredicate::empty(std::string attr) {
    return RangePredicate{std::move(attr), kPosInf, kNegInf, false, false};
}

bool RangePredicate::contains(double v) const {
    if (lower_open ? !(v > lower) : !(v >= lower)) return false;
    if (upper_open ? !(v < upper) : !(v <= upper)) return false;
    return true;
}

void SearchQuery::validate(const Schema& schema) const {
    std::unordered_set<std::string> seen;
    for (const auto& r : ranges) {
        if (schema.ordinal_index(r.attr) < 0)
            throw std::invalid_argument("query: unknown ordinal attribute: " + r.attr);
        if (!seen.insert(r.attr).second)
            throw std::invalid_argument("query: more than one range on attribute: " + r.attr);
        if (r.lower == r.upper && (r.lower_open || r.upper_open) && !r.is_canonical_empty())
            throw std::invalid_argument("query: degenerate range must use closed bounds: " + r.attr);
    }
    std::unordered_set<std::string> seen_eq;
    for (const auto& e : equalities) {
        if (schema.categorical_index(e.attr) < 0)
            throw std::invalid_argument("query: unknown categorical attribute: " + e.attr);
        if (!seen_eq.insert(e.attr).second)
            throw std::invalid_argument("query: more than one equality on attribute: " + e.attr);
    }
}

const RangePredicate* SearchQuery::range_for(std::string_view attr) const {
    for (const auto& r : ranges)
        if (r.attr == attr) return &r;
    return nullptr;
}

SearchQuery SearchQuery::with_range(const RangePredicate& r) const {
    SearchQuery out = without_range(r.attr);
    out.ranges.push_back(r);
    return out;
}

SearchQuery SearchQuery::without_range(std::string_view attr) const {
    SearchQuery out;
    out.equalities = equalities;
    for (const auto& r : ranges)
        if (r.attr != attr) out.ranges.push_back(r);
    return out;
}

RankingFunction RankingFunction::linear(std::vector<LinearTerm> terms) {
    RankingFunction f;
    f.linear_ = true;
    for (auto& t : terms) {
        f.attrs_.push_back(std::move(t.attr));
        f.weights_.push_back(t.weight);
        f.prefs_.push_back(t.weight < 0 ? Preference::LargerBetter : Preference::SmallerBetter);
    }
    return f;
}

RankingFunction RankingFunction::general(std::vector<std::string> ranked_attrs,
                                         std::vector<Preference> prefs, ScoreFn fn) {
    if (ranked_attrs.size() != prefs.size())
        throw std::invalid_argument("ranking: one preference order per ranked attribute required");
    if (!fn) throw std::invalid_argument("ranking: missing score callback");
    RankingFunction f;
    f.linear_ = false;
    f.attrs_ = std::move(ranked_attrs);
    f.prefs_ = std::move(prefs);
    f.fn_ = std::move(fn);
    return f;
}

double RankingFunction::score(const Schema& schema, const Tuple& t) const {
    std::vector<double> vals(attrs_.size());
    for (std::size_t i = 0; i < attrs_.size(); ++i) {
        int idx = schema.ordinal_index(attrs_[i]);
        if (idx < 0 || static_cast<std::size_t>(idx) >= t.ordinal.size())
            throw std::invalid_argument("ranking: tuple lacks ranked attribute: " + attrs_[i]);
        vals[i] = t.ordinal[static_cast<std::size_t>(idx)];
    }
    return score_values(vals);
}

double RankingFunction::score_values(std::span<const double> ranked_values) const {
    if (ranked_values.size() != attrs_.size())
        throw std::invalid_argument("ranking: wrong number of attribute values");
    if (linear_) {
        double s = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * ranked_values[i];
        return s;
    }
    return fn_(ranked_values);
}

double score(const RankingFunction& f, const Schema& schema, const Tuple& t) {
    return f.score(schema, t);
}

bool matches(const Schema& schema, const SearchQuery& q, const Tuple& t) {
    for (const auto& r : q.ranges) {
        int idx = schema.ordinal_index(r.attr);
        if (idx < 0) return false;
        if (!r.contains(t.ordinal[static_cast<std::size_t>(idx)])) return false;
    }
    for (const auto& e : q.equalities) {
        int idx = schema.categorical_index(e.attr);
        if (idx < 0) return false;
        if (t.categorical[static_cast<std::size_t>(idx)] != e.value) return false;
    }
    return true;
}

RangePredicate close_open_range(const RangePredicate& p, const Schema& schema,
                                double rel_epsilon) {
    const OrdinalDomain& dom = schema.ordinal(p.attr);
    RangePredicate out = p;
    if (out.is_canonical_empty()) return RangePredicate::empty(p.attr);
    if (dom.is_grid()) {
        if (out.lower_open) {
            // smallest grid value strictly above the open bound
            out.lower = out.lower < dom.lo ? dom.lo : dom.snap_down(out.lower) + dom.step;
            out.lower_open = false;
        }
        if (out.upper_open) {
            // largest grid value strictly below the open bound
            out.upper = out.upper > dom.hi ? dom.hi : dom.snap_up(out.upper) - dom.step;
            out.upper_open = false;
        }
    } else {
        double eps = rel_epsilon * dom.width();
        if (out.lower_open) {
            out.lower = out.lower == kNegInf ? kNegInf : out.lower + eps;
            out.lower_open = false;
        }
        if (out.upper_open) {
            out.upper = out.upper == kPosInf ? kPosInf : out.upper - eps;
            out.upper_open = false;
        }
    }
    if (out.lower > out.upper) return RangePredicate::empty(p.attr);
    return out;
}

RangePredicate intersect_range(RangePredicate a, const RangePredicate& b) {
    if (b.lower > a.lower || (b.lower == a.lower && b.lower_open)) {
        a.lower = b.lower;
        a.lower_open = b.lower_open;
    }
    if (b.upper < a.upper || (b.upper == a.upper && b.upper_open)) {
        a.upper = b.upper;
        a.upper_open = b.upper_open;
    }
    return a;
}

MonotoneCheckResult check_monotone(const RankingFunction& f, const Schema& schema,
                                   std::size_t samples, std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("check_monotone: samples must be >= 1");
    const std::size_t m = f.dim();
    std::vector<const OrdinalDomain*> doms(m);
    for (std::size_t i = 0; i < m; ++i) doms[i] = &schema.ordinal(f.ranked_attrs()[i]);

    std::mt19937_64 rng(seed);
    std::vector<double> better(m), worse(m);
    for (std::size_t s = 0; s < samples; ++s) {
        bool degenerate = true;
        for (std::size_t i = 0; i < m; ++i) {
            std::uniform_real_distribution<double> dist(doms[i]->lo, doms[i]->hi);
            double a = dist(rng), b = dist(rng);
            if (doms[i]->is_grid()) {
                a = doms[i]->snap_down(a);
                b = doms[i]->snap_down(b);
            }
            // order the pair so `better` is preferred on every attribute
            bool a_pref = f.preference(i) == Preference::SmallerBetter ? a <= b : a >= b;
            better[i] = a_pref ? a : b;
            worse[i] = a_pref ? b : a;
            if (better[i] != worse[i]) degenerate = false;
        }
        if (degenerate) continue;
        if (f.score_values(worse) < f.score_values(better)) {
            return MonotoneCheckResult{false, better, worse};
        }
    }
    return MonotoneCheckResult{};
}

CanonicalScorer::CanonicalScorer(const Schema& schema, const RankingFunction& f)
    : schema_(&schema), f_(&f) {
    const std::size_t m = f.dim();
    schema_idx_.resize(m);
    negate_.resize(m);
    lo_.resize(m);
    hi_.resize(m);
    step_.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        int idx = schema.ordinal_index(f.ranked_attrs()[i]);
        if (idx < 0)
            throw std::invalid_argument("ranking: unknown ranked attribute: " + f.ranked_attrs()[i]);
        schema_idx_[i] = idx;
        const OrdinalDomain& d = schema.ordinal(static_cast<std::size_t>(idx));
        negate_[i] = f.preference(i) == Preference::LargerBetter;
        lo_[i] = negate_[i] ? -d.hi : d.lo;
        hi_[i] = negate_[i] ? -d.lo : d.hi;
        step_[i] = d.is_grid() ? d.step : 0.0;
    }
}

double CanonicalScorer::score_canonical(std::span<const double> canon) const {
    std::vector<double> raw(canon.size());
    for (std::size_t i = 0; i < canon.size(); ++i) raw[i] = from_canonical(i, canon[i]);
    return f_->score_values(raw);
}

double CanonicalScorer::score_tuple(const Tuple& t) const {
    std::vector<double> raw(dim());
    for (std::size_t i = 0; i < dim(); ++i)
        raw[i] = t.ordinal[static_cast<std::size_t>(schema_idx_[i])];
    return f_->score_values(raw);
}

std::vector<double> CanonicalScorer::canonical_point(const Tuple& t) const {
    std::vector<double> c(dim());
    for (std::size_t i = 0; i < dim(); ++i)
        c[i] = to_canonical(i, t.ordinal[static_cast<std::size_t>(schema_idx_[i])]);
    return c;
}

}  // namespace rerank
