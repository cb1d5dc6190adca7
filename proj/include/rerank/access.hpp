// SPDX-License-Identifier: Apache-2.0
//
// The restricted top-k search interface, the simulated client-server
// database behind it, an adversarial single-attribute backend for
// lower-bound harnesses, the cross-query history store, and the query
// cost ledger.
#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "rerank/core.hpp"

namespace rerank {

enum class Phase { Search, IndexBuild };

struct QueryRecord {
    std::string algo;
    std::int64_t query_id = 0;
    Phase phase = Phase::Search;
    SearchQuery query;
    Status status = Status::Underflow;
    std::vector<TupleId> returned;
};

// Exact accounting of interface queries, split by (algorithm, user query,
// phase). The optional log keeps one record per call for trace tests.
class CostLedger {
  public:
    void record(const std::string& algo, std::int64_t query_id, Phase phase,
                const SearchQuery* q = nullptr, const QueryOutcome* out = nullptr);

    long long total() const { return total_.load(std::memory_order_relaxed); }
    long long total(Phase phase) const;
    long long count(const std::string& algo, std::int64_t query_id, Phase phase) const;
    long long count_algo(const std::string& algo) const;
    long long count_query(const std::string& algo, std::int64_t query_id) const;

    void enable_log(bool on) { log_enabled_ = on; }
    std::vector<QueryRecord> log_snapshot() const;
    void reset();

  private:
    using Key = std::tuple<std::string, std::int64_t, int>;
    std::atomic<long long> total_{0};
    mutable std::mutex mu_;
    std::map<Key, long long> counts_;
    std::vector<QueryRecord> log_;
    bool log_enabled_ = false;
};

// Abstract top-k search interface: conjunctive range/equality queries in,
// at most system_k matching tuples out, chosen by a hidden ordering.
class TopKInterface {
  public:
    virtual ~TopKInterface() = default;
    virtual const Schema& schema() const = 0;
    virtual int system_k() const = 0;
    virtual QueryOutcome top_k(const SearchQuery& q) = 0;
    virtual CostLedger& ledger() = 0;
};

// In-memory database serving the top-k contract under a configurable hidden
// system ranking. Read-only after construction apart from the ledger.
class SimulatedDatabase final : public TopKInterface {
  public:
    using SystemScorer = std::function<double(const Tuple&)>;

    SimulatedDatabase(Schema schema, std::vector<Tuple> tuples, RankingFunction system_ranking,
                      int k);
    SimulatedDatabase(Schema schema, std::vector<Tuple> tuples, SystemScorer scorer, int k);

    const Schema& schema() const override { return schema_; }
    int system_k() const override { return k_; }
    QueryOutcome top_k(const SearchQuery& q) override;
    CostLedger& ledger() override { return ledger_; }

    const std::vector<Tuple>& tuples() const { return tuples_; }
    std::size_t size() const { return tuples_.size(); }

    // Optional ORDER BY support: the k first matching tuples by
    // (attribute, id), ascending or descending. Used by the TA baseline
    // when the backend exposes per-attribute sorted access.
    QueryOutcome top_k_by_attr(const SearchQuery& q, const std::string& attr, bool descending);

  private:
    Schema schema_;
    std::vector<Tuple> tuples_;
    SystemScorer scorer_;
    int k_;
    CostLedger ledger_;
};

// Single-attribute backend that fabricates answers on the fly while keeping
// them mutually consistent, tracking the min-query-threshold that any
// top-ranked discovery must push below. Once its tuple budget is exhausted
// it materializes a hidden best tuple and answers concretely from then on.
class AdversarialDatabase final : public TopKInterface {
  public:
    AdversarialDatabase(std::string attr, double v0, double v_inf, int k, std::size_t budget,
                        std::uint64_t seed);

    const Schema& schema() const override { return schema_; }
    int system_k() const override { return k_; }
    QueryOutcome top_k(const SearchQuery& q) override;
    CostLedger& ledger() override { return ledger_; }

    double min_query_threshold() const { return v_q_; }
    bool finalized() const { return finalized_; }
    std::size_t fabricated_count() const { return tuples_.size(); }

    // All tuples whose existence is implied by the answers so far. When the
    // backend has not been forced concrete yet, `include_hidden` appends the
    // one undisclosed tuple sitting below every answered range.
    std::vector<Tuple> materialize(bool include_hidden = true) const;
    const std::vector<QueryRecord>& call_log() const { return calls_; }

  private:
    QueryOutcome answer_concrete(double lo, bool lo_open, double hi, bool hi_open);
    std::vector<const Tuple*> history_in(double lo, bool lo_open, double hi, bool hi_open) const;

    Schema schema_;
    double v0_, v_inf_;
    int k_;
    std::size_t budget_;
    std::uint64_t seed_;
    double v_q_;
    bool finalized_ = false;
    TupleId next_id_ = 0;
    std::vector<Tuple> tuples_;  // every fabricated tuple, in creation order
    CostLedger ledger_;
    std::vector<QueryRecord> calls_;
};

// Deduplicated record of every tuple any interface call has returned, with
// per-attribute sorted views for the 1D seeding lookups.
class HistoryStore {
  public:
    explicit HistoryStore(const Schema& schema) : schema_(&schema) {}

    void insert(const Tuple& t);
    std::size_t size() const { return seen_.size(); }
    bool contains(TupleId id) const { return seen_.count(id) > 0; }
    const Tuple* find(TupleId id) const;
    const Schema& schema() const { return *schema_; }

    // Minimum-attr matching tuple strictly above `bound` (ties by id).
    std::optional<Tuple> min_above(const SearchQuery& q, const std::string& attr,
                                   double bound) const;
    // Directional variant on the oriented axis (value negated when
    // descending); bound of -inf scans from the preferred end.
    std::optional<Tuple> best_beyond(const SearchQuery& q, const std::string& attr,
                                     double oriented_bound, bool descending) const;
    // Minimum-score matching tuple, optionally restricted to a region.
    std::optional<RankedTuple> min_score(const SearchQuery& q, const RankingFunction& f,
                                         const SearchQuery* region = nullptr) const;

    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& [id, t] : seen_) fn(t);
    }

  private:
    const Schema* schema_;
    std::unordered_map<TupleId, Tuple> seen_;
    // attr name -> (value -> sorted tuple ids)
    std::unordered_map<std::string, std::map<double, std::vector<TupleId>>> by_attr_;
};

struct AccessContext {
    std::string algo = "adhoc";
    std::int64_t query_id = 0;
    Phase phase = Phase::Search;
};

// The one sanctioned path to the interface: validates the query, forwards
// it, charges the ledger under the current context, and records every
// returned tuple in the history store. A malformed query throws before the
// ledger is touched.
class AccessChannel {
  public:
    AccessChannel(TopKInterface& db, HistoryStore& hist, AccessContext ctx = {})
        : db_(&db), hist_(&hist), ctx_(std::move(ctx)) {}

    QueryOutcome execute(const SearchQuery& q);

    TopKInterface& db() { return *db_; }
    HistoryStore& history() { return *hist_; }
    const Schema& schema() const { return db_->schema(); }
    int system_k() const { return db_->system_k(); }
    AccessContext& context() { return ctx_; }

    class ScopedPhase {
      public:
        ScopedPhase(AccessChannel& ch, Phase p) : ch_(ch), prev_(ch.ctx_.phase) {
            ch_.ctx_.phase = p;
        }
        ~ScopedPhase() { ch_.ctx_.phase = prev_; }

      private:
        AccessChannel& ch_;
        Phase prev_;
    };

  private:
    TopKInterface* db_;
    HistoryStore* hist_;
    AccessContext ctx_;
};

QueryOutcome execute(TopKInterface& db, const SearchQuery& q, HistoryStore& hist,
                     const AccessContext& ctx = {});

inline std::optional<Tuple> history_min_above(const HistoryStore& h, const SearchQuery& q,
                                              const std::string& attr, double bound) {
    return h.min_above(q, attr, bound);
}

inline std::optional<RankedTuple> history_min_score(const HistoryStore& h, const SearchQuery& q,
                                                    const RankingFunction& f,
                                                    const SearchQuery* region = nullptr) {
    return h.min_score(q, f, region);
}

}  // namespace rerank
