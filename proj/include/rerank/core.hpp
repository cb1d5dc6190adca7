// SPDX-License-Identifier: Apache-2.0
//
// Domain model: schemas, tuples, conjunctive range/equality predicates,
// top-k query outcomes, and monotone ranking functions with the canonical
// "smaller is better" view used by the contour solvers.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rerank {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

using TupleId = std::int64_t;

enum class DomainKind { Continuous, Grid };

struct OrdinalDomain {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    DomainKind kind = DomainKind::Continuous;
    double step = 0.0;  // > 0 for grid domains, divides (hi - lo)
    // Value substituted for NULLs at ingestion. Defaults to the domain
    // maximum (worst rank for ascending preferences) when unset.
    std::optional<double> null_substitute;

    double width() const { return hi - lo; }
    double null_value() const { return null_substitute.value_or(hi); }
    bool is_grid() const { return kind == DomainKind::Grid; }
    // Number of grid values in [lo, hi]; 0 for continuous domains.
    std::int64_t grid_count() const;
    double snap_down(double v) const;  // largest grid value <= v
    double snap_up(double v) const;    // smallest grid value >= v
};

struct CategoricalDomain {
    std::string name;
    std::vector<std::string> values;
};

class Schema {
  public:
    Schema() = default;
    Schema(std::vector<OrdinalDomain> ordinals, std::vector<CategoricalDomain> categoricals);

    int ordinal_index(std::string_view name) const;      // -1 when absent
    int categorical_index(std::string_view name) const;  // -1 when absent
    const OrdinalDomain& ordinal(std::size_t i) const { return ordinals_.at(i); }
    const OrdinalDomain& ordinal(std::string_view name) const;
    const CategoricalDomain& categorical(std::size_t i) const { return categoricals_.at(i); }
    std::size_t ordinal_count() const { return ordinals_.size(); }
    std::size_t categorical_count() const { return categoricals_.size(); }
    const std::vector<OrdinalDomain>& ordinals() const { return ordinals_; }
    const std::vector<CategoricalDomain>& categoricals() const { return categoricals_; }

  private:
    std::vector<OrdinalDomain> ordinals_;
    std::vector<CategoricalDomain> categoricals_;
};

struct Tuple {
    TupleId id = -1;
    std::vector<double> ordinal;        // one value per schema ordinal attribute
    std::vector<std::string> categorical;  // one value per schema categorical attribute
};

// Range predicate over one ordinal attribute. Open bounds exclude the
// endpoint. The canonical empty predicate has lower > upper.
struct RangePredicate {
    std::string attr;
    double lower = kNegInf;
    double upper = kPosInf;
    bool lower_open = true;
    bool upper_open = true;

    static RangePredicate open(std::string attr, double lo, double hi);
    static RangePredicate closed(std::string attr, double lo, double hi);
    static RangePredicate at_most(std::string attr, double hi, bool open_hi);
    static RangePredicate at_least(std::string attr, double lo, bool open_lo);
    static RangePredicate equals(std::string attr, double v);
    static RangePredicate empty(std::string attr);

    bool is_canonical_empty() const { return lower > upper; }
    bool contains(double v) const;
    bool is_unbounded() const {
        return lower == kNegInf && upper == kPosInf;
    }
};

struct EqualityPredicate {
    std::string attr;
    std::string value;
};

// Conjunctive search query: at most one range per ordinal attribute plus
// equality predicates on categorical attributes.
struct SearchQuery {
    std::vector<RangePredicate> ranges;
    std::vector<EqualityPredicate> equalities;

    void validate(const Schema& schema) const;  // throws std::invalid_argument
    const RangePredicate* range_for(std::string_view attr) const;
    // Returns a copy with the range on `attr` replaced (or added).
    SearchQuery with_range(const RangePredicate& r) const;
    // Returns a copy without any range on `attr`.
    SearchQuery without_range(std::string_view attr) const;
};

enum class Status { Overflow, Valid, Underflow };

struct QueryOutcome {
    Status status = Status::Underflow;
    std::vector<Tuple> tuples;
};

inline const char* to_string(Status s) {
    switch (s) {
        case Status::Overflow: return "overflow";
        case Status::Valid: return "valid";
        default: return "underflow";
    }
}

// Per-attribute preference order: which end of the domain ranks higher.
enum class Preference { SmallerBetter, LargerBetter };

// Monotone user ranking function. Smaller score = higher rank. Linear
// functions carry orientation in the weight sign (negative weight prefers
// larger values); general functions state it explicitly.
class RankingFunction {
  public:
    struct LinearTerm {
        std::string attr;
        double weight = 0.0;
    };
    using ScoreFn = std::function<double(std::span<const double>)>;

    RankingFunction() = default;
    static RankingFunction linear(std::vector<LinearTerm> terms);
    static RankingFunction general(std::vector<std::string> ranked_attrs,
                                   std::vector<Preference> prefs, ScoreFn fn);

    double score(const Schema& schema, const Tuple& t) const;
    // Score from raw attribute values listed in ranked_attrs() order.
    double score_values(std::span<const double> ranked_values) const;

    const std::vector<std::string>& ranked_attrs() const { return attrs_; }
    std::size_t dim() const { return attrs_.size(); }
    Preference preference(std::size_t i) const { return prefs_.at(i); }
    bool is_linear() const { return linear_; }
    // Signed weight for linear functions (ranked order).
    double signed_weight(std::size_t i) const { return weights_.at(i); }

  private:
    bool linear_ = true;
    std::vector<std::string> attrs_;
    std::vector<Preference> prefs_;
    std::vector<double> weights_;  // signed; linear only
    ScoreFn fn_;                   // general only
};

struct RankedTuple {
    Tuple tuple;
    double score = 0.0;
};

// Total order on scored tuples: score ascending, ties by id ascending.
inline bool ranked_less(const RankedTuple& a, const RankedTuple& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.tuple.id < b.tuple.id;
}

double score(const RankingFunction& f, const Schema& schema, const Tuple& t);

bool matches(const Schema& schema, const SearchQuery& q, const Tuple& t);

// Closed-range equivalent of a predicate for interfaces that only accept
// closed bounds. Grid domains snap to the nearest in-domain value; continuous
// domains shrink open ends by rel_epsilon * domain width.
RangePredicate close_open_range(const RangePredicate& p, const Schema& schema,
                                double rel_epsilon = 1e-9);

// Intersection of two range predicates over the same attribute.
RangePredicate intersect_range(RangePredicate a, const RangePredicate& b);

struct MonotoneCheckResult {
    bool ok = true;
    // First violating pair when !ok: `better` dominates `worse` on every
    // ranked attribute yet scores strictly higher.
    std::vector<double> better;
    std::vector<double> worse;
};

MonotoneCheckResult check_monotone(const RankingFunction& f, const Schema& schema,
                                   std::size_t samples, std::uint64_t seed);

// Canonical view of a ranking function: every ranked attribute is mapped so
// that smaller canonical values are preferred (larger-preferred attributes
// are negated). Contour solvers and the multi-attribute algorithms work in
// this space exclusively.
class CanonicalScorer {
  public:
    CanonicalScorer(const Schema& schema, const RankingFunction& f);

    std::size_t dim() const { return f_->dim(); }
    const RankingFunction& function() const { return *f_; }
    const Schema& schema() const { return *schema_; }
    const std::string& attr_name(std::size_t i) const { return f_->ranked_attrs()[i]; }
    int schema_index(std::size_t i) const { return schema_idx_[i]; }

    bool is_linear() const { return f_->is_linear(); }
    // Non-negative canonical weight (linear only).
    double weight(std::size_t i) const { return std::fabs(f_->signed_weight(i)); }

    double canon_lo(std::size_t i) const { return lo_[i]; }
    double canon_hi(std::size_t i) const { return hi_[i]; }
    double width(std::size_t i) const { return hi_[i] - lo_[i]; }
    double grid_step(std::size_t i) const { return step_[i]; }  // 0 when continuous

    double to_canonical(std::size_t i, double raw) const {
        return negate_[i] ? -raw : raw;
    }
    double from_canonical(std::size_t i, double canon) const {
        return negate_[i] ? -canon : canon;
    }
    bool negated(std::size_t i) const { return negate_[i]; }

    double score_canonical(std::span<const double> canon) const;
    double score_tuple(const Tuple& t) const;
    std::vector<double> canonical_point(const Tuple& t) const;

  private:
    const Schema* schema_;
    const RankingFunction* f_;
    std::vector<int> schema_idx_;
    std::vector<bool> negate_;
    std::vector<double> lo_, hi_, step_;
};

}  // namespace rerank
