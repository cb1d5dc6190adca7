// SPDX-License-Identifier: Apache-2.0
//
// Get-Next on a single attribute through the top-k interface: the
// iterate-and-shrink baseline, the halving search, the dense-region indexed
// variant, the on-the-fly 1D dense index itself, and tie crawling for data
// without distinct attribute values.
#pragma once

#include <functional>
#include <iosfwd>
#include <map>

#include "rerank/access.hpp"

namespace rerank {

enum class Strategy1D { Baseline, Binary, Rerank };
enum class SortDir { Asc, Desc };
// Assume: every tuple has a distinct value on the attribute (no extra
// queries). Crawl: verify each emitted value with a follow-up equality
// query and enumerate co-located tuples.
enum class TieHandling { Assume, Crawl };

// Dense-region parameters. An interval is dense when it spans less than
// width * (s/n) / c of the attribute domain yet covers at least s tuples;
// the same (s/n)/c fraction bounds dense boxes in the multi-attribute case.
struct DenseIndexParams {
    double c = 1.0;
    int s = 1;
    std::size_t n = 1;

    static DenseIndexParams defaults(std::size_t n, int k);
    double threshold_width(double domain_width) const {
        return domain_width * (static_cast<double>(s) / static_cast<double>(n)) / c;
    }
    double threshold_volume_fraction() const {
        return (static_cast<double>(s) / static_cast<double>(n)) / c;
    }
};

inline double oriented(SortDir d, double raw) { return d == SortDir::Asc ? raw : -raw; }

// Range predicate over oriented coordinates (descending sessions negate).
RangePredicate oriented_range(const std::string& attr, SortDir d, double olo, bool lo_open,
                              double ohi, bool hi_open);

// On-the-fly index of crawled intervals, one list per (attribute,
// direction). A region (x, y] knows every database tuple with oriented
// value in (x, frontier]; crawling resumes from the frontier and the region
// is exhausted once the frontier reaches y. Regions of one attribute never
// overlap; touching regions merge once the lower one is exhausted.
class DenseIndex1D {
  public:
    struct Region {
        std::string attr;
        int attr_idx = 0;
        SortDir dir = SortDir::Asc;
        double x = 0.0;
        double y = 0.0;
        double frontier = 0.0;
        bool exhausted = false;
        std::vector<Tuple> discovered;  // sorted by (oriented value, id)
    };

    // Minimum oriented-value tuple with value in (lo, hi) matching q, or
    // nothing when that range holds no match. Gaps are crawled with generic
    // interface queries charged to the index-build phase.
    std::optional<Tuple> min_matching(AccessChannel& ch, const std::string& attr, SortDir dir,
                                      double lo, double hi, const SearchQuery& q,
                                      TieHandling ties = TieHandling::Assume);

    std::vector<const Region*> regions(const std::string& attr, SortDir dir) const;
    std::size_t region_count() const;
    std::size_t tuple_count() const;

    void save(std::ostream& os) const;
    using TupleResolver = std::function<const Tuple*(TupleId)>;
    void load(std::istream& is, const Schema& schema, const TupleResolver& resolve);

  private:
    friend class GetNext1D;
    using Key = std::pair<std::string, int>;
    Region* region_covering(std::map<double, Region>& rmap, double point);
    bool crawl_step(AccessChannel& ch, Region& r, TieHandling ties);
    std::optional<Tuple> region_lookup(AccessChannel& ch, Region& r, double seg_lo, double seg_hi,
                                       bool hi_exclusive, const SearchQuery& q, TieHandling ties);
    void merge_touching(std::map<double, Region>& rmap);

    std::map<Key, std::map<double, Region>> regions_;
};

namespace detail {
// Shared Get-Next core. Returns the matching tuple with the smallest
// oriented attr value strictly above pivot_ov, or nothing when none exists.
// `observed` collects every tuple returned by the queries this call issues.
std::optional<Tuple> search_1d(AccessChannel& ch, const SearchQuery& q, const std::string& attr,
                               SortDir dir, std::optional<double> pivot_ov, Strategy1D strategy,
                               DenseIndex1D* index, const DenseIndexParams* params,
                               TieHandling ties = TieHandling::Assume,
                               std::vector<Tuple>* observed = nullptr);
}  // namespace detail

std::optional<Tuple> get_next_baseline(AccessChannel& ch, const SearchQuery& q,
                                       const std::string& attr, const std::optional<Tuple>& pivot);
std::optional<Tuple> get_next_binary(AccessChannel& ch, const SearchQuery& q,
                                     const std::string& attr, const std::optional<Tuple>& pivot);
std::optional<Tuple> get_next_reranked(AccessChannel& ch, DenseIndex1D& index,
                                       const DenseIndexParams& params, const SearchQuery& q,
                                       const std::string& attr, const std::optional<Tuple>& pivot);

// Dense-index lookup over an explicit ascending range (lo, hi); crawls on a
// miss and records everything discovered. Empty optional means the range
// holds no tuple matching q (the caller's current candidate stands).
std::optional<Tuple> oracle_lookup(AccessChannel& ch, DenseIndex1D& index, const std::string& attr,
                                   double lo, double hi, const SearchQuery& q);

// Every matching tuple whose attr equals `value`, discovered by one
// equality query plus range splits on the remaining attributes when the
// equality overflows. Ordered by id.
std::vector<Tuple> crawl_ties(AccessChannel& ch, const std::string& attr, double value,
                              const SearchQuery& q);

// Incremental top-h session on one attribute: repeated Get-Next with the
// chosen strategy, emitting tuples in (oriented value, id) order. With
// TieHandling::Crawl each new value is tie-expanded before emission.
class GetNext1D {
  public:
    GetNext1D(AccessChannel& ch, SearchQuery q, std::string attr, Strategy1D strategy,
              SortDir dir = SortDir::Asc, TieHandling ties = TieHandling::Assume,
              DenseIndex1D* index = nullptr, const DenseIndexParams* params = nullptr);

    std::optional<Tuple> next();
    std::size_t emitted() const { return emitted_; }
    bool exhausted() const { return exhausted_; }
    const std::optional<double>& pivot_oriented() const { return pivot_ov_; }

  private:
    AccessChannel* ch_;
    SearchQuery q_;
    std::string attr_;
    Strategy1D strategy_;
    SortDir dir_;
    TieHandling ties_;
    DenseIndex1D* index_;
    const DenseIndexParams* params_;
    std::optional<double> pivot_ov_;
    std::vector<Tuple> pending_;  // tie batch, ascending id, front = next
    std::size_t pending_pos_ = 0;
    std::size_t emitted_ = 0;
    bool exhausted_ = false;
};

}  // namespace rerank
