// SPDX-License-Identifier: Apache-2.0
//
// Multi-attribute reranking through the top-k interface: the cover-query
// baseline, the domination-probe/virtual-split variant, the dense-box
// indexed variant, and the threshold-algorithm baseline running over
// per-attribute Get-Next streams.
#pragma once

#include <iosfwd>
#include <unordered_set>

#include "rerank/contour.hpp"
#include "rerank/rerank1d.hpp"

namespace rerank {

enum class StrategyMD { Baseline, Binary, Rerank, TA };

struct CostSnapshot {
    long long search = 0;
    long long index_build = 0;
};

struct TopKResult {
    std::vector<RankedTuple> tuples;
    bool short_of_h = false;          // fewer matches than requested
    std::vector<CostSnapshot> per_rank;  // ledger totals after each emission
    int top1_launches = 0;
};

struct MdOptions {
    // Assume: distinct attribute values (no follow-up queries). Safe: each
    // emitted tuple is re-queried fully specified so co-located tuples are
    // enumerated and returned in id order.
    TieHandling ties = TieHandling::Assume;
    // Override the seed/split attribute (index into the ranking function's
    // attribute list); -1 picks the attribute with the widest unconstrained
    // domain fraction.
    int split_attr = -1;
};

// Multi-attribute dense-region index: boxes whose contents were crawled in
// score order with generic (selection-free) queries. An exhausted box serves
// any later query it contains; a partially crawled box is reusable only for
// the ranking function that ordered its crawl.
class DenseIndexMD {
  public:
    struct Region {
        std::vector<RangePredicate> bounds;  // raw per-attribute bounds
        std::string f_sig;                   // empty = not frontier-reusable
        double frontier = kNegInf;           // scores below this are complete
        bool exhausted = false;
        std::vector<RankedTuple> discovered;  // emission (score, id) order
    };

    Region* find_containing(const Schema& schema, const std::vector<RangePredicate>& request,
                            const std::string& f_sig);
    Region& insert(Region r) {
        regions_.push_back(std::move(r));
        return regions_.back();
    }
    const std::vector<Region>& regions() const { return regions_; }
    std::size_t tuple_count() const;

    void save(std::ostream& os) const;
    void load(std::istream& is, const DenseIndex1D::TupleResolver& resolve,
              const Schema& schema);

  private:
    std::vector<Region> regions_;
};

struct MdIndexes {
    DenseIndex1D one_d;
    DenseIndexMD md;
    DenseIndexParams params;
};

std::optional<RankedTuple> md_top1_baseline(AccessChannel& ch, const SearchQuery& q,
                                            const RankingFunction& f, const MdOptions& opts = {});
std::optional<RankedTuple> md_top1_binary(AccessChannel& ch, const SearchQuery& q,
                                          const RankingFunction& f, const MdOptions& opts = {});
std::optional<RankedTuple> md_top1_rerank(AccessChannel& ch, MdIndexes& idx, const SearchQuery& q,
                                          const RankingFunction& f, const MdOptions& opts = {});

// Incremental top-h: repeated top-1 discovery over a shrinking subspace
// partition; after each rank only the subspace that produced it is split
// again, all other candidates are cached. Strategy TA delegates to
// ta_over_1d. Returns fewer than h tuples (flagged) when the query matches
// fewer.
TopKResult md_topk(AccessChannel& ch, const SearchQuery& q, const RankingFunction& f,
                   StrategyMD strategy, int h, MdIndexes* idx = nullptr,
                   const MdOptions& opts = {});

struct TaOptions {
    TieHandling ties = TieHandling::Assume;
    // Pull sorted access straight from the backend's per-attribute ORDER BY
    // instead of Get-Next (supported by SimulatedDatabase only).
    bool use_system_order_by = false;
};

// Threshold algorithm over per-attribute sorted access, each stream served
// by an indexed Get-Next session in the attribute's preference direction.
TopKResult ta_over_1d(AccessChannel& ch, MdIndexes& idx, const SearchQuery& q,
                      const RankingFunction& f, int h, const TaOptions& opts = {});

namespace mddetail {

// Box <-> query plumbing shared with the tests.
Box initial_box(const CanonicalScorer& sc, const SearchQuery& q);
SearchQuery selection_only(const CanonicalScorer& sc, const SearchQuery& q);
SearchQuery box_query(const CanonicalScorer& sc, const Box& box, const SearchQuery& sel);

// The m mutually exclusive cover queries under the incumbent's contour.
std::vector<Box> cover_cells(const CanonicalScorer& sc, const Box& box,
                             std::span<const double> incumbent, double threshold);

// Refinement of an overflowing box around an anchor tuple using the
// per-attribute outrank floors. Remainder cells whose most-preferred corner
// already scores at or above the threshold are pruned; the rest are kept.
std::vector<Box> partition_by_floors(const CanonicalScorer& sc, const Box& box,
                                     std::span<const double> anchor, double threshold);

// Exact disjoint split of a box by a contour point and the returned anchor:
// everything except the upward closures of the two points.
std::vector<Box> virtual_split(const CanonicalScorer& sc, const Box& box,
                               std::span<const double> anchor, std::span<const double> vpoint);

// Equality-prefix split isolating one exact point; the point itself is
// returned as a degenerate box when include_point is set.
std::vector<Box> point_split(const Box& box, std::span<const double> point, bool include_point);

std::string ranking_signature(const RankingFunction& f);

}  // namespace mddetail

}  // namespace rerank
