// SPDX-License-Identifier: Apache-2.0
//
// Score-contour geometry in canonical coordinates: axis intercepts, the
// per-attribute outrank floors, and the maximum-volume box that fits under
// an incumbent's contour. All inputs are canonical ("smaller is better" on
// every axis); boxes are finite.
#pragma once

#include <span>

#include "rerank/core.hpp"

namespace rerank {

// One bound of a canonical interval; `open` excludes the endpoint.
struct CBound {
    double value = 0.0;
    bool open = false;
};

struct CInterval {
    CBound lo;
    CBound hi;

    bool empty() const {
        if (lo.value > hi.value) return true;
        if (lo.value == hi.value) return lo.open || hi.open;
        return false;
    }
    double width() const { return hi.value - lo.value; }
    bool contains(double v) const {
        if (lo.open ? !(v > lo.value) : !(v >= lo.value)) return false;
        if (hi.open ? !(v < hi.value) : !(v <= hi.value)) return false;
        return true;
    }
};

// Axis-aligned box over the ranked attributes, canonical coordinates.
class Box {
  public:
    Box() = default;
    explicit Box(std::vector<CInterval> iv) : iv_(std::move(iv)) {}
    static Box full(const CanonicalScorer& scorer);

    std::size_t dim() const { return iv_.size(); }
    const CInterval& at(std::size_t i) const { return iv_[i]; }
    CInterval& at(std::size_t i) { return iv_[i]; }

    bool empty() const;
    bool contains(std::span<const double> p) const;
    Box clipped(std::size_t i, const CInterval& iv) const;  // intersection on one axis
    // Product of per-axis widths over full canonical domain widths.
    double volume_fraction(const CanonicalScorer& scorer) const;
    // Most-preferred corner (all lower bound values).
    std::vector<double> best_corner() const;
    std::vector<double> worst_corner() const;

  private:
    std::vector<CInterval> iv_;
};

enum class CutState { Interior, Saturated, Infeasible };

struct AxisCut {
    double value = 0.0;
    CutState state = CutState::Interior;
};

// Where the incumbent's contour meets axis `i` inside `box`: the largest
// value v such that the point (best, ..., v, ..., best) still scores at most
// t_score. Saturated when the whole extent qualifies; Infeasible when even
// the best corner scores above t_score. On grid axes the cut is exact.
AxisCut axis_intercept(const CanonicalScorer& scorer, double t_score, std::size_t i,
                       const Box& box);

struct FloorCut {
    double value = 0.0;
    bool unbounded = false;
};

// The smallest value v on axis `i` such that the anchor, with coordinate i
// lowered to v, still scores at least t_score. A tuple must beat this floor
// on some attribute (or dominate the anchor) to outrank the incumbent.
FloorCut outrank_floor(const CanonicalScorer& scorer, double t_score,
                       std::span<const double> anchor, std::size_t i);

enum class ContourFit {
    OnContour,     // point sits on the incumbent's contour (score >= t_score)
    BestCorner,    // dominated region empty: even the best corner scores >= t_score
    BoxDominated,  // the whole box scores below t_score
};

struct VirtualTuple {
    std::vector<double> point;
    double score = 0.0;
    ContourFit fit = ContourFit::OnContour;
    double volume = 0.0;  // normalized volume of [best corner, point]
};

// The contour point maximizing the normalized volume of the box spanned
// from the best corner. Probing that box covers as much of the outranking
// region as one conjunctive query can. The returned point never scores
// below t_score, so pruning its upward closure is lossless.
VirtualTuple max_volume_dominated_box(const CanonicalScorer& scorer, double t_score,
                                      const Box& box);

}  // namespace rerank
