// SPDX-License-Identifier: Apache-2.0
#include "rerank/contour.hpp"

#include <algorithm>
#include <cmath>

namespace rerank {

namespace {

constexpr int kBisectIters = 100;

double score_tol(double t_score) { return 1e-6 * std::max(1.0, std::fabs(t_score)); }

// Grid helpers anchored at the canonical domain origin.
double grid_down(const CanonicalScorer& sc, std::size_t i, double v) {
    double step = sc.grid_step(i);
    return sc.canon_lo(i) + std::floor((v - sc.canon_lo(i)) / step + 1e-9) * step;
}

double grid_up(const CanonicalScorer& sc, std::size_t i, double v) {
    double step = sc.grid_step(i);
    return sc.canon_lo(i) + std::ceil((v - sc.canon_lo(i)) / step - 1e-9) * step;
}

}  // namespace

Box Box::full(const CanonicalScorer& scorer) {
    std::vector<CInterval> iv(scorer.dim());
    for (std::size_t i = 0; i < scorer.dim(); ++i)
        iv[i] = CInterval{{scorer.canon_lo(i), false}, {scorer.canon_hi(i), false}};
    return Box(std::move(iv));
}

bool Box::empty() const {
    for (const auto& iv : iv_)
        if (iv.empty()) return true;
    return iv_.empty();
}

bool Box::contains(std::span<const double> p) const {
    for (std::size_t i = 0; i < iv_.size(); ++i)
        if (!iv_[i].contains(p[i])) return false;
    return true;
}

Box Box::clipped(std::size_t i, const CInterval& iv) const {
    Box out = *this;
    CInterval& t = out.iv_[i];
    if (iv.lo.value > t.lo.value || (iv.lo.value == t.lo.value && iv.lo.open)) t.lo = iv.lo;
    if (iv.hi.value < t.hi.value || (iv.hi.value == t.hi.value && iv.hi.open)) t.hi = iv.hi;
    return out;
}

double Box::volume_fraction(const CanonicalScorer& scorer) const {
    double v = 1.0;
    for (std::size_t i = 0; i < iv_.size(); ++i) {
        double w = std::max(0.0, iv_[i].width());
        v *= w / scorer.width(i);
    }
    return v;
}

std::vector<double> Box::best_corner() const {
    std::vector<double> p(iv_.size());
    for (std::size_t i = 0; i < iv_.size(); ++i) p[i] = iv_[i].lo.value;
    return p;
}

std::vector<double> Box::worst_corner() const {
    std::vector<double> p(iv_.size());
    for (std::size_t i = 0; i < iv_.size(); ++i) p[i] = iv_[i].hi.value;
    return p;
}

AxisCut axis_intercept(const CanonicalScorer& scorer, double t_score, std::size_t i,
                       const Box& box) {
    std::vector<double> p = box.best_corner();
    const double lo = box.at(i).lo.value;
    const double hi = box.at(i).hi.value;

    if (scorer.score_canonical(p) > t_score) return AxisCut{lo, CutState::Infeasible};
    p[i] = hi;
    if (scorer.score_canonical(p) <= t_score) return AxisCut{hi, CutState::Saturated};

    double cut;
    if (scorer.is_linear()) {
        p[i] = lo;
        double base = scorer.score_canonical(p);
        double w = scorer.weight(i);
        cut = lo + (t_score - base) / w;  // w > 0: otherwise saturated above
    } else {
        double a = lo, b = hi;  // S(a) <= t_score < S(b)
        for (int it = 0; it < kBisectIters; ++it) {
            double mid = 0.5 * (a + b);
            p[i] = mid;
            (scorer.score_canonical(p) <= t_score ? a : b) = mid;
        }
        cut = b;  // outward: never excludes a qualifying value
    }

    if (scorer.grid_step(i) > 0) {
        double g = std::clamp(grid_down(scorer, i, cut), lo, hi);
        double step = scorer.grid_step(i);
        auto ok = [&](double v) {
            p[i] = v;
            return scorer.score_canonical(p) <= t_score;
        };
        while (g + step <= hi && ok(g + step)) g += step;
        while (g > lo && !ok(g)) g -= step;
        cut = g;
    } else {
        cut = std::clamp(cut, lo, hi);
    }
    return AxisCut{cut, CutState::Interior};
}

FloorCut outrank_floor(const CanonicalScorer& scorer, double t_score,
                       std::span<const double> anchor, std::size_t i) {
    std::vector<double> p(anchor.begin(), anchor.end());
    const double lo = scorer.canon_lo(i);
    const double hi = scorer.canon_hi(i);

    auto holds = [&](double v) {
        p[i] = v;
        return scorer.score_canonical(p) >= t_score;
    };
    if (holds(lo)) return FloorCut{lo, false};
    if (!holds(hi)) return FloorCut{lo, true};  // no value works: flag and floor out

    double cut;
    if (scorer.is_linear()) {
        p[i] = anchor[i];
        double base = scorer.score_canonical(p);
        double w = scorer.weight(i);
        cut = anchor[i] + (t_score - base) / w;
    } else {
        double a = lo, b = hi;  // !holds(a), holds(b)
        for (int it = 0; it < kBisectIters; ++it) {
            double mid = 0.5 * (a + b);
            (holds(mid) ? b : a) = mid;
        }
        cut = a;  // inward: under-estimating the floor only widens kept queries
    }

    if (scorer.grid_step(i) > 0) {
        double g = std::clamp(grid_up(scorer, i, cut), lo, hi);
        double step = scorer.grid_step(i);
        while (g - step >= lo && holds(g - step)) g -= step;
        while (g < hi && !holds(g)) g += step;
        cut = g;
    } else {
        cut = std::clamp(cut, lo, hi);
    }
    return FloorCut{cut, false};
}

namespace {

double normalized_volume(const CanonicalScorer& scorer, const Box& box,
                         std::span<const double> point) {
    double v = 1.0;
    for (std::size_t i = 0; i < box.dim(); ++i)
        v *= std::max(0.0, point[i] - box.at(i).lo.value) / scorer.width(i);
    return v;
}

// Equal score mass per axis, water-filling against the box caps.
std::vector<double> solve_linear(const CanonicalScorer& scorer, double t_score, const Box& box) {
    const std::size_t m = box.dim();
    std::vector<double> lo(m), cap(m), x(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        lo[i] = box.at(i).lo.value;
        cap[i] = box.at(i).hi.value - lo[i];
    }
    double mass = t_score - scorer.score_canonical(lo);
    std::vector<bool> clamped(m, false);
    // zero-weight axes stretch to the cap for free
    for (std::size_t i = 0; i < m; ++i) {
        if (scorer.weight(i) == 0.0) {
            x[i] = cap[i];
            clamped[i] = true;
        }
    }
    for (;;) {
        std::size_t active = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (!clamped[i]) ++active;
        if (active == 0) break;
        bool re = false;
        for (std::size_t i = 0; i < m; ++i) {
            if (clamped[i]) continue;
            double xi = mass / (static_cast<double>(active) * scorer.weight(i));
            if (xi >= cap[i]) {
                x[i] = cap[i];
                clamped[i] = true;
                mass -= scorer.weight(i) * cap[i];
                re = true;
            } else {
                x[i] = xi;
            }
        }
        if (!re) break;
    }
    std::vector<double> point(m);
    for (std::size_t i = 0; i < m; ++i) point[i] = lo[i] + x[i];
    return point;
}

std::vector<double> solve_general(const CanonicalScorer& scorer, double t_score, const Box& box) {
    const std::size_t m = box.dim();
    std::vector<double> lo = box.best_corner();
    std::vector<double> hi = box.worst_corner();

    // diagonal seed on the contour
    double a = 0.0, b = 1.0;
    std::vector<double> p(m);
    auto at_theta = [&](double th) {
        for (std::size_t i = 0; i < m; ++i) p[i] = lo[i] + th * (hi[i] - lo[i]);
        return scorer.score_canonical(p);
    };
    for (int it = 0; it < kBisectIters; ++it) {
        double mid = 0.5 * (a + b);
        (at_theta(mid) <= t_score ? a : b) = mid;
    }
    std::vector<double> pt(m);
    for (std::size_t i = 0; i < m; ++i) pt[i] = lo[i] + a * (hi[i] - lo[i]);

    auto max_feasible = [&](std::vector<double>& q, std::size_t i) {
        // largest value on axis i keeping the point at or under the contour
        double save = q[i];
        q[i] = hi[i];
        if (scorer.score_canonical(q) <= t_score) {
            q[i] = save;
            return hi[i];
        }
        double fa = std::min(save, hi[i]), fb = hi[i];
        q[i] = fa;
        if (scorer.score_canonical(q) > t_score) fa = lo[i];
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (fa + fb);
            q[i] = mid;
            (scorer.score_canonical(q) <= t_score ? fa : fb) = mid;
        }
        q[i] = save;
        return fa;
    };

    int moves = 0;
    const double tiny = 1e-300;
    for (int round = 0; round < 25 && moves < 200; ++round) {
        bool improved = false;
        for (std::size_t i = 0; i < m && moves < 200; ++i) {
            for (std::size_t j = i + 1; j < m && moves < 200; ++j, ++moves) {
                std::vector<double> q = pt;
                // feasible extent for axis i with axis j relaxed to its floor
                q[j] = lo[j];
                double ub = max_feasible(q, i);
                q[j] = pt[j];
                double best_vi = pt[i], best_vj = pt[j];
                double best_obj = std::log(std::max(pt[i] - lo[i], tiny)) +
                                  std::log(std::max(pt[j] - lo[j], tiny));
                // golden-section over axis i, axis j follows the contour
                const double gr = 0.6180339887498949;
                double ga = lo[i], gb = ub;
                double c1 = gb - gr * (gb - ga), c2 = ga + gr * (gb - ga);
                auto eval = [&](double vi) {
                    q[i] = vi;
                    double vj = max_feasible(q, j);
                    double obj = std::log(std::max(vi - lo[i], tiny)) +
                                 std::log(std::max(vj - lo[j], tiny));
                    if (obj > best_obj) {
                        best_obj = obj;
                        best_vi = vi;
                        best_vj = vj;
                    }
                    return obj;
                };
                double f1 = eval(c1), f2 = eval(c2);
                for (int it = 0; it < 40; ++it) {
                    if (f1 < f2) {
                        ga = c1;
                        c1 = c2;
                        f1 = f2;
                        c2 = ga + gr * (gb - ga);
                        f2 = eval(c2);
                    } else {
                        gb = c2;
                        c2 = c1;
                        f2 = f1;
                        c1 = gb - gr * (gb - ga);
                        f1 = eval(c1);
                    }
                }
                double before = std::log(std::max(pt[i] - lo[i], tiny)) +
                                std::log(std::max(pt[j] - lo[j], tiny));
                if (best_obj > before + 1e-12) {
                    pt[i] = best_vi;
                    pt[j] = best_vj;
                    improved = true;
                }
            }
        }
        if (!improved) break;
    }

    // project outward so the point never sits strictly inside the outranking
    // region
    for (std::size_t i = 0; i < m && scorer.score_canonical(pt) < t_score; ++i) {
        double fa = pt[i], fb = hi[i];
        std::vector<double> q = pt;
        q[i] = fb;
        if (scorer.score_canonical(q) < t_score) {
            pt[i] = fb;
            continue;
        }
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (fa + fb);
            q[i] = mid;
            (scorer.score_canonical(q) < t_score ? fa : fb) = mid;
        }
        pt[i] = fb;
    }
    return pt;
}

}  // namespace

VirtualTuple max_volume_dominated_box(const CanonicalScorer& scorer, double t_score,
                                      const Box& box) {
    VirtualTuple vt;
    std::vector<double> best = box.best_corner();
    std::vector<double> worst = box.worst_corner();

    double s_best = scorer.score_canonical(best);
    if (s_best >= t_score) {
        vt.point = best;
        vt.score = s_best;
        vt.fit = ContourFit::BestCorner;
        vt.volume = 0.0;
        return vt;
    }
    double s_worst = scorer.score_canonical(worst);
    if (s_worst < t_score) {
        vt.point = worst;
        vt.score = s_worst;
        vt.fit = ContourFit::BoxDominated;
        vt.volume = normalized_volume(scorer, box, worst);
        return vt;
    }

    std::vector<double> pt =
        scorer.is_linear() ? solve_linear(scorer, t_score, box) : solve_general(scorer, t_score, box);
    for (std::size_t i = 0; i < pt.size(); ++i)
        pt[i] = std::clamp(pt[i], box.at(i).lo.value, box.at(i).hi.value);

    // nudge up until the point is feasible for pruning (score >= t_score)
    for (int guard = 0; guard < 64 && scorer.score_canonical(pt) < t_score; ++guard) {
        bool moved = false;
        for (std::size_t i = 0; i < pt.size(); ++i) {
            double head = box.at(i).hi.value - pt[i];
            if (head <= 0) continue;
            double bump = std::max(std::fabs(pt[i]) * 1e-12, scorer.width(i) * 1e-12);
            pt[i] = std::min(pt[i] + bump * std::pow(4.0, guard), box.at(i).hi.value);
            moved = true;
        }
        if (!moved) break;
    }

    vt.point = pt;
    vt.score = scorer.score_canonical(pt);
    vt.fit = ContourFit::OnContour;
    vt.volume = normalized_volume(scorer, box, pt);
    return vt;
}

}  // namespace rerank
