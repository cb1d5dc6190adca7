// SPDX-License-Identifier: Apache-2.0
#include "rerank/rerankmd.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace rerank {

namespace mddetail {

namespace {

void clip_lo(Box& b, std::size_t i, double v, bool open) {
    CInterval& iv = b.at(i);
    if (v > iv.lo.value || (v == iv.lo.value && open)) iv.lo = CBound{v, open};
}

void clip_hi(Box& b, std::size_t i, double v, bool open) {
    CInterval& iv = b.at(i);
    if (v < iv.hi.value || (v == iv.hi.value && open)) iv.hi = CBound{v, open};
}

bool box_equal(const Box& a, const Box& b) {
    if (a.dim() != b.dim()) return false;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const CInterval &x = a.at(i), &y = b.at(i);
        if (x.lo.value != y.lo.value || x.lo.open != y.lo.open) return false;
        if (x.hi.value != y.hi.value || x.hi.open != y.hi.open) return false;
    }
    return true;
}

CInterval canon_interval(const CanonicalScorer& sc, std::size_t i, const RangePredicate& r) {
    if (!sc.negated(i)) return CInterval{{r.lower, r.lower_open}, {r.upper, r.upper_open}};
    return CInterval{{-r.upper, r.upper_open}, {-r.lower, r.lower_open}};
}

RangePredicate raw_pred(const CanonicalScorer& sc, std::size_t i, const CInterval& c) {
    const std::string& attr = sc.attr_name(i);
    if (!sc.negated(i)) return RangePredicate{attr, c.lo.value, c.hi.value, c.lo.open, c.hi.open};
    return RangePredicate{attr, -c.hi.value, -c.lo.value, c.hi.open, c.lo.open};
}

}  // namespace

Box initial_box(const CanonicalScorer& sc, const SearchQuery& q) {
    Box b = Box::full(sc);
    for (std::size_t i = 0; i < sc.dim(); ++i) {
        if (const RangePredicate* r = q.range_for(sc.attr_name(i))) {
            CInterval c = canon_interval(sc, i, *r);
            clip_lo(b, i, c.lo.value, c.lo.open);
            clip_hi(b, i, c.hi.value, c.hi.open);
        }
    }
    return b;
}

SearchQuery selection_only(const CanonicalScorer& sc, const SearchQuery& q) {
    SearchQuery sel = q;
    for (std::size_t i = 0; i < sc.dim(); ++i) sel = sel.without_range(sc.attr_name(i));
    return sel;
}

SearchQuery box_query(const CanonicalScorer& sc, const Box& box, const SearchQuery& sel) {
    SearchQuery out = sel;
    for (std::size_t i = 0; i < sc.dim(); ++i) {
        const CInterval& c = box.at(i);
        bool full = c.lo.value <= sc.canon_lo(i) && !c.lo.open && c.hi.value >= sc.canon_hi(i) &&
                    !c.hi.open;
        if (full) continue;
        out.ranges.push_back(raw_pred(sc, i, c));
    }
    return out;
}

std::vector<Box> cover_cells(const CanonicalScorer& sc, const Box& box,
                             std::span<const double> incumbent, double threshold) {
    const std::size_t m = sc.dim();
    std::vector<AxisCut> cuts(m);
    for (std::size_t i = 0; i < m; ++i) {
        cuts[i] = axis_intercept(sc, threshold, i, box);
        if (cuts[i].state == CutState::Infeasible) return {};  // box already outranked
    }
    std::vector<Box> cells;
    for (std::size_t i = 0; i < m; ++i) {
        Box cell = box;
        for (std::size_t j = 0; j < i; ++j) {
            clip_lo(cell, j, incumbent[j], false);
            clip_hi(cell, j, cuts[j].value, cuts[j].state == CutState::Interior);
        }
        clip_hi(cell, i, incumbent[i], true);
        for (std::size_t j = i + 1; j < m; ++j)
            clip_hi(cell, j, cuts[j].value, cuts[j].state == CutState::Interior);
        if (!cell.empty()) cells.push_back(std::move(cell));
    }
    return cells;
}

std::vector<Box> point_split(const Box& box, std::span<const double> point, bool include_point) {
    const std::size_t m = box.dim();
    std::vector<Box> cells;
    for (std::size_t j = 0; j < m; ++j) {
        Box base = box;
        for (std::size_t l = 0; l < j; ++l) {
            clip_lo(base, l, point[l], false);
            clip_hi(base, l, point[l], false);
        }
        Box low = base;
        clip_hi(low, j, point[j], true);
        if (!low.empty()) cells.push_back(std::move(low));
        Box high = base;
        clip_lo(high, j, point[j], true);
        if (!high.empty()) cells.push_back(std::move(high));
    }
    if (include_point) {
        Box pt = box;
        for (std::size_t l = 0; l < m; ++l) {
            clip_lo(pt, l, point[l], false);
            clip_hi(pt, l, point[l], false);
        }
        if (!pt.empty()) cells.push_back(std::move(pt));
    }
    return cells;
}

std::vector<Box> partition_by_floors(const CanonicalScorer& sc, const Box& box,
                                     std::span<const double> anchor, double threshold) {
    const std::size_t m = sc.dim();
    std::vector<double> floors(m);
    for (std::size_t i = 0; i < m; ++i)
        floors[i] = outrank_floor(sc, threshold, anchor, i).value;

    std::vector<Box> cells;
    // tuples beating some floor, disjoint by first beaten axis
    for (std::size_t j = 0; j < m; ++j) {
        Box cell = box;
        for (std::size_t l = 0; l < j; ++l) clip_lo(cell, l, floors[l], false);
        clip_hi(cell, j, floors[j], true);
        if (!cell.empty()) cells.push_back(std::move(cell));
    }
    Box rest = box;
    for (std::size_t l = 0; l < m; ++l) clip_lo(rest, l, floors[l], false);
    if (!rest.empty()) {
        // remainder cells above the anchor on a first axis; provably
        // outranked ones (best corner at or above the threshold) are pruned
        for (std::size_t j = 0; j < m; ++j) {
            Box cell = rest;
            for (std::size_t l = 0; l < j; ++l) clip_hi(cell, l, anchor[l], false);
            clip_lo(cell, j, anchor[j], true);
            if (cell.empty()) continue;
            if (sc.score_canonical(cell.best_corner()) >= threshold) continue;
            cells.push_back(std::move(cell));
        }
        Box dom = rest;
        for (std::size_t l = 0; l < m; ++l) clip_hi(dom, l, anchor[l], false);
        if (!dom.empty()) {
            if (box_equal(dom, box)) return point_split(box, anchor, true);
            cells.push_back(std::move(dom));
        }
    }
    return cells;
}

std::vector<Box> virtual_split(const CanonicalScorer& sc, const Box& box,
                               std::span<const double> anchor, std::span<const double> vpoint) {
    const std::size_t m = sc.dim();
    std::vector<Box> cells;
    for (std::size_t i = 0; i < m; ++i) {
        Box base = box;
        for (std::size_t j = 0; j < i; ++j) clip_lo(base, j, vpoint[j], false);
        if (anchor[i] >= vpoint[i]) {
            Box cell = base;
            clip_hi(cell, i, vpoint[i], true);
            if (!cell.empty()) cells.push_back(std::move(cell));
            continue;
        }
        Box low = base;
        clip_hi(low, i, anchor[i], true);
        if (!low.empty()) cells.push_back(std::move(low));
        Box mid = base;
        clip_lo(mid, i, anchor[i], false);
        clip_hi(mid, i, vpoint[i], true);
        if (mid.empty()) continue;
        // strip the anchor's upward closure from the middle band
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            Box sub = mid;
            for (std::size_t l = 0; l < j; ++l)
                if (l != i) clip_lo(sub, l, anchor[l], false);
            clip_hi(sub, j, anchor[j], true);
            if (!sub.empty()) cells.push_back(std::move(sub));
        }
    }
    return cells;
}

// Raw predicate for one box axis, emitted even when it spans the whole
// domain (the index containment check wants explicit bounds).
RangePredicate raw_bounds_pred(const CanonicalScorer& sc, std::size_t i, const Box& box) {
    return raw_pred(sc, i, box.at(i));
}

std::string ranking_signature(const RankingFunction& f) {
    if (!f.is_linear()) return "";
    std::vector<std::pair<std::string, double>> terms;
    for (std::size_t i = 0; i < f.dim(); ++i)
        terms.emplace_back(f.ranked_attrs()[i], f.signed_weight(i));
    std::sort(terms.begin(), terms.end());
    std::ostringstream os;
    os.precision(12);
    os << "lin";
    for (const auto& [a, w] : terms) os << ':' << a << '=' << w;
    return os.str();
}

}  // namespace mddetail

namespace {

using mddetail::box_query;
using mddetail::cover_cells;
using mddetail::initial_box;
using mddetail::partition_by_floors;
using mddetail::point_split;
using mddetail::selection_only;
using mddetail::virtual_split;

struct PendingCell {
    Box box;
    double hist_best = kPosInf;
    long long seq = 0;
};

RankedTuple rank(const CanonicalScorer& sc, const Tuple& t) {
    return RankedTuple{t, sc.score_tuple(t)};
}

const RankedTuple* min_ranked(const std::vector<RankedTuple>& ts) {
    const RankedTuple* best = nullptr;
    for (const auto& rt : ts)
        if (!best || ranked_less(rt, *best)) best = &rt;
    return best;
}

std::size_t choose_axis(const CanonicalScorer& sc, const Box& box, int override_axis) {
    if (override_axis >= 0 && static_cast<std::size_t>(override_axis) < sc.dim())
        return static_cast<std::size_t>(override_axis);
    std::size_t pick = 0;
    double best_frac = -1.0;
    for (std::size_t i = 0; i < sc.dim(); ++i) {
        double frac = std::max(0.0, box.at(i).width()) / sc.width(i);
        if (frac > best_frac + 1e-12) {
            best_frac = frac;
            pick = i;
        }
    }
    return pick;
}

// Fully specified follow-up query at an emitted tuple's ranked coordinates;
// enumerates co-located tuples (id order) for data without the distinct
// value guarantee.
std::vector<RankedTuple> colocated_batch(AccessChannel& ch, const CanonicalScorer& sc,
                                         const SearchQuery& sel, const RankedTuple& t) {
    SearchQuery full = sel;
    for (std::size_t i = 1; i < sc.dim(); ++i) {
        double raw = t.tuple.ordinal[static_cast<std::size_t>(sc.schema_index(i))];
        full.ranges.push_back(RangePredicate::equals(sc.attr_name(i), raw));
    }
    double raw0 = t.tuple.ordinal[static_cast<std::size_t>(sc.schema_index(0))];
    std::vector<Tuple> all = crawl_ties(ch, sc.attr_name(0), raw0, full);
    std::vector<RankedTuple> out;
    for (auto& u : all) out.push_back(rank(sc, u));
    if (out.empty()) out.push_back(t);
    return out;  // crawl_ties orders by id; scores are all equal
}

struct Top1Result {
    RankedTuple best;
    std::vector<RankedTuple> colocated;  // id order, only filled in Safe mode
};

std::optional<RankedTuple> md_oracle_resolve(AccessChannel& ch, MdIndexes& idx,
                                             const CanonicalScorer& sc, const Box& box,
                                             const SearchQuery& sel, double threshold,
                                             const MdOptions& opts, int* launches);

std::optional<Top1Result> md_top1_impl(AccessChannel& ch, const SearchQuery& q,
                                       const RankingFunction& f, StrategyMD strategy,
                                       MdIndexes* idx, const MdOptions& opts, const Box* preset,
                                       int* launches) {
    if (launches) ++*launches;
    const Schema& schema = ch.schema();
    CanonicalScorer sc(schema, f);
    const std::size_t m = sc.dim();
    if (m == 0) throw std::invalid_argument("reranking: ranking function ranks no attribute");

    Box b0 = initial_box(sc, q);
    if (preset) {
        for (std::size_t i = 0; i < m; ++i) {
            const CInterval& c = preset->at(i);
            if (c.lo.value > b0.at(i).lo.value ||
                (c.lo.value == b0.at(i).lo.value && c.lo.open))
                b0.at(i).lo = c.lo;
            if (c.hi.value < b0.at(i).hi.value ||
                (c.hi.value == b0.at(i).hi.value && c.hi.open))
                b0.at(i).hi = c.hi;
        }
    }
    if (b0.empty()) return std::nullopt;
    SearchQuery sel = selection_only(sc, q);
    SearchQuery seed_q = box_query(sc, b0, sel);

    // seed with the best tuple along one attribute
    std::size_t seed_axis = choose_axis(sc, b0, opts.split_attr);
    Strategy1D strat1d = strategy == StrategyMD::Baseline  ? Strategy1D::Baseline
                         : strategy == StrategyMD::Binary ? Strategy1D::Binary
                                                          : Strategy1D::Rerank;
    SortDir dir = sc.negated(seed_axis) ? SortDir::Desc : SortDir::Asc;
    GetNext1D seed(ch, seed_q, sc.attr_name(seed_axis), strat1d, dir, TieHandling::Assume,
                   idx ? &idx->one_d : nullptr, idx ? &idx->params : nullptr);

    std::optional<RankedTuple> incumbent;
    if (auto t = seed.next()) incumbent = rank(sc, *t);
    if (auto hb = ch.history().min_score(seed_q, f))
        if (!incumbent || ranked_less(*hb, *incumbent)) incumbent = hb;
    if (!incumbent) return std::nullopt;

    double threshold = incumbent->score;
    long long seq = 0;
    std::vector<PendingCell> queue;

    auto enqueue = [&](std::vector<Box> boxes) {
        for (auto& b : boxes) {
            if (b.empty()) continue;
            PendingCell c;
            c.box = std::move(b);
            auto hb = ch.history().min_score(box_query(sc, c.box, sel), f);
            c.hist_best = hb ? hb->score : kPosInf;
            c.seq = seq++;
            queue.push_back(std::move(c));
        }
    };
    auto rebuild = [&]() {
        queue.clear();
        enqueue(cover_cells(sc, b0, sc.canonical_point(incumbent->tuple), threshold));
    };
    auto restart = [&](const RankedTuple& t) {
        incumbent = t;
        threshold = t.score;
        rebuild();
    };
    rebuild();

    while (!queue.empty()) {
        std::size_t pick = 0;
        for (std::size_t i = 1; i < queue.size(); ++i) {
            if (queue[i].hist_best < queue[pick].hist_best ||
                (queue[i].hist_best == queue[pick].hist_best && queue[i].seq < queue[pick].seq))
                pick = i;
        }
        PendingCell cell = std::move(queue[pick]);
        queue.erase(queue.begin() + static_cast<std::ptrdiff_t>(pick));

        SearchQuery q_cell = box_query(sc, cell.box, sel);
        if (auto hb = ch.history().min_score(q_cell, f); hb && hb->score < threshold) {
            restart(*hb);
            continue;
        }
        if (strategy == StrategyMD::Rerank &&
            cell.box.volume_fraction(sc) < idx->params.threshold_volume_fraction()) {
            auto r = md_oracle_resolve(ch, *idx, sc, cell.box, sel, threshold, opts, launches);
            if (r && r->score < threshold) restart(*r);
            continue;
        }

        QueryOutcome out = ch.execute(q_cell);
        if (out.status == Status::Underflow) continue;
        std::vector<RankedTuple> returned;
        for (const auto& t : out.tuples) returned.push_back(rank(sc, t));
        const RankedTuple* best = min_ranked(returned);
        if (best->score < threshold) {
            restart(*best);
            continue;
        }
        if (out.status == Status::Valid) continue;

        // overflowing box with no improvement: refine around the anchor
        std::vector<double> anchor = sc.canonical_point(best->tuple);
        if (strategy == StrategyMD::Baseline) {
            enqueue(partition_by_floors(sc, cell.box, anchor, threshold));
            continue;
        }
        VirtualTuple vt = max_volume_dominated_box(sc, threshold, cell.box);
        if (vt.fit == ContourFit::BestCorner) continue;  // whole box certified
        if (vt.fit == ContourFit::BoxDominated) {
            // cannot happen with a worse-than-threshold anchor inside; fall
            // back to the floor partition
            enqueue(partition_by_floors(sc, cell.box, anchor, threshold));
            continue;
        }
        Box probe = cell.box;
        for (std::size_t i = 0; i < m; ++i) {
            if (vt.point[i] < probe.at(i).hi.value ||
                (vt.point[i] == probe.at(i).hi.value && !probe.at(i).hi.open))
                probe.at(i).hi = CBound{vt.point[i], false};
        }
        if (!probe.empty()) {
            QueryOutcome pout = ch.execute(box_query(sc, probe, sel));
            if (pout.status != Status::Underflow) {
                std::vector<RankedTuple> pret;
                for (const auto& t : pout.tuples) pret.push_back(rank(sc, t));
                const RankedTuple* pbest = min_ranked(pret);
                if (pbest->score < threshold) {
                    restart(*pbest);
                    continue;
                }
            }
        }
        std::vector<Box> cells = virtual_split(sc, cell.box, anchor, vt.point);
        if (cells.size() == 1) {
            // no measurable progress: isolate the anchor point instead
            bool same = true;
            const Box& only = cells.front();
            for (std::size_t i = 0; i < m && same; ++i) {
                const CInterval &a = only.at(i), &b = cell.box.at(i);
                same = a.lo.value == b.lo.value && a.lo.open == b.lo.open &&
                       a.hi.value == b.hi.value && a.hi.open == b.hi.open;
            }
            if (same) cells = point_split(cell.box, anchor, true);
        }
        enqueue(std::move(cells));
    }

    Top1Result res;
    res.best = *incumbent;
    if (opts.ties == TieHandling::Crawl) {
        res.colocated = colocated_batch(ch, sc, sel, *incumbent);
        res.best = res.colocated.front();  // same score, smallest id
    }
    return res;
}

// Enumerates the tuples of a generic box in (score, id) order by repeatedly
// launching top-1 discovery over a shrinking split along one axis.
class MdBoxEnumerator {
  public:
    MdBoxEnumerator(AccessChannel& ch, const CanonicalScorer& sc, const RankingFunction& f,
                    Box box, std::size_t axis, TieHandling ties, int* launches)
        : ch_(&ch), sc_(&sc), f_(&f), axis_(axis), ties_(ties), launches_(launches) {
        spaces_.push_back(Space{std::move(box), std::nullopt, false});
    }

    // Rebuilds the split state from a previously recorded emission sequence
    // without issuing queries.
    void replay(const std::vector<RankedTuple>& already) {
        std::size_t i = 0;
        while (i < already.size()) {
            std::size_t j = i + 1;
            while (j < already.size() &&
                   sc_->canonical_point(already[j].tuple) ==
                       sc_->canonical_point(already[i].tuple))
                ++j;
            split_winner(already[i]);
            i = j;
        }
    }

    std::vector<RankedTuple> next() {
        MdOptions opts;
        opts.ties = ties_;
        opts.split_attr = static_cast<int>(axis_);
        for (auto& s : spaces_) {
            if (s.computed) continue;
            SearchQuery none;
            auto r = md_top1_impl(*ch_, none, *f_, StrategyMD::Baseline, nullptr, opts, &s.box,
                                  launches_);
            s.best = r ? std::optional<RankedTuple>(r->best) : std::nullopt;
            s.batch = r && !r->colocated.empty() ? r->colocated : std::vector<RankedTuple>{};
            s.computed = true;
        }
        const Space* winner = nullptr;
        for (const auto& s : spaces_)
            if (s.best && (!winner || ranked_less(*s.best, *winner->best))) winner = &s;
        if (!winner) return {};
        std::vector<RankedTuple> batch =
            winner->batch.empty() ? std::vector<RankedTuple>{*winner->best} : winner->batch;
        split_winner(*winner->best);
        return batch;
    }

  private:
    struct Space {
        Box box;
        std::optional<RankedTuple> best;
        bool computed = false;
        std::vector<RankedTuple> batch;
    };

    void split_winner(const RankedTuple& t) {
        std::vector<double> p = sc_->canonical_point(t.tuple);
        std::size_t idx = spaces_.size();
        for (std::size_t i = 0; i < spaces_.size(); ++i)
            if (spaces_[i].box.contains(p)) {
                idx = i;
                break;
            }
        if (idx == spaces_.size()) return;  // already excluded
        Box won = std::move(spaces_[idx].box);
        spaces_.erase(spaces_.begin() + static_cast<std::ptrdiff_t>(idx));

        Box left = won, right = won;
        mddetail_clip(left, right, p);
        if (!left.empty()) spaces_.push_back(Space{std::move(left), std::nullopt, false});
        if (!right.empty()) spaces_.push_back(Space{std::move(right), std::nullopt, false});
        if (ties_ == TieHandling::Crawl) {
            Box mid = won;
            mid.at(axis_).lo = CBound{p[axis_], false};
            mid.at(axis_).hi = CBound{p[axis_], false};
            for (auto& cell : point_split(mid, p, false))
                spaces_.push_back(Space{std::move(cell), std::nullopt, false});
        }
    }

    void mddetail_clip(Box& left, Box& right, const std::vector<double>& p) {
        CInterval& li = left.at(axis_);
        if (p[axis_] < li.hi.value || (p[axis_] == li.hi.value && !li.hi.open))
            li.hi = CBound{p[axis_], true};
        CInterval& ri = right.at(axis_);
        if (p[axis_] > ri.lo.value || (p[axis_] == ri.lo.value && !ri.lo.open))
            ri.lo = CBound{p[axis_], true};
    }

    AccessChannel* ch_;
    const CanonicalScorer* sc_;
    const RankingFunction* f_;
    std::size_t axis_;
    TieHandling ties_;
    int* launches_;
    std::vector<Space> spaces_;
};

std::optional<RankedTuple> md_oracle_resolve(AccessChannel& ch, MdIndexes& idx,
                                             const CanonicalScorer& sc, const Box& box,
                                             const SearchQuery& sel, double threshold,
                                             const MdOptions& opts, int* launches) {
    const Schema& schema = ch.schema();
    // explicit raw bounds on every ranked axis, for containment matching
    std::vector<RangePredicate> request;
    for (std::size_t i = 0; i < sc.dim(); ++i)
        request.push_back(mddetail::raw_bounds_pred(sc, i, box));

    std::string sig = mddetail::ranking_signature(sc.function());
    DenseIndexMD::Region* region = idx.md.find_containing(schema, request, sig);

    auto serve = [&](const DenseIndexMD::Region& r) -> std::optional<RankedTuple> {
        SearchQuery inside;
        inside.ranges = request;
        if (r.exhausted) {
            std::optional<RankedTuple> best;
            for (const auto& rt : r.discovered) {
                if (!matches(schema, inside, rt.tuple) || !matches(schema, sel, rt.tuple))
                    continue;
                RankedTuple scored{rt.tuple, sc.score_tuple(rt.tuple)};
                if (!best || ranked_less(scored, *best)) best = scored;
            }
            return best;
        }
        for (const auto& rt : r.discovered) {
            if (matches(schema, inside, rt.tuple) && matches(schema, sel, rt.tuple))
                return RankedTuple{rt.tuple, sc.score_tuple(rt.tuple)};
        }
        return std::nullopt;
    };

    AccessChannel::ScopedPhase phase(ch, Phase::IndexBuild);
    if (region) {
        if (auto hit = serve(*region)) return hit;
        if (region->exhausted) return std::nullopt;
        // resume the recorded crawl of the (possibly larger) region box
        CanonicalScorer rsc(schema, sc.function());
        SearchQuery rq;
        rq.ranges = region->bounds;
        Box rbox = initial_box(rsc, rq);
        MdBoxEnumerator en(ch, rsc, sc.function(), rbox, choose_axis(rsc, rbox, opts.split_attr),
                           opts.ties, launches);
        en.replay(region->discovered);
        while (region->frontier < threshold) {
            auto batch = en.next();
            if (batch.empty()) {
                region->exhausted = true;
                break;
            }
            for (auto& rt : batch) region->discovered.push_back(rt);
            region->frontier = batch.front().score;
            if (auto hit = serve(*region)) return hit;
        }
        return std::nullopt;
    }

    // fresh crawl of the request box itself (selection stripped)
    DenseIndexMD::Region fresh;
    fresh.bounds = request;
    fresh.f_sig = sig;
    MdBoxEnumerator en(ch, sc, sc.function(), box, choose_axis(sc, box, opts.split_attr),
                       opts.ties, launches);
    std::optional<RankedTuple> found;
    for (;;) {
        auto batch = en.next();
        if (batch.empty()) {
            fresh.exhausted = true;
            fresh.frontier = kPosInf;
            break;
        }
        for (auto& rt : batch) fresh.discovered.push_back(rt);
        fresh.frontier = batch.front().score;
        if (!found)
            for (const auto& rt : batch)
                if (matches(schema, sel, rt.tuple)) {
                    found = rt;
                    break;
                }
        if (found || fresh.frontier >= threshold) break;
    }
    if (fresh.discovered.size() >= static_cast<std::size_t>(idx.params.s))
        idx.md.insert(std::move(fresh));
    return found;
}

}  // namespace

std::optional<RankedTuple> md_top1_baseline(AccessChannel& ch, const SearchQuery& q,
                                            const RankingFunction& f, const MdOptions& opts) {
    auto r = md_top1_impl(ch, q, f, StrategyMD::Baseline, nullptr, opts, nullptr, nullptr);
    return r ? std::optional<RankedTuple>(r->best) : std::nullopt;
}

std::optional<RankedTuple> md_top1_binary(AccessChannel& ch, const SearchQuery& q,
                                          const RankingFunction& f, const MdOptions& opts) {
    auto r = md_top1_impl(ch, q, f, StrategyMD::Binary, nullptr, opts, nullptr, nullptr);
    return r ? std::optional<RankedTuple>(r->best) : std::nullopt;
}

std::optional<RankedTuple> md_top1_rerank(AccessChannel& ch, MdIndexes& idx, const SearchQuery& q,
                                          const RankingFunction& f, const MdOptions& opts) {
    auto r = md_top1_impl(ch, q, f, StrategyMD::Rerank, &idx, opts, nullptr, nullptr);
    return r ? std::optional<RankedTuple>(r->best) : std::nullopt;
}

TopKResult md_topk(AccessChannel& ch, const SearchQuery& q, const RankingFunction& f,
                   StrategyMD strategy, int h, MdIndexes* idx, const MdOptions& opts) {
    if (h < 1) throw std::invalid_argument("reranking: requested answer size must be positive");
    if (strategy == StrategyMD::TA) {
        if (!idx) throw std::invalid_argument("reranking: the TA strategy needs the index bundle");
        TaOptions topts;
        topts.ties = opts.ties;
        return ta_over_1d(ch, *idx, q, f, h, topts);
    }
    if (strategy == StrategyMD::Rerank && !idx)
        throw std::invalid_argument("reranking: the indexed strategy needs the index bundle");

    CanonicalScorer sc(ch.schema(), f);
    TopKResult res;
    auto snapshot = [&]() {
        CostSnapshot s;
        s.search = ch.db().ledger().total(Phase::Search);
        s.index_build = ch.db().ledger().total(Phase::IndexBuild);
        res.per_rank.push_back(s);
    };

    struct Space {
        Box box;
        std::optional<Top1Result> best;
        bool computed = false;
    };
    std::vector<Space> spaces;
    spaces.push_back(Space{initial_box(sc, q), std::nullopt, false});
    std::size_t axis = choose_axis(sc, spaces.front().box, opts.split_attr);

    while (static_cast<int>(res.tuples.size()) < h) {
        for (auto& s : spaces) {
            if (s.computed) continue;
            s.best = md_top1_impl(ch, q, f, strategy, idx, opts, &s.box, &res.top1_launches);
            s.computed = true;
        }
        Space* winner = nullptr;
        for (auto& s : spaces)
            if (s.best && (!winner || ranked_less(s.best->best, winner->best->best))) winner = &s;
        if (!winner) {
            res.short_of_h = true;
            break;
        }
        std::vector<RankedTuple> batch = winner->best->colocated.empty()
                                             ? std::vector<RankedTuple>{winner->best->best}
                                             : winner->best->colocated;
        for (auto& rt : batch) {
            if (static_cast<int>(res.tuples.size()) >= h) break;
            res.tuples.push_back(rt);
            snapshot();
        }

        std::vector<double> p = sc.canonical_point(winner->best->best.tuple);
        Box won = std::move(winner->box);
        if (winner != &spaces.back()) *winner = std::move(spaces.back());
        spaces.pop_back();

        Box left = won, right = won;
        CInterval& li = left.at(axis);
        if (p[axis] < li.hi.value || (p[axis] == li.hi.value && !li.hi.open))
            li.hi = CBound{p[axis], true};
        CInterval& ri = right.at(axis);
        if (p[axis] > ri.lo.value || (p[axis] == ri.lo.value && !ri.lo.open))
            ri.lo = CBound{p[axis], true};
        if (!left.empty()) spaces.push_back(Space{std::move(left), std::nullopt, false});
        if (!right.empty()) spaces.push_back(Space{std::move(right), std::nullopt, false});
        if (opts.ties == TieHandling::Crawl) {
            Box mid = won;
            mid.at(axis).lo = CBound{p[axis], false};
            mid.at(axis).hi = CBound{p[axis], false};
            for (auto& cell : point_split(mid, p, false))
                spaces.push_back(Space{std::move(cell), std::nullopt, false});
        }
    }
    if (static_cast<int>(res.tuples.size()) < h) res.short_of_h = true;
    return res;
}

TopKResult ta_over_1d(AccessChannel& ch, MdIndexes& idx, const SearchQuery& q,
                      const RankingFunction& f, int h, const TaOptions& opts) {
    if (h < 1) throw std::invalid_argument("reranking: requested answer size must be positive");
    const Schema& schema = ch.schema();
    CanonicalScorer sc(schema, f);
    const std::size_t m = sc.dim();

    // one sorted-access stream per ranked attribute, preference direction
    struct Stream {
        std::unique_ptr<GetNext1D> session;
        // order-by pagination state
        bool order_by = false;
        SortDir dir = SortDir::Asc;
        std::string attr;
        std::vector<Tuple> buffer;
        std::size_t pos = 0;
        bool exhausted = false;
        std::optional<std::pair<double, TupleId>> last;  // oriented value, id
    };
    std::vector<Stream> streams(m);
    SimulatedDatabase* simdb = dynamic_cast<SimulatedDatabase*>(&ch.db());
    if (opts.use_system_order_by && !simdb)
        throw std::invalid_argument("reranking: backend lacks per-attribute ordering support");

    for (std::size_t i = 0; i < m; ++i) {
        Stream& s = streams[i];
        s.attr = sc.attr_name(i);
        s.dir = sc.negated(i) ? SortDir::Desc : SortDir::Asc;
        if (opts.use_system_order_by) {
            s.order_by = true;
        } else {
            s.session = std::make_unique<GetNext1D>(ch, q, s.attr, Strategy1D::Rerank, s.dir,
                                                    opts.ties, &idx.one_d, &idx.params);
        }
    }

    auto pull = [&](Stream& s) -> std::optional<Tuple> {
        if (!s.order_by) return s.session->next();
        for (;;) {
            while (s.pos < s.buffer.size()) {
                const Tuple& t = s.buffer[s.pos];
                double ov = oriented(s.dir, t.ordinal[static_cast<std::size_t>(
                                                schema.ordinal_index(s.attr))]);
                std::pair<double, TupleId> key{ov, t.id};
                if (!s.last || key > *s.last) {
                    s.last = key;
                    return s.buffer[s.pos++];
                }
                ++s.pos;
            }
            if (s.exhausted) return std::nullopt;
            SearchQuery page = q;
            if (s.last) {
                RangePredicate r = oriented_range(s.attr, s.dir, s.last->first, false, kPosInf, true);
                const RangePredicate* own = q.range_for(s.attr);
                if (own) r = intersect_range(r, *own);
                page = q.with_range(r);
            }
            QueryOutcome out = simdb->top_k_by_attr(page, s.attr, s.dir == SortDir::Desc);
            ch.db().ledger().record(ch.context().algo, ch.context().query_id, ch.context().phase,
                                    &page, &out);
            for (const auto& t : out.tuples) ch.history().insert(t);
            s.buffer = out.tuples;
            s.pos = 0;
            if (out.status != Status::Overflow) s.exhausted = true;
            if (out.status == Status::Underflow) return std::nullopt;
            bool any_new = false;
            for (const auto& t : s.buffer) {
                double ov = oriented(s.dir, t.ordinal[static_cast<std::size_t>(
                                                schema.ordinal_index(s.attr))]);
                if (!s.last || std::pair<double, TupleId>{ov, t.id} > *s.last) any_new = true;
            }
            if (!any_new && out.status == Status::Overflow && s.last) {
                // page past a block of equal values
                RangePredicate r =
                    oriented_range(s.attr, s.dir, s.last->first, true, kPosInf, true);
                const RangePredicate* own = q.range_for(s.attr);
                if (own) r = intersect_range(r, *own);
                SearchQuery jump = q.with_range(r);
                out = simdb->top_k_by_attr(jump, s.attr, s.dir == SortDir::Desc);
                ch.db().ledger().record(ch.context().algo, ch.context().query_id,
                                        ch.context().phase, &jump, &out);
                for (const auto& t : out.tuples) ch.history().insert(t);
                s.buffer = out.tuples;
                s.pos = 0;
                if (out.status != Status::Overflow) s.exhausted = true;
                if (out.status == Status::Underflow) return std::nullopt;
            }
        }
    };

    std::unordered_map<TupleId, RankedTuple> seen;
    std::vector<std::optional<double>> last_canon(m);
    TopKResult res;
    auto snapshot = [&]() {
        CostSnapshot s;
        s.search = ch.db().ledger().total(Phase::Search);
        s.index_build = ch.db().ledger().total(Phase::IndexBuild);
        return s;
    };
    std::vector<std::optional<CostSnapshot>> confirmed(static_cast<std::size_t>(h));

    auto current_order = [&]() {
        std::vector<const RankedTuple*> all;
        all.reserve(seen.size());
        for (const auto& [id, rt] : seen) all.push_back(&rt);
        std::sort(all.begin(), all.end(),
                  [](const RankedTuple* a, const RankedTuple* b) { return ranked_less(*a, *b); });
        return all;
    };

    bool complete = false;
    bool done = false;
    while (!done) {
        bool progressed = false;
        for (std::size_t i = 0; i < m && !done; ++i) {
            auto t = pull(streams[i]);
            if (!t) {
                // one stream fully enumerated the matching set
                complete = true;
                done = true;
                break;
            }
            progressed = true;
            int sidx = schema.ordinal_index(streams[i].attr);
            last_canon[i] = sc.to_canonical(i, t->ordinal[static_cast<std::size_t>(sidx)]);
            seen.emplace(t->id, RankedTuple{*t, sc.score_tuple(*t)});

            bool have_all = true;
            for (const auto& lc : last_canon)
                if (!lc) have_all = false;
            if (!have_all) continue;
            std::vector<double> pt(m);
            for (std::size_t j = 0; j < m; ++j) pt[j] = *last_canon[j];
            double tau = sc.score_canonical(pt);

            auto order = current_order();
            for (std::size_t r = 0; r < order.size() && r < static_cast<std::size_t>(h); ++r) {
                if (order[r]->score < tau && !confirmed[r]) confirmed[r] = snapshot();
            }
            if (order.size() >= static_cast<std::size_t>(h) &&
                order[static_cast<std::size_t>(h) - 1]->score < tau) {
                done = true;
            }
        }
        if (!progressed) break;
    }

    auto order = current_order();
    for (std::size_t r = 0; r < order.size() && r < static_cast<std::size_t>(h); ++r) {
        res.tuples.push_back(*order[r]);
        res.per_rank.push_back(confirmed[r] ? *confirmed[r] : snapshot());
    }
    if (res.tuples.size() < static_cast<std::size_t>(h)) res.short_of_h = true;
    (void)complete;
    return res;
}

DenseIndexMD::Region* DenseIndexMD::find_containing(const Schema& schema,
                                                    const std::vector<RangePredicate>& request,
                                                    const std::string& f_sig) {
    auto pred_for = [&](const std::vector<RangePredicate>& preds,
                        const std::string& attr) -> RangePredicate {
        for (const auto& p : preds)
            if (p.attr == attr) return p;
        const OrdinalDomain& d = schema.ordinal(attr);
        return RangePredicate::closed(attr, d.lo, d.hi);
    };
    auto covers = [&](const Region& r) {
        std::vector<std::string> attrs;
        for (const auto& p : r.bounds) attrs.push_back(p.attr);
        for (const auto& p : request)
            if (std::find(attrs.begin(), attrs.end(), p.attr) == attrs.end())
                attrs.push_back(p.attr);
        for (const auto& attr : attrs) {
            RangePredicate reg = pred_for(r.bounds, attr);
            RangePredicate req = pred_for(request, attr);
            if (req.lower < reg.lower || (req.lower == reg.lower && reg.lower_open && !req.lower_open))
                return false;
            if (req.upper > reg.upper || (req.upper == reg.upper && reg.upper_open && !req.upper_open))
                return false;
        }
        return true;
    };
    Region* best = nullptr;
    for (auto& r : regions_) {
        if (!covers(r)) continue;
        if (!r.exhausted && (f_sig.empty() || r.f_sig != f_sig)) continue;
        if (!best || (r.exhausted && !best->exhausted)) best = &r;
    }
    return best;
}

std::size_t DenseIndexMD::tuple_count() const {
    std::size_t n = 0;
    for (const auto& r : regions_) n += r.discovered.size();
    return n;
}

void DenseIndexMD::save(std::ostream& os) const {
    os.precision(17);
    for (const auto& r : regions_) {
        if (!r.exhausted) continue;  // only complete boxes survive a restart
        os << "regionmd " << r.bounds.size();
        for (const auto& p : r.bounds)
            os << ' ' << p.attr << ' ' << p.lower << ' ' << p.upper << ' ' << (p.lower_open ? 1 : 0)
               << ' ' << (p.upper_open ? 1 : 0);
        os << ' ' << r.discovered.size();
        for (const auto& rt : r.discovered) os << ' ' << rt.tuple.id;
        os << '\n';
    }
}

void DenseIndexMD::load(std::istream& is, const DenseIndex1D::TupleResolver& resolve,
                        const Schema& schema) {
    (void)schema;
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("regionmd ", 0) != 0) continue;
        std::istringstream ls(line);
        std::string tag;
        std::size_t nb = 0;
        ls >> tag >> nb;
        Region r;
        for (std::size_t i = 0; i < nb; ++i) {
            RangePredicate p;
            int lo_open = 0, hi_open = 0;
            ls >> p.attr >> p.lower >> p.upper >> lo_open >> hi_open;
            p.lower_open = lo_open != 0;
            p.upper_open = hi_open != 0;
            r.bounds.push_back(std::move(p));
        }
        std::size_t count = 0;
        ls >> count;
        if (!ls) throw std::runtime_error("index snapshot: malformed box record");
        for (std::size_t i = 0; i < count; ++i) {
            TupleId id;
            ls >> id;
            const Tuple* t = resolve(id);
            if (!t) throw std::runtime_error("index snapshot: unknown tuple id");
            r.discovered.push_back(RankedTuple{*t, 0.0});
        }
        r.exhausted = true;
        r.frontier = kPosInf;
        regions_.push_back(std::move(r));
    }
}

}  // namespace rerank
