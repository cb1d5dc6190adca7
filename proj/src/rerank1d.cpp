// SPDX-License-Identifier: Apache-2.0
#include "rerank/rerank1d.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace rerank {

DenseIndexParams DenseIndexParams::defaults(std::size_t n, int k) {
    DenseIndexParams p;
    p.n = std::max<std::size_t>(n, 2);
    p.c = static_cast<double>(p.n);
    p.s = std::max(1, k * static_cast<int>(std::ceil(std::log2(static_cast<double>(p.n)))));
    return p;
}

RangePredicate oriented_range(const std::string& attr, SortDir d, double olo, bool lo_open,
                              double ohi, bool hi_open) {
    if (d == SortDir::Asc) return RangePredicate{attr, olo, ohi, lo_open, hi_open};
    return RangePredicate{attr, -ohi, -olo, hi_open, lo_open};
}

namespace {

double oriented_value(const Schema& schema, SortDir dir, const std::string& attr, const Tuple& t) {
    int idx = schema.ordinal_index(attr);
    return oriented(dir, t.ordinal[static_cast<std::size_t>(idx)]);
}

// min by (oriented value, id) over a returned batch
const Tuple* min_oriented(const Schema& schema, SortDir dir, const std::string& attr,
                          const std::vector<Tuple>& ts) {
    const Tuple* best = nullptr;
    double best_v = kPosInf;
    for (const auto& t : ts) {
        double v = oriented_value(schema, dir, attr, t);
        if (!best || v < best_v || (v == best_v && t.id < best->id)) {
            best = &t;
            best_v = v;
        }
    }
    return best;
}

struct OrientedGrid {
    bool grid = false;
    double anchor = 0.0;  // oriented value of some grid point
    double step = 0.0;

    double down(double v) const { return anchor + std::floor((v - anchor) / step + 1e-9) * step; }
    double up(double v) const { return anchor + std::ceil((v - anchor) / step - 1e-9) * step; }
    double nearest(double v) const { return anchor + std::round((v - anchor) / step) * step; }
};

OrientedGrid oriented_grid(const OrdinalDomain& dom, SortDir dir) {
    OrientedGrid g;
    if (!dom.is_grid()) return g;
    g.grid = true;
    g.step = dom.step;
    g.anchor = dir == SortDir::Asc ? dom.lo : -dom.hi;
    return g;
}

}  // namespace

namespace detail {

std::optional<Tuple> search_1d(AccessChannel& ch, const SearchQuery& q, const std::string& attr,
                               SortDir dir, std::optional<double> pivot_ov, Strategy1D strategy,
                               DenseIndex1D* index, const DenseIndexParams* params,
                               TieHandling ties, std::vector<Tuple>* observed) {
    const Schema& schema = ch.schema();
    const OrdinalDomain& dom = schema.ordinal(attr);
    const OrientedGrid grid = oriented_grid(dom, dir);
    const double dom_olo = dir == SortDir::Asc ? dom.lo : -dom.hi;
    const double margin = dom.is_grid() ? dom.step : std::max(1e-9 * dom.width(), 1e-300);

    double lo = pivot_ov.value_or(dom_olo - margin);
    bool lo_open = true;

    const RangePredicate* own = q.range_for(attr);
    auto run_range = [&](double a, bool a_open, double b, bool b_open) -> QueryOutcome {
        RangePredicate r = oriented_range(attr, dir, a, a_open, b, b_open);
        if (own) r = intersect_range(r, *own);
        if (r.is_canonical_empty() || (r.lower == r.upper && (r.lower_open || r.upper_open)))
            return QueryOutcome{Status::Underflow, {}};
        QueryOutcome out = ch.execute(q.with_range(r));
        if (observed)
            for (const auto& t : out.tuples) observed->push_back(t);
        return out;
    };

    std::optional<Tuple> candidate =
        ch.history().best_beyond(q, attr, pivot_ov.value_or(kNegInf), dir == SortDir::Desc);
    double cand_ov = candidate ? oriented_value(schema, dir, attr, *candidate) : kPosInf;

    if (!candidate) {
        QueryOutcome out = run_range(lo, lo_open, kPosInf, true);
        if (out.status == Status::Underflow) return std::nullopt;
        const Tuple* best = min_oriented(schema, dir, attr, out.tuples);
        if (out.status == Status::Valid) return *best;
        candidate = *best;
        cand_ov = oriented_value(schema, dir, attr, *candidate);
    }

    Strategy1D mode = strategy;
    for (;;) {
        if (mode == Strategy1D::Rerank) {
            double width = cand_ov - std::max(lo, dom_olo - margin);
            if (width < params->threshold_width(dom.width())) {
                double eff_lo = lo;
                if (!lo_open)
                    eff_lo = grid.grid ? lo - grid.step / 2 : std::nextafter(lo, kNegInf);
                auto hit = index->min_matching(ch, attr, dir, eff_lo, cand_ov, q, ties);
                return hit ? *hit : candidate;
            }
        }

        if (mode == Strategy1D::Baseline) {
            QueryOutcome out = run_range(lo, lo_open, cand_ov, true);
            if (out.status == Status::Underflow) return candidate;
            const Tuple* best = min_oriented(schema, dir, attr, out.tuples);
            if (out.status == Status::Valid) return *best;
            candidate = *best;
            cand_ov = oriented_value(schema, dir, attr, *candidate);
            continue;
        }

        // halving step
        double mid;
        if (grid.grid) {
            double first = lo_open ? grid.down(lo) + grid.step : grid.up(lo);
            double last = grid.up(cand_ov) - grid.step;
            double count = (last - first) / grid.step + 1.0;
            if (count < 2.0) {
                mode = Strategy1D::Baseline;
                continue;
            }
            mid = std::clamp(grid.nearest(0.5 * (lo + cand_ov)), first + grid.step, last);
        } else {
            mid = 0.5 * (std::max(lo, dom_olo - margin) + cand_ov);
            if (!(mid > lo && mid < cand_ov)) {
                mode = Strategy1D::Baseline;
                continue;
            }
        }

        QueryOutcome out = run_range(lo, lo_open, mid, true);
        if (out.status != Status::Underflow) {
            const Tuple* best = min_oriented(schema, dir, attr, out.tuples);
            if (out.status == Status::Valid) return *best;
            candidate = *best;
            cand_ov = oriented_value(schema, dir, attr, *candidate);
            continue;
        }
        out = run_range(mid, false, cand_ov, true);
        if (out.status == Status::Underflow) return candidate;
        const Tuple* best = min_oriented(schema, dir, attr, out.tuples);
        if (out.status == Status::Valid) return *best;
        candidate = *best;
        cand_ov = oriented_value(schema, dir, attr, *candidate);
        lo = mid;
        lo_open = false;
    }
}

}  // namespace detail

namespace {

std::optional<double> pivot_oriented(const Schema& schema, SortDir dir, const std::string& attr,
                                     const std::optional<Tuple>& pivot) {
    if (!pivot) return std::nullopt;
    return oriented_value(schema, dir, attr, *pivot);
}

}  // namespace

std::optional<Tuple> get_next_baseline(AccessChannel& ch, const SearchQuery& q,
                                       const std::string& attr,
                                       const std::optional<Tuple>& pivot) {
    return detail::search_1d(ch, q, attr, SortDir::Asc,
                             pivot_oriented(ch.schema(), SortDir::Asc, attr, pivot),
                             Strategy1D::Baseline, nullptr, nullptr);
}

std::optional<Tuple> get_next_binary(AccessChannel& ch, const SearchQuery& q,
                                     const std::string& attr, const std::optional<Tuple>& pivot) {
    return detail::search_1d(ch, q, attr, SortDir::Asc,
                             pivot_oriented(ch.schema(), SortDir::Asc, attr, pivot),
                             Strategy1D::Binary, nullptr, nullptr);
}

std::optional<Tuple> get_next_reranked(AccessChannel& ch, DenseIndex1D& index,
                                       const DenseIndexParams& params, const SearchQuery& q,
                                       const std::string& attr,
                                       const std::optional<Tuple>& pivot) {
    return detail::search_1d(ch, q, attr, SortDir::Asc,
                             pivot_oriented(ch.schema(), SortDir::Asc, attr, pivot),
                             Strategy1D::Rerank, &index, &params);
}

std::optional<Tuple> oracle_lookup(AccessChannel& ch, DenseIndex1D& index, const std::string& attr,
                                   double lo, double hi, const SearchQuery& q) {
    return index.min_matching(ch, attr, SortDir::Asc, lo, hi, q);
}

DenseIndex1D::Region* DenseIndex1D::region_covering(std::map<double, Region>& rmap, double point) {
    auto it = rmap.upper_bound(point);
    if (it == rmap.begin()) return nullptr;
    --it;
    Region& r = it->second;
    return point < r.y ? &r : nullptr;  // covers (x, y], lookups walk from x
}

bool DenseIndex1D::crawl_step(AccessChannel& ch, Region& r, TieHandling ties) {
    AccessChannel::ScopedPhase phase(ch, Phase::IndexBuild);
    SearchQuery bare;
    bare.ranges.push_back(oriented_range(r.attr, r.dir, r.frontier, true, r.y, false));

    std::vector<Tuple> observed;
    auto found = detail::search_1d(ch, bare, r.attr, r.dir, std::nullopt, Strategy1D::Baseline,
                                   nullptr, nullptr, TieHandling::Assume, &observed);
    auto absorb = [&](const Tuple& t) {
        double ov = oriented_value(ch.schema(), r.dir, r.attr, t);
        if (!(ov > r.x && ov <= r.y)) return;
        auto pos = std::lower_bound(r.discovered.begin(), r.discovered.end(), t,
                                    [&](const Tuple& a, const Tuple& b) {
                                        double va = oriented_value(ch.schema(), r.dir, r.attr, a);
                                        double vb = oriented_value(ch.schema(), r.dir, r.attr, b);
                                        if (va != vb) return va < vb;
                                        return a.id < b.id;
                                    });
        if (pos != r.discovered.end() && pos->id == t.id &&
            oriented_value(ch.schema(), r.dir, r.attr, *pos) ==
                oriented_value(ch.schema(), r.dir, r.attr, t))
            return;
        r.discovered.insert(pos, t);
    };
    for (const auto& t : observed) absorb(t);
    if (!found) {
        r.frontier = r.y;
        r.exhausted = true;
        return false;
    }
    absorb(*found);
    double fv = oriented_value(ch.schema(), r.dir, r.attr, *found);
    if (ties == TieHandling::Crawl) {
        SearchQuery none;
        int idx = ch.schema().ordinal_index(r.attr);
        double raw = found->ordinal[static_cast<std::size_t>(idx)];
        for (const auto& t : crawl_ties(ch, r.attr, raw, none)) absorb(t);
    }
    r.frontier = fv;
    if (r.frontier >= r.y) r.exhausted = true;
    return true;
}

std::optional<Tuple> DenseIndex1D::region_lookup(AccessChannel& ch, Region& r, double seg_lo,
                                                 double seg_hi, bool hi_exclusive,
                                                 const SearchQuery& q, TieHandling ties) {
    const Schema& schema = ch.schema();
    for (;;) {
        for (const auto& t : r.discovered) {
            double ov = oriented_value(schema, r.dir, r.attr, t);
            if (!(ov > seg_lo)) continue;
            if (hi_exclusive ? !(ov < seg_hi) : !(ov <= seg_hi)) break;
            if (!r.exhausted && ov > r.frontier) break;  // beyond verified prefix
            if (matches(schema, q, t)) return t;
        }
        if (r.exhausted || r.frontier >= seg_hi) return std::nullopt;
        if (!crawl_step(ch, r, ties)) continue;  // exhausted; final scan happens above
    }
}

std::optional<Tuple> DenseIndex1D::min_matching(AccessChannel& ch, const std::string& attr,
                                                SortDir dir, double lo, double hi,
                                                const SearchQuery& q, TieHandling ties) {
    if (!(lo < hi)) return std::nullopt;
    auto& rmap = regions_[Key{attr, static_cast<int>(dir)}];
    double cur = lo;
    std::optional<Tuple> result;
    while (cur < hi) {
        Region* r = region_covering(rmap, cur);
        double seg_hi;
        if (r) {
            seg_hi = std::min(hi, r->y);
        } else {
            auto nxt = rmap.upper_bound(cur);
            double gap_hi = nxt == rmap.end() ? hi : std::min(hi, nxt->first);
            Region fresh;
            fresh.attr = attr;
            fresh.attr_idx = ch.schema().ordinal_index(attr);
            fresh.dir = dir;
            fresh.x = cur;
            fresh.y = gap_hi;
            fresh.frontier = cur;
            auto [it, ok] = rmap.emplace(cur, std::move(fresh));
            r = &it->second;
            seg_hi = gap_hi;
        }
        result = region_lookup(ch, *r, cur, seg_hi, seg_hi >= hi, q, ties);
        if (result) break;
        cur = seg_hi;
    }
    merge_touching(rmap);
    return result;
}

void DenseIndex1D::merge_touching(std::map<double, Region>& rmap) {
    auto it = rmap.begin();
    while (it != rmap.end()) {
        auto nxt = std::next(it);
        if (nxt == rmap.end()) break;
        Region& a = it->second;
        Region& b = nxt->second;
        if (a.y == b.x && a.exhausted) {
            a.y = b.y;
            a.frontier = std::max(a.frontier, b.frontier);
            a.exhausted = b.exhausted;
            a.discovered.insert(a.discovered.end(), b.discovered.begin(), b.discovered.end());
            const std::size_t idx = static_cast<std::size_t>(a.attr_idx);
            const SortDir dir = a.dir;
            std::sort(a.discovered.begin(), a.discovered.end(),
                      [&](const Tuple& x, const Tuple& y) {
                          double vx = oriented(dir, x.ordinal[idx]);
                          double vy = oriented(dir, y.ordinal[idx]);
                          if (vx != vy) return vx < vy;
                          return x.id < y.id;
                      });
            rmap.erase(nxt);
        } else {
            ++it;
        }
    }
}

std::vector<const DenseIndex1D::Region*> DenseIndex1D::regions(const std::string& attr,
                                                               SortDir dir) const {
    std::vector<const Region*> out;
    auto it = regions_.find(Key{attr, static_cast<int>(dir)});
    if (it == regions_.end()) return out;
    for (const auto& [x, r] : it->second) out.push_back(&r);
    return out;
}

std::size_t DenseIndex1D::region_count() const {
    std::size_t n = 0;
    for (const auto& [k, m] : regions_) n += m.size();
    return n;
}

std::size_t DenseIndex1D::tuple_count() const {
    std::size_t n = 0;
    for (const auto& [k, m] : regions_)
        for (const auto& [x, r] : m) n += r.discovered.size();
    return n;
}

void DenseIndex1D::save(std::ostream& os) const {
    os.precision(17);
    os << "rerank-index 1\n";
    for (const auto& [key, rmap] : regions_) {
        for (const auto& [x, r] : rmap) {
            os << "region1d " << r.attr << ' ' << (r.dir == SortDir::Asc ? "asc" : "desc") << ' '
               << r.x << ' ' << r.y << ' ' << r.frontier << ' ' << (r.exhausted ? 1 : 0) << ' '
               << r.discovered.size();
            for (const auto& t : r.discovered) os << ' ' << t.id;
            os << '\n';
        }
    }
}

void DenseIndex1D::load(std::istream& is, const Schema& schema, const TupleResolver& resolve) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("rerank-index 1", 0) != 0)
        throw std::runtime_error("index snapshot: bad or missing header");
    regions_.clear();
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag != "region1d") continue;  // other record kinds share the file
        Region r;
        std::string dir;
        std::size_t count = 0;
        int exhausted = 0;
        ls >> r.attr >> dir >> r.x >> r.y >> r.frontier >> exhausted >> count;
        if (!ls) throw std::runtime_error("index snapshot: malformed region record");
        r.attr_idx = schema.ordinal_index(r.attr);
        if (r.attr_idx < 0) throw std::runtime_error("index snapshot: unknown attribute " + r.attr);
        r.dir = dir == "desc" ? SortDir::Desc : SortDir::Asc;
        r.exhausted = exhausted != 0;
        for (std::size_t i = 0; i < count; ++i) {
            TupleId id;
            ls >> id;
            const Tuple* t = resolve(id);
            if (!t) throw std::runtime_error("index snapshot: unknown tuple id");
            r.discovered.push_back(*t);
        }
        const std::size_t idx = static_cast<std::size_t>(r.attr_idx);
        const SortDir d = r.dir;
        std::sort(r.discovered.begin(), r.discovered.end(), [&](const Tuple& a, const Tuple& b) {
            double va = oriented(d, a.ordinal[idx]);
            double vb = oriented(d, b.ordinal[idx]);
            if (va != vb) return va < vb;
            return a.id < b.id;
        });
        regions_[Key{r.attr, static_cast<int>(r.dir)}].emplace(r.x, std::move(r));
    }
}

std::vector<Tuple> crawl_ties(AccessChannel& ch, const std::string& attr, double value,
                              const SearchQuery& q) {
    const Schema& schema = ch.schema();
    std::map<TupleId, Tuple> found;

    SearchQuery pinned = q.with_range(RangePredicate::equals(attr, value));

    // Split state: closed interval per splittable ordinal attribute.
    struct Cell {
        SearchQuery query;
        std::size_t split_pos;  // index into splittables
        int depth;
    };
    std::vector<std::string> splittables;
    for (const auto& d : schema.ordinals())
        if (d.name != attr) splittables.push_back(d.name);

    std::vector<Cell> stack{{pinned, 0, 0}};
    while (!stack.empty()) {
        Cell cell = std::move(stack.back());
        stack.pop_back();
        QueryOutcome out = ch.execute(cell.query);
        for (const auto& t : out.tuples) found.emplace(t.id, t);
        if (out.status != Status::Overflow) continue;

        // find a splittable axis with room left
        bool split_done = false;
        for (std::size_t p = cell.split_pos; p < splittables.size() && !split_done; ++p) {
            const OrdinalDomain& dom = schema.ordinal(splittables[p]);
            const RangePredicate* cur = cell.query.range_for(dom.name);
            double lo = cur ? std::max(cur->lower, dom.lo) : dom.lo;
            double hi = cur ? std::min(cur->upper, dom.hi) : dom.hi;
            if (dom.is_grid()) {
                double first = dom.snap_up(lo), last = dom.snap_down(hi);
                if ((last - first) / dom.step + 1.0 < 2.0) continue;
                double mid = std::clamp(dom.snap_down(0.5 * (lo + hi)), first + dom.step, last);
                auto low = RangePredicate{dom.name, lo, mid, cur ? cur->lower_open : false, true};
                auto high = RangePredicate{dom.name, mid, hi, false, cur ? cur->upper_open : false};
                stack.push_back({cell.query.with_range(low), p, cell.depth + 1});
                stack.push_back({cell.query.with_range(high), p, cell.depth + 1});
                split_done = true;
            } else {
                double mid = 0.5 * (lo + hi);
                if (!(mid > lo && mid < hi) || cell.depth > 64) continue;
                auto low = RangePredicate{dom.name, lo, mid, cur ? cur->lower_open : false, true};
                auto high = RangePredicate{dom.name, mid, hi, false, cur ? cur->upper_open : false};
                stack.push_back({cell.query.with_range(low), p, cell.depth + 1});
                stack.push_back({cell.query.with_range(high), p, cell.depth + 1});
                split_done = true;
            }
        }
        if (split_done) continue;

        // out of ordinal room: separate by categorical values
        bool cat_done = false;
        for (const auto& c : schema.categoricals()) {
            bool pinned_already = false;
            for (const auto& e : cell.query.equalities)
                if (e.attr == c.name) pinned_already = true;
            if (pinned_already) continue;
            for (const auto& v : c.values) {
                Cell sub = cell;
                sub.query.equalities.push_back({c.name, v});
                sub.depth = 0;
                sub.split_pos = 0;
                stack.push_back(std::move(sub));
            }
            cat_done = true;
            break;
        }
        if (!cat_done)
            throw std::runtime_error(
                "crawl_ties: overflowing group of tuples indistinguishable through the interface");
    }

    std::vector<Tuple> out;
    for (auto& [id, t] : found) out.push_back(std::move(t));
    return out;
}

GetNext1D::GetNext1D(AccessChannel& ch, SearchQuery q, std::string attr, Strategy1D strategy,
                     SortDir dir, TieHandling ties, DenseIndex1D* index,
                     const DenseIndexParams* params)
    : ch_(&ch),
      q_(std::move(q)),
      attr_(std::move(attr)),
      strategy_(strategy),
      dir_(dir),
      ties_(ties),
      index_(index),
      params_(params) {
    if (strategy_ == Strategy1D::Rerank && (!index_ || !params_))
        throw std::invalid_argument("get-next: reranked strategy needs an index and parameters");
}

std::optional<Tuple> GetNext1D::next() {
    if (pending_pos_ < pending_.size()) {
        ++emitted_;
        return pending_[pending_pos_++];
    }
    if (exhausted_) return std::nullopt;

    auto t = detail::search_1d(*ch_, q_, attr_, dir_, pivot_ov_, strategy_, index_, params_, ties_);
    if (!t) {
        exhausted_ = true;
        return std::nullopt;
    }
    int idx = ch_->schema().ordinal_index(attr_);
    double raw = t->ordinal[static_cast<std::size_t>(idx)];
    pivot_ov_ = oriented(dir_, raw);

    pending_.clear();
    pending_pos_ = 0;
    if (ties_ == TieHandling::Crawl) {
        pending_ = crawl_ties(*ch_, attr_, raw, q_);  // ordered by id
        if (pending_.empty()) pending_.push_back(*t);
    } else {
        pending_.push_back(*t);
    }
    ++emitted_;
    return pending_[pending_pos_++];
}

}  // namespace rerank
