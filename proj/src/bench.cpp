// SPDX-License-Identifier: Apache-2.0
#include "rerank/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace rerank {
namespace bench {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_bound(const std::string& tok) {
    if (tok == "inf" || tok == "+inf") return kPosInf;
    if (tok == "-inf") return kNegInf;
    return std::stod(tok);
}

std::string bound_str(double v) {
    if (v == kPosInf) return "inf";
    if (v == kNegInf) return "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

SchemaSpec SchemaSpec::parse(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || trim(line) != "format_version 1")
        throw std::runtime_error("schema spec: missing 'format_version 1' header");
    std::vector<OrdinalDomain> ords;
    std::vector<CategoricalDomain> cats;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "ordinal") {
            OrdinalDomain d;
            std::string shape;
            ls >> d.name >> d.lo >> d.hi >> shape;
            if (shape == "grid") {
                d.kind = DomainKind::Grid;
                ls >> d.step;
            } else if (shape == "continuous") {
                d.kind = DomainKind::Continuous;
            } else {
                throw std::runtime_error("schema spec: unknown domain shape: " + shape);
            }
            std::string extra;
            while (ls >> extra) {
                if (extra.rfind("null=", 0) == 0) {
                    std::string v = extra.substr(5);
                    if (v == "max")
                        d.null_substitute = d.hi;
                    else if (v == "min")
                        d.null_substitute = d.lo;
                    else
                        d.null_substitute = std::stod(v);
                }
            }
            ords.push_back(std::move(d));
        } else if (kind == "categorical") {
            CategoricalDomain c;
            std::string values;
            ls >> c.name >> values;
            c.values = split(values, ',');
            cats.push_back(std::move(c));
        } else {
            throw std::runtime_error("schema spec: unknown record kind: " + kind);
        }
    }
    return SchemaSpec{Schema(std::move(ords), std::move(cats))};
}

SchemaSpec SchemaSpec::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("schema spec: cannot open " + path);
    return parse(f);
}

std::string SchemaSpec::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "format_version 1\n";
    for (const auto& d : schema.ordinals()) {
        os << "ordinal " << d.name << ' ' << d.lo << ' ' << d.hi << ' '
           << (d.is_grid() ? "grid" : "continuous");
        if (d.is_grid()) os << ' ' << d.step;
        if (d.null_substitute) os << " null=" << *d.null_substitute;
        os << '\n';
    }
    for (const auto& c : schema.categoricals()) {
        os << "categorical " << c.name << ' ';
        for (std::size_t i = 0; i < c.values.size(); ++i)
            os << (i ? "," : "") << c.values[i];
        os << '\n';
    }
    return os.str();
}

RankingSpec RankingSpec::parse(const std::string& expr) {
    std::string body = trim(expr);
    if (body.empty()) throw std::runtime_error("ranking spec: empty expression");
    std::vector<std::pair<int, std::string>> signed_terms;  // sign, term text
    int sign = 1;
    if (body[0] == '-') {
        sign = -1;
        body = trim(body.substr(1));
    }
    std::size_t pos = 0;
    while (true) {
        std::size_t plus = body.find(" + ", pos);
        std::size_t minus = body.find(" - ", pos);
        std::size_t cut = std::min(plus, minus);
        signed_terms.emplace_back(sign, trim(body.substr(pos, cut - pos)));
        if (cut == std::string::npos) break;
        sign = cut == plus ? 1 : -1;
        pos = cut + 3;
    }
    RankingSpec spec;
    for (auto& [sgn, term] : signed_terms) {
        if (term.empty()) throw std::runtime_error("ranking spec: empty term");
        double w = 1.0;
        std::string attr = term;
        std::size_t star = term.find('*');
        if (star != std::string::npos) {
            w = std::stod(trim(term.substr(0, star)));
            attr = trim(term.substr(star + 1));
        }
        if (attr.empty()) throw std::runtime_error("ranking spec: term lacks an attribute");
        spec.terms.push_back({attr, sgn * w});
    }
    return spec;
}

std::string RankingSpec::serialize() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < terms.size(); ++i) {
        double w = terms[i].weight;
        if (i == 0) {
            if (w < 0) os << '-';
        } else {
            os << (w < 0 ? " - " : " + ");
        }
        os << std::fabs(w) << '*' << terms[i].attr;
    }
    return os.str();
}

IngestResult ingest_csv(std::istream& is, const Schema& schema, const IngestOptions& opts) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("csv: empty input");
    std::vector<std::string> header = split(trim(line), ',');
    std::vector<int> ord_col(schema.ordinal_count(), -1);
    std::vector<int> cat_col(schema.categorical_count(), -1);
    for (std::size_t c = 0; c < header.size(); ++c) {
        std::string name = trim(header[c]);
        int oi = schema.ordinal_index(name);
        if (oi >= 0) ord_col[static_cast<std::size_t>(oi)] = static_cast<int>(c);
        int ci = schema.categorical_index(name);
        if (ci >= 0) cat_col[static_cast<std::size_t>(ci)] = static_cast<int>(c);
    }
    for (std::size_t i = 0; i < ord_col.size(); ++i)
        if (ord_col[i] < 0)
            throw std::runtime_error("csv: header lacks attribute " + schema.ordinal(i).name);
    for (std::size_t i = 0; i < cat_col.size(); ++i)
        if (cat_col[i] < 0)
            throw std::runtime_error("csv: header lacks attribute " + schema.categorical(i).name);

    IngestResult res;
    std::size_t row_no = 1;
    while (std::getline(is, line)) {
        ++row_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split(line, ',');
        Tuple t;
        t.id = static_cast<TupleId>(res.tuples.size());
        t.ordinal.resize(schema.ordinal_count());
        t.categorical.resize(schema.categorical_count());
        for (std::size_t i = 0; i < schema.ordinal_count(); ++i) {
            const OrdinalDomain& dom = schema.ordinal(i);
            std::size_t c = static_cast<std::size_t>(ord_col[i]);
            if (c >= cells.size()) throw std::runtime_error("csv: short row " + std::to_string(row_no));
            std::string cell = trim(cells[c]);
            double v;
            if (cell.empty() || cell == "NULL" || cell == "NA") {
                v = dom.null_value();
                ++res.null_substitutions;
            } else {
                try {
                    v = std::stod(cell);
                } catch (const std::exception&) {
                    throw std::runtime_error("csv: unparseable value '" + cell + "' at row " +
                                             std::to_string(row_no));
                }
            }
            if (v < dom.lo || v > dom.hi) {
                if (opts.out_of_domain == IngestOptions::OutOfDomain::Reject)
                    throw std::runtime_error("csv: value out of domain at row " +
                                             std::to_string(row_no));
                v = std::clamp(v, dom.lo, dom.hi);
                ++res.clamped;
            }
            t.ordinal[i] = v;
        }
        for (std::size_t i = 0; i < schema.categorical_count(); ++i) {
            std::size_t c = static_cast<std::size_t>(cat_col[i]);
            if (c >= cells.size()) throw std::runtime_error("csv: short row " + std::to_string(row_no));
            t.categorical[i] = trim(cells[c]);
        }
        res.tuples.push_back(std::move(t));
        ++res.rows;
    }
    return res;
}

IngestResult ingest_csv_file(const std::string& path, const Schema& schema,
                             const IngestOptions& opts) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("csv: cannot open " + path);
    return ingest_csv(f, schema, opts);
}

TopKResult brute_force_topk(std::span<const Tuple> tuples, const Schema& schema,
                            const SearchQuery& q, const RankingFunction& f, int h) {
    TopKResult res;
    std::vector<RankedTuple> pool;
    for (const auto& t : tuples)
        if (matches(schema, q, t)) pool.push_back(RankedTuple{t, f.score(schema, t)});
    std::sort(pool.begin(), pool.end(),
              [](const RankedTuple& a, const RankedTuple& b) { return ranked_less(a, b); });
    if (pool.size() > static_cast<std::size_t>(h)) pool.resize(static_cast<std::size_t>(h));
    res.short_of_h = pool.size() < static_cast<std::size_t>(h);
    res.tuples = std::move(pool);
    return res;
}

WorkloadSpec WorkloadSpec::parse(std::istream& is, const Schema& schema) {
    std::string line;
    if (!std::getline(is, line) || trim(line) != "format_version 1")
        throw std::runtime_error("workload: missing 'format_version 1' header");
    WorkloadSpec wl;
    WorkloadEntry cur;
    bool in_entry = false;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "entry") {
            if (in_entry) throw std::runtime_error("workload: nested entry");
            cur = WorkloadEntry{};
            std::string tok;
            while (ls >> tok)
                if (tok.rfind("h=", 0) == 0) cur.h = std::stoi(tok.substr(2));
            in_entry = true;
        } else if (kind == "rank") {
            std::string rest;
            std::getline(ls, rest);
            cur.rank_expr = trim(rest);
        } else if (kind == "range") {
            RangePredicate r;
            std::string lo, hi;
            int lo_open = 1, hi_open = 1;
            ls >> r.attr >> lo >> hi >> lo_open >> hi_open;
            r.lower = parse_bound(lo);
            r.upper = parse_bound(hi);
            r.lower_open = lo_open != 0;
            r.upper_open = hi_open != 0;
            cur.query.ranges.push_back(std::move(r));
        } else if (kind == "eq") {
            EqualityPredicate e;
            ls >> e.attr >> e.value;
            cur.query.equalities.push_back(std::move(e));
        } else if (kind == "end") {
            if (!in_entry) throw std::runtime_error("workload: stray end");
            cur.query.validate(schema);
            if (cur.rank_expr.empty()) throw std::runtime_error("workload: entry lacks rank");
            wl.entries.push_back(std::move(cur));
            in_entry = false;
        } else {
            throw std::runtime_error("workload: unknown record kind: " + kind);
        }
    }
    if (in_entry) throw std::runtime_error("workload: unterminated entry");
    return wl;
}

std::string WorkloadSpec::serialize() const {
    std::ostringstream os;
    os << "format_version 1\n";
    for (const auto& e : entries) {
        os << "entry h=" << e.h << '\n';
        os << "rank " << e.rank_expr << '\n';
        for (const auto& r : e.query.ranges)
            os << "range " << r.attr << ' ' << bound_str(r.lower) << ' ' << bound_str(r.upper)
               << ' ' << (r.lower_open ? 1 : 0) << ' ' << (r.upper_open ? 1 : 0) << '\n';
        for (const auto& q : e.query.equalities) os << "eq " << q.attr << ' ' << q.value << '\n';
        os << "end\n";
    }
    return os.str();
}

WorkloadSpec generate_workload(const Schema& schema, const WorkloadRecipe& recipe) {
    std::mt19937_64 rng(recipe.seed);
    WorkloadSpec wl;
    int n = recipe.entries;
    if (n <= 0) return wl;

    // exact unfiltered count, assigned to a seeded shuffle of positions
    int unfiltered = static_cast<int>(std::lround(recipe.unfiltered_fraction * n));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> is_unfiltered(static_cast<std::size_t>(n), false);
    for (int i = 0; i < unfiltered; ++i) is_unfiltered[static_cast<std::size_t>(order[i])] = true;

    const std::size_t m = schema.ordinal_count();
    for (int e = 0; e < n; ++e) {
        WorkloadEntry entry;
        entry.h = recipe.h;

        // ranking attributes and weights
        std::size_t attrs =
            recipe.multi_attribute
                ? static_cast<std::size_t>(std::uniform_int_distribution<int>(
                      recipe.min_rank_attrs, recipe.max_rank_attrs)(rng))
                : 1;
        attrs = std::min(attrs, m);
        std::vector<std::size_t> idx(m);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        RankingSpec rspec;
        for (std::size_t i = 0; i < attrs; ++i) {
            double w = recipe.multi_attribute
                           ? std::uniform_real_distribution<double>(0.0, 1.0)(rng)
                           : 1.0;
            if (w == 0.0) w = 0.5;
            rspec.terms.push_back({schema.ordinal(idx[i]).name, w});
        }
        entry.rank_expr = rspec.serialize();

        if (!is_unfiltered[static_cast<std::size_t>(e)]) {
            // one or two categorical equalities plus an occasional range
            if (schema.categorical_count() > 0) {
                int nf = std::uniform_int_distribution<int>(1, 2)(rng);
                std::vector<std::size_t> cidx(schema.categorical_count());
                std::iota(cidx.begin(), cidx.end(), 0);
                std::shuffle(cidx.begin(), cidx.end(), rng);
                for (int i = 0; i < nf && i < static_cast<int>(cidx.size()); ++i) {
                    const auto& cat = schema.categorical(cidx[static_cast<std::size_t>(i)]);
                    std::size_t v = std::uniform_int_distribution<std::size_t>(
                        0, cat.values.size() - 1)(rng);
                    entry.query.equalities.push_back({cat.name, cat.values[v]});
                }
            }
            if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.4) {
                const auto& dom = schema.ordinal(
                    std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
                double a = std::uniform_real_distribution<double>(dom.lo, dom.hi)(rng);
                double b = std::uniform_real_distribution<double>(dom.lo, dom.hi)(rng);
                if (a > b) std::swap(a, b);
                if (dom.is_grid()) {
                    a = dom.snap_down(std::max(a, dom.lo));
                    b = dom.snap_up(std::min(b, dom.hi));
                }
                entry.query.ranges.push_back(RangePredicate::closed(dom.name, a, b));
            }
        }
        wl.entries.push_back(std::move(entry));
    }
    return wl;
}

const std::vector<std::string> kKnownAlgorithms = {
    "1d-baseline", "1d-binary", "1d-rerank", "md-baseline", "md-binary", "md-rerank", "ta-1d"};

SimulatedDatabase::SystemScorer make_system_scorer(const Schema& schema, const std::string& spec) {
    if (spec.rfind("random:", 0) == 0) {
        std::uint64_t seed = std::stoull(spec.substr(7));
        return [seed](const Tuple& t) {
            std::uint64_t h = static_cast<std::uint64_t>(t.id) * 0x9e3779b97f4a7c15ull + seed;
            h ^= h >> 30;
            h *= 0xbf58476d1ce4e5b9ull;
            h ^= h >> 27;
            return static_cast<double>(h % 1000003ull);
        };
    }
    RankingFunction f = RankingSpec::parse(spec).to_function();
    return [f, &schema](const Tuple& t) { return f.score(schema, t); };
}

namespace {

bool is_1d_algo(const std::string& a) { return a.rfind("1d-", 0) == 0; }

StrategyMD md_strategy(const std::string& a) {
    if (a == "md-baseline") return StrategyMD::Baseline;
    if (a == "md-binary") return StrategyMD::Binary;
    if (a == "md-rerank") return StrategyMD::Rerank;
    if (a == "ta-1d") return StrategyMD::TA;
    throw std::invalid_argument("unknown algorithm: " + a);
}

Strategy1D strategy_1d(const std::string& a) {
    if (a == "1d-baseline") return Strategy1D::Baseline;
    if (a == "1d-binary") return Strategy1D::Binary;
    if (a == "1d-rerank") return Strategy1D::Rerank;
    throw std::invalid_argument("unknown algorithm: " + a);
}

std::string diff_text(const TopKResult& got, const TopKResult& want) {
    std::ostringstream os;
    os.precision(17);
    os << "expected ids:";
    for (const auto& rt : want.tuples) os << ' ' << rt.tuple.id << "(" << rt.score << ")";
    os << "; got ids:";
    for (const auto& rt : got.tuples) os << ' ' << rt.tuple.id << "(" << rt.score << ")";
    return os.str();
}

}  // namespace

CostReport run_experiment(const ExperimentConfig& cfg, const WorkloadSpec& wl,
                          const Schema& schema, const std::vector<Tuple>& data) {
    CostReport report;
    for (const auto& algo : cfg.algos) {
        SimulatedDatabase db(schema, data, make_system_scorer(schema, cfg.system_ranking),
                             cfg.system_k);
        HistoryStore hist(schema);
        MdIndexes indexes;
        indexes.params = DenseIndexParams::defaults(data.size(), cfg.system_k);
        if (cfg.index_c) indexes.params.c = *cfg.index_c;
        if (cfg.index_s) indexes.params.s = *cfg.index_s;

        for (std::size_t e = 0; e < wl.entries.size(); ++e) {
            const WorkloadEntry& entry = wl.entries[e];
            if (!cfg.shared_state) {
                hist = HistoryStore(schema);
                indexes.one_d = DenseIndex1D();
                indexes.md = DenseIndexMD();
            }
            RankingFunction f = RankingSpec::parse(entry.rank_expr).to_function();
            AccessChannel ch(db, hist,
                             AccessContext{algo, static_cast<std::int64_t>(e), Phase::Search});

            TopKResult got;
            if (is_1d_algo(algo)) {
                if (f.dim() != 1)
                    throw std::invalid_argument("1d algorithms need a single ranking attribute");
                CanonicalScorer sc(schema, f);
                SortDir dir = sc.negated(0) ? SortDir::Desc : SortDir::Asc;
                GetNext1D session(ch, entry.query, f.ranked_attrs()[0], strategy_1d(algo), dir,
                                  cfg.ties, &indexes.one_d, &indexes.params);
                while (static_cast<int>(got.tuples.size()) < entry.h) {
                    auto t = session.next();
                    if (!t) {
                        got.short_of_h = true;
                        break;
                    }
                    got.tuples.push_back(RankedTuple{*t, f.score(schema, *t)});
                }
            } else {
                MdOptions opts;
                opts.ties = cfg.ties;
                got = md_topk(ch, entry.query, f, md_strategy(algo), entry.h, &indexes, opts);
            }

            TopKResult want = brute_force_topk(data, schema, entry.query, f, entry.h);
            bool ok = got.tuples.size() == want.tuples.size();
            for (std::size_t i = 0; ok && i < got.tuples.size(); ++i)
                ok = got.tuples[i].tuple.id == want.tuples[i].tuple.id;
            if (!ok)
                throw VerificationError("verification failed: algorithm " + algo + ", query " +
                                        std::to_string(e) + ": " + diff_text(got, want));

            CostRow row;
            row.algorithm = algo;
            row.query_id = static_cast<std::int64_t>(e);
            row.h = entry.h;
            row.search_queries =
                db.ledger().count(algo, static_cast<std::int64_t>(e), Phase::Search);
            row.index_queries =
                db.ledger().count(algo, static_cast<std::int64_t>(e), Phase::IndexBuild);
            row.total = row.search_queries + row.index_queries;
            report.rows.push_back(std::move(row));
        }

        // reconciliation: per-query rows must add up to the ledger
        long long sum = 0;
        for (const auto& r : report.rows)
            if (r.algorithm == algo) sum += r.total;
        if (sum != db.ledger().total())
            throw std::logic_error("ledger reconciliation failed for " + algo);
    }
    return report;
}

std::string CostReport::to_csv() const {
    std::ostringstream os;
    os << "algorithm,query_id,h,search_queries,index_queries,total\n";
    for (const auto& r : rows)
        os << r.algorithm << ',' << r.query_id << ',' << r.h << ',' << r.search_queries << ','
           << r.index_queries << ',' << r.total << '\n';
    return os.str();
}

double CostReport::mean_total(const std::string& algo) const {
    long long sum = 0;
    int n = 0;
    for (const auto& r : rows)
        if (r.algorithm == algo) {
            sum += r.total;
            ++n;
        }
    return n ? static_cast<double>(sum) / n : 0.0;
}

double CostReport::mean_search(const std::string& algo) const {
    long long sum = 0;
    int n = 0;
    for (const auto& r : rows)
        if (r.algorithm == algo) {
            sum += r.search_queries;
            ++n;
        }
    return n ? static_cast<double>(sum) / n : 0.0;
}

std::string CostReport::summary_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    std::map<std::string, std::vector<const CostRow*>> by_algo;
    for (const auto& r : rows) by_algo[r.algorithm].push_back(&r);
    for (const auto& [algo, rs] : by_algo) {
        double search = 0, index = 0;
        long long max_total = 0;
        for (const CostRow* r : rs) {
            search += static_cast<double>(r->search_queries);
            index += static_cast<double>(r->index_queries);
            max_total = std::max(max_total, r->total);
        }
        double n = static_cast<double>(rs.size());
        j["algorithms"][algo] = {
            {"queries", rs.size()},
            {"mean_search", search / n},
            {"mean_index_build", index / n},
            {"mean_total_inclusive", (search + index) / n},
            {"mean_total_exclusive", search / n},
            {"max_total", max_total},
        };
    }
    return j.dump(2);
}

Schema synth_schema(int m, bool grid, std::uint64_t seed) {
    (void)seed;
    std::vector<OrdinalDomain> ords;
    for (int i = 0; i < m; ++i) {
        OrdinalDomain d;
        d.name = "A" + std::to_string(i + 1);
        if (grid) {
            d.lo = 0.0;
            d.hi = 200.0;
            d.kind = DomainKind::Grid;
            d.step = 1.0;
        } else {
            d.lo = 0.0;
            d.hi = 100.0;
            d.kind = DomainKind::Continuous;
        }
        ords.push_back(std::move(d));
    }
    std::vector<CategoricalDomain> cats;
    cats.push_back(CategoricalDomain{"C1", {"a", "b", "c", "d"}});
    return Schema(std::move(ords), std::move(cats));
}

std::vector<Tuple> synth_uniform(const Schema& schema, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tuple> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tuple t;
        t.id = static_cast<TupleId>(i);
        for (const auto& d : schema.ordinals()) {
            double v = std::uniform_real_distribution<double>(d.lo, d.hi)(rng);
            if (d.is_grid()) v = d.snap_down(v);
            t.ordinal.push_back(v);
        }
        for (const auto& c : schema.categoricals()) {
            std::size_t v =
                std::uniform_int_distribution<std::size_t>(0, c.values.size() - 1)(rng);
            t.categorical.push_back(c.values[v]);
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<Tuple> sample_without_replacement(const std::vector<Tuple>& data, std::size_t size,
                                              std::uint64_t seed) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    size = std::min(size, data.size());
    std::vector<Tuple> out;
    out.reserve(size);
    for (std::size_t i = 0; i < size; ++i) out.push_back(data[idx[i]]);
    std::sort(out.begin(), out.end(), [](const Tuple& a, const Tuple& b) { return a.id < b.id; });
    return out;
}

RandomInstance make_random_instance(const InstanceSpec& spec) {
    RandomInstance inst;
    inst.schema = synth_schema(spec.m, spec.grid);
    inst.tuples = synth_uniform(inst.schema, spec.n, spec.seed * 7919 + 13);
    inst.system_k = spec.k;
    inst.h = spec.h;
    inst.ties = spec.grid ? TieHandling::Crawl : TieHandling::Assume;

    std::mt19937_64 rng(spec.seed * 104729 + 1);
    const std::size_t m = static_cast<std::size_t>(spec.m);
    std::vector<RankingFunction::LinearTerm> terms;
    std::vector<Preference> prefs;
    std::vector<double> weights;
    for (std::size_t i = 0; i < m; ++i) {
        double w = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
        bool larger = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.35;
        terms.push_back({inst.schema.ordinal(i).name, larger ? -w : w});
        prefs.push_back(larger ? Preference::LargerBetter : Preference::SmallerBetter);
        weights.push_back(w);
    }
    if (spec.general_fn) {
        // nonlinear but monotone under the drawn preference orders
        std::vector<std::string> attrs;
        for (std::size_t i = 0; i < m; ++i) attrs.push_back(inst.schema.ordinal(i).name);
        std::vector<int> flip;
        for (auto p : prefs) flip.push_back(p == Preference::LargerBetter ? -1 : 1);
        auto ws = weights;
        inst.user_f = RankingFunction::general(
            attrs, prefs, [ws, flip](std::span<const double> v) {
                double s = 0.0, mx = -1e300;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    double c = flip[i] * v[i];
                    s += ws[i] * c;
                    mx = std::max(mx, ws[i] * c);
                }
                return s + 0.25 * mx;
            });
    } else {
        inst.user_f = RankingFunction::linear(terms);
    }

    // hidden system ordering
    const Schema& schema = inst.schema;
    switch (spec.corr) {
        case Correlation::Correlated: {
            RankingFunction f = inst.user_f;
            inst.system = [f, &schema](const Tuple& t) { return f.score(schema, t); };
            break;
        }
        case Correlation::AntiCorrelated: {
            RankingFunction f = inst.user_f;
            inst.system = [f, &schema](const Tuple& t) { return -f.score(schema, t); };
            break;
        }
        case Correlation::Random: {
            std::uint64_t seed = spec.seed;
            inst.system = [seed](const Tuple& t) {
                std::uint64_t h = static_cast<std::uint64_t>(t.id) * 0x9e3779b97f4a7c15ull + seed;
                h ^= h >> 30;
                h *= 0xbf58476d1ce4e5b9ull;
                h ^= h >> 27;
                return static_cast<double>(h % 1000003ull);
            };
            break;
        }
    }

    // user query: mixed filtered / range / unfiltered
    double roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (roll < 0.5) {
        const auto& cat = inst.schema.categorical(0);
        std::size_t v = std::uniform_int_distribution<std::size_t>(0, cat.values.size() - 1)(rng);
        inst.query.equalities.push_back({cat.name, cat.values[v]});
    }
    if (roll >= 0.3 && roll < 0.8) {
        const auto& dom = inst.schema.ordinal(
            std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
        double a = std::uniform_real_distribution<double>(dom.lo, dom.hi)(rng);
        double b = std::uniform_real_distribution<double>(dom.lo, dom.hi)(rng);
        if (a > b) std::swap(a, b);
        if (b - a < dom.width() * 0.2) b = std::min(dom.hi, a + dom.width() * 0.2);
        if (dom.is_grid()) {
            a = dom.snap_down(a);
            b = dom.snap_up(b);
        }
        inst.query.ranges.push_back(RangePredicate::closed(dom.name, a, b));
    }
    return inst;
}

ExactnessOutcome exactness_sweep(int instances, std::uint64_t seed, std::ostream* log) {
    ExactnessOutcome out;
    const int ms[] = {2, 3, 4};
    const int ks[] = {1, 5, 10};
    const Correlation corrs[] = {Correlation::Correlated, Correlation::AntiCorrelated,
                                 Correlation::Random};
    const StrategyMD strategies[] = {StrategyMD::Baseline, StrategyMD::Binary, StrategyMD::Rerank,
                                     StrategyMD::TA};
    const char* names[] = {"md-baseline", "md-binary", "md-rerank", "ta-1d"};

    std::mt19937_64 rng(seed);
    for (int i = 0; i < instances; ++i) {
        InstanceSpec spec;
        spec.seed = rng();
        spec.m = ms[i % 3];
        spec.k = ks[(i / 3) % 3];
        spec.corr = corrs[(i / 9) % 3];
        spec.h = 1 + static_cast<int>(rng() % 10);
        spec.grid = (i % 11) == 10;
        spec.general_fn = (i % 7) == 6;
        std::size_t base = 40 + static_cast<std::size_t>(rng() % 260);
        spec.n = (i % 13 == 12) ? 1000 : base;

        RandomInstance inst = make_random_instance(spec);
        TopKResult want =
            brute_force_topk(inst.tuples, inst.schema, inst.query, inst.user_f, inst.h);

        for (int s = 0; s < 4; ++s) {
            SimulatedDatabase db(inst.schema, inst.tuples, inst.system, inst.system_k);
            HistoryStore hist(inst.schema);
            MdIndexes indexes;
            indexes.params =
                DenseIndexParams::defaults(inst.tuples.size(), inst.system_k);
            AccessChannel ch(db, hist, AccessContext{names[s], i, Phase::Search});
            MdOptions opts;
            opts.ties = inst.ties;
            TopKResult got;
            try {
                got = md_topk(ch, inst.query, inst.user_f, strategies[s], inst.h, &indexes, opts);
            } catch (const std::exception& ex) {
                ++out.failures;
                if (out.first_failure.empty())
                    out.first_failure = std::string("instance ") + std::to_string(i) + " " +
                                        names[s] + " threw: " + ex.what();
                continue;
            }
            bool ok = got.tuples.size() == want.tuples.size();
            for (std::size_t r = 0; ok && r < got.tuples.size(); ++r)
                ok = got.tuples[r].tuple.id == want.tuples[r].tuple.id;
            if (!ok) {
                ++out.failures;
                if (out.first_failure.empty())
                    out.first_failure = std::string("instance ") + std::to_string(i) + " " +
                                        names[s] + ": " + diff_text(got, want);
                if (log)
                    *log << "MISMATCH instance " << i << " algo " << names[s] << " seed "
                         << spec.seed << ": " << diff_text(got, want) << '\n';
            }
        }
        ++out.instances;
        if (log && (i + 1) % 50 == 0) *log << "checked " << (i + 1) << " instances\n";
    }
    return out;
}

}  // namespace bench
}  // namespace rerank
