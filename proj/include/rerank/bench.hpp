// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion, workload construction, the brute-force verification
// oracle, and the experiment driver that measures interface-query costs for
// every algorithm over a workload and reconciles them against the ledger.
#pragma once

#include <iosfwd>

#include "rerank/rerankmd.hpp"

namespace rerank {
namespace bench {

// --- schema and ranking specs (declarative text formats) -----------------

struct SchemaSpec {
    Schema schema;

    static SchemaSpec parse(std::istream& is);
    static SchemaSpec parse_file(const std::string& path);
    std::string serialize() const;
};

// Linear ranking expression: terms "w*ATTR" or bare "ATTR", joined with
// " + " or " - "; an optional leading "-" negates the first term.
struct RankingSpec {
    std::vector<RankingFunction::LinearTerm> terms;

    static RankingSpec parse(const std::string& expr);
    RankingFunction to_function() const { return RankingFunction::linear(terms); }
    std::string serialize() const;
};

// --- ingestion ------------------------------------------------------------

struct IngestOptions {
    enum class OutOfDomain { Clamp, Reject } out_of_domain = OutOfDomain::Clamp;
};

struct IngestResult {
    std::vector<Tuple> tuples;
    std::size_t rows = 0;
    std::size_t null_substitutions = 0;
    std::size_t clamped = 0;
};

IngestResult ingest_csv(std::istream& is, const Schema& schema, const IngestOptions& opts = {});
IngestResult ingest_csv_file(const std::string& path, const Schema& schema,
                             const IngestOptions& opts = {});

// --- the verification oracle ----------------------------------------------

// Exact top-h over direct tuple access; never touches any interface or
// ledger.
TopKResult brute_force_topk(std::span<const Tuple> tuples, const Schema& schema,
                            const SearchQuery& q, const RankingFunction& f, int h);

// --- workloads --------------------------------------------------------------

struct WorkloadEntry {
    SearchQuery query;
    std::string rank_expr;
    int h = 1;
};

struct WorkloadRecipe {
    std::uint64_t seed = 1;
    int entries = 16;
    double unfiltered_fraction = 0.25;
    bool multi_attribute = false;  // false: single ranking attribute
    int min_rank_attrs = 2;
    int max_rank_attrs = 3;
    int h = 1;
};

struct WorkloadSpec {
    std::vector<WorkloadEntry> entries;

    static WorkloadSpec parse(std::istream& is, const Schema& schema);
    std::string serialize() const;
};

WorkloadSpec generate_workload(const Schema& schema, const WorkloadRecipe& recipe);

// --- experiments -------------------------------------------------------------

extern const std::vector<std::string> kKnownAlgorithms;

struct ExperimentConfig {
    int system_k = 10;
    std::string system_ranking;  // expression, or "random:SEED"
    std::vector<std::string> algos;
    std::optional<double> index_c;
    std::optional<int> index_s;
    int repetitions = 1;
    std::uint64_t seed = 1;
    bool shared_state = true;  // share history and indexes across entries
    TieHandling ties = TieHandling::Assume;
};

struct CostRow {
    std::string algorithm;
    std::int64_t query_id = 0;
    int h = 1;
    long long search_queries = 0;
    long long index_queries = 0;
    long long total = 0;
};

struct CostReport {
    std::vector<CostRow> rows;
    std::string to_csv() const;
    std::string summary_json() const;
    double mean_total(const std::string& algo) const;
    double mean_search(const std::string& algo) const;
};

class VerificationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

SimulatedDatabase::SystemScorer make_system_scorer(const Schema& schema, const std::string& spec);

// Runs every (algorithm, entry) pair, verifies each answer against
// brute_force_topk (a mismatch throws VerificationError), and aggregates
// per-query interface costs.
CostReport run_experiment(const ExperimentConfig& cfg, const WorkloadSpec& wl,
                          const Schema& schema, const std::vector<Tuple>& data);

// --- synthetic data and randomized verification ----------------------------

Schema synth_schema(int m, bool grid, std::uint64_t seed = 0);
std::vector<Tuple> synth_uniform(const Schema& schema, std::size_t n, std::uint64_t seed);
std::vector<Tuple> sample_without_replacement(const std::vector<Tuple>& data, std::size_t size,
                                              std::uint64_t seed);

enum class Correlation { Correlated, AntiCorrelated, Random };

struct InstanceSpec {
    std::uint64_t seed = 1;
    std::size_t n = 200;
    int m = 2;
    int k = 5;
    int h = 3;
    Correlation corr = Correlation::Correlated;
    bool grid = false;
    bool general_fn = false;
};

struct RandomInstance {
    Schema schema;
    std::vector<Tuple> tuples;
    SearchQuery query;
    RankingFunction user_f;
    SimulatedDatabase::SystemScorer system;
    int system_k = 5;
    int h = 1;
    TieHandling ties = TieHandling::Assume;
};

RandomInstance make_random_instance(const InstanceSpec& spec);

struct ExactnessOutcome {
    int instances = 0;
    int failures = 0;
    std::string first_failure;
};

// Seeded randomized equivalence sweep: every multi-attribute strategy must
// reproduce the brute-force sequence exactly on each instance.
ExactnessOutcome exactness_sweep(int instances, std::uint64_t seed, std::ostream* log = nullptr);

}  // namespace bench
}  // namespace rerank
