#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mclab/als.hpp"
#include "mclab/bounds.hpp"
#include "mclab/core.hpp"
#include "mclab/sampling.hpp"
#include "mclab/walkrank.hpp"

namespace mclab {

// Sparse rating triples read from a text file.
struct RatingTriples {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> entries;
    std::pair<double, double> value_range{-1.0, 1.0};  // source scale
};

struct TripleFormat {
    char delimiter = 0;  // 0 = any run of whitespace
    int index_base = 0;  // 0 or 1
    std::pair<double, double> value_range{-1.0, 1.0};
};

// Parses `<row><delim><col><delim><value>` lines ('#' starts a comment),
// rescales values affinely from value_range onto [-1, 1], validates indices
// and duplicates.  Errors carry the 1-based line number.
RatingTriples ingest_triples(const std::string& path, const TripleFormat& format);

// Writes triples in the same format (values restored to the source scale).
void emit_triples(const std::string& path, const RatingTriples& triples,
                  const TripleFormat& format);

// Converts ingested triples into an observation set on their full grid.
ObservationSet observations_from_triples(const RatingTriples& triples);

// The three-way comparison protocol: (0) the data as ingested, (1) the same
// revealed set with iid uniform [-1,1] values, (2) the same revealed set
// with values from a freshly generated rank-r instance.
std::array<ObservationSet, 3> make_comparison_matrices(
    const RatingTriples& triples, std::size_t r, std::uint64_t seed,
    const FactorDistribution& fresh_dist = FactorDistribution::continuous_uniform());

enum class Algorithm { rank1, walkrank, als };
Algorithm algorithm_from_name(const std::string& name);
std::string algorithm_name(Algorithm a);

// A full sweep: the cartesian grid over (n, alpha, r, epsilon), each point
// run on instances_per_point fresh instances.
struct ExperimentSpec {
    std::vector<std::size_t> n_grid{1000};
    std::vector<double> alpha_grid{1.0};
    std::vector<std::size_t> r_grid{1};
    std::vector<double> epsilon_grid{2.0};
    Algorithm algorithm = Algorithm::rank1;
    std::string p0_name = "pm1";
    std::string q0_name = "pm1";
    std::size_t instances_per_point = 10;
    std::uint64_t seed_base = 0;
    unsigned jobs = 1;
    bool timings = false;   // fill wall_ms (breaks byte-identical reruns)
    std::string output;     // CSV destination, used by the CLI

    // Search settings (walkrank).
    double delta = 0.0;
    double rho = 0.1;
    std::uint64_t max_steps = 0;
    std::uint64_t target_cost = 0;
    double quantize_step = 0.0;  // >0: search the step grid with widened delta

    // Fit settings (als).
    double lambda = -1.0;
    std::size_t sweeps = 50;
    double init_scale = 0.5;
    std::size_t holdout = 0;  // entries withheld for prediction error; 0 = complement

    void validate() const;
    std::string canonical_json() const;  // round-trippable, key-sorted
    static ExperimentSpec from_json_file(const std::string& path);
    static ExperimentSpec from_json_text(const std::string& text);
};

// One emitted CSV row; empty optionals print as empty fields.
struct ExperimentRow {
    std::size_t n = 0, m = 0;
    double alpha = 0.0;
    std::size_t r = 0;
    double epsilon = 0.0;
    std::string algorithm;
    std::uint64_t seed = 0;
    std::optional<double> rmse, fit_error, prediction_error;
    std::optional<std::uint64_t> steps;
    std::optional<double> wall_ms;
    std::optional<double> bound_theorem1, bound_discrete, bound_lower, bound_rank1opt;
    std::string error;  // per-run failure message, row otherwise empty
};

struct ExperimentResult {
    std::vector<ExperimentRow> rows;       // deterministic (grid, instance) order
    std::string csv;                       // rendered rows
    std::string aggregate_csv;             // per-point mean/stderr companion
    std::string config_hash;               // hex digest of the canonical spec
    std::size_t failed_runs = 0;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

// RFC-4180-style field quoting (quotes only when needed).
std::string csv_escape(const std::string& field);
// Shortest round-trip decimal rendering of a double.
std::string format_double(double x);

}  // namespace mclab
