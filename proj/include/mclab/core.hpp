#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mclab/common.hpp"

namespace mclab {

// Finite set of admissible factor values, sorted ascending, inside [-1, 1].
// `step` is set for the uniform grid {-1, -1+d, ..., 1-d, 1}.
struct DiscreteAlphabet {
    std::vector<double> points;
    std::optional<double> step;

    DiscreteAlphabet() = default;
    explicit DiscreteAlphabet(std::vector<double> pts, std::optional<double> spacing = {});

    // Uniform grid with N points and spacing 2/(N-1); N >= 2.
    static DiscreteAlphabet uniform(std::size_t n_points);
    // Uniform grid with spacing at most `delta` (snapped to 2/(N-1) so the
    // grid stays symmetric and hits both endpoints).
    static DiscreteAlphabet with_step(double delta);

    std::size_t size() const { return points.size(); }
    // Nearest point, ties rounded away from zero.
    double round(double x) const;
    bool contains(double x, double tol = 0.0) const;
};

// Distribution of one factor entry: discrete over an alphabet, or the
// continuous uniform density on [-1, 1].
struct FactorDistribution {
    enum class Kind { discrete, continuous_uniform };

    Kind kind = Kind::continuous_uniform;
    DiscreteAlphabet alphabet;       // discrete case
    std::vector<double> weights;     // aligned with alphabet.points
    std::string name;

    static FactorDistribution uniform_signs();                 // uniform on {-1,+1}
    static FactorDistribution uniform_ternary();               // uniform on {-1,0,+1}
    static FactorDistribution continuous_uniform();            // uniform on [-1,1]
    static FactorDistribution uniform_alphabet(DiscreteAlphabet a);
    static FactorDistribution discrete(DiscreteAlphabet a, std::vector<double> w);
    // Resolves a CLI-style name: "pm1", "ternary", "uniform", "alphabetN".
    static FactorDistribution named(const std::string& name);

    bool is_discrete() const { return kind == Kind::discrete; }
    double mean() const;
    double second_moment() const;
    // Inverse-CDF sample from a uniform [0,1) variate.
    double sample(double u01) const;
    void validate() const;
};

// Rank-1 distortion baseline D0 = sqrt(E[U^2] E[V^2]).
double rank1_baseline_d0(const FactorDistribution& p0, const FactorDistribution& q0);

// A random rank-r matrix M = U.V held in factored form. U is n x r (row
// vectors u_i) and V is r x m (column vectors v_a); entries of M are computed
// on demand so large instances never materialize n*m values.
struct GroundTruthInstance {
    std::size_t n = 0;
    std::size_t m = 0;
    double alpha = 1.0;
    std::size_t r = 1;
    std::vector<double> u;  // n*r, row-major per row vector
    std::vector<double> v;  // m*r, row-major per column vector
    FactorDistribution p0;
    FactorDistribution q0;
    std::uint64_t seed = 0;

    double entry(std::size_t i, std::size_t a) const {
        double s = 0.0;
        const double* ui = &u[i * r];
        const double* va = &v[a * r];
        for (std::size_t k = 0; k < r; ++k) s += ui[k] * va[k];
        return s;
    }
};

// m = round(n*alpha), ties to even.
std::size_t column_count(std::size_t n, double alpha);

GroundTruthInstance generate_instance(std::size_t n, double alpha, std::size_t r,
                                      const FactorDistribution& p0,
                                      const FactorDistribution& q0, std::uint64_t seed);

// Candidate factors the solvers mutate; same layout as GroundTruthInstance.
struct FactorAssignment {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t r = 1;
    std::vector<double> u;  // n*r
    std::vector<double> v;  // m*r
    std::optional<DiscreteAlphabet> alphabet;

    double entry(std::size_t i, std::size_t a) const {
        double s = 0.0;
        const double* ui = &u[i * r];
        const double* va = &v[a * r];
        for (std::size_t k = 0; k < r; ++k) s += ui[k] * va[k];
        return s;
    }
    void validate() const;
};

// Rounds every factor component to the alphabet with spacing <= delta; the
// product matrix moves by at most r*delta per entry.
FactorAssignment quantize(const FactorAssignment& assignment, double delta);

// Solver telemetry plus the three error metrics. When all of rmse, fit and
// prediction error are measured against the same truth,
//   rmse^2 * n*m = fit^2 * |E| + pred^2 * (n*m - |E|).
struct DistortionReport {
    double rmse = 0.0;
    double fit_error = 0.0;
    double prediction_error = 0.0;
    std::uint64_t steps = 0;
    std::vector<std::pair<std::uint64_t, double>> cost_trajectory;
    double wall_ms = 0.0;
};

// Read-only dense view used by the generic metrics.
struct MatrixRef {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::function<double(std::size_t, std::size_t)> at;
};

MatrixRef matrix_ref(const GroundTruthInstance& inst);
MatrixRef matrix_ref(const FactorAssignment& assignment);

struct ObservationSet;  // sampling.hpp

// Frobenius distance / sqrt(n*m) between the truth and an estimate.
double rmse(const GroundTruthInstance& truth, const MatrixRef& estimate);

// Same metric via the factored forms, in O((n+m) r^2) by Gram matrices.
double rmse_factors(const GroundTruthInstance& truth, const FactorAssignment& estimate);

// RMSE restricted to the observed entries / to their complement. When
// `holdout` is given the prediction error averages over it instead of over
// the complement of E.
std::pair<double, double> fit_and_prediction_error(const GroundTruthInstance& truth,
                                                   const MatrixRef& estimate,
                                                   const ObservationSet& obs,
                                                   const ObservationSet* holdout = nullptr);

// All r-tuples over the alphabet in lexicographic order (first coordinate
// slowest); guarded against combinatorial blowup by `limit`.
std::vector<std::vector<double>> enumerate_power(const DiscreteAlphabet& alphabet,
                                                 std::size_t r, std::size_t limit = 1000000);

// Factored fast path: the complement average falls out of the total squared
// error (Gram identity) minus the observed part, so no dense pass is needed.
std::pair<double, double> fit_and_prediction_error(const GroundTruthInstance& truth,
                                                   const FactorAssignment& estimate,
                                                   const ObservationSet& obs,
                                                   const ObservationSet* holdout = nullptr);

}  // namespace mclab
