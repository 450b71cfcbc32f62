#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"

namespace mclab {

// Alternating ridge regression on the factors: each half-sweep solves every
// row (resp. column) block exactly, so the energy never increases.
struct DescentConfig {
    std::size_t r = 1;
    double lambda = -1.0;  // < 0 -> 0.1 * |E| / (n + m)
    std::size_t sweeps = 50;
    double init_scale = 0.5;
    std::uint64_t seed = 0;
    const ObservationSet* holdout = nullptr;  // prediction error source, optional
    unsigned jobs = 1;                        // parallelism within half-sweeps
};

// Sum of squared misfits over E plus lambda * (||U||_F^2 + ||V||_F^2).
double energy(const FactorAssignment& assignment, const ObservationSet& obs, double lambda);

// Edge lists by row and by column, built once per fit.
struct DescentWorkspace {
    std::vector<std::size_t> row_off, col_off;
    std::vector<std::uint32_t> row_edge, col_edge;
};
DescentWorkspace make_descent_workspace(const ObservationSet& obs);

// Exact minimization of the energy over one row factor (resp. column), all
// other factors fixed: an r x r ridge normal solve over the vertex's
// incident edges, minimal-norm when the system is singular.  Returns the
// relative residual of the normal equations at the new block.
double update_row(std::size_t i, FactorAssignment& assignment, const ObservationSet& obs,
                  const DescentWorkspace& ws, double lambda);
double update_col(std::size_t a, FactorAssignment& assignment, const ObservationSet& obs,
                  const DescentWorkspace& ws, double lambda);

struct SweepStats {
    double fit_error = 0.0;
    double prediction_error = 0.0;
    double energy = 0.0;
};

struct DescentResult {
    FactorAssignment assignment;
    DistortionReport report;
    std::vector<SweepStats> trajectory;  // one entry per sweep
    double lambda_used = 0.0;
};

// Full fit: iid uniform [-init_scale, init_scale] initialization, then
// `sweeps` passes of all row updates followed by all column updates, logging
// (fit, prediction, energy) after each sweep.  Against a known truth the
// prediction error averages over the unobserved complement (or the holdout
// when given); without a truth it requires a holdout and reports NaN rmse.
DescentResult run_descent(const GroundTruthInstance& truth, const ObservationSet& obs,
                          const DescentConfig& config);
DescentResult run_descent(const ObservationSet& obs, const DescentConfig& config);

}  // namespace mclab
