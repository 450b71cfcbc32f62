#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"

namespace mclab {

// Exact completion of a rank-1 matrix from exact observations.  Within a
// connected component of the observation graph every entry is pinned down by
// chaining ratios of observed values; across components nothing is known and
// the estimate is 0.  Magnitudes are carried in log-space with the sign kept
// separately, so long ratio chains cannot overflow.
struct Rank1Completion {
    std::size_t n = 0;
    std::size_t m = 0;
    // Gauge-fixed per-vertex factors: entry (i,a) = sign * exp(logmag sums).
    std::vector<double> row_logmag, col_logmag;
    std::vector<std::int8_t> row_sign, col_sign;
    // Component labels (dense, first-touch order, rows before columns).
    std::vector<std::size_t> row_comp, col_comp;
    std::vector<ComponentLabeling::Size> comp_sizes;

    bool determined(std::size_t i, std::size_t a) const {
        return row_comp[i] == col_comp[a];
    }
    double entry(std::size_t i, std::size_t a) const {
        if (!determined(i, a)) return 0.0;
        return static_cast<double>(row_sign[i] * col_sign[a]) *
               std::exp(row_logmag[i] + col_logmag[a]);
    }
    // Fraction of the n*m entries that are determined.
    double determined_fraction() const;
};

// Recursive rank-1 completion by spanning-tree ratio propagation.  Rejects
// observed zeros (the factor model here has no mass at zero) and raises an
// inconsistency error naming the offending entry when a non-tree observation
// contradicts the propagated values (exact for +-1 data, 1e-9 relative in
// log-magnitude otherwise).
Rank1Completion complete_rank1(const ObservationSet& obs);

// sqrt(1 - xi*zeta) * d0: the best RMSE any estimator can reach on rank-1
// instances at observation density epsilon, in the large-n limit.
double rank1_optimal_distortion(double epsilon, double alpha, double d0);

// Full metrics of a completion against a rank-1 truth in O(n + m + |E|):
// the overall RMSE decomposes per component, so no dense pass is needed.
DistortionReport rank1_report(const GroundTruthInstance& truth, const Rank1Completion& comp,
                              const ObservationSet& obs);

}  // namespace mclab
