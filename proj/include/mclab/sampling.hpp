#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mclab/core.hpp"

namespace mclab {

// The revealed entries E together with their values; doubles as the edge
// list of the bipartite observation graph G = (R, C, E).
struct ObservationSet {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::vector<double> values;
    double epsilon = 0.0;  // |E| / n

    std::size_t size() const { return edges.size(); }
    void validate() const;
};

// round(n * epsilon) uniformly random distinct entries of R x C, values
// copied from the instance.
ObservationSet sample_observations(const GroundTruthInstance& truth, double epsilon,
                                   std::uint64_t seed);

// Splits `count` edges out of obs into a held-out set (deterministic in
// seed); returns (remaining, holdout).
std::pair<ObservationSet, ObservationSet> split_holdout(const ObservationSet& obs,
                                                        std::size_t count, std::uint64_t seed);

// Connected components of G. Labels are dense, assigned in first-touch order
// (rows 0..n-1 then columns); `giant` is the component with the most
// vertices, ties to the smallest label, absent when the maximum size is 1.
struct ComponentLabeling {
    struct Size {
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::size_t edges = 0;
    };
    std::vector<std::size_t> row_label;
    std::vector<std::size_t> col_label;
    std::vector<Size> sizes;
    std::optional<std::size_t> giant;
};

ComponentLabeling connected_components(const ObservationSet& obs);

// The relative giant-component sizes (xi, zeta): the largest solution of
//   xi = 1 - exp(-eps*alpha*zeta),  zeta = 1 - exp(-eps*xi),
// which is (0, 0) for eps <= 1/sqrt(alpha).
struct GiantComponentSolution {
    double xi = 0.0;
    double zeta = 0.0;
    double residual = 0.0;
    std::uint64_t iterations = 0;
};

enum class FixedPointMethod { damped_iteration, bisection };

GiantComponentSolution giant_component_fixed_point(double epsilon, double alpha, double tol,
                                                   FixedPointMethod method =
                                                       FixedPointMethod::damped_iteration);

}  // namespace mclab
