#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"

namespace mclab {

// Stochastic local search over alphabet-constrained factor assignments that
// minimizes the number of observations off by more than delta.
struct WalkRankConfig {
    double delta = 0.0;  // violation tolerance
    double rho = 0.1;    // probability of a walk move per step
    DiscreteAlphabet alphabet = DiscreteAlphabet({-1.0, 1.0}, 2.0);
    std::uint64_t max_steps = 0;    // 0 -> 50 * n * ceil(log2 n)^2
    std::uint64_t target_cost = 0;  // stop once cost <= target
    std::uint64_t seed = 0;
    std::uint64_t log_every = 0;  // trajectory sampling period; 0 -> auto
};

// Number of observed entries with |u_i . v_a - M_ia| > delta (strict).
std::uint64_t violation_cost(const FactorAssignment& assignment, const ObservationSet& obs,
                             double delta);

// Mutable search state: assignment + violated-edge set with O(1) sampling,
// insertion and removal, plus adjacency for incremental updates.
class SearchState {
  public:
    SearchState(FactorAssignment assignment, const ObservationSet& obs,
                const WalkRankConfig& config);

    std::uint64_t cost() const { return violated_.size(); }
    const FactorAssignment& assignment() const { return assignment_; }

    // Replaces the factor of one uniformly chosen vertex on the given side by
    // a cost-minimizing vector over the whole alphabet power (ties uniform).
    // Never increases the cost.
    void greedy_move(bool row_side, rng::SplitMix64& gen);

    // Picks a uniformly random violated edge and forces it satisfied by
    // installing a satisfying factor pair for its two endpoints.  A pair
    // that breaks no other incident edge is taken whenever one exists
    // (uniformly among those); otherwise the move mixes the least-damaging
    // pair with a uniform draw over all satisfying pairs.  May increase the
    // cost.
    void walk_move(rng::SplitMix64& gen);

    // Recomputes the violated set from scratch and checks it against the
    // incrementally maintained one; throws on mismatch.
    void check_consistency() const;

  private:
    void refresh_edge(std::size_t e);
    std::uint64_t local_cost(bool row_side, std::size_t vertex,
                             const std::vector<double>& candidate) const;
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& satisfying_pairs(double value);

    FactorAssignment assignment_;
    const ObservationSet* obs_;
    double delta_;
    std::vector<std::vector<double>> power_;  // all alphabet^r vectors
    // CSR adjacency: per-vertex lists of incident edge ids.
    std::vector<std::size_t> row_off_, col_off_;
    std::vector<std::uint32_t> row_edge_, col_edge_;
    // violated_ holds edge ids; pos_[e] is its slot or npos when satisfied.
    std::vector<std::uint32_t> violated_;
    std::vector<std::uint32_t> pos_;
    // Satisfying factor pairs per distinct observed value (lazy, capped).
    std::map<double, std::vector<std::pair<std::uint32_t, std::uint32_t>>> pair_cache_;
    std::size_t cached_pairs_ = 0;
};

// Full run: iid-uniform alphabet initialization, then walk moves with
// probability rho and greedy moves otherwise (side chosen n:m), until the
// cost target or the step budget is hit.  Identical inputs give identical
// trajectories.  The truth-free overload reports NaN rmse/prediction error.
std::pair<FactorAssignment, DistortionReport> run_walkrank(const GroundTruthInstance& truth,
                                                           const ObservationSet& obs,
                                                           const WalkRankConfig& config);
std::pair<FactorAssignment, DistortionReport> run_walkrank(const ObservationSet& obs,
                                                           std::size_t r,
                                                           const WalkRankConfig& config);

// Step budget used when max_steps is 0.
std::uint64_t default_step_budget(std::size_t n);

// Observations with continuous (or finer-grained) values are searched over
// the delta-step grid with the tolerance widened to delta + 2 r delta_step,
// which keeps every grid-realizable matrix feasible.
WalkRankConfig quantized_config(const WalkRankConfig& base, std::size_t r, double delta_step);

}  // namespace mclab
