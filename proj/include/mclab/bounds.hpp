#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mclab/core.hpp"

namespace mclab {

// Shared inputs of the distortion bounds.  eps_tilde is the number of
// observations per degree of freedom.
struct BoundInputs {
    std::size_t r = 1;
    double epsilon = 1.0;
    double alpha = 1.0;
    double delta_tol = 0.0;  // admissible per-entry deviation on E
    std::optional<DiscreteAlphabet> alphabet;
    FactorDistribution p0 = FactorDistribution::uniform_signs();
    FactorDistribution q0 = FactorDistribution::uniform_signs();

    double eps_tilde() const {
        return epsilon / ((1.0 + alpha) * static_cast<double>(r));
    }
    void validate() const;
};

// A bound value plus which formula produced it; `trivial` marks the 2r+delta
// fallback used outside a formula's validity region.
struct BoundValue {
    double value = 0.0;
    std::string provenance;
    bool trivial = false;
};

// delta + 2r * eps_tilde^{-1/2} * ln(10 eps_tilde), valid for eps_tilde >
// 1.5; otherwise the trivial bound 2r + delta, flagged.
BoundValue theorem1_bound(const BoundInputs& inputs);

// (delta^2 + (4r^2 - delta^2)(1 - exp(-ln N / eps_tilde)))^{1/2}: the
// closed-form bound for factors uniform on an N-point alphabet.
double discrete_alphabet_bound(std::size_t r, std::size_t n_points, double eps_tilde,
                               double delta_tol);

// Largest achievable conditional entropy gap max H(p) - H(p0) over couplings
// with a fixed marginal: the conditional law can always be made uniform over
// the full alphabet power, so the gap is r ln N.
double entropy_gap_bound(const DiscreteAlphabet& alphabet, std::size_t r);

// max |u.v - u0.v0| over alphabet^r factor vectors.
double max_product_deviation(const DiscreteAlphabet& alphabet, std::size_t r);

// {dbar^2 - (dbar^2 - delta^2) exp(-[Hp + alpha Hq] / epsilon)}^{1/2}.
BoundValue simplified_upper_bound(double hbar_p, double hbar_q, double dbar,
                                  const BoundInputs& inputs);

struct ContinuousBound {
    double value = 0.0;
    std::size_t n_points = 0;  // grid size N implied by the step
    double delta_step = 0.0;
};

// Quantization corollary: the discrete bound at tolerance delta + 2 r step
// on the N = round(2/step)+1 point grid, plus the 2 r step rounding cost.
ContinuousBound continuous_bound(std::size_t r, double eps_tilde, double delta_tol,
                                 double delta_step);
// Same with the near-optimal grid N = ceil(4 sqrt(eps_tilde)) + 1.
ContinuousBound continuous_bound_preset(std::size_t r, double eps_tilde, double delta_tol);

// P{Poisson(mean) < r}.
double poisson_below(double mean, std::size_t r);

struct LowerBoundValue {
    double value = 0.0;   // sqrt((1 - (1-xi)(1-zeta)) * c_tilde)
    double coarse = 0.0;  // c_tilde * exp(-epsilon)
    double xi = 0.0;      // P{row degree < r}
    double zeta = 0.0;    // P{column degree < r}
    double c_tilde = 0.0;
};

// MMSE residual constant: a fresh factor vector is estimated from r-1
// neighbors with known factors and exact edge values; c_tilde is the smaller
// of the two sides' mean squared residual products, by exhaustive
// enumeration over the discrete alphabets.  `literal_mean` switches to the
// unsquared mean residual (which cancels to 0 for sign-symmetric laws).
double mmse_residual_constant(const FactorDistribution& p0, const FactorDistribution& q0,
                              std::size_t r, bool literal_mean = false);

LowerBoundValue lower_bound(const BoundInputs& inputs, bool literal_mean = false);

// Joint coupling pair for the counting bound: row-major joints indexed
// [new * support + original] over alphabet^r tuples, with fixed original
// marginals p0^r and q0^r.
struct CouplingPair {
    std::size_t support = 0;  // N^r
    std::vector<double> p;    // (u, u0) joint
    std::vector<double> q;    // (v, v0) joint
    void validate(const BoundInputs& inputs, double tol = 1e-10) const;
};

// sqrt(E |u.v - u0.v0|^2) under independent couplings.
double coupling_distortion(const CouplingPair& pair, const BoundInputs& inputs);

// H(p) - H(p0^r) + alpha [H(q) - H(q0^r)] + epsilon E log P{|u.v - u0.v0| <=
// delta | u0, v0}; -inf (as -HUGE_VAL) when a conditional probability is 0.
double phi_delta(const CouplingPair& pair, const BoundInputs& inputs);

struct TightBoundOptions {
    std::size_t starts = 32;
    std::size_t bisection_levels = 24;
    std::size_t inner_iterations = 160;
    std::size_t rounds = 3;  // alternations between the two kernels
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

struct TightBoundValue {
    double value = 0.0;         // best feasible distortion found
    double phi_residual = 0.0;  // phi_delta at the reported couplings
    CouplingPair couplings;
    bool feasible_found = false;
};

// Numerical maximization of the coupling distortion subject to phi_delta >=
// 0: multi-start alternating exponentiated-gradient ascent on the two
// conditional kernels, with the constraint enforced through a Lagrange
// multiplier found by bisection.  The result is a feasible lower estimate of
// the true supremum, not a certificate.
TightBoundValue tight_upper_bound(const BoundInputs& inputs,
                                  const TightBoundOptions& options = {});

}  // namespace mclab
