#include "mclab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mclab {

void BoundInputs::validate() const {
    if (r < 1) throw config_error("rank must be at least 1");
    if (epsilon < 0.0) throw config_error("epsilon must be nonnegative");
    if (!(alpha > 0.0)) throw config_error("alpha must be positive");
    if (delta_tol < 0.0) throw config_error("tolerance must be nonnegative");
    p0.validate();
    q0.validate();
}

BoundValue theorem1_bound(const BoundInputs& inputs) {
    inputs.validate();
    double et = inputs.eps_tilde();
    double r = static_cast<double>(inputs.r);
    if (et <= 1.5)
        return {2.0 * r + inputs.delta_tol, "trivial_range", true};
    return {inputs.delta_tol + 2.0 * r / std::sqrt(et) * std::log(10.0 * et),
            "closed_form", false};
}

double discrete_alphabet_bound(std::size_t r, std::size_t n_points, double eps_tilde,
                               double delta_tol) {
    if (n_points < 1) throw config_error("alphabet size must be at least 1");
    if (!(eps_tilde > 0.0)) throw config_error("eps per degree of freedom must be positive");
    double rr = static_cast<double>(r);
    double d2 = delta_tol * delta_tol;
    double span = 4.0 * rr * rr - d2;
    double leak = 1.0 - std::exp(-std::log(static_cast<double>(n_points)) / eps_tilde);
    return std::sqrt(d2 + span * leak);
}

double entropy_gap_bound(const DiscreteAlphabet& alphabet, std::size_t r) {
    return static_cast<double>(r) * std::log(static_cast<double>(alphabet.size()));
}

double max_product_deviation(const DiscreteAlphabet& alphabet, std::size_t r) {
    double mx = -std::numeric_limits<double>::infinity();
    double mn = std::numeric_limits<double>::infinity();
    for (double x : alphabet.points)
        for (double y : alphabet.points) {
            mx = std::max(mx, x * y);
            mn = std::min(mn, x * y);
        }
    return static_cast<double>(r) * (mx - mn);
}

BoundValue simplified_upper_bound(double hbar_p, double hbar_q, double dbar,
                                  const BoundInputs& inputs) {
    inputs.validate();
    if (hbar_p < 0.0 || hbar_q < 0.0)
        throw config_error("entropy gaps must be nonnegative");
    if (inputs.delta_tol > dbar)
        throw config_error("tolerance exceeds the largest possible deviation");
    double gap = hbar_p + inputs.alpha * hbar_q;
    double shrink;
    if (inputs.epsilon == 0.0)
        shrink = gap == 0.0 ? 1.0 : 0.0;
    else
        shrink = std::exp(-gap / inputs.epsilon);
    double d2 = dbar * dbar;
    double t2 = inputs.delta_tol * inputs.delta_tol;
    return {std::sqrt(d2 - (d2 - t2) * shrink), "entropy_gap", false};
}

ContinuousBound continuous_bound(std::size_t r, double eps_tilde, double delta_tol,
                                 double delta_step) {
    if (!(delta_step > 0.0) || delta_step > 2.0)
        throw config_error("quantization step must be in (0, 2]");
    ContinuousBound out;
    out.delta_step = delta_step;
    out.n_points = static_cast<std::size_t>(std::llround(2.0 / delta_step)) + 1;
    double rounding = 2.0 * static_cast<double>(r) * delta_step;
    out.value =
        discrete_alphabet_bound(r, out.n_points, eps_tilde, delta_tol + rounding) + rounding;
    return out;
}

ContinuousBound continuous_bound_preset(std::size_t r, double eps_tilde, double delta_tol) {
    if (!(eps_tilde > 0.0)) throw config_error("eps per degree of freedom must be positive");
    auto n_points = static_cast<std::size_t>(std::ceil(4.0 * std::sqrt(eps_tilde))) + 1;
    double step = 2.0 / static_cast<double>(n_points - 1);
    ContinuousBound out = continuous_bound(r, eps_tilde, delta_tol, step);
    out.n_points = n_points;  // by construction round(2/step)+1 == n_points
    return out;
}

double poisson_below(double mean, std::size_t r) {
    if (mean < 0.0) throw config_error("Poisson mean must be nonnegative");
    double term = std::exp(-mean);  // mass at k = 0
    double sum = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
        sum += term;
        term *= mean / static_cast<double>(k + 1);
    }
    return std::min(sum, 1.0);
}

namespace {

// Support tuples of an r-fold product of a discrete scalar law, with weights.
struct TupleLaw {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
};

TupleLaw support_tuples(const FactorDistribution& dist, std::size_t r, std::size_t limit) {
    if (!dist.is_discrete())
        throw config_error("operation requires discrete factor distributions");
    std::vector<double> pts;
    std::vector<double> w;
    for (std::size_t i = 0; i < dist.weights.size(); ++i) {
        if (dist.weights[i] > 0.0) {
            pts.push_back(dist.alphabet.points[i]);
            w.push_back(dist.weights[i]);
        }
    }
    double count = std::pow(static_cast<double>(pts.size()), static_cast<double>(r));
    if (count > static_cast<double>(limit))
        throw config_error("distribution support too large to enumerate");
    auto total = static_cast<std::size_t>(count + 0.5);
    TupleLaw law;
    law.points.assign(total, std::vector<double>(r));
    law.weights.assign(total, 1.0);
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rem = k;
        for (std::size_t j = r; j-- > 0;) {
            law.points[k][j] = pts[rem % pts.size()];
            law.weights[k] *= w[rem % pts.size()];
            rem /= pts.size();
        }
    }
    return law;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

// One side of the residual constant: a target vector with law est^r is
// estimated from r-1 neighbor vectors (law other^r) and the exact products;
// the residual is then hit with one more fresh vector of law other^r.
double mmse_side(const FactorDistribution& est, const FactorDistribution& other,
                 std::size_t r, bool literal_mean) {
    TupleLaw targets = support_tuples(est, r, 4000);
    TupleLaw neighbors = support_tuples(other, r, 4000);
    double combos = std::pow(static_cast<double>(neighbors.points.size()),
                             static_cast<double>(r - 1));
    if (combos * static_cast<double>(targets.points.size()) *
            static_cast<double>(targets.points.size()) >
        1e7)
        throw config_error("residual-constant enumeration too large");

    double mu1 = other.mean();
    double mu2 = other.second_moment();
    std::vector<std::size_t> combo(r - 1, 0);
    std::vector<double> y(r - 1);
    double acc = 0.0;
    bool done = false;
    while (!done) {
        double wc = 1.0;
        for (std::size_t j = 0; j + 1 < r; ++j) wc *= neighbors.weights[combo[j]];
        for (std::size_t t = 0; t < targets.points.size(); ++t) {
            const auto& target = targets.points[t];
            for (std::size_t j = 0; j + 1 < r; ++j)
                y[j] = dot(neighbors.points[combo[j]], target);
            // Posterior mean over candidates reproducing every product.
            double wsum = 0.0;
            std::vector<double> mean(r, 0.0);
            for (std::size_t c = 0; c < targets.points.size(); ++c) {
                bool ok = true;
                for (std::size_t j = 0; ok && j + 1 < r; ++j)
                    if (std::abs(dot(neighbors.points[combo[j]], targets.points[c]) - y[j]) >
                        1e-9)
                        ok = false;
                if (!ok) continue;
                wsum += targets.weights[c];
                for (std::size_t k = 0; k < r; ++k)
                    mean[k] += targets.weights[c] * targets.points[c][k];
            }
            double term;
            double sum_w = 0.0, norm_w = 0.0;
            for (std::size_t k = 0; k < r; ++k) {
                double wk = target[k] - mean[k] / wsum;
                sum_w += wk;
                norm_w += wk * wk;
            }
            if (literal_mean)
                term = mu1 * sum_w;
            else
                term = (mu2 - mu1 * mu1) * norm_w + mu1 * mu1 * sum_w * sum_w;
            acc += targets.weights[t] * wc * term;
        }
        // Odometer over the r-1 neighbor choices.
        done = true;
        for (std::size_t j = 0; j + 1 < r; ++j) {
            if (++combo[j] < neighbors.points.size()) {
                done = false;
                break;
            }
            combo[j] = 0;
        }
        if (r == 1) break;
    }
    return acc;
}

}  // namespace

double mmse_residual_constant(const FactorDistribution& p0, const FactorDistribution& q0,
                              std::size_t r, bool literal_mean) {
    if (r < 1) throw config_error("rank must be at least 1");
    double side_v = mmse_side(q0, p0, r, literal_mean);  // estimate a column factor
    double side_u = mmse_side(p0, q0, r, literal_mean);  // estimate a row factor
    return std::min(side_u, side_v);
}

LowerBoundValue lower_bound(const BoundInputs& inputs, bool literal_mean) {
    inputs.validate();
    if (!inputs.p0.is_discrete() || !inputs.q0.is_discrete())
        throw config_error("lower bound requires discrete factor distributions");
    LowerBoundValue out;
    out.xi = poisson_below(inputs.epsilon, inputs.r);
    out.zeta = poisson_below(inputs.epsilon / inputs.alpha, inputs.r);
    out.c_tilde = mmse_residual_constant(inputs.p0, inputs.q0, inputs.r, literal_mean);
    out.value = std::sqrt(std::max(
        (1.0 - (1.0 - out.xi) * (1.0 - out.zeta)) * out.c_tilde, 0.0));
    out.coarse = out.c_tilde * std::exp(-inputs.epsilon);
    return out;
}

// ---------------------------------------------------------------------------
// Coupling machinery for the counting bound.

namespace {

struct CouplingSpace {
    DiscreteAlphabet alphabet{{-1.0, 1.0}, 2.0};
    std::vector<std::vector<double>> tuples;  // all alphabet^r vectors
    std::vector<double> prod;                 // tuples[i] . tuples[j], row-major
    std::vector<double> wp0, wq0;             // tuple marginals (may contain 0)
    std::size_t s = 0;

    double product(std::size_t i, std::size_t j) const { return prod[i * s + j]; }
};

std::vector<double> tuple_marginal(const FactorDistribution& dist,
                                   const std::vector<std::vector<double>>& tuples,
                                   const DiscreteAlphabet& alphabet) {
    if (!dist.is_discrete())
        throw config_error("coupling bounds require discrete factor distributions");
    if (dist.alphabet.size() != alphabet.size())
        throw config_error("factor distribution alphabet does not match the coupling one");
    for (std::size_t i = 0; i < alphabet.size(); ++i)
        if (std::abs(dist.alphabet.points[i] - alphabet.points[i]) > 1e-12)
            throw config_error("factor distribution alphabet does not match the coupling one");
    std::vector<double> w(tuples.size(), 1.0);
    for (std::size_t t = 0; t < tuples.size(); ++t) {
        std::size_t rem = t;
        std::size_t r = tuples[t].size();
        for (std::size_t j = r; j-- > 0;) {
            w[t] *= dist.weights[rem % alphabet.size()];
            rem /= alphabet.size();
        }
    }
    return w;
}

CouplingSpace make_space(const BoundInputs& inputs, std::size_t tuple_limit) {
    CouplingSpace sp;
    sp.alphabet = inputs.alphabet ? *inputs.alphabet : inputs.p0.alphabet;
    sp.tuples = enumerate_power(sp.alphabet, inputs.r, tuple_limit);
    sp.s = sp.tuples.size();
    sp.prod.resize(sp.s * sp.s);
    for (std::size_t i = 0; i < sp.s; ++i)
        for (std::size_t j = 0; j < sp.s; ++j)
            sp.prod[i * sp.s + j] = dot(sp.tuples[i], sp.tuples[j]);
    sp.wp0 = tuple_marginal(inputs.p0, sp.tuples, sp.alphabet);
    sp.wq0 = tuple_marginal(inputs.q0, sp.tuples, sp.alphabet);
    return sp;
}

double entropy_of(const std::vector<double>& w) {
    double h = 0.0;
    for (double x : w)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

double entropy_of(const double* w, std::size_t count) {
    double h = 0.0;
    for (std::size_t i = 0; i < count; ++i)
        if (w[i] > 0.0) h -= w[i] * std::log(w[i]);
    return h;
}

}  // namespace

void CouplingPair::validate(const BoundInputs& inputs, double tol) const {
    CouplingSpace sp = make_space(inputs, 4000);
    if (support != sp.s || p.size() != sp.s * sp.s || q.size() != sp.s * sp.s)
        throw config_error("coupling storage does not match the alphabet power");
    for (double x : p)
        if (x < -tol) throw config_error("coupling probabilities must be nonnegative");
    for (double x : q)
        if (x < -tol) throw config_error("coupling probabilities must be nonnegative");
    for (std::size_t u0 = 0; u0 < sp.s; ++u0) {
        double sum_p = 0.0, sum_q = 0.0;
        for (std::size_t u = 0; u < sp.s; ++u) {
            sum_p += p[u * sp.s + u0];
            sum_q += q[u * sp.s + u0];
        }
        if (std::abs(sum_p - sp.wp0[u0]) > tol || std::abs(sum_q - sp.wq0[u0]) > tol)
            throw config_error("coupling marginals drifted from the factor law");
    }
}

double coupling_distortion(const CouplingPair& pair, const BoundInputs& inputs) {
    CouplingSpace sp = make_space(inputs, 4000);
    double acc = 0.0;
    for (std::size_t u = 0; u < sp.s; ++u)
        for (std::size_t u0 = 0; u0 < sp.s; ++u0) {
            double pw = pair.p[u * sp.s + u0];
            if (pw == 0.0) continue;
            for (std::size_t v = 0; v < sp.s; ++v)
                for (std::size_t v0 = 0; v0 < sp.s; ++v0) {
                    double qw = pair.q[v * sp.s + v0];
                    if (qw == 0.0) continue;
                    double dev = sp.product(u, v) - sp.product(u0, v0);
                    acc += pw * qw * dev * dev;
                }
        }
    return std::sqrt(std::max(acc, 0.0));
}

double phi_delta(const CouplingPair& pair, const BoundInputs& inputs) {
    CouplingSpace sp = make_space(inputs, 4000);
    double h_p0 = static_cast<double>(inputs.r) *
                  [&] {
                      double h = 0.0;
                      for (double w : inputs.p0.weights)
                          if (w > 0.0) h -= w * std::log(w);
                      return h;
                  }();
    double h_q0 = static_cast<double>(inputs.r) *
                  [&] {
                      double h = 0.0;
                      for (double w : inputs.q0.weights)
                          if (w > 0.0) h -= w * std::log(w);
                      return h;
                  }();
    double phi = (entropy_of(pair.p) - h_p0) + inputs.alpha * (entropy_of(pair.q) - h_q0);
    if (inputs.epsilon == 0.0) return phi;

    double tol = inputs.delta_tol + 1e-12;
    double expect = 0.0;
    for (std::size_t u0 = 0; u0 < sp.s; ++u0) {
        if (sp.wp0[u0] == 0.0) continue;
        for (std::size_t v0 = 0; v0 < sp.s; ++v0) {
            if (sp.wq0[v0] == 0.0) continue;
            double target = sp.product(u0, v0);
            double mass = 0.0;
            for (std::size_t u = 0; u < sp.s; ++u) {
                double pw = pair.p[u * sp.s + u0];
                if (pw == 0.0) continue;
                for (std::size_t v = 0; v < sp.s; ++v) {
                    if (std::abs(sp.product(u, v) - target) <= tol)
                        mass += pw * pair.q[v * sp.s + v0];
                }
            }
            double cond = mass / (sp.wp0[u0] * sp.wq0[v0]);
            if (!(cond > 0.0)) return -std::numeric_limits<double>::infinity();
            expect += sp.wp0[u0] * sp.wq0[v0] * std::log(std::min(cond, 1.0));
        }
    }
    return phi + inputs.epsilon * expect;
}

// ---------------------------------------------------------------------------
// Tight-bound optimizer: alternating exponentiated-gradient ascent on the
// conditional kernels with the constraint handled by a bisected multiplier.

namespace {

// Kernel matrices live over support rows only; columns span all tuples.
struct Kernels {
    std::vector<std::size_t> sup_p, sup_q;  // tuple indices with positive law
    std::vector<double> kp, kq;             // row-major [row * s + u]
};

struct Objective {
    const CouplingSpace* sp;
    const BoundInputs* in;
    double tol;  // delta_tol + fp slack

    bool within(std::size_t u, std::size_t v, double target) const {
        return std::abs(sp->product(u, v) - target) <= tol;
    }
};

// E |u.v - u0.v0|^2 for kernel couplings.
double kernel_distortion2(const Objective& ob, const Kernels& k) {
    const CouplingSpace& sp = *ob.sp;
    double acc = 0.0;
    for (std::size_t ri = 0; ri < k.sup_p.size(); ++ri) {
        std::size_t u0 = k.sup_p[ri];
        for (std::size_t u = 0; u < sp.s; ++u) {
            double pw = sp.wp0[u0] * k.kp[ri * sp.s + u];
            if (pw == 0.0) continue;
            for (std::size_t rj = 0; rj < k.sup_q.size(); ++rj) {
                std::size_t v0 = k.sup_q[rj];
                double t0 = sp.product(u0, v0);
                for (std::size_t v = 0; v < sp.s; ++v) {
                    double qw = sp.wq0[v0] * k.kq[rj * sp.s + v];
                    if (qw == 0.0) continue;
                    double dev = sp.product(u, v) - t0;
                    acc += pw * qw * dev * dev;
                }
            }
        }
    }
    return acc;
}

double kernel_phi(const Objective& ob, const Kernels& k) {
    const CouplingSpace& sp = *ob.sp;
    const BoundInputs& in = *ob.in;
    double phi = 0.0;
    for (std::size_t ri = 0; ri < k.sup_p.size(); ++ri)
        phi += sp.wp0[k.sup_p[ri]] * entropy_of(&k.kp[ri * sp.s], sp.s);
    for (std::size_t rj = 0; rj < k.sup_q.size(); ++rj)
        phi += in.alpha * sp.wq0[k.sup_q[rj]] * entropy_of(&k.kq[rj * sp.s], sp.s);
    if (in.epsilon == 0.0) return phi;

    double expect = 0.0;
    for (std::size_t ri = 0; ri < k.sup_p.size(); ++ri) {
        std::size_t u0 = k.sup_p[ri];
        for (std::size_t rj = 0; rj < k.sup_q.size(); ++rj) {
            std::size_t v0 = k.sup_q[rj];
            double target = sp.product(u0, v0);
            double mass = 0.0;
            for (std::size_t u = 0; u < sp.s; ++u) {
                double pw = k.kp[ri * sp.s + u];
                if (pw == 0.0) continue;
                for (std::size_t v = 0; v < sp.s; ++v)
                    if (ob.within(u, v, target)) mass += pw * k.kq[rj * sp.s + v];
            }
            if (!(mass > 0.0)) return -std::numeric_limits<double>::infinity();
            expect += sp.wp0[u0] * sp.wq0[v0] * std::log(std::min(mass, 1.0));
        }
    }
    return phi + in.epsilon * expect;
}

// Solves max_K  sum_rows w(row) [ <B_row, K_row> + mu ( H(K_row) ... ) ] for
// one kernel block with the other fixed, by mirror ascent on each simplex
// row.  B carries the distortion coefficients, C the satisfaction masses.
struct BlockProblem {
    std::size_t s = 0;
    std::size_t rows = 0;
    double entropy_weight = 1.0;             // 1 for the p block, alpha for q
    double epsilon = 0.0;
    std::vector<double> b;                   // [row * s + u] linear part
    std::vector<double> c;                   // [(row * s + u) * other + j] masses
    std::vector<double> pair_w;              // [row * other + j] joint law weight
    std::size_t other = 0;                   // number of opposite support rows
};

void block_ascend(const BlockProblem& pr, double mu, std::size_t iterations,
                  std::vector<double>& kernel) {
    std::vector<double> grad(pr.s);
    std::vector<double> pmass(pr.other);
    for (std::size_t it = 0; it < iterations; ++it) {
        double max_change = 0.0;
        for (std::size_t row = 0; row < pr.rows; ++row) {
            double* k = &kernel[row * pr.s];
            // Conditional satisfaction mass per opposite row.
            for (std::size_t j = 0; j < pr.other; ++j) {
                double m = 0.0;
                for (std::size_t u = 0; u < pr.s; ++u)
                    m += k[u] * pr.c[(row * pr.s + u) * pr.other + j];
                pmass[j] = m;
            }
            double gmax = -std::numeric_limits<double>::infinity();
            for (std::size_t u = 0; u < pr.s; ++u) {
                double g = pr.b[row * pr.s + u];
                g += mu * pr.entropy_weight * (-std::log(std::max(k[u], 1e-300)) - 1.0);
                if (pr.epsilon > 0.0) {
                    double lg = 0.0;
                    for (std::size_t j = 0; j < pr.other; ++j) {
                        double m = std::max(pmass[j], 1e-300);
                        lg += pr.pair_w[row * pr.other + j] *
                              pr.c[(row * pr.s + u) * pr.other + j] / m;
                    }
                    g += mu * pr.epsilon * lg;
                }
                grad[u] = g;
                gmax = std::max(gmax, std::abs(g));
            }
            double eta = 0.5 / std::max(gmax, 1e-12);
            double z = 0.0;
            for (std::size_t u = 0; u < pr.s; ++u) {
                double e = std::clamp(eta * grad[u], -40.0, 40.0);
                double nk = k[u] * std::exp(e);
                grad[u] = nk;  // reuse as scratch
                z += nk;
            }
            for (std::size_t u = 0; u < pr.s; ++u) {
                double nk = grad[u] / z;
                max_change = std::max(max_change, std::abs(nk - k[u]));
                k[u] = nk;
            }
        }
        if (max_change < 1e-13) break;
    }
}

// Builds the block problem for updating kernel `kp` (rows sup_a over wa0)
// against the fixed opposite kernel.
BlockProblem build_block(const Objective& ob, const std::vector<std::size_t>& sup_a,
                         const std::vector<double>& wa0,
                         const std::vector<std::size_t>& sup_b,
                         const std::vector<double>& wb0, const std::vector<double>& fixed,
                         double entropy_weight, bool a_is_row_side) {
    const CouplingSpace& sp = *ob.sp;
    BlockProblem pr;
    pr.s = sp.s;
    pr.rows = sup_a.size();
    pr.other = sup_b.size();
    pr.entropy_weight = entropy_weight;
    pr.epsilon = ob.in->epsilon;
    pr.b.assign(pr.rows * sp.s, 0.0);
    pr.c.assign(pr.rows * sp.s * pr.other, 0.0);
    pr.pair_w.assign(pr.rows * pr.other, 0.0);

    for (std::size_t ri = 0; ri < pr.rows; ++ri) {
        std::size_t a0 = sup_a[ri];
        for (std::size_t rj = 0; rj < pr.other; ++rj) {
            std::size_t b0 = sup_b[rj];
            // Joint law weight, divided by this row's marginal so that the
            // per-row objective integrates to the global one.
            pr.pair_w[ri * pr.other + rj] = wb0[b0];
            double target = a_is_row_side ? sp.product(a0, b0) : sp.product(b0, a0);
            for (std::size_t u = 0; u < sp.s; ++u) {
                double bsum = 0.0, csum = 0.0;
                const double* f = &fixed[rj * sp.s];
                for (std::size_t v = 0; v < sp.s; ++v) {
                    if (f[v] == 0.0) continue;
                    double pi = a_is_row_side ? sp.product(u, v) : sp.product(v, u);
                    double dev = pi - target;
                    bsum += f[v] * dev * dev;
                    if (std::abs(pi - target) <= ob.tol) csum += f[v];
                }
                pr.b[ri * sp.s + u] += wb0[b0] * bsum;
                pr.c[(ri * sp.s + u) * pr.other + rj] = csum;
            }
        }
    }
    return pr;
}

struct StartResult {
    double best_d = -1.0;
    double best_phi = 0.0;
    Kernels best;
};

}  // namespace

TightBoundValue tight_upper_bound(const BoundInputs& inputs,
                                  const TightBoundOptions& options) {
    inputs.validate();
    CouplingSpace sp = make_space(inputs, 10);  // N^r <= 10, i.e. N^{2r} <= 100
    Objective ob{&sp, &inputs, inputs.delta_tol + 1e-12};

    Kernels base;
    for (std::size_t t = 0; t < sp.s; ++t) {
        if (sp.wp0[t] > 0.0) base.sup_p.push_back(t);
        if (sp.wq0[t] > 0.0) base.sup_q.push_back(t);
    }
    std::size_t rp = base.sup_p.size(), rq = base.sup_q.size();

    auto run_start = [&](std::size_t start) {
        Kernels k = base;
        k.kp.assign(rp * sp.s, 1.0 / static_cast<double>(sp.s));
        k.kq.assign(rq * sp.s, 1.0 / static_cast<double>(sp.s));
        rng::SplitMix64 gen(rng::derive(options.seed, rng::Stream::optimizer, start));
        auto seed_kernel = [&](std::vector<double>& kern, std::size_t rows,
                               const std::vector<std::size_t>& sup) {
            if (start == 0) return;  // uniform
            for (std::size_t row = 0; row < rows; ++row) {
                double z = 0.0;
                for (std::size_t u = 0; u < sp.s; ++u) {
                    double x;
                    if (start == 1)  // near-identity
                        x = (u == sup[row]) ? 1.0 : 0.01 / static_cast<double>(sp.s);
                    else if (start == 2)  // near-reversal
                        x = (u == sp.s - 1 - sup[row]) ? 1.0
                                                       : 0.01 / static_cast<double>(sp.s);
                    else  // random positive
                        x = -std::log(std::max(gen.unit(), 1e-300));
                    kern[row * sp.s + u] = x;
                    z += x;
                }
                for (std::size_t u = 0; u < sp.s; ++u) kern[row * sp.s + u] /= z;
            }
        };
        seed_kernel(k.kp, rp, base.sup_p);
        seed_kernel(k.kq, rq, base.sup_q);

        StartResult res;
        Kernels far;  // highest-distortion candidate seen, feasible or not
        double far_d = -1.0;
        auto consider = [&](const Kernels& cand) {
            double phi = kernel_phi(ob, cand);
            double d = std::sqrt(std::max(kernel_distortion2(ob, cand), 0.0));
            if (d > far_d) {
                far_d = d;
                far = cand;
            }
            if (phi < -1e-9) return;
            if (d > res.best_d) {
                res.best_d = d;
                res.best_phi = phi;
                res.best = cand;
            }
        };
        {
            // The exact identity coupling is always feasible (entropies and
            // the log-probability term all vanish); it anchors the search.
            Kernels id = base;
            id.kp.assign(rp * sp.s, 0.0);
            id.kq.assign(rq * sp.s, 0.0);
            for (std::size_t ri = 0; ri < rp; ++ri) id.kp[ri * sp.s + base.sup_p[ri]] = 1.0;
            for (std::size_t rj = 0; rj < rq; ++rj) id.kq[rj * sp.s + base.sup_q[rj]] = 1.0;
            consider(id);
        }
        consider(k);

        for (std::size_t round = 0; round < options.rounds; ++round) {
            for (int side = 0; side < 2; ++side) {
                bool p_side = side == 0;
                BlockProblem pr =
                    p_side ? build_block(ob, base.sup_p, sp.wp0, base.sup_q, sp.wq0, k.kq,
                                         1.0, true)
                           : build_block(ob, base.sup_q, sp.wq0, base.sup_p, sp.wp0, k.kp,
                                         inputs.alpha, false);
                std::vector<double>& kern = p_side ? k.kp : k.kq;

                // mu = 0: the unconstrained max of the linear part is a
                // per-row vertex; accept it if it is feasible.
                std::vector<double> saved = kern;
                for (std::size_t row = 0; row < pr.rows; ++row) {
                    std::size_t arg = 0;
                    for (std::size_t u = 1; u < sp.s; ++u)
                        if (pr.b[row * sp.s + u] > pr.b[row * sp.s + arg]) arg = u;
                    for (std::size_t u = 0; u < sp.s; ++u)
                        kern[row * sp.s + u] = u == arg ? 1.0 : 0.0;
                }
                consider(k);
                if (kernel_phi(ob, k) >= 0.0) continue;

                // Bracket a multiplier that restores feasibility, then
                // bisect down to the constraint boundary.
                kern = saved;
                double lo = 0.0, hi = 1.0;
                bool bracketed = false;
                for (int grow = 0; grow < 40; ++grow) {
                    std::vector<double> trial = saved;
                    std::swap(kern, trial);
                    block_ascend(pr, hi, options.inner_iterations, kern);
                    if (kernel_phi(ob, k) >= 0.0) {
                        bracketed = true;
                        consider(k);
                        break;
                    }
                    lo = hi;
                    hi *= 4.0;
                    if (hi > 1e8) break;
                }
                if (!bracketed) {
                    kern = saved;  // block hopeless; keep the previous kernel
                    continue;
                }
                std::vector<double> feas = kern;
                for (std::size_t level = 0; level < options.bisection_levels; ++level) {
                    double mid = 0.5 * (lo + hi);
                    kern = saved;
                    block_ascend(pr, mid, options.inner_iterations, kern);
                    if (kernel_phi(ob, k) >= 0.0) {
                        hi = mid;
                        feas = kern;
                        consider(k);
                    } else {
                        lo = mid;
                    }
                }
                kern = feas;
            }
        }

        // Blockwise moves cannot cross the infeasible moat that opens at
        // large epsilon: once both sides carry mixing mass, neither block
        // alone can restore the constraint, so every bracket fails.  The
        // segment from the exact identity toward any target is different:
        // near the identity the entropy term behaves like -t log t while the
        // log-probability penalty is only O(t), so a feasible stretch with
        // positive distortion always exists.  Walk each candidate segment
        // down to the constraint boundary and keep what it finds.
        auto point_mass = [&](bool reverse_p, bool reverse_q) {
            Kernels t = base;
            t.kp.assign(rp * sp.s, 0.0);
            t.kq.assign(rq * sp.s, 0.0);
            for (std::size_t ri = 0; ri < rp; ++ri) {
                std::size_t at = reverse_p ? sp.s - 1 - base.sup_p[ri] : base.sup_p[ri];
                t.kp[ri * sp.s + at] = 1.0;
            }
            for (std::size_t rj = 0; rj < rq; ++rj) {
                std::size_t at = reverse_q ? sp.s - 1 - base.sup_q[rj] : base.sup_q[rj];
                t.kq[rj * sp.s + at] = 1.0;
            }
            return t;
        };
        auto segment_probe = [&](const Kernels& target) {
            Kernels mix = base;
            mix.kp.assign(rp * sp.s, 0.0);
            mix.kq.assign(rq * sp.s, 0.0);
            double lo = 0.0, hi = 1.0;
            for (int level = 0; level < 160; ++level) {
                double t = 0.5 * (lo + hi);
                for (std::size_t ri = 0; ri < rp; ++ri)
                    for (std::size_t u = 0; u < sp.s; ++u)
                        mix.kp[ri * sp.s + u] = t * target.kp[ri * sp.s + u] +
                                                (u == base.sup_p[ri] ? 1.0 - t : 0.0);
                for (std::size_t rj = 0; rj < rq; ++rj)
                    for (std::size_t v = 0; v < sp.s; ++v)
                        mix.kq[rj * sp.s + v] = t * target.kq[rj * sp.s + v] +
                                                (v == base.sup_q[rj] ? 1.0 - t : 0.0);
                if (kernel_phi(ob, mix) >= 0.0) {
                    consider(mix);
                    lo = t;
                } else {
                    hi = t;
                }
            }
        };
        segment_probe(point_mass(true, true));
        segment_probe(point_mass(true, false));
        segment_probe(point_mass(false, true));
        segment_probe(k);
        if (far_d > res.best_d) segment_probe(far);
        return res;
    };

    std::vector<StartResult> results(std::max<std::size_t>(options.starts, 1));
    parallel_for(options.jobs, results.size(),
                 [&](std::size_t s) { results[s] = run_start(s); });

    TightBoundValue out;
    std::size_t winner = results.size();
    for (std::size_t s = 0; s < results.size(); ++s)
        if (results[s].best_d >= 0.0 &&
            (winner == results.size() || results[s].best_d > results[winner].best_d)) {
            winner = s;
        }
    if (winner == results.size()) {
        // The identity coupling is always feasible with distortion zero; it
        // only fails to appear if every start diverged, which we surface.
        throw numerical_error("coupling optimizer found no feasible point");
    }
    const StartResult& best = results[winner];
    out.value = best.best_d;
    out.phi_residual = best.best_phi;
    out.feasible_found = true;
    out.couplings.support = sp.s;
    out.couplings.p.assign(sp.s * sp.s, 0.0);
    out.couplings.q.assign(sp.s * sp.s, 0.0);
    for (std::size_t ri = 0; ri < best.best.sup_p.size(); ++ri) {
        std::size_t u0 = best.best.sup_p[ri];
        for (std::size_t u = 0; u < sp.s; ++u)
            out.couplings.p[u * sp.s + u0] = sp.wp0[u0] * best.best.kp[ri * sp.s + u];
    }
    for (std::size_t rj = 0; rj < best.best.sup_q.size(); ++rj) {
        std::size_t v0 = best.best.sup_q[rj];
        for (std::size_t v = 0; v < sp.s; ++v)
            out.couplings.q[v * sp.s + v0] = sp.wq0[v0] * best.best.kq[rj * sp.s + v];
    }
    return out;
}

}  // namespace mclab
