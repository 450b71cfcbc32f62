#include "mclab/core.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <unordered_set>

#include "mclab/sampling.hpp"

namespace mclab {

DiscreteAlphabet::DiscreteAlphabet(std::vector<double> pts, std::optional<double> spacing)
    : points(std::move(pts)), step(spacing) {
    if (points.empty()) throw config_error("alphabet must contain at least one point");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i] < -1.0 || points[i] > 1.0)
            throw config_error("alphabet points must lie in [-1, 1]");
        if (i > 0 && points[i] <= points[i - 1])
            throw config_error("alphabet points must be strictly increasing");
    }
}

DiscreteAlphabet DiscreteAlphabet::uniform(std::size_t n_points) {
    if (n_points < 2) throw config_error("uniform alphabet needs at least 2 points");
    double delta = 2.0 / static_cast<double>(n_points - 1);
    std::vector<double> pts(n_points);
    for (std::size_t j = 0; j < n_points; ++j)
        pts[j] = -1.0 + delta * static_cast<double>(j);
    pts.front() = -1.0;
    pts.back() = 1.0;
    return DiscreteAlphabet(std::move(pts), delta);
}

DiscreteAlphabet DiscreteAlphabet::with_step(double delta) {
    if (!(delta > 0.0) || delta > 2.0) throw config_error("alphabet step must be in (0, 2]");
    auto n_points = static_cast<std::size_t>(std::ceil(2.0 / delta - 1e-12)) + 1;
    return uniform(n_points);
}

double DiscreteAlphabet::round(double x) const {
    auto it = std::lower_bound(points.begin(), points.end(), x);
    if (it == points.begin()) return points.front();
    if (it == points.end()) return points.back();
    double hi = *it;
    double lo = *(it - 1);
    double dlo = x - lo, dhi = hi - x;
    if (dlo < dhi) return lo;
    if (dhi < dlo) return hi;
    return std::abs(hi) >= std::abs(lo) ? hi : lo;  // ties away from zero
}

bool DiscreteAlphabet::contains(double x, double tol) const {
    auto it = std::lower_bound(points.begin(), points.end(), x - tol);
    return it != points.end() && std::abs(*it - x) <= tol;
}

FactorDistribution FactorDistribution::uniform_signs() {
    FactorDistribution d;
    d.kind = Kind::discrete;
    d.alphabet = DiscreteAlphabet({-1.0, 1.0}, 2.0);
    d.weights = {0.5, 0.5};
    d.name = "pm1";
    return d;
}

FactorDistribution FactorDistribution::uniform_ternary() {
    FactorDistribution d;
    d.kind = Kind::discrete;
    d.alphabet = DiscreteAlphabet({-1.0, 0.0, 1.0}, 1.0);
    d.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    d.name = "ternary";
    return d;
}

FactorDistribution FactorDistribution::continuous_uniform() {
    FactorDistribution d;
    d.kind = Kind::continuous_uniform;
    d.name = "uniform";
    return d;
}

FactorDistribution FactorDistribution::uniform_alphabet(DiscreteAlphabet a) {
    FactorDistribution d;
    d.kind = Kind::discrete;
    d.weights.assign(a.size(), 1.0 / static_cast<double>(a.size()));
    d.alphabet = std::move(a);
    d.name = "alphabet" + std::to_string(d.alphabet.size());
    return d;
}

FactorDistribution FactorDistribution::discrete(DiscreteAlphabet a, std::vector<double> w) {
    FactorDistribution d;
    d.kind = Kind::discrete;
    d.alphabet = std::move(a);
    d.weights = std::move(w);
    d.name = "discrete";
    d.validate();
    return d;
}

FactorDistribution FactorDistribution::named(const std::string& name) {
    if (name == "pm1") return uniform_signs();
    if (name == "ternary") return uniform_ternary();
    if (name == "uniform") return continuous_uniform();
    if (name.rfind("alphabet", 0) == 0) {
        std::size_t n = std::stoul(name.substr(8));
        return uniform_alphabet(DiscreteAlphabet::uniform(n));
    }
    throw config_error("unknown distribution name: " + name);
}

void FactorDistribution::validate() const {
    if (kind == Kind::continuous_uniform) return;
    if (weights.size() != alphabet.size())
        throw config_error("distribution weights must align with alphabet points");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw config_error("distribution weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw config_error("distribution weights must sum to 1");
}

double FactorDistribution::mean() const {
    if (kind == Kind::continuous_uniform) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * alphabet.points[i];
    return s;
}

double FactorDistribution::second_moment() const {
    if (kind == Kind::continuous_uniform) return 1.0 / 3.0;
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        s += weights[i] * alphabet.points[i] * alphabet.points[i];
    return s;
}

double FactorDistribution::sample(double u01) const {
    if (kind == Kind::continuous_uniform) return -1.0 + 2.0 * u01;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u01 < acc) return alphabet.points[i];
    }
    return alphabet.points.back();
}

double rank1_baseline_d0(const FactorDistribution& p0, const FactorDistribution& q0) {
    return std::sqrt(p0.second_moment() * q0.second_moment());
}

std::size_t column_count(std::size_t n, double alpha) {
    double exact = static_cast<double>(n) * alpha;
    // nearbyint under the default rounding mode rounds ties to even
    double rounded = std::nearbyint(exact);
    if (rounded < 1.0) throw config_error("n*alpha rounds below 1 column");
    return static_cast<std::size_t>(rounded);
}

GroundTruthInstance generate_instance(std::size_t n, double alpha, std::size_t r,
                                      const FactorDistribution& p0,
                                      const FactorDistribution& q0, std::uint64_t seed) {
    if (n < 1) throw config_error("n must be at least 1");
    if (!(alpha > 0.0)) throw config_error("alpha must be positive");
    if (r < 1) throw config_error("rank must be at least 1");
    p0.validate();
    q0.validate();

    GroundTruthInstance inst;
    inst.n = n;
    inst.m = column_count(n, alpha);
    inst.alpha = alpha;
    inst.r = r;
    inst.p0 = p0;
    inst.q0 = q0;
    inst.seed = seed;
    inst.u.resize(n * r);
    inst.v.resize(inst.m * r);
    for (std::size_t i = 0; i < n * r; ++i)
        inst.u[i] = p0.sample(rng::unit(seed, rng::Stream::factor_u, i));
    for (std::size_t a = 0; a < inst.m * r; ++a)
        inst.v[a] = q0.sample(rng::unit(seed, rng::Stream::factor_v, a));
    return inst;
}

void FactorAssignment::validate() const {
    if (u.size() != n * r || v.size() != m * r)
        throw config_error("factor storage does not match dimensions");
    for (double x : u)
        if (x < -1.0 || x > 1.0) throw config_error("factor entries must lie in [-1, 1]");
    for (double x : v)
        if (x < -1.0 || x > 1.0) throw config_error("factor entries must lie in [-1, 1]");
    if (alphabet) {
        for (double x : u)
            if (!alphabet->contains(x, 1e-12))
                throw config_error("factor entry outside the configured alphabet");
        for (double x : v)
            if (!alphabet->contains(x, 1e-12))
                throw config_error("factor entry outside the configured alphabet");
    }
}

FactorAssignment quantize(const FactorAssignment& assignment, double delta) {
    if (!(delta > 0.0) || delta > 2.0) throw config_error("quantization step must be in (0, 2]");
    DiscreteAlphabet grid = DiscreteAlphabet::with_step(delta);
    FactorAssignment out = assignment;
    for (double& x : out.u) x = grid.round(x);
    for (double& x : out.v) x = grid.round(x);
    out.alphabet = std::move(grid);
    return out;
}

MatrixRef matrix_ref(const GroundTruthInstance& inst) {
    return MatrixRef{inst.n, inst.m,
                     [&inst](std::size_t i, std::size_t a) { return inst.entry(i, a); }};
}

MatrixRef matrix_ref(const FactorAssignment& assignment) {
    return MatrixRef{assignment.n, assignment.m, [&assignment](std::size_t i, std::size_t a) {
                         return assignment.entry(i, a);
                     }};
}

double rmse(const GroundTruthInstance& truth, const MatrixRef& estimate) {
    if (estimate.rows != truth.n || estimate.cols != truth.m)
        throw config_error("rmse: estimate dimensions do not match the truth");
    double ss = 0.0;
    for (std::size_t i = 0; i < truth.n; ++i) {
        for (std::size_t a = 0; a < truth.m; ++a) {
            double d = truth.entry(i, a) - estimate.at(i, a);
            ss += d * d;
        }
    }
    return std::sqrt(ss / (static_cast<double>(truth.n) * static_cast<double>(truth.m)));
}

namespace {

// Gram matrix G = F^T F of an n x r factor block, r x r row-major.
std::vector<double> gram(const std::vector<double>& f, std::size_t count, std::size_t r) {
    std::vector<double> g(r * r, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const double* row = &f[i * r];
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < r; ++k) g[j * r + k] += row[j] * row[k];
    }
    return g;
}

// Cross Gram G = F^T H for two blocks with the same vertex count.
std::vector<double> cross_gram(const std::vector<double>& f, const std::vector<double>& h,
                               std::size_t count, std::size_t rf, std::size_t rh) {
    std::vector<double> g(rf * rh, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const double* a = &f[i * rf];
        const double* b = &h[i * rh];
        for (std::size_t j = 0; j < rf; ++j)
            for (std::size_t k = 0; k < rh; ++k) g[j * rh + k] += a[j] * b[k];
    }
    return g;
}

double frob_inner(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

double rmse_factors(const GroundTruthInstance& truth, const FactorAssignment& estimate) {
    if (estimate.n != truth.n || estimate.m != truth.m)
        throw config_error("rmse: estimate dimensions do not match the truth");
    // ||UV - Uhat Vhat||_F^2 = tr(Gu Gv) - 2 tr(Cu Cv^T) + tr(Ghu Ghv)
    auto gu = gram(truth.u, truth.n, truth.r);
    auto gv = gram(truth.v, truth.m, truth.r);
    auto ghu = gram(estimate.u, estimate.n, estimate.r);
    auto ghv = gram(estimate.v, estimate.m, estimate.r);
    auto cu = cross_gram(truth.u, estimate.u, truth.n, truth.r, estimate.r);
    auto cv = cross_gram(truth.v, estimate.v, truth.m, truth.r, estimate.r);
    double ss = frob_inner(gu, gv) - 2.0 * frob_inner(cu, cv) + frob_inner(ghu, ghv);
    ss = std::max(ss, 0.0);
    return std::sqrt(ss / (static_cast<double>(truth.n) * static_cast<double>(truth.m)));
}

std::vector<std::vector<double>> enumerate_power(const DiscreteAlphabet& alphabet,
                                                 std::size_t r, std::size_t limit) {
    double count = std::pow(static_cast<double>(alphabet.size()), static_cast<double>(r));
    if (count > static_cast<double>(limit))
        throw config_error("alphabet power too large to enumerate");
    auto total = static_cast<std::size_t>(count + 0.5);
    std::vector<std::vector<double>> out(total, std::vector<double>(r));
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rem = k;
        for (std::size_t j = r; j-- > 0;) {
            out[k][j] = alphabet.points[rem % alphabet.size()];
            rem /= alphabet.size();
        }
    }
    return out;
}

std::pair<double, double> fit_and_prediction_error(const GroundTruthInstance& truth,
                                                   const MatrixRef& estimate,
                                                   const ObservationSet& obs,
                                                   const ObservationSet* holdout) {
    if (estimate.rows != truth.n || estimate.cols != truth.m)
        throw config_error("fit/prediction: estimate dimensions do not match the truth");
    obs.validate();
    if (obs.edges.empty()) throw config_error("fit error undefined: no observed entries");

    double fit_ss = 0.0;
    for (std::size_t e = 0; e < obs.edges.size(); ++e) {
        auto [i, a] = obs.edges[e];
        double d = truth.entry(i, a) - estimate.at(i, a);
        fit_ss += d * d;
    }
    double fit = std::sqrt(fit_ss / static_cast<double>(obs.edges.size()));

    double pred;
    if (holdout) {
        if (holdout->edges.empty())
            throw config_error("prediction error undefined: empty holdout");
        double ss = 0.0;
        for (auto [i, a] : holdout->edges) {
            double d = truth.entry(i, a) - estimate.at(i, a);
            ss += d * d;
        }
        pred = std::sqrt(ss / static_cast<double>(holdout->edges.size()));
    } else {
        auto total = static_cast<double>(truth.n) * static_cast<double>(truth.m);
        auto hidden = total - static_cast<double>(obs.edges.size());
        if (hidden <= 0.0)
            throw config_error("prediction error undefined: all entries observed");
        std::unordered_set<std::uint64_t> observed;
        observed.reserve(obs.edges.size() * 2);
        for (auto [i, a] : obs.edges)
            observed.insert(static_cast<std::uint64_t>(i) * truth.m + a);
        double ss = 0.0;
        for (std::size_t i = 0; i < truth.n; ++i) {
            for (std::size_t a = 0; a < truth.m; ++a) {
                if (observed.count(static_cast<std::uint64_t>(i) * truth.m + a)) continue;
                double d = truth.entry(i, a) - estimate.at(i, a);
                ss += d * d;
            }
        }
        pred = std::sqrt(ss / hidden);
    }
    return {fit, pred};
}

std::pair<double, double> fit_and_prediction_error(const GroundTruthInstance& truth,
                                                   const FactorAssignment& estimate,
                                                   const ObservationSet& obs,
                                                   const ObservationSet* holdout) {
    if (estimate.n != truth.n || estimate.m != truth.m)
        throw config_error("fit/prediction: estimate dimensions do not match the truth");
    obs.validate();
    if (obs.edges.empty()) throw config_error("fit error undefined: no observed entries");

    double fit_ss = 0.0;
    for (auto [i, a] : obs.edges) {
        double d = truth.entry(i, a) - estimate.entry(i, a);
        fit_ss += d * d;
    }
    double fit = std::sqrt(fit_ss / static_cast<double>(obs.edges.size()));

    double pred;
    if (holdout) {
        if (holdout->edges.empty())
            throw config_error("prediction error undefined: empty holdout");
        double ss = 0.0;
        for (auto [i, a] : holdout->edges) {
            double d = truth.entry(i, a) - estimate.entry(i, a);
            ss += d * d;
        }
        pred = std::sqrt(ss / static_cast<double>(holdout->edges.size()));
    } else {
        auto total = static_cast<double>(truth.n) * static_cast<double>(truth.m);
        auto hidden = total - static_cast<double>(obs.edges.size());
        if (hidden <= 0.0)
            throw config_error("prediction error undefined: all entries observed");
        double all = rmse_factors(truth, estimate);
        double ss = std::max(all * all * total - fit_ss, 0.0);
        pred = std::sqrt(ss / hidden);
    }
    return {fit, pred};
}

}  // namespace mclab
