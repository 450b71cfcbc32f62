#include "mclab/als.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "mclab/linalg.hpp"

namespace mclab {

double energy(const FactorAssignment& assignment, const ObservationSet& obs, double lambda) {
    if (assignment.n != obs.n || assignment.m != obs.m)
        throw config_error("assignment dimensions do not match the observations");
    double misfit = 0.0;
    for (std::size_t e = 0; e < obs.size(); ++e) {
        auto [i, a] = obs.edges[e];
        double d = obs.values[e] - assignment.entry(i, a);
        misfit += d * d;
    }
    double norm2 = 0.0;
    for (double x : assignment.u) norm2 += x * x;
    for (double x : assignment.v) norm2 += x * x;
    return misfit + lambda * norm2;
}

DescentWorkspace make_descent_workspace(const ObservationSet& obs) {
    DescentWorkspace ws;
    ws.row_off.assign(obs.n + 1, 0);
    ws.col_off.assign(obs.m + 1, 0);
    for (auto [i, a] : obs.edges) {
        ++ws.row_off[i + 1];
        ++ws.col_off[a + 1];
    }
    for (std::size_t i = 0; i < obs.n; ++i) ws.row_off[i + 1] += ws.row_off[i];
    for (std::size_t a = 0; a < obs.m; ++a) ws.col_off[a + 1] += ws.col_off[a];
    ws.row_edge.resize(obs.size());
    ws.col_edge.resize(obs.size());
    std::vector<std::size_t> rp(ws.row_off.begin(), ws.row_off.end() - 1);
    std::vector<std::size_t> cp(ws.col_off.begin(), ws.col_off.end() - 1);
    for (std::uint32_t e = 0; e < obs.size(); ++e) {
        auto [i, a] = obs.edges[e];
        ws.row_edge[rp[i]++] = e;
        ws.col_edge[cp[a]++] = e;
    }
    return ws;
}

namespace {

// Shared ridge solve for one block: accumulate A = sum w w^T + lambda I and
// b = sum y w over the vertex's incident edges, solve, write back, and
// return the relative normal-equation residual.
double solve_block(double* target, std::size_t r, double lambda,
                   const std::vector<std::uint32_t>& edges, std::size_t lo, std::size_t hi,
                   const ObservationSet& obs, const std::vector<double>& partner,
                   bool partner_is_col) {
    std::vector<double> a(r * r, 0.0), b(r, 0.0);
    for (std::size_t k = 0; k < r; ++k) a[k * r + k] = lambda;
    for (std::size_t k = lo; k < hi; ++k) {
        std::uint32_t e = edges[k];
        std::size_t other = partner_is_col ? obs.edges[e].second : obs.edges[e].first;
        const double* w = &partner[other * r];
        double y = obs.values[e];
        for (std::size_t j = 0; j < r; ++j) {
            b[j] += y * w[j];
            for (std::size_t l = j; l < r; ++l) a[j * r + l] += w[j] * w[l];
        }
    }
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t l = 0; l < r; ++l)
            if (l < j) a[j * r + l] = a[l * r + j];

    std::vector<double> x = linalg::solve_spsd(a, r, b);

    // Residual ||A x - b|| / max(||b||, tiny): b lies in the range of A, so
    // even the minimal-norm branch solves the system essentially exactly.
    double rnorm = 0.0, bnorm = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
        double axj = 0.0;
        for (std::size_t l = 0; l < r; ++l) axj += a[j * r + l] * x[l];
        rnorm += (axj - b[j]) * (axj - b[j]);
        bnorm += b[j] * b[j];
    }
    std::copy(x.begin(), x.end(), target);
    return std::sqrt(rnorm) / std::max(std::sqrt(bnorm), 1e-300);
}

}  // namespace

double update_row(std::size_t i, FactorAssignment& assignment, const ObservationSet& obs,
                  const DescentWorkspace& ws, double lambda) {
    return solve_block(&assignment.u[i * assignment.r], assignment.r, lambda, ws.row_edge,
                       ws.row_off[i], ws.row_off[i + 1], obs, assignment.v, true);
}

double update_col(std::size_t a, FactorAssignment& assignment, const ObservationSet& obs,
                  const DescentWorkspace& ws, double lambda) {
    return solve_block(&assignment.v[a * assignment.r], assignment.r, lambda, ws.col_edge,
                       ws.col_off[a], ws.col_off[a + 1], obs, assignment.u, false);
}

namespace {

DescentResult descent_impl(const GroundTruthInstance* truth, const ObservationSet& obs,
                           const DescentConfig& config) {
    if (config.sweeps < 1) throw config_error("descent needs at least one sweep");
    if (config.r < 1) throw config_error("model rank must be at least 1");
    auto t0 = std::chrono::steady_clock::now();

    double lambda = config.lambda;
    if (lambda < 0.0)
        lambda = 0.1 * static_cast<double>(obs.size()) /
                 static_cast<double>(obs.n + obs.m);

    DescentResult result;
    result.lambda_used = lambda;
    FactorAssignment& fa = result.assignment;
    fa.n = obs.n;
    fa.m = obs.m;
    fa.r = config.r;
    fa.u.resize(obs.n * config.r);
    fa.v.resize(obs.m * config.r);
    for (std::size_t i = 0; i < fa.u.size(); ++i)
        fa.u[i] = config.init_scale *
                  (2.0 * rng::unit(config.seed, rng::Stream::init_u, i) - 1.0);
    for (std::size_t a = 0; a < fa.v.size(); ++a)
        fa.v[a] = config.init_scale *
                  (2.0 * rng::unit(config.seed, rng::Stream::init_v, a) - 1.0);

    DescentWorkspace ws = make_descent_workspace(obs);

    auto fit_error = [&]() {
        if (obs.size() == 0) return 0.0;
        double ss = 0.0;
        for (std::size_t e = 0; e < obs.size(); ++e) {
            auto [i, a] = obs.edges[e];
            double d = obs.values[e] - fa.entry(i, a);
            ss += d * d;
        }
        return std::sqrt(ss / static_cast<double>(obs.size()));
    };
    auto prediction_error = [&](double fit) {
        if (config.holdout) {
            const ObservationSet& h = *config.holdout;
            if (h.size() == 0) return std::numeric_limits<double>::quiet_NaN();
            double ss = 0.0;
            for (std::size_t e = 0; e < h.size(); ++e) {
                auto [i, a] = h.edges[e];
                double d = h.values[e] - fa.entry(i, a);
                ss += d * d;
            }
            return std::sqrt(ss / static_cast<double>(h.size()));
        }
        if (!truth) return std::numeric_limits<double>::quiet_NaN();
        double total = static_cast<double>(obs.n) * static_cast<double>(obs.m);
        double hidden = total - static_cast<double>(obs.size());
        if (hidden <= 0.0) return 0.0;
        double all = rmse_factors(*truth, fa);
        double fit_ss = fit * fit * static_cast<double>(obs.size());
        return std::sqrt(std::max(all * all * total - fit_ss, 0.0) / hidden);
    };

    double previous = energy(fa, obs, lambda);
    for (std::size_t sweep = 0; sweep < config.sweeps; ++sweep) {
        // Row blocks decouple once V is frozen (and vice versa), so each
        // half-sweep is a perfect parallel loop.
        parallel_for(config.jobs, obs.n,
                     [&](std::size_t i) { update_row(i, fa, obs, ws, lambda); });
        parallel_for(config.jobs, obs.m,
                     [&](std::size_t a) { update_col(a, fa, obs, ws, lambda); });

        SweepStats stats;
        stats.energy = energy(fa, obs, lambda);
        if (stats.energy > previous + 1e-9 * std::max(1.0, previous))
            throw numerical_error("descent energy increased across a sweep");
        previous = stats.energy;
        stats.fit_error = fit_error();
        stats.prediction_error = prediction_error(stats.fit_error);
        result.trajectory.push_back(stats);
    }

    const SweepStats& last = result.trajectory.back();
    result.report.fit_error = last.fit_error;
    result.report.prediction_error = last.prediction_error;
    result.report.rmse = truth ? rmse_factors(*truth, fa)
                               : std::numeric_limits<double>::quiet_NaN();
    result.report.steps = config.sweeps;
    for (std::size_t s = 0; s < result.trajectory.size(); ++s)
        result.report.cost_trajectory.emplace_back(s + 1, result.trajectory[s].energy);
    result.report.wall_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
    return result;
}

}  // namespace

DescentResult run_descent(const GroundTruthInstance& truth, const ObservationSet& obs,
                          const DescentConfig& config) {
    if (truth.n != obs.n || truth.m != obs.m)
        throw config_error("truth dimensions do not match the observations");
    return descent_impl(&truth, obs, config);
}

DescentResult run_descent(const ObservationSet& obs, const DescentConfig& config) {
    return descent_impl(nullptr, obs, config);
}

}  // namespace mclab
