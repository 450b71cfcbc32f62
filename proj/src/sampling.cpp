#include "mclab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace mclab {

void ObservationSet::validate() const {
    if (edges.size() != values.size())
        throw data_error("observation edges and values differ in length");
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(edges.size() * 2);
    for (auto [i, a] : edges) {
        if (i >= n || a >= m) throw data_error("observation index out of range");
        std::uint64_t key = static_cast<std::uint64_t>(i) * m + a;
        if (!seen.insert(key).second) throw data_error("duplicate observed entry");
    }
}

ObservationSet sample_observations(const GroundTruthInstance& truth, double epsilon,
                                   std::uint64_t seed) {
    if (!(epsilon > 0.0)) throw config_error("epsilon must be positive");
    auto total = static_cast<std::uint64_t>(truth.n) * truth.m;
    double exact = static_cast<double>(truth.n) * epsilon;
    auto count = static_cast<std::uint64_t>(std::nearbyint(exact));
    if (count < 1) throw config_error("n*epsilon rounds below 1 observation");
    if (count > total) throw config_error("more observations requested than matrix entries");

    ObservationSet obs;
    obs.n = truth.n;
    obs.m = truth.m;
    obs.epsilon = epsilon;
    obs.edges.reserve(count);
    obs.values.reserve(count);

    // Rejection-sample distinct cells; with |E| = O(n) out of n*m cells the
    // collision rate is negligible and the draw sequence stays deterministic.
    std::unordered_set<std::uint64_t> taken;
    taken.reserve(count * 2);
    std::uint64_t counter = 0;
    while (taken.size() < count) {
        std::uint64_t cell = rng::below(seed, rng::Stream::edge_sample, counter, total);
        if (!taken.insert(cell).second) continue;
        auto i = static_cast<std::uint32_t>(cell / truth.m);
        auto a = static_cast<std::uint32_t>(cell % truth.m);
        obs.edges.emplace_back(i, a);
        obs.values.push_back(truth.entry(i, a));
    }
    return obs;
}

std::pair<ObservationSet, ObservationSet> split_holdout(const ObservationSet& obs,
                                                        std::size_t count,
                                                        std::uint64_t seed) {
    if (count >= obs.size())
        throw config_error("holdout must leave at least one observation");

    // Partial Fisher-Yates over the edge indices: the first `count` slots
    // become the holdout.
    std::vector<std::size_t> order(obs.size());
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t counter = 0;
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t j = i + rng::below(seed, rng::Stream::holdout, counter,
                                         obs.size() - i);
        std::swap(order[i], order[j]);
    }
    std::vector<bool> held(obs.size(), false);
    for (std::size_t i = 0; i < count; ++i) held[order[i]] = true;

    ObservationSet remaining, holdout;
    remaining.n = holdout.n = obs.n;
    remaining.m = holdout.m = obs.m;
    for (std::size_t e = 0; e < obs.size(); ++e) {
        auto& dst = held[e] ? holdout : remaining;
        dst.edges.push_back(obs.edges[e]);
        dst.values.push_back(obs.values[e]);
    }
    remaining.epsilon = static_cast<double>(remaining.size()) / static_cast<double>(obs.n);
    holdout.epsilon = static_cast<double>(holdout.size()) / static_cast<double>(obs.n);
    return {std::move(remaining), std::move(holdout)};
}

ComponentLabeling connected_components(const ObservationSet& obs) {
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    ComponentLabeling out;
    out.row_label.assign(obs.n, kNone);
    out.col_label.assign(obs.m, kNone);

    // CSR adjacency for both sides.
    std::vector<std::size_t> row_off(obs.n + 1, 0), col_off(obs.m + 1, 0);
    for (auto [i, a] : obs.edges) {
        ++row_off[i + 1];
        ++col_off[a + 1];
    }
    for (std::size_t i = 0; i < obs.n; ++i) row_off[i + 1] += row_off[i];
    for (std::size_t a = 0; a < obs.m; ++a) col_off[a + 1] += col_off[a];
    std::vector<std::uint32_t> row_adj(obs.size()), col_adj(obs.size());
    {
        std::vector<std::size_t> rp(row_off.begin(), row_off.end() - 1);
        std::vector<std::size_t> cp(col_off.begin(), col_off.end() - 1);
        for (auto [i, a] : obs.edges) {
            row_adj[rp[i]++] = a;
            col_adj[cp[a]++] = i;
        }
    }

    std::vector<std::uint32_t> stack;
    auto explore = [&](bool seed_is_row, std::uint32_t seed_vertex, std::size_t label) {
        ComponentLabeling::Size size;
        stack.clear();
        // Encode side in the low bit: rows even, columns odd.
        stack.push_back(seed_vertex << 1 | (seed_is_row ? 0u : 1u));
        (seed_is_row ? out.row_label[seed_vertex] : out.col_label[seed_vertex]) = label;
        while (!stack.empty()) {
            std::uint32_t code = stack.back();
            stack.pop_back();
            std::uint32_t v = code >> 1;
            if ((code & 1u) == 0) {
                ++size.rows;
                size.edges += row_off[v + 1] - row_off[v];
                for (std::size_t k = row_off[v]; k < row_off[v + 1]; ++k) {
                    std::uint32_t a = row_adj[k];
                    if (out.col_label[a] != kNone) continue;
                    out.col_label[a] = label;
                    stack.push_back(a << 1 | 1u);
                }
            } else {
                ++size.cols;
                for (std::size_t k = col_off[v]; k < col_off[v + 1]; ++k) {
                    std::uint32_t i = col_adj[k];
                    if (out.row_label[i] != kNone) continue;
                    out.row_label[i] = label;
                    stack.push_back(i << 1);
                }
            }
        }
        return size;
    };

    for (std::uint32_t i = 0; i < obs.n; ++i)
        if (out.row_label[i] == kNone)
            out.sizes.push_back(explore(true, i, out.sizes.size()));
    for (std::uint32_t a = 0; a < obs.m; ++a)
        if (out.col_label[a] == kNone)
            out.sizes.push_back(explore(false, a, out.sizes.size()));

    std::size_t best = 0, best_vertices = 0;
    for (std::size_t c = 0; c < out.sizes.size(); ++c) {
        std::size_t vertices = out.sizes[c].rows + out.sizes[c].cols;
        if (vertices > best_vertices) {
            best_vertices = vertices;
            best = c;
        }
    }
    if (best_vertices > 1) out.giant = best;
    return out;
}

GiantComponentSolution giant_component_fixed_point(double epsilon, double alpha, double tol,
                                                   FixedPointMethod method) {
    if (!(epsilon > 0.0) || !(alpha > 0.0))
        throw config_error("fixed point needs positive epsilon and alpha");
    if (!(tol > 0.0)) throw config_error("fixed point tolerance must be positive");

    GiantComponentSolution sol;
    // Below (or at) the connectivity threshold the only solution is (0, 0).
    if (epsilon * epsilon * alpha <= 1.0) return sol;

    auto step = [&](double xi) {
        return 1.0 - std::exp(-epsilon * alpha * (1.0 - std::exp(-epsilon * xi)));
    };

    double xi = 1.0;
    bool converged = false;
    if (method == FixedPointMethod::damped_iteration) {
        // step() is increasing with step(x) < x above the largest root, so the
        // damped sequence from 1 decreases monotonically onto it.
        for (std::uint64_t it = 0; it < 200000; ++it) {
            double next = 0.5 * xi + 0.5 * step(xi);
            ++sol.iterations;
            if (std::abs(next - xi) < 0.25 * tol && std::abs(step(next) - next) < tol) {
                xi = next;
                converged = true;
                break;
            }
            xi = next;
        }
    }
    if (!converged) {
        // Bisection on g(x) = step(x) - x over (0, 1]; above threshold g > 0
        // on (0, root) and g(1) < 0.  Seed the bracket away from 0, where
        // cancellation in step() would hide the sign.
        double lo = 1e-12, hi = 1.0;
        while (lo < 0.5 && step(lo) - lo <= 0.0) lo *= 2.0;
        if (step(lo) - lo <= 0.0) return sol;  // numerically subcritical
        for (int it = 0; it < 2000 && hi - lo > tol * 1e-3; ++it) {
            double mid = 0.5 * (lo + hi);
            ++sol.iterations;
            if (step(mid) - mid > 0.0)
                lo = mid;
            else
                hi = mid;
        }
        xi = 0.5 * (lo + hi);
    }

    sol.xi = xi;
    sol.zeta = 1.0 - std::exp(-epsilon * xi);
    sol.residual = std::abs(step(xi) - xi);
    return sol;
}

}  // namespace mclab
