#include "mclab/walkrank.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>

namespace mclab {

namespace {
constexpr std::uint32_t kNoSlot = 0xFFFFFFFFu;
// Cumulative cap on cached satisfying pairs (memory guard).
constexpr std::size_t kPairCacheCap = 20000000;
// Probability that a forced repair with unavoidable collateral damage picks
// a uniform satisfying pair instead of a collateral-minimizing one.
constexpr double kWalkNoise = 0.5;

double dot(const double* a, const double* b, std::size_t r) {
    double s = 0.0;
    for (std::size_t k = 0; k < r; ++k) s += a[k] * b[k];
    return s;
}
}  // namespace

std::uint64_t violation_cost(const FactorAssignment& assignment, const ObservationSet& obs,
                             double delta) {
    if (assignment.n != obs.n || assignment.m != obs.m)
        throw config_error("assignment dimensions do not match the observations");
    std::uint64_t cost = 0;
    for (std::size_t e = 0; e < obs.size(); ++e) {
        auto [i, a] = obs.edges[e];
        double est = dot(&assignment.u[i * assignment.r], &assignment.v[a * assignment.r],
                         assignment.r);
        if (std::abs(est - obs.values[e]) > delta) ++cost;
    }
    return cost;
}

SearchState::SearchState(FactorAssignment assignment, const ObservationSet& obs,
                         const WalkRankConfig& config)
    : assignment_(std::move(assignment)), obs_(&obs), delta_(config.delta) {
    if (assignment_.n != obs.n || assignment_.m != obs.m)
        throw config_error("assignment dimensions do not match the observations");
    power_ = enumerate_power(config.alphabet, assignment_.r);

    row_off_.assign(obs.n + 1, 0);
    col_off_.assign(obs.m + 1, 0);
    for (auto [i, a] : obs.edges) {
        ++row_off_[i + 1];
        ++col_off_[a + 1];
    }
    for (std::size_t i = 0; i < obs.n; ++i) row_off_[i + 1] += row_off_[i];
    for (std::size_t a = 0; a < obs.m; ++a) col_off_[a + 1] += col_off_[a];
    row_edge_.resize(obs.size());
    col_edge_.resize(obs.size());
    {
        std::vector<std::size_t> rp(row_off_.begin(), row_off_.end() - 1);
        std::vector<std::size_t> cp(col_off_.begin(), col_off_.end() - 1);
        for (std::uint32_t e = 0; e < obs.size(); ++e) {
            auto [i, a] = obs.edges[e];
            row_edge_[rp[i]++] = e;
            col_edge_[cp[a]++] = e;
        }
    }

    pos_.assign(obs.size(), kNoSlot);
    for (std::uint32_t e = 0; e < obs.size(); ++e) refresh_edge(e);
}

void SearchState::refresh_edge(std::size_t e) {
    auto [i, a] = obs_->edges[e];
    double est = dot(&assignment_.u[i * assignment_.r], &assignment_.v[a * assignment_.r],
                     assignment_.r);
    bool bad = std::abs(est - obs_->values[e]) > delta_;
    bool listed = pos_[e] != kNoSlot;
    if (bad && !listed) {
        pos_[e] = static_cast<std::uint32_t>(violated_.size());
        violated_.push_back(static_cast<std::uint32_t>(e));
    } else if (!bad && listed) {
        std::uint32_t slot = pos_[e];
        std::uint32_t last = violated_.back();
        violated_[slot] = last;
        pos_[last] = slot;
        violated_.pop_back();
        pos_[e] = kNoSlot;
    }
}

std::uint64_t SearchState::local_cost(bool row_side, std::size_t vertex,
                                      const std::vector<double>& candidate) const {
    std::uint64_t bad = 0;
    if (row_side) {
        for (std::size_t k = row_off_[vertex]; k < row_off_[vertex + 1]; ++k) {
            std::uint32_t e = row_edge_[k];
            std::uint32_t a = obs_->edges[e].second;
            double est = dot(candidate.data(), &assignment_.v[a * assignment_.r],
                             assignment_.r);
            if (std::abs(est - obs_->values[e]) > delta_) ++bad;
        }
    } else {
        for (std::size_t k = col_off_[vertex]; k < col_off_[vertex + 1]; ++k) {
            std::uint32_t e = col_edge_[k];
            std::uint32_t i = obs_->edges[e].first;
            double est = dot(&assignment_.u[i * assignment_.r], candidate.data(),
                             assignment_.r);
            if (std::abs(est - obs_->values[e]) > delta_) ++bad;
        }
    }
    return bad;
}

void SearchState::greedy_move(bool row_side, rng::SplitMix64& gen) {
    std::size_t side_count = row_side ? obs_->n : obs_->m;
    std::size_t vertex = gen.below(side_count);

    std::uint64_t best = static_cast<std::uint64_t>(-1);
    std::vector<std::uint32_t> minimizers;
    for (std::uint32_t c = 0; c < power_.size(); ++c) {
        std::uint64_t bad = local_cost(row_side, vertex, power_[c]);
        if (bad < best) {
            best = bad;
            minimizers.clear();
            minimizers.push_back(c);
        } else if (bad == best) {
            minimizers.push_back(c);
        }
    }
    std::uint32_t pick = minimizers[gen.below(minimizers.size())];

    std::uint64_t before = cost();
    double* slot = row_side ? &assignment_.u[vertex * assignment_.r]
                            : &assignment_.v[vertex * assignment_.r];
    std::copy(power_[pick].begin(), power_[pick].end(), slot);
    if (row_side) {
        for (std::size_t k = row_off_[vertex]; k < row_off_[vertex + 1]; ++k)
            refresh_edge(row_edge_[k]);
    } else {
        for (std::size_t k = col_off_[vertex]; k < col_off_[vertex + 1]; ++k)
            refresh_edge(col_edge_[k]);
    }
    if (cost() > before)
        throw error("greedy move increased the cost: incremental bookkeeping broken");
}

const std::vector<std::pair<std::uint32_t, std::uint32_t>>& SearchState::satisfying_pairs(
    double value) {
    auto it = pair_cache_.find(value);
    if (it != pair_cache_.end()) return it->second;

    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::uint32_t cu = 0; cu < power_.size(); ++cu)
        for (std::uint32_t cv = 0; cv < power_.size(); ++cv)
            if (std::abs(dot(power_[cu].data(), power_[cv].data(), assignment_.r) - value) <=
                delta_)
                pairs.emplace_back(cu, cv);
    if (pairs.empty())
        throw data_error("no factor pair over the alphabet reproduces an observed value");
    if (cached_pairs_ + pairs.size() > kPairCacheCap) {
        // Over the memory cap: keep one reusable slot alive instead of
        // growing; correctness is unaffected, only reuse across values.
        static thread_local std::vector<std::pair<std::uint32_t, std::uint32_t>> scratch;
        scratch = std::move(pairs);
        return scratch;
    }
    cached_pairs_ += pairs.size();
    return pair_cache_.emplace(value, std::move(pairs)).first->second;
}

void SearchState::walk_move(rng::SplitMix64& gen) {
    if (violated_.empty()) throw error("walk move requires a violated observation");
    std::uint32_t e = violated_[gen.below(violated_.size())];
    auto [i, a] = obs_->edges[e];
    std::size_t r = assignment_.r;

    // Rank the pairs that satisfy this edge by how many other edges of the
    // two stars they break.  A break-free pair is always taken (uniformly
    // among them); otherwise the collateral-minimizing choice is mixed with
    // a uniform draw over all satisfying pairs, the noise that keeps forced
    // repairs from settling into short two-edge limit cycles.
    const auto& pairs = satisfying_pairs(obs_->values[e]);
    std::uint64_t best = static_cast<std::uint64_t>(-1);
    std::vector<std::uint32_t> minimizers;
    for (std::uint32_t c = 0; c < pairs.size(); ++c) {
        auto [cu, cv] = pairs[c];
        std::uint64_t bad = 0;
        for (std::size_t k = row_off_[i]; k < row_off_[i + 1] && bad <= best; ++k) {
            std::uint32_t f = row_edge_[k];
            if (f == e) continue;
            double est = dot(power_[cu].data(), &assignment_.v[obs_->edges[f].second * r], r);
            if (std::abs(est - obs_->values[f]) > delta_) ++bad;
        }
        for (std::size_t k = col_off_[a]; k < col_off_[a + 1] && bad <= best; ++k) {
            std::uint32_t f = col_edge_[k];
            if (f == e) continue;
            double est = dot(&assignment_.u[obs_->edges[f].first * r], power_[cv].data(), r);
            if (std::abs(est - obs_->values[f]) > delta_) ++bad;
        }
        if (bad < best) {
            best = bad;
            minimizers.clear();
            minimizers.push_back(c);
        } else if (bad == best) {
            minimizers.push_back(c);
        }
    }
    std::uint32_t chosen;
    if (best == 0 || gen.unit() >= kWalkNoise)
        chosen = minimizers[gen.below(minimizers.size())];
    else
        chosen = static_cast<std::uint32_t>(gen.below(pairs.size()));
    auto [cu, cv] = pairs[chosen];
    std::copy(power_[cu].begin(), power_[cu].end(), &assignment_.u[i * r]);
    std::copy(power_[cv].begin(), power_[cv].end(), &assignment_.v[a * r]);

    for (std::size_t k = row_off_[i]; k < row_off_[i + 1]; ++k) refresh_edge(row_edge_[k]);
    for (std::size_t k = col_off_[a]; k < col_off_[a + 1]; ++k) refresh_edge(col_edge_[k]);
}

void SearchState::check_consistency() const {
    std::uint64_t recount = 0;
    for (std::uint32_t e = 0; e < obs_->size(); ++e) {
        auto [i, a] = obs_->edges[e];
        double est = dot(&assignment_.u[i * assignment_.r], &assignment_.v[a * assignment_.r],
                         assignment_.r);
        bool bad = std::abs(est - obs_->values[e]) > delta_;
        if (bad) ++recount;
        if (bad != (pos_[e] != kNoSlot))
            throw error("incremental violated set disagrees with recomputation");
    }
    if (recount != cost())
        throw error("incremental cost disagrees with recomputation");
}

std::uint64_t default_step_budget(std::size_t n) {
    if (n < 2) return 50;
    auto k = static_cast<std::uint64_t>(std::bit_width(n - 1));  // ceil(log2 n)
    return 50 * static_cast<std::uint64_t>(n) * k * k;
}

WalkRankConfig quantized_config(const WalkRankConfig& base, std::size_t r,
                                double delta_step) {
    WalkRankConfig out = base;
    out.alphabet = DiscreteAlphabet::with_step(delta_step);
    out.delta = base.delta + 2.0 * static_cast<double>(r) * *out.alphabet.step;
    return out;
}

namespace {

std::pair<FactorAssignment, DistortionReport> run_impl(const GroundTruthInstance* truth,
                                                       const ObservationSet& obs,
                                                       std::size_t r,
                                                       const WalkRankConfig& config) {
    if (!(config.rho >= 0.0 && config.rho <= 1.0))
        throw config_error("walk probability must lie in [0, 1]");
    auto t0 = std::chrono::steady_clock::now();

    FactorAssignment init;
    init.n = obs.n;
    init.m = obs.m;
    init.r = r;
    init.alphabet = config.alphabet;
    init.u.resize(obs.n * r);
    init.v.resize(obs.m * r);
    auto n_points = static_cast<double>(config.alphabet.size());
    auto pick = [&](rng::Stream stream, std::uint64_t index) {
        auto j = static_cast<std::size_t>(rng::unit(config.seed, stream, index) * n_points);
        return config.alphabet.points[std::min(j, config.alphabet.size() - 1)];
    };
    for (std::size_t i = 0; i < init.u.size(); ++i)
        init.u[i] = pick(rng::Stream::init_u, i);
    for (std::size_t a = 0; a < init.v.size(); ++a)
        init.v[a] = pick(rng::Stream::init_v, a);

    SearchState state(std::move(init), obs, config);
    rng::SplitMix64 gen(rng::derive(config.seed, rng::Stream::moves, 0));

    std::uint64_t budget = config.max_steps ? config.max_steps
                                            : default_step_budget(obs.n);
    std::uint64_t log_every = config.log_every ? config.log_every
                                               : std::max<std::uint64_t>(1, budget / 1024);

    DistortionReport report;
    report.cost_trajectory.emplace_back(0, static_cast<double>(state.cost()));
    std::uint64_t steps = 0;
    while (state.cost() > config.target_cost && steps < budget) {
        if (gen.unit() < config.rho)
            state.walk_move(gen);
        else {
            std::size_t t = gen.below(obs.n + obs.m);
            state.greedy_move(t < obs.n, gen);
        }
        ++steps;
        if (steps % 1000000 == 0) state.check_consistency();
        if (steps % log_every == 0)
            report.cost_trajectory.emplace_back(steps, static_cast<double>(state.cost()));
    }
    state.check_consistency();
    if (report.cost_trajectory.back().first != steps)
        report.cost_trajectory.emplace_back(steps, static_cast<double>(state.cost()));
    report.steps = steps;

    const FactorAssignment& fit = state.assignment();
    double fit_ss = 0.0;
    for (std::size_t e = 0; e < obs.size(); ++e) {
        auto [i, a] = obs.edges[e];
        double d = obs.values[e] - fit.entry(i, a);
        fit_ss += d * d;
    }
    report.fit_error = obs.size() ? std::sqrt(fit_ss / static_cast<double>(obs.size())) : 0.0;
    if (truth) {
        report.rmse = rmse_factors(*truth, fit);
        double total = static_cast<double>(truth->n) * static_cast<double>(truth->m);
        double hidden = total - static_cast<double>(obs.size());
        report.prediction_error =
            hidden > 0.0
                ? std::sqrt(std::max(report.rmse * report.rmse * total - fit_ss, 0.0) / hidden)
                : 0.0;
    } else {
        report.rmse = std::numeric_limits<double>::quiet_NaN();
        report.prediction_error = std::numeric_limits<double>::quiet_NaN();
    }
    report.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return {state.assignment(), report};
}

}  // namespace

std::pair<FactorAssignment, DistortionReport> run_walkrank(const GroundTruthInstance& truth,
                                                           const ObservationSet& obs,
                                                           const WalkRankConfig& config) {
    return run_impl(&truth, obs, truth.r, config);
}

std::pair<FactorAssignment, DistortionReport> run_walkrank(const ObservationSet& obs,
                                                           std::size_t r,
                                                           const WalkRankConfig& config) {
    return run_impl(nullptr, obs, r, config);
}

}  // namespace mclab
