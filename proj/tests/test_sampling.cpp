#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"
#include "oracles.hpp"

using namespace mclab;

namespace {

ObservationSet make_obs(std::size_t n, std::size_t m,
                        std::vector<std::pair<std::uint32_t, std::uint32_t>> edges) {
    ObservationSet obs;
    obs.n = n;
    obs.m = m;
    obs.edges = std::move(edges);
    obs.values.assign(obs.edges.size(), 1.0);
    obs.epsilon = static_cast<double>(obs.edges.size()) / static_cast<double>(n);
    return obs;
}

std::vector<std::size_t> flat_labels(const ComponentLabeling& c) {
    std::vector<std::size_t> out = c.row_label;
    out.insert(out.end(), c.col_label.begin(), c.col_label.end());
    return out;
}

}  // namespace

TEST_CASE("sampling draws the requested number of distinct in-range entries") {
    auto unif = FactorDistribution::continuous_uniform();
    auto truth = generate_instance(100, 1.0, 2, unif, unif, 4);
    auto obs = sample_observations(truth, 5.0, 21);
    CHECK(obs.size() == 500);
    CHECK(obs.epsilon == doctest::Approx(5.0));
    std::set<std::pair<std::uint32_t, std::uint32_t>> uniq(obs.edges.begin(), obs.edges.end());
    CHECK(uniq.size() == obs.size());
    for (std::size_t e = 0; e < obs.size(); ++e) {
        auto [i, a] = obs.edges[e];
        CHECK(i < truth.n);
        CHECK(a < truth.m);
        CHECK(obs.values[e] == truth.entry(i, a));
    }
    CHECK_NOTHROW(obs.validate());
}

TEST_CASE("sampling saturates at the full matrix and rejects impossible counts") {
    auto pm1 = FactorDistribution::uniform_signs();
    auto truth = generate_instance(4, 1.0, 1, pm1, pm1, 8);
    auto full = sample_observations(truth, 4.0, 3);
    CHECK(full.size() == 16);
    std::set<std::pair<std::uint32_t, std::uint32_t>> uniq(full.edges.begin(),
                                                           full.edges.end());
    CHECK(uniq.size() == 16);

    CHECK_THROWS_AS(sample_observations(truth, 4.25, 3), config_error);
    CHECK_THROWS_AS(sample_observations(truth, 0.0, 3), config_error);
    CHECK_THROWS_AS(sample_observations(truth, -1.0, 3), config_error);
    CHECK_THROWS_AS(sample_observations(truth, 0.1, 3), config_error);  // rounds to 0
}

TEST_CASE("sampling is deterministic in the seed") {
    auto unif = FactorDistribution::continuous_uniform();
    auto truth = generate_instance(60, 1.0, 1, unif, unif, 5);
    auto a = sample_observations(truth, 3.0, 7);
    auto b = sample_observations(truth, 3.0, 7);
    auto c = sample_observations(truth, 3.0, 8);
    CHECK(a.edges == b.edges);
    CHECK(a.values == b.values);
    CHECK(a.edges != c.edges);
}

TEST_CASE("observation validation flags malformed sets") {
    auto obs = make_obs(3, 3, {{0, 0}, {1, 2}});
    CHECK_NOTHROW(obs.validate());

    auto short_values = obs;
    short_values.values.pop_back();
    CHECK_THROWS_AS(short_values.validate(), data_error);

    auto out_of_range = obs;
    out_of_range.edges.push_back({3, 0});
    out_of_range.values.push_back(0.5);
    CHECK_THROWS_AS(out_of_range.validate(), data_error);

    auto duplicate = obs;
    duplicate.edges.push_back({0, 0});
    duplicate.values.push_back(0.5);
    CHECK_THROWS_AS(duplicate.validate(), data_error);
}

TEST_CASE("cell occupation is uniform across many seeds") {
    // Each seed reveals exactly 500 of the 2500 cells, so per-seed counts are
    // a without-replacement draw; summed over 10^4 seeds every cell expects
    // 2000 hits.  The Pearson statistic then concentrates around
    // (1 - 500/2500) * 2499; the band below is that mean +- 5 sd.
    auto pm1 = FactorDistribution::uniform_signs();
    auto truth = generate_instance(50, 1.0, 1, pm1, pm1, 99);
    std::vector<std::uint64_t> counts(2500, 0);
    const int seeds = 10000;
    for (int s = 0; s < seeds; ++s) {
        auto obs = sample_observations(truth, 10.0, 100000 + s);
        for (auto [i, a] : obs.edges) ++counts[i * 50 + a];
    }
    double stat = oracles::chi_square_stat(counts, 2000.0);
    CHECK(stat > 1717.0);
    CHECK(stat < 2283.0);
}

TEST_CASE("holdout split partitions the edges and keeps their order") {
    auto unif = FactorDistribution::continuous_uniform();
    auto truth = generate_instance(40, 1.0, 2, unif, unif, 13);
    auto obs = sample_observations(truth, 4.0, 13);
    auto [rest, held] = split_holdout(obs, 30, 5);

    CHECK(rest.size() == obs.size() - 30);
    CHECK(held.size() == 30);
    CHECK(rest.n == obs.n);
    CHECK(held.m == obs.m);
    CHECK(rest.epsilon == doctest::Approx(static_cast<double>(rest.size()) / 40.0));
    CHECK(held.epsilon == doctest::Approx(30.0 / 40.0));

    std::set<std::pair<std::uint32_t, std::uint32_t>> all(obs.edges.begin(), obs.edges.end());
    std::set<std::pair<std::uint32_t, std::uint32_t>> got;
    for (auto e : rest.edges) got.insert(e);
    for (auto e : held.edges) got.insert(e);
    CHECK(got == all);
    CHECK(got.size() == rest.size() + held.size());

    // Both halves preserve the relative order of the original edge list.
    auto index_of = [&](std::pair<std::uint32_t, std::uint32_t> e) {
        for (std::size_t k = 0; k < obs.edges.size(); ++k)
            if (obs.edges[k] == e) return k;
        return obs.edges.size();
    };
    for (std::size_t k = 1; k < rest.edges.size(); ++k)
        CHECK(index_of(rest.edges[k - 1]) < index_of(rest.edges[k]));
    for (std::size_t k = 1; k < held.edges.size(); ++k)
        CHECK(index_of(held.edges[k - 1]) < index_of(held.edges[k]));

    // Values stay attached to their edges.
    for (std::size_t k = 0; k < held.edges.size(); ++k) {
        auto [i, a] = held.edges[k];
        CHECK(held.values[k] == truth.entry(i, a));
    }

    auto [r2, h2] = split_holdout(obs, 30, 5);
    CHECK(r2.edges == rest.edges);
    CHECK(h2.edges == held.edges);

    CHECK_THROWS_AS(split_holdout(obs, obs.size(), 5), config_error);
    CHECK_THROWS_AS(split_holdout(obs, obs.size() + 10, 5), config_error);
}

TEST_CASE("empty observation graphs are all singletons") {
    auto obs = make_obs(4, 3, {});
    auto comp = connected_components(obs);
    CHECK(comp.sizes.size() == 7);
    for (const auto& s : comp.sizes) {
        CHECK(s.rows + s.cols == 1);
        CHECK(s.edges == 0);
    }
    CHECK(!comp.giant.has_value());
    std::set<std::size_t> labels(comp.row_label.begin(), comp.row_label.end());
    labels.insert(comp.col_label.begin(), comp.col_label.end());
    CHECK(labels.size() == 7);
}

TEST_CASE("two rows sharing a column are connected") {
    auto obs = make_obs(3, 3, {{0, 2}, {1, 2}});
    auto comp = connected_components(obs);
    CHECK(comp.row_label[0] == comp.row_label[1]);
    CHECK(comp.row_label[0] == comp.col_label[2]);
    CHECK(comp.row_label[2] != comp.row_label[0]);
    CHECK(comp.col_label[0] != comp.col_label[2]);
    REQUIRE(comp.giant.has_value());
    const auto& g = comp.sizes[*comp.giant];
    CHECK(g.rows == 2);
    CHECK(g.cols == 1);
    CHECK(g.edges == 2);
    CHECK(*comp.giant == comp.row_label[0]);
}

TEST_CASE("component labels agree with a sweep-based reference") {
    rng::SplitMix64 gen(2024);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 2 + gen.below(24);
        std::size_t m = 2 + gen.below(24);
        std::size_t want = gen.below(n * m / 2 + 1);
        std::set<std::pair<std::uint32_t, std::uint32_t>> chosen;
        while (chosen.size() < want)
            chosen.insert({static_cast<std::uint32_t>(gen.below(n)),
                           static_cast<std::uint32_t>(gen.below(m))});
        auto obs = make_obs(n, m, {chosen.begin(), chosen.end()});
        auto comp = connected_components(obs);
        auto ref = oracles::sweep_components(n, m, obs.edges);
        CHECK(oracles::same_partition(flat_labels(comp), ref));

        std::size_t rows = 0, cols = 0, edges = 0, biggest = 0;
        for (const auto& s : comp.sizes) {
            rows += s.rows;
            cols += s.cols;
            edges += s.edges;
            biggest = std::max(biggest, s.rows + s.cols);
        }
        CHECK(rows == n);
        CHECK(cols == m);
        CHECK(edges == obs.size());
        if (comp.giant) {
            const auto& g = comp.sizes[*comp.giant];
            CHECK(g.rows + g.cols == biggest);
            CHECK(biggest >= 2);
        } else {
            CHECK(biggest <= 1);
        }
    }
}

TEST_CASE("giant component fraction matches the fixed point") {
    auto unif = FactorDistribution::continuous_uniform();
    double row_sum = 0.0, col_sum = 0.0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
        auto truth = generate_instance(1000, 1.0, 1, unif, unif, 300 + s);
        auto obs = sample_observations(truth, 2.0, 300 + s);
        auto comp = connected_components(obs);
        REQUIRE(comp.giant.has_value());
        const auto& g = comp.sizes[*comp.giant];
        row_sum += static_cast<double>(g.rows) / 1000.0;
        col_sum += static_cast<double>(g.cols) / 1000.0;
    }
    CHECK(std::abs(row_sum / seeds - 0.796812130020020) < 0.03);
    CHECK(std::abs(col_sum / seeds - 0.796812130020020) < 0.03);
}

TEST_CASE("fixed point collapses below the connectivity threshold") {
    auto sol = giant_component_fixed_point(0.9, 1.0, 1e-12);
    CHECK(sol.xi == 0.0);
    CHECK(sol.zeta == 0.0);
    auto edge = giant_component_fixed_point(1.0, 1.0, 1e-12);
    CHECK(edge.xi == 0.0);
    auto scaled = giant_component_fixed_point(1.4, 0.5, 1e-12);  // eps^2 alpha = 0.98
    CHECK(scaled.xi == 0.0);
}

TEST_CASE("fixed point reproduces known supercritical values") {
    auto sol = giant_component_fixed_point(2.0, 1.0, 1e-12);
    CHECK(sol.xi == doctest::Approx(0.796812130020020).epsilon(1e-10));
    CHECK(sol.zeta == doctest::Approx(1.0 - std::exp(-2.0 * sol.xi)).epsilon(1e-12));
    CHECK(sol.residual <= 1e-12);

    CHECK(giant_component_fixed_point(1.5, 1.0, 1e-12).xi ==
          doctest::Approx(0.582811643865811).epsilon(1e-10));
    CHECK(giant_component_fixed_point(3.0, 1.0, 1e-12).xi ==
          doctest::Approx(0.940479790707359).epsilon(1e-10));
    CHECK(giant_component_fixed_point(4.0, 1.0, 1e-12).xi ==
          doctest::Approx(0.980172598718222).epsilon(1e-10));

    auto sat = giant_component_fixed_point(50.0, 1.0, 1e-12);
    CHECK(std::abs(sat.xi - 1.0) < 1e-10);
    CHECK(std::abs(sat.zeta - 1.0) < 1e-10);
}

TEST_CASE("both fixed-point methods agree with bisection from first principles") {
    for (double eps : {1.1, 1.5, 2.0, 3.0, 5.0}) {
        for (double alpha : {0.5, 1.0, 2.0}) {
            auto damped =
                giant_component_fixed_point(eps, alpha, 1e-12, FixedPointMethod::damped_iteration);
            auto bisect =
                giant_component_fixed_point(eps, alpha, 1e-12, FixedPointMethod::bisection);
            double ref = oracles::bisect_xi(eps, alpha);
            CAPTURE(eps);
            CAPTURE(alpha);
            CHECK(std::abs(damped.xi - bisect.xi) < 1e-10);
            CHECK(std::abs(damped.xi - ref) < 1e-9);
            if (damped.xi > 0.0) {
                CHECK(damped.zeta == doctest::Approx(1.0 - std::exp(-eps * damped.xi))
                                         .epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("giant size is nondecreasing in the observation rate") {
    double prev = 0.0;
    for (double eps = 1.0; eps <= 8.0; eps += 0.25) {
        double xi = giant_component_fixed_point(eps, 1.0, 1e-12).xi;
        CHECK(xi >= prev - 1e-12);
        prev = xi;
    }
}

TEST_CASE("fixed point rejects invalid parameters") {
    CHECK_THROWS_AS(giant_component_fixed_point(0.0, 1.0, 1e-12), config_error);
    CHECK_THROWS_AS(giant_component_fixed_point(-2.0, 1.0, 1e-12), config_error);
    CHECK_THROWS_AS(giant_component_fixed_point(2.0, 0.0, 1e-12), config_error);
    CHECK_THROWS_AS(giant_component_fixed_point(2.0, 1.0, 0.0), config_error);
}
