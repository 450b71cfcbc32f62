#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"
#include "oracles.hpp"

using namespace mclab;

namespace {

FactorAssignment random_assignment(std::size_t n, std::size_t m, std::size_t r,
                                   std::uint64_t seed) {
    rng::SplitMix64 gen(seed);
    FactorAssignment fa;
    fa.n = n;
    fa.m = m;
    fa.r = r;
    fa.u.resize(n * r);
    fa.v.resize(m * r);
    for (double& x : fa.u) x = 2.0 * gen.unit() - 1.0;
    for (double& x : fa.v) x = 2.0 * gen.unit() - 1.0;
    return fa;
}

}  // namespace

TEST_CASE("uniform alphabet spacing and endpoints") {
    for (std::size_t n : {2, 3, 5, 9, 101}) {
        auto a = DiscreteAlphabet::uniform(n);
        CHECK(a.size() == n);
        CHECK(a.points.front() == -1.0);
        CHECK(a.points.back() == 1.0);
        REQUIRE(a.step.has_value());
        CHECK(*a.step == doctest::Approx(2.0 / static_cast<double>(n - 1)).epsilon(1e-15));
        for (std::size_t j = 1; j < n; ++j) {
            CHECK(a.points[j] > a.points[j - 1]);
            CHECK(a.points[j] - a.points[j - 1] == doctest::Approx(*a.step).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(DiscreteAlphabet::uniform(1), config_error);
    CHECK_THROWS_AS(DiscreteAlphabet({0.5, 0.5}), config_error);
    CHECK_THROWS_AS(DiscreteAlphabet({-1.5, 0.0}), config_error);
}

TEST_CASE("step-bounded alphabet never exceeds the requested spacing") {
    auto a = DiscreteAlphabet::with_step(0.5);
    CHECK(a.size() == 5);
    CHECK(*a.step == doctest::Approx(0.5));
    auto b = DiscreteAlphabet::with_step(0.4999);
    CHECK(*b.step <= 0.4999);
    CHECK_THROWS_AS(DiscreteAlphabet::with_step(0.0), config_error);
    CHECK_THROWS_AS(DiscreteAlphabet::with_step(2.5), config_error);
}

TEST_CASE("alphabet rounding is nearest with ties away from zero") {
    auto a = DiscreteAlphabet::uniform(3);  // {-1, 0, 1}
    CHECK(a.round(0.49) == 0.0);
    CHECK(a.round(0.5) == 1.0);
    CHECK(a.round(-0.5) == -1.0);
    CHECK(a.round(0.51) == 1.0);
    CHECK(a.round(2.0) == 1.0);
    CHECK(a.round(-7.0) == -1.0);
    CHECK(a.contains(0.0));
    CHECK(!a.contains(0.25));
    CHECK(a.contains(0.25, 0.3));
}

TEST_CASE("named distributions expose the right moments") {
    auto pm1 = FactorDistribution::named("pm1");
    CHECK(pm1.is_discrete());
    CHECK(pm1.mean() == doctest::Approx(0.0));
    CHECK(pm1.second_moment() == doctest::Approx(1.0));

    auto tern = FactorDistribution::named("ternary");
    CHECK(tern.second_moment() == doctest::Approx(2.0 / 3.0));

    auto unif = FactorDistribution::named("uniform");
    CHECK(!unif.is_discrete());
    CHECK(unif.second_moment() == doctest::Approx(1.0 / 3.0));

    auto a5 = FactorDistribution::named("alphabet5");
    CHECK(a5.alphabet.size() == 5);
    for (double w : a5.weights) CHECK(w == doctest::Approx(0.2));

    CHECK_THROWS_AS(FactorDistribution::named("cauchy"), config_error);
    CHECK_THROWS_AS(
        FactorDistribution::discrete(DiscreteAlphabet::uniform(2), {0.3, 0.3}),
        config_error);
    CHECK_THROWS_AS(
        FactorDistribution::discrete(DiscreteAlphabet::uniform(2), {-0.2, 1.2}),
        config_error);
}

TEST_CASE("inverse-cdf sampling hits the expected atoms") {
    auto pm1 = FactorDistribution::uniform_signs();
    CHECK(pm1.sample(0.0) == -1.0);
    CHECK(pm1.sample(0.4999) == -1.0);
    CHECK(pm1.sample(0.5) == 1.0);
    CHECK(pm1.sample(0.9999) == 1.0);

    auto unif = FactorDistribution::continuous_uniform();
    CHECK(unif.sample(0.0) == -1.0);
    CHECK(unif.sample(0.5) == 0.0);
    CHECK(unif.sample(0.75) == 0.5);

    std::vector<double> draws;
    rng::SplitMix64 gen(7);
    for (int k = 0; k < 4000; ++k) draws.push_back(unif.sample(gen.unit()));
    CHECK(oracles::ks_uniform(draws, -1.0, 1.0) < 1.63 / std::sqrt(4000.0));
}

TEST_CASE("rank-1 baseline distortion from the factor moments") {
    auto pm1 = FactorDistribution::uniform_signs();
    auto unif = FactorDistribution::continuous_uniform();
    auto tern = FactorDistribution::uniform_ternary();
    CHECK(rank1_baseline_d0(pm1, pm1) == doctest::Approx(1.0));
    CHECK(rank1_baseline_d0(unif, unif) == doctest::Approx(1.0 / 3.0));
    CHECK(rank1_baseline_d0(tern, tern) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("column count rounds ties to even") {
    CHECK(column_count(10, 1.0) == 10);
    CHECK(column_count(5, 0.5) == 2);    // 2.5 -> 2
    CHECK(column_count(15, 0.5) == 8);   // 7.5 -> 8
    CHECK(column_count(3, 1.5) == 4);    // 4.5 -> 4
    CHECK(column_count(7, 0.5) == 4);    // 3.5 -> 4
    CHECK_THROWS_AS(column_count(1, 0.2), config_error);
}

TEST_CASE("generated instances stay inside the factor model") {
    auto pm1 = FactorDistribution::uniform_signs();
    auto inst = generate_instance(2, 1.0, 1, pm1, pm1, 42);
    CHECK(inst.m == 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t a = 0; a < 2; ++a)
            CHECK(std::abs(inst.entry(i, a)) == doctest::Approx(1.0));
    // 2x2 rank-1: zero determinant.
    double det = inst.entry(0, 0) * inst.entry(1, 1) - inst.entry(0, 1) * inst.entry(1, 0);
    CHECK(det == doctest::Approx(0.0));

    auto unif = FactorDistribution::continuous_uniform();
    for (std::size_t r : {1, 3}) {
        auto big = generate_instance(17, 0.7, r, unif, unif, 9);
        for (double x : big.u) CHECK((x >= -1.0 && x <= 1.0));
        for (double x : big.v) CHECK((x >= -1.0 && x <= 1.0));
        for (std::size_t i = 0; i < big.n; ++i)
            for (std::size_t a = 0; a < big.m; ++a)
                CHECK(std::abs(big.entry(i, a)) <= static_cast<double>(r) + 1e-12);
    }
}

TEST_CASE("instance generation is a pure function of the seed") {
    auto unif = FactorDistribution::continuous_uniform();
    auto a = generate_instance(30, 1.0, 2, unif, unif, 1234);
    auto b = generate_instance(30, 1.0, 2, unif, unif, 1234);
    auto c = generate_instance(30, 1.0, 2, unif, unif, 1235);
    CHECK(a.u == b.u);
    CHECK(a.v == b.v);
    CHECK(a.u != c.u);
}

TEST_CASE("entry mean of large sign instances is centered") {
    // For r=1 the mean entry is (sum U)(sum V)/(n m); scaled by
    // sqrt(n m)/D0 it is asymptotically standard normal, so the average of
    // that score over many seeds concentrates at 0 with sd 1/sqrt(seeds).
    auto pm1 = FactorDistribution::uniform_signs();
    const std::size_t n = 10000;
    const int seeds = 100;
    double zsum = 0.0;
    for (int s = 0; s < seeds; ++s) {
        auto inst = generate_instance(n, 1.0, 1, pm1, pm1, 500 + s);
        double su = 0.0, sv = 0.0;
        for (double x : inst.u) su += x;
        for (double x : inst.v) sv += x;
        double mean = su * sv / (static_cast<double>(n) * static_cast<double>(inst.m));
        zsum += mean * std::sqrt(static_cast<double>(n) * static_cast<double>(inst.m));
    }
    CHECK(std::abs(zsum / seeds) < 3.0 / std::sqrt(static_cast<double>(seeds)));
}

TEST_CASE("rmse equals the elementwise definition") {
    auto unif = FactorDistribution::continuous_uniform();
    auto truth = generate_instance(5, 1.0, 2, unif, unif, 77);

    SUBCASE("identity gives zero") {
        CHECK(rmse(truth, matrix_ref(truth)) == 0.0);
    }
    SUBCASE("single perturbed entry") {
        auto two = generate_instance(2, 1.0, 1, FactorDistribution::uniform_signs(),
                                     FactorDistribution::uniform_signs(), 3);
        MatrixRef off{2, 2, [&two](std::size_t i, std::size_t a) {
                          double v = two.entry(i, a);
                          return (i == 0 && a == 1) ? v + 2.0 : v;
                      }};
        CHECK(rmse(two, off) == doctest::Approx(1.0));
    }
    SUBCASE("random pair matches the naive loop") {
        rng::SplitMix64 gen(5);
        std::vector<double> other(25);
        for (double& x : other) x = 2.0 * gen.unit() - 1.0;
        MatrixRef est{5, 5, [&](std::size_t i, std::size_t a) { return other[i * 5 + a]; }};
        double naive = oracles::naive_rmse(
            5, 5, [&](std::size_t i, std::size_t a) { return truth.entry(i, a); },
            [&](std::size_t i, std::size_t a) { return est.at(i, a); });
        CHECK(rmse(truth, est) == doctest::Approx(naive).epsilon(1e-12));
    }
    SUBCASE("dimension mismatch is rejected") {
        MatrixRef bad{4, 5, [](std::size_t, std::size_t) { return 0.0; }};
        CHECK_THROWS_AS(rmse(truth, bad), config_error);
    }
}

TEST_CASE("rmse behaves like a metric") {
    auto unif = FactorDistribution::continuous_uniform();
    auto truth = generate_instance(6, 1.0, 2, unif, unif, 11);
    rng::SplitMix64 gen(12);
    std::vector<double> b(36), c(36);
    for (double& x : b) x = 2.0 * gen.unit() - 1.0;
    for (double& x : c) x = 2.0 * gen.unit() - 1.0;
    MatrixRef mb{6, 6, [&](std::size_t i, std::size_t a) { return b[i * 6 + a]; }};
    MatrixRef mc{6, 6, [&](std::size_t i, std::size_t a) { return c[i * 6 + a]; }};

    double ab = rmse(truth, mb);
    double ac = rmse(truth, mc);
    double bc = oracles::naive_rmse(
        6, 6, [&](std::size_t i, std::size_t a) { return mb.at(i, a); },
        [&](std::size_t i, std::size_t a) { return mc.at(i, a); });
    CHECK(ab <= ac + bc + 1e-12);
    CHECK(ac <= ab + bc + 1e-12);
    CHECK(rmse(truth, matrix_ref(truth)) == 0.0);
}

TEST_CASE("factored rmse agrees with the dense computation") {
    auto unif = FactorDistribution::continuous_uniform();
    auto truth = generate_instance(14, 0.8, 2, unif, unif, 21);
    auto est = random_assignment(14, truth.m, 3, 99);  // estimate rank differs
    double dense = oracles::naive_rmse(
        truth.n, truth.m, [&](std::size_t i, std::size_t a) { return truth.entry(i, a); },
        [&](std::size_t i, std::size_t a) { return est.entry(i, a); });
    CHECK(rmse_factors(truth, est) == doctest::Approx(dense).epsilon(1e-12));
}

TEST_CASE("fit and prediction errors split the square error") {
    auto unif = FactorDistribution::continuous_uniform();
    auto truth = generate_instance(10, 1.0, 2, unif, unif, 31);
    auto obs = sample_observations(truth, 3.0, 31);

    SUBCASE("identity estimate gives zero everywhere") {
        auto [fit, pred] = fit_and_prediction_error(truth, matrix_ref(truth), obs);
        CHECK(fit == 0.0);
        CHECK(pred == 0.0);
    }
    SUBCASE("constant offset off the observed set") {
        std::vector<std::vector<bool>> on(truth.n, std::vector<bool>(truth.m, false));
        for (auto [i, a] : obs.edges) on[i][a] = true;
        const double c = 0.37;
        MatrixRef est{truth.n, truth.m, [&](std::size_t i, std::size_t a) {
                          return truth.entry(i, a) + (on[i][a] ? 0.0 : c);
                      }};
        auto [fit, pred] = fit_and_prediction_error(truth, est, obs);
        CHECK(fit == doctest::Approx(0.0));
        CHECK(pred == doctest::Approx(c).epsilon(1e-12));
    }
    SUBCASE("decomposition identity against total rmse") {
        auto est = random_assignment(truth.n, truth.m, 2, 17);
        auto [fit, pred] = fit_and_prediction_error(truth, est, obs);
        double total = rmse_factors(truth, est);
        double nm = static_cast<double>(truth.n) * static_cast<double>(truth.m);
        double e = static_cast<double>(obs.size());
        double lhs = total * total * nm;
        double rhs = fit * fit * e + pred * pred * (nm - e);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));

        // Dense and factored overloads agree.
        auto [fit2, pred2] = fit_and_prediction_error(truth, matrix_ref(est), obs);
        CHECK(fit2 == doctest::Approx(fit).epsilon(1e-12));
        CHECK(pred2 == doctest::Approx(pred).epsilon(1e-10));
    }
    SUBCASE("empty and saturated observation sets are rejected") {
        ObservationSet empty;
        empty.n = truth.n;
        empty.m = truth.m;
        CHECK_THROWS_AS(fit_and_prediction_error(truth, matrix_ref(truth), empty),
                        config_error);

        ObservationSet full;
        full.n = truth.n;
        full.m = truth.m;
        for (std::uint32_t i = 0; i < truth.n; ++i)
            for (std::uint32_t a = 0; a < truth.m; ++a) {
                full.edges.emplace_back(i, a);
                full.values.push_back(truth.entry(i, a));
            }
        full.epsilon = static_cast<double>(truth.m);
        CHECK_THROWS_AS(fit_and_prediction_error(truth, matrix_ref(truth), full),
                        config_error);
    }
    SUBCASE("explicit holdout overrides the complement") {
        auto [rest, held] = split_holdout(obs, 5, 3);
        auto est = random_assignment(truth.n, truth.m, 2, 18);
        auto [fit, pred] = fit_and_prediction_error(truth, est, rest, &held);
        double ss = 0.0;
        for (auto [i, a] : held.edges) {
            double d = truth.entry(i, a) - est.entry(i, a);
            ss += d * d;
        }
        CHECK(pred == doctest::Approx(std::sqrt(ss / 5.0)).epsilon(1e-12));
        (void)fit;
    }
}

TEST_CASE("quantization bounds the product perturbation") {
    SUBCASE("alphabet members are fixed points") {
        FactorAssignment fa;
        fa.n = 1;
        fa.m = 2;
        fa.r = 1;
        fa.u = {0.5};
        fa.v = {-1.0, 0.0};
        auto q = quantize(fa, 0.5);
        CHECK(q.u == fa.u);
        CHECK(q.v == fa.v);
        REQUIRE(q.alphabet.has_value());
        CHECK(q.alphabet->size() == 5);
    }
    SUBCASE("rounding a single factor moves the product less than r*delta") {
        FactorAssignment fa;
        fa.n = 1;
        fa.m = 1;
        fa.r = 1;
        fa.u = {0.99};
        fa.v = {1.0};
        auto q = quantize(fa, 0.5);
        CHECK(q.u[0] == doctest::Approx(1.0));
        CHECK(std::abs(fa.entry(0, 0) - q.entry(0, 0)) == doctest::Approx(0.01));
        CHECK(std::abs(fa.entry(0, 0) - q.entry(0, 0)) <= 0.5);
    }
    SUBCASE("entrywise error stays below r*delta over random assignments") {
        for (double delta : {0.1, 0.5}) {
            for (std::uint64_t t = 0; t < 1000; ++t) {
                auto fa = random_assignment(4, 4, 3, 1000 + t);
                auto q = quantize(fa, delta);
                for (std::size_t i = 0; i < 4; ++i)
                    for (std::size_t a = 0; a < 4; ++a)
                        CHECK(std::abs(fa.entry(i, a) - q.entry(i, a)) <=
                              3.0 * delta + 1e-12);
            }
        }
    }
    SUBCASE("idempotent") {
        auto fa = random_assignment(3, 3, 2, 5);
        auto q1 = quantize(fa, 0.3);
        auto q2 = quantize(q1, 0.3);
        CHECK(q1.u == q2.u);
        CHECK(q1.v == q2.v);
    }
    SUBCASE("invalid steps are rejected") {
        auto fa = random_assignment(2, 2, 1, 6);
        CHECK_THROWS_AS(quantize(fa, 0.0), config_error);
        CHECK_THROWS_AS(quantize(fa, 2.5), config_error);
    }
}

TEST_CASE("assignment validation enforces range and alphabet") {
    FactorAssignment fa;
    fa.n = 1;
    fa.m = 1;
    fa.r = 1;
    fa.u = {0.5};
    fa.v = {1.0};
    CHECK_NOTHROW(fa.validate());
    fa.u = {1.5};
    CHECK_THROWS_AS(fa.validate(), config_error);
    fa.u = {0.5};
    fa.alphabet = DiscreteAlphabet({-1.0, 1.0}, 2.0);
    CHECK_THROWS_AS(fa.validate(), config_error);
    fa.u = {1.0};
    CHECK_NOTHROW(fa.validate());
    fa.v = {1.0, 0.0};
    CHECK_THROWS_AS(fa.validate(), config_error);
}

TEST_CASE("alphabet power enumeration is lexicographic and guarded") {
    auto a = DiscreteAlphabet::uniform(3);
    auto tuples = enumerate_power(a, 2);
    REQUIRE(tuples.size() == 9);
    CHECK(tuples[0] == std::vector<double>{-1.0, -1.0});
    CHECK(tuples[1] == std::vector<double>{-1.0, 0.0});
    CHECK(tuples[3] == std::vector<double>{0.0, -1.0});
    CHECK(tuples[8] == std::vector<double>{1.0, 1.0});
    CHECK_THROWS_AS(enumerate_power(a, 2, 8), config_error);
    CHECK_THROWS_AS(enumerate_power(DiscreteAlphabet::uniform(101), 3), config_error);
}
