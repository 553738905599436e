#include "doctest.h"

#include "dynabench/error.hpp"
#include "dynabench/random.hpp"
#include "dynabench/stats.hpp"
#include "stats_oracle.hpp"

#include <cmath>
#include <vector>

using namespace dynabench;
using dynabench::testing::bh_brute_force;
using dynabench::testing::t_tail_by_integration;

TEST_CASE("ols on an exact line") {
    const std::vector<double> x{0, 1, 2, 3, 4};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v + 1);
    const auto r = ols(x, y);
    CHECK(r.slope == doctest::Approx(2.0));
    CHECK(r.intercept == doctest::Approx(1.0));
    CHECK(r.r2 == doctest::Approx(1.0));
    CHECK(r.slope_p_value == doctest::Approx(0.0));
}

TEST_CASE("ols on symmetric data") {
    const std::vector<double> x{0, 1, 2}, y{0, 1, 0};
    const auto r = ols(x, y);
    CHECK(std::abs(r.slope) < 1e-15);
    CHECK(r.r2 == doctest::Approx(0.0));
    CHECK(r.slope_p_value == doctest::Approx(1.0));
    CHECK(r.intercept == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("ols degenerate inputs") {
    const std::vector<double> x{1, 1, 1}, y{0, 1, 2};
    CHECK_THROWS_AS(ols(x, y), DegenerateInputError);
    const std::vector<double> a{0, 1, 2}, flat{3, 3, 3};
    const auto r = ols(a, flat);
    CHECK(r.degenerate);
    CHECK(r.r2 == 1.0);
    CHECK_THROWS_AS(ols(std::vector<double>{1}, std::vector<double>{1}), DegenerateInputError);
    CHECK(std::isnan(ols(std::vector<double>{0, 1}, std::vector<double>{0, 3}).slope_p_value));
}

TEST_CASE("ols r2 equals squared correlation and p matches the integration oracle") {
    Rng rng(3);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 5 + static_cast<std::size_t>(rep) * 3;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = normal(rng);
            y[i] = 0.3 * x[i] + normal(rng);
        }
        const auto r = ols(x, y);
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < n; ++i) mx += x[i] / n, my += y[i] / n;
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
        }
        CHECK(std::abs(r.r2 - sxy * sxy / (sxx * syy)) < 1e-12);
        const double t = r.slope / r.slope_se;
        CHECK(std::abs(r.slope_p_value - t_tail_by_integration(t, static_cast<double>(n - 2))) < 1e-6);
    }
}

TEST_CASE("welch t test") {
    const std::vector<double> a{1.0, 2.0, 3.5, 4.0};
    const auto same = welch_ttest(a, a);
    CHECK(same.t_statistic == 0.0);
    CHECK(same.raw_p == doctest::Approx(1.0));

    const std::vector<double> z{1e-6, -1e-6, 1e-6, -1e-6}, o{1 + 1e-6, 1 - 1e-6, 1 - 1e-6, 1 + 1e-6};
    CHECK(welch_ttest(z, o).raw_p < 1e-6);

    const std::vector<double> flat{2, 2, 2};
    CHECK_THROWS_AS(welch_ttest(flat, a), DegenerateInputError);
    CHECK_THROWS_AS(welch_ttest(std::vector<double>{1}, a), DegenerateInputError);

    Rng rng(9);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> x(6 + rep), y(4 + 2 * rep);
        for (auto& v : x) v = normal(rng);
        for (auto& v : y) v = 0.5 + 2.0 * normal(rng);
        const auto r = welch_ttest(x, y);
        const auto s = welch_ttest(y, x);
        CHECK(r.t_statistic == doctest::Approx(-s.t_statistic));
        CHECK(r.raw_p == doctest::Approx(s.raw_p));
        CHECK(std::abs(r.raw_p - t_tail_by_integration(r.t_statistic, r.df)) < 1e-6);
    }
}

TEST_CASE("Benjamini-Hochberg adjustment") {
    const std::vector<double> p{0.01, 0.02, 0.03, 0.04};
    for (double v : bh_fdr(p)) CHECK(v == doctest::Approx(0.04));
    CHECK(bh_fdr(std::vector<double>{0.3}) == std::vector<double>{0.3});
    for (double v : bh_fdr(std::vector<double>{1, 1, 1})) CHECK(v == 1.0);
    CHECK_THROWS_AS(bh_fdr(std::vector<double>{0.5, 1.5}), NumericError);

    Rng rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> raw(3 + rep);
        for (auto& v : raw) v = std::pow(u(rng), 3);
        const auto adj = bh_fdr(raw);
        const auto ref = bh_brute_force(raw);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            CHECK(adj[i] == doctest::Approx(ref[i]).epsilon(1e-14));
            CHECK(adj[i] >= raw[i]);
            for (std::size_t j = 0; j < raw.size(); ++j)
                if (raw[i] < raw[j]) CHECK(adj[i] <= adj[j]);
        }
    }
}

TEST_CASE("bootstrap standard error") {
    const std::vector<double> c{4, 4, 4, 4};
    CHECK(bootstrap_se(c, 1000, 1) == 0.0);
    const std::vector<double> b{0, 1};
    CHECK(bootstrap_se(b, 100000, 2) == doctest::Approx(0.25).epsilon(0.08));
    CHECK(bootstrap_se(b, 1000, 5) == bootstrap_se(b, 1000, 5));
    CHECK_THROWS_AS(bootstrap_se(std::vector<double>{1}, 10, 1), DegenerateInputError);
}

TEST_CASE("median and mean") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 2, 3}) == 2.5);
    CHECK(mean(std::vector<double>{1, 2, 3}) == 2.0);
    CHECK_THROWS_AS(median({}), DegenerateInputError);
}
