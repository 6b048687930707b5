#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace vinegof;

TEST_CASE("normal cdf/pdf/quantile") {
    CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(norm_cdf(1.96) == doctest::Approx(0.97500210485177957).epsilon(1e-13));
    CHECK(norm_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2 * M_PI)).epsilon(1e-14));
    CHECK(norm_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    for (double p : {1e-6, 0.001, 0.3, 0.5, 0.9, 0.999})
        CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-11));
    CHECK_THROWS_AS(norm_quantile(0.0), DomainError);
    CHECK_THROWS_AS(norm_quantile(1.0), DomainError);
}

TEST_CASE("student t cdf/pdf/quantile") {
    CHECK(t_cdf(2.0, 5.0) == doctest::Approx(0.9490302605850709).epsilon(1e-13));
    CHECK(t_pdf(0.5, 4.0) == doctest::Approx(0.3222618685603871).epsilon(1e-13));
    CHECK(t_quantile(0.9, 7.0) == doctest::Approx(1.4149239276488585).epsilon(1e-12));
    for (double p : {0.01, 0.4, 0.77})
        CHECK(t_cdf(t_quantile(p, 3.5), 3.5) == doctest::Approx(p).epsilon(1e-11));
    // symmetry
    CHECK(t_cdf(-1.3, 6.0) == doctest::Approx(1.0 - t_cdf(1.3, 6.0)).epsilon(1e-13));
}

TEST_CASE("chi-square survival function") {
    CHECK(chi2_sf(3.841458820694124, 1.0) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(chi2_sf(60.0, 55.0) == doctest::Approx(0.2993892488386465).epsilon(1e-12));
    // deep tail stays accurate
    CHECK(chi2_sf(120.0, 55.0) == doctest::Approx(9.725644768004435e-07).epsilon(1e-10));
    CHECK(chi2_sf(0.0, 7.0) == doctest::Approx(1.0));
}

TEST_CASE("Debye D1") {
    CHECK(debye1(1.0) == doctest::Approx(0.77750463411224828).epsilon(1e-12));
    CHECK(debye1(5.0) == doctest::Approx(0.32087619770014612).epsilon(1e-12));
    // reflection D1(-x) = D1(x) + x/2
    CHECK(debye1(-2.0) == doctest::Approx(1.6069472846098101).epsilon(1e-12));
    CHECK(debye1(-2.0) == doctest::Approx(debye1(2.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("Kendall tau") {
    CHECK(kendall_tau({1, 2, 3}, {1, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(kendall_tau({1, 2, 3, 4}, {1, 2, 3, 4}) == doctest::Approx(1.0));
    CHECK(kendall_tau({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    // tau-b tie correction
    CHECK(kendall_tau({1, 1, 2, 3}, {2, 1, 4, 3}) ==
          doctest::Approx(0.5477225575051662).epsilon(1e-12));
    // O(n log n) path agrees with the O(n^2) definition on random data
    std::mt19937_64 gen(7);
    std::vector<double> x(200), y(200);
    for (int i = 0; i < 200; ++i) {
        x[i] = uniform01(gen);
        y[i] = 0.5 * x[i] + uniform01(gen);
    }
    double conc = 0;
    for (int i = 0; i < 200; ++i)
        for (int j = i + 1; j < 200; ++j) {
            const double s = (x[i] - x[j]) * (y[i] - y[j]);
            conc += s > 0 ? 1 : (s < 0 ? -1 : 0);
        }
    const double brute = conc / (200.0 * 199.0 / 2.0);
    CHECK(kendall_tau(x, y) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("uniform ranks") {
    const auto r = uniform_ranks({3.2, -1.0, 7.0});
    REQUIRE(r.size() == 3);
    CHECK(r[0] == doctest::Approx(0.5));
    CHECK(r[1] == doctest::Approx(0.25));
    CHECK(r[2] == doctest::Approx(0.75));
    // ties get midranks
    const auto t = uniform_ranks({1.0, 1.0, 2.0});
    CHECK(t[0] == doctest::Approx(1.5 / 4.0));
    CHECK(t[1] == doctest::Approx(1.5 / 4.0));
    CHECK(t[2] == doctest::Approx(3.0 / 4.0));
}

TEST_CASE("Brent solvers") {
    const double root = brent_root([](double x) { return std::cos(x); }, 1.0, 2.0);
    CHECK(root == doctest::Approx(M_PI / 2).epsilon(1e-12));
    const double xmin = brent_min(
        [](double x) { return (x - 1.3) * (x - 1.3); }, -5.0, 5.0, 1e-10);
    CHECK(xmin == doctest::Approx(1.3).epsilon(1e-7));
    CHECK_THROWS_AS(
        brent_root([](double x) { return 1.0 + x * x; }, -1.0, 1.0), Error);
}

TEST_CASE("Halton sequence") {
    double p[3];
    halton_point(1, 2, p);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0));
    halton_point(2, 2, p);
    CHECK(p[0] == doctest::Approx(0.25));
    CHECK(p[1] == doctest::Approx(2.0 / 3.0));
    halton_point(4, 3, p);
    CHECK(p[0] == doctest::Approx(0.125));
    CHECK(p[1] == doctest::Approx(4.0 / 9.0));
    CHECK(p[2] == doctest::Approx(4.0 / 5.0)); // radical inverse of 4 in base 5
    // first 1000 points fill (0,1)^2 roughly uniformly
    double mx = 0, my = 0;
    for (int i = 1; i <= 1000; ++i) {
        halton_point(i, 2, p);
        mx += p[0];
        my += p[1];
    }
    CHECK(mx / 1000 == doctest::Approx(0.5).epsilon(0.01));
    CHECK(my / 1000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("KS statistic and p-value") {
    const auto unif = [](double x) { return x; };
    CHECK(ks_statistic({0.25, 0.75}, unif) == doctest::Approx(0.25).epsilon(1e-14));
    // Kolmogorov tail with the small-sample factor sqrt(n)+0.12+0.11/sqrt(n):
    // d=0.0136, n=1e4 -> x=1.36164696, Q(x)=0.0490442438012472
    CHECK(ks_pvalue(1.36 / 100.0, 10000) ==
          doctest::Approx(0.0490442438012472).epsilon(1e-8));
    // a uniform grid has tiny D and p near 1
    std::vector<double> grid;
    for (int i = 1; i <= 999; ++i) grid.push_back(i / 1000.0);
    CHECK(ks_statistic(grid, unif) < 0.002);
}

TEST_CASE("DKW band width") {
    CHECK(dkw_epsilon(200, 0.01) == doctest::Approx(0.11509037065).epsilon(1e-8));
    CHECK(dkw_epsilon(800, 0.01) == doctest::Approx(0.11509037065 / 2).epsilon(1e-8));
}

TEST_CASE("splitmix64 reference vector") {
    std::uint64_t s = 0;
    CHECK(splitmix64(s) == 0xE220A8397B1DCDAFull);
    CHECK(splitmix64(s) == 0x6E789E6AA1B965F4ull);
}

TEST_CASE("derive_seed is deterministic and stream-separating") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    std::set<std::uint64_t> seen;
    for (std::uint64_t purpose : {0x53494Dull, 0x424F4F54ull})
        for (std::uint64_t idx = 0; idx < 100; ++idx)
            seen.insert(derive_seed(42, purpose, idx));
    CHECK(seen.size() == 200); // no collisions across purposes/indices
}

TEST_CASE("uniform01 stays inside the open interval") {
    std::mt19937_64 gen(123);
    for (int i = 0; i < 10000; ++i) {
        const double u = uniform01(gen);
        CHECK(u >= 1e-10);
        CHECK(u <= 1.0 - 1e-10);
    }
}
