#include "vinegof/bicop.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace vinegof;

namespace {

BicopSpec spec(FamilyKind k, std::vector<double> par, Rotation r = Rotation::R0) {
    return BicopSpec{BicopFamily{k, r}, std::move(par)};
}

const std::vector<BicopSpec> kRepresentatives = {
    spec(FamilyKind::Gauss, {0.6}),
    spec(FamilyKind::Gauss, {-0.45}),
    spec(FamilyKind::StudentT, {0.5, 4.0}),
    spec(FamilyKind::StudentT, {-0.3, 9.0}),
    spec(FamilyKind::Clayton, {2.0}),
    spec(FamilyKind::Clayton, {0.9}, Rotation::R90),
    spec(FamilyKind::Clayton, {3.0}, Rotation::R180),
    spec(FamilyKind::Gumbel, {2.0}),
    spec(FamilyKind::Gumbel, {1.4}, Rotation::R270),
    spec(FamilyKind::Frank, {5.0}),
    spec(FamilyKind::Frank, {-3.0}),
    spec(FamilyKind::Joe, {2.0}),
    spec(FamilyKind::Joe, {1.7}, Rotation::R180),
};

} // namespace

TEST_CASE("pdf closed-form reference values") {
    // values frozen from 40-digit evaluations of the closed-form densities
    // (Archimedean ones via d2C/dudv of the exact cdf)
    CHECK(pdf(spec(FamilyKind::Clayton, {2.0}), 0.5, 0.5) ==
          doctest::Approx(1.4810036493422781).epsilon(1e-12));
    CHECK(pdf(spec(FamilyKind::Clayton, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.62928945100121642).epsilon(1e-12));
    CHECK(pdf(spec(FamilyKind::Gauss, {0.6}), 0.3, 0.7) ==
          doctest::Approx(0.82749658777143331).epsilon(1e-12));
    CHECK(pdf(spec(FamilyKind::StudentT, {0.5, 4.0}), 0.3, 0.7) ==
          doctest::Approx(0.83176214455958384).epsilon(1e-11));
    CHECK(pdf(spec(FamilyKind::Gumbel, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.66367839652401047).epsilon(1e-11));
    CHECK(pdf(spec(FamilyKind::Frank, {5.0}), 0.2, 0.8) ==
          doctest::Approx(0.24087844592014755).epsilon(1e-11));
    CHECK(pdf(spec(FamilyKind::Frank, {-3.0}), 0.3, 0.7) ==
          doctest::Approx(1.317444261848456).epsilon(1e-11));
    CHECK(pdf(spec(FamilyKind::Joe, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.82216048471451512).epsilon(1e-11));
    // rotation by 90 degrees reflects the first argument
    CHECK(pdf(spec(FamilyKind::Clayton, {2.0}, Rotation::R90), 0.3, 0.7) ==
          doctest::Approx(1.5296104659027977).epsilon(1e-12));
    CHECK(pdf(spec(FamilyKind::Independence, {}), 0.123, 0.9) ==
          doctest::Approx(1.0));
    CHECK(log_pdf(spec(FamilyKind::Gauss, {0.6}), 0.3, 0.7) ==
          doctest::Approx(std::log(0.82749658777143331)).epsilon(1e-12));
}

TEST_CASE("h-function reference values") {
    CHECK(hfunc(spec(FamilyKind::Clayton, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.068823717712561608).epsilon(1e-12));
    CHECK(hfunc(spec(FamilyKind::Gauss, {0.6}), 0.3, 0.7) ==
          doctest::Approx(0.14713485272061434).epsilon(1e-12));
    CHECK(hfunc(spec(FamilyKind::StudentT, {0.5, 4.0}), 0.3, 0.7) ==
          doctest::Approx(0.16898530985462387).epsilon(1e-10));
    CHECK(hfunc(spec(FamilyKind::Gumbel, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.11559784394154602).epsilon(1e-11));
    CHECK(hfunc(spec(FamilyKind::Frank, {5.0}), 0.2, 0.8) ==
          doctest::Approx(0.031062774127550945).epsilon(1e-11));
    CHECK(hfunc(spec(FamilyKind::Joe, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.20900157182558334).epsilon(1e-11));
    CHECK(hfunc(spec(FamilyKind::Independence, {}), 0.3, 0.7) ==
          doctest::Approx(0.3));
}

TEST_CASE("cdf reference values and unsupported families") {
    CHECK(cdf(spec(FamilyKind::Clayton, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.28686490250570262).epsilon(1e-12));
    CHECK(cdf(spec(FamilyKind::Gumbel, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.28487806202094995).epsilon(1e-12));
    CHECK(cdf(spec(FamilyKind::Joe, {2.0}), 0.3, 0.7) ==
          doctest::Approx(0.26794808927235222).epsilon(1e-12));
    CHECK(cdf(spec(FamilyKind::Independence, {}), 0.3, 0.7) ==
          doctest::Approx(0.21));
    CHECK_THROWS_AS(cdf(spec(FamilyKind::Gauss, {0.5}), 0.3, 0.7),
                    UnsupportedFamily);
    CHECK_THROWS_AS(cdf(spec(FamilyKind::StudentT, {0.5, 4.0}), 0.3, 0.7),
                    UnsupportedFamily);
}

TEST_CASE("h-functions are the partial derivatives of the cdf") {
    // central differences of the closed-form cdf (Archimedean families)
    const double eps = 1e-6;
    for (const auto& sp : kRepresentatives) {
        if (sp.family.kind == FamilyKind::Gauss ||
            sp.family.kind == FamilyKind::StudentT)
            continue; // no closed-form cdf exposed
        for (double u : {0.2, 0.55, 0.85})
            for (double v : {0.35, 0.7}) {
                const double fd_v =
                    (cdf(sp, u, v + eps) - cdf(sp, u, v - eps)) / (2 * eps);
                const double fd_u =
                    (cdf(sp, u + eps, v) - cdf(sp, u - eps, v)) / (2 * eps);
                CHECK(hfunc(sp, u, v) == doctest::Approx(fd_v).epsilon(5e-6));
                CHECK(hfunc2(sp, u, v) == doctest::Approx(fd_u).epsilon(5e-6));
            }
    }
}

TEST_CASE("pdf is the mixed second derivative of the cdf") {
    const double eps = 1e-4;
    for (const auto& sp : kRepresentatives) {
        if (sp.family.kind == FamilyKind::Gauss ||
            sp.family.kind == FamilyKind::StudentT)
            continue;
        for (double u : {0.3, 0.6})
            for (double v : {0.4, 0.75}) {
                const double fd =
                    (cdf(sp, u + eps, v + eps) - cdf(sp, u + eps, v - eps) -
                     cdf(sp, u - eps, v + eps) + cdf(sp, u - eps, v - eps)) /
                    (4 * eps * eps);
                CHECK(pdf(sp, u, v) == doctest::Approx(fd).epsilon(1e-5));
            }
    }
}

TEST_CASE("h-function monotonicity and range") {
    for (const auto& sp : kRepresentatives) {
        double prev = 0.0;
        for (double u : {0.05, 0.2, 0.4, 0.6, 0.8, 0.95}) {
            const double h = hfunc(sp, u, 0.37);
            CHECK(h > prev); // strictly increasing in the conditioned argument
            CHECK(h < 1.0);
            prev = h;
        }
    }
}

TEST_CASE("hinv round-trips hfunc") {
    for (const auto& sp : kRepresentatives)
        for (double u : {0.05, 0.3, 0.5, 0.9})
            for (double v : {0.1, 0.45, 0.8}) {
                const double w = hfunc(sp, u, v);
                CHECK(hinv(sp, w, v) == doctest::Approx(u).epsilon(1e-7));
                const double w2 = hfunc2(sp, u, v);
                CHECK(hinv2(sp, w2, u) == doctest::Approx(v).epsilon(1e-7));
            }
}

TEST_CASE("rotation identities") {
    const auto base = spec(FamilyKind::Gumbel, {1.8});
    const auto r90 = spec(FamilyKind::Gumbel, {1.8}, Rotation::R90);
    const auto r180 = spec(FamilyKind::Gumbel, {1.8}, Rotation::R180);
    const auto r270 = spec(FamilyKind::Gumbel, {1.8}, Rotation::R270);
    for (double u : {0.2, 0.6})
        for (double v : {0.3, 0.8}) {
            CHECK(pdf(r90, u, v) == doctest::Approx(pdf(base, 1 - u, v)).epsilon(1e-12));
            CHECK(pdf(r180, u, v) ==
                  doctest::Approx(pdf(base, 1 - u, 1 - v)).epsilon(1e-12));
            CHECK(pdf(r270, u, v) == doctest::Approx(pdf(base, u, 1 - v)).epsilon(1e-12));
            // survival rotation flips the sign of neither, 90/270 flip tau
            CHECK(cdf(r180, u, v) ==
                  doctest::Approx(u + v - 1 + cdf(base, 1 - u, 1 - v)).epsilon(1e-10));
        }
    CHECK(param_to_tau(r90) == doctest::Approx(-param_to_tau(base)).epsilon(1e-12));
    CHECK(param_to_tau(r180) == doctest::Approx(param_to_tau(base)).epsilon(1e-12));
    CHECK(param_to_tau(r270) == doctest::Approx(-param_to_tau(base)).epsilon(1e-12));
}

TEST_CASE("density integrates to one (quasi–Monte Carlo)") {
    double pt[2];
    for (const auto& sp : {spec(FamilyKind::Clayton, {2.0}),
                           spec(FamilyKind::StudentT, {0.5, 4.0}),
                           spec(FamilyKind::Frank, {-3.0})}) {
        double acc = 0;
        const int n = 40000;
        for (int i = 1; i <= n; ++i) {
            halton_point(i, 2, pt);
            acc += pdf(sp, pt[0], pt[1]);
        }
        CHECK(acc / n == doctest::Approx(1.0).epsilon(0.01));
    }
}

TEST_CASE("Kendall tau closed forms") {
    CHECK(param_to_tau(spec(FamilyKind::Gauss, {0.7071067811865476})) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(param_to_tau(spec(FamilyKind::StudentT, {0.7071067811865476, 4.0})) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(param_to_tau(spec(FamilyKind::Clayton, {2.0})) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(param_to_tau(spec(FamilyKind::Gumbel, {2.0})) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(param_to_tau(spec(FamilyKind::Frank, {5.0})) ==
          doctest::Approx(0.4567009581601169).epsilon(1e-10));
    // Joe at theta=2 has tau = 2 - pi^2/6
    CHECK(param_to_tau(spec(FamilyKind::Joe, {2.0})) ==
          doctest::Approx(0.35506593315177356).epsilon(1e-8));
    CHECK(param_to_tau(spec(FamilyKind::Independence, {})) == doctest::Approx(0.0));
}

TEST_CASE("tau to parameter") {
    CHECK(tau_to_param(BicopFamily{FamilyKind::Gauss, Rotation::R0}, 0.5)[0] ==
          doctest::Approx(0.7071067811865476).epsilon(1e-12));
    CHECK(tau_to_param(BicopFamily{FamilyKind::Clayton, Rotation::R0}, 0.71)[0] ==
          doctest::Approx(4.896551724137931).epsilon(1e-10));
    CHECK(tau_to_param(BicopFamily{FamilyKind::Gumbel, Rotation::R0}, 0.5)[0] ==
          doctest::Approx(2.0).epsilon(1e-12));
    CHECK(tau_to_param(BicopFamily{FamilyKind::Frank, Rotation::R0}, 0.5)[0] ==
          doctest::Approx(5.7362827070199709).epsilon(1e-7));
    CHECK(tau_to_param(BicopFamily{FamilyKind::Joe, Rotation::R0}, 0.5)[0] ==
          doctest::Approx(2.8562572119508065).epsilon(1e-6));
    // StudentT returns the placeholder nu
    const auto tp = tau_to_param(BicopFamily{FamilyKind::StudentT, Rotation::R0}, 0.5);
    REQUIRE(tp.size() == 2);
    CHECK(tp[0] == doctest::Approx(0.7071067811865476).epsilon(1e-12));
    CHECK(tp[1] == doctest::Approx(5.0));
    // rotated families take the matching sign
    CHECK(tau_to_param(BicopFamily{FamilyKind::Clayton, Rotation::R90}, -0.5)[0] ==
          doctest::Approx(2.0).epsilon(1e-10));
    CHECK_THROWS_AS(tau_to_param(BicopFamily{FamilyKind::Clayton, Rotation::R0}, -0.3),
                    IncompatibleTau);
    CHECK_THROWS_AS(tau_to_param(BicopFamily{FamilyKind::Gumbel, Rotation::R90}, 0.3),
                    IncompatibleTau);
    // round trips
    for (double tau : {0.15, 0.5, 0.83})
        for (FamilyKind k : {FamilyKind::Gauss, FamilyKind::Clayton,
                             FamilyKind::Gumbel, FamilyKind::Frank, FamilyKind::Joe}) {
            const BicopFamily fam{k, Rotation::R0};
            const BicopSpec sp{fam, tau_to_param(fam, tau)};
            CHECK(param_to_tau(sp) == doctest::Approx(tau).epsilon(1e-5));
        }
}

TEST_CASE("parameter gradient reference and finite differences") {
    // d log c / d rho for Gauss at rho=0.6, (u,v)=(0.3,0.7), 40-digit reference
    const auto g = loglik_grad(spec(FamilyKind::Gauss, {0.6}), 0.3, 0.7);
    REQUIRE(g.size() == 1);
    CHECK(g[0] == doctest::Approx(-0.78122436080285027).epsilon(1e-10));
    const auto h = loglik_hess(spec(FamilyKind::Gauss, {0.6}), 0.3, 0.7);
    CHECK(h(0, 0) == doctest::Approx(-5.2733093040142514).epsilon(1e-8));

    // analytic vs central differences across families and rotations
    std::mt19937_64 gen(99);
    for (const auto& sp : kRepresentatives) {
        if (sp.family.kind == FamilyKind::Independence) continue;
        for (int rep = 0; rep < 5; ++rep) {
            const double u = 0.05 + 0.9 * uniform01(gen);
            const double v = 0.05 + 0.9 * uniform01(gen);
            const auto grad = loglik_grad(sp, u, v);
            for (int k = 0; k < static_cast<int>(sp.params.size()); ++k) {
                const double step = 1e-5 * std::max(1.0, std::abs(sp.params[k]));
                BicopSpec up = sp, dn = sp;
                up.params[k] += step;
                dn.params[k] -= step;
                const double fd =
                    (log_pdf(up, u, v) - log_pdf(dn, u, v)) / (2 * step);
                CHECK(grad[k] == doctest::Approx(fd).epsilon(2e-4));
            }
        }
    }
}

TEST_CASE("pair_work agrees with the scalar entry points") {
    std::mt19937_64 gen(5);
    for (const auto& sp : kRepresentatives) {
        for (int rep = 0; rep < 3; ++rep) {
            const double a = 0.05 + 0.9 * uniform01(gen);
            const double b = 0.05 + 0.9 * uniform01(gen);
            PairWork w;
            pair_work(sp, a, b, true, w);
            CHECK(w.logc == doctest::Approx(log_pdf(sp, a, b)).epsilon(1e-11));
            CHECK(w.h1 == doctest::Approx(hfunc(sp, a, b)).epsilon(1e-11));
            CHECK(w.h2 == doctest::Approx(hfunc2(sp, a, b)).epsilon(1e-11));
            const auto grad = loglik_grad(sp, a, b);
            for (int k = 0; k < static_cast<int>(sp.params.size()); ++k)
                CHECK(w.dlogc_dpar[k] == doctest::Approx(grad[k]).epsilon(2e-4));
            // argument derivatives vs finite differences
            const double eps = 1e-6;
            CHECK(w.dlogc_da ==
                  doctest::Approx((log_pdf(sp, a + eps, b) - log_pdf(sp, a - eps, b)) /
                                  (2 * eps))
                      .epsilon(5e-5));
            CHECK(w.dh1_db ==
                  doctest::Approx((hfunc(sp, a, b + eps) - hfunc(sp, a, b - eps)) /
                                  (2 * eps))
                      .epsilon(5e-5));
            CHECK(w.dh2_da ==
                  doctest::Approx((hfunc2(sp, a + eps, b) - hfunc2(sp, a - eps, b)) /
                                  (2 * eps))
                      .epsilon(5e-5));
        }
    }
}

TEST_CASE("family codes") {
    CHECK(family_code(BicopFamily{FamilyKind::Gumbel, Rotation::R90}) == "gumbel@90");
    CHECK(family_code(BicopFamily{FamilyKind::Independence, Rotation::R0}) == "indep");
    for (const auto& sp : kRepresentatives)
        CHECK(family_from_code(family_code(sp.family)) == sp.family);
    CHECK_THROWS_AS(family_from_code("galois"), ParseError);
    CHECK_THROWS_AS(family_from_code("gumbel@45"), ParseError);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(validate_spec(spec(FamilyKind::Gauss, {1.0})), InvalidParameter);
    CHECK_THROWS_AS(validate_spec(spec(FamilyKind::Gauss, {0.2, 3.0})),
                    InvalidParameter);
    CHECK_THROWS_AS(validate_spec(spec(FamilyKind::StudentT, {0.2, 0.5})),
                    InvalidParameter);
    CHECK_THROWS_AS(validate_spec(spec(FamilyKind::Clayton, {0.0})), InvalidParameter);
    CHECK_THROWS_AS(validate_spec(spec(FamilyKind::Gumbel, {0.8})), InvalidParameter);
    CHECK_THROWS_AS(validate_spec(spec(FamilyKind::Frank, {0.0})), InvalidParameter);
    CHECK_THROWS_AS(validate_spec(spec(FamilyKind::Gauss, {0.5}, Rotation::R90)),
                    InvalidParameter);
    CHECK_NOTHROW(validate_spec(spec(FamilyKind::Joe, {1.0})));
    CHECK(param_count(FamilyKind::StudentT) == 2);
    CHECK(param_count(FamilyKind::Independence) == 0);
    CHECK(param_count(FamilyKind::Frank) == 1);
}
