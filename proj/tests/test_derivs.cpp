#include "vinegof/derivs.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace vinegof;

namespace {

RVineModel model3_closed_form() {
    // families with closed-form parameter derivatives only
    const auto s = RVineStructure::from_edges(
        3, {VineEdge(1, 2), VineEdge(2, 3), VineEdge(1, 3, {2})});
    const std::vector<BicopSpec> pcs = {
        {BicopFamily{FamilyKind::Gauss, Rotation::R0}, {0.55}},
        {BicopFamily{FamilyKind::Clayton, Rotation::R0}, {1.7}},
        {BicopFamily{FamilyKind::Frank, Rotation::R0}, {3.5}},
    };
    return RVineModel(s, pcs);
}

RVineModel model4_mixed() {
    // includes kernel-differenced families (StudentT, Joe) and rotations
    const auto s = RVineStructure::from_edges(
        4, {VineEdge(1, 2), VineEdge(2, 3), VineEdge(3, 4), VineEdge(1, 3, {2}),
            VineEdge(2, 4, {3}), VineEdge(1, 4, {2, 3})});
    const std::vector<BicopSpec> pcs = {
        {BicopFamily{FamilyKind::StudentT, Rotation::R0}, {0.6, 5.0}},
        {BicopFamily{FamilyKind::Gumbel, Rotation::R0}, {1.8}},
        {BicopFamily{FamilyKind::Joe, Rotation::R180}, {1.6}},
        {BicopFamily{FamilyKind::Clayton, Rotation::R90}, {0.9}},
        {BicopFamily{FamilyKind::Frank, Rotation::R0}, {-2.5}},
        {BicopFamily{FamilyKind::Gauss, Rotation::R0}, {0.25}},
    };
    return RVineModel(s, pcs);
}

Eigen::VectorXd random_u(int d, std::mt19937_64& gen) {
    Eigen::VectorXd u(d);
    for (int j = 0; j < d; ++j) u[j] = 0.03 + 0.94 * uniform01(gen);
    return u;
}

} // namespace

TEST_CASE("vech takes the lower triangle column-major") {
    Eigen::MatrixXd m(3, 3);
    m << 1, 2, 3, //
        2, 4, 5,  //
        3, 5, 6;
    const Eigen::VectorXd v = vech(m);
    REQUIRE(v.size() == 6);
    CHECK(v[0] == 1); // (0,0)
    CHECK(v[1] == 2); // (1,0)
    CHECK(v[2] == 3); // (2,0)
    CHECK(v[3] == 4); // (1,1)
    CHECK(v[4] == 5); // (2,1)
    CHECK(v[5] == 6); // (2,2)
    CHECK(vech_size(3) == 6);
    CHECK(vech_size(10) == 55);
    CHECK(vech_size(20) == 210);
}

TEST_CASE("analytic recursion score equals plain finite differences") {
    const auto m = model3_closed_form();
    std::mt19937_64 gen(404);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::VectorXd u = random_u(3, gen);
        const auto ana = observation_derivs(m, u, DerivMethod::Analytic);
        const auto fd = observation_derivs(m, u, DerivMethod::FiniteDiff);
        REQUIRE(ana.score.size() == 3);
        for (int k = 0; k < 3; ++k) {
            const double denom = std::max(1.0, std::abs(fd.score[k]));
            CHECK(std::abs(ana.score[k] - fd.score[k]) / denom < 1e-4);
        }
    }
}

TEST_CASE("analytic method refuses kernel-differenced families") {
    const auto m = model4_mixed();
    Eigen::VectorXd u(4);
    u << 0.3, 0.5, 0.7, 0.4;
    CHECK_THROWS_AS(observation_derivs(m, u, DerivMethod::Analytic),
                    UnsupportedFamily);
    // the finite-difference method serves every family
    CHECK_NOTHROW(observation_derivs(m, u, DerivMethod::FiniteDiff));
}

TEST_CASE("recursion score on mixed families vs finite differences") {
    const auto m = model4_mixed();
    const Eigen::VectorXd theta = m.parameters();
    DerivEngine eng(m);
    DerivEngine::State st;
    std::mt19937_64 gen(808);
    auto work = m;
    for (int rep = 0; rep < 12; ++rep) {
        const Eigen::VectorXd u = random_u(4, gen);
        eng.base_pass(u, theta, st);
        for (int k = 0; k < theta.size(); ++k) {
            const double step = 1e-5 * std::max(1.0, std::abs(theta[k]));
            Eigen::VectorXd up = theta, dn = theta;
            up[k] += step;
            dn[k] -= step;
            work.set_parameters(up);
            const double lu = work.log_density(u);
            work.set_parameters(dn);
            const double ld = work.log_density(u);
            work.set_parameters(theta);
            const double fd = (lu - ld) / (2 * step);
            const double denom = std::max(1.0, std::abs(fd));
            CHECK(std::abs(st.score[k] - fd) / denom < 2e-4);
        }
    }
}

TEST_CASE("hessian is nearly symmetric before symmetrisation") {
    const auto m = model3_closed_form();
    DerivEngine eng(m);
    DerivEngine::State st;
    Eigen::MatrixXd h;
    std::mt19937_64 gen(111);
    for (int rep = 0; rep < 10; ++rep) {
        eng.base_pass(random_u(3, gen), m.parameters(), st);
        eng.hessian(st, h, /*symmetrize=*/false);
        double asym = 0;
        for (int i = 0; i < h.rows(); ++i)
            for (int j = 0; j < i; ++j)
                asym = std::max(asym,
                                std::abs(h(i, j) - h(j, i)) /
                                    std::max(1.0, std::abs(h(i, j))));
        CHECK(asym < 1e-6);
    }
}

TEST_CASE("sample matrices are the means of per-observation quantities") {
    const auto m = model3_closed_form();
    const auto sample = m.simulate(40, 2121);
    const auto sm = sample_matrices(m, sample);
    Eigen::MatrixXd hbar = Eigen::MatrixXd::Zero(3, 3);
    Eigen::MatrixXd cbar = Eigen::MatrixXd::Zero(3, 3);
    for (int t = 0; t < 40; ++t) {
        const Eigen::VectorXd u = sample.u.row(t);
        const auto od = observation_derivs(m, u, DerivMethod::Analytic);
        hbar += od.hessian;
        cbar += od.score * od.score.transpose();
    }
    hbar /= 40;
    cbar /= 40;
    CHECK((sm.hbar - hbar).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((sm.cbar - cbar).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("d-vector stacks vech(H_t + s_t s_t')") {
    const auto m = model3_closed_form();
    const auto sample = m.simulate(25, 3131);
    const auto dv = d_vector(m, sample);
    REQUIRE(dv.per_obs.rows() == 25);
    REQUIRE(dv.per_obs.cols() == 6);
    CHECK((dv.per_obs.colwise().mean().transpose() - dv.dbar).cwiseAbs().maxCoeff() <
          1e-12);
    const auto sm = sample_matrices(m, sample);
    const Eigen::VectorXd direct = vech(sm.hbar + sm.cbar);
    CHECK((dv.dbar - direct).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gradient of the d-vector matches nested finite differences") {
    const auto m = model3_closed_form();
    const auto sample = m.simulate(60, 787);
    const Eigen::MatrixXd g = grad_d(m, sample);
    REQUIRE(g.rows() == 6);
    REQUIRE(g.cols() == 3);
    const Eigen::VectorXd theta = m.parameters();
    auto work = m;
    for (int k = 0; k < 3; ++k) {
        const double step = 5e-4 * std::max(1.0, std::abs(theta[k]));
        Eigen::VectorXd up = theta, dn = theta;
        up[k] += step;
        dn[k] -= step;
        work.set_parameters(up);
        const Eigen::VectorXd du = d_vector(work, sample).dbar;
        work.set_parameters(dn);
        const Eigen::VectorXd dd = d_vector(work, sample).dbar;
        work.set_parameters(theta);
        const Eigen::VectorXd fd = (du - dd) / (2 * step);
        for (int q = 0; q < 6; ++q) {
            const double denom = std::max(1.0, std::abs(fd[q]));
            CHECK(std::abs(g(q, k) - fd[q]) / denom < 5e-3);
        }
    }
}

TEST_CASE("gof ingredients are internally consistent") {
    const auto m = model4_mixed();
    const auto sample = m.simulate(50, 60606);
    const auto gi = gof_ingredients(m, sample);
    const int p = m.num_params(); // 7: t has two parameters
    REQUIRE(p == 7);
    const int q = vech_size(p);
    CHECK(gi.hbar.rows() == p);
    CHECK(gi.scores.rows() == 50);
    CHECK(gi.scores.cols() == p);
    CHECK(gi.dhat.rows() == 50);
    CHECK(gi.dhat.cols() == q);
    CHECK(gi.grad.rows() == q);
    CHECK(gi.grad.cols() == p);
    CHECK((gi.dhat.colwise().mean().transpose() - gi.dbar).cwiseAbs().maxCoeff() <
          1e-12);
    // cross-check against the standalone entry points
    const auto sm = sample_matrices(m, sample);
    CHECK((gi.hbar - sm.hbar).cwiseAbs().maxCoeff() < 1e-10);
    const auto dv = d_vector(m, sample);
    CHECK((gi.dbar - dv.dbar).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("multithreaded ingredients match the sequential ones") {
    const auto m = model3_closed_form();
    const auto sample = m.simulate(64, 515);
    const auto g1 = gof_ingredients(m, sample, 1);
    const auto g3 = gof_ingredients(m, sample, 3);
    CHECK((g1.dbar - g3.dbar).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((g1.hbar - g3.hbar).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((g1.grad - g3.grad).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((g1.scores - g3.scores).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("perturbed score reuses clean edges correctly") {
    const auto m = model4_mixed();
    const Eigen::VectorXd theta = m.parameters();
    DerivEngine eng(m);
    DerivEngine::State base, shifted;
    Eigen::VectorXd pert;
    std::mt19937_64 gen(99);
    const Eigen::VectorXd u = random_u(4, gen);
    eng.base_pass(u, theta, base);
    for (int k = 0; k < theta.size(); ++k) {
        const double step = 1e-4 * std::max(1.0, std::abs(theta[k]));
        eng.perturbed_score(base, k, step, pert);
        Eigen::VectorXd th2 = theta;
        th2[k] += step;
        eng.base_pass(u, th2, shifted);
        CHECK((pert - shifted.score).cwiseAbs().maxCoeff() < 1e-9);
    }
}
