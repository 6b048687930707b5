#include "vinegof/errors.hpp"
#include "vinegof/fit.hpp"
#include "vinegof/gof.hpp"
#include "vinegof/numerics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace vinegof;

namespace {

RVineStructure structure3() {
    return RVineStructure::from_edges(
        3, {VineEdge(1, 2), VineEdge(2, 3), VineEdge(1, 3, {2})});
}

RVineModel truth3() {
    const std::vector<BicopSpec> pcs = {
        {BicopFamily{FamilyKind::Gauss, Rotation::R0}, {0.6}},
        {BicopFamily{FamilyKind::Clayton, Rotation::R0}, {2.0}},
        {BicopFamily{FamilyKind::Gumbel, Rotation::R0}, {1.4}},
    };
    return RVineModel(structure3(), pcs);
}

RVineModel fitted3(const CopulaSample& sample) {
    return fit_sequential(structure3(), families_of(truth3()), sample);
}

} // namespace

TEST_CASE("one-list simulated p-values rank a sample against itself") {
    const auto p = simulated_pvalues({1.0, 2.0, 3.0});
    REQUIRE(p.size() == 3);
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(2.0 / 3.0));
    CHECK(p[2] == doctest::Approx(1.0 / 3.0));

    const auto tied = simulated_pvalues({5.0, 5.0, 5.0, 5.0});
    for (double v : tied) CHECK(v == doctest::Approx(1.0));

    CHECK_THROWS_AS(simulated_pvalues({1.0}), DomainError);
}

TEST_CASE("two-list simulated p-values use the reference sample") {
    const std::vector<double> ref = {1.0, 2.0, 3.0, 4.0};
    const auto p = simulated_pvalues(ref, {0.0, 2.5, 5.0});
    REQUIRE(p.size() == 3);
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(0.5));
    CHECK(p[2] == doctest::Approx(0.0));
    // boundary: a statistic equal to a reference value counts it
    const auto pb = simulated_pvalues(ref, {4.0});
    CHECK(pb[0] == doctest::Approx(0.25));
    CHECK_THROWS_AS(simulated_pvalues({1.0}, {2.0, 3.0}), DomainError);
}

TEST_CASE("simulated p-values commute with permutations") {
    const std::vector<double> stats = {0.4, 2.2, 1.1, 3.7, 0.9};
    auto shuffled = stats;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto p1 = simulated_pvalues(stats);
    const auto p2 = simulated_pvalues(shuffled);
    for (std::size_t i = 0; i < stats.size(); ++i)
        CHECK(p1[i] == doctest::Approx(p2[stats.size() - 1 - i]));
}

TEST_CASE("test statistic on a fitted trivariate vine") {
    const auto truth = truth3();
    const auto sample = truth.simulate(700, 20260105);
    const auto fit = fitted3(sample);
    const auto res = test_statistic(fit, sample);
    CHECK(res.statistic >= 0.0);
    CHECK(res.dof == 6); // p = 3 -> q = 3*4/2
    CHECK(res.p == 3);
    CHECK(res.n == 700);
    CHECK(res.p_asymptotic >= 0.0);
    CHECK(res.p_asymptotic <= 1.0);
    CHECK(res.v_condition >= 1.0);
    CHECK_FALSE(res.p_bootstrap.has_value());
    // asymptotic p is the chi-square upper tail of the statistic
    CHECK(res.p_asymptotic ==
          doctest::Approx(chi2_sf(res.statistic, res.dof)).epsilon(1e-12));
}

TEST_CASE("external parameters are rejected unless explicitly allowed") {
    const auto truth = truth3();
    const auto sample = truth.simulate(1500, 31);
    auto off = truth;
    Eigen::VectorXd bad(3);
    bad << 0.95, 6.0, 3.5; // far from any MLE of this sample
    off.set_parameters(bad);
    CHECK_THROWS_AS(test_statistic(off, sample), DomainError);
    GofOptions opts;
    opts.allow_external_params = true;
    const auto res = test_statistic(off, sample, opts);
    CHECK(res.statistic > 0.0);
    // true parameters survive the gate: their mean score is ~0
    CHECK_NOTHROW(test_statistic(truth, sample, opts));
}

TEST_CASE("a vine without parameters cannot be tested") {
    const std::vector<BicopSpec> pcs(3,
                                     {BicopFamily{FamilyKind::Independence}, {}});
    const RVineModel indep(structure3(), pcs);
    const auto sample = truth3().simulate(200, 7);
    CHECK_THROWS_AS(test_statistic(indep, sample), UnsupportedRequest);
}

TEST_CASE("the statistic ignores the ordering of observations") {
    const auto truth = truth3();
    const auto sample = truth.simulate(400, 99);
    const auto fit = fitted3(sample);
    CopulaSample reversed = sample;
    reversed.u = sample.u.colwise().reverse().eval();
    const auto a = test_statistic(fit, sample);
    const auto b = test_statistic(fit, reversed);
    CHECK(a.statistic == doctest::Approx(b.statistic).epsilon(1e-9));
    CHECK(a.dof == b.dof);
}

TEST_CASE("covariance estimate is symmetric positive semidefinite") {
    const auto truth = truth3();
    const auto sample = truth.simulate(600, 515151);
    const auto fit = fitted3(sample);
    const auto v = estimate_vhat(fit, sample);
    REQUIRE(v.matrix.rows() == 6);
    REQUIRE(v.matrix.cols() == 6);
    CHECK((v.matrix - v.matrix.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v.matrix);
    REQUIRE(es.info() == Eigen::Success);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(v.condition >= 1.0);
    CHECK(v.condition ==
          doctest::Approx(es.eigenvalues().maxCoeff() /
                          es.eigenvalues().minCoeff())
              .epsilon(1e-8));
}

TEST_CASE("parametric bootstrap on a bivariate gaussian pair") {
    const auto s = RVineStructure::from_edges(2, {VineEdge(1, 2)});
    const std::vector<BicopSpec> pcs = {
        {BicopFamily{FamilyKind::Gauss, Rotation::R0}, {0.5}}};
    const RVineModel truth(s, pcs);
    const auto sample = truth.simulate(300, 1234);
    const std::vector<BicopFamily> fams = {pcs[0].family};

    const auto br = bootstrap_pvalue(s, fams, sample, 20, 300, 42);
    CHECK(br.pvalue >= 0.0);
    CHECK(br.pvalue <= 1.0);
    CHECK(br.t_observed > 0.0);
    CHECK(br.failures == 0);
    CHECK(br.statistics.size() == 20);
    CHECK(br.fitted.num_params() == 1);
    for (double t : br.statistics) CHECK(t >= 0.0);

    // replaying the seed reproduces every replicate statistic
    const auto br2 = bootstrap_pvalue(s, fams, sample, 20, 300, 42);
    REQUIRE(br2.statistics.size() == br.statistics.size());
    for (std::size_t i = 0; i < br.statistics.size(); ++i)
        CHECK(br.statistics[i] == doctest::Approx(br2.statistics[i]).epsilon(1e-14));
    CHECK(br.pvalue == doctest::Approx(br2.pvalue));

    // a different seed gives different replicates
    const auto br3 = bootstrap_pvalue(s, fams, sample, 20, 300, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < br.statistics.size(); ++i)
        if (std::abs(br.statistics[i] - br3.statistics[i]) > 1e-12) any_diff = true;
    CHECK(any_diff);

    CHECK_THROWS_AS(bootstrap_pvalue(s, fams, sample, 1, 300, 42), DomainError);
    CHECK_THROWS_AS(bootstrap_pvalue(s, fams, sample, 20, 5, 42), DomainError);
}

TEST_CASE("bootstrap p-value is the tail share of replicate statistics") {
    const auto s = RVineStructure::from_edges(2, {VineEdge(1, 2)});
    const std::vector<BicopSpec> pcs = {
        {BicopFamily{FamilyKind::Gauss, Rotation::R0}, {0.4}}};
    const RVineModel truth(s, pcs);
    const auto sample = truth.simulate(250, 777);
    const std::vector<BicopFamily> fams = {pcs[0].family};
    const auto br = bootstrap_pvalue(s, fams, sample, 24, 250, 5);
    int count = 0;
    for (double t : br.statistics)
        if (t >= br.t_observed) ++count;
    CHECK(br.pvalue ==
          doctest::Approx(static_cast<double>(count) /
                          static_cast<double>(br.statistics.size())));
}
