#pragma once
#include "vinegof/model.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

// Information-matrix ratio test for a fitted vine copula. Under a correct
// model the expected Hessian H(theta) and the score outer product C(theta)
// satisfy H + C = 0; the test aggregates d(theta) = vech(H + C) and rejects
// when the scaled quadratic form
//
//     T = n * dbar' Vhat^{-1} dbar,   q = p(p+1)/2 degrees of freedom,
//
// exceeds the chi-square tail, where Vhat accounts for parameter estimation
// via r_t = d_t - grad(D) Hbar^{-1} score_t.

namespace vinegof {

struct GofOptions {
    // By default the test refuses parameters that do not look like the MLE of
    // the sample (the mean score must be ~0); set to run at external theta.
    bool allow_external_params = false;
    int threads = 1;
};

struct VhatEstimate {
    Eigen::MatrixXd matrix;   // q x q, after any eigenvalue flooring
    double condition = 0;     // largest / smallest eigenvalue after flooring
    bool regularized = false; // true if any eigenvalue was raised to the floor
};

struct GofResult {
    double statistic = 0;
    int dof = 0;
    double p_asymptotic = 0;
    std::optional<double> p_bootstrap;
    bool regularized = false;
    double v_condition = 0;
    int n = 0;
    int p = 0;
    std::optional<int> bootstrap_B;
    std::optional<int> bootstrap_N;
    std::optional<std::uint64_t> seed;
};

VhatEstimate estimate_vhat(const RVineModel& model, const CopulaSample& sample,
                           int threads = 1);

// The model must already carry the MLE of `sample` (see GofOptions).
GofResult test_statistic(const RVineModel& model, const CopulaSample& sample,
                         const GofOptions& opts = {});

struct BootstrapResult {
    double pvalue = 0;
    double t_observed = 0;
    int failures = 0;
    std::vector<double> statistics; // successful replicate statistics
    RVineModel fitted;              // the model fitted on the input sample
};

// Parametric bootstrap: fit structure+families on the sample, simulate B
// replicates of size N from the fit, refit and recompute the statistic on
// each. Aborts (OptimizationError) if more than 5% of replicates fail.
BootstrapResult bootstrap_pvalue(const RVineStructure& structure,
                                 const std::vector<BicopFamily>& families,
                                 const CopulaSample& sample, int B, int N,
                                 std::uint64_t seed, bool full_mle = false,
                                 int threads = 1);

// Monte-Carlo p-values: share of reference statistics >= each statistic.
// The one-list form ranks a null sample against itself; the two-list form
// evaluates alternative statistics against a null reference sample.
std::vector<double> simulated_pvalues(const std::vector<double>& stats);
std::vector<double> simulated_pvalues(const std::vector<double>& reference,
                                      const std::vector<double>& stats);

} // namespace vinegof
