#pragma once
#include "vinegof/model.hpp"

// Maximum-likelihood estimation of the pair-copula parameters for a fixed
// structure and family assignment.
//
// fit_sequential: tree-wise bivariate MLE. Each edge is fitted on the
// h-transformed pseudo-data of the tree below (one-dimensional Brent searches
// on a transformed scale; StudentT profiles nu and polishes rho). This is the
// standard stepwise estimator.
//
// fit_full: joint MLE over all parameters, started at the sequential
// estimate; BFGS on transformed coordinates with the recursion gradient.
// The result never falls below the sequential log-likelihood.

namespace vinegof {

struct FitOptions {
    // force every StudentT edge to share one degrees-of-freedom parameter,
    // profiled jointly (used for the common-nu t-vine)
    bool shared_student_nu = false;
};

struct FitReport {
    double loglik = 0;
    int iterations = 0;   // BFGS iterations (full fit only)
    bool converged = true;
};

std::vector<BicopFamily> families_of(const RVineModel& model);

RVineModel fit_sequential(const RVineStructure& structure,
                          const std::vector<BicopFamily>& families,
                          const CopulaSample& sample,
                          const FitOptions& opts = {}, FitReport* report = nullptr);

// `start` (optional) seeds the joint optimiser instead of the sequential
// estimate; the sequential log-likelihood floor is enforced either way.
RVineModel fit_full(const RVineStructure& structure,
                    const std::vector<BicopFamily>& families,
                    const CopulaSample& sample, const FitOptions& opts = {},
                    FitReport* report = nullptr,
                    const RVineModel* start = nullptr);

// refit helpers keeping the skeleton of an existing model
RVineModel refit_sequential(const RVineModel& like, const CopulaSample& sample,
                            const FitOptions& opts = {});
RVineModel refit_full(const RVineModel& like, const CopulaSample& sample,
                      const FitOptions& opts = {});

// single-edge bivariate MLE on given pseudo-data columns (exposed for the
// structure selection step); returns the fitted spec and its log-likelihood
std::pair<BicopSpec, double> fit_pair(BicopFamily family,
                                      const std::vector<double>& a,
                                      const std::vector<double>& b);

} // namespace vinegof
