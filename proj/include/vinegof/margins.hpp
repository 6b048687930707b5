#pragma once
#include "vinegof/model.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

// Transformations from raw observations to copula data: rank-based
// pseudo-observations and parametric probability-integral transforms fitted
// column by column (the IFM route).

namespace vinegof {

enum class MarginFamily { Normal, StudentT, Exponential };

struct MarginalModel {
    MarginFamily family = MarginFamily::Normal;
    // Normal: {mu, sigma}; StudentT: {mu, sigma, nu} (location-scale);
    // Exponential: {rate}
    std::vector<double> params;
};

void validate_margin(const MarginalModel& m);

std::string margin_family_code(MarginFamily f);
MarginFamily margin_family_from_code(const std::string& code);

// column-wise average ranks divided by n+1
CopulaSample pseudo_observations(const Eigen::MatrixXd& raw);

// Normal fitted by moments; StudentT (location-scale) and Exponential by ML
MarginalModel fit_margin(MarginFamily family, const std::vector<double>& x);
std::vector<MarginalModel> fit_margins(const Eigen::MatrixXd& raw,
                                       const std::vector<MarginFamily>& families);

double margin_cdf(const MarginalModel& m, double x);
double margin_quantile(const MarginalModel& m, double u);

// u_ji = F_i(x_ji) clamped to the working interval
CopulaSample ifm_transform(const Eigen::MatrixXd& raw,
                           const std::vector<MarginalModel>& fitted);

} // namespace vinegof
