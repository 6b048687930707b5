#include "vinegof/margins.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vinegof {

namespace {

double t_ls_loglik(const std::vector<double>& x, double mu, double sigma,
                   double nu) {
    const double n = static_cast<double>(x.size());
    double acc = n * (std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                      0.5 * std::log(nu * M_PI) - std::log(sigma));
    for (double xi : x) {
        const double z = (xi - mu) / sigma;
        acc -= (nu + 1.0) / 2.0 * std::log1p(z * z / nu);
    }
    return acc;
}

// EM for the location-scale t at fixed nu (standard weighted-moments steps)
void t_ls_em(const std::vector<double>& x, double nu, double& mu,
             double& sigma) {
    const std::size_t n = x.size();
    for (int it = 0; it < 200; ++it) {
        double sw = 0, swx = 0;
        for (double xi : x) {
            const double z = (xi - mu) / sigma;
            const double w = (nu + 1.0) / (nu + z * z);
            sw += w;
            swx += w * xi;
        }
        const double mu_new = swx / sw;
        double s2 = 0;
        for (double xi : x) {
            const double z = (xi - mu) / sigma;
            const double w = (nu + 1.0) / (nu + z * z);
            s2 += w * (xi - mu_new) * (xi - mu_new);
        }
        const double sigma_new = std::sqrt(std::max(s2 / n, 1e-300));
        const bool done = std::abs(mu_new - mu) < 1e-10 * (1.0 + std::abs(mu)) &&
                          std::abs(sigma_new - sigma) < 1e-10 * sigma;
        mu = mu_new;
        sigma = sigma_new;
        if (done) break;
    }
}

} // namespace

void validate_margin(const MarginalModel& m) {
    switch (m.family) {
        case MarginFamily::Normal:
            if (m.params.size() != 2 || !(m.params[1] > 0))
                throw InvalidParameter("normal margin needs {mu, sigma>0}");
            return;
        case MarginFamily::StudentT:
            if (m.params.size() != 3 || !(m.params[1] > 0) || !(m.params[2] > 2))
                throw InvalidParameter("t margin needs {mu, sigma>0, nu>2}");
            return;
        case MarginFamily::Exponential:
            if (m.params.size() != 1 || !(m.params[0] > 0))
                throw InvalidParameter("exponential margin needs {rate>0}");
            return;
    }
    throw InvalidParameter("unknown margin family");
}

std::string margin_family_code(MarginFamily f) {
    switch (f) {
        case MarginFamily::Normal: return "normal";
        case MarginFamily::StudentT: return "t";
        case MarginFamily::Exponential: return "exponential";
    }
    throw InvalidParameter("unknown margin family");
}

MarginFamily margin_family_from_code(const std::string& code) {
    if (code == "normal") return MarginFamily::Normal;
    if (code == "t") return MarginFamily::StudentT;
    if (code == "exponential" || code == "exp") return MarginFamily::Exponential;
    throw ParseError("unknown margin family code '" + code + "'");
}

CopulaSample pseudo_observations(const Eigen::MatrixXd& raw) {
    if (raw.rows() < 2) throw DomainError("pseudo-observations need n >= 2");
    Eigen::MatrixXd u(raw.rows(), raw.cols());
    std::vector<double> col(raw.rows());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        for (Eigen::Index i = 0; i < raw.rows(); ++i) col[i] = raw(i, j);
        const std::vector<double> r = uniform_ranks(col);
        for (Eigen::Index i = 0; i < raw.rows(); ++i) u(i, j) = r[i];
    }
    return CopulaSample(std::move(u));
}

MarginalModel fit_margin(MarginFamily family, const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) throw DomainError("marginal fit needs n >= 2");
    for (double xi : x)
        if (!std::isfinite(xi)) throw DomainError("marginal fit: non-finite value");
    const double mean =
        std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double ss = 0;
    for (double xi : x) ss += (xi - mean) * (xi - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    switch (family) {
        case MarginFamily::Normal: {
            if (!(sd > 1e-12 * (1.0 + std::abs(mean))))
                throw FitError("normal margin: zero variance");
            return {family, {mean, sd}};
        }
        case MarginFamily::Exponential: {
            if (!(mean > 0))
                throw FitError("exponential margin: nonpositive mean");
            return {family, {1.0 / mean}};
        }
        case MarginFamily::StudentT: {
            if (!(sd > 1e-12 * (1.0 + std::abs(mean))))
                throw FitError("t margin: zero variance");
            double best_mu = mean, best_sigma = sd;
            auto profile = [&](double nu, double& mu, double& sigma) {
                mu = mean;
                sigma = sd;
                t_ls_em(x, nu, mu, sigma);
                return t_ls_loglik(x, mu, sigma, nu);
            };
            double mu_t = mean, sg_t = sd;
            const double phi = brent_min(
                [&](double ph) { return -profile(2.001 + std::exp(ph), mu_t, sg_t); },
                std::log(0.1), std::log(198.0), 1e-5);
            const double nu = 2.001 + std::exp(phi);
            profile(nu, best_mu, best_sigma);
            return {family, {best_mu, best_sigma, nu}};
        }
    }
    throw InvalidParameter("unknown margin family");
}

std::vector<MarginalModel> fit_margins(const Eigen::MatrixXd& raw,
                                       const std::vector<MarginFamily>& families) {
    if (static_cast<Eigen::Index>(families.size()) != raw.cols())
        throw DomainError("fit_margins: one family per column required");
    std::vector<MarginalModel> out;
    out.reserve(families.size());
    std::vector<double> col(raw.rows());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        for (Eigen::Index i = 0; i < raw.rows(); ++i) col[i] = raw(i, j);
        out.push_back(fit_margin(families[j], col));
    }
    return out;
}

double margin_cdf(const MarginalModel& m, double x) {
    validate_margin(m);
    switch (m.family) {
        case MarginFamily::Normal:
            return norm_cdf((x - m.params[0]) / m.params[1]);
        case MarginFamily::StudentT:
            return t_cdf((x - m.params[0]) / m.params[1], m.params[2]);
        case MarginFamily::Exponential:
            return x <= 0 ? 0.0 : -std::expm1(-m.params[0] * x);
    }
    throw InvalidParameter("unknown margin family");
}

double margin_quantile(const MarginalModel& m, double u) {
    validate_margin(m);
    if (!(u > 0.0 && u < 1.0))
        throw DomainError("margin_quantile: u must lie in (0,1)");
    switch (m.family) {
        case MarginFamily::Normal:
            return m.params[0] + m.params[1] * norm_quantile(u);
        case MarginFamily::StudentT:
            return m.params[0] + m.params[1] * t_quantile(u, m.params[2]);
        case MarginFamily::Exponential:
            return -std::log1p(-u) / m.params[0];
    }
    throw InvalidParameter("unknown margin family");
}

CopulaSample ifm_transform(const Eigen::MatrixXd& raw,
                           const std::vector<MarginalModel>& fitted) {
    if (static_cast<Eigen::Index>(fitted.size()) != raw.cols())
        throw DomainError("ifm_transform: one marginal model per column required");
    Eigen::MatrixXd u(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
        for (Eigen::Index i = 0; i < raw.rows(); ++i)
            u(i, j) = std::clamp(margin_cdf(fitted[j], raw(i, j)), kUEps,
                                 1.0 - kUEps);
    return CopulaSample(std::move(u));
}

} // namespace vinegof
