#include "vinegof/gof.hpp"
#include "vinegof/derivs.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/fit.hpp"
#include "vinegof/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace vinegof {

namespace {

constexpr double kHbarCondLimit = 1e12;  // H-bar treated as singular beyond this
constexpr double kEigenFloorRel = 1e-10; // V-hat eigenvalue floor, relative to the largest
constexpr double kScoreZLimit = 10.0;    // mean-score z beyond which theta is not an MLE
constexpr std::uint64_t kBootPurpose = 0x424f4f54; // RNG sub-stream tag

struct Assembly {
    VhatEstimate vhat;
    Eigen::MatrixXd evec;    // eigenvectors of V-hat
    Eigen::VectorXd eval;    // floored eigenvalues of V-hat
    Eigen::VectorXd dbar;    // q
    Eigen::MatrixXd scores;  // n x p (for the MLE gate)
    int q = 0;
};

Assembly assemble(const RVineModel& model, const CopulaSample& sample,
                  int threads) {
    const int p = model.num_params();
    if (p == 0)
        throw UnsupportedRequest(
            "information-matrix test is undefined for a model with no parameters");
    const auto n = sample.n();
    const int q = vech_size(p);
    if (n <= q)
        std::fprintf(stderr,
                     "warning: n=%ld does not exceed q=%d; the covariance "
                     "estimate will be rank-deficient\n",
                     static_cast<long>(n), q);

    GofIngredients ing = gof_ingredients(model, sample, threads);

    // invert the mean Hessian, guarding against (near-)singularity
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eh(ing.hbar);
    if (eh.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of the mean Hessian failed");
    double habs_max = 0.0, habs_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p; ++i) {
        const double a = std::abs(eh.eigenvalues()[i]);
        habs_max = std::max(habs_max, a);
        habs_min = std::min(habs_min, a);
    }
    if (!(habs_min > 0.0) || habs_max / habs_min > kHbarCondLimit)
        throw SingularHessian("mean Hessian is numerically singular (condition " +
                              std::to_string(habs_max / habs_min) + ")");
    const Eigen::MatrixXd hbar_inv =
        eh.eigenvectors() *
        eh.eigenvalues().cwiseInverse().asDiagonal() *
        eh.eigenvectors().transpose();

    // r_t = d_t - grad(D) Hbar^{-1} s_t, accumulated as a matrix residual
    const Eigen::MatrixXd A = ing.grad * hbar_inv;             // q x p
    const Eigen::MatrixXd R = ing.dhat - ing.scores * A.transpose(); // n x q
    Eigen::MatrixXd V = (R.transpose() * R) / static_cast<double>(n);
    V = ((V + V.transpose()) * 0.5).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ev(V);
    if (ev.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of the covariance estimate failed");
    const double lmax = ev.eigenvalues().maxCoeff();
    if (!(lmax > 0.0))
        throw NumericalError("covariance estimate is identically zero");
    const double floor = kEigenFloorRel * lmax;
    Assembly out;
    out.eval = ev.eigenvalues();
    out.vhat.regularized = false;
    for (int i = 0; i < out.eval.size(); ++i) {
        if (out.eval[i] < floor) {
            out.eval[i] = floor;
            out.vhat.regularized = true;
        }
    }
    out.evec = ev.eigenvectors();
    out.vhat.matrix = out.evec * out.eval.asDiagonal() * out.evec.transpose();
    out.vhat.condition = lmax / out.eval.minCoeff();
    out.dbar = std::move(ing.dbar);
    out.scores = std::move(ing.scores);
    out.q = q;
    return out;
}

void mle_gate(const Eigen::MatrixXd& scores) {
    const auto n = scores.rows();
    if (n < 2) return;
    for (int k = 0; k < scores.cols(); ++k) {
        const double m = scores.col(k).mean();
        double sd = std::sqrt((scores.col(k).array() - m).square().sum() /
                              static_cast<double>(n - 1));
        if (sd < 1e-300) sd = 1e-300;
        const double z = std::sqrt(static_cast<double>(n)) * m / sd;
        if (std::abs(z) > kScoreZLimit)
            throw DomainError(
                "model parameters do not maximise the sample likelihood "
                "(mean-score z=" + std::to_string(z) + " for parameter " +
                std::to_string(k) + "); refit or allow external parameters");
    }
}

} // namespace

VhatEstimate estimate_vhat(const RVineModel& model, const CopulaSample& sample,
                           int threads) {
    return assemble(model, sample, threads).vhat;
}

GofResult test_statistic(const RVineModel& model, const CopulaSample& sample,
                         const GofOptions& opts) {
    Assembly a = assemble(model, sample, opts.threads);
    if (!opts.allow_external_params) mle_gate(a.scores);

    const auto n = sample.n();
    const Eigen::VectorXd y = a.evec.transpose() * a.dbar;
    double t = 0.0;
    for (int i = 0; i < a.q; ++i) t += y[i] * y[i] / a.eval[i];
    t *= static_cast<double>(n);
    if (!std::isfinite(t) || t < 0.0)
        throw NumericalError("test statistic is not finite");

    GofResult res;
    res.statistic = t;
    res.dof = a.q;
    res.p_asymptotic = chi2_sf(t, a.q);
    res.regularized = a.vhat.regularized;
    res.v_condition = a.vhat.condition;
    res.n = static_cast<int>(n);
    res.p = model.num_params();
    return res;
}

BootstrapResult bootstrap_pvalue(const RVineStructure& structure,
                                 const std::vector<BicopFamily>& families,
                                 const CopulaSample& sample, int B, int N,
                                 std::uint64_t seed, bool full_mle,
                                 int threads) {
    if (B < 2) throw DomainError("bootstrap needs at least 2 replicates");
    if (N < 10) throw DomainError("bootstrap sample size too small");

    RVineModel fitted = full_mle ? fit_full(structure, families, sample)
                                 : fit_sequential(structure, families, sample);
    GofOptions go;
    go.threads = threads;
    GofResult obs = test_statistic(fitted, sample, go);

    std::vector<double> stats;
    stats.reserve(B);
    int failures = 0;
    const double budget = 0.05 * B;
    for (int b = 0; b < B; ++b) {
        try {
            const CopulaSample bs =
                fitted.simulate(N, derive_seed(seed, kBootPurpose, b));
            const RVineModel refit =
                full_mle ? refit_full(fitted, bs) : refit_sequential(fitted, bs);
            stats.push_back(test_statistic(refit, bs, go).statistic);
        } catch (const Error&) {
            if (++failures > budget)
                throw OptimizationError(
                    "bootstrap aborted: " + std::to_string(failures) + " of " +
                    std::to_string(b + 1) + " replicates failed");
        }
    }

    int count = 0;
    for (double t : stats)
        if (t >= obs.statistic) ++count;
    BootstrapResult out{count / static_cast<double>(stats.size()),
                        obs.statistic, failures, std::move(stats),
                        std::move(fitted)};
    return out;
}

std::vector<double> simulated_pvalues(const std::vector<double>& stats) {
    if (stats.size() < 2)
        throw DomainError("simulated p-values need at least 2 statistics");
    return simulated_pvalues(stats, stats);
}

std::vector<double> simulated_pvalues(const std::vector<double>& reference,
                                      const std::vector<double>& stats) {
    if (reference.size() < 2)
        throw DomainError("simulated p-values need at least 2 reference statistics");
    std::vector<double> sorted = reference;
    std::sort(sorted.begin(), sorted.end());
    const double R = static_cast<double>(sorted.size());
    std::vector<double> out(stats.size());
    for (std::size_t j = 0; j < stats.size(); ++j) {
        const auto it = std::lower_bound(sorted.begin(), sorted.end(), stats[j]);
        out[j] = static_cast<double>(sorted.end() - it) / R;
    }
    return out;
}

} // namespace vinegof
