#pragma once
#include <cstdint>
#include <functional>
#include <vector>

// Scalar numerics used across the library: normal/t/chi-square special
// functions (wrapping Boost.Math), Debye integral, rank statistics,
// one-dimensional root finding / minimization, low-discrepancy sequences,
// and empirical-distribution helpers.

namespace vinegof {

// ---- distribution functions -------------------------------------------------

double norm_cdf(double x);
double norm_pdf(double x);
double norm_quantile(double p);      // throws DomainError outside (0,1)

double t_cdf(double x, double nu);
double t_pdf(double x, double nu);
double t_quantile(double p, double nu);

// Upper tail P(X > x) for X ~ chi^2_k, accurate far into the tail.
double chi2_sf(double x, double k);

// Debye function D1(x) = (1/x) * int_0^x t/(e^t - 1) dt, x != 0.
double debye1(double x);

// ---- rank statistics --------------------------------------------------------

// Kendall's tau-b in O(n log n) (merge-sort inversion counting, tie-corrected).
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

// Midranks divided by (n+1), i.e. rank-based pseudo-observations of one column.
std::vector<double> uniform_ranks(const std::vector<double>& x);

// ---- 1-d solvers ------------------------------------------------------------

// Brent root bracketing solver on [a,b] with f(a), f(b) of opposite sign.
double brent_root(const std::function<double(double)>& f, double a, double b,
                  double tol = 1e-12, int max_iter = 200);

// Golden-section + parabolic (Brent) minimizer of f on [a,b].
double brent_min(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-9, int max_iter = 200);

// ---- low-discrepancy --------------------------------------------------------

// Halton sequence point i (1-based) in `dim` dimensions, bases 2,3,5,7,...
void halton_point(std::uint64_t i, int dim, double* out);

// ---- empirical distribution helpers -----------------------------------------

// One-sample Kolmogorov-Smirnov statistic against a cdf given as callable.
double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf);

// KS p-value via the Kolmogorov series, evaluated at the Stephens
// small-sample point x = (sqrt(n) + 0.12 + 0.11/sqrt(n)) * d.
double ks_pvalue(double d, std::size_t n);

// Dvoretzky-Kiefer-Wolfowitz band half-width for confidence 1-delta.
double dkw_epsilon(std::size_t n, double delta);

// ---- deterministic RNG streams ----------------------------------------------

// splitmix64 step; used to derive independent sub-stream seeds.
std::uint64_t splitmix64(std::uint64_t& state);

// Collapse (seed, purpose, index) into one well-mixed 64-bit seed so that
// parallel replicates and per-draw streams are reproducible and independent
// of scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose,
                          std::uint64_t index);

// Uniform double in the open interval, clamped away from {0,1}; deterministic
// across platforms (uses the top 53 bits of the generator output).
template <class Gen>
inline double uniform01(Gen& g) {
    const double u = static_cast<double>(g() >> 11) * 0x1.0p-53;
    if (u < 1e-10) return 1e-10;
    if (u > 1.0 - 1e-10) return 1.0 - 1e-10;
    return u;
}

} // namespace vinegof
