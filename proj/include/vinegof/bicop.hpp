#pragma once
#include <Eigen/Dense>
#include <string>
#include <vector>

// Bivariate copula families: Independence, Gauss, StudentT, Clayton, Gumbel,
// Frank, Joe, with 90/180/270 degree rotations of the Archimedean families.
//
// Conventions:
//   hfunc(u, v)  = dC(u,v)/dv = F(U <= u | V = v)   ("first given second")
//   hfunc2(u, v) = dC(u,v)/du = F(V <= v | U = u)
//   rotations:  90: c(u,v) -> c(1-u, v)   (negative dependence)
//              180: c(u,v) -> c(1-u,1-v)  (survival copula)
//              270: c(u,v) -> c(u, 1-v)   (negative dependence)
// Inputs are clamped into [1e-10, 1-1e-10] before evaluation.

namespace vinegof {

enum class FamilyKind { Independence, Gauss, StudentT, Clayton, Gumbel, Frank, Joe };
enum class Rotation { R0 = 0, R90 = 90, R180 = 180, R270 = 270 };

struct BicopFamily {
    FamilyKind kind = FamilyKind::Independence;
    Rotation rot = Rotation::R0;
    bool operator==(const BicopFamily&) const = default;
};

struct BicopSpec {
    BicopFamily family;
    std::vector<double> params; // Gauss: rho; StudentT: rho, nu; Archimedean: theta
};

inline constexpr double kUEps = 1e-10; // clamp for copula-scale inputs

int param_count(FamilyKind kind);
bool rotation_allowed(BicopFamily family);      // rotations only for Archimedeans
bool has_analytic_param_derivs(FamilyKind kind); // Gauss/Clayton/Gumbel/Frank (and Independence)
void validate_spec(const BicopSpec& spec);       // throws InvalidParameter

std::string family_code(BicopFamily family);     // e.g. "gumbel@90"
BicopFamily family_from_code(const std::string& code);

// ---- core evaluations ----

double log_pdf(const BicopSpec& spec, double u, double v);
double pdf(const BicopSpec& spec, double u, double v);

// cdf C(u,v); closed form for Independence and the Archimedean families
// (rotations included); throws UnsupportedFamily for Gauss/StudentT.
double cdf(const BicopSpec& spec, double u, double v);

double hfunc(const BicopSpec& spec, double u, double v);   // dC/dv
double hfunc2(const BicopSpec& spec, double u, double v);  // dC/du
double hinv(const BicopSpec& spec, double w, double v);    // hfunc(.|v)^{-1}(w)
double hinv2(const BicopSpec& spec, double w, double u);   // hfunc2(u|.)^{-1}(w)

// ---- parameter-direction derivatives of ln c ----

// Gradient d ln c / d theta (analytic where available, else central
// finite differences with step 1e-5 * max(1,|theta_k|)).
Eigen::VectorXd loglik_grad(const BicopSpec& spec, double u, double v);

// Hessian d^2 ln c / d theta^2 (analytic for Gauss and Clayton, else central
// finite differences of the gradient).
Eigen::MatrixXd loglik_hess(const BicopSpec& spec, double u, double v);

// ---- Kendall's tau ----

double param_to_tau(const BicopSpec& spec);
// Smallest parameterisation consistent with tau; throws IncompatibleTau when
// the family cannot reach the requested tau (e.g. Clayton with tau < 0).
// For StudentT the returned vector is {rho, 5.0} (nu must be fitted).
std::vector<double> tau_to_param(BicopFamily family, double tau);

// ---- derivative kernel used by the vine recursion ----
//
// Everything the vine evaluation needs at one edge for one observation, in a
// single pass so transcendental subexpressions are shared. Parameter
// derivatives fall back to internal central differences for StudentT's nu and
// for Joe.
struct PairWork {
    double logc = 0;              // ln c(a,b)
    double c = 1;                 // c(a,b)
    double dlogc_da = 0, dlogc_db = 0;
    double dlogc_dpar[2] = {0, 0};
    double h1 = 0;                // F(a | b)
    double h2 = 0;                // F(b | a)
    double dh1_db = 0;            // d h1 / db   (d h1/da = c)
    double dh2_da = 0;            // d h2 / da   (d h2/db = c)
    double dh1_dpar[2] = {0, 0};
    double dh2_dpar[2] = {0, 0};
};

// need_derivs=false fills only logc/c/h1/h2.
void pair_work(const BicopSpec& spec, double a, double b, bool need_derivs,
               PairWork& out);

// Allocation-free variant for hot loops; `par` points at param_count values.
void pair_work(BicopFamily family, const double* par, double a, double b,
               bool need_derivs, PairWork& out);

// Validity interval of parameter k (the range validate_spec accepts). Frank's
// excluded point 0 is handled by callers when stepping near it.
struct ParamBounds {
    double lo, hi;
};
ParamBounds param_bounds(BicopFamily family, int k);

} // namespace vinegof
