#include "vinegof/bicop.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <algorithm>
#include <cmath>

// Each family kernel computes ln c, the h-functions and their derivatives in
// one pass so the transcendental subexpressions (normal/t quantiles, powers)
// are shared. All base families are exchangeable, so h2(a,b) = h1(b,a) and
// both sides reuse the same intermediates. Rotations are handled by a wrapper
// that reflects the inputs and fixes up signs via the chain rule.

namespace vinegof {

namespace {

inline double clamp_u(double u) {
    return std::clamp(u, kUEps, 1.0 - kUEps);
}

// ---------------------------------------------------------------- Gauss ----

void gauss_work(double a, double b, double rho, bool derivs, PairWork& w) {
    const double x = norm_quantile(a);
    const double y = norm_quantile(b);
    const double s = 1.0 - rho * rho;
    w.logc = -0.5 * std::log(s) -
             (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * s);
    w.c = std::exp(w.logc);
    const double sq = std::sqrt(s);
    const double q1 = (x - rho * y) / sq;
    const double q2 = (y - rho * x) / sq;
    w.h1 = norm_cdf(q1);
    w.h2 = norm_cdf(q2);
    if (!derivs) return;
    const double fx = norm_pdf(x), fy = norm_pdf(y);
    w.dlogc_da = -rho * (rho * x - y) / (s * fx);
    w.dlogc_db = -rho * (rho * y - x) / (s * fy);
    w.dlogc_dpar[0] = (rho * s - rho * (x * x + y * y) + x * y * (1.0 + rho * rho)) / (s * s);
    const double fq1 = norm_pdf(q1), fq2 = norm_pdf(q2);
    w.dh1_db = -fq1 * rho / (sq * fy);
    w.dh2_da = -fq2 * rho / (sq * fx);
    w.dh1_dpar[0] = fq1 * (rho * x - y) / (s * sq);
    w.dh2_dpar[0] = fq2 * (rho * y - x) / (s * sq);
}

double gauss_hinv1(double p, double b, double rho) {
    const double y = norm_quantile(b);
    const double x = norm_quantile(p) * std::sqrt(1.0 - rho * rho) + rho * y;
    return norm_cdf(x);
}

// ------------------------------------------------------------- StudentT ----

// value-only pieces; used both directly and for the nu finite difference
void t_value(double a, double b, double rho, double nu, double& logc,
             double& h1, double& h2) {
    const double x = t_quantile(a, nu);
    const double y = t_quantile(b, nu);
    const double s = 1.0 - rho * rho;
    const double M = x * x - 2.0 * rho * x * y + y * y;
    logc = std::lgamma((nu + 2.0) / 2.0) + std::lgamma(nu / 2.0) -
           2.0 * std::lgamma((nu + 1.0) / 2.0) - 0.5 * std::log(s) -
           (nu + 2.0) / 2.0 * std::log1p(M / (nu * s)) +
           (nu + 1.0) / 2.0 *
               (std::log1p(x * x / nu) + std::log1p(y * y / nu));
    const double w1 = std::sqrt((nu + y * y) * s / (nu + 1.0));
    const double w2 = std::sqrt((nu + x * x) * s / (nu + 1.0));
    h1 = t_cdf((x - rho * y) / w1, nu + 1.0);
    h2 = t_cdf((y - rho * x) / w2, nu + 1.0);
}

void t_work(double a, double b, const double* par, bool derivs, PairWork& w) {
    const double rho = par[0], nu = par[1];
    const double x = t_quantile(a, nu);
    const double y = t_quantile(b, nu);
    const double s = 1.0 - rho * rho;
    const double M = x * x - 2.0 * rho * x * y + y * y;
    w.logc = std::lgamma((nu + 2.0) / 2.0) + std::lgamma(nu / 2.0) -
             2.0 * std::lgamma((nu + 1.0) / 2.0) - 0.5 * std::log(s) -
             (nu + 2.0) / 2.0 * std::log1p(M / (nu * s)) +
             (nu + 1.0) / 2.0 *
                 (std::log1p(x * x / nu) + std::log1p(y * y / nu));
    w.c = std::exp(w.logc);
    const double w1 = std::sqrt((nu + y * y) * s / (nu + 1.0));
    const double w2 = std::sqrt((nu + x * x) * s / (nu + 1.0));
    const double q1 = (x - rho * y) / w1;
    const double q2 = (y - rho * x) / w2;
    w.h1 = t_cdf(q1, nu + 1.0);
    w.h2 = t_cdf(q2, nu + 1.0);
    if (!derivs) return;

    const double fx = t_pdf(x, nu), fy = t_pdf(y, nu);
    const double dlx = -(nu + 2.0) * (x - rho * y) / (nu * s + M) +
                       (nu + 1.0) * x / (nu + x * x);
    const double dly = -(nu + 2.0) * (y - rho * x) / (nu * s + M) +
                       (nu + 1.0) * y / (nu + y * y);
    w.dlogc_da = dlx / fx;
    w.dlogc_db = dly / fy;
    w.dlogc_dpar[0] =
        rho / s + (nu + 2.0) * (s * x * y - rho * M) / (s * (nu * s + M));

    const double fq1 = t_pdf(q1, nu + 1.0), fq2 = t_pdf(q2, nu + 1.0);
    // dh1/db: chain through y at fixed nu;  dw1/dy = y*s/((nu+1)*w1)
    const double dw1dy = y * s / ((nu + 1.0) * w1);
    const double dq1dy = (-rho - q1 * dw1dy) / w1;
    w.dh1_db = fq1 * dq1dy / fy;
    const double dw2dx = x * s / ((nu + 1.0) * w2);
    const double dq2dx = (-rho - q2 * dw2dx) / w2;
    w.dh2_da = fq2 * dq2dx / fx;
    // dh/drho:  dw/drho = -rho*(nu+y^2)/((nu+1)*w)
    const double dw1dr = -rho * (nu + y * y) / ((nu + 1.0) * w1);
    w.dh1_dpar[0] = fq1 * (-y - q1 * dw1dr) / w1;
    const double dw2dr = -rho * (nu + x * x) / ((nu + 1.0) * w2);
    w.dh2_dpar[0] = fq2 * (-x - q2 * dw2dr) / w2;

    // nu-direction by central differences at fixed (a,b); the quantiles are
    // recomputed inside, which is the correct total derivative.
    double hstep = 1e-5 * std::max(1.0, std::abs(nu));
    if (nu - hstep <= 1.0005) hstep = 0.5 * (nu - 1.0005);
    double lp, h1p, h2p, lm, h1m, h2m;
    t_value(a, b, rho, nu + hstep, lp, h1p, h2p);
    t_value(a, b, rho, nu - hstep, lm, h1m, h2m);
    w.dlogc_dpar[1] = (lp - lm) / (2.0 * hstep);
    w.dh1_dpar[1] = (h1p - h1m) / (2.0 * hstep);
    w.dh2_dpar[1] = (h2p - h2m) / (2.0 * hstep);
}

double t_hinv1(double p, double b, double rho, double nu) {
    const double y = t_quantile(b, nu);
    const double w1 = std::sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0));
    const double x = t_quantile(p, nu + 1.0) * w1 + rho * y;
    return t_cdf(x, nu);
}

// -------------------------------------------------------------- Clayton ----

void clayton_work(double a, double b, double theta, bool derivs, PairWork& w) {
    const double la = std::log(a), lb = std::log(b);
    const double ea = -theta * la, eb = -theta * lb; // exponents of u^-theta
    const double m = std::max(ea, eb);
    const double lnS =
        m + std::log(std::exp(ea - m) + std::exp(eb - m) - std::exp(-m));
    const double ra = std::exp(ea - lnS); // u^-theta / S
    const double rb = std::exp(eb - lnS);
    const double invS = std::exp(-lnS);

    w.logc = std::log1p(theta) - (1.0 + theta) * (la + lb) -
             (2.0 + 1.0 / theta) * lnS;
    w.c = std::exp(w.logc);
    // h1 = v^{-theta-1} S^{-1-1/theta}
    const double lnh1 = -(theta + 1.0) * lb - (1.0 + 1.0 / theta) * lnS;
    const double lnh2 = -(theta + 1.0) * la - (1.0 + 1.0 / theta) * lnS;
    w.h1 = std::exp(lnh1);
    w.h2 = std::exp(lnh2);
    if (!derivs) return;

    w.dlogc_da = (-(1.0 + theta) + (2.0 * theta + 1.0) * ra) / a;
    w.dlogc_db = (-(1.0 + theta) + (2.0 * theta + 1.0) * rb) / b;
    // dS/dtheta / S, with -ln u = ea/theta
    const double sts = (ra * ea + rb * eb) / theta;
    w.dlogc_dpar[0] = 1.0 / (1.0 + theta) - (la + lb) + lnS / (theta * theta) -
                      (2.0 + 1.0 / theta) * sts;
    w.dh1_db = -w.h1 * (theta + 1.0) * (ra - invS) / b;
    w.dh2_da = -w.h2 * (theta + 1.0) * (rb - invS) / a;
    w.dh1_dpar[0] =
        w.h1 * (-lb + lnS / (theta * theta) - (1.0 + 1.0 / theta) * sts);
    w.dh2_dpar[0] =
        w.h2 * (-la + lnS / (theta * theta) - (1.0 + 1.0 / theta) * sts);
}

double clayton_hinv1(double p, double b, double theta) {
    // solve p = v^{-theta-1} S^{-1-1/theta} for u
    const double lb = std::log(b);
    const double lnS =
        -theta * lb - theta * std::log(p) / (theta + 1.0);
    // u^-theta = S + 1 - v^-theta
    const double eb = -theta * lb;
    const double m = std::max(lnS, eb);
    const double pu =
        std::exp(m) * (std::exp(lnS - m) - std::exp(eb - m)) + 1.0;
    if (!(pu > 1.0)) return 1.0 - kUEps;
    return std::exp(-std::log(pu) / theta);
}

double clayton_cdf(double a, double b, double theta) {
    const double ea = -theta * std::log(a), eb = -theta * std::log(b);
    const double m = std::max(ea, eb);
    const double lnS =
        m + std::log(std::exp(ea - m) + std::exp(eb - m) - std::exp(-m));
    return std::exp(-lnS / theta);
}

// --------------------------------------------------------------- Gumbel ----

void gumbel_work(double a, double b, double theta, bool derivs, PairWork& w) {
    const double lu = -std::log(a), lv = -std::log(b);
    const double L1 = std::log(lu), L2 = std::log(lv);
    const double m = theta * std::max(L1, L2);
    const double lnS =
        m + std::log(std::exp(theta * L1 - m) + std::exp(theta * L2 - m));
    const double lnt = lnS / theta;
    const double t = std::exp(lnt);
    const double ra = std::exp(theta * L1 - lnS); // lu^theta / S
    const double rb = std::exp(theta * L2 - lnS);

    w.logc = -t + lu + lv + (theta - 1.0) * (L1 + L2) +
             (1.0 / theta - 2.0) * lnS + std::log(t + theta - 1.0);
    w.c = std::exp(w.logc);
    const double lnh1 = -t + (1.0 - theta) * lnt + (theta - 1.0) * L2 + lv;
    const double lnh2 = -t + (1.0 - theta) * lnt + (theta - 1.0) * L1 + lu;
    w.h1 = std::exp(lnh1);
    w.h2 = std::exp(lnh2);
    if (!derivs) return;

    // d/dlu pieces;  dt/dlu = t*ra/lu
    const double dtdlu = t * ra / lu;
    const double dtdlv = t * rb / lv;
    const double dlc_dlu = -dtdlu + 1.0 + (theta - 1.0) / lu +
                           (1.0 / theta - 2.0) * theta * ra / lu +
                           dtdlu / (t + theta - 1.0);
    const double dlc_dlv = -dtdlv + 1.0 + (theta - 1.0) / lv +
                           (1.0 / theta - 2.0) * theta * rb / lv +
                           dtdlv / (t + theta - 1.0);
    w.dlogc_da = -dlc_dlu / a;
    w.dlogc_db = -dlc_dlv / b;

    const double P = ra * L1 + rb * L2;               // (dS/dtheta)/S
    const double dtheta_t = t * (P / theta - lnS / (theta * theta));
    w.dlogc_dpar[0] = -dtheta_t + (L1 + L2) - lnS / (theta * theta) +
                      (1.0 / theta - 2.0) * P +
                      (dtheta_t + 1.0) / (t + theta - 1.0);

    // h1 derivatives:  dlnh1/dlv = -dt/dlv + (1-theta)(dt/dlv)/t + (theta-1)/lv + 1
    const double dlnh1_dlv = -dtdlv + (1.0 - theta) * rb / lv +
                             (theta - 1.0) / lv + 1.0;
    const double dlnh2_dlu = -dtdlu + (1.0 - theta) * ra / lu +
                             (theta - 1.0) / lu + 1.0;
    w.dh1_db = -w.h1 * dlnh1_dlv / b;
    w.dh2_da = -w.h2 * dlnh2_dlu / a;
    w.dh1_dpar[0] =
        w.h1 * (-dtheta_t * (1.0 + (theta - 1.0) / t) - lnt + L2);
    w.dh2_dpar[0] =
        w.h2 * (-dtheta_t * (1.0 + (theta - 1.0) / t) - lnt + L1);
}

double gumbel_cdf(double a, double b, double theta) {
    const double L1 = std::log(-std::log(a)), L2 = std::log(-std::log(b));
    const double m = theta * std::max(L1, L2);
    const double lnS =
        m + std::log(std::exp(theta * L1 - m) + std::exp(theta * L2 - m));
    return std::exp(-std::exp(lnS / theta));
}

// ----------------------------------------------------------------- Frank ----

void frank_work(double a, double b, double theta, bool derivs, PairWork& w) {
    const double ea = std::exp(-theta * a);
    const double eb = std::exp(-theta * b);
    const double et = std::exp(-theta);
    const double E = -std::expm1(-theta);   // 1 - e^-theta
    const double Eu = -std::expm1(-theta * a);
    const double Ev = -std::expm1(-theta * b);
    // D = E - Eu*Ev, computed in the cancellation-free arrangement
    const double D = ea + eb - ea * eb - et;

    w.logc = std::log(theta * E) - theta * (a + b) - 2.0 * std::log(std::abs(D));
    w.c = std::exp(w.logc);
    w.h1 = Eu * eb / D;
    w.h2 = Ev * ea / D;
    if (!derivs) return;

    w.dlogc_da = -theta + 2.0 * theta * ea * Ev / D;
    w.dlogc_db = -theta + 2.0 * theta * eb * Eu / D;
    const double Dt = et - (a * ea * Ev + b * eb * Eu);
    w.dlogc_dpar[0] = 1.0 / theta + et / E - (a + b) - 2.0 * Dt / D;
    w.dh1_db = -theta * w.h1 * (1.0 - w.h1);
    w.dh2_da = -theta * w.h2 * (1.0 - w.h2);
    w.dh1_dpar[0] = w.h1 * (a * ea / Eu - b - Dt / D);
    w.dh2_dpar[0] = w.h2 * (b * eb / Ev - a - Dt / D);
}

double frank_hinv1(double p, double b, double theta) {
    const double E = -std::expm1(-theta);
    const double Ev = -std::expm1(-theta * b);
    const double eb = std::exp(-theta * b);
    const double Eu = p * E / (eb + p * Ev);
    return -std::log1p(-Eu) / theta;
}

double frank_cdf(double a, double b, double theta) {
    const double E = -std::expm1(-theta);
    const double Eu = -std::expm1(-theta * a);
    const double Ev = -std::expm1(-theta * b);
    return -std::log1p(-Eu * Ev / E) / theta;
}

// ------------------------------------------------------------------- Joe ----

void joe_value(double a, double b, double theta, double& logc, double& h1,
               double& h2) {
    const double ub = 1.0 - a, vb = 1.0 - b;
    const double lub = std::log(ub), lvb = std::log(vb);
    const double m = theta * std::max(lub, lvb);
    // S = A + B - A*B with A = ub^theta, B = vb^theta
    const double lnS = m + std::log(std::exp(theta * lub - m) +
                                    std::exp(theta * lvb - m) -
                                    std::exp(theta * (lub + lvb) - m));
    const double A = std::exp(theta * lub);
    const double B = std::exp(theta * lvb);
    const double S = std::exp(lnS);
    logc = (1.0 / theta - 2.0) * lnS + (theta - 1.0) * (lub + lvb) +
           std::log(theta - 1.0 + S);
    h1 = std::exp((1.0 / theta - 1.0) * lnS + (theta - 1.0) * lvb +
                  std::log1p(-A));
    h2 = std::exp((1.0 / theta - 1.0) * lnS + (theta - 1.0) * lub +
                  std::log1p(-B));
}

void joe_work(double a, double b, double theta, bool derivs, PairWork& w) {
    const double ub = 1.0 - a, vb = 1.0 - b;
    const double lub = std::log(ub), lvb = std::log(vb);
    const double m = theta * std::max(lub, lvb);
    const double lnS = m + std::log(std::exp(theta * lub - m) +
                                    std::exp(theta * lvb - m) -
                                    std::exp(theta * (lub + lvb) - m));
    const double A = std::exp(theta * lub);
    const double B = std::exp(theta * lvb);
    const double S = std::exp(lnS);
    w.logc = (1.0 / theta - 2.0) * lnS + (theta - 1.0) * (lub + lvb) +
             std::log(theta - 1.0 + S);
    w.c = std::exp(w.logc);
    w.h1 = std::exp((1.0 / theta - 1.0) * lnS + (theta - 1.0) * lvb +
                    std::log1p(-A));
    w.h2 = std::exp((1.0 / theta - 1.0) * lnS + (theta - 1.0) * lub +
                    std::log1p(-B));
    if (!derivs) return;

    // dS/d(ub) = theta*ub^{theta-1}(1-B);   d(ub)/da = -1
    const double Su = theta * (A / ub) * (1.0 - B);
    const double Sv = theta * (B / vb) * (1.0 - A);
    w.dlogc_da = -((1.0 / theta - 2.0) * Su / S + (theta - 1.0) / ub +
                   Su / (theta - 1.0 + S));
    w.dlogc_db = -((1.0 / theta - 2.0) * Sv / S + (theta - 1.0) / vb +
                   Sv / (theta - 1.0 + S));
    w.dh1_db = -w.h1 * ((1.0 / theta - 1.0) * Sv / S + (theta - 1.0) / vb);
    w.dh2_da = -w.h2 * ((1.0 / theta - 1.0) * Su / S + (theta - 1.0) / ub);

    // theta-direction by central differences (no tractable closed form kept)
    double hstep = 1e-5 * std::max(1.0, theta);
    double lp, h1p, h2p, lm, h1m, h2m;
    if (theta - hstep > 1.0 + 1e-9) {
        joe_value(a, b, theta + hstep, lp, h1p, h2p);
        joe_value(a, b, theta - hstep, lm, h1m, h2m);
        w.dlogc_dpar[0] = (lp - lm) / (2.0 * hstep);
        w.dh1_dpar[0] = (h1p - h1m) / (2.0 * hstep);
        w.dh2_dpar[0] = (h2p - h2m) / (2.0 * hstep);
    } else {
        joe_value(a, b, theta + hstep, lp, h1p, h2p);
        w.dlogc_dpar[0] = (lp - w.logc) / hstep;
        w.dh1_dpar[0] = (h1p - w.h1) / hstep;
        w.dh2_dpar[0] = (h2p - w.h2) / hstep;
    }
}

double joe_cdf(double a, double b, double theta) {
    const double lub = std::log(1.0 - a), lvb = std::log(1.0 - b);
    const double m = theta * std::max(lub, lvb);
    const double lnS = m + std::log(std::exp(theta * lub - m) +
                                    std::exp(theta * lvb - m) -
                                    std::exp(theta * (lub + lvb) - m));
    return 1.0 - std::exp(lnS / theta);
}

// ------------------------------------------------------ base dispatchers ----

void base_work(FamilyKind kind, double a, double b, const double* par,
               bool derivs, PairWork& w) {
    switch (kind) {
        case FamilyKind::Independence:
            w.logc = 0.0;
            w.c = 1.0;
            w.h1 = a;
            w.h2 = b;
            if (derivs) {
                w.dlogc_da = w.dlogc_db = 0.0;
                w.dh1_db = w.dh2_da = 0.0;
            }
            return;
        case FamilyKind::Gauss: gauss_work(a, b, par[0], derivs, w); return;
        case FamilyKind::StudentT: t_work(a, b, par, derivs, w); return;
        case FamilyKind::Clayton: clayton_work(a, b, par[0], derivs, w); return;
        case FamilyKind::Gumbel: gumbel_work(a, b, par[0], derivs, w); return;
        case FamilyKind::Frank: frank_work(a, b, par[0], derivs, w); return;
        case FamilyKind::Joe: joe_work(a, b, par[0], derivs, w); return;
    }
    throw UnsupportedFamily("base_work: unknown family");
}

// safeguarded Newton for families without closed-form hinv (Gumbel, Joe)
double newton_hinv1(FamilyKind kind, const double* par, double w, double b) {
    double lo = kUEps, hi = 1.0 - kUEps;
    double x = std::clamp(w, 0.05, 0.95);
    PairWork pw;
    for (int it = 0; it < 100; ++it) {
        base_work(kind, x, b, par, false, pw);
        const double f = pw.h1 - w;
        if (std::abs(f) < 1e-13) return x;
        if (f > 0.0) hi = x; else lo = x;
        const double dens = pw.c > 1e-300 ? pw.c : 1e-300;
        double xn = x - f / dens;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) < 1e-15 && std::abs(f) < 1e-9) return xn;
        x = xn;
    }
    return x;
}

double base_hinv1(FamilyKind kind, const double* par, double w, double b) {
    switch (kind) {
        case FamilyKind::Independence: return w;
        case FamilyKind::Gauss: return gauss_hinv1(w, b, par[0]);
        case FamilyKind::StudentT: return t_hinv1(w, b, par[0], par[1]);
        case FamilyKind::Clayton: return clayton_hinv1(w, b, par[0]);
        case FamilyKind::Frank: return frank_hinv1(w, b, par[0]);
        case FamilyKind::Gumbel:
        case FamilyKind::Joe: return newton_hinv1(kind, par, w, b);
    }
    throw UnsupportedFamily("base_hinv1: unknown family");
}

} // namespace

// ------------------------------------------------------------- rotations ----

void pair_work(const BicopSpec& spec, double a, double b, bool need_derivs,
               PairWork& out) {
    pair_work(spec.family, spec.params.data(), a, b, need_derivs, out);
}

void pair_work(BicopFamily family, const double* par, double a, double b,
               bool need_derivs, PairWork& out) {
    a = clamp_u(a);
    b = clamp_u(b);
    const Rotation rot = family.rot;
    if (rot == Rotation::R0) {
        base_work(family.kind, a, b, par, need_derivs, out);
        return;
    }
    PairWork base;
    double aa = a, bb = b;
    if (rot == Rotation::R90) aa = 1.0 - a;
    else if (rot == Rotation::R180) { aa = 1.0 - a; bb = 1.0 - b; }
    else if (rot == Rotation::R270) bb = 1.0 - b;
    base_work(family.kind, aa, bb, par, need_derivs, base);

    const int np = param_count(family.kind);
    out.logc = base.logc;
    out.c = base.c;
    switch (rot) {
        case Rotation::R90:
            out.h1 = 1.0 - base.h1;
            out.h2 = base.h2;
            if (need_derivs) {
                out.dlogc_da = -base.dlogc_da;
                out.dlogc_db = base.dlogc_db;
                out.dh1_db = -base.dh1_db;
                out.dh2_da = -base.dh2_da;
                for (int k = 0; k < np; ++k) {
                    out.dlogc_dpar[k] = base.dlogc_dpar[k];
                    out.dh1_dpar[k] = -base.dh1_dpar[k];
                    out.dh2_dpar[k] = base.dh2_dpar[k];
                }
            }
            break;
        case Rotation::R180:
            out.h1 = 1.0 - base.h1;
            out.h2 = 1.0 - base.h2;
            if (need_derivs) {
                out.dlogc_da = -base.dlogc_da;
                out.dlogc_db = -base.dlogc_db;
                out.dh1_db = base.dh1_db;
                out.dh2_da = base.dh2_da;
                for (int k = 0; k < np; ++k) {
                    out.dlogc_dpar[k] = base.dlogc_dpar[k];
                    out.dh1_dpar[k] = -base.dh1_dpar[k];
                    out.dh2_dpar[k] = -base.dh2_dpar[k];
                }
            }
            break;
        case Rotation::R270:
            out.h1 = base.h1;
            out.h2 = 1.0 - base.h2;
            if (need_derivs) {
                out.dlogc_da = base.dlogc_da;
                out.dlogc_db = -base.dlogc_db;
                out.dh1_db = -base.dh1_db;
                out.dh2_da = -base.dh2_da;
                for (int k = 0; k < np; ++k) {
                    out.dlogc_dpar[k] = base.dlogc_dpar[k];
                    out.dh1_dpar[k] = base.dh1_dpar[k];
                    out.dh2_dpar[k] = -base.dh2_dpar[k];
                }
            }
            break;
        default: break;
    }
}

// --------------------------------------------------------------- public ----

ParamBounds param_bounds(BicopFamily family, int k) {
    switch (family.kind) {
        case FamilyKind::Independence: break;
        case FamilyKind::Gauss: return {-0.99999, 0.99999};
        case FamilyKind::StudentT:
            return k == 0 ? ParamBounds{-0.99999, 0.99999}
                          : ParamBounds{1.001, 1e6};
        case FamilyKind::Clayton: return {1e-8, 28.0};
        case FamilyKind::Gumbel: return {1.0, 50.0};
        case FamilyKind::Frank: return {-35.0, 35.0};
        case FamilyKind::Joe: return {1.0, 50.0};
    }
    throw InvalidParameter("param_bounds: family has no parameters");
}

int param_count(FamilyKind kind) {
    switch (kind) {
        case FamilyKind::Independence: return 0;
        case FamilyKind::StudentT: return 2;
        default: return 1;
    }
}

bool rotation_allowed(BicopFamily family) {
    if (family.rot == Rotation::R0) return true;
    return family.kind == FamilyKind::Clayton ||
           family.kind == FamilyKind::Gumbel || family.kind == FamilyKind::Joe;
}

bool has_analytic_param_derivs(FamilyKind kind) {
    switch (kind) {
        case FamilyKind::Independence:
        case FamilyKind::Gauss:
        case FamilyKind::Clayton:
        case FamilyKind::Gumbel:
        case FamilyKind::Frank: return true;
        default: return false; // StudentT nu and Joe use internal differences
    }
}

void validate_spec(const BicopSpec& spec) {
    if (!rotation_allowed(spec.family))
        throw InvalidParameter("rotation only supported for Clayton/Gumbel/Joe");
    const int np = param_count(spec.family.kind);
    if (static_cast<int>(spec.params.size()) != np)
        throw InvalidParameter("wrong parameter count for " +
                               family_code(spec.family));
    for (double p : spec.params)
        if (!std::isfinite(p)) throw InvalidParameter("non-finite parameter");
    switch (spec.family.kind) {
        case FamilyKind::Independence: break;
        case FamilyKind::Gauss:
            if (!(std::abs(spec.params[0]) <= 0.99999))
                throw InvalidParameter("gauss: |rho| must be <= 0.99999");
            break;
        case FamilyKind::StudentT:
            if (!(std::abs(spec.params[0]) <= 0.99999))
                throw InvalidParameter("t: |rho| must be <= 0.99999");
            if (!(spec.params[1] >= 1.001 && spec.params[1] <= 1e6))
                throw InvalidParameter("t: nu must lie in [1.001, 1e6]");
            break;
        case FamilyKind::Clayton:
            if (!(spec.params[0] > 0.0 && spec.params[0] <= 28.0))
                throw InvalidParameter("clayton: theta must lie in (0, 28]");
            break;
        case FamilyKind::Gumbel:
            if (!(spec.params[0] >= 1.0 && spec.params[0] <= 50.0))
                throw InvalidParameter("gumbel: theta must lie in [1, 50]");
            break;
        case FamilyKind::Frank:
            if (spec.params[0] == 0.0 || std::abs(spec.params[0]) > 35.0)
                throw InvalidParameter("frank: theta must be nonzero, |theta| <= 35");
            break;
        case FamilyKind::Joe:
            if (!(spec.params[0] >= 1.0 && spec.params[0] <= 50.0))
                throw InvalidParameter("joe: theta must lie in [1, 50]");
            break;
    }
}

std::string family_code(BicopFamily family) {
    std::string s;
    switch (family.kind) {
        case FamilyKind::Independence: s = "indep"; break;
        case FamilyKind::Gauss: s = "gauss"; break;
        case FamilyKind::StudentT: s = "t"; break;
        case FamilyKind::Clayton: s = "clayton"; break;
        case FamilyKind::Gumbel: s = "gumbel"; break;
        case FamilyKind::Frank: s = "frank"; break;
        case FamilyKind::Joe: s = "joe"; break;
    }
    if (family.rot == Rotation::R90) s += "@90";
    else if (family.rot == Rotation::R180) s += "@180";
    else if (family.rot == Rotation::R270) s += "@270";
    return s;
}

BicopFamily family_from_code(const std::string& code) {
    std::string name = code;
    Rotation rot = Rotation::R0;
    if (auto pos = code.find('@'); pos != std::string::npos) {
        name = code.substr(0, pos);
        const std::string deg = code.substr(pos + 1);
        if (deg == "90") rot = Rotation::R90;
        else if (deg == "180") rot = Rotation::R180;
        else if (deg == "270") rot = Rotation::R270;
        else throw ParseError("unknown rotation '" + deg + "'");
    }
    FamilyKind kind;
    if (name == "indep") kind = FamilyKind::Independence;
    else if (name == "gauss") kind = FamilyKind::Gauss;
    else if (name == "t") kind = FamilyKind::StudentT;
    else if (name == "clayton") kind = FamilyKind::Clayton;
    else if (name == "gumbel") kind = FamilyKind::Gumbel;
    else if (name == "frank") kind = FamilyKind::Frank;
    else if (name == "joe") kind = FamilyKind::Joe;
    else throw ParseError("unknown family code '" + name + "'");
    BicopFamily fam{kind, rot};
    if (!rotation_allowed(fam))
        throw ParseError("rotation not supported for family '" + name + "'");
    return fam;
}

double log_pdf(const BicopSpec& spec, double u, double v) {
    PairWork w;
    pair_work(spec, u, v, false, w);
    return w.logc;
}

double pdf(const BicopSpec& spec, double u, double v) {
    return std::exp(log_pdf(spec, u, v));
}

double cdf(const BicopSpec& spec, double u, double v) {
    u = clamp_u(u);
    v = clamp_u(v);
    const FamilyKind kind = spec.family.kind;
    const double* par = spec.params.data();
    auto base = [&](double a, double b) -> double {
        switch (kind) {
            case FamilyKind::Independence: return a * b;
            case FamilyKind::Clayton: return clayton_cdf(a, b, par[0]);
            case FamilyKind::Gumbel: return gumbel_cdf(a, b, par[0]);
            case FamilyKind::Frank: return frank_cdf(a, b, par[0]);
            case FamilyKind::Joe: return joe_cdf(a, b, par[0]);
            default:
                throw UnsupportedFamily("cdf: no closed form for " +
                                        family_code(spec.family));
        }
    };
    switch (spec.family.rot) {
        case Rotation::R0: return base(u, v);
        case Rotation::R90: return v - base(1.0 - u, v);
        case Rotation::R180: return u + v - 1.0 + base(1.0 - u, 1.0 - v);
        case Rotation::R270: return u - base(u, 1.0 - v);
    }
    throw UnsupportedFamily("cdf: unknown rotation");
}

double hfunc(const BicopSpec& spec, double u, double v) {
    PairWork w;
    pair_work(spec, u, v, false, w);
    return clamp_u(w.h1);
}

double hfunc2(const BicopSpec& spec, double u, double v) {
    PairWork w;
    pair_work(spec, u, v, false, w);
    return clamp_u(w.h2);
}

double hinv(const BicopSpec& spec, double w, double v) {
    w = clamp_u(w);
    v = clamp_u(v);
    const FamilyKind kind = spec.family.kind;
    const double* par = spec.params.data();
    double r;
    switch (spec.family.rot) {
        case Rotation::R0: r = base_hinv1(kind, par, w, v); break;
        case Rotation::R90: r = 1.0 - base_hinv1(kind, par, 1.0 - w, v); break;
        case Rotation::R180:
            r = 1.0 - base_hinv1(kind, par, 1.0 - w, 1.0 - v);
            break;
        case Rotation::R270: r = base_hinv1(kind, par, w, 1.0 - v); break;
        default: throw UnsupportedFamily("hinv: unknown rotation");
    }
    return clamp_u(r);
}

double hinv2(const BicopSpec& spec, double w, double u) {
    w = clamp_u(w);
    u = clamp_u(u);
    const FamilyKind kind = spec.family.kind;
    const double* par = spec.params.data();
    double r;
    // base families are exchangeable: hinv2_base(w|a) = hinv1_base(w|a)
    switch (spec.family.rot) {
        case Rotation::R0: r = base_hinv1(kind, par, w, u); break;
        case Rotation::R90: r = base_hinv1(kind, par, w, 1.0 - u); break;
        case Rotation::R180:
            r = 1.0 - base_hinv1(kind, par, 1.0 - w, 1.0 - u);
            break;
        case Rotation::R270: r = 1.0 - base_hinv1(kind, par, 1.0 - w, u); break;
        default: throw UnsupportedFamily("hinv2: unknown rotation");
    }
    return clamp_u(r);
}

Eigen::VectorXd loglik_grad(const BicopSpec& spec, double u, double v) {
    const int np = param_count(spec.family.kind);
    Eigen::VectorXd g(np);
    PairWork w;
    pair_work(spec, u, v, true, w);
    for (int k = 0; k < np; ++k) g[k] = w.dlogc_dpar[k];
    return g;
}

Eigen::MatrixXd loglik_hess(const BicopSpec& spec, double u, double v) {
    const int np = param_count(spec.family.kind);
    Eigen::MatrixXd H(np, np);
    if (np == 0) return H;
    u = clamp_u(u);
    v = clamp_u(v);

    const FamilyKind kind = spec.family.kind;
    if (kind == FamilyKind::Gauss || kind == FamilyKind::Clayton) {
        // analytic second derivative in theta
        double a = u, b = v;
        switch (spec.family.rot) {
            case Rotation::R90: a = 1.0 - u; break;
            case Rotation::R180: a = 1.0 - u; b = 1.0 - v; break;
            case Rotation::R270: b = 1.0 - v; break;
            default: break;
        }
        if (kind == FamilyKind::Gauss) {
            const double r = spec.params[0];
            const double x = norm_quantile(a), y = norm_quantile(b);
            const double s = 1.0 - r * r;
            const double num =
                r * s - r * (x * x + y * y) + x * y * (1.0 + r * r);
            const double dnum = s - 2.0 * r * r - (x * x + y * y) + 2.0 * r * x * y;
            // d/dr [num/s^2] = dnum/s^2 + 4 r num / s^3
            H(0, 0) = dnum / (s * s) + 4.0 * r * num / (s * s * s);
        } else {
            const double th = spec.params[0];
            const double la = std::log(a), lb = std::log(b);
            const double ea = -th * la, eb = -th * lb;
            const double m = std::max(ea, eb);
            const double lnS =
                m + std::log(std::exp(ea - m) + std::exp(eb - m) - std::exp(-m));
            const double ra = std::exp(ea - lnS), rb = std::exp(eb - lnS);
            const double sts = (ra * ea + rb * eb) / th;          // S_theta / S
            const double stts = (ra * ea * ea + rb * eb * eb) / (th * th); // S_tt / S
            H(0, 0) = -1.0 / ((1.0 + th) * (1.0 + th)) -
                      2.0 * lnS / (th * th * th) + 2.0 * sts / (th * th) -
                      (2.0 + 1.0 / th) * (stts - sts * sts);
        }
        return H;
    }

    // central differences of the analytic/internal gradient
    for (int k = 0; k < np; ++k) {
        const double h = 1e-4 * std::max(1.0, std::abs(spec.params[k]));
        BicopSpec sp = spec, sm = spec;
        sp.params[k] += h;
        sm.params[k] -= h;
        const Eigen::VectorXd gp = loglik_grad(sp, u, v);
        const Eigen::VectorXd gm = loglik_grad(sm, u, v);
        H.col(k) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

// ------------------------------------------------------------------ tau ----

namespace {

double frank_tau_raw(double theta) { // theta > 0
    return 1.0 - 4.0 / theta + 4.0 * debye1(theta) / theta;
}

double joe_tau_raw(double theta) { // theta >= 1
    if (theta == 1.0) return 0.0;
    // tau = 1 - 4 sum_k 1/(k (theta k + 2)(theta (k-1) + 2)), tail ~ 1/(2 th^2 K^2)
    const int K = 2000;
    double s = 0.0;
    for (int k = 1; k <= K; ++k)
        s += 1.0 / (k * (theta * k + 2.0) * (theta * (k - 1.0) + 2.0));
    s += 1.0 / (2.0 * theta * theta * K * K);
    return 1.0 - 4.0 * s;
}

} // namespace

double param_to_tau(const BicopSpec& spec) {
    validate_spec(spec);
    double tau = 0.0;
    switch (spec.family.kind) {
        case FamilyKind::Independence: tau = 0.0; break;
        case FamilyKind::Gauss:
        case FamilyKind::StudentT:
            tau = 2.0 / M_PI * std::asin(spec.params[0]);
            break;
        case FamilyKind::Clayton:
            tau = spec.params[0] / (spec.params[0] + 2.0);
            break;
        case FamilyKind::Gumbel: tau = 1.0 - 1.0 / spec.params[0]; break;
        case FamilyKind::Frank: {
            const double th = std::abs(spec.params[0]);
            tau = frank_tau_raw(th);
            if (spec.params[0] < 0.0) tau = -tau;
            break;
        }
        case FamilyKind::Joe: tau = joe_tau_raw(spec.params[0]); break;
    }
    if (spec.family.rot == Rotation::R90 || spec.family.rot == Rotation::R270)
        tau = -tau;
    return tau;
}

std::vector<double> tau_to_param(BicopFamily family, double tau) {
    if (!rotation_allowed(family))
        throw InvalidParameter("tau_to_param: rotation not supported for " +
                               family_code(family));
    if (!(tau > -1.0 && tau < 1.0))
        throw IncompatibleTau("tau must lie in (-1,1)");
    // Rotations by 90/270 flip the sign of tau; solve for the base family.
    const bool neg_rot =
        family.rot == Rotation::R90 || family.rot == Rotation::R270;
    const double bt = neg_rot ? -tau : tau;
    switch (family.kind) {
        case FamilyKind::Independence:
            if (std::abs(tau) > 1e-12)
                throw IncompatibleTau("independence requires tau = 0");
            return {};
        case FamilyKind::Gauss: return {std::sin(M_PI * tau / 2.0)};
        case FamilyKind::StudentT: return {std::sin(M_PI * tau / 2.0), 5.0};
        case FamilyKind::Clayton: {
            if (!(bt > 0.0))
                throw IncompatibleTau("clayton" +
                                      std::string(neg_rot ? "@rot" : "") +
                                      ": tau has the wrong sign");
            const double th = 2.0 * bt / (1.0 - bt);
            if (th > 28.0) throw IncompatibleTau("clayton: tau too large");
            return {th};
        }
        case FamilyKind::Gumbel: {
            if (bt < 0.0) throw IncompatibleTau("gumbel: tau has the wrong sign");
            const double th = 1.0 / (1.0 - bt);
            if (th > 50.0) throw IncompatibleTau("gumbel: tau too large");
            return {th};
        }
        case FamilyKind::Frank: {
            if (bt == 0.0) throw IncompatibleTau("frank: tau = 0 not reachable");
            const double at = std::abs(bt);
            if (at >= frank_tau_raw(35.0))
                throw IncompatibleTau("frank: tau too large");
            const double th = brent_root(
                [&](double t) { return frank_tau_raw(t) - at; }, 1e-6, 35.0);
            return {bt > 0.0 ? th : -th};
        }
        case FamilyKind::Joe: {
            if (bt < 0.0) throw IncompatibleTau("joe: tau has the wrong sign");
            if (bt < 1e-12) return {1.0};
            if (bt >= joe_tau_raw(50.0))
                throw IncompatibleTau("joe: tau too large");
            const double th = brent_root(
                [&](double t) { return joe_tau_raw(t) - bt; }, 1.0 + 1e-10, 50.0);
            return {th};
        }
    }
    throw UnsupportedFamily("tau_to_param: unknown family");
}

} // namespace vinegof
