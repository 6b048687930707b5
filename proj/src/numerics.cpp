#include "vinegof/numerics.hpp"
#include "vinegof/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vinegof {

namespace {
const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);
} // namespace

double norm_cdf(double x) { return boost::math::cdf(kStdNormal, x); }
double norm_pdf(double x) { return boost::math::pdf(kStdNormal, x); }

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("norm_quantile: p must lie in (0,1)");
    return boost::math::quantile(kStdNormal, p);
}

double t_cdf(double x, double nu) {
    boost::math::students_t_distribution<double> dist(nu);
    return boost::math::cdf(dist, x);
}

double t_pdf(double x, double nu) {
    boost::math::students_t_distribution<double> dist(nu);
    return boost::math::pdf(dist, x);
}

double t_quantile(double p, double nu) {
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("t_quantile: p must lie in (0,1)");
    boost::math::students_t_distribution<double> dist(nu);
    return boost::math::quantile(dist, p);
}

double chi2_sf(double x, double k) {
    if (x <= 0.0) return 1.0;
    // regularized upper incomplete gamma Q(k/2, x/2)
    return boost::math::gamma_q(k / 2.0, x / 2.0);
}

double debye1(double x) {
    if (x == 0.0) throw DomainError("debye1: x must be nonzero");
    // D1(-x) = D1(x) + x/2
    if (x < 0.0) return debye1(-x) - x / 2.0;
    // 64-node Gauss-Legendre on [0,x] of t/(e^t-1), then divide by x.
    static const int N = 64;
    static double nodes[N], weights[N];
    static bool init = false;
    if (!init) {
        // Golub-Welsch via Newton on Legendre polynomials.
        for (int i = 0; i < N; ++i) {
            double t = std::cos(M_PI * (i + 0.75) / (N + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= N; ++k) {
                    double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                double dp = N * (t * p1 - p0) / (t * t - 1.0);
                double step = p1 / dp;
                t -= step;
                if (std::abs(step) < 1e-15) break;
            }
            nodes[i] = t;
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= N; ++k) {
                double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = N * (t * p1 - p0) / (t * t - 1.0);
            weights[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
        init = true;
    }
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        const double t = 0.5 * x * (nodes[i] + 1.0);
        // t/(e^t-1) with a stable small-t limit
        const double f = (t < 1e-8) ? 1.0 - t / 2.0 : t / std::expm1(t);
        acc += weights[i] * f;
    }
    acc *= 0.5 * x; // scale from [-1,1] to [0,x]
    return acc / x;
}

// ---- Kendall tau ------------------------------------------------------------

namespace {

// counts exchanges needed to sort y (merge sort), i.e. discordant-ish pairs
std::uint64_t merge_count(std::vector<double>& y, std::vector<double>& buf,
                          std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t swaps = merge_count(y, buf, lo, mid) + merge_count(y, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (y[j] < y[i]) {
            swaps += mid - i;
            buf[k++] = y[j++];
        } else {
            buf[k++] = y[i++];
        }
    }
    while (i < mid) buf[k++] = y[i++];
    while (j < hi) buf[k++] = y[j++];
    std::copy(buf.begin() + lo, buf.begin() + hi, y.begin() + lo);
    return swaps;
}

std::uint64_t tie_pairs(const std::vector<double>& v) {
    std::uint64_t total = 0, run = 1;
    for (std::size_t i = 1; i <= v.size(); ++i) {
        if (i < v.size() && v[i] == v[i - 1]) {
            ++run;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    return total;
}

} // namespace

double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size()) throw DomainError("kendall_tau: length mismatch");
    if (n < 2) throw DegenerateSample("kendall_tau: need at least 2 points");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });

    // ties in x, and joint ties, from the (x,y)-sorted order
    std::uint64_t n1 = 0, n3 = 0;
    {
        std::uint64_t runx = 1, runxy = 1;
        for (std::size_t i = 1; i <= n; ++i) {
            const bool same_x = i < n && x[idx[i]] == x[idx[i - 1]];
            const bool same_xy = same_x && y[idx[i]] == y[idx[i - 1]];
            if (same_x) ++runx;
            else {
                n1 += runx * (runx - 1) / 2;
                runx = 1;
            }
            if (same_xy) ++runxy;
            else {
                n3 += runxy * (runxy - 1) / 2;
                runxy = 1;
            }
        }
    }

    std::vector<double> ysorted(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) ysorted[i] = y[idx[i]];
    const std::uint64_t swaps = merge_count(ysorted, buf, 0, n);

    // ysorted is now y in ascending order
    const std::uint64_t n2 = tie_pairs(ysorted);
    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;

    if (n1 == n0 || n2 == n0)
        throw DegenerateSample("kendall_tau: a margin is constant");

    // concordant - discordant = n0 - n1 - n2 + n3 - 2*swaps
    const double num = static_cast<double>(n0) - static_cast<double>(n1) -
                       static_cast<double>(n2) + static_cast<double>(n3) -
                       2.0 * static_cast<double>(swaps);
    const double den = std::sqrt(static_cast<double>(n0 - n1)) *
                       std::sqrt(static_cast<double>(n0 - n2));
    return num / den;
}

std::vector<double> uniform_ranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n == 0) throw DegenerateSample("uniform_ranks: empty column");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mid / (n + 1.0);
        i = j + 1;
    }
    return r;
}

// ---- solvers ----------------------------------------------------------------

double brent_root(const std::function<double(double)>& f, double a, double b,
                  double tol, int max_iter) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw NumericalError("brent_root: endpoints do not bracket");
    double c = a, fc = fa, d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * 1e-16 * std::abs(b) + 0.5 * tol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double p, q, r;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                q = fa / fc;
                r = fb / fc;
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
                q = (q - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    throw ConvergenceError("brent_root: too many iterations");
}

double brent_min(const std::function<double(double)>& f, double a, double b,
                 double tol, int max_iter) {
    const double gold = 0.3819660112501051;
    double x = a + gold * (b - a), w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        const double xm = 0.5 * (a + b);
        const double tol1 = tol * std::abs(x) + 1e-12;
        const double tol2 = 2.0 * tol1;
        if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) return x;
        bool golden = true;
        if (std::abs(e) > tol1) {
            const double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::abs(q);
            const double etemp = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) &&
                p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm - x >= 0 ? tol1 : -tol1);
                golden = false;
            }
        }
        if (golden) {
            e = (x >= xm) ? a - x : b - x;
            d = gold * e;
        }
        const double u = (std::abs(d) >= tol1) ? x + d : x + (d >= 0 ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; w = x; x = u;
            fv = fw; fw = fx; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; w = u;
                fv = fw; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u;
                fv = fu;
            }
        }
    }
    return x; // best point found; callers treat non-improvement as failure
}

// ---- Halton -----------------------------------------------------------------

void halton_point(std::uint64_t i, int dim, double* out) {
    static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
    if (dim > 20) throw DomainError("halton_point: dimension > 20");
    for (int k = 0; k < dim; ++k) {
        const std::uint64_t base = primes[k];
        double f = 1.0, r = 0.0;
        std::uint64_t n = i;
        while (n > 0) {
            f /= static_cast<double>(base);
            r += f * static_cast<double>(n % base);
            n /= base;
        }
        out[k] = r;
    }
}

// ---- empirical distribution -------------------------------------------------

double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf) {
    const std::size_t n = sample.size();
    if (n == 0) throw DegenerateSample("ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double F = cdf(sample[i]);
        d = std::max(d, std::abs(F - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - F));
    }
    return d;
}

double ks_pvalue(double d, std::size_t n) {
    const double x = (std::sqrt(static_cast<double>(n)) + 0.12 +
                      0.11 / std::sqrt(static_cast<double>(n))) * d;
    if (x < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * x * x);
        s += term;
        if (std::abs(term) < 1e-12) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

double dkw_epsilon(std::size_t n, double delta) {
    if (n == 0 || !(delta > 0.0 && delta < 1.0))
        throw DomainError("dkw_epsilon: bad arguments");
    return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

// ---- RNG streams ------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose,
                          std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= purpose * 0xd1342543de82ef95ULL;
    std::uint64_t b = splitmix64(s);
    s ^= index * 0xaf251af3b0f025b5ULL;
    std::uint64_t c = splitmix64(s);
    return a ^ (b + 0x9e3779b97f4a7c15ULL) ^ (c << 1);
}

} // namespace vinegof
