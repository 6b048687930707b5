#include "vinegof/fit.hpp"
#include "vinegof/derivs.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

namespace vinegof {

namespace {

// ---- placeholder specs so the evaluation plan can be built before fitting ----

BicopSpec placeholder_spec(BicopFamily fam) {
    switch (fam.kind) {
        case FamilyKind::Independence: return {fam, {}};
        case FamilyKind::Gauss: return {fam, {0.0}};
        case FamilyKind::StudentT: return {fam, {0.0, 5.0}};
        case FamilyKind::Clayton: return {fam, {1.0}};
        case FamilyKind::Gumbel: return {fam, {1.5}};
        case FamilyKind::Frank: return {fam, {1.0}};
        case FamilyKind::Joe: return {fam, {1.5}};
    }
    throw UnsupportedFamily("placeholder_spec: unknown family");
}

// ---- single-pair log-likelihood with per-family precomputation --------------

struct Pair1D {
    FamilyKind kind;
    int n = 0;
    std::vector<double> ta, tb; // family-specific per-observation transforms
    double s1 = 0, s2 = 0;      // family-specific sufficient sums

    // inputs already reflected for the rotation
    Pair1D(FamilyKind k, const std::vector<double>& a, const std::vector<double>& b)
        : kind(k), n(static_cast<int>(a.size())) {
        switch (kind) {
            case FamilyKind::Gauss: {
                for (int i = 0; i < n; ++i) {
                    const double x = norm_quantile(a[i]);
                    const double y = norm_quantile(b[i]);
                    s1 += x * x + y * y;
                    s2 += x * y;
                }
                break;
            }
            case FamilyKind::Clayton: {
                ta.resize(n);
                tb.resize(n);
                for (int i = 0; i < n; ++i) {
                    ta[i] = std::log(a[i]);
                    tb[i] = std::log(b[i]);
                    s1 += ta[i] + tb[i];
                }
                break;
            }
            case FamilyKind::Gumbel: {
                ta.resize(n);
                tb.resize(n);
                for (int i = 0; i < n; ++i) {
                    const double lu = -std::log(a[i]), lv = -std::log(b[i]);
                    ta[i] = std::log(lu);
                    tb[i] = std::log(lv);
                    s1 += lu + lv;      // sum of -ln u - ln v
                    s2 += ta[i] + tb[i]; // sum of ln(-ln u) + ln(-ln v)
                }
                break;
            }
            case FamilyKind::Frank: {
                ta = a;
                tb = b;
                for (int i = 0; i < n; ++i) s1 += a[i] + b[i];
                break;
            }
            case FamilyKind::Joe: {
                ta.resize(n);
                tb.resize(n);
                for (int i = 0; i < n; ++i) {
                    ta[i] = std::log1p(-a[i]);
                    tb[i] = std::log1p(-b[i]);
                    s1 += ta[i] + tb[i];
                }
                break;
            }
            default:
                throw UnsupportedFamily("Pair1D: family not handled here");
        }
    }

    double loglik(double th) const {
        switch (kind) {
            case FamilyKind::Gauss: {
                const double s = 1.0 - th * th;
                return -0.5 * n * std::log(s) -
                       (th * th * s1 - 2.0 * th * s2) / (2.0 * s);
            }
            case FamilyKind::Clayton: {
                double acc = n * std::log1p(th) - (1.0 + th) * s1;
                for (int i = 0; i < n; ++i) {
                    const double ea = -th * ta[i], eb = -th * tb[i];
                    const double m = std::max(ea, eb);
                    acc -= (2.0 + 1.0 / th) *
                           (m + std::log(std::exp(ea - m) + std::exp(eb - m) -
                                         std::exp(-m)));
                }
                return acc;
            }
            case FamilyKind::Gumbel: {
                double acc = s1 + (th - 1.0) * s2;
                for (int i = 0; i < n; ++i) {
                    const double m = th * std::max(ta[i], tb[i]);
                    const double lnS = m + std::log(std::exp(th * ta[i] - m) +
                                                    std::exp(th * tb[i] - m));
                    const double t = std::exp(lnS / th);
                    acc += -t + (1.0 / th - 2.0) * lnS + std::log(t + th - 1.0);
                }
                return acc;
            }
            case FamilyKind::Frank: {
                const double E = -std::expm1(-th);
                const double et = std::exp(-th);
                double acc = n * std::log(th * E) - th * s1;
                for (int i = 0; i < n; ++i) {
                    const double ea = std::exp(-th * ta[i]);
                    const double eb = std::exp(-th * tb[i]);
                    acc -= 2.0 * std::log(std::abs(ea + eb - ea * eb - et));
                }
                return acc;
            }
            case FamilyKind::Joe: {
                double acc = (th - 1.0) * s1;
                for (int i = 0; i < n; ++i) {
                    const double m = th * std::max(ta[i], tb[i]);
                    const double lnS =
                        m + std::log(std::exp(th * ta[i] - m) +
                                     std::exp(th * tb[i] - m) -
                                     std::exp(th * (ta[i] + tb[i]) - m));
                    acc += (1.0 / th - 2.0) * lnS +
                           std::log(th - 1.0 + std::exp(lnS));
                }
                return acc;
            }
            default: return std::numeric_limits<double>::quiet_NaN();
        }
    }
};

void reflect_inputs(Rotation rot, std::vector<double>& a, std::vector<double>& b) {
    if (rot == Rotation::R90 || rot == Rotation::R180)
        for (double& x : a) x = 1.0 - x;
    if (rot == Rotation::R180 || rot == Rotation::R270)
        for (double& x : b) x = 1.0 - x;
}

// ---- StudentT profile likelihood ---------------------------------------------

double t_pair_loglik(const std::vector<double>& x, const std::vector<double>& y,
                     double lg_const, double sum_log1p, double rho, double nu) {
    const int n = static_cast<int>(x.size());
    const double s = 1.0 - rho * rho;
    double acc = n * (lg_const - 0.5 * std::log(s)) +
                 (nu + 1.0) / 2.0 * sum_log1p;
    for (int i = 0; i < n; ++i) {
        const double M = x[i] * x[i] - 2.0 * rho * x[i] * y[i] + y[i] * y[i];
        acc -= (nu + 2.0) / 2.0 * std::log1p(M / (nu * s));
    }
    return acc;
}

std::pair<BicopSpec, double> fit_t_pair(const std::vector<double>& a,
                                        const std::vector<double>& b,
                                        std::optional<double> fixed_nu) {
    const double tau = kendall_tau(a, b);
    const double rho0 = std::clamp(std::sin(M_PI * tau / 2.0), -0.999, 0.999);
    const int n = static_cast<int>(a.size());

    auto profile = [&](double nu, double& rho_out) -> double {
        std::vector<double> x(n), y(n);
        double sum_log1p = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] = t_quantile(a[i], nu);
            y[i] = t_quantile(b[i], nu);
            sum_log1p += std::log1p(x[i] * x[i] / nu) +
                         std::log1p(y[i] * y[i] / nu);
        }
        const double lg = std::lgamma((nu + 2.0) / 2.0) + std::lgamma(nu / 2.0) -
                          2.0 * std::lgamma((nu + 1.0) / 2.0);
        const double phi0 = std::atanh(rho0);
        const double lo = std::max(-7.0, phi0 - 3.0), hi = std::min(7.0, phi0 + 3.0);
        const double phi = brent_min(
            [&](double ph) {
                return -t_pair_loglik(x, y, lg, sum_log1p, 0.99995 * std::tanh(ph), nu);
            },
            lo, hi, 1e-8);
        rho_out = 0.99995 * std::tanh(phi);
        return t_pair_loglik(x, y, lg, sum_log1p, rho_out, nu);
    };

    double nu_hat, rho_hat = rho0;
    if (fixed_nu) {
        nu_hat = *fixed_nu;
    } else {
        double rho_tmp = rho0;
        const double phi_nu = brent_min(
            [&](double ph) { return -profile(2.001 + std::exp(ph), rho_tmp); },
            std::log(0.1), std::log(498.0), 1e-4);
        nu_hat = 2.001 + std::exp(phi_nu);
    }
    const double ll = profile(nu_hat, rho_hat);
    if (!std::isfinite(ll))
        throw OptimizationError("fit_t_pair: likelihood not finite");
    BicopSpec spec{{FamilyKind::StudentT, Rotation::R0}, {rho_hat, nu_hat}};
    return {spec, ll};
}

std::pair<BicopSpec, double> fit_pair_impl(BicopFamily family,
                                           const std::vector<double>& a,
                                           const std::vector<double>& b,
                                           std::optional<double> fixed_nu) {
    if (family.kind == FamilyKind::Independence)
        return {BicopSpec{family, {}}, 0.0};
    if (family.kind == FamilyKind::StudentT) {
        auto [spec, ll] = fit_t_pair(a, b, fixed_nu);
        return {spec, ll};
    }

    std::vector<double> ra = a, rb = b;
    reflect_inputs(family.rot, ra, rb);
    Pair1D data(family.kind, ra, rb);

    double best_theta = 0.0, best_ll = -std::numeric_limits<double>::infinity();
    auto search = [&](double phi_lo, double phi_hi,
                      const std::function<double(double)>& theta_of) {
        const double phi = brent_min(
            [&](double ph) { return -data.loglik(theta_of(ph)); }, phi_lo,
            phi_hi, 1e-9);
        const double th = theta_of(phi);
        const double ll = data.loglik(th);
        if (ll > best_ll) {
            best_ll = ll;
            best_theta = th;
        }
    };

    switch (family.kind) {
        case FamilyKind::Gauss:
            search(-6.1, 6.1, [](double ph) { return 0.99995 * std::tanh(ph / 0.99995) ; });
            break;
        case FamilyKind::Clayton:
            search(std::log(1e-4), std::log(28.0),
                   [](double ph) { return std::exp(ph); });
            break;
        case FamilyKind::Gumbel:
        case FamilyKind::Joe:
            search(std::log(1e-6), std::log(49.0),
                   [](double ph) { return 1.0 + std::exp(ph); });
            break;
        case FamilyKind::Frank:
            // the two signs are separate branches; pick the better one
            search(1e-6, 35.0, [](double ph) { return ph; });
            search(-35.0, -1e-6, [](double ph) { return ph; });
            break;
        default:
            throw UnsupportedFamily("fit_pair: unknown family");
    }
    if (!std::isfinite(best_ll))
        throw OptimizationError("fit_pair: likelihood not finite for " +
                                family_code(family));
    return {BicopSpec{family, {best_theta}}, best_ll};
}

// ---- sequential pipeline -----------------------------------------------------

struct SeqResult {
    std::vector<BicopSpec> specs;
    double loglik = 0;
};

SeqResult sequential_pass(const RVineModel& skel, const CopulaSample& sample,
                          std::optional<double> fixed_nu) {
    const int n = static_cast<int>(sample.n());
    std::vector<std::vector<double>> slots(skel.num_slots());
    for (int v = 0; v < skel.dim(); ++v) {
        slots[v].resize(n);
        for (int i = 0; i < n; ++i)
            slots[v][i] = std::clamp(sample.u(i, v), kUEps, 1.0 - kUEps);
    }

    SeqResult out;
    out.specs.reserve(skel.plan().size());
    PairWork w;
    for (const EdgePlan& e : skel.plan()) {
        const auto& a = slots[e.in_a];
        const auto& b = slots[e.in_b];
        auto [spec, ll] = fit_pair_impl(e.spec.family, a, b, fixed_nu);
        out.loglik += ll;
        out.specs.push_back(spec);
        auto& oa = slots[e.out_a];
        auto& ob = slots[e.out_b];
        oa.resize(n);
        ob.resize(n);
        for (int i = 0; i < n; ++i) {
            pair_work(spec, a[i], b[i], false, w);
            oa[i] = std::clamp(w.h1, kUEps, 1.0 - kUEps);
            ob[i] = std::clamp(w.h2, kUEps, 1.0 - kUEps);
        }
    }
    return out;
}

// ---- transforms for the joint optimiser ---------------------------------------

struct ParamTransform {
    std::function<double(double)> to_theta;
    std::function<double(double)> to_phi;
    std::function<double(double)> dtheta_dphi; // as function of phi
};

ParamTransform transform_for(BicopFamily fam, int k) {
    const double R = 0.99995;
    if (fam.kind == FamilyKind::Gauss ||
        (fam.kind == FamilyKind::StudentT && k == 0)) {
        return {[R](double ph) { return R * std::tanh(ph); },
                [R](double th) { return std::atanh(std::clamp(th / R, -1.0 + 1e-12, 1.0 - 1e-12)); },
                [R](double ph) { const double t = std::tanh(ph); return R * (1.0 - t * t); }};
    }
    if (fam.kind == FamilyKind::StudentT) { // nu
        return {[](double ph) { return 2.001 + std::exp(std::clamp(ph, -20.0, 6.2)); },
                [](double th) { return std::log(std::max(th - 2.001, 1e-8)); },
                [](double ph) { return std::exp(std::clamp(ph, -20.0, 6.2)); }};
    }
    if (fam.kind == FamilyKind::Clayton) {
        return {[](double ph) { return std::exp(std::clamp(ph, std::log(1e-4), std::log(28.0))); },
                [](double th) { return std::log(th); },
                [](double ph) { return std::exp(std::clamp(ph, std::log(1e-4), std::log(28.0))); }};
    }
    if (fam.kind == FamilyKind::Gumbel || fam.kind == FamilyKind::Joe) {
        return {[](double ph) { return 1.0 + std::exp(std::clamp(ph, -18.0, std::log(49.0))); },
                [](double th) { return std::log(std::max(th - 1.0, 1e-8)); },
                [](double ph) { return std::exp(std::clamp(ph, -18.0, std::log(49.0))); }};
    }
    if (fam.kind == FamilyKind::Frank) {
        auto squeeze = [](double ph) {
            double th = std::clamp(ph, -35.0, 35.0);
            if (std::abs(th) < 1e-6) th = th >= 0 ? 1e-6 : -1e-6;
            return th;
        };
        return {squeeze, [](double th) { return th; }, [](double) { return 1.0; }};
    }
    throw UnsupportedFamily("transform_for: family has no parameters");
}

} // namespace

// ---- public API ---------------------------------------------------------------

std::vector<BicopFamily> families_of(const RVineModel& model) {
    std::vector<BicopFamily> out;
    out.reserve(model.plan().size());
    for (const EdgePlan& e : model.plan()) out.push_back(e.spec.family);
    return out;
}

std::pair<BicopSpec, double> fit_pair(BicopFamily family,
                                      const std::vector<double>& a,
                                      const std::vector<double>& b) {
    return fit_pair_impl(family, a, b, std::nullopt);
}

RVineModel fit_sequential(const RVineStructure& structure,
                          const std::vector<BicopFamily>& families,
                          const CopulaSample& sample, const FitOptions& opts,
                          FitReport* report) {
    if (sample.d() != structure.dim)
        throw DomainError("fit_sequential: dimension mismatch");
    std::vector<BicopSpec> ph;
    ph.reserve(families.size());
    for (BicopFamily f : families) ph.push_back(placeholder_spec(f));
    RVineModel skel(structure, std::move(ph));

    bool any_t = false;
    for (BicopFamily f : families)
        if (f.kind == FamilyKind::StudentT) any_t = true;

    SeqResult res;
    if (opts.shared_student_nu && any_t) {
        // profile the common degrees of freedom across all t edges
        double best_ll = -std::numeric_limits<double>::infinity();
        const double phi = brent_min(
            [&](double ph) {
                const double nu = 2.001 + std::exp(ph);
                return -sequential_pass(skel, sample, nu).loglik;
            },
            std::log(0.1), std::log(198.0), 1e-4);
        const double nu = 2.001 + std::exp(phi);
        res = sequential_pass(skel, sample, nu);
        best_ll = res.loglik;
        (void)best_ll;
    } else {
        res = sequential_pass(skel, sample, std::nullopt);
    }
    if (report) {
        report->loglik = res.loglik;
        report->iterations = 0;
        report->converged = true;
    }
    return RVineModel(structure, std::move(res.specs));
}

RVineModel fit_full(const RVineStructure& structure,
                    const std::vector<BicopFamily>& families,
                    const CopulaSample& sample, const FitOptions& opts,
                    FitReport* report, const RVineModel* start) {
    FitReport seq_rep;
    RVineModel model = fit_sequential(structure, families, sample, opts, &seq_rep);
    const Eigen::VectorXd seq_theta = model.parameters();
    if (start) {
        if (start->num_params() != model.num_params())
            throw DomainError("fit_full: start model has a different parameter count");
        model.set_parameters(start->parameters());
    }
    const int p = model.num_params();
    if (p == 0) {
        if (report) *report = seq_rep;
        return model;
    }
    const Eigen::Index n = sample.n();

    // per-parameter transforms
    std::vector<ParamTransform> tr;
    tr.reserve(p);
    for (const EdgePlan& e : model.plan())
        for (int k = 0; k < e.par_count; ++k)
            tr.push_back(transform_for(e.spec.family, k));

    DerivEngine eng(model);
    DerivEngine::State st;
    auto theta_of = [&](const Eigen::VectorXd& phi) {
        Eigen::VectorXd th(p);
        for (int k = 0; k < p; ++k) th[k] = tr[k].to_theta(phi[k]);
        return th;
    };
    // mean negative log-likelihood and its phi-gradient
    auto eval = [&](const Eigen::VectorXd& phi, Eigen::VectorXd* grad) {
        const Eigen::VectorXd th = theta_of(phi);
        double acc = 0.0;
        Eigen::VectorXd sc = Eigen::VectorXd::Zero(p);
        for (Eigen::Index i = 0; i < n; ++i) {
            eng.base_pass(sample.u.row(i).transpose(), th, st);
            acc += st.logdens;
            if (grad) sc += st.score;
        }
        if (grad) {
            for (int k = 0; k < p; ++k)
                (*grad)[k] = -sc[k] / static_cast<double>(n) * tr[k].dtheta_dphi(phi[k]);
        }
        return -acc / static_cast<double>(n);
    };

    Eigen::VectorXd phi(p);
    {
        const Eigen::VectorXd th = model.parameters();
        for (int k = 0; k < p; ++k) phi[k] = tr[k].to_phi(th[k]);
    }
    Eigen::VectorXd g(p), gn(p);
    double f = eval(phi, &g);
    Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(p, p);

    int it = 0;
    bool converged = false;
    for (; it < 500; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < 1e-6) {
            converged = true;
            break;
        }
        Eigen::VectorXd dir = -Hinv * g;
        if (dir.dot(g) >= 0.0) { // not a descent direction; reset
            Hinv.setIdentity();
            dir = -g;
        }
        double step = 1.0;
        const double slope = g.dot(dir);
        double fn = f;
        Eigen::VectorXd phin = phi;
        bool ok = false;
        for (int ls = 0; ls < 50; ++ls) {
            phin = phi + step * dir;
            fn = eval(phin, &gn);
            if (std::isfinite(fn) && fn <= f + 1e-4 * step * slope) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) break;
        const Eigen::VectorXd s = phin - phi;
        const Eigen::VectorXd y = gn - g;
        const double ys = y.dot(s);
        if (ys > 1e-12) {
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
            const Eigen::MatrixXd V = I - (s * y.transpose()) / ys;
            Hinv = V * Hinv * V.transpose() + (s * s.transpose()) / ys;
        }
        phi = phin;
        f = fn;
        g = gn;
        if (s.lpNorm<Eigen::Infinity>() < 1e-8 &&
            g.lpNorm<Eigen::Infinity>() < 1e-6) {
            converged = true;
            break;
        }
    }

    const double full_ll = -f * static_cast<double>(n);
    if (full_ll + 1e-6 < seq_rep.loglik) {
        // joint step failed to improve; keep the sequential estimate
        model.set_parameters(seq_theta);
        if (report) {
            *report = seq_rep;
            report->converged = false;
        }
        return model;
    }
    model.set_parameters(theta_of(phi));
    if (report) {
        report->loglik = full_ll;
        report->iterations = it;
        report->converged = converged;
    }
    return model;
}

RVineModel refit_sequential(const RVineModel& like, const CopulaSample& sample,
                            const FitOptions& opts) {
    return fit_sequential(like.structure(), families_of(like), sample, opts);
}

RVineModel refit_full(const RVineModel& like, const CopulaSample& sample,
                      const FitOptions& opts) {
    return fit_full(like.structure(), families_of(like), sample, opts);
}

} // namespace vinegof
