#include "vinegof/derivs.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace vinegof {

namespace {

constexpr double kScoreStep = 1e-5; // d ln c / d theta differences
constexpr double kHessStep = 1e-4;  // differences of the score
// smaller step when every edge has analytic scores: no kernel-difference
// noise to amplify, so truncation is the only error left to shrink
constexpr double kHessStepAnalytic = 1e-5;

bool all_analytic(const RVineModel& m) {
    for (const EdgePlan& e : m.plan())
        if (!has_analytic_param_derivs(e.spec.family.kind)) return false;
    return true;
}
constexpr double kDStep = 1e-3;     // differences of the d-vector

// viable +/- steps for parameter k given its validity interval; Frank must
// not cross zero. Returns {hp, hm}; a zero entry means that side is blocked.
std::pair<double, double> viable_steps(const RVineModel& m,
                                       const Eigen::VectorXd& theta, int k,
                                       double base) {
    const EdgePlan& e = m.plan()[m.owner_edge(k)];
    ParamBounds b = param_bounds(e.spec.family, k - e.par_offset);
    const double x = theta[k];
    if (e.spec.family.kind == FamilyKind::Frank) {
        if (x > 0) b.lo = std::max(b.lo, 1e-6);
        else b.hi = std::min(b.hi, -1e-6);
    }
    const double h = base * std::max(1.0, std::abs(x));
    double hp = std::min(h, b.hi - x);
    double hm = std::min(h, x - b.lo);
    if (hp < 0.05 * h) hp = 0.0;
    if (hm < 0.05 * h) hm = 0.0;
    if (hp == 0.0 && hm == 0.0)
        throw NumericalError("viable_steps: parameter wedged against both bounds");
    if (hp > 0.0 && hm > 0.0) hp = hm = std::min(hp, hm);
    return {hp, hm};
}

} // namespace

Eigen::VectorXd vech(const Eigen::MatrixXd& m) {
    const int p = static_cast<int>(m.rows());
    Eigen::VectorXd v(vech_size(p));
    int idx = 0;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) v[idx++] = m(i, j);
    return v;
}

int vech_size(int p) { return p * (p + 1) / 2; }

// ---- engine ---------------------------------------------------------------

DerivEngine::DerivEngine(const RVineModel& model)
    : model_(model),
      p_(model.num_params()),
      n_slots_(model.num_slots()),
      n_edges_(static_cast<int>(model.plan().size())),
      hess_step_(all_analytic(model) ? kHessStepAnalytic : kHessStep) {
    ov_val_.resize(n_slots_);
    ov_grad_.resize(p_, n_slots_);
    ov_epoch_.assign(n_slots_, -1);
    scratch_par_.resize(p_);
}

void DerivEngine::base_pass(const Eigen::VectorXd& u_row,
                            const Eigen::VectorXd& theta, State& st) const {
    const int d = model_.dim();
    st.theta = theta;
    st.slot_val.resize(n_slots_);
    st.slot_grad.setZero(p_, n_slots_);
    st.contrib.setZero(p_, n_edges_);
    st.edge_logc.resize(n_edges_);
    st.score.setZero(p_);
    st.logdens = 0.0;
    for (int v = 0; v < d; ++v)
        st.slot_val[v] = std::clamp(u_row[v], kUEps, 1.0 - kUEps);

    PairWork w;
    for (int ei = 0; ei < n_edges_; ++ei) {
        const EdgePlan& e = model_.plan()[ei];
        const double* par = theta.data() + e.par_offset;
        const double a = st.slot_val[e.in_a];
        const double b = st.slot_val[e.in_b];
        pair_work(e.spec.family, par, a, b, true, w);
        st.logdens += w.logc;
        st.edge_logc[ei] = w.logc;
        for (int m : e.dep) {
            const double ga = st.slot_grad(m, e.in_a);
            const double gb = st.slot_grad(m, e.in_b);
            double cm = w.dlogc_da * ga + w.dlogc_db * gb;
            double oa = w.c * ga + w.dh1_db * gb;
            double ob = w.dh2_da * ga + w.c * gb;
            const int local = m - e.par_offset;
            if (local >= 0 && local < e.par_count) {
                cm += w.dlogc_dpar[local];
                oa += w.dh1_dpar[local];
                ob += w.dh2_dpar[local];
            }
            st.contrib(m, ei) = cm;
            st.score[m] += cm;
            st.slot_grad(m, e.out_a) = oa;
            st.slot_grad(m, e.out_b) = ob;
        }
        st.slot_val[e.out_a] = std::clamp(w.h1, kUEps, 1.0 - kUEps);
        st.slot_val[e.out_b] = std::clamp(w.h2, kUEps, 1.0 - kUEps);
    }
}

void DerivEngine::perturbed_score(const State& st, int k, double step,
                                  Eigen::VectorXd& out) const {
    ++epoch_;
    scratch_par_ = st.theta;
    scratch_par_[k] += step;
    out = st.score;
    PairWork w;
    for (int ei : model_.dirty_edges(k)) {
        const EdgePlan& e = model_.plan()[ei];
        const bool oa_ov = ov_epoch_[e.in_a] == epoch_;
        const bool ob_ov = ov_epoch_[e.in_b] == epoch_;
        const double a = oa_ov ? ov_val_[e.in_a] : st.slot_val[e.in_a];
        const double b = ob_ov ? ov_val_[e.in_b] : st.slot_val[e.in_b];
        pair_work(e.spec.family, scratch_par_.data() + e.par_offset, a, b, true, w);
        ov_grad_.col(e.out_a).setZero();
        ov_grad_.col(e.out_b).setZero();
        for (int m : e.dep) {
            const double ga = oa_ov ? ov_grad_(m, e.in_a) : st.slot_grad(m, e.in_a);
            const double gb = ob_ov ? ov_grad_(m, e.in_b) : st.slot_grad(m, e.in_b);
            double cm = w.dlogc_da * ga + w.dlogc_db * gb;
            double oa = w.c * ga + w.dh1_db * gb;
            double ob = w.dh2_da * ga + w.c * gb;
            const int local = m - e.par_offset;
            if (local >= 0 && local < e.par_count) {
                cm += w.dlogc_dpar[local];
                oa += w.dh1_dpar[local];
                ob += w.dh2_dpar[local];
            }
            out[m] += cm - st.contrib(m, ei);
            ov_grad_(m, e.out_a) = oa;
            ov_grad_(m, e.out_b) = ob;
        }
        ov_val_[e.out_a] = std::clamp(w.h1, kUEps, 1.0 - kUEps);
        ov_val_[e.out_b] = std::clamp(w.h2, kUEps, 1.0 - kUEps);
        ov_epoch_[e.out_a] = epoch_;
        ov_epoch_[e.out_b] = epoch_;
    }
}

void DerivEngine::rebase(const State& st, int k, double step, State& out) const {
    out.theta = st.theta;
    out.theta[k] += step;
    out.slot_val = st.slot_val;
    out.slot_grad = st.slot_grad;
    out.contrib = st.contrib;
    out.edge_logc = st.edge_logc;
    out.score = st.score;
    out.logdens = st.logdens;
    PairWork w;
    for (int ei : model_.dirty_edges(k)) {
        const EdgePlan& e = model_.plan()[ei];
        const double a = out.slot_val[e.in_a];
        const double b = out.slot_val[e.in_b];
        pair_work(e.spec.family, out.theta.data() + e.par_offset, a, b, true, w);
        out.slot_grad.col(e.out_a).setZero();
        out.slot_grad.col(e.out_b).setZero();
        out.logdens += w.logc - out.edge_logc[ei];
        out.edge_logc[ei] = w.logc;
        for (int m : e.dep) {
            const double ga = out.slot_grad(m, e.in_a);
            const double gb = out.slot_grad(m, e.in_b);
            double cm = w.dlogc_da * ga + w.dlogc_db * gb;
            double oa = w.c * ga + w.dh1_db * gb;
            double ob = w.dh2_da * ga + w.c * gb;
            const int local = m - e.par_offset;
            if (local >= 0 && local < e.par_count) {
                cm += w.dlogc_dpar[local];
                oa += w.dh1_dpar[local];
                ob += w.dh2_dpar[local];
            }
            out.score[m] += cm - out.contrib(m, ei);
            out.contrib(m, ei) = cm;
            out.slot_grad(m, e.out_a) = oa;
            out.slot_grad(m, e.out_b) = ob;
        }
        out.slot_val[e.out_a] = std::clamp(w.h1, kUEps, 1.0 - kUEps);
        out.slot_val[e.out_b] = std::clamp(w.h2, kUEps, 1.0 - kUEps);
    }
}

void DerivEngine::hessian(const State& st, Eigen::MatrixXd& out,
                          bool symmetrize) const {
    out.resize(p_, p_);
    Eigen::VectorXd sp(p_), sm(p_);
    for (int k = 0; k < p_; ++k) {
        const auto [hp, hm] = viable_steps(model_, st.theta, k, kHessStep);
        if (hp > 0.0 && hm > 0.0) {
            perturbed_score(st, k, hp, sp);
            perturbed_score(st, k, -hm, sm);
            out.col(k) = (sp - sm) / (hp + hm);
        } else if (hp > 0.0) {
            perturbed_score(st, k, hp, sp);
            out.col(k) = (sp - st.score) / hp;
        } else {
            perturbed_score(st, k, -hm, sm);
            out.col(k) = (st.score - sm) / hm;
        }
    }
    if (symmetrize) out = ((out + out.transpose()) * 0.5).eval();
}

// ---- public per-observation derivatives ------------------------------------

namespace {

double logdens_at(const RVineModel& model, const Eigen::VectorXd& theta,
                  const Eigen::VectorXd& u_row) {
    RVineModel copy = model;
    copy.set_parameters(theta);
    return copy.log_density(u_row);
}

Eigen::VectorXd fd_score(const RVineModel& model, const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& u_row) {
    const int p = model.num_params();
    Eigen::VectorXd s(p);
    Eigen::VectorXd th = theta;
    const double f0 = logdens_at(model, theta, u_row);
    for (int k = 0; k < p; ++k) {
        const auto [hp, hm] = viable_steps(model, theta, k, kScoreStep);
        const double x = theta[k];
        if (hp > 0.0 && hm > 0.0) {
            th[k] = x + hp;
            const double fp = logdens_at(model, th, u_row);
            th[k] = x - hm;
            const double fm = logdens_at(model, th, u_row);
            s[k] = (fp - fm) / (hp + hm);
        } else if (hp > 0.0) {
            th[k] = x + hp;
            s[k] = (logdens_at(model, th, u_row) - f0) / hp;
        } else {
            th[k] = x - hm;
            s[k] = (f0 - logdens_at(model, th, u_row)) / hm;
        }
        th[k] = x;
    }
    return s;
}

} // namespace

ObsDerivatives observation_derivs(const RVineModel& model,
                                  const Eigen::VectorXd& u_row,
                                  DerivMethod method) {
    const int p = model.num_params();
    if (p == 0)
        throw UnsupportedFamily("observation_derivs: model has no parameters");
    ObsDerivatives out;
    const Eigen::VectorXd theta = model.parameters();

    if (method == DerivMethod::Analytic) {
        if (!all_analytic(model))
            throw UnsupportedFamily(
                "observation_derivs: Analytic requires closed-form parameter "
                "derivatives on every edge (StudentT/Joe do not have them)");
        DerivEngine eng(model);
        DerivEngine::State st;
        eng.base_pass(u_row, theta, st);
        out.score = st.score;
        eng.hessian(st, out.hessian);
        return out;
    }

    // plain finite differences of the log-density
    out.score = fd_score(model, theta, u_row);
    out.hessian.resize(p, p);
    Eigen::VectorXd th = theta;
    for (int k = 0; k < p; ++k) {
        const auto [hp, hm] = viable_steps(model, theta, k, kHessStep);
        const double x = theta[k];
        if (hp > 0.0 && hm > 0.0) {
            th[k] = x + hp;
            const Eigen::VectorXd gp = fd_score(model, th, u_row);
            th[k] = x - hm;
            const Eigen::VectorXd gm = fd_score(model, th, u_row);
            out.hessian.col(k) = (gp - gm) / (hp + hm);
        } else if (hp > 0.0) {
            th[k] = x + hp;
            out.hessian.col(k) =
                (fd_score(model, th, u_row) - out.score) / hp;
        } else {
            th[k] = x - hm;
            out.hessian.col(k) =
                (out.score - fd_score(model, th, u_row)) / hm;
        }
        th[k] = x;
    }
    out.hessian = ((out.hessian + out.hessian.transpose()) * 0.5).eval();
    return out;
}

// ---- sample aggregates ------------------------------------------------------

namespace {

// per-observation work shared by the aggregate entry points
struct ObsAccumulator {
    Eigen::MatrixXd hbar, grad;
    Eigen::VectorXd dbar;
    int count = 0;

    void init(int p, int q) {
        hbar.setZero(p, p);
        grad.setZero(q, p);
        dbar.setZero(q);
    }
};

void accumulate_one(const DerivEngine& eng, const Eigen::VectorXd& theta,
                    const Eigen::VectorXd& u_row, bool want_grad,
                    DerivEngine::State& st, DerivEngine::State& stp,
                    DerivEngine::State& stm, Eigen::MatrixXd& H,
                    Eigen::MatrixXd& Hs, ObsAccumulator& acc,
                    Eigen::VectorXd* score_row, Eigen::VectorXd* dhat_row) {
    const RVineModel& model = eng.model();
    const int p = model.num_params();

    eng.base_pass(u_row, theta, st);
    eng.hessian(st, H);
    Eigen::VectorXd d0 = vech(H + st.score * st.score.transpose());

    acc.hbar += H;
    acc.dbar += d0;
    ++acc.count;
    if (score_row) *score_row = st.score;
    if (dhat_row) *dhat_row = d0;
    if (!want_grad) return;

    for (int m = 0; m < p; ++m) {
        const auto [hp, hm] = viable_steps(model, theta, m, kDStep);
        if (hp > 0.0 && hm > 0.0) {
            eng.rebase(st, m, hp, stp);
            eng.hessian(stp, Hs);
            const Eigen::VectorXd dp = vech(Hs + stp.score * stp.score.transpose());
            eng.rebase(st, m, -hm, stm);
            eng.hessian(stm, Hs);
            const Eigen::VectorXd dm = vech(Hs + stm.score * stm.score.transpose());
            acc.grad.col(m) += (dp - dm) / (hp + hm);
        } else if (hp > 0.0) {
            eng.rebase(st, m, hp, stp);
            eng.hessian(stp, Hs);
            const Eigen::VectorXd dp = vech(Hs + stp.score * stp.score.transpose());
            acc.grad.col(m) += (dp - d0) / hp;
        } else {
            eng.rebase(st, m, -hm, stm);
            eng.hessian(stm, Hs);
            const Eigen::VectorXd dm = vech(Hs + stm.score * stm.score.transpose());
            acc.grad.col(m) += (d0 - dm) / hm;
        }
    }
}

GofIngredients run_sample(const RVineModel& model, const CopulaSample& sample,
                          bool want_grad, int threads) {
    if (sample.d() != model.dim())
        throw DomainError("derivative aggregates: dimension mismatch");
    const int p = model.num_params();
    const int q = vech_size(p);
    const Eigen::Index n = sample.n();
    const Eigen::VectorXd theta = model.parameters();

    GofIngredients out;
    out.scores.resize(n, p);
    out.dhat.resize(n, q);

    // fixed blocks combined in index order: results are identical for any
    // thread count, including one
    const Eigen::Index block = 256;
    const Eigen::Index n_blocks = (n + block - 1) / block;
    std::vector<ObsAccumulator> acc(n_blocks);

    std::atomic<Eigen::Index> next{0};
    auto worker = [&]() {
        DerivEngine eng(model);
        DerivEngine::State st, stp, stm;
        Eigen::MatrixXd H, Hs;
        Eigen::VectorXd srow(p), drow(q);
        for (;;) {
            const Eigen::Index b = next.fetch_add(1);
            if (b >= n_blocks) break;
            acc[b].init(p, q);
            const Eigen::Index lo = b * block, hi = std::min(n, lo + block);
            for (Eigen::Index t = lo; t < hi; ++t) {
                accumulate_one(eng, theta, sample.u.row(t).transpose(), want_grad,
                               st, stp, stm, H, Hs, acc[b], &srow, &drow);
                out.scores.row(t) = srow;
                out.dhat.row(t) = drow;
            }
        }
    };

    const int nt = std::max(1, threads);
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    out.hbar.setZero(p, p);
    out.grad.setZero(q, p);
    out.dbar.setZero(q);
    for (const auto& a : acc) {
        out.hbar += a.hbar;
        out.grad += a.grad;
        out.dbar += a.dbar;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.hbar *= inv;
    out.grad *= inv;
    out.dbar *= inv;
    return out;
}

} // namespace

SampleMatrices sample_matrices(const RVineModel& model,
                               const CopulaSample& sample) {
    GofIngredients g = run_sample(model, sample, false, 1);
    SampleMatrices out;
    out.hbar = g.hbar;
    const int p = model.num_params();
    out.cbar.setZero(p, p);
    for (Eigen::Index t = 0; t < g.scores.rows(); ++t)
        out.cbar += g.scores.row(t).transpose() * g.scores.row(t);
    out.cbar /= static_cast<double>(g.scores.rows());
    return out;
}

DVector d_vector(const RVineModel& model, const CopulaSample& sample) {
    GofIngredients g = run_sample(model, sample, false, 1);
    return {g.dbar, g.dhat};
}

Eigen::MatrixXd grad_d(const RVineModel& model, const CopulaSample& sample) {
    return run_sample(model, sample, true, 1).grad;
}

GofIngredients gof_ingredients(const RVineModel& model,
                               const CopulaSample& sample, int threads) {
    return run_sample(model, sample, true, threads);
}

} // namespace vinegof
