#pragma once
#include "vinegof/model.hpp"

#include <Eigen/Dense>

// Per-observation derivatives of the vine log-density with respect to the
// stacked parameter vector, and the sample aggregates the information-matrix
// test consumes.
//
// The score is computed by one forward recursion through the trees: each
// h-function output carries its gradient with respect to every parameter in
// the edge's dependency set, so one pass yields all p components. Hessians
// are central finite differences of that score (step 1e-4 * max(1,|theta_j|));
// when a parameter sits against its validity bound, the difference becomes
// one-sided. The per-observation d-vector gradient uses central differences
// of d itself with step 1e-3 * max(1,|theta_j|). Perturbed passes recompute
// only the edges whose dependency set contains the perturbed parameter;
// everything else is reused from the base pass.

namespace vinegof {

enum class DerivMethod {
    Analytic,   // recursion with closed-form edge derivatives only
    FiniteDiff, // plain central differences of the log-density
};

struct ObsDerivatives {
    Eigen::VectorXd score;   // p
    Eigen::MatrixXd hessian; // p x p, symmetrised
};

// Analytic requires every edge family to have closed-form parameter
// derivatives (UnsupportedFamily otherwise). StudentT and Joe edges are
// served by the recursion with kernel-internal differences, which is neither
// of the two public methods; aggregate functions below always use the
// recursion.
ObsDerivatives observation_derivs(const RVineModel& model,
                                  const Eigen::VectorXd& u_row,
                                  DerivMethod method);

// vech of the lower triangle, column-major; q = p(p+1)/2
Eigen::VectorXd vech(const Eigen::MatrixXd& m);
int vech_size(int p);

struct SampleMatrices {
    Eigen::MatrixXd hbar; // mean observed Hessian
    Eigen::MatrixXd cbar; // mean outer product of scores
};
SampleMatrices sample_matrices(const RVineModel& model, const CopulaSample& sample);

struct DVector {
    Eigen::VectorXd dbar;    // mean of per-observation vech(H_t + s_t s_t')
    Eigen::MatrixXd per_obs; // n x q
};
DVector d_vector(const RVineModel& model, const CopulaSample& sample);

// gradient of the mean d-vector, q x p
Eigen::MatrixXd grad_d(const RVineModel& model, const CopulaSample& sample);

// Everything the test statistic needs from one pass over the sample.
struct GofIngredients {
    Eigen::VectorXd dbar;    // q
    Eigen::MatrixXd hbar;    // p x p
    Eigen::MatrixXd grad;    // q x p
    Eigen::MatrixXd scores;  // n x p
    Eigen::MatrixXd dhat;    // n x q
};
GofIngredients gof_ingredients(const RVineModel& model, const CopulaSample& sample,
                               int threads = 1);

// Low-level engine; one instance per thread. Exposed for the fitting code
// (full-likelihood gradients) and for tests that inspect raw Hessians.
class DerivEngine {
public:
    explicit DerivEngine(const RVineModel& model);

    struct State {
        Eigen::VectorXd theta;
        Eigen::VectorXd slot_val;
        Eigen::MatrixXd slot_grad; // p x n_slots
        Eigen::MatrixXd contrib;   // p x n_edges, score contribution per edge
        Eigen::VectorXd edge_logc; // n_edges
        Eigen::VectorXd score;
        double logdens = 0;
    };

    void base_pass(const Eigen::VectorXd& u_row, const Eigen::VectorXd& theta,
                   State& st) const;
    // score at theta with entry k shifted by step, reusing clean edges
    void perturbed_score(const State& st, int k, double step,
                         Eigen::VectorXd& out) const;
    // full state at a shifted parameter (for nested differences)
    void rebase(const State& st, int k, double step, State& out) const;
    void hessian(const State& st, Eigen::MatrixXd& out, bool symmetrize = true) const;

    const RVineModel& model() const { return model_; }

private:
    const RVineModel& model_;
    int p_, n_slots_, n_edges_;
    // epoch-stamped overlay used by perturbed_score
    mutable Eigen::VectorXd ov_val_;
    mutable Eigen::MatrixXd ov_grad_;
    mutable std::vector<int> ov_epoch_;
    mutable int epoch_ = 0;
    mutable Eigen::VectorXd scratch_par_;

    void recompute_edges(const State& st, const std::vector<int>& edges,
                         const double* theta, Eigen::VectorXd& score_out) const;
};

} // namespace vinegof
