#pragma once
#include "vinegof/bicop.hpp"
#include "vinegof/structure.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

// A vine copula model = structure + one pair-copula per edge. The model owns
// a compiled evaluation plan: edges in tree order, each wired to "slots"
// holding the conditional cdf values F(x | S) produced one tree down. The
// plan also records, per edge, which entries of the stacked parameter vector
// can influence it (its own parameters plus everything below it); the
// derivative machinery uses these dependency sets to skip unaffected edges.

namespace vinegof {

struct CopulaSample {
    Eigen::MatrixXd u; // n x d, entries in (0,1)

    CopulaSample() = default;
    explicit CopulaSample(Eigen::MatrixXd m);

    Eigen::Index n() const { return u.rows(); }
    Eigen::Index d() const { return u.cols(); }
};

struct EdgePlan {
    VineEdge edge;
    BicopSpec spec;
    int in_a = -1, in_b = -1;      // slots F(car1|given), F(car2|given)
    int out_a = -1, out_b = -1;    // slots F(car1|given+car2), F(car2|given+car1)
    int par_offset = 0;            // position in the stacked parameter vector
    int par_count = 0;
    std::vector<int> dep;          // ascending parameter indices affecting this edge
};

class RVineModel {
public:
    // pair_copulas must be parallel to structure.all_edges() (canonical order)
    RVineModel(RVineStructure structure, std::vector<BicopSpec> pair_copulas);

    const RVineStructure& structure() const { return structure_; }
    const std::vector<EdgePlan>& plan() const { return plan_; }
    int dim() const { return structure_.dim; }
    int num_params() const { return p_; }
    int num_slots() const { return n_slots_; }

    Eigen::VectorXd parameters() const;             // stacked, canonical order
    void set_parameters(const Eigen::VectorXd& th); // validates each edge spec
    const BicopSpec& pair_copula(int edge_index) const { return plan_[edge_index].spec; }

    // edges whose dependency set contains parameter k, ascending plan order
    const std::vector<int>& dirty_edges(int k) const { return dirty_[k]; }
    int owner_edge(int k) const { return owner_[k]; }

    double log_density(const Eigen::VectorXd& u_row) const;
    double loglik(const CopulaSample& sample) const;

    CopulaSample simulate(Eigen::Index n, std::uint64_t seed) const;

private:
    RVineStructure structure_;
    std::vector<EdgePlan> plan_;
    std::vector<std::vector<int>> dirty_;
    std::vector<int> owner_;
    int p_ = 0;
    int n_slots_ = 0;

    // simulation recipe (computed lazily on first simulate)
    struct SimPlan;
    mutable std::shared_ptr<const SimPlan> sim_;
    const SimPlan& sim_plan() const;

public:
    // Reference evaluator for tests: recomputes every conditional cdf from
    // scratch by recursing through the trees, no slot table. Slow by design.
    double log_density_nocache(const Eigen::VectorXd& u_row) const;
};

// Per-dimension uniformity is preserved by construction; exposed for tests.
double log_density_at(const RVineModel& m, std::initializer_list<double> u);

} // namespace vinegof
