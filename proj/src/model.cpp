#include "vinegof/model.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/numerics.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

namespace vinegof {

CopulaSample::CopulaSample(Eigen::MatrixXd m) : u(std::move(m)) {
    if (u.rows() < 1 || u.cols() < 2)
        throw DomainError("CopulaSample: need at least 1 row and 2 columns");
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        for (Eigen::Index j = 0; j < u.cols(); ++j)
            if (!(u(i, j) > 0.0 && u(i, j) < 1.0))
                throw DomainError("CopulaSample: entries must lie in (0,1)");
}

namespace {

constexpr std::uint64_t kSimPurpose = 0x53494d; // stream label for simulate()

using SlotKey = std::pair<int, std::vector<int>>; // (variable, conditioning set)

struct SlotRegistry {
    std::map<SlotKey, int> ids;
    std::vector<SlotKey> keys;
    std::vector<std::pair<int, bool>> producer; // (edge index, side_a), -1 = raw

    int get(int var, std::vector<int> cond) {
        std::sort(cond.begin(), cond.end());
        SlotKey key{var, std::move(cond)};
        auto it = ids.find(key);
        if (it != ids.end()) return it->second;
        const int id = static_cast<int>(keys.size());
        ids.emplace(key, id);
        keys.push_back(key);
        producer.emplace_back(-1, false);
        return id;
    }
};

} // namespace

struct RVineModel::SimPlan {
    std::vector<int> order; // simulation order of variables (1-based)
    struct ChainStep {
        int edge;
        bool a_is_car1;
        int partner_slot;
    };
    std::vector<std::vector<ChainStep>> chains; // per order position, top-down
    struct SlotStep {
        int slot;
        int edge;
        bool side_a;
    };
    std::vector<std::vector<SlotStep>> steps; // slots computable after position k
};

RVineModel::RVineModel(RVineStructure structure, std::vector<BicopSpec> pcs)
    : structure_(std::move(structure)) {
    validate_or_throw(structure_);
    const auto edges = structure_.all_edges();
    if (pcs.size() != edges.size())
        throw InvalidParameter("RVineModel: expected " +
                               std::to_string(edges.size()) +
                               " pair copulas, got " + std::to_string(pcs.size()));

    SlotRegistry reg;
    const int d = structure_.dim;
    for (int v = 1; v <= d; ++v) reg.get(v, {}); // raw slots come first

    plan_.resize(edges.size());
    std::map<SlotKey, int> edge_of_constraint; // {car}+given -> plan index
    for (std::size_t i = 0; i < edges.size(); ++i) {
        EdgePlan& e = plan_[i];
        e.edge = edges[i];
        e.spec = pcs[i];
        validate_spec(e.spec);
        e.in_a = reg.get(e.edge.car1, e.edge.given);
        e.in_b = reg.get(e.edge.car2, e.edge.given);
        std::vector<int> ga = e.edge.given, gb = e.edge.given;
        ga.push_back(e.edge.car2);
        gb.push_back(e.edge.car1);
        e.out_a = reg.get(e.edge.car1, ga);
        e.out_b = reg.get(e.edge.car2, gb);
        reg.producer[e.out_a] = {static_cast<int>(i), true};
        reg.producer[e.out_b] = {static_cast<int>(i), false};
        e.par_offset = p_;
        e.par_count = param_count(e.spec.family.kind);
        p_ += e.par_count;

        // dependency set: own parameters plus everything feeding the inputs
        std::set<int> dep;
        for (int k = 0; k < e.par_count; ++k) dep.insert(e.par_offset + k);
        for (int slot : {e.in_a, e.in_b}) {
            const int child = reg.producer[slot].first;
            if (child >= 0)
                dep.insert(plan_[child].dep.begin(), plan_[child].dep.end());
        }
        e.dep.assign(dep.begin(), dep.end());
    }
    n_slots_ = static_cast<int>(reg.keys.size());

    owner_.resize(p_);
    dirty_.resize(p_);
    for (std::size_t i = 0; i < plan_.size(); ++i) {
        for (int k = 0; k < plan_[i].par_count; ++k)
            owner_[plan_[i].par_offset + k] = static_cast<int>(i);
        for (int k : plan_[i].dep) dirty_[k].push_back(static_cast<int>(i));
    }

    // stash producer table for the simulation plan (rebuilt there via keys)
    (void)edge_of_constraint;

    sim_plan(); // build eagerly so later calls are read-only
}

Eigen::VectorXd RVineModel::parameters() const {
    Eigen::VectorXd th(p_);
    for (const EdgePlan& e : plan_)
        for (int k = 0; k < e.par_count; ++k)
            th[e.par_offset + k] = e.spec.params[k];
    return th;
}

void RVineModel::set_parameters(const Eigen::VectorXd& th) {
    if (th.size() != p_)
        throw InvalidParameter("set_parameters: expected " + std::to_string(p_) +
                               " parameters, got " + std::to_string(th.size()));
    for (EdgePlan& e : plan_) {
        for (int k = 0; k < e.par_count; ++k)
            e.spec.params[k] = th[e.par_offset + k];
        validate_spec(e.spec);
    }
    // the simulation plan depends only on the topology, not the parameters
}

double RVineModel::log_density(const Eigen::VectorXd& u_row) const {
    if (u_row.size() != dim())
        throw DomainError("log_density: wrong input dimension");
    thread_local std::vector<double> slots;
    slots.assign(n_slots_, 0.0);
    for (int v = 0; v < dim(); ++v)
        slots[v] = std::clamp(u_row[v], kUEps, 1.0 - kUEps);
    double acc = 0.0;
    PairWork w;
    for (const EdgePlan& e : plan_) {
        pair_work(e.spec, slots[e.in_a], slots[e.in_b], false, w);
        acc += w.logc;
        slots[e.out_a] = std::clamp(w.h1, kUEps, 1.0 - kUEps);
        slots[e.out_b] = std::clamp(w.h2, kUEps, 1.0 - kUEps);
    }
    return acc;
}

double RVineModel::loglik(const CopulaSample& sample) const {
    if (sample.d() != dim()) throw DomainError("loglik: dimension mismatch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < sample.n(); ++i)
        acc += log_density(sample.u.row(i).transpose());
    return acc;
}

// ---- reference evaluator ------------------------------------------------

namespace {

double cond_cdf_recursive(const RVineModel& m, const Eigen::VectorXd& u,
                          int var, const std::vector<int>& cond) {
    if (cond.empty())
        return std::clamp(u[var - 1], kUEps, 1.0 - kUEps);
    // find the edge whose constraint set equals {var} + cond
    std::vector<int> want = cond;
    want.push_back(var);
    std::sort(want.begin(), want.end());
    for (const EdgePlan& e : m.plan()) {
        if (e.edge.level() != static_cast<int>(cond.size())) continue;
        if (e.edge.constraint() != want) continue;
        if (e.edge.car1 != var && e.edge.car2 != var) continue;
        const double a = cond_cdf_recursive(m, u, e.edge.car1, e.edge.given);
        const double b = cond_cdf_recursive(m, u, e.edge.car2, e.edge.given);
        const double h = (e.edge.car1 == var) ? hfunc(e.spec, a, b)
                                              : hfunc2(e.spec, a, b);
        return std::clamp(h, kUEps, 1.0 - kUEps);
    }
    throw StructureError("cond_cdf_recursive: no edge produces the requested conditional");
}

} // namespace

double RVineModel::log_density_nocache(const Eigen::VectorXd& u_row) const {
    double acc = 0.0;
    for (const EdgePlan& e : plan_) {
        const double a = cond_cdf_recursive(*this, u_row, e.edge.car1, e.edge.given);
        const double b = cond_cdf_recursive(*this, u_row, e.edge.car2, e.edge.given);
        acc += log_pdf(e.spec, a, b);
    }
    return acc;
}

double log_density_at(const RVineModel& m, std::initializer_list<double> u) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(u.size()));
    Eigen::Index i = 0;
    for (double x : u) v[i++] = x;
    return m.log_density(v);
}

// ---- simulation ----------------------------------------------------------

const RVineModel::SimPlan& RVineModel::sim_plan() const {
    if (sim_) return *sim_;

    auto plan = std::make_shared<SimPlan>();
    const int d = dim();

    // rebuild slot key/producer info from the edge plan
    std::vector<std::pair<int, bool>> producer(n_slots_, {-1, false});
    for (std::size_t i = 0; i < plan_.size(); ++i) {
        producer[plan_[i].out_a] = {static_cast<int>(i), true};
        producer[plan_[i].out_b] = {static_cast<int>(i), false};
    }

    // peel variables from the top tree down
    std::vector<std::vector<int>> levels(d - 1);
    for (std::size_t i = 0; i < plan_.size(); ++i)
        levels[plan_[i].edge.level() - 1].push_back(static_cast<int>(i));
    std::set<int> alive;
    for (int v = 1; v <= d; ++v) alive.insert(v);

    plan->order.assign(d, 0);
    plan->chains.assign(d, {});
    for (int stage = d; stage >= 2; --stage) {
        const auto& top = levels[stage - 2];
        if (top.size() != 1)
            throw StructureError("sim_plan: malformed structure at the top tree");
        const EdgePlan& te = plan_[top[0]];
        const int a = std::max(te.edge.car1, te.edge.car2);
        std::vector<SimPlan::ChainStep> chain;
        for (int t = stage - 2; t >= 0; --t) {
            int found = -1;
            for (int idx : levels[t]) {
                const EdgePlan& e = plan_[idx];
                if (e.edge.car1 == a || e.edge.car2 == a) {
                    if (found >= 0)
                        throw StructureError("sim_plan: variable appears in two edges at one level");
                    found = idx;
                }
            }
            if (found < 0)
                throw StructureError("sim_plan: variable missing from a level");
            const EdgePlan& e = plan_[found];
            const bool is1 = (e.edge.car1 == a);
            chain.push_back({found, is1, is1 ? e.in_b : e.in_a});
            levels[t].erase(std::find(levels[t].begin(), levels[t].end(), found));
        }
        plan->order[stage - 1] = a;
        plan->chains[stage - 1] = std::move(chain);
        alive.erase(a);
    }
    plan->order[0] = *alive.begin();

    // positions in simulation order
    std::vector<int> pos(d + 1, 0);
    for (int k = 0; k < d; ++k) pos[plan->order[k]] = k;

    // closure of forward slots needed by the inverse chains
    std::set<int> needed;
    for (const auto& chain : plan->chains)
        for (const auto& step : chain)
            if (step.partner_slot >= d) needed.insert(step.partner_slot);
    {
        std::vector<int> work(needed.begin(), needed.end());
        while (!work.empty()) {
            const int s = work.back();
            work.pop_back();
            const int e = producer[s].first;
            for (int in : {plan_[e].in_a, plan_[e].in_b})
                if (in >= d && needed.insert(in).second) work.push_back(in);
        }
    }

    // slot ready time = latest simulation position among its variables;
    // compute slots level by level within each step
    std::vector<std::pair<int, bool>> prod = producer;
    std::vector<int> slot_level(n_slots_, 0), slot_ready(n_slots_, 0);
    for (int s = d; s < n_slots_; ++s) {
        const int e = prod[s].first;
        const EdgePlan& ep = plan_[e];
        slot_level[s] = ep.edge.level();
        int r = 0;
        const int var = prod[s].second ? ep.edge.car1 : ep.edge.car2;
        r = pos[var];
        for (int g : ep.edge.given) r = std::max(r, pos[g]);
        r = std::max(r, pos[prod[s].second ? ep.edge.car2 : ep.edge.car1]);
        slot_ready[s] = r;
    }
    plan->steps.assign(d, {});
    std::vector<int> ordered(needed.begin(), needed.end());
    std::sort(ordered.begin(), ordered.end(), [&](int x, int y) {
        if (slot_ready[x] != slot_ready[y]) return slot_ready[x] < slot_ready[y];
        return slot_level[x] < slot_level[y];
    });
    for (int s : ordered)
        plan->steps[slot_ready[s]].push_back({s, prod[s].first, prod[s].second});

    sim_ = plan;
    return *sim_;
}

CopulaSample RVineModel::simulate(Eigen::Index n, std::uint64_t seed) const {
    if (n < 1) throw DomainError("simulate: n must be positive");
    const SimPlan& sp = sim_plan();
    const int d = dim();
    Eigen::MatrixXd out(n, d);
    std::vector<double> slots(n_slots_);
    PairWork pw;
    for (Eigen::Index i = 0; i < n; ++i) {
        // an independent, scheduling-invariant stream per draw
        std::mt19937_64 rng(derive_seed(seed, kSimPurpose, static_cast<std::uint64_t>(i)));
        for (int k = 0; k < d; ++k) {
            const int var = sp.order[k];
            double val = uniform01(rng);
            for (const auto& step : sp.chains[k]) {
                const EdgePlan& e = plan_[step.edge];
                val = step.a_is_car1 ? hinv(e.spec, val, slots[step.partner_slot])
                                     : hinv2(e.spec, val, slots[step.partner_slot]);
            }
            slots[var - 1] = val;
            out(i, var - 1) = val;
            for (const auto& fs : sp.steps[k]) {
                const EdgePlan& e = plan_[fs.edge];
                pair_work(e.spec, slots[e.in_a], slots[e.in_b], false, pw);
                slots[fs.slot] =
                    std::clamp(fs.side_a ? pw.h1 : pw.h2, kUEps, 1.0 - kUEps);
            }
        }
    }
    return CopulaSample(std::move(out));
}

} // namespace vinegof
