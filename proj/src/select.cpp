#include "vinegof/select.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/fit.hpp"
#include "vinegof/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace vinegof {

namespace {

double criterion_value(double loglik, int k, Eigen::Index n,
                       SelectCriterion crit) {
    return crit == SelectCriterion::AIC
               ? -2.0 * loglik + 2.0 * k
               : -2.0 * loglik + k * std::log(static_cast<double>(n));
}

BicopSpec choose_family_tau(const std::vector<double>& a,
                            const std::vector<double>& b, double tau,
                            const std::vector<BicopFamily>& family_set,
                            SelectCriterion criterion) {
    const auto n = static_cast<Eigen::Index>(a.size());
    // the independence copula is always in the race: a parametric family has
    // to beat loglik 0 by more than its penalty to be selected
    BicopSpec best{{FamilyKind::Independence, Rotation::R0}, {}};
    double best_crit = criterion_value(0.0, 0, n, criterion);
    double best_ll = 0;
    for (BicopFamily fam : family_set) {
        if (fam.kind == FamilyKind::Independence) continue;
        if (!family_admissible(fam, tau)) continue;
        BicopSpec spec;
        double ll = 0;
        try {
            auto fitted = fit_pair(fam, a, b);
            spec = fitted.first;
            ll = fitted.second;
        } catch (const Error&) {
            continue; // a failed candidate just drops out
        }
        const int k = param_count(fam.kind);
        const double c = criterion_value(ll, k, n, criterion);
        if (c < best_crit) {
            best_crit = c;
            best = spec;
            best_ll = ll;
        }
    }
    (void)best_ll;

    if (best.family.kind == FamilyKind::StudentT &&
        best.params[1] >= kStudentNuGaussCollapse) {
        try {
            best = fit_pair({FamilyKind::Gauss, Rotation::R0}, a, b).first;
        } catch (const Error&) {
            // keep the t fit if the Gauss refit fails
        }
    }
    return best;
}

struct SelNode {
    std::vector<int> constraint;           // sorted full constraint set
    std::map<int, std::vector<double>> col; // conditioned var -> F(var | rest)
    int parent1 = -1, parent2 = -1;        // node indices joined one level down
};

struct UF {
    std::vector<int> up;
    explicit UF(int n) : up(n) { std::iota(up.begin(), up.end(), 0); }
    int find(int x) { return up[x] == x ? x : up[x] = find(up[x]); }
    bool join(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        up[a] = b;
        return true;
    }
};

struct Candidate {
    int i, j;        // node indices
    double atau;     // |tau|
    double tau;
    int va, vb;      // conditioned var contributed by node i / node j
    int key1, key2;  // tie-break: conditioned pair, ascending
    VineEdge edge;
    const std::vector<double>* ca; // F(va | rest) from node i
    const std::vector<double>* cb; // F(vb | rest) from node j
};

} // namespace

std::vector<BicopFamily> default_family_set() {
    std::vector<BicopFamily> out;
    out.push_back({FamilyKind::Gauss, Rotation::R0});
    out.push_back({FamilyKind::StudentT, Rotation::R0});
    out.push_back({FamilyKind::Frank, Rotation::R0});
    for (FamilyKind k :
         {FamilyKind::Clayton, FamilyKind::Gumbel, FamilyKind::Joe})
        for (Rotation r :
             {Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270})
            out.push_back({k, r});
    return out;
}

bool family_admissible(BicopFamily fam, double tau) {
    switch (fam.kind) {
        case FamilyKind::Clayton:
        case FamilyKind::Gumbel:
        case FamilyKind::Joe: {
            const bool positive =
                fam.rot == Rotation::R0 || fam.rot == Rotation::R180;
            return positive ? tau >= 0.0 : tau <= 0.0;
        }
        default:
            return true;
    }
}

BicopSpec choose_family(const std::vector<double>& a,
                        const std::vector<double>& b,
                        const std::vector<BicopFamily>& family_set,
                        SelectCriterion criterion) {
    return choose_family_tau(a, b, kendall_tau(a, b), family_set, criterion);
}

RVineModel select_mst(const CopulaSample& sample,
                      const std::vector<BicopFamily>& family_set,
                      SelectCriterion criterion) {
    const Eigen::Index n = sample.n();
    const int d = static_cast<int>(sample.d());
    if (n < 30) throw DomainError("select_mst needs n >= 30");
    if (d < 2) throw DomainError("select_mst needs d >= 2");
    if (family_set.empty()) throw DomainError("select_mst: empty family set");

    // tree-1 nodes are the variables themselves
    std::vector<SelNode> nodes(d);
    for (int v = 1; v <= d; ++v) {
        auto& nd = nodes[v - 1];
        nd.constraint = {v};
        auto& c = nd.col[v];
        c.resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            c[i] = std::clamp(sample.u(i, v - 1), kUEps, 1.0 - kUEps);
    }

    std::vector<VineEdge> edges;
    std::map<std::string, BicopSpec> spec_of;
    PairWork w;

    for (int level = 1; level < d; ++level) {
        const int m = static_cast<int>(nodes.size());
        std::vector<Candidate> cands;
        for (int i = 0; i < m; ++i) {
            for (int j = i + 1; j < m; ++j) {
                if (level > 1) {
                    // proximity: the two edges must share an endpoint
                    const auto& a = nodes[i];
                    const auto& b = nodes[j];
                    if (a.parent1 != b.parent1 && a.parent1 != b.parent2 &&
                        a.parent2 != b.parent1 && a.parent2 != b.parent2)
                        continue;
                }
                std::vector<int> inter;
                std::set_intersection(nodes[i].constraint.begin(),
                                      nodes[i].constraint.end(),
                                      nodes[j].constraint.begin(),
                                      nodes[j].constraint.end(),
                                      std::back_inserter(inter));
                std::vector<int> onlyi, onlyj;
                std::set_difference(nodes[i].constraint.begin(),
                                    nodes[i].constraint.end(), inter.begin(),
                                    inter.end(), std::back_inserter(onlyi));
                std::set_difference(nodes[j].constraint.begin(),
                                    nodes[j].constraint.end(), inter.begin(),
                                    inter.end(), std::back_inserter(onlyj));
                if (onlyi.size() != 1 || onlyj.size() != 1) continue;
                Candidate c;
                c.i = i;
                c.j = j;
                c.va = onlyi[0];
                c.vb = onlyj[0];
                c.edge = VineEdge(c.va, c.vb, inter);
                c.key1 = std::min(c.va, c.vb);
                c.key2 = std::max(c.va, c.vb);
                c.ca = &nodes[i].col.at(c.va);
                c.cb = &nodes[j].col.at(c.vb);
                c.tau = kendall_tau(*c.ca, *c.cb);
                c.atau = std::abs(c.tau);
                cands.push_back(std::move(c));
            }
        }
        std::sort(cands.begin(), cands.end(),
                  [](const Candidate& x, const Candidate& y) {
                      if (x.atau != y.atau) return x.atau > y.atau;
                      if (x.key1 != y.key1) return x.key1 < y.key1;
                      return x.key2 < y.key2;
                  });

        UF uf(m);
        std::vector<SelNode> next;
        int taken = 0;
        for (const Candidate& c : cands) {
            if (taken == m - 1) break;
            if (!uf.join(c.i, c.j)) continue;
            ++taken;

            // orient columns by the canonical conditioned order (car1 < car2)
            const int car1 = c.edge.car1, car2 = c.edge.car2;
            const std::vector<double>* ua = c.va == car1 ? c.ca : c.cb;
            const std::vector<double>* ub = c.va == car1 ? c.cb : c.ca;

            const BicopSpec spec =
                choose_family_tau(*ua, *ub, c.tau, family_set, criterion);
            edges.push_back(c.edge);
            spec_of[c.edge.label()] = spec;

            SelNode nd;
            nd.constraint = c.edge.constraint();
            nd.parent1 = c.i;
            nd.parent2 = c.j;
            auto& colA = nd.col[car1];
            auto& colB = nd.col[car2];
            colA.resize(n);
            colB.resize(n);
            for (Eigen::Index t = 0; t < n; ++t) {
                pair_work(spec, (*ua)[t], (*ub)[t], false, w);
                colA[t] = std::clamp(w.h1, kUEps, 1.0 - kUEps);
                colB[t] = std::clamp(w.h2, kUEps, 1.0 - kUEps);
            }
            next.push_back(std::move(nd));
        }
        if (taken != m - 1)
            throw StructureError("selection could not span tree level " +
                                 std::to_string(level));
        nodes = std::move(next);
    }

    RVineStructure structure = RVineStructure::from_edges(d, edges);
    std::vector<BicopSpec> specs;
    for (const VineEdge& e : structure.all_edges())
        specs.push_back(spec_of.at(e.label()));
    return RVineModel(std::move(structure), std::move(specs));
}

RVineModel select_families(const RVineStructure& structure,
                           const CopulaSample& sample,
                           const std::vector<BicopFamily>& family_set,
                           SelectCriterion criterion) {
    validate_or_throw(structure);
    if (sample.d() != structure.dim)
        throw DomainError("select_families: dimension mismatch");
    if (family_set.empty())
        throw DomainError("select_families: empty family set");
    const Eigen::Index n = sample.n();

    std::vector<BicopSpec> ph(structure.all_edges().size(),
                              BicopSpec{{FamilyKind::Independence, Rotation::R0}, {}});
    RVineModel skel(structure, std::move(ph));

    std::vector<std::vector<double>> slots(skel.num_slots());
    for (int v = 0; v < skel.dim(); ++v) {
        slots[v].resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            slots[v][i] = std::clamp(sample.u(i, v), kUEps, 1.0 - kUEps);
    }

    std::vector<BicopSpec> specs;
    specs.reserve(skel.plan().size());
    PairWork w;
    for (const EdgePlan& e : skel.plan()) {
        const auto& a = slots[e.in_a];
        const auto& b = slots[e.in_b];
        const BicopSpec spec = choose_family(a, b, family_set, criterion);
        specs.push_back(spec);
        auto& oa = slots[e.out_a];
        auto& ob = slots[e.out_b];
        oa.resize(n);
        ob.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            pair_work(spec, a[i], b[i], false, w);
            oa[i] = std::clamp(w.h1, kUEps, 1.0 - kUEps);
            ob[i] = std::clamp(w.h2, kUEps, 1.0 - kUEps);
        }
    }
    return RVineModel(structure, std::move(specs));
}

} // namespace vinegof
