#include "vinegof/power.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/fit.hpp"
#include "vinegof/numerics.hpp"
#include "vinegof/select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace vinegof {

namespace {

// RNG sub-stream tags: pre-run, then one stream per data-generating arm
constexpr std::uint64_t kPrePurpose = 0x505245;   // "PRE"
constexpr std::uint64_t kArmPurpose = 0x41524d00; // "ARM" + arm index

// ---- fixture plumbing ----------------------------------------------------

struct EdgeSpec {
    VineEdge edge;
    BicopSpec spec;
};

RVineModel build_model(int d, const std::vector<EdgeSpec>& items) {
    std::vector<VineEdge> edges;
    std::map<std::string, BicopSpec> by_label;
    for (const EdgeSpec& it : items) {
        edges.push_back(it.edge);
        by_label[it.edge.label()] = it.spec;
    }
    RVineStructure s = RVineStructure::from_edges(d, edges);
    std::vector<BicopSpec> specs;
    for (const VineEdge& e : s.all_edges()) specs.push_back(by_label.at(e.label()));
    return RVineModel(std::move(s), std::move(specs));
}

struct EdgeFam {
    VineEdge edge;
    BicopFamily fam;
};

std::pair<RVineStructure, std::vector<BicopFamily>> build_skeleton(
    int d, const std::vector<EdgeFam>& items) {
    std::vector<VineEdge> edges;
    std::map<std::string, BicopFamily> by_label;
    for (const EdgeFam& it : items) {
        edges.push_back(it.edge);
        by_label[it.edge.label()] = it.fam;
    }
    RVineStructure s = RVineStructure::from_edges(d, edges);
    std::vector<BicopFamily> fams;
    for (const VineEdge& e : s.all_edges()) fams.push_back(by_label.at(e.label()));
    return {std::move(s), std::move(fams)};
}

BicopSpec tau_spec(FamilyKind k, Rotation rot, double tau, double nu = 5.0) {
    const BicopFamily fam{k, rot};
    std::vector<double> par = tau_to_param(fam, tau);
    if (k == FamilyKind::StudentT) par[1] = nu;
    return {fam, par};
}

// the 5-dim R-vine tree sequence used by studies I and III
std::vector<VineEdge> rvine5_edges() {
    return {VineEdge(1, 2), VineEdge(1, 3), VineEdge(1, 4), VineEdge(4, 5),
            VineEdge(2, 4, {1}), VineEdge(3, 4, {1}), VineEdge(1, 5, {4}),
            VineEdge(2, 3, {1, 4}), VineEdge(3, 5, {1, 4}),
            VineEdge(2, 5, {1, 3, 4})};
}

// per-edge (family, tau) of the mixed model, aligned with rvine5_edges()
struct FamTau {
    FamilyKind kind;
    double tau;
};
std::vector<FamTau> mixed_assignment() {
    return {{FamilyKind::Gauss, 0.71},   {FamilyKind::Gauss, 0.33},
            {FamilyKind::Clayton, 0.71}, {FamilyKind::Gumbel, 0.74},
            {FamilyKind::Gumbel, 0.38},  {FamilyKind::Gumbel, 0.47},
            {FamilyKind::Gumbel, 0.33},  {FamilyKind::Clayton, 0.35},
            {FamilyKind::Clayton, 0.31}, {FamilyKind::Gauss, 0.13}};
}

RVineModel study1_truth(double const_tau /* <=0 means mixed */) {
    const auto edges = rvine5_edges();
    const auto fams = mixed_assignment();
    std::vector<EdgeSpec> items;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double tau = const_tau > 0 ? const_tau : fams[i].tau;
        items.push_back({edges[i], tau_spec(fams[i].kind, Rotation::R0, tau)});
    }
    return build_model(5, items);
}

RVineModel study3_truth(bool common_nu) {
    const auto edges = rvine5_edges();
    const auto fams = mixed_assignment();
    const std::vector<double> nus = {4, 5, 6, 8, 10, 12, 14, 16, 18, 20};
    std::vector<EdgeSpec> items;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double nu = common_nu ? 10.0 : nus[i];
        items.push_back({edges[i], tau_spec(FamilyKind::StudentT, Rotation::R0,
                                            fams[i].tau, nu)});
    }
    return build_model(5, items);
}

RVineModel study2_truth() {
    const auto G = FamilyKind::Gauss;
    const auto T = FamilyKind::StudentT;
    const auto GU = FamilyKind::Gumbel;
    std::vector<EdgeSpec> items = {
        {VineEdge(1, 2), tau_spec(G, Rotation::R0, 0.10)},
        {VineEdge(2, 3), tau_spec(T, Rotation::R0, -0.15, 3.0)},
        {VineEdge(3, 4), tau_spec(T, Rotation::R0, -0.10, 3.0)},
        {VineEdge(3, 5), tau_spec(T, Rotation::R0, 0.15, 3.0)},
        {VineEdge(1, 3, {2}), tau_spec(G, Rotation::R0, 0.70)},
        {VineEdge(2, 4, {3}), tau_spec(GU, Rotation::R90, -0.60)},
        {VineEdge(2, 5, {3}), tau_spec(GU, Rotation::R0, 0.85)},
        {VineEdge(1, 4, {2, 3}), tau_spec(G, Rotation::R0, 0.45)},
        {VineEdge(1, 5, {2, 3}), tau_spec(G, Rotation::R0, -0.50)},
        {VineEdge(4, 5, {1, 2, 3}), tau_spec(G, Rotation::R0, 0.10)},
    };
    return build_model(5, items);
}

AlternativeSpec study2_mst_alternative() {
    const BicopFamily t{FamilyKind::StudentT, Rotation::R0};
    const BicopFamily g{FamilyKind::Gauss, Rotation::R0};
    const BicopFamily gu270{FamilyKind::Gumbel, Rotation::R270};
    std::vector<EdgeFam> items = {
        {VineEdge(1, 3), t},          {VineEdge(1, 5), g},
        {VineEdge(2, 5), t},          {VineEdge(4, 5), gu270},
        {VineEdge(1, 2, {5}), t},     {VineEdge(1, 4, {5}), t},
        {VineEdge(3, 5, {1}), t},     {VineEdge(2, 3, {1, 5}), t},
        {VineEdge(3, 4, {1, 5}), t},  {VineEdge(2, 4, {1, 3, 5}), g},
    };
    auto [s, fams] = build_skeleton(5, items);
    AlternativeSpec alt;
    alt.name = "MST";
    alt.kind = AlternativeSpec::Kind::FixedSpec;
    alt.structure = std::move(s);
    alt.families = std::move(fams);
    return alt;
}

AlternativeSpec study2_mcmc_alternative() {
    const BicopFamily t{FamilyKind::StudentT, Rotation::R0};
    const BicopFamily g{FamilyKind::Gauss, Rotation::R0};
    const BicopFamily gu{FamilyKind::Gumbel, Rotation::R0};
    const BicopFamily gu90{FamilyKind::Gumbel, Rotation::R90};
    std::vector<EdgeFam> items = {
        {VineEdge(1, 2), g},          {VineEdge(2, 3), t},
        {VineEdge(2, 4), gu90},       {VineEdge(3, 5), t},
        {VineEdge(1, 3, {2}), g},     {VineEdge(3, 4, {2}), gu},
        {VineEdge(2, 5, {3}), t},     {VineEdge(1, 4, {2, 3}), g},
        {VineEdge(1, 5, {2, 3}), g},  {VineEdge(4, 5, {1, 2, 3}), g},
    };
    auto [s, fams] = build_skeleton(5, items);
    AlternativeSpec alt;
    alt.name = "MCMC";
    alt.kind = AlternativeSpec::Kind::FixedSpec;
    alt.structure = std::move(s);
    alt.families = std::move(fams);
    return alt;
}

// ---- protocol helpers ------------------------------------------------------

CopulaSample apply_margins(const CopulaSample& u, MarginsMode mode,
                           const std::vector<double>& sigmas) {
    if (mode == MarginsMode::Known) return u;
    Eigen::MatrixXd raw(u.n(), u.d());
    for (Eigen::Index j = 0; j < u.d(); ++j) {
        const MarginalModel m{MarginFamily::Normal, {0.0, sigmas[j]}};
        for (Eigen::Index i = 0; i < u.n(); ++i)
            raw(i, j) = margin_quantile(m, u.u(i, j));
    }
    if (mode == MarginsMode::RankBased) return pseudo_observations(raw);
    std::vector<MarginFamily> fams(u.d(), MarginFamily::Normal);
    return ifm_transform(raw, fit_margins(raw, fams));
}

RVineModel resolve_alternative(const AlternativeSpec& alt, const RVineModel& m1,
                               const CopulaSample& pre) {
    using Kind = AlternativeSpec::Kind;
    switch (alt.kind) {
        case Kind::FixedModel:
            if (!alt.model) throw DomainError("alternative '" + alt.name +
                                              "': no model given");
            return *alt.model;
        case Kind::GaussPaired: {
            std::vector<BicopFamily> fams(m1.plan().size(),
                                          {FamilyKind::Gauss, Rotation::R0});
            return fit_sequential(m1.structure(), fams, pre);
        }
        case Kind::MstSelected:
            return select_mst(pre, alt.families.empty() ? default_family_set()
                                                        : alt.families);
        case Kind::StructureOnly:
            if (!alt.structure)
                throw DomainError("alternative '" + alt.name +
                                  "': no structure given");
            return select_families(*alt.structure, pre,
                                   alt.families.empty() ? default_family_set()
                                                        : alt.families);
        case Kind::FixedSpec:
            if (!alt.structure || alt.families.empty())
                throw DomainError("alternative '" + alt.name +
                                  "': structure+families required");
            return fit_sequential(*alt.structure, alt.families, pre);
        case Kind::SharedNu: {
            FitOptions fo;
            fo.shared_student_nu = true;
            return fit_sequential(m1.structure(), families_of(m1), pre, fo);
        }
    }
    throw DomainError("alternative '" + alt.name + "': unknown kind");
}

double rate_at(const std::vector<double>& pvals, double alpha) {
    if (pvals.empty()) return 0.0;
    int c = 0;
    for (double p : pvals)
        if (p <= alpha) ++c;
    return c / static_cast<double>(pvals.size());
}

} // namespace

// ---- public API -------------------------------------------------------------

std::string study_code(StudyId id) {
    switch (id) {
        case StudyId::I_mixed: return "I_mixed";
        case StudyId::I_low: return "I_low";
        case StudyId::I_med: return "I_med";
        case StudyId::II: return "II";
        case StudyId::III_mtcop: return "III_mtcop";
        case StudyId::III_rvine_t: return "III_rvine_t";
    }
    throw DomainError("unknown study id");
}

StudyId study_from_code(const std::string& code) {
    for (StudyId id : {StudyId::I_mixed, StudyId::I_low, StudyId::I_med,
                       StudyId::II, StudyId::III_mtcop, StudyId::III_rvine_t})
        if (study_code(id) == code) return id;
    throw ParseError("unknown study id '" + code + "'");
}

std::vector<std::string> study_codes() {
    std::vector<std::string> out;
    for (StudyId id : {StudyId::I_mixed, StudyId::I_low, StudyId::I_med,
                       StudyId::II, StudyId::III_mtcop, StudyId::III_rvine_t})
        out.push_back(study_code(id));
    return out;
}

std::string margins_code(MarginsMode m) {
    switch (m) {
        case MarginsMode::Known: return "known";
        case MarginsMode::RankBased: return "rank";
        case MarginsMode::IFM: return "ifm";
    }
    throw DomainError("unknown margins mode");
}

MarginsMode margins_from_code(const std::string& code) {
    if (code == "known") return MarginsMode::Known;
    if (code == "rank") return MarginsMode::RankBased;
    if (code == "ifm") return MarginsMode::IFM;
    throw ParseError("unknown margins mode '" + code + "'");
}

std::vector<double> alpha_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 10; ++i) g.push_back(i / 1000.0);
    for (int i = 15; i <= 990; i += 5) g.push_back(i / 1000.0);
    for (int i = 991; i <= 999; ++i) g.push_back(i / 1000.0);
    return g;
}

std::vector<double> empirical_cdf_curve(const std::vector<double>& pvalues,
                                        const std::vector<double>& grid) {
    std::vector<double> sorted = pvalues;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out(grid.size(), 0.0);
    if (sorted.empty()) return out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), grid[i]);
        out[i] = static_cast<double>(it - sorted.begin()) /
                 static_cast<double>(sorted.size());
    }
    return out;
}

StudyConfig fixture(StudyId id) {
    StudyConfig cfg;
    cfg.name = study_code(id);
    cfg.margin_sigmas = {1, 2, 3, 4, 5};
    switch (id) {
        case StudyId::I_mixed:
        case StudyId::I_low:
        case StudyId::I_med: {
            const double tau = id == StudyId::I_low   ? 0.25
                               : id == StudyId::I_med ? 0.50
                                                      : -1.0;
            cfg.m1 = study1_truth(tau);
            AlternativeSpec gauss;
            gauss.name = "Gauss";
            gauss.kind = AlternativeSpec::Kind::GaussPaired;
            AlternativeSpec cvine;
            cvine.name = "C-vine";
            cvine.kind = AlternativeSpec::Kind::StructureOnly;
            cvine.structure = cvine_structure({2, 1, 4, 3, 5});
            AlternativeSpec dvine;
            dvine.name = "D-vine";
            dvine.kind = AlternativeSpec::Kind::StructureOnly;
            dvine.structure = dvine_structure({3, 4, 5, 1, 2});
            cfg.alternatives = {std::move(gauss), std::move(cvine),
                                std::move(dvine)};
            cfg.n = 500;
            cfg.R = 200;
            break;
        }
        case StudyId::II: {
            cfg.m1 = study2_truth();
            cfg.alternatives = {study2_mst_alternative(),
                                study2_mcmc_alternative()};
            cfg.n = 1000;
            cfg.R = 100;
            break;
        }
        case StudyId::III_mtcop: {
            cfg.m1 = study3_truth(true);
            AlternativeSpec alt;
            alt.name = "rvine-t";
            alt.kind = AlternativeSpec::Kind::MstSelected;
            alt.families = {{FamilyKind::StudentT, Rotation::R0}};
            cfg.alternatives = {std::move(alt)};
            cfg.m1_shared_nu = true;
            cfg.n = 500;
            cfg.R = 50;
            break;
        }
        case StudyId::III_rvine_t: {
            cfg.m1 = study3_truth(false);
            AlternativeSpec alt;
            alt.name = "t-copula";
            alt.kind = AlternativeSpec::Kind::SharedNu;
            cfg.alternatives = {std::move(alt)};
            cfg.n = 500;
            cfg.R = 50;
            break;
        }
    }
    return cfg;
}

StudyResult run_study(const StudyConfig& cfg) {
    if (!cfg.m1) throw DomainError("run_study: no true model configured");
    if (cfg.R < 2) throw DomainError("run_study: R must be at least 2");
    if (cfg.n < 50) throw DomainError("run_study: n must be at least 50");
    const RVineModel& m1 = *cfg.m1;
    const int d = m1.dim();
    std::vector<double> sigmas = cfg.margin_sigmas;
    if (sigmas.empty()) sigmas.assign(d, 1.0);
    if (static_cast<int>(sigmas.size()) != d)
        throw DomainError("run_study: need one margin sigma per variable");

    // pre-run: determine the alternatives, then freeze them
    const CopulaSample pre_raw =
        m1.simulate(cfg.pre_n, derive_seed(cfg.seed, kPrePurpose, 0));
    const CopulaSample pre = apply_margins(pre_raw, cfg.margins, sigmas);

    StudyResult res;
    res.name = cfg.name;
    res.n = cfg.n;
    res.R = cfg.R;
    res.seed = cfg.seed;
    res.margins = cfg.margins;
    res.pvalue_mode = cfg.pvalue_mode;
    for (const AlternativeSpec& alt : cfg.alternatives)
        res.m2_models.push_back(resolve_alternative(alt, m1, pre));

    const RVineStructure& h0_structure = m1.structure();
    const std::vector<BicopFamily> h0_families = families_of(m1);
    FitOptions fo;
    fo.shared_student_nu = cfg.m1_shared_nu;
    GofOptions go;
    go.threads = cfg.threads;
    go.allow_external_params = cfg.m1_shared_nu; // tied nus are not a free MLE

    const int n_arms = 1 + static_cast<int>(cfg.alternatives.size());
    res.m1.name = "M1";
    res.m2.resize(cfg.alternatives.size());
    for (std::size_t k = 0; k < cfg.alternatives.size(); ++k)
        res.m2[k].name = cfg.alternatives[k].name;

    const double budget = 0.05 * cfg.R;
    for (int r = 0; r < cfg.R; ++r) {
        if (cfg.verbose && r % 10 == 0)
            std::fprintf(stderr, "[%s] replicate %d/%d\n", cfg.name.c_str(), r,
                         cfg.R);
        for (int arm = 0; arm < n_arms; ++arm) {
            const RVineModel& source = arm == 0 ? m1 : res.m2_models[arm - 1];
            ArmResult& out = arm == 0 ? res.m1 : res.m2[arm - 1];
            try {
                const CopulaSample draw = source.simulate(
                    cfg.n, derive_seed(cfg.seed, kArmPurpose + arm, r));
                const CopulaSample u = apply_margins(draw, cfg.margins, sigmas);
                const RVineModel fit =
                    cfg.full_mle ? fit_full(h0_structure, h0_families, u, fo)
                                 : fit_sequential(h0_structure, h0_families, u, fo);
                const GofResult g = test_statistic(fit, u, go);
                out.replicate.push_back(r);
                out.stats.push_back(g.statistic);
                out.p_asy.push_back(g.p_asymptotic);
            } catch (const Error& e) {
                if (++out.failures > budget)
                    throw OptimizationError("study aborted: arm '" + out.name +
                                            "' exceeded the 5% failure budget (" +
                                            e.what() + ")");
            }
        }
    }

    if (cfg.pvalue_mode != PvalueMode::Asymptotic) {
        res.m1.p_sim = simulated_pvalues(res.m1.stats);
        for (ArmResult& arm : res.m2)
            arm.p_sim = simulated_pvalues(res.m1.stats, arm.stats);
    }

    const std::vector<double> grid = alpha_grid();
    auto build_curves = [&](bool asymptotic) {
        CurveData c;
        c.alpha = grid;
        c.f_m1 = empirical_cdf_curve(asymptotic ? res.m1.p_asy : res.m1.p_sim, grid);
        for (const ArmResult& arm : res.m2) {
            c.names.push_back(arm.name);
            c.f_m2.push_back(
                empirical_cdf_curve(asymptotic ? arm.p_asy : arm.p_sim, grid));
        }
        return c;
    };
    if (cfg.pvalue_mode != PvalueMode::Asymptotic) res.curves_sim = build_curves(false);
    if (cfg.pvalue_mode != PvalueMode::Simulated) res.curves_asy = build_curves(true);

    auto add_summary = [&](const ArmResult& arm, bool asymptotic) {
        const std::vector<double>& p = asymptotic ? arm.p_asy : arm.p_sim;
        res.summary.push_back({arm.name, asymptotic, rate_at(p, 0.01),
                               rate_at(p, 0.05), rate_at(p, 0.10)});
    };
    if (cfg.pvalue_mode != PvalueMode::Asymptotic) {
        add_summary(res.m1, false);
        for (const ArmResult& arm : res.m2) add_summary(arm, false);
    }
    if (cfg.pvalue_mode != PvalueMode::Simulated) {
        add_summary(res.m1, true);
        for (const ArmResult& arm : res.m2) add_summary(arm, true);
    }
    return res;
}

} // namespace vinegof
