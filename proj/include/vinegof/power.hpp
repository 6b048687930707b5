#pragma once
#include "vinegof/gof.hpp"
#include "vinegof/margins.hpp"
#include "vinegof/model.hpp"

#include <optional>
#include <string>
#include <vector>

// Monte Carlo size/power experiments. A study fixes a true model M1 and a
// list of alternatives M2. A pre-run sample determines every alternative
// that needs selection or estimation; the alternatives are then frozen.
// Each replicate simulates from M1 (null arm) and from every M2 (power
// arms), fits M1's parameters on the data, computes the information-matrix
// statistic and both p-values. Simulated p-values rank each statistic
// against the null arm's statistics; empirical rejection curves on the
// alpha grid give p-value plots and size-power curves.

namespace vinegof {

enum class StudyId { I_mixed, I_low, I_med, II, III_mtcop, III_rvine_t };

std::string study_code(StudyId id);
StudyId study_from_code(const std::string& code);
std::vector<std::string> study_codes();

enum class MarginsMode { Known, RankBased, IFM };
enum class PvalueMode { Simulated, Asymptotic, Both };

std::string margins_code(MarginsMode m);
MarginsMode margins_from_code(const std::string& code);

struct AlternativeSpec {
    enum class Kind {
        FixedModel,    // fully specified model, used as-is
        GaussPaired,   // M1's structure, every pair Gauss, fitted on the pre-run
        MstSelected,   // structure + families + parameters selected on the pre-run
        StructureOnly, // fixed structure; families + parameters from the pre-run
        FixedSpec,     // fixed structure + families; parameters from the pre-run
        SharedNu,      // M1's skeleton refitted with one common t-nu (t-copula proxy)
    };
    std::string name;
    Kind kind = Kind::FixedModel;
    std::optional<RVineModel> model;          // FixedModel
    std::optional<RVineStructure> structure;  // StructureOnly / FixedSpec
    std::vector<BicopFamily> families;        // FixedSpec; candidate set otherwise
};

struct StudyConfig {
    std::string name = "custom";
    std::optional<RVineModel> m1; // required
    std::vector<AlternativeSpec> alternatives;
    int n = 500;
    int R = 200;
    int pre_n = 1000;
    std::uint64_t seed = 1;
    MarginsMode margins = MarginsMode::Known;
    std::vector<double> margin_sigmas; // Normal(0, sigma_j) raw margins; empty = all 1
    PvalueMode pvalue_mode = PvalueMode::Both;
    bool full_mle = false;      // joint MLE per replicate instead of sequential
    bool m1_shared_nu = false;  // the null model ties all t-edge nus together
    int threads = 1;
    bool verbose = false;       // progress notes on stderr
};

struct ArmResult {
    std::string name;                // "M1" or the alternative's name
    std::vector<int> replicate;      // successful replicate indices
    std::vector<double> stats;
    std::vector<double> p_asy;
    std::vector<double> p_sim;       // empty when pvalue_mode == Asymptotic
    int failures = 0;
};

struct CurveData {
    std::vector<double> alpha;
    std::vector<double> f_m1;                 // rejection rate under the null
    std::vector<std::string> names;           // alternative names
    std::vector<std::vector<double>> f_m2;    // rejection rate per alternative
};

struct StudySummaryRow {
    std::string arm;
    bool asymptotic = false; // which p-value fed the rates
    double at_01 = 0, at_05 = 0, at_10 = 0;
};

struct StudyResult {
    std::string name;
    int n = 0, R = 0;
    std::uint64_t seed = 0;
    MarginsMode margins = MarginsMode::Known;
    PvalueMode pvalue_mode = PvalueMode::Both;
    ArmResult m1;
    std::vector<ArmResult> m2;
    std::vector<RVineModel> m2_models; // resolved alternatives, pre-run output
    CurveData curves_sim, curves_asy;  // alpha empty when the mode is off
    std::vector<StudySummaryRow> summary;
};

// 0.001..0.010 by 0.001, 0.015..0.990 by 0.005, 0.991..0.999 by 0.001
std::vector<double> alpha_grid();

// share of p-values <= alpha, per grid point
std::vector<double> empirical_cdf_curve(const std::vector<double>& pvalues,
                                        const std::vector<double>& grid);

StudyConfig fixture(StudyId id);
StudyResult run_study(const StudyConfig& config);

} // namespace vinegof
