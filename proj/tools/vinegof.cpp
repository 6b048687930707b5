#include "vinegof/derivs.hpp"
#include "vinegof/errors.hpp"
#include "vinegof/fit.hpp"
#include "vinegof/gof.hpp"
#include "vinegof/io.hpp"
#include "vinegof/margins.hpp"
#include "vinegof/power.hpp"
#include "vinegof/select.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace vinegof;

namespace {

// Error taxonomy -> exit code: 2 input, 3 optimization, 4 unsupported,
// 5 internal numerical failure.
int exit_code_for(const Error& e) {
    if (dynamic_cast<const InvalidParameter*>(&e) ||
        dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const IncompatibleTau*>(&e) ||
        dynamic_cast<const DegenerateSample*>(&e) ||
        dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const StructureError*>(&e))
        return 2;
    if (dynamic_cast<const OptimizationError*>(&e) ||
        dynamic_cast<const ConvergenceError*>(&e) ||
        dynamic_cast<const FitError*>(&e))
        return 3;
    if (dynamic_cast<const UnsupportedFamily*>(&e) ||
        dynamic_cast<const UnsupportedRequest*>(&e))
        return 4;
    return 5;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    return out;
}

std::string trim_ws(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// --config FILE handling. The parser library processes config files only on
// the top-level app, not on subcommands, so key=value lines are merged into
// argv up front instead: each key becomes --key=value unless that flag is
// already on the command line (flags beat config). Values containing spaces
// expand into separate tokens (multi-value options like bootstrap=200 1000).
std::vector<std::string> merge_config_tokens(int argc, char** argv) {
    std::vector<std::string> tokens(argv + 1, argv + argc);
    std::string path;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == "--config" && i + 1 < tokens.size()) path = tokens[i + 1];
        else if (tokens[i].rfind("--config=", 0) == 0) path = tokens[i].substr(9);
    }
    if (path.empty()) return tokens;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    const auto given = [&tokens](const std::string& key) {
        const std::string flag = "--" + key;
        for (const auto& t : tokens)
            if (t == flag || t.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim_ws(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ParseError(path + ": line " + std::to_string(lineno) +
                             ": want key=value");
        const std::string key = trim_ws(line.substr(0, eq));
        const std::string val = trim_ws(line.substr(eq + 1));
        if (key == "config")
            throw ParseError(path + ": line " + std::to_string(lineno) +
                             ": config files cannot nest");
        if (given(key)) continue;
        if (val.find_first_of(" \t") != std::string::npos) {
            tokens.push_back("--" + key);
            std::istringstream ss(val);
            std::string piece;
            while (ss >> piece) tokens.push_back(piece);
        } else {
            tokens.push_back("--" + key + "=" + val);
        }
    }
    return tokens;
}

// "normal,t,exp" per column, or one code broadcast to all d columns
std::vector<MarginFamily> margin_families_arg(const std::string& arg, int d) {
    std::vector<MarginFamily> fams;
    if (arg.empty()) {
        fams.assign(d, MarginFamily::Normal);
        return fams;
    }
    const auto parts = split_list(arg);
    for (const auto& p : parts) fams.push_back(margin_family_from_code(p));
    if (fams.size() == 1) fams.assign(d, fams[0]);
    if (static_cast<int>(fams.size()) != d)
        throw ParseError("--margin-families wants 1 or " + std::to_string(d) +
                         " codes, got " + std::to_string(parts.size()));
    return fams;
}

std::vector<BicopFamily> copula_families_arg(const std::string& arg) {
    if (arg.empty()) return default_family_set();
    std::vector<BicopFamily> fams;
    for (const auto& p : split_list(arg)) fams.push_back(family_from_code(p));
    if (fams.empty()) throw ParseError("--families list is empty");
    return fams;
}

// Loads data for fitting/selection: copula-scale CSV by default, or a raw
// CSV pushed through ranks / fitted margins.
CopulaSample load_data(const std::string& path, const std::string& margins,
                       const std::string& margin_fams,
                       std::vector<MarginalModel>* fits_out = nullptr) {
    if (margins == "known") return load_sample_csv(path);
    const Eigen::MatrixXd raw = load_matrix_csv(path, true);
    if (margins == "rank") return pseudo_observations(raw);
    if (margins == "ifm") {
        const auto fams = margin_families_arg(margin_fams, static_cast<int>(raw.cols()));
        auto fits = fit_margins(raw, fams);
        if (fits_out) *fits_out = fits;
        return ifm_transform(raw, fits);
    }
    throw ParseError("unknown --margins mode '" + margins + "' (known|rank|ifm)");
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty())
        std::fputs(text.c_str(), stdout);
    else
        save_text(text, out_path);
}

// ---------------- simulate ----------------

struct SimulateArgs {
    std::string model, out;
    int n = 0;
    std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a) {
    const RVineModel m = load_model(a.model);
    const CopulaSample s = m.simulate(a.n, a.seed);
    save_sample_csv(s, a.out);
    std::printf("simulated n=%lld d=%lld seed=%llu -> %s\n",
                static_cast<long long>(s.n()), static_cast<long long>(s.d()),
                static_cast<unsigned long long>(a.seed), a.out.c_str());
    return 0;
}

// ---------------- fit ----------------

struct FitArgs {
    std::string spec, data, out, report;
    std::string margins = "known", margin_fams;
    bool full = false, shared_nu = false;
};

int cmd_fit(const FitArgs& a) {
    VineFile vf = load_vine_file(a.spec);
    if (!vf.has_families)
        throw ParseError(a.spec + ": fit needs family= on every edge");
    const CopulaSample data = load_data(a.data, a.margins, a.margin_fams);
    FitOptions opts;
    opts.shared_student_nu = a.shared_nu;
    FitReport rep;
    const RVineModel fitted =
        a.full ? fit_full(vf.structure, vf.families, data, opts, &rep)
               : fit_sequential(vf.structure, vf.families, data, opts, &rep);
    save_text(format_model(fitted), a.out);
    const std::string report =
        fit_report_json(a.out, rep.loglik, fitted.num_params(), data.n(),
                        rep.converged, rep.iterations);
    std::fputs(report.c_str(), stdout);
    if (!a.report.empty()) save_text(report, a.report);
    return 0;
}

// ---------------- gof ----------------

struct GofArgs {
    std::string model, data, out, dump_dir;
    std::vector<int> bootstrap; // B N
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool refit = false, full = false, allow_external = false;
    int threads = 1;
};

int cmd_gof(const GofArgs& a) {
    const CopulaSample data = load_sample_csv(a.data);
    VineFile vf = load_vine_file(a.model);
    GofOptions go;
    go.allow_external_params = a.allow_external;
    go.threads = a.threads;

    std::optional<RVineModel> model;
    GofResult result;
    if (!a.bootstrap.empty()) {
        if (!a.seed_given)
            throw ParseError("--bootstrap needs --seed (reproducibility is not optional)");
        if (!vf.has_families)
            throw ParseError(a.model + ": bootstrap refit needs family= on every edge");
        const BootstrapResult br =
            bootstrap_pvalue(vf.structure, vf.families, data, a.bootstrap[0],
                             a.bootstrap[1], a.seed, a.full, a.threads);
        model.emplace(br.fitted);
        result = test_statistic(*model, data, go);
        result.p_bootstrap = br.pvalue;
        result.bootstrap_B = a.bootstrap[0];
        result.bootstrap_N = a.bootstrap[1];
        result.seed = a.seed;
        if (br.failures > 0)
            std::fprintf(stderr, "note: %d bootstrap replicates failed and were dropped\n",
                         br.failures);
    } else if (a.refit) {
        if (!vf.has_families)
            throw ParseError(a.model + ": --refit needs family= on every edge");
        FitOptions fo;
        model.emplace(a.full ? fit_full(vf.structure, vf.families, data, fo)
                             : fit_sequential(vf.structure, vf.families, data, fo));
        result = test_statistic(*model, data, go);
    } else {
        if (!vf.has_params)
            throw ParseError(a.model +
                             ": model file has no params; pass a fitted model or --refit");
        model.emplace(RVineModel(vf.structure, vf.specs));
        result = test_statistic(*model, data, go);
    }

    if (!a.dump_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(a.dump_dir, ec);
        if (ec)
            throw DomainError("cannot create directory '" + a.dump_dir + "': " +
                              ec.message());
        const GofIngredients gi = gof_ingredients(*model, data, a.threads);
        const auto p = [&](const char* f) {
            return (std::filesystem::path(a.dump_dir) / f).string();
        };
        const Eigen::MatrixXd cbar =
            gi.scores.transpose() * gi.scores / static_cast<double>(data.n());
        save_matrix_csv(gi.hbar, {}, p("hbar.csv"));
        save_matrix_csv(cbar, {}, p("cbar.csv"));
        save_matrix_csv(gi.dbar.transpose(), {}, p("dbar.csv"));
        save_matrix_csv(gi.grad, {}, p("grad_d.csv"));
    }

    emit(gof_result_json(result), a.out);
    return 0;
}

// ---------------- study ----------------

struct StudyArgs {
    std::string id, outdir;
    int n = -1, R = -1, pre_n = -1, threads = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string margins, pvalues;
    bool full = false, verbose = false;
};

int cmd_study(const StudyArgs& a) {
    if (a.id.empty())
        throw ParseError("study needs an id (one of: " +
                         [] {
                             std::string s;
                             for (const auto& c : study_codes())
                                 s += (s.empty() ? "" : ", ") + c;
                             return s;
                         }() +
                         ") as positional argument or config key id=");
    StudyConfig cfg;
    try {
        cfg = fixture(study_from_code(a.id));
    } catch (const ParseError&) {
        std::string s;
        for (const auto& c : study_codes()) s += (s.empty() ? "" : ", ") + c;
        throw ParseError("unknown study id '" + a.id + "' (valid: " + s + ")");
    }
    if (a.n > 0) cfg.n = a.n;
    if (a.R > 0) cfg.R = a.R;
    if (a.pre_n > 0) cfg.pre_n = a.pre_n;
    if (a.seed_given) cfg.seed = a.seed;
    if (!a.margins.empty()) cfg.margins = margins_from_code(a.margins);
    if (!a.pvalues.empty()) {
        if (a.pvalues == "simulated") cfg.pvalue_mode = PvalueMode::Simulated;
        else if (a.pvalues == "asymptotic") cfg.pvalue_mode = PvalueMode::Asymptotic;
        else if (a.pvalues == "both") cfg.pvalue_mode = PvalueMode::Both;
        else throw ParseError("unknown --pvalues mode '" + a.pvalues +
                              "' (simulated|asymptotic|both)");
    }
    cfg.full_mle = a.full;
    cfg.threads = a.threads;
    cfg.verbose = a.verbose;

    const StudyResult res = run_study(cfg);
    const std::string outdir = a.outdir.empty() ? "study_" + cfg.name : a.outdir;
    write_study_outputs(res, outdir);

    std::printf("study %s: n=%d R=%d seed=%llu margins=%s\n", res.name.c_str(),
                res.n, res.R, static_cast<unsigned long long>(res.seed),
                margins_code(res.margins).c_str());
    std::printf("%-12s %-11s %7s %7s %7s\n", "arm", "pvalues", "0.01", "0.05",
                "0.10");
    for (const auto& row : res.summary)
        std::printf("%-12s %-11s %7.3f %7.3f %7.3f\n", row.arm.c_str(),
                    row.asymptotic ? "asymptotic" : "simulated", row.at_01,
                    row.at_05, row.at_10);
    std::printf("outputs: %s/statistics.csv, %s/curves.csv, %s/study.json\n",
                outdir.c_str(), outdir.c_str(), outdir.c_str());
    return 0;
}

// ---------------- select ----------------

struct SelectArgs {
    std::string data, out, structure, families;
    std::string criterion = "aic";
    std::string margins = "known", margin_fams;
};

int cmd_select(const SelectArgs& a) {
    const CopulaSample data = load_data(a.data, a.margins, a.margin_fams);
    SelectCriterion crit;
    if (a.criterion == "aic") crit = SelectCriterion::AIC;
    else if (a.criterion == "bic") crit = SelectCriterion::BIC;
    else throw ParseError("unknown --criterion '" + a.criterion + "' (aic|bic)");
    const auto fams = copula_families_arg(a.families);

    std::optional<RVineModel> sel;
    if (a.structure.empty()) {
        sel.emplace(select_mst(data, fams, crit));
    } else {
        VineFile vf = load_vine_file(a.structure);
        sel.emplace(select_families(vf.structure, data, fams, crit));
    }
    const std::string text = format_model(*sel);
    if (!a.out.empty()) save_text(text, a.out);
    std::fputs(text.c_str(), stdout);
    std::printf("# loglik=%.6f params=%d n=%lld\n", sel->loglik(data),
                sel->num_params(), static_cast<long long>(data.n()));
    return 0;
}

// ---------------- margins ----------------

struct MarginsArgs {
    std::string data, out, report;
    std::string mode = "rank", margin_fams;
};

int cmd_margins(const MarginsArgs& a) {
    const Eigen::MatrixXd raw = load_matrix_csv(a.data, true);
    CopulaSample u;
    std::string report;
    if (a.mode == "rank") {
        u = pseudo_observations(raw);
        report = "[]\n";
    } else if (a.mode == "ifm") {
        const auto fams =
            margin_families_arg(a.margin_fams, static_cast<int>(raw.cols()));
        const auto fits = fit_margins(raw, fams);
        u = ifm_transform(raw, fits);
        report = margins_json(fits);
    } else {
        throw ParseError("unknown --mode '" + a.mode + "' (rank|ifm)");
    }
    save_sample_csv(u, a.out);
    std::fputs(report.c_str(), stdout);
    if (!a.report.empty()) save_text(report, a.report);
    std::printf("transformed %lld x %lld -> %s\n", static_cast<long long>(u.n()),
                static_cast<long long>(u.d()), a.out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "vinegof - vine copula estimation, simulation and the "
        "information-matrix goodness-of-fit test.\n"
        "Option layering: defaults < config file (--config, key=value lines) < "
        "command-line flags."};
    app.require_subcommand(1);

    // consumed by merge_config_tokens before parsing; registered so the flag
    // is recognised and shows in --help
    std::string config_path;
    static constexpr const char* kConfigHelp =
        "key=value config file (command-line flags win)";

    SimulateArgs sim;
    auto* s_sim = app.add_subcommand("simulate", "Draw a sample from a vine model file");
    s_sim->add_option("--config", config_path, kConfigHelp);
    s_sim->add_option("--model", sim.model, "vine model file (family+params per edge)")
        ->required();
    s_sim->add_option("--n", sim.n, "number of observations")
        ->required()
        ->check(CLI::PositiveNumber);
    s_sim->add_option("--seed", sim.seed, "RNG seed (mandatory: runs are reproducible)")
        ->required();
    s_sim->add_option("--out", sim.out, "output CSV (header u1,...,ud)")->required();

    FitArgs fit;
    auto* s_fit = app.add_subcommand("fit", "Fit pair-copula parameters on data");
    s_fit->add_option("--config", config_path, kConfigHelp);
    s_fit->add_option("--spec", fit.spec, "structure+families vine file")->required();
    s_fit->add_option("--data", fit.data, "sample CSV")->required();
    s_fit->add_option("--out", fit.out, "fitted model file")->required();
    s_fit->add_option("--report", fit.report, "also write the JSON report here");
    s_fit->add_flag("--full", fit.full, "joint MLE (default: sequential tree-wise)");
    s_fit->add_flag("--shared-nu", fit.shared_nu,
                    "tie all StudentT degrees of freedom to one value");
    s_fit->add_option("--margins", fit.margins,
                      "known|rank|ifm - how to map data to copula scale");
    s_fit->add_option("--margin-families", fit.margin_fams,
                      "ifm margins per column, e.g. normal,t,exp (one code = all)");

    GofArgs gof;
    auto* s_gof = app.add_subcommand(
        "gof", "Information-matrix goodness-of-fit test (JSON result)");
    s_gof->add_option("--config", config_path, kConfigHelp);
    s_gof->add_option("--model", gof.model, "fitted model file (or spec with --refit)")
        ->required();
    s_gof->add_option("--data", gof.data, "sample CSV on copula scale")->required();
    s_gof->add_flag("--refit", gof.refit, "refit parameters on the data first");
    s_gof->add_flag("--full", gof.full, "use the joint MLE when refitting");
    s_gof->add_option("--bootstrap", gof.bootstrap,
                      "B N: parametric bootstrap p-value from B replicates of size N")
        ->expected(2);
    auto* gof_seed = s_gof->add_option("--seed", gof.seed, "RNG seed for --bootstrap");
    s_gof->add_flag("--allow-external-params", gof.allow_external,
                    "skip the MLE score check (test at externally supplied theta)");
    s_gof->add_option("--threads", gof.threads, "worker threads for the derivative pass")
        ->check(CLI::PositiveNumber);
    s_gof->add_option("--out", gof.out, "write the JSON here instead of stdout");
    s_gof->add_option("--dump-matrices", gof.dump_dir,
                      "debug: write hbar/cbar/dbar/grad_d CSVs into this directory");

    StudyArgs study;
    auto* s_study = app.add_subcommand(
        "study", "Run a Monte Carlo size/power study into an output directory");
    s_study->add_option("--config", config_path, kConfigHelp);
    s_study->add_option("id,--id", study.id, "study id: " + [] {
        std::string s;
        for (const auto& c : study_codes()) s += (s.empty() ? "" : ", ") + c;
        return s;
    }());
    s_study->add_option("--n", study.n, "observations per replicate");
    s_study->add_option("--R", study.R, "number of replicates");
    s_study->add_option("--pre-n", study.pre_n, "pre-run sample size for alternatives");
    auto* study_seed = s_study->add_option("--seed", study.seed, "study master seed");
    s_study->add_option("--outdir", study.outdir,
                        "output directory (default study_<id>)");
    s_study->add_option("--margins", study.margins,
                        "known|rank|ifm margins treatment");
    s_study->add_option("--pvalues", study.pvalues, "simulated|asymptotic|both");
    s_study->add_flag("--full", study.full, "joint MLE per replicate");
    s_study->add_option("--threads", study.threads, "worker threads inside the statistic")
        ->check(CLI::PositiveNumber);
    s_study->add_flag("--verbose", study.verbose, "progress notes on stderr");

    SelectArgs sel;
    auto* s_sel = app.add_subcommand(
        "select", "Select structure (spanning trees) and families from data");
    s_sel->add_option("--config", config_path, kConfigHelp);
    s_sel->add_option("--data", sel.data, "sample CSV")->required();
    s_sel->add_option("--out", sel.out, "write the selected model file here");
    s_sel->add_option("--structure", sel.structure,
                      "keep this structure file, select families only");
    s_sel->add_option("--criterion", sel.criterion, "aic|bic (default aic)");
    s_sel->add_option("--families", sel.families,
                      "candidate family codes, e.g. gauss,t,clayton,gumbel@90");
    s_sel->add_option("--margins", sel.margins, "known|rank|ifm");
    s_sel->add_option("--margin-families", sel.margin_fams, "ifm margins per column");

    MarginsArgs mar;
    auto* s_mar = app.add_subcommand(
        "margins", "Transform raw data to copula scale (ranks or fitted margins)");
    s_mar->add_option("--config", config_path, kConfigHelp);
    s_mar->add_option("--data", mar.data, "raw data CSV with header")->required();
    s_mar->add_option("--out", mar.out, "output CSV of uniforms")->required();
    s_mar->add_option("--mode", mar.mode, "rank|ifm (default rank)");
    s_mar->add_option("--margin-families", mar.margin_fams,
                      "ifm margins per column, e.g. normal,t,exp");
    s_mar->add_option("--report", mar.report, "also write the margins JSON here");

    try {
        std::vector<std::string> args;
        try {
            args = merge_config_tokens(argc, argv);
        } catch (const Error& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 2;
        }
        std::reverse(args.begin(), args.end()); // parse() wants reversed argv
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e); // prints help or the error message
        return rc == 0 ? 0 : 2;
    }

    gof.seed_given = gof_seed->count() > 0;
    study.seed_given = study_seed->count() > 0;

    try {
        if (s_sim->parsed()) return cmd_simulate(sim);
        if (s_fit->parsed()) return cmd_fit(fit);
        if (s_gof->parsed()) return cmd_gof(gof);
        if (s_study->parsed()) return cmd_study(study);
        if (s_sel->parsed()) return cmd_select(sel);
        if (s_mar->parsed()) return cmd_margins(mar);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 5;
    }
    return 0;
}
