#include "vinegof/io.hpp"
#include "vinegof/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace vinegof {
namespace {

using nlohmann::json;

// ======================= text utilities =======================

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back(); // keep trailing field
    return out;
}

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
    throw ParseError(where.empty() ? msg : where + ": " + msg);
}

int parse_int(const std::string& s, const std::string& where, const char* what) {
    const std::string t = trim(s);
    int v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size())
        fail(where, std::string("bad ") + what + " '" + t + "'");
    return v;
}

bool try_parse_double(const std::string& s, double& v) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    v = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size() && std::isfinite(v);
}

double parse_double(const std::string& s, const std::string& where, const char* what) {
    double v = 0;
    if (!try_parse_double(s, v))
        fail(where, std::string("bad ") + what + " '" + trim(s) + "'");
    return v;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& where,
                                const char* what) {
    std::vector<int> out;
    if (trim(s).empty()) return out;
    for (const auto& part : split(s, ','))
        out.push_back(parse_int(part, where, what));
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& where,
                                      const char* what) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (const auto& part : split(s, ','))
        out.push_back(parse_double(part, where, what));
    return out;
}

std::string fmt_full(double v) { // round-trippable double
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_full(v[i]);
    }
    return out;
}

std::string sanitize_column(std::string name) {
    for (char& c : name)
        if (c == ',' || c == ' ' || c == '\t') c = '_';
    return name;
}

} // namespace

// ======================= vine specification files =======================

VineFile parse_vine_text(const std::string& text) {
    struct RawEdge {
        std::string where;
        VineEdge edge;
        bool has_family = false;
        BicopFamily family;
        bool has_params = false;
        std::vector<double> params;
    };

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    int d = -1;
    std::vector<RawEdge> rows;

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (const auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);

        if (d < 0) { // header comes first
            const auto eq = line.find('=');
            if (eq == std::string::npos || trim(line.substr(0, eq)) != "d")
                fail(where, "expected header 'd=<int>', got '" + line + "'");
            d = parse_int(line.substr(eq + 1), where, "dimension");
            if (d < 2) fail(where, "dimension must be >= 2");
            continue;
        }

        std::istringstream ts(line);
        std::map<std::string, std::string> kv;
        std::string tok;
        while (ts >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos)
                fail(where, "expected key=value, got '" + tok + "'");
            const std::string key = tok.substr(0, eq);
            if (kv.count(key)) fail(where, "duplicate key '" + key + "'");
            kv[key] = tok.substr(eq + 1);
        }
        for (const auto& [k, v] : kv)
            if (k != "tree" && k != "cond" && k != "given" && k != "family" &&
                k != "params")
                fail(where, "unknown key '" + k + "'");
        if (!kv.count("tree") || !kv.count("cond") || !kv.count("given"))
            fail(where, "edge line needs tree=, cond= and given=");

        const int tree = parse_int(kv["tree"], where, "tree index");
        const auto cond = parse_int_list(kv["cond"], where, "conditioned variable");
        if (cond.size() != 2)
            fail(where, "cond= wants exactly two variables");
        const auto given = parse_int_list(kv["given"], where, "conditioning variable");
        if (cond[0] == cond[1])
            fail(where, "conditioned pair repeats variable " + std::to_string(cond[0]));
        for (const int v : {cond[0], cond[1]})
            if (v < 1 || v > d)
                fail(where, "variable " + std::to_string(v) + " outside 1.." +
                                std::to_string(d));
        for (const int v : given) {
            if (v < 1 || v > d)
                fail(where, "variable " + std::to_string(v) + " outside 1.." +
                                std::to_string(d));
            if (v == cond[0] || v == cond[1])
                fail(where, "conditioning set repeats conditioned variable " +
                                std::to_string(v));
        }
        if (tree != static_cast<int>(given.size()) + 1)
            fail(where, "tree=" + std::to_string(tree) + " but " +
                            std::to_string(given.size()) + " conditioning variables");

        RawEdge re;
        re.where = where;
        re.edge = VineEdge(cond[0], cond[1], given);
        if (kv.count("family")) {
            try {
                re.family = family_from_code(trim(kv["family"]));
            } catch (const Error& e) {
                fail(where, e.what());
            }
            re.has_family = true;
        }
        if (kv.count("params")) {
            if (!re.has_family) fail(where, "params= without family=");
            re.params = parse_double_list(kv["params"], where, "parameter");
            re.has_params = true;
        }
        rows.push_back(std::move(re));
    }

    if (d < 0) throw ParseError("missing 'd=<int>' header");
    if (rows.empty()) throw ParseError("no edge lines");

    bool all_fam = true, any_fam = false, all_par = true, any_par = false;
    for (const auto& re : rows) {
        all_fam &= re.has_family;
        any_fam |= re.has_family;
        all_par &= re.has_params;
        any_par |= re.has_params;
    }
    if (any_fam && !all_fam)
        throw ParseError("family= present on some edges but not all");
    if (any_par && !all_par)
        throw ParseError("params= present on some edges but not all");

    std::map<std::string, std::string> seen; // label -> line
    std::vector<VineEdge> edges;
    for (const auto& re : rows) {
        const std::string lab = re.edge.label();
        if (const auto it = seen.find(lab); it != seen.end())
            fail(re.where, "duplicate edge " + lab + " (first at " + it->second + ")");
        seen[lab] = re.where;
        edges.push_back(re.edge);
    }

    VineFile vf;
    try {
        vf.structure = RVineStructure::from_edges(d, edges);
        validate_or_throw(vf.structure);
    } catch (const StructureError& e) {
        // a well-formed file can still describe a broken vine; that is
        // the file's fault, so surface it as a parse failure
        throw ParseError(e.what());
    }
    vf.has_families = all_fam;
    vf.has_params = all_par;
    if (all_fam) {
        const auto all = vf.structure.all_edges();
        std::map<std::string, int> pos;
        for (size_t i = 0; i < all.size(); ++i) pos[all[i].label()] = static_cast<int>(i);
        vf.families.resize(all.size());
        if (all_par) vf.specs.resize(all.size());
        for (const auto& re : rows) {
            const int i = pos.at(re.edge.label());
            vf.families[i] = re.family;
            if (all_par) {
                BicopSpec sp{re.family, re.params};
                try {
                    validate_spec(sp);
                } catch (const Error& e) {
                    fail(re.where, e.what());
                }
                vf.specs[i] = std::move(sp);
            }
        }
    }
    return vf;
}

VineFile load_vine_file(const std::string& path) {
    try {
        return parse_vine_text(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

RVineModel load_model(const std::string& path) {
    VineFile vf = load_vine_file(path);
    if (!vf.has_params)
        throw ParseError(path + ": model file needs family= and params= on every edge");
    return RVineModel(std::move(vf.structure), std::move(vf.specs));
}

namespace {

std::string format_edge(const VineEdge& e, const BicopFamily* fam,
                        const std::vector<double>* params) {
    std::string out = "tree=" + std::to_string(e.level());
    out += " cond=" + std::to_string(e.car1) + "," + std::to_string(e.car2);
    out += " given=" + join_ints(e.given);
    if (fam) out += " family=" + family_code(*fam);
    if (params) out += " params=" + join_doubles(*params);
    out += "\n";
    return out;
}

} // namespace

std::string format_model(const RVineModel& m) {
    std::string out = "d=" + std::to_string(m.dim()) + "\n";
    for (const auto& ep : m.plan())
        out += format_edge(ep.edge, &ep.spec.family, &ep.spec.params);
    return out;
}

std::string format_skeleton(const RVineStructure& s,
                            const std::vector<BicopFamily>& families) {
    const auto edges = s.all_edges();
    if (families.size() != edges.size())
        throw InvalidParameter("format_skeleton: one family per edge required");
    std::string out = "d=" + std::to_string(s.dim) + "\n";
    for (size_t i = 0; i < edges.size(); ++i)
        out += format_edge(edges[i], &families[i], nullptr);
    return out;
}

std::string format_structure(const RVineStructure& s) {
    std::string out = "d=" + std::to_string(s.dim) + "\n";
    for (const auto& e : s.all_edges()) out += format_edge(e, nullptr, nullptr);
    return out;
}

void save_text(const std::string& text, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out) throw DomainError("write to '" + path + "' failed");
}

// ======================= samples =======================

Eigen::MatrixXd load_matrix_csv(const std::string& path, bool header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string line;
    int line_no = 0;
    bool want_header = header;
    size_t ncol = 0;
    std::vector<double> data;
    size_t nrow = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::string where = path + " line " + std::to_string(line_no);
        const auto parts = split(line, ',');
        if (want_header) {
            want_header = false;
            ncol = parts.size();
            double dummy;
            bool all_numeric = true;
            for (const auto& p : parts) all_numeric &= try_parse_double(p, dummy);
            if (all_numeric)
                fail(where, "first line looks like data; expected a header row");
            continue;
        }
        if (ncol == 0) ncol = parts.size();
        if (parts.size() != ncol)
            fail(where, "expected " + std::to_string(ncol) + " columns, got " +
                            std::to_string(parts.size()));
        for (const auto& p : parts) data.push_back(parse_double(p, where, "value"));
        ++nrow;
    }
    if (nrow == 0) throw ParseError(path + ": no data rows");
    Eigen::MatrixXd m(nrow, ncol);
    for (size_t i = 0; i < nrow; ++i)
        for (size_t j = 0; j < ncol; ++j) m(i, j) = data[i * ncol + j];
    return m;
}

void save_matrix_csv(const Eigen::MatrixXd& m,
                     const std::vector<std::string>& header,
                     const std::string& path) {
    if (!header.empty() && static_cast<Eigen::Index>(header.size()) != m.cols())
        throw InvalidParameter("save_matrix_csv: header size does not match columns");
    std::string out;
    if (!header.empty()) {
        for (size_t j = 0; j < header.size(); ++j) {
            if (j) out += ",";
            out += header[j];
        }
        out += "\n";
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ",";
            out += fmt_full(m(i, j));
        }
        out += "\n";
    }
    save_text(out, path);
}

CopulaSample load_sample_csv(const std::string& path) {
    Eigen::MatrixXd m = load_matrix_csv(path, true);
    try {
        return CopulaSample(std::move(m));
    } catch (const Error& e) {
        throw DomainError(path + ": " + e.what());
    }
}

void save_sample_csv(const CopulaSample& s, const std::string& path) {
    std::vector<std::string> header;
    header.reserve(s.d());
    for (Eigen::Index j = 0; j < s.d(); ++j)
        header.push_back("u" + std::to_string(j + 1));
    save_matrix_csv(s.u, header, path);
}

// ======================= result JSON =======================

std::string gof_result_json(const GofResult& r) {
    json j;
    j["statistic"] = r.statistic;
    j["dof"] = r.dof;
    j["p_asymptotic"] = r.p_asymptotic;
    j["p_bootstrap"] = r.p_bootstrap ? json(*r.p_bootstrap) : json(nullptr);
    j["regularized"] = r.regularized;
    j["v_condition"] = r.v_condition;
    j["n"] = r.n;
    j["p"] = r.p;
    j["B"] = r.bootstrap_B ? json(*r.bootstrap_B) : json(nullptr);
    j["N"] = r.bootstrap_N ? json(*r.bootstrap_N) : json(nullptr);
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    return j.dump(2) + "\n";
}

std::string fit_report_json(const std::string& model_path, double loglik, int p,
                            Eigen::Index n, bool converged, int iterations) {
    json j;
    j["model"] = model_path;
    j["loglik"] = loglik;
    j["num_params"] = p;
    j["n"] = static_cast<long long>(n);
    j["aic"] = -2.0 * loglik + 2.0 * p;
    j["bic"] = -2.0 * loglik + p * std::log(static_cast<double>(n));
    j["converged"] = converged;
    j["iterations"] = iterations;
    return j.dump(2) + "\n";
}

std::string margins_json(const std::vector<MarginalModel>& ms) {
    json arr = json::array();
    for (size_t i = 0; i < ms.size(); ++i) {
        json j;
        j["column"] = i + 1;
        j["family"] = margin_family_code(ms[i].family);
        j["params"] = ms[i].params;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

// ======================= study outputs =======================

namespace {

std::string pvalue_mode_code(PvalueMode m) {
    switch (m) {
        case PvalueMode::Simulated: return "simulated";
        case PvalueMode::Asymptotic: return "asymptotic";
        default: return "both";
    }
}

} // namespace

std::string study_summary_json(const StudyResult& res) {
    json j;
    j["study"] = res.name;
    j["n"] = res.n;
    j["R"] = res.R;
    j["seed"] = res.seed;
    j["margins"] = margins_code(res.margins);
    j["pvalues"] = pvalue_mode_code(res.pvalue_mode);

    json arms = json::array();
    const auto arm_entry = [](const ArmResult& a) {
        json e;
        e["name"] = a.name;
        e["replicates"] = a.stats.size();
        e["failures"] = a.failures;
        return e;
    };
    arms.push_back(arm_entry(res.m1));
    for (const auto& a : res.m2) arms.push_back(arm_entry(a));
    j["arms"] = std::move(arms);

    json summary = json::array();
    for (const auto& row : res.summary) {
        json e;
        e["arm"] = row.arm;
        e["pvalues"] = row.asymptotic ? "asymptotic" : "simulated";
        e["power"] = {{"0.01", row.at_01}, {"0.05", row.at_05}, {"0.10", row.at_10}};
        summary.push_back(std::move(e));
    }
    j["summary"] = std::move(summary);
    return j.dump(2) + "\n";
}

void write_study_outputs(const StudyResult& res, const std::string& outdir) {
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw DomainError("cannot create directory '" + outdir + "': " + ec.message());
    const auto path = [&](const char* name) {
        return (std::filesystem::path(outdir) / name).string();
    };

    // statistics.csv: one row per successful replicate and arm
    std::string stats = "replicate,arm,t,p_asy,p_sim\n";
    const auto dump_arm = [&](const ArmResult& a) {
        for (size_t i = 0; i < a.stats.size(); ++i) {
            stats += std::to_string(a.replicate[i]) + "," + sanitize_column(a.name) +
                     "," + fmt_full(a.stats[i]) + "," + fmt_full(a.p_asy[i]) + ",";
            stats += i < a.p_sim.size() ? fmt_full(a.p_sim[i]) : std::string("nan");
            stats += "\n";
        }
    };
    dump_arm(res.m1);
    for (const auto& a : res.m2) dump_arm(a);
    save_text(stats, path("statistics.csv"));

    // curves.csv: empirical cdf of the p-values on the alpha grid. Simulated
    // curves carry plain names; asymptotic ones get an _asy suffix when both
    // are present.
    const CurveData* sim = res.curves_sim.alpha.empty() ? nullptr : &res.curves_sim;
    const CurveData* asy = res.curves_asy.alpha.empty() ? nullptr : &res.curves_asy;
    const CurveData* base = sim ? sim : asy;
    if (base) {
        const bool suffix = sim && asy;
        std::string head = "alpha,F_M1";
        for (const auto& nm : base->names) head += ",F_" + sanitize_column(nm);
        if (suffix) {
            head += ",F_M1_asy";
            for (const auto& nm : asy->names) head += ",F_" + sanitize_column(nm) + "_asy";
        }
        std::string body;
        char a3[16];
        for (size_t i = 0; i < base->alpha.size(); ++i) {
            std::snprintf(a3, sizeof a3, "%.3f", base->alpha[i]);
            std::string row = a3;
            row += "," + fmt_short(base->f_m1[i]);
            for (const auto& c : base->f_m2) row += "," + fmt_short(c[i]);
            if (suffix) {
                row += "," + fmt_short(asy->f_m1[i]);
                for (const auto& c : asy->f_m2) row += "," + fmt_short(c[i]);
            }
            body += row + "\n";
        }
        save_text(head + "\n" + body, path("curves.csv"));
    }

    save_text(study_summary_json(res), path("study.json"));
}

} // namespace vinegof
