#pragma once
#include "vinegof/gof.hpp"
#include "vinegof/margins.hpp"
#include "vinegof/model.hpp"
#include "vinegof/power.hpp"

#include <string>
#include <vector>

// File formats.
//
// Vine specification (line-oriented text): a `d=<int>` header, then one line
// per edge:
//   tree=<i> cond=<j>,<k> given=<comma list> family=<code> params=<comma list>
// `given=` is empty in tree 1; `family=`/`params=` may be omitted for
// structure-only or skeleton files; '#' starts a comment. Family codes are
// those of family_code(), e.g. "gauss", "t", "gumbel@270".
//
// Samples: CSV with header u1,...,ud, one observation per row, full double
// precision on write.

namespace vinegof {

struct VineFile {
    RVineStructure structure;
    std::vector<BicopFamily> families; // parallel to structure.all_edges()
    std::vector<BicopSpec> specs;      // parallel, only if has_params
    bool has_families = false;
    bool has_params = false;
};

VineFile parse_vine_text(const std::string& text);
VineFile load_vine_file(const std::string& path);
RVineModel load_model(const std::string& path); // requires params on every edge
std::string format_model(const RVineModel& m);
std::string format_skeleton(const RVineStructure& s,
                            const std::vector<BicopFamily>& families);
std::string format_structure(const RVineStructure& s);
void save_text(const std::string& text, const std::string& path);

CopulaSample load_sample_csv(const std::string& path);
void save_sample_csv(const CopulaSample& s, const std::string& path);

Eigen::MatrixXd load_matrix_csv(const std::string& path, bool header = true);
void save_matrix_csv(const Eigen::MatrixXd& m,
                     const std::vector<std::string>& header,
                     const std::string& path);

std::string gof_result_json(const GofResult& r);
std::string fit_report_json(const std::string& model_path, double loglik,
                            int p, Eigen::Index n, bool converged,
                            int iterations);
std::string margins_json(const std::vector<MarginalModel>& ms);
std::string study_summary_json(const StudyResult& res);

// writes statistics.csv, curves.csv and study.json into outdir
void write_study_outputs(const StudyResult& res, const std::string& outdir);

} // namespace vinegof
