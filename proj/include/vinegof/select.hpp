#pragma once
#include "vinegof/model.hpp"

#include <vector>

// Structure and family selection. select_mst builds the trees greedily: on
// each level it takes the spanning tree maximising the sum of absolute
// empirical Kendall's tau over the proximity-admissible pairs, fits every
// chosen edge's family by an information criterion, h-transforms the data
// and recurses. select_families keeps a prescribed structure and only picks
// the families edge by edge.

namespace vinegof {

enum class SelectCriterion { AIC, BIC };

// fitted StudentT edges with nu at or above this are replaced by their Gauss fit
inline constexpr double kStudentNuGaussCollapse = 30.0;

// gauss, t, frank, clayton/gumbel/joe in all four rotations
std::vector<BicopFamily> default_family_set();

// Candidate admissible for a pair with empirical tau: one-sided families
// (Clayton/Gumbel/Joe) must match the sign (rotations 0/180 for tau >= 0,
// 90/270 for tau <= 0); symmetric families always qualify.
bool family_admissible(BicopFamily fam, double tau);

// single-edge family choice on pseudo-data columns; exposed for tests
BicopSpec choose_family(const std::vector<double>& a,
                        const std::vector<double>& b,
                        const std::vector<BicopFamily>& family_set,
                        SelectCriterion criterion);

RVineModel select_mst(const CopulaSample& sample,
                      const std::vector<BicopFamily>& family_set,
                      SelectCriterion criterion = SelectCriterion::AIC);

RVineModel select_families(const RVineStructure& structure,
                           const CopulaSample& sample,
                           const std::vector<BicopFamily>& family_set,
                           SelectCriterion criterion = SelectCriterion::AIC);

} // namespace vinegof
