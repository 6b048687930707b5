#pragma once
#include <string>
#include <vector>

// Regular-vine tree structures. A structure on d variables is a sequence of
// trees T_1..T_{d-1}: T_1 spans {1..d}; the nodes of T_i (i >= 2) are the
// edges of T_{i-1}; two nodes may be joined only if, as edges of T_{i-1},
// they share a common node (proximity). Each edge carries a conditioned pair
// and a conditioning set; variables are 1-based.

namespace vinegof {

struct VineEdge {
    int car1 = 0, car2 = 0;      // conditioned pair, canonicalised car1 < car2
    std::vector<int> given;      // conditioning set, sorted ascending

    VineEdge() = default;
    VineEdge(int a, int b, std::vector<int> d = {});

    int level() const { return static_cast<int>(given.size()) + 1; }
    // conditioned pair plus conditioning set, sorted (the "constraint set")
    std::vector<int> constraint() const;
    std::string label() const;   // e.g. "2,5|1,3,4"
    bool operator==(const VineEdge&) const = default;
};

struct RVineStructure {
    int dim = 0;
    std::vector<std::vector<VineEdge>> trees; // trees[i] holds level i+1

    // Groups edges by conditioning-set size, sorts each tree canonically
    // (by conditioned pair, then conditioning set) and checks only the
    // element counts; call validate() for the full structural check.
    static RVineStructure from_edges(int dim, const std::vector<VineEdge>& edges);

    std::vector<VineEdge> all_edges() const; // canonical order, level-major
    int edge_count() const;                  // d(d-1)/2 for a full structure
};

// Full structural check; returns human-readable violations (empty == valid):
// element counts per tree, spanning-tree property of T_1, existence of both
// child edges one level down, the proximity condition, and acyclicity /
// connectivity of every tree.
std::vector<std::string> validate(const RVineStructure& s);
void validate_or_throw(const RVineStructure& s); // StructureError on failure

// C-vine: every tree is a star. D-vine: T_1 is a path.
bool is_cvine(const RVineStructure& s);
bool is_dvine(const RVineStructure& s);

// Convenience constructors used by tests and fixtures.
RVineStructure cvine_structure(const std::vector<int>& order); // roots first
RVineStructure dvine_structure(const std::vector<int>& order); // path order

} // namespace vinegof
