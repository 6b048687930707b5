#include "vinegof/structure.hpp"
#include "vinegof/errors.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace vinegof {

VineEdge::VineEdge(int a, int b, std::vector<int> d)
    : car1(std::min(a, b)), car2(std::max(a, b)), given(std::move(d)) {
    std::sort(given.begin(), given.end());
}

std::vector<int> VineEdge::constraint() const {
    std::vector<int> c = given;
    c.push_back(car1);
    c.push_back(car2);
    std::sort(c.begin(), c.end());
    return c;
}

std::string VineEdge::label() const {
    std::ostringstream os;
    os << car1 << "," << car2;
    if (!given.empty()) {
        os << "|";
        for (std::size_t i = 0; i < given.size(); ++i) {
            if (i) os << ",";
            os << given[i];
        }
    }
    return os.str();
}

RVineStructure RVineStructure::from_edges(int dim,
                                          const std::vector<VineEdge>& edges) {
    RVineStructure s;
    s.dim = dim;
    if (dim < 2) throw StructureError("from_edges: dimension must be >= 2");
    s.trees.assign(dim - 1, {});
    std::set<std::string> seen;
    for (const VineEdge& e : edges) {
        const int lvl = e.level();
        if (lvl < 1 || lvl > dim - 1)
            throw StructureError("from_edges: edge " + e.label() +
                                 " has conditioning set too large for d=" +
                                 std::to_string(dim));
        auto in_range = [dim](int v) { return v >= 1 && v <= dim; };
        if (!in_range(e.car1) || !in_range(e.car2) ||
            !std::all_of(e.given.begin(), e.given.end(), in_range))
            throw StructureError("from_edges: edge " + e.label() +
                                 " uses a variable outside 1.." +
                                 std::to_string(dim));
        if (!seen.insert(e.label()).second)
            throw StructureError("from_edges: duplicate edge " + e.label());
        s.trees[lvl - 1].push_back(e);
    }
    for (auto& tree : s.trees) {
        std::sort(tree.begin(), tree.end(),
                  [](const VineEdge& a, const VineEdge& b) {
                      if (a.car1 != b.car1) return a.car1 < b.car1;
                      if (a.car2 != b.car2) return a.car2 < b.car2;
                      return a.given < b.given;
                  });
    }
    for (int i = 0; i < dim - 1; ++i) {
        if (static_cast<int>(s.trees[i].size()) != dim - 1 - i)
            throw StructureError(
                "from_edges: tree " + std::to_string(i + 1) + " has " +
                std::to_string(s.trees[i].size()) + " edges, expected " +
                std::to_string(dim - 1 - i));
    }
    return s;
}

std::vector<VineEdge> RVineStructure::all_edges() const {
    std::vector<VineEdge> out;
    for (const auto& tree : trees) out.insert(out.end(), tree.begin(), tree.end());
    return out;
}

int RVineStructure::edge_count() const {
    int n = 0;
    for (const auto& tree : trees) n += static_cast<int>(tree.size());
    return n;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) { // false if already connected (cycle)
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

} // namespace

std::vector<std::string> validate(const RVineStructure& s) {
    std::vector<std::string> bad;
    const int d = s.dim;
    if (d < 2) {
        bad.push_back("dimension must be >= 2");
        return bad;
    }
    if (static_cast<int>(s.trees.size()) != d - 1) {
        bad.push_back("expected " + std::to_string(d - 1) + " trees, found " +
                      std::to_string(s.trees.size()));
        return bad;
    }

    // elementary per-edge checks
    for (int t = 0; t < d - 1; ++t) {
        const int expect = d - 1 - t;
        if (static_cast<int>(s.trees[t].size()) != expect)
            bad.push_back("tree " + std::to_string(t + 1) + " has " +
                          std::to_string(s.trees[t].size()) +
                          " edges, expected " + std::to_string(expect));
        for (const VineEdge& e : s.trees[t]) {
            if (e.car1 == e.car2)
                bad.push_back("edge " + e.label() + ": conditioned pair repeats a variable");
            for (int v : {e.car1, e.car2})
                if (v < 1 || v > d)
                    bad.push_back("edge " + e.label() + ": variable out of range");
            if (static_cast<int>(e.given.size()) != t)
                bad.push_back("edge " + e.label() + ": conditioning set has size " +
                              std::to_string(e.given.size()) + ", expected " +
                              std::to_string(t));
            for (int v : e.given) {
                if (v < 1 || v > d)
                    bad.push_back("edge " + e.label() + ": conditioning variable out of range");
                if (v == e.car1 || v == e.car2)
                    bad.push_back("edge " + e.label() +
                                  ": variable appears both conditioned and conditioning");
            }
        }
        // duplicate constraint sets within the tree
        std::map<std::vector<int>, int> seen;
        for (const VineEdge& e : s.trees[t]) {
            if (++seen[e.constraint()] == 2)
                bad.push_back("tree " + std::to_string(t + 1) +
                              ": duplicate edge " + e.label());
        }
    }
    if (!bad.empty()) return bad;

    // T_1 must be a spanning tree on {1..d}
    {
        UnionFind uf(d + 1);
        for (const VineEdge& e : s.trees[0]) {
            if (!uf.unite(e.car1, e.car2))
                bad.push_back("tree 1: edge " + e.label() + " closes a cycle");
        }
    }

    // child resolution + proximity per level; children[t][i] = indices into
    // level t-1 of the two edges whose constraint sets are {car}+given
    std::vector<std::vector<std::pair<int, int>>> children(d - 1);
    std::vector<std::map<std::vector<int>, int>> by_constraint(d - 1);
    for (int t = 0; t < d - 1; ++t)
        for (int i = 0; i < static_cast<int>(s.trees[t].size()); ++i)
            by_constraint[t][s.trees[t][i].constraint()] = i;

    for (int t = 1; t < d - 1; ++t) {
        children[t].assign(s.trees[t].size(), {-1, -1});
        UnionFind uf(static_cast<int>(s.trees[t - 1].size()));
        for (int i = 0; i < static_cast<int>(s.trees[t].size()); ++i) {
            const VineEdge& e = s.trees[t][i];
            auto lookup = [&](int car) -> int {
                std::vector<int> key = e.given;
                key.push_back(car);
                std::sort(key.begin(), key.end());
                auto it = by_constraint[t - 1].find(key);
                return it == by_constraint[t - 1].end() ? -1 : it->second;
            };
            const int a = lookup(e.car1);
            const int b = lookup(e.car2);
            if (a < 0 || b < 0) {
                bad.push_back("edge " + e.label() +
                              ": required edge one tree down is missing");
                continue;
            }
            children[t][i] = {a, b};
            // proximity: the two child edges must share a node of their tree
            bool share = false;
            if (t == 1) {
                const VineEdge& ea = s.trees[0][a];
                const VineEdge& eb = s.trees[0][b];
                share = ea.car1 == eb.car1 || ea.car1 == eb.car2 ||
                        ea.car2 == eb.car1 || ea.car2 == eb.car2;
            } else {
                const auto& ca = children[t - 1][a];
                const auto& cb = children[t - 1][b];
                share = ca.first == cb.first || ca.first == cb.second ||
                        ca.second == cb.first || ca.second == cb.second;
            }
            if (!share)
                bad.push_back("edge " + e.label() +
                              ": child edges do not share a node (proximity violated)");
            if (!uf.unite(a, b))
                bad.push_back("tree " + std::to_string(t + 1) + ": edge " +
                              e.label() + " closes a cycle");
        }
    }
    return bad;
}

void validate_or_throw(const RVineStructure& s) {
    const auto bad = validate(s);
    if (bad.empty()) return;
    std::string msg = "invalid vine structure:";
    for (const auto& m : bad) msg += "\n  - " + m;
    throw StructureError(msg);
}

bool is_cvine(const RVineStructure& s) {
    if (!validate(s).empty()) return false;
    // level 1: some variable must touch every edge
    for (int t = 0; t < s.dim - 1; ++t) {
        const auto& tree = s.trees[t];
        const int m = static_cast<int>(tree.size());
        if (m <= 1) continue;
        std::map<std::vector<int>, int> deg; // node = child constraint set
        for (const VineEdge& e : tree) {
            for (int car : {e.car1, e.car2}) {
                std::vector<int> key = e.given;
                key.push_back(car);
                std::sort(key.begin(), key.end());
                ++deg[key];
            }
        }
        int maxdeg = 0;
        for (const auto& [k, v] : deg) maxdeg = std::max(maxdeg, v);
        if (maxdeg != m) return false;
    }
    return true;
}

bool is_dvine(const RVineStructure& s) {
    if (!validate(s).empty()) return false;
    std::vector<int> deg(s.dim + 1, 0);
    for (const VineEdge& e : s.trees[0]) {
        ++deg[e.car1];
        ++deg[e.car2];
    }
    for (int v = 1; v <= s.dim; ++v)
        if (deg[v] > 2) return false;
    return true;
}

RVineStructure cvine_structure(const std::vector<int>& order) {
    const int d = static_cast<int>(order.size());
    std::vector<VineEdge> edges;
    for (int i = 0; i < d - 1; ++i) {
        std::vector<int> given(order.begin(), order.begin() + i);
        for (int j = i + 1; j < d; ++j)
            edges.emplace_back(order[i], order[j], given);
    }
    auto s = RVineStructure::from_edges(d, edges);
    validate_or_throw(s);
    return s;
}

RVineStructure dvine_structure(const std::vector<int>& order) {
    const int d = static_cast<int>(order.size());
    std::vector<VineEdge> edges;
    for (int len = 1; len < d; ++len) {
        for (int j = 0; j + len < d; ++j) {
            std::vector<int> given(order.begin() + j + 1, order.begin() + j + len);
            edges.emplace_back(order[j], order[j + len], given);
        }
    }
    auto s = RVineStructure::from_edges(d, edges);
    validate_or_throw(s);
    return s;
}

} // namespace vinegof
