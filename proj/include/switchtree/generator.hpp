#pragma once

// Seeded random problem generator. Instances are built so that the cost
// checks pass by construction:
//
//   gamma_{i,j}(v) = b_i(v) - b_j(v) + c_i(v) + c_j(v)   for i != j
//
// with potentials b_i and strictly positive frictions c_i, which makes
//   gamma_{i,j} + gamma_{j,k} - gamma_{i,k} = 2 c_j > 0
// (strict triangle inequality, i = k included). Terminal rewards take
//   Gamma_i(leaf) = -b_i(leaf) + d(leaf) + e_i(leaf)
// with 0 <= e_i < min_j c_j(leaf), so that switching at the horizon never
// beats holding: Gamma_j - gamma_{i,j} - Gamma_i = e_j - e_i - c_i - c_j < 0.
//
// Every draw comes from one mt19937_64 stream in a documented order (per
// node in id order: psi_1..psi_m, b_1..b_m, c_1..c_m; then per leaf in id
// order: d, e_1..e_m), with an explicit bits-to-double mapping, so a seed
// fully determines the instance across platforms and standard libraries.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "switching.hpp"
#include "tree.hpp"

namespace switchtree {

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
/// std::uniform_real_distribution is implementation-defined; this is not.
inline double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_draw(std::mt19937_64& rng, double lo, double hi) {
    return lo + unit_draw(rng) * (hi - lo);
}

}  // namespace detail

struct GenOptions {
    std::uint64_t seed = 1;
    int depth = 2;      // time steps: leaves sit at this depth
    int branching = 2;  // children per interior node
    int modes = 2;
    double dt = 1.0;
};

/// Full branching^depth tree with equal sibling probabilities, ids in
/// level order (time slices are contiguous id ranges).
inline TreePtr generate_tree(int depth, int branching, double dt) {
    if (depth < 0) throw std::invalid_argument("generate_tree: depth must be >= 0");
    if (branching < 1) throw std::invalid_argument("generate_tree: branching must be >= 1");
    std::vector<NodeRecord> records;
    records.push_back({0, 0, no_parent, 1.0});
    const double p = 1.0 / branching;
    NodeId next = 1;
    NodeId level_begin = 0;
    for (int t = 0; t < depth; ++t) {
        const NodeId level_end = next;
        for (NodeId v = level_begin; v < level_end; ++v)
            for (int b = 0; b < branching; ++b) records.push_back({next++, t + 1, v, p});
        level_begin = level_end;
    }
    return make_tree(std::move(records), depth, dt);
}

/// Deterministic random instance for the given options; the same options
/// always produce the same problem, node for node.
inline SwitchingProblem generate_problem(const GenOptions& opts) {
    if (opts.modes < 2) throw std::invalid_argument("generate_problem: need >= 2 modes");
    const TreePtr tree = generate_tree(opts.depth, opts.branching, opts.dt);
    const int n = tree->node_count();
    const int m = opts.modes;
    std::mt19937_64 rng(opts.seed);

    std::vector<std::vector<double>> psi(m, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> b(m, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> c(m, std::vector<double>(n, 0.0));
    for (NodeId v = 0; v < n; ++v) {
        for (int i = 0; i < m; ++i) psi[i][v] = detail::uniform_draw(rng, -1.0, 1.0);
        for (int i = 0; i < m; ++i) b[i][v] = detail::uniform_draw(rng, -0.5, 0.5);
        for (int i = 0; i < m; ++i) c[i][v] = detail::uniform_draw(rng, 0.05, 0.45);
    }
    std::vector<std::vector<double>> terminal(m, std::vector<double>(n, 0.0));
    for (NodeId v = 0; v < n; ++v) {
        if (!tree->is_leaf(v)) continue;
        double c_min = c[0][v];
        for (int i = 1; i < m; ++i) c_min = std::min(c_min, c[i][v]);
        const double d = detail::uniform_draw(rng, -1.0, 1.0);
        for (int i = 0; i < m; ++i)
            terminal[i][v] = -b[i][v] + d + detail::uniform_draw(rng, 0.0, c_min);
    }

    std::vector<AdaptedProcess> psi_procs;
    psi_procs.reserve(m);
    for (int i = 0; i < m; ++i) psi_procs.emplace_back(tree, psi[i]);
    std::vector<AdaptedProcess> gamma;
    gamma.reserve(m * m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            std::vector<double> g(n, 0.0);
            if (i != j)
                for (NodeId v = 0; v < n; ++v)
                    g[v] = b[i][v] - b[j][v] + c[i][v] + c[j][v];
            gamma.emplace_back(tree, std::move(g));
        }
    return SwitchingProblem(tree, std::move(psi_procs), std::move(gamma),
                            std::move(terminal));
}

}  // namespace switchtree
