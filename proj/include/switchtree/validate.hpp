#pragma once

// Structural conditions on the cost data and the martingale-family
// machinery that keeps signed switching costs from admitting arbitrage:
// a family M_{i,j} of martingales dominated by the costs, whose existence
// bounds the total cost paid by any admissible strategy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snell.hpp"
#include "switching.hpp"
#include "tree.hpp"

namespace switchtree {

/**
 * Checks the standing conditions on the cost data:
 *   cost-diagonal        gamma_{i,i} must be exactly 0 everywhere
 *   cost-triangle        gamma_{i,k}(v) < gamma_{i,j}(v) + gamma_{j,k}(v)
 *                        for i != j, j != k at every node (margin 1e-12;
 *                        i == k allowed, ruling out free 2-cycles)
 *   terminal-consistency Gamma_i(leaf) >= max_{j != i}(Gamma_j(leaf) -
 *                        gamma_{i,j}(leaf)) - 1e-12: ending a switch at the
 *                        horizon can never beat holding the mode
 */
inline std::vector<Violation> check_assumption_costs(const SwitchingProblem& problem) {
    constexpr double margin = 1e-12;
    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    std::vector<Violation> out;
    for (NodeId v = 0; v < tree.node_count(); ++v) {
        if (!tree.has_node(v)) continue;
        for (int i = 1; i <= m; ++i) {
            if (problem.gamma(i, i)[v] != 0.0)
                out.push_back({"cost-diagonal", v, i, i, 0,
                               "gamma_{i,i} = " + std::to_string(problem.gamma(i, i)[v]) +
                                   ", expected 0"});
        }
        for (int i = 1; i <= m; ++i)
            for (int j = 1; j <= m; ++j) {
                if (j == i) continue;
                for (int k = 1; k <= m; ++k) {
                    if (k == j) continue;
                    const double direct = problem.gamma(i, k)[v];
                    const double via = problem.gamma(i, j)[v] + problem.gamma(j, k)[v];
                    if (direct >= via - margin)
                        out.push_back({"cost-triangle", v, i, j, k,
                                       "gamma_{i,k} = " + std::to_string(direct) +
                                           " not strictly below the detour through " +
                                           std::to_string(j) + " (" + std::to_string(via) +
                                           ")"});
                }
            }
        if (tree.is_leaf(v)) {
            for (int i = 1; i <= m; ++i) {
                double best = -std::numeric_limits<double>::infinity();
                int best_j = 0;
                for (int j = 1; j <= m; ++j) {
                    if (j == i) continue;
                    const double cand = problem.terminal(j, v) - problem.gamma(i, j)[v];
                    if (cand > best) {
                        best = cand;
                        best_j = j;
                    }
                }
                if (problem.terminal(i, v) < best - margin)
                    out.push_back({"terminal-consistency", v, i, best_j, 0,
                                   "terminal reward " +
                                       std::to_string(problem.terminal(i, v)) +
                                       " beaten by switching into mode " +
                                       std::to_string(best_j) + " (value " +
                                       std::to_string(best) + ")"});
            }
        }
    }
    return out;
}

/** m x m family of adapted processes, indexed 1-based like the costs. */
struct MartingaleFamily {
    int m = 0;
    std::vector<AdaptedProcess> entries;  // row-major (i-1)*m + (j-1)
    const AdaptedProcess& at(int i, int j) const { return entries[(i - 1) * m + (j - 1)]; }
};

enum class MartingaleCase {
    martingale_costs,   // the costs are martingales themselves: M = -gamma
    nonnegative_costs,  // costs never negative: M = 0 works
    two_mode,           // m == 2: Doob-Meyer decomposition of the cost envelopes
};

inline const char* to_string(MartingaleCase c) {
    switch (c) {
        case MartingaleCase::martingale_costs: return "martingale costs";
        case MartingaleCase::nonnegative_costs: return "non-negative costs";
        case MartingaleCase::two_mode: return "two-mode Doob-Meyer";
    }
    return "unknown";
}

struct ConstructedFamily {
    MartingaleCase kind;
    MartingaleFamily family;
};

/**
 * Builds a dominating martingale family for the recognized cost shapes,
 * trying in order:
 *   1. m == 2: always constructible. -gamma_{1,2} and -gamma_{2,1} have
 *      Snell envelopes (smallest dominating supermartingales); their Doob
 *      martingale parts dominate -gamma, i.e. M_{i,j} >= -gamma_{i,j}, and
 *      M_{1,1} = M_{2,2} = M_{1,2} + M_{2,1} closes the family's triangle
 *      conditions.
 *   2. Every off-diagonal cost already a martingale: M_{i,j} = -gamma_{i,j}.
 *   3. Every off-diagonal cost non-negative everywhere: M = 0.
 * Returns std::nullopt when no recipe applies (not an error: the bound may
 * still hold, there is just no certificate to check).
 */
inline std::optional<ConstructedFamily> construct_martingale_family(
    const SwitchingProblem& problem) {
    const int m = problem.mode_count();
    const TreePtr& tree = problem.tree_ptr();
    if (m == 2) {
        MartingaleFamily fam;
        fam.m = 2;
        auto neg = [&](int i, int j) {
            std::vector<double> v(tree->node_count(), 0.0);
            for (NodeId id = 0; id < tree->node_count(); ++id)
                v[id] = -problem.gamma(i, j)[id];
            return AdaptedProcess(tree, std::move(v));
        };
        const AdaptedProcess m12 =
            doob_decompose(snell_envelope(neg(1, 2))).martingale;
        const AdaptedProcess m21 =
            doob_decompose(snell_envelope(neg(2, 1))).martingale;
        std::vector<double> diag(tree->node_count(), 0.0);
        for (NodeId id = 0; id < tree->node_count(); ++id) diag[id] = m12[id] + m21[id];
        AdaptedProcess m_diag(tree, std::move(diag));
        fam.entries = {m_diag, m12, m21, m_diag};
        return ConstructedFamily{MartingaleCase::two_mode, std::move(fam)};
    }
    bool all_martingale = true;
    bool all_nonneg = true;
    for (int i = 1; i <= m && (all_martingale || all_nonneg); ++i)
        for (int j = 1; j <= m && (all_martingale || all_nonneg); ++j) {
            if (i == j) continue;
            const AdaptedProcess& g = problem.gamma(i, j);
            if (all_martingale && !is_martingale(g, 1e-12)) all_martingale = false;
            if (all_nonneg)
                for (NodeId id = 0; id < tree->node_count(); ++id)
                    if (g[id] < 0.0) {
                        all_nonneg = false;
                        break;
                    }
        }
    if (all_martingale) {
        MartingaleFamily fam;
        fam.m = m;
        fam.entries.reserve(m * m);
        for (int i = 1; i <= m; ++i)
            for (int j = 1; j <= m; ++j) {
                std::vector<double> v(tree->node_count(), 0.0);
                if (i != j)
                    for (NodeId id = 0; id < tree->node_count(); ++id)
                        v[id] = -problem.gamma(i, j)[id];
                fam.entries.emplace_back(tree, std::move(v));
            }
        return ConstructedFamily{MartingaleCase::martingale_costs, std::move(fam)};
    }
    if (all_nonneg) {
        MartingaleFamily fam;
        fam.m = m;
        fam.entries.reserve(m * m);
        for (int k = 0; k < m * m; ++k)
            fam.entries.push_back(AdaptedProcess::constant(tree, 0.0));
        return ConstructedFamily{MartingaleCase::nonnegative_costs, std::move(fam)};
    }
    return std::nullopt;
}

/**
 * Verifies that a family certifies the cost bound (tolerance 1e-12):
 *   martingale-property  each M_{i,j} is a martingale
 *   finite               every entry finite at every node
 *   cost-domination      M_{i,j} >= -gamma_{i,j} off the diagonal
 *   family-triangle      M_{i,j} + M_{j,k} <= M_{i,k} node-wise for
 *                        i != j, j != k (i == k included: no round trip
 *                        through j may profit against the diagonal entry)
 */
inline std::vector<Violation> check_hypothesis_m(const MartingaleFamily& family,
                                                 const SwitchingProblem& problem) {
    constexpr double tol = 1e-12;
    const ScenarioTree& tree = problem.tree();
    const int m = family.m;
    std::vector<Violation> out;
    if (m != problem.mode_count()) {
        out.push_back({"family-shape", -1, m, problem.mode_count(), 0,
                       "family mode count differs from the problem's"});
        return out;
    }
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j) {
            const AdaptedProcess& M = family.at(i, j);
            for (NodeId v = 0; v < tree.node_count(); ++v)
                if (!std::isfinite(M[v])) {
                    out.push_back({"finite", v, i, j, 0, "family entry is not finite"});
                    break;
                }
            for (int t = 0; t < tree.horizon_steps(); ++t)
                for (NodeId v : tree.nodes_at_time(t)) {
                    if (tree.is_leaf(v)) continue;
                    const double gap = one_step_expectation(M, v) - M[v];
                    if (std::abs(gap) > tol) {
                        out.push_back({"martingale-property", v, i, j, 0,
                                       "E[M|node] - M = " + std::to_string(gap)});
                        t = tree.horizon_steps();  // one report per entry
                        break;
                    }
                }
            if (i != j) {
                for (NodeId v = 0; v < tree.node_count(); ++v)
                    if (family.at(i, j)[v] < -problem.gamma(i, j)[v] - tol) {
                        out.push_back({"cost-domination", v, i, j, 0,
                                       "M_{i,j} = " + std::to_string(family.at(i, j)[v]) +
                                           " < -gamma_{i,j} = " +
                                           std::to_string(-problem.gamma(i, j)[v])});
                        break;
                    }
            }
        }
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j) {
            if (j == i) continue;
            for (int k = 1; k <= m; ++k) {
                if (k == j) continue;
                for (NodeId v = 0; v < tree.node_count(); ++v)
                    if (family.at(i, j)[v] + family.at(j, k)[v] >
                        family.at(i, k)[v] + tol) {
                        out.push_back({"family-triangle", v, i, j, k,
                                       "M_{i,j} + M_{j,k} exceeds M_{i,k} at this node"});
                        break;
                    }
            }
        }
    return out;
}

struct CostBoundResult {
    bool holds = false;
    double worst_gap = 0.0;  // max over truncations of (lhs - rhs); <= tol when holds
};

namespace detail {

/// Per-leaf switching events of a realized strategy, with cumulative cost.
struct RealizedPath {
    const PathRealization* path;
    std::vector<const SwitchEvent*> real_events;  // cost-charging only
};

}  // namespace detail

/**
 * Checks the truncated-cost lower bound that a dominating martingale family
 * guarantees: for every truncation depth n of the strategy's switch
 * sequence,
 *   E[ sum_{k <= n} gamma_{iota_{k-1}, iota_k}(tau_k) ]
 *     >= -E[ max_{i,j} |M_{i,j}(T)| ]
 * where the switch sequence past the strategy's real switches is padded by
 * alternating phantom switches at the horizon (final mode <-> the smallest
 * other mode, costs read at the leaf). Tolerance 1e-9. `holds` is true when
 * every truncation satisfies the bound; worst_gap reports the largest
 * lhs-violation margin found (negative when the bound holds strictly).
 */
inline CostBoundResult check_cost_bound(const SwitchingProblem& problem,
                                        const Strategy& strategy,
                                        const MartingaleFamily& family) {
    constexpr double tol = 1e-9;
    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    const RealizationResult r = realize(problem, strategy);
    if (!r.violations.empty()) {
        const Violation& v = r.violations.front();
        throw std::invalid_argument("check_cost_bound: inadmissible strategy (" + v.rule +
                                    " at node " + std::to_string(v.node) + ")");
    }

    int max_real = 0;
    for (const PathRealization& p : r.paths) {
        int n = 0;
        for (const SwitchEvent& e : p.events)
            if (e.from_mode != e.to_mode) ++n;
        max_real = std::max(max_real, n);
    }

    // rhs: expected worst |M| at the horizon, conditional on the start node
    const auto pp = conditional_path_probabilities(tree, strategy.start_node);
    double rhs = 0.0;
    for (const PathRealization& p : r.paths) {
        double worst = 0.0;
        for (int i = 1; i <= m; ++i)
            for (int j = 1; j <= m; ++j)
                worst = std::max(worst, std::abs(family.at(i, j)[p.leaf]));
        rhs += pp[p.leaf] * worst;
    }

    CostBoundResult result{true, -std::numeric_limits<double>::infinity()};
    for (int n = 1; n <= max_real + 2; ++n) {
        double lhs = 0.0;
        for (const PathRealization& p : r.paths) {
            double cum = 0.0;
            int mode = strategy.start_mode;
            int used = 0;
            for (const SwitchEvent& e : p.events) {
                if (e.from_mode == e.to_mode) continue;
                if (used == n) break;
                cum += problem.gamma(e.from_mode, e.to_mode)[e.node];
                mode = e.to_mode;
                ++used;
            }
            // pad with phantom alternation at the horizon leaf
            const int other = (mode == 1) ? 2 : 1;
            int a = mode, b = other;
            while (used < n) {
                cum += problem.gamma(a, b)[p.leaf];
                std::swap(a, b);
                ++used;
            }
            lhs += pp[p.leaf] * cum;
        }
        const double gap = -lhs - rhs;  // bound demands lhs >= -rhs
        result.worst_gap = std::max(result.worst_gap, gap);
        if (gap > tol) result.holds = false;
    }
    return result;
}

/** Admissibility report: realize the strategy and return its defects. */
inline std::vector<Violation> check_admissible(const Strategy& strategy,
                                               const SwitchingProblem& problem) {
    return realize(problem, strategy).violations;
}

}  // namespace switchtree
