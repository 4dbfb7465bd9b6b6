#pragma once

// Optimal stopping on a scenario tree: the smallest supermartingale
// dominating a payoff process, its decomposition into a martingale minus a
// predictable non-decreasing part, and the earliest optimal stopping rule.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tree.hpp"

namespace switchtree {

/**
 * Smallest supermartingale dominating U:
 *   Z(leaf) = U(leaf),  Z(v) = max(U(v), E[Z | v]) otherwise.
 */
inline AdaptedProcess snell_envelope(const AdaptedProcess& U) {
    const ScenarioTree& tree = U.tree();
    AdaptedProcess Z = U;  // leaves already correct
    for (int t = tree.horizon_steps() - 1; t >= 0; --t) {
        for (NodeId v : tree.nodes_at_time(t)) {
            if (tree.is_leaf(v)) continue;
            const double cont = one_step_expectation(Z, v);
            Z[v] = std::max(U[v], cont);
        }
    }
    return Z;
}

struct DoobDecomposition {
    AdaptedProcess martingale;   // M, with M(root) = Z(root)
    AdaptedProcess compensator;  // A, non-decreasing along paths, A(root) = 0
};

/**
 * Z = M - A with M a martingale and A predictable (the increment into a
 * node is fixed one step earlier, i.e. constant across siblings) and
 * non-decreasing from 0. Unique under these constraints:
 *   A(child) = A(v) + (Z(v) - E[Z | v]),  M = Z + A.
 * Throws std::invalid_argument naming the first node at which Z fails to be
 * a supermartingale by more than `tol`.
 */
inline DoobDecomposition doob_decompose(const AdaptedProcess& Z, double tol = 1e-12) {
    const ScenarioTree& tree = Z.tree();
    std::vector<double> A(tree.node_count(), 0.0), M(tree.node_count(), 0.0);
    const NodeId root = tree.root();
    M[root] = Z[root];
    for (int t = 0; t < tree.horizon_steps(); ++t) {
        for (NodeId v : tree.nodes_at_time(t)) {
            if (tree.is_leaf(v)) continue;
            const double cont = one_step_expectation(Z, v);
            const double inc = Z[v] - cont;
            if (inc < -tol)
                throw std::invalid_argument(
                    "doob_decompose: not a supermartingale at node " + std::to_string(v) +
                    " (E[Z|node] exceeds Z by " + std::to_string(-inc) + ")");
            for (NodeId c : tree.children(v)) {
                A[c] = A[v] + inc;
                M[c] = Z[c] + A[c];
            }
        }
    }
    return {AdaptedProcess(Z.tree_ptr(), std::move(M)),
            AdaptedProcess(Z.tree_ptr(), std::move(A))};
}

/**
 * A stopping rule over the whole tree: stop[v] != 0 means the rule stops
 * upon reaching v. Only nodes reachable without passing an earlier stop
 * matter; realized_stop_nodes resolves the earliest-stop semantics.
 */
struct StoppingRule {
    std::vector<std::uint8_t> stop;
};

/**
 * Earliest optimal stop for the envelope Z of U over the subtree of `from`:
 * stop where |Z - U| <= tol, and at every leaf (time runs out there).
 */
inline StoppingRule first_optimal_stop(const AdaptedProcess& Z, const AdaptedProcess& U,
                                       NodeId from, double tol = 1e-9) {
    const ScenarioTree& tree = Z.tree();
    StoppingRule rule{std::vector<std::uint8_t>(tree.node_count(), 0)};
    for (NodeId v : subtree_nodes(tree, from))
        rule.stop[v] = (tree.is_leaf(v) || std::abs(Z[v] - U[v]) <= tol) ? 1 : 0;
    return rule;
}

/// The atoms of the stopped time: nodes at which the rule first fires on
/// each path from `from`. Every path hits one since leaves always stop.
inline std::vector<NodeId> realized_stop_nodes(const ScenarioTree& tree,
                                               const StoppingRule& rule, NodeId from) {
    std::vector<NodeId> out;
    std::vector<NodeId> stack{from};
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        if (rule.stop[v] || tree.is_leaf(v)) {
            out.push_back(v);
            continue;
        }
        const auto& kids = tree.children(v);
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

/** E[U at the stopped time | from] for the given rule. */
inline double expected_value_at_stop(const AdaptedProcess& U, const StoppingRule& rule,
                                     NodeId from) {
    const ScenarioTree& tree = U.tree();
    const auto pp = conditional_path_probabilities(tree, from);
    double acc = 0.0;
    for (NodeId v : realized_stop_nodes(tree, rule, from)) acc += pp[v] * U[v];
    return acc;
}

/**
 * The process frozen at the stopping rule: on the subtree of `from`, values
 * past a stop node repeat the stop-node value. Outside the subtree the
 * input is passed through.
 */
inline AdaptedProcess stopped_process(const AdaptedProcess& Z, const StoppingRule& rule,
                                      NodeId from) {
    const ScenarioTree& tree = Z.tree();
    AdaptedProcess out = Z;
    // frozen[v]: a stop at or above v froze the value flowing into v
    std::vector<std::uint8_t> frozen(tree.node_count(), 0);
    for (NodeId v : subtree_nodes(tree, from)) {
        if (frozen[v]) {
            for (NodeId c : tree.children(v)) {
                frozen[c] = 1;
                out[c] = out[v];
            }
        } else if (rule.stop[v]) {
            for (NodeId c : tree.children(v)) {
                frozen[c] = 1;
                out[c] = out[v];
            }
        }
    }
    return out;
}

/** True when E[proc | v] equals proc at every interior node, within tol. */
inline bool is_martingale(const AdaptedProcess& proc, double tol = 1e-9) {
    const ScenarioTree& tree = proc.tree();
    for (int t = 0; t < tree.horizon_steps(); ++t)
        for (NodeId v : tree.nodes_at_time(t)) {
            if (tree.is_leaf(v)) continue;
            if (std::abs(one_step_expectation(proc, v) - proc[v]) > tol) return false;
        }
    return true;
}

}  // namespace switchtree
