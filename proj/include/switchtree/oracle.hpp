#pragma once

// Brute-force cross-checks for the switching solver: exhaustive policy
// enumeration (no dynamic programming, no reuse of the solver's recursion)
// and numerical verification of the cumulative-cost identity and the
// discrete martingale bounds behind it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snell.hpp"
#include "switching.hpp"
#include "tree.hpp"

namespace switchtree {

struct EnumerationGuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Size of the abstract policy space: maps (node, current mode) -> next
/// mode, i.e. m^(node_count * m). nullopt when it overflows 64 bits.
inline std::optional<std::uint64_t> policy_count(const SwitchingProblem& problem) {
    const std::uint64_t m = static_cast<std::uint64_t>(problem.mode_count());
    const std::uint64_t slots =
        static_cast<std::uint64_t>(problem.tree().node_count()) * m;
    std::uint64_t count = 1;
    for (std::uint64_t s = 0; s < slots; ++s) {
        if (count > std::numeric_limits<std::uint64_t>::max() / m) return std::nullopt;
        count *= m;
    }
    return count;
}

inline constexpr std::uint64_t enumeration_guard = std::uint64_t{1} << 24;

namespace detail {

inline void require_within_guard(const SwitchingProblem& problem) {
    const auto count = policy_count(problem);
    if (!count || *count > enumeration_guard)
        throw EnumerationGuardError(
            "policy space exceeds 2^24 maps; use a smaller tree or fewer modes");
}

/// Interior nodes of the subtree under `from`, parents before children.
inline std::vector<NodeId> interior_preorder(const ScenarioTree& tree, NodeId from) {
    std::vector<NodeId> out;
    for (NodeId v : subtree_nodes(tree, from))
        if (!tree.is_leaf(v)) out.push_back(v);
    return out;
}

/// Enumerates every distinct realized behavior of an adapted policy from
/// (start, mode): an outgoing-mode label per interior node, pruned to
/// per-path switch counts <= max_switches. Labels span all adapted pure
/// policies because a tree node encodes its whole history. Calls sink once
/// per complete labeling.
template <typename Sink>
void enumerate_labelings(const SwitchingProblem& problem, NodeId start, int start_mode,
                         int max_switches, Sink&& sink) {
    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    const std::vector<NodeId> order = interior_preorder(tree, start);
    std::vector<int> chosen(tree.node_count(), 0);   // outgoing mode per interior node
    std::vector<int> used(tree.node_count(), 0);     // switches on the path up to v, inclusive
    const auto rec = [&](auto&& self, std::size_t idx) -> void {
        if (idx == order.size()) {
            sink(static_cast<const std::vector<int>&>(chosen));
            return;
        }
        const NodeId v = order[idx];
        const NodeId parent = tree.node(v).parent;
        const int inc = (v == start) ? start_mode : chosen[parent];
        const int used_before = (v == start) ? 0 : used[parent];
        for (int j = 1; j <= m; ++j) {
            const int total = used_before + (j != inc ? 1 : 0);
            if (total > max_switches) continue;
            chosen[v] = j;
            used[v] = total;
            self(self, idx + 1);
        }
    };
    rec(rec, 0);
}

/// Expected payoff of a labeling from (start, mode): rewards in the chosen
/// modes, costs where the label differs from the incoming mode, terminal
/// reward in the mode that reaches each leaf.
inline double labeling_value(const SwitchingProblem& problem, NodeId start, int start_mode,
                             const std::vector<int>& chosen) {
    const ScenarioTree& tree = problem.tree();
    const double dt = problem.dt();
    const auto pp = conditional_path_probabilities(tree, start);
    double acc = 0.0;
    for (NodeId v : subtree_nodes(tree, start)) {
        if (tree.is_leaf(v)) {
            const int inc = (v == start) ? start_mode : chosen[tree.node(v).parent];
            acc += pp[v] * problem.terminal(inc, v);
            continue;
        }
        const int inc = (v == start) ? start_mode : chosen[tree.node(v).parent];
        const int out = chosen[v];
        double local = problem.psi(out)[v] * dt;
        if (out != inc) local -= problem.gamma(inc, out)[v];
        acc += pp[v] * local;
    }
    return acc;
}

/// Converts a labeling into the equivalent Strategy: the k-th switch on
/// each path becomes decision k's stop node and target.
inline Strategy labeling_to_strategy(const SwitchingProblem& problem, NodeId start,
                                     int start_mode, const std::vector<int>& chosen) {
    const ScenarioTree& tree = problem.tree();
    Strategy strat;
    strat.start_node = start;
    strat.start_mode = start_mode;
    struct Item {
        NodeId node;
        int mode;
        int switches;
    };
    std::vector<Item> stack{{start, start_mode, 0}};
    while (!stack.empty()) {
        Item it = stack.back();
        stack.pop_back();
        if (tree.is_leaf(it.node)) continue;
        int mode = it.mode;
        int k = it.switches;
        const int out = chosen[it.node];
        if (out != mode) {
            while (static_cast<int>(strat.decisions.size()) <= k)
                strat.decisions.push_back(
                    {StoppingRule{std::vector<std::uint8_t>(tree.node_count(), 0)},
                     std::vector<int>(tree.node_count(), 0)});
            strat.decisions[k].stop.stop[it.node] = 1;
            strat.decisions[k].target[it.node] = out;
            mode = out;
            ++k;
        }
        for (NodeId c : tree.children(it.node)) stack.push_back({c, mode, k});
    }
    return strat;
}

}  // namespace detail

/**
 * All distinct realized switching strategies with per-path switch count
 * <= max_switches, for every start mode at `start_node`. Policies that
 * realize identically (their differences sit on unreachable (node, mode)
 * slots) appear once. Guard: the abstract policy space m^(nodes*m) must
 * not exceed 2^24; policy_count() reports that number.
 */
inline std::vector<Strategy> enumerate_policies(const SwitchingProblem& problem,
                                                int max_switches, NodeId start_node = -1) {
    detail::require_within_guard(problem);
    const NodeId start = start_node < 0 ? problem.tree().root() : start_node;
    std::vector<Strategy> out;
    for (int i = 1; i <= problem.mode_count(); ++i)
        detail::enumerate_labelings(problem, start, i, max_switches,
                                    [&](const std::vector<int>& chosen) {
                                        out.push_back(detail::labeling_to_strategy(
                                            problem, start, i, chosen));
                                    });
    return out;
}

/**
 * Brute-force value at (node, mode): the best expected payoff over every
 * realized policy with at most max_switches switches per path. Independent
 * of the solver: each candidate is priced directly, no value recursion.
 */
inline double oracle_value(const SwitchingProblem& problem, NodeId node, int mode,
                           int max_switches) {
    detail::require_within_guard(problem);
    double best = -std::numeric_limits<double>::infinity();
    detail::enumerate_labelings(problem, node, mode, max_switches,
                                [&](const std::vector<int>& chosen) {
                                    best = std::max(best, detail::labeling_value(
                                                              problem, node, mode, chosen));
                                });
    return best;
}

namespace detail {

/// Doob martingale of the running-reward-adjusted value process of each
/// mode. Tolerance is loose only to absorb float noise: the adjusted
/// values are supermartingales by construction.
inline std::vector<AdaptedProcess> value_martingales(const SwitchingProblem& problem,
                                                     const ValueFamily& Y) {
    std::vector<AdaptedProcess> M;
    M.reserve(problem.mode_count());
    for (int i = 1; i <= problem.mode_count(); ++i)
        M.push_back(doob_decompose(accumulated_value(problem, Y, i), 1e-9).martingale);
    return M;
}

/// Per-path view of a realized strategy: event positions along the node
/// sequence, with the mode held before each event.
struct PathEvents {
    const PathRealization* path;
    std::vector<std::size_t> event_pos;  // index into path->nodes per event
};

inline std::vector<PathEvents> index_events(const RealizationResult& realized) {
    std::vector<PathEvents> out;
    out.reserve(realized.paths.size());
    for (const PathRealization& p : realized.paths) {
        PathEvents pe{&p, {}};
        std::size_t pos = 0;
        for (const SwitchEvent& e : p.events) {
            while (pos < p.nodes.size() && p.nodes[pos] != e.node) ++pos;
            pe.event_pos.push_back(pos);  // chained events share a position
        }
        out.push_back(std::move(pe));
    }
    return out;
}

}  // namespace detail

/**
 * Numerically verifies the representation of the cumulative switching cost
 * of an extracted strategy: for every path and every truncation n,
 *   sum_{k<=n} cost_k  =  Y^{mode_n}(tau_n) - Y^{mode_0}(tau_0)
 *                         + sum of rewards earned before tau_n
 *                         - sum_{k<=n} (M^{mode_{k-1}}(tau_k) - M^{mode_{k-1}}(tau_{k-1}))
 * where M^i is the Doob martingale of Y^i plus its accumulated running
 * reward. Returns the largest absolute residual across paths and n.
 */
inline double check_cumulative_cost_identity(const SwitchingProblem& problem,
                                             const ValueFamily& Y,
                                             const Strategy& strategy) {
    const double dt = problem.dt();
    const RealizationResult realized = realize(problem, strategy);
    if (!realized.violations.empty()) {
        const Violation& v = realized.violations.front();
        throw std::invalid_argument("check_cumulative_cost_identity: inadmissible strategy (" +
                                    v.rule + " at node " + std::to_string(v.node) + ")");
    }
    const std::vector<AdaptedProcess> M = detail::value_martingales(problem, Y);
    const auto indexed = detail::index_events(realized);

    double worst = 0.0;
    for (const auto& pe : indexed) {
        const PathRealization& p = *pe.path;
        const std::size_t n_events = p.events.size();
        for (std::size_t n = 0; n <= n_events; ++n) {
            double lhs = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const SwitchEvent& e = p.events[k];
                if (e.from_mode != e.to_mode)
                    lhs += problem.gamma(e.from_mode, e.to_mode)[e.node];
            }
            const NodeId tau_n = n == 0 ? strategy.start_node : p.events[n - 1].node;
            const int mode_n = n == 0 ? strategy.start_mode : p.events[n - 1].to_mode;
            const std::size_t pos_n = n == 0 ? 0 : pe.event_pos[n - 1];
            double rewards = 0.0;
            for (std::size_t l = 0; l < pos_n; ++l)
                rewards += problem.psi(p.active_mode[l])[p.nodes[l]] * dt;
            double mart = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const int held = p.events[k].from_mode;
                const NodeId from = k == 0 ? strategy.start_node : p.events[k - 1].node;
                mart += M[held - 1][p.events[k].node] - M[held - 1][from];
            }
            const double rhs = Y.mode(mode_n)[tau_n] -
                               Y.mode(strategy.start_mode)[strategy.start_node] + rewards -
                               mart;
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

/**
 * Report on the discrete martingale built from the value martingales along
 * a strategy's switch times. tau_k is the k-th realized event node (leaf
 * stops included) and freezes at the path's last event once its events are
 * exhausted, so increments past the last event vanish.
 *
 *   xi_k = M^{mode_{k-1}}(tau_k) - M^{mode_{k-1}}(tau_{k-1}),  X_n = sum xi_k
 *
 * The report verifies, with conditional expectations taken over the atoms
 * of each switch-time sigma-algebra (paths grouped by realized tau_k):
 *   centering      E[xi_k | G_{k-1}] = 0                   (<= 1e-9)
 *   sum of squares E[sum xi_k^2] <= 4 m max_i E[(M^i_T)^2] (+ 1e-9)
 *   maximal bound  E[(sup_n |X_n|)^2] <= 4 E[R_inf]        (+ 1e-9)
 * where X^2_n = Q_n + R_n is the discrete decomposition with R predictable
 * (R's increment is E[xi_k^2 | G_{k-1}]); Q's martingale property is also
 * rechecked directly.
 */
struct MartingaleBoundsReport {
    double max_centering_error = 0.0;
    double sum_sq = 0.0;
    double sum_sq_bound = 0.0;
    double sup_sq = 0.0;
    double compensator_mean = 0.0;
    double max_q_residual = 0.0;
    bool centering_ok = false;
    bool sum_sq_ok = false;
    bool maximal_ok = false;
    bool q_martingale_ok = false;
    bool all_ok() const {
        return centering_ok && sum_sq_ok && maximal_ok && q_martingale_ok;
    }
};

inline MartingaleBoundsReport check_discrete_martingale_bounds(
    const SwitchingProblem& problem, const ValueFamily& Y, const Strategy& strategy) {
    constexpr double tol = 1e-9;
    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    const RealizationResult realized = realize(problem, strategy);
    if (!realized.violations.empty()) {
        const Violation& v = realized.violations.front();
        throw std::invalid_argument("check_discrete_martingale_bounds: inadmissible strategy (" +
                                    v.rule + " at node " + std::to_string(v.node) + ")");
    }
    const std::vector<AdaptedProcess> M = detail::value_martingales(problem, Y);
    const auto pp = conditional_path_probabilities(tree, strategy.start_node);

    std::size_t k_max = 0;
    for (const PathRealization& p : realized.paths)
        k_max = std::max(k_max, p.events.size());

    const std::size_t n_paths = realized.paths.size();
    // tau[k][p], xi[k][p] for k = 0..k_max (tau_0 = start, xi_0 = 0)
    std::vector<std::vector<NodeId>> tau(k_max + 1, std::vector<NodeId>(n_paths));
    std::vector<std::vector<double>> xi(k_max + 1, std::vector<double>(n_paths, 0.0));
    std::vector<double> prob(n_paths, 0.0);
    for (std::size_t pi = 0; pi < n_paths; ++pi) {
        const PathRealization& p = realized.paths[pi];
        prob[pi] = pp[p.leaf];
        tau[0][pi] = strategy.start_node;
        for (std::size_t k = 1; k <= k_max; ++k) {
            if (k <= p.events.size()) {
                const SwitchEvent& e = p.events[k - 1];
                tau[k][pi] = e.node;
                xi[k][pi] = M[e.from_mode - 1][e.node] - M[e.from_mode - 1][tau[k - 1][pi]];
            } else {
                tau[k][pi] = tau[k - 1][pi];  // frozen: no more events on this path
            }
        }
    }

    MartingaleBoundsReport report;

    // centering: group paths by the realized tau_{k-1} atom
    for (std::size_t k = 1; k <= k_max; ++k) {
        std::map<NodeId, std::pair<double, double>> atom;  // node -> (sum w*xi, sum w)
        for (std::size_t pi = 0; pi < n_paths; ++pi) {
            auto& a = atom[tau[k - 1][pi]];
            a.first += prob[pi] * xi[k][pi];
            a.second += prob[pi];
        }
        for (const auto& [node, acc] : atom) {
            if (acc.second <= 0.0) continue;
            report.max_centering_error =
                std::max(report.max_centering_error, std::abs(acc.first / acc.second));
        }
    }

    // predictable compensator R: increment at level k is E[xi_k^2 | G_{k-1}]
    std::vector<std::vector<double>> R(k_max + 1, std::vector<double>(n_paths, 0.0));
    for (std::size_t k = 1; k <= k_max; ++k) {
        std::map<NodeId, std::pair<double, double>> atom;
        for (std::size_t pi = 0; pi < n_paths; ++pi) {
            auto& a = atom[tau[k - 1][pi]];
            a.first += prob[pi] * xi[k][pi] * xi[k][pi];
            a.second += prob[pi];
        }
        for (std::size_t pi = 0; pi < n_paths; ++pi) {
            const auto& a = atom[tau[k - 1][pi]];
            R[k][pi] = R[k - 1][pi] + (a.second > 0.0 ? a.first / a.second : 0.0);
        }
    }

    // pathwise sums and the Q-martingale residual
    double sup_sq = 0.0, sum_sq = 0.0, r_mean = 0.0;
    std::vector<double> X(n_paths, 0.0);
    std::vector<std::vector<double>> Q(k_max + 1, std::vector<double>(n_paths, 0.0));
    std::vector<double> sup_abs(n_paths, 0.0);
    for (std::size_t k = 1; k <= k_max; ++k)
        for (std::size_t pi = 0; pi < n_paths; ++pi) {
            X[pi] += xi[k][pi];
            sup_abs[pi] = std::max(sup_abs[pi], std::abs(X[pi]));
            Q[k][pi] = X[pi] * X[pi] - R[k][pi];
            sum_sq += prob[pi] * xi[k][pi] * xi[k][pi];
        }
    for (std::size_t pi = 0; pi < n_paths; ++pi) {
        sup_sq += prob[pi] * sup_abs[pi] * sup_abs[pi];
        r_mean += prob[pi] * R[k_max][pi];
    }
    for (std::size_t k = 1; k <= k_max; ++k) {
        std::map<NodeId, std::pair<double, double>> atom;
        for (std::size_t pi = 0; pi < n_paths; ++pi) {
            auto& a = atom[tau[k - 1][pi]];
            a.first += prob[pi] * (Q[k][pi] - Q[k - 1][pi]);
            a.second += prob[pi];
        }
        for (const auto& [node, acc] : atom)
            if (acc.second > 0.0)
                report.max_q_residual =
                    std::max(report.max_q_residual, std::abs(acc.first / acc.second));
    }

    double worst_terminal = 0.0;
    for (int i = 0; i < m; ++i) {
        double e_sq = 0.0;
        for (NodeId leaf : leaves_under(tree, strategy.start_node))
            e_sq += pp[leaf] * M[i][leaf] * M[i][leaf];
        worst_terminal = std::max(worst_terminal, e_sq);
    }

    report.sum_sq = sum_sq;
    report.sum_sq_bound = 4.0 * m * worst_terminal;
    report.sup_sq = sup_sq;
    report.compensator_mean = r_mean;
    report.centering_ok = report.max_centering_error <= tol;
    report.sum_sq_ok = sum_sq <= report.sum_sq_bound + tol;
    report.maximal_ok = sup_sq <= 4.0 * r_mean + tol;
    report.q_martingale_ok = report.max_q_residual <= tol;
    return report;
}

}  // namespace switchtree
