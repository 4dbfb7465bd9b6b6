#pragma once

// Optimal multiple switching with signed switching costs.
//
// A controller runs one of m modes at a time. Mode i earns at rate psi_i,
// switching from i to j at a node costs gamma_{i,j} (possibly negative),
// and ending in mode i at a leaf pays the terminal reward Gamma_i. Switches
// take effect before the following step's earnings; a switch exactly at the
// horizon would have no step left to affect, so strategies never pay a cost
// there. The value family Y^i solves the interconnected system
//   Y^i(leaf) = Gamma_i(leaf)
//   Y^i(v)    = max( psi_i(v) dt + E[Y^i | v],  max_{j != i} Y^j(v) - gamma_{i,j}(v) )
// reached as the limit of the at-most-n-switches scheme.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "snell.hpp"
#include "tree.hpp"

namespace switchtree {

namespace detail {

/// Worker cap from the SWITCH_THREADS environment variable.
/// Unset, empty, 0 or 1 mean serial execution.
inline int env_worker_cap() {
    const char* raw = std::getenv("SWITCH_THREADS");
    if (!raw || !*raw) return 1;
    char* end = nullptr;
    const long v = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || v < 2) return 1;
    return static_cast<int>(std::min<long>(v, 256));
}

/// Runs fn(i) for i in 1..m. With workers >= 2 the calls run on a pool;
/// results must go to disjoint storage. Deterministic either way because
/// each i writes only its own slot.
inline void for_each_mode(int m, int workers, const std::function<void(int)>& fn) {
    if (workers < 2 || m < 2) {
        for (int i = 1; i <= m; ++i) fn(i);
        return;
    }
    std::atomic<int> next{1};
    auto drain = [&] {
        for (int i = next.fetch_add(1); i <= m; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    const int spawn = std::min(workers, m) - 1;
    pool.reserve(spawn);
    for (int k = 0; k < spawn; ++k) pool.emplace_back(drain);
    drain();
    for (auto& th : pool) th.join();
}

}  // namespace detail

/**
 * Problem data: a tree, m >= 2 modes with reward-rate processes psi_i,
 * switching-cost processes gamma_{i,j}, and per-leaf terminal rewards
 * Gamma_i. Storage is permissive about the cost matrix's content (the
 * assumption checks diagnose it); shapes and tree identity are enforced.
 *
 * gamma is row-major: entry (i-1)*m + (j-1) is the process gamma_{i,j}.
 * terminal[i-1] is indexed by node id; only leaf entries are meaningful.
 */
class SwitchingProblem {
  public:
    SwitchingProblem(TreePtr tree, std::vector<AdaptedProcess> psi,
                     std::vector<AdaptedProcess> gamma,
                     std::vector<std::vector<double>> terminal)
        : tree_(std::move(tree)),
          psi_(std::move(psi)),
          gamma_(std::move(gamma)),
          terminal_(std::move(terminal)) {
        if (!tree_) throw std::invalid_argument("SwitchingProblem: null tree");
        const int m = static_cast<int>(psi_.size());
        if (m < 2) throw std::invalid_argument("SwitchingProblem: need at least 2 modes");
        if (static_cast<int>(gamma_.size()) != m * m)
            throw std::invalid_argument("SwitchingProblem: gamma must hold m*m processes");
        if (static_cast<int>(terminal_.size()) != m)
            throw std::invalid_argument("SwitchingProblem: terminal must hold m vectors");
        for (const auto& p : psi_)
            if (p.tree_ptr() != tree_)
                throw std::invalid_argument("SwitchingProblem: psi on a different tree");
        for (const auto& g : gamma_)
            if (g.tree_ptr() != tree_)
                throw std::invalid_argument("SwitchingProblem: gamma on a different tree");
        for (const auto& tv : terminal_)
            if (static_cast<int>(tv.size()) != tree_->node_count())
                throw std::invalid_argument(
                    "SwitchingProblem: terminal vector size != node count");
    }

    int mode_count() const { return static_cast<int>(psi_.size()); }
    const ScenarioTree& tree() const { return *tree_; }
    const TreePtr& tree_ptr() const { return tree_; }
    double dt() const { return tree_->dt(); }

    const AdaptedProcess& psi(int i) const { return psi_[i - 1]; }
    const AdaptedProcess& gamma(int i, int j) const {
        return gamma_[(i - 1) * mode_count() + (j - 1)];
    }
    double terminal(int i, NodeId leaf) const { return terminal_[i - 1][leaf]; }
    const std::vector<double>& terminal_vector(int i) const { return terminal_[i - 1]; }

  private:
    TreePtr tree_;
    std::vector<AdaptedProcess> psi_;
    std::vector<AdaptedProcess> gamma_;
    std::vector<std::vector<double>> terminal_;
};

/** One value process per mode; mode(i) is 1-based. */
struct ValueFamily {
    std::vector<AdaptedProcess> processes;
    const AdaptedProcess& mode(int i) const { return processes[i - 1]; }
    int mode_count() const { return static_cast<int>(processes.size()); }
};

/**
 * Best value reachable from mode i at `node` by switching right now,
 * given candidate continuation values Y: max_{j != i} Y^j(node) - gamma_{i,j}(node).
 * At a leaf there is nothing to switch for, so the terminal reward applies.
 */
inline double obstacle(int i, const ValueFamily& Y, const SwitchingProblem& problem,
                       NodeId node) {
    if (problem.tree().is_leaf(node)) return problem.terminal(i, node);
    const int m = problem.mode_count();
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 1; j <= m; ++j) {
        if (j == i) continue;
        best = std::max(best, Y.mode(j)[node] - problem.gamma(i, j)[node]);
    }
    return best;
}

namespace detail {

/// Backward sweep for one mode against a fixed previous layer:
///   out(leaf) = Gamma_i(leaf)
///   out(v)    = max(psi_i(v) dt + E[out | v], obstacle_i(prev)(v))
inline std::vector<double> relax_mode(int i, const ValueFamily& prev,
                                      const SwitchingProblem& problem) {
    const ScenarioTree& tree = problem.tree();
    const double dt = problem.dt();
    const AdaptedProcess& psi_i = problem.psi(i);
    std::vector<double> out(tree.node_count(), 0.0);
    for (int t = tree.horizon_steps(); t >= 0; --t) {
        for (NodeId v : tree.nodes_at_time(t)) {
            if (tree.is_leaf(v)) {
                out[v] = problem.terminal(i, v);
                continue;
            }
            double cont = 0.0;
            for (NodeId c : tree.children(v)) cont += tree.node(c).cond_prob * out[c];
            out[v] = std::max(psi_i[v] * dt + cont, obstacle(i, prev, problem, v));
        }
    }
    return out;
}

/// Zero-switch values: accumulate psi_i to the horizon, then Gamma_i.
inline ValueFamily zero_switch_values(const SwitchingProblem& problem) {
    const ScenarioTree& tree = problem.tree();
    const double dt = problem.dt();
    ValueFamily Y;
    Y.processes.reserve(problem.mode_count());
    for (int i = 1; i <= problem.mode_count(); ++i) {
        std::vector<double> v(tree.node_count(), 0.0);
        for (int t = tree.horizon_steps(); t >= 0; --t) {
            for (NodeId id : tree.nodes_at_time(t)) {
                if (tree.is_leaf(id)) {
                    v[id] = problem.terminal(i, id);
                    continue;
                }
                double cont = 0.0;
                for (NodeId c : tree.children(id)) cont += tree.node(c).cond_prob * v[c];
                v[id] = problem.psi(i)[id] * dt + cont;
            }
        }
        Y.processes.emplace_back(problem.tree_ptr(), std::move(v));
    }
    return Y;
}

}  // namespace detail

/**
 * Value family when at most n switches remain: n = 0 is pure accumulation
 * of the running reward; each further layer allows one more switch.
 */
inline ValueFamily solve_n_switches(const SwitchingProblem& problem, int n) {
    if (n < 0) throw std::invalid_argument("solve_n_switches: n must be >= 0");
    ValueFamily Y = detail::zero_switch_values(problem);
    const int workers = detail::env_worker_cap();
    for (int k = 1; k <= n; ++k) {
        const int m = problem.mode_count();
        std::vector<std::vector<double>> next(m);
        detail::for_each_mode(m, workers,
                              [&](int i) { next[i - 1] = detail::relax_mode(i, Y, problem); });
        ValueFamily out;
        out.processes.reserve(m);
        for (int i = 0; i < m; ++i)
            out.processes.emplace_back(problem.tree_ptr(), std::move(next[i]));
        Y = std::move(out);
    }
    return Y;
}

struct SolveResult {
    ValueFamily values;
    int iterations;      // relaxation layers applied
    double residual;     // sup-norm change of the final layer
};

struct NonConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/**
 * Iterates the at-most-n-switches scheme until the layer update changes no
 * value by more than `tol` (sup over modes and nodes). With strictly
 * triangular costs the scheme is stationary after at most N*(m-1)+1 layers,
 * which is the iteration cap; exceeding it throws NonConvergenceError.
 */
inline SolveResult solve_detailed(const SwitchingProblem& problem, double tol = 1e-12) {
    const int m = problem.mode_count();
    const int cap = problem.tree().horizon_steps() * (m - 1) + 1;
    const int workers = detail::env_worker_cap();
    ValueFamily Y = detail::zero_switch_values(problem);
    for (int it = 1; it <= cap; ++it) {
        std::vector<std::vector<double>> next(m);
        detail::for_each_mode(m, workers,
                              [&](int i) { next[i - 1] = detail::relax_mode(i, Y, problem); });
        double delta = 0.0;
        for (int i = 0; i < m; ++i)
            for (int v = 0; v < problem.tree().node_count(); ++v)
                delta = std::max(delta, std::abs(next[i][v] - Y.processes[i][v]));
        ValueFamily out;
        out.processes.reserve(m);
        for (int i = 0; i < m; ++i)
            out.processes.emplace_back(problem.tree_ptr(), std::move(next[i]));
        Y = std::move(out);
        if (delta <= tol) return {std::move(Y), it, delta};
    }
    throw NonConvergenceError("solve: no fixed point after " + std::to_string(cap) +
                              " switch layers (check the cost structure)");
}

inline ValueFamily solve(const SwitchingProblem& problem, double tol = 1e-12) {
    return solve_detailed(problem, tol).values;
}

/**
 * A switching decision: where to switch (a stopping rule) and, at each
 * stopping node, the mode switched into (0 where not applicable).
 */
struct SwitchDecision {
    StoppingRule stop;
    std::vector<int> target;
};

/**
 * A finite switching strategy from a start node and mode: decision k fires
 * at the k-th switching time. Admissibility (targets present, in range and
 * different from the current mode; finite costs along the way) is checked
 * by evaluation, not construction.
 */
struct Strategy {
    NodeId start_node = 0;
    int start_mode = 1;
    std::vector<SwitchDecision> decisions;
};

/** Active mode per node implied by a strategy (structural adaptedness:
 *  computed by walking the tree, so it can only depend on the path so far).
 *  Nodes outside the start node's subtree keep mode 0. */
struct ModeIndicator {
    std::vector<int> mode;
};

struct SwitchEvent {
    int decision;   // index into Strategy::decisions
    NodeId node;
    int time;
    int from_mode;
    int to_mode;
};

/** One root-to-leaf scenario under a strategy. `nodes` runs from the start
 *  node to `leaf`; active_mode[k] is the mode earning on the step out of
 *  nodes[k] (the mode after any switch at that node). */
struct PathRealization {
    NodeId leaf = -1;
    double cond_prob = 0.0;
    std::vector<NodeId> nodes;
    std::vector<int> active_mode;
    std::vector<SwitchEvent> events;
};

struct RealizationResult {
    std::vector<PathRealization> paths;
    std::vector<Violation> violations;
};

/**
 * Plays a strategy forward over every scenario. Decisions are consumed in
 * order; decision k is armed only after decision k-1 has fired on that
 * path. Several decisions may fire at the same node (a chained switch).
 * A decision firing at a leaf is recorded as an event with no cost charged
 * and no effect on the terminal mode: the horizon has no step left to
 * switch for, so the leaf's terminal reward is read in the mode held when
 * the leaf was reached.
 *
 * Admissibility defects are reported per (decision, node):
 *   switch-target-missing  stop fires but target == 0
 *   switch-target-range    target outside 1..m
 *   switch-target-same     target equals the current mode
 *   nonfinite-cost         the charged cost is not finite
 */
inline RealizationResult realize(const SwitchingProblem& problem, const Strategy& strategy) {
    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    RealizationResult result;

    struct Frame {
        NodeId node;
        int mode;
        std::size_t next_decision;
        std::vector<NodeId> nodes;
        std::vector<int> active;
        std::vector<SwitchEvent> events;
    };
    const auto pp = conditional_path_probabilities(tree, strategy.start_node);
    std::vector<Frame> stack;
    stack.push_back({strategy.start_node, strategy.start_mode, 0, {}, {}, {}});
    while (!stack.empty()) {
        Frame f = std::move(stack.back());
        stack.pop_back();
        const NodeId v = f.node;
        const bool leaf = tree.is_leaf(v);
        // fire every armed decision that stops at v, in order
        while (f.next_decision < strategy.decisions.size()) {
            const auto& d = strategy.decisions[f.next_decision];
            if (!d.stop.stop[v]) break;
            const int idx = static_cast<int>(f.next_decision);
            const int tgt = d.target[v];
            if (leaf) {
                // at the horizon a switch is pure bookkeeping: no cost, no mode change
                f.events.push_back({idx, v, tree.node(v).time, f.mode, f.mode});
                ++f.next_decision;
                continue;
            }
            if (tgt == 0) {
                result.violations.push_back({"switch-target-missing", v, f.mode, 0, 0,
                                             "decision " + std::to_string(idx) +
                                                 " stops here without a target mode"});
                ++f.next_decision;
                continue;
            }
            if (tgt < 1 || tgt > m) {
                result.violations.push_back({"switch-target-range", v, f.mode, tgt, 0,
                                             "decision " + std::to_string(idx) +
                                                 " targets mode outside 1.." +
                                                 std::to_string(m)});
                ++f.next_decision;
                continue;
            }
            if (tgt == f.mode) {
                result.violations.push_back({"switch-target-same", v, f.mode, tgt, 0,
                                             "decision " + std::to_string(idx) +
                                                 " switches a mode into itself"});
                ++f.next_decision;
                continue;
            }
            const double cost = problem.gamma(f.mode, tgt)[v];
            if (!std::isfinite(cost))
                result.violations.push_back({"nonfinite-cost", v, f.mode, tgt, 0,
                                             "decision " + std::to_string(idx) +
                                                 " charges a non-finite cost"});
            f.events.push_back({idx, v, tree.node(v).time, f.mode, tgt});
            f.mode = tgt;
            ++f.next_decision;
        }
        f.nodes.push_back(v);
        f.active.push_back(f.mode);
        if (leaf) {
            PathRealization path;
            path.leaf = v;
            path.cond_prob = pp[v];
            path.nodes = std::move(f.nodes);
            path.active_mode = std::move(f.active);
            path.events = std::move(f.events);
            result.paths.push_back(std::move(path));
            continue;
        }
        const auto& kids = tree.children(v);
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
            Frame g = f;
            g.node = *it;
            stack.push_back(std::move(g));
        }
    }
    return result;
}

/**
 * Expected total payoff of a strategy from its start node and mode:
 * running rewards in the active mode, minus switching costs at events,
 * plus the terminal reward of the final mode. Throws std::invalid_argument
 * naming the first admissibility defect if the strategy is inadmissible.
 */
inline double evaluate(const SwitchingProblem& problem, const Strategy& strategy) {
    const RealizationResult r = realize(problem, strategy);
    if (!r.violations.empty()) {
        const Violation& v = r.violations.front();
        throw std::invalid_argument("evaluate: inadmissible strategy (" + v.rule +
                                    " at node " + std::to_string(v.node) + ": " + v.detail +
                                    ")");
    }
    const double dt = problem.dt();
    double acc = 0.0;
    for (const PathRealization& path : r.paths) {
        double val = 0.0;
        for (std::size_t k = 0; k + 1 < path.nodes.size(); ++k)
            val += problem.psi(path.active_mode[k])[path.nodes[k]] * dt;
        for (const SwitchEvent& e : path.events)
            if (e.from_mode != e.to_mode) val -= problem.gamma(e.from_mode, e.to_mode)[e.node];
        val += problem.terminal(path.active_mode.back(), path.leaf);
        acc += path.cond_prob * val;
    }
    return acc;
}

/** Number of real switches (cost-charging events) per scenario leaf. */
inline std::map<NodeId, int> num_switches(const SwitchingProblem& problem,
                                          const Strategy& strategy) {
    const RealizationResult r = realize(problem, strategy);
    std::map<NodeId, int> out;
    for (const PathRealization& path : r.paths) {
        int n = 0;
        for (const SwitchEvent& e : path.events)
            if (e.from_mode != e.to_mode) ++n;
        out[path.leaf] = n;
    }
    return out;
}

/** Mode active at each node of the start subtree (0 elsewhere). */
inline ModeIndicator mode_indicator(const SwitchingProblem& problem,
                                    const Strategy& strategy) {
    const RealizationResult r = realize(problem, strategy);
    ModeIndicator ind{std::vector<int>(problem.tree().node_count(), 0)};
    for (const PathRealization& path : r.paths)
        for (std::size_t k = 0; k < path.nodes.size(); ++k)
            ind.mode[path.nodes[k]] = path.active_mode[k];
    return ind;
}

/**
 * Extracts an optimal strategy from the solved value family by stopping at
 * the first node where switching is as good as continuing:
 *   |Y^i(v) - max_{j != i}(Y^j(v) - gamma_{i,j}(v))| <= tol,
 * switching into the smallest j attaining the max. A node where the switch
 * lands in a mode that should immediately switch again is rechecked in the
 * new mode (chained switch); strictly triangular costs make chains
 * impossible, so more than m rechecks at one node throws std::logic_error.
 * Leaves always stop (with no target), capping every decision sequence.
 */
inline Strategy extract_strategy(const SwitchingProblem& problem, const ValueFamily& Y,
                                 NodeId start_node, int start_mode, double tol = 1e-9) {
    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    Strategy strat;
    strat.start_node = start_node;
    strat.start_mode = start_mode;

    // frontier: nodes where a path is currently running in a given mode,
    // waiting for the next switch opportunity
    struct Pending {
        NodeId node;
        int mode;
        int chain;  // switches already taken at this very node
    };
    std::vector<Pending> frontier{{start_node, start_mode, 0}};
    while (!frontier.empty()) {
        SwitchDecision dec{StoppingRule{std::vector<std::uint8_t>(tree.node_count(), 0)},
                           std::vector<int>(tree.node_count(), 0)};
        std::vector<Pending> next_frontier;
        bool fired = false;
        for (const Pending& p : frontier) {
            // walk this branch forward until the switch region is hit
            std::vector<Pending> walk{p};
            while (!walk.empty()) {
                Pending w = walk.back();
                walk.pop_back();
                const NodeId v = w.node;
                if (tree.is_leaf(v)) {
                    dec.stop.stop[v] = 1;  // decision caps at the horizon, no cost
                    fired = true;
                    continue;
                }
                double best = -std::numeric_limits<double>::infinity();
                int best_j = 0;
                // strict > keeps the smallest index on exact ties
                for (int j = 1; j <= m; ++j) {
                    if (j == w.mode) continue;
                    const double cand = Y.mode(j)[v] - problem.gamma(w.mode, j)[v];
                    if (cand > best) {
                        best = cand;
                        best_j = j;
                    }
                }
                if (std::abs(Y.mode(w.mode)[v] - best) <= tol) {
                    if (w.chain >= m)
                        throw std::logic_error(
                            "extract_strategy: switch chain exceeds the mode count at node " +
                            std::to_string(v) + " (cost structure admits free cycles)");
                    dec.stop.stop[v] = 1;
                    dec.target[v] = best_j;
                    fired = true;
                    next_frontier.push_back({v, best_j, w.chain + 1});
                    continue;
                }
                const auto& kids = tree.children(v);
                for (auto it = kids.rbegin(); it != kids.rend(); ++it)
                    walk.push_back({*it, w.mode, 0});
            }
        }
        if (!fired) break;
        strat.decisions.push_back(std::move(dec));
        frontier = std::move(next_frontier);
    }
    return strat;
}

/** Running reward accumulated along the path in a fixed mode i:
 *  P(root) = 0, P(child) = P(v) + psi_i(v) dt. */
inline AdaptedProcess accumulated_reward(const SwitchingProblem& problem, int i) {
    const ScenarioTree& tree = problem.tree();
    const double dt = problem.dt();
    std::vector<double> P(tree.node_count(), 0.0);
    for (int t = 0; t < tree.horizon_steps(); ++t)
        for (NodeId v : tree.nodes_at_time(t))
            for (NodeId c : tree.children(v)) P[c] = P[v] + problem.psi(i)[v] * dt;
    return AdaptedProcess(problem.tree_ptr(), std::move(P));
}

/** Y^i plus the mode-i running reward to date: the process whose Snell
 *  structure carries the mode-i values (a supermartingale under optimal
 *  behavior). */
inline AdaptedProcess accumulated_value(const SwitchingProblem& problem, const ValueFamily& Y,
                                        int i) {
    const AdaptedProcess P = accumulated_reward(problem, i);
    std::vector<double> v(problem.tree().node_count(), 0.0);
    for (NodeId id = 0; id < problem.tree().node_count(); ++id)
        v[id] = Y.mode(i)[id] + P[id];
    return AdaptedProcess(problem.tree_ptr(), std::move(v));
}

/** The switching obstacle shifted by the same running reward, so that it is
 *  comparable with accumulated_value: obstacle + P_i. */
inline AdaptedProcess accumulated_obstacle(const SwitchingProblem& problem,
                                           const ValueFamily& Y, int i) {
    const AdaptedProcess P = accumulated_reward(problem, i);
    std::vector<double> v(problem.tree().node_count(), 0.0);
    for (NodeId id = 0; id < problem.tree().node_count(); ++id)
        v[id] = obstacle(i, Y, problem, id) + P[id];
    return AdaptedProcess(problem.tree_ptr(), std::move(v));
}

}  // namespace switchtree
