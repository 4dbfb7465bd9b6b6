#pragma once

// Finite scenario trees and adapted processes.
//
// A tree over time steps 0..N stands in for a filtered probability space:
// the nodes at time t are the atoms of the time-t information, and each
// edge carries the conditional probability of reaching the child from its
// parent. An adapted process is one real value per node.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace switchtree {

using NodeId = int;

/// Parent marker for the root node.
inline constexpr NodeId no_parent = -1;

struct NodeRecord {
    NodeId id = 0;
    int time = 0;
    NodeId parent = no_parent;
    double cond_prob = 1.0;  // probability of this node given its parent
};

/// One broken rule, locatable by node and (where it applies) mode indices.
/// Modes are 1-based; 0 means the coordinate is not applicable.
struct Violation {
    std::string rule;
    NodeId node = -1;
    int mode_i = 0;
    int mode_j = 0;
    int mode_k = 0;
    std::string detail;
};

/**
 * Immutable rooted tree over time steps 0..horizon_steps.
 *
 * Construction is permissive: structural defects (duplicate or out-of-range
 * ids, dangling parent references) are recorded and later reported by
 * validate_tree rather than thrown, so that a loaded file can always be
 * diagnosed. Every operation other than validate_tree requires a tree for
 * which validate_tree returns no violations.
 *
 * Node ids double as array indices (0..node_count-1) for process values.
 */
class ScenarioTree {
  public:
    ScenarioTree(std::vector<NodeRecord> nodes, int horizon_steps, double dt)
        : records_(std::move(nodes)), horizon_(horizon_steps), dt_(dt) {
        const int n = static_cast<int>(records_.size());
        slot_.assign(n, -1);
        children_.assign(n, {});
        for (int idx = 0; idx < n; ++idx) {
            const NodeRecord& r = records_[idx];
            if (r.id < 0 || r.id >= n) {
                defects_.push_back({"node-id", r.id, 0, 0, 0,
                                    "node id out of range [0, " + std::to_string(n) + ")"});
                continue;
            }
            if (slot_[r.id] != -1) {
                defects_.push_back({"node-id", r.id, 0, 0, 0, "duplicate node id"});
                continue;
            }
            slot_[r.id] = idx;
        }
        for (NodeId id = 0; id < n; ++id) {
            if (slot_[id] == -1) continue;
            const NodeRecord& r = records_[slot_[id]];
            if (r.parent == no_parent) {
                roots_.push_back(id);
            } else if (r.parent < 0 || r.parent >= n || slot_[r.parent] == -1) {
                defects_.push_back({"parent-ref", id, 0, 0, 0,
                                    "parent " + std::to_string(r.parent) + " is not a node"});
            } else {
                children_[r.parent].push_back(id);
            }
        }
        // children in id order: deterministic traversal regardless of input order
        for (auto& c : children_) std::sort(c.begin(), c.end());
        by_time_.assign(std::max(horizon_, 0) + 1, {});
        for (NodeId id = 0; id < n; ++id) {
            if (slot_[id] == -1) continue;
            const int t = records_[slot_[id]].time;
            if (t >= 0 && t <= horizon_) by_time_[t].push_back(id);
        }
    }

    int node_count() const { return static_cast<int>(records_.size()); }
    int horizon_steps() const { return horizon_; }
    double dt() const { return dt_; }

    bool has_node(NodeId id) const {
        return id >= 0 && id < node_count() && slot_[id] != -1;
    }
    const NodeRecord& node(NodeId id) const { return records_[slot_[id]]; }
    const std::vector<NodeId>& children(NodeId id) const { return children_[id]; }
    bool is_leaf(NodeId id) const { return children_[id].empty(); }

    /// The unique root, or -1 when the tree is malformed.
    NodeId root() const { return roots_.size() == 1 ? roots_[0] : -1; }
    const std::vector<NodeId>& roots() const { return roots_; }

    /// Node ids at a fixed time step, ascending. `time` must lie in [0, N].
    const std::vector<NodeId>& nodes_at_time(int time) const {
        if (time < 0 || time >= static_cast<int>(by_time_.size()))
            throw std::out_of_range("nodes_at_time: time " + std::to_string(time) +
                                    " outside [0, " + std::to_string(horizon_) + "]");
        return by_time_[time];
    }

    const std::vector<Violation>& structural_defects() const { return defects_; }

  private:
    std::vector<NodeRecord> records_;
    int horizon_;
    double dt_;
    std::vector<int> slot_;  // id -> index into records_, -1 when absent
    std::vector<std::vector<NodeId>> children_;
    std::vector<std::vector<NodeId>> by_time_;
    std::vector<NodeId> roots_;
    std::vector<Violation> defects_;
};

using TreePtr = std::shared_ptr<const ScenarioTree>;

inline TreePtr make_tree(std::vector<NodeRecord> nodes, int horizon_steps, double dt) {
    return std::make_shared<const ScenarioTree>(std::move(nodes), horizon_steps, dt);
}

/**
 * One real value per tree node. Adaptedness is structural: a node's value
 * can only be read through the node, so it never peeks at descendants.
 * Mutation is intended for the construction phase only; treat instances as
 * immutable once shared.
 */
class AdaptedProcess {
  public:
    AdaptedProcess(TreePtr tree, std::vector<double> values)
        : tree_(std::move(tree)), values_(std::move(values)) {
        if (!tree_) throw std::invalid_argument("AdaptedProcess: null tree");
        if (static_cast<int>(values_.size()) != tree_->node_count())
            throw std::invalid_argument("AdaptedProcess: value count " +
                                        std::to_string(values_.size()) + " != node count " +
                                        std::to_string(tree_->node_count()));
    }

    static AdaptedProcess constant(TreePtr tree, double value) {
        std::vector<double> v(tree->node_count(), value);
        return AdaptedProcess(std::move(tree), std::move(v));
    }

    double operator[](NodeId id) const { return values_[id]; }
    double& operator[](NodeId id) { return values_[id]; }

    const ScenarioTree& tree() const { return *tree_; }
    const TreePtr& tree_ptr() const { return tree_; }
    const std::vector<double>& values() const { return values_; }

  private:
    TreePtr tree_;
    std::vector<double> values_;
};

/** E[proc | node]: one backward step through the node's children. */
inline double one_step_expectation(const AdaptedProcess& proc, NodeId node) {
    const ScenarioTree& tree = proc.tree();
    const auto& kids = tree.children(node);
    if (kids.empty())
        throw std::invalid_argument("one_step_expectation: node " + std::to_string(node) +
                                    " has no children");
    double acc = 0.0;
    for (NodeId c : kids) acc += tree.node(c).cond_prob * proc[c];
    return acc;
}

/// Probability of each node's path from the root (product of edge
/// probabilities). Derived on demand, never stored.
inline std::vector<double> path_probabilities(const ScenarioTree& tree) {
    std::vector<double> pp(tree.node_count(), 0.0);
    for (int t = 0; t <= tree.horizon_steps(); ++t) {
        for (NodeId id : tree.nodes_at_time(t)) {
            const NodeRecord& r = tree.node(id);
            pp[id] = (r.parent == no_parent) ? r.cond_prob : pp[r.parent] * r.cond_prob;
        }
    }
    return pp;
}

/** Unconditional E[proc at `time`] over the nodes of that time slice. */
inline double root_expectation(const AdaptedProcess& proc, int time) {
    const ScenarioTree& tree = proc.tree();
    const auto pp = path_probabilities(tree);
    double acc = 0.0;
    for (NodeId id : tree.nodes_at_time(time)) acc += pp[id] * proc[id];
    return acc;
}

/// Nodes of the subtree rooted at `from`, parents before children
/// (preorder), children visited in id order.
inline std::vector<NodeId> subtree_nodes(const ScenarioTree& tree, NodeId from) {
    std::vector<NodeId> out;
    std::vector<NodeId> stack{from};
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        out.push_back(v);
        const auto& kids = tree.children(v);
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

inline std::vector<NodeId> leaves_under(const ScenarioTree& tree, NodeId from) {
    std::vector<NodeId> out;
    for (NodeId v : subtree_nodes(tree, from))
        if (tree.is_leaf(v)) out.push_back(v);
    return out;
}

/// P(node | from) for every node of the subtree of `from`; zero elsewhere.
inline std::vector<double> conditional_path_probabilities(const ScenarioTree& tree,
                                                          NodeId from) {
    std::vector<double> pp(tree.node_count(), 0.0);
    pp[from] = 1.0;
    for (NodeId v : subtree_nodes(tree, from))
        for (NodeId c : tree.children(v)) pp[c] = pp[v] * tree.node(c).cond_prob;
    return pp;
}

/**
 * Full rule check for a tree. Empty result iff the tree is well-formed:
 * unique ids, valid parents, exactly one root at time 0 with probability 1,
 * edges advance time by one, interior nodes reach the horizon, sibling
 * probabilities sum to 1 (tolerance 1e-12) and are strictly positive.
 */
inline std::vector<Violation> validate_tree(const ScenarioTree& tree) {
    constexpr double sum_tol = 1e-12;
    std::vector<Violation> out = tree.structural_defects();
    if (tree.dt() <= 0.0 || !std::isfinite(tree.dt()))
        out.push_back({"dt-positive", -1, 0, 0, 0, "dt must be a positive real"});
    if (tree.horizon_steps() < 0)
        out.push_back({"horizon-negative", -1, 0, 0, 0, "horizon_steps must be >= 0"});
    if (tree.roots().size() != 1) {
        out.push_back({"root-count", -1, 0, 0, 0,
                       std::to_string(tree.roots().size()) + " parentless nodes, expected 1"});
    } else {
        const NodeRecord& r = tree.node(tree.root());
        if (r.time != 0)
            out.push_back({"root-time", r.id, 0, 0, 0, "root must sit at time 0"});
        if (std::abs(r.cond_prob - 1.0) > sum_tol)
            out.push_back({"root-prob", r.id, 0, 0, 0, "root cond_prob must be 1"});
    }
    const int n = tree.node_count();
    for (NodeId id = 0; id < n; ++id) {
        if (!tree.has_node(id)) continue;
        const NodeRecord& r = tree.node(id);
        if (r.time < 0 || r.time > tree.horizon_steps())
            out.push_back({"time-range", id, 0, 0, 0,
                           "time " + std::to_string(r.time) + " outside [0, " +
                               std::to_string(tree.horizon_steps()) + "]"});
        if (!(r.cond_prob > 0.0) || r.cond_prob > 1.0 || !std::isfinite(r.cond_prob))
            out.push_back({"prob-positive", id, 0, 0, 0, "cond_prob must lie in (0, 1]"});
        if (r.parent != no_parent && tree.has_node(r.parent)) {
            if (r.time != tree.node(r.parent).time + 1)
                out.push_back({"edge-time", id, 0, 0, 0, "child time must be parent time + 1"});
        }
        if (!tree.is_leaf(id)) {
            if (r.time >= tree.horizon_steps())
                out.push_back({"horizon-children", id, 0, 0, 0,
                               "node at the horizon must be a leaf"});
            double s = 0.0;
            for (NodeId c : tree.children(id)) s += tree.node(c).cond_prob;
            if (std::abs(s - 1.0) > sum_tol)
                out.push_back({"children-prob-sum", id, 0, 0, 0,
                               "children probabilities sum to " + std::to_string(s)});
        } else if (r.time < tree.horizon_steps()) {
            out.push_back({"missing-children", id, 0, 0, 0,
                           "interior node (time < horizon) has no children"});
        }
    }
    return out;
}

}  // namespace switchtree
