#pragma once

// JSON problem files, serialization, and report formatting.
//
// A problem file is a single JSON document:
//   dt        time-step length (real)
//   modes     mode count m (integer >= 2)
//   nodes     array of {id, time, parent, cond_prob}; parent is null for
//             the root; ids double as indices into every per-node array
//   psi       map "i" -> per-node reward-rate array, one key per mode
//   gamma     map "i,j" -> per-node switching-cost array; every ordered
//             pair with i != j is required, diagonal entries are optional
//             and default to zero
//   terminal  map "i" -> map leaf id -> terminal reward, covering exactly
//             the leaves
//
// Shape problems (missing keys, wrong types, arrays of the wrong length,
// ids that cannot index a per-node array) throw ParseError. Semantic
// defects (duplicate ids, dangling parents, bad probabilities, cost-rule
// violations) parse fine and are reported by validate_tree and the
// assumption checks, so a broken file can still be diagnosed in full.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "json.hpp"
#include "switching.hpp"
#include "tree.hpp"

namespace switchtree {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& doc, const char* key) {
    const auto it = doc.find(key);
    if (it == doc.end()) throw ParseError(std::string("missing field \"") + key + "\"");
    return *it;
}

inline int require_int(const nlohmann::json& j, const std::string& what) {
    if (!j.is_number_integer()) throw ParseError(what + " must be an integer");
    const auto wide = j.get<std::int64_t>();
    if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max())
        throw ParseError(what + " does not fit in an int");
    return static_cast<int>(wide);
}

inline double require_number(const nlohmann::json& j, const std::string& what) {
    if (!j.is_number()) throw ParseError(what + " must be a number");
    return j.get<double>();
}

inline std::vector<double> require_node_array(const nlohmann::json& j, int n,
                                              const std::string& what) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw ParseError(what + " must be an array of " + std::to_string(n) +
                         " numbers (one per node)");
    std::vector<double> out;
    out.reserve(n);
    for (const auto& e : j) out.push_back(require_number(e, what + " entry"));
    return out;
}

inline int parse_decimal(const std::string& text) {
    int value = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return -1;
    return value;
}

/// "i,j" with both modes in 1..m; anything else is a shape error.
inline std::pair<int, int> parse_pair_key(const std::string& key, int m) {
    const auto comma = key.find(',');
    if (comma != std::string::npos) {
        const int i = parse_decimal(key.substr(0, comma));
        const int j = parse_decimal(key.substr(comma + 1));
        if (i >= 1 && i <= m && j >= 1 && j <= m) return {i, j};
    }
    throw ParseError("gamma key \"" + key + "\" is not \"i,j\" with modes in 1.." +
                     std::to_string(m));
}

}  // namespace detail

inline SwitchingProblem parse_problem(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("problem file must be a JSON object");
    const double dt = detail::require_number(detail::require_field(doc, "dt"), "dt");
    const int m = detail::require_int(detail::require_field(doc, "modes"), "modes");
    if (m < 2) throw ParseError("modes must be >= 2");

    const auto& jnodes = detail::require_field(doc, "nodes");
    if (!jnodes.is_array() || jnodes.empty())
        throw ParseError("nodes must be a non-empty array");
    std::vector<NodeRecord> records;
    records.reserve(jnodes.size());
    int horizon = 0;
    for (const auto& jn : jnodes) {
        if (!jn.is_object()) throw ParseError("node entries must be objects");
        NodeRecord r;
        r.id = detail::require_int(detail::require_field(jn, "id"), "node id");
        r.time = detail::require_int(detail::require_field(jn, "time"), "node time");
        const auto& jp = detail::require_field(jn, "parent");
        r.parent = jp.is_null() ? no_parent : detail::require_int(jp, "node parent");
        r.cond_prob =
            detail::require_number(detail::require_field(jn, "cond_prob"), "node cond_prob");
        horizon = std::max(horizon, r.time);
        records.push_back(r);
    }
    const int n = static_cast<int>(records.size());
    const TreePtr tree = make_tree(std::move(records), horizon, dt);

    const auto& jpsi = detail::require_field(doc, "psi");
    if (!jpsi.is_object()) throw ParseError("psi must be a map mode -> array");
    std::vector<AdaptedProcess> psi;
    psi.reserve(m);
    for (int i = 1; i <= m; ++i) {
        const std::string key = std::to_string(i);
        const auto it = jpsi.find(key);
        if (it == jpsi.end()) throw ParseError("psi is missing mode " + key);
        psi.emplace_back(tree, detail::require_node_array(*it, n, "psi[" + key + "]"));
    }

    const auto& jgamma = detail::require_field(doc, "gamma");
    if (!jgamma.is_object()) throw ParseError("gamma must be a map \"i,j\" -> array");
    std::vector<std::vector<double>> gvals(m * m, std::vector<double>(n, 0.0));
    std::vector<char> seen(m * m, 0);
    for (auto it = jgamma.begin(); it != jgamma.end(); ++it) {
        const auto [i, j] = detail::parse_pair_key(it.key(), m);
        gvals[(i - 1) * m + (j - 1)] =
            detail::require_node_array(it.value(), n, "gamma[" + it.key() + "]");
        seen[(i - 1) * m + (j - 1)] = 1;
    }
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j)
            if (i != j && !seen[(i - 1) * m + (j - 1)])
                throw ParseError("gamma is missing pair \"" + std::to_string(i) + "," +
                                 std::to_string(j) + "\"");
    std::vector<AdaptedProcess> gamma;
    gamma.reserve(m * m);
    for (auto& g : gvals) gamma.emplace_back(tree, std::move(g));

    const auto& jterm = detail::require_field(doc, "terminal");
    if (!jterm.is_object())
        throw ParseError("terminal must be a map mode -> {leaf id -> value}");
    std::vector<std::vector<double>> terminal(m, std::vector<double>(n, 0.0));
    for (int i = 1; i <= m; ++i) {
        const std::string key = std::to_string(i);
        const auto it = jterm.find(key);
        if (it == jterm.end()) throw ParseError("terminal is missing mode " + key);
        if (!it->is_object())
            throw ParseError("terminal[" + key + "] must be a map leaf id -> value");
        std::vector<char> covered(n, 0);
        for (auto jt = it->begin(); jt != it->end(); ++jt) {
            const int leaf = detail::parse_decimal(jt.key());
            if (leaf < 0 || leaf >= n || !tree->has_node(leaf))
                throw ParseError("terminal[" + key + "] key \"" + jt.key() +
                                 "\" is not a node id");
            if (!tree->is_leaf(leaf))
                throw ParseError("terminal[" + key + "] covers non-leaf node " + jt.key());
            terminal[i - 1][leaf] = detail::require_number(
                jt.value(), "terminal[" + key + "][" + jt.key() + "]");
            covered[leaf] = 1;
        }
        for (NodeId v = 0; v < n; ++v)
            if (tree->has_node(v) && tree->is_leaf(v) && !covered[v])
                throw ParseError("terminal[" + key + "] is missing leaf " +
                                 std::to_string(v));
    }
    return SwitchingProblem(tree, std::move(psi), std::move(gamma), std::move(terminal));
}

inline SwitchingProblem parse_problem_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    return parse_problem(doc);
}

inline SwitchingProblem load_problem(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_problem_text(buf.str());
}

/// Serialize to the file schema. Field order is fixed (dt, modes, nodes,
/// psi, gamma in ascending "i,j" order, terminal) so output is byte-stable.
/// Requires a tree that passes validate_tree.
inline nlohmann::ordered_json problem_to_json(const SwitchingProblem& problem) {
    const ScenarioTree& tree = problem.tree();
    const int n = tree.node_count();
    const int m = problem.mode_count();
    nlohmann::ordered_json doc;
    doc["dt"] = tree.dt();
    doc["modes"] = m;
    auto& jnodes = doc["nodes"] = nlohmann::ordered_json::array();
    for (NodeId v = 0; v < n; ++v) {
        const NodeRecord& r = tree.node(v);
        nlohmann::ordered_json jn;
        jn["id"] = r.id;
        jn["time"] = r.time;
        if (r.parent == no_parent)
            jn["parent"] = nullptr;
        else
            jn["parent"] = r.parent;
        jn["cond_prob"] = r.cond_prob;
        jnodes.push_back(std::move(jn));
    }
    auto& jpsi = doc["psi"] = nlohmann::ordered_json::object();
    for (int i = 1; i <= m; ++i) jpsi[std::to_string(i)] = problem.psi(i).values();
    auto& jgamma = doc["gamma"] = nlohmann::ordered_json::object();
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j) {
            if (i == j) continue;
            jgamma[std::to_string(i) + "," + std::to_string(j)] =
                problem.gamma(i, j).values();
        }
    auto& jterm = doc["terminal"] = nlohmann::ordered_json::object();
    for (int i = 1; i <= m; ++i) {
        auto leafmap = nlohmann::ordered_json::object();
        for (NodeId v = 0; v < n; ++v)
            if (tree.is_leaf(v)) leafmap[std::to_string(v)] = problem.terminal(i, v);
        jterm[std::to_string(i)] = std::move(leafmap);
    }
    return doc;
}

inline std::string problem_to_text(const SwitchingProblem& problem) {
    return problem_to_json(problem).dump(2) + "\n";
}

inline nlohmann::ordered_json violation_to_json(const Violation& v) {
    nlohmann::ordered_json j;
    j["rule"] = v.rule;
    j["node"] = v.node;
    j["mode_i"] = v.mode_i;
    j["mode_j"] = v.mode_j;
    j["mode_k"] = v.mode_k;
    j["detail"] = v.detail;
    return j;
}

/// One-line human rendering: rule, location, then the detail.
inline std::string format_violation(const Violation& v) {
    std::string out = v.rule;
    if (v.node >= 0) out += " at node " + std::to_string(v.node);
    std::string modes;
    if (v.mode_i != 0) modes += "i=" + std::to_string(v.mode_i);
    if (v.mode_j != 0) modes += std::string(modes.empty() ? "" : ", ") + "j=" + std::to_string(v.mode_j);
    if (v.mode_k != 0) modes += std::string(modes.empty() ? "" : ", ") + "k=" + std::to_string(v.mode_k);
    if (!modes.empty()) out += " [" + modes + "]";
    out += ": " + v.detail;
    return out;
}

}  // namespace switchtree
