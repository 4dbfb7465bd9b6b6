#pragma once

// Command-line front end: solve / validate / oracle / gen subcommands over
// the JSON problem format. All output is UTF-8 with LF line endings.
//
// Exit codes (fixed, for scripting):
//   0  success
//   1  validation violations found (validate) or solver/oracle mismatch
//   2  parse or usage failure
//   3  standing-assumption violation (solve, oracle)
//   4  solver non-convergence
//   5  enumeration guard exceeded

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "generator.hpp"
#include "io.hpp"
#include "json.hpp"
#include "oracle.hpp"
#include "switching.hpp"
#include "tree.hpp"
#include "validate.hpp"

namespace switchtree {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int violations = 1;
inline constexpr int parse = 2;
inline constexpr int assumptions = 3;
inline constexpr int non_convergence = 4;
inline constexpr int guard = 5;
}  // namespace exit_code

namespace detail {

/// Shortest round-trip decimal rendering (the JSON dump rules), so CSV and
/// summary values are byte-stable across runs and platforms.
inline std::string fmt(double x) { return nlohmann::json(x).dump(); }

inline void print_report(std::ostream& os, const char* heading,
                         const std::vector<Violation>& vs) {
    if (vs.empty()) {
        os << heading << ": ok\n";
        return;
    }
    os << heading << ": " << vs.size() << " violation(s)\n";
    for (const Violation& v : vs) os << "  " << format_violation(v) << "\n";
}

inline bool write_text_file(const std::string& path, const std::string& text,
                            std::ostream& err) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        err << "error: cannot write " << path << "\n";
        return false;
    }
    f << text;
    return f.good();
}

}  // namespace detail

inline nlohmann::ordered_json strategy_to_json(const Strategy& s) {
    nlohmann::ordered_json j;
    j["start_node"] = s.start_node;
    j["start_mode"] = s.start_mode;
    auto& jd = j["decisions"] = nlohmann::ordered_json::array();
    for (const SwitchDecision& d : s.decisions) {
        auto stops = nlohmann::ordered_json::array();
        for (NodeId v = 0; v < static_cast<NodeId>(d.stop.stop.size()); ++v) {
            if (!d.stop.stop[v]) continue;
            nlohmann::ordered_json e;
            e["node"] = v;
            if (d.target[v] == 0)
                e["to_mode"] = nullptr;  // stop at the horizon, nothing to switch into
            else
                e["to_mode"] = d.target[v];
            stops.push_back(std::move(e));
        }
        jd.push_back(std::move(stops));
    }
    return j;
}

/// Solve a problem file and write report.json, summary.txt and values.csv
/// into `output_dir`. Output is deterministic for a given input.
inline int cmd_solve(const std::string& input, double tol, const std::string& output_dir,
                     std::ostream& out, std::ostream& err) {
    std::optional<SwitchingProblem> loaded;
    try {
        loaded.emplace(load_problem(input));
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::parse;
    }
    const SwitchingProblem& problem = *loaded;

    std::vector<Violation> pre = validate_tree(problem.tree());
    const auto costs = check_assumption_costs(problem);
    pre.insert(pre.end(), costs.begin(), costs.end());
    if (!pre.empty()) {
        err << "error: problem fails the standing assumptions\n";
        for (const Violation& v : pre) err << "  " << format_violation(v) << "\n";
        return exit_code::assumptions;
    }

    std::optional<SolveResult> solved;
    try {
        solved.emplace(solve_detailed(problem, tol));
    } catch (const NonConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::non_convergence;
    }
    const ValueFamily& Y = solved->values;
    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    const NodeId root = tree.root();

    nlohmann::ordered_json report;
    report["modes"] = m;
    report["nodes"] = tree.node_count();
    report["horizon_steps"] = tree.horizon_steps();
    report["dt"] = tree.dt();
    report["tolerance"] = tol;
    report["iterations"] = solved->iterations;
    report["residual"] = solved->residual;
    auto& jvals = report["values"] = nlohmann::ordered_json::object();
    for (int i = 1; i <= m; ++i) jvals[std::to_string(i)] = Y.mode(i).values();
    auto& jroot = report["root_values"] = nlohmann::ordered_json::object();
    for (int i = 1; i <= m; ++i) jroot[std::to_string(i)] = Y.mode(i)[root];
    auto& jstrat = report["strategies"] = nlohmann::ordered_json::object();
    for (int i = 1; i <= m; ++i) {
        const Strategy s = extract_strategy(problem, Y, root, i);
        nlohmann::ordered_json js = strategy_to_json(s);
        js["expected_value"] = evaluate(problem, s);
        jstrat[std::to_string(i)] = std::move(js);
    }

    std::ostringstream summary;
    summary << "problem: " << tree.node_count() << " nodes, horizon "
            << tree.horizon_steps() << " steps, dt " << detail::fmt(tree.dt()) << ", "
            << m << " modes\n";
    summary << "solver: " << solved->iterations << " iterations, residual "
            << detail::fmt(solved->residual) << "\n";
    summary << "mode      root value  decisions\n";
    for (int i = 1; i <= m; ++i) {
        summary << std::setw(4) << i << "  " << std::setw(14)
                << detail::fmt(Y.mode(i)[root]) << "  " << std::setw(9)
                << jstrat[std::to_string(i)]["decisions"].size() << "\n";
    }

    std::ostringstream csv;
    csv << "time,mode,expected_value\n";
    for (int t = 0; t <= tree.horizon_steps(); ++t)
        for (int i = 1; i <= m; ++i)
            csv << t << "," << i << "," << detail::fmt(root_expectation(Y.mode(i), t))
                << "\n";

    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (ec) {
        err << "error: cannot create " << output_dir << ": " << ec.message() << "\n";
        return exit_code::parse;
    }
    const std::filesystem::path dir(output_dir);
    if (!detail::write_text_file((dir / "report.json").string(), report.dump(2) + "\n", err))
        return exit_code::parse;
    if (!detail::write_text_file((dir / "summary.txt").string(), summary.str(), err))
        return exit_code::parse;
    if (!detail::write_text_file((dir / "values.csv").string(), csv.str(), err))
        return exit_code::parse;
    out << summary.str();
    out << "report written to " << (dir / "report.json").string() << "\n";
    return exit_code::ok;
}

/// Print the tree and cost-assumption reports, the martingale-family case
/// (or unavailable), the certificate check, and the truncated-cost bound on
/// the extracted strategies. Exit 0 iff nothing is violated.
inline int cmd_validate(const std::string& input, std::ostream& out, std::ostream& err) {
    std::optional<SwitchingProblem> loaded;
    try {
        loaded.emplace(load_problem(input));
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::parse;
    }
    const SwitchingProblem& problem = *loaded;

    const auto tree_report = validate_tree(problem.tree());
    detail::print_report(out, "tree", tree_report);
    const auto cost_report = check_assumption_costs(problem);
    detail::print_report(out, "switching costs", cost_report);
    if (!tree_report.empty()) {
        out << "martingale family: skipped (tree is malformed)\n";
        out << "result: invalid\n";
        return exit_code::violations;
    }
    bool ok = cost_report.empty();

    const auto constructed = construct_martingale_family(problem);
    if (!constructed) {
        out << "martingale family: unavailable (no constructive case applies)\n";
    } else {
        out << "martingale family: " << to_string(constructed->kind) << "\n";
        const auto hyp = check_hypothesis_m(constructed->family, problem);
        detail::print_report(out, "martingale certificate", hyp);
        ok = ok && hyp.empty();
        if (ok) {
            const ValueFamily Y = solve(problem);
            const NodeId root = problem.tree().root();
            for (int i = 1; i <= problem.mode_count(); ++i) {
                const Strategy s = extract_strategy(problem, Y, root, i);
                const CostBoundResult b = check_cost_bound(problem, s, constructed->family);
                out << "cost bound (start mode " << i << "): "
                    << (b.holds ? "holds" : "violated") << ", worst gap "
                    << detail::fmt(b.worst_gap) << "\n";
                ok = ok && b.holds;
            }
        }
    }
    out << "result: " << (ok ? "valid" : "invalid") << "\n";
    return ok ? exit_code::ok : exit_code::violations;
}

/// Compare solver values against brute-force enumeration at the root.
/// Exit 0 iff every |solver - oracle| gap is at most 1e-9.
inline int cmd_oracle(const std::string& input, int max_switches, std::ostream& out,
                      std::ostream& err) {
    std::optional<SwitchingProblem> loaded;
    try {
        loaded.emplace(load_problem(input));
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::parse;
    }
    const SwitchingProblem& problem = *loaded;

    std::vector<Violation> pre = validate_tree(problem.tree());
    const auto costs = check_assumption_costs(problem);
    pre.insert(pre.end(), costs.begin(), costs.end());
    if (!pre.empty()) {
        err << "error: problem fails the standing assumptions\n";
        for (const Violation& v : pre) err << "  " << format_violation(v) << "\n";
        return exit_code::assumptions;
    }

    const ScenarioTree& tree = problem.tree();
    const int m = problem.mode_count();
    if (max_switches < 0) max_switches = tree.horizon_steps() * (m - 1);

    std::optional<ValueFamily> Y;
    try {
        Y.emplace(solve(problem));
    } catch (const NonConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::non_convergence;
    }

    const NodeId root = tree.root();
    bool ok = true;
    out << "max switches: " << max_switches << "\n";
    try {
        for (int i = 1; i <= m; ++i) {
            const double solver_v = Y->mode(i)[root];
            const double oracle_v = oracle_value(problem, root, i, max_switches);
            const double gap = std::abs(solver_v - oracle_v);
            out << "mode " << i << ": solver " << detail::fmt(solver_v) << ", oracle "
                << detail::fmt(oracle_v) << ", gap " << detail::fmt(gap) << "\n";
            if (gap > 1e-9) ok = false;
        }
    } catch (const EnumerationGuardError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::guard;
    }
    out << "result: " << (ok ? "match" : "mismatch") << "\n";
    return ok ? exit_code::ok : exit_code::violations;
}

/// Write a seeded random problem file. Same options, same bytes.
inline int cmd_gen(std::uint64_t seed, int depth, int branching, int modes,
                   const std::string& output, std::ostream& out, std::ostream& err) {
    if (depth < 0 || branching < 1 || modes < 2) {
        err << "error: need depth >= 0, branching >= 1, modes >= 2\n";
        return exit_code::parse;
    }
    double node_estimate = 1.0, level = 1.0;
    for (int t = 0; t < depth; ++t) {
        level *= branching;
        node_estimate += level;
    }
    if (node_estimate > static_cast<double>(1 << 20)) {
        err << "error: tree would exceed the " << (1 << 20) << "-node cap\n";
        return exit_code::parse;
    }
    const GenOptions opts{seed, depth, branching, modes, 1.0};
    const SwitchingProblem problem = generate_problem(opts);
    if (!detail::write_text_file(output, problem_to_text(problem), err))
        return exit_code::parse;
    out << "wrote " << output << " (" << problem.tree().node_count() << " nodes, "
        << modes << " modes, seed " << seed << ")\n";
    return exit_code::ok;
}

/// Parse `args` (program name excluded) and dispatch. Streams are injected
/// so tests can capture output without a subprocess.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"exact optimal-switching solver on finite scenario trees"};
    app.require_subcommand(1);

    std::string solve_in;
    double tol = 1e-12;
    std::string solve_out;
    CLI::App* solve_cmd = app.add_subcommand("solve", "solve a problem file and write reports");
    solve_cmd->add_option("--input", solve_in, "problem JSON file")->required();
    solve_cmd->add_option("--tol", tol, "fixed-point tolerance (default 1e-12)");
    solve_cmd->add_option("--output", solve_out,
                          "directory for report.json, summary.txt, values.csv")
        ->required();

    std::string validate_in;
    CLI::App* validate_cmd =
        app.add_subcommand("validate", "check the standing assumptions and the martingale certificate");
    validate_cmd->add_option("--input", validate_in, "problem JSON file")->required();

    std::string oracle_in;
    int max_switches = -1;
    CLI::App* oracle_cmd =
        app.add_subcommand("oracle", "compare the solver against brute-force enumeration");
    oracle_cmd->add_option("--input", oracle_in, "problem JSON file")->required();
    oracle_cmd->add_option("--max-switches", max_switches,
                           "per-path switch budget (default: horizon * (modes - 1))");

    std::uint64_t seed = 1;
    int depth = 2, branching = 2, modes = 2;
    std::string gen_out;
    CLI::App* gen_cmd = app.add_subcommand("gen", "generate a seeded random problem file");
    gen_cmd->add_option("--seed", seed, "RNG seed");
    gen_cmd->add_option("--depth", depth, "time steps");
    gen_cmd->add_option("--branching", branching, "children per interior node");
    gen_cmd->add_option("--modes", modes, "mode count");
    gen_cmd->add_option("--output", gen_out, "output problem file")->required();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));  // CLI11 consumes a reversed vector
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_code::ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::parse;
    }

    if (solve_cmd->parsed()) return cmd_solve(solve_in, tol, solve_out, out, err);
    if (validate_cmd->parsed()) return cmd_validate(validate_in, out, err);
    if (oracle_cmd->parsed()) return cmd_oracle(oracle_in, max_switches, out, err);
    if (gen_cmd->parsed()) return cmd_gen(seed, depth, branching, modes, gen_out, out, err);
    err << "error: no command given\n";
    return exit_code::parse;
}

}  // namespace switchtree
