#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <vector>

#include "switchtree/switching.hpp"
#include "switchtree/tree.hpp"
#include "test_util.hpp"

using namespace switchtree;

namespace {

// single edge 0 -> 1, three modes, every off-diagonal cost 0.3
SwitchingProblem three_mode_tie_problem() {
    std::vector<NodeRecord> r{{0, 0, no_parent, 1.0}, {1, 1, 0, 1.0}};
    TreePtr tree = make_tree(std::move(r), 1, 1.0);
    std::vector<AdaptedProcess> psi{AdaptedProcess::constant(tree, 0.0),
                                    AdaptedProcess::constant(tree, 1.0),
                                    AdaptedProcess::constant(tree, 1.0)};
    std::vector<AdaptedProcess> gamma;
    for (int i = 1; i <= 3; ++i)
        for (int j = 1; j <= 3; ++j)
            gamma.push_back(AdaptedProcess::constant(tree, i == j ? 0.0 : 0.3));
    std::vector<std::vector<double>> terminal(3, std::vector<double>(2, 0.0));
    return SwitchingProblem(tree, std::move(psi), std::move(gamma), std::move(terminal));
}

}  // namespace

TEST_CASE("the idle or run example solves to its documented root values",
          "[switching]") {
    const SwitchingProblem p1 = testutil::p1_problem();
    const SolveResult res = solve_detailed(p1);
    REQUIRE(res.values.mode(1)[0] == 0.6);  // switch at t=0: 1.0 earned minus 0.4 cost
    REQUIRE(res.values.mode(2)[0] == 1.0);  // already running, never switch
    REQUIRE(res.values.mode(1)[1] == 0.0);
    REQUIRE(res.values.mode(2)[1] == 0.0);
    REQUIRE(res.iterations == 2);
    REQUIRE(res.residual == 0.0);
}

TEST_CASE("with no switches allowed the value is reward accumulation only",
          "[switching]") {
    const SwitchingProblem p1 = testutil::p1_problem();
    const ValueFamily y0 = solve_n_switches(p1, 0);
    REQUIRE(y0.mode(1)[0] == 0.0);
    REQUIRE(y0.mode(2)[0] == 1.0);
    REQUIRE_THROWS_AS(solve_n_switches(p1, -1), std::invalid_argument);
}

TEST_CASE("zero switch values match direct path accumulation", "[switching][property]") {
    std::mt19937_64 rng(301);
    for (int trial = 0; trial < 30; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 4, 3);
        const int m = 2 + trial % 3;
        const SwitchingProblem problem = testutil::signed_cost_problem(rng, tree, m);
        const ValueFamily y0 = solve_n_switches(problem, 0);
        const auto pp = path_probabilities(*tree);
        for (int i = 1; i <= m; ++i) {
            double expect = 0.0;
            for (NodeId v = 0; v < tree->node_count(); ++v) {
                if (tree->is_leaf(v))
                    expect += pp[v] * problem.terminal(i, v);
                else
                    expect += pp[v] * problem.psi(i)[v] * tree->dt();
            }
            REQUIRE_THAT(y0.mode(i)[tree->root()],
                         Catch::Matchers::WithinAbs(expect, 1e-12));
        }
    }
}

TEST_CASE("the switch obstacle reads terminal rewards at leaves and best alternatives elsewhere",
          "[switching]") {
    const SwitchingProblem p1 = testutil::p1_problem();
    const ValueFamily Y = solve(p1);
    REQUIRE(obstacle(1, Y, p1, 1) == 0.0);        // leaf: terminal reward
    REQUIRE(obstacle(1, Y, p1, 0) == 1.0 - 0.4);  // switch into mode 2
    REQUIRE(obstacle(2, Y, p1, 0) == 0.6 - 0.4);  // switch back is affordable but useless
}

TEST_CASE("value layers are monotone in the switch budget and reach the solved values",
          "[switching][property]") {
    std::mt19937_64 rng(302);
    for (int trial = 0; trial < 25; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 3, 3);
        const int m = 2 + trial % 2;
        const SwitchingProblem problem = testutil::signed_cost_problem(rng, tree, m);
        const int cap = tree->horizon_steps() * (m - 1);
        ValueFamily prev = solve_n_switches(problem, 0);
        for (int n = 1; n <= cap; ++n) {
            const ValueFamily cur = solve_n_switches(problem, n);
            for (int i = 1; i <= m; ++i)
                for (NodeId v = 0; v < tree->node_count(); ++v)
                    REQUIRE(cur.mode(i)[v] >= prev.mode(i)[v]);
            prev = cur;
        }
        const ValueFamily solved = solve(problem);
        for (int i = 1; i <= m; ++i)
            for (NodeId v = 0; v < tree->node_count(); ++v)
                REQUIRE_THAT(prev.mode(i)[v],
                             Catch::Matchers::WithinAbs(solved.mode(i)[v], 1e-12));
    }
}

TEST_CASE("extracted strategies realize the solved value at every node and mode",
          "[switching][property]") {
    std::mt19937_64 rng(303);
    for (int trial = 0; trial < 25; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 3, 2);
        const int m = 2 + trial % 3;
        const SwitchingProblem problem = testutil::signed_cost_problem(rng, tree, m);
        const ValueFamily Y = solve(problem);
        for (NodeId v = 0; v < tree->node_count(); ++v) {
            for (int i = 1; i <= m; ++i) {
                const Strategy s = extract_strategy(problem, Y, v, i);
                REQUIRE_THAT(evaluate(problem, s),
                             Catch::Matchers::WithinAbs(Y.mode(i)[v], 1e-9));
            }
        }
    }
}

TEST_CASE("extraction breaks exact ties toward the smallest mode", "[switching]") {
    const SwitchingProblem problem = three_mode_tie_problem();
    const ValueFamily Y = solve(problem);
    REQUIRE(Y.mode(1)[0] == 0.7);  // modes 2 and 3 both offer 1.0 - 0.3
    const Strategy s = extract_strategy(problem, Y, 0, 1);
    REQUIRE(s.decisions.size() == 2);  // switch at the root, then cap at the leaf
    REQUIRE(s.decisions[0].stop.stop[0] == 1);
    REQUIRE(s.decisions[0].target[0] == 2);
    REQUIRE_THAT(evaluate(problem, s), Catch::Matchers::WithinAbs(0.7, 1e-12));
}

TEST_CASE("a decision firing at a leaf pays nothing and keeps its mode", "[switching]") {
    const SwitchingProblem p1 = testutil::p1_problem();
    Strategy s;
    s.start_node = 0;
    s.start_mode = 2;
    SwitchDecision dec{StoppingRule{std::vector<std::uint8_t>{0, 1}},
                       std::vector<int>{0, 1}};
    s.decisions.push_back(dec);
    REQUIRE(evaluate(p1, s) == 1.0);  // run the whole step, cost never charged
    const auto switches = num_switches(p1, s);
    REQUIRE(switches.at(1) == 0);
    const RealizationResult r = realize(p1, s);
    REQUIRE(r.violations.empty());
    REQUIRE(r.paths.size() == 1);
    REQUIRE(r.paths[0].events.size() == 1);
    REQUIRE(r.paths[0].events[0].from_mode == r.paths[0].events[0].to_mode);
}

TEST_CASE("inadmissible strategies are reported with their defect", "[switching]") {
    const SwitchingProblem p1 = testutil::p1_problem();
    SECTION("switch into the current mode") {
        Strategy s{0, 1, {SwitchDecision{StoppingRule{{1, 0}}, {1, 0}}}};
        const RealizationResult r = realize(p1, s);
        REQUIRE_FALSE(r.violations.empty());
        REQUIRE(r.violations[0].rule == "switch-target-same");
        REQUIRE_THROWS_AS(evaluate(p1, s), std::invalid_argument);
    }
    SECTION("missing target") {
        Strategy s{0, 1, {SwitchDecision{StoppingRule{{1, 0}}, {0, 0}}}};
        REQUIRE(realize(p1, s).violations[0].rule == "switch-target-missing");
    }
    SECTION("target out of range") {
        Strategy s{0, 1, {SwitchDecision{StoppingRule{{1, 0}}, {5, 0}}}};
        REQUIRE(realize(p1, s).violations[0].rule == "switch-target-range");
    }
}

TEST_CASE("mode indicators are constant along each scenario between switches",
          "[switching]") {
    const SwitchingProblem p1 = testutil::p1_problem();
    const ValueFamily Y = solve(p1);
    const Strategy s = extract_strategy(p1, Y, 0, 1);
    const ModeIndicator ind = mode_indicator(p1, s);
    REQUIRE(ind.mode[0] == 2);  // switched on the spot
    REQUIRE(ind.mode[1] == 2);
}

TEST_CASE("accumulated reward integrates the rate along the path", "[switching]") {
    const SwitchingProblem p1 = testutil::p1_problem();
    const AdaptedProcess acc = accumulated_reward(p1, 2);
    REQUIRE(acc[0] == 0.0);
    REQUIRE(acc[1] == 1.0);
}

TEST_CASE("free switching cycles make the scheme diverge and throw", "[switching]") {
    std::vector<NodeRecord> r{{0, 0, no_parent, 1.0}, {1, 1, 0, 1.0}};
    TreePtr tree = make_tree(std::move(r), 1, 1.0);
    std::vector<AdaptedProcess> psi(2, AdaptedProcess::constant(tree, 0.0));
    std::vector<AdaptedProcess> gamma{
        AdaptedProcess::constant(tree, 0.0), AdaptedProcess::constant(tree, -1.0),
        AdaptedProcess::constant(tree, -1.0), AdaptedProcess::constant(tree, 0.0)};
    std::vector<std::vector<double>> terminal(2, std::vector<double>(2, 0.0));
    const SwitchingProblem bad(tree, std::move(psi), std::move(gamma), std::move(terminal));
    REQUIRE_THROWS_AS(solve(bad), NonConvergenceError);
}

TEST_CASE("the problem constructor rejects inconsistent shapes", "[switching]") {
    std::vector<NodeRecord> r{{0, 0, no_parent, 1.0}, {1, 1, 0, 1.0}};
    TreePtr tree = make_tree(std::move(r), 1, 1.0);
    const AdaptedProcess zero = AdaptedProcess::constant(tree, 0.0);
    REQUIRE_THROWS_AS(
        SwitchingProblem(tree, {zero}, {zero}, {{0.0, 0.0}}),
        std::invalid_argument);  // one mode is not a switching problem
    REQUIRE_THROWS_AS(
        SwitchingProblem(tree, {zero, zero}, {zero, zero, zero}, {{0.0, 0.0}, {0.0, 0.0}}),
        std::invalid_argument);  // gamma must be m*m
    REQUIRE_THROWS_AS(SwitchingProblem(tree, {zero, zero},
                                       {zero, zero, zero, zero}, {{0.0}, {0.0}}),
                      std::invalid_argument);  // terminal must cover every node slot
}

TEST_CASE("mode parallel solving matches the serial sweep bit for bit", "[switching]") {
    std::mt19937_64 rng(304);
    const TreePtr tree = testutil::random_tree(rng, 3, 3);
    const SwitchingProblem problem = testutil::signed_cost_problem(rng, tree, 4);
    const ValueFamily serial = solve(problem);
    ::setenv("SWITCH_THREADS", "4", 1);
    const ValueFamily parallel = solve(problem);
    ::unsetenv("SWITCH_THREADS");
    for (int i = 1; i <= 4; ++i)
        for (NodeId v = 0; v < tree->node_count(); ++v)
            REQUIRE(parallel.mode(i)[v] == serial.mode(i)[v]);
}
