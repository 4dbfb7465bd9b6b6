#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "switchtree/snell.hpp"
#include "switchtree/tree.hpp"
#include "test_util.hpp"

using namespace switchtree;

namespace {

TreePtr coin_tree() {
    // one step, two equally likely outcomes
    std::vector<NodeRecord> r{{0, 0, no_parent, 1.0}, {1, 1, 0, 0.5}, {2, 1, 0, 0.5}};
    return make_tree(std::move(r), 1, 1.0);
}

}  // namespace

TEST_CASE("the envelope is the running maximum of reward and continuation", "[snell]") {
    const TreePtr tree = coin_tree();
    AdaptedProcess U(tree, {1.0, 0.0, 4.0});
    const AdaptedProcess Z = snell_envelope(U);
    REQUIRE(Z[0] == 2.0);  // continue: E = 2 beats stopping at 1
    REQUIRE(Z[1] == 0.0);
    REQUIRE(Z[2] == 4.0);
}

TEST_CASE("the first optimal stop waits while continuation is strictly better",
          "[snell]") {
    const TreePtr tree = coin_tree();
    AdaptedProcess U(tree, {1.0, 0.0, 4.0});
    const AdaptedProcess Z = snell_envelope(U);
    const StoppingRule rule = first_optimal_stop(Z, U, 0);
    REQUIRE(rule.stop[0] == 0);
    REQUIRE(rule.stop[1] == 1);
    REQUIRE(rule.stop[2] == 1);
    REQUIRE(realized_stop_nodes(*tree, rule, 0) == std::vector<NodeId>{1, 2});
    REQUIRE(expected_value_at_stop(U, rule, 0) == Z[0]);
}

TEST_CASE("earliest stop semantics ignore stop marks behind an earlier stop", "[snell]") {
    const TreePtr tree = coin_tree();
    StoppingRule rule{std::vector<std::uint8_t>{1, 1, 1}};  // stop already at the root
    REQUIRE(realized_stop_nodes(*tree, rule, 0) == std::vector<NodeId>{0});
    AdaptedProcess U(tree, {7.0, 0.0, 4.0});
    REQUIRE(expected_value_at_stop(U, rule, 0) == 7.0);
}

TEST_CASE("the decomposition splits a supermartingale into martingale and drift",
          "[snell][doob]") {
    const TreePtr tree = coin_tree();
    AdaptedProcess Z(tree, {5.0, 2.0, 4.0});  // E[Z_1] = 3, so drift 2 at the root
    const DoobDecomposition d = doob_decompose(Z);
    REQUIRE(d.compensator[0] == 0.0);
    REQUIRE(d.compensator[1] == 2.0);
    REQUIRE(d.compensator[2] == 2.0);
    REQUIRE(d.martingale[0] == 5.0);
    REQUIRE(d.martingale[1] == 4.0);
    REQUIRE(d.martingale[2] == 6.0);
    REQUIRE(is_martingale(d.martingale, 1e-12));
}

TEST_CASE("the decomposition rejects processes that drift upward", "[snell][doob]") {
    const TreePtr tree = coin_tree();
    AdaptedProcess Z(tree, {0.0, 1.0, 1.0});
    REQUIRE_THROWS_AS(doob_decompose(Z), std::invalid_argument);
}

TEST_CASE("the envelope solves optimal stopping against rule enumeration",
          "[snell][property]") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 60; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 3, 3);
        const AdaptedProcess U = testutil::random_process(rng, tree);
        const AdaptedProcess Z = snell_envelope(U);
        const double best = testutil::best_stopping_value(U, tree->root());
        REQUIRE_THAT(Z[tree->root()], Catch::Matchers::WithinAbs(best, 1e-12));
        // the first optimal stop attains the envelope value
        const StoppingRule rule = first_optimal_stop(Z, U, tree->root());
        REQUIRE_THAT(expected_value_at_stop(U, rule, tree->root()),
                     Catch::Matchers::WithinAbs(Z[tree->root()], 1e-12));
    }
}

TEST_CASE("the envelope dominates the reward and no smaller supermartingale does",
          "[snell][property]") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 4, 3);
        const AdaptedProcess U = testutil::random_process(rng, tree);
        const AdaptedProcess Z = snell_envelope(U);
        for (NodeId v = 0; v < tree->node_count(); ++v) {
            REQUIRE(Z[v] >= U[v]);
            if (!tree->is_leaf(v)) REQUIRE(Z[v] >= one_step_expectation(Z, v));
        }
        const AdaptedProcess W = testutil::random_dominating_supermartingale(rng, U);
        for (NodeId v = 0; v < tree->node_count(); ++v) REQUIRE(W[v] >= Z[v] - 1e-12);
    }
}

TEST_CASE("freezing the envelope at the first optimal stop leaves a martingale",
          "[snell][property]") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 60; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 4, 3);
        const AdaptedProcess U = testutil::random_process(rng, tree);
        const AdaptedProcess Z = snell_envelope(U);
        const StoppingRule rule = first_optimal_stop(Z, U, tree->root());
        const AdaptedProcess stopped = stopped_process(Z, rule, tree->root());
        REQUIRE(is_martingale(stopped, 1e-12));
        REQUIRE(stopped[tree->root()] == Z[tree->root()]);
    }
}

TEST_CASE("decomposition invariants hold on random supermartingales",
          "[snell][doob][property]") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 60; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 4, 3);
        const AdaptedProcess Z = testutil::random_supermartingale(rng, tree);
        const DoobDecomposition d = doob_decompose(Z);
        REQUIRE(d.compensator[tree->root()] == 0.0);
        REQUIRE(is_martingale(d.martingale, 1e-12));
        for (NodeId v = 0; v < tree->node_count(); ++v) {
            // reconstruction holds to rounding and the drift only accumulates
            REQUIRE_THAT(d.martingale[v] - d.compensator[v],
                         Catch::Matchers::WithinAbs(Z[v], 1e-12));
            const NodeRecord& rec = tree->node(v);
            if (rec.parent != no_parent)
                REQUIRE(d.compensator[v] >= d.compensator[rec.parent]);
        }
        // predictable: the increment into time t is known at t - 1
        for (NodeId v = 0; v < tree->node_count(); ++v) {
            const auto& kids = tree->children(v);
            for (std::size_t k = 1; k < kids.size(); ++k)
                REQUIRE(d.compensator[kids[k]] == d.compensator[kids[0]]);
        }
    }
}

TEST_CASE("the martingale check accepts martingales and rejects strict drift",
          "[snell][property]") {
    std::mt19937_64 rng(45);
    for (int trial = 0; trial < 40; ++trial) {
        const TreePtr tree = testutil::random_tree(rng, 1 + trial % 3, 3);
        REQUIRE(is_martingale(testutil::random_martingale(rng, tree), 1e-9));
        if (tree->horizon_steps() > 0) {
            // slack of at least 0.01 at every interior node
            REQUIRE_FALSE(is_martingale(testutil::random_supermartingale(rng, tree), 1e-3));
        }
    }
}
