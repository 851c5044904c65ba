from dataclasses import replace
from typing import Any, List, Tuple

import numpy as np
from pytest import approx, mark, raises

from fairgame import (
    DetMemorylessStrategy,
    GameGraph,
    PlayerClass,
    RandMemorylessStrategy,
    RandomGameConfig,
    Solution,
    Solver,
    Vertex,
    distances_to_terminal,
    evaluate_pair,
    gamma_apply,
    gen_random_game,
    induce_chain,
    induce_mdp,
    is_fair_det_strategy,
    is_stopping_under_fairness,
    linear_solve_mc_expected_reward,
    mdp_exact_value_max,
    mdp_exact_value_min_fair,
    oracle_value,
    solve,
    strategy_bounds,
    synthesize_max_strategy,
    synthesize_min_fair_strategy,
    upper_bound_vector,
    value_iteration_gfp,
)
from fairgame.error import (
    InvalidGameError,
    NonConvergenceError,
    NotStoppingUnderFairnessError,
    SingularSystemError,
    SolverError,
)
from fairgame.solver import EPSILON, BellmanOperator, bracket_gap, post_min

MAX, MIN, PROB = PlayerClass.MAX, PlayerClass.MIN, PlayerClass.PROB


def test_gamma_apply(g1: GameGraph, g2: GameGraph):
    assert gamma_apply(g1, np.zeros(3)).tolist() == [1.0, 0.0, 0.0]
    assert gamma_apply(g1, np.array([2.0, 1.0, 0.0])).tolist() == [2.0, 0.0, 0.0]
    assert gamma_apply(g2, np.array([2.0, 0.0])).tolist() == [2.0, 0.0]


def test_gamma_monotone(random_games: List[Tuple[int, GameGraph]]):
    for seed, game in random_games[:100]:
        rng = np.random.default_rng(seed)
        gamma = BellmanOperator(game)
        f = rng.random(game.n) * 10
        g = f + rng.random(game.n)

        assert np.all(gamma(f) <= gamma(g))


def test_linear_solve(g1: GameGraph, g2: GameGraph):
    assert linear_solve_mc_expected_reward(induce_chain(g2)).tolist() == approx([2.0, 0.0])

    x = evaluate_pair(
        g1, DetMemorylessStrategy(MAX, {0: 1}), DetMemorylessStrategy(MIN, {1: 2})
    )

    assert x.tolist() == [1.0, 0.0, 0.0]


def test_linear_solve_sparse(g2: GameGraph):
    x = linear_solve_mc_expected_reward(induce_chain(g2), dense_limit=0)

    assert x.tolist() == approx([2.0, 0.0])


def test_linear_solve_singular(g1: GameGraph):
    with raises(SingularSystemError) as e:
        evaluate_pair(
            g1, DetMemorylessStrategy(MAX, {0: 1}), DetMemorylessStrategy(MIN, {1: 0})
        )

    assert e.value.vertices == {0, 1}


def test_mdp_exact_value_max(g1: GameGraph, g2: GameGraph, g3: GameGraph):
    mdp = induce_mdp(g1, RandMemorylessStrategy.uniform(g1, MIN))

    assert mdp_exact_value_max(mdp).tolist() == approx([2.0, 1.0, 0.0])
    assert mdp_exact_value_max(g2).tolist() == approx([2.0, 0.0])

    with raises(SolverError):
        mdp_exact_value_max(g1)

    with raises(NotStoppingUnderFairnessError):
        mdp_exact_value_max(g3)


def test_mdp_policy_improvement():
    # the first policy exits at once; improving switches to the reward-3 detour
    mdp = GameGraph(
        (
            Vertex.owned(MAX, 1, 1, 2),
            Vertex.absorbing(1),
            Vertex.random(3, {1: 1.0}),
        )
    )

    assert mdp_exact_value_max(mdp).tolist() == approx([4.0, 0.0, 3.0])


def test_mdp_exact_value_min_fair(g1: GameGraph, fair_loop: GameGraph):
    mdp = induce_mdp(g1, DetMemorylessStrategy(MAX, {0: 1}))

    assert mdp_exact_value_min_fair(mdp).tolist() == [1.0, 0.0, 0.0]

    mdp = induce_mdp(fair_loop, DetMemorylessStrategy(MAX, {1: 2}))

    assert mdp_exact_value_min_fair(mdp).tolist() == approx([5.0, 5.0, 0.0])

    with raises(SolverError):
        mdp_exact_value_min_fair(g1)


def test_mdp_fair_policy_improvement():
    # the nearest exit costs 5, the longer one 2
    mdp = GameGraph(
        (
            Vertex.owned(MIN, 0, 1, 2),
            Vertex.random(5, {3: 1.0}),
            Vertex.random(1, {4: 1.0}),
            Vertex.absorbing(3),
            Vertex.random(1, {3: 1.0}),
        )
    )

    assert mdp_exact_value_min_fair(mdp).tolist() == approx([2.0, 5.0, 2.0, 0.0, 1.0])


def test_strategy_bounds(g1: GameGraph, fair_loop: GameGraph):
    low, high = strategy_bounds(
        g1, DetMemorylessStrategy(MAX, {0: 1}), DetMemorylessStrategy(MIN, {1: 2})
    )

    assert low.tolist() == high.tolist() == [1.0, 0.0, 0.0]
    assert bracket_gap(low, high) == 0.0

    low, high = strategy_bounds(
        fair_loop,
        DetMemorylessStrategy(MAX, {1: 2}),
        DetMemorylessStrategy(MIN, {0: 1}),
    )

    assert low.tolist() == approx(high.tolist())


def test_bracket_gap():
    assert bracket_gap(np.array([0.0, 10.0]), np.array([0.5, 12.0])) == 0.5
    assert bracket_gap(np.array([]), np.array([])) == 0.0


def test_upper_bound_vector(g1: GameGraph, g2: GameGraph):
    assert upper_bound_vector(g1).tolist() == approx([2.000002, 1.000001, 0.0])
    assert upper_bound_vector(g2).tolist() == approx([2.000002, 0.0])
    assert upper_bound_vector(g1, margin=0.0).tolist() == approx([2.0, 1.0, 0.0])


def test_value_iteration_g1(g1: GameGraph):
    residuals: List[float] = []
    result = value_iteration_gfp(
        g1, np.array([2.0, 1.0, 0.0]), on_iteration=lambda k, r: residuals.append(r)
    )

    assert result.values.tolist() == [1.0, 0.0, 0.0]
    assert result.iterations == 3
    assert result.converged
    assert residuals == [1.0, 1.0, 0.0]


def test_value_iteration_g2(g2: GameGraph):
    result = value_iteration_gfp(g2, np.array([2.000002, 0.0]))

    assert result.converged
    assert abs(result.values[0] - 2.0) / 2.0 <= 1e-6


def test_value_iteration_budget(g1: GameGraph):
    result = value_iteration_gfp(g1, np.array([2.0, 1.0, 0.0]), max_iterations=1)

    assert not result.converged
    assert result.iterations == 1
    assert result.values.tolist() == [2.0, 0.0, 0.0]


def test_distances_to_terminal(g1: GameGraph):
    allowed = [(1,), (2,), (2,)]

    assert distances_to_terminal(g1, allowed) == {0: 2, 1: 1, 2: 0}


def test_synthesize(g1: GameGraph):
    values = np.array([1.0, 0.0, 0.0])

    assert synthesize_max_strategy(g1, values).choice == {0: 1}
    assert synthesize_min_fair_strategy(g1, values).choice == {1: 2}
    assert post_min(g1, values, 1) == [2]


def test_synthesize_fair_tie(fair_loop: GameGraph):
    values = np.array([5.0, 5.0, 0.0])

    assert post_min(fair_loop, values, 0) == [0, 1]
    assert synthesize_min_fair_strategy(fair_loop, values).choice == {0: 1}


def test_solve_g1(g1: GameGraph):
    solution = solve(g1)

    assert np.allclose(solution.values, [1.0, 0.0, 0.0], rtol=0, atol=1e-9)
    assert solution.sigma1.choice == {0: 1}
    assert solution.sigma2.choice == {1: 2}
    assert solution.converged


def test_solve_g2(g2: GameGraph):
    solution = solve(g2)

    assert abs(solution.values[0] - 2.0) / 2.0 <= 1e-6
    assert solution.sigma1.choice == {}
    assert solution.sigma2.choice == {}


def test_solve_g3(g3: GameGraph):
    with raises(NotStoppingUnderFairnessError) as e:
        solve(g3)

    assert e.value.witness == {0, 1}


def test_solve_fair_loop(fair_loop: GameGraph):
    solution = solve(fair_loop)

    assert solution.values.tolist() == approx([5.0, 5.0, 0.0])
    assert solution.sigma2.choice == {0: 1}


def leaky_loop() -> GameGraph:
    """Player 2 can leave a loop that leaks to the terminal with probability
    1e-4 or take an exit worth 1."""

    return GameGraph(
        (
            Vertex.owned(MIN, 0, 1, 2),
            Vertex.random(0, {0: 0.9999, 3: 0.0001}),
            Vertex.owned(MAX, 1, 3),
            Vertex.absorbing(3),
        )
    )


def test_solve_leaky_loop():
    game = leaky_loop()
    solution = solve(game)

    assert solution.converged
    assert np.allclose(solution.values, [0.0, 0.0, 1.0, 0.0], rtol=0, atol=1e-9)
    assert solution.sigma2.choice == {0: 1}
    assert np.allclose(
        evaluate_pair(game, solution.sigma1, solution.sigma2),
        solution.values,
        rtol=1e-4,
        atol=1e-9,
    )
    assert np.allclose(solution.values, oracle_value(game), rtol=0, atol=1e-4)


def test_solve_invalid(g1: GameGraph):
    game = GameGraph(g1.vertices[:2] + (Vertex(MAX, 1.0, ((2, 1.0),)),))

    with raises(InvalidGameError):
        solve(game)


def test_solve_non_convergence(g1: GameGraph):
    with raises(NonConvergenceError) as e:
        solve(g1, max_iterations=1)

    assert e.value.solution is not None
    assert not e.value.solution.converged
    assert e.value.iterations == 1


def test_solve_epsilon(g1: GameGraph):
    with raises(ValueError):
        Solver(g1, epsilon=0.0)

    with raises(ValueError):
        Solver(g1, margin=-0.5)


def test_solver_events(g1: GameGraph):
    events: List[Tuple[str, Any]] = []
    solver = Solver(g1)

    solver.add_event_handler("upper_bound", lambda s, args: events.append(("upper_bound", args)))
    solver.add_event_handler("iteration", lambda s, args: events.append(("iteration", args)))
    solver.add_event_handler(
        "converged", lambda s, args: events.append(("converged", args)), once=True
    )
    solver.solve()
    solver.solve()

    names = [name for name, _ in events]

    assert names.count("upper_bound") == 2
    assert names.count("iteration") == 6
    assert names.count("converged") == 1
    assert events[names.index("converged")][1] == (3, 0.0)


def test_solver_remove_event_handler(g1: GameGraph):
    events: List[Any] = []
    solver = Solver(g1)

    def handler(s: Solver, args: Any):
        events.append(args)

    solver.add_event_handler("strategies", handler)
    solver.remove_event_handler("strategies", handler)
    solver.remove_event_handler("strategies", handler)
    solver.solve()

    assert events == []


def test_solution_loads(g1: GameGraph):
    solution = solve(g1)
    loaded = Solution.loads(solution.dumps())

    assert loaded.values.tolist() == solution.values.tolist()
    assert loaded.sigma1 == solution.sigma1
    assert loaded.sigma2 == solution.sigma2
    assert loaded.dumps() == solution.dumps()


def test_markov_chain_values():
    config = RandomGameConfig(vertices=10, seed=0, classes=(PROB,))

    for seed in range(40):
        game = gen_random_game(replace(config, seed=seed))

        if not is_stopping_under_fairness(game)[0]:
            continue

        values = solve(game, epsilon=1e-12).values
        exact = linear_solve_mc_expected_reward(induce_chain(game))

        assert np.allclose(values, exact, rtol=1e-6, atol=1e-9), seed


def test_soundness(small_games: List[Tuple[int, GameGraph]]):
    for seed, game in small_games:
        upper = upper_bound_vector(game)
        gamma = BellmanOperator(game)
        reference = oracle_value(game)
        f = upper

        for _ in range(50):
            g = np.minimum(f, gamma(f))

            assert np.all(g <= f)
            assert np.all(g >= reference - 1e-9), seed

            f = g

        solution = solve(game)

        assert np.all(upper >= solution.values)
        assert solution.residual <= 10 * 1e-6


def test_strategies(small_games: List[Tuple[int, GameGraph]]):
    for seed, game in small_games:
        solution = solve(game)
        x = evaluate_pair(game, solution.sigma1, solution.sigma2)

        assert is_fair_det_strategy(game, solution.sigma2), seed
        assert np.allclose(x, solution.values, rtol=1e-4, atol=1e-6), seed


def test_oracle_equivalence(small_games: List[Tuple[int, GameGraph]]):
    for seed, game in small_games:
        values = solve(game).values

        assert np.allclose(values, oracle_value(game), rtol=0, atol=1e-4), seed


@mark.slow
def test_oracle_equivalence_up_to_eight(oracle_games: List[Tuple[int, GameGraph]]):
    assert len(oracle_games) == 200

    for seed, game in oracle_games:
        solution = solve(game)

        assert np.allclose(solution.values, oracle_value(game), rtol=0, atol=1e-4), seed
        assert is_fair_det_strategy(game, solution.sigma2), seed


def test_fixed_point(small_games: List[Tuple[int, GameGraph]]):
    for seed, game in small_games:
        values = solve(game).values
        slack = 10 * EPSILON * np.maximum(1.0, values)

        assert np.all(np.abs(values - gamma_apply(game, values)) <= slack), seed
