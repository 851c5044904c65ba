from dataclasses import replace
from json import dumps
from tempfile import NamedTemporaryFile
from typing import List, Tuple

from pytest import mark, raises

from fairgame import (
    DetMemorylessStrategy,
    GameGraph,
    PlayerClass,
    RandMemorylessStrategy,
    Rule,
    Vertex,
    game_statistics,
    induce_chain,
    induce_mdp,
    terminals,
    validate,
)
from fairgame.error import GameFormatError, StrategyError

MAX, MIN, PROB = PlayerClass.MAX, PlayerClass.MIN, PlayerClass.PROB


def with_vertex(game: GameGraph, v: int, vertex: Vertex) -> GameGraph:
    vertices = list(game.vertices)
    vertices[v] = vertex

    return GameGraph(tuple(vertices), game.initial)


def rules(game: GameGraph) -> List[Tuple[int, Rule]]:
    return [(violation.vertex, violation.rule) for violation in validate(game)]


def test_validate(g1: GameGraph, g2: GameGraph, g3: GameGraph):
    assert validate(g1) == []
    assert validate(g2) == []
    assert validate(g3) == []


def test_validate_terminal_reward(g1: GameGraph):
    game = with_vertex(g1, 2, replace(Vertex.absorbing(2), reward=1.0))

    assert rules(game) == [(2, Rule.TERMINAL_REWARD)]
    assert str(validate(game)[0]).startswith("terminal reward nonzero at 2")


def test_validate_row_sum(g2: GameGraph):
    game = with_vertex(g2, 0, Vertex.random(1, {1: 0.45, 0: 0.45}))

    assert rules(game) == [(0, Rule.ROW_SUM)]


@mark.parametrize(
    "vertex, rule",
    [
        (Vertex(MAX, 0.0, ()), Rule.EMPTY_POST),
        (Vertex.owned(MAX, 0, 7), Rule.SUCCESSOR_RANGE),
        (Vertex(MAX, 0.0, ((1, 0.5), (2, 0.5))), Rule.PLAYER_PROBABILITY),
        (Vertex.owned(MIN, 0, 1, 1), Rule.DUPLICATE_SUCCESSOR),
        (Vertex.owned(MAX, -1, 1), Rule.NEGATIVE_REWARD),
        (Vertex.owned(MAX, float("nan"), 1), Rule.NON_FINITE_REWARD),
        (Vertex.random(0, {1: 1.5, 2: -0.5}), Rule.PROBABILITY_RANGE),
    ],
)
def test_validate_rules(g1: GameGraph, vertex: Vertex, rule: Rule):
    assert (0, rule) in rules(with_vertex(g1, 0, vertex))


def test_validate_initial(g1: GameGraph):
    assert rules(GameGraph(g1.vertices, 3)) == [(3, Rule.INITIAL_RANGE)]


def test_terminals(g1: GameGraph):
    assert terminals(g1) == {2}
    assert g1.is_terminal(2)
    assert not g1.is_terminal(0)


def test_terminals_none():
    game = GameGraph((Vertex.owned(MAX, 1, 1), Vertex.owned(MIN, 0, 0)))

    assert terminals(game) == frozenset()


def test_terminals_all():
    game = GameGraph(tuple(Vertex.absorbing(v) for v in range(4)))

    assert terminals(game) == {0, 1, 2, 3}
    assert game.owned(MAX) == []


def test_induce_mdp_uniform(g1: GameGraph):
    mdp = induce_mdp(g1, RandMemorylessStrategy.uniform(g1, MIN))

    assert mdp.player(1) is PROB
    assert mdp.succ(1) == ((0, 0.5), (2, 0.5))
    assert mdp.succ(0) == g1.succ(0)
    assert mdp.rewards().tolist() == g1.rewards().tolist()
    assert mdp.chooser is MAX
    assert validate(mdp) == []


def test_induce_mdp_dirac(g1: GameGraph):
    sigma2 = RandMemorylessStrategy.dirac(DetMemorylessStrategy(MIN, {1: 2}))
    mdp = induce_mdp(g1, sigma2)

    assert mdp.succ(1) == ((2, 1.0),)


def test_induce_mdp_without_min(g2: GameGraph):
    mdp = induce_mdp(g2, RandMemorylessStrategy.uniform(g2, MIN))

    assert mdp.vertices == g2.vertices
    assert mdp.chooser is None


def test_induce_mdp_fixing_max(g1: GameGraph):
    mdp = induce_mdp(g1, DetMemorylessStrategy(MAX, {0: 1}))

    assert mdp.player(0) is PROB
    assert mdp.chooser is MIN


def test_induce_mdp_missing_choice(g1: GameGraph):
    with raises(StrategyError):
        induce_mdp(g1, DetMemorylessStrategy(MIN, {}))


def test_induce_chain(g1: GameGraph):
    sigma1 = DetMemorylessStrategy(MAX, {0: 1})
    chain = induce_chain(g1, sigma1, DetMemorylessStrategy(MIN, {1: 2}))

    assert chain.rows == (((1, 1.0),), ((2, 1.0),), ((2, 1.0),))
    assert chain.reaches_terminal() == {0, 1, 2}
    assert chain.bottom_components() == [frozenset({2})]

    chain = induce_chain(g1, sigma1, DetMemorylessStrategy(MIN, {1: 0}))

    assert chain.rows[1] == ((0, 1.0),)
    assert chain.reaches_terminal() == {2}
    assert chain.bottom_components() == [frozenset({0, 1}), frozenset({2})]


def test_induce_chain_probabilistic(g2: GameGraph):
    chain = induce_chain(g2)

    assert chain.rows == tuple(g2.succ(v) for v in range(g2.n))


def test_induce_chain_illegal_choice(g1: GameGraph):
    sigma1 = DetMemorylessStrategy(MAX, {0: 1})

    with raises(StrategyError):
        induce_chain(g1, sigma1, DetMemorylessStrategy(MIN, {1: 1}))

    with raises(StrategyError):
        induce_chain(g1, sigma1, None)

    with raises(StrategyError):
        DetMemorylessStrategy(MIN, {}).distribution(1)


def test_induce_mdp_then_chain(random_games: List[Tuple[int, GameGraph]]):
    for _, game in random_games[:100]:
        sigma1 = DetMemorylessStrategy(MAX, {v: game.post(v)[0] for v in game.owned(MAX)})
        sigma2 = RandMemorylessStrategy.uniform(game, MIN)
        mdp = induce_mdp(game, sigma2)

        assert induce_chain(mdp, sigma1).rows == induce_chain(game, sigma1, sigma2).rows


def test_serializable(g1: GameGraph):
    assert g1.serializable() == {
        "n": 3,
        "initial": 0,
        "vertices": [
            {"id": 0, "class": "max", "reward": 1.0, "succ": [[1, 1.0]]},
            {"id": 1, "class": "min", "reward": 0.0, "succ": [[0, 1.0], [2, 1.0]]},
            {"id": 2, "class": "max", "reward": 0.0, "succ": [[2, 1.0]]},
        ],
    }


def test_loads(g1: GameGraph, g2: GameGraph):
    assert GameGraph.loads(g1.dumps()) == g1
    assert GameGraph.loads(g2.dumps()) == g2


def test_save_load(g2: GameGraph):
    with NamedTemporaryFile() as f:
        g2.save(f.name)

        assert GameGraph.load(f.name) == g2


@mark.parametrize("version", ["1.0.0", "1.3.2"])
def test_loads_file_version(g1: GameGraph, version: str):
    data = g1.serializable()
    data["fileVersion"] = version

    assert GameGraph.loads(dumps(data)) == g1


@mark.parametrize(
    "text",
    [
        "{",
        "[]",
        '{"vertices": [{"id": 0, "class": "max", "reward": 0}]}',
        '{"vertices": [{"id": 1, "class": "max", "reward": 0, "succ": [[1, 1]]}]}',
        '{"n": 2, "vertices": [{"id": 0, "class": "max", "reward": 0, "succ": [[0, 1]]}]}',
        '{"vertices": [{"id": 0, "class": "both", "reward": 0, "succ": [[0, 1]]}]}',
        '{"fileVersion": "2.0.0", "vertices": []}',
    ],
)
def test_loads_malformed(text: str):
    with raises(GameFormatError):
        GameGraph.loads(text)


def test_statistics(g1: GameGraph):
    assert game_statistics(g1) == {
        "version": "1.0.0",
        "n": 3,
        "initial": 0,
        "max": 1,
        "min": 1,
        "prob": 0,
        "terminal": 1,
        "edges": 4,
        "terminals": [2],
    }


def test_strategy_serializable():
    sigma = DetMemorylessStrategy(MIN, {4: 1, 1: 3})

    assert sigma.serializable() == {"1": 3, "4": 1}
    assert DetMemorylessStrategy.from_serializable(MIN, sigma.serializable()) == sigma
