from typing import List, Tuple

from pytest import fixture

from fairgame import (
    GameGraph,
    PlayerClass,
    RandomGameConfig,
    Vertex,
    gen_random_game,
    is_stopping_under_fairness,
)

MAX, MIN, PROB = PlayerClass.MAX, PlayerClass.MIN, PlayerClass.PROB

G1_MODEL = """
// v0 (Player 1, reward 1) -> v1 (Player 2) -> {v0, t}
player1 [go, halt];
player2 [back, stop];

module g1
  turn : [1..2] init 1;
  done : [0..1] init 0;

  [go] (turn=1) & (done=0) -> 1 : (turn'=2);
  [back] (turn=2) & (done=0) -> 1 : (turn'=1);
  [stop] (turn=2) & (done=0) -> 1 : (done'=1);
  [halt] (done=1) -> 1 : true;
endmodule

rewards
  (turn=1) & (done=0) : 1;
endrewards
"""


def corpus(
    count: int, low: int, high: int, stopping: bool = True, seeds: int = 5000
) -> List[Tuple[int, GameGraph]]:
    games = []

    for seed in range(seeds):
        n = low + seed % (high - low + 1)
        game = gen_random_game(RandomGameConfig(vertices=n, seed=seed))

        if stopping and not is_stopping_under_fairness(game)[0]:
            continue

        games.append((seed, game))

        if len(games) == count:
            break

    return games


@fixture
def g1() -> GameGraph:
    return GameGraph((Vertex.owned(MAX, 1, 1), Vertex.owned(MIN, 0, 0, 2), Vertex.absorbing(2)))


@fixture
def g2() -> GameGraph:
    return GameGraph((Vertex.random(1, {1: 0.5, 0: 0.5}), Vertex.absorbing(1)))


@fixture
def g3() -> GameGraph:
    return GameGraph(
        (Vertex.owned(MAX, 0, 1, 2), Vertex.owned(MAX, 0, 0), Vertex.absorbing(2))
    )


@fixture
def fair_loop() -> GameGraph:
    """Player 2 could idle at v0 forever for a value of 0; fairly it pays 5."""

    return GameGraph(
        (Vertex.owned(MIN, 0, 0, 1), Vertex.owned(MAX, 5, 2), Vertex.absorbing(2))
    )


@fixture
def g1_model() -> str:
    return G1_MODEL


@fixture(scope="session")
def small_games() -> List[Tuple[int, GameGraph]]:
    return corpus(60, 3, 6)


@fixture(scope="session")
def oracle_games() -> List[Tuple[int, GameGraph]]:
    return corpus(200, 3, 8)


@fixture(scope="session")
def random_games() -> List[Tuple[int, GameGraph]]:
    return corpus(500, 3, 50, stopping=False)
