from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations, product
from math import prod
from typing import Any, Callable, Dict, Iterator, List, Tuple

import numpy as np

from .error import OracleError, OracleSizeError, OracleTrapError
from .graph import (
    DetMemorylessStrategy,
    GameGraph,
    PlayerClass,
    RandMemorylessStrategy,
    Strategy,
    ValueVector,
    VertexSet,
    induce_chain,
)
from .solver import evaluate_pair

logger = logging.getLogger(__name__)

ORACLE_OWNED_LIMIT = 12
ORACLE_PAIR_LIMIT = 100_000

# slack used to pick uniformly optimal strategies out of the enumeration
OPTIMALITY_SLACK = 1e-9


def _guard_owned(game: GameGraph) -> None:
    for player in (PlayerClass.MAX, PlayerClass.MIN):
        owned = len(game.owned(player))

        if owned > ORACLE_OWNED_LIMIT:
            raise OracleSizeError(f"{player.name} vertices", owned, ORACLE_OWNED_LIMIT)


def _guard_pairs(pairs: int) -> None:
    if pairs > ORACLE_PAIR_LIMIT:
        raise OracleSizeError("strategy pairs", pairs, ORACLE_PAIR_LIMIT)


def space_size(game: GameGraph, player: PlayerClass) -> int:
    return prod(len(game.post(v)) for v in game.owned(player))


def strategy_space(game: GameGraph, player: PlayerClass) -> Iterator[DetMemorylessStrategy]:
    """Every deterministic memoryless strategy of `player`, lexicographically
    by vertex id and then successor id."""

    owned = game.owned(player)

    for choice in product(*(sorted(game.post(v)) for v in owned)):
        yield DetMemorylessStrategy(player, dict(zip(owned, choice)))


def support_space(game: GameGraph) -> Iterator[RandMemorylessStrategy]:
    """Player 2 memoryless strategies up to their supports, each support
    played uniformly."""

    owned = game.owned(PlayerClass.MIN)
    supports = [
        [
            subset
            for k in range(1, len(game.post(v)) + 1)
            for subset in combinations(sorted(game.post(v)), k)
        ]
        for v in owned
    ]

    for choice in product(*supports):
        yield RandMemorylessStrategy(
            PlayerClass.MIN,
            {
                v: tuple((t, 1.0 / len(subset)) for t in subset)
                for v, subset in zip(owned, choice)
            },
        )


def _open_components(
    game: GameGraph, sigma1: Strategy, sigma2: Strategy
) -> List[Tuple[VertexSet, bool]]:
    """Non-terminal bottom components of the induced chain, each flagged
    with whether it keeps every successor of its Player 2 vertices."""

    terminal = game.terminals()
    chain = induce_chain(game, sigma1, sigma2)
    result = []

    for component in chain.bottom_components():
        if component & terminal:
            continue

        fair = all(
            set(game.post(v)) <= component
            for v in component
            if game.player(v) is PlayerClass.MIN
        )
        result.append((component, fair))

    return result


def is_fair_det_strategy(game: GameGraph, sigma2: Strategy) -> bool:
    _guard_owned(game)
    _guard_pairs(space_size(game, PlayerClass.MAX))

    return all(
        fair
        for sigma1 in strategy_space(game, PlayerClass.MAX)
        for _, fair in _open_components(game, sigma1, sigma2)
    )


def oracle_stopping(game: GameGraph) -> bool:
    _guard_owned(game)

    supports = prod(2 ** len(game.post(v)) - 1 for v in game.owned(PlayerClass.MIN))
    _guard_pairs(space_size(game, PlayerClass.MAX) * supports)
    logger.debug("oracle_stopping enumerates %d supports", supports)

    for sigma2 in support_space(game):
        trapped = False
        fair = True

        for sigma1 in strategy_space(game, PlayerClass.MAX):
            for _, component_fair in _open_components(game, sigma1, sigma2):
                if component_fair:
                    trapped = True
                else:
                    fair = False

                    break

            if not fair:
                break

        if fair and trapped:
            return False

    return True


def _vector(values: ValueVector) -> Dict[str, float]:
    return {str(v): float(x) for v, x in enumerate(values)}


@dataclass(frozen=True)
class OracleResult:
    values: ValueVector
    sigma1: DetMemorylessStrategy
    sigma2: DetMemorylessStrategy
    pairs: int
    fair_strategies: int

    def serializable(self) -> Dict[str, Any]:
        return {
            "values": _vector(self.values),
            "sigma1": self.sigma1.serializable(),
            "sigma2": self.sigma2.serializable(),
            "pairs": self.pairs,
            "fair_strategies": self.fair_strategies,
        }


def _first(vectors: np.ndarray, accept: Callable[[ValueVector], bool], fallback: int) -> int:
    return next((i for i, vector in enumerate(vectors) if accept(vector)), fallback)


def oracle_result(game: GameGraph) -> OracleResult:
    """Max-min values over deterministic memoryless strategies, Player 2
    restricted to fair ones, assembled per vertex."""

    _guard_owned(game)
    sigma1s = list(strategy_space(game, PlayerClass.MAX))
    sigma2s = list(strategy_space(game, PlayerClass.MIN))
    _guard_pairs(len(sigma1s) * len(sigma2s))

    fair = [s for s in sigma2s if is_fair_det_strategy(game, s)]

    if not fair:
        raise OracleError("No deterministic fair strategy exists for Player 2.")

    table = np.empty((len(sigma1s), len(fair), game.n), dtype=np.float64)

    for i, sigma1 in enumerate(sigma1s):
        for j, sigma2 in enumerate(fair):
            open_components = _open_components(game, sigma1, sigma2)

            if open_components:
                raise OracleTrapError(open_components[0][0])

            table[i, j] = evaluate_pair(game, sigma1, sigma2)

    worst = table.min(axis=1)
    best = table.max(axis=0)
    values = worst.max(axis=0)
    slack = OPTIMALITY_SLACK * np.maximum(1.0, values)
    initial = game.initial

    sigma1 = sigma1s[
        _first(
            worst,
            lambda vector: bool(np.all(vector >= values - slack)),
            int(np.argmax(worst[:, initial])),
        )
    ]
    sigma2 = fair[
        _first(
            best,
            lambda vector: bool(np.all(vector <= values + slack)),
            int(np.argmin(best[:, initial])),
        )
    ]
    logger.info(
        "oracle evaluated %d pairs with %d fair Player 2 strategies",
        len(sigma1s) * len(fair),
        len(fair),
    )

    return OracleResult(values, sigma1, sigma2, len(sigma1s) * len(fair), len(fair))


def oracle_value(game: GameGraph) -> ValueVector:
    return oracle_result(game).values
