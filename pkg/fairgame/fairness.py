from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Deque, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx

from .graph import (
    GameGraph,
    PlayerClass,
    RandMemorylessStrategy,
    VertexSet,
    induce_mdp,
    to_vertex_list,
)

logger = logging.getLogger(__name__)

Adjacency = Sequence[Sequence[int]]


def positive_successors(game: GameGraph) -> List[Tuple[int, ...]]:
    return [tuple(t for t, p in vertex.succ if p > 0) for vertex in game.vertices]


def reverse(successors: Adjacency) -> List[List[int]]:
    pred: List[List[int]] = [[] for _ in range(len(successors))]

    for v, post in enumerate(successors):
        for t in post:
            pred[t].append(v)

    return pred


def forall_pre_f(game: GameGraph, target: Iterable[int]) -> VertexSet:
    """One application of the fair universal predecessor.

    Player 2 and probabilistic vertices qualify with a single edge into the
    target, Player 1 vertices only when every successor lies in it.
    """

    c = frozenset(target)
    result: Set[int] = set()

    for v, post in enumerate(positive_successors(game)):
        if game.player(v) is PlayerClass.MAX:
            if all(t in c for t in post):
                result.add(v)
        elif any(t in c for t in post):
            result.add(v)

    return frozenset(result)


def exists_pre_f(game: GameGraph, target: Iterable[int]) -> VertexSet:
    c = frozenset(target)

    return frozenset(
        v for v, post in enumerate(positive_successors(game)) if any(t in c for t in post)
    )


def attractor_ranks(
    game: GameGraph,
    seed: Iterable[int],
    successors: Optional[Adjacency] = None,
) -> Dict[int, int]:
    """Least fixed point of X = seed ∪ ∀Pre_f(X), with the round in which
    each vertex joins.

    Seed vertices have rank 0. A Player 1 vertex joins one round after its
    last successor, every other vertex one round after its first.
    `successors` restricts the edges considered; it defaults to the game's
    positive-probability edges.
    """

    post = [
        tuple(dict.fromkeys(p))
        for p in (positive_successors(game) if successors is None else successors)
    ]
    pred = reverse(post)
    missing = [len(p) for p in post]
    rank: Dict[int, int] = {}
    queue: Deque[int] = deque()

    for v in sorted(set(seed)):
        rank[v] = 0
        queue.append(v)

    while queue:
        u = queue.popleft()

        for v in pred[u]:
            if v in rank:
                continue

            if game.player(v) is PlayerClass.MAX:
                missing[v] -= 1

                if missing[v] > 0:
                    continue

            rank[v] = rank[u] + 1
            queue.append(v)

    return rank


def forall_pre_star(game: GameGraph, seed: Iterable[int]) -> VertexSet:
    return frozenset(attractor_ranks(game, seed))


def exists_pre_star(game: GameGraph, seed: Iterable[int]) -> VertexSet:
    pred = reverse(positive_successors(game))
    reached: Set[int] = set(seed)
    queue: Deque[int] = deque(sorted(reached))

    while queue:
        u = queue.popleft()

        for v in pred[u]:
            if v not in reached:
                reached.add(v)
                queue.append(v)

    return frozenset(reached)


def _trapped_region(game: GameGraph) -> VertexSet:
    return frozenset(range(game.n)) - forall_pre_star(game, game.terminals())


def non_stopping_witness(game: GameGraph) -> VertexSet:
    return exists_pre_star(game, _trapped_region(game))


def almost_sure_vertices(game: GameGraph) -> VertexSet:
    return frozenset(range(game.n)) - non_stopping_witness(game)


def is_stopping_under_fairness(game: GameGraph) -> Tuple[bool, VertexSet]:
    witness = non_stopping_witness(game)

    return not witness, witness


def trapped_end_component(game: GameGraph) -> VertexSet:
    """A bottom component of the region from which Player 1 can avoid the
    terminals forever, namely the one holding the smallest vertex id.
    Empty when the game is stopping under fairness."""

    region = _trapped_region(game)

    if not region:
        return frozenset()

    g = nx.DiGraph()
    g.add_nodes_from(region)
    g.add_edges_from(
        (v, t)
        for v in region
        for t, p in game.succ(v)
        if p > 0 and t in region
    )

    condensed = nx.condensation(g)
    members = nx.get_node_attributes(condensed, "members")
    bottoms = [
        frozenset(members[c]) for c in condensed.nodes if condensed.out_degree(c) == 0
    ]

    return min(bottoms, key=min)


def check_via_uniform_mdp(game: GameGraph) -> bool:
    mdp = induce_mdp(game, RandMemorylessStrategy.uniform(game, PlayerClass.MIN))

    return is_stopping_under_fairness(mdp)[0]


@dataclass(frozen=True)
class FairnessReport:
    stopping: bool
    witness: VertexSet
    almost_sure: VertexSet
    trapped: VertexSet

    def serializable(self) -> Dict[str, Any]:
        return {
            "stopping_under_fairness": self.stopping,
            "witness": to_vertex_list(self.witness),
            "almost_sure": to_vertex_list(self.almost_sure),
            "trapped_component": to_vertex_list(self.trapped),
        }


def check(game: GameGraph) -> FairnessReport:
    stopping, witness = is_stopping_under_fairness(game)
    report = FairnessReport(
        stopping,
        witness,
        frozenset(range(game.n)) - witness,
        frozenset() if stopping else trapped_end_component(game),
    )

    logger.info(
        "stopping under fairness: %s (witness of %d vertices)",
        stopping,
        len(witness),
    )

    return report
