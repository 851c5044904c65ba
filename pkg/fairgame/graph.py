from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from json import JSONDecodeError, dumps, loads
from math import isfinite
from typing import (
    Any,
    Deque,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Set,
    Tuple,
    TypeAlias,
)

import networkx as nx
import numpy as np
import numpy.typing as npt
from semver import VersionInfo

from .error import GameFormatError, StrategyError

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-9

Row: TypeAlias = Tuple[Tuple[int, float], ...]
VertexSet: TypeAlias = FrozenSet[int]
ValueVector: TypeAlias = npt.NDArray[np.float64]
GameSerializable: TypeAlias = Dict[str, Any]


class PlayerClass(Enum):
    value: str

    MAX = "max"
    MIN = "min"
    PROB = "prob"


class Rule(Enum):
    value: str

    INITIAL_RANGE = "initial vertex out of range"
    EMPTY_POST = "empty successor list"
    SUCCESSOR_RANGE = "successor out of range"
    PROBABILITY_RANGE = "probability outside (0, 1]"
    PLAYER_PROBABILITY = "player edge probability is not 1"
    DUPLICATE_SUCCESSOR = "duplicate successor"
    ROW_SUM = "row sum"
    NEGATIVE_REWARD = "negative reward"
    NON_FINITE_REWARD = "non-finite reward"
    TERMINAL_REWARD = "terminal reward nonzero"


@dataclass(frozen=True)
class Violation:
    vertex: int
    rule: Rule
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.rule.value} at {self.vertex}" + (
            f" ({self.detail})" if self.detail else ""
        )


@dataclass(frozen=True)
class Vertex:
    player: PlayerClass
    reward: float
    succ: Row

    @classmethod
    def owned(cls, player: PlayerClass, reward: float, *targets: int) -> Vertex:
        return cls(player, float(reward), tuple((t, 1.0) for t in targets))

    @classmethod
    def random(cls, reward: float, distribution: Mapping[int, float]) -> Vertex:
        return cls(PlayerClass.PROB, float(reward), tuple(distribution.items()))

    @classmethod
    def absorbing(cls, vid: int, player: PlayerClass = PlayerClass.MAX) -> Vertex:
        return cls(player, 0.0, ((vid, 1.0),))

    @property
    def post(self) -> Tuple[int, ...]:
        return tuple(t for t, _ in self.succ)


@dataclass(frozen=True)
class GameGraph:
    VERSION = VersionInfo(1, 0, 0)

    vertices: Tuple[Vertex, ...]
    initial: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.vertices, tuple):
            object.__setattr__(self, "vertices", tuple(self.vertices))

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def player(self, v: int) -> PlayerClass:
        return self.vertices[v].player

    def reward(self, v: int) -> float:
        return self.vertices[v].reward

    def succ(self, v: int) -> Row:
        return self.vertices[v].succ

    def post(self, v: int) -> Tuple[int, ...]:
        return self.vertices[v].post

    def is_terminal(self, v: int) -> bool:
        succ = self.vertices[v].succ

        return len(succ) == 1 and succ[0][0] == v and succ[0][1] == 1.0

    def terminals(self) -> VertexSet:
        return frozenset(v for v in range(self.n) if self.is_terminal(v))

    def owned(self, player: PlayerClass) -> List[int]:
        """Non-terminal vertices of `player`, in id order."""

        return [
            v
            for v, vertex in enumerate(self.vertices)
            if vertex.player is player and not self.is_terminal(v)
        ]

    def edge_count(self) -> int:
        return sum(len(vertex.succ) for vertex in self.vertices)

    def rewards(self) -> ValueVector:
        return np.array([vertex.reward for vertex in self.vertices], dtype=np.float64)

    def serializable(self) -> GameSerializable:
        return {
            "n": self.n,
            "initial": self.initial,
            "vertices": [
                {
                    "id": v,
                    "class": vertex.player.value,
                    "reward": vertex.reward,
                    "succ": [[t, p] for t, p in vertex.succ],
                }
                for v, vertex in enumerate(self.vertices)
            ],
        }

    def dumps(self) -> str:
        return dumps(self.serializable())

    def save(self, filename: str) -> None:
        with open(filename, "w") as f:
            f.write(self.dumps())

    @classmethod
    def from_serializable(cls, data: Mapping[str, Any]) -> GameGraph:
        try:
            version = data.get("fileVersion")

            if version is not None:
                match VersionInfo.parse(str(version)).major:
                    case 1:
                        pass
                    case _:
                        raise GameFormatError(f"Unsupported file version {version}.")

            records = data["vertices"]
            n = int(data.get("n", len(records)))

            if n != len(records):
                raise GameFormatError(f"Expected {n} vertices, found {len(records)}.")

            vertices: List[Vertex] = []

            for index, record in enumerate(records):
                if int(record.get("id", index)) != index:
                    raise GameFormatError(f"Vertex ids must be dense; got {record['id']}.")

                vertices.append(
                    Vertex(
                        PlayerClass(record["class"]),
                        float(record["reward"]),
                        tuple((int(t), float(p)) for t, p in record["succ"]),
                    )
                )

            return cls(tuple(vertices), int(data.get("initial", 0)))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, GameFormatError):
                raise

            raise GameFormatError(f"Malformed game: {e}.") from e

    @classmethod
    def loads(cls, s: str) -> GameGraph:
        try:
            data = loads(s)
        except JSONDecodeError as e:
            raise GameFormatError(f"Malformed game JSON: {e}.") from e

        if not isinstance(data, dict):
            raise GameFormatError("Game JSON must be an object.")

        return cls.from_serializable(data)

    @classmethod
    def load(cls, filename: str) -> GameGraph:
        with open(filename, "r") as f:
            return cls.loads(f.read())


class InducedMdp(GameGraph):
    """A game in which one player's memoryless strategy has been fixed.

    The fixed player's vertices are probabilistic; at most one player class
    with choices remains.
    """

    @property
    def chooser(self) -> Optional[PlayerClass]:
        players = {
            vertex.player
            for v, vertex in enumerate(self.vertices)
            if vertex.player is not PlayerClass.PROB and not self.is_terminal(v)
        }

        return next(iter(players)) if len(players) == 1 else None


@dataclass(frozen=True)
class InducedChain:
    rows: Tuple[Row, ...]
    reward: Tuple[float, ...]
    initial: int = 0

    @property
    def n(self) -> int:
        return len(self.rows)

    def is_terminal(self, v: int) -> bool:
        row = self.rows[v]

        return len(row) == 1 and row[0][0] == v and row[0][1] == 1.0

    def terminals(self) -> VertexSet:
        return frozenset(v for v in range(self.n) if self.is_terminal(v))

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()

        g.add_nodes_from(range(self.n))
        g.add_edges_from((v, t) for v, row in enumerate(self.rows) for t, p in row if p > 0)

        return g

    def bottom_components(self) -> List[VertexSet]:
        g = self.graph()
        condensed = nx.condensation(g)
        members = nx.get_node_attributes(condensed, "members")

        return sorted(
            (
                frozenset(members[c])
                for c in condensed.nodes
                if condensed.out_degree(c) == 0
            ),
            key=min,
        )

    def reaches_terminal(self) -> VertexSet:
        pred: List[List[int]] = [[] for _ in range(self.n)]

        for v, row in enumerate(self.rows):
            for t, p in row:
                if p > 0 and t != v:
                    pred[t].append(v)

        seen: Set[int] = set(self.terminals())
        queue: Deque[int] = deque(sorted(seen))

        while queue:
            u = queue.popleft()

            for v in pred[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)

        return frozenset(seen)


@dataclass(frozen=True)
class DetMemorylessStrategy:
    owner: PlayerClass
    choice: Mapping[int, int] = field(default_factory=dict)

    def distribution(self, vertex: int) -> Row:
        try:
            return ((self.choice[vertex], 1.0),)
        except KeyError:
            raise StrategyError(vertex, f"of {self.owner.name} has no choice")

    def serializable(self) -> Dict[str, int]:
        return {str(v): int(self.choice[v]) for v in sorted(self.choice)}

    @classmethod
    def from_serializable(
        cls, owner: PlayerClass, data: Mapping[str, Any]
    ) -> DetMemorylessStrategy:
        return cls(owner, {int(v): int(w) for v, w in data.items()})


@dataclass(frozen=True)
class RandMemorylessStrategy:
    owner: PlayerClass
    choice: Mapping[int, Row] = field(default_factory=dict)

    def distribution(self, vertex: int) -> Row:
        try:
            return self.choice[vertex]
        except KeyError:
            raise StrategyError(vertex, f"of {self.owner.name} has no choice")

    @classmethod
    def uniform(cls, game: GameGraph, owner: PlayerClass) -> RandMemorylessStrategy:
        choice: Dict[int, Row] = {}

        for v in game.owned(owner):
            post = game.post(v)
            choice[v] = tuple((t, 1.0 / len(post)) for t in post)

        return cls(owner, choice)

    @classmethod
    def dirac(cls, strategy: DetMemorylessStrategy) -> RandMemorylessStrategy:
        return cls(strategy.owner, {v: ((w, 1.0),) for v, w in strategy.choice.items()})


Strategy: TypeAlias = DetMemorylessStrategy | RandMemorylessStrategy


def validate(game: GameGraph) -> List[Violation]:
    violations: List[Violation] = []
    n = game.n

    if not 0 <= game.initial < n:
        violations.append(Violation(game.initial, Rule.INITIAL_RANGE))

    for v, vertex in enumerate(game.vertices):
        if not isfinite(vertex.reward):
            violations.append(Violation(v, Rule.NON_FINITE_REWARD))
        elif vertex.reward < 0:
            violations.append(Violation(v, Rule.NEGATIVE_REWARD, f"{vertex.reward}"))

        if len(vertex.succ) == 0:
            violations.append(Violation(v, Rule.EMPTY_POST))

            continue

        targets = [t for t, _ in vertex.succ]

        for t, p in vertex.succ:
            if not 0 <= t < n:
                violations.append(Violation(v, Rule.SUCCESSOR_RANGE, f"{t}"))

            if not 0 < p <= 1:
                violations.append(Violation(v, Rule.PROBABILITY_RANGE, f"{t}: {p}"))
            elif vertex.player is not PlayerClass.PROB and p != 1.0:
                violations.append(Violation(v, Rule.PLAYER_PROBABILITY, f"{t}: {p}"))

        if len(set(targets)) != len(targets):
            violations.append(Violation(v, Rule.DUPLICATE_SUCCESSOR))

        if vertex.player is PlayerClass.PROB:
            total = sum(p for _, p in vertex.succ)

            if abs(total - 1.0) > ROW_TOLERANCE:
                violations.append(Violation(v, Rule.ROW_SUM, f"{total!r}"))

        if game.is_terminal(v) and vertex.reward != 0:
            violations.append(Violation(v, Rule.TERMINAL_REWARD, f"{vertex.reward}"))

    return violations


def terminals(game: GameGraph) -> VertexSet:
    return game.terminals()


def _strategy_row(game: GameGraph, strategy: Strategy, v: int) -> Row:
    row = tuple((t, p) for t, p in strategy.distribution(v) if p > 0)
    post = set(game.post(v))

    for t, _ in row:
        if t not in post:
            raise StrategyError(v, f"chooses {t} outside the successors")

    if abs(sum(p for _, p in row) - 1.0) > ROW_TOLERANCE:
        raise StrategyError(v, "distribution does not sum to 1")

    return tuple(sorted(row))


def induce_mdp(game: GameGraph, strategy: Strategy) -> InducedMdp:
    fixed = strategy.owner
    vertices: List[Vertex] = []

    for v, vertex in enumerate(game.vertices):
        if vertex.player is not fixed:
            vertices.append(vertex)
        elif game.is_terminal(v):
            vertices.append(Vertex(PlayerClass.PROB, vertex.reward, vertex.succ))
        else:
            row = _strategy_row(game, strategy, v)
            vertices.append(Vertex(PlayerClass.PROB, vertex.reward, row))

    return InducedMdp(tuple(vertices), game.initial)


def induce_chain(
    game: GameGraph,
    sigma1: Optional[Strategy] = None,
    sigma2: Optional[Strategy] = None,
) -> InducedChain:
    strategies: Dict[PlayerClass, Optional[Strategy]] = {
        PlayerClass.MAX: sigma1,
        PlayerClass.MIN: sigma2,
    }
    rows: List[Row] = []

    for v, vertex in enumerate(game.vertices):
        if vertex.player is PlayerClass.PROB or game.is_terminal(v):
            rows.append(vertex.succ)

            continue

        strategy = strategies[vertex.player]

        if strategy is None:
            raise StrategyError(v, f"of {vertex.player.name} is missing")

        rows.append(_strategy_row(game, strategy, v))

    return InducedChain(
        tuple(rows), tuple(vertex.reward for vertex in game.vertices), game.initial
    )


def to_vertex_list(values: Iterable[int]) -> List[int]:
    return sorted(int(v) for v in values)


def game_statistics(game: GameGraph) -> Dict[str, Any]:
    terminal_set = game.terminals()
    counts = {player: 0 for player in PlayerClass}

    for v, vertex in enumerate(game.vertices):
        if v not in terminal_set:
            counts[vertex.player] += 1

    return {
        "version": str(GameGraph.VERSION),
        "n": game.n,
        "initial": game.initial,
        "max": counts[PlayerClass.MAX],
        "min": counts[PlayerClass.MIN],
        "prob": counts[PlayerClass.PROB],
        "terminal": len(terminal_set),
        "edges": game.edge_count(),
        "terminals": to_vertex_list(terminal_set),
    }
