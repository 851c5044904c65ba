from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

import networkx as nx
import numpy as np

from .graph import GameGraph, PlayerClass, Vertex

logger = logging.getLogger(__name__)

Edge = Tuple[int, int, bool]


class RobortaVersion(Enum):
    value: str

    A = "A"
    B = "B"
    C = "C"


def _table(name: str, rows: List[List[int]]) -> str:
    body = ", ".join("[" + ", ".join(str(x) for x in row) + "]" for row in rows)

    return f"const int[][] {name} = [{body}];"


@dataclass(frozen=True)
class RobortaConfig:
    width: int = 4
    length: int = 4
    p: float = 0.1
    q: float = 0.0
    version: RobortaVersion = RobortaVersion.A
    seed: int = 0
    moves: Optional[Tuple[Tuple[int, ...], ...]] = None
    rewards: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self) -> None:
        if self.width < 1 or self.length < 1:
            raise ValueError("grid dimensions must be positive")

        if not (0 <= self.p < 1 and 0 <= self.q < 1):
            raise ValueError("failure probabilities must lie in [0, 1)")

        for name, table in (("moves", self.moves), ("rewards", self.rewards)):
            if table is not None and (
                len(table) != self.width or any(len(c) != self.length for c in table)
            ):
                raise ValueError(f"{name} must be a {self.width}x{self.length} table")

        if self.moves is not None and any(m not in (0, 1, 2) for c in self.moves for m in c):
            raise ValueError("moves entries must be 0, 1 or 2")

        if self.rewards is not None and any(r < 0 for c in self.rewards for r in c):
            raise ValueError("rewards must be non-negative")

    def tables(self) -> Tuple[List[List[int]], List[List[int]]]:
        """MOVES and REWARD indexed [col][row].

        Each row draws its sideways moves from either {0, 1} or {1, 2}, so a
        row never splits into cells the robot cannot reach by wrapping.
        """

        rng = np.random.default_rng(self.seed)
        moves = [[0] * self.length for _ in range(self.width)]

        for row in range(self.length):
            options = (0, 1) if rng.integers(2) == 0 else (1, 2)

            for col in range(self.width):
                moves[col][row] = int(options[rng.integers(2)])

        rewards = rng.integers(0, 6, size=(self.width, self.length)).tolist()

        if self.moves is not None:
            moves = [list(c) for c in self.moves]

        if self.rewards is not None:
            rewards = [list(c) for c in self.rewards]

        return moves, rewards


def gen_roborta(config: RobortaConfig) -> str:
    moves, rewards = config.tables()
    failing_yellow = config.version is RobortaVersion.C
    failing_green = config.version is not RobortaVersion.A

    def light(label: str, color: int, fails: bool) -> str:
        head = f"  [{label}] (light=0) & (row<LENGTH) -> "

        if fails:
            return head + f"1-Q : (light'={color}) + Q : (light'=3);"

        return head + f"1 : (light'={color});"

    lines = [
        f"// Roborta vs. the fair light, version {config.version.value}, "
        f"{config.width}x{config.length}, seed {config.seed}",
        f"const int WIDTH = {config.width};",
        f"const int LENGTH = {config.length};",
        f"const double P = {float(config.p)!r};",
    ]

    if config.version is not RobortaVersion.A:
        lines.append(f"const double Q = {float(config.q)!r};")

    lines += [
        _table("MOVES", moves),
        _table("REWARD", rewards),
        "",
        "player1 [r_l, r_r, r_f, escape];",
        "player2 [l_y, l_g];",
        "",
        "module roborta",
        "  col : [0..WIDTH-1] init 0;",
        "  row : [0..LENGTH] init 0;",
        "  light : [0..3] init 0; // 0 red, 1 yellow, 2 green, 3 off",
        "",
        "  // light moves",
        light("l_y", 1, failing_yellow),
        light("l_g", 2, failing_green),
        "",
        "  // robot moves",
        "  [r_l] ((light=1) | (light=3)) & (MOVES[col][row] <= 1)"
        " -> 1-P : (light'=0) & (col'=(col-1)%WIDTH) + P : (light'=0);",
        "  [r_r] ((light=1) | (light=3)) & (MOVES[col][row] >= 1)"
        " -> 1-P : (light'=0) & (col'=(col+1)%WIDTH) + P : (light'=0);",
        "  [r_f] ((light=2) | (light=3)) & (row<LENGTH)"
        " -> 1-P : (light'=0) & (row'=row+1) + P : (light'=0);",
        "  [escape] (row=LENGTH) -> 1 : true;",
        "endmodule",
        "",
        "rewards",
        "  (light=0) & (row<LENGTH) : REWARD[col][row];",
        "endrewards",
    ]

    return "\n".join(lines) + "\n"


# six waypoints on a ring with one safe chord and two dangerous shortcuts
DEFAULT_UAV_EDGES: Tuple[Edge, ...] = (
    (0, 1, False),
    (1, 2, False),
    (2, 3, False),
    (3, 4, False),
    (4, 5, False),
    (5, 0, False),
    (1, 4, False),
    (0, 2, True),
    (3, 5, True),
)
DEFAULT_UAV_CHECKPOINTS: FrozenSet[int] = frozenset({2, 5})


@dataclass(frozen=True)
class UavConfig:
    waypoints: int = 6
    d: float = 0.5
    s: float = 0.1
    seed: int = 0
    edges: Optional[Tuple[Edge, ...]] = None
    checkpoints: Optional[FrozenSet[int]] = None
    rewards: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.waypoints < 2:
            raise ValueError("a road network needs at least two waypoints")

        if not 0 <= self.d <= 1:
            raise ValueError("delegation probability must lie in [0, 1]")

        if not 0 < self.s <= 1:
            raise ValueError("stop probability must lie in (0, 1]")

        if self.rewards is not None and (
            len(self.rewards) != self.waypoints or any(r < 0 for r in self.rewards)
        ):
            raise ValueError("one non-negative reward per waypoint is required")

    def layout(self) -> Tuple[Tuple[Edge, ...], FrozenSet[int], Tuple[int, ...]]:
        rng = np.random.default_rng(self.seed)
        n = self.waypoints

        if self.edges is not None:
            edges = self.edges
        elif n == 6:
            edges = DEFAULT_UAV_EDGES
        else:
            ring = [(i, (i + 1) % n, False) for i in range(n)] if n > 2 else [(0, 1, False)]
            chords: List[Edge] = []
            existing = {frozenset((a, b)) for a, b, _ in ring}

            for _ in range(n // 2):
                a, b = (int(x) for x in rng.choice(n, size=2, replace=False))

                if frozenset((a, b)) not in existing:
                    existing.add(frozenset((a, b)))
                    chords.append((min(a, b), max(a, b), bool(rng.random() < 0.3)))

            edges = tuple(ring + chords)

        if self.checkpoints is not None:
            checkpoints = self.checkpoints
        elif self.edges is None and n == 6:
            checkpoints = DEFAULT_UAV_CHECKPOINTS
        else:
            count = max(1, n // 3)
            checkpoints = frozenset(
                int(x) for x in rng.choice(np.arange(1, n), size=min(count, n - 1), replace=False)
            )

        rewards = (
            self.rewards
            if self.rewards is not None
            else tuple(int(x) for x in rng.integers(1, 11, size=n))
        )

        if any(not (0 <= a < n and 0 <= b < n) or a == b for a, b, _ in edges):
            raise ValueError("edge endpoints must be distinct waypoints")

        g = nx.Graph()
        g.add_nodes_from(range(n))
        g.add_edges_from((a, b) for a, b, _ in edges)

        if not nx.is_connected(g):
            raise ValueError("the road network is not connected")

        if any(not 0 <= c < n for c in checkpoints):
            raise ValueError("checkpoint out of range")

        return edges, checkpoints, rewards


def gen_uav(config: UavConfig) -> str:
    """The UAV versus operator model.

    Phases: 0 operator decides to capture or loiter, 1 capture is recorded,
    2 piloting is assigned, 3 stopped, 4 UAV pilots from a checkpoint,
    5 operator pilots from a checkpoint.
    """

    edges, checkpoints, rewards = config.layout()
    n = config.waypoints
    marks = [f"v{i}" for i in range(n)]
    reset = " & ".join(["(phase'=3)", "(pos'=0)"] + [f"({m}'=0)" for m in marks])
    uav: List[str] = ["land", "halt"]
    operator: List[str] = ["capture", "loiter"]
    commands: List[str] = [
        "  [capture] (phase=0) -> 1 : (phase'=1);",
        "  [loiter] (phase=0) -> 1 : true;",
    ]

    for i in range(n):
        label = f"mark_{i}"
        uav.append(label)
        commands.append(f"  [{label}] (phase=1) & (pos={i}) -> 1 : ({marks[i]}'=1) & (phase'=2);")

    for i in sorted(checkpoints):
        label = f"handoff_{i}"
        operator.append(label)
        commands.append(
            f"  [{label}] (phase=2) & (pos={i}) -> D : (phase'=4) + 1-D : (phase'=5);"
        )

    dangerous: Dict[Tuple[int, int], bool] = {}

    for a, b, danger in edges:
        for key in ((a, b), (b, a)):
            dangerous[key] = dangerous.get(key, False) or danger

    neighbours = sorted((a, b, danger) for (a, b), danger in dangerous.items())

    for a, b, danger in neighbours:
        outcome = (
            f"1 : {reset}"
            if danger
            else f"1-S : (pos'={b}) & (phase'=0) + S : {reset}"
        )
        piloting = "(phase=4)" if a in checkpoints else "(phase=2)"
        uav.append(f"fly_{a}_{b}")
        commands.append(f"  [fly_{a}_{b}] {piloting} & (pos={a}) -> {outcome};")

        if a in checkpoints:
            operator.append(f"opfly_{a}_{b}")
            commands.append(f"  [opfly_{a}_{b}] (phase=5) & (pos={a}) -> {outcome};")

    landing = " | ".join(
        f"((pos={i}) & {'(phase=4)' if i in checkpoints else '(phase=2)'})" for i in range(n)
    )
    commands += [
        f"  [land] {landing} -> 1 : {reset};",
        "  [halt] (phase=3) -> 1 : true;",
    ]

    lines = [
        f"// UAV vs. operator, {n} waypoints, seed {config.seed}",
        f"const double D = {float(config.d)!r};",
        f"const double S = {float(config.s)!r};",
        "",
        f"player1 [{', '.join(uav)}];",
        f"player2 [{', '.join(operator)}];",
        "",
        "module uav",
        f"  pos : [0..{n - 1}] init 0;",
        "  phase : [0..5] init 0;",
        *(f"  {m} : [0..1] init 0;" for m in marks),
        "",
        *commands,
        "endmodule",
        "",
        "rewards",
        *(
            f"  (phase=1) & (pos={i}) & ({marks[i]}=0) : {rewards[i]};"
            for i in range(n)
            if rewards[i]
        ),
        "endrewards",
    ]

    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RandomGameConfig:
    vertices: int = 8
    seed: int = 0
    max_successors: int = 3
    terminals: int = 1
    max_reward: int = 4
    classes: Tuple[PlayerClass, ...] = field(
        default=(PlayerClass.MAX, PlayerClass.MIN, PlayerClass.PROB)
    )

    def __post_init__(self) -> None:
        if not 1 <= self.terminals < self.vertices:
            raise ValueError("need at least one terminal and one other vertex")

        if self.max_successors < 1:
            raise ValueError("max_successors must be positive")


def gen_random_game(config: RandomGameConfig) -> GameGraph:
    """A seeded random game whose terminals carry the highest ids.

    Successors lean towards higher ids, so a fair share of the games is
    stopping under fairness while the rest still exercise the traps.
    """

    rng = np.random.default_rng(config.seed)
    n = config.vertices
    first_terminal = n - config.terminals
    vertices: List[Vertex] = []

    for v in range(first_terminal):
        player = config.classes[int(rng.integers(len(config.classes)))]
        reward = float(rng.integers(0, config.max_reward + 1))
        k = int(rng.integers(1, min(config.max_successors, n) + 1))
        weights = np.array([3.0 if t > v else 1.0 for t in range(n)])

        if k == 1:
            # a lone self-loop would make a rewarded terminal
            weights[v] = 0.0

        targets = sorted(
            int(t) for t in rng.choice(n, size=k, replace=False, p=weights / weights.sum())
        )

        if player is PlayerClass.PROB:
            shares = rng.integers(1, 5, size=k).astype(np.float64)
            probabilities = shares / shares.sum()
            vertices.append(
                Vertex(player, reward, tuple(zip(targets, (float(p) for p in probabilities))))
            )
        else:
            vertices.append(Vertex.owned(player, reward, *targets))

    for t in range(first_terminal, n):
        vertices.append(Vertex.absorbing(t))

    return GameGraph(tuple(vertices), 0)
