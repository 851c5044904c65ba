from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from json import JSONDecodeError, dumps, loads
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Set,
    Tuple,
    TypeAlias,
)

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
from scipy.linalg import LinAlgError, LinAlgWarning, lu_factor, lu_solve
from scipy.sparse.linalg import splu

from .error import (
    GameFormatError,
    InvalidGameError,
    NonConvergenceError,
    NotStoppingUnderFairnessError,
    SingularSystemError,
    SolverError,
    SynthesisError,
)
from .fairness import attractor_ranks, is_stopping_under_fairness, positive_successors
from .graph import (
    DetMemorylessStrategy,
    GameGraph,
    InducedChain,
    PlayerClass,
    RandMemorylessStrategy,
    Strategy,
    ValueVector,
    induce_chain,
    induce_mdp,
    validate,
)

logger = logging.getLogger(__name__)

EPSILON = 1e-6
MAX_ITERATIONS = 10**6
MARGIN = 1e-6
POST_MIN_TOLERANCE = 1e-9
IMPROVEMENT_TOLERANCE = 1e-12
DENSE_LIMIT = 2000

# post^min widening stops here; past it the values are not trusted
POST_MIN_TOLERANCE_CEILING = 1e-3

Handler: TypeAlias = Callable[["Solver", Tuple[Any, ...]], None]
Indices: TypeAlias = npt.NDArray[np.intp]


class BellmanOperator:
    """The functional Γ of a fixed game, vectorised.

    Probabilistic rows go through a sparse matrix product, player rows through
    segmented max/min reductions over their successor lists. Terminals map
    to 0.
    """

    def __init__(self, game: GameGraph) -> None:
        self.n = game.n
        self.reward = game.rewards()
        terminal = game.terminals()
        prob = [
            v
            for v in range(game.n)
            if game.player(v) is PlayerClass.PROB and v not in terminal
        ]
        rows, cols, data = [], [], []

        for i, v in enumerate(prob):
            for t, p in game.succ(v):
                rows.append(i)
                cols.append(t)
                data.append(p)

        self._prob = np.array(prob, dtype=np.intp)
        self._matrix = sp.csr_matrix(
            (data, (rows, cols)), shape=(len(prob), game.n), dtype=np.float64
        )
        self._max = self._segments(game, game.owned(PlayerClass.MAX))
        self._min = self._segments(game, game.owned(PlayerClass.MIN))

    @staticmethod
    def _segments(
        game: GameGraph, owned: List[int]
    ) -> Tuple[Indices, Indices, Indices]:
        targets: List[int] = []
        starts: List[int] = []

        for v in owned:
            starts.append(len(targets))
            targets.extend(game.post(v))

        return (
            np.array(owned, dtype=np.intp),
            np.array(targets, dtype=np.intp),
            np.array(starts, dtype=np.intp),
        )

    def __call__(self, f: ValueVector) -> ValueVector:
        out = np.zeros(self.n, dtype=np.float64)

        if len(self._prob):
            out[self._prob] = self.reward[self._prob] + self._matrix @ f

        for (owned, targets, starts), reduce in (
            (self._max, np.maximum.reduceat),
            (self._min, np.minimum.reduceat),
        ):
            if len(owned):
                out[owned] = self.reward[owned] + reduce(f[targets], starts)

        return out


def gamma_apply(game: GameGraph, f: ValueVector) -> ValueVector:
    return BellmanOperator(game)(np.asarray(f, dtype=np.float64))


def linear_solve_mc_expected_reward(
    chain: InducedChain, dense_limit: int = DENSE_LIMIT
) -> ValueVector:
    """Expected total reward of an absorbing Markov chain.

    Solves (I - A) x = r over the non-terminal rows, A being the transition
    matrix restricted to them. Every vertex has to reach a terminal, else
    SingularSystemError names the ones that cannot.
    """

    stuck = frozenset(range(chain.n)) - chain.reaches_terminal()

    if stuck:
        raise SingularSystemError(stuck)

    terminal = chain.terminals()
    transient = [v for v in range(chain.n) if v not in terminal]
    x = np.zeros(chain.n, dtype=np.float64)

    if not transient:
        return x

    index = {v: i for i, v in enumerate(transient)}
    rows, cols, data = [], [], []

    for i, v in enumerate(transient):
        for t, p in chain.rows[v]:
            if t in index:
                rows.append(i)
                cols.append(index[t])
                data.append(p)

    m = len(transient)
    a = sp.csr_matrix((data, (rows, cols)), shape=(m, m), dtype=np.float64)
    system = sp.identity(m, dtype=np.float64, format="csc") - a.tocsc()
    b = np.array([chain.reward[v] for v in transient], dtype=np.float64)

    try:
        if m <= dense_limit:
            with warnings.catch_warnings():
                warnings.simplefilter("error", LinAlgWarning)
                solution = lu_solve(lu_factor(system.toarray()), b)
        else:
            solution = splu(system.tocsc()).solve(b)
    except (LinAlgError, LinAlgWarning, RuntimeError) as e:
        raise SingularSystemError() from e

    if not np.all(np.isfinite(solution)):
        raise SingularSystemError()

    x[transient] = np.maximum(solution, 0.0)

    return x


def evaluate_pair(
    game: GameGraph,
    sigma1: Optional[Strategy],
    sigma2: Optional[Strategy],
    dense_limit: int = DENSE_LIMIT,
) -> ValueVector:
    return linear_solve_mc_expected_reward(
        induce_chain(game, sigma1, sigma2), dense_limit
    )


def mdp_exact_value_max(mdp: GameGraph, dense_limit: int = DENSE_LIMIT) -> ValueVector:
    """Maximal expected total reward of a Max-only MDP by policy iteration."""

    if mdp.owned(PlayerClass.MIN):
        raise SolverError("Policy iteration expects an MDP without Min vertices.")

    stopping, witness = is_stopping_under_fairness(mdp)

    if not stopping:
        raise NotStoppingUnderFairnessError(witness)

    owned = mdp.owned(PlayerClass.MAX)
    choice = {v: min(mdp.post(v)) for v in owned}
    seen: Set[Tuple[int, ...]] = set()
    rounds = 0

    while True:
        rounds += 1
        seen.add(tuple(choice[v] for v in owned))
        x = evaluate_pair(
            mdp, DetMemorylessStrategy(PlayerClass.MAX, dict(choice)), None, dense_limit
        )
        switched = 0

        for v in owned:
            threshold = x[choice[v]] + IMPROVEMENT_TOLERANCE * max(1.0, x[v])
            best = max(sorted(mdp.post(v)), key=lambda t: x[t])

            if x[best] > threshold:
                choice[v] = best
                switched += 1

        logger.debug("policy iteration round %d: %d switches", rounds, switched)

        if not switched:
            return x

        if tuple(choice[v] for v in owned) in seen:
            logger.warning("policy iteration revisited a policy after %d rounds", rounds)

            return x


def mdp_exact_value_min_fair(
    mdp: GameGraph, dense_limit: int = DENSE_LIMIT
) -> ValueVector:
    """Minimal expected total reward of a Min-only MDP over the strategies
    that reach the terminals almost surely.

    Policy iteration from the policy stepping towards the nearest terminal.
    Only strict improvements are taken, so every visited policy terminates.
    """

    if mdp.owned(PlayerClass.MAX):
        raise SolverError("Fair policy iteration expects an MDP without Max vertices.")

    stopping, witness = is_stopping_under_fairness(mdp)

    if not stopping:
        raise NotStoppingUnderFairnessError(witness)

    owned = mdp.owned(PlayerClass.MIN)
    ranks = distances_to_terminal(mdp)
    choice = {v: min(mdp.post(v), key=lambda t: (ranks[t], t)) for v in owned}
    seen: Set[Tuple[int, ...]] = set()
    rounds = 0

    while True:
        rounds += 1
        seen.add(tuple(choice[v] for v in owned))
        x = evaluate_pair(
            mdp, None, DetMemorylessStrategy(PlayerClass.MIN, dict(choice)), dense_limit
        )
        switched = 0

        for v in owned:
            threshold = x[choice[v]] - IMPROVEMENT_TOLERANCE * max(1.0, x[v])
            best = min(sorted(mdp.post(v)), key=lambda t: x[t])

            if x[best] < threshold:
                choice[v] = best
                switched += 1

        logger.debug("fair policy iteration round %d: %d switches", rounds, switched)

        if not switched:
            return x

        if tuple(choice[v] for v in owned) in seen:
            logger.warning(
                "fair policy iteration revisited a policy after %d rounds", rounds
            )

            return x


def strategy_bounds(
    game: GameGraph,
    sigma1: DetMemorylessStrategy,
    sigma2: DetMemorylessStrategy,
    dense_limit: int = DENSE_LIMIT,
) -> Tuple[ValueVector, ValueVector]:
    """Exact bracket around the value from a pair of candidate strategies.

    The lower end is what `sigma1` guarantees against every terminating
    Player 2, the upper end what the fair `sigma2` concedes to the best
    Player 1 response.
    """

    low = mdp_exact_value_min_fair(induce_mdp(game, sigma1), dense_limit)
    high = mdp_exact_value_max(induce_mdp(game, sigma2), dense_limit)

    return low, high


def bracket_gap(low: ValueVector, high: ValueVector) -> float:
    if not len(low):
        return 0.0

    return float(np.max((high - low) / np.maximum(np.abs(high), 1.0)))


def upper_bound_vector(
    game: GameGraph, margin: float = MARGIN, dense_limit: int = DENSE_LIMIT
) -> ValueVector:
    mdp = induce_mdp(game, RandMemorylessStrategy.uniform(game, PlayerClass.MIN))
    upper = (1.0 + margin) * mdp_exact_value_max(mdp, dense_limit)

    for t in game.terminals():
        upper[t] = 0.0

    return upper


class IterationResult(NamedTuple):
    values: ValueVector
    iterations: int
    converged: bool
    residual: float


def value_iteration_gfp(
    game: GameGraph,
    upper: ValueVector,
    epsilon: float = EPSILON,
    max_iterations: int = MAX_ITERATIONS,
    operator: Optional[BellmanOperator] = None,
    on_iteration: Optional[Callable[[int, float], None]] = None,
) -> IterationResult:
    """Descend from an over-approximation to the greatest fixed point of Γ.

    Each step is clamped, f' = min(f, Γ(f)), so the sequence never increases
    and never drops below the greatest fixed point.
    """

    gamma = BellmanOperator(game) if operator is None else operator
    f = np.array(upper, dtype=np.float64)
    residual = float("inf")
    k = 0

    while k < max_iterations:
        g = np.minimum(f, gamma(f))
        k += 1
        residual = (
            float(np.max(np.abs(g - f) / np.maximum(g, 1.0))) if len(g) else 0.0
        )
        f = g

        if on_iteration is not None:
            on_iteration(k, residual)

        if k % 1000 == 0:
            logger.debug("iteration %d: residual %.3e", k, residual)

        if residual < epsilon:
            return IterationResult(f, k, True, residual)

    return IterationResult(f, k, False, residual)


def distances_to_terminal(
    game: GameGraph, allowed: Optional[List[Tuple[int, ...]]] = None
) -> Dict[int, int]:
    """Hop ranks towards the terminals over the allowed edges.

    Terminals have rank 0, Player 2 and probabilistic vertices one more than
    their nearest successor, Player 1 vertices one more than their farthest.
    Without Player 1 branching these are breadth-first distances.
    """

    ranks = attractor_ranks(game, game.terminals(), allowed)

    if len(ranks) < game.n:
        unreachable = min(set(range(game.n)) - set(ranks))

        raise SynthesisError(unreachable, "no terminal is reachable over allowed edges")

    return ranks


def synthesize_max_strategy(
    game: GameGraph, values: ValueVector
) -> DetMemorylessStrategy:
    return DetMemorylessStrategy(
        PlayerClass.MAX,
        {
            v: max(sorted(game.post(v)), key=lambda t: values[t])
            for v in game.owned(PlayerClass.MAX)
        },
    )


def post_min(
    game: GameGraph, values: ValueVector, v: int, tolerance: float = POST_MIN_TOLERANCE
) -> List[int]:
    candidates = {t: game.reward(v) + values[t] for t in sorted(game.post(v))}

    if not all(np.isfinite(c) for c in candidates.values()):
        raise SynthesisError(v, "successor values are not finite")

    low = min(candidates.values())
    slack = tolerance * max(1.0, float(values[v]))

    return [t for t, c in candidates.items() if c <= low + slack]


def synthesize_min_fair_strategy(
    game: GameGraph, values: ValueVector, tolerance: float = POST_MIN_TOLERANCE
) -> DetMemorylessStrategy:
    """Optimal fair strategy for Player 2.

    At each Player 2 vertex only the value-minimising successors are kept;
    among those the one with the smallest rank towards the terminals in the
    reduced game is picked, smallest id first. When rounding leaves the
    reduced game without a route to the terminals the tolerance is widened.
    """

    owned = game.owned(PlayerClass.MIN)

    while True:
        minimal = {v: post_min(game, values, v, tolerance) for v in owned}
        allowed = positive_successors(game)

        for v, kept in minimal.items():
            allowed[v] = tuple(kept)

        try:
            ranks = distances_to_terminal(game, allowed)
        except SynthesisError:
            if tolerance * 10 > POST_MIN_TOLERANCE_CEILING:
                raise

            tolerance *= 10
            logger.warning("widening post^min tolerance to %.0e", tolerance)

            continue

        return DetMemorylessStrategy(
            PlayerClass.MIN,
            {v: min(kept, key=lambda t: (ranks[t], t)) for v, kept in minimal.items()},
        )


def _vector(values: ValueVector) -> Dict[str, float]:
    return {str(v): float(x) for v, x in enumerate(values)}


@dataclass(frozen=True)
class Solution:
    values: ValueVector
    sigma1: DetMemorylessStrategy
    sigma2: DetMemorylessStrategy
    iterations: int
    residual: float
    upper_bound: ValueVector
    converged: bool

    def serializable(self) -> Dict[str, Any]:
        return {
            "values": _vector(self.values),
            "sigma1": self.sigma1.serializable(),
            "sigma2": self.sigma2.serializable(),
            "iterations": self.iterations,
            "residual": float(self.residual),
            "upper_bound": _vector(self.upper_bound),
            "converged": self.converged,
        }

    def dumps(self) -> str:
        return dumps(self.serializable())

    @classmethod
    def from_serializable(cls, data: Mapping[str, Any]) -> Solution:
        try:
            n = len(data["values"])

            def vector(key: str) -> ValueVector:
                return np.array(
                    [float(data[key][str(v)]) for v in range(n)], dtype=np.float64
                )

            return cls(
                vector("values"),
                DetMemorylessStrategy.from_serializable(PlayerClass.MAX, data["sigma1"]),
                DetMemorylessStrategy.from_serializable(PlayerClass.MIN, data["sigma2"]),
                int(data["iterations"]),
                float(data["residual"]),
                vector("upper_bound"),
                bool(data["converged"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise GameFormatError(f"Malformed solution: {e}.") from e

    @classmethod
    def loads(cls, s: str) -> Solution:
        try:
            return cls.from_serializable(loads(s))
        except JSONDecodeError as e:
            raise GameFormatError(f"Malformed solution JSON: {e}.") from e


class Solver:
    """Runs the full pipeline on one game and reports progress to handlers.

    Value iteration stops once the strategies synthesised from its iterate
    bracket the value within epsilon; until then the iterate is cut down to
    the best response against the current Player 2 strategy and the sweeps
    go on.

    Events: "upper_bound" (vector), "iteration" (k, residual), "converged"
    (iterations, residual) and "strategies" (sigma1, sigma2).
    """

    def __init__(
        self,
        game: GameGraph,
        epsilon: float = EPSILON,
        max_iterations: int = MAX_ITERATIONS,
        margin: float = MARGIN,
        tolerance: float = POST_MIN_TOLERANCE,
        dense_limit: int = DENSE_LIMIT,
    ) -> None:
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")

        if margin < 0:
            raise ValueError("margin must not be negative")

        self.game = game
        self.epsilon = epsilon
        self.max_iterations = max_iterations
        self.margin = margin
        self.tolerance = tolerance
        self.dense_limit = dense_limit
        self._handlers: Dict[str, Set[Handler]] = defaultdict(set)

    def solve(self) -> Solution:
        game = self.game
        violations = validate(game)

        if violations:
            raise InvalidGameError(violations)

        stopping, witness = is_stopping_under_fairness(game)

        if not stopping:
            raise NotStoppingUnderFairnessError(witness)

        upper = upper_bound_vector(game, self.margin, self.dense_limit)
        self.notify("upper_bound", upper)
        logger.info("upper bound at initial vertex: %r", float(upper[game.initial]))

        f = upper
        epsilon = self.epsilon
        spent = 0

        while True:
            result = value_iteration_gfp(
                game,
                f,
                epsilon,
                self.max_iterations - spent,
                on_iteration=self._on_iteration(spent),
            )
            spent += result.iterations
            sigma1 = synthesize_max_strategy(game, result.values)
            sigma2 = synthesize_min_fair_strategy(game, result.values, self.tolerance)

            if not result.converged:
                logger.warning(
                    "value iteration stopped after %d iterations, residual %.3e",
                    spent,
                    result.residual,
                )

                raise NonConvergenceError(
                    spent,
                    result.residual,
                    Solution(
                        result.values,
                        sigma1,
                        sigma2,
                        spent,
                        result.residual,
                        upper,
                        False,
                    ),
                )

            low, high = strategy_bounds(game, sigma1, sigma2, self.dense_limit)
            gap = bracket_gap(low, high)
            logger.debug("iteration %d: strategy bracket gap %.3e", spent, gap)

            if gap <= self.epsilon:
                break

            # the best response to a fair sigma2 stays above the value
            f = np.minimum(result.values, high)

            if np.array_equal(f, result.values):
                if result.residual == 0.0:
                    logger.warning("strategy bracket stuck at gap %.3e", gap)

                    raise NonConvergenceError(
                        spent,
                        gap,
                        Solution(
                            result.values,
                            sigma1,
                            sigma2,
                            spent,
                            result.residual,
                            upper,
                            False,
                        ),
                    )

                epsilon /= 10

        solution = Solution(low, sigma1, sigma2, spent, result.residual, upper, True)

        self.notify("converged", spent, result.residual)
        self.notify("strategies", sigma1, sigma2)
        logger.info(
            "converged after %d iterations, value %r", spent, float(low[game.initial])
        )

        return solution

    def _on_iteration(self, offset: int) -> Optional[Callable[[int, float], None]]:
        if not self._handlers["iteration"]:
            return None

        return lambda k, residual: self.notify("iteration", offset + k, residual)

    def notify(self, event: str, *args):
        for handler in self._handlers[event].copy():
            handler(self, args)

    def add_event_handler(self, event: str, handler: Handler, once: bool = False):
        if once:
            old_handler = handler

            def new_handler(solver: Solver, args):
                old_handler(solver, args)
                self.remove_event_handler(event, new_handler)

            handler = new_handler

        self._handlers[event].add(handler)

    def remove_event_handler(self, event: str, handler: Handler):
        try:
            self._handlers[event].remove(handler)
        except KeyError:
            pass


def solve(
    game: GameGraph,
    epsilon: float = EPSILON,
    max_iterations: int = MAX_ITERATIONS,
    margin: float = MARGIN,
    tolerance: float = POST_MIN_TOLERANCE,
) -> Solution:
    return Solver(game, epsilon, max_iterations, margin, tolerance).solve()
