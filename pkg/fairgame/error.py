from __future__ import annotations

from typing import TYPE_CHECKING, Any, Iterable, Optional, Sequence, Tuple

if TYPE_CHECKING:
    from .graph import Violation
    from .solver import Solution


class FairGameError(RuntimeError):
    pass


class ModelError(FairGameError):
    def __init__(
        self,
        message: str,
        position: Optional[Tuple[int, int]] = None,
        state: Optional[str] = None,
    ):
        self.position = position
        self.state = state
        prefix: Optional[str]

        match position:
            case (line, column):
                prefix = f"line {line}, column {column}"
            case _:
                prefix = None

        suffix = "." if state is None else f" in state {state}."

        super().__init__(": ".join(filter(None, (prefix, message))) + suffix)


class ModelSyntaxError(ModelError):
    def __init__(self, message: str, position: Optional[Tuple[int, int]] = None):
        super().__init__(f"syntax error, {message}", position)


class DuplicateDeclarationError(ModelError):
    def __init__(self, kind: str, name: str, position: Optional[Tuple[int, int]]):
        super().__init__(f"{kind} {name} is declared more than once", position)


class LabelOwnershipError(ModelError):
    def __init__(self, label: str, reason: str, position: Optional[Tuple[int, int]]):
        super().__init__(f"action [{label}] {reason}", position)


class UndefinedNameError(ModelError):
    def __init__(self, name: str, position: Optional[Tuple[int, int]] = None):
        super().__init__(f"{name} is not defined", position)


class EvaluationError(ModelError):
    pass


class MixedPlayerStateError(ModelError):
    def __init__(self, labels: Sequence[str], state: str):
        names = ", ".join(f"[{label}]" for label in labels)

        super().__init__(f"actions of both players are enabled ({names})", None, state)


class ProbabilityError(ModelError):
    pass


class RewardError(ModelError):
    pass


class UpdateRangeError(ModelError):
    def __init__(
        self,
        variable: str,
        value: Any,
        position: Optional[Tuple[int, int]],
        state: str,
    ):
        super().__init__(f"{variable}'={value} is out of range", position, state)


class DeadlockError(ModelError):
    def __init__(self, state: str):
        super().__init__("no command is enabled", None, state)


class StateSpaceLimitError(ModelError):
    def __init__(self, limit: int):
        super().__init__(f"state space exceeds {limit} vertices")


class GameError(FairGameError):
    pass


class InvalidGameError(GameError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5

        super().__init__(
            f"invalid game: {head}" + (f" (+{more} more)" if more > 0 else "")
        )


class StrategyError(GameError):
    def __init__(self, vertex: int, message: str):
        self.vertex = vertex

        super().__init__(f"Strategy {message} at vertex {vertex}.")


class GameFormatError(GameError):
    pass


class SolverError(FairGameError):
    pass


class NotStoppingUnderFairnessError(SolverError):
    def __init__(self, witness: Iterable[int]):
        self.witness = frozenset(witness)
        shown = ", ".join(str(v) for v in sorted(self.witness)[:10])

        super().__init__(
            f"Game is not stopping under fairness; witness {{{shown}"
            + (", …}" if len(self.witness) > 10 else "}")
        )


class NonConvergenceError(SolverError):
    def __init__(
        self, iterations: int, residual: float, solution: Optional[Solution] = None
    ):
        self.iterations = iterations
        self.residual = residual
        self.solution = solution

        super().__init__(
            f"Value iteration did not converge after {iterations} iterations "
            f"(residual {residual:.3e})."
        )


class SingularSystemError(SolverError):
    def __init__(self, vertices: Iterable[int] = ()):
        self.vertices = frozenset(vertices)

        super().__init__(
            "Linear system is singular"
            + (
                f"; vertices {sorted(self.vertices)[:10]} cannot reach a terminal."
                if self.vertices
                else "."
            )
        )


class SynthesisError(SolverError):
    def __init__(self, vertex: int, message: str):
        self.vertex = vertex

        super().__init__(f"Unable to synthesize strategy at vertex {vertex}; {message}.")


class OracleError(FairGameError):
    pass


class OracleSizeError(OracleError):
    def __init__(self, what: str, size: int, limit: int):
        super().__init__(f"Oracle refuses {what} of {size} (limit {limit}).")


class OracleTrapError(OracleError):
    def __init__(self, vertices: Iterable[int]):
        super().__init__(
            f"Fair strategy pair is trapped in non-terminal component "
            f"{sorted(vertices)}."
        )
