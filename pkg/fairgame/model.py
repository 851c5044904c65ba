from __future__ import annotations

import logging
import operator
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from typing import (
    Any,
    Callable,
    Deque,
    Dict,
    List,
    Mapping,
    Optional,
    Tuple,
    TypeAlias,
)

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import (
    UnexpectedCharacters,
    UnexpectedEOF,
    UnexpectedInput,
    UnexpectedToken,
    VisitError,
)

from .error import (
    DeadlockError,
    DuplicateDeclarationError,
    EvaluationError,
    LabelOwnershipError,
    MixedPlayerStateError,
    ModelError,
    ModelSyntaxError,
    ProbabilityError,
    RewardError,
    StateSpaceLimitError,
    UndefinedNameError,
    UpdateRangeError,
)
from .graph import ROW_TOLERANCE, GameGraph, PlayerClass, Row, Vertex

logger = logging.getLogger(__name__)

STATE_LIMIT = 10_000_000

Position: TypeAlias = Optional[Tuple[int, int]]
Table: TypeAlias = Tuple[Tuple[int, ...], ...]
Value: TypeAlias = int | float | bool | Table
Scope: TypeAlias = Mapping[str, Value]
Valuation: TypeAlias = Tuple[int, ...]

GRAMMAR = r"""
    start: item*

    ?item: const_decl
         | player_decl
         | module
         | rewards

    const_decl: "const" "int" NAME "=" expr ";"                      -> const_int
              | "const" "double" NAME "=" expr ";"                   -> const_double
              | "const" "int" "[" "]" "[" "]" NAME "=" "[" row ("," row)* "]" ";" -> const_table
    row: "[" [expr ("," expr)*] "]"

    player_decl: "player1" labels ";"                                -> player1
               | "player2" labels ";"                                -> player2
    labels: "[" [NAME ("," NAME)*] "]"

    module: "module" NAME (var_decl | command)* "endmodule"
    var_decl: NAME ":" "[" expr ".." expr "]" "init" expr ";"
    command: "[" NAME "]" expr "->" branch ("+" branch)* ";"
    branch: expr ":" update
    update: "true"                                                   -> no_update
          | assignment ("&" assignment)*
    assignment: "(" NAME "'" "=" expr ")"

    rewards: "rewards" reward_item* "endrewards"
    reward_item: expr ":" expr ";"

    ?expr: or_expr
    ?or_expr: and_expr
            | or_expr "|" and_expr                                   -> or_
    ?and_expr: not_expr
             | and_expr "&" not_expr                                 -> and_
    ?not_expr: comparison
             | "!" not_expr                                          -> not_
    ?comparison: sum
               | sum "=" sum                                         -> eq
               | sum "!=" sum                                        -> ne
               | sum "<" sum                                         -> lt
               | sum "<=" sum                                        -> le
               | sum ">" sum                                         -> gt
               | sum ">=" sum                                        -> ge
    ?sum: product
        | sum "+" product                                            -> add
        | sum "-" product                                            -> sub
    ?product: unary
            | product "*" unary                                      -> mul
            | product "/" unary                                      -> div
            | product "%" unary                                      -> mod
    ?unary: atom
          | "-" unary                                                -> neg
    ?atom: NUMBER                                                    -> number
         | "true"                                                    -> true
         | "false"                                                   -> false
         | NAME "[" expr "]" "[" expr "]"                            -> index
         | NAME                                                      -> name
         | "(" expr ")"

    NAME: /[A-Za-z_][A-Za-z_0-9]*/
    NUMBER: /\d+(\.\d+)?([eE][+-]?\d+)?/

    %import common.CPP_COMMENT
    %import common.WS
    %ignore CPP_COMMENT
    %ignore WS
"""


def _is_number(value: Value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _numeric(value: Value, position: Position) -> int | float:
    if not _is_number(value):
        raise EvaluationError(f"expected a number, got {value!r}", position)

    return value  # type: ignore[return-value]


def _boolean(value: Value, position: Position) -> bool:
    if not isinstance(value, bool):
        raise EvaluationError(f"expected a boolean, got {value!r}", position)

    return value


def _modulo(a: int | float, b: int | float) -> int | float:
    if b == 0:
        raise ZeroDivisionError

    return a % abs(b)


def _divide(a: int | float, b: int | float) -> float:
    return a / b


ARITHMETIC: Dict[str, Callable[[Any, Any], Any]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": _divide,
    "%": _modulo,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class Expr(ABC):
    position: Position

    @abstractmethod
    def evaluate(self, scope: Scope) -> Value:
        raise NotImplementedError


@dataclass(frozen=True)
class Number(Expr):
    value: int | float
    position: Position = field(default=None, compare=False)

    def evaluate(self, scope: Scope) -> Value:
        return self.value


@dataclass(frozen=True)
class Bool(Expr):
    value: bool
    position: Position = field(default=None, compare=False)

    def evaluate(self, scope: Scope) -> Value:
        return self.value


@dataclass(frozen=True)
class Name(Expr):
    name: str
    position: Position = field(default=None, compare=False)

    def evaluate(self, scope: Scope) -> Value:
        try:
            return scope[self.name]
        except KeyError:
            raise UndefinedNameError(self.name, self.position)


@dataclass(frozen=True)
class Index(Expr):
    name: str
    first: Expr
    second: Expr
    position: Position = field(default=None, compare=False)

    def evaluate(self, scope: Scope) -> Value:
        try:
            table = scope[self.name]
        except KeyError:
            raise UndefinedNameError(self.name, self.position)

        if not isinstance(table, tuple):
            raise EvaluationError(f"{self.name} is not a table", self.position)

        i = self.first.evaluate(scope)
        j = self.second.evaluate(scope)

        if not (isinstance(i, int) and isinstance(j, int)) or isinstance(i, bool):
            raise EvaluationError(f"{self.name} is indexed by non-integers", self.position)

        if not (0 <= i < len(table) and 0 <= j < len(table[i])):
            raise EvaluationError(f"{self.name}[{i}][{j}] is out of bounds", self.position)

        return table[i][j]


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    operand: Expr
    position: Position = field(default=None, compare=False)

    def evaluate(self, scope: Scope) -> Value:
        value = self.operand.evaluate(scope)

        match self.op:
            case "!":
                return not _boolean(value, self.position)
            case "-":
                return -_numeric(value, self.position)
            case _:
                raise EvaluationError(f"unknown operator {self.op}", self.position)


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    position: Position = field(default=None, compare=False)

    def evaluate(self, scope: Scope) -> Value:
        match self.op:
            case "&":
                return _boolean(self.left.evaluate(scope), self.position) and _boolean(
                    self.right.evaluate(scope), self.position
                )
            case "|":
                return _boolean(self.left.evaluate(scope), self.position) or _boolean(
                    self.right.evaluate(scope), self.position
                )
            case "=" | "!=":
                a = self.left.evaluate(scope)
                b = self.right.evaluate(scope)

                if isinstance(a, bool) != isinstance(b, bool):
                    raise EvaluationError("comparing a boolean with a number", self.position)

                return (a == b) if self.op == "=" else (a != b)

        a = _numeric(self.left.evaluate(scope), self.position)
        b = _numeric(self.right.evaluate(scope), self.position)

        try:
            return ARITHMETIC[self.op](a, b)
        except ZeroDivisionError:
            raise EvaluationError(f"division by zero in {self.op}", self.position)


@dataclass(frozen=True)
class ConstDecl:
    kind: str
    name: str
    value: Expr | Tuple[Tuple[Expr, ...], ...]
    position: Position = field(default=None, compare=False)


@dataclass(frozen=True)
class VarDecl:
    name: str
    low: Expr
    high: Expr
    init: Expr
    position: Position = field(default=None, compare=False)


@dataclass(frozen=True)
class Assignment:
    variable: str
    value: Expr
    position: Position = field(default=None, compare=False)


@dataclass(frozen=True)
class Branch:
    probability: Expr
    update: Tuple[Assignment, ...]
    position: Position = field(default=None, compare=False)


@dataclass(frozen=True)
class Command:
    label: str
    guard: Expr
    branches: Tuple[Branch, ...]
    position: Position = field(default=None, compare=False)


@dataclass(frozen=True)
class RewardItem:
    guard: Expr
    reward: Expr
    position: Position = field(default=None, compare=False)


@dataclass(frozen=True)
class ModelAst:
    module: str
    constants: Tuple[ConstDecl, ...]
    players: Mapping[str, PlayerClass]
    variables: Tuple[VarDecl, ...]
    commands: Tuple[Command, ...]
    rewards: Tuple[RewardItem, ...]


def _position(meta: Any) -> Position:
    if getattr(meta, "empty", True):
        return None

    return meta.line, meta.column


def _token_position(token: Token) -> Position:
    return (token.line, token.column) if token.line is not None else None


def _binary(op: str) -> Callable[[Any, Any, List[Any]], Binary]:
    def build(self, meta, children):
        return Binary(op, children[0], children[1], _position(meta))

    return build


@v_args(meta=True)
class _AstBuilder(Transformer):
    def number(self, meta, children):
        text = str(children[0])
        value: int | float = (
            float(text) if any(c in text for c in ".eE") else int(text)
        )

        return Number(value, _position(meta))

    def true(self, meta, children):
        return Bool(True, _position(meta))

    def false(self, meta, children):
        return Bool(False, _position(meta))

    def name(self, meta, children):
        return Name(str(children[0]), _position(meta))

    def index(self, meta, children):
        return Index(str(children[0]), children[1], children[2], _position(meta))

    def neg(self, meta, children):
        return Unary("-", children[0], _position(meta))

    def not_(self, meta, children):
        return Unary("!", children[0], _position(meta))

    or_ = _binary("|")
    and_ = _binary("&")
    eq = _binary("=")
    ne = _binary("!=")
    lt = _binary("<")
    le = _binary("<=")
    gt = _binary(">")
    ge = _binary(">=")
    add = _binary("+")
    sub = _binary("-")
    mul = _binary("*")
    div = _binary("/")
    mod = _binary("%")

    def const_int(self, meta, children):
        return ConstDecl("int", str(children[0]), children[1], _token_position(children[0]))

    def const_double(self, meta, children):
        return ConstDecl(
            "double", str(children[0]), children[1], _token_position(children[0])
        )

    def const_table(self, meta, children):
        return ConstDecl(
            "table", str(children[0]), tuple(children[1:]), _token_position(children[0])
        )

    def row(self, meta, children):
        return tuple(c for c in children if c is not None)

    def labels(self, meta, children):
        return [c for c in children if c is not None]

    def player1(self, meta, children):
        return (PlayerClass.MAX, children[0], _position(meta))

    def player2(self, meta, children):
        return (PlayerClass.MIN, children[0], _position(meta))

    def var_decl(self, meta, children):
        name, low, high, init = children

        return VarDecl(str(name), low, high, init, _token_position(name))

    def assignment(self, meta, children):
        return Assignment(str(children[0]), children[1], _position(meta))

    def no_update(self, meta, children):
        return ()

    def update(self, meta, children):
        seen: Dict[str, Assignment] = {}

        for assignment in children:
            if assignment.variable in seen:
                raise ModelError(
                    f"{assignment.variable}' is assigned twice", assignment.position
                )

            seen[assignment.variable] = assignment

        return tuple(children)

    def branch(self, meta, children):
        return Branch(children[0], children[1], _position(meta))

    def command(self, meta, children):
        label = children[0]

        return Command(str(label), children[1], tuple(children[2:]), _token_position(label))

    def module(self, meta, children):
        return ("module", str(children[0]), children[1:], _position(meta))

    def reward_item(self, meta, children):
        return RewardItem(children[0], children[1], _position(meta))

    def rewards(self, meta, children):
        return ("rewards", tuple(children))

    def start(self, meta, children):
        return list(children)


_PARSER = Lark(
    GRAMMAR,
    parser="lalr",
    propagate_positions=True,
    maybe_placeholders=True,
)


def _syntax_error(e: UnexpectedInput) -> ModelSyntaxError:
    position = (e.line, e.column) if getattr(e, "line", -1) not in (None, -1) else None

    match e:
        case UnexpectedEOF():
            return ModelSyntaxError("unexpected end of input", position)
        case UnexpectedToken():
            return ModelSyntaxError(f"unexpected {str(e.token)!r}", position)
        case UnexpectedCharacters():
            return ModelSyntaxError(f"unexpected character {e.char!r}", position)
        case _:
            return ModelSyntaxError("malformed input", position)


def parse(text: str) -> ModelAst:
    try:
        items = _AstBuilder().transform(_PARSER.parse(text))
    except UnexpectedInput as e:
        raise _syntax_error(e) from e
    except VisitError as e:
        if isinstance(e.orig_exc, ModelError):
            raise e.orig_exc from e

        raise

    constants: List[ConstDecl] = []
    players: Dict[str, PlayerClass] = {}
    declared_players: Dict[PlayerClass, Position] = {}
    modules: List[Tuple[str, List[Any], Position]] = []
    rewards: List[RewardItem] = []
    names: Dict[str, str] = {}

    def declare(kind: str, name: str, position: Position) -> None:
        if name in names:
            raise DuplicateDeclarationError(kind, name, position)

        names[name] = kind

    for item in items:
        match item:
            case ConstDecl():
                declare("constant", item.name, item.position)
                constants.append(item)
            case (PlayerClass() as player, labels, position):
                if player in declared_players:
                    raise DuplicateDeclarationError("player", player.name, position)

                declared_players[player] = position

                for label in labels:
                    if label in players:
                        reason = (
                            "is declared for both players"
                            if players[label] is not player
                            else "is listed twice"
                        )

                        raise LabelOwnershipError(str(label), reason, position)

                    players[str(label)] = player
            case ("module", name, body, position):
                modules.append((name, body, position))
            case ("rewards", reward_items):
                rewards.extend(reward_items)

    if len(modules) != 1:
        raise ModelSyntaxError(
            f"a model needs exactly one module, found {len(modules)}",
            modules[1][2] if len(modules) > 1 else None,
        )

    module, body, _ = modules[0]
    variables = tuple(d for d in body if isinstance(d, VarDecl))
    commands = tuple(c for c in body if isinstance(c, Command))

    for variable in variables:
        declare("variable", variable.name, variable.position)

    for command in commands:
        if command.label not in players:
            raise LabelOwnershipError(command.label, "belongs to no player", command.position)

    return ModelAst(module, tuple(constants), players, variables, commands, tuple(rewards))


@dataclass(frozen=True)
class CompiledGame:
    game: GameGraph
    states: Tuple[Mapping[str, Any], ...]

    def state_of(self, v: int) -> Mapping[str, Any]:
        return self.states[v]

    def serializable(self) -> Dict[str, Any]:
        data = self.game.serializable()
        data["states"] = {str(v): dict(state) for v, state in enumerate(self.states)}

        return data


def _evaluate_constants(ast: ModelAst) -> Dict[str, Value]:
    scope: Dict[str, Value] = {}

    for const in ast.constants:
        match const.kind:
            case "table":
                rows: List[Tuple[int, ...]] = []

                for row in const.value:  # type: ignore[union-attr]
                    entries = []

                    for entry in row:
                        value = _numeric(entry.evaluate(scope), entry.position)

                        if value != int(value):
                            raise EvaluationError(
                                f"{const.name} holds a non-integer {value}", entry.position
                            )

                        entries.append(int(value))

                    rows.append(tuple(entries))

                scope[const.name] = tuple(rows)
            case "int":
                value = _numeric(const.value.evaluate(scope), const.position)  # type: ignore[union-attr]

                if value != int(value):
                    raise EvaluationError(
                        f"{const.name} is declared int but is {value}", const.position
                    )

                scope[const.name] = int(value)
            case _:
                scope[const.name] = float(
                    _numeric(const.value.evaluate(scope), const.position)  # type: ignore[union-attr]
                )

    return scope


def _integral(value: Value) -> Optional[int]:
    if not _is_number(value) or value != int(value):  # type: ignore[arg-type]
        return None

    return int(value)  # type: ignore[arg-type]


class _Explorer:
    def __init__(self, ast: ModelAst, close_deadlocks: bool, state_limit: int, tolerance: float):
        self.ast = ast
        self.close_deadlocks = close_deadlocks
        self.state_limit = state_limit
        self.tolerance = tolerance
        self.constants = _evaluate_constants(ast)
        self.names = [v.name for v in ast.variables]
        self.bounds: List[Tuple[int, int]] = []

        for variable in ast.variables:
            low = _integral(variable.low.evaluate(self.constants))
            high = _integral(variable.high.evaluate(self.constants))

            if low is None or high is None or low > high:
                raise ModelError(f"range of {variable.name} is empty", variable.position)

            self.bounds.append((low, high))

    def describe(self, valuation: Valuation) -> str:
        return "(" + ", ".join(f"{n}={x}" for n, x in zip(self.names, valuation)) + ")"

    def scope(self, valuation: Valuation) -> Dict[str, Value]:
        scope = dict(self.constants)
        scope.update(zip(self.names, valuation))

        return scope

    def initial(self) -> Valuation:
        values = []

        for variable, (low, high) in zip(self.ast.variables, self.bounds):
            init = variable.init.evaluate(self.constants)
            value = _integral(init)

            if value is None or not low <= value <= high:
                raise UpdateRangeError(variable.name, init, variable.position, "initial")

            values.append(value)

        return tuple(values)

    def target(self, valuation: Valuation, scope: Scope, branch: Branch, state: str) -> Valuation:
        values = list(valuation)

        for assignment in branch.update:
            try:
                i = self.names.index(assignment.variable)
            except ValueError:
                raise UndefinedNameError(assignment.variable, assignment.position)

            value = assignment.value.evaluate(scope)
            integral = _integral(value)
            low, high = self.bounds[i]

            if integral is None or not low <= integral <= high:
                raise UpdateRangeError(assignment.variable, value, assignment.position, state)

            values[i] = integral

        return tuple(values)

    def reward(self, scope: Scope, state: str) -> float:
        total = 0.0

        for item in self.ast.rewards:
            if _boolean(item.guard.evaluate(scope), item.guard.position):
                total += float(_numeric(item.reward.evaluate(scope), item.reward.position))

        if total < 0:
            raise RewardError(f"negative reward {total!r}", None, state)

        return total


def compile_model(
    ast: ModelAst,
    close_deadlocks: bool = False,
    state_limit: int = STATE_LIMIT,
    tolerance: float = ROW_TOLERANCE,
) -> CompiledGame:
    """Explore the reachable state space breadth-first.

    Ids follow discovery order: the successor valuations first seen from a
    state are numbered in sorted order after the probabilistic vertices that
    state introduces, one per multi-branch command in source order.
    """

    ex = _Explorer(ast, close_deadlocks, state_limit, tolerance)
    vertices: Dict[int, Vertex] = {}
    states: Dict[int, Mapping[str, Any]] = {}
    ids: Dict[Valuation, int] = {}
    queue: Deque[Valuation] = deque()
    next_id = 0

    def new_id() -> int:
        nonlocal next_id

        if next_id >= state_limit:
            raise StateSpaceLimitError(state_limit)

        next_id += 1

        return next_id - 1

    start = ex.initial()
    ids[start] = new_id()
    queue.append(start)

    while queue:
        valuation = queue.popleft()
        source = ids[valuation]
        state = ex.describe(valuation)
        scope = ex.scope(valuation)
        states[source] = dict(zip(ex.names, valuation))
        enabled = [
            c for c in ast.commands if _boolean(c.guard.evaluate(scope), c.guard.position)
        ]
        reward = ex.reward(scope, state)

        if not enabled:
            if not close_deadlocks:
                raise DeadlockError(state)

            if reward != 0:
                raise RewardError(f"closed deadlock has reward {reward!r}", None, state)

            vertices[source] = Vertex.absorbing(source)

            continue

        owners = {ast.players[c.label] for c in enabled}

        if len(owners) > 1:
            raise MixedPlayerStateError([c.label for c in enabled], state)

        successors: Dict[int | Valuation, None] = {}
        introduced: List[Tuple[int, Command, Dict[Valuation, float]]] = []

        for command in enabled:
            row: Dict[Valuation, float] = {}

            for branch in command.branches:
                p = _numeric(branch.probability.evaluate(scope), branch.probability.position)

                if p < 0 or p > 1 + tolerance:
                    raise ProbabilityError(
                        f"probability {p!r} of [{command.label}] is outside [0, 1]",
                        branch.position,
                        state,
                    )

                if p == 0:
                    continue

                target = ex.target(valuation, scope, branch, state)
                row[target] = row.get(target, 0.0) + float(p)

            total = sum(row.values())

            if abs(total - 1.0) > tolerance:
                raise ProbabilityError(
                    f"probabilities of [{command.label}] sum to {total!r}",
                    command.position,
                    state,
                )

            if len(command.branches) == 1:
                successors[next(iter(row))] = None
            else:
                vp = new_id()
                introduced.append((vp, command, row))
                successors[vp] = None

        fresh = sorted(
            {
                t
                for t in list(successors) + [t for _, _, row in introduced for t in row]
                if isinstance(t, tuple) and t not in ids
            }
        )

        for t in fresh:
            ids[t] = new_id()
            queue.append(t)

        def vid(t: int | Valuation) -> int:
            return ids[t] if isinstance(t, tuple) else t

        for vp, command, row in introduced:
            vertices[vp] = Vertex(
                PlayerClass.PROB, 0.0, tuple((ids[t], p) for t, p in row.items())
            )
            states[vp] = {"source": source, "command": command.label}

        succ: Row = tuple(dict.fromkeys((vid(t), 1.0) for t in successors))

        if succ == ((source, 1.0),) and reward != 0:
            raise RewardError(f"terminal state has reward {reward!r}", None, state)

        vertices[source] = Vertex(owners.pop(), reward, succ)

    game = GameGraph(tuple(vertices[v] for v in range(next_id)), 0)
    logger.info("compiled %d vertices, %d edges", game.n, game.edge_count())

    return CompiledGame(game, tuple(states[v] for v in range(next_id)))


def load_model(
    text: str,
    close_deadlocks: bool = False,
    state_limit: int = STATE_LIMIT,
    tolerance: float = ROW_TOLERANCE,
) -> CompiledGame:
    return compile_model(parse(text), close_deadlocks, state_limit, tolerance)
