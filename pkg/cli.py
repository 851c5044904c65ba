from __future__ import annotations

import argparse
import logging
import sys
from json import dumps
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO

from fairgame import (
    VERSION,
    GameGraph,
    RandomGameConfig,
    RobortaConfig,
    RobortaVersion,
    Solution,
    Solver,
    UavConfig,
    check,
    estimate_value,
    game_statistics,
    gen_random_game,
    gen_roborta,
    gen_uav,
    load_model,
    oracle_result,
    validate,
)
from fairgame.error import (
    FairGameError,
    InvalidGameError,
    NonConvergenceError,
    NotStoppingUnderFairnessError,
    OracleSizeError,
    StateSpaceLimitError,
)
from fairgame.model import STATE_LIMIT
from fairgame.sim import STEP_CAP
from fairgame.solver import EPSILON, MARGIN, MAX_ITERATIONS, POST_MIN_TOLERANCE

logger = logging.getLogger("fairgame.cli")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_STOPPING = 2
EXIT_NOT_CONVERGED = 3
EXIT_SIZE = 4


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def positive_int(text: str) -> int:
    value = int(text)

    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")

    return value


def positive_float(text: str) -> float:
    value = float(text)

    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")

    return value


def non_negative_float(text: str) -> float:
    value = float(text)

    if not value >= 0:
        raise argparse.ArgumentTypeError(f"{text} is not a non-negative number")

    return value


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="fairgame",
        description="Solve stochastic games against a fair minimizer.",
    )
    parser.add_argument("--version", action="version", version=f"fairgame {VERSION}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v info, -vv debug"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def model_command(name: str, help: str) -> ArgumentParser:
        sub = commands.add_parser(name, help=help)
        sub.add_argument("model", help="model (.fgg) or game (.json) file, - for stdin")
        sub.add_argument("--close-deadlocks", action="store_true")
        sub.add_argument("--state-limit", type=positive_int, default=STATE_LIMIT)
        sub.add_argument("-o", "--output", help="write the result here")

        return sub

    model_command("compile", "compile a model into game JSON with its states")
    model_command("check", "decide stopping under fairness")

    solve = model_command("solve", "compute values and optimal strategies")
    solve.add_argument("--epsilon", type=positive_float, default=EPSILON)
    solve.add_argument("--max-iters", type=positive_int, default=MAX_ITERATIONS)
    solve.add_argument("--margin", type=non_negative_float, default=MARGIN)
    solve.add_argument("--tolerance", type=positive_float, default=POST_MIN_TOLERANCE)

    simulate = model_command("simulate", "estimate a strategy pair by Monte Carlo")
    simulate.add_argument("--strategies", help="solution JSON of a previous solve")
    simulate.add_argument("--episodes", type=positive_int, default=10_000)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--step-cap", type=positive_int, default=STEP_CAP)
    simulate.add_argument("--threads", type=positive_int, default=1)
    simulate.add_argument("--epsilon", type=positive_float, default=EPSILON)

    model_command("oracle", "brute-force values of a small game")

    inspect = model_command("inspect", "print game statistics")
    inspect.add_argument("--json", action="store_true")

    gen = commands.add_parser("gen", help="generate case-study models")
    families = gen.add_subparsers(dest="family", required=True)

    roborta = families.add_parser("roborta", help="robot on a grid against a fair light")
    roborta.add_argument("--width", type=positive_int, default=4)
    roborta.add_argument("--length", type=positive_int, default=4)
    roborta.add_argument(
        "--version", dest="grid_version", choices=[v.value for v in RobortaVersion], default="A"
    )
    roborta.add_argument("--p", type=float, default=0.1)
    roborta.add_argument("--q", type=float, default=0.0)
    roborta.add_argument("--seed", type=int, default=0)
    roborta.add_argument("-o", "--output")

    uav = families.add_parser("uav", help="UAV against a human operator")
    uav.add_argument("--waypoints", type=positive_int, default=6)
    uav.add_argument("--d", type=float, default=0.5)
    uav.add_argument("--s", type=float, default=0.1)
    uav.add_argument("--seed", type=int, default=0)
    uav.add_argument("-o", "--output")

    random = families.add_parser("random", help="seeded random game (JSON)")
    random.add_argument("--vertices", type=positive_int, default=8)
    random.add_argument("--seed", type=int, default=0)
    random.add_argument("--max-successors", type=positive_int, default=3)
    random.add_argument("--terminals", type=positive_int, default=1)
    random.add_argument("-o", "--output")

    return parser


def read_text(path: str, stdin: TextIO) -> str:
    if path == "-":
        return stdin.read()

    with open(path, "r") as f:
        return f.read()


def read_game(args: argparse.Namespace, stdin: TextIO) -> GameGraph:
    text = read_text(args.model, stdin)

    if text.lstrip().startswith("{"):
        game = GameGraph.loads(text)
        violations = validate(game)

        if violations:
            raise InvalidGameError(violations)

        return game

    return load_model(
        text, close_deadlocks=args.close_deadlocks, state_limit=args.state_limit
    ).game


def emit(text: str, output: Optional[str], stdout: TextIO) -> None:
    if output is None:
        stdout.write(text)
    else:
        with open(output, "w") as f:
            f.write(text)


def as_json(data: Dict[str, Any]) -> str:
    return dumps(data, indent=2) + "\n"


def statistics_table(stats: Dict[str, Any]) -> str:
    rows = [
        ("version", stats["version"]),
        ("vertices", stats["n"]),
        ("initial", stats["initial"]),
        ("max", stats["max"]),
        ("min", stats["min"]),
        ("prob", stats["prob"]),
        ("terminal", stats["terminal"]),
        ("edges", stats["edges"]),
        ("terminals", " ".join(str(t) for t in stats["terminals"]) or "-"),
    ]
    width = max(len(name) for name, _ in rows)

    return "".join(f"{name.ljust(width)}  {value}\n" for name, value in rows)


def cmd_compile(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    compiled = load_model(
        read_text(args.model, stdin),
        close_deadlocks=args.close_deadlocks,
        state_limit=args.state_limit,
    )
    emit(as_json(compiled.serializable()), args.output, stdout)

    return EXIT_OK


def cmd_check(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    emit(as_json(check(read_game(args, stdin)).serializable()), args.output, stdout)

    return EXIT_OK


def cmd_solve(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    game = read_game(args, stdin)
    solver = Solver(game, args.epsilon, args.max_iters, args.margin, args.tolerance)

    try:
        solution = solver.solve()
    except NotStoppingUnderFairnessError:
        emit(as_json(check(game).serializable()), args.output, stdout)

        raise
    except NonConvergenceError as e:
        if e.solution is not None:
            emit(as_json(e.solution.serializable()), args.output, stdout)

        raise

    emit(as_json(solution.serializable()), args.output, stdout)

    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    game = read_game(args, stdin)

    if args.strategies is not None:
        with open(args.strategies, "r") as f:
            solution = Solution.loads(f.read())
    else:
        solution = Solver(game, args.epsilon).solve()

    estimate = estimate_value(
        game,
        solution.sigma1,
        solution.sigma2,
        args.episodes,
        args.seed,
        args.step_cap,
        args.threads,
    )
    emit(as_json(estimate.serializable()), args.output, stdout)

    return EXIT_OK


def cmd_oracle(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    game = read_game(args, stdin)
    stopping = check(game)

    if not stopping.stopping:
        emit(as_json(stopping.serializable()), args.output, stdout)

        raise NotStoppingUnderFairnessError(stopping.witness)

    emit(as_json(oracle_result(game).serializable()), args.output, stdout)

    return EXIT_OK


def cmd_inspect(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    stats = game_statistics(read_game(args, stdin))
    emit(as_json(stats) if args.json else statistics_table(stats), args.output, stdout)

    return EXIT_OK


def cmd_gen(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    try:
        match args.family:
            case "roborta":
                text = gen_roborta(
                    RobortaConfig(
                        args.width,
                        args.length,
                        args.p,
                        args.q,
                        RobortaVersion(args.grid_version),
                        args.seed,
                    )
                )
            case "uav":
                text = gen_uav(UavConfig(args.waypoints, args.d, args.s, args.seed))
            case _:
                text = gen_random_game(
                    RandomGameConfig(
                        args.vertices, args.seed, args.max_successors, args.terminals
                    )
                ).dumps() + "\n"
    except ValueError as e:
        raise UsageError(str(e)) from e

    emit(text, args.output, stdout)

    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, TextIO, TextIO], int]] = {
    "compile": cmd_compile,
    "check": cmd_check,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "inspect": cmd_inspect,
    "gen": cmd_gen,
}


def exit_code(error: BaseException) -> int:
    match error:
        case NotStoppingUnderFairnessError():
            return EXIT_NOT_STOPPING
        case NonConvergenceError():
            return EXIT_NOT_CONVERGED
        case OracleSizeError() | StateSpaceLimitError():
            return EXIT_SIZE
        case _:
            return EXIT_INPUT


def run(
    argv: Optional[Sequence[str]] = None,
    stdin: TextIO = sys.stdin,
    stdout: TextIO = sys.stdout,
    stderr: TextIO = sys.stderr,
) -> int:
    parser = build_parser()

    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        stderr.write(f"fairgame: error: {e}\n")

        return EXIT_INPUT
    except SystemExit as e:
        return int(e.code or 0)

    levels: List[int] = [logging.WARNING, logging.INFO, logging.DEBUG]
    logging.basicConfig(
        level=levels[min(args.verbose, 2)],
        stream=stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )

    try:
        return COMMANDS[args.command](args, stdin, stdout)
    except (FairGameError, UsageError, OSError, ValueError) as e:
        logger.debug("%s: %s", type(e).__name__, e)

        stderr.write(f"fairgame: error: {e}\n")

        return exit_code(e)


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
