from io import StringIO
from json import load, loads
from pathlib import Path
from tempfile import NamedTemporaryFile
from typing import List, Tuple

from jsonschema import validate as validate_schema
from pytest import CaptureFixture, mark

from cli import (
    EXIT_INPUT,
    EXIT_NOT_CONVERGED,
    EXIT_NOT_STOPPING,
    EXIT_OK,
    EXIT_SIZE,
    run,
)
from fairgame import GameGraph, PlayerClass, Vertex

SCHEMA = Path(__file__).resolve().parent.parent / "schema" / "solution.schema.json"


def call(argv: List[str], stdin: str = "") -> Tuple[int, str, str]:
    stdout, stderr = StringIO(), StringIO()
    code = run(argv, StringIO(stdin), stdout, stderr)

    return code, stdout.getvalue(), stderr.getvalue()


def test_solve_model(g1_model: str):
    with NamedTemporaryFile("w", suffix=".fgg") as f:
        f.write(g1_model)
        f.flush()

        code, out, _ = call(["solve", f.name])

    solution = loads(out)

    assert code == EXIT_OK
    assert solution["values"]["0"] == 1.0
    assert solution["sigma1"] == {"0": 1}
    assert solution["sigma2"] == {"1": 2}
    assert solution["converged"]


def test_solve_schema(g1_model: str):
    with open(SCHEMA) as f:
        schema = load(f)

    code, out, _ = call(["solve", "-"], g1_model)

    assert code == EXIT_OK
    validate_schema(loads(out), schema)


def test_solve_deterministic(g1_model: str):
    assert call(["solve", "-"], g1_model) == call(["solve", "-"], g1_model)


def test_compile(g1: GameGraph, g1_model: str):
    code, out, _ = call(["compile", "-"], g1_model)
    data = loads(out)

    assert code == EXIT_OK
    assert data["states"] == {
        "0": {"turn": 1, "done": 0},
        "1": {"turn": 2, "done": 0},
        "2": {"turn": 2, "done": 1},
    }
    assert GameGraph.loads(out) == g1

    code, solved, _ = call(["solve", "-"], out)

    assert code == EXIT_OK
    assert loads(solved)["values"]["0"] == 1.0


def test_check_not_stopping(g3: GameGraph):
    code, out, _ = call(["check", "-"], g3.dumps())

    assert code == EXIT_OK
    assert loads(out) == {
        "stopping_under_fairness": False,
        "witness": [0, 1],
        "almost_sure": [2],
        "trapped_component": [0, 1],
    }


def test_solve_not_stopping(g3: GameGraph):
    code, out, err = call(["solve", "-"], g3.dumps())

    assert code == EXIT_NOT_STOPPING
    assert loads(out)["witness"] == [0, 1]
    assert "not stopping under fairness" in err


def test_solve_not_converged(g1: GameGraph):
    code, out, _ = call(["solve", "-", "--max-iters", "1"], g1.dumps())

    assert code == EXIT_NOT_CONVERGED
    assert loads(out)["converged"] is False


def test_pipeline():
    code, model, _ = call(
        ["gen", "roborta", "--width", "4", "--length", "4", "--version", "A"]
        + ["--p", "0.1", "--seed", "7"]
    )

    assert code == EXIT_OK

    code, out, _ = call(["solve", "-"], model)

    assert code == EXIT_OK
    assert loads(out)["converged"]


@mark.parametrize(
    "argv, stdin",
    [
        (["solve", "-"], "module m x : [0..1 endmodule"),
        (["solve", "-"], '{"vertices": [{"id": 0}]}'),
        (
            ["solve", "-"],
            '{"vertices": [{"id": 0, "class": "max", "reward": 1, "succ": [[0, 1]]}]}',
        ),
        (["solve", "/nonexistent/model.fgg"], ""),
        (["solve", "-", "--epsilon", "0"], ""),
        (["solve", "-", "--margin", "-0.5"], ""),
        (["solve", "-", "--margin", "nan"], ""),
        (["simulate", "-", "--episodes", "0"], ""),
        (["gen", "roborta", "--width", "0"], ""),
        (["frobnicate"], ""),
        ([], ""),
    ],
)
def test_input_errors(argv: List[str], stdin: str):
    code, _, err = call(argv, stdin)

    assert code == EXIT_INPUT
    assert err.startswith("fairgame: error:")


def test_oracle_size_guard():
    rungs = 13
    game = GameGraph(
        tuple(Vertex.owned(PlayerClass.MAX, 1, v + 1, rungs) for v in range(rungs - 1))
        + (Vertex.owned(PlayerClass.MAX, 1, rungs), Vertex.absorbing(rungs))
    )

    code, _, _ = call(["oracle", "-"], game.dumps())

    assert code == EXIT_SIZE


def test_state_limit(g1_model: str):
    code, _, err = call(["solve", "-", "--state-limit", "2"], g1_model)

    assert code == EXIT_SIZE
    assert "state space exceeds 2" in err


def test_oracle(g1: GameGraph):
    code, out, _ = call(["oracle", "-"], g1.dumps())

    assert code == EXIT_OK
    assert loads(out)["values"] == {"0": 1.0, "1": 0.0, "2": 0.0}


def test_simulate(g1: GameGraph):
    with NamedTemporaryFile("w", suffix=".json") as game, NamedTemporaryFile(
        "w", suffix=".json"
    ) as strategies:
        game.write(g1.dumps())
        game.flush()

        code, _, _ = call(["solve", game.name, "--output", strategies.name])

        assert code == EXIT_OK

        code, out, _ = call(
            ["simulate", game.name, "--strategies", strategies.name, "--episodes", "100"]
        )

    assert code == EXIT_OK
    assert loads(out) == {
        "mean": 1.0,
        "stderr": 0.0,
        "episodes": 100,
        "termination_rate": 1.0,
    }


def test_simulate_threads(g2: GameGraph):
    argv = ["simulate", "-", "--episodes", "500", "--seed", "9"]

    assert call(argv, g2.dumps()) == call(argv + ["--threads", "3"], g2.dumps())


def test_inspect(g1: GameGraph, g1_model: str):
    code, out, _ = call(["inspect", "-", "--json"], g1.dumps())

    assert code == EXIT_OK
    assert loads(out)["terminals"] == [2]
    assert loads(out)["edges"] == 4

    code, out, _ = call(["inspect", "-"], g1_model)

    assert code == EXIT_OK
    assert "vertices   3" in out
    assert "terminals  2" in out


def test_gen_uav_and_random():
    code, text, _ = call(["gen", "uav", "--seed", "1"])

    assert code == EXIT_OK
    assert text.startswith("// UAV vs. operator, 6 waypoints")

    code, text, _ = call(["gen", "random", "--vertices", "5", "--seed", "2"])

    assert code == EXIT_OK
    assert GameGraph.loads(text).n == 5


def test_version(capsys: CaptureFixture[str]):
    assert run(["--version"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "fairgame 1.0.0"
