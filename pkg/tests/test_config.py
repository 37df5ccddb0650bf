import json

import pytest

from bdsde_lab.config import build_problem, build_problems, parse_config
from bdsde_lab.core import Dimensions
from bdsde_lab.exceptions import IllegalVariable, ParseError, ValidationError


def cfg(**raw):
    return json.dumps(raw)


INLINE = {
    "dims": {"k": 2},
    "f": ["(y1 + z11) / (1 + t*t)", "y2 / (1 + t*t)"],
    "g": ["0.3 * y1 / (1 + t*t)", "0"],
    "xi": ["sin(W1)", "1"],
    "u": "1 / (1 + t*t)",
}


def test_minimal_solve_fills_defaults():
    c = parse_config(cfg(experiment="solve", problem="example7"))
    assert c.experiment == "solve"
    assert c["grid"]["steps"] == 64 and c["grid"]["kind"] == "adapted"
    assert c["mc"] == {"paths": 4096, "seed": 0}
    assert c["output"]["path"] == "results.csv"
    assert "grid.steps = 64" in c.defaults_applied
    assert c.to_dict()["experiment"] == "solve"


def test_bytes_input_and_seed_override():
    c = parse_config(cfg(experiment="gronwall", gronwall={"A": 1, "M": 2, "r": "1/(1+t*t)"}).encode())
    assert c.seed == 0 and c.with_seed(5).seed == 5 and c.seed == 0


@pytest.mark.parametrize(
    "raw, field, message",
    [
        ({"experiment": "solve", "problem": "example7", "grid": {"steps": 0}}, "grid.steps", "grid.steps must be ≥ 1"),
        ({"experiment": "solve", "problem": "example7", "grid": {"stepz": 4}}, "grid.stepz", "unknown"),
        ({"experiment": "solve", "problem": "example7", "colour": 1}, "colour", "unknown"),
        ({"experiment": "solve"}, "problem", "required"),
        ({"experiment": "fit", "problem": "example7"}, "experiment", "experiment"),
        ({"experiment": "solve", "problem": "example8"}, "problem", "example8"),
        ({"experiment": "solve", "problem": "example7", "mc": {"paths": -3}}, "mc.paths", "mc.paths"),
        ({"experiment": "solve", "problem": "example7", "grid": {"kind": "cubic"}}, "grid.kind", "grid.kind"),
    ],
)
def test_validation_errors(raw, field, message):
    with pytest.raises(ValidationError) as info:
        parse_config(json.dumps(raw))
    assert info.value.field == field
    assert message in str(info.value)


def test_dimension_mismatch():
    other = {"dims": {"k": 1}, "f": ["0"], "g": ["0"], "xi": ["0"]}
    with pytest.raises(ValidationError) as info:
        parse_config(cfg(experiment="compare", problems=[INLINE, other]))
    assert info.value.field == "problems[1].dims"
    assert "problems have different dims: (k=2, d=1, l=1) vs (k=1, d=1, l=1)" in str(info.value)


def test_pair_must_share_g():
    other = dict(INLINE, g=["0.4 * y1 / (1 + t*t)", "0"])
    with pytest.raises(ValidationError, match="g"):
        parse_config(cfg(experiment="compare", problems=[INLINE, other]))


def test_z_in_g_reports_column():
    bad = dict(INLINE, g=["y1 + z11", "0"])
    with pytest.raises(ValidationError) as info:
        parse_config(cfg(experiment="solve", problem=bad))
    assert info.value.field == "problem.g[0][0]"
    assert "g may not depend on z" in str(info.value) and "column 6" in str(info.value)
    assert isinstance(info.value.__cause__, IllegalVariable)


@pytest.mark.parametrize("text, line, column", [('{"experiment": "solve",\n  "problem": }', 2, 14), ("[1, 2", 1, 6)])
def test_json_errors_have_position(text, line, column):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_invalid_utf8():
    with pytest.raises(ParseError):
        parse_config(b'{"experiment": "\xff"}')


def test_oracle_rejects_b_terminal():
    with pytest.raises(ValidationError):
        parse_config(cfg(experiment="oracle_diff", problem={"name": "example7", "xi": "B1"}))


def test_build_inline_pair_shares_g():
    c = parse_config(cfg(experiment="compare", problems=[INLINE, dict(INLINE, xi=["sin(W1) - 1", "0"])]))
    p1, p2 = build_problems(c["problems"])
    assert p1.dims == Dimensions(2, 1, 1)
    assert p1.g is p2.g


def test_build_builtin_with_expression():
    c = parse_config(cfg(experiment="solve", problem={"name": "example7", "xi": "exp(min(W1, 1))"}))
    p = build_problem(c["problem"])
    assert p.dims == Dimensions(1, 1, 1)
