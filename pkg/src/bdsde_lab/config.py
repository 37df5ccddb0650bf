"""JSON experiment configuration: parsing, validation and defaults.

A config names one experiment and carries only the sections that experiment
uses; unknown keys anywhere are rejected.  Every default that fills a missing
key is logged and recorded in :attr:`ExperimentConfig.defaults_applied`.
"""

import copy
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List

from .core import CoefficientSet, Dimensions, LipschitzWeights, ProblemSpec, TerminalCondition
from .exceptions import ParseError, ValidationError
from .expr import (
    compile_f,
    compile_g,
    compile_scalar,
    compile_terminal,
    parse_coefficient,
    parse_expression,
    to_source,
    variables,
)
from .oracle import example7_problem

__all__ = ["ExperimentConfig", "parse_config", "build_problem", "build_problems", "EXPERIMENTS", "BUILTINS"]

logger = logging.getLogger(__name__)

EXPERIMENTS = ("solve", "compare", "ito_check", "gronwall", "oracle_diff", "assumptions")
BUILTINS = ("example7",)

_GRID = {"T": None, "steps": 64, "tail_budget": 0.01, "kind": "adapted"}
_MC = {"paths": 4096, "seed": 0}
_SOLVER = {
    "picard_max": 20,
    "picard_tol": 1e-3,
    "inner_fixed_point_iters": 3,
    "ridge_lambda": None,
    "degree": 2,
    "mode": "coupled",
    "init_value": 0.0,
}
_OUTPUT = {"path": None, "format": "csv"}
_COMPARE = {"violation_budget": 0.01, "scheme_tol": None}
_ITO = {"T": 1.0, "steps": [64, 128, 256], "alpha0": "1", "beta": "0", "gamma": "1", "delta": "1"}
_GRONWALL = {"A": None, "M": None, "r": None, "m": None, "r_envelope": None, "times": None, "t_max": 10.0, "points": 11}
_ORACLE = {"n_outer": 2048, "n_inner": 64, "inner_seed": 1, "times": [0.0], "rtol": 0.02, "refine": True}
_ASSUMPTIONS = {"n_samples": 1000, "box": 1.0, "t_max": 10.0}
_INLINE = {"dims": None, "f": None, "g": None, "xi": None, "v": "0", "u": "0", "features": []}
_BUILTIN = {"name": None, "xi": 1.0}

# experiment -> (required sections, optional sections)
_LAYOUT = {
    "solve": ({"problem"}, {"grid", "mc", "solver", "output"}),
    "compare": ({"problems"}, {"grid", "mc", "solver", "output", "compare"}),
    "ito_check": (set(), {"ito", "mc", "output"}),
    "gronwall": ({"gronwall"}, {"output"}),
    "oracle_diff": (set(), {"problem", "grid", "mc", "solver", "oracle", "output"}),
    "assumptions": (set(), {"problem", "problems", "grid", "mc", "assumptions", "output"}),
}
_SECTION_DEFAULTS = {
    "grid": _GRID,
    "mc": _MC,
    "solver": _SOLVER,
    "output": _OUTPUT,
    "compare": _COMPARE,
    "ito": _ITO,
    "gronwall": _GRONWALL,
    "oracle": _ORACLE,
    "assumptions": _ASSUMPTIONS,
}


@dataclass
class ExperimentConfig:
    """Validated configuration; ``sections`` holds every section with defaults filled in."""

    experiment: str
    sections: Dict[str, Any]
    defaults_applied: List[str] = field(default_factory=list)

    def __getitem__(self, name):
        return self.sections[name]

    def get(self, name, default=None):
        return self.sections.get(name, default)

    def to_dict(self):
        return {"experiment": self.experiment, **copy.deepcopy(self.sections)}

    @property
    def seed(self):
        return int(self.sections.get("mc", {}).get("seed", 0))

    def with_seed(self, seed):
        """Copy with ``mc.seed`` replaced (the ``--seed`` override)."""
        sections = copy.deepcopy(self.sections)
        sections.setdefault("mc", dict(_MC))["seed"] = int(seed)
        return ExperimentConfig(self.experiment, sections, list(self.defaults_applied))


def parse_config(text):
    """Parse and validate a JSON config given as bytes or str."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"config is not UTF-8: {exc.reason}", 1, exc.start + 1) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object", "")
    return _Validator().validate(raw)


class _Validator:
    def __init__(self):
        self.defaults = []

    def default(self, path, value):
        self.defaults.append(f"{path} = {json.dumps(value)}")
        logger.info("default applied: %s = %s", path, json.dumps(value))

    def validate(self, raw):
        experiment = raw.get("experiment")
        if experiment is None:
            raise ValidationError("experiment is required", "experiment")
        if experiment not in EXPERIMENTS:
            raise ValidationError(f"experiment must be one of {', '.join(EXPERIMENTS)}", "experiment")
        required, optional = _LAYOUT[experiment]
        allowed = required | optional | {"experiment"}
        for key in raw:
            if key not in allowed:
                raise ValidationError(f"unknown key {key!r} for experiment {experiment}", key)
        for key in sorted(required):
            if key not in raw:
                raise ValidationError(f"{key} is required for experiment {experiment}", key)

        sections = {}
        for name in sorted(optional | required):
            if name in ("problem", "problems"):
                continue
            if name in raw or name in _SECTION_DEFAULTS:
                sections[name] = self.section(name, raw.get(name), _SECTION_DEFAULTS[name])

        if experiment == "assumptions" and ("problem" in raw) == ("problems" in raw):
            raise ValidationError("assumptions needs exactly one of problem or problems", "problem")
        if experiment == "oracle_diff" and "problem" not in raw:
            self.default("problem", "example7")
        if "problem" in raw or experiment == "oracle_diff":
            sections["problem"] = self.problem("problem", raw.get("problem", "example7"))
        if "problems" in raw:
            sections["problems"] = self.problem_pair(raw["problems"])
        if experiment == "oracle_diff":
            p = sections["problem"]
            if p.get("name") != "example7":
                raise ValidationError("oracle_diff needs the built-in example7 problem", "problem")
            if isinstance(p["xi"], str) and "B1" in variable_names(p["xi"]):
                raise ValidationError("oracle_diff needs xi to depend on W1 only", "problem.xi")

        for name, check in (
            ("grid", self.check_grid),
            ("mc", self.check_mc),
            ("solver", self.check_solver),
            ("output", self.check_output),
            ("compare", self.check_compare),
            ("ito", self.check_ito),
            ("gronwall", self.check_gronwall),
            ("oracle", self.check_oracle),
            ("assumptions", self.check_assumptions),
        ):
            if name in sections:
                check(sections[name])
        if "output" in sections and sections["output"]["path"] is None:
            value = "results." + sections["output"]["format"]
            sections["output"]["path"] = value
            self.default("output.path", value)
        return ExperimentConfig(experiment, sections, self.defaults)

    def section(self, name, raw, defaults):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ValidationError(f"{name} must be an object", name)
        for key in raw:
            if key not in defaults:
                raise ValidationError(f"unknown key {name}.{key}", f"{name}.{key}")
        out = {}
        for key, value in defaults.items():
            if key in raw:
                out[key] = copy.deepcopy(raw[key])
            else:
                out[key] = copy.deepcopy(value)
                if value is not None:
                    self.default(f"{name}.{key}", value)
        return out

    # -- problems -------------------------------------------------------

    def problem(self, path, raw):
        if isinstance(raw, str):
            if raw not in BUILTINS:
                raise ValidationError(f"{path} names unknown built-in {raw!r}", path)
            raw = {"name": raw}
        if not isinstance(raw, dict):
            raise ValidationError(f"{path} must be a built-in name or an object", path)
        if "name" in raw:
            out = self.section(path, raw, _BUILTIN)
            if out["name"] not in BUILTINS:
                raise ValidationError(f"{path}.name names unknown built-in {out['name']!r}", f"{path}.name")
            xi = out["xi"]
            if not isinstance(xi, (int, float)) or isinstance(xi, bool):
                self.expression(f"{path}.xi", xi, Dimensions(1, 1, 1), "terminal")
            return out
        out = self.section(path, raw, _INLINE)
        for key in ("dims", "f", "g", "xi"):
            if out[key] is None:
                raise ValidationError(f"{path}.{key} is required for an inline problem", f"{path}.{key}")
        dims = self.dims(f"{path}.dims", out["dims"])
        self.expression_list(f"{path}.f", out["f"], dims.k, dims, "f")
        g = out["g"]
        if not isinstance(g, list) or len(g) != dims.k:
            raise ValidationError(f"{path}.g needs {dims.k} rows", f"{path}.g")
        for i, row in enumerate(g):
            row = [row] if not isinstance(row, list) else row
            self.expression_list(f"{path}.g[{i}]", row, dims.l, dims, "g")
        self.expression_list(f"{path}.xi", out["xi"], dims.k, dims, "terminal")
        for key in ("v", "u"):
            self.expression(f"{path}.{key}", out[key], dims, "scalar")
        if not isinstance(out["features"], list):
            raise ValidationError(f"{path}.features must be a list", f"{path}.features")
        for i, h in enumerate(out["features"]):
            self.expression(f"{path}.features[{i}]", h, dims, "scalar")
        return out

    def problem_pair(self, raw):
        if not isinstance(raw, list) or len(raw) != 2:
            raise ValidationError("problems must be a list of two problems", "problems")
        pair = [self.problem(f"problems[{i}]", p) for i, p in enumerate(raw)]
        dims = [_declared_dims(p) for p in pair]
        if dims[0] != dims[1]:
            raise ValidationError(
                f"problems have different dims: {_dims_text(dims[0])} vs {_dims_text(dims[1])}", "problems[1].dims"
            )
        kinds = ["name" in p for p in pair]
        if kinds[0] != kinds[1] or (kinds[0] and pair[0]["name"] != pair[1]["name"]):
            raise ValidationError("both problems must share g: use the same built-in or inline g", "problems")
        if not kinds[0] and _g_source(pair[0], dims[0]) != _g_source(pair[1], dims[1]):
            raise ValidationError("both problems must share g (the g expressions differ)", "problems[1].g")
        return pair

    def dims(self, path, raw):
        if not isinstance(raw, dict):
            raise ValidationError(f"{path} must be an object with k, d, l", path)
        for key in raw:
            if key not in ("k", "d", "l"):
                raise ValidationError(f"unknown key {path}.{key}", f"{path}.{key}")
        values = {}
        for key in ("k", "d", "l"):
            value = raw.get(key, 1)
            if key not in raw:
                self.default(f"{path}.{key}", 1)
            self.integer(f"{path}.{key}", value, minimum=1)
            values[key] = value
        return Dimensions(**values)

    def expression_list(self, path, values, size, dims, slot):
        values = [values] if not isinstance(values, list) else values
        if len(values) != size:
            raise ValidationError(f"{path} needs {size} entries, got {len(values)}", path)
        for i, v in enumerate(values):
            self.expression(f"{path}[{i}]", v, dims, slot)

    def expression(self, path, value, dims, slot):
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise ValidationError(f"{path} must be an expression string or a number", path)
        try:
            parse_coefficient(value, dims, slot)
        except ParseError as exc:
            raise ValidationError(f"{path}: {exc}", path) from exc

    # -- scalar checks --------------------------------------------------

    def integer(self, path, value, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{path} must be an integer", path)
        if minimum is not None and value < minimum:
            raise ValidationError(f"{path} must be ≥ {minimum}", path)

    def number(self, path, value, positive=False, nonnegative=False, optional=False):
        if value is None and optional:
            return
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{path} must be a number", path)
        if positive and not value > 0:
            raise ValidationError(f"{path} must be > 0", path)
        if nonnegative and not value >= 0:
            raise ValidationError(f"{path} must be ≥ 0", path)

    def choice(self, path, value, options):
        if value not in options:
            raise ValidationError(f"{path} must be one of {', '.join(options)}", path)

    def check_grid(self, s):
        self.number("grid.T", s["T"], positive=True, optional=True)
        self.integer("grid.steps", s["steps"], minimum=1)
        self.number("grid.tail_budget", s["tail_budget"], positive=True)
        self.choice("grid.kind", s["kind"], ("adapted", "uniform", "log"))

    def check_mc(self, s):
        self.integer("mc.paths", s["paths"], minimum=2)
        self.integer("mc.seed", s["seed"], minimum=0)

    def check_solver(self, s):
        self.integer("solver.picard_max", s["picard_max"], minimum=1)
        self.number("solver.picard_tol", s["picard_tol"], positive=True)
        self.integer("solver.inner_fixed_point_iters", s["inner_fixed_point_iters"], minimum=1)
        self.number("solver.ridge_lambda", s["ridge_lambda"], nonnegative=True, optional=True)
        self.integer("solver.degree", s["degree"], minimum=1)
        self.choice("solver.mode", s["mode"], ("coupled", "picard"))
        self.number("solver.init_value", s["init_value"])

    def check_output(self, s):
        self.choice("output.format", s["format"], ("csv", "json"))
        if s["path"] is not None and (not isinstance(s["path"], str) or not s["path"] or "/" in s["path"]):
            raise ValidationError("output.path must be a plain file name", "output.path")

    def check_compare(self, s):
        self.number("compare.violation_budget", s["violation_budget"], nonnegative=True)
        self.number("compare.scheme_tol", s["scheme_tol"], nonnegative=True, optional=True)

    def check_ito(self, s):
        self.number("ito.T", s["T"], positive=True)
        steps = s["steps"]
        if not isinstance(steps, list) or not steps:
            raise ValidationError("ito.steps must be a nonempty list", "ito.steps")
        for i, n in enumerate(steps):
            self.integer(f"ito.steps[{i}]", n, minimum=1)
        for key in ("alpha0", "beta", "gamma", "delta"):
            self.expression(f"ito.{key}", s[key], Dimensions(), "scalar")

    def check_gronwall(self, s):
        for key in ("A", "M", "r"):
            if s[key] is None:
                raise ValidationError(f"gronwall.{key} is required", f"gronwall.{key}")
        self.number("gronwall.A", s["A"], nonnegative=True)
        self.number("gronwall.M", s["M"], positive=True)
        for key in ("r", "m", "r_envelope"):
            if s[key] is not None:
                self.expression(f"gronwall.{key}", s[key], Dimensions(), "scalar")
        if s["times"] is not None:
            if not isinstance(s["times"], list) or not s["times"]:
                raise ValidationError("gronwall.times must be a nonempty list", "gronwall.times")
            for i, t in enumerate(s["times"]):
                self.number(f"gronwall.times[{i}]", t, nonnegative=True)
        self.number("gronwall.t_max", s["t_max"], nonnegative=True)
        self.integer("gronwall.points", s["points"], minimum=1)

    def check_oracle(self, s):
        self.integer("oracle.n_outer", s["n_outer"], minimum=1)
        self.integer("oracle.n_inner", s["n_inner"], minimum=1)
        self.integer("oracle.inner_seed", s["inner_seed"], minimum=0)
        if not isinstance(s["times"], list) or not s["times"]:
            raise ValidationError("oracle.times must be a nonempty list", "oracle.times")
        for i, t in enumerate(s["times"]):
            self.number(f"oracle.times[{i}]", t, nonnegative=True)
        self.number("oracle.rtol", s["rtol"], positive=True)
        if not isinstance(s["refine"], bool):
            raise ValidationError("oracle.refine must be true or false", "oracle.refine")

    def check_assumptions(self, s):
        self.integer("assumptions.n_samples", s["n_samples"], minimum=1)
        self.number("assumptions.box", s["box"], positive=True)
        self.number("assumptions.t_max", s["t_max"], positive=True)


def variable_names(source):
    return variables(parse_expression(source))


def _declared_dims(p):
    if "name" in p:
        return Dimensions(1, 1, 1)
    return Dimensions(**{key: p["dims"].get(key, 1) for key in ("k", "d", "l")})


def _dims_text(d):
    return f"(k={d.k}, d={d.d}, l={d.l})"


def _g_source(p, dims):
    rows = [row if isinstance(row, list) else [row] for row in p["g"]]
    return [[to_source(parse_coefficient(s, dims, "g").tree) for s in row] for row in rows]


# -- building domain objects from validated sections ---------------------


def build_problem(p, shared=None):
    """``ProblemSpec`` from a validated problem section; ``shared`` supplies a ready ``g``."""
    if "name" in p:
        xi = p["xi"]
        if isinstance(xi, (int, float)):
            return example7_problem(float(xi))
        terminal = TerminalCondition(compile_terminal([xi], Dimensions(1, 1, 1)))
        return example7_problem().with_terminal(terminal)
    dims = _declared_dims(p)
    f = compile_f(p["f"], dims)
    g = shared if shared is not None else compile_g(p["g"], dims)
    weights = LipschitzWeights(v=compile_scalar(p["v"]), u=compile_scalar(p["u"]))
    terminal = TerminalCondition(compile_terminal(p["xi"], dims))
    features = tuple(compile_scalar(h) for h in p["features"])
    return ProblemSpec(dims, CoefficientSet(f, g, weights), terminal, features)


def build_problems(pair):
    """Both problems of a compare config, with the second reusing the first one's ``g``."""
    first = build_problem(pair[0])
    return first, build_problem(pair[1], shared=first.g)
