"""Domain types shared by every module, plus the sampled assumption checkers.

Conventions used throughout the package:

* path-indexed arrays put the path axis first and the grid-time axis second,
  so ``Y`` has shape ``(n_paths, N + 1, k)`` and ``Z`` has shape
  ``(n_paths, N + 1, k, d)``;
* a coefficient ``f`` is called as ``f(t, y, z)`` with a scalar time, ``y`` of
  shape ``(n, k)`` and ``z`` of shape ``(n, k, d)``, and returns ``(n, k)``;
* ``g`` is called as ``g(t, y)`` and returns ``(n, k, l)``; it never sees ``z``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import NonConvergent
from .quadrature import integrate_to_infinity

__all__ = [
    "Dimensions",
    "TimeGrid",
    "LipschitzWeights",
    "CoefficientSet",
    "TerminalCondition",
    "ProblemSpec",
    "H3Report",
    "H2Report",
    "kappa",
    "check_h3",
    "check_h2_sampled",
]


@dataclass(frozen=True)
class Dimensions:
    k: int = 1
    d: int = 1
    l: int = 1

    def __post_init__(self):
        for name in ("k", "d", "l"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"dimension {name} must be an integer >= 1, got {value!r}")


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Discretisation ``0 = t_0 < ... < t_N = T`` of the truncated horizon."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a time grid needs at least two points")
        if pts[0] != 0.0:
            raise ValueError("time grids start at t_0 = 0")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("time grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, T, steps):
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if not T > 0:
            raise ValueError("horizon T must be positive")
        return cls(np.linspace(0.0, float(T), int(steps) + 1))

    @classmethod
    def geometric(cls, T, steps, ratio=1.05):
        """Steps growing by ``ratio``, so the grid is finest near 0."""
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if ratio <= 1.0:
            return cls.uniform(T, steps)
        powers = ratio ** np.arange(steps + 1)
        return cls(float(T) * (powers - 1.0) / (powers[-1] - 1.0))

    @classmethod
    def log_uniform(cls, T, steps, scale=1.0):
        """Points uniform in ``log(1 + t / scale)``: steps grow like ``scale + t``."""
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if not T > 0:
            raise ValueError("horizon T must be positive")
        u = np.linspace(0.0, np.log1p(float(T) / scale), int(steps) + 1)
        pts = scale * np.expm1(u)
        pts[-1] = float(T)
        return cls(pts)

    @classmethod
    def equal_mass(cls, density, T, steps, floor=0.1):
        """Place points so each step carries the same share of ``density + floor / T``.

        ``density`` is a nonnegative rate such as ``kappa``; the ``floor`` mixes
        in a uniform component so no step becomes arbitrarily long.
        """
        if steps < 1:
            raise ValueError("steps must be >= 1")
        T = float(T)
        fine = np.linspace(0.0, T, 64 * int(steps) + 1)
        rate = np.asarray([density(t) for t in fine], dtype=float) + floor / T
        # cumulative trapezoid on a fine mesh, then invert
        mass = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(fine))])
        targets = np.linspace(0.0, mass[-1], int(steps) + 1)
        pts = np.interp(targets, mass, fine)
        pts[0], pts[-1] = 0.0, T
        return cls(pts)

    @classmethod
    def adapted(cls, weights, T, steps, floor=0.05):
        """Grid for a first-order scheme driven by ``kappa``: equal shares of ``sqrt(kappa**2 + |kappa'|/2)``."""

        def density(t, h=1e-6):
            lo = max(t - h, 0.0)
            slope = (kappa(weights, t + h) - kappa(weights, lo)) / (t + h - lo)
            return math.sqrt(kappa(weights, t) ** 2 + 0.5 * abs(slope))

        return cls.equal_mass(density, T, steps, floor=floor)

    def refine(self):
        """Insert every midpoint (twice as many steps)."""
        mid = 0.5 * (self.points[1:] + self.points[:-1])
        pts = np.empty(2 * self.N + 1)
        pts[::2] = self.points
        pts[1::2] = mid
        return TimeGrid(pts)

    @property
    def T(self):
        return float(self.points[-1])

    @property
    def N(self):
        return self.points.size - 1

    @property
    def steps(self):
        return np.diff(self.points)

    @property
    def max_step(self):
        return float(self.steps.max())

    def index_of(self, t):
        """Index of the grid point nearest ``t``."""
        return int(np.argmin(np.abs(self.points - t)))

    def coarsen(self):
        """Every other point; requires an even number of steps."""
        if self.N % 2:
            raise ValueError("only grids with an even number of steps can be coarsened")
        return TimeGrid(self.points[::2])

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"TimeGrid(T={self.T:g}, N={self.N}, max_step={self.max_step:.4g})"


def _zero(t):
    return 0.0


@dataclass(frozen=True)
class LipschitzWeights:
    """Deterministic Lipschitz rates ``v(t)`` (for y in f) and ``u(t)`` (for z in f, y in g).

    ``v_envelope`` / ``u2_envelope`` optionally dominate ``v`` and ``u**2`` on the
    far tail; they are used instead of extrapolation when bounding tails.
    """

    v: Callable[[float], float] = _zero
    u: Callable[[float], float] = _zero
    v_envelope: Optional[Callable[[float], float]] = None
    u2_envelope: Optional[Callable[[float], float]] = None

    def u2(self, t):
        return self.u(t) ** 2


@dataclass(frozen=True)
class CoefficientSet:
    f: Callable
    g: Callable
    weights: LipschitzWeights = field(default_factory=LipschitzWeights)


@dataclass(frozen=True)
class TerminalCondition:
    """``evaluator(bundle)`` returns ξ with shape ``(n_paths, k)``."""

    evaluator: Callable
    second_moment_hint: Optional[float] = None

    @classmethod
    def constant(cls, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))

        def evaluator(bundle):
            return np.broadcast_to(value, (bundle.n_paths, value.size)).copy()

        return cls(evaluator, second_moment_hint=float(value @ value))

    def __call__(self, bundle):
        xi = np.asarray(self.evaluator(bundle), dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        if xi.shape[0] != bundle.n_paths:
            raise ValueError(f"terminal condition returned {xi.shape[0]} rows for {bundle.n_paths} paths")
        if not np.all(np.isfinite(xi)):
            raise ValueError("terminal condition is not finite on every path")
        return xi


@dataclass(frozen=True)
class ProblemSpec:
    dims: Dimensions
    coefficients: CoefficientSet
    terminal: TerminalCondition
    backward_features: Sequence[Callable[[float], float]] = ()

    @property
    def f(self):
        return self.coefficients.f

    @property
    def g(self):
        return self.coefficients.g

    @property
    def weights(self):
        return self.coefficients.weights

    def with_terminal(self, terminal):
        return ProblemSpec(self.dims, self.coefficients, terminal, tuple(self.backward_features))


def kappa(weights, t):
    """Combined rate ``max(v(t), u(t)**2)`` used to dominate both Lipschitz terms."""
    return max(float(weights.v(t)), float(weights.u(t)) ** 2)


@dataclass(frozen=True)
class H3Report:
    v_integral: float
    u2_integral: float
    passed: bool
    message: str = ""


def check_h3(weights, quad_tol=1e-8):
    """Check that ``v`` and ``u**2`` are integrable on ``[0, inf)``.

    A divergent integral gives ``passed=False`` with the reason in ``message``;
    the corresponding integral is reported as ``inf``.
    """
    if not quad_tol > 0:
        raise ValueError("quad_tol must be positive")
    results = {}
    messages = []
    for name, func, envelope in (
        ("v", weights.v, weights.v_envelope),
        ("u2", weights.u2, weights.u2_envelope),
    ):
        try:
            est = integrate_to_infinity(func, 0.0, tol=quad_tol, envelope=envelope)
        except NonConvergent as exc:
            results[name] = math.inf
            messages.append(f"{name}: {exc}")
            continue
        if est.abserr > quad_tol:
            results[name] = math.inf
            messages.append(f"{name}: error estimate {est.abserr:.3g} exceeds quad_tol")
        else:
            results[name] = est.value
    passed = not messages
    return H3Report(results["v"], results["u2"], passed, "; ".join(messages))


@dataclass(frozen=True)
class H2Report:
    max_violation: float
    passed: bool
    worst_time: Optional[float] = None


def check_h2_sampled(coeffs, dims, n_samples=1000, box=1.0, seed=0, t_max=10.0):
    """Search for violations of the Lipschitz bounds on f and g.

    Pairs of arguments are drawn uniformly from ``[-box, box]`` and times
    uniformly from ``[0, t_max]``.  The excess of ``|Δf|`` over
    ``v|Δy| + u|Δz|`` (and of ``|Δg|`` over ``u|Δy|``) is recorded; the report
    holds the largest positive excess.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not box > 0:
        raise ValueError("box must be positive")
    rng = np.random.default_rng(seed)
    k, d = dims.k, dims.d
    w = coeffs.weights
    worst, worst_t = 0.0, None
    for _ in range(n_samples):
        t = float(rng.uniform(0.0, t_max))
        y = rng.uniform(-box, box, size=(2, k))
        z = rng.uniform(-box, box, size=(2, k, d))
        f = np.asarray(coeffs.f(t, y, z), dtype=float).reshape(2, k)
        g = np.asarray(coeffs.g(t, y), dtype=float).reshape(2, -1)
        dy = np.linalg.norm(y[0] - y[1])
        dz = np.linalg.norm(z[0] - z[1])
        v, u = float(w.v(t)), float(w.u(t))
        f_gap = np.linalg.norm(f[0] - f[1])
        g_gap = np.linalg.norm(g[0] - g[1])
        slack = 1e-12 * (1.0 + np.abs(f).max() + np.abs(g).max())
        excess = max(f_gap - (v * dy + u * dz), g_gap - u * dy) - slack
        if excess > worst:
            worst, worst_t = float(excess), t
    return H2Report(worst, worst <= 0.0, worst_t)
