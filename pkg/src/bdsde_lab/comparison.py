"""Componentwise comparison of two BDSDEs sharing ``g``, on common noise."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CoefficientSet, Dimensions, LipschitzWeights, ProblemSpec, TerminalCondition, TimeGrid
from .exceptions import NonPositiveEpsilon
from .horizon import choose_truncation
from .solver import SolverConfig, solve
from .stoch_calc import generate_bundle

__all__ = [
    "phi_epsilon",
    "phi_epsilon_prime",
    "phi_epsilon_second",
    "ComparisonSetup",
    "ComparisonReport",
    "H4Report",
    "check_h4_sampled",
    "GStructureReport",
    "check_g_componentwise",
    "cross_noise_pair",
    "compare",
    "random_linear_pair",
]


def _check_eps(eps):
    if not eps > 0:
        raise NonPositiveEpsilon(f"eps must be positive, got {eps!r}")


def phi_epsilon(y, eps):
    """C² smoothing of ``(y^-)^2``: quadratic left of 0, linear right of ``2 eps``.

    ``0 <= phi - (y^-)^2 <= 2 eps y^+``, so the value converges uniformly only on
    bounded sets; ``|phi' + 2 y^-| <= 2 eps`` holds on the whole line.
    """
    _check_eps(eps)
    y = np.asarray(y, dtype=float)
    return np.where(
        y <= 0,
        y * y,
        np.where(y <= 2 * eps, y * y - y**3 / (6 * eps), 2 * eps * y - 4.0 / 3.0 * eps * eps),
    )


def phi_epsilon_prime(y, eps):
    _check_eps(eps)
    y = np.asarray(y, dtype=float)
    return np.where(y <= 0, 2 * y, np.where(y <= 2 * eps, 2 * y - y * y / (2 * eps), 2 * eps))


def phi_epsilon_second(y, eps):
    _check_eps(eps)
    y = np.asarray(y, dtype=float)
    return np.where(y <= 0, 2.0, np.where(y <= 2 * eps, 2.0 - y / eps, 0.0))


@dataclass(frozen=True)
class ComparisonSetup:
    """Two problems differing only in ``f`` and ξ; ``g`` must be the same object."""

    problem1: ProblemSpec
    problem2: ProblemSpec
    grid: TimeGrid
    cfg: SolverConfig = field(default_factory=SolverConfig)
    shared_g: bool = True

    def __post_init__(self):
        if self.problem1.dims != self.problem2.dims:
            raise ValueError(f"dimension mismatch: {self.problem1.dims} vs {self.problem2.dims}")
        if not self.shared_g or self.problem1.g is not self.problem2.g:
            raise ValueError("both problems must share the same g")

    def swapped(self):
        return ComparisonSetup(self.problem2, self.problem1, self.grid, self.cfg, self.shared_g)


@dataclass(frozen=True)
class H4Report:
    max_violation: float
    terminal_violation: float
    passed: bool


def check_h4_sampled(setup, n_samples=1000, box=1.0, seed=0, t_max=10.0, n_terminal_paths=1024):
    """Sample admissible argument pairs for quasi-monotonicity and test ``f^1_j >= f^2_j``.

    Pairs are built by perturbation: ``y^2`` and ``z^2`` are uniform on the box,
    ``y^1`` adds a nonnegative shift off component ``j``, and ``z^1`` redraws
    every row except ``j``.  The terminal ordering ``ξ^1 >= ξ^2`` is checked on
    ``n_terminal_paths`` simulated paths.

    Ordering also needs ``g_j`` to depend on ``y`` through ``y_j`` only;
    :func:`check_g_componentwise` tests that separately.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    dims = setup.problem1.dims
    k, d = dims.k, dims.d
    f1, f2 = setup.problem1.f, setup.problem2.f
    worst = 0.0
    for _ in range(n_samples):
        j = int(rng.integers(k))
        t = float(rng.uniform(0.0, t_max))
        y2 = rng.uniform(-box, box, size=(1, k))
        shift = rng.uniform(0.0, box, size=(1, k))
        shift[0, j] = 0.0
        y1 = y2 + shift
        z2 = rng.uniform(-box, box, size=(1, k, d))
        z1 = rng.uniform(-box, box, size=(1, k, d))
        z1[0, j] = z2[0, j]
        gap = float(np.asarray(f2(t, y2, z2)).reshape(k)[j] - np.asarray(f1(t, y1, z1)).reshape(k)[j])
        worst = max(worst, gap)

    bundle = generate_bundle(setup.grid, dims, n_terminal_paths, seed)
    xi_gap = setup.problem2.terminal(bundle) - setup.problem1.terminal(bundle)
    terminal = max(0.0, float(xi_gap.max()))
    slack = 1e-12
    return H4Report(worst, terminal, worst <= slack and terminal <= slack)


@dataclass(frozen=True)
class GStructureReport:
    max_cross_dependence: float
    passed: bool


def check_g_componentwise(setup, n_samples=1000, box=1.0, seed=0, t_max=10.0):
    """Largest change of ``g_j`` when only the components ``y_l, l != j`` move.

    Without this structure ordering fails: with ``f = 0``,
    ``g_1(y) = y_2`` and ``ξ^1 - ξ^2 = (0, δ)`` the first gap component is
    ``δ (B_T - B_t)``, negative half the time.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    k = setup.problem1.dims.k
    g = setup.problem1.g
    worst = 0.0
    for _ in range(n_samples):
        j = int(rng.integers(k))
        t = float(rng.uniform(0.0, t_max))
        y = rng.uniform(-box, box, size=(2, k))
        y[1, j] = y[0, j]
        out = np.asarray(g(t, y), dtype=float).reshape(2, k, -1)
        worst = max(worst, float(np.abs(out[0, j] - out[1, j]).max()))
    slack = 1e-12
    return GStructureReport(worst, worst <= slack)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Gap ``Y^1 - Y^2`` statistics.

    ``stderr`` is, per component, the largest standard error of the path-mean gap
    over grid times; ``violation_fraction`` counts entries with a negative gap.
    """

    min_gap_per_component: np.ndarray
    violation_fraction: float
    stderr: np.ndarray
    passed: bool
    scheme_tol: np.ndarray
    times: np.ndarray
    gap_mean: np.ndarray
    gap_min: np.ndarray
    gap_stderr: np.ndarray
    Y1: Optional[np.ndarray] = None
    Y2: Optional[np.ndarray] = None


def compare(setup, violation_budget=0.01, scheme_tol=None, bundle=None, keep_paths=False):
    """Solve both problems on one bundle and test ``Y^1 >= Y^2`` componentwise.

    Unless ``scheme_tol`` is given, it is estimated per component as the
    largest change in the mean gap between this grid and the grid with every
    other point removed (same paths, increments summed pairwise).
    """
    cfg = setup.cfg
    if bundle is None:
        bundle = generate_bundle(setup.grid, setup.problem1.dims, cfg.n_paths, cfg.seed)
    sol1, _ = solve(setup.problem1, bundle.grid, cfg, bundle=bundle)
    sol2, _ = solve(setup.problem2, bundle.grid, cfg, bundle=bundle)
    gap = sol1.Y - sol2.Y
    n = gap.shape[0]

    gap_mean = gap.mean(axis=0)
    gap_min = gap.min(axis=0)
    gap_se = gap.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(gap_mean)
    stderr = gap_se.max(axis=0)
    min_gap = gap_min.min(axis=0)

    if scheme_tol is None:
        scheme_tol = _refinement_tolerance(setup, bundle, gap_mean)
    scheme_tol = np.broadcast_to(np.asarray(scheme_tol, dtype=float), min_gap.shape).copy()

    violation_fraction = float(np.mean(gap < 0.0))
    passed = bool(np.all(min_gap >= -(3.0 * stderr + scheme_tol)) and violation_fraction <= violation_budget)
    return ComparisonReport(
        min_gap_per_component=min_gap,
        violation_fraction=violation_fraction,
        stderr=stderr,
        passed=passed,
        scheme_tol=scheme_tol,
        times=bundle.grid.points.copy(),
        gap_mean=gap_mean,
        gap_min=gap_min,
        gap_stderr=gap_se,
        Y1=sol1.Y if keep_paths else None,
        Y2=sol2.Y if keep_paths else None,
    )


def _refinement_tolerance(setup, bundle, gap_mean):
    if bundle.grid.N % 2:
        return np.zeros(gap_mean.shape[1])
    coarse = bundle.coarsen()
    c1, _ = solve(setup.problem1, coarse.grid, setup.cfg, bundle=coarse)
    c2, _ = solve(setup.problem2, coarse.grid, setup.cfg, bundle=coarse)
    return np.abs(gap_mean[::2] - (c1.Y - c2.Y).mean(axis=0)).max(axis=0)


def random_linear_pair(seed, grid_steps=64, tail_budget=0.05, n_paths=2048, k=2):
    """A random pair satisfying quasi-monotonicity, for stress-testing :func:`compare`.

    Both problems use ``c(t) = 1 / (1 + rho t^2)`` with random ``rho``::

        f^2(t, y, z)_j = c(t) ((A y)_j + b_j z_{j1}),   A off-diagonal >= 0
        f^1 = f^2 + c(t) s,  s >= 0
        g(t, y)_j      = c(t) G_j y_j                 (shared, one B component)
        ξ^2_j = sin(W_T + phase_j),  ξ^1 = ξ^2 + δ,  δ > 0
    """
    rng = np.random.default_rng(seed)
    d = l = 1
    rho = float(rng.uniform(0.5, 2.0))
    A = rng.uniform(-0.5, 0.5, size=(k, k))
    off = ~np.eye(k, dtype=bool)
    A[off] = rng.uniform(0.0, 0.5, size=off.sum())
    b = rng.uniform(-0.5, 0.5, size=k)
    G = np.diag(rng.uniform(-0.5, 0.5, size=k))
    s = rng.uniform(0.0, 0.3, size=k)
    delta = rng.uniform(0.05, 0.5, size=k)
    phase = rng.uniform(0.0, 2 * np.pi, size=k)

    def c(t):
        return 1.0 / (1.0 + rho * t * t)

    def f2(t, y, z):
        return c(t) * (y @ A.T + b * z[:, :, 0])

    def f1(t, y, z):
        return f2(t, y, z) + c(t) * s

    def g(t, y):
        return (c(t) * (y @ G.T))[:, :, None]

    lip_y = float(np.linalg.norm(A, 2))
    lip_u = max(float(np.abs(b).max()), float(np.linalg.norm(G, 2)))
    weights = LipschitzWeights(v=lambda t: lip_y * c(t), u=lambda t: lip_u * c(t))

    def xi2(bundle):
        return np.sin(bundle.W_T[:, :1] + phase)

    def xi1(bundle):
        return xi2(bundle) + delta

    dims = Dimensions(k, d, l)
    T = choose_truncation(weights, tail_budget)
    grid = TimeGrid.adapted(weights, T, grid_steps)
    p1 = ProblemSpec(dims, CoefficientSet(f1, g, weights), TerminalCondition(xi1), backward_features=(c,))
    p2 = ProblemSpec(dims, CoefficientSet(f2, g, weights), TerminalCondition(xi2), backward_features=(c,))
    return ComparisonSetup(p1, p2, grid, SolverConfig(n_paths=n_paths, seed=seed))


def cross_noise_pair(delta=0.5, T=4.0, grid_steps=32, n_paths=2048, seed=0):
    """Quasi-monotone pair whose ``g`` couples components, so ordering fails.

    ``f = 0``, ``g(t, y) = c(t) (y_2, 0)`` with ``c = 1/(1+t^2)``,
    ``ξ^1 = (0, δ)`` and ``ξ^2 = 0``: then ``Y^1_1 - Y^2_1 = δ int_t^T c dB``.
    """
    dims = Dimensions(2, 1, 1)

    def c(t):
        return 1.0 / (1.0 + t * t)

    def f(t, y, z):
        return np.zeros_like(y)

    def g(t, y):
        out = np.zeros(y.shape + (1,))
        out[:, 0, 0] = c(t) * y[:, 1]
        return out

    weights = LipschitzWeights(v=_no_rate, u=c)
    coeffs1 = CoefficientSet(f, g, weights)
    p1 = ProblemSpec(dims, coeffs1, TerminalCondition.constant([0.0, delta]), backward_features=(c,))
    p2 = ProblemSpec(dims, CoefficientSet(f, g, weights), TerminalCondition.constant([0.0, 0.0]), backward_features=(c,))
    grid = TimeGrid.uniform(T, grid_steps)
    return ComparisonSetup(p1, p2, grid, SolverConfig(n_paths=n_paths, seed=seed))


def _no_rate(t):
    return 0.0
