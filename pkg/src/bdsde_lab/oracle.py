"""Reference values for the scalar linear test problem

    y_t = ξ + int_t^T a(s)(y_s + z_s) ds + int_t^T a(s) y_s dB_s - int_t^T z_s dW_s,
    a(s) = 1 / (1 + s^2).

Its solution is a conditional expectation of ξ times a positive weight.
Writing ``A = int_t^T a ds``, ``I_B = int_t^T a dB`` (backward) and
``I_W = int_t^T a dW``::

    y_t = E[ ξ exp(A + I_B - ½ int a² ds + I_W - ½ int a² ds) | F_t ]

The drift term gives ``exp(A)``, the backward integral gives a backward
exponential martingale, and the ``a z`` term is a Girsanov change of measure
for W.  :func:`paper_explicit_form` evaluates the same conditional expectation
with weight ``exp(I_B + I_W)``, i.e. without the ``ds`` terms; the ratio of the
two is reported as a diagnostic.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .core import (
    CoefficientSet,
    Dimensions,
    LipschitzWeights,
    ProblemSpec,
    TerminalCondition,
    TimeGrid,
)

__all__ = [
    "example7_rate",
    "example7_problem",
    "LinearExampleSpec",
    "derived_linear_solution",
    "paper_explicit_form",
    "exact_mean_constant",
]


def example7_rate(t):
    return 1.0 / (1.0 + t * t)


def _f(t, y, z):
    return example7_rate(t) * (y + z[:, :, 0])


def _g(t, y):
    return example7_rate(t) * y[:, :, None]


def example7_problem(xi=1.0):
    """The linear problem above; ``xi`` is a constant or a callable of ``W_T`` (shape ``(n,)``)."""
    dims = Dimensions(1, 1, 1)
    weights = LipschitzWeights(
        v=example7_rate,
        u=example7_rate,
        v_envelope=lambda t: 1.0 / (t * t),
        u2_envelope=lambda t: 1.0 / t**4,
    )
    if callable(xi):
        terminal = TerminalCondition(lambda bundle: np.asarray(xi(bundle.W_T[:, 0]), dtype=float)[:, None])
    else:
        terminal = TerminalCondition.constant([float(xi)])
    return ProblemSpec(dims, CoefficientSet(_f, _g, weights), terminal, backward_features=(example7_rate,))


@dataclass(frozen=True)
class LinearExampleSpec:
    """``xi`` is a constant ``c`` or a bounded callable of ``W_T``."""

    xi: Union[float, Callable] = 1.0
    grid: Optional[TimeGrid] = None
    n_outer: int = 256
    n_inner: int = 256
    inner_seed: int = 1

    @property
    def xi_kind(self):
        return "functional" if callable(self.xi) else "constant"

    @property
    def horizon(self):
        return self.grid.T


def _int_rate(a, b):
    return math.atan(b) - math.atan(a)


def _nested(spec, bundle, t, weight_fn):
    """Average ``ξ · weight`` over fresh W increments after ``t`` for each outer path."""
    grid = bundle.grid
    i0 = grid.index_of(t)
    n_outer = min(spec.n_outer, bundle.n_paths)
    rate_left = example7_rate(grid.points[:-1])
    rate_right = example7_rate(grid.points[1:])
    dt = grid.steps

    # F_t data of each outer path: W_{t} and the increments of B after t
    W_t = bundle.W[:n_outer, i0, 0]
    IB = bundle.dB[:n_outer, i0:, 0] @ rate_right[i0:]
    qb = (rate_right[i0:] ** 2) @ dt[i0:]
    qw = (rate_left[i0:] ** 2) @ dt[i0:]
    drift = _int_rate(grid.points[i0], grid.T)

    rng = np.random.Generator(np.random.Philox(key=spec.inner_seed))
    out = np.empty(n_outer)
    scale = np.sqrt(dt[i0:])
    for p in range(n_outer):
        dW = rng.standard_normal((spec.n_inner, grid.N - i0)) * scale
        IW = dW @ rate_left[i0:]
        W_T = W_t[p] + dW.sum(axis=1)
        xi = spec.xi(W_T) if callable(spec.xi) else np.full(spec.n_inner, float(spec.xi))
        out[p] = np.mean(xi * weight_fn(drift, IB[p], IW, qb, qw))
    return out


def derived_linear_solution(spec, bundle, t):
    """Nested Monte Carlo of the exponential-weight representation at grid time ``t``.

    Returns one value per outer path (the first ``spec.n_outer`` paths of
    ``bundle``).  Inner draws come from ``spec.inner_seed`` and are the same for
    every call, so two terminal conditions are compared on common noise.
    """
    return _nested(spec, bundle, t, lambda A, IB, IW, qb, qw: np.exp(A + IB - 0.5 * qb + IW - 0.5 * qw))


def paper_explicit_form(spec, bundle, t):
    """Same conditional expectation with weight ``exp(I_B + I_W)``, no ``ds`` terms."""
    return _nested(spec, bundle, t, lambda A, IB, IW, qb, qw: np.exp(IB + IW))


def exact_mean_constant(c, t, T):
    """``E[y_t]`` for constant ``ξ = c``: ``c · exp(arctan T - arctan t)``."""
    return c * math.exp(_int_rate(t, T))
