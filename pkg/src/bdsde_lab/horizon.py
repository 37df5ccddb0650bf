"""Truncation horizon selection and the backward Gronwall bound."""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .exceptions import NonConvergent
from .quadrature import integrate_to_infinity, tail_integrals

__all__ = [
    "GronwallProblem",
    "GronwallReport",
    "gronwall_bound",
    "gronwall_bounds",
    "gronwall_verify",
    "choose_truncation",
    "tail_mass",
]


@dataclass(frozen=True)
class GronwallProblem:
    """Data of ``m(t) <= A + M int m r``; the bound sought is ``A exp(M int_t^inf r)``."""

    A: float
    M: float
    r: Callable[[float], float]
    m: Optional[Callable[[float], float]] = None
    T_eval: float = 100.0
    r_envelope: Optional[Callable[[float], float]] = None
    tol: float = 1e-10

    def __post_init__(self):
        if self.A < 0:
            raise ValueError("A must be nonnegative")
        if not self.M > 0:
            raise ValueError("M must be positive")


def gronwall_bound(p, t):
    if t < 0:
        raise ValueError("t must be nonnegative")
    if p.A == 0:
        return 0.0
    tail = integrate_to_infinity(p.r, float(t), tol=p.tol, envelope=p.r_envelope).value
    return p.A * math.exp(p.M * tail)


def gronwall_bounds(p, times):
    """Vectorised :func:`gronwall_bound` over nondecreasing ``times``."""
    tails = tail_integrals(p.r, times, tol=p.tol, envelope=p.r_envelope)
    return [p.A * math.exp(p.M * s) for s in tails]


@dataclass(frozen=True)
class GronwallReport:
    """Outcome of checking Gronwall's hypothesis and conclusion on a grid.

    ``hypothesis_holds`` uses the backward form ``m(t) <= A + M int_t^inf m r``.
    ``printed_hypothesis_holds`` uses ``int_0^inf m r`` for every ``t``, a weaker
    premise that does not imply the bound (take ``A = 0``, ``m = 1`` and
    ``M int_0^inf r >= 1``).
    """

    hypothesis_holds: bool
    conclusion_holds: bool
    printed_hypothesis_holds: bool
    worst_conclusion_ratio: float


def gronwall_verify(p, grid, rtol=1e-6, atol=1e-12):
    if p.m is None:
        raise ValueError("gronwall_verify needs the function m")
    times = sorted(float(t) for t in grid)
    if times and times[0] < 0:
        raise ValueError("grid times must be nonnegative")
    m_vals = [float(p.m(t)) for t in times]
    mr_tail = tail_integrals(lambda s: p.m(s) * p.r(s), times, tol=p.tol)
    r_tail = tail_integrals(p.r, times, tol=p.tol, envelope=p.r_envelope)
    if times[0] == 0.0:
        mr_total = mr_tail[0]
    else:
        mr_total = integrate_to_infinity(lambda s: p.m(s) * p.r(s), 0.0, tol=p.tol).value

    # quadrature-sized slack on the premise, carried through to the bound so the
    # implication premise => conclusion is preserved exactly
    slack = [atol + 1e-9 * (p.A + p.M * I) for I in mr_tail]
    hyp = all(mi <= p.A + p.M * I + s for mi, I, s in zip(m_vals, mr_tail, slack))
    printed = all(mi <= p.A + p.M * mr_total + s for mi, s in zip(m_vals, slack))
    A_eff = p.A + max(slack, default=atol)
    ratios = []
    conclusion = True
    for mi, R in zip(m_vals, r_tail):
        bound = A_eff * math.exp(p.M * R) * (1.0 + rtol)
        conclusion &= mi <= bound
        ratios.append(mi / bound if bound > 0 else (math.inf if mi > 0 else 0.0))
    return GronwallReport(hyp, conclusion, printed, max(ratios) if ratios else 0.0)


def tail_mass(weights, T, tol=1e-12):
    """``int_T^inf v + int_T^inf u**2``."""
    v = integrate_to_infinity(weights.v, T, tol=tol, envelope=weights.v_envelope).value
    u2 = integrate_to_infinity(weights.u2, T, tol=tol, envelope=weights.u2_envelope).value
    return v + u2


def choose_truncation(weights, tail_budget, max_power=40):
    """Smallest ``T = 2**j`` whose Lipschitz tail mass fits in ``tail_budget``."""
    if not tail_budget > 0:
        raise ValueError("tail_budget must be positive")
    tol = min(1e-12, tail_budget * 1e-3)
    for j in range(max_power + 1):
        T = 2.0**j
        try:
            mass = tail_mass(weights, T, tol=tol)
        except NonConvergent:
            continue
        if mass <= tail_budget:
            return T
    raise NonConvergent(f"no horizon up to 2**{max_power} keeps the tail mass below {tail_budget:g}")
