"""Adaptive quadrature on half-lines.

Integrals over ``[a, inf)`` are split into decade segments, each integrated
with QUADPACK's adaptive Gauss-Kronrod rule.  Without a tail envelope the
remainder beyond the last segment is extrapolated from the ratio of the last
two segment contributions, which is exact for power-law tails.
"""

import math
import warnings
from dataclasses import dataclass

from scipy import integrate

from .exceptions import NonConvergent

__all__ = ["ImproperIntegral", "integrate_segment", "integrate_to_infinity", "tail_integrals"]

# beyond this ratio of successive decade contributions the tail is treated as divergent
_MAX_DECADE_RATIO = 0.95


@dataclass(frozen=True)
class ImproperIntegral:
    value: float
    abserr: float
    tail: float
    decade_ratio: float


def integrate_segment(func, a, b, tol=1e-10, points=None):
    """Integrate ``func`` on ``[a, b]``; raise NonConvergent if QUADPACK cannot meet ``tol``."""
    if b <= a:
        return 0.0, 0.0
    if points is not None:
        points = [p for p in points if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr, *_ = integrate.quad(
            func, a, b, epsabs=tol * 0.1, epsrel=1e-12, limit=200, points=points, full_output=1
        )
    if not math.isfinite(value) or abserr > tol * max(1.0, abs(value)):
        raise NonConvergent(f"quadrature on [{a:g}, {b:g}] did not converge (error estimate {abserr:.3g})")
    return float(value), float(abserr)


def integrate_to_infinity(func, a=0.0, tol=1e-10, envelope=None, decades=4, points=None):
    """Estimate ``int_a^inf func(t) dt`` for a nonnegative integrable ``func``.

    ``envelope`` is an optional callable dominating ``func`` on the far tail;
    when given, its integral beyond the last segment is used as the tail
    (an upper bound) instead of the extrapolated remainder.

    Raises NonConvergent when the decade contributions stop shrinking, which is
    how a divergent integral such as ``int_0^inf 1 dt`` shows up.
    """
    # geometric edges x0 * 10^j make the decade ratio exact for power-law tails
    x0 = max(1.0, a)
    edges = ([a] if a < x0 else []) + [x0 * 10.0**j for j in range(decades + 1)]
    pieces = []
    abserr = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        value, err = integrate_segment(func, lo, hi, tol=tol, points=points)
        pieces.append(value)
        abserr += err

    last, previous = pieces[-1], pieces[-2]
    if last == 0.0 and previous == 0.0:
        ratio = 0.0
    elif previous == 0.0 or last / previous < 0:
        # zero-crossing or sign change in the far field: no power-law model applies
        ratio = math.inf
    else:
        ratio = last / previous

    if envelope is not None:
        tail, err = _envelope_tail(envelope, edges[-1], tol)
        abserr += err
    else:
        if ratio >= _MAX_DECADE_RATIO:
            raise NonConvergent(
                f"integral from {a:g} appears divergent: decade contributions {previous:.4g} -> {last:.4g}"
            )
        tail = last * ratio / (1.0 - ratio)
    total = math.fsum(pieces) + tail
    return ImproperIntegral(value=total, abserr=abserr, tail=tail, decade_ratio=ratio)


def _envelope_tail(envelope, start, tol):
    # t = start / u maps [start, inf) onto (0, 1]; a 1/t^2 envelope becomes constant
    def mapped(u):
        return envelope(start / u) * start / (u * u)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(mapped, 0.0, 1.0, epsabs=tol * 0.1, epsrel=1e-12, limit=200)
    if not math.isfinite(value) or err > tol * max(1.0, abs(value)):
        raise NonConvergent(f"tail envelope is not integrable beyond {start:g}")
    return float(value), float(err)


def tail_integrals(func, times, tol=1e-10, envelope=None):
    """Return ``int_t^inf func`` for every ``t`` in the nondecreasing sequence ``times``.

    Only one improper integral is evaluated (from the last time); the rest are
    accumulated from finite segments between consecutive times.
    """
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times[:-1], times[1:])):
        raise ValueError("times must be nondecreasing")
    out = [0.0] * len(times)
    if not times:
        return out
    running = integrate_to_infinity(func, times[-1], tol=tol, envelope=envelope).value
    out[-1] = running
    for i in range(len(times) - 2, -1, -1):
        running += integrate_segment(func, times[i], times[i + 1], tol=tol)[0]
        out[i] = running
    return out
