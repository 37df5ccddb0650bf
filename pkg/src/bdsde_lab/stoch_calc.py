"""Brownian increments for the forward/backward pair and the two Itô integrals.

The forward integral against W evaluates its integrand at the left end of each
step.  The backward integral against B evaluates at the right end: under the
filtration ``F_t = F^W_{0,t} v F^B_{t,inf}``, the value at ``t_{i+1}`` is
independent of ``B_{t_{i+1}} - B_{t_i}``.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Dimensions, TimeGrid
from .exceptions import ShapeMismatch
from .validation import as_process

__all__ = [
    "BrownianBundle",
    "generate_bundle",
    "forward_integral",
    "backward_integral",
    "running_forward_integral",
    "running_backward_integral",
    "ItoQuadruple",
    "ItoReport",
    "ito_check",
    "worker_count",
]

# Philox counter word 2 separates the W and B streams of one path
_W_STREAM, _B_STREAM = 0, 1


def worker_count():
    """Thread cap from ``BDSDE_LAB_THREADS`` (default: all CPUs)."""
    raw = os.environ.get("BDSDE_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _path_normals(seed, path, stream, size):
    bitgen = np.random.Philox(key=seed, counter=[0, 0, stream, path])
    return np.random.Generator(bitgen).standard_normal(size)


@dataclass(frozen=True, eq=False)
class BrownianBundle:
    """Per-path increments of W (``dW``, shape ``(n, N, d)``) and B (``dB``, ``(n, N, l)``)."""

    grid: TimeGrid
    dW: np.ndarray
    dB: np.ndarray
    seed: int = 0
    path_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        n, N = self.dW.shape[:2]
        if self.dB.shape[:2] != (n, N) or N != self.grid.N:
            raise ShapeMismatch(
                f"increments {self.dW.shape} / {self.dB.shape} do not match a grid with {self.grid.N} steps"
            )

    @property
    def n_paths(self):
        return self.dW.shape[0]

    @property
    def d(self):
        return self.dW.shape[2]

    @property
    def l(self):
        return self.dB.shape[2]

    @property
    def W(self):
        """W at every grid point, shape ``(n, N + 1, d)`` with ``W_0 = 0``."""
        return _prepend_zero(np.cumsum(self.dW, axis=1))

    @property
    def B(self):
        return _prepend_zero(np.cumsum(self.dB, axis=1))

    # terminal values and integrals all accumulate with the same sequential
    # cumsum, so identities such as int 1 dB = B_T hold bit for bit
    @property
    def W_T(self):
        return np.cumsum(self.dW, axis=1)[:, -1]

    @property
    def B_T(self):
        return np.cumsum(self.dB, axis=1)[:, -1]

    def B_future(self):
        """``B_T - B_{t_i}`` at every grid point, shape ``(n, N + 1, l)``."""
        rev = np.cumsum(self.dB[:, ::-1], axis=1)[:, ::-1]
        return np.concatenate([rev, np.zeros_like(self.dB[:, :1])], axis=1)

    def subset(self, index):
        index = np.asarray(index)
        paths = self.path_indices if self.path_indices is not None else np.arange(self.n_paths)
        return BrownianBundle(self.grid, self.dW[index], self.dB[index], self.seed, paths[index])

    def coarsen(self):
        """Same paths on every other grid point (increments summed pairwise)."""
        coarse = self.grid.coarsen()
        n, N = self.dW.shape[:2]
        dW = self.dW.reshape(n, N // 2, 2, -1).sum(axis=2)
        dB = self.dB.reshape(n, N // 2, 2, -1).sum(axis=2)
        return BrownianBundle(coarse, dW, dB, self.seed, self.path_indices)


def _prepend_zero(cum):
    return np.concatenate([np.zeros_like(cum[:, :1]), cum], axis=1)


def generate_bundle(grid, dims, n_paths, seed=0, path_indices=None):
    """Draw independent increments for ``n_paths`` paths.

    Path ``p`` always receives the same numbers for a given ``(seed, p)``,
    whatever ``n_paths`` is or which thread draws it, so any subset can be
    regenerated through ``path_indices``.
    """
    if path_indices is None:
        if n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        path_indices = np.arange(n_paths)
    path_indices = np.asarray(path_indices, dtype=np.int64)
    N = grid.N
    scale = np.sqrt(grid.steps)[:, None]
    dW = np.empty((path_indices.size, N, dims.d))
    dB = np.empty((path_indices.size, N, dims.l))

    def fill(rows):
        for row in rows:
            p = int(path_indices[row])
            dW[row] = _path_normals(seed, p, _W_STREAM, (N, dims.d)) * scale
            dB[row] = _path_normals(seed, p, _B_STREAM, (N, dims.l)) * scale

    workers = min(worker_count(), max(1, path_indices.size // 1024))
    chunks = np.array_split(np.arange(path_indices.size), workers)
    if workers == 1:
        fill(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, chunks))
    return BrownianBundle(grid, dW, dB, int(seed), path_indices)


def _integrand(values, bundle, noise_dim, name):
    values = as_process(values, bundle.n_paths, bundle.grid.N + 1, name)
    if values.ndim != 4 or values.shape[3] != noise_dim:
        raise ShapeMismatch(f"{name} must have trailing shape (k, {noise_dim}), got {values.shape[2:]}")
    return values


def forward_integral(integrand, bundle):
    """``sum_i H(t_i) dW_i`` per path; ``integrand`` has shape ``(n, N+1, k, d)`` or broadcasts to it."""
    H = _integrand(integrand, bundle, bundle.d, "forward integrand")
    return np.cumsum(np.einsum("nikd,nid->nik", H[:, :-1], bundle.dW), axis=1)[:, -1]


def backward_integral(integrand, bundle):
    """``sum_i H(t_{i+1}) dB_i`` per path; ``integrand`` has shape ``(n, N+1, k, l)``."""
    H = _integrand(integrand, bundle, bundle.l, "backward integrand")
    return np.cumsum(np.einsum("nikl,nil->nik", H[:, 1:], bundle.dB), axis=1)[:, -1]


def running_forward_integral(integrand, bundle):
    """``int_0^{t_i} H dW`` at every grid point, shape ``(n, N+1, k)``."""
    H = _integrand(integrand, bundle, bundle.d, "forward integrand")
    return _prepend_zero(np.cumsum(np.einsum("nikd,nid->nik", H[:, :-1], bundle.dW), axis=1))


def running_backward_integral(integrand, bundle):
    H = _integrand(integrand, bundle, bundle.l, "backward integrand")
    return _prepend_zero(np.cumsum(np.einsum("nikl,nil->nik", H[:, 1:], bundle.dB), axis=1))


@dataclass(frozen=True)
class ItoQuadruple:
    """``alpha_t = alpha0 + int beta ds + int gamma dB(backward) + int delta dW``.

    ``alpha0`` is ``(k,)`` or per path ``(n, k)``; ``beta`` broadcasts to
    ``(n, N+1, k)``, ``gamma`` to ``(n, N+1, k, l)``, ``delta`` to ``(n, N+1, k, d)``.

    For the expectation identity to hold, ``alpha_t`` must be measurable with
    respect to ``F^W_{0,t} v F^B_{t,inf}``; a deterministic ``alpha0`` with a
    nonzero ``gamma`` is not.  Use :meth:`dual_adapted` to build the adapted
    starting value ``c - int_0^T gamma dB``.
    """

    alpha0: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray

    @classmethod
    def dual_adapted(cls, base, beta, gamma, delta, bundle):
        base = np.asarray(base, dtype=float)
        shift = backward_integral(gamma, bundle)
        return cls(base - shift, beta, gamma, delta)


@dataclass(frozen=True)
class ItoReport:
    pathwise_residual_rms: float
    expectation_residual: float
    expectation_stderr: float


def ito_check(q, bundle):
    """Compare ``|alpha|^2`` with the extended Itô expansion on every path and grid time."""
    n, N1 = bundle.n_paths, bundle.grid.N + 1
    dt = bundle.grid.steps
    alpha0 = np.asarray(q.alpha0, dtype=float)
    k = alpha0.shape[-1]
    if alpha0.ndim == 1:
        alpha0 = np.broadcast_to(alpha0, (n, k))
    elif alpha0.shape != (n, k):
        raise ShapeMismatch(f"alpha0 must be ({k},) or ({n}, {k}), got {alpha0.shape}")
    beta = as_process(q.beta, n, N1, "beta")
    gamma = _integrand(q.gamma, bundle, bundle.l, "gamma")
    delta = _integrand(q.delta, bundle, bundle.d, "delta")
    if beta.shape[2:] != (k,) or gamma.shape[2] != k or delta.shape[2] != k:
        raise ShapeMismatch("beta, gamma and delta must share the state dimension of alpha0")

    drift = _prepend_zero(np.cumsum(beta[:, :-1] * dt[None, :, None], axis=1))
    b_inc = np.einsum("nikl,nil->nik", gamma[:, 1:], bundle.dB)
    w_inc = np.einsum("nikd,nid->nik", delta[:, :-1], bundle.dW)
    alpha = alpha0[:, None, :] + drift + _prepend_zero(np.cumsum(b_inc + w_inc, axis=1))

    left, right = alpha[:, :-1], alpha[:, 1:]
    gamma_sq = np.einsum("nikl,nikl->ni", gamma[:, 1:], gamma[:, 1:])
    delta_sq = np.einsum("nikd,nikd->ni", delta[:, :-1], delta[:, :-1])
    drift_term = 2.0 * np.einsum("nik,nik->ni", left, beta[:, :-1]) * dt
    backward_term = 2.0 * np.einsum("nik,nik->ni", right, b_inc)
    forward_term = 2.0 * np.einsum("nik,nik->ni", left, w_inc)
    correction = (delta_sq - gamma_sq) * dt

    start = np.einsum("nk,nk->n", alpha0, alpha0)
    expansion = start[:, None] + _prepend_zero(
        np.cumsum(drift_term + backward_term + forward_term + correction, axis=1)
    )
    actual = np.einsum("nik,nik->ni", alpha, alpha)
    pathwise_rms = float(np.sqrt(np.mean((actual - expansion) ** 2)))

    # the two stochastic integrals have mean zero, so only ds terms remain
    mean_identity = start + np.sum(drift_term + correction, axis=1)
    diff = actual[:, -1] - mean_identity
    residual = float(abs(diff.mean()))
    stderr = float(diff.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return ItoReport(pathwise_rms, residual, stderr)
