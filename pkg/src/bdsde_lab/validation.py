"""Input validation helpers for path-indexed arrays."""

import numpy as np

from .exceptions import ShapeMismatch

__all__ = ["as_process", "check_finite", "check_solution_shapes"]

_RANK = {"beta": 3}


def as_process(values, n_paths, n_times, name, ndim=None):
    """Return ``values`` as an array of shape ``(n_paths, n_times, ...)``.

    Deterministic processes may be given without the path axis, as
    ``(n_times, ...)``; they are broadcast (read-only) across paths.
    """
    arr = np.asarray(values, dtype=float)
    if ndim is None:
        ndim = _RANK.get(name, 4)
    if arr.ndim == ndim and arr.shape[:2] == (n_paths, n_times):
        return arr
    if arr.ndim == ndim - 1 and arr.shape[0] == n_times:
        return np.broadcast_to(arr, (n_paths,) + arr.shape)
    raise ShapeMismatch(
        f"{name} has shape {arr.shape}; expected {ndim}-d ({n_paths}, {n_times}, ...) "
        f"or deterministic ({n_times}, ...)"
    )


def check_finite(arr, name):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_solution_shapes(Y, Z, grid):
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Y.ndim != 3 or Y.shape[1] != grid.N + 1:
        raise ShapeMismatch(f"Y must have shape (n, {grid.N + 1}, k), got {Y.shape}")
    if Z.ndim != 4 or Z.shape[:3] != Y.shape:
        raise ShapeMismatch(f"Z must have shape {Y.shape + ('d',)}, got {Z.shape}")
    return Y, Z
