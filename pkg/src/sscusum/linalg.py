"""Windowed sample covariance and dominant-direction extraction.

The detection statistic only needs the direction of the leading eigenvector
of a symmetric nonnegative-definite matrix, so a single-vector power
iteration is used instead of a full decomposition. Scaling of the matrix is
irrelevant to the direction, which is why the covariance is kept as a plain
unnormalized sum of outer products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import MultiSensorFrame
from .errors import DimensionMismatchError, PowerIterationError, ZeroMatrixError

__all__ = [
    "CovarianceWindow",
    "PowerIterationResult",
    "sample_covariance",
    "power_iteration",
    "top_singular_vector",
    "default_start",
    "canonicalize_sign",
    "default_max_iter",
]

_SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class CovarianceWindow:
    """Unnormalized sum of outer products over a w-sample window."""

    k: int
    w: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.k, self.k):
            raise DimensionMismatchError(f"matrix must be ({self.k}, {self.k})")
        scale = np.max(np.abs(m))
        if scale > 0 and np.max(np.abs(m - m.T)) > _SYMMETRY_RTOL * scale:
            raise ValueError("matrix is not symmetric within 1e-12 relative")
        object.__setattr__(self, "matrix", (m + m.T) / 2.0)


def sample_covariance(
    frames: Sequence[MultiSensorFrame] | np.ndarray,
) -> CovarianceWindow:
    """Accumulate ``sum_j x_j x_j^T`` over the window (no 1/w factor).

    Accepts a sequence of frames or a (w, k) array with one sample per row.
    """
    if isinstance(frames, np.ndarray):
        data = np.asarray(frames, dtype=float)
        if data.ndim != 2:
            raise DimensionMismatchError("expected a (w, k) array")
    else:
        frames = list(frames)
        if not frames:
            raise ValueError("empty window")
        k = frames[0].k
        for f in frames:
            if f.k != k:
                raise DimensionMismatchError(
                    f"frame t={f.t} has k={f.k}, window has k={k}"
                )
        data = np.stack([f.values for f in frames])
    w, k = data.shape
    if w < 1:
        raise ValueError("empty window")
    return CovarianceWindow(k=k, w=w, matrix=data.T @ data)


@dataclass(frozen=True)
class PowerIterationResult:
    """Converged dominant direction plus diagnostics.

    ``gap_degenerate`` is set when the two largest Ritz values are within the
    residual tolerance of each other (scaled by the Frobenius norm); the
    vector is still returned and detection should proceed.
    """

    vector: np.ndarray
    value: float
    iterations: int
    residual: float
    second_value: float | None = None
    gap_degenerate: bool = False


def default_start(k: int) -> np.ndarray:
    """Deterministic start: normalized all-ones, perturbed at index 0 by 1e-3."""
    v = np.ones(k)
    v[0] += 1e-3
    return v / np.linalg.norm(v)


def default_max_iter(k: int, tol: float) -> int:
    return int(math.ceil(10 * k * math.log(1.0 / tol)))


def canonicalize_sign(v: np.ndarray) -> np.ndarray:
    """Make the component of largest magnitude positive (ties: lowest index)."""
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def power_iteration(
    matrix: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    start: np.ndarray | None = None,
    estimate_gap: bool = True,
) -> PowerIterationResult:
    """Dominant eigenpair of a symmetric nonnegative-definite matrix.

    Iterates v <- A v / ||A v|| from a deterministic start (or the supplied
    ``start``, e.g. the previous window's vector) until the eigen-residual
    ``||A v - (v' A v) v||`` drops below ``tol * ||A||_F``.

    Raises:
        ZeroMatrixError: A is numerically zero.
        PowerIterationError: the residual target was not met in ``max_iter``
            steps; carries the last residual.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"matrix must be square, got {a.shape}")
    k = a.shape[0]
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        raise ZeroMatrixError("cannot extract a direction from the zero matrix")
    if max_iter is None:
        max_iter = default_max_iter(k, tol)
    v = default_start(k) if start is None else np.asarray(start, dtype=float)
    nv = math.sqrt(float(v @ v))
    if nv == 0:
        raise ValueError("start vector must be nonzero")
    v = v / nv
    threshold = tol * fro
    lam = 0.0
    residual = np.inf
    iterations = 0
    av = a @ v
    for iterations in range(1, max_iter + 1):
        norm_av = math.sqrt(float(av @ av))
        if norm_av == 0.0:
            # Start vector fell in the nullspace; rotate deterministically.
            v = np.roll(v, 1)
            av = a @ v
            continue
        v = av / norm_av
        av = a @ v
        lam = float(v @ av)
        r = av - lam * v
        residual = math.sqrt(float(r @ r))
        if residual <= threshold:
            break
    else:
        raise PowerIterationError(
            f"no convergence after {max_iter} iterations (residual {residual:.3e}, "
            f"target {threshold:.3e})",
            residual=residual,
            iterations=max_iter,
        )
    v = canonicalize_sign(v)
    second = None
    degenerate = False
    if estimate_gap:
        second = _second_ritz_value(a, v, lam, threshold)
        degenerate = (lam - second) <= threshold
    return PowerIterationResult(
        vector=v,
        value=lam,
        iterations=iterations,
        residual=residual,
        second_value=second,
        gap_degenerate=degenerate,
    )


def _second_ritz_value(
    a: np.ndarray, v: np.ndarray, lam: float, threshold: float, iters: int = 200
) -> float:
    """Rough second Ritz value via power iteration on the deflated matrix.

    Diagnostic only: runs a bounded number of steps and returns the best
    Rayleigh quotient found, clipped to [0, lam].
    """
    k = a.shape[0]
    b = a - lam * np.outer(v, v)
    w = np.roll(default_start(k), 1)
    w = w - (w @ v) * v
    nw = np.linalg.norm(w)
    if nw < 1e-12:
        return 0.0
    w = w / nw
    mu = 0.0
    for _ in range(iters):
        bw = b @ w
        nbw = np.linalg.norm(bw)
        if nbw == 0.0:
            return 0.0
        w = bw / nbw
        bw = b @ w
        mu = float(w @ bw)
        if np.linalg.norm(bw - mu * w) <= threshold:
            break
    return float(np.clip(mu, 0.0, lam))


def top_singular_vector(
    cov: CovarianceWindow | np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Unit-norm leading direction of a covariance window, sign-canonicalized.

    For a symmetric nonnegative-definite matrix this is both the top
    eigenvector and the top singular vector. Use :func:`power_iteration` for
    the full diagnostics (Ritz values, gap degeneracy).
    """
    matrix = cov.matrix if isinstance(cov, CovarianceWindow) else np.asarray(cov, float)
    return power_iteration(matrix, tol=tol, max_iter=max_iter, estimate_gap=False).vector
