"""Independent reference implementations used to check the package.

Everything here is intentionally naive: explicit loops, no shared code with
the library, validated on hand-computable cases before being trusted.
"""

from __future__ import annotations

import numpy as np


def jacobi_eigh(a: np.ndarray, sweep_tol: float = 1e-14, max_sweeps: int = 100):
    """Full symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns (values, vectors) sorted descending; vectors are columns.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.max(np.abs(a)) or 1.0
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(a[p, q]))
                if abs(a[p, q]) <= sweep_tol * scale:
                    continue
                # 2x2 rotation zeroing a[p, q]
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
        if off <= sweep_tol * scale:
            break
    values = np.diag(a).copy()
    order = np.argsort(values)[::-1]
    return values[order], v[:, order]


def correlation_scan(sensor, sensor_origin, template, template_origin, tau_max):
    """Correlation magnitude at every shift, by explicit double loop.

    corr(z) = sum_m template[m] * sensor(template_origin + m + z), with the
    sensor read by absolute tick.
    """
    out = {}
    for z in range(-tau_max, tau_max + 1):
        acc = 0.0
        for m, s_val in enumerate(template):
            tick = template_origin + m + z
            acc += s_val * sensor[tick - sensor_origin]
        out[z] = acc
    return out


def best_shift(corr: dict[int, float]) -> int:
    """Argmax of |corr(z)| with ties broken by smallest |z| then smallest z."""
    best = None
    for z in sorted(corr, key=lambda z: (abs(z), z)):
        if best is None or abs(corr[z]) > abs(corr[best]):
            best = z
    return best


def scalar_cusum(samples, mu, sigma2):
    """Trajectory of the exact scalar Gaussian CUSUM, one value per sample."""
    s = 0.0
    out = []
    for x in samples:
        s = max(s, 0.0) + (mu / sigma2) * (x - mu / 2.0)
        out.append(s)
    return np.asarray(out)


def covariance_triple_loop(samples: np.ndarray) -> np.ndarray:
    """sum_j x_j x_j^T accumulated element by element; samples is (w, k)."""
    w, k = samples.shape
    out = np.zeros((k, k))
    for j in range(w):
        for a in range(k):
            for b in range(k):
                out[a, b] += samples[j, a] * samples[j, b]
    return out
