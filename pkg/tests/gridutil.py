"""Brute-force grid search helpers used as independent oracles in tests."""

import numpy as np


def chol_params_to_psd(params):
    """(..., 4) arrays (l11, l22, re, im) -> stacked 2x2 PSD matrices."""
    l11, l22, re, im = np.moveaxis(np.asarray(params, dtype=float), -1, 0)
    z = re + 1j * im
    F = np.empty(l11.shape + (2, 2), dtype=complex)
    F[..., 0, 0] = l11 ** 2
    F[..., 1, 0] = z * l11
    F[..., 0, 1] = np.conj(F[..., 1, 0])
    F[..., 1, 1] = np.abs(z) ** 2 + l22 ** 2
    return F


def eig_params_to_psd(params):
    """(..., 4) arrays (s, alpha, phi, psi) -> stacked 2x2 PSD matrices.

    s >= 0 is the trace, alpha in [0, 1] splits it between the eigenvector
    v = (cos phi, sin phi e^{j psi}) and its orthogonal complement. Covers all
    2x2 PSD matrices, and eigen-ratio cuts are fat regions in this chart.
    """
    s, alpha, phi, psi = np.moveaxis(np.asarray(params, dtype=float), -1, 0)
    v1 = np.cos(phi)
    v2 = np.sin(phi) * np.exp(1j * psi)
    F = np.empty(s.shape + (2, 2), dtype=complex)
    F[..., 0, 0] = s * (alpha * np.abs(v1) ** 2 + (1 - alpha) * np.abs(v2) ** 2)
    F[..., 1, 1] = s * (alpha * np.abs(v2) ** 2 + (1 - alpha) * np.abs(v1) ** 2)
    F[..., 1, 0] = s * (alpha - (1 - alpha)) * v2 * np.conj(v1)
    F[..., 0, 1] = np.conj(F[..., 1, 0])
    return F


def refine_grid_max(evaluate, lows, highs, steps=9, rounds=4, top_k=5):
    """Grid search with shrinking windows around the best coarse candidates.

    ``evaluate`` maps an (n_points, d) array to objective values with -inf at
    infeasible points. Several coarse candidates are refined independently so
    multimodal landscapes do not trap the search in one basin. Returns
    (best_point, best_value).
    """
    lo0 = np.asarray(lows, dtype=float)
    hi0 = np.asarray(highs, dtype=float)

    def sweep(lo, hi):
        axes = [np.linspace(a, b, steps) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return pts, evaluate(pts)

    pts, vals = sweep(lo0, hi0)
    order = np.argsort(vals)[::-1]
    seeds = [pts[i].copy() for i in order[:top_k] if np.isfinite(vals[i])]
    if not seeds:
        return None, -np.inf
    best_x, best_v = seeds[0], float(vals[order[0]])
    span0 = (hi0 - lo0) / (steps - 1)
    for seed in seeds:
        x, span = seed, span0.copy()
        for _ in range(rounds - 1):
            lo = np.maximum(lo0, x - 1.5 * span)
            hi = np.minimum(hi0, x + 1.5 * span)
            p, v = sweep(lo, hi)
            i = int(np.argmax(v))
            if np.isfinite(v[i]) and v[i] > best_v:
                best_v, best_x = float(v[i]), p[i].copy()
            if np.isfinite(v[i]):
                x = p[i].copy()
            span = (hi - lo) / (steps - 1)
    return best_x, best_v
