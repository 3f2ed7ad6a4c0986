"""Real coordinates for Hermitian matrices.

A Hermitian n x n matrix has n^2 real degrees of freedom. We use the
orthonormal layout  [diag; sqrt(2) Re(upper); sqrt(2) Im(upper)]  so that
``tr(A @ X) == svec(A) @ svec(X)`` for Hermitian A, X, and Euclidean geometry
in coordinates matches the trace inner product.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def _upper(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu = np.triu_indices(n, 1)
    return iu[0], iu[1]


def dim(n: int) -> int:
    return n * n


def svec(X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    i, j = _upper(n)
    up = X[i, j]
    return np.concatenate([np.real(np.diag(X)), _SQRT2 * up.real, _SQRT2 * up.imag])


def smat(x: np.ndarray, n: int) -> np.ndarray:
    i, j = _upper(n)
    m = n * (n - 1) // 2
    X = np.zeros((n, n), dtype=complex)
    X[np.arange(n), np.arange(n)] = x[:n]
    up = (x[n:n + m] + 1j * x[n + m:]) / _SQRT2
    X[i, j] = up
    X[j, i] = np.conj(up)
    return X


def svec_batch(Xs: np.ndarray) -> np.ndarray:
    """(m, n, n) Hermitian stack -> (n^2, m)."""
    n = Xs.shape[-1]
    i, j = _upper(n)
    up = Xs[:, i, j]
    d = np.real(Xs[:, np.arange(n), np.arange(n)])
    return np.concatenate([d, _SQRT2 * up.real, _SQRT2 * up.imag], axis=1).T


def smat_batch(x: np.ndarray, n: int) -> np.ndarray:
    """(n^2, m) coordinates -> (m, n, n) Hermitian stack."""
    i, j = _upper(n)
    m = n * (n - 1) // 2
    cols = x.shape[1]
    X = np.zeros((cols, n, n), dtype=complex)
    X[:, np.arange(n), np.arange(n)] = x[:n].T
    up = (x[n:n + m] + 1j * x[n + m:]).T / _SQRT2
    X[:, i, j] = up
    X[:, j, i] = np.conj(up)
    return X


def hermitize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


def is_psd(X: np.ndarray, tol: float = 0.0) -> bool:
    try:
        np.linalg.cholesky(hermitize(X) + tol * np.eye(X.shape[0]))
        return True
    except np.linalg.LinAlgError:
        return False


def eigen_ratio(X: np.ndarray) -> float:
    """Largest eigenvalue over trace; 1 iff PSD rank-one."""
    w = np.linalg.eigvalsh(hermitize(X))
    tr = float(w.sum())
    if tr <= 0:
        return 0.0
    return float(w[-1] / tr)


def principal_eigvec(X: np.ndarray) -> tuple[float, np.ndarray]:
    w, V = np.linalg.eigh(hermitize(X))
    return float(w[-1]), V[:, -1]
