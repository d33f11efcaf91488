"""Starting points for the Hadamard decomposition solvers.

Four deterministic strategies:

* ``svd``  -- factor the entry-wise square-root/sign splitting of X by two
  rank-r truncated SVDs.
* ``fs``   -- rank-r^2 truncated SVD of X, both factors projected onto the
  face-split sets.
* ``fsl``  -- like ``fs`` but the left factor is recomputed as the
  least-squares optimum against the projected right factor before its own
  projection.
* ``fsr``  -- ``fsl`` applied to X^T with the factor roles exchanged.

The fs/fsl/fsr family needs r^2 <= min(m, n).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import HadamardFactors, tsvd
from .manifold import project_bmr

__all__ = [
    "init_svd_based",
    "init_fs",
    "init_fsl",
    "init_fsr",
    "optimal_gamma",
    "available_inits",
    "get_init",
    "INIT_NAMES",
]

INIT_NAMES = ("svd", "fs", "fsl", "fsr")

PINV_RANK_TOL = 1e-10


def _sqrt_abs_split(X):
    """X1 = sqrt(|X|) and X2 = sign(X) o X1, preserving sparsity."""
    if sp.issparse(X):
        Xc = X.tocsr()
        X1 = Xc.copy()
        X1.data = np.sqrt(np.abs(Xc.data))
        X2 = X1.copy()
        X2.data = np.sign(Xc.data) * X1.data
        return X1, X2
    X1 = np.sqrt(np.abs(X))
    return X1, np.sign(X) * X1


def init_svd_based(X, r: int) -> HadamardFactors:
    """Square-root/sign splitting followed by two rank-r truncated SVDs."""
    m, n = X.shape
    if not (1 <= r <= min(m, n)):
        raise ValueError(f"rank {r} out of range [1, {min(m, n)}]")
    X1, X2 = _sqrt_abs_split(X)
    t1 = tsvd(X1, r)
    t2 = tsvd(X2, r)
    s1 = np.sqrt(t1.S)
    s2 = np.sqrt(t2.S)
    return HadamardFactors(t1.U * s1, t1.V * s1, t2.U * s2, t2.V * s2)


def _fs_family_check(X, r):
    m, n = X.shape
    if r * r > min(m, n):
        raise ValueError(
            f"face-splitting initializations need r^2 <= min(m, n); "
            f"r={r} gives {r * r} > {min(m, n)}"
        )


def _balanced_tsvd_factors(X, r):
    t = tsvd(X, r * r)
    s = np.sqrt(t.S)
    return t.U * s, t.V * s  # U_tilde, V_tilde


def init_fs(X, r: int) -> HadamardFactors:
    """Project both factors of a rank-r^2 truncated SVD onto the face-split sets."""
    _fs_family_check(X, r)
    Ut, Vt = _balanced_tsvd_factors(X, r)
    W = project_bmr(Ut)
    H = project_bmr(Vt)
    return HadamardFactors(W.W1, H.W1, W.W2, H.W2)


def _lstsq_against(X, H: np.ndarray) -> np.ndarray:
    """Minimizer U of ||X - U H^T||_F via a rank-tolerant least-squares solve
    (X may be sparse; no explicit pseudo-inverse of X-sized objects)."""
    Uh, s, Vht = np.linalg.svd(H, full_matrices=False)
    cutoff = PINV_RANK_TOL * (s[0] if s.size else 0.0)
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return ((X @ Uh) * inv) @ Vht


def init_fsl(X, r: int) -> HadamardFactors:
    """Project the right TSVD factor, recompute the optimal left factor
    against it, then project that as well."""
    _fs_family_check(X, r)
    _, Vt = _balanced_tsvd_factors(X, r)
    H = project_bmr(Vt)
    U_star = _lstsq_against(X, H.assemble())
    W = project_bmr(U_star)
    return HadamardFactors(W.W1, H.W1, W.W2, H.W2)


def init_fsr(X, r: int) -> HadamardFactors:
    """The fsl strategy applied to X^T with the factor roles exchanged."""
    f = init_fsl(X.T, r)
    return HadamardFactors(f.H1, f.W1, f.H2, f.W2)


def optimal_gamma(X, W: np.ndarray, H: np.ndarray) -> float:
    """Scalar minimizing ||X - gamma W H^T||_F.

    Returns <X H, W> / <W^T W, H^T H>; a vanishing denominator yields 1.
    Splitting gamma as sqrt(|gamma|) on W and sign(gamma) sqrt(|gamma|) on H
    never increases the error.
    """
    denom = float(np.sum((W.T @ W) * (H.T @ H)))
    if denom <= 1e-300:
        return 1.0
    return float(np.sum(np.asarray(X @ H) * W)) / denom


def available_inits(m: int, n: int, r: int) -> list[str]:
    """Initialization names usable for an m x n problem at rank r."""
    names = ["svd"]
    if r * r <= min(m, n):
        names += ["fs", "fsl", "fsr"]
    return names


def get_init(name: str, X, r: int) -> HadamardFactors:
    """Dispatch by selector name (one of svd | fs | fsl | fsr)."""
    table = {
        "svd": init_svd_based,
        "fs": init_fs,
        "fsl": init_fsl,
        "fsr": init_fsr,
    }
    if name not in table:
        raise ValueError(f"unknown initialization '{name}' (choose from {INIT_NAMES})")
    return table[name](X, r)
