"""Core matrix algebra: Hadamard and face-splitting products, truncated SVD,
and the factored Frobenius error used by all solvers.

Matrices are plain ``numpy.ndarray`` (dense) or ``scipy.sparse`` CSR.
All functions are pure and thread-safe.

Conventions fixed package-wide:

* ``face_split(A, B)`` has column ``i*r2 + j`` equal to ``A[:, i] * B[:, j]``,
  so row ``k`` equals the Kronecker product of the rows ``A[k, :] (x) B[k, :]``
  and, under column-major ``vec``, the vectorization of the rank-1 matrix
  ``outer(B[k, :], A[k, :])``.
* SVD factors are deterministic: the largest-magnitude entry of each left
  singular vector is made nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

__all__ = [
    "SvdTriple",
    "HadamardFactors",
    "face_split",
    "hadamard",
    "tsvd",
    "factored_error",
    "is_sparse",
    "as_dense",
    "frobenius_norm",
    "numerical_rank",
    "rows_to_mats",
    "mats_to_rows",
]

# Largest min(m, n) for which tsvd uses a dense LAPACK factorization.
DENSE_SVD_LIMIT = 2000


def is_sparse(X) -> bool:
    return sp.issparse(X)


def as_dense(X) -> np.ndarray:
    """Return a dense float64 ndarray view/copy of X."""
    if sp.issparse(X):
        return np.asarray(X.todense(), dtype=np.float64)
    return np.asarray(X, dtype=np.float64)


def frobenius_norm(X) -> float:
    if sp.issparse(X):
        return float(np.sqrt((X.data * X.data).sum()))
    return float(np.linalg.norm(X, "fro"))


def numerical_rank(X, rel_tol: float = 1e-9) -> int:
    """Number of singular values above rel_tol times the largest one."""
    s = np.linalg.svd(as_dense(X), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


@dataclass(frozen=True)
class SvdTriple:
    """Thin SVD factors U diag(S) V^T with orthonormal U, V columns and
    nonincreasing nonnegative S."""

    U: np.ndarray  # m x k
    S: np.ndarray  # k
    V: np.ndarray  # n x k

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


@dataclass
class HadamardFactors:
    """Factor quadruple of a Hadamard decomposition X ~ (W1 H1^T) o (W2 H2^T)."""

    W1: np.ndarray  # m x r1
    H1: np.ndarray  # n x r1
    W2: np.ndarray  # m x r2
    H2: np.ndarray  # n x r2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.W1.shape[0], self.H1.shape[0])

    @property
    def ranks(self) -> tuple[int, int]:
        return (self.W1.shape[1], self.W2.shape[1])

    def assemble_w(self) -> np.ndarray:
        """W1 * W2 face-splitting product, an m x (r1 r2) matrix."""
        return face_split(self.W1, self.W2)

    def assemble_h(self) -> np.ndarray:
        return face_split(self.H1, self.H2)

    def reconstruct(self) -> np.ndarray:
        """Dense (W1 H1^T) o (W2 H2^T)."""
        return (self.W1 @ self.H1.T) * (self.W2 @ self.H2.T)

    def relative_error(self, X) -> float:
        """||X - reconstruction||_F / ||X||_F without forming the m x n product."""
        nrm = frobenius_norm(X)
        if nrm == 0.0:
            return 0.0
        return factored_error(X, self.assemble_w(), self.assemble_h()) / nrm

    def copy(self) -> "HadamardFactors":
        return HadamardFactors(
            self.W1.copy(), self.H1.copy(), self.W2.copy(), self.H2.copy()
        )

    def scaled(self, c: float) -> "HadamardFactors":
        """Multiply every factor by c (the reconstruction scales by c**4)."""
        return HadamardFactors(c * self.W1, c * self.H1, c * self.W2, c * self.H2)


def face_split(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product of A (m x r1) and B (m x r2).

    Column ``i*r2 + j`` of the result is ``A[:, i] * B[:, j]``; row ``k`` is
    ``kron(A[k, :], B[k, :])``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("face_split expects 2-D arrays")
    if A.shape[0] != B.shape[0]:
        raise ValueError(
            f"face_split: row counts differ ({A.shape[0]} vs {B.shape[0]})"
        )
    m = A.shape[0]
    return (A[:, :, None] * B[:, None, :]).reshape(m, A.shape[1] * B.shape[1])


def hadamard(A, B):
    """Entry-wise product. sparse o dense (either order) stays sparse with the
    sparse operand's pattern; dense o dense is dense."""
    if A.shape != B.shape:
        raise ValueError(f"hadamard: shape mismatch {A.shape} vs {B.shape}")
    if sp.issparse(A):
        return A.multiply(B).tocsr()
    if sp.issparse(B):
        return B.multiply(A).tocsr()
    return np.multiply(A, B)


def _fix_svd_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Make the largest-magnitude entry of each left singular vector nonnegative.
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def tsvd(X, k: int) -> SvdTriple:
    """Rank-k truncated SVD, the best rank-k approximation in Frobenius norm.

    Dense inputs with min(m, n) <= DENSE_SVD_LIMIT use a dense LAPACK
    factorization; sparse or larger inputs use an iterative Lanczos-type
    method with reorthogonalization (ARPACK) and a deterministic start vector.
    """
    m, n = X.shape
    if not (1 <= k <= min(m, n)):
        raise ValueError(f"tsvd: rank k={k} out of range [1, {min(m, n)}]")
    use_dense = not sp.issparse(X) and min(m, n) <= DENSE_SVD_LIMIT
    if not use_dense and k >= min(m, n):
        # Iterative solvers need k < min(m, n); fall back to dense.
        use_dense = True
    if use_dense:
        U, s, Vt = np.linalg.svd(as_dense(X), full_matrices=False)
        U, Vtt = _fix_svd_signs(U[:, :k], Vt[:k].T)
        return SvdTriple(U, s[:k].copy(), Vtt)
    v0 = np.ones(min(m, n)) / np.sqrt(min(m, n))
    U, s, Vt = svds(X, k=k, v0=v0, maxiter=max(2000, 20 * k))
    order = np.argsort(s)[::-1]
    U, s, V = U[:, order], s[order], Vt[order].T
    U, V = _fix_svd_signs(U, V)
    return SvdTriple(U, np.maximum(s, 0.0), V)


def factored_error(X, W: np.ndarray, H: np.ndarray) -> float:
    """||X - W H^T||_F computed without materializing W H^T.

    Uses ||X||_F^2 - 2 <X H, W> + <H^T H, W^T W>; tiny negative round-off
    inside the square root is clamped to zero.
    """
    if X.shape != (W.shape[0], H.shape[0]) or W.shape[1] != H.shape[1]:
        raise ValueError(
            f"factored_error: incompatible shapes X{X.shape}, W{W.shape}, H{H.shape}"
        )
    xx = frobenius_norm(X) ** 2
    xh = X @ H  # sparse @ dense -> dense
    cross = float(np.sum(np.asarray(xh) * W))
    gram = float(np.sum((H.T @ H) * (W.T @ W)))
    return float(np.sqrt(max(xx - 2.0 * cross + gram, 0.0)))


def rows_to_mats(A: np.ndarray, r: int) -> np.ndarray:
    """View the rows of an m x r^2 matrix as m (r x r) matrices under
    column-major vec: M_i[p, q] = A[i, q*r + p]."""
    A = np.asarray(A)
    m, c = A.shape
    if c != r * r:
        raise ValueError(f"rows_to_mats: {c} columns is not r^2 for r={r}")
    return A.reshape(m, r, r).transpose(0, 2, 1)


def mats_to_rows(M: np.ndarray) -> np.ndarray:
    """Inverse of rows_to_mats: stack column-major vectorizations as rows."""
    m, r, r2 = M.shape
    if r != r2:
        raise ValueError("mats_to_rows expects square per-row matrices")
    return M.transpose(0, 2, 1).reshape(m, r * r)
