"""Geometry of the set of m x r^2 matrices whose rows vectorize to rank-<=1
r x r matrices (the face-split structure): orthogonal projection onto the set
and projection onto its tangent space at a point with nonzero rows.

Row i of a face-split matrix W1 * W2 equals, under column-major vec, the
vectorization of outer(v_i, u_i) with u_i = W1[i, :] and v_i = W2[i, :].
Writing u_i = mu_i x_i and v_i = nu_i y_i with unit x_i, y_i, the reshaped
row is rho_i y_i x_i^T with rho_i = mu_i nu_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import face_split, mats_to_rows, rows_to_mats

__all__ = ["FaceSplitPoint", "project_bmr", "tangent_project"]


@dataclass
class FaceSplitPoint:
    """A point of the (closed) face-split set stored as the factor pair
    (W1, W2) plus cached per-row norms and directions.

    For rows with rho_i = mu_i nu_i > 0 the cached x_i, y_i are unit vectors;
    rows with rho_i = 0 have x_i = y_i = 0 and are flagged in ``nonzero``.
    """

    W1: np.ndarray  # m x r
    W2: np.ndarray  # m x r
    mu: np.ndarray = field(init=False)  # row norms of W1
    nu: np.ndarray = field(init=False)  # row norms of W2
    x: np.ndarray = field(init=False)  # unit rows of W1 (0 where undefined)
    y: np.ndarray = field(init=False)  # unit rows of W2 (0 where undefined)
    nonzero: np.ndarray = field(init=False)  # rows with rho > 0

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        if self.W1.shape != self.W2.shape:
            raise ValueError("FaceSplitPoint: W1 and W2 must share their shape")
        self._refresh()

    def _refresh(self):
        self.mu = np.linalg.norm(self.W1, axis=1)
        self.nu = np.linalg.norm(self.W2, axis=1)
        self.nonzero = (self.mu > 0) & (self.nu > 0)
        self.x = self.W1 / np.where(self.mu > 0, self.mu, 1.0)[:, None]
        self.y = self.W2 / np.where(self.nu > 0, self.nu, 1.0)[:, None]
        self.x[self.mu == 0] = 0.0
        self.y[self.nu == 0] = 0.0

    @property
    def rho(self) -> np.ndarray:
        return self.mu * self.nu

    @property
    def shape(self) -> tuple[int, int]:
        return self.W1.shape

    def assemble(self) -> np.ndarray:
        """The m x r^2 matrix W1 * W2."""
        return face_split(self.W1, self.W2)


def _dominant_triples(mats: np.ndarray):
    """Dominant singular triple (sigma_i, u_i, v_i) of every matrix in an
    (m, r, r) batch.

    Batched power iteration on the r x r Grams with a residual certificate;
    rows that do not certify (tiny spectral gaps, adversarial starts) fall
    back to exact LAPACK SVDs. Deterministic: fixed start vector and fixed
    iteration schedule.
    """
    m, r, _ = mats.shape
    gram = mats.transpose(0, 2, 1) @ mats  # M^T M, PSD
    trace = np.einsum("ijj->i", gram)
    active = trace > 0.0
    tol = 1e-14 * np.where(active, trace, 1.0)

    def power_step(vec):
        w = np.einsum("ipq,iq->ip", gram, vec)
        nw = np.sqrt(np.einsum("ip,ip->i", w, w))
        ok = nw > 0.0
        return np.where(ok[:, None], w / np.where(ok, nw, 1.0)[:, None], vec)

    def certify(vec):
        w = np.einsum("ipq,iq->ip", gram, vec)
        lam = np.einsum("ip,ip->i", vec, w)
        diff = w - lam[:, None] * vec
        return lam, np.sqrt(np.einsum("ip,ip->i", diff, diff))

    v0 = 1.0 + 0.01 * np.arange(r)
    v = np.tile(v0 / np.linalg.norm(v0), (m, 1))
    n_active = max(int(np.count_nonzero(active)), 1)
    for sweep in range(16):  # sweeps of 4 power steps, 64 max
        for _ in range(4):
            v = power_step(v)
        lam, residual = certify(v)
        unconverged = int(np.count_nonzero(residual[active] > tol[active]))
        if unconverged == 0:
            break
        # many stubborn rows: exact LAPACK on the remainder beats iterating
        if sweep >= 3 and unconverged > 0.2 * n_active:
            break
    lam, residual = certify(v)

    # certify: small residual and lambda at least every Gram diagonal entry
    max_diag = np.max(np.einsum("ijj->ij", gram), axis=1)
    fallback = active & (
        (residual > tol) | (lam < max_diag - 1e-12 * trace)
    )

    Mv = np.einsum("ipq,iq->ip", mats, v)
    sigma = np.linalg.norm(Mv, axis=1)
    safe = np.where(sigma > 0.0, sigma, 1.0)
    u = Mv / safe[:, None]

    if np.any(fallback):
        Uf, Sf, Vtf = np.linalg.svd(mats[fallback])
        sigma[fallback] = Sf[:, 0]
        u[fallback] = Uf[:, :, 0]
        v[fallback] = Vtf[:, 0, :]
    sigma[~active] = 0.0
    u[~active] = 0.0
    v[~active] = 0.0
    return sigma, u, v


def project_bmr(A: np.ndarray) -> FaceSplitPoint:
    """Orthogonal (Frobenius) projection of an m x r^2 matrix onto the closed
    face-split set, computed row-wise by rank-1 truncated SVD.

    The assembled result has row i equal to the column-major vectorization of
    the best rank-1 approximation of the reshaped row. Rows that reshape to
    the zero matrix produce zero rows in both factors. Idempotent on matrices
    already of face-split form.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("project_bmr expects a 2-D array")
    m, c = A.shape
    r = int(round(np.sqrt(c)))
    if r * r != c:
        raise ValueError(f"project_bmr: column count {c} is not a perfect square")
    mats = rows_to_mats(A, r)  # M_i = vec^{-1}(row), shape (m, r, r)
    sigma, u, v = _dominant_triples(mats)
    sq = np.sqrt(sigma)[:, None]
    # M_i ~ sigma * y x^T with y the left and x the right singular vector;
    # the vec convention puts x in W1 and y in W2.
    W1 = sq * v
    W2 = sq * u
    # Deterministic joint sign: largest-|.| entry of each W1 row nonnegative.
    idx = np.argmax(np.abs(W1), axis=1)
    signs = np.sign(W1[np.arange(m), idx])
    signs[signs == 0] = 1.0
    return FaceSplitPoint(W1 * signs[:, None], W2 * signs[:, None])


def tangent_project(P: FaceSplitPoint, A: np.ndarray) -> np.ndarray:
    """Project the rows of A onto the tangent space of the face-split set at P.

    Row-wise, with M_i the reshaped row of A: M_i - (I - y y^T) M_i (I - x x^T).
    Linear, idempotent and self-adjoint. Requires every row of P nonzero
    (the tangent space is undefined at rows with rho_i = 0).
    """
    A = np.asarray(A, dtype=np.float64)
    m, r = P.shape
    if A.shape != (m, r * r):
        raise ValueError(f"tangent_project: A must be {m} x {r * r}, got {A.shape}")
    if not np.all(P.nonzero):
        bad = int(np.flatnonzero(~P.nonzero)[0])
        raise ValueError(
            f"tangent_project: zero row {bad} in the base point (tangent space undefined)"
        )
    mats = rows_to_mats(A, r)
    x, y = P.x, P.y
    # M - (I - yy^T) M (I - xx^T) = y (M^T y)^T + (M x) x^T - (y^T M x) y x^T
    Mx = np.einsum("ipq,iq->ip", mats, x)
    My = np.einsum("ipq,ip->iq", mats, y)
    yMx = np.einsum("ip,ip->i", y, Mx)
    proj = (
        y[:, :, None] * My[:, None, :]
        + Mx[:, :, None] * x[:, None, :]
        - yMx[:, None, None] * (y[:, :, None] * x[:, None, :])
    )
    return mats_to_rows(proj)
