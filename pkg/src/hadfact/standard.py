"""First-order Riemannian solver on the product of two fixed-rank manifolds
for X ~ X1 o X2, with each factor kept in thin factored form X_i = U S V^T.

The Euclidean gradient/Hessian of Phi(X1, X2) = 0.5 ||X - X1 o X2||_F^2 are
exposed for verification; the solver projects the gradient pair onto the
tangent spaces, backtracks along the projected direction (Armijo), and
retracts with a factored rank-r truncated SVD. Dense-only by design: the
residual and element-wise products require the full m x n factors.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import HadamardFactors, as_dense, frobenius_norm
from .solvers import RunRecord, SolverConfig

__all__ = [
    "FixedRankPoint",
    "grad_phi",
    "hess_phi_action",
    "tangent_project_fixed_rank",
    "rgd_standard",
    "DENSIFY_GUARD",
]

# Largest m*n this solver will densify.
DENSIFY_GUARD = int(5e7)

ARMIJO_SUFFICIENT_DECREASE = 1e-4
ARMIJO_MAX_HALVINGS = 30
GRAD_NORM_STOP = 1e-10
RANK_DEFICIENCY_TOL = 1e-12


@dataclass
class FixedRankPoint:
    """A rank-r matrix stored as U S V^T with orthonormal U (m x r) and
    V (n x r) and a full-rank r x r core S."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @classmethod
    def from_product(cls, W: np.ndarray, H: np.ndarray) -> "FixedRankPoint":
        """Point representing W H^T; rank-deficient products are nudged onto
        the manifold by clamping the core's tiny singular values."""
        Qw, Rw = np.linalg.qr(W)
        Qh, Rh = np.linalg.qr(H)
        return cls(Qw, Rw @ Rh.T, Qh)._repaired()

    def _repaired(self) -> "FixedRankPoint":
        P, s, Qt = np.linalg.svd(self.S)
        top = s[0] if s.size else 0.0
        if top == 0.0:
            top = 1e-150
            s = np.full_like(s, top)
        s = np.maximum(s, RANK_DEFICIENCY_TOL * top)
        return FixedRankPoint(self.U @ P, np.diag(s), self.V @ Qt.T)

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    def dense(self) -> np.ndarray:
        return (self.U @ self.S) @ self.V.T


def _factor_dense(obj) -> np.ndarray:
    return obj.dense() if isinstance(obj, FixedRankPoint) else as_dense(obj)


def grad_phi(X, X1, X2):
    """Euclidean gradient pair of Phi(X1, X2) = 0.5 ||X - X1 o X2||_F^2:
    with R = X - X1 o X2, returns (-R o X2, -R o X1) as dense m x n matrices.
    The factors may be FixedRankPoint or plain arrays (the formula holds on
    the whole ambient space)."""
    X = as_dense(X)
    X1d = _factor_dense(X1)
    X2d = _factor_dense(X2)
    R = X - X1d * X2d
    return -R * X2d, -R * X1d


def hess_phi_action(X, X1, X2, A: np.ndarray, B: np.ndarray):
    """Euclidean Hessian of Phi applied to a direction pair (A, B)."""
    X = as_dense(X)
    X1d = _factor_dense(X1)
    X2d = _factor_dense(X2)
    mid = 2.0 * X1d * X2d - X
    return A * (X2d * X2d) + mid * B, mid * A + B * (X1d * X1d)


def tangent_project_fixed_rank(U: np.ndarray, V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Orthogonal projection of G onto the tangent space of the rank-r
    manifold at a point with orthonormal factors U, V:
    G - (I - U U^T) G (I - V V^T)."""
    UG = U.T @ G
    GV = G @ V
    return U @ UG + GV @ V.T - (U @ (UG @ V)) @ V.T


def _tangent_parts(U, V, E):
    """Return (A, B) with the tangent projection of E equal to U A + B V^T,
    A V = 0; the squared norm of the projection is ||A||^2 + ||B||^2."""
    B = E @ V  # m x r
    A = U.T @ E - (U.T @ B) @ V.T  # r x n, orthogonal to V
    return A, B


def _retract(point: FixedRankPoint, A, B, t: float) -> FixedRankPoint:
    """Rank-r truncated SVD of U S V^T - t (U A + B V^T), computed in
    factored form (cost O((m + n) r^2))."""
    U, S, V = point.U, point.S, point.V
    r = point.rank
    F = np.hstack([U, -t * B])
    G = np.hstack([V @ S.T - t * A.T, V])
    Qf, Rf = np.linalg.qr(F)
    Qg, Rg = np.linalg.qr(G)
    P, s, Qt = np.linalg.svd(Rf @ Rg.T)
    top = s[0] if s[0] > 0 else 1e-150
    s_r = np.maximum(s[:r], RANK_DEFICIENCY_TOL * top)
    return FixedRankPoint(Qf @ P[:, :r], np.diag(s_r), Qg @ Qt.T[:, :r])


def rgd_standard(X, r: int, init: HadamardFactors,
                 config: SolverConfig | None = None) -> RunRecord:
    """Riemannian gradient descent on the product of two rank-r manifolds.

    Joint (non-alternating) updates: project the Euclidean gradient pair onto
    the tangent spaces, backtrack from step 1 with halving until the Armijo
    sufficient-decrease test passes (at most 30 halvings), retract each
    factor by rank-r truncated SVD. The error sequence is nonincreasing.

    Rejects inputs with m * n above DENSIFY_GUARD; use projbcd/manbcd for
    large sparse matrices.
    """
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    config = config or SolverConfig()
    m, n = X.shape
    if m * n > DENSIFY_GUARD:
        raise ValueError(
            f"rgd_standard requires dense storage; {m} x {n} exceeds the "
            f"{DENSIFY_GUARD:.0e}-entry guard. Use projbcd or manbcd instead."
        )
    Xd = as_dense(X)
    norm_x = frobenius_norm(Xd)
    record = RunRecord(algo="rgd", init_label="")
    if norm_x == 0.0:
        z = HadamardFactors(np.zeros((m, r)), np.zeros((n, r)),
                            np.zeros((m, r)), np.zeros((n, r)))
        record.errors, record.times, record.betas, record.accepted = [0.0], [0.0], [0.0], [True]
        record.factors, record.best_error, record.stop_reason = z, 0.0, "zero_input"
        return record

    p1 = FixedRankPoint.from_product(init.W1, init.H1)
    p2 = FixedRankPoint.from_product(init.W2, init.H2)
    X1d, X2d = p1.dense(), p2.dense()
    R = Xd - X1d * X2d
    obj = 0.5 * float(np.sum(R * R))
    err = np.sqrt(2.0 * obj) / norm_x
    record.errors, record.times = [err], [0.0]
    record.betas, record.accepted = [0.0], [True]

    start = time.perf_counter()
    it = 0
    stop_reason = None
    while True:
        if err <= config.tol:
            stop_reason = "tol"
            break
        if it >= config.max_iters:
            stop_reason = "max_iters"
            break
        if config.time_limit is not None and time.perf_counter() - start >= config.time_limit:
            stop_reason = "time_limit"
            break

        E1 = -R * X2d
        E2 = -R * X1d
        A1, B1 = _tangent_parts(p1.U, p1.V, E1)
        A2, B2 = _tangent_parts(p2.U, p2.V, E2)
        gsq = (np.sum(A1 * A1) + np.sum(B1 * B1)
               + np.sum(A2 * A2) + np.sum(B2 * B2))
        if np.sqrt(gsq) <= GRAD_NORM_STOP:
            stop_reason = "gradient"
            break

        t = 1.0
        accepted = False
        for _ in range(ARMIJO_MAX_HALVINGS + 1):
            c1 = _retract(p1, A1, B1, t)
            c2 = _retract(p2, A2, B2, t)
            Y1d, Y2d = c1.dense(), c2.dense()
            Rc = Xd - Y1d * Y2d
            obj_c = 0.5 * float(np.sum(Rc * Rc))
            if obj_c <= obj - ARMIJO_SUFFICIENT_DECREASE * t * gsq:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            stop_reason = "linesearch"
            break

        p1, p2, X1d, X2d, R, obj = c1, c2, Y1d, Y2d, Rc, obj_c
        err = np.sqrt(2.0 * obj) / norm_x
        it += 1
        record.errors.append(err)
        record.times.append(time.perf_counter() - start)
        record.betas.append(0.0)
        record.accepted.append(True)

    record.factors = HadamardFactors(p1.U @ p1.S, p1.V, p2.U @ p2.S, p2.V)
    record.best_error = err
    record.iterations = it
    record.stop_reason = stop_reason
    return record
