"""Block gradient machinery for the factored objective
Psi(W, H) = 0.5 * ||X - W H^T||_F^2 on m x r^2 / n x r^2 variables:
precomputed Gram workspaces, block gradients, Hessian actions, spectral-norm
step bounds, and the column rescaling that bounds them by r^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BlockGradientWorkspace",
    "build_workspace",
    "grad_psi_w",
    "hess_psi_action",
    "lipschitz",
    "rescale_columns",
]

# Dense eigensolve below this Gram size, power iteration above.
DENSE_EIG_LIMIT = 64
ZERO_COLUMN_TOL = 1e-15


@dataclass
class BlockGradientWorkspace:
    """Per-block precomputation for gradient steps on one block.

    For the W block: A = H^T H (r^2 x r^2), B = X H (m x r^2); the gradient at
    W is W A - B and L = ||A||_2 is the Lipschitz constant of the block
    gradient, giving the step alpha = tau / L.
    """

    A: np.ndarray
    B: np.ndarray
    L: float
    alpha: float


def build_workspace(X_side_product: np.ndarray, H: np.ndarray, tau: float) -> BlockGradientWorkspace:
    """Workspace from the fixed opposite factor H and the precomputed
    X-side product (X @ H for the W block, X.T @ W for the H block)."""
    A = H.T @ H
    L = lipschitz(A)
    alpha = tau / L if L > 0 else tau
    return BlockGradientWorkspace(A=A, B=np.asarray(X_side_product), L=L, alpha=alpha)


def grad_psi_w(W: np.ndarray, workspace: BlockGradientWorkspace) -> np.ndarray:
    """Block gradient (W H^T - X) H computed as W A - B without the m x n product."""
    return W @ workspace.A - workspace.B


def hess_psi_action(Y: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Action of the block Hessian on Y: simply Y A (the Hessian is A (x) I)."""
    return Y @ A


def lipschitz(A: np.ndarray, tol: float = 1e-8, max_iters: int = 500) -> float:
    """Spectral norm of a symmetric PSD Gram matrix.

    Dense eigensolve for sizes up to DENSE_EIG_LIMIT, else power iteration
    with relative tolerance ``tol``.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if n <= DENSE_EIG_LIMIT:
        w = np.linalg.eigvalsh(A)
        return float(max(w[-1], 0.0))
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        Av = A @ v
        lam = float(v @ Av)
        # for symmetric A the residual bounds the eigenvalue error
        if np.linalg.norm(Av - lam * v) <= tol * max(abs(lam), 1e-30):
            break
        nrm = np.linalg.norm(Av)
        if nrm == 0.0:
            return 0.0
        v = Av / nrm
    return max(lam, 0.0)


def rescale_columns(Wf: np.ndarray, Hf: np.ndarray):
    """Move the column norms of Hf onto Wf.

    Returns (Wf_scaled, Hf_unit, norms) with Hf_unit having unit-norm columns
    (columns of norm below 1e-15 are left untouched and get norm entry 1) and
    Wf_scaled @ Hf_unit.T == Wf @ Hf.T exactly. ``norms`` undoes the scaling.
    """
    norms = np.linalg.norm(Hf, axis=0)
    norms = np.where(norms < ZERO_COLUMN_TOL, 1.0, norms)
    return Wf * norms, Hf / norms, norms
