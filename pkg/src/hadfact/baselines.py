"""Reference solvers for comparison.

* ``bcd`` -- cyclic exact block updates: each factor's rows solve small
  weighted normal-equation systems, with adaptive extrapolation and
  rollback on error increase.
* ``scaled_gd`` -- cyclic (optionally Gram-scaled) gradient descent with a
  fixed learning rate.

Both need dense m x n intermediates, so they reject inputs beyond the same
size guard as the fixed-rank solver.
"""

from __future__ import annotations

import time

import numpy as np

from .core import HadamardFactors, as_dense, frobenius_norm
from .solvers import RunRecord, SolverConfig, update_beta
from .standard import DENSIFY_GUARD

__all__ = ["bcd_row_solve", "bcd", "scaled_gd_step", "scaled_gd", "gradients_ciaperoni"]

TIKHONOV_SCALE = 1e-12

BCD_BETA0 = 0.75


def _solve_single(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        pass
    lam = TIKHONOV_SCALE * np.trace(M)
    try:
        return np.linalg.solve(M + lam * np.eye(M.shape[0]), rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(M, rhs, rcond=None)[0]


def bcd_row_solve(W1: np.ndarray, W2: np.ndarray, H1_row: np.ndarray,
                  x_col: np.ndarray) -> np.ndarray:
    """Exact minimizer of ||(W1 h) o (W2 z) - x_col||_2 over z.

    Solves the normal equations (W2^T diag((W1 h)^2) W2) z = W2^T ((W1 h) o x)
    with a Tikhonov fallback (lambda = 1e-12 trace) when singular.
    """
    q = W1 @ np.asarray(H1_row, dtype=float)
    M = (W2 * (q * q)[:, None]).T @ W2
    rhs = W2.T @ (q * np.asarray(x_col, dtype=float))
    return _solve_single(M, rhs)


def _update_rows(design: np.ndarray, weights: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Row-wise exact solves for one factor.

    For every column t: minimize ||weights[:, t] o (design z) - targets[:, t]||;
    returns the solutions stacked as rows (T x r).
    """
    p, r = design.shape
    K = (design[:, :, None] * design[:, None, :]).reshape(p, r * r)
    M = ((weights * weights).T @ K).reshape(-1, r, r)
    rhs = (weights * targets).T @ design
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(rhs)
        for t in range(M.shape[0]):
            out[t] = _solve_single(M[t], rhs[t])
        return out


def _dense_guard(X, algo: str) -> np.ndarray:
    m, n = X.shape
    if m * n > DENSIFY_GUARD:
        raise ValueError(
            f"{algo} forms dense m x n products; {m} x {n} exceeds the "
            f"{DENSIFY_GUARD:.0e}-entry guard. Use projbcd or manbcd instead."
        )
    return as_dense(X)


def bcd(X, r: int, init: HadamardFactors, config: SolverConfig | None = None) -> RunRecord:
    """Cyclic exact block coordinate descent on (W1, H1, W2, H2).

    Each factor update solves its rows' normal equations exactly; factors are
    extrapolated with the adaptive momentum rule (default beta0 = 0.75) and
    the whole cycle is rolled back when the error increased.
    """
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    config = config or SolverConfig(beta0=BCD_BETA0)
    Xd = _dense_guard(X, "bcd")
    m, n = Xd.shape
    norm_x = frobenius_norm(Xd)
    record = RunRecord(algo="bcd", init_label="")
    if norm_x == 0.0:
        z = HadamardFactors(np.zeros((m, r)), np.zeros((n, r)),
                            np.zeros((m, r)), np.zeros((n, r)))
        record.errors, record.times, record.betas, record.accepted = [0.0], [0.0], [0.0], [True]
        record.factors, record.best_error, record.stop_reason = z, 0.0, "zero_input"
        return record

    W1, H1 = init.W1.astype(float, copy=True), init.H1.astype(float, copy=True)
    W2, H2 = init.W2.astype(float, copy=True), init.H2.astype(float, copy=True)
    W1y, H1y, W2y, H2y = W1, H1, W2, H2

    state = config.extrapolation_state()
    err_prev = np.linalg.norm(Xd - (W1 @ H1.T) * (W2 @ H2.T)) / norm_x
    record.errors, record.times = [err_prev], [0.0]
    record.betas, record.accepted = [state.beta], [True]
    rejects = 0
    start = time.perf_counter()
    stop_reason = None
    it = 0
    while True:
        if err_prev <= config.tol:
            stop_reason = "tol"
            break
        if it >= config.max_iters:
            stop_reason = "max_iters"
            break
        if config.time_limit is not None and time.perf_counter() - start >= config.time_limit:
            stop_reason = "time_limit"
            break
        if rejects >= config.stagnation_rejects and state.beta < config.stagnation_beta:
            stop_reason = "stagnation"
            break

        beta = state.beta
        P2 = W2y @ H2y.T
        W1n = _update_rows(H1y, P2.T, Xd.T)
        W1y = W1n + beta * (W1n - W1)
        H1n = _update_rows(W1y, P2, Xd)
        H1y = H1n + beta * (H1n - H1)
        P1 = W1y @ H1y.T
        W2n = _update_rows(H2y, P1.T, Xd.T)
        W2y = W2n + beta * (W2n - W2)
        H2n = _update_rows(W2y, P1, Xd)
        H2y = H2n + beta * (H2n - H2)

        err = np.linalg.norm(Xd - (W1n @ H1n.T) * (W2n @ H2n.T)) / norm_x
        if not np.isfinite(err):
            raise RuntimeError(f"bcd: non-finite error at iteration {it}; aborting")
        state = update_beta(state, err < err_prev)
        if err > err_prev:
            W1y, H1y, W2y, H2y = W1, H1, W2, H2
            rejects += 1
            committed = False
        else:
            W1, H1, W2, H2 = W1n, H1n, W2n, H2n
            err_prev = err
            rejects = 0
            committed = True
        it += 1
        record.errors.append(err)
        record.times.append(time.perf_counter() - start)
        record.betas.append(beta)
        record.accepted.append(committed)

    record.factors = HadamardFactors(W1, H1, W2, H2)
    record.best_error = err_prev
    record.iterations = it
    record.stop_reason = stop_reason
    return record


def gradients_ciaperoni(factors: HadamardFactors, X):
    """Gradients of E = ||X - (W1 H1^T) o (W2 H2^T)||_F^2 with respect to the
    four factors, at the given point."""
    Xd = as_dense(X)
    P1 = factors.W1 @ factors.H1.T
    P2 = factors.W2 @ factors.H2.T
    R = P1 * P2 - Xd
    return (
        2.0 * (R * P2) @ factors.H1,
        2.0 * (R * P2).T @ factors.W1,
        2.0 * (R * P1) @ factors.H2,
        2.0 * (R * P1).T @ factors.W2,
    )


def _scaling_matrix(F: np.ndarray) -> np.ndarray:
    gram = F.T @ F
    try:
        return np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(gram)


def scaled_gd_step(factors: HadamardFactors, X, eta: float,
                   scaled: bool = True) -> HadamardFactors:
    """One cyclic pass of (scaled) gradient descent over the four factors.

    Each factor moves by -eta * gradient, post-multiplied by the inverse Gram
    matrix of its paired factor when ``scaled`` (pseudo-inverse fallback).
    The residual is refreshed after every factor update.
    """
    if eta <= 0:
        raise ValueError(f"learning rate must be positive, got {eta}")
    Xd = as_dense(X)
    W1, H1 = factors.W1.copy(), factors.H1.copy()
    W2, H2 = factors.W2.copy(), factors.H2.copy()

    P1, P2 = W1 @ H1.T, W2 @ H2.T
    G = 2.0 * ((P1 * P2 - Xd) * P2) @ H1
    W1 = W1 - eta * (G @ _scaling_matrix(H1) if scaled else G)

    P1 = W1 @ H1.T
    G = 2.0 * ((P1 * P2 - Xd) * P2).T @ W1
    H1 = H1 - eta * (G @ _scaling_matrix(W1) if scaled else G)

    P1 = W1 @ H1.T
    G = 2.0 * ((P1 * P2 - Xd) * P1) @ H2
    W2 = W2 - eta * (G @ _scaling_matrix(H2) if scaled else G)

    P2 = W2 @ H2.T
    G = 2.0 * ((P1 * P2 - Xd) * P1).T @ W2
    H2 = H2 - eta * (G @ _scaling_matrix(W2) if scaled else G)

    return HadamardFactors(W1, H1, W2, H2)


def scaled_gd(X, r: int, init: HadamardFactors, config: SolverConfig | None = None,
              eta: float = 1e-3, scaled: bool = True) -> RunRecord:
    """Plain driver around :func:`scaled_gd_step` with a fixed learning rate.

    Not part of the benchmark defaults; errors may oscillate, so the record
    marks an iteration accepted only when it improves on the best seen and the
    best factors are returned.
    """
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    config = config or SolverConfig()
    Xd = _dense_guard(X, "scaled_gd")
    norm_x = frobenius_norm(Xd)
    record = RunRecord(algo="scaledgd", init_label="")
    if norm_x == 0.0:
        m, n = Xd.shape
        z = HadamardFactors(np.zeros((m, r)), np.zeros((n, r)),
                            np.zeros((m, r)), np.zeros((n, r)))
        record.errors, record.times, record.betas, record.accepted = [0.0], [0.0], [0.0], [True]
        record.factors, record.best_error, record.stop_reason = z, 0.0, "zero_input"
        return record

    factors = init.copy()
    best = factors.copy()
    err = np.linalg.norm(Xd - factors.reconstruct()) / norm_x
    best_err = err
    record.errors, record.times = [err], [0.0]
    record.betas, record.accepted = [0.0], [True]
    start = time.perf_counter()
    it = 0
    stop_reason = None
    while True:
        if best_err <= config.tol:
            stop_reason = "tol"
            break
        if it >= config.max_iters:
            stop_reason = "max_iters"
            break
        if config.time_limit is not None and time.perf_counter() - start >= config.time_limit:
            stop_reason = "time_limit"
            break
        factors = scaled_gd_step(factors, Xd, eta, scaled=scaled)
        err = np.linalg.norm(Xd - factors.reconstruct()) / norm_x
        if not np.isfinite(err):
            raise RuntimeError(f"scaled_gd: non-finite error at iteration {it}; aborting")
        improved = err < best_err
        if improved:
            best_err = err
            best = factors.copy()
        it += 1
        record.errors.append(err)
        record.times.append(time.perf_counter() - start)
        record.betas.append(0.0)
        record.accepted.append(improved)
    record.factors = best
    record.best_error = best_err
    record.iterations = it
    record.stop_reason = stop_reason
    return record
