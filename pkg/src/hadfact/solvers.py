"""Two-block solvers for the Hadamard decomposition in the factored form
X ~ W H^T with W = W1 * W2 and H = H1 * H2 (face-splitting products).

Both solvers share one driver: per outer iteration the W block and then the
H block are updated (several cheap inner gradient steps each, reusing a
precomputed Gram workspace), factor columns are rescaled for conditioning,
iterates are extrapolated with an adaptive momentum parameter, and the step
is rolled back whenever the error increased.

* ``projbcd``  -- gradient step on the assembled block followed by the
  row-wise rank-1 projection back onto the face-split set.
* ``manbcd``   -- projection-free row-wise explicit integration step of the
  gradient flow that keeps the factors on the set by construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import HadamardFactors, face_split, factored_error, frobenius_norm, rows_to_mats
from .gradients import build_workspace, rescale_columns
from .manifold import FaceSplitPoint, project_bmr

__all__ = [
    "ExtrapolationState",
    "SolverConfig",
    "RunRecord",
    "update_beta",
    "manbcd_euler_step",
    "projbcd",
    "manbcd",
]

# Rows whose scale collapses below this are zeroed out and stay zero.
RHO_FLOOR = 1e-150


@dataclass(frozen=True)
class ExtrapolationState:
    """Adaptive momentum parameters: the current beta, its moving upper bound
    beta_bar, the last error-decreasing beta, and the fixed growth/shrink
    factors with 1 < gamma_bar <= gamma <= eta."""

    beta: float
    beta_bar: float = 1.0
    beta_old: float = 0.0
    gamma: float = 1.05
    gamma_bar: float = 1.01
    eta: float = 1.5

    def __post_init__(self):
        if not (1.0 < self.gamma_bar <= self.gamma <= self.eta):
            raise ValueError(
                "ExtrapolationState requires 1 < gamma_bar <= gamma <= eta, got "
                f"gamma_bar={self.gamma_bar}, gamma={self.gamma}, eta={self.eta}"
            )
        if not (0.0 <= self.beta <= self.beta_bar <= 1.0):
            raise ValueError(
                f"ExtrapolationState requires 0 <= beta <= beta_bar <= 1, got "
                f"beta={self.beta}, beta_bar={self.beta_bar}"
            )


def update_beta(state: ExtrapolationState, error_decreased: bool) -> ExtrapolationState:
    """One momentum-parameter update.

    On a decrease: remember beta, grow it by gamma up to the bound, and grow
    the bound by gamma_bar (capped at 1). Otherwise shrink beta by eta and
    pull the bound back to the last decreasing beta.
    """
    if error_decreased:
        beta_old = state.beta
        beta = min(state.beta_bar, state.gamma * state.beta)
        beta_bar = min(1.0, state.gamma_bar * state.beta_bar)
    else:
        beta_old = state.beta_old
        beta_bar = beta_old
        beta = state.beta / state.eta
    return replace(state, beta=beta, beta_bar=beta_bar, beta_old=beta_old)


@dataclass
class SolverConfig:
    """Shared solver options.

    tau is the step fraction of the inverse block Lipschitz constant and must
    lie in (0, 2); k_w / k_h are the inner gradient steps per block. The
    extrapolation tuple (beta0, beta_bar, gamma, gamma_bar, eta) defaults to
    (0.25, 1, 1.05, 1.01, 1.5). Runs stop at whichever comes first of
    time_limit, max_iters, relative error <= tol, or stagnation (100
    consecutive rejected steps with beta below 1e-6).
    """

    tau: float = 0.95
    k_w: int = 2
    k_h: int = 2
    max_iters: int = 10_000
    time_limit: float | None = None
    tol: float = 1e-12
    beta0: float = 0.25
    beta_bar: float = 1.0
    gamma: float = 1.05
    gamma_bar: float = 1.01
    eta: float = 1.5
    use_extrapolation: bool = True
    use_rescaling: bool = True
    stagnation_rejects: int = 100
    stagnation_beta: float = 1e-6

    def __post_init__(self):
        if not (0.0 < self.tau < 2.0):
            raise ValueError(f"tau must lie in (0, 2), got {self.tau}")
        if self.k_w < 1 or self.k_h < 1:
            raise ValueError("k_w and k_h must be >= 1")
        if not (0.0 <= self.beta0 <= self.beta_bar <= 1.0):
            raise ValueError("need 0 <= beta0 <= beta_bar <= 1")
        if not (1.0 < self.gamma_bar <= self.gamma <= self.eta):
            raise ValueError("need 1 < gamma_bar <= gamma <= eta")

    def extrapolation_state(self) -> ExtrapolationState:
        beta0 = self.beta0 if self.use_extrapolation else 0.0
        return ExtrapolationState(
            beta=beta0,
            beta_bar=self.beta_bar,
            beta_old=beta0,
            gamma=self.gamma,
            gamma_bar=self.gamma_bar,
            eta=self.eta,
        )


@dataclass
class RunRecord:
    """Per-run trace and result.

    ``errors[k]`` is the relative error of the candidate at iteration k
    (entry 0 is the starting point); ``accepted[k]`` says whether it was
    committed. The accepted subsequence is nonincreasing.
    """

    algo: str
    init_label: str
    errors: list[float] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    betas: list[float] = field(default_factory=list)
    accepted: list[bool] = field(default_factory=list)
    factors: HadamardFactors | None = None
    best_error: float = np.inf
    iterations: int = 0
    stop_reason: str = ""

    def accepted_errors(self) -> np.ndarray:
        mask = np.asarray(self.accepted, dtype=bool)
        return np.asarray(self.errors)[mask]

    @property
    def any_accepted(self) -> bool:
        """True when at least one iteration beyond the start was committed."""
        return any(self.accepted[1:])


def manbcd_euler_step(P: FaceSplitPoint, G: np.ndarray, h: float) -> FaceSplitPoint:
    """One explicit row-wise step of the gradient flow on the face-split set.

    Per row i with rho_i = mu_i nu_i > 0, with G_i the reshaped gradient row,
    g_i = G_i x_i and theta_i = y_i^T g_i:

    * the local step is capped at 0.95 rho_i / theta_i when theta_i > 0, so
      the shrink factor omega_i = sqrt(1 - theta_i h_i / rho_i) stays real;
    * mu_i and nu_i are both multiplied by omega_i (their ratio is invariant);
    * x_i and y_i take the explicit Euler update driven by h_i / rho_i with
      the updated rho_i, and are renormalized to exact unit norm.

    Rows with rho_i = 0 are left unchanged. Returns a new point; the input is
    not modified.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    m, r = P.shape
    G = np.asarray(G, dtype=np.float64)
    if G.shape != (m, r * r):
        raise ValueError(f"gradient must be {m} x {r * r}, got {G.shape}")
    if not np.all(np.isfinite(G)):
        raise RuntimeError("manbcd_euler_step: non-finite gradient entries")

    act = P.nonzero
    mu, nu, x, y = P.mu, P.nu, P.x, P.y
    rho = mu * nu
    safe_rho = np.where(act, rho, 1.0)

    mats = rows_to_mats(G, r)
    g = np.einsum("ipq,iq->ip", mats, x)  # G_i x_i
    Gty = np.einsum("ipq,ip->iq", mats, y)  # G_i^T y_i
    theta = np.einsum("ip,ip->i", y, g)

    hrow = np.full(m, float(h))
    capped = act & (theta > 0)
    hrow[capped] = np.minimum(h, 0.95 * rho[capped] / theta[capped])
    omega = np.sqrt(np.maximum(1.0 - theta * hrow / safe_rho, 0.0))

    mu_new = mu * omega
    nu_new = nu * omega
    rho_new = mu_new * nu_new
    collapsed = act & (rho_new < RHO_FLOOR)
    good = act & ~collapsed

    coef = np.zeros(m)
    coef[good] = hrow[good] / rho_new[good]
    x_new = x + coef[:, None] * (theta[:, None] * x - Gty)
    y_new = y + coef[:, None] * (theta[:, None] * y - g)
    # The tangent update is orthogonal to the current direction, so the norms
    # only grow; renormalize to keep them exactly 1.
    x_new[good] /= np.linalg.norm(x_new[good], axis=1)[:, None]
    y_new[good] /= np.linalg.norm(y_new[good], axis=1)[:, None]

    W1 = P.W1.copy()
    W2 = P.W2.copy()
    W1[good] = mu_new[good, None] * x_new[good]
    W2[good] = nu_new[good, None] * y_new[good]
    W1[collapsed] = 0.0
    W2[collapsed] = 0.0

    out = FaceSplitPoint(W1, W2)
    _check_euler_invariants(P, out, good)
    return out


def _check_euler_invariants(before: FaceSplitPoint, after: FaceSplitPoint, good: np.ndarray):
    # unit directions preserved and the mu/nu balance untouched
    if np.any(good):
        dev_x = np.abs(np.linalg.norm(after.x[good], axis=1) - 1.0).max()
        dev_y = np.abs(np.linalg.norm(after.y[good], axis=1) - 1.0).max()
        if max(dev_x, dev_y) > 1e-10:
            raise RuntimeError(
                f"manbcd_euler_step: unit-norm drift {max(dev_x, dev_y):.3e} exceeds 1e-10"
            )
        ratio_before = before.mu[good] / before.nu[good]
        ratio_after = after.mu[good] / after.nu[good]
        drift = np.abs(ratio_after / ratio_before - 1.0).max()
        if drift > 1e-14:
            raise RuntimeError(
                f"manbcd_euler_step: mu/nu balance drift {drift:.3e} exceeds 1e-14"
            )


def _update_block(D1y, D2y, ws, k, kind):
    """k inner iterations on one block: assemble, gradient, then either a
    projected gradient step or the row-wise flow step. Large intermediates
    are dropped before the projection to keep the sparse-path footprint low.
    """
    for _ in range(k):
        Dmat = face_split(D1y, D2y)
        G = Dmat @ ws.A
        G -= ws.B
        if kind == "project":
            G *= -ws.alpha
            G += Dmat
            del Dmat
            point = project_bmr(G)
        else:
            del Dmat
            point = manbcd_euler_step(FaceSplitPoint(D1y, D2y), G, ws.alpha)
        del G
        D1y, D2y = point.W1, point.W2
    return D1y, D2y


def _zero_record(algo, m, n, r, config) -> RunRecord:
    factors = HadamardFactors(
        np.zeros((m, r)), np.zeros((n, r)), np.zeros((m, r)), np.zeros((n, r))
    )
    return RunRecord(
        algo=algo,
        init_label="",
        errors=[0.0],
        times=[0.0],
        betas=[config.beta0],
        accepted=[True],
        factors=factors,
        best_error=0.0,
        iterations=0,
        stop_reason="zero_input",
    )


def _validate_init(init: HadamardFactors, m: int, n: int, r: int):
    expect = [(m, r), (n, r), (m, r), (n, r)]
    got = [init.W1.shape, init.H1.shape, init.W2.shape, init.H2.shape]
    if got != expect:
        raise ValueError(f"initial factors have shapes {got}, expected {expect}")


def _solve_two_block(X, r: int, init: HadamardFactors, config: SolverConfig,
                     kind: str, algo: str) -> RunRecord:
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    m, n = X.shape
    config = config or SolverConfig()
    norm_x = frobenius_norm(X)
    if norm_x == 0.0:
        return _zero_record(algo, m, n, r, config)
    _validate_init(init, m, n, r)
    Xn = X * (1.0 / norm_x)  # stays sparse when X is sparse
    XnT = Xn.T  # sparse: a CSC view, no copy

    # accepted iterates and extrapolated (y) iterates, brought to the scale of
    # the normalized X (undone on return)
    scale_in = norm_x ** -0.25
    W1, H1 = scale_in * init.W1, scale_in * init.H1
    W2, H2 = scale_in * init.W2, scale_in * init.H2
    W1y, H1y, W2y, H2y = W1, H1, W2, H2

    state = config.extrapolation_state()
    err_prev = factored_error(Xn, face_split(W1, W2), face_split(H1, H2))
    if not np.isfinite(err_prev):
        raise RuntimeError(
            f"{algo}: non-finite starting error (input or initial factors "
            "contain non-finite values); aborting"
        )
    record = RunRecord(algo=algo, init_label="", errors=[err_prev], times=[0.0],
                       betas=[state.beta], accepted=[True])
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

        # ----- W block -----
        if config.use_rescaling:
            W1y, H1p, nrm1 = rescale_columns(W1y, H1y)
            W2y, H2p, nrm2 = rescale_columns(W2y, H2y)
        else:
            H1p, H2p, nrm1, nrm2 = H1y, H2y, None, None
        Hp = face_split(H1p, H2p)
        ws = build_workspace(Xn @ Hp, Hp, config.tau)
        del Hp
        W1y, W2y = _update_block(W1y, W2y, ws, config.k_w, kind)
        del ws
        if nrm1 is not None:
            W1n, W2n = W1y / nrm1, W2y / nrm2
        else:
            W1n, W2n = W1y, W2y
        W1y = W1n + beta * (W1n - W1)
        W2y = W2n + beta * (W2n - W2)

        # ----- H block (same scheme with the roles swapped) -----
        if config.use_rescaling:
            H1y, W1p, onrm1 = rescale_columns(H1y, W1y)
            H2y, W2p, onrm2 = rescale_columns(H2y, W2y)
        else:
            W1p, W2p, onrm1, onrm2 = W1y, W2y, None, None
        Wp = face_split(W1p, W2p)
        ws = build_workspace(XnT @ Wp, Wp, config.tau)
        del Wp
        H1y, H2y = _update_block(H1y, H2y, ws, config.k_h, kind)
        del ws
        if onrm1 is not None:
            H1n, H2n = H1y / onrm1, H2y / onrm2
        else:
            H1n, H2n = H1y, H2y
        H1y = H1n + beta * (H1n - H1)
        H2y = H2n + beta * (H2n - H2)

        # ----- error check, momentum update, commit or roll back -----
        err = factored_error(Xn, face_split(W1n, W2n), face_split(H1n, H2n))
        if not np.isfinite(err):
            raise RuntimeError(
                f"{algo}: non-finite error at iteration {it} (beta={beta:.3g}); aborting"
            )
        state = update_beta(state, err < err_prev)
        if err > err_prev:
            W1y, W2y, H1y, H2y = W1, W2, H1, H2
            rejects += 1
            committed = False
        else:
            W1, W2, H1, H2 = W1n, W2n, H1n, H2n
            err_prev = err
            rejects = 0
            committed = True
        it += 1
        record.errors.append(err)
        record.times.append(time.perf_counter() - start)
        record.betas.append(beta)
        record.accepted.append(committed)

    scale = norm_x ** 0.25
    record.factors = HadamardFactors(scale * W1, scale * H1, scale * W2, scale * H2)
    record.best_error = err_prev
    record.iterations = it
    record.stop_reason = stop_reason
    return record


def projbcd(X, r: int, init: HadamardFactors, config: SolverConfig | None = None) -> RunRecord:
    """Projected two-block gradient descent for X ~ (W1 H1^T) o (W2 H2^T).

    Parameters
    ----------
    X : ndarray or scipy.sparse matrix
        Data matrix; sparse input is never densified.
    r : int
        Rank of both Hadamard factors.
    init : HadamardFactors
        Starting factors (see :mod:`hadfact.initializers`).
    config : SolverConfig, optional

    Returns
    -------
    RunRecord with the per-iteration trace and the final factors scaled to
    approximate the original (un-normalized) X.
    """
    return _solve_two_block(X, r, init, config or SolverConfig(), "project", "projbcd")


def manbcd(X, r: int, init: HadamardFactors, config: SolverConfig | None = None) -> RunRecord:
    """Projection-free two-block solver; same driver as :func:`projbcd` but the
    inner update integrates the gradient flow row-wise and stays on the
    face-split set by construction."""
    return _solve_two_block(X, r, init, config or SolverConfig(), "flow", "manbcd")
