"""Hadamard decomposition toolkit.

Approximate a matrix X by the entry-wise product of two rank-r matrices,
X ~ (W1 H1^T) o (W2 H2^T), with solvers for dense and sparse data,
deterministic initializations, and benchmarking utilities.
"""

from .baselines import bcd, bcd_row_solve, scaled_gd, scaled_gd_step
from .bench import (
    CompressionReport,
    ExperimentSpec,
    gen_sparse,
    gen_synthetic,
    q_star,
    r_star,
    run_experiment,
)
from .core import (
    HadamardFactors,
    SvdTriple,
    face_split,
    factored_error,
    frobenius_norm,
    hadamard,
    numerical_rank,
    tsvd,
)
from .gradients import (
    BlockGradientWorkspace,
    build_workspace,
    grad_psi_w,
    hess_psi_action,
    lipschitz,
    rescale_columns,
)
from .initializers import (
    available_inits,
    get_init,
    init_fs,
    init_fsl,
    init_fsr,
    init_svd_based,
    optimal_gamma,
)
from .io import load_matrix, read_hdmat, read_pgm, write_hdmat, write_pgm
from .manifold import FaceSplitPoint, project_bmr, tangent_project
from .solvers import (
    ExtrapolationState,
    RunRecord,
    SolverConfig,
    manbcd,
    manbcd_euler_step,
    projbcd,
    update_beta,
)
from .standard import FixedRankPoint, grad_phi, hess_phi_action, rgd_standard

__version__ = "0.1.0"

__all__ = [
    "HadamardFactors", "SvdTriple", "face_split", "hadamard", "tsvd",
    "factored_error", "frobenius_norm", "numerical_rank",
    "FaceSplitPoint", "project_bmr", "tangent_project",
    "BlockGradientWorkspace", "build_workspace", "grad_psi_w",
    "hess_psi_action", "lipschitz", "rescale_columns",
    "ExtrapolationState", "SolverConfig", "RunRecord", "update_beta",
    "projbcd", "manbcd", "manbcd_euler_step",
    "FixedRankPoint", "grad_phi", "hess_phi_action", "rgd_standard",
    "bcd", "bcd_row_solve", "scaled_gd", "scaled_gd_step",
    "init_svd_based", "init_fs", "init_fsl", "init_fsr", "optimal_gamma",
    "available_inits", "get_init",
    "CompressionReport", "ExperimentSpec", "r_star", "q_star",
    "gen_synthetic", "gen_sparse", "run_experiment",
    "load_matrix", "read_hdmat", "write_hdmat", "read_pgm", "write_pgm",
]
