"""Conic optimization toolbox: SDP/QP interior-point solvers and helpers."""

from .cones import smat, svec, svec_dim
from .complexify import (
    embed_hermitian,
    embedding_basis,
    herm_functional,
    matrix_to_params,
    n_params,
    params_to_matrix,
)
from .qp import QpProblem, max_concave_quadratic_2d, solve_qp
from .report import (
    FAILED,
    INACCURATE,
    INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    UNBOUNDED,
    SolveReport,
)
from .sdp import ConeGroup, SdpProblem, lmi_group, nonneg_group, solve_sdp

__all__ = [
    "ConeGroup", "FAILED", "INACCURATE", "INFEASIBLE", "MAX_ITER", "OPTIMAL",
    "QpProblem", "SdpProblem", "SolveReport", "UNBOUNDED", "embed_hermitian",
    "embedding_basis", "herm_functional", "lmi_group", "matrix_to_params",
    "max_concave_quadratic_2d", "n_params", "nonneg_group", "params_to_matrix",
    "smat", "solve_qp", "solve_sdp", "svec", "svec_dim",
]
