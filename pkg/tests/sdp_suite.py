"""Analytic cone-program suite: small problems with known optima.

Expected values come from hand derivations or dense eigendecompositions,
never from another cone solver, so the interior-point code is graded
against genuinely independent answers.
"""

from dataclasses import dataclass, field

import numpy as np

from macrb.conic import INFEASIBLE, OPTIMAL, UNBOUNDED, SdpProblem, lmi_group, nonneg_group
from macrb.conic.cones import smat, svec, svec_dim


@dataclass
class Case:
    name: str
    problem: SdpProblem
    expected_obj: float | None = None
    expected_status: str = OPTIMAL
    expected_x: np.ndarray | None = None
    rtol: float = 1e-6


def _sym_basis(n):
    """LMI coefficients reproducing X from its svec coordinates."""
    d = svec_dim(n)
    return np.stack([smat(row, n) for row in np.eye(d)])


def _rand_sym(rng, n, shift=0.0):
    m = rng.standard_normal((n, n))
    return (m + m.T) / 2.0 + shift * np.eye(n)


def solvable_cases():
    cases = []

    # 1: min x with [[x, 1], [1, x]] psd; eigenvalues x +- 1, so x* = 1
    f0 = np.array([[0.0, 1.0], [1.0, 0.0]])
    cases.append(Case(
        "offdiag_unit",
        SdpProblem(c=[1.0], groups=[lmi_group([0], f0, [np.eye(2)])]),
        expected_obj=1.0, expected_x=np.array([1.0])))

    # 2: box LP, solution slams into the corner -sign(c)
    c = np.array([1.5, -2.0, 0.7])
    eye3 = np.eye(3)
    cases.append(Case(
        "box_lp",
        SdpProblem(c=c, groups=[nonneg_group([0, 1, 2],
                                             np.vstack([eye3, -eye3]),
                                             np.ones(6))]),
        expected_obj=-np.sum(np.abs(c)), expected_x=-np.sign(c)))

    # 3: epigraph of the top eigenvalue: min t, t I - C psd
    cmat = _rand_sym(np.random.default_rng(3), 4)
    cases.append(Case(
        "eigmax_epigraph",
        SdpProblem(c=[1.0], groups=[lmi_group([0], -cmat, [np.eye(4)])]),
        expected_obj=float(np.linalg.eigvalsh(cmat)[-1]),
        expected_x=np.array([float(np.linalg.eigvalsh(cmat)[-1])])))

    # 4: min tr(C X), tr X = 1, X psd; optimum is the bottom eigenvalue
    cmat = _rand_sym(np.random.default_rng(4), 4)
    d = svec_dim(4)
    cases.append(Case(
        "density_min_eig",
        SdpProblem(c=svec(cmat),
                   groups=[lmi_group(np.arange(d), np.zeros((4, 4)), _sym_basis(4))],
                   a_eq=svec(np.eye(4))[None, :], b_eq=[1.0]),
        expected_obj=float(np.linalg.eigvalsh(cmat)[0])))

    # 5: min x1 + x2 with [[x1, 1], [1, x2]] psd; AM-GM gives 2 at (1, 1)
    cases.append(Case(
        "hyperbola",
        SdpProblem(c=[1.0, 1.0],
                   groups=[lmi_group([0, 1], f0,
                                     [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])]),
        expected_obj=2.0, expected_x=np.ones(2)))

    # 6: equality LP: min x1 + 2 x2, x1 + x2 = 1, x >= 0
    cases.append(Case(
        "eq_lp",
        SdpProblem(c=[1.0, 2.0],
                   groups=[nonneg_group([0, 1], -np.eye(2), np.zeros(2))],
                   a_eq=[[1.0, 1.0]], b_eq=[1.0]),
        expected_obj=1.0, expected_x=np.array([1.0, 0.0])))

    # 7: matrix completion: min X11 with X22 = 1, X12 = 2, X psd -> X11 = 4
    e12 = np.array([[0.0, 0.5], [0.5, 0.0]])
    cases.append(Case(
        "schur_completion",
        SdpProblem(c=svec(np.diag([1.0, 0.0])),
                   groups=[lmi_group(np.arange(3), np.zeros((2, 2)), _sym_basis(2))],
                   a_eq=np.vstack([svec(np.diag([0.0, 1.0])), svec(e12)]),
                   b_eq=[1.0, 2.0]),
        expected_obj=4.0,
        expected_x=svec(np.array([[4.0, 2.0], [2.0, 1.0]]))))

    # 8: min tr X with X >= C and X >= 0; optimum is the positive part of C
    cmat = _rand_sym(np.random.default_rng(8), 3)
    d = svec_dim(3)
    basis3 = _sym_basis(3)
    cases.append(Case(
        "psd_floor",
        SdpProblem(c=svec(np.eye(3)),
                   groups=[lmi_group(np.arange(d), -cmat, basis3),
                           lmi_group(np.arange(d), np.zeros((3, 3)), basis3)]),
        expected_obj=float(np.sum(np.clip(np.linalg.eigvalsh(cmat), 0.0, None)))))

    # 9: min tr X with <A, X> = 1, X psd -> 1 / eigmax(A)
    amat = _rand_sym(np.random.default_rng(9), 3)
    amat = amat @ amat.T + 0.1 * np.eye(3)
    cases.append(Case(
        "trace_vs_quadform",
        SdpProblem(c=svec(np.eye(3)),
                   groups=[lmi_group(np.arange(d), np.zeros((3, 3)), basis3)],
                   a_eq=svec(amat)[None, :], b_eq=[1.0]),
        expected_obj=float(1.0 / np.linalg.eigvalsh(amat)[-1])))

    # 10: min x with [[x, v'], [v, x I]] psd -> euclidean norm of v
    v = np.random.default_rng(10).standard_normal(3)
    f0 = np.zeros((4, 4))
    f0[0, 1:] = v
    f0[1:, 0] = v
    cases.append(Case(
        "norm_arrow",
        SdpProblem(c=[1.0], groups=[lmi_group([0], f0, [np.eye(4)])]),
        expected_obj=float(np.linalg.norm(v)),
        expected_x=np.array([float(np.linalg.norm(v))])))

    return cases


def degenerate_cases():
    f0 = np.array([[0.0, 2.0], [2.0, 0.0]])
    return [
        Case("lp_infeasible",
             SdpProblem(c=[0.0],
                        groups=[nonneg_group([0], [[1.0], [-1.0]], [0.0, -1.0])]),
             expected_status=INFEASIBLE),
        Case("mixed_infeasible",
             SdpProblem(c=[0.0],
                        groups=[lmi_group([0], f0, [np.eye(2)]),
                                nonneg_group([0], [[1.0]], [1.0])]),
             expected_status=INFEASIBLE),
        Case("lp_unbounded",
             SdpProblem(c=[1.0], groups=[nonneg_group([0], [[1.0]], [0.0])]),
             expected_status=UNBOUNDED),
        Case("psd_unbounded",
             SdpProblem(c=[-1.0],
                        groups=[lmi_group([0], np.diag([1.0, 0.0]),
                                          [np.diag([0.0, 1.0])])]),
             expected_status=UNBOUNDED),
    ]
