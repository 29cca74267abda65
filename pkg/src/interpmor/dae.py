"""Descriptor systems with singular E: spectral projectors, polynomial parts
and interpolatory reduction that keeps the polynomial part intact."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from interpmor._linalg import ShiftedSolver
from interpmor.errors import RankCollapse, SingularPencil, SingularPencilFamily
from interpmor.interpolation import (TangentData, _chain_basis, petrov_galerkin_reduce,
                                     realify_and_orthogonalize)
from interpmor.lti import DescriptorSystem, finite_eigenvalue_count


@dataclass(frozen=True, eq=False)
class SpectralProjectors:
    """Deflating-subspace data of a regular pencil ``lambda E - A``.

    Attributes
    ----------
    P_l, P_r
        Projectors onto the left and right deflating subspaces of the
        finite eigenvalues.
    W_inf, V_inf
        Bases of the left and right deflating subspaces of the infinite
        eigenvalue; ``W_inf^T`` annihilates the range of ``P_l``.
    L, R
        Nonsingular matrices with ``L^{-1} (lambda E - A) R`` block diagonal,
        finite block first.
    k
        Number of finite eigenvalues.
    """

    P_l: np.ndarray
    P_r: np.ndarray
    W_inf: np.ndarray
    V_inf: np.ndarray
    L: np.ndarray
    R: np.ndarray
    k: int


@dataclass(frozen=True, eq=False)
class PolynomialPart:
    """Matrix polynomial ``P(s) = sum_j s^j P_j``."""

    coefficients: tuple

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def transfer(self, s):
        out = np.zeros_like(self.coefficients[0], dtype=complex)
        for Pj in reversed(self.coefficients):
            out = out * s + Pj
        return out


def _check_regular(E, A):
    n = E.shape[0]
    scale = max(np.linalg.norm(A, 1), 1.0) / max(np.linalg.norm(E, 1), 1e-300)
    for s in (0.0, 0.7137 * scale, -1.3719 * scale, (0.31 + 1.9j) * scale):
        try:
            ShiftedSolver(E, A, s)
            return
        except SingularPencil:
            continue
    if n:
        raise SingularPencilFamily("lambda E - A appears singular for every lambda")


def _sylvester_pair(E11, E12, E22, A11, A12, A22):
    """Solve ``E11 X - Y E22 = -E12`` and ``A11 X - Y A22 = -A12``."""
    k, q = E12.shape
    Ik, Iq = np.eye(k), np.eye(q)
    M = np.block([[np.kron(Iq, E11), -np.kron(E22.T, Ik)],
                  [np.kron(Iq, A11), -np.kron(A22.T, Ik)]])
    rhs = -np.concatenate([E12.ravel(order="F"), A12.ravel(order="F")])
    sol = np.linalg.solve(M, rhs)
    X = sol[:k * q].reshape((k, q), order="F")
    Y = sol[k * q:].reshape((k, q), order="F")
    return X, Y


def spectral_projectors(sys):
    """Spectral projectors of ``lambda E - A`` for the finite eigenvalues.

    A reordered real generalized Schur form moves the finite eigenvalues to
    the leading block; the coupling blocks are then removed by a
    generalized Sylvester equation, giving ``L`` and ``R`` with
    ``L^{-1} (lambda E - A) R = diag(lambda E11 - A11, lambda E22 - A22)``.

    Raises
    ------
    SingularPencilFamily
        If the pencil is not regular.
    """
    E, A, n = sys.E, sys.A, sys.n
    _check_regular(E, A)
    k = finite_eigenvalue_count(E, A)
    if k == n:
        I = np.eye(n)
        return SpectralProjectors(I, I, np.zeros((n, 0)), np.zeros((n, 0)), I, I, n)
    _, _, alpha, beta, _, _ = spla.ordqz(A, E, output="real")
    rho = np.sort(np.abs(beta) / (np.abs(alpha) + np.abs(beta)))[::-1]
    cut = np.sqrt(rho[k - 1] * max(rho[k], 1e-300)) if k else np.inf

    def finite(a, b):
        return np.abs(b) / (np.abs(a) + np.abs(b)) > cut

    AA, EE, alpha, beta, Q, Z = spla.ordqz(A, E, sort=finite, output="real")
    X, Y = _sylvester_pair(EE[:k, :k], EE[:k, k:], EE[k:, k:], AA[:k, :k], AA[:k, k:], AA[k:, k:])
    Lt = np.eye(n)
    Lt[:k, k:] = Y
    Rt = np.eye(n)
    Rt[:k, k:] = X
    L, R = Q @ Lt, Z @ Rt
    Linv = np.linalg.inv(Lt) @ Q.T
    Rinv = np.linalg.inv(Rt) @ Z.T
    P_l = L[:, :k] @ Linv[:k]
    P_r = R[:, :k] @ Rinv[:k]
    return SpectralProjectors(P_l, P_r, Linv[k:].T, R[:, k:], L, R, k)


def additive_decomposition(sys, proj=None):
    """Split ``H = G + P`` into a strictly proper part and a polynomial part.

    Returns
    -------
    G : DescriptorSystem
        Realization on the finite deflating subspace, zero feedthrough.
    P : PolynomialPart
        ``D - sum_j s^j C_inf N^j A22^{-1} B_inf`` with nilpotent
        ``N = A22^{-1} E22``.
    """
    proj = proj or spectral_projectors(sys)
    k, n = proj.k, sys.n
    Lt_inv_B = np.linalg.solve(proj.L, sys.B)
    CR = sys.C @ proj.R
    pencil_E = np.linalg.solve(proj.L, sys.E @ proj.R)
    pencil_A = np.linalg.solve(proj.L, sys.A @ proj.R)
    G = DescriptorSystem(pencil_A[:k, :k], Lt_inv_B[:k], CR[:, :k], None, pencil_E[:k, :k])
    coeffs = [sys.D.copy()]
    if k < n:
        A22, E22 = pencil_A[k:, k:], pencil_E[k:, k:]
        N = np.linalg.solve(A22, E22)
        X = np.linalg.solve(A22, Lt_inv_B[k:])
        C2 = CR[:, k:]
        coeffs[0] = coeffs[0] - C2 @ X
        # N is nilpotent with index at most n - k
        for _ in range(n - k - 1):
            X = N @ X
            coeffs.append(-C2 @ X)
        scale = max(np.abs(c).max(initial=0.0) for c in coeffs)
        while len(coeffs) > 1 and np.all(np.abs(coeffs[-1]) <= 1e-12 * scale):
            coeffs.pop()
    return G, PolynomialPart(tuple(coeffs))


@dataclass(frozen=True, eq=False)
class DaeReduction:
    """Reduced descriptor system with its order bookkeeping."""

    system: DescriptorSystem
    finite_order: int
    infinite_order: int


def dae_reduce(sys, data, proj=None):
    """Interpolatory reduction that keeps the polynomial part of ``H``.

    The finite-part bases are built from the projected inputs ``P_l B r``
    and outputs ``P_r^T C^T l`` (with derivative chains when orders exceed
    one) and are then extended by the infinite deflating subspaces, so the
    reduced model satisfies the tangential conditions and has exactly the
    polynomial part of the original.
    """
    proj = proj or spectral_projectors(sys)
    Vf = _chain_basis(sys.E, sys.A, data.right_dirs @ (proj.P_l @ sys.B).T,
                      data.right_points, data.right_orders, trans=False)
    Wf = _chain_basis(sys.E, sys.A, data.left_dirs @ (sys.C @ proj.P_r),
                      data.left_points, data.left_orders, trans=True)
    Vf, Wf = realify_and_orthogonalize(Vf), realify_and_orthogonalize(Wf)
    if Vf.shape[1] != Wf.shape[1]:
        raise RankCollapse(f"right and left finite bases have different ranks "
                           f"({Vf.shape[1]} vs {Wf.shape[1]})")
    V = np.hstack([Vf, proj.V_inf])
    W = np.hstack([Wf, proj.W_inf])
    red = petrov_galerkin_reduce(sys, V, W, check=False)
    _check_regular(red.E, red.A)
    return DaeReduction(red, Vf.shape[1], proj.V_inf.shape[1])


__all__ = ["SpectralProjectors", "PolynomialPart", "DaeReduction", "spectral_projectors",
           "additive_decomposition", "dae_reduce", "TangentData"]
