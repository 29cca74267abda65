"""Input-weighted H2 approximation: the F-map, weighted error norms and
the weighted first-order optimality residuals."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as spla

from interpmor.errors import LyapunovFailure, UnstableInput
from interpmor.interpolation import TangentData, verify_interpolation
from interpmor.lti import DescriptorSystem, PoleResidueForm, h2_norm, is_stable, pole_residue, series

#: relative residual accepted for the Lyapunov and Sylvester solves
EQUATION_TOL = 1e-9
#: largest Kronecker system tried when the Schur-based solve is inaccurate
KRON_MAX = 50 * 50


@dataclass(frozen=True, eq=False)
class WeightSystem:
    """Stable input weight ``W(s) = C_w (sI - A_w)^{-1} B_w + D_w`` (m x m_w).

    The dynamic part may be empty (``A_w`` is 0 x 0), in which case ``W`` is
    the constant ``D_w``.
    """

    A_w: np.ndarray
    B_w: np.ndarray
    C_w: np.ndarray
    D_w: np.ndarray
    system: DescriptorSystem = field(init=False, repr=False)

    def __post_init__(self):
        sys = DescriptorSystem(self.A_w, self.B_w, self.C_w, self.D_w)
        object.__setattr__(self, "system", sys)
        for name in ("A_w", "B_w", "C_w", "D_w"):
            object.__setattr__(self, name, getattr(sys, name[0]))
        if sys.n:
            stab = is_stable(sys)
            if not stab.stable:
                raise UnstableInput(f"weight is unstable (abscissa {stab.abscissa:.3e})")

    @classmethod
    def identity(cls, m):
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)), np.eye(m))

    @classmethod
    def from_system(cls, sys):
        sys = sys.with_standard_e()
        return cls(sys.A, sys.B, sys.C, sys.D)

    @property
    def n(self):
        return self.system.n

    @property
    def m(self):
        """Number of rows of ``W`` (inputs of the weighted model)."""
        return self.system.p

    @property
    def m_w(self):
        return self.system.m

    @cached_property
    def pole_residue(self):
        """Poles ``gamma_k`` with ``W = sum e_k f_k^T / (s - gamma_k) + D_w``.

        ``left`` rows are the vectors ``e_k``, ``right`` rows the ``f_k``.
        """
        return pole_residue(self.system)

    def transfer(self, s):
        return self.system.transfer(s)


def _scale(*mats):
    return max(max((np.abs(M).max(initial=0.0) for M in mats), default=0.0), np.finfo(float).tiny)


def _kron_sylvester(A, B, Q):
    """Solve ``A X + X B = Q`` through its vectorized form."""
    n, k = Q.shape
    M = np.kron(np.eye(k), A) + np.kron(B.T, np.eye(n))
    return np.linalg.solve(M, Q.ravel(order="F")).reshape((n, k), order="F")


def _solve_sylvester(A, B, Q, what):
    if Q.size == 0:
        return np.zeros(Q.shape)
    X = spla.solve_sylvester(A, B, Q)
    scale = _scale(A, B) * max(_scale(X), 1.0) + _scale(Q)
    res = np.abs(A @ X + X @ B - Q).max() / scale
    if res > EQUATION_TOL and Q.size <= KRON_MAX:
        X = _kron_sylvester(A, B, Q)
        res = np.abs(A @ X + X @ B - Q).max() / scale
    if not np.all(np.isfinite(X)) or res > EQUATION_TOL:
        raise LyapunovFailure(f"{what} residual {res:.2e} exceeds {EQUATION_TOL:.0e}")
    return X


@dataclass(frozen=True, eq=False)
class FMapRealization:
    """State-space realization of the F-map image ``F[H]``.

    ``P_w`` is the reachability Gramian of the weight and ``Z`` couples the
    states of ``H`` and ``W``.
    """

    A_F: np.ndarray
    B_F: np.ndarray
    C_F: np.ndarray
    P_w: np.ndarray
    Z: np.ndarray

    @cached_property
    def system(self):
        return DescriptorSystem(self.A_F, self.B_F, self.C_F)

    def transfer(self, s):
        return self.system.transfer(s)

    def transfer_and_derivative(self, s):
        return self.system.transfer_and_derivative(s)

    def transfer_derivatives(self, s, kmax):
        return self.system.transfer_derivatives(s, kmax)

    def impulse_at_zero(self):
        """Impulse response ``C_F B_F`` of ``F[H]`` at ``t = 0+``."""
        return self.C_F @ self.B_F


def fmap_realization(sys, weight):
    """Realization of ``F[H]`` for a stable `sys` and input weight.

    Solves ``A_w P_w + P_w A_w^T + B_w B_w^T = 0`` and
    ``A Z + Z A_w^T + B (C_w P_w + D_w B_w^T) = 0``, then returns::

        A_F = [[A, B C_w], [0, A_w]]
        B_F = [[Z C_w^T + B D_w D_w^T], [P_w C_w^T + B_w D_w^T]]
        C_F = [C, D C_w]

    A nonsingular E is first absorbed into ``A`` and ``B``.

    Raises
    ------
    UnstableInput
        If `sys` is unstable.
    LyapunovFailure
        If either matrix equation cannot be solved accurately.
    """
    if not isinstance(weight, WeightSystem):
        weight = WeightSystem.from_system(weight)
    if weight.m != sys.m:
        raise ValueError(f"weight has {weight.m} outputs but the system has {sys.m} inputs")
    sys = sys.with_standard_e()
    if sys.n and not is_stable(sys).stable:
        raise UnstableInput("system passed to the F-map is unstable")
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    Aw, Bw, Cw, Dw = weight.A_w, weight.B_w, weight.C_w, weight.D_w
    P_w = _solve_sylvester(Aw, Aw.T, -Bw @ Bw.T, "Lyapunov")
    P_w = (P_w + P_w.T) / 2
    Z = _solve_sylvester(A, Aw.T, -B @ (Cw @ P_w + Dw @ Bw.T), "Sylvester")
    n, nw = sys.n, weight.n
    A_F = np.block([[A, B @ Cw], [np.zeros((nw, n)), Aw]])
    B_F = np.vstack([Z @ Cw.T + B @ Dw @ Dw.T, P_w @ Cw.T + Bw @ Dw.T])
    C_F = np.hstack([C, D @ Cw])
    return FMapRealization(A_F, B_F, C_F, P_w, Z)


def fmap_direct(sys, weight, s):
    """Evaluate ``F[H](s)`` from the pole-residue form of the weight.

    ``H(s) W(s) W(-s)^T + sum_k H(-gamma_k) W(-gamma_k) f_k e_k^T / (s + gamma_k)``.
    Used as an independent check on :func:`fmap_realization`.
    """
    out = sys.transfer(s) @ weight.transfer(s) @ weight.transfer(-s).T
    if weight.n:
        pr = weight.pole_residue
        for g, e, f in zip(pr.poles, pr.left, pr.right):
            out = out + sys.transfer(-g) @ weight.transfer(-g) @ np.outer(f, e) / (s + g)
    return out


def weighted_h2_norm(sysF, sysR, weight):
    """``||(H - H_r) W||_H2``; `sysR` may be a pole-residue form."""
    if not isinstance(weight, WeightSystem):
        weight = WeightSystem.from_system(weight)
    if hasattr(sysR, "to_system"):
        sysR = sysR.to_system()
    return h2_norm(series(weight.system, sysF - sysR))


@dataclass
class WeightedReport:
    """Weighted optimality residuals.

    ``interpolation`` holds the tangential conditions on ``F[H]`` and
    ``F[H_r]`` at the mirrored reduced poles; ``kernel`` lists
    ``||(F(0) - F_r(0)) n|| / ||F(0) n||`` for a basis of ``Ker(D_w^T)``.
    """

    interpolation: object
    kernel: list

    @property
    def max_residual(self):
        return max([self.interpolation.max_residual] + list(self.kernel))

    def passed(self, tol):
        return self.max_residual < tol

    def to_dict(self):
        d = self.interpolation.to_dict()
        d["kernel"] = [float(k) for k in self.kernel]
        d["max_residual"] = float(self.max_residual)
        return d


def weighted_optimality_residuals(sysF, reducedPR, weight):
    """Residuals of the weighted-H2 first-order conditions for `reducedPR`.

    With ``lambda_k, l_k, r_k`` the reduced poles and residue directions,
    ``F[H]`` and ``F[H_r]`` must agree tangentially (value and derivative)
    at ``-lambda_k``, and ``F(0) n = F_r(0) n`` for every ``n`` with
    ``D_w^T n = 0``.  A reduced descriptor system is converted to
    pole-residue form first.
    """
    if not isinstance(weight, WeightSystem):
        weight = WeightSystem.from_system(weight)
    if not isinstance(reducedPR, PoleResidueForm):
        reducedPR = pole_residue(reducedPR)
    FH = fmap_realization(sysF, weight)
    FHr = fmap_realization(reducedPR.to_system(), weight)
    data = TangentData.bitangential(-reducedPR.poles, reducedPR.right, reducedPR.left)
    report = verify_interpolation(FH, FHr, data)
    kernel = []
    N = spla.null_space(weight.D_w.T)
    F0, Fr0 = FH.impulse_at_zero(), FHr.impulse_at_zero()
    for n in N.T:
        full = F0 @ n
        err = np.linalg.norm(full - Fr0 @ n)
        nf = np.linalg.norm(full)
        kernel.append(float(err / nf) if nf > 0 else float(err))
    return WeightedReport(report, kernel)


__all__ = ["WeightSystem", "FMapRealization", "WeightedReport", "fmap_realization", "fmap_direct",
           "weighted_h2_norm", "weighted_optimality_residuals"]
