"""First-order descriptor systems ``E x' = A x + B u, y = C x + D u``.

Evaluation of the transfer function and its derivatives, pole-residue
expansions, stability checks and the H2 / H-infinity norms.
"""

import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import NamedTuple

import numpy as np
import scipy.integrate as spint
import scipy.linalg as spla
import scipy.optimize as spopt

from interpmor._linalg import EPS, ShiftedSolver, as_matrix, pair_transform
from interpmor.errors import (NonzeroFeedthrough, RepeatedPoles, SingularE,
                              SingularPencil, UnstableSystem)

#: relative pole separation below which a pole-residue form is refused
POLE_SEPARATION_TOL = 1e-8
#: E is treated as singular when sigma_min(E) <= SINGULAR_E_TOL * ||E||
SINGULAR_E_TOL = 1e-12


def _readonly(x):
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class DescriptorSystem:
    """Real descriptor system with transfer function ``C (sE - A)^{-1} B + D``.

    Parameters
    ----------
    A
        The n x n state matrix.
    B
        The n x m input matrix.
    C
        The p x n output matrix.
    D
        The p x m feedthrough; zero if omitted.
    E
        The n x n (possibly singular) descriptor matrix; identity if omitted.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray = None
    E: np.ndarray = None
    n: int = field(init=False)
    m: int = field(init=False)
    p: int = field(init=False)

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        B = as_matrix(self.B, rows=n, name="B")
        C = as_matrix(self.C, cols=n, rows=1 if np.ndim(self.C) == 1 else None, name="C")
        m, p = B.shape[1], C.shape[0]
        D = np.zeros((p, m)) if self.D is None else as_matrix(self.D, rows=p, cols=m, name="D")
        E = np.eye(n) if self.E is None else as_matrix(self.E, rows=n, cols=n, name="E")
        for name, mat in (("E", E), ("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} contains NaN or Inf entries")
            object.__setattr__(self, name, _readonly(mat))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "p", p)

    def __repr__(self):
        return f"DescriptorSystem(n={self.n}, m={self.m}, p={self.p})"

    # -- evaluation ---------------------------------------------------------

    def transfer(self, s):
        """Value of the transfer function at `s`."""
        return eval_transfer(self, s)

    def transfer_derivative(self, s):
        return eval_transfer_derivative(self, s)

    def transfer_derivatives(self, s, kmax):
        return transfer_derivatives(self, s, kmax)

    def transfer_and_derivative(self, s):
        """``(H(s), H'(s))`` from a single factorization of ``sE - A``."""
        solver = ShiftedSolver(self.E, self.A, s)
        X = solver.solve(self.B)
        H = self.C @ X + self.D
        dH = -self.C @ solver.solve(self.E @ X)
        return H, dH

    # -- algebra --------------------------------------------------------------

    def __neg__(self):
        return DescriptorSystem(self.A, self.B, -self.C, -self.D, self.E)

    def __add__(self, other):
        if (self.m, self.p) != (other.m, other.p):
            raise ValueError("input/output dimensions do not match")
        return DescriptorSystem(
            spla.block_diag(self.A, other.A),
            np.vstack([self.B, other.B]),
            np.hstack([self.C, other.C]),
            self.D + other.D,
            spla.block_diag(self.E, other.E),
        )

    def __sub__(self, other):
        return self + (-other)

    def transformed(self, T1, T2):
        """Equivalent system with state basis ``x = T1 z`` tested against ``T2``."""
        return DescriptorSystem(T2.T @ self.A @ T1, T2.T @ self.B, self.C @ T1,
                                self.D, T2.T @ self.E @ T1)

    def with_standard_e(self):
        """Equivalent system with ``E = I`` (requires nonsingular E)."""
        if np.array_equal(self.E, np.eye(self.n)):
            return self
        _check_nonsingular_e(self.E)
        return DescriptorSystem(np.linalg.solve(self.E, self.A), np.linalg.solve(self.E, self.B),
                                self.C, self.D)


def series(first, second):
    """System with transfer function ``second(s) @ first(s)``.

    The input passes through `first`, whose output drives `second`.
    """
    if first.p != second.m:
        raise ValueError("output dimension of `first` must equal input dimension of `second`")
    n1, n2 = first.n, second.n
    A = np.block([[first.A, np.zeros((n1, n2))], [second.B @ first.C, second.A]])
    E = spla.block_diag(first.E, second.E)
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    return DescriptorSystem(A, B, C, second.D @ first.D, E)


# -- transfer function ------------------------------------------------------


def eval_transfer(sys, s):
    """Evaluate ``H(s) = C (sE - A)^{-1} B + D``.

    One LU factorization of ``sE - A`` and a solve with the m columns of B;
    no explicit inverse is formed.

    Raises
    ------
    SingularPencil
        If ``sE - A`` is numerically singular.
    """
    solver = ShiftedSolver(sys.E, sys.A, s)
    return sys.C @ solver.solve(sys.B) + sys.D


def eval_transfer_derivative(sys, s):
    """Exact derivative ``H'(s) = -C (sE-A)^{-1} E (sE-A)^{-1} B``."""
    return sys.transfer_and_derivative(s)[1]


def transfer_derivatives(sys, s, kmax):
    """``[H(s), H'(s), ..., H^{(kmax)}(s)]`` via the resolvent chain.

    Uses ``H^{(k)}(s) = (-1)^k k! C [(sE-A)^{-1} E]^k (sE-A)^{-1} B`` for
    ``k >= 1`` with a single factorization.
    """
    solver = ShiftedSolver(sys.E, sys.A, s)
    X = solver.solve(sys.B)
    out = [sys.C @ X + sys.D]
    for k in range(1, kmax + 1):
        X = solver.solve(sys.E @ X)
        out.append((-1) ** k * factorial(k) * (sys.C @ X))
    return out


# -- poles and residues -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PoleResidueForm:
    """``H(s) = sum_i l_i r_i^T / (s - lambda_i) + D``.

    Attributes
    ----------
    poles
        Array of r distinct poles, closed under conjugation.
    left
        r x p array; row i is the left residue direction ``l_i``.
    right
        r x m array; row i is the right residue direction ``r_i``.
    feedthrough
        p x m real matrix.
    """

    poles: np.ndarray
    left: np.ndarray
    right: np.ndarray
    feedthrough: np.ndarray = None

    def __post_init__(self):
        poles = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        r = poles.size
        left = np.asarray(self.left, dtype=complex).reshape(r, -1)
        right = np.asarray(self.right, dtype=complex).reshape(r, -1)
        D = self.feedthrough
        D = np.zeros((left.shape[1], right.shape[1])) if D is None else as_matrix(D)
        object.__setattr__(self, "poles", _readonly(poles))
        object.__setattr__(self, "left", _readonly(left))
        object.__setattr__(self, "right", _readonly(right))
        object.__setattr__(self, "feedthrough", _readonly(D))

    @property
    def order(self):
        return self.poles.size

    @property
    def residues(self):
        """r x p x m array of residue matrices ``l_i r_i^T``."""
        return np.einsum("ip,im->ipm", self.left, self.right)

    def transfer(self, s):
        w = 1.0 / (s - self.poles)
        return (self.left.T * w) @ self.right + self.feedthrough

    def transfer_derivative(self, s):
        w = -1.0 / (s - self.poles) ** 2
        return (self.left.T * w) @ self.right

    def transfer_and_derivative(self, s):
        return self.transfer(s), self.transfer_derivative(s)

    def transfer_derivatives(self, s, kmax):
        out = [self.transfer(s)]
        for k in range(1, kmax + 1):
            w = (-1) ** k * factorial(k) / (s - self.poles) ** (k + 1)
            out.append((self.left.T * w) @ self.right)
        return out

    def to_system(self):
        """Real first-order realization of the expansion.

        The complex diagonal realization is rotated by a unitary pairing
        transform so that every matrix is real.
        """
        from interpmor._linalg import conjugate_partners

        partner = conjugate_partners(self.poles)
        Q = pair_transform(partner)
        A = Q.conj().T @ np.diag(self.poles) @ Q
        B = Q.conj().T @ self.right
        C = self.left.T @ Q
        return DescriptorSystem(_real(A), _real(B), _real(C), self.feedthrough)


def _real(X, tol=1e-8):
    scale = max(np.max(np.abs(X), initial=0.0), 1.0)
    if np.max(np.abs(np.imag(X)), initial=0.0) > tol * scale:
        raise ValueError("realization is not real; data is not closed under conjugation")
    return np.real(X)


def _check_nonsingular_e(E):
    if E.shape[0] == 0:
        return 1.0
    sv = spla.svdvals(E)
    if sv[0] == 0 or sv[-1] <= SINGULAR_E_TOL * sv[0]:
        raise SingularE("E is numerically singular")
    return sv[0] / sv[-1]


def _check_separation(poles, tol):
    r = poles.size
    if r < 2:
        return
    radius = np.max(np.abs(poles))
    gaps = np.abs(poles[:, None] - poles[None, :]) + np.diag(np.full(r, np.inf))
    if radius == 0 or gaps.min() < tol * radius:
        raise RepeatedPoles(f"poles are not distinct (min gap {gaps.min():.3e}, "
                            f"spectral radius {radius:.3e})")


def pole_residue(sys, sep_tol=POLE_SEPARATION_TOL):
    """Pole-residue expansion of a system with nonsingular E.

    The residue ``l_i r_i^T`` is split so that ``||l_i|| = ||r_i||``; poles are
    sorted by real part, conjugate pairs are adjacent and carry exactly
    conjugated directions.

    Raises
    ------
    SingularE
        If E is numerically singular.
    RepeatedPoles
        If two poles are closer than ``sep_tol`` times the spectral radius.
    """
    cond_E = _check_nonsingular_e(sys.E)
    if cond_E < 1e8:
        Ei = np.linalg.solve(sys.E, np.hstack([sys.A, sys.B]))
        lam, X = spla.eig(Ei[:, :sys.n])
        _check_separation(lam, sep_tol)
        L = sys.C @ X
        R = np.linalg.solve(X, Ei[:, sys.n:])
    else:
        lam, Y, X = spla.eig(sys.A, sys.E, left=True, right=True)
        _check_separation(lam, sep_tol)
        d = np.einsum("ij,ij->j", Y.conj(), sys.E @ X)
        L = sys.C @ (X / d)
        R = (Y.conj().T @ sys.B)
    return _tidy_pole_residue(lam, L.T, R, sys.D)


def _tidy_pole_residue(lam, L, R, D):
    """Balance, order and conjugate-symmetrize a raw pole-residue triple."""
    lam = np.asarray(lam, dtype=complex).copy()
    L = np.asarray(L, dtype=complex).copy()
    R = np.asarray(R, dtype=complex).copy()
    scale = max(np.max(np.abs(lam), initial=0.0), 1e-300)
    real = np.abs(lam.imag) <= 1e-10 * scale
    lam[real] = lam[real].real
    for i in np.flatnonzero(real):
        k = np.argmax(np.abs(L[i]))
        phase = L[i, k] / abs(L[i, k]) if L[i, k] != 0 else 1.0
        L[i] = (L[i] / phase).real
        R[i] = (R[i] * phase).real
    nl = np.linalg.norm(L, axis=1)
    nr = np.linalg.norm(R, axis=1)
    ok = (nl > 0) & (nr > 0)
    alpha = np.ones_like(nl)
    alpha[ok] = np.sqrt(nr[ok] / nl[ok])
    L *= alpha[:, None]
    R /= alpha[:, None]
    order = np.lexsort((lam.imag, np.abs(lam.imag), lam.real))
    lam, L, R = lam[order], L[order], R[order]
    i = 0
    while i < lam.size:
        if lam[i].imag != 0 and i + 1 < lam.size:
            # lexsort puts the negative-imaginary member first
            j = i + 1
            lam[j] = np.conj(lam[i])
            L[j] = np.conj(L[i])
            R[j] = np.conj(R[i])
            i += 2
        else:
            i += 1
    return PoleResidueForm(lam, L, R, D)


# -- stability ----------------------------------------------------------------


class Stability(NamedTuple):
    stable: bool
    abscissa: float
    n_infinite: int


def finite_eigenvalue_count(E, A, tol=1e-10):
    """Number of finite eigenvalues of the regular pencil ``lambda E - A``.

    Equal to the stabilized rank of the powers of ``(A - cE)^{-1} E`` for a
    shift c that is not an eigenvalue.
    """
    n = E.shape[0]
    if n == 0:
        return 0
    sv = spla.svdvals(E)
    if sv[0] == 0:
        return 0
    if sv[-1] > SINGULAR_E_TOL * sv[0]:
        return n
    scale = max(np.linalg.norm(A, 2), 1.0) / sv[0]
    for c in (0.0, 0.61803 * scale, -1.41421 * scale, 2.71828 * scale):
        M = A - c * E
        if np.linalg.cond(M) < 1e12:
            break
    else:
        raise SingularPencil(c, "could not find a regular shift for the pencil")
    N = np.linalg.solve(M, E)
    rank = n
    P = np.eye(n)
    for _ in range(n):
        P = N @ P
        P /= max(np.linalg.norm(P, 2), 1e-300)
        new_rank = np.linalg.matrix_rank(P, tol=tol)
        if new_rank == rank:
            break
        rank = new_rank
    return rank


def finite_eigenvalues(E, A):
    """Finite eigenvalues of ``lambda E - A`` and the count of infinite ones."""
    n = E.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex), 0
    ab = spla.eigvals(A, E, homogeneous_eigvals=True)
    alpha, beta = ab[0], ab[1]
    k = finite_eigenvalue_count(E, A)
    rho = np.abs(beta) / (np.abs(alpha) + np.abs(beta))
    idx = np.argsort(-rho, kind="stable")[:k]
    return alpha[idx] / beta[idx], n - k


def is_stable(sys):
    """Whether all finite eigenvalues of ``(A, E)`` lie in the open left half-plane.

    Returns
    -------
    Stability
        ``(stable, abscissa, n_infinite)``; infinite eigenvalues are excluded
        from the spectral abscissa and counted separately.
    """
    lam, n_inf = finite_eigenvalues(sys.E, sys.A)
    abscissa = float(np.max(lam.real)) if lam.size else -np.inf
    return Stability(bool(abscissa < 0), abscissa, n_inf)


# -- norms ---------------------------------------------------------------------


def _frobenius_sq_integrand(sys):
    def f(w):
        H = eval_transfer(sys, 1j * w)
        return float(np.sum(np.abs(H) ** 2))
    return f


def h2_norm_quadrature(sys, epsrel=1e-12):
    """H2 norm by adaptive quadrature of ``||H(iw)||_F^2`` over ``w >= 0``."""
    lam, _ = finite_eigenvalues(sys.E, sys.A)
    f = _frobenius_sq_integrand(sys)
    breaks = np.unique(np.abs(lam[np.abs(lam) > 0]))
    edges = np.concatenate([[0.0], breaks])
    total = 0.0
    # the requested accuracy is often below what quad can certify; the
    # estimate is still good to many digits, so silence its warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spint.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            total += spint.quad(f, a, b, epsrel=epsrel, epsabs=0, limit=500)[0]
        total += spint.quad(f, edges[-1], np.inf, epsrel=epsrel, epsabs=0, limit=500)[0]
    return np.sqrt(total / np.pi)


def h2_norm_squared(sys):
    """Squared H2 norm of a stable system with zero feedthrough.

    Computed from the pole-residue identity
    ``||H||^2 = sum_k l_k^T H(-lambda_k) r_k``; falls back to frequency
    quadrature when the eigenvector basis is ill-conditioned, poles repeat or
    E is singular.

    Raises
    ------
    UnstableSystem
        If a finite pole has nonnegative real part.
    NonzeroFeedthrough
        If D (or, for singular E, the limit at infinity) is nonzero.
    """
    if np.any(sys.D != 0):
        raise NonzeroFeedthrough("H2 norm is infinite for nonzero D")
    if sys.n == 0:
        return 0.0
    stab = is_stable(sys)
    if not stab.stable:
        raise UnstableSystem(f"spectral abscissa {stab.abscissa:.3e} >= 0")
    if stab.n_infinite:
        from interpmor.dae import additive_decomposition
        G, P = additive_decomposition(sys)
        if any(np.any(np.abs(c) > 1e-10 * max(1.0, np.abs(sys.C).max() * np.abs(sys.B).max()))
               for c in P.coefficients):
            raise NonzeroFeedthrough("transfer function has a nonzero polynomial part")
        return h2_norm_squared(G)
    try:
        pr = pole_residue(sys)
    except RepeatedPoles:
        return h2_norm_quadrature(sys) ** 2
    if _residue_conditioning(sys, pr) > 1e8:
        return h2_norm_quadrature(sys) ** 2
    total = sum(pr.left[k] @ eval_transfer(sys, -pr.poles[k]) @ pr.right[k]
                for k in range(pr.order))
    return float(max(np.real(total), 0.0))


def h2_norm(sys):
    """H2 norm; see :func:`h2_norm_squared` for the method and errors."""
    return float(np.sqrt(h2_norm_squared(sys)))


def _residue_conditioning(sys, pr):
    # eigenvector-basis condition number as an accuracy proxy
    lam, X = spla.eig(sys.A, sys.E)
    return np.linalg.cond(X / np.linalg.norm(X, axis=0))


def hinf_norm(sys, n_grid=2000, return_frequency=False):
    """Estimate of the H-infinity norm ``sup_w ||H(iw)||_2``.

    Sampling on ``n_grid`` log-spaced frequencies spanning two decades beyond
    the smallest and largest pole magnitudes, plus ``w = 0``, the pole
    frequencies and ``w = inf``; the five largest samples are then refined
    by bounded scalar maximization between their grid neighbours.  The
    result is a lower bound of the true norm.

    Raises
    ------
    UnstableSystem
        If a finite pole has nonnegative real part.
    """
    stab = is_stable(sys)
    if not stab.stable:
        raise UnstableSystem(f"spectral abscissa {stab.abscissa:.3e} >= 0")
    lam, _ = finite_eigenvalues(sys.E, sys.A)
    mags = np.abs(lam[np.abs(lam) > 0])
    lo = mags.min() / 100 if mags.size else 1e-2
    hi = mags.max() * 100 if mags.size else 1e2
    grid = np.unique(np.concatenate([[0.0], np.logspace(np.log10(lo), np.log10(hi), n_grid),
                                     np.abs(lam.imag), mags]))

    def gain(w):
        return spla.svdvals(eval_transfer(sys, 1j * w))[0] if sys.p and sys.m else 0.0

    vals = np.array([gain(w) for w in grid])
    best_w, best = grid[np.argmax(vals)], vals.max()
    for i in np.argsort(-vals)[:5]:
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if b > a:
            res = spopt.minimize_scalar(lambda w: -gain(w), bounds=(a, b), method="bounded",
                                        options={"xatol": 1e-10 * max(b, 1e-12)})
            if -res.fun > best:
                best, best_w = -res.fun, res.x
    if stab.n_infinite == 0 and sys.p and sys.m:
        dinf = spla.svdvals(sys.D)[0]
        if dinf > best:
            best, best_w = dinf, np.inf
    if return_frequency:
        return float(best), float(best_w)
    return float(best)
