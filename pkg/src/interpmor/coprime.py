"""Generalized coprime systems ``H(s) = C(s) K(s)^{-1} B(s) + D``.

Each of ``K``, ``B`` and ``C`` is a sum of constant matrices scaled by scalar
functions of ``s``: powers ``s^k`` or delays ``exp(-tau s)``.  This covers
first-order descriptor systems, higher-order ODEs and retarded delay systems.
"""

from collections import Counter
from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from interpmor._linalg import LUSolver
from interpmor.errors import NotADelaySystem, RankCollapse, SingularK, SingularReducedK
from interpmor.interpolation import _chain_partners, realify_and_orthogonalize, realify_pairs


@dataclass(frozen=True)
class ScalarSFunction:
    """Scalar factor ``s^k`` (``kind="power"``) or ``exp(-tau s)`` (``kind="delay"``)."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind == "power":
            if int(self.param) != self.param or self.param < 0:
                raise ValueError("power must be a nonnegative integer")
            object.__setattr__(self, "param", int(self.param))
        elif self.kind == "delay":
            if not self.param > 0:
                raise ValueError("delay must be positive")
            object.__setattr__(self, "param", float(self.param))
        else:
            raise ValueError(f"unknown s-function kind {self.kind!r}")

    @classmethod
    def power(cls, k):
        return cls("power", k)

    @classmethod
    def delay(cls, tau):
        return cls("delay", tau)

    def derivative(self, s, order=0):
        """``d^order/ds^order`` of the function at `s`."""
        if self.kind == "power":
            k = self.param
            if order > k:
                return 0.0
            return factorial(k) // factorial(k - order) * s ** (k - order)
        tau = self.param
        return (-tau) ** order * np.exp(-tau * s)

    def __call__(self, s):
        return self.derivative(s, 0)

    def __str__(self):
        return f"s^{self.param}" if self.kind == "power" else f"exp(-{self.param:g}s)"


def _terms(terms, rows=None, cols=None, name="terms"):
    out = []
    for f, M in terms:
        if not isinstance(f, ScalarSFunction):
            f = ScalarSFunction(*f)
        M = np.array(M, dtype=float)
        if M.ndim != 2:
            raise ValueError(f"{name} matrices must be two-dimensional")
        if (rows is not None and M.shape[0] != rows) or (cols is not None and M.shape[1] != cols):
            raise ValueError(f"{name} matrix has shape {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ValueError(f"{name} contains NaN or Inf entries")
        M.setflags(write=False)
        out.append((f, M))
    if not out:
        raise ValueError(f"{name} must contain at least one term")
    return tuple(out)


def _combine(terms, s, order=0):
    f, M = terms[0]
    acc = f.derivative(s, order) * M
    for f, M in terms[1:]:
        acc = acc + f.derivative(s, order) * M
    return acc


class CoprimeSystem:
    """Transfer function ``C(s) K(s)^{-1} B(s) + D`` with term-wise structure.

    Parameters
    ----------
    K_terms, B_terms, C_terms
        Sequences of ``(ScalarSFunction, matrix)`` pairs; a plain
        ``(kind, param)`` tuple is accepted in place of the function.
    D
        Constant p x m feedthrough (zero if omitted).
    """

    def __init__(self, K_terms, B_terms, C_terms, D=None):
        K_terms = _terms(K_terms, name="K")
        n = K_terms[0][1].shape[0]
        self.K_terms = _terms(K_terms, n, n, "K")
        self.B_terms = _terms(B_terms, n, None, "B")
        self.C_terms = _terms(C_terms, None, n, "C")
        self.n = n
        self.m = self.B_terms[0][1].shape[1]
        self.p = self.C_terms[0][1].shape[0]
        for name, terms, shape in (("B", self.B_terms, (n, self.m)), ("C", self.C_terms, (self.p, n))):
            if any(M.shape != shape for _, M in terms):
                raise ValueError(f"{name} terms have inconsistent shapes")
        D = np.zeros((self.p, self.m)) if D is None else np.array(D, dtype=float).reshape(self.p, self.m)
        D.setflags(write=False)
        self.D = D

    def __repr__(self):
        return (f"CoprimeSystem(n={self.n}, m={self.m}, p={self.p}, "
                f"K=[{', '.join(str(f) for f, _ in self.K_terms)}])")

    @classmethod
    def from_descriptor(cls, sys):
        """``K(s) = s E - A`` with constant ``B`` and ``C``."""
        return cls([(ScalarSFunction.power(1), sys.E), (ScalarSFunction.power(0), -sys.A)],
                   [(ScalarSFunction.power(0), sys.B)], [(ScalarSFunction.power(0), sys.C)], sys.D)

    @classmethod
    def delay(cls, E, A0, A1, B, C, tau, D=None):
        """Retarded system ``K(s) = s E - A0 - exp(-tau s) A1``."""
        return cls([(ScalarSFunction.power(1), E), (ScalarSFunction.power(0), -np.asarray(A0)),
                    (ScalarSFunction.delay(tau), -np.asarray(A1))],
                   [(ScalarSFunction.power(0), B)], [(ScalarSFunction.power(0), C)], D)

    @property
    def tags(self):
        """Multiset of s-function tags per operator, for structure comparisons."""
        return {name: Counter(f for f, _ in terms)
                for name, terms in (("K", self.K_terms), ("B", self.B_terms), ("C", self.C_terms))}

    def K(self, s, order=0):
        return _combine(self.K_terms, s, order)

    def B(self, s, order=0):
        return _combine(self.B_terms, s, order)

    def C(self, s, order=0):
        return _combine(self.C_terms, s, order)

    def _max_order(self, terms):
        return max((f.param if f.kind == "power" else np.inf) for f, _ in terms)

    def factor(self, s):
        return LUSolver(self.K(s), s, SingularK)

    def check_regular_at(self, s):
        """Raise :class:`SingularReducedK` if ``K(s)`` is singular."""
        try:
            LUSolver(self.K(s), s)
        except Exception:
            raise SingularReducedK(f"reduced K_r(s) is singular at s = {complex(s)!r}") from None

    def resolvent_chain(self, s, kmax, trans=False, solver=None):
        """Derivatives ``X^{(i)}(s)``, ``i <= kmax``, of ``X = K^{-1} B``.

        With `trans`, of ``K^{-T} C^T`` instead.  Uses
        ``K X^{(i)} = B^{(i)} - sum_{j>=1} binom(i, j) K^{(j)} X^{(i-j)}``
        with a single factorization of ``K(s)``.
        """
        solver = solver or self.factor(s)
        rhs_fn = (lambda k: self.C(s, k).T) if trans else (lambda k: self.B(s, k))
        kmaxK = self._max_order(self.K_terms)
        Kd = [self.K(s, j) for j in range(1, kmax + 1)]
        if trans:
            Kd = [M.T for M in Kd]
        X = []
        for i in range(kmax + 1):
            rhs = rhs_fn(i)
            for j in range(1, i + 1):
                if j > kmaxK:
                    break
                rhs = rhs - comb(i, j) * (Kd[j - 1] @ X[i - j])
            X.append(solver.solve(rhs, trans=trans))
        return X

    def transfer_derivatives(self, s, kmax):
        """``[H(s), H'(s), ..., H^{(kmax)}(s)]`` by the product rule."""
        X = self.resolvent_chain(s, kmax)
        Cd = [self.C(s, j) for j in range(kmax + 1)]
        out = []
        for k in range(kmax + 1):
            Hk = sum(comb(k, j) * (Cd[j] @ X[k - j]) for j in range(k + 1))
            out.append(Hk + self.D if k == 0 else Hk)
        return out

    def transfer(self, s):
        return self.transfer_derivatives(s, 0)[0]

    def transfer_and_derivative(self, s):
        H, dH = self.transfer_derivatives(s, 1)
        return H, dH

    def project(self, V, W):
        """Term-wise Petrov-Galerkin projection; the s-functions are kept."""
        return CoprimeSystem([(f, (W.T @ M) @ V) for f, M in self.K_terms],
                             [(f, W.T @ M) for f, M in self.B_terms],
                             [(f, M @ V) for f, M in self.C_terms], self.D)

    def to_dict_terms(self):
        return {name: [(f.kind, f.param, M) for f, M in terms]
                for name, terms in (("K", self.K_terms), ("B", self.B_terms), ("C", self.C_terms))}


def coprime_eval(sys, s, derivative=False):
    """``H(s)``, or ``(H(s), H'(s))`` when `derivative` is set.

    Raises
    ------
    SingularK
        If ``K(s)`` is numerically singular.
    """
    return sys.transfer_and_derivative(s) if derivative else sys.transfer(s)


def coprime_bases(sys, data):
    """Raw complex bases with derivative chains ``D^i[K^{-1}B] r`` and ``D^i[K^{-T}C^T] l``."""
    cols_v, cols_w = [], []
    for s, r, N in zip(data.right_points, data.right_dirs, data.right_orders):
        cols_v += [X @ r for X in sys.resolvent_chain(s, N - 1)]
    for s, l, M in zip(data.left_points, data.left_dirs, data.left_orders):
        cols_w += [X @ l for X in sys.resolvent_chain(s, M - 1, trans=True)]

    def stack(cols):
        return np.column_stack(cols) if cols else np.zeros((sys.n, 0), dtype=complex)
    return stack(cols_v), stack(cols_w)


def coprime_reduce(sys, data, orthogonalize=True):
    """Structure-preserving interpolatory reduction of a coprime system.

    The reduced model keeps every s-function of the original and satisfies
    the tangential conditions of `data` (Hermite-type for coinciding points).

    Raises
    ------
    SingularK
        If ``K`` is singular at an interpolation point.
    SingularReducedK
        If the reduced ``K_r`` is singular at an interpolation point.
    """
    Vc, Wc = coprime_bases(sys, data)
    if orthogonalize:
        V, W = realify_and_orthogonalize(Vc), realify_and_orthogonalize(Wc)
        if V.shape[1] != W.shape[1]:
            raise RankCollapse(f"right and left bases have different ranks "
                               f"({V.shape[1]} vs {W.shape[1]})")
    else:
        V, _ = realify_pairs(Vc, _chain_partners(data.right_partner, data.right_orders))
        W, _ = realify_pairs(Wc, _chain_partners(data.left_partner, data.left_orders))
    red = sys.project(V, W)
    for s in np.concatenate([data.right_points, data.left_points]):
        red.check_regular_at(s)
    return red


def coprime_project(sys, V, W):
    return sys.project(V, W)


def delay_parts(sys):
    """``(E, A0, A1, tau)`` of ``K(s) = s E - A0 - exp(-tau s) A1``.

    Raises
    ------
    NotADelaySystem
        If the K terms have another structure or B, C depend on s.
    """
    acc = {}
    for f, M in sys.K_terms:
        acc[f] = acc.get(f, 0) + M
    delays = [f for f in acc if f.kind == "delay"]
    powers = {f.param for f in acc if f.kind == "power"}
    if len(delays) != 1 or not powers <= {0, 1}:
        raise NotADelaySystem("K(s) must be s E - A0 - exp(-tau s) A1 with a single delay")
    if any(f != ScalarSFunction.power(0) for f, _ in sys.B_terms + sys.C_terms):
        raise NotADelaySystem("B and C must be constant")
    zero = np.zeros((sys.n, sys.n))
    E = acc.get(ScalarSFunction.power(1), zero)
    A0 = -acc.get(ScalarSFunction.power(0), zero)
    A1 = -acc[delays[0]]
    return E, A0, A1, delays[0].param


def pade2_delay_baseline(sys):
    """Rational model obtained by replacing ``exp(-tau s)`` with its (2,2) Pade approximant.

    The result is the polynomial system
    ``(12 C + 6 tau s C + tau^2 s^2 C)(N s^3 + M s^2 + G s + K)^{-1} B`` with
    ``N = tau^2 E``, ``M = 6 tau E - tau^2 (A0 + A1)``,
    ``G = 12 E + 6 tau (A1 - A0)`` and ``K = -12 (A0 + A1)``.
    """
    E, A0, A1, tau = delay_parts(sys)
    B = sum(M for _, M in sys.B_terms)
    C = sum(M for _, M in sys.C_terms)
    P = ScalarSFunction.power
    K_terms = [(P(3), tau ** 2 * E), (P(2), 6 * tau * E - tau ** 2 * (A0 + A1)),
               (P(1), 12 * E + 6 * tau * (-A0 + A1)), (P(0), -12 * (A0 + A1))]
    C_terms = [(P(0), 12 * C), (P(1), 6 * tau * C), (P(2), tau ** 2 * C)]
    return CoprimeSystem(K_terms, [(P(0), B)], C_terms, sys.D)


def delay_family(n, kappa=3.0, tau=0.1):
    """Benchmark delay system with tridiagonal coupling.

    ``E = kappa I + T``, ``A0 = (3/tau)(T - kappa I)``, ``A1 = (1/tau)(T - kappa I)``
    where T has ones on both off-diagonals and in the two corner diagonal
    entries; ``B = C^T = e_1``.  (The vector of ones is an eigenvector of
    T, so it would make the transfer function first order.)
    """
    T = np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    T[0, 0] = T[-1, -1] = 1.0
    I = np.eye(n)
    E = kappa * I + T
    A0 = 3.0 / tau * (T - kappa * I)
    A1 = 1.0 / tau * (T - kappa * I)
    b = np.zeros((n, 1))
    b[0] = 1.0
    return CoprimeSystem.delay(E, A0, A1, b, b.T, tau)
