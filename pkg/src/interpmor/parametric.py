"""Affine-parametric coprime systems and their interpolatory reduction.

Each operator is a sum of term groups ``k_i(p) K^[i](s)``; the groups
``K^[i](s)`` are coprime term lists and the scalar coefficients ``k_i`` are
drawn from a small tagged family so that their parameter gradients are
available in closed form.
"""

from dataclasses import dataclass

import numpy as np

from interpmor._linalg import LUSolver
from interpmor.coprime import CoprimeSystem, ScalarSFunction, _terms, coprime_bases
from interpmor.errors import RankCollapse, SingularK, SingularReducedK
from interpmor.interpolation import TangentData, _rel, realify_and_orthogonalize


@dataclass(frozen=True)
class CoefficientFunction:
    """Scalar parameter function ``k(p)``.

    ``kind`` is one of

    * ``"constant"``: ``data = c``
    * ``"coordinate"``: ``data = j``, giving ``p[j]``
    * ``"polynomial"``: ``data = ((c, (e_1, ..., e_nu)), ...)``, a sum of
      monomials ``c * prod p_j^{e_j}``
    * ``"exp_affine"``: ``data = (a0, (a_1, ..., a_nu))``, giving
      ``exp(a0 + a . p)``
    """

    kind: str
    data: object

    def __post_init__(self):
        k, d = self.kind, self.data
        if k == "constant":
            d = float(d)
        elif k == "coordinate":
            if int(d) != d or d < 0:
                raise ValueError("coordinate index must be a nonnegative integer")
            d = int(d)
        elif k == "polynomial":
            d = tuple((float(c), tuple(int(e) for e in exps)) for c, exps in d)
            if any(e < 0 for _, exps in d for e in exps):
                raise ValueError("polynomial exponents must be nonnegative")
        elif k == "exp_affine":
            a0, a = d
            d = (float(a0), tuple(float(x) for x in a))
        else:
            raise ValueError(f"unknown coefficient kind {k!r}")
        object.__setattr__(self, "data", d)

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", c)

    @classmethod
    def coordinate(cls, j):
        return cls("coordinate", j)

    def min_dimension(self):
        """Smallest parameter dimension the function can be evaluated at."""
        if self.kind == "coordinate":
            return self.data + 1
        if self.kind == "polynomial":
            return max((len(e) for _, e in self.data), default=0)
        if self.kind == "exp_affine":
            return len(self.data[1])
        return 0

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "constant":
            return self.data
        if self.kind == "coordinate":
            return float(p[self.data])
        if self.kind == "polynomial":
            return float(sum(c * np.prod(p[:len(e)] ** np.array(e, dtype=float))
                             for c, e in self.data))
        a0, a = self.data
        return float(np.exp(a0 + np.dot(a, p[:len(a)])))

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        g = np.zeros(p.size)
        if self.kind == "coordinate":
            g[self.data] = 1.0
        elif self.kind == "polynomial":
            for c, e in self.data:
                e = np.array(e, dtype=float)
                for j in np.flatnonzero(e):
                    ej = e.copy()
                    ej[j] -= 1
                    g[j] += c * e[j] * np.prod(p[:e.size] ** ej)
        elif self.kind == "exp_affine":
            a0, a = self.data
            g[:len(a)] = np.array(a) * self(p)
        return g

    def to_dict(self):
        if self.kind == "polynomial":
            return {"kind": self.kind, "data": [[c, list(e)] for c, e in self.data]}
        if self.kind == "exp_affine":
            return {"kind": self.kind, "data": [self.data[0], list(self.data[1])]}
        return {"kind": self.kind, "data": self.data}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["data"])


def _groups(groups, name):
    out = []
    for coef, terms in groups:
        if coef is None:
            coef = CoefficientFunction.constant(1.0)
        elif not isinstance(coef, CoefficientFunction):
            coef = CoefficientFunction(*coef)
        out.append((coef, _terms(terms, name=name)))
    if not out:
        raise ValueError(f"{name} needs at least one term group")
    return tuple(out)


class ParametricCoprimeSystem:
    """``H(s, p) = C(s, p) K(s, p)^{-1} B(s, p) + D`` with affine structure.

    Parameters
    ----------
    K, B, C
        Sequences of term groups ``(coefficient, terms)``.  `terms` is a
        coprime term list of ``(ScalarSFunction, matrix)`` pairs and
        `coefficient` a :class:`CoefficientFunction` (``None`` means 1).
    nu
        Parameter dimension.
    D
        Constant feedthrough.
    box
        Optional ``(lower, upper)`` bounds; evaluation outside raises
        ``ValueError``.
    """

    def __init__(self, K, B, C, nu, D=None, box=None):
        self.K_groups = _groups(K, "K")
        self.B_groups = _groups(B, "B")
        self.C_groups = _groups(C, "C")
        self.nu = int(nu)
        need = max(c.min_dimension() for c, _ in self.K_groups + self.B_groups + self.C_groups)
        if need > self.nu:
            raise ValueError(f"coefficient functions need {need} parameters, nu = {self.nu}")
        self.D, self.box = None, None
        # validates shapes and fixes n, m, p
        probe = self.at(np.zeros(self.nu), check_box=False, D=D)
        self.n, self.m, self.p = probe.n, probe.m, probe.p
        self.D = probe.D
        if box is not None:
            lo, hi = (np.asarray(b, dtype=float).reshape(self.nu) for b in box)
            if np.any(lo > hi):
                raise ValueError("parameter box has lower > upper")
            box = (lo, hi)
        self.box = box

    def __repr__(self):
        return (f"ParametricCoprimeSystem(n={self.n}, m={self.m}, p={self.p}, nu={self.nu}, "
                f"groups=({len(self.K_groups)}, {len(self.B_groups)}, {len(self.C_groups)}))")

    @property
    def group_counts(self):
        return {"K": len(self.K_groups), "B": len(self.B_groups), "C": len(self.C_groups)}

    def _param(self, p, check_box=True):
        p = np.asarray(p, dtype=float).reshape(-1)
        if p.size != self.nu:
            raise ValueError(f"expected {self.nu} parameters, got {p.size}")
        if check_box and self.box is not None:
            lo, hi = self.box
            if np.any(p < lo) or np.any(p > hi):
                raise ValueError(f"parameter {p.tolist()} lies outside the declared box")
        return p

    def at(self, p, check_box=True, D=None):
        """The coprime system obtained by freezing the parameter at `p`."""
        p = self._param(p, check_box)

        def fold(groups):
            return [(f, c(p) * M) for c, terms in groups for f, M in terms]
        return CoprimeSystem(fold(self.K_groups), fold(self.B_groups), fold(self.C_groups),
                             self.D if D is None else D)

    def _partials(self, groups, s, p):
        """``d/dp_j`` of an operator at ``(s, p)``, as a list over j."""
        out = None
        for coef, terms in groups:
            g = coef.gradient(p)
            if not np.any(g):
                continue
            M = terms[0][0](s) * terms[0][1]
            for f, T in terms[1:]:
                M = M + f(s) * T
            out = [g[j] * M for j in range(self.nu)] if out is None else \
                [out[j] + g[j] * M for j in range(self.nu)]
        return out

    def transfer(self, s, p):
        return self.at(p).transfer(s)

    def evaluate(self, s, p):
        """Value, s-derivative and parameter gradient of ``H`` at ``(s, p)``.

        The gradient has shape ``(nu, p, m)`` and follows from
        ``dH = dC X - Y dK X + Y dB`` with ``X = K^{-1} B`` and
        ``Y = C K^{-1}``.
        """
        p = self._param(p)
        frozen = self.at(p)
        solver = LUSolver(frozen.K(s), s, SingularK)
        X = frozen.resolvent_chain(s, 1, solver=solver)
        Y = solver.solve(frozen.C(s).T, trans=True).T
        C0, C1 = frozen.C(s), frozen.C(s, 1)
        H = C0 @ X[0] + frozen.D
        dH = C1 @ X[0] + C0 @ X[1]
        grad = np.zeros((self.nu, self.p, self.m), dtype=np.result_type(X[0], Y, complex(s)))
        dK = self._partials(self.K_groups, s, p)
        dB = self._partials(self.B_groups, s, p)
        dC = self._partials(self.C_groups, s, p)
        for j in range(self.nu):
            if dK is not None:
                grad[j] -= Y @ (dK[j] @ X[0])
            if dB is not None:
                grad[j] += Y @ dB[j]
            if dC is not None:
                grad[j] += dC[j] @ X[0]
        return ParamEval(H, dH, grad)

    def project(self, V, W):
        """Project every coefficient matrix once; coefficient functions are kept."""
        K = [(c, [(f, (W.T @ M) @ V) for f, M in terms]) for c, terms in self.K_groups]
        B = [(c, [(f, W.T @ M) for f, M in terms]) for c, terms in self.B_groups]
        C = [(c, [(f, M @ V) for f, M in terms]) for c, terms in self.C_groups]
        return ParametricCoprimeSystem(K, B, C, self.nu, self.D, self.box)

    def to_dict_groups(self):
        return {name: [(c, [(f.kind, f.param, M) for f, M in terms]) for c, terms in groups]
                for name, groups in (("K", self.K_groups), ("B", self.B_groups),
                                     ("C", self.C_groups))}


@dataclass
class ParamEval:
    """``H(s, p)``, ``dH/ds`` and the parameter gradient (shape ``(nu, p, m)``)."""

    value: np.ndarray
    ds: np.ndarray
    grad: np.ndarray


def param_eval(sys, s, p):
    """Evaluate ``H``, ``dH/ds`` and ``grad_p H`` at ``(s, p)``.

    Raises
    ------
    SingularK
        If ``K(s, p)`` is numerically singular.
    """
    return sys.evaluate(s, p)


def param_reduce(sys, V, W, probes=()):
    """Reduced parametric model ``W^T K V``, ``W^T B``, ``C V``.

    Every coefficient matrix is projected here, once; evaluating the result
    at a new parameter only assembles r x r quantities.  `probes` lists
    ``(s, p)`` pairs at which ``K_r`` must be nonsingular.

    Raises
    ------
    SingularReducedK
        If ``K_r`` is singular at one of the probes.
    """
    V, W = np.asarray(V), np.asarray(W)
    if V.shape != W.shape or V.shape[0] != sys.n:
        raise ValueError(f"bases must both be {sys.n} x r, got {V.shape} and {W.shape}")
    red = sys.project(V, W)
    for s, p in probes:
        try:
            LUSolver(red.at(p).K(s), s)
        except Exception:
            raise SingularReducedK(f"K_r is singular at s = {complex(s)!r}, "
                                   f"p = {np.asarray(p).tolist()}") from None
    return red


@dataclass(frozen=True, eq=False)
class ParamTangentData:
    """Tangential data attached to parameter points.

    ``data[j]`` holds the frequency points and directions used at the
    parameter point ``param_points[j]``.
    """

    param_points: np.ndarray
    data: tuple

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.param_points, dtype=float))
        if P.shape[0] != len(self.data):
            raise ValueError("one TangentData is needed per parameter point")
        object.__setattr__(self, "param_points", P)
        object.__setattr__(self, "data", tuple(self.data))

    @classmethod
    def grid(cls, freq_points, param_points, m=1, p=1, rng=None):
        """Bitangential data at every (frequency, parameter) pair.

        Directions are ones for SISO systems and random real vectors
        otherwise (``rng`` seeds them).
        """
        param_points = np.atleast_2d(np.asarray(param_points, dtype=float))
        freq_points = np.atleast_1d(freq_points)
        rng = np.random.default_rng(rng)
        data = []
        for _ in param_points:
            k = freq_points.size
            if m == 1 and p == 1:
                rd = ld = None
            else:
                rd, ld = rng.standard_normal((k, m)), rng.standard_normal((k, p))
            data.append(TangentData.bitangential(freq_points, rd, ld))
        return cls(param_points, data)

    def pairs(self):
        """Flat list of ``(sigma, pi, r, l)`` for bitangential points."""
        out = []
        for pi, d in zip(self.param_points, self.data):
            for s, r in zip(d.right_points, d.right_dirs):
                hit = np.flatnonzero(d.left_points == s)
                l = d.left_dirs[hit[0]] if hit.size else None
                out.append((s, pi, r, l))
        return out


@dataclass(frozen=True, eq=False)
class ReductionBases:
    V: np.ndarray
    W: np.ndarray

    @property
    def order(self):
        return self.V.shape[1]


def multipoint_bases(sys, data, orthogonalize=True):
    """Stack ``K(sigma_i, pi_j)^{-1} B(sigma_i, pi_j) r_ij`` (and the left analogues).

    The complex columns are realified per parameter point and the stack is
    rank-truncated by an SVD, which also removes duplicates.  With
    `orthogonalize` false the raw real stack is returned (only valid for
    real data).
    """
    Vs, Ws = [], []
    for pi, d in zip(data.param_points, data.data):
        Vc, Wc = coprime_bases(sys.at(pi), d)
        Vs.append(Vc)
        Ws.append(Wc)
    Vc, Wc = np.hstack(Vs), np.hstack(Ws)
    if not orthogonalize:
        if np.any(Vc.imag) or np.any(Wc.imag):
            raise ValueError("raw bases are complex; use orthogonalize=True")
        return ReductionBases(Vc.real, Wc.real)
    V, W = realify_and_orthogonalize(Vc), realify_and_orthogonalize(Wc)
    if V.shape[1] != W.shape[1]:
        raise RankCollapse(f"right and left bases have different ranks ({V.shape[1]} vs {W.shape[1]})")
    return ReductionBases(V, W)


def parametric_reduce(sys, data):
    """Bases from `data` followed by :func:`param_reduce`, checked at every pair."""
    bases = multipoint_bases(sys, data)
    probes = [(s, pi) for pi, d in zip(data.param_points, data.data)
              for s in np.concatenate([d.right_points, d.left_points])]
    return param_reduce(sys, bases.V, bases.W, probes)


@dataclass
class SensitivityReport:
    """Normalized residuals of the parametric interpolation conditions."""

    right: float
    left: float
    hermite: float
    gradient: float

    @property
    def max_residual(self):
        return max(self.right, self.left, self.hermite, self.gradient)

    def passed(self, tol):
        return self.max_residual < tol

    def to_dict(self):
        return {"right": self.right, "left": self.left, "hermite": self.hermite,
                "gradient": self.gradient, "max_residual": self.max_residual}


def sensitivity_residual(sysF, sysR, sigma, pi, r=None, l=None):
    """Residuals of ``H r``, ``l^T H``, ``l^T H' r`` and ``grad_p l^T H r`` at ``(sigma, pi)``.

    Each is ``||full - reduced|| / ||full||`` (absolute when the full
    quantity vanishes).  Directions default to ones.
    """
    r = np.ones(sysF.m) if r is None else np.asarray(r).reshape(sysF.m)
    l = np.ones(sysF.p) if l is None else np.asarray(l).reshape(sysF.p)
    F, R = sysF.evaluate(sigma, pi), sysR.evaluate(sigma, pi)
    grad_f = np.array([l @ G @ r for G in F.grad])
    grad_r = np.array([l @ G @ r for G in R.grad])
    return SensitivityReport(_rel(F.value @ r, R.value @ r), _rel(l @ F.value, l @ R.value),
                             _rel(l @ F.ds @ r, l @ R.ds @ r), _rel(grad_f, grad_r))


def mass_spring(m1=1.0, m2=1.0, k1=2.0, k2=2.0, box=((0.15, 0.25), (0.25, 0.35))):
    """Two masses joined by spring-dashpot pairs with damping constants as parameters.

    ``K(s, p) = s^2 M + K_s + p_1 s G_1 + p_2 s G_2``, force on the first
    mass, displacement of the second mass as output.  `box` lists the
    range of each parameter.
    """
    power = ScalarSFunction.power
    M = np.diag([m1, m2])
    Ks = np.array([[k1 + k2, -k2], [-k2, k2]])
    G1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    G2 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    coord = CoefficientFunction.coordinate
    K = [(None, [(power(2), M), (power(0), Ks)]),
         (coord(0), [(power(1), G1)]),
         (coord(1), [(power(1), G2)])]
    B = [(None, [(power(0), np.array([[1.0], [0.0]]))])]
    C = [(None, [(power(0), np.array([[0.0, 1.0]]))])]
    lo, hi = np.array(box, dtype=float).T
    return ParametricCoprimeSystem(K, B, C, 2, box=(lo, hi))


__all__ = ["CoefficientFunction", "ParametricCoprimeSystem", "ParamEval", "ParamTangentData",
           "ReductionBases", "SensitivityReport", "param_eval", "param_reduce", "multipoint_bases",
           "parametric_reduce", "sensitivity_residual", "mass_spring"]
