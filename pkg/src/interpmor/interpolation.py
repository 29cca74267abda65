"""Tangential interpolation bases and Petrov-Galerkin projection."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from interpmor._linalg import (EPS, ShiftedSolver, conjugate_partners, pair_transform,
                               real_span)
from interpmor.errors import RankCollapse, SingularPencil, SingularReducedPencil, SingularShift
from interpmor.lti import DescriptorSystem

#: singular values below RANK_TOL * sigma_max are dropped when orthogonalizing
RANK_TOL = 1e-12


def _points(x):
    return np.atleast_1d(np.array(x, dtype=complex)).ravel()


def _as_rows(d, k):
    d = np.array(d, dtype=complex)
    if k == 0:
        return d.reshape(0, d.shape[-1] if d.ndim == 2 else 0)
    return d.reshape(k, -1)


def _orders(o, k):
    o = np.full(k, 1, dtype=int) if o is None else np.atleast_1d(np.asarray(o, dtype=int))
    if o.size == 1 and k != 1:
        o = np.full(k, int(o[0]))
    if o.shape != (k,) or np.any(o < 1):
        raise ValueError("orders must be positive integers, one per point")
    return o


@dataclass(frozen=True, eq=False)
class TangentData:
    """Right/left interpolation points with their tangent directions.

    Directions are stored row-wise: ``right_dirs[i]`` is the m-vector
    attached to ``right_points[i]``.  Orders above one request derivative
    chains (Hermite-type conditions) at that point.  Both point sets must
    be closed under conjugation together with their directions.
    """

    right_points: np.ndarray
    right_dirs: np.ndarray
    left_points: np.ndarray
    left_dirs: np.ndarray
    right_orders: np.ndarray = None
    left_orders: np.ndarray = None
    right_partner: np.ndarray = field(init=False, repr=False)
    left_partner: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rp, lp = _points(self.right_points), _points(self.left_points)
        rd = _as_rows(self.right_dirs, rp.size)
        ld = _as_rows(self.left_dirs, lp.size)
        for name, d in (("right_dirs", rd), ("left_dirs", ld)):
            if d.size and np.any(np.linalg.norm(d, axis=1) == 0):
                raise ValueError(f"{name} contains a zero direction")
        ro, lo = _orders(self.right_orders, rp.size), _orders(self.left_orders, lp.size)
        rpart = conjugate_partners(rp, rd)
        lpart = conjugate_partners(lp, ld)
        if np.any(ro != ro[rpart]) or np.any(lo != lo[lpart]):
            raise ValueError("conjugate points must carry equal orders")
        # snap conjugate partners so the data is exactly closed
        for pts, d, part in ((rp, rd, rpart), (lp, ld, lpart)):
            for i, j in enumerate(part):
                if i == j:
                    pts[i] = pts[i].real
                    d[i] = d[i].real
                elif i < j:
                    pts[j] = np.conj(pts[i])
                    d[j] = np.conj(d[i])
        for name, val in (("right_points", rp), ("right_dirs", rd), ("left_points", lp),
                          ("left_dirs", ld), ("right_orders", ro), ("left_orders", lo),
                          ("right_partner", rpart), ("left_partner", lpart)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def bitangential(cls, points, right_dirs=None, left_dirs=None, orders=None):
        """Data with coinciding right and left points (``sigma_i = mu_i``)."""
        pts = _points(points)
        ones = np.ones((pts.size, 1))
        rd = ones if right_dirs is None else right_dirs
        ld = ones if left_dirs is None else left_dirs
        return cls(pts, rd, pts.copy(), ld, orders, orders)

    @property
    def n_right(self):
        return int(self.right_orders.sum())

    @property
    def n_left(self):
        return int(self.left_orders.sum())

    def to_dict(self):
        def pts(z):
            return [[float(v.real), float(v.imag)] for v in z]

        def dirs(d):
            return [[[float(v.real), float(v.imag)] for v in row] for row in d]

        return {
            "right_points": pts(self.right_points), "right_dirs": dirs(self.right_dirs),
            "right_orders": [int(o) for o in self.right_orders],
            "left_points": pts(self.left_points), "left_dirs": dirs(self.left_dirs),
            "left_orders": [int(o) for o in self.left_orders],
        }

    @classmethod
    def from_dict(cls, d):
        def pts(v):
            return np.array([complex(a, b) for a, b in v], dtype=complex)

        def dirs(v, k):
            if not v:
                return np.zeros((k, 0), dtype=complex)
            return np.array([[complex(a, b) for a, b in row] for row in v], dtype=complex)

        rp, lp = pts(d["right_points"]), pts(d["left_points"])
        return cls(rp, dirs(d["right_dirs"], rp.size), lp, dirs(d["left_dirs"], lp.size),
                   d.get("right_orders"), d.get("left_orders"))


def _chain_partners(partner, orders):
    """Column partner map for bases made of per-point chains."""
    starts = np.concatenate([[0], np.cumsum(orders)[:-1]])
    out = np.empty(int(np.sum(orders)), dtype=int)
    for i, j in enumerate(partner):
        for k in range(orders[i]):
            out[starts[i] + k] = starts[j] + k
    return out


def _chain_basis(E, A, rhs, points, orders, trans):
    cols = []
    EE = E.T if trans else E
    for s, d, N in zip(points, rhs, orders):
        try:
            solver = ShiftedSolver(E, A, s, error=SingularShift)
        except SingularShift:
            raise SingularShift(complex(s)) from None
        v = solver.solve(d, trans=trans)
        cols.append(v)
        for _ in range(N - 1):
            v = solver.solve(EE @ v, trans=trans)
            cols.append(v)
    if not cols:
        return np.zeros((A.shape[0], 0), dtype=complex)
    return np.column_stack(cols)


def build_right_basis(sys, data):
    """Raw complex right basis, one column per point and chain order.

    Column ``k`` of the chain at ``sigma`` is ``[(sigma E - A)^{-1} E]^k
    (sigma E - A)^{-1} B r``.

    Raises
    ------
    SingularShift
        If ``sigma E - A`` is singular at some point.
    """
    rhs = data.right_dirs @ sys.B.T
    return _chain_basis(sys.E, sys.A, rhs, data.right_points, data.right_orders, trans=False)


def build_left_basis(sys, data):
    """Raw complex left basis built from transposed (not conjugated) solves."""
    rhs = data.left_dirs @ sys.C
    return _chain_basis(sys.E, sys.A, rhs, data.left_points, data.left_orders, trans=True)


def realify_and_orthogonalize(Vc, rtol=RANK_TOL):
    """Orthonormal real basis for the span of the real and imaginary parts.

    Directions whose singular value falls below ``rtol * sigma_max`` are
    dropped, so the returned column count is the numerical rank.

    Raises
    ------
    RankCollapse
        If nothing survives the truncation.
    """
    Q = real_span(Vc, rtol)
    if Q.shape[1] == 0:
        raise RankCollapse("basis has numerical rank zero")
    return Q


def realify_pairs(X, partner):
    """Real matrix ``X @ Q`` for conjugate-closed columns of `X`.

    Unlike :func:`realify_and_orthogonalize` this keeps the column count and
    is an exact unitary change of basis.
    """
    Q = pair_transform(partner)
    Y = X @ Q
    return np.real(Y), Q


def petrov_galerkin_reduce(sys, V, W, tol=None, check=True):
    """Project ``sys`` onto ``Ran(V)`` along the orthogonal complement of ``Ran(W)``.

    Returns the system ``(W^T E V, W^T A V, W^T B, C V, D)``.

    Raises
    ------
    SingularReducedPencil
        If ``W^T E V`` is numerically singular (skipped when `check` is
        false, as needed for descriptor models with an infinite part).
    """
    V, W = np.asarray(V), np.asarray(W)
    if V.shape != W.shape or V.shape[0] != sys.n:
        raise ValueError(f"bases must both be {sys.n} x r, got {V.shape} and {W.shape}")
    Er = W.T @ sys.E @ V
    if check:
        _check_reduced(Er, tol)
    return DescriptorSystem(W.T @ sys.A @ V, W.T @ sys.B, sys.C @ V, sys.D, Er)


def _check_reduced(Er, tol=None):
    r = Er.shape[0]
    if r == 0:
        return
    sv = spla.svdvals(Er)
    tol = r * np.finfo(float).eps if tol is None else tol
    if sv[0] == 0 or sv[-1] <= tol * sv[0]:
        raise SingularReducedPencil(f"W^T E V is singular (sigma_min/sigma_max = "
                                    f"{sv[-1] / sv[0] if sv[0] else 0:.2e})")


def interpolatory_reduce(sys, data, orthogonalize=True):
    """Interpolatory reduced model from tangent data.

    With `orthogonalize` the real bases are orthonormalized (rank-revealing);
    otherwise the exact pairing transform realifies the raw bases.
    """
    Vc, Wc = build_right_basis(sys, data), build_left_basis(sys, data)
    if orthogonalize:
        V, W = realify_and_orthogonalize(Vc), realify_and_orthogonalize(Wc)
        if V.shape[1] != W.shape[1]:
            raise RankCollapse(f"right and left bases have different ranks "
                               f"({V.shape[1]} vs {W.shape[1]})")
    else:
        V, _ = realify_pairs(Vc, _chain_partners(data.right_partner, data.right_orders))
        W, _ = realify_pairs(Wc, _chain_partners(data.left_partner, data.left_orders))
    return petrov_galerkin_reduce(sys, V, W)


def reduce_with_feedthrough(sys, data, D_r):
    """Tangential interpolant with prescribed feedthrough ``D_r``.

    Requires equally many right and left points, all of order one.  With
    ``Dt = D_r - D`` the reduced matrices are ``A_r = W^T A V + L^T Dt R``,
    ``B_r = W^T B - L^T Dt`` and ``C_r = C V - Dt R`` where the columns of R
    and L are the right and left directions.  The result interpolates
    ``H(sigma_i) r_i`` and ``l_i^T H(mu_i)``.
    """
    if np.any(data.right_orders != 1) or np.any(data.left_orders != 1):
        raise ValueError("feedthrough-modified reduction supports first-order data only")
    if data.right_points.size != data.left_points.size:
        raise ValueError("need equally many right and left points")
    D_r = np.asarray(D_r, dtype=float).reshape(sys.p, sys.m)
    Dt = D_r - sys.D
    Vc, Wc = build_right_basis(sys, data), build_left_basis(sys, data)
    Qr = pair_transform(data.right_partner)
    Ql = pair_transform(data.left_partner)
    V = np.real(Vc @ Qr)
    R = np.real(data.right_dirs.T @ Qr)
    W = np.real(Wc @ Ql.conj())
    L = np.real(data.left_dirs.T @ Ql.conj())
    Er = W.T @ sys.E @ V
    _check_reduced(Er)
    A0, shift = W.T @ sys.A @ V, L.T @ Dt @ R
    Ar = A0 + shift
    Br = W.T @ sys.B - L.T @ Dt
    Cr = sys.C @ V - Dt @ R
    # the feedthrough shift can move a reduced pole onto an interpolation point
    for s in np.concatenate([data.right_points, data.left_points]):
        # LU conditioning misses a pencil that is small only through cancellation
        scale = abs(s) * np.linalg.norm(Er, 2) + np.linalg.norm(A0, 2) + np.linalg.norm(shift, 2)
        try:
            ShiftedSolver(Er, Ar, s)
            if np.linalg.svd(s * Er - Ar, compute_uv=False)[-1] <= 1e3 * EPS * scale:
                raise SingularPencil(s)
        except SingularPencil:
            raise SingularReducedPencil(
                f"reduced pencil is singular at interpolation point {complex(s)!r}; "
                "choose another D_r") from None
    return DescriptorSystem(Ar, Br, Cr, D_r, Er)


# -- verification ------------------------------------------------------------


def transfer_derivatives(obj, s, kmax):
    """``[H(s), ..., H^{(kmax)}(s)]`` for any supported evaluator."""
    if hasattr(obj, "transfer_derivatives"):
        return obj.transfer_derivatives(s, kmax)
    if kmax == 0:
        return [obj.transfer(s)]
    if kmax == 1:
        return list(obj.transfer_and_derivative(s))
    raise TypeError(f"{type(obj).__name__} provides at most first derivatives")


@dataclass
class InterpolationReport:
    """Normalized interpolation residuals.

    Each entry is ``(point, derivative_order, residual)``; the residual is
    ``||full - reduced|| / ||full||`` (absolute when the full quantity is 0).
    """

    right: list
    left: list
    bitangential: list

    @property
    def max_residual(self):
        vals = [r for *_, r in self.right + self.left + self.bitangential]
        return max(vals, default=0.0)

    def passed(self, tol):
        return self.max_residual < tol

    def to_dict(self):
        def conv(rows):
            return [{"point": [float(np.real(s)), float(np.imag(s))], "order": int(k),
                     "residual": float(r)} for s, k, r in rows]
        return {"right": conv(self.right), "left": conv(self.left),
                "bitangential": conv(self.bitangential), "max_residual": float(self.max_residual)}


def _rel(full, red):
    full, red = np.asarray(full), np.asarray(red)
    nf = np.linalg.norm(full)
    err = np.linalg.norm(full - red)
    return float(err / nf) if nf > 0 else float(err)


def verify_interpolation(full, reduced, data, point_tol=1e-12):
    """Residuals of the tangential conditions implied by `data`.

    Right conditions ``H^{(k)}(sigma) r`` for ``k < N``, left conditions
    ``l^T H^{(k)}(mu)`` for ``k < M`` and, whenever a right and a left point
    coincide, bitangential conditions ``l^T H^{(k)}(sigma) r`` for
    ``k <= N + M - 1``.
    """
    right, left, bitan = [], [], []
    for s, r, N in zip(data.right_points, data.right_dirs, data.right_orders):
        Hf, Hr = transfer_derivatives(full, s, N - 1), transfer_derivatives(reduced, s, N - 1)
        for k in range(N):
            right.append((s, k, _rel(Hf[k] @ r, Hr[k] @ r)))
    for s, l, M in zip(data.left_points, data.left_dirs, data.left_orders):
        Hf, Hr = transfer_derivatives(full, s, M - 1), transfer_derivatives(reduced, s, M - 1)
        for k in range(M):
            left.append((s, k, _rel(l @ Hf[k], l @ Hr[k])))
    scale = max(np.max(np.abs(data.right_points), initial=0.0), 1.0)
    for s, r, N in zip(data.right_points, data.right_dirs, data.right_orders):
        for mu, l, M in zip(data.left_points, data.left_dirs, data.left_orders):
            if abs(s - mu) > point_tol * scale:
                continue
            K = N + M - 1
            Hf, Hr = transfer_derivatives(full, s, K), transfer_derivatives(reduced, s, K)
            for k in range(1, K + 1):
                bitan.append((s, k, _rel(l @ Hf[k] @ r, l @ Hr[k] @ r)))
    return InterpolationReport(right, left, bitan)
