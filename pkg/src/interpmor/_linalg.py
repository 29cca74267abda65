"""Small dense linear-algebra helpers shared across modules."""

import warnings

import numpy as np
import scipy.linalg as spla

from interpmor.errors import SingularPencil

EPS = np.finfo(float).eps


class LUSolver:
    """LU factorization of a square matrix reused for several right-hand sides.

    Parameters
    ----------
    M
        Square matrix to factor.
    point
        Label (usually the complex frequency) attached to the exception.
    error
        Exception class raised when `M` is numerically singular.
    """

    def __init__(self, M, point=None, error=SingularPencil):
        self.s = point
        self.n = M.shape[0]
        self.dtype = M.dtype
        if self.n == 0:
            self._lu = None
            return
        anorm = np.linalg.norm(M, 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spla.LinAlgWarning)
            lu, piv = spla.lu_factor(M, check_finite=False)
        if anorm == 0 or not np.all(np.isfinite(lu)):
            raise error(point)
        gecon, = spla.get_lapack_funcs(("gecon",), (lu,))
        rcond, _ = gecon(lu, anorm, norm="1")
        if not rcond > self.n * EPS:
            raise error(point)
        self.rcond = rcond
        self._lu = (lu, piv)

    def solve(self, rhs, trans=False):
        """Solve ``M x = rhs`` or, with `trans`, ``M^T x = rhs``.

        The transpose is the plain transpose, not the conjugate transpose.
        """
        rhs = np.asarray(rhs)
        if self.n == 0:
            return np.zeros(rhs.shape, dtype=np.result_type(rhs, self.dtype))
        return spla.lu_solve(self._lu, rhs, trans=1 if trans else 0, check_finite=False)


class ShiftedSolver(LUSolver):
    """:class:`LUSolver` for the shifted pencil ``s*E - A``."""

    def __init__(self, E, A, s, error=SingularPencil):
        super().__init__(s * E - A, s, error)


def conjugate_partners(points, dirs=None, rtol=1e-10):
    """Index map pairing every point with its complex conjugate.

    Returns an integer array ``partner`` with ``points[partner[i]] ==
    conj(points[i])`` (up to `rtol`), so real points are their own partner.
    Direction rows in `dirs`, if given, must be conjugate as well.

    Raises
    ------
    ValueError
        If the set is not closed under conjugation.
    """
    points = np.asarray(points, dtype=complex)
    r = len(points)
    scale = max(np.max(np.abs(points), initial=0.0), 1.0)
    partner = -np.ones(r, dtype=int)
    for i in range(r):
        if partner[i] >= 0:
            continue
        z = points[i]
        if abs(z.imag) <= rtol * scale:
            partner[i] = i
            continue
        candidates = [j for j in range(r) if partner[j] < 0 and j != i
                      and abs(points[j] - np.conj(z)) <= rtol * scale]
        if dirs is not None:
            d = np.asarray(dirs)
            dscale = max(np.linalg.norm(d[i]), 1e-300)
            candidates = [j for j in candidates
                          if np.linalg.norm(d[j] - np.conj(d[i])) <= 1e-8 * dscale]
        if not candidates:
            raise ValueError(f"point {z!r} has no conjugate partner")
        j = candidates[0]
        partner[i], partner[j] = j, i
    if dirs is not None:
        d = np.asarray(dirs)
        for i in np.flatnonzero(partner == np.arange(r)):
            if np.linalg.norm(d[i].imag) > 1e-8 * max(np.linalg.norm(d[i]), 1e-300):
                raise ValueError(f"real point {points[i]!r} carries a complex direction")
    return partner


def pair_transform(partner):
    """Unitary ``Q`` such that ``X @ Q`` is real whenever ``conj(X) = X[:, partner]``.

    Real (self-paired) columns are kept; a conjugate pair ``(x, conj(x))`` is
    mapped to ``sqrt(2) * (Re x, -Im x)``.
    """
    r = len(partner)
    Q = np.zeros((r, r), dtype=complex)
    done = set()
    col = 0
    for i in range(r):
        if i in done:
            continue
        j = partner[i]
        if j == i:
            Q[i, col] = 1.0
            col += 1
        else:
            Q[i, col] = Q[j, col] = 1 / np.sqrt(2)
            Q[i, col + 1] = 1j / np.sqrt(2)
            Q[j, col + 1] = -1j / np.sqrt(2)
            col += 2
        done.update((i, j))
    return Q


def real_span(V, rtol=1e-12):
    """Orthonormal real basis of ``span{Re V, Im V}`` with rank truncation.

    Singular values below ``rtol * sigma_max`` are dropped.
    """
    V = np.asarray(V)
    if np.iscomplexobj(V):
        M = np.hstack([V.real, V.imag])
    else:
        M = V.astype(float)
    if M.shape[1] == 0:
        return M[:, :0]
    U, s, _ = spla.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    k = int(np.sum(s > rtol * s[0]))
    return U[:, :k]


def as_matrix(x, rows=None, cols=None, name="matrix", dtype=float):
    x = np.array(x, dtype=dtype)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        if rows == 1:
            x = x.reshape(1, -1)
        else:
            x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {x.shape}")
    if rows is not None and x.shape[0] != rows:
        raise ValueError(f"{name} has {x.shape[0]} rows, expected {rows}")
    if cols is not None and x.shape[1] != cols:
        raise ValueError(f"{name} has {x.shape[1]} columns, expected {cols}")
    return x
