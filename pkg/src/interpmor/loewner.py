"""Loewner realizations from transfer-function samples and TF-IRKA."""

from dataclasses import dataclass

import numpy as np

from interpmor._linalg import ShiftedSolver, pair_transform
from interpmor.errors import DuplicatePoints, EvaluationFailure, SingularLoewnerPencil
from interpmor.h2 import IrkaConfig, run_fixed_point
from interpmor.interpolation import TangentData
from interpmor.lti import DescriptorSystem

#: points closer than this times max|sigma| count as duplicates
DUPLICATE_TOL = 1e-10


class SampledTransfer:
    """Black-box access to ``H(s)`` and ``H'(s)``.

    Parameters
    ----------
    evaluator
        Callable ``s -> (H(s), H'(s))`` returning p x m arrays.
    m, p
        Input and output dimensions; probed at ``s = 1`` when omitted.

    Any object with a ``transfer_and_derivative`` method (descriptor,
    coprime or pole-residue models) can be wrapped with :meth:`of`.
    """

    def __init__(self, evaluator, m=None, p=None):
        self._eval = evaluator
        if m is None or p is None:
            H, _ = self.transfer_and_derivative(1.0)
            p, m = H.shape
        self.m, self.p = int(m), int(p)

    @classmethod
    def of(cls, model):
        if isinstance(model, SampledTransfer):
            return model
        return cls(model.transfer_and_derivative, getattr(model, "m", None),
                   getattr(model, "p", None))

    def transfer_and_derivative(self, s):
        try:
            H, dH = self._eval(s)
        except EvaluationFailure:
            raise
        except Exception as exc:
            raise EvaluationFailure(f"sampler failed at s = {s!r}: {exc}") from exc
        H = np.atleast_2d(np.asarray(H, dtype=complex))
        dH = np.atleast_2d(np.asarray(dH, dtype=complex))
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(dH))):
            raise EvaluationFailure(f"non-finite sample at s = {s!r}")
        return H, dH

    def transfer(self, s):
        return self.transfer_and_derivative(s)[0]


class TabulatedTransfer(SampledTransfer):
    """Samples known only at tabulated points (value and derivative).

    A request at the conjugate of a stored point returns the conjugated
    sample, as is valid for real systems.
    """

    def __init__(self, points, values, derivatives, rtol=1e-12):
        self.points = np.asarray(points, dtype=complex).ravel()
        self.values = np.asarray(values, dtype=complex).reshape(self.points.size, *np.shape(values)[-2:])
        self.derivatives = np.asarray(derivatives, dtype=complex).reshape(self.values.shape)
        self.rtol = rtol
        super().__init__(self._lookup, self.values.shape[2], self.values.shape[1])

    def _lookup(self, s):
        scale = max(abs(s), 1.0)
        d = np.abs(self.points - s)
        k = int(np.argmin(d)) if d.size else -1
        if k >= 0 and d[k] <= self.rtol * scale:
            return self.values[k], self.derivatives[k]
        d = np.abs(self.points - np.conj(s))
        k = int(np.argmin(d)) if d.size else -1
        if k >= 0 and d[k] <= self.rtol * scale:
            return np.conj(self.values[k]), np.conj(self.derivatives[k])
        raise EvaluationFailure(f"no tabulated sample at s = {s!r}")

    def rows(self):
        """Flat rows ``(re s, im s, re/im of H entries, re/im of H' entries)``."""
        out = []
        for s, H, dH in zip(self.points, self.values, self.derivatives):
            row = [s.real, s.imag]
            for X in (H, dH):
                for z in X.ravel():
                    row += [z.real, z.imag]
            out.append(row)
        return out

    @classmethod
    def from_rows(cls, rows, p, m):
        rows = np.asarray(rows, dtype=float)
        k = p * m
        pts = rows[:, 0] + 1j * rows[:, 1]
        H = rows[:, 2:2 + 2 * k:2] + 1j * rows[:, 3:3 + 2 * k:2]
        dH = rows[:, 2 + 2 * k::2] + 1j * rows[:, 3 + 2 * k::2]
        return cls(pts, H.reshape(-1, p, m), dH.reshape(-1, p, m))


@dataclass(frozen=True, eq=False)
class LoewnerRealization:
    """Complex realization ``C (s E - A)^{-1} B`` built from samples."""

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    partner: np.ndarray = None

    @property
    def order(self):
        return self.E.shape[0]

    def transfer_and_derivative(self, s):
        solver = ShiftedSolver(self.E, self.A, s, error=SingularLoewnerPencil)
        X = solver.solve(self.B)
        return self.C @ X, -self.C @ solver.solve(self.E @ X)

    def transfer(self, s):
        return self.transfer_and_derivative(s)[0]

    def to_system(self, tol=1e-8):
        """Equivalent real descriptor system (needs conjugate-closed data)."""
        if self.partner is None:
            raise ValueError("realization data is not closed under conjugation")
        Q = pair_transform(self.partner)
        mats = [Q.conj().T @ self.E @ Q, Q.conj().T @ self.A @ Q, Q.conj().T @ self.B, self.C @ Q]
        for X in mats:
            scale = max(np.max(np.abs(X), initial=0.0), np.finfo(float).tiny)
            if np.max(np.abs(X.imag), initial=0.0) > tol * scale:
                raise ValueError("realization is not real up to tolerance")
        E, A, B, C = (np.real(X) for X in mats)
        return DescriptorSystem(A, B, C, None, E)


def loewner_build(samples, data):
    """Loewner realization interpolating the samples bitangentially.

    For ``i != j`` the entries are divided differences of ``l_i^T H r_j`` and
    ``l_i^T (sH) r_j``; diagonal entries use ``H'(sigma_i)``.  The resulting
    ``H_r`` matches ``H(sigma_i) r_i``, ``l_i^T H(sigma_i)`` and
    ``l_i^T H'(sigma_i) r_i`` at every point.

    The pencil itself is not checked here: data of an order below r gives
    a singular Loewner pencil, which surfaces as
    :class:`SingularLoewnerPencil` when the realization is evaluated.

    Raises
    ------
    DuplicatePoints
        If two points are closer than ``1e-10 * max|sigma|`` or the right and
        left points differ.
    """
    samples = SampledTransfer.of(samples)
    sig = data.right_points
    if sig.size != data.left_points.size or np.any(sig != data.left_points):
        raise DuplicatePoints("Loewner construction needs coinciding right and left points")
    if np.any(data.right_orders != 1) or np.any(data.left_orders != 1):
        raise ValueError("Loewner construction uses first-order data only")
    r = sig.size
    gaps = np.abs(sig[:, None] - sig[None, :]) + np.diag(np.full(r, np.inf))
    scale = max(np.max(np.abs(sig), initial=0.0), np.finfo(float).tiny)
    if r > 1 and gaps.min() < DUPLICATE_TOL * scale:
        raise DuplicatePoints(f"interpolation points are not distinct (gap {gaps.min():.2e})")
    R, L = data.right_dirs, data.left_dirs
    Hs, dHs = zip(*(samples.transfer_and_derivative(s) for s in sig))
    C = np.column_stack([H @ r for H, r in zip(Hs, R)])
    B = np.vstack([l @ H for H, l in zip(Hs, L)])
    # l_i^T H(sigma_i) r_j and l_i^T H(sigma_j) r_j for all pairs
    lHr_row = B @ R.T
    lHr_col = L @ C
    diff = sig[:, None] - sig[None, :]
    np.fill_diagonal(diff, 1.0)
    E = -(lHr_row - lHr_col) / diff
    A = -(sig[:, None] * lHr_row - sig[None, :] * lHr_col) / diff
    for i in range(r):
        d = L[i] @ dHs[i] @ R[i]
        E[i, i] = -d
        A[i, i] = -(L[i] @ Hs[i] @ R[i] + sig[i] * d)
    partner = data.right_partner if np.array_equal(data.right_partner, data.left_partner) else None
    return LoewnerRealization(E, A, B, C, partner)


def _ray_points(r, lo, hi, rng=None):
    """``r`` shifts closed under conjugation on the rays ``w (1 +- i)``."""
    k = r // 2
    if rng is None:
        w = np.logspace(np.log10(lo), np.log10(hi), max(k, 1))[:k]
    else:
        w = np.sort(np.exp(rng.uniform(np.log(lo), np.log(hi), k)))
    pts = np.concatenate([w * (1 + 1j), w * (1 - 1j)])
    if r % 2:
        pts = np.append(pts, np.sqrt(lo * hi))
    return pts


def tf_irka(samples, cfg, freq_range=(0.1, 10.0)):
    """IRKA driven purely by transfer-function samples.

    Each step builds the Loewner realization for the current shifts and
    directions instead of projecting a state-space model.  Without a
    realization the ``"modal"`` strategy is unavailable; ``"modal"`` and
    ``"log"`` both start from conjugate pairs ``w (1 +- i)`` with `w`
    log-spaced over `freq_range` (real starting points see only the
    smooth part of the response and tend to give numerically singular
    Loewner pencils).  ``"random"`` draws `w` log-uniformly instead.
    The default band suits unit-scale dynamics; starting rays far beyond
    every pole see only the ``1/s`` tail and give a singular pencil.
    """
    samples = SampledTransfer.of(samples)
    if isinstance(cfg.init, TangentData):
        data = cfg.init
    else:
        rng = np.random.default_rng(cfg.seed)
        pts = _ray_points(cfg.r, *freq_range, rng=rng if cfg.init == "random" else None)
        if samples.m == 1 and samples.p == 1:
            rd = ld = np.ones((cfg.r, 1))
        else:
            k = cfg.r // 2
            rd = rng.standard_normal((k, samples.m)) + 1j * rng.standard_normal((k, samples.m))
            ld = rng.standard_normal((k, samples.p)) + 1j * rng.standard_normal((k, samples.p))
            rd = np.vstack([rd, rd.conj(), rng.standard_normal((cfg.r % 2, samples.m))])
            ld = np.vstack([ld, ld.conj(), rng.standard_normal((cfg.r % 2, samples.p))])
        data = TangentData.bitangential(pts, rd, ld)
    return run_fixed_point(lambda d: loewner_build(samples, d).to_system(), data, cfg, samples)


__all__ = ["SampledTransfer", "TabulatedTransfer", "LoewnerRealization", "loewner_build",
           "tf_irka", "IrkaConfig"]
