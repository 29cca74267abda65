"""H2-optimal reduction: IRKA, the pole-residue error formula and its gradient."""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize

from interpmor.errors import (LineSearchFailure, NonzeroFeedthrough, ReductionError,
                              RepeatedPoles, UnstableSystem)
from interpmor.interpolation import (InterpolationReport, TangentData, interpolatory_reduce,
                                     verify_interpolation)
from interpmor.lti import (DescriptorSystem, PoleResidueForm, finite_eigenvalues, h2_norm,
                           h2_norm_squared, pole_residue)

INIT_STRATEGIES = ("modal", "log", "random")


@dataclass
class IrkaConfig:
    """Options for the IRKA fixed-point iteration.

    Parameters
    ----------
    r
        Reduced order.
    max_iters
        Iteration cap; hitting it is reported, not raised.
    shift_tol
        Stop once the largest relative change of the matched shifts is below this.
    init
        ``"modal"`` (mirror the dominant poles), ``"log"`` (real log-spaced
        shifts), ``"random"`` or an explicit :class:`TangentData`.
    seed
        Seed for the random directions of the ``"log"`` and ``"random"`` strategies.
    restarts
        Extra runs from ``"random"`` starts seeded ``seed + 1, seed + 2, ...``.
        The converged run with the smallest H2 error is returned, since
        the fixed point reached depends on the start.
    polish
        If no run converges, minimize the H2 error with L-BFGS-B from the
        best iterate (unstable poles reflected) and accept the result when
        its optimality residuals drop below `polish_tol`.  Some stationary
        points repel the fixed-point iteration and are only reachable this way.
    polish_tol
        Acceptance threshold for the polished model.
    """

    r: int
    max_iters: int = 200
    shift_tol: float = 1e-10
    init: object = "modal"
    seed: int = 0
    restarts: int = 0
    polish: bool = False
    polish_tol: float = 1e-8

    def __post_init__(self):
        if int(self.r) < 1:
            raise ValueError("r must be at least 1")
        if not self.shift_tol > 0:
            raise ValueError("shift_tol must be positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be at least 1")
        if not isinstance(self.init, TangentData) and self.init not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init!r}")
        if int(self.restarts) < 0:
            raise ValueError("restarts must be nonnegative")
        self.r = int(self.r)
        self.max_iters = int(self.max_iters)
        self.restarts = int(self.restarts)


@dataclass
class IrkaResult:
    reduced: DescriptorSystem
    history: list
    converged: bool
    optimality: InterpolationReport
    data: TangentData = field(repr=False)
    start: int = 0
    polished: bool = False

    @property
    def iterations(self):
        return len(self.history)

    def to_dict(self):
        return {
            "converged": bool(self.converged),
            "iterations": self.iterations,
            "history": self.history,
            "optimality": self.optimality.to_dict(),
            "final_shifts": _pairs(self.data.right_points),
            "start": self.start,
            "polished": bool(self.polished),
        }


def _pairs(z):
    return [[float(np.real(v)), float(np.imag(v))] for v in z]


# -- initialization ------------------------------------------------------------


def _modal_init(sys, r):
    pr = pole_residue(sys)
    weight = np.linalg.norm(pr.left, axis=1) * np.linalg.norm(pr.right, axis=1) / np.abs(pr.poles.real)
    units, i = [], 0
    while i < pr.order:
        if pr.poles[i].imag != 0:
            units.append((weight[i], [i, i + 1]))
            i += 2
        else:
            units.append((weight[i], [i]))
            i += 1
    units.sort(key=lambda u: -u[0])
    chosen, left = [], r
    for _, idx in units:
        if len(idx) <= left:
            chosen.extend(idx)
            left -= len(idx)
        if left == 0:
            break
    pts = list(-pr.poles[chosen])
    rdir = list(pr.right[chosen])
    ldir = list(pr.left[chosen])
    if left:
        # r is odd and only pairs remain: use the modulus of the next pair
        idx = next(idx for _, idx in units if idx[0] not in chosen)
        k = idx[0]
        pts.append(abs(pr.poles[k]))
        rdir.append(np.real(pr.right[k]) + np.imag(pr.right[k]))
        ldir.append(np.real(pr.left[k]) + np.imag(pr.left[k]))
    return TangentData.bitangential(pts, rdir, ldir)


def _pole_range(sys):
    lam, _ = finite_eigenvalues(sys.E, sys.A)
    mags = np.abs(lam[np.abs(lam) > 0])
    if mags.size == 0:
        return 1.0, 1.0
    return mags.min(), mags.max()


def initial_data(sys, cfg):
    """Initial shifts and directions for :func:`irka`."""
    if isinstance(cfg.init, TangentData):
        return cfg.init
    if cfg.init == "modal":
        try:
            return _modal_init(sys, cfg.r)
        except (RepeatedPoles, ValueError):
            pass
    rng = np.random.default_rng(cfg.seed)
    lo, hi = _pole_range(sys)
    if cfg.init == "random":
        pts = np.exp(rng.uniform(np.log(lo), np.log(hi), cfg.r))
    else:
        pts = np.logspace(np.log10(lo), np.log10(hi), cfg.r)
    return TangentData.bitangential(pts, rng.standard_normal((cfg.r, sys.m)),
                                    rng.standard_normal((cfg.r, sys.p)))


# -- fixed-point loop -----------------------------------------------------------


def matched_shift_change(new, old):
    """Largest relative change between two shift sets after optimal pairing."""
    new, old = np.asarray(new), np.asarray(old)
    if new.size != old.size:
        return np.inf
    cost = np.abs(new[:, None] - old[None, :])
    rows, cols = linear_sum_assignment(cost)
    scale = np.maximum(np.abs(old[cols]), np.finfo(float).tiny)
    return float(np.max(cost[rows, cols] / scale))


def mirror_data(pr):
    """Next IRKA data: shifts ``-lambda_i`` (unstable poles reflected first)."""
    lam = pr.poles.copy()
    unstable = lam.real >= 0
    lam[unstable] = -np.conj(lam[unstable])
    return TangentData.bitangential(-lam, pr.right, pr.left)


def run_fixed_point(build, data, cfg, evaluator):
    """Shared IRKA loop; `build` maps tangent data to a reduced DescriptorSystem."""
    history = []
    converged = False
    for it in range(1, cfg.max_iters + 1):
        reduced = build(data)
        new = mirror_data(pole_residue(reduced))
        change = matched_shift_change(new.right_points, data.right_points)
        history.append({"iteration": it, "shifts": _pairs(data.right_points), "change": change})
        data = new
        if change < cfg.shift_tol:
            converged = True
            break
    reduced = build(data)
    pr = pole_residue(reduced)
    return IrkaResult(reduced, history, converged, optimality_residuals(evaluator, pr), data)


def irka(sys, cfg):
    """Iterative rational Krylov algorithm for tangential H2-optimal reduction.

    Starting from the data given by ``cfg.init``, each step builds the
    interpolatory model for the current shifts and directions, then replaces
    them by the mirrored reduced poles and residue directions.  Failure to
    converge within ``cfg.max_iters`` is reported through
    ``IrkaResult.converged`` rather than raised.

    Examples
    --------
    >>> import numpy as np
    >>> from interpmor.lti import DescriptorSystem
    >>> sys = DescriptorSystem(np.diag([-1.0, -3.0]), [[1.0], [1.0]], [[1.0, 0.0]])
    >>> res = irka(sys, IrkaConfig(r=1))
    >>> res.converged, res.reduced.n
    (True, 1)
    """
    if np.any(sys.D != 0):
        raise NonzeroFeedthrough("IRKA expects a strictly proper system (D = 0)")
    def build(d):
        return interpolatory_reduce(sys, d)
    best = run_fixed_point(build, initial_data(sys, cfg), cfg, sys)
    nrm2 = h2_norm_squared(sys)

    def rank(res):
        try:
            err = h2_error_sq(sys, pole_residue(res.reduced), nrm2)
        except (UnstableSystem, RepeatedPoles):
            err = np.inf
        return (not res.converged, err)
    best_key = rank(best) if cfg.restarts else None
    for k in range(1, cfg.restarts + 1):
        alt = replace(cfg, init="random", seed=cfg.seed + k)
        try:
            res = run_fixed_point(build, initial_data(sys, alt), alt, sys)
        except ReductionError:
            continue
        key = rank(res)
        if key < best_key:
            best, best_key = replace(res, start=k), key
    if cfg.polish and not best.converged:
        try:
            form = polish_minimize(sys, pole_residue(best.reduced), nrm2)
        except (RepeatedPoles, UnstableSystem):
            return best
        report = optimality_residuals(sys, form)
        if report.max_residual < cfg.polish_tol:
            best = replace(best, reduced=form.to_system(), converged=True, optimality=report,
                           data=mirror_data(form), polished=True)
    return best


def polish_minimize(full, init, full_sq=None, max_iters=20000):
    """Quasi-Newton minimization of the squared H2 error from `init`.

    Poles of `init` in the closed right half-plane are reflected first;
    L-BFGS-B then keeps every real part at or below ``-1e-8 * max|lambda|``.
    Returns the final :class:`PoleResidueForm`.
    """
    nrm2 = h2_norm_squared(full) if full_sq is None else full_sq
    lam = np.where(init.poles.real >= 0, -np.conj(init.poles), init.poles)
    start = PoleResidueForm(lam, init.left, init.right)
    margin = 1e-8 * max(np.max(np.abs(lam)), 1.0)
    p, m = start.left.shape[1], start.right.shape[1]
    w = 1 + p + m
    bounds = []
    for _, j in _units(start):
        bounds += [(None, -margin)] + [(None, None)] * (w - 1 if j is None else 2 * w - 1)

    def fun(x):
        pr = _unpack(x, start)
        return h2_error_sq(full, pr, nrm2), real_gradient(h2_gradient(full, pr), pr)
    x0 = _project(_pack(start), start, margin)
    out = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iters, "gtol": 0.0, "ftol": 0.0, "maxcor": 30})
    return _unpack(out.x, start)


# -- H2 error and gradients --------------------------------------------------------


def _check_stable_form(pr):
    if np.any(pr.poles.real >= 0):
        raise UnstableSystem("reduced model has poles in the closed right half-plane")


def h2_error_norm(full, reduced, full_norm=None):
    """``||H - H_r||_H2`` from the pole-residue form of the reduced model.

    Needs ``H`` only at the mirrored reduced poles, plus ``||H||_H2``
    (computed from `full` when `full_norm` is not supplied).  Feedthrough
    terms are assumed to agree.
    """
    full_sq = None if full_norm is None else float(full_norm) ** 2
    return float(np.sqrt(max(h2_error_sq(full, reduced, full_sq), 0.0)))


def h2_error_sq(full, reduced, full_sq=None):
    """Squared H2 error; `full_sq` is ``||H||^2`` if already known."""
    _check_stable_form(reduced)
    lam, L, R = reduced.poles, reduced.left, reduced.right
    cross = sum(L[k] @ full.transfer(-lam[k]) @ R[k] for k in range(lam.size))
    G = (L @ L.T) * (R @ R.T).T / (-lam[:, None] - lam[None, :])
    if full_sq is None:
        full_sq = h2_norm_squared(full)
    return full_sq - 2 * np.real(cross) + np.real(G.sum())


@dataclass
class H2Gradient:
    """Holomorphic partial derivatives of the squared H2 error.

    Row i of `left` and `right` holds the derivative with respect to the
    left and right residue direction of pole i.
    """

    poles: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def real_norm(self, pr):
        return float(np.linalg.norm(real_gradient(self, pr)))


def h2_gradient(full, reduced):
    """Gradient of ``J = ||H - H_r||^2`` in the pole-residue parameters.

    ``dJ/dlambda_i = -2 l_i^T (H_r'(-lambda_i) - H'(-lambda_i)) r_i``,
    ``dJ/dr_i = 2 (l_i^T H_r(-lambda_i) - l_i^T H(-lambda_i))^T`` and
    ``dJ/dl_i = 2 (H_r(-lambda_i) r_i - H(-lambda_i) r_i)``.
    """
    _check_stable_form(reduced)
    lam, L, R = reduced.poles, reduced.left, reduced.right
    g_lam = np.empty(lam.size, dtype=complex)
    g_l = np.empty_like(L)
    g_r = np.empty_like(R)
    for i in range(lam.size):
        H, dH = full.transfer_and_derivative(-lam[i])
        Hr, dHr = reduced.transfer_and_derivative(-lam[i])
        g_lam[i] = -2 * L[i] @ (dHr - dH) @ R[i]
        g_r[i] = 2 * (L[i] @ (Hr - H))
        g_l[i] = 2 * ((Hr - H) @ R[i])
    return H2Gradient(g_lam, g_l, g_r)


def optimality_residuals(full, reduced):
    """Normalized residuals of the first-order H2 conditions at ``-lambda_k``."""
    data = TangentData.bitangential(-reduced.poles, reduced.right, reduced.left)
    return verify_interpolation(full, reduced, data)


# -- descent ----------------------------------------------------------------------


def _units(pr):
    """Representatives of conjugation classes: real poles and one member per pair."""
    out, i = [], 0
    while i < pr.order:
        if pr.poles[i].imag != 0:
            out.append((i, i + 1))
            i += 2
        else:
            out.append((i, None))
            i += 1
    return out


def _pack(pr):
    parts = []
    for i, j in _units(pr):
        vals = np.concatenate([[pr.poles[i]], pr.left[i], pr.right[i]])
        parts.append(vals.real if j is None else np.concatenate([vals.real, vals.imag]))
    return np.concatenate(parts) if parts else np.zeros(0)


def _unpack(x, template):
    p, m = template.left.shape[1], template.right.shape[1]
    lam = np.empty(template.order, dtype=complex)
    L = np.empty((template.order, p), dtype=complex)
    R = np.empty((template.order, m), dtype=complex)
    pos, w = 0, 1 + p + m
    for i, j in _units(template):
        if j is None:
            v = x[pos:pos + w].astype(complex)
            pos += w
        else:
            v = x[pos:pos + w] + 1j * x[pos + w:pos + 2 * w]
            pos += 2 * w
        lam[i], L[i], R[i] = v[0], v[1:1 + p], v[1 + p:]
        if j is not None:
            lam[j], L[j], R[j] = np.conj(v[0]), np.conj(v[1:1 + p]), np.conj(v[1 + p:])
    return PoleResidueForm(lam, L, R, template.feedthrough)


def real_gradient(grad, pr):
    """Gradient of J with respect to the packed real parameter vector."""
    parts = []
    for i, j in _units(pr):
        g = np.concatenate([[grad.poles[i]], grad.left[i], grad.right[i]])
        parts.append(g.real if j is None else np.concatenate([2 * g.real, -2 * g.imag]))
    return np.concatenate(parts) if parts else np.zeros(0)


def _project(x, template, margin):
    p, m = template.left.shape[1], template.right.shape[1]
    x = x.copy()
    pos, w = 0, 1 + p + m
    for _, j in _units(template):
        x[pos] = min(x[pos], -margin)
        pos += w if j is None else 2 * w
    return x


@dataclass
class DescentResult:
    form: PoleResidueForm
    history: list
    converged: bool

    @property
    def iterations(self):
        return len(self.history) - 1


def descent_minimize(full, init, max_iters=500, gtol=1e-6, margin=None, full_norm=None,
                     armijo=1e-4, max_backtracks=40):
    """Projected gradient descent on the squared H2 error.

    Works on the real parameters of the poles and residue directions of
    `init`, with conjugate partners tied together.  Steps start from a
    Barzilai-Borwein length and are backtracked until the Armijo condition
    holds; poles are projected onto ``Re(lambda) <= -margin``.  Iteration
    stops when the gradient norm falls below ``gtol * ||H||^2``.

    Raises
    ------
    LineSearchFailure
        If no acceptable step is found after `max_backtracks` halvings.
    """
    nrm2 = h2_norm_squared(full) if full_norm is None else float(full_norm) ** 2
    if margin is None:
        margin = 1e-8 * max(np.max(np.abs(init.poles)), 1.0)

    def J(pr):
        return float(h2_error_sq(full, pr, nrm2))

    pr = init
    x = _pack(pr)
    f = J(pr)
    g = real_gradient(h2_gradient(full, pr), pr)
    history = [f]
    step = 1.0 / max(np.linalg.norm(g), 1e-300)
    x_prev = g_prev = None
    for _ in range(max_iters):
        if np.linalg.norm(g) < gtol * nrm2:
            return DescentResult(pr, history, True)
        if x_prev is not None:
            s, y = x - x_prev, g - g_prev
            sy = s @ y
            step = (s @ s) / sy if sy > 0 else 2 * step
        for _ in range(max_backtracks):
            x_new = _project(x - step * g, pr, margin)
            try:
                pr_new = _unpack(x_new, pr)
                f_new = J(pr_new)
            except UnstableSystem:
                step /= 2
                continue
            if f_new <= f - armijo * (g @ (x - x_new)):
                break
            step /= 2
        else:
            raise LineSearchFailure(f"no Armijo step after {max_backtracks} backtracks "
                                    f"(J = {f:.6e}, |grad| = {np.linalg.norm(g):.3e})")
        x_prev, g_prev = x, g
        x, pr, f = x_new, pr_new, f_new
        g = real_gradient(h2_gradient(full, pr), pr)
        history.append(f)
    return DescentResult(pr, history, bool(np.linalg.norm(g) < gtol * nrm2))
