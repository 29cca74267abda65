"""Command-line front end.

Every command reads systems and tangent data from files, writes its
artifacts to ``--out`` and finishes with a JSON report (``report.json``).
Exit codes: 0 success, 2 input error, 3 numerical failure, 4 no
convergence (results are still written).
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from interpmor import io
from interpmor.coprime import CoprimeSystem, coprime_reduce, pade2_delay_baseline
from interpmor.dae import additive_decomposition, dae_reduce
from interpmor.errors import ReductionError
from interpmor.h2 import IrkaConfig, h2_error_norm, irka
from interpmor.interpolation import TangentData, interpolatory_reduce, verify_interpolation
from interpmor.loewner import SampledTransfer, tf_irka
from interpmor.lti import DescriptorSystem, h2_norm, hinf_norm, is_stable, pole_residue
from interpmor.parametric import (ParametricCoprimeSystem, ParamTangentData, parametric_reduce,
                                  sensitivity_residual)
from interpmor.weighted import WeightSystem, weighted_h2_norm, weighted_optimality_residuals

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_NO_CONVERGENCE = 0, 2, 3, 4
# frequency band of the initial TF-IRKA shifts, independent of the Bode grid
TFIRKA_INIT_RANGE = (1.0, 1e3)
COMMANDS = ("reduce", "irka", "tfirka", "dae-reduce", "param-reduce", "bode", "norms", "check")


@dataclass
class JobSpec:
    """One CLI invocation, validated."""

    command: str
    out: Path
    system: Path = None
    reduced: list = field(default_factory=list)
    weight: Path = None
    tangent: Path = None
    order: int = None
    tol: float = None
    max_iters: int = 200
    seed: int = 0
    init: str = "modal"
    freq_min: float = 1e-2
    freq_max: float = 1e2
    freq_points: int = 200
    param: list = None
    pade2: bool = False
    restarts: int = 0
    polish: bool = False

    def validate(self):
        if self.command not in COMMANDS:
            raise io.InputError(f"unknown command {self.command!r}")
        for p in [self.system, self.weight, self.tangent, *self.reduced]:
            if p is not None and not Path(p).is_file():
                raise io.InputError(f"file not found: {p}")
        if self.system is None:
            raise io.InputError(f"'{self.command}' needs --system")
        needs = {"reduce": ["tangent"], "dae-reduce": ["tangent"], "param-reduce": ["tangent"],
                 "irka": ["order"], "tfirka": ["order"], "check": ["reduced", "tangent"]}
        for name in needs.get(self.command, []):
            if not getattr(self, name):
                raise io.InputError(f"'{self.command}' needs --{name}")
        if self.order is not None and self.order < 1:
            raise io.InputError("--order must be positive")
        if self.tol is not None and not self.tol > 0:
            raise io.InputError("--tol must be positive")
        if self.max_iters < 1:
            raise io.InputError("--max-iters must be positive")
        if self.restarts < 0:
            raise io.InputError("--restarts must be nonnegative")
        if not (0 < self.freq_min < self.freq_max) or self.freq_points < 2:
            raise io.InputError("need 0 < --freq-min < --freq-max and --freq-points >= 2")


class NotConverged(Exception):
    pass


# -- helpers --------------------------------------------------------------------


def _cplx(z):
    z = complex(z)
    return [z.real, z.imag]


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _write_report(out, report):
    text = json.dumps(report, indent=2, sort_keys=True, default=_plain)
    (out / "report.json").write_text(text + "\n")


def _load(path, kinds, what="--system"):
    obj = io.read_system(path)
    if not isinstance(obj, kinds):
        names = ", ".join(k.__name__ for k in (kinds if isinstance(kinds, tuple) else (kinds,)))
        raise io.InputError(f"{what} must hold a {names}, got {type(obj).__name__}")
    return obj


def _tangent(job, kind):
    data = io.read_tangent(job.tangent)
    if not isinstance(data, kind):
        raise io.InputError(f"--tangent must hold {kind.__name__}")
    return data


def _model(obj, param):
    """An evaluable model; parametric systems are frozen at ``--param``."""
    if isinstance(obj, ParametricCoprimeSystem):
        if param is None:
            raise io.InputError("parametric systems need --param")
        return obj.at(param)
    return obj


def _weight(job, m):
    if job.weight is None:
        return None
    w = WeightSystem.from_system(_load(job.weight, DescriptorSystem, "--weight"))
    if w.m != m:
        raise io.InputError(f"weight has {w.m} outputs, system has {m} inputs")
    return w


def _system_summary(sys):
    out = {"n": sys.n, "m": sys.m, "p": sys.p}
    if isinstance(sys, DescriptorSystem):
        stab = is_stable(sys)
        out.update(stable=stab.stable, spectral_abscissa=stab.abscissa, n_infinite=stab.n_infinite)
    return out


def _norm_or_none(fn, *args):
    try:
        return float(fn(*args))
    except ReductionError:
        return None


# -- commands -------------------------------------------------------------------------


def cmd_reduce(job):
    sys_ = _load(job.system, (DescriptorSystem, CoprimeSystem))
    data = _tangent(job, TangentData)
    if isinstance(sys_, CoprimeSystem):
        red = coprime_reduce(sys_, data)
    else:
        red = interpolatory_reduce(sys_, data)
    io.write_system(job.out / "reduced.json", red)
    rep = verify_interpolation(sys_, red, data)
    return {"full": _system_summary(sys_), "reduced": _system_summary(red),
            "interpolation": rep.to_dict()}


def _irka_report(res):
    rep = res.to_dict()
    rep["reduced"] = _system_summary(res.reduced)
    rep["reduced_poles"] = [_cplx(z) for z in pole_residue(res.reduced).poles]
    return rep


def cmd_irka(job):
    sys_ = _load(job.system, DescriptorSystem)
    cfg = IrkaConfig(job.order, job.max_iters, job.tol or 1e-10, job.init, job.seed,
                     restarts=job.restarts, polish=job.polish)
    res = irka(sys_, cfg)
    io.write_system(job.out / "reduced.json", res.reduced)
    rep = _irka_report(res)
    pr = pole_residue(res.reduced)
    rep["h2_error"] = _norm_or_none(h2_error_norm, sys_, pr)
    rep["h2_norm_full"] = _norm_or_none(h2_norm, sys_)
    w = _weight(job, sys_.m)
    if w is not None:
        rep["weighted"] = {"error": _norm_or_none(weighted_h2_norm, sys_, res.reduced, w),
                           "optimality": weighted_optimality_residuals(sys_, pr, w).to_dict()}
    if not res.converged:
        raise NotConverged(rep)
    return rep


def _bode_deviation(full, red, omegas):
    dev = 0.0
    for w in omegas:
        a = np.abs(full.transfer(1j * w))
        b = np.abs(red.transfer(1j * w))
        with np.errstate(divide="ignore"):
            dev = max(dev, float(np.max(np.abs(np.log10(a) - np.log10(b)))))
    return dev


def _grid(job):
    return np.logspace(np.log10(job.freq_min), np.log10(job.freq_max), job.freq_points)


def cmd_tfirka(job):
    sys_ = _model(_load(job.system, (DescriptorSystem, CoprimeSystem, ParametricCoprimeSystem)),
                  job.param)
    init = job.init if job.init != "modal" else "log"
    cfg = IrkaConfig(job.order, job.max_iters, job.tol or 1e-10, init, job.seed)
    res = tf_irka(SampledTransfer.of(sys_), cfg, TFIRKA_INIT_RANGE)
    io.write_system(job.out / "reduced.json", res.reduced)
    rep = _irka_report(res)
    grid = _grid(job)
    rep["max_log10_deviation"] = {"tfirka": _bode_deviation(sys_, res.reduced, grid)}
    if job.pade2:
        pade = pade2_delay_baseline(sys_)
        io.write_system(job.out / "pade2.json", pade)
        rep["max_log10_deviation"]["pade2"] = _bode_deviation(sys_, pade, grid)
    if not res.converged:
        raise NotConverged(rep)
    return rep


def cmd_dae_reduce(job):
    sys_ = _load(job.system, DescriptorSystem)
    data = _tangent(job, TangentData)
    red = dae_reduce(sys_, data)
    io.write_system(job.out / "reduced.json", red.system)
    _, P = additive_decomposition(sys_)
    _, Pr = additive_decomposition(red.system)
    k = max(len(P.coefficients), len(Pr.coefficients))
    pad = [np.zeros_like(sys_.D)] * k

    def coeffs(Q):
        return (list(Q.coefficients) + pad)[:k]
    mismatch = max(float(np.max(np.abs(a - b), initial=0.0)) for a, b in zip(coeffs(P), coeffs(Pr)))
    return {"full": _system_summary(sys_), "reduced": _system_summary(red.system),
            "finite_order": red.finite_order, "infinite_order": red.infinite_order,
            "polynomial_degree": P.degree, "polynomial_mismatch": mismatch,
            "interpolation": verify_interpolation(sys_, red.system, data).to_dict()}


def cmd_param_reduce(job):
    sys_ = _load(job.system, ParametricCoprimeSystem)
    data = _tangent(job, ParamTangentData)
    red = parametric_reduce(sys_, data)
    io.write_system(job.out / "reduced.json", red)
    checks = []
    for s, pi, r, l in data.pairs():
        rep = sensitivity_residual(sys_, red, s, pi, r, l)
        checks.append({"sigma": _cplx(s), "param": [float(x) for x in pi], **rep.to_dict()})
    return {"full_order": sys_.n, "reduced_order": red.n, "groups": red.group_counts,
            "checks": checks,
            "max_residual": max((c["max_residual"] for c in checks), default=0.0)}


def _write_bode(path, model, omegas):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        H0 = model.transfer(1j * omegas[0])
        entries = [(i, j) for i in range(H0.shape[0]) for j in range(H0.shape[1])]
        w.writerow(["omega", "sigma_max"] + [f"abs_H_{i + 1}_{j + 1}" for i, j in entries])
        for om in omegas:
            H = model.transfer(1j * om)
            smax = np.linalg.norm(H, 2) if H.size else 0.0
            w.writerow([repr(float(om)), repr(float(smax))]
                       + [repr(float(abs(H[i, j]))) for i, j in entries])


def cmd_bode(job):
    kinds = (DescriptorSystem, CoprimeSystem, ParametricCoprimeSystem)
    full = _model(_load(job.system, kinds), job.param)
    grid = _grid(job)
    _write_bode(job.out / "bode.csv", full, grid)
    rep = {"grid": {"min": job.freq_min, "max": job.freq_max, "points": job.freq_points},
           "files": {"full": "bode.csv"}, "max_log10_deviation": {}}
    models = [(Path(p).stem, _model(_load(p, kinds, "--reduced"), job.param)) for p in job.reduced]
    if job.pade2:
        models.append(("pade2", pade2_delay_baseline(full)))
    for name, model in models:
        fname = f"bode_{name}.csv"
        _write_bode(job.out / fname, model, grid)
        rep["files"][name] = fname
        rep["max_log10_deviation"][name] = _bode_deviation(full, model, grid)
    return rep


def cmd_norms(job):
    sys_ = _load(job.system, DescriptorSystem)
    rep = {"system": _system_summary(sys_), "h2": _norm_or_none(h2_norm, sys_),
           "hinf": _norm_or_none(hinf_norm, sys_)}
    w = _weight(job, sys_.m)
    for p in job.reduced:
        red = _load(p, DescriptorSystem, "--reduced")
        err = sys_ - red
        entry = {"h2_error": _norm_or_none(h2_norm, err), "hinf_error": _norm_or_none(hinf_norm, err)}
        if w is not None:
            entry["weighted_h2_error"] = _norm_or_none(weighted_h2_norm, sys_, red, w)
        rep.setdefault("errors", {})[Path(p).stem] = entry
    return rep


def cmd_check(job):
    kinds = (DescriptorSystem, CoprimeSystem)
    full = _load(job.system, kinds)
    data = _tangent(job, TangentData)
    tol = job.tol or 1e-10
    rep = {"tol": tol, "models": {}}
    for p in job.reduced:
        red = _load(p, kinds, "--reduced")
        res = verify_interpolation(full, red, data)
        rep["models"][Path(p).stem] = dict(res.to_dict(), passed=res.passed(tol))
    rep["passed"] = all(m["passed"] for m in rep["models"].values())
    return rep


HANDLERS = {"reduce": cmd_reduce, "irka": cmd_irka, "tfirka": cmd_tfirka,
            "dae-reduce": cmd_dae_reduce, "param-reduce": cmd_param_reduce, "bode": cmd_bode,
            "norms": cmd_norms, "check": cmd_check}


def run(job):
    """Execute `job`, write ``report.json`` and return the exit status."""
    out = Path(job.out)
    try:
        job.validate()
        out.mkdir(parents=True, exist_ok=True)
        report = HANDLERS[job.command](job)
        status, payload = EXIT_OK, {"status": "ok", "result": report}
    except NotConverged as exc:
        status, payload = EXIT_NO_CONVERGENCE, {"status": "not_converged", "result": exc.args[0]}
    except (io.InputError, ValueError, TypeError) as exc:
        status, payload = EXIT_INPUT, {"status": "error", "kind": "input",
                                       "error": type(exc).__name__, "message": str(exc)}
    except (ReductionError, np.linalg.LinAlgError) as exc:
        status, payload = EXIT_NUMERICAL, {"status": "error", "kind": "numerical",
                                           "error": type(exc).__name__, "message": str(exc)}
    payload["command"] = job.command
    payload["exit_code"] = status
    if status in (EXIT_INPUT, EXIT_NUMERICAL):
        print(json.dumps(payload, sort_keys=True, default=_plain), file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_report(out, payload)
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
    return status


def build_parser():
    ap = argparse.ArgumentParser(prog="interpmor", description="Interpolatory model reduction.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--system", type=Path, help="system descriptor file (JSON)")
    ap.add_argument("--reduced", type=Path, action="append", default=[],
                    help="reduced model to compare against (repeatable)")
    ap.add_argument("--weight", type=Path, help="input weight descriptor file")
    ap.add_argument("--tangent", type=Path, help="tangent data file (JSON)")
    ap.add_argument("--order", type=int, help="reduced order r")
    ap.add_argument("--tol", type=float, help="convergence or pass tolerance")
    ap.add_argument("--max-iters", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--init", choices=("modal", "log", "random"), default="modal",
                    help="initial shifts for irka and tfirka")
    ap.add_argument("--restarts", type=int, default=0,
                    help="extra random starts for irka; the best converged run is kept")
    ap.add_argument("--polish", action="store_true",
                    help="if irka does not converge, finish with quasi-Newton H2 minimization")
    ap.add_argument("--freq-min", type=float, default=1e-2)
    ap.add_argument("--freq-max", type=float, default=1e2)
    ap.add_argument("--freq-points", type=int, default=200)
    ap.add_argument("--param", type=float, nargs="+", help="parameter value for parametric systems")
    ap.add_argument("--pade2", action="store_true",
                    help="add the Pade-2 baseline of a delay system")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    job = JobSpec(args.command, args.out, args.system, args.reduced, args.weight, args.tangent,
                  args.order, args.tol, args.max_iters, args.seed, args.init, args.freq_min,
                  args.freq_max, args.freq_points, args.param, args.pade2, args.restarts, args.polish)
    return run(job)


if __name__ == "__main__":
    sys.exit(main())
