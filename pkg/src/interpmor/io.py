"""Text file formats: JSON descriptors that point to Matrix Market files.

A descriptor file looks like::

    {"kind": "descriptor", "A": "sys_A.mtx", "B": "sys_B.mtx",
     "C": "sys_C.mtx", "E": "sys_E.mtx", "D": "sys_D.mtx"}

Paths are relative to the JSON file.  ``E`` and ``D`` are optional.
Coprime files list terms ``{"kind": "power"|"delay", "param": ..,
"matrix": ..}`` per operator, and parametric files group such terms under
a ``coefficient`` tag and add ``nu`` and an optional ``box``.  Matrices are
written with 17 significant digits so that reading back is bit-exact.
"""

import json
from pathlib import Path

import numpy as np
import scipy.io as spio

from interpmor.coprime import CoprimeSystem, ScalarSFunction
from interpmor.interpolation import TangentData
from interpmor.lti import DescriptorSystem
from interpmor.loewner import TabulatedTransfer
from interpmor.parametric import CoefficientFunction, ParametricCoprimeSystem, ParamTangentData

_HEADER = "%%MatrixMarket matrix array real general\n"


class InputError(ValueError):
    """A file is missing, malformed or inconsistent."""


# -- matrices -------------------------------------------------------------------


def write_matrix(path, M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("only two-dimensional arrays can be written")
    path = Path(path)
    if M.size == 0:
        # scipy cannot read or write empty arrays
        path.write_text(f"{_HEADER}{M.shape[0]} {M.shape[1]}\n")
        return
    spio.mmwrite(str(path), M, precision=17)


def _empty_shape(path):
    with open(path) as fh:
        for line in fh:
            if line.startswith("%"):
                continue
            dims = [int(x) for x in line.split()[:2]]
            return tuple(dims) if 0 in dims else None
    raise InputError(f"{path}: no size line")


def read_matrix(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"matrix file not found: {path}")
    try:
        shape = _empty_shape(path)
        if shape is not None:
            return np.zeros(shape)
        M = spio.mmread(str(path))
    except InputError:
        raise
    except Exception as exc:
        raise InputError(f"{path}: {exc}") from exc
    if hasattr(M, "toarray"):
        M = M.toarray()
    if np.iscomplexobj(M):
        raise InputError(f"{path}: complex matrices are not supported")
    return np.asarray(M, dtype=float)


# -- JSON helpers -------------------------------------------------------------------


def _load_json(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class _MatrixSink:
    """Writes matrices next to a JSON file as ``<stem>_<label>.mtx``."""

    def __init__(self, path):
        self.dir = Path(path).parent
        self.stem = Path(path).stem

    def __call__(self, label, M):
        name = f"{self.stem}_{label}.mtx"
        write_matrix(self.dir / name, M)
        return name


def _matrix(base, ref):
    if not isinstance(ref, str):
        raise InputError(f"expected a matrix file name, got {ref!r}")
    return read_matrix(Path(base).parent / ref)


# -- systems --------------------------------------------------------------------------


def write_system(path, sys):
    """Write a descriptor, coprime or parametric system to `path` (JSON)."""
    sink = _MatrixSink(path)
    if isinstance(sys, DescriptorSystem):
        doc = {"kind": "descriptor"}
        for name in "EABCD":
            doc[name] = sink(name, getattr(sys, name))
    elif isinstance(sys, CoprimeSystem):
        doc = {"kind": "coprime", "D": sink("D", sys.D)}
        for name, terms in (("K", sys.K_terms), ("B", sys.B_terms), ("C", sys.C_terms)):
            doc[name] = [{"kind": f.kind, "param": f.param, "matrix": sink(f"{name}{i}", M)}
                         for i, (f, M) in enumerate(terms)]
    elif isinstance(sys, ParametricCoprimeSystem):
        doc = {"kind": "parametric", "nu": sys.nu, "D": sink("D", sys.D)}
        if sys.box is not None:
            doc["box"] = {"lower": sys.box[0].tolist(), "upper": sys.box[1].tolist()}
        for name, groups in (("K", sys.K_groups), ("B", sys.B_groups), ("C", sys.C_groups)):
            doc[name] = [{"coefficient": c.to_dict(),
                          "terms": [{"kind": f.kind, "param": f.param,
                                     "matrix": sink(f"{name}{g}_{i}", M)}
                                    for i, (f, M) in enumerate(terms)]}
                         for g, (c, terms) in enumerate(groups)]
    else:
        raise TypeError(f"cannot serialize {type(sys).__name__}")
    _dump_json(path, doc)


def _read_terms(path, items, name):
    if not isinstance(items, list) or not items:
        raise InputError(f"{path}: '{name}' must be a non-empty list of terms")
    try:
        return [(ScalarSFunction(t["kind"], t["param"]), _matrix(path, t["matrix"])) for t in items]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: bad term in '{name}' ({exc})") from exc


def read_system(path):
    """Read any system file written by :func:`write_system`."""
    doc = _load_json(path)
    kind = doc.get("kind", "descriptor")
    try:
        if kind == "descriptor":
            for name in "ABC":
                if name not in doc:
                    raise InputError(f"{path}: descriptor lacks '{name}'")
            mats = {k: _matrix(path, doc[k]) for k in "EABCD" if doc.get(k) is not None}
            return DescriptorSystem(mats["A"], mats["B"], mats["C"], mats.get("D"), mats.get("E"))
        D = _matrix(path, doc["D"]) if doc.get("D") is not None else None
        if kind == "coprime":
            return CoprimeSystem(*(_read_terms(path, doc.get(n), n) for n in "KBC"), D)
        if kind == "parametric":
            groups = {}
            for n in "KBC":
                items = doc.get(n)
                if not isinstance(items, list) or not items:
                    raise InputError(f"{path}: '{n}' must be a non-empty list of groups")
                groups[n] = [(CoefficientFunction.from_dict(g["coefficient"]),
                              _read_terms(path, g["terms"], n)) for g in items]
            box = doc.get("box")
            if box is not None:
                box = (box["lower"], box["upper"])
            return ParametricCoprimeSystem(groups["K"], groups["B"], groups["C"], doc["nu"], D, box)
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    raise InputError(f"{path}: unknown system kind {kind!r}")


# -- tangent data and samples -------------------------------------------------------------


def write_tangent(path, data):
    if isinstance(data, ParamTangentData):
        doc = {"kind": "param_tangent", "param_points": data.param_points.tolist(),
               "data": [d.to_dict() for d in data.data]}
    else:
        doc = dict(data.to_dict(), kind="tangent")
    _dump_json(path, doc)


def read_tangent(path):
    """:class:`TangentData` or :class:`ParamTangentData`, depending on the file."""
    doc = _load_json(path)
    try:
        if doc.get("kind") == "param_tangent":
            return ParamTangentData(doc["param_points"],
                                    [TangentData.from_dict(d) for d in doc["data"]])
        return TangentData.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad tangent data ({exc})") from exc


def write_samples(path, samples):
    _dump_json(path, {"kind": "samples", "p": samples.values.shape[1],
                      "m": samples.values.shape[2], "rows": samples.rows()})


def read_samples(path):
    doc = _load_json(path)
    try:
        return TabulatedTransfer.from_rows(doc["rows"], int(doc["p"]), int(doc["m"]))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"{path}: bad sample table ({exc})") from exc


__all__ = ["InputError", "read_matrix", "write_matrix", "read_system", "write_system",
           "read_tangent", "write_tangent", "read_samples", "write_samples"]
