"""JSON problem files.

A matrix is ``{"rows": m, "cols": n, "data": [...]}`` in row-major order.
Entries are JSON numbers or rational strings such as ``"-1/5"``.  Floats
are written with ``repr`` precision and rationals as strings, so a
dump/load cycle is lossless.

Top-level keys: ``system`` (E, A, B, C, D, x0), ``weights`` (Q, R and the
optional H, T), the optional ``certificate`` (K, M1, N1, block_sizes),
``options`` and ``name``.
"""

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import _linalg as la
from .errors import DimensionError, ProblemFileError
from .reduction import LQWeights
from .system import SingularSystem

SYSTEM_KEYS = ("E", "A", "B", "C", "D", "x0")
BUNDLED = ("ex11", "ex31", "ex61", "ex62")


@dataclass
class Certificate:
    K: np.ndarray
    M1: np.ndarray
    N1: np.ndarray
    block_sizes: tuple


@dataclass
class ProblemFile:
    system: SingularSystem
    weights: LQWeights = None
    certificate: Certificate = None
    options: dict = field(default_factory=dict)
    name: str = ""


def _parse_entry(v, where):
    if isinstance(v, bool):
        raise ProblemFileError(f"{where}: boolean entry")
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ProblemFileError(f"{where}: cannot parse {v!r}") from exc
    raise ProblemFileError(f"{where}: non-numeric entry {v!r}")


def parse_matrix(obj, where="matrix", exact=False):
    """Decode one matrix object; exact mode returns Fractions, else float."""
    if not isinstance(obj, dict) or not {"rows", "cols", "data"} <= obj.keys():
        raise ProblemFileError(f"{where}: expected an object with rows, cols, data")
    m, n, data = obj["rows"], obj["cols"], obj["data"]
    if not (isinstance(m, int) and isinstance(n, int)) or m < 0 or n < 0:
        raise ProblemFileError(f"{where}: rows and cols must be non-negative integers")
    if not isinstance(data, list):
        raise ProblemFileError(f"{where}: data must be a list")
    if data and isinstance(data[0], list):
        data = [v for row in data for v in row]
    if len(data) != m * n:
        raise ProblemFileError(f"{where}: {len(data)} entries for a {m}x{n} matrix")
    vals = [_parse_entry(v, f"{where}[{i}]") for i, v in enumerate(data)]
    if exact or any(isinstance(v, Fraction) for v in vals):
        arr = np.empty(m * n, dtype=object)
        arr[:] = [Fraction(v) for v in vals]
        arr = arr.reshape(m, n)
        return arr if exact else la.to_float(arr)
    return np.asarray(vals, dtype=float).reshape(m, n)


def encode_matrix(a):
    a = np.asarray(a)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    out = []
    for v in a.ravel():
        if isinstance(v, Fraction):
            out.append(str(v) if v.denominator != 1 else int(v.numerator))
        else:
            out.append(float(v))
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": out}


def from_dict(d, exact=False) -> ProblemFile:
    if not isinstance(d, dict) or "system" not in d:
        raise ProblemFileError("problem file needs a 'system' object")
    s = d["system"]
    missing = [k for k in SYSTEM_KEYS if k not in s]
    if missing:
        raise ProblemFileError(f"system is missing {missing}")
    mats = {k: parse_matrix(s[k], f"system.{k}", exact) for k in SYSTEM_KEYS}
    mats["x0"] = mats["x0"].reshape(-1)
    try:
        system = SingularSystem(**mats)
    except DimensionError as exc:
        raise ProblemFileError(str(exc)) from exc
    weights = None
    if "weights" in d:
        w = d["weights"]
        try:
            Q = la.to_float(parse_matrix(w["Q"], "weights.Q"))
            R = la.to_float(parse_matrix(w["R"], "weights.R"))
            H = la.to_float(parse_matrix(w["H"], "weights.H")) if w.get("H") is not None else None
        except KeyError as exc:
            raise ProblemFileError(f"weights is missing {exc}") from exc
        T = w.get("T")
        if Q.shape != (system.n, system.n) or R.shape != (system.r, system.r):
            raise ProblemFileError("weights Q/R do not match the system dimensions")
        if H is not None and H.shape != (system.n, system.n):
            raise ProblemFileError("weights H does not match the system dimension")
        try:
            weights = LQWeights(Q, R, H, None if T is None else float(T))
        except DimensionError as exc:
            raise ProblemFileError(str(exc)) from exc
    cert = None
    if d.get("certificate") is not None:
        c = d["certificate"]
        try:
            cert = Certificate(K=parse_matrix(c["K"], "certificate.K", exact),
                               M1=parse_matrix(c["M1"], "certificate.M1", exact),
                               N1=parse_matrix(c["N1"], "certificate.N1", exact),
                               block_sizes=tuple(int(b) for b in c["block_sizes"]))
        except KeyError as exc:
            raise ProblemFileError(f"certificate is missing {exc}") from exc
    return ProblemFile(system=system, weights=weights, certificate=cert,
                       options=dict(d.get("options", {})), name=str(d.get("name", "")))


def to_dict(pf: ProblemFile) -> dict:
    s = pf.system
    d = {"name": pf.name,
         "system": {k: encode_matrix(getattr(s, k)) for k in SYSTEM_KEYS}}
    if pf.weights is not None:
        w = pf.weights
        d["weights"] = {"Q": encode_matrix(w.Q), "R": encode_matrix(w.R),
                        "H": None if w.H is None else encode_matrix(w.H), "T": w.T}
    if pf.certificate is not None:
        c = pf.certificate
        d["certificate"] = {"K": encode_matrix(c.K), "M1": encode_matrix(c.M1),
                            "N1": encode_matrix(c.N1), "block_sizes": list(c.block_sizes)}
    if pf.options:
        d["options"] = pf.options
    return d


def loads(text, exact=False) -> ProblemFile:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc}") from exc
    return from_dict(d, exact)


def load(path, exact=False) -> ProblemFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    return loads(text, exact)


_FLAT_LIST = re.compile(r"\[\s*([^\[\]{}]*?)\s*\]", re.S)


def _compact(text):
    return _FLAT_LIST.sub(lambda m: "[" + ", ".join(x.strip() for x in m.group(1).split(",")) + "]"
                          if m.group(1).strip() else "[]", text)


def dumps(pf: ProblemFile) -> str:
    """Indented JSON with each flat list on one line."""
    return _compact(json.dumps(to_dict(pf), indent=2))


def save(pf: ProblemFile, path):
    Path(path).write_text(dumps(pf) + "\n")


def bundled_path(name):
    if name not in BUNDLED:
        raise ProblemFileError(f"unknown bundled example {name!r}; choose from {BUNDLED}")
    return resources.files("sslq") / "data" / f"{name}.json"


def load_bundled(name, exact=False) -> ProblemFile:
    return loads(bundled_path(name).read_text(), exact)
