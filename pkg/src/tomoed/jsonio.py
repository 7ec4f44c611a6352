"""JSON and CSV encodings.

Complex numbers are ``[re, im]`` pairs and matrices nested lists of them.
Linear problems serialize their full ensemble; Hamiltonian problems are
stored as a builder name plus parameters because their evaluator is code.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Any

import numpy as np

from .errors import InputError, ParseError
from .qmodel import (
    Configuration,
    ConfigurationEnsemble,
    CountData,
    DensityMatrix,
    HamiltonianProblem,
    KrausSet,
    OsrDistributionProblem,
    PovmSet,
    StateDistributionProblem,
    StateProblem,
    Superoperator,
    SuperoperatorProblem,
)

PROBLEM_FORMAT = "tomoed-problem"
COUNTS_FORMAT = "tomoed-counts"
FORMAT_VERSION = 1


def encode_complex_matrix(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_complex_matrix(obj) -> np.ndarray:
    try:
        a = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad complex matrix: {exc}") from None
    if a.ndim != 3 or a.shape[2] != 2:
        raise ParseError(f"complex matrix must be rows of [re, im] pairs, got shape {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def loads(text: str) -> Any:
    """``json.loads`` with line/column in the error."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} at line {exc.lineno}, column {exc.colno}") from None


def load_file(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, default=_default)


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        if np.iscomplexobj(o):
            return encode_complex_matrix(o) if o.ndim == 2 else [[float(z.real), float(z.imag)] for z in o.ravel()]
        return o.tolist()
    if isinstance(o, (DensityMatrix,)):
        return encode_complex_matrix(o.matrix)
    if isinstance(o, Superoperator):
        return encode_complex_matrix(o.X)
    raise TypeError(f"cannot encode {type(o).__name__}")


# ------------------------------------------------------------- ensembles


def encode_ensemble(ens: ConfigurationEnsemble) -> list:
    return [
        {
            "label": c.label,
            "rho": encode_complex_matrix(c.rho.matrix),
            "povm": [encode_complex_matrix(e) for e in c.povm.elements],
            "outcomes": list(c.povm.labels),
        }
        for c in ens
    ]


def decode_ensemble(obj) -> ConfigurationEnsemble:
    try:
        cfgs = []
        for c in obj:
            povm = PovmSet(tuple(decode_complex_matrix(e) for e in c["povm"]), tuple(c.get("outcomes", ())))
            cfgs.append(Configuration(povm, DensityMatrix(decode_complex_matrix(c["rho"])), str(c["label"])))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed ensemble entry: {exc}") from None
    return ConfigurationEnsemble(tuple(cfgs))


# -------------------------------------------------------------- problems


def encode_point(problem, point):
    if point is None:
        return None
    if isinstance(problem, StateProblem):
        m = point.matrix if isinstance(point, DensityMatrix) else point
        return encode_complex_matrix(m)
    if isinstance(problem, SuperoperatorProblem):
        return encode_complex_matrix(point.X if isinstance(point, Superoperator) else point)
    return [float(v) for v in np.atleast_1d(np.asarray(point, dtype=float))]


def decode_point(problem, obj):
    if obj is None:
        return None
    if isinstance(problem, StateProblem):
        return DensityMatrix(decode_complex_matrix(obj))
    if isinstance(problem, SuperoperatorProblem):
        return decode_complex_matrix(obj)
    return np.asarray(obj, dtype=float)


def encode_problem(problem, truth=None, surrogate=None, example=None) -> dict:
    out = {"format": PROBLEM_FORMAT, "version": FORMAT_VERSION, "tag": problem.tag, "labels": list(problem.labels)}
    if example is not None:
        out["example"] = example
    if isinstance(problem, HamiltonianProblem):
        if example is None:
            raise InputError("Hamiltonian problems serialize through their builder; pass example=")
        out["times"] = list(problem.model.times)
        out["inputs"] = list(problem.input_labels)
    else:
        out["ensemble"] = encode_ensemble(problem.ensemble)
    if isinstance(problem, StateDistributionProblem):
        out["inputs"] = [encode_complex_matrix(r.matrix) for r in problem.inputs]
    if isinstance(problem, OsrDistributionProblem):
        out["components"] = [[encode_complex_matrix(k) for k in c.ops] for c in problem.components]
    if isinstance(problem, SuperoperatorProblem):
        out["basis"] = [encode_complex_matrix(b) for b in problem.basis]
        out["convention"] = problem.convention
    out["truth"] = encode_point(problem, truth)
    out["surrogate"] = encode_point(problem, surrogate)
    return out


def decode_problem(obj: dict):
    """Returns ``(problem, truth, surrogate)``."""
    if not isinstance(obj, dict) or obj.get("format") != PROBLEM_FORMAT:
        raise ParseError(f"not a {PROBLEM_FORMAT} document")
    tag = obj.get("tag")
    if "ensemble" not in obj:
        from .examples import build_example

        ex = obj.get("example") or {}
        problem = build_example(ex.get("name"), **ex.get("params", {}))[0]
    else:
        ens = decode_ensemble(obj["ensemble"])
        if tag == "state":
            problem = StateProblem(ens)
        elif tag == "state-distribution":
            problem = StateDistributionProblem(ens, [DensityMatrix(decode_complex_matrix(r)) for r in obj["inputs"]])
        elif tag == "osr-distribution":
            comps = [KrausSet(tuple(decode_complex_matrix(k) for k in c)) for c in obj["components"]]
            problem = OsrDistributionProblem(ens, comps)
        elif tag == "superoperator":
            basis = np.array([decode_complex_matrix(b) for b in obj["basis"]])
            problem = SuperoperatorProblem(ens, basis, obj.get("convention", "consistent"))
        else:
            raise ParseError(f"unknown problem tag {tag!r}")
    return problem, decode_point(problem, obj.get("truth")), decode_point(problem, obj.get("surrogate"))


# ---------------------------------------------------------------- counts


def encode_counts(data: CountData, labels=None, **meta) -> dict:
    out = {"format": COUNTS_FORMAT, "version": FORMAT_VERSION, "counts": [c.tolist() for c in data.counts]}
    if labels is not None:
        out["labels"] = list(labels)
    out.update(meta)
    return out


def decode_counts(obj: dict) -> CountData:
    if not isinstance(obj, dict) or obj.get("format") != COUNTS_FORMAT:
        raise ParseError(f"not a {COUNTS_FORMAT} document")
    try:
        return CountData(tuple(np.asarray(c) for c in obj["counts"]))
    except KeyError:
        raise ParseError("counts document lacks 'counts'") from None


# ------------------------------------------------------------------- CSV


def write_csv(path_or_buf, header, rows) -> str:
    """Write rows with '.' decimals and no thousands separators; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if path_or_buf is not None:
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def design_rows(design, rounded=None):
    l = rounded.l if rounded is not None else [None] * design.lam.size
    return [(g, design.labels[g], float(design.lam[g]), None if l[g] is None else int(l[g])) for g in range(design.lam.size)]


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, default=_default) + "\n")
