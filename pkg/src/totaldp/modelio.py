"""Model and trace file formats.

Models are stored as JSON documents with explicit "inf"/"-inf" string
literals so that models with infinite declared optima serialize
losslessly; finite floats round-trip bit-identically through the JSON
number grammar.  Unknown fields fail parsing in strict mode and warn
otherwise.  Traces go to CSV (default) or JSON, rendering floats with
full round-trip precision.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings

import numpy as np

from .extreal import INF
from .model import AffineFamily, AtomicControl, TotalCostModel
from .solvers import IterationTrace, TraceRow

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Parse failure with location information when available."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        loc = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.col = col


def _encode_value(v: float):
    if v == INF:
        return "inf"
    if v == -INF:
        return "-inf"
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e15:
        return v
    return float(v)


def _decode_value(v, where: str) -> float:
    if isinstance(v, str):
        s = v.strip().replace("−", "-")
        if s in ("inf", "+inf", "Infinity"):
            return INF
        if s in ("-inf", "-Infinity"):
            return -INF
        raise ModelFileError(f"{where}: bad numeric literal {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    raise ModelFileError(f"{where}: expected a number or 'inf', got {type(v).__name__}")


def render_model(model: TotalCostModel,
                 ground_truth: tuple | None = None) -> str:
    """Serialize a model (and optional declared optimum) to JSON text."""
    doc: dict = {
        "format_version": FORMAT_VERSION,
        "regime": model.regime,
        "discount": model.discount,
        "states": list(model.state_names),
    }
    if model.cost_bound is not None:
        doc["cost_bound"] = model.cost_bound
    controls = []
    for x in range(model.num_states):
        entry: dict = {
            "state": model.state_names[x],
            "atomic": [
                {
                    "id": c.name,
                    "cost": _encode_value(c.cost),
                    "transitions": [
                        {"state": model.state_names[y], "prob": float(p)}
                        for y, p in enumerate(c.probs) if p != 0.0
                    ],
                }
                for c in model.controls[x]
            ],
        }
        if model.families[x]:
            entry["affine_families"] = [
                {
                    "id": f.name,
                    "lo": f.lo, "hi": f.hi,
                    "lo_closed": f.lo_closed, "hi_closed": f.hi_closed,
                    "cost": [f.c0, f.c1],
                    "transitions": [
                        {"state": model.state_names[y],
                         "p0": float(f.p0[y]), "p1": float(f.p1[y])}
                        for y in range(model.num_states)
                        if f.p0[y] != 0.0 or f.p1[y] != 0.0
                    ],
                }
                for f in model.families[x]
            ]
        controls.append(entry)
    doc["controls"] = controls
    if ground_truth is not None:
        Jstar, Qstar = ground_truth
        gt: dict = {"Jstar": [_encode_value(float(v)) for v in Jstar]}
        if Qstar is not None:
            gt["Qstar"] = [_encode_value(float(v)) for v in Qstar]
        doc["ground_truth"] = gt
    return json.dumps(doc, indent=2, allow_nan=False)


_TOP_KEYS = {"format_version", "regime", "discount", "states", "controls",
             "cost_bound", "ground_truth"}
_STATE_KEYS = {"state", "atomic", "affine_families"}
_ATOMIC_KEYS = {"id", "cost", "transitions"}
_FAMILY_KEYS = {"id", "lo", "hi", "lo_closed", "hi_closed", "cost", "transitions"}


def _check_keys(obj: dict, allowed: set, where: str, strict: bool) -> None:
    unknown = set(obj) - allowed
    if not unknown:
        return
    msg = f"{where}: unknown field(s) {sorted(unknown)}"
    if strict:
        raise ModelFileError(msg)
    warnings.warn(msg)


def parse_model(text: str, strict: bool = True
                ) -> tuple[TotalCostModel, tuple | None]:
    """Parse model JSON; returns the model and any declared optimum."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"not valid JSON: {e.msg}", e.lineno, e.colno) from e
    if not isinstance(doc, dict):
        raise ModelFileError("top level must be an object")
    _check_keys(doc, _TOP_KEYS, "top level", strict)
    for key in ("format_version", "regime", "discount", "states", "controls"):
        if key not in doc:
            raise ModelFileError(f"missing required field {key!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {doc['format_version']!r}")
    names = [str(s) for s in doc["states"]]
    index = {s: i for i, s in enumerate(names)}
    if len(index) != len(names):
        raise ModelFileError("duplicate state names")
    n = len(names)

    def trans_row(entries, where: str) -> np.ndarray:
        row = np.zeros(n)
        for e in entries:
            if e["state"] not in index:
                raise ModelFileError(f"{where}: unknown state {e['state']!r}")
            row[index[e["state"]]] = float(e["prob"])
        return row

    controls: list[tuple[AtomicControl, ...]] = []
    families: list[tuple[AffineFamily, ...]] = []
    entries = doc["controls"]
    if len(entries) != n:
        raise ModelFileError(f"'controls' lists {len(entries)} states, want {n}")
    for entry in entries:
        _check_keys(entry, _STATE_KEYS, f"state entry {entry.get('state')!r}", strict)
        x = index.get(entry.get("state"))
        if x is None:
            raise ModelFileError(f"control entry for unknown state {entry.get('state')!r}")
        where = f"state {names[x]!r}"
        atomics = []
        for a in entry.get("atomic", []):
            _check_keys(a, _ATOMIC_KEYS, f"{where} atomic control", strict)
            atomics.append(AtomicControl(
                str(a.get("id", f"u{len(atomics)}")),
                _decode_value(a["cost"], f"{where} cost"),
                trans_row(a["transitions"], where)))
        fams = []
        for fdoc in entry.get("affine_families", []):
            _check_keys(fdoc, _FAMILY_KEYS, f"{where} affine family", strict)
            p0 = np.zeros(n)
            p1 = np.zeros(n)
            for e in fdoc["transitions"]:
                if e["state"] not in index:
                    raise ModelFileError(f"{where}: unknown state {e['state']!r}")
                p0[index[e["state"]]] = float(e.get("p0", 0.0))
                p1[index[e["state"]]] = float(e.get("p1", 0.0))
            c0, c1 = fdoc["cost"]
            fams.append(AffineFamily(
                lo=float(fdoc["lo"]), hi=float(fdoc["hi"]),
                lo_closed=bool(fdoc["lo_closed"]), hi_closed=bool(fdoc["hi_closed"]),
                c0=float(c0), c1=float(c1), p0=p0, p1=p1,
                name=str(fdoc.get("id", "family"))))
        controls.append(tuple(atomics))
        families.append(tuple(fams))
    model = TotalCostModel(
        regime=str(doc["regime"]),
        discount=float(doc["discount"]),
        controls=tuple(controls),
        families=tuple(families),
        state_names=tuple(names),
        cost_bound=float(doc["cost_bound"]) if "cost_bound" in doc else None,
    )
    gt = None
    if "ground_truth" in doc:
        gdoc = doc["ground_truth"]
        _check_keys(gdoc, {"Jstar", "Qstar"}, "ground_truth", strict)
        Jstar = np.array([_decode_value(v, "Jstar") for v in gdoc["Jstar"]])
        Qstar = None
        if "Qstar" in gdoc:
            Qstar = np.array([_decode_value(v, "Qstar") for v in gdoc["Qstar"]])
        gt = (Jstar, Qstar)
    return model, gt


def write_model(path, model: TotalCostModel, ground_truth: tuple | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(render_model(model, ground_truth))
        fh.write("\n")


def read_model(path, strict: bool = True) -> tuple[TotalCostModel, tuple | None]:
    with open(path) as fh:
        return parse_model(fh.read(), strict=strict)


def model_hash(model: TotalCostModel) -> str:
    return hashlib.sha256(render_model(model).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Trace serialization


def _render_float(v: float | None) -> str:
    if v is None:
        return ""
    if v == INF:
        return "inf"
    if v == -INF:
        return "-inf"
    return repr(float(v))


def _parse_float(s: str) -> float | None:
    if s == "":
        return None
    if s == "inf":
        return INF
    if s == "-inf":
        return -INF
    return float(s)


_ROW_FIELDS = ("k", "residual", "dist_J", "dist_Q", "upper_margin",
               "lower_margin", "q_lower_margin", "policy", "b_set",
               "wall_time", "extra")


def trace_to_csv(trace: IterationTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    header = {
        "algorithm": trace.algorithm,
        "regime": trace.regime,
        "discount": trace.discount,
        "model_hash": trace.model_hash,
        "seed": trace.seed,
        "config": trace.config,
        "dist0": None if trace.dist0 is None else _render_float(trace.dist0),
        "initial_dominance": trace.initial_dominance,
        "ground_truth_known": trace.ground_truth_known,
        "op_count": trace.op_count,
        "J0": None if trace.J0 is None else [_render_float(v) for v in trace.J0],
        "Q0": None if trace.Q0 is None else [_render_float(v) for v in trace.Q0],
    }
    writer.writerow(["#header", json.dumps(header, allow_nan=False)])
    writer.writerow(_ROW_FIELDS)
    for row in trace.rows:
        writer.writerow([
            row.k,
            _render_float(row.residual),
            _render_float(row.dist_J),
            _render_float(row.dist_Q),
            _render_float(row.upper_margin),
            _render_float(row.lower_margin),
            _render_float(row.q_lower_margin),
            row.policy,
            row.b_set,
            _render_float(row.wall_time),
            json.dumps(_jsonable(row.extra), allow_nan=False),
        ])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(float(v)) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def trace_from_csv(text: str) -> IterationTrace:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "#header":
        raise ValueError("missing trace header")
    header = json.loads(rows[0][1])
    trace = IterationTrace(
        algorithm=header["algorithm"],
        regime=header["regime"],
        discount=header["discount"],
        config=header["config"],
        model_hash=header.get("model_hash", ""),
        seed=header.get("seed"),
        dist0=_parse_float(header["dist0"]) if header.get("dist0") else None,
        initial_dominance=header.get("initial_dominance"),
        ground_truth_known=header.get("ground_truth_known", False),
        op_count=header.get("op_count", 0),
        J0=None if header.get("J0") is None else np.array(
            [_parse_float(v) for v in header["J0"]]),
        Q0=None if header.get("Q0") is None else np.array(
            [_parse_float(v) for v in header["Q0"]]),
    )
    for rec in rows[2:]:
        if not rec:
            continue
        vals = dict(zip(_ROW_FIELDS, rec))
        trace.append(TraceRow(
            k=int(vals["k"]),
            residual=_parse_float(vals["residual"]),
            dist_J=_parse_float(vals["dist_J"]),
            dist_Q=_parse_float(vals["dist_Q"]),
            upper_margin=_parse_float(vals["upper_margin"]),
            lower_margin=_parse_float(vals["lower_margin"]),
            q_lower_margin=_parse_float(vals["q_lower_margin"]),
            policy=vals["policy"],
            b_set=vals["b_set"],
            wall_time=_parse_float(vals["wall_time"]) or 0.0,
            extra=json.loads(vals["extra"]) if vals["extra"] else {},
        ))
    return trace


def trace_to_json(trace: IterationTrace) -> str:
    doc = {
        "algorithm": trace.algorithm,
        "regime": trace.regime,
        "discount": trace.discount,
        "config": trace.config,
        "model_hash": trace.model_hash,
        "seed": trace.seed,
        "dist0": _jsonable(trace.dist0),
        "initial_dominance": trace.initial_dominance,
        "ground_truth_known": trace.ground_truth_known,
        "op_count": trace.op_count,
        "J0": None if trace.J0 is None else _jsonable(trace.J0),
        "Q0": None if trace.Q0 is None else _jsonable(trace.Q0),
        "rows": [
            {
                "k": row.k,
                "residual": _jsonable(row.residual),
                "dist_J": _jsonable(row.dist_J),
                "dist_Q": _jsonable(row.dist_Q),
                "upper_margin": _jsonable(row.upper_margin),
                "lower_margin": _jsonable(row.lower_margin),
                "q_lower_margin": _jsonable(row.q_lower_margin),
                "policy": row.policy,
                "b_set": row.b_set,
                "wall_time": row.wall_time,
                "extra": _jsonable(row.extra),
            }
            for row in trace.rows
        ],
    }
    return json.dumps(doc, indent=2, allow_nan=False)


def _unjson_float(v):
    if v is None:
        return None
    if v == "inf":
        return INF
    if v == "-inf":
        return -INF
    return float(v)


def trace_from_json(text: str) -> IterationTrace:
    doc = json.loads(text)
    trace = IterationTrace(
        algorithm=doc["algorithm"], regime=doc["regime"], discount=doc["discount"],
        config=doc["config"], model_hash=doc.get("model_hash", ""),
        seed=doc.get("seed"), dist0=_unjson_float(doc.get("dist0")),
        initial_dominance=doc.get("initial_dominance"),
        ground_truth_known=doc.get("ground_truth_known", False),
        op_count=doc.get("op_count", 0),
        J0=None if doc.get("J0") is None else np.array(
            [_unjson_float(v) for v in doc["J0"]]),
        Q0=None if doc.get("Q0") is None else np.array(
            [_unjson_float(v) for v in doc["Q0"]]),
    )
    for rec in doc["rows"]:
        trace.append(TraceRow(
            k=rec["k"],
            residual=_unjson_float(rec["residual"]),
            dist_J=_unjson_float(rec.get("dist_J")),
            dist_Q=_unjson_float(rec.get("dist_Q")),
            upper_margin=_unjson_float(rec.get("upper_margin")),
            lower_margin=_unjson_float(rec.get("lower_margin")),
            q_lower_margin=_unjson_float(rec.get("q_lower_margin")),
            policy=rec.get("policy", ""),
            b_set=rec.get("b_set", ""),
            wall_time=rec.get("wall_time", 0.0),
            extra=rec.get("extra", {}),
        ))
    return trace


def write_trace(path, trace: IterationTrace, fmt: str = "csv") -> None:
    text = trace_to_csv(trace) if fmt == "csv" else trace_to_json(trace)
    with open(path, "w") as fh:
        fh.write(text)


def read_trace(path) -> IterationTrace:
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return trace_from_json(text)
    return trace_from_csv(text)
