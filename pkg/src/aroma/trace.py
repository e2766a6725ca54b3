"""Per-round training records and their line-delimited JSON file format.

A trace file has one JSON object per line: a ``header`` record, one ``round``
record per training round, and a closing ``final`` record carrying the final
covariance state. Files are written incrementally so long runs stream to disk.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Optional

import numpy as np

from .linalg import SparseVector


@dataclass
class StepRecord:
    """What happened on one round.

    ``in_M`` marks update rounds with a ranking mistake (margin <= 0), ``in_U``
    update rounds without one. The ``*_form`` fields are only filled by the
    factored learner: ``q^T Lambda q`` and ``p^T Omega p`` before and after the
    update.
    """

    round: int
    q: SparseVector
    p: SparseVector
    margin: float
    hinge: float
    updated: bool
    mistake: bool
    denominator: Optional[float] = None
    q_form_pre: Optional[float] = None
    p_form_pre: Optional[float] = None
    q_form_post: Optional[float] = None
    p_form_post: Optional[float] = None

    @property
    def in_M(self) -> bool:
        return self.updated and self.mistake

    @property
    def in_U(self) -> bool:
        return self.updated and not self.mistake


@dataclass
class RunTrace:
    variant: str
    m: int
    n: int
    r: float
    records: list[StepRecord] = field(default_factory=list)
    final: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_mistakes(self) -> int:
        return sum(rec.in_M for rec in self.records)

    @property
    def num_margin_updates(self) -> int:
        return sum(rec.in_U for rec in self.records)

    def updates(self) -> list[StepRecord]:
        return [rec for rec in self.records if rec.updated]

    def append(self, rec: StepRecord) -> None:
        self.records.append(rec)


def _sparse_to_json(x: SparseVector) -> dict:
    return {"dim": x.dim, "idx": x.indices.tolist(), "val": x.values.tolist()}


def _sparse_from_json(d: dict) -> SparseVector:
    return SparseVector(d["dim"], d["idx"], d["val"])


_OPTIONAL = ("denominator", "q_form_pre", "p_form_pre", "q_form_post", "p_form_post")


def record_to_json(rec: StepRecord) -> dict:
    out = {
        "type": "round",
        "round": rec.round,
        "q": _sparse_to_json(rec.q),
        "p": _sparse_to_json(rec.p),
        "margin": rec.margin,
        "hinge": rec.hinge,
        "updated": rec.updated,
        "mistake": rec.mistake,
        "in_M": rec.in_M,
        "in_U": rec.in_U,
    }
    for name in _OPTIONAL:
        value = getattr(rec, name)
        if value is not None:
            out[name] = value
    return out


def record_from_json(d: dict) -> StepRecord:
    return StepRecord(
        round=d["round"],
        q=_sparse_from_json(d["q"]),
        p=_sparse_from_json(d["p"]),
        margin=d["margin"],
        hinge=d["hinge"],
        updated=d["updated"],
        mistake=d["mistake"],
        **{name: d.get(name) for name in _OPTIONAL},
    )


def _dumps(obj) -> str:
    # repr-based float formatting round-trips exactly and is platform independent
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


class TraceWriter:
    """Streams a trace to an open text file, one record per line."""

    def __init__(self, fh: IO[str], variant: str, m: int, n: int, r: float):
        self.fh = fh
        fh.write(_dumps({"type": "header", "variant": variant, "m": m, "n": n, "r": r}) + "\n")

    def __call__(self, rec: StepRecord) -> None:
        self.fh.write(_dumps(record_to_json(rec)) + "\n")

    def close(self, final: dict[str, np.ndarray]) -> None:
        payload = {"type": "final"}
        payload.update({k: np.asarray(v).tolist() for k, v in final.items()})
        self.fh.write(_dumps(payload) + "\n")
        self.fh.flush()


def write_trace(trace: RunTrace, fh: IO[str]) -> None:
    writer = TraceWriter(fh, trace.variant, trace.m, trace.n, trace.r)
    for rec in trace.records:
        writer(rec)
    writer.close(trace.final)


def read_trace(lines: Iterable[str]) -> RunTrace:
    trace: RunTrace | None = None
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"trace line {lineno}: {exc}") from exc
        kind = d.get("type")
        if kind == "header":
            trace = RunTrace(d["variant"], d["m"], d["n"], d["r"])
        elif trace is None:
            raise ValueError(f"trace line {lineno}: record before header")
        elif kind == "round":
            trace.append(record_from_json(d))
        elif kind == "final":
            trace.final = {k: np.asarray(v, dtype=float) for k, v in d.items() if k != "type"}
        else:
            raise ValueError(f"trace line {lineno}: unknown record type {kind!r}")
    if trace is None:
        raise ValueError("trace has no header")
    return trace


Sink = Callable[[StepRecord], None]
