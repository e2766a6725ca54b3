"""Model files: one JSON document per model, the same schema for every learner.

``{"variant": ..., "m": ..., "n": ..., "r": ..., "W": [[...], ...], ...}`` with
extra matrices per variant (``Sigma`` for d-AROMA, ``Omega`` and ``Lambda``
for f-AROMA). Floats are written with Python's shortest round-trip repr, so
saving and loading is exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

VARIANTS = ("d-aroma", "f-aroma", "f-aroma-analysis", "arow-vec", "pa", "identity")


@dataclass
class ModelFile:
    variant: str
    W: np.ndarray
    r: float
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]


def model_to_json(model: ModelFile) -> str:
    doc = {"variant": model.variant, "m": model.m, "n": model.n, "r": model.r, "W": model.W.tolist()}
    for name in sorted(model.extra):
        doc[name] = np.asarray(model.extra[name]).tolist()
    return json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n"


def save_model(model: ModelFile, fh: IO[str]) -> None:
    fh.write(model_to_json(model))


def load_model(fh: IO[str]) -> ModelFile:
    doc = json.load(fh)
    try:
        variant, m, n, r = doc.pop("variant"), doc.pop("m"), doc.pop("n"), doc.pop("r")
        W = np.asarray(doc.pop("W"), dtype=float)
    except KeyError as exc:
        raise ValueError(f"model file is missing field {exc}") from None
    if variant not in VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}")
    if W.shape != (m, n):
        raise ValueError(f"W has shape {W.shape}, header says ({m}, {n})")
    extra = {k: np.asarray(v, dtype=float) for k, v in doc.items()}
    return ModelFile(variant, W, float(r), extra)
