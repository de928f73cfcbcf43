"""JSON persistence for fitted models.

Floats are written with Python's shortest round-trip representation, so a
saved and reloaded model reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, baselines
from .data import Dataset
from .exceptions import DataError
from .opnb import TrainedOPNBModel
from .scaling import ScalingParams, apply_scaling

FORMAT = "nbproj-model"


@dataclass
class ScaledClassifier:
    """A baseline fitted on training data divided by ``column_scales``."""

    model: object
    column_scales: np.ndarray
    label_names: tuple = ()

    @property
    def kind(self) -> str:
        return self.model.kind

    def _scale(self, X_new):
        X_new = np.asarray(X_new, dtype=float)
        return apply_scaling(np.atleast_2d(X_new), ScalingParams(self.column_scales))

    def predict(self, X_new):
        return self.model.predict(self._scale(X_new))

    def posterior(self, X_new):
        return self.model.posterior(self._scale(X_new))

    def log_posterior(self, X_new):
        return self.model.log_posterior(self._scale(X_new))


def _arr(a):
    return np.asarray(a).tolist()


def _encode_baseline(m) -> dict:
    kind = m.kind
    if kind in ("nb", "kdda"):
        doc = {"X": _arr(m.X), "y": _arr(m.y), "bandwidths": _arr(m.bandwidths),
               "priors": _arr(m.priors), "params": m.params}
        if kind == "nb":
            doc["kernel"] = m.kernel
        return doc
    if kind == "lda":
        return {"means": _arr(m.means), "directions": _arr(m.directions),
                "priors": _arr(m.priors), "params": m.params}
    if kind == "rda":
        return {"means": _arr(m.means), "chol": _arr(m.chol), "priors": _arr(m.priors),
                "params": m.params}
    if kind in ("nc", "1nn"):
        return {"X": _arr(m.train.X), "y": _arr(m.train.y)}
    raise ValueError(f"cannot serialise a {kind!r} model")


def _decode_baseline(kind: str, doc: dict):
    arrays = ("X", "bandwidths", "priors", "means", "directions", "chol")
    a = {k: np.array(doc[k], dtype=float) for k in arrays if k in doc}
    if kind == "nb":
        return baselines.NBModel(X=a["X"], y=np.array(doc["y"], dtype=np.int64),
                                 bandwidths=a["bandwidths"], priors=a["priors"],
                                 kernel=doc["kernel"], params=doc["params"])
    if kind == "kdda":
        return baselines.KDDAModel(X=a["X"], y=np.array(doc["y"], dtype=np.int64),
                                   bandwidths=a["bandwidths"], priors=a["priors"],
                                   params=doc["params"])
    if kind == "lda":
        return baselines.LDAModel(means=a["means"], directions=a["directions"],
                                  priors=a["priors"], params=doc["params"])
    if kind == "rda":
        return baselines.GaussianDAModel(means=a["means"], chol=a["chol"], priors=a["priors"],
                                         params=doc["params"])
    if kind in ("nc", "1nn"):
        ds = Dataset(X=a["X"], y=np.array(doc["y"], dtype=np.int64))
        return baselines.NCModel(ds) if kind == "nc" else baselines.OneNNModel(ds)
    raise DataError(f"unknown model kind {kind!r}")


def model_to_dict(model, extra: dict | None = None) -> dict:
    if isinstance(model, TrainedOPNBModel):
        body = model.to_dict()
    elif isinstance(model, ScaledClassifier):
        body = {"kind": model.kind, "column_scales": _arr(model.column_scales),
                "label_names": list(model.label_names), **_encode_baseline(model.model)}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    doc = {"format": FORMAT, "version": __version__, "model": body}
    if extra:
        doc.update(extra)
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise DataError("not an nbproj model file")
    body = doc["model"]
    kind = body["kind"]
    if kind == "opnb":
        return TrainedOPNBModel.from_dict(body)
    inner = _decode_baseline(kind, body)
    return ScaledClassifier(inner, np.array(body["column_scales"], dtype=float),
                            tuple(body.get("label_names", ())))


def save_model(model, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, extra), indent=1) + "\n")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)
