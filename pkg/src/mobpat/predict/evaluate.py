"""Model dispatch, held-out scoring and accuracy-through-time curves."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InsufficientHistory, UnfittedModel
from ..matrices import TimeOrientedMatrix
from .baselines import KINDS, BaselineModel, UniformModel, train_baseline
from .rnn import RnnModel, train_rnn
from .windows import WindowedSet, make_windows

MODEL_KINDS = ("rnn",) + KINDS


@dataclass(frozen=True)
class ModelSpec:
    name: str
    kind: str
    hyper: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")

    @classmethod
    def of(cls, kind: str, seed: int = 0, **hyper) -> "ModelSpec":
        return cls(kind, kind, hyper, seed)


Model = RnnModel | BaselineModel


def fit_model(spec: ModelSpec, ws: WindowedSet) -> Model:
    if spec.kind == "rnn":
        return train_rnn(ws, seed=spec.seed, **spec.hyper)
    return train_baseline(spec.kind, ws, spec.hyper, seed=spec.seed)


def predict_labels(model: Model, x: np.ndarray, objects: np.ndarray | None = None) -> np.ndarray:
    if isinstance(model, RnnModel):
        return model.predict(x)
    return model.predict(x, objects)


def predict_next(model: Model, window, obj: int | None = None) -> tuple[int, np.ndarray]:
    """Predict the next location for one window.

    Returns the class id and a probability vector over all classes.
    """
    if model is None:
        raise UnfittedModel("no model")
    x = np.asarray(window, dtype=np.int64)[None, :]
    objects = None if obj is None else np.array([obj])
    if isinstance(model, RnnModel):
        probs = model.predict_proba(x)[0]
        return int(np.argmax(probs)), probs
    probs = model.predict_proba(x, objects)[0]
    if isinstance(model, UniformModel):
        return int(model.predict(x)[0]), probs
    return int(np.argmax(probs)), probs


def confusion(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (y_true, y_pred), 1)
    return m


@dataclass
class EvaluationReport:
    accuracy: dict[str, float] = field(default_factory=dict)
    curves: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    confusion: dict[str, list[list[int]]] = field(default_factory=dict)
    n_test: dict[str, int] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "accuracy": {k: round(v, 12) for k, v in self.accuracy.items()},
            "curves": {k: [[m, round(a, 12)] for m, a in v] for k, v in self.curves.items()},
            "confusion": self.confusion,
            "n_test": self.n_test,
            "meta": self.meta,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "minutes", "accuracy"])
        for name in self.curves:
            for minutes, acc in self.curves[name]:
                w.writerow([name, minutes, f"{acc:.6f}"])
        return buf.getvalue()


def _cells(tom) -> np.ndarray:
    return tom.cells if isinstance(tom, TimeOrientedMatrix) else np.asarray(tom)


def evaluate_split(
    specs: list[ModelSpec],
    tom: TimeOrientedMatrix,
    split_bin: int,
    width: int = 8,
    n_classes: int | None = None,
    drop_all_absent: bool = False,
) -> tuple[EvaluationReport, dict[str, Model], WindowedSet]:
    """Train on windows labelled before ``split_bin``; score on the rest."""
    cells = _cells(tom)
    if n_classes is None:
        n_classes = int(cells.max(initial=0)) + 1
    train = make_windows(cells, width, drop_all_absent=drop_all_absent, n_classes=n_classes, last_label=split_bin)
    test = make_windows(cells, width, n_classes=n_classes, first_label=split_bin)
    if len(test) == 0:
        raise InsufficientHistory(f"no test windows at or after bin {split_bin}")
    report = EvaluationReport(meta={"split_bin": split_bin, "width": width, "n_train": len(train)})
    models = {}
    for spec in specs:
        model = fit_model(spec, train)
        pred = predict_labels(model, test.inputs, test.objects)
        models[spec.name] = model
        report.accuracy[spec.name] = float(np.mean(pred == test.labels))
        report.confusion[spec.name] = confusion(test.labels, pred, n_classes).tolist()
        report.n_test[spec.name] = len(test)
    return report, models, test


def evaluate_over_time(
    specs: list[ModelSpec],
    tom: TimeOrientedMatrix,
    target_bin: int,
    probe_minutes: list[int],
    width: int = 8,
    n_classes: int | None = None,
    drop_all_absent: bool = False,
) -> EvaluationReport:
    """Accuracy at ``target_bin`` as the training history grows.

    For each probe length the models are retrained on windows lying wholly
    inside the last ``m`` minutes before ``target_bin`` and asked to predict
    every object's location at ``target_bin``.  The longest probe supplies
    the overall accuracy and confusion matrix.
    """
    cells = _cells(tom)
    n_obj, n_bins = cells.shape
    bin_seconds = tom.binning.bin_seconds if isinstance(tom, TimeOrientedMatrix) else 3600
    if not width <= target_bin < n_bins:
        raise InsufficientHistory(f"target bin {target_bin} leaves no room for a {width}-bin window")
    if n_classes is None:
        n_classes = int(cells.max(initial=0)) + 1
    x_test = cells[:, target_bin - width : target_bin]
    y_test = cells[:, target_bin]
    objects = np.arange(n_obj)
    probes = sorted(set(int(m) for m in probe_minutes))
    report = EvaluationReport(meta={"target_bin": target_bin, "width": width, "probe_minutes": probes})
    for spec in specs:
        report.curves[spec.name] = []
    for m in probes:
        back = math.ceil(m * 60 / bin_seconds)
        lo = target_bin - back
        if lo < 0 or back < width + 1:
            raise InsufficientHistory(f"{m} minutes gives {back} bins; need {width + 1}..{target_bin}")
        ws = make_windows(cells[:, lo:target_bin], width, drop_all_absent=drop_all_absent, n_classes=n_classes)
        for spec in specs:
            model = fit_model(spec, ws)
            pred = predict_labels(model, x_test, objects)
            acc = float(np.mean(pred == y_test)) if n_obj else 0.0
            report.curves[spec.name].append((m, acc))
            if m == probes[-1]:
                report.accuracy[spec.name] = acc
                report.confusion[spec.name] = confusion(y_test, pred, n_classes).tolist()
                report.n_test[spec.name] = n_obj
    return report
