"""Confusion matrices, per-class accuracy, per-class expert ensemble and
comparison tables.

Any model works here if it exposes ``labels`` (the attribute labels it was
trained on), ``predict(X)`` returning class ids with 0 for a reject, and
``confidences(X)`` returning one column per class in ``ALL_CLASSES`` order.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .kdd import ALL_CLASSES, AttackClass, Dataset, FeatureVector

CLASS_IDS = tuple(int(c) for c in ALL_CLASSES)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes plus a final reject column."""

    counts: np.ndarray  # (c, c + 1)
    classes: tuple[int, ...] = CLASS_IDS

    @classmethod
    def from_predictions(cls, y_true, y_pred, classes: Sequence[int] = CLASS_IDS) -> "ConfusionMatrix":
        classes = tuple(int(c) for c in classes)
        pos = {k: i for i, k in enumerate(classes)}
        c = len(classes)
        counts = np.zeros((c, c + 1), dtype=np.int64)
        for t, p in zip(np.asarray(y_true).tolist(), np.asarray(y_pred).tolist()):
            counts[pos[int(t)], pos.get(int(p), c)] += 1
        return cls(counts, classes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def rejects(self) -> np.ndarray:
        return self.counts[:, -1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + [AttackClass(k).display for k in self.classes] + ["reject"])
        for k, row in zip(self.classes, self.counts):
            w.writerow([AttackClass(k).display] + [int(v) for v in row])
        return buf.getvalue()


def _project(model, data: Dataset) -> np.ndarray:
    labels = tuple(model.labels)
    if labels == data.labels:
        return data.X
    missing = set(labels) - set(data.labels)
    if missing:
        raise ValueError(f"data lacks attributes the model needs: {sorted(missing)}")
    col = {lab: i for i, lab in enumerate(data.labels)}
    return data.X[:, [col[lab] for lab in labels]]


def evaluate(model, data: Dataset) -> ConfusionMatrix:
    return ConfusionMatrix.from_predictions(data.y, model.predict(_project(model, data)))


def per_class_accuracy(cm: ConfusionMatrix) -> dict[int, float]:
    """Per-class recall in percent; rejects count as errors."""
    out = {}
    for i, k in enumerate(cm.classes):
        n = int(cm.counts[i].sum())
        if n == 0:
            raise ValueError(f"class {k} has no test instances")
        out[k] = 100.0 * int(cm.counts[i, i]) / n
    return out


@dataclass(frozen=True)
class EnsembleAssignment:
    experts: dict[int, str]  # class id -> model name
    validation_accuracy: dict[str, dict[int, float]]


def _named(models) -> list[tuple[str, object]]:
    if isinstance(models, Mapping):
        return list(models.items())
    return [(getattr(m, "name", f"model{i}"), m) if not isinstance(m, tuple) else m
            for i, m in enumerate(models)]


def assign_experts(models, validation: Dataset) -> EnsembleAssignment:
    """Per class, the model with the best validation recall; earlier models win ties."""
    named = _named(models)
    if not named:
        raise ValueError("need at least one model")
    acc = {name: per_class_accuracy(evaluate(m, validation)) for name, m in named}
    experts = {}
    for k in CLASS_IDS:
        best_name, best = None, -1.0
        for name, _ in named:
            if acc[name][k] > best:
                best_name, best = name, acc[name][k]
        experts[k] = best_name
    return EnsembleAssignment(experts, acc)


@dataclass
class Ensemble:
    """Each class's expert scores how strongly a pattern belongs to that class.

    Each model's confidences are min-max calibrated on the validation set
    (one range per model, over the columns it is expert for), and the class
    with the highest calibrated score wins (lowest class id on ties).
    """

    assignment: EnsembleAssignment
    models: dict[str, object]
    low: np.ndarray
    high: np.ndarray

    @property
    def labels(self) -> tuple[str, ...]:
        seen = []
        for name in dict.fromkeys(self.assignment.experts.values()):
            for lab in self.models[name].labels:
                if lab not in seen:
                    seen.append(lab)
        return tuple(seen)

    def _raw(self, data: Dataset) -> np.ndarray:
        out = np.zeros((len(data), len(CLASS_IDS)))
        for name in dict.fromkeys(self.assignment.experts.values()):
            model = self.models[name]
            conf = np.asarray(model.confidences(_project(model, data)), dtype=np.float64)
            for i, k in enumerate(CLASS_IDS):
                if self.assignment.experts[k] == name:
                    out[:, i] = conf[:, i]
        return out

    def scores(self, data: Dataset) -> np.ndarray:
        raw = self._raw(data)
        span = self.high - self.low
        cal = np.where(span > 0, (raw - self.low) / np.where(span > 0, span, 1.0), raw)
        return np.clip(cal, 0.0, 1.0)

    def predict_dataset(self, data: Dataset) -> np.ndarray:
        return np.asarray(CLASS_IDS)[np.argmax(self.scores(data), axis=1)]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        labels = self.labels
        return self.predict_dataset(Dataset(X, np.ones(len(X), dtype=np.int64), labels))


def build_ensemble(models, validation: Dataset,
                   assignment: EnsembleAssignment | None = None) -> Ensemble:
    named = dict(_named(models))
    if assignment is None:
        assignment = assign_experts(named, validation)
    missing = [k for k, name in assignment.experts.items() if name not in named]
    if missing:
        raise ValueError(f"no expert model loaded for classes {missing}")
    ens = Ensemble(assignment, named, np.zeros(len(CLASS_IDS)), np.ones(len(CLASS_IDS)))
    raw = ens._raw(validation)
    for name in dict.fromkeys(assignment.experts.values()):
        cols = [i for i, k in enumerate(CLASS_IDS) if assignment.experts[k] == name]
        ens.low[cols], ens.high[cols] = raw[:, cols].min(), raw[:, cols].max()
    return ens


def classify_ensemble(ensemble: Ensemble, x: FeatureVector) -> AttackClass:
    data = Dataset(x.x[None, :], np.ones(1, dtype=np.int64), x.labels)
    return AttackClass(int(ensemble.predict_dataset(data)[0]))


def evaluate_ensemble(ensemble: Ensemble, data: Dataset) -> ConfusionMatrix:
    return ConfusionMatrix.from_predictions(data.y, ensemble.predict_dataset(data))


# --- reports ------------------------------------------------------------------

@dataclass(frozen=True)
class Report:
    title: str
    feature_set: str
    models: tuple[str, ...]
    accuracy: dict[str, dict[int, float]]

    def rows(self) -> list[list[str]]:
        out = []
        for k in CLASS_IDS:
            out.append([AttackClass(k).display] + [f"{self.accuracy[m][k]:.2f}" for m in self.models])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["attack_type"] + list(self.models))
        w.writerows(self.rows())
        return buf.getvalue()

    def to_text(self) -> str:
        header = ["Attack type"] + list(self.models)
        body = self.rows()
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        fmt = lambda r: "  ".join(s.ljust(widths[0]) if i == 0 else s.rjust(widths[i])
                                  for i, s in enumerate(r))
        lines = [self.title, f"Feature set: {self.feature_set}",
                 "Classification accuracy on test data (%)", fmt(header),
                 "  ".join("-" * w for w in widths)]
        lines += [fmt(r) for r in body]
        return "\n".join(lines) + "\n"


def comparison_report(matrices: Mapping[str, ConfusionMatrix], feature_set: str,
                      title: str = "Performance comparison") -> Report:
    if not matrices:
        raise ValueError("no models to compare")
    class_sets = {cm.classes for cm in matrices.values()}
    if len(class_sets) != 1:
        raise ValueError("confusion matrices disagree on the class set")
    acc = {name: per_class_accuracy(cm) for name, cm in matrices.items()}
    return Report(title, feature_set, tuple(matrices), acc)


def report_from_accuracy(accuracy: Mapping[str, Mapping[int, float]], feature_set: str,
                         title: str = "Performance comparison") -> Report:
    if not accuracy:
        raise ValueError("no models to compare")
    return Report(title, feature_set, tuple(accuracy),
                  {m: {int(k): float(v) for k, v in a.items()} for m, a in accuracy.items()})
