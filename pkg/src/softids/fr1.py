"""One-rule-per-class fuzzy classifier.

Each class gets a single rule whose antecedent on attribute ``i`` is a Gaussian
built from the class mean and standard deviation of that attribute. The
winning class maximizes the product of antecedent memberships.

The module also provides the 20-set smoothed-histogram membership functions,
which describe the per-class attribute distributions on the unit interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kdd import ALL_CLASSES, AttackClass, Dataset, FeatureVector

N_HISTOGRAM_SETS = 20
SIGMA_FLOOR = 1e-3
MEMBERSHIP_FLOOR = 1e-300


def interval_boundaries(n_sets: int = N_HISTOGRAM_SETS) -> np.ndarray:
    """Boundaries beta_0..beta_n of the 0.5-level sets of the histogram MFs."""
    h = np.arange(n_sets + 1, dtype=np.float64)
    beta = (h - 0.5) / (n_sets - 1)
    beta[0] = 0.0
    beta[-1] = 1.0
    return beta


def histogram_memberships(x, n_sets: int = N_HISTOGRAM_SETS) -> np.ndarray:
    """Degrees of ``x`` in the triangular sets f_1..f_n; shape ``x.shape + (n,)``.

    f_h peaks at (h-1)/(n-1) and reaches zero at the neighbouring peaks.
    """
    x = np.asarray(x, dtype=np.float64)
    peaks = np.arange(n_sets) / (n_sets - 1)
    return np.maximum(0.0, 1.0 - np.abs(x[..., None] - peaks) * (n_sets - 1))


@dataclass(frozen=True)
class HistogramMF:
    bins: np.ndarray
    boundaries: np.ndarray

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
        h = np.searchsorted(self.boundaries, x, side="left") - 1
        return self.bins[np.clip(h, 0, len(self.bins) - 1)]


def smoothed_histogram(data: Dataset, attribute: int, cls: int,
                       n_sets: int = N_HISTOGRAM_SETS) -> HistogramMF:
    values = data.X[data.y == int(cls), attribute]
    if values.size == 0:
        raise ValueError(f"class {int(cls)} has no patterns")
    bins = histogram_memberships(values, n_sets).mean(axis=0)
    top = bins.max()
    if top > 0:
        bins = bins / top
    return HistogramMF(bins, interval_boundaries(n_sets))


def gaussian_membership(x, mu, sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    z = (np.asarray(x, dtype=np.float64) - mu) / sigma
    return np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class FR1Model:
    classes: tuple[int, ...]
    labels: tuple[str, ...]
    means: np.ndarray  # (classes, attributes)
    stds: np.ndarray

    @property
    def n_attributes(self) -> int:
        return self.means.shape[1]

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_attributes:
            raise ValueError(f"expected {self.n_attributes} attributes, got {X.shape[1]}")
        return X

    def log_scores(self, X) -> np.ndarray:
        """Sum of log memberships per class, memberships floored before the log."""
        X = self._check(X)
        out = np.empty((X.shape[0], len(self.classes)))
        for k in range(len(self.classes)):
            mu = gaussian_membership(X, self.means[k], self.stds[k])
            out[:, k] = np.log(np.maximum(mu, MEMBERSHIP_FLOOR)).sum(axis=1)
        return out

    def predict(self, X) -> np.ndarray:
        ls = self.log_scores(X)
        return np.asarray(self.classes)[np.argmax(ls, axis=1)]

    def confidences(self, X) -> np.ndarray:
        """Per-class product score relative to the winning class (winner = 1)."""
        ls = self.log_scores(X)
        return np.exp(ls - ls.max(axis=1, keepdims=True))

    def to_dict(self) -> dict:
        return {
            "format": "softids/fr1",
            "version": 1,
            "classes": list(self.classes),
            "labels": list(self.labels),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FR1Model":
        _check_format(doc, "softids/fr1")
        return cls(tuple(doc["classes"]), tuple(doc["labels"]),
                   np.asarray(doc["means"], dtype=np.float64),
                   np.asarray(doc["stds"], dtype=np.float64))


def _check_format(doc: dict, fmt: str) -> None:
    if doc.get("format") != fmt:
        raise ValueError(f"expected a {fmt} document, got {doc.get('format')!r}")
    if doc.get("version") != 1:
        raise ValueError(f"unsupported {fmt} version {doc.get('version')!r}")


def train_fr1(data: Dataset, classes: Sequence[int] = ALL_CLASSES,
              sigma_floor: float = SIGMA_FLOOR) -> FR1Model:
    classes = tuple(int(c) for c in classes)
    absent = [c for c in classes if not np.any(data.y == c)]
    if absent:
        raise ValueError(f"classes absent from training data: {absent}")
    means = np.stack([data.X[data.y == c].mean(axis=0) for c in classes])
    stds = np.stack([data.X[data.y == c].std(axis=0) for c in classes])
    return FR1Model(classes, data.labels, means, np.maximum(stds, sigma_floor))


def classify_fr1(model: FR1Model, x: FeatureVector | np.ndarray) -> tuple[AttackClass | int, float]:
    vec = x.x if isinstance(x, FeatureVector) else x
    ls = model.log_scores(vec)[0]
    k = int(np.argmax(ls))
    cls = model.classes[k]
    try:
        cls = AttackClass(cls)
    except ValueError:
        pass
    return cls, float(np.exp(ls[k]))
