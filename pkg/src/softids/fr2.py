"""Grid-partition fuzzy rule classifier with certainty grades.

Every attribute is covered by K triangular fuzzy sets. A rule's antecedent is
one set per attribute (a grid cell); its consequent class and certainty grade
come from the summed compatibility of the training patterns of each class.

Enumerating all K**n cells is infeasible for n = 41, so candidate cells are
the ones occupied by training patterns: each pattern's cell takes, per
attribute, the set in which the pattern has maximal membership.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kdd import ALL_CLASSES, Dataset, FeatureVector

SET_NAMES_5 = ("S", "MS", "M", "ML", "L")
NO_CLASS = 0  # consequent of a rule whose class cannot be determined

_LOG_ZERO = -1e9
_CHUNK = 1024


@dataclass(frozen=True)
class FuzzyPartition:
    n_attributes: int
    K: int = 5

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("a fuzzy partition needs at least 2 sets")

    @property
    def peaks(self) -> np.ndarray:
        return np.arange(self.K) / (self.K - 1)

    def set_names(self) -> tuple[str, ...]:
        if self.K == 5:
            return SET_NAMES_5
        return tuple(f"F{j + 1}" for j in range(self.K))

    def membership(self, x, j):
        """Degree of ``x`` in fuzzy set ``j`` (0-based)."""
        x = np.asarray(x, dtype=np.float64)
        return np.maximum(0.0, 1.0 - np.abs(x - j / (self.K - 1)) * (self.K - 1))

    def memberships(self, X) -> np.ndarray:
        """All set degrees, shape ``X.shape + (K,)``."""
        X = np.asarray(X, dtype=np.float64)
        return np.maximum(0.0, 1.0 - np.abs(X[..., None] - self.peaks) * (self.K - 1))

    def cells(self, X) -> np.ndarray:
        """Per-attribute set of maximal membership (lowest index on ties)."""
        return np.argmax(self.memberships(X), axis=-1)


def build_partition(n_attributes: int, K: int = 5) -> FuzzyPartition:
    return FuzzyPartition(n_attributes, K)


@dataclass(frozen=True)
class FuzzyRule:
    antecedent: tuple[int, ...]
    consequent: int
    certainty: float


def compatibility(rule: FuzzyRule | Sequence[int], x, partition: FuzzyPartition) -> float:
    cell = rule.antecedent if isinstance(rule, FuzzyRule) else tuple(rule)
    vec = np.asarray(x.x if isinstance(x, FeatureVector) else x, dtype=np.float64)
    if vec.shape != (len(cell),) or len(cell) != partition.n_attributes:
        raise ValueError("pattern, rule and partition dimensions differ")
    pi = 1.0
    for i, j in enumerate(cell):
        pi *= float(partition.membership(vec[i], j))
    return pi


def _sparse_compatibility(M: np.ndarray, cells: np.ndarray, onehot: np.ndarray):
    """Nonzero compatibilities between patterns and cells.

    ``M`` holds memberships (m, n, K); ``onehot`` is the (n*K, R) indicator of
    ``cells``. Returns (pattern, rule, pi) arrays ordered by pattern then rule.
    The log-domain product only locates the nonzero pairs; pi itself is the
    plain product of the memberships, taken attribute by attribute.
    """
    m, n, K = M.shape
    pats, rules, vals = [], [], []
    n_idx = np.arange(n)
    for start in range(0, m, _CHUNK):
        Mc = M[start:start + _CHUNK]
        with np.errstate(divide="ignore"):
            logM = np.where(Mc > 0, np.log(np.where(Mc > 0, Mc, 1.0)), _LOG_ZERO)
        logpi = logM.reshape(len(Mc), n * K) @ onehot
        p, r = np.nonzero(logpi > _LOG_ZERO / 2)
        if p.size:
            factors = Mc[p[:, None], n_idx, cells[r]]
            pi = np.prod(factors, axis=1)
            keep = pi > 0
            pats.append(p[keep] + start)
            rules.append(r[keep])
            vals.append(pi[keep])
    if not pats:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    return np.concatenate(pats), np.concatenate(rules), np.concatenate(vals)


def _onehot(cells: np.ndarray, K: int) -> np.ndarray:
    R, n = cells.shape
    oh = np.zeros((n * K, R))
    oh[(np.arange(n) * K)[None, :] + cells, np.arange(R)[:, None]] = 1.0
    return oh


def class_sums(cell: Sequence[int], data: Dataset, partition: FuzzyPartition,
               classes: Sequence[int] = ALL_CLASSES) -> np.ndarray:
    """Summed compatibility of each class's patterns with one cell."""
    cells = np.asarray([cell], dtype=np.int64)
    return _class_sums(cells, data, partition, classes)[0]


def _class_sums(cells: np.ndarray, data: Dataset, partition: FuzzyPartition,
                classes: Sequence[int]) -> np.ndarray:
    classes = [int(c) for c in classes]
    c = len(classes)
    R = len(cells)
    if R == 0 or len(data) == 0:
        return np.zeros((R, c))
    cls_pos = {k: i for i, k in enumerate(classes)}
    yk = np.array([cls_pos.get(int(v), -1) for v in data.y])
    M = partition.memberships(data.X)
    p, r, pi = _sparse_compatibility(M, cells, _onehot(cells, partition.K))
    ok = yk[p] >= 0
    flat = np.bincount(r[ok] * c + yk[p[ok]], weights=pi[ok], minlength=R * c)
    return flat.reshape(R, c)


def assign_consequent(beta: Sequence[float], classes: Sequence[int] | None = None) -> tuple[int, float]:
    """Consequent class and certainty grade from per-class compatibility sums.

    Returns ``(NO_CLASS, 0.0)`` when the maximum is shared or every sum is zero.
    """
    beta = [float(b) for b in beta]
    if classes is None:
        classes = range(1, len(beta) + 1)
    classes = list(classes)
    c = len(beta)
    top = max(beta)
    if top <= 0 or beta.count(top) > 1:
        return NO_CLASS, 0.0
    k = beta.index(top)
    total = sum(beta)
    rest = sum(b for i, b in enumerate(beta) if i != k) / (c - 1) if c > 1 else 0.0
    cf = (top - rest) / total
    return int(classes[k]), min(max(cf, 0.0), 1.0)


@dataclass(frozen=True)
class FuzzyRuleBase:
    cells: np.ndarray  # (R, n) set indices
    consequents: np.ndarray  # (R,)
    certainties: np.ndarray  # (R,)
    partition: FuzzyPartition
    labels: tuple[str, ...]
    classes: tuple[int, ...] = tuple(int(c) for c in ALL_CLASSES)

    def __len__(self) -> int:
        return len(self.consequents)

    @property
    def rules(self) -> list[FuzzyRule]:
        return [FuzzyRule(tuple(int(j) for j in cell), int(k), float(cf))
                for cell, k, cf in zip(self.cells, self.consequents, self.certainties)]

    def with_certainties(self, cf: np.ndarray) -> "FuzzyRuleBase":
        return FuzzyRuleBase(self.cells, self.consequents, np.asarray(cf, dtype=np.float64),
                             self.partition, self.labels, self.classes)

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.partition.n_attributes:
            raise ValueError(f"expected {self.partition.n_attributes} attributes, got {X.shape[1]}")
        return X

    def compatibilities(self, X):
        """Sparse nonzero (pattern, rule, pi) triples."""
        X = self._check(X)
        if len(self) == 0:
            e = np.empty(0, np.int64)
            return e, e, np.empty(0)
        return _sparse_compatibility(self.partition.memberships(X), self.cells,
                                     _onehot(self.cells, self.partition.K))

    def _score_matrix(self, X) -> np.ndarray:
        X = self._check(X)
        S = np.zeros((X.shape[0], len(self)))
        p, r, pi = self.compatibilities(X)
        S[p, r] = pi * self.certainties[r]
        return S

    def winners(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Winning rule index per pattern (-1 when nothing covers it) and its score."""
        S = self._score_matrix(X)
        if S.shape[1] == 0:
            return np.full(S.shape[0], -1), np.zeros(S.shape[0])
        j = np.argmax(S, axis=1)
        score = S[np.arange(S.shape[0]), j]
        return np.where(score > 0, j, -1), score

    def predict(self, X) -> np.ndarray:
        """Winning consequent per pattern; ``NO_CLASS`` (0) marks a reject."""
        j, _ = self.winners(X)
        return np.where(j >= 0, self.consequents[np.maximum(j, 0)] if len(self) else 0, NO_CLASS)

    def confidences(self, X) -> np.ndarray:
        """Per class, the best pi * CF among that class's rules."""
        S = self._score_matrix(X)
        out = np.zeros((S.shape[0], len(self.classes)))
        for i, k in enumerate(self.classes):
            cols = self.consequents == k
            if cols.any():
                out[:, i] = S[:, cols].max(axis=1)
        return out

    def describe(self) -> str:
        names = self.partition.set_names()
        lines = []
        for cell, k, cf in zip(self.cells, self.consequents, self.certainties):
            terms = " and ".join(f"{lab} is {names[j]}" for lab, j in zip(self.labels, cell))
            lines.append(f"If {terms} then class {int(k)} with CF = {cf:.6f}")
        return "\n".join(lines) + ("\n" if lines else "")

    def to_dict(self) -> dict:
        return {
            "format": "softids/fr2",
            "version": 1,
            "K": self.partition.K,
            "labels": list(self.labels),
            "classes": list(self.classes),
            "rules": [
                {"cell": [int(j) for j in cell], "class": int(k), "cf": float(cf)}
                for cell, k, cf in zip(self.cells, self.consequents, self.certainties)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FuzzyRuleBase":
        if doc.get("format") != "softids/fr2" or doc.get("version") != 1:
            raise ValueError("not a version-1 fr2 rule-base document")
        labels = tuple(doc["labels"])
        n = len(labels)
        rules = doc["rules"]
        cells = np.asarray([r["cell"] for r in rules], dtype=np.int64).reshape(len(rules), n)
        return cls(cells,
                   np.asarray([r["class"] for r in rules], dtype=np.int64),
                   np.asarray([r["cf"] for r in rules], dtype=np.float64),
                   FuzzyPartition(n, int(doc["K"])), labels, tuple(doc["classes"]))


def generate_rules(data: Dataset, partition: FuzzyPartition | None = None,
                   classes: Sequence[int] = ALL_CLASSES) -> FuzzyRuleBase:
    """Rules for every occupied cell; cells whose class is undetermined are dropped.

    Rules come out in lexicographic cell order.
    """
    if partition is None:
        partition = FuzzyPartition(data.n_attributes)
    if partition.n_attributes != data.n_attributes:
        raise ValueError("partition and data dimensions differ")
    classes = tuple(int(c) for c in classes)
    if len(data) == 0:
        raise ValueError("cannot generate rules from an empty dataset")
    occupied = np.unique(partition.cells(data.X), axis=0)
    beta = _class_sums(occupied, data, partition, classes)
    cons = np.zeros(len(occupied), dtype=np.int64)
    cf = np.zeros(len(occupied))
    for r in range(len(occupied)):
        cons[r], cf[r] = assign_consequent(beta[r], classes)
    keep = cons != NO_CLASS
    return FuzzyRuleBase(occupied[keep], cons[keep], cf[keep], partition, data.labels, classes)


def classify_fr2(rb: FuzzyRuleBase, x) -> tuple[int, float] | None:
    """Winning class and its pi * CF, or ``None`` when no rule covers ``x``."""
    vec = x.x if isinstance(x, FeatureVector) else x
    j, score = rb.winners(vec)
    if j[0] < 0:
        return None
    return int(rb.consequents[j[0]]), float(score[0])


def tune_certainty(rb: FuzzyRuleBase, data: Dataset, epochs: int = 10,
                   eta_up: float = 0.001, eta_down: float = 0.001) -> FuzzyRuleBase:
    """Reward/punish learning of the certainty grades.

    Patterns are visited in dataset order; the winning rule's CF moves toward 1
    when its class is right and toward 0 when it is wrong.
    """
    if not (0 < eta_up < 1 and 0 < eta_down < 1):
        raise ValueError("learning rates must lie in (0, 1)")
    cf = rb.certainties.astype(np.float64).copy()
    if len(rb) == 0 or len(data) == 0:
        return rb.with_certainties(cf)
    p, r, pi = rb.compatibilities(data.X)
    bounds = np.searchsorted(p, np.arange(len(data) + 1))
    y = data.y
    for _ in range(epochs):
        for q in range(len(data)):
            lo, hi = bounds[q], bounds[q + 1]
            if lo == hi:
                continue
            rq = r[lo:hi]
            s = pi[lo:hi] * cf[rq]
            i = int(np.argmax(s))
            if s[i] <= 0:
                continue
            j = rq[i]
            if rb.consequents[j] == y[q]:
                cf[j] += eta_up * (1.0 - cf[j])
            else:
                cf[j] -= eta_down * cf[j]
    return rb.with_certainties(np.clip(cf, 0.0, 1.0))
