"""CART-style classification tree with Gini splits, surrogate splitters and
surrogate-weighted variable importance."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .kdd import ALL_CLASSES, Dataset, FeatureVector, AttackClass


@dataclass(frozen=True)
class Split:
    attribute: int
    threshold: float
    improvement: float  # Gini decrease at the node

    def goes_left(self, x):
        return np.asarray(x) <= self.threshold


@dataclass(frozen=True)
class Surrogate:
    rank: int
    attribute: int
    threshold: float
    agreement: float
    reverse: bool = False  # True: values above the threshold go left

    def goes_left(self, x):
        le = np.asarray(x) <= self.threshold
        return ~le if self.reverse else le


@dataclass
class Node:
    counts: np.ndarray  # per class, in tree.classes order
    prediction: int
    depth: int = 0
    split: Split | None = None
    surrogates: list[Surrogate] = field(default_factory=list)
    # improvement credited to the splitters of this node: the Gini decrease
    # weighted by the fraction of training cases reaching the node
    improvement: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def n(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 25
    min_node_size: int = 2
    max_surrogates: int = 5


def _class_index(y: np.ndarray, classes: Sequence[int]) -> np.ndarray:
    lut = {int(c): i for i, c in enumerate(classes)}
    try:
        return np.fromiter((lut[int(v)] for v in y), dtype=np.int64, count=len(y))
    except KeyError as exc:
        raise ValueError(f"class {exc.args[0]} not among {list(classes)}") from None


def _gini_improvement_exact(counts: np.ndarray, left: np.ndarray) -> Fraction:
    n = int(counts.sum())
    nl = int(left.sum())
    right = counts - left
    nr = n - nl
    a = int((left.astype(object) ** 2).sum())
    b = int((right.astype(object) ** 2).sum())
    p = int((counts.astype(object) ** 2).sum())
    return Fraction(a * nr + b * nl, nl * nr * n) - Fraction(p, n * n)


def _best_split_idx(X: np.ndarray, yi: np.ndarray, n_classes: int, min_node_size: int = 2):
    n, d = X.shape
    if n < max(min_node_size, 2):
        return None
    counts = np.bincount(yi, minlength=n_classes)
    if np.count_nonzero(counts) < 2:
        return None
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), yi] = 1
    nl_all = np.arange(1, n, dtype=np.int64)
    nr_all = n - nl_all

    best = None  # (score, attribute, position, order)
    for a in range(d):
        order = np.argsort(X[:, a], kind="stable")
        xs = X[order, a]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        cum = np.cumsum(onehot[order], axis=0)[:-1]
        right = counts - cum
        A = (cum * cum).sum(axis=1)
        B = (right * right).sum(axis=1)
        # sum of squared child counts over child size, as an exact-integer ratio
        score = (A * nr_all + B * nl_all) / (nl_all * nr_all)
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        s = score[i]
        if best is None or s > best[0]:
            best = (s, a, i, order, xs)
    if best is None:
        return None
    s, a, i, order, xs = best
    left_counts = np.bincount(yi[order[: i + 1]], minlength=n_classes)
    imp = _gini_improvement_exact(counts, left_counts)
    if imp <= 0:
        return None
    thr = (xs[i] + xs[i + 1]) / 2.0
    return Split(a, float(thr), float(imp))


def best_split(X, y, classes: Sequence[int] | None = None, min_node_size: int = 2) -> Split | None:
    """Gini-best threshold split over all attributes.

    Thresholds are midpoints between consecutive distinct values; cases with
    ``x <= threshold`` go left. Ties go to the lower attribute index, then the
    lower threshold. Returns ``None`` when no split lowers impurity.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    if classes is None:
        classes = sorted(int(c) for c in np.unique(y))
    return _best_split_idx(X, _class_index(y, classes), len(classes), min_node_size)


def find_surrogates(X, primary: Split, max_surrogates: int = 5) -> list[Surrogate]:
    """Splits on other attributes that best reproduce the primary's left/right routing.

    Only surrogates whose agreement beats sending every case in the primary's
    majority direction are kept, best agreement first.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if max_surrogates <= 0:
        return []
    n, d = X.shape
    go_left = X[:, primary.attribute] <= primary.threshold
    n_left = int(go_left.sum())
    baseline = max(n_left, n - n_left) / n
    nle = np.arange(1, n, dtype=np.int64)
    found = []
    for a in range(d):
        if a == primary.attribute:
            continue
        order = np.argsort(X[:, a], kind="stable")
        xs = X[order, a]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        left_le = np.cumsum(go_left[order])[:-1]
        # cases routed identically: (<= and primary-left) + (> and primary-right)
        same = left_le + (n - n_left) - (nle - left_le)
        fwd = np.where(valid, same, -1)
        rev = np.where(valid, n - same, -1)
        i_f, i_r = int(np.argmax(fwd)), int(np.argmax(rev))
        if rev[i_r] > fwd[i_f]:
            i, agree, reverse = i_r, rev[i_r], True
        else:
            i, agree, reverse = i_f, fwd[i_f], False
        agreement = agree / n
        if agreement > baseline:
            found.append((agreement, a, float((xs[i] + xs[i + 1]) / 2.0), reverse))
    found.sort(key=lambda t: (-t[0], t[1]))
    return [Surrogate(r + 1, a, thr, float(ag), rev)
            for r, (ag, a, thr, rev) in enumerate(found[:max_surrogates])]


@dataclass
class DecisionTree:
    root: Node
    classes: tuple[int, ...]
    labels: tuple[str, ...]
    params: TreeParams = TreeParams()

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes())

    @property
    def n_leaves(self) -> int:
        return sum(1 for node in self.nodes() if node.is_leaf)

    def _flat(self):
        flat = getattr(self, "_flat_cache", None)
        if flat is not None:
            return flat
        nodes = list(self.nodes())
        pos = {id(nd): i for i, nd in enumerate(nodes)}
        feat = np.full(len(nodes), -1)
        thr = np.zeros(len(nodes))
        left = np.full(len(nodes), -1)
        right = np.full(len(nodes), -1)
        frac = np.zeros((len(nodes), len(self.classes)))
        pred = np.zeros(len(nodes), dtype=np.int64)
        for i, nd in enumerate(nodes):
            frac[i] = nd.counts / max(nd.n, 1)
            pred[i] = nd.prediction
            if not nd.is_leaf:
                feat[i] = nd.split.attribute
                thr[i] = nd.split.threshold
                left[i] = pos[id(nd.left)]
                right[i] = pos[id(nd.right)]
        flat = (nodes, feat, thr, left, right, frac, pred)
        self._flat_cache = flat
        return flat

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.labels):
            raise ValueError(f"expected {len(self.labels)} attributes, got {X.shape[1]}")
        return X

    def _route(self, node: Node, x: np.ndarray) -> bool:
        v = x[node.split.attribute]
        if not np.isnan(v):
            return v <= node.split.threshold
        for s in node.surrogates:
            w = x[s.attribute]
            if not np.isnan(w):
                return bool(s.goes_left(w))
        return node.left.n >= node.right.n

    def leaf_index(self, X) -> np.ndarray:
        X = self._check(X)
        nodes, feat, thr, left, right, _, _ = self._flat()
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        missing = np.isnan(X).any(axis=1)
        active = rows[~missing]
        while active.size:
            f = feat[idx[active]]
            internal = f >= 0
            active = active[internal]
            if not active.size:
                break
            cur = idx[active]
            go = X[active, feat[cur]] <= thr[cur]
            idx[active] = np.where(go, left[cur], right[cur])
        pos = {id(nd): i for i, nd in enumerate(nodes)}
        for r in rows[missing]:
            node = self.root
            while not node.is_leaf:
                node = node.left if self._route(node, X[r]) else node.right
            idx[r] = pos[id(node)]
        return idx

    def predict(self, X) -> np.ndarray:
        return self._flat()[6][self.leaf_index(X)]

    def confidences(self, X) -> np.ndarray:
        """Class fractions of the training cases in the reached leaf."""
        return self._flat()[5][self.leaf_index(X)]

    def dump(self) -> str:
        out = []

        def walk(node: Node, indent: str):
            if node.is_leaf:
                out.append(f"{indent}class {node.prediction}  (n={node.n}, counts={node.counts.tolist()})")
                return
            lab = self.labels[node.split.attribute]
            sur = ", ".join(f"{self.labels[s.attribute]}{'>' if s.reverse else '<='}{s.threshold:.6g}"
                            f" [{s.agreement:.3f}]" for s in node.surrogates)
            note = f"  # surrogates: {sur}" if sur else ""
            out.append(f"{indent}if {lab} <= {node.split.threshold:.6g}:{note}")
            walk(node.left, indent + "    ")
            out.append(f"{indent}else:")
            walk(node.right, indent + "    ")

        walk(self.root, "")
        return "\n".join(out) + "\n"

    def to_dict(self) -> dict:
        def enc(node: Node) -> dict:
            d = {"counts": node.counts.tolist(), "prediction": node.prediction,
                 "depth": node.depth, "improvement": node.improvement}
            if not node.is_leaf:
                d["split"] = {"attribute": node.split.attribute, "threshold": node.split.threshold,
                              "improvement": node.split.improvement}
                d["surrogates"] = [{"rank": s.rank, "attribute": s.attribute, "threshold": s.threshold,
                                    "agreement": s.agreement, "reverse": s.reverse}
                                   for s in node.surrogates]
                d["left"] = enc(node.left)
                d["right"] = enc(node.right)
            return d

        return {"format": "softids/tree", "version": 1, "classes": list(self.classes),
                "labels": list(self.labels),
                "params": {"max_depth": self.params.max_depth,
                           "min_node_size": self.params.min_node_size,
                           "max_surrogates": self.params.max_surrogates},
                "root": enc(self.root)}

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        if doc.get("format") != "softids/tree" or doc.get("version") != 1:
            raise ValueError("not a version-1 tree document")

        def dec(d: dict) -> Node:
            node = Node(np.asarray(d["counts"], dtype=np.int64), int(d["prediction"]),
                        int(d["depth"]), improvement=float(d["improvement"]))
            if "split" in d:
                s = d["split"]
                node.split = Split(int(s["attribute"]), float(s["threshold"]), float(s["improvement"]))
                node.surrogates = [Surrogate(int(x["rank"]), int(x["attribute"]), float(x["threshold"]),
                                             float(x["agreement"]), bool(x["reverse"]))
                                   for x in d["surrogates"]]
                node.left = dec(d["left"])
                node.right = dec(d["right"])
            return node

        return cls(dec(doc["root"]), tuple(doc["classes"]), tuple(doc["labels"]),
                   TreeParams(**doc["params"]))


def grow_tree(data: Dataset, params: TreeParams = TreeParams(),
              classes: Sequence[int] = ALL_CLASSES) -> DecisionTree:
    if len(data) == 0:
        raise ValueError("cannot grow a tree on empty data")
    classes = tuple(int(c) for c in classes)
    yi = _class_index(data.y, classes)
    X = data.X
    n_total = len(data)
    k = len(classes)

    def build(idx: np.ndarray, depth: int) -> Node:
        counts = np.bincount(yi[idx], minlength=k)
        # majority, lowest class id on ties
        node = Node(counts, classes[int(np.argmax(counts))], depth)
        if depth >= params.max_depth or len(idx) < params.min_node_size:
            return node
        split = _best_split_idx(X[idx], yi[idx], k, params.min_node_size)
        if split is None:
            return node
        node.split = split
        node.improvement = split.improvement * len(idx) / n_total
        node.surrogates = find_surrogates(X[idx], split, params.max_surrogates)
        go = X[idx, split.attribute] <= split.threshold
        node.left = build(idx[go], depth + 1)
        node.right = build(idx[~go], depth + 1)
        return node

    return DecisionTree(build(np.arange(n_total), 0), classes, data.labels, params)


def predict(tree: DecisionTree, x) -> AttackClass | int:
    vec = x.x if isinstance(x, FeatureVector) else x
    cls = int(tree.predict(vec)[0])
    try:
        return AttackClass(cls)
    except ValueError:
        return cls


@dataclass(frozen=True)
class ImportanceTable:
    scores: dict[str, float]
    p: float

    def ranked(self) -> list[tuple[str, float]]:
        order = {lab: i for i, lab in enumerate(self.scores)}
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], order[kv[0]]))


def variable_importance(tree: DecisionTree, p: float = 0.5) -> ImportanceTable:
    """Sum over nodes of the node improvement for the primary splitter and
    ``p**rank`` times it for each surrogate. Competitor splits earn nothing."""
    if not 0 < p < 1:
        raise ValueError("surrogate weight p must lie in (0, 1)")
    scores = [0.0] * len(tree.labels)
    for node in tree.nodes():
        if node.is_leaf:
            continue
        scores[node.split.attribute] += node.improvement
        for s in node.surrogates:
            scores[s.attribute] += p ** s.rank * node.improvement
    return ImportanceTable(dict(zip(tree.labels, scores)), p)


def select_features(imp: ImportanceTable, k: int) -> tuple[str, ...]:
    if k > len(imp.scores):
        raise ValueError(f"cannot select {k} of {len(imp.scores)} attributes")
    if k < 0:
        raise ValueError("k must be nonnegative")
    return tuple(lab for lab, _ in imp.ranked()[:k])
