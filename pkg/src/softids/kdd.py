"""KDD Cup 1999 connection records: parsing, label taxonomy, encoding, scaling, splitting."""

from __future__ import annotations

import enum
import gzip
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

N_ATTRIBUTES = 41

ATTRIBUTE_NAMES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
    "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files", "num_outbound_cmds",
    "is_host_login", "is_guest_login", "count", "srv_count", "serror_rate",
    "srv_serror_rate", "rerror_rate", "srv_rerror_rate", "same_srv_rate",
    "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate", "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)


def _column_letters(n: int) -> tuple[str, ...]:
    out = []
    for i in range(n):
        s = ""
        i += 1
        while i:
            i, r = divmod(i - 1, 26)
            s = chr(ord("A") + r) + s
        out.append(s)
    return tuple(out)


# A..Z, AA..AO
ATTRIBUTE_LABELS = _column_letters(N_ATTRIBUTES)
LABEL_INDEX = {lab: i for i, lab in enumerate(ATTRIBUTE_LABELS)}

# 0-based positions of protocol_type, service, flag, land, logged_in,
# is_host_login, is_guest_login
DISCRETE_ATTRIBUTES = (1, 2, 3, 6, 11, 20, 21)
_DISCRETE = frozenset(DISCRETE_ATTRIBUTES)

# the reduced 12-attribute set reported for the original experiments
REFERENCE_REDUCED_SET = ("C", "E", "F", "L", "W", "X", "Y", "AB", "AE", "AF", "AG", "AI")


class AttackClass(enum.IntEnum):
    NORMAL = 1
    PROBE = 2
    DOS = 3
    U2R = 4
    R2L = 5

    @property
    def display(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def from_category(cls, name: str) -> "AttackClass":
        try:
            return _CATEGORY[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown attack category {name!r}") from None


_DISPLAY = {
    AttackClass.NORMAL: "Normal",
    AttackClass.PROBE: "Probe",
    AttackClass.DOS: "DoS",
    AttackClass.U2R: "U2R",
    AttackClass.R2L: "R2L",
}
_CATEGORY = {
    "normal": AttackClass.NORMAL,
    "probe": AttackClass.PROBE,
    "dos": AttackClass.DOS,
    "u2r": AttackClass.U2R,
    "u2su": AttackClass.U2R,
    "r2l": AttackClass.R2L,
}

ALL_CLASSES = tuple(AttackClass)


class ParseError(ValueError):
    def __init__(self, message: str, field_index: int | None = None):
        super().__init__(message)
        self.field_index = field_index


class UnknownLabelError(ValueError):
    def __init__(self, label: str):
        super().__init__(f"label {label!r} is not in the attack taxonomy")
        self.label = label


@dataclass(frozen=True)
class ConnectionRecord:
    values: tuple
    raw_label: str

    def __post_init__(self):
        if len(self.values) != N_ATTRIBUTES:
            raise ParseError(f"expected {N_ATTRIBUTES} attribute values, got {len(self.values)}")


def parse_record(line: str) -> ConnectionRecord:
    """Parse one comma-separated KDD line (41 attributes plus a label)."""
    fields = line.strip().split(",")
    if len(fields) != N_ATTRIBUTES + 1:
        raise ParseError(f"expected {N_ATTRIBUTES + 1} fields, got {len(fields)}")
    values = []
    for i, tok in enumerate(fields[:N_ATTRIBUTES]):
        tok = tok.strip()
        if i in _DISCRETE:
            values.append(tok)
            continue
        try:
            v = float(tok)
        except ValueError:
            raise ParseError(
                f"field {i + 1} ({ATTRIBUTE_NAMES[i]}) is not numeric: {tok!r}", i + 1
            ) from None
        if not math.isfinite(v) or v < 0:
            raise ParseError(
                f"field {i + 1} ({ATTRIBUTE_NAMES[i]}) must be finite and nonnegative: {tok!r}",
                i + 1,
            )
        values.append(v)
    label = fields[-1].strip()
    if label.endswith("."):
        label = label[:-1]
    return ConnectionRecord(tuple(values), label)


# --- taxonomy ---------------------------------------------------------------

def load_taxonomy(path: str | Path | None = None) -> dict[str, AttackClass]:
    """Read a two-column ``attack_name,category`` file. ``None`` loads the bundled table."""
    if path is None:
        text = resources.files("softids").joinpath("kdd_taxonomy.csv").read_text()
    else:
        text = Path(path).read_text()
    table: dict[str, AttackClass] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ValueError(f"taxonomy line {lineno}: expected 'attack_name,category'")
        table[parts[0].rstrip(".")] = AttackClass.from_category(parts[1])
    return table


_default_taxonomy: dict[str, AttackClass] | None = None


def map_attack_label(raw_label: str, taxonomy: dict[str, AttackClass] | None = None) -> AttackClass:
    global _default_taxonomy
    if taxonomy is None:
        if _default_taxonomy is None:
            _default_taxonomy = load_taxonomy()
        taxonomy = _default_taxonomy
    label = raw_label.strip()
    if label.endswith("."):
        label = label[:-1]
    try:
        return taxonomy[label]
    except KeyError:
        raise UnknownLabelError(label) from None


def _open_text(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="ascii", errors="replace")
    return open(path, "rt", encoding="ascii", errors="replace")


def read_records(path: str | Path) -> Iterator[ConnectionRecord]:
    """Yield parsed records from a plain or gzip KDD file. Blank lines are skipped."""
    path = Path(path)
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield parse_record(line)
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}", exc.field_index) from None


def label_records(
    records: Iterable[ConnectionRecord], taxonomy: dict[str, AttackClass] | None = None
) -> tuple[list[ConnectionRecord], np.ndarray, Counter]:
    """Attach classes, dropping records whose label is outside the taxonomy.

    Returns the kept records, their class ids and a counter of dropped labels.
    """
    kept, classes = [], []
    dropped: Counter = Counter()
    for rec in records:
        try:
            cls = map_attack_label(rec.raw_label, taxonomy)
        except UnknownLabelError as exc:
            dropped[exc.label] += 1
            continue
        kept.append(rec)
        classes.append(int(cls))
    if dropped:
        log.warning("dropped %d records with unmapped labels: %s",
                    sum(dropped.values()), dict(sorted(dropped.items())))
    return kept, np.asarray(classes, dtype=np.int64), dropped


# --- encoding and scaling ---------------------------------------------------

@dataclass(frozen=True)
class CategoricalEncoder:
    """Lexicographic token -> index maps for the discrete attributes.

    Tokens not seen during fitting map to ``len(tokens)`` for that attribute.
    """

    tokens: dict[int, tuple[str, ...]]
    _index: dict[int, dict[str, int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {a: {t: i for i, t in enumerate(ts)} for a, ts in self.tokens.items()}
        )

    def encode(self, attribute: int, token: str) -> int:
        idx = self._index[attribute]
        return idx.get(token, len(idx))

    def unknown_index(self, attribute: int) -> int:
        return len(self.tokens[attribute])

    def decode(self, attribute: int, index: int) -> str:
        ts = self.tokens[attribute]
        if index == len(ts):
            return "<unknown>"
        return ts[index]


@dataclass(frozen=True)
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = (X - self.mins) / safe
        out = np.where(span > 0, out, 0.0)
        return np.clip(out, 0.0, 1.0)


def _encode_matrix(records: Sequence[ConnectionRecord], encoder: CategoricalEncoder) -> np.ndarray:
    X = np.empty((len(records), N_ATTRIBUTES), dtype=np.float64)
    for r, rec in enumerate(records):
        row = X[r]
        for i, v in enumerate(rec.values):
            row[i] = encoder.encode(i, v) if i in _DISCRETE else v
    return X


def fit_pipeline(train: Sequence[ConnectionRecord]) -> tuple[CategoricalEncoder, MinMaxScaler]:
    if len(train) == 0:
        raise ValueError("cannot fit the pipeline on an empty training set")
    tokens = {a: tuple(sorted({rec.values[a] for rec in train})) for a in DISCRETE_ATTRIBUTES}
    encoder = CategoricalEncoder(tokens)
    X = _encode_matrix(train, encoder)
    return encoder, MinMaxScaler(X.min(axis=0), X.max(axis=0))


@dataclass(frozen=True)
class FeatureVector:
    x: np.ndarray
    labels: tuple[str, ...]
    cls: AttackClass | None = None

    def __post_init__(self):
        if len(self.x) != len(self.labels):
            raise ValueError("vector length and label count differ")


@dataclass(frozen=True)
class Dataset:
    """A matrix of scaled patterns with class ids (1..5) and attribute labels."""

    X: np.ndarray
    y: np.ndarray
    labels: tuple[str, ...] = ATTRIBUTE_LABELS

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != len(self.labels):
            raise ValueError(f"inconsistent shapes: X {X.shape}, y {y.shape}, {len(self.labels)} labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> FeatureVector:
        return FeatureVector(self.X[i], self.labels, AttackClass(int(self.y[i])))

    @property
    def n_attributes(self) -> int:
        return self.X.shape[1]

    @property
    def class_counts(self) -> dict[AttackClass, int]:
        return {c: int(np.count_nonzero(self.y == c)) for c in ALL_CLASSES}

    @property
    def c(self) -> int:
        return len(ALL_CLASSES)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.labels)

    def project(self, keep: Iterable[str]) -> "Dataset":
        cols = _projection_columns(self.labels, keep)
        return Dataset(self.X[:, cols], self.y, tuple(self.labels[i] for i in cols))


def transform(record: ConnectionRecord, encoder: CategoricalEncoder, scaler: MinMaxScaler,
              taxonomy: dict[str, AttackClass] | None = None) -> FeatureVector:
    x = scaler.transform(_encode_matrix([record], encoder))[0]
    return FeatureVector(x, ATTRIBUTE_LABELS, map_attack_label(record.raw_label, taxonomy))


def transform_records(records: Sequence[ConnectionRecord], classes: np.ndarray,
                      encoder: CategoricalEncoder, scaler: MinMaxScaler) -> Dataset:
    X = scaler.transform(_encode_matrix(records, encoder))
    return Dataset(X, classes, ATTRIBUTE_LABELS)


def _projection_columns(labels: Sequence[str], keep: Iterable[str]) -> list[int]:
    keep = set(keep)
    unknown = keep - set(labels)
    if unknown:
        raise ValueError(f"unknown attribute labels: {sorted(unknown)}")
    return [i for i, lab in enumerate(labels) if lab in keep]


def project_features(v: FeatureVector, keep: Iterable[str]) -> FeatureVector:
    cols = _projection_columns(v.labels, keep)
    return FeatureVector(v.x[cols], tuple(v.labels[i] for i in cols), v.cls)


def parse_feature_set(spec: str, available: Sequence[str] = ATTRIBUTE_LABELS) -> tuple[str, ...]:
    """``full``, ``reference`` or a comma-separated list of attribute labels."""
    spec = spec.strip()
    if spec == "full":
        return tuple(available)
    if spec == "reference":
        wanted = REFERENCE_REDUCED_SET
    else:
        wanted = tuple(s.strip().upper() for s in spec.split(",") if s.strip())
    cols = _projection_columns(available, wanted)
    return tuple(available[i] for i in cols)


# --- splitting --------------------------------------------------------------

def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Apportion ``total`` integer units proportionally to ``weights``.

    Leftover units go to the largest fractional parts, lower index first on ties.
    """
    w = [float(x) for x in weights]
    s = sum(w)
    if total < 0:
        raise ValueError("total must be nonnegative")
    if s <= 0:
        if total:
            raise ValueError("cannot apportion over zero weights")
        return [0] * len(w)
    quotas = [total * x / s for x in w]
    alloc = [int(math.floor(q)) for q in quotas]
    left = total - sum(alloc)
    order = sorted(range(len(w)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[:left]:
        alloc[i] += 1
    return alloc


def split_indices(classes: np.ndarray, train_n: int, test_n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test index selection.

    The pool of ``train_n + test_n`` rows holds every row of the smallest class
    and fills the rest proportionally to the sizes of the other classes. Each
    class's pool share is then divided between train and test in the ratio
    ``train_n : test_n``. Both outputs are sorted and disjoint.
    """
    classes = np.asarray(classes)
    total = train_n + test_n
    if train_n < 0 or test_n < 0:
        raise ValueError("split sizes must be nonnegative")
    if total > len(classes):
        raise ValueError(f"requested {total} records but only {len(classes)} are available")
    present = sorted(int(c) for c in np.unique(classes))
    sizes = [int(np.count_nonzero(classes == c)) for c in present]
    smallest = min(range(len(present)), key=lambda i: (sizes[i], present[i]))

    pool = [0] * len(present)
    pool[smallest] = min(sizes[smallest], total)
    others = [i for i in range(len(present)) if i != smallest]
    if others:
        share = largest_remainder([sizes[i] for i in others], total - pool[smallest])
        for i, k in zip(others, share):
            pool[i] = k
    train_quota = largest_remainder(pool, train_n) if total else [0] * len(present)

    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for i, c in enumerate(present):
        rows = rng.permutation(np.flatnonzero(classes == c))[: pool[i]]
        train_idx.append(rows[: train_quota[i]])
        test_idx.append(rows[train_quota[i]:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def stratified_split(data: Dataset, train_n: int, test_n: int, seed: int) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(data.y, train_n, test_n, seed)
    return data.subset(tr), data.subset(te)


def holdout_indices(classes: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded holdout: returns (fit, holdout) index arrays."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    classes = np.asarray(classes)
    rng = np.random.default_rng(seed)
    fit, hold = [], []
    for c in sorted(int(c) for c in np.unique(classes)):
        rows = rng.permutation(np.flatnonzero(classes == c))
        k = int(round(fraction * len(rows)))
        if len(rows) > 1:
            k = min(max(k, 1), len(rows) - 1)
        hold.append(rows[:k])
        fit.append(rows[k:])
    return np.sort(np.concatenate(fit)), np.sort(np.concatenate(hold))


# --- serialization ----------------------------------------------------------

PIPELINE_FORMAT = "softids/pipeline"


def pipeline_to_dict(encoder: CategoricalEncoder, scaler: MinMaxScaler) -> dict:
    return {
        "format": PIPELINE_FORMAT,
        "version": 1,
        "labels": list(ATTRIBUTE_LABELS),
        "encoder": {ATTRIBUTE_LABELS[a]: list(ts) for a, ts in sorted(encoder.tokens.items())},
        "scaler": {"min": [float(v) for v in scaler.mins], "max": [float(v) for v in scaler.maxs]},
    }


def pipeline_from_dict(doc: dict) -> tuple[CategoricalEncoder, MinMaxScaler]:
    if doc.get("format") != PIPELINE_FORMAT:
        raise ValueError("not a pipeline document")
    if doc.get("version") != 1:
        raise ValueError(f"unsupported pipeline version {doc.get('version')}")
    tokens = {LABEL_INDEX[lab]: tuple(ts) for lab, ts in doc["encoder"].items()}
    scaler = MinMaxScaler(np.asarray(doc["scaler"]["min"], dtype=np.float64),
                          np.asarray(doc["scaler"]["max"], dtype=np.float64))
    return CategoricalEncoder(tokens), scaler


def write_dataset_csv(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(data.labels) + ",class\n")
        for row, cls in zip(data.X, data.y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(cls)}\n")


def read_dataset_csv(path: str | Path) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[-1] != "class":
            raise ValueError(f"{path}: missing 'class' column")
        arr = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    labels = tuple(header[:-1])
    if arr.size == 0:
        return Dataset(np.empty((0, len(labels))), np.empty(0, dtype=np.int64), labels)
    return Dataset(arr[:, :-1], arr[:, -1].astype(np.int64), labels)
