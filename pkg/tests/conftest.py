import os
from pathlib import Path

import numpy as np
import pytest

from softids import kdd, synth
from softids.kdd import Dataset

DATA_ENV = "SOFTIDS_DATA_DIR"
KDD_NAMES = ("kddcup.data_10_percent.gz", "kddcup.data_10_percent",
             "kddcup.data_10_percent_corrected")


def real_kdd_path() -> Path | None:
    """The real 10% KDD file, if one is reachable via the env var or ./data."""
    roots = [Path(os.environ[DATA_ENV])] if os.environ.get(DATA_ENV) else []
    roots.append(Path(__file__).resolve().parents[1] / "data")
    for root in roots:
        for name in KDD_NAMES:
            if (root / name).exists():
                return root / name
    return None


def make_dataset(X, y, labels=None) -> Dataset:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if labels is None:
        labels = kdd.ATTRIBUTE_LABELS[: X.shape[1]]
    return Dataset(X, np.asarray(y, dtype=np.int64), tuple(labels))


@pytest.fixture(scope="session")
def synthetic_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("synth") / "synthetic.gz"
    synth.write(path, fraction=0.1, seed=1)
    return path


@pytest.fixture(scope="session")
def synthetic_split(synthetic_file):
    records, classes, _ = kdd.label_records(kdd.read_records(synthetic_file))
    tr, te = kdd.split_indices(classes, 5092, 6890, 42)
    train_recs = [records[i] for i in tr]
    enc, sc = kdd.fit_pipeline(train_recs)
    train = kdd.transform_records(train_recs, classes[tr], enc, sc)
    test = kdd.transform_records([records[i] for i in te], classes[te], enc, sc)
    return train, test


# --- acceptance summary --------------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    results = item.config._criteria.setdefault(number, [title, True, []])
    if rep.failed or (rep.when == "call" and rep.skipped):
        results[1] = False
    if rep.when == "call":
        results[2].extend(v for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(crit):
        title, ok, details = crit[number]
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        terminalreporter.write_line(line)
