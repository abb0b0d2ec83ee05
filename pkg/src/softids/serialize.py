"""JSON model files, dispatched on their ``format`` field."""

from __future__ import annotations

import json
from pathlib import Path

from .cart import DecisionTree
from .fr1 import FR1Model
from .fr2 import FuzzyRuleBase
from .lgp import LGPClassifier

_LOADERS = {
    "softids/fr1": FR1Model.from_dict,
    "softids/fr2": FuzzyRuleBase.from_dict,
    "softids/tree": DecisionTree.from_dict,
    "softids/lgp": LGPClassifier.from_dict,
}


def dumps(doc) -> str:
    return json.dumps(doc, indent=1) + "\n"


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(dumps(model.to_dict()))


def load_model(path: str | Path):
    doc = json.loads(Path(path).read_text())
    try:
        loader = _LOADERS[doc.get("format")]
    except KeyError:
        raise ValueError(f"{path}: unknown model format {doc.get('format')!r}") from None
    return loader(doc)
