"""Intrusion detection on KDD Cup 99 connection records with two fuzzy
rule-based classifiers, a CART decision tree, linear genetic programming and
a per-class expert ensemble."""

from .kdd import ALL_CLASSES, AttackClass, Dataset, FeatureVector
from .fr1 import FR1Model, train_fr1
from .fr2 import FuzzyRuleBase, generate_rules, tune_certainty
from .cart import DecisionTree, grow_tree, select_features, variable_importance
from .lgp import LGPClassifier, evolve, train_lgp
from .ensemble import build_ensemble, evaluate, per_class_accuracy

__all__ = [
    "ALL_CLASSES", "AttackClass", "Dataset", "FeatureVector",
    "FR1Model", "train_fr1", "FuzzyRuleBase", "generate_rules", "tune_certainty",
    "DecisionTree", "grow_tree", "select_features", "variable_importance",
    "LGPClassifier", "evolve", "train_lgp", "build_ensemble", "evaluate", "per_class_accuracy",
]
__version__ = "0.1.0"
