"""Classify the ethnic origin of personal names with a character-level LSTM.

Also covers building pseudo-labeled training data from leaf-nationality
probability vectors and aggregating origin prevalence over inventor records.
"""
from .codec import NameEncoder, decode, encode, normalize
from .dataset import DEFAULT_TAXONOMY, LabeledName, OriginTaxonomy, SplitSpec
from .model import LstmModel, ModelConfig, OriginClassifier, build, count_parameters, predict, train
from .persist import load, save
from .pseudo_label import CrosswalkClassifier, LeafMapper, ThresholdSelector
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TAXONOMY",
    "CrosswalkClassifier",
    "LabeledName",
    "LeafMapper",
    "LstmModel",
    "ModelConfig",
    "NameEncoder",
    "OriginClassifier",
    "OriginTaxonomy",
    "SplitSpec",
    "ThresholdSelector",
    "TrainConfig",
    "build",
    "count_parameters",
    "decode",
    "encode",
    "load",
    "normalize",
    "predict",
    "save",
    "train",
]
