"""Multi-task BiLSTM encoder with attentive, coverage-aware decoders for
adverse-drug-reaction classification and ADR/Indication span tagging."""

from .data import Vocabularies, build_vocabularies
from .model import ModelDims, MultiTaskModel, build_model
from .training import TaskWeights, TrainSettings, checkpoint_load, checkpoint_save, fit

__all__ = ["ModelDims", "MultiTaskModel", "TaskWeights", "TrainSettings", "Vocabularies",
           "build_model", "build_vocabularies", "checkpoint_load", "checkpoint_save", "fit"]
__version__ = "0.1.0"
