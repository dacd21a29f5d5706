"""Meta-model families sharing one train/predict contract.

All four families (linear, gradient boosting, shallow feed-forward net,
shallow LSTM) train deterministically from (data, spec, seed) and predict
scores in [0, 1]: the probability of a zero-quality segment for
classification, the clamped quality estimate for regression.
"""

from .base import FAMILIES, TASKS, ModelSpec, TrainedModel, load_model
from .boosting import GradientBoostingModel, load_gb, train_gb
from .linear import LinearModel, load_linear, train_linear
from .neural import (
    RecurrentNetModel,
    ShallowNetModel,
    load_lstm,
    load_nn,
    train_lstm,
    train_nn,
)

MODEL_LOADERS = {
    "linear": load_linear,
    "gradient_boosting": load_gb,
    "shallow_nn": load_nn,
    "shallow_lstm": load_lstm,
}

_TRAINERS = {
    "linear": train_linear,
    "gradient_boosting": train_gb,
    "shallow_nn": train_nn,
    "shallow_lstm": train_lstm,
}


def train_model(spec: ModelSpec, train, val) -> TrainedModel:
    """Train any family; `train`/`val` are (X, y) or (X, mask, y) for the LSTM."""
    return _TRAINERS[spec.family](train, val, spec)


__all__ = [
    "FAMILIES",
    "TASKS",
    "ModelSpec",
    "TrainedModel",
    "LinearModel",
    "GradientBoostingModel",
    "ShallowNetModel",
    "RecurrentNetModel",
    "train_model",
    "train_linear",
    "train_gb",
    "train_nn",
    "train_lstm",
    "load_model",
]
