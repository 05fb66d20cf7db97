from .baselines import KINDS, BaselineModel, train_baseline
from .evaluate import (
    MODEL_KINDS,
    EvaluationReport,
    ModelSpec,
    evaluate_over_time,
    evaluate_split,
    fit_model,
    predict_labels,
    predict_next,
)
from .flow import FlowMap, build_flow_map
from .rnn import RnnModel, rnn_gradient_check, train_rnn
from .windows import WindowedSet, make_windows, one_hot

__all__ = [
    "KINDS",
    "MODEL_KINDS",
    "BaselineModel",
    "EvaluationReport",
    "FlowMap",
    "ModelSpec",
    "RnnModel",
    "WindowedSet",
    "build_flow_map",
    "evaluate_over_time",
    "evaluate_split",
    "fit_model",
    "make_windows",
    "one_hot",
    "predict_labels",
    "predict_next",
    "rnn_gradient_check",
    "train_baseline",
    "train_rnn",
]
