"""Association-learning transformer for unsupervised time-series anomaly
detection: a numpy/numba substrate with reverse-mode autodiff, a two-branch
attention model, minimax training, association-based scoring, and
point-adjusted evaluation."""

__version__ = "0.1.0"

from .attention import AttentionConfig, AttentionOutput
from .data import SynthSpec, TimeSeries, default_spec, generate, load_csv
from .detection import ScoreSeries, ThresholdSpec, predict, score_series, select_threshold
from .discrepancy import DiscrepancyConfig, assoc_discrepancy, row_sym_kl
from .evaluation import EvalReport, evaluate, point_adjust, prf, roc_auc
from .model import ForwardResult, ModelConfig, ModelParams, forward, init_params
from .tensor import Tensor, backward, detach, no_grad
from .training import TrainConfig, TrainLog, fit, phase_losses, train_step

__all__ = [
    "__version__",
    "AttentionConfig",
    "AttentionOutput",
    "DiscrepancyConfig",
    "EvalReport",
    "ForwardResult",
    "ModelConfig",
    "ModelParams",
    "ScoreSeries",
    "SynthSpec",
    "Tensor",
    "ThresholdSpec",
    "TimeSeries",
    "TrainConfig",
    "TrainLog",
    "assoc_discrepancy",
    "backward",
    "default_spec",
    "detach",
    "evaluate",
    "fit",
    "forward",
    "generate",
    "init_params",
    "load_csv",
    "no_grad",
    "phase_losses",
    "point_adjust",
    "predict",
    "prf",
    "roc_auc",
    "row_sym_kl",
    "score_series",
    "select_threshold",
    "train_step",
]
