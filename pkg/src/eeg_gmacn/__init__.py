"""Graph mutual-attention networks for EEG electrode graphs, on numpy."""

__version__ = "0.1.0"

from .dataset import SyntheticSpec, generate, load_epochs, save_epochs, split
from .errors import (
    CompatibilityError,
    ContractError,
    FormatError,
    GmacnError,
    ParameterError,
    ShapeError,
    UnavailableError,
)
from .evaluation import PredictionLog, classification_metrics, ece, evaluate
from .explain import ExplanationReport, explain_epochs, gfg, gwi, iegw, mean_report, render_scalp_svg
from .model import (
    GmacnConfig,
    GmacnModel,
    build_model,
    calibrate,
    count_cost,
    forward,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .montage import Montage, builtin_64, load_montage
from .preprocess import EpochSet, RawRecording, epochs_from_recording, wavelet_features
from .spatial_graph import ElectrodeGraph, build_threshold, build_topk, normalize

__all__ = [
    "CompatibilityError", "ContractError", "ElectrodeGraph", "EpochSet", "ExplanationReport",
    "FormatError", "GmacnConfig", "GmacnError", "GmacnModel", "Montage", "ParameterError",
    "PredictionLog", "RawRecording", "ShapeError", "SyntheticSpec", "UnavailableError",
    "build_model", "build_threshold", "build_topk", "builtin_64", "calibrate",
    "classification_metrics", "count_cost", "ece", "epochs_from_recording", "evaluate",
    "explain_epochs", "forward", "generate", "gfg", "gwi", "iegw", "load_checkpoint",
    "load_epochs", "load_montage", "mean_report", "normalize", "predict",
    "render_scalp_svg", "save_checkpoint", "save_epochs", "split", "train",
    "wavelet_features",
]
