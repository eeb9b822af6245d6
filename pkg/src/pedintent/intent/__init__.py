from .features import (
    FrameRecord,
    LocalContextFeature,
    ObservationWindow,
    build_window,
    extract_local_context,
    feature_stub,
    local_context_from_sampler,
    window_length,
)
from .gru import StackedGruModel, gru_cell_forward, stacked_forward
from .model_io import load_model, save_model
from .train import TrainParams, accuracy, predict_proba, train_toy
from .trigger import InteractionTrigger, time_to_interaction

__all__ = [
    "FrameRecord", "InteractionTrigger", "LocalContextFeature", "ObservationWindow",
    "StackedGruModel", "TrainParams", "accuracy", "build_window", "extract_local_context",
    "feature_stub", "gru_cell_forward", "load_model", "local_context_from_sampler",
    "predict_proba", "save_model", "stacked_forward", "time_to_interaction", "train_toy",
    "window_length",
]
