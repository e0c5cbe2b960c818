from .model import (
    ARCH_NAMES,
    BINARY,
    INPUT_DIM,
    MULTICLASS,
    LayerSpec,
    NeuralNet,
    Scaler,
    TrainConfig,
    TrainingError,
    arch_specs,
    freeze,
    init_model,
    train,
)

__all__ = [
    "ARCH_NAMES", "BINARY", "INPUT_DIM", "MULTICLASS", "LayerSpec",
    "NeuralNet", "Scaler", "TrainConfig", "TrainingError", "arch_specs",
    "freeze", "init_model", "train",
]
