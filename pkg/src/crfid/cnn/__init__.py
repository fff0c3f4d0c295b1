from .engine import (
    AdamState,
    Cache,
    ShapeError,
    StaleCacheError,
    adam_init,
    adam_step,
    backward,
    forward,
    init_params,
    mse_loss,
    predict,
)
from .layers import (
    ARCHITECTURES,
    ArchitectureSpec,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    MaxPool1D,
    model_1_spec,
    model_2_spec,
    model_3_spec,
    model_4_spec,
    output_shapes,
)
from .training import CnnModel, TrainConfig, TrainingDiverged, TrainResult, train
