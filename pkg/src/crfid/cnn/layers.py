"""Layer specifications and the four 1D CNN architectures.

Every spec is a plain tuple of frozen layer descriptions; parameters live
elsewhere (see ``engine``).  Sequences are channels-last: (length, channels).
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Conv1D:
    filters: int
    kernel: int = 7
    activation: str = "relu"


@dataclass(frozen=True)
class MaxPool1D:
    size: int = 2


@dataclass(frozen=True)
class BatchNorm:
    momentum: float = 0.9
    eps: float = 1e-5


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.5


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "relu"


Layer = Conv1D | MaxPool1D | BatchNorm | Dropout | Flatten | Dense


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    layers: tuple
    input_shape: tuple = (700, 1)

    def __post_init__(self):
        last = self.layers[-1]
        if not (isinstance(last, Dense) and last.units == 1 and last.activation == "linear"):
            raise ValueError("final layer must be Dense(1, linear)")

    def __len__(self) -> int:
        return len(self.layers)


def output_shapes(spec: ArchitectureSpec, input_shape: tuple | None = None) -> list[tuple]:
    """Per-layer output shape (excluding batch) under valid padding."""
    shape = tuple(input_shape or spec.input_shape)
    out = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv1D):
            length = shape[0] - layer.kernel + 1
            if len(shape) != 2 or length < 1:
                raise ValueError(f"layer {i} (Conv1D): input {shape} too short for kernel {layer.kernel}")
            shape = (length, layer.filters)
        elif isinstance(layer, MaxPool1D):
            if len(shape) != 2 or shape[0] < layer.size:
                raise ValueError(f"layer {i} (MaxPool1D): input {shape} too short")
            shape = (shape[0] // layer.size, shape[1])
        elif isinstance(layer, Flatten):
            shape = (shape[0] * shape[1],)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise ValueError(f"layer {i} (Dense): expects flat input, got {shape}")
            shape = (layer.units,)
        out.append(shape)
    return out


def _w(n: int, width: float) -> int:
    return n if width >= 1 else max(min(n, 16), round(n * width))


def _conv_block(filters: int, width: float, rate: float):
    return (Conv1D(_w(filters, width)), MaxPool1D(), BatchNorm(), Dropout(rate))


def model_1_spec(width: float = 1.0, dropout: float = 0.5) -> ArchitectureSpec:
    """Tag-ID network: two 64-filter convolutions, dense 1500 -> 500 -> 1."""
    return ArchitectureSpec("model1", (
        Conv1D(_w(64, width)), MaxPool1D(), Dropout(dropout),
        Conv1D(_w(64, width)), MaxPool1D(), BatchNorm(), Dropout(dropout),
        Flatten(), Dense(_w(1500, width)), Dropout(dropout), Dense(_w(500, width)), Dense(1, "linear"),
    ))


def model_2_spec(width: float = 1.0, dropout: float = 0.5) -> ArchitectureSpec:
    """Sensing network: 64- then 32-filter convolutions, dense 1000 -> 100 -> 1."""
    return ArchitectureSpec("model2", (
        Conv1D(_w(64, width)), MaxPool1D(), Dropout(dropout),
        Conv1D(_w(32, width)), MaxPool1D(), BatchNorm(), Dropout(dropout),
        Flatten(), Dense(_w(1000, width)), Dropout(dropout), Dense(_w(100, width)), Dense(1, "linear"),
    ))


def model_3_spec(width: float = 1.0, dropout: float = 0.5) -> ArchitectureSpec:
    """Extended tag-ID network: 512-filter stem, then four conv blocks 256..32."""
    blocks = ()
    for f in (256, 128, 64, 32):
        blocks += _conv_block(f, width, dropout)
    return ArchitectureSpec("model3", (
        Conv1D(_w(512, width)), MaxPool1D(), Dropout(dropout),
        *blocks,
        Flatten(), Dense(_w(1500, width)), Dropout(dropout), Dense(_w(500, width)), Dense(1, "linear"),
    ))


def model_4_spec(width: float = 1.0, dropout: float = 0.5) -> ArchitectureSpec:
    """Extended sensing network: four conv blocks 256..32 (one pool per block)."""
    blocks = ()
    for f in (256, 128, 64, 32):
        blocks += _conv_block(f, width, dropout)
    return ArchitectureSpec("model4", (
        *blocks,
        Flatten(), Dense(_w(1000, width)), Dropout(dropout), Dense(_w(500, width)), Dense(1, "linear"),
    ))


ARCHITECTURES = {"cnn1": model_1_spec, "cnn2": model_2_spec, "cnn3": model_3_spec, "cnn4": model_4_spec}
