"""Mini-batch Adam training with early stopping and best-epoch checkpointing."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import adam_init, adam_step, backward, forward, init_params, mse_loss, predict
from .layers import ARCHITECTURES, ArchitectureSpec

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 20
    min_delta: float = 1e-5
    seed: int = 0
    debug: bool = False

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: dict
    buffers: dict
    best_epoch: int
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


def _epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, stream]))


def _as_input(x):
    x = np.asarray(x, dtype=np.float64)
    return x[:, :, None] if x.ndim == 2 else x


def train(
    spec: ArchitectureSpec,
    train_xy: tuple,
    val_xy: tuple | None,
    config: TrainConfig = TrainConfig(),
    epochs: int | None = None,
) -> TrainResult:
    """Train ``spec`` on ``train_xy`` and keep the best-validation checkpoint.

    With ``val_xy=None`` the network trains for exactly ``epochs`` epochs and
    the final parameters are returned (used when refitting on train+val).
    Per-epoch shuffling and dropout masks come from generators seeded by
    (seed, epoch, stream), so reruns are bit-identical.
    """
    x, y = _as_input(train_xy[0]), np.asarray(train_xy[1], dtype=np.float64).reshape(-1, 1)
    if x.shape[0] == 0 or x.shape[0] != y.shape[0]:
        raise ValueError("training split is empty or misaligned")
    if val_xy is not None:
        xv, yv = _as_input(val_xy[0]), np.asarray(val_xy[1], dtype=np.float64).reshape(-1, 1)
        if xv.shape[0] == 0:
            raise ValueError("validation split is empty")
    elif epochs is None:
        raise ValueError("training without validation needs a fixed epoch count")
    n_epochs = config.max_epochs if epochs is None else epochs

    params, buffers = init_params(spec, np.random.default_rng(np.random.SeedSequence([config.seed])))
    state = adam_init(params)
    result = TrainResult(params, buffers, -1)
    best_val, wait, t = np.inf, 0, 0
    best_for_patience = np.inf
    n = x.shape[0]
    for epoch in range(n_epochs):
        order = _epoch_rng(config.seed, epoch, 0).permutation(n)
        drop_rng = _epoch_rng(config.seed, epoch, 1)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            pred, cache = forward(spec, params, x[idx], True, buffers, drop_rng, config.debug)
            loss, dpred = mse_loss(pred, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, batch starting {s}")
            grads = backward(spec, params, cache, dpred)
            t += 1
            params, state = adam_step(params, grads, state, t, config.lr, config.beta1,
                                      config.beta2, config.eps)
            buffers = {**buffers, **cache.buffer_updates}
            total += loss * idx.size
        result.train_loss.append(total / n)

        if val_xy is None:
            continue
        val = float(np.mean((predict(spec, params, buffers, xv) - yv[:, 0]) ** 2))
        if not np.isfinite(val):
            raise TrainingDiverged(f"validation loss became {val} at epoch {epoch}")
        result.val_loss.append(val)
        log.info("epoch %d train %.6g val %.6g", epoch, result.train_loss[-1], val)
        if val < best_val:
            best_val = val
            result.params, result.buffers, result.best_epoch = params, buffers, epoch
        if val < best_for_patience - config.min_delta:
            best_for_patience, wait = val, 0
        else:
            wait += 1
            if wait >= max(config.patience, 1):
                break

    if val_xy is None:
        result.params, result.buffers, result.best_epoch = params, buffers, n_epochs - 1
    return result


@dataclass
class CnnModel:
    """A trained network together with the recipe needed to rebuild its spec."""

    arch: str
    width: float
    dropout: float
    params: dict
    buffers: dict

    @property
    def spec(self) -> ArchitectureSpec:
        return ARCHITECTURES[self.arch](self.width, self.dropout)

    def predict(self, x) -> np.ndarray:
        return predict(self.spec, self.params, self.buffers, _as_input(x))

    def to_state(self) -> tuple[dict, dict]:
        arrays = {f"param.{k}": v for k, v in self.params.items()}
        arrays.update({f"buffer.{k}": v for k, v in self.buffers.items()})
        return {"arch": self.arch, "width": self.width, "dropout": self.dropout}, arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: dict) -> "CnnModel":
        def pick(prefix):
            return {k[len(prefix):]: np.asarray(v, dtype=np.float64) for k, v in arrays.items()
                    if k.startswith(prefix)}
        return cls(meta["arch"], float(meta["width"]), float(meta["dropout"]), pick("param."), pick("buffer."))
