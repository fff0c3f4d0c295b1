"""Trained-model container and its versioned binary file format.

Layout (little-endian)::

    b"CRFIDMDL" | u16 version | u8 len + kind | u8 len + target
    | u32 len + JSON metadata | u64 len + raw array block | sha256 of all preceding bytes

The JSON metadata lists every array as ``[name, dtype, shape]`` in block order.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cnn import CnnModel
from .dsp import FilterSpec, filter_matrix
from .features import ScalerStats, apply_scaler, extract_all
from .ml import GradientBoosting, RandomForest, RegressionTree, SvrModel
from .touchstone import N_POINTS

MAGIC = b"CRFIDMDL"
FORMAT_VERSION = 1
CLASSICAL_KINDS = ("dt", "rf", "gbt", "svr")
CNN_KINDS = ("cnn1", "cnn2", "cnn3", "cnn4")
MODEL_KINDS = CLASSICAL_KINDS + CNN_KINDS
TASKS = ("id", "sensing")
_ESTIMATORS = {"dt": RegressionTree, "rf": RandomForest, "gbt": GradientBoosting, "svr": SvrModel}
_DTYPES = {"<f8": np.float64, "<i8": np.int64}


class ModelFormatError(ValueError):
    pass


class ModelKindError(ModelFormatError):
    pass


@dataclass
class TrainedModel:
    """Estimator plus the preprocessing it was trained behind.

    Classical kinds see the scaled feature matrix restricted to
    ``feature_mask``; CNN kinds see the per-bin standardized filtered
    signal.  ``target_mean``/``target_std`` undo the target scaling applied
    during CNN training (0 and 1 for classical kinds).
    """

    kind: str
    task: str
    estimator: object
    filter_spec: FilterSpec
    input_mean: np.ndarray
    input_std: np.ndarray
    feature_names: tuple = ()
    feature_mask: np.ndarray | None = None
    target_mean: float = 0.0
    target_std: float = 1.0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelKindError(f"unknown model kind {self.kind!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")

    @property
    def is_cnn(self) -> bool:
        return self.kind in CNN_KINDS

    def inputs(self, rcs) -> np.ndarray:
        """Model-ready inputs from raw (unfiltered) RCS rows on the canonical grid."""
        rcs = np.atleast_2d(np.asarray(rcs, dtype=np.float64))
        if rcs.shape[1] != N_POINTS:
            raise ValueError(f"expected {N_POINTS} frequency points per row, got {rcs.shape[1]}")
        filtered = filter_matrix(rcs, self.filter_spec)
        if self.is_cnn:
            return (filtered - self.input_mean) / self.input_std
        x = apply_scaler(ScalerStats(self.input_mean, self.input_std), extract_all(filtered).values)
        return x if self.feature_mask is None else x[:, self.feature_mask]

    def predict(self, rcs) -> np.ndarray:
        return self.estimator.predict(self.inputs(rcs)) * self.target_std + self.target_mean


def _state(model: TrainedModel) -> tuple[dict, dict]:
    est_meta, est_arrays = model.estimator.to_state()
    arrays = {f"model.{k}": v for k, v in est_arrays.items()}
    arrays["pre.input_mean"] = model.input_mean
    arrays["pre.input_std"] = model.input_std
    if model.feature_mask is not None:
        arrays["pre.feature_mask"] = np.asarray(model.feature_mask, dtype=np.int64)
    meta = {
        "estimator": est_meta,
        "preprocessing": {
            "filter": {"order": model.filter_spec.order, "cutoff": model.filter_spec.cutoff},
            "input": "raw" if model.is_cnn else "features",
            "feature_names": list(model.feature_names),
            "target_mean": model.target_mean,
            "target_std": model.target_std,
        },
        "config": model.config,
        "config_digest": config_digest(model.config),
    }
    return meta, arrays


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def _blob(s: str, width: str) -> bytes:
    b = s.encode()
    return struct.pack(width, len(b)) + b


def dumps_model(model: TrainedModel) -> bytes:
    meta, arrays = _state(model)
    block, listing = bytearray(), []
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        dtype = "<i8" if np.issubdtype(a.dtype, np.integer) or a.dtype == bool else "<f8"
        a = np.ascontiguousarray(a, dtype=_DTYPES[dtype])
        listing.append([name, dtype, list(a.shape)])
        block += a.tobytes()
    meta["arrays"] = listing
    body = (MAGIC + struct.pack("<H", FORMAT_VERSION) + _blob(model.kind, "<B") + _blob(model.task, "<B")
            + _blob(json.dumps(meta, sort_keys=True, default=_json_default), "<I")
            + struct.pack("<Q", len(block)) + bytes(block))
    return body + hashlib.sha256(body).digest()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("model file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def loads_model(data: bytes, kinds: tuple | None = None) -> TrainedModel:
    """Parse a model file; ``kinds`` restricts which model kinds are acceptable."""
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a crfid model file (bad magic)")
    if len(data) < len(MAGIC) + 2 + 32:
        raise ModelFormatError("model file is truncated")
    r = _Reader(data[:-32])
    r.take(len(MAGIC))
    version = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    if hashlib.sha256(data[:-32]).digest() != data[-32:]:
        raise ModelFormatError("model file digest mismatch (file is corrupted or truncated)")
    kind = r.take(r.unpack("<B")).decode()
    task = r.take(r.unpack("<B")).decode()
    if kinds is not None and kind not in kinds:
        raise ModelKindError(f"model file holds a {kind!r} model, expected one of {', '.join(kinds)}")
    meta = json.loads(r.take(r.unpack("<I")))
    block = r.take(r.unpack("<Q"))
    if r.pos != len(r.data):
        raise ModelFormatError("trailing bytes after parameter block")

    arrays, offset = {}, 0
    for name, dtype, shape in meta["arrays"]:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * 8
        if offset + nbytes > len(block):
            raise ModelFormatError("parameter block shorter than its listing")
        arrays[name] = np.frombuffer(block, _DTYPES[dtype], count, offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(block):
        raise ModelFormatError("parameter block longer than its listing")

    est_arrays = {k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")}
    if kind in CNN_KINDS:
        estimator = CnnModel.from_state(meta["estimator"], est_arrays)
    else:
        estimator = _ESTIMATORS[kind].from_state(meta["estimator"], est_arrays)
    pre = meta["preprocessing"]
    mask = arrays.get("pre.feature_mask")
    return TrainedModel(
        kind, task, estimator, FilterSpec(**pre["filter"]),
        arrays["pre.input_mean"], arrays["pre.input_std"],
        tuple(pre["feature_names"]), None if mask is None else mask.astype(bool),
        float(pre["target_mean"]), float(pre["target_std"]), meta["config"],
    )


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_bytes(dumps_model(model))


def load_model(path, kinds: tuple | None = None) -> TrainedModel:
    return loads_model(Path(path).read_bytes(), kinds)
