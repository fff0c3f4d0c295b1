"""Error metrics, nearest-value decoding and the position x case breakdown."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ml.selection import rmse
from .siggen import CAPACITANCES, CASES, POSITIONS

TARGET_RANGE = {"id": 7.0, "sensing": 0.7}
_TIE = 1e-9


def normalized_rmse(value: float, target_range: float) -> float:
    """RMSE as a percentage of the target range."""
    if target_range <= 0:
        raise ValueError("target range must be positive")
    return value / target_range * 100.0


def improvement(before: float, after: float) -> float:
    """Relative RMSE reduction in percent."""
    return (before - after) / before * 100.0


def decode_id(prediction: float) -> int:
    """Round half up to the nearest integer, clamped to 0..7."""
    if not math.isfinite(prediction):
        raise ValueError(f"cannot decode non-finite prediction {prediction!r}")
    return int(min(7, max(0, math.floor(prediction + 0.5))))


def decode_sensing(prediction: float) -> float:
    """Nearest of 0.1/0.3/0.8 pF; equidistant predictions take the smaller value."""
    if not math.isfinite(prediction):
        raise ValueError(f"cannot decode non-finite prediction {prediction!r}")
    dist = [abs(prediction - c) for c in CAPACITANCES]
    best = min(dist)
    return next(c for c, d in zip(CAPACITANCES, dist) if d <= best + _TIE)


def decode(task: str, predictions) -> np.ndarray:
    fn = decode_id if task == "id" else decode_sensing
    return np.array([fn(float(p)) for p in np.asarray(predictions).ravel()])


def decode_accuracy(task: str, predictions, targets) -> float:
    dec = decode(task, predictions)
    return float(np.mean(np.isclose(dec, np.asarray(targets, dtype=np.float64))))


@dataclass
class CaseCell:
    rmse: float
    std: float
    n: int


@dataclass
class EvalReport:
    task: str
    model_kind: str
    train_rmse: float
    val_rmse: float
    test_rmse: float
    decode_accuracy: float
    per_case: dict = field(default_factory=dict)  # (position, case) -> CaseCell
    overfit_warning: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def normalized_test_rmse(self) -> float:
        return normalized_rmse(self.test_rmse, TARGET_RANGE[self.task])


def per_case_report(predictions, targets, positions, cases, require_all: bool = True) -> dict:
    """RMSE and std of absolute error for every (position, case) cell."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    pos = np.asarray(positions)
    cas = np.asarray(cases)
    if not (p.size == t.size == pos.size == cas.size) or p.size == 0:
        raise ValueError("predictions, targets and labels must have equal non-zero length")
    unknown = set(pos.tolist()) - set(POSITIONS) | set(cas.tolist()) - set(CASES)
    if unknown:
        raise ValueError(f"unknown position/case labels: {sorted(unknown)}")
    out = {}
    for pp in POSITIONS:
        for cc in CASES:
            m = (pos == pp) & (cas == cc)
            if not np.any(m):
                if require_all:
                    raise ValueError(f"no rows for cell ({pp}, {cc})")
                continue
            err = p[m] - t[m]
            out[(pp, cc)] = CaseCell(rmse(p[m], t[m]), float(np.std(np.abs(err))), int(m.sum()))
    return out


def split_counts(m: int) -> tuple[int, int, int]:
    """(train, val, test) row counts for a stratum of ``m`` rows: 20 % test, rest 75:25."""
    n_test = math.floor(0.2 * m + 0.5)
    n_val = math.floor(0.25 * (m - n_test) + 0.5)
    return m - n_test - n_val, n_val, n_test


def stratified_split(keys, seed: int, min_rows: int = 5) -> np.ndarray:
    """Per-row split tags ('train'/'val'/'test'), stratified on ``keys``.

    Groups are visited in sorted key order; each is shuffled by one shared
    seeded generator, then its first rows go to test, the next to val.
    """
    keys = list(keys)
    groups: dict = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    rng = np.random.default_rng(seed)
    out = np.empty(len(keys), dtype=object)
    for k in sorted(groups):
        idx = np.array(groups[k])
        if idx.size < min_rows:
            raise ValueError(f"stratum {k!r} has {idx.size} rows, need at least {min_rows}")
        idx = idx[rng.permutation(idx.size)]
        n_train, n_val, n_test = split_counts(idx.size)
        out[idx[:n_test]] = "test"
        out[idx[n_test : n_test + n_val]] = "val"
        out[idx[n_test + n_val :]] = "train"
    return out.astype(str)
