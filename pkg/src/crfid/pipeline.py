"""End-to-end training and evaluation for one (task, model) pair."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cnn import ARCHITECTURES, CnnModel, TrainConfig, train
from .dataset import Dataset
from .dsp import DEFAULT_FILTER, FilterSpec, filter_matrix
from .features import ALL_FEATURES, apply_scaler, extract_all, fit_scaler
from .metrics import EvalReport, decode_accuracy, per_case_report, stratified_split
from .ml import DEFAULT_GRIDS, DEFAULT_PARAMS, fit_model, grid_search_cv, rfe_cv, rmse
from .persist import CLASSICAL_KINDS, CNN_KINDS, TASKS, TrainedModel

log = logging.getLogger(__name__)

CNN_TASK = {"cnn1": "id", "cnn2": "sensing", "cnn3": "id", "cnn4": "sensing"}


class IncompatibleModel(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for ``run_pipeline``.

    ``grid`` is ``None`` (no search), ``"default"`` or an explicit grid dict.
    ``cnn_width``/``cnn_dropout`` shrink the networks for desk-scale runs.
    """

    seed: int = 0
    filter_spec: FilterSpec = DEFAULT_FILTER
    params: dict = field(default_factory=dict)
    rfe: bool = False
    grid: dict | str | None = None
    cv_folds: int = 3
    overfit_ratio: float = 1.5
    cnn_width: float = 1.0
    cnn_dropout: float = 0.5
    train: TrainConfig = TrainConfig()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["filter_spec"] = {"order": self.filter_spec.order, "cutoff": self.filter_spec.cutoff}
        return d


def check_compatible(task: str, kind: str) -> None:
    if task not in TASKS:
        raise IncompatibleModel(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    if kind not in CLASSICAL_KINDS + CNN_KINDS:
        raise IncompatibleModel(f"unknown model {kind!r}")
    if kind in CNN_TASK and CNN_TASK[kind] != task:
        raise IncompatibleModel(f"{kind} is a {CNN_TASK[kind]} architecture, not usable for {task}")


def _per_bin_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std < 1e-12, 1.0, std)


def _refit_ok(fit, config, extra) -> bool:
    """Refit on train+val only when validation RMSE stays within the overfit ratio."""
    extra["refit"] = bool(fit[1] <= config.overfit_ratio * fit[0])
    return extra["refit"]


def _classical(kind, task, filtered, y, split, config, extra):
    feats = extract_all(filtered).values
    tr, va, dev = split == "train", split == "val", split != "test"
    stats = fit_scaler(feats[tr])
    X = apply_scaler(stats, feats)
    params = {**DEFAULT_PARAMS[kind], **config.params}
    if kind == "rf":
        params.setdefault("seed", config.seed)

    mask = np.ones(X.shape[1], dtype=bool)
    if config.rfe:
        mask, history = rfe_cv(kind, X[tr], y[tr], params, config.cv_folds, config.seed)
        extra["rfe_history"] = history
        extra["selected_features"] = [n for n, m in zip(ALL_FEATURES, mask) if m]
    if config.grid is not None:
        grid = DEFAULT_GRIDS[kind] if config.grid == "default" else config.grid
        best, table = grid_search_cv(kind, X[tr][:, mask], y[tr], grid, config.cv_folds, config.seed)
        params.update(best)
        extra["grid"] = table
    extra["params"] = params

    Xm = X[:, mask]
    model = fit_model(kind, Xm[tr], y[tr], params, config.seed)
    fit = (rmse(model.predict(Xm[tr]), y[tr]), rmse(model.predict(Xm[va]), y[va]))
    final = fit_model(kind, Xm[dev], y[dev], params, config.seed) if _refit_ok(fit, config, extra) else model
    trained = TrainedModel(kind, task, final, config.filter_spec, stats.mean, stats.std,
                           ALL_FEATURES, None if mask.all() else mask, 0.0, 1.0)
    return trained, fit, final.predict(Xm[split == "test"])


def _cnn(kind, task, filtered, y, split, config, extra):
    tr, va, dev = split == "train", split == "val", split != "test"
    mean, std = _per_bin_stats(filtered[tr])
    Z = (filtered - mean) / std
    ym, ys = float(y[tr].mean()), float(y[tr].std()) or 1.0
    yz = (y - ym) / ys
    spec = ARCHITECTURES[kind](config.cnn_width, config.cnn_dropout)

    first = train(spec, (Z[tr], yz[tr]), (Z[va], yz[va]), config.train)
    net = CnnModel(kind, config.cnn_width, config.cnn_dropout, first.params, first.buffers)
    fit = (rmse(net.predict(Z[tr]) * ys + ym, y[tr]), rmse(net.predict(Z[va]) * ys + ym, y[va]))
    extra.update(best_epoch=first.best_epoch, train_loss=first.train_loss, val_loss=first.val_loss)

    final = net
    if _refit_ok(fit, config, extra):
        # refit on train+val for as many epochs as the checkpointed run needed
        refit = train(spec, (Z[dev], yz[dev]), None, config.train, epochs=first.best_epoch + 1)
        extra["refit_loss"] = refit.train_loss
        final = CnnModel(kind, config.cnn_width, config.cnn_dropout, refit.params, refit.buffers)
    trained = TrainedModel(kind, task, final, config.filter_spec, mean, std, (), None, ym, ys)
    return trained, fit, final.predict(Z[split == "test"]) * ys + ym


def run_pipeline(task: str, kind: str, dataset: Dataset, config: PipelineConfig = PipelineConfig(),
                 split: np.ndarray | None = None) -> tuple[TrainedModel, EvalReport]:
    """Filter, fit on train, check validation, refit on train+val, score on test.

    A model whose validation RMSE exceeds ``overfit_ratio`` times its training
    RMSE is flagged and kept as fitted on train alone.
    """
    check_compatible(task, kind)
    if dataset.filtered:
        raise ValueError("run_pipeline expects raw (unfiltered) signatures")
    if split is None:
        split = stratified_split(dataset.strata(), config.seed)
    filtered = filter_matrix(dataset.rcs, config.filter_spec)
    y = dataset.target(task)
    extra: dict = {}
    runner = _cnn if kind in CNN_KINDS else _classical
    trained, (train_rmse, val_rmse), pred = runner(kind, task, filtered, y, split, config, extra)
    trained = replace(trained, config={"task": task, "kind": kind, **config.as_dict()})

    te = split == "test"
    overfit = not extra["refit"]
    if overfit:
        log.warning("%s/%s: validation RMSE %.4g exceeds %.2f x training RMSE %.4g; skipping the train+val refit",
                    task, kind, val_rmse, config.overfit_ratio, train_rmse)
    report = EvalReport(
        task, kind, train_rmse, val_rmse, rmse(pred, y[te]), decode_accuracy(task, pred, y[te]),
        per_case_report(pred, y[te], dataset.position[te], dataset.case[te]), overfit,
        {**extra, "test_predictions": pred, "test_index": np.flatnonzero(te)},
    )
    return trained, report
