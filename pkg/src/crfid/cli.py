"""``crfid`` command line: generate, train, predict, report.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical failure.

Config files are INI with optional sections ``[generator]``, ``[pipeline]``,
``[model]`` and ``[train]``; values are parsed as JSON when possible, else
taken as strings.  Seed precedence: ``--seed`` > ``CRFID_SEED`` > config.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cnn import TrainConfig, TrainingDiverged
from .dataset import Dataset, read_csv, write_csv
from .dsp import FilterSpec
from .metrics import decode
from .persist import MODEL_KINDS, TASKS, config_digest, load_model, save_model
from .pipeline import IncompatibleModel, PipelineConfig, check_compatible, run_pipeline
from .rcs import CalibrationError, ReferencePlate, calibrate
from .siggen import (
    CASES, POSITIONS, READINGS, GeneratorConfig, build_dataset, derive_seed, label_counter, synth_sweeps,
)
from .touchstone import read_s2p, resample_to_grid, save_s2p

log = logging.getLogger("crfid")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SUMMARY_COLUMNS = ("model", "task", "train_rmse", "val_rmse", "test_rmse", "test_nrmse_pct",
                   "decode_accuracy", "overfit_warning")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path) -> dict[str, dict]:
    if path is None:
        return {}
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    if not parser.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    unknown = set(parser.sections()) - {"generator", "pipeline", "model", "train"}
    if unknown:
        raise ValueError(f"unknown config sections: {', '.join(sorted(unknown))}")
    return {s: {k: _value(v) for k, v in parser[s].items()} for s in parser.sections()}


def resolve_seed(cli_seed, section: dict, default: int) -> int:
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("CRFID_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"CRFID_SEED must be an integer, got {env!r}") from None
    return int(section.get("seed", default))


def readings_for_scale(scale: float) -> int:
    readings = round(READINGS * scale)
    if not 0 < scale <= 1 or readings < 1:
        raise UsageError(f"--scale must be in (0, 1] and leave at least one reading, got {scale}")
    return readings


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _manifest(path: Path, args, seed, inputs, outputs, config: dict, **extra) -> None:
    doc = {
        "subcommand": args.command,
        "version": __version__,
        "config_path": args.config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "config": config,
        "config_digest": config_digest(config),
        **extra,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    conf = load_config(args.config).get("generator", {})
    seed = resolve_seed(args.seed, conf, GeneratorConfig().seed)
    cfg = replace(GeneratorConfig.from_mapping({k: v for k, v in conf.items() if k != "seed"}), seed=seed)
    readings = readings_for_scale(args.scale)
    out = _out_dir(args.out)
    ds = build_dataset(cfg, readings)
    data = out / "dataset.csv"
    write_csv(ds, data)
    outputs = [data]
    for i in range(min(args.s2p, len(ds))):
        label = ds.label(i)
        sweeps = synth_sweeps(label, cfg, derive_seed(cfg.seed, label_counter(label)))
        for role, sweep in zip(("tag", "iso", "ref"), sweeps):
            p = out / "s2p" / f"{sweeps[0].source_id}_{role}.s2p"
            p.parent.mkdir(exist_ok=True)
            save_s2p(sweep, p)
            outputs.append(p)
    _manifest(out / "manifest.json", args, seed, [], outputs, cfg.as_dict(), readings=readings)
    print(f"wrote {len(ds)} rows to {data}")
    return EXIT_OK


def pipeline_config(conf: dict, seed: int, epochs: int | None) -> PipelineConfig:
    pipe = dict(conf.get("pipeline", {}))
    pipe.pop("seed", None)
    filt = FilterSpec(int(pipe.pop("filter_order", 4)), float(pipe.pop("filter_cutoff", 0.1)))
    allowed = {f.name for f in fields(PipelineConfig)} - {"seed", "filter_spec", "params", "train"}
    unknown = set(pipe) - allowed
    if unknown:
        raise ValueError(f"unknown [pipeline] options: {', '.join(sorted(unknown))}")
    train_kw = dict(conf.get("train", {}))
    if epochs is not None:
        train_kw["max_epochs"] = epochs
        train_kw["patience"] = min(int(train_kw.get("patience", 20)), max(epochs - 1, 0))
    train_kw.setdefault("seed", seed)
    return PipelineConfig(seed=seed, filter_spec=filt, params=dict(conf.get("model", {})),
                          train=TrainConfig(**train_kw), **pipe)


def _report_rows(report):
    return [[report.model_kind, report.task, repr(report.train_rmse), repr(report.val_rmse),
             repr(report.test_rmse), repr(report.normalized_test_rmse), repr(report.decode_accuracy),
             int(report.overfit_warning)]]


def cmd_train(args) -> int:
    try:
        check_compatible(args.task, args.model)
    except IncompatibleModel as exc:
        raise UsageError(str(exc)) from None
    conf = load_config(args.config)
    seed = resolve_seed(args.seed, conf.get("pipeline", {}), 0)
    config = pipeline_config(conf, seed, args.epochs)
    ds = read_csv(args.data)
    out = _out_dir(args.out)
    model, report = run_pipeline(args.task, args.model, ds, config)

    paths = {"model": out / "model.crfid", "report": out / "report.csv",
             "per_case": out / "per_case.csv", "predictions": out / "test_predictions.csv"}
    save_model(model, paths["model"])
    _write_csv(paths["report"], SUMMARY_COLUMNS, _report_rows(report))
    _write_csv(paths["per_case"], ("position", "case", "n", "rmse", "std"),
               [[p, c, cell.n, repr(cell.rmse), repr(cell.std)] for (p, c), cell in report.per_case.items()])
    idx = report.extra["test_index"]
    _write_csv(paths["predictions"], _prediction_header(True),
               _prediction_rows(ds.subset(idx), args.task, report.extra["test_predictions"]))
    if "train_loss" in report.extra:
        paths["loss_history"] = out / "loss_history.csv"
        _write_csv(paths["loss_history"], ("epoch", "train_loss", "val_loss"),
                   [[e, repr(t), repr(v)] for e, (t, v) in
                    enumerate(zip(report.extra["train_loss"], report.extra["val_loss"]))])
    _manifest(out / "manifest.json", args, seed, [args.data], list(paths.values()), config.as_dict(),
              task=args.task, model=args.model, epochs=config.train.max_epochs)
    print(f"{args.task}/{args.model}: train {report.train_rmse:.4g}  val {report.val_rmse:.4g}  "
          f"test {report.test_rmse:.4g} ({report.normalized_test_rmse:.2f}%)  "
          f"decode accuracy {report.decode_accuracy:.2%}")
    return EXIT_OK


def _prediction_header(with_labels: bool):
    if with_labels:
        return ("tag_id", "capacitance_pf", "position", "case", "reading",
                "actual", "predicted", "decoded", "error")
    return ("source", "predicted", "decoded")


def _prediction_rows(ds: Dataset, task: str, pred: np.ndarray):
    actual = ds.target(task)
    dec = decode(task, pred)
    for i in range(len(ds)):
        a = int(actual[i]) if task == "id" else float(actual[i])
        d = int(dec[i]) if task == "id" else float(dec[i])
        yield [int(ds.tag_id[i]), repr(float(ds.capacitance[i])), ds.position[i], ds.case[i],
               int(ds.reading[i]), a, repr(float(pred[i])), d, repr(abs(float(pred[i]) - float(actual[i])))]


def cmd_predict(args) -> int:
    model = load_model(args.model_file)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.data:
        ds = read_csv(args.data)
        pred = model.predict(ds.rcs)
        _write_csv(out, _prediction_header(True), _prediction_rows(ds, model.task, pred))
        inputs = [args.data]
    else:
        if not (args.tag and args.iso and args.ref):
            raise UsageError("predict needs --data or all of --tag/--iso/--ref")
        sweeps = [resample_to_grid(read_s2p(p)) for p in (args.tag, args.iso, args.ref)]
        sig = calibrate(*sweeps, ReferencePlate(args.plate_side))
        pred = model.predict(sig.rcs[None, :])
        dec = decode(model.task, pred)
        _write_csv(out, _prediction_header(False), [[sweeps[0].source_id, repr(float(pred[0])), dec[0]]])
        inputs = [args.tag, args.iso, args.ref]
    _manifest(out.with_suffix(".manifest.json"), args, None, [args.model_file, *inputs], [out],
              model.config, model_kind=model.kind, task=model.task)
    print(f"wrote {len(pred)} predictions to {out}")
    return EXIT_OK


def _read_summary(path: Path) -> tuple[list, list]:
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SUMMARY_COLUMNS:
        raise ValueError(f"{path}: not a crfid report (header mismatch)")
    return rows[1:]


def _read_per_case(path: Path) -> dict:
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["position", "case", "n", "rmse", "std"] or len(rows) != 21:
        raise ValueError(f"{path}: per-case table must have a header and 20 rows")
    return {(r[0], r[1]): (r[3], r[4]) for r in rows[1:]}


def cmd_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs at least one training output directory")
    out = _out_dir(args.out)
    summary, outputs = [], []
    for d in map(Path, args.inputs):
        rows = _read_summary(d / "report.csv")
        summary.extend(rows)
        cells = _read_per_case(d / "per_case.csv")
        for model_kind, task, *_ in rows:
            for k, stat in enumerate(("rmse", "std")):
                p = out / f"per_case_{task}_{model_kind}_{stat}.csv"
                _write_csv(p, ("position", *CASES), [[pos, *(cells[(pos, c)][k] for c in CASES)]
                                                    for pos in POSITIONS])
                outputs.append(p)
    path = out / "summary.csv"
    _write_csv(path, SUMMARY_COLUMNS, summary)
    _manifest(out / "manifest.json", args, None, args.inputs, [path, *outputs], {})
    for row in summary:
        print(f"{row[0]:>5} {row[1]:>8}  train {float(row[2]):.4g}  val {float(row[3]):.4g}  "
              f"test {float(row[4]):.4g} ({float(row[5]):.2f}%)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="master seed (overrides CRFID_SEED and config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="crfid", description="Chipless RFID RCS decoding pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset CSV")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--scale", type=float, default=1.0, help="fraction of the 20 readings per group")
    g.add_argument("--s2p", type=int, default=0, metavar="N",
                   help="also write tag/iso/ref .s2p triples for the first N rows")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train and evaluate one model")
    t.add_argument("--data", required=True, help="dataset CSV")
    t.add_argument("--task", required=True, choices=TASKS)
    t.add_argument("--model", required=True, choices=MODEL_KINDS)
    t.add_argument("--epochs", type=int, help="maximum CNN epochs")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="apply a saved model")
    p.add_argument("model_file")
    p.add_argument("--data", help="dataset CSV with raw RCS rows")
    p.add_argument("--tag", help="tag sweep (.s2p)")
    p.add_argument("--iso", help="isolation sweep (.s2p)")
    p.add_argument("--ref", help="reference-plate sweep (.s2p)")
    p.add_argument("--plate-side", type=float, default=0.025, help="reference plate side length in m")
    p.add_argument("--out", required=True, help="predictions CSV")
    p.set_defaults(func=cmd_predict)

    r = sub.add_parser("report", parents=[common], help="merge training reports")
    r.add_argument("inputs", nargs="*", help="training output directories")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crfid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError, CalibrationError) as exc:
        print(f"crfid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError, configparser.Error) as exc:
        print(f"crfid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
