"""Acceptance criteria, one test each; verdict lines are printed at the end of the session."""
import time
from collections import Counter

import numpy as np
import pytest
from oracles import best_bias, dual_objective, grad_check, grid_dual, random_split_problem, root_split_agrees

from crfid.cli import main
from crfid.cnn import ARCHITECTURES, Flatten, TrainConfig, output_shapes
from crfid.dsp import FilterSpec, design_butterworth, filtfilt, sos_response
from crfid.metrics import decode_id, decode_sensing, improvement, normalized_rmse, split_counts, stratified_split
from crfid.ml import best_split, fit_gbt, fit_svr
from crfid.ml.svr import rbf_kernel
from crfid.pipeline import PipelineConfig, run_pipeline
from crfid.rcs import SPEED_OF_LIGHT, RcsSignature, ReferencePlate, calibrate, sigma_ref
from crfid.siggen import HARD_CELL, SENSING_WINDOW, GeneratorConfig, TagLabel, build_dataset, synth_rcs
from crfid.touchstone import CANONICAL_GRID, FrequencySweep

RESULTS = []

# desk-scale settings for the end-to-end run
DESK_READINGS = 5  # --scale 0.25
CNN_WIDTH, CNN_DROPOUT = 0.125, 0.1
CNN3_EPOCHS, CNN4_EPOCHS, PATIENCE = 50, 25, 10


def verdict(name, ok, detail):
    RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


@pytest.mark.xfail(strict=True, reason="the quoted 1.9635e-3 is rounded; the exact value differs by 2.3e-6 relative")
def test_rcs_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    f = CANONICAL_GRID.frequencies
    iso = rng.normal(size=700) + 1j * rng.normal(size=700)
    ref = rng.normal(size=700) + 1j * rng.normal(size=700)
    plate = ReferencePlate(0.025)
    s = sigma_ref(plate, f)

    def cal(tag):
        return calibrate(*(FrequencySweep(f, v) for v in (tag, iso, ref)), plate).rcs

    cases = [bool(np.allclose(cal(ref), s, rtol=1e-12, atol=0)),
             bool(np.all(cal(iso) == 0)),
             bool(np.allclose(cal(iso + 0.5 * (ref - iso)), 0.25 * s, rtol=1e-12, atol=0))]
    sig = sigma_ref(plate, SPEED_OF_LIGHT / 0.05)
    formula_err = abs(sig / (4 * np.pi * 0.025**4 / 0.05**2) - 1)
    quoted_err = abs(sig / 1.9635e-3 - 1)
    elapsed = time.perf_counter() - t0
    ok = all(cases) and formula_err < 1e-12 and quoted_err < 1e-6 and elapsed < 1.0
    verdict("RCS calibration oracle", ok,
            f"ratio cases {cases}, sigma_ref={sig:.7e} m^2, rel error vs 4*pi*A^2/lambda^2 {formula_err:.1e}, "
            f"vs quoted 1.9635e-3 {quoted_err:.2e} (limit 1e-6), {elapsed:.2f}s")


def test_butterworth():
    t0 = time.perf_counter()
    sos = design_butterworth(FilterSpec(4, 0.1))
    cutoff_db = 20 * np.log10(abs(sos_response(sos, 0.1)))
    nyq_db = 20 * np.log10(abs(sos_response(sos, 1.0)) + 1e-300)
    cfg = GeneratorConfig().noiseless()
    freqs = CANONICAL_GRID.frequencies
    shift = 0
    for tag, cap in [(7, 0.1), (5, 0.8), (2, 0.3), (0, 0.3)]:
        rcs = synth_rcs(TagLabel(tag, cap, "P1", "Ci"), cfg, 0).rcs
        out = filtfilt(RcsSignature.on_grid(rcs)).rcs
        for lo, hi in [(3.1e9, 4.2e9), (4.2e9, 5.2e9), (5.2e9, 6.3e9), SENSING_WINDOW]:
            m = (freqs >= lo) & (freqs < hi)
            shift = max(shift, abs(int(np.argmin(rcs[m])) - int(np.argmin(out[m]))))
    elapsed = time.perf_counter() - t0
    ok = abs(cutoff_db + 3.01) <= 0.1 and nyq_db <= -40 and shift <= 1 and elapsed < 1.0
    verdict("Butterworth design", ok,
            f"cutoff {cutoff_db:.3f} dB, Nyquist {nyq_db:.1f} dB, max argmin shift {shift} bin, {elapsed:.2f}s")


def test_gradients():
    from crfid.cnn import ArchitectureSpec, BatchNorm, Conv1D, Dense, Dropout, MaxPool1D
    t0 = time.perf_counter()
    layer_specs = {
        "conv": (Conv1D(3, 3), Flatten(), Dense(1, "linear")),
        "pool": (Conv1D(3, 3, "linear"), MaxPool1D(), Flatten(), Dense(1, "linear")),
        "batchnorm": (Conv1D(3, 3, "linear"), BatchNorm(), Flatten(), Dense(1, "linear")),
        "dropout": (Conv1D(3, 3, "linear"), Dropout(0.5), Flatten(), Dense(1, "linear")),
        "dense": (Flatten(), Dense(6), Dense(1, "linear")),
    }
    errs = {k: grad_check(ArchitectureSpec(k, v, (20, 1))) for k, v in layer_specs.items()}
    errs.update({a: grad_check(ARCHITECTURES[a](1 / 64), n=3, sample=15) for a in sorted(ARCHITECTURES)})
    elapsed = time.perf_counter() - t0
    worst = max(errs.values())
    verdict("Gradient correctness", worst < 1e-4 and elapsed < 120,
            f"max rel error {worst:.2e} over {len(errs)} checks, {elapsed:.1f}s")


def test_shape_tables():
    expected = {"cnn1": 10880, "cnn2": 5440, "cnn3": 512, "cnn4": 1216}
    got = {}
    for arch in expected:
        spec = ARCHITECTURES[arch]()
        shapes = output_shapes(spec)
        got[arch] = next(s[0] for layer, s in zip(spec.layers, shapes) if isinstance(layer, Flatten))
    stem = output_shapes(ARCHITECTURES["cnn3"]())[0]
    verdict("Shape tables", got == expected and stem == (694, 512), f"flatten sizes {got}, model 3 stem {stem}")


def test_tree_oracles():
    dt_ok = sum(root_split_agrees(best_split(*random_split_problem(c)), *random_split_problem(c))
                for c in range(200))

    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 3))
    y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=100)
    model = fit_gbt(X, y, n_estimators=100, learning_rate=0.1, max_depth=2)
    errs = np.array([np.sqrt(np.mean((p - y) ** 2)) for p in model.staged_predict(X)])
    gbt_ok = bool(np.all(np.diff(errs) <= 1e-12))

    svr_gap = 0.0
    svr_ok = True
    for seed in range(4):
        r = np.random.default_rng(seed)
        Xs = r.normal(size=(5, 2))
        Xs = (Xs - Xs.mean(axis=0)) / Xs.std(axis=0)
        ys = r.normal(size=5)
        C, eps, gamma = 1.0, 0.1, 0.5
        m = fit_svr(Xs, ys, C, eps, gamma, tol=1e-8)
        K = rbf_kernel(Xs, Xs, gamma)
        ref = grid_dual(K, ys, C, eps)
        Xq = r.normal(size=(20, 2))
        ref_pred = rbf_kernel(Xq, Xs, gamma) @ ref + best_bias(K @ ref, ys, eps)
        svr_gap = max(svr_gap, float(np.max(np.abs(m.predict(Xq) - ref_pred))))
        ours = np.zeros(5)
        ours[[int(np.flatnonzero((Xs == sv).all(axis=1))[0]) for sv in m.support_vectors]] = m.dual_coef
        svr_ok &= dual_objective(ours, K, ys, eps) <= dual_objective(ref, K, ys, eps) + 1e-9
    svr_ok &= svr_gap <= 0.1 + 1e-3
    verdict("Tree and SVR oracles", dt_ok == 200 and gbt_ok and svr_ok,
            f"DT root split {dt_ok}/200, GBT RMSE {errs[0]:.3f}->{errs[-1]:.3f} non-increasing={gbt_ok}, "
            f"SVR max prediction gap {svr_gap:.2e} (limit eps+1e-3)")


def test_split_arithmetic():
    keys = [(t, c) for t in range(24) for c in range(20) for _ in range(20)]
    split = stratified_split(keys, seed=0)
    totals = Counter(split.tolist())
    per_group = Counter((k, s) for k, s in zip(keys, split.tolist()))
    groups_ok = all(per_group[(k, "train")] == 12 and per_group[(k, "val")] == 4 and per_group[(k, "test")] == 4
                    for k in set(keys))
    rng = np.random.default_rng(1)
    within = all(max(abs(n - f * m) for n, f in zip(split_counts(m), (0.6, 0.2, 0.2))) <= 1
                 for m in rng.integers(5, 2001, size=500))
    ok = totals == {"train": 5760, "val": 1920, "test": 1920} and groups_ok and within
    verdict("Split arithmetic", ok, f"totals {dict(totals)}, per-group 12/4/4={groups_ok}, +-1 row={within}")


def test_normalized_rmse_arithmetic():
    a = normalized_rmse(0.061, 7.0)
    b = normalized_rmse(0.0241, 0.7)
    c = normalized_rmse(0.3, 7.0)
    d = improvement(0.3, 0.098)
    ok = round(a, 2) == 0.87 and round(b, 2) == 3.44 and abs(c - 4.2) <= 0.1 and abs(d - 67.33) <= 0.01
    verdict("Normalized RMSE arithmetic", ok, f"{a:.4f}%, {b:.4f}%, {c:.4f}% (vs 4.2), improvement {d:.4f}%")


# (actual id, actual pF, predicted id, printed id error, predicted pF, printed pF error)
VALIDATION_ROWS = [
    (3, 0.8, 2.8981, 0.1019, 0.7360, 0.0640),
    (7, 0.3, 6.9721, 0.0279, 0.2967, 0.0033),
    (5, 0.3, 4.9641, 0.0359, 0.2640, 0.0360),
    (1, 0.1, 1.0199, 0.0199, 0.1647, 0.0647),
    (2, 0.8, 2.0138, 0.0138, 0.7599, 0.0401),
    (5, 0.3, 4.8707, 0.2293, 0.3138, 0.0138),
    (6, 0.3, 6.1629, 0.1629, 0.2733, 0.0267),
    (3, 0.1, 2.8091, 0.1909, 0.1567, 0.0567),
    (2, 0.3, 2.0148, 0.0148, 0.2959, 0.0041),
    (7, 0.3, 6.6830, 0.3170, 0.2961, 0.0039),
]


@pytest.mark.xfail(strict=True, reason="one printed ID error (0.2293 for 4.8707 vs 5) differs from |pred-actual|")
def test_validation_rows_decode():
    ids = sum(decode_id(r[2]) == r[0] for r in VALIDATION_ROWS)
    caps = sum(decode_sensing(r[4]) == r[1] for r in VALIDATION_ROWS)
    bad = [f"{r[2]} vs {r[0]}: |diff|={abs(r[2] - r[0]):.4f}, printed {r[3]}" for r in VALIDATION_ROWS
           if abs(abs(r[2] - r[0]) - r[3]) > 1e-4]
    bad += [f"{r[4]} vs {r[1]}: |diff|={abs(r[4] - r[1]):.4f}, printed {r[5]}" for r in VALIDATION_ROWS
            if abs(abs(r[4] - r[1]) - r[5]) > 1e-4]
    verdict("Validation-table decode", ids == 10 and not bad,
            f"IDs {ids}/10, capacitances {caps}/10, printed errors off by >1e-4: {bad or 'none'}")


@pytest.fixture(scope="module")
def desk_runs():
    t0 = time.perf_counter()
    ds = build_dataset(GeneratorConfig(), readings=DESK_READINGS)
    base = PipelineConfig(seed=0, cnn_width=CNN_WIDTH, cnn_dropout=CNN_DROPOUT)
    runs = {}
    for task, kind, epochs in [("id", "cnn3", CNN3_EPOCHS), ("sensing", "cnn4", CNN4_EPOCHS)]:
        cfg = PipelineConfig(**{**base.__dict__, "train": TrainConfig(max_epochs=epochs, patience=PATIENCE)})
        runs[kind] = run_pipeline(task, kind, ds, cfg)[1]
    runs["gbt"] = run_pipeline("id", "gbt", ds, base)[1]
    return ds, runs, time.perf_counter() - t0


def test_end_to_end(desk_runs):
    ds, runs, elapsed = desk_runs
    c3, c4, gbt = runs["cnn3"], runs["cnn4"], runs["gbt"]
    epochs = (len(c3.extra["val_loss"]), len(c4.extra["val_loss"]))
    ok = (len(ds) == 2400 and c3.decode_accuracy >= 0.95 and c3.test_rmse <= 0.5
          and c4.decode_accuracy >= 0.90 and gbt.decode_accuracy >= 0.90 and max(epochs) <= 50
          and elapsed < 1800)
    verdict("Desk-scale end-to-end", ok,
            f"{len(ds)} rows; cnn3 ID acc {c3.decode_accuracy:.2%} RMSE {c3.test_rmse:.3f}; "
            f"cnn4 sensing acc {c4.decode_accuracy:.2%}; GBT ID acc {gbt.decode_accuracy:.2%}; "
            f"epochs {epochs}; {elapsed / 60:.1f} min")


def test_hard_cell_has_largest_id_rmse(desk_runs):
    _, runs, _ = desk_runs
    cells = runs["cnn3"].per_case
    worst = max(cells, key=lambda k: cells[k].rmse)
    hard = (HARD_CELL[1], HARD_CELL[0])  # report cells are keyed (position, case)
    runner_up = sorted((c.rmse for k, c in cells.items() if k != worst), reverse=True)[0]
    verdict("Hard cell ordering", worst == hard and len(cells) == 20,
            f"max ID RMSE at {worst} = {cells[worst].rmse:.3f} (next {runner_up:.3f}), expected {hard}")


def test_determinism(tmp_path):
    t0 = time.perf_counter()
    (tmp_path / "run.ini").write_text(
        "[model]\nn_estimators = 10\nmax_depth = 3\n[pipeline]\ncnn_width = 0.015625\ncnn_dropout = 0.1\n")
    files = {}
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["generate", "--out", str(d / "data"), "--scale", "0.25", "--seed", "11"]) == 0
        data = str(d / "data" / "dataset.csv")
        assert main(["train", "--config", str(tmp_path / "run.ini"), "--data", data, "--task", "id",
                     "--model", "gbt", "--seed", "11", "--out", str(d / "gbt")]) == 0
        assert main(["train", "--config", str(tmp_path / "run.ini"), "--data", data, "--task", "sensing",
                     "--model", "cnn2", "--epochs", "2", "--seed", "11", "--out", str(d / "cnn2")]) == 0
        assert main(["report", str(d / "gbt"), str(d / "cnn2"), "--out", str(d / "report")]) == 0
        files[run] = {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*"))
                      if p.is_file() and p.suffix in (".csv", ".crfid")}
    same = files["a"].keys() == files["b"].keys() and all(files["a"][k] == files["b"][k] for k in files["a"])
    diff = [str(k) for k in files["a"] if files["a"][k] != files["b"].get(k)]
    verdict("Determinism", same and len(files["a"]) >= 10,
            f"{len(files['a'])} CSV/model files compared, differing: {diff or 'none'}, "
            f"{time.perf_counter() - t0:.0f}s")


def test_cnn3_validation_trend(desk_runs):
    # supporting check, not a criterion: the first ten validation losses trend downward
    val = np.asarray(desk_runs[1]["cnn3"].extra["val_loss"][:10])
    slope = np.polyfit(np.arange(val.size), val, 1)[0]
    assert val.size == 10 and slope < 0 and val[-1] < val[0]
