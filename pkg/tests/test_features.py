import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crfid.dsp import filter_matrix, filtfilt
from crfid.features import (
    ALL_FEATURES,
    CATALOG,
    WINDOWED,
    WindowSpec,
    apply_scaler,
    catalog_matrix,
    extract_all,
    extract_catalog,
    extract_windowed,
    fit_scaler,
    windowed_matrix,
)
from crfid.rcs import RcsSignature
from crfid.siggen import GeneratorConfig, TagLabel, synth_rcs
from crfid.touchstone import CANONICAL_GRID

F = CANONICAL_GRID.frequencies
CLEAN = GeneratorConfig().noiseless()


def filtered(rcs):
    return RcsSignature.on_grid(rcs, filtered=True)


def test_catalog_size_and_names():
    assert len(CATALOG) == 46 and len(set(CATALOG)) == 46
    assert len(WINDOWED) == 8 and len(ALL_FEATURES) == 54


def test_windows_partition_band():
    masks = WindowSpec().masks(F)
    total = np.sum(masks, axis=0)
    assert np.all(total == 1)


def test_constant_signature():
    v = extract_catalog(filtered(np.full(700, 0.02))).as_dict()
    assert v["stat_mean"] == pytest.approx(0.02)
    assert v["stat_variance"] == 0
    assert v["temp_zero_crossings"] == 0
    assert v["temp_total_variation"] == 0
    assert v["entropy_hist16"] == 0
    w = extract_windowed(filtered(np.full(700, 0.02))).as_dict()
    for (name, lo, _), mask in zip(WindowSpec().bands, WindowSpec().masks(F)):
        assert w[f"{name}_min_freq_hz"] == F[mask][0]
        assert w[f"{name}_min_rcs"] == 0.02


def test_mirror_invariant_features(rng):
    x = filter_matrix(0.01 + 0.001 * rng.normal(size=(1, 700)))[0]
    a = extract_catalog(filtered(x)).as_dict()
    b = extract_catalog(filtered(x[::-1].copy())).as_dict()
    for name in ("stat_variance", "energy_total", "entropy_hist16"):
        assert a[name] == pytest.approx(b[name], rel=1e-12)


def test_single_dip_minimum():
    depth, base = 0.004, 0.01
    x = base - depth * np.exp(-0.5 * ((F - 5e9) / 0.2e9) ** 2)
    v = extract_catalog(filtered(x)).as_dict()
    assert v["stat_min"] == pytest.approx(x.min(), rel=1e-12)
    assert v["stat_min"] == pytest.approx(base - depth, rel=1e-4)
    assert all(np.isfinite(list(v.values())))


def test_unfiltered_rejected():
    with pytest.raises(ValueError):
        extract_catalog(RcsSignature.on_grid(np.ones(700)))
    with pytest.raises(ValueError):
        extract_windowed(RcsSignature.on_grid(np.ones(700)))


def test_windowed_minima_of_tag7():
    sig = filtfilt(synth_rcs(TagLabel(7, 0.1, "P1", "Ci"), CLEAN, 0))
    w = extract_windowed(sig).as_dict()
    for k, c in enumerate(CLEAN.id_centers, start=1):
        assert abs(w[f"w{k}_min_freq_hz"] - c) <= CANONICAL_GRID.spacing
    assert abs(w["w4_min_freq_hz"] - CLEAN.sensing_frequency(0.1)) <= CANONICAL_GRID.spacing


def test_windowed_minima_of_tag0_shallow():
    sig = filtfilt(synth_rcs(TagLabel(0, 0.1, "P1", "Ci"), CLEAN, 0))
    w = extract_windowed(sig).as_dict()
    for k in (1, 2, 3):
        assert w[f"w{k}_min_rcs"] >= CLEAN.baseline * (1 - CLEAN.id_residual_depth) - 1e-12


def test_schema_stable_and_finite(small_dataset):
    fm = extract_all(filter_matrix(small_dataset.rcs[:200]))
    assert fm.names == ALL_FEATURES
    assert fm.values.shape == (200, 54)
    assert np.all(np.isfinite(fm.values))


def test_row_extraction_matches_matrix(small_dataset):
    x = filter_matrix(small_dataset.rcs[:5])
    mat = np.hstack([catalog_matrix(x), windowed_matrix(x)])
    for i in range(5):
        row = np.concatenate([extract_catalog(filtered(x[i])).values,
                              extract_windowed(filtered(x[i])).values])
        assert np.array_equal(row, mat[i])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100), st.floats(0, 1))
def test_windowed_affine_behaviour(seed, a, b):
    x = 0.01 + 0.001 * np.random.default_rng(seed).random((1, 700))
    w0 = windowed_matrix(x)[0]
    w1 = windowed_matrix(a * x + b)[0]
    assert np.array_equal(w0[0::2], w1[0::2])  # argmin frequencies unchanged
    assert np.allclose(w1[1::2], a * w0[1::2] + b, rtol=1e-12)


def test_scaler_two_points():
    stats = fit_scaler(np.array([[0.0], [2.0]]))
    assert stats.mean[0] == 1 and stats.std[0] == 1
    assert np.array_equal(apply_scaler(stats, np.array([[0.0], [2.0], [3.0]]))[:, 0], [-1, 1, 2])


def test_scaler_constant_column_goes_to_zero():
    x = np.array([[0.1, 5.0], [0.1, 6.0], [0.1, 9.0]])
    z = apply_scaler(fit_scaler(x), x)
    assert np.all(z[:, 0] == 0)


def test_scaler_empty():
    with pytest.raises(ValueError):
        fit_scaler(np.empty((0, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 40), st.integers(1, 6))
def test_scaler_standardizes_and_is_idempotent(seed, n, p):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p)) * rng.uniform(0.1, 100, p) + rng.uniform(-50, 50, p)
    z = apply_scaler(fit_scaler(x), x)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(z.std(axis=0), 1, atol=1e-9)
    z2 = apply_scaler(fit_scaler(z), z)
    assert np.allclose(z2, z, atol=1e-9)
