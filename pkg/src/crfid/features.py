"""Feature extraction for RCS signatures.

Two groups:

* ``CATALOG`` - 46 whole-band features (statistical, temporal, spectral,
  energy/entropy) computed on the 700-sample sequence with bin index as the
  independent axis.  Spectral features use the FFT of the mean-removed
  sequence with a rectangular window.
* windowed minima - (argmin frequency, minimum RCS) in each of the four
  bands W1..W4.

Degenerate inputs (constant rows, zero spectra) map to 0 rather than NaN.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rcs import RcsSignature
from .touchstone import CANONICAL_GRID

CATALOG_VERSION = "1"

STATISTICAL = (
    "stat_mean", "stat_variance", "stat_std", "stat_skewness", "stat_kurtosis",
    "stat_min", "stat_max", "stat_median", "stat_iqr", "stat_rms",
    "stat_mean_abs_dev", "stat_range", "stat_p10", "stat_p90", "stat_crest_factor",
    "stat_argmin_bin", "stat_argmax_bin",
)
TEMPORAL = (
    "temp_zero_crossings", "temp_slope_sign_changes", "temp_total_variation",
    "temp_mean_abs_diff", "temp_max_abs_diff", "temp_autocorr_lag1",
    "temp_autocorr_lag2", "temp_autocorr_lag5", "temp_autocorr_lag10",
    "temp_trend_slope", "temp_trend_intercept", "temp_local_minima",
)
SPECTRAL = (
    "spec_centroid", "spec_spread", "spec_skewness", "spec_kurtosis",
    "spec_rolloff85", "spec_dominant_bin", "spec_band_ratio_0", "spec_band_ratio_1",
    "spec_band_ratio_2", "spec_band_ratio_3", "spec_flatness", "spec_entropy",
    "spec_max_power",
)
ENERGY = ("energy_total", "energy_log", "energy_centroid_bin", "entropy_hist16")
CATALOG = STATISTICAL + TEMPORAL + SPECTRAL + ENERGY

WINDOWS = (
    ("w1", 3.1e9, 4.2e9),
    ("w2", 4.2e9, 5.2e9),
    ("w3", 5.2e9, 6.3e9),
    ("w4", 6.3e9, 10.6e9),
)
WINDOWED = tuple(n for w, _, _ in WINDOWS for n in (f"{w}_min_freq_hz", f"{w}_min_rcs"))
ALL_FEATURES = CATALOG + WINDOWED

HIST_BINS = 16
_TINY = 1e-300


@dataclass(frozen=True)
class WindowSpec:
    bands: tuple = WINDOWS

    def masks(self, frequencies: np.ndarray) -> list[np.ndarray]:
        out = []
        for i, (_, lo, hi) in enumerate(self.bands):
            last = i == len(self.bands) - 1
            out.append((frequencies >= lo) & ((frequencies <= hi) if last else (frequencies < hi)))
        return out


@dataclass(frozen=True)
class FeatureVector:
    names: tuple
    values: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True)
class FeatureMatrix:
    names: tuple
    values: np.ndarray  # (rows, features)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ScalerStats:
    mean: np.ndarray
    std: np.ndarray


def _safe_div(num, den):
    den = np.asarray(den, dtype=np.float64)
    ok = np.abs(den) > _TINY
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


def _sign_changes(d: np.ndarray, tol: np.ndarray) -> np.ndarray:
    s = np.sign(np.where(np.abs(d) <= tol, 0.0, d))
    # zeros are skipped by carrying the previous non-zero sign forward
    out = np.zeros(d.shape[0])
    for r in range(d.shape[0]):
        nz = s[r][s[r] != 0]
        out[r] = np.count_nonzero(nz[1:] != nz[:-1])
    return out


def _hist_entropy(x: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    n, length = x.shape
    degenerate = span <= 0
    scaled = (x - lo[:, None]) / np.where(degenerate, 1.0, span)[:, None]
    idx = np.clip((scaled * HIST_BINS).astype(np.int64), 0, HIST_BINS - 1)
    counts = np.bincount((idx + HIST_BINS * np.arange(n)[:, None]).ravel(), minlength=n * HIST_BINS)
    p = counts.reshape(n, HIST_BINS) / length
    logp = np.log2(np.where(p > 0, p, 1.0))
    return np.where(degenerate, 0.0, -(p * logp).sum(axis=1))


def catalog_matrix(rcs: np.ndarray) -> np.ndarray:
    """Catalog features for each row of ``rcs``; returns (rows, len(CATALOG))."""
    x = np.atleast_2d(np.asarray(rcs, dtype=np.float64))
    n, length = x.shape
    t = np.arange(length, dtype=np.float64)
    scale = np.maximum(np.abs(x).max(axis=1), _TINY)
    tol = 1e-12 * scale

    lo, hi = x.min(axis=1), x.max(axis=1)
    # constant rows use their own value as the mean so deviations are exactly 0
    mean = np.where(hi == lo, x[:, 0], x.mean(axis=1))
    d = x - mean[:, None]
    m2 = (d**2).mean(axis=1)
    flat = m2 <= tol**2
    m2_safe = np.where(flat, 1.0, m2)
    m3 = (d**3).mean(axis=1)
    m4 = (d**4).mean(axis=1)
    std = np.sqrt(m2)
    p10, p25, median, p75, p90 = np.percentile(x, [10, 25, 50, 75, 90], axis=1)
    rms = np.sqrt((x**2).mean(axis=1))
    stat = [
        mean, m2, std,
        np.where(flat, 0.0, m3 / m2_safe**1.5),
        np.where(flat, 0.0, m4 / m2_safe**2 - 3.0),
        lo, hi, median, p75 - p25, rms,
        np.abs(d).mean(axis=1), hi - lo, p10, p90,
        _safe_div(np.abs(x).max(axis=1), rms),
        x.argmin(axis=1).astype(np.float64), x.argmax(axis=1).astype(np.float64),
    ]

    dx = np.diff(x, axis=1)
    def autocorr(k):
        return np.where(flat, 0.0, (d[:, :-k] * d[:, k:]).sum(axis=1) / (length * m2_safe))
    tc = t - t.mean()
    slope = (d * tc).sum(axis=1) / (tc**2).sum()
    intercept = mean - slope * t.mean()
    local_min = ((x[:, 1:-1] < x[:, :-2]) & (x[:, 1:-1] < x[:, 2:])).sum(axis=1)
    temp = [
        _sign_changes(d, tol[:, None]),
        _sign_changes(dx, tol[:, None]),
        np.abs(dx).sum(axis=1),
        np.abs(dx).mean(axis=1),
        np.abs(dx).max(axis=1),
        autocorr(1), autocorr(2), autocorr(5), autocorr(10),
        slope, intercept, local_min.astype(np.float64),
    ]

    power = np.abs(np.fft.rfft(np.where(flat[:, None], 0.0, d), axis=1)) ** 2
    freqs = np.fft.rfftfreq(length)  # cycles per sample, 0..0.5
    total = power.sum(axis=1)
    empty = total <= _TINY
    w = _safe_div(power, total[:, None])
    centroid = (w * freqs).sum(axis=1)
    dev = freqs[None, :] - centroid[:, None]
    spread = np.sqrt((w * dev**2).sum(axis=1))
    sp_safe = np.where(spread > 0, spread, 1.0)
    cum = np.cumsum(w, axis=1)
    rolloff = freqs[np.minimum((cum < 0.85).sum(axis=1), freqs.size - 1)]
    # band sums from a sequential cumsum so a row gives the same bits alone or in a batch
    cum_power = np.concatenate([np.zeros((n, 1)), np.cumsum(power, axis=1)], axis=1)
    edges = [b[0] for b in np.array_split(np.arange(freqs.size), 4)] + [freqs.size]
    ratios = [_safe_div(cum_power[:, b] - cum_power[:, a], total) for a, b in zip(edges, edges[1:])]
    p_pos = power[:, 1:] + _TINY
    flatness = _safe_div(np.exp(np.log(p_pos).mean(axis=1)), p_pos.mean(axis=1))
    logw = np.log2(np.where(w > 0, w, 1.0))
    entropy = -(w * logw).sum(axis=1) / np.log2(freqs.size)
    spec = [
        centroid, spread,
        np.where(spread > 0, (w * dev**3).sum(axis=1) / sp_safe**3, 0.0),
        np.where(spread > 0, (w * dev**4).sum(axis=1) / sp_safe**4, 0.0),
        np.where(empty, 0.0, rolloff),
        np.where(empty, 0.0, power.argmax(axis=1)),
        *ratios,
        np.where(empty, 0.0, flatness),
        entropy,
        power.max(axis=1) / length,
    ]

    energy = (x**2).sum(axis=1)
    en = [
        energy,
        np.log10(energy + 1e-30),
        _safe_div((x**2 * t).sum(axis=1), energy),
        _hist_entropy(x, lo, hi - lo),
    ]
    return np.column_stack(stat + temp + spec + en)


def windowed_matrix(rcs: np.ndarray, windows: WindowSpec = WindowSpec(),
                    frequencies: np.ndarray | None = None) -> np.ndarray:
    """(argmin frequency Hz, min RCS) per window for each row; ties go to the lowest frequency."""
    x = np.atleast_2d(np.asarray(rcs, dtype=np.float64))
    f = CANONICAL_GRID.frequencies if frequencies is None else frequencies
    cols = []
    for mask in windows.masks(f):
        seg = x[:, mask]
        i = seg.argmin(axis=1)
        cols += [f[mask][i], seg[np.arange(x.shape[0]), i]]
    return np.column_stack(cols)


def _require_filtered(sig: RcsSignature) -> None:
    if not sig.filtered:
        raise ValueError("feature extraction expects a filtered signature")


def extract_catalog(sig: RcsSignature) -> FeatureVector:
    _require_filtered(sig)
    return FeatureVector(CATALOG, catalog_matrix(sig.rcs)[0])


def extract_windowed(sig: RcsSignature, windows: WindowSpec = WindowSpec()) -> FeatureVector:
    _require_filtered(sig)
    return FeatureVector(WINDOWED, windowed_matrix(sig.rcs, windows, sig.frequencies)[0])


def extract_all(rcs: np.ndarray) -> FeatureMatrix:
    """Catalog + windowed features for a (rows, 700) matrix of filtered signatures."""
    return FeatureMatrix(ALL_FEATURES, np.hstack([catalog_matrix(rcs), windowed_matrix(rcs)]))


def fit_scaler(train) -> ScalerStats:
    values = train.values if isinstance(train, FeatureMatrix) else np.asarray(train, dtype=np.float64)
    values = np.atleast_2d(values)
    if values.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty matrix")
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    flat = np.ptp(values, axis=0) == 0
    mean = np.where(flat, values[0], mean)
    return ScalerStats(mean, np.where(flat | (std < 1e-12), 1.0, std))


def apply_scaler(stats: ScalerStats, matrix):
    if isinstance(matrix, FeatureMatrix):
        return FeatureMatrix(matrix.names, (matrix.values - stats.mean) / stats.std)
    return (np.asarray(matrix, dtype=np.float64) - stats.mean) / stats.std
