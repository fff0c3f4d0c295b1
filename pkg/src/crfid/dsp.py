"""Zero-phase Butterworth low-pass smoothing of RCS signatures.

The signature is treated as a uniformly sampled sequence; the cutoff is a
fraction of that sequence's Nyquist rate, not a frequency in Hz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rcs import RcsSignature


@dataclass(frozen=True)
class FilterSpec:
    order: int = 4
    cutoff: float = 0.1  # fraction of Nyquist

    def __post_init__(self):
        if not 0.0 < self.cutoff < 1.0:
            raise ValueError(f"cutoff must be in (0, 1), got {self.cutoff}")
        if self.order < 2 or self.order % 2:
            raise ValueError(f"order must be even and >= 2, got {self.order}")


DEFAULT_FILTER = FilterSpec()


def design_butterworth(spec: FilterSpec = DEFAULT_FILTER) -> np.ndarray:
    """Digital low-pass Butterworth as second-order sections, shape (order/2, 6).

    Rows are ``[b0, b1, b2, 1, a1, a2]``. Each section is normalised to unit
    DC gain, so the cascade has DC gain 1.
    """
    n = spec.order
    fs = 2.0  # cutoff is expressed relative to Nyquist = 1
    warped = 2.0 * fs * np.tan(np.pi * spec.cutoff / fs)
    k = np.arange(1, n // 2 + 1)
    # upper-half-plane poles of the normalised analog prototype, one per conjugate pair
    analog = warped * np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))
    digital = (2 * fs + analog) / (2 * fs - analog)
    sos = np.zeros((n // 2, 6))
    for row, p in zip(sos, digital):
        a1, a2 = -2.0 * p.real, abs(p) ** 2
        g = (1.0 + a1 + a2) / 4.0  # zeros at z = -1: numerator g*(1 + 2z^-1 + z^-2)
        row[:] = (g, 2.0 * g, g, 1.0, a1, a2)
    return sos


def sos_response(sos: np.ndarray, w) -> np.ndarray:
    """Complex response at normalised frequencies ``w`` (1 = Nyquist)."""
    z = np.exp(-1j * np.pi * np.asarray(w, dtype=np.float64))
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h = h * (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return h


def padlen(sos: np.ndarray) -> int:
    return 3 * (2 * len(sos) + 1)


def _steady_state(sos: np.ndarray) -> np.ndarray:
    """Per-section transposed-direct-form-II state for a unit step input."""
    zi = np.zeros((len(sos), 2))
    scale = 1.0
    for i, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        gain = (b0 + b1 + b2) / (1.0 + a1 + a2)
        z2 = b2 - a2 * gain
        z1 = b1 - a1 * gain + z2
        zi[i] = scale * z1, scale * z2
        scale *= gain
    return zi


def _sosfilt(sos: np.ndarray, x: np.ndarray, zi: np.ndarray) -> np.ndarray:
    # x: (rows, length); zi: (sections, 2, rows)
    y = np.array(x, dtype=np.float64, copy=True)
    for s, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        z1, z2 = zi[s, 0].copy(), zi[s, 1].copy()
        col = y.T  # iterate along the sequence axis
        for t in range(col.shape[0]):
            xt = col[t].copy()
            yt = b0 * xt + z1
            z1 = b1 * xt - a1 * yt + z2
            z2 = b2 * xt - a2 * yt
            col[t] = yt
    return y


def filtfilt_array(x: np.ndarray, spec: FilterSpec = DEFAULT_FILTER) -> np.ndarray:
    """Forward-backward filtering of each row of ``x`` (1-D or 2-D), no clamping."""
    sos = design_butterworth(spec)
    arr = np.asarray(x, dtype=np.float64)
    rows = np.atleast_2d(arr)
    n_pad = padlen(sos)
    if rows.shape[1] <= n_pad:
        raise ValueError(f"sequence length {rows.shape[1]} too short, need > {n_pad}")
    left = 2.0 * rows[:, :1] - rows[:, n_pad:0:-1]
    right = 2.0 * rows[:, -1:] - rows[:, -2 : -n_pad - 2 : -1]
    ext = np.concatenate([left, rows, right], axis=1)
    zi = _steady_state(sos)
    fwd = _sosfilt(sos, ext, zi[:, :, None] * ext[:, 0])
    bwd = _sosfilt(sos, fwd[:, ::-1], zi[:, :, None] * fwd[:, -1])[:, ::-1]
    out = bwd[:, n_pad:-n_pad]
    return out.reshape(arr.shape)


def filtfilt(sig: RcsSignature, spec: FilterSpec = DEFAULT_FILTER) -> RcsSignature:
    out = filtfilt_array(sig.rcs, spec)
    return RcsSignature(sig.frequencies, np.maximum(out, 0.0), filtered=True)


def filter_matrix(rcs: np.ndarray, spec: FilterSpec = DEFAULT_FILTER) -> np.ndarray:
    """Filter a (signatures, bins) matrix row-wise and clamp at zero."""
    return np.maximum(filtfilt_array(rcs, spec), 0.0)
