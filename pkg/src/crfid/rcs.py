"""Monostatic RCS calibration against an isolation sweep and a flat reference plate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .touchstone import CANONICAL_GRID, FrequencySweep

SPEED_OF_LIGHT = 299_792_458.0
DENOMINATOR_FLOOR = 1e-9
DBSM_FLOOR = 1e-12


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class ReferencePlate:
    side_length: float = 0.025  # m, square copper plate

    def __post_init__(self):
        if not self.side_length > 0:
            raise ValueError("plate side length must be positive")

    @property
    def area(self) -> float:
        return self.side_length**2


@dataclass(frozen=True, eq=False)
class RcsSignature:
    """Calibrated RCS magnitudes (m^2) on the canonical grid."""

    frequencies: np.ndarray
    rcs: np.ndarray
    filtered: bool = False

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=np.float64)
        r = np.asarray(self.rcs, dtype=np.float64)
        grid = CANONICAL_GRID.frequencies
        if f.shape != grid.shape or not np.allclose(f, grid, rtol=0, atol=1e-3):
            raise ValueError("RcsSignature must sit on the canonical 700-point grid")
        if r.shape != f.shape:
            raise ValueError(f"rcs has shape {r.shape}, expected {f.shape}")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("rcs values must be finite and non-negative")
        f.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "rcs", r)

    @classmethod
    def on_grid(cls, rcs, filtered: bool = False) -> "RcsSignature":
        return cls(CANONICAL_GRID.frequencies, rcs, filtered)


def sigma_ref(plate: ReferencePlate, frequency):
    """Physical-optics broadside RCS of a flat plate, 4*pi*A^2/lambda^2, in m^2.

    ``frequency`` may be a scalar or an array (Hz).
    """
    f = np.asarray(frequency, dtype=np.float64)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    lam = SPEED_OF_LIGHT / f
    out = 4.0 * np.pi * plate.area**2 / lam**2
    return float(out) if out.ndim == 0 else out


def calibrate(
    tag: FrequencySweep,
    iso: FrequencySweep,
    ref: FrequencySweep,
    plate: ReferencePlate = ReferencePlate(),
) -> RcsSignature:
    """RCS(f) = |(S11_tag - S11_iso) / (S11_ref - S11_iso)|^2 * sigma_ref(f)."""
    f = tag.frequencies
    for name, sw in (("iso", iso), ("ref", ref)):
        if len(sw) != len(tag) or not np.array_equal(sw.frequencies, f):
            raise CalibrationError(f"{name} sweep grid does not match tag sweep grid")
    den = ref.s11 - iso.s11
    small = np.flatnonzero(np.abs(den) < DENOMINATOR_FLOOR)
    if small.size:
        i = int(small[0])
        raise CalibrationError(
            f"|S11_ref - S11_iso| below {DENOMINATOR_FLOOR:g} at index {i} "
            f"({f[i]:.6g} Hz); reference measurement unusable"
        )
    ratio = np.abs((tag.s11 - iso.s11) / den) ** 2
    return RcsSignature(f, ratio * sigma_ref(plate, f), filtered=False)


def to_dbsm(sig: RcsSignature | np.ndarray) -> np.ndarray:
    rcs = sig.rcs if isinstance(sig, RcsSignature) else np.asarray(sig, dtype=np.float64)
    return 10.0 * np.log10(np.maximum(rcs, DBSM_FLOOR))
