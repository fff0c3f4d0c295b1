"""Parametric synthetic chipless-tag measurements.

A tag signature is a flat baseline with Gaussian-shaped resonance dips:

* a null-encoding ring just below the band (its tail reaches into W1),
* three ID rings, one per ID window; bit set -> deep dip, bit clear -> shallow
  residual dip.  W1 carries the most significant bit, so reading the windows
  left to right spells the 3-bit code,
* a sensing ring whose centre f_s(C) = f0 / sqrt(1 + C/C0) falls as the
  loaded capacitance rises.

Mounting position scales amplitude and noise; deformation case detunes the
rings and damps their depth. The (Ciii, P4) cell gets extra detune, jitter and
noise so it stays the hardest cell.

Per-label seeds: the label's index in the full 24 x 4 x 5 x 20 ordering
(``label_counter``) is mixed with the master seed through
``numpy.random.SeedSequence([master_seed, counter])``.  Subsampled datasets
therefore reuse the exact noise draws of the full dataset.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .rcs import DENOMINATOR_FLOOR, RcsSignature, ReferencePlate, sigma_ref
from .touchstone import CANONICAL_GRID, FrequencySweep

TAG_IDS = tuple(range(8))
CAPACITANCES = (0.1, 0.3, 0.8)  # pF
POSITIONS = ("P1", "P2", "P3", "P4")
CASES = ("Ci", "Cii", "Ciii", "Civ", "Cv")
READINGS = 20

# (read range m, tilt deg) for documentation and reports
POSITION_GEOMETRY = {"P1": (0.2, 0.0), "P2": (0.2, 45.0), "P3": (0.3, 0.0), "P4": (0.3, 45.0)}
CASE_DESCRIPTION = {
    "Ci": "flat",
    "Cii": "corner bend 50:50",
    "Ciii": "corner bend 25:75",
    "Civ": "cylinder r=40 mm",
    "Cv": "cylinder r=10 mm",
}

ID_WINDOWS = ((3.1e9, 4.2e9), (4.2e9, 5.2e9), (5.2e9, 6.3e9))
SENSING_WINDOW = (6.3e9, 10.6e9)
HARD_CELL = ("Ciii", "P4")


@dataclass(frozen=True)
class TagLabel:
    tag_id: int
    capacitance: float
    position: str
    case: str
    reading: int = 0

    def __post_init__(self):
        if self.tag_id not in TAG_IDS:
            raise ValueError(f"tag_id must be 0-7, got {self.tag_id!r}")
        if not any(np.isclose(self.capacitance, c) for c in CAPACITANCES):
            raise ValueError(f"capacitance must be one of {CAPACITANCES} pF, got {self.capacitance!r}")
        if self.position not in POSITIONS:
            raise ValueError(f"unknown position {self.position!r}")
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if not 0 <= self.reading < READINGS:
            raise ValueError(f"reading must be 0-{READINGS - 1}, got {self.reading!r}")

    @property
    def bits(self) -> tuple[int, int, int]:
        """(b2, b1, b0): the bits carried by W1, W2, W3."""
        return ((self.tag_id >> 2) & 1, (self.tag_id >> 1) & 1, self.tag_id & 1)

    @property
    def cap_index(self) -> int:
        return int(np.argmin([abs(self.capacitance - c) for c in CAPACITANCES]))


def label_counter(label: TagLabel) -> int:
    idx = label.tag_id
    idx = idx * len(CAPACITANCES) + label.cap_index
    idx = idx * len(POSITIONS) + POSITIONS.index(label.position)
    idx = idx * len(CASES) + CASES.index(label.case)
    return idx * READINGS + label.reading


def derive_seed(master_seed: int, counter: int) -> int:
    return int(np.random.SeedSequence([master_seed, counter]).generate_state(1, np.uint64)[0])


def _default_map(keys, values):
    return dict(zip(keys, values))


@dataclass(frozen=True)
class GeneratorConfig:
    baseline: float = 0.01  # m^2
    null_center: float = 2.85e9
    null_depth: float = 0.5
    null_width: float = 0.1e9
    id_centers: tuple[float, float, float] = (3.65e9, 4.7e9, 5.75e9)
    id_deep_depth: float = 0.7
    id_residual_depth: float = 0.1
    id_width: float = 0.1e9
    sensing_f0: float = 9.6e9
    sensing_c0: float = 1.0  # pF
    sensing_depth: float = 0.6
    sensing_width: float = 0.2e9
    position_amplitude: dict = field(
        default_factory=lambda: _default_map(POSITIONS, (1.0, 0.85, 0.8, 0.68))
    )
    position_noise: dict = field(
        default_factory=lambda: _default_map(POSITIONS, (1.0, 1.5, 2.0, 3.0))
    )
    case_detune: dict = field(
        default_factory=lambda: _default_map(CASES, (0.0, 0.005, -0.008, 0.003, 0.015))
    )
    case_damping: dict = field(
        default_factory=lambda: _default_map(CASES, (1.0, 0.95, 0.9, 0.92, 0.8))
    )
    noise_std: float = 0.02  # fraction of baseline, at P1
    ripple_amplitude: float = 0.03  # fraction of baseline, tilted positions only
    ripple_period: float = 0.9e9
    detune_jitter: float = 0.002  # per-reading relative std of ring centres
    hard_detune_mult: float = 2.0
    hard_noise_mult: float = 3.0
    hard_jitter_mult: float = 4.0
    seed: int = 20240101

    def __post_init__(self):
        for c, (lo, hi) in zip(self.id_centers, ID_WINDOWS):
            if not lo <= c <= hi:
                raise ValueError(f"ID centre {c:g} Hz outside window [{lo:g}, {hi:g}]")
        for cap in CAPACITANCES:
            fs = self.sensing_frequency(cap)
            if not SENSING_WINDOW[0] < fs <= SENSING_WINDOW[1]:
                raise ValueError(f"sensing centre {fs:g} Hz outside sensing window")
        if not 0 <= self.id_residual_depth < self.id_deep_depth <= 1:
            raise ValueError("need 0 <= residual depth < deep depth <= 1")

    def sensing_frequency(self, capacitance: float) -> float:
        return self.sensing_f0 / np.sqrt(1.0 + capacitance / self.sensing_c0)

    @property
    def deep_dip_threshold(self) -> float:
        """RCS level (m^2, flat P1) halfway between a deep and a residual ID dip."""
        mid = 0.5 * (self.id_deep_depth + self.id_residual_depth)
        return self.baseline * (1.0 - mid)

    def noiseless(self) -> "GeneratorConfig":
        return replace(self, noise_std=0.0, ripple_amplitude=0.0, detune_jitter=0.0)

    @classmethod
    def from_mapping(cls, values: dict) -> "GeneratorConfig":
        """Build from flat key/value pairs (as read from a config file).

        Dict-valued fields accept ``<field>.<key>`` entries, e.g.
        ``position_noise.P4 = 4.0``.
        """
        names = {f.name for f in fields(cls)}
        base = cls()
        kw: dict = {}
        for key, val in values.items():
            head, _, sub = key.partition(".")
            if head not in names:
                raise ValueError(f"unknown generator option {key!r}")
            if sub:
                d = dict(kw.get(head, getattr(base, head)))
                if sub not in d:
                    raise ValueError(f"unknown key {sub!r} for {head}")
                d[sub] = float(val)
                kw[head] = d
            elif head == "id_centers":
                kw[head] = tuple(float(v) for v in val)
            elif head == "seed":
                kw[head] = int(val)
            else:
                kw[head] = float(val)
        return replace(base, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _gauss(f: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((f - center) / width) ** 2)


def synth_rcs(label: TagLabel, cfg: GeneratorConfig, seed: int) -> RcsSignature:
    """Synthetic calibrated RCS signature for ``label``; deterministic in ``seed``."""
    if not isinstance(label, TagLabel):
        raise TypeError("label must be a TagLabel")
    rng = np.random.default_rng(seed)
    f = CANONICAL_GRID.frequencies
    hard = (label.case, label.position) == HARD_CELL

    detune = cfg.case_detune[label.case] * (cfg.hard_detune_mult if hard else 1.0)
    damping = cfg.case_damping[label.case]
    jitter_std = cfg.detune_jitter * (cfg.hard_jitter_mult if hard else 1.0)
    # one draw per ring, always taken so the noise stream layout is fixed
    jitter = rng.standard_normal(5) * jitter_std

    def center(c, k):
        return c * (1.0 + detune + jitter[k])

    shape = cfg.null_depth * damping * _gauss(f, center(cfg.null_center, 0), cfg.null_width / damping)
    for k, (c, bit) in enumerate(zip(cfg.id_centers, label.bits)):
        depth = cfg.id_deep_depth if bit else cfg.id_residual_depth
        shape = shape + depth * damping * _gauss(f, center(c, k + 1), cfg.id_width / damping)
    fs = center(cfg.sensing_frequency(label.capacitance), 4)
    shape = shape + cfg.sensing_depth * damping * _gauss(f, fs, cfg.sensing_width / damping)

    amp = cfg.position_amplitude[label.position]
    rcs = cfg.baseline * amp * (1.0 - shape)

    noise_sigma = cfg.noise_std * cfg.baseline * cfg.position_noise[label.position]
    if hard:
        noise_sigma *= cfg.hard_noise_mult
    noise = rng.standard_normal(f.size) * noise_sigma
    phase = rng.uniform(0.0, 2.0 * np.pi)
    if POSITION_GEOMETRY[label.position][1] != 0.0:
        noise = noise + cfg.ripple_amplitude * cfg.baseline * np.sin(
            2.0 * np.pi * (f - f[0]) / cfg.ripple_period + phase
        )
    return RcsSignature(f, np.maximum(rcs + noise, 0.0), filtered=False)


def default_iso_profile(f: np.ndarray) -> np.ndarray:
    """Background reflection: horn mismatch plus a weak delayed room echo."""
    return 0.12 * np.exp(-2j * np.pi * f * 0.35e-9) + 0.02 * np.exp(-2j * np.pi * f * 4.1e-9)


def default_ref_profile(f: np.ndarray) -> np.ndarray:
    return default_iso_profile(f) + 0.05 * np.exp(-2j * np.pi * f * 1.33e-9)


def synth_sweeps(
    label: TagLabel,
    cfg: GeneratorConfig,
    seed: int,
    plate: ReferencePlate = ReferencePlate(),
    iso: np.ndarray | None = None,
    ref: np.ndarray | None = None,
) -> tuple[FrequencySweep, FrequencySweep, FrequencySweep]:
    """(tag, iso, ref) S11 sweeps that calibrate back to ``synth_rcs(label, cfg, seed)``.

    The tag sweep inverts the calibration ratio: S11_tag = S11_iso +
    (S11_ref - S11_iso) * sqrt(RCS / sigma_ref) * exp(j*phi) for an arbitrary
    phase track phi.
    """
    f = CANONICAL_GRID.frequencies
    iso = default_iso_profile(f) if iso is None else np.asarray(iso, dtype=np.complex128)
    ref = default_ref_profile(f) if ref is None else np.asarray(ref, dtype=np.complex128)
    den = ref - iso
    if np.any(np.abs(den) < DENOMINATOR_FLOOR):
        raise ValueError("iso and ref profiles coincide; reference is degenerate")
    sig = synth_rcs(label, cfg, seed)
    mag = np.sqrt(sig.rcs / sigma_ref(plate, f))
    phi = -2.0 * np.pi * f * 1.9e-9
    tag = iso + den * mag * np.exp(1j * phi)
    name = f"tag{label.tag_id}_{label.capacitance:g}pF_{label.position}_{label.case}_r{label.reading}"
    return (
        FrequencySweep(f, tag, source_id=name),
        FrequencySweep(f, iso, source_id="isolation"),
        FrequencySweep(f, ref, source_id="reference"),
    )


def all_labels(readings: int = READINGS) -> list[TagLabel]:
    """Labels in canonical order: tag_id, capacitance, position, case, reading."""
    if not 1 <= readings <= READINGS:
        raise ValueError(f"readings must be 1-{READINGS}")
    return [
        TagLabel(t, c, p, k, r)
        for t, c, p, k, r in itertools.product(TAG_IDS, CAPACITANCES, POSITIONS, CASES, range(readings))
    ]


def build_dataset(cfg: GeneratorConfig = GeneratorConfig(), readings: int = READINGS):
    """The full labelled dataset (9,600 rows at 20 readings per group)."""
    from .dataset import Dataset

    labels = all_labels(readings)
    rcs = np.empty((len(labels), CANONICAL_GRID.n_points))
    for i, label in enumerate(labels):
        rcs[i] = synth_rcs(label, cfg, derive_seed(cfg.seed, label_counter(label))).rcs
    return Dataset.from_labels(labels, rcs)
