"""Two-port Touchstone v1 (``.s2p``) reading/writing and the canonical sweep grid.

Only S11 is kept after parsing; the other three parameters are validated
for column count and dropped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

F_START = 3.1e9
F_STOP = 10.6e9
N_POINTS = 700

FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
FORMATS = ("RI", "MA", "DB")


class TouchstoneError(ValueError):
    """Malformed Touchstone input. ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CanonicalGrid:
    f_start: float = F_START
    f_stop: float = F_STOP
    n_points: int = N_POINTS

    def __post_init__(self):
        if self.n_points < 2 or not self.f_stop > self.f_start:
            raise ValueError("grid needs n_points >= 2 and f_stop > f_start")

    @property
    def spacing(self) -> float:
        return (self.f_stop - self.f_start) / (self.n_points - 1)

    @property
    def frequencies(self) -> np.ndarray:
        return np.linspace(self.f_start, self.f_stop, self.n_points)


CANONICAL_GRID = CanonicalGrid()
# one grid step of slack on either band edge
BAND_TOL = CANONICAL_GRID.spacing


@dataclass(frozen=True, eq=False)
class FrequencySweep:
    """One reflection sweep: frequencies in Hz and complex S11."""

    frequencies: np.ndarray
    s11: np.ndarray
    source_id: str = ""
    z0: float = 50.0

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=np.float64)
        s = np.asarray(self.s11, dtype=np.complex128)
        if f.ndim != 1 or s.shape != f.shape:
            raise ValueError("frequencies and s11 must be 1-D and of equal length")
        if f.size > 1 and not np.all(np.diff(f) > 0):
            raise ValueError("frequencies must be strictly increasing")
        if f.size and (f[0] < F_START - BAND_TOL or f[-1] > F_STOP + BAND_TOL):
            raise ValueError(
                f"sweep [{f[0]:.6g}, {f[-1]:.6g}] Hz lies outside the "
                f"{F_START:.3g}-{F_STOP:.3g} Hz band"
            )
        f.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "s11", s)

    def __len__(self) -> int:
        return self.frequencies.size


def _split_comment(line: str) -> str:
    return line.split("!", 1)[0].strip()


def _parse_option_line(body: str, lineno: int) -> tuple[float, str, float]:
    unit, fmt, z0 = "GHZ", "MA", 50.0
    tokens = body[1:].upper().split()
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in FREQ_UNITS:
            unit = tok
        elif tok in FORMATS:
            fmt = tok
        elif tok == "S":
            pass
        elif tok in ("Y", "Z", "H", "G"):
            raise TouchstoneError(f"parameter type {tok!r} not supported, need S", lineno)
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise TouchstoneError("'R' without reference resistance", lineno)
            try:
                z0 = float(tokens[i + 1])
            except ValueError:
                raise TouchstoneError(f"bad reference resistance {tokens[i + 1]!r}", lineno)
            i += 1
        else:
            raise TouchstoneError(f"unknown option token {tok!r}", lineno)
        i += 1
    return FREQ_UNITS[unit], fmt, z0


def _to_complex(a: np.ndarray, b: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "RI":
        return a + 1j * b
    if fmt == "DB":
        a = 10.0 ** (a / 20.0)
    rad = np.deg2rad(b)
    return a * np.cos(rad) + 1j * a * np.sin(rad)


def parse_s2p(text: str, source_id: str = "") -> FrequencySweep:
    """Parse Touchstone v1 two-port text and return the S11 sweep.

    Frequencies are converted to Hz and S11 to rectangular form whatever
    the file's unit and RI/MA/DB format.
    """
    option = None
    rows: list[list[float]] = []
    linenos: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _split_comment(raw)
        if not body:
            continue
        if body.startswith("["):
            raise TouchstoneError("Touchstone v2 keywords are not supported", lineno)
        if body.startswith("#"):
            if option is not None:
                raise TouchstoneError("duplicate option line", lineno)
            option = _parse_option_line(body, lineno)
            continue
        if option is None:
            raise TouchstoneError("data before option line", lineno)
        parts = body.split()
        if len(parts) != 9:
            raise TouchstoneError(f"expected 9 columns, got {len(parts)}", lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise TouchstoneError(f"non-numeric value ({exc})", lineno)
        linenos.append(lineno)
    if option is None:
        raise TouchstoneError("missing option line")
    if not rows:
        raise TouchstoneError("no data lines")
    scale, fmt, z0 = option
    data = np.array(rows, dtype=np.float64)
    freqs = data[:, 0] * scale
    bad = np.flatnonzero(np.diff(freqs) <= 0)
    if bad.size:
        raise TouchstoneError("frequencies not strictly increasing", linenos[bad[0] + 1])
    s11 = _to_complex(data[:, 1], data[:, 2], fmt)
    return FrequencySweep(freqs, s11, source_id=source_id, z0=z0)


def read_s2p(path) -> FrequencySweep:
    with open(path, encoding="utf-8") as fh:
        return parse_s2p(fh.read(), source_id=str(path))


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_s2p(sweep: FrequencySweep, fmt: str = "RI") -> str:
    """Serialize a sweep as ``.s2p`` text in GHz; S21/S12/S22 are written as zeros."""
    fmt = fmt.upper()
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    if len(sweep) == 0:
        raise ValueError("cannot write an empty sweep")
    s = sweep.s11
    if fmt == "RI":
        a, b = s.real, s.imag
    else:
        mag = np.abs(s)
        a = 20.0 * np.log10(mag) if fmt == "DB" else mag
        b = np.rad2deg(np.angle(s))
    lines = []
    if sweep.source_id:
        lines.append(f"! {sweep.source_id}")
    lines.append(f"# GHZ S {fmt} R {_fmt(sweep.z0)}")
    tail = " 0 0 0 0 0 0"
    for f, x, y in zip(sweep.frequencies, a, b):
        lines.append(f"{_fmt(f / 1e9)} {_fmt(x)} {_fmt(y)}{tail}")
    return "\n".join(lines) + "\n"


def save_s2p(sweep: FrequencySweep, path, fmt: str = "RI") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_s2p(sweep, fmt))


def resample_to_grid(sweep: FrequencySweep, grid: CanonicalGrid = CANONICAL_GRID) -> FrequencySweep:
    """Linearly interpolate real and imaginary parts onto ``grid``."""
    f = sweep.frequencies
    tol = 1e-9 * grid.f_stop
    if len(sweep) < 2 or f[0] > grid.f_start + tol or f[-1] < grid.f_stop - tol:
        span = f"[{f[0]:.6g}, {f[-1]:.6g}]" if len(sweep) else "empty"
        raise ValueError(
            f"sweep {span} Hz does not cover grid [{grid.f_start:.6g}, {grid.f_stop:.6g}] Hz"
        )
    target = grid.frequencies
    re = np.interp(target, f, sweep.s11.real)
    im = np.interp(target, f, sweep.s11.imag)
    return FrequencySweep(target, re + 1j * im, source_id=sweep.source_id, z0=sweep.z0)


def on_grid(sweep: FrequencySweep, grid: CanonicalGrid = CANONICAL_GRID) -> bool:
    return len(sweep) == grid.n_points and np.allclose(
        sweep.frequencies, grid.frequencies, rtol=0, atol=1e-6 * grid.spacing
    )

