"""In-memory labelled dataset and its CSV serialization.

CSV layout: header ``tag_id,capacitance_pf,position,case,reading,f0..f699``,
one row per signature, RCS in m^2 written with shortest round-trip repr.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .rcs import RcsSignature
from .siggen import CASES, POSITIONS, TagLabel
from .touchstone import CANONICAL_GRID

LABEL_COLUMNS = ("tag_id", "capacitance_pf", "position", "case", "reading")
N_BINS = CANONICAL_GRID.n_points
HEADER = ",".join(LABEL_COLUMNS + tuple(f"f{i}" for i in range(N_BINS)))


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSignature:
    signature: RcsSignature
    label: TagLabel


@dataclass(eq=False)
class Dataset:
    tag_id: np.ndarray
    capacitance: np.ndarray
    position: np.ndarray
    case: np.ndarray
    reading: np.ndarray
    rcs: np.ndarray
    filtered: bool = False

    def __post_init__(self):
        n = len(self.tag_id)
        for name in ("capacitance", "position", "case", "reading"):
            if len(getattr(self, name)) != n:
                raise DatasetError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        if self.rcs.shape != (n, N_BINS):
            raise DatasetError(f"rcs matrix shape {self.rcs.shape}, expected ({n}, {N_BINS})")

    @classmethod
    def from_labels(cls, labels: list[TagLabel], rcs: np.ndarray, filtered: bool = False) -> "Dataset":
        return cls(
            tag_id=np.array([lb.tag_id for lb in labels], dtype=np.int64),
            capacitance=np.array([lb.capacitance for lb in labels], dtype=np.float64),
            position=np.array([lb.position for lb in labels]),
            case=np.array([lb.case for lb in labels]),
            reading=np.array([lb.reading for lb in labels], dtype=np.int64),
            rcs=np.asarray(rcs, dtype=np.float64),
            filtered=filtered,
        )

    def __len__(self) -> int:
        return len(self.tag_id)

    def label(self, i: int) -> TagLabel:
        return TagLabel(
            int(self.tag_id[i]), float(self.capacitance[i]), str(self.position[i]),
            str(self.case[i]), int(self.reading[i]),
        )

    def __iter__(self) -> Iterator[LabeledSignature]:
        for i in range(len(self)):
            yield LabeledSignature(RcsSignature.on_grid(self.rcs[i], self.filtered), self.label(i))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.tag_id[idx], self.capacitance[idx], self.position[idx],
            self.case[idx], self.reading[idx], self.rcs[idx], self.filtered,
        )

    def with_rcs(self, rcs: np.ndarray, filtered: bool) -> "Dataset":
        return Dataset(self.tag_id, self.capacitance, self.position, self.case,
                       self.reading, np.asarray(rcs, dtype=np.float64), filtered)

    def strata(self) -> list[tuple]:
        """Stratification key per row: (tag_id, capacitance, position, case)."""
        return list(zip(self.tag_id.tolist(), self.capacitance.tolist(),
                        self.position.tolist(), self.case.tolist()))

    def target(self, task: str) -> np.ndarray:
        if task == "id":
            return self.tag_id.astype(np.float64)
        if task == "sensing":
            return self.capacitance.copy()
        raise ValueError(f"unknown task {task!r}")


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(HEADER + "\n")
        for i in range(len(ds)):
            head = (f"{int(ds.tag_id[i])},{float(ds.capacitance[i])!r},{ds.position[i]},"
                    f"{ds.case[i]},{int(ds.reading[i])},")
            fh.write(head + ",".join(map(repr, ds.rcs[i].tolist())) + "\n")


def read_csv(path) -> Dataset:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().rstrip("\r\n")
        if header != HEADER:
            raise DatasetError(f"{path}: header does not match the dataset schema")
        labels, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\r\n").split(",")
            if len(parts) != len(LABEL_COLUMNS) + N_BINS:
                raise DatasetError(f"{path}:{lineno}: expected {len(LABEL_COLUMNS) + N_BINS} fields")
            try:
                labels.append(TagLabel(int(parts[0]), float(parts[1]), parts[2], parts[3], int(parts[4])))
                rows.append(np.array(parts[5:], dtype=np.float64))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    rcs = np.vstack(rows)
    if np.any(rcs < 0) or not np.all(np.isfinite(rcs)):
        raise DatasetError(f"{path}: RCS values must be finite and non-negative")
    return Dataset.from_labels(labels, rcs)


def group_counts(ds: Dataset) -> dict[tuple[str, str], int]:
    return {(p, c): int(np.sum((ds.position == p) & (ds.case == c))) for p in POSITIONS for c in CASES}
