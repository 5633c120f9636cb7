"""Wind observation records, CSV ingestion, interpolation merge and the sparse tensor."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .preprocess import Discretizer, TargetTransform

CSV_COLUMNS = ("station_id", "timestamp", "h", "u", "v", "w", "ri")
REQUIRED_COLUMNS = ("h", "u", "v", "w")


class DataError(ValueError):
    """Invalid input data."""


@dataclass(frozen=True)
class WindObservation:
    station_id: str
    timestamp: float
    h: float
    u: float
    v: float
    w: float
    ri: float | None = None

    def __post_init__(self):
        for name in ("h", "u", "v", "w"):
            if not math.isfinite(getattr(self, name)):
                raise DataError(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.h < 0:
            raise DataError(f"h must be >= 0, got {self.h!r}")
        if self.ri is not None and not math.isfinite(self.ri):
            raise DataError(f"ri must be finite when present, got {self.ri!r}")

    @property
    def features(self) -> tuple[float, float, float, float]:
        return (self.h, self.u, self.v, self.w)


@dataclass(frozen=True)
class Dataset:
    records: tuple[WindObservation, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.records:
            raise DataError("dataset is empty")

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.provenance)

    def features(self) -> np.ndarray:
        """(N, 4) array of (h, u, v, w)."""
        return np.array([r.features for r in self.records], dtype=np.float64)

    def targets(self) -> np.ndarray:
        missing = [n for n, r in enumerate(self.records) if r.ri is None]
        if missing:
            raise DataError(f"record {missing[0]} has no ri value")
        return np.array([r.ri for r in self.records], dtype=np.float64)


@dataclass(frozen=True)
class SparseTensor4:
    """Coordinate-format 4-mode tensor; duplicate index tuples are separate entries."""

    indices: np.ndarray  # (N, 4) int64
    values: np.ndarray  # (N,) float64
    mode_sizes: tuple[int, int, int, int]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 2 or idx.shape[1] != 4:
            raise DataError(f"indices must have shape (N, 4), got {idx.shape}")
        if len(idx) == 0:
            raise DataError("tensor needs at least one entry")
        if vals.shape != (len(idx),):
            raise DataError("values length does not match indices")
        sizes = tuple(int(s) for s in self.mode_sizes)
        if len(sizes) != 4 or min(sizes) < 1:
            raise DataError(f"mode sizes must be 4 positive integers, got {self.mode_sizes}")
        if idx.min() < 0 or np.any(idx >= np.array(sizes)):
            raise DataError("index outside mode size")
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mode_sizes", sizes)

    def __len__(self) -> int:
        return len(self.values)

    def subset(self, rows: Sequence[int]) -> "SparseTensor4":
        rows = np.asarray(rows, dtype=np.int64)
        return SparseTensor4(self.indices[rows], self.values[rows], self.mode_sizes)

    @property
    def collisions(self) -> int:
        """Entries whose index tuple already appeared earlier."""
        return count_collisions(self.indices)


def count_collisions(indices: np.ndarray) -> int:
    counts = Counter(map(tuple, np.asarray(indices).tolist()))
    return sum(c - 1 for c in counts.values())


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column!r}: value {text!r} is not finite")
    return value


def load_csv(path) -> Dataset:
    """Read ``station_id,timestamp,h,u,v,w[,ri]`` rows; ``row`` numbers in errors are 1-based data rows."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataError(f"missing required column(s): {', '.join(missing)}")
        records = []
        errors = []
        for row_no, row in enumerate(reader, start=1):
            try:
                values = {c: _parse_float(row[c], row_no, c) for c in REQUIRED_COLUMNS}
                ts = row.get("timestamp") or ""
                timestamp = _parse_float(ts, row_no, "timestamp") if ts.strip() else 0.0
                ri_text = (row.get("ri") or "").strip()
                ri = _parse_float(ri_text, row_no, "ri") if ri_text else None
                records.append(WindObservation(
                    station_id=row.get("station_id") or "",
                    timestamp=timestamp,
                    ri=ri,
                    **values,
                ))
            except DataError as exc:
                msg = str(exc)
                errors.append(msg if msg.startswith("row ") else f"row {row_no}: {msg}")
    if errors:
        raise DataError("; ".join(errors))
    if not records:
        raise DataError(f"empty data section in {path}")
    return Dataset(tuple(records), (str(path),))


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_csv(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in ds.records:
            writer.writerow([r.station_id, _fmt(r.timestamp), _fmt(r.h), _fmt(r.u),
                             _fmt(r.v), _fmt(r.w), _fmt(r.ri)])


def _interp(x0: float, y0: float, x1: float, y1: float, x: float) -> float:
    if x1 == x0:
        return y0
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def _bracket(points: list[tuple[float, float]], x: float) -> float | None:
    """Linear interpolation at ``x`` from (coord, value) pairs, or None without a bracket."""
    below = [p for p in points if p[0] <= x]
    above = [p for p in points if p[0] >= x]
    if not below or not above:
        return None
    lo = max(below, key=lambda p: p[0])
    hi = min(above, key=lambda p: p[0])
    return _interp(lo[0], lo[1], hi[0], hi[1], x)


def merge_interpolate(primary: Dataset, secondary: Dataset,
                      keys: tuple[float, float]) -> Dataset:
    """Fill missing ``ri`` in ``primary`` from ``secondary`` observations.

    Interpolation is linear, first along time at each secondary height, then
    along height.  Only secondary records at the same station within
    ``keys = (time_tolerance_s, height_tolerance_m)`` take part; records
    without a bracketing pair keep ``ri = None``.
    """
    t_tol, h_tol = keys
    if t_tol <= 0 or h_tol <= 0:
        raise DataError("tolerances must be positive")
    by_station: dict[str, list[WindObservation]] = defaultdict(list)
    for rec in secondary.records:
        if rec.ri is not None:
            by_station[rec.station_id].append(rec)

    merged = []
    for rec in primary.records:
        if rec.ri is not None:
            merged.append(rec)
            continue
        near = [s for s in by_station.get(rec.station_id, ())
                if abs(s.timestamp - rec.timestamp) <= t_tol and abs(s.h - rec.h) <= h_tol]
        levels: dict[float, list[tuple[float, float]]] = defaultdict(list)
        for s in near:
            levels[s.h].append((s.timestamp, s.ri))
        at_time = []
        for h, series in levels.items():
            val = _bracket(series, rec.timestamp)
            if val is not None:
                at_time.append((h, val))
        ri = _bracket(at_time, rec.h)
        merged.append(rec if ri is None else replace(rec, ri=ri))
    return Dataset(tuple(merged), primary.provenance + secondary.provenance)


def build_sparse_tensor(ds: Dataset, disc: "Discretizer",
                        transform: "TargetTransform | None" = None) -> SparseTensor4:
    """One entry per record: discretized (h, u, v, w) and the (transformed) Ri."""
    y = ds.targets()
    idx = disc.transform(ds.features())
    values = transform.forward(y) if transform is not None else y
    collisions = count_collisions(idx)
    return SparseTensor4(idx, values, disc.mode_sizes, {"collisions": collisions})
