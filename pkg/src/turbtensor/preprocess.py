"""Standardization, equal-frequency binning and the Ri target transform."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

MODES = ("h", "u", "v", "w")


def _finite_array(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{what}: empty input")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: non-finite value in input")
    return arr


@dataclass(frozen=True)
class Standardizer:
    mu: float
    sigma: float

    def apply(self, x):
        """``(x - mu) / sigma``; a constant feature (sigma 0) maps to 0."""
        x = np.asarray(x, dtype=np.float64)
        if self.sigma == 0:
            return np.zeros_like(x)
        return (x - self.mu) / self.sigma


def fit_standardizer(values: Sequence[float]) -> Standardizer:
    arr = _finite_array(values, "fit_standardizer")
    return Standardizer(float(arr.mean()), float(arr.std()))


def standardize(s: Standardizer, x: float) -> float:
    return float(s.apply(x))


@dataclass(frozen=True)
class BinEdges:
    """Interior bin boundaries; ``len(edges) + 1`` bins are effectively in use.

    ``requested`` is the bin count asked for at fit time, which can exceed the
    effective count when ties collapse boundaries.
    """

    edges: tuple[float, ...]
    requested: int

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1

    def apply(self, x) -> np.ndarray:
        return np.searchsorted(np.asarray(self.edges, dtype=np.float64),
                               np.asarray(x, dtype=np.float64), side="right")


def fit_quantile_edges(values: Sequence[float], K: int) -> BinEdges:
    """Equal-frequency edges at the k/K quantiles (linear interpolation), k = 1..K-1.

    Edges not above the sample minimum and repeated edges are dropped, and so
    is any edge that would leave a bin empty on the fitting sample, so labels
    on the fitting data are always dense in ``[0, n_bins)``.
    """
    if K < 2:
        raise ValueError(f"bin count must be >= 2, got {K}")
    arr = np.sort(_finite_array(values, "fit_quantile_edges"))
    if arr.size < K:
        raise ValueError(f"need at least {K} samples for {K} bins, got {arr.size}")
    qs = np.quantile(arr, np.arange(1, K) / K)
    edges = []
    for q in qs:
        if q > arr[0] and (not edges or q > edges[-1]):
            edges.append(float(q))
    # merge bins left empty (possible when quantile positions share a gap)
    changed = True
    while changed and edges:
        changed = False
        counts = np.bincount(np.searchsorted(edges, arr, side="right"), minlength=len(edges) + 1)
        for b in range(1, len(counts)):
            if counts[b] == 0:
                del edges[b - 1]
                changed = True
                break
    if len(edges) + 1 < K:
        msg = f"quantile edges collapsed: {len(edges) + 1} effective bins of {K} requested"
        warnings.warn(msg, stacklevel=2)
        logger.warning(msg)
    return BinEdges(tuple(edges), K)


def discretize_value(b: BinEdges, x: float) -> int:
    """0 below the first edge, i on [edge_i, edge_{i+1}), last bin at or above the top edge."""
    return int(b.apply(x))


class Discretizer:
    """Per-mode standardize-then-bin map from (h, u, v, w) to (p, i, j, k)."""

    def __init__(self, standardizers: Sequence[Standardizer], edges: Sequence[BinEdges],
                 mode_sizes: Sequence[int]):
        if not (len(standardizers) == len(edges) == len(mode_sizes) == 4):
            raise ValueError("discretizer needs exactly four modes (h, u, v, w)")
        for e, size in zip(edges, mode_sizes):
            if e.n_bins > size:
                raise ValueError(f"{e.n_bins} bins do not fit mode size {size}")
        self.standardizers = tuple(standardizers)
        self.edges = tuple(edges)
        self.mode_sizes = tuple(int(s) for s in mode_sizes)

    @classmethod
    def fit(cls, features, bins: Sequence[int]) -> "Discretizer":
        """Fit on an (N, 4) array of (h, u, v, w)."""
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != 4:
            raise ValueError(f"features must have shape (N, 4), got {X.shape}")
        stds, edges = [], []
        for m in range(4):
            s = fit_standardizer(X[:, m])
            stds.append(s)
            edges.append(fit_quantile_edges(s.apply(X[:, m]), int(bins[m])))
        return cls(stds, edges, bins)

    @classmethod
    def identity(cls, mode_sizes: Sequence[int]) -> "Discretizer":
        """Maps integer-valued features 0..size-1 to themselves."""
        stds = [Standardizer(0.0, 1.0)] * 4
        edges = [BinEdges(tuple(k - 0.5 for k in range(1, s)), s) for s in mode_sizes]
        return cls(stds, edges, mode_sizes)

    @property
    def effective_bins(self) -> tuple[int, ...]:
        return tuple(e.n_bins for e in self.edges)

    def transform(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != 4:
            raise ValueError(f"features must have shape (N, 4), got {X.shape}")
        cols = [self.edges[m].apply(self.standardizers[m].apply(X[:, m])) for m in range(4)]
        return np.stack(cols, axis=1).astype(np.int64)

    def discretize_vector(self, h: float, u: float, v: float, w: float) -> tuple[int, int, int, int]:
        return tuple(int(x) for x in self.transform([[h, u, v, w]])[0])

    def to_dict(self) -> dict:
        return {
            "modes": [
                {"name": name, "mu": s.mu, "sigma": s.sigma,
                 "edges": list(e.edges), "requested_bins": e.requested}
                for name, s, e in zip(MODES, self.standardizers, self.edges)
            ],
            "mode_sizes": list(self.mode_sizes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Discretizer":
        modes = d["modes"]
        return cls(
            [Standardizer(float(m["mu"]), float(m["sigma"])) for m in modes],
            [BinEdges(tuple(float(x) for x in m["edges"]), int(m["requested_bins"])) for m in modes],
            d["mode_sizes"],
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, Discretizer) and self.to_dict() == other.to_dict()


def signed_log(y):
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * np.log1p(np.abs(y))


def signed_exp(t):
    t = np.asarray(t, dtype=np.float64)
    return np.sign(t) * np.expm1(np.abs(t))


@dataclass(frozen=True)
class TargetTransform:
    """Signed log, then standardize, then min-max to [0, 1].

    ``lo``/``hi`` are the min and max of the standardized signed log over the
    fitting sample.  When they coincide every target maps to 0.5.
    """

    mu: float
    sigma: float
    lo: float
    hi: float

    def forward(self, y):
        z = Standardizer(self.mu, self.sigma).apply(signed_log(y))
        if self.hi == self.lo:
            return np.full_like(z, 0.5)
        return (z - self.lo) / (self.hi - self.lo)

    def inverse(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.hi == self.lo:
            z = np.full_like(x, self.lo)
        else:
            z = x * (self.hi - self.lo) + self.lo
        return signed_exp(z * self.sigma + self.mu)

    def to_dict(self) -> dict:
        return {"kind": "signed_log_standardize_minmax", "mu": self.mu,
                "sigma": self.sigma, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetTransform":
        return cls(float(d["mu"]), float(d["sigma"]), float(d["lo"]), float(d["hi"]))


def fit_target_transform(ri_values: Sequence[float]) -> TargetTransform:
    arr = _finite_array(ri_values, "fit_target_transform")
    t = signed_log(arr)
    s = fit_standardizer(t)
    z = s.apply(t)
    return TargetTransform(s.mu, s.sigma, float(z.min()), float(z.max()))


def transform_target(tt: TargetTransform, y):
    return tt.forward(y)


def inverse_target(tt: TargetTransform, x):
    return tt.inverse(x)


def save_preprocessing(path, disc: Discretizer, tt: TargetTransform | None = None) -> None:
    doc = {"discretizer": disc.to_dict()}
    if tt is not None:
        doc["target_transform"] = tt.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_preprocessing(path) -> tuple[Discretizer, TargetTransform | None]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    tt = doc.get("target_transform")
    return Discretizer.from_dict(doc["discretizer"]), (TargetTransform.from_dict(tt) if tt else None)

