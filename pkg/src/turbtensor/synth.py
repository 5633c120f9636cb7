"""Synthetic low-rank Tucker tensors with known ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SparseTensor4


@dataclass(frozen=True)
class SynthSpec:
    mode_sizes: tuple[int, int, int, int] = (8, 8, 8, 8)
    rank: tuple[int, int, int, int] | int = 3
    noise_std: float = 0.01
    n_samples: int = 2000
    seed: int = 0
    signal_std: float = 2.0  # std of the pre-sigmoid value over the sampled cells

    @property
    def ranks(self) -> tuple[int, ...]:
        return (self.rank,) * 4 if isinstance(self.rank, int) else tuple(self.rank)

    def validate(self) -> None:
        if len(self.mode_sizes) != 4 or min(self.mode_sizes) < 1:
            raise ValueError(f"mode sizes must be four positive ints, got {self.mode_sizes}")
        for r, s in zip(self.ranks, self.mode_sizes):
            if not 1 <= r <= s:
                raise ValueError(f"rank {r} outside [1, {s}]")
        cells = int(np.prod(self.mode_sizes, dtype=object))
        if not 1 <= self.n_samples <= cells:
            raise ValueError(f"sample count {self.n_samples} exceeds cell count {cells}")
        if self.noise_std < 0:
            raise ValueError("noise std must be non-negative")


@dataclass(frozen=True)
class GroundTruth:
    core: np.ndarray
    factors: tuple[np.ndarray, ...]

    def pre_activation(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        a, b, c, d = (self.factors[m][idx[:, m]] for m in range(4))
        return np.einsum("pqrs,np,nq,nr,ns->n", self.core, a, b, c, d)

    def value(self, idx) -> np.ndarray:
        x = self.pre_activation(idx)
        return 0.5 * (1.0 + np.tanh(0.5 * x))

    def to_dict(self) -> dict:
        return {"core_shape": list(self.core.shape), "core": self.core.reshape(-1).tolist(),
                "factors": [f.tolist() for f in self.factors]}


def generate(spec: SynthSpec) -> tuple[SparseTensor4, GroundTruth]:
    """Sample ``n_samples`` distinct cells of sigmoid(Tucker) plus clipped Gaussian noise."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    factors = tuple(rng.standard_normal((s, r)) for s, r in zip(spec.mode_sizes, spec.ranks))
    core = rng.standard_normal(spec.ranks)
    cells = int(np.prod(spec.mode_sizes, dtype=object))
    flat = rng.choice(cells, size=spec.n_samples, replace=False)
    idx = np.stack(np.unravel_index(flat, spec.mode_sizes), axis=1).astype(np.int64)

    x = GroundTruth(core, factors).pre_activation(idx)
    spread = x.std()
    if spread > 0:
        core = core * (spec.signal_std / spread)
    truth = GroundTruth(core, factors)
    y = truth.value(idx)
    if spec.noise_std > 0:
        y = np.clip(y + rng.normal(0.0, spec.noise_std, size=y.shape), 0.0, 1.0)
    return SparseTensor4(idx, y, spec.mode_sizes, {"seed": spec.seed}), truth


def split_holdout(tensor: SparseTensor4, n_holdout: int, seed: int) -> tuple[SparseTensor4, SparseTensor4]:
    """Random train / held-out split of the entries."""
    order = np.random.default_rng(seed).permutation(len(tensor))
    return tensor.subset(order[n_holdout:]), tensor.subset(order[:n_holdout])


def write_synth(tensor: SparseTensor4, truth: GroundTruth, csv_path, truth_path) -> None:
    """Indices go out as the h,u,v,w columns; read back with an identity discretizer."""
    lines = ["station_id,timestamp,h,u,v,w,ri"]
    for n, (ix, y) in enumerate(zip(tensor.indices.tolist(), tensor.values.tolist())):
        lines.append(f"synth,{n},{ix[0]},{ix[1]},{ix[2]},{ix[3]},{y!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    doc = {"mode_sizes": list(tensor.mode_sizes), **truth.to_dict()}
    Path(truth_path).write_text(json.dumps(doc) + "\n", encoding="utf-8")
