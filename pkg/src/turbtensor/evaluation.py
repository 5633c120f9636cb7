"""K-fold cross validation, regression metrics, multi-seed runs and grid search."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, fields, replace
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, SparseTensor4, build_sparse_tensor
from .models import ModelSpec
from .preprocess import Discretizer, fit_target_transform
from .training import HyperParams, predict, train

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (38, 40, 42, 44, 46)
SCALES = ("transformed", "original")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: tuple[int, ...]
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignments) == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignments) != fold)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def kfold_split(n: int, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle, then round-robin fold assignment."""
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} entries into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(k, tuple(assignments.tolist()), seed)


@dataclass(frozen=True)
class Metrics:
    mae: float
    rmse: float
    r2: float | None  # None when the target has zero variance

    @property
    def r2_undefined(self) -> bool:
        return self.r2 is None


def metrics(y: Sequence[float], yhat: Sequence[float]) -> Metrics:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise ValueError("metrics of empty vectors")
    resid = y - yhat
    mae = float(np.mean(np.abs(resid)))
    rmse = float(np.sqrt(np.mean(resid * resid)))
    if np.all(y == y[0]):
        # exact test: a rounded mean can leave a spurious nonzero SS_tot
        return Metrics(mae, rmse, None)
    dev = y - y.mean()
    ss_tot = float(np.sum(dev * dev))
    r2 = 1.0 - float(np.sum(resid * resid)) / ss_tot
    return Metrics(mae, rmse, r2)


def _mean_std(values: Sequence[float | None]) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def summarize_seed(per_fold: Sequence[Metrics]) -> Metrics:
    """Fold-averaged metrics for one seed."""
    return Metrics(*(_mean_std([getattr(m, name) for m in per_fold])[0]
                     for name in ("mae", "rmse", "r2")))


def aggregate(per_seed: Sequence[Sequence[Metrics]]) -> dict:
    """Mean and population std across seeds of the fold-averaged metrics."""
    seed_means = [summarize_seed(folds) for folds in per_seed]
    out = {}
    for name in ("mae", "rmse", "r2"):
        mean, std = _mean_std([getattr(m, name) for m in seed_means])
        out[f"{name}_mean"] = mean
        out[f"{name}_std"] = std
    return out


@dataclass(frozen=True)
class EvalReport:
    model: str
    scale: str
    seeds: tuple[int, ...]
    per_seed: tuple[tuple[Metrics, ...], ...]

    @property
    def aggregate(self) -> dict:
        return aggregate(self.per_seed)

    def to_dict(self) -> dict:
        seeds_out = []
        for seed, folds in zip(self.seeds, self.per_seed):
            entry = {
                "seed": seed,
                "per_fold": [{"fold": f, "mae": m.mae, "rmse": m.rmse, "r2": m.r2}
                             for f, m in enumerate(folds)],
            }
            for name in ("mae", "rmse", "r2"):
                mean, std = _mean_std([getattr(m, name) for m in folds])
                entry[f"fold_{name}_mean"] = mean
                entry[f"fold_{name}_std"] = std
            seeds_out.append(entry)
        return {"model": self.model, "scale": self.scale, "per_seed": seeds_out,
                "aggregate": self.aggregate}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            d["model"], d["scale"], tuple(s["seed"] for s in d["per_seed"]),
            tuple(tuple(Metrics(f["mae"], f["rmse"], f["r2"]) for f in s["per_fold"])
                  for s in d["per_seed"]),
        )


def reports_to_json(reports: Sequence[EvalReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"


def _fold_tensors(data, train_rows, test_rows, bins, discretizer: str):
    """Build train/test tensors with preprocessing fitted on the training rows only."""
    if isinstance(data, SparseTensor4):
        return data.subset(train_rows), data.subset(test_rows), None, None
    train_ds, test_ds = data.subset(train_rows), data.subset(test_rows)
    if discretizer == "identity":
        disc = Discretizer.identity(bins)
    else:
        disc = Discretizer.fit(train_ds.features(), bins)
    tt = fit_target_transform(train_ds.targets())
    return (build_sparse_tensor(train_ds, disc, tt), build_sparse_tensor(test_ds, disc, tt),
            tt, test_ds.targets())


def run_experiment(data: Dataset | SparseTensor4, spec: ModelSpec, hp: HyperParams = HyperParams(),
                   seeds: Sequence[int] = DEFAULT_SEEDS, folds: int = 5,
                   bins: Sequence[int] = (10, 10, 10, 10),
                   discretizer: str = "quantile") -> dict[str, EvalReport]:
    """K-fold CV repeated per seed; returns one report per scale.

    For a ``Dataset`` the discretizer and target transform are refitted on
    each training split.  A ready ``SparseTensor4`` is used as-is, so both
    scales coincide.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    n = len(data)
    results = {scale: [] for scale in SCALES}
    for seed in seeds:
        plan = kfold_split(n, folds, seed)
        per_fold = {scale: [] for scale in SCALES}
        for fold in range(folds):
            tr, te, tt, y_orig = _fold_tensors(data, plan.train_indices(fold),
                                               plan.test_indices(fold), bins, discretizer)
            model = spec.build(tr.mode_sizes, seed)
            train(model, tr, hp, seed)
            raw, orig = predict(model, te, tt)
            per_fold["transformed"].append(metrics(te.values, raw))
            per_fold["original"].append(metrics(te.values if y_orig is None else y_orig, orig))
            logger.info("seed %d fold %d rmse %.4g", seed, fold, per_fold["transformed"][-1].rmse)
        for scale in SCALES:
            results[scale].append(tuple(per_fold[scale]))
    return {scale: EvalReport(spec.kind, scale, tuple(seeds), tuple(results[scale]))
            for scale in SCALES}


_HP_FIELDS = {f.name for f in fields(HyperParams)}
_SPEC_FIELDS = {f.name for f in fields(ModelSpec)} - {"kind"}


def grid_search(data, spec: ModelSpec, grid: Mapping[str, Sequence], hp: HyperParams = HyperParams(),
                seeds: Sequence[int] = DEFAULT_SEEDS, **cv_kwargs) -> tuple[dict, list[dict]]:
    """Exhaustive search; the winner has the lowest mean held-out RMSE (transformed scale).

    Grid keys may name training hyperparameters or architecture fields.
    """
    if not grid:
        raise ValueError("empty grid")
    for key, values in grid.items():
        if key not in _HP_FIELDS | _SPEC_FIELDS:
            raise ValueError(f"unknown grid parameter {key!r}")
        if len(values) == 0:
            raise ValueError(f"grid axis {key!r} is empty")
    keys = list(grid)
    table = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        config = dict(zip(keys, combo))
        run_hp = replace(hp, **{k: v for k, v in config.items() if k in _HP_FIELDS})
        run_spec = replace(spec, **{k: v for k, v in config.items() if k in _SPEC_FIELDS})
        report = run_experiment(data, run_spec, run_hp, seeds, **cv_kwargs)["transformed"]
        table.append({**config, **report.aggregate})
    best = min(table, key=lambda row: math.inf if row["rmse_mean"] is None else row["rmse_mean"])
    return {k: best[k] for k in keys}, table
