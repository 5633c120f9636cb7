"""Mini-batch training with Adam and prediction helpers."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .data import SparseTensor4
from .models import Model
from .preprocess import TargetTransform

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class HyperParams:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    def __init__(self, params: dict[str, ag.Node], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        if self.lr == 0:
            return
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p.value -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def mse(model: Model, tensor: SparseTensor4) -> float:
    pred = model.predict_raw(tensor.indices)
    return float(np.mean((pred - tensor.values) ** 2))


def train(model: Model, tensor: SparseTensor4, hp: HyperParams = HyperParams(),
          seed: int = 0) -> tuple[Model, list[float]]:
    """Minimize training MSE in place; returns the model and per-epoch training MSE."""
    if model.sigmoid_head and (tensor.values.min() < 0 or tensor.values.max() > 1):
        raise TrainingError("sigmoid-headed models need targets in [0, 1]")
    rng = np.random.default_rng(seed)
    opt = Adam(model.params, hp.lr, hp.beta1, hp.beta2, hp.eps)
    n = len(tensor)
    trace: list[float] = []
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            rows = order[start:start + hp.batch_size]
            model.zero_grad()
            loss = ag.mse_loss(model.forward(tensor.indices[rows]), tensor.values[rows])
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            ag.backward(loss)
            opt.step()
        trace.append(mse(model, tensor))
        logger.debug("epoch %d mse %.6g", epoch, trace[-1])
    return model, trace


def predict(model: Model, tensor: SparseTensor4,
            transform: TargetTransform | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Model-scale predictions and the same predictions mapped back to Ri units."""
    raw = model.predict_raw(tensor.indices)
    original = transform.inverse(raw) if transform is not None else raw.copy()
    return raw, original
