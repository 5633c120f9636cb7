"""Neural Tucker factorization (M1) and the four embedding baselines (M2-M5).

All models take an integer index array of shape (B, 4) holding (p, i, j, k)
and return a (B,) prediction node.  M1 and M5 end in a sigmoid, M2-M4 have
an unbounded linear head.
"""

from __future__ import annotations

import base64
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag

MODEL_KINDS = ("m1", "m2", "m3", "m4", "m5")
PAIRS = tuple(itertools.combinations(range(4), 2))
TRIPLES = tuple(itertools.combinations(range(4), 3))


@dataclass(frozen=True)
class ModelSpec:
    """Architecture choice; ``build`` turns it into a freshly initialized model."""

    kind: str = "m1"
    rank: int | tuple[int, int, int, int] = 5
    embed_dim: int = 5
    hidden: tuple[int, ...] = (16,)
    width: int = 5
    init_scale: float = 0.1

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.kind!r}; expected one of {MODEL_KINDS}")

    def build(self, mode_sizes: Sequence[int], seed: int) -> "Model":
        rng = np.random.default_rng(seed)
        if self.kind == "m1":
            dims = (self.rank,) * 4 if isinstance(self.rank, int) else tuple(self.rank)
            return TuckerModel(mode_sizes, dims, rng, self.init_scale)
        return BaselineModel(self.kind, mode_sizes, rng, self.embed_dim, tuple(self.hidden),
                             self.width, self.init_scale)


class Model:
    """Named parameter leaves plus a batched forward pass."""

    kind: str
    sigmoid_head: bool

    def __init__(self, mode_sizes: Sequence[int]):
        self.mode_sizes = tuple(int(s) for s in mode_sizes)
        self._limits = np.array(self.mode_sizes)
        self.params: dict[str, ag.Node] = {}

    def _param(self, name: str, value) -> ag.Node:
        node = ag.Node(np.array(value, dtype=np.float64))
        self.params[name] = node
        return node

    def config(self) -> dict:
        raise NotImplementedError

    def forward(self, idx) -> ag.Node:
        raise NotImplementedError

    def _check_idx(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.ndim == 1:
            idx = idx[None, :]
        if idx.ndim != 2 or idx.shape[1] != 4:
            raise ValueError(f"index array must have shape (B, 4), got {idx.shape}")
        if idx.min() < 0 or (idx >= self._limits).any():
            raise IndexError(f"index out of range for mode sizes {self.mode_sizes}")
        return idx

    def predict_raw(self, idx, chunk: int = 4096) -> np.ndarray:
        idx = self._check_idx(idx)
        out = [self.forward(idx[s:s + chunk]).value for s in range(0, len(idx), chunk)]
        return np.concatenate(out)

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def to_dict(self) -> dict:
        return {
            "model": self.kind,
            "mode_sizes": list(self.mode_sizes),
            "config": self.config(),
            "params": {
                name: {
                    "shape": list(p.shape),
                    "data": base64.b64encode(p.value.astype("<f8").tobytes()).decode("ascii"),
                }
                for name, p in self.params.items()
            },
        }


def model_from_dict(d: dict) -> Model:
    cfg = d["config"]
    kind = d["model"]
    if kind == "m1":
        spec = ModelSpec("m1", rank=tuple(cfg["dims"]))
    else:
        spec = ModelSpec(kind, embed_dim=cfg["embed_dim"], hidden=tuple(cfg["hidden"]),
                         width=cfg["width"])
    model = spec.build(d["mode_sizes"], seed=0)
    for name, entry in d["params"].items():
        raw = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8")
        model.params[name].value[...] = raw.reshape(entry["shape"])
    return model


def _embedding_tables(model: Model, rows: Sequence[int], dims: Sequence[int],
                      rng: np.random.Generator, scale: float) -> list[ag.Node]:
    return [model._param(f"emb{m}", rng.uniform(-scale, scale, size=(rows[m], dims[m])))
            for m in range(4)]


class TuckerModel(Model):
    """Sigmoid of the flattened-core weighted outer product of four embeddings.

    ``core`` holds the Tucker core tensor flattened in C order, so
    ``core.reshape(dims)`` is the (Q1, Q2, Q3, Q4) core.
    """

    kind = "m1"
    sigmoid_head = True

    def __init__(self, mode_sizes, dims=(5, 5, 5, 5), rng=None, init_scale=0.1):
        super().__init__(mode_sizes)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dims = tuple(int(q) for q in dims)
        if len(self.dims) != 4 or min(self.dims) < 1:
            raise ValueError(f"need four positive embedding dims, got {dims}")
        self.embeddings = _embedding_tables(self, self.mode_sizes, self.dims, rng, init_scale)
        self.core = self._param("core", rng.uniform(-init_scale, init_scale, size=int(np.prod(self.dims))))
        self.bias = self._param("bias", 0.0)

    def config(self) -> dict:
        return {"dims": list(self.dims)}

    def pre_activation(self, idx) -> ag.Node:
        idx = self._check_idx(idx)
        embs = [ag.gather(self.embeddings[m], idx[:, m]) for m in range(4)]
        interaction = ag.outer_product(*embs)
        flat = ag.flatten(interaction, batched=True)
        return ag.add_scalar(ag.matvec(flat, self.core), self.bias)

    def forward(self, idx) -> ag.Node:
        return ag.sigmoid(self.pre_activation(idx))

    def core_tensor(self) -> np.ndarray:
        return self.core.value.reshape(self.dims)


def tucker_reference(core: np.ndarray, a, b, c, d) -> float:
    """Naive quadruple sum of core[p,q,r,s] * a[p] * b[q] * c[r] * d[s]."""
    core = np.asarray(core, dtype=np.float64)
    vecs = [np.asarray(x, dtype=np.float64) for x in (a, b, c, d)]
    if core.shape != tuple(len(v) for v in vecs):
        raise ValueError(f"core shape {core.shape} does not match embedding lengths "
                         f"{tuple(len(v) for v in vecs)}")
    total = 0.0
    for p in range(core.shape[0]):
        for q in range(core.shape[1]):
            for r in range(core.shape[2]):
                for s in range(core.shape[3]):
                    total += core[p, q, r, s] * vecs[0][p] * vecs[1][q] * vecs[2][r] * vecs[3][s]
    return total


class BaselineModel(Model):
    """Embedding regressors.

    m2  MLP over the concatenated embeddings.
    m3  single affine map of the concatenated embeddings.
    m4  per-pair linear layers on the six pairwise products, concatenated with
        the raw embeddings, then affine.
    m5  pairwise and triple-wise products plus MLP features, affine, sigmoid.
    """

    def __init__(self, kind: str, mode_sizes, rng=None, embed_dim: int = 5,
                 hidden: tuple[int, ...] = (16,), width: int = 5, init_scale: float = 0.1):
        if kind not in ("m2", "m3", "m4", "m5"):
            raise ValueError(f"not a baseline model: {kind!r}")
        super().__init__(mode_sizes)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kind = kind
        self.sigmoid_head = kind == "m5"
        self.embed_dim = embed_dim
        self.hidden = tuple(hidden) if kind in ("m2", "m5") else ()
        self.width = width if kind == "m4" else 0
        self.embeddings = _embedding_tables(self, self.mode_sizes, (embed_dim,) * 4, rng, init_scale)

        def dense(name, n_in, n_out):
            self._param(f"{name}_w", rng.uniform(-init_scale, init_scale, size=(n_in, n_out)))
            self._param(f"{name}_b", np.zeros(n_out))

        concat_dim = 4 * embed_dim
        if kind in ("m2", "m5"):
            n_in = concat_dim
            for layer, n_out in enumerate(self.hidden):
                dense(f"hidden{layer}", n_in, n_out)
                n_in = n_out
            head_in = n_in
            if kind == "m5":
                head_in += (len(PAIRS) + len(TRIPLES)) * embed_dim
        elif kind == "m3":
            head_in = concat_dim
        else:
            for a, b in PAIRS:
                dense(f"pair{a}{b}", embed_dim, width)
            head_in = len(PAIRS) * width + concat_dim
        self._param("out_w", rng.uniform(-init_scale, init_scale, size=head_in))
        self._param("out_b", 0.0)

    def config(self) -> dict:
        return {"embed_dim": self.embed_dim, "hidden": list(self.hidden), "width": self.width}

    def _mlp(self, x: ag.Node) -> ag.Node:
        for layer in range(len(self.hidden)):
            w = self.params[f"hidden{layer}_w"]
            b = self.params[f"hidden{layer}_b"]
            x = ag.relu(ag.add_row(ag.matmul(x, w), b))
        return x

    def forward(self, idx) -> ag.Node:
        idx = self._check_idx(idx)
        embs = [ag.gather(self.embeddings[m], idx[:, m]) for m in range(4)]
        x = ag.concat(embs, axis=1)
        if self.kind == "m3":
            features = x
        elif self.kind == "m2":
            features = self._mlp(x)
        elif self.kind == "m4":
            parts = []
            for a, b in PAIRS:
                prod = ag.multiply(embs[a], embs[b])
                parts.append(ag.add_row(ag.matmul(prod, self.params[f"pair{a}{b}_w"]),
                                        self.params[f"pair{a}{b}_b"]))
            features = ag.concat(parts + embs, axis=1)
        else:
            parts = [ag.multiply(embs[a], embs[b]) for a, b in PAIRS]
            parts += [ag.multiply(ag.multiply(embs[a], embs[b]), embs[c]) for a, b, c in TRIPLES]
            features = ag.concat(parts + [self._mlp(x)], axis=1)
        z = ag.add_scalar(ag.matvec(features, self.params["out_w"]), self.params["out_b"])
        return ag.sigmoid(z) if self.sigmoid_head else z


def m4_parameter_count(mode_sizes: Sequence[int], embed_dim: int = 5, width: int = 5) -> int:
    """Closed-form parameter count of the pairwise model."""
    tables = sum(mode_sizes) * embed_dim
    pair_layers = len(PAIRS) * (embed_dim * width + width)
    head = len(PAIRS) * width + 4 * embed_dim + 1
    return tables + pair_layers + head
