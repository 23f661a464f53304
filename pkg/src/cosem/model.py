"""Dual-branch embedding network over semantic chunks and app history.

Two mean-pooled summarization vectors (one per embedding table) feed two
parallel stacks of tanh layers; the branch outputs are fused by elementwise
product and mapped through a sigmoid layer to one independent probability per
app. The ``dnn_a`` and ``dnn_s`` variants disable the semantic or the history
branch respectively and feed the surviving branch straight to the output
layer. Gradients are computed by hand; :func:`cosem.numerics.finite_diff_check`
is the referee.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import WindowInstance
from .embedding import EmbeddingTable
from .numerics import (
    SIGMOID_HI,
    SIGMOID_LO,
    Param,
    dense_init,
    make_rng,
    sigmoid_forward,
)

VARIANTS = ("cosem", "dnn_a", "dnn_s")

# Floor for log arguments inside the loss.
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters plus the parameter-init seed."""

    app_count: int
    chunk_count: int
    embed_dim: int = 64
    hidden_layers: int = 2
    hidden_width: int = 64
    variant: str = "cosem"
    seed: int = 0

    def __post_init__(self):
        if self.app_count < 1 or self.chunk_count < 1:
            raise ValueError("app_count and chunk_count must be >= 1")
        if self.embed_dim < 1 or self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("embed_dim, hidden_layers, hidden_width must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def to_dict(self) -> dict:
        return {
            "app_count": self.app_count,
            "chunk_count": self.chunk_count,
            "embed_dim": self.embed_dim,
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "variant": self.variant,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ModelParams:
    """Every learnable array of the network, each paired with its gradient."""

    sem_table: EmbeddingTable
    app_table: EmbeddingTable
    sem_layers: list[tuple[Param, Param]]
    app_layers: list[tuple[Param, Param]]
    out_weight: Param
    out_bias: Param

    def all_params(self) -> list[Param]:
        """Every Param in a fixed, documented order (serialization relies on it)."""
        params = [self.sem_table.param, self.app_table.param]
        for w, b in self.sem_layers:
            params.extend((w, b))
        for w, b in self.app_layers:
            params.extend((w, b))
        params.extend((self.out_weight, self.out_bias))
        return params

    def zero_grads(self) -> None:
        for p in self.all_params():
            p.zero_grad()

    def copy_values(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.all_params()]

    def load_values(self, values: Sequence[np.ndarray]) -> None:
        params = self.all_params()
        if len(values) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(values)}")
        for p, v in zip(params, values):
            if p.value.shape != v.shape:
                raise ValueError(f"param {p.name!r}: shape {p.value.shape} != {v.shape}")
            p.value[...] = v


def init_params(config: ModelConfig) -> ModelParams:
    """Draw fresh parameters from ``config.seed``.

    The draw order is fixed (semantic table, app table, semantic layers, app
    layers, output weight), so identical configs give identical parameters.
    Biases start at zero.
    """
    rng = make_rng(config.seed)
    sem_table = EmbeddingTable.create(rng, config.chunk_count, config.embed_dim, name="sem_embed")
    app_table = EmbeddingTable.create(rng, config.app_count, config.embed_dim, name="app_embed")

    def make_stack(prefix: str) -> list[tuple[Param, Param]]:
        layers = []
        in_dim = config.embed_dim
        for layer_idx in range(config.hidden_layers):
            w = Param(dense_init(rng, config.hidden_width, in_dim), name=f"{prefix}_w{layer_idx}")
            b = Param(np.zeros(config.hidden_width), name=f"{prefix}_b{layer_idx}")
            layers.append((w, b))
            in_dim = config.hidden_width
        return layers

    sem_layers = make_stack("sem")
    app_layers = make_stack("app")
    out_weight = Param(dense_init(rng, config.app_count, config.hidden_width), name="out_w")
    out_bias = Param(np.zeros(config.app_count), name="out_b")
    return ModelParams(
        sem_table=sem_table,
        app_table=app_table,
        sem_layers=sem_layers,
        app_layers=app_layers,
        out_weight=out_weight,
        out_bias=out_bias,
    )


@dataclass
class ForwardCache:
    """Intermediate activations kept for the backward pass, batch-major."""

    sem_pooled: np.ndarray | None
    app_pooled: np.ndarray | None
    sem_hidden: list[np.ndarray] = field(default_factory=list)
    app_hidden: list[np.ndarray] = field(default_factory=list)
    fused: np.ndarray | None = None
    probs: np.ndarray | None = None


def _pool_batch(table: EmbeddingTable, ids_seq: Sequence[Sequence[int]]) -> np.ndarray:
    out = np.zeros((len(ids_seq), table.dim))
    for row, ids in enumerate(ids_seq):
        out[row] = table.mean_pool(ids)
    return out


def _branch_forward(layers: list[tuple[Param, Param]], x: np.ndarray) -> list[np.ndarray]:
    hidden = []
    h = x
    for w, b in layers:
        h = np.tanh(h @ w.value.T + b.value)
        hidden.append(h)
    return hidden


def forward_batch(
    params: ModelParams,
    config: ModelConfig,
    semantic_ids_seq: Sequence[Sequence[int]],
    history_ids_seq: Sequence[Sequence[int]],
) -> tuple[np.ndarray, ForwardCache]:
    """Per-app probabilities for a batch of instances, plus the activation cache.

    Row ``i`` of the result is in (0, 1) elementwise and is NOT normalized
    across apps. In ablation variants the disabled branch is never evaluated,
    so the output cannot depend on its ids.
    """
    if len(semantic_ids_seq) != len(history_ids_seq):
        raise ValueError("semantic and history batches differ in length")

    cache = ForwardCache(sem_pooled=None, app_pooled=None)
    if config.variant != "dnn_a":
        cache.sem_pooled = _pool_batch(params.sem_table, semantic_ids_seq)
        cache.sem_hidden = _branch_forward(params.sem_layers, cache.sem_pooled)
    if config.variant != "dnn_s":
        cache.app_pooled = _pool_batch(params.app_table, history_ids_seq)
        cache.app_hidden = _branch_forward(params.app_layers, cache.app_pooled)

    if config.variant == "cosem":
        fused = cache.sem_hidden[-1] * cache.app_hidden[-1]
    elif config.variant == "dnn_a":
        fused = cache.app_hidden[-1]
    else:
        fused = cache.sem_hidden[-1]

    logits = fused @ params.out_weight.value.T + params.out_bias.value
    probs = sigmoid_forward(logits)
    cache.fused = fused
    cache.probs = probs
    return probs, cache


def forward(
    params: ModelParams,
    config: ModelConfig,
    semantic_ids: Sequence[int],
    history_ids: Sequence[int],
) -> np.ndarray:
    """Per-app probability vector for one instance."""
    probs, _ = forward_batch(params, config, [semantic_ids], [history_ids])
    return probs[0]


def multihot(target_ids: Sequence[int], app_count: int) -> np.ndarray:
    """0/1 indicator vector of a target app-id set."""
    ids = np.asarray(sorted(target_ids), dtype=np.int64)
    if ids.size == 0:
        raise ValueError("target_ids must be non-empty")
    if ids.min() < 0 or ids.max() >= app_count:
        raise IndexError(f"target id out of range [0, {app_count})")
    y = np.zeros(app_count)
    y[ids] = 1.0
    return y


def loss(probs: np.ndarray, target_ids: Sequence[int]) -> float:
    """Mean binary cross-entropy of one probability vector against a target set.

    Averages over ALL apps (present and absent). Log arguments are floored at
    1e-12 so exactly-0/1 probabilities stay finite.
    """
    probs = np.asarray(probs, dtype=np.float64)
    y = multihot(target_ids, probs.shape[0])
    terms = y * np.log(np.maximum(probs, LOG_FLOOR)) \
        + (1.0 - y) * np.log(np.maximum(1.0 - probs, LOG_FLOOR))
    return float(-terms.mean())


def _loss_matrix(probs: np.ndarray, targets: np.ndarray) -> float:
    terms = targets * np.log(np.maximum(probs, LOG_FLOOR)) \
        + (1.0 - targets) * np.log(np.maximum(1.0 - probs, LOG_FLOOR))
    return float(-terms.mean())


def backward_batch(
    params: ModelParams,
    config: ModelConfig,
    cache: ForwardCache,
    semantic_ids_seq: Sequence[Sequence[int]],
    history_ids_seq: Sequence[Sequence[int]],
    targets: np.ndarray,
) -> None:
    """Accumulate gradients of the batch-mean loss into every ``Param.grad``.

    Gradients are exact for the function actually computed, including its
    stability clamps: coordinates where a log floor or the sigmoid clamp is
    active contribute zero gradient, because there the implemented loss is
    locally constant in the logit.
    """
    probs = cache.probs
    batch, app_count = probs.shape
    gz = (probs - targets) / (app_count * batch)
    gz[np.logical_and(targets == 1.0, probs <= LOG_FLOOR)] = 0.0
    gz[np.logical_and(targets == 0.0, probs >= 1.0 - LOG_FLOOR)] = 0.0
    gz[probs <= SIGMOID_LO] = 0.0
    gz[probs >= SIGMOID_HI] = 0.0

    params.out_bias.grad += gz.sum(axis=0)
    params.out_weight.grad += gz.T @ cache.fused
    g_fused = gz @ params.out_weight.value

    if config.variant == "cosem":
        g_sem = g_fused * cache.app_hidden[-1]
        g_app = g_fused * cache.sem_hidden[-1]
    elif config.variant == "dnn_a":
        g_sem, g_app = None, g_fused
    else:
        g_sem, g_app = g_fused, None

    if g_sem is not None:
        gx = _branch_backward(params.sem_layers, cache.sem_pooled, cache.sem_hidden, g_sem)
        for row, ids in enumerate(semantic_ids_seq):
            params.sem_table.mean_pool_backward(ids, gx[row])
    if g_app is not None:
        gx = _branch_backward(params.app_layers, cache.app_pooled, cache.app_hidden, g_app)
        for row, ids in enumerate(history_ids_seq):
            params.app_table.mean_pool_backward(ids, gx[row])


def _branch_backward(
    layers: list[tuple[Param, Param]],
    x0: np.ndarray,
    hidden: list[np.ndarray],
    g_out: np.ndarray,
) -> np.ndarray:
    gh = g_out
    for layer_idx in range(len(layers) - 1, -1, -1):
        w, b = layers[layer_idx]
        h = hidden[layer_idx]
        gz = gh * (1.0 - h * h)
        b.grad += gz.sum(axis=0)
        x_in = hidden[layer_idx - 1] if layer_idx > 0 else x0
        w.grad += gz.T @ x_in
        gh = gz @ w.value
    return gh


def _instance_batches(instances: Sequence[WindowInstance], app_count: int):
    sem = [inst.semantic_ids for inst in instances]
    hist = [inst.history_ids for inst in instances]
    targets = np.zeros((len(instances), app_count))
    for row, inst in enumerate(instances):
        targets[row] = multihot(inst.target_ids, app_count)
    return sem, hist, targets


def batch_loss(params: ModelParams, config: ModelConfig, instances: Sequence[WindowInstance]) -> float:
    """Mean loss over a batch of instances; forward only."""
    sem, hist, targets = _instance_batches(instances, config.app_count)
    probs, _ = forward_batch(params, config, sem, hist)
    return _loss_matrix(probs, targets)


def batch_loss_and_grads(
    params: ModelParams, config: ModelConfig, instances: Sequence[WindowInstance]
) -> float:
    """One forward+backward pass over a batch; grads ACCUMULATE (zero first)."""
    sem, hist, targets = _instance_batches(instances, config.app_count)
    probs, cache = forward_batch(params, config, sem, hist)
    backward_batch(params, config, cache, sem, hist, targets)
    return _loss_matrix(probs, targets)


def backward(params: ModelParams, config: ModelConfig, instance: WindowInstance) -> float:
    """Gradients of one instance's loss, accumulated into ``Param.grad``."""
    return batch_loss_and_grads(params, config, [instance])


def predict_topk(probs: np.ndarray, k: int) -> list[int]:
    """Ids of the ``k`` largest probabilities, descending; ties go to the
    smaller app id."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 1 <= k <= probs.shape[0]:
        raise ValueError(f"k must be in [1, {probs.shape[0]}], got {k}")
    order = np.lexsort((np.arange(probs.shape[0]), -probs))
    return [int(i) for i in order[:k]]
