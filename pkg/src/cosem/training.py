"""Mini-batch training with Adam updates, early stopping, and checkpoints.

The loop is single-threaded and fully deterministic: shuffling comes from one
seeded generator, updates are applied in a fixed parameter order, and the
checkpoint format serializes float64 values losslessly so a save/load round
trip is bit-exact.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import SplitCorpus, Vocabulary, WindowInstance
from .embedding import EmbeddingTable
from .errors import (
    CorruptCheckpointError,
    DivergenceError,
    EmptyTrainSetError,
    VersionMismatchError,
)
from .evaluation import reciprocal_rank
from .model import ModelConfig, ModelParams, batch_loss_and_grads, forward_batch, init_params, predict_topk
from .numerics import Param, make_rng

CHECKPOINT_MAGIC = b"CSEMCKPT"
CHECKPOINT_VERSION = 1

# Global-norm gradient clip applied before every update.
MAX_GRAD_NORM = 5.0


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters."""

    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    k: int = 5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs, patience must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class Adam:
    """Adam update rule with bias correction (β1=0.9, β2=0.999, ε=1e-8)."""

    def __init__(
        self,
        params: Sequence[Param],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        """Apply one update from the gradients currently held in the params."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(p.grad)
            p.value -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_gradients(params: Sequence[Param], max_norm: float = MAX_GRAD_NORM) -> float:
    """Scale all gradients so their joint 2-norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    total = math.sqrt(sum(float(np.square(p.grad).sum()) for p in params))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad *= scale
    return total


@dataclass
class Checkpoint:
    """A trained model plus everything needed to evaluate it elsewhere."""

    model_config: ModelConfig
    train_config: TrainConfig
    params: ModelParams
    app_vocab: Vocabulary
    semantic_vocab: Vocabulary
    history: list[dict]
    best_epoch: int


# Instances scored per forward pass while validating inside the train loop.
VALIDATION_BATCH = 512


def _validation_mrr(
    params: ModelParams,
    model_config: ModelConfig,
    instances: Sequence[WindowInstance],
    k: int,
) -> float:
    """MRR@k of the current params on ``instances`` (module-level so tests can
    substitute a scripted sequence)."""
    rr_sum = 0.0
    for start in range(0, len(instances), VALIDATION_BATCH):
        chunk = instances[start:start + VALIDATION_BATCH]
        probs, _ = forward_batch(
            params,
            model_config,
            [inst.semantic_ids for inst in chunk],
            [inst.history_ids for inst in chunk],
        )
        for row, inst in enumerate(chunk):
            ranked = predict_topk(probs[row], min(k, model_config.app_count))
            rr_sum += reciprocal_rank(ranked, inst.target_ids, k)
    return rr_sum / len(instances)


def train(
    split: SplitCorpus,
    model_config: ModelConfig,
    train_config: TrainConfig,
    on_epoch: Callable[[int, float, float | None], None] | None = None,
) -> Checkpoint:
    """Fit the model on ``split.train``, selecting the best epoch by
    validation MRR@k.

    Improvement is strict; the retained epoch is the FIRST one achieving the
    maximum validation MRR. Training stops once ``patience`` consecutive
    epochs fail to improve. With an empty validation split, early stopping is
    disabled and the final epoch's params are returned.

    Raises:
        EmptyTrainSetError: nothing to fit on.
        DivergenceError: a batch loss became non-finite.
    """
    if not split.train:
        raise EmptyTrainSetError("train split is empty")

    params = init_params(model_config)
    optimizer = Adam(params.all_params(), learning_rate=train_config.learning_rate)
    shuffle_rng = make_rng(train_config.seed)
    n = len(split.train)

    history: list[dict] = []
    best_values: list[np.ndarray] | None = None
    best_mrr = -math.inf
    best_epoch = 0
    epochs_without_improvement = 0

    for epoch in range(1, train_config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = [split.train[int(i)] for i in order[start:start + train_config.batch_size]]
            params.zero_grads()
            batch_loss = batch_loss_and_grads(params, model_config, batch)
            if not math.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}"
                )
            clip_gradients(params.all_params())
            optimizer.step()
            loss_sum += batch_loss * len(batch)
        train_loss = loss_sum / n

        val_mrr: float | None = None
        if split.validation:
            val_mrr = _validation_mrr(params, model_config, split.validation, train_config.k)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_mrr": val_mrr})
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_mrr)

        if val_mrr is None:
            best_epoch = epoch
            continue
        if val_mrr > best_mrr:
            best_mrr = val_mrr
            best_epoch = epoch
            best_values = params.copy_values()
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= train_config.patience:
                break

    if best_values is not None:
        params.load_values(best_values)
    params.zero_grads()

    return Checkpoint(
        model_config=model_config,
        train_config=train_config,
        params=params,
        app_vocab=split.app_vocab,
        semantic_vocab=split.semantic_vocab,
        history=history,
        best_epoch=best_epoch,
    )


def _zero_params(config: ModelConfig) -> ModelParams:
    """ModelParams of the right shapes, all zeros (loading target)."""
    d, h, length = config.embed_dim, config.hidden_width, config.hidden_layers

    def stack(prefix: str) -> list[tuple[Param, Param]]:
        layers = []
        in_dim = d
        for layer_idx in range(length):
            layers.append((
                Param(np.zeros((h, in_dim)), name=f"{prefix}_w{layer_idx}"),
                Param(np.zeros(h), name=f"{prefix}_b{layer_idx}"),
            ))
            in_dim = h
        return layers

    return ModelParams(
        sem_table=EmbeddingTable(Param(np.zeros((config.chunk_count, d)), name="sem_embed")),
        app_table=EmbeddingTable(Param(np.zeros((config.app_count, d)), name="app_embed")),
        sem_layers=stack("sem"),
        app_layers=stack("app"),
        out_weight=Param(np.zeros((config.app_count, h)), name="out_w"),
        out_bias=Param(np.zeros(config.app_count), name="out_b"),
    )


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Write a checkpoint: magic, version, JSON header, raw float64 arrays,
    CRC32 trailer. Little-endian throughout; identical checkpoints produce
    identical bytes.
    """
    arrays = [p.value for p in checkpoint.params.all_params()]
    header = {
        "model_config": checkpoint.model_config.to_dict(),
        "train_config": checkpoint.train_config.to_dict(),
        "app_vocab": checkpoint.app_vocab.id_to_token,
        "semantic_vocab": checkpoint.semantic_vocab.id_to_token,
        "history": checkpoint.history,
        "best_epoch": checkpoint.best_epoch,
        "arrays": [
            {"name": p.name, "shape": list(p.value.shape)}
            for p in checkpoint.params.all_params()
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    for arr in arrays:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`, verifying the
    checksum and version gate.

    Raises:
        FileNotFoundError: missing file.
        CorruptCheckpointError: truncation, bad magic, bad checksum, or a
            header inconsistent with the payload.
        VersionMismatchError: file written by a newer format version.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    blob = path.read_bytes()
    if len(blob) < len(CHECKPOINT_MAGIC) + 4 + 8 + 4:
        raise CorruptCheckpointError(f"{path}: too short to be a checkpoint")
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic bytes")

    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CorruptCheckpointError(f"{path}: checksum mismatch")

    offset = len(CHECKPOINT_MAGIC)
    version = struct.unpack_from("<I", blob, offset)[0]
    offset += 4
    if version > CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version} newer than supported {CHECKPOINT_VERSION}"
        )
    header_len = struct.unpack_from("<Q", blob, offset)[0]
    offset += 8
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header: {exc}") from exc
    offset += header_len

    model_config = ModelConfig.from_dict(header["model_config"])
    train_config = TrainConfig.from_dict(header["train_config"])
    params = _zero_params(model_config)

    expected = [(p.name, list(p.value.shape)) for p in params.all_params()]
    declared = [(a["name"], a["shape"]) for a in header["arrays"]]
    if expected != declared:
        raise CorruptCheckpointError(f"{path}: array manifest does not match model config")

    payload = len(blob) - 4 - offset
    needed = sum(int(np.prod(s)) for _, s in expected) * 8
    if payload != needed:
        raise CorruptCheckpointError(f"{path}: payload is {payload} bytes, expected {needed}")

    for p in params.all_params():
        count = p.value.size
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        p.value[...] = arr.reshape(p.value.shape)
        offset += count * 8

    return Checkpoint(
        model_config=model_config,
        train_config=train_config,
        params=params,
        app_vocab=Vocabulary(header["app_vocab"]),
        semantic_vocab=Vocabulary(header["semantic_vocab"]),
        history=header["history"],
        best_epoch=header["best_epoch"],
    )


def checkpoints_equal(a: Checkpoint, b: Checkpoint) -> bool:
    """Bit-exact equality of params plus equality of configs and vocabularies."""
    if a.model_config != b.model_config or a.train_config != b.train_config:
        return False
    if a.app_vocab != b.app_vocab or a.semantic_vocab != b.semantic_vocab:
        return False
    if a.best_epoch != b.best_epoch or a.history != b.history:
        return False
    pa, pb = a.params.all_params(), b.params.all_params()
    return len(pa) == len(pb) and all(
        x.value.shape == y.value.shape and x.value.tobytes() == y.value.tobytes()
        for x, y in zip(pa, pb)
    )
