"""Estimator-style wrappers: fit/predict objects over the functional core.

These follow scikit-learn conventions (constructor args stored verbatim,
``get_params``/``set_params`` inherited, fitted state in trailing-underscore
attributes, ``NotFittedError`` before fit) so the model slots into existing
tooling. The functional API in :mod:`cosem.model` and :mod:`cosem.training`
remains the source of truth.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import SplitCorpus, WindowInstance
from .evaluation import EvalReport, evaluate, mru_baseline
from .model import ModelConfig, forward, predict_topk
from .numerics import make_rng
from .training import Checkpoint, TrainConfig, train


def check_instances(instances: Sequence[WindowInstance], allow_empty: bool = False) -> list[WindowInstance]:
    """Validate a prediction input: a sequence of WindowInstance values."""
    if isinstance(instances, WindowInstance):
        raise TypeError("pass a sequence of instances, not a single instance")
    out = list(instances)
    if not allow_empty and not out:
        raise ValueError("empty instance sequence")
    for item in out:
        if not isinstance(item, WindowInstance):
            raise TypeError(f"expected WindowInstance, got {type(item).__name__}")
    return out


class CosemPredictor(BaseEstimator):
    """App-set predictor with the dual-branch network under the hood.

    ``fit`` takes a :class:`~cosem.corpus.SplitCorpus` (its vocabularies size
    the embedding tables; its validation split drives early stopping).
    """

    def __init__(
        self,
        embed_dim: int = 64,
        hidden_layers: int = 2,
        hidden_width: int = 64,
        variant: str = "cosem",
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        max_epochs: int = 100,
        patience: int = 10,
        k: int = 5,
        seed: int = 0,
    ):
        self.embed_dim = embed_dim
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.variant = variant
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.k = k
        self.seed = seed

    def fit(self, split: SplitCorpus, y=None, on_epoch=None) -> "CosemPredictor":
        """Train on ``split.train``; retains the best-validation-epoch params."""
        if not isinstance(split, SplitCorpus):
            raise TypeError(f"fit expects a SplitCorpus, got {type(split).__name__}")
        model_config = ModelConfig(
            app_count=split.app_vocab.size,
            chunk_count=split.semantic_vocab.size,
            embed_dim=self.embed_dim,
            hidden_layers=self.hidden_layers,
            hidden_width=self.hidden_width,
            variant=self.variant,
            seed=self.seed,
        )
        train_config = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            k=self.k,
        )
        self.checkpoint_ = train(split, model_config, train_config, on_epoch=on_epoch)
        return self

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "CosemPredictor":
        """Wrap an already-trained checkpoint in a fitted estimator."""
        mc, tc = checkpoint.model_config, checkpoint.train_config
        est = cls(
            embed_dim=mc.embed_dim,
            hidden_layers=mc.hidden_layers,
            hidden_width=mc.hidden_width,
            variant=mc.variant,
            learning_rate=tc.learning_rate,
            batch_size=tc.batch_size,
            max_epochs=tc.max_epochs,
            patience=tc.patience,
            k=tc.k,
            seed=mc.seed,
        )
        est.checkpoint_ = checkpoint
        return est

    def _require_fitted(self) -> Checkpoint:
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError(
                "This CosemPredictor instance is not fitted yet; call fit first."
            )
        return self.checkpoint_

    def predict_proba(self, instances: Sequence[WindowInstance]) -> np.ndarray:
        """Per-app probabilities, one row per instance (not normalized)."""
        ckpt = self._require_fitted()
        instances = check_instances(instances)
        out = np.zeros((len(instances), ckpt.model_config.app_count))
        for row, inst in enumerate(instances):
            out[row] = forward(
                ckpt.params, ckpt.model_config, inst.semantic_ids, inst.history_ids
            )
        return out

    def rank_apps(self, instance: WindowInstance) -> list[int]:
        """Top-k app ids for one instance, best first. Vocabularies smaller
        than k yield a shorter list (no padding)."""
        ckpt = self._require_fitted()
        probs = forward(ckpt.params, ckpt.model_config, instance.semantic_ids, instance.history_ids)
        return predict_topk(probs, min(self.k, ckpt.model_config.app_count))

    def predict(self, instances: Sequence[WindowInstance]) -> list[list[int]]:
        """Top-k app ids per instance."""
        self._require_fitted()
        return [self.rank_apps(inst) for inst in check_instances(instances)]

    def evaluate_report(self, instances: Sequence[WindowInstance], skipped_oov: int = 0) -> EvalReport:
        self._require_fitted()
        return evaluate(self.rank_apps, instances, k=self.k, skipped_oov=skipped_oov)

    def score(self, instances: Sequence[WindowInstance], y=None) -> float:
        """MRR@k on ``instances`` (higher is better)."""
        return self.evaluate_report(check_instances(instances)).mrr_at_k


class MruBaseline(BaseEstimator):
    """Recency baseline: predicts the k most recent distinct history apps."""

    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, split=None, y=None) -> "MruBaseline":
        return self

    def rank_apps(self, instance: WindowInstance) -> list[int]:
        return mru_baseline(instance, self.k)

    def predict(self, instances: Sequence[WindowInstance]) -> list[list[int]]:
        return [self.rank_apps(inst) for inst in check_instances(instances)]

    def evaluate_report(self, instances: Sequence[WindowInstance], skipped_oov: int = 0) -> EvalReport:
        return evaluate(self.rank_apps, instances, k=self.k, skipped_oov=skipped_oov)

    def score(self, instances: Sequence[WindowInstance], y=None) -> float:
        return self.evaluate_report(check_instances(instances)).mrr_at_k


class RandomRanker(BaseEstimator):
    """Seeded random-permutation ranker; the floor every model should beat."""

    def __init__(self, app_count: int, k: int = 5, seed: int = 0):
        self.app_count = app_count
        self.k = k
        self.seed = seed

    def fit(self, split=None, y=None) -> "RandomRanker":
        return self

    def predict(self, instances: Sequence[WindowInstance]) -> list[list[int]]:
        rng = make_rng(self.seed)
        return [
            [int(i) for i in rng.permutation(self.app_count)[: self.k]]
            for _ in check_instances(instances)
        ]

    def evaluate_report(self, instances: Sequence[WindowInstance], skipped_oov: int = 0) -> EvalReport:
        instances = check_instances(instances)
        # evaluate() visits instances in order, so a one-shot iterator lines up.
        prediction_iter = iter(self.predict(instances))
        return evaluate(lambda inst: next(prediction_iter), instances, k=self.k, skipped_oov=skipped_oov)

    def score(self, instances: Sequence[WindowInstance], y=None) -> float:
        return self.evaluate_report(check_instances(instances)).mrr_at_k
