"""Inference: iterative reversal from noise and rounding to item indices.

Scorers share one contract: `represent(history, rng)` produces a continuous
target representation and `score(history, rng)` turns it into per-item
scores by inner product against the embedding table (index 0, the padding
row, is pinned to -inf). The diffusion scorer reverses a Gaussian sample
through the trained approximator; the next-item scorer (adversarial
baseline) encodes the history once, deterministically.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import ModelCheckpoint, model_from_checkpoint
from .diffusion import reverse_step
from .model import Approximator
from .rng import RngStream
from .schedule import NoiseSchedule, build_schedule
from .tensor import Tensor


def rounding(x_0, item_embeddings) -> list[int]:
    """Rank every item by descending inner product with x_0.

    The padding row is excluded; ties break toward the smaller item index.
    """
    vec = x_0.data if isinstance(x_0, Tensor) else np.asarray(x_0)
    table = item_embeddings.data if isinstance(item_embeddings, Tensor) \
        else np.asarray(item_embeddings)
    if not np.all(np.isfinite(vec)):
        raise ValueError("x_0 must be finite")
    scores = table[1:] @ vec.reshape(-1)
    order = np.argsort(-scores, kind="stable")  # stable keeps ascending index on ties
    return [int(i) + 1 for i in order]


class Scorer:
    """Common surface for ranking models and reference baselines."""

    n_items: int

    def represent(self, history, rng: RngStream) -> np.ndarray:
        raise NotImplementedError

    def score_vector(self, vec: np.ndarray) -> np.ndarray:
        """(dim,) representation -> (n_items + 1,) scores, index 0 = -inf."""
        raise NotImplementedError

    def score(self, history, rng: RngStream) -> np.ndarray:
        return self.score_vector(self.represent(history, rng))


class _EmbeddingScorer(Scorer):
    def __init__(self, model: Approximator):
        self.model = model
        self.n_items = model.params.vocab_size

    def score_vector(self, vec: np.ndarray) -> np.ndarray:
        scores = self.model.item_emb.data @ np.asarray(vec).reshape(-1)
        scores[0] = -np.inf
        return scores

    def _history_batch(self, history):
        hist = np.asarray(list(history), dtype=int)
        hist = hist[-self.model.cfg.max_len:]
        if hist.size == 0:
            raise ValueError("history is empty after truncation")
        if hist.min() < 1 or hist.max() > self.n_items:
            raise ValueError(f"history items must be in [1, {self.n_items}]")
        return hist.reshape(1, -1), np.ones((1, hist.size))


class DiffusionScorer(_EmbeddingScorer):
    """Reverses pure noise into a target representation with the trained model.

    Per call the stream is consumed in a fixed order: the initial Gaussian,
    then per reverse step the mixing noise (inside the approximator) and the
    posterior noise.
    """

    def __init__(self, model: Approximator, steps: int | None = None,
                 schedule: NoiseSchedule | None = None):
        super().__init__(model)
        cfg = model.cfg
        self.steps = cfg.t if steps is None else int(steps)
        if schedule is not None and schedule.t != self.steps:
            raise ValueError(f"schedule horizon {schedule.t} != steps {self.steps}")
        self.schedule = schedule or build_schedule(
            cfg.schedule_kind, self.steps, cfg.schedule_a, cfg.schedule_b,
            cfg.schedule_tau, cfg.schedule_b_constant)

    def represent(self, history, rng: RngStream) -> np.ndarray:
        hist, mask = self._history_batch(history)
        dim = self.model.cfg.dim
        x = rng.gaussian((1, dim))
        for s in range(self.steps, 0, -1):
            x0_hat = self.model.reconstruct(hist, mask, x, np.array([s]), rng,
                                            train_mode=False).data
            eps_prime = rng.gaussian((1, dim))
            x = reverse_step(x, x0_hat, s, self.schedule, eps_prime,
                             noise_sqrt=self.model.cfg.reverse_noise_sqrt)
        return x[0]


class NextItemScorer(_EmbeddingScorer):
    """Deterministic encoder scoring for the plain next-item (adversarial) model."""

    def represent(self, history, rng: RngStream | None = None) -> np.ndarray:
        hist, mask = self._history_batch(history)
        return self.model.encode_history(hist, mask, train_mode=False).data[0]


def build_scorer(ckpt: ModelCheckpoint, steps: int | None = None) -> Scorer:
    model = model_from_checkpoint(ckpt)
    if ckpt.config.mode == "adversarial":
        return NextItemScorer(model)
    return DiffusionScorer(model, steps)


def infer(scorer: Scorer, sequence, rng: RngStream) -> list[int]:
    """Full ranked item list for one history."""
    scores = scorer.score(sequence, rng)
    order = np.argsort(-scores[1:], kind="stable")
    return [int(i) + 1 for i in order]
