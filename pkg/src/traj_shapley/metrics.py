"""Trajectory error metrics and the with/without-interaction table."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import LengthMismatch
from .predictor import (
    VARIANCE_FLOOR,
    FeatureMask,
    PredictiveDistribution,
    Predictor,
    apply_mask,
    predict_many,
)
from .scene import Dataset, PredictionQuery, future_positions, neighbors_of

LOG_2PI = math.log(2.0 * math.pi)


class Loss(str, enum.Enum):
    MIN_ADE = "minADE"
    MIN_FDE = "minFDE"
    NLL = "NLL"


@dataclass(frozen=True)
class LossKind:
    """A loss plus the sampling settings the min-of-K metrics need."""

    kind: Loss = Loss.NLL
    num_samples: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Loss(self.kind))
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")

    @property
    def name(self) -> str:
        return self.kind.value


def _check(samples: np.ndarray, ground_truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    samples = np.asarray(samples, dtype=float)
    ground_truth = np.asarray(ground_truth, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.shape[1:] != ground_truth.shape:
        raise LengthMismatch(f"samples {samples.shape[1:]} vs ground truth {ground_truth.shape}")
    return samples, ground_truth


def min_ade(samples: np.ndarray, ground_truth: np.ndarray) -> float:
    """Best-of-K average displacement error; ``samples`` is ``(K, horizon, 2)``."""
    samples, gt = _check(samples, ground_truth)
    return float(np.linalg.norm(samples - gt, axis=-1).mean(axis=1).min())


def min_fde(samples: np.ndarray, ground_truth: np.ndarray) -> float:
    samples, gt = _check(samples, ground_truth)
    return float(np.linalg.norm(samples[:, -1] - gt[-1], axis=-1).min())


def nll(dist: PredictiveDistribution, ground_truth: np.ndarray) -> float:
    """Mean over steps of the negative log mixture density at the ground truth."""
    gt = np.asarray(ground_truth, dtype=float)
    if gt.shape != (dist.horizon, 2):
        raise LengthMismatch(f"distribution horizon {dist.horizon} vs ground truth {gt.shape}")
    var = np.maximum(dist.variances, VARIANCE_FLOOR)
    r2 = (gt[:, None, :] - dist.means) ** 2
    log_comp = -0.5 * (LOG_2PI + np.log(var) + r2 / var).sum(axis=-1)  # (horizon, K)
    with np.errstate(divide="ignore"):
        log_w = np.log(dist.weights)
    return float(-logsumexp(log_comp + log_w, axis=1).mean())


def sample_trajectories(dist: PredictiveDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` trajectories, each step sampled independently from its mixture."""
    H, K = dist.weights.shape
    u = rng.random((count, H))
    z = rng.standard_normal((count, H, 2))
    cdf = np.cumsum(dist.weights, axis=1)
    comp = np.minimum((u[:, :, None] > cdf[None, :, :]).sum(axis=2), K - 1)
    steps = np.arange(H)[None, :]
    mean = dist.means[steps, comp]
    std = np.sqrt(dist.variances[steps, comp])
    return mean + std * z


def query_rng(seed: int, query: PredictionQuery) -> np.random.Generator:
    """Sampling stream fixed per (seed, query) so repeated evaluations agree."""
    key = [seed & (2**64 - 1), query.scene_index, query.target, query.t, query.h, query.horizon]
    return np.random.default_rng(np.random.SeedSequence(key))


def evaluate_loss(loss: LossKind, dist: PredictiveDistribution, ground_truth: np.ndarray,
                  query: PredictionQuery) -> float:
    if loss.kind is Loss.NLL:
        return nll(dist, ground_truth)
    samples = sample_trajectories(dist, loss.num_samples, query_rng(loss.seed, query))
    if loss.kind is Loss.MIN_ADE:
        return min_ade(samples, ground_truth)
    return min_fde(samples, ground_truth)


@dataclass(frozen=True)
class DiffRow:
    loss: str
    with_interaction: float
    without_interaction: float

    @property
    def diff(self) -> float:
        return self.with_interaction - self.without_interaction


def interaction_diff_table(
    model: Predictor,
    dataset: Dataset,
    queries: Sequence[PredictionQuery],
    losses: Iterable[LossKind],
) -> list[DiffRow]:
    """Mean loss with all neighbors versus with every neighbor edge cut."""
    if not queries:
        raise ValueError("interaction_diff_table needs at least one query")
    losses = list(losses)
    full_inputs, bare_inputs, truths = [], [], []
    for q in queries:
        scene = dataset.scenes[q.scene_index]
        row = neighbors_of(scene, q, model.radius)
        full_inputs.append(apply_mask(scene, q, row, FeatureMask.full(scene.n_max)))
        bare_inputs.append(apply_mask(scene, q, row, FeatureMask.no_neighbors(scene.n_max)))
        truths.append(future_positions(scene, q))
    with_d = predict_many(model, full_inputs)
    without_d = predict_many(model, bare_inputs)
    rows = []
    for loss in losses:
        w = [evaluate_loss(loss, d, y, q) for d, y, q in zip(with_d, truths, queries)]
        wo = [evaluate_loss(loss, d, y, q) for d, y, q in zip(without_d, truths, queries)]
        rows.append(DiffRow(loss.name, float(np.mean(w)), float(np.mean(wo))))
    return rows


def diff_table_csv(rows: Sequence[DiffRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["loss", "with", "without", "diff"])
    for r in rows:
        writer.writerow([r.loss, repr(r.with_interaction), repr(r.without_interaction), repr(r.diff)])
    return buf.getvalue()
