"""Predictor contract and two reference predictors.

Every predictor follows the same three-stage layout: a history encoder turns
the target's past into ``F``, an edge encoder embeds each neighbor ``j`` as
``E[j]``, the edges are mean-aggregated under the adjacency row, and a
decoder maps ``(F, mean E)`` to a Gaussian per future step. Dropping a
neighbor therefore just means zeroing its adjacency entry, and dropping the
target's history means feeding a motionless trajectory.

:class:`ConstantVelocityPredictor` ignores neighbors entirely and serves as a
control. :class:`SocialPredictor` is a small trainable network with
hand-written reverse-mode gradients.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonFiniteLoss
from .scene import AgentTrack, Dataset, PredictionQuery, Scene, future_positions, neighbors_of

VARIANCE_FLOOR = 1e-6  # m^2
CHECKPOINT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------- masks and inputs


@dataclass(frozen=True, eq=False)
class InjectedAgent:
    """A foreign track attached to a query; ``align`` is the track frame that
    coincides with the query time ``t``."""

    track: AgentTrack
    align: int

    @property
    def position(self) -> np.ndarray:
        return self.track.positions[self.align]

    @property
    def velocity(self) -> np.ndarray:
        return self.track.velocities[self.align]


@dataclass(frozen=True, eq=False)
class FeatureMask:
    """Which inputs the predictor may see.

    ``replaced`` maps a neighbor slot to a substitute track; it is only used
    by the randomization (marginal) attribution and only for slots whose
    inclusion bit is off.
    """

    include_target_history: bool
    neighbor_included: np.ndarray
    injected: tuple[InjectedAgent, ...] = ()
    replaced: tuple[tuple[int, InjectedAgent], ...] = ()

    @classmethod
    def full(cls, n_max: int, injected: Sequence[InjectedAgent] = ()) -> "FeatureMask":
        return cls(True, np.ones(n_max, dtype=bool), tuple(injected))

    @classmethod
    def no_neighbors(cls, n_max: int) -> "FeatureMask":
        return cls(True, np.zeros(n_max, dtype=bool))


@dataclass(frozen=True, eq=False)
class ModelInputs:
    """Effective inputs for one query after masking.

    Slots ``0 .. n_max-1`` are the scene's tracks, followed by injected agents.
    Only the states at the query time are kept for neighbors.
    """

    hist_pos: np.ndarray  # (h, 2)
    hist_vel: np.ndarray  # (h, 2)
    hist_acc: np.ndarray  # (h, 2)
    nb_pos: np.ndarray  # (J, 2)
    nb_vel: np.ndarray  # (J, 2)
    adjacency: np.ndarray  # (J,)
    dt: float
    horizon: int

    @property
    def cur_pos(self) -> np.ndarray:
        return self.hist_pos[-1]

    @property
    def cur_vel(self) -> np.ndarray:
        return self.hist_vel[-1]


def apply_mask(
    scene: Scene,
    query: PredictionQuery,
    adjacency_row: np.ndarray,
    mask: FeatureMask,
    radius: float | None = None,
) -> ModelInputs:
    """Realize ``mask`` on one query.

    Excluded neighbors lose their edge, a disabled history becomes a static
    trajectory frozen at the target's current position, and injected agents
    are appended as extra always-connected slots. Replacement tracks keep
    their slot and are connected iff within ``radius`` of the target.
    """
    i, t = query.target, query.t
    track = scene.tracks[i]
    hist = slice(t - query.h + 1, t + 1)
    if mask.include_target_history:
        hist_pos, hist_vel, hist_acc = track.positions[hist], track.velocities[hist], track.accelerations[hist]
    else:
        hist_pos = np.repeat(track.positions[t][None, :], query.h, axis=0)
        hist_vel = np.zeros((query.h, 2))
        hist_acc = np.zeros((query.h, 2))
    included = np.asarray(mask.neighbor_included, dtype=bool)
    adj = np.where(included, adjacency_row, 0.0)
    nb_pos = scene.positions[:, t]
    nb_vel = scene.velocities[:, t]
    if mask.replaced:
        if radius is None:
            raise ValueError("replacement tracks need the interaction radius")
        nb_pos, nb_vel = nb_pos.copy(), nb_vel.copy()
        for slot, sub in mask.replaced:
            if included[slot]:
                raise ValueError(f"slot {slot} is both included and replaced")
            nb_pos[slot] = sub.position
            nb_vel[slot] = sub.velocity
            adj[slot] = float(np.linalg.norm(sub.position - track.positions[t]) <= radius)
    if mask.injected:
        nb_pos = np.concatenate([nb_pos, [a.position for a in mask.injected]])
        nb_vel = np.concatenate([nb_vel, [a.velocity for a in mask.injected]])
        adj = np.concatenate([adj, np.ones(len(mask.injected))])
    return ModelInputs(hist_pos, hist_vel, hist_acc, nb_pos, nb_vel, adj, scene.dt, query.horizon)


def aggregate_edges(edge_features: np.ndarray, adjacency_row: np.ndarray) -> np.ndarray:
    """Adjacency-weighted mean of edge features; zero vector when nothing is connected.

    Accumulates slot by slot in index order, so appending unconnected slots
    leaves the result bit-identical.
    """
    edge_features = np.asarray(edge_features, dtype=float)
    adjacency_row = np.asarray(adjacency_row, dtype=float)
    acc = np.zeros(edge_features.shape[:-2] + edge_features.shape[-1:])
    count = np.zeros(edge_features.shape[:-2])
    for j in range(edge_features.shape[-2]):
        a = adjacency_row[..., j]
        acc = acc + a[..., None] * edge_features[..., j, :]
        count = count + a
    inv = np.divide(1.0, count, out=np.zeros_like(count), where=count > 0)
    return acc * inv[..., None]


# --------------------------------------------------------------------------- distributions


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    """Independent-per-step Gaussian mixture over future positions.

    ``weights``: ``(horizon, K)``; ``means`` and ``variances``: ``(horizon, K, 2)``.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or self.means.shape != w.shape + (2,) or self.variances.shape != self.means.shape:
            raise ValueError("inconsistent mixture shapes")
        if (w < 0).any() or np.abs(w.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if not (np.isfinite(self.means).all() and np.isfinite(self.variances).all()):
            raise ValueError("non-finite mixture parameters")
        object.__setattr__(self, "variances", np.maximum(self.variances, VARIANCE_FLOOR))

    @classmethod
    def gaussian(cls, means: np.ndarray, variances: np.ndarray) -> "PredictiveDistribution":
        means = np.asarray(means, dtype=float)
        return cls(np.ones((len(means), 1)), means[:, None, :], np.asarray(variances, dtype=float)[:, None, :])

    @property
    def horizon(self) -> int:
        return self.weights.shape[0]

    @property
    def num_components(self) -> int:
        return self.weights.shape[1]


# --------------------------------------------------------------------------- reference models


def _cv_means(cur_pos: np.ndarray, cur_vel: np.ndarray, dt: float, horizon: int) -> np.ndarray:
    k = np.arange(1, horizon + 1, dtype=float)[:, None]
    return cur_pos[..., None, :] + (k * dt) * cur_vel[..., None, :]


@dataclass(frozen=True)
class ConstantVelocityPredictor:
    """Extrapolates the last observed velocity; neighbors are never read."""

    h: int
    horizon: int
    radius: float
    sigma0: float = 0.5

    kind = "constant_velocity"

    def predict_inputs(self, inputs: ModelInputs) -> PredictiveDistribution:
        means = _cv_means(inputs.cur_pos, inputs.cur_vel, inputs.dt, inputs.horizon)
        return PredictiveDistribution.gaussian(means, np.full_like(means, self.sigma0**2))


@dataclass(frozen=True)
class Dims:
    h: int
    horizon: int
    d_f: int = 16
    d_e: int = 16
    d_dec: int = 32


def _param_shapes(d: Dims) -> dict[str, tuple[int, ...]]:
    return {
        "hist_W": (d.d_f, 2 * d.h),
        "hist_b": (d.d_f,),
        "edge_W1": (d.d_e, 4),
        "edge_b1": (d.d_e,),
        "edge_W2": (d.d_f, d.d_e),
        "edge_b2": (d.d_f,),
        "dec_W1": (d.d_dec, 2 * d.d_f),
        "dec_b1": (d.d_dec,),
        "dec_W2": (4 * d.horizon, d.d_dec),
        "dec_b2": (4 * d.horizon,),
    }


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Weights of :class:`SocialPredictor`.

    ``hist_*`` is the linear history encoder, ``edge_*`` the two-layer edge
    encoder and ``dec_*`` the two-layer decoder. The decoder emits ``2 *
    horizon`` mean offsets followed by ``2 * horizon`` log-variances.
    """

    dims: Dims
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        shapes = _param_shapes(self.dims)
        if set(self.arrays) != set(shapes):
            raise ValueError(f"expected parameters {sorted(shapes)}")
        frozen = {}
        for name, shape in shapes.items():
            a = np.array(self.arrays[name], dtype=float).reshape(shape)
            if not np.isfinite(a).all():
                raise ValueError(f"non-finite values in {name}")
            a.setflags(write=False)
            frozen[name] = a
        object.__setattr__(self, "arrays", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @classmethod
    def zeros(cls, dims: Dims) -> "ModelParams":
        return cls(dims, {k: np.zeros(s) for k, s in _param_shapes(dims).items()})

    @classmethod
    def init(cls, dims: Dims, seed: int, scale: float = 0.5) -> "ModelParams":
        """Glorot-style random weights, zero biases."""
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, shape in _param_shapes(dims).items():
            if len(shape) == 2:
                arrays[name] = rng.normal(0.0, scale / math.sqrt(shape[1]), size=shape)
            else:
                arrays[name] = np.zeros(shape)
        return cls(dims, arrays)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in _param_shapes(self.dims)])

    @classmethod
    def from_vector(cls, dims: Dims, vector: np.ndarray) -> "ModelParams":
        arrays, offset = {}, 0
        for name, shape in _param_shapes(dims).items():
            size = int(np.prod(shape))
            arrays[name] = vector[offset : offset + size].reshape(shape)
            offset += size
        if offset != len(vector):
            raise ValueError("parameter vector has the wrong length")
        return cls(dims, arrays)


@dataclass(frozen=True, eq=False)
class Batch:
    """Stacked model inputs; ``target`` is only needed for the loss."""

    x_hist: np.ndarray  # (B, 2h) per-frame displacements
    cv_mean: np.ndarray  # (B, horizon, 2)
    edge_in: np.ndarray  # (B, J, 4) relative position ++ relative velocity
    adjacency: np.ndarray  # (B, J)
    cur_pos: np.ndarray  # (B, 2)
    cur_vel: np.ndarray  # (B, 2)
    target: np.ndarray | None = None  # (B, horizon, 2)

    def __len__(self) -> int:
        return len(self.x_hist)

    def subset(self, idx: np.ndarray) -> "Batch":
        return Batch(self.x_hist[idx], self.cv_mean[idx], self.edge_in[idx], self.adjacency[idx],
                     self.cur_pos[idx], self.cur_vel[idx], None if self.target is None else self.target[idx])

    def masked(self, static: np.ndarray, keep_edges: np.ndarray) -> "Batch":
        """Rows in ``static`` get the motionless-history baseline; edges outside ``keep_edges`` are cut."""
        s = static[:, None]
        x_hist = np.where(s, 0.0, self.x_hist)
        cv_mean = np.where(s[:, :, None], self.cur_pos[:, None, :], self.cv_mean)
        edge_in = self.edge_in.copy()
        edge_in[static, :, 2:] += self.cur_vel[static, None, :]
        cur_vel = np.where(s, 0.0, self.cur_vel)
        adj = self.adjacency * keep_edges
        return Batch(x_hist, cv_mean, edge_in, adj, self.cur_pos, cur_vel, self.target)


def stack_inputs(inputs: Sequence[ModelInputs], targets: Sequence[np.ndarray] | None = None) -> Batch:
    J = max(len(x.adjacency) for x in inputs)
    B = len(inputs)
    first = inputs[0]
    x_hist = np.empty((B, 2 * len(first.hist_vel)))
    cv = np.empty((B, first.horizon, 2))
    edge_in = np.zeros((B, J, 4))
    adj = np.zeros((B, J))
    cur_pos = np.empty((B, 2))
    cur_vel = np.empty((B, 2))
    for b, x in enumerate(inputs):
        cur_pos[b], cur_vel[b] = x.cur_pos, x.cur_vel
        x_hist[b] = (x.hist_vel * x.dt).ravel()
        cv[b] = _cv_means(x.cur_pos, x.cur_vel, x.dt, x.horizon)
        n = len(x.adjacency)
        edge_in[b, :n, :2] = x.nb_pos - x.cur_pos
        edge_in[b, :n, 2:] = x.nb_vel - x.cur_vel
        adj[b, :n] = x.adjacency
    target = None if targets is None else np.stack([np.asarray(y, dtype=float) for y in targets])
    return Batch(x_hist, cv, edge_in, adj, cur_pos, cur_vel, target)


def _forward(params: ModelParams, batch: Batch) -> tuple[np.ndarray, np.ndarray, dict]:
    p = params.arrays
    H = params.dims.horizon
    F = batch.x_hist @ p["hist_W"].T + p["hist_b"]
    h1 = np.tanh(batch.edge_in @ p["edge_W1"].T + p["edge_b1"])
    E = h1 @ p["edge_W2"].T + p["edge_b2"]
    count = batch.adjacency.sum(axis=1)
    inv = np.divide(1.0, count, out=np.zeros_like(count), where=count > 0)
    Ebar = aggregate_edges(E, batch.adjacency)
    z = np.concatenate([F, Ebar], axis=1)
    h2 = np.tanh(z @ p["dec_W1"].T + p["dec_b1"])
    out = h2 @ p["dec_W2"].T + p["dec_b2"]
    B = len(out)
    means = batch.cv_mean + out[:, : 2 * H].reshape(B, H, 2)
    raw_var = np.exp(out[:, 2 * H :].reshape(B, H, 2))
    var = raw_var + VARIANCE_FLOOR
    cache = {"h1": h1, "inv": inv, "z": z, "h2": h2, "raw_var": raw_var}
    return means, var, cache


def gaussian_nll_terms(means: np.ndarray, var: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample, per-step NLL of a diagonal 2D Gaussian, shape ``(B, horizon)``."""
    r2 = (target - means) ** 2
    return 0.5 * (LOG_2PI + np.log(var) + r2 / var).sum(axis=-1)


def batch_nll(params: ModelParams, batch: Batch) -> float:
    means, var, _ = _forward(params, batch)
    return float(gaussian_nll_terms(means, var, batch.target).mean())


def nll_gradient(params: ModelParams, batch: Batch) -> tuple[float, ModelParams]:
    """Mean per-step NLL over the batch and its exact gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    p = params.arrays
    H = params.dims.horizon
    means, var, c = _forward(params, batch)
    loss = float(gaussian_nll_terms(means, var, batch.target).mean())
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    B = len(batch)
    scale = 1.0 / (B * H)
    resid = means - batch.target
    d_mean = scale * resid / var
    d_var = scale * 0.5 * (1.0 / var - resid**2 / var**2)
    d_logvar = d_var * c["raw_var"]
    d_out = np.concatenate([d_mean.reshape(B, 2 * H), d_logvar.reshape(B, 2 * H)], axis=1)

    g = {}
    g["dec_W2"] = d_out.T @ c["h2"]
    g["dec_b2"] = d_out.sum(axis=0)
    d_a2 = (d_out @ p["dec_W2"]) * (1.0 - c["h2"] ** 2)
    g["dec_W1"] = d_a2.T @ c["z"]
    g["dec_b1"] = d_a2.sum(axis=0)
    d_z = d_a2 @ p["dec_W1"]
    d_f = params.dims.d_f
    d_F, d_Ebar = d_z[:, :d_f], d_z[:, d_f:]
    g["hist_W"] = d_F.T @ batch.x_hist
    g["hist_b"] = d_F.sum(axis=0)
    d_E = (batch.adjacency * c["inv"][:, None])[:, :, None] * d_Ebar[:, None, :]
    g["edge_W2"] = np.einsum("bjf,bje->fe", d_E, c["h1"])
    g["edge_b2"] = d_E.sum(axis=(0, 1))
    d_a1 = (d_E @ p["edge_W2"]) * (1.0 - c["h1"] ** 2)
    g["edge_W1"] = np.einsum("bje,bjk->ek", d_a1, batch.edge_in)
    g["edge_b1"] = d_a1.sum(axis=(0, 1))
    for name, grad in g.items():
        if not np.isfinite(grad).all():
            raise NonFiniteLoss(f"non-finite gradient for {name}")
    return loss, ModelParams(params.dims, g)


@dataclass(frozen=True, eq=False)
class SocialPredictor:
    """Residual social encoder-decoder: constant-velocity means plus a learned offset."""

    params: ModelParams
    radius: float

    kind = "social"

    @property
    def h(self) -> int:
        return self.params.dims.h

    @property
    def horizon(self) -> int:
        return self.params.dims.horizon

    def predict_inputs(self, inputs: ModelInputs) -> PredictiveDistribution:
        return self.predict_many([inputs])[0]

    def predict_many(self, inputs: Sequence[ModelInputs]) -> list[PredictiveDistribution]:
        means, var, _ = _forward(self.params, stack_inputs(inputs))
        return [PredictiveDistribution.gaussian(m, v) for m, v in zip(means, var)]


Predictor = ConstantVelocityPredictor | SocialPredictor


def predict_many(model: Predictor, inputs: Sequence[ModelInputs]) -> list[PredictiveDistribution]:
    if isinstance(model, SocialPredictor):
        return model.predict_many(inputs)
    return [model.predict_inputs(x) for x in inputs]


def predict(model: Predictor, scene: Scene, query: PredictionQuery, mask: FeatureMask | None = None
            ) -> PredictiveDistribution:
    """The predictor contract: a distribution over the target's future under ``mask``."""
    if mask is None:
        mask = FeatureMask.full(scene.n_max)
    row = neighbors_of(scene, query, model.radius)
    return model.predict_inputs(apply_mask(scene, query, row, mask, model.radius))


# --------------------------------------------------------------------------- training


def build_batch(dataset: Dataset, queries: Sequence[PredictionQuery], radius: float) -> Batch:
    """Full-mask training batch for ``queries``."""
    inputs, targets = [], []
    for q in queries:
        scene = dataset.scenes[q.scene_index]
        row = neighbors_of(scene, q, radius)
        inputs.append(apply_mask(scene, q, row, FeatureMask.full(scene.n_max)))
        targets.append(future_positions(scene, q))
    return stack_inputs(inputs, targets)


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 3e-3
    epochs: int = 60
    batch_size: int = 64
    seed: int = 0
    clip_norm: float = 5.0
    optimizer: str = "adam"
    history_dropout: float = 0.25
    neighbor_dropout: float = 0.5
    weight_decay: float = 0.0
    final_lr_fraction: float = 0.05


def _clip(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad


def train(params: ModelParams, batch: Batch, hyper: TrainHyper, history: list | None = None) -> ModelParams:
    """Mini-batch gradient descent on the mean per-step NLL.

    Each step's gradient is clipped to ``hyper.clip_norm`` in global L2 norm
    before the update. ``optimizer`` is ``"sgd"`` or ``"adam"``. When
    ``history`` is given, the full-batch NLL after every epoch is appended.

    ``history_dropout`` / ``neighbor_dropout`` train on random coalitions:
    each sample's history is replaced by the static baseline and each edge
    is cut with the given probabilities, so the masked inputs seen during
    attribution are in-distribution.
    """
    if len(batch) == 0:
        raise ValueError("training needs at least one query")
    if hyper.optimizer not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {hyper.optimizer!r}")
    rng = np.random.default_rng(hyper.seed)
    dims = params.dims
    theta = params.to_vector().copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for epoch in range(hyper.epochs):
        # linear decay from learning_rate to learning_rate * final_lr_fraction
        frac = epoch / max(1, hyper.epochs - 1)
        lr = hyper.learning_rate * (1.0 - (1.0 - hyper.final_lr_fraction) * frac)
        order = rng.permutation(len(batch))
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            sub = batch.subset(idx)
            if hyper.history_dropout > 0 or hyper.neighbor_dropout > 0:
                static = rng.random(len(sub)) < hyper.history_dropout
                keep = rng.random(sub.adjacency.shape) >= hyper.neighbor_dropout
                sub = sub.masked(static, keep)
            _, grad = nll_gradient(ModelParams.from_vector(dims, theta), sub)
            g = _clip(grad.to_vector(), hyper.clip_norm)
            if hyper.weight_decay:
                g = g + hyper.weight_decay * theta
            step += 1
            if hyper.optimizer == "sgd":
                theta = theta - lr * g
            else:
                m1 = beta1 * m1 + (1 - beta1) * g
                m2 = beta2 * m2 + (1 - beta2) * g * g
                m1_hat = m1 / (1 - beta1**step)
                m2_hat = m2 / (1 - beta2**step)
                theta = theta - lr * m1_hat / (np.sqrt(m2_hat) + eps)
        if history is not None:
            loss = batch_nll(ModelParams.from_vector(dims, theta), batch)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"training diverged: loss {loss}")
            history.append(loss)
    return ModelParams.from_vector(dims, theta)


# --------------------------------------------------------------------------- checkpoints


def save_checkpoint(model: Predictor, path: str | os.PathLike, hyper: TrainHyper | None = None,
                    dt: float | None = None) -> None:
    doc: dict = {"format_version": CHECKPOINT_VERSION, "model": model.kind, "radius": model.radius}
    if isinstance(model, SocialPredictor):
        d = model.params.dims
        doc["dims"] = {"h": d.h, "horizon": d.horizon, "d_f": d.d_f, "d_e": d.d_e, "d_dec": d.d_dec}
        doc["weights"] = {k: model.params[k].ravel().tolist() for k in _param_shapes(d)}
    else:
        doc["dims"] = {"h": model.h, "horizon": model.horizon}
        doc["sigma0"] = model.sigma0
    if dt is not None:
        doc["dt"] = dt
    if hyper is not None:
        doc["hyper"] = {
            "learning_rate": hyper.learning_rate, "epochs": hyper.epochs, "batch_size": hyper.batch_size,
            "seed": hyper.seed, "clip_norm": hyper.clip_norm, "optimizer": hyper.optimizer,
            "history_dropout": hyper.history_dropout, "neighbor_dropout": hyper.neighbor_dropout,
            "weight_decay": hyper.weight_decay, "final_lr_fraction": hyper.final_lr_fraction,
        }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path: str | os.PathLike) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    radius = float(doc["radius"])
    dims = doc["dims"]
    if doc["model"] == ConstantVelocityPredictor.kind:
        return ConstantVelocityPredictor(int(dims["h"]), int(dims["horizon"]), radius, float(doc["sigma0"]))
    if doc["model"] == SocialPredictor.kind:
        d = Dims(int(dims["h"]), int(dims["horizon"]), int(dims["d_f"]), int(dims["d_e"]), int(dims["d_dec"]))
        arrays = {k: np.asarray(doc["weights"][k], dtype=float) for k in _param_shapes(d)}
        return SocialPredictor(ModelParams(d, arrays), radius)
    raise ValueError(f"unknown model kind {doc['model']!r}")
