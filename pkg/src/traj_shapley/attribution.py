"""Shapley attribution of predictor performance.

Players are the target's own history plus every neighbor connected at the
query time (and optionally injected random agents). The payout of a
coalition is the *negative* loss of the prediction made with only those
players present, so a positive Shapley value means the feature helps.

Dropped features follow a static, non-interacting baseline: a missing
history becomes a motionless trajectory, a missing neighbor loses its edge.
The marginal variant instead swaps a missing neighbor for random tracks
from other scenes and averages.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientPool, TooManyFeatures
from .metrics import LossKind, evaluate_loss
from .predictor import FeatureMask, InjectedAgent, Predictor, apply_mask, predict_many
from .scene import Dataset, PredictionQuery, Scene, future_positions, iter_windows, neighbors_of

DEFAULT_EXACT_CAP = 12
DEFAULT_REPLACEMENTS = 10

ValueFunction = Callable[[frozenset], float]


class FeatureKind(str, enum.Enum):
    HISTORY = "history"
    NEIGHBOR = "neighbor"
    INJECTED = "injected"


@dataclass(frozen=True, eq=False)
class Feature:
    kind: FeatureKind
    agent_id: int
    slot: int = -1  # neighbor: track index in the scene
    agent: InjectedAgent | None = None  # injected only


@dataclass(frozen=True, eq=False)
class FeatureSpec:
    """Ordered players; index 0 is always the target history."""

    features: tuple[Feature, ...]

    def __post_init__(self):
        if not self.features or self.features[0].kind is not FeatureKind.HISTORY:
            raise ValueError("feature 0 must be the target history")
        if sum(f.kind is FeatureKind.HISTORY for f in self.features) != 1:
            raise ValueError("exactly one history feature is allowed")
        slots = [f.slot for f in self.features if f.kind is FeatureKind.NEIGHBOR]
        if len(set(slots)) != len(slots):
            raise ValueError("neighbor features must reference distinct agents")

    def __len__(self) -> int:
        return len(self.features)

    @classmethod
    def for_query(cls, scene: Scene, query: PredictionQuery, radius: float) -> "FeatureSpec":
        row = neighbors_of(scene, query, radius)
        target_id = scene.tracks[query.target].agent_id
        feats = [Feature(FeatureKind.HISTORY, target_id)]
        feats += [Feature(FeatureKind.NEIGHBOR, scene.tracks[j].agent_id, int(j)) for j in np.flatnonzero(row)]
        return cls(tuple(feats))

    def indices(self, kind: FeatureKind) -> list[int]:
        return [k for k, f in enumerate(self.features) if f.kind is kind]

    def with_injected(self, agents: Sequence[InjectedAgent]) -> "FeatureSpec":
        start = len(self.indices(FeatureKind.INJECTED))
        extra = tuple(Feature(FeatureKind.INJECTED, -(start + k + 1), agent=a) for k, a in enumerate(agents))
        return FeatureSpec(self.features + extra)


@dataclass(eq=False)
class LocalAttribution:
    query: PredictionQuery
    kinds: list[str]
    agent_ids: list[int]
    phi: np.ndarray
    method: str
    nu_empty: float
    nu_full: float
    evaluations: int
    stderr: np.ndarray | None = None

    def values(self, kind: FeatureKind | str) -> np.ndarray:
        kind = FeatureKind(kind).value
        return np.array([v for k, v in zip(self.kinds, self.phi) if k == kind])

    def to_json(self) -> dict:
        phi = []
        for k, (kind, aid, value) in enumerate(zip(self.kinds, self.agent_ids, self.phi)):
            se = None
            if self.stderr is not None and math.isfinite(self.stderr[k]):
                se = float(self.stderr[k])
            phi.append({"kind": kind, "agent_id": int(aid), "value": float(value), "stderr": se})
        return {
            "query": self.query.to_dict(),
            "method": self.method,
            "phi": phi,
            "nu_empty": float(self.nu_empty),
            "nu_full": float(self.nu_full),
            "evaluations": int(self.evaluations),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LocalAttribution":
        phi = doc["phi"]
        stderr = None
        if any(p.get("stderr") is not None for p in phi):
            stderr = np.array([math.nan if p.get("stderr") is None else p["stderr"] for p in phi])
        return cls(
            PredictionQuery.from_dict(doc["query"]),
            [p["kind"] for p in phi],
            [int(p["agent_id"]) for p in phi],
            np.array([float(p["value"]) for p in phi]),
            doc["method"],
            float(doc["nu_empty"]),
            float(doc["nu_full"]),
            int(doc["evaluations"]),
            stderr,
        )


# --------------------------------------------------------------------------- generic engine


class _Counted:
    """Wraps a set function, optionally memoizing, and counts real evaluations."""

    def __init__(self, value: ValueFunction, memoize: bool):
        self.value = value
        self.memoize = memoize
        self.cache: dict[int, float] = {}
        self.evaluations = 0

    def __call__(self, mask: int) -> float:
        if self.memoize and mask in self.cache:
            return self.cache[mask]
        self.evaluations += 1
        v = float(self.value(frozenset(k for k in range(mask.bit_length()) if mask >> k & 1)))
        if self.memoize:
            self.cache[mask] = v
        return v


def _insert_bit(mask: int, i: int) -> int:
    low = mask & ((1 << i) - 1)
    return ((mask >> i) << (i + 1)) | low


def exact_shapley(value: ValueFunction, n: int, memoize: bool = True) -> tuple[np.ndarray, float, float, int]:
    """Shapley values by full subset enumeration.

    Returns ``(phi, v(empty), v(all), evaluations)``. With memoization every
    subset is evaluated once (``2**n`` calls); without it each marginal
    term re-evaluates both coalitions.
    """
    f = _Counted(value, memoize)
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        by_size: list[list[float]] = [[] for _ in range(n)]
        for rest in range(1 << (n - 1)):
            s = _insert_bit(rest, i)
            by_size[rest.bit_count()].append(f(s | bit) - f(s))
        # the weight 1/(n C(n-1, s)) is applied as "mean within each size, then
        # mean over sizes"; with exact summation an additive game returns its
        # weights unchanged instead of up to an ulp off
        means = [math.fsum(d) / math.comb(n - 1, k) for k, d in enumerate(by_size)]
        phi[i] = math.fsum(means) / n
    full = (1 << n) - 1
    return phi, f(0), f(full), f.evaluations


def permutation_shapley(
    value: ValueFunction, n: int, num_permutations: int, seed: int
) -> tuple[np.ndarray, np.ndarray, float, float, int]:
    """Monte Carlo Shapley values from uniformly random player orderings.

    Returns ``(phi_hat, stderr, v(empty), v(all), evaluations)`` where the
    standard error is the sample standard deviation of the marginal
    contributions over ``sqrt(num_permutations)`` (NaN for a single draw).
    """
    if num_permutations < 1:
        raise ValueError("num_permutations must be >= 1")
    f = _Counted(value, memoize=True)
    rng = np.random.default_rng(seed)
    contrib = np.empty((num_permutations, n))
    empty = f(0)
    for r in range(num_permutations):
        mask, prev = 0, empty
        for i in rng.permutation(n):
            mask |= 1 << int(i)
            cur = f(mask)
            contrib[r, i] = cur - prev
            prev = cur
    phi = contrib.mean(axis=0)
    if num_permutations > 1:
        stderr = contrib.std(axis=0, ddof=1) / math.sqrt(num_permutations)
    else:
        stderr = np.full(n, math.nan)
    return phi, stderr, empty, f((1 << n) - 1), f.evaluations


# --------------------------------------------------------------------------- coalitions


def coalition_mask(spec: FeatureSpec, subset: frozenset, n_max: int) -> FeatureMask:
    bits = np.zeros(n_max, dtype=bool)
    injected = []
    for k in subset:
        feat = spec.features[k]
        if feat.kind is FeatureKind.NEIGHBOR:
            bits[feat.slot] = True
        elif feat.kind is FeatureKind.INJECTED:
            injected.append((k, feat.agent))
    injected.sort(key=lambda item: item[0])
    return FeatureMask(0 in subset, bits, tuple(a for _, a in injected))


def nu(model: Predictor, scene: Scene, query: PredictionQuery, spec: FeatureSpec, subset, loss: LossKind) -> float:
    """Payout of one coalition: negative loss with only ``subset`` present."""
    return _BaselineGame(model, scene, query, spec, loss)(frozenset(subset))


class _BaselineGame:
    def __init__(self, model: Predictor, scene: Scene, query: PredictionQuery, spec: FeatureSpec, loss: LossKind):
        self.model, self.scene, self.query, self.spec, self.loss = model, scene, query, spec, loss
        self.row = neighbors_of(scene, query, model.radius)
        self.truth = future_positions(scene, query)

    def inputs(self, subset: frozenset, replaced=()):
        mask = coalition_mask(self.spec, subset, self.scene.n_max)
        if replaced:
            mask = FeatureMask(mask.include_target_history, mask.neighbor_included, mask.injected, tuple(replaced))
        return apply_mask(self.scene, self.query, self.row, mask, self.model.radius)

    def __call__(self, subset: frozenset) -> float:
        dist = self.model.predict_inputs(self.inputs(subset))
        return -evaluate_loss(self.loss, dist, self.truth, self.query)


class _MarginalGame(_BaselineGame):
    """Missing neighbors are swapped for random foreign tracks, averaged over draws."""

    def __init__(self, model, scene, query, spec, loss, replacements: dict[int, list[InjectedAgent]]):
        super().__init__(model, scene, query, spec, loss)
        self.replacements = replacements
        self.draws = len(next(iter(replacements.values()))) if replacements else 1

    def __call__(self, subset: frozenset) -> float:
        missing = [k for k in self.spec.indices(FeatureKind.NEIGHBOR) if k not in subset]
        if not missing:
            return super().__call__(subset)
        batch = []
        for r in range(self.draws):
            replaced = tuple((self.spec.features[k].slot, self.replacements[k][r]) for k in missing)
            batch.append(self.inputs(subset, replaced))
        dists = predict_many(self.model, batch)
        losses = [evaluate_loss(self.loss, d, self.truth, self.query) for d in dists]
        return -float(np.mean(losses))


def _result(query, spec, phi, method, empty, full, evals, stderr=None) -> LocalAttribution:
    return LocalAttribution(
        query,
        [f.kind.value for f in spec.features],
        [f.agent_id for f in spec.features],
        np.asarray(phi, dtype=float),
        method,
        empty,
        full,
        evals,
        None if stderr is None else np.asarray(stderr, dtype=float),
    )


def shapley_exact(
    model: Predictor,
    scene: Scene,
    query: PredictionQuery,
    spec: FeatureSpec,
    loss: LossKind,
    exact_cap: int = DEFAULT_EXACT_CAP,
    memoize: bool = True,
) -> LocalAttribution:
    if len(spec) > exact_cap:
        raise TooManyFeatures(f"{len(spec)} features exceed the exact cap {exact_cap}; use shapley_sampled")
    phi, empty, full, evals = exact_shapley(_BaselineGame(model, scene, query, spec, loss), len(spec), memoize)
    return _result(query, spec, phi, "exact", empty, full, evals)


def shapley_sampled(
    model: Predictor,
    scene: Scene,
    query: PredictionQuery,
    spec: FeatureSpec,
    loss: LossKind,
    num_permutations: int,
    seed: int,
) -> LocalAttribution:
    game = _BaselineGame(model, scene, query, spec, loss)
    phi, se, empty, full, evals = permutation_shapley(game, len(spec), num_permutations, _query_seed(seed, query))
    return _result(query, spec, phi, "permutation", empty, full, evals, se)


# --------------------------------------------------------------------------- random tracks


def _query_seed(seed: int, query: PredictionQuery, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & (2**64 - 1), query.scene_index, query.target, query.t, *extra])


class TrackPool:
    """Every real-agent window of ``h + horizon`` frames in a dataset."""

    def __init__(self, dataset: Dataset, h: int, horizon: int):
        self.dataset = dataset
        self.h = h
        self.length = h + horizon
        self.windows = np.array(list(iter_windows(dataset, self.length)), dtype=np.int64).reshape(-1, 3)

    def available(self, exclude_scene: int | None) -> int:
        """Number of distinct real tracks with at least one usable window."""
        rows = self.windows if exclude_scene is None else self.windows[self.windows[:, 0] != exclude_scene]
        return len({(int(s), int(a)) for s, a, _ in rows})

    def require(self, count: int, exclude_scene: int | None) -> None:
        have = self.available(exclude_scene)
        if have < count:
            raise InsufficientPool(f"pool has {have} usable tracks, need {count}")

    def draw(self, rng: np.random.Generator, exclude_scene: int | None) -> InjectedAgent:
        """A random window, aligned so that its frame ``h - 1`` matches the query time."""
        candidates = self.windows if exclude_scene is None else self.windows[self.windows[:, 0] != exclude_scene]
        s, a, start = candidates[rng.integers(len(candidates))]
        track = self.dataset.scenes[s].tracks[a].window(int(start), int(start) + self.length)
        return InjectedAgent(track, self.h - 1)


def inject_random_agents(
    scene: Scene,
    query: PredictionQuery,
    spec: FeatureSpec,
    pool: TrackPool,
    count: int,
    seed: int,
    radius: float,
    exclude_scene: int | None = None,
) -> FeatureSpec:
    """Append ``count`` foreign agents placed uniformly within ``radius`` of the target at time ``t``."""
    if count <= 0:
        return spec
    pool.require(count, exclude_scene)
    rng = np.random.default_rng(_query_seed(seed, query, 1))
    target_pos = scene.tracks[query.target].positions[query.t]
    agents = []
    for _ in range(count):
        src = pool.draw(rng, exclude_scene)
        r = radius * math.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        goal = target_pos + r * np.array([math.cos(theta), math.sin(theta)])
        agents.append(InjectedAgent(src.track.translated(goal - src.position), src.align))
    return spec.with_injected(agents)


def shapley_marginal(
    model: Predictor,
    scene: Scene,
    query: PredictionQuery,
    spec: FeatureSpec,
    loss: LossKind,
    pool: TrackPool,
    replacements: int = DEFAULT_REPLACEMENTS,
    seed: int = 0,
    exclude_scene: int | None = None,
    exact_cap: int = DEFAULT_EXACT_CAP,
    num_permutations: int = 200,
) -> LocalAttribution:
    """Randomization variant: missing neighbors become random time-aligned foreign tracks.

    Each neighbor gets ``replacements`` fixed draws shared by all coalitions.
    The history feature still uses the static baseline.
    """
    pool.require(replacements, exclude_scene)
    rng = np.random.default_rng(_query_seed(seed, query, 2))
    draws = {k: [pool.draw(rng, exclude_scene) for _ in range(replacements)]
             for k in spec.indices(FeatureKind.NEIGHBOR)}
    game = _MarginalGame(model, scene, query, spec, loss, draws)
    if len(spec) <= exact_cap:
        phi, empty, full, evals = exact_shapley(game, len(spec))
        return _result(query, spec, phi, "marginal", empty, full, evals)
    phi, se, empty, full, evals = permutation_shapley(game, len(spec), num_permutations, _query_seed(seed, query, 3))
    return _result(query, spec, phi, "marginal", empty, full, evals, se)


# --------------------------------------------------------------------------- dispatch


@dataclass(frozen=True)
class AttributionSettings:
    method: str = "exact"  # exact | permutation | marginal
    loss: LossKind = field(default_factory=LossKind)
    num_permutations: int = 200
    replacements: int = DEFAULT_REPLACEMENTS
    exact_cap: int = DEFAULT_EXACT_CAP
    inject: int | str = 0  # count, or "match" for one random agent per real neighbor
    seed: int = 0
    injection_seed: int = 0
    marginal_seed: int = 0

    def __post_init__(self):
        if self.method not in ("exact", "permutation", "marginal"):
            raise ValueError(f"unknown attribution method {self.method!r}")
        if isinstance(self.inject, str):
            if self.inject != "match":
                raise ValueError(f"inject must be a count or 'match', got {self.inject!r}")
        elif self.inject < 0:
            raise ValueError("inject must be >= 0")

    def injection_count(self, spec: FeatureSpec) -> int:
        if self.inject == "match":
            return len(spec.indices(FeatureKind.NEIGHBOR))
        return int(self.inject)


def attribute(model: Predictor, dataset: Dataset, query: PredictionQuery, settings: AttributionSettings,
              pool: TrackPool | None = None) -> LocalAttribution:
    """Attribute one query; foreign tracks are drawn from other scenes of ``pool``."""
    scene = dataset.scenes[query.scene_index]
    spec = FeatureSpec.for_query(scene, query, model.radius)
    count = settings.injection_count(spec)
    if count or settings.method == "marginal":
        if pool is None:
            pool = TrackPool(dataset, query.h, query.horizon)
        exclude = query.scene_index if pool.dataset is dataset else None
    if count:
        spec = inject_random_agents(scene, query, spec, pool, count, settings.injection_seed,
                                    model.radius, exclude)
    if settings.method == "marginal":
        return shapley_marginal(model, scene, query, spec, settings.loss, pool, settings.replacements,
                                settings.marginal_seed, exclude, settings.exact_cap, settings.num_permutations)
    if settings.method == "exact" and len(spec) <= settings.exact_cap:
        return shapley_exact(model, scene, query, spec, settings.loss, settings.exact_cap)
    return shapley_sampled(model, scene, query, spec, settings.loss, settings.num_permutations, settings.seed)


_WORKER_STATE: dict = {}


def _worker_init(model, dataset, settings, pool):
    _WORKER_STATE.update(model=model, dataset=dataset, settings=settings, pool=pool)


def _worker_run(query: PredictionQuery) -> LocalAttribution:
    s = _WORKER_STATE
    return attribute(s["model"], s["dataset"], query, s["settings"], s["pool"])


def attribute_all(model: Predictor, dataset: Dataset, queries: Sequence[PredictionQuery],
                  settings: AttributionSettings, workers: int = 1) -> list[LocalAttribution]:
    """Attribute many queries; results are returned in query order for any ``workers``."""
    pool = None
    if queries and (settings.inject or settings.method == "marginal"):
        pool = TrackPool(dataset, queries[0].h, queries[0].horizon)
    if workers <= 1 or len(queries) < 2:
        return [attribute(model, dataset, q, settings, pool) for q in queries]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                             initargs=(model, dataset, settings, pool)) as ex:
        return list(ex.map(_worker_run, queries, chunksize=max(1, len(queries) // (4 * workers))))
