"""Synthetic social-force corpora with known influencers.

Each agent is pulled toward a private goal and pushed away from every agent
inside the interaction radius. Goals glide at a per-agent constant velocity
and agents start in the resulting steady state, so without repulsion every
agent is an independent, stationary process: neighbors then carry no
information about a target's future, not even through the time since the
scene started or through the target's position in the box. Because the
repulsion law is known, the set of agents that actually influenced a target
at every frame is recorded as ground truth.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from typing import Dict, List

import numpy as np

from .scene import AgentTrack, AgentType, Dataset, Scene, derive_kinematics

BOX_SIZE = 20.0  # m
GOAL_SPEED = (0.8, 1.8)  # m/s, range of per-agent goal speeds
EPS_DIST2 = 1e-6  # m^2

# stream tags for counter-based seeding
_INIT_STREAM = 0
_NOISE_STREAM = 1

# labels[scene_id][target_id][frame] -> sorted influencer ids
Labels = Dict[str, Dict[int, Dict[int, List[int]]]]


@dataclass(frozen=True)
class SynthConfig:
    num_scenes: int = 120
    agents_per_scene: int = 10
    steps: int = 20
    dt: float = 0.4
    goal_gain: float = 0.5
    repulsion_gain: float = 3.0
    interaction_radius: float = 4.0
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.goal_gain < 0 or self.repulsion_gain < 0 or self.noise_std < 0:
            raise ValueError("gains and noise_std must be non-negative")
        if not self.interaction_radius > 0:
            raise ValueError("interaction_radius must be positive")
        if self.dt <= 0 or self.steps < 1 or self.num_scenes < 0 or self.agents_per_scene < 1:
            raise ValueError("invalid dt / steps / num_scenes / agents_per_scene")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), *key]))


def repulsion(positions: np.ndarray, gain: float, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Summed repulsive acceleration per agent and the boolean in-radius matrix."""
    diff = positions[:, None, :] - positions[None, :, :]  # i - j
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    within = d2 <= radius * radius
    np.fill_diagonal(within, False)
    if gain == 0.0:
        return np.zeros_like(positions), within
    terms = gain * diff / np.maximum(d2, EPS_DIST2)[..., None]
    terms[~within] = 0.0
    return terms.sum(axis=1), within


def social_force_step(
    positions: np.ndarray,
    velocities: np.ndarray,
    goals: np.ndarray,
    config: SynthConfig,
    noise: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance all agents by one frame.

    ``noise`` is the standard-normal draw per agent (shape ``(n, 2)``); it is
    scaled by ``config.noise_std`` here. ``None`` means no noise.
    """
    rep, _ = repulsion(positions, config.repulsion_gain, config.interaction_radius)
    force = config.goal_gain * (goals - positions - velocities) + rep
    new_vel = velocities + config.dt * force
    if noise is not None:
        new_vel = new_vel + config.noise_std * noise
    new_pos = positions + config.dt * new_vel
    return new_pos, new_vel


def initial_conditions(config: SynthConfig, scene_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Start positions (uniform in the box) and per-agent goal velocities (isotropic)."""
    n = config.agents_per_scene
    rng = _rng(config.seed, _INIT_STREAM, scene_index)
    pos = rng.uniform(0.0, BOX_SIZE, size=(n, 2))
    heading = rng.uniform(0.0, 2.0 * np.pi, size=n)
    speed = rng.uniform(*GOAL_SPEED, size=n)
    return pos, speed[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)


def goals_at(start: np.ndarray, goal_velocity: np.ndarray, frame: int, dt: float) -> np.ndarray:
    # goal - pos = v is the fixed point of the goal term, so the goal leads
    # the start by v * 1 s and then moves with v
    return start + goal_velocity * (frame * dt + 1.0)


def frame_noise(config: SynthConfig, scene_index: int, frame: int) -> np.ndarray:
    """Standard-normal draws per agent, keyed by (seed, scene, frame, agent)."""
    return np.stack([_rng(config.seed, _NOISE_STREAM, scene_index, frame, a).standard_normal(2)
                     for a in range(config.agents_per_scene)])


def simulate_scene(config: SynthConfig, scene_index: int, interactive: bool) -> tuple[Scene, dict]:
    if not interactive:
        config = replace(config, repulsion_gain=0.0)
    n, T = config.agents_per_scene, config.steps
    start, goal_vel = initial_conditions(config, scene_index)
    pos, vel = start, goal_vel.copy()
    traj = np.empty((T, n, 2))
    traj[0] = pos
    for k in range(1, T):
        goals = goals_at(start, goal_vel, k - 1, config.dt)
        pos, vel = social_force_step(pos, vel, goals, config, frame_noise(config, scene_index, k))
        traj[k] = pos
    labels: dict[int, dict[int, list[int]]] = {a: {} for a in range(n)}
    for k in range(T):
        if config.repulsion_gain > 0:
            _, within = repulsion(traj[k], 0.0, config.interaction_radius)
        else:
            within = np.zeros((n, n), dtype=bool)
        for a in range(n):
            labels[a][k] = [int(j) for j in np.flatnonzero(within[a])]
    present = np.ones(T, dtype=bool)
    zeros = np.zeros((T, 2))
    tracks = tuple(AgentTrack(a, AgentType.PEDESTRIAN, traj[:, a], zeros, zeros, present) for a in range(n))
    scene = derive_kinematics(Scene(f"scene_{scene_index:04d}", config.dt, tracks, n))
    return scene, labels


def generate_dataset(config: SynthConfig, interactive: bool = True, workers: int = 1) -> tuple[Dataset, Labels]:
    """Simulate ``config.num_scenes`` scenes; output depends only on ``config``.

    With ``interactive=False`` the repulsion gain is forced to zero, which
    yields an interaction-free control corpus with empty influencer sets.
    """
    indices = range(config.num_scenes)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(simulate_scene, [config] * len(indices), indices, [interactive] * len(indices)))
    else:
        results = [simulate_scene(config, s, interactive) for s in indices]
    kind = "interactive" if interactive else "interaction-free"
    dataset = Dataset(tuple(s for s, _ in results), config.agents_per_scene, f"synth:{kind}:seed={config.seed}")
    labels = {s.scene_id: lab for s, lab in results}
    return dataset, labels


def write_labels(labels: Labels, path: str | os.PathLike) -> None:
    doc = {
        sid: {str(a): {str(k): v for k, v in frames.items()} for a, frames in agents.items()}
        for sid, agents in labels.items()
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=False, separators=(",", ":"))
        fh.write("\n")


def read_labels(path: str | os.PathLike) -> Labels:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return {
        sid: {int(a): {int(k): list(v) for k, v in frames.items()} for a, frames in agents.items()}
        for sid, agents in doc.items()
    }
