import numpy as np
import pytest

from traj_shapley.scene import AgentTrack, AgentType, Dataset, Scene, derive_kinematics
from traj_shapley.synth import SynthConfig, generate_dataset


def make_scene(positions, dt=0.4, n_max=None, present=None, scene_id="s"):
    """Scene from an ``(n, T, 2)`` position array, kinematics derived."""
    positions = np.asarray(positions, dtype=float)
    n, T = positions.shape[:2]
    if present is None:
        present = np.ones((n, T), dtype=bool)
    zeros = np.zeros((T, 2))
    tracks = [AgentTrack(a, AgentType.PEDESTRIAN, np.where(present[a][:, None], positions[a], 0.0), zeros, zeros,
                         present[a]) for a in range(n)]
    scene = derive_kinematics(Scene(scene_id, dt, tuple(tracks), n))
    return scene.padded(n_max or n)


def make_dataset(*scenes):
    return Dataset(tuple(scenes), scenes[0].n_max, "test")


def straight_line(start, velocity, T, dt=0.4):
    k = np.arange(T)[:, None]
    return np.asarray(start, float) + k * dt * np.asarray(velocity, float)


@pytest.fixture(scope="session")
def small_corpus():
    dataset, labels = generate_dataset(SynthConfig(num_scenes=6, agents_per_scene=6, steps=16, seed=3))
    return dataset, labels
