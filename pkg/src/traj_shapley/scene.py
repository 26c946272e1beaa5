"""Scenes, tracks and prediction queries.

A scene stores every agent on a common, uniformly spaced frame grid. Tracks
are padded with dummy agents up to ``n_max`` so that all scenes of a dataset
share the same width. Frames are indexed from 0 inside a scene; the original
frame numbers survive as ``frame_start + k * frame_step`` for serialization.
"""

from __future__ import annotations

import enum
import io
import json
import math
import os
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import EmptyInput, MalformedLine, TooManyAgents


class AgentType(str, enum.Enum):
    PEDESTRIAN = "pedestrian"
    VEHICLE = "vehicle"
    OTHER = "other"
    DUMMY = "dummy"


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    present: bool


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float if a.dtype != bool else bool, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """One agent over the full frame range of its scene.

    ``positions``, ``velocities`` and ``accelerations`` have shape ``(T, 2)``;
    ``present`` has shape ``(T,)``. Absent frames hold exact zeros.
    """

    agent_id: int
    agent_type: AgentType
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        for name in ("positions", "velocities", "accelerations", "present"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.present)
        for name in ("positions", "velocities", "accelerations"):
            if getattr(self, name).shape != (n, 2):
                raise ValueError(f"{name} must have shape ({n}, 2)")

    @classmethod
    def dummy(cls, num_frames: int) -> "AgentTrack":
        zeros = np.zeros((num_frames, 2))
        return cls(-1, AgentType.DUMMY, zeros, zeros, zeros, np.zeros(num_frames, dtype=bool))

    @property
    def num_frames(self) -> int:
        return len(self.present)

    @property
    def is_dummy(self) -> bool:
        return self.agent_type is AgentType.DUMMY

    def state(self, frame: int) -> AgentState:
        return AgentState(
            self.positions[frame], self.velocities[frame], self.accelerations[frame], bool(self.present[frame])
        )

    @property
    def states(self) -> list[AgentState]:
        return [self.state(k) for k in range(self.num_frames)]

    def window(self, start: int, stop: int) -> "AgentTrack":
        """Sub-track over frames ``start .. stop - 1``."""
        return AgentTrack(
            self.agent_id,
            self.agent_type,
            self.positions[start:stop],
            self.velocities[start:stop],
            self.accelerations[start:stop],
            self.present[start:stop],
        )

    def translated(self, offset: np.ndarray) -> "AgentTrack":
        shift = np.where(self.present[:, None], np.asarray(offset, dtype=float)[None, :], 0.0)
        return AgentTrack(
            self.agent_id, self.agent_type, self.positions + shift, self.velocities, self.accelerations, self.present
        )


@dataclass(frozen=True, eq=False)
class Scene:
    scene_id: str
    dt: float
    tracks: tuple[AgentTrack, ...]
    n_real: int
    frame_start: int = 0
    frame_step: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_real > len(self.tracks):
            raise ValueError("n_real exceeds number of tracks")
        lengths = {t.num_frames for t in self.tracks}
        if len(lengths) > 1:
            raise ValueError("all tracks must share the same frame range")
        for k, track in enumerate(self.tracks):
            if track.is_dummy != (k >= self.n_real):
                raise ValueError("dummy tracks must come after all real tracks")

    @property
    def n_max(self) -> int:
        return len(self.tracks)

    @property
    def num_frames(self) -> int:
        return self.tracks[0].num_frames if self.tracks else 0

    @cached_property
    def positions(self) -> np.ndarray:
        return _frozen(np.stack([t.positions for t in self.tracks]))

    @cached_property
    def velocities(self) -> np.ndarray:
        return _frozen(np.stack([t.velocities for t in self.tracks]))

    @cached_property
    def present(self) -> np.ndarray:
        return _frozen(np.stack([t.present for t in self.tracks]))

    def frame_number(self, k: int) -> int:
        return self.frame_start + k * self.frame_step

    def with_tracks(self, tracks: Sequence[AgentTrack]) -> "Scene":
        return Scene(self.scene_id, self.dt, tuple(tracks), self.n_real, self.frame_start, self.frame_step)

    def padded(self, n_max: int) -> "Scene":
        """Same scene with dummy tracks appended up to ``n_max``."""
        if n_max < self.n_max:
            raise TooManyAgents(f"scene {self.scene_id!r} already has {self.n_max} tracks > n_max={n_max}")
        extra = [AgentTrack.dummy(self.num_frames) for _ in range(n_max - self.n_max)]
        return self.with_tracks(self.tracks + tuple(extra))


@dataclass(frozen=True)
class Dataset:
    scenes: tuple[Scene, ...]
    n_max: int
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(self.scenes))
        for s in self.scenes:
            if s.n_max != self.n_max:
                raise ValueError(f"scene {s.scene_id!r} has {s.n_max} tracks, expected {self.n_max}")

    def __len__(self) -> int:
        return len(self.scenes)


@dataclass(frozen=True, order=True)
class PredictionQuery:
    """Predict ``target`` in scene ``scene_index`` from frames ``t-h+1 .. t``
    over the future frames ``t+1 .. t+horizon``."""

    scene_index: int
    target: int
    t: int
    h: int
    horizon: int

    @property
    def history_frames(self) -> range:
        return range(self.t - self.h + 1, self.t + 1)

    @property
    def future_frames(self) -> range:
        return range(self.t + 1, self.t + self.horizon + 1)

    @property
    def window(self) -> range:
        return range(self.t - self.h + 1, self.t + self.horizon + 1)

    def to_dict(self) -> dict:
        return {"scene_index": self.scene_index, "target": self.target, "t": self.t, "h": self.h,
                "horizon": self.horizon}

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionQuery":
        return cls(int(d["scene_index"]), int(d["target"]), int(d["t"]), int(d["h"]), int(d["horizon"]))


# --------------------------------------------------------------------------- parsing


def _integral(token: str, line_number: int, what: str) -> int:
    try:
        value = float(token)
    except ValueError:
        raise MalformedLine(line_number, f"non-numeric {what} {token!r}") from None
    if not math.isfinite(value) or value != int(value):
        raise MalformedLine(line_number, f"{what} must be an integer, got {token!r}")
    return int(value)


def parse_scene_text(stream: TextIO | str, dt: float, n_max: int, scene_id: str = "scene") -> Scene:
    """Parse tab-separated ``frame, agent_id, x, y`` lines into a padded scene.

    Kinematics are left at zero; call :func:`derive_kinematics` afterwards.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows: dict[int, list[tuple[int, float, float, int]]] = {}
    for line_number, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split("\t")
        if len(tokens) != 4:
            raise MalformedLine(line_number, f"expected 4 tab-separated fields, got {len(tokens)}")
        frame = _integral(tokens[0], line_number, "frame")
        agent = _integral(tokens[1], line_number, "agent_id")
        try:
            x, y = float(tokens[2]), float(tokens[3])
        except ValueError:
            raise MalformedLine(line_number, "non-numeric coordinate") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise MalformedLine(line_number, "non-finite coordinate")
        rows.setdefault(agent, []).append((frame, x, y, line_number))
    if not rows:
        raise EmptyInput(f"scene {scene_id!r}: no data lines")
    if len(rows) > n_max:
        raise TooManyAgents(f"scene {scene_id!r}: {len(rows)} distinct agents > n_max={n_max}")

    for agent, obs in rows.items():
        frames = [o[0] for o in obs]
        for k in range(1, len(obs)):
            if frames[k] <= frames[k - 1]:
                raise MalformedLine(obs[k][3], f"frames of agent {agent} must be strictly ascending")
        if len(obs) > 1:
            step = frames[1] - frames[0]
            for k in range(2, len(obs)):
                if frames[k] - frames[k - 1] != step:
                    raise MalformedLine(obs[k][3], f"frames of agent {agent} are not an arithmetic sequence")
    first = min(o[0] for obs in rows.values() for o in obs)
    last = max(o[0] for obs in rows.values() for o in obs)
    offsets = {o[0] - first for obs in rows.values() for o in obs}
    frame_step = reduce(math.gcd, offsets, 0) or 1
    num_frames = (last - first) // frame_step + 1

    tracks = []
    zeros = np.zeros((num_frames, 2))
    for agent, obs in rows.items():  # dicts keep first-appearance order
        pos = np.zeros((num_frames, 2))
        present = np.zeros(num_frames, dtype=bool)
        for frame, x, y, _ in obs:
            k = (frame - first) // frame_step
            pos[k] = (x, y)
            present[k] = True
        tracks.append(AgentTrack(agent, AgentType.PEDESTRIAN, pos, zeros, zeros, present))
    scene = Scene(scene_id, float(dt), tuple(tracks), len(tracks), first, frame_step)
    return scene.padded(n_max)


def serialize_scene(scene: Scene) -> str:
    """Inverse of :func:`parse_scene_text` (positions rounded to 6 decimals)."""
    lines = []
    for k in range(scene.num_frames):
        for track in scene.tracks[: scene.n_real]:
            if track.present[k]:
                x, y = track.positions[k]
                lines.append(f"{scene.frame_number(k)}\t{track.agent_id}\t{x:.6f}\t{y:.6f}\n")
    return "".join(lines)


def derive_kinematics(scene: Scene) -> Scene:
    """Backward finite differences for velocity and acceleration.

    A frame whose predecessor is absent (including the first present frame)
    gets zero velocity; acceleration follows the same rule on velocities.
    """
    tracks = []
    for track in scene.tracks:
        if track.is_dummy:
            tracks.append(track)
            continue
        p, present = track.positions, track.present
        both = np.zeros_like(present)
        both[1:] = present[1:] & present[:-1]
        vel = np.zeros_like(p)
        vel[1:] = (p[1:] - p[:-1]) / scene.dt
        vel[~both] = 0.0
        acc = np.zeros_like(p)
        acc[1:] = (vel[1:] - vel[:-1]) / scene.dt
        acc[~both] = 0.0
        tracks.append(AgentTrack(track.agent_id, track.agent_type, p, vel, acc, present))
    return scene.with_tracks(tracks)


# --------------------------------------------------------------------------- datasets


def load_scene_file(path: str | os.PathLike, dt: float, n_max: int) -> Scene:
    scene_id = os.path.splitext(os.path.basename(path))[0]
    with open(path, encoding="utf-8") as fh:
        return derive_kinematics(parse_scene_text(fh, dt, n_max, scene_id))


def load_manifest(path: str | os.PathLike) -> Dataset:
    """Load a dataset from a JSON manifest ``{"scenes": [...], "dt": .., "n_max": ..}``.

    Scene paths are resolved relative to the manifest's directory.
    """
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    dt, n_max = float(manifest["dt"]), int(manifest["n_max"])
    scenes = [load_scene_file(os.path.join(base, p), dt, n_max) for p in manifest["scenes"]]
    return Dataset(tuple(scenes), n_max, manifest.get("source", str(path)))


def write_dataset(dataset: Dataset, out_dir: str | os.PathLike, manifest_name: str = "manifest.json") -> str:
    """Write one text file per scene plus a manifest; returns the manifest path."""
    scene_dir = os.path.join(out_dir, "scenes")
    os.makedirs(scene_dir, exist_ok=True)
    dts = {s.dt for s in dataset.scenes}
    if len(dts) > 1:
        raise ValueError("manifest format requires a single dt")
    rel_paths = []
    for scene in dataset.scenes:
        rel = os.path.join("scenes", f"{scene.scene_id}.txt")
        with open(os.path.join(out_dir, rel), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(serialize_scene(scene))
        rel_paths.append(rel)
    manifest = {"source": dataset.source, "dt": dts.pop() if dts else 1.0, "n_max": dataset.n_max,
                "scenes": rel_paths}
    path = os.path.join(out_dir, manifest_name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


# --------------------------------------------------------------------------- queries


def enumerate_queries(dataset: Dataset, h: int, horizon: int, stride: int = 1) -> list[PredictionQuery]:
    if h < 1 or horizon < 1 or stride < 1:
        raise ValueError("h, horizon and stride must all be >= 1")
    queries = []
    for s_idx, scene in enumerate(dataset.scenes):
        T = scene.num_frames
        for a_idx in range(scene.n_real):
            present = scene.tracks[a_idx].present
            for t in range(h - 1, T - horizon, stride):
                if present[t - h + 1 : t + horizon + 1].all():
                    queries.append(PredictionQuery(s_idx, a_idx, t, h, horizon))
    return queries


def neighbors_of(scene: Scene, query: PredictionQuery, radius: float) -> np.ndarray:
    """Adjacency row ``A[i, :]`` at the query time as a float 0/1 vector of length ``n_max``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    i, t = query.target, query.t
    pos = scene.positions[:, t]
    dist = np.linalg.norm(pos - pos[i], axis=1)
    row = (scene.present[:, t] & (dist <= radius)).astype(float)
    row[i] = 0.0
    row[scene.n_real :] = 0.0
    return row


def future_positions(scene: Scene, query: PredictionQuery) -> np.ndarray:
    return scene.tracks[query.target].positions[query.t + 1 : query.t + query.horizon + 1]


def iter_windows(dataset: Dataset, length: int) -> Iterable[tuple[int, int, int]]:
    """All ``(scene_index, agent_index, start)`` where a real agent is present for ``length`` frames."""
    for s_idx, scene in enumerate(dataset.scenes):
        for a_idx in range(scene.n_real):
            present = scene.tracks[a_idx].present
            for start in range(0, scene.num_frames - length + 1):
                if present[start : start + length].all():
                    yield s_idx, a_idx, start
