"""Episode persistence and training-batch assembly.

Episodes are stored one file each (magic ``VTPD``), frames as raw u8 RGB so
round-trips are bit-exact, plus a JSON-lines manifest per directory.  Frames
convert to [0, 1] floats only at batch-assembly time.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"VTPD"
VERSION = 1
ROOT_ACTION = 255

SCENARIO_IDS = {"blockworld": 0, "nav4": 1}
SCENARIO_NAMES = {v: k for k, v in SCENARIO_IDS.items()}

FRAME_H = 64
FRAME_W = 64
FRAME_C = 3
_FRAME_BYTES = FRAME_H * FRAME_W * FRAME_C

_HEADER = struct.Struct("<4sIBBHHBH")
_FRAME_HEAD = struct.Struct("<BB")
_TRAILER = struct.Struct("<BBQ")


class EpisodeFormatError(Exception):
    """Raised for corrupt, truncated or wrong-magic episode files."""


@dataclass
class Episode:
    """One recorded trial: action-boundary frames plus terminal labels."""

    scenario: str
    seed: int
    action_count: int
    frames: np.ndarray      # (n, 64, 64, 3) u8
    actions: np.ndarray     # (n,) u8, actions[0] == ROOT_ACTION
    done: np.ndarray        # (n,) u8, 1 = the action completed successfully
    success: bool
    failure_reason: int     # 0 when success

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.uint8)
        self.actions = np.asarray(self.actions, dtype=np.uint8)
        self.done = np.asarray(self.done, dtype=np.uint8)
        n = len(self.frames)
        if n < 2:
            raise ValueError("episode needs at least 2 frames")
        if self.frames.shape != (n, FRAME_H, FRAME_W, FRAME_C):
            raise ValueError(f"bad frame array shape {self.frames.shape}")
        if self.actions.shape != (n,) or self.done.shape != (n,):
            raise ValueError("actions/done must have one entry per frame")
        if int(self.actions[0]) != ROOT_ACTION:
            raise ValueError("frame 0 must carry the ROOT sentinel action")
        if self.scenario not in SCENARIO_IDS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.success and self.failure_reason != 0:
            raise ValueError("successful episode cannot carry a failure reason")

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def write_episode(episode: Episode, path) -> None:
    path = Path(path)
    n = episode.n_frames
    try:
        with open(path, "wb") as f:
            f.write(_HEADER.pack(MAGIC, VERSION, SCENARIO_IDS[episode.scenario],
                                 episode.action_count, FRAME_W, FRAME_H, FRAME_C, n))
            for i in range(n):
                f.write(_FRAME_HEAD.pack(int(episode.actions[i]), int(episode.done[i])))
                f.write(episode.frames[i].tobytes())
            f.write(_TRAILER.pack(int(episode.success), int(episode.failure_reason),
                                  episode.seed & 0xFFFFFFFFFFFFFFFF))
    except OSError as e:
        raise OSError(f"cannot write episode to {path}: {e}") from e


def read_episode(path) -> Episode:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read episode from {path}: {e}") from e
    if len(blob) < _HEADER.size:
        raise EpisodeFormatError(f"{path}: truncated header")
    magic, version, scen, a_count, w, h, c, n = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise EpisodeFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise EpisodeFormatError(f"{path}: unsupported version {version}")
    if (w, h, c) != (FRAME_W, FRAME_H, FRAME_C):
        raise EpisodeFormatError(f"{path}: unexpected frame geometry {(w, h, c)}")
    if scen not in SCENARIO_NAMES:
        raise EpisodeFormatError(f"{path}: unknown scenario id {scen}")
    want = _HEADER.size + n * (_FRAME_HEAD.size + _FRAME_BYTES) + _TRAILER.size
    if len(blob) != want:
        raise EpisodeFormatError(f"{path}: expected {want} bytes, found {len(blob)}")
    off = _HEADER.size
    frames = np.empty((n, FRAME_H, FRAME_W, FRAME_C), dtype=np.uint8)
    actions = np.empty(n, dtype=np.uint8)
    done = np.empty(n, dtype=np.uint8)
    for i in range(n):
        actions[i], done[i] = _FRAME_HEAD.unpack_from(blob, off)
        off += _FRAME_HEAD.size
        frames[i] = np.frombuffer(blob, dtype=np.uint8, count=_FRAME_BYTES,
                                  offset=off).reshape(FRAME_H, FRAME_W, FRAME_C)
        off += _FRAME_BYTES
    success, reason, seed = _TRAILER.unpack_from(blob, off)
    return Episode(scenario=SCENARIO_NAMES[scen], seed=seed, action_count=a_count,
                   frames=frames, actions=actions, done=done,
                   success=bool(success), failure_reason=reason)


# --------------------------------------------------------------------------
# manifest


def manifest_entry(episode: Episode, filename: str) -> dict:
    return {
        "file": filename,
        "scenario": episode.scenario,
        "seed": episode.seed,
        "success": bool(episode.success),
        "n_frames": episode.n_frames,
    }


def write_manifest(path, entries) -> None:
    path = Path(path)
    with open(path, "w") as f:
        for e in entries:
            f.write(json.dumps(e) + "\n")


def read_manifest(path) -> list[dict]:
    path = Path(path)
    entries = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def save_episodes(episodes, out_dir) -> Path:
    """Write one file per episode plus manifest.jsonl; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, ep in enumerate(episodes):
        name = f"episode_{i:05d}.vtpd"
        write_episode(ep, out_dir / name)
        entries.append(manifest_entry(ep, name))
    manifest = out_dir / "manifest.jsonl"
    write_manifest(manifest, entries)
    return manifest


def load_episodes(data_dir, entries=None) -> list[Episode]:
    data_dir = Path(data_dir)
    if entries is None:
        entries = read_manifest(data_dir / "manifest.jsonl")
    return [read_episode(data_dir / e["file"]) for e in entries]


def split(entries, val_fraction: float, seed: int) -> tuple[list[dict], list[dict]]:
    """Deterministic by-episode train/validation split."""
    if not 0.0 < val_fraction < 0.5:
        raise ValueError("val_fraction must lie in (0, 0.5)")
    entries = list(entries)
    order = np.random.default_rng(seed).permutation(len(entries))
    n_val = max(1, int(round(len(entries) * val_fraction)))
    val_idx = set(int(i) for i in order[:n_val])
    train = [e for i, e in enumerate(entries) if i not in val_idx]
    val = [e for i, e in enumerate(entries) if i in val_idx]
    return train, val


# --------------------------------------------------------------------------
# batch assembly


def frames_float(frames_u8: np.ndarray) -> np.ndarray:
    return frames_u8.astype(np.float32) / 255.0


def transform_windows(episodes, success_only: bool = False) -> list[tuple[int, int]]:
    """All (episode, frame) anchors with two consecutive boundaries ahead.

    Episodes shorter than 3 boundaries are skipped; with `success_only` the
    failure episodes contribute nothing.
    """
    windows = []
    for e_idx, ep in enumerate(episodes):
        if success_only and not ep.success:
            continue
        n = ep.n_frames
        if n < 3:
            continue
        windows.extend((e_idx, i) for i in range(n - 2))
    return windows


def gather_transform_batch(episodes, windows, idx) -> dict:
    """Materialize one TransformSample batch as float arrays."""
    x0 = np.empty((len(idx), FRAME_H, FRAME_W, FRAME_C), dtype=np.float32)
    xi = np.empty_like(x0)
    xt1 = np.empty_like(x0)
    xt2 = np.empty_like(x0)
    a1 = np.empty(len(idx), dtype=np.int64)
    a2 = np.empty(len(idx), dtype=np.int64)
    success = np.empty(len(idx), dtype=np.float32)
    for row, w_idx in enumerate(idx):
        e_idx, i = windows[w_idx]
        ep = episodes[e_idx]
        x0[row] = frames_float(ep.frames[0])
        xi[row] = frames_float(ep.frames[i])
        xt1[row] = frames_float(ep.frames[i + 1])
        xt2[row] = frames_float(ep.frames[i + 2])
        a1[row] = ep.actions[i + 1]
        a2[row] = ep.actions[i + 2]
        success[row] = float(ep.success)
    return {"x0": x0, "xi": xi, "a1": a1, "xt1": xt1, "a2": a2, "xt2": xt2,
            "success": success, "window_idx": np.asarray(idx, dtype=np.int64)}


def build_transform_batches(episodes, batch: int = 64, rng=None,
                            success_only: bool = False, count: int | None = None):
    """Stream of uniformly-sampled consecutive-pair window batches."""
    if not episodes:
        raise ValueError("no episodes supplied")
    rng = rng or np.random.default_rng(0)
    windows = transform_windows(episodes, success_only=success_only)
    if not windows:
        raise ValueError("no usable transform windows in the supplied episodes")
    produced = 0
    while count is None or produced < count:
        idx = rng.integers(0, len(windows), size=batch)
        yield gather_transform_batch(episodes, windows, idx)
        produced += 1


def value_samples(episodes, legal_masks) -> dict:
    """Flatten episodes into per-frame value-head samples.

    ``legal_masks[e]`` must hold the (n_frames, A) permissible-next-action
    bitmask for episode ``e`` (simulator replay provides it).  Terminal
    frames keep an all-zero mask.
    """
    e_idx, f_idx = [], []
    success, done, action, next_action, has_next = [], [], [], [], []
    masks = []
    for e, ep in enumerate(episodes):
        n = ep.n_frames
        mask = np.asarray(legal_masks[e], dtype=np.float32)
        if mask.shape != (n, ep.action_count):
            raise ValueError(f"legal mask shape {mask.shape} wrong for episode {e}")
        for i in range(n):
            e_idx.append(e)
            f_idx.append(i)
            success.append(float(ep.success))
            done.append(float(ep.done[i]))
            action.append(int(ep.actions[i]))
            if i + 1 < n:
                next_action.append(int(ep.actions[i + 1]))
                has_next.append(1.0)
            else:
                next_action.append(0)
                has_next.append(0.0)
            masks.append(mask[i])
    return {
        "episode": np.asarray(e_idx, dtype=np.int64),
        "frame": np.asarray(f_idx, dtype=np.int64),
        "success": np.asarray(success, dtype=np.float32),
        "done": np.asarray(done, dtype=np.float32),
        "action": np.asarray(action, dtype=np.int64),
        "next_action": np.asarray(next_action, dtype=np.int64),
        "has_next": np.asarray(has_next, dtype=np.float32),
        "legal_mask": np.stack(masks).astype(np.float32),
    }


def build_value_batches(samples: dict, batch: int, rng=None, count: int | None = None):
    """Stream of index batches over flattened value samples."""
    rng = rng or np.random.default_rng(0)
    n = len(samples["episode"])
    if n == 0:
        raise ValueError("no value samples supplied")
    produced = 0
    while count is None or produced < count:
        yield rng.integers(0, n, size=batch)
        produced += 1


def replay_legal_masks(episodes) -> list[np.ndarray]:
    """Recover per-frame permissible-action bitmasks by simulator replay."""
    from . import simworld  # local import: dataset stays import-light

    out = []
    for ep in episodes:
        out.append(simworld.replay_masks(ep))
    return out
