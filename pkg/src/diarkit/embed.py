"""Sliding-window scheduling and embedding-space preprocessing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formats import BackendModel, XVectorSequence
from .timeline import TIME_EPS, Segment, Timeline


@dataclass(frozen=True)
class WindowingConfig:
    """Embedding window length and shift in seconds."""

    window: float = 1.44
    shift: float = 0.24

    def __post_init__(self):
        if not (self.window >= self.shift > 0):
            raise ValueError(
                f"need window >= shift > 0, got window={self.window} shift={self.shift}"
            )


def plan_windows(speech: Timeline, cfg: WindowingConfig = WindowingConfig()) -> list[Segment]:
    """Plan embedding extraction windows over disjoint speech regions.

    A region shorter than the window yields a single window covering the
    whole region; otherwise windows start every ``shift`` seconds and the
    last window is end-aligned to the region so no speech is dropped.
    Windows never cross region boundaries.
    """
    windows: list[Segment] = []
    for seg in speech.support():
        d = seg.duration
        if d <= cfg.window + TIME_EPS:
            windows.append(seg)
            continue
        count = int(math.floor((d - cfg.window) / cfg.shift + TIME_EPS)) + 1
        starts = [seg.start + i * cfg.shift for i in range(count)]
        last_regular_end = starts[-1] + cfg.window
        if seg.end - last_regular_end > TIME_EPS:
            starts.append(seg.end - cfg.window)
        windows.extend(Segment(s, min(s + cfg.window, seg.end)) for s in starts)
    return windows


def preprocess(
    x: XVectorSequence, model: BackendModel, target_norm: float | None = None
) -> XVectorSequence:
    """Center, LDA-project and length-normalize embedding rows.

    Each row becomes ``lda^T (v - mean)`` scaled to Euclidean norm
    ``target_norm`` (default ``sqrt(lda_dim)``, the usual choice ahead of
    PLDA). Raises ValueError when a row is zero after projection.
    """
    if x.dim != model.dim:
        raise ValueError(f"embedding dim {x.dim} != model dim {model.dim}")
    if target_norm is None:
        target_norm = math.sqrt(model.lda_dim)
    if target_norm <= 0:
        raise ValueError(f"target_norm must be > 0, got {target_norm}")
    projected = (np.asarray(x.vectors, dtype=np.float64) - model.mean) @ model.lda
    norms = np.linalg.norm(projected, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise ValueError(f"row {bad[0]} is zero after centering/projection")
    scaled = projected * (target_norm / norms)[:, None]
    return XVectorSequence(x.recording_id, x.windows, scaled)


def cosine_matrix(x: XVectorSequence) -> np.ndarray:
    """Pairwise cosine similarities between embedding rows.

    The result is exactly symmetric with a unit diagonal; a zero-norm row
    raises ValueError.
    """
    vec = np.asarray(x.vectors, dtype=np.float64)
    if vec.shape[0] < 1:
        raise ValueError("need at least one embedding row")
    norms = np.linalg.norm(vec, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise ValueError(f"row {bad[0]} has zero norm")
    unit = vec / norms[:, None]
    sim = unit @ unit.T
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, 1.0)
    return np.clip(sim, -1.0, 1.0)
