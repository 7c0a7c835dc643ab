"""Voice-activity scoring and score-to-segment post-processing.

The hysteresis binarization here is shared by every detection front end:
energy scores computed from audio as well as external frame posteriors
read from POST files (and overlap posteriors, see :mod:`diarkit.overlap`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricsError
from .formats import FrameScores
from .timeline import TIME_EPS, Segment, Timeline

# Log mean-square energy is floored here before min-max normalization so
# that digital silence does not produce -inf.
LOG_ENERGY_FLOOR = -30.0


@dataclass(frozen=True)
class HysteresisConfig:
    """Two-threshold binarization settings.

    A region opens when the score rises to ``onset`` and closes when it
    falls below ``offset``. After padding, gaps shorter than
    ``min_duration_off`` are merged and regions shorter than
    ``min_duration_on`` are dropped, in that order.
    """

    onset: float = 0.5
    offset: float = 0.5
    min_duration_on: float = 0.0
    min_duration_off: float = 0.0
    pad_onset: float = 0.0
    pad_offset: float = 0.0

    def __post_init__(self):
        if self.offset > self.onset:
            raise ValueError(f"offset ({self.offset}) must be <= onset ({self.onset})")
        for name in ("min_duration_on", "min_duration_off", "pad_onset", "pad_offset"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def energy_scores(
    samples: np.ndarray,
    sample_rate: int,
    frame: float = 0.025,
    hop: float = 0.010,
    recording_id: str = "",
) -> FrameScores:
    """Per-frame log mean-square energy, min-max normalized to [0, 1].

    Frames of ``frame`` seconds are taken every ``hop`` seconds; the
    resulting scores have ``step = hop`` and ``offset = frame / 2`` (the
    center of the first frame).
    """
    if not (frame >= hop > 0):
        raise ValueError(f"need frame >= hop > 0, got frame={frame} hop={hop}")
    samples = np.asarray(samples, dtype=np.float64)
    frame_len = int(round(frame * sample_rate))
    hop_len = int(round(hop * sample_rate))
    if samples.shape[0] < frame_len:
        raise ValueError(
            f"recording has {samples.shape[0]} samples, need at least {frame_len}"
        )
    n_frames = (samples.shape[0] - frame_len) // hop_len + 1
    idx = np.arange(frame_len)[None, :] + hop_len * np.arange(n_frames)[:, None]
    energy = np.mean(samples[idx] ** 2, axis=1)
    with np.errstate(divide="ignore"):
        log_energy = np.maximum(np.log(energy), LOG_ENERGY_FLOOR)
    lo, hi = log_energy.min(), log_energy.max()
    if hi - lo < 1e-12:
        scores = np.zeros_like(log_energy)
    else:
        scores = (log_energy - lo) / (hi - lo)
    return FrameScores(recording_id, step=hop, offset=frame / 2, values=scores)


def binarize(scores: FrameScores, cfg: HysteresisConfig) -> Timeline:
    """Convert frame scores to active regions with a hysteresis state machine.

    Frame ``i`` covers ``[offset + (i - 1/2) * step, offset + (i + 1/2) * step)``
    clamped at 0. The state starts inactive; a recording beginning at or
    above ``onset`` activates at frame 0. Post-processing order is fixed:
    pad, merge short gaps, drop short regions.
    """
    values = scores.values
    if values.size == 0:
        return Timeline()
    active = np.zeros(len(values), dtype=bool)
    state = False
    for i, v in enumerate(values):
        if not state and v >= cfg.onset:
            state = True
        elif state and v < cfg.offset:
            state = False
        active[i] = state

    half = 0.5 * scores.step
    regions: list[list[float]] = []
    for i in np.flatnonzero(active):
        start = max(0.0, scores.frame_center(int(i)) - half)
        end = scores.frame_center(int(i)) + half
        if regions and start - regions[-1][1] <= TIME_EPS:
            regions[-1][1] = end
        else:
            regions.append([start, end])

    # pad
    padded = [
        [max(0.0, s - cfg.pad_onset), e + cfg.pad_offset] for s, e in regions
    ]
    padded.sort()
    merged: list[list[float]] = []
    for s, e in padded:
        if merged and s - merged[-1][1] <= TIME_EPS:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    # merge gaps shorter than min_duration_off
    filled: list[list[float]] = []
    for s, e in merged:
        if filled and s - filled[-1][1] < cfg.min_duration_off:
            filled[-1][1] = max(filled[-1][1], e)
        else:
            filled.append([s, e])
    # drop regions shorter than min_duration_on
    kept = [
        Segment(s, e)
        for s, e in filled
        if e - s >= cfg.min_duration_on - TIME_EPS and e - s > TIME_EPS
    ]
    return Timeline(kept)


@dataclass(frozen=True)
class DetectionReport:
    """Frame-level detection metrics against a reference timeline."""

    deter: float
    accuracy: float
    precision: float
    recall: float
    miss_time: float
    false_alarm_time: float
    speech_time: float


def detection_report(
    reference: Timeline, hypothesis: Timeline, extent: Segment, step: float
) -> DetectionReport:
    """Frame-discretized detection metrics over ``extent``.

    DetER = (false-alarm time + missed time) / reference speech time;
    undefined (raises :class:`MetricsError`) when the reference contains
    no speech inside the extent.
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    n = int(math.floor(extent.duration / step + TIME_EPS))
    centers = extent.start + (np.arange(n) + 0.5) * step
    ref = _covers(reference, centers)
    hyp = _covers(hypothesis, centers)
    tp = int(np.sum(ref & hyp))
    fp = int(np.sum(~ref & hyp))
    fn = int(np.sum(ref & ~hyp))
    tn = int(np.sum(~ref & ~hyp))
    ref_frames = tp + fn
    if ref_frames == 0:
        raise MetricsError("reference contains no speech inside extent; DetER undefined")
    deter = (fp + fn) / ref_frames
    accuracy = (tp + tn) / n if n else 0.0
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / ref_frames
    return DetectionReport(
        deter=deter,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        miss_time=fn * step,
        false_alarm_time=fp * step,
        speech_time=ref_frames * step,
    )


def _covers(timeline: Timeline, times: np.ndarray) -> np.ndarray:
    out = np.zeros(times.shape, dtype=bool)
    for seg in timeline:
        out |= (times >= seg.start) & (times < seg.end)
    return out
