"""Overlap-aware fusion of multiple diarisation hypotheses.

Labels are first mapped onto a common vocabulary (the first hypothesis
anchors the assignment), then the timeline is cut into regions that are
homogeneous in every hypothesis and each region emits the labels winning a
weighted vote, with the emitted count decided by the weighted average of
the hypotheses' local speaker counts.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .timeline import TIME_EPS, Annotation, Segment, Timeline


def _timeline_overlap(a: Timeline, b: Timeline) -> float:
    total = 0.0
    for sa in a.support():
        for sb in b.support():
            total += max(0.0, min(sa.end, sb.end) - max(sa.start, sb.start))
    return total


def map_labels(hypotheses: list[Annotation]) -> list[Annotation]:
    """Map every hypothesis's labels one-to-one onto the first hypothesis.

    The assignment maximizes total pairwise overlap duration; labels that
    cannot be matched to an anchor label receive fresh ids unique across
    the whole ensemble.
    """
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    rec = hypotheses[0].recording_id
    for hyp in hypotheses[1:]:
        if hyp.recording_id != rec:
            raise ValueError(
                f"hypotheses mix recordings {rec!r} and {hyp.recording_id!r}"
            )
    anchor = hypotheses[0]
    anchor_labels = anchor.labels()
    anchor_timelines = [anchor.label_timeline(lab) for lab in anchor_labels]
    used_names = set(anchor_labels)
    mapped = [anchor]
    fresh_counter = 0
    for hyp in hypotheses[1:]:
        hyp_labels = hyp.labels()
        mapping: dict[str, str] = {}
        if anchor_labels and hyp_labels:
            overlap = np.zeros((len(anchor_labels), len(hyp_labels)))
            for j, lab in enumerate(hyp_labels):
                hyp_tl = hyp.label_timeline(lab)
                for i, anchor_tl in enumerate(anchor_timelines):
                    overlap[i, j] = _timeline_overlap(anchor_tl, hyp_tl)
            rows, cols = linear_sum_assignment(overlap, maximize=True)
            for i, j in zip(rows, cols):
                if overlap[i, j] > 0:
                    mapping[hyp_labels[j]] = anchor_labels[i]
        for lab in hyp_labels:
            if lab not in mapping:
                while f"extra{fresh_counter:02d}" in used_names:
                    fresh_counter += 1
                fresh = f"extra{fresh_counter:02d}"
                fresh_counter += 1
                used_names.add(fresh)
                mapping[lab] = fresh
        mapped.append(hyp.relabeled(mapping))
    return mapped


def rank_weights(count: int) -> list[float]:
    """Weights proportional to 1/rank for hypotheses given in rank order."""
    raw = [1.0 / (k + 1) for k in range(count)]
    total = sum(raw)
    return [w / total for w in raw]


def fuse(hypotheses: list[Annotation], weights: list[float] | None = None) -> Annotation:
    """Fuse label-mapped hypotheses by weighted regional voting.

    Within each homogeneous region the emitted speaker count is the
    weighted average of the per-hypothesis counts rounded half-up, and the
    emitted labels are those with the highest summed weight (ties broken
    by label order). Adjacent regions with identical label sets merge.
    """
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    mapped = map_labels(hypotheses)
    k = len(mapped)
    if weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (k,):
            raise ValueError(f"{w.size} weights for {k} hypotheses")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with a positive sum")
        w = w / w.sum()

    cuts: set[float] = set()
    for hyp in mapped:
        for seg, _ in hyp:
            cuts.add(seg.start)
            cuts.add(seg.end)
    bounds = sorted(cuts)

    entries: list[tuple[Segment, str]] = []
    for t0, t1 in zip(bounds, bounds[1:]):
        if t1 - t0 <= TIME_EPS:
            continue
        mid = 0.5 * (t0 + t1)
        votes: dict[str, float] = {}
        weighted_count = 0.0
        for weight, hyp in zip(w, mapped):
            active = hyp.labels_at(mid)
            weighted_count += weight * len(active)
            for lab in active:
                votes[lab] = votes.get(lab, 0.0) + weight
        n_emit = int(math.floor(weighted_count + 0.5))
        if n_emit <= 0 or not votes:
            continue
        ranked = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))
        for lab, _ in ranked[: min(n_emit, len(ranked))]:
            entries.append((Segment(t0, t1), lab))

    # merge adjacent regions carrying the same label
    by_label: dict[str, list[Segment]] = {}
    for seg, lab in entries:
        by_label.setdefault(lab, []).append(seg)
    merged: list[tuple[Segment, str]] = []
    for lab, segs in by_label.items():
        for seg in Timeline(segs).support():
            merged.append((seg, lab))
    return Annotation(mapped[0].recording_id, merged)
