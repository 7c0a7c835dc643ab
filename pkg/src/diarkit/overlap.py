"""Overlap speech post-processing and second-speaker assignment."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .cluster import paint_window_labels
from .formats import FrameScores
from .timeline import TIME_EPS, Annotation, Segment, Timeline
from .vad import DetectionReport, HysteresisConfig, binarize, detection_report

# Overlap posteriors are binarized more conservatively than VAD by default.
# These thresholds are this artifact's defaults, tuned for robustness.
DEFAULT_OSD_HYSTERESIS = HysteresisConfig(onset=0.8, offset=0.7)


def osd_binarize(scores: FrameScores, cfg: HysteresisConfig | None = None) -> Timeline:
    """Hysteresis binarization of overlap posteriors (shared VAD machinery)."""
    return binarize(scores, cfg if cfg is not None else DEFAULT_OSD_HYSTERESIS)


def _subtract(segment: Segment, timeline: Timeline) -> list[Segment]:
    """Parts of ``segment`` not covered by ``timeline``."""
    remaining = [segment]
    for cover in timeline.support():
        next_remaining: list[Segment] = []
        for seg in remaining:
            if not seg.intersects(cover):
                next_remaining.append(seg)
                continue
            if cover.start - seg.start > TIME_EPS:
                next_remaining.append(Segment(seg.start, cover.start))
            if seg.end - cover.end > TIME_EPS:
                next_remaining.append(Segment(cover.end, seg.end))
        remaining = next_remaining
    return remaining


def _merged_entries(entries: list[tuple[Segment, str]]) -> list[tuple[Segment, str]]:
    by_label: dict[str, list[Segment]] = {}
    for seg, label in entries:
        by_label.setdefault(label, []).append(seg)
    out = []
    for label, segs in by_label.items():
        for seg in Timeline(segs).support():
            out.append((seg, label))
    return out


def assign_second_vbx(
    primary: Annotation,
    windows: Sequence[Segment],
    second_labels: Sequence[str | None],
    osd: Timeline,
) -> Annotation:
    """Add VBx second-speaker labels inside detected overlap regions.

    Second labels are painted over the windows with the same midpoint rule
    as the primary labels, masked to the overlap regions, and dropped
    wherever they coincide with the primary speaker. Outside overlap
    regions second labels are discarded entirely.
    """
    painted = paint_window_labels(list(second_labels), windows)
    extra: list[tuple[Segment, str]] = []
    for region in osd.support():
        for seg, label in painted:
            inter = seg.intersect(region)
            if inter is None:
                continue
            for piece in _subtract(inter, primary.label_timeline(str(label))):
                extra.append((piece, str(label)))
    return primary.with_entries(_merged_entries(extra))


def assign_second_heuristic(primary: Annotation, osd: Timeline) -> Annotation:
    """Infer second speakers for overlap regions from temporal proximity.

    Each overlap region is split at the primary label boundaries; every
    piece gets the speaker, different from the piece's primary speaker,
    whose segments are closest in time (distance 0 when intersecting,
    otherwise the gap to the nearest segment edge; ties break toward the
    lexicographically smaller label). Pieces with no primary speaker or no
    other speaker in the recording are left unchanged.
    """
    all_labels = primary.labels()
    label_timelines = {lab: primary.label_timeline(lab) for lab in all_labels}
    extra: list[tuple[Segment, str]] = []
    for region in osd.support():
        cuts = {region.start, region.end}
        for seg, _ in primary:
            for t in (seg.start, seg.end):
                if region.start < t < region.end:
                    cuts.add(t)
        bounds = sorted(cuts)
        for t0, t1 in zip(bounds, bounds[1:]):
            if t1 - t0 <= TIME_EPS:
                continue
            piece = Segment(t0, t1)
            active = primary.labels_at(piece.middle)
            if not active:
                continue
            best_label: str | None = None
            best_dist = np.inf
            for cand in all_labels:
                if cand in active:
                    continue
                dist = min(
                    (piece.gap_to(seg) for seg in label_timelines[cand]), default=np.inf
                )
                if dist < best_dist:
                    best_label, best_dist = cand, dist
            if best_label is not None and np.isfinite(best_dist):
                extra.append((piece, best_label))
    return primary.with_entries(_merged_entries(extra))


def osd_report(
    ref: Annotation, hyp: Timeline, extent: Segment, step: float
) -> DetectionReport:
    """Frame-level overlap detection metrics.

    The reference overlap regions are derived from the reference
    annotation; the rest matches :func:`diarkit.vad.detection_report`
    (including the undefined-DetER error when the reference has no
    overlap).
    """
    return detection_report(ref.overlap_regions(), hyp, extent, step)
