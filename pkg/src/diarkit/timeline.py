"""Interval algebra for segments, timelines and speaker-labeled annotations.

All intervals are half-open ``[start, end)`` in double-precision seconds:
the boundary point belongs to the segment on its right, so touching
segments never co-occur and merge exactly. Values are immutable after
construction and all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

# Absolute tolerance for time comparisons (keeps text roundtrips stable).
TIME_EPS = 1e-9


@dataclass(frozen=True, order=True)
class Segment:
    """Half-open time interval ``[start, end)`` in seconds."""

    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError(f"segment bounds must be finite, got [{self.start}, {self.end})")
        if self.start < 0:
            raise ValueError(f"segment start must be >= 0, got {self.start}")
        if self.end - self.start <= TIME_EPS:
            raise ValueError(
                f"segment must have positive duration, got [{self.start}, {self.end})"
            )

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def middle(self) -> float:
        return 0.5 * (self.start + self.end)

    def intersects(self, other: "Segment") -> bool:
        return self.start < other.end - TIME_EPS and other.start < self.end - TIME_EPS

    def intersect(self, other: "Segment") -> "Segment | None":
        """Intersection with ``other``, or None when (nearly) empty."""
        start = max(self.start, other.start)
        end = min(self.end, other.end)
        if end - start <= TIME_EPS:
            return None
        return Segment(start, end)

    def contains_time(self, t: float) -> bool:
        return self.start <= t < self.end

    def gap_to(self, other: "Segment") -> float:
        """Temporal distance to ``other``; 0 when the segments intersect."""
        if self.intersects(other):
            return 0.0
        if other.start >= self.end:
            return other.start - self.end
        return self.start - other.end


def _merge_sorted(segments: list[Segment], collar: float) -> list[Segment]:
    """Merge sorted segments whose gap is <= collar (within TIME_EPS)."""
    merged: list[Segment] = []
    for seg in segments:
        if merged and seg.start - merged[-1].end <= collar + TIME_EPS:
            if seg.end > merged[-1].end:
                merged[-1] = Segment(merged[-1].start, seg.end)
        else:
            merged.append(seg)
    return merged


@dataclass(frozen=True)
class Timeline:
    """Ordered collection of segments for one recording."""

    segments: tuple[Segment, ...] = ()

    def __init__(self, segments: Iterable[Segment] = ()):
        ordered = tuple(sorted(segments, key=lambda s: (s.start, s.end)))
        object.__setattr__(self, "segments", ordered)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __bool__(self) -> bool:
        return bool(self.segments)

    def support(self, collar: float = 0.0) -> "Timeline":
        """Minimal disjoint cover; segments with gap <= collar are merged."""
        if collar < 0:
            raise ValueError(f"collar must be >= 0, got {collar}")
        return Timeline(_merge_sorted(list(self.segments), collar))

    def duration(self) -> float:
        """Total covered duration (self-overlap counted once)."""
        return sum(s.duration for s in self.support())

    def extent(self) -> Segment | None:
        if not self.segments:
            return None
        return Segment(
            min(s.start for s in self.segments), max(s.end for s in self.segments)
        )

    def crop(self, window: Segment) -> "Timeline":
        out = [s.intersect(window) for s in self.segments]
        return Timeline(s for s in out if s is not None)

    def covers(self, t: float) -> bool:
        return any(s.contains_time(t) for s in self.segments)

    def gaps(self) -> "Timeline":
        """Gaps between consecutive support segments."""
        sup = self.support().segments
        out = []
        for a, b in zip(sup, sup[1:]):
            if b.start - a.end > TIME_EPS:
                out.append(Segment(a.end, b.start))
        return Timeline(out)

    def union(self, other: "Timeline") -> "Timeline":
        return Timeline(list(self.segments) + list(other.segments))


def support(timeline: Timeline, collar: float = 0.0) -> Timeline:
    """Functional alias for :meth:`Timeline.support`."""
    return timeline.support(collar)


def _validate_label(label: str) -> str:
    if not label or any(c.isspace() for c in label):
        raise ValueError(f"labels must be non-empty and whitespace-free, got {label!r}")
    return label


@dataclass(frozen=True)
class Annotation:
    """Speaker-labeled segments for one recording.

    Entries are (segment, label) pairs; a label may own several, possibly
    overlapping, segments, and distinct labels may overlap in time (that is
    how overlapped speech is represented).
    """

    recording_id: str
    entries: tuple[tuple[Segment, str], ...] = field(default_factory=tuple)

    def __init__(self, recording_id: str, entries: Iterable[tuple[Segment, str]] = ()):
        object.__setattr__(self, "recording_id", recording_id)
        checked = [(seg, _validate_label(label)) for seg, label in entries]
        checked.sort(key=lambda e: (e[0].start, e[0].end, e[1]))
        object.__setattr__(self, "entries", tuple(checked))

    def __iter__(self) -> Iterator[tuple[Segment, str]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def labels(self) -> list[str]:
        return sorted({label for _, label in self.entries})

    def label_timeline(self, label: str) -> Timeline:
        return Timeline(seg for seg, lab in self.entries if lab == label)

    def support_timeline(self) -> Timeline:
        return Timeline(seg for seg, _ in self.entries).support()

    def duration(self, label: str | None = None) -> float:
        if label is None:
            return self.support_timeline().duration()
        return self.label_timeline(label).duration()

    def crop(self, window: Segment) -> "Annotation":
        out = []
        for seg, label in self.entries:
            clipped = seg.intersect(window)
            if clipped is not None:
                out.append((clipped, label))
        return Annotation(self.recording_id, out)

    def crop_timeline(self, regions: Timeline) -> "Annotation":
        out = []
        for region in regions:
            out.extend(self.crop(region).entries)
        return Annotation(self.recording_id, out)

    def relabeled(self, mapping: dict[str, str]) -> "Annotation":
        return Annotation(
            self.recording_id,
            [(seg, mapping.get(label, label)) for seg, label in self.entries],
        )

    def with_entries(self, extra: Iterable[tuple[Segment, str]]) -> "Annotation":
        return Annotation(self.recording_id, list(self.entries) + list(extra))

    def labels_at(self, t: float) -> set[str]:
        return {label for seg, label in self.entries if seg.contains_time(t)}

    def overlap_regions(self) -> Timeline:
        """Regions where two or more distinct labels are simultaneously active."""
        return overlap_regions(self)

    def discretize(self, step: float, extent: Segment) -> list[set[str]]:
        """Active label set at each frame center of a step grid over extent."""
        return discretize(self, step, extent)


def crop(annotation: Annotation, window: Segment) -> Annotation:
    """Functional alias for :meth:`Annotation.crop`."""
    return annotation.crop(window)


def overlap_regions(annotation: Annotation) -> Timeline:
    # Sweep-line over per-label activity; at each boundary the number of
    # distinct active labels changes, so elementary intervals are constant.
    # Closings are processed before openings (half-open intervals).
    events: list[tuple[float, int, str]] = []
    for seg, label in annotation.entries:
        events.append((seg.start, 1, label))
        events.append((seg.end, 0, label))
    events.sort(key=lambda e: (e[0], e[1]))

    active: dict[str, int] = {}
    regions: list[Segment] = []
    prev_t: float | None = None
    for t, kind, label in events:
        if prev_t is not None and t - prev_t > TIME_EPS:
            distinct = sum(1 for c in active.values() if c > 0)
            if distinct >= 2:
                regions.append(Segment(prev_t, t))
        if kind == 0:
            active[label] -= 1
        else:
            active[label] = active.get(label, 0) + 1
        prev_t = t
    return Timeline(regions).support()


def discretize(annotation: Annotation, step: float, extent: Segment) -> list[set[str]]:
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    n = int(math.floor(extent.duration / step + TIME_EPS))
    out = []
    for i in range(n):
        t = extent.start + (i + 0.5) * step
        out.append(annotation.labels_at(t))
    return out
