"""Initial clustering of x-vectors: threshold-stopped agglomerative
clustering on cosine similarity, and auto-tuning spectral clustering that
selects both the affinity sparsity and the speaker count from the
normalized maximum eigengap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from sklearn.cluster import KMeans

from .timeline import TIME_EPS, Annotation, Segment


@dataclass(frozen=True)
class AhcConfig:
    """Agglomerative clustering settings (average linkage only)."""

    threshold: float = -0.015
    linkage: str = "average"

    def __post_init__(self):
        if self.linkage != "average":
            raise ValueError(f"only average linkage is supported, got {self.linkage!r}")


@dataclass(frozen=True)
class NmeScConfig:
    """Spectral clustering settings.

    ``p_candidates`` lists the per-row neighbor counts to scan; when None a
    default range derived from the matrix size is used (see
    :func:`default_p_candidates`).
    """

    max_speakers: int = 20
    p_candidates: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.max_speakers < 1:
            raise ValueError(f"max_speakers must be >= 1, got {self.max_speakers}")
        if self.p_candidates is not None:
            object.__setattr__(self, "p_candidates", tuple(int(p) for p in self.p_candidates))
            if any(p < 1 for p in self.p_candidates):
                raise ValueError("p candidates must be >= 1")


def _check_similarity(similarity: np.ndarray) -> np.ndarray:
    sim = np.asarray(similarity, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError(f"similarity must be square, got shape {sim.shape}")
    if sim.size and not np.all(np.isfinite(sim)):
        raise ValueError("similarity entries must be finite")
    if sim.size and np.max(np.abs(sim - sim.T)) > 1e-8:
        raise ValueError("similarity matrix must be symmetric")
    return 0.5 * (sim + sim.T)


def _first_occurrence_labels(representative: np.ndarray) -> np.ndarray:
    """Renumber cluster representatives as 0-based ids in order of first occurrence."""
    labels = np.empty(len(representative), dtype=np.int64)
    seen: dict[int, int] = {}
    for t, rep in enumerate(representative):
        labels[t] = seen.setdefault(int(rep), len(seen))
    return labels


def ahc(similarity: np.ndarray, cfg: AhcConfig = AhcConfig()) -> np.ndarray:
    """Average-linkage agglomerative clustering stopped at a similarity threshold.

    Repeatedly merges the cluster pair with the highest average pairwise
    similarity while that maximum exceeds ``cfg.threshold``. The diagonal is
    ignored. Ties are broken toward the lexicographically smallest pair of
    cluster ids, a cluster's id being the smallest original row index it
    contains. Returned labels are 0-based in order of first occurrence.
    """
    sim = _check_similarity(similarity)
    n = sim.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty similarity matrix")
    if n == 1:
        return np.zeros(1, dtype=np.int64)

    # totals[i, j] = summed pairwise similarity between members of clusters
    # i and j; averages are totals / (size_i * size_j).
    totals = sim.copy()
    np.fill_diagonal(totals, 0.0)
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    rep = np.arange(n)

    avg = totals.copy()
    np.fill_diagonal(avg, -np.inf)
    best_j = np.argmax(avg, axis=1)
    best_val = avg[np.arange(n), best_j]

    def _rescan(k: int) -> None:
        j = int(np.argmax(avg[k]))
        best_j[k] = j
        best_val[k] = avg[k, j]

    n_alive = n
    while n_alive > 1:
        masked = np.where(alive, best_val, -np.inf)
        i = int(np.argmax(masked))
        if not masked[i] > cfg.threshold:
            break
        j = int(best_j[i])
        a, b = (i, j) if i < j else (j, i)

        totals[a, :] += totals[b, :]
        totals[:, a] = totals[a, :]
        totals[a, a] = 0.0
        sizes[a] += sizes[b]
        alive[b] = False
        rep[rep == b] = a
        n_alive -= 1

        avg[b, :] = -np.inf
        avg[:, b] = -np.inf
        row = np.full(n, -np.inf)
        live = alive.copy()
        live[a] = False
        row[live] = totals[a, live] / (sizes[a] * sizes[live])
        avg[a, :] = row
        avg[:, a] = row

        _rescan(a)
        for k in np.flatnonzero(alive):
            if k == a:
                continue
            if best_j[k] == a or best_j[k] == b:
                _rescan(k)
            else:
                val = avg[k, a]
                if val > best_val[k] or (val == best_val[k] and a < best_j[k]):
                    best_val[k] = val
                    best_j[k] = a

    return _first_occurrence_labels(rep)


def default_p_candidates(n: int) -> tuple[int, ...]:
    """Neighbor counts scanned by NME-SC when none are configured.

    Very small p values fragment the pruned graph even within a single
    cluster, so the scan starts at 3 where possible and runs up to roughly
    a quarter of the matrix size, capped at 15 distinct values.
    """
    if n < 2:
        return ()
    if n == 2:
        return (1,)
    p_min = min(3, n - 1)
    p_max = max(p_min, min(n - 1, int(round(0.25 * n))))
    count = min(15, p_max - p_min + 1)
    grid = np.unique(np.round(np.linspace(p_min, p_max, num=count)).astype(int))
    return tuple(int(p) for p in grid)


def _pruned_affinity(sim: np.ndarray, p: int) -> np.ndarray:
    """Keep the top-p off-diagonal entries per row (negatives clamped to 0),
    then symmetrize with an elementwise max."""
    n = sim.shape[0]
    work = sim.copy()
    np.fill_diagonal(work, -np.inf)
    pruned = np.zeros_like(sim)
    # stable sort so equal similarities keep the smaller column index
    order = np.argsort(-work, axis=1, kind="stable")
    rows = np.repeat(np.arange(n), p)
    cols = order[:, :p].reshape(-1)
    pruned[rows, cols] = np.maximum(work[rows, cols], 0.0)
    return np.maximum(pruned, pruned.T)


def _eigengap_stats(
    affinity: np.ndarray, max_speakers: int
) -> tuple[int, float, float, np.ndarray]:
    """Ascending Laplacian eigenvalues -> (k at max gap, max gap, lambda_max, vecs)."""
    laplacian = np.diag(affinity.sum(axis=1)) - affinity
    lam, vecs = np.linalg.eigh(laplacian)
    lam = np.maximum(lam, 0.0)
    gaps = lam[1:] - lam[:-1]
    gaps = gaps[: max_speakers - 1] if max_speakers > 1 else gaps[:0]
    if gaps.size == 0:
        return 1, 0.0, float(lam[-1]), vecs
    k = int(np.argmax(gaps)) + 1
    return k, float(gaps[k - 1]), float(lam[-1]), vecs


def _connected_components(adjacency: np.ndarray) -> np.ndarray:
    n = adjacency.shape[0]
    rep = np.full(n, -1, dtype=np.int64)
    for start in range(n):
        if rep[start] >= 0:
            continue
        stack = [start]
        rep[start] = start
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(adjacency[u]):
                if rep[v] < 0:
                    rep[v] = start
                    stack.append(int(v))
    return rep


def nme_sc(similarity: np.ndarray, cfg: NmeScConfig = NmeScConfig()) -> np.ndarray:
    """Normalized-maximum-eigengap spectral clustering.

    For each candidate neighbor count p the cosine affinity is pruned to
    the strongest p entries per row, max-symmetrized, and turned into an
    unnormalized Laplacian. The ratio p / (max eigengap / lambda_max) picks
    the best p; the gap position picks the speaker count; rows of the
    corresponding smallest eigenvectors are clustered with seeded k-means.
    """
    sim = _check_similarity(similarity)
    n = sim.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty similarity matrix")
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    if np.max(sim) - np.min(sim) < 1e-12:
        # degenerate all-equal similarities: a single cluster
        return np.zeros(n, dtype=np.int64)

    candidates = cfg.p_candidates if cfg.p_candidates is not None else default_p_candidates(n)
    candidates = tuple(p for p in candidates if 1 <= p < n)
    if not candidates:
        raise ValueError(f"no valid p candidates for {n} rows")

    best: tuple[float, int, int, np.ndarray] | None = None  # (ratio, p, k, vecs)
    for p in sorted(candidates):
        affinity = _pruned_affinity(sim, p)
        k, gap, lam_max, vecs = _eigengap_stats(affinity, cfg.max_speakers)
        if lam_max < 1e-12 or gap <= 0.0:
            continue
        ratio = p / (gap / lam_max)
        if best is None or ratio < best[0]:
            best = (ratio, p, k, vecs)

    if best is None:
        # Every candidate graph is empty (no positive similarities survive
        # pruning): fall back to connected components of the positive
        # off-diagonal similarity graph, so e.g. two orthogonal vectors
        # split into two clusters.
        adjacency = sim > TIME_EPS
        np.fill_diagonal(adjacency, False)
        labels = _first_occurrence_labels(_connected_components(adjacency))
        return np.minimum(labels, cfg.max_speakers - 1)

    _, _, k, vecs = best
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    embedding = vecs[:, :k]
    km = KMeans(n_clusters=k, init="k-means++", n_init=100, max_iter=300, random_state=0)
    raw = km.fit_predict(embedding)
    return _first_occurrence_labels(raw)


def speaker_name(index: int) -> str:
    return f"spk{index:02d}"


def paint_window_labels(
    labels: Sequence[Hashable | None], windows: Sequence[Segment]
) -> list[tuple[Segment, Hashable]]:
    """Paint per-window labels onto the time axis.

    Runs of equal labels become one region. The boundary between two
    touching runs sits at the midpoint of the adjacent window centers;
    where consecutive windows do not touch, regions end at the window
    edges so unobserved time stays unlabeled. ``None`` labels produce no
    region.
    """
    if len(labels) != len(windows):
        raise ValueError(f"{len(labels)} labels but {len(windows)} windows")
    if not windows:
        return []
    regions: list[tuple[Segment, Hashable]] = []
    run_label = labels[0]
    run_start = windows[0].start
    prev = windows[0]
    for label, win in zip(labels[1:], windows[1:]):
        gap = win.start - prev.end
        if label != run_label or gap > TIME_EPS:
            if gap > TIME_EPS:
                run_end, next_start = prev.end, win.start
            else:
                mid = 0.5 * (prev.middle + win.middle)
                mid = min(max(mid, win.start), prev.end)
                run_end = next_start = mid
            if run_label is not None and run_end - run_start > TIME_EPS:
                regions.append((Segment(run_start, run_end), run_label))
            run_label, run_start = label, next_start
        prev = win
    if run_label is not None and prev.end - run_start > TIME_EPS:
        regions.append((Segment(run_start, prev.end), run_label))
    return regions


def labels_to_annotation(
    labels: Sequence[int], windows: Sequence[Segment], recording_id: str
) -> Annotation:
    """Turn per-window cluster labels into a speaker annotation.

    Adjacent same-label windows merge; boundaries between different labels
    sit at the midpoint of the adjacent window centers. Label ``i`` is
    named ``spk{i:02d}``.
    """
    regions = paint_window_labels(list(labels), windows)
    return Annotation(recording_id, [(seg, speaker_name(int(lab))) for seg, lab in regions])
