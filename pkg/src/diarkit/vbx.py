"""Variational Bayes HMM resegmentation over x-vectors.

HMM states are speakers and transitions model speaker turns: staying with
the current speaker has probability ``loop_p`` and switching lands on
speaker s with probability ``(1 - loop_p) * pi_s``. Each x-vector is
modeled as ``x_t | z_t = s ~ N(Phi^(1/2) y_s, I)`` with speaker latents
``y_s ~ N(0, I)``, where ``Phi`` holds the diagonalized-PLDA across-class
variances; inputs must already be centered, LDA-projected and
length-normalized in that space (see :func:`diarkit.embed.preprocess`).

The acoustic log-likelihoods are scaled by ``fa`` and the speaker-prior KL
by ``fb``; the evidence lower bound maximized by the coordinate updates is

    ELBO = log Z_hat - fb * sum_s KL(q(y_s) || N(0, I))

where ``log Z_hat`` is the HMM evidence of the scaled emissions, obtained
from the forward-pass normalizers. Per-frame constants (the ``x^T x`` and
``2 pi`` terms) are omitted from the emissions, which shifts the trace by
a data-dependent constant but leaves differences, and therefore the
monotonicity and stopping rule, untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cluster import paint_window_labels, speaker_name
from .errors import VbxError
from .formats import BackendModel, XVectorSequence
from .timeline import Annotation, Segment

# Hard init labels are smoothed to soft assignments: this much probability
# mass is spread uniformly over the other speakers (pure one-hot can freeze
# the speaker-model updates).
INIT_SMOOTHING = 0.05


@dataclass(frozen=True)
class VbxConfig:
    """VBx hyperparameters (defaults follow the tuned values)."""

    fa: float = 0.15
    fb: float = 5.5
    loop_p: float = 0.33
    max_iters: int = 40
    elbo_tol: float = 1e-4
    min_pi: float = 1e-4

    def __post_init__(self):
        if not (0.0 < self.loop_p < 1.0):
            raise ValueError(f"loop_p must be in (0, 1), got {self.loop_p}")
        if self.fa <= 0 or self.fb <= 0:
            raise ValueError(f"fa and fb must be > 0, got fa={self.fa} fb={self.fb}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.min_pi < 0:
            raise ValueError(f"min_pi must be >= 0, got {self.min_pi}")


@dataclass(frozen=True)
class SoftAlignment:
    """Posterior speaker alignment produced by VBx.

    ``gamma`` is row-stochastic (T x S); ``first``/``second`` hold the most
    and second-most probable speaker per frame (``second`` is None when a
    single speaker survives).
    """

    gamma: np.ndarray
    pi: np.ndarray
    elbo_trace: tuple[float, ...]
    first: np.ndarray
    second: np.ndarray | None

    @property
    def num_speakers(self) -> int:
        return int(self.gamma.shape[1])


def forward_backward(
    log_emissions: np.ndarray, transitions: np.ndarray, initial: np.ndarray
) -> tuple[np.ndarray, float]:
    """Scaled forward-backward over log emissions.

    Returns the per-frame state posteriors and the log evidence. Emissions
    are rescaled per frame by their maximum before exponentiation, so the
    recursion stays in a safe floating range for any magnitude of scores.
    """
    G = np.asarray(log_emissions, dtype=np.float64)
    A = np.asarray(transitions, dtype=np.float64)
    n_frames, n_states = G.shape
    shift = G.max(axis=1)
    E = np.exp(G - shift[:, None])

    alpha = np.empty((n_frames, n_states))
    norm = np.empty(n_frames)
    a = initial * E[0]
    norm[0] = a.sum()
    if not norm[0] > 0:
        raise VbxError("zero forward mass at frame 0")
    alpha[0] = a / norm[0]
    for t in range(1, n_frames):
        a = E[t] * (alpha[t - 1] @ A)
        norm[t] = a.sum()
        if not norm[t] > 0:
            raise VbxError(f"zero forward mass at frame {t}")
        alpha[t] = a / norm[t]

    beta = np.empty((n_frames, n_states))
    beta[-1] = 1.0
    for t in range(n_frames - 2, -1, -1):
        beta[t] = (A @ (E[t + 1] * beta[t + 1])) / norm[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    log_evidence = float(np.sum(np.log(norm)) + np.sum(shift))
    return gamma, log_evidence


def _smoothed_init(init_labels: np.ndarray, n_speakers: int) -> np.ndarray:
    gamma = np.full((len(init_labels), n_speakers), INIT_SMOOTHING / max(n_speakers - 1, 1))
    gamma[np.arange(len(init_labels)), init_labels] = 1.0 - INIT_SMOOTHING
    if n_speakers == 1:
        gamma[:] = 1.0
    return gamma


def vbx_resegment(
    x: XVectorSequence,
    init_labels: Sequence[int],
    model: BackendModel,
    cfg: VbxConfig = VbxConfig(),
) -> SoftAlignment:
    """Refine an initial clustering with VB-HMM inference.

    Each iteration updates the speaker models ``q(y_s)``, recomputes the
    scaled emission log-likelihoods, reruns forward-backward for the frame
    posteriors, updates the speaker priors from the posterior column means
    (speakers whose prior falls below ``min_pi`` are pruned and never
    return), and records the ELBO. Stops when the ELBO change drops below
    ``elbo_tol * T`` or after ``max_iters`` iterations.
    """
    X = np.asarray(x.vectors, dtype=np.float64)
    n_frames, dim = X.shape
    if n_frames == 0:
        raise VbxError("cannot resegment an empty x-vector sequence")
    if dim != model.lda_dim:
        raise VbxError(f"x-vectors have dim {dim} but model phi has dim {model.lda_dim}")
    labels = np.asarray(init_labels, dtype=np.int64)
    if labels.shape != (n_frames,):
        raise VbxError(f"{labels.shape[0] if labels.ndim else 0} init labels for {n_frames} frames")
    n_speakers = int(labels.max()) + 1
    if labels.min() < 0:
        raise VbxError("init labels must be >= 0")

    phi = model.phi
    sqrt_phi = np.sqrt(phi)
    ratio = cfg.fa / cfg.fb

    gamma = _smoothed_init(labels, n_speakers)
    pi = np.full(n_speakers, 1.0 / n_speakers)
    elbo_trace: list[float] = []
    prev_elbo: float | None = None

    for iteration in range(1, cfg.max_iters + 1):
        # (a) speaker model update: q(y_s) = N(alpha_s, diag(1 / L_s))
        occupancy = gamma.sum(axis=0)
        precision = 1.0 + ratio * occupancy[:, None] * phi[None, :]
        variance = 1.0 / precision
        alpha = ratio * variance * (sqrt_phi[None, :] * (gamma.T @ X))
        kl = 0.5 * np.sum(variance + alpha**2 - 1.0 + np.log(precision), axis=1)

        # (b) scaled emission log-likelihoods (frame constants omitted)
        second_moment = np.sum(phi[None, :] * (variance + alpha**2), axis=1)
        emissions = cfg.fa * (X @ (alpha * sqrt_phi[None, :]).T - 0.5 * second_moment[None, :])
        if not np.all(np.isfinite(emissions)):
            raise VbxError(f"non-finite emission likelihood at iteration {iteration}")

        # (c) forward-backward with speaker-turn transitions
        transitions = (1.0 - cfg.loop_p) * pi[None, :] + cfg.loop_p * np.eye(len(pi))
        gamma, log_evidence = forward_backward(emissions, transitions, pi)
        if not np.isfinite(log_evidence):
            raise VbxError(f"non-finite evidence at iteration {iteration}")

        # (d) speaker prior update and pruning
        pi = gamma.mean(axis=0)
        pi = pi / pi.sum()
        keep = pi >= cfg.min_pi
        if not keep.all() and keep.any():
            gamma = gamma[:, keep]
            gamma = gamma / gamma.sum(axis=1, keepdims=True)
            pi = pi[keep]
            pi = pi / pi.sum()

        # (e) ELBO
        elbo = log_evidence - cfg.fb * float(kl.sum())
        elbo_trace.append(elbo)
        if prev_elbo is not None and abs(elbo - prev_elbo) < cfg.elbo_tol * n_frames:
            break
        prev_elbo = elbo

    first = np.argmax(gamma, axis=1)
    if gamma.shape[1] >= 2:
        masked = gamma.copy()
        masked[np.arange(n_frames), first] = -np.inf
        second = np.argmax(masked, axis=1)
    else:
        second = None
    return SoftAlignment(
        gamma=gamma,
        pi=pi,
        elbo_trace=tuple(elbo_trace),
        first=first,
        second=second,
    )


def alignment_to_annotation(
    alignment: SoftAlignment, windows: Sequence[Segment], recording_id: str
) -> tuple[Annotation, list[str | None]]:
    """Convert an alignment to (primary annotation, per-window second labels).

    The primary annotation paints ``first`` with the midpoint boundary
    rule; second labels are returned aligned to the windows for the
    overlap stage (all None when a single speaker survived).
    """
    if len(windows) != alignment.gamma.shape[0]:
        raise ValueError(
            f"{len(windows)} windows but alignment has {alignment.gamma.shape[0]} frames"
        )
    regions = paint_window_labels([int(s) for s in alignment.first], windows)
    primary = Annotation(
        recording_id, [(seg, speaker_name(int(lab))) for seg, lab in regions]
    )
    if alignment.second is None:
        seconds: list[str | None] = [None] * len(windows)
    else:
        seconds = [speaker_name(int(s)) for s in alignment.second]
    return primary, seconds


def labels_for_windows(annotation: Annotation, windows: Sequence[Segment]) -> np.ndarray:
    """Derive per-window integer init labels from an annotation.

    Each window takes the label with the largest overlap duration; windows
    that touch no entry take the temporally nearest one. Labels are
    numbered in order of first occurrence.
    """
    if not annotation:
        raise ValueError("annotation has no entries")
    ids: dict[str, int] = {}
    out = np.empty(len(windows), dtype=np.int64)
    for i, win in enumerate(windows):
        best_label: str | None = None
        best_overlap = 0.0
        best_gap = np.inf
        nearest: str | None = None
        for seg, label in annotation:
            inter = seg.intersect(win)
            if inter is not None and (
                inter.duration > best_overlap
                or (inter.duration == best_overlap and best_label is not None and label < best_label)
            ):
                best_label, best_overlap = label, inter.duration
            gap = win.gap_to(seg)
            if gap < best_gap or (gap == best_gap and nearest is not None and label < nearest):
                nearest, best_gap = label, gap
        chosen = best_label if best_label is not None else nearest
        out[i] = ids.setdefault(chosen, len(ids))
    return out
