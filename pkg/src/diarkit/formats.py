"""Readers and writers for the on-disk formats used by the pipeline.

Formats covered:

* RTTM ``SPEAKER`` lines (the diarisation exchange format),
* LAB voice-activity files (``<start> <end> speech``),
* XVEC1 binary embedding files,
* POST frame-score files (``#step=``/``#offset=`` header plus one score
  per line),
* MODEL backend files (centering mean, LDA matrix, PLDA across-class
  variances),
* SECOND per-window second-speaker label files,
* mono 16-bit PCM WAV.

All codecs are pure and reentrant; writers and readers roundtrip (the
binary XVEC1 roundtrip is bit-exact, text formats roundtrip within their
printed precision).
"""

from __future__ import annotations

import io
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .timeline import Annotation, Segment, Timeline

XVEC_MAGIC = b"XVEC0001"


# ---------------------------------------------------------------------------
# Domain types carried by files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XVectorSequence:
    """Time-stamped embedding rows for one recording.

    ``vectors`` has one row per window; all rows share the same dimension
    and windows are sorted by start time.
    """

    recording_id: str
    windows: tuple[Segment, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors)
        if vec.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vec.shape}")
        if len(self.windows) != vec.shape[0]:
            raise ValueError(
                f"{len(self.windows)} windows but {vec.shape[0]} vector rows"
            )
        if vec.size and not np.all(np.isfinite(vec)):
            raise ValueError("vectors must be finite")
        starts = [w.start for w in self.windows]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("windows must be sorted by start time")
        object.__setattr__(self, "windows", tuple(self.windows))

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


@dataclass(frozen=True)
class FrameScores:
    """Uniformly spaced frame scores; ``offset`` is the time of the first
    frame's center, so frame ``i`` covers ``[offset + (i - 1/2) * step,
    offset + (i + 1/2) * step)`` clamped at zero."""

    recording_id: str
    step: float
    offset: float
    values: np.ndarray

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("values must be 1-D")
        if vals.size and not np.all(np.isfinite(vals)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def frame_center(self, i: int) -> float:
        return self.offset + i * self.step


@dataclass(frozen=True)
class BackendModel:
    """Embedding backend: centering mean, LDA projection and the diagonal
    across-class variances (phi) of the diagonalized PLDA model."""

    mean: np.ndarray
    lda: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        lda = np.asarray(self.lda, dtype=np.float64)
        phi = np.asarray(self.phi, dtype=np.float64).reshape(-1)
        if lda.ndim != 2:
            raise ValueError("lda must be a 2-D matrix")
        d, d_out = lda.shape
        if mean.shape[0] != d:
            raise ValueError(f"mean has dim {mean.shape[0]} but lda is {d}x{d_out}")
        if d_out > d:
            raise ValueError(f"lda_dim {d_out} exceeds dim {d}")
        if phi.shape[0] != d_out:
            raise ValueError(f"phi has dim {phi.shape[0]} but lda_dim is {d_out}")
        for arr in (mean, lda, phi):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")
        if np.any(phi < 0):
            raise ValueError("phi entries must be >= 0")
        if np.any(np.diff(phi) > 1e-12):
            raise ValueError("phi must be sorted in nonincreasing order")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "lda", lda)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self) -> int:
        return int(self.lda.shape[0])

    @property
    def lda_dim(self) -> int:
        return int(self.lda.shape[1])


# ---------------------------------------------------------------------------
# RTTM
# ---------------------------------------------------------------------------


def parse_rttm(text: str) -> list[Annotation]:
    """Parse RTTM text into one Annotation per distinct file id.

    Only ``SPEAKER`` lines are interpreted; lines starting with ``;`` and
    other line types are ignored. Raises :class:`FormatError` with the
    offending line number on malformed input.
    """
    per_file: dict[str, list[tuple[Segment, str]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 8:
            raise FormatError(
                f"SPEAKER line has {len(fields)} fields, need at least 8", line=lineno
            )
        file_id = fields[1]
        try:
            onset = float(fields[3])
            dur = float(fields[4])
        except ValueError as exc:
            raise FormatError(f"bad onset/duration: {exc}", line=lineno) from None
        if dur <= 0:
            raise FormatError(f"non-positive duration {dur}", line=lineno)
        if onset < 0:
            raise FormatError(f"negative onset {onset}", line=lineno)
        label = fields[7]
        try:
            seg = Segment(onset, onset + dur)
            per_file.setdefault(file_id, []).append((seg, label))
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno) from None
    return [Annotation(fid, entries) for fid, entries in sorted(per_file.items())]


def emit_rttm(annotations: list[Annotation] | Annotation) -> str:
    """Render annotations as RTTM; one SPEAKER line per entry, 3 decimals."""
    if isinstance(annotations, Annotation):
        annotations = [annotations]
    rows = []
    for ann in annotations:
        for seg, label in ann.entries:
            rows.append((ann.recording_id, seg.start, label, seg.duration))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = [
        f"SPEAKER {fid} 1 {onset:.3f} {dur:.3f} <NA> <NA> {label} <NA> <NA>"
        for fid, onset, label, dur in rows
    ]
    return "".join(line + "\n" for line in lines)


def load_rttm(path: str | Path) -> list[Annotation]:
    return parse_rttm(Path(path).read_text())


def save_rttm(annotations: list[Annotation] | Annotation, path: str | Path) -> None:
    Path(path).write_text(emit_rttm(annotations))


# ---------------------------------------------------------------------------
# LAB voice-activity files
# ---------------------------------------------------------------------------


def parse_lab(text: str) -> Timeline:
    """Parse ``<start> <end> speech`` lines into a Timeline."""
    segments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3 or fields[2] != "speech":
            raise FormatError(f"expected '<start> <end> speech', got {line!r}", line=lineno)
        try:
            start, end = float(fields[0]), float(fields[1])
        except ValueError as exc:
            raise FormatError(f"bad time value: {exc}", line=lineno) from None
        try:
            segments.append(Segment(start, end))
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno) from None
    return Timeline(segments)


def emit_lab(timeline: Timeline) -> str:
    return "".join(f"{s.start:.3f} {s.end:.3f} speech\n" for s in timeline)


def load_lab(path: str | Path) -> Timeline:
    return parse_lab(Path(path).read_text())


def save_lab(timeline: Timeline, path: str | Path) -> None:
    Path(path).write_text(emit_lab(timeline))


# ---------------------------------------------------------------------------
# XVEC1 binary embeddings
# ---------------------------------------------------------------------------


def read_xvectors(data: bytes, recording_id: str) -> XVectorSequence:
    """Decode an XVEC1 payload.

    Layout: magic ``XVEC0001``, u32-LE count, u32-LE dim, then ``count``
    records of ``{f64-LE start, f64-LE end, dim x f32-LE}``.
    """
    if data[:8] != XVEC_MAGIC:
        raise FormatError(f"bad magic {data[:8]!r}, expected {XVEC_MAGIC!r}")
    if len(data) < 16:
        raise FormatError("truncated header")
    count = int(np.frombuffer(data, dtype="<u4", count=1, offset=8)[0])
    dim = int(np.frombuffer(data, dtype="<u4", count=1, offset=12)[0])
    if dim < 1:
        raise FormatError(f"dim must be >= 1, got {dim}")
    record = np.dtype([("start", "<f8"), ("end", "<f8"), ("vec", "<f4", (dim,))])
    payload = data[16:]
    if len(payload) != count * record.itemsize:
        raise FormatError(
            f"payload has {len(payload)} bytes, expected {count * record.itemsize} "
            f"for {count} records of dim {dim}"
        )
    rows = np.frombuffer(payload, dtype=record)
    try:
        windows = [Segment(float(r["start"]), float(r["end"])) for r in rows]
    except ValueError as exc:
        raise FormatError(f"bad window: {exc}") from None
    vectors = rows["vec"].reshape(count, dim).copy()
    if vectors.size and not np.all(np.isfinite(vectors)):
        raise FormatError("non-finite embedding values")
    try:
        return XVectorSequence(recording_id, tuple(windows), vectors)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_xvectors(seq: XVectorSequence) -> bytes:
    count, dim = len(seq), seq.dim
    record = np.dtype([("start", "<f8"), ("end", "<f8"), ("vec", "<f4", (dim,))])
    rows = np.empty(count, dtype=record)
    rows["start"] = [w.start for w in seq.windows]
    rows["end"] = [w.end for w in seq.windows]
    rows["vec"] = np.asarray(seq.vectors, dtype=np.float32)
    header = XVEC_MAGIC + np.asarray([count, dim], dtype="<u4").tobytes()
    return header + rows.tobytes()


def load_xvectors(path: str | Path) -> XVectorSequence:
    path = Path(path)
    return read_xvectors(path.read_bytes(), recording_id=path.stem.split(".")[0])


def save_xvectors(seq: XVectorSequence, path: str | Path) -> None:
    Path(path).write_bytes(write_xvectors(seq))


# ---------------------------------------------------------------------------
# POST frame-score files
# ---------------------------------------------------------------------------


def read_frame_scores(text: str, recording_id: str = "") -> FrameScores:
    """Parse a POST file: ``#step=``/``#offset=`` headers, one score per line."""
    step: float | None = None
    offset = 0.0
    values: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line.split():
                token = token.lstrip("#")
                if "=" not in token:
                    raise FormatError(f"bad header token {token!r}", line=lineno)
                key, _, value = token.partition("=")
                try:
                    parsed = float(value)
                except ValueError:
                    raise FormatError(f"bad header value {value!r}", line=lineno) from None
                if key == "step":
                    step = parsed
                elif key == "offset":
                    offset = parsed
                else:
                    raise FormatError(f"unknown header key {key!r}", line=lineno)
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise FormatError(f"non-numeric score {line!r}", line=lineno) from None
    if step is None:
        raise FormatError("missing #step= header")
    if step <= 0:
        raise FormatError(f"step must be > 0, got {step}")
    try:
        return FrameScores(recording_id, step, offset, np.asarray(values))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def emit_frame_scores(scores: FrameScores) -> str:
    lines = [f"#step={scores.step:.6f}", f"#offset={scores.offset:.6f}"]
    lines.extend(f"{v:.6f}" for v in scores.values)
    return "".join(line + "\n" for line in lines)


def load_frame_scores(path: str | Path) -> FrameScores:
    path = Path(path)
    return read_frame_scores(path.read_text(), recording_id=path.stem.split(".")[0])


def save_frame_scores(scores: FrameScores, path: str | Path) -> None:
    Path(path).write_text(emit_frame_scores(scores))


# ---------------------------------------------------------------------------
# MODEL backend files
# ---------------------------------------------------------------------------

_MODEL_KEYS = ("dim", "lda_dim", "mean", "lda", "phi")


def read_backend_model(text: str) -> BackendModel:
    """Parse a MODEL file (token stream of ``dim``, ``lda_dim``, ``mean``,
    ``lda`` row-major, ``phi``; layout-free, ``#`` comments allowed)."""
    tokens: list[str] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0]
        tokens.extend(line.split())
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for token in tokens:
        if token in _MODEL_KEYS:
            if token in sections:
                raise FormatError(f"duplicate key {token!r}")
            current = sections.setdefault(token, [])
        elif current is None:
            raise FormatError(f"unexpected token {token!r} before any key")
        else:
            current.append(token)
    for key in _MODEL_KEYS:
        if key not in sections:
            raise FormatError(f"missing key {key!r}")

    def _floats(key: str, expected: int) -> np.ndarray:
        raw = sections[key]
        if len(raw) != expected:
            raise FormatError(f"{key} has {len(raw)} values, expected {expected}")
        try:
            return np.asarray([float(v) for v in raw], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"bad value in {key}: {exc}") from None

    try:
        dim = int(sections["dim"][0])
        lda_dim = int(sections["lda_dim"][0])
    except (IndexError, ValueError):
        raise FormatError("dim and lda_dim must each be a single integer") from None
    if dim < 1 or lda_dim < 1:
        raise FormatError(f"dim/lda_dim must be >= 1, got {dim}/{lda_dim}")
    mean = _floats("mean", dim)
    lda = _floats("lda", dim * lda_dim).reshape(dim, lda_dim)
    phi = _floats("phi", lda_dim)
    try:
        return BackendModel(mean, lda, phi)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def emit_backend_model(model: BackendModel) -> str:
    out = io.StringIO()
    out.write(f"dim {model.dim}\n")
    out.write(f"lda_dim {model.lda_dim}\n")
    out.write("mean " + " ".join(f"{v:.17g}" for v in model.mean) + "\n")
    out.write("lda\n")
    for row in model.lda:
        out.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    out.write("phi " + " ".join(f"{v:.17g}" for v in model.phi) + "\n")
    return out.getvalue()


def load_backend_model(path: str | Path) -> BackendModel:
    return read_backend_model(Path(path).read_text())


def save_backend_model(model: BackendModel, path: str | Path) -> None:
    Path(path).write_text(emit_backend_model(model))


# ---------------------------------------------------------------------------
# SECOND per-window speaker labels
# ---------------------------------------------------------------------------


def parse_second_labels(text: str) -> list[tuple[Segment, str | None]]:
    """Parse ``<start> <end> <label|->`` lines (one per window)."""
    out: list[tuple[Segment, str | None]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise FormatError(f"expected '<start> <end> <label|->', got {line!r}", line=lineno)
        try:
            seg = Segment(float(fields[0]), float(fields[1]))
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno) from None
        out.append((seg, None if fields[2] == "-" else fields[2]))
    return out


def emit_second_labels(rows: list[tuple[Segment, str | None]]) -> str:
    return "".join(
        f"{seg.start:.3f} {seg.end:.3f} {label if label is not None else '-'}\n"
        for seg, label in rows
    )


def load_second_labels(path: str | Path) -> list[tuple[Segment, str | None]]:
    return parse_second_labels(Path(path).read_text())


def save_second_labels(rows: list[tuple[Segment, str | None]], path: str | Path) -> None:
    Path(path).write_text(emit_second_labels(rows))


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------


def read_wav(data: bytes) -> tuple[int, np.ndarray]:
    """Decode mono 16-bit PCM WAV into (sample_rate, samples in [-1, 1))."""
    try:
        with wave.open(io.BytesIO(data), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            comp = wav.getcomptype()
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"not a readable WAV file: {exc}") from None
    if comp != "NONE":
        raise FormatError(f"unsupported compression {comp!r}")
    if channels != 1:
        raise FormatError(f"expected mono audio, got {channels} channels")
    if width != 2:
        raise FormatError(f"expected 16-bit PCM, got {8 * width}-bit")
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    return rate, samples


def load_wav(path: str | Path) -> tuple[int, np.ndarray]:
    return read_wav(Path(path).read_bytes())


def write_wav(sample_rate: int, samples: np.ndarray) -> bytes:
    """Encode samples in [-1, 1) as mono 16-bit PCM (mainly for tests)."""
    pcm = np.clip(np.asarray(samples) * 32768.0, -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(pcm.tobytes())
    return buf.getvalue()
