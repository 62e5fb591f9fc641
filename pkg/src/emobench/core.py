"""Domain types, WAV I/O and the corpus manifest shared by every pipeline stage.

All types are immutable after construction and safe to share across threads.
Audio is fixed at 16 kHz / 16-bit / mono PCM: mismatched files are rejected,
never resampled, so corpus errors surface instead of hiding.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SAMPLE_RATE = 16000
MANIFEST_SCHEMA_VERSION = 1

SENTIMENTS = ("positive", "negative", "neutral")


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class ManifestError(CorpusError):
    """Manifest file missing, malformed, or wrong schema version."""


class DanglingReferenceError(ManifestError):
    """A chunk references a recording_id that is not in the manifest."""


class DuplicateIdError(ManifestError):
    """Two chunks (or recordings) share the same id."""


class UnsupportedFormatError(CorpusError):
    """WAV file is not 16 kHz / 16-bit / mono PCM."""


class Dimension(str, Enum):
    VALENCE = "valence"
    AROUSAL = "arousal"
    DOMINANCE = "dominance"


DIMENSIONS = (Dimension.VALENCE, Dimension.AROUSAL, Dimension.DOMINANCE)


@dataclass(frozen=True)
class Recording:
    """One monologue recording: pseudonymized speaker, 16 kHz mono PCM samples."""

    id: str
    speaker: str
    samples: np.ndarray  # int16, read-only
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedFormatError(
                f"recording {self.id}: sample_rate {self.sample_rate} != {SAMPLE_RATE}"
            )
        if not self.speaker:
            raise CorpusError(f"recording {self.id}: empty speaker id")
        arr = np.asarray(self.samples, dtype=np.int16)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AudioChunk:
    """A silence-delimited span of one recording; the unit of annotation."""

    id: str
    recording_id: str
    speaker: str
    start: float
    end: float
    transcript: Optional[str] = None
    sentiment: Optional[str] = None

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise CorpusError(f"chunk {self.id}: bad bounds [{self.start}, {self.end}]")
        if self.sentiment is not None and self.sentiment not in SENTIMENTS:
            raise CorpusError(f"chunk {self.id}: unknown sentiment {self.sentiment!r}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def with_sentiment(self, sentiment: str) -> "AudioChunk":
        return replace(self, sentiment=sentiment)


def chunk_id(recording_id: str, start: float, end: float) -> str:
    """Deterministic chunk id: `<recording_id>#<start_ms>-<end_ms>`."""
    return f"{recording_id}#{round(start * 1000)}-{round(end * 1000)}"


@dataclass(frozen=True)
class RecordingRef:
    """Manifest entry pointing at a WAV file on disk."""

    id: str
    speaker: str
    path: str


@dataclass(frozen=True)
class CorpusManifest:
    recordings: tuple[RecordingRef, ...]
    chunks: tuple[AudioChunk, ...]
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "recordings", tuple(self.recordings))
        object.__setattr__(self, "chunks", tuple(self.chunks))
        rec_ids = [r.id for r in self.recordings]
        if len(set(rec_ids)) != len(rec_ids):
            raise DuplicateIdError("duplicate recording id in manifest")
        chunk_ids = [c.id for c in self.chunks]
        if len(set(chunk_ids)) != len(chunk_ids):
            raise DuplicateIdError("duplicate chunk id in manifest")
        known = set(rec_ids)
        for c in self.chunks:
            if c.recording_id not in known:
                raise DanglingReferenceError(
                    f"chunk {c.id} references unknown recording {c.recording_id!r}"
                )

    @property
    def speakers(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.recordings:
            seen.setdefault(r.speaker, None)
        return tuple(seen)

    def recording_ref(self, recording_id: str) -> RecordingRef:
        for r in self.recordings:
            if r.id == recording_id:
                return r
        raise DanglingReferenceError(f"unknown recording {recording_id!r}")


# ---------------------------------------------------------------------------
# Manifest serialization: one JSON header line followed by one JSON record per
# line (kind = recording | chunk).  Human-diffable and append-friendly.
# ---------------------------------------------------------------------------

def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": manifest.schema_version}) + "\n")
        for r in manifest.recordings:
            fh.write(json.dumps(
                {"kind": "recording", "id": r.id, "speaker": r.speaker, "path": r.path}
            ) + "\n")
        for c in manifest.chunks:
            rec = {
                "kind": "chunk",
                "id": c.id,
                "recording_id": c.recording_id,
                "speaker": c.speaker,
                "start": c.start,
                "end": c.end,
            }
            if c.transcript is not None:
                rec["transcript"] = c.transcript
            if c.sentiment is not None:
                rec["sentiment"] = c.sentiment
            fh.write(json.dumps(rec) + "\n")


def load_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    recordings: list[RecordingRef] = []
    chunks: list[AudioChunk] = []
    with path.open("r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ManifestError(f"{path}: empty manifest")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: bad header: {exc}") from exc
        version = header.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise ManifestError(
                f"{path}: schema_version {version!r}, expected {MANIFEST_SCHEMA_VERSION}"
            )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: bad record: {exc}") from exc
            kind = rec.get("kind")
            if kind == "recording":
                recordings.append(
                    RecordingRef(id=rec["id"], speaker=rec["speaker"], path=rec["path"])
                )
            elif kind == "chunk":
                chunks.append(AudioChunk(
                    id=rec["id"],
                    recording_id=rec["recording_id"],
                    speaker=rec["speaker"],
                    start=rec["start"],
                    end=rec["end"],
                    transcript=rec.get("transcript"),
                    sentiment=rec.get("sentiment"),
                ))
            else:
                raise ManifestError(f"{path}:{lineno}: unknown record kind {kind!r}")
    return CorpusManifest(recordings=tuple(recordings), chunks=tuple(chunks))


# ---------------------------------------------------------------------------
# WAV I/O (RIFF PCM, 16 kHz, 16-bit, mono; anything else is rejected)
# ---------------------------------------------------------------------------

def read_wav(path: str | Path, recording_id: Optional[str] = None,
             speaker: str = "unknown") -> Recording:
    """Decode a 16 kHz / 16-bit / mono PCM WAV file losslessly."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            framerate = wf.getframerate()
            comptype = wf.getcomptype()
            if comptype != "NONE":
                raise UnsupportedFormatError(f"{path}: compressed WAV ({comptype})")
            if n_channels != 1:
                raise UnsupportedFormatError(f"{path}: {n_channels} channels, need mono")
            if sampwidth != 2:
                raise UnsupportedFormatError(f"{path}: {8 * sampwidth}-bit, need 16-bit")
            if framerate != SAMPLE_RATE:
                raise UnsupportedFormatError(f"{path}: {framerate} Hz, need {SAMPLE_RATE} Hz")
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: not a PCM RIFF/WAVE file: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2")
    return Recording(id=recording_id or path.stem, speaker=speaker, samples=samples)


def write_wav(path: str | Path, samples: Sequence[int] | np.ndarray) -> None:
    """Write int16 samples as a 16 kHz mono PCM WAV file (bit-exact round trip)."""
    arr = np.asarray(samples, dtype=np.int16)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(arr.astype("<i2").tobytes())


def load_sentiment_sidecar(path: str | Path) -> dict[str, str]:
    """Read the `chunk_id,label` sidecar produced by an external sentiment model."""
    labels: dict[str, str] = {}
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                cid, label = line.rsplit(",", 1)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: expected `chunk_id,label`") from exc
            label = label.strip()
            if label not in SENTIMENTS:
                raise CorpusError(f"{path}:{lineno}: unknown sentiment {label!r}")
            labels[cid.strip()] = label
    return labels


def save_sentiment_sidecar(labels: dict[str, str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for cid, label in labels.items():
            fh.write(f"{cid},{label}\n")
