"""Energy-based chunking of recordings and sentiment-quota subset selection.

A frame is silent when its RMS falls below `silence_floor_ratio` times the
loudest frame's RMS.  Silent runs of at least `min_silence` seconds split the
recording; the speech spans in between become chunks after a duration filter
(drop < min_chunk, split > max_chunk at the quietest frame in the middle half
of the span).

For the tiling guarantee each analysis frame *owns* the hop-sized sample span
starting at its left edge (the last frame also owns the tail), so chunks,
silences and discarded short spans partition the recording exactly.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .core import AudioChunk, Recording, chunk_id


class SegmenterError(ValueError):
    pass


class MissingLabelError(SegmenterError):
    """A selection candidate has no sentiment label."""


@dataclass(frozen=True)
class SilenceConfig:
    frame_len: float = 0.025
    hop: float = 0.010
    silence_floor_ratio: float = 0.05
    min_silence: float = 0.3
    min_chunk: float = 1.5
    max_chunk: float = 15.0

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise SegmenterError("need 0 < hop <= frame_len")
        if not 0 < self.silence_floor_ratio < 1:
            raise SegmenterError("silence_floor_ratio must be in (0, 1)")
        if not 0 < self.min_chunk < self.max_chunk:
            raise SegmenterError("need 0 < min_chunk < max_chunk")


@dataclass(frozen=True)
class SelectionPolicy:
    """Per-speaker annotation quota split by sentiment ratio (e.g. 4:4:2)."""

    per_speaker_quota: int = 10
    ratio: tuple[int, int, int] = (4, 4, 2)  # positive, negative, neutral
    seed: int = 0

    def __post_init__(self):
        if self.per_speaker_quota <= 0:
            raise SegmenterError("quota must be positive")
        total = sum(self.ratio)
        if total <= 0 or self.per_speaker_quota % total != 0:
            raise SegmenterError(
                f"quota {self.per_speaker_quota} not divisible by ratio sum {total}"
            )

    def targets(self) -> dict[str, int]:
        scale = self.per_speaker_quota // sum(self.ratio)
        return {"positive": self.ratio[0] * scale,
                "negative": self.ratio[1] * scale,
                "neutral": self.ratio[2] * scale}


def _frame_rms(samples: np.ndarray, cfg: SilenceConfig, sample_rate: int):
    """Per-frame RMS on the float-scaled signal; returns (rms, frame_samples, hop_samples)."""
    flen = int(round(cfg.frame_len * sample_rate))
    hop = int(round(cfg.hop * sample_rate))
    x = samples.astype(np.float64) / 32768.0
    if len(x) < flen:
        return np.empty(0), flen, hop
    n_frames = (len(x) - flen) // hop + 1
    idx = np.arange(flen)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx]
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    return rms, flen, hop


def _frame_spans(n_frames: int, n_samples: int, hop: int) -> list[tuple[int, int]]:
    """Hop-sized ownership span per frame; the last frame owns through the end."""
    spans = []
    for k in range(n_frames):
        start = k * hop
        end = (k + 1) * hop if k < n_frames - 1 else n_samples
        spans.append((start, end))
    return spans


def _silent_runs(rms: np.ndarray, cfg: SilenceConfig, sample_rate: int,
                 n_samples: int, hop: int) -> list[tuple[int, int]]:
    """Runs of silent frames (as frame-index ranges) lasting >= min_silence."""
    if len(rms) == 0:
        return []
    peak = rms.max()
    silent = rms < cfg.silence_floor_ratio * peak if peak > 0 else np.ones(len(rms), bool)
    spans = _frame_spans(len(rms), n_samples, hop)
    runs = []
    i = 0
    while i < len(silent):
        if not silent[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(silent) and silent[j + 1]:
            j += 1
        dur = (spans[j][1] - spans[i][0]) / sample_rate
        if dur >= cfg.min_silence:
            runs.append((i, j))
        i = j + 1
    return runs


def detect_silences(recording: Recording, cfg: SilenceConfig) -> list[tuple[float, float]]:
    """Disjoint, sorted silence intervals of at least min_silence seconds."""
    rms, flen, hop = _frame_rms(recording.samples, cfg, recording.sample_rate)
    if len(rms) == 0:
        return []
    spans = _frame_spans(len(rms), len(recording.samples), hop)
    out = []
    for i, j in _silent_runs(rms, cfg, recording.sample_rate, len(recording.samples), hop):
        out.append((spans[i][0] / recording.sample_rate,
                    spans[j][1] / recording.sample_rate))
    return out


def _split_long(start_f: int, end_f: int, rms: np.ndarray, max_frames: int) -> list[tuple[int, int]]:
    """Split a frame range longer than max_frames at its quietest interior frame,
    repeatedly; iterative with an explicit stack because near-constant energy can
    push the cut to one edge and make the halves maximally unbalanced."""
    out: list[tuple[int, int]] = []
    stack = [(start_f, end_f)]
    while stack:
        s, e = stack.pop()
        if e - s + 1 <= max_frames:
            out.append((s, e))
            continue
        # cut in the middle half only: an edge cut (possible when energy is
        # near-constant) would shave off slivers below the duration filter
        lo = s + max(1, (e - s) // 4)
        hi = e - max(1, (e - s) // 4)
        cut = lo + int(np.argmin(rms[lo:hi])) if hi > lo else s + (e - s) // 2
        stack.append((cut + 1, e))
        stack.append((s, cut))
    return out


def chunk_recording(recording: Recording, cfg: SilenceConfig) -> list[AudioChunk]:
    """Maximal non-silent spans, duration-filtered and split to fit max_chunk."""
    rms, flen, hop = _frame_rms(recording.samples, cfg, recording.sample_rate)
    if len(rms) == 0:
        return []
    n = len(recording.samples)
    sr = recording.sample_rate
    spans = _frame_spans(len(rms), n, hop)
    runs = _silent_runs(rms, cfg, sr, n, hop)

    # speech frame ranges between silent runs
    speech: list[tuple[int, int]] = []
    prev_end = -1
    for i, j in runs:
        if i > prev_end + 1:
            speech.append((prev_end + 1, i - 1))
        prev_end = j
    if prev_end + 1 <= len(rms) - 1:
        speech.append((prev_end + 1, len(rms) - 1))

    max_frames = max(1, int(cfg.max_chunk * sr) // hop)
    chunks = []
    for s, e in speech:
        for ss, ee in _split_long(s, e, rms, max_frames):
            start = spans[ss][0] / sr
            end = spans[ee][1] / sr
            if end - start < cfg.min_chunk:
                continue
            chunks.append(AudioChunk(
                id=chunk_id(recording.id, start, end),
                recording_id=recording.id,
                speaker=recording.speaker,
                start=start,
                end=end,
            ))
    return chunks


def select_chunks(chunks: list[AudioChunk], policy: SelectionPolicy) -> list[AudioChunk]:
    """Balanced per-speaker annotation subset.

    Per speaker: draw up to the per-sentiment targets from a seeded shuffle;
    shortfalls are backfilled from the speaker's remaining chunks in the fixed
    order positive -> negative -> neutral.  Deterministic given the seed and
    invariant under input permutation (candidates are sorted by id first).
    """
    unlabeled = [c.id for c in chunks if c.sentiment is None]
    if unlabeled:
        raise MissingLabelError(f"chunks without sentiment label: {unlabeled[:5]}")

    by_speaker: dict[str, list[AudioChunk]] = {}
    for c in sorted(chunks, key=lambda c: c.id):
        by_speaker.setdefault(c.speaker, []).append(c)

    targets = policy.targets()
    selected: list[AudioChunk] = []
    for speaker in sorted(by_speaker):
        # stable per-speaker stream: crc32 is process-independent, unlike hash()
        rng = np.random.default_rng([policy.seed, zlib.crc32(speaker.encode())])
        pool = list(by_speaker[speaker])
        rng.shuffle(pool)
        by_sent = {s: [c for c in pool if c.sentiment == s] for s in targets}
        picked: list[AudioChunk] = []
        for sent in ("positive", "negative", "neutral"):
            take = min(targets[sent], len(by_sent[sent]))
            picked.extend(by_sent[sent][:take])
            by_sent[sent] = by_sent[sent][take:]
        # backfill any deficit from remaining chunks, positive -> negative -> neutral
        deficit = policy.per_speaker_quota - len(picked)
        for sent in ("positive", "negative", "neutral"):
            if deficit <= 0:
                break
            take = min(deficit, len(by_sent[sent]))
            picked.extend(by_sent[sent][:take])
            deficit -= take
        selected.extend(sorted(picked, key=lambda c: c.id))
    return selected
