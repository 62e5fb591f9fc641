import numpy as np
import pytest

from emobench.core import AudioChunk, Recording, SAMPLE_RATE
from emobench.segmenter import (
    MissingLabelError, SegmenterError, SelectionPolicy, SilenceConfig,
    chunk_recording, detect_silences, select_chunks,
)

CFG = SilenceConfig()


def _rec(samples, rec_id="r0", speaker="s0"):
    return Recording(id=rec_id, speaker=speaker, samples=np.asarray(samples, np.int16))


def _tone(duration, freq=220.0, amp=9000):
    t = np.arange(int(duration * SAMPLE_RATE)) / SAMPLE_RATE
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.int16)


def _random_recording(rng):
    """Alternating speech/silence spans of random durations."""
    pieces = []
    speaking = rng.random() < 0.5
    for _ in range(int(rng.integers(2, 9))):
        dur = float(rng.uniform(0.05, 4.0))
        if speaking:
            pieces.append(_tone(dur, freq=float(rng.uniform(100, 500))))
        else:
            pieces.append(np.zeros(int(dur * SAMPLE_RATE), np.int16))
        speaking = not speaking
    return _rec(np.concatenate(pieces))


def _assert_tiling(rec, cfg=CFG):
    n = len(rec.samples)
    chunks = chunk_recording(rec, cfg)
    silences = detect_silences(rec, cfg)
    marks = np.zeros(n, np.int8)
    for c in chunks:
        marks[int(round(c.start * SAMPLE_RATE)):int(round(c.end * SAMPLE_RATE))] += 1
    for s, e in silences:
        marks[int(round(s * SAMPLE_RATE)):int(round(e * SAMPLE_RATE))] += 1
    assert marks.max() <= 1, "chunks and silences overlap"
    # uncovered spans are exactly the discarded too-short speech spans
    uncovered = np.flatnonzero(np.diff(np.concatenate([[1], marks, [1]])))
    for lo, hi in zip(uncovered[::2], uncovered[1::2]):
        assert (hi - lo) / SAMPLE_RATE < cfg.min_chunk
    return chunks, silences


def test_tiling_on_random_recordings():
    rng = np.random.default_rng(0)
    for _ in range(30):
        _assert_tiling(_random_recording(rng))


def test_tone_silence_tone_yields_two_chunks():
    rec = _rec(np.concatenate([_tone(2.0), np.zeros(SAMPLE_RATE, np.int16), _tone(2.0)]))
    chunks = chunk_recording(rec, CFG)
    assert len(chunks) == 2
    assert chunks[0].start == 0.0
    assert chunks[0].end == pytest.approx(2.0, abs=CFG.frame_len)
    assert chunks[1].start == pytest.approx(3.0, abs=CFG.frame_len)
    assert chunks[1].end == pytest.approx(5.0, abs=CFG.frame_len)


def test_all_silent_recording_has_no_chunks():
    rec = _rec(np.zeros(3 * SAMPLE_RATE, np.int16))
    assert chunk_recording(rec, CFG) == []
    (s, e), = detect_silences(rec, CFG)
    assert s == 0.0 and e == pytest.approx(3.0)


def test_too_short_recording():
    rec = _rec(np.zeros(10, np.int16))
    assert chunk_recording(rec, CFG) == []
    assert detect_silences(rec, CFG) == []


def test_short_speech_discarded():
    rec = _rec(np.concatenate([np.zeros(SAMPLE_RATE, np.int16), _tone(0.5),
                               np.zeros(SAMPLE_RATE, np.int16)]))
    assert chunk_recording(rec, CFG) == []


def test_long_span_split_to_max_chunk():
    rec = _rec(_tone(40.0))
    chunks = chunk_recording(rec, CFG)
    assert len(chunks) >= 3
    for c in chunks:
        assert c.end - c.start <= CFG.max_chunk + CFG.frame_len
    _assert_tiling(rec)


def test_config_validation():
    with pytest.raises(SegmenterError):
        SilenceConfig(hop=0.05, frame_len=0.025)
    with pytest.raises(SegmenterError):
        SilenceConfig(silence_floor_ratio=1.5)
    with pytest.raises(SegmenterError):
        SelectionPolicy(per_speaker_quota=7, ratio=(4, 4, 2))


def _labeled_chunks(per_speaker, speakers=("sA", "sB")):
    chunks = []
    for sp in speakers:
        for i, sent in enumerate(per_speaker):
            start = float(2 * i)
            chunks.append(AudioChunk(id=f"{sp}r#{i:04d}", recording_id=f"{sp}r",
                                     speaker=sp, start=start, end=start + 1.8,
                                     sentiment=sent))
    return chunks


def test_select_chunks_quota_and_ratio():
    per_speaker = ["positive"] * 8 + ["negative"] * 8 + ["neutral"] * 8
    sel = select_chunks(_labeled_chunks(per_speaker), SelectionPolicy(10, (4, 4, 2), seed=1))
    assert len(sel) == 20
    for sp in ("sA", "sB"):
        mine = [c for c in sel if c.speaker == sp]
        counts = {s: sum(c.sentiment == s for c in mine)
                  for s in ("positive", "negative", "neutral")}
        assert counts == {"positive": 4, "negative": 4, "neutral": 2}


def test_select_chunks_backfills_shortfall():
    per_speaker = ["positive"] * 9 + ["neutral"] * 1  # no negatives at all
    sel = select_chunks(_labeled_chunks(per_speaker, speakers=("sA",)),
                        SelectionPolicy(10, (4, 4, 2), seed=0))
    assert len(sel) == 10  # deficit absorbed by extra positives


def test_select_chunks_deterministic_and_order_invariant():
    per_speaker = ["positive"] * 10 + ["negative"] * 10 + ["neutral"] * 10
    chunks = _labeled_chunks(per_speaker)
    policy = SelectionPolicy(10, (4, 4, 2), seed=5)
    a = select_chunks(chunks, policy)
    b = select_chunks(list(reversed(chunks)), policy)
    assert a == b
    c = select_chunks(chunks, SelectionPolicy(10, (4, 4, 2), seed=6))
    assert a != c  # different seed, different draw


def test_select_chunks_missing_label():
    chunks = _labeled_chunks(["positive"] * 10)
    chunks.append(AudioChunk(id="zz#0-1800", recording_id="sAr", speaker="sA",
                             start=0.0, end=1.8))
    with pytest.raises(MissingLabelError):
        select_chunks(chunks, SelectionPolicy(10, (4, 4, 2)))
