"""Utterance-level acoustic features: frame LLDs summarized by statistical functionals.

Frame-level low-level descriptors (25 ms frames, 10 ms hop, Hamming window for
spectral measures), each smoothed with a short moving average and paired with
its first-order delta:

  pcm_RMSenergy          frame RMS of the raw signal
  audspec_lengthL1norm   L1 norm of mel filterbank magnitudes
  zcr                    zero-crossing rate per sample
  spectralSlope          slope of the sum-normalized magnitude spectrum
                         over the speech-dominant band below 4 kHz
  spectralRollOff90.0    90%-energy roll-off point (fraction of Nyquist)
  spectralCentroid       magnitude-weighted mean frequency (fraction of Nyquist)
  spectralFlux           L2 magnitude change between consecutive frames
  mfcc[1..12]            mel-frequency cepstral coefficients
  F0                     autocorrelation pitch, 55-400 Hz, 0 when unvoiced
  voicingProb            normalized autocorrelation peak, clamped to [0, 1]

Each series is reduced by 15 functionals (mean, stddev, extremes, quartiles,
percentiles, peak statistics, upleveltime75), named `<lld>_<functional>` and
`<lld>_de_<functional>` for deltas.  Extraction is pure and deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import SAMPLE_RATE

FRAME_LEN = 0.025
HOP = 0.010
FFT_SIZE = 512
N_MELS = 26
MEL_FMIN = 50.0
N_MFCC = 12
F0_MIN = 55.0
F0_MAX = 400.0
VOICING_THRESHOLD = 0.45
SLOPE_FMAX = 4000.0  # upper edge (Hz) of the spectral-slope regression band
SMA_WINDOW = 3  # moving-average smoothing window (frames)

FUNCTIONAL_NAMES = (
    "mean", "stddev", "min", "max", "range",
    "quartile1", "quartile2", "quartile3", "iqr",
    "percentile1.0", "percentile99.0", "pctlrange0-1",
    "peakMeanAbs", "peakMeanMeanDist", "upleveltime75",
)


class FeatureError(ValueError):
    pass


class TooShortError(FeatureError):
    """Chunk shorter than one analysis frame."""


@dataclass(frozen=True)
class FrameSeries:
    name: str
    values: np.ndarray
    hop: float = HOP

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise FeatureError(f"LLD {self.name}: non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray
    source: str = "acoustic"  # acoustic | embedding | combined

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if len(self.names) != len(arr):
            raise FeatureError("names/values length mismatch")
        if len(set(self.names)) != len(self.names):
            raise FeatureError("duplicate feature names")
        if not np.all(np.isfinite(arr)):
            raise FeatureError("non-finite feature values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self) -> int:
        return len(self.values)


def frame_signal(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Fixed-length hop-spaced frames; the final partial frame is dropped."""
    if frame_len < hop or hop <= 0:
        raise FeatureError("need frame_len >= hop > 0")
    x = np.asarray(samples)
    if len(x) < frame_len:
        return np.empty((0, frame_len), dtype=float)
    n_frames = (len(x) - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_filterbank(sr: int, n_fft: int, n_mels: int, fmin: float) -> np.ndarray:
    """Triangular mel filters (n_mels x n_bins) over [fmin, sr/2]."""
    n_bins = n_fft // 2 + 1
    freqs = np.linspace(0, sr / 2, n_bins)
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(sr / 2), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (freqs - lo) / (ctr - lo)
        down = (hi - freqs) / (hi - ctr)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


_FILTERBANK = _mel_filterbank(SAMPLE_RATE, FFT_SIZE, N_MELS, MEL_FMIN)
_DCT = np.cos(np.pi / N_MELS * (np.arange(N_MELS) + 0.5)[None, :]
              * np.arange(1, N_MFCC + 1)[:, None])


def _smooth(x: np.ndarray, window: int = SMA_WINDOW) -> np.ndarray:
    """Centered moving average with edge shrinking (length preserved)."""
    if len(x) < 2 or window <= 1:
        return x
    kernel = np.ones(window) / window
    num = np.convolve(x, kernel, mode="same")
    den = np.convolve(np.ones(len(x)), kernel, mode="same")
    return num / den


def _delta(x: np.ndarray) -> np.ndarray:
    """Central first difference with clamped edges."""
    if len(x) < 2:
        return np.zeros_like(x)
    padded = np.concatenate([x[:1], x, x[-1:]])
    return 0.5 * (padded[2:] - padded[:-2])


def _autocorr_f0(frames: np.ndarray, sr: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame F0 (Hz) and voicing probability via normalized autocorrelation."""
    n_frames, flen = frames.shape
    lag_min = int(sr / F0_MAX)
    lag_max = min(int(sr / F0_MIN), flen - 1)
    f0 = np.zeros(n_frames)
    voicing = np.zeros(n_frames)
    if lag_max <= lag_min:
        return f0, voicing
    # normalized autocorrelation over all candidate lags, vectorized per lag
    lags = np.arange(lag_min, lag_max + 1)
    best_val = np.full(n_frames, -1.0)
    best_lag = np.zeros(n_frames, dtype=int)
    for lag in lags:
        a = frames[:, :flen - lag]
        b = frames[:, lag:]
        num = np.sum(a * b, axis=1)
        den = np.sqrt(np.sum(a * a, axis=1) * np.sum(b * b, axis=1))
        r = np.where(den > 0, num / np.maximum(den, 1e-30), 0.0)
        better = r > best_val
        best_val[better] = r[better]
        best_lag[better] = lag
    voiced = best_val > VOICING_THRESHOLD
    f0[voiced] = sr / best_lag[voiced]
    voicing = np.clip(best_val, 0.0, 1.0)
    return f0, voicing


def compute_llds(samples: np.ndarray, sample_rate: int = SAMPLE_RATE,
                 sma_window: int = SMA_WINDOW) -> list[FrameSeries]:
    """All documented LLD series (smoothed) plus their first-order deltas."""
    x = np.asarray(samples)
    if np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / 32768.0
    else:
        x = x.astype(np.float64)
    flen = int(round(FRAME_LEN * sample_rate))
    hop = int(round(HOP * sample_rate))
    frames = frame_signal(x, flen, hop)
    if frames.shape[0] == 0:
        raise TooShortError(f"signal of {len(x)} samples is shorter than one frame ({flen})")

    series: dict[str, np.ndarray] = {}

    series["pcm_RMSenergy"] = np.sqrt(np.mean(frames ** 2, axis=1))

    # sign changes per sample (DC-free white noise -> ~0.5)
    signs = np.sign(frames)
    signs[signs == 0] = 1
    series["zcr"] = np.mean(signs[:, 1:] != signs[:, :-1], axis=1)

    # per-frame DC removal before spectral and pitch analysis; RMS and ZCR
    # stay on the raw frames so sub-audio drift shows up only in energy
    ac_frames = frames - frames.mean(axis=1, keepdims=True)

    windowed = ac_frames * np.hamming(flen)[None, :]
    full_mag = np.abs(np.fft.rfft(windowed, n=FFT_SIZE, axis=1))
    # spectral shape measures skip the DC bin
    mag = full_mag[:, 1:]
    n_bins = mag.shape[1]
    freqs_norm = np.arange(1, n_bins + 1) / (full_mag.shape[1] - 1)  # fraction of Nyquist

    mel = full_mag @ _FILTERBANK.T
    series["audspec_lengthL1norm"] = mel.sum(axis=1)

    mag_sum = mag.sum(axis=1)
    safe_sum = np.maximum(mag_sum, 1e-30)
    norm_mag = mag / safe_sum[:, None]

    # regression slope of the normalized spectrum against normalized
    # frequency, restricted to the speech-dominant band below SLOPE_FMAX;
    # unlike the full-band centroid this ignores high-band content entirely
    band = freqs_norm <= SLOPE_FMAX / (sample_rate / 2)
    band_mag = mag[:, band]
    band_sum = np.maximum(band_mag.sum(axis=1), 1e-30)
    fc = freqs_norm[band] - freqs_norm[band].mean()
    denom = np.sum(fc ** 2)
    slope = (band_mag / band_sum[:, None]) @ fc / denom
    slope[mag_sum == 0] = 0.0
    series["spectralSlope"] = slope

    power = mag ** 2
    cum = np.cumsum(power, axis=1)
    total = cum[:, -1]
    rolloff = np.zeros(len(frames))
    nz = total > 0
    if nz.any():
        thresh = 0.9 * total[nz]
        idx = np.argmax(cum[nz] >= thresh[:, None], axis=1)
        rolloff[nz] = freqs_norm[idx]
    series["spectralRollOff90.0"] = rolloff

    centroid = (norm_mag @ freqs_norm)
    centroid[mag_sum == 0] = 0.0
    series["spectralCentroid"] = centroid

    flux = np.zeros(len(frames))
    if len(frames) > 1:
        flux[1:] = np.sqrt(np.sum((mag[1:] - mag[:-1]) ** 2, axis=1))
    series["spectralFlux"] = flux

    log_mel = np.log(np.maximum(mel, 1e-10))
    mfcc = log_mel @ _DCT.T
    for i in range(N_MFCC):
        series[f"mfcc[{i + 1}]"] = mfcc[:, i]

    f0, voicing = _autocorr_f0(ac_frames, sample_rate)
    series["F0"] = f0
    series["voicingProb"] = voicing

    out: list[FrameSeries] = []
    for name, vals in series.items():
        smoothed = _smooth(vals, sma_window)
        out.append(FrameSeries(name=name, values=smoothed))
        out.append(FrameSeries(name=f"{name}_de", values=_delta(smoothed)))
    return out


def _percentile(sorted_vals: np.ndarray, q: float) -> float:
    """Linear interpolation between closest ranks (q in [0, 100])."""
    n = len(sorted_vals)
    if n == 1:
        return float(sorted_vals[0])
    pos = q / 100.0 * (n - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_vals[lo] * (1 - frac) + sorted_vals[hi] * frac)


def apply_functionals(series: FrameSeries) -> list[tuple[str, float]]:
    """Reduce one frame series to the 15 documented utterance-level statistics."""
    x = series.values
    if len(x) == 0:
        raise FeatureError(f"{series.name}: empty series")
    srt = np.sort(x)
    vmin, vmax = float(srt[0]), float(srt[-1])
    rng = vmax - vmin
    q1 = _percentile(srt, 25)
    q2 = _percentile(srt, 50)
    q3 = _percentile(srt, 75)
    p1 = _percentile(srt, 1)
    p99 = _percentile(srt, 99)

    # strict local maxima over a 3-frame window, endpoints excluded
    if len(x) >= 3:
        interior = x[1:-1]
        is_peak = (interior > x[:-2]) & (interior > x[2:])
        peaks = interior[is_peak]
    else:
        peaks = np.empty(0)
    peak_mean_abs = float(np.mean(np.abs(peaks))) if len(peaks) else 0.0
    peak_mean_dist = float(np.mean(np.abs(peaks - x.mean()))) if len(peaks) else 0.0

    uplevel = float(np.mean(x > vmin + 0.75 * rng)) if rng > 0 else 0.0

    values = (
        float(x.mean()), float(x.std()), vmin, vmax, rng,
        q1, q2, q3, q3 - q1,
        p1, p99, p99 - p1,
        peak_mean_abs, peak_mean_dist, uplevel,
    )
    return [(f"{series.name}_{fn}", v) for fn, v in zip(FUNCTIONAL_NAMES, values)]


def feature_names() -> tuple[str, ...]:
    """The fixed, ordered name list of the acoustic feature vector."""
    base = ["pcm_RMSenergy", "zcr", "audspec_lengthL1norm", "spectralSlope",
            "spectralRollOff90.0", "spectralCentroid", "spectralFlux"]
    base += [f"mfcc[{i}]" for i in range(1, N_MFCC + 1)]
    base += ["F0", "voicingProb"]
    names = []
    for lld in base:
        for variant in (lld, f"{lld}_de"):
            names.extend(f"{variant}_{fn}" for fn in FUNCTIONAL_NAMES)
    return tuple(names)


def extract_features(samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> FeatureVector:
    """Deterministic utterance-level acoustic feature vector for one chunk."""
    computed: dict[str, float] = {}
    for lld in compute_llds(samples, sample_rate):
        computed.update(apply_functionals(lld))
    canonical = feature_names()
    vals = np.array([computed[n] for n in canonical])
    return FeatureVector(names=canonical, values=vals, source="acoustic")


def concat_features(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    """Feature-level combination; name sets must be disjoint."""
    overlap = set(a.names) & set(b.names)
    if overlap:
        raise FeatureError(f"name collision: {sorted(overlap)[:5]}")
    return FeatureVector(
        names=a.names + b.names,
        values=np.concatenate([a.values, b.values]),
        source="combined",
    )


# ---------------------------------------------------------------------------
# Tabular feature/embedding files: `chunk_id,name1,...` header + one row per
# chunk, values printed with repr() so re-parsing is bit-exact.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    rows: dict[str, np.ndarray]
    names: tuple[str, ...] = ()

    def vector(self, chunk_id: str) -> FeatureVector:
        names = self.names or tuple(f"emb[{i}]" for i in range(self.dim))
        return FeatureVector(names=names, values=self.rows[chunk_id], source="embedding")


def save_feature_table(vectors: dict[str, FeatureVector], path: str | Path) -> None:
    items = list(vectors.items())
    if not items:
        raise FeatureError("nothing to save")
    names = items[0][1].names
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chunk_id", *names])
        for cid, vec in items:
            if vec.names != names:
                raise FeatureError(f"{cid}: inconsistent feature names")
            writer.writerow([cid, *[repr(v) for v in vec.values.tolist()]])


def load_feature_table(path: str | Path, source: str = "acoustic") -> dict[str, FeatureVector]:
    table = load_embeddings(path)
    return {cid: FeatureVector(names=table.names, values=vec, source=source)
            for cid, vec in table.rows.items()}


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load a tabular feature/embedding file keyed by chunk_id."""
    path = Path(path)
    rows: dict[str, np.ndarray] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return EmbeddingTable(dim=0, rows={})
        if not header or header[0] != "chunk_id":
            raise FeatureError(f"{path}: first header column must be chunk_id")
        names = tuple(header[1:])
        dim = len(names)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            cid = row[0]
            if cid in rows:
                raise FeatureError(f"{path}:{lineno}: duplicate chunk_id {cid!r}")
            if len(row) - 1 != dim:
                raise FeatureError(
                    f"{path}:{lineno}: ragged row of {len(row) - 1} values, expected {dim}"
                )
            vec = np.array([float(v) for v in row[1:]])
            if not np.all(np.isfinite(vec)):
                raise FeatureError(f"{path}:{lineno}: non-finite value")
            rows[cid] = vec
    return EmbeddingTable(dim=dim, rows=rows, names=names)
