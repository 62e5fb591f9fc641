"""SAM-scale transforms, evaluator-weighted label aggregation and agreement stats.

Aggregation pipeline per emotion dimension:
  1. transform each 1..9 SAM response to [0, 1];
  2. weight each annotator by the Pearson correlation of their responses with
     the per-chunk mean response of all annotators (self included), estimated
     on chunks every annotator rated;
  3. per chunk, emit the weighted mean of the transformed responses, with
     negative/undefined weights clamped to zero and weights renormalized over
     the annotators who rated that chunk.

Assessment quality sigma is the population RMS deviation of annotator values
around the aggregated label.  Corpus agreement r is the mean raw annotator
weight (the clamped mean is reported alongside).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import DIMENSIONS, Dimension
from .metrics import UndefinedCorrelationError, pearson


class RatingError(ValueError):
    """Invalid rating record."""


class InsufficientDataError(ValueError):
    """Too few commonly rated chunks to estimate annotator weights."""


@dataclass(frozen=True)
class RatingRecord:
    """One annotator's SAM response for one chunk on one dimension."""

    annotator_id: str
    chunk_id: str
    dimension: Dimension
    sam: int
    timestamp: str = ""  # ISO-8601 UTC instant; empty when unknown

    def __post_init__(self):
        if not isinstance(self.sam, int) or not 1 <= self.sam <= 9:
            raise RatingError(f"SAM value {self.sam!r} outside 1..9")


@dataclass(frozen=True)
class AnnotatorWeight:
    annotator_id: str
    dimension: Dimension
    weight: float  # raw correlation in [-1, 1]; clamp happens at aggregation


@dataclass(frozen=True)
class EweLabel:
    """Aggregated VAD triple in [0,1] with per-dimension assessment quality."""

    chunk_id: str
    valence: float
    arousal: float
    dominance: float
    sigma_v: float
    sigma_a: float
    sigma_d: float

    def value(self, dimension: Dimension) -> float:
        return {Dimension.VALENCE: self.valence,
                Dimension.AROUSAL: self.arousal,
                Dimension.DOMINANCE: self.dominance}[dimension]

    def sigma(self, dimension: Dimension) -> float:
        return {Dimension.VALENCE: self.sigma_v,
                Dimension.AROUSAL: self.sigma_a,
                Dimension.DOMINANCE: self.sigma_d}[dimension]


@dataclass(frozen=True)
class DimensionAgreement:
    inter_annotator_r: float         # mean of raw weights
    inter_annotator_r_clamped: float  # mean of weights clamped to [0, 1]
    sigma_bar: float
    n_chunks: int
    n_annotators: int


@dataclass(frozen=True)
class AgreementReport:
    per_dimension: dict[Dimension, DimensionAgreement]


def transform_sam(sam: int) -> float:
    """Map the 9-point SAM response onto [0, 1]."""
    if not 1 <= sam <= 9:
        raise RatingError(f"SAM value {sam!r} outside 1..9")
    return (sam - 1) / 8.0


def latest_ratings(ratings: Iterable[RatingRecord]) -> list[RatingRecord]:
    """Collapse resubmissions: last record per (annotator, chunk, dimension) wins."""
    latest: dict[tuple[str, str, Dimension], RatingRecord] = {}
    for r in ratings:
        latest[(r.annotator_id, r.chunk_id, r.dimension)] = r
    return list(latest.values())


def _rating_matrix(ratings: list[RatingRecord], dimension: Dimension):
    """Transformed ratings as a (chunk x annotator) matrix with NaN for missing."""
    recs = [r for r in latest_ratings(ratings) if r.dimension == dimension]
    annotators = sorted({r.annotator_id for r in recs})
    chunk_ids = sorted({r.chunk_id for r in recs})
    a_index = {a: i for i, a in enumerate(annotators)}
    c_index = {c: i for i, c in enumerate(chunk_ids)}
    mat = np.full((len(chunk_ids), len(annotators)), np.nan)
    for r in recs:
        mat[c_index[r.chunk_id], a_index[r.annotator_id]] = transform_sam(r.sam)
    return chunk_ids, annotators, mat


def annotator_weights(ratings: Iterable[RatingRecord],
                      dimension: Dimension) -> list[AnnotatorWeight]:
    """Per-annotator reliability weight on one dimension.

    The weight is the Pearson correlation between the annotator's transformed
    ratings and the per-chunk mean over all annotators (self included), using
    only chunks rated by everyone.  A constant-rating annotator gets weight 0.
    """
    ratings = list(ratings)
    chunk_ids, annotators, mat = _rating_matrix(ratings, dimension)
    if not annotators:
        raise InsufficientDataError(f"no ratings for {dimension.value}")
    complete = ~np.isnan(mat).any(axis=1)
    common = mat[complete]
    if common.shape[0] < 2:
        raise InsufficientDataError(
            f"{dimension.value}: only {common.shape[0]} chunks rated by all "
            f"{len(annotators)} annotators; need >= 2"
        )
    mean_ratings = common.mean(axis=1)
    weights = []
    for j, annot in enumerate(annotators):
        try:
            w = pearson(common[:, j], mean_ratings)
        except UndefinedCorrelationError:
            w = 0.0
        weights.append(AnnotatorWeight(annot, dimension, w))
    return weights


def ewe_labels(ratings: Iterable[RatingRecord],
               weights: Optional[dict[Dimension, list[AnnotatorWeight]]] = None,
               ) -> list[EweLabel]:
    """Aggregate all ratings into one VAD label (+ sigma) per chunk.

    Chunks missing ratings on any dimension are dropped with a warning.  If
    every rater of a chunk has weight <= 0, the unweighted mean is used.
    """
    ratings = list(ratings)
    if weights is None:
        weights = {d: annotator_weights(ratings, d) for d in DIMENSIONS}
    per_dim: dict[Dimension, tuple[dict[str, float], dict[str, float]]] = {}
    all_chunks: set[str] = set()
    for dim in DIMENSIONS:
        wmap = {w.annotator_id: w.weight for w in weights[dim]}
        chunk_ids, annotators, mat = _rating_matrix(ratings, dim)
        missing = [a for a in annotators if a not in wmap]
        if missing:
            raise InsufficientDataError(
                f"{dim.value}: no weight for annotator(s) {missing}"
            )
        w = np.array([max(wmap[a], 0.0) for a in annotators])
        rated = ~np.isnan(mat)
        xs = np.nan_to_num(mat)
        wk = w[None, :] * rated
        total = wk.sum(axis=1)
        n_rated = rated.sum(axis=1)
        ewe = np.where(total > 0,
                       (wk * xs).sum(axis=1) / np.where(total > 0, total, 1.0),
                       xs.sum(axis=1) / np.maximum(n_rated, 1))
        with np.errstate(invalid="ignore"):
            sigma = np.sqrt(np.nansum((mat - ewe[:, None]) ** 2, axis=1)
                            / np.maximum(n_rated, 1))
        values: dict[str, float] = {}
        sigmas: dict[str, float] = {}
        for i, cid in enumerate(chunk_ids):
            if n_rated[i]:
                values[cid] = float(ewe[i])
                sigmas[cid] = float(sigma[i])
        per_dim[dim] = (values, sigmas)
        all_chunks.update(values)

    labels = []
    for cid in sorted(all_chunks):
        if any(cid not in per_dim[d][0] for d in DIMENSIONS):
            warnings.warn(f"chunk {cid}: missing ratings on some dimension, skipped")
            continue
        labels.append(EweLabel(
            chunk_id=cid,
            valence=per_dim[Dimension.VALENCE][0][cid],
            arousal=per_dim[Dimension.AROUSAL][0][cid],
            dominance=per_dim[Dimension.DOMINANCE][0][cid],
            sigma_v=per_dim[Dimension.VALENCE][1][cid],
            sigma_a=per_dim[Dimension.AROUSAL][1][cid],
            sigma_d=per_dim[Dimension.DOMINANCE][1][cid],
        ))
    return labels


def assessment_quality(chunk_values: Iterable[float], ewe_value: float) -> float:
    """Population RMS deviation of annotator values around the aggregated label."""
    x = np.asarray(list(chunk_values), dtype=float)
    if len(x) == 0:
        raise ValueError("need at least one rating")
    return float(np.sqrt(np.mean((x - ewe_value) ** 2)))


def agreement_report(ratings: Iterable[RatingRecord]) -> AgreementReport:
    """Corpus-level agreement: mean annotator weight r and mean sigma per dimension."""
    ratings = list(ratings)
    weights = {d: annotator_weights(ratings, d) for d in DIMENSIONS}
    labels = ewe_labels(ratings, weights)
    per_dimension = {}
    for dim in DIMENSIONS:
        ws = np.array([w.weight for w in weights[dim]])
        sigmas = np.array([lab.sigma(dim) for lab in labels])
        per_dimension[dim] = DimensionAgreement(
            inter_annotator_r=float(ws.mean()),
            inter_annotator_r_clamped=float(np.clip(ws, 0.0, 1.0).mean()),
            sigma_bar=float(sigmas.mean()) if len(sigmas) else 0.0,
            n_chunks=len(labels),
            n_annotators=len(ws),
        )
    return AgreementReport(per_dimension=per_dimension)


# ---------------------------------------------------------------------------
# A/B qualification test scoring
# ---------------------------------------------------------------------------

def ab_test_score(responses: Iterable[tuple[str, str]],
                  key: Iterable[tuple[str, str]]) -> tuple[float, int]:
    """Percent correct for one dimension's pair set.

    Returns (raw fraction, integer percent).  Every response pair_id must
    appear in the key; the score is over the answered pairs.
    """
    key_map = dict(key)
    responses = list(responses)
    if not responses:
        return 0.0, 0
    correct = 0
    for pair_id, chosen in responses:
        if pair_id not in key_map:
            raise KeyError(f"unknown A/B pair id {pair_id!r}")
        if chosen == key_map[pair_id]:
            correct += 1
    frac = correct / len(responses)
    return frac, round(100 * frac)


# ---------------------------------------------------------------------------
# Tabular import/export
# ---------------------------------------------------------------------------

RATINGS_HEADER = ["annotator_id", "chunk_id", "dimension", "sam", "timestamp"]
LABELS_HEADER = ["chunk_id", "valence", "arousal", "dominance",
                 "sigma_v", "sigma_a", "sigma_d"]


def save_ratings(ratings: Iterable[RatingRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATINGS_HEADER)
        for r in ratings:
            writer.writerow([r.annotator_id, r.chunk_id, r.dimension.value,
                             r.sam, r.timestamp])


def load_ratings(path: str | Path) -> list[RatingRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != RATINGS_HEADER:
            raise RatingError(f"{path}: unexpected header {header}")
        for row in reader:
            if not row:
                continue
            records.append(RatingRecord(
                annotator_id=row[0], chunk_id=row[1],
                dimension=Dimension(row[2]), sam=int(row[3]), timestamp=row[4],
            ))
    return records


def save_labels(labels: Iterable[EweLabel], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABELS_HEADER)
        for lab in labels:
            writer.writerow([lab.chunk_id] + [repr(float(v)) for v in (
                lab.valence, lab.arousal, lab.dominance,
                lab.sigma_v, lab.sigma_a, lab.sigma_d)])


def load_labels(path: str | Path) -> list[EweLabel]:
    labels = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != LABELS_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            if not row:
                continue
            labels.append(EweLabel(row[0], *[float(v) for v in row[1:7]]))
    return labels


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()
