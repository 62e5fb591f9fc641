"""Acceptance gate: one test per headline guarantee of the workbench.

Every test here exercises a documented end-to-end behaviour at its stated
tolerance and runtime budget, against oracles implemented independently of
the library code (direct formulas, dense QP, numpy references, log replay).
Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line
per guarantee.
"""

import json
import time
from urllib.parse import quote

import numpy as np
import pytest

from emobench.acoustics import (
    FrameSeries, apply_functionals, compute_llds, concat_features,
    extract_features,
)
from emobench.core import DIMENSIONS, Dimension, Recording, SAMPLE_RATE
from emobench.evaluation import (
    SyntheticSpec, generate_synthetic_corpus, generate_synthetic_embeddings,
    plan_speaker_dependent, plan_speaker_independent, rank_features_ccc,
    run_protocol, simulate_ratings, write_corpus,
)
from emobench.labeling import (
    RatingRecord, annotator_weights, assessment_quality, ewe_labels,
)
from emobench.metrics import average_ranks, ccc, pearson, rmse, spearman
from emobench.regressor import SvrConfig, rbf_kernel, train_svr
from emobench.segmenter import SilenceConfig, chunk_recording, detect_silences

cvxopt = pytest.importorskip("cvxopt")


# --- 1. EWE aggregation vs. brute-force oracle ------------------------------

def _oracle_weights_matrix(m: np.ndarray) -> np.ndarray:
    """Reference weights from a (chunks x annotators) matrix with NaN gaps."""
    complete = ~np.isnan(m).any(axis=1)
    rows = m[complete]
    means = rows.mean(axis=1)
    xc = rows - rows.mean(axis=0)
    mc = means - means.mean()
    den = np.sqrt((xc ** 2).sum(axis=0) * (mc ** 2).sum())
    return np.where(den > 0, (xc.T @ mc) / np.where(den > 0, den, 1.0), 0.0)


def _oracle_ewe(m: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference EWE and sigma per chunk from a NaN-gapped rating matrix."""
    rated = ~np.isnan(m)
    xs = np.nan_to_num(m)
    ws = np.maximum(weights, 0.0)[None, :] * rated
    wsum = ws.sum(axis=1)
    ewe = np.where(wsum > 0, (ws * xs).sum(axis=1) / np.where(wsum > 0, wsum, 1.0),
                   np.nanmean(m, axis=1))
    sigma = np.sqrt(np.nanmean((m - ewe[:, None]) ** 2, axis=1))
    return ewe, sigma


def _random_rating_fixture(rng):
    """Random 3-dimensional SAM table; half the draws leave gaps."""
    n_annot = int(rng.integers(2, 11))
    n_chunk = int(rng.integers(5, 51))
    sams = rng.integers(1, 10, size=(n_chunk, n_annot, 3))
    present = np.ones((n_chunk, n_annot), bool)
    if rng.random() < 0.5:
        # an annotator may skip a chunk entirely; keep 3 complete rows so
        # the weight estimate stays defined, and at least one rater per chunk
        present[3:] = rng.random((n_chunk - 3, n_annot)) >= 0.2
        present[~present.any(axis=1), 0] = True
    ratings = []
    for c in range(n_chunk):
        for a in range(n_annot):
            if present[c, a]:
                for j, dim in enumerate(DIMENSIONS):
                    ratings.append(RatingRecord(
                        annotator_id=f"a{a}", chunk_id=f"c{c:03d}",
                        dimension=dim, sam=int(sams[c, a, j])))
    tables = np.where(present[:, :, None], (sams - 1) / 8.0, np.nan)
    return ratings, tables, n_chunk, n_annot


def test_ewe_aggregation_matches_brute_force_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for _ in range(1000):
        ratings, tables, n_chunk, n_annot = _random_rating_fixture(rng)
        labels = sorted(ewe_labels(ratings), key=lambda l: l.chunk_id)
        assert [l.chunk_id for l in labels] == [f"c{c:03d}" for c in range(n_chunk)]

        ws = annotator_weights(ratings, Dimension.VALENCE)
        got_w = np.array([dict((w.annotator_id, w.weight) for w in ws)[f"a{a}"]
                          for a in range(n_annot)])
        expect_w = _oracle_weights_matrix(tables[:, :, 0])
        assert np.max(np.abs(got_w - expect_w)) <= 1e-12

        got = np.array([[l.valence, l.arousal, l.dominance,
                         l.sigma_v, l.sigma_a, l.sigma_d] for l in labels])
        for j in range(3):
            weights = _oracle_weights_matrix(tables[:, :, j])
            ewe, sigma = _oracle_ewe(tables[:, :, j], weights)
            assert np.max(np.abs(got[:, j] - ewe)) <= 1e-12
            assert np.max(np.abs(got[:, 3 + j] - sigma)) <= 1e-12

        # assessment_quality is the per-chunk sigma for the values it is given
        m = tables[:, :, 0]
        expect_sigma = _oracle_ewe(m, expect_w)[1]
        for c in range(n_chunk):
            row = m[c][~np.isnan(m[c])]
            assert abs(assessment_quality(row, got[c, 0]) - expect_sigma[c]) <= 1e-12
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"EWE oracle sweep took {elapsed:.1f}s (budget 10s)"


# --- 2. EWE recovers latent labels at zero noise -----------------------------

def test_ewe_recovers_latent_labels_at_zero_noise():
    rng = np.random.default_rng(11)
    truth = {f"c{i:04d}": tuple(rng.uniform(0.02, 0.98, 3)) for i in range(300)}
    ratings = simulate_ratings(truth, (0.0, 0.0, 0.0), rng)
    for lab in ewe_labels(ratings):
        v, a, d = truth[lab.chunk_id]
        # 9-point SAM quantization: |round-trip error| <= half a step = 1/16
        assert abs(lab.valence - v) <= 0.0625
        assert abs(lab.arousal - a) <= 0.0625
        assert abs(lab.dominance - d) <= 0.0625


# --- 3. weight ordering inverts annotator noise ordering ---------------------

def test_annotator_weight_ordering_tracks_noise():
    rng = np.random.default_rng(777)
    truth = rng.uniform(0.05, 0.95, 1132)
    chunk_ids = [f"c{i:04d}" for i in range(1132)]
    noise = (0.05, 0.10, 0.20)
    t0 = time.perf_counter()
    hits = 0
    trials = 1000
    for trial in range(trials):
        trng = np.random.default_rng([777, trial])
        ratings = []
        for k, level in enumerate(noise):
            noisy = truth + trng.normal(0.0, level, truth.shape)
            sams = np.clip(np.rint(np.clip(noisy, 0.0, 1.0) * 8) + 1, 1, 9)
            annot = f"annot{k}"
            ratings.extend(
                RatingRecord(annotator_id=annot, chunk_id=cid,
                             dimension=Dimension.VALENCE, sam=sam)
                for cid, sam in zip(chunk_ids, sams.astype(int).tolist()))
        ws = {w.annotator_id: w.weight
              for w in annotator_weights(ratings, Dimension.VALENCE)}
        hits += ws["annot0"] > ws["annot1"] > ws["annot2"]
    elapsed = time.perf_counter() - t0
    assert hits >= 0.95 * trials, f"ordering held in only {hits}/{trials} trials"
    assert elapsed < 60.0, f"weight-ordering sweep took {elapsed:.1f}s (budget 60s)"


# --- 4. SMO solution vs. dense QP reference ----------------------------------

def _qp_reference(z, y, c, epsilon, gamma):
    """Dense epsilon-SVR dual in the doubled-variable space via cvxopt."""
    from cvxopt import matrix, solvers
    n = len(y)
    kmat = rbf_kernel(z, z, gamma)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.outer(s, s) * np.tile(kmat, (2, 2))
    q = np.concatenate([epsilon - y, epsilon + y])
    g = np.vstack([-np.eye(2 * n), np.eye(2 * n)])
    h = np.concatenate([np.zeros(2 * n), np.full(2 * n, c)])
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-11
    solvers.options["reltol"] = 1e-11
    sol = solvers.qp(matrix(p), matrix(q), matrix(g), matrix(h),
                     matrix(s[None, :]), matrix(0.0))
    u = np.array(sol["x"]).ravel()
    beta = u[:n] - u[n:]
    obj = 0.5 * u @ p @ u + q @ u
    return beta, obj, float(sol["y"][0])


def test_svr_matches_dense_qp_reference():
    rng = np.random.default_rng(404)
    cfg = SvrConfig(c=2.0, epsilon=0.08, gamma=0.9, tol=1e-8)
    t0 = time.perf_counter()
    compared = 0
    for _ in range(200):
        n, d = int(rng.integers(4, 21)), int(rng.integers(1, 9))
        z = rng.random((n, d))
        y = rng.normal(0.0, 0.5, n)
        model = train_svr(z, y, cfg)
        assert model.kkt_gap <= cfg.tol  # optimality certificate every instance

        zs = model.scaler.transform(z)
        beta_ref, obj_ref, bias_ref = _qp_reference(zs, y, cfg.c, cfg.epsilon, cfg.gamma)
        assert model.dual_objective == pytest.approx(obj_ref, abs=1e-4)

        # predictions are only uniquely determined when free (strictly
        # inside-the-box) support vectors pin the bias
        free = np.any((np.abs(model.coef) > 1e-7)
                      & (np.abs(model.coef) < cfg.c * (1 - 1e-7)))
        if free:
            pred_ref = rbf_kernel(zs, zs, cfg.gamma) @ beta_ref + bias_ref
            np.testing.assert_allclose(model.predict(z), pred_ref, atol=1e-3)
            compared += 1
    elapsed = time.perf_counter() - t0
    assert compared >= 150  # degenerate-bias instances must stay the exception
    assert elapsed < 120.0, f"SVR sweep took {elapsed:.1f}s (budget 120s)"


# --- 5. metrics vs. direct-formula oracles -----------------------------------

def _ccc_direct(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return 2 * np.mean((x - x.mean()) * (y - y.mean())) / (
        x.var() + y.var() + (x.mean() - y.mean()) ** 2)


def test_metrics_match_reference_formulas():
    assert ccc([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0 / 3.0, abs=0)

    rng = np.random.default_rng(5)
    for trial in range(1000):
        n = int(rng.integers(3, 60))
        if trial % 2 == 0:
            x = rng.normal(size=n)
            y = 0.5 * x + rng.normal(size=n)
        else:
            # tie-heavy integer-quantized draws
            x = rng.integers(0, 5, size=n).astype(float)
            y = np.clip(x + rng.integers(-1, 2, size=n), 0, 6).astype(float)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
        assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)
        assert ccc(x, y) == pytest.approx(_ccc_direct(x, y), abs=1e-12)
        rx, ry = average_ranks(x), average_ranks(y)
        assert spearman(x, y) == pytest.approx(
            np.corrcoef(rx, ry)[0, 1], abs=1e-12)
        assert rmse(x, y) == pytest.approx(
            float(np.sqrt(np.mean((x - y) ** 2))), abs=1e-12)


# --- 6. evaluation-protocol and fusion ordering -------------------------------

def test_speaker_dependent_protocol_and_fusion_ordering():
    t0 = time.perf_counter()
    spec = SyntheticSpec(n_speakers=10, chunks_per_speaker=14, seed=5,
                         speaker_bias=0.18, coupling=0.9)
    corpus = generate_synthetic_corpus(spec)
    feats = {}
    for c in corpus.manifest.chunks:
        rec = corpus.recordings[c.recording_id]
        lo, hi = int(c.start * SAMPLE_RATE), int(c.end * SAMPLE_RATE)
        feats[c.id] = extract_features(rec.samples[lo:hi])
    labels = ewe_labels(corpus.ratings)
    emb = generate_synthetic_embeddings(corpus, dim=12, noise=0.35, seed=1,
                                        emphasis=(0.4, 0.4, 1.0))
    combined = {cid: concat_features(feats[cid], emb[cid]) for cid in feats}

    chunks = list(corpus.manifest.chunks)
    plans = {"sd": plan_speaker_dependent(chunks, k=5, seed=0),
             "si": plan_speaker_independent(chunks, k=5, seed=0)}
    corr = {}
    for pname, plan in plans.items():
        for sname, f in (("acoustic", feats), ("embedding", emb),
                         ("combined", combined)):
            rep = run_protocol(f, labels, plan, source=sname)
            corr[(pname, sname)] = {
                d: rep.per_dimension[d].corr_pear for d in DIMENSIONS}

    # speaker-specific label bias: only the speaker-dependent protocol can
    # exploit it, so it must win on every dimension
    for d in DIMENSIONS:
        assert corr[("sd", "acoustic")][d] > corr[("si", "acoustic")][d], d

    # feature-level fusion must strictly beat both standalone sources on at
    # least two of three dimensions
    improved = sum(
        corr[("sd", "combined")][d] > max(corr[("sd", "acoustic")][d],
                                          corr[("sd", "embedding")][d])
        for d in DIMENSIONS)
    assert improved >= 2, f"fusion improved only {improved}/3 dimensions"
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0, f"protocol run took {elapsed:.1f}s (budget 600s)"


# --- 7. CCC feature ranking recovers the designed couplings -------------------

def test_feature_ranking_recovers_designed_couplings():
    corpus = generate_synthetic_corpus(
        SyntheticSpec(n_speakers=8, chunks_per_speaker=12, seed=3))
    feats = {}
    for c in corpus.manifest.chunks:
        rec = corpus.recordings[c.recording_id]
        lo, hi = int(c.start * SAMPLE_RATE), int(c.end * SAMPLE_RATE)
        feats[c.id] = extract_features(rec.samples[lo:hi])
    labels = ewe_labels(corpus.ratings)

    top_arousal = rank_features_ccc(feats, labels, Dimension.AROUSAL)[0][0]
    assert top_arousal.startswith("audspec_lengthL1norm_"), top_arousal
    top_valence = rank_features_ccc(feats, labels, Dimension.VALENCE)[0][0]
    assert top_valence.startswith("spectralSlope_"), top_valence


# --- 8. DSP reference fixtures -------------------------------------------------

def test_dsp_reference_fixtures():
    t = np.arange(2 * SAMPLE_RATE) / SAMPLE_RATE

    # sine RMS within 1% of A / sqrt(2)
    amp = 0.35
    series = {s.name: s.values for s in compute_llds(amp * np.sin(2 * np.pi * 220.0 * t))}
    assert np.mean(series["pcm_RMSenergy"]) == pytest.approx(amp / np.sqrt(2), rel=0.01)

    # 100 Hz F0 within one autocorrelation lag quantum
    series = {s.name: s.values for s in compute_llds(0.3 * np.sin(2 * np.pi * 100.0 * t))}
    lag = SAMPLE_RATE / 100.0
    lo, hi = SAMPLE_RATE / (lag + 1), SAMPLE_RATE / (lag - 1)
    voiced = series["voicingProb"] > 0.5
    assert voiced.mean() > 0.9
    assert np.all((series["F0"][voiced] >= lo) & (series["F0"][voiced] <= hi))

    # quantile chain min <= p1 <= q1 <= q2 <= q3 <= p99 <= max on 1e5 series
    rng = np.random.default_rng(8)
    for i in range(100_000):
        n = int(rng.integers(1, 30))
        x = (rng.integers(-3, 4, size=n).astype(float) if i % 3 == 0
             else rng.normal(scale=10.0 ** rng.integers(-3, 4), size=n))
        got = dict(apply_functionals(FrameSeries("lld", x)))
        chain = [got["lld_min"], got["lld_percentile1.0"], got["lld_quartile1"],
                 got["lld_quartile2"], got["lld_quartile3"],
                 got["lld_percentile99.0"], got["lld_max"]]
        assert all(a <= b + 1e-9 for a, b in zip(chain, chain[1:])), x


# --- 9. segmentation tiles every recording ------------------------------------

def _tone(duration, freq=220.0, amp=9000):
    t = np.arange(int(duration * SAMPLE_RATE)) / SAMPLE_RATE
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.int16)


def test_segmentation_tiles_every_recording():
    cfg = SilenceConfig()
    rng = np.random.default_rng(99)
    for trial in range(100):
        pieces, speaking = [], rng.random() < 0.5
        for _ in range(int(rng.integers(2, 9))):
            dur = float(rng.uniform(0.05, 4.0))
            pieces.append(_tone(dur, freq=float(rng.uniform(100, 500)))
                          if speaking else np.zeros(int(dur * SAMPLE_RATE), np.int16))
            speaking = not speaking
        rec = Recording(id=f"r{trial}", speaker="s", samples=np.concatenate(pieces))

        chunks = chunk_recording(rec, cfg)
        silences = detect_silences(rec, cfg)
        marks = np.zeros(len(rec.samples), np.int8)
        for c in chunks:
            marks[int(round(c.start * SAMPLE_RATE)):int(round(c.end * SAMPLE_RATE))] += 1
        for s, e in silences:
            marks[int(round(s * SAMPLE_RATE)):int(round(e * SAMPLE_RATE))] += 1
        assert marks.max() <= 1, "chunks and silences overlap"
        # the only uncovered spans are discarded too-short speech spans, so
        # chunks + silences + discards tile the recording exactly
        edges = np.flatnonzero(np.diff(np.concatenate([[1], marks, [1]])))
        for lo, hi in zip(edges[::2], edges[1::2]):
            assert (hi - lo) / SAMPLE_RATE < cfg.min_chunk

    rec = Recording(id="tst", speaker="s", samples=np.concatenate(
        [_tone(2.0), np.zeros(SAMPLE_RATE, np.int16), _tone(2.0)]))
    assert len(chunk_recording(rec, cfg)) == 2


# --- 10. event-log durability ---------------------------------------------------

def test_event_log_replay_reproduces_export(tmp_path):
    from fastapi.testclient import TestClient
    from emobench.service import AnnotationService, ServiceConfig, create_app

    corpus_dir = tmp_path / "corpus"
    write_corpus(generate_synthetic_corpus(
        SyntheticSpec(n_speakers=2, chunks_per_speaker=5, seed=0,
                      chunk_duration=1.2)), corpus_dir)
    manifest_ids = sorted(
        json.loads(l)["id"] for l in
        (corpus_dir / "manifest.jsonl").read_text().splitlines()[1:]
        if json.loads(l)["kind"] == "chunk")
    key_path = tmp_path / "ab_key.json"
    key_path.write_text(json.dumps({"pairs": [
        {"pair_id": f"p{i}", "dimension": dim, "a": manifest_ids[i],
         "b": manifest_ids[i + 1], "correct": "a"}
        for i, dim in enumerate(("valence", "arousal", "dominance"))]}))
    cfg = ServiceConfig(
        manifest_path=str(corpus_dir / "manifest.jsonl"),
        audio_dir=str(corpus_dir),
        log_path=str(tmp_path / "events.jsonl"),
        ab_key_path=str(key_path))

    service = AnnotationService(cfg)
    client = TestClient(create_app(service))
    annotators = [f"u{k}" for k in range(8)]
    for a in annotators:  # qualification round covers the A/B event types
        while True:
            item = client.get(f"/api/abtest/{a}/next").json()
            if item["done"]:
                break
            client.post("/api/abtest/response", json={
                "annotator_id": a, "pair_id": item["pair_id"], "chosen": "a"})
        assert item["status"] == "passed"

    # 10^4 interleaved submissions with deliberate re-submissions (latest wins)
    for i in range(10_000):
        a = annotators[i % len(annotators)]
        cid = manifest_ids[(i * 7) % len(manifest_ids)]
        r = client.post("/api/ratings", json={
            "annotator_id": a, "chunk_id": cid, "valence": (i % 9) + 1,
            "arousal": ((i + 3) % 9) + 1, "dominance": ((i + 6) % 9) + 1})
        assert r.status_code == 200

    before = client.get("/api/export").text
    assert before == service.export_snapshot()

    # kill-and-replay: a fresh process over the same log must export
    # byte-identical data
    replayed = AnnotationService(cfg)
    assert replayed.export_snapshot() == before
