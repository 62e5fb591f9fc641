"""Command-line entry point; every stage reads and writes files so any stage
can be re-run or substituted independently."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import core, evaluation, labeling, regressor, segmenter
from .acoustics import concat_features, extract_features, load_feature_table, save_feature_table
from .core import Dimension, DIMENSIONS


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise click.ClickException(f"missing {what}: {p}")
    return p


@click.group()
def main():
    """Dimensional speech emotion workbench."""


@main.command()
@click.option("--speakers", default=8, show_default=True)
@click.option("--chunks", default=20, show_default=True, help="Chunks per speaker.")
@click.option("--seed", default=0, show_default=True)
@click.option("--noise", default="0.05,0.10,0.20", show_default=True,
              help="Comma-separated simulated annotator noise levels.")
@click.option("--coupling", default=1.0, show_default=True)
@click.option("--speaker-bias", default=0.0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Output corpus directory.")
def synth(speakers, chunks, seed, noise, coupling, speaker_bias, out):
    """Generate a synthetic corpus with known latent labels."""
    spec = evaluation.SyntheticSpec(
        n_speakers=speakers, chunks_per_speaker=chunks, seed=seed,
        annotator_noise=tuple(float(x) for x in noise.split(",")),
        coupling=coupling, speaker_bias=speaker_bias)
    corpus = evaluation.generate_synthetic_corpus(spec)
    evaluation.write_corpus(corpus, out)
    click.echo(f"wrote {len(corpus.manifest.chunks)} chunks for "
               f"{speakers} speakers under {out}")


@main.command()
@click.option("--manifest", "manifest_path", required=True)
@click.option("--audio-dir", required=True)
@click.option("--config", "config_path", default=None,
              help="JSON file overriding silence-detection defaults.")
@click.option("--out", required=True, type=click.Path())
def segment(manifest_path, audio_dir, config_path, out):
    """Split every recording into silence-delimited chunks."""
    manifest = core.load_manifest(_require(manifest_path, "manifest"))
    cfg = segmenter.SilenceConfig(**json.loads(_require(config_path, "config").read_text())) \
        if config_path else segmenter.SilenceConfig()
    chunks = []
    for ref in manifest.recordings:
        rec = core.read_wav(_require(str(Path(audio_dir) / ref.path), "audio file"),
                            recording_id=ref.id, speaker=ref.speaker)
        chunks.extend(segmenter.chunk_recording(rec, cfg))
    core.save_manifest(core.CorpusManifest(manifest.recordings, tuple(chunks)), out)
    click.echo(f"{len(chunks)} chunks from {len(manifest.recordings)} recordings -> {out}")


@main.command()
@click.option("--manifest", "manifest_path", required=True)
@click.option("--sentiment", "sentiment_path", required=True, help="Sentiment sidecar file.")
@click.option("--quota", default=10, show_default=True)
@click.option("--ratio", default="4:4:2", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def select(manifest_path, sentiment_path, quota, ratio, seed, out):
    """Select a sentiment-balanced annotation subset per speaker."""
    manifest = core.load_manifest(_require(manifest_path, "manifest"))
    labels = core.load_sentiment_sidecar(_require(sentiment_path, "sentiment sidecar"))
    chunks = []
    for c in manifest.chunks:
        if c.id not in labels:
            raise click.ClickException(f"chunk {c.id} missing from sentiment sidecar")
        chunks.append(c.with_sentiment(labels[c.id]))
    policy = segmenter.SelectionPolicy(
        per_speaker_quota=quota,
        ratio=tuple(int(x) for x in ratio.split(":")),
        seed=seed)
    selected = segmenter.select_chunks(chunks, policy)
    core.save_manifest(core.CorpusManifest(manifest.recordings, tuple(selected)), out)
    click.echo(f"selected {len(selected)} of {len(chunks)} chunks -> {out}")


@main.command()
@click.option("--manifest", "manifest_path", required=True)
@click.option("--audio-dir", required=True)
@click.option("--out", required=True, type=click.Path())
def extract(manifest_path, audio_dir, out):
    """Compute acoustic functional features for every chunk."""
    manifest = core.load_manifest(_require(manifest_path, "manifest"))
    recordings = {}
    vectors = {}
    for c in manifest.chunks:
        if c.recording_id not in recordings:
            ref = manifest.recording_ref(c.recording_id)
            recordings[c.recording_id] = core.read_wav(
                _require(str(Path(audio_dir) / ref.path), "audio file"),
                recording_id=ref.id, speaker=ref.speaker)
        rec = recordings[c.recording_id]
        lo = int(c.start * rec.sample_rate)
        hi = int(c.end * rec.sample_rate)
        vectors[c.id] = extract_features(rec.samples[lo:hi])
    save_feature_table(vectors, out)
    click.echo(f"extracted {len(vectors)} x {len(next(iter(vectors.values())))} features -> {out}")


@main.command("embed-import")
@click.option("--in", "in_path", required=True)
@click.option("--out", required=True, type=click.Path())
def embed_import(in_path, out):
    """Validate an external embedding table and rewrite it in canonical form."""
    from .acoustics import load_embeddings
    table = load_embeddings(_require(in_path, "embedding table"))
    vectors = {cid: table.vector(cid) for cid in sorted(table.rows)}
    if vectors:
        save_feature_table(vectors, out)
    else:
        Path(out).write_text("chunk_id\n", encoding="utf-8")
    click.echo(f"imported {len(table.rows)} embeddings of dim {table.dim} -> {out}")


@main.command()
@click.option("--config", "config_path", required=True, help="Service JSON config.")
def serve(config_path):
    """Run the annotation HTTP service."""
    import uvicorn
    from .service import AnnotationService, ServiceConfig, create_app
    cfg = ServiceConfig.load(_require(config_path, "service config"))
    app = create_app(AnnotationService(cfg))
    uvicorn.run(app, host=cfg.listen_host, port=cfg.listen_port)


@main.command()
@click.option("--ratings", "ratings_path", required=True)
@click.option("--out", required=True, type=click.Path())
def aggregate(ratings_path, out):
    """Aggregate SAM ratings into per-chunk labels (weighted-mean estimator)."""
    ratings = labeling.load_ratings(_require(ratings_path, "ratings file"))
    labels = labeling.ewe_labels(ratings)
    labeling.save_labels(labels, out)
    click.echo(f"aggregated {len(labels)} chunk labels -> {out}")


@main.command()
@click.option("--ratings", "ratings_path", required=True)
@click.option("--out", default=None, type=click.Path())
def agree(ratings_path, out):
    """Inter-annotator agreement report (r and mean sigma per dimension)."""
    ratings = labeling.load_ratings(_require(ratings_path, "ratings file"))
    report = labeling.agreement_report(ratings)
    lines = [f"{'dimension':<10} {'r':>7} {'r_clamped':>10} {'sigma_bar':>10} "
             f"{'chunks':>7} {'annotators':>11}"]
    for dim in DIMENSIONS:
        a = report.per_dimension[dim]
        lines.append(f"{dim.value:<10} {a.inter_annotator_r:>7.3f} "
                     f"{a.inter_annotator_r_clamped:>10.3f} {a.sigma_bar:>10.3f} "
                     f"{a.n_chunks:>7d} {a.n_annotators:>11d}")
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@main.command()
@click.option("--features", "features_path", required=True)
@click.option("--labels", "labels_path", required=True)
@click.option("--dimension", type=click.Choice([d.value for d in DIMENSIONS]), required=True)
@click.option("--c", "c_param", default=1.0, show_default=True)
@click.option("--epsilon", default=0.1, show_default=True)
@click.option("--gamma", default="1/d", show_default=True)
@click.option("--out", required=True, type=click.Path())
def train(features_path, labels_path, dimension, c_param, epsilon, gamma, out):
    """Train one epsilon-SVR model on all labeled chunks."""
    features = load_feature_table(_require(features_path, "features file"))
    labels = labeling.load_labels(_require(labels_path, "labels file"))
    dim = Dimension(dimension)
    ids = sorted(cid for cid in features if cid in {l.chunk_id for l in labels})
    lab = {l.chunk_id: l for l in labels}
    x = np.array([features[c].values for c in ids])
    y = np.array([lab[c].value(dim) for c in ids])
    cfg = regressor.SvrConfig(c=c_param, epsilon=epsilon,
                              gamma=gamma if gamma == "1/d" else float(gamma))
    model = regressor.train_svr(x, y, cfg)
    regressor.save_model(model, out)
    click.echo(f"trained on {len(ids)} chunks "
               f"({len(model.coef)} support vectors, {model.n_iter} iterations) -> {out}")


@main.command()
@click.option("--manifest", "manifest_path", required=True)
@click.option("--features", "features_path", required=True)
@click.option("--labels", "labels_path", required=True)
@click.option("--embeddings", "embeddings_path", default=None)
@click.option("--protocol", type=click.Choice(["speaker_dependent", "speaker_independent", "both"]),
              default="both", show_default=True)
@click.option("--folds", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, type=click.Path(), help="Also write the text report here.")
@click.option("--out-csv", default=None, type=click.Path(), help="Machine-readable export.")
def evaluate(manifest_path, features_path, labels_path, embeddings_path,
             protocol, folds, seed, out, out_csv):
    """Run the full grid: feature sources x protocols x dimensions."""
    manifest = core.load_manifest(_require(manifest_path, "manifest"))
    acoustic = load_feature_table(_require(features_path, "features file"))
    labels = labeling.load_labels(_require(labels_path, "labels file"))
    sources = {"acoustic": acoustic}
    if embeddings_path:
        embedding = load_feature_table(_require(embeddings_path, "embeddings file"),
                                       source="embedding")
        sources["embedding"] = embedding
        sources["combined"] = {
            cid: concat_features(acoustic[cid], embedding[cid])
            for cid in acoustic if cid in embedding}

    chunks = [c for c in manifest.chunks if c.id in acoustic]
    protocols = (["speaker_dependent", "speaker_independent"]
                 if protocol == "both" else [protocol])
    reports = []
    for proto in protocols:
        plan = (evaluation.plan_speaker_dependent(chunks, k=folds, seed=seed)
                if proto == "speaker_dependent"
                else evaluation.plan_speaker_independent(chunks, k=folds, seed=seed))
        for name, feats in sources.items():
            reports.append(evaluation.run_protocol(feats, labels, plan, source=name))
    text = evaluation.format_report_grid(reports)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    if out_csv:
        import csv
        rows = evaluation.report_rows(reports)
        with Path(out_csv).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    click.echo(text, nl=False)


@main.command()
@click.option("--features", "features_path", required=True)
@click.option("--labels", "labels_path", required=True)
@click.option("--dimension", type=click.Choice([d.value for d in DIMENSIONS]), required=True)
@click.option("--top", default=20, show_default=True)
@click.option("--out", default=None, type=click.Path())
def rank(features_path, labels_path, dimension, top, out):
    """Rank features by per-feature CCC against the labels."""
    features = load_feature_table(_require(features_path, "features file"))
    labels = labeling.load_labels(_require(labels_path, "labels file"))
    ranking = evaluation.rank_features_ccc(features, labels, Dimension(dimension))
    if out:
        Path(out).write_text(
            "feature,ccc\n" + "".join(f"{n},{v!r}\n" for n, v in ranking),
            encoding="utf-8")
    click.echo(evaluation.format_ranking(ranking, top=top), nl=False)


if __name__ == "__main__":
    sys.exit(main())
