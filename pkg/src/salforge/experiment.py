"""End-to-end experiment orchestration.

Assembles the dataset, prepares per-sample saliency for the configured
source, trains one classifier per seed on the shared data, scores the
shifted test split, and writes report.csv / summary.csv / roc_band.csv plus
one checkpoint per seed. The only thing that differs across saliency sources
is the saliency payload itself; derivation, training, and scoring are one
code path.

Seeds may run concurrently (set FORGE_THREADS > 1); each run is internally
deterministic and rows are sorted by seed before writing, so reports do not
depend on scheduling.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_manifest_dataset, write_manifest
from .engine import CamClassifier
from .errors import EmptySaliency, ManifestError, NoCorrectAnnotations
from .evaluation import EvalReport, ScoredSet, auc, summarize_runs
from .granularity import GranularitySpec, Rect, derive, rasterize_rect
from .mimic import MimicAutoencoder, generate_saliency, train_mimic
from .pgm import read_pgm, write_pgm
from .saliency import SaliencyMap, aggregate_annotations, round_half_away_from_zero
from .synth import SynthConfig, SynthSample, generate, generate_split
from .training import predict_scores, train_classifier

logger = logging.getLogger("salforge")

# offset mixed into the dataset seed to draw the fresh split that
# mimic-generated saliency is produced for
_MIMIC_SPLIT_OFFSET = 7919


@dataclass
class ExperimentData:
    train: list[SynthSample]
    val: list[SynthSample]
    test: list[SynthSample]
    mimic_train: list[SynthSample]


def assemble_dataset(config: ExperimentConfig) -> ExperimentData:
    """Generate or load all splits named by the config.

    mimic_train is the fresh same-size split that mimic saliency is generated
    for; with a manifest dataset there is no generator to draw from, so the
    train split doubles as the mimic split.
    """
    if config.manifest_path is not None:
        splits = load_manifest_dataset(config.manifest_path)
        return ExperimentData(splits["train"], splits["val"], splits["test"], splits["train"])
    synth = config.dataset
    train, val, test = generate(synth)
    second = replace(synth, seed=synth.seed + _MIMIC_SPLIT_OFFSET)
    mimic_split = generate_split(second, "mimic", synth.n_train)
    return ExperimentData(train, val, test, mimic_split)


def human_foi(sample: SynthSample) -> SaliencyMap | None:
    """Human fine-grained map for an attack sample.

    Aggregates annotator maps when present (skipping the sample with a
    warning if no annotator classified it correctly); otherwise falls back to
    the sample's supplied map (manifest rows with pre-aggregated saliency).
    """
    if sample.annotations is not None:
        try:
            return aggregate_annotations(sample.annotations)
        except NoCorrectAnnotations:
            logger.warning("%s: no correct annotation; training without saliency", sample.sample_id)
            return None
    return sample.true_foi


def derive_or_fallback(foi: SaliencyMap, spec: GranularitySpec, sample_id: str) -> SaliencyMap:
    """Derive granularity; an empty result falls back to the full-image
    rectangle with a warning instead of aborting a whole training run."""
    try:
        return derive(foi, spec)
    except EmptySaliency:
        logger.warning("%s: empty saliency after derivation; using full-image rectangle", sample_id)
        full = Rect(0, 0, foi.width - 1, foi.height - 1)
        return rasterize_rect(full, foi.width, foi.height)


def _external_map(config: ExperimentConfig, sample: SynthSample) -> SaliencyMap:
    path = Path(config.external_map_dir) / f"{sample.sample_id}.pgm"
    if not path.is_file():
        raise ManifestError(f"external saliency map missing: {path}")
    return read_pgm(path)


def training_saliency(config: ExperimentConfig, samples: list[SynthSample],
                      mimic_model: MimicAutoencoder | None = None) -> list[SaliencyMap | None]:
    """Per-sample derived saliency for the configured source.

    Saliency attaches to attack samples only; bona fide samples always train
    on cross-entropy alone.
    """
    source = config.saliency_source
    maps: list[SaliencyMap | None] = []
    for sample in samples:
        if sample.label != 1 or source == "none":
            maps.append(None)
            continue
        if source == "human":
            foi = human_foi(sample)
        elif source == "mimic":
            foi = generate_saliency(mimic_model, sample.image)
        elif source == "segmenter_external":
            foi = _external_map(config, sample)
        else:
            raise ValueError(f"unhandled saliency source {source!r}")
        if foi is None:
            maps.append(None)
        else:
            maps.append(derive_or_fallback(foi, config.granularity, sample.sample_id))
    return maps


def mimic_pairs(samples: list[SynthSample]):
    """(image, human FOI) pairs for the attack samples of a split."""
    pairs = []
    for sample in samples:
        if sample.label != 1:
            continue
        foi = human_foi(sample)
        if foi is not None:
            pairs.append((sample.image, foi))
    return pairs


def build_mimic(config: ExperimentConfig, data: ExperimentData) -> MimicAutoencoder:
    """Train the saliency mimic on the human maps of the train split."""
    model, history = train_mimic(mimic_pairs(data.train), config.mimic_train)
    logger.info("mimic trained: MSE %.5f -> %.5f", history[0], history[-1])
    return model


def _stack_images(samples: list[SynthSample]) -> np.ndarray:
    return np.stack([s.image for s in samples])[:, None]


def _labels(samples: list[SynthSample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)


def _run_single_seed(job):
    (images, labels, maps, alpha, settings, seed, ckpt_path,
     test_images) = job
    model, _ = train_classifier(images, labels, maps, alpha, settings, seed)
    model.save(ckpt_path)
    return seed, predict_scores(model, test_images)


def _worker_count(n_jobs: int) -> int:
    raw = os.environ.get("FORGE_THREADS")
    if raw is None:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer FORGE_THREADS=%r", raw)
        return 1
    return max(1, min(threads, n_jobs))


def _fmt(x) -> str:
    return repr(float(x))


def _write_report_csv(path, source, granularity_name, seeds, aucs) -> None:
    lines = ["source,granularity,seed,auc"]
    for seed, value in zip(seeds, aucs):
        lines.append(f"{source},{granularity_name},{seed},{_fmt(value)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _write_summary_csv(path, report: EvalReport) -> None:
    Path(path).write_text(f"mean,std\n{_fmt(report.mean)},{_fmt(report.std)}\n")


def _write_roc_band_csv(path, report: EvalReport) -> None:
    lines = ["fpr,mean_tpr,std_tpr"]
    for f, m, s in zip(report.fpr_grid, report.mean_tpr, report.std_tpr):
        lines.append(f"{_fmt(f)},{_fmt(m)},{_fmt(s)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _fit_split_and_saliency(config: ExperimentConfig, data: ExperimentData, out: Path):
    """The split the classifier trains on plus its per-sample saliency."""
    mimic_model = None
    if config.saliency_source == "mimic":
        mimic_model = build_mimic(config, data)
        mimic_model.save(out / "mimic_checkpoint.bin")
        fit_samples = data.mimic_train
    else:
        fit_samples = data.train
    return fit_samples, training_saliency(config, fit_samples, mimic_model)


def run_experiment(config: ExperimentConfig, out_dir) -> EvalReport:
    """Run the configured multi-seed experiment; returns the aggregate report.

    Writes report.csv (source,granularity,seed,auc), summary.csv (mean,std),
    roc_band.csv (fpr,mean_tpr,std_tpr), and one classifier checkpoint per
    seed (plus the mimic checkpoint for the mimic source) into out_dir.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = assemble_dataset(config)
    fit_samples, maps = _fit_split_and_saliency(config, data, out)

    images = _stack_images(fit_samples)
    labels = _labels(fit_samples)
    test_images = _stack_images(data.test)
    test_labels = _labels(data.test).astype(bool)
    alpha = 0.0 if config.saliency_source == "none" else config.alpha

    seeds = sorted(config.seeds)
    jobs = [
        (images, labels, maps, alpha, config.train, seed,
         str(out / f"checkpoint_seed{seed}.bin"), test_images)
        for seed in seeds
    ]
    workers = _worker_count(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_single_seed, jobs))
    else:
        results = [_run_single_seed(job) for job in jobs]
    results.sort(key=lambda item: item[0])

    runs = [ScoredSet(scores, test_labels) for _, scores in results]
    report = summarize_runs(runs)
    granularity_name = config.granularity.level.value if config.granularity else "none"
    _write_report_csv(out / "report.csv", config.saliency_source, granularity_name,
                      seeds, report.per_run_auc)
    _write_summary_csv(out / "summary.csv", report)
    _write_roc_band_csv(out / "roc_band.csv", report)
    for seed, value in zip(seeds, report.per_run_auc):
        logger.info("seed %d: test AUC %.4f", seed, value)
    logger.info("%s/%s: mean AUC %.4f +- %.4f over %d runs",
                config.saliency_source, granularity_name, report.mean, report.std, len(seeds))
    return report


def train_single(config: ExperimentConfig, seed: int, out_dir):
    """One training run (first config seed unless overridden); writes the
    checkpoint and a per-epoch loss log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = assemble_dataset(config)
    fit_samples, maps = _fit_split_and_saliency(config, data, out)
    alpha = 0.0 if config.saliency_source == "none" else config.alpha
    model, history = train_classifier(
        _stack_images(fit_samples), _labels(fit_samples), maps, alpha, config.train, seed
    )
    model.save(out / f"checkpoint_seed{seed}.bin")
    lines = ["epoch,loss"] + [f"{i},{_fmt(loss)}" for i, loss in enumerate(history)]
    (out / "train_log.csv").write_text("\n".join(lines) + "\n")
    return model, history


def evaluate_checkpoint(config: ExperimentConfig, checkpoint_path) -> tuple[float, ScoredSet]:
    """Score the config's shifted test split with a trained checkpoint."""
    data = assemble_dataset(config)
    model = CamClassifier.load(checkpoint_path)
    scores = predict_scores(model, _stack_images(data.test))
    scored = ScoredSet(scores, _labels(data.test).astype(bool))
    return auc(scored), scored


def export_synth_dataset(synth: SynthConfig, out_dir) -> Path:
    """Write the synthetic dataset as PGM files plus a manifest.json.

    Images are quantized to 8 bits; attack rows reference their ground-truth
    map and the simulated annotator maps with correctness flags.
    """
    out = Path(out_dir)
    rows = []
    for split, samples in zip(("train", "val", "test"), generate(synth)):
        (out / split).mkdir(parents=True, exist_ok=True)
        for sample in samples:
            image_rel = f"{split}/{sample.sample_id}.pgm"
            eight_bit = np.clip(round_half_away_from_zero(sample.image * 255.0), 0, 255)
            write_pgm(SaliencyMap(eight_bit.astype(np.uint8)), out / image_rel)
            row = {"id": sample.sample_id, "image": image_rel,
                   "label": sample.label, "split": split}
            if sample.true_foi is not None:
                foi_rel = f"{split}/{sample.sample_id}_foi.pgm"
                write_pgm(sample.true_foi, out / foi_rel)
                row["saliency"] = foi_rel
            if sample.annotations is not None:
                ann_rels = []
                for k, ann in enumerate(sample.annotations.annotator_maps):
                    ann_rel = f"{split}/{sample.sample_id}_ann{k}.pgm"
                    write_pgm(ann, out / ann_rel)
                    ann_rels.append(ann_rel)
                row["annotations"] = ann_rels
                row["correct"] = list(sample.annotations.annotator_correct)
            rows.append(row)
    manifest_path = out / "manifest.json"
    write_manifest(manifest_path, rows)
    logger.info("wrote %d samples under %s", len(rows), out)
    return manifest_path


def generate_mimic_maps(config: ExperimentConfig, checkpoint_path, out_dir) -> int:
    """Generate fine-grained maps for the mimic split's attack samples."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = assemble_dataset(config)
    model = MimicAutoencoder.load(checkpoint_path)
    count = 0
    for sample in data.mimic_train:
        if sample.label != 1:
            continue
        write_pgm(generate_saliency(model, sample.image), out / f"{sample.sample_id}.pgm")
        count += 1
    logger.info("wrote %d mimic saliency maps to %s", count, out)
    return count
