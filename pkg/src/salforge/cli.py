"""Command-line entry point.

Every pipeline stage is independently scriptable:

    salforge gen-data        write a synthetic dataset (PGMs + manifest)
    salforge aggregate       average annotator maps into per-sample FOI maps
    salforge transform       derive AOI/BOI/FOI maps from FOI maps
    salforge train           one classifier training run
    salforge train-mimic     train the saliency-mimicking autoencoder
    salforge mimic-generate  generate saliency maps from a mimic checkpoint
    salforge evaluate        score a checkpoint on the shifted test split
    salforge experiment      full multi-seed experiment with CSV reports

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure. On
error a single machine-readable JSON line is written to stderr. FORGE_THREADS
caps the number of concurrent seed workers in `experiment`.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, parse_config
from .errors import ConfigError, DataError, NumericError, ParseError
from .experiment import (
    evaluate_checkpoint,
    export_synth_dataset,
    generate_mimic_maps,
    run_experiment,
    train_single,
)
from .granularity import GranularityLevel, GranularitySpec, ThresholdMode, derive
from .mimic import train_mimic
from .pgm import read_pgm, write_pgm
from .saliency import aggregate_annotations

logger = logging.getLogger("salforge")


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig()
    return parse_config(args.config)


def _override_seeds(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is None:
        return config
    return replace(config, seeds=(args.seed,))


def cmd_gen_data(args) -> int:
    config = _load_config(args)
    if config.dataset is None:
        raise ParseError("gen-data needs a synthetic dataset config, not a manifest")
    synth = config.dataset
    if args.seed is not None:
        synth = replace(synth, seed=args.seed)
    manifest = export_synth_dataset(synth, args.out)
    print(manifest)
    return 0


def cmd_aggregate(args) -> int:
    from .config import load_manifest_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = load_manifest_dataset(args.manifest)
    count = 0
    for samples in splits.values():
        for sample in samples:
            if sample.annotations is None:
                continue
            foi = aggregate_annotations(sample.annotations)
            write_pgm(foi, out / f"{sample.sample_id}.pgm")
            count += 1
    logger.info("aggregated %d annotation sets into %s", count, out)
    print(count)
    return 0


def cmd_transform(args) -> int:
    spec = GranularitySpec(
        level=GranularityLevel(args.level.upper()),
        threshold_mode=ThresholdMode(args.threshold_mode),
        erode_before_boi=args.erode,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sources = sorted(Path(args.maps).glob("*.pgm"))
    if not sources:
        raise DataError(f"no .pgm maps found in {args.maps}")
    for path in sources:
        write_pgm(derive(read_pgm(path), spec), out / path.name)
    logger.info("transformed %d maps into %s", len(sources), out)
    print(len(sources))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    seed = args.seed if args.seed is not None else config.seeds[0]
    _, history = train_single(config, seed, args.out)
    print(f"final_loss={history[-1]!r}")
    return 0


def cmd_train_mimic(args) -> int:
    from .experiment import assemble_dataset, mimic_pairs

    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = assemble_dataset(config)
    mimic_config = config.mimic_train
    if args.seed is not None:
        mimic_config = replace(mimic_config, seed=args.seed)
    model, history = train_mimic(mimic_pairs(data.train), mimic_config)
    model.save(out / "mimic_checkpoint.bin")
    logger.info("mimic MSE %.5f -> %.5f", history[0], history[-1])
    print(f"final_mse={history[-1]!r}")
    return 0


def cmd_mimic_generate(args) -> int:
    config = _load_config(args)
    count = generate_mimic_maps(config, args.checkpoint, args.out)
    print(count)
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import roc_curve

    config = _load_config(args)
    auc_value, scored = evaluate_checkpoint(config, args.checkpoint)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        curve = roc_curve(scored)
        lines = ["fpr,tpr"]
        lines += [f"{float(f)!r},{float(t)!r}" for f, t in zip(curve.fpr, curve.tpr)]
        (out / "roc.csv").write_text("\n".join(lines) + "\n")
    print(f"auc={auc_value!r}")
    return 0


def cmd_experiment(args) -> int:
    config = _override_seeds(_load_config(args), args)
    report = run_experiment(config, args.out)
    print(f"mean_auc={report.mean!r} std={report.std!r} runs={len(report.per_run_auc)}")
    return 0


def _add_common(parser, out_required=True):
    parser.add_argument("--config", help="JSON experiment config (defaults apply if omitted)")
    if out_required:
        parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="override the configured seed(s)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="salforge", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as PGMs + manifest")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("aggregate", help="average annotator maps into FOI maps")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    _add_common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("transform", help="derive AOI/BOI/FOI from FOI maps")
    p.add_argument("--maps", required=True, help="directory of input .pgm maps")
    p.add_argument("--level", required=True, choices=["BOI", "AOI", "FOI", "boi", "aoi", "foi"])
    p.add_argument("--threshold-mode", default="positive", choices=["positive", "half"])
    p.add_argument("--erode", action="store_true", help="erode 3x3 before the BOI rectangle")
    _add_common(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="single classifier training run")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-mimic", help="train the saliency-mimicking autoencoder")
    _add_common(p)
    p.set_defaults(func=cmd_train_mimic)

    p = sub.add_parser("mimic-generate", help="generate saliency from a mimic checkpoint")
    p.add_argument("--checkpoint", required=True, help="mimic checkpoint file")
    _add_common(p)
    p.set_defaults(func=cmd_mimic_generate)

    p = sub.add_parser("evaluate", help="score a classifier checkpoint on the test split")
    p.add_argument("--checkpoint", required=True, help="classifier checkpoint file")
    p.add_argument("--config", help="JSON experiment config (defaults apply if omitted)")
    p.add_argument("--out", help="optional directory for roc.csv")
    p.add_argument("--seed", type=int, help="unused; accepted for flag uniformity")
    p.add_argument("--quiet", action="store_true", help="suppress progress logging")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="full multi-seed experiment with CSV reports")
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(2, exc)
    except DataError as exc:
        return _fail(3, exc)
    except NumericError as exc:
        return _fail(4, exc)


def _fail(code: int, exc: Exception) -> int:
    line = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    print(json.dumps(line), file=sys.stderr)
    return code


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
