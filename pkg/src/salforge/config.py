"""Experiment configuration (JSON) and dataset manifests.

The config schema is strict: unknown keys are rejected, ranges are checked,
and an empty object yields the full set of defaults (alpha 0.5, SGD at lr
0.005 decayed 0.1x every 12 epochs, 50 epochs, batch 20, seeds [1, 2, 3],
the default synthetic dataset, no saliency source).

``alpha`` may equivalently be given as ``{"cyborg": {"alpha": ...}}``; both
spellings at once must agree.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ManifestError, ParseError, UnknownKey
from .granularity import GranularityLevel, GranularitySpec, ThresholdMode
from .mimic import MimicTrainConfig
from .pgm import read_pgm
from .saliency import AnnotationSet, SaliencyMap
from .synth import ShiftMode, SynthConfig, SynthSample
from .training import TrainSettings

VALID_SOURCES = ("human", "mimic", "segmenter_external", "none")

# threshold convention by map origin: human maps are aggregates of 8-bit
# annotations (any nonzero pixel is salient); mimic maps are sigmoid outputs
# binarized at one half (> 127), with the pre-rectangle erosion applied
_SOURCE_THRESHOLD = {
    "human": ThresholdMode.POSITIVE,
    "segmenter_external": ThresholdMode.POSITIVE,
    "mimic": ThresholdMode.HALF,
}
_SOURCE_ERODE = {"human": False, "segmenter_external": False, "mimic": True}


@dataclass(frozen=True)
class ExperimentConfig:
    saliency_source: str = "none"
    granularity: GranularitySpec | None = None
    alpha: float = 0.5
    seeds: tuple[int, ...] = (1, 2, 3)
    train: TrainSettings = TrainSettings()
    mimic_train: MimicTrainConfig = MimicTrainConfig()
    dataset: SynthConfig | None = SynthConfig()
    manifest_path: str | None = None
    external_map_dir: str | None = None


def _require_keys(section: dict, allowed, where: str):
    for key in section:
        if key not in allowed:
            raise UnknownKey(f"unknown config key {where}{key!r}")


def _number(section: dict, key: str, default, where: str, lo=None, hi=None, integer=False):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}{key} must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ParseError(f"{where}{key} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ParseError(f"{where}{key} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ParseError(f"{where}{key} must be <= {hi}, got {value}")
    return int(value) if integer else float(value)


def _parse_granularity(section, source: str) -> GranularitySpec:
    _require_keys(section, ("level", "threshold_mode", "erode_before_boi"), "granularity.")
    if "level" not in section:
        raise ParseError("granularity.level is required (BOI, AOI, or FOI)")
    try:
        level = GranularityLevel(str(section["level"]).upper())
    except ValueError:
        raise ParseError(f"granularity.level must be BOI, AOI, or FOI, got {section['level']!r}") from None
    if "threshold_mode" in section:
        try:
            mode = ThresholdMode(str(section["threshold_mode"]).lower())
        except ValueError:
            raise ParseError(
                f"granularity.threshold_mode must be positive or half, got {section['threshold_mode']!r}"
            ) from None
    else:
        mode = _SOURCE_THRESHOLD[source]
    erode = section.get("erode_before_boi", _SOURCE_ERODE[source])
    if not isinstance(erode, bool):
        raise ParseError(f"granularity.erode_before_boi must be a boolean, got {erode!r}")
    return GranularitySpec(level, mode, erode)


def _parse_train(section) -> TrainSettings:
    allowed = ("learning_rate", "decay_factor", "step_epochs", "epochs", "batch_size")
    _require_keys(section, allowed, "train.")
    try:
        return TrainSettings(
            learning_rate=_number(section, "learning_rate", 0.005, "train."),
            decay_factor=_number(section, "decay_factor", 0.1, "train."),
            step_epochs=_number(section, "step_epochs", 12, "train.", lo=1, integer=True),
            epochs=_number(section, "epochs", 50, "train.", lo=1, integer=True),
            batch_size=_number(section, "batch_size", 20, "train.", lo=1, integer=True),
        )
    except ValueError as exc:
        raise ParseError(f"train: {exc}") from None


def _parse_mimic_train(section) -> MimicTrainConfig:
    allowed = ("learning_rate", "epochs", "batch_size", "seed")
    _require_keys(section, allowed, "mimic_train.")
    try:
        return MimicTrainConfig(
            learning_rate=_number(section, "learning_rate", 0.0001, "mimic_train."),
            epochs=_number(section, "epochs", 50, "mimic_train.", lo=1, integer=True),
            batch_size=_number(section, "batch_size", 20, "mimic_train.", lo=1, integer=True),
            seed=_number(section, "seed", 0, "mimic_train.", integer=True),
        )
    except ValueError as exc:
        raise ParseError(f"mimic_train: {exc}") from None


def _parse_dataset(section):
    """Returns (SynthConfig | None, manifest_path | None)."""
    if "manifest" in section:
        _require_keys(section, ("manifest",), "dataset.")
        if not isinstance(section["manifest"], str):
            raise ParseError("dataset.manifest must be a path string")
        return None, section["manifest"]
    allowed = tuple(f.name for f in fields(SynthConfig))
    _require_keys(section, allowed, "dataset.")
    kwargs = {}
    int_fields = ("image_size", "n_train", "n_val", "n_test", "n_annotators",
                  "annotator_jitter", "seed")
    float_fields = ("annotator_error_rate", "texture_sigma", "texture_contrast",
                    "artifact_radius", "artifact_width", "artifact_amplitude",
                    "weaken_factor")
    for name in int_fields:
        if name in section:
            kwargs[name] = _number(section, name, None, "dataset.", integer=True)
    for name in float_fields:
        if name in section:
            kwargs[name] = _number(section, name, None, "dataset.")
    if "shift_mode" in section:
        try:
            kwargs["shift_mode"] = ShiftMode(str(section["shift_mode"]))
        except ValueError:
            raise ParseError(
                f"dataset.shift_mode must be artifact_moved or artifact_weakened,"
                f" got {section['shift_mode']!r}"
            ) from None
    return SynthConfig(**kwargs).validate(), None


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ParseError(f"config root must be a JSON object, got {type(data).__name__}")
    allowed = ("saliency_source", "granularity", "alpha", "cyborg", "seeds",
               "train", "mimic_train", "dataset", "external_map_dir")
    _require_keys(data, allowed, "")

    source = data.get("saliency_source", "none")
    if source not in VALID_SOURCES:
        raise ParseError(f"saliency_source must be one of {VALID_SOURCES}, got {source!r}")

    alpha = _number(data, "alpha", 0.5, "", lo=0.0, hi=1.0)
    if "cyborg" in data:
        section = data["cyborg"]
        if not isinstance(section, dict):
            raise ParseError("cyborg section must be an object")
        _require_keys(section, ("alpha",), "cyborg.")
        nested = _number(section, "alpha", 0.5, "cyborg.", lo=0.0, hi=1.0)
        if "alpha" in data and nested != alpha:
            raise ParseError(f"alpha given twice with different values: {alpha} vs {nested}")
        alpha = nested

    granularity = None
    if "granularity" in data:
        if source == "none":
            raise ParseError("granularity must be omitted when saliency_source is none")
        if not isinstance(data["granularity"], dict):
            raise ParseError("granularity must be an object")
        granularity = _parse_granularity(data["granularity"], source)
    elif source != "none":
        raise ParseError(f"saliency_source {source!r} requires a granularity section")

    seeds = data.get("seeds", [1, 2, 3])
    if (not isinstance(seeds, list) or not seeds
            or any(isinstance(s, bool) or not isinstance(s, int) for s in seeds)):
        raise ParseError(f"seeds must be a nonempty list of integers, got {seeds!r}")
    if len(set(seeds)) != len(seeds):
        raise ParseError("seeds must be distinct")

    train_section = data.get("train", {})
    if not isinstance(train_section, dict):
        raise ParseError("train section must be an object")
    mimic_section = data.get("mimic_train", {})
    if not isinstance(mimic_section, dict):
        raise ParseError("mimic_train section must be an object")
    dataset_section = data.get("dataset", {})
    if not isinstance(dataset_section, dict):
        raise ParseError("dataset section must be an object")

    dataset, manifest_path = _parse_dataset(dataset_section)

    external_map_dir = data.get("external_map_dir")
    if external_map_dir is not None and not isinstance(external_map_dir, str):
        raise ParseError("external_map_dir must be a path string")
    if source == "segmenter_external" and external_map_dir is None:
        raise ParseError("saliency_source segmenter_external requires external_map_dir")

    return ExperimentConfig(
        saliency_source=source,
        granularity=granularity,
        alpha=alpha,
        seeds=tuple(seeds),
        train=_parse_train(train_section),
        mimic_train=_parse_mimic_train(mimic_section),
        dataset=dataset,
        manifest_path=manifest_path,
        external_map_dir=external_map_dir,
    )


def parse_config(path) -> ExperimentConfig:
    """Parse and fully default a JSON experiment config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Canonical JSON-ready form; config_from_dict(config_to_dict(c)) == c."""
    out: dict = {
        "saliency_source": config.saliency_source,
        "alpha": config.alpha,
        "seeds": list(config.seeds),
        "train": {
            "learning_rate": config.train.learning_rate,
            "decay_factor": config.train.decay_factor,
            "step_epochs": config.train.step_epochs,
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
        },
        "mimic_train": {
            "learning_rate": config.mimic_train.learning_rate,
            "epochs": config.mimic_train.epochs,
            "batch_size": config.mimic_train.batch_size,
            "seed": config.mimic_train.seed,
        },
    }
    if config.granularity is not None:
        out["granularity"] = {
            "level": config.granularity.level.value,
            "threshold_mode": config.granularity.threshold_mode.value,
            "erode_before_boi": config.granularity.erode_before_boi,
        }
    if config.manifest_path is not None:
        out["dataset"] = {"manifest": config.manifest_path}
    else:
        ds = config.dataset
        out["dataset"] = {
            "image_size": ds.image_size,
            "n_train": ds.n_train,
            "n_val": ds.n_val,
            "n_test": ds.n_test,
            "n_annotators": ds.n_annotators,
            "annotator_jitter": ds.annotator_jitter,
            "annotator_error_rate": ds.annotator_error_rate,
            "shift_mode": ds.shift_mode.value,
            "seed": ds.seed,
            "texture_sigma": ds.texture_sigma,
            "texture_contrast": ds.texture_contrast,
            "artifact_radius": ds.artifact_radius,
            "artifact_width": ds.artifact_width,
            "artifact_amplitude": ds.artifact_amplitude,
            "weaken_factor": ds.weaken_factor,
        }
    if config.external_map_dir is not None:
        out["external_map_dir"] = config.external_map_dir
    return out


# ---------------------------------------------------------------------------
# manifests


def write_manifest(path, rows: list[dict]) -> None:
    Path(path).write_text(json.dumps({"samples": rows}, indent=2) + "\n")


def _load_map(base: Path, rel: str) -> SaliencyMap:
    target = base / rel
    if not target.is_file():
        raise ManifestError(f"referenced file does not exist: {target}")
    return read_pgm(target)


def load_manifest_dataset(path) -> dict[str, list[SynthSample]]:
    """Read a manifest and its referenced PGM files into per-split samples.

    Rows hold an image path, a 0/1 label, a split name, and optionally an
    aggregated saliency map and/or per-annotator maps with correctness flags.
    Paths are relative to the manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest does not exist: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict) or not isinstance(data.get("samples"), list):
        raise ManifestError(f"{path}: expected an object with a samples list")
    base = path.parent
    splits: dict[str, list[SynthSample]] = {"train": [], "val": [], "test": []}
    for i, row in enumerate(data["samples"]):
        if not isinstance(row, dict) or "image" not in row:
            raise ManifestError(f"{path}: sample {i} must be an object with an image path")
        label = row.get("label")
        if label not in (0, 1):
            raise ManifestError(f"{path}: sample {i} label must be 0 or 1, got {label!r}")
        split = row.get("split", "train")
        if split not in splits:
            raise ManifestError(f"{path}: sample {i} split must be train, val, or test")
        image_map = _load_map(base, row["image"])
        image = image_map.pixels.astype(np.float64) / 255.0
        sample_id = row.get("id", Path(row["image"]).stem)

        saliency = None
        if row.get("saliency") is not None:
            saliency = _load_map(base, row["saliency"])
        annotations = None
        if row.get("annotations"):
            ann_paths = row["annotations"]
            flags = row.get("correct", [True] * len(ann_paths))
            if len(flags) != len(ann_paths):
                raise ManifestError(f"{path}: sample {i} needs one correct flag per annotation")
            maps = tuple(_load_map(base, p) for p in ann_paths)
            annotations = AnnotationSet(sample_id, maps, tuple(bool(f) for f in flags))
        splits[split].append(SynthSample(sample_id, image, int(label), saliency, annotations))
    return splits
