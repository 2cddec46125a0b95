"""salforge: saliency-guided training at desk scale.

Core pieces: 8-bit saliency maps with annotator aggregation (saliency),
granularity derivation (granularity), a minimal deterministic CNN engine with
class activation maps (engine), the composite saliency-guided loss (cyborg),
a saliency-mimicking autoencoder (mimic), ROC/AUC evaluation (evaluation), a
synthetic PAD-style dataset generator (synth), and experiment orchestration
plus CLI (experiment, cli).
"""

from .cyborg import CyborgConfig, cyborg_gradients, cyborg_loss, human_loss
from .engine import (
    Adam,
    CamClassifier,
    LrSchedule,
    SGD,
    cam,
    cross_entropy,
    load_arrays,
    save_arrays,
)
from .evaluation import EvalReport, RocCurve, ScoredSet, auc, roc_curve, summarize_runs
from .granularity import (
    GranularityLevel,
    GranularitySpec,
    Rect,
    ThresholdMode,
    binarize,
    bounding_rectangle,
    derive,
    erode_3x3,
    rasterize_rect,
)
from .mimic import MimicAutoencoder, MimicTrainConfig, generate_saliency, train_mimic
from .pgm import read_pgm, write_pgm
from .saliency import (
    AnnotationSet,
    SaliencyMap,
    UnitMap,
    aggregate_annotations,
    from_unit,
    minmax_normalize,
    resize_bilinear,
    to_unit,
)
from .synth import ShiftMode, SynthConfig, SynthSample, generate
from .training import TrainSettings, predict_scores, train_classifier

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AnnotationSet",
    "CamClassifier",
    "CyborgConfig",
    "EvalReport",
    "GranularityLevel",
    "GranularitySpec",
    "LrSchedule",
    "MimicAutoencoder",
    "MimicTrainConfig",
    "Rect",
    "RocCurve",
    "SGD",
    "SaliencyMap",
    "ScoredSet",
    "ShiftMode",
    "SynthConfig",
    "SynthSample",
    "ThresholdMode",
    "TrainSettings",
    "UnitMap",
    "aggregate_annotations",
    "auc",
    "binarize",
    "bounding_rectangle",
    "cam",
    "cross_entropy",
    "cyborg_gradients",
    "cyborg_loss",
    "derive",
    "erode_3x3",
    "from_unit",
    "generate",
    "generate_saliency",
    "human_loss",
    "load_arrays",
    "minmax_normalize",
    "predict_scores",
    "rasterize_rect",
    "read_pgm",
    "resize_bilinear",
    "roc_curve",
    "save_arrays",
    "summarize_runs",
    "to_unit",
    "train_classifier",
    "train_mimic",
    "write_pgm",
]
