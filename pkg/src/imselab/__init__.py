"""Desk-scale laboratory for multi-modal deformable image registration.

The lab trains a spatial-error evaluator from single-modality images using
Shuffle Remap style augmentation, then drives learned and iterative
registration, image translation, and label-free quality scoring with it,
alongside classical similarity baselines (MAE, NCC, MI, MIND).
"""

from .errors import (
    BadConfig,
    BadRange,
    BothEmpty,
    DegenerateRange,
    DegenerateScores,
    DivergedTraining,
    EmptyDataset,
    EmptyMask,
    EmptyRegion,
    ImselabError,
    InvalidSpec,
    NonFiniteInput,
    NonFiniteLoss,
    ShapeMismatch,
)
from .evaluation import CorrelationReport, correlation_experiment, dice, field_smoothness, hd95, imse_alignment_score
from .evaluator import ErrorMapNet, SpatialErrorEvaluator
from .image_core import normalize, spatial_gradient, warp, warp_nearest
from .metrics import MetricValue, mae, mind_loss, mse, mutual_information, ncc
from .phantoms import (
    GroundTruthPair,
    ModalityMap,
    Phantom,
    default_modality_pair,
    generate_ground_truth_pair,
    generate_phantom,
    invert_field,
    simulate_modality,
)
from .registration import (
    IterativeRegistration,
    NetworkRegistration,
    RegistrationResult,
    RegistrationUNet,
    smoothness_loss,
)
from .shuffle_remap import (
    BezierShift,
    BezierSpec,
    RemapSpec,
    ShuffleRemap,
    apply_bezier,
    apply_remap,
    bezier_shift,
    sample_bezier,
    sample_remap,
)
from .spatial_transforms import (
    AffineParams,
    TrainingPairConfig,
    TrainingSample,
    TransformConfig,
    affine_to_field,
    make_training_pair,
    sample_affine,
    sample_elastic_field,
    sample_transform_field,
)

__version__ = "0.1.0"

__all__ = [
    "AffineParams",
    "BadConfig",
    "BadRange",
    "BezierShift",
    "BezierSpec",
    "BothEmpty",
    "CorrelationReport",
    "DegenerateRange",
    "DegenerateScores",
    "DivergedTraining",
    "EmptyDataset",
    "EmptyMask",
    "EmptyRegion",
    "ErrorMapNet",
    "GroundTruthPair",
    "ImselabError",
    "InvalidSpec",
    "IterativeRegistration",
    "MetricValue",
    "ModalityMap",
    "NetworkRegistration",
    "NonFiniteInput",
    "NonFiniteLoss",
    "Phantom",
    "RegistrationResult",
    "RegistrationUNet",
    "RemapSpec",
    "ShapeMismatch",
    "ShuffleRemap",
    "SpatialErrorEvaluator",
    "TrainingPairConfig",
    "TrainingSample",
    "TransformConfig",
    "apply_bezier",
    "apply_remap",
    "bezier_shift",
    "correlation_experiment",
    "default_modality_pair",
    "dice",
    "field_smoothness",
    "generate_ground_truth_pair",
    "generate_phantom",
    "hd95",
    "imse_alignment_score",
    "invert_field",
    "mae",
    "make_training_pair",
    "mind_loss",
    "mse",
    "mutual_information",
    "ncc",
    "normalize",
    "sample_affine",
    "sample_bezier",
    "sample_elastic_field",
    "sample_remap",
    "sample_transform_field",
    "simulate_modality",
    "smoothness_loss",
    "spatial_gradient",
    "warp",
    "warp_nearest",
]
