"""Performance-based Shapley attribution for multi-agent trajectory predictors."""

from .aggregate import GlobalReport, aggregate, compare_reports
from .attribution import (
    AttributionSettings,
    FeatureKind,
    FeatureSpec,
    LocalAttribution,
    attribute,
    attribute_all,
    exact_shapley,
    permutation_shapley,
    shapley_exact,
    shapley_marginal,
    shapley_sampled,
)
from .errors import TrajShapleyError
from .metrics import Loss, LossKind, interaction_diff_table, min_ade, min_fde, nll
from .predictor import (
    ConstantVelocityPredictor,
    FeatureMask,
    PredictiveDistribution,
    SocialPredictor,
    TrainHyper,
    apply_mask,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .scene import AgentTrack, Dataset, PredictionQuery, Scene, enumerate_queries, load_manifest, parse_scene_text
from .synth import SynthConfig, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AgentTrack", "AttributionSettings", "ConstantVelocityPredictor", "Dataset", "FeatureKind", "FeatureMask",
    "FeatureSpec", "GlobalReport", "LocalAttribution", "Loss", "LossKind", "PredictionQuery",
    "PredictiveDistribution", "Scene", "SocialPredictor", "SynthConfig", "TrainHyper", "TrajShapleyError",
    "aggregate", "apply_mask", "attribute", "attribute_all", "compare_reports", "enumerate_queries",
    "exact_shapley", "generate_dataset", "interaction_diff_table", "load_checkpoint", "load_manifest", "min_ade",
    "min_fde", "nll", "parse_scene_text", "permutation_shapley", "predict", "save_checkpoint", "shapley_exact",
    "shapley_marginal", "shapley_sampled", "train",
]
