"""CT-enterography biomarker extraction and modeling toolkit."""

from .grids import (
    BinaryMask,
    CtVolume,
    GridMismatchError,
    ProbabilityVolume,
    window_hu,
)
from .nifti import NiftiParseError, read_nifti, read_nifti_mask, write_nifti
from .morphology import (
    StructuringElement,
    connected_components,
    dilate,
    erode,
    percentile_threshold,
    threshold_range,
    union_masks,
)
from .synth import (
    AugmentSpec,
    PhantomSpec,
    add_noise,
    compose_augment,
    elastic_deform,
    make_phantom,
    rotate_rigid,
    scale_uniform,
    translate,
)
from .gmm import GmmModel, bic, fit_gmm, select_k_by_bic, wall_posterior
from .vesselness import (
    DistanceParams,
    RefineSchedule,
    VesselParams,
    frangi_response,
    refine_probability,
    wall_distance_weight,
)
from .biomarkers import (
    FEATURE_COLUMNS,
    CalcifiedParams,
    FatResult,
    FeatureVector,
    NecroticParams,
    assemble_features,
    comb_sign_map,
    derive_regions,
    detect_calcified,
    detect_necrotic,
    fat_mask,
    fat_ratio_volume,
    polar_subcutaneous_area,
    ptb_probability,
    region_aggregate,
)
from .metrics import Metrics, RocCurve, auc, confusion_metrics, roc_curve, youden_threshold
from .cohort import (
    LabeledCohort,
    build_cohort,
    read_features_csv,
    read_labels_csv,
    write_features_csv,
    write_labels_csv,
)
from .classifiers import (
    GaussianNaiveBayes,
    GradientBoosting,
    LinearSvm,
    LogisticRegressionGD,
    RandomForest,
)
from .boosting import TreeEnsemble, XgbClassifier, XgbHyper, leaf_weight, split_gain, train_xgb
from .shapley import ShapExplanation, explain_shap, shap_global_summary
from .overlay import LAYER_COLORS, OverlayBundle, OverlayLayer, load_manifest, make_layer, write_bundle
from .config import PipelineConfig, load_config
from .manifest import CaseManifest, LoadedCase, load_case
from .pipeline import CaseFindings, extract_case, render_case, synth_cohort

__version__ = "0.1.0"
