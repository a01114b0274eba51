"""Transferability metrics over object-level detector features.

Feature maps exported from a frozen detector backbone are pooled per
annotated object (single-level or multi-scale ROI-Align, global average,
or precomputed dense-layer rows), scored with training-free compatibility
metrics, and the scores are judged by how well they rank realized transfer
quality across scenarios.
"""

from .errors import XferodError
from .evaluation import (
    CorrelationResult,
    RankEntry,
    evaluate_table,
    kendall,
    mean_correlations,
    pearson,
    rank_report,
    spearman,
)
from .metrics import (
    EvidenceSolution,
    MetricScore,
    ScoreConfig,
    ShrinkageResult,
    TransRateConfig,
    coding_rate,
    hscore,
    hscore_regularized,
    ledoit_wolf,
    logme_class,
    logme_pos,
    logme_single,
    prop1_gap,
    score_all,
    tlogme,
    transrate,
)
from .pooling import (
    MultiScaleConfig,
    RoiAlignConfig,
    active_backend,
    extract_fc,
    extract_global,
    extract_multiscale,
    extract_roi,
    fpn_level_for_box,
    roi_align,
)
from .store import (
    DatasetManifest,
    FeatureMapSet,
    FeatureMatrix,
    ObjectRecord,
    ScenarioTable,
    load_feature_matrix,
    load_manifest,
    load_scenarios,
    read_tensor,
    save_feature_matrix,
    save_manifest,
    save_scenarios,
    write_tensor,
)
from .synth import ProbeResult, SynthSpec, generate, probe, scenario_sweep

__version__ = "0.1.0"
