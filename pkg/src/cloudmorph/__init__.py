"""Colored point-cloud registration, 3D morph generation, and attack metrics."""

from . import errors
from .bcpd import (
    RegistrationParams,
    RegistrationResult,
    RegistrationState,
    SimilarityTransform,
    apply_transform,
    e_step,
    init_state,
    register,
    update_displacement,
    update_similarity,
)
from .cloudio import (
    NormalizationRecord,
    PointCloud,
    denormalize,
    downsample,
    load_ply,
    normalize,
    save_ply,
)
from .kernel import GramMatrix, build_gram, gaussian_kernel, solve_spd
from .metrics import (
    FrsThreshold,
    FtarTable,
    GmapReport,
    ScoreRecord,
    build_report,
    gmap,
    gmap_ma,
    gmap_mamf,
    quadrant_classify,
    read_ftar_csv,
    read_nonmated_csv,
    read_scores_csv,
    threshold_at_fmr,
    write_report_csv,
    write_scatter_csv,
)
from .morpher import MorphConfig, aligned_colored_source, correspondence_targets, morph

__all__ = [
    "errors",
    "GramMatrix",
    "GmapReport",
    "FrsThreshold",
    "FtarTable",
    "MorphConfig",
    "NormalizationRecord",
    "PointCloud",
    "RegistrationParams",
    "RegistrationResult",
    "RegistrationState",
    "ScoreRecord",
    "SimilarityTransform",
    "aligned_colored_source",
    "apply_transform",
    "build_gram",
    "build_report",
    "correspondence_targets",
    "denormalize",
    "downsample",
    "e_step",
    "gaussian_kernel",
    "gmap",
    "gmap_ma",
    "gmap_mamf",
    "init_state",
    "load_ply",
    "morph",
    "normalize",
    "quadrant_classify",
    "read_ftar_csv",
    "read_nonmated_csv",
    "read_scores_csv",
    "register",
    "save_ply",
    "solve_spd",
    "threshold_at_fmr",
    "update_displacement",
    "update_similarity",
    "write_report_csv",
    "write_scatter_csv",
]

__version__ = "0.1.0"
