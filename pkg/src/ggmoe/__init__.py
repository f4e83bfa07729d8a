"""Gaussian-gated mixture-of-experts estimation with dendrogram-based
merging and order selection."""

from .dendrogram import (
    Dendrogram,
    MergeRecord,
    argmin_pair,
    build_dendrogram,
    dissimilarity,
    merge_atoms,
    merge_pair,
)
from .em import (
    EMConfig,
    FavorableInit,
    FitResult,
    FromMeasureInit,
    RandomSubsetInit,
    e_step,
    fit_em,
    init_favorable,
    init_random_subset,
    m_step,
)
from .errors import DimensionError, GGMoEError, InputFormatError, NumericalError
from .experiments import (
    ExperimentConfig,
    builtin_g0,
    derive_seed,
    load_config,
    run_convergence,
    run_selection,
    selection_summary,
    slope_of_mean_loss,
)
from .metrics import (
    CELL_ASSIGNMENT_EXPONENTS,
    RBarTable,
    VoronoiAssignment,
    matched_param_errors,
    s_loss,
    voronoi_cells,
    voronoi_loss,
    wasserstein_r,
)
from .model import (
    Dataset,
    ExpertAtom,
    MixingMeasure,
    average_log_likelihood,
    component_log_scores,
    density_joint,
    gating_posterior,
    load_measure_or_fit,
    log_density_joint,
    predict_conditional_mean,
    sample_dataset,
)
from .selection import (
    CriteriaTable,
    CriterionScores,
    count_free_params,
    default_omega,
    dsc_select,
    dsc_values,
    information_criteria,
    write_criteria_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CELL_ASSIGNMENT_EXPONENTS",
    "CriteriaTable",
    "CriterionScores",
    "Dataset",
    "Dendrogram",
    "DimensionError",
    "EMConfig",
    "ExperimentConfig",
    "ExpertAtom",
    "FavorableInit",
    "FitResult",
    "FromMeasureInit",
    "GGMoEError",
    "InputFormatError",
    "MergeRecord",
    "MixingMeasure",
    "NumericalError",
    "RBarTable",
    "RandomSubsetInit",
    "VoronoiAssignment",
    "argmin_pair",
    "average_log_likelihood",
    "build_dendrogram",
    "builtin_g0",
    "component_log_scores",
    "count_free_params",
    "default_omega",
    "density_joint",
    "derive_seed",
    "dissimilarity",
    "dsc_select",
    "dsc_values",
    "e_step",
    "fit_em",
    "gating_posterior",
    "information_criteria",
    "init_favorable",
    "init_random_subset",
    "load_config",
    "load_measure_or_fit",
    "log_density_joint",
    "m_step",
    "matched_param_errors",
    "merge_atoms",
    "merge_pair",
    "predict_conditional_mean",
    "run_convergence",
    "run_selection",
    "s_loss",
    "sample_dataset",
    "selection_summary",
    "slope_of_mean_loss",
    "voronoi_cells",
    "voronoi_loss",
    "wasserstein_r",
    "write_criteria_csv",
]
