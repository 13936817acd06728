"""Missing-data pattern reduction toolkit.

Builds binary missingness indicators, reduces them with principal
components or principal axis factoring, decides how many components of
missingness the data carry, and probes what those components relate to.
"""

__version__ = "0.1.0"

from .correlation import CorrelationMatrix, pearson, repair_pd, tetrachoric, tetrachoric_from_table
from .extraction import ComponentScores, EigenSolution, paf, pca, scores
from .indicators import (
    Dataset,
    IndicatorMatrix,
    PatternTable,
    build_indicators,
    tabulate_patterns,
)
from .mechanism import LogisticFit, ScreenResult, fit_logistic, roc_auc, screen, stratified_rerun
from .retention import (
    RetentionDecision,
    ekc,
    guidance,
    kaiser,
    parallel_analysis,
    profile_likelihood,
)
from .simulation import SimCondition, SimReport, full_grid, generate, run_condition, run_grid

__all__ = [
    "CorrelationMatrix",
    "ComponentScores",
    "Dataset",
    "EigenSolution",
    "IndicatorMatrix",
    "LogisticFit",
    "PatternTable",
    "RetentionDecision",
    "ScreenResult",
    "SimCondition",
    "SimReport",
    "build_indicators",
    "ekc",
    "fit_logistic",
    "full_grid",
    "generate",
    "guidance",
    "kaiser",
    "paf",
    "parallel_analysis",
    "pca",
    "pearson",
    "profile_likelihood",
    "repair_pd",
    "roc_auc",
    "run_condition",
    "run_grid",
    "scores",
    "screen",
    "stratified_rerun",
    "tabulate_patterns",
    "tetrachoric",
    "tetrachoric_from_table",
]
