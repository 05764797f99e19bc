"""Cross-fitted, multiply robust estimation of natural direct and indirect effects."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    Effect,
    EffectReport,
    MediatorKind,
    NuisanceFit,
    ObservationTable,
    PhiScores,
    ValidationError,
    read_csv,
    validate_table,
    write_csv,
)
from .estimator import crossfit, estimate, score_phi, score_phi_total  # noqa: E402
from .harness import BenchmarkConfig, run_benchmark  # noqa: E402
from .nuisance import DnnLearner, FitPlan, LinearLearner, OracleLearner, fit_nuisances  # noqa: E402
from .synth import Case, OracleNuisance, ScenarioSpec, generate  # noqa: E402

__all__ = [
    "BenchmarkConfig", "Case", "DnnLearner", "Effect", "EffectReport", "FitPlan",
    "LinearLearner", "MediatorKind", "NuisanceFit", "ObservationTable", "OracleLearner",
    "OracleNuisance", "PhiScores", "ScenarioSpec", "ValidationError", "crossfit", "estimate",
    "fit_nuisances", "generate", "read_csv", "run_benchmark", "score_phi", "score_phi_total",
    "validate_table", "write_csv",
]
