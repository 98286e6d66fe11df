"""Monte Carlo experiments, bound verification and result tables."""

from .experiments import EXPERIMENTS, METHODS, ExperimentConfig, prediction_cost, run_experiment, run_trial
from .records import (
    SCHEMA_VERSION,
    TrialRecord,
    emit_summary,
    read_records_csv,
    records_to_csv,
    summary_lookup,
    summary_to_csv,
    write_results,
)
from .verify import VERIFY_KINDS, Verdict, verify_bound

__all__ = [
    "EXPERIMENTS", "METHODS", "ExperimentConfig", "prediction_cost", "run_experiment", "run_trial",
    "SCHEMA_VERSION", "TrialRecord", "emit_summary", "read_records_csv", "records_to_csv",
    "summary_lookup", "summary_to_csv", "write_results",
    "VERIFY_KINDS", "Verdict", "verify_bound",
]
