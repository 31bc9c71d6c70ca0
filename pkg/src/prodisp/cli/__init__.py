"""Scenario-driven orchestration: panels, synthetic economies, pipeline runs."""

from .economy import EconomyResult, generate_synthetic_economy
from .panel import (
    FirmRecord,
    Panel,
    PanelRejectionError,
    PanelSchemaError,
    aggregate_sectors,
    ingest_panel,
    trim_outliers,
    trim_robustness,
    worker_weighted_sample,
    write_panel_csv,
)
from .pipeline import RunBundle, StageError, run_pipeline, run_stage
from .scenario import Scenario, ScenarioError, apply_overrides, load_scenario, parse_scenario

__all__ = [
    "EconomyResult",
    "FirmRecord",
    "Panel",
    "PanelRejectionError",
    "PanelSchemaError",
    "RunBundle",
    "Scenario",
    "ScenarioError",
    "StageError",
    "aggregate_sectors",
    "apply_overrides",
    "generate_synthetic_economy",
    "ingest_panel",
    "load_scenario",
    "parse_scenario",
    "run_pipeline",
    "run_stage",
    "trim_outliers",
    "trim_robustness",
    "worker_weighted_sample",
    "write_panel_csv",
]
