"""Dataset-level evaluation: prevalence, false-positive scans, NAT merges and synthetic data."""

from .dataset import Dataset, load_dataset, load_event_samples, write_dataset
from .falsepos import Bins, FalsePositiveReport, FpRow, false_positive_scan
from .merge import merge_datasets, merge_samples, nat_merge
from .prevalence import PrevalenceReport, PrevalenceRow, percent, prevalence
from .synth import (
    EventPlan,
    NoiseParams,
    NoiseSequence,
    PlanError,
    PlantedSequence,
    PlantPlan,
    generate_planted_dataset,
    random_plan,
)

__all__ = [
    "Bins",
    "Dataset",
    "EventPlan",
    "FalsePositiveReport",
    "FpRow",
    "NoiseParams",
    "NoiseSequence",
    "PlanError",
    "PlantPlan",
    "PlantedSequence",
    "PrevalenceReport",
    "PrevalenceRow",
    "false_positive_scan",
    "generate_planted_dataset",
    "load_dataset",
    "load_event_samples",
    "merge_datasets",
    "merge_samples",
    "nat_merge",
    "percent",
    "prevalence",
    "random_plan",
    "write_dataset",
]
