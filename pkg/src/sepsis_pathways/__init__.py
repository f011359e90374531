"""Sepsis prognostic pathways from clinical notes.

Notes and vitals become polarity-tagged concept series per hospital stage,
stage-1 vectors are clustered into patient subgroups, and each subgroup gets
a stage-to-stage transition network over sepsis outcome states.
"""

from .corpus import ClinicalNote, Disposition, DispositionStatus, VitalsRecord, load_notes, load_vitals
from .pathways import Outcome, TransitionMatrix, TransitionNetwork, build_networks, color_bucket, export_network, label_transitions
from .predict import StateClassifier, SubgroupClassifier, predict_pathway, train_state_classifier, train_subgroup_classifier
from .severity import SepsisState, StageClinicalFeatures, classify_severity, severity_timeline
from .synthcohort import GeneratorConfig, generate_cohort
from .textproc import Polarity, StructuredNote, TextResources, process_note
from .timeline import StageSeries, build_stage_series, impute_series, stage_bounds
from .vectors import AutoencoderConfig, build_ternary_vector, build_vocabulary, encode, train_autoencoder

__version__ = "0.1.0"

__all__ = [
    "AutoencoderConfig",
    "ClinicalNote",
    "Disposition",
    "DispositionStatus",
    "GeneratorConfig",
    "Outcome",
    "Polarity",
    "SepsisState",
    "StageClinicalFeatures",
    "StageSeries",
    "StateClassifier",
    "StructuredNote",
    "SubgroupClassifier",
    "TextResources",
    "TransitionMatrix",
    "TransitionNetwork",
    "VitalsRecord",
    "build_networks",
    "build_stage_series",
    "build_ternary_vector",
    "build_vocabulary",
    "classify_severity",
    "color_bucket",
    "encode",
    "export_network",
    "generate_cohort",
    "impute_series",
    "label_transitions",
    "load_notes",
    "load_vitals",
    "predict_pathway",
    "process_note",
    "severity_timeline",
    "stage_bounds",
    "train_autoencoder",
    "train_state_classifier",
    "train_subgroup_classifier",
]
