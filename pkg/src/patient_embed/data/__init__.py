"""Ingestion, bucketing, imputation, labels, splits and synthetic cohorts."""

from .bucketing import (CLUSTERING, PREDICTING, BucketedSequence, assemble, bucketize, compute_delta_t, impute,
                        preprocess_record)
from .container import Cohort, SchemaMismatch
from .icd import ICD_TABLE, map_icd_to_stage, stage_from_codes
from .records import (AdmissionRecord, DynamicFeature, FeatureSchema, SchemaError, StaticFeature, TimedEvent,
                      read_admissions, write_admissions)
from .splits import CohortSplit, fold_sizes, kfold_split, oversample_minority
from .synthetic import ConfigError, SyntheticSpec, generate_synthetic_cohort, schema_for

__all__ = [
    "AdmissionRecord", "BucketedSequence", "CLUSTERING", "Cohort", "CohortSplit", "ConfigError", "DynamicFeature",
    "FeatureSchema", "ICD_TABLE", "PREDICTING", "SchemaError", "SchemaMismatch", "StaticFeature", "SyntheticSpec",
    "TimedEvent", "assemble", "bucketize", "compute_delta_t", "fold_sizes", "generate_synthetic_cohort", "impute",
    "kfold_split", "map_icd_to_stage", "oversample_minority", "preprocess_record", "read_admissions", "schema_for",
    "stage_from_codes", "write_admissions",
]
