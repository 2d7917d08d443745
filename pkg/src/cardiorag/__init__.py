"""Offline-first ECG screening for Chagas disease.

Pipeline: waveform parsing and preprocessing, interpretable clinical
features (conduction blocks, heart rate variability), learned latent
embeddings for case retrieval, prompt assembly and structured LLM
diagnosis, plus a batch evaluation harness.
"""

__version__ = "0.1.0"

from .records import (EcgRecord, Label, RecordFormat, Sex, Source,
                      load_record, preprocess, write_internal)
from .delineate import WaveMeasurements, compute_axis, delineate_qrs, detect_r_peaks
from .clinical import (ClinicalFeatures, compute_hrv, detect_lafb, detect_rbbb,
                       extract_features)
from .encoder import (EncoderArchitecture, EncoderWeights, LatentEmbedding,
                      embed, kl_divergence, load_weights, random_weights,
                      save_weights)
from .casedb import (CaseDatabase, CaseEntry, RetrievalConfig, ScoredCase,
                     age_similarity, build_db, cosine_similarity, retrieve)
from .prompt import PromptConfig, Variant, build_prompt, format_case
from .llm import (BackendConfig, DiagnosisReport, Validity, diagnose,
                  mock_backend, parse_structured_output)
from .evaluate import (ConfusionCounts, ExperimentConfig, MetricsReport,
                       compute_metrics, run_experiment)

__all__ = [
    "EcgRecord", "Label", "RecordFormat", "Sex", "Source",
    "load_record", "preprocess", "write_internal",
    "WaveMeasurements", "compute_axis", "delineate_qrs", "detect_r_peaks",
    "ClinicalFeatures", "compute_hrv", "detect_lafb", "detect_rbbb",
    "extract_features",
    "EncoderArchitecture", "EncoderWeights", "LatentEmbedding",
    "embed", "kl_divergence", "load_weights", "random_weights", "save_weights",
    "CaseDatabase", "CaseEntry", "RetrievalConfig", "ScoredCase",
    "age_similarity", "build_db", "cosine_similarity", "retrieve",
    "PromptConfig", "Variant", "build_prompt", "format_case",
    "BackendConfig", "DiagnosisReport", "Validity", "diagnose",
    "mock_backend", "parse_structured_output",
    "ConfusionCounts", "ExperimentConfig", "MetricsReport",
    "compute_metrics", "run_experiment",
]
