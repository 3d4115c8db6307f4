"""Estimate which micro record sits behind each aggregated open record.

The package chains four stages: MinHash-LSH candidate search with an
adaptive banding schedule, training-set assembly from the candidate
structure, an EM-style semi-supervised ensemble that filters candidates,
and conditional-probability ranking that picks the most probable record.
"""

from .data import (
    Binning,
    FeatureSpec,
    Record,
    TabularDataset,
    drop_redundant,
    fit_binning,
    fit_common_binnings,
    impute_missing,
    load_csv,
    normalize_skewed,
    sample_skewness,
    tokenize_common,
    tokenize_dataset,
    write_csv,
)
from .encoding import Encoder, LabeledExample, encode, fit_encoder
from .ensemble import (
    EnsembleModel,
    EnsembleSpec,
    default_spec,
    grid_search,
    select_best_method,
    train_ensemble,
)
from .classifiers import (
    ClassifierModel,
    Metrics,
    ModelConfig,
    evaluate,
    feature_importance,
    fit,
    load_model,
    predict_proba,
    resample,
    save_model,
)
from .lsh import (
    AdaptiveSchedule,
    BandingScheme,
    CandidatePair,
    LshIndex,
    MinHashSignature,
    SupportIndex,
    build_index,
    jaccard,
    minhash_signature,
    query_adaptive,
    s_curve,
    s_curve_table,
)
from .pipeline import (
    EstimationReport,
    PipelineConfig,
    TrainingSetAssembly,
    assemble_training,
    evaluate_topn,
    load_benchmark,
    load_config,
    run_pipeline,
    save_config,
)
from .ranking import (
    ConditionalProbabilityModel,
    RankedCandidate,
    fit_cond_prob,
    rank_candidates,
    score,
)
from .semisupervised import EmConfig, EmIteration, compare_em, em_train
from .synthetic import SyntheticBenchmark, SyntheticParams, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AdaptiveSchedule",
    "BandingScheme",
    "Binning",
    "CandidatePair",
    "ClassifierModel",
    "ConditionalProbabilityModel",
    "EmConfig",
    "EmIteration",
    "Encoder",
    "EnsembleModel",
    "EnsembleSpec",
    "EstimationReport",
    "FeatureSpec",
    "LabeledExample",
    "LshIndex",
    "Metrics",
    "MinHashSignature",
    "ModelConfig",
    "PipelineConfig",
    "RankedCandidate",
    "Record",
    "SupportIndex",
    "SyntheticBenchmark",
    "SyntheticParams",
    "TabularDataset",
    "TrainingSetAssembly",
    "assemble_training",
    "build_index",
    "compare_em",
    "default_spec",
    "drop_redundant",
    "em_train",
    "encode",
    "evaluate",
    "evaluate_topn",
    "feature_importance",
    "fit",
    "fit_binning",
    "fit_common_binnings",
    "fit_cond_prob",
    "fit_encoder",
    "generate_synthetic",
    "grid_search",
    "impute_missing",
    "jaccard",
    "load_benchmark",
    "load_config",
    "load_csv",
    "load_model",
    "minhash_signature",
    "normalize_skewed",
    "predict_proba",
    "query_adaptive",
    "rank_candidates",
    "resample",
    "run_pipeline",
    "s_curve",
    "s_curve_table",
    "sample_skewness",
    "save_config",
    "save_model",
    "score",
    "select_best_method",
    "tokenize_common",
    "tokenize_dataset",
    "train_ensemble",
    "write_csv",
]
