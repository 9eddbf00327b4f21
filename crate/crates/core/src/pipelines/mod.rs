//! End-to-end recognition pipelines: feature preparation, acoustic-model
//! training, bottleneck extraction, adaptation, decoding and experiments.

pub mod eval;
pub mod experiment;
pub mod features;
pub mod models;
pub mod strategy;

pub use eval::{decode_set, train_task_lm, Decoding, LmTrainSet};
pub use experiment::{run_plan, CorpusSource, ExperimentPlan, ExperimentReport, RunRecord, SystemPlan, TvPlan};
pub use features::{BnContext, FeatureSet, Featurizer, TvSource};
pub use models::{
    adapt, bn_feature_set, extract_bn, extract_bn_set, train_am, train_bn_extractor, AcousticModel, AdaptConfig,
    ModelInput, RetrainLayers,
};
pub use strategy::{
    run_strategy, run_strategy_cached, tandem_features, StageCache, BottleneckStrategy, Corpora, Domain, Partition, Provenance, StrategyConfig, StrategyRun,
};
