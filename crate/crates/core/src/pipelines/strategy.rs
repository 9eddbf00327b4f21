//! Bottleneck-feature training strategies.
//!
//! | strategy | BN extractor | AM | optional adaptation |
//! |---|---|---|---|
//! | A | dysarthric | dysarthric | none |
//! | B | normal | dysarthric | BN extractor |
//! | C | normal | normal | BN extractor and/or AM |
//!
//! Adapting the extractor changes the features the AM sees, so BN features
//! are always re-extracted with the final extractor before AM training.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

use super::features::{BnContext, FeatureSet, Featurizer};
use super::models::{adapt, bn_feature_set, extract_bn_set, train_am, train_bn_extractor, AcousticModel, AdaptConfig, ModelInput};
use crate::architectures::{ArchConfig, ArchKind};
use crate::corpus::synth::mix_seed;
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::frontend::{BaseKind, FrontendConfig};
use crate::nn::{TrainConfig, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BottleneckStrategy {
    A,
    B,
    C,
}

impl BottleneckStrategy {
    pub const ALL: [Self; 3] = [Self::A, Self::B, Self::C];

    /// Corpus the extractor is trained on.
    pub fn bn_domain(self) -> Domain {
        match self {
            Self::A => Domain::Dysarthric,
            Self::B | Self::C => Domain::Normal,
        }
    }

    /// Corpus the acoustic model is trained on.
    pub fn am_domain(self) -> Domain {
        match self {
            Self::A | Self::B => Domain::Dysarthric,
            Self::C => Domain::Normal,
        }
    }

    pub fn allows(self, adapt_bn: bool, adapt_am: bool) -> bool {
        match self {
            Self::A => !adapt_bn && !adapt_am,
            Self::B => !adapt_am,
            Self::C => true,
        }
    }
}

impl fmt::Display for BottleneckStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for BottleneckStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            _ => Err(Error::Validation(format!("unknown strategy `{s}` (expected A, B or C)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Normal,
    Dysarthric,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Normal => "normal",
            Domain::Dysarthric => "dysarthric",
        }
    }
}

/// Train / cross-validation / test utterances of one speaker population.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub train: Vec<Utterance>,
    pub cv: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Corpora<'a> {
    pub normal: Option<&'a Partition>,
    pub dysarthric: Option<&'a Partition>,
}

impl<'a> Corpora<'a> {
    pub fn get(&self, d: Domain) -> Result<&'a Partition> {
        match d {
            Domain::Normal => self.normal,
            Domain::Dysarthric => self.dysarthric,
        }
        .ok_or_else(|| Error::Missing(format!("{} corpus required", d.name())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: BottleneckStrategy,
    pub bn_arch: ArchKind,
    pub am_arch: ArchKind,
    pub adapt_bn: bool,
    pub adapt_am: bool,
    pub size: ArchConfig,
    pub base: BaseKind,
    pub frontend: FrontendConfig,
    pub train: TrainConfig,
    pub adapt: AdaptConfig,
    /// Every stage seed is derived from this one.
    pub seed: u64,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.strategy.allows(self.adapt_bn, self.adapt_am) {
            return Err(Error::Validation(format!(
                "strategy {} does not support adapt_bn={} adapt_am={}",
                self.strategy, self.adapt_bn, self.adapt_am
            )));
        }
        if self.bn_arch.needs_tv() {
            return Err(Error::Validation("fcnn cannot serve as a bottleneck extractor".into()));
        }
        if self.am_arch.needs_tv() {
            return Err(Error::Validation("an AM on bottleneck features has no TV input".into()));
        }
        self.adapt.validate()
    }

    /// Adaptation label used in reports.
    pub fn adaptation_label(&self) -> &'static str {
        match (self.adapt_bn, self.adapt_am) {
            (false, false) => "none",
            (true, false) => "bn",
            (false, true) => "am",
            (true, true) => "bn+am",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub corpus: String,
    pub seed: u64,
    pub epochs: usize,
    pub final_cv_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: BottleneckStrategy,
    pub bn_arch: ArchKind,
    pub am_arch: ArchKind,
    pub base: BaseKind,
    pub adaptation: String,
    /// True when the AM's BN features come from an adapted extractor.
    pub bn_reextracted: bool,
    pub stages: Vec<Stage>,
}

impl Provenance {
    /// Compact one-line stage summary, e.g. `train-bn@normal>train-am@dysarthric`.
    pub fn summary(&self) -> String {
        self.stages
            .iter()
            .map(|s| format!("{}@{}", s.name, s.corpus))
            .collect::<Vec<_>>()
            .join(">")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub extractor: AcousticModel,
    pub am: AcousticModel,
    pub provenance: Provenance,
}

impl StrategyRun {
    /// AM inputs for `utts`: acoustic features, BN extraction, BN context.
    pub fn features(&self, utts: &[Utterance]) -> Result<FeatureSet> {
        tandem_features(&self.extractor, &self.am, utts)
    }
}

/// Feature set for an AM fed by `extractor`'s bottleneck.
pub fn tandem_features(extractor: &AcousticModel, am: &AcousticModel, utts: &[Utterance]) -> Result<FeatureSet> {
    let ModelInput::Acoustic(featurizer) = &extractor.input else {
        return Err(Error::Validation("extractor must read acoustic features".into()));
    };
    let ModelInput::Bottleneck(ctx) = &am.input else {
        return Err(Error::Validation("acoustic model must read bottleneck features".into()));
    };
    let acoustic = FeatureSet::featurize(utts, featurizer, None)?;
    bn_feature_set(&extract_bn_set(extractor, &acoustic)?, ctx, &acoustic)
}

fn stage(name: &str, d: Domain, seed: u64, log: &TrainLog) -> Stage {
    Stage {
        name: name.into(),
        corpus: d.name().into(),
        seed,
        epochs: log.epochs.len(),
        final_cv_error: log.final_cv_error(),
    }
}

/// Trained stages shared between strategy runs. Strategies B and C start
/// from the same normal-speech extractor, and several C variants share an
/// AM, so each stage is trained once per cache.
///
/// A cache is tied to the size, front-end, training and adaptation settings
/// of the first run that uses it; runs with other settings are rejected.
#[derive(Debug, Default)]
pub struct StageCache {
    fingerprint: Option<String>,
    models: HashMap<String, (AcousticModel, Stage)>,
}

impl StageCache {
    fn check(&mut self, cfg: &StrategyConfig) -> Result<()> {
        let fp = serde_json::to_string(&(&cfg.size, cfg.base, &cfg.frontend, &cfg.train, &cfg.adapt))?;
        match &self.fingerprint {
            Some(existing) if *existing != fp => {
                Err(Error::Validation("stage cache was filled under different settings".into()))
            }
            Some(_) => Ok(()),
            None => {
                self.fingerprint = Some(fp);
                Ok(())
            }
        }
    }

    fn get_or_run(
        &mut self,
        key: &str,
        run: impl FnOnce() -> Result<(AcousticModel, Stage)>,
    ) -> Result<(AcousticModel, Stage)> {
        if let Some(hit) = self.models.get(key) {
            return Ok(hit.clone());
        }
        let fresh = run()?;
        self.models.insert(key.to_string(), fresh.clone());
        Ok(fresh)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Runs the stage sequence of `cfg.strategy`.
pub fn run_strategy(cfg: &StrategyConfig, corpora: Corpora) -> Result<StrategyRun> {
    run_strategy_cached(cfg, corpora, &mut StageCache::default())
}

/// [`run_strategy`] reusing stages already trained into `cache`. Stage seeds
/// depend only on `cfg.seed` and the stage, so results match uncached runs.
pub fn run_strategy_cached(cfg: &StrategyConfig, corpora: Corpora, cache: &mut StageCache) -> Result<StrategyRun> {
    cfg.validate()?;
    cache.check(cfg)?;
    let s = cfg.strategy;
    let bn_part = corpora.get(s.bn_domain())?;
    let am_part = corpora.get(s.am_domain())?;
    let dys = if cfg.adapt_bn || cfg.adapt_am {
        Some(corpora.get(Domain::Dysarthric)?)
    } else {
        None
    };
    let mut stages = Vec::new();
    let seeded = |i: u64| mix_seed(cfg.seed, i);

    let featurizer = Featurizer::fit(&bn_part.train, cfg.base, &cfg.frontend, None)?;
    let acoustic = |utts: &[Utterance]| FeatureSet::featurize(utts, &featurizer, None);
    let mut key = format!("train-bn|{}|{}|{}", cfg.bn_arch, s.bn_domain().name(), cfg.seed);
    let (mut extractor, st) = cache.get_or_run(&key, || {
        let tc = TrainConfig {
            seed: seeded(1),
            ..cfg.train.clone()
        };
        let (bn_train, bn_cv) = (acoustic(&bn_part.train)?, acoustic(&bn_part.cv)?);
        let (m, log) = train_bn_extractor(cfg.bn_arch, &cfg.size, featurizer.clone(), &bn_train, &bn_cv, &tc)?;
        Ok((m, stage("train-bn", s.bn_domain(), tc.seed, &log)))
    })?;
    stages.push(st);

    if cfg.adapt_bn {
        let d = dys.expect("checked above");
        key.push_str("|adapt-bn");
        let (m, st) = cache.get_or_run(&key, || {
            let ac = AdaptConfig {
                seed: seeded(2),
                ..cfg.adapt.clone()
            };
            let (m, log) = adapt(&extractor, &acoustic(&d.train)?, &acoustic(&d.cv)?, &ac)?;
            Ok((m, stage("adapt-bn", Domain::Dysarthric, ac.seed, &log)))
        })?;
        extractor = m;
        stages.push(st);
    }

    let bn_inputs = |utts: &[Utterance], ctx: &BnContext| -> Result<FeatureSet> {
        let a = acoustic(utts)?;
        bn_feature_set(&extract_bn_set(&extractor, &a)?, ctx, &a)
    };
    key.push_str(&format!("|train-am|{}|{}", cfg.am_arch, s.am_domain().name()));
    let (mut am, st) = cache.get_or_run(&key, || {
        let am_train_acoustic = acoustic(&am_part.train)?;
        let am_train_raw = extract_bn_set(&extractor, &am_train_acoustic)?;
        let ctx = BnContext::fit(&am_train_raw)?;
        let am_train = bn_feature_set(&am_train_raw, &ctx, &am_train_acoustic)?;
        let am_cv = bn_inputs(&am_part.cv, &ctx)?;
        let tc = TrainConfig {
            seed: seeded(3),
            ..cfg.train.clone()
        };
        let (m, log) = train_am(cfg.am_arch, &cfg.size, ModelInput::Bottleneck(ctx), &am_train, &am_cv, &tc, None)?;
        Ok((m, stage("train-am", s.am_domain(), tc.seed, &log)))
    })?;
    stages.push(st);

    if cfg.adapt_am {
        let d = dys.expect("checked above");
        key.push_str("|adapt-am");
        let ModelInput::Bottleneck(ctx) = am.input.clone() else {
            unreachable!("trained on bottleneck input above")
        };
        let (m, st) = cache.get_or_run(&key, || {
            let ac = AdaptConfig {
                seed: seeded(4),
                ..cfg.adapt.clone()
            };
            let (m, log) = adapt(&am, &bn_inputs(&d.train, &ctx)?, &bn_inputs(&d.cv, &ctx)?, &ac)?;
            Ok((m, stage("adapt-am", Domain::Dysarthric, ac.seed, &log)))
        })?;
        am = m;
        stages.push(st);
    }

    Ok(StrategyRun {
        extractor,
        am,
        provenance: Provenance {
            strategy: s,
            bn_arch: cfg.bn_arch,
            am_arch: cfg.am_arch,
            base: cfg.base,
            adaptation: cfg.adaptation_label().into(),
            bn_reextracted: cfg.adapt_bn,
            stages,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architectures::SizeClass;
    use crate::corpus::{generate_corpus, DysarthriaProfile};

    fn partition(dys: bool, seed: u64) -> Partition {
        let vocab: Vec<String> = ["ba", "de", "ku"].iter().map(|s| s.to_string()).collect();
        let p = DysarthriaProfile::default();
        let all = generate_corpus(10, &vocab, dys.then_some(&p), seed).unwrap();
        Partition {
            train: all[..6].to_vec(),
            cv: all[6..8].to_vec(),
            test: all[8..].to_vec(),
        }
    }

    fn config(strategy: BottleneckStrategy, adapt_bn: bool, adapt_am: bool) -> StrategyConfig {
        StrategyConfig {
            strategy,
            bn_arch: ArchKind::Dnn,
            am_arch: ArchKind::Dnn,
            adapt_bn,
            adapt_am,
            size: ArchConfig {
                hidden_layers: 3,
                hidden_units: 16,
                ..SizeClass::Desk.config()
            },
            base: BaseKind::Mfb,
            frontend: FrontendConfig::default(),
            train: TrainConfig {
                max_epochs: 1,
                ..TrainConfig::default()
            },
            adapt: AdaptConfig {
                min_epochs: 1,
                max_epochs: 1,
                ..AdaptConfig::default()
            },
            seed: 7,
        }
    }

    #[test]
    fn stage_sequences_follow_the_strategy() {
        let (nor, dys) = (partition(false, 1), partition(true, 1));
        let corpora = Corpora {
            normal: Some(&nor),
            dysarthric: Some(&dys),
        };
        let run = |s, b, a| run_strategy(&config(s, b, a), corpora).unwrap().provenance.summary();
        assert_eq!(run(BottleneckStrategy::A, false, false), "train-bn@dysarthric>train-am@dysarthric");
        assert_eq!(
            run(BottleneckStrategy::B, true, false),
            "train-bn@normal>adapt-bn@dysarthric>train-am@dysarthric"
        );
        let c = run_strategy(&config(BottleneckStrategy::C, true, true), corpora).unwrap();
        assert_eq!(
            c.provenance.summary(),
            "train-bn@normal>adapt-bn@dysarthric>train-am@normal>adapt-am@dysarthric"
        );
        assert!(c.provenance.bn_reextracted);
        let json = serde_json::to_string(&c.provenance).unwrap();
        assert_eq!(serde_json::from_str::<Provenance>(&json).unwrap(), c.provenance);
        let test = c.features(&dys.test).unwrap();
        assert_eq!(test.dims(), Some(60 * 17));
    }

    #[test]
    fn missing_corpus_and_bad_flags_rejected() {
        let nor = partition(false, 2);
        let only_normal = Corpora {
            normal: Some(&nor),
            dysarthric: None,
        };
        assert!(matches!(
            run_strategy(&config(BottleneckStrategy::B, false, false), only_normal),
            Err(Error::Missing(_))
        ));
        assert!(matches!(
            run_strategy(&config(BottleneckStrategy::C, false, true), only_normal),
            Err(Error::Missing(_))
        ));
        assert!(config(BottleneckStrategy::A, true, false).validate().is_err());
        assert!(config(BottleneckStrategy::B, false, true).validate().is_err());
    }

    #[test]
    fn reruns_are_identical() {
        let (nor, dys) = (partition(false, 3), partition(true, 3));
        let corpora = Corpora {
            normal: Some(&nor),
            dysarthric: Some(&dys),
        };
        let cfg = config(BottleneckStrategy::B, true, false);
        assert_eq!(run_strategy(&cfg, corpora).unwrap(), run_strategy(&cfg, corpora).unwrap());
    }

    #[test]
    fn cached_runs_match_fresh_runs() {
        let (nor, dys) = (partition(false, 4), partition(true, 4));
        let corpora = Corpora {
            normal: Some(&nor),
            dysarthric: Some(&dys),
        };
        let mut cache = StageCache::default();
        let c_bn = config(BottleneckStrategy::C, true, false);
        run_strategy_cached(&config(BottleneckStrategy::B, true, false), corpora, &mut cache).unwrap();
        assert_eq!(cache.len(), 3);
        let cached = run_strategy_cached(&c_bn, corpora, &mut cache).unwrap();
        assert_eq!(cache.len(), 4);
        assert_eq!(cached, run_strategy(&c_bn, corpora).unwrap());
        let other = StrategyConfig {
            seed: 8,
            train: TrainConfig {
                max_epochs: 2,
                ..TrainConfig::default()
            },
            ..c_bn
        };
        assert!(run_strategy_cached(&other, corpora, &mut cache).is_err());
    }
}
