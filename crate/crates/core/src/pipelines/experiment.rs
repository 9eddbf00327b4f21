//! Declarative experiments: corpora, systems and seeds in one JSON plan,
//! executed end to end into WER tables.
//!
//! ```json
//! {
//!   "name": "adaptation",
//!   "normal": {"type": "synth", "utterances": 200, "seed": 1},
//!   "dysarthric": {"type": "synth", "utterances": 120, "seed": 2},
//!   "seeds": [0, 1, 2],
//!   "systems": [
//!     {"type": "acoustic", "arch": "tfcnn", "train_on": "normal", "adapt": true},
//!     {"type": "bottleneck", "strategy": "C", "bn_arch": "dnn", "am_arch": "dnn",
//!      "adapt_bn": true, "adapt_am": true}
//!   ]
//! }
//! ```
//!
//! Omitted fields take their defaults. Every system is scored on the test
//! partition of each corpus the plan declares.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::eval::{decode_set, train_task_lm, LmTrainSet};
use super::features::{FeatureSet, Featurizer, TvSource};
use super::models::{adapt, train_am, AcousticModel, AdaptConfig, ModelInput};
use super::strategy::{run_strategy_cached, BottleneckStrategy, Domain, Partition, StageCache, StrategyConfig};
use crate::architectures::{ArchKind, InversionArch, SizeClass};
use crate::corpus::lexicon::WORDS;
use crate::corpus::synth::mix_seed;
use crate::corpus::{generate_corpus, load_manifest, load_utterances, split_corpus, DysarthriaProfile, Utterance};
use crate::decode::{render_markdown, render_tsv, DecodeLexicon, DecoderConfig, LmConfig, NGramLm, SystemResult, WerReport};
use crate::error::{Error, Result};
use crate::frontend::{BaseKind, FrontendConfig};
use crate::inversion::{train_inversion, InversionConfig, InversionModel};
use crate::nn::{TrainConfig, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorpusSource {
    /// Synthesized on the fly; the dysarthric slot applies the plan's profile.
    Synth { utterances: usize, seed: u64 },
    Manifest { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemPlan {
    /// An acoustic model on filterbank features, optionally adapted to the
    /// dysarthric training data.
    Acoustic {
        arch: ArchKind,
        train_on: Domain,
        #[serde(default)]
        adapt: bool,
    },
    Bottleneck {
        strategy: BottleneckStrategy,
        bn_arch: ArchKind,
        am_arch: ArchKind,
        #[serde(default)]
        adapt_bn: bool,
        #[serde(default)]
        adapt_am: bool,
    },
}

/// Where fCNN systems take tract variables from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TvPlan {
    /// Ground-truth trajectories stored with each utterance.
    #[default]
    Truth,
    /// A speech-inversion model trained on the normal training partition.
    Inversion {
        #[serde(default = "desk_inversion")]
        arch: InversionArch,
        #[serde(default = "inversion_epochs")]
        max_epochs: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn desk_inversion() -> InversionArch {
    InversionArch::DESK
}

fn inversion_epochs() -> usize {
    20
}

fn default_split() -> (f64, f64, f64) {
    (0.8, 0.1, 0.1)
}

fn default_base() -> BaseKind {
    BaseKind::Mfb
}

fn default_size() -> SizeClass {
    SizeClass::Desk
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    /// Words of the synthetic corpora; empty means the whole toy lexicon.
    /// The decoder vocabulary is the set of words in all transcriptions.
    #[serde(default)]
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub normal: Option<CorpusSource>,
    #[serde(default)]
    pub dysarthric: Option<CorpusSource>,
    #[serde(default)]
    pub profile: DysarthriaProfile,
    /// Train / cv / test fractions applied to each corpus.
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_base")]
    pub base: BaseKind,
    #[serde(default = "default_size")]
    pub size: SizeClass,
    #[serde(default)]
    pub frontend: FrontendConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    pub systems: Vec<SystemPlan>,
    #[serde(default)]
    pub tv_source: TvPlan,
    #[serde(default)]
    pub lm_train_set: LmTrainSet,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::Validation("plan declares no systems".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("plan declares no seeds".into()));
        }
        if self.normal.is_none() && self.dysarthric.is_none() {
            return Err(Error::Validation("plan declares no corpus".into()));
        }
        if !matches!(self.base, BaseKind::Mfb | BaseKind::Gfb) {
            return Err(Error::Validation(format!("base features must be mfb or gfb, not {:?}", self.base)));
        }
        self.train.validate()?;
        self.adapt.validate()?;
        self.lm.validate()?;
        self.profile.validate()?;
        for s in &self.systems {
            match *s {
                SystemPlan::Acoustic { train_on, adapt, .. } => {
                    if adapt && train_on == Domain::Dysarthric {
                        return Err(Error::Validation(
                            "adaptation targets dysarthric data; the system is already trained on it".into(),
                        ));
                    }
                }
                SystemPlan::Bottleneck { .. } => self.strategy_config(s, 0).expect("bottleneck system").validate()?,
            }
        }
        Ok(())
    }

    fn strategy_config(&self, s: &SystemPlan, seed: u64) -> Option<StrategyConfig> {
        let SystemPlan::Bottleneck {
            strategy,
            bn_arch,
            am_arch,
            adapt_bn,
            adapt_am,
        } = *s
        else {
            return None;
        };
        Some(StrategyConfig {
            strategy,
            bn_arch,
            am_arch,
            adapt_bn,
            adapt_am,
            size: self.size.config(),
            base: self.base,
            frontend: self.frontend.clone(),
            train: self.train.clone(),
            adapt: self.adapt.clone(),
            seed,
        })
    }

    fn vocabulary(&self) -> Vec<String> {
        if self.vocabulary.is_empty() {
            WORDS.iter().map(|w| w.to_string()).collect()
        } else {
            self.vocabulary.clone()
        }
    }

    fn load_corpus(&self, src: &CorpusSource, domain: Domain) -> Result<Vec<Utterance>> {
        match src {
            CorpusSource::Synth { utterances, seed } => {
                let profile = (domain == Domain::Dysarthric).then_some(&self.profile);
                generate_corpus(*utterances, &self.vocabulary(), profile, *seed)
            }
            CorpusSource::Manifest { path } => load_utterances(&load_manifest(path)?),
        }
    }

    /// Loads and splits the declared corpora.
    pub fn partitions(&self) -> Result<BTreeMap<Domain, Partition>> {
        let mut out = BTreeMap::new();
        for (domain, src) in [(Domain::Normal, &self.normal), (Domain::Dysarthric, &self.dysarthric)] {
            let Some(src) = src else { continue };
            let utts = self.load_corpus(src, domain)?;
            let (train, cv, test) = split_corpus(&utts, self.split, self.split_seed)?;
            if train.is_empty() || cv.is_empty() || test.is_empty() {
                return Err(Error::Degenerate(format!(
                    "{} corpus of {} utterances leaves an empty partition",
                    domain.name(),
                    utts.len()
                )));
            }
            out.insert(domain, Partition { train, cv, test });
        }
        Ok(out)
    }

    fn system_label(&self, s: &SystemPlan) -> (String, String, String, String) {
        let base = format!("{:?}", self.base).to_lowercase();
        match *s {
            SystemPlan::Acoustic { arch, train_on, adapt } => {
                let feature = if arch.needs_tv() {
                    let tv = match self.tv_source {
                        TvPlan::Truth => "truth",
                        TvPlan::Inversion { .. } => "inverted",
                    };
                    format!("{base}+tv({tv})")
                } else {
                    base
                };
                let adaptation = if adapt { "am" } else { "none" };
                (arch.name().into(), feature, format!("am@{}", train_on.name()), adaptation.into())
            }
            SystemPlan::Bottleneck {
                strategy,
                bn_arch,
                am_arch,
                ..
            } => {
                let cfg = self.strategy_config(s, 0).expect("bottleneck system");
                (
                    am_arch.name().into(),
                    format!("bn-{}({base})", bn_arch.name()),
                    strategy.to_string(),
                    cfg.adaptation_label().into(),
                )
            }
        }
    }
}

/// Scores of one system trained with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub system: usize,
    pub seed: u64,
    /// Stage summary, e.g. `train-am@normal>adapt-am@dysarthric`.
    pub stages: String,
    pub detail: serde_json::Value,
    pub scores: BTreeMap<String, WerReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub results: Vec<SystemResult>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    /// Writes `report.tsv`, `report.md` and `provenance.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.tsv"), render_tsv(&self.results))?;
        fs::write(dir.join("report.md"), format!("# {}\n\n{}", self.name, render_markdown(&self.results)))?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(dir.join("provenance.json"), json)?;
        Ok(())
    }

    /// Mean WER over seeds of system `i` on `test_set`.
    pub fn mean_wer(&self, i: usize, test_set: &str) -> Option<f64> {
        self.results.get(i)?.wer.iter().find(|(t, _)| t == test_set).map(|(_, w)| *w)
    }
}

struct Decoders {
    lexicon: DecodeLexicon,
    lms: BTreeMap<Domain, NGramLm>,
}

impl Decoders {
    fn new(plan: &ExperimentPlan, parts: &BTreeMap<Domain, Partition>) -> Result<Self> {
        let words: BTreeSet<String> = parts
            .values()
            .flat_map(|p| p.train.iter().chain(&p.cv).chain(&p.test))
            .flat_map(|u| u.transcription.iter().cloned())
            .collect();
        let lexicon = DecodeLexicon::from_vocab(&words.into_iter().collect::<Vec<_>>())?;
        let train: Vec<Utterance> = parts.values().flat_map(|p| p.train.iter().cloned()).collect();
        let mut lms = BTreeMap::new();
        for (d, p) in parts {
            lms.insert(*d, train_task_lm(&train, &p.test, plan.lm_train_set, plan.lm)?);
        }
        Ok(Self { lexicon, lms })
    }
}

/// Trains, adapts and decodes every system of `plan` for every seed.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let parts = plan.partitions()?;
    let decoders = Decoders::new(plan, &parts)?;
    let part = |d: Domain| {
        parts
            .get(&d)
            .ok_or_else(|| Error::Missing(format!("{} corpus required", d.name())))
    };

    let needs_tv = plan
        .systems
        .iter()
        .any(|s| matches!(s, SystemPlan::Acoustic { arch, .. } if arch.needs_tv()));
    let inversion: Option<InversionModel> = match (&plan.tv_source, needs_tv) {
        (TvPlan::Inversion { arch, max_epochs, seed }, true) => {
            let mut cfg = InversionConfig::for_arch(*arch);
            cfg.train.max_epochs = *max_epochs;
            cfg.train.seed = *seed;
            Some(train_inversion(&part(Domain::Normal)?.train, &cfg)?.model)
        }
        _ => None,
    };
    let tv_source = match &inversion {
        Some(m) => TvSource::Inverted(m),
        None => TvSource::Truth,
    };

    let mut stage_cache = StageCache::default();
    let mut base_models: BTreeMap<(ArchKind, Domain, u64), (AcousticModel, TrainLog)> = BTreeMap::new();
    let mut runs = Vec::new();
    for (i, system) in plan.systems.iter().enumerate() {
        for &seed in &plan.seeds {
            let mut scores = BTreeMap::new();
            let (stages, detail) = match *system {
                SystemPlan::Acoustic { arch, train_on, adapt: do_adapt } => {
                    let src = part(train_on)?;
                    let tv = arch.needs_tv().then_some(tv_source);
                    let featurizer = Featurizer::fit(&src.train, plan.base, &plan.frontend, tv)?;
                    let feats = |utts: &[Utterance]| FeatureSet::featurize(utts, &featurizer, tv);
                    let train_seed = mix_seed(seed, 3);
                    let key = (arch, train_on, seed);
                    if !base_models.contains_key(&key) {
                        let tc = TrainConfig {
                            seed: train_seed,
                            ..plan.train.clone()
                        };
                        let trained = train_am(
                            arch,
                            &plan.size.config(),
                            ModelInput::Acoustic(featurizer.clone()),
                            &feats(&src.train)?,
                            &feats(&src.cv)?,
                            &tc,
                            None,
                        )?;
                        base_models.insert(key, trained);
                    }
                    let (mut model, log) = base_models[&key].clone();
                    let mut stages = format!("train-am@{}", train_on.name());
                    let mut detail = serde_json::json!({
                        "train_seed": train_seed,
                        "train_epochs": log.epochs.len(),
                        "train_cv_error": log.final_cv_error(),
                    });
                    if do_adapt {
                        let d = part(Domain::Dysarthric)?;
                        let ac = AdaptConfig {
                            seed: mix_seed(seed, 4),
                            ..plan.adapt.clone()
                        };
                        let (m, log) = adapt(&model, &feats(&d.train)?, &feats(&d.cv)?, &ac)?;
                        model = m;
                        stages.push_str(">adapt-am@dysarthric");
                        detail["adapt_seed"] = ac.seed.into();
                        detail["adapt_epochs"] = log.epochs.len().into();
                        detail["adapt_cv_error"] = log.final_cv_error().into();
                    }
                    for (d, p) in &parts {
                        let dec = decode_set(&model, &feats(&p.test)?, &decoders.lexicon, &decoders.lms[d], &plan.decoder)?;
                        scores.insert(d.name().to_string(), dec.total);
                    }
                    (stages, detail)
                }
                SystemPlan::Bottleneck { .. } => {
                    let cfg = plan.strategy_config(system, seed).expect("bottleneck system");
                    let corpora = super::strategy::Corpora {
                        normal: parts.get(&Domain::Normal),
                        dysarthric: parts.get(&Domain::Dysarthric),
                    };
                    let run = run_strategy_cached(&cfg, corpora, &mut stage_cache)?;
                    for (d, p) in &parts {
                        let dec = decode_set(&run.am, &run.features(&p.test)?, &decoders.lexicon, &decoders.lms[d], &plan.decoder)?;
                        scores.insert(d.name().to_string(), dec.total);
                    }
                    (run.provenance.summary(), serde_json::to_value(&run.provenance)?)
                }
            };
            runs.push(RunRecord {
                system: i,
                seed,
                stages,
                detail,
                scores,
            });
        }
    }

    let results = plan
        .systems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.system == i).collect();
            let (arch, feature, strategy, adaptation) = plan.system_label(s);
            let sets: BTreeSet<&String> = mine.iter().flat_map(|r| r.scores.keys()).collect();
            let wer = sets
                .into_iter()
                .map(|t| {
                    let w: Vec<f64> = mine.iter().filter_map(|r| r.scores.get(t)).map(WerReport::wer).collect();
                    (t.clone(), w.iter().sum::<f64>() / w.len() as f64)
                })
                .collect();
            SystemResult {
                arch,
                feature,
                strategy,
                adaptation,
                seeds: plan.seeds.clone(),
                provenance: mine.first().map(|r| r.stages.clone()).unwrap_or_default(),
                wer,
            }
        })
        .collect();
    Ok(ExperimentReport {
        name: plan.name.clone(),
        results,
        runs,
    })
}
