//! Speech inversion: contextualized NMC (or GFB) features to the six tract
//! variables, with Kalman smoothing and correlation scoring.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::architectures::{build_inversion, InversionArch, INVERSION_CONTEXT};
use crate::corpus::lexicon::TV_COUNT;
use crate::corpus::{split_corpus, NoiseAugment, TvTrajectory, Utterance, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::frontend::{extract, splice, stack_rows, BaseKind, FeatureKind, FeatureMatrix, FrontendConfig, Normalizer};
use crate::nn::{sgd_train, Checkpoint, Dataset, DatasetTargets, Geometry, Loss, Network, TrainConfig, TrainLog};

const PREDICT_CHUNK: usize = 512;

/// Random-walk state model for [`kalman_smooth`], in normalized TV units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    pub process_var: f64,
    pub observation_var: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_var: 1e-3,
            observation_var: 1e-2,
        }
    }
}

/// Forward Kalman filter followed by a Rauch-Tung-Striebel backward pass.
pub fn kalman_smooth(x: &[f64], p: KalmanParams) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: x.len() });
    }
    let (q, r) = (p.process_var, p.observation_var);
    let n = x.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    // first observation taken as the prior mean with observation variance
    m[0] = x[0];
    v[0] = r;
    for t in 1..n {
        let vp = v[t - 1] + q;
        let k = vp / (vp + r);
        m[t] = m[t - 1] + k * (x[t] - m[t - 1]);
        v[t] = (1.0 - k) * vp;
    }
    let mut s = m.clone();
    for t in (0..n - 1).rev() {
        let g = v[t] / (v[t] + q);
        s[t] = m[t] + g * (s[t + 1] - m[t]);
    }
    Ok(s)
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two samples".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub arch: InversionArch,
    /// Frames of context on each side (71-frame window at 35).
    pub context: usize,
    pub input: BaseKind,
    pub frontend: FrontendConfig,
    pub train: TrainConfig,
    /// Noise-mixed copies added to the training split when set.
    pub noise: Option<NoiseAugment>,
    pub split: (f64, f64, f64),
    pub split_seed: u64,
    pub kalman: KalmanParams,
}

/// Per-frame learning rate times hidden width: 1e-4 at 256 units.
const INVERSION_LR_WIDTH: f64 = 0.0256;

impl InversionConfig {
    /// Defaults for `arch`, with the learning rate scaled to its hidden width.
    pub fn for_arch(arch: InversionArch) -> Self {
        Self {
            arch,
            context: INVERSION_CONTEXT,
            input: BaseKind::Nmc,
            frontend: FrontendConfig::default(),
            train: TrainConfig {
                loss: Loss::Mse,
                lr0: INVERSION_LR_WIDTH / arch.hidden_units as f64,
                max_epochs: 30,
                ..TrainConfig::default()
            },
            noise: Some(NoiseAugment::default()),
            split: DEFAULT_SPLIT,
            split_seed: 0,
            kalman: KalmanParams::default(),
        }
    }
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self::for_arch(InversionArch::FULL)
    }
}

/// Trained inversion network with its input and target statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionModel {
    pub net: Network<f32>,
    pub input: BaseKind,
    pub context: usize,
    pub frontend: FrontendConfig,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    pub kalman: KalmanParams,
}

/// Held-out correlation between estimated and true trajectories, pooled
/// over all frames of the evaluated utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub per_tv: Vec<f64>,
    pub mean: f64,
    /// Same scores before Kalman smoothing.
    pub per_tv_unsmoothed: Vec<f64>,
    pub mean_unsmoothed: f64,
    pub utterances: usize,
    pub frames: usize,
}

fn tv_matrix(tv: &TvTrajectory) -> Array2<f32> {
    Array2::from_shape_fn((tv.len(), TV_COUNT), |(t, d)| tv.frames[t][d] as f32)
}

fn truth(u: &Utterance) -> Result<&TvTrajectory> {
    u.tv_truth
        .as_ref()
        .ok_or_else(|| Error::Missing(format!("utterance {} has no ground-truth TVs", u.id)))
}

impl InversionModel {
    fn base_features(&self, samples: &[f32]) -> Result<FeatureMatrix> {
        extract(samples, self.input, &self.frontend)
    }

    fn network_input(&self, base: &FeatureMatrix) -> Result<Array2<f32>> {
        Ok(splice(&self.input_norm.apply(base)?, self.context, self.context).data)
    }

    /// Unsmoothed network output in normalized TV units.
    pub fn predict_normalized(&self, samples: &[f32]) -> Result<Array2<f32>> {
        let x = self.network_input(&self.base_features(samples)?)?;
        self.net.predict(&x, PREDICT_CHUNK)
    }

    /// TV trajectory of a waveform: one frame per acoustic frame, Kalman
    /// smoothed in normalized units, then mapped back to TV units.
    pub fn estimate(&self, samples: &[f32]) -> Result<TvTrajectory> {
        self.estimate_with(samples, true)
    }

    pub fn estimate_with(&self, samples: &[f32], smooth: bool) -> Result<TvTrajectory> {
        let y = self.predict_normalized(samples)?;
        let n = y.nrows();
        let mut cols: Vec<Vec<f64>> = (0..TV_COUNT)
            .map(|d| y.column(d).iter().map(|&v| v as f64).collect())
            .collect();
        if smooth && n >= 2 {
            for c in cols.iter_mut() {
                *c = kalman_smooth(c, self.kalman)?;
            }
        }
        let frames = (0..n)
            .map(|t| {
                let mut row: Vec<f64> = cols.iter().map(|c| c[t]).collect();
                self.target_norm.invert_row(&mut row);
                let mut f = [0.0; TV_COUNT];
                f.copy_from_slice(&row);
                f
            })
            .collect();
        TvTrajectory::new(frames)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(self.net.clone())
            .with_meta("model", "inversion")?
            .with_meta("input", self.input)?
            .with_meta("context", self.context)?
            .with_meta("frontend", &self.frontend)?
            .with_meta("input_norm", &self.input_norm)?
            .with_meta("target_norm", &self.target_norm)?
            .with_meta("kalman", self.kalman)
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.meta::<String>("model")? != "inversion" {
            return Err(Error::UnsupportedFormat("checkpoint is not an inversion model".into()));
        }
        Ok(Self {
            input: ck.meta("input")?,
            context: ck.meta("context")?,
            frontend: ck.meta("frontend")?,
            input_norm: ck.meta("input_norm")?,
            target_norm: ck.meta("target_norm")?,
            kalman: ck.meta("kalman")?,
            net: ck.net,
        })
    }

    /// Per-TV Pearson r of [`estimate`](Self::estimate) against ground truth.
    pub fn evaluate(&self, utts: &[Utterance]) -> Result<CorrelationReport> {
        let mut est: Vec<Vec<f64>> = vec![Vec::new(); TV_COUNT];
        let mut raw: Vec<Vec<f64>> = vec![Vec::new(); TV_COUNT];
        let mut tru: Vec<Vec<f64>> = vec![Vec::new(); TV_COUNT];
        for u in utts {
            let t = truth(u)?;
            let e = self.estimate(&u.samples)?;
            let r = self.estimate_with(&u.samples, false)?;
            if e.len() != t.len() {
                return Err(Error::Validation(format!(
                    "utterance {}: {} estimated vs {} true TV frames",
                    u.id,
                    e.len(),
                    t.len()
                )));
            }
            for d in 0..TV_COUNT {
                est[d].extend(e.channel(d));
                raw[d].extend(r.channel(d));
                tru[d].extend(t.channel(d));
            }
        }
        let score = |e: &[Vec<f64>]| {
            (0..TV_COUNT)
                .map(|d| pearson(&e[d], &tru[d]))
                .collect::<Result<Vec<_>>>()
        };
        let per_tv = score(&est)?;
        let per_tv_unsmoothed = score(&raw)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / TV_COUNT as f64;
        Ok(CorrelationReport {
            mean: mean(&per_tv),
            per_tv,
            mean_unsmoothed: mean(&per_tv_unsmoothed),
            per_tv_unsmoothed,
            utterances: utts.len(),
            frames: est[0].len(),
        })
    }
}

/// Output of [`train_inversion`].
#[derive(Debug, Clone)]
pub struct InversionRun {
    pub model: InversionModel,
    pub log: TrainLog,
    /// Correlation on the clean held-out test split.
    pub report: CorrelationReport,
    pub test: Vec<Utterance>,
}

/// Splits `utts`, optionally adds noise-mixed copies of the training split,
/// trains the MSE regression and scores the clean test split.
pub fn train_inversion(utts: &[Utterance], cfg: &InversionConfig) -> Result<InversionRun> {
    for u in utts {
        truth(u)?;
    }
    let (train, cv, test) = split_corpus(utts, cfg.split, cfg.split_seed)?;
    if train.is_empty() || cv.is_empty() || test.is_empty() {
        return Err(Error::Degenerate(format!(
            "inversion split of {} utterances leaves an empty partition",
            utts.len()
        )));
    }
    let mut train_set = train.clone();
    if let Some(noise) = &cfg.noise {
        train_set.extend(noise.augment(&train)?);
    }

    let feats = |set: &[Utterance]| -> Result<Vec<FeatureMatrix>> {
        set.iter().map(|u| extract(&u.samples, cfg.input, &cfg.frontend)).collect()
    };
    let train_feats = feats(&train_set)?;
    let cv_feats = feats(&cv)?;
    let input_norm = Normalizer::fit(&train_feats)?;
    let tv_kind = FeatureKind::plain(BaseKind::Tv);
    let tv_mats = |set: &[Utterance]| -> Result<Vec<FeatureMatrix>> {
        set.iter().map(|u| FeatureMatrix::new(tv_matrix(truth(u)?), tv_kind)).collect()
    };
    let train_tv = tv_mats(&train_set)?;
    let target_norm = Normalizer::fit(&train_tv)?;

    let dims = input_norm.dims();
    let spec = build_inversion(Geometry::new(dims, 2 * cfg.context + 1, 1), &cfg.arch, TV_COUNT)?;
    let mut model = InversionModel {
        net: Network::init(spec.clone(), cfg.train.seed)?,
        input: cfg.input,
        context: cfg.context,
        frontend: cfg.frontend.clone(),
        input_norm,
        target_norm,
        kalman: cfg.kalman,
    };
    let dataset = |f: &[FeatureMatrix], tv: &[FeatureMatrix]| -> Result<Dataset<f32>> {
        let xs = f.iter().map(|m| model.network_input(m)).collect::<Result<Vec<_>>>()?;
        let ys = tv
            .iter()
            .map(|m| model.target_norm.apply(m).map(|n| n.data))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            x: stack_rows(&xs)?,
            targets: DatasetTargets::Values(stack_rows(&ys)?),
        })
    };
    let train_data = dataset(&train_feats, &train_tv)?;
    let cv_data = dataset(&cv_feats, &tv_mats(&cv)?)?;
    let train_cfg = TrainConfig {
        loss: Loss::Mse,
        ..cfg.train.clone()
    };
    let (net, log) = sgd_train(spec, &train_data, &cv_data, &train_cfg)?;
    model.net = net;
    let report = model.evaluate(&test)?;
    Ok(InversionRun {
        model,
        log,
        report,
        test,
    })
}
