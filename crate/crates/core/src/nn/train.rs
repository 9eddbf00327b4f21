//! Mini-batch SGD with the constant-then-halving learning-rate schedule.
//!
//! The first `constant_epochs` epochs run at `lr0`. Afterwards every epoch is
//! checked against the best cross-validation error so far. An epoch that
//! raises the CV error is rolled back and halves the learning rate; an epoch
//! that improves by less than `improvement_threshold` is kept and halves the
//! learning rate. Either kind of epoch ends training when it directly follows
//! a halving, i.e. once halving has stopped helping.
//!
//! Learning rates are per frame: the applied step is `lr * batch_len` times
//! the batch-averaged gradient.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{LayerParams, Loss, Network, Targets};
use super::spec::NetworkSpec;
use super::Real;
use crate::corpus::synth::mix_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub constant_epochs: usize,
    /// Epochs always run, even if the schedule would stop earlier.
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Smallest CV improvement counted as significant: absolute frame error
    /// for classification, relative to the previous error for regression.
    pub improvement_threshold: f64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.008,
            constant_epochs: 4,
            min_epochs: 0,
            max_epochs: 20,
            batch: 256,
            seed: 0,
            improvement_threshold: 0.001,
            loss: Loss::CrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Validation(format!("lr0 {} must be > 0", self.lr0)));
        }
        if self.batch == 0 {
            return Err(Error::Validation("batch must be >= 1".into()));
        }
        if self.min_epochs > self.max_epochs {
            return Err(Error::Validation("min_epochs exceeds max_epochs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetTargets<T> {
    Labels(Vec<usize>),
    Values(Array2<T>),
}

/// Frame-level examples: one input row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub x: Array2<T>,
    pub targets: DatasetTargets<T>,
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    fn check(&self, what: &str) -> Result<()> {
        let n = match &self.targets {
            DatasetTargets::Labels(l) => l.len(),
            DatasetTargets::Values(v) => v.nrows(),
        };
        if n != self.x.nrows() {
            return Err(Error::Geometry(format!("{what}: {} rows but {n} targets", self.x.nrows())));
        }
        if self.is_empty() {
            return Err(Error::Degenerate(format!("{what} set is empty")));
        }
        Ok(())
    }

    fn batch_targets(&self, idx: &[usize]) -> BatchTargets<T> {
        match &self.targets {
            DatasetTargets::Labels(l) => BatchTargets::Labels(idx.iter().map(|&i| l[i]).collect()),
            DatasetTargets::Values(v) => BatchTargets::Values(v.select(Axis(0), idx)),
        }
    }
}

enum BatchTargets<T> {
    Labels(Vec<usize>),
    Values(Array2<T>),
}

impl<T> BatchTargets<T> {
    fn view(&self) -> Targets<'_, T> {
        match self {
            BatchTargets::Labels(l) => Targets::Labels(l),
            BatchTargets::Values(v) => Targets::Values(v.view()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub cv_error: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    NoImprovement,
    CvRose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_cv_error: f64,
    pub epochs: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl TrainLog {
    pub fn learning_rates(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }

    pub fn final_cv_error(&self) -> f64 {
        self.epochs
            .iter()
            .filter(|e| e.accepted)
            .map(|e| e.cv_error)
            .last()
            .unwrap_or(self.initial_cv_error)
    }
}

const EVAL_CHUNK: usize = 1024;

/// Fraction of frames whose argmax output differs from the label.
pub fn frame_error_rate<T: Real>(net: &Network<T>, x: &Array2<T>, labels: &[usize]) -> Result<f64> {
    let y = net.predict(x, EVAL_CHUNK)?;
    let wrong = y
        .outer_iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(row.iter().copied()) != l)
        .count();
    Ok(wrong as f64 / labels.len().max(1) as f64)
}

pub fn argmax<T: PartialOrd>(it: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v: Option<T> = None;
    for (i, v) in it.enumerate() {
        if best_v.as_ref().is_none_or(|b| v > *b) {
            best = i;
            best_v = Some(v);
        }
    }
    best
}

/// CV error: frame error rate for labels, MSE loss for regression targets.
pub fn evaluate<T: Real>(net: &Network<T>, data: &Dataset<T>) -> Result<f64> {
    match &data.targets {
        DatasetTargets::Labels(l) => frame_error_rate(net, &data.x, l),
        DatasetTargets::Values(t) => {
            let y = net.predict(&data.x, EVAL_CHUNK)?;
            if y.dim() != t.dim() {
                return Err(Error::Geometry("regression targets shape mismatch".into()));
            }
            let se: f64 = y
                .iter()
                .zip(t.iter())
                .map(|(a, b)| (*a - *b).to_f64().unwrap().powi(2))
                .sum();
            Ok(se / (2.0 * y.nrows() as f64))
        }
    }
}

/// Trains a freshly initialized network (seeded by `cfg.seed`).
pub fn sgd_train<T: Real>(
    spec: NetworkSpec,
    train: &Dataset<T>,
    cv: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<(Network<T>, TrainLog)> {
    let net = Network::init(spec, cfg.seed)?;
    let n = net.spec.layers.len();
    train_network(net, train, cv, cfg, n)
}

/// One pass over `train` in seeded shuffled order. Returns the mean batch loss.
fn run_epoch<T: Real>(
    net: &mut Network<T>,
    train: &Dataset<T>,
    cfg: &TrainConfig,
    lr: f64,
    epoch: usize,
    n_trainable: usize,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64)));
    let mut total = 0.0;
    let mut batches = 0usize;
    for idx in order.chunks(cfg.batch) {
        let xb = train.x.select(Axis(0), idx);
        let tb = train.batch_targets(idx);
        let fwd = net.forward(&xb)?;
        let (loss, grads) = net.backward(&fwd, &tb.view(), cfg.loss, n_trainable)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: format!("non-finite loss {loss} after {batches} batches at lr {lr}"),
            });
        }
        let step = T::from(-lr * idx.len() as f64).unwrap();
        for (p, g) in net.params.iter_mut().zip(&grads) {
            if let Some(g) = g {
                p.add_scaled(g, step);
            }
        }
        total += loss;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

/// Learning-rate state machine driven by per-epoch CV errors.
#[derive(Debug, Clone)]
struct Schedule {
    lr: f64,
    best: f64,
    halved_last: bool,
    regression: bool,
    constant_epochs: usize,
    min_epochs: usize,
    threshold: f64,
}

impl Schedule {
    fn new(cfg: &TrainConfig, initial_error: f64, regression: bool) -> Self {
        Self {
            lr: cfg.lr0,
            best: initial_error,
            halved_last: false,
            regression,
            constant_epochs: cfg.constant_epochs,
            min_epochs: cfg.min_epochs,
            threshold: cfg.improvement_threshold,
        }
    }

    /// Records the CV error after `epoch`; returns whether the epoch is kept
    /// and whether training ends.
    fn observe(&mut self, epoch: usize, err: f64) -> (bool, Option<StopReason>) {
        let warmup = epoch <= self.constant_epochs;
        let past_min = epoch >= self.min_epochs;
        if warmup {
            self.best = err;
            return (true, None);
        }
        if err > self.best {
            if self.halved_last && past_min {
                return (false, Some(StopReason::CvRose));
            }
            self.halve();
            return (false, None);
        }
        let improvement = if self.regression {
            (self.best - err) / self.best.abs().max(f64::MIN_POSITIVE)
        } else {
            self.best - err
        };
        self.best = err;
        if improvement >= self.threshold {
            self.halved_last = false;
            return (true, None);
        }
        if self.halved_last && past_min {
            return (true, Some(StopReason::NoImprovement));
        }
        self.halve();
        (true, None)
    }

    fn halve(&mut self) {
        self.lr *= 0.5;
        self.halved_last = true;
    }
}

/// Continues training `net`, updating only its top `n_trainable` layers.
pub fn train_network<T: Real>(
    mut net: Network<T>,
    train: &Dataset<T>,
    cv: &Dataset<T>,
    cfg: &TrainConfig,
    n_trainable: usize,
) -> Result<(Network<T>, TrainLog)> {
    cfg.validate()?;
    train.check("training")?;
    cv.check("cross-validation")?;
    let regression = matches!(train.targets, DatasetTargets::Values(_));
    if regression != (cfg.loss == Loss::Mse) {
        return Err(Error::Validation("loss does not match target type".into()));
    }

    let initial = evaluate(&net, cv)?;
    let mut log = TrainLog {
        initial_cv_error: initial,
        epochs: Vec::new(),
        stop: StopReason::MaxEpochs,
    };
    let mut sched = Schedule::new(cfg, initial, regression);
    let mut best_params: Vec<LayerParams<T>> = net.params.clone();

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        let train_loss = run_epoch(&mut net, train, cfg, lr, epoch, n_trainable)?;
        let err = evaluate(&net, cv)?;
        if !err.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: format!("non-finite CV error {err}"),
            });
        }
        let (accepted, stop) = sched.observe(epoch, err);
        if accepted {
            best_params.clone_from(&net.params);
        } else {
            net.params.clone_from(&best_params);
        }
        log.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            cv_error: err,
            accepted,
        });
        if let Some(reason) = stop {
            log.stop = reason;
            break;
        }
    }
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::LayerSpec;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> Dataset<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 4));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            for j in 0..4 {
                let center = if j == c { 2.0 } else { -1.0 };
                x[[i, j]] = center + rng.gen_range(-0.5..0.5);
            }
            labels.push(c);
        }
        Dataset {
            x,
            targets: DatasetTargets::Labels(labels),
        }
    }

    fn spec() -> NetworkSpec {
        NetworkSpec::new(vec![
            LayerSpec::FullSigmoid { input: 4, output: 8 },
            LayerSpec::Softmax { input: 8, output: 3 },
        ])
        .unwrap()
    }

    #[test]
    fn lr_prefix_is_constant() {
        let data = blobs(120, 1);
        let cfg = TrainConfig {
            max_epochs: 8,
            batch: 16,
            ..TrainConfig::default()
        };
        let (_, log) = sgd_train(spec(), &data, &data, &cfg).unwrap();
        assert!(log.epochs.len() >= 4);
        assert_eq!(&log.learning_rates()[..4], &[0.008; 4]);
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = blobs(90, 2);
        let cfg = TrainConfig {
            max_epochs: 5,
            batch: 8,
            seed: 42,
            ..TrainConfig::default()
        };
        let (a, _) = sgd_train::<f32>(spec(), &data, &data, &cfg).unwrap();
        let (b, _) = sgd_train::<f32>(spec(), &data, &data, &cfg).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(300, 3);
        let cfg = TrainConfig {
            max_epochs: 20,
            batch: 16,
            ..TrainConfig::default()
        };
        let (net, log) = sgd_train(spec(), &data, &data, &cfg).unwrap();
        assert!(log.final_cv_error() < 0.01, "{log:?}");
        assert!(evaluate(&net, &data).unwrap() < 0.01);
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = blobs(40, 4);
        data.x[[0, 0]] = f32::NAN;
        let cfg = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(sgd_train(spec(), &data, &blobs(10, 5), &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = blobs(30, 6);
        let net = Network::<f32>::init(spec(), 9).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (out, log) = train_network(net.clone(), &data, &data, &cfg, 2).unwrap();
        assert_eq!(out, net);
        assert!(log.epochs.is_empty());
    }

    fn trace(cfg: &TrainConfig, errors: &[f64]) -> (Vec<(f64, bool)>, Option<StopReason>) {
        let mut sched = Schedule::new(cfg, 1.0, false);
        let mut out = Vec::new();
        for (i, &e) in errors.iter().enumerate() {
            let lr = sched.lr;
            let (accepted, stop) = sched.observe(i + 1, e);
            out.push((lr, accepted));
            if stop.is_some() {
                return (out, stop);
            }
        }
        (out, None)
    }

    #[test]
    fn schedule_halves_on_stall_or_rise_and_stops_when_halving_fails() {
        let cfg = TrainConfig {
            constant_epochs: 2,
            ..TrainConfig::default()
        };
        // warmup accepts a rise; then a rise is rejected and halves; a good
        // epoch resets; a stall halves; a second stall stops
        let (t, stop) = trace(&cfg, &[0.5, 0.6, 0.7, 0.4, 0.3995, 0.3993]);
        let lrs: Vec<f64> = t.iter().map(|x| x.0).collect();
        assert_eq!(lrs, vec![0.008, 0.008, 0.008, 0.004, 0.004, 0.002]);
        assert_eq!(t.iter().map(|x| x.1).collect::<Vec<_>>(), vec![true, true, false, true, true, true]);
        assert_eq!(stop, Some(StopReason::NoImprovement));

        let (t, stop) = trace(&cfg, &[0.5, 0.4, 0.45, 0.41]);
        assert_eq!(t.len(), 4);
        assert_eq!(stop, Some(StopReason::CvRose));
    }

    #[test]
    fn min_epochs_defers_stopping() {
        let cfg = TrainConfig {
            constant_epochs: 0,
            min_epochs: 4,
            ..TrainConfig::default()
        };
        let (t, stop) = trace(&cfg, &[1.1, 1.2, 1.3, 1.4]);
        assert_eq!(t.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0.008, 0.004, 0.002, 0.001]);
        assert!(t.iter().all(|x| !x.1));
        assert_eq!(stop, Some(StopReason::CvRose));
    }

    #[test]
    fn regression_uses_relative_improvement() {
        let cfg = TrainConfig {
            constant_epochs: 0,
            improvement_threshold: 0.01,
            ..TrainConfig::default()
        };
        let mut sched = Schedule::new(&cfg, 1e-3, true);
        assert_eq!(sched.observe(1, 0.9e-3), (true, None));
        assert_eq!(sched.lr, 0.008);
        assert_eq!(sched.observe(2, 0.8995e-3), (true, None));
        assert_eq!(sched.lr, 0.004);
    }
}
