//! Acoustic-model training, bottleneck extraction and adaptation.

use serde::{Deserialize, Serialize};

use super::features::{BnContext, FeatureSet, Featurizer};
use crate::architectures::{build, ArchConfig, ArchKind, Bottleneck, InputLayout};
use crate::corpus::lexicon::label_count;
use crate::error::{Error, Result};
use crate::frontend::{BaseKind, FeatureKind, FeatureMatrix};
use crate::nn::{train_network, Checkpoint, Geometry, Network, TrainConfig, TrainLog};

const PREDICT_CHUNK: usize = 1024;

/// How a model's input frames are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelInput {
    Acoustic(Featurizer),
    Bottleneck(BnContext),
}

impl ModelInput {
    fn layout(&self) -> InputLayout {
        match self {
            ModelInput::Acoustic(f) => f.layout(),
            ModelInput::Bottleneck(b) => InputLayout {
                acoustic: Geometry::new(b.norm.dims(), 2 * b.context + 1, 1),
                tv: None,
            },
        }
    }

    /// Kind of feature matrix the model accepts.
    pub fn kind(&self) -> FeatureKind {
        match self {
            ModelInput::Acoustic(f) => f.kind(),
            ModelInput::Bottleneck(_) => FeatureKind {
                base: BaseKind::Bn,
                deltas: false,
                spliced: true,
            },
        }
    }
}

/// Trained hybrid acoustic model: state classifier plus the priors that turn
/// its posteriors into scaled likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub arch: ArchKind,
    pub net: Network<f32>,
    pub priors: Vec<f64>,
    pub input: ModelInput,
}

impl AcousticModel {
    fn check_input(&self, set: &FeatureSet) -> Result<()> {
        check_kind(&self.input, set)?;
        if set.dims() != Some(self.net.spec.input_dim()) {
            return Err(Error::Geometry(format!(
                "model expects {} input dims, features have {:?}",
                self.net.spec.input_dim(),
                set.dims()
            )));
        }
        Ok(())
    }

    /// State posteriors for each utterance of `set`.
    pub fn posteriors(&self, set: &FeatureSet) -> Result<Vec<ndarray::Array2<f32>>> {
        self.check_input(set)?;
        set.inputs.iter().map(|m| self.net.predict(&m.data, PREDICT_CHUNK)).collect()
    }

    pub fn bottleneck_layer(&self) -> Option<usize> {
        self.net.spec.bottleneck_index()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(self.net.clone())
            .with_meta("arch", self.arch)?
            .with_meta("priors", &self.priors)?
            .with_meta("input", &self.input)
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        Ok(Self {
            arch: ck.meta("arch")?,
            priors: ck.meta("priors")?,
            input: ck.meta("input")?,
            net: ck.net,
        })
    }
}

/// Rejects feature sets whose kind does not match what the model reads;
/// in particular a bottleneck-fed model never sees raw acoustics.
fn check_kind(input: &ModelInput, set: &FeatureSet) -> Result<()> {
    let want = input.kind();
    match set.kind() {
        Some(k) if k == want => Ok(()),
        Some(k) => Err(Error::Validation(format!("model reads {want:?} features, got {k:?}"))),
        None => Err(Error::Degenerate("empty feature set".into())),
    }
}

/// Trains a fresh acoustic model (seeded by `tc.seed`).
pub fn train_am(
    arch: ArchKind,
    size: &ArchConfig,
    input: ModelInput,
    train: &FeatureSet,
    cv: &FeatureSet,
    tc: &TrainConfig,
    bottleneck: Option<Bottleneck>,
) -> Result<(AcousticModel, TrainLog)> {
    check_kind(&input, train)?;
    check_kind(&input, cv)?;
    let n_labels = label_count();
    let spec = build(arch, size, &input.layout(), n_labels, bottleneck)?;
    let net = Network::init(spec, tc.seed)?;
    let (net, log) = train_network(net, &train.dataset()?, &cv.dataset()?, tc, usize::MAX)?;
    Ok((
        AcousticModel {
            arch,
            net,
            priors: train.priors(n_labels)?,
            input,
        },
        log,
    ))
}

/// Classifier with a 60-dimensional linear bottleneck at hidden layer 3.
pub fn train_bn_extractor(
    arch: ArchKind,
    size: &ArchConfig,
    featurizer: Featurizer,
    train: &FeatureSet,
    cv: &FeatureSet,
    tc: &TrainConfig,
) -> Result<(AcousticModel, TrainLog)> {
    train_am(
        arch,
        size,
        ModelInput::Acoustic(featurizer),
        train,
        cv,
        tc,
        Some(Bottleneck::default()),
    )
}

/// Activations of the bottleneck layer for one spliced input matrix.
pub fn extract_bn(extractor: &AcousticModel, input: &FeatureMatrix) -> Result<FeatureMatrix> {
    let bn = extractor
        .bottleneck_layer()
        .ok_or_else(|| Error::Missing("model has no bottleneck layer".into()))?;
    if input.kind != extractor.input.kind() {
        return Err(Error::Validation(format!(
            "extractor reads {:?} features, got {:?}",
            extractor.input.kind(),
            input.kind
        )));
    }
    let y = extractor.net.predict_upto(&input.data, bn + 1, PREDICT_CHUNK)?;
    FeatureMatrix::new(y, FeatureKind::plain(BaseKind::Bn))
}

/// Raw bottleneck features of every utterance of `set`, in set order.
pub fn extract_bn_set(extractor: &AcousticModel, set: &FeatureSet) -> Result<Vec<FeatureMatrix>> {
    set.inputs.iter().map(|m| extract_bn(extractor, m)).collect()
}

/// Spliced, normalized bottleneck inputs for an AM.
pub fn bn_feature_set(raw: &[FeatureMatrix], ctx: &BnContext, like: &FeatureSet) -> Result<FeatureSet> {
    if raw.len() != like.len() {
        return Err(Error::Validation("one BN matrix per utterance required".into()));
    }
    Ok(FeatureSet {
        ids: like.ids.clone(),
        inputs: raw.iter().map(|m| ctx.apply(m)).collect::<Result<_>>()?,
        labels: like.labels.clone(),
        transcriptions: like.transcriptions.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainLayers {
    All,
    /// Only the top `n` layers (softmax counted) are updated.
    Top(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub lr0: f64,
    /// Epochs at `lr0` before halving may start.
    pub constant_epochs: usize,
    pub min_epochs: usize,
    /// `0` disables adaptation and returns the input model.
    pub max_epochs: usize,
    pub retrain: RetrainLayers,
    pub batch: usize,
    pub seed: u64,
    pub improvement_threshold: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            constant_epochs: 0,
            min_epochs: 3,
            max_epochs: 10,
            retrain: RetrainLayers::All,
            batch: 256,
            seed: 0,
            improvement_threshold: 0.001,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs > 0 && !(1 <= self.min_epochs && self.min_epochs <= self.max_epochs) {
            return Err(Error::Validation(format!(
                "adaptation needs 1 <= min_epochs ({}) <= max_epochs ({})",
                self.min_epochs, self.max_epochs
            )));
        }
        if matches!(self.retrain, RetrainLayers::Top(0)) {
            return Err(Error::Validation("at least one layer must be retrained".into()));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            constant_epochs: self.constant_epochs,
            min_epochs: self.min_epochs.min(self.max_epochs),
            max_epochs: self.max_epochs,
            batch: self.batch,
            seed: self.seed,
            improvement_threshold: self.improvement_threshold,
            ..TrainConfig::default()
        }
    }
}

/// Continues training `model` on target-domain data. Layers below the top
/// `retrain` ones keep their parameters bit for bit.
pub fn adapt(model: &AcousticModel, train: &FeatureSet, cv: &FeatureSet, cfg: &AdaptConfig) -> Result<(AcousticModel, TrainLog)> {
    cfg.validate()?;
    model.check_input(train)?;
    model.check_input(cv)?;
    let n_layers = model.net.spec.layers.len();
    let n_trainable = match cfg.retrain {
        RetrainLayers::All => n_layers,
        RetrainLayers::Top(n) => n.min(n_layers),
    };
    let (net, log) = train_network(
        model.net.clone(),
        &train.dataset()?,
        &cv.dataset()?,
        &cfg.train_config(),
        n_trainable,
    )?;
    let priors = if log.epochs.is_empty() {
        model.priors.clone()
    } else {
        train.priors(model.priors.len())?
    };
    Ok((
        AcousticModel {
            arch: model.arch,
            net,
            priors,
            input: model.input.clone(),
        },
        log,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architectures::SizeClass;
    use crate::corpus::{generate_corpus, DysarthriaProfile, Utterance};
    use crate::frontend::FrontendConfig;
    use crate::nn::LayerParams;

    fn corpus(n: usize, seed: u64, dys: bool) -> Vec<Utterance> {
        let vocab: Vec<String> = ["ba", "de", "ku", "so"].iter().map(|s| s.to_string()).collect();
        let p = DysarthriaProfile::default();
        generate_corpus(n, &vocab, dys.then_some(&p), seed).unwrap()
    }

    fn tiny() -> ArchConfig {
        ArchConfig {
            hidden_layers: 3,
            hidden_units: 24,
            ..SizeClass::Desk.config()
        }
    }

    fn sets() -> (Featurizer, FeatureSet, FeatureSet) {
        let train = corpus(12, 1, false);
        let cv = corpus(4, 2, false);
        let f = Featurizer::fit(&train, BaseKind::Mfb, &FrontendConfig::default(), None).unwrap();
        let a = FeatureSet::featurize(&train, &f, None).unwrap();
        let b = FeatureSet::featurize(&cv, &f, None).unwrap();
        (f, a, b)
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: 2,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn bottleneck_extraction_is_60_dims_and_ignores_upper_layers() {
        let (f, train, cv) = sets();
        let (bn, _) = train_bn_extractor(ArchKind::Dnn, &tiny(), f, &train, &cv, &quick(1)).unwrap();
        let a = extract_bn(&bn, &cv.inputs[0]).unwrap();
        assert_eq!(a.dims(), 60);
        assert_eq!(a, extract_bn(&bn, &cv.inputs[0]).unwrap());
        let mut surgery = bn.clone();
        let top = surgery.net.params.len() - 1;
        if let LayerParams::Affine { w, .. } = &mut surgery.net.params[top] {
            w.fill(3.0);
        }
        assert_eq!(extract_bn(&surgery, &cv.inputs[0]).unwrap(), a);
    }

    #[test]
    fn extraction_needs_a_bottleneck() {
        let (f, train, cv) = sets();
        let (am, _) = train_am(ArchKind::Dnn, &tiny(), ModelInput::Acoustic(f), &train, &cv, &quick(1), None).unwrap();
        assert!(matches!(extract_bn(&am, &cv.inputs[0]), Err(Error::Missing(_))));
    }

    #[test]
    fn bn_model_refuses_acoustic_frames() {
        let (f, train, cv) = sets();
        let (bn, _) = train_bn_extractor(ArchKind::Dnn, &tiny(), f, &train, &cv, &quick(1)).unwrap();
        let raw = extract_bn_set(&bn, &train).unwrap();
        let ctx = BnContext::fit(&raw).unwrap();
        let bn_train = bn_feature_set(&raw, &ctx, &train).unwrap();
        assert_eq!(bn_train.dims(), Some(60 * 17));
        let r = train_am(ArchKind::Dnn, &tiny(), ModelInput::Bottleneck(ctx), &train, &cv, &quick(1), None);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn adaptation_freezes_lower_layers_and_zero_epochs_is_identity() {
        let (f, train, cv) = sets();
        let (am, _) = train_am(ArchKind::Dnn, &tiny(), ModelInput::Acoustic(f.clone()), &train, &cv, &quick(1), None).unwrap();
        let dys = corpus(8, 5, true);
        let dys_set = FeatureSet::featurize(&dys, &f, None).unwrap();
        let none = AdaptConfig {
            max_epochs: 0,
            ..AdaptConfig::default()
        };
        assert_eq!(adapt(&am, &dys_set, &cv, &none).unwrap().0, am);

        let top2 = AdaptConfig {
            retrain: RetrainLayers::Top(2),
            ..AdaptConfig::default()
        };
        let (adapted, log) = adapt(&am, &dys_set, &cv, &top2).unwrap();
        assert!(log.epochs.len() >= 3 || log.stop == crate::nn::train::StopReason::MaxEpochs);
        let n = am.net.params.len();
        assert_eq!(adapted.net.params[..n - 2], am.net.params[..n - 2]);
        assert_ne!(adapted.net.params[n - 1], am.net.params[n - 1]);
    }

    #[test]
    fn tiny_learning_rate_leaves_model_unchanged() {
        let (f, train, cv) = sets();
        let (am, _) = train_am(ArchKind::Dnn, &tiny(), ModelInput::Acoustic(f), &train, &cv, &quick(2), None).unwrap();
        let cfg = AdaptConfig {
            lr0: 1e-12,
            ..AdaptConfig::default()
        };
        let (adapted, _) = adapt(&am, &train, &cv, &cfg).unwrap();
        let (a, b) = (am.net.flat_params(), adapted.net.flat_params());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-6 * x.abs().max(1.0)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let (f, train, cv) = sets();
        let (am, _) = train_am(ArchKind::Cnn, &tiny(), ModelInput::Acoustic(f), &train, &cv, &quick(3), None).unwrap();
        let mut buf = Vec::new();
        am.to_checkpoint().unwrap().write_to(&mut buf).unwrap();
        let back = AcousticModel::from_checkpoint(Checkpoint::read_from(&buf[..]).unwrap()).unwrap();
        assert_eq!(back, am);
    }
}
