//! Network inputs for the acoustic models: filterbank features with deltas,
//! corpus normalization and 17-frame splicing, optionally followed by a
//! spliced TV block; and the same contexting for bottleneck features.

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::architectures::{InputLayout, AM_CONTEXT};
use crate::corpus::lexicon::TV_COUNT;
use crate::corpus::{TvTrajectory, Utterance};
use crate::error::{Error, Result};
use crate::frontend::{add_deltas, extract, splice, BaseKind, FeatureKind, FeatureMatrix, FrontendConfig, Normalizer};
use crate::inversion::InversionModel;
use crate::nn::{Dataset, DatasetTargets, Geometry};

/// Where fCNN inputs get their articulatory trajectories from.
#[derive(Debug, Clone, Copy)]
pub enum TvSource<'a> {
    /// Ground truth attached to the utterance.
    Truth,
    /// Estimated by a speech-inversion model.
    Inverted(&'a InversionModel),
}

impl TvSource<'_> {
    pub fn trajectory(&self, u: &Utterance) -> Result<TvTrajectory> {
        match self {
            TvSource::Truth => u
                .tv_truth
                .clone()
                .ok_or_else(|| Error::Missing(format!("utterance {} has no TV trajectory", u.id))),
            TvSource::Inverted(m) => m.estimate(&u.samples),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TvSource::Truth => "truth",
            TvSource::Inverted(_) => "inverted",
        }
    }
}

fn tv_matrix(tv: &TvTrajectory) -> Result<FeatureMatrix> {
    let data = Array2::from_shape_fn((tv.len(), TV_COUNT), |(t, d)| tv.frames[t][d] as f32);
    FeatureMatrix::new(data, FeatureKind::plain(BaseKind::Tv))
}

/// Fitted front-end for acoustic-model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub base: BaseKind,
    pub frontend: FrontendConfig,
    pub context: usize,
    /// Statistics of the base features with deltas.
    pub norm: Normalizer,
    /// Statistics of the TV block, present when TVs are appended.
    pub tv_norm: Option<Normalizer>,
}

impl Featurizer {
    fn base_features(base: BaseKind, frontend: &FrontendConfig, u: &Utterance) -> Result<FeatureMatrix> {
        if !matches!(base, BaseKind::Mfb | BaseKind::Gfb) {
            return Err(Error::Validation(format!("acoustic models take mfb or gfb features, not {base:?}")));
        }
        add_deltas(&extract(&u.samples, base, frontend)?, frontend.delta_window)
    }

    /// Fits the normalizers on `train`; TVs are appended when `tv` is given.
    pub fn fit(train: &[Utterance], base: BaseKind, frontend: &FrontendConfig, tv: Option<TvSource>) -> Result<Self> {
        let feats = train
            .iter()
            .map(|u| Self::base_features(base, frontend, u))
            .collect::<Result<Vec<_>>>()?;
        let tv_norm = match tv {
            Some(src) => {
                let mats = train
                    .iter()
                    .map(|u| tv_matrix(&src.trajectory(u)?))
                    .collect::<Result<Vec<_>>>()?;
                Some(Normalizer::fit(&mats)?)
            }
            None => None,
        };
        Ok(Self {
            base,
            frontend: frontend.clone(),
            context: AM_CONTEXT,
            norm: Normalizer::fit(&feats)?,
            tv_norm,
        })
    }

    pub fn uses_tv(&self) -> bool {
        self.tv_norm.is_some()
    }

    /// Geometry of the spliced input as seen by the architecture builders.
    pub fn layout(&self) -> InputLayout {
        let width = 2 * self.context + 1;
        InputLayout {
            acoustic: Geometry::new(self.norm.dims() / 3, width, 3),
            tv: self.tv_norm.as_ref().map(|n| Geometry::new(n.dims(), width, 1)),
        }
    }

    pub fn kind(&self) -> FeatureKind {
        FeatureKind {
            base: self.base,
            deltas: true,
            spliced: true,
        }
    }

    /// Spliced network input of one utterance.
    pub fn apply(&self, u: &Utterance, tv: Option<TvSource>) -> Result<FeatureMatrix> {
        let acoustic = splice(
            &self.norm.apply(&Self::base_features(self.base, &self.frontend, u)?)?,
            self.context,
            self.context,
        );
        let (Some(tv_norm), Some(src)) = (&self.tv_norm, tv) else {
            if self.uses_tv() {
                return Err(Error::Missing(format!("featurizer needs TVs for utterance {}", u.id)));
            }
            return Ok(acoustic);
        };
        let tvm = tv_matrix(&src.trajectory(u)?)?;
        if tvm.frames() != acoustic.frames() {
            return Err(Error::Validation(format!(
                "utterance {}: {} TV frames for {} acoustic frames",
                u.id,
                tvm.frames(),
                acoustic.frames()
            )));
        }
        let tvs = splice(&tv_norm.apply(&tvm)?, self.context, self.context);
        let data = concatenate(Axis(1), &[acoustic.data.view(), tvs.data.view()])
            .map_err(|e| Error::Geometry(e.to_string()))?;
        FeatureMatrix::new(data, acoustic.kind)
    }
}

/// Per-utterance network inputs of one corpus partition, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    pub inputs: Vec<FeatureMatrix>,
    pub labels: Vec<Option<Vec<usize>>>,
    pub transcriptions: Vec<Vec<String>>,
}

impl FeatureSet {
    /// Builds a set from per-utterance inputs; utterances are ordered by id
    /// so results do not depend on the order they were supplied in.
    pub fn new(utts: &[Utterance], inputs: Vec<FeatureMatrix>) -> Result<Self> {
        if utts.len() != inputs.len() {
            return Err(Error::Validation("one input matrix per utterance required".into()));
        }
        let mut order: Vec<usize> = (0..utts.len()).collect();
        order.sort_by(|&a, &b| utts[a].id.cmp(&utts[b].id));
        let mut inputs: Vec<Option<FeatureMatrix>> = inputs.into_iter().map(Some).collect();
        let mut set = Self {
            ids: Vec::new(),
            inputs: Vec::new(),
            labels: Vec::new(),
            transcriptions: Vec::new(),
        };
        for i in order {
            let u = &utts[i];
            let x = inputs[i].take().expect("each index visited once");
            if let Some(l) = &u.frame_labels {
                if l.len() != x.frames() {
                    return Err(Error::Validation(format!(
                        "utterance {}: {} labels for {} feature frames",
                        u.id,
                        l.len(),
                        x.frames()
                    )));
                }
            }
            set.ids.push(u.id.clone());
            set.inputs.push(x);
            set.labels.push(u.frame_labels.clone());
            set.transcriptions.push(u.transcription.clone());
        }
        Ok(set)
    }

    pub fn featurize(utts: &[Utterance], f: &Featurizer, tv: Option<TvSource>) -> Result<Self> {
        let inputs = utts.iter().map(|u| f.apply(u, tv)).collect::<Result<Vec<_>>>()?;
        Self::new(utts, inputs)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn kind(&self) -> Option<FeatureKind> {
        self.inputs.first().map(|m| m.kind)
    }

    pub fn dims(&self) -> Option<usize> {
        self.inputs.first().map(FeatureMatrix::dims)
    }

    pub fn frames(&self) -> usize {
        self.inputs.iter().map(FeatureMatrix::frames).sum()
    }

    /// All frames stacked with their labels.
    pub fn dataset(&self) -> Result<Dataset<f32>> {
        if self.is_empty() {
            return Err(Error::Degenerate("empty feature set".into()));
        }
        let mut labels = Vec::with_capacity(self.frames());
        for (id, l) in self.ids.iter().zip(&self.labels) {
            labels.extend(l.as_ref().ok_or_else(|| Error::Missing(format!("utterance {id} has no frame labels")))?);
        }
        let views: Vec<_> = self.inputs.iter().map(|m| m.data.view()).collect();
        let x = concatenate(Axis(0), &views).map_err(|e| Error::Geometry(e.to_string()))?;
        Ok(Dataset {
            x,
            targets: DatasetTargets::Labels(labels),
        })
    }

    /// State priors from label frequencies with add-one smoothing.
    pub fn priors(&self, n_labels: usize) -> Result<Vec<f64>> {
        let mut counts = vec![1.0; n_labels];
        for l in self.labels.iter().flatten().flatten() {
            if *l >= n_labels {
                return Err(Error::Validation(format!("label {l} >= {n_labels}")));
            }
            counts[*l] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        Ok(counts.into_iter().map(|c| c / total).collect())
    }
}

/// Contexting of bottleneck features: corpus normalization and splicing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnContext {
    pub context: usize,
    pub norm: Normalizer,
}

impl BnContext {
    pub fn fit(raw: &[FeatureMatrix]) -> Result<Self> {
        Ok(Self {
            context: AM_CONTEXT,
            norm: Normalizer::fit(raw)?,
        })
    }

    pub fn apply(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix> {
        if raw.kind.base != BaseKind::Bn {
            return Err(Error::Validation(format!("expected bottleneck features, got {:?}", raw.kind)));
        }
        Ok(splice(&self.norm.apply(raw)?, self.context, self.context))
    }
}
