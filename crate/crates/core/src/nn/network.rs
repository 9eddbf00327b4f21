//! Forward and backward passes.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{ConvAxis, ConvSpec, LayerSpec, NetworkSpec};
use super::Real;
use crate::error::{Error, Result};

/// Weights of one layer. Convolutions store `patch_len x n_filters`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T> {
    Affine { w: Array2<T>, b: Array1<T> },
    Fusion(Vec<LayerParams<T>>),
}

impl<T: Real> LayerParams<T> {
    fn zeros_like(spec: &LayerSpec) -> Self {
        match spec {
            LayerSpec::Fusion { branches, .. } => {
                LayerParams::Fusion(branches.iter().map(|b| Self::zeros_like(&b.layer)).collect())
            }
            _ => {
                let (rows, cols) = affine_shape(spec);
                LayerParams::Affine {
                    w: Array2::zeros((rows, cols)),
                    b: Array1::zeros(cols),
                }
            }
        }
    }

    /// Visits weight then bias slices in storage order.
    pub fn for_each_slice<'a>(&'a self, f: &mut impl FnMut(&'a [T])) {
        match self {
            LayerParams::Affine { w, b } => {
                f(w.as_slice().expect("contiguous weights"));
                f(b.as_slice().expect("contiguous bias"));
            }
            LayerParams::Fusion(ps) => ps.iter().for_each(|p| p.for_each_slice(f)),
        }
    }

    pub fn for_each_slice_mut(&mut self, f: &mut impl FnMut(&mut [T])) {
        match self {
            LayerParams::Affine { w, b } => {
                f(w.as_slice_mut().expect("contiguous weights"));
                f(b.as_slice_mut().expect("contiguous bias"));
            }
            LayerParams::Fusion(ps) => ps.iter_mut().for_each(|p| p.for_each_slice_mut(f)),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        match (self, other) {
            (LayerParams::Affine { w, b }, LayerParams::Affine { w: gw, b: gb }) => {
                w.scaled_add(scale, gw);
                b.scaled_add(scale, gb);
            }
            (LayerParams::Fusion(a), LayerParams::Fusion(g)) => {
                a.iter_mut().zip(g).for_each(|(p, q)| p.add_scaled(q, scale))
            }
            _ => panic!("parameter structure mismatch"),
        }
    }

    pub fn sum_squares(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each_slice(&mut |s| {
            acc += s.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>()
        });
        acc
    }

    pub fn cast<U: Real>(&self) -> LayerParams<U> {
        match self {
            LayerParams::Affine { w, b } => LayerParams::Affine {
                w: w.mapv(|v| U::from(v).unwrap()),
                b: b.mapv(|v| U::from(v).unwrap()),
            },
            LayerParams::Fusion(ps) => LayerParams::Fusion(ps.iter().map(|p| p.cast()).collect()),
        }
    }
}

fn affine_shape(spec: &LayerSpec) -> (usize, usize) {
    match spec {
        LayerSpec::FullSigmoid { input, output }
        | LayerSpec::Linear { input, output }
        | LayerSpec::Softmax { input, output } => (*input, *output),
        LayerSpec::FreqConv(c) => (c.patch_len_for(ConvAxis::Freq), c.n_filters),
        LayerSpec::TimeConv(c) => (c.patch_len_for(ConvAxis::Time), c.n_filters),
        LayerSpec::Fusion { .. } => unreachable!("fusion has no affine shape"),
    }
}

/// Per-layer cached values needed by the backward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Affine { input: Array2<T>, output: Array2<T> },
    Conv { cols: Array2<T>, argmax: Vec<u32>, output: Array2<T> },
    Fusion(Vec<Cache<T>>),
}

impl<T: Real> Cache<T> {
    pub fn output(&self) -> Array2<T> {
        match self {
            Cache::Affine { output, .. } | Cache::Conv { output, .. } => output.clone(),
            Cache::Fusion(cs) => {
                let views: Vec<_> = cs.iter().map(|c| c.output()).collect();
                let vs: Vec<ArrayView2<T>> = views.iter().map(|a| a.view()).collect();
                ndarray::concatenate(Axis(1), &vs).expect("branch outputs share batch size")
            }
        }
    }

    fn pool_signature(&self, out: &mut Vec<u32>) {
        match self {
            Cache::Conv { argmax, .. } => out.extend_from_slice(argmax),
            Cache::Fusion(cs) => cs.iter().for_each(|c| c.pool_signature(out)),
            Cache::Affine { .. } => {}
        }
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn softmax_rows<T: Real>(z: &mut Array2<T>) {
    for mut row in z.outer_iter_mut() {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut sum = T::zero();
        row.mapv_inplace(|v| {
            let e = (v - m).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|v| v / sum);
    }
}

/// Result of a forward pass: one cache per layer.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub caches: Vec<Cache<T>>,
    pub output: Array2<T>,
}

impl<T: Real> Forward<T> {
    /// Argmax positions of every max-pooling unit, in layer order.
    pub fn pool_signature(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.caches.iter().for_each(|c| c.pool_signature(&mut out));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Softmax output with cross-entropy against integer labels.
    CrossEntropy,
    /// `1/(2B) sum ||y - t||^2`.
    Mse,
}

pub enum Targets<'a, T> {
    Labels(&'a [usize]),
    Values(ArrayView2<'a, T>),
}

impl<T> Targets<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A network specification together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub spec: NetworkSpec,
    pub params: Vec<LayerParams<T>>,
}

/// Weights start uniform in `+-INIT_GAIN / sqrt(fan_in)`.
pub const INIT_GAIN: f64 = 4.0;

fn init_params<T: Real>(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> LayerParams<T> {
    match spec {
        LayerSpec::Fusion { branches, .. } => {
            LayerParams::Fusion(branches.iter().map(|b| init_params(&b.layer, rng)).collect())
        }
        _ => {
            let (fan_in, out) = affine_shape(spec);
            let bound = INIT_GAIN / (fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, out), || {
                T::from(rng.gen_range(-bound..=bound)).unwrap()
            });
            LayerParams::Affine {
                w,
                b: Array1::zeros(out),
            }
        }
    }
}

impl<T: Real> Network<T> {
    /// Uniform `+-INIT_GAIN/sqrt(fan_in)` weights, zero biases, seeded.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec.layers.iter().map(|l| init_params(l, &mut rng)).collect();
        Ok(Self { spec, params })
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }

    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for p in &self.params {
            p.for_each_slice(&mut |s| out.extend_from_slice(s));
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Geometry(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut pos = 0;
        for p in &mut self.params {
            p.for_each_slice_mut(&mut |s| {
                s.copy_from_slice(&flat[pos..pos + s.len()]);
                pos += s.len();
            });
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }

    pub fn zero_grads(&self) -> Vec<LayerParams<T>> {
        self.spec.layers.iter().map(LayerParams::zeros_like).collect()
    }

    pub fn forward(&self, x: &Array2<T>) -> Result<Forward<T>> {
        self.forward_upto(x, self.spec.layers.len())
    }

    /// Runs layers `0..n_layers` and keeps their caches.
    pub fn forward_upto(&self, x: &Array2<T>, n_layers: usize) -> Result<Forward<T>> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::Geometry(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.spec.input_dim()
            )));
        }
        let mut caches = Vec::with_capacity(n_layers);
        let mut h = x.clone();
        for (spec, p) in self.spec.layers.iter().zip(&self.params).take(n_layers) {
            let cache = layer_forward(spec, p, h.view());
            h = cache.output();
            caches.push(cache);
        }
        Ok(Forward { caches, output: h })
    }

    /// Output of the network in batches of `chunk` rows, without caches kept.
    pub fn predict(&self, x: &Array2<T>, chunk: usize) -> Result<Array2<T>> {
        self.predict_upto(x, self.spec.layers.len(), chunk)
    }

    pub fn predict_upto(&self, x: &Array2<T>, n_layers: usize, chunk: usize) -> Result<Array2<T>> {
        let out_dim = if n_layers == 0 {
            self.spec.input_dim()
        } else {
            self.spec.layers[n_layers - 1].output_dim()
        };
        let mut out = Array2::zeros((x.nrows(), out_dim));
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + chunk.max(1)).min(x.nrows());
            let part = x.slice(s![start..end, ..]).to_owned();
            let f = self.forward_upto(&part, n_layers)?;
            out.slice_mut(s![start..end, ..]).assign(&f.output);
            start = end;
        }
        Ok(out)
    }

    /// Loss value and its gradient for the top `n_trainable` layers (the rest
    /// are `None`). Gradients are averaged over the batch.
    pub fn backward(
        &self,
        fwd: &Forward<T>,
        targets: &Targets<T>,
        loss: Loss,
        n_trainable: usize,
    ) -> Result<(f64, Vec<Option<LayerParams<T>>>)> {
        let n_layers = self.spec.layers.len();
        if fwd.caches.len() != n_layers {
            return Err(Error::Geometry("backward needs a full forward pass".into()));
        }
        let y = &fwd.output;
        let batch = y.nrows();
        if targets.len() != batch {
            return Err(Error::Geometry(format!(
                "{} targets for batch of {batch}",
                targets.len()
            )));
        }
        let inv_b = T::from(1.0 / batch as f64).unwrap();
        let last = &self.spec.layers[n_layers - 1];
        let (loss_value, delta, preact) = match (loss, targets) {
            (Loss::CrossEntropy, Targets::Labels(labels)) => {
                if !matches!(last, LayerSpec::Softmax { .. }) {
                    return Err(Error::Geometry("cross-entropy needs a softmax output layer".into()));
                }
                let mut d = y.clone();
                let mut l = 0.0f64;
                for (i, &lab) in labels.iter().enumerate() {
                    if lab >= y.ncols() {
                        return Err(Error::Geometry(format!("label {lab} >= {} outputs", y.ncols())));
                    }
                    let p = y[[i, lab]].to_f64().unwrap();
                    // f64::max would silently replace NaN by the floor
                    l -= if p.is_nan() { p } else { p.max(1e-30).ln() };
                    d[[i, lab]] -= T::one();
                }
                d.mapv_inplace(|v| v * inv_b);
                (l / batch as f64, d, true)
            }
            (Loss::Mse, Targets::Values(t)) => {
                if t.dim() != y.dim() {
                    return Err(Error::Geometry("regression targets shape mismatch".into()));
                }
                let d = y - t;
                let l = d.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>() / (2.0 * batch as f64);
                (l, d.mapv(|v| v * inv_b), false)
            }
            _ => return Err(Error::Validation("loss does not match target type".into())),
        };

        let lowest = n_layers - n_trainable.min(n_layers);
        let mut grads: Vec<Option<LayerParams<T>>> = vec![None; n_layers];
        let mut g = delta;
        for i in (lowest..n_layers).rev() {
            let need_input = i > lowest;
            let (gin, gp) = layer_backward(
                &self.spec.layers[i],
                &self.params[i],
                &fwd.caches[i],
                g,
                preact && i == n_layers - 1,
                need_input,
            );
            grads[i] = Some(gp);
            match gin {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok((loss_value, grads))
    }
}

fn layer_forward<T: Real>(spec: &LayerSpec, p: &LayerParams<T>, x: ArrayView2<T>) -> Cache<T> {
    match (spec, p) {
        (LayerSpec::Fusion { branches, .. }, LayerParams::Fusion(ps)) => Cache::Fusion(
            branches
                .iter()
                .zip(ps)
                .map(|(b, bp)| {
                    let cols = x.slice(s![.., b.offset..b.offset + b.layer.input_dim()]);
                    layer_forward(&b.layer, bp, cols)
                })
                .collect(),
        ),
        (LayerSpec::FreqConv(c), LayerParams::Affine { w, b }) => conv_forward(c, ConvAxis::Freq, w, b, x),
        (LayerSpec::TimeConv(c), LayerParams::Affine { w, b }) => conv_forward(c, ConvAxis::Time, w, b, x),
        (_, LayerParams::Affine { w, b }) => {
            let mut z = x.dot(w);
            z += b;
            match spec {
                LayerSpec::FullSigmoid { .. } => z.mapv_inplace(sigmoid),
                LayerSpec::Softmax { .. } => softmax_rows(&mut z),
                _ => {}
            }
            Cache::Affine {
                input: x.to_owned(),
                output: z,
            }
        }
        _ => panic!("parameters do not match layer {}", spec.name()),
    }
}

fn conv_forward<T: Real>(
    c: &ConvSpec,
    axis: ConvAxis,
    w: &Array2<T>,
    bias: &Array1<T>,
    x: ArrayView2<T>,
) -> Cache<T> {
    let batch = x.nrows();
    let positions = c.positions(axis);
    let k = c.patch_len_for(axis);
    let idx = c.patch_indices(axis);
    let mut cols = Array2::zeros((batch * positions, k));
    for bi in 0..batch {
        let row = x.row(bi);
        for p in 0..positions {
            let mut dst = cols.row_mut(bi * positions + p);
            let src = &idx[p * k..(p + 1) * k];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = row[s];
            }
        }
    }
    let mut z = cols.dot(w);
    z += bias;
    let nf = c.n_filters;
    let q_count = c.pooled(axis);
    let mut out = Array2::zeros((batch, q_count * nf));
    let mut argmax = vec![0u32; batch * q_count * nf];
    for bi in 0..batch {
        for q in 0..q_count {
            for f in 0..nf {
                let mut best = q * c.pool;
                let mut best_v = z[[bi * positions + best, f]];
                for p in q * c.pool + 1..(q + 1) * c.pool {
                    let v = z[[bi * positions + p, f]];
                    if v > best_v {
                        best_v = v;
                        best = p;
                    }
                }
                argmax[(bi * q_count + q) * nf + f] = best as u32;
                out[[bi, q * nf + f]] = sigmoid(best_v);
            }
        }
    }
    Cache::Conv {
        cols,
        argmax,
        output: out,
    }
}

/// Returns (input gradient if requested, parameter gradients).
fn layer_backward<T: Real>(
    spec: &LayerSpec,
    p: &LayerParams<T>,
    cache: &Cache<T>,
    grad: Array2<T>,
    grad_is_preact: bool,
    need_input: bool,
) -> (Option<Array2<T>>, LayerParams<T>) {
    match (spec, p, cache) {
        (LayerSpec::Fusion { input, branches }, LayerParams::Fusion(ps), Cache::Fusion(cs)) => {
            let batch = grad.nrows();
            let mut gin = need_input.then(|| Array2::zeros((batch, *input)));
            let mut gps = Vec::with_capacity(branches.len());
            let mut col = 0;
            for ((b, bp), bc) in branches.iter().zip(ps).zip(cs) {
                let width = b.layer.output_dim();
                let g = grad.slice(s![.., col..col + width]).to_owned();
                col += width;
                let (bg, gp) = layer_backward(&b.layer, bp, bc, g, false, need_input);
                if let (Some(acc), Some(bg)) = (gin.as_mut(), bg) {
                    let mut dst = acc.slice_mut(s![.., b.offset..b.offset + b.layer.input_dim()]);
                    dst += &bg;
                }
                gps.push(gp);
            }
            (gin, LayerParams::Fusion(gps))
        }
        (LayerSpec::FreqConv(c), LayerParams::Affine { w, .. }, Cache::Conv { cols, argmax, output }) => {
            conv_backward(c, ConvAxis::Freq, w, cols, argmax, output, grad, need_input)
        }
        (LayerSpec::TimeConv(c), LayerParams::Affine { w, .. }, Cache::Conv { cols, argmax, output }) => {
            conv_backward(c, ConvAxis::Time, w, cols, argmax, output, grad, need_input)
        }
        (_, LayerParams::Affine { w, .. }, Cache::Affine { input, output }) => {
            let gz = if grad_is_preact {
                grad
            } else {
                match spec {
                    LayerSpec::FullSigmoid { .. } => {
                        let mut g = grad;
                        g.zip_mut_with(output, |gv, &y| *gv = *gv * y * (T::one() - y));
                        g
                    }
                    LayerSpec::Softmax { .. } => {
                        let mut g = grad;
                        for (mut gr, yr) in g.outer_iter_mut().zip(output.outer_iter()) {
                            let dot = gr.iter().zip(yr.iter()).fold(T::zero(), |a, (&x, &y)| a + x * y);
                            gr.zip_mut_with(&yr, |gv, &y| *gv = y * (*gv - dot));
                        }
                        g
                    }
                    _ => grad,
                }
            };
            let gw = input.t().dot(&gz);
            let gb = gz.sum_axis(Axis(0));
            let gin = need_input.then(|| gz.dot(&w.t()));
            (gin, LayerParams::Affine { w: gw, b: gb })
        }
        _ => panic!("cache does not match layer {}", spec.name()),
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    c: &ConvSpec,
    axis: ConvAxis,
    w: &Array2<T>,
    cols: &Array2<T>,
    argmax: &[u32],
    output: &Array2<T>,
    grad: Array2<T>,
    need_input: bool,
) -> (Option<Array2<T>>, LayerParams<T>) {
    let batch = grad.nrows();
    let positions = c.positions(axis);
    let nf = c.n_filters;
    let q_count = c.pooled(axis);
    let mut gz = Array2::<T>::zeros((batch * positions, nf));
    for bi in 0..batch {
        for q in 0..q_count {
            for f in 0..nf {
                let y = output[[bi, q * nf + f]];
                let g = grad[[bi, q * nf + f]] * y * (T::one() - y);
                let p = argmax[(bi * q_count + q) * nf + f] as usize;
                gz[[bi * positions + p, f]] += g;
            }
        }
    }
    let gw = cols.t().dot(&gz);
    let gb = gz.sum_axis(Axis(0));
    let gin = need_input.then(|| {
        let gcols = gz.dot(&w.t());
        let k = c.patch_len_for(axis);
        let idx = c.patch_indices(axis);
        let mut gx = Array2::zeros((batch, c.geometry.dim()));
        for bi in 0..batch {
            let mut row = gx.row_mut(bi);
            for p in 0..positions {
                let src = gcols.row(bi * positions + p);
                for (&i, &v) in idx[p * k..(p + 1) * k].iter().zip(src.iter()) {
                    row[i] += v;
                }
            }
        }
        gx
    });
    (gin, LayerParams::Affine { w: gw, b: gb })
}
