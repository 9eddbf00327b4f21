use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-8;

/// Regression deltas `sum_n n (x[t+n] - x[t-n]) / (2 sum_n n^2)` with edge
/// frames replicated.
fn regression_deltas(x: ArrayView2<f32>, window: usize) -> Array2<f32> {
    let (rows, cols) = x.dim();
    let denom: f64 = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros((rows, cols));
    let last = rows as isize - 1;
    let clamp = |t: isize| t.clamp(0, last) as usize;
    for t in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0f64;
            for n in 1..=window {
                let plus = x[[clamp(t as isize + n as isize), c]] as f64;
                let minus = x[[clamp(t as isize - n as isize), c]] as f64;
                acc += n as f64 * (plus - minus);
            }
            out[[t, c]] = (acc / denom) as f32;
        }
    }
    out
}

/// Appends deltas and delta-deltas: `[x | d | dd]`, 3x the dimensions.
pub fn add_deltas(fm: &FeatureMatrix, window: usize) -> Result<FeatureMatrix> {
    if fm.frames() == 0 {
        return Err(Error::Degenerate("cannot take deltas of zero frames".into()));
    }
    let d = regression_deltas(fm.data.view(), window);
    let dd = regression_deltas(d.view(), window);
    let dims = fm.dims();
    let mut out = Array2::zeros((fm.frames(), 3 * dims));
    out.slice_mut(s![.., ..dims]).assign(&fm.data);
    out.slice_mut(s![.., dims..2 * dims]).assign(&d);
    out.slice_mut(s![.., 2 * dims..]).assign(&dd);
    FeatureMatrix::new(
        out,
        FeatureKind {
            deltas: true,
            ..fm.kind
        },
    )
}

/// Concatenates rows `t-left ..= t+right` for every frame (edges replicated).
pub fn splice(fm: &FeatureMatrix, left: usize, right: usize) -> FeatureMatrix {
    let (rows, dims) = fm.data.dim();
    let width = left + right + 1;
    let mut out = Array2::zeros((rows, dims * width));
    if rows > 0 {
        for t in 0..rows {
            for (j, off) in (-(left as isize)..=right as isize).enumerate() {
                let src = (t as isize + off).clamp(0, rows as isize - 1) as usize;
                out.slice_mut(s![t, j * dims..(j + 1) * dims])
                    .assign(&fm.data.row(src));
            }
        }
    }
    FeatureMatrix {
        data: out,
        kind: FeatureKind {
            spliced: left + right > 0 || fm.kind.spliced,
            ..fm.kind
        },
    }
}

/// Concatenates the frames of several matrices with equal width.
pub fn stack_rows<'a>(mats: impl IntoIterator<Item = &'a Array2<f32>>) -> Result<Array2<f32>> {
    let views: Vec<_> = mats.into_iter().map(|m| m.view()).collect();
    if views.is_empty() {
        return Err(Error::Degenerate("nothing to stack".into()));
    }
    ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Geometry(e.to_string()))
}

/// Per-dimension mean and standard deviation, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(corpus: &[FeatureMatrix]) -> Result<Self> {
        let dims = corpus
            .first()
            .ok_or_else(|| Error::Degenerate("cannot fit normalizer on an empty corpus".into()))?
            .dims();
        if corpus.iter().any(|f| f.dims() != dims) {
            return Err(Error::Geometry("feature dimensions differ across corpus".into()));
        }
        let n: usize = corpus.iter().map(|f| f.frames()).sum();
        if n == 0 {
            return Err(Error::Degenerate("cannot fit normalizer on zero frames".into()));
        }
        let mut mean = vec![0.0f64; dims];
        for f in corpus {
            for row in f.data.outer_iter() {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v as f64;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; dims];
        for f in corpus {
            for row in f.data.outer_iter() {
                for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = v as f64 - m;
                    *s += d * d;
                }
            }
        }
        let std = var.iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        if fm.dims() != self.dims() {
            return Err(Error::Geometry(format!(
                "normalizer has {} dims, features have {}",
                self.dims(),
                fm.dims()
            )));
        }
        let mut data = fm.data.clone();
        for mut row in data.outer_iter_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        FeatureMatrix::new(data, fm.kind)
    }

    /// Maps normalized values back to the original scale.
    pub fn invert_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::BaseKind;
    use ndarray::Array2;

    fn fm(data: Array2<f32>) -> FeatureMatrix {
        FeatureMatrix::new(data, FeatureKind::plain(BaseKind::Mfb)).unwrap()
    }

    #[test]
    fn constant_has_zero_deltas() {
        let x = fm(Array2::from_elem((7, 4), 3.5));
        let d = add_deltas(&x, 2).unwrap();
        assert_eq!(d.dims(), 12);
        assert!(d.data.slice(s![.., 4..]).iter().all(|&v| v == 0.0));
        assert!(d.kind.deltas);
    }

    #[test]
    fn ramp_delta_equals_slope() {
        let slope = 0.75f32;
        let x = fm(Array2::from_shape_fn((10, 2), |(t, c)| slope * t as f32 + c as f32));
        let d = add_deltas(&x, 2).unwrap();
        for t in 2..8 {
            for c in 0..2 {
                assert!((d.data[[t, 2 + c]] - slope).abs() < 1e-6);
            }
        }
        // interior delta-deltas of a ramp vanish where the deltas are constant
        assert!(d.data[[5, 4]].abs() < 1e-6);
    }

    #[test]
    fn delta_dims_40_to_120() {
        let x = fm(Array2::zeros((3, 40)));
        assert_eq!(add_deltas(&x, 2).unwrap().dims(), 120);
    }

    #[test]
    fn splice_shapes_and_identity() {
        let x = fm(Array2::from_shape_fn((5, 3), |(t, c)| (t * 10 + c) as f32));
        assert_eq!(splice(&x, 8, 8).dims(), 3 * 17);
        assert_eq!(splice(&x, 35, 35).dims(), 3 * 71);
        assert_eq!(splice(&x, 0, 0).data, x.data);
        let s = splice(&x, 1, 1);
        // frame 0: [x0, x0, x1]
        assert_eq!(s.data.row(0).to_vec(), vec![0., 1., 2., 0., 1., 2., 10., 11., 12.]);
        assert_eq!(s.data.row(4).to_vec(), vec![30., 31., 32., 40., 41., 42., 40., 41., 42.]);
    }

    #[test]
    fn mfb_shape_algebra() {
        let x = fm(Array2::zeros((20, 40)));
        assert_eq!(splice(&add_deltas(&x, 2).unwrap(), 8, 8).dims(), 2040);
    }

    #[test]
    fn normalizer_zero_mean_and_constant_dims() {
        let a = fm(Array2::from_shape_fn((50, 3), |(t, c)| if c == 1 { 4.0 } else { (t * (c + 1)) as f32 }));
        let b = fm(Array2::from_shape_fn((30, 3), |(t, c)| if c == 1 { 4.0 } else { (t as f32).sin() }));
        let norm = Normalizer::fit(&[a.clone(), b.clone()]).unwrap();
        let na = norm.apply(&a).unwrap();
        let nb = norm.apply(&b).unwrap();
        for c in 0..3 {
            let sum: f64 = na.data.column(c).iter().chain(nb.data.column(c)).map(|&v| v as f64).sum();
            assert!((sum / 80.0).abs() < 1e-6);
        }
        assert!(na.data.column(1).iter().all(|&v| v == 0.0));
        assert!(Normalizer::fit(&[]).is_err());
    }

    #[test]
    fn normalizer_serde_round_trip() {
        let a = fm(Array2::from_shape_fn((9, 4), |(t, c)| ((t * 31 + c * 7) % 13) as f32 * 0.37));
        let norm = Normalizer::fit(std::slice::from_ref(&a)).unwrap();
        let back: Normalizer = serde_json::from_str(&serde_json::to_string(&norm).unwrap()).unwrap();
        assert_eq!(norm, back);
        assert_eq!(norm.apply(&a).unwrap(), back.apply(&a).unwrap());
    }
}
