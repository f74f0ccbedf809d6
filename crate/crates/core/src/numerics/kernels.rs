//! Forward kernels shared by the recording [`Tape`](super::Tape) and the
//! eager evaluator. Each returns whatever the backward rule needs later.

use std::rc::Rc;

use super::Matrix;
use crate::error::{Error, Result};

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` in the overflow-safe form `max(x, 0) + log(1 + e^{-|x|})`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Contiguous row ranges of a matrix, e.g. the member rows of each ball-query group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    offsets: Rc<[usize]>,
}

impl Segments {
    /// `count` segments of `size` rows each.
    pub fn uniform(count: usize, size: usize) -> Self {
        Segments {
            offsets: (0..=count).map(|i| i * size).collect(),
        }
    }

    pub fn from_lengths(lengths: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(lengths.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &l in lengths {
            acc += l;
            offsets.push(acc);
        }
        Segments {
            offsets: offsets.into(),
        }
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_rows(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }
}

/// Column-wise maximum within each segment. Ties go to the lowest row.
/// Returns the pooled matrix and, per output entry, the winning input row.
pub fn segment_max(x: &Matrix, segments: &Segments) -> Result<(Matrix, Vec<usize>)> {
    if x.rows() == 0 || segments.count() == 0 {
        return Err(Error::EmptyInput("max_pool"));
    }
    if segments.total_rows() != x.rows() {
        return Err(Error::Dimension {
            op: "segment_max",
            left: x.shape(),
            right: (segments.total_rows(), segments.count()),
        });
    }
    let cols = x.cols();
    let mut out = Matrix::zeros(segments.count(), cols);
    let mut argmax = vec![0usize; segments.count() * cols];
    for (s, range) in segments.iter().enumerate() {
        if range.is_empty() {
            return Err(Error::EmptyInput("max_pool segment"));
        }
        let first = range.start;
        let o = out.row_mut(s);
        o.copy_from_slice(x.row(first));
        let a = &mut argmax[s * cols..(s + 1) * cols];
        a.fill(first);
        for r in range.start + 1..range.end {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v > o[c] {
                    o[c] = v;
                    a[c] = r;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn mean_rows(x: &Matrix) -> Result<Matrix> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("mean_pool"));
    }
    let mut out = Matrix::zeros(1, x.cols());
    for r in 0..x.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    let n = x.rows() as f64;
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// `x + bias` where `bias` is a single row broadcast over all rows.
pub fn add_row_bias(x: &Matrix, bias: &Matrix) -> Result<Matrix> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(Error::Dimension {
            op: "add_row_bias",
            left: x.shape(),
            right: bias.shape(),
        });
    }
    let mut out = x.clone();
    let b = bias.row(0);
    for r in 0..out.rows() {
        for (o, v) in out.row_mut(r).iter_mut().zip(b) {
            *o += v;
        }
    }
    Ok(out)
}

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight kept on the old running value at each update.
    pub momentum: f64,
    pub eps: f64,
}

impl BnStats {
    pub fn new(dim: usize, momentum: f64, eps: f64) -> Self {
        BnStats {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum,
            eps,
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }
}

/// How a batch-norm call treats its statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by batch statistics and fold them into the running stats.
    Train,
    /// Normalize by batch statistics, leave the running stats alone.
    TrainFrozen,
    /// Normalize by the running stats.
    Eval,
}

pub struct BnForward {
    pub out: Matrix,
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
}

pub fn batch_norm(
    x: &Matrix,
    gamma: &Matrix,
    beta: &Matrix,
    stats: &mut BnStats,
    mode: BnMode,
) -> Result<BnForward> {
    let d = x.cols();
    if stats.dim() != d || gamma.shape() != (1, d) || beta.shape() != (1, d) {
        return Err(Error::Dimension {
            op: "batch_norm",
            left: x.shape(),
            right: (gamma.rows(), stats.dim()),
        });
    }
    let (mean, var) = match mode {
        BnMode::Eval => (stats.running_mean.clone(), stats.running_var.clone()),
        BnMode::Train | BnMode::TrainFrozen => {
            if x.rows() == 0 {
                return Err(Error::EmptyInput("batch_norm"));
            }
            let n = x.rows() as f64;
            let mut mean = vec![0.0; d];
            for r in 0..x.rows() {
                for (m, v) in mean.iter_mut().zip(x.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; d];
            for r in 0..x.rows() {
                for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    let dv = v - m;
                    *s += dv * dv;
                }
            }
            var.iter_mut().for_each(|s| *s /= n);
            (mean, var)
        }
    };
    if mode == BnMode::Train {
        let mo = stats.momentum;
        for c in 0..d {
            stats.running_mean[c] = mo * stats.running_mean[c] + (1.0 - mo) * mean[c];
            stats.running_var[c] = mo * stats.running_var[c] + (1.0 - mo) * var[c];
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
    let mut xhat = Matrix::zeros(x.rows(), d);
    let mut out = Matrix::zeros(x.rows(), d);
    let (g, b) = (gamma.row(0), beta.row(0));
    for r in 0..x.rows() {
        let xr = x.row(r);
        let hr = xhat.row_mut(r);
        for c in 0..d {
            hr[c] = (xr[c] - mean[c]) * inv_std[c];
        }
        let or = &mut out.data_mut()[r * d..(r + 1) * d];
        let hr = &xhat.data()[r * d..(r + 1) * d];
        for c in 0..d {
            or[c] = g[c] * hr[c] + b[c];
        }
    }
    Ok(BnForward { out, xhat, inv_std })
}

/// Mean softmax cross-entropy over rows. Returns the loss and the softmax probabilities.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::Dimension {
            op: "softmax_cross_entropy",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if logits.rows() == 0 {
        return Err(Error::EmptyInput("softmax_cross_entropy"));
    }
    let classes = logits.cols();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label { label, classes });
    }
    let mut probs = Matrix::zeros(logits.rows(), classes);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        let log_z = max + log_sum;
        loss += (max - row[label]) + log_sum;
        for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
            *p = (v - log_z).exp();
        }
    }
    Ok((loss / labels.len() as f64, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(800.0).is_finite());
        assert_eq!(relu(-5.0), 0.0);
        assert_eq!(relu(5.0), 5.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
    }

    #[test]
    fn pooling_by_definition() {
        let x = Matrix::from_rows(&[[1.0, 4.0], [3.0, 2.0]]);
        let (max, arg) = segment_max(&x, &Segments::uniform(1, 2)).unwrap();
        assert_eq!(max, Matrix::from_rows(&[[3.0, 4.0]]));
        assert_eq!(arg, vec![1, 0]);
        assert_eq!(mean_rows(&x).unwrap(), Matrix::from_rows(&[[2.0, 3.0]]));
        let single = Matrix::from_rows(&[[7.0, -1.0]]);
        assert_eq!(segment_max(&single, &Segments::uniform(1, 1)).unwrap().0, single);
        assert_eq!(mean_rows(&single).unwrap(), single);
    }

    #[test]
    fn max_pool_ties_pick_lowest_row() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [0.0]]);
        let (_, arg) = segment_max(&x, &Segments::uniform(1, 3)).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn empty_pool_is_an_error() {
        let x = Matrix::zeros(0, 3);
        assert!(matches!(
            segment_max(&x, &Segments::uniform(0, 0)),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(mean_rows(&x), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn batch_norm_hand_values() {
        let x = Matrix::from_rows(&[[5.0, 0.0], [5.0, 2.0]]);
        let gamma = Matrix::filled(1, 2, 1.0);
        let beta = Matrix::zeros(1, 2);
        let mut stats = BnStats::new(2, 0.9, 1e-5);
        let y = batch_norm(&x, &gamma, &beta, &mut stats, BnMode::Train).unwrap();
        assert_eq!(y.out.get(0, 0), 0.0);
        assert_eq!(y.out.get(1, 0), 0.0);
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.out.get(0, 1) + expect).abs() < 1e-15);
        assert!((y.out.get(1, 1) - expect).abs() < 1e-15);
        // running mean moves 10% of the way to the batch mean
        assert!((stats.running_mean[0] - 0.5).abs() < 1e-15);
        assert!((stats.running_var[1] - (0.9 + 0.1 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn batch_norm_eval_ignores_batch_contents() {
        let gamma = Matrix::filled(1, 1, 2.0);
        let beta = Matrix::filled(1, 1, 0.5);
        let mut stats = BnStats::new(1, 0.9, 1e-5);
        stats.running_mean = vec![1.0];
        stats.running_var = vec![4.0];
        let a = Matrix::from_rows(&[[3.0], [100.0]]);
        let b = Matrix::from_rows(&[[3.0], [-7.0]]);
        let ya = batch_norm(&a, &gamma, &beta, &mut stats, BnMode::Eval).unwrap();
        let yb = batch_norm(&b, &gamma, &beta, &mut stats, BnMode::Eval).unwrap();
        assert_eq!(ya.out.get(0, 0), yb.out.get(0, 0));
        assert_eq!(stats.running_mean, vec![1.0]);
    }

    #[test]
    fn cross_entropy_values() {
        let uniform = Matrix::zeros(3, 5);
        let (l, _) = softmax_cross_entropy(&uniform, &[0, 4, 2]).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-14);
        let logits = Matrix::from_rows(&[[10.0, -10.0]]);
        let (l, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        // ln(1 + e^-20)
        assert!((l - 2.061153618190204e-9).abs() < 1e-15);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[2]),
            Err(Error::Label { label: 2, classes: 2 })
        ));
    }
}
