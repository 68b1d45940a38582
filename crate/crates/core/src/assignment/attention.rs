//! Hungarian attention: a hard mask over the relaxed assignment and the
//! binary cross-entropy it gates.

use ndarray::{Array2, ArrayView2};

use super::hungarian::hungarian_binarize;
use super::sinkhorn::DoublyStochasticMatrix;
use crate::error::{Error, Result};
use crate::puzzle::Permutation;

pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    values: Array2<bool>,
}

impl AttentionMask {
    pub fn values(&self) -> &Array2<bool> {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[[i, j]]
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Dense 0/1 matrix with a one at `(i, perm[i])`.
pub fn one_hot(perm: &Permutation) -> Array2<f64> {
    let n = perm.len();
    let mut m = Array2::zeros((n, n));
    for (i, &j) in perm.as_slice().iter().enumerate() {
        m[[i, j]] = 1.0;
    }
    m
}

/// Elementwise OR of the predicted and ground-truth assignments.
pub fn attention_mask(predicted: &Permutation, gt: &Permutation) -> Result<AttentionMask> {
    if predicted.len() != gt.len() {
        return Err(Error::SizeMismatch(format!(
            "prediction of {} vs ground truth of {}",
            predicted.len(),
            gt.len()
        )));
    }
    let n = gt.len();
    let mut values = Array2::from_elem((n, n), false);
    for (i, (&p, &g)) in predicted.as_slice().iter().zip(gt.as_slice()).enumerate() {
        values[[i, p]] = true;
        values[[i, g]] = true;
    }
    Ok(AttentionMask { values })
}

/// `Z = OR(Hung(S), S^G)`.
pub fn hungarian_attention_mask(
    s: &DoublyStochasticMatrix,
    gt: &Permutation,
) -> Result<AttentionMask> {
    if s.n() != gt.len() {
        return Err(Error::SizeMismatch(format!(
            "S is {0}x{0}, ground truth has {1} entries",
            s.n(),
            gt.len()
        )));
    }
    attention_mask(&hungarian_binarize(s)?, gt)
}

/// Masked binary cross-entropy against the ground-truth assignment matrix,
/// `-sum Z (G ln S + (1 - G) ln(1 - S))` with `S` clamped to
/// `[eps, 1 - eps]`. Returns the loss and its gradient with respect to `S`
/// (zero outside the mask and wherever the clamp is active).
pub fn attended_bce_loss(
    s: ArrayView2<f64>,
    gt: &Permutation,
    mask: &AttentionMask,
) -> Result<(f64, Array2<f64>)> {
    let n = gt.len();
    if s.dim() != (n, n) || mask.n() != n {
        return Err(Error::SizeMismatch(format!(
            "S {:?}, mask {1}x{1}, ground truth {n}",
            s.dim(),
            mask.n()
        )));
    }
    let target = one_hot(gt);
    let mut loss = 0.0;
    let mut grad = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if !mask.values[[i, j]] {
                continue;
            }
            let raw = s[[i, j]];
            let p = raw.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            let g = target[[i, j]];
            loss -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
            if raw > BCE_EPSILON && raw < 1.0 - BCE_EPSILON {
                grad[[i, j]] = -(g / p - (1.0 - g) / (1.0 - p));
            }
        }
    }
    Ok((loss, grad))
}
