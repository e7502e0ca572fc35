//! Per-view class prototypes and mixup hybrid prototypes.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class means of `support` (one row per support sample), `k_shot` per label.
pub fn class_prototypes(
    support: ArrayView2<f64>,
    labels: &[usize],
    n_way: usize,
    k_shot: usize,
) -> Result<Array2<f64>> {
    if support.nrows() != labels.len() {
        return Err(Error::shape(format!("{} embeddings but {} labels", support.nrows(), labels.len())));
    }
    let mut counts = vec![0usize; n_way];
    for &l in labels {
        *counts.get_mut(l).ok_or(Error::LabelOutOfRange { label: l, n_way })? += 1;
    }
    if let Some((class, &found)) = counts.iter().enumerate().find(|(_, &c)| c != k_shot) {
        return Err(Error::LabelCount { class, expected: k_shot, found });
    }
    let mut protos = Array2::<f64>::zeros((n_way, support.ncols()));
    for (row, &l) in support.rows().into_iter().zip(labels) {
        let mut p = protos.row_mut(l);
        p += &row;
    }
    protos /= k_shot as f64;
    Ok(protos)
}

/// Pulls a prototype gradient back onto the support rows that formed it.
pub fn class_prototypes_backward(grad_protos: ArrayView2<f64>, labels: &[usize], k_shot: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((labels.len(), grad_protos.ncols()));
    let scale = 1.0 / k_shot as f64;
    for (mut row, &l) in out.rows_mut().into_iter().zip(labels) {
        row.zip_mut_with(&grad_protos.row(l), |o, &g| *o = g * scale);
    }
    out
}

/// Row-wise convex combination `alpha * p1 + (1 - alpha) * p2`.
pub fn hybrid_prototypes(p1: ArrayView2<f64>, p2: ArrayView2<f64>, alpha: f64) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if p1.dim() != p2.dim() {
        return Err(Error::shape(format!("prototype shapes {:?} and {:?} differ", p1.dim(), p2.dim())));
    }
    Ok(Zip::from(&p1).and(&p2).map_collect(|&a, &b| alpha * a + (1.0 - alpha) * b))
}

/// Per-view prototypes together with their hybrid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub per_view: [Array2<f64>; 2],
    pub hybrid: Array2<f64>,
    pub alpha: f64,
}

impl PrototypeSet {
    pub fn new(p1: Array2<f64>, p2: Array2<f64>, alpha: f64) -> Result<Self> {
        let hybrid = hybrid_prototypes(p1.view(), p2.view(), alpha)?;
        Ok(PrototypeSet { per_view: [p1, p2], hybrid, alpha })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_shot_prototype_is_the_support() {
        let s = array![[1.0, 2.0], [3.0, -1.0]];
        let p = class_prototypes(s.view(), &[1, 0], 2, 1).unwrap();
        assert_eq!(p, array![[3.0, -1.0], [1.0, 2.0]]);
    }

    #[test]
    fn two_shot_mean() {
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        let p = class_prototypes(s.view(), &[0, 0], 1, 2).unwrap();
        assert_eq!(p, array![[0.5, 0.5]]);
    }

    #[test]
    fn label_count_mismatch() {
        let s = array![[1.0], [2.0], [3.0]];
        assert!(matches!(
            class_prototypes(s.view(), &[0, 0, 1], 2, 2),
            Err(Error::LabelCount { class: 1, expected: 2, found: 1 })
        ));
        assert!(matches!(
            class_prototypes(s.view(), &[0, 0, 2], 2, 2),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn hybrid_endpoints_and_midpoint() {
        let p1 = array![[2.0, 0.0]];
        let p2 = array![[0.0, 2.0]];
        assert_eq!(hybrid_prototypes(p1.view(), p2.view(), 1.0).unwrap(), p1);
        assert_eq!(hybrid_prototypes(p1.view(), p2.view(), 0.0).unwrap(), p2);
        assert_eq!(hybrid_prototypes(p1.view(), p2.view(), 0.5).unwrap(), array![[1.0, 1.0]]);
        assert!(matches!(hybrid_prototypes(p1.view(), p2.view(), 1.5), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(hybrid_prototypes(p1.view(), p2.view(), -0.1), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn backward_spreads_evenly() {
        let g = array![[3.0, 6.0]];
        let d = class_prototypes_backward(g.view(), &[0, 0, 0], 3);
        assert_eq!(d, array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]);
    }
}
