//! Scalar-loop reference implementations of the losses, written directly from
//! their formulas with plain `Vec`s and no shared helpers.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn to_array(m: &Mat) -> Array2<f64> {
    let cols = m.first().map_or(0, Vec::len);
    Array2::from_shape_fn((m.len(), cols), |(i, j)| m[i][j])
}

pub fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

/// Labels `0..n` each repeated `per` times, in class-grouped order.
pub fn grouped_labels(n: usize, per: usize) -> Vec<usize> {
    (0..n).flat_map(|c| std::iter::repeat_n(c, per)).collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

pub fn inter(p1: &Mat, p2: &Mat, kappa: f64, include_positive: bool) -> f64 {
    let n = p1.len();
    let mut loss = 0.0;
    for i in 0..n {
        let num = (cos(&p1[i], &p2[i]) / kappa).exp();
        let mut den = 0.0;
        for view in [p1, p2] {
            for j in 0..n {
                if j != i {
                    den += (cos(&p1[i], &view[j]) / kappa).exp();
                }
            }
        }
        if include_positive {
            den += num;
        }
        loss -= (num / den).ln();
    }
    loss
}

pub fn intra(query: &Mat, labels: &[usize], hybrid: &Mat, tau: f64) -> f64 {
    let mut loss = 0.0;
    for (x, &y) in query.iter().zip(labels) {
        let mut den = 0.0;
        for p in hybrid {
            den += (cos(x, p) / tau).exp();
        }
        loss -= ((cos(x, &hybrid[y]) / tau).exp() / den).ln();
    }
    loss / query.len() as f64
}

fn class_probs(x: &[f64], protos: &Mat) -> Vec<f64> {
    let e: Vec<f64> = protos.iter().map(|p| (-sq_dist(x, p)).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn episode_ce(query: &Mat, labels: &[usize], protos: &Mat) -> f64 {
    let mut loss = 0.0;
    for (x, &y) in query.iter().zip(labels) {
        loss -= class_probs(x, protos)[y].ln();
    }
    loss / query.len() as f64
}

/// `A[n][q]`: probability of the true class for the `q`-th query of class `n`.
pub fn prediction(query: &Mat, labels: &[usize], protos: &Mat) -> Mat {
    let n = protos.len();
    let q = labels.len() / n;
    let mut a = vec![vec![0.0; q]; n];
    let mut seen = vec![0; n];
    for (x, &y) in query.iter().zip(labels) {
        a[y][seen[y]] = class_probs(x, protos)[y];
        seen[y] += 1;
    }
    a
}

pub fn forget(a: &Mat, h: &Mat, delta: f64, floor: f64) -> f64 {
    let n = a.len();
    let total: f64 = a.iter().flatten().sum();
    let mut loss = 0.0;
    for r in 0..n {
        let c = cos(&a[r], &h[r]);
        loss += -(c.clamp(floor, 1.0)).ln();
        let p = a[r].iter().sum::<f64>() / total;
        if p > 0.0 {
            loss -= p * p.ln();
        }
    }
    loss / n as f64 + delta
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Worst relative error of each loss against its oracle over `instances`
/// random episodes (N <= 5, K <= 5, Q <= 15, d <= 16).
#[derive(Debug, Default, Clone, Copy)]
pub struct SweepErrors {
    pub inter: f64,
    pub intra: f64,
    pub forget: f64,
    pub ce: f64,
    pub prediction: f64,
}

impl SweepErrors {
    pub fn max(&self) -> f64 {
        [self.inter, self.intra, self.forget, self.ce, self.prediction].into_iter().fold(0.0, f64::max)
    }
}

pub fn oracle_sweep(instances: usize, seed: u64) -> SweepErrors {
    use fsl::losses::{self, PredictionMatrix};
    use fsl::prototypes::class_prototypes;

    let mut rng = fsl::rng::seeded(seed);
    let mut worst = SweepErrors::default();
    for _ in 0..instances {
        let n = rng.random_range(2..=5);
        let k = rng.random_range(1..=5);
        let q = rng.random_range(1..=15);
        let d = rng.random_range(2..=16);
        let kappa = rng.random_range(0.05..1.0);
        let tau = rng.random_range(0.05..1.0);
        let delta = rng.random_range(0.0..0.5);

        let support = random_mat(&mut rng, n * k, d, 1.0);
        let s_labels = grouped_labels(n, k);
        let protos = class_prototypes(to_array(&support).view(), &s_labels, n, k).unwrap();
        let p1: Mat = protos.rows().into_iter().map(|r| r.to_vec()).collect();
        let p2 = random_mat(&mut rng, n, d, 1.0);
        let hybrid = random_mat(&mut rng, n, d, 1.0);
        let query = random_mat(&mut rng, n * q, d, 1.0);
        let mut q_labels = grouped_labels(n, q);
        // Shuffle query order; columns follow order of appearance within a class.
        for i in (1..q_labels.len()).rev() {
            let j = rng.random_range(0..=i);
            q_labels.swap(i, j);
        }

        let got = losses::inter_class_loss(to_array(&p1).view(), to_array(&p2).view(), kappa).unwrap();
        worst.inter = worst.inter.max(rel_err(got, inter(&p1, &p2, kappa, false)));

        let got = losses::intra_class_loss(to_array(&query).view(), &q_labels, to_array(&hybrid).view(), tau).unwrap();
        worst.intra = worst.intra.max(rel_err(got, intra(&query, &q_labels, &hybrid, tau)));

        let got = losses::episode_ce_loss(to_array(&query).view(), &q_labels, to_array(&p2).view()).unwrap();
        worst.ce = worst.ce.max(rel_err(got, episode_ce(&query, &q_labels, &p2)));

        let a = losses::prediction_matrix(to_array(&query).view(), &q_labels, to_array(&p2).view()).unwrap();
        let expected = prediction(&query, &q_labels, &p2);
        for (r, row) in expected.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                worst.prediction = worst.prediction.max(rel_err(a.values()[(r, c)], v));
            }
        }

        let a_mat: Mat = (0..n).map(|_| (0..q).map(|_| rng.random_range(0.01..1.0)).collect()).collect();
        let h_mat: Mat = (0..n).map(|_| (0..q).map(|_| rng.random_range(0.01..1.0)).collect()).collect();
        let got = losses::forget_loss(
            &PredictionMatrix::new(to_array(&a_mat)).unwrap(),
            &PredictionMatrix::new(to_array(&h_mat)).unwrap(),
            delta,
            1e-6,
        )
        .unwrap();
        worst.forget = worst.forget.max(rel_err(got, forget(&a_mat, &h_mat, delta, 1e-6)));
    }
    worst
}
