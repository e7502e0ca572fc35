//! Loss terms of the meta-training objective, each with its analytic gradient.
//!
//! All matrices are row-major with one sample (or one class) per row. The
//! `*_grad` functions return the loss value together with the gradient with
//! respect to each differentiable input; the plain functions return the value
//! only and share the same code path.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the inter-class denominator is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterDenominator {
    /// Negatives only: `sum_v sum_{j != i} exp(cos(P1_i, Pv_j) / kappa)`.
    /// The loss is unbounded below and its gradient never saturates.
    NegativesOnly,
    /// Negatives plus the positive pair, as in InfoNCE.
    #[default]
    WithPositive,
}

/// Normalisation of the prediction rows inside the forgetting cosine term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForgetNorm {
    /// Each row by its own L2 norm, so every term is a row cosine.
    #[default]
    Row,
    /// Both matrices by their global Frobenius norm.
    Global,
}

/// Which prototypes the cross-entropy term classifies against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CePrototypes {
    /// Each view's queries against that view's prototypes, averaged over views.
    #[default]
    PerView,
    /// Both views' queries against the hybrid prototypes, averaged over views.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Inter-class temperature.
    pub kappa: f64,
    /// Intra-class temperature.
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Additive offset of the forgetting term.
    pub delta: f64,
    /// Lower clamp for the cosine inside the forgetting logarithm.
    pub cos_floor: f64,
    pub inter_denominator: InterDenominator,
    pub forget_norm: ForgetNorm,
    pub ce_prototypes: CePrototypes,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kappa: 0.1,
            tau: 0.1,
            lambda1: 2.0,
            lambda2: 1.0,
            delta: 0.1,
            cos_floor: 1e-6,
            inter_denominator: InterDenominator::WithPositive,
            forget_norm: ForgetNorm::Row,
            ce_prototypes: CePrototypes::PerView,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.tau > 0.0) {
            return Err(Error::invalid(format!(
                "temperatures must be positive (kappa={}, tau={})",
                self.kappa, self.tau
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::invalid(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.cos_floor > 0.0 && self.cos_floor < 1.0) {
            return Err(Error::invalid(format!("cos_floor must lie in (0, 1), got {}", self.cos_floor)));
        }
        if !(self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::invalid("loss weights must be finite"));
        }
        Ok(())
    }
}

/// `N x Q` matrix whose entry `(n, q)` is the probability the classifier
/// assigns to class `n` for the `q`-th query of class `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    values: Array2<f64>,
}

impl PredictionMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("prediction entry {bad} outside [0, 1]")));
        }
        Ok(PredictionMatrix { values })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn n_way(&self) -> usize {
        self.values.nrows()
    }

    pub fn q_query(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Value and gradients of a loss with two matrix arguments.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub d_first: Array2<f64>,
    pub d_second: Array2<f64>,
}

pub fn cosine_sim(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine and its gradients with respect to both arguments.
fn cosine_grad(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let raw = a.dot(&b) / (na * nb);
    let da = &b / (na * nb) - &a * (raw / (na * na));
    let db = &a / (na * nb) - &b * (raw / (nb * nb));
    Ok((raw.clamp(-1.0, 1.0), da, db))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

fn check_same_width(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape(format!("embedding widths {} and {} differ", a.ncols(), b.ncols())));
    }
    Ok(())
}

fn check_labels(labels: &[usize], rows: usize, n_way: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape(format!("{rows} embeddings but {} labels", labels.len())));
    }
    match labels.iter().find(|&&l| l >= n_way) {
        Some(&label) => Err(Error::LabelOutOfRange { label, n_way }),
        None => Ok(()),
    }
}

pub fn inter_class_loss(p1: ArrayView2<f64>, p2: ArrayView2<f64>, kappa: f64) -> Result<f64> {
    Ok(inter_class_loss_grad(p1, p2, kappa, InterDenominator::NegativesOnly)?.value)
}

/// Prototype contrast between the two views.
///
/// For each class `i` the positive is `cos(P1_i, P2_i)`; the denominator sums
/// `exp(cos(P1_i, Pv_j) / kappa)` over both views `v` and every `j != i`
/// (plus the positive itself under [`InterDenominator::WithPositive`]). The loss is
/// the sum over classes of the negative log ratio; the negatives-only form can
/// go negative.
pub fn inter_class_loss_grad(
    p1: ArrayView2<f64>,
    p2: ArrayView2<f64>,
    kappa: f64,
    denominator: InterDenominator,
) -> Result<LossGrad> {
    if !(kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    if p1.dim() != p2.dim() {
        return Err(Error::shape(format!("prototype shapes {:?} and {:?} differ", p1.dim(), p2.dim())));
    }
    let n = p1.nrows();
    if n < 2 {
        return Err(Error::invalid(format!("inter-class loss needs at least 2 classes, got {n}")));
    }
    let views = [p1, p2];
    let mut d = [Array2::<f64>::zeros(p1.dim()), Array2::<f64>::zeros(p1.dim())];
    let mut value = 0.0;
    for i in 0..n {
        let anchor = p1.row(i);
        let (pos, dpos_a, dpos_b) = cosine_grad(anchor, p2.row(i))?;

        // (view, class, cosine, d/d anchor, d/d other)
        let mut terms = Vec::with_capacity(2 * n);
        for (v, view) in views.iter().enumerate() {
            for j in (0..n).filter(|&j| j != i) {
                let (c, da, db) = cosine_grad(anchor, view.row(j))?;
                terms.push((v, j, c, da, db));
            }
        }
        let mut logits: Vec<f64> = terms.iter().map(|t| t.2 / kappa).collect();
        if denominator == InterDenominator::WithPositive {
            logits.push(pos / kappa);
        }
        value += log_sum_exp(&logits) - pos / kappa;

        let weights = softmax(&logits);
        let mut pos_coeff = -1.0 / kappa;
        if denominator == InterDenominator::WithPositive {
            pos_coeff += weights[terms.len()] / kappa;
        }
        d[0].row_mut(i).scaled_add(pos_coeff, &dpos_a);
        d[1].row_mut(i).scaled_add(pos_coeff, &dpos_b);
        for ((v, j, _, da, db), w) in terms.iter().zip(&weights) {
            let coeff = w / kappa;
            d[0].row_mut(i).scaled_add(coeff, da);
            d[*v].row_mut(*j).scaled_add(coeff, db);
        }
    }
    let [d_first, d_second] = d;
    Ok(LossGrad { value, d_first, d_second })
}

pub fn intra_class_loss(query: ArrayView2<f64>, labels: &[usize], hybrid: ArrayView2<f64>, tau: f64) -> Result<f64> {
    Ok(intra_class_loss_grad(query, labels, hybrid, tau)?.value)
}

/// Mean over queries of `-log softmax_y(cos(x, P~_n) / tau)`.
pub fn intra_class_loss_grad(
    query: ArrayView2<f64>,
    labels: &[usize],
    hybrid: ArrayView2<f64>,
    tau: f64,
) -> Result<LossGrad> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    let n_way = hybrid.nrows();
    check_same_width(query, hybrid)?;
    check_labels(labels, query.nrows(), n_way)?;
    if query.nrows() == 0 {
        return Err(Error::shape("no queries"));
    }
    let m = query.nrows() as f64;
    let mut d_query = Array2::<f64>::zeros(query.dim());
    let mut d_protos = Array2::<f64>::zeros(hybrid.dim());
    let mut value = 0.0;
    for (qi, (x, &y)) in query.rows().into_iter().zip(labels).enumerate() {
        let mut cos = Vec::with_capacity(n_way);
        let mut grads = Vec::with_capacity(n_way);
        for p in hybrid.rows() {
            let (c, dx, dp) = cosine_grad(x, p)?;
            cos.push(c / tau);
            grads.push((dx, dp));
        }
        value += log_sum_exp(&cos) - cos[y];
        for (n, (prob, (dx, dp))) in softmax(&cos).into_iter().zip(&grads).enumerate() {
            let coeff = (prob - f64::from(u8::from(n == y))) / (tau * m);
            d_query.row_mut(qi).scaled_add(coeff, dx);
            d_protos.row_mut(n).scaled_add(coeff, dp);
        }
    }
    Ok(LossGrad { value: value / m, d_first: d_query, d_second: d_protos })
}

/// Column of each query inside its class row, erroring on ragged classes.
fn query_columns(labels: &[usize], n_way: usize) -> Result<(usize, Vec<usize>)> {
    let mut counts = vec![0usize; n_way];
    let mut cols = Vec::with_capacity(labels.len());
    for &l in labels {
        let c = counts.get_mut(l).ok_or(Error::LabelOutOfRange { label: l, n_way })?;
        cols.push(*c);
        *c += 1;
    }
    let q = counts.first().copied().unwrap_or(0);
    if let Some((class, &found)) = counts.iter().enumerate().find(|(_, &c)| c != q) {
        return Err(Error::LabelCount { class, expected: q, found });
    }
    Ok((q, cols))
}

fn neg_sq_dist_logits(x: ArrayView1<f64>, protos: ArrayView2<f64>) -> Vec<f64> {
    protos
        .rows()
        .into_iter()
        .map(|p| -x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .collect()
}

/// Accumulates the gradient of the squared-distance logits `l_m = -|x - P_m|^2`.
fn push_logit_grads(
    x: ArrayView1<f64>,
    protos: ArrayView2<f64>,
    d_logits: &[f64],
    mut d_x: ndarray::ArrayViewMut1<f64>,
    d_protos: &mut Array2<f64>,
) {
    for (m, (p, &g)) in protos.rows().into_iter().zip(d_logits).enumerate() {
        if g == 0.0 {
            continue;
        }
        let diff = &x - &p;
        d_x.scaled_add(-2.0 * g, &diff);
        d_protos.row_mut(m).scaled_add(2.0 * g, &diff);
    }
}

/// Per-query true-class probabilities of the euclidean softmax classifier,
/// arranged as an `N x Q` matrix.
pub fn prediction_matrix(query: ArrayView2<f64>, labels: &[usize], protos: ArrayView2<f64>) -> Result<PredictionMatrix> {
    check_same_width(query, protos)?;
    check_labels(labels, query.nrows(), protos.nrows())?;
    let (q, cols) = query_columns(labels, protos.nrows())?;
    let mut values = Array2::<f64>::zeros((protos.nrows(), q));
    for ((x, &y), &col) in query.rows().into_iter().zip(labels).zip(&cols) {
        let logits = neg_sq_dist_logits(x, protos);
        values[(y, col)] = (logits[y] - log_sum_exp(&logits)).exp().min(1.0);
    }
    PredictionMatrix::new(values)
}

/// Gradient of `sum(grad * A)` with respect to the queries and prototypes
/// that produced the prediction matrix `A`.
pub fn prediction_matrix_backward(
    query: ArrayView2<f64>,
    labels: &[usize],
    protos: ArrayView2<f64>,
    grad: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_same_width(query, protos)?;
    check_labels(labels, query.nrows(), protos.nrows())?;
    let (q, cols) = query_columns(labels, protos.nrows())?;
    if grad.dim() != (protos.nrows(), q) {
        return Err(Error::shape(format!("gradient shape {:?}, expected {:?}", grad.dim(), (protos.nrows(), q))));
    }
    let mut d_query = Array2::<f64>::zeros(query.dim());
    let mut d_protos = Array2::<f64>::zeros(protos.dim());
    for (qi, ((x, &y), &col)) in query.rows().into_iter().zip(labels).zip(&cols).enumerate() {
        let g = grad[(y, col)];
        if g == 0.0 {
            continue;
        }
        let probs = softmax(&neg_sq_dist_logits(x, protos));
        let py = probs[y];
        let d_logits: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(m, &pm)| g * py * (f64::from(u8::from(m == y)) - pm))
            .collect();
        push_logit_grads(x, protos, &d_logits, d_query.row_mut(qi), &mut d_protos);
    }
    Ok((d_query, d_protos))
}

pub fn forget_loss(a: &PredictionMatrix, h: &PredictionMatrix, delta: f64, cos_floor: f64) -> Result<f64> {
    Ok(forget_loss_grad(a, h, delta, cos_floor, ForgetNorm::Row)?.0)
}

/// Against-forgetting loss and its gradient with respect to `a`.
///
/// `(1/N) sum_n [ -log clamp(cos_n, floor, 1) - p_n log p_n ] + delta`, where
/// `cos_n` compares row `n` of the current and historical matrices and
/// `p_n = sum(A_n) / sum(A)`. `h` is treated as a constant. Two all-zero rows
/// count as aligned; a zero row facing a nonzero one contributes `-log(floor)`.
/// Neither case has a gradient. `0 log 0 = 0`.
pub fn forget_loss_grad(
    a: &PredictionMatrix,
    h: &PredictionMatrix,
    delta: f64,
    cos_floor: f64,
    norm: ForgetNorm,
) -> Result<(f64, Array2<f64>)> {
    if a.shape() != h.shape() {
        return Err(Error::shape(format!("A is {:?} but H is {:?}", a.shape(), h.shape())));
    }
    if !(cos_floor > 0.0 && cos_floor <= 1.0) {
        return Err(Error::invalid(format!("cos_floor must lie in (0, 1], got {cos_floor}")));
    }
    let (av, hv) = (a.values(), h.values());
    let n = av.nrows();
    if n == 0 {
        return Err(Error::shape("empty prediction matrix"));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Array2::<f64>::zeros(av.dim());
    let mut value = 0.0;

    let frob = |m: ArrayView2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (global_a, global_h) = (frob(av), frob(hv));
    // Coefficient multiplying -A/|A|^2 in the global-norm gradient.
    let mut global_shrink = 0.0;
    for r in 0..n {
        let (ar, hr) = (av.row(r), hv.row(r));
        let (na, nh) = match norm {
            ForgetNorm::Row => (ar.dot(&ar).sqrt(), hr.dot(&hr).sqrt()),
            ForgetNorm::Global => (global_a, global_h),
        };
        if na == 0.0 && nh == 0.0 {
            continue;
        }
        if na == 0.0 || nh == 0.0 {
            value -= inv_n * cos_floor.ln();
            continue;
        }
        let cos = ar.dot(&hr) / (na * nh);
        if cos < cos_floor {
            value -= inv_n * cos_floor.ln();
            continue;
        }
        value -= inv_n * cos.min(1.0).ln();
        // d(-log cos)/dA, scaled by 1/N.
        let w = -inv_n / cos;
        grad.row_mut(r).scaled_add(w / (na * nh), &hr);
        match norm {
            ForgetNorm::Row => grad.row_mut(r).scaled_add(-w * cos / (na * na), &ar),
            ForgetNorm::Global => global_shrink += w * cos,
        }
    }
    if norm == ForgetNorm::Global && global_shrink != 0.0 {
        grad.scaled_add(-global_shrink / (global_a * global_a), &av);
    }

    let sums: Vec<f64> = av.sum_axis(Axis(1)).to_vec();
    let total: f64 = sums.iter().sum();
    if total > 0.0 {
        let shares: Vec<f64> = sums.iter().map(|s| s / total).collect();
        // g_n = d(-p log p)/dp
        let g: Vec<f64> = shares.iter().map(|&p| if p > 0.0 { -(p.ln() + 1.0) } else { 0.0 }).collect();
        for &p in &shares {
            if p > 0.0 {
                value -= inv_n * p * p.ln();
            }
        }
        let mean_g: f64 = g.iter().zip(&shares).map(|(g, p)| g * p).sum();
        for (r, gr) in g.iter().enumerate() {
            let coeff = inv_n * (gr - mean_g) / total;
            grad.row_mut(r).mapv_inplace(|v| v + coeff);
        }
    }
    Ok((value + delta, grad))
}

pub fn episode_ce_loss(query: ArrayView2<f64>, labels: &[usize], protos: ArrayView2<f64>) -> Result<f64> {
    Ok(episode_ce_loss_grad(query, labels, protos)?.value)
}

/// Mean cross-entropy of the softmax over negative squared euclidean distances.
pub fn episode_ce_loss_grad(query: ArrayView2<f64>, labels: &[usize], protos: ArrayView2<f64>) -> Result<LossGrad> {
    check_same_width(query, protos)?;
    check_labels(labels, query.nrows(), protos.nrows())?;
    if query.nrows() == 0 {
        return Err(Error::shape("no queries"));
    }
    let m = query.nrows() as f64;
    let mut d_query = Array2::<f64>::zeros(query.dim());
    let mut d_protos = Array2::<f64>::zeros(protos.dim());
    let mut value = 0.0;
    for (qi, (x, &y)) in query.rows().into_iter().zip(labels).enumerate() {
        let logits = neg_sq_dist_logits(x, protos);
        value += log_sum_exp(&logits) - logits[y];
        let d_logits: Vec<f64> = softmax(&logits)
            .into_iter()
            .enumerate()
            .map(|(k, p)| (p - f64::from(u8::from(k == y))) / m)
            .collect();
        push_logit_grads(x, protos, &d_logits, d_query.row_mut(qi), &mut d_protos);
    }
    Ok(LossGrad { value: value / m, d_first: d_query, d_second: d_protos })
}

/// Individual loss terms of one step; disabled terms are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ce: f64,
    pub inter: f64,
    pub intra: f64,
    pub forget: f64,
}

/// `ce + lambda1 * inter + lambda2 * intra + forget`.
pub fn total_loss(terms: &LossTerms, cfg: &LossConfig) -> Result<f64> {
    for (name, v) in [("ce", terms.ce), ("inter", terms.inter), ("intra", terms.intra), ("forget", terms.forget)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} term is {v}")));
        }
    }
    Ok(terms.ce + cfg.lambda1 * terms.inter + cfg.lambda2 * terms.intra + terms.forget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    #[test]
    fn cosine_basics() {
        let e1 = array![1.0, 0.0];
        assert_eq!(cosine_sim(e1.view(), array![1.0, 0.0].view()).unwrap(), 1.0);
        assert_eq!(cosine_sim(e1.view(), array![0.0, 1.0].view()).unwrap(), 0.0);
        assert_eq!(cosine_sim(e1.view(), array![-1.0, 0.0].view()).unwrap(), -1.0);
        assert!(matches!(cosine_sim(e1.view(), array![0.0, 0.0].view()), Err(Error::ZeroVector)));
    }

    #[test]
    fn inter_identity_case_is_negative() {
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let v = inter_class_loss(p.view(), p.view(), 1.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (2f64.ln() - 1.0), epsilon = 1e-12);
        assert!(v < 0.0);
    }

    #[test]
    fn inter_errors() {
        let one = array![[1.0, 0.0]];
        assert!(matches!(inter_class_loss(one.view(), one.view(), 1.0), Err(Error::InvalidArgument(_))));
        let two = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(inter_class_loss(two.view(), two.view(), 0.0).is_err());
        assert!(inter_class_loss(two.view(), two.view(), -1.0).is_err());
    }

    #[test]
    fn inter_is_scale_invariant() {
        let p1 = array![[1.0, 0.2, -0.3], [0.1, 1.0, 0.5], [-0.7, 0.3, 1.1]];
        let p2 = array![[0.9, 0.1, -0.2], [0.3, 0.8, 0.4], [-0.5, 0.6, 1.0]];
        let a = inter_class_loss(p1.view(), p2.view(), 0.1).unwrap();
        let b = inter_class_loss((&p1 * 3.0).view(), (&p2 * 3.0).view(), 0.1).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn infonce_variant_is_nonnegative() {
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let g = inter_class_loss_grad(p.view(), p.view(), 1.0, InterDenominator::WithPositive).unwrap();
        // -log(e / (e + 2)) per class
        let per = -(1f64.exp() / (1f64.exp() + 2.0)).ln();
        assert_abs_diff_eq!(g.value, 2.0 * per, epsilon = 1e-12);
    }

    #[test]
    fn intra_closed_forms() {
        let q = array![[1.0, 0.0]];
        let protos = array![[1.0, 0.0], [0.0, 1.0]];
        let v = intra_class_loss(q.view(), &[0], protos.view(), 1.0).unwrap();
        assert_abs_diff_eq!(v, -(1f64.exp() / (1f64.exp() + 1.0)).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.3133, epsilon = 1e-4);

        let same = array![[0.3, -0.2], [0.3, -0.2], [0.3, -0.2]];
        let qs = array![[1.0, 2.0], [-3.0, 0.5]];
        let v = intra_class_loss(qs.view(), &[2, 0], same.view(), 0.1).unwrap();
        assert_abs_diff_eq!(v, 3f64.ln(), epsilon = 1e-12);

        assert!(matches!(
            intra_class_loss(q.view(), &[2], protos.view(), 1.0),
            Err(Error::LabelOutOfRange { label: 2, n_way: 2 })
        ));
    }

    #[test]
    fn prediction_matrix_cases() {
        let protos = array![[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]];
        let q = array![[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]];
        let a = prediction_matrix(q.view(), &[0, 1, 2], protos.view()).unwrap();
        assert_eq!(a.shape(), (3, 1));
        assert!(a.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let same = Array2::from_elem((4, 2), 0.5);
        let q = array![[1.0, 2.0], [3.0, 4.0], [0.0, 1.0], [5.0, 5.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
        let a = prediction_matrix(q.view(), &[0, 1, 2, 3, 0, 1, 2, 3], same.view()).unwrap();
        assert_eq!(a.shape(), (4, 2));
        assert!(a.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        assert!(matches!(
            prediction_matrix(q.view(), &[0, 0, 1, 1, 2, 2, 3, 0], same.view()),
            Err(Error::LabelCount { .. })
        ));
    }

    #[test]
    fn forget_closed_forms() {
        let one_class = PredictionMatrix::new(array![[0.9, 0.7, 0.8], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(forget_loss(&one_class, &one_class, 0.1, 1e-6).unwrap(), 0.1, epsilon = 1e-12);

        let n = 5usize;
        let uniform = PredictionMatrix::new(Array2::from_elem((n, 15), 0.4)).unwrap();
        let v = forget_loss(&uniform, &uniform, 0.1, 1e-6).unwrap();
        assert_abs_diff_eq!(v, (n as f64).ln() / n as f64 + 0.1, epsilon = 1e-12);

        // a zero row against a nonzero one hits the floor
        let h = PredictionMatrix::new(array![[0.9, 0.7, 0.8], [0.1, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let v = forget_loss(&one_class, &h, 0.0, 1e-6).unwrap();
        assert_abs_diff_eq!(v, -(1e-6f64).ln() / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn forget_shape_mismatch() {
        let a = PredictionMatrix::new(Array2::from_elem((2, 3), 0.5)).unwrap();
        let h = PredictionMatrix::new(Array2::from_elem((3, 2), 0.5)).unwrap();
        assert!(matches!(forget_loss(&a, &h, 0.1, 1e-6), Err(Error::Shape(_))));
        assert!(PredictionMatrix::new(array![[1.5]]).is_err());
    }

    #[test]
    fn ce_cases() {
        let protos = array![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let q = array![[0.0, 0.0]];
        let v = episode_ce_loss(q.view(), &[0], protos.view()).unwrap();
        assert!((0.0..1e-40).contains(&v));
        let same = Array2::from_elem((5, 3), 1.0);
        let q = array![[0.0, 2.0, 1.0], [5.0, 5.0, 5.0]];
        assert_abs_diff_eq!(episode_ce_loss(q.view(), &[3, 1], same.view()).unwrap(), 5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn total_loss_arithmetic() {
        let cfg = LossConfig::default();
        let t = |ce, inter, intra, forget| LossTerms { ce, inter, intra, forget };
        assert_eq!(total_loss(&t(1.0, 0.0, 0.0, 0.0), &cfg).unwrap(), 1.0);
        assert_eq!(total_loss(&t(0.0, 1.0, 1.0, 0.0), &cfg).unwrap(), 3.0);
        assert_abs_diff_eq!(total_loss(&t(0.5, 0.2, 0.3, 0.1), &cfg).unwrap(), 1.3, epsilon = 1e-12);
        assert!(matches!(total_loss(&t(f64::NAN, 0.0, 0.0, 0.0), &cfg), Err(Error::NonFinite(_))));
        assert!(total_loss(&t(0.0, f64::INFINITY, 0.0, 0.0), &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        LossConfig::default().validate().unwrap();
        assert!(LossConfig { kappa: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { tau: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { cos_floor: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { delta: -0.1, ..Default::default() }.validate().is_err());
    }
}
