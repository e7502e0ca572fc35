//! Episodic meta-training: the joint objective, one optimization step, the
//! epoch loop with validation, and a finite-difference gradient check.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, Axis};
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheEntry, ReplayCache};
use crate::encoder::{split_rows, EncoderState, Tape};
use crate::episodes::{augment_episode, sample_episode, AugPolicy, DatasetSplit, Episode, MultiViewEpisode};
use crate::error::{Error, Result};
use crate::eval;
use crate::losses::{self, CePrototypes, LossConfig, LossTerms, PredictionMatrix};
use crate::optim::{Sgd, SgdConfig};
use crate::prototypes::{class_prototypes, class_prototypes_backward, hybrid_prototypes};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toggles {
    pub use_inter: bool,
    pub use_intra: bool,
    pub use_forget: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles { use_inter: true, use_intra: true, use_forget: true }
    }
}

impl Toggles {
    pub const NONE: Toggles = Toggles { use_inter: false, use_intra: false, use_forget: false };
}

/// Named loss-term combinations of the ablation study, plus the
/// cross-entropy-only baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    /// intra + inter
    I,
    /// inter + forget
    II,
    /// intra + forget
    III,
    /// forget only
    IV,
    /// all three terms
    Full,
    /// cross-entropy only
    Baseline,
}

impl Ablation {
    pub const TABLE: [Ablation; 5] = [Ablation::I, Ablation::II, Ablation::III, Ablation::IV, Ablation::Full];

    pub fn toggles(self) -> Toggles {
        let t = |use_inter, use_intra, use_forget| Toggles { use_inter, use_intra, use_forget };
        match self {
            Ablation::I => t(true, true, false),
            Ablation::II => t(true, false, true),
            Ablation::III => t(false, true, true),
            Ablation::IV => t(false, false, true),
            Ablation::Full => t(true, true, true),
            Ablation::Baseline => Toggles::NONE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::I => "I",
            Ablation::II => "II",
            Ablation::III => "III",
            Ablation::IV => "IV",
            Ablation::Full => "full",
            Ablation::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" => Ok(Ablation::I),
            "ii" => Ok(Ablation::II),
            "iii" => Ok(Ablation::III),
            "iv" => Ok(Ablation::IV),
            "full" => Ok(Ablation::Full),
            "baseline" | "ce" => Ok(Ablation::Baseline),
            other => Err(Error::invalid(format!("unknown ablation setting `{other}` (I, II, III, IV, full, baseline)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub episodes_per_epoch: usize,
    pub epochs: usize,
    pub optimizer: SgdConfig,
    pub loss: LossConfig,
    pub cache: CacheConfig,
    pub toggles: Toggles,
    /// Mixing weight of the hybrid prototypes.
    pub alpha: f64,
    pub augmentation: AugPolicy,
    /// Validation episodes after each epoch; 0 disables validation.
    pub val_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_way: 5,
            k_shot: 1,
            q_query: 15,
            episodes_per_epoch: 100,
            epochs: 20,
            optimizer: SgdConfig::default(),
            loss: LossConfig::default(),
            cache: CacheConfig::default(),
            toggles: Toggles::default(),
            alpha: 0.5,
            augmentation: AugPolicy::vector_default(0.5, (0.8, 1.2)),
            val_episodes: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot == 0 || self.q_query == 0 {
            return Err(Error::invalid(format!(
                "need n_way >= 2, k_shot >= 1 and q_query >= 1 (got {}, {}, {})",
                self.n_way, self.k_shot, self.q_query
            )));
        }
        if self.episodes_per_epoch == 0 {
            return Err(Error::invalid("episodes_per_epoch must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        self.optimizer.validate()?;
        self.loss.validate()?;
        self.cache.validate()
    }

    pub fn total_steps(&self) -> u64 {
        (self.epochs * self.episodes_per_epoch) as u64
    }
}

/// What one meta-training step logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub ce: f64,
    pub inter: f64,
    pub intra: f64,
    pub forget: f64,
    pub total: f64,
    pub accuracy: f64,
    pub cache_size: usize,
    pub replayed: bool,
}

/// Objective value and parameter gradient for fixed inputs.
#[derive(Debug, Clone)]
pub struct Objective {
    pub terms: LossTerms,
    pub total: f64,
    pub accuracy: f64,
    pub grads: Vec<f64>,
    /// View-1 prediction matrix of the current episode (its future history).
    pub current: PredictionMatrix,
    /// Prediction matrix of the replayed entry under the current parameters.
    pub replayed: Option<PredictionMatrix>,
}

struct Encoded {
    emb: Array2<f64>,
    tape: Tape,
    n_support: usize,
}

fn encode_episode(state: &EncoderState, ep: &Episode) -> Result<Encoded> {
    let stacked = concatenate![Axis(0), ep.support.view(), ep.query.view()];
    let (emb, tape) = state.forward(stacked.view())?;
    Ok(Encoded { emb, tape, n_support: ep.support.nrows() })
}

fn finite(term: &'static str, v: f64, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { term, step })
    }
}

fn check_episode(ep: &Episode) -> Result<()> {
    if ep.n_way < 2 {
        return Err(Error::invalid("episodes need at least 2 classes"));
    }
    if ep.support.nrows() != ep.n_way * ep.k_shot || ep.query.nrows() != ep.n_way * ep.q_query {
        return Err(Error::shape("episode arrays do not match its n_way/k_shot/q_query"));
    }
    Ok(())
}

/// Evaluates the joint objective and its gradient on fixed augmented views
/// and an optional replayed cache entry. Disabled terms contribute exactly 0.
pub fn objective(
    state: &EncoderState,
    views: &MultiViewEpisode,
    replay: Option<&CacheEntry>,
    cfg: &TrainConfig,
    step: u64,
) -> Result<Objective> {
    let ep = &views.view1;
    check_episode(ep)?;
    let (n, k) = (ep.n_way, ep.k_shot);
    let lc = &cfg.loss;
    let toggles = cfg.toggles;

    let enc = [encode_episode(state, &views.view1)?, encode_episode(state, &views.view2)?];
    let mut d_emb = [Array2::<f64>::zeros(enc[0].emb.dim()), Array2::<f64>::zeros(enc[1].emb.dim())];
    let mut protos = Vec::with_capacity(2);
    for (e, v) in enc.iter().zip([&views.view1, &views.view2]) {
        let (support, _) = split_rows(&e.emb, e.n_support);
        protos.push(class_prototypes(support, &v.support_labels, n, k)?);
    }
    let hybrid = hybrid_prototypes(protos[0].view(), protos[1].view(), cfg.alpha)?;
    let mut d_protos = [Array2::<f64>::zeros(protos[0].dim()), Array2::<f64>::zeros(protos[1].dim())];
    let mut d_hybrid = Array2::<f64>::zeros(hybrid.dim());
    let mut terms = LossTerms::default();
    let mut accuracy = 0.0;

    for v in 0..2 {
        let view = views.view(v);
        let (_, query) = split_rows(&enc[v].emb, enc[v].n_support);
        let target = match lc.ce_prototypes {
            CePrototypes::PerView => protos[v].view(),
            CePrototypes::Hybrid => hybrid.view(),
        };
        let g = losses::episode_ce_loss_grad(query, &view.query_labels, target)?;
        terms.ce += 0.5 * g.value;
        d_emb[v].slice_mut(s![enc[v].n_support.., ..]).scaled_add(0.5, &g.d_first);
        match lc.ce_prototypes {
            CePrototypes::PerView => d_protos[v].scaled_add(0.5, &g.d_second),
            CePrototypes::Hybrid => d_hybrid.scaled_add(0.5, &g.d_second),
        }
        let predicted = eval::nearest_prototype(query, protos[v].view());
        let correct = predicted.iter().zip(&view.query_labels).filter(|(p, l)| p == l).count();
        accuracy += 0.5 * correct as f64 / predicted.len() as f64;
    }
    finite("ce", terms.ce, step)?;

    if toggles.use_inter {
        let g = losses::inter_class_loss_grad(protos[0].view(), protos[1].view(), lc.kappa, lc.inter_denominator)?;
        terms.inter = finite("inter", g.value, step)?;
        d_protos[0].scaled_add(lc.lambda1, &g.d_first);
        d_protos[1].scaled_add(lc.lambda1, &g.d_second);
    }

    if toggles.use_intra {
        for v in 0..2 {
            let (_, query) = split_rows(&enc[v].emb, enc[v].n_support);
            let g = losses::intra_class_loss_grad(query, &views.view(v).query_labels, hybrid.view(), lc.tau)?;
            terms.intra += 0.5 * g.value;
            d_emb[v].slice_mut(s![enc[v].n_support.., ..]).scaled_add(0.5 * lc.lambda2, &g.d_first);
            d_hybrid.scaled_add(0.5 * lc.lambda2, &g.d_second);
        }
        finite("intra", terms.intra, step)?;
    }

    d_protos[0].scaled_add(cfg.alpha, &d_hybrid);
    d_protos[1].scaled_add(1.0 - cfg.alpha, &d_hybrid);

    let mut grads = vec![0.0; state.num_params()];
    for v in 0..2 {
        let view = views.view(v);
        let d_support = class_prototypes_backward(d_protos[v].view(), &view.support_labels, k);
        d_emb[v].slice_mut(s![..enc[v].n_support, ..]).scaled_add(1.0, &d_support);
        state.backward(&enc[v].tape, d_emb[v].view(), &mut grads);
    }

    let current = {
        let (_, query) = split_rows(&enc[0].emb, enc[0].n_support);
        losses::prediction_matrix(query, &views.view1.query_labels, protos[0].view())?
    };

    let mut replayed = None;
    if let (true, Some(entry)) = (toggles.use_forget, replay) {
        let rep = &entry.episode.view1;
        let e = encode_episode(state, rep)?;
        let (support, query) = split_rows(&e.emb, e.n_support);
        let p = class_prototypes(support, &rep.support_labels, rep.n_way, rep.k_shot)?;
        let a = losses::prediction_matrix(query, &rep.query_labels, p.view())?;
        let (value, d_a) = losses::forget_loss_grad(&a, &entry.history, lc.delta, lc.cos_floor, lc.forget_norm)?;
        terms.forget = finite("forget", value, step)?;
        let (d_query, d_p) = losses::prediction_matrix_backward(query, &rep.query_labels, p.view(), d_a.view())?;
        let d_support = class_prototypes_backward(d_p.view(), &rep.support_labels, rep.k_shot);
        let d_stack = concatenate![Axis(0), d_support.view(), d_query.view()];
        state.backward(&e.tape, d_stack.view(), &mut grads);
        replayed = Some(a);
    }

    let total = losses::total_loss(&terms, lc).map_err(|_| Error::NonFiniteLoss { term: "total", step })?;
    Ok(Objective { terms, total, accuracy, grads, current, replayed })
}

/// Mutable training state: encoder, optimizer, replay cache and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub state: EncoderState,
    pub optimizer: Sgd,
    pub cache: ReplayCache,
    /// Meta-training steps completed so far.
    pub meta_step: u64,
    /// Best validation accuracy and the state that reached it.
    pub best: Option<(f64, EncoderState)>,
}

impl Trainer {
    pub fn new(config: TrainConfig, init: EncoderState) -> Result<Self> {
        config.validate()?;
        init.validate()?;
        let optimizer = Sgd::new(config.optimizer, init.num_params());
        let cache = ReplayCache::new(config.cache)?;
        Ok(Trainer { config, state: init, optimizer, cache, meta_step: 0, best: None })
    }

    /// One optimization step on `episode`; augmentation and replay draws come
    /// from the step-indexed streams of `config.seed`.
    pub fn step(&mut self, episode: &Episode) -> Result<StepMetrics> {
        let step = self.meta_step;
        let cfg = &self.config;
        let views = augment_episode(episode, &cfg.augmentation, &mut rng::stream(cfg.seed, "augment", step))?;
        let replay = if cfg.toggles.use_forget && step % cfg.cache.replay_every == 0 {
            self.cache.sample_for_replay(&mut rng::stream(cfg.seed, "replay", step)).cloned()
        } else {
            None
        };
        let obj = objective(&self.state, &views, replay.as_ref(), cfg, step)?;

        self.optimizer.step(&mut self.state.params, &obj.grads);
        self.state.step += 1;
        if self.state.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence(format!("non-finite parameter after meta step {step}")));
        }
        if let (Some(entry), Some(a)) = (&replay, obj.replayed) {
            self.cache.refresh(entry.episode_id, a, step)?;
        }
        self.cache.push(CacheEntry { episode_id: views.episode_id, episode: views, history: obj.current, stage: step })?;
        self.meta_step += 1;

        Ok(StepMetrics {
            step,
            ce: obj.terms.ce,
            inter: obj.terms.inter,
            intra: obj.terms.intra,
            forget: obj.terms.forget,
            total: obj.total,
            accuracy: obj.accuracy,
            cache_size: self.cache.len(),
            replayed: replay.is_some(),
        })
    }

    /// Runs the remaining steps of the configured schedule. Episodes for step
    /// `s` come from the `"sample"` stream at index `s`; validation after each
    /// epoch uses the `"val"` stream at the epoch index.
    pub fn run(
        &mut self,
        split: &DatasetSplit,
        val: Option<&DatasetSplit>,
        sink: impl FnMut(&LogRecord) -> Result<()>,
    ) -> Result<()> {
        self.run_until(split, val, self.config.total_steps(), sink)
    }

    /// Like [`Trainer::run`] but stops once `meta_step` reaches `limit` (or the
    /// end of the schedule, whichever comes first).
    pub fn run_until(
        &mut self,
        split: &DatasetSplit,
        val: Option<&DatasetSplit>,
        limit: u64,
        mut sink: impl FnMut(&LogRecord) -> Result<()>,
    ) -> Result<()> {
        let cfg = self.config.clone();
        let per_epoch = cfg.episodes_per_epoch as u64;
        while self.meta_step < cfg.total_steps().min(limit) {
            let s = self.meta_step;
            let episode = sample_episode(split, cfg.n_way, cfg.k_shot, cfg.q_query, &mut rng::stream(cfg.seed, "sample", s))?;
            let metrics = self.step(&episode)?;
            sink(&LogRecord::Step { epoch: s / per_epoch, metrics })?;
            if (s + 1) % per_epoch == 0 {
                let epoch = s / per_epoch;
                if let (Some(val), true) = (val, cfg.val_episodes > 0) {
                    let report = eval::evaluate(
                        &self.state,
                        val,
                        cfg.n_way,
                        cfg.k_shot,
                        cfg.q_query,
                        cfg.val_episodes,
                        &mut rng::stream(cfg.seed, "val", epoch),
                    )?;
                    let improved = self.best.as_ref().is_none_or(|(b, _)| report.mean_accuracy > *b);
                    if improved {
                        self.best = Some((report.mean_accuracy, self.state.clone()));
                    }
                    sink(&LogRecord::Validation {
                        epoch,
                        step: s,
                        mean_accuracy: report.mean_accuracy,
                        ci95: report.ci95,
                        best: improved,
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Best-on-validation state, or the current state when validation never ran.
    pub fn best_state(&self) -> &EncoderState {
        self.best.as_ref().map_or(&self.state, |(_, s)| s)
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step {
        epoch: u64,
        #[serde(flatten)]
        metrics: StepMetrics,
    },
    Validation {
        epoch: u64,
        step: u64,
        mean_accuracy: f64,
        ci95: f64,
        best: bool,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_state: EncoderState,
    pub best_state: EncoderState,
    pub best_val_accuracy: Option<f64>,
    pub log: Vec<LogRecord>,
}

/// Full meta-training run from `init` on the base split.
pub fn meta_train(
    cfg: &TrainConfig,
    split: &DatasetSplit,
    val: Option<&DatasetSplit>,
    init: &EncoderState,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone(), init.clone())?;
    let mut log = Vec::new();
    trainer.run(split, val, |r| {
        log.push(r.clone());
        Ok(())
    })?;
    Ok(TrainOutcome {
        best_state: trainer.best_state().clone(),
        best_val_accuracy: trainer.best.as_ref().map(|b| b.0),
        final_state: trainer.state,
        log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub checked: usize,
}

/// Relative error floor: gradients below this magnitude are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares analytic parameter gradients of the total objective against
/// central differences with step `eps` on a random subset of at least 200
/// parameters (all of them when the encoder is smaller).
///
/// The episode is augmented once; when the forgetting term is enabled the
/// same views are used as the replayed entry, paired with a random history.
pub fn grad_check(state: &EncoderState, episode: &Episode, cfg: &TrainConfig, eps: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let views = augment_episode(episode, &cfg.augmentation, rng)?;
    let replay = if cfg.toggles.use_forget {
        let h = Array2::from_shape_fn((episode.n_way, episode.q_query), |_| rng.random_range(0.05..1.0));
        Some(CacheEntry {
            episode_id: views.episode_id,
            episode: views.clone(),
            history: PredictionMatrix::new(h)?,
            stage: 0,
        })
    } else {
        None
    };
    let analytic = objective(state, &views, replay.as_ref(), cfg, 0)?;
    let count = state.num_params().min(256);
    let picks = index::sample(rng, state.num_params(), count).into_vec();

    let mut probe = state.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_param: 0, checked: count };
    for i in picks {
        let orig = probe.params[i];
        probe.params[i] = orig + eps;
        let up = objective(&probe, &views, replay.as_ref(), cfg, 0)?.total;
        probe.params[i] = orig - eps;
        let down = objective(&probe, &views, replay.as_ref(), cfg, 0)?.total;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.grads[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_param = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::episodes::{make_synthetic_dataset, SplitSet, SyntheticParams};

    fn splits() -> SplitSet {
        let full = make_synthetic_dataset(&SyntheticParams {
            num_classes: 12,
            dim: 6,
            per_class: 12,
            class_sep: 4.0,
            intra_std: 1.0,
            seed: 2,
        })
        .unwrap();
        SplitSet::partition(&full, [8, 2, 2]).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            n_way: 3,
            k_shot: 2,
            q_query: 2,
            episodes_per_epoch: 3,
            epochs: 2,
            val_episodes: 0,
            seed: 5,
            ..Default::default()
        }
    }

    fn init() -> EncoderState {
        EncoderState::new(EncoderConfig::mlp2(6, 10, 8, 1)).unwrap()
    }

    #[test]
    fn toggles_off_total_is_ce() {
        let s = splits();
        let cfg = TrainConfig { toggles: Toggles::NONE, ..small_cfg() };
        let mut t = Trainer::new(cfg, init()).unwrap();
        for i in 0..3 {
            let ep = sample_episode(&s.base, 3, 2, 2, &mut rng::seeded(i)).unwrap();
            let m = t.step(&ep).unwrap();
            assert!((m.total - m.ce).abs() <= 1e-9);
            assert_eq!((m.inter, m.intra, m.forget), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn first_step_has_no_forget_term() {
        let s = splits();
        let mut t = Trainer::new(small_cfg(), init()).unwrap();
        let ep = sample_episode(&s.base, 3, 2, 2, &mut rng::seeded(0)).unwrap();
        let m = t.step(&ep).unwrap();
        assert_eq!(m.forget, 0.0);
        assert!(!m.replayed);
        assert_eq!(m.cache_size, 1);
        let ep = sample_episode(&s.base, 3, 2, 2, &mut rng::seeded(1)).unwrap();
        let m = t.step(&ep).unwrap();
        assert!(m.replayed);
        assert!(m.forget >= t.config.loss.delta);
        assert_eq!(m.cache_size, 2);
        let cfg = &t.config.loss;
        let expect = m.ce + cfg.lambda1 * m.inter + cfg.lambda2 * m.intra + m.forget;
        assert!((m.total - expect).abs() < 1e-12);
    }

    #[test]
    fn run_logs_one_record_per_step() {
        let s = splits();
        let cfg = TrainConfig { epochs: 1, episodes_per_epoch: 2, ..small_cfg() };
        let out = meta_train(&cfg, &s.base, None, &init()).unwrap();
        assert_eq!(out.log.len(), 2);
        assert_eq!(out.final_state.step, 2);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let s = splits();
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        let out = meta_train(&cfg, &s.base, Some(&s.val), &init()).unwrap();
        assert_eq!(out.final_state, init());
        assert!(out.log.is_empty());
    }

    #[test]
    fn validation_keeps_best_state() {
        let s = splits();
        let cfg = TrainConfig { val_episodes: 5, n_way: 2, ..small_cfg() };
        let out = meta_train(&cfg, &s.base, Some(&s.val), &init()).unwrap();
        let vals: Vec<_> = out
            .log
            .iter()
            .filter_map(|r| match r {
                LogRecord::Validation { mean_accuracy, .. } => Some(*mean_accuracy),
                _ => None,
            })
            .collect();
        assert_eq!(vals.len(), 2);
        let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best_val_accuracy, Some(best));
    }

    #[test]
    fn ablation_parsing() {
        assert_eq!("IV".parse::<Ablation>().unwrap(), Ablation::IV);
        assert_eq!("full".parse::<Ablation>().unwrap(), Ablation::Full);
        assert_eq!(Ablation::IV.toggles(), Toggles { use_inter: false, use_intra: false, use_forget: true });
        assert!("V".parse::<Ablation>().is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(Trainer::new(TrainConfig { k_shot: 0, ..small_cfg() }, init()).is_err());
        assert!(Trainer::new(TrainConfig { alpha: 2.0, ..small_cfg() }, init()).is_err());
    }
}
