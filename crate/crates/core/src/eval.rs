//! N-way K-shot evaluation with 95% confidence intervals, ablation tables and
//! 2-D embedding plots.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::{pretrain, EncoderConfig, EncoderState, PretrainConfig};
use crate::episodes::{sample_episode, DatasetSplit, Episode, SplitSet};
use crate::error::{Error, Result};
use crate::prototypes::class_prototypes;
use crate::rng::{self, Rng};
use crate::trainer::{meta_train, Ablation, TrainConfig};

/// Index of the nearest prototype (squared euclidean) for each row of
/// `queries`; ties go to the lowest class index.
pub fn nearest_prototype(queries: ArrayView2<f64>, protos: ArrayView2<f64>) -> Vec<usize> {
    queries
        .rows()
        .into_iter()
        .map(|q| {
            let mut best = (0, f64::INFINITY);
            for (n, p) in protos.rows().into_iter().enumerate() {
                let d: f64 = q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (n, d);
                }
            }
            best.0
        })
        .collect()
}

/// Predicted labels for the queries of an un-augmented episode, using
/// single-view prototypes.
pub fn classify_episode(state: &EncoderState, episode: &Episode) -> Result<Vec<usize>> {
    let support = state.encode(episode.support.view())?;
    let query = state.encode(episode.query.view())?;
    let protos = class_prototypes(support.view(), &episode.support_labels, episode.n_way, episode.k_shot)?;
    Ok(nearest_prototype(query.view(), protos.view()))
}

pub fn episode_accuracy(state: &EncoderState, episode: &Episode) -> Result<f64> {
    let predicted = classify_episode(state, episode)?;
    let correct = predicted.iter().zip(&episode.query_labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSetting {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    pub ci95: f64,
    pub num_episodes: usize,
    pub accuracies: Vec<f64>,
    pub setting: EvalSetting,
}

impl EvalReport {
    /// Mean and `1.96 * s / sqrt(n)` with `s` the sample standard deviation
    /// (zero for a single episode).
    pub fn from_accuracies(accuracies: Vec<f64>, setting: EvalSetting) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::invalid("no episodes to report"));
        }
        let (mean, std) = mean_std(&accuracies);
        let n = accuracies.len();
        Ok(EvalReport { mean_accuracy: mean, ci95: 1.96 * std / (n as f64).sqrt(), num_episodes: n, accuracies, setting })
    }
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 when `n < 2`).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if !xs.is_empty() && xs.iter().all(|&x| x == xs[0]) {
        // Summation rounding would otherwise leave a tiny spread.
        return (xs[0], 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn evaluate(
    state: &EncoderState,
    split: &DatasetSplit,
    n_way: usize,
    k_shot: usize,
    q_query: usize,
    num_episodes: usize,
    rng: &mut Rng,
) -> Result<EvalReport> {
    if num_episodes == 0 {
        return Err(Error::invalid("num_episodes must be >= 1"));
    }
    let mut accuracies = Vec::with_capacity(num_episodes);
    for _ in 0..num_episodes {
        let ep = sample_episode(split, n_way, k_shot, q_query, rng)?;
        accuracies.push(episode_accuracy(state, &ep)?);
    }
    EvalReport::from_accuracies(
        accuracies,
        EvalSetting { n_way, k_shot, q_query, dataset: split.role.as_str().to_string() },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_way: 5, k_shot: 1, q_query: 15, episodes: 2000 }
    }
}

/// Everything an ablation run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub settings: Vec<Ablation>,
    /// Evaluate the best-on-validation state instead of the final one.
    pub use_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: Ablation,
    pub use_inter: bool,
    pub use_intra: bool,
    pub use_forget: bool,
    pub per_seed: Vec<SeedResult>,
    /// Mean over seeds of the per-seed mean accuracy.
    pub mean_accuracy: f64,
    /// Sample standard deviation of the per-seed means.
    pub spread: f64,
    /// Mean over seeds of the per-seed 95% interval.
    pub mean_ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub setting: EvalSetting,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

/// Reference row shown next to toy results: full method, 5-way 1-shot,
/// miniImageNet with a ResNet-12 backbone (percent).
pub const REFERENCE_FULL_5W1S: (f64, f64) = (69.04, 0.46);

impl AblationTable {
    pub fn row(&self, setting: Ablation) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    /// Markdown rendering with accuracies in percent.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let s = &self.setting;
        let _ = writeln!(
            out,
            "{}-way {}-shot, {} queries/class, {} episodes/seed, split `{}`, seeds {:?}\n",
            s.n_way,
            s.k_shot,
            s.q_query,
            self.rows.first().and_then(|r| r.per_seed.first()).map_or(0, |p| p.report.num_episodes),
            s.dataset,
            self.seeds
        );
        let mark = |b: bool| if b { "x" } else { " " };
        let _ = writeln!(out, "| setting | intra | inter | forget | accuracy (%) | seed spread | per seed |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for r in &self.rows {
            let per_seed: Vec<String> = r.per_seed.iter().map(|p| format!("{:.2}", 100.0 * p.report.mean_accuracy)).collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.2} ± {:.2} | {:.2} | {} |",
                r.setting,
                mark(r.use_intra),
                mark(r.use_inter),
                mark(r.use_forget),
                100.0 * r.mean_accuracy,
                100.0 * r.mean_ci95,
                100.0 * r.spread,
                per_seed.join(", ")
            );
        }
        let _ = writeln!(
            out,
            "\nReference (full method, 5-way 1-shot, miniImageNet, ResNet-12): {:.2} ± {:.2}",
            REFERENCE_FULL_5W1S.0, REFERENCE_FULL_5W1S.1
        );
        out
    }
}

/// Trains and evaluates every configured setting for every seed.
///
/// Per seed: the encoder is initialised and pre-trained once from that seed;
/// each setting then meta-trains from the same pre-trained state with the same
/// episode stream and is evaluated on the same novel episodes.
pub fn ablation_table(cfg: &AblationConfig, splits: &SplitSet, seeds: &[u64]) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one seed"));
    }
    if cfg.settings.is_empty() {
        return Err(Error::invalid("ablation needs at least one setting"));
    }
    let mut per_setting: Vec<Vec<SeedResult>> = vec![Vec::new(); cfg.settings.len()];
    for &seed in seeds {
        let init = pretrained_init(&cfg.encoder, &cfg.pretrain, &splits.base, seed)?;
        for (i, &setting) in cfg.settings.iter().enumerate() {
            let train = TrainConfig { toggles: setting.toggles(), seed, ..cfg.train.clone() };
            let out = meta_train(&train, &splits.base, Some(&splits.val), &init)?;
            let state = if cfg.use_best { &out.best_state } else { &out.final_state };
            let e = &cfg.eval;
            let report = evaluate(
                state,
                &splits.novel,
                e.n_way,
                e.k_shot,
                e.q_query,
                e.episodes,
                &mut rng::stream(seed, "eval", 0),
            )?;
            per_setting[i].push(SeedResult { seed, report });
        }
    }
    let rows = cfg
        .settings
        .iter()
        .zip(per_setting)
        .map(|(&setting, per_seed)| {
            let means: Vec<f64> = per_seed.iter().map(|p| p.report.mean_accuracy).collect();
            let cis: Vec<f64> = per_seed.iter().map(|p| p.report.ci95).collect();
            let (mean_accuracy, spread) = mean_std(&means);
            let t = setting.toggles();
            AblationRow {
                setting,
                use_inter: t.use_inter,
                use_intra: t.use_intra,
                use_forget: t.use_forget,
                per_seed,
                mean_accuracy,
                spread,
                mean_ci95: mean_std(&cis).0,
            }
        })
        .collect();
    Ok(AblationTable {
        setting: EvalSetting {
            n_way: cfg.eval.n_way,
            k_shot: cfg.eval.k_shot,
            q_query: cfg.eval.q_query,
            dataset: splits.novel.role.as_str().to_string(),
        },
        seeds: seeds.to_vec(),
        rows,
    })
}

/// Fresh encoder seeded from `seed`, pre-trained on `base` with the `"pretrain"` stream.
pub fn pretrained_init(encoder: &EncoderConfig, cfg: &PretrainConfig, base: &DatasetSplit, seed: u64) -> Result<EncoderState> {
    let enc_cfg = EncoderConfig { seed: rng::derive_seed(seed, "encoder-init", 0), ..encoder.clone() };
    let init = EncoderState::new(enc_cfg)?;
    Ok(pretrain(&init, base, cfg, &mut rng::stream(seed, "pretrain", 0))?.state)
}

/// 2-D principal-component projection of the rows of `x`.
///
/// Components come from power iteration on the covariance with deflation;
/// each axis is sign-normalised so its largest-magnitude loading is positive.
pub fn pca_2d(x: ArrayView2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let centered = &x - &mean;
    let mut cov = centered.t().dot(&centered) / (x.nrows().max(2) - 1) as f64;
    let d = x.ncols();
    let mut axes = Vec::with_capacity(2);
    for c in 0..2.min(d) {
        let mut v = Array1::from_shape_fn(d, |i| 1.0 + ((i + c) % 7) as f64 * 0.1);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = cov.dot(&v);
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                break;
            }
            let next = w / norm;
            let delta = (&next - &v).mapv(f64::abs).sum();
            v = next;
            lambda = norm;
            if delta < 1e-12 {
                break;
            }
        }
        let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |b, (i, &a)| if a.abs() > b.1 { (i, a.abs()) } else { b });
        if v[imax] < 0.0 {
            v.mapv_inplace(|a| -a);
        }
        let outer = v.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        cov.scaled_add(-lambda, &outer);
        axes.push(v);
    }
    let mut out = Array2::<f64>::zeros((x.nrows(), 2));
    for (c, axis) in axes.iter().enumerate() {
        out.column_mut(c).assign(&centered.dot(axis));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
}

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

/// Encodes the first `samples_per_class` items of the first `num_classes`
/// classes of `split`, projects them to 2-D and writes a PNG scatter plot
/// coloured by class.
pub fn embed_plot(
    state: &EncoderState,
    split: &DatasetSplit,
    num_classes: usize,
    samples_per_class: usize,
    out_path: &Path,
) -> Result<Projection> {
    if num_classes == 0 || num_classes > split.num_classes() {
        return Err(Error::InsufficientClasses { need: num_classes, have: split.num_classes() });
    }
    let by_class = split.class_indices();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, items) in by_class.iter().take(num_classes).enumerate() {
        if items.len() < samples_per_class {
            return Err(Error::InsufficientSamples { class: c, need: samples_per_class, have: items.len() });
        }
        rows.extend_from_slice(&items[..samples_per_class]);
        labels.extend(std::iter::repeat_n(c, samples_per_class));
    }
    let emb = state.encode(split.samples.select(Axis(0), &rows).view())?;
    let points = pca_2d(emb.view());
    render_scatter(&points, &labels, out_path)?;
    Ok(Projection { points, labels })
}

fn render_scatter(points: &Array2<f64>, labels: &[usize], out_path: &Path) -> Result<()> {
    const SIZE: u32 = 512;
    const MARGIN: f64 = 24.0;
    let mut img = image::RgbImage::from_pixel(SIZE, SIZE, image::Rgb([255, 255, 255]));
    let range = |c: usize| {
        let col = points.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(1e-12))
    };
    let ((x0, xs), (y0, ys)) = (range(0), range(1));
    let span = f64::from(SIZE) - 2.0 * MARGIN;
    for (p, &l) in points.rows().into_iter().zip(labels) {
        let cx = MARGIN + (p[0] - x0) / xs * span;
        let cy = f64::from(SIZE) - MARGIN - (p[1] - y0) / ys * span;
        let color = image::Rgb(PALETTE[l % PALETTE.len()]);
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                if dx * dx + dy * dy > 9 {
                    continue;
                }
                let (px, py) = (cx as i32 + dx, cy as i32 + dy);
                if (0..SIZE as i32).contains(&px) && (0..SIZE as i32).contains(&py) {
                    img.put_pixel(px as u32, py as u32, color);
                }
            }
        }
    }
    img.save_with_format(out_path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ties_go_to_lower_class() {
        let protos = array![[1.0, 0.0], [-1.0, 0.0]];
        let q = array![[0.0, 5.0], [0.0, -2.0]];
        assert_eq!(nearest_prototype(q.view(), protos.view()), vec![0, 0]);
        let protos = array![[-1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        assert_eq!(nearest_prototype(array![[0.9, 0.0]].view(), protos.view()), vec![1]);
    }

    fn setting() -> EvalSetting {
        EvalSetting { n_way: 5, k_shot: 1, q_query: 15, dataset: "novel".into() }
    }

    #[test]
    fn ci_of_constant_accuracies_is_zero() {
        let r = EvalReport::from_accuracies(vec![0.6; 10], setting()).unwrap();
        assert_eq!(r.ci95, 0.0);
        assert!((r.mean_accuracy - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ci_two_episodes() {
        let r = EvalReport::from_accuracies(vec![1.0, 0.0], setting()).unwrap();
        assert_eq!(r.mean_accuracy, 0.5);
        let expected = 1.96 * (0.5f64).sqrt() / 2f64.sqrt();
        assert!((r.ci95 - expected).abs() < 1e-15);
        assert!((r.ci95 - 0.98).abs() < 1e-12);
    }

    #[test]
    fn empty_report_rejected() {
        assert!(EvalReport::from_accuracies(vec![], setting()).is_err());
    }

    #[test]
    fn pca_recovers_dominant_axis() {
        let x = array![[-2.0, 0.1, 0.0], [2.0, -0.1, 0.0], [-1.0, 0.0, 0.05], [1.0, 0.0, -0.05]];
        let p = pca_2d(x.view());
        assert_eq!(p.dim(), (4, 2));
        let col0: Vec<f64> = p.column(0).to_vec();
        assert!((col0[0].abs() - 2.0).abs() < 0.01);
        assert!(p.column(1).iter().all(|v| v.abs() < 0.2));
    }
}
