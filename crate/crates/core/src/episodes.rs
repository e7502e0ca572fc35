//! Datasets, base/val/novel splits, N-way K-shot episode sampling and the
//! two-view episodic augmentation.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Base,
    Val,
    Novel,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Base => "base",
            SplitRole::Val => "val",
            SplitRole::Novel => "novel",
        }
    }
}

/// A labelled collection of samples belonging to one role.
///
/// Samples are stored flattened, one per row of `samples`; `input_shape` gives
/// the logical shape of a single sample (`[dim]` for vectors, `[C, H, W]` for
/// images). Class ids are local to the split and index `class_names`, which
/// carry the global identity used for disjointness checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub role: SplitRole,
    pub input_shape: Vec<usize>,
    pub class_names: Vec<String>,
    pub samples: Array2<f64>,
    pub labels: Vec<usize>,
}

impl DatasetSplit {
    pub fn new(
        role: SplitRole,
        input_shape: Vec<usize>,
        class_names: Vec<String>,
        samples: Array2<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let split = DatasetSplit {
            role,
            input_shape,
            class_names,
            samples,
            labels,
        };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let dim: usize = self.input_shape.iter().product();
        if self.input_shape.is_empty() || dim == 0 {
            return Err(Error::shape(format!("degenerate input shape {:?}", self.input_shape)));
        }
        if self.samples.ncols() != dim {
            return Err(Error::shape(format!(
                "samples have {} columns, input shape {:?} needs {dim}",
                self.samples.ncols(),
                self.input_shape
            )));
        }
        if self.samples.nrows() != self.labels.len() {
            return Err(Error::shape(format!(
                "{} samples but {} labels",
                self.samples.nrows(),
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                n_way: self.class_names.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &self.class_names {
            if !seen.insert(name) {
                return Err(Error::invalid(format!("duplicate class name `{name}`")));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Item indices grouped by class id.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// Sub-split holding only `classes` (relabelled `0..classes.len()` in the given order).
    pub fn select_classes(&self, classes: &[usize], role: SplitRole) -> Result<DatasetSplit> {
        let mut remap = vec![None; self.num_classes()];
        for (new, &old) in classes.iter().enumerate() {
            let slot = remap
                .get_mut(old)
                .ok_or(Error::LabelOutOfRange { label: old, n_way: self.num_classes() })?;
            if slot.is_some() {
                return Err(Error::invalid(format!("class {old} selected twice")));
            }
            *slot = Some(new);
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(new) = remap[l] {
                rows.push(i);
                labels.push(new);
            }
        }
        DatasetSplit::new(
            role,
            self.input_shape.clone(),
            classes.iter().map(|&c| self.class_names[c].clone()).collect(),
            self.samples.select(Axis(0), &rows),
            labels,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let split: DatasetSplit = serde_json::from_slice(&fs::read(path)?)?;
        split.validate()?;
        Ok(split)
    }
}

/// Fails when any class name occurs in more than one of `splits`.
pub fn check_disjoint(splits: &[&DatasetSplit]) -> Result<()> {
    let mut owner = std::collections::HashMap::new();
    for split in splits {
        for name in &split.class_names {
            if let Some(prev) = owner.insert(name.as_str(), split.role) {
                if prev != split.role {
                    return Err(Error::OverlappingSplitClasses(name.clone()));
                }
            }
        }
    }
    Ok(())
}

/// Base, validation and novel splits over disjoint class sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub base: DatasetSplit,
    pub val: DatasetSplit,
    pub novel: DatasetSplit,
}

impl SplitSet {
    pub fn new(base: DatasetSplit, val: DatasetSplit, novel: DatasetSplit) -> Result<Self> {
        check_disjoint(&[&base, &val, &novel])?;
        Ok(SplitSet { base, val, novel })
    }

    /// Partitions the classes of `full` in order: the first `counts[0]` go to
    /// base, the next `counts[1]` to val, the next `counts[2]` to novel.
    pub fn partition(full: &DatasetSplit, counts: [usize; 3]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total > full.num_classes() {
            return Err(Error::InsufficientClasses { need: total, have: full.num_classes() });
        }
        let ids: Vec<usize> = (0..total).collect();
        let (base, rest) = ids.split_at(counts[0]);
        let (val, novel) = rest.split_at(counts[1]);
        SplitSet::new(
            full.select_classes(base, SplitRole::Base)?,
            full.select_classes(val, SplitRole::Val)?,
            full.select_classes(novel, SplitRole::Novel)?,
        )
    }

    pub fn get(&self, role: SplitRole) -> &DatasetSplit {
        match role {
            SplitRole::Base => &self.base,
            SplitRole::Val => &self.val,
            SplitRole::Novel => &self.novel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub class_sep: f64,
    pub intra_std: f64,
    pub seed: u64,
}

/// Gaussian blobs: class means uniform on the sphere of radius `class_sep`,
/// samples are mean plus isotropic noise of std `intra_std`.
///
/// Items are grouped by class; classes are named `c000`, `c001`, ...
/// `intra_std == 0` is accepted and yields samples exactly at their means.
pub fn make_synthetic_dataset(params: &SyntheticParams) -> Result<DatasetSplit> {
    let SyntheticParams { num_classes, dim, per_class, class_sep, intra_std, seed } = *params;
    if num_classes < 2 {
        return Err(Error::invalid(format!("num_classes must be >= 2, got {num_classes}")));
    }
    if dim == 0 || per_class == 0 {
        return Err(Error::invalid("dim and per_class must be positive"));
    }
    if !(class_sep > 0.0 && class_sep.is_finite()) {
        return Err(Error::invalid(format!("class_sep must be positive, got {class_sep}")));
    }
    if !(intra_std >= 0.0 && intra_std.is_finite()) {
        return Err(Error::invalid(format!("intra_std must be non-negative, got {intra_std}")));
    }

    let mut rng = rng::seeded(seed);
    let mut means = Array2::<f64>::zeros((num_classes, dim));
    for mut row in means.rows_mut() {
        loop {
            row.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row *= class_sep / norm;
                break;
            }
        }
    }

    let mut samples = Array2::<f64>::zeros((num_classes * per_class, dim));
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        for i in 0..per_class {
            let mut row = samples.row_mut(c * per_class + i);
            for (v, &m) in row.iter_mut().zip(means.row(c)) {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *v = m + intra_std * noise;
            }
            labels.push(c);
        }
    }
    let names = (0..num_classes).map(|c| format!("c{c:03}")).collect();
    DatasetSplit::new(SplitRole::Base, vec![dim], names, samples, labels)
}

/// Class-name lists per role for folder-based datasets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default)]
    pub base: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub novel: Vec<String>,
}

impl SplitSpec {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in self.base.iter().chain(&self.val).chain(&self.novel) {
            if !seen.insert(name) {
                return Err(Error::OverlappingSplitClasses(name.clone()));
            }
        }
        Ok(())
    }
}

/// Reads `root/<class_name>/<image files>` into three splits.
///
/// Images are decoded, resized to `input_shape = [C, H, W]` (C is 1 or 3) and
/// stored channel-major with intensities in `[0, 1]`. Files inside a class
/// folder are read in lexicographic order; dot-files are skipped.
pub fn load_image_folder(root: &Path, spec: &SplitSpec, input_shape: [usize; 3]) -> Result<SplitSet> {
    spec.validate()?;
    if !root.is_dir() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let [c, h, w] = input_shape;
    if !(c == 1 || c == 3) || h == 0 || w == 0 {
        return Err(Error::invalid(format!("unsupported image shape {input_shape:?}")));
    }
    let load_role = |names: &[String], role: SplitRole| -> Result<DatasetSplit> {
        let mut rows: Vec<f64> = Vec::new();
        let mut labels = Vec::new();
        for (label, name) in names.iter().enumerate() {
            let dir = root.join(name);
            if !dir.is_dir() {
                return Err(Error::MissingPath(dir));
            }
            let mut files: Vec<_> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::EmptyClass(name.clone()));
            }
            for file in files {
                let img = image::ImageReader::open(&file)
                    .and_then(|r| r.with_guessed_format())
                    .map_err(|e| Error::UndecodableImage { path: file.clone(), reason: e.to_string() })?
                    .decode()
                    .map_err(|e| Error::UndecodableImage { path: file.clone(), reason: e.to_string() })?;
                let resized = img.resize_exact(w as u32, h as u32, image::imageops::FilterType::Triangle);
                if c == 1 {
                    let gray = resized.to_luma8();
                    rows.extend(gray.pixels().map(|p| f64::from(p.0[0]) / 255.0));
                } else {
                    let rgb = resized.to_rgb8();
                    for ch in 0..3 {
                        rows.extend(rgb.pixels().map(|p| f64::from(p.0[ch]) / 255.0));
                    }
                }
                labels.push(label);
            }
        }
        let samples = Array2::from_shape_vec((labels.len(), c * h * w), rows)
            .map_err(|e| Error::shape(e.to_string()))?;
        DatasetSplit::new(role, input_shape.to_vec(), names.to_vec(), samples, labels)
    };
    SplitSet::new(
        load_role(&spec.base, SplitRole::Base)?,
        load_role(&spec.val, SplitRole::Val)?,
        load_role(&spec.novel, SplitRole::Novel)?,
    )
}

/// One N-way K-shot task.
///
/// Labels are remapped to `0..n_way` in class draw order. Support rows are
/// grouped by label (`k_shot` rows each), as are query rows (`q_query` each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: u64,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub input_shape: Vec<usize>,
    pub support: Array2<f64>,
    pub support_labels: Vec<usize>,
    pub query: Array2<f64>,
    pub query_labels: Vec<usize>,
    /// Split-local class id behind each remapped label.
    pub classes: Vec<usize>,
    pub support_items: Vec<usize>,
    pub query_items: Vec<usize>,
}

pub fn sample_episode(
    split: &DatasetSplit,
    n_way: usize,
    k_shot: usize,
    q_query: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 || q_query == 0 {
        return Err(Error::invalid(format!(
            "n_way, k_shot and q_query must be positive (got {n_way}, {k_shot}, {q_query})"
        )));
    }
    if split.num_classes() < n_way {
        return Err(Error::InsufficientClasses { need: n_way, have: split.num_classes() });
    }
    let by_class = split.class_indices();
    let need = k_shot + q_query;
    let classes = index::sample(rng, split.num_classes(), n_way).into_vec();

    let dim = split.sample_dim();
    let mut support_items = Vec::with_capacity(n_way * k_shot);
    let mut query_items = Vec::with_capacity(n_way * q_query);
    for &class in &classes {
        let pool = &by_class[class];
        if pool.len() < need {
            return Err(Error::InsufficientSamples { class, need, have: pool.len() });
        }
        let picks = index::sample(rng, pool.len(), need).into_vec();
        support_items.extend(picks[..k_shot].iter().map(|&p| pool[p]));
        query_items.extend(picks[k_shot..].iter().map(|&p| pool[p]));
    }
    let episode_id = rng.random::<u64>();

    debug_assert_eq!(split.samples.ncols(), dim);
    Ok(Episode {
        episode_id,
        n_way,
        k_shot,
        q_query,
        input_shape: split.input_shape.clone(),
        support: split.samples.select(Axis(0), &support_items),
        support_labels: (0..n_way).flat_map(|n| std::iter::repeat_n(n, k_shot)).collect(),
        query: split.samples.select(Axis(0), &query_items),
        query_labels: (0..n_way).flat_map(|n| std::iter::repeat_n(n, q_query)).collect(),
        classes,
        support_items,
        query_items,
    })
}

/// One stochastic transform of the augmentation family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Adds isotropic gaussian noise.
    GaussianNoise { std: f64 },
    /// Multiplies the sample by a factor drawn uniformly from `[min, max]`.
    RandomScale { min: f64, max: f64 },
    /// Crops a random region covering `[min_area, max_area]` of the image with
    /// aspect ratio in `[3/4, 4/3]` and resizes it back bilinearly.
    RandomResizedCrop { min_area: f64, max_area: f64 },
    HorizontalFlip { p: f64 },
    ColorJitter { brightness: f64, contrast: f64, saturation: f64 },
}

impl Transform {
    fn needs_image(&self) -> bool {
        matches!(
            self,
            Transform::RandomResizedCrop { .. } | Transform::HorizontalFlip { .. } | Transform::ColorJitter { .. }
        )
    }

    fn validate(&self, shape: &[usize]) -> Result<()> {
        let incompatible = |reason: &str| Error::IncompatiblePolicy {
            shape: shape.to_vec(),
            reason: reason.to_string(),
        };
        if self.needs_image() && shape.len() != 3 {
            return Err(incompatible("image transform applied to non-image samples"));
        }
        let ok = match *self {
            Transform::GaussianNoise { std } => std >= 0.0 && std.is_finite(),
            Transform::RandomScale { min, max } => min > 0.0 && min <= max && max.is_finite(),
            Transform::RandomResizedCrop { min_area, max_area } => {
                min_area > 0.0 && min_area <= max_area && max_area <= 1.0
            }
            Transform::HorizontalFlip { p } => (0.0..=1.0).contains(&p),
            Transform::ColorJitter { brightness, contrast, saturation } => {
                if saturation > 0.0 && shape[0] != 3 {
                    return Err(incompatible("saturation jitter needs 3 channels"));
                }
                (0.0..1.0).contains(&brightness) && (0.0..1.0).contains(&contrast) && (0.0..1.0).contains(&saturation)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad transform parameters: {self:?}")))
        }
    }

    fn apply(&self, x: &mut [f64], shape: &[usize], rng: &mut Rng) {
        match *self {
            Transform::GaussianNoise { std } => {
                for v in x.iter_mut() {
                    let n: f64 = StandardNormal.sample(rng);
                    *v += std * n;
                }
            }
            Transform::RandomScale { min, max } => {
                let f = rng.random_range(min..=max);
                x.iter_mut().for_each(|v| *v *= f);
            }
            Transform::RandomResizedCrop { min_area, max_area } => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let area = rng.random_range(min_area..=max_area) * (h * w) as f64;
                let log_ratio = rng.random_range((0.75f64).ln()..=(4.0f64 / 3.0).ln());
                let ratio = log_ratio.exp();
                let cw = ((area * ratio).sqrt().round() as usize).clamp(1, w);
                let ch = ((area / ratio).sqrt().round() as usize).clamp(1, h);
                let x0 = rng.random_range(0..=w - cw);
                let y0 = rng.random_range(0..=h - ch);
                let src = x.to_vec();
                for k in 0..c {
                    let plane = &src[k * h * w..(k + 1) * h * w];
                    for i in 0..h {
                        let sy = y0 as f64 + (i as f64 + 0.5) * ch as f64 / h as f64 - 0.5;
                        for j in 0..w {
                            let sx = x0 as f64 + (j as f64 + 0.5) * cw as f64 / w as f64 - 0.5;
                            x[k * h * w + i * w + j] = bilinear(plane, h, w, sy, sx);
                        }
                    }
                }
            }
            Transform::HorizontalFlip { p } => {
                if rng.random_bool(p) {
                    let w = shape[2];
                    x.chunks_mut(w).for_each(|row| row.reverse());
                }
            }
            Transform::ColorJitter { brightness, contrast, saturation } => {
                let c = shape[0];
                let plane = shape[1] * shape[2];
                let b = rng.random_range(1.0 - brightness..=1.0 + brightness);
                let ct = rng.random_range(1.0 - contrast..=1.0 + contrast);
                let s = rng.random_range(1.0 - saturation..=1.0 + saturation);
                x.iter_mut().for_each(|v| *v = (*v * b).clamp(0.0, 1.0));
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                x.iter_mut().for_each(|v| *v = ((*v - mean) * ct + mean).clamp(0.0, 1.0));
                if c == 3 && saturation > 0.0 {
                    for p in 0..plane {
                        let gray = 0.299 * x[p] + 0.587 * x[plane + p] + 0.114 * x[2 * plane + p];
                        for k in 0..3 {
                            let v = &mut x[k * plane + p];
                            *v = ((*v - gray) * s + gray).clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }
    }
}

fn bilinear(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Ordered list of stochastic transforms; every sample of a view draws its
/// own transform parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugPolicy {
    pub transforms: Vec<Transform>,
}

impl AugPolicy {
    pub fn identity() -> Self {
        AugPolicy { transforms: Vec::new() }
    }

    /// Gaussian noise followed by a random positive rescaling.
    pub fn vector_default(noise_std: f64, scale: (f64, f64)) -> Self {
        AugPolicy {
            transforms: vec![
                Transform::GaussianNoise { std: noise_std },
                Transform::RandomScale { min: scale.0, max: scale.1 },
            ],
        }
    }

    /// Random resized crop, horizontal flip and color jitter.
    pub fn image_default() -> Self {
        AugPolicy {
            transforms: vec![
                Transform::RandomResizedCrop { min_area: 0.5, max_area: 1.0 },
                Transform::HorizontalFlip { p: 0.5 },
                Transform::ColorJitter { brightness: 0.4, contrast: 0.4, saturation: 0.4 },
            ],
        }
    }

    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        self.transforms.iter().try_for_each(|t| t.validate(shape))
    }

    fn apply_rows(&self, rows: &mut Array2<f64>, shape: &[usize], rng: &mut Rng) {
        if self.transforms.is_empty() {
            return;
        }
        for mut row in rows.rows_mut() {
            let x = row.as_slice_mut().expect("standard layout");
            for t in &self.transforms {
                t.apply(x, shape, rng);
            }
        }
    }
}

/// Two augmented views of the same episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewEpisode {
    pub episode_id: u64,
    pub view1: Episode,
    pub view2: Episode,
}

impl MultiViewEpisode {
    pub fn view(&self, v: usize) -> &Episode {
        match v {
            0 => &self.view1,
            _ => &self.view2,
        }
    }
}

/// Applies two independent draws of `policy` to the whole episode (supports
/// and queries). View 1 is drawn before view 2 from the same generator.
pub fn augment_episode(ep: &Episode, policy: &AugPolicy, rng: &mut Rng) -> Result<MultiViewEpisode> {
    policy.validate(&ep.input_shape)?;
    let mut draw = || {
        let mut view = ep.clone();
        view.support = view.support.as_standard_layout().into_owned();
        view.query = view.query.as_standard_layout().into_owned();
        policy.apply_rows(&mut view.support, &ep.input_shape, rng);
        policy.apply_rows(&mut view.query, &ep.input_shape, rng);
        view
    };
    let view1 = draw();
    let view2 = draw();
    Ok(MultiViewEpisode { episode_id: ep.episode_id, view1, view2 })
}

/// Rows of `x` whose label equals `class`, in order.
pub fn rows_of(x: ArrayView2<f64>, labels: &[usize], class: usize) -> Array2<f64> {
    let idx: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect();
    x.select(Axis(0), &idx)
}
