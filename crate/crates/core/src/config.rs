//! Run configuration: one TOML file with flat dotted keys
//! (`train.epochs = 20`, `loss.kappa = 0.1`, ...) plus `key=value` overrides.
//! Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::CacheConfig;
use crate::encoder::{Arch, EncoderConfig, PretrainConfig};
use crate::episodes::{load_image_folder, make_synthetic_dataset, AugPolicy, DatasetSplit, SplitRole, SplitSet, SplitSpec, SyntheticParams};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::losses::LossConfig;
use crate::optim::SgdConfig;
use crate::trainer::{Toggles, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Synthetic,
    ImageFolder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub base_classes: usize,
    pub val_classes: usize,
    pub novel_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub class_sep: f64,
    pub intra_std: f64,
    /// Image-folder root (class subdirectories).
    pub root: String,
    /// JSON file with `base`, `val`, `novel` class-name lists.
    pub split_file: String,
    /// `[C, H, W]` images are resized to.
    pub image_shape: [usize; 3],
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            kind: DatasetKind::Synthetic,
            base_classes: 30,
            val_classes: 5,
            novel_classes: 10,
            dim: 64,
            per_class: 60,
            class_sep: 5.0,
            intra_std: 1.0,
            root: String::new(),
            split_file: String::new(),
            image_shape: [3, 32, 32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchName {
    #[serde(rename = "mlp-2")]
    Mlp2,
    #[serde(rename = "conv-4")]
    Conv4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub arch: ArchName,
    pub hidden: usize,
    pub channels: usize,
    pub embed_dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection { arch: ArchName::Mlp2, hidden: 128, channels: 32, embed_dim: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentKind {
    None,
    Vector,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub episodes_per_epoch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub alpha: f64,
    pub use_inter: bool,
    pub use_intra: bool,
    pub use_forget: bool,
    pub val_episodes: usize,
    pub augment: AugmentKind,
    pub noise_std: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            n_way: t.n_way,
            k_shot: t.k_shot,
            q_query: t.q_query,
            episodes_per_epoch: t.episodes_per_epoch,
            epochs: t.epochs,
            lr: t.optimizer.lr,
            momentum: t.optimizer.momentum,
            weight_decay: t.optimizer.weight_decay,
            alpha: t.alpha,
            use_inter: true,
            use_intra: true,
            use_forget: true,
            val_episodes: t.val_episodes,
            augment: AugmentKind::Vector,
            noise_std: 0.5,
            scale_min: 0.8,
            scale_max: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub encoder: EncoderSection,
    pub pretrain: PretrainConfig,
    pub train: TrainSection,
    pub loss: LossConfig,
    pub cache: CacheConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: DatasetSection::default(),
            encoder: EncoderSection::default(),
            pretrain: PretrainConfig::default(),
            train: TrainSection::default(),
            loss: LossConfig::default(),
            cache: CacheConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    /// Every leaf as `dotted.key -> value`.
    pub fn flatten(&self) -> Result<BTreeMap<String, String>> {
        fn walk(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, String>) {
            match v {
                toml::Value::Table(t) => {
                    for (k, v) in t {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, v, out);
                    }
                }
                other => {
                    out.insert(prefix.to_string(), other.to_string());
                }
            }
        }
        let mut out = BTreeMap::new();
        walk("", &toml::Value::try_from(self).map_err(config_err)?, &mut out);
        Ok(out)
    }

    /// Sets one dotted key from a TOML literal (bare words are read as strings).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(config_err)?;
        let mut node = &mut root;
        for part in key.split('.') {
            node = node
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        }
        if node.is_table() {
            return Err(Error::Config(format!("`{key}` is a section, not a value")));
        }
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        *node = parsed;
        *self = root.try_into().map_err(|e| Error::Config(format!("`{key} = {value}`: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config()?.validate()?;
        self.pretrain.optimizer.validate()?;
        if self.eval.n_way == 0 || self.eval.k_shot == 0 || self.eval.q_query == 0 || self.eval.episodes == 0 {
            return Err(Error::Config("eval n_way, k_shot, q_query and episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn augmentation(&self) -> AugPolicy {
        let t = &self.train;
        match t.augment {
            AugmentKind::None => AugPolicy::identity(),
            AugmentKind::Vector => AugPolicy::vector_default(t.noise_std, (t.scale_min, t.scale_max)),
            AugmentKind::Image => AugPolicy::image_default(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            n_way: t.n_way,
            k_shot: t.k_shot,
            q_query: t.q_query,
            episodes_per_epoch: t.episodes_per_epoch,
            epochs: t.epochs,
            optimizer: SgdConfig { lr: t.lr, momentum: t.momentum, weight_decay: t.weight_decay },
            loss: self.loss,
            cache: self.cache,
            toggles: Toggles { use_inter: t.use_inter, use_intra: t.use_intra, use_forget: t.use_forget },
            alpha: t.alpha,
            augmentation: self.augmentation(),
            val_episodes: t.val_episodes,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_toggles(&mut self, toggles: Toggles) {
        self.train.use_inter = toggles.use_inter;
        self.train.use_intra = toggles.use_intra;
        self.train.use_forget = toggles.use_forget;
    }

    pub fn encoder_config(&self, input_shape: &[usize], seed: u64) -> EncoderConfig {
        let e = &self.encoder;
        let arch = match e.arch {
            ArchName::Mlp2 => Arch::Mlp2 { hidden: e.hidden },
            ArchName::Conv4 => Arch::Conv4 { channels: e.channels },
        };
        EncoderConfig { arch, embed_dim: e.embed_dim, input_shape: input_shape.to_vec(), seed }
    }

    pub fn synthetic_params(&self) -> SyntheticParams {
        let d = &self.dataset;
        SyntheticParams {
            num_classes: d.base_classes + d.val_classes + d.novel_classes,
            dim: d.dim,
            per_class: d.per_class,
            class_sep: d.class_sep,
            intra_std: d.intra_std,
            seed: self.seed,
        }
    }

    pub fn split_counts(&self) -> [usize; 3] {
        [self.dataset.base_classes, self.dataset.val_classes, self.dataset.novel_classes]
    }

    /// Synthetic splits built directly from the config.
    pub fn synthetic_splits(&self) -> Result<SplitSet> {
        SplitSet::partition(&make_synthetic_dataset(&self.synthetic_params())?, self.split_counts())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub file: String,
    pub num_classes: usize,
    pub num_items: usize,
}

/// `manifest.json` of a dataset directory written by `synth-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub kind: DatasetKind,
    pub seed: u64,
    pub input_shape: Vec<usize>,
    pub params: SyntheticParams,
    pub splits: BTreeMap<String, SplitSummary>,
}

pub const MANIFEST_FORMAT: &str = "fsl-dataset";
pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    /// Writes the three split files and the manifest into `dir`.
    pub fn write(dir: &Path, splits: &SplitSet, params: &SyntheticParams) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut summaries = BTreeMap::new();
        for role in [SplitRole::Base, SplitRole::Val, SplitRole::Novel] {
            let split = splits.get(role);
            let file = format!("{}.json", role.as_str());
            split.save(&dir.join(&file))?;
            summaries.insert(
                role.as_str().to_string(),
                SplitSummary { file, num_classes: split.num_classes(), num_items: split.len() },
            );
        }
        let manifest = DatasetManifest {
            format: MANIFEST_FORMAT.into(),
            version: 1,
            kind: DatasetKind::Synthetic,
            seed: params.seed,
            input_shape: splits.base.input_shape.clone(),
            params: *params,
            splits: summaries,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingPath(path));
        }
        let m: DatasetManifest = serde_json::from_slice(&fs::read(&path)?)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!("{} is not a dataset manifest", path.display())));
        }
        Ok(m)
    }

    pub fn load_splits(&self, dir: &Path) -> Result<SplitSet> {
        let get = |role: SplitRole| -> Result<DatasetSplit> {
            let summary = self
                .splits
                .get(role.as_str())
                .ok_or_else(|| Error::Config(format!("manifest lists no {} split", role.as_str())))?;
            let split = DatasetSplit::load(&dir.join(&summary.file))?;
            if split.role != role {
                return Err(Error::Config(format!("{} holds a {} split", summary.file, split.role.as_str())));
            }
            Ok(split)
        };
        SplitSet::new(get(SplitRole::Base)?, get(SplitRole::Val)?, get(SplitRole::Novel)?)
    }
}

/// Loads the splits a run refers to: a `synth-data` directory (with a
/// manifest) or an image folder described by `dataset.root` / `dataset.split_file`.
pub fn load_dataset(data: Option<&Path>, cfg: &RunConfig) -> Result<SplitSet> {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => {
            let dir = data.ok_or_else(|| Error::Config("a dataset directory is required (--data)".into()))?;
            if !dir.exists() {
                return Err(Error::MissingPath(dir.to_path_buf()));
            }
            DatasetManifest::load(dir)?.load_splits(dir)
        }
        DatasetKind::ImageFolder => {
            let root: PathBuf = match data {
                Some(d) => d.to_path_buf(),
                None if !cfg.dataset.root.is_empty() => PathBuf::from(&cfg.dataset.root),
                None => return Err(Error::Config("image-folder datasets need --data or dataset.root".into())),
            };
            if cfg.dataset.split_file.is_empty() {
                return Err(Error::Config("image-folder datasets need dataset.split_file".into()));
            }
            let spec = SplitSpec::load(Path::new(&cfg.dataset.split_file))?;
            load_image_folder(&root, &spec, cfg.dataset.image_shape)
        }
    }
}
