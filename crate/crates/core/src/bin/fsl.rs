use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fsl::checkpoint::Checkpoint;
use fsl::config::{load_dataset, DatasetManifest, RunConfig};
use fsl::encoder::{pretrain, EncoderConfig, EncoderState};
use fsl::episodes::{make_synthetic_dataset, SplitRole, SplitSet};
use fsl::eval::{ablation_table, embed_plot, evaluate, AblationConfig};
use fsl::rng;
use fsl::trainer::{Ablation, LogRecord, Trainer};

#[derive(Parser)]
#[command(name = "fsl", version, about = "Episodic few-shot training with prototype contrast and replay regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file (flat dotted keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (or file for `plot`).
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone, Default)]
struct EpisodeFlags {
    #[arg(long)]
    n_way: Option<usize>,
    #[arg(long)]
    k_shot: Option<usize>,
    #[arg(long)]
    q_query: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (base/val/novel split files and a manifest).
    SynthData {
        #[command(flatten)]
        common: Common,
    },
    /// Supervised pre-training on the base split.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (or image-folder root).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Episodic meta-training; writes metrics.jsonl and checkpoints.
    Metatrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Start from this encoder checkpoint instead of pre-training in-process.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Loss setting: I, II, III, IV, full or baseline.
        #[arg(long)]
        ablation: Option<Ablation>,
        /// Continue from a trainer checkpoint (`trainer.json`).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many meta-training steps have completed in total.
        #[arg(long)]
        max_steps: Option<u64>,
        #[command(flatten)]
        episode: EpisodeFlags,
    },
    /// Evaluate a checkpoint on N-way K-shot episodes.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to sample episodes from.
        #[arg(long, default_value = "novel")]
        split: String,
        #[arg(long)]
        episodes: Option<usize>,
        #[command(flatten)]
        episode: EpisodeFlags,
    },
    /// Ablation table over loss settings and seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Comma-separated settings.
        #[arg(long, value_delimiter = ',', default_value = "baseline,I,II,III,IV,full")]
        settings: Vec<Ablation>,
        /// Evaluate the best-on-validation state instead of the final one.
        #[arg(long)]
        use_best: bool,
        #[arg(long)]
        episodes: Option<usize>,
        #[command(flatten)]
        episode: EpisodeFlags,
    },
    /// 2-D PCA scatter plot (PNG) of embeddings.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "novel")]
        split: String,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 30)]
        per_class: usize,
    },
}

#[derive(Serialize)]
struct RunHeader<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ablation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<String>,
    config: &'a RunConfig,
}

impl<'a> RunHeader<'a> {
    fn new(command: &'a str, config: &'a RunConfig) -> Self {
        RunHeader {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            ablation: None,
            data: None,
            checkpoint: None,
            config,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("run_header.json"), self)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{item}`"))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_train_flags(cfg: &mut RunConfig, flags: &EpisodeFlags) {
    if let Some(n) = flags.n_way {
        cfg.train.n_way = n;
    }
    if let Some(k) = flags.k_shot {
        cfg.train.k_shot = k;
    }
    if let Some(q) = flags.q_query {
        cfg.train.q_query = q;
    }
}

fn apply_eval_flags(cfg: &mut RunConfig, flags: &EpisodeFlags, episodes: Option<usize>) {
    if let Some(n) = flags.n_way {
        cfg.eval.n_way = n;
    }
    if let Some(k) = flags.k_shot {
        cfg.eval.k_shot = k;
    }
    if let Some(q) = flags.q_query {
        cfg.eval.q_query = q;
    }
    if let Some(e) = episodes {
        cfg.eval.episodes = e;
    }
}

/// Creates `dir`, refusing when any of `outputs` already exists unless `force`.
fn prepare_out_dir(dir: &Path, outputs: &[&str], force: bool) -> Result<()> {
    for name in outputs {
        let path = dir.join(name);
        if path.exists() {
            if !force {
                bail!("{} already exists; pass --force to overwrite", path.display());
            }
            fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_splits(data: Option<&Path>, cfg: &RunConfig) -> Result<SplitSet> {
    let what = data.map_or_else(|| cfg.dataset.root.clone(), |d| d.display().to_string());
    load_dataset(data, cfg).with_context(|| format!("loading dataset `{what}`"))
}

fn parse_role(name: &str) -> Result<SplitRole> {
    match name {
        "base" => Ok(SplitRole::Base),
        "val" => Ok(SplitRole::Val),
        "novel" => Ok(SplitRole::Novel),
        other => bail!("unknown split `{other}` (expected base, val or novel)"),
    }
}

/// Fresh encoder for `cfg.seed`; its init seed is derived from the root seed.
fn fresh_encoder(cfg: &RunConfig, input_shape: &[usize]) -> Result<EncoderState> {
    let enc = cfg.encoder_config(input_shape, rng::derive_seed(cfg.seed, "encoder-init", 0));
    Ok(EncoderState::new(enc)?)
}

fn expected_encoder(cfg: &RunConfig, input_shape: &[usize]) -> EncoderConfig {
    cfg.encoder_config(input_shape, 0)
}

fn cmd_synth_data(common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    let out = &common.out;
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        if !common.force {
            bail!("{} exists and is not empty; pass --force to overwrite", out.display());
        }
        fs::remove_dir_all(out).with_context(|| format!("removing {}", out.display()))?;
    }
    let params = cfg.synthetic_params();
    let splits = SplitSet::partition(&make_synthetic_dataset(&params)?, cfg.split_counts())?;
    let manifest = DatasetManifest::write(out, &splits, &params)?;
    RunHeader::new("synth-data", &cfg).write(out)?;
    for (name, s) in &manifest.splits {
        println!("{name}: {} classes, {} items -> {}", s.num_classes, s.num_items, out.join(&s.file).display());
    }
    Ok(())
}

fn cmd_pretrain(common: &Common, data: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(common)?;
    cfg.pretrain.optimizer.validate()?;
    let splits = load_splits(data, &cfg)?;
    let out = &common.out;
    prepare_out_dir(out, &["pretrained.json", "pretrain_log.jsonl", "run_header.json"], common.force)?;
    let init = fresh_encoder(&cfg, &splits.base.input_shape)?;
    let result = pretrain(&init, &splits.base, &cfg.pretrain, &mut rng::stream(cfg.seed, "pretrain", 0))?;
    let mut log = BufWriter::new(File::create(out.join("pretrain_log.jsonl"))?);
    for epoch in &result.history {
        writeln!(log, "{}", serde_json::to_string(epoch)?)?;
    }
    log.flush()?;
    Checkpoint::encoder_only(result.state).save(&out.join("pretrained.json"))?;
    let mut header = RunHeader::new("pretrain", &cfg);
    header.data = data.map(|d| d.display().to_string());
    header.write(out)?;
    println!(
        "pre-trained {} epochs, final base accuracy {:.4} -> {}",
        result.history.len(),
        result.final_accuracy,
        out.join("pretrained.json").display()
    );
    Ok(())
}

/// Keeps the log lines for steps before `step` (dropping anything written
/// after the checkpoint being resumed).
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut kept = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let record: LogRecord = serde_json::from_str(&line).with_context(|| format!("parsing {}", path.display()))?;
        let s = match &record {
            LogRecord::Step { metrics, .. } => metrics.step,
            LogRecord::Validation { step, .. } => *step,
        };
        if s < step {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    Ok(())
}

struct MetatrainArgs<'a> {
    data: Option<&'a Path>,
    init: Option<&'a Path>,
    ablation: Option<Ablation>,
    resume: Option<&'a Path>,
    max_steps: Option<u64>,
    episode: &'a EpisodeFlags,
}

fn cmd_metatrain(common: &Common, args: MetatrainArgs) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    apply_train_flags(&mut cfg, args.episode);
    if let Some(a) = args.ablation {
        cfg.set_toggles(a.toggles());
    }
    let train_cfg = cfg.train_config()?;
    let splits = load_splits(args.data, &cfg)?;
    let shape = splits.base.input_shape.clone();
    let out = &common.out;
    let metrics_path = out.join("metrics.jsonl");

    let mut trainer = match args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path, Some(&expected_encoder(&cfg, &shape)))
                .with_context(|| format!("loading {}", path.display()))?;
            let trainer = ckpt
                .trainer
                .with_context(|| format!("{} holds no trainer state; use --init for encoder checkpoints", path.display()))?;
            if trainer.config != train_cfg {
                bail!("training config differs from the one stored in {}; resume with the original config", path.display());
            }
            fs::create_dir_all(out)?;
            truncate_log(&metrics_path, trainer.meta_step)?;
            trainer
        }
        None => {
            prepare_out_dir(
                out,
                &["metrics.jsonl", "run_header.json", "trainer.json", "final.json", "best.json"],
                common.force,
            )?;
            let init = match args.init {
                Some(path) => {
                    Checkpoint::load(path, Some(&expected_encoder(&cfg, &shape)))
                        .with_context(|| format!("loading {}", path.display()))?
                        .encoder
                }
                None => {
                    let fresh = fresh_encoder(&cfg, &shape)?;
                    pretrain(&fresh, &splits.base, &cfg.pretrain, &mut rng::stream(cfg.seed, "pretrain", 0))?.state
                }
            };
            let mut header = RunHeader::new("metatrain", &cfg);
            header.ablation = args.ablation.map(|a| a.to_string());
            header.data = args.data.map(|d| d.display().to_string());
            header.checkpoint = args.init.map(|p| p.display().to_string());
            header.write(out)?;
            Trainer::new(train_cfg, init)?
        }
    };

    let mut log = BufWriter::new(OpenOptions::new().create(true).append(true).open(&metrics_path)?);
    let per_epoch = trainer.config.episodes_per_epoch as u64;
    let end = trainer.config.total_steps().min(args.max_steps.unwrap_or(u64::MAX));
    let started = trainer.meta_step;
    while trainer.meta_step < end {
        let epoch_end = ((trainer.meta_step / per_epoch) + 1) * per_epoch;
        trainer.run_until(&splits.base, Some(&splits.val), epoch_end.min(end), |record| {
            let line = serde_json::to_string(record).map_err(fsl::Error::from)?;
            writeln!(log, "{line}").map_err(fsl::Error::from)?;
            Ok(())
        })?;
        log.flush()?;
        Checkpoint::with_trainer(trainer.clone()).save(&out.join("trainer.json"))?;
    }
    Checkpoint::encoder_only(trainer.state.clone()).save(&out.join("final.json"))?;
    Checkpoint::encoder_only(trainer.best_state().clone()).save(&out.join("best.json"))?;
    println!(
        "meta-trained steps {started}..{} of {}{}",
        trainer.meta_step,
        trainer.config.total_steps(),
        trainer.best.as_ref().map_or(String::new(), |(acc, _)| format!(", best val accuracy {acc:.4}"))
    );
    Ok(())
}

fn cmd_eval(
    common: &Common,
    data: Option<&Path>,
    checkpoint: &Path,
    split: &str,
    episodes: Option<usize>,
    flags: &EpisodeFlags,
) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    apply_eval_flags(&mut cfg, flags, episodes);
    cfg.validate()?;
    let role = parse_role(split)?;
    let splits = load_splits(data, &cfg)?;
    let shape = splits.base.input_shape.clone();
    let state = Checkpoint::load(checkpoint, Some(&expected_encoder(&cfg, &shape)))
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?
        .encoder;
    let out = &common.out;
    prepare_out_dir(out, &["report.json", "report.md", "run_header.json"], common.force)?;
    let e = &cfg.eval;
    let report = evaluate(
        &state,
        splits.get(role),
        e.n_way,
        e.k_shot,
        e.q_query,
        e.episodes,
        &mut rng::stream(cfg.seed, "eval", 0),
    )?;
    write_json(&out.join("report.json"), &report)?;
    let md = format!(
        "| split | way | shot | queries | episodes | accuracy (%) |\n|---|---|---|---|---|---|\n| {} | {} | {} | {} | {} | {:.2} ± {:.2} |\n",
        report.setting.dataset,
        report.setting.n_way,
        report.setting.k_shot,
        report.setting.q_query,
        report.num_episodes,
        100.0 * report.mean_accuracy,
        100.0 * report.ci95
    );
    fs::write(out.join("report.md"), &md)?;
    let mut header = RunHeader::new("eval", &cfg);
    header.data = data.map(|d| d.display().to_string());
    header.checkpoint = Some(checkpoint.display().to_string());
    header.write(out)?;
    print!("{md}");
    Ok(())
}

struct AblateArgs<'a> {
    data: Option<&'a Path>,
    seeds: &'a [u64],
    settings: &'a [Ablation],
    use_best: bool,
    episodes: Option<usize>,
    episode: &'a EpisodeFlags,
}

fn cmd_ablate(common: &Common, args: AblateArgs) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    apply_eval_flags(&mut cfg, args.episode, args.episodes);
    cfg.validate()?;
    if args.seeds.is_empty() || args.settings.is_empty() {
        bail!("ablate needs at least one seed and one setting");
    }
    let splits = load_splits(args.data, &cfg)?;
    let out = &common.out;
    prepare_out_dir(out, &["ablation.json", "ablation.md", "run_header.json"], common.force)?;
    let ablation = AblationConfig {
        encoder: expected_encoder(&cfg, &splits.base.input_shape),
        pretrain: cfg.pretrain.clone(),
        train: cfg.train_config()?,
        eval: cfg.eval.clone(),
        settings: args.settings.to_vec(),
        use_best: args.use_best,
    };
    let table = ablation_table(&ablation, &splits, args.seeds)?;
    write_json(&out.join("ablation.json"), &table)?;
    let md = table.to_markdown();
    fs::write(out.join("ablation.md"), &md)?;
    let mut header = RunHeader::new("ablate", &cfg);
    header.data = args.data.map(|d| d.display().to_string());
    header.write(out)?;
    print!("{md}");
    Ok(())
}

fn cmd_plot(
    common: &Common,
    data: Option<&Path>,
    checkpoint: &Path,
    split: &str,
    classes: usize,
    per_class: usize,
) -> Result<()> {
    let cfg = resolve_config(common)?;
    let role = parse_role(split)?;
    let splits = load_splits(data, &cfg)?;
    let shape = splits.base.input_shape.clone();
    let state = Checkpoint::load(checkpoint, Some(&expected_encoder(&cfg, &shape)))
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?
        .encoder;
    let out = &common.out;
    if out.exists() && !common.force {
        bail!("{} already exists; pass --force to overwrite", out.display());
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    embed_plot(&state, splits.get(role), classes, per_class, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::SynthData { common } => cmd_synth_data(common),
        Command::Pretrain { common, data } => cmd_pretrain(common, data.as_deref()),
        Command::Metatrain { common, data, init, ablation, resume, max_steps, episode } => cmd_metatrain(
            common,
            MetatrainArgs {
                data: data.as_deref(),
                init: init.as_deref(),
                ablation: *ablation,
                resume: resume.as_deref(),
                max_steps: *max_steps,
                episode,
            },
        ),
        Command::Eval { common, data, checkpoint, split, episodes, episode } => {
            cmd_eval(common, data.as_deref(), checkpoint, split, *episodes, episode)
        }
        Command::Ablate { common, data, seeds, settings, use_best, episodes, episode } => cmd_ablate(
            common,
            AblateArgs {
                data: data.as_deref(),
                seeds,
                settings,
                use_best: *use_best,
                episodes: *episodes,
                episode,
            },
        ),
        Command::Plot { common, data, checkpoint, split, classes, per_class } => {
            cmd_plot(common, data.as_deref(), checkpoint, split, *classes, *per_class)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
