//! `compgen` command line: data generation, training, evaluation, ablation
//! and exports driven by a flat `key = value` config.
//!
//! A run directory holds `config.echo`, `metrics.csv`, `report.csv`,
//! `checkpoint.cgck` and an `exports/` subdirectory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evaluation::{
    calibrated_sweep, embeddings_csv, evaluate_generalized, evaluate_zscl, BiasGrid, Protocol,
};
use crate::experiment::{ablation, mean_top1, thread_cap, Cell, ExperimentConfig, Setup};
use crate::models::Variant;
use crate::training::{
    load_checkpoint, metrics_csv, save_checkpoint, LabelSpace, Models, TrainConfig, Trainer,
};

pub const CONFIG_ECHO: &str = "config.echo";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.cgck";
pub const EXPORT_DIR: &str = "exports";

/// Every setting a subcommand may read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub train: TrainConfig,
    /// Data directory written by `gen-data`; empty means generate in memory.
    pub data_dir: String,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}; expected true or false"))),
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "world.attributes",
        "world.objects",
        "world.raw_width",
        "world.feature_width",
        "world.sigma",
        "world.seed",
        "data.dir",
        "data.samples_per_composition",
        "data.unseen_fraction",
        "data.generalized",
        "data.split_seed",
        "data.seed",
        "train.epochs",
        "train.batch_size",
        "train.lr_embedder",
        "train.lr_other",
        "train.decay_factor",
        "train.decay_epoch",
        "train.n_critic",
        "train.variant",
        "train.label_space",
        "train.cls_include_unseen",
        "train.seed",
        "loss.lambda_cls",
        "loss.mu_cluster",
        "loss.lambda_gp",
        "loss.adversarial",
        "loss.classification",
        "loss.cluster",
        "model.embed_hidden",
        "model.embed_out",
        "model.gen_hidden",
        "model.noise_width",
        "model.noise_hidden",
        "model.disc_hidden",
        "adam.beta1",
        "adam.beta2",
        "adam.eps",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let e = &mut self.experiment;
        let w = &mut e.world;
        let t = &mut self.train;
        match key {
            "world.attributes" => w.attributes = parse(key, v)?,
            "world.objects" => w.objects = parse(key, v)?,
            "world.raw_width" => w.raw_width = parse(key, v)?,
            "world.feature_width" => w.feature_width = parse(key, v)?,
            "world.sigma" => w.sigma = parse(key, v)?,
            "world.seed" => w.seed = parse(key, v)?,
            "data.dir" => self.data_dir = v.to_string(),
            "data.samples_per_composition" => e.samples_per_composition = parse(key, v)?,
            "data.unseen_fraction" => e.unseen_fraction = parse(key, v)?,
            "data.generalized" => e.generalized = parse_bool(key, v)?,
            "data.split_seed" => e.split_seed = parse(key, v)?,
            "data.seed" => e.data_seed = parse(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.lr_embedder" => t.lr_embedder = parse(key, v)?,
            "train.lr_other" => t.lr_other = parse(key, v)?,
            "train.decay_factor" => t.decay_factor = parse(key, v)?,
            "train.decay_epoch" => t.decay_epoch = parse(key, v)?,
            "train.n_critic" => t.n_critic = parse(key, v)?,
            "train.variant" => t.variant = v.parse()?,
            "train.label_space" => {
                t.label_space = match v {
                    "all" => LabelSpace::All,
                    "unseen" => LabelSpace::Unseen,
                    _ => return Err(Error::Config(format!("invalid value {v:?} for {key}; expected all or unseen"))),
                }
            }
            "train.cls_include_unseen" => t.cls_include_unseen = parse_bool(key, v)?,
            "train.seed" => t.seed = parse(key, v)?,
            "loss.lambda_cls" => t.weights.lambda_cls = parse(key, v)?,
            "loss.mu_cluster" => t.weights.mu_cluster = parse(key, v)?,
            "loss.lambda_gp" => t.weights.lambda_gp = parse(key, v)?,
            "loss.adversarial" => t.weights.use_adversarial = parse_bool(key, v)?,
            "loss.classification" => t.weights.use_classification = parse_bool(key, v)?,
            "loss.cluster" => t.weights.use_cluster = parse_bool(key, v)?,
            "model.embed_hidden" => t.model.embed_hidden = parse(key, v)?,
            "model.embed_out" => t.model.embed_out = parse(key, v)?,
            "model.gen_hidden" => {
                t.model.gen_hidden = v.split(',').map(|x| parse(key, x.trim())).collect::<Result<_>>()?
            }
            "model.noise_width" => t.model.noise_width = parse(key, v)?,
            "model.noise_hidden" => t.model.noise_hidden = parse(key, v)?,
            "model.disc_hidden" => t.model.disc_hidden = parse(key, v)?,
            "adam.beta1" => t.adam.beta1 = parse(key, v)?,
            "adam.beta2" => t.adam.beta2 = parse(key, v)?,
            "adam.eps" => t.adam.eps = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let e = &self.experiment;
        let w = &e.world;
        let t = &self.train;
        let s = match key {
            "world.attributes" => w.attributes.to_string(),
            "world.objects" => w.objects.to_string(),
            "world.raw_width" => w.raw_width.to_string(),
            "world.feature_width" => w.feature_width.to_string(),
            "world.sigma" => format!("{:?}", w.sigma),
            "world.seed" => w.seed.to_string(),
            "data.dir" => self.data_dir.clone(),
            "data.samples_per_composition" => e.samples_per_composition.to_string(),
            "data.unseen_fraction" => format!("{:?}", e.unseen_fraction),
            "data.generalized" => e.generalized.to_string(),
            "data.split_seed" => e.split_seed.to_string(),
            "data.seed" => e.data_seed.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.lr_embedder" => format!("{:?}", t.lr_embedder),
            "train.lr_other" => format!("{:?}", t.lr_other),
            "train.decay_factor" => format!("{:?}", t.decay_factor),
            "train.decay_epoch" => t.decay_epoch.to_string(),
            "train.n_critic" => t.n_critic.to_string(),
            "train.variant" => t.variant.to_string(),
            "train.label_space" => match t.label_space {
                LabelSpace::All => "all".into(),
                LabelSpace::Unseen => "unseen".into(),
            },
            "train.cls_include_unseen" => t.cls_include_unseen.to_string(),
            "train.seed" => t.seed.to_string(),
            "loss.lambda_cls" => format!("{:?}", t.weights.lambda_cls),
            "loss.mu_cluster" => format!("{:?}", t.weights.mu_cluster),
            "loss.lambda_gp" => format!("{:?}", t.weights.lambda_gp),
            "loss.adversarial" => t.weights.use_adversarial.to_string(),
            "loss.classification" => t.weights.use_classification.to_string(),
            "loss.cluster" => t.weights.use_cluster.to_string(),
            "model.embed_hidden" => t.model.embed_hidden.to_string(),
            "model.embed_out" => t.model.embed_out.to_string(),
            "model.gen_hidden" => t.model.gen_hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            "model.noise_width" => t.model.noise_width.to_string(),
            "model.noise_hidden" => t.model.noise_hidden.to_string(),
            "model.disc_hidden" => t.model.disc_hidden.to_string(),
            "adam.beta1" => format!("{:?}", t.adam.beta1),
            "adam.beta2" => format!("{:?}", t.adam.beta2),
            "adam.eps" => format!("{:?}", t.adam.eps),
            _ => return None,
        };
        Some(s)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse(&text)
    }

    /// Every key with its effective value, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }
}

#[derive(Parser, Debug)]
#[command(name = "compgen", version, about = "Task-aware feature synthesis for compositional zero-shot recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProtocolArg {
    Closed,
    Open,
    Generalized,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExportKind {
    Features,
    Noise,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic world and write features, split and vocabulary.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the world, split and samples.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write checkpoint and metrics into a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs (a later `--resume` continues).
        #[arg(long)]
        until: Option<usize>,
    },
    /// Score a trained run and write report.csv.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "closed")]
        protocol: ProtocolArg,
        /// Generalized protocol split: val or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Variant x seed matrix plus the clustering-loss toggle.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Comma-separated variant names.
        #[arg(long, default_value = "SS,UDS,SS-MTC+,SS-MTC*,TDS")]
        variants: String,
        /// Number of training seeds (0..N).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Write synthesized features or per-layer injected noise as CSV.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "features")]
        what: ExportKind,
        /// Rows per composition.
        #[arg(long, default_value_t = 20)]
        per_composition: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for s in &args.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn setup_for(cfg: &RunConfig) -> Result<Setup> {
    if cfg.data_dir.is_empty() {
        Setup::new(&cfg.experiment)
    } else {
        Setup::load(&cfg.data_dir)
    }
}

fn absolute(p: &Path) -> String {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
}

fn gen_data(mut cfg: RunConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    if let Some(s) = seed {
        cfg.experiment.world.seed = s;
        cfg.experiment.split_seed = s;
        cfg.experiment.data_seed = s.wrapping_add(1);
    }
    let setup = Setup::new(&cfg.experiment)?;
    setup.save(out)?;
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    println!(
        "wrote {} training rows, {} test rows, {} seen / {} unseen compositions to {}",
        setup.data.train.len(),
        setup.test.len(),
        setup.split.seen.len(),
        setup.split.unseen.len(),
        out.display()
    );
    Ok(())
}

fn train_cmd(mut cfg: RunConfig, data: Option<&Path>, out: &Path, seed: Option<u64>, resume: bool, until: Option<usize>) -> Result<()> {
    if let Some(d) = data {
        cfg.data_dir = absolute(d);
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.train.validate()?;
    let setup = setup_for(&cfg)?;
    if setup.split.generalized.is_some() && cfg.train.label_space == LabelSpace::Unseen {
        return Err(Error::Config("generalized runs score every composition; use train.label_space = all".into()));
    }
    create_dir(out)?;
    let ck_path = out.join(CHECKPOINT_FILE);
    let mut trainer = if resume {
        Trainer::resume(cfg.train.clone(), &setup.data, load_checkpoint(&ck_path, &cfg.train)?)?
    } else {
        Trainer::new(cfg.train.clone(), &setup.data)?
    };
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    let eval = setup.eval_data();
    let stop = until.unwrap_or(cfg.train.epochs);
    while trainer.epoch() < stop.min(cfg.train.epochs) {
        let m = trainer.run_epoch(&setup.data, Some(&eval))?;
        let val = m.val_top1_unseen.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "epoch {:>3}  critic {:>9.4}  generator {:>9.4}  val unseen top-1 {val}",
            m.epoch, m.critic_loss, m.gen_total
        );
        save_checkpoint(&trainer.checkpoint(), &ck_path)?;
        write(&out.join(METRICS_FILE), &metrics_csv(trainer.log()))?;
    }
    Ok(())
}

/// Config, data and trained models of a run directory.
pub fn open_run(run: &Path) -> Result<(RunConfig, Setup, Models)> {
    let cfg = RunConfig::from_file(run.join(CONFIG_ECHO))?;
    let setup = setup_for(&cfg)?;
    let ck = load_checkpoint(run.join(CHECKPOINT_FILE), &cfg.train)?;
    let trainer = Trainer::resume(cfg.train.clone(), &setup.data, ck)?;
    Ok((cfg, setup, trainer.models))
}

fn eval_cmd(run: &Path, protocol: Protocol, split: &str) -> Result<()> {
    let (_, setup, models) = open_run(run)?;
    let report = match protocol {
        Protocol::Closed | Protocol::Open => {
            let rows = setup.test.subset(&setup.split.unseen);
            evaluate_zscl(&models.score(&rows)?, &setup.split.unseen, protocol, "test")?
        }
        Protocol::Generalized => {
            let g = setup.split.generalized.as_ref().ok_or_else(|| {
                Error::Config("the generalized protocol needs data generated with data.generalized = true".into())
            })?;
            let unseen = match split {
                "val" => &g.val_unseen,
                "test" => &g.test_unseen,
                _ => return Err(Error::Config(format!("unknown split {split:?}; expected val or test"))),
            };
            let seen = &setup.split.seen;
            let own_seen = if split == "val" { &g.val_seen } else { &g.test_seen };
            let mut keep = own_seen.clone();
            keep.extend_from_slice(unseen);
            let scores = models.score(&setup.test.subset(&keep))?;
            // Seen samples come from the split's held-in compositions; every
            // training composition stays in the label space.
            let report = evaluate_generalized(&scores, seen, unseen, split)?;
            let curve = calibrated_sweep(&scores, seen, unseen, 1, &BiasGrid::Exact)?;
            write(&run.join(format!("curve_{split}.csv")), &curve.to_csv())?;
            report
        }
    };
    write(&run.join(REPORT_FILE), &report.to_csv())?;
    let names = |c: usize| {
        let (a, o) = setup.test.label_names(c);
        (a.to_string(), o.to_string())
    };
    write(&run.join("confusion.csv"), &report.confusion_csv(names))?;
    print!("{}", report.to_csv());
    Ok(())
}

fn table_rows(cells: &[Cell], keys: &[(Variant, f64)], label: impl Fn(Variant, f64) -> String) -> String {
    let mut s = String::new();
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{:?},{:?}",
            label(c.variant, c.mu_cluster),
            c.seed,
            c.closed_top1,
            c.open_top1
        );
    }
    for &(v, mu) in keys {
        let open: Vec<f64> = cells
            .iter()
            .filter(|c| c.variant == v && c.mu_cluster == mu)
            .map(|c| c.open_top1)
            .collect();
        let open_mean = open.iter().sum::<f64>() / open.len().max(1) as f64;
        let _ = writeln!(
            s,
            "{},mean,{:?},{:?}",
            label(v, mu),
            mean_top1(cells, v, mu).unwrap_or(f64::NAN),
            open_mean
        );
    }
    s
}

fn ablate_cmd(mut cfg: RunConfig, data: Option<&Path>, out: &Path, variants: &str, seeds: u64) -> Result<()> {
    if let Some(d) = data {
        cfg.data_dir = absolute(d);
    }
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let variants: Vec<Variant> = variants.split(',').map(|v| v.trim().parse()).collect::<Result<_>>()?;
    cfg.train.validate()?;
    let setup = setup_for(&cfg)?;
    create_dir(out)?;
    write(&out.join(CONFIG_ECHO), &cfg.to_text())?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let threads = thread_cap();
    let mu = cfg.train.weights.mu_cluster;

    let cells = ablation(&setup, &cfg.train, &variants, &[mu], &seeds, threads)?;
    let keys: Vec<(Variant, f64)> = variants.iter().map(|&v| (v, mu)).collect();
    let mut t2 = String::from("variant,seed,closed_top1,open_top1\n");
    t2.push_str(&table_rows(&cells, &keys, |v, _| v.label().to_string()));
    write(&out.join("table2.csv"), &t2)?;
    print!("{t2}");

    let tds = Variant::Tds;
    let mut toggled: Vec<Cell> = cells.iter().filter(|c| c.variant == tds).cloned().collect();
    if toggled.is_empty() {
        toggled = ablation(&setup, &cfg.train, &[tds], &[mu], &seeds, threads)?;
    }
    toggled.extend(ablation(&setup, &cfg.train, &[tds], &[0.0], &seeds, threads)?);
    let mut t3 = String::from("setting,seed,closed_top1,open_top1\n");
    t3.push_str(&table_rows(&toggled, &[(tds, mu), (tds, 0.0)], |_, m| {
        if m > 0.0 {
            format!("with_cluster_mu={m:?}")
        } else {
            "without_cluster".to_string()
        }
    }));
    write(&out.join("table3.csv"), &t3)?;
    print!("{t3}");
    Ok(())
}

fn export_cmd(run: &Path, what: ExportKind, per: usize, seed: u64) -> Result<()> {
    if per == 0 {
        return Err(Error::Config("--per-composition must be at least 1".into()));
    }
    let (_, setup, models) = open_run(run)?;
    let dir = run.join(EXPORT_DIR);
    create_dir(&dir)?;
    let comps = setup.data.embeddings.compositions.len();
    let labels: Vec<usize> = (0..comps).flat_map(|c| std::iter::repeat_n(c, per)).collect();
    let names: Vec<(String, String)> = labels
        .iter()
        .map(|&c| {
            let (a, o) = setup.test.label_names(c);
            (a.to_string(), o.to_string())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (features, injections) = models.synthesize_detailed(&setup.data.embeddings, &labels, &mut rng)?;
    match what {
        ExportKind::Features => {
            let path = dir.join("features.csv");
            write(&path, &embeddings_csv(features.cols(), features.values(), &names)?)?;
            println!("wrote {}", path.display());
        }
        ExportKind::Noise => {
            if injections.is_empty() {
                return Err(Error::Config(format!("variant {} injects no per-layer noise", models.generator.spec.variant)));
            }
            for (i, inj) in injections.iter().enumerate() {
                let path = dir.join(format!("noise_l{i}.csv"));
                write(&path, &embeddings_csv(inj.cols(), inj.values(), &names)?)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out, seed } => gen_data(load_config(&config)?, &out, seed),
        Command::Train {
            config,
            data,
            out,
            seed,
            resume,
            until,
        } => train_cmd(load_config(&config)?, data.as_deref(), &out, seed, resume, until),
        Command::Eval { run, protocol, split } => {
            let p = match protocol {
                ProtocolArg::Closed => Protocol::Closed,
                ProtocolArg::Open => Protocol::Open,
                ProtocolArg::Generalized => Protocol::Generalized,
            };
            eval_cmd(&run, p, &split)
        }
        Command::Ablate {
            config,
            data,
            out,
            variants,
            seeds,
        } => ablate_cmd(load_config(&config)?, data.as_deref(), &out, &variants, seeds),
        Command::Export {
            run,
            what,
            per_composition,
            seed,
        } => export_cmd(&run, what, per_composition, seed),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
