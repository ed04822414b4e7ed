//! Synthetic-world experiments: setup, single runs and ablation matrices.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{
    make_generalized_split, make_zscl_split, read_features, read_split, read_vocabulary, sample_dataset, synth_world,
    write_features, write_split, write_vocabulary, Dataset, GeneralizedCounts, SplitSpec, Vocabulary, WorldConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{topk_accuracy, Protocol};
use crate::models::Variant;
use crate::training::{train, Embeddings, EpochMetrics, EvalData, Models, TrainConfig, TrainingData};

pub const TRAIN_FILE: &str = "train.cgf";
pub const TEST_FILE: &str = "test.cgf";
pub const SPLIT_FILE: &str = "split.txt";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub samples_per_composition: usize,
    pub unseen_fraction: f64,
    pub generalized: bool,
    pub split_seed: u64,
    pub data_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            samples_per_composition: 50,
            unseen_fraction: 0.4,
            generalized: false,
            split_seed: 0,
            data_seed: 1,
        }
    }
}

impl Embeddings {
    pub fn from_vocabulary(vocab: &Vocabulary, dataset: &Dataset) -> Result<Self> {
        let (attr, obj) = vocab.lookup(dataset)?;
        Ok(Embeddings {
            attr,
            obj,
            compositions: dataset.compositions.clone(),
        })
    }
}

/// Split, training rows and a held-out evaluation sample.
#[derive(Clone, Debug)]
pub struct Setup {
    pub vocabulary: Vocabulary,
    pub split: SplitSpec,
    pub data: TrainingData,
    /// Fresh samples of every composition, drawn independently of the training rows.
    pub test: Dataset,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let world = synth_world(&cfg.world)?;
        let split = if cfg.generalized {
            make_generalized_split(&world, GeneralizedCounts::for_label_space(world.composition_count()), cfg.split_seed)?
        } else {
            make_zscl_split(&world, cfg.unseen_fraction, cfg.split_seed)?
        };
        let train_rows = sample_dataset(&world, cfg.samples_per_composition, cfg.data_seed)?;
        let test = sample_dataset(&world, cfg.samples_per_composition, cfg.data_seed.wrapping_add(0x9e37_79b9))?;
        Setup::from_parts(world.vocabulary(), split, &train_rows, test)
    }

    pub fn from_parts(vocabulary: Vocabulary, split: SplitSpec, train_rows: &Dataset, test: Dataset) -> Result<Self> {
        if test.compositions != train_rows.compositions || test.width != train_rows.width {
            return Err(Error::Config("training and test files describe different label spaces".into()));
        }
        let embeddings = Embeddings::from_vocabulary(&vocabulary, train_rows)?;
        let data = TrainingData::new(train_rows, embeddings, split.clone())?;
        Ok(Setup {
            vocabulary,
            split,
            data,
            test,
        })
    }

    /// Writes `train.cgf`, `test.cgf`, `split.txt` and `vocab.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        write_features(&self.data.train, dir.join(TRAIN_FILE))?;
        write_features(&self.test, dir.join(TEST_FILE))?;
        write_split(&self.split, dir.join(SPLIT_FILE))?;
        write_vocabulary(&self.vocabulary, dir.join(VOCAB_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let train_rows = read_features(dir.join(TRAIN_FILE))?;
        let test = read_features(dir.join(TEST_FILE))?;
        let split = read_split(dir.join(SPLIT_FILE))?;
        let vocabulary = read_vocabulary(dir.join(VOCAB_FILE))?;
        Setup::from_parts(vocabulary, split, &train_rows, test)
    }

    /// Seen and unseen compositions of the test sample used for per-epoch validation.
    pub fn eval_data(&self) -> EvalData {
        let (seen, unseen) = match &self.split.generalized {
            Some(g) => (g.val_seen.clone(), g.val_unseen.clone()),
            None => (Vec::new(), self.split.unseen.clone()),
        };
        let mut keep = seen.clone();
        keep.extend_from_slice(&unseen);
        EvalData {
            dataset: self.test.subset(&keep),
            seen,
            unseen,
            generalized: self.split.generalized.is_some(),
        }
    }

    /// Top-1 on the unseen test rows, closed or open world.
    pub fn unseen_top1(&self, models: &Models, protocol: Protocol) -> Result<f64> {
        let rows = self.test.subset(&self.split.unseen);
        let scores = models.score(&rows)?;
        let space = match protocol {
            Protocol::Closed => self.split.unseen.clone(),
            Protocol::Open => models.classes.clone(),
            Protocol::Generalized => return Err(Error::invalid("unseen_top1 covers the closed and open protocols")),
        };
        topk_accuracy(&scores, &space, 1)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub closed_top1: f64,
    pub open_top1: f64,
    pub log: Vec<EpochMetrics>,
}

pub fn run(setup: &Setup, config: &TrainConfig) -> Result<RunResult> {
    let out = train(&setup.data, config, None)?;
    Ok(RunResult {
        closed_top1: setup.unseen_top1(&out.models, Protocol::Closed)?,
        open_top1: if out.models.classes.len() > setup.split.unseen.len() {
            setup.unseen_top1(&out.models, Protocol::Open)?
        } else {
            f64::NAN
        },
        log: out.log,
    })
}

/// One cell of an ablation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub variant: Variant,
    pub mu_cluster: f64,
    pub seed: u64,
    pub closed_top1: f64,
    pub open_top1: f64,
}

/// Every `(variant, μ, seed)` combination, trained in parallel and returned
/// in that lexicographic order.
pub fn ablation(
    setup: &Setup,
    base: &TrainConfig,
    variants: &[Variant],
    mus: &[f64],
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<Cell>> {
    let mut jobs = Vec::new();
    for &variant in variants {
        for &mu in mus {
            for &seed in seeds {
                jobs.push((variant, mu, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(variant, mu, seed)| {
                let mut cfg = base.clone();
                cfg.variant = variant;
                cfg.weights.mu_cluster = mu;
                cfg.weights.use_cluster = mu > 0.0 && base.weights.use_cluster;
                cfg.seed = seed;
                let r = run(setup, &cfg)?;
                Ok(Cell {
                    variant,
                    mu_cluster: mu,
                    seed,
                    closed_top1: r.closed_top1,
                    open_top1: r.open_top1,
                })
            })
            .collect()
    })
}

/// Mean closed-world top-1 of the cells matching `variant` and `mu`.
pub fn mean_top1(cells: &[Cell], variant: Variant, mu: f64) -> Option<f64> {
    let v: Vec<f64> = cells
        .iter()
        .filter(|c| c.variant == variant && c.mu_cluster == mu)
        .map(|c| c.closed_top1)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Worker count from `COMPGEN_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("COMPGEN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
