//! Joint min-max training of embedder, generator, critic and classifier.
//!
//! One batch cycle runs `n_critic` critic ascent steps followed by one
//! generator/classifier step. An epoch is `ceil(train_rows / batch_size)`
//! cycles; the learning rates are multiplied by `decay_factor` from
//! `decay_epoch` (0-based) onwards.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, RngState,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{Composition, Dataset, SplitSpec};
use crate::diff::{AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::evaluation::{auc_from_curve, calibrated_sweep, topk_accuracy, BiasGrid, Scores};
use crate::losses::{adv_loss, cls_loss, cluster_loss, total_objective, Components, LossWeights};
use crate::models::{Classifier, Discriminator, EmbedderConfig, Generator, GeneratorSpec, TaskEmbedder, Variant};

/// Network sizes not implied by the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub embed_hidden: usize,
    pub embed_out: usize,
    /// Hidden trunk widths; the feature width is appended as the output layer.
    pub gen_hidden: Vec<usize>,
    pub noise_width: usize,
    pub noise_hidden: usize,
    pub disc_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_hidden: 32,
            embed_out: 16,
            gen_hidden: vec![64, 64, 64],
            noise_width: 64,
            noise_hidden: 32,
            disc_hidden: 64,
        }
    }
}

impl ModelConfig {
    /// Layer sizes used for full-scale CNN features.
    pub fn full_scale() -> Self {
        ModelConfig {
            embed_hidden: 1024,
            embed_out: 300,
            gen_hidden: vec![2048, 2048, 2048],
            noise_width: 64,
            noise_hidden: 1024,
            disc_hidden: 1024,
        }
    }
}

/// Which compositions the classifier scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelSpace {
    All,
    Unseen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_embedder: f64,
    pub lr_other: f64,
    pub decay_factor: f64,
    pub decay_epoch: usize,
    pub n_critic: usize,
    pub variant: Variant,
    pub weights: LossWeights,
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub label_space: LabelSpace,
    /// Whether L_cls also synthesizes features of unseen compositions.
    pub cls_include_unseen: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 64,
            lr_embedder: 1e-4,
            lr_other: 1e-3,
            decay_factor: 0.1,
            decay_epoch: 30,
            n_critic: 5,
            variant: Variant::Tds,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
            adam: AdamConfig::default(),
            label_space: LabelSpace::All,
            cls_include_unseen: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.decay_epoch > self.epochs {
            return Err(Error::Config(format!(
                "train.decay_epoch {} exceeds train.epochs {}",
                self.decay_epoch, self.epochs
            )));
        }
        if self.n_critic == 0 {
            return Err(Error::Config("train.n_critic must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        for (k, v) in [("train.lr_embedder", self.lr_embedder), ("train.lr_other", self.lr_other)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        if !(self.decay_factor > 0.0) || !self.decay_factor.is_finite() {
            return Err(Error::Config(format!("train.decay_factor must be positive, got {}", self.decay_factor)));
        }
        if self.label_space == LabelSpace::Unseen && !self.cls_include_unseen {
            return Err(Error::Config(
                "an unseen-only classifier needs unseen compositions in the classification loss".into(),
            ));
        }
        self.weights.validate()
    }

    /// Learning-rate multiplier for a 0-based epoch.
    pub fn lr_scale(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.decay_factor
        } else {
            1.0
        }
    }

    /// Canonical text rendering; floats use their exact shortest form.
    pub fn canonical(&self) -> String {
        let w = &self.weights;
        let m = &self.model;
        format!(
            "epochs={} batch_size={} lr_embedder={:?} lr_other={:?} decay_factor={:?} decay_epoch={} \
             n_critic={} variant={} lambda_cls={:?} mu_cluster={:?} lambda_gp={:?} adv={} cls={} cluster={} \
             embed_hidden={} embed_out={} gen_hidden={:?} noise_width={} noise_hidden={} disc_hidden={} \
             beta1={:?} beta2={:?} eps={:?} label_space={:?} cls_include_unseen={} seed={}",
            self.epochs,
            self.batch_size,
            self.lr_embedder,
            self.lr_other,
            self.decay_factor,
            self.decay_epoch,
            self.n_critic,
            self.variant,
            w.lambda_cls,
            w.mu_cluster,
            w.lambda_gp,
            w.use_adversarial,
            w.use_classification,
            w.use_cluster,
            m.embed_hidden,
            m.embed_out,
            m.gen_hidden,
            m.noise_width,
            m.noise_hidden,
            m.disc_hidden,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.eps,
            self.label_space,
            self.cls_include_unseen,
            self.seed
        )
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }
}

/// Raw attribute and object embeddings aligned with a label space.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub attr: Vec<Vec<f64>>,
    pub obj: Vec<Vec<f64>>,
    pub compositions: Vec<Composition>,
}

impl Embeddings {
    pub fn raw_width(&self) -> usize {
        self.attr.first().map(Vec::len).unwrap_or(0)
    }

    /// `[n, raw]` attribute and object matrices for composition labels.
    pub fn task_inputs(&self, labels: &[usize]) -> Result<(Tensor, Tensor)> {
        let r = self.raw_width();
        let mut a = Vec::with_capacity(labels.len() * r);
        let mut o = Vec::with_capacity(labels.len() * r);
        for &l in labels {
            let c = self
                .compositions
                .get(l)
                .ok_or_else(|| Error::invalid(format!("composition {l} outside label space")))?;
            a.extend_from_slice(&self.attr[c.attr]);
            o.extend_from_slice(&self.obj[c.obj]);
        }
        Ok((Tensor::matrix(labels.len(), r, a)?, Tensor::matrix(labels.len(), r, o)?))
    }
}

/// Everything a run trains on.
#[derive(Clone, Debug)]
pub struct TrainingData {
    /// Real features of seen compositions.
    pub train: Dataset,
    pub embeddings: Embeddings,
    pub split: SplitSpec,
}

impl TrainingData {
    pub fn new(dataset: &Dataset, embeddings: Embeddings, split: SplitSpec) -> Result<Self> {
        split.validate(&dataset.compositions, dataset.attributes.len(), dataset.objects.len())?;
        let train = dataset.subset(&split.seen);
        if train.is_empty() {
            return Err(Error::Config("no training rows for the seen compositions".into()));
        }
        Ok(TrainingData {
            train,
            embeddings,
            split,
        })
    }
}

/// Held-out data scored at the end of every epoch.
#[derive(Clone, Debug)]
pub struct EvalData {
    pub dataset: Dataset,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    /// Whether to report the calibrated AUC.
    pub generalized: bool,
}

/// The four models and their parameters.
#[derive(Clone, Debug)]
pub struct Models {
    pub embedder: TaskEmbedder,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub classifier: Classifier,
    /// Composition index of each classifier output.
    pub classes: Vec<usize>,
    pub phi: ParamStore,
    pub gen: ParamStore,
    pub disc: ParamStore,
    pub cls: ParamStore,
}

impl Models {
    pub fn init<R: Rng>(
        config: &TrainConfig,
        raw_width: usize,
        feature_width: usize,
        classes: Vec<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let m = &config.model;
        let (embedder, phi) = TaskEmbedder::init(
            EmbedderConfig {
                raw_width,
                hidden: m.embed_hidden,
                out: m.embed_out,
            },
            rng,
        )?;
        let mut widths = m.gen_hidden.clone();
        widths.push(feature_width);
        let (generator, gen) = Generator::init(
            GeneratorSpec {
                variant: config.variant,
                task_width: embedder.task_width(),
                widths,
                noise_width: m.noise_width,
                noise_hidden: m.noise_hidden,
            },
            rng,
        )?;
        let (discriminator, disc) = Discriminator::init(feature_width, embedder.task_width(), m.disc_hidden, rng)?;
        let (classifier, cls) = Classifier::init(feature_width, classes.len(), rng)?;
        Ok(Models {
            embedder,
            generator,
            discriminator,
            classifier,
            classes,
            phi,
            gen,
            disc,
            cls,
        })
    }

    pub fn stores(&self) -> [&ParamStore; 4] {
        [&self.phi, &self.gen, &self.disc, &self.cls]
    }

    fn embed(&self, g: &mut Graph, emb: &Embeddings, labels: &[usize]) -> Result<Var> {
        let (a, o) = emb.task_inputs(labels)?;
        let a = g.constant(a)?;
        let o = g.constant(o)?;
        self.embedder.embed_task(g, &self.phi, a, o)
    }

    fn noise(&self, g: &mut Graph, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Var>> {
        self.generator
            .spec
            .sample_noise(batch, rng)
            .into_iter()
            .map(|n| g.constant(n))
            .collect()
    }

    /// Synthesizes features for composition labels with frozen parameters.
    pub fn synthesize(&self, emb: &Embeddings, labels: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
        Ok(self.synthesize_detailed(emb, labels, rng)?.0)
    }

    /// Features plus the per-site injected terms.
    pub fn synthesize_detailed(
        &self,
        emb: &Embeddings,
        labels: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let mut g = Graph::new();
        for s in self.stores() {
            g.freeze(s);
        }
        let t = self.embed(&mut g, emb, labels)?;
        let noise = self.noise(&mut g, labels.len(), rng)?;
        let out = self.generator.forward(&mut g, &self.gen, t, &noise)?;
        let injections = out.injections.iter().map(|v| g.value(*v).clone()).collect();
        Ok((g.value(out.features).clone(), injections))
    }

    /// Classifier scores for every row of a dataset.
    pub fn score(&self, dataset: &Dataset) -> Result<Scores> {
        let mut values = Vec::with_capacity(dataset.len() * self.classes.len());
        let chunk = 256;
        for start in (0..dataset.len()).step_by(chunk) {
            let idx: Vec<usize> = (start..(start + chunk).min(dataset.len())).collect();
            let logits = self.classifier.logits(&self.cls, &dataset.gather(&idx)?)?;
            values.extend_from_slice(logits.values());
        }
        Scores::new(values, self.classes.clone(), dataset.labels.clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticRecord {
    /// Critic objective `−adv_loss`.
    pub loss: f64,
    pub wgan: f64,
    /// Batch mean of `(‖∇‖ − 1)²`.
    pub penalty: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorRecord {
    pub total: f64,
    /// `−mean D(ẑ)`.
    pub adv: f64,
    pub cls: f64,
    pub cluster: f64,
    pub updated: bool,
}

/// Real features of seen compositions with their labels.
#[derive(Clone, Debug)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_rows(data: &Dataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        Ok(Batch {
            features: data.gather(rows)?,
            labels: rows.iter().map(|&r| data.labels[r]).collect(),
        })
    }

    pub fn sample(data: &Dataset, size: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let n = data.len();
        let rows = index::sample(rng, n, size.min(n)).into_vec();
        Batch::from_rows(data, &rows)
    }
}

/// One Adam ascent step of the critic on `adv_loss`; other models untouched.
pub fn critic_step(
    models: &mut Models,
    config: &TrainConfig,
    emb: &Embeddings,
    batch: &Batch,
    lr_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CriticRecord> {
    let n = batch.labels.len();
    if n == 0 {
        return Err(Error::invalid("empty critic batch"));
    }
    let mut g = Graph::new();
    g.freeze(&models.phi);
    g.freeze(&models.gen);
    let t = models.embed(&mut g, emb, &batch.labels)?;
    let noise = models.noise(&mut g, n, rng)?;
    let fake = models.generator.forward(&mut g, &models.gen, t, &noise)?.features;
    let real = g.constant(batch.features.clone())?;
    let alphas: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let disc = &models.discriminator;
    let disc_store = &models.disc;
    let adv = adv_loss(
        &mut g,
        |g, z, t| disc.forward(g, disc_store, z, t),
        real,
        fake,
        t,
        &alphas,
        config.weights.lambda_gp,
    )?;
    let components = Components {
        adv: Some(adv.value),
        ..Components::default()
    };
    let objective = total_objective(&mut g, &components, &config.weights)?;
    let record = CriticRecord {
        loss: -g.value(adv.value).item()?,
        wgan: g.value(adv.wgan).item()?,
        penalty: g.value(adv.penalty.node).item()?,
    };
    if let Some(obj) = objective.discriminator {
        let grads = g.param_gradients(obj, &models.disc)?;
        models.disc.adam_update(&grads, config.lr_other * lr_scale, config.adam)?;
    }
    Ok(record)
}

/// Compositions the classification loss synthesizes, as classifier indices.
fn synthesis_pool(models: &Models, config: &TrainConfig, split: &SplitSpec) -> Vec<usize> {
    models
        .classes
        .iter()
        .enumerate()
        .filter(|(_, c)| config.cls_include_unseen || split.seen.contains(c))
        .map(|(i, _)| i)
        .collect()
}

/// One joint Adam step on embedder, generator and classifier; critic untouched.
pub fn generator_classifier_step(
    models: &mut Models,
    config: &TrainConfig,
    data: &TrainingData,
    batch: &Batch,
    lr_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratorRecord> {
    let w = &config.weights;
    let n = batch.labels.len();
    if n == 0 {
        return Err(Error::invalid("empty generator batch"));
    }
    if !w.any_generator_term() {
        return Ok(GeneratorRecord::default());
    }
    let emb = &data.embeddings;
    let mut g = Graph::new();
    g.freeze(&models.disc);
    let mut components = Components::default();
    if w.use_adversarial || w.use_cluster {
        let t = models.embed(&mut g, emb, &batch.labels)?;
        let noise = models.noise(&mut g, n, rng)?;
        let fake = models.generator.forward(&mut g, &models.gen, t, &noise)?.features;
        if w.use_adversarial {
            let scores = models.discriminator.forward(&mut g, &models.disc, fake, t)?;
            components.fake_score_mean = Some(g.mean(scores)?);
        }
        if w.use_cluster {
            let real = g.constant(batch.features.clone())?;
            components.cluster = Some(cluster_loss(&mut g, fake, real)?);
        }
    }
    if w.use_classification {
        let pool = synthesis_pool(models, config, &data.split);
        if pool.is_empty() {
            return Err(Error::Config("classification loss has no compositions to synthesize".into()));
        }
        let class_idx: Vec<usize> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let comps: Vec<usize> = class_idx.iter().map(|&i| models.classes[i]).collect();
        let t = models.embed(&mut g, emb, &comps)?;
        let noise = models.noise(&mut g, n, rng)?;
        let fake = models.generator.forward(&mut g, &models.gen, t, &noise)?.features;
        let logits = models.classifier.forward(&mut g, &models.cls, fake)?;
        components.cls = Some(cls_loss(&mut g, logits, &class_idx)?);
    }
    let objective = total_objective(&mut g, &components, w)?;
    let item = |g: &Graph, v: Option<Var>| v.map(|v| g.value(v).item()).transpose().map(|x| x.unwrap_or(0.0));
    let mut record = GeneratorRecord {
        total: item(&g, objective.generator)?,
        adv: -item(&g, components.fake_score_mean)?,
        cls: item(&g, components.cls)?,
        cluster: item(&g, components.cluster)?,
        updated: false,
    };
    if let Some(obj) = objective.generator {
        let grads = g.backward(obj)?;
        let lr = config.lr_other * lr_scale;
        if grads.touches(&models.phi) {
            models
                .phi
                .adam_update(&grads.for_store(&models.phi), config.lr_embedder * lr_scale, config.adam)?;
        }
        if grads.touches(&models.gen) {
            models.gen.adam_update(&grads.for_store(&models.gen), lr, config.adam)?;
        }
        if grads.touches(&models.cls) {
            models.cls.adam_update(&grads.for_store(&models.cls), lr, config.adam)?;
        }
        record.updated = true;
    }
    Ok(record)
}

/// Per-epoch training log row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr_embedder: f64,
    pub lr_other: f64,
    pub critic_loss: f64,
    pub wgan: f64,
    pub penalty: f64,
    pub gen_adv: f64,
    pub cls: f64,
    pub cluster: f64,
    pub gen_total: f64,
    pub val_top1_seen: Option<f64>,
    pub val_top1_unseen: Option<f64>,
    pub val_auc_top1: Option<f64>,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,lr_embedder,lr_other,critic_loss,wgan,penalty,gen_adv,cls,cluster,gen_total,val_top1_seen,val_top1_unseen,val_auc_top1";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{}",
            self.epoch,
            self.lr_embedder,
            self.lr_other,
            self.critic_loss,
            self.wgan,
            self.penalty,
            self.gen_adv,
            self.cls,
            self.cluster,
            self.gen_total,
            opt(self.val_top1_seen),
            opt(self.val_top1_unseen),
            opt(self.val_auc_top1)
        )
    }
}

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut s = String::from(EpochMetrics::CSV_HEADER);
    s.push('\n');
    for m in log {
        s.push_str(&m.csv_row());
        s.push('\n');
    }
    s
}

/// Validation metrics for one epoch: seen top-1 over seen ∪ unseen, unseen
/// top-1 restricted to unseen, and the calibrated top-1 AUC when requested.
pub fn validation_metrics(models: &Models, eval: &EvalData) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    let scores = models.score(&eval.dataset)?;
    let mut space = eval.seen.clone();
    space.extend_from_slice(&eval.unseen);
    let seen_rows = scores.rows_with_labels(&eval.seen);
    let unseen_rows = scores.rows_with_labels(&eval.unseen);
    let seen = if seen_rows.is_empty() {
        None
    } else {
        Some(topk_accuracy(&scores.select_rows(&seen_rows), &space, 1)?)
    };
    let unseen = if unseen_rows.is_empty() {
        None
    } else {
        Some(topk_accuracy(&scores.select_rows(&unseen_rows), &eval.unseen, 1)?)
    };
    let auc = if eval.generalized && seen.is_some() && unseen.is_some() {
        let curve = calibrated_sweep(&scores, &eval.seen, &eval.unseen, 1, &BiasGrid::Exact)?;
        Some(auc_from_curve(&curve)?)
    } else {
        None
    };
    Ok((seen, unseen, auc))
}

/// Owns a run's models, RNG and log; resumable from a [`Checkpoint`].
pub struct Trainer {
    pub config: TrainConfig,
    pub models: Models,
    rng: ChaCha8Rng,
    epoch: usize,
    log: Vec<EpochMetrics>,
}

fn classes_for(config: &TrainConfig, data: &TrainingData) -> Vec<usize> {
    match config.label_space {
        LabelSpace::All => (0..data.train.compositions.len()).collect(),
        LabelSpace::Unseen => data.split.unseen.clone(),
    }
}

impl Trainer {
    pub fn new(config: TrainConfig, data: &TrainingData) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let models = Models::init(
            &config,
            data.embeddings.raw_width(),
            data.train.width,
            classes_for(&config, data),
            &mut rng,
        )?;
        Ok(Trainer {
            config,
            models,
            rng,
            epoch: 0,
            log: Vec::new(),
        })
    }

    /// Restores a run; the checkpoint must have been written under `config`.
    pub fn resume(config: TrainConfig, data: &TrainingData, checkpoint: Checkpoint) -> Result<Self> {
        checkpoint.verify_config(&config)?;
        let mut trainer = Trainer::new(config, data)?;
        let restore = |slot: &mut ParamStore, store: ParamStore| -> Result<()> {
            let same = slot.name() == store.name()
                && slot.len() == store.len()
                && slot.iter().zip(store.iter()).all(|((a, x), (b, y))| a == b && x.shape() == y.shape());
            if !same {
                return Err(Error::Format(format!("checkpoint store {} does not match the model", store.name())));
            }
            *slot = store;
            Ok(())
        };
        if checkpoint.stores.len() != 4 {
            return Err(Error::Format("checkpoint must hold four parameter stores".into()));
        }
        let mut stores = checkpoint.stores.into_iter();
        let m = &mut trainer.models;
        restore(&mut m.phi, stores.next().expect("4 stores"))?;
        restore(&mut m.gen, stores.next().expect("4 stores"))?;
        restore(&mut m.disc, stores.next().expect("4 stores"))?;
        restore(&mut m.cls, stores.next().expect("4 stores"))?;
        if checkpoint.classes != m.classes {
            return Err(Error::Format("checkpoint classifier label space differs".into()));
        }
        trainer.rng = checkpoint.rng.restore();
        trainer.epoch = checkpoint.epoch;
        trainer.log = checkpoint.log;
        Ok(trainer)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn log(&self) -> &[EpochMetrics] {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn run_epoch(&mut self, data: &TrainingData, eval: Option<&EvalData>) -> Result<EpochMetrics> {
        if self.is_finished() {
            return Err(Error::invalid("training already finished"));
        }
        let scale = self.config.lr_scale(self.epoch);
        let cycles = data.train.len().div_ceil(self.config.batch_size);
        let mut critic = (0.0, 0.0, 0.0, 0usize);
        let mut gen = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..cycles {
            if self.config.weights.use_adversarial {
                for _ in 0..self.config.n_critic {
                    let batch = Batch::sample(&data.train, self.config.batch_size, &mut self.rng)?;
                    let r = critic_step(
                        &mut self.models,
                        &self.config,
                        &data.embeddings,
                        &batch,
                        scale,
                        &mut self.rng,
                    )?;
                    critic.0 += r.loss;
                    critic.1 += r.wgan;
                    critic.2 += r.penalty;
                    critic.3 += 1;
                }
            }
            let batch = Batch::sample(&data.train, self.config.batch_size, &mut self.rng)?;
            let r = generator_classifier_step(&mut self.models, &self.config, data, &batch, scale, &mut self.rng)?;
            gen.0 += r.adv;
            gen.1 += r.cls;
            gen.2 += r.cluster;
            gen.3 += r.total;
        }
        let cn = critic.3.max(1) as f64;
        let gn = cycles as f64;
        let (val_top1_seen, val_top1_unseen, val_auc_top1) = match eval {
            Some(e) => validation_metrics(&self.models, e)?,
            None => (None, None, None),
        };
        self.epoch += 1;
        let metrics = EpochMetrics {
            epoch: self.epoch,
            lr_embedder: self.config.lr_embedder * scale,
            lr_other: self.config.lr_other * scale,
            critic_loss: critic.0 / cn,
            wgan: critic.1 / cn,
            penalty: critic.2 / cn,
            gen_adv: gen.0 / gn,
            cls: gen.1 / gn,
            cluster: gen.2 / gn,
            gen_total: gen.3 / gn,
            val_top1_seen,
            val_top1_unseen,
            val_auc_top1,
        };
        self.log.push(metrics);
        Ok(metrics)
    }

    /// Trains until `epoch` epochs have completed (capped at the configured total).
    pub fn run_until(&mut self, epoch: usize, data: &TrainingData, eval: Option<&EvalData>) -> Result<()> {
        while self.epoch < epoch.min(self.config.epochs) {
            self.run_epoch(data, eval)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch,
            config_digest: self.config.digest(),
            rng: RngState::capture(&self.rng),
            classes: self.models.classes.clone(),
            stores: self.models.stores().into_iter().cloned().collect(),
            log: self.log.clone(),
        }
    }
}

/// Final checkpoint and per-epoch log of a completed run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochMetrics>,
    pub models: Models,
}

/// Runs every configured epoch from scratch.
pub fn train(data: &TrainingData, config: &TrainConfig, eval: Option<&EvalData>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), data)?;
    trainer.run_until(config.epochs, data, eval)?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        log: trainer.log.clone(),
        models: trainer.models,
    })
}
