//! Task embedder, generator variants, critic and classifier.
//!
//! Each model owns a named [`ParamStore`]; forward passes record onto a
//! caller-provided [`Graph`]. Hidden layers use leaky-relu with slope
//! [`LEAKY_SLOPE`]; output layers are linear.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diff::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Registers `prefix.l{i}.w` / `prefix.l{i}.b` for a dense stack with the given widths.
fn register_stack<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    widths: &[usize],
    bias: bool,
    rng: &mut R,
) -> Result<()> {
    for (i, pair) in widths.windows(2).enumerate() {
        let (fan_in, out) = (pair[0], pair[1]);
        store.insert_uniform(format!("{prefix}l{i}.w"), &[out, fan_in], fan_in, rng)?;
        if bias {
            store.insert_uniform(format!("{prefix}l{i}.b"), &[out], fan_in, rng)?;
        }
    }
    Ok(())
}

fn affine_layer(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{name}.w"))?;
    let b = match store.get(&format!("{name}.b")) {
        Some(_) => Some(g.param(store, &format!("{name}.b"))?),
        None => None,
    };
    g.affine(x, w, b)
}

/// Affine layers with leaky-relu between them and none after the last.
fn forward_stack(g: &mut Graph, store: &ParamStore, prefix: &str, layers: usize, x: Var) -> Result<Var> {
    let mut h = x;
    for i in 0..layers {
        if i > 0 {
            h = g.leaky_relu(h, LEAKY_SLOPE)?;
        }
        h = affine_layer(g, store, &format!("{prefix}l{i}"), h)?;
    }
    Ok(h)
}

fn check_width(op: &'static str, g: &Graph, v: Var, expected: usize) -> Result<()> {
    let got = g.value(v).cols();
    if got != expected {
        return Err(Error::shape(op, format!("expected width {expected}, got {got}")));
    }
    Ok(())
}

// ── task embedder ────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbedderConfig {
    pub raw_width: usize,
    pub hidden: usize,
    /// Per-branch output width; the task description is twice this.
    pub out: usize,
}

/// φ_a and φ_o: two 2-layer networks whose outputs are concatenated.
#[derive(Clone, Debug)]
pub struct TaskEmbedder {
    pub config: EmbedderConfig,
}

impl TaskEmbedder {
    pub const STORE: &'static str = "phi";

    pub fn init<R: Rng>(config: EmbedderConfig, rng: &mut R) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new(Self::STORE);
        let widths = [config.raw_width, config.hidden, config.out];
        register_stack(&mut store, "a.", &widths, true, rng)?;
        register_stack(&mut store, "o.", &widths, true, rng)?;
        Ok((TaskEmbedder { config }, store))
    }

    pub fn task_width(&self) -> usize {
        2 * self.config.out
    }

    /// `concat(φ_a(attr), φ_o(obj))` for a batch of raw embeddings.
    pub fn embed_task(&self, g: &mut Graph, store: &ParamStore, attr: Var, obj: Var) -> Result<Var> {
        check_width("embed_task", g, attr, self.config.raw_width)?;
        check_width("embed_task", g, obj, self.config.raw_width)?;
        let a = forward_stack(g, store, "a.", 2, attr)?;
        let o = forward_stack(g, store, "o.", 2, obj)?;
        g.concat_cols(a, o)
    }
}

// ── generator ────────────────────────────────────────────────────────

/// Generator architectures compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Shallow sampling: one noise draw concatenated with the task at the input.
    Ss,
    /// Unconditional deep sampling: transformed noise added at every site.
    Uds,
    /// Shallow sampling with an additive task term at every site.
    SsMtcPlus,
    /// Shallow sampling with task-conditioned feature-wise affine modulation.
    SsMtcStar,
    /// Task-aware deep sampling.
    Tds,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Ss,
        Variant::Uds,
        Variant::SsMtcPlus,
        Variant::SsMtcStar,
        Variant::Tds,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Ss => "SS",
            Variant::Uds => "UDS",
            Variant::SsMtcPlus => "SS-MTC+",
            Variant::SsMtcStar => "SS-MTC*",
            Variant::Tds => "TDS",
        }
    }

    /// Whether fresh noise is drawn at every injection site.
    pub fn deep_noise(self) -> bool {
        matches!(self, Variant::Uds | Variant::Tds)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown generator variant {s:?} (expected one of SS, UDS, SS-MTC+, SS-MTC*, TDS)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub variant: Variant,
    pub task_width: usize,
    /// Output widths of the trunk layers; the last is the feature dimension.
    pub widths: Vec<usize>,
    /// Width of each raw noise draw.
    pub noise_width: usize,
    /// Hidden width of each noise transform E_n.
    pub noise_hidden: usize,
}

impl GeneratorSpec {
    pub fn feature_width(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }

    pub fn layers(&self) -> usize {
        self.widths.len()
    }

    /// Sites after every trunk layer except the output layer.
    pub fn injection_sites(&self) -> usize {
        self.widths.len() - 1
    }

    /// Number of noise tensors `generator_forward` expects.
    pub fn noise_draws(&self) -> usize {
        if self.variant.deep_noise() {
            self.injection_sites()
        } else {
            1
        }
    }

    fn input_width(&self) -> usize {
        if self.variant.deep_noise() {
            self.task_width
        } else {
            self.task_width + self.noise_width
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config("generator needs at least two layers".into()));
        }
        if self.widths.contains(&0) || self.task_width == 0 || self.noise_width == 0 || self.noise_hidden == 0 {
            return Err(Error::Config("generator widths must be positive".into()));
        }
        Ok(())
    }

    /// Fresh standard-normal noise bank for a batch.
    pub fn sample_noise<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<Tensor> {
        (0..self.noise_draws())
            .map(|_| {
                let data = (0..batch * self.noise_width)
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                Tensor::from_parts(batch, self.noise_width, data)
            })
            .collect()
    }
}

/// Result of a generator forward pass.
#[derive(Clone, Debug)]
pub struct GeneratorOutput {
    pub features: Var,
    /// The term added at each injection site (empty for SS).
    pub injections: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
}

impl Generator {
    pub const STORE: &'static str = "gen";

    pub fn init<R: Rng>(spec: GeneratorSpec, rng: &mut R) -> Result<(Self, ParamStore)> {
        spec.validate()?;
        let mut store = ParamStore::new(Self::STORE);
        let mut trunk = vec![spec.input_width()];
        trunk.extend_from_slice(&spec.widths);
        register_stack(&mut store, "", &trunk, true, rng)?;
        let t = spec.task_width;
        for i in 0..spec.injection_sites() {
            let w = spec.widths[i];
            match spec.variant {
                Variant::Ss => {}
                Variant::Tds => {
                    store.insert_uniform(format!("et{i}.w"), &[w, t], t, rng)?;
                    register_stack(&mut store, &format!("en{i}."), &[spec.noise_width, spec.noise_hidden, w], true, rng)?;
                }
                Variant::Uds => {
                    register_stack(&mut store, &format!("en{i}."), &[spec.noise_width, spec.noise_hidden, w], true, rng)?;
                }
                Variant::SsMtcPlus => {
                    store.insert_uniform(format!("et{i}.w"), &[w, t], t, rng)?;
                }
                Variant::SsMtcStar => {
                    store.insert_uniform(format!("gamma{i}.w"), &[w, t], t, rng)?;
                    store.insert(format!("gamma{i}.b"), Tensor::filled(&[w], 1.0))?;
                    store.insert_uniform(format!("beta{i}.w"), &[w, t], t, rng)?;
                    store.insert_uniform(format!("beta{i}.b"), &[w], t, rng)?;
                }
            }
        }
        Ok((Generator { spec }, store))
    }

    /// Synthesizes a batch of features from task descriptions `t` and a noise bank.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, t: Var, noise: &[Var]) -> Result<GeneratorOutput> {
        let spec = &self.spec;
        check_width("generator_forward", g, t, spec.task_width)?;
        if noise.len() != spec.noise_draws() {
            return Err(Error::invalid(format!(
                "{} expects {} noise tensors, got {}",
                spec.variant,
                spec.noise_draws(),
                noise.len()
            )));
        }
        let batch = g.value(t).rows();
        for &n in noise {
            check_width("generator_forward", g, n, spec.noise_width)?;
            if g.value(n).rows() != batch {
                return Err(Error::shape("generator_forward", "noise batch differs from task batch"));
            }
        }
        let mut h = if spec.variant.deep_noise() {
            t
        } else {
            g.concat_cols(t, noise[0])?
        };
        let mut injections = Vec::new();
        for i in 0..spec.layers() {
            if i > 0 {
                h = g.leaky_relu(h, LEAKY_SLOPE)?;
            }
            h = affine_layer(g, store, &format!("l{i}"), h)?;
            if i >= spec.injection_sites() {
                continue;
            }
            match spec.variant {
                Variant::Ss => {}
                Variant::Tds => {
                    let et = g.param(store, &format!("et{i}.w"))?;
                    let et = g.affine(t, et, None)?;
                    let gate = g.add_scalar(et, 1.0)?;
                    let en = forward_stack(g, store, &format!("en{i}."), 2, noise[i])?;
                    let inj = g.mul(gate, en)?;
                    h = g.add(h, inj)?;
                    injections.push(inj);
                }
                Variant::Uds => {
                    let inj = forward_stack(g, store, &format!("en{i}."), 2, noise[i])?;
                    h = g.add(h, inj)?;
                    injections.push(inj);
                }
                Variant::SsMtcPlus => {
                    let et = g.param(store, &format!("et{i}.w"))?;
                    let inj = g.affine(t, et, None)?;
                    h = g.add(h, inj)?;
                    injections.push(inj);
                }
                Variant::SsMtcStar => {
                    let gamma = affine_layer(g, store, &format!("gamma{i}"), t)?;
                    let beta = affine_layer(g, store, &format!("beta{i}"), t)?;
                    let scaled = g.mul(gamma, h)?;
                    h = g.add(scaled, beta)?;
                    injections.push(beta);
                }
            }
        }
        Ok(GeneratorOutput {
            features: h,
            injections,
        })
    }
}

// ── critic ───────────────────────────────────────────────────────────

/// Three affine layers over `concat(z, t)` producing an unbounded scalar score.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub feature_width: usize,
    pub task_width: usize,
    pub hidden: usize,
}

impl Discriminator {
    pub const STORE: &'static str = "disc";

    pub fn init<R: Rng>(feature_width: usize, task_width: usize, hidden: usize, rng: &mut R) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new(Self::STORE);
        register_stack(&mut store, "", &[feature_width + task_width, hidden, hidden, 1], true, rng)?;
        Ok((
            Discriminator {
                feature_width,
                task_width,
                hidden,
            },
            store,
        ))
    }

    /// Per-row scores, shape `[n, 1]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var, t: Var) -> Result<Var> {
        check_width("discriminator_forward", g, z, self.feature_width)?;
        check_width("discriminator_forward", g, t, self.task_width)?;
        let x = g.concat_cols(z, t)?;
        forward_stack(g, store, "", 3, x)
    }
}

// ── classifier ───────────────────────────────────────────────────────

/// One affine layer from features to composition logits.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub feature_width: usize,
    pub classes: usize,
}

impl Classifier {
    pub const STORE: &'static str = "cls";

    pub fn init<R: Rng>(feature_width: usize, classes: usize, rng: &mut R) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new(Self::STORE);
        register_stack(&mut store, "", &[feature_width, classes], true, rng)?;
        Ok((
            Classifier {
                feature_width,
                classes,
            },
            store,
        ))
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Result<Var> {
        check_width("classifier_forward", g, z, self.feature_width)?;
        affine_layer(g, store, "l0", z)
    }

    /// Logits for a `[n, feature_width]` matrix without recording gradients.
    pub fn logits(&self, store: &ParamStore, features: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        g.freeze(store);
        let z = g.constant(features.clone())?;
        let out = self.forward(&mut g, store, z)?;
        Ok(g.value(out).clone())
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::softmax;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn zero_all(store: &mut ParamStore, filter: impl Fn(&str) -> bool) {
        let names: Vec<String> = store.names().filter(|n| filter(n)).map(String::from).collect();
        for n in names {
            store.values_mut(&n).unwrap().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn spec(variant: Variant) -> GeneratorSpec {
        GeneratorSpec {
            variant,
            task_width: 4,
            widths: vec![6, 6, 6, 3],
            noise_width: 5,
            noise_hidden: 4,
        }
    }

    fn run_generator(generator: &Generator, store: &ParamStore, t: &Tensor, noise: &[Tensor]) -> Tensor {
        let mut g = Graph::new();
        let tv = g.constant(t.clone()).unwrap();
        let nv: Vec<Var> = noise.iter().map(|n| g.constant(n.clone()).unwrap()).collect();
        let out = generator.forward(&mut g, store, tv, &nv).unwrap();
        g.value(out.features).clone()
    }

    #[test]
    fn zero_embedder_gives_zero_task() {
        let cfg = EmbedderConfig {
            raw_width: 3,
            hidden: 5,
            out: 2,
        };
        let (emb, mut store) = TaskEmbedder::init(cfg, &mut rng()).unwrap();
        zero_all(&mut store, |_| true);
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let o = g.constant(Tensor::matrix(1, 3, vec![-1.0, 0.5, 2.0]).unwrap()).unwrap();
        let t = emb.embed_task(&mut g, &store, a, o).unwrap();
        assert_eq!(g.value(t).values(), &[0.0; 4]);
    }

    #[test]
    fn identity_embedder_passes_through() {
        let cfg = EmbedderConfig {
            raw_width: 1,
            hidden: 1,
            out: 1,
        };
        let (emb, mut store) = TaskEmbedder::init(cfg, &mut rng()).unwrap();
        for n in ["a.l0.w", "a.l1.w", "o.l0.w", "o.l1.w"] {
            store.set(n, Tensor::from_parts(1, 1, vec![1.0])).unwrap();
        }
        for n in ["a.l0.b", "a.l1.b", "o.l0.b", "o.l1.b"] {
            store.set(n, Tensor::vector(vec![0.0]).unwrap()).unwrap();
        }
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap()).unwrap();
        let o = g.constant(Tensor::matrix(1, 1, vec![3.0]).unwrap()).unwrap();
        let t = emb.embed_task(&mut g, &store, a, o).unwrap();
        assert_eq!(g.value(t).values(), &[2.0, 3.0]);
    }

    #[test]
    fn embedder_width_mismatch() {
        let cfg = EmbedderConfig {
            raw_width: 3,
            hidden: 5,
            out: 2,
        };
        let (emb, store) = TaskEmbedder::init(cfg, &mut rng()).unwrap();
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        assert!(emb.embed_task(&mut g, &store, a, a).is_err());
    }

    #[test]
    fn tds_with_zero_noise_transform_ignores_noise() {
        let mut r = rng();
        let (generator, mut store) = Generator::init(spec(Variant::Tds), &mut r).unwrap();
        zero_all(&mut store, |n| n.starts_with("en"));
        let t = Tensor::matrix(2, 4, (0..8).map(|i| i as f64 * 0.1 - 0.3).collect()).unwrap();
        let a = run_generator(&generator, &store, &t, &generator.spec.sample_noise(2, &mut r));
        let b = run_generator(&generator, &store, &t, &generator.spec.sample_noise(2, &mut r));
        assert_eq!(a, b);
    }

    #[test]
    fn ss_depends_on_noise() {
        let mut r = rng();
        let (generator, store) = Generator::init(spec(Variant::Ss), &mut r).unwrap();
        let t = Tensor::matrix(1, 4, vec![0.2, -0.1, 0.4, 0.0]).unwrap();
        let a = run_generator(&generator, &store, &t, &generator.spec.sample_noise(1, &mut r));
        let b = run_generator(&generator, &store, &t, &generator.spec.sample_noise(1, &mut r));
        assert_ne!(a, b);
    }

    #[test]
    fn tds_two_layer_hand_computed() {
        // One injection site after the first layer of a 2-layer trunk.
        let spec = GeneratorSpec {
            variant: Variant::Tds,
            task_width: 2,
            widths: vec![2, 2],
            noise_width: 1,
            noise_hidden: 1,
        };
        let (generator, mut store) = Generator::init(spec, &mut rng()).unwrap();
        let set = |s: &mut ParamStore, n: &str, shape: &[usize], v: &[f64]| {
            s.set(n, Tensor::new(shape.to_vec(), v.to_vec()).unwrap()).unwrap();
        };
        set(&mut store, "l0.w", &[2, 2], &[1.0, 0.0, 0.0, -1.0]);
        set(&mut store, "l0.b", &[2], &[0.0, 0.5]);
        set(&mut store, "l1.w", &[2, 2], &[2.0, 1.0, 0.0, 1.0]);
        set(&mut store, "l1.b", &[2], &[0.0, 0.0]);
        set(&mut store, "et0.w", &[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        set(&mut store, "en0.l0.w", &[1, 1], &[1.0]);
        set(&mut store, "en0.l0.b", &[1], &[0.0]);
        set(&mut store, "en0.l1.w", &[2, 1], &[1.0, 2.0]);
        set(&mut store, "en0.l1.b", &[2], &[0.0, 0.0]);
        let t = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let n = Tensor::matrix(1, 1, vec![0.5]).unwrap();
        // h0 = [1, -2 + 0.5] = [1, -1.5]
        // gate = 1 + t = [2, 3]; E_n(n) = [0.5, 1.0]; injection = [1, 3]
        // h0' = [2, 1.5]; act keeps it; out = [2*2 + 1.5, 1.5] = [5.5, 1.5]
        let out = run_generator(&generator, &store, &t, &[n]);
        assert_eq!(out.values(), &[5.5, 1.5]);
    }

    #[test]
    fn noise_bank_length_checked() {
        let mut r = rng();
        let (generator, store) = Generator::init(spec(Variant::Tds), &mut r).unwrap();
        assert_eq!(generator.spec.noise_draws(), 3);
        let mut g = Graph::new();
        let t = g.constant(Tensor::matrix(1, 4, vec![0.0; 4]).unwrap()).unwrap();
        let n = g.constant(Tensor::matrix(1, 5, vec![0.0; 5]).unwrap()).unwrap();
        assert!(generator.forward(&mut g, &store, t, &[n]).is_err());
    }

    #[test]
    fn all_variants_share_output_width() {
        let mut r = rng();
        let t = Tensor::matrix(3, 4, vec![0.1; 12]).unwrap();
        for v in Variant::ALL {
            let (generator, store) = Generator::init(spec(v), &mut r).unwrap();
            let noise = generator.spec.sample_noise(3, &mut r);
            let out = run_generator(&generator, &store, &t, &noise);
            assert_eq!(out.shape(), &[3, 3], "{v}");
        }
    }

    #[test]
    fn linear_critic_example() {
        let (disc, mut store) = Discriminator::init(2, 1, 1, &mut rng()).unwrap();
        // Collapse the stack into w = [2, 5, 9] with identity hidden paths.
        store.set("l0.w", Tensor::matrix(1, 3, vec![2.0, 5.0, 9.0]).unwrap()).unwrap();
        store.set("l0.b", Tensor::vector(vec![1.0]).unwrap()).unwrap();
        store.set("l1.w", Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        store.set("l1.b", Tensor::vector(vec![0.0]).unwrap()).unwrap();
        store.set("l2.w", Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        store.set("l2.b", Tensor::vector(vec![-1.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let z = g.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap()).unwrap();
        let t = g.constant(Tensor::matrix(1, 1, vec![0.0]).unwrap()).unwrap();
        let s = disc.forward(&mut g, &store, z, t).unwrap();
        assert_eq!(g.value(s).item().unwrap(), 2.0);

        zero_all(&mut store, |_| true);
        let mut g = Graph::new();
        let z = g.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap()).unwrap();
        let t = g.constant(Tensor::matrix(1, 1, vec![0.0]).unwrap()).unwrap();
        let s = disc.forward(&mut g, &store, z, t).unwrap();
        assert_eq!(g.value(s).item().unwrap(), 0.0);
    }

    #[test]
    fn classifier_predictions() {
        let (cls, mut store) = Classifier::init(3, 3, &mut rng()).unwrap();
        zero_all(&mut store, |_| true);
        let z = Tensor::matrix(1, 3, vec![0.3, 0.9, 0.1]).unwrap();
        assert_eq!(argmax(cls.logits(&store, &z).unwrap().values()), 0);
        store
            .set("l0.w", Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(argmax(cls.logits(&store, &z).unwrap().values()), 1);
    }

    #[test]
    fn softmax_normalizes() {
        let mut r = rng();
        let (cls, store) = Classifier::init(4, 6, &mut r).unwrap();
        let z = Tensor::matrix(5, 4, (0..20).map(|_| r.random_range(-3.0..3.0)).collect()).unwrap();
        let logits = cls.logits(&store, &z).unwrap();
        for i in 0..5 {
            let s: f64 = softmax(logits.row(i)).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("XYZ".parse::<Variant>().is_err());
    }
}
