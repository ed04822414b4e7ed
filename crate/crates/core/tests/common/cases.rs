//! Seeded gradient-check instances for every graph op and every loss term.

use compgen::diff::{Graph, ParamStore, Tensor, Var};
use compgen::losses::{adv_loss, cls_loss, cluster_loss, total_objective, wgan_loss, Components, LossWeights};
use compgen::models::{Classifier, Discriminator, EmbedderConfig, Generator, GeneratorSpec, TaskEmbedder, Variant};
use compgen::Result;
use rand::Rng;

use super::{random_tensor, rng, store};

pub type Objective = Box<dyn Fn(&mut Graph, &[ParamStore]) -> Result<Var>>;

pub struct Case {
    pub name: String,
    pub stores: Vec<ParamStore>,
    pub f: Objective,
    /// Second-order path through the gradient penalty.
    pub penalty_path: bool,
}

/// Contracts any output against fixed random weights so every entry matters.
fn contract(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let shape = g.value(out).shape().to_vec();
    let c = g.constant(random_tensor(&mut rng(seed ^ 0xabcdef), &shape, 1.0))?;
    let m = g.mul(out, c)?;
    g.sum_all(m)
}

type OpFn = fn(&mut Graph, &[ParamStore]) -> Result<Var>;

fn p(g: &mut Graph, s: &[ParamStore], name: &str) -> Result<Var> {
    g.param(&s[0], name)
}

/// Names, input shapes and builders of every forward op.
fn op_table() -> Vec<(&'static str, Vec<(&'static str, Vec<usize>)>, OpFn)> {
    vec![
        ("affine", vec![("x", vec![3, 4]), ("w", vec![2, 4]), ("b", vec![2])], |g, s| {
            let (x, w, b) = (p(g, s, "x")?, p(g, s, "w")?, p(g, s, "b")?);
            g.affine(x, w, Some(b))
        }),
        ("matmul", vec![("a", vec![3, 4]), ("b", vec![4, 2])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.matmul(a, b, false, false)
        }),
        ("matmul-ta", vec![("a", vec![4, 3]), ("b", vec![4, 2])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.matmul(a, b, true, false)
        }),
        ("matmul-tb", vec![("a", vec![3, 4]), ("b", vec![2, 4])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.matmul(a, b, false, true)
        }),
        ("matmul-tab", vec![("a", vec![4, 3]), ("b", vec![2, 4])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.matmul(a, b, true, true)
        }),
        ("leaky-relu", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            g.leaky_relu(a, 0.2)
        }),
        ("mask-mul", vec![("a", vec![3, 4]), ("r", vec![3, 4])], |g, s| {
            let (a, r) = (p(g, s, "a")?, p(g, s, "r")?);
            g.mask_mul(a, r, 0.2)
        }),
        ("add", vec![("a", vec![3, 4]), ("b", vec![3, 4])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.add(a, b)
        }),
        ("sub", vec![("a", vec![3, 4]), ("b", vec![3, 4])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.sub(a, b)
        }),
        ("mul", vec![("a", vec![3, 4]), ("b", vec![3, 4])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.mul(a, b)
        }),
        ("square", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            g.square(a)
        }),
        ("scale", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            g.scale(a, -1.7)
        }),
        ("add-scalar", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            let b = g.add_scalar(a, 0.3)?;
            g.square(b)
        }),
        ("concat", vec![("a", vec![3, 2]), ("b", vec![3, 3])], |g, s| {
            let (a, b) = (p(g, s, "a")?, p(g, s, "b")?);
            g.concat_cols(a, b)
        }),
        ("slice", vec![("a", vec![3, 5])], |g, s| {
            let a = p(g, s, "a")?;
            g.slice_cols(a, 1, 3)
        }),
        ("pad", vec![("a", vec![3, 2])], |g, s| {
            let a = p(g, s, "a")?;
            g.pad_cols(a, 1, 5)
        }),
        ("broadcast-rows", vec![("a", vec![1, 4])], |g, s| {
            let a = p(g, s, "a")?;
            g.broadcast_rows(a, 3)
        }),
        ("sum-rows", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            g.sum_rows(a)
        }),
        ("broadcast-cols", vec![("a", vec![3, 1])], |g, s| {
            let a = p(g, s, "a")?;
            g.broadcast_cols(a, 4)
        }),
        ("row-sum", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            g.row_sum(a)
        }),
        ("sum-all", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            let t = g.sum_all(a)?;
            g.square(t)
        }),
        ("mean", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            let t = g.mean(a)?;
            g.square(t)
        }),
        ("broadcast-scalar", vec![("a", vec![1, 1])], |g, s| {
            let a = p(g, s, "a")?;
            g.broadcast_scalar(a, 3, 4)
        }),
        ("l2-norm", vec![("a", vec![3, 4])], |g, s| {
            let a = p(g, s, "a")?;
            g.row_l2_norm(a)
        }),
        ("softmax-cross-entropy", vec![("a", vec![3, 5])], |g, s| {
            let a = p(g, s, "a")?;
            g.softmax_cross_entropy(a, &[4, 0, 2])
        }),
    ]
}

/// One instance per op for `seed`.
pub fn op_cases(seed: u64) -> Vec<Case> {
    op_table()
        .into_iter()
        .map(|(name, inputs, build)| {
            let mut r = rng(seed.wrapping_mul(131).wrapping_add(name.len() as u64));
            let entries = inputs.iter().map(|(k, shape)| (*k, random_tensor(&mut r, shape, 1.5))).collect();
            let f: Objective = Box::new(move |g, s| {
                let out = build(g, s)?;
                contract(g, out, seed)
            });
            Case {
                name: format!("op {name}"),
                stores: vec![store("x", entries)],
                f,
                penalty_path: false,
            }
        })
        .collect()
}

/// Small models shared by the loss-term instances.
pub struct Toy {
    pub embedder: TaskEmbedder,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub classifier: Classifier,
    pub attr: Tensor,
    pub obj: Tensor,
    pub real: Tensor,
    pub noise: Vec<Tensor>,
    pub alphas: Vec<f64>,
    pub labels: Vec<usize>,
}

pub const N: usize = 4;

/// Returns the toy models and stores `[phi, gen, disc, cls]`.
pub fn toy(seed: u64, variant: Variant) -> (Toy, Vec<ParamStore>) {
    let mut r = rng(seed);
    let (embedder, phi) = TaskEmbedder::init(EmbedderConfig { raw_width: 3, hidden: 4, out: 2 }, &mut r).unwrap();
    let (generator, gen) = Generator::init(
        GeneratorSpec {
            variant,
            task_width: 4,
            widths: vec![5, 5, 3],
            noise_width: 3,
            noise_hidden: 4,
        },
        &mut r,
    )
    .unwrap();
    let (discriminator, disc) = Discriminator::init(3, 4, 5, &mut r).unwrap();
    let (classifier, cls) = Classifier::init(3, 4, &mut r).unwrap();
    let noise = generator.spec.sample_noise(N, &mut r);
    let toy = Toy {
        attr: random_tensor(&mut r, &[N, 3], 1.0),
        obj: random_tensor(&mut r, &[N, 3], 1.0),
        real: random_tensor(&mut r, &[N, 3], 1.0),
        alphas: (0..N).map(|_| r.random_range(0.05..0.95)).collect(),
        labels: (0..N).map(|_| r.random_range(0..4)).collect(),
        noise,
        embedder,
        generator,
        discriminator,
        classifier,
    };
    (toy, vec![phi, gen, disc, cls])
}

impl Toy {
    pub fn task(&self, g: &mut Graph, s: &[ParamStore]) -> Result<Var> {
        let a = g.constant(self.attr.clone())?;
        let o = g.constant(self.obj.clone())?;
        self.embedder.embed_task(g, &s[0], a, o)
    }

    pub fn fake(&self, g: &mut Graph, s: &[ParamStore], t: Var) -> Result<Var> {
        let noise = self.noise.iter().map(|n| g.constant(n.clone())).collect::<Result<Vec<_>>>()?;
        Ok(self.generator.forward(g, &s[1], t, &noise)?.features)
    }
}

/// Loss-term instances for `seed`: classification, Wasserstein, gradient
/// penalty, full adversarial, clustering and the weighted generator total.
pub fn loss_cases(seed: u64) -> Vec<Case> {
    let variant = Variant::ALL[(seed % 5) as usize];
    let mut out = Vec::new();
    let mut push = |name: &str, penalty_path: bool, f: Box<dyn Fn(&Toy, &mut Graph, &[ParamStore]) -> Result<Var>>| {
        let (toy, stores) = toy(seed, variant);
        out.push(Case {
            name: format!("loss {name} ({variant})"),
            stores,
            f: Box::new(move |g, s| f(&toy, g, s)),
            penalty_path,
        });
    };
    push(
        "classification",
        false,
        Box::new(|toy, g, s| {
            let t = toy.task(g, s)?;
            let z = toy.fake(g, s, t)?;
            let logits = toy.classifier.forward(g, &s[3], z)?;
            cls_loss(g, logits, &toy.labels)
        }),
    );
    push(
        "wasserstein",
        false,
        Box::new(|toy, g, s| {
            let t = toy.task(g, s)?;
            let z = toy.fake(g, s, t)?;
            let real = g.constant(toy.real.clone())?;
            let rs = toy.discriminator.forward(g, &s[2], real, t)?;
            let fs = toy.discriminator.forward(g, &s[2], z, t)?;
            wgan_loss(g, rs, fs)
        }),
    );
    push(
        "gradient-penalty",
        true,
        Box::new(|toy, g, s| {
            let t = toy.task(g, s)?;
            let z = toy.fake(g, s, t)?;
            let real = g.constant(toy.real.clone())?;
            let d = &toy.discriminator;
            let adv = adv_loss(g, |g, z, t| d.forward(g, &s[2], z, t), real, z, t, &toy.alphas, 10.0)?;
            g.scale(adv.penalty.node, 10.0)
        }),
    );
    push(
        "adversarial",
        true,
        Box::new(|toy, g, s| {
            let t = toy.task(g, s)?;
            let z = toy.fake(g, s, t)?;
            let real = g.constant(toy.real.clone())?;
            let d = &toy.discriminator;
            Ok(adv_loss(g, |g, z, t| d.forward(g, &s[2], z, t), real, z, t, &toy.alphas, 10.0)?.value)
        }),
    );
    push(
        "cluster",
        false,
        Box::new(|toy, g, s| {
            let t = toy.task(g, s)?;
            let z = toy.fake(g, s, t)?;
            let real = g.constant(toy.real.clone())?;
            cluster_loss(g, z, real)
        }),
    );
    push(
        "generator-total",
        false,
        Box::new(|toy, g, s| {
            let t = toy.task(g, s)?;
            let z = toy.fake(g, s, t)?;
            let real = g.constant(toy.real.clone())?;
            let scores = toy.discriminator.forward(g, &s[2], z, t)?;
            let logits = toy.classifier.forward(g, &s[3], z)?;
            let c = Components {
                adv: None,
                fake_score_mean: Some(g.mean(scores)?),
                cls: Some(cls_loss(g, logits, &toy.labels)?),
                cluster: Some(cluster_loss(g, z, real)?),
            };
            Ok(total_objective(g, &c, &LossWeights::default())?.generator.expect("generator terms on"))
        }),
    );
    out
}
