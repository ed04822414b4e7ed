//! Objective terms: classification, Wasserstein critic, gradient penalty,
//! clustering, and their weighted combination.

use crate::diff::{gradient_penalty, Graph, PenaltyTerm, Tensor, Var};
use crate::error::{Error, Result};

/// Weights and ablation toggles for the joint objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Classification weight (λ).
    pub lambda_cls: f64,
    /// Clustering weight (μ).
    pub mu_cluster: f64,
    /// Gradient penalty weight (λ_gp).
    pub lambda_gp: f64,
    pub use_adversarial: bool,
    pub use_classification: bool,
    pub use_cluster: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cls: 0.01,
            mu_cluster: 10.0,
            lambda_gp: 10.0,
            use_adversarial: true,
            use_classification: true,
            use_cluster: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("lambda_cls", self.lambda_cls),
            ("mu_cluster", self.mu_cluster),
            ("lambda_gp", self.lambda_gp),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be a finite value >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// True when the generator/classifier objective has at least one term.
    pub fn any_generator_term(&self) -> bool {
        self.use_adversarial || self.use_classification || self.use_cluster
    }
}

/// Mean cross-entropy of `logits` (`[n, classes]`) against `labels`.
pub fn cls_loss(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::invalid("classification loss over an empty batch"));
    }
    let per_row = g.softmax_cross_entropy(logits, labels)?;
    g.mean(per_row)
}

/// `mean(real) − mean(fake)`.
pub fn wgan_loss(g: &mut Graph, real_scores: Var, fake_scores: Var) -> Result<Var> {
    let real = g.mean(real_scores)?;
    let fake = g.mean(fake_scores)?;
    g.sub(real, fake)
}

/// Wasserstein term minus the weighted penalty, with diagnostics.
#[derive(Clone, Debug)]
pub struct AdvLoss {
    pub value: Var,
    pub wgan: Var,
    /// Unweighted `mean (‖∇‖ − 1)²`.
    pub penalty: PenaltyTerm,
}

/// Interpolates `α_i z_i + (1 − α_i) ẑ_i` row by row.
pub fn interpolate(g: &mut Graph, real: Var, fake: Var, alphas: &[f64]) -> Result<Var> {
    let (n, c) = g.value(real).dims()?;
    if g.value(fake).dims()? != (n, c) || alphas.len() != n {
        return Err(Error::shape(
            "adv_loss",
            format!("real {:?}, fake {:?}, {} alphas", g.value(real).shape(), g.value(fake).shape(), alphas.len()),
        ));
    }
    let a: Vec<f64> = alphas.iter().flat_map(|&a| std::iter::repeat_n(a, c)).collect();
    let b: Vec<f64> = a.iter().map(|a| 1.0 - a).collect();
    let a = g.constant(Tensor::matrix(n, c, a)?)?;
    let b = g.constant(Tensor::matrix(n, c, b)?)?;
    let left = g.mul(a, real)?;
    let right = g.mul(b, fake)?;
    g.add(left, right)
}

/// `L_wgan − λ_gp · E[(‖∇_z̃ D(z̃, t)‖ − 1)²]` using one interpolate per pair.
///
/// `critic` maps `(z, t)` batches to `[n, 1]` scores.
pub fn adv_loss<F>(
    g: &mut Graph,
    critic: F,
    real: Var,
    fake: Var,
    t: Var,
    alphas: &[f64],
    lambda_gp: f64,
) -> Result<AdvLoss>
where
    F: Fn(&mut Graph, Var, Var) -> Result<Var>,
{
    let n = g.value(real).rows();
    if g.value(t).rows() != n {
        return Err(Error::shape("adv_loss", "task batch misaligned with features"));
    }
    let real_scores = critic(g, real, t)?;
    let fake_scores = critic(g, fake, t)?;
    let wgan = wgan_loss(g, real_scores, fake_scores)?;
    let mixed = interpolate(g, real, fake, alphas)?;
    let mixed_scores = critic(g, mixed, t)?;
    let penalty = gradient_penalty(g, mixed_scores, mixed)?;
    let weighted = g.scale(penalty.node, lambda_gp)?;
    let value = g.sub(wgan, weighted)?;
    Ok(AdvLoss { value, wgan, penalty })
}

/// `Σ_k ‖ẑ_k − z_k‖² / K` over aligned rows.
pub fn cluster_loss(g: &mut Graph, generated: Var, real: Var) -> Result<Var> {
    if g.value(generated).dims()? != g.value(real).dims()? {
        return Err(Error::shape(
            "cluster_loss",
            format!("{:?} vs {:?}", g.value(generated).shape(), g.value(real).shape()),
        ));
    }
    let k = g.value(real).rows() as f64;
    let diff = g.sub(generated, real)?;
    let sq = g.square(diff)?;
    let total = g.sum_all(sq)?;
    g.scale(total, 1.0 / k)
}

/// Loss terms computed for one step; absent terms are skipped.
#[derive(Clone, Copy, Debug, Default)]
pub struct Components {
    /// Adversarial loss as seen by the critic.
    pub adv: Option<Var>,
    /// Mean critic score of generated features.
    pub fake_score_mean: Option<Var>,
    pub cls: Option<Var>,
    pub cluster: Option<Var>,
}

/// Scalars to minimize for each player; `None` when no enabled term applies.
#[derive(Clone, Copy, Debug)]
pub struct Objectives {
    pub generator: Option<Var>,
    pub discriminator: Option<Var>,
}

/// Combines the terms: the critic minimizes `−adv`; generator and classifier
/// minimize `−mean D(ẑ) + λ·L_cls + μ·L_cluster`.
pub fn total_objective(g: &mut Graph, c: &Components, w: &LossWeights) -> Result<Objectives> {
    let discriminator = match (w.use_adversarial, c.adv) {
        (true, Some(adv)) => Some(g.scale(adv, -1.0)?),
        _ => None,
    };
    let mut terms = Vec::new();
    if let (true, Some(f)) = (w.use_adversarial, c.fake_score_mean) {
        terms.push(g.scale(f, -1.0)?);
    }
    if let (true, Some(l)) = (w.use_classification, c.cls) {
        terms.push(g.scale(l, w.lambda_cls)?);
    }
    if let (true, Some(l)) = (w.use_cluster, c.cluster) {
        terms.push(g.scale(l, w.mu_cluster)?);
    }
    let mut generator = None;
    for t in terms {
        generator = Some(match generator {
            Some(acc) => g.add(acc, t)?,
            None => t,
        });
    }
    Ok(Objectives {
        generator,
        discriminator,
    })
}
