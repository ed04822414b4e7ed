//! Compares the double-backward gradient of the critic's gradient penalty
//! with central differences of the penalty value.
//!
//!     cargo run --release --example gradient_check

use compgen::diff::{penalty_parameter_gradient, Tensor};
use compgen::models::Discriminator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> compgen::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (critic, mut store) = Discriminator::init(6, 4, 12, &mut rng)?;
    let mut normal = |n: usize| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
    let z = Tensor::matrix(5, 6, normal(30))?;
    let t = Tensor::matrix(5, 4, normal(20))?;
    let penalty = |s: &compgen::diff::ParamStore| {
        penalty_parameter_gradient(s, |g, z, t| critic.forward(g, s, z, t), &z, &t, 10.0)
    };

    let (value, grads) = penalty(&store)?;
    println!("penalty {value:.6}");
    let h = 1e-5;
    for (name, analytic) in &grads {
        let mut worst = 0.0f64;
        for i in 0..analytic.len() {
            let orig = store.get(name).expect("present").values()[i];
            store.values_mut(name).expect("present")[i] = orig + h;
            let up = penalty(&store)?.0;
            store.values_mut(name).expect("present")[i] = orig - h;
            let down = penalty(&store)?.0;
            store.values_mut(name).expect("present")[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((numeric - analytic.values()[i]).abs());
        }
        println!("  {name:<8} {:>4} values  max |analytic - numeric| {worst:.2e}", analytic.len());
    }
    Ok(())
}
