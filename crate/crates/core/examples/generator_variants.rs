//! Builds each generator variant at the same widths and shows how the noise
//! bank reaches the output.
//!
//!     cargo run --release --example generator_variants

use compgen::diff::{Graph, Tensor};
use compgen::models::{Generator, GeneratorSpec, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> compgen::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let task = Tensor::filled(&[1, 8], 0.5);
    for variant in Variant::ALL {
        let spec = GeneratorSpec {
            variant,
            task_width: 8,
            widths: vec![32, 32, 32, 16],
            noise_width: 8,
            noise_hidden: 16,
        };
        let (gen, store) = Generator::init(spec, &mut rng)?;
        // Spread of one task's synthesized features over 200 noise banks.
        let draws = 200;
        let mut g = Graph::new();
        g.freeze(&store);
        let t = g.constant(Tensor::matrix(
            draws,
            8,
            task.values().iter().copied().cycle().take(draws * 8).collect(),
        )?)?;
        let noise = gen
            .spec
            .sample_noise(draws, &mut rng)
            .into_iter()
            .map(|n| g.constant(n))
            .collect::<compgen::Result<Vec<_>>>()?;
        let out = gen.forward(&mut g, &store, t, &noise)?;
        let f = g.value(out.features);
        let width = gen.spec.feature_width();
        let mut spread = 0.0;
        for j in 0..width {
            let col: Vec<f64> = (0..draws).map(|i| f.values()[i * width + j]).collect();
            let mean = col.iter().sum::<f64>() / draws as f64;
            spread += col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws as f64;
        }
        println!(
            "{:<8} params {:>5}  noise draws {}  injection sites {}  feature std {:.4}",
            variant.label(),
            store.num_values(),
            gen.spec.noise_draws(),
            out.injections.len(),
            (spread / width as f64).sqrt()
        );
    }
    Ok(())
}
