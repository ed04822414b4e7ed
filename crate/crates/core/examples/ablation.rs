//! Variant and clustering-loss ablations over several training seeds.
//!
//!     COMPGEN_THREADS=4 cargo run --release --example ablation -- [seeds]

use compgen::experiment::{ablation, mean_top1, thread_cap, ExperimentConfig, Setup};
use compgen::models::Variant;
use compgen::training::TrainConfig;

fn main() -> compgen::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds: Vec<u64> = (0..n).collect();
    let setup = Setup::new(&ExperimentConfig::default())?;
    let base = TrainConfig::default();
    let mu = base.weights.mu_cluster;

    let cells = ablation(&setup, &base, &Variant::ALL, &[mu], &seeds, thread_cap())?;
    println!("variant   mean closed top-1");
    for v in Variant::ALL {
        println!("{:<9} {:.3}", v.label(), mean_top1(&cells, v, mu).unwrap_or(f64::NAN));
    }

    let off = ablation(&setup, &base, &[Variant::Tds], &[0.0], &seeds, thread_cap())?;
    let with = mean_top1(&cells, Variant::Tds, mu).unwrap_or(f64::NAN);
    let without = mean_top1(&off, Variant::Tds, 0.0).unwrap_or(f64::NAN);
    println!("TDS cluster loss on {with:.3}, off {without:.3}, gap {:.3}", with - without);
    Ok(())
}
