//! Trains on a generalized split and sweeps the calibration bias on the
//! test compositions.
//!
//!     cargo run --release --example generalized_eval -- [epochs]

use compgen::evaluation::{auc_from_curve, calibrated_sweep, evaluate_generalized, BiasGrid};
use compgen::experiment::{ExperimentConfig, Setup};
use compgen::training::{train, TrainConfig};

fn main() -> compgen::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let setup = Setup::new(&ExperimentConfig {
        generalized: true,
        ..ExperimentConfig::default()
    })?;
    let g = setup.split.generalized.clone().expect("generalized split");
    let config = TrainConfig {
        epochs,
        decay_epoch: epochs * 3 / 4,
        ..TrainConfig::default()
    };
    let out = train(&setup.data, &config, None)?;

    let mut keep = g.test_seen.clone();
    keep.extend_from_slice(&g.test_unseen);
    let scores = out.models.score(&setup.test.subset(&keep))?;
    let curve = calibrated_sweep(&scores, &g.test_seen, &g.test_unseen, 1, &BiasGrid::Exact)?;
    println!("{} curve points, top-1 AUC {:.3}", curve.points.len(), auc_from_curve(&curve)?);
    let step = (curve.points.len() / 8).max(1);
    for p in curve.points.iter().step_by(step) {
        println!("  bias {:>9.3}  seen {:.3}  unseen {:.3}", p.bias, p.seen, p.unseen);
    }
    print!("{}", evaluate_generalized(&scores, &g.test_seen, &g.test_unseen, "test")?.to_csv());
    Ok(())
}
