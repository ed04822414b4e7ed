//! Trains the task-aware deep-sampling generator on the default synthetic
//! world and reports closed- and open-world unseen accuracy.
//!
//!     cargo run --release --example train_tds -- [seed] [epochs]

use std::time::Instant;

use compgen::evaluation::Protocol;
use compgen::experiment::{ExperimentConfig, Setup};
use compgen::training::{train, TrainConfig};

fn main() -> compgen::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let setup = Setup::new(&ExperimentConfig::default())?;
    let config = TrainConfig {
        seed,
        epochs,
        decay_epoch: 30.min(epochs),
        ..TrainConfig::default()
    };
    let eval = setup.eval_data();
    let start = Instant::now();
    let out = train(&setup.data, &config, Some(&eval))?;
    for m in &out.log {
        println!(
            "epoch {:>2}  critic {:>8.4}  gp {:.4}  g_adv {:>8.4}  cls {:.4}  cluster {:.4}  val unseen {:.3}",
            m.epoch,
            m.critic_loss,
            m.penalty,
            m.gen_adv,
            m.cls,
            m.cluster,
            m.val_top1_unseen.unwrap_or(f64::NAN)
        );
    }
    println!(
        "closed-world unseen top-1 {:.3} (chance {:.3}), open-world {:.3}, {:.1}s",
        setup.unseen_top1(&out.models, Protocol::Closed)?,
        1.0 / setup.split.unseen.len() as f64,
        setup.unseen_top1(&out.models, Protocol::Open)?,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
