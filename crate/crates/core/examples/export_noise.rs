//! Trains a short TDS run, then writes synthesized features and the term
//! injected at each site as embedding CSVs.
//!
//!     cargo run --release --example export_noise -- [out_dir]

use compgen::evaluation::embeddings_csv;
use compgen::experiment::{ExperimentConfig, Setup};
use compgen::training::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "export_demo".into()));
    let setup = Setup::new(&ExperimentConfig::default())?;
    let config = TrainConfig {
        epochs: 10,
        decay_epoch: 8,
        ..TrainConfig::default()
    };
    let models = train(&setup.data, &config, None)?.models;

    let labels: Vec<usize> = setup.split.unseen.iter().flat_map(|&c| [c; 10]).collect();
    let names: Vec<(String, String)> = labels
        .iter()
        .map(|&l| {
            let (a, o) = setup.test.label_names(l);
            (a.to_string(), o.to_string())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (features, injections) = models.synthesize_detailed(&setup.data.embeddings, &labels, &mut rng)?;

    std::fs::create_dir_all(&out_dir)?;
    let write = |file: String, t: &compgen::diff::Tensor| -> Result<(), Box<dyn std::error::Error>> {
        let path = out_dir.join(&file);
        let csv = embeddings_csv(t.cols(), t.values(), &names)?;
        std::fs::write(&path, csv)?;
        let rms = (t.values().iter().map(|x| x * x).sum::<f64>() / t.len() as f64).sqrt();
        println!("{file:<16} {} x {}  rms {rms:.4}", t.rows(), t.cols());
        Ok(())
    };
    write("features.csv".into(), &features)?;
    for (i, inj) in injections.iter().enumerate() {
        write(format!("noise_l{i}.csv"), inj)?;
    }
    Ok(())
}
