//! Samples a synthetic world, draws a dataset and a zero-shot split, and
//! writes them in the on-disk formats the CLI reads.
//!
//!     cargo run --release --example synthetic_world -- [out_dir]

use compgen::data::{make_zscl_split, read_features, sample_dataset, synth_world, write_features, WorldConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "world_demo".into());
    let world = synth_world(&WorldConfig::default())?;
    println!(
        "{} attributes x {} objects -> {} compositions, raw width {}, feature width {}",
        world.config.attributes,
        world.config.objects,
        world.composition_count(),
        world.config.raw_width,
        world.config.feature_width
    );
    for c in world.compositions().into_iter().take(4) {
        let p = world.prototype(c);
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("  {} {}  prototype norm {norm:.3}", world.attr_names[c.attr], world.obj_names[c.obj]);
    }

    let dataset = sample_dataset(&world, 20, 7)?;
    let split = make_zscl_split(&world, 0.4, 0)?;
    let names = |ids: &[usize]| {
        ids.iter()
            .map(|&i| {
                let (a, o) = dataset.label_names(i);
                format!("{a}/{o}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("seen:   {}", names(&split.seen));
    println!("unseen: {}", names(&split.unseen));

    std::fs::create_dir_all(&out)?;
    let path = std::path::Path::new(&out).join("samples.cgf");
    write_features(&dataset, &path)?;
    let back = read_features(&path)?;
    println!("wrote {} rows to {}, reload identical: {}", dataset.len(), path.display(), back == dataset);
    Ok(())
}
