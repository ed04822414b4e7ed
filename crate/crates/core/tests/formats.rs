mod common;

use compgen::data::{
    decode_features, encode_features, read_features, read_split, sample_dataset, synth_world, write_features,
    write_split, Composition, Dataset, WorldConfig,
};
use compgen::diff::{Param, ParamStore};
use compgen::training::{decode_checkpoint, encode_checkpoint, Checkpoint, EpochMetrics, RngState};
use proptest::prelude::*;

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..4, 1usize..4, 1usize..6, 0usize..12).prop_flat_map(|(a, o, width, rows)| {
        let comps = a * o;
        (
            proptest::collection::vec(-1e6f32..1e6f32, rows * width),
            proptest::collection::vec(0..comps, rows),
        )
            .prop_map(move |(features, labels)| Dataset {
                attributes: (0..a).map(|i| format!("attr {i}")).collect(),
                objects: (0..o).map(|i| format!("obj_{i}")).collect(),
                compositions: (0..a)
                    .flat_map(|attr| (0..o).map(move |obj| Composition { attr, obj }))
                    .collect(),
                width,
                features: features.into_iter().map(f64::from).collect(),
                labels,
            })
    })
}

fn arb_store(name: &'static str) -> impl Strategy<Value = ParamStore> {
    (proptest::collection::vec((1usize..4, 1usize..4), 0..4), any::<u64>()).prop_map(
        move |(shapes, seed)| {
            let mut r = common::rng(seed);
            let mut params = ParamStore::new(name);
            for (i, (a, b)) in shapes.into_iter().enumerate() {
                params.insert(format!("p{i}"), common::random_tensor(&mut r, &[a, b], 10.0)).unwrap();
            }
            params
        },
    )
}

proptest! {
    #[test]
    fn features_round_trip_bitwise(ds in arb_dataset()) {
        let bytes = encode_features(&ds).unwrap();
        prop_assert_eq!(decode_features(&bytes).unwrap(), ds);
    }

    #[test]
    fn checkpoints_round_trip_bitwise(
        stores in proptest::collection::vec(arb_store("s"), 0..4),
        epoch in 0usize..100,
        digest in any::<[u8; 32]>(),
        seed in any::<[u8; 32]>(),
        stream in any::<u64>(),
        word_pos in any::<u64>(),
        classes in proptest::collection::vec(0usize..50, 0..10),
        vals in proptest::collection::vec(-1e3f64..1e3, 0..3),
    ) {
        let log = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| EpochMetrics {
                epoch: i + 1,
                lr_embedder: 1e-4,
                lr_other: 1e-3,
                critic_loss: v,
                wgan: -v,
                penalty: v.abs(),
                gen_adv: v / 3.0,
                cls: 0.5,
                cluster: 2.0,
                gen_total: v * 7.0,
                val_top1_seen: None,
                val_top1_unseen: Some(v / 1e3),
                val_auc_top1: if i % 2 == 0 { Some(0.25) } else { None },
            })
            .collect();
        let ck = Checkpoint {
            epoch,
            config_digest: digest,
            rng: RngState { seed, stream, word_pos: word_pos as u128 * 3 },
            classes,
            stores,
            log,
        };
        let back = decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap();
        prop_assert_eq!(back, ck);
    }
}

#[test]
fn zero_row_files_round_trip() {
    let world = synth_world(&WorldConfig::default()).unwrap();
    let mut ds = sample_dataset(&world, 1, 0).unwrap();
    ds.features.clear();
    ds.labels.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.cgf");
    write_features(&ds, &path).unwrap();
    assert_eq!(read_features(&path).unwrap(), ds);

    let ck = Checkpoint {
        epoch: 0,
        config_digest: [0; 32],
        rng: RngState { seed: [0; 32], stream: 0, word_pos: 0 },
        classes: vec![],
        stores: vec![ParamStore::new("empty")],
        log: vec![],
    };
    assert_eq!(decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap(), ck);
}

#[test]
fn optimizer_moments_survive_the_checkpoint() {
    let mut s = ParamStore::new("m");
    s.insert("w", common::random_tensor(&mut common::rng(2), &[2, 3], 1.0)).unwrap();
    let mut grads = compgen::diff::GradMap::new();
    grads.insert("w".into(), common::random_tensor(&mut common::rng(3), &[2, 3], 1.0));
    s.adam_update(&grads, 0.1, Default::default()).unwrap();
    let ck = Checkpoint {
        epoch: 1,
        config_digest: [7; 32],
        rng: RngState { seed: [1; 32], stream: 2, word_pos: 3 },
        classes: vec![0],
        stores: vec![s.clone()],
        log: vec![],
    };
    let back = decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap();
    let (p, q): (&Param, &Param) = (back.stores[0].param("w").unwrap(), s.param("w").unwrap());
    assert_eq!((p, back.stores[0].step()), (q, 1));
}

#[test]
fn split_files_round_trip() {
    let world = synth_world(&WorldConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let split = compgen::data::make_generalized_split(
            &world,
            compgen::data::GeneralizedCounts::for_label_space(25),
            seed,
        )
        .unwrap();
        let path = dir.path().join("split.txt");
        write_split(&split, &path).unwrap();
        assert_eq!(read_split(&path).unwrap(), split);
    }
}
