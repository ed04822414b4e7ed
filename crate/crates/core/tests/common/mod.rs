//! Shared test oracles: central finite differences and small fixtures.
#![allow(dead_code)]

use compgen::diff::{Graph, ParamStore, Tensor, Var};
use compgen::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Scalar value of `f` with fresh graph.
pub fn eval(stores: &[ParamStore], f: &dyn Fn(&mut Graph, &[ParamStore]) -> Result<Var>) -> f64 {
    let mut g = Graph::new();
    let root = f(&mut g, stores).unwrap();
    g.value(root).item().unwrap()
}

/// Flattened analytic gradients over every parameter of every store, in store/name order.
pub fn analytic(stores: &[ParamStore], f: &dyn Fn(&mut Graph, &[ParamStore]) -> Result<Var>) -> Vec<f64> {
    let mut g = Graph::new();
    let root = f(&mut g, stores).unwrap();
    let grads = g.backward(root).unwrap();
    stores
        .iter()
        .flat_map(|s| {
            grads
                .for_store(s)
                .into_values()
                .flat_map(|t| t.into_values())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Central differences with step `h` in the same layout as [`analytic`].
pub fn numeric(stores: &[ParamStore], f: &dyn Fn(&mut Graph, &[ParamStore]) -> Result<Var>, h: f64) -> Vec<f64> {
    let mut work = stores.to_vec();
    let mut out = Vec::new();
    for si in 0..work.len() {
        let names: Vec<String> = work[si].names().map(String::from).collect();
        for name in names {
            let len = work[si].get(&name).unwrap().len();
            for j in 0..len {
                let orig = work[si].get(&name).unwrap().values()[j];
                work[si].values_mut(&name).unwrap()[j] = orig + h;
                let plus = eval(&work, f);
                work[si].values_mut(&name).unwrap()[j] = orig - h;
                let minus = eval(&work, f);
                work[si].values_mut(&name).unwrap()[j] = orig;
                out.push((plus - minus) / (2.0 * h));
            }
        }
    }
    out
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or the absolute difference norm when both are tiny.
pub fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

pub fn fd_error(stores: &[ParamStore], f: &dyn Fn(&mut Graph, &[ParamStore]) -> Result<Var>) -> f64 {
    rel_error(&analytic(stores, f), &numeric(stores, f, FD_STEP))
}

/// Store `x` holding the given tensors under their names.
pub fn store(name: &str, entries: Vec<(&str, Tensor)>) -> ParamStore {
    let mut s = ParamStore::new(name);
    for (k, v) in entries {
        s.insert(k, v).unwrap();
    }
    s
}

pub mod cases;
pub mod sweep;
