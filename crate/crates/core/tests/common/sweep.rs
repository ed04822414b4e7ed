//! Brute-force calibration oracle over an explicit dense bias grid.

use compgen::evaluation::Scores;
use rand::Rng;

use super::rng;

/// Random instance: scores on a 1/8 lattice so every plateau is wider than the grid step.
pub struct Instance {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
}

impl Instance {
    pub fn random(seed: u64) -> Instance {
        let mut r = rng(seed);
        let comps = r.random_range(2..=10);
        let n_seen = r.random_range(1..comps);
        let seen: Vec<usize> = (0..n_seen).collect();
        let unseen: Vec<usize> = (n_seen..comps).collect();
        let n = r.random_range(2..=50);
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..comps)).collect();
        // Both groups must be present.
        labels[0] = seen[r.random_range(0..seen.len())];
        labels[1] = unseen[r.random_range(0..unseen.len())];
        let rows = (0..n)
            .map(|_| (0..comps).map(|_| r.random_range(-24i32..=24) as f64 / 8.0).collect())
            .collect();
        Instance {
            rows,
            labels,
            seen,
            unseen,
        }
    }

    pub fn scores(&self) -> Scores {
        let comps = self.seen.len() + self.unseen.len();
        Scores::new(self.rows.concat(), (0..comps).collect(), self.labels.clone()).unwrap()
    }

    fn correct(&self, i: usize, k: usize, bias: f64) -> bool {
        let row = &self.rows[i];
        let y = self.labels[i];
        let adj = |c: usize| if self.unseen.contains(&c) { row[c] + bias } else { row[c] };
        let sy = adj(y);
        let better = (0..row.len()).filter(|&c| adj(c) > sy || (adj(c) == sy && c < y)).count();
        better < k
    }

    /// `(seen accuracy, unseen accuracy)` at one bias.
    pub fn accuracies(&self, k: usize, bias: f64) -> (f64, f64) {
        let (mut s, mut sn, mut u, mut un) = (0, 0, 0, 0);
        for i in 0..self.rows.len() {
            let hit = self.correct(i, k, bias) as usize;
            if self.seen.contains(&self.labels[i]) {
                s += hit;
                sn += 1;
            } else {
                u += hit;
                un += 1;
            }
        }
        (s as f64 / sn as f64, u as f64 / un as f64)
    }

    /// Trapezoid AUC from `count` evenly spaced biases plus far limits.
    pub fn dense_auc(&self, k: usize, count: usize) -> f64 {
        // Offset so no grid point sits exactly on the 1/8 lattice.
        let (lo, hi) = (-7.0 + 1e-7, 7.0 + 1e-7);
        let mut pts = vec![self.accuracies(k, -1e6)];
        for i in 0..count {
            pts.push(self.accuracies(k, lo + (hi - lo) * i as f64 / (count - 1) as f64));
        }
        pts.push(self.accuracies(k, 1e6));
        pts.reverse();
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
    }
}
