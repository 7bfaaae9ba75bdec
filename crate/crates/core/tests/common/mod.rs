//! Brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use famsplit::matrix::CrossErrorMatrix;
use famsplit::search::SearchConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(k: usize, seed: u64) -> CrossErrorMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..k).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect();
    CrossErrorMatrix::new((0..k).map(|i| format!("f{i}")).collect(), rows).unwrap()
}

/// Smallest grid epsilon at which some disjoint (T, V) of size 2 satisfies
/// every cross constraint, by enumerating all ordered set pairs.
pub fn min_feasible_relaxations(m: &CrossErrorMatrix, cfg: &SearchConfig) -> usize {
    let k = m.k();
    let mut best = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            for c in 0..k {
                for d in c + 1..k {
                    if [a, b].contains(&c) || [a, b].contains(&d) {
                        continue;
                    }
                    let worst = [(a, c), (a, d), (b, c), (b, d)]
                        .iter()
                        .map(|&(t, v)| (m.get(t, v) - cfg.tau).abs())
                        .fold(0.0, f64::max);
                    best = best.min(worst);
                }
            }
        }
    }
    let mut r = 0;
    while cfg.epsilon_at(r) < best {
        r += 1;
    }
    r
}

/// Exact one- and two-sided Wilcoxon p by enumerating every sign flip.
pub fn brute_force_p(d: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    let n = nz.len();
    let mags: Vec<f64> = nz.iter().map(|x| x.abs()).collect();
    let ranks: Vec<f64> = mags
        .iter()
        .map(|&x| {
            let below = mags.iter().filter(|&&y| y < x).count() as f64;
            let equal = mags.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w >= observed {
            ge += 1;
        }
        if w <= observed {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    let one = (ge as f64 / total).min(le as f64 / total);
    (one, (2.0 * one).min(1.0))
}
