#![allow(dead_code)]

use cohflux::coupling::{canonical_coupling, explicit_coupling, fair_kernel, mix, Coupling, CouplingEntry, GridMode};
use cohflux::majorisation::Bistochastic;
use cohflux::state::DiagonalState;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn st(v: &[f64]) -> DiagonalState {
    DiagonalState::new(v.to_vec()).unwrap()
}

pub fn canon(p: &[f64], q: &[f64]) -> Coupling {
    canonical_coupling(&st(p), &st(q), 2, GridMode::ExactGrid).unwrap()
}

pub fn breathing() -> Coupling {
    let e = |i, j, f, value| CouplingEntry { i, j, f, value };
    let table = [
        e(0, 0, 1, 1.0 / 3.0),
        e(1, 0, -1, 2.0 / 3.0),
        e(1, 1, 1, 1.0 / 3.0),
        e(0, 1, -1, 2.0 / 3.0),
    ];
    explicit_coupling(&st(&[0.5, 0.5]), &st(&[0.5, 0.5]), &table, 2, GridMode::ExactGrid).unwrap()
}

pub fn identity2() -> Coupling {
    canon(&[0.5, 0.5], &[0.5, 0.5])
}

pub fn dyadic4() -> Coupling {
    canon(&[0.5, 0.25, 0.125, 0.125], &[0.25; 4])
}

pub fn collapse() -> Coupling {
    canon(&[0.5, 0.5], &[1.0, 0.0])
}

pub fn crooks_fixture() -> Coupling {
    canon(&[0.5, 0.25, 0.25, 0.0], &[0.25; 4])
}

pub fn named_fixtures() -> Vec<(&'static str, Coupling)> {
    vec![
        ("identity", identity2()),
        ("dyadic4", dyadic4()),
        ("collapse", collapse()),
        ("breathing", breathing()),
        ("crooks", crooks_fixture()),
    ]
}

/// Dyadic vector on `d` slots built by repeated halving, shuffled and zero-padded.
pub fn random_dyadic(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let rank = rng.gen_range(1..=d);
    let mut v = vec![1.0];
    while v.len() < rank {
        let k = rng.gen_range(0..v.len());
        v[k] /= 2.0;
        let half = v[k];
        v.push(half);
    }
    v.resize(d, 0.0);
    v.shuffle(rng);
    v
}

/// Uniform on a random support of power-of-two size.
pub fn random_dyadic_uniform(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let sizes: Vec<usize> = [1, 2, 4, 8].into_iter().filter(|&s| s <= d).collect();
    let size = *sizes.choose(rng).unwrap();
    let mut v = vec![0.0; d];
    for slot in rand::seq::index::sample(rng, d, size) {
        v[slot] = 1.0 / size as f64;
    }
    v
}

/// Convex mixture of fair-kernel smearings of a canonical coupling.
pub fn random_mixture(rng: &mut ChaCha8Rng, base: &Coupling) -> Coupling {
    let k = rng.gen_range(1..=4);
    let mut parts = vec![base.clone()];
    for _ in 0..k {
        let kernel = fair_kernel(rng.gen_range(1..=2), rng.gen_range(1..=2), base.u()).unwrap();
        parts.push(base.smeared(&kernel));
    }
    let raw: Vec<f64> = (0..parts.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    mix(&parts, &weights).unwrap()
}

/// Random mixture of permutations, weights drawn then normalised.
pub fn random_bistochastic(rng: &mut ChaCha8Rng, d: usize) -> Bistochastic {
    let k = rng.gen_range(1..=d * d);
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut rows = vec![vec![0.0; d]; d];
    for w in raw {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        for (c, &r) in perm.iter().enumerate() {
            rows[r][c] += w / total;
        }
    }
    Bistochastic::new(rows).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, d: usize) -> DiagonalState {
    let raw: Vec<f64> = (0..d).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    DiagonalState::new(raw.iter().map(|x| x / total).collect()).unwrap()
}
