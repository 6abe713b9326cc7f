#![allow(dead_code)]

use bitrade_core::double_auction::DoubleAuctionInstance;
use bitrade_core::{DiscreteJoint, Rational};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn distinct_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    let mut v: Vec<Rational> = Vec::new();
    while v.len() < n {
        let x = r(rng.gen_range(0..=40), rng.gen_range(1..=4));
        if !v.contains(&x) {
            v.push(x);
        }
    }
    v
}

/// Random joint on at most `max_side` values per side with random
/// rational masses; each grid cell is kept with probability 2/3.
pub fn random_joint(rng: &mut ChaCha8Rng, max_side: usize) -> DiscreteJoint<Rational> {
    let (n, m) = (rng.gen_range(1..=max_side), rng.gen_range(1..=max_side));
    let sellers = distinct_values(rng, n);
    let buyers = distinct_values(rng, m);
    let mut weights = Vec::new();
    for s in &sellers {
        for b in &buyers {
            if rng.gen_range(0..3) > 0 {
                weights.push((s.clone(), b.clone(), rng.gen_range(1..=20i64)));
            }
        }
    }
    if weights.is_empty() {
        weights.push((sellers[0].clone(), buyers[0].clone(), 1));
    }
    let total: i64 = weights.iter().map(|w| w.2).sum();
    DiscreteJoint::new(weights.into_iter().map(|(s, b, w)| (s, b, r(w, total)))).unwrap()
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_size: usize) -> DoubleAuctionInstance<Rational> {
    let n = rng.gen_range(1..=max_size);
    let m = rng.gen_range(1..=max_size);
    let sellers = (0..n).map(|_| r(rng.gen_range(0..=100), rng.gen_range(1..=8))).collect();
    let buyers = (0..m).map(|_| r(rng.gen_range(0..=100), rng.gen_range(1..=8))).collect();
    DoubleAuctionInstance::new(sellers, buyers).unwrap()
}

/// Euler's number ratio e/(e-1).
pub fn e_ratio() -> f64 {
    std::f64::consts::E / (std::f64::consts::E - 1.0)
}
