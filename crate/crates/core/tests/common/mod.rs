#![allow(dead_code)]

use multicode::{CdmaInstance, FdmaConstants, UserProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// Random capped bandwidth instance with `1..=max_users` users.
pub fn fdma_instance(rng: &mut ChaCha8Rng, max_users: usize) -> (UserProfile, FdmaConstants) {
    let k = rng.random_range(1..=max_users);
    let w_tot = log_uniform(rng, 0.1, 10.0);
    let powers: Vec<f64> = (0..k).map(|_| log_uniform(rng, 1e-3, 1e3)).collect();
    let caps: Vec<f64> = (0..k).map(|_| w_tot * rng.random_range(0.02..0.8)).collect();
    let constants = FdmaConstants::new(w_tot, log_uniform(rng, 1e-2, 10.0)).unwrap();
    (UserProfile::with_bandwidths(powers, caps).unwrap(), constants)
}

/// Random multi-code instance.
pub fn cdma_instance(
    rng: &mut ChaCha8Rng,
    max_users: usize,
    max_gain: u32,
    max_codes: u32,
) -> CdmaInstance {
    let k = rng.random_range(1..=max_users);
    let n = rng.random_range(1..=max_gain);
    let powers: Vec<f64> = (0..k).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
    let codes: Vec<u32> = (0..k).map(|_| rng.random_range(1..=max_codes)).collect();
    CdmaInstance::new(powers, codes, n, log_uniform(rng, 1e-1, 10.0)).unwrap()
}

pub fn five_users() -> CdmaInstance {
    CdmaInstance::new(vec![30., 15., 10., 7., 3.], vec![2; 5], 8, 1.0).unwrap()
}
