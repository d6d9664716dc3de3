#![allow(dead_code)]

use cfmdp::rng::{self, CfRng};
use cfmdp::{Mdp, Transition};
use rand::Rng;
use rand_distr::Exp1;

/// Random row on a random non-empty support, Dirichlet(1) on that support.
pub fn random_row(rng: &mut CfRng, n: usize) -> Vec<f64> {
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    if !mask.iter().any(|&b| b) {
        mask[rng.random_range(0..n)] = true;
    }
    let w: Vec<f64> = mask.iter().map(|&b| if b { rng.sample::<f64, _>(Exp1) + 1e-6 } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn random_mdp(rng: &mut CfRng, n: usize, k: usize) -> Mdp {
    let transition = (0..n).map(|_| (0..k).map(|_| random_row(rng, n)).collect()).collect();
    let reward = (0..n).map(|_| (0..k).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    Mdp::new(transition, reward, init).expect("generated rows are stochastic")
}

/// Random observed transition with positive probability.
pub fn random_observation(rng: &mut CfRng, m: &Mdp) -> Transition {
    let state = rng.random_range(0..m.num_states());
    let action = rng.random_range(0..m.num_actions());
    let next = rng::sample_categorical(rng, m.row(state, action)).expect("row has support");
    Transition { state, action, next }
}

/// Instance `i` of a reproducible family of random problems.
pub fn instance(seed: u64, i: u64, n: usize, k: usize) -> (Mdp, Transition) {
    let mut r = rng::stream(seed, i);
    let m = random_mdp(&mut r, n, k);
    let obs = random_observation(&mut r, &m);
    (m, obs)
}
