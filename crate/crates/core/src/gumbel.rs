//! Gumbel-max counterfactuals.
//!
//! Transitions are modelled as `argmax_s log P(s | s_t, a_t) + G_s` with
//! independent standard Gumbel noise. Given an observed outcome, the noise
//! posterior is sampled top-down: the maximum is drawn first and assigned to
//! the observed state, and every other state receives a Gumbel truncated
//! below that maximum.

use rand_distr::{Distribution, Gumbel};
use thiserror::Error;

use crate::mdp::{CfMdp, Mdp, MdpError, ObservedPath, Transition};
use crate::rng::{self, CfRng};

#[derive(Debug, Error)]
pub enum GumbelError {
    #[error("observed state {0} has zero probability in its row")]
    ImpossibleObservation(usize),
    #[error("num_samples must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Path(#[from] MdpError),
}

/// Posterior noise `G'_s` consistent with one observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelPosteriorSample {
    pub noise: Vec<f64>,
    pub observed: usize,
}

impl GumbelPosteriorSample {
    /// `argmax_s log row[s] + noise[s]` over states with positive probability.
    pub fn replay(&self, row: &[f64]) -> Option<usize> {
        argmax_perturbed(row, &self.noise)
    }
}

fn argmax_perturbed(row: &[f64], noise: &[f64]) -> Option<usize> {
    argmax_log(&log_row(row), noise)
}

/// `ln p`, with `None` for impossible successors.
fn log_row(row: &[f64]) -> Vec<Option<f64>> {
    row.iter().map(|&p| (p > 0.0).then(|| p.ln())).collect()
}

fn argmax_log(log_row: &[Option<f64>], noise: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (s, (l, g)) in log_row.iter().zip(noise).enumerate() {
        if let Some(l) = l {
            let v = l + g;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((s, v));
            }
        }
    }
    best.map(|(s, _)| s)
}

fn standard_gumbel() -> Gumbel<f64> {
    Gumbel::new(0.0, 1.0).expect("unit scale is valid")
}

/// `-log(exp(-a) + exp(-b))`, computed without overflow.
fn neg_log_add_exp_neg(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    lo - (-(hi - lo)).exp().ln_1p()
}

pub fn gumbel_posterior_sample_with(
    row: &[f64],
    observed: usize,
    rng: &mut CfRng,
) -> Result<GumbelPosteriorSample, GumbelError> {
    if row.get(observed).is_none_or(|&p| p <= 0.0) {
        return Err(GumbelError::ImpossibleObservation(observed));
    }
    let g = standard_gumbel();
    let log_total = row.iter().filter(|&&p| p > 0.0).sum::<f64>().ln();
    let top = log_total + g.sample(rng);
    let noise = row
        .iter()
        .enumerate()
        .map(|(s, &p)| {
            if p <= 0.0 {
                return g.sample(rng);
            }
            let loc = p.ln();
            if s == observed {
                return top - loc;
            }
            let free = loc + g.sample(rng);
            let mut truncated = neg_log_add_exp_neg(top, free);
            if truncated >= top {
                truncated = top.next_down();
            }
            truncated - loc
        })
        .collect();
    Ok(GumbelPosteriorSample { noise, observed })
}

pub fn gumbel_posterior_sample(row: &[f64], observed: usize, seed: u64) -> Result<GumbelPosteriorSample, GumbelError> {
    gumbel_posterior_sample_with(row, observed, &mut rng::seeded(seed))
}

/// Replays `num_samples` posterior draws for the observed transition
/// against every row in `queries`, returning one frequency vector per row.
fn replay_counts(
    observed_row: &[f64],
    observed: usize,
    queries: &[&[f64]],
    num_samples: usize,
    rng: &mut CfRng,
) -> Result<Vec<Vec<f64>>, GumbelError> {
    if num_samples == 0 {
        return Err(GumbelError::NoSamples);
    }
    let logs: Vec<Vec<Option<f64>>> = queries.iter().map(|r| log_row(r)).collect();
    let mut counts = vec![vec![0usize; observed_row.len()]; queries.len()];
    for _ in 0..num_samples {
        let post = gumbel_posterior_sample_with(observed_row, observed, rng)?;
        for (log, c) in logs.iter().zip(counts.iter_mut()) {
            if let Some(s) = argmax_log(log, &post.noise) {
                c[s] += 1;
            }
        }
    }
    let n = num_samples as f64;
    Ok(counts.into_iter().map(|c| c.into_iter().map(|x| x as f64 / n).collect()).collect())
}

/// Monte-Carlo estimate of `P~(. | query)` under the Gumbel-max SCM.
pub fn gumbel_cf_probs(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    num_samples: usize,
    seed: u64,
) -> Result<Vec<f64>, GumbelError> {
    let mut rows = replay_counts(
        m.row(obs.state, obs.action),
        obs.next,
        &[m.row(query.0, query.1)],
        num_samples,
        &mut rng::seeded(seed),
    )?;
    Ok(rows.remove(0))
}

/// A point counterfactual MDP estimated with the Gumbel-max SCM.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelCfMdp {
    pub model: CfMdp,
    pub num_samples: usize,
    pub seed: u64,
}

/// Estimates every `(t, s, a)` row along `path`.
///
/// Posterior noise is drawn once per time step, from its own stream of
/// `seed`, and shared by all rows of that step.
pub fn build_gumbel_cfmdp(m: &Mdp, path: &ObservedPath, num_samples: usize, seed: u64) -> Result<GumbelCfMdp, GumbelError> {
    path.check_against(m)?;
    let (n, k) = (m.num_states(), m.num_actions());
    let queries: Vec<&[f64]> = (0..n).flat_map(|s| (0..k).map(move |a| (s, a))).map(|(s, a)| m.row(s, a)).collect();
    let mut model = CfMdp::zeros(path.len(), n, k);
    for (t, obs) in path.transitions().enumerate() {
        let mut r = rng::stream(seed, rng::stream_id(&[t as u64]));
        let rows = replay_counts(m.row(obs.state, obs.action), obs.next, &queries, num_samples, &mut r)?;
        for (i, probs) in rows.into_iter().enumerate() {
            model.row_mut(t, i / k, i % k).copy_from_slice(&probs);
        }
    }
    Ok(GumbelCfMdp { model, num_samples, seed })
}
