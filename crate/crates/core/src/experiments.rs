//! Experiment runners: off-policy evaluation bounds, worst-case robustness,
//! bound-width statistics, generation timing and counterfactual reward
//! traces.
//!
//! Every trial `i` draws its behavioural policy, observed path and Gumbel
//! noise from streams derived from `(seed, i)`, so all experiments run with
//! the same seed see the same observed paths.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{build_interval_cfmdp, AssumptionSet, BoundsError, IntervalCfMdp};
use crate::envs::{build_frozen_lake, build_grid, build_gridworld, build_toy_mdp, GridSpec};
use crate::gumbel::{build_gumbel_cfmdp, GumbelError};
use crate::interval_vi::{
    point_value_iteration, robust_policy_eval, robust_value_iteration, sample_cfmdp, RobustMode, ViError,
};
use crate::mdp::{exact_policy_value, optimal_policy, sample_path, Mdp, MdpError, ObservedPath, PolicySchedule};
use crate::rng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Vi(#[from] ViError),
    #[error(transparent)]
    Gumbel(#[from] GumbelError),
}

/// Which benchmark to run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Toy,
    Gridworld { p: f64 },
    FrozenLake,
    Grid { spec: GridSpec },
}

impl EnvConfig {
    pub fn build(&self) -> Result<Mdp, ExperimentError> {
        match self {
            EnvConfig::Toy => Ok(build_toy_mdp()),
            EnvConfig::Gridworld { p } => build_gridworld(*p).map_err(|e| ExperimentError::Config(e.to_string())),
            EnvConfig::FrozenLake => Ok(build_frozen_lake()),
            EnvConfig::Grid { spec } => build_grid(spec).map_err(|e| ExperimentError::Config(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub assumptions: AssumptionSet,
    pub num_paths: usize,
    pub horizon: usize,
    /// CFMDPs sampled from each ICFMDP for reward traces.
    pub num_cf_samples: usize,
    /// Rollouts per sampled CFMDP and policy for reward traces.
    pub num_rollouts: usize,
    pub gumbel_samples: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Tag written to every CSV row; distinguishes appended re-runs.
    pub run_id: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::Gridworld { p: 0.4 },
            assumptions: AssumptionSet::CsAndMonotonicity,
            num_paths: 100,
            horizon: 10,
            num_cf_samples: 200,
            num_rollouts: 1000,
            gumbel_samples: 1000,
            seed: 0,
            output_dir: PathBuf::from("out"),
            run_id: String::new(),
        }
    }
}

impl RunConfig {
    /// Checks counts and that the environment builds.
    pub fn validate(&self) -> Result<Mdp, ExperimentError> {
        let counts = [
            ("num_paths", self.num_paths),
            ("horizon", self.horizon),
            ("num_cf_samples", self.num_cf_samples),
            ("num_rollouts", self.num_rollouts),
            ("gumbel_samples", self.gumbel_samples),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ExperimentError::Config(format!("{name} must be at least 1")));
        }
        self.env.build()
    }
}

/// The observed data for one trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub path_seed: u64,
    pub path: ObservedPath,
    pub gumbel_seed: u64,
}

/// Samples trial `i`: a uniformly random deterministic behavioural policy
/// and one path under it.
pub fn trial(m: &Mdp, cfg: &RunConfig, i: usize) -> Result<Trial, ExperimentError> {
    let base = [cfg.seed, i as u64];
    let policy_seed = rng::stream_id(&[base[0], base[1], 1]);
    let path_seed = rng::stream_id(&[base[0], base[1], 2]);
    let behaviour = PolicySchedule::random(m.num_states(), m.num_actions(), cfg.horizon, policy_seed);
    let path = sample_path(m, &behaviour, cfg.horizon, path_seed)?;
    Ok(Trial { index: i, path_seed, path, gumbel_seed: rng::stream_id(&[base[0], base[1], 3]) })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeRecord {
    pub run_id: String,
    pub trial: usize,
    pub path_seed: u64,
    pub pessimistic: f64,
    pub optimistic: f64,
    pub gumbel: f64,
    pub true_value: f64,
    pub running_pessimistic: f64,
    pub running_optimistic: f64,
    pub running_gumbel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpeReport {
    pub records: Vec<OpeRecord>,
    pub true_value: f64,
    pub mean_pessimistic: f64,
    pub mean_optimistic: f64,
    pub mean_gumbel: f64,
    pub se_pessimistic: f64,
    pub se_optimistic: f64,
    pub se_gumbel: f64,
}

/// Bounds the return of the nominal-optimal target policy from paths
/// collected under random behavioural policies.
pub fn run_ope(cfg: &RunConfig) -> Result<OpeReport, ExperimentError> {
    let m = cfg.validate()?;
    let (target, nominal) = optimal_policy(&m, cfg.horizon);
    let true_value = nominal.expected_initial(m.initial_dist());
    let exact = exact_policy_value(&m, &target, cfg.horizon)?;
    debug_assert!((exact.expected_initial(m.initial_dist()) - true_value).abs() < 1e-9);
    let mut records = Vec::with_capacity(cfg.num_paths);
    let (mut pess, mut opt, mut gum) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..cfg.num_paths {
        let tr = trial(&m, cfg, i)?;
        let s0 = tr.path.initial_state();
        let icf = build_interval_cfmdp(&m, &tr.path, cfg.assumptions)?;
        pess.push(robust_policy_eval(&icf, &target, RobustMode::Pessimistic)?.get(0, s0));
        opt.push(robust_policy_eval(&icf, &target, RobustMode::Optimistic)?.get(0, s0));
        let g = build_gumbel_cfmdp(&m, &tr.path, cfg.gumbel_samples, tr.gumbel_seed)?;
        gum.push(g.model.policy_value(&m, &target).get(0, s0));
        records.push(OpeRecord {
            run_id: cfg.run_id.clone(),
            trial: i,
            path_seed: tr.path_seed,
            pessimistic: pess[i],
            optimistic: opt[i],
            gumbel: gum[i],
            true_value,
            running_pessimistic: mean(&pess),
            running_optimistic: mean(&opt),
            running_gumbel: mean(&gum),
        });
    }
    Ok(OpeReport {
        records,
        true_value,
        mean_pessimistic: mean(&pess),
        mean_optimistic: mean(&opt),
        mean_gumbel: mean(&gum),
        se_pessimistic: std_error(&pess),
        se_optimistic: std_error(&opt),
        se_gumbel: std_error(&gum),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    pub run_id: String,
    pub trial: usize,
    pub path_seed: u64,
    /// Worst-case value of the pessimistic ICFMDP policy.
    pub icf_policy_value: f64,
    /// Worst-case value of the Gumbel-max policy on the same ICFMDP.
    pub gumbel_policy_value: f64,
    pub gap: f64,
}

/// Policies from both methods, judged by worst-case value on the ICFMDP.
fn robust_and_gumbel_policies(
    m: &Mdp,
    icf: &IntervalCfMdp,
    tr: &Trial,
    gumbel_samples: usize,
) -> Result<(PolicySchedule, f64, PolicySchedule), ExperimentError> {
    let robust = robust_value_iteration(icf, RobustMode::Pessimistic)?;
    let g = build_gumbel_cfmdp(m, &tr.path, gumbel_samples, tr.gumbel_seed)?;
    let (gumbel_policy, _) = point_value_iteration(&g.model, m);
    let s0 = tr.path.initial_state();
    Ok((robust.policy, robust.values.get(0, s0), gumbel_policy))
}

pub fn run_robustness(cfg: &RunConfig) -> Result<Vec<RobustnessRecord>, ExperimentError> {
    let m = cfg.validate()?;
    (0..cfg.num_paths)
        .map(|i| {
            let tr = trial(&m, cfg, i)?;
            let icf = build_interval_cfmdp(&m, &tr.path, cfg.assumptions)?;
            let (_, icf_value, gumbel_policy) = robust_and_gumbel_policies(&m, &icf, &tr, cfg.gumbel_samples)?;
            let s0 = tr.path.initial_state();
            let gumbel_value = robust_policy_eval(&icf, &gumbel_policy, RobustMode::Pessimistic)?.get(0, s0);
            Ok(RobustnessRecord {
                run_id: cfg.run_id.clone(),
                trial: i,
                path_seed: tr.path_seed,
                icf_policy_value: icf_value,
                gumbel_policy_value: gumbel_value,
                gap: icf_value - gumbel_value,
            })
        })
        .collect()
}

/// Widths of one transition's interval under each assumption set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthRecord {
    pub run_id: String,
    pub trial: usize,
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub width_none: f64,
    pub width_cs: f64,
    pub width_cs_mon: f64,
    pub ub_none: f64,
    pub ub_cs: f64,
    pub ub_cs_mon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanWidth {
    pub run_id: String,
    pub assumptions: AssumptionSet,
    pub mean_width: f64,
    /// Transitions counted (upper bound above zero).
    pub transitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundStatsReport {
    pub transitions: Vec<WidthRecord>,
    pub means: Vec<MeanWidth>,
}

impl BoundStatsReport {
    pub fn mean_width(&self, a: AssumptionSet) -> Option<f64> {
        self.means.iter().find(|m| m.assumptions == a).map(|m| m.mean_width)
    }
}

/// Mean interval width per assumption set, skipping entries whose upper
/// bound is zero under that set.
pub fn run_bound_stats(cfg: &RunConfig) -> Result<BoundStatsReport, ExperimentError> {
    let m = cfg.validate()?;
    let mut transitions = Vec::new();
    for i in 0..cfg.num_paths {
        let tr = trial(&m, cfg, i)?;
        let icfs = AssumptionSet::ALL
            .iter()
            .map(|&a| build_interval_cfmdp(&m, &tr.path, a))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = icfs[0].entries().zip(icfs[1].entries()).zip(icfs[2].entries());
        for (((t, s, a, s_next, none), (_, _, _, _, cs)), (_, _, _, _, csm)) in rows {
            transitions.push(WidthRecord {
                run_id: cfg.run_id.clone(),
                trial: i,
                t,
                s,
                a,
                s_next,
                width_none: none.width(),
                width_cs: cs.width(),
                width_cs_mon: csm.width(),
                ub_none: none.ub,
                ub_cs: cs.ub,
                ub_cs_mon: csm.ub,
            });
        }
    }
    let pick = |a: AssumptionSet, r: &WidthRecord| match a {
        AssumptionSet::NoAssumptions => (r.width_none, r.ub_none),
        AssumptionSet::CsOnly => (r.width_cs, r.ub_cs),
        AssumptionSet::CsAndMonotonicity => (r.width_cs_mon, r.ub_cs_mon),
    };
    let means = AssumptionSet::ALL
        .iter()
        .map(|&a| {
            let widths: Vec<f64> =
                transitions.iter().map(|r| pick(a, r)).filter(|&(_, ub)| ub > 0.0).map(|(w, _)| w).collect();
            MeanWidth {
                run_id: cfg.run_id.clone(),
                assumptions: a,
                mean_width: if widths.is_empty() { 0.0 } else { mean(&widths) },
                transitions: widths.len(),
            }
        })
        .collect();
    Ok(BoundStatsReport { transitions, means })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub run_id: String,
    pub trial: usize,
    pub gumbel_samples: usize,
    pub icf_seconds: f64,
    pub gumbel_seconds: f64,
    pub speedup: f64,
}

/// Wall-clock time to build the ICFMDP and the Gumbel CFMDP for each path.
pub fn run_timing(cfg: &RunConfig) -> Result<Vec<TimingRecord>, ExperimentError> {
    let m = cfg.validate()?;
    (0..cfg.num_paths)
        .map(|i| {
            let tr = trial(&m, cfg, i)?;
            let start = Instant::now();
            let icf = build_interval_cfmdp(&m, &tr.path, cfg.assumptions)?;
            let icf_seconds = start.elapsed().as_secs_f64();
            std::hint::black_box(&icf);
            let start = Instant::now();
            let g = build_gumbel_cfmdp(&m, &tr.path, cfg.gumbel_samples, tr.gumbel_seed)?;
            let gumbel_seconds = start.elapsed().as_secs_f64();
            std::hint::black_box(&g);
            Ok(TimingRecord {
                run_id: cfg.run_id.clone(),
                trial: i,
                gumbel_samples: cfg.gumbel_samples,
                icf_seconds,
                gumbel_seconds,
                speedup: gumbel_seconds / icf_seconds.max(1e-12),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Icfmdp,
    GumbelMax,
}

/// Instant-reward statistics at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run_id: String,
    pub trial: usize,
    pub method: Method,
    pub t: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
}

/// Per-method summary over all counterfactual rollouts of one trial.
///
/// `min_cumulative_sample` is the lowest return seen among the rollouts, a
/// sample statistic that is not the pessimistic value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub run_id: String,
    pub trial: usize,
    pub method: Method,
    pub mean_cumulative: f64,
    pub min_cumulative_sample: f64,
    pub pessimistic_value: f64,
    pub rollouts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub steps: Vec<TraceRecord>,
    pub summaries: Vec<TraceSummary>,
}

/// Rolls out both methods' policies on CFMDPs sampled from each ICFMDP.
pub fn run_cf_traces(cfg: &RunConfig) -> Result<TraceReport, ExperimentError> {
    let m = cfg.validate()?;
    let mut steps = Vec::new();
    let mut summaries = Vec::new();
    for i in 0..cfg.num_paths {
        let tr = trial(&m, cfg, i)?;
        let s0 = tr.path.initial_state();
        let icf = build_interval_cfmdp(&m, &tr.path, cfg.assumptions)?;
        let (robust_policy, _, gumbel_policy) = robust_and_gumbel_policies(&m, &icf, &tr, cfg.gumbel_samples)?;
        for (method, policy) in [(Method::Icfmdp, &robust_policy), (Method::GumbelMax, &gumbel_policy)] {
            let h = icf.horizon();
            let mut sum = vec![0.0; h];
            let mut sum_sq = vec![0.0; h];
            let mut returns = Vec::with_capacity(cfg.num_cf_samples * cfg.num_rollouts);
            for c in 0..cfg.num_cf_samples {
                let sample_seed = rng::stream_id(&[cfg.seed, i as u64, 4, c as u64]);
                let cf = sample_cfmdp(&icf, sample_seed)?;
                let mut r = rng::stream(sample_seed, method as u64);
                for _ in 0..cfg.num_rollouts {
                    let rewards = cf.model.rollout(&m, policy, s0, &mut r);
                    for (t, x) in rewards.iter().enumerate() {
                        sum[t] += x;
                        sum_sq[t] += x * x;
                    }
                    returns.push(rewards.iter().sum::<f64>());
                }
            }
            let count = returns.len() as f64;
            for t in 0..h {
                let mu = sum[t] / count;
                steps.push(TraceRecord {
                    run_id: cfg.run_id.clone(),
                    trial: i,
                    method,
                    t,
                    mean_reward: mu,
                    std_reward: (sum_sq[t] / count - mu * mu).max(0.0).sqrt(),
                });
            }
            summaries.push(TraceSummary {
                run_id: cfg.run_id.clone(),
                trial: i,
                method,
                mean_cumulative: mean(&returns),
                min_cumulative_sample: returns.iter().copied().fold(f64::INFINITY, f64::min),
                pessimistic_value: robust_policy_eval(&icf, policy, RobustMode::Pessimistic)?.get(0, s0),
                rollouts: returns.len(),
            });
        }
    }
    Ok(TraceReport { steps, summaries })
}

/// One closed-form bound next to its LP optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub closed_lb: f64,
    pub lp_lb: f64,
    pub closed_ub: f64,
    pub lp_ub: f64,
    pub delta: f64,
}

/// Compares every interval of the ICFMDP for `path` against the coupling LP.
pub fn verify_path(
    m: &Mdp,
    path: &ObservedPath,
    assumptions: AssumptionSet,
) -> Result<Vec<VerifyRecord>, Box<dyn std::error::Error + Send + Sync>> {
    let icf = build_interval_cfmdp(m, path, assumptions)?;
    icf.entries()
        .map(|(t, s, a, s_next, iv)| {
            let lp = crate::oracle::oracle_bounds(m, path.transition(t), (s, a), s_next, assumptions)?;
            Ok(VerifyRecord {
                t,
                s,
                a,
                s_next,
                closed_lb: iv.lb,
                lp_lb: lp.lb,
                closed_ub: iv.ub,
                lp_ub: lp.ub,
                delta: (iv.lb - lp.lb).abs().max((iv.ub - lp.ub).abs()),
            })
        })
        .collect()
}
