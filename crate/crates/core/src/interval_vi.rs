//! Pessimistic and optimistic finite-horizon value iteration over interval
//! counterfactual MDPs, and sampling of concrete models from the intervals.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{IntervalCfMdp, ProbInterval};
use crate::mdp::{CfMdp, Mdp, PolicySchedule, ValueTable};
use crate::rng;

const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustMode {
    Pessimistic,
    Optimistic,
}

impl RobustMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RobustMode::Pessimistic => "pessimistic",
            RobustMode::Optimistic => "optimistic",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViError {
    #[error("interval row is infeasible: sum lb = {sum_lb}, sum ub = {sum_ub}")]
    InfeasibleRow { sum_lb: f64, sum_ub: f64 },
    #[error("at t={t}, s={state}, a={action}: {source}")]
    At { t: usize, state: usize, action: usize, source: Box<ViError> },
    #[error("policy horizon {policy} is shorter than model horizon {model}")]
    PolicyTooShort { policy: usize, model: usize },
    #[error("length mismatch: {values} values for {intervals} intervals")]
    Length { values: usize, intervals: usize },
}

/// The extreme distribution inside `intervals` for `values`: lower bounds
/// first, then the remaining mass poured into successors in ascending
/// (pessimistic) or descending (optimistic) value order. Ties go to the
/// lower index.
pub fn robust_distribution(values: &[f64], intervals: &[ProbInterval], mode: RobustMode) -> Result<Vec<f64>, ViError> {
    if values.len() != intervals.len() {
        return Err(ViError::Length { values: values.len(), intervals: intervals.len() });
    }
    let sum_lb: f64 = intervals.iter().map(|iv| iv.lb).sum();
    let sum_ub: f64 = intervals.iter().map(|iv| iv.ub).sum();
    if sum_lb > 1.0 + ROW_TOL || sum_ub < 1.0 - ROW_TOL {
        return Err(ViError::InfeasibleRow { sum_lb, sum_ub });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    match mode {
        RobustMode::Pessimistic => order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))),
        RobustMode::Optimistic => order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b))),
    }
    let mut p: Vec<f64> = intervals.iter().map(|iv| iv.lb).collect();
    let mut remaining = 1.0 - sum_lb;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let add = (intervals[i].ub - intervals[i].lb).min(remaining);
        p[i] += add;
        remaining -= add;
    }
    Ok(p)
}

/// Worst-case (or best-case) expectation of `values` over the interval row.
pub fn robust_expectation(values: &[f64], intervals: &[ProbInterval], mode: RobustMode) -> Result<f64, ViError> {
    let p = robust_distribution(values, intervals, mode)?;
    Ok(p.iter().zip(values).map(|(p, v)| p * v).sum())
}

/// Backward induction with a pluggable expectation `expect(t, s, a, V_{t+1})`.
///
/// With `fixed` set, actions follow that schedule; otherwise the action with
/// the largest backed-up value is taken, ties to the lowest index.
pub(crate) fn backward_induction<E>(
    horizon: usize,
    rewards: &Mdp,
    fixed: Option<&PolicySchedule>,
    mut expect: E,
) -> Result<(PolicySchedule, ValueTable), ViError>
where
    E: FnMut(usize, usize, usize, &[f64]) -> Result<f64, ViError>,
{
    let n = rewards.num_states();
    let mut v = ValueTable::zeros(horizon, n);
    let mut actions = vec![0; horizon * n];
    let mut next = vec![0.0; n];
    for t in (0..horizon).rev() {
        next.copy_from_slice(v.layer(t + 1));
        for s in 0..n {
            let candidates: Box<dyn Iterator<Item = usize>> = match fixed {
                Some(policy) => Box::new(std::iter::once(policy.action(t, s))),
                None => Box::new(0..rewards.num_actions()),
            };
            let mut best = f64::NEG_INFINITY;
            for a in candidates {
                let ev = expect(t, s, a, &next)
                    .map_err(|e| ViError::At { t, state: s, action: a, source: Box::new(e) })?;
                let q = rewards.reward(s, a) + ev;
                if q > best {
                    best = q;
                    actions[t * n + s] = a;
                }
            }
            v.set(t, s, best);
        }
    }
    Ok((PolicySchedule::from_flat(horizon, n, actions), v))
}

/// A robust policy with its value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSolution {
    pub policy: PolicySchedule,
    pub values: ValueTable,
    pub mode: RobustMode,
}

/// Best policy against the worst (or best) model inside the intervals.
pub fn robust_value_iteration(icf: &IntervalCfMdp, mode: RobustMode) -> Result<RobustSolution, ViError> {
    let (policy, values) = backward_induction(icf.horizon(), icf.base(), None, |t, s, a, next| {
        robust_expectation(next, icf.row(t, s, a), mode)
    })?;
    Ok(RobustSolution { policy, values, mode })
}

/// Worst-case (or best-case) value of a fixed policy.
pub fn robust_policy_eval(icf: &IntervalCfMdp, policy: &PolicySchedule, mode: RobustMode) -> Result<ValueTable, ViError> {
    if policy.horizon() < icf.horizon() {
        return Err(ViError::PolicyTooShort { policy: policy.horizon(), model: icf.horizon() });
    }
    let (_, values) = backward_induction(icf.horizon(), icf.base(), Some(policy), |t, s, a, next| {
        robust_expectation(next, icf.row(t, s, a), mode)
    })?;
    Ok(values)
}

/// Finite-horizon optimal policy of a concrete time-indexed model.
pub fn point_value_iteration(cf: &CfMdp, rewards: &Mdp) -> (PolicySchedule, ValueTable) {
    backward_induction(cf.horizon(), rewards, None, |t, s, a, next| {
        Ok(cf.row(t, s, a).iter().zip(next).map(|(p, v)| p * v).sum())
    })
    .expect("point expectations cannot fail")
}

/// A concrete counterfactual MDP drawn from an ICFMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCfMdp {
    pub model: CfMdp,
    pub seed: u64,
}

/// Draws one distribution from an interval row.
///
/// Successors are visited in random order; each takes a uniform value in the
/// range that keeps the rest of the row completable, and the last one takes
/// what is left.
pub fn sample_row<R: Rng + ?Sized>(intervals: &[ProbInterval], rng: &mut R) -> Result<Vec<f64>, ViError> {
    let sum_lb: f64 = intervals.iter().map(|iv| iv.lb).sum();
    let sum_ub: f64 = intervals.iter().map(|iv| iv.ub).sum();
    if sum_lb > 1.0 + ROW_TOL || sum_ub < 1.0 - ROW_TOL {
        return Err(ViError::InfeasibleRow { sum_lb, sum_ub });
    }
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.shuffle(rng);
    let mut later_lb = sum_lb;
    let mut later_ub = sum_ub;
    let mut remaining: f64 = 1.0;
    let mut p = vec![0.0; intervals.len()];
    let last = order.len() - 1;
    for (pos, &i) in order.iter().enumerate() {
        let iv = intervals[i];
        later_lb -= iv.lb;
        later_ub -= iv.ub;
        if pos == last {
            p[i] = remaining.clamp(iv.lb, iv.ub);
            break;
        }
        let lo = iv.lb.max(remaining - later_ub);
        let hi = iv.ub.min(remaining - later_lb);
        let x = if hi > lo { lo + rng.random::<f64>() * (hi - lo) } else { lo.min(iv.ub) };
        p[i] = x;
        remaining -= x;
    }
    Ok(p)
}

/// Samples every row of `icf` independently, with per-row streams of `seed`.
pub fn sample_cfmdp(icf: &IntervalCfMdp, seed: u64) -> Result<SampledCfMdp, ViError> {
    let (n, k) = (icf.num_states(), icf.num_actions());
    let mut model = CfMdp::zeros(icf.horizon(), n, k);
    for t in 0..icf.horizon() {
        for s in 0..n {
            for a in 0..k {
                let mut r = rng::stream(seed, rng::stream_id(&[t as u64, s as u64, a as u64]));
                let row = sample_row(icf.row(t, s, a), &mut r)
                    .map_err(|e| ViError::At { t, state: s, action: a, source: Box::new(e) })?;
                model.row_mut(t, s, a).copy_from_slice(&row);
            }
        }
    }
    Ok(SampledCfMdp { model, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{build_interval_cfmdp, AssumptionSet};
    use crate::envs::build_toy_mdp;
    use crate::mdp::{exact_policy_value, optimal_policy, ObservedPath};

    fn iv(lb: f64, ub: f64) -> ProbInterval {
        ProbInterval::new(lb, ub)
    }

    /// Vertices of {lb <= p <= ub, p0 + p1 = 1}: p0 at the ends of its
    /// feasible range.
    fn two_successor_extremes(v: [f64; 2], lb: [f64; 2], ub: [f64; 2]) -> (f64, f64) {
        let lo0 = lb[0].max(1.0 - ub[1]);
        let hi0 = ub[0].min(1.0 - lb[1]);
        let val = |p0: f64| p0 * v[0] + (1.0 - p0) * v[1];
        let (a, b) = (val(lo0), val(hi0));
        (a.min(b), a.max(b))
    }

    #[test]
    fn order_and_fill_two_successors() {
        let row = [iv(0.3, 0.6), iv(0.2, 0.9)];
        let v = [0.0, 10.0];
        let pess = robust_expectation(&v, &row, RobustMode::Pessimistic).unwrap();
        let opt = robust_expectation(&v, &row, RobustMode::Optimistic).unwrap();
        let (lo, hi) = two_successor_extremes(v, [0.3, 0.2], [0.6, 0.9]);
        assert!((lo - 4.0).abs() < 1e-12 && (hi - 7.0).abs() < 1e-12);
        assert!((pess - lo).abs() < 1e-12);
        assert!((opt - hi).abs() < 1e-12);
        let p = robust_distribution(&v, &row, RobustMode::Pessimistic).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn trivial_rows() {
        let v = [0.0, 10.0];
        let free = [iv(0.0, 1.0), iv(0.0, 1.0)];
        assert_eq!(robust_expectation(&v, &free, RobustMode::Pessimistic).unwrap(), 0.0);
        assert_eq!(robust_expectation(&v, &free, RobustMode::Optimistic).unwrap(), 10.0);
        let point = [ProbInterval::point(0.25), ProbInterval::point(0.75)];
        assert_eq!(robust_expectation(&v, &point, RobustMode::Pessimistic).unwrap(), 7.5);
        let bad = [iv(0.6, 0.7), iv(0.6, 0.7)];
        assert!(matches!(robust_expectation(&v, &bad, RobustMode::Pessimistic), Err(ViError::InfeasibleRow { .. })));
    }

    #[test]
    fn value_ties_fill_lowest_index_first() {
        let v = [1.0, 1.0, 1.0];
        let row = [iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0)];
        let p = robust_distribution(&v, &row, RobustMode::Pessimistic).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
    }

    fn nominal_icf(m: &Mdp, horizon: usize) -> IntervalCfMdp {
        let intervals = (0..horizon)
            .map(|_| {
                (0..m.num_states())
                    .map(|s| {
                        (0..m.num_actions())
                            .map(|a| m.row(s, a).iter().map(|&p| ProbInterval::point(p)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let path = ObservedPath::new(vec![0; horizon + 1], vec![0; horizon]).unwrap();
        IntervalCfMdp::from_intervals(m.clone(), path, AssumptionSet::NoAssumptions, intervals).unwrap()
    }

    fn chain_mdp() -> Mdp {
        Mdp::new(
            vec![
                vec![vec![0.5, 0.5, 0.0], vec![0.1, 0.0, 0.9]],
                vec![vec![0.0, 0.2, 0.8], vec![1.0, 0.0, 0.0]],
                vec![vec![0.3, 0.3, 0.4], vec![0.0, 0.0, 1.0]],
            ],
            vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 3.0]],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn degenerate_intervals_match_point_value_iteration() {
        let m = chain_mdp();
        let icf = nominal_icf(&m, 6);
        let (policy, v) = optimal_policy(&m, 6);
        for mode in [RobustMode::Pessimistic, RobustMode::Optimistic] {
            let sol = robust_value_iteration(&icf, mode).unwrap();
            assert_eq!(sol.policy, policy);
            for t in 0..=6 {
                for s in 0..3 {
                    assert!((sol.values.get(t, s) - v.get(t, s)).abs() < 1e-10);
                }
            }
            let ev = robust_policy_eval(&icf, &policy, mode).unwrap();
            let exact = exact_policy_value(&m, &policy, 6).unwrap();
            assert!((ev.get(0, 0) - exact.get(0, 0)).abs() < 1e-10);
        }
    }

    #[test]
    fn robust_policy_reproduces_its_own_value() {
        let m = build_toy_mdp();
        let path = ObservedPath::new(vec![0, 1], vec![0]).unwrap();
        let icf = build_interval_cfmdp(&m, &path, AssumptionSet::NoAssumptions).unwrap();
        let sol = robust_value_iteration(&icf, RobustMode::Pessimistic).unwrap();
        let ev = robust_policy_eval(&icf, &sol.policy, RobustMode::Pessimistic).unwrap();
        assert_eq!(ev, sol.values);
        let opt = robust_value_iteration(&icf, RobustMode::Optimistic).unwrap();
        assert!(sol.values.get(0, 0) <= opt.values.get(0, 0));
    }

    #[test]
    fn sampled_toy_row_is_pinned() {
        let m = build_toy_mdp();
        let path = ObservedPath::new(vec![0, 1], vec![0]).unwrap();
        let icf = build_interval_cfmdp(&m, &path, AssumptionSet::CsAndMonotonicity).unwrap();
        for seed in 0..50 {
            let cf = sample_cfmdp(&icf, seed).unwrap();
            let row = cf.model.row(0, 1, 0);
            assert!((row[0] - 0.4).abs() < 1e-12 && row[1] == 0.0 && (row[2] - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_is_symmetric() {
        let row = [iv(0.0, 1.0), iv(0.0, 1.0)];
        let mut r = rng::seeded(11);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| sample_row(&row, &mut r).unwrap()[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn sampled_rows_respect_intervals() {
        let row = [iv(0.1, 0.5), iv(0.0, 0.2), iv(0.3, 0.9), iv(0.0, 0.05)];
        let mut r = rng::seeded(3);
        for _ in 0..1000 {
            let p = sample_row(&row, &mut r).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, iv) in p.iter().zip(&row) {
                assert!(iv.contains(*x, 1e-12));
            }
        }
    }
}
