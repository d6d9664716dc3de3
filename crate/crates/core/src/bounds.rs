//! Closed-form counterfactual transition-probability bounds.
//!
//! Given an observed transition `s_t, a_t -> s_{t+1}`, the bounds on
//! `P~_t(s~' | s~, a~)` depend only on how the support of `(s~, a~)` relates to
//! the support of `(s_t, a_t)`:
//!
//! * the observed pair itself replays the observation exactly,
//! * a pair with disjoint support gets the Fréchet-style bounds of the
//!   coupling between the two rows,
//! * an overlapping pair is additionally restricted by counterfactual
//!   stability (CS) and the two monotonicity constraints.
//!
//! Lower bounds that depend on the sum of the other upper bounds are computed
//! in a second pass over the same row.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, MdpError, ObservedPath, Transition};

/// Largest rounding slack tolerated before an interval is declared invalid.
const CLAMP_SLACK: f64 = 1e-9;
/// Tolerance on `sum(lb) <= 1 <= sum(ub)`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Which causal assumptions constrain the counterfactual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum AssumptionSet {
    #[serde(rename = "none")]
    NoAssumptions,
    #[serde(rename = "cs")]
    CsOnly,
    #[serde(rename = "cs+mon")]
    CsAndMonotonicity,
}

impl AssumptionSet {
    pub const ALL: [AssumptionSet; 3] =
        [AssumptionSet::NoAssumptions, AssumptionSet::CsOnly, AssumptionSet::CsAndMonotonicity];

    pub fn as_str(self) -> &'static str {
        match self {
            AssumptionSet::NoAssumptions => "none",
            AssumptionSet::CsOnly => "cs",
            AssumptionSet::CsAndMonotonicity => "cs+mon",
        }
    }

    pub fn uses_stability(self) -> bool {
        !matches!(self, AssumptionSet::NoAssumptions)
    }

    pub fn uses_monotonicity(self) -> bool {
        matches!(self, AssumptionSet::CsAndMonotonicity)
    }
}

impl fmt::Display for AssumptionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssumptionSet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AssumptionSet::NoAssumptions),
            "cs" => Ok(AssumptionSet::CsOnly),
            "cs+mon" | "cs+m" | "csm" => Ok(AssumptionSet::CsAndMonotonicity),
            other => Err(format!("unknown assumption set `{other}` (expected none|cs|cs+mon)")),
        }
    }
}

/// A closed probability interval `[lb, ub]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbInterval {
    pub lb: f64,
    pub ub: f64,
}

impl ProbInterval {
    pub const ZERO: ProbInterval = ProbInterval { lb: 0.0, ub: 0.0 };
    pub const ONE: ProbInterval = ProbInterval { lb: 1.0, ub: 1.0 };

    pub fn new(lb: f64, ub: f64) -> Self {
        ProbInterval { lb, ub }
    }

    pub fn point(p: f64) -> Self {
        ProbInterval { lb: p, ub: p }
    }

    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    pub fn contains(&self, p: f64, tol: f64) -> bool {
        p >= self.lb - tol && p <= self.ub + tol
    }

    /// Absorbs rounding slack: `lb` is raised to 0 and lowered to `ub`
    /// when it overshoots by no more than `1e-9`.
    fn clamped(lb: f64, ub: f64) -> Result<Self, BoundsError> {
        let ub = ub.clamp(0.0, 1.0);
        if lb > ub + CLAMP_SLACK || lb < -CLAMP_SLACK {
            return Err(BoundsError::Slack { lb, ub });
        }
        Ok(ProbInterval { lb: lb.clamp(0.0, ub), ub })
    }
}

/// How a query pair's support relates to the observed pair's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportRelation {
    ObservedPair,
    Disjoint,
    Overlapping,
}

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("interval [{lb}, {ub}] is inconsistent beyond rounding slack")]
    Slack { lb: f64, ub: f64 },
    #[error("at t={t}, s={state}, a={action}: {source}")]
    At { t: usize, state: usize, action: usize, source: Box<BoundsError> },
    #[error("row t={t}, s={state}, a={action} is infeasible: sum lb = {sum_lb}, sum ub = {sum_ub}")]
    InfeasibleRow { t: usize, state: usize, action: usize, sum_lb: f64, sum_ub: f64 },
    #[error(transparent)]
    Path(#[from] MdpError),
}

fn check_observed(m: &Mdp, obs: Transition) -> Result<f64, BoundsError> {
    let p = m.prob(obs.state, obs.action, obs.next);
    if p > 0.0 {
        Ok(p)
    } else {
        Err(BoundsError::Precondition(format!(
            "observed transition ({}, {}) -> {} has zero probability",
            obs.state, obs.action, obs.next
        )))
    }
}

pub fn classify_support(m: &Mdp, observed: (usize, usize), query: (usize, usize)) -> SupportRelation {
    if observed == query {
        return SupportRelation::ObservedPair;
    }
    let a = m.row(observed.0, observed.1);
    let b = m.row(query.0, query.1);
    if a.iter().zip(b).any(|(&x, &y)| x > 0.0 && y > 0.0) {
        SupportRelation::Overlapping
    } else {
        SupportRelation::Disjoint
    }
}

/// Counterfactual stability forces `P~(s~' | s~, a~) = 0` when this holds.
///
/// The ratio comparison is cross-multiplied and strict.
pub fn cs_condition(m: &Mdp, obs: Transition, query: (usize, usize), next: usize) -> bool {
    let p_alt_obs = m.prob(obs.state, obs.action, next);
    if p_alt_obs <= 0.0 {
        return false;
    }
    let p_obs = m.prob(obs.state, obs.action, obs.next);
    let p_seen_query = m.prob(query.0, query.1, obs.next);
    let p_alt_query = m.prob(query.0, query.1, next);
    p_seen_query * p_alt_obs > p_alt_query * p_obs
}

/// The observed pair replays the observation: `[1, 1]` at `s_{t+1}`, `[0, 0]`
/// elsewhere.
pub fn bounds_observed_pair(m: &Mdp, obs: Transition) -> Vec<ProbInterval> {
    (0..m.num_states())
        .map(|s| if s == obs.next { ProbInterval::ONE } else { ProbInterval::ZERO })
        .collect()
}

/// Coupling bounds of an arbitrary pair against the observed row, ignoring
/// every assumption.
fn frechet(p_query: f64, p_obs: f64) -> (f64, f64) {
    let ub = if p_query < p_obs { p_query / p_obs } else { 1.0 };
    let lb = if p_query > 1.0 - p_obs { (p_query - (1.0 - p_obs)) / p_obs } else { 0.0 };
    (lb, ub)
}

/// Bounds for a pair whose support is disjoint from the observed pair's.
pub fn bounds_disjoint(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    next: usize,
) -> Result<ProbInterval, BoundsError> {
    let p_obs = check_observed(m, obs)?;
    if classify_support(m, (obs.state, obs.action), query) != SupportRelation::Disjoint {
        return Err(BoundsError::Precondition(format!(
            "pair ({}, {}) does not have disjoint support",
            query.0, query.1
        )));
    }
    let (lb, ub) = frechet(m.prob(query.0, query.1, next), p_obs);
    ProbInterval::clamped(lb, ub)
}

fn require_overlapping(m: &Mdp, obs: Transition, query: (usize, usize)) -> Result<f64, BoundsError> {
    let p_obs = check_observed(m, obs)?;
    if classify_support(m, (obs.state, obs.action), query) != SupportRelation::Overlapping {
        return Err(BoundsError::Precondition(format!(
            "pair ({}, {}) does not overlap the observed support",
            query.0, query.1
        )));
    }
    Ok(p_obs)
}

/// Upper bound for an overlapping pair under CS and monotonicity.
pub fn bounds_overlapping_ub(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    next: usize,
) -> Result<f64, BoundsError> {
    let p_obs = require_overlapping(m, obs, query)?;
    Ok(overlapping_ub(m, obs, query, next, p_obs))
}

fn overlapping_ub(m: &Mdp, obs: Transition, query: (usize, usize), next: usize, p_obs: f64) -> f64 {
    let p_seen_query = m.prob(query.0, query.1, obs.next);
    let p_query = m.prob(query.0, query.1, next);
    if next == obs.next {
        p_obs.min(p_seen_query) / p_obs
    } else if cs_condition(m, obs, query, next) {
        0.0
    } else if m.prob(obs.state, obs.action, next) > 0.0 {
        p_query.min(1.0 - p_seen_query)
    } else {
        (1.0 - p_seen_query).min(p_query / p_obs)
    }
}

/// `1 - sum of the other upper bounds`.
fn residual(ub_row: &[f64], next: usize) -> f64 {
    let others: f64 = ub_row.iter().enumerate().filter(|&(j, _)| j != next).map(|(_, u)| u).sum();
    1.0 - others
}

/// Lower bound for an overlapping pair under CS and monotonicity.
///
/// `ub_row` must hold [`bounds_overlapping_ub`] for every successor of the
/// same query pair.
pub fn bounds_overlapping_lb(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    next: usize,
    ub_row: &[f64],
) -> Result<f64, BoundsError> {
    require_overlapping(m, obs, query)?;
    if ub_row.len() != m.num_states() {
        return Err(BoundsError::Precondition("ub_row has the wrong length".into()));
    }
    Ok(overlapping_lb(m, obs, query, next, ub_row))
}

fn overlapping_lb(m: &Mdp, obs: Transition, query: (usize, usize), next: usize, ub_row: &[f64]) -> f64 {
    if next == obs.next {
        m.prob(query.0, query.1, next).max(residual(ub_row, next))
    } else if cs_condition(m, obs, query, next) {
        0.0
    } else {
        residual(ub_row, next).max(0.0)
    }
}

/// Bounds with no causal assumptions.
///
/// Meant for pairs other than the observed one; the observed pair is always
/// pinned by [`bounds_observed_pair`].
pub fn bounds_no_assumption(m: &Mdp, obs: Transition, query: (usize, usize), next: usize) -> ProbInterval {
    let p_obs = m.prob(obs.state, obs.action, obs.next);
    let p_query = m.prob(query.0, query.1, next);
    let ub = (p_query / p_obs).min(1.0);
    let lb = ((p_query - (1.0 - p_obs)) / p_obs).max(0.0);
    ProbInterval { lb: lb.min(ub), ub }
}

/// Upper bound under counterfactual stability alone.
pub fn cs_only_ub(m: &Mdp, obs: Transition, query: (usize, usize), next: usize) -> f64 {
    if cs_condition(m, obs, query, next) {
        0.0
    } else {
        let p_obs = m.prob(obs.state, obs.action, obs.next);
        (m.prob(query.0, query.1, next) / p_obs).min(1.0)
    }
}

/// Bounds under counterfactual stability alone. `ub_row` must hold
/// [`cs_only_ub`] for every successor of `query`.
pub fn bounds_cs_only(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    next: usize,
    ub_row: &[f64],
) -> ProbInterval {
    let ub = ub_row[next];
    let lb = if classify_support(m, (obs.state, obs.action), query) == SupportRelation::Disjoint {
        bounds_no_assumption(m, obs, query, next).lb
    } else if cs_condition(m, obs, query, next) {
        0.0
    } else {
        residual(ub_row, next).max(0.0)
    };
    ProbInterval { lb: lb.min(ub), ub }
}

/// Intervals for every successor of `query` given one observed transition.
pub fn row_bounds(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    assumptions: AssumptionSet,
) -> Result<Vec<ProbInterval>, BoundsError> {
    let p_obs = check_observed(m, obs)?;
    let n = m.num_states();
    let relation = classify_support(m, (obs.state, obs.action), query);
    if relation == SupportRelation::ObservedPair {
        return Ok(bounds_observed_pair(m, obs));
    }
    match assumptions {
        AssumptionSet::NoAssumptions => {
            Ok((0..n).map(|j| bounds_no_assumption(m, obs, query, j)).collect())
        }
        AssumptionSet::CsOnly => {
            let ubs: Vec<f64> = (0..n).map(|j| cs_only_ub(m, obs, query, j)).collect();
            (0..n)
                .map(|j| {
                    let iv = bounds_cs_only(m, obs, query, j, &ubs);
                    ProbInterval::clamped(iv.lb, iv.ub)
                })
                .collect()
        }
        AssumptionSet::CsAndMonotonicity => match relation {
            SupportRelation::Disjoint => {
                (0..n).map(|j| bounds_disjoint(m, obs, query, j)).collect()
            }
            _ => {
                let ubs: Vec<f64> = (0..n).map(|j| overlapping_ub(m, obs, query, j, p_obs)).collect();
                (0..n)
                    .map(|j| ProbInterval::clamped(overlapping_lb(m, obs, query, j, &ubs), ubs[j]))
                    .collect()
            }
        },
    }
}

/// A time-indexed interval counterfactual MDP built from one observed path.
#[derive(Debug, Clone)]
pub struct IntervalCfMdp {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    intervals: Vec<ProbInterval>,
    base: Mdp,
    path: ObservedPath,
    assumptions: AssumptionSet,
}

impl IntervalCfMdp {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn base(&self) -> &Mdp {
        &self.base
    }

    pub fn path(&self) -> &ObservedPath {
        &self.path
    }

    pub fn assumptions(&self) -> AssumptionSet {
        self.assumptions
    }

    #[inline]
    fn offset(&self, t: usize, s: usize, a: usize) -> usize {
        ((t * self.num_states + s) * self.num_actions + a) * self.num_states
    }

    #[inline]
    pub fn row(&self, t: usize, s: usize, a: usize) -> &[ProbInterval] {
        let o = self.offset(t, s, a);
        &self.intervals[o..o + self.num_states]
    }

    pub fn interval(&self, t: usize, s: usize, a: usize, next: usize) -> ProbInterval {
        self.row(t, s, a)[next]
    }

    /// `(t, s, a, s', interval)` for every entry, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, usize, ProbInterval)> + '_ {
        let (n, k) = (self.num_states, self.num_actions);
        self.intervals.iter().enumerate().map(move |(i, iv)| {
            let next = i % n;
            let a = (i / n) % k;
            let s = (i / (n * k)) % n;
            let t = i / (n * k * n);
            (t, s, a, next, *iv)
        })
    }

    /// Builds an ICFMDP whose intervals are supplied directly (for testing
    /// robust solvers on arbitrary interval models). Rows are checked for
    /// feasibility.
    pub fn from_intervals(
        base: Mdp,
        path: ObservedPath,
        assumptions: AssumptionSet,
        intervals: Vec<Vec<Vec<Vec<ProbInterval>>>>,
    ) -> Result<Self, BoundsError> {
        let horizon = intervals.len();
        let (n, k) = (base.num_states(), base.num_actions());
        let mut flat = Vec::with_capacity(horizon * n * k * n);
        for (t, layer) in intervals.into_iter().enumerate() {
            if layer.len() != n {
                return Err(BoundsError::Precondition(format!("layer {t} has wrong state count")));
            }
            for per_s in layer {
                if per_s.len() != k || per_s.iter().any(|r| r.len() != n) {
                    return Err(BoundsError::Precondition(format!("layer {t} has a ragged row")));
                }
                flat.extend(per_s.into_iter().flatten());
            }
        }
        let icf = IntervalCfMdp {
            horizon,
            num_states: n,
            num_actions: k,
            intervals: flat,
            base,
            path,
            assumptions,
        };
        icf.check_feasible()?;
        Ok(icf)
    }

    fn check_feasible(&self) -> Result<(), BoundsError> {
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let row = self.row(t, s, a);
                    let sum_lb: f64 = row.iter().map(|iv| iv.lb).sum();
                    let sum_ub: f64 = row.iter().map(|iv| iv.ub).sum();
                    let bad_interval = row.iter().any(|iv| !(0.0 <= iv.lb && iv.lb <= iv.ub && iv.ub <= 1.0));
                    if bad_interval
                        || sum_lb > 1.0 + FEASIBILITY_TOL
                        || sum_ub < 1.0 - FEASIBILITY_TOL
                    {
                        return Err(BoundsError::InfeasibleRow { t, state: s, action: a, sum_lb, sum_ub });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Computes the bounds of every transition for every observed step of `path`.
pub fn build_interval_cfmdp(
    m: &Mdp,
    path: &ObservedPath,
    assumptions: AssumptionSet,
) -> Result<IntervalCfMdp, BoundsError> {
    path.check_against(m)?;
    let (n, k) = (m.num_states(), m.num_actions());
    let horizon = path.len();
    let mut intervals = Vec::with_capacity(horizon * n * k * n);
    for (t, obs) in path.transitions().enumerate() {
        for s in 0..n {
            for a in 0..k {
                let row = row_bounds(m, obs, (s, a), assumptions).map_err(|e| BoundsError::At {
                    t,
                    state: s,
                    action: a,
                    source: Box::new(e),
                })?;
                intervals.extend(row);
            }
        }
    }
    let icf = IntervalCfMdp {
        horizon,
        num_states: n,
        num_actions: k,
        intervals,
        base: m.clone(),
        path: path.clone(),
        assumptions,
    };
    icf.check_feasible()?;
    Ok(icf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::build_toy_mdp;

    const OBS: Transition = Transition { state: 0, action: 0, next: 1 };

    fn two_row(p_query: Vec<f64>, p_observed: Vec<f64>) -> Mdp {
        // state 0 is the observed pair, state 1 the query pair
        let n = p_query.len();
        let mut rows = vec![vec![p_observed], vec![p_query]];
        for s in 2..n {
            let mut r = vec![0.0; n];
            r[s] = 1.0;
            rows.push(vec![r]);
        }
        let mut init = vec![0.0; n];
        init[0] = 1.0;
        Mdp::new(rows, vec![vec![0.0]; n], init).unwrap()
    }

    #[test]
    fn support_classification_on_toy() {
        let m = build_toy_mdp();
        assert_eq!(classify_support(&m, (0, 0), (0, 0)), SupportRelation::ObservedPair);
        assert_eq!(classify_support(&m, (0, 0), (1, 0)), SupportRelation::Overlapping);
        let d = Mdp::new(
            vec![vec![vec![0.0, 1.0, 0.0]], vec![vec![0.0, 0.0, 1.0]], vec![vec![0.0, 0.0, 1.0]]],
            vec![vec![0.0]; 3],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(classify_support(&d, (0, 0), (1, 0)), SupportRelation::Disjoint);
    }

    #[test]
    fn cs_condition_cases() {
        let m = build_toy_mdp();
        assert!(!cs_condition(&m, OBS, (1, 0), 0));
        // query successor unreachable from the observed pair
        let d = two_row(vec![0.2, 0.3, 0.0, 0.5], vec![0.5, 0.5, 0.0, 0.0]);
        assert!(!cs_condition(&d, OBS, (1, 0), 3));
        // 0.6/0.4 > 0.1/0.5
        let c = two_row(vec![0.1, 0.6, 0.3], vec![0.5, 0.4, 0.1]);
        assert!(cs_condition(&c, OBS, (1, 0), 0));
    }

    #[test]
    fn observed_pair_is_pinned() {
        let m = build_toy_mdp();
        let row = bounds_observed_pair(&m, OBS);
        assert_eq!(row, vec![ProbInterval::ZERO, ProbInterval::ONE, ProbInterval::ZERO]);
        for a in AssumptionSet::ALL {
            assert_eq!(row_bounds(&m, OBS, (0, 0), a).unwrap(), row);
        }
    }

    #[test]
    fn disjoint_examples() {
        // query mass 0.5 on a successor outside the observed support, P_obs = 0.8
        let m = two_row(vec![0.0, 0.0, 0.5, 0.5], vec![0.2, 0.8, 0.0, 0.0]);
        let iv = bounds_disjoint(&m, OBS, (1, 0), 2).unwrap();
        assert!((iv.lb - 0.375).abs() < 1e-12 && (iv.ub - 0.625).abs() < 1e-12);
        let m = two_row(vec![0.0, 0.0, 0.1, 0.9], vec![0.2, 0.8, 0.0, 0.0]);
        let iv = bounds_disjoint(&m, OBS, (1, 0), 2).unwrap();
        assert!(iv.lb.abs() < 1e-12 && (iv.ub - 0.125).abs() < 1e-12);
        let m = two_row(vec![0.0, 0.0, 1.0, 0.0], vec![0.2, 0.8, 0.0, 0.0]);
        assert_eq!(bounds_disjoint(&m, OBS, (1, 0), 2).unwrap(), ProbInterval::ONE);
        assert!(bounds_disjoint(&build_toy_mdp(), OBS, (1, 0), 0).is_err());
    }

    #[test]
    fn overlapping_examples_from_toy() {
        let m = build_toy_mdp();
        let ub: Vec<f64> = (0..3).map(|j| bounds_overlapping_ub(&m, OBS, (1, 0), j).unwrap()).collect();
        assert!((ub[0] - 0.4).abs() < 1e-12);
        assert_eq!(ub[1], 0.0);
        assert!((ub[2] - 0.6).abs() < 1e-12);
        let lb: Vec<f64> =
            (0..3).map(|j| bounds_overlapping_lb(&m, OBS, (1, 0), j, &ub).unwrap()).collect();
        assert!((lb[0] - 0.4).abs() < 1e-12);
        assert!(lb[1].abs() < 1e-12);
        assert!((lb[2] - 0.6).abs() < 1e-12);
        assert_eq!(bounds_overlapping_ub(&m, OBS, (2, 0), 2).unwrap(), 1.0);
    }

    #[test]
    fn no_assumption_examples_from_toy() {
        let m = build_toy_mdp();
        assert_eq!(bounds_no_assumption(&m, OBS, (1, 0), 0), ProbInterval::new(0.0, 1.0));
        let iv = bounds_no_assumption(&m, OBS, (2, 0), 2);
        assert!((iv.lb - 1.0).abs() < 1e-12 && iv.ub == 1.0);
        assert_eq!(bounds_no_assumption(&m, OBS, (1, 0), 1), ProbInterval::ZERO);
    }

    #[test]
    fn cs_only_examples() {
        let m = build_toy_mdp();
        let ubs: Vec<f64> = (0..3).map(|j| cs_only_ub(&m, OBS, (1, 0), j)).collect();
        assert_eq!(ubs, vec![1.0, 0.0, 1.0]);
        assert_eq!(bounds_cs_only(&m, OBS, (1, 0), 0, &ubs), ProbInterval::new(0.0, 1.0));
        let d = two_row(vec![0.0, 0.0, 1.0, 0.0], vec![0.2, 0.8, 0.0, 0.0]);
        let ubs: Vec<f64> = (0..4).map(|j| cs_only_ub(&d, OBS, (1, 0), j)).collect();
        assert_eq!(bounds_cs_only(&d, OBS, (1, 0), 2, &ubs), ProbInterval::ONE);
        let c = two_row(vec![0.1, 0.6, 0.3], vec![0.5, 0.4, 0.1]);
        let ubs: Vec<f64> = (0..3).map(|j| cs_only_ub(&c, OBS, (1, 0), j)).collect();
        assert_eq!(bounds_cs_only(&c, OBS, (1, 0), 0, &ubs), ProbInterval::ZERO);
    }

    #[test]
    fn deterministic_mdp_gives_degenerate_nominal_intervals() {
        let m = Mdp::new(
            vec![
                vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
                vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]],
            ],
            vec![vec![0.0; 2]; 3],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        let path = ObservedPath::new(vec![0, 1, 2, 1], vec![0, 0, 1]).unwrap();
        for a in AssumptionSet::ALL {
            let icf = build_interval_cfmdp(&m, &path, a).unwrap();
            for (_, s, act, next, iv) in icf.entries() {
                let p = m.prob(s, act, next);
                assert_eq!(iv, ProbInterval::point(p), "{a} ({s},{act})->{next}");
            }
        }
    }

    #[test]
    fn entries_enumerate_in_index_order() {
        let m = build_toy_mdp();
        let path = ObservedPath::new(vec![0, 1, 0], vec![0, 0]).unwrap();
        let icf = build_interval_cfmdp(&m, &path, AssumptionSet::NoAssumptions).unwrap();
        let all: Vec<_> = icf.entries().collect();
        assert_eq!(all.len(), 2 * 3 * 3);
        for (t, s, a, next, iv) in all {
            assert_eq!(icf.interval(t, s, a, next), iv);
        }
    }

    #[test]
    fn invalid_path_is_rejected() {
        let m = build_toy_mdp();
        let path = ObservedPath::new(vec![1, 1], vec![0]).unwrap();
        assert!(build_interval_cfmdp(&m, &path, AssumptionSet::CsOnly).is_err());
    }

    #[test]
    fn assumption_names_parse() {
        for a in AssumptionSet::ALL {
            assert_eq!(a.as_str().parse::<AssumptionSet>().unwrap(), a);
        }
        assert!("bogus".parse::<AssumptionSet>().is_err());
    }
}
