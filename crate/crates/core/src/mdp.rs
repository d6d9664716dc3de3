//! Finite tabular MDPs, observed paths, deterministic time-indexed policies
//! and exact finite-horizon evaluation.
//!
//! All objectives are undiscounted sums of `R(s, a)` over a fixed horizon,
//! with terminal value zero.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, CfRng};

/// Tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// A single failed invariant, naming the offending index.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { what: String, expected: usize, found: usize },
    RowSum { state: usize, action: usize, sum: f64 },
    Probability { state: usize, action: usize, next: usize, value: f64 },
    InitialSum { sum: f64 },
    InitialProbability { state: usize, value: f64 },
    NonFiniteReward { state: usize, action: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { what, expected, found } => {
                write!(f, "{what}: expected length {expected}, found {found}")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Violation::Probability { state, action, next, value } => write!(
                f,
                "transition (s={state}, a={action}, s'={next}) = {value} is not a probability"
            ),
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::InitialProbability { state, value } => {
                write!(f, "initial_dist[{state}] = {value} is not a probability")
            }
            Violation::NonFiniteReward { state, action } => {
                write!(f, "reward (s={state}, a={action}) is not finite")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid MDP: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("horizon {horizon} exceeds policy horizon {policy_horizon}")]
    HorizonTooLong { horizon: usize, policy_horizon: usize },
    #[error("transition row (s={state}, a={action}) has no positive entry")]
    EmptyRow { state: usize, action: usize },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A finite MDP `(S, A, P, P_I, R)`.
///
/// Transitions are stored flat in `[s][a][s']` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpJson", into = "MdpJson")]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_dist: Vec<f64>,
    state_labels: Option<Vec<String>>,
    shape_issue: Option<Violation>,
}

impl Mdp {
    /// Builds an MDP from nested tables, rejecting any invariant violation.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let m = Self::new_unchecked(transition, reward, initial_dist);
        let violations = m.validate();
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    /// Builds an MDP without checking invariants. Shape mismatches are padded
    /// with zeros; use [`Mdp::validate`] to report problems.
    pub fn new_unchecked(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
    ) -> Self {
        let num_states = transition.len();
        let num_actions = transition.first().map_or(0, Vec::len);
        let mut m = Mdp {
            num_states,
            num_actions,
            transition: vec![0.0; num_states * num_actions * num_states],
            reward: vec![0.0; num_states * num_actions],
            initial_dist: vec![0.0; num_states],
            state_labels: None,
            shape_issue: None,
        };
        let mut shape_ok = initial_dist.len() == num_states && reward.len() == num_states;
        for (s, per_action) in transition.iter().enumerate() {
            shape_ok &= per_action.len() == num_actions;
            for (a, row) in per_action.iter().enumerate().take(num_actions) {
                shape_ok &= row.len() == num_states;
                for (s2, &p) in row.iter().enumerate().take(num_states) {
                    m.transition[(s * num_actions + a) * num_states + s2] = p;
                }
            }
        }
        for (s, r) in reward.iter().enumerate().take(num_states) {
            shape_ok &= r.len() == num_actions;
            for (a, &v) in r.iter().enumerate().take(num_actions) {
                m.reward[s * num_actions + a] = v;
            }
        }
        for (s, &p) in initial_dist.iter().enumerate().take(num_states) {
            m.initial_dist[s] = p;
        }
        if !shape_ok {
            m.shape_issue = Some(Violation::Shape {
                what: "nested transition/reward/initial tables".into(),
                expected: num_states,
                found: initial_dist.len().min(reward.len()),
            });
        }
        m
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.state_labels = Some(labels);
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Next-state distribution of `(s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    /// True when every transition probability is 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        self.transition.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Lists every violated invariant; empty iff the MDP is well formed.
    ///
    /// Rewards are only required to be finite.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Some(issue) = &self.shape_issue {
            out.push(issue.clone());
            return out;
        }
        if let Some(labels) = &self.state_labels {
            if labels.len() != self.num_states {
                out.push(Violation::Shape {
                    what: "state_labels".into(),
                    expected: self.num_states,
                    found: labels.len(),
                });
            }
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                for (next, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        out.push(Violation::Probability { state: s, action: a, next, value: p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    out.push(Violation::RowSum { state: s, action: a, sum });
                }
                if !self.reward(s, a).is_finite() {
                    out.push(Violation::NonFiniteReward { state: s, action: a });
                }
            }
        }
        for (s, &p) in self.initial_dist.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                out.push(Violation::InitialProbability { state: s, value: p });
            }
        }
        let sum: f64 = self.initial_dist.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            out.push(Violation::InitialSum { sum });
        }
        out
    }

    pub fn nested_transition(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_states)
            .map(|s| (0..self.num_actions).map(|a| self.row(s, a).to_vec()).collect())
            .collect()
    }

    pub fn nested_reward(&self) -> Vec<Vec<f64>> {
        (0..self.num_states)
            .map(|s| (0..self.num_actions).map(|a| self.reward(s, a)).collect())
            .collect()
    }
}

/// Free-function form of [`Mdp::validate`].
pub fn validate_mdp(m: &Mdp) -> Vec<Violation> {
    m.validate()
}

/// On-disk MDP layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpJson {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
}

impl From<Mdp> for MdpJson {
    fn from(m: Mdp) -> Self {
        MdpJson {
            num_states: m.num_states,
            num_actions: m.num_actions,
            transition: m.nested_transition(),
            reward: m.nested_reward(),
            state_labels: m.state_labels().map(<[String]>::to_vec),
            initial_dist: m.initial_dist,
        }
    }
}

impl TryFrom<MdpJson> for Mdp {
    type Error = MdpError;

    /// Rows within `1e-9` of summing to one are renormalised; anything further
    /// off is rejected.
    fn try_from(j: MdpJson) -> Result<Self, MdpError> {
        let mut shape = Vec::new();
        if j.transition.len() != j.num_states {
            shape.push(Violation::Shape {
                what: "transition".into(),
                expected: j.num_states,
                found: j.transition.len(),
            });
        }
        if j.transition.iter().any(|per_a| per_a.len() != j.num_actions) {
            shape.push(Violation::Shape {
                what: "transition[s]".into(),
                expected: j.num_actions,
                found: j.transition.iter().map(Vec::len).find(|&l| l != j.num_actions).unwrap_or(0),
            });
        }
        if !shape.is_empty() {
            return Err(MdpError::Invalid(shape));
        }
        let mut transition = j.transition;
        for row in transition.iter_mut().flatten() {
            normalise_if_close(row);
        }
        let mut initial = j.initial_dist;
        normalise_if_close(&mut initial);
        let m = Mdp::new(transition, j.reward, initial)?;
        match j.state_labels {
            Some(labels) => {
                let m = m.with_labels(labels);
                let v = m.validate();
                if v.is_empty() {
                    Ok(m)
                } else {
                    Err(MdpError::Invalid(v))
                }
            }
            None => Ok(m),
        }
    }
}

fn normalise_if_close(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 && sum != 1.0 && (sum - 1.0).abs() <= ROW_SUM_TOL {
        row.iter_mut().for_each(|p| *p /= sum);
    }
}

/// One observed transition `s_t, a_t -> s_{t+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

/// An observed path: `T + 1` states and `T` actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PathJson", into = "PathJson")]
pub struct ObservedPath {
    states: Vec<usize>,
    actions: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathJson {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl From<ObservedPath> for PathJson {
    fn from(p: ObservedPath) -> Self {
        PathJson { states: p.states, actions: p.actions }
    }
}

impl TryFrom<PathJson> for ObservedPath {
    type Error = MdpError;
    fn try_from(p: PathJson) -> Result<Self, MdpError> {
        ObservedPath::new(p.states, p.actions)
    }
}

impl ObservedPath {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self, MdpError> {
        if states.len() != actions.len() + 1 {
            return Err(MdpError::InvalidPath(format!(
                "{} states but {} actions (need exactly one more state than actions)",
                states.len(),
                actions.len()
            )));
        }
        Ok(ObservedPath { states, actions })
    }

    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn initial_state(&self) -> usize {
        self.states[0]
    }

    pub fn transition(&self, t: usize) -> Transition {
        Transition { state: self.states[t], action: self.actions[t], next: self.states[t + 1] }
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len()).map(|t| self.transition(t))
    }

    /// Checks indices and that every step has positive nominal probability.
    pub fn check_against(&self, m: &Mdp) -> Result<(), MdpError> {
        for (t, tr) in self.transitions().enumerate() {
            if tr.state >= m.num_states() || tr.next >= m.num_states() || tr.action >= m.num_actions() {
                return Err(MdpError::InvalidPath(format!("step {t} has an out-of-range index")));
            }
            if m.prob(tr.state, tr.action, tr.next) <= 0.0 {
                return Err(MdpError::InvalidPath(format!(
                    "step {t}: transition ({}, {}) -> {} has zero probability",
                    tr.state, tr.action, tr.next
                )));
            }
        }
        Ok(())
    }
}

/// A deterministic, time-indexed policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySchedule {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl PolicySchedule {
    /// `actions[t][s]` is the action taken in state `s` at time `t`.
    pub fn new(actions: Vec<Vec<usize>>, num_actions: usize) -> Result<Self, MdpError> {
        let horizon = actions.len();
        if horizon == 0 {
            return Err(MdpError::InvalidPolicy("horizon must be at least 1".into()));
        }
        let num_states = actions[0].len();
        if actions.iter().any(|layer| layer.len() != num_states) {
            return Err(MdpError::InvalidPolicy("ragged action table".into()));
        }
        if let Some(bad) = actions.iter().flatten().find(|&&a| a >= num_actions) {
            return Err(MdpError::InvalidPolicy(format!("action {bad} out of range")));
        }
        Ok(PolicySchedule { horizon, num_states, actions: actions.concat() })
    }

    /// The same action map at every time step.
    pub fn stationary(map: &[usize], horizon: usize, num_actions: usize) -> Result<Self, MdpError> {
        Self::new(vec![map.to_vec(); horizon], num_actions)
    }

    /// A uniformly random deterministic schedule.
    pub fn random(num_states: usize, num_actions: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let actions = (0..horizon * num_states).map(|_| rng.random_range(0..num_actions)).collect();
        PolicySchedule { horizon, num_states, actions }
    }

    pub(crate) fn from_flat(horizon: usize, num_states: usize, actions: Vec<usize>) -> Self {
        debug_assert_eq!(actions.len(), horizon * num_states);
        PolicySchedule { horizon, num_states, actions }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn action(&self, t: usize, s: usize) -> usize {
        self.actions[t * self.num_states + s]
    }

    pub fn nested(&self) -> Vec<Vec<usize>> {
        self.actions.chunks(self.num_states).map(<[usize]>::to_vec).collect()
    }
}

/// `V[t][s]` for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    horizon: usize,
    num_states: usize,
    values: Vec<f64>,
}

impl ValueTable {
    /// All-zero table, which is also the terminal condition.
    pub fn zeros(horizon: usize, num_states: usize) -> Self {
        ValueTable { horizon, num_states, values: vec![0.0; (horizon + 1) * num_states] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.values[t * self.num_states + s]
    }

    #[inline]
    pub(crate) fn set(&mut self, t: usize, s: usize, v: f64) {
        self.values[t * self.num_states + s] = v;
    }

    pub fn layer(&self, t: usize) -> &[f64] {
        &self.values[t * self.num_states..(t + 1) * self.num_states]
    }

    /// Value at `t = 0` weighted by a start distribution.
    pub fn expected_initial(&self, dist: &[f64]) -> f64 {
        self.layer(0).iter().zip(dist).map(|(v, p)| v * p).sum()
    }

    pub fn nested(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.num_states).map(<[f64]>::to_vec).collect()
    }
}

/// Samples a path of exactly `horizon` transitions under `policy`.
pub fn sample_path(
    m: &Mdp,
    policy: &PolicySchedule,
    horizon: usize,
    seed: u64,
) -> Result<ObservedPath, MdpError> {
    let mut rng = rng::seeded(seed);
    sample_path_with(m, policy, horizon, &mut rng)
}

pub fn sample_path_with(
    m: &Mdp,
    policy: &PolicySchedule,
    horizon: usize,
    rng: &mut CfRng,
) -> Result<ObservedPath, MdpError> {
    if horizon > policy.horizon() {
        return Err(MdpError::HorizonTooLong { horizon, policy_horizon: policy.horizon() });
    }
    let mut s = rng::sample_categorical(rng, m.initial_dist())
        .ok_or_else(|| MdpError::InvalidPath("initial distribution has no support".into()))?;
    let mut states = vec![s];
    let mut actions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let a = policy.action(t, s);
        s = rng::sample_categorical(rng, m.row(s, a)).ok_or(MdpError::EmptyRow { state: s, action: a })?;
        actions.push(a);
        states.push(s);
    }
    Ok(ObservedPath { states, actions })
}

/// Undiscounted cumulative reward `sum_t R(s_t, a_t)`.
pub fn path_return(m: &Mdp, path: &ObservedPath) -> f64 {
    path.transitions().map(|tr| m.reward(tr.state, tr.action)).sum()
}

/// Backward induction for a fixed policy on the nominal MDP.
pub fn exact_policy_value(
    m: &Mdp,
    policy: &PolicySchedule,
    horizon: usize,
) -> Result<ValueTable, MdpError> {
    if horizon > policy.horizon() {
        return Err(MdpError::HorizonTooLong { horizon, policy_horizon: policy.horizon() });
    }
    let n = m.num_states();
    let mut v = ValueTable::zeros(horizon, n);
    for t in (0..horizon).rev() {
        for s in 0..n {
            let a = policy.action(t, s);
            let next = v.layer(t + 1);
            let ev: f64 = m.row(s, a).iter().zip(next).map(|(p, x)| p * x).sum();
            v.set(t, s, m.reward(s, a) + ev);
        }
    }
    Ok(v)
}

/// Finite-horizon optimal policy on the nominal MDP (ties to the lowest action).
pub fn optimal_policy(m: &Mdp, horizon: usize) -> (PolicySchedule, ValueTable) {
    let n = m.num_states();
    let mut v = ValueTable::zeros(horizon, n);
    let mut actions = vec![0; horizon * n];
    for t in (0..horizon).rev() {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..m.num_actions() {
                let q = m.reward(s, a)
                    + m.row(s, a).iter().zip(v.layer(t + 1)).map(|(p, x)| p * x).sum::<f64>();
                if q > best {
                    best = q;
                    actions[t * n + s] = a;
                }
            }
            v.set(t, s, best);
        }
    }
    (PolicySchedule::from_flat(horizon, n, actions), v)
}

/// A concrete counterfactual MDP: a time-indexed transition table
/// `[t][s][a][s']` sharing states, actions and rewards with a base MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct CfMdp {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
}

impl CfMdp {
    pub(crate) fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        CfMdp {
            horizon,
            num_states,
            num_actions,
            transition: vec![0.0; horizon * num_states * num_actions * num_states],
        }
    }

    /// The nominal MDP repeated over `horizon` steps.
    pub fn nominal(m: &Mdp, horizon: usize) -> Self {
        let mut cf = Self::zeros(horizon, m.num_states(), m.num_actions());
        for t in 0..horizon {
            for s in 0..m.num_states() {
                for a in 0..m.num_actions() {
                    cf.row_mut(t, s, a).copy_from_slice(m.row(s, a));
                }
            }
        }
        cf
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn offset(&self, t: usize, s: usize, a: usize) -> usize {
        ((t * self.num_states + s) * self.num_actions + a) * self.num_states
    }

    #[inline]
    pub fn row(&self, t: usize, s: usize, a: usize) -> &[f64] {
        let o = self.offset(t, s, a);
        &self.transition[o..o + self.num_states]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, t: usize, s: usize, a: usize) -> &mut [f64] {
        let o = self.offset(t, s, a);
        &mut self.transition[o..o + self.num_states]
    }

    /// Per time layer, the base MDP with this layer's transitions substituted.
    pub fn layer_mdp(&self, base: &Mdp, t: usize) -> Mdp {
        let mut m = base.clone();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let start = (s * self.num_actions + a) * self.num_states;
                m.transition[start..start + self.num_states].copy_from_slice(self.row(t, s, a));
            }
        }
        m
    }

    pub(crate) fn from_layers(layers: &[Mdp]) -> Self {
        let (n, k) = (layers[0].num_states(), layers[0].num_actions());
        let mut cf = Self::zeros(layers.len(), n, k);
        for (t, layer) in layers.iter().enumerate() {
            for s in 0..n {
                for a in 0..k {
                    cf.row_mut(t, s, a).copy_from_slice(layer.row(s, a));
                }
            }
        }
        cf
    }

    /// Exact value of `policy` from every state.
    pub fn policy_value(&self, rewards: &Mdp, policy: &PolicySchedule) -> ValueTable {
        let n = self.num_states;
        let mut v = ValueTable::zeros(self.horizon, n);
        for t in (0..self.horizon).rev() {
            for s in 0..n {
                let a = policy.action(t, s);
                let ev: f64 = self.row(t, s, a).iter().zip(v.layer(t + 1)).map(|(p, x)| p * x).sum();
                v.set(t, s, rewards.reward(s, a) + ev);
            }
        }
        v
    }

    /// Instant rewards of one rollout from `start`.
    pub fn rollout(
        &self,
        rewards: &Mdp,
        policy: &PolicySchedule,
        start: usize,
        rng: &mut CfRng,
    ) -> Vec<f64> {
        let mut s = start;
        let mut out = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            let a = policy.action(t, s);
            out.push(rewards.reward(s, a));
            s = rng::sample_categorical(rng, self.row(t, s, a)).unwrap_or(s);
        }
        out
    }
}
