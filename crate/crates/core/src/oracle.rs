//! Exact verification of the closed-form bounds by linear programming.
//!
//! Two formulations are provided. [`oracle_bounds`] optimises over the joint
//! distribution (a [`Coupling`]) of the observed pair's outcome and the query
//! pair's outcome under a shared exogenous draw. [`enumerate_theta_bounds`]
//! optimises over the full distribution of canonical mechanisms, one variable
//! per deterministic map `(s, a) -> s'`, and is only tractable for tiny MDPs.

use thiserror::Error;

use crate::bounds::{cs_condition, AssumptionSet, ProbInterval};
use crate::lp::{lp_solve, Columns, LpError, LpProblem, Relation, Sense, Simplex};
use crate::mdp::{Mdp, Transition};

/// Largest number of canonical mechanisms [`enumerate_theta_bounds`] accepts.
pub const MAX_MECHANISMS: usize = 100_000;
const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{mechanisms} canonical mechanisms exceed the limit of {MAX_MECHANISMS}")]
    ScaleExceeded { mechanisms: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Joint distribution `q[i][j]` of the observed pair landing in `i` and the
/// query pair landing in `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    n: usize,
    q: Vec<f64>,
}

impl Coupling {
    pub fn new(q: Vec<Vec<f64>>) -> Self {
        let n = q.len();
        Coupling { n, q: q.concat() }
    }

    /// `q[i][j] = P(i | observed pair) * P(j | query pair)`.
    pub fn independent(m: &Mdp, obs: Transition, query: (usize, usize)) -> Self {
        let a = m.row(obs.state, obs.action);
        let b = m.row(query.0, query.1);
        Coupling::new(a.iter().map(|&x| b.iter().map(|&y| x * y).collect()).collect())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.q[i * self.n + j] = v;
    }
}

/// One linear restriction on the entry `q[s_{t+1}][next]` for a given pair.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EntryConstraint {
    next: usize,
    relation: Relation,
    rhs: f64,
}

/// The stability and monotonicity restrictions on row `s_{t+1}` of the
/// coupling between the observed pair and `pair`, scaled by `P_obs`.
fn pair_constraints(m: &Mdp, obs: Transition, pair: (usize, usize), assumptions: AssumptionSet) -> Vec<EntryConstraint> {
    let n = m.num_states();
    let k = obs.next;
    let p_obs = m.prob(obs.state, obs.action, k);
    let mut out = Vec::new();
    if assumptions.uses_stability() {
        out.extend(
            (0..n)
                .filter(|&j| cs_condition(m, obs, pair, j))
                .map(|j| EntryConstraint { next: j, relation: Relation::Eq, rhs: 0.0 }),
        );
    }
    if assumptions.uses_monotonicity() {
        let p_seen = m.prob(pair.0, pair.1, k);
        if p_seen > 0.0 {
            out.push(EntryConstraint { next: k, relation: Relation::Ge, rhs: p_seen * p_obs });
        }
        for j in (0..n).filter(|&j| j != k) {
            let p_j = m.prob(pair.0, pair.1, j);
            if m.prob(obs.state, obs.action, j) > 0.0 && p_j > 0.0 {
                out.push(EntryConstraint { next: j, relation: Relation::Le, rhs: p_j * p_obs });
            }
        }
    }
    out
}

fn coupling_problem(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    assumptions: AssumptionSet,
) -> LpProblem {
    let n = m.num_states();
    let var = |i: usize, j: usize| i * n + j;
    let mut p = LpProblem::new(n * n, Sense::Minimize);
    let row_obs = m.row(obs.state, obs.action);
    let row_query = m.row(query.0, query.1);
    for i in 0..n {
        p.add((0..n).map(|j| (var(i, j), 1.0)).collect(), Relation::Eq, row_obs[i]);
    }
    for j in 0..n {
        p.add((0..n).map(|i| (var(i, j), 1.0)).collect(), Relation::Eq, row_query[j]);
    }
    if query == (obs.state, obs.action) {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                p.add(vec![(var(i, j), 1.0)], Relation::Eq, 0.0);
            }
        }
    }
    for c in pair_constraints(m, obs, query, assumptions) {
        p.add(vec![(var(obs.next, c.next), 1.0)], c.relation, c.rhs);
    }
    p
}

fn check_observed(m: &Mdp, obs: Transition) -> Result<f64, OracleError> {
    let p = m.prob(obs.state, obs.action, obs.next);
    if p > 0.0 {
        Ok(p)
    } else {
        Err(OracleError::Precondition(format!(
            "observed transition ({}, {}) -> {} has zero probability",
            obs.state, obs.action, obs.next
        )))
    }
}

/// The coupling attaining the min or max of `q[s_{t+1}][next]`.
pub fn oracle_coupling(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    next: usize,
    assumptions: AssumptionSet,
    sense: Sense,
) -> Result<Coupling, OracleError> {
    check_observed(m, obs)?;
    let n = m.num_states();
    let mut p = coupling_problem(m, obs, query, assumptions);
    p.sense = sense;
    p.objective[obs.next * n + next] = 1.0;
    let sol = lp_solve(&p)?;
    Ok(Coupling { n, q: sol.x })
}

/// Counterfactual bounds on `P~(next | query)` by the coupling LP.
pub fn oracle_bounds(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    next: usize,
    assumptions: AssumptionSet,
) -> Result<ProbInterval, OracleError> {
    let p_obs = check_observed(m, obs)?;
    let n = m.num_states();
    let mut p = coupling_problem(m, obs, query, assumptions);
    p.objective[obs.next * n + next] = 1.0;
    let lo = lp_solve(&p)?.optimum;
    p.sense = Sense::Maximize;
    let hi = lp_solve(&p)?.optimum;
    Ok(ProbInterval::new((lo / p_obs).max(0.0), (hi / p_obs).min(1.0)))
}

/// Whether `c` satisfies the marginal and assumption constraints within `1e-9`.
pub fn check_coupling_feasible(
    c: &Coupling,
    m: &Mdp,
    obs: Transition,
    query: (usize, usize),
    assumptions: AssumptionSet,
) -> bool {
    let n = m.num_states();
    if c.size() != n || c.q.iter().any(|&v| v < -CHECK_TOL) {
        return false;
    }
    let row_obs = m.row(obs.state, obs.action);
    let row_query = m.row(query.0, query.1);
    let rows_ok = (0..n).all(|i| ((0..n).map(|j| c.get(i, j)).sum::<f64>() - row_obs[i]).abs() <= CHECK_TOL);
    let cols_ok = (0..n).all(|j| ((0..n).map(|i| c.get(i, j)).sum::<f64>() - row_query[j]).abs() <= CHECK_TOL);
    let diag_ok = query != (obs.state, obs.action)
        || (0..n).all(|i| (0..n).all(|j| i == j || c.get(i, j).abs() <= CHECK_TOL));
    let constraints_ok = pair_constraints(m, obs, query, assumptions).iter().all(|e| {
        let v = c.get(obs.next, e.next);
        match e.relation {
            Relation::Eq => (v - e.rhs).abs() <= CHECK_TOL,
            Relation::Le => v <= e.rhs + CHECK_TOL,
            Relation::Ge => v >= e.rhs - CHECK_TOL,
        }
    });
    rows_ok && cols_ok && diag_ok && constraints_ok
}

/// A distribution over canonical mechanisms.
///
/// Mechanism `u` is read as base-`|S|` digits; digit `s * |A| + a` is the
/// successor it assigns to `(s, a)`, least significant digit first.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTheta {
    num_states: usize,
    num_pairs: usize,
    theta: Vec<f64>,
}

impl CanonicalTheta {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn num_mechanisms(&self) -> usize {
        self.theta.len()
    }

    /// `f(s, a, u)`, indexed by the flat pair `s * |A| + a`.
    pub fn successor(&self, u: usize, pair: usize) -> usize {
        mechanism_digit(u, pair, self.num_states)
    }

    /// `P(s' | s, a)` implied by the mechanism distribution.
    pub fn interventional(&self, pair: usize, next: usize) -> f64 {
        self.theta
            .iter()
            .enumerate()
            .filter(|&(u, _)| self.successor(u, pair) == next)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }
}

fn mechanism_digit(u: usize, pair: usize, n: usize) -> usize {
    (u / n.pow(pair as u32)) % n
}

/// The canonical-mechanism LP for one observed transition.
///
/// Rows: one marginal equality per `(pair, s')`, then one row per
/// assumption restriction for every pair. Columns: one per mechanism, then
/// one slack per inequality row. Mechanism columns are never stored; their
/// reduced costs are swept with an odometer over the digits.
struct ThetaSystem {
    n: usize,
    pairs: usize,
    obs_pair: usize,
    obs_next: usize,
    mechanisms: usize,
    /// `(pair, next)` and row index of each assumption row.
    restricted: Vec<(usize, usize, usize)>,
    /// `(row, coefficient)` of each slack column.
    slacks: Vec<(usize, f64)>,
    rhs: Vec<f64>,
}

impl ThetaSystem {
    fn new(m: &Mdp, obs: Transition, assumptions: AssumptionSet) -> Result<Self, OracleError> {
        let n = m.num_states();
        let k = m.num_actions();
        let pairs = n * k;
        let mechanisms = (n as f64).powi(pairs as i32);
        if mechanisms > MAX_MECHANISMS as f64 {
            return Err(OracleError::ScaleExceeded { mechanisms });
        }
        let mut rhs = Vec::new();
        for s in 0..n {
            for a in 0..k {
                rhs.extend_from_slice(m.row(s, a));
            }
        }
        let mut restricted = Vec::new();
        let mut slacks = Vec::new();
        for p in 0..pairs {
            for c in pair_constraints(m, obs, (p / k, p % k), assumptions) {
                let row = rhs.len();
                rhs.push(c.rhs);
                restricted.push((p, c.next, row));
                match c.relation {
                    Relation::Le => slacks.push((row, 1.0)),
                    Relation::Ge => slacks.push((row, -1.0)),
                    Relation::Eq => {}
                }
            }
        }
        Ok(ThetaSystem {
            n,
            pairs,
            obs_pair: obs.state * k + obs.action,
            obs_next: obs.next,
            mechanisms: mechanisms as usize,
            restricted,
            slacks,
            rhs,
        })
    }
}

/// [`ThetaSystem`] paired with an objective `sign * P(f_obs = s_{t+1}, f_pair = next)`.
struct ThetaColumns<'a> {
    sys: &'a ThetaSystem,
    target: Option<(usize, usize, f64)>,
}

impl ThetaColumns<'_> {
    fn mech_cost(&self, u: usize) -> f64 {
        let sys = self.sys;
        match self.target {
            Some((pair, next, sign))
                if mechanism_digit(u, sys.obs_pair, sys.n) == sys.obs_next
                    && mechanism_digit(u, pair, sys.n) == next =>
            {
                sign
            }
            _ => 0.0,
        }
    }
}

impl Columns for ThetaColumns<'_> {
    fn num_rows(&self) -> usize {
        self.sys.rhs.len()
    }

    fn num_columns(&self) -> usize {
        self.sys.mechanisms + self.sys.slacks.len()
    }

    fn rhs(&self) -> &[f64] {
        &self.sys.rhs
    }

    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let sys = self.sys;
        if j >= sys.mechanisms {
            out.push(sys.slacks[j - sys.mechanisms]);
            return;
        }
        for p in 0..sys.pairs {
            out.push((p * sys.n + mechanism_digit(j, p, sys.n), 1.0));
        }
        if mechanism_digit(j, sys.obs_pair, sys.n) == sys.obs_next {
            for &(p, next, row) in &sys.restricted {
                if mechanism_digit(j, p, sys.n) == next {
                    out.push((row, 1.0));
                }
            }
        }
    }

    fn cost(&self, j: usize) -> f64 {
        if j >= self.sys.mechanisms {
            0.0
        } else {
            self.mech_cost(j)
        }
    }

    fn reduced_costs(&self, y: &[f64], with_cost: bool, out: &mut [f64]) {
        let sys = self.sys;
        let (n, pairs) = (sys.n, sys.pairs);
        // h[p * n + j]: summed duals of the assumption rows on (p, j)
        let mut h = vec![0.0; pairs * n];
        for &(p, next, row) in &sys.restricted {
            h[p * n + next] += y[row];
        }
        let mut digits = vec![0usize; pairs];
        let mut w: f64 = (0..pairs).map(|p| y[p * n]).sum();
        let mut hs: f64 = (0..pairs).map(|p| h[p * n]).sum();
        for (u, o) in out.iter_mut().take(sys.mechanisms).enumerate() {
            let mut d = -w;
            if digits[sys.obs_pair] == sys.obs_next {
                d -= hs;
            }
            if with_cost {
                d += self.mech_cost(u);
            }
            *o = d;
            // advance the odometer
            for p in 0..pairs {
                let old = digits[p];
                let new = if old + 1 == n { 0 } else { old + 1 };
                digits[p] = new;
                w += y[p * n + new] - y[p * n + old];
                hs += h[p * n + new] - h[p * n + old];
                if new != 0 {
                    break;
                }
            }
        }
        for (o, &(row, coef)) in out[sys.mechanisms..].iter_mut().zip(&sys.slacks) {
            *o = -y[row] * coef;
        }
    }

    fn most_negative(&self, y: &[f64], with_cost: bool) -> Option<(usize, f64)> {
        let terms = DigitTerms::new(self, y, with_cost);
        let sys = self.sys;
        let mut best: Option<(usize, f64)> = None;
        for v in 0..sys.n {
            let hit = v == sys.obs_next;
            let (mut u, mut d, mut place) = (0usize, 0.0, 1usize);
            for p in 0..sys.pairs {
                let j = if p == sys.obs_pair { v } else { terms.argmin(hit, p) };
                d += terms.get(hit, p, j);
                u += j * place;
                place *= sys.n;
            }
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((u, d));
            }
        }
        for (i, &(row, coef)) in sys.slacks.iter().enumerate() {
            let d = -y[row] * coef;
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((sys.mechanisms + i, d));
            }
        }
        best
    }

    fn lowest_negative(&self, y: &[f64], with_cost: bool, tol: f64) -> Option<Option<usize>> {
        let terms = DigitTerms::new(self, y, with_cost);
        let sys = self.sys;
        let mut digits: Vec<Option<usize>> = vec![None; sys.pairs];
        if terms.completion(&digits) < -tol {
            // Fix digits from the most significant down, taking the smallest
            // digit that still admits a negative completion.
            for p in (0..sys.pairs).rev() {
                let mut fallback = (0, f64::INFINITY);
                let mut chosen = None;
                for j in 0..sys.n {
                    digits[p] = Some(j);
                    let c = terms.completion(&digits);
                    if c < -tol {
                        chosen = Some(j);
                        break;
                    }
                    if c < fallback.1 {
                        fallback = (j, c);
                    }
                }
                digits[p] = Some(chosen.unwrap_or(fallback.0));
            }
            let u = digits.iter().rev().fold(0, |acc, d| acc * sys.n + d.expect("all digits fixed"));
            return Some(Some(u));
        }
        let slack = sys.slacks.iter().position(|&(row, coef)| -y[row] * coef < -tol);
        Some(slack.map(|i| sys.mechanisms + i))
    }
}

/// Per-digit reduced-cost terms of the mechanism columns: the reduced cost of
/// mechanism `u` is the sum over pairs `p` of `get(hit, p, u_p)`, where `hit`
/// says whether the observed pair's digit equals `s_{t+1}`.
struct DigitTerms {
    n: usize,
    pairs: usize,
    obs_pair: usize,
    obs_next: usize,
    table: Vec<f64>,
    mins: Vec<(usize, f64)>,
}

impl DigitTerms {
    fn new(cols: &ThetaColumns<'_>, y: &[f64], with_cost: bool) -> Self {
        let sys = cols.sys;
        let (n, pairs) = (sys.n, sys.pairs);
        let mut h = vec![0.0; pairs * n];
        for &(p, next, row) in &sys.restricted {
            h[p * n + next] += y[row];
        }
        let target = if with_cost { cols.target } else { None };
        let mut table = vec![0.0; 2 * pairs * n];
        for hit in [false, true] {
            for p in 0..pairs {
                for j in 0..n {
                    let mut t = -y[p * n + j];
                    if hit {
                        t -= h[p * n + j];
                    }
                    if let Some((tp, tn, sign)) = target {
                        if hit && p == tp && j == tn {
                            t += sign;
                        }
                    }
                    table[(usize::from(hit) * pairs + p) * n + j] = t;
                }
            }
        }
        let mut mins = Vec::with_capacity(2 * pairs);
        for row in table.chunks(n) {
            let (j, v) = row.iter().enumerate().fold((0, f64::INFINITY), |b, (j, &v)| if v < b.1 { (j, v) } else { b });
            mins.push((j, v));
        }
        DigitTerms { n, pairs, obs_pair: sys.obs_pair, obs_next: sys.obs_next, table, mins }
    }

    fn get(&self, hit: bool, p: usize, j: usize) -> f64 {
        self.table[(usize::from(hit) * self.pairs + p) * self.n + j]
    }

    fn argmin(&self, hit: bool, p: usize) -> usize {
        self.mins[usize::from(hit) * self.pairs + p].0
    }

    /// Smallest reduced cost over mechanisms agreeing with the fixed digits.
    fn completion(&self, digits: &[Option<usize>]) -> f64 {
        let candidates = match digits[self.obs_pair] {
            Some(v) => v..v + 1,
            None => 0..self.n,
        };
        candidates
            .map(|v| {
                let hit = v == self.obs_next;
                (0..self.pairs)
                    .map(|p| match digits[p] {
                        _ if p == self.obs_pair => self.get(hit, p, v),
                        Some(j) => self.get(hit, p, j),
                        None => self.mins[usize::from(hit) * self.pairs + p].1,
                    })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Bounds for every `(s~, a~, s~')` from the canonical-mechanism LP, indexed
/// `[s][a][s']`.
///
/// One feasibility phase is shared by all queries; each bound then
/// re-optimises from the previous basis.
pub fn enumerate_theta_all(
    m: &Mdp,
    obs: Transition,
    assumptions: AssumptionSet,
) -> Result<Vec<Vec<Vec<ProbInterval>>>, OracleError> {
    let p_obs = check_observed(m, obs)?;
    let sys = ThetaSystem::new(m, obs, assumptions)?;
    let (n, k) = (m.num_states(), m.num_actions());
    let mut simplex = Simplex::phase_one(&ThetaColumns { sys: &sys, target: None })?;
    let mut out = vec![vec![Vec::with_capacity(n); k]; n];
    for s in 0..n {
        for a in 0..k {
            for next in 0..n {
                let pair = s * k + a;
                let mut solve = |sign: f64| -> Result<f64, OracleError> {
                    let cols = ThetaColumns { sys: &sys, target: Some((pair, next, sign)) };
                    simplex.optimize(&cols)?;
                    Ok(sign * simplex.objective(&cols))
                };
                let lo = solve(1.0)?;
                let hi = solve(-1.0)?;
                out[s][a].push(ProbInterval::new((lo / p_obs).max(0.0), (hi / p_obs).min(1.0)));
            }
        }
    }
    Ok(out)
}

/// Bounds on one counterfactual probability from the canonical-mechanism LP.
pub fn enumerate_theta_bounds(
    m: &Mdp,
    obs: Transition,
    query: (usize, usize, usize),
    assumptions: AssumptionSet,
) -> Result<ProbInterval, OracleError> {
    let p_obs = check_observed(m, obs)?;
    let sys = ThetaSystem::new(m, obs, assumptions)?;
    let pair = query.0 * m.num_actions() + query.1;
    let mut simplex = Simplex::phase_one(&ThetaColumns { sys: &sys, target: None })?;
    let mut bound = |sign: f64| -> Result<f64, OracleError> {
        let cols = ThetaColumns { sys: &sys, target: Some((pair, query.2, sign)) };
        simplex.optimize(&cols)?;
        Ok(sign * simplex.objective(&cols))
    };
    let lo = bound(1.0)?;
    let hi = bound(-1.0)?;
    Ok(ProbInterval::new((lo / p_obs).max(0.0), (hi / p_obs).min(1.0)))
}

/// A feasible mechanism distribution reproducing every interventional row
/// of `m` and the assumption restrictions for `obs`.
pub fn feasible_theta(m: &Mdp, obs: Transition, assumptions: AssumptionSet) -> Result<CanonicalTheta, OracleError> {
    check_observed(m, obs)?;
    let sys = ThetaSystem::new(m, obs, assumptions)?;
    let simplex = Simplex::phase_one(&ThetaColumns { sys: &sys, target: None })?;
    let mut theta = simplex.primal(sys.mechanisms + sys.slacks.len());
    theta.truncate(sys.mechanisms);
    Ok(CanonicalTheta { num_states: sys.n, num_pairs: sys.pairs, theta })
}
