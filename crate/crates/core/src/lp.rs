//! A small exact linear-programming solver.
//!
//! Two-phase revised simplex with an explicit dense basis inverse. Columns
//! come from a [`Columns`] source, so problems whose constraint matrix is
//! implicit (for example one column per canonical mechanism) can be priced
//! without materialising the matrix.
//!
//! Entering variables are chosen by most negative reduced cost; after a run
//! of degenerate pivots the solver switches to Bland's rule (lowest index
//! enters, lowest index leaves on ties) until it makes progress again, which
//! rules out cycling.

use thiserror::Error;

/// Minimum magnitude of a pivot element.
pub const PIVOT_TOL: f64 = 1e-11;
/// Reduced-cost optimality tolerance.
const OPT_TOL: f64 = 1e-10;
/// Residual phase-one objective above which the problem is infeasible.
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 30;
const REFACTOR_EVERY: usize = 64;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("iteration limit reached")]
    IterationLimit,
    #[error("basis became numerically singular")]
    Singular,
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` terms.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min/max c·x` subject to linear constraints and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
    /// Finite lower bound per variable (default 0).
    pub lower: Vec<f64>,
    /// Optional upper bound per variable.
    pub upper: Vec<Option<f64>>,
}

impl LpProblem {
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        LpProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            sense,
            constraints: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![None; num_vars],
        }
    }

    pub fn with_objective(mut self, objective: Vec<f64>) -> Self {
        self.objective = objective;
        self
    }

    pub fn add(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: Option<f64>) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        if self.objective.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension("objective/bounds length differs from num_vars".into()));
        }
        if let Some(c) = self.constraints.iter().find(|c| c.terms.iter().any(|&(v, _)| v >= n)) {
            return Err(LpError::Dimension(format!("constraint references variable beyond {n}: {c:?}")));
        }
        if self.lower.iter().any(|l| !l.is_finite()) {
            return Err(LpError::Dimension("lower bounds must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub optimum: f64,
    pub x: Vec<f64>,
}

/// Solves `p` to optimality.
pub fn lp_solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    p.check()?;
    let cols = ExplicitColumns::standard_form(p);
    let mut simplex = Simplex::phase_one(&cols)?;
    simplex.optimize(&cols)?;
    let xs = simplex.primal(cols.num_columns());
    let x: Vec<f64> = (0..p.num_vars).map(|i| p.lower[i] + xs[i]).collect();
    let optimum = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { optimum, x })
}

/// A standard-form matrix `A x = b, x >= 0` with a cost per column.
pub(crate) trait Columns {
    fn num_rows(&self) -> usize;
    fn num_columns(&self) -> usize;
    fn rhs(&self) -> &[f64];
    /// Writes the non-zeros of column `j` into `out` (cleared first).
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>);
    fn cost(&self, j: usize) -> f64;

    /// `out[j] = cost_j * [with_cost] - y·A_j` for every column.
    fn reduced_costs(&self, y: &[f64], with_cost: bool, out: &mut [f64]) {
        let mut buf = Vec::new();
        for (j, o) in out.iter_mut().enumerate() {
            self.column(j, &mut buf);
            let dot: f64 = buf.iter().map(|&(r, v)| y[r] * v).sum();
            *o = if with_cost { self.cost(j) } else { 0.0 } - dot;
        }
    }

    /// A column with the most negative reduced cost and that cost, when the
    /// structure allows finding it without a full sweep.
    fn most_negative(&self, _y: &[f64], _with_cost: bool) -> Option<(usize, f64)> {
        None
    }

    /// The lowest-index column with reduced cost below `-tol`, when the
    /// structure allows finding it without a full sweep. `Some(None)` means
    /// no such column exists.
    fn lowest_negative(&self, _y: &[f64], _with_cost: bool, _tol: f64) -> Option<Option<usize>> {
        None
    }
}

/// Column-major sparse copy of an [`LpProblem`] in standard form.
struct ExplicitColumns {
    rows: usize,
    b: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
}

impl ExplicitColumns {
    fn standard_form(p: &LpProblem) -> Self {
        let sign = if p.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.num_vars];
        let mut cost: Vec<f64> = p.objective.iter().map(|c| sign * c).collect();
        let mut b = Vec::new();
        let mut row = 0;
        let mut push_row = |terms: &[(usize, f64)], rel: Relation, rhs: f64, cols: &mut Vec<Vec<(usize, f64)>>, cost: &mut Vec<f64>| {
            let shift: f64 = terms.iter().map(|&(v, a)| a * p.lower[v]).sum();
            for &(v, a) in terms {
                if a != 0.0 {
                    cols[v].push((row, a));
                }
            }
            match rel {
                Relation::Le => {
                    cols.push(vec![(row, 1.0)]);
                    cost.push(0.0);
                }
                Relation::Ge => {
                    cols.push(vec![(row, -1.0)]);
                    cost.push(0.0);
                }
                Relation::Eq => {}
            }
            b.push(rhs - shift);
            row += 1;
        };
        for c in &p.constraints {
            push_row(&c.terms, c.relation, c.rhs, &mut cols, &mut cost);
        }
        for (v, up) in p.upper.iter().enumerate() {
            if let Some(u) = up {
                push_row(&[(v, 1.0)], Relation::Le, *u, &mut cols, &mut cost);
            }
        }
        ExplicitColumns { rows: row, b, cols, cost }
    }
}

impl Columns for ExplicitColumns {
    fn num_rows(&self) -> usize {
        self.rows
    }
    fn num_columns(&self) -> usize {
        self.cols.len()
    }
    fn rhs(&self) -> &[f64] {
        &self.b
    }
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.extend_from_slice(&self.cols[j]);
    }
    fn cost(&self, j: usize) -> f64 {
        self.cost[j]
    }
}

/// Basis state of the revised simplex.
///
/// Variables `0..n` are structural columns of the source; `n + r` is the
/// artificial variable of row `r`. Rows are sign-flipped so the right-hand
/// side is non-negative. Once phase one finishes, the same basis can be
/// re-optimised for any number of cost vectors over the same matrix.
pub(crate) struct Simplex {
    m: usize,
    n: usize,
    sign: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
    buf: Vec<(usize, f64)>,
}

impl Simplex {
    /// Runs phase one and removes artificials from the basis where possible.
    pub(crate) fn phase_one<C: Columns>(cols: &C) -> Result<Self, LpError> {
        let m = cols.num_rows();
        let n = cols.num_columns();
        let rhs = cols.rhs();
        let sign: Vec<f64> = rhs.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = rhs.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut is_basic = vec![false; n + m];
        is_basic[n..].iter_mut().for_each(|x| *x = true);
        let mut s = Simplex {
            m,
            n,
            sign,
            xb: b.clone(),
            b,
            basis: (n..n + m).collect(),
            is_basic,
            binv,
            since_refactor: 0,
            buf: Vec::new(),
        };
        s.run(cols, true)?;
        let residual: f64 = (0..m).filter(|&r| s.basis[r] >= n).map(|r| s.xb[r]).sum();
        let scale = 1.0 + s.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if residual > FEAS_TOL * scale {
            return Err(LpError::Infeasible);
        }
        s.drive_out_artificials(cols)?;
        Ok(s)
    }

    /// Phase two for the cost vector carried by `cols`.
    pub(crate) fn optimize<C: Columns>(&mut self, cols: &C) -> Result<(), LpError> {
        self.run(cols, false)
    }

    /// Current values of the structural variables.
    pub(crate) fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (r, &v) in self.basis.iter().enumerate() {
            if v < n {
                x[v] = self.xb[r].max(0.0);
            }
        }
        x
    }

    pub(crate) fn objective<C: Columns>(&self, cols: &C) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(&v, _)| v < self.n)
            .map(|(&v, &x)| cols.cost(v) * x)
            .sum()
    }

    fn basic_cost<C: Columns>(&self, cols: &C, phase_one: bool, var: usize) -> f64 {
        match (var >= self.n, phase_one) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, true) => 0.0,
            (false, false) => cols.cost(var),
        }
    }

    /// Simplex multipliers, pre-multiplied by the row signs.
    fn duals<C: Columns>(&self, cols: &C, phase_one: bool) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &var) in self.basis.iter().enumerate() {
            let c = self.basic_cost(cols, phase_one, var);
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yr, &bv) in y.iter_mut().zip(row) {
                    *yr += c * bv;
                }
            }
        }
        for (yr, s) in y.iter_mut().zip(&self.sign) {
            *yr *= s;
        }
        y
    }

    /// `B^-1 a_j` for structural column `j`.
    fn ftran<C: Columns>(&mut self, cols: &C, j: usize) -> Vec<f64> {
        let m = self.m;
        cols.column(j, &mut self.buf);
        let mut alpha = vec![0.0; m];
        for &(r, v) in &self.buf {
            let v = v * self.sign[r];
            for (i, a) in alpha.iter_mut().enumerate() {
                *a += self.binv[i * m + r] * v;
            }
        }
        alpha
    }

    fn pivot(&mut self, row: usize, var: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[row];
        let step = self.xb[row] / piv;
        for (i, x) in self.xb.iter_mut().enumerate() {
            if i != row {
                *x -= step * alpha[i];
                if x.abs() < 1e-13 {
                    *x = 0.0;
                }
            }
        }
        self.xb[row] = step;
        let (before, rest) = self.binv.split_at_mut(row * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        pivot_row.iter_mut().for_each(|v| *v /= piv);
        for (i, chunk) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let i = if i < row { i } else { i + 1 };
            let f = alpha[i];
            if f != 0.0 {
                for (c, p) in chunk.iter_mut().zip(pivot_row.iter()) {
                    *c -= f * p;
                }
            }
        }
        self.is_basic[self.basis[row]] = false;
        self.is_basic[var] = true;
        self.basis[row] = var;
        self.since_refactor += 1;
    }

    /// Recomputes `B^-1` and the basic solution from scratch.
    fn refactor<C: Columns>(&mut self, cols: &C) -> Result<(), LpError> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (k, &var) in self.basis.iter().enumerate() {
            if var >= self.n {
                bmat[(var - self.n) * m + k] = 1.0;
            } else {
                cols.column(var, &mut self.buf);
                for &(r, v) in &self.buf {
                    bmat[r * m + k] = v * self.sign[r];
                }
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&a, &b| bmat[a * m + c].abs().total_cmp(&bmat[b * m + c].abs()))
                .unwrap();
            if bmat[p * m + c].abs() < 1e-13 {
                return Err(LpError::Singular);
            }
            if p != c {
                for k in 0..m {
                    bmat.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = bmat[c * m + c];
            for k in 0..m {
                bmat[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = bmat[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        // inv now maps B (columns ordered by basis position) back to identity.
        self.binv = inv;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&self.b).map(|(a, b)| a * b).sum();
            self.xb[i] = if v.abs() < 1e-13 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn run<C: Columns>(&mut self, cols: &C, phase_one: bool) -> Result<(), LpError> {
        let n = self.n;
        let mut d = vec![0.0; n];
        let mut degenerate = 0usize;
        for _ in 0..MAX_ITERATIONS {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor(cols)?;
            }
            let y = self.duals(cols, phase_one);
            let bland = degenerate >= DEGENERATE_STREAK;
            let shortcut = if bland {
                cols.lowest_negative(&y, !phase_one, OPT_TOL).map(|j| j.filter(|&j| !self.is_basic[j]))
            } else {
                cols.most_negative(&y, !phase_one).map(|(j, dj)| (dj < -OPT_TOL && !self.is_basic[j]).then_some(j))
            };
            let entering = match shortcut {
                Some(j) => j,
                None => {
                    cols.reduced_costs(&y, !phase_one, &mut d);
                    let mut entering = None;
                    let mut best = -OPT_TOL;
                    for (j, &dj) in d.iter().enumerate() {
                        if self.is_basic[j] || dj >= -OPT_TOL {
                            continue;
                        }
                        if bland {
                            entering = Some(j);
                            break;
                        }
                        if dj < best {
                            best = dj;
                            entering = Some(j);
                        }
                    }
                    entering
                }
            };
            let Some(j) = entering else { return Ok(()) };
            let alpha = self.ftran(cols, j);
            let mut leave: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                let var = self.basis[i];
                // Artificials stuck in the basis during phase two must stay at zero.
                let ratio = if !phase_one && var >= n && a.abs() > PIVOT_TOL {
                    0.0
                } else if a > PIVOT_TOL {
                    self.xb[i].max(0.0) / a
                } else {
                    continue;
                };
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, r)) => {
                        if ratio < r - 1e-12 || (ratio <= r + 1e-12 && var < self.basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, r))
                        }
                    }
                };
            }
            let Some((row, ratio)) = leave else { return Err(LpError::Unbounded) };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, j, &alpha);
            if self.xb[row] < 0.0 {
                self.xb[row] = 0.0;
            }
        }
        Err(LpError::IterationLimit)
    }

    fn drive_out_artificials<C: Columns>(&mut self, cols: &C) -> Result<(), LpError> {
        let (m, n) = (self.m, self.n);
        let mut d = vec![0.0; n];
        for r in 0..m {
            if self.basis[r] < n {
                continue;
            }
            let y: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().zip(&self.sign).map(|(a, s)| a * s).collect();
            cols.reduced_costs(&y, false, &mut d);
            let candidate = (0..n)
                .filter(|&j| !self.is_basic[j] && d[j].abs() > 1e-9)
                .max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
            if let Some(j) = candidate {
                let alpha = self.ftran(cols, j);
                self.pivot(r, j, &alpha);
                self.xb[r] = self.xb[r].max(0.0);
            }
            // Otherwise the row is redundant and its artificial stays at zero.
        }
        self.refactor(cols)
    }
}
