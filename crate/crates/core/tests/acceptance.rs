//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use cfmdp::bounds::{bounds_disjoint, row_bounds};
use cfmdp::envs::build_toy_mdp;
use cfmdp::experiments::{run_bound_stats, run_ope, run_robustness, run_timing, EnvConfig, RunConfig};
use cfmdp::gumbel::gumbel_cf_probs;
use cfmdp::interval_vi::robust_value_iteration;
use cfmdp::mdp::{optimal_policy, sample_path};
use cfmdp::oracle::enumerate_theta_all;
use cfmdp::rng;
use cfmdp::{
    build_interval_cfmdp, oracle_bounds, robust_policy_eval, sample_cfmdp, AssumptionSet, IntervalCfMdp, Mdp,
    ObservedPath, PolicySchedule, ProbInterval, RobustMode, Transition,
};
use common::{instance, random_mdp, random_row};
use rand::seq::SliceRandom;
use rand::Rng;

const SEED: u64 = 0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn within(elapsed: Duration, limit: Duration) -> String {
    format!("{:.3}s (limit {:.3}s)", elapsed.as_secs_f64(), limit.as_secs_f64())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 / xs.len() as f64).sqrt()
}

fn toy_path() -> ObservedPath {
    ObservedPath::new(vec![0, 1], vec![0]).unwrap()
}

fn table_one() -> Outcome {
    let m = build_toy_mdp();
    let path = toy_path();
    let expected_none = [[(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)], [(0.0, 1.0), (0.0, 0.0), (0.0, 1.0)], [(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)]];
    let expected_csm = [[(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)], [(0.4, 0.4), (0.0, 0.0), (0.6, 0.6)], [(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)]];
    let start = Instant::now();
    let none = build_interval_cfmdp(&m, &path, AssumptionSet::NoAssumptions).unwrap();
    let csm = build_interval_cfmdp(&m, &path, AssumptionSet::CsAndMonotonicity).unwrap();
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    for (icf, expected) in [(&none, &expected_none), (&csm, &expected_csm)] {
        for s in 0..3 {
            for j in 0..3 {
                let iv = icf.interval(0, s, 0, j);
                worst = worst.max((iv.lb - expected[s][j].0).abs()).max((iv.ub - expected[s][j].1).abs());
            }
        }
    }
    let limit = Duration::from_millis(1);
    Outcome::new(worst <= 1e-12 && elapsed < limit, format!("max error {worst:e}, {}", within(elapsed, limit)))
}

/// The shape of random instance `i`: cycles through every size combination.
fn shape(i: u64) -> (usize, usize) {
    ([2, 3, 4][(i % 3) as usize], [1, 2][((i / 3) % 2) as usize])
}

fn oracle_equivalence() -> (Outcome, Outcome) {
    let start = Instant::now();
    let (mut lp_checks, mut theta_checks, mut lp_worst, mut theta_worst) = (0usize, 0usize, 0.0f64, 0.0f64);
    let mut nesting_checks = 0usize;
    let mut nesting_violations = 0usize;
    let mut errors = Vec::new();
    for i in 0..200 {
        let (n, k) = shape(i);
        let (m, obs) = instance(SEED, i, n, k);
        let mut rows = Vec::new();
        for a in AssumptionSet::ALL {
            let theta = match enumerate_theta_all(&m, obs, a) {
                Ok(t) => t,
                Err(e) => {
                    errors.push(format!("instance {i}: {e}"));
                    continue;
                }
            };
            let mut per_pair = Vec::new();
            for s in 0..n {
                for act in 0..k {
                    let row = row_bounds(&m, obs, (s, act), a).unwrap();
                    for j in 0..n {
                        let lp = oracle_bounds(&m, obs, (s, act), j, a).unwrap();
                        lp_worst = lp_worst.max((lp.lb - row[j].lb).abs()).max((lp.ub - row[j].ub).abs());
                        lp_checks += 1;
                        let th = theta[s][act][j];
                        theta_worst = theta_worst.max((th.lb - row[j].lb).abs()).max((th.ub - row[j].ub).abs());
                        theta_checks += 1;
                    }
                    per_pair.push(row);
                }
            }
            rows.push(per_pair);
        }
        if rows.len() == 3 {
            for ((none, cs), csm) in rows[0].iter().zip(&rows[1]).zip(&rows[2]) {
                for j in 0..n {
                    nesting_checks += 1;
                    let (wn, wc, wm) = (none[j].width(), cs[j].width(), csm[j].width());
                    if wm > wc + 1e-12 || wc > wn + 1e-12 {
                        nesting_violations += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(120);
    let oracle = Outcome::new(
        errors.is_empty() && lp_worst <= 1e-8 && theta_worst <= 1e-8 && elapsed < limit,
        format!(
            "{lp_checks} LP checks max diff {lp_worst:.1e}, {theta_checks} mechanism-LP checks max diff {theta_worst:.1e}, {} errors, {}",
            errors.len(),
            within(elapsed, limit)
        ),
    );
    let nesting = Outcome::new(
        nesting_violations == 0 && nesting_checks > 0,
        format!("{nesting_violations} violations in {nesting_checks} transitions"),
    );
    (oracle, nesting)
}

/// A random MDP whose pairs (0, 0) and `query` have disjoint supports.
fn disjoint_instance(r: &mut rng::CfRng) -> (Mdp, Transition, (usize, usize)) {
    let n = r.random_range(2..=4usize);
    let k = r.random_range(1..=2usize);
    let mut states: Vec<usize> = (0..n).collect();
    states.shuffle(r);
    let cut = r.random_range(1..n);
    let on = |subset: &[usize], r: &mut rng::CfRng| {
        let w = random_row(r, subset.len());
        let mut row = vec![0.0; n];
        for (&s, p) in subset.iter().zip(w) {
            row[s] = p;
        }
        row
    };
    let query = if k == 2 && r.random_bool(0.5) { (0, 1) } else { (1 % n, 0) };
    let mut m = random_mdp(r, n, k).nested_transition();
    m[0][0] = on(&states[..cut], r);
    m[query.0][query.1] = on(&states[cut..], r);
    let reward = vec![vec![0.0; k]; n];
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    let mdp = Mdp::new(m, reward, init).unwrap();
    let next = rng::sample_categorical(r, mdp.row(0, 0)).unwrap();
    (mdp, Transition { state: 0, action: 0, next }, query)
}

fn disjoint_closed_form() -> Outcome {
    let mut r = rng::stream(SEED, 100);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for _ in 0..100 {
        let (m, obs, q) = disjoint_instance(&mut r);
        let p_obs = m.prob(obs.state, obs.action, obs.next);
        let rows: Vec<Vec<ProbInterval>> =
            AssumptionSet::ALL.iter().map(|&a| row_bounds(&m, obs, q, a).unwrap()).collect();
        for j in 0..m.num_states() {
            let p = m.prob(q.0, q.1, j);
            let ub = (p / p_obs).min(1.0);
            let lb = ((p - (1.0 - p_obs)) / p_obs).max(0.0);
            let direct = bounds_disjoint(&m, obs, q, j).unwrap();
            for iv in rows.iter().map(|row| row[j]).chain([direct]) {
                worst = worst.max((iv.lb - lb).abs()).max((iv.ub - ub).abs());
                checks += 1;
            }
        }
    }
    Outcome::new(worst <= 1e-12, format!("{checks} comparisons, max diff {worst:.1e}"))
}

fn gumbel_baseline() -> Outcome {
    let start = Instant::now();
    let m = build_toy_mdp();
    let obs = Transition { state: 0, action: 0, next: 1 };
    let toy = gumbel_cf_probs(&m, obs, (1, 0), 100_000, SEED).unwrap();
    let toy_ok = [0.35, 0.0, 0.65].iter().zip(&toy).all(|(e, p)| (e - p).abs() <= 0.02);
    let samples = 10_000;
    let (mut checks, mut outside) = (0usize, Vec::new());
    for i in 0..50 {
        let (n, k) = shape(i);
        let (m, obs) = instance(SEED, 1000 + i, n, k);
        for s in 0..n {
            for a in 0..k {
                let probs = gumbel_cf_probs(&m, obs, (s, a), samples, rng::stream_id(&[SEED, i, s as u64, a as u64])).unwrap();
                let row = row_bounds(&m, obs, (s, a), AssumptionSet::CsOnly).unwrap();
                for (j, (p, iv)) in probs.iter().zip(&row).enumerate() {
                    checks += 1;
                    let slack = 3.0 * (p * (1.0 - p) / samples as f64).sqrt();
                    if *p < iv.lb - slack - 1e-12 || *p > iv.ub + slack + 1e-12 {
                        outside.push(format!("mdp {i} ({s},{a})->{j}: {p} vs [{:.4}, {:.4}]", iv.lb, iv.ub));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(30);
    let mut detail = format!(
        "toy ({:.4}, {:.4}, {:.4}), {} of {checks} estimates outside CS bounds + 3 sd, {}",
        toy[0],
        toy[1],
        toy[2],
        outside.len(),
        within(elapsed, limit)
    );
    if let Some(first) = outside.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    Outcome::new(toy_ok && outside.is_empty() && elapsed < limit, detail)
}

fn random_icfmdp(i: u64, horizon: usize) -> IntervalCfMdp {
    let (n, k) = shape(i);
    let mut r = rng::stream(SEED, 2000 + i);
    let m = random_mdp(&mut r, n, k);
    let policy = PolicySchedule::random(n, k, horizon, rng::stream_id(&[SEED, i, 1]));
    let path = sample_path(&m, &policy, horizon, rng::stream_id(&[SEED, i, 2])).unwrap();
    build_interval_cfmdp(&m, &path, AssumptionSet::CsAndMonotonicity).unwrap()
}

fn robust_vi() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (n, k) = shape(i);
        let horizon = 1 + (i as usize % 6);
        let mut r = rng::stream(SEED, 3000 + i);
        let m = random_mdp(&mut r, n, k);
        let point: Vec<Vec<Vec<Vec<ProbInterval>>>> = (0..horizon)
            .map(|_| (0..n).map(|s| (0..k).map(|a| m.row(s, a).iter().map(|&p| ProbInterval::point(p)).collect()).collect()).collect())
            .collect();
        let path = sample_path(&m, &PolicySchedule::random(n, k, horizon, i), horizon, i).unwrap();
        let icf = IntervalCfMdp::from_intervals(m.clone(), path, AssumptionSet::NoAssumptions, point).unwrap();
        let (_, exact) = optimal_policy(&m, horizon);
        for mode in [RobustMode::Pessimistic, RobustMode::Optimistic] {
            let sol = robust_value_iteration(&icf, mode).unwrap();
            for t in 0..=horizon {
                for s in 0..n {
                    worst = worst.max((sol.values.get(t, s) - exact.get(t, s)).abs());
                }
            }
        }
    }
    let (mut checks, mut misses) = (0usize, Vec::new());
    for i in 0..10 {
        let horizon = 2 + (i as usize % 4);
        let icf = random_icfmdp(i, horizon);
        let m = icf.base().clone();
        let s0 = icf.path().initial_state();
        let policy = robust_value_iteration(&icf, RobustMode::Pessimistic).unwrap().policy;
        let lo = robust_policy_eval(&icf, &policy, RobustMode::Pessimistic).unwrap().get(0, s0);
        let hi = robust_policy_eval(&icf, &policy, RobustMode::Optimistic).unwrap().get(0, s0);
        for c in 0..20 {
            let sampled = sample_cfmdp(&icf, rng::stream_id(&[SEED, i, 4, c])).unwrap();
            let mut r = rng::stream(rng::stream_id(&[SEED, i, 5]), c);
            let returns: Vec<f64> =
                (0..10_000).map(|_| sampled.model.rollout(&m, &policy, s0, &mut r).iter().sum()).collect();
            let (mc, se) = (mean(&returns), std_error(&returns));
            checks += 1;
            if mc < lo - 3.0 * se - 1e-9 || mc > hi + 3.0 * se + 1e-9 {
                misses.push(format!("icfmdp {i} sample {c}: {lo:.4} <= {mc:.4} <= {hi:.4} (se {se:.4})"));
            }
        }
    }
    let mut detail = format!("degenerate max diff {worst:.1e}; {} of {checks} rollout means outside bounds", misses.len());
    if let Some(first) = misses.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    Outcome::new(worst <= 1e-10 && misses.is_empty(), detail)
}

fn gridworld(p: f64, num_paths: usize) -> RunConfig {
    RunConfig { env: EnvConfig::Gridworld { p }, num_paths, seed: SEED, run_id: "acceptance".into(), ..RunConfig::default() }
}

fn ope_bracketing() -> Outcome {
    let start = Instant::now();
    let cfg = gridworld(0.4, 100);
    let r = run_ope(&cfg).unwrap();
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(300);
    let bracket = r.mean_pessimistic <= r.true_value && r.true_value <= r.mean_optimistic;
    let slack = 3.0 * r.se_gumbel;
    let gumbel = r.mean_pessimistic - slack <= r.mean_gumbel && r.mean_gumbel <= r.mean_optimistic + slack;
    Outcome::new(
        bracket && gumbel && elapsed < limit,
        format!(
            "pessimistic {:.3} <= true {:.3} <= optimistic {:.3}, Gumbel {:.3} (se {:.3}), {}",
            r.mean_pessimistic,
            r.true_value,
            r.mean_optimistic,
            r.mean_gumbel,
            r.se_gumbel,
            within(elapsed, limit)
        ),
    )
}

fn robustness_dominance() -> Outcome {
    let records = run_robustness(&gridworld(0.4, 30)).unwrap();
    let gaps: Vec<f64> = records.iter().map(|r| r.gap).collect();
    let dominated = gaps.iter().filter(|&&g| g < -1e-9).count();
    let mean_gap = mean(&gaps);
    Outcome::new(
        records.len() >= 30 && dominated == 0 && mean_gap > 0.0,
        format!(
            "{} trials, {dominated} where the Gumbel policy is better, mean gap {mean_gap:.3} (robust {:.3}, Gumbel {:.3})",
            records.len(),
            mean(&records.iter().map(|r| r.icf_policy_value).collect::<Vec<_>>()),
            mean(&records.iter().map(|r| r.gumbel_policy_value).collect::<Vec<_>>())
        ),
    )
}

fn bound_widths() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, lo, hi) in [(0.9, 0.05, 0.11), (0.4, 0.47, 0.63)] {
        let report = run_bound_stats(&gridworld(p, 20)).unwrap();
        let w: Vec<f64> = AssumptionSet::ALL.iter().map(|&a| report.mean_width(a).unwrap()).collect();
        let csm = w[2];
        pass &= (lo..=hi).contains(&csm);
        parts.push(format!(
            "p={p}: CS+M {csm:.4} in [{lo}, {hi}] (CS {:.4}, none {:.4})",
            w[1], w[0]
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn timing() -> Outcome {
    let cfg = RunConfig { gumbel_samples: 10_000, ..gridworld(0.4, 5) };
    let records = run_timing(&cfg).unwrap();
    let icf: f64 = records.iter().map(|r| r.icf_seconds).sum();
    let gumbel: f64 = records.iter().map(|r| r.gumbel_seconds).sum();
    let speedup = gumbel / icf;
    Outcome::new(
        speedup >= 10.0,
        format!("interval {:.4}s vs Gumbel {:.4}s over {} paths, speedup {speedup:.0}x", icf, gumbel, records.len()),
    )
}

fn sampling_validity() -> Outcome {
    let (mut samples, mut violations) = (0usize, 0usize);
    for i in 0..50 {
        let horizon = 1 + (i as usize % 5);
        let icf = random_icfmdp(100 + i, horizon);
        for c in 0..20 {
            let sampled = sample_cfmdp(&icf, rng::stream_id(&[SEED, i, 6, c])).unwrap();
            samples += 1;
            for (t, s, a, j, iv) in icf.entries() {
                if !iv.contains(sampled.model.row(t, s, a)[j], 0.0) {
                    violations += 1;
                }
            }
            for t in 0..icf.horizon() {
                for s in 0..icf.num_states() {
                    for a in 0..icf.num_actions() {
                        if (sampled.model.row(t, s, a).iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    Outcome::new(samples >= 1000 && violations == 0, format!("{samples} sampled models, {violations} violations"))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("toy intervals exact", table_one()));
    let (oracle, nesting) = oracle_equivalence();
    results.push(("closed form equals LP", oracle));
    results.push(("disjoint support closed form", disjoint_closed_form()));
    results.push(("assumption nesting", nesting));
    results.push(("Gumbel-max baseline", gumbel_baseline()));
    results.push(("robust value iteration", robust_vi()));
    results.push(("off-policy bracketing", ope_bracketing()));
    results.push(("robust policy dominance", robustness_dominance()));
    results.push(("GridWorld bound widths", bound_widths()));
    results.push(("generation speed", timing()));
    results.push(("sampled model validity", sampling_validity()));

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
