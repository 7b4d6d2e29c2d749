//! PGM and APGM drivers producing iteration traces.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::dgf::Dgf;
use crate::error::{Error, Result};
use crate::objective::{Problem, Regularizer};
use crate::prox::{MirrorState, Prox, StepOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Pgm,
    Apgm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pgm => "pgm",
            Method::Apgm => "apgm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(Method::Pgm),
            "apgm" => Ok(Method::Apgm),
            _ => Err(Error::UnknownToken {
                token: s.into(),
                expected: "pgm, apgm".into(),
            }),
        }
    }
}

/// Iterations at which a trace row is recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordSchedule {
    /// `0`, the last iteration, and `round(10^(i / per_decade))`.
    Geometric { per_decade: usize },
    /// Every `n`-th iteration plus the last one.
    Every(usize),
    /// Exactly these iterations (those beyond the budget are dropped).
    Explicit(Vec<usize>),
}

impl Default for RecordSchedule {
    fn default() -> Self {
        RecordSchedule::Geometric { per_decade: 100 }
    }
}

impl RecordSchedule {
    /// Sorted, deduplicated iteration indices in `0..=iters`.
    pub fn indices(&self, iters: usize) -> Vec<usize> {
        let mut ks = match self {
            RecordSchedule::Geometric { per_decade } => {
                let per = (*per_decade).max(1) as f64;
                let top = (iters.max(1) as f64).log10();
                let mut ks = vec![0, iters];
                let mut i = 0usize;
                loop {
                    let e = i as f64 / per;
                    if e > top + 1e-12 {
                        break;
                    }
                    ks.push(10f64.powf(e).round() as usize);
                    i += 1;
                }
                ks
            }
            RecordSchedule::Every(n) => {
                let mut ks: Vec<usize> = (0..=iters).step_by((*n).max(1)).collect();
                ks.push(iters);
                ks
            }
            RecordSchedule::Explicit(v) => v.clone(),
        };
        ks.retain(|&k| k <= iters);
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub iters: usize,
    /// Step size; derived from the problem constants when absent.
    pub step: Option<f64>,
    /// A priori L1 bound used by the step rule; derived when absent.
    pub k_bound: Option<f64>,
    pub record: RecordSchedule,
    pub step_opts: StepOptions,
    /// Record wall-clock time in the `time_s` column (off for reproducible output).
    pub timing: bool,
    /// Iterations at which the full density `f_k` is kept.
    pub snapshots: Vec<usize>,
}

impl SolverConfig {
    pub fn new(method: Method, iters: usize) -> Self {
        Self {
            method,
            iters,
            step: None,
            k_bound: None,
            record: RecordSchedule::default(),
            step_opts: StepOptions::default(),
            timing: false,
            snapshots: Vec::new(),
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_k_bound(mut self, k: f64) -> Self {
        self.k_bound = Some(k);
        self
    }

    pub fn with_record(mut self, record: RecordSchedule) -> Self {
        self.record = record;
        self
    }

    pub fn with_snapshots(mut self, ks: Vec<usize>) -> Self {
        self.snapshots = ks;
        self
    }
}

/// A priori bound on `||f_k||_1` along PGM iterates from `f0`.
///
/// Constraints give it directly; a positive `lambda` bounds the norm through
/// descent (`lambda ||f_k|| <= F(f0)` since `G >= 0`); for nonnegative
/// densities the mass coercivity of the smooth term gives
/// `||f_k|| <= target + sqrt(F(f0) / scale)`.
pub fn default_k_bound(problem: &Problem, f0: &[f64]) -> Result<f64> {
    let norm0 = problem.grid.l1_norm(f0);
    let bound = match problem.reg {
        Regularizer::Simplex => 1.0,
        Regularizer::TvBall { radius } => radius,
        Regularizer::NonnegPlusTv { lambda } | Regularizer::Tv { lambda } if lambda > 0.0 => {
            problem.eval_f(f0)? / lambda
        }
        Regularizer::NonnegPlusTv { .. } => match problem.coercivity {
            Some(c) => c.target + (problem.eval_f(f0)? / c.scale).sqrt(),
            None => return Err(no_bound(problem)),
        },
        Regularizer::Tv { .. } => return Err(no_bound(problem)),
    };
    Ok(bound.max(norm0))
}

fn no_bound(problem: &Problem) -> Error {
    Error::invalid(format!(
        "{} with {}: no a priori L1 bound, set it explicitly",
        problem.name, problem.reg
    ))
}

/// Step from the guarantee rule; problems with a linear smooth term
/// (vanishing curvature) default to a unit step.
pub fn default_step(problem: &Problem, dgf: &Dgf, k_bound: f64) -> Result<f64> {
    let lip = problem.smooth.lip_outer();
    if lip == 0.0 {
        return Ok(1.0);
    }
    dgf.step_size(k_bound, problem.smooth.phi_sup(), lip)
}

/// `gamma_{k+1} = (sqrt(gamma^4 + 4 gamma^2) - gamma^2) / 2`, evaluated as
/// `2 gamma / (sqrt(gamma^2 + 4) + gamma)` to avoid cancellation.
pub fn gamma_next(gamma: f64) -> f64 {
    2.0 * gamma / ((gamma * gamma + 4.0).sqrt() + gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub f_value: f64,
    /// `F - inf F` when the optimal value is known.
    pub gap: Option<f64>,
    pub l1: f64,
    pub linf_mirror: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// Ordered `key=value` metadata.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
    pub warnings: Vec<String>,
    /// Reason for an early stop, if any.
    pub aborted: Option<String>,
    /// Last primal iterate.
    pub final_density: Vec<f64>,
    /// Requested `(k, f_k)` snapshots.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl Trace {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

struct Recorder<'a> {
    problem: &'a Problem,
    schedule: Vec<usize>,
    snapshots: Vec<usize>,
    next: usize,
    start: Instant,
    timing: bool,
    trace: Trace,
}

impl<'a> Recorder<'a> {
    fn wants(&self, k: usize) -> bool {
        self.schedule.get(self.next) == Some(&k)
    }

    /// Snapshot and trace row as requested for iteration `k`; false stops the run.
    fn observe(&mut self, k: usize, f: &[f64], mirror: &MirrorState) -> Result<bool> {
        if self.snapshots.binary_search(&k).is_ok() {
            self.trace.snapshots.push((k, f.to_vec()));
        }
        if self.wants(k) {
            return self.record(k, f, mirror);
        }
        Ok(true)
    }

    /// Records `f` at iteration `k`; returns false when the run must stop.
    fn record(&mut self, k: usize, f: &[f64], mirror: &MirrorState) -> Result<bool> {
        let f_value = self.problem.eval_f(f)?;
        self.next += 1;
        let row = TraceRow {
            k,
            f_value,
            gap: self.problem.inf_value.map(|v| f_value - v),
            l1: self.problem.grid.l1_norm(f),
            linf_mirror: mirror.linf(),
            time_s: if self.timing { self.start.elapsed().as_secs_f64() } else { 0.0 },
        };
        self.trace.rows.push(row);
        if !f_value.is_finite() {
            self.trace.aborted = Some(format!("non-finite objective {f_value} at iteration {k}"));
            return Ok(false);
        }
        Ok(true)
    }
}

fn prepare<'a>(
    problem: &'a Problem,
    dgf: &Dgf,
    f0: &[f64],
    config: &SolverConfig,
) -> Result<(Recorder<'a>, f64, f64)> {
    problem.grid.check_len("initial density", f0.len())?;
    if config.iters == 0 {
        return Err(Error::invalid("iteration count must be at least 1"));
    }
    let violation = problem.reg.violation(&problem.grid, f0);
    if violation > crate::objective::FEASIBILITY_TOL {
        return Err(Error::invalid(format!("initial density is infeasible (violation {violation})")));
    }
    let k_bound = match config.k_bound {
        Some(k) => k,
        None => default_k_bound(problem, f0)?,
    };
    let step = match config.step {
        Some(s) => s,
        None => default_step(problem, dgf, k_bound)?,
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive and finite (got {step})")));
    }
    let mut trace = Trace::default();
    trace.set_meta("problem", &problem.name);
    trace.set_meta("reg", problem.reg);
    trace.set_meta("dgf", dgf);
    trace.set_meta("method", config.method);
    trace.set_meta("setting", problem.setting);
    trace.set_meta("q", problem.setting.q());
    trace.set_meta("dim", problem.dim());
    trace.set_meta("grid_m", problem.grid.len());
    trace.set_meta("iters", config.iters);
    trace.set_meta("step", step);
    trace.set_meta("k_bound", k_bound);
    if let Some(v) = problem.inf_value {
        trace.set_meta("inf", v);
    }
    let mut snapshots = config.snapshots.clone();
    snapshots.sort_unstable();
    snapshots.dedup();
    let recorder = Recorder {
        problem,
        schedule: config.record.indices(config.iters),
        snapshots,
        next: 0,
        start: Instant::now(),
        timing: config.timing,
        trace,
    };
    Ok((recorder, step, k_bound))
}

fn finish(mut rec: Recorder<'_>, f: Vec<f64>) -> Trace {
    if rec.timing {
        rec.trace.set_meta("elapsed_s", rec.start.elapsed().as_secs_f64());
    }
    rec.trace.final_density = f;
    rec.trace
}

fn check_finite(u: &[f64], k: usize) -> Result<()> {
    if let Some(bad) = u.iter().find(|x| x.is_nan() || **x == f64::INFINITY) {
        return Err(Error::NonFinite {
            iteration: k,
            detail: format!("mirror coordinate {bad}"),
        });
    }
    Ok(())
}

/// Runs PGM or APGM according to `config.method`.
pub fn run(problem: &Problem, dgf: &Dgf, f0: &[f64], config: &SolverConfig) -> Result<Trace> {
    match config.method {
        Method::Pgm => run_pgm(problem, dgf, f0, config),
        Method::Apgm => run_apgm(problem, dgf, f0, config),
    }
}

/// Bregman proximal gradient method:
/// `f_{k+1} = prox(eta'(f_k) - s G'[f_k])`.
pub fn run_pgm(problem: &Problem, dgf: &Dgf, f0: &[f64], config: &SolverConfig) -> Result<Trace> {
    let (mut rec, step, _) = prepare(problem, dgf, f0, config)?;
    let weights = problem.grid.weights();
    let mut prox = Prox::new(*dgf, problem.reg, config.step_opts);
    let mut ws = problem.smooth.workspace();
    let mut state = MirrorState::from_primal(dgf, f0)?;
    let mut next = vec![0.0; f0.len()];
    let mut comp = vec![0.0; f0.len()];
    let mut grad = vec![0.0; f0.len()];
    let mut f = f0.to_vec();

    if !rec.observe(0, &f, &state)? {
        return Ok(finish(rec, f));
    }
    for k in 1..=config.iters {
        problem.smooth.grad_potential_into(weights, &f, &mut ws, &mut grad);
        prox.step_compensated(weights, &state.u, &mut comp, &grad, step, &mut next)?;
        std::mem::swap(&mut state.u, &mut next);
        if let Err(e) = check_finite(&state.u, k) {
            rec.trace.aborted = Some(e.to_string());
            break;
        }
        for (fj, &uj) in f.iter_mut().zip(&state.u) {
            *fj = dgf.eta_prime_inv(uj);
        }
        if !rec.observe(k, &f, &state)? {
            break;
        }
    }
    Ok(finish(rec, f))
}

/// Accelerated Bregman proximal gradient method:
/// `g_k = (1 - gamma_k) f_k + gamma_k h_k`,
/// `h_{k+1} = prox(eta'(h_k) - (s / gamma_k) G'[g_k])`,
/// `f_{k+1} = (1 - gamma_k) f_k + gamma_k h_{k+1}`.
pub fn run_apgm(problem: &Problem, dgf: &Dgf, f0: &[f64], config: &SolverConfig) -> Result<Trace> {
    let (mut rec, step, k_bound) = prepare(problem, dgf, f0, config)?;
    let grid = &problem.grid;
    let weights = grid.weights();
    let mut prox = Prox::new(*dgf, problem.reg, config.step_opts);
    let mut ws = problem.smooth.workspace();
    let mut h_state = MirrorState::from_primal(dgf, f0)?;
    let mut h = f0.to_vec();
    let mut f = f0.to_vec();
    let mut g = vec![0.0; f0.len()];
    let mut next = vec![0.0; f0.len()];
    let mut comp = vec![0.0; f0.len()];
    let mut grad = vec![0.0; f0.len()];
    let mut gamma = 1.0;
    let mut warned = false;

    if !rec.observe(0, &f, &h_state)? {
        return Ok(finish(rec, f));
    }
    for k in 1..=config.iters {
        for ((gj, fj), hj) in g.iter_mut().zip(&f).zip(&h) {
            *gj = (1.0 - gamma) * fj + gamma * hj;
        }
        problem.smooth.grad_potential_into(weights, &g, &mut ws, &mut grad);
        prox.step_compensated(weights, &h_state.u, &mut comp, &grad, step / gamma, &mut next)?;
        std::mem::swap(&mut h_state.u, &mut next);
        if let Err(e) = check_finite(&h_state.u, k) {
            rec.trace.aborted = Some(e.to_string());
            break;
        }
        for ((hj, &uj), fj) in h.iter_mut().zip(&h_state.u).zip(f.iter_mut()) {
            *hj = dgf.eta_prime_inv(uj);
            *fj = (1.0 - gamma) * *fj + gamma * *hj;
        }
        gamma = gamma_next(gamma);
        if !warned {
            let norm = grid.l1_norm(&h);
            if norm > k_bound * (1.0 + 1e-9) {
                warned = true;
                rec.trace.warnings.push(format!(
                    "iteration {k}: ||h_k||_1 = {norm:.6e} exceeds the bound K = {k_bound:.6e}; the accelerated guarantee no longer applies"
                ));
            }
        }
        if !rec.observe(k, &f, &h_state)? {
            break;
        }
    }
    Ok(finish(rec, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgf::bregman_div;
    use crate::grid::Grid;
    use crate::objective::{deconv_problem, dirac_density, lb_problem, relu_problem, Setting};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn every(config: SolverConfig) -> SolverConfig {
        config.with_record(RecordSchedule::Every(1))
    }

    #[test]
    fn gamma_sequence() {
        assert_abs_diff_eq!(gamma_next(1.0), (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-15);
        // Hand evaluation: g1^2 = 0.381966, sqrt(g1^4 + 4 g1^2) = 1.293739.
        assert_abs_diff_eq!(gamma_next(gamma_next(1.0)), 0.455887, epsilon = 1e-6);
        assert_abs_diff_eq!(gamma_next(0.5), 0.5 * ((0.0625f64 + 1.0).sqrt() - 0.25), epsilon = 1e-15);
        let mut g = 1.0;
        for k in 0..100_000usize {
            assert!(g > 0.0 && g <= 1.0 && g <= 2.0 / (k as f64 + 2.0));
            g = gamma_next(g);
        }
    }

    proptest! {
        #[test]
        fn gamma_monotone(g in 1e-12f64..=1.0) {
            let n = gamma_next(g);
            prop_assert!(n > 0.0 && n < g);
            // Agrees with the unsimplified expression.
            let direct = 0.5 * ((g.powi(4) + 4.0 * g * g).sqrt() - g * g);
            prop_assert!((n - direct).abs() <= 1e-12 * g.max(1e-300).max(direct));
        }
    }

    #[test]
    fn geometric_schedule() {
        let ks = RecordSchedule::default().indices(100_000);
        assert_eq!(ks[0], 0);
        assert_eq!(*ks.last().unwrap(), 100_000);
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        let decade = ks.iter().filter(|&&k| (1000..10_000).contains(&k)).count();
        assert!((90..=100).contains(&decade), "{decade}");
        assert_eq!(RecordSchedule::Every(10).indices(25), vec![0, 10, 20, 25]);
        assert_eq!(RecordSchedule::Explicit(vec![5, 1, 99]).indices(10), vec![1, 5]);
    }

    #[test]
    fn entropy_iterates_are_exponential_tilts() {
        let grid = Grid::torus(1, 200).unwrap();
        let p = lb_problem(&grid, Setting::I).unwrap();
        let f0 = vec![1.0; 200];
        let trace = run_pgm(&p, &Dgf::Entropy, &f0, &SolverConfig::new(Method::Pgm, 100).with_step(1.0)).unwrap();
        let phi = grid.distances_from(&[0.0]);
        let raw: Vec<f64> = phi.iter().map(|x| (-100.0 * x).exp()).collect();
        let z = grid.integrate(&raw);
        for (a, b) in trace.final_density.iter().zip(&raw) {
            assert!((a - b / z).abs() <= 1e-10 * (b / z), "{a} vs {}", b / z);
        }
    }

    #[test]
    fn tiny_step_barely_moves() {
        let grid = Grid::torus(1, 100).unwrap();
        let p = deconv_problem(&grid, Regularizer::Tv { lambda: 0.05 }).unwrap();
        let f0 = vec![1.0; 100];
        for dgf in [Dgf::power(2.0).unwrap(), Dgf::hyperbolic(1e-3).unwrap()] {
            let t = run_pgm(&p, &dgf, &f0, &every(SolverConfig::new(Method::Pgm, 1).with_step(1e-12))).unwrap();
            assert!((t.rows[1].f_value - t.rows[0].f_value).abs() <= 1e-8);
        }
    }

    #[test]
    fn pgm_is_a_descent_method() {
        let grid = Grid::torus(1, 300).unwrap();
        let f0 = vec![1.0; 300];
        let cases = [
            (deconv_problem(&grid, Regularizer::Tv { lambda: 0.05 }).unwrap(), Dgf::power(2.0).unwrap()),
            (deconv_problem(&grid, Regularizer::Tv { lambda: 0.05 }).unwrap(), Dgf::hyperbolic(1e-3).unwrap()),
            (deconv_problem(&grid, Regularizer::NonnegPlusTv { lambda: 0.0 }).unwrap(), Dgf::Entropy),
            (deconv_problem(&grid, Regularizer::NonnegPlusTv { lambda: 0.0 }).unwrap(), Dgf::power(1.5).unwrap()),
            (lb_problem(&grid, Setting::IIStar).unwrap(), Dgf::power(2.0).unwrap()),
        ];
        for (p, dgf) in cases {
            let t = run_pgm(&p, &dgf, &f0, &every(SolverConfig::new(Method::Pgm, 2000))).unwrap();
            assert!(t.aborted.is_none());
            for w in t.rows.windows(2) {
                assert!(w[1].f_value <= w[0].f_value + 1e-12 * w[0].f_value.abs(), "{} {dgf}: {w:?}", p.name);
            }
            let gap = t.last().unwrap().gap.unwrap();
            assert!(gap >= -1e-12 && gap < t.rows[0].gap.unwrap());
        }
    }

    /// Checks `F(f_k) - F(f) <= bound(k) * D(f, f0)` on a feasible reference.
    fn check_guarantee(p: &Problem, dgf: &Dgf, method: Method, reference: &[f64], bound: impl Fn(usize, f64) -> f64) {
        let f0 = vec![1.0; p.grid.len()];
        let config = SolverConfig::new(method, 3000).with_record(RecordSchedule::Explicit(vec![1, 10, 100, 1000, 3000]));
        let t = run(p, dgf, &f0, &config).unwrap();
        let step: f64 = t.meta_value("step").unwrap().parse().unwrap();
        let f_ref = p.eval_f(reference).unwrap();
        let d = bregman_div(dgf, &p.grid, reference, &f0).unwrap();
        for row in &t.rows {
            assert!(
                row.f_value - f_ref <= bound(row.k, step) * d + 1e-12,
                "{} {dgf} {method} k={}: {} > {}",
                p.name,
                row.k,
                row.f_value - f_ref,
                bound(row.k, step) * d
            );
        }
    }

    #[test]
    fn pgm_and_apgm_guarantees() {
        let grid = Grid::torus(1, 200).unwrap();
        let problems = [
            deconv_problem(&grid, Regularizer::NonnegPlusTv { lambda: 0.0 }).unwrap(),
            deconv_problem(&grid, Regularizer::Tv { lambda: 0.05 }).unwrap(),
            lb_problem(&grid, Setting::IStar).unwrap(),
            lb_problem(&grid, Setting::I).unwrap(),
        ];
        for p in &problems {
            // Box-smoothed minimizer: feasible with finite divergence for every dgf.
            let mut reference = vec![0.0; 200];
            let atom = &p.mu_star.as_ref().unwrap()[0];
            for j in 0..200 {
                if grid.dist(grid.point(j), &atom.point) <= 0.05 {
                    reference[j] = 1.0;
                }
            }
            let mass = grid.integrate(&reference);
            reference.iter_mut().for_each(|x| *x *= atom.weight / mass);
            let positive: Vec<f64> = reference.iter().map(|x| 0.999 * x + 0.001 * atom.weight).collect();
            for dgf in [Dgf::power(2.0).unwrap(), Dgf::Entropy, Dgf::hyperbolic(1e-3).unwrap()] {
                let r = if matches!(dgf, Dgf::Entropy) { &positive } else { &reference };
                if matches!(dgf, Dgf::Entropy) && !p.reg.forces_nonneg() {
                    continue;
                }
                check_guarantee(p, &dgf, Method::Pgm, r, |k, s| 1.0 / (s * k as f64));
                check_guarantee(p, &dgf, Method::Apgm, r, |k, s| 4.0 / (s * ((k + 1) * (k + 1)) as f64));
            }
        }
    }

    #[test]
    fn apgm_simplex_never_warns() {
        let grid = Grid::torus(1, 100).unwrap();
        let p = lb_problem(&grid, Setting::II).unwrap();
        let t = run_apgm(&p, &Dgf::power(2.0).unwrap(), &vec![1.0; 100], &every(SolverConfig::new(Method::Apgm, 500))).unwrap();
        assert!(t.warnings.is_empty());
        assert!(t.rows.iter().all(|r| (r.l1 - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn apgm_warns_past_the_bound() {
        let grid = Grid::torus(1, 100).unwrap();
        let p = deconv_problem(&grid, Regularizer::Tv { lambda: 0.05 }).unwrap();
        let config = SolverConfig::new(Method::Apgm, 200).with_k_bound(1.0).with_step(0.1);
        let t = run_apgm(&p, &Dgf::power(2.0).unwrap(), &vec![1.0; 100], &config).unwrap();
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn apgm_iterates_stay_in_hull_of_prox_points() {
        // Linear objective on the simplex: f_k is a convex combination of
        // probability densities, so it stays a nonnegative unit-mass density.
        let grid = Grid::torus(1, 150).unwrap();
        let p = lb_problem(&grid, Setting::I).unwrap();
        for dgf in [Dgf::power(2.0).unwrap(), Dgf::Entropy] {
            let t = run_apgm(&p, &dgf, &vec![1.0; 150], &every(SolverConfig::new(Method::Apgm, 300))).unwrap();
            assert!(t.final_density.iter().all(|&x| x >= 0.0));
            assert!(t.rows.iter().all(|r| (r.l1 - 1.0).abs() <= 1e-9));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let grid = Grid::circle(300).unwrap();
        let p = relu_problem(&grid, 10, 0.05, 7).unwrap();
        let config = SolverConfig::new(Method::Apgm, 500).with_k_bound(10.0);
        let a = run(&p, &Dgf::hyperbolic(1e-3).unwrap(), &vec![1.0; 300], &config).unwrap();
        let b = run(&p, &Dgf::hyperbolic(1e-3).unwrap(), &vec![1.0; 300], &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn configuration_errors() {
        let grid = Grid::torus(1, 50).unwrap();
        let p = lb_problem(&grid, Setting::I).unwrap();
        let dgf = Dgf::power(2.0).unwrap();
        assert!(run(&p, &dgf, &vec![1.0; 50], &SolverConfig::new(Method::Pgm, 0)).is_err());
        assert!(run(&p, &dgf, &vec![2.0; 50], &SolverConfig::new(Method::Pgm, 5)).is_err());
        assert!(run(&p, &dgf, &vec![1.0; 49], &SolverConfig::new(Method::Pgm, 5)).is_err());
        let signed = deconv_problem(&grid, Regularizer::Tv { lambda: 0.0 }).unwrap();
        assert!(run(&signed, &dgf, &vec![1.0; 50], &SolverConfig::new(Method::Pgm, 5)).is_err());
        assert!(run(&signed, &dgf, &vec![1.0; 50], &SolverConfig::new(Method::Pgm, 5).with_k_bound(3.0)).is_ok());
    }

    #[test]
    fn default_bounds_and_steps() {
        let grid = Grid::torus(1, 300).unwrap();
        let f0 = vec![1.0; 300];
        let nonneg = deconv_problem(&grid, Regularizer::NonnegPlusTv { lambda: 0.0 }).unwrap();
        assert_abs_diff_eq!(default_k_bound(&nonneg, &f0).unwrap(), 3.0, epsilon = 1e-12);
        let signed = deconv_problem(&grid, Regularizer::Tv { lambda: 0.05 }).unwrap();
        assert_abs_diff_eq!(default_k_bound(&signed, &f0).unwrap(), 4.05 / 0.05, epsilon = 1e-9);
        assert_abs_diff_eq!(default_step(&signed, &Dgf::power(2.0).unwrap(), 81.0).unwrap(), 0.1, epsilon = 1e-12);
        let lb = lb_problem(&grid, Setting::I).unwrap();
        assert_eq!(default_step(&lb, &Dgf::Entropy, 1.0).unwrap(), 1.0);
        // Dirac initialization is a fixed point of lb:I* under any dgf.
        let dirac = dirac_density(&grid, &[0.0]);
        let lbs = lb_problem(&grid, Setting::IStar).unwrap();
        let t = run_pgm(&lbs, &Dgf::power(2.0).unwrap(), &dirac, &SolverConfig::new(Method::Pgm, 10)).unwrap();
        assert_eq!(t.last().unwrap().gap, Some(0.0));
    }
}
