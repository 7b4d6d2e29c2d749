//! Independent oracles for the solver stack.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{fit_rate, FitWindow};
use crate::dgf::{bregman_div, Dgf, DEFAULT_HYP_BETA};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::objective::{deconv_problem, lb_problem, Outer, PhiRegularity, Problem, Regularizer, Setting, SmoothObjective};
use crate::prox::{kkt_residual, MirrorState, Prox, StepOptions};
use crate::registry::{build_problem, ProblemParams, PROBLEM_TOKENS};
use crate::solver::{default_k_bound, default_step, gamma_next, run_pgm, Method, RecordSchedule, SolverConfig};

/// Faults injected on purpose to show that the oracles detect them.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DebugHooks {
    /// Negate the analytic gradient in the finite-difference check.
    pub flip_gradient_sign: bool,
    /// Override the dual root-finding tolerance in the KKT sweep.
    pub kappa_tol: Option<f64>,
}

/// Outcome of one oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule for `value`.
    pub rule: String,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            rule: format!("<= {limit:e}"),
            passed: value <= limit,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            rule: format!(">= {limit:e}"),
            passed: value >= limit,
        }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            rule: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }

    fn failed(name: impl Into<String>, err: &Error) -> Self {
        Self {
            name: name.into(),
            value: f64::NAN,
            rule: format!("error: {err}"),
            passed: false,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status}  {:<44} {:>13.6e}  {}", self.name, self.value, self.rule)
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative error between central differences of `G` along random
/// directions and the pairing `sum_j w_j d_j G'[f]_j`.
pub fn fd_gradient_check(problem: &Problem, f: &[f64], n_dirs: usize, t: f64, seed: u64, flip_sign: bool) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&t) {
        return Err(Error::invalid(format!("probe size must lie in [1e-7, 1e-3] (got {t})")));
    }
    let grad = problem.grad_potential(f)?;
    let sign = if flip_sign { -1.0 } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut plus = vec![0.0; f.len()];
    let mut minus = vec![0.0; f.len()];
    for _ in 0..n_dirs {
        let dir: Vec<f64> = (0..f.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for j in 0..f.len() {
            plus[j] = f[j] + t * dir[j];
            minus[j] = f[j] - t * dir[j];
        }
        let fd = (problem.eval_g(&plus)? - problem.eval_g(&minus)?) / (2.0 * t);
        let analytic: f64 = sign
            * problem
                .grid
                .weights()
                .iter()
                .zip(&dir)
                .zip(&grad)
                .map(|((w, d), g)| w * d * g)
                .sum::<f64>();
        worst = worst.max(relative_error(fd, analytic));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormReport {
    /// `(k, max_j |f_k / f_ref - 1|)` over points where the reference is normal.
    pub deviations: Vec<(usize, f64)>,
    pub max_deviation: f64,
    /// Same as `max_deviation` but only where the reference exceeds
    /// [`BULK_DENSITY_FLOOR`].
    pub bulk_deviation: f64,
    /// Fitted gap exponent over `k` in `[100, 10^4]` (clipped to `k_max`).
    pub gap_slope: f64,
}

/// Density below which points are excluded from `bulk_deviation`.
pub const BULK_DENSITY_FLOOR: f64 = 1e-40;

/// Runs entropic PGM on the `lb:I` construction from the uniform density and
/// compares iterates with `exp(-k s Phi) / Z_k`.
pub fn entropy_closed_form_check(grid: &Grid, step: f64, k_max: usize) -> Result<ClosedFormReport> {
    let problem = lb_problem(grid, Setting::I)?;
    let phi: Vec<f64> = (0..grid.len()).map(|j| problem.smooth.feature(j)[0]).collect();
    let mut snaps: Vec<usize> = [1, 10, 100, 1000, 10_000, k_max].into_iter().filter(|&k| k <= k_max).collect();
    snaps.sort_unstable();
    snaps.dedup();
    let config = SolverConfig::new(Method::Pgm, k_max)
        .with_step(step)
        .with_record(RecordSchedule::Geometric { per_decade: 50 })
        .with_snapshots(snaps);
    let f0 = vec![1.0; grid.len()];
    let trace = run_pgm(&problem, &Dgf::Entropy, &f0, &config)?;
    if let Some(reason) = &trace.aborted {
        return Err(Error::invalid(format!("closed-form run aborted: {reason}")));
    }
    let weights = grid.weights();
    let mut deviations = Vec::new();
    let mut bulk_deviation = 0.0f64;
    for (k, f) in &trace.snapshots {
        let ks = *k as f64 * step;
        let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let log_z = phi_min * -ks
            + weights.iter().zip(&phi).map(|(w, p)| w * (-ks * (p - phi_min)).exp()).sum::<f64>().ln();
        let mut worst = 0.0f64;
        for (fj, pj) in f.iter().zip(&phi) {
            let reference = (-ks * pj - log_z).exp();
            let dev = if reference >= f64::MIN_POSITIVE {
                (fj / reference - 1.0).abs()
            } else if *fj < 1e-300 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(dev);
            if reference >= BULK_DENSITY_FLOOR {
                bulk_deviation = bulk_deviation.max(dev);
            }
        }
        deviations.push((*k, worst));
    }
    let window = FitWindow {
        k_lo: 100,
        k_hi: Some(k_max.min(10_000)),
        ..FitWindow::default()
    };
    let gap_slope = fit_rate(&trace, &window)?.slope;
    let max_deviation = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(ClosedFormReport {
        deviations,
        max_deviation,
        bulk_deviation,
        gap_slope,
    })
}

/// Reparameterization compared against a mirror flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reparam {
    /// `h = r^2` against the entropy mirror flow.
    Square,
    /// `h = r^2 - q^2` against the hyperbolic mirror flow with `beta = 2 r0 q0`.
    DifferenceOfSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    /// Sup-norm gap in mirror coordinates at the horizon for `dt` and `dt / 2`.
    pub gap_full: f64,
    pub gap_half: f64,
    /// `gap_full / gap_half`; 2 for a first-order discrepancy.
    pub ratio: f64,
    /// Sup norm of the Richardson-extrapolated gap `2 e(dt/2) - e(dt)`,
    /// relative to `gap_full`.
    pub extrapolated: f64,
}

fn flow_gap(smooth: &SmoothObjective, grid: &Grid, reparam: Reparam, r0: &[f64], q0: &[f64], dt: f64, horizon: f64) -> Result<Vec<f64>> {
    let steps = (horizon / dt).round() as usize;
    let weights = grid.weights();
    let mut ws = smooth.workspace();
    let mut grad = vec![0.0; r0.len()];
    let beta: Vec<f64> = r0.iter().zip(q0).map(|(r, q)| 2.0 * r * q).collect();
    let to_mirror = |h: f64, j: usize| match reparam {
        Reparam::Square => h.ln(),
        Reparam::DifferenceOfSquares => (h / beta[j]).asinh(),
    };
    let from_mirror = |u: f64, j: usize| match reparam {
        Reparam::Square => u.exp(),
        Reparam::DifferenceOfSquares => beta[j] * u.sinh(),
    };
    let param = |r: &[f64], q: &[f64]| -> Vec<f64> {
        match reparam {
            Reparam::Square => r.iter().map(|x| x * x).collect(),
            Reparam::DifferenceOfSquares => r.iter().zip(q).map(|(a, b)| a * a - b * b).collect(),
        }
    };
    let (mut r, mut q) = (r0.to_vec(), q0.to_vec());
    let h0 = param(&r, &q);
    let mut u: Vec<f64> = h0.iter().enumerate().map(|(j, &h)| to_mirror(h, j)).collect();
    let mut h_mirror = h0;
    for k in 1..=steps {
        // Euclidean gradient flow of (r, q) -> G(r^2 - q^2).
        let h = param(&r, &q);
        smooth.grad_potential_into(weights, &h, &mut ws, &mut grad);
        for j in 0..r.len() {
            r[j] -= dt * 2.0 * r[j] * grad[j];
            q[j] += dt * 2.0 * q[j] * grad[j];
        }
        // Mirror flow of 4G.
        smooth.grad_potential_into(weights, &h_mirror, &mut ws, &mut grad);
        for j in 0..u.len() {
            u[j] -= 4.0 * dt * grad[j];
            h_mirror[j] = from_mirror(u[j], j);
        }
        if r.iter().chain(&q).chain(&u).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                iteration: k,
                detail: "flow integration blew up; reduce the step".into(),
            });
        }
    }
    let h = param(&r, &q);
    Ok(h.iter().enumerate().map(|(j, &x)| to_mirror(x, j) - u[j]).collect())
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Explicit-Euler comparison of a reparameterized Euclidean gradient flow with
/// the corresponding mirror flow, at steps `dt` and `dt / 2`. The smooth term
/// is used without constraints.
pub fn mirror_flow_equivalence(smooth: &SmoothObjective, grid: &Grid, reparam: Reparam, dt: f64, horizon: f64) -> Result<FlowReport> {
    if !(dt > 0.0 && horizon > dt) {
        return Err(Error::invalid("need 0 < dt < horizon"));
    }
    let r0: Vec<f64> = grid.points().map(|p| 1.0 + 0.3 * (std::f64::consts::TAU * p[0]).cos()).collect();
    let q0: Vec<f64> = match reparam {
        Reparam::Square => vec![0.0; r0.len()],
        Reparam::DifferenceOfSquares => grid.points().map(|p| 0.5 + 0.2 * (std::f64::consts::TAU * p[0]).sin()).collect(),
    };
    let full = flow_gap(smooth, grid, reparam, &r0, &q0, dt, horizon)?;
    let half = flow_gap(smooth, grid, reparam, &r0, &q0, dt / 2.0, horizon)?;
    let (gap_full, gap_half) = (linf(&full), linf(&half));
    let extrapolated: Vec<f64> = half.iter().zip(&full).map(|(a, b)| 2.0 * a - b).collect();
    Ok(FlowReport {
        gap_full,
        gap_half,
        ratio: gap_full / gap_half,
        extrapolated: if gap_full > 0.0 { linf(&extrapolated) / gap_full } else { 0.0 },
    })
}

/// The unconstrained smooth test objective of the flow check: the squared
/// smoothed-distance moment of the `II*` construction.
pub fn flow_test_objective(grid: &Grid) -> Result<SmoothObjective> {
    Ok(lb_problem(grid, Setting::IIStar)?.smooth)
}

/// A smooth term with identically zero gradient on the same features.
pub fn constant_objective(grid: &Grid) -> Result<SmoothObjective> {
    let features = (0..grid.len()).map(|j| grid.point(j)[0]).collect();
    SmoothObjective::new(features, 1, Outer::Linear { coef: vec![0.0] }, PhiRegularity::Lipschitz)
}

fn sample_density(rng: &mut ChaCha8Rng, n: usize, grid: &Grid, norm: f64, nonneg: bool) -> Vec<f64> {
    let sparse = rng.gen_bool(0.25);
    let mut f: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.gen_bool(0.8) {
                0.0
            } else if nonneg {
                rng.gen_range(0.0..1.0)
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    let l1 = grid.l1_norm(&f);
    if l1 == 0.0 {
        f.iter_mut().for_each(|x| *x = 1.0);
    }
    let l1 = grid.l1_norm(&f);
    f.iter_mut().for_each(|x| *x *= norm / l1);
    f
}

/// Smallest `D(f, g) - c(K) ||f - g||^2` over random pairs with L1 norms at
/// most `K` (nonnegative for the entropy, with `g > 0`).
pub fn pinsker_sample(dgf: &Dgf, grid: &Grid, k_bound: f64, n_samples: usize, seed: u64) -> Result<f64> {
    let c = dgf.sc_constant(k_bound)?;
    let nonneg = !dgf.is_signed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let nf = k_bound * rng.gen_range(0.0..=1.0f64);
        let ng = k_bound * rng.gen_range(0.05..=1.0f64);
        let f = sample_density(&mut rng, grid.len(), grid, nf.max(1e-12), nonneg);
        let mut g = sample_density(&mut rng, grid.len(), grid, ng, nonneg);
        if nonneg {
            let floor = 1e-3 * ng;
            g.iter_mut().for_each(|x| *x = (*x).max(floor));
            let l1 = grid.l1_norm(&g);
            g.iter_mut().for_each(|x| *x *= ng / l1);
        }
        let diff: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a - b).collect();
        let dist = grid.l1_norm(&diff);
        worst = worst.min(bregman_div(dgf, grid, &f, &g)? - c * dist * dist);
    }
    Ok(worst)
}

/// Momentum sequence audit up to `k_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaReport {
    /// Indices with `gamma_k` outside `(0, 1]` or above `2 / (k + 2)`
    /// (compared exactly in floating point).
    pub violations: usize,
    /// Largest `gamma_k (k + 2) / 2`.
    pub max_ratio: f64,
}

pub fn gamma_bound_check(k_max: usize) -> GammaReport {
    let mut gamma = 1.0f64;
    let mut report = GammaReport { violations: 0, max_ratio: 0.0 };
    for k in 0..=k_max {
        let bound = 2.0 / (k as f64 + 2.0);
        if !(gamma > 0.0 && gamma <= 1.0 && gamma <= bound) {
            report.violations += 1;
        }
        report.max_ratio = report.max_ratio.max(gamma / bound);
        gamma = gamma_next(gamma);
    }
    report
}

/// Largest scaled optimality residual over `steps` PGM steps of `dgf` on the
/// one-dimensional deconvolution problem with regularizer `reg`.
pub fn kkt_sweep_case(dgf: &Dgf, reg: Regularizer, grid: &Grid, steps: usize, opts: StepOptions) -> Result<f64> {
    let problem = deconv_problem(grid, reg)?;
    let level = match reg {
        Regularizer::TvBall { radius } => radius.min(1.0),
        _ => 1.0,
    };
    let f0 = vec![level; grid.len()];
    let k_bound = default_k_bound(&problem, &f0)?;
    let step = default_step(&problem, dgf, k_bound)?;
    let weights = grid.weights();
    let mut prox = Prox::new(*dgf, reg, opts);
    let mut state = MirrorState::from_primal(dgf, &f0)?;
    let mut next = vec![0.0; grid.len()];
    let mut f = f0;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let grad = problem.grad_potential(&f)?;
        let kappa = prox.step_into(weights, &state.u, &grad, step, &mut next)?;
        let res = kkt_residual(dgf, &reg, grid, &state.u, &next, &grad, step, kappa);
        worst = worst.max(res.scaled(step));
        std::mem::swap(&mut state.u, &mut next);
        f = state.primal(dgf);
    }
    Ok(worst)
}

/// The twelve distance-generating function and regularizer pairs of the sweep.
pub fn kkt_sweep_cases() -> Vec<(Dgf, Regularizer)> {
    let dgfs = [Dgf::Power { p: 2.0 }, Dgf::Entropy, Dgf::Hyperbolic { beta: DEFAULT_HYP_BETA }];
    let regs = [
        Regularizer::NonnegPlusTv { lambda: 0.05 },
        Regularizer::Simplex,
        Regularizer::Tv { lambda: 0.05 },
        Regularizer::TvBall { radius: 0.5 },
    ];
    dgfs.iter().flat_map(|d| regs.iter().map(move |r| (*d, *r))).collect()
}

pub const FD_TOL: f64 = 1e-5;
pub const FD_PROBE: f64 = 1e-5;
pub const CLOSED_FORM_TOL: f64 = 1e-10;
pub const KKT_TOL: f64 = 1e-8;
pub const PINSKER_SLACK: f64 = 1e-12;
pub const FLOW_RATIO: (f64, f64) = (1.5, 2.5);

fn record(results: &mut Vec<CheckResult>, name: String, outcome: Result<CheckResult>) {
    results.push(outcome.unwrap_or_else(|e| CheckResult::failed(name, &e)));
}

/// Runs every oracle with its default seed and sizes.
pub fn run_all(hooks: &DebugHooks) -> Vec<CheckResult> {
    let mut results = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for tok in PROBLEM_TOKENS {
        let name = format!("fd_gradient {tok}");
        let outcome = (|| {
            let problem = build_problem(tok.parse()?, &ProblemParams::default())?;
            let f: Vec<f64> = (0..problem.grid.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
            let err = fd_gradient_check(&problem, &f, 8, FD_PROBE, 11, hooks.flip_gradient_sign)?;
            Ok(CheckResult::at_most(name.clone(), err, FD_TOL))
        })();
        record(&mut results, name, outcome);
    }

    let closed = Grid::torus(1, 20_000).and_then(|g| entropy_closed_form_check(&g, 1.0, 10_000));
    match closed {
        Ok(rep) => {
            let early = rep.deviations.iter().filter(|d| d.0 <= 100).map(|d| d.1).fold(0.0, f64::max);
            results.push(CheckResult::at_most("entropy closed form, k <= 100", early, CLOSED_FORM_TOL));
            results.push(CheckResult::at_most("entropy closed form, k <= 1e4", rep.max_deviation, CLOSED_FORM_TOL));
            results.push(CheckResult::within("entropy closed form, gap slope", rep.gap_slope, -1.05, -0.95));
        }
        Err(e) => results.push(CheckResult::failed("entropy closed form", &e)),
    }

    let opts = StepOptions {
        kappa_tol: hooks.kappa_tol.unwrap_or(StepOptions::default().kappa_tol),
        ..StepOptions::default()
    };
    if let Ok(grid) = Grid::torus(1, 300) {
        for (dgf, reg) in kkt_sweep_cases() {
            let name = format!("kkt {dgf} {reg}");
            let outcome = kkt_sweep_case(&dgf, reg, &grid, 1000, opts).map(|v| CheckResult::at_most(name.clone(), v, KKT_TOL));
            record(&mut results, name, outcome);
        }
    }

    if let Ok(grid) = Grid::torus(1, 64) {
        let cases = [
            (Dgf::Power { p: 2.0 }, 3.0),
            (Dgf::Power { p: 1.5 }, 3.0),
            (Dgf::Entropy, 1.0),
            (Dgf::Entropy, 3.0),
            (Dgf::Hyperbolic { beta: DEFAULT_HYP_BETA }, 3.0),
        ];
        for (i, (dgf, k)) in cases.into_iter().enumerate() {
            let name = format!("pinsker {dgf} K={k}");
            let outcome = pinsker_sample(&dgf, &grid, k, 1000, 100 + i as u64)
                .map(|m| CheckResult::at_least(name.clone(), m, -PINSKER_SLACK));
            record(&mut results, name, outcome);
        }
    }

    let gamma = gamma_bound_check(1_000_000);
    results.push(CheckResult::at_most("gamma_k above 2/(k+2) or outside (0,1], k <= 1e6", gamma.violations as f64, 0.0));

    if let Ok(grid) = Grid::torus(1, 200) {
        for reparam in [Reparam::Square, Reparam::DifferenceOfSquares] {
            let name = format!("mirror flow {reparam:?}, gap ratio");
            let outcome = flow_test_objective(&grid)
                .and_then(|s| mirror_flow_equivalence(&s, &grid, reparam, 0.05, 20.0))
                .map(|rep| CheckResult::within(name.clone(), rep.ratio, FLOW_RATIO.0, FLOW_RATIO.1));
            record(&mut results, name, outcome);
        }
        let name = "mirror flow, zero gradient gap".to_string();
        let outcome = constant_objective(&grid)
            .and_then(|s| mirror_flow_equivalence(&s, &grid, Reparam::DifferenceOfSquares, 0.05, 1.0))
            .map(|rep| CheckResult::at_most(name.clone(), rep.gap_full, 0.0));
        record(&mut results, name, outcome);
    }
    results
}
