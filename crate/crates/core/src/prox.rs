//! Bregman proximal update for the four admissible regularizers.
//!
//! With raw mirror point `v = u - s * grad`, the update is closed form up to a
//! scalar dual variable `kappa` for the two constrained cases:
//!
//! | regularizer       | signed dgf                    | entropy                          |
//! |-------------------|-------------------------------|----------------------------------|
//! | nonneg + lambda   | `(v - s lambda)_+`            | `v - s lambda`                   |
//! | simplex           | `(v - kappa)_+`, mass 1       | `v - log sum w e^v`              |
//! | lambda norm       | `sfth_{s lambda}(v)`          | `v - s lambda`                   |
//! | norm ball `K`     | `sfth_kappa(v)`, norm `<= K`  | `v - max(0, log(sum w e^v / K))` |

use crate::dgf::{bregman_div_mirror, Dgf};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::objective::Regularizer;

/// `sign(a) * max(|a| - kappa, 0)`.
pub fn soft_threshold(a: f64, kappa: f64) -> f64 {
    if a > kappa {
        a - kappa
    } else if a < -kappa {
        a + kappa
    } else {
        0.0
    }
}

/// Dual root-finder settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Tolerance on `kappa` and on the relative constraint residual.
    pub kappa_tol: f64,
    pub max_iter: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            kappa_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Constraint fixing the dual variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaTarget {
    /// `sum_j w_j h_j = 1`.
    MassEqOne,
    /// Smallest `kappa >= 0` with `sum_j w_j |h_j| <= K`.
    L1AtMost(f64),
}

/// Mirror coordinates `u = eta'(h)` of a density; `-inf` encodes zero mass
/// under the entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorState {
    pub u: Vec<f64>,
}

impl MirrorState {
    pub fn from_primal(dgf: &Dgf, f: &[f64]) -> Result<Self> {
        if !dgf.is_signed() {
            if let Some(&bad) = f.iter().find(|x| !(**x >= 0.0)) {
                return Err(Error::Domain {
                    dgf: dgf.to_string(),
                    value: bad,
                });
            }
        }
        Ok(Self {
            u: f.iter().map(|&x| dgf.eta_prime(x)).collect(),
        })
    }

    pub fn primal(&self, dgf: &Dgf) -> Vec<f64> {
        self.u.iter().map(|&x| dgf.eta_prime_inv(x)).collect()
    }

    /// `max_j |u_j|` (infinite if some point carries no mass under entropy).
    pub fn linf(&self) -> f64 {
        self.u.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Weighted log-sum-exp `log sum_j w_j exp(v_j)`; `-inf` entries are skipped.
pub fn log_sum_exp(weights: &[f64], v: &[f64]) -> Result<f64> {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::RootFinding(format!(
            "log-sum-exp of a vector with maximum {top}"
        )));
    }
    let sum: f64 = weights
        .iter()
        .zip(v)
        .map(|(w, x)| w * (x - top).exp())
        .sum();
    Ok(top + sum.ln())
}

/// Dual variable for the constrained rows.
///
/// Entropy uses the closed forms; other dgfs go through
/// [`solve_kappa_numeric`].
pub fn solve_kappa(
    dgf: &Dgf,
    weights: &[f64],
    v: &[f64],
    target: KappaTarget,
    opts: &StepOptions,
    guess: Option<f64>,
) -> Result<f64> {
    match (dgf, target) {
        (Dgf::Entropy, KappaTarget::MassEqOne) => log_sum_exp(weights, v),
        (Dgf::Entropy, KappaTarget::L1AtMost(k)) => Ok((log_sum_exp(weights, v)? - k.ln()).max(0.0)),
        _ => solve_kappa_numeric(dgf, weights, v, target, opts, guess),
    }
}

/// Safeguarded Newton iteration on the monotone map
/// `kappa -> sum_j w_j [eta']^-1(a_j - kappa)` (clamped at zero for signed
/// dgfs), with `a = v` for the mass constraint and `a = |v|` for the ball.
/// Every iterate stays inside a bracket that is shrunk at each step; Newton
/// proposals leaving it are replaced by bisection.
pub fn solve_kappa_numeric(
    dgf: &Dgf,
    weights: &[f64],
    v: &[f64],
    target: KappaTarget,
    opts: &StepOptions,
    guess: Option<f64>,
) -> Result<f64> {
    let clamp = dgf.is_signed();
    // Nonnegative dgfs produce nonnegative densities, so the norm is the mass.
    let (level, absolute) = match target {
        KappaTarget::MassEqOne => (1.0, false),
        KappaTarget::L1AtMost(k) => (k, clamp),
    };
    if !(level > 0.0) || v.len() != weights.len() || v.is_empty() {
        return Err(Error::RootFinding(format!(
            "ill-posed dual problem (level {level}, {} values, {} weights)",
            v.len(),
            weights.len()
        )));
    }
    let value_at = |kappa: f64| -> (f64, f64) {
        let mut val = 0.0;
        let mut der = 0.0;
        for (w, &x) in weights.iter().zip(v) {
            let a = if absolute { x.abs() } else { x } - kappa;
            if clamp && a <= 0.0 {
                continue;
            }
            val += w * dgf.eta_prime_inv(a);
            der -= w * dgf.eta_prime_inv_deriv(a);
        }
        (val, der)
    };

    if matches!(target, KappaTarget::L1AtMost(_)) && value_at(0.0).0 <= level {
        return Ok(0.0);
    }

    // Bracket: the top entry alone reaches the level at `lo`; the whole
    // weight cannot exceed it at `hi`.
    let (j_top, a_top) = v
        .iter()
        .map(|&x| if absolute { x.abs() } else { x })
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, a)| if a > acc.1 { (j, a) } else { acc });
    let total: f64 = weights.iter().sum();
    if !a_top.is_finite() || !(weights[j_top] > 0.0) {
        return Err(Error::RootFinding(format!(
            "cannot bracket the dual variable (top value {a_top}, weight {})",
            weights[j_top]
        )));
    }
    let mut lo = a_top - dgf.eta_prime(level / weights[j_top]);
    let mut hi = if clamp { a_top } else { a_top - dgf.eta_prime(level / total) };
    if matches!(target, KappaTarget::L1AtMost(_)) {
        lo = lo.max(0.0);
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::RootFinding(format!("invalid bracket [{lo}, {hi}]")));
    }

    let tol = opts.kappa_tol;
    let mut x = match guess {
        Some(g) if g > lo && g < hi => g,
        _ => 0.5 * (lo + hi),
    };
    for _ in 0..opts.max_iter {
        let (val, der) = value_at(x);
        let r = val - level;
        if r.abs() <= tol * level.max(1.0) {
            return Ok(x);
        }
        if r > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - r / der;
        let next = if der < 0.0 && newton >= lo && newton <= hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let scale = next.abs().max(1.0);
        if (next - x).abs() <= tol * scale || hi - lo <= tol * scale {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::RootFinding(format!(
        "no convergence in {} iterations (bracket [{lo}, {hi}])",
        opts.max_iter
    )))
}

/// Result of one proximal update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: MirrorState,
    /// Dual variable of the constrained rows, 0 otherwise.
    pub kappa: f64,
}

/// Reusable prox operator that warm-starts the dual variable.
#[derive(Debug, Clone)]
pub struct Prox {
    dgf: Dgf,
    reg: Regularizer,
    opts: StepOptions,
    last_kappa: Option<f64>,
}

impl Prox {
    pub fn new(dgf: Dgf, reg: Regularizer, opts: StepOptions) -> Self {
        Self {
            dgf,
            reg,
            opts,
            last_kappa: None,
        }
    }

    /// Writes the new mirror coordinates into `out`, returning `kappa`.
    /// `out` first receives the raw point `v = u - step * grad`.
    pub fn step_into(
        &mut self,
        weights: &[f64],
        u: &[f64],
        grad: &[f64],
        step: f64,
        out: &mut [f64],
    ) -> Result<f64> {
        self.step_impl(weights, u, None, grad, step, out)
    }

    /// As [`Prox::step_into`], carrying the low-order part `comp` of the mirror
    /// coordinates (compensated summation). Iterations that repeatedly add
    /// small increments to large coordinates otherwise accumulate a rounding
    /// bias linear in the iteration count. `comp` starts at zero and is
    /// updated in place; exact zeros produced by clamping reset it.
    pub fn step_compensated(
        &mut self,
        weights: &[f64],
        u: &[f64],
        comp: &mut [f64],
        grad: &[f64],
        step: f64,
        out: &mut [f64],
    ) -> Result<f64> {
        self.step_impl(weights, u, Some(comp), grad, step, out)
    }

    fn step_impl(
        &mut self,
        weights: &[f64],
        u: &[f64],
        mut comp: Option<&mut [f64]>,
        grad: &[f64],
        step: f64,
        out: &mut [f64],
    ) -> Result<f64> {
        match comp.as_deref_mut() {
            None => {
                for ((o, &uj), &gj) in out.iter_mut().zip(u).zip(grad) {
                    *o = uj - step * gj;
                }
            }
            Some(c) => {
                for (((o, &uj), &gj), cj) in out.iter_mut().zip(u).zip(grad).zip(c.iter_mut()) {
                    *o = compensated_add(uj, -step * gj, cj);
                }
            }
        }
        let signed = self.dgf.is_signed();
        let (kappa, shift, rule) = match self.reg {
            Regularizer::NonnegPlusTv { lambda } => (0.0, step * lambda, if signed { Row::Clamp } else { Row::Shift }),
            Regularizer::Tv { lambda } => (0.0, step * lambda, if signed { Row::Threshold } else { Row::Shift }),
            Regularizer::Simplex => {
                let kappa = solve_kappa(&self.dgf, weights, out, KappaTarget::MassEqOne, &self.opts, self.last_kappa)?;
                self.last_kappa = Some(kappa);
                (kappa, kappa, if signed { Row::Clamp } else { Row::Shift })
            }
            Regularizer::TvBall { radius } => {
                let kappa = solve_kappa(&self.dgf, weights, out, KappaTarget::L1AtMost(radius), &self.opts, self.last_kappa)?;
                self.last_kappa = Some(kappa);
                (kappa, kappa, if signed { Row::Threshold } else { Row::Shift })
            }
        };
        match comp {
            None => out.iter_mut().for_each(|x| {
                *x = match rule {
                    Row::Shift => *x - shift,
                    Row::Clamp => (*x - shift).max(0.0),
                    Row::Threshold => soft_threshold(*x, shift),
                }
            }),
            Some(c) => {
                for (x, cj) in out.iter_mut().zip(c.iter_mut()) {
                    let delta = match rule {
                        Row::Shift => Some(-shift),
                        Row::Clamp => (*x - shift > 0.0).then_some(-shift),
                        Row::Threshold if *x > shift => Some(-shift),
                        Row::Threshold if *x < -shift => Some(shift),
                        Row::Threshold => None,
                    };
                    match delta {
                        Some(d) => *x = compensated_add(*x, d, cj),
                        None => {
                            *x = 0.0;
                            *cj = 0.0;
                        }
                    }
                }
            }
        }
        Ok(kappa)
    }
}

/// How a regularizer row maps the raw mirror point.
#[derive(Debug, Clone, Copy)]
enum Row {
    Shift,
    Clamp,
    Threshold,
}

/// Kahan step: `acc + y`, with `c` the running compensation (`acc - c` is
/// the accurate value).
fn compensated_add(acc: f64, y: f64, c: &mut f64) -> f64 {
    let y = y - *c;
    let t = acc + y;
    *c = if t.is_finite() { (t - acc) - y } else { 0.0 };
    t
}

/// One Bregman proximal step from `state` with gradient potential `grad` and
/// effective step `step` (`s` for PGM, `s / gamma` for APGM).
pub fn bregman_step(
    dgf: &Dgf,
    reg: &Regularizer,
    grid: &Grid,
    state: &MirrorState,
    grad: &[f64],
    step: f64,
    opts: &StepOptions,
) -> Result<StepOutcome> {
    grid.check_len("mirror state", state.u.len())?;
    grid.check_len("gradient", grad.len())?;
    if !(step > 0.0) {
        return Err(Error::invalid(format!("step must be positive (got {step})")));
    }
    let mut out = vec![0.0; state.u.len()];
    let kappa = Prox::new(*dgf, *reg, *opts).step_into(grid.weights(), &state.u, grad, step, &mut out)?;
    Ok(StepOutcome {
        state: MirrorState { u: out },
        kappa,
    })
}

/// Components of the optimality residual of a proximal step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// Sup-norm distance from `-grad - (u_next - u_prev) / s` to the
    /// subdifferential of `H` at the new point (gradient units).
    pub stationarity: f64,
    /// Constraint violation (mass, sign or norm).
    pub feasibility: f64,
    /// `(kappa / s) * (K - ||h||)` for the norm ball (gradient units).
    pub slackness: f64,
}

impl KktResidual {
    /// Residual expressed in mirror units.
    pub fn scaled(&self, step: f64) -> f64 {
        (step * self.stationarity)
            .max(self.feasibility)
            .max(step * self.slackness)
    }
}

/// Optimality residual of the step `u_prev -> u_next`, using the implied
/// subgradient and the multiplier `kappa / s` for the constrained rows.
#[allow(clippy::too_many_arguments)]
pub fn kkt_residual(
    dgf: &Dgf,
    reg: &Regularizer,
    grid: &Grid,
    u_prev: &[f64],
    u_next: &[f64],
    grad: &[f64],
    step: f64,
    kappa: f64,
) -> KktResidual {
    let h: Vec<f64> = u_next.iter().map(|&x| dgf.eta_prime_inv(x)).collect();
    let (level, two_sided) = match *reg {
        Regularizer::NonnegPlusTv { lambda } => (lambda, false),
        Regularizer::Simplex => (kappa / step, false),
        Regularizer::Tv { lambda } => (lambda, true),
        Regularizer::TvBall { .. } => (kappa / step, true),
    };
    let mut stationarity = 0.0f64;
    for j in 0..h.len() {
        if u_prev[j] == f64::NEG_INFINITY && u_next[j] == f64::NEG_INFINITY {
            continue;
        }
        let phi = -grad[j] - (u_next[j] - u_prev[j]) / step;
        let dist = if h[j] > 0.0 {
            (phi - level).abs()
        } else if h[j] < 0.0 {
            if two_sided {
                (phi + level).abs()
            } else {
                f64::INFINITY
            }
        } else if two_sided {
            (phi.abs() - level).max(0.0)
        } else {
            (phi - level).max(0.0)
        };
        stationarity = stationarity.max(if dist.is_nan() { f64::INFINITY } else { dist });
    }
    let negativity = h.iter().fold(0.0f64, |m, x| m.max(-x));
    let (feasibility, slackness) = match *reg {
        Regularizer::NonnegPlusTv { .. } => (negativity, 0.0),
        Regularizer::Simplex => (negativity.max((grid.integrate(&h) - 1.0).abs()), 0.0),
        Regularizer::Tv { .. } => (0.0, 0.0),
        Regularizer::TvBall { radius } => {
            let norm = grid.l1_norm(&h);
            ((norm - radius).max(0.0), level * (radius - norm).max(0.0))
        }
    };
    KktResidual {
        stationarity,
        feasibility,
        slackness,
    }
}

/// The function minimized by the proximal step:
/// `<grad, h> + H(h) + D(h, h_prev) / s`.
pub fn prox_objective(
    dgf: &Dgf,
    reg: &Regularizer,
    grid: &Grid,
    u_prev: &[f64],
    grad: &[f64],
    step: f64,
    h: &[f64],
) -> Result<f64> {
    let lin: f64 = grid
        .weights()
        .iter()
        .zip(grad)
        .zip(h)
        .map(|((w, g), x)| w * g * x)
        .sum();
    Ok(lin + reg.value(grid, h) + bregman_div_mirror(dgf, grid, h, u_prev)? / step)
}
