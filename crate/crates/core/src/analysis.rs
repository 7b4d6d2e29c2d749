//! Box-kernel mollification, the value-vs-divergence envelope, theoretical
//! rate exponents and log-log slope fitting.

use rayon::prelude::*;

use crate::dgf::{bregman_div, Dgf};
use crate::error::{Error, Result};
use crate::grid::in_closed_ball;
use crate::objective::{PhiRegularity, Problem, Setting};
use crate::solver::{Method, Trace};

/// Spreads each atom of `mu*` uniformly over the closed `eps`-ball around it.
pub fn mollify(problem: &Problem, eps: f64) -> Result<Vec<f64>> {
    let atoms = problem
        .mu_star
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("{} has no known minimizer", problem.name)))?;
    let grid = &problem.grid;
    let mut f = vec![0.0; grid.len()];
    for atom in atoms {
        let dists = grid.distances_from(&atom.point);
        let mass: f64 = dists
            .iter()
            .zip(grid.weights())
            .filter(|(d, _)| in_closed_ball(**d, eps))
            .map(|(_, w)| w)
            .sum();
        if mass == 0.0 {
            return Err(Error::invalid(format!("radius {eps} contains no grid point")));
        }
        for (fj, d) in f.iter_mut().zip(&dists) {
            if in_closed_ball(*d, eps) {
                *fj += atom.weight / mass;
            }
        }
    }
    Ok(f)
}

/// `count` log-spaced radii from three grid spacings to a quarter diameter.
pub fn default_eps_grid(problem: &Problem, count: usize) -> Vec<f64> {
    let lo = 3.0 * problem.grid.spacing();
    let hi = problem.grid.domain().diameter() / 4.0;
    log_space(lo, hi, count)
}

/// `count` points log-spaced on `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// A candidate of the envelope: suboptimality and divergence from `f0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Mollification radius; `None` for the initialization itself.
    pub eps: Option<f64>,
    pub gap: f64,
    pub divergence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub alpha: f64,
    pub psi_hat: f64,
    /// Minimizing radius (`inf` when the initialization wins).
    pub eps_star: f64,
}

/// Mollified candidates for each radius (evaluated in parallel, in order)
/// plus the initialization `f0`.
pub fn envelope_candidates(problem: &Problem, dgf: &Dgf, f0: &[f64], eps_grid: &[f64]) -> Result<Vec<Candidate>> {
    let inf = problem
        .inf_value
        .ok_or_else(|| Error::invalid(format!("{} has no known optimal value", problem.name)))?;
    let mut out: Vec<Candidate> = eps_grid
        .par_iter()
        .map(|&eps| {
            let f = mollify(problem, eps)?;
            Ok(Candidate {
                eps: Some(eps),
                gap: problem.eval_f(&f)? - inf,
                divergence: bregman_div(dgf, &problem.grid, &f, f0)?,
            })
        })
        .collect::<Result<_>>()?;
    out.push(Candidate {
        eps: None,
        gap: problem.eval_f(f0)? - inf,
        divergence: 0.0,
    });
    Ok(out)
}

/// `psi_hat(alpha) = min_c [gap_c + alpha D_c]` over the candidates.
pub fn envelope(candidates: &[Candidate], alphas: &[f64]) -> Vec<EnvelopePoint> {
    alphas
        .iter()
        .map(|&alpha| {
            let (psi_hat, eps_star) = candidates.iter().fold((f64::INFINITY, f64::INFINITY), |best, c| {
                let v = c.gap + alpha * c.divergence;
                if v < best.0 {
                    (v, c.eps.unwrap_or(f64::INFINITY))
                } else {
                    best
                }
            });
            EnvelopePoint { alpha, psi_hat, eps_star }
        })
        .collect()
}

/// Envelope of the mollified family (plus the initialization).
pub fn psi_envelope(
    problem: &Problem,
    dgf: &Dgf,
    f0: &[f64],
    alphas: &[f64],
    eps_grid: &[f64],
) -> Result<Vec<EnvelopePoint>> {
    Ok(envelope(&envelope_candidates(problem, dgf, f0, eps_grid)?, alphas))
}

/// Exponent of `psi(alpha) ~ alpha^e` obtained by balancing `eps^q` against
/// `alpha eps^d eta(eps^-d)`: `q / (q + d (p - 1))` for the power family and
/// 1 (up to a log factor) for the entropies.
pub fn predicted_alpha_exponent(dgf: &Dgf, q: u32, d: usize) -> Result<f64> {
    let (p, _) = dgf.sc_params()?;
    let q = q as f64;
    Ok(q / (q + d as f64 * (p - 1.0)))
}

/// Predicted log-log slope of the optimality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    pub method: Method,
    pub dgf: Dgf,
    pub q: u32,
    pub d: usize,
    pub exponent: f64,
    /// The bound carries an extra `log k` factor.
    pub log_factor: bool,
}

/// `-q / ((p-1) d + q)` for PGM with a power dgf, twice that for APGM;
/// `-1` / `-2` with a log factor for the entropies.
pub fn theoretical_exponent(method: Method, dgf: &Dgf, q: u32, d: usize) -> Result<RateModel> {
    if !matches!(q, 1 | 2 | 4) {
        return Err(Error::invalid(format!("structure exponent must be 1, 2 or 4 (got {q})")));
    }
    let (base, log_factor) = match *dgf {
        Dgf::Power { p } if p <= 2.0 => {
            let qf = q as f64;
            (-qf / ((p - 1.0) * d as f64 + qf), false)
        }
        Dgf::Power { p } => return Err(Error::Unsupported(format!("rate for power exponent p = {p} > 2"))),
        Dgf::Entropy | Dgf::Hyperbolic { .. } => (-1.0, true),
    };
    let exponent = match method {
        Method::Pgm => base,
        Method::Apgm => 2.0 * base,
    };
    Ok(RateModel { method, dgf: *dgf, q, d, exponent, log_factor })
}

/// Outcome of the structure classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Determined(Setting),
    /// The declared tag and the numerical check disagree.
    Ambiguous(Setting, Setting),
}

impl Classification {
    /// Structure exponent, when unambiguous.
    pub fn q(self) -> Option<u32> {
        match self {
            Classification::Determined(s) => Some(s.q()),
            Classification::Ambiguous(..) => None,
        }
    }
}

/// Sup-norm threshold under which the gradient potential counts as vanishing.
pub const VANISHING_GRADIENT_TOL: f64 = 1e-8;

/// Structure class from the regularity of `Phi` and whether `G'[mu*]`
/// vanishes; when the minimizer is known the declared tag is checked
/// numerically and a disagreement is reported rather than resolved.
pub fn classify_setting(problem: &Problem) -> Result<Classification> {
    let declared = problem.setting;
    let Some(f_star) = problem.mu_star_density() else {
        return Ok(Classification::Determined(declared));
    };
    let grad = problem.grad_potential(&f_star)?;
    let sup = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let measured = Setting::from_parts(problem.smooth.regularity(), sup <= VANISHING_GRADIENT_TOL);
    let declared_regularity = match declared {
        Setting::I | Setting::IStar => PhiRegularity::Lipschitz,
        Setting::II | Setting::IIStar => PhiRegularity::GradientLipschitz,
    };
    if measured == declared && declared_regularity == problem.smooth.regularity() {
        Ok(Classification::Determined(declared))
    } else {
        Ok(Classification::Ambiguous(declared, measured))
    }
}

/// Least-squares fit `log y = slope log x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("log-log fit needs at least two paired points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("log-log fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit {
        slope,
        intercept: my - slope * mx,
        r2,
        n: lx.len(),
    })
}

/// Iteration window of a rate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub k_lo: usize,
    /// Inclusive upper end; the whole trace when absent.
    pub k_hi: Option<usize>,
    /// Gaps at or below this value end the window (reference precision).
    pub gap_floor: f64,
    /// Fit `gap / log k` instead of `gap`.
    pub strip_log: bool,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            k_lo: 1000,
            k_hi: None,
            gap_floor: 0.0,
            strip_log: false,
        }
    }
}

/// Minimum number of rows a rate fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub r2: f64,
    pub n: usize,
    pub k_first: usize,
    pub k_last: usize,
    /// The window was cut short by a gap at or below the floor.
    pub truncated: bool,
}

/// Least-squares slope of `log gap` (or `log(gap / log k)`) against `log k`.
pub fn fit_rate(trace: &Trace, window: &FitWindow) -> Result<RateFit> {
    let mut ks = Vec::new();
    let mut ys = Vec::new();
    let mut truncated = false;
    for row in &trace.rows {
        if row.k < window.k_lo.max(2) || window.k_hi.is_some_and(|hi| row.k > hi) {
            continue;
        }
        let gap = row
            .gap
            .ok_or_else(|| Error::invalid("trace has no optimality gap (unknown optimal value)"))?;
        if !(gap > window.gap_floor) {
            truncated = true;
            break;
        }
        let k = row.k as f64;
        ks.push(k);
        ys.push(if window.strip_log { gap / k.ln() } else { gap });
    }
    if ks.len() < MIN_FIT_POINTS {
        return Err(Error::invalid(format!(
            "only {} usable rows in the fit window starting at k = {}{}",
            ks.len(),
            window.k_lo,
            if truncated { " (gap reached the reference precision)" } else { "" }
        )));
    }
    let fit = fit_loglog(&ks, &ys)?;
    Ok(RateFit {
        slope: fit.slope,
        r2: fit.r2,
        n: fit.n,
        k_first: ks[0] as usize,
        k_last: *ks.last().unwrap() as usize,
        truncated,
    })
}

/// Last iteration up to which the gaps of `coarse` stay within `rel_tol` of
/// those of `fine` (the same run on a refined grid), both recorded on the same
/// schedule. Past it the coarse trace measures its discretization, not the
/// method. `None` when they already disagree at the first shared row.
pub fn resolved_until(coarse: &Trace, fine: &Trace, rel_tol: f64) -> Result<Option<usize>> {
    let mut last = None;
    let mut fine_rows = fine.rows.iter().peekable();
    for row in &coarse.rows {
        while fine_rows.peek().is_some_and(|r| r.k < row.k) {
            fine_rows.next();
        }
        let Some(other) = fine_rows.peek().filter(|r| r.k == row.k) else {
            continue;
        };
        let (Some(a), Some(b)) = (row.gap, other.gap) else {
            return Err(Error::invalid("refinement check needs traces with optimality gaps"));
        };
        if !((a - b).abs() <= rel_tol * b.abs()) {
            break;
        }
        last = Some(row.k);
    }
    Ok(last)
}
