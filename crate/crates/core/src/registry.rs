//! Problem tokens and their default grids and regularizers.

use std::fmt;
use std::str::FromStr;

use crate::dgf::{Dgf, DEFAULT_HYP_BETA};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::objective::{
    deconv_problem, lb_problem, relu_problem, Problem, Regularizer, Setting, DEFAULT_RELU_LAMBDA,
    DEFAULT_RELU_SAMPLES, DEFAULT_RELU_SEED,
};
use crate::solver::{run_apgm, Method, RecordSchedule, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Deconv { dim: usize },
    LowerBound(Setting),
    Relu,
}

/// Every token accepted by [`ProblemKind::from_str`].
pub const PROBLEM_TOKENS: [&str; 7] = ["deconv1d", "deconv2d", "lb:I", "lb:I*", "lb:II", "lb:II*", "relu"];

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemKind::Deconv { dim } => write!(f, "deconv{dim}d"),
            ProblemKind::LowerBound(s) => write!(f, "lb:{s}"),
            ProblemKind::Relu => f.write_str("relu"),
        }
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deconv1d" => Ok(ProblemKind::Deconv { dim: 1 }),
            "deconv2d" => Ok(ProblemKind::Deconv { dim: 2 }),
            "relu" => Ok(ProblemKind::Relu),
            _ => match s.strip_prefix("lb:") {
                Some(tag) => Ok(ProblemKind::LowerBound(tag.parse()?)),
                None => Err(Error::UnknownToken {
                    token: s.into(),
                    expected: PROBLEM_TOKENS.join(", "),
                }),
            },
        }
    }
}

impl ProblemKind {
    /// Points per axis (deconvolution, lower bounds) or on the circle (ReLU).
    pub fn default_grid_n(self) -> usize {
        match self {
            ProblemKind::Deconv { dim: 1 } => 300,
            ProblemKind::Deconv { .. } => 60,
            ProblemKind::LowerBound(_) => 20_000,
            ProblemKind::Relu => 2000,
        }
    }

    pub fn default_reg(self) -> Regularizer {
        match self {
            ProblemKind::Deconv { .. } => Regularizer::NonnegPlusTv { lambda: 0.0 },
            ProblemKind::LowerBound(_) => Regularizer::Simplex,
            ProblemKind::Relu => Regularizer::Tv {
                lambda: DEFAULT_RELU_LAMBDA,
            },
        }
    }
}

/// Construction parameters; `None` fields take the problem's default.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub grid_n: Option<usize>,
    pub reg: Option<Regularizer>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            grid_n: None,
            reg: None,
            samples: DEFAULT_RELU_SAMPLES,
            seed: DEFAULT_RELU_SEED,
        }
    }
}

pub fn build_problem(kind: ProblemKind, params: &ProblemParams) -> Result<Problem> {
    let n = params.grid_n.unwrap_or(kind.default_grid_n());
    match kind {
        ProblemKind::Deconv { dim } => {
            deconv_problem(&Grid::torus(dim, n)?, params.reg.unwrap_or(kind.default_reg()))
        }
        ProblemKind::LowerBound(setting) => {
            if params.reg.is_some_and(|r| r != Regularizer::Simplex) {
                return Err(Error::invalid("lower-bound problems use the probability constraint"));
            }
            lb_problem(&Grid::torus(1, n)?, setting)
        }
        ProblemKind::Relu => {
            let lambda = match params.reg {
                None => DEFAULT_RELU_LAMBDA,
                Some(Regularizer::Tv { lambda }) => lambda,
                Some(other) => {
                    return Err(Error::invalid(format!("the ReLU problem uses tv:<lambda>, not {other}")))
                }
            };
            relu_problem(&Grid::circle(n)?, params.samples, lambda, params.seed)
        }
    }
}

/// Optimal value estimated by a long accelerated run with the hyperbolic
/// entropy (smallest recorded objective).
pub fn estimate_inf(problem: &Problem, iters: usize) -> Result<f64> {
    let dgf = Dgf::hyperbolic(DEFAULT_HYP_BETA)?;
    let f0 = vec![1.0; problem.grid.len()];
    let config = SolverConfig::new(Method::Apgm, iters).with_record(RecordSchedule::Every((iters / 10_000).max(1)));
    let trace = run_apgm(problem, &dgf, &f0, &config)?;
    if let Some(reason) = &trace.aborted {
        return Err(Error::invalid(format!("reference run aborted: {reason}")));
    }
    Ok(trace.rows.iter().map(|r| r.f_value).fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_round_trip() {
        for tok in PROBLEM_TOKENS {
            let kind: ProblemKind = tok.parse().unwrap();
            assert_eq!(kind.to_string(), tok);
        }
        assert!("lb:III".parse::<ProblemKind>().is_err());
        assert!("deconv3d".parse::<ProblemKind>().is_err());
    }

    #[test]
    fn builds_with_defaults_and_overrides() {
        let small = ProblemParams { grid_n: Some(40), ..ProblemParams::default() };
        for tok in PROBLEM_TOKENS {
            let p = build_problem(tok.parse().unwrap(), &small).unwrap();
            assert_eq!(p.name, tok);
        }
        let p = build_problem("deconv2d".parse().unwrap(), &ProblemParams { grid_n: Some(10), ..ProblemParams::default() }).unwrap();
        assert_eq!(p.grid.len(), 100);
        let bad = ProblemParams { reg: Some(Regularizer::Tv { lambda: 0.1 }), ..small.clone() };
        assert!(build_problem("lb:I".parse().unwrap(), &bad).is_err());
        let bad = ProblemParams { reg: Some(Regularizer::Simplex), ..small };
        assert!(build_problem(ProblemKind::Relu, &bad).is_err());
    }

    #[test]
    fn reference_value_lower_than_short_runs() {
        let params = ProblemParams { grid_n: Some(200), ..ProblemParams::default() };
        let p = build_problem(ProblemKind::Relu, &params).unwrap();
        let long = estimate_inf(&p, 20_000).unwrap();
        let short = estimate_inf(&p, 200).unwrap();
        assert!(long <= short);
        assert!(long > 0.0);
    }
}
