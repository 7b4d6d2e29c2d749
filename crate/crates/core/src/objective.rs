//! Composite objectives `F(f) = R(sum_j w_j f_j Phi(theta_j)) + H(f)` over
//! densities on a grid, and the library of concrete problems.
//!
//! The smooth part is stored as a dense `m x M` table of feature vectors
//! `Phi(theta_j)` in `R^M` (point-major) together with the outer function `R`.
//! Its gradient potential is `G'[f](theta) = <grad R(z), Phi(theta)>`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid};

/// Feasibility slack used when deciding whether an indicator term is finite.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Outer convex function `R` on the feature space `R^M`.
#[derive(Debug, Clone, PartialEq)]
pub enum Outer {
    /// `R(z) = <coef, z>`.
    Linear { coef: Vec<f64> },
    /// `R(z) = scale * ||z - target||^2`.
    Quadratic { target: Vec<f64>, scale: f64 },
}

impl Outer {
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            Outer::Linear { coef } => coef.iter().zip(z).map(|(c, x)| c * x).sum(),
            Outer::Quadratic { target, scale } => {
                scale * z.iter().zip(target).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            }
        }
    }

    pub fn grad_into(&self, z: &[f64], out: &mut [f64]) {
        match self {
            Outer::Linear { coef } => out.copy_from_slice(coef),
            Outer::Quadratic { target, scale } => {
                for ((o, x), y) in out.iter_mut().zip(z).zip(target) {
                    *o = 2.0 * scale * (x - y);
                }
            }
        }
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.grad_into(z, &mut out);
        out
    }

    /// Lipschitz constant of `grad R`.
    pub fn lip(&self) -> f64 {
        match self {
            Outer::Linear { .. } => 0.0,
            Outer::Quadratic { scale, .. } => 2.0 * scale,
        }
    }
}

/// Regularity class of `theta -> Phi(theta)`, the column axis of the rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiRegularity {
    Lipschitz,
    GradientLipschitz,
}

/// The smooth term `G(f) = R(z(f))`.
#[derive(Debug, Clone)]
pub struct SmoothObjective {
    features: Vec<f64>,
    feature_dim: usize,
    outer: Outer,
    phi_sup: f64,
    regularity: PhiRegularity,
}

impl SmoothObjective {
    /// `features` holds `Phi(theta_j)` for each grid point, point-major.
    pub fn new(
        features: Vec<f64>,
        feature_dim: usize,
        outer: Outer,
        regularity: PhiRegularity,
    ) -> Result<Self> {
        if feature_dim == 0 || features.len() % feature_dim != 0 {
            return Err(Error::invalid("feature table does not match feature dimension"));
        }
        let phi_sup = features
            .chunks_exact(feature_dim)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Self {
            features,
            feature_dim,
            outer,
            phi_sup,
            regularity,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_points(&self) -> usize {
        self.features.len() / self.feature_dim
    }

    pub fn feature(&self, j: usize) -> &[f64] {
        &self.features[j * self.feature_dim..(j + 1) * self.feature_dim]
    }

    pub fn outer(&self) -> &Outer {
        &self.outer
    }

    /// `max_j ||Phi(theta_j)||`.
    pub fn phi_sup(&self) -> f64 {
        self.phi_sup
    }

    pub fn lip_outer(&self) -> f64 {
        self.outer.lip()
    }

    pub fn regularity(&self) -> PhiRegularity {
        self.regularity
    }

    /// `z = sum_j w_j f_j Phi(theta_j)`.
    pub fn feature_map_into(&self, weights: &[f64], f: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|x| *x = 0.0);
        for ((phi, w), fj) in self.features.chunks_exact(self.feature_dim).zip(weights).zip(f) {
            let c = w * fj;
            if c != 0.0 {
                for (zi, p) in z.iter_mut().zip(phi) {
                    *zi += c * p;
                }
            }
        }
    }

    pub fn feature_map(&self, weights: &[f64], f: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.feature_dim];
        self.feature_map_into(weights, f, &mut z);
        z
    }

    /// `theta_j -> <a, Phi(theta_j)>` for a dual vector `a`.
    pub fn pair_into(&self, a: &[f64], out: &mut [f64]) {
        for (o, phi) in out.iter_mut().zip(self.features.chunks_exact(self.feature_dim)) {
            *o = phi.iter().zip(a).map(|(p, x)| p * x).sum();
        }
    }

    pub fn value(&self, weights: &[f64], f: &[f64]) -> f64 {
        self.outer.value(&self.feature_map(weights, f))
    }

    /// Gradient potential, reusing a scratch buffer for `z`/`grad R(z)`.
    pub fn grad_potential_into(&self, weights: &[f64], f: &[f64], scratch: &mut Workspace, out: &mut [f64]) {
        self.feature_map_into(weights, f, &mut scratch.z);
        self.outer.grad_into(&scratch.z, &mut scratch.dual);
        self.pair_into(&scratch.dual, out);
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            z: vec![0.0; self.feature_dim],
            dual: vec![0.0; self.feature_dim],
        }
    }
}

/// Scratch space for repeated gradient evaluations.
#[derive(Debug, Clone)]
pub struct Workspace {
    z: Vec<f64>,
    dual: Vec<f64>,
}

/// The admissible nonsmooth terms `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// Nonnegativity constraint plus `lambda ||f||_1`.
    NonnegPlusTv { lambda: f64 },
    /// Probability constraint.
    Simplex,
    /// `lambda ||f||_1`.
    Tv { lambda: f64 },
    /// Constraint `||f||_1 <= radius`.
    TvBall { radius: f64 },
}

impl Regularizer {
    /// Amount by which `f` violates the constraint part of `H` (0 if feasible).
    pub fn violation(&self, grid: &Grid, f: &[f64]) -> f64 {
        let neg = || f.iter().fold(0.0f64, |acc, &x| acc.max(-x));
        match *self {
            Regularizer::NonnegPlusTv { .. } => neg(),
            Regularizer::Simplex => neg().max((grid.integrate(f) - 1.0).abs()),
            Regularizer::Tv { .. } => 0.0,
            Regularizer::TvBall { radius } => (grid.l1_norm(f) - radius).max(0.0),
        }
    }

    /// `H(f)`, `+inf` when a constraint is violated beyond [`FEASIBILITY_TOL`].
    pub fn value(&self, grid: &Grid, f: &[f64]) -> f64 {
        if self.violation(grid, f) > FEASIBILITY_TOL {
            return f64::INFINITY;
        }
        match *self {
            Regularizer::NonnegPlusTv { lambda } | Regularizer::Tv { lambda } => {
                lambda * grid.l1_norm(f)
            }
            Regularizer::Simplex | Regularizer::TvBall { .. } => 0.0,
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Regularizer::NonnegPlusTv { lambda } | Regularizer::Tv { lambda } => lambda,
            _ => 0.0,
        }
    }

    /// Whether `H` forces nonnegative densities.
    pub fn forces_nonneg(&self) -> bool {
        matches!(self, Regularizer::NonnegPlusTv { .. } | Regularizer::Simplex)
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularizer::NonnegPlusTv { lambda } => write!(f, "nonneg_tv:{lambda}"),
            Regularizer::Simplex => write!(f, "simplex"),
            Regularizer::Tv { lambda } => write!(f, "tv:{lambda}"),
            Regularizer::TvBall { radius } => write!(f, "tv_ball:{radius}"),
        }
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownToken {
            token: s.to_string(),
            expected: "nonneg, nonneg_tv:<l>, simplex, tv:<l>, tv_ball:<K>".into(),
        };
        let num = |v: &str| -> Result<f64> {
            let x: f64 = v.parse().map_err(|_| unknown())?;
            if x.is_finite() && x >= 0.0 {
                Ok(x)
            } else {
                Err(unknown())
            }
        };
        match s.split_once(':') {
            None if s == "nonneg" => Ok(Regularizer::NonnegPlusTv { lambda: 0.0 }),
            None if s == "simplex" => Ok(Regularizer::Simplex),
            Some(("nonneg_tv", v)) => Ok(Regularizer::NonnegPlusTv { lambda: num(v)? }),
            Some(("tv", v)) => Ok(Regularizer::Tv { lambda: num(v)? }),
            Some(("tv_ball", v)) => {
                let radius = num(v)?;
                if radius == 0.0 {
                    return Err(unknown());
                }
                Ok(Regularizer::TvBall { radius })
            }
            _ => Err(unknown()),
        }
    }
}

/// Regularity setting of a problem, which fixes the structure exponent `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    /// `Phi` Lipschitz, gradient potential arbitrary at the optimum.
    I,
    /// `Phi` Lipschitz, gradient potential vanishing at the optimum.
    IStar,
    /// `grad Phi` Lipschitz, gradient potential arbitrary.
    II,
    /// `grad Phi` Lipschitz, gradient potential vanishing.
    IIStar,
}

impl Setting {
    pub fn q(self) -> u32 {
        match self {
            Setting::I => 1,
            Setting::IStar | Setting::II => 2,
            Setting::IIStar => 4,
        }
    }

    pub fn from_parts(regularity: PhiRegularity, vanishing_gradient: bool) -> Self {
        match (regularity, vanishing_gradient) {
            (PhiRegularity::Lipschitz, false) => Setting::I,
            (PhiRegularity::Lipschitz, true) => Setting::IStar,
            (PhiRegularity::GradientLipschitz, false) => Setting::II,
            (PhiRegularity::GradientLipschitz, true) => Setting::IIStar,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::I => "I",
            Setting::IStar => "I*",
            Setting::II => "II",
            Setting::IIStar => "II*",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(Setting::I),
            "I*" => Ok(Setting::IStar),
            "II" => Ok(Setting::II),
            "II*" => Ok(Setting::IIStar),
            _ => Err(Error::UnknownToken {
                token: s.into(),
                expected: "I, I*, II, II*".into(),
            }),
        }
    }
}

/// A point mass of the (known) minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// A lower bound on `G` of the form `scale * (z[index] - target)^2` where
/// `z[index] = integral of f`, which makes nonnegative problems coercive in L1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassCoercivity {
    pub index: usize,
    pub target: f64,
    pub scale: f64,
}

/// A fully specified problem instance on a grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub grid: Grid,
    pub smooth: SmoothObjective,
    pub reg: Regularizer,
    /// Known optimal value on the grid.
    pub inf_value: Option<f64>,
    pub mu_star: Option<Vec<Atom>>,
    pub setting: Setting,
    pub coercivity: Option<MassCoercivity>,
}

impl Problem {
    fn check(&self, f: &[f64]) -> Result<()> {
        self.grid.check_len(&self.name, f.len())?;
        if self.smooth.n_points() != self.grid.len() {
            return Err(Error::GridMismatch {
                what: format!("{} features", self.name),
                expected: self.grid.len(),
                got: self.smooth.n_points(),
            });
        }
        Ok(())
    }

    pub fn eval_g(&self, f: &[f64]) -> Result<f64> {
        self.check(f)?;
        Ok(self.smooth.value(self.grid.weights(), f))
    }

    /// `F = G + H`; `+inf` for inputs violating an indicator term.
    pub fn eval_f(&self, f: &[f64]) -> Result<f64> {
        Ok(self.eval_g(f)? + self.reg.value(&self.grid, f))
    }

    pub fn grad_potential(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        let mut out = vec![0.0; f.len()];
        let mut ws = self.smooth.workspace();
        self.smooth.grad_potential_into(self.grid.weights(), f, &mut ws, &mut out);
        Ok(out)
    }

    /// Grid density representing `mu_star` (discrete Diracs at nearest points).
    pub fn mu_star_density(&self) -> Option<Vec<f64>> {
        let atoms = self.mu_star.as_ref()?;
        let mut f = vec![0.0; self.grid.len()];
        for atom in atoms {
            let j = self.grid.nearest(&atom.point);
            f[j] += atom.weight / self.grid.weights()[j];
        }
        Some(f)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

/// Unit-mass discrete Dirac at the grid point nearest to `point`.
pub fn dirac_density(grid: &Grid, point: &[f64]) -> Vec<f64> {
    let j = grid.nearest(point);
    let mut f = vec![0.0; grid.len()];
    f[j] = 1.0 / grid.weights()[j];
    f
}

/// Real Fourier features on one axis whose inner products reproduce the
/// order-2 Dirichlet kernel `1 + 2 cos(2 pi t) + 2 cos(4 pi t)`.
fn dirichlet_axis_features(t: f64) -> [f64; 5] {
    let a = 2.0 * PI * t;
    [
        1.0,
        SQRT_2 * a.cos(),
        SQRT_2 * a.sin(),
        SQRT_2 * (2.0 * a).cos(),
        SQRT_2 * (2.0 * a).sin(),
    ]
}

/// Tensor-product features on `T^d`, so `<Phi(a), Phi(b)> = phi(a - b)`.
pub fn dirichlet_features(point: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0];
    for &t in point {
        let axis = dirichlet_axis_features(t);
        out = out
            .iter()
            .flat_map(|&x| axis.iter().map(move |&y| x * y))
            .collect();
    }
    out
}

/// Order-2 Dirichlet kernel on `T^d`, `prod_i sum_{|k| <= 2} exp(2 i pi k t_i)`.
pub fn dirichlet_kernel(point: &[f64]) -> f64 {
    point
        .iter()
        .map(|&t| 1.0 + 2.0 * (2.0 * PI * t).cos() + 2.0 * (4.0 * PI * t).cos())
        .product()
}

/// Sparse deconvolution with the order-2 Dirichlet kernel and target
/// `y* = phi(. - 0)`, so that `mu* = a delta_0`.
///
/// `R(z) = ||z - y*||^2` in `L2(tau)`. Because the kernel is a trigonometric
/// polynomial, the convolution is stored through its `5^d` real Fourier
/// coordinates; for lattices with at least 5 points per axis this coincides
/// exactly with the residual measured on the grid.
pub fn deconv_problem(grid: &Grid, reg: Regularizer) -> Result<Problem> {
    let dim = match grid.domain() {
        Domain::Torus { dim } if dim <= 2 => dim,
        other => {
            return Err(Error::invalid(format!(
                "deconvolution needs a 1D or 2D torus grid (got {other:?})"
            )))
        }
    };
    if grid.per_axis() < 5 {
        return Err(Error::invalid("deconvolution needs at least 5 points per axis"));
    }
    let feature_dim = 5usize.pow(dim as u32);
    let features: Vec<f64> = grid.points().flat_map(dirichlet_features).collect();
    let target = dirichlet_features(&vec![0.0; dim]);
    let smooth = SmoothObjective::new(
        features,
        feature_dim,
        Outer::Quadratic { target, scale: 1.0 },
        PhiRegularity::GradientLipschitz,
    )?;

    // F(a delta_0) = c (a - 1)^2 + lambda |a| with c = phi(0) = 5^d; since
    // |phi| < phi(0) away from 0, a delta_0 is optimal whenever the sign and
    // norm constraints allow it.
    let c = feature_dim as f64;
    let (amplitude, vanishing) = match reg {
        Regularizer::Simplex => (1.0, true),
        Regularizer::NonnegPlusTv { lambda } | Regularizer::Tv { lambda } => {
            ((1.0 - lambda / (2.0 * c)).max(0.0), lambda == 0.0)
        }
        Regularizer::TvBall { radius } => (radius.min(1.0), radius >= 1.0),
    };
    let inf_value = c * (amplitude - 1.0).powi(2) + reg.lambda() * amplitude;
    let origin = vec![0.0; dim];
    Ok(Problem {
        name: format!("deconv{dim}d"),
        grid: grid.clone(),
        smooth,
        reg,
        inf_value: Some(inf_value),
        mu_star: Some(vec![Atom {
            point: origin,
            weight: amplitude,
        }]),
        setting: Setting::from_parts(PhiRegularity::GradientLipschitz, vanishing),
        coercivity: Some(MassCoercivity {
            index: 0,
            target: 1.0,
            scale: 1.0,
        }),
    })
}

/// Inner radius of the region where the smooth lower-bound potential is `r^2`.
pub const SMOOTH_BLEND_START: f64 = 0.4;
/// Radius beyond which the smooth lower-bound potential is constant.
pub const SMOOTH_BLEND_END: f64 = 0.5;
/// Constant value of the smooth potential outside the blend region.
pub const SMOOTH_PLATEAU: f64 = 0.26;

/// `r^2` near the origin, blended with a quintic smootherstep into a constant
/// plateau above `1/4`; twice continuously differentiable.
pub fn smooth_sq_dist(r: f64) -> f64 {
    if r <= SMOOTH_BLEND_START {
        r * r
    } else if r >= SMOOTH_BLEND_END {
        SMOOTH_PLATEAU
    } else {
        let t = (r - SMOOTH_BLEND_START) / (SMOOTH_BLEND_END - SMOOTH_BLEND_START);
        let s = t * t * t * (t * (6.0 * t - 15.0) + 10.0);
        (1.0 - s) * r * r + s * SMOOTH_PLATEAU
    }
}

/// Lower-bound constructions: `mu* = delta_0` under a probability constraint,
/// with a linear (`I`, `II`) or squared (`I*`, `II*`) smooth term built on the
/// distance to the origin (`I`, `I*`) or its smoothed square (`II`, `II*`).
pub fn lb_problem(grid: &Grid, setting: Setting) -> Result<Problem> {
    if !grid.domain().is_torus() {
        return Err(Error::invalid("lower-bound problems are defined on torus grids"));
    }
    let origin = vec![0.0; grid.dim()];
    let dists = grid.distances_from(&origin);
    let (features, regularity): (Vec<f64>, _) = match setting {
        Setting::I | Setting::IStar => (dists, PhiRegularity::Lipschitz),
        Setting::II | Setting::IIStar => (
            dists.into_iter().map(smooth_sq_dist).collect(),
            PhiRegularity::GradientLipschitz,
        ),
    };
    let outer = match setting {
        Setting::I | Setting::II => Outer::Linear { coef: vec![1.0] },
        Setting::IStar | Setting::IIStar => Outer::Quadratic {
            target: vec![0.0],
            scale: 0.5,
        },
    };
    let smooth = SmoothObjective::new(features, 1, outer, regularity)?;
    let j0 = grid.nearest(&origin);
    let inf_value = smooth.outer().value(smooth.feature(j0));
    Ok(Problem {
        name: format!("lb:{setting}"),
        grid: grid.clone(),
        smooth,
        reg: Regularizer::Simplex,
        inf_value: Some(inf_value),
        mu_star: Some(vec![Atom {
            point: origin,
            weight: 1.0,
        }]),
        setting,
        coercivity: None,
    })
}

/// Default `lambda` for the ReLU experiment.
pub const DEFAULT_RELU_LAMBDA: f64 = 0.05;
/// Default number of samples for the ReLU experiment.
pub const DEFAULT_RELU_SAMPLES: usize = 10;
/// Default seed for the ReLU label noise.
pub const DEFAULT_RELU_SEED: u64 = 0;

/// Training data for the two-layer ReLU regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ReluData {
    /// `x_i` equispaced on `[-1, 1]`, `y_i = |x_i| - 1/2 + Z_i`, `Z_i ~ U[-1, 1]`.
    pub fn generate(n: usize, seed: u64) -> Self {
        let x: Vec<f64> = if n == 1 {
            vec![0.0]
        } else {
            (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = x.iter().map(|xi| xi.abs() - 0.5 + rng.gen_range(-1.0..=1.0)).collect();
        Self { x, y }
    }
}

/// ReLU feature of neuron `theta` on sample `x`: `(x cos theta + sin theta)_+`.
pub fn relu_feature(x: f64, theta: f64) -> f64 {
    (x * theta.cos() + theta.sin()).max(0.0)
}

/// Network output `x -> sum_j w_j f_j relu(x; theta_j)` of the density `f`.
pub fn relu_regressor(grid: &Grid, f: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
    if grid.domain() != Domain::Circle {
        return Err(Error::invalid("the ReLU regressor needs a circle grid"));
    }
    grid.check_len("density", f.len())?;
    Ok(xs
        .iter()
        .map(|&x| {
            grid.points()
                .zip(grid.weights())
                .zip(f)
                .map(|((p, w), fj)| w * fj * relu_feature(x, p[0]))
                .sum()
        })
        .collect())
}

/// Two-layer ReLU network regression on the circle of neuron directions with
/// square loss `R(z) = 1/(2n) ||z - y||^2` and `H = lambda ||mu||`.
pub fn relu_problem(grid: &Grid, n_samples: usize, lambda: f64, seed: u64) -> Result<Problem> {
    if grid.domain() != Domain::Circle {
        return Err(Error::invalid("the ReLU problem is defined on a circle grid"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("the ReLU problem needs at least one sample"));
    }
    let data = ReluData::generate(n_samples, seed);
    let features: Vec<f64> = grid
        .points()
        .flat_map(|p| data.x.iter().map(move |&x| relu_feature(x, p[0])))
        .collect();
    let smooth = SmoothObjective::new(
        features,
        n_samples,
        Outer::Quadratic {
            target: data.y,
            scale: 0.5 / n_samples as f64,
        },
        PhiRegularity::Lipschitz,
    )?;
    Ok(Problem {
        name: "relu".into(),
        grid: grid.clone(),
        smooth,
        reg: Regularizer::Tv { lambda },
        inf_value: None,
        mu_star: None,
        setting: Setting::I,
        coercivity: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::geodesic_dist;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    fn random_density(rng: &mut ChaCha8Rng, m: usize, signed: bool) -> Vec<f64> {
        (0..m)
            .map(|_| if signed { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.0..2.0) })
            .collect()
    }

    fn all_problems() -> Vec<Problem> {
        let t1 = Grid::torus(1, 64).unwrap();
        let t2 = Grid::torus(2, 12).unwrap();
        let mut v = vec![
            deconv_problem(&t1, Regularizer::NonnegPlusTv { lambda: 0.0 }).unwrap(),
            deconv_problem(&t1, Regularizer::Tv { lambda: 0.05 }).unwrap(),
            deconv_problem(&t2, Regularizer::Simplex).unwrap(),
            relu_problem(&Grid::circle(200).unwrap(), 10, 0.05, 3).unwrap(),
        ];
        for s in [Setting::I, Setting::IStar, Setting::II, Setting::IIStar] {
            v.push(lb_problem(&t1, s).unwrap());
        }
        v
    }

    #[test]
    fn linear_objective_at_minimizer() {
        let g = Grid::torus(1, 50).unwrap();
        let p = lb_problem(&g, Setting::I).unwrap();
        let f = dirac_density(&g, &[0.0]);
        assert_eq!(p.eval_f(&f).unwrap(), 0.0);
        assert_eq!(p.inf_value, Some(0.0));
        // Linear G: gradient potential is Phi whatever f is.
        let phi: Vec<f64> = g.distances_from(&[0.0]);
        assert_eq!(p.grad_potential(&vec![1.0; 50]).unwrap(), phi);
        assert_eq!(p.grad_potential(&f).unwrap(), phi);
    }

    #[test]
    fn quadratic_objective_uniform_density() {
        // Closed form: the integral of the wrapped distance over T^1 is 1/4.
        let g = Grid::torus(1, 300).unwrap();
        let p = lb_problem(&g, Setting::IStar).unwrap();
        let ones = vec![1.0; 300];
        let integral: f64 = g.distances_from(&[0.0]).iter().sum::<f64>() / 300.0;
        assert_abs_diff_eq!(integral, 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(p.eval_g(&ones).unwrap(), 1.0 / 32.0, epsilon = 1e-14);
        // Chain rule: G'[f] = (int Phi f) Phi.
        let grad = p.grad_potential(&ones).unwrap();
        for (gj, pj) in grad.iter().zip(g.distances_from(&[0.0])) {
            assert_abs_diff_eq!(*gj, 0.25 * pj, epsilon = 1e-14);
        }
        // Vanishing gradient at the minimizer.
        let dirac = dirac_density(&g, &[0.0]);
        let grad = p.grad_potential(&dirac).unwrap();
        assert!(grad.iter().all(|x| x.abs() <= 1e-10));
    }

    #[test]
    fn setting_ii_construction() {
        assert_eq!(smooth_sq_dist(0.0), 0.0);
        assert_eq!(smooth_sq_dist(0.3), 0.09);
        for k in 0..=100 {
            let r = 0.4 + 0.3 * k as f64 / 100.0;
            assert!(smooth_sq_dist(r) >= 0.16 - 1e-15);
            if r >= 0.5 {
                assert!(smooth_sq_dist(r) > 0.25);
            }
        }
        // C^1 and C^2 continuity at both blend ends via one-sided differences.
        for r0 in [SMOOTH_BLEND_START, SMOOTH_BLEND_END] {
            let h = 1e-5;
            let d_left = (smooth_sq_dist(r0) - smooth_sq_dist(r0 - h)) / h;
            let d_right = (smooth_sq_dist(r0 + h) - smooth_sq_dist(r0)) / h;
            assert_abs_diff_eq!(d_left, d_right, epsilon = 1e-3);
            let h = 1e-6;
            let dd_left = (smooth_sq_dist(r0) - 2.0 * smooth_sq_dist(r0 - h) + smooth_sq_dist(r0 - 2.0 * h)) / (h * h);
            let dd_right = (smooth_sq_dist(r0 + 2.0 * h) - 2.0 * smooth_sq_dist(r0 + h) + smooth_sq_dist(r0)) / (h * h);
            assert_abs_diff_eq!(dd_left, dd_right, epsilon = 0.02);
        }
        let g = Grid::torus(1, 100).unwrap();
        let p = lb_problem(&g, Setting::IIStar).unwrap();
        let grad = p.grad_potential(&dirac_density(&g, &[0.0])).unwrap();
        assert!(grad.iter().all(|x| x.abs() <= 1e-10));
    }

    #[test]
    fn lb_setting_i_lower_bound_argument() {
        // Half the mass outside B_eps(0) forces F >= eps / 2.
        let g = Grid::torus(1, 200).unwrap();
        let p = lb_problem(&g, Setting::I).unwrap();
        let eps = 0.1;
        let mut f = vec![0.0; 200];
        f[0] = 0.5 * 200.0;
        f[60] = 0.5 * 200.0;
        assert!(p.eval_f(&f).unwrap() >= eps / 2.0);
    }

    #[test]
    fn dirichlet_kernel_facts() {
        assert_abs_diff_eq!(dirichlet_kernel(&[0.0]), 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(dirichlet_kernel(&[0.0, 0.0]), 25.0, epsilon = 1e-13);
        for d in [1usize, 2] {
            let g = Grid::torus(d, 30).unwrap();
            let mean: f64 = g.points().map(dirichlet_kernel).sum::<f64>() / g.len() as f64;
            assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
        }
        for (a, b) in [(0.13, 0.71), (0.5, 0.0), (0.9, 0.33)] {
            let fa = dirichlet_features(&[a]);
            let fb = dirichlet_features(&[b]);
            let ip: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
            assert_abs_diff_eq!(ip, dirichlet_kernel(&[a - b]), epsilon = 1e-13);
        }
    }

    #[test]
    fn deconv_matches_circulant_residual() {
        // Brute force: form (K f)(theta_i) = sum_j w_j phi(theta_i - theta_j) f_j
        // and measure ||K f - y*||^2 in L2(tau_m).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (d, n) in [(1usize, 40usize), (2, 9)] {
            let g = Grid::torus(d, n).unwrap();
            let p = deconv_problem(&g, Regularizer::Tv { lambda: 0.0 }).unwrap();
            let f = random_density(&mut rng, g.len(), true);
            let mut resid = 0.0;
            for (i, pi) in g.points().enumerate() {
                let mut conv = 0.0;
                for (j, pj) in g.points().enumerate() {
                    let diff: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| a - b).collect();
                    conv += g.weights()[j] * dirichlet_kernel(&diff) * f[j];
                }
                let r = conv - dirichlet_kernel(pi);
                resid += g.weights()[i] * r * r;
            }
            assert_relative_eq!(p.eval_g(&f).unwrap(), resid, max_relative = 1e-10);
        }
    }

    #[test]
    fn deconv_constants_and_settings() {
        let g = Grid::torus(1, 300).unwrap();
        let p = deconv_problem(&g, Regularizer::NonnegPlusTv { lambda: 0.0 }).unwrap();
        assert_abs_diff_eq!(p.smooth.phi_sup(), 5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(p.smooth.lip_outer(), 2.0);
        assert_eq!(p.setting, Setting::IIStar);
        assert_eq!(p.inf_value, Some(0.0));
        // The exact density of mu* reaches the infimum on the grid.
        let fstar = p.mu_star_density().unwrap();
        assert!(p.eval_f(&fstar).unwrap().abs() < 1e-12);
        assert!(p.eval_f(&vec![1.0; 300]).unwrap() >= 0.0);

        let lam = 0.05;
        let p = deconv_problem(&g, Regularizer::Tv { lambda: lam }).unwrap();
        assert_eq!(p.setting, Setting::II);
        assert_abs_diff_eq!(p.inf_value.unwrap(), lam - lam * lam / 20.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eval_f(&p.mu_star_density().unwrap()).unwrap(), p.inf_value.unwrap(), epsilon = 1e-12);
        // Dual certificate: |G'[mu*]| <= lambda with equality at the atom.
        let grad = p.grad_potential(&p.mu_star_density().unwrap()).unwrap();
        assert!(grad.iter().all(|x| x.abs() <= lam + 1e-12));
        assert_abs_diff_eq!(grad[0], -lam, epsilon = 1e-12);

        assert!(deconv_problem(&Grid::circle(100).unwrap(), Regularizer::Simplex).is_err());
        assert!(deconv_problem(&Grid::torus(3, 6).unwrap(), Regularizer::Simplex).is_err());
    }

    #[test]
    fn relu_data_and_features() {
        let data = ReluData::generate(10, DEFAULT_RELU_SEED);
        assert_eq!(data.x.len(), 10);
        assert_abs_diff_eq!(data.x[0], -1.0);
        assert_abs_diff_eq!(data.x[1], -7.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(data.x[9], 1.0);
        for (x, y) in data.x.iter().zip(&data.y) {
            let noise = y - (x.abs() - 0.5);
            assert!((-1.0..=1.0).contains(&noise));
        }
        assert_eq!(data, ReluData::generate(10, DEFAULT_RELU_SEED));
        assert_ne!(data.y, ReluData::generate(10, 1).y);

        let g = Grid::circle(400).unwrap();
        let p = relu_problem(&g, 10, 0.05, 0).unwrap();
        assert_eq!(p.setting, Setting::I);
        assert_abs_diff_eq!(p.smooth.lip_outer(), 0.1, epsilon = 1e-15);
        for (j, theta) in g.points().enumerate() {
            for (i, &x) in data.x.iter().enumerate() {
                let pre = x * theta[0].cos() + theta[0].sin();
                let phi = p.smooth.feature(j)[i];
                if pre <= 0.0 {
                    assert_eq!(phi, 0.0);
                } else {
                    assert_eq!(phi, pre);
                }
            }
        }
        // |d/dtheta (x cos + sin)| <= ||[x; 1]|| <= sqrt 2 per sample.
        for (a, b) in [(0.1, 0.2), (1.0, 1.3), (3.0, 3.001)] {
            for &x in &data.x {
                let lip = (relu_feature(x, a) - relu_feature(x, b)).abs() / geodesic_dist(Domain::Circle, &[a], &[b]);
                assert!(lip <= (x * x + 1.0f64).sqrt() + 1e-12);
            }
        }
        assert!(relu_problem(&Grid::torus(1, 10).unwrap(), 10, 0.05, 0).is_err());
    }

    #[test]
    fn infeasible_inputs_report_infinity() {
        let g = Grid::torus(1, 10).unwrap();
        let p = lb_problem(&g, Setting::I).unwrap();
        assert_eq!(p.eval_f(&vec![2.0; 10]).unwrap(), f64::INFINITY);
        assert_abs_diff_eq!(p.reg.violation(&g, &vec![2.0; 10]), 1.0, epsilon = 1e-14);
        assert!(p.eval_f(&vec![1.0; 9]).is_err());
        let ball = Regularizer::TvBall { radius: 1.0 };
        assert_eq!(ball.value(&g, &vec![-1.0; 10]), 0.0);
        assert_eq!(ball.value(&g, &vec![-1.5; 10]), f64::INFINITY);
    }

    #[test]
    fn regularizer_tokens() {
        for tok in ["nonneg_tv:0.1", "simplex", "tv:0.05", "tv_ball:2"] {
            let r: Regularizer = tok.parse().unwrap();
            assert_eq!(r.to_string().parse::<Regularizer>().unwrap(), r);
        }
        assert_eq!("nonneg".parse::<Regularizer>().unwrap(), Regularizer::NonnegPlusTv { lambda: 0.0 });
        assert!("tv_ball:0".parse::<Regularizer>().is_err());
        assert!("tv:-1".parse::<Regularizer>().is_err());
    }

    #[test]
    fn gradient_potential_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in all_problems() {
            let m = p.grid.len();
            let f = random_density(&mut rng, m, true);
            let delta = random_density(&mut rng, m, true);
            let t = 1e-5;
            let plus: Vec<f64> = f.iter().zip(&delta).map(|(a, b)| a + t * b).collect();
            let minus: Vec<f64> = f.iter().zip(&delta).map(|(a, b)| a - t * b).collect();
            let fd = (p.eval_g(&plus).unwrap() - p.eval_g(&minus).unwrap()) / (2.0 * t);
            let grad = p.grad_potential(&f).unwrap();
            let an: f64 = p.grid.weights().iter().zip(&delta).zip(&grad).map(|((w, d), g)| w * d * g).sum();
            assert_relative_eq!(fd, an, max_relative = 1e-5);
        }
    }

    #[test]
    fn smoothness_and_convexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in all_problems() {
            let m = p.grid.len();
            let w = p.grid.weights();
            let lip = p.smooth.phi_sup().powi(2) * p.smooth.lip_outer();
            for _ in 0..20 {
                let f = random_density(&mut rng, m, true);
                let g = random_density(&mut rng, m, true);
                let gf = p.eval_g(&f).unwrap();
                let gg = p.eval_g(&g).unwrap();
                let grad_f = p.grad_potential(&f).unwrap();
                let grad_g = p.grad_potential(&g).unwrap();
                let lin: f64 = w.iter().zip(&grad_f).zip(f.iter().zip(&g)).map(|((wj, d), (a, b))| wj * d * (b - a)).sum();
                let bregman = gg - gf - lin;
                let l1 = p.grid.l1_norm(&f.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>());
                let slack = 1e-12 * (1.0 + gf.abs() + gg.abs());
                assert!(bregman >= -slack, "{}: {bregman}", p.name);
                assert!(bregman <= 0.5 * lip * l1 * l1 + slack, "{}", p.name);
                let mid: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 0.5 * (a + b)).collect();
                assert!(p.eval_g(&mid).unwrap() <= 0.5 * (gf + gg) + slack);
                // Lipschitz continuity of the gradient potential in sup norm.
                let sup = grad_f.iter().zip(&grad_g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(sup <= lip * l1 + slack, "{}", p.name);
            }
        }
    }

    #[test]
    fn regressor_matches_feature_map() {
        let grid = Grid::circle(100).unwrap();
        let p = relu_problem(&grid, 10, 0.05, 0).unwrap();
        let f: Vec<f64> = (0..100).map(|j| (j as f64 * 0.37).sin()).collect();
        let z = p.smooth.feature_map(grid.weights(), &f);
        let data = ReluData::generate(10, 0);
        let out = relu_regressor(&grid, &f, &data.x).unwrap();
        for (a, b) in z.iter().zip(&out) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
        assert!(relu_regressor(&Grid::torus(1, 100).unwrap(), &f, &[0.0]).is_err());
    }
}
