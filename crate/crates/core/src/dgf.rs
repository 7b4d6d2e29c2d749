//! Distance-generating functions and the Bregman divergences they induce.
//!
//! Three families are supported:
//!
//! * power functions `eta_p(s) = |s|^p / (p (p-1))`, signed domain;
//! * Shannon entropy `eta_ent(s) = s log s - s + 1`, nonnegative domain;
//! * hyperbolic entropy `eta_hyp(s) = s asinh(s/beta) - sqrt(s^2 + beta^2) + beta`,
//!   signed domain.
//!
//! Mirror coordinates are `u = eta'(s)`. Every family maps the interior of its
//! domain onto the whole real line, so `[eta']^-1` is total.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Default scale of the hyperbolic entropy when the token omits it.
pub const DEFAULT_HYP_BETA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dgf {
    Power { p: f64 },
    Entropy,
    Hyperbolic { beta: f64 },
}

/// Whether the dgf lives on the whole line or on the half line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFlag {
    Signed,
    Nonnegative,
}

impl Dgf {
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::invalid(format!("power exponent must exceed 1 (got {p})")));
        }
        Ok(Dgf::Power { p })
    }

    pub fn hyperbolic(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("hyperbolic scale must be positive (got {beta})")));
        }
        Ok(Dgf::Hyperbolic { beta })
    }

    pub fn domain_flag(&self) -> DomainFlag {
        match self {
            Dgf::Entropy => DomainFlag::Nonnegative,
            _ => DomainFlag::Signed,
        }
    }

    pub fn is_signed(&self) -> bool {
        self.domain_flag() == DomainFlag::Signed
    }

    /// Strong-convexity parameters `(p, beta)` such that
    /// `D(f, g) >= (K + beta)^(p-2) / 2 * ||f - g||_1^2` on the `K`-ball.
    pub fn sc_params(&self) -> Result<(f64, f64)> {
        match *self {
            Dgf::Power { p } if p <= 2.0 => Ok((p, 0.0)),
            Dgf::Power { p } => Err(Error::Unsupported(format!(
                "no L1 strong-convexity bound for power exponent p = {p} > 2"
            ))),
            Dgf::Entropy => Ok((1.0, 0.0)),
            Dgf::Hyperbolic { beta } => Ok((1.0, beta)),
        }
    }

    /// `eta(s)`; errors outside the domain.
    pub fn eta(&self, s: f64) -> Result<f64> {
        match *self {
            Dgf::Power { p } => Ok(s.abs().powf(p) / (p * (p - 1.0))),
            Dgf::Entropy => {
                if s < 0.0 || s.is_nan() {
                    return Err(Error::Domain {
                        dgf: self.to_string(),
                        value: s,
                    });
                }
                Ok(if s == 0.0 { 1.0 } else { s * s.ln() - s + 1.0 })
            }
            Dgf::Hyperbolic { beta } => {
                Ok(s * (s / beta).asinh() - (s * s + beta * beta).sqrt() + beta)
            }
        }
    }

    /// `eta'(s)`. For the entropy, `s = 0` maps to `-inf`.
    pub fn eta_prime(&self, s: f64) -> f64 {
        match *self {
            Dgf::Power { p } => signed_pow(s, p - 1.0) / (p - 1.0),
            Dgf::Entropy => s.ln(),
            Dgf::Hyperbolic { beta } => (s / beta).asinh(),
        }
    }

    /// `[eta']^-1(u)`, the primal point with mirror coordinate `u`.
    pub fn eta_prime_inv(&self, u: f64) -> f64 {
        match *self {
            Dgf::Power { p } => signed_pow((p - 1.0) * u, 1.0 / (p - 1.0)),
            Dgf::Entropy => u.exp(),
            Dgf::Hyperbolic { beta } => beta * u.sinh(),
        }
    }

    /// `eta''(s)`.
    pub fn eta_second(&self, s: f64) -> f64 {
        match *self {
            Dgf::Power { p } => s.abs().powf(p - 2.0),
            Dgf::Entropy => 1.0 / s,
            Dgf::Hyperbolic { beta } => 1.0 / (s * s + beta * beta).sqrt(),
        }
    }

    /// Derivative of `[eta']^-1` at `u`, i.e. `1 / eta''([eta']^-1(u))`.
    pub fn eta_prime_inv_deriv(&self, u: f64) -> f64 {
        match *self {
            Dgf::Power { p } if p == 2.0 => 1.0,
            Dgf::Power { p } => ((p - 1.0) * u.abs()).powf((2.0 - p) / (p - 1.0)),
            Dgf::Entropy => u.exp(),
            Dgf::Hyperbolic { beta } => beta * u.cosh(),
        }
    }

    /// Scalar Bregman divergence `D(a, b)`.
    pub fn bregman(&self, a: f64, b: f64) -> Result<f64> {
        match *self {
            Dgf::Entropy => {
                if a < 0.0 || b < 0.0 {
                    return Err(Error::Domain {
                        dgf: self.to_string(),
                        value: a.min(b),
                    });
                }
                if a == 0.0 {
                    Ok(b)
                } else if b == 0.0 {
                    Ok(f64::INFINITY)
                } else {
                    Ok((a * (a / b).ln() - a + b).max(0.0))
                }
            }
            _ => Ok((self.eta(a)? - self.eta(b)? - self.eta_prime(b) * (a - b)).max(0.0)),
        }
    }

    /// `D(a, b)` with `b` given by its mirror coordinate `u_b`.
    ///
    /// For the entropy this avoids forming `b = exp(u_b)`, which underflows for
    /// strongly concentrated iterates.
    pub fn bregman_mirror(&self, a: f64, u_b: f64) -> Result<f64> {
        match *self {
            Dgf::Entropy => {
                if a < 0.0 {
                    return Err(Error::Domain {
                        dgf: self.to_string(),
                        value: a,
                    });
                }
                let b = u_b.exp();
                if a == 0.0 {
                    Ok(b)
                } else {
                    Ok((a * (a.ln() - u_b) - a + b).max(0.0))
                }
            }
            _ => self.bregman(a, self.eta_prime_inv(u_b)),
        }
    }

    /// Coefficient `c = (K + beta)^(p-2) / 2` of the Pinsker-type bound
    /// `D(f, g) >= c ||f - g||_1^2` for `||f||_1, ||g||_1 <= K`.
    pub fn sc_constant(&self, k_bound: f64) -> Result<f64> {
        if !(k_bound > 0.0) {
            return Err(Error::invalid(format!("L1 bound must be positive (got {k_bound})")));
        }
        let (p, beta) = self.sc_params()?;
        Ok((k_bound + beta).powf(p - 2.0) / 2.0)
    }

    /// Largest step `(K + beta)^(p-2) / (||Phi||_inf^2 Lip(grad R))` covered by
    /// the convergence guarantees.
    pub fn step_size(&self, k_bound: f64, phi_sup: f64, lip_r: f64) -> Result<f64> {
        if !(k_bound > 0.0 && phi_sup > 0.0 && lip_r > 0.0) {
            return Err(Error::invalid(format!(
                "step size inputs must be positive (K={k_bound}, phi_sup={phi_sup}, lip={lip_r})"
            )));
        }
        let (p, beta) = self.sc_params()?;
        Ok((k_bound + beta).powf(p - 2.0) / (phi_sup * phi_sup * lip_r))
    }
}

/// `sign(x) |x|^e`, with `signum(0.0) = 1.0` patched out.
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    // Fast paths for the exponents met with p = 2 and p = 1.5.
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x.abs()
    } else if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e)
    }
}

impl fmt::Display for Dgf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dgf::Power { p } => write!(f, "p:{p}"),
            Dgf::Entropy => write!(f, "ent"),
            Dgf::Hyperbolic { beta } => write!(f, "hyp:{beta}"),
        }
    }
}

impl FromStr for Dgf {
    type Err = Error;

    /// Parses `p:<exponent>`, `ent`, `hyp` or `hyp:<beta>`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownToken {
            token: s.to_string(),
            expected: "p:<value>, ent, hyp:<beta>".into(),
        };
        match s.split_once(':') {
            None if s == "ent" => Ok(Dgf::Entropy),
            None if s == "hyp" => Dgf::hyperbolic(DEFAULT_HYP_BETA),
            Some(("p", v)) => Dgf::power(v.parse().map_err(|_| unknown())?),
            Some(("hyp", v)) => Dgf::hyperbolic(v.parse().map_err(|_| unknown())?),
            _ => Err(unknown()),
        }
    }
}

/// `D(f, g) = sum_j w_j D(f_j, g_j)` for two densities on `grid`.
pub fn bregman_div(dgf: &Dgf, grid: &Grid, f: &[f64], g: &[f64]) -> Result<f64> {
    grid.check_len("bregman_div f", f.len())?;
    grid.check_len("bregman_div g", g.len())?;
    let mut total = 0.0;
    for ((w, &a), &b) in grid.weights().iter().zip(f).zip(g) {
        total += w * dgf.bregman(a, b)?;
    }
    Ok(total)
}

/// Same as [`bregman_div`] with `g` supplied in mirror coordinates.
pub fn bregman_div_mirror(dgf: &Dgf, grid: &Grid, f: &[f64], u_g: &[f64]) -> Result<f64> {
    grid.check_len("bregman_div f", f.len())?;
    grid.check_len("bregman_div u_g", u_g.len())?;
    let mut total = 0.0;
    for ((w, &a), &u) in grid.weights().iter().zip(f).zip(u_g) {
        total += w * dgf.bregman_mirror(a, u)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn hyp(beta: f64) -> Dgf {
        Dgf::hyperbolic(beta).unwrap()
    }

    #[test]
    fn eta_examples() {
        assert_eq!(Dgf::Entropy.eta(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(Dgf::Power { p: 2.0 }.eta(3.0).unwrap(), 4.5);
        assert_eq!(hyp(0.3).eta(0.0).unwrap(), 0.0);
        assert_eq!(hyp(0.3).eta_prime(0.0), 0.0);
        assert_eq!(Dgf::Power { p: 1.5 }.eta_prime(0.0), 0.0);
        assert!(matches!(Dgf::Entropy.eta(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn mirror_map_examples() {
        assert_relative_eq!(Dgf::Entropy.eta_prime(std::f64::consts::E), 1.0);
        assert_eq!(Dgf::Entropy.eta_prime_inv(0.0), 1.0);
        assert_eq!(Dgf::Entropy.eta_prime(0.0), f64::NEG_INFINITY);
        assert_relative_eq!(hyp(1.0).eta_prime_inv(1.0), 1.0f64.sinh(), max_relative = 1e-15);
        assert_abs_diff_eq!(hyp(1.0).eta_prime_inv(1.0), 1.17520, epsilon = 1e-5);
        let p2 = Dgf::Power { p: 2.0 };
        for x in [-3.0, -0.5, 0.0, 0.25, 7.0] {
            assert_eq!(p2.eta_prime(x), x);
            assert_eq!(p2.eta_prime_inv(x), x);
        }
    }

    #[test]
    fn bregman_examples() {
        let grid = Grid::torus(1, 8).unwrap();
        let f: Vec<f64> = (0..8).map(|j| (j as f64 * 0.7).sin()).collect();
        let g: Vec<f64> = (0..8).map(|j| (j as f64 * 0.3).cos()).collect();
        for dgf in [Dgf::Power { p: 2.0 }, Dgf::Power { p: 1.5 }, hyp(0.1)] {
            assert_eq!(bregman_div(&dgf, &grid, &f, &f).unwrap(), 0.0);
        }
        let half_l2: f64 = f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 16.0;
        assert_relative_eq!(
            bregman_div(&Dgf::Power { p: 2.0 }, &grid, &f, &g).unwrap(),
            half_l2,
            max_relative = 1e-12
        );
        let two = vec![2.0; 8];
        let one = vec![1.0; 8];
        let d = bregman_div(&Dgf::Entropy, &grid, &two, &one).unwrap();
        assert_abs_diff_eq!(d, 2.0 * 2f64.ln() - 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d, 0.386294, epsilon = 1e-6);
        let u_one = vec![0.0; 8];
        assert_abs_diff_eq!(
            bregman_div_mirror(&Dgf::Entropy, &grid, &two, &u_one).unwrap(),
            d,
            epsilon = 1e-14
        );
        assert!(bregman_div(&Dgf::Entropy, &grid, &two, &one[..7]).is_err());
    }

    #[test]
    fn entropy_divergence_edge_cases() {
        assert_eq!(Dgf::Entropy.bregman(0.0, 0.5).unwrap(), 0.5);
        assert_eq!(Dgf::Entropy.bregman(0.5, 0.0).unwrap(), f64::INFINITY);
        // Mirror form stays finite where exp(u) underflows.
        let d = Dgf::Entropy.bregman_mirror(0.0, -2000.0).unwrap();
        assert_eq!(d, 0.0);
        let d = Dgf::Entropy.bregman_mirror(1e-300, -800.0).unwrap();
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn sc_constant_examples() {
        assert_eq!(Dgf::Power { p: 2.0 }.sc_constant(7.0).unwrap(), 0.5);
        assert_eq!(Dgf::Entropy.sc_constant(1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(hyp(0.1).sc_constant(1.0).unwrap(), 1.0 / 2.2, epsilon = 1e-15);
        assert_abs_diff_eq!(hyp(0.1).sc_constant(1.0).unwrap(), 0.45455, epsilon = 1e-5);
        assert!(Dgf::Power { p: 3.0 }.sc_constant(1.0).is_err());
        assert!(Dgf::Power { p: 3.0 }.step_size(1.0, 1.0, 1.0).is_err());
        assert!(Dgf::Power { p: 3.0 }.eta(2.0).is_ok());
    }

    #[test]
    fn step_size_examples() {
        assert_eq!(Dgf::Power { p: 2.0 }.step_size(3.0, 1.0, 2.0).unwrap(), 0.5);
        assert_eq!(Dgf::Entropy.step_size(1.0, 1.0, 1.0).unwrap(), 1.0);
        let s1 = hyp(0.01).step_size(2.0, 1.5, 0.3).unwrap();
        let s2 = hyp(0.01).step_size(2.0, 3.0, 0.3).unwrap();
        assert_relative_eq!(s1 / s2, 4.0, max_relative = 1e-14);
        assert!(Dgf::Entropy.step_size(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn token_round_trip() {
        for tok in ["p:2", "p:1.5", "ent", "hyp:0.001", "hyp:2"] {
            let d: Dgf = tok.parse().unwrap();
            assert_eq!(d.to_string().parse::<Dgf>().unwrap(), d);
        }
        assert_eq!("hyp".parse::<Dgf>().unwrap(), Dgf::Hyperbolic { beta: DEFAULT_HYP_BETA });
        for bad in ["p:1", "p:x", "entropy", "hyp:-1", ""] {
            assert!(bad.parse::<Dgf>().is_err(), "{bad}");
        }
    }

    #[test]
    fn local_metric_expansion() {
        for dgf in [Dgf::Power { p: 1.5 }, Dgf::Power { p: 2.0 }, Dgf::Entropy, hyp(0.2)] {
            let b: f64 = 0.8;
            for h in [1e-2, 1e-3, 1e-4] {
                let ratio = dgf.bregman(b + h, b).unwrap() / (h * h / 2.0);
                assert_relative_eq!(ratio, dgf.eta_second(b), max_relative = 2.0 * h);
            }
        }
    }

    fn dgf_strategy() -> impl Strategy<Value = Dgf> {
        prop_oneof![
            (1.05f64..=2.0).prop_map(|p| Dgf::Power { p }),
            Just(Dgf::Entropy),
            (1e-3f64..2.0).prop_map(|beta| Dgf::Hyperbolic { beta }),
        ]
    }

    proptest! {
        #[test]
        fn mirror_maps_are_inverse(dgf in dgf_strategy(), s in -50.0f64..50.0) {
            let s = if dgf.is_signed() { s } else { s.abs() + 1e-3 };
            let back = dgf.eta_prime_inv(dgf.eta_prime(s));
            prop_assert!((back - s).abs() <= 1e-10 * s.abs().max(1e-3));
            let u = s / 5.0;
            let fwd = dgf.eta_prime(dgf.eta_prime_inv(u));
            prop_assert!((fwd - u).abs() <= 1e-12 * u.abs().max(1.0));
        }

        #[test]
        fn eta_nonnegative_strictly_convex(dgf in dgf_strategy(), a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let (a, b) = if dgf.is_signed() { (a, b) } else { (a.abs(), b.abs()) };
            prop_assume!((a - b).abs() > 1e-3);
            let mid = dgf.eta(0.5 * (a + b)).unwrap();
            let avg = 0.5 * (dgf.eta(a).unwrap() + dgf.eta(b).unwrap());
            prop_assert!(dgf.eta(a).unwrap() >= 0.0);
            prop_assert!(mid < avg);
        }

        #[test]
        fn eta_prime_increasing(dgf in dgf_strategy(), a in 0.01f64..20.0, b in 0.01f64..20.0) {
            prop_assume!(a < b);
            prop_assert!(dgf.eta_prime(a) < dgf.eta_prime(b));
            if dgf.is_signed() {
                prop_assert!(dgf.eta_prime(-b) < dgf.eta_prime(-a));
            }
        }

        #[test]
        fn divergence_positive_off_diagonal(dgf in dgf_strategy(), a in 0.01f64..10.0, b in 0.01f64..10.0) {
            prop_assume!((a - b).abs() > 1e-4);
            prop_assert!(dgf.bregman(a, b).unwrap() > 0.0);
            prop_assert_eq!(dgf.bregman(a, a).unwrap(), 0.0);
        }
    }
}
