//! Weighted point clouds discretizing the flat torus `T^d = (R/Z)^d` and the
//! circle `S^1`, standing in for the reference probability measure `tau`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// The compact manifold a grid discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Flat torus of unit side, coordinates in `[0, 1)^dim`.
    Torus { dim: usize },
    /// Unit circle, coordinates are angles in `[0, 2*pi)`.
    Circle,
}

impl Domain {
    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Domain::Torus { dim } => dim,
            Domain::Circle => 1,
        }
    }

    /// Largest geodesic distance between two points.
    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Torus { dim } => 0.5 * (dim as f64).sqrt(),
            Domain::Circle => PI,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }
}

/// Geodesic distance between two points of `domain`.
///
/// On the torus this is the Euclidean norm of the wrapped coordinate
/// differences `min(|delta|, 1 - |delta|)`; on the circle it is the shorter arc.
pub fn geodesic_dist(domain: Domain, a: &[f64], b: &[f64]) -> f64 {
    match domain {
        Domain::Torus { .. } => a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let delta = (x - y).rem_euclid(1.0);
                let w = delta.min(1.0 - delta);
                w * w
            })
            .sum::<f64>()
            .sqrt(),
        Domain::Circle => {
            let delta = (a[0] - b[0]).rem_euclid(2.0 * PI);
            delta.min(2.0 * PI - delta)
        }
    }
}

/// A discretization of `tau`: points with strictly positive weights summing to one.
///
/// Grids are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    /// Flat coordinate storage, `dim` entries per point.
    coords: Vec<f64>,
    weights: Vec<f64>,
    /// Points per axis for regular lattices.
    per_axis: usize,
}

impl Grid {
    /// Regular lattice of `n^d` points on `[0,1)^d` with weights `n^-d`.
    pub fn torus(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!(
                "torus dimension must be 1, 2 or 3 (got {dim})"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("torus grid needs at least one point per axis"));
        }
        let m = n.pow(dim as u32);
        let mut coords = Vec::with_capacity(m * dim);
        for idx in 0..m {
            // Last axis varies fastest.
            let mut rest = idx;
            let mut point = [0.0; 3];
            for axis in (0..dim).rev() {
                point[axis] = (rest % n) as f64 / n as f64;
                rest /= n;
            }
            coords.extend_from_slice(&point[..dim]);
        }
        Ok(Self {
            domain: Domain::Torus { dim },
            coords,
            weights: vec![1.0 / m as f64; m],
            per_axis: n,
        })
    }

    /// `m` equispaced angles on the circle with weights `1/m`.
    pub fn circle(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("circle grid needs at least one point"));
        }
        let coords = (0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect();
        Ok(Self {
            domain: Domain::Circle,
            coords,
            weights: vec![1.0 / m as f64; m],
            per_axis: m,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[j * d..(j + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// Lattice spacing along one axis, in domain units.
    pub fn spacing(&self) -> f64 {
        match self.domain {
            Domain::Torus { .. } => 1.0 / self.per_axis as f64,
            Domain::Circle => 2.0 * PI / self.per_axis as f64,
        }
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        geodesic_dist(self.domain, a, b)
    }

    /// Distances from `center` to every grid point.
    pub fn distances_from(&self, center: &[f64]) -> Vec<f64> {
        self.points().map(|p| self.dist(p, center)).collect()
    }

    /// `tau` mass of the closed geodesic ball `B_eps(center)`.
    pub fn ball_mass(&self, center: &[f64], eps: f64) -> f64 {
        self.points()
            .zip(&self.weights)
            .filter(|(p, _)| in_closed_ball(self.dist(p, center), eps))
            .map(|(_, w)| w)
            .sum()
    }

    /// Index of the grid point closest to `target`.
    pub fn nearest(&self, target: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (j, p) in self.points().enumerate() {
            let d = self.dist(p, target);
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    }

    /// `sum_j w_j |f_j|`.
    pub fn l1_norm(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x.abs()).sum()
    }

    /// `sum_j w_j f_j`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    pub(crate) fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::GridMismatch {
                what: what.to_string(),
                expected: self.len(),
                got: len,
            });
        }
        Ok(())
    }
}

/// Closed-ball membership with a few ulps of slack so lattice points sitting
/// exactly on the sphere are not lost to rounding.
pub(crate) fn in_closed_ball(dist: f64, eps: f64) -> bool {
    dist <= eps * (1.0 + 1e-12)
}
