//! Uniform phase-space grids and velocity quadrature.
//!
//! Spatial grids are periodic and store `x_max`-exclusive nodes, so node `i`
//! sits at `x_min + i * h` and the node at `x_max` is the periodic image of
//! `x_min`. Velocity grids include both endpoints `-v_max` and `v_max`.
//!
//! Two quadratures live on a velocity grid:
//! * the plain rectangle rule `<f, g> = h * sum_j f_j g_j`, used for moments;
//! * the weighted rule `<f, g>_w = sum_j f_j g_j w_j` with `w_j = w(v_j) * h`,
//!   used for orthogonal projection.

use crate::error::{LomacError, Result};

/// Smallest grid the fifth-order upwind stencils accept.
pub const MIN_POINTS: usize = 8;

/// Gaussian weight `w(v) = exp(-v^2 / beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFunction {
    beta: f64,
}

impl WeightFunction {
    pub fn gaussian(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(LomacError::Domain(format!(
                "weight parameter beta must be positive, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        (-v * v / self.beta).exp()
    }
}

impl Default for WeightFunction {
    fn default() -> Self {
        Self { beta: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    n: usize,
    x_min: f64,
    x_max: f64,
    h: f64,
    periodic: bool,
}

impl SpatialGrid {
    pub fn periodic(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(LomacError::Sizing { n, min: MIN_POINTS });
        }
        if !(x_max > x_min) {
            return Err(LomacError::Domain(format!(
                "empty spatial interval [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            n,
            x_min,
            x_max,
            h: (x_max - x_min) / n as f64,
            periodic: true,
        })
    }

    /// Endpoint-inclusive, non-periodic grid. Only useful for operators that
    /// do not need periodicity; the Poisson solver rejects it.
    pub fn bounded(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(LomacError::Sizing { n, min: MIN_POINTS });
        }
        if !(x_max > x_min) {
            return Err(LomacError::Domain(format!(
                "empty spatial interval [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            n,
            x_min,
            x_max,
            h: (x_max - x_min) / (n - 1) as f64,
            periodic: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    n: usize,
    v_max: f64,
    h: f64,
    nodes: Vec<f64>,
    weight: WeightFunction,
    weight_values: Vec<f64>,
    quad_weights: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(n: usize, v_max: f64, weight: WeightFunction) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(LomacError::Sizing { n, min: MIN_POINTS });
        }
        Self::new_relaxed(n, v_max, weight)
    }

    /// Same as [`VelocityGrid::new`] without the stencil-width check.
    /// Only quadrature is meaningful on such grids.
    pub fn new_relaxed(n: usize, v_max: f64, weight: WeightFunction) -> Result<Self> {
        if n < 2 {
            return Err(LomacError::Sizing { n, min: 2 });
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(LomacError::Domain(format!(
                "v_max must be positive, got {v_max}"
            )));
        }
        let span = (n - 1) as f64;
        // 2j - (n-1) is exactly antisymmetric, so the grid is exactly symmetric.
        let nodes: Vec<f64> = (0..n)
            .map(|j| v_max * (2.0 * j as f64 - span) / span)
            .collect();
        let h = 2.0 * v_max / span;
        let weight_values: Vec<f64> = nodes.iter().map(|&v| weight.eval(v)).collect();
        let quad_weights = weight_values.iter().map(|w| w * h).collect();
        Ok(Self {
            n,
            v_max,
            h,
            nodes,
            weight,
            weight_values,
            quad_weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weight(&self) -> WeightFunction {
        self.weight
    }
    /// Point values `w(v_j)`.
    pub fn weight_values(&self) -> &[f64] {
        &self.weight_values
    }
    /// Weighted quadrature weights `w(v_j) * h`.
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn ones(&self) -> Vec<f64> {
        vec![1.0; self.n]
    }

    /// `v^+ = max(v, 0)`.
    pub fn positive_part(&self) -> Vec<f64> {
        self.nodes.iter().map(|&v| v.max(0.0)).collect()
    }

    /// `v^- = min(v, 0)`.
    pub fn negative_part(&self) -> Vec<f64> {
        self.nodes.iter().map(|&v| v.min(0.0)).collect()
    }

    pub fn map_nodes(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&v| f(v)).collect()
    }

    /// Plain rectangle-rule inner product `h * sum_j f_j g_j`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(self.h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Weighted inner product `sum_j f_j g_j w_j`.
    pub fn weighted_inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(f.iter()
            .zip(g)
            .zip(&self.quad_weights)
            .map(|((a, b), w)| a * b * w)
            .sum())
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n {
            return Err(LomacError::Dimension(format!(
                "velocity vector has length {}, grid has {} points",
                f.len(),
                self.n
            )));
        }
        Ok(())
    }
}
