//! Spectral Poisson solves on periodic grids.
//!
//! `-lap(phi) = rho - mean(rho)`, `E = -sign * grad(phi)`. The zero mode of
//! `phi` is removed. The Nyquist mode of `E` is dropped so that the spectral
//! derivative stays skew-symmetric, which makes `sum_j rho_j E_j` vanish to
//! round-off.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LomacError, Result};
use crate::grid::SpatialGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ElectricField1D {
    pub e: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Fields on a row-major `n1 x n2` grid (index `i1 * n2 + i2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ElectricField2D {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ElectricField1D {
    pub fn max_abs(&self) -> f64 {
        self.e.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl ElectricField2D {
    pub fn max_abs(&self) -> (f64, f64) {
        let m = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        (m(&self.e1), m(&self.e2))
    }
}

struct Plan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Plan {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n,
        }
    }
}

/// Signed wavenumbers `2 pi m / L`; `None` marks the Nyquist mode.
fn wavenumbers(n: usize, length: f64) -> Vec<Option<f64>> {
    (0..n)
        .map(|m| {
            if n.is_multiple_of(2) && m == n / 2 {
                None
            } else {
                let s = if m <= n / 2 {
                    m as f64
                } else {
                    m as f64 - n as f64
                };
                Some(2.0 * PI * s / length)
            }
        })
        .collect()
}

fn nyquist_k(n: usize, length: f64) -> f64 {
    2.0 * PI * (n / 2) as f64 / length
}

pub struct PoissonSolver1D {
    plan: Plan,
    grid: SpatialGrid,
    sign: f64,
}

impl PoissonSolver1D {
    pub fn new(grid: &SpatialGrid, sign: f64) -> Result<Self> {
        if !grid.is_periodic() {
            return Err(LomacError::UnsupportedDomain(
                "spectral Poisson solve requires a periodic grid".into(),
            ));
        }
        Ok(Self {
            plan: Plan::new(grid.n()),
            grid: grid.clone(),
            sign,
        })
    }

    pub fn solve(&self, rho: &[f64]) -> Result<ElectricField1D> {
        let n = self.plan.n;
        if rho.len() != n {
            return Err(LomacError::Dimension(format!(
                "density has {} entries, grid has {}",
                rho.len(),
                n
            )));
        }
        let mut buf: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.plan.forward.process(&mut buf);
        let ks = wavenumbers(n, self.grid.length());
        let mut phi_hat = vec![Complex64::new(0.0, 0.0); n];
        let mut e_hat = vec![Complex64::new(0.0, 0.0); n];
        for m in 1..n {
            match ks[m] {
                Some(k) => {
                    phi_hat[m] = buf[m] / (k * k);
                    // E = -sign * d(phi)/dx
                    e_hat[m] = -self.sign * Complex64::new(0.0, k) * phi_hat[m];
                }
                None => {
                    let k = nyquist_k(n, self.grid.length());
                    phi_hat[m] = buf[m] / (k * k);
                }
            }
        }
        self.plan.inverse.process(&mut phi_hat);
        self.plan.inverse.process(&mut e_hat);
        let inv_n = 1.0 / n as f64;
        Ok(ElectricField1D {
            e: e_hat.iter().map(|c| c.re * inv_n).collect(),
            phi: phi_hat.iter().map(|c| c.re * inv_n).collect(),
        })
    }
}

pub fn solve_poisson(rho: &[f64], grid: &SpatialGrid, sign: f64) -> Result<ElectricField1D> {
    PoissonSolver1D::new(grid, sign)?.solve(rho)
}

pub struct PoissonSolver2D {
    plan1: Plan,
    plan2: Plan,
    grid1: SpatialGrid,
    grid2: SpatialGrid,
    sign: f64,
}

impl PoissonSolver2D {
    pub fn new(grid1: &SpatialGrid, grid2: &SpatialGrid, sign: f64) -> Result<Self> {
        if !grid1.is_periodic() || !grid2.is_periodic() {
            return Err(LomacError::UnsupportedDomain(
                "spectral Poisson solve requires periodic grids".into(),
            ));
        }
        Ok(Self {
            plan1: Plan::new(grid1.n()),
            plan2: Plan::new(grid2.n()),
            grid1: grid1.clone(),
            grid2: grid2.clone(),
            sign,
        })
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (n1, n2) = (self.plan1.n, self.plan2.n);
        let (p1, p2) = if forward {
            (&self.plan1.forward, &self.plan2.forward)
        } else {
            (&self.plan1.inverse, &self.plan2.inverse)
        };
        for row in data.chunks_mut(n2) {
            p2.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n1];
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                col[i1] = data[i1 * n2 + i2];
            }
            p1.process(&mut col);
            for i1 in 0..n1 {
                data[i1 * n2 + i2] = col[i1];
            }
        }
    }

    pub fn solve(&self, rho: &[f64]) -> Result<ElectricField2D> {
        let (n1, n2) = (self.plan1.n, self.plan2.n);
        if rho.len() != n1 * n2 {
            return Err(LomacError::Dimension(format!(
                "density has {} entries, grid has {}",
                rho.len(),
                n1 * n2
            )));
        }
        let mut buf: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.transform(&mut buf, true);
        let k1s = wavenumbers(n1, self.grid1.length());
        let k2s = wavenumbers(n2, self.grid2.length());
        let kn1 = nyquist_k(n1, self.grid1.length());
        let kn2 = nyquist_k(n2, self.grid2.length());
        let zero = Complex64::new(0.0, 0.0);
        let mut phi = vec![zero; n1 * n2];
        let mut e1 = vec![zero; n1 * n2];
        let mut e2 = vec![zero; n1 * n2];
        for m1 in 0..n1 {
            for m2 in 0..n2 {
                if m1 == 0 && m2 == 0 {
                    continue;
                }
                let idx = m1 * n2 + m2;
                let k1 = k1s[m1].unwrap_or(kn1);
                let k2 = k2s[m2].unwrap_or(kn2);
                let p = buf[idx] / (k1 * k1 + k2 * k2);
                phi[idx] = p;
                if let Some(k) = k1s[m1] {
                    e1[idx] = -self.sign * Complex64::new(0.0, k) * p;
                }
                if let Some(k) = k2s[m2] {
                    e2[idx] = -self.sign * Complex64::new(0.0, k) * p;
                }
            }
        }
        self.transform(&mut phi, false);
        self.transform(&mut e1, false);
        self.transform(&mut e2, false);
        let inv = 1.0 / (n1 * n2) as f64;
        let re = |v: Vec<Complex64>| v.iter().map(|c| c.re * inv).collect::<Vec<f64>>();
        Ok(ElectricField2D {
            e1: re(e1),
            e2: re(e2),
            phi: re(phi),
        })
    }
}

pub fn solve_poisson_2d(
    rho: &[f64],
    grid1: &SpatialGrid,
    grid2: &SpatialGrid,
    sign: f64,
) -> Result<ElectricField2D> {
    PoissonSolver2D::new(grid1, grid2, sign)?.solve(rho)
}

/// `1/2 * sum |E|^2 * h`.
pub fn field_energy(field: &ElectricField1D, grid: &SpatialGrid) -> f64 {
    0.5 * grid.h() * field.e.iter().map(|e| e * e).sum::<f64>()
}

pub fn field_energy_2d(field: &ElectricField2D, grid1: &SpatialGrid, grid2: &SpatialGrid) -> f64 {
    let s: f64 = field
        .e1
        .iter()
        .zip(&field.e2)
        .map(|(a, b)| a * a + b * b)
        .sum();
    0.5 * grid1.h() * grid2.h() * s
}

/// Spectral derivative of periodic data; exposed for divergence checks.
pub fn spectral_derivative(u: &[f64], grid: &SpatialGrid) -> Vec<f64> {
    let n = u.len();
    let plan = Plan::new(n);
    let mut buf: Vec<Complex64> = u.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    plan.forward.process(&mut buf);
    for (m, k) in wavenumbers(n, grid.length()).into_iter().enumerate() {
        buf[m] *= match k {
            Some(k) => Complex64::new(0.0, k),
            None => Complex64::new(0.0, 0.0),
        };
    }
    plan.inverse.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}
