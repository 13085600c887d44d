//! Benchmark problems: initial data, parameters, and the manufactured
//! forcing of the forced 1D1V problem.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{LomacError, Result};
use crate::grid::{SpatialGrid, VelocityGrid};
use crate::ht::{HtSpace, HtTensor};
use crate::lowrank::LowRankMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Forced,
    WeakLandau1d,
    StrongLandau1d,
    BumpOnTail,
    WeakLandau2d2v,
    TwoStream2d2v,
}

/// Default parameters of a preset. `alpha`, `k` and the beam parameters are
/// ignored where they do not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetParams {
    pub nx: usize,
    pub nv: usize,
    pub v_max: f64,
    pub beta: f64,
    pub eps: f64,
    pub t_end: f64,
    pub alpha: f64,
    pub k: f64,
}

pub const BUMP_NP: f64 = 0.9;
pub const BUMP_NB: f64 = 0.2;
pub const BUMP_U: f64 = 4.5;
pub const BUMP_VT: f64 = 0.5;
pub const TWO_STREAM_V0: f64 = 2.4;

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Forced,
        Preset::WeakLandau1d,
        Preset::StrongLandau1d,
        Preset::BumpOnTail,
        Preset::WeakLandau2d2v,
        Preset::TwoStream2d2v,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Forced => "forced",
            Preset::WeakLandau1d => "weak_landau_1d",
            Preset::StrongLandau1d => "strong_landau_1d",
            Preset::BumpOnTail => "bump_on_tail",
            Preset::WeakLandau2d2v => "weak_landau_2d2v",
            Preset::TwoStream2d2v => "two_stream_2d2v",
        }
    }

    pub fn is_2d(self) -> bool {
        matches!(self, Preset::WeakLandau2d2v | Preset::TwoStream2d2v)
    }

    pub fn params(self) -> PresetParams {
        let p = |nx, nv, v_max, beta, eps, t_end, alpha, k| PresetParams {
            nx,
            nv,
            v_max,
            beta,
            eps,
            t_end,
            alpha,
            k,
        };
        match self {
            Preset::Forced => p(128, 128, 4.0, 2.0, 1e-4, 1.0, 0.0, 2.0),
            Preset::WeakLandau1d => p(64, 129, 6.0, 2.0, 1e-5, 20.0, 0.01, 0.5),
            Preset::StrongLandau1d => p(64, 129, 6.0, 2.0, 1e-3, 40.0, 0.5, 0.5),
            Preset::BumpOnTail => p(128, 256, 10.0, 3.0, 1e-4, 10.0, 0.04, 0.3),
            Preset::WeakLandau2d2v => p(16, 32, 6.0, 2.0, 1e-5, 5.0, 0.01, 0.5),
            Preset::TwoStream2d2v => p(32, 64, 8.0, 2.0, 1e-5, 20.0, 0.001, 0.2),
        }
    }

    /// Periodic spatial interval.
    pub fn x_domain(self, k: f64) -> (f64, f64) {
        match self {
            Preset::Forced => (-PI, PI),
            _ => (0.0, 2.0 * PI / k),
        }
    }

    pub fn spatial_grid(self, n: usize, k: f64) -> Result<SpatialGrid> {
        let (a, b) = self.x_domain(k);
        SpatialGrid::periodic(n, a, b)
    }

    /// Analytic 1D1V initial data as a sum of separable terms.
    pub fn initial_1d(
        self,
        x: &SpatialGrid,
        v: &VelocityGrid,
        alpha: f64,
        k: f64,
    ) -> Result<LowRankMatrix> {
        let xs = x.nodes();
        let cos_kx: Vec<f64> = xs.iter().map(|&xi| (k * xi).cos()).collect();
        let ones = vec![1.0; x.n()];
        let terms = match self {
            Preset::Forced => {
                let g = v.map_nodes(forced_profile);
                let c: Vec<f64> = xs.iter().map(|&xi| -(2.0 * xi).cos()).collect();
                vec![(vec![2.0; x.n()], g.clone()), (c, g)]
            }
            Preset::WeakLandau1d | Preset::StrongLandau1d => {
                let m = v.map_nodes(|vj| (-0.5 * vj * vj).exp() / (2.0 * PI).sqrt());
                let a: Vec<f64> = cos_kx.iter().map(|c| alpha * c).collect();
                vec![(ones, m.clone()), (a, m)]
            }
            Preset::BumpOnTail => {
                let s = 1.0 / (2.0 * PI).sqrt();
                let m = v.map_nodes(|vj| {
                    BUMP_NP * s * (-0.5 * vj * vj).exp()
                        + BUMP_NB * s * (-(vj - BUMP_U).powi(2) / (2.0 * BUMP_VT)).exp()
                });
                let a: Vec<f64> = cos_kx.iter().map(|c| alpha * c).collect();
                vec![(ones, m.clone()), (a, m)]
            }
            _ => {
                return Err(LomacError::Config(format!(
                    "preset {} is two-dimensional",
                    self.name()
                )))
            }
        };
        LowRankMatrix::from_terms(&terms, x.h(), v.h())
    }

    /// Analytic 2D2V initial data (one separable term with a full-grid
    /// spatial factor).
    pub fn initial_2d(
        self,
        x1: &SpatialGrid,
        x2: &SpatialGrid,
        v: &VelocityGrid,
        alpha: f64,
        k: f64,
    ) -> Result<HtTensor> {
        let space = HtSpace::from_grids(x1, x2, v);
        let (a, b) = (x1.nodes(), x2.nodes());
        let mut x = Vec::with_capacity(space.n_space());
        for xa in &a {
            for xb in &b {
                x.push(1.0 + alpha * ((k * xa).cos() + (k * xb).cos()));
            }
        }
        let p = match self {
            Preset::WeakLandau2d2v => v.map_nodes(|vj| (-0.5 * vj * vj).exp() / (2.0 * PI).sqrt()),
            Preset::TwoStream2d2v => v.map_nodes(|vj| {
                let v0 = TWO_STREAM_V0;
                ((-0.5 * (vj - v0).powi(2)).exp() + (-0.5 * (vj + v0).powi(2)).exp())
                    / (2.0 * (2.0 * PI).sqrt())
            }),
            _ => {
                return Err(LomacError::Config(format!(
                    "preset {} is one-dimensional",
                    self.name()
                )))
            }
        };
        HtTensor::from_terms(space, &[(x, p.clone(), p)])
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = LomacError;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| LomacError::UnknownPreset(s.to_string()))
    }
}

/// `exp(-(4v - 1)^2 / 4)`.
pub fn forced_profile(v: f64) -> f64 {
    (-(4.0 * v - 1.0).powi(2) / 4.0).exp()
}

/// Exact solution of the forced problem.
pub fn forced_exact(x: f64, v: f64, t: f64) -> f64 {
    (2.0 - (2.0 * x - 2.0 * PI * t).cos()) * forced_profile(v)
}

/// Exact field of the forced problem under `E_x = rho - sqrt(pi)`.
pub fn forced_exact_field(x: f64, t: f64) -> f64 {
    -PI.sqrt() / 4.0 * (2.0 * x - 2.0 * PI * t).sin()
}

/// Kinetic forcing `psi(x, v, t)` as a rank-four factored object.
pub fn forced_source(x: &SpatialGrid, v: &VelocityGrid, t: f64) -> Result<LowRankMatrix> {
    let sp = PI.sqrt();
    let th: Vec<f64> = x
        .nodes()
        .iter()
        .map(|&xi| 2.0 * xi - 2.0 * PI * t)
        .collect();
    let s1: Vec<f64> = th.iter().map(|a| a.sin()).collect();
    let s2: Vec<f64> = th.iter().map(|a| (2.0 * a).sin()).collect();
    let g = |c: f64, p: u8| v.map_nodes(move |vj| c * vj.powi(p as i32) * forced_profile(vj));
    LowRankMatrix::from_terms(
        &[
            (s1.clone(), g(4.0 * sp + 2.0, 1)),
            (s1, g(-(2.0 * PI + sp), 0)),
            (s2.clone(), g(sp / 4.0, 0)),
            (s2, g(-sp, 1)),
        ],
        x.h(),
        v.h(),
    )
}

/// Sources of the forced macroscopic system beyond `rho E`, per cell:
/// `(mass, momentum, energy)`, with `e_field` the field in the energy term.
pub fn forced_macro_source(x: &SpatialGrid, t: f64, e_field: &[f64]) -> Vec<Vec<f64>> {
    let sp = PI.sqrt();
    let n = x.n();
    let mut out = vec![vec![0.0; n]; 3];
    for (i, xi) in x.nodes().into_iter().enumerate() {
        let th = 2.0 * xi - 2.0 * PI * t;
        let (s1, s2, c1) = (th.sin(), (2.0 * th).sin(), th.cos());
        out[0][i] = sp / 4.0 * (1.0 - 4.0 * PI) * s1;
        out[1][i] = sp / 16.0 * (3.0 + 4.0 * sp - 4.0 * PI) * s1 - PI / 16.0 * s2;
        out[2][i] = sp / 128.0 * (7.0 + 8.0 * sp - 12.0 * PI) * s1 - PI / 64.0 * s2
            + sp / 8.0 * (2.0 - (1.0 - 4.0 * PI) * c1) * e_field[i];
    }
    out
}

/// Maximum and grid L2 errors of `f` against the exact forced solution.
pub fn forced_errors(f: &LowRankMatrix, x: &SpatialGrid, v: &VelocityGrid, t: f64) -> (f64, f64) {
    let d = f.dense();
    let (mut linf, mut sum) = (0.0f64, 0.0);
    for (i, &xi) in x.nodes().iter().enumerate() {
        for (j, &vj) in v.nodes().iter().enumerate() {
            let e = d[(i, j)] - forced_exact(xi, vj, t);
            linf = linf.max(e.abs());
            sum += e * e;
        }
    }
    (linf, (sum * x.h() * v.h()).sqrt())
}
