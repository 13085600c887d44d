//! Moments, the weighted orthogonal projection onto `span{1, v, v^2}`, and
//! the conservative truncations built on it (1D1V).
//!
//! Moments use the plain rectangle rule; orthogonality uses the weighted
//! inner product. The rank-three part `f1` is the unique element of
//! `w * span{1, v, v^2 - c}` carrying the moments of `f`, so `f - f1` has
//! zero mass, momentum and kinetic energy density.

use nalgebra::{DMatrix, DVector};

use crate::error::{LomacError, Result};
use crate::grid::VelocityGrid;
use crate::lowrank::LowRankMatrix;

#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    grid: VelocityGrid,
    c: f64,
    norm2_one: f64,
    norm2_v: f64,
    norm2_quad: f64,
    /// Columns `w * 1`, `w * v`, `w * (v^2 - c)` with `w` the point values.
    frames: DMatrix<f64>,
}

impl ProjectionBasis {
    pub fn new(grid: &VelocityGrid) -> Self {
        let one = grid.ones();
        let v = grid.nodes().to_vec();
        let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
        let norm2_one = grid.weighted_inner(&one, &one).unwrap();
        let c = grid.weighted_inner(&one, &v2).unwrap() / norm2_one;
        let quad: Vec<f64> = v2.iter().map(|x| x - c).collect();
        let norm2_v = grid.weighted_inner(&v, &v).unwrap();
        let norm2_quad = grid.weighted_inner(&quad, &quad).unwrap();
        let w = grid.weight_values();
        let frames = DMatrix::from_fn(grid.n(), 3, |j, k| {
            w[j] * match k {
                0 => 1.0,
                1 => v[j],
                _ => quad[j],
            }
        });
        Self {
            grid: grid.clone(),
            c,
            norm2_one,
            norm2_v,
            norm2_quad,
            frames,
        }
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    /// Squared weighted norms of `1`, `v` and `v^2 - c`.
    pub fn norms2(&self) -> [f64; 3] {
        [self.norm2_one, self.norm2_v, self.norm2_quad]
    }
    /// The basis vectors `1`, `v`, `v^2 - c` (unweighted).
    pub fn basis_vectors(&self) -> [Vec<f64>; 3] {
        let v = self.grid.nodes().to_vec();
        let quad = v.iter().map(|x| x * x - self.c).collect();
        [self.grid.ones(), v, quad]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments1D {
    pub rho: DVector<f64>,
    pub j: DVector<f64>,
    pub kappa: DVector<f64>,
}

impl Moments1D {
    pub fn zeros(n: usize) -> Self {
        Self {
            rho: DVector::zeros(n),
            j: DVector::zeros(n),
            kappa: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.rho.amax().max(self.j.amax()).max(self.kappa.amax())
    }

    pub fn sub(&self, other: &Moments1D) -> Moments1D {
        Moments1D {
            rho: &self.rho - &other.rho,
            j: &self.j - &other.j,
            kappa: &self.kappa - &other.kappa,
        }
    }
}

/// Velocity moments of `f` against the columns of `monomials`, computed
/// factor-wise: returns an `n_x x k` matrix.
pub(crate) fn contract_v(f: &LowRankMatrix, monomials: &DMatrix<f64>) -> DMatrix<f64> {
    // (r x k): h * V^T P, scaled by C.
    let mut a = f.v_factors().transpose() * monomials * f.hv();
    for (l, c) in f.coeffs().iter().enumerate() {
        a.row_mut(l).scale_mut(*c);
    }
    f.x_factors() * a
}

pub fn moments(f: &LowRankMatrix, grid: &VelocityGrid) -> Result<Moments1D> {
    if f.nv() != grid.n() {
        return Err(LomacError::Dimension(format!(
            "distribution has {} velocity points, grid has {}",
            f.nv(),
            grid.n()
        )));
    }
    let v = grid.nodes();
    let p = DMatrix::from_fn(grid.n(), 3, |j, k| match k {
        0 => 1.0,
        1 => v[j],
        _ => 0.5 * v[j] * v[j],
    });
    let m = contract_v(f, &p);
    Ok(Moments1D {
        rho: m.column(0).into_owned(),
        j: m.column(1).into_owned(),
        kappa: m.column(2).into_owned(),
    })
}

/// The exact rank-three object carrying the moments `m`.
pub fn build_f1(m: &Moments1D, basis: &ProjectionBasis, hx: f64) -> LowRankMatrix {
    let [n1, nv, nq] = basis.norms2();
    let nx = m.len();
    let mut x = DMatrix::zeros(nx, 3);
    x.set_column(0, &(&m.rho / n1));
    x.set_column(1, &(&m.j / nv));
    x.set_column(2, &((&m.kappa * 2.0 - &m.rho * basis.c) / nq));
    LowRankMatrix::new(
        DVector::from_element(3, 1.0),
        x,
        basis.frames.clone(),
        hx,
        basis.grid.h(),
    )
    .expect("f1 blocks are consistent by construction")
}

/// `f = f1 + f2` with `f1` carrying all low moments and `f2` none.
pub fn conservative_decompose(
    f: &LowRankMatrix,
    basis: &ProjectionBasis,
) -> Result<(LowRankMatrix, LowRankMatrix)> {
    let m = moments(f, &basis.grid)?;
    let f1 = build_f1(&m, basis, f.hx());
    let f2 = LowRankMatrix::add_scaled(&[(1.0, f), (-1.0, &f1)])?.recompress();
    Ok((f1, f2))
}

/// `T_c(f) = f1 + sqrt(w) T_eps(f2 / sqrt(w))`.
pub fn conservative_truncate(
    f: &LowRankMatrix,
    basis: &ProjectionBasis,
    eps: f64,
) -> Result<LowRankMatrix> {
    let m = moments(f, &basis.grid)?;
    lomac_truncate(f, &m, basis, eps)
}

/// `T_c^M(f) = f1(m_target) + sqrt(w) T_eps(f2 / sqrt(w))`, where `f2` is
/// the zero-moment remainder of `f`. The round-off moments left in the
/// truncated remainder are folded into the rank-three part, so the result
/// carries `m_target` exactly without extra rank.
pub fn lomac_truncate(
    f: &LowRankMatrix,
    m_target: &Moments1D,
    basis: &ProjectionBasis,
    eps: f64,
) -> Result<LowRankMatrix> {
    truncate_with(f, m_target, basis, |f2| {
        f2.weighted_truncate(basis.grid.weight_values(), eps)
    })
}

/// Same as [`lomac_truncate`] with a threshold relative to `|f2|`.
pub fn lomac_truncate_relative(
    f: &LowRankMatrix,
    m_target: &Moments1D,
    basis: &ProjectionBasis,
    eps: f64,
) -> Result<LowRankMatrix> {
    truncate_with(f, m_target, basis, |f2| {
        let w = basis.grid.weight_values();
        let inv: Vec<f64> = w.iter().map(|x| 1.0 / x.sqrt()).collect();
        let scaled = f2.map_v_rows(&inv)?;
        let tol = eps * scaled.norm();
        f2.weighted_truncate(w, tol)
    })
}

fn truncate_with(
    f: &LowRankMatrix,
    m_target: &Moments1D,
    basis: &ProjectionBasis,
    truncate: impl Fn(&LowRankMatrix) -> Result<LowRankMatrix>,
) -> Result<LowRankMatrix> {
    if m_target.len() != f.nx() {
        return Err(LomacError::Dimension(format!(
            "target moments have {} cells, distribution has {}",
            m_target.len(),
            f.nx()
        )));
    }
    let (_, f2) = conservative_decompose(f, basis)?;
    let g = truncate(&f2)?;
    let residual = moments(&g, &basis.grid)?;
    let f1 = build_f1(&m_target.sub(&residual), basis, f.hx());
    LowRankMatrix::add(&[&f1, &g])
}
