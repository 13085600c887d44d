//! Macroscopic conservation laws for `(rho, J, e)` advanced with kinetic
//! flux vector splitting and the fifth-order upwind reconstruction.

use nalgebra::DMatrix;

use crate::error::{LomacError, Result};
use crate::fdops::{upwind_derivative, upwind_derivative_axis0, upwind_derivative_axis1};
use crate::fdops::{Boundary, Direction};
use crate::field::{ElectricField1D, ElectricField2D};
use crate::grid::{SpatialGrid, VelocityGrid};
use crate::ht::HtTensor;
use crate::lowrank::LowRankMatrix;
use crate::projection::contract_v;

/// Cell arrays of the conserved variables. In 2D the arrays are row-major
/// over `n1 x n2` and `j` has two components.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub rho: Vec<f64>,
    pub j: Vec<Vec<f64>>,
    pub e: Vec<f64>,
    shape: Vec<usize>,
}

impl MacroState {
    pub fn new_1d(rho: Vec<f64>, j: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        let n = rho.len();
        if j.len() != n || e.len() != n {
            return Err(LomacError::Dimension(format!(
                "macro arrays have lengths {}, {}, {}",
                n,
                j.len(),
                e.len()
            )));
        }
        Ok(Self {
            rho,
            j: vec![j],
            e,
            shape: vec![n],
        })
    }

    pub fn new_2d(
        n1: usize,
        n2: usize,
        rho: Vec<f64>,
        j1: Vec<f64>,
        j2: Vec<f64>,
        e: Vec<f64>,
    ) -> Result<Self> {
        let n = n1 * n2;
        if [rho.len(), j1.len(), j2.len(), e.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(LomacError::Dimension(format!(
                "2D macro arrays must all have {n1}x{n2} entries"
            )));
        }
        Ok(Self {
            rho,
            j: vec![j1, j2],
            e,
            shape: vec![n1, n2],
        })
    }

    pub fn zeros_like(&self) -> Self {
        let n = self.rho.len();
        Self {
            rho: vec![0.0; n],
            j: vec![vec![0.0; n]; self.j.len()],
            e: vec![0.0; n],
            shape: self.shape.clone(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Conserved variables in order `rho, J_1[, J_2], e`.
    pub fn variables(&self) -> Vec<&Vec<f64>> {
        let mut v = vec![&self.rho];
        v.extend(self.j.iter());
        v.push(&self.e);
        v
    }

    fn variables_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v = vec![&mut self.rho];
        v.extend(self.j.iter_mut());
        v.push(&mut self.e);
        v
    }

    /// `(mass, momentum components, energy)` with cell volume `cell`.
    pub fn totals(&self, cell: f64) -> (f64, Vec<f64>, f64) {
        let sum = |a: &[f64]| a.iter().sum::<f64>() * cell;
        (
            sum(&self.rho),
            self.j.iter().map(|c| sum(c)).collect(),
            sum(&self.e),
        )
    }

    fn check_compatible(&self, other: &MacroState) -> Result<()> {
        if self.shape != other.shape {
            return Err(LomacError::Dimension(format!(
                "macro shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// `sum_k a_k U_k`.
    pub fn combine(terms: &[(f64, &MacroState)]) -> Result<MacroState> {
        let first = terms
            .first()
            .ok_or_else(|| LomacError::Dimension("empty combination".into()))?
            .1;
        let mut out = first.zeros_like();
        for (a, u) in terms {
            out.check_compatible(u)?;
            for (dst, src) in out.variables_mut().into_iter().zip(u.variables()) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }
}

/// Split kinetic fluxes, indexed `[direction][variable][cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSet {
    pub plus: Vec<Vec<Vec<f64>>>,
    pub minus: Vec<Vec<Vec<f64>>>,
    shape: Vec<usize>,
}

impl FluxSet {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// `F^+ + F^-` per direction and variable.
    pub fn unsplit(&self) -> Vec<Vec<Vec<f64>>> {
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(p, m)| {
                p.iter()
                    .zip(m)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                    .collect()
            })
            .collect()
    }

    /// Interface fluxes `F^+_{j+1/2} + F^-_{j+1/2}` in 1D, per variable.
    pub fn interface_fluxes_1d(&self) -> Result<Vec<Vec<f64>>> {
        if self.shape.len() != 1 {
            return Err(LomacError::Dimension("not a 1D flux set".into()));
        }
        self.plus[0]
            .iter()
            .zip(&self.minus[0])
            .map(|(p, m)| {
                let a =
                    crate::fdops::reconstruct_interface(p, Direction::Plus, Boundary::Periodic)?;
                let b =
                    crate::fdops::reconstruct_interface(m, Direction::Minus, Boundary::Periodic)?;
                Ok(a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect())
            })
            .collect()
    }

    /// Discrete divergence `sum_d (Fhat_{j+1/2} - Fhat_{j-1/2}) / h_d` per
    /// variable.
    pub fn divergence(&self, grids: &[&SpatialGrid]) -> Result<Vec<Vec<f64>>> {
        if grids.len() != self.shape.len() {
            return Err(LomacError::Dimension(format!(
                "{} grids for a {}-dimensional flux set",
                grids.len(),
                self.shape.len()
            )));
        }
        for (g, &n) in grids.iter().zip(&self.shape) {
            if g.n() != n {
                return Err(LomacError::Dimension(format!(
                    "grid has {} cells, fluxes have {n}",
                    g.n()
                )));
            }
        }
        let nvar = self.plus[0].len();
        let ncell: usize = self.shape.iter().product();
        let mut out = vec![vec![0.0; ncell]; nvar];
        for d in 0..self.shape.len() {
            let h = grids[d].h();
            for k in 0..nvar {
                let (p, m) = (&self.plus[d][k], &self.minus[d][k]);
                let (dp, dm) = match (self.shape.len(), d) {
                    (1, _) => (
                        upwind_derivative(p, Direction::Plus, h, Boundary::Periodic)?,
                        upwind_derivative(m, Direction::Minus, h, Boundary::Periodic)?,
                    ),
                    (_, 0) => {
                        let (n1, n2) = (self.shape[0], self.shape[1]);
                        (
                            upwind_derivative_axis0(
                                p,
                                n1,
                                n2,
                                Direction::Plus,
                                h,
                                Boundary::Periodic,
                            )?,
                            upwind_derivative_axis0(
                                m,
                                n1,
                                n2,
                                Direction::Minus,
                                h,
                                Boundary::Periodic,
                            )?,
                        )
                    }
                    _ => {
                        let (n1, n2) = (self.shape[0], self.shape[1]);
                        (
                            upwind_derivative_axis1(
                                p,
                                n1,
                                n2,
                                Direction::Plus,
                                h,
                                Boundary::Periodic,
                            )?,
                            upwind_derivative_axis1(
                                m,
                                n1,
                                n2,
                                Direction::Minus,
                                h,
                                Boundary::Periodic,
                            )?,
                        )
                    }
                };
                for ((o, a), b) in out[k].iter_mut().zip(&dp).zip(&dm) {
                    *o += a + b;
                }
            }
        }
        Ok(out)
    }
}

fn split_monomials(grid: &VelocityGrid, positive: bool) -> DMatrix<f64> {
    let part = if positive {
        grid.positive_part()
    } else {
        grid.negative_part()
    };
    DMatrix::from_fn(grid.n(), 3, |j, k| match k {
        0 => part[j],
        1 => part[j] * part[j],
        _ => 0.5 * part[j] * part[j] * part[j],
    })
}

pub fn kfvs_split_fluxes_1d(f: &LowRankMatrix, grid: &VelocityGrid) -> Result<FluxSet> {
    if f.nv() != grid.n() {
        return Err(LomacError::Dimension(format!(
            "distribution has {} velocity points, grid has {}",
            f.nv(),
            grid.n()
        )));
    }
    let cols = |m: DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..3)
            .map(|k| m.column(k).iter().copied().collect())
            .collect()
    };
    let plus = cols(contract_v(f, &split_monomials(grid, true)));
    let minus = cols(contract_v(f, &split_monomials(grid, false)));
    Ok(FluxSet {
        plus: vec![plus],
        minus: vec![minus],
        shape: vec![f.nx()],
    })
}

/// Dimension-by-dimension split fluxes. Direction `d` splits on the sign of
/// `v_d`; the variables are `rho, J_1, J_2, e`.
pub fn kfvs_split_fluxes_2d(f: &HtTensor, grid: &VelocityGrid) -> Result<FluxSet> {
    if f.nv() != grid.n() {
        return Err(LomacError::Dimension(format!(
            "tensor has {} velocity points, grid has {}",
            f.nv(),
            grid.n()
        )));
    }
    let one = grid.ones();
    let v = grid.nodes().to_vec();
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let mul = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x * y).collect() };
    let half = |a: &[f64]| -> Vec<f64> { a.iter().map(|x| 0.5 * x).collect() };
    let mut plus = Vec::with_capacity(2);
    let mut minus = Vec::with_capacity(2);
    for d in 0..2 {
        for (positive, target) in [(true, &mut plus), (false, &mut minus)] {
            let s = if positive {
                grid.positive_part()
            } else {
                grid.negative_part()
            };
            let sv = mul(&s, &v);
            let sv2 = half(&mul(&s, &v2));
            let hs = half(&s);
            // (p, q) factor pairs in the (v_d, v_other) order.
            let pairs: Vec<Vec<(Vec<f64>, Vec<f64>)>> = vec![
                vec![(s.clone(), one.clone())],
                vec![(sv.clone(), one.clone())],
                vec![(s.clone(), v.clone())],
                vec![(sv2, one.clone()), (hs, v2.clone())],
            ];
            let mut vars = Vec::with_capacity(4);
            for group in pairs {
                let oriented: Vec<(Vec<f64>, Vec<f64>)> = group
                    .into_iter()
                    .map(|(p, q)| if d == 0 { (p, q) } else { (q, p) })
                    .collect();
                let m = f.contract_velocity(&oriented)?;
                let mut field = vec![0.0; f.n_space()];
                for c in 0..m.ncols() {
                    for (o, x) in field.iter_mut().zip(m.column(c).iter()) {
                        *o += x;
                    }
                }
                vars.push(field);
            }
            // For direction 2 the momentum components swap roles.
            if d == 1 {
                vars.swap(1, 2);
            }
            target.push(vars);
        }
    }
    Ok(FluxSet {
        plus,
        minus,
        shape: vec![f.n1(), f.n2()],
    })
}

/// One stage of a linear multistep/Runge-Kutta combination:
/// `U_new = sum_k a_k U_k + b dt (-div F + S)` with `S = (0, rho E, 0)`
/// evaluated on `source_state` and `field`, plus an optional extra source
/// per conserved variable.
pub fn macro_stage_1d(
    history: &[(f64, &MacroState)],
    source_state: &MacroState,
    flux: &FluxSet,
    field: &ElectricField1D,
    grid: &SpatialGrid,
    b_dt: f64,
    extra_source: Option<&[Vec<f64>]>,
) -> Result<MacroState> {
    if source_state.dims() != 1 || field.e.len() != source_state.len() {
        return Err(LomacError::Dimension(
            "1D macro stage shape mismatch".into(),
        ));
    }
    let div = flux.divergence(&[grid])?;
    let mut src = vec![
        vec![0.0; grid.n()],
        source_state
            .rho
            .iter()
            .zip(&field.e)
            .map(|(r, e)| r * e)
            .collect(),
        vec![0.0; grid.n()],
    ];
    add_extra(&mut src, extra_source)?;
    finish_stage(history, div, src, b_dt)
}

pub fn macro_stage_2d(
    history: &[(f64, &MacroState)],
    source_state: &MacroState,
    flux: &FluxSet,
    field: &ElectricField2D,
    grids: (&SpatialGrid, &SpatialGrid),
    b_dt: f64,
    extra_source: Option<&[Vec<f64>]>,
) -> Result<MacroState> {
    let n = source_state.len();
    if source_state.dims() != 2 || field.e1.len() != n || field.e2.len() != n {
        return Err(LomacError::Dimension(
            "2D macro stage shape mismatch".into(),
        ));
    }
    let div = flux.divergence(&[grids.0, grids.1])?;
    let rho = &source_state.rho;
    let mut src = vec![
        vec![0.0; n],
        rho.iter().zip(&field.e1).map(|(r, e)| r * e).collect(),
        rho.iter().zip(&field.e2).map(|(r, e)| r * e).collect(),
        vec![0.0; n],
    ];
    add_extra(&mut src, extra_source)?;
    finish_stage(history, div, src, b_dt)
}

fn add_extra(src: &mut [Vec<f64>], extra: Option<&[Vec<f64>]>) -> Result<()> {
    if let Some(extra) = extra {
        if extra.len() != src.len() || extra.iter().any(|e| e.len() != src[0].len()) {
            return Err(LomacError::Dimension("extra source shape mismatch".into()));
        }
        for (s, e) in src.iter_mut().zip(extra) {
            for (a, b) in s.iter_mut().zip(e) {
                *a += b;
            }
        }
    }
    Ok(())
}

fn finish_stage(
    history: &[(f64, &MacroState)],
    div: Vec<Vec<f64>>,
    src: Vec<Vec<f64>>,
    b_dt: f64,
) -> Result<MacroState> {
    let mut out = MacroState::combine(history)?;
    if out.variables().len() != div.len() {
        return Err(LomacError::Dimension(
            "flux set does not match macro state".into(),
        ));
    }
    for ((u, d), s) in out.variables_mut().into_iter().zip(&div).zip(&src) {
        if u.len() != d.len() {
            return Err(LomacError::Dimension(
                "flux set does not match macro state".into(),
            ));
        }
        for ((x, dx), sx) in u.iter_mut().zip(d).zip(s) {
            *x += b_dt * (sx - dx);
        }
    }
    Ok(out)
}

/// `U^{n+1} = U^{n-2}/4 + 3 U^n/4 + 3/2 dt (-div F^n + S^n)`.
pub fn macro_step_1d(
    u_n: &MacroState,
    u_nm2: &MacroState,
    flux: &FluxSet,
    field: &ElectricField1D,
    grid: &SpatialGrid,
    dt: f64,
    extra_source: Option<&[Vec<f64>]>,
) -> Result<MacroState> {
    macro_stage_1d(
        &[(0.75, u_n), (0.25, u_nm2)],
        u_n,
        flux,
        field,
        grid,
        1.5 * dt,
        extra_source,
    )
}

pub fn macro_step_2d(
    u_n: &MacroState,
    u_nm2: &MacroState,
    flux: &FluxSet,
    field: &ElectricField2D,
    grids: (&SpatialGrid, &SpatialGrid),
    dt: f64,
) -> Result<MacroState> {
    macro_stage_2d(
        &[(0.75, u_n), (0.25, u_nm2)],
        u_n,
        flux,
        field,
        grids,
        1.5 * dt,
        None,
    )
}

/// `kappa = e - E^2 / 2`.
pub fn recover_kappa(u: &MacroState, field: &ElectricField1D) -> Vec<f64> {
    u.e.iter()
        .zip(&field.e)
        .map(|(e, f)| e - 0.5 * f * f)
        .collect()
}

pub fn recover_kappa_2d(u: &MacroState, field: &ElectricField2D) -> Vec<f64> {
    u.e.iter()
        .zip(field.e1.iter().zip(&field.e2))
        .map(|(e, (a, b))| e - 0.5 * (a * a + b * b))
        .collect()
}
