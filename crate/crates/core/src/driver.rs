//! Time stepping: startup, the multistep loop, the macroscopic co-evolution
//! and the per-step truncation of each method variant.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{LomacError, Result};
use crate::fdops::{upwind_derivative, Boundary, Direction};
use crate::field::{
    field_energy, field_energy_2d, ElectricField1D, PoissonSolver1D, PoissonSolver2D,
};
use crate::grid::{SpatialGrid, VelocityGrid, WeightFunction};
use crate::ht::{
    ht_conservative_truncate, ht_lomac_truncate, ht_moments, HtTensor, Moments2D, ProjectionBasis4D,
};
use crate::lowrank::LowRankMatrix;
use crate::macroscopic::{
    kfvs_split_fluxes_1d, kfvs_split_fluxes_2d, macro_stage_1d, macro_stage_2d, recover_kappa,
    recover_kappa_2d, MacroState,
};
use crate::presets::{forced_exact_field, forced_macro_source, forced_source, Preset};
use crate::projection::{
    lomac_truncate, lomac_truncate_relative, moments, Moments1D, ProjectionBasis,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimensionality {
    OneD1V,
    TwoD2V,
}

/// I: plain truncation. II: conservative truncation with the kinetic
/// solution's own moments. III: macroscopic co-evolution with exact moment
/// correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    I,
    II,
    III,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::I, Variant::II, Variant::III];

    pub fn name(self) -> &'static str {
        match self {
            Variant::I => "I",
            Variant::II => "II",
            Variant::III => "III",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = LomacError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" | "plain" => Ok(Variant::I),
            "ii" | "2" | "conservative" => Ok(Variant::II),
            "iii" | "3" | "lomac" => Ok(Variant::III),
            other => Err(LomacError::Config(format!(
                "unknown variant `{other}` (expected I, II or III)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub preset: Preset,
    pub variant: Variant,
    /// Cells per spatial direction.
    pub nx: usize,
    /// Points per velocity direction.
    pub nv: usize,
    pub v_max: f64,
    pub beta: f64,
    pub eps: f64,
    pub relative_eps: bool,
    pub cfl: f64,
    /// Fixed step overriding the CFL choice.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub alpha: f64,
    pub k: f64,
    /// Record diagnostics every this many steps (the final step is always
    /// recorded).
    pub output_every: usize,
    pub poisson_sign: f64,
    pub rank_cap: usize,
}

impl SolverConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let p = preset.params();
        Self {
            preset,
            variant: Variant::III,
            nx: p.nx,
            nv: p.nv,
            v_max: p.v_max,
            beta: p.beta,
            eps: p.eps,
            relative_eps: false,
            cfl: 0.3,
            dt: None,
            t_end: p.t_end,
            alpha: p.alpha,
            k: p.k,
            output_every: 10,
            poisson_sign: 1.0,
            rank_cap: 60,
        }
    }

    pub fn dimensionality(&self) -> Dimensionality {
        if self.preset.is_2d() {
            Dimensionality::TwoD2V
        } else {
            Dimensionality::OneD1V
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LomacError::Config(m));
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must be in (0, 1], got {}", self.cfl));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad(format!("v_max must be > 0, got {}", self.v_max));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad(format!("k must be > 0, got {}", self.k));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be > 0, got {dt}"));
            }
        }
        if self.output_every == 0 {
            return bad("output_every must be >= 1".into());
        }
        if self.rank_cap == 0 {
            return bad("rank_cap must be >= 1".into());
        }
        if self.poisson_sign != 1.0 && self.poisson_sign != -1.0 {
            return bad(format!(
                "poisson_sign must be 1 or -1, got {}",
                self.poisson_sign
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub ranks: Vec<usize>,
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
    pub electric_energy: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSeries {
    pub dimensionality: Dimensionality,
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsSeries {
    pub fn new(dimensionality: Dimensionality) -> Self {
        Self {
            dimensionality,
            rows: Vec::new(),
        }
    }

    /// `max_t |q(t) - q(0)| / |q(0)|`.
    pub fn max_relative_deviation(&self, q: impl Fn(&DiagnosticsRow) -> f64) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        let q0 = q(first);
        self.rows
            .iter()
            .map(|r| (q(r) - q0).abs() / q0.abs())
            .fold(0.0, f64::max)
    }

    /// `max_t |q(t) - q(0)|`.
    pub fn max_abs_deviation(&self, q: impl Fn(&DiagnosticsRow) -> f64) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        let q0 = q(first);
        self.rows
            .iter()
            .map(|r| (q(r) - q0).abs())
            .fold(0.0, f64::max)
    }
}

/// `cfl / (sum_d v_max / h_x_d + sum_d max|E_d| / h_v)`.
pub fn select_dt(v_max: f64, hx: &[f64], hv: f64, e_max: &[f64], cfl: f64) -> f64 {
    cfl / cfl_rate(v_max, hx, hv, e_max)
}

fn cfl_rate(v_max: f64, hx: &[f64], hv: f64, e_max: &[f64]) -> f64 {
    hx.iter().map(|h| v_max / h).sum::<f64>() + e_max.iter().map(|e| e / hv).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub enum KineticState {
    One(LowRankMatrix),
    Two(HtTensor),
}

impl KineticState {
    pub fn ranks(&self) -> Vec<usize> {
        match self {
            KineticState::One(f) => vec![f.rank()],
            KineticState::Two(f) => f.ranks().to_vec(),
        }
    }

    pub fn as_1d(&self) -> Option<&LowRankMatrix> {
        match self {
            KineticState::One(f) => Some(f),
            KineticState::Two(_) => None,
        }
    }

    pub fn as_2d(&self) -> Option<&HtTensor> {
        match self {
            KineticState::Two(f) => Some(f),
            KineticState::One(_) => None,
        }
    }
}

/// One time level: the kinetic solution and, for variant III, the
/// macroscopic state evolved alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub f: KineticState,
    pub macro_state: Option<MacroState>,
}

/// Upwinded `-(v d_x + E d_v) f` in factored form (rank `4r`).
pub fn transport_1d(
    f: &LowRankMatrix,
    e: &[f64],
    x: &SpatialGrid,
    v: &VelocityGrid,
) -> Result<LowRankMatrix> {
    let r = f.rank();
    let (nx, nv) = (f.nx(), f.nv());
    if nx != x.n() || nv != v.n() || e.len() != nx {
        return Err(LomacError::Dimension("transport operand mismatch".into()));
    }
    let mut xf = DMatrix::zeros(nx, 4 * r);
    let mut vf = DMatrix::zeros(nv, 4 * r);
    let (vp, vm) = (v.positive_part(), v.negative_part());
    for l in 0..r {
        let xc: Vec<f64> = f.x_factors().column(l).iter().copied().collect();
        let vc: Vec<f64> = f.v_factors().column(l).iter().copied().collect();
        let cols_x = [
            upwind_derivative(&xc, Direction::Plus, x.h(), Boundary::Periodic)?,
            upwind_derivative(&xc, Direction::Minus, x.h(), Boundary::Periodic)?,
            xc.iter().zip(e).map(|(a, b)| a * b.max(0.0)).collect(),
            xc.iter().zip(e).map(|(a, b)| a * b.min(0.0)).collect(),
        ];
        let cols_v = [
            vc.iter().zip(&vp).map(|(a, b)| a * b).collect(),
            vc.iter().zip(&vm).map(|(a, b)| a * b).collect(),
            upwind_derivative(&vc, Direction::Plus, v.h(), Boundary::ZeroExtension)?,
            upwind_derivative(&vc, Direction::Minus, v.h(), Boundary::ZeroExtension)?,
        ];
        for t in 0..4 {
            xf.column_mut(t * r + l).copy_from_slice(&cols_x[t]);
            vf.column_mut(t * r + l).copy_from_slice(&cols_v[t]);
        }
    }
    let mut c = DVector::zeros(4 * r);
    for t in 0..4 {
        for l in 0..r {
            c[t * r + l] = -f.coeffs()[l];
        }
    }
    LowRankMatrix::new(c, xf, vf, f.hx(), f.hv())
}

enum Discretization {
    One {
        x: SpatialGrid,
        v: VelocityGrid,
        basis: ProjectionBasis,
        poisson: PoissonSolver1D,
    },
    Two {
        x1: SpatialGrid,
        x2: SpatialGrid,
        v: VelocityGrid,
        basis: ProjectionBasis4D,
        poisson: PoissonSolver2D,
    },
}

pub struct Simulation {
    cfg: SolverConfig,
    disc: Discretization,
    dt: f64,
    n_steps: usize,
    step: usize,
    history: VecDeque<Level>,
    started: Instant,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("preset", &self.cfg.preset)
            .field("variant", &self.cfg.variant)
            .field("dt", &self.dt)
            .field("step", &self.step)
            .field("n_steps", &self.n_steps)
            .finish()
    }
}

impl Simulation {
    /// Builds the grids and the initial level (projected or truncated as the
    /// variant prescribes) and fixes the step size.
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        let disc = Self::discretize(&cfg)?;
        let mut sim = Self {
            cfg,
            disc,
            dt: 0.0,
            n_steps: 0,
            step: 0,
            history: VecDeque::new(),
            started: Instant::now(),
        };
        let level0 = sim.initial_level()?;
        let e_max = sim.field_max(&level0)?;
        let dt0 = match sim.cfg.dt {
            Some(dt) => dt,
            None => select_dt(sim.cfg.v_max, &sim.hx(), sim.hv(), &e_max, sim.cfg.cfl),
        };
        let (dt, n) = fit_steps(sim.cfg.t_end, dt0);
        sim.dt = dt;
        sim.n_steps = n;
        sim.history.push_back(level0);
        Ok(sim)
    }

    /// Restores a simulation from saved history (oldest level first).
    pub fn from_parts(
        cfg: SolverConfig,
        dt: f64,
        step: usize,
        history: Vec<Level>,
    ) -> Result<Self> {
        let disc = Self::discretize(&cfg)?;
        if history.is_empty() || history.len() > 3 {
            return Err(LomacError::Snapshot(format!(
                "history must hold 1 to 3 levels, got {}",
                history.len()
            )));
        }
        let (_, n_steps) = fit_steps(cfg.t_end, dt);
        Ok(Self {
            cfg,
            disc,
            dt,
            n_steps,
            step,
            history: history.into(),
            started: Instant::now(),
        })
    }

    fn discretize(cfg: &SolverConfig) -> Result<Discretization> {
        cfg.validate()?;
        let weight = WeightFunction::gaussian(cfg.beta)?;
        let v = VelocityGrid::new(cfg.nv, cfg.v_max, weight)?;
        Ok(match cfg.dimensionality() {
            Dimensionality::OneD1V => {
                let x = cfg.preset.spatial_grid(cfg.nx, cfg.k)?;
                Discretization::One {
                    basis: ProjectionBasis::new(&v),
                    poisson: PoissonSolver1D::new(&x, cfg.poisson_sign)?,
                    x,
                    v,
                }
            }
            Dimensionality::TwoD2V => {
                let x1 = cfg.preset.spatial_grid(cfg.nx, cfg.k)?;
                let x2 = x1.clone();
                Discretization::Two {
                    basis: ProjectionBasis4D::new(&v),
                    poisson: PoissonSolver2D::new(&x1, &x2, cfg.poisson_sign)?,
                    x1,
                    x2,
                    v,
                }
            }
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn step_index(&self) -> usize {
        self.step
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }
    pub fn is_finished(&self) -> bool {
        self.step >= self.n_steps
    }
    /// Stored levels, oldest first.
    pub fn history(&self) -> impl Iterator<Item = &Level> {
        self.history.iter()
    }
    pub fn current(&self) -> &Level {
        self.history.back().expect("history is never empty")
    }

    pub fn spatial_grids(&self) -> Vec<&SpatialGrid> {
        match &self.disc {
            Discretization::One { x, .. } => vec![x],
            Discretization::Two { x1, x2, .. } => vec![x1, x2],
        }
    }

    pub fn velocity_grid(&self) -> &VelocityGrid {
        match &self.disc {
            Discretization::One { v, .. } | Discretization::Two { v, .. } => v,
        }
    }

    fn hx(&self) -> Vec<f64> {
        self.spatial_grids().iter().map(|g| g.h()).collect()
    }

    fn hv(&self) -> f64 {
        self.velocity_grid().h()
    }

    fn initial_level(&self) -> Result<Level> {
        let cfg = &self.cfg;
        match &self.disc {
            Discretization::One {
                x,
                v,
                basis,
                poisson,
            } => {
                let raw = cfg.preset.initial_1d(x, v, cfg.alpha, cfg.k)?;
                let m = moments(&raw, v)?;
                let f = self.truncate_1d(&raw, &m, basis)?;
                let macro_state = if cfg.variant == Variant::III {
                    let field = poisson.solve(m.rho.as_slice())?;
                    Some(macro_from_moments_1d(&m, &field)?)
                } else {
                    None
                };
                Ok(Level {
                    f: KineticState::One(f),
                    macro_state,
                })
            }
            Discretization::Two {
                x1,
                x2,
                v,
                basis,
                poisson,
            } => {
                let raw = cfg.preset.initial_2d(x1, x2, v, cfg.alpha, cfg.k)?;
                let m = ht_moments(&raw, v)?;
                let f = self.truncate_2d(&raw, &m, basis)?;
                let macro_state = if cfg.variant == Variant::III {
                    let field = poisson.solve(m.rho.as_slice())?;
                    let e: Vec<f64> = m
                        .kappa
                        .iter()
                        .zip(field.e1.iter().zip(&field.e2))
                        .map(|(k, (a, b))| k + 0.5 * (a * a + b * b))
                        .collect();
                    Some(MacroState::new_2d(
                        x1.n(),
                        x2.n(),
                        m.rho.as_slice().to_vec(),
                        m.j1.as_slice().to_vec(),
                        m.j2.as_slice().to_vec(),
                        e,
                    )?)
                } else {
                    None
                };
                Ok(Level {
                    f: KineticState::Two(f),
                    macro_state,
                })
            }
        }
    }

    fn truncate_1d(
        &self,
        f: &LowRankMatrix,
        target: &Moments1D,
        basis: &ProjectionBasis,
    ) -> Result<LowRankMatrix> {
        let eps = self.cfg.eps;
        let rel = self.cfg.relative_eps;
        let out = match self.cfg.variant {
            Variant::I if rel => f.truncate_relative(eps),
            Variant::I => f.truncate(eps),
            Variant::II | Variant::III if rel => lomac_truncate_relative(f, target, basis, eps)?,
            Variant::II | Variant::III => lomac_truncate(f, target, basis, eps)?,
        };
        self.check_rank(out.rank())?;
        Ok(out)
    }

    fn truncate_2d(
        &self,
        f: &HtTensor,
        target: &Moments2D,
        basis: &ProjectionBasis4D,
    ) -> Result<HtTensor> {
        let eps = if self.cfg.relative_eps {
            self.cfg.eps * f.norm()
        } else {
            self.cfg.eps
        };
        let out = match self.cfg.variant {
            Variant::I => f.truncate(eps),
            Variant::II => ht_conservative_truncate(f, basis, eps)?,
            Variant::III => ht_lomac_truncate(f, target, basis, eps)?,
        };
        self.check_rank(out.ranks().into_iter().max().unwrap_or(0))?;
        Ok(out)
    }

    fn check_rank(&self, rank: usize) -> Result<()> {
        if rank > self.cfg.rank_cap {
            return Err(LomacError::RankExplosion {
                rank,
                cap: self.cfg.rank_cap,
                time: self.time(),
            });
        }
        Ok(())
    }

    /// `max |E_d|` per spatial direction for a level.
    fn field_max(&self, level: &Level) -> Result<Vec<f64>> {
        Ok(match (&self.disc, &level.f) {
            (Discretization::One { v, poisson, .. }, KineticState::One(f)) => {
                vec![poisson.solve(moments(f, v)?.rho.as_slice())?.max_abs()]
            }
            (Discretization::Two { v, poisson, .. }, KineticState::Two(f)) => {
                let (a, b) = poisson.solve(ht_moments(f, v)?.rho.as_slice())?.max_abs();
                vec![a, b]
            }
            _ => {
                return Err(LomacError::Dimension(
                    "level does not match the grids".into(),
                ))
            }
        })
    }

    /// `sum_k a_k U_k + b_dt L(src)` followed by the variant's truncation.
    fn stage(&self, combo: &[(f64, &Level)], src: &Level, b_dt: f64, t_src: f64) -> Result<Level> {
        let cfg = &self.cfg;
        match &self.disc {
            Discretization::One {
                x,
                v,
                basis,
                poisson,
            } => {
                let fs = src.f.as_1d().ok_or_else(mismatch)?;
                let ms = moments(fs, v)?;
                let field = poisson.solve(ms.rho.as_slice())?;
                let mut rhs = transport_1d(fs, &field.e, x, v)?;
                if cfg.preset == Preset::Forced {
                    let psi = forced_source(x, v, t_src)?;
                    rhs = LowRankMatrix::add(&[&rhs, &psi])?;
                }
                let mut terms: Vec<(f64, &LowRankMatrix)> = Vec::with_capacity(combo.len() + 1);
                for (a, l) in combo {
                    terms.push((*a, l.f.as_1d().ok_or_else(mismatch)?));
                }
                terms.push((b_dt, &rhs));
                let fstar = LowRankMatrix::add_scaled(&terms)?;

                let (target, macro_state) = match cfg.variant {
                    Variant::III => {
                        let flux = kfvs_split_fluxes_1d(fs, v)?;
                        // The forcing is prescribed, so its field-dependent
                        // part uses the exact field.
                        let extra = (cfg.preset == Preset::Forced).then(|| {
                            let e: Vec<f64> = x
                                .nodes()
                                .iter()
                                .map(|&xi| forced_exact_field(xi, t_src))
                                .collect();
                            forced_macro_source(x, t_src, &e)
                        });
                        let hist = macro_combo(combo)?;
                        let us = src.macro_state.as_ref().ok_or_else(missing_macro)?;
                        let u =
                            macro_stage_1d(&hist, us, &flux, &field, x, b_dt, extra.as_deref())?;
                        let new_field = poisson.solve(&u.rho)?;
                        let m = Moments1D {
                            rho: DVector::from_column_slice(&u.rho),
                            j: DVector::from_column_slice(&u.j[0]),
                            kappa: DVector::from_vec(recover_kappa(&u, &new_field)),
                        };
                        (m, Some(u))
                    }
                    Variant::II => (moments(&fstar, v)?, None),
                    Variant::I => (Moments1D::zeros(0), None),
                };
                let f = self.truncate_1d(&fstar, &target, basis)?;
                Ok(Level {
                    f: KineticState::One(f),
                    macro_state,
                })
            }
            Discretization::Two {
                x1,
                x2,
                v,
                basis,
                poisson,
            } => {
                let fs = src.f.as_2d().ok_or_else(mismatch)?;
                let ms = ht_moments(fs, v)?;
                let field = poisson.solve(ms.rho.as_slice())?;
                let rhs = fs.transport_terms(&field, v)?;
                let mut terms: Vec<(f64, &HtTensor)> = Vec::with_capacity(combo.len() + 1);
                for (a, l) in combo {
                    terms.push((*a, l.f.as_2d().ok_or_else(mismatch)?));
                }
                terms.push((b_dt, &rhs));
                let fstar = HtTensor::add_scaled(&terms)?;
                let (target, macro_state) = match cfg.variant {
                    Variant::III => {
                        let flux = kfvs_split_fluxes_2d(fs, v)?;
                        let hist = macro_combo(combo)?;
                        let us = src.macro_state.as_ref().ok_or_else(missing_macro)?;
                        let u = macro_stage_2d(&hist, us, &flux, &field, (x1, x2), b_dt, None)?;
                        let new_field = poisson.solve(&u.rho)?;
                        let m = Moments2D {
                            rho: DVector::from_column_slice(&u.rho),
                            j1: DVector::from_column_slice(&u.j[0]),
                            j2: DVector::from_column_slice(&u.j[1]),
                            kappa: DVector::from_vec(recover_kappa_2d(&u, &new_field)),
                        };
                        (m, Some(u))
                    }
                    _ => (Moments2D::zeros(0), None),
                };
                let f = self.truncate_2d(&fstar, &target, basis)?;
                Ok(Level {
                    f: KineticState::Two(f),
                    macro_state,
                })
            }
        }
    }

    fn check_cfl(&self, level: &Level) -> Result<()> {
        let e_max = self.field_max(level)?;
        let cfl = self.dt * cfl_rate(self.cfg.v_max, &self.hx(), self.hv(), &e_max);
        if cfl > 1.0 {
            return Err(LomacError::CflViolation {
                cfl,
                time: self.time(),
            });
        }
        Ok(())
    }

    /// Advances one step: Heun (SSP-RK2) for the first two steps, the
    /// three-level SSP multistep scheme afterwards.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let t = self.time();
        let cur = self.current();
        self.check_cfl(cur)?;
        let next = if self.step < 2 {
            let mid = self.stage(&[(1.0, cur)], cur, dt, t)?;
            self.stage(&[(0.5, cur), (0.5, &mid)], &mid, 0.5 * dt, t + dt)?
        } else {
            let old = &self.history[self.history.len() - 3];
            self.stage(&[(0.75, cur), (0.25, old)], cur, 1.5 * dt, t)?
        };
        self.history.push_back(next);
        while self.history.len() > 3 {
            self.history.pop_front();
        }
        self.step += 1;
        Ok(())
    }

    pub fn diagnostics(&self) -> Result<DiagnosticsRow> {
        let level = self.current();
        let wall_ms = self.started.elapsed().as_secs_f64() * 1e3;
        match (&self.disc, &level.f) {
            (Discretization::One { x, v, poisson, .. }, KineticState::One(f)) => {
                let m = moments(f, v)?;
                let field = poisson.solve(m.rho.as_slice())?;
                let ee = field_energy(&field, x);
                Ok(DiagnosticsRow {
                    t: self.time(),
                    ranks: vec![f.rank()],
                    mass: m.rho.sum() * x.h(),
                    momentum: vec![m.j.sum() * x.h()],
                    energy: m.kappa.sum() * x.h() + ee,
                    electric_energy: ee,
                    wall_ms,
                })
            }
            (
                Discretization::Two {
                    x1, x2, v, poisson, ..
                },
                KineticState::Two(f),
            ) => {
                let m = ht_moments(f, v)?;
                let field = poisson.solve(m.rho.as_slice())?;
                let ee = field_energy_2d(&field, x1, x2);
                let cell = x1.h() * x2.h();
                Ok(DiagnosticsRow {
                    t: self.time(),
                    ranks: f.ranks().to_vec(),
                    mass: m.rho.sum() * cell,
                    momentum: vec![m.j1.sum() * cell, m.j2.sum() * cell],
                    energy: m.kappa.sum() * cell + ee,
                    electric_energy: ee,
                    wall_ms,
                })
            }
            _ => Err(mismatch()),
        }
    }

    /// Runs to the end time, recording at the configured cadence, calling
    /// `on_step` after every step.
    pub fn run_with(
        &mut self,
        mut on_step: impl FnMut(&Simulation) -> Result<()>,
    ) -> Result<DiagnosticsSeries> {
        let mut series = DiagnosticsSeries::new(self.cfg.dimensionality());
        series.rows.push(self.diagnostics()?);
        while !self.is_finished() {
            self.step()?;
            on_step(self)?;
            if self.step.is_multiple_of(self.cfg.output_every) || self.is_finished() {
                series.rows.push(self.diagnostics()?);
            }
        }
        Ok(series)
    }
}

/// Runs `cfg` from its initial data to the end time.
pub fn run(cfg: &SolverConfig) -> Result<DiagnosticsSeries> {
    Simulation::new(cfg.clone())?.run_with(|_| Ok(()))
}

/// `(dt, n)` with `n dt = t_end` and `dt <= dt0`.
fn fit_steps(t_end: f64, dt0: f64) -> (f64, usize) {
    if t_end == 0.0 {
        return (dt0, 0);
    }
    let n = (t_end / dt0 * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (t_end / n as f64, n)
}

fn macro_from_moments_1d(m: &Moments1D, field: &ElectricField1D) -> Result<MacroState> {
    let e = m
        .kappa
        .iter()
        .zip(&field.e)
        .map(|(k, f)| k + 0.5 * f * f)
        .collect();
    MacroState::new_1d(m.rho.as_slice().to_vec(), m.j.as_slice().to_vec(), e)
}

fn macro_combo<'a>(combo: &[(f64, &'a Level)]) -> Result<Vec<(f64, &'a MacroState)>> {
    combo
        .iter()
        .map(|(a, l)| Ok((*a, l.macro_state.as_ref().ok_or_else(missing_macro)?)))
        .collect()
}

fn mismatch() -> LomacError {
    LomacError::Dimension("kinetic state does not match the discretization".into())
}

fn missing_macro() -> LomacError {
    LomacError::Dimension("variant III level without a macroscopic state".into())
}
