//! Dense reference implementations used as test oracles. Everything here is
//! written against plain arrays, independently of the factored code paths.
#![allow(dead_code)]

use std::f64::consts::PI;

use lomac::{HtSpace, HtTensor, LowRankMatrix};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn rand_mat(r: &mut impl Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| r.gen_range(-1.0..1.0))
}

pub fn rand_lowrank(r: &mut impl Rng, nx: usize, nv: usize, rank: usize) -> LowRankMatrix {
    LowRankMatrix::new(
        DVector::from_vec(rand_vec(r, rank)),
        rand_mat(r, nx, rank),
        rand_mat(r, nv, rank),
        2.0 * PI / nx as f64,
        12.0 / (nv - 1) as f64,
    )
    .unwrap()
}

pub fn rand_ht(r: &mut impl Rng, space: HtSpace, ranks: [usize; 4]) -> HtTensor {
    let [r12, r34, r3, r4] = ranks;
    HtTensor::new(
        space,
        rand_mat(r, space.n_space(), r12),
        rand_mat(r, r12, r34),
        (0..r34).map(|_| rand_mat(r, r3, r4)).collect(),
        rand_mat(r, space.nv, r3),
        rand_mat(r, space.nv, r4),
    )
    .unwrap()
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

// ---------------------------------------------------------------- stencils

/// Fifth-order upwind derivative at every node, written out node by node.
/// `plus` biases the stencil to the left (information moving right).
pub fn stencil_derivative(u: &[f64], h: f64, plus: bool, periodic: bool) -> Vec<f64> {
    let n = u.len() as isize;
    let at = |k: isize| -> f64 {
        if periodic {
            u[k.rem_euclid(n) as usize]
        } else if (0..n).contains(&k) {
            u[k as usize]
        } else {
            0.0
        }
    };
    // Interface value at k + 1/2.
    let face = |k: isize| -> f64 {
        if plus {
            (2.0 * at(k - 2) - 13.0 * at(k - 1) + 47.0 * at(k) + 27.0 * at(k + 1) - 3.0 * at(k + 2))
                / 60.0
        } else {
            (-3.0 * at(k - 1) + 27.0 * at(k) + 47.0 * at(k + 1) - 13.0 * at(k + 2)
                + 2.0 * at(k + 3))
                / 60.0
        }
    };
    (0..n).map(|k| (face(k) - face(k - 1)) / h).collect()
}

// ----------------------------------------------------------------- Poisson

fn dft(u: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = u.len();
    let s = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|m| {
            (0..n)
                .map(|j| {
                    u[j] * Complex64::from_polar(1.0, s * 2.0 * PI * (m * j) as f64 / n as f64)
                })
                .sum()
        })
        .collect()
}

fn wavenumber(m: usize, n: usize, length: f64) -> Option<f64> {
    if 2 * m == n {
        return None;
    }
    let mm = if m <= n / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    };
    Some(2.0 * PI * mm / length)
}

/// `E` with `E_x = rho - mean(rho)` by a direct DFT (Nyquist mode dropped).
pub fn dft_field(rho: &[f64], length: f64) -> Vec<f64> {
    let n = rho.len();
    let hat = dft(
        &rho.iter()
            .map(|&r| Complex64::new(r, 0.0))
            .collect::<Vec<_>>(),
        false,
    );
    let mut e = vec![Complex64::new(0.0, 0.0); n];
    for m in 1..n {
        if let Some(k) = wavenumber(m, n, length) {
            e[m] = hat[m] / Complex64::new(0.0, k);
        }
    }
    dft(&e, true).iter().map(|c| c.re / n as f64).collect()
}

/// `E = -grad phi` with `-lap phi = rho - mean(rho)`, row-major `n1 x n2`.
pub fn dft_field_2d(rho: &[f64], n1: usize, n2: usize, l1: f64, l2: f64) -> (Vec<f64>, Vec<f64>) {
    let z = Complex64::new(0.0, 0.0);
    let mut hat = vec![z; n1 * n2];
    for m1 in 0..n1 {
        for m2 in 0..n2 {
            let mut s = z;
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let ph =
                        -2.0 * PI * ((m1 * i1) as f64 / n1 as f64 + (m2 * i2) as f64 / n2 as f64);
                    s += rho[i1 * n2 + i2] * Complex64::from_polar(1.0, ph);
                }
            }
            hat[m1 * n2 + m2] = s;
        }
    }
    let nyq = |n: usize, l: f64| PI * n as f64 / l;
    let mut e1 = vec![z; n1 * n2];
    let mut e2 = vec![z; n1 * n2];
    for m1 in 0..n1 {
        for m2 in 0..n2 {
            if m1 == 0 && m2 == 0 {
                continue;
            }
            let k1 = wavenumber(m1, n1, l1);
            let k2 = wavenumber(m2, n2, l2);
            let a = k1.unwrap_or(nyq(n1, l1));
            let b = k2.unwrap_or(nyq(n2, l2));
            let phi = hat[m1 * n2 + m2] / (a * a + b * b);
            if let Some(k) = k1 {
                e1[m1 * n2 + m2] = -Complex64::new(0.0, k) * phi;
            }
            if let Some(k) = k2 {
                e2[m1 * n2 + m2] = -Complex64::new(0.0, k) * phi;
            }
        }
    }
    let back = |h: &[Complex64]| -> Vec<f64> {
        let mut out = vec![0.0; n1 * n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let mut s = z;
                for m1 in 0..n1 {
                    for m2 in 0..n2 {
                        let ph = 2.0
                            * PI
                            * ((m1 * i1) as f64 / n1 as f64 + (m2 * i2) as f64 / n2 as f64);
                        s += h[m1 * n2 + m2] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[i1 * n2 + i2] = s.re / (n1 * n2) as f64;
            }
        }
        out
    };
    (back(&e1), back(&e2))
}

// -------------------------------------------------------------- 1D1V scheme

pub struct Grid1 {
    pub x: Vec<f64>,
    pub hx: f64,
    pub length: f64,
    pub v: Vec<f64>,
    pub hv: f64,
    pub beta: f64,
    pub forced: bool,
}

impl Grid1 {
    pub fn new(nx: usize, x_min: f64, length: f64, nv: usize, v_max: f64, beta: f64) -> Self {
        let hx = length / nx as f64;
        let hv = 2.0 * v_max / (nv - 1) as f64;
        Self {
            x: (0..nx).map(|i| x_min + i as f64 * hx).collect(),
            hx,
            length,
            v: (0..nv).map(|j| -v_max + j as f64 * hv).collect(),
            hv,
            beta,
            forced: false,
        }
    }

    pub fn w(&self) -> Vec<f64> {
        self.v.iter().map(|v| (-v * v / self.beta).exp()).collect()
    }
}

/// `(rho, J, kappa)` by plain quadrature.
pub fn dense_moments(f: &DMatrix<f64>, g: &Grid1) -> [Vec<f64>; 3] {
    let mut m = [
        vec![0.0; f.nrows()],
        vec![0.0; f.nrows()],
        vec![0.0; f.nrows()],
    ];
    for i in 0..f.nrows() {
        for (j, &v) in g.v.iter().enumerate() {
            let a = f[(i, j)] * g.hv;
            m[0][i] += a;
            m[1][i] += a * v;
            m[2][i] += 0.5 * a * v * v;
        }
    }
    m
}

/// `w * p(v)` with `p` quadratic, fitted per cell so that its moments are
/// `(rho, J, kappa)`.
pub fn dense_f1(m: &[Vec<f64>; 3], g: &Grid1) -> DMatrix<f64> {
    let w = g.w();
    let mut gram = Matrix3::zeros();
    for (j, &v) in g.v.iter().enumerate() {
        let p = [1.0, v, v * v];
        for a in 0..3 {
            for b in 0..3 {
                gram[(a, b)] += w[j] * g.hv * p[a] * p[b];
            }
        }
    }
    let inv = gram.try_inverse().unwrap();
    DMatrix::from_fn(m[0].len(), g.v.len(), |i, j| {
        let c = inv * Vector3::new(m[0][i], m[1][i], 2.0 * m[2][i]);
        let v = g.v[j];
        w[j] * (c[0] + c[1] * v + c[2] * v * v)
    })
}

fn forced_psi(x: f64, v: f64, t: f64) -> f64 {
    let sp = PI.sqrt();
    let th = 2.0 * x - 2.0 * PI * t;
    (((4.0 * sp + 2.0) * v - (2.0 * PI + sp)) * th.sin() + sp * (0.25 - v) * (2.0 * th).sin())
        * (-(4.0 * v - 1.0).powi(2) / 4.0).exp()
}

/// Moments of the forcing plus the field-energy exchange, with the exact field.
fn forced_macro(x: f64, t: f64) -> [f64; 3] {
    let sp = PI.sqrt();
    let th = 2.0 * x - 2.0 * PI * t;
    let e = -sp / 4.0 * th.sin();
    [
        sp / 4.0 * (1.0 - 4.0 * PI) * th.sin(),
        sp / 16.0 * (3.0 + 4.0 * sp - 4.0 * PI) * th.sin() - PI / 16.0 * (2.0 * th).sin(),
        sp / 128.0 * (7.0 + 8.0 * sp - 12.0 * PI) * th.sin() - PI / 64.0 * (2.0 * th).sin()
            + sp / 8.0 * (2.0 - (1.0 - 4.0 * PI) * th.cos()) * e,
    ]
}

pub fn dense_rhs_1d(f: &DMatrix<f64>, e: &[f64], g: &Grid1, t: f64) -> DMatrix<f64> {
    let (nx, nv) = f.shape();
    let mut out = DMatrix::zeros(nx, nv);
    for j in 0..nv {
        let col: Vec<f64> = f.column(j).iter().copied().collect();
        let dp = stencil_derivative(&col, g.hx, true, true);
        let dm = stencil_derivative(&col, g.hx, false, true);
        let v = g.v[j];
        for i in 0..nx {
            out[(i, j)] -= v.max(0.0) * dp[i] + v.min(0.0) * dm[i];
        }
    }
    for i in 0..nx {
        let row: Vec<f64> = f.row(i).iter().copied().collect();
        let dp = stencil_derivative(&row, g.hv, true, false);
        let dm = stencil_derivative(&row, g.hv, false, false);
        for j in 0..nv {
            out[(i, j)] -= e[i].max(0.0) * dp[j] + e[i].min(0.0) * dm[j];
        }
    }
    if g.forced {
        for i in 0..nx {
            for j in 0..nv {
                out[(i, j)] += forced_psi(g.x[i], g.v[j], t);
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Dense1 {
    pub f: DMatrix<f64>,
    /// `(rho, J, e)` for the macro-coupled scheme.
    pub u: Option<[Vec<f64>; 3]>,
}

/// One stage `sum a_k Y_k + b_dt * L(src)` of the scheme with no truncation.
/// `lomac` replaces the moments of the result with the macroscopic update.
pub fn dense_stage_1d(
    g: &Grid1,
    combo: &[(f64, &Dense1)],
    src: &Dense1,
    b_dt: f64,
    t: f64,
    lomac: bool,
) -> Dense1 {
    let m = dense_moments(&src.f, g);
    let e = dft_field(&m[0], g.length);
    let rhs = dense_rhs_1d(&src.f, &e, g, t);
    let mut f = rhs * b_dt;
    for (a, y) in combo {
        f += &y.f * *a;
    }
    if !lomac {
        return Dense1 { f, u: None };
    }
    let us = src.u.as_ref().unwrap();
    let nx = g.x.len();
    // Kinetic split fluxes of (rho, J, e).
    let mut fp = [vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]];
    let mut fm = fp.clone();
    for i in 0..nx {
        for (j, &v) in g.v.iter().enumerate() {
            let a = src.f[(i, j)] * g.hv;
            let (p, q) = (v.max(0.0), v.min(0.0));
            fp[0][i] += a * p;
            fp[1][i] += a * p * p;
            fp[2][i] += 0.5 * a * p * p * p;
            fm[0][i] += a * q;
            fm[1][i] += a * q * q;
            fm[2][i] += 0.5 * a * q * q * q;
        }
    }
    let mut u = [vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]];
    for var in 0..3 {
        let dp = stencil_derivative(&fp[var], g.hx, true, true);
        let dm = stencil_derivative(&fm[var], g.hx, false, true);
        for i in 0..nx {
            let mut s = if var == 1 { us[0][i] * e[i] } else { 0.0 };
            if g.forced {
                s += forced_macro(g.x[i], t)[var];
            }
            let mut acc = b_dt * (-(dp[i] + dm[i]) + s);
            for (a, y) in combo {
                acc += a * y.u.as_ref().unwrap()[var][i];
            }
            u[var][i] = acc;
        }
    }
    let e_new = dft_field(&u[0], g.length);
    let kappa: Vec<f64> = (0..nx)
        .map(|i| u[2][i] - 0.5 * e_new[i] * e_new[i])
        .collect();
    let target = [u[0].clone(), u[1].clone(), kappa];
    let have = dense_moments(&f, g);
    let diff: [Vec<f64>; 3] =
        std::array::from_fn(|k| (0..nx).map(|i| target[k][i] - have[k][i]).collect());
    let f = f + dense_f1(&diff, g);
    Dense1 { f, u: Some(u) }
}

/// Heun startup step.
pub fn dense_heun_1d(g: &Grid1, y: &Dense1, dt: f64, t: f64, lomac: bool) -> Dense1 {
    let mid = dense_stage_1d(g, &[(1.0, y)], y, dt, t, lomac);
    dense_stage_1d(g, &[(0.5, y), (0.5, &mid)], &mid, 0.5 * dt, t + dt, lomac)
}

/// Multistep update from `y^n` and `y^{n-2}`.
pub fn dense_multistep_1d(
    g: &Grid1,
    yn: &Dense1,
    ynm2: &Dense1,
    dt: f64,
    t: f64,
    lomac: bool,
) -> Dense1 {
    dense_stage_1d(g, &[(0.75, yn), (0.25, ynm2)], yn, 1.5 * dt, t, lomac)
}

// -------------------------------------------------------------- 2D2V scheme

pub struct Grid2 {
    pub n1: usize,
    pub n2: usize,
    pub h1: f64,
    pub h2: f64,
    pub l1: f64,
    pub l2: f64,
    pub v: Vec<f64>,
    pub hv: f64,
    pub beta: f64,
}

impl Grid2 {
    pub fn new(n: usize, length: f64, nv: usize, v_max: f64, beta: f64) -> Self {
        let hv = 2.0 * v_max / (nv - 1) as f64;
        Self {
            n1: n,
            n2: n,
            h1: length / n as f64,
            h2: length / n as f64,
            l1: length,
            l2: length,
            v: (0..nv).map(|j| -v_max + j as f64 * hv).collect(),
            hv,
            beta,
        }
    }

    pub fn nv(&self) -> usize {
        self.v.len()
    }
}

/// `(rho, J1, J2, kappa)` of a dense `n_space x nv^2` array.
pub fn dense_moments_2d(f: &DMatrix<f64>, g: &Grid2) -> [Vec<f64>; 4] {
    let nv = g.nv();
    let ns = f.nrows();
    let mut m: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; ns]);
    let cell = g.hv * g.hv;
    for s in 0..ns {
        for a in 0..nv {
            for b in 0..nv {
                let val = f[(s, a * nv + b)] * cell;
                let (v1, v2) = (g.v[a], g.v[b]);
                m[0][s] += val;
                m[1][s] += val * v1;
                m[2][s] += val * v2;
                m[3][s] += 0.5 * val * (v1 * v1 + v2 * v2);
            }
        }
    }
    m
}

/// Weighted projection onto `w(v1) w(v2) span{1, v1, v2, |v|^2}` matching
/// the given moments, cell by cell.
pub fn dense_f1_2d(m: &[Vec<f64>; 4], g: &Grid2) -> DMatrix<f64> {
    let nv = g.nv();
    let w: Vec<f64> = g.v.iter().map(|v| (-v * v / g.beta).exp()).collect();
    let basis = |a: usize, b: usize| {
        let (v1, v2) = (g.v[a], g.v[b]);
        [1.0, v1, v2, v1 * v1 + v2 * v2]
    };
    let mut gram = DMatrix::<f64>::zeros(4, 4);
    for a in 0..nv {
        for b in 0..nv {
            let p = basis(a, b);
            let ww = w[a] * w[b] * g.hv * g.hv;
            for r in 0..4 {
                for c in 0..4 {
                    gram[(r, c)] += ww * p[r] * p[c];
                }
            }
        }
    }
    let inv = gram.try_inverse().unwrap();
    let ns = m[0].len();
    let mut out = DMatrix::zeros(ns, nv * nv);
    for s in 0..ns {
        let c = &inv * DVector::from_vec(vec![m[0][s], m[1][s], m[2][s], 2.0 * m[3][s]]);
        for a in 0..nv {
            for b in 0..nv {
                let p = basis(a, b);
                out[(s, a * nv + b)] = w[a] * w[b] * (0..4).map(|r| c[r] * p[r]).sum::<f64>();
            }
        }
    }
    out
}

/// Applies a 1D operator along one of the four axes of a dense array.
fn along_axis(
    f: &DMatrix<f64>,
    g: &Grid2,
    axis: usize,
    op: impl Fn(&[f64]) -> Vec<f64>,
) -> DMatrix<f64> {
    let nv = g.nv();
    let (n1, n2) = (g.n1, g.n2);
    let idx = |i1: usize, i2: usize, a: usize, b: usize| (i1 * n2 + i2, a * nv + b);
    let mut out = DMatrix::zeros(f.nrows(), f.ncols());
    let dims = [n1, n2, nv, nv];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for a in 0..nv {
                for b in 0..nv {
                    let mut pos = [i1, i2, a, b];
                    if pos[axis] != 0 {
                        continue;
                    }
                    let line: Vec<f64> = (0..dims[axis])
                        .map(|k| {
                            pos[axis] = k;
                            let (r, c) = idx(pos[0], pos[1], pos[2], pos[3]);
                            f[(r, c)]
                        })
                        .collect();
                    let res = op(&line);
                    for (k, val) in res.into_iter().enumerate() {
                        pos[axis] = k;
                        let (r, c) = idx(pos[0], pos[1], pos[2], pos[3]);
                        out[(r, c)] = val;
                    }
                }
            }
        }
    }
    out
}

pub fn dense_rhs_2d(f: &DMatrix<f64>, e1: &[f64], e2: &[f64], g: &Grid2) -> DMatrix<f64> {
    let nv = g.nv();
    let hs = [g.h1, g.h2, g.hv, g.hv];
    let d = |axis: usize, plus: bool| {
        along_axis(f, g, axis, |u| {
            stencil_derivative(u, hs[axis], plus, axis < 2)
        })
    };
    let (dx1p, dx1m, dx2p, dx2m) = (d(0, true), d(0, false), d(1, true), d(1, false));
    let (dv1p, dv1m, dv2p, dv2m) = (d(2, true), d(2, false), d(3, true), d(3, false));
    DMatrix::from_fn(f.nrows(), f.ncols(), |s, c| {
        let (a, b) = (c / nv, c % nv);
        let (v1, v2) = (g.v[a], g.v[b]);
        -(v1.max(0.0) * dx1p[(s, c)]
            + v1.min(0.0) * dx1m[(s, c)]
            + v2.max(0.0) * dx2p[(s, c)]
            + v2.min(0.0) * dx2m[(s, c)]
            + e1[s].max(0.0) * dv1p[(s, c)]
            + e1[s].min(0.0) * dv1m[(s, c)]
            + e2[s].max(0.0) * dv2p[(s, c)]
            + e2[s].min(0.0) * dv2m[(s, c)])
    })
}

#[derive(Clone, Debug)]
pub struct Dense2 {
    pub f: DMatrix<f64>,
    /// `(rho, J1, J2, e)`.
    pub u: Option<[Vec<f64>; 4]>,
}

pub fn dense_stage_2d(
    g: &Grid2,
    combo: &[(f64, &Dense2)],
    src: &Dense2,
    b_dt: f64,
    lomac: bool,
) -> Dense2 {
    let nv = g.nv();
    let ns = g.n1 * g.n2;
    let m = dense_moments_2d(&src.f, g);
    let (e1, e2) = dft_field_2d(&m[0], g.n1, g.n2, g.l1, g.l2);
    let mut f = dense_rhs_2d(&src.f, &e1, &e2, g) * b_dt;
    for (a, y) in combo {
        f += &y.f * *a;
    }
    if !lomac {
        return Dense2 { f, u: None };
    }
    let us = src.u.as_ref().unwrap();
    let mut div: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; ns]);
    for dir in 0..2 {
        let mut fp: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; ns]);
        let mut fm = fp.clone();
        for s in 0..ns {
            for a in 0..nv {
                for b in 0..nv {
                    let val = src.f[(s, a * nv + b)] * g.hv * g.hv;
                    let (v1, v2) = (g.v[a], g.v[b]);
                    let vd = if dir == 0 { v1 } else { v2 };
                    let mono = [1.0, v1, v2, 0.5 * (v1 * v1 + v2 * v2)];
                    for k in 0..4 {
                        fp[k][s] += val * vd.max(0.0) * mono[k];
                        fm[k][s] += val * vd.min(0.0) * mono[k];
                    }
                }
            }
        }
        let h = if dir == 0 { g.h1 } else { g.h2 };
        for k in 0..4 {
            let axis_op = |data: &[f64], plus: bool| -> Vec<f64> {
                let mut out = vec![0.0; ns];
                let outer = if dir == 0 { g.n2 } else { g.n1 };
                let inner = if dir == 0 { g.n1 } else { g.n2 };
                for o in 0..outer {
                    let pos = |i: usize| if dir == 0 { i * g.n2 + o } else { o * g.n2 + i };
                    let line: Vec<f64> = (0..inner).map(|i| data[pos(i)]).collect();
                    for (i, val) in stencil_derivative(&line, h, plus, true)
                        .into_iter()
                        .enumerate()
                    {
                        out[pos(i)] = val;
                    }
                }
                out
            };
            let dp = axis_op(&fp[k], true);
            let dm = axis_op(&fm[k], false);
            for s in 0..ns {
                div[k][s] += dp[s] + dm[s];
            }
        }
    }
    let mut u: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; ns]);
    for k in 0..4 {
        for s in 0..ns {
            let src_term = match k {
                1 => us[0][s] * e1[s],
                2 => us[0][s] * e2[s],
                _ => 0.0,
            };
            let mut acc = b_dt * (-div[k][s] + src_term);
            for (a, y) in combo {
                acc += a * y.u.as_ref().unwrap()[k][s];
            }
            u[k][s] = acc;
        }
    }
    let (n1e, n2e) = dft_field_2d(&u[0], g.n1, g.n2, g.l1, g.l2);
    let kappa: Vec<f64> = (0..ns)
        .map(|s| u[3][s] - 0.5 * (n1e[s] * n1e[s] + n2e[s] * n2e[s]))
        .collect();
    let have = dense_moments_2d(&f, g);
    let target = [u[0].clone(), u[1].clone(), u[2].clone(), kappa];
    let diff: [Vec<f64>; 4] =
        std::array::from_fn(|k| (0..ns).map(|s| target[k][s] - have[k][s]).collect());
    let f = f + dense_f1_2d(&diff, g);
    Dense2 { f, u: Some(u) }
}

pub fn dense_heun_2d(g: &Grid2, y: &Dense2, dt: f64, lomac: bool) -> Dense2 {
    let mid = dense_stage_2d(g, &[(1.0, y)], y, dt, lomac);
    dense_stage_2d(g, &[(0.5, y), (0.5, &mid)], &mid, 0.5 * dt, lomac)
}

pub fn dense_multistep_2d(g: &Grid2, yn: &Dense2, ynm2: &Dense2, dt: f64, lomac: bool) -> Dense2 {
    dense_stage_2d(g, &[(0.75, yn), (0.25, ynm2)], yn, 1.5 * dt, lomac)
}

// ------------------------------------------------------------ Landau theory

/// Plasma dispersion function by its entire-function series.
pub fn plasma_z(z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let z2 = z * z;
    for n in 1..200 {
        term = term * (-2.0 * z2) / (2 * n + 1) as f64;
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    i * PI.sqrt() * (-z2).exp() - 2.0 * z * sum
}

/// Least-damped root of `1 + (1 + zeta Z(zeta)) / k^2 = 0` for a unit
/// Maxwellian, `zeta = omega / (sqrt(2) k)`. Returns `omega`.
pub fn landau_root(k: f64, guess: Complex64) -> Complex64 {
    let d = |w: Complex64| {
        let zeta = w / (2f64.sqrt() * k);
        1.0 + (1.0 + zeta * plasma_z(zeta)) / (k * k)
    };
    let mut w = guess;
    for _ in 0..100 {
        let h = 1e-7;
        let dw = (d(w + h) - d(w - h)) / (2.0 * h);
        let step = d(w) / dw;
        w -= step;
        if step.norm() < 1e-14 {
            break;
        }
    }
    w
}

/// Least-squares slope of `log y` against `t` at the local maxima of `y`
/// inside `[t0, t1]`.
pub fn peak_decay_rate(t: &[f64], y: &[f64], t0: f64, t1: f64) -> f64 {
    let mut pts = Vec::new();
    for k in 1..y.len() - 1 {
        if t[k] >= t0 && t[k] <= t1 && y[k] > y[k - 1] && y[k] >= y[k + 1] {
            pts.push((t[k], y[k].ln()));
        }
    }
    assert!(pts.len() >= 3, "too few peaks to fit: {}", pts.len());
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mt, my) = (st / n, sy / n);
    let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    num / den
}

// ------------------------------------------------------ moment exactness

use lomac::ht::{
    ht_build_f1, ht_conservative_truncate, ht_lomac_truncate, ht_moments, ht_project_complement,
    Moments2D, ProjectionBasis4D,
};
use lomac::projection::{
    build_f1, conservative_decompose, conservative_truncate, lomac_truncate, moments, Moments1D,
    ProjectionBasis,
};
use lomac::{VelocityGrid, WeightFunction};

/// Worst error of one property over the random instances, as a fraction of
/// its tolerance (`<= 1` passes).
#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.worst <= 1.0
    }
}

fn fields_1d(m: &Moments1D) -> [&DVector<f64>; 3] {
    [&m.rho, &m.j, &m.kappa]
}

fn fields_2d(m: &Moments2D) -> [&DVector<f64>; 4] {
    [&m.rho, &m.j1, &m.j2, &m.kappa]
}

/// Componentwise: relative to the target field, or absolute against
/// `zero_scale` where the target field vanishes.
fn moment_error(got: &[&DVector<f64>], want: &[&DVector<f64>], zero_scale: f64) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| {
            let d = (*g - *w).amax();
            let s = w.amax();
            if s > 0.0 {
                d / s / 1e-12
            } else {
                d / zero_scale.max(f64::MIN_POSITIVE) / 1e-11
            }
        })
        .fold(0.0, f64::max)
}

fn zero_error(got: &[&DVector<f64>], scale: f64) -> f64 {
    got.iter().map(|g| g.amax()).fold(0.0, f64::max) / scale / 1e-11
}

pub fn rand_grid(r: &mut impl Rng, lo: usize, hi: usize) -> VelocityGrid {
    let n = r.gen_range(lo..=hi);
    let beta = r.gen_range(1.0..4.0);
    VelocityGrid::new(
        n,
        r.gen_range(4.0..8.0),
        WeightFunction::gaussian(beta).unwrap(),
    )
    .unwrap()
}

/// A random distribution with Gaussian-like velocity decay.
pub fn rand_lowrank_on(
    r: &mut impl Rng,
    nx: usize,
    v: &VelocityGrid,
    rank: usize,
) -> LowRankMatrix {
    let vf = DMatrix::from_fn(v.n(), rank, |j, _| {
        let x = v.nodes()[j];
        (-x * x / 2.0).exp() * r.gen_range(-1.0..1.0)
    });
    LowRankMatrix::new(
        DVector::from_vec(rand_vec(r, rank)),
        rand_mat(r, nx, rank),
        vf,
        2.0 * PI / nx as f64,
        v.h(),
    )
    .unwrap()
}

pub fn rand_moments_1d(r: &mut impl Rng, nx: usize) -> Moments1D {
    let mut v = || DVector::from_vec(rand_vec(r, nx));
    Moments1D {
        rho: v(),
        j: v(),
        kappa: v(),
    }
}

pub fn rand_moments_2d(r: &mut impl Rng, n: usize) -> Moments2D {
    let mut v = || DVector::from_vec(rand_vec(r, n));
    Moments2D {
        rho: v(),
        j1: v(),
        j2: v(),
        kappa: v(),
    }
}

pub fn rand_ht_on(r: &mut impl Rng, n: usize, v: &VelocityGrid, ranks: [usize; 4]) -> HtTensor {
    let space = HtSpace {
        n1: n,
        n2: n,
        nv: v.n(),
        hx1: 2.0 * PI / n as f64,
        hx2: 2.0 * PI / n as f64,
        hv: v.h(),
    };
    let t = rand_ht(r, space, ranks);
    let decay: Vec<f64> = v.nodes().iter().map(|x| (-x * x / 2.0).exp()).collect();
    t.map_v_rows(&decay, &decay).unwrap()
}

fn rand_eps(r: &mut impl Rng) -> f64 {
    10f64.powf(r.gen_range(-6.0..-1.0))
}

/// Random-instance checks of every moment-preserving operation.
pub fn moment_exactness_suite(instances: usize, seed: u64) -> Vec<PropertyResult> {
    let mut r = rng(seed);
    let mut worst = [0.0f64; 8];
    for _ in 0..instances {
        let v = rand_grid(&mut r, 16, 64);
        let nx = r.gen_range(8..=32);
        let basis = ProjectionBasis::new(&v);
        let rank = r.gen_range(1..=6);
        let f = rand_lowrank_on(&mut r, nx, &v, rank);
        let mf = moments(&f, &v).unwrap();
        let scale = mf.max_abs();

        let m = rand_moments_1d(&mut r, nx);
        let f1 = build_f1(&m, &basis, f.hx());
        let back = moments(&f1, &v).unwrap();
        worst[0] = worst[0].max(moment_error(&fields_1d(&back), &fields_1d(&m), 1.0));

        let (_, f2) = conservative_decompose(&f, &basis).unwrap();
        let m2 = moments(&f2, &v).unwrap();
        worst[1] = worst[1].max(zero_error(&fields_1d(&m2), scale));

        let eps = rand_eps(&mut r);
        let tc = conservative_truncate(&f, &basis, eps).unwrap();
        let mt = moments(&tc, &v).unwrap();
        worst[2] = worst[2].max(moment_error(&fields_1d(&mt), &fields_1d(&mf), scale));

        let target = Moments1D {
            rho: &mf.rho + DVector::from_vec(rand_vec(&mut r, nx)) * 0.1,
            j: &mf.j + DVector::from_vec(rand_vec(&mut r, nx)) * 0.1,
            kappa: &mf.kappa + DVector::from_vec(rand_vec(&mut r, nx)) * 0.1,
        };
        let tm = lomac_truncate(&f, &target, &basis, eps).unwrap();
        let mm = moments(&tm, &v).unwrap();
        worst[3] = worst[3].max(moment_error(&fields_1d(&mm), &fields_1d(&target), scale));

        let v = rand_grid(&mut r, 8, 16);
        let n = r.gen_range(4..=8);
        let basis = ProjectionBasis4D::new(&v);
        let ranks = [
            r.gen_range(1..=3),
            r.gen_range(1..=3),
            r.gen_range(1..=3),
            r.gen_range(1..=3),
        ];
        let f = rand_ht_on(&mut r, n, &v, ranks);
        let mf = ht_moments(&f, &v).unwrap();
        let scale = mf.max_abs();

        let m = rand_moments_2d(&mut r, n * n);
        let f1 = ht_build_f1(&m, &basis, f.space()).unwrap();
        let back = ht_moments(&f1, &v).unwrap();
        worst[4] = worst[4].max(moment_error(&fields_2d(&back), &fields_2d(&m), 1.0));

        let f2 = ht_project_complement(&f, &basis).unwrap();
        let m2 = ht_moments(&f2, &v).unwrap();
        worst[5] = worst[5].max(zero_error(&fields_2d(&m2), scale));

        let eps = rand_eps(&mut r);
        let tc = ht_conservative_truncate(&f, &basis, eps).unwrap();
        let mt = ht_moments(&tc, &v).unwrap();
        worst[6] = worst[6].max(moment_error(&fields_2d(&mt), &fields_2d(&mf), scale));

        let mut target = mf.clone();
        for fld in [
            &mut target.rho,
            &mut target.j1,
            &mut target.j2,
            &mut target.kappa,
        ] {
            *fld += DVector::from_vec(rand_vec(&mut r, n * n)) * 0.1;
        }
        let tm = ht_lomac_truncate(&f, &target, &basis, eps).unwrap();
        let mm = ht_moments(&tm, &v).unwrap();
        worst[7] = worst[7].max(moment_error(&fields_2d(&mm), &fields_2d(&target), scale));
    }
    let names = [
        "build_f1 round trip",
        "conservative_decompose zero remainder",
        "conservative_truncate preserves moments",
        "lomac_truncate hits target",
        "ht_build_f1 round trip",
        "ht_project_complement zero remainder",
        "ht_conservative_truncate preserves moments",
        "ht_lomac_truncate hits target",
    ];
    names
        .iter()
        .zip(worst)
        .map(|(name, w)| PropertyResult {
            name,
            instances,
            worst: w,
        })
        .collect()
}

// ---------------------------------------------------------- unit accuracy

/// `max |E_x - (rho - mean rho)|` with the derivative taken by direct DFT.
pub fn poisson_residual_1d(e: &[f64], rho: &[f64], length: f64) -> f64 {
    let n = e.len();
    let hat = dft(
        &e.iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect::<Vec<_>>(),
        false,
    );
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    for m in 1..n {
        if let Some(k) = wavenumber(m, n, length) {
            d[m] = hat[m] * Complex64::new(0.0, k);
        }
    }
    let ex: Vec<f64> = dft(&d, true).iter().map(|c| c.re / n as f64).collect();
    let mean = rho.iter().sum::<f64>() / n as f64;
    (0..n)
        .map(|i| (ex[i] - (rho[i] - mean)).abs())
        .fold(0.0, f64::max)
}

/// `max |d1 E1 + d2 E2 - (rho - mean rho)|`, derivatives by direct DFT along
/// each axis.
pub fn poisson_residual_2d(
    e1: &[f64],
    e2: &[f64],
    rho: &[f64],
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
) -> f64 {
    let deriv = |u: &[f64], n: usize, l: f64| -> Vec<f64> {
        let hat = dft(
            &u.iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect::<Vec<_>>(),
            false,
        );
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        for m in 1..n {
            if let Some(k) = wavenumber(m, n, l) {
                d[m] = hat[m] * Complex64::new(0.0, k);
            }
        }
        dft(&d, true).iter().map(|c| c.re / n as f64).collect()
    };
    let mut div = vec![0.0; n1 * n2];
    for i2 in 0..n2 {
        let line: Vec<f64> = (0..n1).map(|i1| e1[i1 * n2 + i2]).collect();
        for (i1, x) in deriv(&line, n1, l1).into_iter().enumerate() {
            div[i1 * n2 + i2] += x;
        }
    }
    for i1 in 0..n1 {
        for (i2, x) in deriv(&e2[i1 * n2..(i1 + 1) * n2], n2, l2)
            .into_iter()
            .enumerate()
        {
            div[i1 * n2 + i2] += x;
        }
    }
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    (0..rho.len())
        .map(|s| (div[s] - (rho[s] - mean)).abs())
        .fold(0.0, f64::max)
}

/// Observed orders of a periodic derivative `op(u, h)` on `sin(k x)` over the
/// given grids.
pub fn derivative_orders(op: impl Fn(&[f64], f64) -> Vec<f64>, sizes: &[usize]) -> Vec<f64> {
    let k = 3.0;
    let errs: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let h = 2.0 * PI / n as f64;
            let u: Vec<f64> = (0..n).map(|i| (k * i as f64 * h).sin()).collect();
            let d = op(&u, h);
            (0..n)
                .map(|i| (d[i] - k * (k * i as f64 * h).cos()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// A density with several modes, none at the Nyquist index.
pub fn multimode_density(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = i as f64 * length / n as f64;
            let k = 2.0 * PI / length;
            1.0 + 0.3 * (k * x).cos() - 0.2 * (3.0 * k * x).sin() + 0.05 * (7.0 * k * x).cos()
        })
        .collect()
}

// ------------------------------------------------------ dense equivalence

use lomac::{Preset, Simulation, SolverConfig, Variant};

pub fn small_1d(preset: Preset, variant: Variant) -> SolverConfig {
    let mut cfg = SolverConfig::from_preset(preset);
    cfg.variant = variant;
    cfg.nx = 16;
    cfg.nv = 32;
    cfg.eps = 0.0;
    cfg.rank_cap = 10_000;
    cfg.t_end = 1.0;
    if preset == Preset::StrongLandau1d {
        cfg.alpha = 0.5;
    }
    cfg
}

pub fn small_2d(variant: Variant) -> SolverConfig {
    let mut cfg = SolverConfig::from_preset(Preset::WeakLandau2d2v);
    cfg.variant = variant;
    cfg.nx = 8;
    cfg.nv = 16;
    cfg.alpha = 0.2;
    cfg.eps = 0.0;
    cfg.rank_cap = 10_000;
    cfg
}

fn dense_start_1d(cfg: &SolverConfig) -> (Grid1, Dense1) {
    let sim = Simulation::new(cfg.clone()).unwrap();
    let x = sim.spatial_grids()[0].clone();
    let v = sim.velocity_grid().clone();
    let mut g = Grid1::new(cfg.nx, x.x_min(), x.length(), cfg.nv, cfg.v_max, cfg.beta);
    g.forced = cfg.preset == Preset::Forced;
    let f = cfg
        .preset
        .initial_1d(&x, &v, cfg.alpha, cfg.k)
        .unwrap()
        .dense();
    let u = (cfg.variant == Variant::III).then(|| {
        let [rho, j, kappa] = dense_moments(&f, &g);
        let e = dft_field(&rho, g.length);
        let en = kappa.iter().zip(&e).map(|(k, e)| k + 0.5 * e * e).collect();
        [rho, j, en]
    });
    (g, Dense1 { f, u })
}

/// Relative error of `f`, and of the macro state scaled by max |rho|.
fn level_error_1d(sim: &Simulation, want: &Dense1) -> f64 {
    let got = sim.current();
    let mut err = rel_diff(&got.f.as_1d().unwrap().dense(), &want.f);
    if let Some(u) = &want.u {
        let m = got.macro_state.as_ref().unwrap();
        let scale = max_abs(&u[0]);
        for (a, b) in [(&m.rho, &u[0]), (&m.j[0], &u[1]), (&m.e, &u[2])] {
            err = err.max(max_abs_diff(a, b) / scale);
        }
    }
    err
}

/// Worst error of the initial level and three steps (Heun, Heun,
/// multistep) against the dense scheme.
pub fn dense_equivalence_1d(preset: Preset, variant: Variant) -> f64 {
    let cfg = small_1d(preset, variant);
    let mut sim = Simulation::new(cfg.clone()).unwrap();
    let (g, y0) = dense_start_1d(&cfg);
    let lomac = variant == Variant::III;
    let dt = sim.dt();
    let mut worst = level_error_1d(&sim, &y0);
    let y1 = dense_heun_1d(&g, &y0, dt, 0.0, lomac);
    let y2 = dense_heun_1d(&g, &y1, dt, dt, lomac);
    let y3 = dense_multistep_1d(&g, &y2, &y0, dt, 2.0 * dt, lomac);
    for want in [&y1, &y2, &y3] {
        sim.step().unwrap();
        worst = worst.max(level_error_1d(&sim, want));
    }
    worst
}

fn dense_start_2d(cfg: &SolverConfig) -> (Grid2, Dense2) {
    let sim = Simulation::new(cfg.clone()).unwrap();
    let x = sim.spatial_grids()[0].clone();
    let v = sim.velocity_grid().clone();
    let g = Grid2::new(cfg.nx, x.length(), cfg.nv, cfg.v_max, cfg.beta);
    let f = cfg
        .preset
        .initial_2d(&x, &x, &v, cfg.alpha, cfg.k)
        .unwrap()
        .dense();
    let u = (cfg.variant == Variant::III).then(|| {
        let [rho, j1, j2, kappa] = dense_moments_2d(&f, &g);
        let (e1, e2) = dft_field_2d(&rho, g.n1, g.n2, g.l1, g.l2);
        let en = (0..rho.len())
            .map(|s| kappa[s] + 0.5 * (e1[s] * e1[s] + e2[s] * e2[s]))
            .collect();
        [rho, j1, j2, en]
    });
    (g, Dense2 { f, u })
}

fn level_error_2d(sim: &Simulation, want: &Dense2) -> f64 {
    let got = sim.current();
    let mut err = rel_diff(&got.f.as_2d().unwrap().dense(), &want.f);
    if let Some(u) = &want.u {
        let m = got.macro_state.as_ref().unwrap();
        let scale = max_abs(&u[0]);
        for (a, b) in [
            (&m.rho, &u[0]),
            (&m.j[0], &u[1]),
            (&m.j[1], &u[2]),
            (&m.e, &u[3]),
        ] {
            err = err.max(max_abs_diff(a, b) / scale);
        }
    }
    err
}

pub fn dense_equivalence_2d(variant: Variant) -> f64 {
    let cfg = small_2d(variant);
    let mut sim = Simulation::new(cfg.clone()).unwrap();
    let (g, y0) = dense_start_2d(&cfg);
    let lomac = variant == Variant::III;
    let dt = sim.dt();
    let mut worst = level_error_2d(&sim, &y0);
    let y1 = dense_heun_2d(&g, &y0, dt, lomac);
    let y2 = dense_heun_2d(&g, &y1, dt, lomac);
    let y3 = dense_multistep_2d(&g, &y2, &y0, dt, lomac);
    for want in [&y1, &y2, &y3] {
        sim.step().unwrap();
        worst = worst.max(level_error_2d(&sim, want));
    }
    worst
}
