//! Hierarchical Tucker tensors on the fixed dimension tree `{(1,2),3,4}`
//! for 2D2V distributions.
//!
//! ```text
//! f(i12, j3, j4) = sum_{l12,l34} U12[i12,l12] B[l12,l34]
//!                  * sum_{a,b} B34_{l34}[a,b] U3[j3,a] U4[j4,b]
//! ```
//!
//! Space is kept at full grid resolution: `U12` is indexed by the flattened
//! row-major index `i1 * n2 + i2`. Both velocity directions share one grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{LomacError, Result};
use crate::fdops::{
    upwind_derivative, upwind_derivative_axis0, upwind_derivative_axis1, Boundary, Direction,
};
use crate::field::ElectricField2D;
use crate::grid::{SpatialGrid, VelocityGrid};
use crate::lowrank::{left_svd, sorted_svd, sqrt_weights, tail_rank, thin_qr};

/// Grid sizes and spacings of a 2D2V tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtSpace {
    pub n1: usize,
    pub n2: usize,
    pub nv: usize,
    pub hx1: f64,
    pub hx2: f64,
    pub hv: f64,
}

impl HtSpace {
    pub fn from_grids(x1: &SpatialGrid, x2: &SpatialGrid, v: &VelocityGrid) -> Self {
        Self {
            n1: x1.n(),
            n2: x2.n(),
            nv: v.n(),
            hx1: x1.h(),
            hx2: x2.h(),
            hv: v.h(),
        }
    }

    pub fn n_space(&self) -> usize {
        self.n1 * self.n2
    }

    fn cell(&self) -> f64 {
        self.hx1 * self.hx2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HtTensor {
    space: HtSpace,
    u12: DMatrix<f64>,
    b_root: DMatrix<f64>,
    b34: Vec<DMatrix<f64>>,
    u3: DMatrix<f64>,
    u4: DMatrix<f64>,
    canonical: bool,
}

impl HtTensor {
    pub fn new(
        space: HtSpace,
        u12: DMatrix<f64>,
        b_root: DMatrix<f64>,
        b34: Vec<DMatrix<f64>>,
        u3: DMatrix<f64>,
        u4: DMatrix<f64>,
    ) -> Result<Self> {
        let bad = |what: &str| Err(LomacError::Dimension(format!("HT block mismatch: {what}")));
        if u12.nrows() != space.n_space() {
            return bad("U12 rows");
        }
        if u3.nrows() != space.nv || u4.nrows() != space.nv {
            return bad("leaf rows");
        }
        if b_root.nrows() != u12.ncols() || b_root.ncols() != b34.len() {
            return bad("root transfer");
        }
        if b34
            .iter()
            .any(|b| b.nrows() != u3.ncols() || b.ncols() != u4.ncols())
        {
            return bad("(3,4) transfer");
        }
        if !(space.hx1 > 0.0 && space.hx2 > 0.0 && space.hv > 0.0) {
            return Err(LomacError::Domain("grid spacings must be positive".into()));
        }
        Ok(Self {
            space,
            u12,
            b_root,
            b34,
            u3,
            u4,
            canonical: false,
        })
    }

    pub fn zeros(space: HtSpace) -> Self {
        Self {
            space,
            u12: DMatrix::zeros(space.n_space(), 0),
            b_root: DMatrix::zeros(0, 0),
            b34: Vec::new(),
            u3: DMatrix::zeros(space.nv, 0),
            u4: DMatrix::zeros(space.nv, 0),
            canonical: true,
        }
    }

    /// `sum_k x_k (x) p_k (x) q_k` with each spatial factor on the full
    /// `n1 x n2` grid.
    pub fn from_terms(space: HtSpace, terms: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let k = terms.len();
        let mut u12 = DMatrix::zeros(space.n_space(), k);
        let mut u3 = DMatrix::zeros(space.nv, k);
        let mut u4 = DMatrix::zeros(space.nv, k);
        let mut b34 = Vec::with_capacity(k);
        for (l, (x, p, q)) in terms.iter().enumerate() {
            if x.len() != space.n_space() || p.len() != space.nv || q.len() != space.nv {
                return Err(LomacError::Dimension(format!(
                    "term {l} has the wrong length"
                )));
            }
            u12.set_column(l, &DVector::from_column_slice(x));
            u3.set_column(l, &DVector::from_column_slice(p));
            u4.set_column(l, &DVector::from_column_slice(q));
            let mut b = DMatrix::zeros(k, k);
            b[(l, l)] = 1.0;
            b34.push(b);
        }
        Self::new(space, u12, DMatrix::identity(k, k), b34, u3, u4)
    }

    pub fn space(&self) -> HtSpace {
        self.space
    }
    pub fn n1(&self) -> usize {
        self.space.n1
    }
    pub fn n2(&self) -> usize {
        self.space.n2
    }
    pub fn nv(&self) -> usize {
        self.space.nv
    }
    pub fn n_space(&self) -> usize {
        self.space.n_space()
    }
    pub fn u12(&self) -> &DMatrix<f64> {
        &self.u12
    }
    pub fn b_root(&self) -> &DMatrix<f64> {
        &self.b_root
    }
    pub fn b34(&self) -> &[DMatrix<f64>] {
        &self.b34
    }
    pub fn u3(&self) -> &DMatrix<f64> {
        &self.u3
    }
    pub fn u4(&self) -> &DMatrix<f64> {
        &self.u4
    }
    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub(crate) fn with_canonical(mut self, canonical: bool) -> Self {
        self.canonical = canonical;
        self
    }

    /// Hierarchical ranks `[r12, r34, r3, r4]`.
    pub fn ranks(&self) -> [usize; 4] {
        [
            self.u12.ncols(),
            self.b34.len(),
            self.u3.ncols(),
            self.u4.ncols(),
        ]
    }

    /// Number of stored floats.
    pub fn storage_len(&self) -> usize {
        let [r12, r34, r3, r4] = self.ranks();
        r12 * self.n_space() + r12 * r34 + r34 * r3 * r4 + (r3 + r4) * self.nv()
    }

    fn is_empty(&self) -> bool {
        self.ranks().contains(&0)
    }

    /// Rows `i1 * n2 + i2`, columns `j3 * nv + j4`.
    pub fn dense(&self) -> DMatrix<f64> {
        let nv = self.nv();
        let mut m = DMatrix::zeros(self.b34.len(), nv * nv);
        for (l, b) in self.b34.iter().enumerate() {
            let t = &self.u3 * b * self.u4.transpose();
            for j3 in 0..nv {
                for j4 in 0..nv {
                    m[(l, j3 * nv + j4)] = t[(j3, j4)];
                }
            }
        }
        &self.u12 * &self.b_root * m
    }

    fn leaf_gram(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        u.transpose() * u * self.space.hv
    }

    /// Norm in the grid-weighted metric, `sqrt(h_x1 h_x2 h_v^2 sum f^2)`.
    pub fn norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let g12 = self.u12.transpose() * &self.u12 * self.space.cell();
        let g3 = self.leaf_gram(&self.u3);
        let g4 = self.leaf_gram(&self.u4);
        let r34 = self.b34.len();
        let left: Vec<DMatrix<f64>> = self.b34.iter().map(|b| &g3 * b * &g4).collect();
        let g34 = DMatrix::from_fn(r34, r34, |l, m| self.b34[l].dot(&left[m]));
        let s = (self.b_root.transpose() * g12 * &self.b_root)
            .component_mul(&g34)
            .sum();
        s.max(0.0).sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.b_root *= alpha;
        out
    }

    /// Multiplies rows of the two velocity frames elementwise.
    pub fn map_v_rows(&self, s3: &[f64], s4: &[f64]) -> Result<Self> {
        if s3.len() != self.nv() || s4.len() != self.nv() {
            return Err(LomacError::Dimension("velocity scaling length".into()));
        }
        let mut out = self.clone();
        for (j, (a, b)) in s3.iter().zip(s4).enumerate() {
            out.u3.row_mut(j).scale_mut(*a);
            out.u4.row_mut(j).scale_mut(*b);
        }
        out.canonical = false;
        Ok(out)
    }

    /// Velocity integrals `h_v^2 sum_{j3,j4} p(v_j3) q(v_j4) f(., j3, j4)`
    /// for each `(p, q)` pair; returns an `n_space x pairs` matrix.
    pub fn contract_velocity(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<DMatrix<f64>> {
        let nv = self.nv();
        let mut m = DMatrix::zeros(self.b34.len(), pairs.len());
        for (c, (p, q)) in pairs.iter().enumerate() {
            if p.len() != nv || q.len() != nv {
                return Err(LomacError::Dimension(format!(
                    "velocity monomial has length {}, grid has {}",
                    p.len().max(q.len()),
                    nv
                )));
            }
            let a = self.u3.tr_mul(&DVector::from_column_slice(p)) * self.space.hv;
            let b = self.u4.tr_mul(&DVector::from_column_slice(q)) * self.space.hv;
            for (l, bl) in self.b34.iter().enumerate() {
                m[(l, c)] = a.dot(&(bl * &b));
            }
        }
        Ok(&self.u12 * (&self.b_root * m))
    }

    /// Exact linear combination; ranks add.
    pub fn add_scaled(terms: &[(f64, &HtTensor)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| LomacError::Dimension("cannot add an empty list".into()))?
            .1;
        if terms.len() == 1 && terms[0].0 == 1.0 {
            return Ok(first.clone());
        }
        let space = first.space;
        let mut tot = [0usize; 4];
        for (_, t) in terms {
            if t.space != space {
                return Err(LomacError::Dimension(
                    "HT terms live on different grids".into(),
                ));
            }
            for (s, r) in tot.iter_mut().zip(t.ranks()) {
                *s += r;
            }
        }
        let [r12, r34, r3, r4] = tot;
        let mut u12 = DMatrix::zeros(space.n_space(), r12);
        let mut b_root = DMatrix::zeros(r12, r34);
        let mut u3 = DMatrix::zeros(space.nv, r3);
        let mut u4 = DMatrix::zeros(space.nv, r4);
        let mut b34 = Vec::with_capacity(r34);
        let mut off = [0usize; 4];
        for (a, t) in terms {
            let [s12, s34, s3, s4] = t.ranks();
            u12.columns_mut(off[0], s12).copy_from(&t.u12);
            b_root
                .view_mut((off[0], off[1]), (s12, s34))
                .copy_from(&(&t.b_root * *a));
            u3.columns_mut(off[2], s3).copy_from(&t.u3);
            u4.columns_mut(off[3], s4).copy_from(&t.u4);
            for b in &t.b34 {
                let mut e = DMatrix::zeros(r3, r4);
                e.view_mut((off[2], off[3]), (s3, s4)).copy_from(b);
                b34.push(e);
            }
            for (o, s) in off.iter_mut().zip([s12, s34, s3, s4]) {
                *o += s;
            }
        }
        Ok(Self {
            space,
            u12,
            b_root,
            b34,
            u3,
            u4,
            canonical: false,
        })
    }

    pub fn add(terms: &[&HtTensor]) -> Result<Self> {
        let w: Vec<(f64, &HtTensor)> = terms.iter().map(|t| (1.0, *t)).collect();
        Self::add_scaled(&w)
    }

    /// Leaves-to-root orthogonalization. The tensor is unchanged up to
    /// round-off; afterwards its norm is `|B_root|_F`.
    pub fn orthogonalize(&self) -> Self {
        if self.canonical {
            return self.clone();
        }
        if self.is_empty() {
            return Self::zeros(self.space);
        }
        let sv = self.space.hv.sqrt();
        let sx = self.space.cell().sqrt();
        let (q3, r3) = thin_qr(&self.u3 * sv);
        let (q4, r4) = thin_qr(&self.u4 * sv);
        let (k3, k4) = (q3.ncols(), q4.ncols());
        let r4t = r4.transpose();
        let mut mat = DMatrix::zeros(k3 * k4, self.b34.len());
        for (l, b) in self.b34.iter().enumerate() {
            let nb = &r3 * b * &r4t;
            mat.column_mut(l).copy_from_slice(nb.as_slice());
        }
        let (q34, r34) = thin_qr(mat);
        let b34 = (0..q34.ncols())
            .map(|k| DMatrix::from_iterator(k3, k4, q34.column(k).iter().copied()))
            .collect();
        let (q12, r12) = thin_qr(&self.u12 * sx);
        let b_root = r12 * &self.b_root * r34.transpose();
        Self {
            space: self.space,
            u12: q12 / sx,
            b_root,
            b34,
            u3: q3 / sv,
            u4: q4 / sv,
            canonical: true,
        }
    }

    /// Hierarchical truncation with total error at most `eps` in the
    /// grid-weighted norm: the root and the two velocity leaves are each
    /// truncated to `eps / sqrt(3)`, all from the untruncated tensor.
    pub fn truncate(&self, eps: f64) -> Self {
        self.truncate_nodes(eps / 3f64.sqrt())
    }

    /// Like [`HtTensor::truncate`] with `eps` relative to the norm.
    pub fn truncate_relative(&self, eps: f64) -> Self {
        let o = self.orthogonalize();
        let tol = eps * o.b_root.norm() / 3f64.sqrt();
        o.truncate_nodes(tol)
    }

    fn truncate_nodes(&self, tol: f64) -> Self {
        let o = self.orthogonalize();
        if o.is_empty() {
            return o;
        }
        let (p, sigma, qt) = sorted_svd(&o.b_root);
        let kk = sigma.len();
        let r = tail_rank(&sigma, tol);
        if r == 0 {
            return Self::zeros(o.space);
        }
        let q = qt.transpose();
        let (r3, r4) = (o.u3.ncols(), o.u4.ncols());
        let mut mat = DMatrix::zeros(r3 * r4, o.b34.len());
        for (l, b) in o.b34.iter().enumerate() {
            mat.column_mut(l).copy_from_slice(b.as_slice());
        }
        let mat = mat * q;
        let rotated: Vec<DMatrix<f64>> = (0..kk)
            .map(|k| DMatrix::from_column_slice(r3, r4, mat.column(k).as_slice()))
            .collect();

        let mut w3 = DMatrix::zeros(r3, kk * r4);
        let mut w4 = DMatrix::zeros(r4, kk * r3);
        for k in 0..kk {
            w3.columns_mut(k * r4, r4)
                .copy_from(&(&rotated[k] * sigma[k]));
            w4.columns_mut(k * r3, r3)
                .copy_from(&(rotated[k].transpose() * sigma[k]));
        }
        let (s3, sig3) = left_svd(&w3);
        let (s4, sig4) = left_svd(&w4);
        let n3 = tail_rank(&sig3, tol).max(1);
        let n4 = tail_rank(&sig4, tol).max(1);
        let s3 = s3.columns(0, n3).into_owned();
        let s4 = s4.columns(0, n4).into_owned();

        let b34 = rotated
            .iter()
            .take(r)
            .map(|b| s3.transpose() * b * &s4)
            .collect();
        let out = Self {
            space: o.space,
            u12: &o.u12 * p.columns(0, r),
            b_root: DMatrix::from_diagonal(&DVector::from_column_slice(&sigma[..r])),
            b34,
            u3: &o.u3 * s3,
            u4: &o.u4 * s4,
            canonical: false,
        };
        out.orthogonalize()
    }

    /// `sqrt(w) (x) sqrt(w) * T_eps(f / (sqrt(w) (x) sqrt(w)))` with `w` the
    /// point values of the weight function along each velocity direction.
    pub fn weighted_truncate(&self, weight: &[f64], eps: f64) -> Result<Self> {
        let s = sqrt_weights(weight, self.nv())?;
        let inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
        let t = self.map_v_rows(&inv, &inv)?.truncate(eps);
        t.map_v_rows(&s, &s)
    }

    /// `-(v1 d_x1 + v2 d_x2 + E1 d_v1 + E2 d_v2) f` with every term upwinded
    /// on the sign of its advection speed. The eight terms share leaf frames
    /// `[U, v+ U, v- U, D+ U, D- U]`.
    pub fn transport_terms(&self, field: &ElectricField2D, vgrid: &VelocityGrid) -> Result<Self> {
        let sp = self.space;
        if vgrid.n() != sp.nv || field.e1.len() != sp.n_space() || field.e2.len() != sp.n_space() {
            return Err(LomacError::Dimension("transport operand mismatch".into()));
        }
        if self.is_empty() {
            return Ok(Self::zeros(sp));
        }
        let [r12, r34, r3, r4] = self.ranks();

        let leaf_block = |u: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let r = u.ncols();
            let mut out = DMatrix::zeros(sp.nv, 5 * r);
            out.columns_mut(0, r).copy_from(u);
            let vp = vgrid.positive_part();
            let vm = vgrid.negative_part();
            for c in 0..r {
                let col: Vec<f64> = u.column(c).iter().copied().collect();
                for j in 0..sp.nv {
                    out[(j, r + c)] = vp[j] * col[j];
                    out[(j, 2 * r + c)] = vm[j] * col[j];
                }
                let dp = upwind_derivative(&col, Direction::Plus, sp.hv, Boundary::ZeroExtension)?;
                let dm = upwind_derivative(&col, Direction::Minus, sp.hv, Boundary::ZeroExtension)?;
                out.column_mut(3 * r + c).copy_from_slice(&dp);
                out.column_mut(4 * r + c).copy_from_slice(&dm);
            }
            Ok(out)
        };
        let u3 = leaf_block(&self.u3)?;
        let u4 = leaf_block(&self.u4)?;

        let mut u12 = DMatrix::zeros(sp.n_space(), 8 * r12);
        let ep = |e: &[f64]| -> Vec<f64> { e.iter().map(|x| x.max(0.0)).collect() };
        let em = |e: &[f64]| -> Vec<f64> { e.iter().map(|x| x.min(0.0)).collect() };
        let e_parts = [ep(&field.e1), em(&field.e1), ep(&field.e2), em(&field.e2)];
        for c in 0..r12 {
            let col: Vec<f64> = self.u12.column(c).iter().copied().collect();
            let d = [
                upwind_derivative_axis0(
                    &col,
                    sp.n1,
                    sp.n2,
                    Direction::Plus,
                    sp.hx1,
                    Boundary::Periodic,
                )?,
                upwind_derivative_axis0(
                    &col,
                    sp.n1,
                    sp.n2,
                    Direction::Minus,
                    sp.hx1,
                    Boundary::Periodic,
                )?,
                upwind_derivative_axis1(
                    &col,
                    sp.n1,
                    sp.n2,
                    Direction::Plus,
                    sp.hx2,
                    Boundary::Periodic,
                )?,
                upwind_derivative_axis1(
                    &col,
                    sp.n1,
                    sp.n2,
                    Direction::Minus,
                    sp.hx2,
                    Boundary::Periodic,
                )?,
            ];
            for (t, dcol) in d.iter().enumerate() {
                u12.column_mut(t * r12 + c).copy_from_slice(dcol);
            }
            for (t, e) in e_parts.iter().enumerate() {
                let scaled: Vec<f64> = col.iter().zip(e).map(|(x, y)| x * y).collect();
                u12.column_mut((4 + t) * r12 + c).copy_from_slice(&scaled);
            }
        }

        // Leaf block used by each of the eight terms, as (U3 block, U4 block).
        const BLOCKS: [(usize, usize); 8] = [
            (1, 0), // v1+ D+_x1
            (2, 0), // v1- D-_x1
            (0, 1), // v2+ D+_x2
            (0, 2), // v2- D-_x2
            (3, 0), // E1+ D+_v1
            (4, 0), // E1- D-_v1
            (0, 3), // E2+ D+_v2
            (0, 4), // E2- D-_v2
        ];
        let mut b_root = DMatrix::zeros(8 * r12, 8 * r34);
        let mut b34 = Vec::with_capacity(8 * r34);
        for (t, &(i3, i4)) in BLOCKS.iter().enumerate() {
            b_root
                .view_mut((t * r12, t * r34), (r12, r34))
                .copy_from(&(-&self.b_root));
            for b in &self.b34 {
                let mut e = DMatrix::zeros(5 * r3, 5 * r4);
                e.view_mut((i3 * r3, i4 * r4), (r3, r4)).copy_from(b);
                b34.push(e);
            }
        }
        Self::new(sp, u12, b_root, b34, u3, u4)
    }
}

/// Moment fields on the flattened `n1 x n2` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments2D {
    pub rho: DVector<f64>,
    pub j1: DVector<f64>,
    pub j2: DVector<f64>,
    pub kappa: DVector<f64>,
}

impl Moments2D {
    pub fn zeros(n: usize) -> Self {
        Self {
            rho: DVector::zeros(n),
            j1: DVector::zeros(n),
            j2: DVector::zeros(n),
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
        [&self.rho, &self.j1, &self.j2, &self.kappa]
            .iter()
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, o: &Moments2D) -> Moments2D {
        Moments2D {
            rho: &self.rho - &o.rho,
            j1: &self.j1 - &o.j1,
            j2: &self.j2 - &o.j2,
            kappa: &self.kappa - &o.kappa,
        }
    }
}

pub fn ht_moments(f: &HtTensor, grid: &VelocityGrid) -> Result<Moments2D> {
    if f.nv() != grid.n() {
        return Err(LomacError::Dimension(format!(
            "tensor has {} velocity points, grid has {}",
            f.nv(),
            grid.n()
        )));
    }
    let one = grid.ones();
    let v = grid.nodes().to_vec();
    let hv2: Vec<f64> = v.iter().map(|x| 0.5 * x * x).collect();
    let m = f.contract_velocity(&[
        (one.clone(), one.clone()),
        (v.clone(), one.clone()),
        (one.clone(), v),
        (hv2.clone(), one.clone()),
        (one, hv2),
    ])?;
    Ok(Moments2D {
        rho: m.column(0).into_owned(),
        j1: m.column(1).into_owned(),
        j2: m.column(2).into_owned(),
        kappa: m.column(3) + m.column(4),
    })
}

/// The four w-orthonormal tensors spanning the moment subspace, in HT form.
#[derive(Debug, Clone)]
pub struct ProjectionBasis4D {
    grid: VelocityGrid,
    c: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    /// Columns `w/c1`, `w v/c2`, `w (v^2 - c)/c3` with point weights.
    frames: DMatrix<f64>,
    b34: Vec<DMatrix<f64>>,
}

impl ProjectionBasis4D {
    pub fn new(grid: &VelocityGrid) -> Self {
        let one = grid.ones();
        let v = grid.nodes().to_vec();
        let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
        let n1 = grid.weighted_inner(&one, &one).unwrap();
        let c = grid.weighted_inner(&one, &v2).unwrap() / n1;
        let quad: Vec<f64> = v2.iter().map(|x| x - c).collect();
        let c1 = n1.sqrt();
        let c2 = grid.weighted_inner(&v, &v).unwrap().sqrt();
        let c3 = grid.weighted_inner(&quad, &quad).unwrap().sqrt();
        let w = grid.weight_values();
        let frames = DMatrix::from_fn(grid.n(), 3, |j, k| match k {
            0 => w[j] / c1,
            1 => w[j] * v[j] / c2,
            _ => w[j] * quad[j] / c3,
        });
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut b34 = vec![DMatrix::zeros(3, 3); 4];
        b34[0][(0, 0)] = 1.0;
        b34[1][(1, 0)] = 1.0;
        b34[2][(0, 1)] = 1.0;
        b34[3][(2, 0)] = s;
        b34[3][(0, 2)] = s;
        Self {
            grid: grid.clone(),
            c,
            c1,
            c2,
            c3,
            frames,
            b34,
        }
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    /// Weighted norms of `1`, `v`, `v^2 - c`.
    pub fn norms(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }
    pub fn leaf_frames(&self) -> &DMatrix<f64> {
        &self.frames
    }
    pub fn transfer(&self) -> &[DMatrix<f64>] {
        &self.b34
    }

    /// Basis tensor `l` as an `nv x nv` matrix over `(v1, v2)`.
    pub fn basis_tensor(&self, l: usize) -> DMatrix<f64> {
        &self.frames * &self.b34[l] * self.frames.transpose()
    }
}

/// The exact HT object carrying the moments `m` (ranks `r12 = r34 = 4`).
pub fn ht_build_f1(m: &Moments2D, basis: &ProjectionBasis4D, space: HtSpace) -> Result<HtTensor> {
    if m.len() != space.n_space() || basis.grid.n() != space.nv {
        return Err(LomacError::Dimension(
            "moments do not match the tensor grid".into(),
        ));
    }
    let (c1, c2, c3) = (basis.c1, basis.c2, basis.c3);
    let mut u12 = DMatrix::zeros(m.len(), 4);
    u12.set_column(0, &(&m.rho / (c1 * c1)));
    u12.set_column(1, &(&m.j1 / (c1 * c2)));
    u12.set_column(2, &(&m.j2 / (c1 * c2)));
    u12.set_column(
        3,
        &((&m.kappa - &m.rho * basis.c) * (std::f64::consts::SQRT_2 / (c1 * c3))),
    );
    HtTensor::new(
        space,
        u12,
        DMatrix::identity(4, 4),
        basis.b34.clone(),
        basis.frames.clone(),
        basis.frames.clone(),
    )
}

/// `f - f1(moments(f))`: the zero-moment part of `f`.
pub fn ht_project_complement(f: &HtTensor, basis: &ProjectionBasis4D) -> Result<HtTensor> {
    let m = ht_moments(f, &basis.grid)?;
    let f1 = ht_build_f1(&m, basis, f.space())?;
    HtTensor::add_scaled(&[(1.0, f), (-1.0, &f1)])
}

/// Weighted truncation of the zero-moment part followed by the rank-four
/// correction that restores `m_target` exactly.
pub fn ht_lomac_truncate(
    f: &HtTensor,
    m_target: &Moments2D,
    basis: &ProjectionBasis4D,
    eps: f64,
) -> Result<HtTensor> {
    if m_target.len() != f.n_space() {
        return Err(LomacError::Dimension(
            "target moments do not match the tensor".into(),
        ));
    }
    let f2 = ht_project_complement(f, basis)?;
    let g = f2.weighted_truncate(basis.grid.weight_values(), eps)?;
    let residual = ht_moments(&g, &basis.grid)?;
    let f1 = ht_build_f1(&m_target.sub(&residual), basis, f.space())?;
    HtTensor::add(&[&f1, &g])
}

/// Conservative truncation with the tensor's own moments.
pub fn ht_conservative_truncate(
    f: &HtTensor,
    basis: &ProjectionBasis4D,
    eps: f64,
) -> Result<HtTensor> {
    let m = ht_moments(f, &basis.grid)?;
    ht_lomac_truncate(f, &m, basis, eps)
}
