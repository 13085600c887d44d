//! Factored representation of a 1D1V distribution,
//! `f_ij = sum_l C_l X_il V_jl`, and its algebra.
//!
//! Factor columns are orthonormal in the grid-weighted inner products
//! `h_x * <a, b>` and `h_v * <a, b>` when the object is canonical, so the
//! coefficients approximate continuous singular values and truncation
//! thresholds keep their meaning under grid refinement.

use nalgebra::{DMatrix, DVector};

use crate::error::{LomacError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankMatrix {
    coeffs: DVector<f64>,
    x_factors: DMatrix<f64>,
    v_factors: DMatrix<f64>,
    hx: f64,
    hv: f64,
    canonical: bool,
}

impl LowRankMatrix {
    pub fn new(
        coeffs: DVector<f64>,
        x_factors: DMatrix<f64>,
        v_factors: DMatrix<f64>,
        hx: f64,
        hv: f64,
    ) -> Result<Self> {
        let r = coeffs.len();
        if x_factors.ncols() != r || v_factors.ncols() != r {
            return Err(LomacError::Dimension(format!(
                "{} coefficients but {} x-factors and {} v-factors",
                r,
                x_factors.ncols(),
                v_factors.ncols()
            )));
        }
        if !(hx > 0.0 && hv > 0.0) {
            return Err(LomacError::Domain("grid spacings must be positive".into()));
        }
        Ok(Self {
            coeffs,
            x_factors,
            v_factors,
            hx,
            hv,
            canonical: false,
        })
    }

    pub fn zeros(nx: usize, nv: usize, hx: f64, hv: f64) -> Self {
        Self {
            coeffs: DVector::zeros(0),
            x_factors: DMatrix::zeros(nx, 0),
            v_factors: DMatrix::zeros(nv, 0),
            hx,
            hv,
            canonical: true,
        }
    }

    /// Builds `sum_k x_k (outer) v_k` from separable terms.
    pub fn from_terms(terms: &[(Vec<f64>, Vec<f64>)], hx: f64, hv: f64) -> Result<Self> {
        let (nx, nv) = match terms.first() {
            Some((x, v)) => (x.len(), v.len()),
            None => {
                return Err(LomacError::Dimension(
                    "at least one term is needed to infer grid sizes".into(),
                ))
            }
        };
        let mut x = DMatrix::zeros(nx, terms.len());
        let mut v = DMatrix::zeros(nv, terms.len());
        for (l, (xs, vs)) in terms.iter().enumerate() {
            if xs.len() != nx || vs.len() != nv {
                return Err(LomacError::Dimension(
                    "separable terms differ in length".into(),
                ));
            }
            x.set_column(l, &DVector::from_column_slice(xs));
            v.set_column(l, &DVector::from_column_slice(vs));
        }
        Self::new(DVector::from_element(terms.len(), 1.0), x, v, hx, hv)
    }

    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }
    pub fn nx(&self) -> usize {
        self.x_factors.nrows()
    }
    pub fn nv(&self) -> usize {
        self.v_factors.nrows()
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hv(&self) -> f64 {
        self.hv
    }
    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }
    pub fn x_factors(&self) -> &DMatrix<f64> {
        &self.x_factors
    }
    pub fn v_factors(&self) -> &DMatrix<f64> {
        &self.v_factors
    }
    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub(crate) fn with_canonical(mut self, canonical: bool) -> Self {
        self.canonical = canonical;
        self
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut scaled = self.x_factors.clone();
        for (l, c) in self.coeffs.iter().enumerate() {
            scaled.column_mut(l).scale_mut(*c);
        }
        scaled * self.v_factors.transpose()
    }

    /// Number of stored reals: coefficients plus both factor matrices.
    pub fn storage_len(&self) -> usize {
        self.coeffs.len() * (1 + self.x_factors.nrows() + self.v_factors.nrows())
    }

    /// Grid-weighted Frobenius norm `sqrt(h_x h_v sum f_ij^2)`.
    pub fn norm(&self) -> f64 {
        if self.canonical {
            return self.coeffs.norm();
        }
        self.recompress().coeffs.norm()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.coeffs *= alpha;
        if alpha < 0.0 {
            out.canonical = false;
        }
        out
    }

    /// Multiplies row `j` of the v-factors by `scale[j]`.
    pub fn map_v_rows(&self, scale: &[f64]) -> Result<Self> {
        if scale.len() != self.nv() {
            return Err(LomacError::Dimension("row scaling length mismatch".into()));
        }
        let mut out = self.clone();
        for (j, s) in scale.iter().enumerate() {
            out.v_factors.row_mut(j).scale_mut(*s);
        }
        out.canonical = false;
        Ok(out)
    }

    /// Exact sum: factors are concatenated, nothing is compressed.
    pub fn add(terms: &[&LowRankMatrix]) -> Result<Self> {
        let weighted: Vec<(f64, &LowRankMatrix)> = terms.iter().map(|t| (1.0, *t)).collect();
        Self::add_scaled(&weighted)
    }

    /// Exact linear combination `sum_k a_k F_k`.
    pub fn add_scaled(terms: &[(f64, &LowRankMatrix)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| LomacError::Dimension("cannot add an empty list".into()))?
            .1;
        if terms.len() == 1 && terms[0].0 == 1.0 {
            return Ok(first.clone());
        }
        let (nx, nv) = (first.nx(), first.nv());
        let mut rank = 0;
        for (_, t) in terms {
            if t.nx() != nx || t.nv() != nv {
                return Err(LomacError::Dimension(format!(
                    "cannot add {}x{} and {}x{} objects",
                    nx,
                    nv,
                    t.nx(),
                    t.nv()
                )));
            }
            if t.hx != first.hx || t.hv != first.hv {
                return Err(LomacError::Dimension(
                    "terms live on different grids".into(),
                ));
            }
            rank += t.rank();
        }
        let mut coeffs = DVector::zeros(rank);
        let mut x = DMatrix::zeros(nx, rank);
        let mut v = DMatrix::zeros(nv, rank);
        let mut off = 0;
        for (a, t) in terms {
            let r = t.rank();
            coeffs.rows_mut(off, r).copy_from(&(&t.coeffs * *a));
            x.columns_mut(off, r).copy_from(&t.x_factors);
            v.columns_mut(off, r).copy_from(&t.v_factors);
            off += r;
        }
        Ok(Self {
            coeffs,
            x_factors: x,
            v_factors: v,
            hx: first.hx,
            hv: first.hv,
            canonical: false,
        })
    }

    /// QR-then-SVD canonicalization. Keeps every nonzero singular value.
    pub fn recompress(&self) -> Self {
        if self.canonical {
            return self.clone();
        }
        self.canonicalize(0.0)
    }

    /// Canonicalization that also drops singular values below
    /// `tol * sum_l |C_l| |X_l| |V_l|`.
    pub fn recompress_with_tol(&self, tol: f64) -> Self {
        self.canonicalize(tol)
    }

    /// Smallest-rank canonical form whose discarded singular-value tail
    /// satisfies `sqrt(sum_{k>r} s_k^2) <= eps`.
    pub fn truncate(&self, eps: f64) -> Self {
        let c = self.recompress();
        let r = tail_rank(c.coeffs.as_slice(), eps);
        c.keep(r)
    }

    /// Like [`LowRankMatrix::truncate`] with `eps` relative to the norm.
    pub fn truncate_relative(&self, eps: f64) -> Self {
        let c = self.recompress();
        let r = tail_rank(c.coeffs.as_slice(), eps * c.coeffs.norm());
        c.keep(r)
    }

    /// `sqrt(w) * T_eps(f / sqrt(w))` with `w` the point values of the weight
    /// function along v. The error bound holds for the scaled object.
    pub fn weighted_truncate(&self, weight: &[f64], eps: f64) -> Result<Self> {
        let sqrt_w = sqrt_weights(weight, self.nv())?;
        let inv: Vec<f64> = sqrt_w.iter().map(|s| 1.0 / s).collect();
        let scaled = self.map_v_rows(&inv)?.truncate(eps);
        let mut out = scaled.map_v_rows(&sqrt_w)?;
        out.canonical = false;
        Ok(out)
    }

    fn keep(mut self, r: usize) -> Self {
        if r < self.rank() {
            self.coeffs = self.coeffs.rows(0, r).into_owned();
            self.x_factors = self.x_factors.columns(0, r).into_owned();
            self.v_factors = self.v_factors.columns(0, r).into_owned();
        }
        self
    }

    fn canonicalize(&self, tol: f64) -> Self {
        let (nx, nv) = (self.nx(), self.nv());
        if self.rank() == 0 {
            return Self::zeros(nx, nv, self.hx, self.hv);
        }
        let sx = self.hx.sqrt();
        let sv = self.hv.sqrt();
        let (qx, rx) = thin_qr(&self.x_factors * sx);
        let (qv, rv) = thin_qr(&self.v_factors * sv);

        let mut core = rx;
        for (l, c) in self.coeffs.iter().enumerate() {
            core.column_mut(l).scale_mut(*c);
        }
        let core = core * rv.transpose();
        let (u, sigma, vt) = sorted_svd(&core);

        let scale: f64 = (0..self.rank())
            .map(|l| {
                self.coeffs[l].abs()
                    * self.x_factors.column(l).norm()
                    * sx
                    * self.v_factors.column(l).norm()
                    * sv
            })
            .sum();
        let cutoff = tol * scale;
        let kept: Vec<usize> = (0..sigma.len())
            .filter(|&k| sigma[k] > cutoff && sigma[k] > 0.0)
            .collect();

        let r = kept.len();
        let mut coeffs = DVector::zeros(r);
        let mut x = DMatrix::zeros(nx, r);
        let mut v = DMatrix::zeros(nv, r);
        for (new, &k) in kept.iter().enumerate() {
            coeffs[new] = sigma[k];
            let mut xc = &qx * u.column(k) / sx;
            let mut vc = &qv * vt.row(k).transpose() / sv;
            // Fix the sign so the largest x entry is positive.
            let imax = xc.iamax();
            if xc[imax] < 0.0 {
                xc.neg_mut();
                vc.neg_mut();
            }
            x.set_column(new, &xc);
            v.set_column(new, &vc);
        }
        Self {
            coeffs,
            x_factors: x,
            v_factors: v,
            hx: self.hx,
            hv: self.hv,
            canonical: true,
        }
    }
}

/// Thin QR of a tall (or wide) matrix: `a = q r`, `q` with `min(m, n)`
/// orthonormal columns.
pub(crate) fn thin_qr(a: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return (DMatrix::zeros(m, 0), DMatrix::zeros(0, n));
    }
    let qr = to_faer(&a).qr();
    (
        from_faer(qr.compute_thin_Q().as_ref()),
        from_faer(qr.thin_R()),
    )
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// SVD `a = u diag(s) vt` with `s` nonincreasing. nalgebra's SVD can return
/// an inaccurate factorization for nearly rank-deficient inputs, so this goes
/// through faer.
pub(crate) fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (DMatrix::zeros(m, 0), Vec::new(), DMatrix::zeros(0, n));
    }
    let Ok(svd) = to_faer(a).thin_svd() else {
        // Only reachable for non-finite input; keep the NaNs flowing.
        let nan = f64::NAN;
        return (
            DMatrix::from_element(m, k, nan),
            vec![nan; k],
            DMatrix::from_element(k, n, nan),
        );
    };
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let uo = DMatrix::from_fn(m, k, |i, c| u[(i, order[c])]);
    let vo = DMatrix::from_fn(k, n, |c, j| v[(j, order[c])]);
    (uo, order.iter().map(|&c| s[c]).collect(), vo)
}

/// Left singular vectors and values of a wide matrix, through a QR of its
/// transpose.
pub(crate) fn left_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    if a.ncols() <= 2 * a.nrows() {
        let (u, s, _) = sorted_svd(a);
        return (u, s);
    }
    let qr = to_faer(&a.transpose()).qr();
    let (u, s, _) = sorted_svd(&from_faer(qr.thin_R()).transpose());
    (u, s)
}

/// Smallest `r` such that the tail of `sigma` past `r` has 2-norm `<= eps`.
/// `sigma` must be sorted in nonincreasing order.
pub(crate) fn tail_rank(sigma: &[f64], eps: f64) -> usize {
    let mut tail2 = 0.0;
    let eps2 = eps * eps;
    for r in (0..sigma.len()).rev() {
        let next = tail2 + sigma[r] * sigma[r];
        if next > eps2 {
            return r + 1;
        }
        tail2 = next;
    }
    0
}

pub(crate) fn sqrt_weights(weight: &[f64], n: usize) -> Result<Vec<f64>> {
    if weight.len() != n {
        return Err(LomacError::Dimension(format!(
            "weight vector has length {}, expected {}",
            weight.len(),
            n
        )));
    }
    weight
        .iter()
        .map(|&w| {
            if w > 0.0 && w.is_finite() {
                Ok(w.sqrt())
            } else {
                Err(LomacError::Domain(format!(
                    "weights must be positive, got {w}"
                )))
            }
        })
        .collect()
}
