//! Dense linear-algebra helpers shared by the samplers.

use nalgebra::{Cholesky, ColPivQR, DMatrix, DVector, SVD};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Condition threshold below which a matrix is treated as singular.
pub const RCOND_MIN: f64 = 1e-12;

/// Relative jitter added to the diagonal when a precision matrix fails to factor.
pub const JITTER_REL: f64 = 1e-10;

/// Reciprocal 2-norm condition number, from the singular values.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let (lo, hi) = sv
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if hi == 0.0 || !hi.is_finite() {
        0.0
    } else {
        lo / hi
    }
}

pub(crate) fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws from `N(Q⁻¹b, Q⁻¹)` given the precision `Q` and linear term `b`.
///
/// A single diagonal jitter of `1e-10 * mean(diag(Q))` is attempted if the
/// Cholesky factorization fails; the returned flag reports whether it was used.
pub fn sample_precision_normal<R: Rng + ?Sized>(
    rng: &mut R,
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
    block: &'static str,
) -> Result<(DVector<f64>, bool)> {
    let k = precision.nrows();
    if precision.ncols() != k || linear.len() != k {
        return Err(Error::Dimension(alloc::format!(
            "precision {}x{} with linear term of length {}",
            precision.nrows(),
            precision.ncols(),
            linear.len()
        )));
    }
    if k == 0 {
        return Ok((DVector::zeros(0), false));
    }
    let (chol, jittered) = match Cholesky::new(precision.clone()) {
        Some(c) => (c, false),
        None => {
            let mean_diag = precision.diagonal().mean();
            let mut q = precision;
            for i in 0..k {
                q[(i, i)] += JITTER_REL * mean_diag;
            }
            match Cholesky::new(q) {
                Some(c) => (c, true),
                None => return Err(Error::NotPositiveDefinite { block }),
            }
        }
    };
    let mean = chol.solve(linear);
    let z = standard_normal_vec(rng, k);
    let l = chol.l();
    let dev = l
        .tr_solve_lower_triangular(&z)
        .ok_or(Error::NotPositiveDefinite { block })?;
    Ok((mean + dev, jittered))
}

/// Least-squares solver for a tall matrix `H` with full column rank.
///
/// Rank is checked once with singular values; each solve uses a
/// column-pivoted Householder QR.
#[derive(Debug, Clone)]
pub struct PivotedLeastSquares {
    qr: ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
    rows: usize,
    cols: usize,
}

impl PivotedLeastSquares {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = h.shape();
        if cols == 0 || rows < cols {
            return Err(Error::Dimension(alloc::format!(
                "least squares needs a tall matrix with at least one column, got {rows}x{cols}"
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear map".into()));
        }
        let sv = SVD::new(h.clone(), false, false).singular_values;
        let smax = sv.max();
        let tol = smax * f64::EPSILON * rows.max(cols) as f64;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        if rank < cols {
            return Err(Error::RankDeficient { rank, cols });
        }
        let qr = ColPivQR::new(h.clone());
        let r = qr.r();
        Ok(Self { qr, r, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Returns `argmin ‖H x − b‖₂`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.rows, "right-hand side length mismatch");
        let mut qtb = b.clone();
        self.qr.q_tr_mul(&mut qtb);
        let head = qtb.rows(0, self.cols).into_owned();
        let mut x = self
            .r
            .solve_upper_triangular(&head)
            .expect("full column rank checked at construction");
        self.qr.p().inv_permute_rows(&mut x);
        x
    }
}

/// Least-squares projection for maps of the form `H = [D; c·I]`.
///
/// The thin SVD of `D` is computed once, after which the projection
/// `(H′H)⁻¹H′q` costs two matrix-vector products for any `c > 0`.
#[derive(Debug, Clone)]
pub struct StackedProjector {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
    rows: usize,
    cols: usize,
}

impl StackedProjector {
    pub fn new(d: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = d.shape();
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design block".into()));
        }
        if cols == 0 || rows == 0 {
            return Ok(Self {
                u: DMatrix::zeros(rows, 0),
                s: DVector::zeros(0),
                v: DMatrix::zeros(cols, 0),
                rows,
                cols,
            });
        }
        let svd = SVD::new(d.clone(), true, true);
        let u = svd.u.ok_or(Error::NoConvergence)?;
        let v = svd.v_t.ok_or(Error::NoConvergence)?.transpose();
        Ok(Self {
            u,
            s: svd.singular_values,
            v,
            rows,
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Rank check of `[D; c·I]` for a given `c`.
    pub fn check_rank(&self, c: f64) -> Result<()> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(alloc::format!(
                "prior scale row weight must be positive and finite, got {c}"
            )));
        }
        let mut smax = c;
        let mut smin = if self.s.len() < self.cols { c } else { f64::INFINITY };
        for &s in self.s.iter() {
            let h = (s * s + c * c).sqrt();
            smax = smax.max(h);
            smin = smin.min(h);
        }
        let tol = smax * f64::EPSILON * (self.rows + self.cols) as f64;
        if smin <= tol {
            let rank = self
                .s
                .iter()
                .filter(|&&s| (s * s + c * c).sqrt() > tol)
                .count();
            return Err(Error::RankDeficient {
                rank,
                cols: self.cols,
            });
        }
        Ok(())
    }

    /// Computes `(H′H)⁻¹H′q` for `q = (top, bottom)`.
    pub fn project(&self, top: &DVector<f64>, bottom: &DVector<f64>, c: f64) -> DVector<f64> {
        assert_eq!(top.len(), self.rows);
        assert_eq!(bottom.len(), self.cols);
        if self.cols == 0 {
            return DVector::zeros(0);
        }
        // x = V (S² + c²)⁻¹ (S U′top + c V′bottom) + (bottom − V V′bottom) / c
        let ut = self.u.tr_mul(top);
        let vb = self.v.tr_mul(bottom);
        let mut coef = DVector::zeros(self.s.len());
        for i in 0..self.s.len() {
            let s = self.s[i];
            coef[i] = (s * ut[i] + c * vb[i]) / (s * s + c * c);
        }
        let mut x = &self.v * coef;
        if self.s.len() < self.cols {
            let resid = bottom - &self.v * vb;
            x += resid / c;
        }
        x
    }
}
