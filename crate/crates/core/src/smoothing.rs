//! Penalized B-spline and orthogonal-polynomial smoothers.
//!
//! A penalized weighted least-squares problem
//!
//! ```text
//! minimize  Σ wᵢ (uᵢ - (B c)ᵢ)² + λ cᵀ P c
//! ```
//!
//! is solved through the simultaneous diagonalization of `G = BᵀWB` and `P`:
//! with `G = L Lᵀ` and `L⁻¹ P L⁻ᵀ = V Σ Vᵀ`, both the coefficients and the
//! effective degrees of freedom become diagonal in λ. One factorization per
//! weight vector then serves every λ tried while calibrating to a target edf.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INTERIOR_KNOTS: usize = 20;
pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_PENALTY_ORDER: usize = 2;

const LOG10_LAMBDA_MIN: f64 = -10.0;
const LOG10_LAMBDA_MAX: f64 = 12.0;
const EDF_TOL: f64 = 1e-3;

/// How one distribution parameter varies with the covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmootherSpec {
    /// P-spline whose edf is `df_extra` above the unpenalized straight line.
    PSpline { df_extra: f64 },
    /// Unpenalized orthogonal polynomial of the given degree.
    Poly { degree: usize },
}

impl SmootherSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SmootherSpec::PSpline { df_extra } => {
                if !(0.0..=20.0).contains(&df_extra) {
                    return Err(Error::InvalidArgument(format!(
                        "P-spline df must lie in [0, 20], got {df_extra}"
                    )));
                }
            }
            SmootherSpec::Poly { degree } => {
                if !(1..=8).contains(&degree) {
                    return Err(Error::InvalidArgument(format!(
                        "polynomial degree must lie in [1, 8], got {degree}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Layout of the basis and the knot rule used for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PSplineConfig {
    pub n_interior_knots: usize,
    pub degree: usize,
    pub penalty_order: usize,
}

impl Default for PSplineConfig {
    fn default() -> Self {
        PSplineConfig {
            n_interior_knots: DEFAULT_INTERIOR_KNOTS,
            degree: DEFAULT_DEGREE,
            penalty_order: DEFAULT_PENALTY_ORDER,
        }
    }
}

impl PSplineConfig {
    /// Knot count actually used for `n` observations: small samples get
    /// `max(5, n/3)` interior knots.
    pub fn knots_for(&self, n: usize) -> usize {
        if n < 30 {
            self.n_interior_knots.min((n / 3).max(5))
        } else {
            self.n_interior_knots
        }
    }
}

/// Equally spaced B-spline basis on `[x_min, x_max]` with linear continuation outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    knots: Vec<f64>,
    degree: usize,
    x_range: (f64, f64),
    penalty_order: usize,
}

impl BSplineBasis {
    pub fn new(x_min: f64, x_max: f64, n_interior_knots: usize, degree: usize, penalty_order: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::DegenerateCovariate(format!(
                "covariate range [{x_min}, {x_max}] is empty"
            )));
        }
        if degree == 0 {
            return Err(Error::InvalidArgument("B-spline degree must be at least 1".into()));
        }
        let segments = n_interior_knots + 1;
        let dx = (x_max - x_min) / segments as f64;
        let knots = (0..segments + 1 + 2 * degree)
            .map(|j| {
                let k = j as isize - degree as isize;
                if k == segments as isize {
                    x_max
                } else {
                    x_min + k as f64 * dx
                }
            })
            .collect();
        let basis = BSplineBasis { knots, degree, x_range: (x_min, x_max), penalty_order };
        if penalty_order >= basis.n_basis() {
            return Err(Error::InvalidArgument(format!(
                "penalty order {penalty_order} needs more than {} basis functions",
                basis.n_basis()
            )));
        }
        Ok(basis)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.x_range
    }

    pub fn penalty_order(&self) -> usize {
        self.penalty_order
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Index `i` of the knot span `[t_i, t_{i+1})` holding `x`, clamped to the
    /// spans that cover `[x_min, x_max]`.
    fn span(&self, x: f64) -> usize {
        let lo = self.degree;
        let hi = self.n_basis() - 1;
        // First knot strictly greater than x, minus one.
        let idx = self.knots.partition_point(|&t| t <= x);
        idx.saturating_sub(1).clamp(lo, hi)
    }

    /// Cox-de Boor: the `deg + 1` nonzero basis values of degree `deg` at `x`
    /// on span `i`, for functions `i - deg ..= i`.
    fn nonzero(&self, i: usize, x: f64, deg: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = [0.0; 16];
        let mut right = [0.0; 16];
        out[0] = 1.0;
        for j in 1..=deg {
            left[j] = x - t[i + 1 - j];
            right[j] = t[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Fills `row` (length `n_basis`) with the basis at `x`; returns whether
    /// `x` lies outside the fitted range and was linearly extrapolated.
    pub fn eval_into(&self, x: f64, row: &mut [f64]) -> bool {
        let d = self.degree;
        row.iter_mut().for_each(|v| *v = 0.0);
        let (lo, hi) = self.x_range;
        let (anchor, extrapolated) = if x < lo {
            (lo, true)
        } else if x > hi {
            (hi, true)
        } else {
            (x, false)
        };
        let i = self.span(anchor);
        let mut vals = [0.0; 16];
        self.nonzero(i, anchor, d, &mut vals);
        for (k, v) in vals.iter().take(d + 1).enumerate() {
            row[i - d + k] = *v;
        }
        if extrapolated {
            let delta = x - anchor;
            let t = &self.knots;
            let mut lower = [0.0; 16];
            self.nonzero(i, anchor, d - 1, &mut lower);
            // lower[k] is N_{i-d+1+k, d-1}; derivative of N_{j,d} is
            // d (N_{j,d-1}/(t_{j+d}-t_j) - N_{j+1,d-1}/(t_{j+d+1}-t_{j+1})).
            for k in 0..=d {
                let j = i - d + k;
                let a = if k >= 1 { lower[k - 1] / (t[j + d] - t[j]) } else { 0.0 };
                let b = if k < d { lower[k] / (t[j + d + 1] - t[j + 1]) } else { 0.0 };
                row[j] += delta * d as f64 * (a - b);
            }
        }
        extrapolated
    }

    pub fn design(&self, xs: &[f64]) -> (DMatrix<f64>, Vec<bool>) {
        let q = self.n_basis();
        let mut values = DMatrix::zeros(xs.len(), q);
        let mut flags = Vec::with_capacity(xs.len());
        let mut row = vec![0.0; q];
        for (r, &x) in xs.iter().enumerate() {
            flags.push(self.eval_into(x, &mut row));
            for (c, v) in row.iter().enumerate() {
                values[(r, c)] = *v;
            }
        }
        (values, flags)
    }
}

/// Evaluated B-spline basis at the data points.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub layout: BSplineBasis,
}

impl BasisMatrix {
    pub fn knots(&self) -> &[f64] {
        self.layout.knots()
    }

    pub fn degree(&self) -> usize {
        self.layout.degree()
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.layout.x_range()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Basis at new covariate values (extrapolating linearly outside the range).
    pub fn evaluate(&self, xs: &[f64]) -> (DMatrix<f64>, Vec<bool>) {
        self.layout.design(xs)
    }
}

fn finite_range(x: &[f64]) -> Result<(f64, f64)> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateCovariate("covariate contains non-finite values".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x.is_empty() || hi <= lo {
        return Err(Error::DegenerateCovariate(
            "covariate needs at least two distinct values".into(),
        ));
    }
    Ok((lo, hi))
}

/// B-spline basis with equally spaced knots spanning the data, order-2 penalty layout.
pub fn build_pspline_basis(x: &[f64], n_interior_knots: usize, degree: usize) -> Result<BasisMatrix> {
    build_pspline_basis_with_order(x, n_interior_knots, degree, DEFAULT_PENALTY_ORDER)
}

pub fn build_pspline_basis_with_order(
    x: &[f64],
    n_interior_knots: usize,
    degree: usize,
    penalty_order: usize,
) -> Result<BasisMatrix> {
    let (lo, hi) = finite_range(x)?;
    let layout = BSplineBasis::new(lo, hi, n_interior_knots, degree, penalty_order)?;
    let (values, _) = layout.design(x);
    Ok(BasisMatrix { values, layout })
}

/// Difference penalty `DᵀD` together with its order (the dimension of its null space).
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub matrix: DMatrix<f64>,
    pub order: usize,
}

impl Penalty {
    /// The zero penalty: every direction is unpenalized.
    pub fn none(q: usize) -> Self {
        Penalty { matrix: DMatrix::zeros(q, q), order: q }
    }

    pub fn quadratic_form(&self, c: &DVector<f64>) -> f64 {
        c.dot(&(&self.matrix * c))
    }
}

/// The `order`-th difference operator `D` as a `(q - order) × q` matrix.
pub fn difference_operator(q: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(q, q);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        d = DMatrix::from_fn(rows, q, |r, c| d[(r + 1, c)] - d[(r, c)]);
    }
    d
}

pub fn difference_penalty(q: usize, order: usize) -> Result<Penalty> {
    if order >= q {
        return Err(Error::InvalidArgument(format!(
            "difference order {order} must be below the basis size {q}"
        )));
    }
    let d = difference_operator(q, order);
    Ok(Penalty { matrix: d.transpose() * d, order })
}

/// Result of one penalized weighted least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    pub edf: f64,
    pub diagnostics: SystemDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemDiagnostics {
    /// Numerical rank of `BᵀWB`.
    pub rank: usize,
    /// Whether the ridge jitter was needed to factor `BᵀWB`.
    pub jittered: bool,
    /// Ratio of extreme eigenvalues of `BᵀWB`.
    pub condition: f64,
}

/// Factored penalized normal equations for one basis, weight vector and penalty.
#[derive(Debug, Clone)]
pub struct PenalizedSystem {
    chol_l: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    hat_components: DVector<f64>,
    penalty_order: usize,
    lambda_scale: f64,
    diagnostics: SystemDiagnostics,
}

impl PenalizedSystem {
    pub fn new(basis: &DMatrix<f64>, weights: &[f64], penalty: &Penalty) -> Result<Self> {
        let n = basis.nrows();
        let q = basis.ncols();
        if weights.len() != n {
            return Err(Error::InvalidArgument(format!(
                "weight length {} does not match {n} basis rows",
                weights.len()
            )));
        }
        if penalty.matrix.nrows() != q || penalty.matrix.ncols() != q {
            return Err(Error::InvalidArgument(format!(
                "penalty is {}x{}, basis has {q} columns",
                penalty.matrix.nrows(),
                penalty.matrix.ncols()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and > 0".into()));
        }

        let mut weighted = basis.clone();
        for (r, &w) in weights.iter().enumerate() {
            weighted.row_mut(r).scale_mut(w);
        }
        let gram = basis.transpose() * weighted;

        let spectrum = gram.clone().symmetric_eigenvalues();
        let top = spectrum.iter().copied().fold(0.0f64, f64::max);
        let bottom = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
        let rank = spectrum.iter().filter(|&&v| v > top * 1e-10).count();
        let condition = if bottom > 0.0 { top / bottom } else { f64::INFINITY };
        if !(top.is_finite() && top > 0.0) {
            return Err(Error::Numerical {
                message: "weighted basis cross-product is zero or not finite".into(),
                condition,
            });
        }

        let mut jittered = false;
        let chol = match gram.clone().cholesky() {
            Some(c) if well_pivoted(c.l_dirty()) => c,
            _ => {
                jittered = true;
                let ridge = 1e-8 * gram.trace() / q as f64;
                let mut g = gram.clone();
                for k in 0..q {
                    g[(k, k)] += ridge;
                }
                g.cholesky().ok_or_else(|| Error::Numerical {
                    message: format!(
                        "penalized normal matrix is singular even after ridge jitter {ridge:.3e}"
                    ),
                    condition,
                })?
            }
        };
        let chol_l = chol.l();

        // L⁻¹ P L⁻ᵀ, symmetrized against rounding.
        let left = chol_l
            .solve_lower_triangular(&penalty.matrix)
            .expect("Cholesky factor has a nonzero diagonal");
        let mut reduced = chol_l
            .solve_lower_triangular(&left.transpose())
            .expect("Cholesky factor has a nonzero diagonal");
        reduced = (&reduced + reduced.transpose()) * 0.5;
        let eig = reduced.symmetric_eigen();

        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let null_dim = penalty.order.min(q);
        let mut eigvals = DVector::zeros(q);
        let mut eigvecs = DMatrix::zeros(q, q);
        for (dst, &src) in order.iter().enumerate() {
            eigvals[dst] = if dst < null_dim { 0.0 } else { eig.eigenvalues[src].max(0.0) };
            eigvecs.set_column(dst, &eig.eigenvectors.column(src));
        }

        // diag(Vᵀ L⁻¹ G L⁻ᵀ V): all ones unless jitter was applied.
        let hat_components = if jittered {
            let lg = chol_l
                .solve_lower_triangular(&gram)
                .expect("Cholesky factor has a nonzero diagonal");
            let m = chol_l
                .solve_lower_triangular(&lg.transpose())
                .expect("Cholesky factor has a nonzero diagonal");
            let proj = eigvecs.transpose() * m * &eigvecs;
            DVector::from_iterator(q, (0..q).map(|k| proj[(k, k)]))
        } else {
            DVector::from_element(q, 1.0)
        };

        Ok(PenalizedSystem {
            chol_l,
            eigvecs,
            eigvals,
            hat_components,
            penalty_order: null_dim,
            lambda_scale: {
                let tp = penalty.matrix.trace();
                if tp > 0.0 {
                    gram.trace() / tp
                } else {
                    1.0
                }
            },
            diagnostics: SystemDiagnostics { rank, jittered, condition },
        })
    }

    pub fn diagnostics(&self) -> SystemDiagnostics {
        self.diagnostics
    }

    /// Effective degrees of freedom: `tr((BᵀWB + λP)⁻¹ BᵀWB)`.
    pub fn edf(&self, lambda: f64) -> f64 {
        self.eigvals
            .iter()
            .zip(self.hat_components.iter())
            .map(|(&s, &h)| h / (1.0 + lambda * s))
            .sum()
    }

    /// Largest attainable edf (at λ = 0).
    pub fn max_edf(&self) -> f64 {
        self.edf(0.0)
    }

    /// Coefficients for the right-hand side `BᵀWu`.
    pub fn solve_rhs(&self, rhs: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let y = self
            .chol_l
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a nonzero diagonal");
        let mut t = self.eigvecs.transpose() * y;
        for (k, v) in t.iter_mut().enumerate() {
            *v /= 1.0 + lambda * self.eigvals[k];
        }
        let back = &self.eigvecs * t;
        self.chol_l
            .transpose()
            .solve_upper_triangular(&back)
            .expect("Cholesky factor has a nonzero diagonal")
    }

    /// λ whose edf matches `target_edf`, by bisection on log10 λ.
    ///
    /// The bracket log10 λ ∈ [−10, 12] is taken relative to `tr(BᵀWB) / tr(P)`.
    pub fn lambda_for_edf(&self, target_edf: f64) -> Result<f64> {
        let max = self.max_edf();
        let min = self.penalty_order as f64;
        if !target_edf.is_finite() || target_edf > max + EDF_TOL || target_edf < min - EDF_TOL {
            return Err(Error::UnattainableDf { target: target_edf, min, max });
        }
        if (max - target_edf).abs() < EDF_TOL {
            return Ok(0.0);
        }
        let at = |log10: f64| self.lambda_scale * 10f64.powf(log10);
        if target_edf - min < EDF_TOL || self.edf(at(LOG10_LAMBDA_MAX)) >= target_edf {
            return Ok(at(LOG10_LAMBDA_MAX));
        }
        let mut lo = LOG10_LAMBDA_MIN;
        let mut hi = LOG10_LAMBDA_MAX;
        if self.edf(at(lo)) <= target_edf {
            return Ok(at(lo));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let edf = self.edf(at(mid));
            if (edf - target_edf).abs() < 1e-6 || hi - lo < 1e-12 {
                return Ok(at(mid));
            }
            if edf > target_edf {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(at(0.5 * (lo + hi)))
    }
}

fn well_pivoted(l: &DMatrix<f64>) -> bool {
    let diag: Vec<f64> = (0..l.nrows()).map(|k| l[(k, k)] * l[(k, k)]).collect();
    let top = diag.iter().copied().fold(0.0f64, f64::max);
    diag.iter().all(|&d| d.is_finite() && d > top * 1e-12)
}

fn weighted_rhs(basis: &DMatrix<f64>, weights: &[f64], u: &[f64]) -> Result<DVector<f64>> {
    if u.len() != basis.nrows() {
        return Err(Error::InvalidArgument(format!(
            "response length {} does not match {} basis rows",
            u.len(),
            basis.nrows()
        )));
    }
    let wu = DVector::from_iterator(u.len(), weights.iter().zip(u).map(|(w, u)| w * u));
    Ok(basis.transpose() * wu)
}

/// Penalized weighted least squares on an arbitrary design matrix.
pub fn solve_pwls_matrix(
    basis: &DMatrix<f64>,
    weights: &[f64],
    u: &[f64],
    lambda: f64,
    penalty: &Penalty,
) -> Result<SmootherFit> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let system = PenalizedSystem::new(basis, weights, penalty)?;
    let rhs = weighted_rhs(basis, weights, u)?;
    Ok(SmootherFit {
        coefficients: system.solve_rhs(&rhs, lambda),
        lambda,
        edf: system.edf(lambda),
        diagnostics: system.diagnostics(),
    })
}

pub fn solve_pwls(
    basis: &BasisMatrix,
    weights: &[f64],
    u: &[f64],
    lambda: f64,
    penalty: &Penalty,
) -> Result<SmootherFit> {
    solve_pwls_matrix(&basis.values, weights, u, lambda, penalty)
}

pub fn df_to_lambda(basis: &BasisMatrix, weights: &[f64], penalty: &Penalty, target_edf: f64) -> Result<f64> {
    PenalizedSystem::new(&basis.values, weights, penalty)?.lambda_for_edf(target_edf)
}

/// Orthogonal polynomial basis built by the Stieltjes three-term recurrence.
/// Column 0 is the constant; columns are orthonormal under uniform weights
/// on the construction sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoPolyBasis {
    degree: usize,
    center: f64,
    half_width: f64,
    alpha: Vec<f64>,
    /// Squared norms of the unnormalized polynomials p_0..p_degree.
    norm2: Vec<f64>,
    x_range: (f64, f64),
}

impl OrthoPolyBasis {
    pub fn new(x: &[f64], degree: usize) -> Result<Self> {
        let (lo, hi) = finite_range(x)?;
        let mut distinct = x.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() <= degree {
            return Err(Error::DegenerateCovariate(format!(
                "degree {degree} polynomial needs more than {degree} distinct covariate values, got {}",
                distinct.len()
            )));
        }
        let center = 0.5 * (lo + hi);
        let half_width = 0.5 * (hi - lo);
        let t: Vec<f64> = x.iter().map(|v| (v - center) / half_width).collect();

        let mut alpha = Vec::with_capacity(degree);
        let mut norm2 = Vec::with_capacity(degree + 1);
        let mut prev = vec![0.0; t.len()];
        let mut cur = vec![1.0; t.len()];
        norm2.push(t.len() as f64);
        for k in 0..degree {
            let a = t.iter().zip(&cur).map(|(t, p)| t * p * p).sum::<f64>() / norm2[k];
            let b = if k == 0 { 0.0 } else { norm2[k] / norm2[k - 1] };
            let next: Vec<f64> = t
                .iter()
                .zip(cur.iter().zip(&prev))
                .map(|(t, (c, p))| (t - a) * c - b * p)
                .collect();
            alpha.push(a);
            norm2.push(next.iter().map(|v| v * v).sum());
            prev = cur;
            cur = next;
        }
        Ok(OrthoPolyBasis { degree, center, half_width, alpha, norm2, x_range: (lo, hi) })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.degree + 1
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.x_range
    }

    pub fn eval_into(&self, x: f64, row: &mut [f64]) -> bool {
        let t = (x - self.center) / self.half_width;
        let mut prev = 0.0;
        let mut cur = 1.0;
        row[0] = 1.0 / self.norm2[0].sqrt();
        for k in 0..self.degree {
            let b = if k == 0 { 0.0 } else { self.norm2[k] / self.norm2[k - 1] };
            let next = (t - self.alpha[k]) * cur - b * prev;
            row[k + 1] = next / self.norm2[k + 1].sqrt();
            prev = cur;
            cur = next;
        }
        x < self.x_range.0 || x > self.x_range.1
    }

    pub fn design(&self, xs: &[f64]) -> (DMatrix<f64>, Vec<bool>) {
        let q = self.n_basis();
        let mut values = DMatrix::zeros(xs.len(), q);
        let mut flags = Vec::with_capacity(xs.len());
        let mut row = vec![0.0; q];
        for (r, &x) in xs.iter().enumerate() {
            flags.push(self.eval_into(x, &mut row));
            for (c, v) in row.iter().enumerate() {
                values[(r, c)] = *v;
            }
        }
        (values, flags)
    }
}

#[derive(Debug, Clone)]
pub struct PolyBasisMatrix {
    pub values: DMatrix<f64>,
    pub layout: OrthoPolyBasis,
}

pub fn build_poly_basis(x: &[f64], degree: usize) -> Result<PolyBasisMatrix> {
    let layout = OrthoPolyBasis::new(x, degree)?;
    let (values, _) = layout.design(x);
    Ok(PolyBasisMatrix { values, layout })
}

/// Either smoother layout, as stored in a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SmootherBasis {
    BSpline(BSplineBasis),
    Poly(OrthoPolyBasis),
}

impl SmootherBasis {
    pub fn build(spec: &SmootherSpec, x: &[f64], config: &PSplineConfig) -> Result<Self> {
        spec.validate()?;
        match *spec {
            SmootherSpec::PSpline { .. } => {
                let (lo, hi) = finite_range(x)?;
                Ok(SmootherBasis::BSpline(BSplineBasis::new(
                    lo,
                    hi,
                    config.knots_for(x.len()),
                    config.degree,
                    config.penalty_order,
                )?))
            }
            SmootherSpec::Poly { degree } => Ok(SmootherBasis::Poly(OrthoPolyBasis::new(x, degree)?)),
        }
    }

    pub fn n_basis(&self) -> usize {
        match self {
            SmootherBasis::BSpline(b) => b.n_basis(),
            SmootherBasis::Poly(p) => p.n_basis(),
        }
    }

    pub fn design(&self, xs: &[f64]) -> (DMatrix<f64>, Vec<bool>) {
        match self {
            SmootherBasis::BSpline(b) => b.design(xs),
            SmootherBasis::Poly(p) => p.design(xs),
        }
    }

    pub fn penalty(&self) -> Penalty {
        match self {
            SmootherBasis::BSpline(b) => difference_penalty(b.n_basis(), b.penalty_order())
                .expect("basis construction guarantees order < q"),
            SmootherBasis::Poly(p) => Penalty::none(p.n_basis()),
        }
    }

    /// Coefficients reproducing the constant function `value`.
    pub fn constant_coefficients(&self, value: f64) -> DVector<f64> {
        match self {
            // Partition of unity.
            SmootherBasis::BSpline(b) => DVector::from_element(b.n_basis(), value),
            SmootherBasis::Poly(p) => {
                let mut c = DVector::zeros(p.n_basis());
                c[0] = value * p.norm2[0].sqrt();
                c
            }
        }
    }
}

/// Target edf for a smoother spec under the given penalty order.
pub fn target_edf(spec: &SmootherSpec, penalty_order: usize) -> f64 {
    match *spec {
        SmootherSpec::PSpline { df_extra } => df_extra + penalty_order as f64,
        SmootherSpec::Poly { degree } => (degree + 1) as f64,
    }
}
