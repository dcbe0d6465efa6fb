//! Nonlinear regressor branches shared by the model-based cancellers.
//!
//! Every branch set is a lower-triangular real combination `b(x) = B m(x)` of the
//! odd monomials `m(x) = [x, x|x|^2, x|x|^4]`:
//!
//! * Hammerstein polynomials: `B = I`,
//! * Itô-Hermite polynomials: closed form, orthonormal under `CN(0, σ²)`,
//! * adaptive orthonormal polynomials: Gram-Schmidt on estimated even moments.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Result, SicError};
use crate::{Complex64, NUM_BRANCHES, REGRESSOR_LEN};

/// Fewest samples accepted by [`estimate_moments`].
pub const MIN_MOMENT_SAMPLES: usize = 100;

/// Relative pivot below which a branch is treated as dependent.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Largest accepted condition number of the scale-normalized monomial Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e10;

/// Newest-first delay line of transmit samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorWindow {
    taps: Vec<Complex64>,
}

impl Default for RegressorWindow {
    fn default() -> Self {
        Self::new(REGRESSOR_LEN)
    }
}

impl RegressorWindow {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "regressor window needs at least one tap");
        RegressorWindow {
            taps: vec![Complex64::default(); len],
        }
    }

    pub fn from_taps(taps: Vec<Complex64>) -> Self {
        assert!(!taps.is_empty(), "regressor window needs at least one tap");
        RegressorWindow { taps }
    }

    /// Shifts in `x` as the newest tap, discarding the oldest.
    pub fn push(&mut self, x: Complex64) {
        self.taps.rotate_right(1);
        self.taps[0] = x;
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Real view `[re_0, .., re_{L-1}, im_0, .., im_{L-1}]`.
    pub fn to_real(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.taps.len());
        self.write_real(&mut out);
        out
    }

    /// Overwrites `out` with the real view.
    pub fn write_real(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.taps.iter().map(|t| t.re));
        out.extend(self.taps.iter().map(|t| t.im));
    }
}

/// Odd Hammerstein monomials `[x, x|x|^2, x|x|^4]`.
pub fn hp_branches(x: Complex64) -> [Complex64; NUM_BRANCHES] {
    let p = x.norm_sqr();
    [x, x * p, x * p * p]
}

/// Even absolute moments `μ_{2m} = E|x|^{2m}`, m = 1..5.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    pub mu: [f64; 5],
    pub sample_count: usize,
}

impl MomentSet {
    /// Moments of `CN(0, σ²)`: `μ_{2m} = m! σ^{2m}`.
    pub fn complex_gaussian(sigma2: f64) -> Self {
        let mut mu = [0.0; 5];
        let mut fact = 1.0;
        for (m, slot) in mu.iter_mut().enumerate() {
            fact *= (m + 1) as f64;
            *slot = fact * sigma2.powi(m as i32 + 1);
        }
        MomentSet { mu, sample_count: 0 }
    }

    /// `μ_{2m}` for m = 1..=5.
    pub fn even(&self, m: usize) -> f64 {
        self.mu[m - 1]
    }

    /// Moment-matrix positivity: `μ₂ > 0`, `μ₄ ≥ μ₂²`, `μ₆ μ₂ ≥ μ₄²`.
    pub fn check_positivity(&self) -> Result<()> {
        let [m2, m4, m6, ..] = self.mu;
        let tol = 1e-12;
        if !(m2 > 0.0) || self.mu.iter().any(|m| !m.is_finite()) {
            return Err(SicError::DegenerateInput(format!("invalid second moment {m2}")));
        }
        if m4 < m2 * m2 * (1.0 - tol) || m6 * m2 < m4 * m4 * (1.0 - tol) {
            return Err(SicError::DegenerateInput(format!(
                "moments violate positivity: {:?}",
                self.mu
            )));
        }
        Ok(())
    }

    /// Moments of `x / sqrt(μ₂)`.
    fn normalized(&self) -> [f64; 5] {
        let s = self.mu[0];
        let mut out = self.mu;
        for (m, v) in out.iter_mut().enumerate() {
            *v /= s.powi(m as i32 + 1);
        }
        out
    }
}

/// Sample-mean estimate of `μ₂ .. μ₁₀`.
pub fn estimate_moments(samples: &[Complex64]) -> Result<MomentSet> {
    if samples.len() < MIN_MOMENT_SAMPLES {
        return Err(SicError::InsufficientData {
            needed: MIN_MOMENT_SAMPLES,
            got: samples.len(),
        });
    }
    let mut sums = [0.0; 5];
    for s in samples {
        let p = s.norm_sqr();
        let mut acc = 1.0;
        for slot in sums.iter_mut() {
            acc *= p;
            *slot += acc;
        }
    }
    if sums[0] == 0.0 {
        return Err(SicError::DegenerateInput("all-zero samples".into()));
    }
    let n = samples.len() as f64;
    Ok(MomentSet {
        mu: sums.map(|s| s / n),
        sample_count: samples.len(),
    })
}

/// Monomial Gram matrix `G[a][b] = ⟨x|x|^{2a}, x|x|^{2b}⟩ = μ_{2(a+b)+2}`.
pub fn monomial_gram(moments: &MomentSet) -> [[f64; 3]; 3] {
    gram_from(&moments.mu)
}

fn gram_from(mu: &[f64; 5]) -> [[f64; 3]; 3] {
    let mut g = [[0.0; 3]; 3];
    for (a, row) in g.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = mu[a + b];
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    HpIdentity,
    IhpClosedForm,
    AopEstimated,
}

/// Lower-triangular real map from monomials to branches. A zero row marks a
/// branch dropped as degenerate.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatrix {
    pub coeff: [[f64; 3]; 3],
    pub kind: BasisKind,
}

impl BasisMatrix {
    pub fn identity() -> Self {
        BasisMatrix {
            coeff: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            kind: BasisKind::HpIdentity,
        }
    }

    /// Branch vector `B m(x)`.
    pub fn branches(&self, x: Complex64) -> [Complex64; NUM_BRANCHES] {
        let m = hp_branches(x);
        let mut out = [Complex64::default(); NUM_BRANCHES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = (0..=k).map(|j| m[j] * self.coeff[k][j]).sum();
        }
        out
    }

    pub fn active_branches(&self) -> Vec<usize> {
        (0..NUM_BRANCHES).filter(|&k| self.coeff[k][k] != 0.0).collect()
    }

    /// `B G Bᵀ`.
    pub fn congruence(&self, g: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let b = Matrix3::from_fn(|i, j| self.coeff[i][j]);
        let g = Matrix3::from_fn(|i, j| g[i][j]);
        let c = b * g * b.transpose();
        std::array::from_fn(|i| std::array::from_fn(|j| c[(i, j)]))
    }
}

/// Closed-form Itô-Hermite basis for `CN(0, σ²)`:
/// `[x, x(|x|² − 2σ²), x(|x|⁴ − 6σ²|x|² + 6σ⁴)]`, rows scaled to unit power
/// (norms `σ²`, `2σ⁶`, `12σ¹⁰`).
pub fn ihp_matrix(sigma2: f64) -> Result<BasisMatrix> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(SicError::Config(format!("sigma2 must be positive, got {sigma2}")));
    }
    let s = sigma2;
    let n1 = s.sqrt().recip();
    let n2 = (2.0 * s.powi(3)).sqrt().recip();
    let n3 = (12.0 * s.powi(5)).sqrt().recip();
    Ok(BasisMatrix {
        coeff: [
            [n1, 0.0, 0.0],
            [-2.0 * s * n2, n2, 0.0],
            [6.0 * s * s * n3, -6.0 * s * n3, n3],
        ],
        kind: BasisKind::IhpClosedForm,
    })
}

/// Orthonormal branches under the moment-implied inner product, built by
/// modified Gram-Schmidt on the monomial Gram matrix.
///
/// Fails with [`SicError::DegenerateDistribution`] naming the first dependent
/// branch (1-based).
pub fn gram_schmidt(moments: &MomentSet) -> Result<BasisMatrix> {
    let (basis, dropped) = orthonormalize(moments)?;
    match dropped.first() {
        Some(&(branch, ref reason)) => Err(SicError::DegenerateDistribution {
            branch,
            reason: reason.clone(),
        }),
        None => Ok(basis),
    }
}

/// Like [`gram_schmidt`] but drops dependent branches (zero rows) instead of
/// failing. Returns the 1-based indices of dropped branches.
pub fn gram_schmidt_reduced(moments: &MomentSet) -> Result<(BasisMatrix, Vec<usize>)> {
    let (basis, dropped) = orthonormalize(moments)?;
    Ok((basis, dropped.into_iter().map(|(b, _)| b).collect()))
}

fn orthonormalize(moments: &MomentSet) -> Result<(BasisMatrix, Vec<(usize, String)>)> {
    moments.check_positivity()?;
    // Work on x / sqrt(μ₂) so pivots and conditioning are scale-free; undo with
    // B = B̃ · diag(s⁻¹, s⁻³, s⁻⁵), s = sqrt(μ₂).
    let g = gram_from(&moments.normalized());
    let inner = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += a[i] * g[i][j] * b[j];
            }
        }
        acc
    };

    let mut dropped = Vec::new();
    let cond = {
        let eig = SymmetricEigen::new(Matrix3::from_fn(|i, j| g[i][j]));
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };

    let mut rows: [[f64; 3]; 3] = [[0.0; 3]; 3];
    let mut kept: Vec<[f64; 3]> = Vec::new();
    let mut pivots = [0.0; 3];
    for k in 0..NUM_BRANCHES {
        let mut v = [0.0; 3];
        v[k] = 1.0;
        for q in &kept {
            let proj = inner(&v, q);
            for i in 0..3 {
                v[i] -= proj * q[i];
            }
        }
        let norm2 = inner(&v, &v);
        pivots[k] = norm2 / g[k][k];
        if !(pivots[k] >= PIVOT_TOLERANCE) {
            dropped.push((k + 1, format!("relative pivot {:.3e}", pivots[k])));
            continue;
        }
        let inv = norm2.sqrt().recip();
        let q = v.map(|c| c * inv);
        rows[k] = q;
        kept.push(q);
    }
    if dropped.is_empty() && cond > MAX_GRAM_CONDITION {
        let k = (0..3).min_by(|&a, &b| pivots[a].total_cmp(&pivots[b])).unwrap_or(2);
        dropped.push((k + 1, format!("Gram condition number {cond:.3e}")));
    }

    let s = moments.mu[0].sqrt();
    let unscale = [s.recip(), s.powi(3).recip(), s.powi(5).recip()];
    let mut coeff = [[0.0; 3]; 3];
    for k in 0..3 {
        for j in 0..=k {
            coeff[k][j] = rows[k][j] * unscale[j];
        }
    }
    Ok((
        BasisMatrix {
            coeff,
            kind: BasisKind::AopEstimated,
        },
        dropped,
    ))
}

/// Stacks `B m(x_tap)` for every tap, branch-major: entry `k * L + tap`.
pub fn apply_basis(window: &RegressorWindow, basis: &BasisMatrix) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); NUM_BRANCHES * window.len()];
    apply_basis_into(window, basis, &mut out);
    out
}

pub fn apply_basis_into(window: &RegressorWindow, basis: &BasisMatrix, out: &mut [Complex64]) {
    let len = window.len();
    assert_eq!(out.len(), NUM_BRANCHES * len);
    for (t, &x) in window.taps().iter().enumerate() {
        let b = basis.branches(x);
        for k in 0..NUM_BRANCHES {
            out[k * len + t] = b[k];
        }
    }
}
