//! Model-based polynomial cancellers: WH-LMS, WH-RLS with offline whitening,
//! WIH-LMS and AOP-LMS.
//!
//! All four regress the received sample on the 63-entry stacked branch vector
//! (3 branches x 21 taps) and adapt with normalized LMS,
//! `w <- w + mu0 * u * conj(e) / ||u||^2`, i.e. `mu = mu0 / (63 * P_u)` with `P_u`
//! the mean regressor power at the current step.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::basis::{
    apply_basis_into, estimate_moments, gram_schmidt_reduced, ihp_matrix, BasisMatrix, RegressorWindow,
    MIN_MOMENT_SAMPLES,
};
use crate::canceller::{check_finite, Algorithm, Canceller, DistributionChange, StepResult};
use crate::error::{Result, SicError};
use crate::{Complex64, NUM_BRANCHES, REGRESSOR_LEN};

/// Default normalized step size shared by the model-based cancellers.
pub const DEFAULT_MU: f64 = 0.5;

/// Weight norm above which a filter is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Samples used for each AOP moment estimate.
pub const DEFAULT_MOMENT_WINDOW: usize = 1000;

/// Relative eigenvalue floor of the offline whitener.
pub const EIGEN_CLAMP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// Plain LMS with a constant step.
    Fixed(f64),
    /// Normalized LMS: the step is `mu0 / ||u||^2`.
    Normalized(f64),
}

/// Complex transversal filter with `y_hat = w^H u`.
#[derive(Clone, Debug)]
pub struct LmsFilter {
    w: Vec<Complex64>,
    step: StepSize,
    steps: usize,
    fault: Option<String>,
}

impl LmsFilter {
    pub fn new(len: usize, step: StepSize) -> Result<Self> {
        let mu = match step {
            StepSize::Fixed(m) | StepSize::Normalized(m) => m,
        };
        if len == 0 {
            return Err(SicError::Config("LMS filter length must be positive".into()));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(SicError::Config(format!("LMS step size must be positive, got {mu}")));
        }
        Ok(LmsFilter {
            w: vec![Complex64::default(); len],
            step,
            steps: 0,
            fault: None,
        })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [Complex64] {
        &mut self.w
    }

    pub fn is_frozen(&self) -> bool {
        self.fault.is_some()
    }

    pub fn predict(&self, u: &[Complex64]) -> Complex64 {
        self.w.iter().zip(u).map(|(w, u)| w.conj() * u).sum()
    }

    /// One LMS iteration. On a non-finite input or divergence the state is
    /// frozen and every later call fails.
    pub fn step(&mut self, u: &[Complex64], d: Complex64) -> Result<StepResult> {
        assert_eq!(u.len(), self.w.len(), "regressor length mismatch");
        let index = self.steps;
        self.steps += 1;
        if let Some(reason) = &self.fault {
            return Err(SicError::NumericFault {
                step: index,
                reason: format!("filter frozen: {reason}"),
            });
        }
        if let Err(e) = check_finite(index, u).and_then(|_| check_finite(index, &[d])) {
            self.fault = Some("non-finite input".into());
            return Err(e);
        }
        let result = StepResult::new(d, self.predict(u));
        let gain = match self.step {
            StepSize::Fixed(mu) => mu,
            StepSize::Normalized(mu0) => {
                let energy: f64 = u.iter().map(|c| c.norm_sqr()).sum();
                if energy > 0.0 {
                    mu0 / energy
                } else {
                    0.0
                }
            }
        };
        if gain != 0.0 && result.e != Complex64::default() {
            let g = result.e.conj() * gain;
            for (w, u) in self.w.iter_mut().zip(u) {
                *w += u * g;
            }
        }
        let norm = self.w.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        if !(norm <= DIVERGENCE_NORM) {
            let reason = format!("weight norm {norm:.3e} exceeds {DIVERGENCE_NORM:.0e}");
            self.fault = Some(reason.clone());
            return Err(SicError::NumericFault { step: index, reason });
        }
        Ok(result)
    }
}

/// Offline input-orthogonalization transform `T = Λ^{-1/2} Q^H` from the
/// eigendecomposition of a sample covariance.
#[derive(Clone, Debug)]
pub struct Whitener {
    t: DMatrix<Complex64>,
    clamped: usize,
}

impl Whitener {
    pub fn dim(&self) -> usize {
        self.t.ncols()
    }

    /// Directions whose eigenvalue fell below the clamp and get zero gain.
    pub fn clamped_directions(&self) -> usize {
        self.clamped
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.t
    }

    pub fn apply_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += self.t[(i, j)] * u[j];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.dim()];
        self.apply_into(u, &mut out);
        out
    }
}

/// Sample covariance `R = (1/N) Σ u u^H`.
pub fn sample_covariance(regressors: &[Vec<Complex64>]) -> DMatrix<Complex64> {
    let dim = regressors.first().map_or(0, Vec::len);
    let mut r = DMatrix::<Complex64>::zeros(dim, dim);
    for u in regressors {
        for i in 0..dim {
            for j in 0..dim {
                r[(i, j)] += u[i] * u[j].conj();
            }
        }
    }
    r / Complex64::new(regressors.len() as f64, 0.0)
}

/// Builds the whitener from at least `10 * dim` training regressors.
/// Eigenvalues below `1e-8 * λ_max` get zero gain.
pub fn wh_rls_orth_prepare(training: &[Vec<Complex64>]) -> Result<Whitener> {
    let dim = training.first().map_or(NUM_BRANCHES * REGRESSOR_LEN, Vec::len);
    let needed = 10 * dim;
    if training.len() < needed {
        return Err(SicError::InsufficientData {
            needed,
            got: training.len(),
        });
    }
    if training.iter().any(|u| u.len() != dim) {
        return Err(SicError::Config("training regressors differ in length".into()));
    }
    let eig = SymmetricEigen::new(sample_covariance(training));
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let floor = EIGEN_CLAMP * lambda_max;
    let mut t = DMatrix::<Complex64>::zeros(dim, dim);
    let mut clamped = 0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if !(lambda > floor) {
            clamped += 1;
            continue;
        }
        let g = lambda.sqrt().recip();
        for j in 0..dim {
            t[(i, j)] = eig.eigenvectors[(j, i)].conj() * g;
        }
    }
    Ok(Whitener { t, clamped })
}

/// Stacked-branch regressor of the current window.
#[derive(Clone, Debug)]
struct BranchRegressor {
    window: RegressorWindow,
    u: Vec<Complex64>,
}

impl BranchRegressor {
    fn new() -> Self {
        BranchRegressor {
            window: RegressorWindow::default(),
            u: vec![Complex64::default(); NUM_BRANCHES * REGRESSOR_LEN],
        }
    }

    fn push(&mut self, tx: Complex64, basis: &BasisMatrix) -> &[Complex64] {
        self.window.push(tx);
        apply_basis_into(&self.window, basis, &mut self.u);
        &self.u
    }
}

/// LMS on a fixed branch basis: identity for WH-LMS, Itô-Hermite for WIH-LMS.
#[derive(Clone, Debug)]
pub struct BasisLms {
    algorithm: Algorithm,
    basis: BasisMatrix,
    regressor: BranchRegressor,
    filter: LmsFilter,
}

impl BasisLms {
    pub fn new(algorithm: Algorithm, basis: BasisMatrix, mu: f64) -> Result<Self> {
        Ok(BasisLms {
            algorithm,
            basis,
            regressor: BranchRegressor::new(),
            filter: LmsFilter::new(NUM_BRANCHES * REGRESSOR_LEN, StepSize::Normalized(mu))?,
        })
    }

    pub fn wh_lms(mu: f64) -> Result<Self> {
        Self::new(Algorithm::WhLms, BasisMatrix::identity(), mu)
    }

    pub fn basis(&self) -> &BasisMatrix {
        &self.basis
    }

    pub fn filter(&self) -> &LmsFilter {
        &self.filter
    }
}

/// WIH-LMS with the Itô-Hermite basis for the nominal transmit power `sigma2`,
/// fixed for the whole run.
pub fn wih_lms_make(sigma2_nominal: f64, mu: f64) -> Result<BasisLms> {
    BasisLms::new(Algorithm::WihLms, ihp_matrix(sigma2_nominal)?, mu)
}

impl Canceller for BasisLms {
    fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    fn step(&mut self, tx: Complex64, d: Complex64, _change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        let u = self.regressor.push(tx, &self.basis);
        self.filter.step(u, d)
    }

    fn param_count(&self) -> usize {
        NUM_BRANCHES * REGRESSOR_LEN
    }
}

/// WH-LMS on regressors whitened by an offline covariance estimate.
#[derive(Clone, Debug)]
pub struct WhRlsOrth {
    regressor: BranchRegressor,
    whitener: Whitener,
    white: Vec<Complex64>,
    filter: LmsFilter,
}

impl WhRlsOrth {
    pub fn new(whitener: Whitener, mu: f64) -> Result<Self> {
        let dim = NUM_BRANCHES * REGRESSOR_LEN;
        if whitener.dim() != dim {
            return Err(SicError::Config(format!(
                "whitener dimension {} does not match regressor dimension {dim}",
                whitener.dim()
            )));
        }
        Ok(WhRlsOrth {
            regressor: BranchRegressor::new(),
            whitener,
            white: vec![Complex64::default(); dim],
            filter: LmsFilter::new(dim, StepSize::Normalized(mu))?,
        })
    }

    pub fn whitener(&self) -> &Whitener {
        &self.whitener
    }
}

impl Canceller for WhRlsOrth {
    fn algorithm(&self) -> Algorithm {
        Algorithm::WhRlsOrth
    }

    fn step(&mut self, tx: Complex64, d: Complex64, _change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        let u = self.regressor.push(tx, &BasisMatrix::identity());
        self.whitener.apply_into(u, &mut self.white);
        self.filter.step(&self.white, d)
    }

    fn param_count(&self) -> usize {
        NUM_BRANCHES * REGRESSOR_LEN
    }
}

/// Where AOP-LMS takes the samples for a moment estimate after a distribution change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentSource {
    /// The queued transmit samples starting at the change; the new basis is
    /// active immediately.
    Lookahead,
    /// The next samples as they are transmitted; the previous basis stays
    /// active until the window is full.
    Buffered,
}

/// Adaptive orthonormal polynomial LMS.
#[derive(Clone, Debug)]
pub struct AopLms {
    basis: BasisMatrix,
    regressor: BranchRegressor,
    filter: LmsFilter,
    moment_window: usize,
    source: MomentSource,
    pending: Option<Vec<Complex64>>,
    warnings: Vec<String>,
    steps: usize,
    swaps: usize,
}

impl AopLms {
    /// Starts from the identity basis until the first estimate completes.
    pub fn new(mu: f64, moment_window: usize, source: MomentSource) -> Result<Self> {
        if moment_window < MIN_MOMENT_SAMPLES {
            return Err(SicError::Config(format!(
                "moment window must be at least {MIN_MOMENT_SAMPLES}, got {moment_window}"
            )));
        }
        Ok(AopLms {
            basis: BasisMatrix::identity(),
            regressor: BranchRegressor::new(),
            filter: LmsFilter::new(NUM_BRANCHES * REGRESSOR_LEN, StepSize::Normalized(mu))?,
            moment_window,
            source,
            pending: None,
            warnings: Vec::new(),
            steps: 0,
            swaps: 0,
        })
    }

    pub fn basis(&self) -> &BasisMatrix {
        &self.basis
    }

    pub fn filter(&self) -> &LmsFilter {
        &self.filter
    }

    /// Number of completed basis swaps.
    pub fn swaps(&self) -> usize {
        self.swaps
    }

    /// Estimates a new basis from `samples` and swaps it in, re-expressing the
    /// weights so the modeled SI function is unchanged.
    pub fn rebuild_basis(&mut self, samples: &[Complex64]) {
        let estimate = estimate_moments(samples).and_then(|m| gram_schmidt_reduced(&m));
        match estimate {
            Ok((basis, dropped)) => {
                if basis.active_branches().is_empty() {
                    self.warnings.push(format!(
                        "step {}: no usable branch in new basis, keeping previous basis",
                        self.steps
                    ));
                    return;
                }
                for b in dropped {
                    self.warnings
                        .push(format!("step {}: dropped degenerate branch {b}", self.steps));
                }
                reexpress_weights(&self.basis, &basis, self.filter.weights_mut());
                self.basis = basis;
                self.swaps += 1;
            }
            Err(e) => self
                .warnings
                .push(format!("step {}: keeping previous basis ({e})", self.steps)),
        }
    }
}

/// Rewrites per-tap branch weights from basis `old` to basis `new` so that
/// `w'^H (B_new m) = w^H (B_old m)` on the span of the active new branches.
pub fn reexpress_weights(old: &BasisMatrix, new: &BasisMatrix, w: &mut [Complex64]) {
    let len = w.len() / NUM_BRANCHES;
    let active = new.active_branches();
    let r = active.len();
    // Normal equations (A A^T) w'_A = A c with A the active rows of B_new.
    let gram = DMatrix::<f64>::from_fn(r, r, |i, j| {
        (0..3).map(|k| new.coeff[active[i]][k] * new.coeff[active[j]][k]).sum()
    });
    let Some(chol) = gram.cholesky() else {
        return;
    };
    for t in 0..len {
        let wt: [Complex64; 3] = std::array::from_fn(|k| w[k * len + t]);
        // c = B_old^T w_t
        let c: [Complex64; 3] = std::array::from_fn(|j| (0..3).map(|k| wt[k] * old.coeff[k][j]).sum());
        let rhs_re = nalgebra::DVector::from_fn(r, |i, _| (0..3).map(|j| new.coeff[active[i]][j] * c[j].re).sum());
        let rhs_im = nalgebra::DVector::from_fn(r, |i, _| (0..3).map(|j| new.coeff[active[i]][j] * c[j].im).sum());
        let re = chol.solve(&rhs_re);
        let im = chol.solve(&rhs_im);
        for k in 0..NUM_BRANCHES {
            w[k * len + t] = Complex64::default();
        }
        for (i, &k) in active.iter().enumerate() {
            w[k * len + t] = Complex64::new(re[i], im[i]);
        }
    }
}

impl Canceller for AopLms {
    fn algorithm(&self) -> Algorithm {
        Algorithm::AopLms
    }

    fn step(&mut self, tx: Complex64, d: Complex64, change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        if let Some(change) = change {
            let lookahead = &change.upcoming[..change.upcoming.len().min(self.moment_window)];
            if self.source == MomentSource::Lookahead && lookahead.len() >= MIN_MOMENT_SAMPLES {
                self.pending = None;
                self.rebuild_basis(lookahead);
            } else {
                self.pending = Some(Vec::with_capacity(self.moment_window));
            }
        }
        if let Some(buf) = self.pending.as_mut() {
            buf.push(tx);
            if buf.len() >= self.moment_window {
                let samples = self.pending.take().unwrap_or_default();
                self.rebuild_basis(&samples);
            }
        }
        self.steps += 1;
        let u = self.regressor.push(tx, &self.basis);
        self.filter.step(u, d)
    }

    fn param_count(&self) -> usize {
        NUM_BRANCHES * REGRESSOR_LEN
    }

    fn warnings(&self) -> &[String] {
        &self.warnings
    }
}
