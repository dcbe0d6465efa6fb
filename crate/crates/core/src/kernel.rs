//! Kernel cancellers: growing-dictionary Gaussian K-LMS and random-feature RFK-LMS.
//!
//! Both operate on the 42-real view `[re..., im...]` of the 21-tap transmit window.
//! Outputs are complex: a real kernel machine per output component, sharing the
//! kernel (or features), which is the same as complex expansion coefficients.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::basis::RegressorWindow;
use crate::canceller::{check_finite, Algorithm, Canceller, DistributionChange, StepResult};
use crate::error::{Result, SicError};
use crate::rng::seeded;
use crate::{Complex64, REGRESSOR_LEN};

pub const DEFAULT_KERNEL_MU: f64 = 0.5;
pub const DEFAULT_FEATURES: usize = 500;
/// Windows drawn for the median-distance bandwidth estimate.
pub const BANDWIDTH_WINDOWS: usize = 500;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-||a - b||² / (2h²))`.
pub fn gaussian_kernel(a: &[f64], b: &[f64], h: f64) -> f64 {
    (-squared_distance(a, b) / (2.0 * h * h)).exp()
}

/// Median pairwise distance between the 42-real windows ending at each of
/// `count` positions of `tx`, drawn uniformly without replacement.
pub fn median_bandwidth(tx: &[Complex64], count: usize, seed: u64) -> Result<f64> {
    if tx.len() < REGRESSOR_LEN || count < 2 {
        return Err(SicError::InsufficientData {
            needed: REGRESSOR_LEN.max(2),
            got: tx.len().min(count),
        });
    }
    let candidates: Vec<usize> = (REGRESSOR_LEN - 1..tx.len()).collect();
    let count = count.min(candidates.len());
    let mut rng = seeded(seed);
    let chosen = rand::seq::index::sample(&mut rng, candidates.len(), count);
    let mut picked: Vec<usize> = chosen.iter().map(|i| candidates[i]).collect();
    picked.sort_unstable();
    let windows: Vec<Vec<f64>> = picked
        .iter()
        .map(|&end| {
            let taps: Vec<Complex64> = (0..REGRESSOR_LEN).map(|k| tx[end - k]).collect();
            RegressorWindow::from_taps(taps).to_real()
        })
        .collect();
    let mut dists = Vec::with_capacity(count * (count - 1) / 2);
    for i in 0..count {
        for j in i + 1..count {
            dists.push(squared_distance(&windows[i], &windows[j]).sqrt());
        }
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let h = *median;
    if !(h > 0.0) || !h.is_finite() {
        return Err(SicError::DegenerateInput(format!("median window distance is {h}")));
    }
    Ok(h)
}

fn validate_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(SicError::Config(format!("kernel step size must be positive, got {mu}")))
    }
}

/// Naive K-LMS: every step appends its window as a new center.
#[derive(Clone, Debug)]
pub struct KernelLms {
    window: RegressorWindow,
    u: Vec<f64>,
    centers: Vec<f64>,
    alphas: Vec<Complex64>,
    h: f64,
    mu: f64,
    steps: usize,
}

impl KernelLms {
    pub fn new(h: f64, mu: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(SicError::Config(format!("kernel bandwidth must be positive, got {h}")));
        }
        validate_mu(mu)?;
        Ok(KernelLms {
            window: RegressorWindow::default(),
            u: Vec::with_capacity(2 * REGRESSOR_LEN),
            centers: Vec::new(),
            alphas: Vec::new(),
            h,
            mu,
            steps: 0,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn dictionary_size(&self) -> usize {
        self.alphas.len()
    }

    /// Kernel expansion at a 42-real point.
    pub fn predict(&self, u: &[f64]) -> Complex64 {
        let dim = u.len();
        let scale = -1.0 / (2.0 * self.h * self.h);
        self.centers
            .chunks_exact(dim)
            .zip(&self.alphas)
            .map(|(c, a)| a * (squared_distance(u, c) * scale).exp())
            .sum()
    }
}

impl Canceller for KernelLms {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Klms
    }

    fn step(&mut self, tx: Complex64, d: Complex64, _change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        let index = self.steps;
        self.steps += 1;
        check_finite(index, &[tx, d])?;
        self.window.push(tx);
        self.window.write_real(&mut self.u);
        let result = StepResult::new(d, self.predict(&self.u));
        self.centers.extend_from_slice(&self.u);
        self.alphas.push(result.e * self.mu);
        Ok(result)
    }

    /// Stored centers, one per processed step.
    fn param_count(&self) -> usize {
        self.alphas.len()
    }
}

/// Random Fourier features for the Gaussian kernel of bandwidth `h`.
#[derive(Clone, Debug)]
pub struct RandomFeatureMap {
    omega: Vec<f64>,
    phase: Vec<f64>,
    input_dim: usize,
    features: usize,
    seed: u64,
}

impl RandomFeatureMap {
    pub fn new(input_dim: usize, features: usize, h: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || features == 0 {
            return Err(SicError::Config("feature map dimensions must be positive".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(SicError::Config(format!("kernel bandwidth must be positive, got {h}")));
        }
        let mut rng = seeded(seed);
        let omega = (0..features * input_dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g / h
            })
            .collect();
        let uniform = Uniform::new(0.0, std::f64::consts::TAU).expect("valid phase range");
        let phase = (0..features).map(|_| rng.sample(uniform)).collect();
        Ok(RandomFeatureMap {
            omega,
            phase,
            input_dim,
            features,
            seed,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `z = sqrt(2/D) cos(omega u + b)`.
    pub fn map_into(&self, u: &[f64], z: &mut [f64]) {
        assert_eq!(u.len(), self.input_dim, "feature input length mismatch");
        let gain = (2.0 / self.features as f64).sqrt();
        for ((row, b), out) in self
            .omega
            .chunks_exact(self.input_dim)
            .zip(&self.phase)
            .zip(z.iter_mut())
        {
            let arg: f64 = row.iter().zip(u).map(|(w, x)| w * x).sum::<f64>() + b;
            *out = gain * arg.cos();
        }
    }

    pub fn map(&self, u: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.features];
        self.map_into(u, &mut z);
        z
    }
}

/// LMS on random features with a fixed parameter budget.
#[derive(Clone, Debug)]
pub struct RfkLms {
    map: RandomFeatureMap,
    window: RegressorWindow,
    u: Vec<f64>,
    z: Vec<f64>,
    w: Vec<Complex64>,
    mu: f64,
    steps: usize,
}

impl RfkLms {
    pub fn new(map: RandomFeatureMap, mu: f64) -> Result<Self> {
        validate_mu(mu)?;
        if map.input_dim != 2 * REGRESSOR_LEN {
            return Err(SicError::Config(format!(
                "feature map expects {} inputs, windows have {}",
                map.input_dim,
                2 * REGRESSOR_LEN
            )));
        }
        let d = map.features();
        Ok(RfkLms {
            map,
            window: RegressorWindow::default(),
            u: Vec::with_capacity(2 * REGRESSOR_LEN),
            z: vec![0.0; d],
            w: vec![Complex64::default(); d],
            mu,
            steps: 0,
        })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.w
    }
}

impl Canceller for RfkLms {
    fn algorithm(&self) -> Algorithm {
        Algorithm::RfkLms
    }

    fn step(&mut self, tx: Complex64, d: Complex64, _change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        let index = self.steps;
        self.steps += 1;
        check_finite(index, &[tx, d])?;
        self.window.push(tx);
        self.window.write_real(&mut self.u);
        self.map.map_into(&self.u, &mut self.z);
        let y_hat: Complex64 = self.w.iter().zip(&self.z).map(|(w, z)| w * z).sum();
        let result = StepResult::new(d, y_hat);
        let g = result.e * self.mu;
        for (w, z) in self.w.iter_mut().zip(&self.z) {
            *w += g * z;
        }
        check_finite(index, &[g])?;
        Ok(result)
    }

    /// Complex feature weights; twice this many real parameters.
    fn param_count(&self) -> usize {
        self.w.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::si_channel::complex_noise;
    use proptest::prelude::*;

    fn random_point(seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..42)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            })
            .collect()
    }

    #[test]
    fn first_step_returns_input() {
        let mut k = KernelLms::new(1.0, 0.5).unwrap();
        let d = Complex64::new(3e-5, -1e-5);
        let r = k.step(Complex64::new(0.3, 0.1), d, None).unwrap();
        assert_eq!(r.y_hat, Complex64::default());
        assert_eq!(r.e, d);
    }

    #[test]
    fn repeated_window_predicts_scaled_error() {
        let mut k = KernelLms::new(0.7, 0.5).unwrap();
        let d1 = Complex64::new(2e-4, 1e-4);
        let e1 = k.step(Complex64::default(), d1, None).unwrap().e;
        let r2 = k.step(Complex64::default(), Complex64::default(), None).unwrap();
        assert!((r2.y_hat - e1 * 0.5).norm() < 1e-18);
    }

    #[test]
    fn dictionary_grows_by_one_per_step() {
        let tx = complex_noise(300, 20.0, 1);
        let mut k = KernelLms::new(0.5, 0.5).unwrap();
        for (n, x) in tx.iter().enumerate() {
            k.step(*x, Complex64::default(), None).unwrap();
            assert_eq!(k.dictionary_size(), n + 1);
            assert_eq!(k.param_count(), n + 1);
        }
    }

    #[test]
    fn non_finite_input_is_a_fault() {
        let mut k = KernelLms::new(0.5, 0.5).unwrap();
        let r = k.step(Complex64::new(f64::INFINITY, 0.0), Complex64::default(), None);
        assert!(matches!(r, Err(SicError::NumericFault { .. })));
    }

    #[test]
    fn median_bandwidth_matches_direct_computation() {
        let tx = complex_noise(600, 20.0, 2);
        // With every window selected the median is order-independent.
        let h = median_bandwidth(&tx, 600, 3).unwrap();
        let windows: Vec<Vec<f64>> = (20..600)
            .map(|end| (0..21).map(|k| tx[end - k]).collect::<Vec<_>>())
            .map(|t| {
                let mut v: Vec<f64> = t.iter().map(|c| c.re).collect();
                v.extend(t.iter().map(|c| c.im));
                v
            })
            .collect();
        let mut all = Vec::new();
        for i in 0..windows.len() {
            for j in i + 1..windows.len() {
                all.push(squared_distance(&windows[i], &windows[j]).sqrt());
            }
        }
        all.sort_by(f64::total_cmp);
        assert_eq!(h, all[all.len() / 2]);
        // Oracle for white input: ||a - b||² ≈ 2 * 21 * P, so h ≈ sqrt(42 * 0.1).
        assert!((h / (42.0f64 * 0.1).sqrt() - 1.0).abs() < 0.05);
        assert!(median_bandwidth(&[Complex64::default(); 100], 50, 1).is_err());
    }

    #[test]
    fn feature_norm_bounded() {
        let map = RandomFeatureMap::new(42, 500, 1.3, 7).unwrap();
        for s in 0..20 {
            let z = map.map(&random_point(s, 2.0));
            assert!(z.iter().map(|v| v * v).sum::<f64>() <= 2.0 + 1e-12);
            assert!(z.iter().all(|v| v.abs() <= (2.0f64 / 500.0).sqrt() + 1e-15));
        }
    }

    #[test]
    fn features_are_deterministic_per_seed() {
        let a = RandomFeatureMap::new(42, 500, 1.0, 11).unwrap();
        let b = RandomFeatureMap::new(42, 500, 1.0, 11).unwrap();
        let c = RandomFeatureMap::new(42, 500, 1.0, 12).unwrap();
        let p = random_point(0, 0.3);
        assert_eq!(a.map(&p), b.map(&p));
        assert_ne!(a.map(&p), c.map(&p));
    }

    fn approximation_error(features: usize, pairs: &[(Vec<f64>, Vec<f64>)], h: f64) -> f64 {
        let mut total = 0.0;
        for seed in 0..20 {
            let map = RandomFeatureMap::new(42, features, h, 1000 + seed).unwrap();
            for (a, b) in pairs {
                let za = map.map(a);
                let zb = map.map(b);
                let approx: f64 = za.iter().zip(&zb).map(|(x, y)| x * y).sum();
                total += (approx - gaussian_kernel(a, b, h)).abs();
            }
        }
        total / (20 * pairs.len()) as f64
    }

    #[test]
    fn random_features_approximate_gaussian_kernel() {
        let scale = 0.3;
        let h = (2.0 * 42.0f64).sqrt() * scale;
        let pairs: Vec<_> = (0..50)
            .map(|i| (random_point(2 * i, scale), random_point(2 * i + 1, scale)))
            .collect();
        let e500 = approximation_error(500, &pairs, h);
        let e1000 = approximation_error(1000, &pairs, h);
        assert!(e500 < 0.08, "mean abs error {e500}");
        assert!(e1000 <= e500, "D=1000 error {e1000} vs D=500 {e500}");
    }

    #[test]
    fn rfk_first_step_and_fixed_budget() {
        let map = RandomFeatureMap::new(42, 500, 1.0, 5).unwrap();
        let mut c = RfkLms::new(map, 0.5).unwrap();
        let tx = complex_noise(2000, 20.0, 8);
        let d = complex_noise(2000, -50.0, 9);
        let first = c.step(tx[0], d[0], None).unwrap();
        assert_eq!(first.y_hat, Complex64::default());
        for n in 1..tx.len() {
            c.step(tx[n], d[n], None).unwrap();
        }
        assert_eq!(c.param_count(), 500);
        assert!(RfkLms::new(RandomFeatureMap::new(10, 500, 1.0, 5).unwrap(), 0.5).is_err());
    }

    #[test]
    fn rfk_learns_a_smooth_target() {
        // d = first tap, a smooth function of the window: residual should drop.
        let tx = complex_noise(6000, 20.0, 31);
        let h = median_bandwidth(&tx, 500, 4).unwrap();
        let mut c = RfkLms::new(RandomFeatureMap::new(42, 500, h, 6).unwrap(), 0.5).unwrap();
        let mut head = 0.0;
        let mut tail = 0.0;
        for (n, x) in tx.iter().enumerate() {
            let d = x * 1e-3;
            let e = c.step(*x, d, None).unwrap().e.norm_sqr();
            if n < 500 {
                head += e;
            } else if n >= 5500 {
                tail += e;
            }
        }
        assert!(tail < head);
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_bounded(
            a in proptest::collection::vec(-5.0f64..5.0, 42),
            b in proptest::collection::vec(-5.0f64..5.0, 42),
            h in 0.1f64..10.0,
        ) {
            let ab = gaussian_kernel(&a, &b, h);
            prop_assert_eq!(ab, gaussian_kernel(&b, &a, h));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(gaussian_kernel(&a, &a, h), 1.0);
        }
    }
}
