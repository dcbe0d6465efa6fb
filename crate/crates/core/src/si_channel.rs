//! Self-interference path: memory-polynomial power amplifier, piecewise-constant
//! FIR channel, analog-SIC attenuation to a fixed residual power, and receiver noise.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SicError};
use crate::rng::{derive_seed, seeded};
use crate::{dbm_to_watts, mean_power, Complex64};

/// One odd-order branch of the memory polynomial: `taps[m]` multiplies
/// `x[n-m] |x[n-m]|^(order-1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaBranch {
    pub order: u32,
    pub taps: Vec<Complex64>,
}

/// Memory-polynomial PA model with odd orders up to 5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaConfig {
    pub memory_depth: usize,
    pub branches: Vec<PaBranch>,
}

impl Default for PaConfig {
    /// Linear taps `[1, 0.05e^{j0.3}, 0.01e^{-j1.1}]`; third and fifth order
    /// `0.08e^{j0.5}` and `0.006e^{-j0.8}` times the memory profile `[1, 0.2, 0.05]`.
    fn default() -> Self {
        let profile = [1.0, 0.2, 0.05];
        let scaled = |g: Complex64| profile.iter().map(|&p| g * p).collect::<Vec<_>>();
        PaConfig {
            memory_depth: 3,
            branches: vec![
                PaBranch {
                    order: 1,
                    taps: vec![
                        Complex64::new(1.0, 0.0),
                        Complex64::from_polar(0.05, 0.3),
                        Complex64::from_polar(0.01, -1.1),
                    ],
                },
                PaBranch {
                    order: 3,
                    taps: scaled(Complex64::from_polar(0.08, 0.5)),
                },
                PaBranch {
                    order: 5,
                    taps: scaled(Complex64::from_polar(0.006, -0.8)),
                },
            ],
        }
    }
}

impl PaConfig {
    /// A PA that passes its input through unchanged.
    pub fn identity() -> Self {
        PaConfig {
            memory_depth: 1,
            branches: vec![PaBranch {
                order: 1,
                taps: vec![Complex64::new(1.0, 0.0)],
            }],
        }
    }

    /// Copy of this PA with only the linear branch kept.
    pub fn linear_only(&self) -> Self {
        PaConfig {
            memory_depth: self.memory_depth,
            branches: self.branches.iter().filter(|b| b.order == 1).cloned().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory_depth == 0 {
            return Err(SicError::Config("PA memory_depth must be at least 1".into()));
        }
        let mut seen = Vec::new();
        for b in &self.branches {
            if ![1, 3, 5].contains(&b.order) {
                return Err(SicError::Config(format!(
                    "PA branch order {} not supported; only odd orders 1, 3, 5",
                    b.order
                )));
            }
            if seen.contains(&b.order) {
                return Err(SicError::Config(format!("duplicate PA branch order {}", b.order)));
            }
            seen.push(b.order);
            if b.taps.len() > self.memory_depth {
                return Err(SicError::Config(format!(
                    "PA branch order {} has {} taps but memory_depth is {}",
                    b.order,
                    b.taps.len(),
                    self.memory_depth
                )));
            }
            if b.taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
                return Err(SicError::Config("PA coefficients must be finite".into()));
            }
        }
        let linear_gain = self
            .branches
            .iter()
            .find(|b| b.order == 1)
            .and_then(|b| b.taps.first().copied())
            .unwrap_or_default();
        if linear_gain.norm() == 0.0 {
            return Err(SicError::Config(
                "PA linear gain (order 1, tap 0) must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Applies the memory polynomial with zero history before the first sample.
pub fn pa_apply(x: &[Complex64], pa: &PaConfig) -> Vec<Complex64> {
    let mut y = vec![Complex64::default(); x.len()];
    for branch in &pa.branches {
        let shaped: Vec<Complex64> = x.iter().map(|&s| s * s.norm().powi(branch.order as i32 - 1)).collect();
        for (m, &c) in branch.taps.iter().enumerate() {
            for n in m..x.len() {
                y[n] += c * shaped[n - m];
            }
        }
    }
    y
}

/// Linear convolution truncated to the input length (zero-padded history).
pub fn channel_apply(x: &[Complex64], h: &[Complex64]) -> Result<Vec<Complex64>> {
    if h.is_empty() {
        return Err(SicError::Config("channel impulse response is empty".into()));
    }
    Ok((0..x.len())
        .map(|n| h.iter().take(n + 1).enumerate().map(|(k, &hk)| hk * x[n - k]).sum())
        .collect())
}

/// Piecewise-constant channel: epoch `e` covers samples
/// `[e * change_interval, (e + 1) * change_interval)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSchedule {
    pub change_interval: usize,
    pub taps_per_epoch: Vec<Vec<Complex64>>,
    pub seed: u64,
}

/// Draws `len` i.i.d. circular Gaussian taps normalized to unit energy.
pub fn random_unit_channel(len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = seeded(seed);
    let mut h: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    let energy: f64 = h.iter().map(|t| t.norm_sqr()).sum();
    let g = energy.sqrt().recip();
    h.iter_mut().for_each(|t| *t *= g);
    h
}

impl ChannelSchedule {
    /// Independent unit-energy channels; epoch `e` is drawn from a sub-seed of
    /// `(seed, e)` so epochs do not depend on each other.
    pub fn random(epochs: usize, taps: usize, change_interval: usize, seed: u64) -> Self {
        ChannelSchedule {
            change_interval,
            taps_per_epoch: (0..epochs)
                .map(|e| random_unit_channel(taps, derive_seed(seed, e as u64)))
                .collect(),
            seed,
        }
    }

    pub fn epochs(&self) -> usize {
        self.taps_per_epoch.len()
    }

    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.change_interval == 0 {
            return Err(SicError::Config("channel change_interval must be positive".into()));
        }
        if self.taps_per_epoch.iter().any(|h| h.is_empty()) {
            return Err(SicError::Config("channel epoch with empty impulse response".into()));
        }
        let covered = self.change_interval * self.epochs();
        if covered < n_samples {
            return Err(SicError::Config(format!(
                "channel schedule covers {covered} samples but the transmit stream has {n_samples}"
            )));
        }
        Ok(())
    }
}

/// Receive-side signal after analog SIC.
#[derive(Clone, Debug)]
pub struct RxFrame {
    /// `si + noise`, the input every canceller sees as its desired signal.
    pub rx: Vec<Complex64>,
    /// Self-interference component alone.
    pub si: Vec<Complex64>,
    /// Receiver noise component alone.
    pub noise: Vec<Complex64>,
    pub noise_dbm: f64,
    pub residual_si_dbm: f64,
}

/// Analog-front-end and noise settings of the receive path.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiveSettings {
    /// Reference transmit power at which the PA coefficients are specified; the
    /// PA sees `tx / sqrt(P_drive)`.
    pub drive_dbm: f64,
    pub residual_si_dbm: f64,
    /// `f64::NEG_INFINITY` disables noise.
    pub noise_dbm: f64,
}

/// Complex circular Gaussian noise of the given power; all zeros for `-inf` dBm.
pub fn complex_noise(n: usize, power_dbm: f64, seed: u64) -> Vec<Complex64> {
    if power_dbm == f64::NEG_INFINITY {
        return vec![Complex64::default(); n];
    }
    let sigma = (dbm_to_watts(power_dbm) / 2.0).sqrt();
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * sigma, im * sigma)
        })
        .collect()
}

/// Builds the post-analog-SIC receive signal.
///
/// The channel switches instantaneously at epoch boundaries while the delay line
/// carries over. The SI of each epoch is scaled once so that its mean power over
/// that epoch equals `residual_si_dbm`.
pub fn make_received(
    tx: &[Complex64],
    pa: &PaConfig,
    schedule: &ChannelSchedule,
    settings: &ReceiveSettings,
    noise_seed: u64,
) -> Result<RxFrame> {
    pa.validate()?;
    schedule.validate(tx.len())?;
    let drive = dbm_to_watts(settings.drive_dbm).sqrt().recip();
    let normalized: Vec<Complex64> = tx.iter().map(|&s| s * drive).collect();
    let pa_out = pa_apply(&normalized, pa);

    let target = dbm_to_watts(settings.residual_si_dbm);
    let mut si = Vec::with_capacity(tx.len());
    for (e, h) in schedule.taps_per_epoch.iter().enumerate() {
        let start = e * schedule.change_interval;
        if start >= tx.len() {
            break;
        }
        let end = (start + schedule.change_interval).min(tx.len());
        let epoch: Vec<Complex64> = (start..end)
            .map(|n| {
                h.iter()
                    .take(n + 1)
                    .enumerate()
                    .map(|(k, &hk)| hk * pa_out[n - k])
                    .sum()
            })
            .collect();
        let power = mean_power(&epoch);
        let gain = if power > 0.0 { (target / power).sqrt() } else { 0.0 };
        si.extend(epoch.into_iter().map(|s| s * gain));
    }

    let noise = complex_noise(tx.len(), settings.noise_dbm, noise_seed);
    let rx = si.iter().zip(&noise).map(|(s, w)| s + w).collect();
    Ok(RxFrame {
        rx,
        si,
        noise,
        noise_dbm: settings.noise_dbm,
        residual_si_dbm: settings.residual_si_dbm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_gen::{gen_qam_symbols, generate, ModulationSpec};
    use crate::watts_to_dbm;
    use rustfft::FftPlanner;

    fn settings(noise_dbm: f64) -> ReceiveSettings {
        ReceiveSettings {
            drive_dbm: 20.0,
            residual_si_dbm: -50.0,
            noise_dbm,
        }
    }

    #[test]
    fn default_pa_is_valid() {
        PaConfig::default().validate().unwrap();
        PaConfig::identity().validate().unwrap();
    }

    #[test]
    fn pa_validation_errors() {
        let mut pa = PaConfig::default();
        pa.branches[0].taps[0] = Complex64::default();
        assert!(pa.validate().is_err());
        let mut pa = PaConfig::default();
        pa.branches[1].order = 2;
        assert!(pa.validate().is_err());
        let pa = PaConfig {
            memory_depth: 2,
            ..PaConfig::default()
        };
        assert!(pa.validate().is_err());
    }

    #[test]
    fn identity_pa() {
        let x = gen_qam_symbols(64, 100, 1).unwrap();
        assert_eq!(pa_apply(&x, &PaConfig::identity()), x);
    }

    #[test]
    fn single_cubic_branch_magnitude() {
        let c = Complex64::from_polar(0.3, 1.0);
        let pa = PaConfig {
            memory_depth: 1,
            branches: vec![PaBranch {
                order: 3,
                taps: vec![c],
            }],
        };
        let r = 1.7;
        let x: Vec<Complex64> = (0..20).map(|i| Complex64::from_polar(r, 0.4 * i as f64)).collect();
        for y in pa_apply(&x, &pa) {
            assert!((y.norm() - 0.3 * r * r * r).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlinear_branches_cause_spectral_regrowth() {
        // Band-limited OFDM: only the central 32 of 64 bins carry data.
        let n_fft = 64;
        let blocks = 400;
        let mut symbols = gen_qam_symbols(16, blocks * n_fft, 4).unwrap();
        for (i, s) in symbols.iter_mut().enumerate() {
            let bin = i % n_fft;
            if (16..48).contains(&bin) {
                *s = Complex64::default();
            }
        }
        let tx = crate::signal_gen::ofdm_modulate(&symbols, n_fft, 0).unwrap();
        let tx = crate::signal_gen::scale_to_dbm(&tx, 30.0).unwrap();
        let pa = PaConfig::default();

        let out_of_band_fraction = |y: &[Complex64]| {
            let fft = FftPlanner::new().plan_fft_forward(n_fft);
            let (mut oob, mut total) = (0.0, 0.0);
            for chunk in y.chunks_exact(n_fft) {
                let mut buf = chunk.to_vec();
                fft.process(&mut buf);
                for (bin, v) in buf.iter().enumerate() {
                    total += v.norm_sqr();
                    if (20..44).contains(&bin) {
                        oob += v.norm_sqr();
                    }
                }
            }
            oob / total
        };
        let full = out_of_band_fraction(&pa_apply(&tx, &pa));
        let linear = out_of_band_fraction(&pa_apply(&tx, &pa.linear_only()));
        // Linear memory spreads a little energy across block edges only.
        assert!(10.0 * (full / linear).log10() >= 10.0, "full {full} linear {linear}");
    }

    #[test]
    fn channel_identity_and_delay() {
        let x = gen_qam_symbols(4, 10, 2).unwrap();
        assert_eq!(channel_apply(&x, &[Complex64::new(1.0, 0.0)]).unwrap(), x);
        let d = channel_apply(&x, &[Complex64::default(), Complex64::new(1.0, 0.0)]).unwrap();
        assert_eq!(d[0], Complex64::default());
        assert_eq!(&d[1..], &x[..9]);
        assert!(channel_apply(&x, &[]).is_err());
    }

    #[test]
    fn unit_energy_channel_preserves_white_power() {
        let h = random_unit_channel(21, 5);
        let energy: f64 = h.iter().map(|t| t.norm_sqr()).sum();
        assert!((energy - 1.0).abs() < 1e-12);
        let x = complex_noise(100_000, 30.0, 11);
        let y = channel_apply(&x, &h).unwrap();
        assert!((mean_power(&y) - 1.0).abs() < 0.02);
    }

    #[test]
    fn received_power_without_noise() {
        let tx = generate(&ModulationSpec::ofdm(16), 8800, 20.0, 1).unwrap();
        let schedule = ChannelSchedule::random(4, 19, 2200, 2);
        let frame = make_received(
            &tx.samples,
            &PaConfig::default(),
            &schedule,
            &settings(f64::NEG_INFINITY),
            3,
        )
        .unwrap();
        for epoch in frame.rx.chunks(2200) {
            assert!((watts_to_dbm(mean_power(epoch)) + 50.0).abs() < 0.1);
        }
    }

    #[test]
    fn noise_floor_only() {
        let tx = vec![Complex64::default(); 100_000];
        let schedule = ChannelSchedule::random(1, 19, 100_000, 2);
        let frame = make_received(&tx, &PaConfig::default(), &schedule, &settings(-90.0), 3).unwrap();
        assert!((watts_to_dbm(mean_power(&frame.rx)) + 90.0).abs() < 0.1);
    }

    #[test]
    fn schedule_must_cover_stream() {
        let tx = vec![Complex64::new(1.0, 0.0); 5000];
        let schedule = ChannelSchedule::random(2, 19, 2200, 2);
        let err = make_received(&tx, &PaConfig::default(), &schedule, &settings(-90.0), 3);
        assert!(matches!(err, Err(SicError::Config(_))));
    }

    #[test]
    fn epoch_isolation() {
        let tx = generate(&ModulationSpec::single_carrier(16), 6600, 20.0, 8).unwrap();
        let a = ChannelSchedule::random(3, 19, 2200, 2);
        let mut b = a.clone();
        b.taps_per_epoch[1] = random_unit_channel(19, 999);
        let s = settings(-90.0);
        let fa = make_received(&tx.samples, &PaConfig::default(), &a, &s, 3).unwrap();
        let fb = make_received(&tx.samples, &PaConfig::default(), &b, &s, 3).unwrap();
        assert_eq!(&fa.rx[..2200], &fb.rx[..2200]);
        assert_eq!(&fa.rx[4400..], &fb.rx[4400..]);
        assert_ne!(&fa.rx[2200..4400], &fb.rx[2200..4400]);
    }

    #[test]
    fn noise_is_independent_of_channel_settings() {
        let tx = generate(&ModulationSpec::ofdm(16), 4400, 20.0, 1).unwrap();
        let s = settings(-90.0);
        let fa = make_received(
            &tx.samples,
            &PaConfig::default(),
            &ChannelSchedule::random(2, 19, 2200, 2),
            &s,
            7,
        )
        .unwrap();
        let fb = make_received(
            &tx.samples,
            &PaConfig::identity(),
            &ChannelSchedule::random(2, 5, 2200, 9),
            &s,
            7,
        )
        .unwrap();
        assert_eq!(fa.noise, fb.noise);
    }

    #[test]
    fn si_to_noise_ratio_is_forty_db() {
        let tx = generate(&ModulationSpec::ofdm(16), 8800, 20.0, 1).unwrap();
        let frame = make_received(
            &tx.samples,
            &PaConfig::default(),
            &ChannelSchedule::random(4, 19, 2200, 2),
            &settings(-90.0),
            3,
        )
        .unwrap();
        let snr = 10.0 * (mean_power(&frame.si) / mean_power(&frame.noise)).log10();
        assert!((snr - 40.0).abs() < 0.5, "SI/noise {snr} dB");
    }
}
