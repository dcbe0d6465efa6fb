//! Transmit waveform generation: square M-QAM symbols, OFDM and single-carrier
//! waveforms, and power scaling in dBm.

use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SicError};
use crate::rng::seeded;
use crate::{dbm_to_watts, mean_power, Complex64};

pub const SUPPORTED_QAM_ORDERS: [u32; 5] = [4, 16, 64, 256, 1024];

pub const DEFAULT_FFT_SIZE: usize = 64;
pub const DEFAULT_CP_LEN: usize = 16;

fn default_fft_size() -> usize {
    DEFAULT_FFT_SIZE
}

fn default_cp_len() -> usize {
    DEFAULT_CP_LEN
}

/// Waveform and constellation of one transmit segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulationSpec {
    /// All `fft_size` subcarriers carry QAM data; no pilots or guard bands.
    Ofdm {
        qam_order: u32,
        #[serde(default = "default_fft_size")]
        fft_size: usize,
        #[serde(default = "default_cp_len")]
        cp_len: usize,
    },
    /// One QAM symbol per sample, no pulse shaping.
    SingleCarrier { qam_order: u32 },
}

impl ModulationSpec {
    pub fn ofdm(qam_order: u32) -> Self {
        ModulationSpec::Ofdm {
            qam_order,
            fft_size: DEFAULT_FFT_SIZE,
            cp_len: DEFAULT_CP_LEN,
        }
    }

    pub fn single_carrier(qam_order: u32) -> Self {
        ModulationSpec::SingleCarrier { qam_order }
    }

    pub fn qam_order(&self) -> u32 {
        match *self {
            ModulationSpec::Ofdm { qam_order, .. } | ModulationSpec::SingleCarrier { qam_order } => qam_order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_qam_order(self.qam_order())?;
        if let ModulationSpec::Ofdm { fft_size, cp_len, .. } = *self {
            if fft_size == 0 || !fft_size.is_power_of_two() {
                return Err(SicError::Config(format!(
                    "fft_size must be a power of two, got {fft_size}"
                )));
            }
            if cp_len >= fft_size {
                return Err(SicError::Config(format!(
                    "cp_len ({cp_len}) must be shorter than fft_size ({fft_size})"
                )));
            }
        }
        Ok(())
    }

    /// Short human-readable label, e.g. `OFDM-16QAM` or `SC-1024QAM`.
    pub fn label(&self) -> String {
        match self {
            ModulationSpec::Ofdm { qam_order, .. } => format!("OFDM-{qam_order}QAM"),
            ModulationSpec::SingleCarrier { qam_order } => format!("SC-{qam_order}QAM"),
        }
    }
}

/// A generated transmit stream.
#[derive(Clone, Debug)]
pub struct TxStream {
    pub samples: Vec<Complex64>,
    pub power_dbm: f64,
    pub seed: u64,
}

fn check_qam_order(order: u32) -> Result<()> {
    if SUPPORTED_QAM_ORDERS.contains(&order) {
        Ok(())
    } else {
        Err(SicError::Config(format!(
            "unsupported QAM order {order}; expected one of {SUPPORTED_QAM_ORDERS:?}"
        )))
    }
}

/// The square QAM constellation normalized to unit average power, in row-major
/// order of the (I, Q) level grid.
pub fn qam_constellation(order: u32) -> Result<Vec<Complex64>> {
    check_qam_order(order)?;
    let side = (order as f64).sqrt().round() as i32;
    // Average power of the odd-integer grid is 2(M-1)/3.
    let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
    let levels: Vec<f64> = (0..side).map(|i| (2 * i - side + 1) as f64).collect();
    let mut points = Vec::with_capacity(order as usize);
    for &i in &levels {
        for &q in &levels {
            points.push(Complex64::new(i * norm, q * norm));
        }
    }
    Ok(points)
}

/// `n` i.i.d. uniform draws from the unit-power square QAM constellation.
pub fn gen_qam_symbols(order: u32, n: usize, seed: u64) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(SicError::Config("symbol count must be at least 1".into()));
    }
    let points = qam_constellation(order)?;
    let mut rng = seeded(seed);
    Ok((0..n).map(|_| points[rng.random_range(0..points.len())]).collect())
}

/// Unitary inverse DFT per block of `fft_size` symbols with a cyclic prefix of
/// `cp_len` samples prepended to each block.
pub fn ofdm_modulate(symbols: &[Complex64], fft_size: usize, cp_len: usize) -> Result<Vec<Complex64>> {
    ModulationSpec::Ofdm {
        qam_order: 4,
        fft_size,
        cp_len,
    }
    .validate()?;
    if !symbols.len().is_multiple_of(fft_size) {
        return Err(SicError::Framing(format!(
            "{} symbols is not a multiple of fft_size {fft_size}",
            symbols.len()
        )));
    }
    let ifft = FftPlanner::new().plan_fft_inverse(fft_size);
    let scale = (fft_size as f64).sqrt().recip();
    let mut out = Vec::with_capacity(symbols.len() / fft_size * (fft_size + cp_len));
    let mut block = vec![Complex64::default(); fft_size];
    for chunk in symbols.chunks_exact(fft_size) {
        block.copy_from_slice(chunk);
        ifft.process(&mut block);
        block.iter_mut().for_each(|s| *s *= scale);
        out.extend_from_slice(&block[fft_size - cp_len..]);
        out.extend_from_slice(&block);
    }
    Ok(out)
}

/// Scales `samples` so that their mean power equals `target_dbm` exactly.
pub fn scale_to_dbm(samples: &[Complex64], target_dbm: f64) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(SicError::DegenerateInput("cannot scale an empty sequence".into()));
    }
    let power = mean_power(samples);
    if power == 0.0 {
        return Err(SicError::DegenerateInput("cannot scale an all-zero sequence".into()));
    }
    let gain = (dbm_to_watts(target_dbm) / power).sqrt();
    Ok(samples.iter().map(|&s| s * gain).collect())
}

/// Generates `n_samples` of the given waveform at `power_dbm`.
///
/// OFDM is produced in whole blocks and truncated to `n_samples`; the power is
/// set on the truncated sequence.
pub fn generate(spec: &ModulationSpec, n_samples: usize, power_dbm: f64, seed: u64) -> Result<TxStream> {
    spec.validate()?;
    if n_samples == 0 {
        return Err(SicError::Config("segment length must be at least 1".into()));
    }
    let raw = match *spec {
        ModulationSpec::SingleCarrier { qam_order } => gen_qam_symbols(qam_order, n_samples, seed)?,
        ModulationSpec::Ofdm {
            qam_order,
            fft_size,
            cp_len,
        } => {
            let blocks = n_samples.div_ceil(fft_size + cp_len);
            let symbols = gen_qam_symbols(qam_order, blocks * fft_size, seed)?;
            let mut samples = ofdm_modulate(&symbols, fft_size, cp_len)?;
            samples.truncate(n_samples);
            samples
        }
    };
    Ok(TxStream {
        samples: scale_to_dbm(&raw, power_dbm)?,
        power_dbm,
        seed,
    })
}
