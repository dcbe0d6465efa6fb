//! Scenario files: TOML with the sections below. Every field except those in
//! `[power]`, `[channel]`, `[[segment]]`, `[seeds]` and `[[canceller]]`'s
//! `algorithm` key has a default; the resolved form (defaults filled in) is
//! what [`ScenarioConfig::to_toml`] prints.
//!
//! ```toml
//! [power]
//! tx_dbm = 20.0
//! residual_si_dbm = -50.0
//! noise_dbm = -90.0
//!
//! [channel]
//! change_interval = 2200   # symbols per channel draw
//! taps = 19
//!
//! [[segment]]
//! symbols = 4400
//! modulation = { kind = "ofdm", qam_order = 16, fft_size = 64, cp_len = 16 }
//!
//! [[segment]]
//! symbols = 4400
//! modulation = { kind = "single_carrier", qam_order = 1024 }
//!
//! [seeds]
//! signal = 1
//! channel = 2
//! noise = 3
//! algorithm = 4
//!
//! [metrics]                  # optional
//! smoothing_window = 200
//! convergence_margin_db = 3.0
//!
//! [training]                 # optional
//! epoch_scale = 1.0
//!
//! [pa]                       # optional, defaults to the built-in PA
//! memory_depth = 3
//! branches = [{ order = 1, taps = [[1.0, 0.0]] }]
//!
//! [[canceller]]
//! algorithm = "aop-lms"      # plus optional per-algorithm settings
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{DEFAULT_MOMENT_WINDOW, DEFAULT_MU};
use crate::basis::MIN_MOMENT_SAMPLES;
use crate::canceller::Algorithm;
use crate::error::{Result, SicError};
use crate::kernel::{BANDWIDTH_WINDOWS, DEFAULT_FEATURES, DEFAULT_KERNEL_MU};
use crate::rng::derive_seed;
use crate::si_channel::PaConfig;
use crate::signal_gen::ModulationSpec;
use crate::{NUM_BRANCHES, REGRESSOR_LEN};

/// The bundled reference scenario.
pub const REFERENCE_SCENARIO: &str = include_str!("../../scenarios/reference.scenario");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub tx_dbm: f64,
    pub residual_si_dbm: f64,
    pub noise_dbm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub change_interval: usize,
    pub taps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub symbols: usize,
    pub modulation: ModulationSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub signal: u64,
    pub channel: u64,
    pub noise: u64,
    pub algorithm: u64,
}

impl Seeds {
    /// All four seeds derived from one value.
    pub fn from_base(base: u64) -> Self {
        Seeds {
            signal: derive_seed(base, 0),
            channel: derive_seed(base, 1),
            noise: derive_seed(base, 2),
            algorithm: derive_seed(base, 3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub smoothing_window: usize,
    /// Convergence threshold above the noise floor.
    pub convergence_margin_db: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            smoothing_window: 200,
            convergence_margin_db: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// Multiplies every network's epoch count (rounded to the nearest integer).
    pub epoch_scale: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection { epoch_scale: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSourceSetting {
    Lookahead,
    Buffered,
}

fn mu_default() -> f64 {
    DEFAULT_MU
}
fn kernel_mu_default() -> f64 {
    DEFAULT_KERNEL_MU
}
fn rls_training_default() -> usize {
    2200
}
fn moment_window_default() -> usize {
    DEFAULT_MOMENT_WINDOW
}
fn moment_source_default() -> MomentSourceSetting {
    MomentSourceSetting::Lookahead
}
fn bandwidth_windows_default() -> usize {
    BANDWIDTH_WINDOWS
}
fn features_default() -> usize {
    DEFAULT_FEATURES
}
fn dnn_epochs_default() -> usize {
    30_000
}
fn adaptive_dnn_epochs_default() -> usize {
    40_000
}
fn dnn_training_default() -> usize {
    2200
}
fn batch_default() -> usize {
    64
}

/// One canceller and its settings, tagged by `algorithm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CancellerSpec {
    None,
    WhLms {
        #[serde(default = "mu_default")]
        mu: f64,
    },
    WhRlsOrth {
        #[serde(default = "mu_default")]
        mu: f64,
        /// Leading transmit samples used for the covariance estimate.
        #[serde(default = "rls_training_default")]
        training_symbols: usize,
    },
    WihLms {
        #[serde(default = "mu_default")]
        mu: f64,
        /// Power of the Gaussian the basis is built for; defaults to `tx_dbm`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nominal_power_dbm: Option<f64>,
    },
    AopLms {
        #[serde(default = "mu_default")]
        mu: f64,
        #[serde(default = "moment_window_default")]
        moment_window: usize,
        #[serde(default = "moment_source_default")]
        moment_source: MomentSourceSetting,
    },
    Klms {
        #[serde(default = "kernel_mu_default")]
        mu: f64,
        /// Fixed bandwidth; the median heuristic over the first segment otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bandwidth: Option<f64>,
        #[serde(default = "bandwidth_windows_default")]
        bandwidth_windows: usize,
    },
    RfkLms {
        #[serde(default = "kernel_mu_default")]
        mu: f64,
        #[serde(default = "features_default")]
        features: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bandwidth: Option<f64>,
        #[serde(default = "bandwidth_windows_default")]
        bandwidth_windows: usize,
    },
    Dnn {
        #[serde(default = "dnn_epochs_default")]
        epochs: usize,
        #[serde(default = "dnn_training_default")]
        training_symbols: usize,
        #[serde(default = "batch_default")]
        batch_size: usize,
        /// Pretrained network; skips training when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights_file: Option<PathBuf>,
    },
    AdaptiveDnn {
        #[serde(default = "adaptive_dnn_epochs_default")]
        epochs: usize,
        #[serde(default = "mu_default")]
        estimator_mu: f64,
        #[serde(default = "batch_default")]
        batch_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights_file: Option<PathBuf>,
    },
}

impl CancellerSpec {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            CancellerSpec::None => Algorithm::None,
            CancellerSpec::WhLms { .. } => Algorithm::WhLms,
            CancellerSpec::WhRlsOrth { .. } => Algorithm::WhRlsOrth,
            CancellerSpec::WihLms { .. } => Algorithm::WihLms,
            CancellerSpec::AopLms { .. } => Algorithm::AopLms,
            CancellerSpec::Klms { .. } => Algorithm::Klms,
            CancellerSpec::RfkLms { .. } => Algorithm::RfkLms,
            CancellerSpec::Dnn { .. } => Algorithm::Dnn,
            CancellerSpec::AdaptiveDnn { .. } => Algorithm::AdaptiveDnn,
        }
    }

    /// Settings with every default filled in.
    pub fn default_for(algorithm: Algorithm) -> Self {
        let text = format!("algorithm = \"{algorithm}\"");
        toml::from_str(&text).expect("every algorithm has complete defaults")
    }

    fn validate(&self, cfg: &ScenarioConfig) -> Result<()> {
        let name = self.algorithm();
        let bad = |msg: String| Err(SicError::Validation(format!("canceller {name}: {msg}")));
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bad(format!("{field} must be positive, got {v}"))
            }
        };
        match self {
            CancellerSpec::None => Ok(()),
            CancellerSpec::WhLms { mu } => positive("mu", *mu),
            CancellerSpec::WhRlsOrth { mu, training_symbols } => {
                positive("mu", *mu)?;
                let needed = 10 * NUM_BRANCHES * REGRESSOR_LEN;
                if *training_symbols < needed || *training_symbols > cfg.total_symbols() {
                    return bad(format!(
                        "training_symbols must lie in [{needed}, {}], got {training_symbols}",
                        cfg.total_symbols()
                    ));
                }
                Ok(())
            }
            CancellerSpec::WihLms { mu, nominal_power_dbm } => {
                positive("mu", *mu)?;
                match nominal_power_dbm {
                    Some(p) if !p.is_finite() => bad(format!("nominal_power_dbm must be finite, got {p}")),
                    _ => Ok(()),
                }
            }
            CancellerSpec::AopLms { mu, moment_window, .. } => {
                positive("mu", *mu)?;
                if *moment_window < MIN_MOMENT_SAMPLES {
                    return bad(format!("moment_window must be at least {MIN_MOMENT_SAMPLES}"));
                }
                Ok(())
            }
            CancellerSpec::Klms {
                mu,
                bandwidth,
                bandwidth_windows,
            } => {
                positive("mu", *mu)?;
                if let Some(h) = bandwidth {
                    positive("bandwidth", *h)?;
                }
                if *bandwidth_windows < 2 {
                    return bad("bandwidth_windows must be at least 2".into());
                }
                Ok(())
            }
            CancellerSpec::RfkLms {
                mu,
                features,
                bandwidth,
                bandwidth_windows,
            } => {
                positive("mu", *mu)?;
                if *features == 0 {
                    return bad("features must be positive".into());
                }
                if let Some(h) = bandwidth {
                    positive("bandwidth", *h)?;
                }
                if *bandwidth_windows < 2 {
                    return bad("bandwidth_windows must be at least 2".into());
                }
                Ok(())
            }
            CancellerSpec::Dnn {
                training_symbols,
                batch_size,
                ..
            } => {
                if *training_symbols == 0 || *training_symbols > cfg.total_symbols() {
                    return bad(format!(
                        "training_symbols must lie in [1, {}], got {training_symbols}",
                        cfg.total_symbols()
                    ));
                }
                if *batch_size == 0 {
                    return bad("batch_size must be positive".into());
                }
                Ok(())
            }
            CancellerSpec::AdaptiveDnn {
                estimator_mu,
                batch_size,
                ..
            } => {
                positive("estimator_mu", *estimator_mu)?;
                if *batch_size == 0 {
                    return bad("batch_size must be positive".into());
                }
                Ok(())
            }
        }
    }
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub power: PowerSection,
    pub channel: ChannelSection,
    #[serde(rename = "segment")]
    pub segments: Vec<Segment>,
    pub seeds: Seeds,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub pa: PaConfig,
    #[serde(rename = "canceller", default)]
    pub cancellers: Vec<CancellerSpec>,
}

impl ScenarioConfig {
    /// Parses and validates scenario text; `origin` names the source in errors.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |message: String| SicError::Parse {
            path: origin.into(),
            message,
        };
        let de = toml::Deserializer::parse(text).map_err(|e| parse_err(e.to_string()))?;
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            parse_err(format!("at '{path}': {}", e.into_inner().message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_SCENARIO, "reference.scenario").expect("bundled scenario is valid")
    }

    /// Resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn total_symbols(&self) -> usize {
        self.segments.iter().map(|s| s.symbols).sum()
    }

    /// Sample index at which each segment starts.
    pub fn segment_starts(&self) -> Vec<usize> {
        self.segments
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.symbols;
                Some(start)
            })
            .collect()
    }

    /// Half-open `[start, end)` ranges between consecutive channel changes or
    /// segment switches.
    pub fn epochs(&self) -> Vec<(usize, usize)> {
        let total = self.total_symbols();
        let mut starts = self.segment_starts();
        starts.extend((0..total).step_by(self.channel.change_interval.max(1)));
        starts.sort_unstable();
        starts.dedup();
        starts
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, starts.get(i + 1).copied().unwrap_or(total)))
            .collect()
    }

    pub fn convergence_threshold_dbm(&self) -> f64 {
        self.power.noise_dbm + self.metrics.convergence_margin_db
    }

    pub fn scaled_epochs(&self, epochs: usize) -> usize {
        (epochs as f64 * self.training.epoch_scale).round() as usize
    }

    /// Keeps only the listed algorithms, adding default settings for any not
    /// present in the file.
    pub fn select(&mut self, algorithms: &[Algorithm]) -> Result<()> {
        let mut chosen = Vec::with_capacity(algorithms.len());
        for &a in algorithms {
            let spec = self
                .cancellers
                .iter()
                .find(|c| c.algorithm() == a)
                .cloned()
                .unwrap_or_else(|| CancellerSpec::default_for(a));
            chosen.push(spec);
        }
        self.cancellers = chosen;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SicError::Validation(msg));
        if self.segments.is_empty() {
            return bad("at least one segment is required".into());
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.symbols == 0 {
                return bad(format!("segment {} has zero symbols", i + 1));
            }
            s.modulation
                .validate()
                .map_err(|e| SicError::Validation(format!("segment {}: {e}", i + 1)))?;
        }
        let total = self.total_symbols();
        let interval = self.channel.change_interval;
        if interval == 0 {
            return bad("channel.change_interval must be positive".into());
        }
        if !total.is_multiple_of(interval) {
            return bad(format!(
                "total of {total} symbols is not a multiple of channel.change_interval {interval}"
            ));
        }
        if self.channel.taps == 0 {
            return bad("channel.taps must be positive".into());
        }
        let p = &self.power;
        if !p.tx_dbm.is_finite()
            || !p.residual_si_dbm.is_finite()
            || p.noise_dbm.is_nan()
            || p.noise_dbm == f64::INFINITY
        {
            return bad("power levels must be finite (noise_dbm may be -inf)".into());
        }
        if self.metrics.smoothing_window == 0 {
            return bad("metrics.smoothing_window must be positive".into());
        }
        if !self.metrics.convergence_margin_db.is_finite() {
            return bad("metrics.convergence_margin_db must be finite".into());
        }
        if !(self.training.epoch_scale >= 0.0) || !self.training.epoch_scale.is_finite() {
            return bad(format!(
                "training.epoch_scale must be non-negative, got {}",
                self.training.epoch_scale
            ));
        }
        self.pa
            .validate()
            .map_err(|e| SicError::Validation(format!("pa: {e}")))?;
        if self.cancellers.is_empty() {
            return bad("at least one canceller is required".into());
        }
        for (i, c) in self.cancellers.iter().enumerate() {
            if self.cancellers[..i].iter().any(|o| o.algorithm() == c.algorithm()) {
                return bad(format!("canceller {} listed twice", c.algorithm()));
            }
            c.validate(self)?;
        }
        Ok(())
    }
}

/// Reads and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SicError::io(path, e))?;
    ScenarioConfig::from_toml(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_published_setup() {
        let cfg = ScenarioConfig::reference();
        assert_eq!(cfg.segments.len(), 2);
        assert_eq!(cfg.segments[0].symbols, 4400);
        assert!(matches!(cfg.segments[0].modulation, ModulationSpec::Ofdm { .. }));
        assert_eq!(cfg.segments[1].modulation, ModulationSpec::single_carrier(1024));
        assert_eq!(cfg.channel.change_interval, 2200);
        assert_eq!(
            (cfg.power.tx_dbm, cfg.power.residual_si_dbm, cfg.power.noise_dbm),
            (20.0, -50.0, -90.0)
        );
        let algos: Vec<Algorithm> = cfg.cancellers.iter().map(|c| c.algorithm()).collect();
        assert_eq!(algos, Algorithm::COMPARED.to_vec());
        assert_eq!(cfg.epochs(), vec![(0, 2200), (2200, 4400), (4400, 6600), (6600, 8800)]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ScenarioConfig::reference();
        let again = ScenarioConfig::from_toml(&cfg.to_toml(), "echo").unwrap();
        assert_eq!(cfg, again);
    }

    fn edit(from: &str, to: &str) -> String {
        assert!(REFERENCE_SCENARIO.contains(from), "{from}");
        REFERENCE_SCENARIO.replacen(from, to, 1)
    }

    #[test]
    fn empty_segment_list_is_rejected() {
        let mut cfg = ScenarioConfig::reference();
        cfg.segments.clear();
        assert!(matches!(cfg.validate(), Err(SicError::Validation(_))));
    }

    #[test]
    fn indivisible_total_is_rejected() {
        let mut cfg = ScenarioConfig::reference();
        cfg.segments[1].symbols = 4401;
        assert_eq!(cfg.total_symbols(), 8801);
        assert!(matches!(cfg.validate(), Err(SicError::Validation(_))));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = edit("qam_order = 1024", "qam_order = \"big\"");
        match ScenarioConfig::from_toml(&text, "x.scenario") {
            Err(SicError::Parse { message, .. }) => assert!(message.contains("segment[1].modulation"), "{message}"),
            other => panic!("{other:?}"),
        }
        let text = edit("[seeds]", "[seeds]\nbogus = 1");
        assert!(matches!(
            ScenarioConfig::from_toml(&text, "x"),
            Err(SicError::Parse { .. })
        ));
    }

    #[test]
    fn defaults_are_filled() {
        let spec = CancellerSpec::default_for(Algorithm::AopLms);
        assert_eq!(
            spec,
            CancellerSpec::AopLms {
                mu: 0.5,
                moment_window: 1000,
                moment_source: MomentSourceSetting::Lookahead
            }
        );
        let text = toml::to_string(&CancellerSpec::default_for(Algorithm::Dnn)).unwrap();
        assert!(text.contains("epochs = 30000"));
    }

    #[test]
    fn select_keeps_file_settings_and_adds_defaults() {
        let mut cfg = ScenarioConfig::reference();
        cfg.select(&[Algorithm::None, Algorithm::WihLms]).unwrap();
        assert_eq!(cfg.cancellers.len(), 2);
        assert_eq!(cfg.cancellers[0], CancellerSpec::None);
    }

    #[test]
    fn duplicate_and_bad_settings_are_rejected() {
        let mut cfg = ScenarioConfig::reference();
        cfg.cancellers.push(CancellerSpec::default_for(Algorithm::Klms));
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::reference();
        cfg.cancellers = vec![CancellerSpec::WhRlsOrth {
            mu: 0.5,
            training_symbols: 100,
        }];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn epochs_split_at_segment_boundaries() {
        let mut cfg = ScenarioConfig::reference();
        cfg.segments[0].symbols = 3000;
        cfg.segments[1].symbols = 5800;
        assert_eq!(
            cfg.epochs(),
            vec![(0, 2200), (2200, 3000), (3000, 4400), (4400, 6600), (6600, 8800)]
        );
    }

    #[test]
    fn seed_base_derives_distinct_seeds() {
        let s = Seeds::from_base(7);
        let all = [s.signal, s.channel, s.noise, s.algorithm];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
