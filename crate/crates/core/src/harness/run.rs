//! Runs every configured canceller over one shared transmit/receive stream.

use crate::adaptive::{wh_rls_orth_prepare, wih_lms_make, AopLms, BasisLms, MomentSource};
use crate::basis::{apply_basis, BasisMatrix, RegressorWindow};
use crate::canceller::{Algorithm, Canceller, DistributionChange, PassThrough};
use crate::error::{Result, SicError};
use crate::kernel::{median_bandwidth, KernelLms, RandomFeatureMap, RfkLms};
use crate::neural::{
    adaptive_dataset, static_dataset, train_mlp, AdaptiveDnnCanceller, MlpVariant, StaticDnnCanceller, TrainConfig,
    TrainedMlp,
};
use crate::rng::derive_seed;
use crate::si_channel::{make_received, ChannelSchedule, ReceiveSettings, RxFrame};
use crate::signal_gen::generate;
use crate::{dbm_to_watts, Complex64, REGRESSOR_LEN};

use super::config::{CancellerSpec, MomentSourceSetting, ScenarioConfig};
use super::metrics::{attenuation_db, convergence_symbols, settle_samples, smoothed_dbm};

/// Transmit stream and the receive signal every canceller consumes.
#[derive(Clone, Debug)]
pub struct Streams {
    pub tx: Vec<Complex64>,
    pub frame: RxFrame,
    pub segment_starts: Vec<usize>,
}

/// Wall-clock seconds since the call. Bare wasm32 has no clock, so it reports 0.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let started = std::time::Instant::now();
    move || started.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

/// Builds the transmit stream and receive signal. Segment `i` draws its
/// symbols from a sub-seed of `(signal_seed, i)`; the channel schedule always
/// comes from the configured channel seed.
pub fn synthesize(cfg: &ScenarioConfig, signal_seed: u64, noise_seed: u64) -> Result<Streams> {
    let mut tx = Vec::with_capacity(cfg.total_symbols());
    for (i, seg) in cfg.segments.iter().enumerate() {
        let stream = generate(
            &seg.modulation,
            seg.symbols,
            cfg.power.tx_dbm,
            derive_seed(signal_seed, i as u64),
        )?;
        tx.extend(stream.samples);
    }
    let epochs = cfg.total_symbols() / cfg.channel.change_interval;
    let schedule = ChannelSchedule::random(epochs, cfg.channel.taps, cfg.channel.change_interval, cfg.seeds.channel);
    let settings = ReceiveSettings {
        drive_dbm: cfg.power.tx_dbm,
        residual_si_dbm: cfg.power.residual_si_dbm,
        noise_dbm: cfg.power.noise_dbm,
    };
    let frame = make_received(&tx, &cfg.pa, &schedule, &settings, noise_seed)?;
    Ok(Streams {
        tx,
        frame,
        segment_starts: cfg.segment_starts(),
    })
}

/// Per-epoch metrics of one canceller.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    /// 1-based epoch number.
    pub epoch: usize,
    pub start_symbol: usize,
    pub attenuation_db: Option<f64>,
    pub convergence_symbols: Option<usize>,
    pub param_count: usize,
}

#[derive(Clone, Debug)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    /// Raw residual `e = d - y_hat`; shorter than the stream after a fault.
    pub residual: Vec<Complex64>,
    pub smoothed_dbm: Vec<f64>,
    pub param_count: usize,
    pub fault: Option<String>,
    pub warnings: Vec<String>,
    pub summaries: Vec<SummaryRow>,
    /// Network trained during this run, if any.
    pub trained: Option<TrainedMlp>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub runs: Vec<AlgorithmRun>,
    pub log: Vec<String>,
}

impl RunReport {
    pub fn run(&self, algorithm: Algorithm) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }
}

/// Streams `streams` through `canceller`, raising a distribution change at
/// every segment start.
pub fn run_canceller(canceller: &mut dyn Canceller, streams: &Streams, cfg: &ScenarioConfig) -> AlgorithmRun {
    let elapsed = stopwatch();
    let tx = &streams.tx;
    let d = &streams.frame.rx;
    let mut residual = Vec::with_capacity(tx.len());
    let mut fault = None;
    for n in 0..tx.len() {
        let change = streams
            .segment_starts
            .contains(&n)
            .then(|| DistributionChange { upcoming: &tx[n..] });
        match canceller.step(tx[n], d[n], change) {
            Ok(r) => residual.push(r.e),
            Err(e) => {
                fault = Some(e.to_string());
                break;
            }
        }
    }
    let window = cfg.metrics.smoothing_window;
    let smoothed = smoothed_dbm(&residual, window);
    let settle = settle_samples(window).max(REGRESSOR_LEN - 1);
    let threshold = cfg.convergence_threshold_dbm();
    let param_count = canceller.param_count();
    let summaries = cfg
        .epochs()
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| SummaryRow {
            algorithm: canceller.algorithm(),
            epoch: i + 1,
            start_symbol: start,
            attenuation_db: attenuation_db(&smoothed, start, end, cfg.power.residual_si_dbm),
            convergence_symbols: convergence_symbols(&smoothed, start, end, settle, threshold),
            param_count,
        })
        .collect();
    AlgorithmRun {
        algorithm: canceller.algorithm(),
        residual,
        smoothed_dbm: smoothed,
        param_count,
        fault,
        warnings: canceller.warnings().to_vec(),
        summaries,
        trained: None,
        seconds: elapsed(),
    }
}

/// Lazily built training stream shared by both networks: same channels and
/// PA as the run, independent symbols and noise.
struct TrainingData<'a> {
    cfg: &'a ScenarioConfig,
    streams: Option<Streams>,
}

impl TrainingData<'_> {
    fn get(&mut self) -> Result<&Streams> {
        if self.streams.is_none() {
            let seed = derive_seed(self.cfg.seeds.algorithm, 0x7261_696e);
            self.streams = Some(synthesize(self.cfg, derive_seed(seed, 0), derive_seed(seed, 1))?);
        }
        Ok(self.streams.as_ref().expect("just built"))
    }
}

fn algorithm_seed(cfg: &ScenarioConfig, algorithm: Algorithm) -> u64 {
    let tag = Algorithm::ALL.iter().position(|&a| a == algorithm).unwrap_or(0) as u64;
    derive_seed(cfg.seeds.algorithm, tag)
}

fn first_segment<'a>(cfg: &ScenarioConfig, tx: &'a [Complex64]) -> &'a [Complex64] {
    &tx[..cfg.segments[0].symbols]
}

fn obtain_network(
    weights: &Option<std::path::PathBuf>,
    variant: MlpVariant,
    log: &mut Vec<String>,
    train: impl FnOnce() -> Result<(TrainedMlp, Vec<f64>)>,
) -> Result<(TrainedMlp, bool)> {
    if let Some(path) = weights {
        let model = TrainedMlp::load(path)?;
        if model.variant != variant {
            return Err(SicError::Config(format!(
                "{} holds the wrong network variant",
                path.display()
            )));
        }
        log.push(format!("loaded network from {}", path.display()));
        return Ok((model, false));
    }
    let (model, losses) = train()?;
    match (losses.first(), losses.last()) {
        (Some(first), Some(last)) => log.push(format!(
            "trained for {} epochs, loss {first:.4e} -> {last:.4e}",
            losses.len()
        )),
        _ => log.push("trained for 0 epochs (initialization only)".into()),
    }
    Ok((model, true))
}

fn build(
    spec: &CancellerSpec,
    cfg: &ScenarioConfig,
    streams: &Streams,
    training: &mut TrainingData<'_>,
    log: &mut Vec<String>,
) -> Result<(Box<dyn Canceller>, Option<TrainedMlp>)> {
    let seed = algorithm_seed(cfg, spec.algorithm());
    let canceller: Box<dyn Canceller> = match spec {
        CancellerSpec::None => Box::new(PassThrough),
        CancellerSpec::WhLms { mu } => Box::new(BasisLms::wh_lms(*mu)?),
        CancellerSpec::WhRlsOrth { mu, training_symbols } => {
            let mut window = RegressorWindow::default();
            let regressors: Vec<Vec<Complex64>> = streams.tx[..*training_symbols]
                .iter()
                .map(|&x| {
                    window.push(x);
                    apply_basis(&window, &BasisMatrix::identity())
                })
                .collect();
            let whitener = wh_rls_orth_prepare(&regressors)?;
            log.push(format!(
                "whitener from {training_symbols} regressors, {} clamped directions",
                whitener.clamped_directions()
            ));
            Box::new(crate::adaptive::WhRlsOrth::new(whitener, *mu)?)
        }
        CancellerSpec::WihLms { mu, nominal_power_dbm } => {
            let p = nominal_power_dbm.unwrap_or(cfg.power.tx_dbm);
            log.push(format!("Ito-Hermite basis for nominal power {p} dBm"));
            Box::new(wih_lms_make(dbm_to_watts(p), *mu)?)
        }
        CancellerSpec::AopLms {
            mu,
            moment_window,
            moment_source,
        } => {
            let source = match moment_source {
                MomentSourceSetting::Lookahead => MomentSource::Lookahead,
                MomentSourceSetting::Buffered => MomentSource::Buffered,
            };
            Box::new(AopLms::new(*mu, *moment_window, source)?)
        }
        CancellerSpec::Klms {
            mu,
            bandwidth,
            bandwidth_windows,
        } => {
            let h = match bandwidth {
                Some(h) => *h,
                None => median_bandwidth(first_segment(cfg, &streams.tx), *bandwidth_windows, seed)?,
            };
            log.push(format!("kernel bandwidth {h}"));
            Box::new(KernelLms::new(h, *mu)?)
        }
        CancellerSpec::RfkLms {
            mu,
            features,
            bandwidth,
            bandwidth_windows,
        } => {
            let h = match bandwidth {
                Some(h) => *h,
                None => median_bandwidth(first_segment(cfg, &streams.tx), *bandwidth_windows, seed)?,
            };
            log.push(format!("kernel bandwidth {h}, {features} random features"));
            let map = RandomFeatureMap::new(2 * REGRESSOR_LEN, *features, h, derive_seed(seed, 1))?;
            Box::new(RfkLms::new(map, *mu)?)
        }
        CancellerSpec::Dnn {
            epochs,
            training_symbols,
            batch_size,
            weights_file,
        } => {
            let (model, trained) = obtain_network(weights_file, MlpVariant::Static, log, || {
                let data = training.get()?;
                let n = *training_symbols;
                let set = static_dataset(&data.tx[..n], &data.frame.rx[..n])?;
                let mut tc = TrainConfig::new(cfg.scaled_epochs(*epochs), seed);
                tc.batch_size = *batch_size;
                train_mlp(&set, &tc)
            })?;
            let keep = trained.then(|| model.clone());
            return Ok((Box::new(StaticDnnCanceller::new(model)?), keep));
        }
        CancellerSpec::AdaptiveDnn {
            epochs,
            estimator_mu,
            batch_size,
            weights_file,
        } => {
            let (model, trained) = obtain_network(weights_file, MlpVariant::Adaptive, log, || {
                let data = training.get()?;
                let set = adaptive_dataset(&data.tx, &data.frame.rx, *estimator_mu)?;
                let mut tc = TrainConfig::new(cfg.scaled_epochs(*epochs), seed);
                tc.batch_size = *batch_size;
                train_mlp(&set, &tc)
            })?;
            let keep = trained.then(|| model.clone());
            return Ok((Box::new(AdaptiveDnnCanceller::new(model, *estimator_mu)?), keep));
        }
    };
    Ok((canceller, None))
}

/// Runs every configured canceller on the same streams.
///
/// A canceller that fails to build aborts the run; a numeric fault during
/// streaming only truncates that canceller's trace.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut log = vec!["resolved configuration:".to_string()];
    log.extend(cfg.to_toml().lines().map(|l| format!("  {l}")));
    let streams = synthesize(cfg, cfg.seeds.signal, cfg.seeds.noise)?;
    let mut training = TrainingData { cfg, streams: None };
    let mut runs = Vec::with_capacity(cfg.cancellers.len());
    for spec in &cfg.cancellers {
        let algorithm = spec.algorithm();
        let elapsed = stopwatch();
        let mut notes = Vec::new();
        let (mut canceller, trained) = build(spec, cfg, &streams, &mut training, &mut notes)?;
        let mut run = run_canceller(canceller.as_mut(), &streams, cfg);
        run.trained = trained;
        run.seconds = elapsed();
        log.extend(notes.into_iter().map(|n| format!("{algorithm}: {n}")));
        log.extend(run.warnings.iter().map(|w| format!("{algorithm}: warning: {w}")));
        if let Some(f) = &run.fault {
            log.push(format!("{algorithm}: fault after {} samples: {f}", run.residual.len()));
        }
        runs.push(run);
    }
    Ok(RunReport {
        config: cfg.clone(),
        runs,
        log,
    })
}
