//! Browser demo bindings. The plain functions hold the logic and are tested
//! natively; the `#[wasm_bindgen]` wrappers flatten results for JavaScript.

use sic_core::basis::{estimate_moments, gram_schmidt, ihp_matrix, BasisMatrix};
use sic_core::harness::config::ChannelSection;
use sic_core::harness::{run_scenario, CancellerSpec, ScenarioConfig, Seeds};
use sic_core::si_channel::{complex_noise, pa_apply, PaConfig};
use sic_core::signal_gen::{generate, ModulationSpec};
use sic_core::{dbm_to_watts, Algorithm, Complex64, NUM_BRANCHES, REGRESSOR_LEN};
use wasm_bindgen::prelude::*;

/// Cancellers fast enough to run interactively.
pub const DEMO_ALGORITHMS: [Algorithm; 6] = [
    Algorithm::WhLms,
    Algorithm::WhRlsOrth,
    Algorithm::WihLms,
    Algorithm::AopLms,
    Algorithm::Klms,
    Algorithm::RfkLms,
];

/// Smoothed residual traces (dBm) of the demo cancellers on a reference-like
/// scenario: `segment_symbols` OFDM then as many single-carrier symbols of
/// `sc_qam_order`, a new channel every `segment_symbols / 2`.
pub fn comparison_traces(
    seed: u64,
    segment_symbols: usize,
    sc_qam_order: u32,
) -> Result<Vec<(Algorithm, Vec<f64>)>, String> {
    let mut cfg = ScenarioConfig::reference();
    cfg.seeds = Seeds::from_base(seed);
    cfg.segments[0].symbols = segment_symbols;
    cfg.segments[1].symbols = segment_symbols;
    cfg.segments[1].modulation = ModulationSpec::single_carrier(sc_qam_order);
    cfg.channel = ChannelSection {
        change_interval: (segment_symbols / 2).max(1),
        taps: cfg.channel.taps,
    };
    // Whitening trains on the first channel epoch, as in the reference run,
    // but never on fewer regressors than it needs.
    let training = cfg.channel.change_interval.max(10 * NUM_BRANCHES * REGRESSOR_LEN);
    cfg.cancellers = DEMO_ALGORITHMS
        .iter()
        .map(|&a| match CancellerSpec::default_for(a) {
            CancellerSpec::WhRlsOrth { mu, .. } => CancellerSpec::WhRlsOrth {
                mu,
                training_symbols: training,
            },
            spec => spec,
        })
        .collect();
    cfg.validate().map_err(|e| e.to_string())?;
    let report = run_scenario(&cfg).map_err(|e| e.to_string())?;
    Ok(report.runs.into_iter().map(|r| (r.algorithm, r.smoothed_dbm)).collect())
}

fn waveform(name: &str, n: usize, seed: u64) -> Result<Vec<Complex64>, String> {
    let spec = match name {
        "gaussian" => return Ok(complex_noise(n, 20.0, seed)),
        "ofdm" => ModulationSpec::ofdm(16),
        "qam1024" => ModulationSpec::single_carrier(1024),
        "qam16" => ModulationSpec::single_carrier(16),
        other => return Err(format!("unknown waveform '{other}'")),
    };
    generate(&spec, n, 20.0, seed)
        .map(|s| s.samples)
        .map_err(|e| e.to_string())
}

/// Normalized branch correlation magnitudes `|E[b_i conj b_j]| / sqrt(E|b_i|² E|b_j|²)`,
/// row-major 3×3, for one basis under one waveform.
pub fn branch_correlation(waveform_name: &str, basis: &str, samples: usize, seed: u64) -> Result<[f64; 9], String> {
    let x = waveform(waveform_name, samples.max(1000), seed)?;
    let b = match basis {
        "hp" => BasisMatrix::identity(),
        "ihp" => ihp_matrix(dbm_to_watts(20.0)).map_err(|e| e.to_string())?,
        "aop" => {
            let m = estimate_moments(&x[..1000]).map_err(|e| e.to_string())?;
            gram_schmidt(&m).map_err(|e| e.to_string())?
        }
        other => return Err(format!("unknown basis '{other}'")),
    };
    let mut g = [[Complex64::default(); 3]; 3];
    for s in &x {
        let v = b.branches(*s);
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += v[i] * v[j].conj();
            }
        }
    }
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = g[i][j].norm() / (g[i][i].re * g[j][j].re).sqrt();
        }
    }
    Ok(out)
}

/// Static AM/AM and AM/PM of the default PA: for each drive amplitude in
/// `(0, max_amplitude]`, the output amplitude and phase shift in degrees.
pub fn pa_curves(points: usize, max_amplitude: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pa = PaConfig::default();
    let mut amp_in = Vec::with_capacity(points);
    let mut amp_out = Vec::with_capacity(points);
    let mut phase = Vec::with_capacity(points);
    for k in 1..=points {
        let a = max_amplitude * k as f64 / points as f64;
        // A held constant input reaches steady state after the memory depth.
        let y = pa_apply(&vec![Complex64::new(a, 0.0); pa.memory_depth], &pa);
        let out = y[pa.memory_depth - 1];
        amp_in.push(a);
        amp_out.push(out.norm());
        phase.push(out.arg().to_degrees());
    }
    (amp_in, amp_out, phase)
}

/// Comma-separated ids of the traces returned by [`compare`].
#[wasm_bindgen]
pub fn compare_algorithms() -> String {
    DEMO_ALGORITHMS.iter().map(|a| a.id()).collect::<Vec<_>>().join(",")
}

/// Concatenated traces, `2 * segment_symbols` values per algorithm in
/// [`compare_algorithms`] order.
#[wasm_bindgen]
pub fn compare(seed: u32, segment_symbols: u32, sc_qam_order: u32) -> Result<Vec<f64>, JsError> {
    let traces =
        comparison_traces(seed as u64, segment_symbols as usize, sc_qam_order).map_err(|e| JsError::new(&e))?;
    Ok(traces.into_iter().flat_map(|(_, t)| t).collect())
}

#[wasm_bindgen]
pub fn correlation(waveform_name: &str, basis: &str, samples: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    branch_correlation(waveform_name, basis, samples as usize, seed as u64)
        .map(|c| c.to_vec())
        .map_err(|e| JsError::new(&e))
}

/// `[amp_in..., amp_out..., phase_deg...]`.
#[wasm_bindgen]
pub fn pa_response(points: u32, max_amplitude: f64) -> Vec<f64> {
    let (a, b, c) = pa_curves(points as usize, max_amplitude);
    a.into_iter().chain(b).chain(c).collect()
}
