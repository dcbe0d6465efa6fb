//! Single-hidden-layer MLP cancellers trained offline with Adam.
//!
//! The static network maps the 42-real transmit window to the received sample.
//! The adaptive network also sees the 21 complex taps of a linear NLMS channel
//! estimate running alongside it (84 inputs); its weights are frozen at run
//! time and only the estimate moves.
//!
//! Inputs and targets are standardized with scales fixed from the training
//! data and stored with the weights.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Uniform;

use crate::adaptive::{LmsFilter, StepSize};
use crate::basis::RegressorWindow;
use crate::canceller::{check_finite, Algorithm, Canceller, DistributionChange, StepResult};
use crate::error::{Result, SicError};
use crate::rng::seeded;
use crate::{Complex64, REGRESSOR_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlpVariant {
    /// 42-200-2.
    Static,
    /// 84-300-2.
    Adaptive,
}

impl MlpVariant {
    pub fn sizes(self) -> (usize, usize, usize) {
        match self {
            MlpVariant::Static => (2 * REGRESSOR_LEN, 200, 2),
            MlpVariant::Adaptive => (4 * REGRESSOR_LEN, 300, 2),
        }
    }

    fn name(self) -> &'static str {
        match self {
            MlpVariant::Static => "static",
            MlpVariant::Adaptive => "adaptive",
        }
    }
}

impl FromStr for MlpVariant {
    type Err = SicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(MlpVariant::Static),
            "adaptive" => Ok(MlpVariant::Adaptive),
            other => Err(SicError::Config(format!("unknown network variant '{other}'"))),
        }
    }
}

/// `y = W2 relu(W1 x + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpParams {
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        MlpParams {
            w1: Array2::zeros((hidden, inputs)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((outputs, hidden)),
            b2: Array1::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut layer = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            Array2::from_shape_simple_fn((rows, cols), || rng.sample(dist))
        };
        let w1 = layer(hidden, inputs);
        let w2 = layer(outputs, hidden);
        MlpParams {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(outputs),
        }
    }

    /// `(inputs, hidden, outputs)`.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.w1.ncols(), self.w1.nrows(), self.w2.nrows())
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn zeros_like(&self) -> Self {
        let (i, h, o) = self.sizes();
        Self::zeros(i, h, o)
    }

    fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        let (inputs, ..) = self.sizes();
        if len == inputs {
            Ok(())
        } else {
            Err(SicError::Config(format!("network expects {inputs} inputs, got {len}")))
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let mut out = self.b2.to_vec();
        for (j, (row, b)) in self.w1.outer_iter().zip(&self.b1).enumerate() {
            let pre: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
            if pre > 0.0 {
                for (o, w2row) in out.iter_mut().zip(self.w2.outer_iter()) {
                    *o += w2row[j] * pre;
                }
            }
        }
        Ok(out)
    }

    /// Gradient of `0.5 * ||y - target||²` for one sample.
    pub fn backward(&self, x: &[f64], target: &[f64]) -> Result<MlpParams> {
        self.check_input(x.len())?;
        let xs = ArrayView2::from_shape((1, x.len()), x).map_err(|e| SicError::Config(e.to_string()))?;
        let ts = ArrayView2::from_shape((1, target.len()), target).map_err(|e| SicError::Config(e.to_string()))?;
        Ok(self.batch_gradient(xs, ts)?.0)
    }

    /// Mean over rows of the per-sample loss and its gradient.
    pub fn batch_gradient(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(MlpParams, f64)> {
        self.check_input(x.ncols())?;
        let (_, _, outputs) = self.sizes();
        if target.ncols() != outputs || target.nrows() != x.nrows() {
            return Err(SicError::Config(format!(
                "targets have shape {:?}, expected ({}, {outputs})",
                target.dim(),
                x.nrows()
            )));
        }
        let batch = x.nrows() as f64;
        let mut pre = x.dot(&self.w1.t());
        pre += &self.b1;
        let act = pre.mapv(|v| v.max(0.0));
        let mut y = act.dot(&self.w2.t());
        y += &self.b2;
        let diff = &y - &target;
        let loss = 0.5 * diff.iter().map(|v| v * v).sum::<f64>() / batch;
        let dy = diff / batch;
        let w2 = dy.t().dot(&act);
        let b2 = dy.sum_axis(Axis(0));
        let mut dh = dy.dot(&self.w2);
        dh.zip_mut_with(&pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = dh.t().dot(&x);
        let b1 = dh.sum_axis(Axis(0));
        Ok((
            MlpParams {
                w1: w1.as_standard_layout().into_owned(),
                b1,
                w2: w2.as_standard_layout().into_owned(),
                b2,
            },
            loss,
        ))
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    m: MlpParams,
    v: MlpParams,
    t: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(like: &MlpParams) -> Self {
        Adam {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, params: &mut MlpParams, grad: &MlpParams) {
        assert_eq!(params.sizes(), grad.sizes(), "gradient shape mismatch");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, alpha, eps) = (self.beta1, self.beta2, self.alpha, self.eps);
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grad.tensors()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 64,
            seed,
        }
    }
}

/// Mini-batch Adam with a seeded shuffle per epoch. Returns the mean training
/// loss of every epoch.
pub fn train(
    params: &mut MlpParams,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(SicError::Config("training set is empty".into()));
    }
    if targets.nrows() != n {
        return Err(SicError::Config(format!("{n} inputs but {} targets", targets.nrows())));
    }
    if cfg.batch_size == 0 {
        return Err(SicError::Config("batch size must be positive".into()));
    }
    let mut adam = Adam::new(params);
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let (inputs_len, _, outputs) = params.sizes();
    let mut xb = Array2::<f64>::zeros((cfg.batch_size, inputs_len));
    let mut tb = Array2::<f64>::zeros((cfg.batch_size, outputs));
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let rows = chunk.len();
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r).assign(&inputs.row(i));
                tb.row_mut(r).assign(&targets.row(i));
            }
            let (grad, loss) = params.batch_gradient(xb.slice(s![..rows, ..]), tb.slice(s![..rows, ..]))?;
            adam.update(params, &grad);
            total += loss * rows as f64;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(SicError::NumericFault {
                step: epoch,
                reason: "training loss is not finite".into(),
            });
        }
        losses.push(mean);
    }
    Ok(losses)
}

/// Fixed standardization: network sees `x * x`, `h * h_est`, and predicts `d * y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaling {
    pub x: f64,
    pub h: f64,
    pub y: f64,
}

fn inverse_rms(values: impl Iterator<Item = f64>) -> Result<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    let rms = (sum / count.max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        Ok(rms.recip())
    } else {
        Err(SicError::DegenerateInput("training signal has zero power".into()))
    }
}

/// Raw (unscaled) training pairs.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub variant: MlpVariant,
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn scaling(&self) -> Result<Scaling> {
        let half = 2 * REGRESSOR_LEN;
        let x = inverse_rms(self.inputs.slice(s![.., ..half]).iter().copied())?;
        let h = match self.variant {
            MlpVariant::Static => 1.0,
            MlpVariant::Adaptive => inverse_rms(self.inputs.slice(s![.., half..]).iter().copied())?,
        };
        let y = inverse_rms(self.targets.iter().copied())?;
        Ok(Scaling { x, h, y })
    }

    fn scaled(&self, sc: &Scaling) -> (Array2<f64>, Array2<f64>) {
        let half = 2 * REGRESSOR_LEN;
        let mut inputs = self.inputs.clone();
        inputs.slice_mut(s![.., ..half]).mapv_inplace(|v| v * sc.x);
        if self.variant == MlpVariant::Adaptive {
            inputs.slice_mut(s![.., half..]).mapv_inplace(|v| v * sc.h);
        }
        (inputs, self.targets.mapv(|v| v * sc.y))
    }
}

/// One row per sample: the window ending at that sample and the received sample.
pub fn static_dataset(tx: &[Complex64], d: &[Complex64]) -> Result<Dataset> {
    check_stream(tx, d)?;
    let mut window = RegressorWindow::default();
    let mut inputs = Array2::zeros((tx.len(), 2 * REGRESSOR_LEN));
    let mut targets = Array2::zeros((tx.len(), 2));
    let mut buf = Vec::with_capacity(2 * REGRESSOR_LEN);
    for (n, (x, y)) in tx.iter().zip(d).enumerate() {
        window.push(*x);
        window.write_real(&mut buf);
        inputs.row_mut(n).assign(&Array1::from_vec(buf.clone()));
        targets[[n, 0]] = y.re;
        targets[[n, 1]] = y.im;
    }
    Ok(Dataset {
        variant: MlpVariant::Static,
        inputs,
        targets,
    })
}

/// Like [`static_dataset`] plus the companion channel estimate seen at each
/// sample (taken before that sample's estimator update).
pub fn adaptive_dataset(tx: &[Complex64], d: &[Complex64], estimator_mu: f64) -> Result<Dataset> {
    check_stream(tx, d)?;
    let mut est = ChannelEstimator::new(estimator_mu)?;
    let mut inputs = Array2::zeros((tx.len(), 4 * REGRESSOR_LEN));
    let mut targets = Array2::zeros((tx.len(), 2));
    let mut buf = Vec::with_capacity(4 * REGRESSOR_LEN);
    for (n, (x, y)) in tx.iter().zip(d).enumerate() {
        est.input(*x, &mut buf);
        inputs.row_mut(n).assign(&Array1::from_vec(buf.clone()));
        est.update(*y, n)?;
        targets[[n, 0]] = y.re;
        targets[[n, 1]] = y.im;
    }
    Ok(Dataset {
        variant: MlpVariant::Adaptive,
        inputs,
        targets,
    })
}

fn check_stream(tx: &[Complex64], d: &[Complex64]) -> Result<()> {
    if tx.is_empty() {
        return Err(SicError::Config("training set is empty".into()));
    }
    if tx.len() != d.len() {
        return Err(SicError::Config(format!(
            "{} transmit but {} received samples",
            tx.len(),
            d.len()
        )));
    }
    Ok(())
}

/// Linear NLMS over the 21-tap window; its weights are the channel estimate.
#[derive(Clone, Debug)]
pub struct ChannelEstimator {
    window: RegressorWindow,
    filter: LmsFilter,
}

impl ChannelEstimator {
    pub fn new(mu: f64) -> Result<Self> {
        Ok(ChannelEstimator {
            window: RegressorWindow::default(),
            filter: LmsFilter::new(REGRESSOR_LEN, StepSize::Normalized(mu))?,
        })
    }

    pub fn estimate(&self) -> &[Complex64] {
        self.filter.weights()
    }

    /// Shifts in `tx` and writes `[window re, window im, h re, h im]` (unscaled).
    fn input(&mut self, tx: Complex64, out: &mut Vec<f64>) {
        self.window.push(tx);
        self.window.write_real(out);
        out.extend(self.filter.weights().iter().map(|h| h.re));
        out.extend(self.filter.weights().iter().map(|h| h.im));
    }

    fn update(&mut self, d: Complex64, _step: usize) -> Result<()> {
        self.filter.step(self.window.taps(), d).map(|_| ())
    }
}

/// Trained network with its standardization, as saved to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedMlp {
    pub variant: MlpVariant,
    pub params: MlpParams,
    pub scaling: Scaling,
    pub seed: u64,
}

/// Initializes and trains a network of the dataset's variant.
pub fn train_mlp(data: &Dataset, cfg: &TrainConfig) -> Result<(TrainedMlp, Vec<f64>)> {
    if data.is_empty() {
        return Err(SicError::Config("training set is empty".into()));
    }
    let scaling = data.scaling()?;
    let (inputs, targets) = data.scaled(&scaling);
    let (i, h, o) = data.variant.sizes();
    let mut params = MlpParams::glorot(i, h, o, cfg.seed);
    let losses = train(&mut params, &inputs, &targets, cfg)?;
    Ok((
        TrainedMlp {
            variant: data.variant,
            params,
            scaling,
            seed: cfg.seed,
        },
        losses,
    ))
}

const FORMAT_TAG: &str = "sic-mlp 1";

impl TrainedMlp {
    /// Text record: a header, then each of `w1 b1 w2 b2` as a label line
    /// followed by one line per row (row-major), values in shortest
    /// round-trip decimal.
    pub fn to_text(&self) -> String {
        let (i, h, o) = self.params.sizes();
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(out, "variant {}", self.variant.name());
        let _ = writeln!(out, "sizes {i} {h} {o}");
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "scaling {} {} {}", self.scaling.x, self.scaling.h, self.scaling.y);
        let mut matrix = |name: &str, rows: usize, cols: usize, data: &[f64]| {
            let _ = writeln!(out, "{name}");
            for r in 0..rows {
                let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        };
        let [w1, b1, w2, b2] = self.params.tensors();
        matrix("w1", h, i, w1);
        matrix("b1", 1, h, b1);
        matrix("w2", o, h, w2);
        matrix("b2", 1, o, b2);
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let err = |message: String| SicError::Parse {
            path: origin.into(),
            message,
        };
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(n, l)| (n + 1, l.trim()))
                .ok_or_else(|| err(format!("unexpected end of file, expected {what}")))
        };
        let (n, tag) = next("format tag")?;
        if tag != FORMAT_TAG {
            return Err(err(format!("line {n}: expected '{FORMAT_TAG}'")));
        }
        let field = |line: (usize, &str), key: &str| -> Result<Vec<String>> {
            let mut parts = line.1.split_whitespace();
            if parts.next() != Some(key) {
                return Err(err(format!("line {}: expected '{key}'", line.0)));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |n: usize, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| err(format!("line {n}: bad number '{s}': {e}")))
        };
        let variant_line = next("variant")?;
        let variant: MlpVariant = field(variant_line, "variant")?
            .first()
            .ok_or_else(|| err("missing variant".into()))?
            .parse()?;
        let sizes_line = next("sizes")?;
        let sizes: Vec<usize> = field(sizes_line, "sizes")?
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| err(format!("line {}: {e}", sizes_line.0)))
            })
            .collect::<Result<_>>()?;
        if sizes.len() != 3 || (sizes[0], sizes[1], sizes[2]) != variant.sizes() {
            return Err(err(format!(
                "sizes {sizes:?} do not match the {} variant",
                variant.name()
            )));
        }
        let seed_line = next("seed")?;
        let seed = field(seed_line, "seed")?
            .first()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| err(format!("line {}: bad seed", seed_line.0)))?;
        let scaling_line = next("scaling")?;
        let sc = field(scaling_line, "scaling")?
            .iter()
            .map(|s| num(scaling_line.0, s))
            .collect::<Result<Vec<_>>>()?;
        if sc.len() != 3 {
            return Err(err(format!("line {}: expected three scaling values", scaling_line.0)));
        }
        let (i, h, o) = variant.sizes();
        let mut params = MlpParams::zeros(i, h, o);
        for (name, (rows, cols), dest) in [("w1", (h, i)), ("b1", (1, h)), ("w2", (o, h)), ("b2", (1, o))]
            .into_iter()
            .zip(params.tensors_mut())
            .map(|((a, b), c)| (a, b, c))
        {
            let label = next(name)?;
            if label.1 != name {
                return Err(err(format!("line {}: expected '{name}'", label.0)));
            }
            for r in 0..rows {
                let (n, line) = next(name)?;
                let values: Vec<f64> = line.split_whitespace().map(|s| num(n, s)).collect::<Result<_>>()?;
                if values.len() != cols {
                    return Err(err(format!("line {n}: expected {cols} values, got {}", values.len())));
                }
                dest[r * cols..(r + 1) * cols].copy_from_slice(&values);
            }
        }
        Ok(TrainedMlp {
            variant,
            params,
            scaling: Scaling {
                x: sc[0],
                h: sc[1],
                y: sc[2],
            },
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| SicError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SicError::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    fn predict(&self, input: &[f64]) -> Result<Complex64> {
        let out = self.params.forward(input)?;
        Ok(Complex64::new(out[0], out[1]) / self.scaling.y)
    }
}

/// Static DNN: weights trained once on the first channel epoch.
#[derive(Clone, Debug)]
pub struct StaticDnnCanceller {
    model: TrainedMlp,
    window: RegressorWindow,
    input: Vec<f64>,
    steps: usize,
}

impl StaticDnnCanceller {
    pub fn new(model: TrainedMlp) -> Result<Self> {
        if model.variant != MlpVariant::Static {
            return Err(SicError::Config("static canceller needs a static network".into()));
        }
        Ok(StaticDnnCanceller {
            model,
            window: RegressorWindow::default(),
            input: Vec::with_capacity(2 * REGRESSOR_LEN),
            steps: 0,
        })
    }

    pub fn model(&self) -> &TrainedMlp {
        &self.model
    }
}

impl Canceller for StaticDnnCanceller {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Dnn
    }

    fn step(&mut self, tx: Complex64, d: Complex64, _change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        check_finite(self.steps, &[tx, d])?;
        self.steps += 1;
        self.window.push(tx);
        self.window.write_real(&mut self.input);
        let sx = self.model.scaling.x;
        self.input.iter_mut().for_each(|v| *v *= sx);
        Ok(StepResult::new(d, self.model.predict(&self.input)?))
    }

    fn param_count(&self) -> usize {
        self.model.params.param_count()
    }
}

/// Adaptive DNN: frozen network fed the window and a running channel estimate.
#[derive(Clone, Debug)]
pub struct AdaptiveDnnCanceller {
    model: TrainedMlp,
    estimator: ChannelEstimator,
    input: Vec<f64>,
    steps: usize,
}

impl AdaptiveDnnCanceller {
    pub fn new(model: TrainedMlp, estimator_mu: f64) -> Result<Self> {
        if model.variant != MlpVariant::Adaptive {
            return Err(SicError::Config("adaptive canceller needs an adaptive network".into()));
        }
        Ok(AdaptiveDnnCanceller {
            model,
            estimator: ChannelEstimator::new(estimator_mu)?,
            input: Vec::with_capacity(4 * REGRESSOR_LEN),
            steps: 0,
        })
    }

    pub fn model(&self) -> &TrainedMlp {
        &self.model
    }

    pub fn channel_estimate(&self) -> &[Complex64] {
        self.estimator.estimate()
    }
}

impl Canceller for AdaptiveDnnCanceller {
    fn algorithm(&self) -> Algorithm {
        Algorithm::AdaptiveDnn
    }

    fn step(&mut self, tx: Complex64, d: Complex64, _change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        let index = self.steps;
        check_finite(index, &[tx, d])?;
        self.steps += 1;
        self.estimator.input(tx, &mut self.input);
        let half = 2 * REGRESSOR_LEN;
        let Scaling { x, h, .. } = self.model.scaling;
        self.input[..half].iter_mut().for_each(|v| *v *= x);
        self.input[half..].iter_mut().for_each(|v| *v *= h);
        let result = StepResult::new(d, self.model.predict(&self.input)?);
        self.estimator.update(d, index)?;
        Ok(result)
    }

    fn param_count(&self) -> usize {
        self.model.params.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::si_channel::complex_noise;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g
            })
            .collect()
    }

    fn loss(p: &MlpParams, x: &[f64], t: &[f64]) -> f64 {
        let y = p.forward(x).unwrap();
        0.5 * y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    #[test]
    fn parameter_counts() {
        let (i, h, o) = MlpVariant::Static.sizes();
        assert_eq!(MlpParams::zeros(i, h, o).param_count(), 9002);
        let (i, h, o) = MlpVariant::Adaptive.sizes();
        assert_eq!(i, 84);
        assert_eq!(MlpParams::zeros(i, h, o).param_count(), 26102);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::zeros(42, 200, 2);
        assert_eq!(p.forward(&gaussian_vec(42, 1)).unwrap(), vec![0.0, 0.0]);
        assert!(p.forward(&[0.0; 41]).is_err());
    }

    #[test]
    fn forward_matches_batch_path() {
        let p = MlpParams::glorot(42, 200, 2, 3);
        let x = gaussian_vec(42, 4);
        let y = p.forward(&x).unwrap();
        let xs = ArrayView2::from_shape((1, 42), &x).unwrap();
        let t = Array2::zeros((1, 2));
        let (_, l) = p.batch_gradient(xs, t.view()).unwrap();
        assert!((l - 0.5 * (y[0] * y[0] + y[1] * y[1])).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (variant, seed) in [(MlpVariant::Static, 10u64), (MlpVariant::Adaptive, 20)] {
            let (i, h, o) = variant.sizes();
            let mut p = MlpParams::glorot(i, h, o, seed);
            p.b1.iter_mut()
                .zip(gaussian_vec(h, seed + 1))
                .for_each(|(b, g)| *b = 0.1 * g);
            p.b2.iter_mut()
                .zip(gaussian_vec(o, seed + 2))
                .for_each(|(b, g)| *b = 0.1 * g);
            let x = gaussian_vec(i, seed + 3);
            let t = gaussian_vec(o, seed + 4);
            let grad = p.backward(&x, &t).unwrap();
            let mut rng = seeded(seed + 5);
            let step = 1e-5;
            for layer in 0..4 {
                let len = p.tensors()[layer].len();
                for _ in 0..10 {
                    let k = rng.random_range(0..len);
                    let mut plus = p.clone();
                    plus.tensors_mut()[layer][k] += step;
                    let mut minus = p.clone();
                    minus.tensors_mut()[layer][k] -= step;
                    let fd = (loss(&plus, &x, &t) - loss(&minus, &x, &t)) / (2.0 * step);
                    let an = grad.tensors()[layer][k];
                    let scale = an.abs().max(fd.abs());
                    if scale < 1e-10 {
                        continue;
                    }
                    let rel = (an - fd).abs() / scale;
                    assert!(rel < 1e-4, "layer {layer} coord {k}: analytic {an} fd {fd}");
                }
            }
        }
    }

    #[test]
    fn exact_prediction_has_zero_gradient() {
        let p = MlpParams::glorot(42, 200, 2, 5);
        let x = gaussian_vec(42, 6);
        let y = p.forward(&x).unwrap();
        let g = p.backward(&x, &y).unwrap();
        // Zero up to the rounding difference between the two evaluation paths.
        assert!(g.tensors().iter().all(|t| t.iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn zero_input_gradient_structure() {
        let mut p = MlpParams::glorot(42, 200, 2, 7);
        p.b1.iter_mut().zip(gaussian_vec(200, 8)).for_each(|(b, g)| *b = g);
        p.b2[0] = 0.7;
        let g = p.backward(&[0.0; 42], &[0.0, 0.0]).unwrap();
        assert!(g.w1.iter().all(|v| *v == 0.0));
        assert!(g.b2.iter().any(|v| *v != 0.0));
        assert!(g.b1.iter().any(|v| *v != 0.0));
        // W2 gradient lives only on hidden units that relu(b1) keeps alive.
        for (j, b) in p.b1.iter().enumerate() {
            if *b <= 0.0 {
                assert_eq!(g.w2[[0, j]], 0.0);
            }
        }
        assert!(g.w2.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn adam_with_zero_gradient_is_still() {
        let mut p = MlpParams::glorot(4, 3, 2, 1);
        let start = p.clone();
        let zero = p.zeros_like();
        let mut adam = Adam::new(&p);
        for _ in 0..20 {
            adam.update(&mut p, &zero);
            assert_eq!(p, start);
        }
    }

    #[test]
    fn adam_first_step_has_unit_scale() {
        for c in [1e-6, 0.3, -50.0] {
            let mut p = MlpParams::zeros(3, 2, 1);
            let mut g = p.zeros_like();
            g.tensors_mut()
                .into_iter()
                .for_each(|t| t.iter_mut().for_each(|v| *v = c));
            let mut adam = Adam::new(&p);
            adam.update(&mut p, &g);
            for t in p.tensors() {
                for v in t {
                    // m_hat = c, v_hat = c², step = alpha * c / (|c| + eps)
                    let expect = -1e-3 * c / (c.abs() + 1e-8);
                    assert!((v - expect).abs() < 1e-15);
                }
            }
        }
    }

    fn toy_data(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let x = Array2::from_shape_vec((n, 4), gaussian_vec(4 * n, seed)).unwrap();
        let t = Array2::from_shape_fn((n, 2), |(r, c)| (x[[r, c]] * x[[r, 2]]).tanh() + 0.5 * x[[r, 3]]);
        (x, t)
    }

    #[test]
    fn training_is_deterministic() {
        let (x, t) = toy_data(200, 1);
        let cfg = TrainConfig::new(5, 9);
        let mut a = MlpParams::glorot(4, 16, 2, 2);
        let mut b = a.clone();
        let la = train(&mut a, &x, &t, &cfg).unwrap();
        let lb = train(&mut b, &x, &t, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (x, t) = toy_data(50, 1);
        let mut p = MlpParams::glorot(4, 8, 2, 3);
        let start = p.clone();
        assert!(train(&mut p, &x, &t, &TrainConfig::new(0, 1)).unwrap().is_empty());
        assert_eq!(p, start);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let mut p = MlpParams::glorot(4, 8, 2, 3);
        let x = Array2::zeros((0, 4));
        let t = Array2::zeros((0, 2));
        assert!(matches!(
            train(&mut p, &x, &t, &TrainConfig::new(3, 1)),
            Err(SicError::Config(_))
        ));
        assert!(static_dataset(&[], &[]).is_err());
    }

    #[test]
    fn training_loss_decreases_in_blocks() {
        let (x, t) = toy_data(256, 4);
        let mut p = MlpParams::glorot(4, 32, 2, 5);
        let losses = train(&mut p, &x, &t, &TrainConfig::new(400, 6)).unwrap();
        let blocks: Vec<f64> = losses[100..]
            .chunks(100)
            .map(|c| c.iter().sum::<f64>() / 100.0)
            .collect();
        for w in blocks.windows(2) {
            assert!(w[1] <= w[0], "block means {blocks:?}");
        }
        assert!(losses[399] < 0.5 * losses[0]);
    }

    #[test]
    fn serialization_round_trips() {
        let tx = complex_noise(300, 20.0, 1);
        let d: Vec<Complex64> = tx.iter().map(|x| x * 1e-3).collect();
        let data = adaptive_dataset(&tx, &d, 0.5).unwrap();
        let (model, _) = train_mlp(&data, &TrainConfig::new(1, 2)).unwrap();
        let text = model.to_text();
        let back = TrainedMlp::from_text(&text, "mem").unwrap();
        assert_eq!(back, model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.params");
        model.save(&path).unwrap();
        assert_eq!(TrainedMlp::load(&path).unwrap(), model);
        let broken = text.replace("sizes 84 300 2", "sizes 84 301 2");
        assert!(matches!(
            TrainedMlp::from_text(&broken, "mem"),
            Err(SicError::Parse { .. })
        ));
        assert!(TrainedMlp::from_text(&text[..text.len() / 2], "mem").is_err());
    }

    #[test]
    fn adaptive_dataset_lags_estimator_by_one_step() {
        let tx = complex_noise(50, 20.0, 3);
        let d = complex_noise(50, -50.0, 4);
        let data = adaptive_dataset(&tx, &d, 0.5).unwrap();
        assert_eq!(data.inputs.ncols(), 84);
        assert!(data.inputs.row(0).slice(s![42..]).iter().all(|v| *v == 0.0));
        let mut est = ChannelEstimator::new(0.5).unwrap();
        let mut buf = Vec::new();
        for n in 0..10 {
            est.input(tx[n], &mut buf);
            assert_eq!(data.inputs.row(n).to_vec(), buf);
            est.update(d[n], n).unwrap();
        }
    }

    #[test]
    fn adaptive_runtime_leaves_network_frozen() {
        let tx = complex_noise(400, 20.0, 5);
        let d: Vec<Complex64> = tx.iter().map(|x| x * 1e-3).collect();
        let (model, _) = train_mlp(&adaptive_dataset(&tx, &d, 0.5).unwrap(), &TrainConfig::new(2, 1)).unwrap();
        let mut c = AdaptiveDnnCanceller::new(model.clone(), 0.5).unwrap();
        for (x, y) in tx.iter().zip(&d) {
            let r = c.step(*x, *y, None).unwrap();
            assert_eq!(r.e, *y - r.y_hat);
        }
        assert_eq!(c.model(), &model);
        assert!(c.channel_estimate().iter().any(|h| h.norm() > 0.0));
        assert_eq!(c.param_count(), 26102);
        assert!(StaticDnnCanceller::new(model).is_err());
    }

    #[test]
    fn static_network_learns_linear_channel() {
        let tx = complex_noise(2200, 20.0, 11);
        let h = [Complex64::new(1e-3, 2e-4), Complex64::new(-3e-4, 1e-4)];
        let d: Vec<Complex64> = (0..tx.len())
            .map(|n| h[0] * tx[n] + if n > 0 { h[1] * tx[n - 1] } else { Complex64::default() })
            .collect();
        let (model, _) = train_mlp(&static_dataset(&tx, &d).unwrap(), &TrainConfig::new(60, 3)).unwrap();
        let mut c = StaticDnnCanceller::new(model).unwrap();
        let (mut pd, mut pe) = (0.0, 0.0);
        for (x, y) in tx.iter().zip(&d) {
            let r = c.step(*x, *y, None).unwrap();
            pd += y.norm_sqr();
            pe += r.e.norm_sqr();
        }
        assert!(10.0 * (pd / pe).log10() > 10.0);
        assert_eq!(c.param_count(), 9002);
    }
}
