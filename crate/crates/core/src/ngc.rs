//! The neural generative coding (NGC) circuit.
//!
//! A circuit has layers `z^0..z^L`. The top layer `z^L` is clamped to the
//! input pattern and the bottom layer `z^0` to the output pattern. Each layer
//! `z^{ℓ+1}` predicts the post-activation of the layer below through a
//! forward matrix `W^{ℓ+1}` (shape `J_ℓ × J_{ℓ+1}`); the mismatch lives in
//! explicit error units `e^ℓ` and is carried back up through error synapses
//! `E^{ℓ+1}` (shape `J_{ℓ+1} × J_ℓ`).
//!
//! Settling ([`NgcModel::infer`]) relaxes the interior states for `K` steps.
//! Learning ([`NgcModel::compute_weight_deltas`] followed by
//! [`NgcModel::apply_update`]) only uses quantities local to each synapse:
//! the error below and the activity above.
//!
//! Batched calls pack one sample per column. All single-sample entry points
//! are the one-column case of the batched ones.

use crate::optim::{OptimState, ShapeMismatch, UpdateRule};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Numerical stabilizer used by the delta normalization and weight rescaling.
pub const C_EPS: f64 = 1e-6;

/// Synaptic-scaling coefficient for the error-synapse modulation. The
/// forward side uses the configurable [`NgcConfig::gamma_s`].
pub const ERROR_SCALING: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NgcError {
    #[error("invalid circuit configuration: {0}")]
    Config(String),
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },
    #[error("settling diverged at layer {layer}, iteration {iteration}")]
    Divergence { layer: usize, iteration: usize },
    #[error(transparent)]
    Optim(#[from] ShapeMismatch),
}

fn shape_err(what: impl Into<String>, expected: impl fmt::Debug, got: impl fmt::Debug) -> NgcError {
    NgcError::Shape {
        what: what.into(),
        expected: format!("{expected:?}"),
        got: format!("{got:?}"),
    }
}

/// Elementwise state nonlinearity `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Relu6,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Relu6 => v.clamp(0.0, 6.0),
        }
    }

    pub fn map(self, a: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => a.clone(),
            _ => a.mapv(|v| self.apply(v)),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Relu6 => "relu6",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "relu6" => Ok(Activation::Relu6),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// Architecture and coefficients of one circuit.
///
/// `layer_dims[0]` is the clamped output (bottom) width and
/// `layer_dims[L]` the clamped input (top) width. `activations[ℓ]` is `φ^ℓ`.
/// The output nonlinearity `g_ℓ` is always the identity and the lateral
/// term is always zero; `lateral` only exists so configs can state it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgcConfig {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    /// State step size `β = 1/τ`.
    pub beta: f64,
    /// Error scaling; errors carry the prefactor `1/(2β_e)`. The default
    /// `1/√2` makes the Hebbian product exactly the negative gradient of the
    /// total discrepancy; in general it is `2β_e²` times that.
    pub beta_e: f64,
    /// Leak coefficient.
    pub gamma_v: f64,
    /// Error-synapse time scale.
    pub gamma_e: f64,
    pub eta: f64,
    pub k_steps: usize,
    pub gamma_s: f64,
    pub lateral: bool,
    pub modulation: bool,
    pub c_eps: f64,
    pub rescale_target: f64,
    pub update_rule: UpdateRule,
    pub init_std: f64,
}

impl NgcConfig {
    /// A circuit mapping `input_dim` to `output_dim` through `hidden`
    /// (listed from the input side down, as architecture tables usually do).
    /// Clamped layers use the identity; hidden layers use `hidden_act`.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, hidden_act: Activation) -> Self {
        let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
        layer_dims.push(output_dim);
        layer_dims.extend(hidden.iter().rev().copied());
        layer_dims.push(input_dim);
        let mut activations = vec![hidden_act; layer_dims.len()];
        activations[0] = Activation::Identity;
        *activations.last_mut().unwrap() = Activation::Identity;
        Self {
            layer_dims,
            activations,
            beta: 0.1,
            beta_e: std::f64::consts::FRAC_1_SQRT_2,
            gamma_v: 0.01,
            gamma_e: 1.0,
            eta: 1e-3,
            k_steps: 10,
            gamma_s: 2.0,
            lateral: false,
            modulation: true,
            c_eps: C_EPS,
            rescale_target: 2.0,
            update_rule: UpdateRule::Adam,
            init_std: 0.025,
        }
    }

    /// Number of non-clamped-bottom layers, `L`.
    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn output_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// `1/(2β_e)`
    pub fn error_prefactor(&self) -> f64 {
        1.0 / (2.0 * self.beta_e)
    }

    pub fn validate(&self) -> Result<(), NgcError> {
        let bad = |msg: String| Err(NgcError::Config(msg));
        if self.layer_dims.len() < 2 {
            return bad(format!("need at least two layers, got {:?}", self.layer_dims));
        }
        if self.layer_dims.iter().any(|&j| j == 0) {
            return bad(format!("layer widths must be positive: {:?}", self.layer_dims));
        }
        if self.activations.len() != self.layer_dims.len() {
            return bad(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_dims.len()
            ));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.beta_e > 0.0) {
            return bad(format!("beta_e must be positive, got {}", self.beta_e));
        }
        if !(self.gamma_v >= 0.0) {
            return bad(format!("gamma_v must be non-negative, got {}", self.gamma_v));
        }
        if !(self.gamma_e > 0.0 && self.gamma_e <= 1.0) {
            return bad(format!("gamma_e must lie in (0, 1], got {}", self.gamma_e));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.k_steps == 0 {
            return bad("k_steps must be at least 1".into());
        }
        if !(self.gamma_s > 0.0) {
            return bad(format!("gamma_s must be positive, got {}", self.gamma_s));
        }
        if self.lateral {
            return bad("lateral interactions are not supported".into());
        }
        if !(self.c_eps > 0.0) || !(self.rescale_target > 0.0) {
            return bad("c_eps and rescale_target must be positive".into());
        }
        if !(self.init_std >= 0.0) || !self.init_std.is_finite() {
            return bad(format!("init_std must be non-negative, got {}", self.init_std));
        }
        Ok(())
    }
}

/// Latent states, predictions and error units after settling.
///
/// `states[ℓ]` is `J_ℓ × B` for `ℓ = 0..=L`; `errors[ℓ]` and
/// `predictions[ℓ]` are `J_ℓ × B` for `ℓ = 0..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitActivity {
    pub states: Vec<Array2<f64>>,
    pub errors: Vec<Array2<f64>>,
    pub predictions: Vec<Array2<f64>>,
}

impl CircuitActivity {
    pub fn batch_size(&self) -> usize {
        self.states[0].ncols()
    }

    /// `Σ_ℓ ‖e^ℓ‖²` over the whole batch.
    pub fn squared_error_sum(&self) -> f64 {
        self.errors.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// `Σ_ℓ ‖e^ℓ‖²` for each sample (column) separately.
    pub fn squared_error_per_sample(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.batch_size()];
        for e in &self.errors {
            for (b, col) in e.axis_iter(Axis(1)).enumerate() {
                out[b] += col.iter().map(|v| v * v).sum::<f64>();
            }
        }
        out
    }

    /// Column `b` of layer `ℓ`'s state.
    pub fn state(&self, layer: usize, b: usize) -> Array1<f64> {
        self.states[layer].column(b).to_owned()
    }

    pub fn error(&self, layer: usize, b: usize) -> Array1<f64> {
        self.errors[layer].column(b).to_owned()
    }
}

/// Total discrepancy `Σ_ℓ (1/(2β_e))‖e^ℓ‖²`, summed over every sample in the
/// activity.
pub fn total_discrepancy(activity: &CircuitActivity, config: &NgcConfig) -> f64 {
    config.error_prefactor() * activity.squared_error_sum()
}

/// Synaptic-scaling factors for `matrix`.
///
/// Row sums are normalized by their maximum, scaled by `gamma_s` and capped
/// at 1; every entry of row `i` in the result holds that row's factor. When
/// the largest row sum is not above `c_eps` the factors are all ones.
pub fn compute_modulation(matrix: ArrayView2<f64>, gamma_s: f64, c_eps: f64) -> Array2<f64> {
    let row_sums = matrix.sum_axis(Axis(1));
    let max = row_sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > c_eps) {
        return Array2::ones(matrix.dim());
    }
    let factors = row_sums.mapv(|s| (gamma_s * s / max).min(1.0));
    let mut out = Array2::zeros(matrix.dim());
    for (mut row, &f) in out.axis_iter_mut(Axis(0)).zip(factors.iter()) {
        row.fill(f);
    }
    out
}

/// `M / (‖M‖_F + c_eps)`
fn normalized(m: &Array2<f64>, c_eps: f64) -> Array2<f64> {
    let norm = frobenius(m);
    m / (norm + c_eps)
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Update directions for every `W^ℓ` and `E^ℓ`, index `ℓ-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDeltas {
    pub forward: Vec<Array2<f64>>,
    pub error: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgcModel {
    config: NgcConfig,
    seed: u64,
    forward: Vec<Array2<f64>>,
    error: Vec<Array2<f64>>,
    forward_optim: Vec<OptimState>,
    error_optim: Vec<OptimState>,
}

impl NgcModel {
    /// Draws every synapse i.i.d. from `N(0, init_std²)`. Identical
    /// `(config, seed)` pairs give bit-identical models.
    pub fn init(config: NgcConfig, seed: u64) -> Result<Self, NgcError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| NgcError::Config(e.to_string()))?;
        let dims = &config.layer_dims;
        let mut forward = Vec::with_capacity(config.depth());
        let mut error = Vec::with_capacity(config.depth());
        for l in 1..dims.len() {
            forward.push(Array2::from_shape_simple_fn((dims[l - 1], dims[l]), || normal.sample(&mut rng)));
        }
        for l in 1..dims.len() {
            error.push(Array2::from_shape_simple_fn((dims[l], dims[l - 1]), || normal.sample(&mut rng)));
        }
        Ok(Self::assemble(config, seed, forward, error))
    }

    /// Builds a model around explicit matrices (`forward[ℓ-1] = W^ℓ`,
    /// `error[ℓ-1] = E^ℓ`) with fresh optimizer state.
    pub fn from_weights(
        config: NgcConfig,
        forward: Vec<Array2<f64>>,
        error: Vec<Array2<f64>>,
    ) -> Result<Self, NgcError> {
        config.validate()?;
        let dims = &config.layer_dims;
        if forward.len() != config.depth() || error.len() != config.depth() {
            return Err(shape_err("matrix count", config.depth(), (forward.len(), error.len())));
        }
        for l in 1..dims.len() {
            if forward[l - 1].dim() != (dims[l - 1], dims[l]) {
                return Err(shape_err(format!("W^{l}"), (dims[l - 1], dims[l]), forward[l - 1].dim()));
            }
            if error[l - 1].dim() != (dims[l], dims[l - 1]) {
                return Err(shape_err(format!("E^{l}"), (dims[l], dims[l - 1]), error[l - 1].dim()));
            }
        }
        Ok(Self::assemble(config, 0, forward, error))
    }

    fn assemble(config: NgcConfig, seed: u64, forward: Vec<Array2<f64>>, error: Vec<Array2<f64>>) -> Self {
        let forward_optim = forward
            .iter()
            .map(|w| OptimState::new(config.update_rule, config.eta, w.dim()))
            .collect();
        let error_optim = error
            .iter()
            .map(|e| OptimState::new(config.update_rule, config.eta, e.dim()))
            .collect();
        Self {
            config,
            seed,
            forward,
            error,
            forward_optim,
            error_optim,
        }
    }

    pub fn config(&self) -> &NgcConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `W^1..W^L`
    pub fn forward_weights(&self) -> &[Array2<f64>] {
        &self.forward
    }

    /// `E^1..E^L`
    pub fn error_weights(&self) -> &[Array2<f64>] {
        &self.error
    }

    pub fn forward_weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.forward
    }

    pub fn error_weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.error
    }

    pub fn optimizer_states(&self) -> (&[OptimState], &[OptimState]) {
        (&self.forward_optim, &self.error_optim)
    }

    /// Turns synaptic scaling on or off without touching the weights.
    pub fn set_modulation(&mut self, enabled: bool) {
        self.config.modulation = enabled;
    }

    /// `self ← τ·source + (1−τ)·self` on every matrix. Optimizer state is
    /// left alone.
    pub fn blend_from(&mut self, source: &NgcModel, tau: f64) -> Result<(), NgcError> {
        if source.config.layer_dims != self.config.layer_dims {
            return Err(shape_err("blend source", &self.config.layer_dims, &source.config.layer_dims));
        }
        for (dst, src) in self
            .forward
            .iter_mut()
            .zip(&source.forward)
            .chain(self.error.iter_mut().zip(&source.error))
        {
            if tau == 1.0 {
                dst.assign(src);
            } else {
                Zip::from(dst).and(src).for_each(|d, &s| *d = tau * s + (1.0 - tau) * *d);
            }
        }
        Ok(())
    }

    fn check_batch(&self, what: &str, m: &ArrayView2<f64>, rows: usize) -> Result<(), NgcError> {
        if m.nrows() != rows {
            return Err(shape_err(what, rows, m.nrows()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(NgcError::Config(format!("{what} contains non-finite values")));
        }
        Ok(())
    }

    /// Ancestral pass from the clamped input to the bottom layer.
    pub fn project(&self, x_in: &[f64]) -> Result<Vec<f64>, NgcError> {
        let x = ArrayView2::from_shape((x_in.len(), 1), x_in).expect("column view");
        Ok(self.project_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// [`project`](Self::project) for one sample per column.
    pub fn project_batch(&self, x_in: ArrayView2<f64>) -> Result<Array2<f64>, NgcError> {
        self.check_batch("projection input", &x_in, self.config.input_dim())?;
        let acts = &self.config.activations;
        let depth = self.config.depth();
        let mut z = x_in.to_owned();
        for l in (0..depth).rev() {
            z = self.forward[l].dot(&acts[l + 1].map(&z));
        }
        Ok(z)
    }

    /// Settles the circuit with `x_in` clamped on top and `x_out` at the
    /// bottom. Weights are not touched.
    pub fn infer(&self, x_in: &[f64], x_out: &[f64]) -> Result<CircuitActivity, NgcError> {
        let xi = ArrayView2::from_shape((x_in.len(), 1), x_in).expect("column view");
        let xo = ArrayView2::from_shape((x_out.len(), 1), x_out).expect("column view");
        self.infer_batch(xi, xo)
    }

    pub fn infer_batch(&self, x_in: ArrayView2<f64>, x_out: ArrayView2<f64>) -> Result<CircuitActivity, NgcError> {
        self.settle(x_in, x_out, |_| {})
    }

    /// Like [`infer`](Self::infer) but also returns the total discrepancy
    /// after each of the `K` iterations.
    pub fn infer_traced(&self, x_in: &[f64], x_out: &[f64]) -> Result<(CircuitActivity, Vec<f64>), NgcError> {
        let xi = ArrayView2::from_shape((x_in.len(), 1), x_in).expect("column view");
        let xo = ArrayView2::from_shape((x_out.len(), 1), x_out).expect("column view");
        let mut trace = Vec::with_capacity(self.config.k_steps);
        let act = self.settle(xi, xo, |a| trace.push(total_discrepancy(a, &self.config)))?;
        Ok((act, trace))
    }

    fn settle(
        &self,
        x_in: ArrayView2<f64>,
        x_out: ArrayView2<f64>,
        mut observe: impl FnMut(&CircuitActivity),
    ) -> Result<CircuitActivity, NgcError> {
        let cfg = &self.config;
        self.check_batch("clamped input", &x_in, cfg.input_dim())?;
        self.check_batch("clamped output", &x_out, cfg.output_dim())?;
        if x_in.ncols() != x_out.ncols() {
            return Err(shape_err("batch size", x_in.ncols(), x_out.ncols()));
        }
        let batch = x_in.ncols();
        let depth = cfg.depth();
        let dims = &cfg.layer_dims;
        let acts = &cfg.activations;
        let prefactor = cfg.error_prefactor();

        let mut states: Vec<Array2<f64>> = dims.iter().map(|&j| Array2::zeros((j, batch))).collect();
        states[0].assign(&x_out);
        states[depth].assign(&x_in);
        let mut errors: Vec<Array2<f64>> = dims[..depth].iter().map(|&j| Array2::zeros((j, batch))).collect();
        errors[0].assign(&x_out);
        let predictions: Vec<Array2<f64>> = dims[..depth].iter().map(|&j| Array2::zeros((j, batch))).collect();
        let mut act = CircuitActivity {
            states,
            errors,
            predictions,
        };

        for iteration in 1..=cfg.k_steps {
            for l in 1..depth {
                let feedback = self.error[l - 1].dot(&act.errors[l - 1]);
                Zip::from(&mut act.states[l])
                    .and(&act.errors[l])
                    .and(&feedback)
                    .for_each(|z, &e, &fb| *z += cfg.beta * (-cfg.gamma_v * *z - e + fb));
                if act.states[l].iter().any(|v| !v.is_finite()) {
                    return Err(NgcError::Divergence { layer: l, iteration });
                }
            }
            for l in (0..depth).rev() {
                let pred = self.forward[l].dot(&acts[l + 1].map(&act.states[l + 1]));
                let phi = acts[l];
                Zip::from(&mut act.errors[l])
                    .and(&act.states[l])
                    .and(&pred)
                    .for_each(|e, &z, &p| *e = prefactor * (phi.apply(z) - p));
                act.predictions[l] = pred;
                if act.errors[l].iter().any(|v| !v.is_finite()) {
                    return Err(NgcError::Divergence { layer: l, iteration });
                }
            }
            observe(&act);
        }
        Ok(act)
    }

    fn check_activity(&self, activity: &CircuitActivity) -> Result<(), NgcError> {
        let dims = &self.config.layer_dims;
        if activity.states.len() != dims.len() || activity.errors.len() != dims.len() - 1 {
            return Err(shape_err(
                "activity layer count",
                dims.len(),
                (activity.states.len(), activity.errors.len()),
            ));
        }
        let batch = activity.batch_size();
        for (l, z) in activity.states.iter().enumerate() {
            if z.dim() != (dims[l], batch) {
                return Err(shape_err(format!("z^{l}"), (dims[l], batch), z.dim()));
            }
        }
        for (l, e) in activity.errors.iter().enumerate() {
            if e.dim() != (dims[l], batch) {
                return Err(shape_err(format!("e^{l}"), (dims[l], batch), e.dim()));
            }
        }
        Ok(())
    }

    /// Raw Hebbian products `e^{ℓ-1}·φ^ℓ(z^ℓ)ᵀ`, averaged over the batch,
    /// before normalization or modulation. At fixed states this is
    /// `-2β_e²·∂L/∂W^ℓ`.
    pub fn hebbian_products(&self, activity: &CircuitActivity) -> Result<Vec<Array2<f64>>, NgcError> {
        self.check_activity(activity)?;
        let acts = &self.config.activations;
        let inv_batch = 1.0 / activity.batch_size() as f64;
        Ok((1..=self.config.depth())
            .map(|l| {
                let pre = acts[l].map(&activity.states[l]);
                activity.errors[l - 1].dot(&pre.t()) * inv_batch
            })
            .collect())
    }

    /// Normalized, optionally modulated update directions for every matrix.
    pub fn compute_weight_deltas(&self, activity: &CircuitActivity) -> Result<WeightDeltas, NgcError> {
        let cfg = &self.config;
        let raw = self.hebbian_products(activity)?;
        let mut forward = Vec::with_capacity(raw.len());
        let mut error = Vec::with_capacity(raw.len());
        for (l, dw) in raw.into_iter().enumerate() {
            let mut dw = normalized(&dw, cfg.c_eps);
            if cfg.modulation {
                dw *= &compute_modulation(self.forward[l].view(), cfg.gamma_s, cfg.c_eps);
            }
            let mut de = normalized(&(dw.t().to_owned() * cfg.gamma_e), cfg.c_eps);
            if cfg.modulation {
                de *= &compute_modulation(self.error[l].view(), ERROR_SCALING, cfg.c_eps);
            }
            forward.push(dw);
            error.push(de);
        }
        Ok(WeightDeltas { forward, error })
    }

    /// Steps every matrix along its delta with the configured rule, then
    /// rescales it to `rescale_target·M/(‖M‖_F + c_eps)`.
    pub fn apply_update(&mut self, deltas: &WeightDeltas) -> Result<(), NgcError> {
        if deltas.forward.len() != self.forward.len() || deltas.error.len() != self.error.len() {
            return Err(shape_err(
                "delta count",
                self.forward.len(),
                (deltas.forward.len(), deltas.error.len()),
            ));
        }
        for (l, d) in deltas.forward.iter().enumerate() {
            if d.dim() != self.forward[l].dim() {
                return Err(shape_err(format!("ΔW^{}", l + 1), self.forward[l].dim(), d.dim()));
            }
        }
        for (l, d) in deltas.error.iter().enumerate() {
            if d.dim() != self.error[l].dim() {
                return Err(shape_err(format!("ΔE^{}", l + 1), self.error[l].dim(), d.dim()));
            }
        }
        let (target, c_eps) = (self.config.rescale_target, self.config.c_eps);
        let params = self.forward.iter_mut().chain(self.error.iter_mut());
        let states = self.forward_optim.iter_mut().chain(self.error_optim.iter_mut());
        let updates = deltas.forward.iter().chain(deltas.error.iter());
        for ((param, state), delta) in params.zip(states).zip(updates) {
            state.step(param, delta.view())?;
            let norm = frobenius(param);
            *param *= target / (norm + c_eps);
        }
        Ok(())
    }

    /// Settles on one batch and applies the resulting update. Returns the
    /// batch-mean total discrepancy measured before the update.
    pub fn fit_batch(&mut self, x_in: ArrayView2<f64>, x_out: ArrayView2<f64>) -> Result<f64, NgcError> {
        let act = self.infer_batch(x_in, x_out)?;
        let loss = total_discrepancy(&act, &self.config) / act.batch_size() as f64;
        let deltas = self.compute_weight_deltas(&act)?;
        self.apply_update(&deltas)?;
        Ok(loss)
    }

    pub fn update_rule(&self) -> UpdateRule {
        self.config.update_rule
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(dims: &[usize], act: Activation) -> NgcConfig {
        let mut c = NgcConfig::new(dims[dims.len() - 1], &[], dims[0], act);
        c.layer_dims = dims.to_vec();
        c.activations = vec![act; dims.len()];
        c
    }

    #[test]
    fn init_is_deterministic() {
        let c = cfg(&[1, 1], Activation::Identity);
        let a = NgcModel::init(c.clone(), 7).unwrap();
        let b = NgcModel::init(c, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.forward_weights()[0][[0, 0]].to_bits(), b.forward_weights()[0][[0, 0]].to_bits());
    }

    #[test]
    fn init_shapes_follow_layer_widths() {
        let m = NgcModel::init(cfg(&[2, 3, 4], Activation::Tanh), 1).unwrap();
        let w: Vec<_> = m.forward_weights().iter().map(|w| w.dim()).collect();
        let e: Vec<_> = m.error_weights().iter().map(|e| e.dim()).collect();
        assert_eq!(w, vec![(2, 3), (3, 4)]);
        assert_eq!(e, vec![(3, 2), (4, 3)]);
    }

    #[test]
    fn init_rejects_bad_configs() {
        let mut c = cfg(&[2, 3], Activation::Identity);
        c.layer_dims = vec![3];
        c.activations = vec![Activation::Identity];
        assert!(matches!(NgcModel::init(c, 0), Err(NgcError::Config(_))));
        let mut c = cfg(&[2, 0, 3], Activation::Identity);
        assert!(NgcModel::init(c.clone(), 0).is_err());
        c.layer_dims = vec![2, 3];
        c.activations.pop();
        c.beta = 0.0;
        assert!(NgcModel::init(c, 0).is_err());
        let mut c = cfg(&[2, 3], Activation::Identity);
        c.lateral = true;
        assert!(NgcModel::init(c, 0).is_err());
    }

    #[test]
    fn project_single_layer() {
        let c = cfg(&[1, 1], Activation::Identity);
        let m = NgcModel::from_weights(c, vec![array![[2.0]]], vec![array![[0.0]]]).unwrap();
        assert_eq!(m.project(&[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn project_zero_weights_annihilates() {
        let c = cfg(&[3, 5, 2], Activation::Tanh);
        let m = NgcModel::from_weights(
            c,
            vec![Array2::zeros((3, 5)), Array2::zeros((5, 2))],
            vec![Array2::zeros((5, 3)), Array2::zeros((2, 5))],
        )
        .unwrap();
        assert_eq!(m.project(&[1.5, -2.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn project_rejects_wrong_width() {
        let m = NgcModel::init(cfg(&[2, 3], Activation::Identity), 0).unwrap();
        assert!(matches!(m.project(&[1.0, 2.0]), Err(NgcError::Shape { .. })));
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let mut c = cfg(&[1, 1], Activation::Identity);
        c.k_steps = 1;
        c.beta_e = 0.5;
        let m = NgcModel::from_weights(c, vec![array![[1.0]]], vec![array![[1.0]]]).unwrap();
        let act = m.infer(&[1.0], &[1.0]).unwrap();
        assert_eq!(act.errors[0][[0, 0]], 0.0);
    }

    #[test]
    fn total_discrepancy_by_hand() {
        let mut c = cfg(&[2, 1], Activation::Identity);
        c.beta_e = 0.5;
        let act = CircuitActivity {
            states: vec![Array2::zeros((2, 1)), Array2::zeros((1, 1))],
            errors: vec![array![[3.0], [4.0]]],
            predictions: vec![Array2::zeros((2, 1))],
        };
        assert_eq!(total_discrepancy(&act, &c), 25.0);
        let zero = CircuitActivity {
            errors: vec![Array2::zeros((2, 1))],
            ..act
        };
        assert_eq!(total_discrepancy(&zero, &c), 0.0);
    }

    #[test]
    fn modulation_examples() {
        let ones = compute_modulation(array![[1.0, 1.0], [1.0, 1.0]].view(), 2.0, C_EPS);
        assert_eq!(ones, Array2::<f64>::ones((2, 2)));
        let sat = compute_modulation(array![[2.0, 2.0], [1.0, 1.0]].view(), 2.0, C_EPS);
        assert_eq!(sat, Array2::<f64>::ones((2, 2)));
        let half = compute_modulation(array![[2.0, 2.0], [1.0, 1.0]].view(), 0.5, C_EPS);
        assert_eq!(half, array![[0.5, 0.5], [0.25, 0.25]]);
    }

    #[test]
    fn modulation_degenerate_rows_give_ones() {
        let m = compute_modulation(array![[-1.0, 0.5], [-2.0, 0.0]].view(), 2.0, C_EPS);
        assert_eq!(m, Array2::<f64>::ones((2, 2)));
        let z = compute_modulation(Array2::<f64>::zeros((3, 2)).view(), 2.0, C_EPS);
        assert_eq!(z, Array2::<f64>::ones((3, 2)));
    }

    #[test]
    fn zero_errors_give_zero_deltas() {
        let m = NgcModel::init(cfg(&[2, 3, 2], Activation::Tanh), 3).unwrap();
        let act = CircuitActivity {
            states: vec![array![[0.1], [0.2]], array![[0.3], [-0.1], [0.5]], array![[1.0], [2.0]]],
            errors: vec![Array2::zeros((2, 1)), Array2::zeros((3, 1))],
            predictions: vec![Array2::zeros((2, 1)), Array2::zeros((3, 1))],
        };
        let d = m.compute_weight_deltas(&act).unwrap();
        assert!(d.forward.iter().chain(&d.error).all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn one_by_one_delta_normalizes_to_unit() {
        let mut c = cfg(&[1, 1], Activation::Identity);
        c.modulation = false;
        let m = NgcModel::from_weights(c, vec![array![[0.5]]], vec![array![[0.5]]]).unwrap();
        let act = CircuitActivity {
            states: vec![array![[0.0]], array![[3.0]]],
            errors: vec![array![[2.0]]],
            predictions: vec![array![[0.0]]],
        };
        let d = m.compute_weight_deltas(&act).unwrap();
        assert_eq!(d.forward[0][[0, 0]], 6.0 / (6.0 + C_EPS));
        assert!((d.forward[0][[0, 0]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sgd_update_then_rescale() {
        let mut c = cfg(&[1, 1], Activation::Identity);
        c.update_rule = UpdateRule::Sgd;
        c.eta = 1.0;
        let mut m = NgcModel::from_weights(c, vec![array![[1.0]]], vec![array![[1.0]]]).unwrap();
        let deltas = WeightDeltas {
            forward: vec![array![[1.0]]],
            error: vec![array![[1.0]]],
        };
        m.apply_update(&deltas).unwrap();
        assert_eq!(m.forward_weights()[0][[0, 0]], 2.0 * 2.0 / (2.0 + C_EPS));
    }

    #[test]
    fn apply_update_rejects_mismatched_deltas() {
        let mut m = NgcModel::init(cfg(&[2, 3], Activation::Identity), 0).unwrap();
        let deltas = WeightDeltas {
            forward: vec![Array2::zeros((3, 2))],
            error: vec![Array2::zeros((3, 2))],
        };
        assert!(m.apply_update(&deltas).is_err());
    }

    #[test]
    fn divergence_names_layer_and_iteration() {
        let mut c = cfg(&[1, 1, 1], Activation::Identity);
        c.beta = 1.0;
        c.k_steps = 2000;
        let m = NgcModel::from_weights(
            c,
            vec![array![[1e3]], array![[1e3]]],
            vec![array![[1e3]], array![[1e3]]],
        )
        .unwrap();
        match m.infer(&[1.0], &[1.0]) {
            Err(NgcError::Divergence { layer, iteration }) => {
                assert!(layer <= 1);
                assert!(iteration >= 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn blend_with_unit_tau_copies() {
        let c = cfg(&[2, 3, 2], Activation::Relu);
        let a = NgcModel::init(c.clone(), 1).unwrap();
        let mut b = NgcModel::init(c, 2).unwrap();
        b.blend_from(&a, 1.0).unwrap();
        assert_eq!(a.forward_weights(), b.forward_weights());
        assert_eq!(a.error_weights(), b.error_weights());
    }
}
