//! Explicit per-layer weights realizing each solver: gradient descent for
//! the electric-flow objective, truncated power series for the inverse
//! square root and the heat kernel, repeated-squaring and repeated-cubing
//! variants, and subspace iteration with in-network orthogonalization.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{GflError, Result};
use crate::graph::{centering, Laplacian};
use crate::transformer::{BlockLayout, EfficientLayerWeights, LayerWeights, TransformerState};
use crate::Mat;

/// Relative slack on spectral preconditions, absorbing eigensolver roundoff
/// when a parameter sits exactly on its limit.
const PRE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ElectricGd,
    SqrtSeries,
    HeatSeries,
    ElectricFast,
    HeatFast,
    SubspaceTopK,
    SubspaceBottomK,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::ElectricGd => "electric_gd",
            TaskKind::SqrtSeries => "sqrt_series",
            TaskKind::HeatSeries => "heat_series",
            TaskKind::ElectricFast => "electric_fast",
            TaskKind::HeatFast => "heat_fast",
            TaskKind::SubspaceTopK => "subspace_top_k",
            TaskKind::SubspaceBottomK => "subspace_bottom_k",
        }
    }

    pub const ALL: [TaskKind; 7] = [
        TaskKind::ElectricGd,
        TaskKind::SqrtSeries,
        TaskKind::HeatSeries,
        TaskKind::ElectricFast,
        TaskKind::HeatFast,
        TaskKind::SubspaceTopK,
        TaskKind::SubspaceBottomK,
    ];

    /// Square-state tasks that bake the Laplacian into Z0.
    pub fn is_fast(&self) -> bool {
        matches!(self, TaskKind::ElectricFast | TaskKind::HeatFast)
    }

    pub fn is_subspace(&self) -> bool {
        matches!(self, TaskKind::SubspaceTopK | TaskKind::SubspaceBottomK)
    }
}

impl std::str::FromStr for TaskKind {
    type Err = GflError;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| GflError::Constraint(format!("unknown task kind: {s}")))
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Solver configuration: which construction, how many layers, and its
/// scalar parameters. `lambda_max_hint` feeds constructions needing an
/// upper spectral bound; when absent the runner substitutes the exact
/// value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub layers: usize,
    pub k: usize,
    pub delta: Option<f64>,
    pub temp: Option<f64>,
    pub mu: Option<f64>,
    pub lambda_max_hint: Option<f64>,
}

fn require(value: Option<f64>, what: &str, kind: TaskKind) -> Result<f64> {
    value.ok_or_else(|| GflError::Constraint(format!("{} requires {what}", kind.name())))
}

impl TaskSpec {
    /// Structural checks that need no spectral information.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(GflError::Constraint("k must be at least 1".into()));
        }
        for (name, v) in [("delta", self.delta), ("temp", self.temp), ("mu", self.mu)] {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(GflError::Constraint(format!("{name} must be finite, got {x}")));
                }
            }
        }
        match self.kind {
            TaskKind::ElectricGd => {
                let d = require(self.delta, "delta", self.kind)?;
                if d < 0.0 {
                    return Err(GflError::Constraint(format!("delta must be >= 0, got {d}")));
                }
            }
            TaskKind::ElectricFast => {
                let d = require(self.delta, "delta", self.kind)?;
                if d <= 0.0 {
                    return Err(GflError::Constraint(format!("delta must be > 0, got {d}")));
                }
            }
            TaskKind::SqrtSeries => {
                if let Some(h) = self.lambda_max_hint {
                    if !(h > 0.0) || !h.is_finite() {
                        return Err(GflError::Constraint(format!(
                            "lambda_max_hint must be positive and finite, got {h}"
                        )));
                    }
                }
            }
            TaskKind::HeatSeries | TaskKind::HeatFast => {
                let s = require(self.temp, "temp", self.kind)?;
                if s < 0.0 {
                    return Err(GflError::Constraint(format!("temp must be >= 0, got {s}")));
                }
            }
            TaskKind::SubspaceTopK | TaskKind::SubspaceBottomK => {
                if self.layers % (self.k + 1) != 0 {
                    return Err(GflError::Constraint(format!(
                        "subspace layer count {} must be a multiple of k+1 = {}",
                        self.layers,
                        self.k + 1
                    )));
                }
                if self.kind == TaskKind::SubspaceBottomK {
                    let mu = require(self.mu, "mu", self.kind)?;
                    if mu <= 0.0 {
                        return Err(GflError::Constraint(format!("mu must be > 0, got {mu}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Preconditions tying the parameters to the actual spectrum.
    pub fn validate_spectral(&self, lambda_max: f64) -> Result<()> {
        self.validate()?;
        let slack = 1.0 + PRE_TOL;
        match self.kind {
            TaskKind::ElectricGd | TaskKind::ElectricFast => {
                let d = self.delta.unwrap();
                if d * lambda_max > slack {
                    return Err(GflError::Constraint(format!(
                        "delta * lambda_max = {} exceeds 1",
                        d * lambda_max
                    )));
                }
            }
            TaskKind::HeatSeries => {
                let s = self.temp.unwrap();
                if 8.0 * s * lambda_max > (self.layers as f64) * slack {
                    return Err(GflError::Constraint(format!(
                        "heat series needs layers >= 8 * temp * lambda_max = {}",
                        8.0 * s * lambda_max
                    )));
                }
            }
            TaskKind::HeatFast => {
                let s = self.temp.unwrap();
                let cap = 3f64.powi(self.layers as i32);
                if s * lambda_max > cap * slack {
                    return Err(GflError::Constraint(format!(
                        "temp * lambda_max = {} exceeds 3^layers = {cap}",
                        s * lambda_max
                    )));
                }
            }
            TaskKind::SubspaceBottomK => {
                let mu = self.mu.unwrap();
                if mu * slack < lambda_max {
                    return Err(GflError::Constraint(format!(
                        "mu = {mu} must dominate lambda_max = {lambda_max}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn scaled_eye(m: &mut Mat, row0: usize, col0: usize, len: usize, scale: f64) {
    for t in 0..len {
        m[[row0 + t, col0 + t]] = scale;
    }
}

fn check_dims(d: usize, k: usize) -> Result<()> {
    if d == 0 || k == 0 {
        return Err(GflError::Constraint(format!(
            "need d >= 1 and k >= 1, got d = {d}, k = {k}"
        )));
    }
    Ok(())
}

/// Gradient descent on the dual electric-flow objective. On the standard
/// layout [B; Psi; Phi] every layer applies
/// Phi <- Phi - delta (L Phi - Psi).
pub fn electric_gd_weights(d: usize, k: usize, delta: f64, layers: usize) -> Result<Vec<LayerWeights>> {
    check_dims(d, k)?;
    if !delta.is_finite() || delta < 0.0 {
        return Err(GflError::Constraint(format!(
            "delta must be finite and >= 0, got {delta}"
        )));
    }
    let h = d + 2 * k;
    let mut w = LayerWeights::zeros(h);
    scaled_eye(&mut w.wv, d + k, d + k, k, -delta);
    scaled_eye(&mut w.pqk, 0, 0, d, 1.0);
    scaled_eye(&mut w.wr, d + k, d, k, delta);
    Ok(vec![w; layers])
}

/// Coefficients sqrt(delta) * binom(2l, l) / 4^l by the stable multiplicative
/// recurrence; one entry per layer.
pub fn sqrt_coefficients(delta: f64, layers: usize) -> Vec<f64> {
    let mut alphas = Vec::with_capacity(layers);
    let mut a = delta.sqrt();
    for l in 0..layers {
        alphas.push(a);
        a *= (2 * l + 1) as f64 / (2 * l + 2) as f64;
    }
    alphas
}

/// Truncated binomial series for the inverse square root: the carry block
/// tracks (I - delta L)^l Psi and the solution block accumulates
/// alpha_l-weighted terms, with delta = 1 / lambda_max_hint.
pub fn sqrt_series_weights(
    d: usize,
    k: usize,
    lambda_max_hint: f64,
    layers: usize,
) -> Result<Vec<LayerWeights>> {
    check_dims(d, k)?;
    if !(lambda_max_hint > 0.0) || !lambda_max_hint.is_finite() {
        return Err(GflError::Constraint(format!(
            "lambda_max_hint must be positive and finite, got {lambda_max_hint}"
        )));
    }
    let delta = 1.0 / lambda_max_hint;
    let h = d + 2 * k;
    let alphas = sqrt_coefficients(delta, layers);
    Ok(alphas
        .into_iter()
        .map(|alpha| {
            let mut w = LayerWeights::zeros(h);
            scaled_eye(&mut w.wv, d, d, k, -delta);
            scaled_eye(&mut w.pqk, 0, 0, d, 1.0);
            scaled_eye(&mut w.wr, d + k, d, k, alpha);
            w
        })
        .collect())
}

/// Coefficients (-s)^l / l! by recurrence; one entry per layer.
pub fn heat_coefficients(s: f64, layers: usize) -> Vec<f64> {
    let mut alphas = Vec::with_capacity(layers);
    let mut a = 1.0;
    for l in 0..layers {
        alphas.push(a);
        a *= -s / (l + 1) as f64;
    }
    alphas
}

/// Truncated exponential series for the heat kernel: the carry block tracks
/// L^l Psi and the solution block accumulates (-s)^l / l! terms.
pub fn heat_series_weights(d: usize, k: usize, s: f64, layers: usize) -> Result<Vec<LayerWeights>> {
    check_dims(d, k)?;
    if !s.is_finite() || s < 0.0 {
        return Err(GflError::Constraint(format!(
            "temp must be finite and >= 0, got {s}"
        )));
    }
    let h = d + 2 * k;
    let alphas = heat_coefficients(s, layers);
    Ok(alphas
        .into_iter()
        .map(|alpha| {
            let mut w = LayerWeights::zeros(h);
            scaled_eye(&mut w.wv, d, d, k, 1.0);
            scaled_eye(&mut w.pqk, 0, 0, d, 1.0);
            scaled_eye(&mut w.wr, d, d, k, -1.0);
            scaled_eye(&mut w.wr, d + k, d, k, alpha);
            w
        })
        .collect())
}

/// Repeated squaring for the pseudoinverse. The state is three square
/// blocks [propagator; anchor; solution] with propagator (I_c - delta L)
/// squared each layer (I_c the centering projector) and solution
/// delta * prod(I + propagator_i) * I_c.
pub fn electric_fast_build(
    lap: &Laplacian,
    delta: f64,
    layers: usize,
) -> Result<(TransformerState, Vec<LayerWeights>)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(GflError::Constraint(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }
    let n = lap.n();
    let dec = lap.spectrum()?;
    let lam_max = *dec.eigenvalues.last().unwrap();
    if delta * lam_max > 1.0 + PRE_TOL {
        return Err(GflError::Constraint(format!(
            "delta * lambda_max = {} exceeds 1",
            delta * lam_max
        )));
    }
    let cen = centering(n);
    let mut z0 = Array2::zeros((3 * n, n));
    let mut gamma0 = cen.clone();
    gamma0 -= &lap.as_mat().mapv(|x| x * delta);
    z0.slice_mut(ndarray::s![0..n, ..]).assign(&gamma0);
    z0.slice_mut(ndarray::s![n..2 * n, ..]).assign(&Array2::eye(n));
    z0.slice_mut(ndarray::s![2 * n..3 * n, ..])
        .assign(&cen.mapv(|x| x * delta));
    let state = TransformerState::new(BlockLayout::Fast { n }, z0)?;

    let mut w = LayerWeights::zeros(3 * n);
    scaled_eye(&mut w.wv, 0, 0, n, 1.0);
    scaled_eye(&mut w.wv, 2 * n, 2 * n, n, 1.0);
    scaled_eye(&mut w.pqk, n, 0, n, 1.0);
    scaled_eye(&mut w.wr, 0, 0, n, -1.0);
    Ok((state, vec![w; layers]))
}

/// Repeated cubing for the heat kernel: Z0 = I - 3^{-L} s L and every layer
/// maps Z to Z^3, so Z_L = (I - s L / 3^L)^{3^L}.
pub fn heat_fast_build(
    lap: &Laplacian,
    s: f64,
    layers: usize,
) -> Result<(TransformerState, Vec<LayerWeights>)> {
    if !s.is_finite() || s < 0.0 {
        return Err(GflError::Constraint(format!(
            "temp must be finite and >= 0, got {s}"
        )));
    }
    let n = lap.n();
    let dec = lap.spectrum()?;
    let lam_max = *dec.eigenvalues.last().unwrap();
    let cap = 3f64.powi(layers as i32);
    if s * lam_max > cap * (1.0 + PRE_TOL) {
        return Err(GflError::Constraint(format!(
            "temp * lambda_max = {} exceeds 3^layers = {cap}",
            s * lam_max
        )));
    }
    let mut z0: Mat = Array2::eye(n);
    z0 -= &lap.as_mat().mapv(|x| x * (s / cap));
    let state = TransformerState::new(BlockLayout::Single { n }, z0)?;

    let mut w = LayerWeights::zeros(n);
    scaled_eye(&mut w.wv, 0, 0, n, 1.0);
    scaled_eye(&mut w.pqk, 0, 0, n, 1.0);
    scaled_eye(&mut w.wr, 0, 0, n, -1.0);
    Ok((state, vec![w; layers]))
}

/// One Gram-Schmidt layer on the eig layout: subtracts from column i its
/// projections onto every later column (1-based i; later columns must
/// already be orthonormal), leaving other columns untouched. Row
/// normalization then rescales the residual.
pub fn ortho_layer_weights(i: usize, k: usize, d: usize) -> Result<LayerWeights> {
    check_dims(d, k)?;
    if i < 1 || i > k {
        return Err(GflError::Constraint(format!(
            "orthogonalization index must satisfy 1 <= i <= k, got i = {i}, k = {k}"
        )));
    }
    let h = d + k;
    let mut w = LayerWeights::zeros(h);
    w.wv[[d + i - 1, d + i - 1]] = -1.0;
    for j in (i + 1)..=k {
        w.pqk[[d + j - 1, d + j - 1]] = 1.0;
    }
    Ok(w)
}

/// Which end of the spectrum subspace iteration should find.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubspaceMode {
    Top,
    /// Iterates with mu I - L, so the bottom of L's spectrum dominates;
    /// requires mu >= lambda_max.
    Bottom { mu: f64 },
}

fn multiply_layer(d: usize, k: usize, mode: SubspaceMode) -> LayerWeights {
    let h = d + k;
    let mut w = LayerWeights::zeros(h);
    scaled_eye(&mut w.pqk, 0, 0, d, 1.0);
    match mode {
        SubspaceMode::Top => {
            scaled_eye(&mut w.wv, d, d, k, 1.0);
            scaled_eye(&mut w.wr, d, d, k, -1.0);
        }
        SubspaceMode::Bottom { mu } => {
            scaled_eye(&mut w.wv, d, d, k, -1.0);
            scaled_eye(&mut w.wr, d, d, k, mu - 1.0);
        }
    }
    w
}

/// Subspace iteration as layers: each (k+1)-layer unit is one multiply
/// layer (by L, or by mu I - L in bottom mode) followed by Gram-Schmidt
/// layers for columns k down to 1. Under the row-normalizing engine one
/// unit equals one orthogonalized power step.
pub fn subspace_weights(
    d: usize,
    k: usize,
    total_layers: usize,
    mode: SubspaceMode,
) -> Result<Vec<LayerWeights>> {
    check_dims(d, k)?;
    if let SubspaceMode::Bottom { mu } = mode {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(GflError::Constraint(format!(
                "mu must be positive and finite, got {mu}"
            )));
        }
    }
    if total_layers % (k + 1) != 0 {
        return Err(GflError::Constraint(format!(
            "layer count {total_layers} must be a multiple of k+1 = {}",
            k + 1
        )));
    }
    let units = total_layers / (k + 1);
    let mut weights = Vec::with_capacity(total_layers);
    for _ in 0..units {
        weights.push(multiply_layer(d, k, mode));
        for i in (1..=k).rev() {
            weights.push(ortho_layer_weights(i, k, d)?);
        }
    }
    Ok(weights)
}

/// Constrained-engine settings matching the standard-layout constructions
/// layer-by-layer. The 2k-row phi state stacks [carry; solution]. Fast
/// kinds use square states and have no constrained form.
pub fn efficient_config(spec: &TaskSpec) -> Result<Vec<EfficientLayerWeights>> {
    spec.validate()?;
    let k = spec.k;
    let mut base = EfficientLayerWeights::zeros(k);
    match spec.kind {
        TaskKind::ElectricGd => {
            let delta = spec.delta.unwrap();
            base.alpha_q = 1.0;
            base.alpha_k = 1.0;
            scaled_eye(&mut base.wv_phi, k, k, k, -delta);
            scaled_eye(&mut base.wr_phi, k, 0, k, delta);
            Ok(vec![base; spec.layers])
        }
        TaskKind::SqrtSeries => {
            let hint = spec.lambda_max_hint.ok_or_else(|| {
                GflError::Constraint("sqrt_series efficient config requires lambda_max_hint".into())
            })?;
            let delta = 1.0 / hint;
            base.alpha_q = 1.0;
            base.alpha_k = 1.0;
            scaled_eye(&mut base.wv_phi, 0, 0, k, -delta);
            Ok(sqrt_coefficients(delta, spec.layers)
                .into_iter()
                .map(|alpha| {
                    let mut w = base.clone();
                    scaled_eye(&mut w.wr_phi, k, 0, k, alpha);
                    w
                })
                .collect())
        }
        TaskKind::HeatSeries => {
            let s = spec.temp.unwrap();
            base.alpha_q = 1.0;
            base.alpha_k = 1.0;
            scaled_eye(&mut base.wv_phi, 0, 0, k, 1.0);
            scaled_eye(&mut base.wr_phi, 0, 0, k, -1.0);
            Ok(heat_coefficients(s, spec.layers)
                .into_iter()
                .map(|alpha| {
                    let mut w = base.clone();
                    scaled_eye(&mut w.wr_phi, k, 0, k, alpha);
                    w
                })
                .collect())
        }
        TaskKind::SubspaceTopK => {
            let units = spec.layers / (k + 1);
            let mut weights = Vec::with_capacity(spec.layers);
            for _ in 0..units {
                let mut mul = EfficientLayerWeights::zeros(k);
                mul.alpha_q = 1.0;
                mul.alpha_k = 1.0;
                scaled_eye(&mut mul.wv_phi, k, k, k, 1.0);
                scaled_eye(&mut mul.wr_phi, k, k, k, -1.0);
                weights.push(mul);
                for i in (1..=k).rev() {
                    let mut ortho = EfficientLayerWeights::zeros(k);
                    ortho.wv_phi[[k + i - 1, k + i - 1]] = -1.0;
                    for j in (i + 1)..=k {
                        ortho.wq_phi[[k + j - 1, k + j - 1]] = 1.0;
                        ortho.wk_phi[[k + j - 1, k + j - 1]] = 1.0;
                    }
                    weights.push(ortho);
                }
            }
            Ok(weights)
        }
        other => Err(GflError::Unsupported(format!(
            "no constrained-engine form for {}",
            other.name()
        ))),
    }
}
