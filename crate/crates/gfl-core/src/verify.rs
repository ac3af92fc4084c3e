//! Error measurement against exact oracles, closed-form error bounds with
//! per-layer applicability gating, loss metrics, and the edge-permutation
//! equivariance checker.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::constructions::{
    self, SubspaceMode, TaskKind, TaskSpec,
};
use crate::error::{GflError, Result};
use crate::graph::{DemandSet, Graph, PRNG_NAME};
use crate::linalg::{max_column_norm_diff, spectral_norm, sym_eig, SpectralDecomposition};
use crate::targets;
use crate::transformer::{
    efficient_forward, forward, forward_eig, EfficientLayerWeights, TransformerState,
};
use crate::Mat;

/// Multiplier on bounds when deciding satisfaction; absorbs float round-off
/// without masking real violations.
pub const BOUND_SLACK: f64 = 1e-6;
/// Relative slack on bound preconditions (mirrors the construction side).
const PRE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Full,
    Efficient,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Full => "full",
            Engine::Efficient => "efficient",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = GflError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Engine::Full),
            "efficient" => Ok(Engine::Efficient),
            other => Err(GflError::Constraint(format!("unknown engine: {other}"))),
        }
    }
}

/// A bound is either a number or explicitly not claimed at this layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundValue {
    Applicable(f64),
    NotApplicable,
}

impl BoundValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            BoundValue::Applicable(v) => Some(*v),
            BoundValue::NotApplicable => None,
        }
    }
}

/// Closed-form error bound for `task` at layer `l`, or NotApplicable when
/// the layer or parameters fall outside the statement's preconditions.
/// Vector-target bounds scale with `psi_norm`; operator-norm bounds ignore
/// it. The inverse-square-root bound uses the hint the construction was
/// built with, falling back to `lambda_max`.
pub fn bound(task: &TaskSpec, lambda_min: f64, lambda_max: f64, psi_norm: f64, l: usize) -> BoundValue {
    use BoundValue::{Applicable, NotApplicable};
    if !(lambda_min > 0.0) || !(lambda_max >= lambda_min) {
        return NotApplicable;
    }
    let lf = l as f64;
    match task.kind {
        TaskKind::ElectricGd => match task.delta {
            Some(delta) if l >= 1 && delta * lambda_max <= 1.0 + PRE_TOL => {
                Applicable((-delta * lf * lambda_min / 2.0).exp() / lambda_min.sqrt() * psi_norm)
            }
            _ => NotApplicable,
        },
        TaskKind::SqrtSeries => {
            let hint = task.lambda_max_hint.unwrap_or(lambda_max);
            if l >= 1 && hint >= lambda_max * (1.0 - PRE_TOL) && hint > 0.0 {
                let delta = 1.0 / hint;
                Applicable(
                    (-lf * delta * lambda_min).exp() / (lambda_min * (lf * delta).sqrt())
                        * psi_norm,
                )
            } else {
                NotApplicable
            }
        }
        TaskKind::HeatSeries => match task.temp {
            Some(s) if lf + PRE_TOL >= 8.0 * s * lambda_max => {
                Applicable(2f64.powf(-lf + 8.0 * s * lambda_max + 1.0) * psi_norm)
            }
            _ => NotApplicable,
        },
        TaskKind::ElectricFast => match task.delta {
            Some(delta) if delta * lambda_max <= 1.0 + PRE_TOL => {
                Applicable((-delta * 2f64.powi(l as i32) * lambda_min).exp() / lambda_min)
            }
            _ => NotApplicable,
        },
        TaskKind::HeatFast => match task.temp {
            Some(s)
                if l == task.layers
                    && s * lambda_max <= 3f64.powi(task.layers as i32) * (1.0 + PRE_TOL) =>
            {
                Applicable(3f64.powi(1 - l as i32) * s * s * lambda_max * lambda_max)
            }
            _ => NotApplicable,
        },
        TaskKind::SubspaceTopK | TaskKind::SubspaceBottomK => NotApplicable,
    }
}

/// Scale-blind solution mismatch: mean over columns of the squared distance
/// between direction vectors.
pub fn loss_u(predictions: &Mat, targets: &Mat) -> Result<f64> {
    if predictions.dim() != targets.dim() {
        return Err(GflError::ShapeMismatch(format!(
            "loss needs matching shapes, got {:?} and {:?}",
            predictions.dim(),
            targets.dim()
        )));
    }
    let k = predictions.ncols();
    if k == 0 {
        return Err(GflError::ShapeMismatch("loss needs at least one column".into()));
    }
    let mut total = 0.0;
    for j in 0..k {
        let p = predictions.column(j);
        let t = targets.column(j);
        let pn = p.dot(&p).sqrt();
        let tn = t.dot(&t).sqrt();
        if pn == 0.0 || tn == 0.0 {
            return Err(GflError::Constraint(format!(
                "loss undefined for zero column {j}"
            )));
        }
        let mut acc = 0.0;
        for (a, b) in p.iter().zip(t.iter()) {
            let diff = a / pn - b / tn;
            acc += diff * diff;
        }
        total += acc;
    }
    Ok(total / k as f64)
}

/// Per-column squared distance to the oracle eigenvector, minimized over
/// the sign flip. Columns are expected unit-norm.
pub fn loss_eig(phi: &Mat, eigvecs: &Mat) -> Result<Vec<f64>> {
    if phi.dim() != eigvecs.dim() {
        return Err(GflError::ShapeMismatch(format!(
            "eigenvector loss needs matching shapes, got {:?} and {:?}",
            phi.dim(),
            eigvecs.dim()
        )));
    }
    let mut out = Vec::with_capacity(phi.ncols());
    for j in 0..phi.ncols() {
        let mut minus = 0.0;
        let mut plus = 0.0;
        for (a, b) in phi.column(j).iter().zip(eigvecs.column(j).iter()) {
            minus += (a - b) * (a - b);
            plus += (a + b) * (a + b);
        }
        out.push(minus.min(plus));
    }
    Ok(out)
}

/// Mean of `loss_eig` over the first k columns.
pub fn loss_eig_avg(phi: &Mat, eigvecs: &Mat) -> Result<f64> {
    let losses = loss_eig(phi, eigvecs)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: usize,
    pub error: f64,
    pub bound: Option<f64>,
    pub satisfied: Option<bool>,
}

/// Full record of one task run: resolved configuration, spectrum, and the
/// per-layer error/bound table. Serializes deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub task: TaskSpec,
    pub engine: Engine,
    pub prng: String,
    pub graph_seed: Option<u64>,
    pub trial: Option<usize>,
    pub n: usize,
    pub d: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub psi_norm: f64,
    pub projected_demands: bool,
    pub layers: Vec<LayerRow>,
}

impl ErrorReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Four-column table: layer,error,bound,satisfied with "na" for layers
    /// where no bound is claimed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,error,bound,satisfied\n");
        for row in &self.layers {
            let bound = row
                .bound
                .map(|b| b.to_string())
                .unwrap_or_else(|| "na".into());
            let sat = row
                .satisfied
                .map(|s| s.to_string())
                .unwrap_or_else(|| "na".into());
            out.push_str(&format!("{},{},{},{}\n", row.layer, row.error, bound, sat));
        }
        out
    }

    /// True when every layer with a claimed bound satisfies it.
    pub fn all_applicable_satisfied(&self) -> bool {
        self.layers
            .iter()
            .all(|r| r.satisfied.unwrap_or(true))
    }

    /// Largest error/bound ratio over layers with claimed bounds.
    pub fn worst_margin(&self) -> Option<f64> {
        self.layers
            .iter()
            .filter_map(|r| r.bound.map(|b| r.error / b))
            .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
    }
}

/// Fills spectrum-derived defaults: the inverse-square-root hint and the
/// electric step become oracle values, bottom-mode mu becomes lambda_max.
/// Temperatures have no natural default and stay as given.
fn resolve_params(task: &TaskSpec, lambda_max: f64) -> TaskSpec {
    let mut resolved = task.clone();
    match resolved.kind {
        TaskKind::SqrtSeries if resolved.lambda_max_hint.is_none() => {
            resolved.lambda_max_hint = Some(lambda_max);
        }
        TaskKind::ElectricGd | TaskKind::ElectricFast if resolved.delta.is_none() => {
            resolved.delta = Some(1.0 / lambda_max);
        }
        TaskKind::SubspaceBottomK if resolved.mu.is_none() => {
            resolved.mu = Some(lambda_max);
        }
        _ => {}
    }
    resolved
}

fn hard_spectral_checks(task: &TaskSpec, lambda_max: f64) -> Result<()> {
    // the heat-series depth condition gates its bound rather than the run;
    // everything else breaks the construction outright when violated
    match task.kind {
        TaskKind::ElectricGd | TaskKind::ElectricFast => {
            let delta = task.delta.unwrap();
            if delta * lambda_max > 1.0 + PRE_TOL {
                return Err(GflError::Constraint(format!(
                    "delta * lambda_max = {} exceeds 1",
                    delta * lambda_max
                )));
            }
        }
        TaskKind::SqrtSeries => {
            let hint = task.lambda_max_hint.unwrap();
            if hint < lambda_max * (1.0 - PRE_TOL) {
                return Err(GflError::Constraint(format!(
                    "lambda_max_hint = {hint} is below the actual lambda_max = {lambda_max}; the series diverges"
                )));
            }
        }
        TaskKind::HeatFast => {
            let s = task.temp.unwrap();
            let cap = 3f64.powi(task.layers as i32);
            if s * lambda_max > cap * (1.0 + PRE_TOL) {
                return Err(GflError::Constraint(format!(
                    "temp * lambda_max = {} exceeds 3^layers = {cap}",
                    s * lambda_max
                )));
            }
        }
        TaskKind::SubspaceBottomK => {
            let mu = task.mu.unwrap();
            if mu * (1.0 + PRE_TOL) < lambda_max {
                return Err(GflError::Constraint(format!(
                    "mu = {mu} must dominate lambda_max = {lambda_max}"
                )));
            }
        }
        TaskKind::HeatSeries | TaskKind::SubspaceTopK => {}
    }
    Ok(())
}

/// Per-layer solution blocks as n x k (or n x n) matrices.
fn full_engine_solutions(
    g: &Graph,
    psi: &Mat,
    weights: &[crate::transformer::LayerWeights],
) -> Result<Vec<Mat>> {
    let phi0 = Array2::zeros(psi.dim());
    let z0 = TransformerState::standard(&g.incidence(), psi, &phi0)?;
    let states = forward(&z0, weights, false)?;
    Ok(states.iter().map(|st| st.solution()).collect())
}

fn efficient_engine_solutions(
    g: &Graph,
    task: &TaskSpec,
    psi: &Mat,
) -> Result<Vec<Mat>> {
    let eff = constructions::efficient_config(task)?;
    let k = task.k;
    let b0 = g.incidence().as_mat().t().to_owned();
    let mut p0 = Array2::zeros((2 * k, g.n));
    p0.slice_mut(s![0..k, ..]).assign(&psi.t());
    let traj = efficient_forward(&b0, &p0, &eff)?;
    Ok(traj
        .phi
        .iter()
        .map(|p| p.slice(s![k..2 * k, ..]).t().to_owned())
        .collect())
}

/// Builds the construction for `task`, drives the requested engine on `g`,
/// and scores every layer against the exact oracle target. Vector-target
/// errors are the worst per-column Euclidean distance; square-state tasks
/// are scored in operator norm; subspace tasks report mean sign-invariant
/// eigenvector loss and claim no bound.
pub fn run_task(g: &Graph, task: &TaskSpec, demands: &DemandSet, engine: Engine) -> Result<ErrorReport> {
    let lap = g.laplacian();
    let dec = sym_eig(lap.as_mat())?;
    let lambda_max = *dec.eigenvalues.last().unwrap();
    let lambda_min = dec.eigenvalues[1];
    if !(lambda_min > lambda_max * 1e-10) {
        return Err(GflError::InvalidGraph(
            "spectrum has no gap above zero; graph appears disconnected".into(),
        ));
    }
    let task = resolve_params(task, lambda_max);
    task.validate()?;
    hard_spectral_checks(&task, lambda_max)?;

    if engine == Engine::Efficient
        && !matches!(
            task.kind,
            TaskKind::ElectricGd | TaskKind::SqrtSeries | TaskKind::HeatSeries
        )
    {
        return Err(GflError::Unsupported(format!(
            "the constrained engine cannot run {}: square-state tasks need the full state and subspace tasks need row normalization",
            task.kind.name()
        )));
    }

    let uses_demands = !task.kind.is_fast();
    if uses_demands && demands.k() != task.k {
        return Err(GflError::ShapeMismatch(format!(
            "task wants k = {} demand columns, got {}",
            task.k,
            demands.k()
        )));
    }
    if uses_demands && demands.n() != g.n {
        return Err(GflError::ShapeMismatch(format!(
            "demands are over {} vertices but the graph has {}",
            demands.n(),
            g.n
        )));
    }

    let d = g.d();
    let k = task.k;
    let psi_norm = if uses_demands { demands.max_column_norm() } else { 0.0 };

    // per-layer (error, in the task's own norm)
    let errors: Vec<f64> = match task.kind {
        TaskKind::ElectricGd | TaskKind::SqrtSeries | TaskKind::HeatSeries => {
            let weights = match task.kind {
                TaskKind::ElectricGd => {
                    constructions::electric_gd_weights(d, k, task.delta.unwrap(), task.layers)?
                }
                TaskKind::SqrtSeries => constructions::sqrt_series_weights(
                    d,
                    k,
                    task.lambda_max_hint.unwrap(),
                    task.layers,
                )?,
                TaskKind::HeatSeries => {
                    constructions::heat_series_weights(d, k, task.temp.unwrap(), task.layers)?
                }
                _ => unreachable!(),
            };
            let target = match task.kind {
                TaskKind::ElectricGd => targets::pinv_psd_from(&dec)?.dot(&demands.psi),
                TaskKind::SqrtSeries => targets::sqrt_pinv_from(&dec)?.dot(&demands.psi),
                TaskKind::HeatSeries => {
                    targets::heat_kernel_from(&dec, task.temp.unwrap())?.dot(&demands.psi)
                }
                _ => unreachable!(),
            };
            let solutions = match engine {
                Engine::Full => full_engine_solutions(g, &demands.psi, &weights)?,
                Engine::Efficient => efficient_engine_solutions(g, &task, &demands.psi)?,
            };
            solutions
                .iter()
                .map(|sol| max_column_norm_diff(sol, &target))
                .collect()
        }
        TaskKind::ElectricFast => {
            let (z0, weights) =
                constructions::electric_fast_build(&lap, task.delta.unwrap(), task.layers)?;
            let target = targets::pinv_psd_from(&dec)?;
            let states = forward(&z0, &weights, false)?;
            states
                .iter()
                .map(|st| spectral_norm(&(st.solution() - &target)))
                .collect::<Result<Vec<f64>>>()?
        }
        TaskKind::HeatFast => {
            let (z0, weights) =
                constructions::heat_fast_build(&lap, task.temp.unwrap(), task.layers)?;
            let target = targets::heat_kernel_from(&dec, task.temp.unwrap())?;
            let states = forward(&z0, &weights, false)?;
            states
                .iter()
                .map(|st| spectral_norm(&(st.solution() - &target)))
                .collect::<Result<Vec<f64>>>()?
        }
        TaskKind::SubspaceTopK | TaskKind::SubspaceBottomK => {
            let mode = match task.kind {
                TaskKind::SubspaceTopK => SubspaceMode::Top,
                _ => SubspaceMode::Bottom { mu: task.mu.unwrap() },
            };
            let weights = constructions::subspace_weights(d, k, task.layers, mode)?;
            let phi0 = crate::linalg::qr_ortho(&demands.psi)?;
            let z0 = TransformerState::eig(&g.incidence(), &phi0)?;
            let states = forward_eig(&z0, &weights)?;
            let oracle = subspace_oracle(&dec, k, task.kind)?;
            states
                .iter()
                .map(|st| loss_eig_avg(&st.solution(), &oracle))
                .collect::<Result<Vec<f64>>>()?
        }
    };

    let layers = errors
        .iter()
        .enumerate()
        .map(|(l, &error)| {
            let b = bound(&task, lambda_min, lambda_max, psi_norm, l);
            let (bound_val, satisfied) = match b {
                BoundValue::Applicable(v) => (Some(v), Some(error <= v * (1.0 + BOUND_SLACK))),
                BoundValue::NotApplicable => (None, None),
            };
            LayerRow { layer: l, error, bound: bound_val, satisfied }
        })
        .collect();

    Ok(ErrorReport {
        task,
        engine,
        prng: PRNG_NAME.to_string(),
        graph_seed: None,
        trial: None,
        n: g.n,
        d,
        lambda_min,
        lambda_max,
        psi_norm,
        projected_demands: uses_demands && demands.projected,
        layers,
    })
}

/// Oracle eigenvector columns ordered to pair with the network's solution
/// columns: the last solution column chases the dominant mode, so top mode
/// pairs ascending-eigenvalue order over the top k, and bottom mode pairs
/// descending order over the bottom k (null direction included).
pub fn subspace_oracle(dec: &SpectralDecomposition, k: usize, kind: TaskKind) -> Result<Mat> {
    let n = dec.n();
    if k > n {
        return Err(GflError::Constraint(format!("k = {k} exceeds n = {n}")));
    }
    let mut oracle = Array2::zeros((n, k));
    match kind {
        TaskKind::SubspaceTopK => {
            for c in 0..k {
                oracle
                    .column_mut(c)
                    .assign(&dec.eigenvectors.column(n - k + c));
            }
        }
        TaskKind::SubspaceBottomK => {
            for c in 0..k {
                oracle
                    .column_mut(c)
                    .assign(&dec.eigenvectors.column(k - 1 - c));
            }
        }
        other => {
            return Err(GflError::Constraint(format!(
                "{} is not a subspace task",
                other.name()
            )))
        }
    }
    Ok(oracle)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceVerdict {
    pub pass: bool,
    pub first_violation: Option<usize>,
    pub worst: f64,
}

/// Runs the constrained engine twice, once with edge rows permuted, and
/// checks that the edge trajectory permutes identically while the phi
/// trajectory does not move at all (tolerance 1e-10).
pub fn check_equivariance(
    g: &Graph,
    config: &[EfficientLayerWeights],
    edge_perm: &[usize],
    phi0: &Mat,
) -> Result<EquivarianceVerdict> {
    let d = g.d();
    if edge_perm.len() != d {
        return Err(GflError::Constraint(format!(
            "permutation covers {} edges but the graph has {d}",
            edge_perm.len()
        )));
    }
    let mut seen = vec![false; d];
    for &p in edge_perm {
        if p >= d || seen[p] {
            return Err(GflError::Constraint("not a valid edge permutation".into()));
        }
        seen[p] = true;
    }

    let b0 = g.incidence().as_mat().t().to_owned();
    let mut b0_perm = Array2::zeros((d, g.n));
    for (i, &p) in edge_perm.iter().enumerate() {
        b0_perm.row_mut(i).assign(&b0.row(p));
    }
    let base = efficient_forward(&b0, phi0, config)?;
    let perm = efficient_forward(&b0_perm, phi0, config)?;

    const TOL: f64 = 1e-10;
    let mut worst = 0.0f64;
    let mut first_violation = None;
    for l in 0..base.b.len() {
        let mut layer_worst = 0.0f64;
        for (i, &p) in edge_perm.iter().enumerate() {
            for j in 0..g.n {
                layer_worst = layer_worst.max((perm.b[l][[i, j]] - base.b[l][[p, j]]).abs());
            }
        }
        layer_worst = layer_worst.max(crate::linalg::max_abs_diff(&perm.phi[l], &base.phi[l]));
        worst = worst.max(layer_worst);
        if layer_worst > TOL && first_violation.is_none() {
            first_violation = Some(l);
        }
    }
    Ok(EquivarianceVerdict {
        pass: first_violation.is_none(),
        first_violation,
        worst,
    })
}
