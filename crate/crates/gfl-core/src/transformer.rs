//! Linear-attention layer stacks over one-token-per-vertex states, plus the
//! constrained two-block engine that realizes the same dynamics with scalar
//! edge-block weights.
//!
//! A state is an h x n matrix whose rows split into named blocks; the
//! attention update is Z + WV Z (Z^T PQK Z) + WR Z, purely linear algebra,
//! no softmax.

use std::ops::Range;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{GflError, Result};
use crate::graph::IncidenceMatrix;
use crate::Mat;

/// Rows or block groups with norm below this pass through normalization
/// unscaled, so zero blocks never divide by zero.
const NORM_GUARD: f64 = 1e-15;

/// How the h rows of a state divide into blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLayout {
    /// [edge block (d rows); carry block (k rows); solution block (k rows)].
    /// The carry block holds demands or the running series term.
    Standard { d: usize, k: usize },
    /// [edge block (d rows); solution block (k rows)], solution rows kept
    /// unit-norm by the eig engine.
    Eig { d: usize, k: usize },
    /// [propagator (n rows); anchor (n rows); solution (n rows)], every
    /// block square.
    Fast { n: usize },
    /// One square block that is both state and solution.
    Single { n: usize },
}

impl BlockLayout {
    pub fn h(&self) -> usize {
        match *self {
            BlockLayout::Standard { d, k } => d + 2 * k,
            BlockLayout::Eig { d, k } => d + k,
            BlockLayout::Fast { n } => 3 * n,
            BlockLayout::Single { n } => n,
        }
    }

    /// Rows holding the running approximation of the target.
    pub fn solution_rows(&self) -> Range<usize> {
        match *self {
            BlockLayout::Standard { d, k } => (d + k)..(d + 2 * k),
            BlockLayout::Eig { d, k } => d..(d + k),
            BlockLayout::Fast { n } => (2 * n)..(3 * n),
            BlockLayout::Single { n } => 0..n,
        }
    }

    /// Named (name, start, end) spans, in row order.
    pub fn block_spans(&self) -> Vec<(&'static str, usize, usize)> {
        match *self {
            BlockLayout::Standard { d, k } => vec![
                ("edges", 0, d),
                ("carry", d, d + k),
                ("solution", d + k, d + 2 * k),
            ],
            BlockLayout::Eig { d, k } => {
                vec![("edges", 0, d), ("solution", d, d + k)]
            }
            BlockLayout::Fast { n } => vec![
                ("propagator", 0, n),
                ("anchor", n, 2 * n),
                ("solution", 2 * n, 3 * n),
            ],
            BlockLayout::Single { n } => vec![("solution", 0, n)],
        }
    }
}

/// State matrix plus the layout that names its rows. Columns are vertices.
#[derive(Debug, Clone)]
pub struct TransformerState {
    pub layout: BlockLayout,
    pub z: Mat,
}

impl TransformerState {
    pub fn new(layout: BlockLayout, z: Mat) -> Result<Self> {
        if z.nrows() != layout.h() {
            return Err(GflError::ShapeMismatch(format!(
                "state needs {} rows for this layout, got {}",
                layout.h(),
                z.nrows()
            )));
        }
        let square = match layout {
            BlockLayout::Fast { n } | BlockLayout::Single { n } => Some(n),
            _ => None,
        };
        if let Some(n) = square {
            if z.ncols() != n {
                return Err(GflError::ShapeMismatch(format!(
                    "square layout needs {} columns, got {}",
                    n,
                    z.ncols()
                )));
            }
        }
        Ok(TransformerState { layout, z })
    }

    /// [B^T; Psi^T; Phi0^T] on the standard layout.
    pub fn standard(b: &IncidenceMatrix, psi: &Mat, phi0: &Mat) -> Result<Self> {
        let (n, d) = (b.n(), b.d());
        let k = psi.ncols();
        if psi.nrows() != n || phi0.nrows() != n || phi0.ncols() != k {
            return Err(GflError::ShapeMismatch(format!(
                "standard state needs n x k demand and start blocks, got psi {}x{}, phi0 {}x{}, n = {n}",
                psi.nrows(),
                psi.ncols(),
                phi0.nrows(),
                phi0.ncols()
            )));
        }
        let mut z = Array2::zeros((d + 2 * k, n));
        z.slice_mut(s![0..d, ..]).assign(&b.as_mat().t());
        z.slice_mut(s![d..d + k, ..]).assign(&psi.t());
        z.slice_mut(s![d + k..d + 2 * k, ..]).assign(&phi0.t());
        TransformerState::new(BlockLayout::Standard { d, k }, z)
    }

    /// [B^T; Phi0^T] on the eig layout.
    pub fn eig(b: &IncidenceMatrix, phi0: &Mat) -> Result<Self> {
        let (n, d) = (b.n(), b.d());
        let k = phi0.ncols();
        if phi0.nrows() != n {
            return Err(GflError::ShapeMismatch(format!(
                "eig state needs an n x k start block, got {}x{} with n = {n}",
                phi0.nrows(),
                phi0.ncols()
            )));
        }
        let mut z = Array2::zeros((d + k, n));
        z.slice_mut(s![0..d, ..]).assign(&b.as_mat().t());
        z.slice_mut(s![d..d + k, ..]).assign(&phi0.t());
        TransformerState::new(BlockLayout::Eig { d, k }, z)
    }

    pub fn n_tokens(&self) -> usize {
        self.z.ncols()
    }

    /// The solution block, oriented as the target: n x k (columns are
    /// solution vectors) for standard/eig, n x n for the square layouts.
    pub fn solution(&self) -> Mat {
        let r = self.layout.solution_rows();
        let block = self.z.slice(s![r, ..]);
        match self.layout {
            BlockLayout::Standard { .. } | BlockLayout::Eig { .. } => block.t().to_owned(),
            BlockLayout::Fast { .. } | BlockLayout::Single { .. } => block.to_owned(),
        }
    }
}

/// Per-layer dense weights; PQK stores the already-multiplied query-key
/// product, the only form the dynamics depend on.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub wv: Mat,
    pub pqk: Mat,
    pub wr: Mat,
}

impl LayerWeights {
    pub fn zeros(h: usize) -> Self {
        LayerWeights {
            wv: Array2::zeros((h, h)),
            pqk: Array2::zeros((h, h)),
            wr: Array2::zeros((h, h)),
        }
    }
}

fn check_square(name: &str, m: &Mat, h: usize) -> Result<()> {
    if m.nrows() != h || m.ncols() != h {
        return Err(GflError::ShapeMismatch(format!(
            "{name} must be {h}x{h}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// WV Z (Z^T PQK Z).
pub fn attention(z: &Mat, w: &LayerWeights) -> Result<Mat> {
    let h = z.nrows();
    check_square("wv", &w.wv, h)?;
    check_square("pqk", &w.pqk, h)?;
    let kernel = z.t().dot(&w.pqk).dot(z);
    Ok(w.wv.dot(z).dot(&kernel))
}

fn ensure_finite(z: &Mat, layer: usize) -> Result<()> {
    if z.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GflError::NonFinite { layer })
    }
}

fn normalize_group(z: &mut Mat, rows: Range<usize>) {
    let norm = z
        .slice(s![rows.clone(), ..])
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm >= NORM_GUARD {
        z.slice_mut(s![rows, ..]).mapv_inplace(|x| x / norm);
    }
}

fn step(prev: &Mat, w: &LayerWeights) -> Result<Mat> {
    check_square("wr", &w.wr, prev.nrows())?;
    let mut next = attention(prev, w)?;
    next += prev;
    next += &w.wr.dot(prev);
    Ok(next)
}

/// Runs the stack and returns every state, input first (length L+1).
/// With `normalize_blocks` set (standard layout only), after each layer the
/// edge block and the combined carry+solution block are each divided by
/// their Frobenius norm.
pub fn forward(
    z0: &TransformerState,
    weights: &[LayerWeights],
    normalize_blocks: bool,
) -> Result<Vec<TransformerState>> {
    if normalize_blocks && !matches!(z0.layout, BlockLayout::Standard { .. }) {
        return Err(GflError::Unsupported(
            "block normalization is defined for the standard layout only".into(),
        ));
    }
    ensure_finite(&z0.z, 0)?;
    let mut states = Vec::with_capacity(weights.len() + 1);
    states.push(z0.clone());
    for (l, w) in weights.iter().enumerate() {
        let mut next = step(&states[l].z, w)?;
        if normalize_blocks {
            if let BlockLayout::Standard { d, k } = z0.layout {
                normalize_group(&mut next, 0..d);
                normalize_group(&mut next, d..d + 2 * k);
            }
        }
        ensure_finite(&next, l + 1)?;
        states.push(TransformerState { layout: z0.layout, z: next });
    }
    Ok(states)
}

/// As `forward` but on the eig layout: after each layer every solution row
/// is rescaled to unit Euclidean norm (zero rows pass through).
pub fn forward_eig(z0: &TransformerState, weights: &[LayerWeights]) -> Result<Vec<TransformerState>> {
    let BlockLayout::Eig { d, k } = z0.layout else {
        return Err(GflError::Unsupported(
            "row-normalized forward needs the eig layout".into(),
        ));
    };
    ensure_finite(&z0.z, 0)?;
    let mut states = Vec::with_capacity(weights.len() + 1);
    states.push(z0.clone());
    for (l, w) in weights.iter().enumerate() {
        let mut next = step(&states[l].z, w)?;
        for i in d..d + k {
            let norm = next.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm >= NORM_GUARD {
                next.row_mut(i).mapv_inplace(|x| x / norm);
            }
        }
        ensure_finite(&next, l + 1)?;
        states.push(TransformerState { layout: z0.layout, z: next });
    }
    Ok(states)
}

/// Weights for the constrained engine: scalars on the edge block, dense
/// 2k x 2k blocks on the carry+solution rows.
#[derive(Debug, Clone)]
pub struct EfficientLayerWeights {
    pub alpha_v: f64,
    pub alpha_q: f64,
    pub alpha_k: f64,
    pub alpha_r: f64,
    pub wv_phi: Mat,
    pub wr_phi: Mat,
    pub wq_phi: Mat,
    pub wk_phi: Mat,
}

impl EfficientLayerWeights {
    pub fn zeros(k: usize) -> Self {
        let m = 2 * k;
        EfficientLayerWeights {
            alpha_v: 0.0,
            alpha_q: 0.0,
            alpha_k: 0.0,
            alpha_r: 0.0,
            wv_phi: Array2::zeros((m, m)),
            wr_phi: Array2::zeros((m, m)),
            wq_phi: Array2::zeros((m, m)),
            wk_phi: Array2::zeros((m, m)),
        }
    }

    fn phi_dim(&self) -> Result<usize> {
        let m = self.wv_phi.nrows();
        for (name, mat) in [
            ("wv_phi", &self.wv_phi),
            ("wr_phi", &self.wr_phi),
            ("wq_phi", &self.wq_phi),
            ("wk_phi", &self.wk_phi),
        ] {
            check_square(name, mat, m)?;
        }
        Ok(m)
    }
}

/// Per-layer history of both blocks, input first (length L+1). The edge
/// block is stored transposed (d x n), the phi block is 2k x n.
#[derive(Debug, Clone)]
pub struct EfficientTrajectory {
    pub b: Vec<Mat>,
    pub phi: Vec<Mat>,
}

/// Constrained dynamics:
///   B_{l+1} = (1 + aR) B_l + aV B_l S_l
///   P_{l+1} = (I + WR) P_l + WV P_l S_l
/// with the shared token kernel S_l = aQ aK B_l^T B_l + P_l^T WQ^T WK P_l.
pub fn efficient_forward(
    b0: &Mat,
    phi0: &Mat,
    weights: &[EfficientLayerWeights],
) -> Result<EfficientTrajectory> {
    let n = b0.ncols();
    if phi0.ncols() != n {
        return Err(GflError::ShapeMismatch(format!(
            "edge and phi blocks must share token count, got {} and {}",
            n,
            phi0.ncols()
        )));
    }
    ensure_finite(b0, 0)?;
    ensure_finite(phi0, 0)?;
    let mut traj = EfficientTrajectory {
        b: vec![b0.clone()],
        phi: vec![phi0.clone()],
    };
    for (l, w) in weights.iter().enumerate() {
        let m = w.phi_dim()?;
        if m != phi0.nrows() {
            return Err(GflError::ShapeMismatch(format!(
                "layer {l} phi blocks are {m}x{m} but the phi state has {} rows",
                phi0.nrows()
            )));
        }
        let bt = &traj.b[l];
        let pt = &traj.phi[l];
        let mut kernel = bt.t().dot(bt);
        kernel.mapv_inplace(|x| x * w.alpha_q * w.alpha_k);
        kernel += &pt.t().dot(&w.wq_phi.t().dot(&w.wk_phi)).dot(pt);
        let mut next_b = bt.mapv(|x| x * (1.0 + w.alpha_r));
        if w.alpha_v != 0.0 {
            next_b += &bt.dot(&kernel).mapv(|x| x * w.alpha_v);
        }
        let mut next_p = pt.clone();
        next_p += &w.wr_phi.dot(pt);
        next_p += &w.wv_phi.dot(pt).dot(&kernel);
        ensure_finite(&next_b, l + 1)?;
        ensure_finite(&next_p, l + 1)?;
        traj.b.push(next_b);
        traj.phi.push(next_p);
    }
    Ok(traj)
}

/// Embeds constrained weights as full dense weights on the standard layout
/// with edge block size d: scalars become scaled identities on the edge
/// rows, phi blocks land on the carry+solution rows, and PQK gets the
/// multiplied query-key product.
pub fn expand_efficient(w: &EfficientLayerWeights, d: usize) -> Result<LayerWeights> {
    let m = w.phi_dim()?;
    let h = d + m;
    let mut full = LayerWeights::zeros(h);
    for i in 0..d {
        full.wv[[i, i]] = w.alpha_v;
        full.wr[[i, i]] = w.alpha_r;
        full.pqk[[i, i]] = w.alpha_q * w.alpha_k;
    }
    full.wv.slice_mut(s![d..h, d..h]).assign(&w.wv_phi);
    full.wr.slice_mut(s![d..h, d..h]).assign(&w.wr_phi);
    full.pqk
        .slice_mut(s![d..h, d..h])
        .assign(&w.wq_phi.t().dot(&w.wk_phi));
    Ok(full)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSpan {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleLayer {
    pub wv: Vec<Vec<f64>>,
    pub pqk: Vec<Vec<f64>>,
    pub wr: Vec<Vec<f64>>,
}

/// JSON form of a weight stack: a layout header naming the row blocks, then
/// one dense row-major matrix triple per layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightBundle {
    pub layout: Vec<BlockSpan>,
    pub layers: Vec<BundleLayer>,
}

fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_mat(rows: &[Vec<f64>], h: usize) -> Result<Mat> {
    if rows.len() != h || rows.iter().any(|r| r.len() != h) {
        return Err(GflError::ShapeMismatch(format!(
            "bundle matrix must be {h}x{h}"
        )));
    }
    let mut m = Array2::zeros((h, h));
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            m[[i, j]] = x;
        }
    }
    Ok(m)
}

pub fn bundle_weights(layout: &BlockLayout, weights: &[LayerWeights]) -> WeightBundle {
    WeightBundle {
        layout: layout
            .block_spans()
            .into_iter()
            .map(|(name, start, end)| BlockSpan {
                name: name.to_string(),
                start,
                end,
            })
            .collect(),
        layers: weights
            .iter()
            .map(|w| BundleLayer {
                wv: mat_to_rows(&w.wv),
                pqk: mat_to_rows(&w.pqk),
                wr: mat_to_rows(&w.wr),
            })
            .collect(),
    }
}

pub fn unbundle_weights(bundle: &WeightBundle) -> Result<Vec<LayerWeights>> {
    let h = bundle
        .layout
        .iter()
        .map(|s| s.end)
        .max()
        .ok_or_else(|| GflError::ShapeMismatch("bundle has no layout spans".into()))?;
    bundle
        .layers
        .iter()
        .map(|layer| {
            Ok(LayerWeights {
                wv: rows_to_mat(&layer.wv, h)?,
                pqk: rows_to_mat(&layer.pqk, h)?,
                wr: rows_to_mat(&layer.wr, h)?,
            })
        })
        .collect()
}
