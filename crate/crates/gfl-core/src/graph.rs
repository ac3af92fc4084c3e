//! Resistor-network graphs: oriented edges with positive resistances, the
//! resistance-scaled incidence matrix, the Laplacian built from it, and
//! seeded generators for the two graph families used throughout.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GflError, Result};
use crate::Mat;

/// Generator name recorded in run metadata so outputs are reproducible.
pub const PRNG_NAME: &str = "chacha8";

/// Connected graph on `n` vertices. Each edge is `(tail, head, resistance)`;
/// orientation follows list order and edge order is part of the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl Graph {
    /// Validates and builds. Rejects self-loops, nonpositive or non-finite
    /// resistances, out-of-range endpoints, and disconnected vertex sets.
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let g = Graph { n, edges };
        g.validate()?;
        Ok(g)
    }

    /// Edge count, written `d` everywhere.
    pub fn d(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GflError::InvalidGraph(format!(
                "need at least 2 vertices, got {}",
                self.n
            )));
        }
        for (j, &(tail, head, r)) in self.edges.iter().enumerate() {
            if tail >= self.n || head >= self.n {
                return Err(GflError::InvalidGraph(format!(
                    "edge {j}: endpoint out of range ({tail}, {head}) with n = {}",
                    self.n
                )));
            }
            if tail == head {
                return Err(GflError::InvalidGraph(format!("edge {j}: self-loop at {tail}")));
            }
            if !r.is_finite() || r <= 0.0 {
                return Err(GflError::InvalidGraph(format!(
                    "edge {j}: resistance must be positive and finite, got {r}"
                )));
            }
        }
        if !self.is_connected() {
            return Err(GflError::InvalidGraph("graph is not connected".into()));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for &(t, h, _) in &self.edges {
            adj[t].push(h);
            adj[h].push(t);
        }
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Scaled incidence matrix B: column j carries -1/sqrt(r_j) at the tail
    /// row and +1/sqrt(r_j) at the head row.
    pub fn incidence(&self) -> IncidenceMatrix {
        let mut b = Array2::zeros((self.n, self.edges.len()));
        for (j, &(tail, head, r)) in self.edges.iter().enumerate() {
            let w = 1.0 / r.sqrt();
            b[[tail, j]] = -w;
            b[[head, j]] = w;
        }
        IncidenceMatrix { mat: b }
    }

    pub fn laplacian(&self) -> Laplacian {
        self.incidence().laplacian()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses the JSON form `{"n": int, "edges": [[tail, head, r], ...]}`
    /// and validates every graph invariant.
    pub fn from_json(text: &str) -> Result<Self> {
        let g: Graph = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// n x d incidence matrix with orientation inherited from edge list order.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    mat: Mat,
}

impl IncidenceMatrix {
    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn d(&self) -> usize {
        self.mat.ncols()
    }

    /// L = B B^T. Symmetric PSD with L 1 = 0 by construction.
    pub fn laplacian(&self) -> Laplacian {
        Laplacian {
            mat: self.mat.dot(&self.mat.t()),
        }
    }
}

/// Graph Laplacian. For connected graphs the kernel is exactly span{1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    mat: Mat,
}

impl Laplacian {
    /// Wraps a precomputed symmetric PSD matrix.
    pub fn from_mat(mat: Mat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(GflError::ShapeMismatch(format!(
                "laplacian must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Laplacian { mat })
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    /// Eigendecomposition computed on demand; see `linalg::sym_eig`.
    pub fn spectrum(&self) -> Result<crate::linalg::SpectralDecomposition> {
        crate::linalg::sym_eig(&self.mat)
    }
}

/// Centering projector I - (1/n) 1 1^T, the identity on the Laplacian's range.
pub fn centering(n: usize) -> Mat {
    let mut m = Array2::from_elem((n, n), -1.0 / n as f64);
    for i in 0..n {
        m[[i, i]] += 1.0;
    }
    m
}

/// Demand vectors, one per column; `projected` records whether the columns
/// were projected onto the complement of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSet {
    pub psi: Mat,
    pub projected: bool,
}

impl DemandSet {
    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    pub fn k(&self) -> usize {
        self.psi.ncols()
    }

    /// Largest column norm, the `psi_norm` that enters the error bounds.
    pub fn max_column_norm(&self) -> f64 {
        (0..self.k())
            .map(|i| self.psi.column(i).dot(&self.psi.column(i)).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Complete graph on n vertices, edges in lexicographic (i, j) order with
/// i < j, resistances e^u with u iid uniform on [-2, 2].
pub fn generate_fc(n: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(GflError::InvalidGraph(format!("fc requires n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j, sample_resistance(&mut rng)));
        }
    }
    Graph::new(n, edges)
}

/// Circular-skip-link graph: the n-cycle plus chords (i, i+skip mod n), with
/// duplicate vertex pairs dropped. Resistances are sampled as in `generate_fc`.
pub fn generate_csl(n: usize, skip: usize, seed: u64) -> Result<Graph> {
    if n < 5 {
        return Err(GflError::InvalidGraph(format!("csl requires n >= 5, got {n}")));
    }
    if skip >= n {
        return Err(GflError::InvalidGraph(format!("skip {skip} must be < n = {n}")));
    }
    if skip < 2 {
        return Err(GflError::InvalidGraph(format!("skip {skip} must be >= 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for stride in [1usize, skip] {
        for i in 0..n {
            let j = (i + stride) % n;
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                pairs.push((i, j));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(i, j)| (i, j, sample_resistance(&mut rng)))
        .collect();
    Graph::new(n, edges)
}

fn sample_resistance<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(-2.0..=2.0);
    u.exp()
}

/// k columns drawn uniformly from the unit sphere (normalized Gaussians).
/// With `project` set, each column is centered to be orthogonal to 1 and
/// renormalized; degenerate draws are retried up to 100 times.
pub fn sample_demands(n: usize, k: usize, project: bool, seed: u64) -> Result<DemandSet> {
    if n < 2 || k < 1 {
        return Err(GflError::Constraint(format!(
            "demands require n >= 2 and k >= 1, got n = {n}, k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = Array2::zeros((n, k));
    for col in 0..k {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            if project {
                let mean = v.iter().sum::<f64>() / n as f64;
                for x in v.iter_mut() {
                    *x -= mean;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm >= 1e-12 {
                for (i, x) in v.into_iter().enumerate() {
                    psi[[i, col]] = x / norm;
                }
                break;
            }
            if attempts >= 100 {
                return Err(GflError::DegenerateDemand { attempts });
            }
        }
    }
    Ok(DemandSet { psi, projected: project })
}

/// The centering projector as a demand set (k = n), so the output block
/// approximates the whole target matrix rather than single solves.
pub fn identity_demands(n: usize) -> DemandSet {
    DemandSet {
        psi: centering(n),
        projected: true,
    }
}
