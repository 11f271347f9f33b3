//! Communication graphs and gossip mixing matrices.
//!
//! A [`MixingMatrix`] is symmetric, doubly stochastic, and carries its sorted
//! spectrum so that `beta = max(|λ_2|, |λ_n|)` is available without
//! recomputation.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of Erdős–Rényi draws before giving up on connectivity.
pub const MAX_RESAMPLES: usize = 1000;

const ROW_SUM_TOL: f64 = 1e-12;
const UNIT_EIGEN_TOL: f64 = 1e-9;

/// Undirected, connected, simple graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Duplicate pairs collapse; self
    /// loops, out-of-range endpoints and disconnected results are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::invalid(format!("self-loop at node {i}")));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        if component_count(&adjacency) != 1 {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(Graph { n, adjacency })
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Cycle on `n` nodes; `n = 2` degenerates to a single edge.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Self::path(n);
        }
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// `L = diag(deg) - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            l[(i, i)] = nbrs.len() as f64;
            for &j in nbrs {
                l[(i, j)] = -1.0;
            }
        }
        l
    }

    pub fn laplacian_max_eigenvalue(&self) -> f64 {
        sorted_symmetric_eigenvalues(&self.laplacian())[0]
    }

    /// Edge-list text: `n=<count>` header, then one `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::EdgeList { line: 1, reason: "missing header".into() })?;
        let n = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::EdgeList { line: hline, reason: format!("expected `n=<count>`, got `{header}`") })?;
        let mut edges = Vec::new();
        for (line, l) in lines {
            let mut it = l.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => return Err(Error::EdgeList { line, reason: format!("expected `i j`, got `{l}`") }),
            }
        }
        Self::from_edges(n, edges)
    }
}

fn component_count(adjacency: &[Vec<usize>]) -> usize {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    components
}

/// Samples G(n, p_c), redrawing the whole graph until it is connected.
pub fn build_erdos_renyi<R: Rng + ?Sized>(n: usize, p_c: f64, rng: &mut R) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid(format!("Erdős–Rényi graph needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&p_c) {
        return Err(Error::invalid(format!("edge probability {p_c} outside [0, 1]")));
    }
    for _ in 0..MAX_RESAMPLES {
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p_c {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        if component_count(&adjacency) == 1 {
            for nbrs in &mut adjacency {
                nbrs.sort_unstable();
            }
            return Ok(Graph { n, adjacency });
        }
    }
    Err(Error::ResampleLimit { n, p_c, attempts: MAX_RESAMPLES })
}

/// Eigenvalues of a symmetric matrix, descending. Ties keep solver order.
pub(crate) fn sorted_symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..).collect();
    idx.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    idx.into_iter().map(|(v, _)| v).collect()
}

fn beta_of(eigenvalues: &[f64]) -> f64 {
    match eigenvalues.len() {
        0 | 1 => 0.0,
        n => eigenvalues[1].abs().max(eigenvalues[n - 1].abs()),
    }
}

/// Symmetric doubly stochastic gossip weights with cached spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    beta: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary matrix after checking every mixing invariant.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let report = validate_mixing(&weights);
        if let Some(failed) = report.checks.iter().find(|c| !c.passed) {
            return Err(Error::invalid(format!("not a valid mixing matrix: {} ({})", failed.name, failed.detail)));
        }
        Ok(Self::with_spectrum(weights))
    }

    fn with_spectrum(weights: DMatrix<f64>) -> Self {
        let eigenvalues = sorted_symmetric_eigenvalues(&weights);
        let beta = beta_of(&eigenvalues);
        MixingMatrix { weights, eigenvalues, beta }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// λ_1 ≥ … ≥ λ_n.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spectral_gap(&self) -> f64 {
        1.0 - self.beta
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty matrix")
    }

    /// Largest `eps` for which `λ_i(W_eps) = 1 - eps + eps·λ_i(W)` keeps its order
    /// in absolute value, i.e. `beta_eps = 1 - eps(1 - λ_2)`.
    pub fn lazy_eps_limit(&self) -> f64 {
        1.0 / (1.0 - self.lambda_min())
    }

    /// Closed-form `beta` of the lazy matrix, when `eps` is in the range where it holds.
    pub fn lazy_beta(&self, eps: f64) -> Option<f64> {
        if self.n() < 2 || eps > self.lazy_eps_limit() {
            return None;
        }
        Some(1.0 - eps * (1.0 - self.eigenvalues[1]))
    }

    /// Off-diagonal nonzero pattern matches the graph.
    pub fn conforms_to(&self, g: &Graph) -> bool {
        self.n() == g.n()
            && (0..g.n()).all(|i| (0..g.n()).all(|j| i == j || g.has_edge(i, j) || self.weights[(i, j)] == 0.0))
    }
}

/// `W = I - L/kappa`. Requires `kappa > λ_max(L)/2`.
pub fn laplacian_mixing(g: &Graph, kappa: f64) -> Result<MixingMatrix> {
    let half = g.laplacian_max_eigenvalue() / 2.0;
    if !(kappa > half) {
        return Err(Error::KappaTooSmall { kappa, half_lambda_max: half });
    }
    let l = g.laplacian();
    let mut w = DMatrix::identity(g.n(), g.n()) - l / kappa;
    // Force exact symmetry and zero pattern; the arithmetic above already gives it.
    for i in 0..g.n() {
        for j in 0..i {
            w[(i, j)] = w[(j, i)];
        }
    }
    MixingMatrix::new(w)
}

/// `(1 + margin)·λ_max(L)/2`.
pub fn default_kappa(g: &Graph, margin: f64) -> f64 {
    (1.0 + margin) * g.laplacian_max_eigenvalue() / 2.0
}

pub const DEFAULT_KAPPA_MARGIN: f64 = 0.2;

/// `W_eps = (1 - eps)I + eps·W`.
pub fn lazy_mixing(w: &MixingMatrix, eps: f64) -> Result<MixingMatrix> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("lazy mixing eps={eps} outside (0, 1]")));
    }
    let n = w.n();
    let lazy = DMatrix::identity(n, n) * (1.0 - eps) + w.weights() * eps;
    Ok(MixingMatrix::with_spectrum(lazy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub beta: f64,
    pub spectral_gap: f64,
    pub checks: Vec<Check>,
}

impl SpectralReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Checks the mixing-matrix invariants on any square matrix. Eigenvalues are
/// taken from the symmetric part, so they are meaningful only when the
/// symmetry check passes.
pub fn validate_mixing(w: &DMatrix<f64>) -> SpectralReport {
    let n = w.nrows();
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check { name: name.to_string(), passed, detail })
    };

    push("square", w.ncols() == n, format!("{}x{}", n, w.ncols()));
    if w.ncols() != n || n == 0 {
        return SpectralReport { n, eigenvalues: vec![], beta: f64::NAN, spectral_gap: f64::NAN, checks };
    }

    // Self-weights 1 - d_i/κ go negative whenever κ < d_i, which the
    // κ > λ_max(L)/2 rule allows; only neighbor weights must be nonnegative.
    let min_off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| w[(i, j)])
        .fold(f64::INFINITY, f64::min);
    let min_diag = (0..n).map(|i| w[(i, i)]).fold(f64::INFINITY, f64::min);
    push(
        "offdiag_nonnegative",
        n < 2 || min_off >= 0.0,
        format!("min off-diagonal {min_off:e}, min self-weight {min_diag:e}"),
    );

    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (w[(i, j)] - w[(j, i)]).abs())
        .fold(0.0, f64::max);
    push("symmetric", asym == 0.0, format!("max |w_ij - w_ji| = {asym:e}"));

    let row_err = (0..n).map(|i| (w.row(i).sum() - 1.0).abs()).fold(0.0, f64::max);
    push("row_sums", row_err <= ROW_SUM_TOL, format!("max |row sum - 1| = {row_err:e}"));

    let sym = (w + w.transpose()) * 0.5;
    let eigenvalues = sorted_symmetric_eigenvalues(&sym);
    let unit = eigenvalues.iter().filter(|&&l| (l - 1.0).abs() <= UNIT_EIGEN_TOL).count();
    push("unit_eigenvalue_simple", unit == 1, format!("eigenvalue-1 multiplicity {unit}"));

    let lambda_1 = eigenvalues[0];
    push("lambda_1_is_one", (lambda_1 - 1.0).abs() <= UNIT_EIGEN_TOL, format!("lambda_1 = {lambda_1}"));

    let lambda_n = eigenvalues[n - 1];
    push("lambda_n_above_minus_one", lambda_n > -1.0, format!("lambda_n = {lambda_n}"));

    let beta = beta_of(&eigenvalues);
    push("beta_below_one", beta < 1.0 - UNIT_EIGEN_TOL, format!("beta = {beta}"));

    SpectralReport { n, eigenvalues, beta, spectral_gap: 1.0 - beta, checks }
}
