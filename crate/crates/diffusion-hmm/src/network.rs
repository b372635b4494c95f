//! Graph topologies, doubly-stochastic combination matrices, spectral
//! statistics, and the low-rank factorization used by the reduced
//! density-evolution recursion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Undirected communication graph on `K` agents. Self-loops are allowed
/// and at least one is required for primitivity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    agents: usize,
    adjacency: Vec<Vec<bool>>,
}

impl Graph {
    pub fn new(agents: usize) -> Result<Self> {
        if agents == 0 {
            return Err(Error::InvalidGraph("need at least one agent".into()));
        }
        Ok(Self {
            agents,
            adjacency: vec![vec![false; agents]; agents],
        })
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u >= self.agents || v >= self.agents {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) out of range for {} agents",
                self.agents
            )));
        }
        self.adjacency[u][v] = true;
        self.adjacency[v][u] = true;
        Ok(())
    }

    /// Parses an edge list, one `u v` pair per line (0-indexed, `u u` for
    /// a self-loop). Blank lines and `#` comments are skipped.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_node = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| {
                    Error::InvalidGraph(format!("line {}: expected 'u v'", lineno + 1))
                })?
                .parse()
                .map_err(|_| Error::InvalidGraph(format!("line {}: expected integers", lineno + 1)))
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::InvalidGraph(format!(
                    "line {}: trailing tokens",
                    lineno + 1
                )));
            }
            max_node = max_node.max(u).max(v);
            edges.push((u, v));
        }
        if edges.is_empty() {
            return Err(Error::InvalidGraph("edge list is empty".into()));
        }
        let mut graph = Self::new(max_node + 1)?;
        for (u, v) in edges {
            graph.add_edge(u, v)?;
        }
        Ok(graph)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for u in 0..self.agents {
            for v in u..self.agents {
                if self.adjacency[u][v] {
                    out.push_str(&format!("{u} {v}\n"));
                }
            }
        }
        out
    }

    /// Complete graph with self-loops on every node.
    pub fn complete(agents: usize) -> Result<Self> {
        let mut g = Self::new(agents)?;
        for u in 0..agents {
            for v in u..agents {
                g.add_edge(u, v)?;
            }
        }
        Ok(g)
    }

    /// Ring with self-loops on every node.
    pub fn ring(agents: usize) -> Result<Self> {
        let mut g = Self::new(agents)?;
        for u in 0..agents {
            g.add_edge(u, u)?;
            g.add_edge(u, (u + 1) % agents)?;
        }
        Ok(g)
    }

    pub fn agent_count(&self) -> usize {
        self.agents
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u][v]
    }

    /// Undirected edge list with `u <= v`, including self-loops.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for u in 0..self.agents {
            for v in u..self.agents {
                if self.adjacency[u][v] {
                    edges.push((u, v));
                }
            }
        }
        edges
    }

    /// Neighbor count excluding the self-loop.
    pub fn degree(&self, u: usize) -> usize {
        (0..self.agents)
            .filter(|&v| v != u && self.adjacency[u][v])
            .count()
    }

    pub fn has_self_loop(&self, u: usize) -> bool {
        self.adjacency[u][u]
    }

    /// Connected components by index, ignoring self-loops.
    fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.agents];
        let mut next = 0;
        for start in 0..self.agents {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(u) = stack.pop() {
                for v in 0..self.agents {
                    if v != u && self.adjacency[u][v] && comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// Result of [`connectivity_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub connected: bool,
    pub has_self_loop: bool,
    /// Component index per agent; all equal when connected.
    pub components: Vec<usize>,
}

impl ConnectivityReport {
    /// Connected plus at least one self-loop, i.e. the combination matrix
    /// built on this graph is primitive.
    pub fn is_strong(&self) -> bool {
        self.connected && self.has_self_loop
    }
}

/// Checks connectivity and the self-loop requirement.
pub fn connectivity_check(graph: &Graph) -> ConnectivityReport {
    let components = graph.components();
    let connected = components.iter().all(|&c| c == 0);
    let has_self_loop = (0..graph.agent_count()).any(|u| graph.has_self_loop(u));
    ConnectivityReport {
        connected,
        has_self_loop,
        components,
    }
}

/// `K x K` doubly-stochastic symmetric weight matrix respecting a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    weights: DMatrix<f64>,
}

impl CombinationMatrix {
    /// Validates double stochasticity, symmetry, and non-negativity.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let k = weights.nrows();
        if k == 0 || weights.ncols() != k {
            return Err(Error::InvalidCombination("matrix must be square".into()));
        }
        for i in 0..k {
            for j in 0..k {
                let v = weights[(i, j)];
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::InvalidCombination(format!(
                        "entry ({i}, {j}) = {v} must be non-negative"
                    )));
                }
                if weights[(i, j)] != weights[(j, i)] {
                    return Err(Error::InvalidCombination("matrix must be symmetric".into()));
                }
            }
            let row_sum: f64 = weights.row(i).iter().sum();
            if (row_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidCombination(format!(
                    "row {i} sums to {row_sum}, expected 1"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidCombination("matrix must be square".into()));
        }
        Self::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    /// Uniform `1/K` weights (fully-connected averaging).
    pub fn uniform(agents: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(agents, agents, 1.0 / agents as f64))
    }

    pub fn agent_count(&self) -> usize {
        self.weights.nrows()
    }

    /// `a_{lk}`: the weight agent `k` applies to agent `l`'s message.
    pub fn weight(&self, l: usize, k: usize) -> f64 {
        self.weights[(l, k)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Neighbors of `k` (positive weights), including `k` when `a_{kk} > 0`.
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        (0..self.agent_count())
            .filter(|&l| self.weights[(l, k)] > 0.0)
            .collect()
    }

    pub fn is_primitive(&self) -> bool {
        let k = self.agent_count();
        let mut power = self.weights.clone();
        for _ in 0..k * k {
            if power.iter().all(|&v| v > 0.0) {
                return true;
            }
            power = &power * &self.weights;
        }
        false
    }
}

/// Metropolis weights: `a_{lk} = 1 / max(d_l, d_k)` for neighbors
/// `l != k` (degrees exclude self-loops), with the self-weight absorbing
/// the residual mass.
pub fn metropolis_weights(graph: &Graph) -> Result<CombinationMatrix> {
    let report = connectivity_check(graph);
    if !report.connected {
        return Err(Error::InvalidGraph(format!(
            "graph is disconnected (components: {:?})",
            report.components
        )));
    }
    let k = graph.agent_count();
    let mut weights = DMatrix::zeros(k, k);
    for u in 0..k {
        for v in (u + 1)..k {
            if graph.has_edge(u, v) {
                let w = 1.0 / graph.degree(u).max(graph.degree(v)) as f64;
                weights[(u, v)] = w;
                weights[(v, u)] = w;
            }
        }
    }
    for u in 0..k {
        let off: f64 = weights.row(u).iter().sum();
        // The residual self-weight can round to a tiny negative when the
        // neighbor weights sum to one exactly; clamp it at zero.
        weights[(u, u)] = (1.0 - off).max(0.0);
    }
    CombinationMatrix::new(weights)
}

/// Spectral statistics of a combination matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralStats {
    /// Second largest eigenvalue modulus.
    pub rho2: f64,
    /// `max{|1 - K/gamma|, rho2}`.
    pub lambda: f64,
}

/// Computes `rho2` via a symmetric eigendecomposition and the bound
/// factor `lambda` for the given adaptation scale `gamma`.
pub fn spectral_stats(a: &CombinationMatrix, gamma: f64) -> Result<SpectralStats> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let rho2 = second_eigenvalue_modulus(a);
    let k = a.agent_count() as f64;
    let lambda = (1.0 - k / gamma).abs().max(rho2);
    Ok(SpectralStats { rho2, lambda })
}

fn second_eigenvalue_modulus(a: &CombinationMatrix) -> f64 {
    let eigen = a.matrix().clone().symmetric_eigen();
    let mut moduli: Vec<f64> = eigen.eigenvalues.iter().map(|v| v.abs()).collect();
    moduli.sort_by(|x, y| y.partial_cmp(x).unwrap());
    // Doubly-stochastic A always has eigenvalue 1; drop one copy of it.
    moduli.get(1).copied().unwrap_or(0.0).min(1.0)
}

/// Rank-revealing factorization `A^T Sigma A = Q^T Q` with `Q` of full
/// row rank `r = rank(A)`, plus the projection onto the reduced space.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    rank: usize,
    /// `r x K`.
    q: DMatrix<f64>,
    /// `(Q^T)^dagger = (Q Q^T)^{-1} Q`, `r x K`.
    qt_pinv: DMatrix<f64>,
}

const RANK_TOL: f64 = 1e-10;

impl LowRankFactor {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Column `k` of `Q` (the agent-recovery vector `q_k`).
    pub fn agent_vector(&self, k: usize) -> DVector<f64> {
        self.q.column(k).into_owned()
    }

    /// `v_Q = (Q^T)^dagger A^T v`, the unique reduced vector with
    /// `A^T v = Q^T v_Q`.
    pub fn reduce(&self, a: &CombinationMatrix, v: &DVector<f64>) -> DVector<f64> {
        &self.qt_pinv * (a.matrix().transpose() * v)
    }

    /// `Q^T w_Q`, back to the full space.
    pub fn lift(&self, w_q: &DVector<f64>) -> DVector<f64> {
        self.q.transpose() * w_q
    }

    /// `(Q^T)^dagger w`: the reduced coordinates of a full-space vector
    /// that lies in the row space of `Q` (up to least-squares residual).
    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.qt_pinv * w
    }
}

/// Builds the low-rank factor of `A^T Sigma A` from `A` and a strictly positive
/// diagonal `Sigma` (given by its diagonal entries).
pub fn lowrank_factor(a: &CombinationMatrix, sigma_diag: &[f64]) -> Result<LowRankFactor> {
    let k = a.agent_count();
    if sigma_diag.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "Sigma has {} entries, expected {k}",
            sigma_diag.len()
        )));
    }
    if sigma_diag.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter(
            "Sigma must have strictly positive diagonal entries".into(),
        ));
    }
    let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(sigma_diag));
    let ata = a.matrix().transpose() * sigma * a.matrix();
    let eigen = ata.symmetric_eigen();
    let max_eig = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let threshold = RANK_TOL * max_eig.max(1.0);
    let kept: Vec<usize> = (0..k)
        .filter(|&i| eigen.eigenvalues[i] > threshold)
        .collect();
    let rank = kept.len();
    let mut q = DMatrix::zeros(rank, k);
    for (row, &i) in kept.iter().enumerate() {
        let scale = eigen.eigenvalues[i].sqrt();
        for col in 0..k {
            q[(row, col)] = scale * eigen.eigenvectors[(col, i)];
        }
    }
    // (Q Q^T)^{-1} Q; Q Q^T = Lambda restricted to the kept eigenvalues.
    let mut qt_pinv = q.clone();
    for (row, &i) in kept.iter().enumerate() {
        let inv = 1.0 / eigen.eigenvalues[i];
        for col in 0..k {
            qt_pinv[(row, col)] *= inv;
        }
    }
    Ok(LowRankFactor { rank, q, qt_pinv })
}

/// Generates a random connected graph with self-loops on all nodes,
/// targeting a Metropolis mixing rate near `target_rho2`. Starts from a
/// random spanning tree and densifies until the measured rate drops to
/// the target band. Deterministic given the RNG state.
pub fn random_graph_with_mixing_rate<R: Rng>(
    agents: usize,
    target_rho2: f64,
    tolerance: f64,
    rng: &mut R,
    max_attempts: usize,
) -> Result<(Graph, f64)> {
    for _ in 0..max_attempts {
        let mut graph = Graph::new(agents)?;
        for u in 0..agents {
            graph.add_edge(u, u)?;
        }
        // Random spanning tree: attach each node to a random earlier one.
        for v in 1..agents {
            let u = rng.gen_range(0..v);
            graph.add_edge(u, v)?;
        }
        let max_extra = agents * (agents - 1) / 2;
        for _ in 0..max_extra {
            let a = metropolis_weights(&graph)?;
            let rho2 = spectral_stats(&a, agents as f64)?.rho2;
            if (rho2 - target_rho2).abs() <= tolerance {
                return Ok((graph, rho2));
            }
            if rho2 < target_rho2 {
                break; // overshot the density; retry with a fresh tree
            }
            let u = rng.gen_range(0..agents);
            let v = rng.gen_range(0..agents);
            if u != v {
                graph.add_edge(u, v)?;
            }
        }
    }
    Err(Error::InvalidGraph(format!(
        "could not reach rho2 = {target_rho2} +/- {tolerance} on {agents} agents"
    )))
}
