//! Network topologies and combination matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use crate::blockmat::{kron, ComplexMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, node_stream, StreamKind};

/// Tolerance on row/column sums of a combination matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Number of layout draws tried before giving up on connectivity.
pub const MAX_TOPOLOGY_ATTEMPTS: u32 = 10_000;

/// Undirected graph with self-loops. Node indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Topology {
    num_nodes: usize,
    positions: Option<Vec<[f64; 2]>>,
    comm_radius: Option<f64>,
    seed: Option<u64>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an undirected edge list. Self-loops are added
    /// automatically and need not be listed.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidParameter("topology needs at least one node".into()));
        }
        let mut neighbors: Vec<Vec<usize>> = (0..num_nodes).map(|k| vec![k]).collect();
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) references a node outside 0..{num_nodes}"
                )));
            }
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for n in neighbors.iter_mut() {
            n.sort_unstable();
            n.dedup();
        }
        Ok(Self {
            num_nodes,
            positions: None,
            comm_radius: None,
            seed: None,
            neighbors,
        })
    }

    /// Connects every pair of nodes within `radius` of each other.
    pub fn from_positions(positions: Vec<[f64; 2]>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        let n = positions.len();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let dx = positions[a][0] - positions[b][0];
                let dy = positions[a][1] - positions[b][1];
                if libm::hypot(dx, dy) <= radius {
                    edges.push((a, b));
                }
            }
        }
        let mut t = Self::from_edges(n, &edges)?;
        t.positions = Some(positions);
        t.comm_radius = Some(radius);
        Ok(t)
    }

    /// Complete graph on `num_nodes` nodes.
    pub fn complete(num_nodes: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = (0..num_nodes)
            .flat_map(|a| (a + 1..num_nodes).map(move |b| (a, b)))
            .collect();
        Self::from_edges(num_nodes, &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn comm_radius(&self) -> Option<f64> {
        self.comm_radius
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Sorted neighborhood of `k`, including `k` itself.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    /// Neighborhood size including the node itself.
    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(|n| n.len() - 1).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = stack.pop() {
            for &l in &self.neighbors[k] {
                if !seen[l] {
                    seen[l] = true;
                    count += 1;
                    stack.push(l);
                }
            }
        }
        count == self.num_nodes
    }
}

/// Places `num_nodes` nodes uniformly on the unit square and links nodes
/// closer than `radius`, redrawing with a new sub-seed until the graph is
/// connected.
pub fn random_geometric_topology(num_nodes: usize, radius: f64, seed: u64) -> Result<Topology> {
    if num_nodes == 0 {
        return Err(Error::InvalidParameter("topology needs at least one node".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    for attempt in 0..MAX_TOPOLOGY_ATTEMPTS {
        let mut rng = node_stream(derive_seed(&[seed, attempt as u64]), 0, StreamKind::Topology);
        let positions: Vec<[f64; 2]> = (0..num_nodes)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let mut topo = Topology::from_positions(positions, radius)?;
        if topo.is_connected() {
            topo.seed = Some(seed);
            return Ok(topo);
        }
    }
    Err(Error::Disconnected {
        attempts: MAX_TOPOLOGY_ATTEMPTS,
    })
}

/// Which sums of a combination matrix equal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Stochasticity {
    /// Columns sum to one.
    Left,
    /// Rows sum to one.
    Right,
    Doubly,
}

impl Stochasticity {
    pub fn is_left(self) -> bool {
        matches!(self, Self::Left | Self::Doubly)
    }

    pub fn is_right(self) -> bool {
        matches!(self, Self::Right | Self::Doubly)
    }
}

/// Nonnegative `N x N` weight matrix. Entry `(l, k)` is the weight node `k`
/// assigns to data from node `l`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CombinationMatrix {
    size: usize,
    kind: Stochasticity,
    entries: Vec<f64>,
}

impl CombinationMatrix {
    /// Validates and wraps row-major entries.
    pub fn new(size: usize, entries: Vec<f64>, kind: Stochasticity) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: (size, size),
                found: (entries.len(), 1),
            });
        }
        let m = Self { size, kind, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(size: usize) -> Self {
        let mut entries = vec![0.0; size * size];
        for k in 0..size {
            entries[k * size + k] = 1.0;
        }
        Self {
            size,
            kind: Stochasticity::Doubly,
            entries,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kind(&self) -> Stochasticity {
        self.kind
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.entries[l * self.size + k]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row_sum(&self, l: usize) -> f64 {
        self.entries[l * self.size..(l + 1) * self.size].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> f64 {
        (0..self.size).map(|l| self.get(l, k)).sum()
    }

    pub fn is_identity(&self) -> bool {
        (0..self.size).all(|l| (0..self.size).all(|k| self.get(l, k) == if l == k { 1.0 } else { 0.0 }))
    }

    /// Checks nonnegativity and the declared stochasticity.
    pub fn validate(&self) -> Result<()> {
        if let Some(x) = self.entries.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "combination weights must be finite and nonnegative, found {x}"
            )));
        }
        for i in 0..self.size {
            if self.kind.is_left() {
                let s = self.col_sum(i);
                if (s - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidParameter(format!("column {i} sums to {s}, expected 1")));
                }
            }
            if self.kind.is_right() {
                let s = self.row_sum(i);
                if (s - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidParameter(format!("row {i} sums to {s}, expected 1")));
                }
            }
        }
        Ok(())
    }

    /// Checks that weights vanish outside each neighborhood.
    pub fn conforms_to(&self, topo: &Topology) -> Result<()> {
        if self.size != topo.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: (topo.num_nodes(), topo.num_nodes()),
                found: (self.size, self.size),
            });
        }
        for l in 0..self.size {
            for k in 0..self.size {
                if self.get(l, k) != 0.0 && !topo.are_neighbors(l, k) {
                    return Err(Error::InvalidParameter(format!(
                        "weight ({l}, {k}) is nonzero but the nodes are not neighbors"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Dense complex copy.
    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.size, self.size, |l, k| Complex64::new(self.get(l, k), 0.0))
    }

    /// `self ⊗ I_M`.
    pub fn extend(&self, m: usize) -> ComplexMatrix {
        extend(self, m)
    }
}

/// Metropolis weights. Degrees count the self-loop.
pub fn metropolis_weights(topo: &Topology) -> CombinationMatrix {
    let n = topo.num_nodes();
    let mut entries = vec![0.0; n * n];
    for k in 0..n {
        let mut off = 0.0;
        for &l in topo.neighbors(k) {
            if l != k {
                let w = 1.0 / topo.degree(l).max(topo.degree(k)) as f64;
                entries[l * n + k] = w;
                off += w;
            }
        }
        entries[k * n + k] = 1.0 - off;
    }
    CombinationMatrix {
        size: n,
        kind: Stochasticity::Doubly,
        entries,
    }
}

/// Left-stochastic weights inversely proportional to each neighbor's
/// regression-noise variance.
pub fn relative_variance_weights(topo: &Topology, noise_vars: &[f64]) -> Result<CombinationMatrix> {
    let n = topo.num_nodes();
    if noise_vars.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (n, 1),
            found: (noise_vars.len(), 1),
        });
    }
    if let Some((node, &value)) = noise_vars.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveVariance { node, value });
    }
    let mut entries = vec![0.0; n * n];
    for k in 0..n {
        let denom: f64 = topo.neighbors(k).iter().map(|&l| 1.0 / noise_vars[l]).sum();
        let mut off = 0.0;
        for &l in topo.neighbors(k) {
            if l != k {
                let w = (1.0 / noise_vars[l]) / denom;
                entries[l * n + k] = w;
                off += w;
            }
        }
        entries[k * n + k] = 1.0 - off;
    }
    Ok(CombinationMatrix {
        size: n,
        kind: Stochasticity::Left,
        entries,
    })
}

pub fn identity_combination(n: usize) -> CombinationMatrix {
    CombinationMatrix::identity(n)
}

/// `mtx ⊗ I_M`.
pub fn extend(mtx: &CombinationMatrix, m: usize) -> ComplexMatrix {
    kron(&mtx.to_matrix(), &ComplexMatrix::identity(m))
}
