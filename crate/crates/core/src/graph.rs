//! Graph Laplacians and spectral node coordinates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DenseMatrix, DEFAULT_EIG_TOL};

/// Default number of eigenvectors kept per node.
pub const DEFAULT_EMBEDDING_DIM: usize = 16;

/// Eigenvalues closer than this at the truncation boundary are treated as one block.
pub const DEGENERACY_GAP: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;

/// An undirected weighted graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    adjacency: DenseMatrix,
}

impl GraphSpec {
    /// Validates a symmetric, nonnegative adjacency matrix with zero diagonal.
    pub fn new(adjacency: DenseMatrix) -> Result<Self> {
        if !adjacency.is_square() || adjacency.rows() == 0 {
            return Err(Error::dims("adjacency must be a nonempty square matrix"));
        }
        let n = adjacency.rows();
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::invalid(format!("self-loop on node {i}")));
            }
            for j in 0..n {
                if adjacency[(i, j)] < 0.0 {
                    return Err(Error::invalid(format!(
                        "negative weight on edge ({i}, {j})"
                    )));
                }
            }
        }
        let asym = adjacency.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self { adjacency })
    }

    /// Accepts a possibly directed adjacency and symmetrizes it as `(A + Aᵀ)/2`.
    pub fn from_directed(adjacency: DenseMatrix) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::dims("adjacency must be square"));
        }
        let t = adjacency.transpose();
        let data = adjacency
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Self::new(DenseMatrix::new(adjacency.rows(), adjacency.cols(), data)?)
    }

    /// Builds a graph from weighted arcs `(src, dst, weight)`; arcs are symmetrized.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut a = DenseMatrix::zeros(n, n);
        for &(s, d, w) in edges {
            if s >= n || d >= n {
                return Err(Error::invalid(format!("edge ({s}, {d}) outside {n} nodes")));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("weight of edge ({s}, {d})")));
            }
            a[(s, d)] += w;
        }
        Self::from_directed(a)
    }

    /// The cycle `0 − 1 − … − (n−1) − 0` with unit weights.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("a ring needs at least 3 nodes"));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges).map(|g| g.scaled(2.0))
    }

    /// The path `0 − 1 − … − (n−1)` with unit weights.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(n, &edges).map(|g| g.scaled(2.0))
    }

    fn scaled(mut self, c: f64) -> Self {
        self.adjacency = self.adjacency.scale(c);
        self
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &DenseMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| self.adjacency.row(i).iter().sum())
            .collect()
    }
}

/// `L_s = I − D^{−1/2} A D^{−1/2}`; isolated nodes get `D^{−1/2} = 0` and an identity row.
pub fn normalized_laplacian(g: &GraphSpec) -> DenseMatrix {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let a = g.adjacency();
    let mut l = DenseMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] -= inv_sqrt[i] * a[(i, j)] * inv_sqrt[j];
        }
    }
    l
}

/// Per-node coordinates in the leading Laplacian eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// The requested truncation.
    pub requested_k: usize,
    /// Columns actually kept; larger than `requested_k` when the boundary eigenvalue is
    /// degenerate.
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    /// `n × k`; row `j` is node `j`'s coordinate.
    pub coords: DenseMatrix,
}

/// The first `k` eigenvectors of `L_s` (ascending eigenvalues), extended over any
/// eigenvalue block that straddles the cut.
pub fn spectral_embedding(g: &GraphSpec, k: usize) -> Result<SpectralEmbedding> {
    let n = g.node_count();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "embedding size {k} outside 1..={n}"
        )));
    }
    let eig = sym_eig(&normalized_laplacian(g), DEFAULT_EIG_TOL)?;
    let mut keep = k;
    while keep < n && eig.eigenvalues[keep] - eig.eigenvalues[keep - 1] < DEGENERACY_GAP {
        keep += 1;
    }
    if keep != k {
        log::info!("embedding extended from {k} to {keep} columns over a degenerate eigenvalue");
    }
    let mut coords = DenseMatrix::zeros(n, keep);
    for i in 0..n {
        for j in 0..keep {
            coords[(i, j)] = eig.eigenvectors[(i, j)];
        }
    }
    Ok(SpectralEmbedding {
        requested_k: k,
        k: keep,
        eigenvalues: eig.eigenvalues[..keep].to_vec(),
        coords,
    })
}

/// Adjacency file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyFormat {
    /// Lines `src,dst,weight` with 0-based node ids; an optional header line is skipped.
    EdgeList,
    /// `n` lines of `n` comma-separated weights.
    Dense,
}

/// Parses adjacency CSV text. `nodes` fixes the node count for edge lists (otherwise the
/// largest id plus one).
pub fn parse_adjacency(
    text: &str,
    format: AdjacencyFormat,
    nodes: Option<usize>,
) -> Result<GraphSpec> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty adjacency file".into(),
        });
    }
    let num = |line: usize, s: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::Parse {
            line,
            msg: format!("not a number: {s:?}"),
        })
    };
    match format {
        AdjacencyFormat::Dense => {
            let rows = lines
                .iter()
                .map(|&(ln, l)| l.split(',').map(|c| num(ln, c)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let n = rows.len();
            if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
                return Err(Error::Parse {
                    line: lines[i].0,
                    msg: format!("expected {n} columns"),
                });
            }
            GraphSpec::from_directed(DenseMatrix::from_rows(&rows)?)
        }
        AdjacencyFormat::EdgeList => {
            let mut edges = Vec::with_capacity(lines.len());
            for (idx, &(ln, l)) in lines.iter().enumerate() {
                let cells: Vec<&str> = l.split(',').map(str::trim).collect();
                if idx == 0 && cells.first().is_some_and(|c| c.parse::<f64>().is_err()) {
                    continue;
                }
                if cells.len() != 3 {
                    return Err(Error::Parse {
                        line: ln,
                        msg: "expected src,dst,weight".into(),
                    });
                }
                let id = |s: &str| -> Result<usize> {
                    s.parse::<usize>().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("bad node id {s:?}"),
                    })
                };
                edges.push((id(cells[0])?, id(cells[1])?, num(ln, cells[2])?));
            }
            let max_id = edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0);
            let n = nodes.unwrap_or(max_id);
            GraphSpec::from_edges(n, &edges)
        }
    }
}

pub fn load_adjacency(
    path: impl AsRef<Path>,
    format: AdjacencyFormat,
    nodes: Option<usize>,
) -> Result<GraphSpec> {
    parse_adjacency(&std::fs::read_to_string(path)?, format, nodes)
}
