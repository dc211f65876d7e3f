//! Instance graph between the current batch and the sampled training
//! instances: cosine adjacency, top-N mask, and mean aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::autodiff::{Matrix, NodeId, Tape};
use crate::encoder::{bind, uniform_init};
use crate::error::{Error, Result};

/// Square maps applied to batch (`w_h`) and sampled (`w_e`) embeddings as
/// `x -> x W^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingParams {
    pub w_h: Matrix,
    pub w_e: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct MappingNodes {
    pub w_h: NodeId,
    pub w_e: NodeId,
}

impl MappingParams {
    pub fn init(dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_h: uniform_init(dim, dim, dim, rng),
            w_e: uniform_init(dim, dim, dim, rng),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            w_h: Matrix::identity(dim),
            w_e: Matrix::identity(dim),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("maps.w_h", &self.w_h), ("maps.w_e", &self.w_e)]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_h, &mut self.w_e]
    }

    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> MappingNodes {
        MappingNodes {
            w_h: bind(tape, &self.w_h, tracked),
            w_e: bind(tape, &self.w_e, tracked),
        }
    }
}

impl MappingNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        vec![self.w_h, self.w_e]
    }
}

fn map_rows(tape: &mut Tape, x: NodeId, w: Option<NodeId>) -> Result<NodeId> {
    match w {
        Some(w) => {
            let wt = tape.transpose(w);
            tape.matmul(x, wt)
        }
        None => Ok(x),
    }
}

/// Tape nodes of a built adjacency.
#[derive(Clone, Copy, Debug)]
pub struct AdjacencyNodes {
    /// n x l mapped batch embeddings.
    pub batch: NodeId,
    /// m x l mapped sampled embeddings, shared by the weights and the
    /// aggregated messages.
    pub sampled: NodeId,
    /// n x m cosine weights.
    pub weights: NodeId,
}

/// Cosine weights between mapped batch rows and mapped sampled rows. Without
/// maps the embeddings are compared directly.
pub fn build_adjacency(
    tape: &mut Tape,
    batch: NodeId,
    sampled: NodeId,
    maps: Option<&MappingNodes>,
) -> Result<AdjacencyNodes> {
    let batch = map_rows(tape, batch, maps.map(|m| m.w_h))?;
    let sampled = map_rows(tape, sampled, maps.map(|m| m.w_e))?;
    let weights = tape.cosine_rows(batch, sampled)?;
    Ok(AdjacencyNodes {
        batch,
        sampled,
        weights,
    })
}

/// Adjacency weights with the per-row top-N selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    pub weights: Matrix,
    /// 1.0 where kept, 0.0 where masked.
    pub mask: Matrix,
    pub neighbors: usize,
}

impl Adjacency {
    /// Number of kept entries per row, `min(N, m)`.
    pub fn kept_per_row(&self) -> usize {
        self.neighbors.min(self.weights.cols())
    }

    pub fn kept_columns(&self, row: usize) -> Vec<usize> {
        (0..self.mask.cols())
            .filter(|&j| self.mask.get(row, j) != 0.0)
            .collect()
    }

    /// Writes `row,col,weight,kept` lines for inspection.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("row,col,weight,kept\n");
        for i in 0..self.weights.rows() {
            for j in 0..self.weights.cols() {
                let _ = writeln!(
                    out,
                    "{i},{j},{},{}",
                    self.weights.get(i, j),
                    u8::from(self.mask.get(i, j) != 0.0)
                );
            }
        }
        fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Keeps the `neighbors` numerically largest weights in each row (ties go to
/// the smaller column); keeps everything when the row is no longer than that.
pub fn top_n_mask(weights: &Matrix, neighbors: usize) -> Result<Adjacency> {
    if neighbors == 0 {
        return Err(Error::Config("neighbor count N must be >= 1".into()));
    }
    let (n, m) = weights.shape();
    let mut mask = Matrix::zeros(n, m);
    let keep = neighbors.min(m);
    let mut cols: Vec<usize> = Vec::with_capacity(m);
    for i in 0..n {
        let row = weights.row(i);
        cols.clear();
        cols.extend(0..m);
        if keep < m {
            cols.select_nth_unstable_by(keep - 1, |&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        }
        for &j in &cols[..keep] {
            mask.set(i, j, 1.0);
        }
    }
    Ok(Adjacency {
        weights: weights.clone(),
        mask,
        neighbors,
    })
}

/// `agg_i = (1/|N_i|) sum_{j in N_i} A_ij * sampled_j` where `sampled` is the
/// mapped sampled-embedding node and `|N_i| = min(N, m)`.
pub fn aggregate(tape: &mut Tape, adjacency: &AdjacencyNodes, selection: &Adjacency) -> Result<NodeId> {
    let mask = tape.constant(selection.mask.clone());
    let masked = tape.mul(adjacency.weights, mask)?;
    let summed = tape.matmul(masked, adjacency.sampled)?;
    Ok(tape.scale(summed, 1.0 / selection.kept_per_row() as f64))
}

/// Builds the adjacency, masks it and aggregates. Returns the n x l
/// aggregated embeddings and the adjacency that produced them.
pub fn aggregate_neighbors(
    tape: &mut Tape,
    batch: NodeId,
    sampled: NodeId,
    maps: Option<&MappingNodes>,
    neighbors: usize,
) -> Result<(NodeId, Adjacency)> {
    let nodes = build_adjacency(tape, batch, sampled, maps)?;
    let adjacency = top_n_mask(tape.value(nodes.weights), neighbors)?;
    let agg = aggregate(tape, &nodes, &adjacency)?;
    Ok((agg, adjacency))
}
