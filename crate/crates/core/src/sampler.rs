//! Picks the training timestamps whose mean embeddings are closest to the
//! current batch, and gathers all of their instances.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{cosine, Matrix, NodeId, Tape};
use crate::encoder::EmbeddingBank;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSelection {
    /// Selected bank positions, in selection order.
    pub positions: Vec<usize>,
    /// Training timestamps of `positions`.
    pub timestamps: Vec<usize>,
    /// `(timestamp, variable)` for each row of `embeddings`; timestamp-major.
    pub instance_refs: Vec<(usize, usize)>,
    /// m x l detached embeddings, m = n * k.
    pub embeddings: Matrix,
}

impl SampleSelection {
    pub fn len(&self) -> usize {
        self.instance_refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_refs.is_empty()
    }
}

/// Column-wise mean of the batch embeddings (1 x l), on the tape.
pub fn batch_mean(tape: &mut Tape, embeddings: NodeId) -> Result<NodeId> {
    tape.mean_rows(embeddings)
}

fn candidates(bank: &EmbeddingBank, k: usize, exclude: Option<usize>) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..bank.len())
        .filter(|&p| Some(bank.timestamps()[p]) != exclude)
        .collect();
    if k == 0 || k > pool.len() {
        return Err(Error::SampleSize {
            k,
            available: pool.len(),
        });
    }
    Ok(pool)
}

fn gather(bank: &EmbeddingBank, positions: Vec<usize>) -> SampleSelection {
    let timestamps: Vec<usize> = positions.iter().map(|&p| bank.timestamps()[p]).collect();
    let n = bank.variables();
    let instance_refs = timestamps.iter().flat_map(|&t| (0..n).map(move |v| (t, v))).collect();
    let parts: Vec<&Matrix> = positions.iter().map(|&p| bank.embeddings(p)).collect();
    let embeddings = Matrix::vstack(&parts).expect("bank embeddings share a shape");
    SampleSelection {
        positions,
        timestamps,
        instance_refs,
        embeddings,
    }
}

/// The `k` bank timestamps most cosine-similar to `mean` (ties go to the
/// earlier timestamp). `exclude` removes one timestamp from the pool.
pub fn select_top_k(bank: &EmbeddingBank, mean: &[f64], k: usize, exclude: Option<usize>) -> Result<SampleSelection> {
    let mut pool = candidates(bank, k, exclude)?;
    let sims: Vec<f64> = (0..bank.len()).map(|p| cosine(bank.means().row(p), mean)).collect();
    let rank = |a: &usize, b: &usize| {
        sims[*b]
            .partial_cmp(&sims[*a])
            .unwrap_or(Ordering::Equal)
            .then(bank.timestamps()[*a].cmp(&bank.timestamps()[*b]))
    };
    if k < pool.len() {
        pool.select_nth_unstable_by(k - 1, rank);
        pool.truncate(k);
    }
    pool.sort_by(rank);
    Ok(gather(bank, pool))
}

/// `k` distinct bank timestamps drawn uniformly under `seed`, in ascending
/// timestamp order.
pub fn select_random(bank: &EmbeddingBank, k: usize, seed: u64, exclude: Option<usize>) -> Result<SampleSelection> {
    let pool = candidates(bank, k, exclude)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    Ok(gather(bank, picked))
}
