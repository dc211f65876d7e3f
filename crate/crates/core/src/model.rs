//! Full parameter set, the per-batch forward pass, prediction head and loss.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, NodeId, Tape};
use crate::encoder::{EmbeddingBank, EncodeMode, EncoderNodes, EncoderParams, GruNodes, Linear, LinearNodes, MlpNodes};
use crate::error::{Error, Result};
use crate::graph::{aggregate_neighbors, Adjacency, MappingNodes, MappingParams};
use crate::sampler::{batch_mean, select_random, select_top_k, SampleSelection};

/// Model variant: the full model, random sampling instead of similarity
/// sampling, or no mapping matrices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Full,
    Ns,
    Nw,
}

impl Variant {
    pub fn uses_maps(self) -> bool {
        self != Variant::Nw
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Ns => "ns",
            Variant::Nw => "nw",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "ns" => Ok(Variant::Ns),
            "nw" => Ok(Variant::Nw),
            other => Err(Error::Config(format!("unknown variant {other:?} (full|ns|nw)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    /// Absent for the variant without mapping matrices.
    pub maps: Option<MappingParams>,
    /// `2l -> 1` output layer over `[aggregated, batch]`.
    pub head: Linear,
}

#[derive(Clone, Debug)]
pub struct ModelNodes {
    pub encoder: EncoderNodes,
    pub maps: Option<MappingNodes>,
    pub head: LinearNodes,
}

impl ModelNodes {
    /// Rebuilds node handles from ids in [`ModelParams::named`] order, e.g.
    /// leaves created by a gradient checker. Panics on a wrong count.
    pub fn from_ids(ids: &[NodeId]) -> Self {
        let has_maps = match ids.len() {
            17 => false,
            19 => true,
            n => panic!("expected 17 or 19 parameter ids, got {n}"),
        };
        let gru = GruNodes {
            w_r: ids[0],
            w_z: ids[1],
            w_c: ids[2],
            u_r: ids[3],
            u_z: ids[4],
            u_c: ids[5],
            b_r: ids[6],
            b_z: ids[7],
            b_c: ids[8],
        };
        let layer = |i: usize| LinearNodes {
            weight: ids[9 + 2 * i],
            bias: ids[10 + 2 * i],
        };
        let mlp = MlpNodes {
            layers: [layer(0), layer(1), layer(2)],
        };
        let maps = has_maps.then(|| MappingNodes {
            w_h: ids[15],
            w_e: ids[16],
        });
        let h = ids.len() - 2;
        ModelNodes {
            encoder: EncoderNodes { gru, mlp },
            maps,
            head: LinearNodes {
                weight: ids[h],
                bias: ids[h + 1],
            },
        }
    }

    /// Node ids in the same order as [`ModelParams::named`].
    pub fn ids(&self) -> Vec<NodeId> {
        let mut v = self.encoder.ids();
        if let Some(m) = &self.maps {
            v.extend(m.ids());
        }
        v.extend([self.head.weight, self.head.bias]);
        v
    }
}

impl ModelParams {
    pub fn init(hidden: usize, variant: Variant, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(hidden, &mut rng);
        let maps = variant.uses_maps().then(|| MappingParams::init(hidden, &mut rng));
        let head = Linear::init(2 * hidden, 1, &mut rng);
        Self { encoder, maps, head }
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden()
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = self.encoder.named();
        if let Some(m) = &self.maps {
            v.extend(m.named());
        }
        v.push(("head.weight", &self.head.weight));
        v.push(("head.bias", &self.head.bias));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.encoder.tensors_mut();
        if let Some(m) = &mut self.maps {
            v.extend(m.tensors_mut());
        }
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> ModelNodes {
        ModelNodes {
            encoder: self.encoder.bind(tape, tracked),
            maps: self.maps.as_ref().map(|m| m.bind(tape, tracked)),
            head: self.head.bind(tape, tracked),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.named().iter().map(|(_, m)| m.sum_squares()).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&Checkpoint::from(self)).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.into_params()
    }
}

/// On-disk checkpoint layout (JSON):
///
/// ```text
/// { "format": "igmtf-checkpoint", "version": 1, "hidden": l,
///   "tensors": [ { "name": "gru.w_r", "rows": 1, "cols": l, "data": [..] }, .. ] }
/// ```
///
/// Tensors appear in [`ModelParams::named`] order; `data` is row-major.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    hidden: usize,
    tensors: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "igmtf-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

impl From<&ModelParams> for Checkpoint {
    fn from(p: &ModelParams) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            hidden: p.hidden(),
            tensors: p
                .named()
                .into_iter()
                .map(|(name, m)| NamedTensor {
                    name: name.into(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl Checkpoint {
    fn into_params(self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        let has_maps = self.tensors.iter().any(|t| t.name.starts_with("maps."));
        let variant = if has_maps { Variant::Full } else { Variant::Nw };
        let mut params = ModelParams::init(self.hidden, variant, 0);
        let names: Vec<&'static str> = params.named().iter().map(|(n, _)| *n).collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((slot, name), t) in params.tensors_mut().into_iter().zip(names).zip(self.tensors) {
            if t.name != name {
                return Err(Error::Checkpoint(format!("expected tensor {name}, found {}", t.name)));
            }
            if (t.rows, t.cols) != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: expected {:?}, found {:?}",
                    slot.shape(),
                    (t.rows, t.cols)
                )));
            }
            *slot = Matrix::new(t.rows, t.cols, t.data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        }
        Ok(params)
    }
}

/// `p_i = Linear([agg_i, h_i])`, n x 1.
pub fn predict(tape: &mut Tape, aggregated: NodeId, embeddings: NodeId, head: &LinearNodes) -> Result<NodeId> {
    let joined = tape.concat_cols(aggregated, embeddings)?;
    head.apply(tape, joined)
}

#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    /// MAE + lambda * ||theta||^2.
    pub total: NodeId,
    /// Batch MAE alone.
    pub mae: NodeId,
}

/// Mean absolute error over the batch plus `lambda` times the summed squares
/// of `params`.
pub fn loss(tape: &mut Tape, predictions: NodeId, labels: NodeId, params: &[NodeId], lambda: f64) -> Result<LossNodes> {
    let diff = tape.sub(predictions, labels)?;
    let abs = tape.abs(diff);
    let mae = tape.mean_all(abs)?;
    if lambda == 0.0 || params.is_empty() {
        return Ok(LossNodes { total: mae, mae });
    }
    let mut reg: Option<NodeId> = None;
    for &p in params {
        let sq = tape.mul(p, p)?;
        let s = tape.sum(sq);
        reg = Some(match reg {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    let reg = tape.scale(reg.expect("params non-empty"), lambda);
    let total = tape.add(mae, reg)?;
    Ok(LossNodes { total, mae })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Similarity,
    Random { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardConfig {
    pub k: usize,
    pub neighbors: usize,
    pub sampling: Sampling,
    /// Timestamp to keep out of the candidate pool.
    pub exclude: Option<usize>,
}

#[derive(Debug)]
pub struct BatchForward {
    pub embeddings: NodeId,
    pub aggregated: NodeId,
    pub predictions: NodeId,
    pub selection: SampleSelection,
    pub adjacency: Adjacency,
}

/// Encode, sample, aggregate, predict for one timestamp's features.
pub fn forward_batch(
    tape: &mut Tape,
    nodes: &ModelNodes,
    bank: &EmbeddingBank,
    features: &Matrix,
    cfg: &ForwardConfig,
) -> Result<BatchForward> {
    let embeddings = nodes.encoder.encode_batch(tape, features, EncodeMode::Grad)?;
    let selection = match cfg.sampling {
        Sampling::Similarity => {
            let mean = batch_mean(tape, embeddings)?;
            let mean = tape.value(mean).as_slice().to_vec();
            select_top_k(bank, &mean, cfg.k, cfg.exclude)?
        }
        Sampling::Random { seed } => select_random(bank, cfg.k, seed, cfg.exclude)?,
    };
    let sampled = tape.constant(selection.embeddings.clone());
    let (aggregated, adjacency) = aggregate_neighbors(tape, embeddings, sampled, nodes.maps.as_ref(), cfg.neighbors)?;
    let predictions = predict(tape, aggregated, embeddings, &nodes.head)?;
    Ok(BatchForward {
        embeddings,
        aggregated,
        predictions,
        selection,
        adjacency,
    })
}
