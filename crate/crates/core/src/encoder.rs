//! Shared GRU + 3-layer MLP instance encoder and the per-epoch embedding bank.
//!
//! GRU step (input size 1, hidden size l, row-vector convention):
//!
//! ```text
//! r = sigmoid(x W_r + h U_r + b_r)
//! z = sigmoid(x W_z + h U_z + b_z)
//! c = tanh(x W_c + (r * h) U_c + b_c)
//! h = (1 - z) * h + z * c
//! ```
//!
//! The last hidden state passes through three `l -> l` linear layers, each
//! followed by LeakyReLU.

use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::{Matrix, NodeId, Tape, LEAKY_SLOPE};
use crate::data::{InstanceBatch, Segment, SeriesMatrix};
use crate::error::{Error, Result};

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

/// Row-vector linear layer `y = x W + b`, `W: in x out`, `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

impl Linear {
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: uniform_init(inputs, outputs, inputs, rng),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> LinearNodes {
        LinearNodes {
            weight: bind(tape, &self.weight, tracked),
            bias: bind(tape, &self.bias, tracked),
        }
    }
}

impl LinearNodes {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add(xw, self.bias)
    }
}

pub(crate) fn bind(tape: &mut Tape, m: &Matrix, tracked: bool) -> NodeId {
    if tracked {
        tape.param(m.clone())
    } else {
        tape.constant(m.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_r: Matrix,
    pub w_z: Matrix,
    pub w_c: Matrix,
    pub u_r: Matrix,
    pub u_z: Matrix,
    pub u_c: Matrix,
    pub b_r: Matrix,
    pub b_z: Matrix,
    pub b_c: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    pub w_r: NodeId,
    pub w_z: NodeId,
    pub w_c: NodeId,
    pub u_r: NodeId,
    pub u_z: NodeId,
    pub u_c: NodeId,
    pub b_r: NodeId,
    pub b_z: NodeId,
    pub b_c: NodeId,
}

impl GruParams {
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_r: uniform_init(1, hidden, 1, rng),
            w_z: uniform_init(1, hidden, 1, rng),
            w_c: uniform_init(1, hidden, 1, rng),
            u_r: uniform_init(hidden, hidden, hidden, rng),
            u_z: uniform_init(hidden, hidden, hidden, rng),
            u_c: uniform_init(hidden, hidden, hidden, rng),
            b_r: Matrix::zeros(1, hidden),
            b_z: Matrix::zeros(1, hidden),
            b_c: Matrix::zeros(1, hidden),
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        let (row, sq) = (Matrix::zeros(1, hidden), Matrix::zeros(hidden, hidden));
        Self {
            w_r: row.clone(),
            w_z: row.clone(),
            w_c: row.clone(),
            u_r: sq.clone(),
            u_z: sq.clone(),
            u_c: sq,
            b_r: row.clone(),
            b_z: row.clone(),
            b_c: row,
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_r.rows()
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("gru.w_r", &self.w_r),
            ("gru.w_z", &self.w_z),
            ("gru.w_c", &self.w_c),
            ("gru.u_r", &self.u_r),
            ("gru.u_z", &self.u_z),
            ("gru.u_c", &self.u_c),
            ("gru.b_r", &self.b_r),
            ("gru.b_z", &self.b_z),
            ("gru.b_c", &self.b_c),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_c,
            &mut self.u_r,
            &mut self.u_z,
            &mut self.u_c,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_c,
        ]
    }

    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> GruNodes {
        GruNodes {
            w_r: bind(tape, &self.w_r, tracked),
            w_z: bind(tape, &self.w_z, tracked),
            w_c: bind(tape, &self.w_c, tracked),
            u_r: bind(tape, &self.u_r, tracked),
            u_z: bind(tape, &self.u_z, tracked),
            u_c: bind(tape, &self.u_c, tracked),
            b_r: bind(tape, &self.b_r, tracked),
            b_z: bind(tape, &self.b_z, tracked),
            b_c: bind(tape, &self.b_c, tracked),
        }
    }
}

impl GruNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        vec![
            self.w_r, self.w_z, self.w_c, self.u_r, self.u_z, self.u_c, self.b_r, self.b_z, self.b_c,
        ]
    }

    /// One step for a batch: `x` is n x 1, `h` is n x l.
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId) -> Result<NodeId> {
        let gate = |tape: &mut Tape, w: NodeId, hid: NodeId, u: NodeId, b: NodeId| -> Result<NodeId> {
            let xw = tape.matmul(x, w)?;
            let hu = tape.matmul(hid, u)?;
            let s = tape.add(xw, hu)?;
            tape.add(s, b)
        };
        let r_pre = gate(tape, self.w_r, h, self.u_r, self.b_r)?;
        let r = tape.sigmoid(r_pre);
        let z_pre = gate(tape, self.w_z, h, self.u_z, self.b_z)?;
        let z = tape.sigmoid(z_pre);
        let rh = tape.mul(r, h)?;
        let c_pre = gate(tape, self.w_c, rh, self.u_c, self.b_c)?;
        let c = tape.tanh(c_pre);
        // (1 - z) h + z c = h + z (c - h)
        let diff = tape.sub(c, h)?;
        let zd = tape.mul(z, diff)?;
        tape.add(h, zd)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: [Linear; 3],
}

#[derive(Clone, Copy, Debug)]
pub struct MlpNodes {
    pub layers: [LinearNodes; 3],
}

impl MlpParams {
    pub fn init(width: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: [
                Linear::init(width, width, rng),
                Linear::init(width, width, rng),
                Linear::init(width, width, rng),
            ],
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        const NAMES: [(&str, &str); 3] = [
            ("mlp.0.weight", "mlp.0.bias"),
            ("mlp.1.weight", "mlp.1.bias"),
            ("mlp.2.weight", "mlp.2.bias"),
        ];
        self.layers
            .iter()
            .zip(NAMES)
            .flat_map(|(l, (w, b))| [(w, &l.weight), (b, &l.bias)])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> MlpNodes {
        MlpNodes {
            layers: [
                self.layers[0].bind(tape, tracked),
                self.layers[1].bind(tape, tracked),
                self.layers[2].bind(tape, tracked),
            ],
        }
    }
}

impl MlpNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn apply(&self, tape: &mut Tape, mut x: NodeId) -> Result<NodeId> {
        for layer in &self.layers {
            let y = layer.apply(tape, x)?;
            x = tape.leaky_relu(y, LEAKY_SLOPE);
        }
        Ok(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub gru: GruParams,
    pub mlp: MlpParams,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderNodes {
    pub gru: GruNodes,
    pub mlp: MlpNodes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    /// Parameters receive gradients through the result.
    Grad,
    /// The result is a constant on the tape.
    Detached,
}

impl EncoderParams {
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            gru: GruParams::init(hidden, rng),
            mlp: MlpParams::init(hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden()
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = self.gru.named();
        v.extend(self.mlp.named());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.gru.tensors_mut();
        v.extend(self.mlp.tensors_mut());
        v
    }

    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> EncoderNodes {
        EncoderNodes {
            gru: self.gru.bind(tape, tracked),
            mlp: self.mlp.bind(tape, tracked),
        }
    }
}

impl EncoderNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        let mut v = self.gru.ids();
        v.extend(self.mlp.ids());
        v
    }

    /// Final GRU hidden state for every row of `features` (n x d), from a zero
    /// initial state.
    pub fn gru_forward(&self, tape: &mut Tape, features: &Matrix) -> Result<NodeId> {
        let hidden = tape.value(self.gru.u_r).rows();
        let mut h = tape.constant(Matrix::zeros(features.rows(), hidden));
        for s in 0..features.cols() {
            let x = tape.constant(step_input(features, s));
            h = self.gru.step(tape, x, h)?;
        }
        Ok(h)
    }

    /// n x l embeddings of the rows of `features`.
    pub fn encode_batch(&self, tape: &mut Tape, features: &Matrix, mode: EncodeMode) -> Result<NodeId> {
        let h = self.gru_forward(tape, features)?;
        let e = self.mlp.apply(tape, h)?;
        Ok(match mode {
            EncodeMode::Grad => e,
            EncodeMode::Detached => tape.detach(e),
        })
    }
}

fn step_input(features: &Matrix, s: usize) -> Matrix {
    Matrix::from_fn(features.rows(), 1, |i, _| features.get(i, s))
}

/// Encodes without gradients on a scratch tape, discarding each step's
/// intermediates. Runs the same operations as [`EncoderNodes::encode_batch`],
/// so values agree bitwise.
pub fn encode_inference(params: &EncoderParams, features: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let nodes = params.bind(&mut tape, false);
    let mark = tape.len();
    let mut h_value = Matrix::zeros(features.rows(), params.hidden());
    for s in 0..features.cols() {
        let h = tape.constant(h_value);
        let x = tape.constant(step_input(features, s));
        let next = nodes.gru.step(&mut tape, x, h)?;
        h_value = tape.value(next).clone();
        tape.truncate(mark);
    }
    let h = tape.constant(h_value);
    let e = nodes.mlp.apply(&mut tape, h)?;
    Ok(tape.value(e).clone())
}

/// Detached embeddings of every training instance under one parameter
/// snapshot, with their per-timestamp means.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBank {
    timestamps: Vec<usize>,
    embeddings: Vec<Matrix>,
    means: Matrix,
    epoch: usize,
}

impl EmbeddingBank {
    /// Builds a bank from precomputed per-timestamp embeddings (each n x l).
    pub fn from_embeddings(timestamps: Vec<usize>, embeddings: Vec<Matrix>, epoch: usize) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != embeddings.len() {
            return Err(Error::Config(format!(
                "bank needs one embedding per timestamp ({} vs {})",
                timestamps.len(),
                embeddings.len()
            )));
        }
        let shape = embeddings[0].shape();
        if let Some(bad) = embeddings.iter().find(|e| e.shape() != shape) {
            return Err(Error::Shape {
                op: "embedding_bank",
                lhs: shape,
                rhs: bad.shape(),
            });
        }
        let means: Vec<Matrix> = embeddings.iter().map(Matrix::mean_rows).collect();
        let refs: Vec<&Matrix> = means.iter().collect();
        let means = Matrix::vstack(&refs)?;
        Ok(Self {
            timestamps,
            embeddings,
            means,
            epoch,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[usize] {
        &self.timestamps
    }

    /// Embeddings of all instances at bank position `i` (n x l).
    pub fn embeddings(&self, i: usize) -> &Matrix {
        &self.embeddings[i]
    }

    /// Row `i` is the mean embedding at bank position `i`.
    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn variables(&self) -> usize {
        self.embeddings[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].cols()
    }
}

/// Encodes every valid timestamp of the training segment in parallel. Each
/// timestamp is encoded independently, so the result does not depend on the
/// number of worker threads.
pub fn build_bank(
    series: &SeriesMatrix,
    train: Segment,
    params: &EncoderParams,
    window: usize,
    horizon: usize,
    epoch: usize,
) -> Result<EmbeddingBank> {
    let timestamps: Vec<usize> = train.valid_timestamps(window, horizon)?.collect();
    let embeddings = timestamps
        .par_iter()
        .map(|&t| {
            let InstanceBatch { features, .. } = series.batch_at(t, window, horizon);
            encode_inference(params, &features)
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingBank::from_embeddings(timestamps, embeddings, epoch)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::data::synthetic_sinusoids;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Independent scalar-loop GRU + MLP for one window.
    fn oracle_gru(p: &GruParams, window: &[f64]) -> Vec<f64> {
        let l = p.hidden();
        let mut h = vec![0.0; l];
        for &x in window {
            let mut r = vec![0.0; l];
            let mut z = vec![0.0; l];
            for j in 0..l {
                let (mut sr, mut sz) = (
                    x * p.w_r.get(0, j) + p.b_r.get(0, j),
                    x * p.w_z.get(0, j) + p.b_z.get(0, j),
                );
                for k in 0..l {
                    sr += h[k] * p.u_r.get(k, j);
                    sz += h[k] * p.u_z.get(k, j);
                }
                r[j] = sigmoid(sr);
                z[j] = sigmoid(sz);
            }
            let mut next = vec![0.0; l];
            for j in 0..l {
                let mut sc = x * p.w_c.get(0, j) + p.b_c.get(0, j);
                for k in 0..l {
                    sc += r[k] * h[k] * p.u_c.get(k, j);
                }
                let c = sc.tanh();
                next[j] = (1.0 - z[j]) * h[j] + z[j] * c;
            }
            h = next;
        }
        h
    }

    fn oracle_mlp(p: &MlpParams, mut x: Vec<f64>) -> Vec<f64> {
        for layer in &p.layers {
            let out = layer.weight.cols();
            let mut y = vec![0.0; out];
            for (j, yj) in y.iter_mut().enumerate() {
                let mut s = layer.bias.get(0, j);
                for (k, xk) in x.iter().enumerate() {
                    s += xk * layer.weight.get(k, j);
                }
                *yj = if s > 0.0 { s } else { 0.01 * s };
            }
            x = y;
        }
        x
    }

    fn random_features(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_params_keep_hidden_at_zero() {
        let mut tape = Tape::new();
        let nodes = GruParams::zeros(4).bind(&mut tape, false);
        let mlp = MlpParams::init(4, &mut ChaCha8Rng::seed_from_u64(0)).bind(&mut tape, false);
        let enc = EncoderNodes { gru: nodes, mlp };
        let f = Matrix::from_rows(&[[0.3, -2.0, 5.0]]);
        let h = enc.gru_forward(&mut tape, &f).unwrap();
        assert_eq!(tape.value(h), &Matrix::zeros(1, 4));
    }

    #[test]
    fn saturated_update_gate_with_zero_candidate() {
        let mut p = GruParams::zeros(3);
        p.b_z = Matrix::filled(1, 3, 50.0);
        let mut tape = Tape::new();
        let gru = p.bind(&mut tape, false);
        let x = tape.constant(Matrix::from_rows(&[[0.7]]));
        let h0 = tape.constant(Matrix::zeros(1, 3));
        let h = gru.step(&mut tape, x, h0).unwrap();
        assert!(tape.value(h).as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gru_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = GruParams::init(3, &mut rng);
        let window = [0.4, -0.9, 0.1, 0.75];
        let mut tape = Tape::new();
        let gru = p.bind(&mut tape, false);
        let mlp = MlpParams::init(3, &mut rng).bind(&mut tape, false);
        let enc = EncoderNodes { gru, mlp };
        let h = enc.gru_forward(&mut tape, &Matrix::from_rows(&[window])).unwrap();
        let expected = oracle_gru(&p, &window);
        for (a, b) in tape.value(h).as_slice().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn encode_batch_matches_per_row_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = EncoderParams::init(5, &mut rng);
        let feats = random_features(4, 8, &mut rng);
        let mut tape = Tape::new();
        let nodes = params.bind(&mut tape, true);
        let e = nodes.encode_batch(&mut tape, &feats, EncodeMode::Grad).unwrap();
        assert_eq!(tape.value(e).shape(), (4, 5));
        for i in 0..4 {
            let expected = oracle_mlp(&params.mlp, oracle_gru(&params.gru, feats.row(i)));
            for (a, b) in tape.value(e).row(i).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identical_windows_give_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = EncoderParams::init(6, &mut rng);
        let w: Vec<f64> = (0..7).map(|i| (i as f64 * 0.37).sin()).collect();
        let feats = Matrix::from_rows(&[w.clone(), w]);
        let e = encode_inference(&params, &feats).unwrap();
        assert_eq!(e.row(0), e.row(1));
    }

    #[test]
    fn detached_and_grad_modes_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = EncoderParams::init(4, &mut rng);
        let feats = random_features(3, 6, &mut rng);

        let mut tape = Tape::new();
        let nodes = params.bind(&mut tape, true);
        let g = nodes.encode_batch(&mut tape, &feats, EncodeMode::Grad).unwrap();
        let d = nodes.encode_batch(&mut tape, &feats, EncodeMode::Detached).unwrap();
        assert_eq!(tape.value(g), tape.value(d));
        assert_eq!(tape.value(g), &encode_inference(&params, &feats).unwrap());
        assert_eq!(
            encode_inference(&params, &feats).unwrap(),
            encode_inference(&params, &feats).unwrap()
        );

        // no gradient reaches the parameters through the detached result
        let s = tape.sum(d);
        let grads = tape.backward(s).unwrap();
        assert!(nodes.ids().iter().all(|&id| grads.get(id).is_none()));
    }

    #[test]
    fn hidden_state_stays_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = EncoderParams::init(8, &mut rng);
        let feats = Matrix::from_fn(5, 12, |i, j| ((i * 12 + j) as f64).sin() * 10.0);
        let mut tape = Tape::new();
        let nodes = params.bind(&mut tape, false);
        let h = nodes.gru_forward(&mut tape, &feats).unwrap();
        assert!(tape.value(h).as_slice().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn gru_step_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = GruParams::init(3, &mut rng);
        let weights = random_features(2, 3, &mut rng);
        let x0 = random_features(2, 1, &mut rng);
        let h0 = random_features(2, 3, &mut rng);
        let params: Vec<Matrix> = p.named().into_iter().map(|(_, m)| m.clone()).chain([h0]).collect();
        let check = finite_difference_check(&params, 1e-5, |t, ids| {
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
            let x = t.constant(x0.clone());
            let h = gru.step(t, x, ids[9])?;
            let h = gru.step(t, x, h)?;
            let w = t.constant(weights.clone());
            let prod = t.mul(h, w)?;
            Ok(t.sum(prod))
        })
        .unwrap();
        assert!(check.passes(1e-4), "{check:?}");
    }

    #[test]
    fn bank_means_and_size() {
        let series = synthetic_sinusoids(60, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = EncoderParams::init(4, &mut rng);
        let seg = Segment { start: 0, end: 36 };
        let bank = build_bank(&series, seg, &params, 6, 2, 0).unwrap();
        assert_eq!(bank.len(), seg.valid_timestamps(6, 2).unwrap().len());
        for i in 0..bank.len() {
            let e = bank.embeddings(i);
            for j in 0..e.cols() {
                let mean: f64 = (0..e.rows()).map(|r| e.get(r, j)).sum::<f64>() / e.rows() as f64;
                assert!((bank.means().get(i, j) - mean).abs() <= 1e-12);
            }
        }

        let mut perturbed = params.clone();
        perturbed.gru.u_z.set(0, 0, perturbed.gru.u_z.get(0, 0) + 0.1);
        let rebuilt = build_bank(&series, seg, &perturbed, 6, 2, 1).unwrap();
        assert_ne!(rebuilt.means(), bank.means());
        assert_eq!(rebuilt.epoch(), 1);
    }

    #[test]
    fn bank_mean_example() {
        let e = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let bank = EmbeddingBank::from_embeddings(vec![0], vec![e], 0).unwrap();
        assert_eq!(bank.means().row(0), &[0.5, 0.5]);
    }

    #[test]
    fn bank_build_is_thread_count_independent() {
        let series = synthetic_sinusoids(80, 3, 8);
        let params = EncoderParams::init(5, &mut ChaCha8Rng::seed_from_u64(3));
        let seg = Segment { start: 0, end: 48 };
        let parallel = build_bank(&series, seg, &params, 8, 3, 0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| build_bank(&series, seg, &params, 8, 3, 0).unwrap());
        assert_eq!(parallel, single);
    }
}
