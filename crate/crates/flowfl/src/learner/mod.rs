//! The local ML stack: an LSTM sequence forecaster with reverse-mode
//! gradients written out by hand, a linear reference model used by the
//! oracle tests, MSE loss, and RMSProp/SGD optimizers.
//!
//! A model consumes a history of 32 planar points and emits the next 48
//! in one shot. All arithmetic is `f64`; the interchange encoding of
//! weights is little-endian `f32` behind an architecture hash, which is
//! what `weights.bin` contains.

mod linear;
mod lstm;
mod optim;

pub use optim::{OptimizerKind, OptimizerState};

use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Planar coordinates per trajectory point.
pub const COORDS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("input has {got} points, model expects {expected}")]
    WrongInputLength { expected: usize, got: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("non-finite loss {loss}: training diverged")]
    NonFiniteLoss { loss: f64 },
    #[error("weight blob does not match architecture {descriptor}")]
    ArchMismatch { descriptor: String },
    #[error("malformed weight blob: {reason}")]
    MalformedEncoding { reason: String },
    #[error("weight vector has {got} values, architecture implies {expected}")]
    WrongParamCount { expected: usize, got: usize },
}

/// LSTM architecture: one recurrent layer, final hidden state only, then
/// a dense readout of the whole horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmArch {
    pub hidden: usize,
    pub input_len: usize,
    pub horizon: usize,
}

impl LstmArch {
    /// 32 observed points, hidden dimension 16, 48 predicted points
    /// (96 dense outputs).
    pub fn standard() -> Self {
        LstmArch {
            hidden: 16,
            input_len: 32,
            horizon: 48,
        }
    }

    pub fn output_dim(&self) -> usize {
        COORDS * self.horizon
    }

    pub fn param_count(&self) -> usize {
        let gates = 4 * self.hidden;
        gates * COORDS               // input weights
            + gates * self.hidden    // recurrent weights
            + gates                  // gate biases
            + self.output_dim() * self.hidden // dense weights
            + self.output_dim()      // dense biases
    }
}

/// Linear reference model: flattened history, one affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearArch {
    pub input_len: usize,
    pub horizon: usize,
}

impl LinearArch {
    pub fn feature_dim(&self) -> usize {
        COORDS * self.input_len
    }

    pub fn output_dim(&self) -> usize {
        COORDS * self.horizon
    }

    pub fn param_count(&self) -> usize {
        self.output_dim() * self.feature_dim() + self.output_dim()
    }
}

/// Model architecture descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Lstm(LstmArch),
    Linear(LinearArch),
}

impl Arch {
    pub fn param_count(&self) -> usize {
        match self {
            Arch::Lstm(a) => a.param_count(),
            Arch::Linear(a) => a.param_count(),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Arch::Lstm(a) => a.input_len,
            Arch::Linear(a) => a.input_len,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Arch::Lstm(a) => a.horizon,
            Arch::Linear(a) => a.horizon,
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Arch::Lstm(a) => format!(
                "lstm/in{}/h{}/len{}/hor{}",
                COORDS, a.hidden, a.input_len, a.horizon
            ),
            Arch::Linear(a) => format!("linear/in{}/len{}/hor{}", COORDS, a.input_len, a.horizon),
        }
    }

    /// First 8 bytes of the descriptor digest; prefixes every weight blob.
    pub fn hash8(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.descriptor().as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }
}

/// A flat parameter vector in canonical order plus its architecture.
///
/// Canonical order for the LSTM: input weights (gate-major, gates ordered
/// input/forget/cell/output), recurrent weights, gate biases, dense
/// weights (output-major), dense biases. For the linear model: weights
/// (output-major), then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub arch: Arch,
    pub values: Vec<f64>,
}

impl ModelWeights {
    pub fn zeros(arch: Arch) -> Self {
        ModelWeights {
            values: vec![0.0; arch.param_count()],
            arch,
        }
    }

    pub fn from_values(arch: Arch, values: Vec<f64>) -> Result<Self, LearnerError> {
        if values.len() != arch.param_count() {
            return Err(LearnerError::WrongParamCount {
                expected: arch.param_count(),
                got: values.len(),
            });
        }
        Ok(ModelWeights { arch, values })
    }

    /// Random initialization: each weight matrix uniform in
    /// `±1/sqrt(fan_in)`, biases zero except the LSTM forget gate at 1.
    pub fn init(arch: Arch, rng: &mut ChaCha12Rng) -> Self {
        match arch {
            Arch::Lstm(a) => lstm::init(a, rng),
            Arch::Linear(a) => linear::init(a, rng),
        }
    }

    /// Interchange encoding: 8-byte architecture hash, then every value
    /// as a little-endian IEEE-754 `f32` in canonical order. Identical
    /// across platforms; re-encoding a decoded blob is byte-identical.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend_from_slice(&self.arch.hash8());
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(arch: Arch, bytes: &[u8]) -> Result<Self, LearnerError> {
        if bytes.len() < 8 {
            return Err(LearnerError::MalformedEncoding {
                reason: format!("blob of {} bytes lacks the hash prefix", bytes.len()),
            });
        }
        if bytes[..8] != arch.hash8() {
            return Err(LearnerError::ArchMismatch {
                descriptor: arch.descriptor(),
            });
        }
        let body = &bytes[8..];
        let expected = 4 * arch.param_count();
        if body.len() != expected {
            return Err(LearnerError::MalformedEncoding {
                reason: format!("payload of {} bytes, expected {expected}", body.len()),
            });
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(ModelWeights { arch, values })
    }

    /// Full-precision encoding used on the simulated wire, where weights
    /// travel between aggregation steps without rounding.
    pub fn encode_exact(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.values.len());
        out.extend_from_slice(&self.arch.hash8());
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode_exact(arch: Arch, bytes: &[u8]) -> Result<Self, LearnerError> {
        if bytes.len() < 8 || bytes[..8] != arch.hash8() {
            return Err(LearnerError::ArchMismatch {
                descriptor: arch.descriptor(),
            });
        }
        let body = &bytes[8..];
        let expected = 8 * arch.param_count();
        if body.len() != expected {
            return Err(LearnerError::MalformedEncoding {
                reason: format!("payload of {} bytes, expected {expected}", body.len()),
            });
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ModelWeights { arch, values })
    }
}

/// Paired histories and ground-truth horizons.
#[derive(Debug, Clone, Default)]
pub struct TrainingBatch {
    pub inputs: Vec<Vec<(f64, f64)>>,
    pub targets: Vec<Vec<(f64, f64)>>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, input: Vec<(f64, f64)>, target: Vec<(f64, f64)>) {
        self.inputs.push(input);
        self.targets.push(target);
    }
}

/// Predicts the horizon from one history. Evaluation mode: dropout off.
pub fn forward(weights: &ModelWeights, input: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, LearnerError> {
    if input.len() != weights.arch.input_len() {
        return Err(LearnerError::WrongInputLength {
            expected: weights.arch.input_len(),
            got: input.len(),
        });
    }
    Ok(match weights.arch {
        Arch::Lstm(a) => lstm::forward(&a, &weights.values, input, None),
        Arch::Linear(a) => linear::forward(&a, &weights.values, input),
    })
}

/// Mean squared error over all scalar components of the two point
/// sequences.
pub fn mse_loss(predicted: &[(f64, f64)], target: &[(f64, f64)]) -> Result<f64, LearnerError> {
    if predicted.len() != target.len() {
        return Err(LearnerError::ShapeMismatch {
            expected: target.len(),
            got: predicted.len(),
        });
    }
    let n = (COORDS * predicted.len()) as f64;
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p.0 - t.0).powi(2) + (p.1 - t.1).powi(2))
        .sum();
    Ok(sum / n)
}

/// Batch loss and gradient by reverse-mode differentiation.
///
/// `dropout_masks`, when present, holds one mask per sample applied to the
/// dense input (inverted-dropout scaling, so evaluation needs no
/// rescaling); `None` disables dropout. The returned gradient matches the
/// canonical weight order.
pub fn batch_gradient(
    weights: &ModelWeights,
    inputs: &[Vec<(f64, f64)>],
    targets: &[Vec<(f64, f64)>],
    dropout_masks: Option<&[Vec<f64>]>,
) -> Result<(f64, Vec<f64>), LearnerError> {
    if inputs.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    if inputs.len() != targets.len() {
        return Err(LearnerError::ShapeMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    for input in inputs {
        if input.len() != weights.arch.input_len() {
            return Err(LearnerError::WrongInputLength {
                expected: weights.arch.input_len(),
                got: input.len(),
            });
        }
    }
    for target in targets {
        if target.len() != weights.arch.horizon() {
            return Err(LearnerError::ShapeMismatch {
                expected: weights.arch.horizon(),
                got: target.len(),
            });
        }
    }
    if let Some(masks) = dropout_masks {
        if masks.len() != inputs.len() {
            return Err(LearnerError::ShapeMismatch {
                expected: inputs.len(),
                got: masks.len(),
            });
        }
    }
    Ok(match weights.arch {
        Arch::Lstm(a) => lstm::batch_gradient(&a, &weights.values, inputs, targets, dropout_masks),
        Arch::Linear(a) => linear::batch_gradient(&a, &weights.values, inputs, targets),
    })
}

/// Epoch settings shared by every learner in a run.
#[derive(Debug, Clone, Copy)]
pub struct TrainSettings {
    pub minibatch: usize,
    /// Dropout rate on the dense input; LSTM only, training only.
    pub dropout: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            minibatch: 32,
            dropout: 0.2,
        }
    }
}

/// One pass over the batch in a seeded shuffle order, applying one
/// optimizer update per minibatch. Returns the mean training loss across
/// samples. A non-finite loss aborts with a divergence diagnostic.
pub fn train_epoch(
    weights: &mut ModelWeights,
    batch: &TrainingBatch,
    optimizer: &mut OptimizerState,
    settings: &TrainSettings,
    rng: &mut ChaCha12Rng,
) -> Result<f64, LearnerError> {
    use rand::seq::SliceRandom;
    use rand::Rng;

    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let n = batch.len();
    let minibatch = settings.minibatch.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let use_dropout = settings.dropout > 0.0 && matches!(weights.arch, Arch::Lstm(_));
    let hidden = match weights.arch {
        Arch::Lstm(a) => a.hidden,
        Arch::Linear(_) => 0,
    };

    let mut loss_sum = 0.0;
    for chunk in order.chunks(minibatch) {
        let inputs: Vec<Vec<(f64, f64)>> =
            chunk.iter().map(|&i| batch.inputs[i].clone()).collect();
        let targets: Vec<Vec<(f64, f64)>> =
            chunk.iter().map(|&i| batch.targets[i].clone()).collect();
        let masks: Option<Vec<Vec<f64>>> = use_dropout.then(|| {
            let keep_scale = 1.0 / (1.0 - settings.dropout);
            chunk
                .iter()
                .map(|_| {
                    (0..hidden)
                        .map(|_| {
                            if rng.gen::<f64>() < settings.dropout {
                                0.0
                            } else {
                                keep_scale
                            }
                        })
                        .collect()
                })
                .collect()
        });
        let (loss, grad) = batch_gradient(weights, &inputs, &targets, masks.as_deref())?;
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss { loss });
        }
        optimizer.step(&mut weights.values, &grad);
        loss_sum += loss * chunk.len() as f64;
    }
    Ok(loss_sum / n as f64)
}

/// Mean MSE over a validation set with dropout disabled. An empty set is
/// an explicit absent result, not an error.
pub fn validation_loss(
    weights: &ModelWeights,
    validation: &TrainingBatch,
) -> Result<Option<f64>, LearnerError> {
    if validation.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for (input, target) in validation.inputs.iter().zip(&validation.targets) {
        let predicted = forward(weights, input)?;
        sum += mse_loss(&predicted, target)?;
    }
    Ok(Some(sum / validation.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn rng() -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(11)
    }

    fn tiny_lstm() -> Arch {
        Arch::Lstm(LstmArch {
            hidden: 3,
            input_len: 4,
            horizon: 2,
        })
    }

    #[test]
    fn standard_arch_parameter_count() {
        // 4*16*2 + 4*16*16 + 4*16 + 96*16 + 96
        assert_eq!(Arch::Lstm(LstmArch::standard()).param_count(), 2848);
    }

    #[test]
    fn zero_weights_predict_zero() {
        let w = ModelWeights::zeros(tiny_lstm());
        let input = vec![(1.0, -2.0); 4];
        let out = forward(&w, &input).unwrap();
        assert!(out.iter().all(|&(x, y)| x == 0.0 && y == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let w = ModelWeights::init(tiny_lstm(), &mut rng());
        let input = vec![(0.5, 0.25), (0.1, -0.3), (0.0, 0.2), (-0.4, 0.9)];
        assert_eq!(forward(&w, &input).unwrap(), forward(&w, &input).unwrap());
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let w = ModelWeights::zeros(tiny_lstm());
        assert_eq!(
            forward(&w, &[(0.0, 0.0); 3]),
            Err(LearnerError::WrongInputLength {
                expected: 4,
                got: 3
            })
        );
    }

    #[test]
    fn mse_basics() {
        let a = vec![(0.0, 0.0), (1.0, 1.0)];
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let b: Vec<(f64, f64)> = a.iter().map(|&(x, y)| (x + 1.0, y + 1.0)).collect();
        assert_eq!(mse_loss(&b, &a).unwrap(), 1.0);
        // Two-point case {(0,0)} vs {(1,1)}: mean over 2 scalars of 1.
        assert_eq!(mse_loss(&[(0.0, 0.0)], &[(1.0, 1.0)]).unwrap(), 1.0);
        assert!(mse_loss(&a, &[(0.0, 0.0)]).is_err());
    }

    #[test]
    fn encode_decode_round_trip_is_byte_identical() {
        let w = ModelWeights::init(tiny_lstm(), &mut rng());
        let blob = w.encode();
        let decoded = ModelWeights::decode(tiny_lstm(), &blob).unwrap();
        assert_eq!(decoded.encode(), blob);
    }

    #[test]
    fn exact_encoding_preserves_f64() {
        let w = ModelWeights::init(tiny_lstm(), &mut rng());
        let decoded = ModelWeights::decode_exact(tiny_lstm(), &w.encode_exact()).unwrap();
        assert_eq!(decoded.values, w.values);
    }

    #[test]
    fn decode_rejects_wrong_arch() {
        let w = ModelWeights::zeros(tiny_lstm());
        let other = Arch::Linear(LinearArch {
            input_len: 4,
            horizon: 2,
        });
        assert!(matches!(
            ModelWeights::decode(other, &w.encode()),
            Err(LearnerError::ArchMismatch { .. })
        ));
    }

    #[test]
    fn rmsprop_with_zero_gradients_leaves_weights_unchanged() {
        let mut w = ModelWeights::init(tiny_lstm(), &mut rng());
        let before = w.values.clone();
        let mut opt = OptimizerState::rmsprop(1e-3, 0.9, 1e-7, w.values.len());
        opt.step(&mut w.values, &vec![0.0; before.len()]);
        assert_eq!(w.values, before);
    }

    #[test]
    fn training_reduces_loss_on_learnable_synthetic_batch() {
        // Straight-line trajectories, which the LSTM fits easily.
        let arch = Arch::Lstm(LstmArch {
            hidden: 8,
            input_len: 8,
            horizon: 4,
        });
        let mut r = rng();
        let mut batch = TrainingBatch::default();
        for k in 0..32 {
            let vx = 0.02 + 0.001 * k as f64;
            let vy = -0.01 + 0.0005 * k as f64;
            let path: Vec<(f64, f64)> = (0..12).map(|t| (vx * t as f64, vy * t as f64)).collect();
            batch.push(path[..8].to_vec(), path[8..].to_vec());
        }
        let mut w = ModelWeights::init(arch, &mut r);
        let mut opt = OptimizerState::rmsprop(1e-2, 0.9, 1e-7, w.values.len());
        let settings = TrainSettings {
            minibatch: 8,
            dropout: 0.0,
        };
        let before = validation_loss(&w, &batch).unwrap().unwrap();
        let mut last = before;
        for _ in 0..5 {
            last = train_epoch(&mut w, &batch, &mut opt, &settings, &mut r).unwrap();
        }
        let after = validation_loss(&w, &batch).unwrap().unwrap();
        assert!(after < before, "loss {before} -> {after}");
        assert!(last < before);
    }

    #[test]
    fn training_determinism_fixed_seed_identical_trajectories() {
        let arch = tiny_lstm();
        let mut batch = TrainingBatch::default();
        for k in 0..10 {
            let base = 0.1 * k as f64;
            batch.push(
                (0..4).map(|t| (base + 0.01 * t as f64, -base)).collect(),
                (0..2).map(|t| (base + 0.04 + 0.01 * t as f64, -base)).collect(),
            );
        }
        let run = || {
            let mut w = ModelWeights::init(arch, &mut rng());
            let mut opt = OptimizerState::rmsprop(1e-3, 0.9, 1e-7, w.values.len());
            let mut train_rng = ChaCha12Rng::seed_from_u64(3);
            for _ in 0..3 {
                train_epoch(
                    &mut w,
                    &batch,
                    &mut opt,
                    &TrainSettings {
                        minibatch: 4,
                        dropout: 0.2,
                    },
                    &mut train_rng,
                )
                .unwrap();
            }
            w.values
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn validation_is_independent_of_dropout_rng() {
        let w = ModelWeights::init(tiny_lstm(), &mut rng());
        let mut batch = TrainingBatch::default();
        batch.push(vec![(0.1, 0.2); 4], vec![(0.3, 0.4); 2]);
        let a = validation_loss(&w, &batch).unwrap();
        let b = validation_loss(&w, &batch).unwrap();
        assert_eq!(a, b);
        assert!(a.unwrap() >= 0.0);
    }

    #[test]
    fn validation_of_empty_set_is_absent() {
        let w = ModelWeights::zeros(tiny_lstm());
        assert_eq!(validation_loss(&w, &TrainingBatch::default()), Ok(None));
    }

    #[test]
    fn constant_zero_predictor_on_unit_offset_targets_scores_one() {
        let w = ModelWeights::zeros(tiny_lstm());
        let mut batch = TrainingBatch::default();
        let norm = 1.0 / 2.0f64.sqrt();
        batch.push(vec![(0.0, 0.0); 4], vec![(norm, norm); 2]);
        assert!((validation_loss(&w, &batch).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut w = ModelWeights::zeros(tiny_lstm());
        let mut opt = OptimizerState::sgd(0.1, w.values.len());
        let err = train_epoch(
            &mut w,
            &TrainingBatch::default(),
            &mut opt,
            &TrainSettings::default(),
            &mut rng(),
        );
        assert_eq!(err, Err(LearnerError::EmptyBatch));
    }
}
