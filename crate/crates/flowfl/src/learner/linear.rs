//! Linear reference model: the flattened history mapped to the horizon by
//! a single affine layer. Its closed-form least-squares gradient makes it
//! the oracle half of the aggregation equivalence checks.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::{LinearArch, ModelWeights, COORDS};

pub(super) fn init(arch: LinearArch, rng: &mut ChaCha12Rng) -> ModelWeights {
    let feat = arch.feature_dim();
    let out = arch.output_dim();
    let bound = 1.0 / (feat as f64).sqrt();
    let mut values = vec![0.0; arch.param_count()];
    for v in &mut values[..out * feat] {
        *v = rng.gen_range(-bound..bound);
    }
    ModelWeights {
        arch: super::Arch::Linear(arch),
        values,
    }
}

fn features(input: &[(f64, f64)]) -> Vec<f64> {
    let mut feat = Vec::with_capacity(COORDS * input.len());
    for &(x, y) in input {
        feat.push(x);
        feat.push(y);
    }
    feat
}

pub(super) fn forward(arch: &LinearArch, values: &[f64], input: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let feat = features(input);
    let feat_dim = arch.feature_dim();
    let out_dim = arch.output_dim();
    let weights = &values[..out_dim * feat_dim];
    let biases = &values[out_dim * feat_dim..];
    let mut y = biases.to_vec();
    for (k, yk) in y.iter_mut().enumerate() {
        let row = &weights[k * feat_dim..(k + 1) * feat_dim];
        *yk += row.iter().zip(&feat).map(|(w, f)| w * f).sum::<f64>();
    }
    y.chunks_exact(COORDS).map(|c| (c[0], c[1])).collect()
}

pub(super) fn batch_gradient(
    arch: &LinearArch,
    values: &[f64],
    inputs: &[Vec<(f64, f64)>],
    targets: &[Vec<(f64, f64)>],
) -> (f64, Vec<f64>) {
    let feat_dim = arch.feature_dim();
    let out_dim = arch.output_dim();
    let mut grad = vec![0.0; values.len()];
    let mut loss_sum = 0.0;
    let batch_size = inputs.len() as f64;

    for (input, target) in inputs.iter().zip(targets) {
        let feat = features(input);
        let predicted = forward(arch, values, input);
        let mut sample_loss = 0.0;
        for k in 0..out_dim {
            let (p, t) = if k % 2 == 0 {
                (predicted[k / 2].0, target[k / 2].0)
            } else {
                (predicted[k / 2].1, target[k / 2].1)
            };
            let diff = p - t;
            sample_loss += diff * diff;
            let dy = 2.0 * diff / out_dim as f64;
            grad[out_dim * feat_dim + k] += dy;
            let row = k * feat_dim;
            for (j, f) in feat.iter().enumerate() {
                grad[row + j] += dy * f;
            }
        }
        loss_sum += sample_loss / out_dim as f64;
    }

    for g in &mut grad {
        *g /= batch_size;
    }
    (loss_sum / batch_size, grad)
}
