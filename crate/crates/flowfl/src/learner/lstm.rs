//! LSTM forward pass and backpropagation through time.
//!
//! One recurrent layer over the input history; the final hidden state
//! (sequences are not returned) feeds a dense layer that emits the whole
//! horizon at once. Gates are ordered input/forget/cell/output within the
//! stacked weight rows.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::{LstmArch, ModelWeights, COORDS};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Offsets of each parameter block inside the flat vector.
struct Layout {
    wx: usize,
    wh: usize,
    b: usize,
    wd: usize,
    bd: usize,
    end: usize,
}

fn layout(arch: &LstmArch) -> Layout {
    let gates = 4 * arch.hidden;
    let wx = 0;
    let wh = wx + gates * COORDS;
    let b = wh + gates * arch.hidden;
    let wd = b + gates;
    let bd = wd + arch.output_dim() * arch.hidden;
    let end = bd + arch.output_dim();
    Layout {
        wx,
        wh,
        b,
        wd,
        bd,
        end,
    }
}

pub(super) fn init(arch: LstmArch, rng: &mut ChaCha12Rng) -> ModelWeights {
    let lo = layout(&arch);
    let mut values = vec![0.0; lo.end];
    let mut fill = |range: std::ops::Range<usize>, fan_in: usize, values: &mut Vec<f64>| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[range] {
            *v = rng.gen_range(-bound..bound);
        }
    };
    fill(lo.wx..lo.wh, COORDS, &mut values);
    fill(lo.wh..lo.b, arch.hidden, &mut values);
    // Gate biases stay zero except the forget gate, which starts open so
    // the cell state survives long histories from the first updates.
    for v in &mut values[lo.b + arch.hidden..lo.b + 2 * arch.hidden] {
        *v = 1.0;
    }
    fill(lo.wd..lo.bd, arch.hidden, &mut values);
    ModelWeights {
        arch: super::Arch::Lstm(arch),
        values,
    }
}

/// Per-step activations cached for the backward pass.
struct StepCache {
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_g: Vec<f64>,
    gate_o: Vec<f64>,
    cell_prev: Vec<f64>,
    cell_tanh: Vec<f64>,
    hidden_prev: Vec<f64>,
}

fn run_forward(
    arch: &LstmArch,
    values: &[f64],
    input: &[(f64, f64)],
    caches: Option<&mut Vec<StepCache>>,
) -> (Vec<f64>, Vec<f64>) {
    let h_dim = arch.hidden;
    let gates = 4 * h_dim;
    let lo = layout(arch);
    let wx = &values[lo.wx..lo.wh];
    let wh = &values[lo.wh..lo.b];
    let b = &values[lo.b..lo.wd];

    let mut hidden = vec![0.0; h_dim];
    let mut cell = vec![0.0; h_dim];
    let mut caches = caches;

    for &(x0, x1) in input {
        let mut z = b.to_vec();
        for g in 0..gates {
            z[g] += wx[g * COORDS] * x0 + wx[g * COORDS + 1] * x1;
            let row = &wh[g * h_dim..(g + 1) * h_dim];
            z[g] += row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        let gate_i: Vec<f64> = z[..h_dim].iter().map(|&v| sigmoid(v)).collect();
        let gate_f: Vec<f64> = z[h_dim..2 * h_dim].iter().map(|&v| sigmoid(v)).collect();
        let gate_g: Vec<f64> = z[2 * h_dim..3 * h_dim].iter().map(|&v| v.tanh()).collect();
        let gate_o: Vec<f64> = z[3 * h_dim..].iter().map(|&v| sigmoid(v)).collect();

        let cell_prev = cell.clone();
        for j in 0..h_dim {
            cell[j] = gate_f[j] * cell_prev[j] + gate_i[j] * gate_g[j];
        }
        let cell_tanh: Vec<f64> = cell.iter().map(|&v| v.tanh()).collect();
        let hidden_prev = hidden.clone();
        for j in 0..h_dim {
            hidden[j] = gate_o[j] * cell_tanh[j];
        }

        if let Some(caches) = caches.as_deref_mut() {
            caches.push(StepCache {
                gate_i,
                gate_f,
                gate_g,
                gate_o,
                cell_prev,
                cell_tanh,
                hidden_prev,
            });
        }
    }
    (hidden, cell)
}

fn dense(arch: &LstmArch, values: &[f64], dense_input: &[f64]) -> Vec<f64> {
    let lo = layout(arch);
    let wd = &values[lo.wd..lo.bd];
    let bd = &values[lo.bd..lo.end];
    let out_dim = arch.output_dim();
    let mut y = bd.to_vec();
    for (k, yk) in y.iter_mut().enumerate().take(out_dim) {
        let row = &wd[k * arch.hidden..(k + 1) * arch.hidden];
        *yk += row.iter().zip(dense_input).map(|(w, u)| w * u).sum::<f64>();
    }
    y
}

/// Forward pass for one sample. `mask`, when given, scales the dense
/// input element-wise (inverted dropout during training).
pub(super) fn forward(
    arch: &LstmArch,
    values: &[f64],
    input: &[(f64, f64)],
    mask: Option<&[f64]>,
) -> Vec<(f64, f64)> {
    let (hidden, _) = run_forward(arch, values, input, None);
    let dense_input: Vec<f64> = match mask {
        Some(m) => hidden.iter().zip(m).map(|(h, m)| h * m).collect(),
        None => hidden,
    };
    let y = dense(arch, values, &dense_input);
    y.chunks_exact(COORDS).map(|c| (c[0], c[1])).collect()
}

/// Mean loss over the batch and the gradient of that mean with respect to
/// every parameter, in canonical order.
pub(super) fn batch_gradient(
    arch: &LstmArch,
    values: &[f64],
    inputs: &[Vec<(f64, f64)>],
    targets: &[Vec<(f64, f64)>],
    masks: Option<&[Vec<f64>]>,
) -> (f64, Vec<f64>) {
    let h_dim = arch.hidden;
    let gates = 4 * h_dim;
    let out_dim = arch.output_dim();
    let lo = layout(arch);
    let wh = &values[lo.wh..lo.b];
    let wd = &values[lo.wd..lo.bd];

    let mut grad = vec![0.0; values.len()];
    let mut loss_sum = 0.0;
    let batch_size = inputs.len() as f64;

    for (s, (input, target)) in inputs.iter().zip(targets).enumerate() {
        let mut caches = Vec::with_capacity(input.len());
        let (hidden_last, _) = run_forward(arch, values, input, Some(&mut caches));
        let mask = masks.map(|m| m[s].as_slice());
        let dense_input: Vec<f64> = match mask {
            Some(m) => hidden_last.iter().zip(m).map(|(h, m)| h * m).collect(),
            None => hidden_last.clone(),
        };
        let y = dense(arch, values, &dense_input);

        // dL/dy for the per-sample mean-squared error over out_dim scalars.
        let mut dy = vec![0.0; out_dim];
        let mut sample_loss = 0.0;
        for (k, dyk) in dy.iter_mut().enumerate() {
            let t = if k % 2 == 0 {
                target[k / 2].0
            } else {
                target[k / 2].1
            };
            let diff = y[k] - t;
            sample_loss += diff * diff;
            *dyk = 2.0 * diff / out_dim as f64;
        }
        loss_sum += sample_loss / out_dim as f64;

        // Dense layer backward.
        let mut d_dense_input = vec![0.0; h_dim];
        for k in 0..out_dim {
            grad[lo.bd + k] += dy[k];
            let row = lo.wd + k * h_dim;
            for j in 0..h_dim {
                grad[row + j] += dy[k] * dense_input[j];
                d_dense_input[j] += wd[k * h_dim + j] * dy[k];
            }
        }
        let mut d_hidden: Vec<f64> = match mask {
            Some(m) => d_dense_input.iter().zip(m).map(|(d, m)| d * m).collect(),
            None => d_dense_input,
        };
        let mut d_cell = vec![0.0; h_dim];

        // Backpropagation through time.
        for (t, cache) in caches.iter().enumerate().rev() {
            let mut d_gates = vec![0.0; gates];
            for j in 0..h_dim {
                let d_out = d_hidden[j] * cache.cell_tanh[j];
                d_cell[j] += d_hidden[j] * cache.gate_o[j] * (1.0 - cache.cell_tanh[j].powi(2));
                let d_in = d_cell[j] * cache.gate_g[j];
                let d_g = d_cell[j] * cache.gate_i[j];
                let d_forget = d_cell[j] * cache.cell_prev[j];
                d_gates[j] = d_in * cache.gate_i[j] * (1.0 - cache.gate_i[j]);
                d_gates[h_dim + j] = d_forget * cache.gate_f[j] * (1.0 - cache.gate_f[j]);
                d_gates[2 * h_dim + j] = d_g * (1.0 - cache.gate_g[j].powi(2));
                d_gates[3 * h_dim + j] = d_out * cache.gate_o[j] * (1.0 - cache.gate_o[j]);
            }

            let (x0, x1) = input[t];
            for g in 0..gates {
                grad[lo.wx + g * COORDS] += d_gates[g] * x0;
                grad[lo.wx + g * COORDS + 1] += d_gates[g] * x1;
                grad[lo.b + g] += d_gates[g];
                let row = lo.wh + g * h_dim;
                for j in 0..h_dim {
                    grad[row + j] += d_gates[g] * cache.hidden_prev[j];
                }
            }

            for j in 0..h_dim {
                d_hidden[j] = (0..gates).map(|g| wh[g * h_dim + j] * d_gates[g]).sum();
                d_cell[j] *= cache.gate_f[j];
            }
        }
    }

    for g in &mut grad {
        *g /= batch_size;
    }
    (loss_sum / batch_size, grad)
}
