//! Gradient-descent optimizers.

/// Which update rule a learner applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Accumulator `a <- rho*a + (1-rho)*g^2`, update
    /// `w <- w - lr*g/(sqrt(a) + eps)`.
    RmsProp,
    /// Plain `w <- w - lr*g`.
    Sgd,
}

/// Optimizer hyperparameters plus the per-parameter accumulator vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub epsilon: f64,
    accumulators: Vec<f64>,
}

impl OptimizerState {
    pub fn rmsprop(learning_rate: f64, rms_decay: f64, epsilon: f64, params: usize) -> Self {
        OptimizerState {
            kind: OptimizerKind::RmsProp,
            learning_rate,
            rms_decay,
            epsilon,
            accumulators: vec![0.0; params],
        }
    }

    pub fn sgd(learning_rate: f64, params: usize) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            learning_rate,
            rms_decay: 0.0,
            epsilon: 0.0,
            accumulators: vec![0.0; params],
        }
    }

    /// Applies one update in place. Weight and gradient lengths must match
    /// the accumulator length this state was built for.
    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        assert_eq!(weights.len(), self.accumulators.len());
        assert_eq!(grad.len(), self.accumulators.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, g) in weights.iter_mut().zip(grad) {
                    *w -= self.learning_rate * g;
                }
            }
            OptimizerKind::RmsProp => {
                for ((w, g), acc) in weights.iter_mut().zip(grad).zip(&mut self.accumulators) {
                    *acc = self.rms_decay * *acc + (1.0 - self.rms_decay) * g * g;
                    *w -= self.learning_rate * g / (acc.sqrt() + self.epsilon);
                }
            }
        }
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accumulators
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_is_w_minus_lr_g() {
        let mut w = vec![1.0, -2.0, 0.5];
        let g = vec![0.1, 0.2, -0.4];
        let mut opt = OptimizerState::sgd(0.5, 3);
        opt.step(&mut w, &g);
        assert_eq!(w, vec![0.95, -2.1, 0.7]);
    }

    #[test]
    fn rmsprop_follows_the_update_rule() {
        let mut w = vec![1.0];
        let g = vec![2.0];
        let mut opt = OptimizerState::rmsprop(0.1, 0.9, 1e-7, 1);
        opt.step(&mut w, &g);
        // acc = 0.1*4 = 0.4; w = 1 - 0.1*2/(sqrt(0.4)+1e-7)
        let expected = 1.0 - 0.1 * 2.0 / (0.4f64.sqrt() + 1e-7);
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((opt.accumulators()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_accumulators_stay_non_negative() {
        let mut w = vec![0.0; 4];
        let mut opt = OptimizerState::rmsprop(1e-3, 0.9, 1e-7, 4);
        for k in 0..50 {
            let g: Vec<f64> = (0..4).map(|j| ((k * j) as f64).sin()).collect();
            opt.step(&mut w, &g);
            assert!(opt.accumulators().iter().all(|&a| a >= 0.0));
        }
    }
}
