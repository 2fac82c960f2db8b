use serde::{Deserialize, Serialize};

use super::{flush, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// `acc = rho*acc + (1-rho)*g^2; w -= lr*g/sqrt(acc+eps)`, no momentum.
    RmsProp { rho: f32, eps: f32 },
    /// Bias-corrected Adam.
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

impl OptimizerKind {
    pub fn rmsprop() -> Self {
        OptimizerKind::RmsProp { rho: 0.99, eps: 1e-8 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f32,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f32, params: &[&Tensor]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.numel()]).collect::<Vec<_>>();
        Self {
            kind,
            lr,
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f32 {
        self.lr
    }

    /// Applies one update; `params[i]` pairs with `grads[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f32>]) {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        self.steps += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let w = p.data_mut();
            assert_eq!(w.len(), g.len(), "gradient shape mismatch");
            match self.kind {
                OptimizerKind::RmsProp { rho, eps } => {
                    let acc = &mut self.first[i];
                    for ((w, &g), a) in w.iter_mut().zip(g).zip(acc.iter_mut()) {
                        *a = flush(rho * *a + (1.0 - rho) * g * g);
                        *w -= self.lr * g / (*a + eps).sqrt();
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.steps);
                    let c2 = 1.0 - beta2.powi(self.steps);
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = flush(beta1 * *m + (1.0 - beta1) * g);
                        *v = flush(beta2 * *v + (1.0 - beta2) * g * g);
                        let mh = *m / c1;
                        let vh = *v / c2;
                        *w -= self.lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmsprop_single_step_on_square() {
        let mut w = Tensor::scalar(1.0);
        let mut opt = Optimizer::new(OptimizerKind::RmsProp { rho: 0.9, eps: 1e-8 }, 0.1, &[&w]);
        let grad = vec![2.0 * w.item()];
        opt.step(&mut [&mut w], &[grad]);
        let expected = 1.0 - 0.1 * 2.0 / (0.1f64 * 4.0 + 1e-8).sqrt();
        assert!((f64::from(w.item()) - expected).abs() < 1e-6);
        assert!((w.item() - 0.6838).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::rmsprop(), OptimizerKind::adam()] {
            let mut w = Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
            let before = w.clone();
            let mut opt = Optimizer::new(kind, 0.01, &[&w]);
            opt.step(&mut [&mut w], &[vec![0.0; 3]]);
            assert_eq!(w, before);
        }
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        for scale in [1e-4f32, 1.0, 1e4] {
            let mut w = Tensor::scalar(0.0);
            let mut opt = Optimizer::new(OptimizerKind::adam(), 1e-3, &[&w]);
            opt.step(&mut [&mut w], &[vec![scale]]);
            assert!((w.item() + 1e-3).abs() < 1e-5, "scale {scale}: {}", w.item());
        }
    }
}
