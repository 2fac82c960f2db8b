//! Gradient check against an independent double-precision forward pass.
//!
//! Each net is written twice: once on the autodiff graph (f32) and once on plain `f64`
//! matrices here. Central differences on the `f64` version give the reference gradient.
//! Entries whose perturbation flips a ReLU are skipped: the difference quotient straddles a
//! kink there and says nothing about the derivative.

#![allow(dead_code)]

use counterprobe::tensorcore::{Graph, SoftmaxMask, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn from_tensor(t: &Tensor) -> Self {
        Self::new(t.rows(), t.cols(), t.data().iter().map(|&v| f64::from(v)).collect())
    }

    fn matmul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows);
        let mut out = vec![0.0; self.rows * b.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                for j in 0..b.cols {
                    out[i * b.cols + j] += a * b.at(k, j);
                }
            }
        }
        Mat::new(self.rows, b.cols, out)
    }

    fn transpose(&self) -> Mat {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.at(i, j);
            }
        }
        Mat::new(self.cols, self.rows, out)
    }

    fn plus_row(&self, row: &Mat) -> Mat {
        let data = self.data.iter().enumerate().map(|(i, v)| v + row.data[i % self.cols]).collect();
        Mat::new(self.rows, self.cols, data)
    }

    fn plus(&self, other: &Mat) -> Mat {
        Mat::new(self.rows, self.cols, self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    fn relu(&self, signature: &mut Vec<bool>) -> Mat {
        signature.extend(self.data.iter().map(|&v| v > 0.0));
        self.map(|v| v.max(0.0))
    }

    fn layer_norm(&self, gamma: &Mat, beta: &Mat, eps: f64) -> Mat {
        let n = self.cols as f64;
        let mut out = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            for (j, v) in row.iter().enumerate() {
                out.push((v - mean) / (var + eps).sqrt() * gamma.data[j] + beta.data[j]);
            }
        }
        Mat::new(self.rows, self.cols, out)
    }

    fn causal_softmax(&self) -> Mat {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            let visible = &self.data[i * self.cols..i * self.cols + i + 1];
            let max = visible.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = visible.iter().map(|v| (v - max).exp()).sum();
            for (j, v) in visible.iter().enumerate() {
                out[i * self.cols + j] = (v - max).exp() / sum;
            }
        }
        Mat::new(self.rows, self.cols, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Net {
    /// `sigmoid(relu(x W1 + b1) W2 + b2)` with mean squared error.
    SigmoidMse,
    /// `LN(relu(x W1 + b1)) W2 + b2` with softmax cross-entropy.
    LayerNormCrossEntropy,
    /// Single causal attention head with residual, layer norm and a ReLU read-out, mean squared error.
    Attention,
}

pub struct Problem {
    pub net: Net,
    pub params: Vec<Tensor>,
    pub x: Tensor,
    pub target: Vec<f32>,
    pub labels: Vec<usize>,
}

const LN_EPS: f32 = 1e-5;

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

pub fn problem(net: Net, seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d_in, hidden, d_out) = (6, 5, 7, 4);
    let params = match net {
        Net::SigmoidMse | Net::LayerNormCrossEntropy => {
            let mut p = vec![
                uniform(&mut rng, d_in, hidden, 0.8),
                uniform(&mut rng, 1, hidden, 0.3),
                uniform(&mut rng, hidden, d_out, 0.8),
                uniform(&mut rng, 1, d_out, 0.3),
            ];
            if net == Net::LayerNormCrossEntropy {
                let gamma = Tensor::matrix(1, hidden, (0..hidden).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
                p.push(gamma);
                p.push(uniform(&mut rng, 1, hidden, 0.3));
            }
            p
        }
        Net::Attention => vec![
            uniform(&mut rng, d_in, d_in, 0.6),
            uniform(&mut rng, d_in, d_in, 0.6),
            uniform(&mut rng, d_in, d_in, 0.6),
            Tensor::matrix(1, d_in, (0..d_in).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap(),
            uniform(&mut rng, 1, d_in, 0.3),
            uniform(&mut rng, d_in, d_out, 0.8),
            uniform(&mut rng, 1, d_out, 0.3),
        ],
    };
    let x = uniform(&mut rng, n, d_in, 1.0);
    let target = (0..n * d_out).map(|_| rng.gen_range(0.0..1.0)).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..d_out)).collect();
    Problem {
        net,
        params,
        x,
        target,
        labels,
    }
}

/// Loss and ReLU sign pattern of the reference forward.
pub fn reference_loss(p: &Problem, params: &[Mat]) -> (f64, Vec<bool>) {
    let x = Mat::from_tensor(&p.x);
    let mut sig = Vec::new();
    let mse = |y: &Mat| y.data.iter().zip(&p.target).map(|(a, &t)| (a - f64::from(t)).powi(2)).sum::<f64>() / y.data.len() as f64;
    let loss = match p.net {
        Net::SigmoidMse => {
            let h = x.matmul(&params[0]).plus_row(&params[1]).relu(&mut sig);
            let y = h.matmul(&params[2]).plus_row(&params[3]).map(|v| 1.0 / (1.0 + (-v).exp()));
            mse(&y)
        }
        Net::LayerNormCrossEntropy => {
            let h = x.matmul(&params[0]).plus_row(&params[1]).relu(&mut sig);
            let h = h.layer_norm(&params[4], &params[5], f64::from(LN_EPS));
            let logits = h.matmul(&params[2]).plus_row(&params[3]);
            let mut total = 0.0;
            for (r, &label) in p.labels.iter().enumerate() {
                let row = &logits.data[r * logits.cols..(r + 1) * logits.cols];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[label];
            }
            total / p.labels.len() as f64
        }
        Net::Attention => {
            let q = x.matmul(&params[0]);
            let k = x.matmul(&params[1]);
            let v = x.matmul(&params[2]);
            let scale = 1.0 / (x.cols as f64).sqrt();
            let attn = q.matmul(&k.transpose()).map(|s| s * scale).causal_softmax();
            let h = x.plus(&attn.matmul(&v)).layer_norm(&params[3], &params[4], f64::from(LN_EPS));
            let y = h.matmul(&params[5]).plus_row(&params[6]).relu(&mut sig);
            mse(&y)
        }
    };
    (loss, sig)
}

/// Loss and parameter gradients from the autodiff graph.
pub fn autodiff(p: &Problem) -> (f32, Vec<Vec<f32>>) {
    let mut g = Graph::new();
    let w: Vec<_> = p.params.iter().map(|t| g.param(t)).collect();
    let x = g.constant(p.x.clone());
    let loss = match p.net {
        Net::SigmoidMse => {
            let h = g.matmul(x, w[0]).unwrap();
            let h = g.add_row(h, w[1]).unwrap();
            let h = g.relu(h);
            let y = g.matmul(h, w[2]).unwrap();
            let y = g.add_row(y, w[3]).unwrap();
            let y = g.sigmoid(y);
            g.mse(y, &p.target).unwrap()
        }
        Net::LayerNormCrossEntropy => {
            let h = g.matmul(x, w[0]).unwrap();
            let h = g.add_row(h, w[1]).unwrap();
            let h = g.relu(h);
            let h = g.layer_norm(h, w[4], w[5], LN_EPS).unwrap();
            let y = g.matmul(h, w[2]).unwrap();
            let y = g.add_row(y, w[3]).unwrap();
            g.cross_entropy(y, &p.labels).unwrap()
        }
        Net::Attention => {
            let q = g.matmul(x, w[0]).unwrap();
            let k = g.matmul(x, w[1]).unwrap();
            let v = g.matmul(x, w[2]).unwrap();
            let s = g.matmul_t(q, false, k, true).unwrap();
            let s = g.scale(s, 1.0 / (p.x.cols() as f32).sqrt());
            let a = g.softmax(s, &SoftmaxMask::Causal).unwrap();
            let av = g.matmul(a, v).unwrap();
            let r = g.add(x, av).unwrap();
            let h = g.layer_norm(r, w[3], w[4], LN_EPS).unwrap();
            let y = g.matmul(h, w[5]).unwrap();
            let y = g.add_row(y, w[6]).unwrap();
            let y = g.relu(y);
            g.mse(y, &p.target).unwrap()
        }
    };
    g.backward(loss).unwrap();
    let grads = w.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect();
    (g.value(loss).item(), grads)
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub relative_errors: Vec<f64>,
    pub skipped: usize,
    pub loss_gap: f64,
}

impl Report {
    pub fn max(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn fraction_below(&self, bound: f64) -> f64 {
        let n = self.relative_errors.iter().filter(|&&e| e < bound).count();
        n as f64 / self.relative_errors.len().max(1) as f64
    }
}

/// Floor on the denominator so entries that are zero in both routes count as exact.
pub const REL_FLOOR: f64 = 1e-6;
pub const STEP: f64 = 1e-3;

pub fn check(net: Net, seed: u64) -> Report {
    check_with_floor(net, seed, REL_FLOOR)
}

pub fn check_with_floor(net: Net, seed: u64, floor: f64) -> Report {
    let p = problem(net, seed);
    let base: Vec<Mat> = p.params.iter().map(Mat::from_tensor).collect();
    let (auto_loss, grads) = autodiff(&p);
    let (ref_loss, _) = reference_loss(&p, &base);
    let mut report = Report {
        loss_gap: (f64::from(auto_loss) - ref_loss).abs(),
        ..Report::default()
    };
    for (i, grad) in grads.iter().enumerate() {
        for j in 0..base[i].data.len() {
            let mut plus = base.clone();
            plus[i].data[j] += STEP;
            let mut minus = base.clone();
            minus[i].data[j] -= STEP;
            let (lp, sp) = reference_loss(&p, &plus);
            let (lm, sm) = reference_loss(&p, &minus);
            if sp != sm {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * STEP);
            let analytic = f64::from(grad[j]);
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            report.relative_errors.push((analytic - numeric).abs() / denom);
        }
    }
    report
}
