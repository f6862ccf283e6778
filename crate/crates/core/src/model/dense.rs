//! Per-frame dense layers on row-major `rows × width` matrices.

use rand::Rng;

use super::linalg::{gemm, View};
use super::params::{fan_in_uniform, xavier_uniform, Grads, ParamId, Params};

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    /// Uniform ±1/√fan_in for weight and bias.
    FanIn,
    /// Xavier-uniform weight, zero bias.
    Xavier,
}

/// `y = x·W + b` with `W` stored `din × dout`.
#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(p: &mut Params, name: &str, din: usize, dout: usize, init: Init, rng: &mut impl Rng) -> Self {
        let (w, b) = match init {
            Init::FanIn => (fan_in_uniform(din * dout, din, rng), fan_in_uniform(dout, din, rng)),
            Init::Xavier => (xavier_uniform(din, dout, rng), vec![0.0; dout]),
        };
        Self {
            w: p.add(format!("{name}.w"), vec![din, dout], w, true),
            b: p.add(format!("{name}.b"), vec![dout], b, true),
            din,
            dout,
        }
    }

    pub fn forward(&self, p: &Params, x: &[f64], rows: usize) -> Vec<f64> {
        let b = p.value(self.b);
        let mut y: Vec<f64> = (0..rows).flat_map(|_| b.iter().copied()).collect();
        gemm(
            View::new(x, rows, self.din, self.din),
            View::new(p.value(self.w), self.din, self.dout, self.dout),
            1.0,
            &mut y,
            self.dout,
        );
        y
    }

    pub fn backward(&self, p: &Params, x: &[f64], rows: usize, dy: &[f64], g: &mut Grads) -> Vec<f64> {
        gemm(
            View::new(x, rows, self.din, self.din).t(),
            View::new(dy, rows, self.dout, self.dout),
            1.0,
            g.get_mut(self.w),
            self.dout,
        );
        let gb = g.get_mut(self.b);
        for r in 0..rows {
            for (a, d) in gb.iter_mut().zip(&dy[r * self.dout..(r + 1) * self.dout]) {
                *a += d;
            }
        }
        let mut dx = vec![0.0; rows * self.din];
        gemm(
            View::new(dy, rows, self.dout, self.dout),
            View::new(p.value(self.w), self.din, self.dout, self.dout).t(),
            0.0,
            &mut dx,
            self.din,
        );
        dx
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
    n: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(p: &mut Params, name: &str, n: usize) -> Self {
        Self {
            gamma: p.add(format!("{name}.gamma"), vec![n], vec![1.0; n], true),
            beta: p.add(format!("{name}.beta"), vec![n], vec![0.0; n], true),
            n,
        }
    }

    pub fn forward(&self, p: &Params, x: &[f64]) -> (Vec<f64>, LnCache) {
        let n = self.n;
        let rows = x.len() / n;
        let (gamma, beta) = (p.value(self.gamma), p.value(self.beta));
        let mut xhat = vec![0.0; x.len()];
        let mut y = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &x[r * n..(r + 1) * n];
            let m = row.iter().sum::<f64>() / n as f64;
            let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (v + LN_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - m) * is;
                xhat[r * n + j] = h;
                y[r * n + j] = gamma[j] * h + beta[j];
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &Params, cache: &LnCache, dy: &[f64], g: &mut Grads) -> Vec<f64> {
        let n = self.n;
        let rows = dy.len() / n;
        let gamma = p.value(self.gamma).to_vec();
        let mut dx = vec![0.0; dy.len()];
        let mut dgamma = vec![0.0; n];
        let mut dbeta = vec![0.0; n];
        for r in 0..rows {
            let xh = &cache.xhat[r * n..(r + 1) * n];
            let d = &dy[r * n..(r + 1) * n];
            let mut sum = 0.0;
            let mut dot = 0.0;
            for j in 0..n {
                dgamma[j] += d[j] * xh[j];
                dbeta[j] += d[j];
                let dh = d[j] * gamma[j];
                sum += dh;
                dot += dh * xh[j];
            }
            let is = cache.inv_std[r];
            for j in 0..n {
                let dh = d[j] * gamma[j];
                dx[r * n + j] = is * (dh - sum / n as f64 - xh[j] * dot / n as f64);
            }
        }
        for (a, b) in g.get_mut(self.gamma).iter_mut().zip(&dgamma) {
            *a += b;
        }
        for (a, b) in g.get_mut(self.beta).iter_mut().zip(&dbeta) {
            *a += b;
        }
        dx
    }
}
