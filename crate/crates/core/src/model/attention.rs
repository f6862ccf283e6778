//! One pre-norm transformer encoder layer over the time axis.

use rand::Rng;

use super::dense::{Init, LayerNorm, Linear, LnCache};
use super::linalg::{gemm, softmax_in_place, View};
use super::params::{Grads, Params};
use super::switches::Tape;
use crate::rng::{stream_id, stream_rng};

/// Sinusoidal positional encoding, `t × n` row-major.
pub fn positional_encoding(t: usize, n: usize) -> Vec<f64> {
    let mut pe = vec![0.0; t * n];
    for pos in 0..t {
        for i in (0..n).step_by(2) {
            let angle = pos as f64 / 10000f64.powf(i as f64 / n as f64);
            pe[pos * n + i] = angle.sin();
            if i + 1 < n {
                pe[pos * n + i + 1] = angle.cos();
            }
        }
    }
    pe
}

/// Inverted-dropout mask: zero with probability `p`, otherwise `1/(1-p)`.
pub(crate) fn dropout_mask(len: usize, p: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

#[derive(Debug, Clone)]
pub(crate) struct Encoder {
    ln1: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    pub(crate) wo: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    pub(crate) ff2: Linear,
    heads: usize,
    n: usize,
    dropout: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct EncCache {
    t: usize,
    ln1: LnCache,
    a1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities, `heads × t × t`.
    pub probs: Vec<f64>,
    o: Vec<f64>,
    m1: Option<Vec<f64>>,
    ln2: LnCache,
    a2: Vec<f64>,
    hid: Vec<f64>,
    m2: Option<Vec<f64>>,
}

impl Encoder {
    pub fn new(p: &mut Params, name: &str, n: usize, heads: usize, ffn: usize, dropout: f64, rng: &mut impl Rng) -> Self {
        Self {
            ln1: LayerNorm::new(p, &format!("{name}.ln1"), n),
            wq: Linear::new(p, &format!("{name}.q"), n, n, Init::Xavier, rng),
            wk: Linear::new(p, &format!("{name}.k"), n, n, Init::Xavier, rng),
            wv: Linear::new(p, &format!("{name}.v"), n, n, Init::Xavier, rng),
            wo: Linear::new(p, &format!("{name}.out"), n, n, Init::Xavier, rng),
            ln2: LayerNorm::new(p, &format!("{name}.ln2"), n),
            ff1: Linear::new(p, &format!("{name}.ff1"), n, ffn, Init::Xavier, rng),
            ff2: Linear::new(p, &format!("{name}.ff2"), ffn, n, Init::Xavier, rng),
            heads,
            n,
            dropout,
        }
    }

    /// `dropout` carries `(seed, utterance stream)` in training mode.
    pub fn forward(&self, p: &Params, x: &[f64], dropout: Option<(u64, u64)>, tape: &mut Tape) -> (Vec<f64>, EncCache) {
        let n = self.n;
        let t = x.len() / n;
        let d = n / self.heads;
        let scale = 1.0 / (d as f64).sqrt();
        let (a1, ln1) = self.ln1.forward(p, x);
        let q = self.wq.forward(p, &a1, t);
        let k = self.wk.forward(p, &a1, t);
        let v = self.wv.forward(p, &a1, t);
        let mut probs = vec![0.0; self.heads * t * t];
        let mut o = vec![0.0; t * n];
        for h in 0..self.heads {
            let ph = &mut probs[h * t * t..(h + 1) * t * t];
            gemm(
                View::new(&q[h * d..], t, d, n),
                View::new(&k[h * d..], t, d, n).t(),
                0.0,
                ph,
                t,
            );
            for row in ph.chunks_mut(t) {
                row.iter_mut().for_each(|s| *s *= scale);
                softmax_in_place(row);
            }
            gemm(View::new(ph, t, t, t), View::new(&v[h * d..], t, d, n), 0.0, &mut o[h * d..], n);
        }
        let mut u = self.wo.forward(p, &o, t);
        let m1 = dropout.filter(|_| self.dropout > 0.0).map(|(seed, s)| dropout_mask(t * n, self.dropout, seed, stream_id(s, 1)));
        if let Some(m) = &m1 {
            u.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        let x1: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + b).collect();
        let (a2, ln2) = self.ln2.forward(p, &x1);
        let mut hid = self.ff1.forward(p, &a2, t);
        tape.relu(&mut hid);
        let mut f = self.ff2.forward(p, &hid, t);
        let m2 = dropout.filter(|_| self.dropout > 0.0).map(|(seed, s)| dropout_mask(t * n, self.dropout, seed, stream_id(s, 2)));
        if let Some(m) = &m2 {
            f.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        let y: Vec<f64> = x1.iter().zip(&f).map(|(a, b)| a + b).collect();
        let cache = EncCache {
            t,
            ln1,
            a1,
            q,
            k,
            v,
            probs,
            o,
            m1,
            ln2,
            a2,
            hid,
            m2,
        };
        (y, cache)
    }

    pub fn backward(&self, p: &Params, c: &EncCache, dy: &[f64], g: &mut Grads) -> Vec<f64> {
        let n = self.n;
        let t = c.t;
        let d = n / self.heads;
        let scale = 1.0 / (d as f64).sqrt();

        let mut df = dy.to_vec();
        if let Some(m) = &c.m2 {
            df.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        let mut dhid = self.ff2.backward(p, &c.hid, t, &df, g);
        dhid.iter_mut().zip(&c.hid).for_each(|(a, &h)| {
            if h <= 0.0 {
                *a = 0.0
            }
        });
        let da2 = self.ff1.backward(p, &c.a2, t, &dhid, g);
        let dln2 = self.ln2.backward(p, &c.ln2, &da2, g);
        let dx1: Vec<f64> = dy.iter().zip(&dln2).map(|(a, b)| a + b).collect();

        let mut du = dx1.clone();
        if let Some(m) = &c.m1 {
            du.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        }
        let dout = self.wo.backward(p, &c.o, t, &du, g);
        let mut dq = vec![0.0; t * n];
        let mut dk = vec![0.0; t * n];
        let mut dv = vec![0.0; t * n];
        let mut dp = vec![0.0; t * t];
        for h in 0..self.heads {
            let ph = &c.probs[h * t * t..(h + 1) * t * t];
            // dV_h = Pᵀ dO_h ; dP = dO_h V_hᵀ
            gemm(View::new(ph, t, t, t).t(), View::new(&dout[h * d..], t, d, n), 0.0, &mut dv[h * d..], n);
            gemm(
                View::new(&dout[h * d..], t, d, n),
                View::new(&c.v[h * d..], t, d, n).t(),
                0.0,
                &mut dp,
                t,
            );
            for r in 0..t {
                let pr = &ph[r * t..(r + 1) * t];
                let dr = &mut dp[r * t..(r + 1) * t];
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                for (x, &pv) in dr.iter_mut().zip(pr) {
                    *x = pv * (*x - dot) * scale;
                }
            }
            gemm(View::new(&dp, t, t, t), View::new(&c.k[h * d..], t, d, n), 0.0, &mut dq[h * d..], n);
            gemm(View::new(&dp, t, t, t).t(), View::new(&c.q[h * d..], t, d, n), 0.0, &mut dk[h * d..], n);
        }
        let mut da1 = self.wq.backward(p, &c.a1, t, &dq, g);
        for (a, b) in da1.iter_mut().zip(self.wk.backward(p, &c.a1, t, &dk, g)) {
            *a += b;
        }
        for (a, b) in da1.iter_mut().zip(self.wv.backward(p, &c.a1, t, &dv, g)) {
            *a += b;
        }
        let dln1 = self.ln1.backward(p, &c.ln1, &da1, g);
        dx1.iter().zip(&dln1).map(|(a, b)| a + b).collect()
    }
}
