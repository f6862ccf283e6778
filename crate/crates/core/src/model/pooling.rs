//! Temporal pooling of `T × n` frame features into one `n`-vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Init, Linear};
use super::linalg::softmax_in_place;
use super::params::{fan_in_uniform, Grads, ParamId, Params};
use super::switches::Tape;

/// Variance floor applied before the square root in attentive statistics pooling.
pub const ASP_VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Frame mean.
    #[serde(alias = "AVG")]
    Avg,
    /// Self-attentive pooling: attention-weighted mean.
    #[serde(alias = "SAP")]
    Sap,
    /// Attentive statistics pooling: weighted mean and standard deviation, projected
    /// back to width n.
    #[serde(alias = "ASP")]
    Asp,
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "avg" => Ok(Pooling::Avg),
            "sap" => Ok(Pooling::Sap),
            "asp" => Ok(Pooling::Asp),
            other => Err(format!("unknown pooling {other:?} (expected avg, sap or asp)")),
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pooling::Avg => "avg",
            Pooling::Sap => "sap",
            Pooling::Asp => "asp",
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PoolLayer {
    att: Option<(Linear, ParamId)>,
    proj: Option<Linear>,
    n: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct PoolCache {
    t: usize,
    u: Vec<f64>,
    /// Attention weights over frames (empty for AVG).
    pub weights: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    clamped: Vec<bool>,
    stats: Vec<f64>,
}

impl PoolLayer {
    pub fn new(p: &mut Params, name: &str, kind: Pooling, n: usize, rng: &mut impl Rng) -> Self {
        let att = (kind != Pooling::Avg).then(|| {
            let lin = Linear::new(p, &format!("{name}.att"), n, n, Init::FanIn, rng);
            let v = p.add(format!("{name}.v"), vec![n], fan_in_uniform(n, n, rng), true);
            (lin, v)
        });
        let proj = (kind == Pooling::Asp).then(|| Linear::new(p, &format!("{name}.proj"), 2 * n, n, Init::FanIn, rng));
        Self { att, proj, n }
    }

    pub fn forward(&self, p: &Params, h: &[f64], tape: &mut Tape) -> (Vec<f64>, PoolCache) {
        let n = self.n;
        let t = h.len() / n;
        let mut cache = PoolCache { t, ..PoolCache::default() };
        let Some((lin, v)) = &self.att else {
            let mut out = vec![0.0; n];
            for row in h.chunks(n) {
                out.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            out.iter_mut().for_each(|a| *a /= t as f64);
            return (out, cache);
        };
        let mut u = lin.forward(p, h, t);
        u.iter_mut().for_each(|x| *x = x.tanh());
        let vv = p.value(*v);
        let mut w: Vec<f64> = u.chunks(n).map(|r| r.iter().zip(vv).map(|(a, b)| a * b).sum()).collect();
        softmax_in_place(&mut w);
        let mut mu = vec![0.0; n];
        for (row, &wt) in h.chunks(n).zip(&w) {
            mu.iter_mut().zip(row).for_each(|(a, b)| *a += wt * b);
        }
        cache.u = u;
        cache.weights = w;
        let Some(proj) = &self.proj else {
            cache.mu = mu.clone();
            return (mu, cache);
        };
        let mut m2 = vec![0.0; n];
        for (row, &wt) in h.chunks(n).zip(&cache.weights) {
            m2.iter_mut().zip(row).for_each(|(a, b)| *a += wt * b * b);
        }
        let mut sigma = vec![0.0; n];
        let mut clamped = vec![false; n];
        for j in 0..n {
            let var = m2[j] - mu[j] * mu[j];
            clamped[j] = tape.gate(var < ASP_VAR_FLOOR);
            sigma[j] = if clamped[j] { ASP_VAR_FLOOR } else { var }.sqrt();
        }
        let stats: Vec<f64> = mu.iter().chain(&sigma).copied().collect();
        let out = proj.forward(p, &stats, 1);
        cache.mu = mu;
        cache.sigma = sigma;
        cache.clamped = clamped;
        cache.stats = stats;
        (out, cache)
    }

    pub fn backward(&self, p: &Params, h: &[f64], c: &PoolCache, dout: &[f64], g: &mut Grads) -> Vec<f64> {
        let n = self.n;
        let t = c.t;
        let mut dh = vec![0.0; t * n];
        let Some((lin, v)) = &self.att else {
            for row in dh.chunks_mut(n) {
                row.iter_mut().zip(dout).for_each(|(a, b)| *a = b / t as f64);
            }
            return dh;
        };
        // gradient w.r.t. the weighted first and second moments
        let (dmu, dm2) = match &self.proj {
            None => (dout.to_vec(), vec![0.0; n]),
            Some(proj) => {
                let dstats = proj.backward(p, &c.stats, 1, dout, g);
                let mut dmu = dstats[..n].to_vec();
                let mut dm2 = vec![0.0; n];
                for j in 0..n {
                    if !c.clamped[j] {
                        let dvar = dstats[n + j] / (2.0 * c.sigma[j]);
                        dm2[j] = dvar;
                        dmu[j] -= 2.0 * c.mu[j] * dvar;
                    }
                }
                (dmu, dm2)
            }
        };
        let mut dw = vec![0.0; t];
        for (r, row) in h.chunks(n).enumerate() {
            let wt = c.weights[r];
            let mut acc = 0.0;
            for j in 0..n {
                dh[r * n + j] = wt * (dmu[j] + 2.0 * row[j] * dm2[j]);
                acc += row[j] * dmu[j] + row[j] * row[j] * dm2[j];
            }
            dw[r] = acc;
        }
        let dot: f64 = dw.iter().zip(&c.weights).map(|(a, b)| a * b).sum();
        let de: Vec<f64> = dw.iter().zip(&c.weights).map(|(d, w)| w * (d - dot)).collect();
        let vv = p.value(*v).to_vec();
        {
            let gv = g.get_mut(*v);
            for (r, &e) in de.iter().enumerate() {
                gv.iter_mut().zip(&c.u[r * n..(r + 1) * n]).for_each(|(a, b)| *a += e * b);
            }
        }
        let mut dpre = vec![0.0; t * n];
        for r in 0..t {
            for j in 0..n {
                let uj = c.u[r * n + j];
                dpre[r * n + j] = de[r] * vv[j] * (1.0 - uj * uj);
            }
        }
        let dh_att = lin.backward(p, h, t, &dpre, g);
        dh.iter_mut().zip(dh_att).for_each(|(a, b)| *a += b);
        dh
    }

    /// Attentive standard deviation of the last forward pass (ASP only).
    #[cfg(test)]
    pub fn sigma(c: &PoolCache) -> &[f64] {
        &c.sigma
    }
}
