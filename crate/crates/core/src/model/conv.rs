//! Convolutional backbone layers on `[batch][channel][time][freq]` activations.
//!
//! Every layer keeps stride 1 along time. Forward passes return the values the
//! matching backward pass needs.

use rand::Rng;

use super::linalg::{gemm, View};
use super::params::{fan_in_uniform, kaiming_normal, Grads, ParamId, Params};
use super::switches::Tape;

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Act {
    pub b: usize,
    pub c: usize,
    pub t: usize,
    pub f: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(b: usize, c: usize, t: usize, f: usize) -> Self {
        Self {
            b,
            c,
            t,
            f,
            data: vec![0.0; b * c * t * f],
        }
    }

    pub fn like(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            b: self.b,
            c: self.c,
            t: self.t,
            f: self.f,
            data,
        }
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.t * self.f
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.c, self.t, self.f]
    }
}

/// 2-D convolution without bias, kernel `k×k`, "same" padding `k/2`, frequency
/// stride `stride`.
#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    pub w: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(p: &mut Params, name: &str, cin: usize, cout: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = cin * k * k;
        let w = p.add(
            format!("{name}.w"),
            vec![cout, cin, k, k],
            kaiming_normal(cout * fan_in, fan_in, rng),
            true,
        );
        Self { w, cin, cout, k, stride }
    }

    fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn out_f(&self, f: usize) -> usize {
        (f + 2 * self.pad() - self.k) / self.stride + 1
    }

    fn im2col(&self, x: &[f64], t: usize, f: usize, fo: usize) -> Vec<f64> {
        let (k, pad, s) = (self.k, self.pad(), self.stride);
        let n = t * fo;
        let mut cols = vec![0.0; self.cin * k * k * n];
        for ci in 0..self.cin {
            let xc = &x[ci * t * f..(ci + 1) * t * f];
            for kt in 0..k {
                for kf in 0..k {
                    let row = ((ci * k + kt) * k + kf) * n;
                    for to in 0..t {
                        let ti = to as isize + kt as isize - pad as isize;
                        if ti < 0 || ti >= t as isize {
                            continue;
                        }
                        let xr = &xc[ti as usize * f..(ti as usize + 1) * f];
                        let dst = &mut cols[row + to * fo..row + (to + 1) * fo];
                        for (o, d) in dst.iter_mut().enumerate() {
                            let fi = (o * s + kf) as isize - pad as isize;
                            if fi >= 0 && (fi as usize) < f {
                                *d = xr[fi as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64], t: usize, f: usize, fo: usize) {
        let (k, pad, s) = (self.k, self.pad(), self.stride);
        let n = t * fo;
        for ci in 0..self.cin {
            let dxc = &mut dx[ci * t * f..(ci + 1) * t * f];
            for kt in 0..k {
                for kf in 0..k {
                    let row = ((ci * k + kt) * k + kf) * n;
                    for to in 0..t {
                        let ti = to as isize + kt as isize - pad as isize;
                        if ti < 0 || ti >= t as isize {
                            continue;
                        }
                        let src = &cols[row + to * fo..row + (to + 1) * fo];
                        let dr = &mut dxc[ti as usize * f..(ti as usize + 1) * f];
                        for (o, v) in src.iter().enumerate() {
                            let fi = (o * s + kf) as isize - pad as isize;
                            if fi >= 0 && (fi as usize) < f {
                                dr[fi as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, p: &Params, x: &Act) -> Act {
        assert_eq!(x.c, self.cin);
        let fo = self.out_f(x.f);
        let kk = self.cin * self.k * self.k;
        let n = x.t * fo;
        let w = p.value(self.w);
        let mut y = Act::zeros(x.b, self.cout, x.t, fo);
        for i in 0..x.b {
            let cols = self.im2col(x.sample(i), x.t, x.f, fo);
            gemm(View::new(w, self.cout, kk, kk), View::new(&cols, kk, n, n), 0.0, y.sample_mut(i), n);
        }
        y
    }

    pub fn backward(&self, p: &Params, x: &Act, dy: &Act, g: &mut Grads) -> Act {
        let fo = dy.f;
        let kk = self.cin * self.k * self.k;
        let n = x.t * fo;
        let w = p.value(self.w);
        let mut dx = Act::zeros(x.b, x.c, x.t, x.f);
        let mut dcols = vec![0.0; kk * n];
        for i in 0..x.b {
            let cols = self.im2col(x.sample(i), x.t, x.f, fo);
            let dyi = dy.sample(i);
            gemm(
                View::new(dyi, self.cout, n, n),
                View::new(&cols, kk, n, n).t(),
                1.0,
                g.get_mut(self.w),
                kk,
            );
            gemm(View::new(w, self.cout, kk, kk).t(), View::new(dyi, self.cout, n, n), 0.0, &mut dcols, n);
            self.col2im(&dcols, dx.sample_mut(i), x.t, x.f, fo);
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
    pub c: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    train: bool,
}

/// New running statistics produced by a training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate {
    pub(crate) mean: ParamId,
    pub(crate) var: ParamId,
    pub(crate) new_mean: Vec<f64>,
    pub(crate) new_var: Vec<f64>,
}

impl BnUpdate {
    pub fn apply(&self, p: &mut Params) {
        p.value_mut(self.mean).copy_from_slice(&self.new_mean);
        p.value_mut(self.var).copy_from_slice(&self.new_var);
    }
}

impl BatchNorm {
    pub fn new(p: &mut Params, name: &str, c: usize) -> Self {
        Self {
            gamma: p.add(format!("{name}.gamma"), vec![c], vec![1.0; c], true),
            beta: p.add(format!("{name}.beta"), vec![c], vec![0.0; c], true),
            mean: p.add(format!("{name}.running_mean"), vec![c], vec![0.0; c], false),
            var: p.add(format!("{name}.running_var"), vec![c], vec![1.0; c], false),
            c,
        }
    }

    pub fn forward(&self, p: &Params, x: &Act, train: bool, updates: &mut Vec<BnUpdate>) -> (Act, BnCache) {
        assert_eq!(x.c, self.c);
        let plane = x.t * x.f;
        let count = (x.b * plane) as f64;
        let (mean, var) = if train {
            let mut mean = vec![0.0; self.c];
            let mut var = vec![0.0; self.c];
            for i in 0..x.b {
                let s = x.sample(i);
                for c in 0..self.c {
                    mean[c] += s[c * plane..(c + 1) * plane].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for i in 0..x.b {
                let s = x.sample(i);
                for c in 0..self.c {
                    var[c] += s[c * plane..(c + 1) * plane].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count);
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let rm = p.value(self.mean);
            let rv = p.value(self.var);
            updates.push(BnUpdate {
                mean: self.mean,
                var: self.var,
                new_mean: (0..self.c).map(|c| (1.0 - BN_MOMENTUM) * rm[c] + BN_MOMENTUM * mean[c]).collect(),
                new_var: (0..self.c)
                    .map(|c| (1.0 - BN_MOMENTUM) * rv[c] + BN_MOMENTUM * var[c] * unbias)
                    .collect(),
            });
            (mean, var)
        } else {
            (p.value(self.mean).to_vec(), p.value(self.var).to_vec())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gamma = p.value(self.gamma);
        let beta = p.value(self.beta);
        let mut xhat = vec![0.0; x.data.len()];
        let mut y = vec![0.0; x.data.len()];
        for i in 0..x.b {
            for c in 0..self.c {
                let off = (i * self.c + c) * plane;
                for j in off..off + plane {
                    let h = (x.data[j] - mean[c]) * inv_std[c];
                    xhat[j] = h;
                    y[j] = gamma[c] * h + beta[c];
                }
            }
        }
        (x.like(y), BnCache { xhat, inv_std, train })
    }

    pub fn backward(&self, p: &Params, cache: &BnCache, dy: &Act, g: &mut Grads) -> Act {
        let plane = dy.t * dy.f;
        let count = (dy.b * plane) as f64;
        let gamma = p.value(self.gamma);
        let mut dgamma = vec![0.0; self.c];
        let mut dbeta = vec![0.0; self.c];
        for i in 0..dy.b {
            for c in 0..self.c {
                let off = (i * self.c + c) * plane;
                for j in off..off + plane {
                    dgamma[c] += dy.data[j] * cache.xhat[j];
                    dbeta[c] += dy.data[j];
                }
            }
        }
        let mut dx = vec![0.0; dy.data.len()];
        for i in 0..dy.b {
            for c in 0..self.c {
                let off = (i * self.c + c) * plane;
                let k = gamma[c] * cache.inv_std[c];
                for j in off..off + plane {
                    dx[j] = if cache.train {
                        k * (dy.data[j] - dbeta[c] / count - cache.xhat[j] * dgamma[c] / count)
                    } else {
                        k * dy.data[j]
                    };
                }
            }
        }
        for (a, b) in g.get_mut(self.gamma).iter_mut().zip(&dgamma) {
            *a += b;
        }
        for (a, b) in g.get_mut(self.beta).iter_mut().zip(&dbeta) {
            *a += b;
        }
        dy.like(dx)
    }
}

pub(crate) fn relu(x: &Act, tape: &mut Tape) -> Act {
    let mut y = x.clone();
    tape.relu(&mut y.data);
    y
}

/// Gradient through a ReLU given its output.
pub(crate) fn relu_backward(y: &Act, dy: &Act) -> Act {
    dy.like(y.data.iter().zip(&dy.data).map(|(&o, &d)| if o > 0.0 { d } else { 0.0 }).collect())
}

/// 3×3 max pooling, stride 1 in time and 2 in frequency, padding 1 (padded cells
/// never win).
pub(crate) fn max_pool(x: &Act, tape: &mut Tape) -> (Act, Vec<u32>) {
    let fo = (x.f + 2 - 3) / 2 + 1;
    let mut y = Act::zeros(x.b, x.c, x.t, fo);
    let mut arg = vec![0u32; y.data.len()];
    for i in 0..x.b {
        let xs = x.sample(i);
        let base = i * x.c * x.t * fo;
        for c in 0..x.c {
            for t in 0..x.t {
                for o in 0..fo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_j = 0usize;
                    for dt in 0..3 {
                        let ti = t as isize + dt - 1;
                        if ti < 0 || ti >= x.t as isize {
                            continue;
                        }
                        for df in 0..3 {
                            let fi = (2 * o + df) as isize - 1;
                            if fi < 0 || fi >= x.f as isize {
                                continue;
                            }
                            let j = (c * x.t + ti as usize) * x.f + fi as usize;
                            if xs[j] > best {
                                best = xs[j];
                                best_j = j;
                            }
                        }
                    }
                    let out = base + (c * x.t + t) * fo + o;
                    let j = tape.winner(best_j as u32);
                    y.data[out] = if j as usize == best_j { best } else { xs[j as usize] };
                    arg[out] = j;
                }
            }
        }
    }
    (y, arg)
}

pub(crate) fn max_pool_backward(x: &Act, arg: &[u32], dy: &Act) -> Act {
    let mut dx = Act::zeros(x.b, x.c, x.t, x.f);
    let n = dy.sample_len();
    for i in 0..x.b {
        let d = dx.sample_mut(i);
        for (j, &a) in arg[i * n..(i + 1) * n].iter().enumerate() {
            d[a as usize] += dy.data[i * n + j];
        }
    }
    dx
}

/// Squeeze-and-excitation: per-channel sigmoid gate from a bottleneck MLP over
/// globally averaged activations.
#[derive(Debug, Clone)]
pub(crate) struct Se {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    c: usize,
    r: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SeCache {
    s: Vec<f64>,
    z: Vec<f64>,
    gate: Vec<f64>,
}

impl Se {
    pub fn new(p: &mut Params, name: &str, c: usize, reduction: usize, rng: &mut impl Rng) -> Self {
        let r = (c / reduction.max(1)).max(1);
        Self {
            w1: p.add(format!("{name}.fc1.w"), vec![r, c], fan_in_uniform(r * c, c, rng), true),
            b1: p.add(format!("{name}.fc1.b"), vec![r], fan_in_uniform(r, c, rng), true),
            w2: p.add(format!("{name}.fc2.w"), vec![c, r], fan_in_uniform(c * r, r, rng), true),
            b2: p.add(format!("{name}.fc2.b"), vec![c], fan_in_uniform(c, r, rng), true),
            c,
            r,
        }
    }

    pub fn forward(&self, p: &Params, x: &Act, tape: &mut Tape) -> (Act, SeCache) {
        let (c, r) = (self.c, self.r);
        let plane = x.t * x.f;
        let (w1, b1, w2, b2) = (p.value(self.w1), p.value(self.b1), p.value(self.w2), p.value(self.b2));
        let mut s = vec![0.0; x.b * c];
        let mut z = vec![0.0; x.b * r];
        let mut gate = vec![0.0; x.b * c];
        let mut y = vec![0.0; x.data.len()];
        for i in 0..x.b {
            let xs = x.sample(i);
            let si = &mut s[i * c..(i + 1) * c];
            for ch in 0..c {
                si[ch] = xs[ch * plane..(ch + 1) * plane].iter().sum::<f64>() / plane as f64;
            }
            for k in 0..r {
                let a = b1[k] + (0..c).map(|ch| w1[k * c + ch] * si[ch]).sum::<f64>();
                z[i * r + k] = if tape.gate(a > 0.0) { a } else { 0.0 };
            }
            for ch in 0..c {
                let a = b2[ch] + (0..r).map(|k| w2[ch * r + k] * z[i * r + k]).sum::<f64>();
                let gch = 1.0 / (1.0 + (-a).exp());
                gate[i * c + ch] = gch;
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    y[j] = x.data[j] * gch;
                }
            }
        }
        (x.like(y), SeCache { s, z, gate })
    }

    pub fn backward(&self, p: &Params, x: &Act, cache: &SeCache, dy: &Act, g: &mut Grads) -> Act {
        let (c, r) = (self.c, self.r);
        let plane = x.t * x.f;
        let (w1, w2) = (p.value(self.w1).to_vec(), p.value(self.w2).to_vec());
        let mut dx = vec![0.0; x.data.len()];
        for i in 0..x.b {
            let mut dpre2 = vec![0.0; c];
            for ch in 0..c {
                let off = (i * c + ch) * plane;
                let gch = cache.gate[i * c + ch];
                let mut dg = 0.0;
                for j in off..off + plane {
                    dx[j] = dy.data[j] * gch;
                    dg += dy.data[j] * x.data[j];
                }
                dpre2[ch] = dg * gch * (1.0 - gch);
            }
            let z = &cache.z[i * r..(i + 1) * r];
            let mut dz = vec![0.0; r];
            {
                let gw2 = g.get_mut(self.w2);
                for ch in 0..c {
                    for k in 0..r {
                        gw2[ch * r + k] += dpre2[ch] * z[k];
                        dz[k] += w2[ch * r + k] * dpre2[ch];
                    }
                }
            }
            for (a, b) in g.get_mut(self.b2).iter_mut().zip(&dpre2) {
                *a += b;
            }
            let dpre1: Vec<f64> = (0..r).map(|k| if z[k] > 0.0 { dz[k] } else { 0.0 }).collect();
            let s = &cache.s[i * c..(i + 1) * c];
            let mut ds = vec![0.0; c];
            {
                let gw1 = g.get_mut(self.w1);
                for k in 0..r {
                    for ch in 0..c {
                        gw1[k * c + ch] += dpre1[k] * s[ch];
                        ds[ch] += w1[k * c + ch] * dpre1[k];
                    }
                }
            }
            for (a, b) in g.get_mut(self.b1).iter_mut().zip(&dpre1) {
                *a += b;
            }
            for ch in 0..c {
                let off = (i * c + ch) * plane;
                let d = ds[ch] / plane as f64;
                for v in &mut dx[off..off + plane] {
                    *v += d;
                }
            }
        }
        x.like(dx)
    }
}

/// SE-ResNet basic block.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    se: Se,
    shortcut: Option<(Conv2d, BatchNorm)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    x: Act,
    bn1: BnCache,
    r1: Act,
    bn2: BnCache,
    n2: Act,
    se: SeCache,
    sc_bn: Option<BnCache>,
    y: Act,
}

impl Block {
    pub fn new(
        p: &mut Params,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        se_reduction: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let shortcut = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(p, &format!("{name}.shortcut.conv"), cin, cout, 1, stride, rng),
                BatchNorm::new(p, &format!("{name}.shortcut.bn"), cout),
            )
        });
        Self {
            conv1: Conv2d::new(p, &format!("{name}.conv1"), cin, cout, 3, stride, rng),
            bn1: BatchNorm::new(p, &format!("{name}.bn1"), cout),
            conv2: Conv2d::new(p, &format!("{name}.conv2"), cout, cout, 3, 1, rng),
            bn2: BatchNorm::new(p, &format!("{name}.bn2"), cout),
            se: Se::new(p, &format!("{name}.se"), cout, se_reduction, rng),
            shortcut,
        }
    }

    pub fn forward(&self, p: &Params, x: Act, train: bool, upd: &mut Vec<BnUpdate>, tape: &mut Tape) -> (Act, BlockCache) {
        let h1 = self.conv1.forward(p, &x);
        let (n1, bn1) = self.bn1.forward(p, &h1, train, upd);
        let r1 = relu(&n1, tape);
        let h2 = self.conv2.forward(p, &r1);
        let (n2, bn2) = self.bn2.forward(p, &h2, train, upd);
        let (s, se) = self.se.forward(p, &n2, tape);
        let (sc, sc_bn) = match &self.shortcut {
            Some((conv, bn)) => {
                let (v, c) = bn.forward(p, &conv.forward(p, &x), train, upd);
                (v, Some(c))
            }
            None => (x.clone(), None),
        };
        let mut y = s.like(s.data.iter().zip(&sc.data).map(|(a, b)| a + b).collect());
        tape.relu(&mut y.data);
        let cache = BlockCache {
            x,
            bn1,
            r1,
            bn2,
            n2,
            se,
            sc_bn,
            y: y.clone(),
        };
        (y, cache)
    }

    pub fn backward(&self, p: &Params, cache: &BlockCache, dy: &Act, g: &mut Grads) -> Act {
        let dsum = relu_backward(&cache.y, dy);
        let dn2 = self.se.backward(p, &cache.n2, &cache.se, &dsum, g);
        let dh2 = self.bn2.backward(p, &cache.bn2, &dn2, g);
        let dr1 = self.conv2.backward(p, &cache.r1, &dh2, g);
        let dn1 = relu_backward(&cache.r1, &dr1);
        let dh1 = self.bn1.backward(p, &cache.bn1, &dn1, g);
        let mut dx = self.conv1.backward(p, &cache.x, &dh1, g);
        let dsc = match (&self.shortcut, &cache.sc_bn) {
            (Some((conv, bn)), Some(bc)) => {
                let dc = bn.backward(p, bc, &dsum, g);
                conv.backward(p, &cache.x, &dc, g)
            }
            _ => dsum,
        };
        dx.data.iter_mut().zip(&dsc.data).for_each(|(a, b)| *a += b);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn naive_conv(conv: &Conv2d, w: &[f64], x: &Act) -> Act {
        let fo = conv.out_f(x.f);
        let pad = conv.k as isize / 2;
        let mut y = Act::zeros(x.b, conv.cout, x.t, fo);
        for i in 0..x.b {
            for co in 0..conv.cout {
                for t in 0..x.t {
                    for o in 0..fo {
                        let mut acc = 0.0;
                        for ci in 0..conv.cin {
                            for kt in 0..conv.k {
                                for kf in 0..conv.k {
                                    let ti = t as isize + kt as isize - pad;
                                    let fi = (o * conv.stride + kf) as isize - pad;
                                    if ti >= 0 && ti < x.t as isize && fi >= 0 && fi < x.f as isize {
                                        acc += w[((co * conv.cin + ci) * conv.k + kt) * conv.k + kf]
                                            * x.data[((i * x.c + ci) * x.t + ti as usize) * x.f + fi as usize];
                                    }
                                }
                            }
                        }
                        y.data[((i * conv.cout + co) * x.t + t) * fo + o] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = stream_rng(3, 0);
        for (k, stride, f) in [(7, 2, 80), (3, 2, 5), (3, 1, 20), (1, 2, 5)] {
            let mut p = Params::default();
            let conv = Conv2d::new(&mut p, "c", 2, 3, k, stride, &mut rng);
            let mut x = Act::zeros(2, 2, 6, f);
            x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            let y = conv.forward(&p, &x);
            let want = naive_conv(&conv, p.value(conv.w), &x);
            assert_eq!(y.shape(), want.shape());
            for (a, b) in y.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frequency_widths_follow_ceil_halving() {
        let mut p = Params::default();
        let mut rng = stream_rng(0, 0);
        let c = Conv2d::new(&mut p, "a", 1, 1, 3, 2, &mut rng);
        assert_eq!([c.out_f(20), c.out_f(10), c.out_f(5)], [10, 5, 3]);
        let s = Conv2d::new(&mut p, "b", 1, 1, 1, 2, &mut rng);
        assert_eq!([s.out_f(20), s.out_f(10), s.out_f(5)], [10, 5, 3]);
        let stem = Conv2d::new(&mut p, "s", 1, 1, 7, 2, &mut rng);
        assert_eq!(stem.out_f(80), 40);
        let (y, _) = max_pool(&Act::zeros(1, 1, 3, 40), &mut Tape::Off);
        assert_eq!(y.f, 20);
    }

    #[test]
    fn max_pool_ignores_padding() {
        let mut x = Act::zeros(1, 1, 2, 4);
        x.data.iter_mut().for_each(|v| *v = -5.0);
        let (y, _) = max_pool(&x, &mut Tape::Off);
        assert!(y.data.iter().all(|&v| v == -5.0));
    }

    #[test]
    fn batch_norm_normalizes_in_training_mode() {
        let mut p = Params::default();
        let bn = BatchNorm::new(&mut p, "bn", 2);
        let mut rng = stream_rng(1, 1);
        let mut x = Act::zeros(3, 2, 4, 5);
        x.data.iter_mut().for_each(|v| *v = rng.gen_range(-3.0..7.0));
        let mut upd = Vec::new();
        let (y, _) = bn.forward(&p, &x, true, &mut upd);
        for c in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|i| y.sample(i)[c * 20..(c + 1) * 20].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / 60.0;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 60.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
        assert_eq!(upd.len(), 1);
        // running stats unchanged until the update is applied
        assert_eq!(p.value(bn.mean), &[0.0, 0.0]);
        upd[0].apply(&mut p);
        assert_ne!(p.value(bn.mean), &[0.0, 0.0]);
    }
}
