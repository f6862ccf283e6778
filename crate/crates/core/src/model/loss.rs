//! Span (question-answering) and anti-spoofing losses, and span decoding.
//!
//! `A` is a row-major `T × 2` matrix: column 0 scores frames as the start of the
//! fake span, column 1 as its end. `S = [s0, s1]` holds the fake and real logits.

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::span::SpanTarget;

use super::linalg::log_sum_exp;

fn column(a: &[f64], j: usize) -> impl Iterator<Item = f64> + Clone + '_ {
    a.chunks_exact(2).map(move |r| r[j])
}

/// `-log softmax(x)[idx]`, accurate also when the target dominates.
fn neg_log_softmax(x: impl Iterator<Item = f64> + Clone, idx: usize) -> f64 {
    let a = x.clone().nth(idx).expect("index checked by the caller");
    let m = x.clone().fold(f64::NEG_INFINITY, f64::max);
    if m - a < 700.0 {
        let rest: f64 = x.enumerate().filter(|&(i, _)| i != idx).map(|(_, v)| (v - a).exp()).sum();
        rest.ln_1p()
    } else {
        log_sum_exp(x) - a
    }
}

/// `-log softmax_T(A[:,0])[s] - log softmax_T(A[:,1])[e]`.
pub fn qa_loss(a: &[f64], target: SpanTarget) -> Result<f64> {
    let t = a.len() / 2;
    if t == 0 || a.len() % 2 != 0 {
        return Err(Error::invalid_input(format!("QA logits must be T x 2, got {} values", a.len())));
    }
    if target.start >= t || target.end >= t {
        return Err(Error::invalid_input(format!(
            "span target [{}, {}] outside {t} frames",
            target.start, target.end
        )));
    }
    Ok(neg_log_softmax(column(a, 0), target.start) + neg_log_softmax(column(a, 1), target.end))
}

/// QA loss and its gradient with respect to `A`.
pub fn qa_loss_grad(a: &[f64], target: SpanTarget) -> Result<(f64, Vec<f64>)> {
    let loss = qa_loss(a, target)?;
    let t = a.len() / 2;
    let mut g = vec![0.0; a.len()];
    for (j, idx) in [(0, target.start), (1, target.end)] {
        let lse = log_sum_exp(column(a, j));
        for r in 0..t {
            g[2 * r + j] = (a[2 * r + j] - lse).exp();
        }
        g[2 * idx + j] -= 1.0;
    }
    Ok((loss, g))
}

/// `-log(exp(s_l) / (exp(s0) + exp(s1)))` with `l = 0` for fake and `1` for real.
pub fn af_loss(s: [f64; 2], l: usize) -> f64 {
    assert!(l < 2, "class index must be 0 or 1");
    neg_log_softmax(s.iter().copied(), l)
}

pub fn af_loss_grad(s: [f64; 2], l: usize) -> (f64, [f64; 2]) {
    let loss = af_loss(s, l);
    let lse = log_sum_exp(s.iter().copied());
    let mut g = [(s[0] - lse).exp(), (s[1] - lse).exp()];
    g[l] -= 1.0;
    (loss, g)
}

/// Genuineness score: softmax(S)[real].
pub fn genuine_score(s: [f64; 2]) -> f64 {
    1.0 / (1.0 + (s[0] - s[1]).exp())
}

/// Per-utterance loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Absent for real utterances.
    pub qa: Option<f64>,
    pub af: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.qa.unwrap_or(0.0) + self.af
    }
}

/// Joint loss: QA plus anti-spoofing terms for fake utterances, anti-spoofing only
/// for real ones.
pub fn total_loss(a: &[f64], s: [f64; 2], label: Label, target: Option<SpanTarget>) -> Result<LossParts> {
    let af = af_loss(s, label.class_index());
    let qa = match (label, target) {
        (Label::Fake, Some(t)) => Some(qa_loss(a, t)?),
        (Label::Fake, None) => return Err(Error::invalid_input("fake utterance without a span target")),
        (Label::Real, _) => None,
    };
    Ok(LossParts { qa, af })
}

fn first_argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, v) in it.enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    arg
}

/// Start = argmax of column 0, end = argmax of column 1, swapped if out of order;
/// ties go to the smaller index.
pub fn decode_span(a: &[f64]) -> SpanTarget {
    let s = first_argmax(column(a, 0));
    let e = first_argmax(column(a, 1));
    SpanTarget {
        start: s.min(e),
        end: s.max(e),
    }
}
