//! Scores, equal error rate, score fusion and span-localization metrics.
//!
//! Scores follow one polarity throughout: higher means more genuine.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Manifest};
use crate::error::{Error, Result};
use crate::span::SpanTarget;

/// Polarity tag written into score-file headers.
pub const GENUINE_HIGH: &str = "genuine-high";
/// Default frame tolerance for a span hit.
pub const DEFAULT_TOLERANCE_FRAMES: usize = 10;
const SCORE_FILE_TAG: &str = "#fakespan-scores";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub id: String,
    pub score: f64,
    pub label: Label,
}

/// Labelled scores with unique ids and finite values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    entries: Vec<ScoreEntry>,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::invalid_input(format!("score for {} is not finite", e.id)));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::invalid_input(format!("duplicate id {}", e.id)));
            }
        }
        Ok(Self { entries })
    }

    /// Attach labels from a manifest to unlabelled scores.
    pub fn with_labels(scores: &[(String, f64)], manifest: &Manifest) -> Result<Self> {
        let labels: HashMap<&str, Label> = manifest.records.iter().map(|r| (r.id.as_str(), r.label)).collect();
        let entries = scores
            .iter()
            .map(|(id, score)| {
                let label = *labels
                    .get(id.as_str())
                    .ok_or_else(|| Error::invalid_input(format!("id {id} is not in the manifest")))?;
                Ok(ScoreEntry {
                    id: id.clone(),
                    score: *score,
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<(String, f64)> {
        self.entries.iter().map(|e| (e.id.clone(), e.score)).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ScoreEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn split_by_label(&self) -> (Vec<f64>, Vec<f64>) {
        let mut real = Vec::new();
        let mut fake = Vec::new();
        for e in &self.entries {
            match e.label {
                Label::Real => real.push(e.score),
                Label::Fake => fake.push(e.score),
            }
        }
        (real, fake)
    }
}

/// Equal error rate and the threshold at which it occurs.
///
/// Operating points are taken at every threshold between consecutive distinct scores
/// plus one below and one above all scores, with FRR = share of REAL scores below the
/// threshold and FAR = share of FAKE scores at or above it. The EER is read off where
/// FAR − FRR changes sign, interpolating linearly between the bracketing points.
pub fn compute_eer(scores: &ScoreSet) -> Result<(f64, f64)> {
    let (real, fake) = scores.split_by_label();
    eer_from_scores(&real, &fake)
}

pub fn eer_from_scores(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::invalid_input("EER needs at least one REAL and one FAKE score"));
    }
    if real.iter().chain(fake).any(|s| !s.is_finite()) {
        return Err(Error::invalid_input("scores must be finite"));
    }
    let mut all: Vec<(f64, bool)> = real.iter().map(|&s| (s, true)).chain(fake.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    // operating points (threshold, FAR, FRR), threshold increasing
    let mut points = vec![(all[0].0, 1.0, 0.0)];
    let (mut real_below, mut fake_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                real_below += 1;
            } else {
                fake_below += 1;
            }
            i += 1;
        }
        let theta = if i < all.len() { 0.5 * (v + all[i].0) } else { v.next_up() };
        points.push((theta, 1.0 - fake_below as f64 / nf, real_below as f64 / nr));
    }
    Ok(crossing(&points))
}

/// EER at the first sign change of FAR − FRR along the operating points.
fn crossing(points: &[(f64, f64, f64)]) -> (f64, f64) {
    for k in 0..points.len() {
        let (t1, far1, frr1) = points[k];
        let d1 = far1 - frr1;
        if d1 == 0.0 {
            return (far1, t1);
        }
        if d1 < 0.0 {
            let (t0, far0, frr0) = points[k - 1];
            let d0 = far0 - frr0;
            let w = d0 / (d0 - d1);
            return (far0 + w * (far1 - far0), t0 + w * (t1 - t0));
        }
    }
    unreachable!("FAR - FRR ends at -1")
}

/// How several score sets are combined per utterance.
#[derive(Debug, Clone, PartialEq)]
pub enum Fusion {
    Avg,
    /// Weighted average; weights are normalized to sum to one.
    Wavg(Vec<f64>),
    Min,
    Max,
}

impl Fusion {
    /// Parse a method name, taking weights for `wavg`.
    pub fn parse(method: &str, weights: Option<&[f64]>) -> Result<Self> {
        let m = match method.to_ascii_lowercase().as_str() {
            "avg" => Fusion::Avg,
            "wavg" => Fusion::Wavg(
                weights
                    .ok_or_else(|| Error::invalid_config("wavg fusion needs weights"))?
                    .to_vec(),
            ),
            "min" => Fusion::Min,
            "max" => Fusion::Max,
            other => return Err(Error::invalid_config(format!("unknown fusion method {other:?}"))),
        };
        if weights.is_some() && !matches!(m, Fusion::Wavg(_)) {
            return Err(Error::invalid_config("weights are only used by wavg fusion"));
        }
        Ok(m)
    }
}

/// Combine unlabelled score lists covering the same ids. The output follows the
/// order of the first list.
pub fn fuse_scores(sets: &[Vec<(String, f64)>], method: &Fusion) -> Result<Vec<(String, f64)>> {
    let first = sets.first().ok_or_else(|| Error::invalid_input("nothing to fuse"))?;
    let weights = match method {
        Fusion::Wavg(w) => {
            if w.len() != sets.len() {
                return Err(Error::invalid_input(format!(
                    "{} weights for {} score sets",
                    w.len(),
                    sets.len()
                )));
            }
            if let Some(x) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(Error::invalid_input(format!("fusion weight {x} is negative or not finite")));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::invalid_input("fusion weights sum to zero"));
            }
            w.iter().map(|x| x / total).collect()
        }
        _ => Vec::new(),
    };
    let maps: Vec<HashMap<&str, f64>> = sets
        .iter()
        .map(|s| s.iter().map(|(id, v)| (id.as_str(), *v)).collect())
        .collect();
    for (k, (s, m)) in sets.iter().zip(&maps).enumerate() {
        if m.len() != s.len() {
            return Err(Error::invalid_input(format!("score set {k} repeats an id")));
        }
        if m.len() != first.len() || first.iter().any(|(id, _)| !m.contains_key(id.as_str())) {
            return Err(Error::invalid_input(format!("score set {k} covers different ids than set 0")));
        }
    }
    Ok(first
        .iter()
        .map(|(id, _)| {
            let vals = maps.iter().map(|m| m[id.as_str()]);
            let v = match method {
                Fusion::Avg => vals.sum::<f64>() / sets.len() as f64,
                Fusion::Wavg(_) => vals.zip(&weights).map(|(v, w)| v * w).sum(),
                Fusion::Min => vals.fold(f64::INFINITY, f64::min),
                Fusion::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            };
            (id.clone(), v)
        })
        .collect())
}

/// Labelled fusion; labels must agree across sets and are carried through.
pub fn fuse(sets: &[ScoreSet], method: &Fusion) -> Result<ScoreSet> {
    let raw: Vec<Vec<(String, f64)>> = sets.iter().map(ScoreSet::scores).collect();
    let fused = fuse_scores(&raw, method)?;
    let labels: HashMap<&str, Label> = sets[0].entries.iter().map(|e| (e.id.as_str(), e.label)).collect();
    for s in &sets[1..] {
        if let Some(e) = s.entries.iter().find(|e| labels[e.id.as_str()] != e.label) {
            return Err(Error::invalid_input(format!("label of {} differs between score sets", e.id)));
        }
    }
    ScoreSet::new(
        fused
            .into_iter()
            .map(|(id, score)| {
                let label = labels[id.as_str()];
                ScoreEntry { id, score, label }
            })
            .collect(),
    )
}

/// Indices of the `k` candidates with the lowest validation EER (ties keep input
/// order).
pub fn top_k_by_eer(val_eers: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..val_eers.len()).collect();
    idx.sort_by(|&a, &b| val_eers[a].total_cmp(&val_eers[b]));
    idx.truncate(k);
    idx
}

/// Intersection over union of two inclusive frame intervals.
pub fn span_iou(pred: SpanTarget, truth: SpanTarget) -> f64 {
    let inter = (pred.end.min(truth.end) + 1).saturating_sub(pred.start.max(truth.start));
    let union = pred.len() + truth.len() - inter;
    inter as f64 / union as f64
}

pub fn span_hit(pred: SpanTarget, truth: SpanTarget, tolerance: usize) -> bool {
    pred.start.abs_diff(truth.start) <= tolerance && pred.end.abs_diff(truth.end) <= tolerance
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median IoU and the share of predictions within `tolerance` frames at both ends.
pub fn span_metrics(preds: &[SpanTarget], truths: &[SpanTarget], tolerance: usize) -> Result<(f64, f64)> {
    if preds.len() != truths.len() {
        return Err(Error::invalid_input(format!(
            "{} predictions for {} ground-truth spans",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid_input("no spans to evaluate"));
    }
    let mut ious: Vec<f64> = preds.iter().zip(truths).map(|(p, t)| span_iou(*p, *t)).collect();
    let hits = preds.iter().zip(truths).filter(|(p, t)| span_hit(**p, **t, tolerance)).count();
    Ok((median(&mut ious), hits as f64 / preds.len() as f64))
}

/// Summary of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub eer: f64,
    pub threshold: f64,
    /// Absent when the evaluated set holds no FAKE utterance.
    pub span_iou_median: Option<f64>,
    pub span_hits_at_tolerance: Option<f64>,
    pub tolerance_frames: usize,
    pub n_real: usize,
    pub n_fake: usize,
    /// Utterances that could not be scored.
    pub n_errors: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid_input(format!("bad report: {e}")))
    }
}

/// Contents of a score file: a header naming the polarity and the checkpoint that
/// produced the scores, then one `id<TAB>score` line per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub polarity: String,
    pub checkpoint: String,
    pub scores: Vec<(String, f64)>,
}

impl ScoreFile {
    pub fn new(checkpoint: impl Into<String>, scores: Vec<(String, f64)>) -> Self {
        Self {
            polarity: GENUINE_HIGH.into(),
            checkpoint: checkpoint.into(),
            scores,
        }
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{SCORE_FILE_TAG} polarity={} checkpoint={}", self.polarity, self.checkpoint)?;
        for (id, s) in &self.scores {
            // shortest representation that parses back to the same f64
            writeln!(w, "{id}\t{s:?}")?;
        }
        Ok(())
    }

    pub fn from_reader(r: impl BufRead, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty score file".into()))??;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(SCORE_FILE_TAG) {
            return Err(err(1, format!("header must start with {SCORE_FILE_TAG}")));
        }
        let (mut polarity, mut checkpoint) = (None, None);
        for f in fields {
            match f.split_once('=') {
                Some(("polarity", v)) => polarity = Some(v.to_string()),
                Some(("checkpoint", v)) => checkpoint = Some(v.to_string()),
                _ => return Err(err(1, format!("unexpected header field {f:?}"))),
            }
        }
        let polarity = polarity.ok_or_else(|| err(1, "header lacks polarity".into()))?;
        let checkpoint = checkpoint.ok_or_else(|| err(1, "header lacks checkpoint".into()))?;
        let mut scores = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let (id, v) = line
                .split_once('\t')
                .ok_or_else(|| err(lineno, "expected id<TAB>score".into()))?;
            let v: f64 = v.trim().parse().map_err(|e| err(lineno, format!("bad score {v:?}: {e}")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("score {v} is not finite")));
            }
            if !seen.insert(id.to_string()) {
                return Err(err(lineno, format!("duplicate id {id}")));
            }
            scores.push((id.to_string(), v));
        }
        Ok(Self {
            polarity,
            checkpoint,
            scores,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(real: &[f64], fake: &[f64]) -> ScoreSet {
        let mut e = Vec::new();
        for (i, &s) in real.iter().enumerate() {
            e.push(ScoreEntry {
                id: format!("r{i}"),
                score: s,
                label: Label::Real,
            });
        }
        for (i, &s) in fake.iter().enumerate() {
            e.push(ScoreEntry {
                id: format!("f{i}"),
                score: s,
                label: Label::Fake,
            });
        }
        ScoreSet::new(e).unwrap()
    }

    /// Count FAR and FRR directly at every midpoint threshold plus both extremes,
    /// then interpolate at the sign change of FAR - FRR.
    fn brute_force_eer(real: &[f64], fake: &[f64]) -> f64 {
        let mut v: Vec<f64> = real.iter().chain(fake).copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        let mut thresholds = vec![v[0]];
        thresholds.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        thresholds.push(v[v.len() - 1] + 1.0);
        let pts: Vec<(f64, f64)> = thresholds
            .iter()
            .map(|&t| {
                let far = fake.iter().filter(|&&s| s >= t).count() as f64 / fake.len() as f64;
                let frr = real.iter().filter(|&&s| s < t).count() as f64 / real.len() as f64;
                (far, frr)
            })
            .collect();
        for k in 0..pts.len() {
            let d1 = pts[k].0 - pts[k].1;
            if d1 == 0.0 {
                return pts[k].0;
            }
            if d1 < 0.0 {
                let d0 = pts[k - 1].0 - pts[k - 1].1;
                let w = d0 / (d0 - d1);
                return pts[k - 1].0 + w * (pts[k].0 - pts[k - 1].0);
            }
        }
        unreachable!()
    }

    #[test]
    fn separated_and_identical() {
        assert_eq!(compute_eer(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap().0, 0.0);
        let s = [0.3, 0.5, 0.5, 0.9];
        assert_eq!(compute_eer(&set(&s, &s)).unwrap().0, 0.5);
    }

    #[test]
    fn three_by_two_example() {
        let (real, fake) = ([0.8, 0.6, 0.4], [0.7, 0.3]);
        let (eer, thr) = compute_eer(&set(&real, &fake)).unwrap();
        assert!((eer - brute_force_eer(&real, &fake)).abs() < 1e-12);
        // (FAR, FRR) is (1/2, 1/3) at 0.5 and (1/2, 2/3) at 0.65; the crossing lies halfway
        assert!((eer - 0.5).abs() < 1e-12);
        assert!((thr - 0.575).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let only_real = ScoreSet::new(vec![ScoreEntry {
            id: "a".into(),
            score: 0.5,
            label: Label::Real,
        }])
        .unwrap();
        assert!(matches!(compute_eer(&only_real), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn duplicate_and_nonfinite_scores() {
        let e = |id: &str, s: f64| ScoreEntry {
            id: id.into(),
            score: s,
            label: Label::Real,
        };
        assert!(ScoreSet::new(vec![e("a", 0.1), e("a", 0.2)]).is_err());
        assert!(ScoreSet::new(vec![e("a", f64::NAN)]).is_err());
    }

    #[test]
    fn fusion_rules() {
        let a = set(&[0.9, 0.2], &[0.4]);
        let b = set(&[0.1, 0.6], &[0.8]);
        assert_eq!(fuse(&[a.clone(), a.clone()], &Fusion::Avg).unwrap(), a);
        assert_eq!(fuse(&[a.clone()], &Fusion::Avg).unwrap(), a);
        assert_eq!(fuse(&[a.clone(), b.clone()], &Fusion::Wavg(vec![1.0, 0.0])).unwrap(), a);
        let avg = fuse(&[a.clone(), b.clone()], &Fusion::Avg).unwrap();
        assert!((avg.get("r0").unwrap().score - 0.5).abs() < 1e-15);
        assert_eq!(fuse(&[a.clone(), b.clone()], &Fusion::Min).unwrap().get("f0").unwrap().score, 0.4);
        assert_eq!(fuse(&[a.clone(), b.clone()], &Fusion::Max).unwrap().get("f0").unwrap().score, 0.8);
        assert!(fuse(&[a.clone(), b.clone()], &Fusion::Wavg(vec![1.0, -0.5])).is_err());
        let c = set(&[0.1], &[0.8]);
        assert!(matches!(fuse(&[a, c], &Fusion::Avg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn top_k_picks_lowest_eers() {
        assert_eq!(top_k_by_eer(&[0.3, 0.1, 0.2, 0.1], 2), vec![1, 3]);
        assert_eq!(top_k_by_eer(&[0.3], 5), vec![0]);
    }

    #[test]
    fn span_examples() {
        let s = |a, b| SpanTarget { start: a, end: b };
        assert_eq!(span_iou(s(3, 9), s(3, 9)), 1.0);
        assert!(span_hit(s(3, 9), s(3, 9), 10));
        assert_eq!(span_iou(s(0, 4), s(5, 9)), 0.0);
        assert!(!span_hit(s(0, 4), s(50, 90), 10));
        // [10,19] and [15,24]: 5 shared frames out of 15
        assert!((span_iou(s(10, 19), s(15, 24)) - 5.0 / 15.0).abs() < 1e-15);
        let (med, hit) = span_metrics(&[s(10, 19), s(0, 4), s(3, 9)], &[s(15, 24), s(50, 90), s(3, 9)], 10).unwrap();
        assert!((med - 1.0 / 3.0).abs() < 1e-15);
        assert!((hit - 2.0 / 3.0).abs() < 1e-15);
        assert!(span_metrics(&[s(0, 1)], &[], 10).is_err());
    }

    #[test]
    fn score_file_round_trip() {
        let f = ScoreFile::new("abc123", vec![("u1".into(), 0.25), ("u2".into(), 1.0 / 3.0)]);
        let mut buf = Vec::new();
        f.to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#fakespan-scores polarity=genuine-high checkpoint=abc123\n"));
        assert!(text.contains("u1\t0.25\n"));
        assert_eq!(ScoreFile::from_reader(&buf[..], Path::new("x")).unwrap(), f);
        let bad = b"#fakespan-scores polarity=genuine-high checkpoint=x\nu1 0.5\n";
        assert!(matches!(
            ScoreFile::from_reader(&bad[..], Path::new("x")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn report_json_round_trip() {
        let r = EvalReport {
            eer: 0.05,
            threshold: 0.4,
            span_iou_median: Some(0.7),
            span_hits_at_tolerance: None,
            tolerance_frames: 10,
            n_real: 3,
            n_fake: 4,
            n_errors: 0,
        };
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }

    proptest! {
        #[test]
        fn eer_matches_brute_force(
            real in proptest::collection::vec(0u32..40, 1..25),
            fake in proptest::collection::vec(0u32..40, 1..25),
        ) {
            // coarse grid so that ties occur
            let real: Vec<f64> = real.iter().map(|&v| v as f64 / 40.0).collect();
            let fake: Vec<f64> = fake.iter().map(|&v| v as f64 / 40.0).collect();
            let (eer, _) = eer_from_scores(&real, &fake).unwrap();
            prop_assert!((eer - brute_force_eer(&real, &fake)).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&eer));
        }

        #[test]
        fn eer_is_rank_invariant(
            real in proptest::collection::vec(-3.0f64..3.0, 1..30),
            fake in proptest::collection::vec(-3.0f64..3.0, 1..30),
        ) {
            let f = |v: &f64| v.exp() * 2.0 + v.powi(3);
            let a = eer_from_scores(&real, &fake).unwrap().0;
            let b = eer_from_scores(&real.iter().map(f).collect::<Vec<_>>(), &fake.iter().map(f).collect::<Vec<_>>()).unwrap().0;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn fusion_order_statistics(
            xs in proptest::collection::vec(proptest::array::uniform3(0.0f64..1.0), 1..20),
        ) {
            let sets: Vec<Vec<(String, f64)>> = (0..3)
                .map(|k| xs.iter().enumerate().map(|(i, x)| (format!("u{i}"), x[k])).collect())
                .collect();
            let lo = fuse_scores(&sets, &Fusion::Min).unwrap();
            let mid = fuse_scores(&sets, &Fusion::Avg).unwrap();
            let hi = fuse_scores(&sets, &Fusion::Max).unwrap();
            for ((a, b), c) in lo.iter().zip(&mid).zip(&hi) {
                prop_assert!(a.1 <= b.1 + 1e-15 && b.1 <= c.1 + 1e-15);
            }
            let reordered = vec![sets[2].clone(), sets[0].clone(), sets[1].clone()];
            let mid2 = fuse_scores(&reordered, &Fusion::Avg).unwrap();
            for (a, b) in mid.iter().zip(&mid2) {
                prop_assert!((a.1 - b.1).abs() < 1e-15);
            }
        }
    }
}
