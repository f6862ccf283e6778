//! Training loop and utterance scoring.
//!
//! Every utterance goes through the same preparation: read, fit to the model's
//! frame count, optionally augment, extract features. Random draws come from
//! per-utterance streams so results do not depend on batch composition or order.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::read_wav;
use crate::augment::{AugmentSpec, Augmenter};
use crate::corpus::{fit_to_length, Label, Manifest, UtteranceRecord};
use crate::error::{Error, Result};
use crate::eval::{compute_eer, span_metrics, EvalReport, ScoreEntry, ScoreSet};
use crate::features::{FeatureConfig, FeatureExtractor};
use crate::model::{decode_span, total_loss, Adam, Checkpoint, CheckpointMeta, Example, Mode, Model};
use crate::rng::{stream_id, stream_rng};
use crate::span::{span_to_frames, SpanTarget};

const SHUFFLE_STREAM: u64 = 0xFFFF_FFFF;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Total number of epochs; a resumed run stops at the same count.
    pub epochs: usize,
    pub seed: u64,
    pub augment: AugmentSpec,
    pub feature: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 16,
            epochs: 20,
            seed: 0,
            augment: AugmentSpec::default(),
            feature: FeatureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid_config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid_config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_config("batch_size must be at least 1"));
        }
        self.augment.validate()?;
        self.feature.validate()
    }
}

/// Stable per-utterance stream derived from its id.
pub fn id_stream(id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Read, crop/tile, augment and featurize utterances for a model of a given frame
/// count.
#[derive(Debug, Clone)]
pub struct Preparer {
    extractor: FeatureExtractor,
    augmenter: Option<Augmenter>,
    frames: usize,
    seed: u64,
}

impl Preparer {
    pub fn new(feature: FeatureConfig, augment: Option<AugmentSpec>, frames: usize, seed: u64) -> Result<Self> {
        let augmenter = match augment {
            Some(a) if !a.is_disabled() => Some(Augmenter::new(a)?),
            _ => None,
        };
        Ok(Self {
            extractor: FeatureExtractor::new(feature)?,
            augmenter,
            frames,
            seed,
        })
    }

    /// Samples that produce exactly `frames` frames.
    pub fn target_len(&self) -> usize {
        (self.frames - 1) * self.extractor.config().hop
    }

    pub fn example(&self, rec: &UtteranceRecord, stream: u64) -> Result<Example> {
        let wav = read_wav(&rec.path)?;
        let mut rng = stream_rng(self.seed, stream);
        let (wav, span) = fit_to_length(&wav, rec.span, self.target_len(), &mut rng)?;
        let wav = match &self.augmenter {
            Some(a) => a.apply(&wav, stream)?,
            None => wav,
        };
        let features = self.extractor.compute(&wav)?;
        let target = match (rec.label, span) {
            (Label::Fake, Some(s)) => Some(span_to_frames(s, self.extractor.config().hop, features.frames)?),
            (Label::Fake, None) => {
                return Err(Error::invalid_input(format!("fake record {} lost its span when cropped", rec.id)));
            }
            (Label::Real, _) => None,
        };
        Ok(Example {
            features,
            label: rec.label,
            target,
        })
    }
}

/// One scored utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredUtterance {
    pub id: String,
    pub label: Label,
    pub score: f64,
    /// Joint loss in evaluation mode.
    pub loss: f64,
    pub predicted: SpanTarget,
    /// Ground-truth frame span of a FAKE utterance.
    pub truth: Option<SpanTarget>,
}

/// Utterance that could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreError {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scoring {
    pub utterances: Vec<ScoredUtterance>,
    pub errors: Vec<ScoreError>,
}

impl Scoring {
    pub fn score_set(&self) -> Result<ScoreSet> {
        ScoreSet::new(
            self.utterances
                .iter()
                .map(|u| ScoreEntry {
                    id: u.id.clone(),
                    score: u.score,
                    label: u.label,
                })
                .collect(),
        )
    }

    pub fn mean_loss(&self) -> f64 {
        self.utterances.iter().map(|u| u.loss).sum::<f64>() / self.utterances.len().max(1) as f64
    }

    /// Predicted and true spans of the FAKE utterances.
    pub fn span_pairs(&self) -> (Vec<SpanTarget>, Vec<SpanTarget>) {
        self.utterances
            .iter()
            .filter_map(|u| u.truth.map(|t| (u.predicted, t)))
            .unzip()
    }

    pub fn report(&self, tolerance: usize) -> Result<EvalReport> {
        let set = self.score_set()?;
        let (eer, threshold) = compute_eer(&set)?;
        let (pred, truth) = self.span_pairs();
        let spans = (!pred.is_empty()).then(|| span_metrics(&pred, &truth, tolerance)).transpose()?;
        Ok(EvalReport {
            eer,
            threshold,
            span_iou_median: spans.map(|s| s.0),
            span_hits_at_tolerance: spans.map(|s| s.1),
            tolerance_frames: tolerance,
            n_real: self.utterances.iter().filter(|u| u.label == Label::Real).count(),
            n_fake: self.utterances.iter().filter(|u| u.label == Label::Fake).count(),
            n_errors: self.errors.len(),
        })
    }
}

const SCORE_BATCH: usize = 16;

/// Score every record in evaluation mode. Crops are drawn from a stream keyed by
/// the utterance id, so scores do not depend on manifest order. Unreadable or
/// malformed utterances become error entries.
pub fn score_manifest(model: &Model, manifest: &Manifest, feature: &FeatureConfig, threads: usize) -> Result<Scoring> {
    let prep = Preparer::new(*feature, None, model.config().frames, 0)?;
    let records = &manifest.records;
    let threads = threads.max(1).min(records.len().max(1));
    let chunk = records.len().div_ceil(threads).max(1);
    let parts: Vec<Result<Scoring>> = std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|recs| s.spawn(|| score_records(model, &prep, recs)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut out = Scoring::default();
    for p in parts {
        let p = p?;
        out.utterances.extend(p.utterances);
        out.errors.extend(p.errors);
    }
    Ok(out)
}

fn score_records(model: &Model, prep: &Preparer, records: &[UtteranceRecord]) -> Result<Scoring> {
    let mut out = Scoring::default();
    let mut pending: Vec<(&UtteranceRecord, Example)> = Vec::new();
    let flush = |pending: &mut Vec<(&UtteranceRecord, Example)>, out: &mut Scoring| -> Result<()> {
        if pending.is_empty() {
            return Ok(());
        }
        let xs: Vec<_> = pending.iter().map(|(_, e)| &e.features).collect();
        let outs = model.forward(&xs, Mode::Eval)?;
        for ((rec, ex), o) in pending.drain(..).zip(outs) {
            let loss = total_loss(&o.a, o.s, ex.label, ex.target)?.total();
            out.utterances.push(ScoredUtterance {
                id: rec.id.clone(),
                label: rec.label,
                score: o.score(),
                loss,
                predicted: decode_span(&o.a),
                truth: ex.target,
            });
        }
        Ok(())
    };
    for rec in records {
        match prep.example(rec, id_stream(&rec.id)) {
            Ok(ex) => pending.push((rec, ex)),
            Err(e @ Error::Numerical(_)) => return Err(e),
            Err(e) => out.errors.push(ScoreError {
                id: rec.id.clone(),
                message: e.to_string(),
            }),
        }
        if pending.len() == SCORE_BATCH {
            flush(&mut pending, &mut out)?;
        }
    }
    flush(&mut pending, &mut out)?;
    Ok(out)
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean QA loss over FAKE utterances.
    pub mean_l_qa: f64,
    pub mean_l_af: f64,
    pub val_eer: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_span_iou: Option<f64>,
    pub steps: usize,
    pub seconds: f64,
}

fn check_both_classes(m: &Manifest, what: &str) -> Result<()> {
    if m.count(Label::Real) == 0 || m.count(Label::Fake) == 0 {
        return Err(Error::invalid_config(format!(
            "{what} manifest must mix REAL and FAKE records ({} real, {} fake)",
            m.count(Label::Real),
            m.count(Label::Fake)
        )));
    }
    Ok(())
}

/// Best epoch so far, by validation EER with validation loss breaking ties.
#[derive(Debug, Clone)]
struct Best {
    eer: f64,
    loss: f64,
    model: Model,
    meta: CheckpointMeta,
}

impl Best {
    fn beats(&self, eer: f64, loss: f64) -> bool {
        eer < self.eer || (eer == self.eer && loss < self.loss)
    }
}

/// Owns the model and optimizer across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    model: Model,
    adam: Adam,
    prep: Preparer,
    epochs_done: usize,
    last: Option<EpochLog>,
    best: Option<Best>,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if model.config().n_bins != cfg.feature.n_bins {
            return Err(Error::invalid_config(format!(
                "model expects {} bins, features give {}",
                model.config().n_bins,
                cfg.feature.n_bins
            )));
        }
        let adam = Adam::new(model.params(), cfg.lr, cfg.weight_decay);
        let prep = Preparer::new(cfg.feature, Some(cfg.augment.clone()), model.config().frames, cfg.seed)?;
        Ok(Self {
            cfg,
            model,
            adam,
            prep,
            epochs_done: 0,
            last: None,
            best: None,
        })
    }

    /// Continue from a checkpoint written by [`Trainer::checkpoint`]; `best` is the
    /// best checkpoint of the same run, if any.
    pub fn resume(last: Checkpoint, best: Option<Checkpoint>, cfg: TrainConfig) -> Result<Self> {
        let mut t = Self::new(last.model, cfg)?;
        if let Some(mut adam) = last.optimizer {
            adam.lr = t.cfg.lr;
            adam.weight_decay = t.cfg.weight_decay;
            t.adam = adam;
        }
        t.epochs_done = last.meta.epoch;
        t.best = best.and_then(|b| {
            Some(Best {
                eer: b.meta.val_eer?,
                loss: b.meta.val_loss.unwrap_or(f64::INFINITY),
                model: b.model,
                meta: b.meta,
            })
        });
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    fn meta(&self, log: Option<&EpochLog>) -> CheckpointMeta {
        CheckpointMeta {
            epoch: self.epochs_done,
            val_eer: log.and_then(|l| l.val_eer),
            val_loss: log.and_then(|l| l.val_loss),
            feature: Some(self.cfg.feature),
        }
    }

    /// Current weights with optimizer state, for resuming.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            meta: self.meta(self.last.as_ref()),
            optimizer: Some(self.adam.clone()),
        }
    }

    /// Weights of the epoch with the lowest validation EER, or the current ones when
    /// no validation set was used.
    pub fn best_checkpoint(&self) -> Checkpoint {
        match &self.best {
            Some(b) => Checkpoint {
                model: b.model.clone(),
                meta: b.meta.clone(),
                optimizer: None,
            },
            None => Checkpoint {
                optimizer: None,
                ..self.checkpoint()
            },
        }
    }

    /// One pass over `train` in a seeded random order, then validation.
    pub fn run_epoch(&mut self, train: &Manifest, val: Option<&Manifest>) -> Result<EpochLog> {
        check_both_classes(train, "training")?;
        let start = Instant::now();
        let epoch = self.epochs_done as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(self.cfg.seed, stream_id(epoch, SHUFFLE_STREAM)));
        let (mut sum_qa, mut n_qa, mut sum_af, mut sum_total) = (0.0, 0usize, 0.0, 0.0);
        let mut steps = 0;
        for (step, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch = idx
                .iter()
                .map(|&i| self.prep.example(&train.records[i], stream_id(epoch, i as u64)))
                .collect::<Result<Vec<_>>>()?;
            let mode = Mode::Train {
                dropout_seed: self.cfg.seed ^ stream_id(epoch + 1, step as u64),
            };
            let out = self.model.loss_and_grad(&batch, mode)?;
            self.adam.step(self.model.params_mut(), &out.grads)?;
            for u in &out.bn_updates {
                u.apply(self.model.params_mut());
            }
            if !self.model.params().all_finite() {
                return Err(Error::Numerical(format!("non-finite parameters after step {step}")));
            }
            for p in &out.loss.parts {
                if let Some(q) = p.qa {
                    sum_qa += q;
                    n_qa += 1;
                }
                sum_af += p.af;
                sum_total += p.total();
            }
            steps += 1;
        }
        self.epochs_done += 1;
        let n = train.len() as f64;
        let mut log = EpochLog {
            epoch: self.epochs_done,
            mean_loss: sum_total / n,
            mean_l_qa: if n_qa > 0 { sum_qa / n_qa as f64 } else { 0.0 },
            mean_l_af: sum_af / n,
            val_eer: None,
            val_loss: None,
            val_span_iou: None,
            steps,
            seconds: 0.0,
        };
        if let Some(val) = val {
            check_both_classes(val, "validation")?;
            let scoring = score_manifest(&self.model, val, &self.cfg.feature, 1)?;
            let report = scoring.report(crate::eval::DEFAULT_TOLERANCE_FRAMES)?;
            let loss = scoring.mean_loss();
            log.val_eer = Some(report.eer);
            log.val_loss = Some(loss);
            log.val_span_iou = report.span_iou_median;
            if self.best.as_ref().is_none_or(|b| b.beats(report.eer, loss)) {
                self.best = Some(Best {
                    eer: report.eer,
                    loss,
                    model: self.model.clone(),
                    meta: self.meta(Some(&log)),
                });
            }
        }
        log.seconds = start.elapsed().as_secs_f64();
        self.last = Some(log.clone());
        Ok(log)
    }

    /// Train until the configured epoch count, calling `on_epoch` after each one.
    pub fn fit(
        &mut self,
        train: &Manifest,
        val: Option<&Manifest>,
        mut on_epoch: impl FnMut(&Trainer, &EpochLog) -> Result<()>,
    ) -> Result<Vec<EpochLog>> {
        check_both_classes(train, "training")?;
        let mut logs = Vec::new();
        while self.epochs_done < self.cfg.epochs {
            let log = self.run_epoch(train, val)?;
            on_epoch(self, &log)?;
            logs.push(log);
        }
        Ok(logs)
    }
}

/// Train `model` from scratch and return the selected checkpoint with the epoch log.
pub fn train(
    train: &Manifest,
    val: Option<&Manifest>,
    model: Model,
    cfg: TrainConfig,
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    let mut t = Trainer::new(model, cfg)?;
    let logs = t.fit(train, val, |_, _| Ok(()))?;
    Ok((t.best_checkpoint(), logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusBuilder, CorpusSpec, PoolSource};
    use crate::model::ModelConfig;

    const FRAMES: usize = 32;

    fn corpus(dir: &std::path::Path, size: usize) -> Manifest {
        let spec = CorpusSpec {
            hosts: PoolSource::Synthetic {
                count: 8,
                speakers: 4,
                duration_ms: [300.0, 400.0],
                seed: 1,
            },
            fake_pool: PoolSource::Synthetic {
                count: 3,
                speakers: 1,
                duration_ms: [300.0, 400.0],
                seed: 2,
            },
            size,
            clip_len_range_ms: [80.0, 160.0],
            resynth_iters: 2,
            seed: 3,
            ..CorpusSpec::default()
        };
        CorpusBuilder::new(spec, dir).unwrap().build(dir, false).unwrap().0
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 1,
            augment: AugmentSpec::disabled(),
            ..TrainConfig::default()
        }
    }

    fn model() -> Model {
        Model::new(ModelConfig::tiny(FRAMES)).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { lr: 0.0, ..cfg() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = TrainConfig { batch_size: 0, ..cfg() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_class_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = corpus(dir.path(), 10);
        m.records.retain(|r| r.label == Label::Real);
        let mut t = Trainer::new(model(), cfg()).unwrap();
        assert!(matches!(t.run_epoch(&m, None), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn prepared_examples_have_model_shape() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 10);
        let prep = Preparer::new(FeatureConfig::default(), Some(AugmentSpec::default()), FRAMES, 0).unwrap();
        for r in &m.records {
            let ex = prep.example(r, 7).unwrap();
            assert_eq!((ex.features.frames, ex.features.n_features), (FRAMES, 80));
            assert_eq!(ex.target.is_some(), r.label == Label::Fake);
            if let Some(t) = ex.target {
                t.check_within(FRAMES).unwrap();
            }
            assert_eq!(prep.example(r, 7).unwrap().features, ex.features);
        }
    }

    #[test]
    fn small_step_decreases_batch_loss() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 8);
        let prep = Preparer::new(FeatureConfig::default(), None, FRAMES, 0).unwrap();
        let batch: Vec<Example> = m.records.iter().map(|r| prep.example(r, 0).unwrap()).collect();
        let mut model = model();
        let mode = Mode::Train { dropout_seed: 4 };
        let out = model.loss_and_grad(&batch, mode).unwrap();
        let mut adam = Adam::new(model.params(), 1e-4, 1e-4);
        adam.step(model.params_mut(), &out.grads).unwrap();
        let after = model.loss(&batch, mode).unwrap().mean();
        assert!(after < out.loss.mean(), "{after} >= {}", out.loss.mean());
    }

    #[test]
    fn weight_decay_changes_the_update() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 8);
        let run = |wd: f64| {
            let mut t = Trainer::new(
                model(),
                TrainConfig {
                    weight_decay: wd,
                    batch_size: 8,
                    ..cfg()
                },
            )
            .unwrap();
            t.run_epoch(&m, None).unwrap();
            t.model().params().clone()
        };
        assert_ne!(run(0.0), run(1e-4));
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 12);
        let c = TrainConfig {
            augment: AugmentSpec::default(),
            ..cfg()
        };
        let mut a = Trainer::new(model(), c.clone()).unwrap();
        let mut b = Trainer::new(model(), c.clone()).unwrap();
        let la = a.run_epoch(&m, Some(&m)).unwrap();
        let lb = b.run_epoch(&m, Some(&m)).unwrap();
        assert_eq!(la.mean_loss, lb.mean_loss);
        assert_eq!(la.val_eer, lb.val_eer);
        assert!(la.val_eer.is_some() && la.mean_l_qa > 0.0 && la.mean_l_af > 0.0);

        // resuming after epoch 1 gives the same epoch 2 as an uninterrupted run
        let mut bytes = Vec::new();
        a.checkpoint().to_writer(&mut bytes).unwrap();
        let ck = Checkpoint::from_reader(&bytes[..]).unwrap();
        let two = TrainConfig { epochs: 2, ..c };
        let mut resumed = Trainer::resume(ck, Some(a.best_checkpoint()), two.clone()).unwrap();
        let logs = resumed.fit(&m, Some(&m), |_, _| Ok(())).unwrap();
        assert_eq!(logs.len(), 1);
        assert_eq!(logs[0].epoch, 2);
        let mut straight = Trainer::new(model(), two).unwrap();
        let full = straight.fit(&m, Some(&m), |_, _| Ok(())).unwrap();
        assert_eq!(full[1].mean_loss, logs[0].mean_loss);
        assert_eq!(resumed.model().params(), straight.model().params());
    }

    #[test]
    fn scoring_properties() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = corpus(dir.path(), 10);
        let model = model();
        let feat = FeatureConfig::default();
        let s1 = score_manifest(&model, &m, &feat, 1).unwrap();
        assert!(s1.errors.is_empty());
        assert!(s1.utterances.iter().all(|u| u.score > 0.0 && u.score < 1.0));
        m.records.reverse();
        let s2 = score_manifest(&model, &m, &feat, 3).unwrap();
        for u in &s1.utterances {
            let v = s2.utterances.iter().find(|x| x.id == u.id).unwrap();
            assert_eq!(u.score, v.score);
        }
        // unreadable audio becomes an error entry and the rest is still scored
        m.records[0].path = dir.path().join("missing.wav");
        let s3 = score_manifest(&model, &m, &feat, 1).unwrap();
        assert_eq!(s3.errors.len(), 1);
        assert_eq!(s3.errors[0].id, m.records[0].id);
        assert_eq!(s3.utterances.len(), m.len() - 1);
        let report = s1.report(10).unwrap();
        assert_eq!(report.n_real + report.n_fake, 10);
        assert!((0.0..=1.0).contains(&report.eer));
    }
}
