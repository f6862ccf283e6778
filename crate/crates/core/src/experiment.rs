//! Toy-scale experiments: one generated corpus cut into training, validation and
//! test sets, a runner for a single configuration, and the ablation grid.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::augment::AugmentSpec;
use crate::corpus::{write_manifest, CorpusBuilder, CorpusSpec, CorpusSummary, Manifest, Split};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, DEFAULT_TOLERANCE_FRAMES};
use crate::features::{FeatureConfig, FeatureKind, WINDOW_SIZES};
use crate::model::{Checkpoint, Model, ModelConfig, Pooling};
use crate::train::{score_manifest, EpochLog, Scoring, TrainConfig, Trainer};

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
}

/// Generate `sizes.iter().sum()` records from `spec` into `out_dir` and cut them into
/// consecutive train / validation / test blocks. All four manifests are written
/// next to the audio.
pub fn build_splits(spec: &CorpusSpec, sizes: [usize; 3], out_dir: &Path) -> Result<(Splits, CorpusSummary)> {
    let spec = CorpusSpec {
        size: sizes.iter().sum(),
        ..spec.clone()
    };
    let builder = CorpusBuilder::new(spec, out_dir)?;
    let (all, summary) = builder.build(out_dir, false)?;
    let mut parts = all
        .partition(&[(Split::Train, sizes[0]), (Split::AdaptVal, sizes[1]), (Split::Test, sizes[2])])?
        .into_iter();
    let (train, val, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
    write_manifest(&all, out_dir.join("manifest.jsonl"))?;
    write_manifest(&train, out_dir.join("train.jsonl"))?;
    write_manifest(&val, out_dir.join("val.jsonl"))?;
    write_manifest(&test, out_dir.join("test.jsonl"))?;
    Ok((Splits { train, val, test }, summary))
}

/// A trained configuration evaluated on the validation and test sets.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    /// Weights of the epoch with the lowest validation EER.
    pub checkpoint: Checkpoint,
    pub logs: Vec<EpochLog>,
    pub val: EvalReport,
    pub test: EvalReport,
    pub test_scoring: Scoring,
    pub seconds: f64,
}

/// Train from scratch on `splits.train`, select by validation EER, score the test set.
pub fn run_cell(
    model: &ModelConfig,
    train: &TrainConfig,
    splits: &Splits,
    threads: usize,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<CellOutcome> {
    let start = Instant::now();
    let mut trainer = Trainer::new(Model::new(model.clone())?, train.clone())?;
    let logs = trainer.fit(&splits.train, Some(&splits.val), |_, log| {
        on_epoch(log);
        Ok(())
    })?;
    let checkpoint = trainer.best_checkpoint();
    let val = score_manifest(&checkpoint.model, &splits.val, &train.feature, threads)?.report(DEFAULT_TOLERANCE_FRAMES)?;
    let test_scoring = score_manifest(&checkpoint.model, &splits.test, &train.feature, threads)?;
    let test = test_scoring.report(DEFAULT_TOLERANCE_FRAMES)?;
    Ok(CellOutcome {
        checkpoint,
        logs,
        val,
        test,
        test_scoring,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One point of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AblationCell {
    pub window: usize,
    pub pooling: Pooling,
    pub augment: bool,
    pub resynth: bool,
    pub attention: bool,
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl AblationCell {
    /// Directory-safe name.
    pub fn name(&self) -> String {
        format!(
            "w{}-{}-aug-{}-resynth-{}-att-{}",
            self.window,
            self.pooling,
            on_off(self.augment),
            on_off(self.resynth),
            on_off(self.attention)
        )
    }

    /// Apply the cell to base configurations. Augmentation "on" keeps the base
    /// augmentation when it is enabled and uses the defaults otherwise.
    pub fn configure(&self, model: &ModelConfig, train: &TrainConfig) -> (ModelConfig, TrainConfig) {
        let model = ModelConfig {
            pooling: self.pooling,
            attention: self.attention,
            ..model.clone()
        };
        let augment = match (self.augment, train.augment.is_disabled()) {
            (false, _) => AugmentSpec::disabled(),
            (true, false) => train.augment.clone(),
            (true, true) => AugmentSpec {
                seed: train.augment.seed,
                ..AugmentSpec::default()
            },
        };
        let train = TrainConfig {
            feature: FeatureConfig {
                n_fft: self.window,
                ..train.feature
            },
            augment,
            ..train.clone()
        };
        (model, train)
    }
}

/// Values of each ablation axis. The grid is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AblationGrid {
    pub windows: Vec<usize>,
    pub poolings: Vec<Pooling>,
    pub augment: Vec<bool>,
    pub resynth: Vec<bool>,
    pub attention: Vec<bool>,
}

fn parse_switch(v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(Error::invalid_config(format!("expected on/off, got {other:?}"))),
    }
}

impl AblationGrid {
    /// The one-cell grid of the base configuration.
    pub fn base(corpus: &CorpusSpec, model: &ModelConfig, train: &TrainConfig) -> Self {
        Self {
            windows: vec![train.feature.n_fft],
            poolings: vec![model.pooling],
            augment: vec![!train.augment.is_disabled()],
            resynth: vec![corpus.source_mix[2] > 0.0],
            attention: vec![model.attention],
        }
    }

    /// Replace one axis from `name=v1,v2,...`. Axes: window, pooling, augment,
    /// resynth, attention.
    pub fn set_axis(&mut self, arg: &str) -> Result<()> {
        let (name, values) = arg
            .split_once('=')
            .ok_or_else(|| Error::invalid_config(format!("grid axis {arg:?} is not name=values")))?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::invalid_config(format!("grid axis {name} has no values")));
        }
        match name.trim() {
            "window" => {
                self.windows = values
                    .iter()
                    .map(|v| match v.parse::<usize>() {
                        Ok(w) if WINDOW_SIZES.contains(&w) => Ok(w),
                        _ => Err(Error::invalid_config(format!("window must be one of {WINDOW_SIZES:?}, got {v}"))),
                    })
                    .collect::<Result<_>>()?
            }
            "pooling" => {
                self.poolings = values
                    .iter()
                    .map(|v| v.parse().map_err(Error::InvalidConfig))
                    .collect::<Result<_>>()?
            }
            "augment" => self.augment = values.iter().map(|v| parse_switch(v)).collect::<Result<_>>()?,
            "resynth" => self.resynth = values.iter().map(|v| parse_switch(v)).collect::<Result<_>>()?,
            "attention" => self.attention = values.iter().map(|v| parse_switch(v)).collect::<Result<_>>()?,
            other => {
                return Err(Error::invalid_config(format!(
                    "unknown grid axis {other:?} (expected window, pooling, augment, resynth or attention)"
                )))
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<AblationCell> {
        let mut out = Vec::new();
        for &resynth in &self.resynth {
            for &window in &self.windows {
                for &pooling in &self.poolings {
                    for &augment in &self.augment {
                        for &attention in &self.attention {
                            out.push(AblationCell {
                                window,
                                pooling,
                                augment,
                                resynth,
                                attention,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Result of one grid cell. Metrics are absent when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    #[serde(flatten)]
    pub cell: AblationCell,
    pub val_eer: Option<f64>,
    pub val_span_iou: Option<f64>,
    pub test_eer: Option<f64>,
    pub test_span_iou: Option<f64>,
    pub epochs: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

impl AblationRow {
    pub const TSV_HEADER: &'static str =
        "window\tpooling\taugment\tresynth\tattention\tval_eer\tval_span_iou\ttest_eer\ttest_span_iou\tepochs\tseconds\terror";

    fn failed(cell: AblationCell, e: &Error) -> Self {
        Self {
            cell,
            val_eer: None,
            val_span_iou: None,
            test_eer: None,
            test_span_iou: None,
            epochs: 0,
            seconds: 0.0,
            error: Some(e.to_string()),
        }
    }

    pub fn tsv(&self) -> String {
        let num = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        let err = self.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ");
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.1}\t{}",
            self.cell.window,
            self.cell.pooling,
            on_off(self.cell.augment),
            on_off(self.cell.resynth),
            on_off(self.cell.attention),
            num(self.val_eer),
            num(self.val_span_iou),
            num(self.test_eer),
            num(self.test_span_iou),
            self.epochs,
            self.seconds,
            err
        )
    }
}

/// Run every cell of `grid`. One corpus is generated per re-synthesis setting under
/// `out_dir/corpus-resynth-{on,off}`; each cell's best checkpoint and epoch log go
/// to `out_dir/cells/<cell name>`. A failing cell (or corpus) becomes an error row
/// and the grid continues.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    corpus: &CorpusSpec,
    sizes: [usize; 3],
    model: &ModelConfig,
    train: &TrainConfig,
    grid: &AblationGrid,
    out_dir: &Path,
    threads: usize,
    mut on_row: impl FnMut(&AblationRow),
) -> Vec<AblationRow> {
    if train.feature.kind != FeatureKind::Mstft && grid.windows.iter().any(|&w| w != 384) {
        let e = Error::invalid_config("window ablation needs mstft features");
        return grid.cells().into_iter().map(|c| AblationRow::failed(c, &e)).inspect(|r| on_row(r)).collect();
    }
    let mut rows = Vec::new();
    for &resynth in &grid.resynth {
        let spec = if resynth {
            corpus.clone()
        } else {
            corpus.clone().without_resynthesis()
        };
        let dir = out_dir.join(format!("corpus-resynth-{}", on_off(resynth)));
        let splits = if resynth && spec.source_mix[2] == 0.0 {
            Err(Error::invalid_config("re-synthesis on, but the corpus source mix gives it zero weight"))
        } else {
            build_splits(&spec, sizes, &dir).map(|s| s.0)
        };
        for cell in grid.cells().into_iter().filter(|c| c.resynth == resynth) {
            let row = match &splits {
                Ok(splits) => run_grid_cell(cell, model, train, splits, out_dir, threads)
                    .unwrap_or_else(|e| AblationRow::failed(cell, &e)),
                Err(e) => AblationRow::failed(cell, e),
            };
            on_row(&row);
            rows.push(row);
        }
    }
    rows
}

fn run_grid_cell(
    cell: AblationCell,
    model: &ModelConfig,
    train: &TrainConfig,
    splits: &Splits,
    out_dir: &Path,
    threads: usize,
) -> Result<AblationRow> {
    let (model, train) = cell.configure(model, train);
    let out = run_cell(&model, &train, splits, threads, |_| {})?;
    let dir = out_dir.join("cells").join(cell.name());
    std::fs::create_dir_all(&dir)?;
    out.checkpoint.save(dir.join("best.ckpt"))?;
    let mut log = String::new();
    for l in &out.logs {
        log.push_str(&serde_json::to_string(l).map_err(|e| Error::Io(std::io::Error::other(e)))?);
        log.push('\n');
    }
    std::fs::write(dir.join("log.jsonl"), log)?;
    Ok(AblationRow {
        cell,
        val_eer: Some(out.val.eer),
        val_span_iou: out.val.span_iou_median,
        test_eer: Some(out.test.eer),
        test_span_iou: out.test.span_iou_median,
        epochs: out.logs.len(),
        seconds: out.seconds,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PoolSource;

    fn base() -> (CorpusSpec, ModelConfig, TrainConfig) {
        let corpus = CorpusSpec {
            hosts: PoolSource::Synthetic {
                count: 16,
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
            clip_len_range_ms: [60.0, 120.0],
            resynth_iters: 4,
            ..CorpusSpec::default()
        };
        let train = TrainConfig {
            epochs: 1,
            batch_size: 4,
            augment: AugmentSpec::disabled(),
            ..TrainConfig::default()
        };
        (corpus, ModelConfig::tiny(24), train)
    }

    #[test]
    fn grid_axes_and_cells() {
        let (c, m, t) = base();
        let mut g = AblationGrid::base(&c, &m, &t);
        assert_eq!(g.cells().len(), 1);
        g.set_axis("window=384,512").unwrap();
        g.set_axis("attention=on,off").unwrap();
        let cells = g.cells();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().any(|c| c.window == 512 && !c.attention));
        assert!(g.set_axis("window=100").is_err());
        assert!(g.set_axis("depth=3").is_err());
        assert!(g.set_axis("pooling=").is_err());
        g.set_axis("pooling=avg,SAP").unwrap();
        assert_eq!(g.poolings, vec![Pooling::Avg, Pooling::Sap]);
    }

    #[test]
    fn cell_configuration() {
        let (_, m, t) = base();
        let cell = AblationCell {
            window: 640,
            pooling: Pooling::Sap,
            augment: true,
            resynth: false,
            attention: false,
        };
        let (m2, t2) = cell.configure(&m, &t);
        assert!(!m2.attention);
        assert_eq!(m2.pooling, Pooling::Sap);
        assert_eq!(t2.feature.n_fft, 640);
        assert!(!t2.augment.is_disabled());
        let p = Model::new(m2).unwrap().params().clone();
        assert!(!p.ids().any(|id| p.name(id).starts_with("attn.")));
    }

    #[test]
    fn ablation_rows_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        let (c, m, t) = base();
        let mut g = AblationGrid::base(&c, &m, &t);
        g.set_axis("attention=on,off").unwrap();
        g.set_axis("pooling=avg,asp").unwrap();
        let mut seen = 0;
        let rows = run_ablation(&c, [16, 8, 8], &m, &t, &g, dir.path(), 1, |_| seen += 1);
        assert_eq!((rows.len(), seen), (4, 4));
        for r in &rows {
            assert!(r.error.is_none(), "{:?}", r.error);
            assert!(r.val_eer.is_some() && r.test_span_iou.is_some());
            assert_eq!(r.tsv().split('\t').count(), AblationRow::TSV_HEADER.split('\t').count());
            assert!(dir.path().join("cells").join(r.cell.name()).join("best.ckpt").is_file());
        }
        // a failing cell is recorded and the rest still run
        let bad = TrainConfig { lr: -1.0, ..t.clone() };
        let rows = run_ablation(&c, [16, 8, 8], &m, &bad, &AblationGrid::base(&c, &m, &t), dir.path(), 1, |_| {});
        assert_eq!(rows.len(), 1);
        assert!(rows[0].error.as_deref().unwrap().contains("lr"));
    }
}
