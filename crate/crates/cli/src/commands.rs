use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use fakespan::corpus::{read_manifest, write_manifest, CorpusBuilder, Label, Manifest, Split};
use fakespan::eval::{compute_eer, fuse_scores, top_k_by_eer, EvalReport, Fusion, ScoreFile, ScoreSet, DEFAULT_TOLERANCE_FRAMES, GENUINE_HIGH};
use fakespan::experiment::{run_ablation, AblationGrid, AblationRow};
use fakespan::features::FeatureConfig;
use fakespan::model::{file_hash, Checkpoint, Model};
use fakespan::train::{id_stream, score_manifest, EpochLog, Preparer, Trainer};
use fakespan::{Error, Result};

use crate::config::{run_path, RunConfig};
use crate::Command;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::BuildCorpus { config, out, dry_run } => build_corpus(&config, out.as_deref(), dry_run),
        Command::Features { config, manifest, out } => features(&config, &manifest, out.as_deref()),
        Command::Train {
            config,
            manifest,
            val_manifest,
            out,
            resume,
        } => train(&config, &manifest, val_manifest.as_deref(), out.as_deref(), resume),
        Command::Score {
            checkpoint,
            manifest,
            out,
            threads,
        } => score(&checkpoint, &manifest, out.as_deref(), threads_or_default(threads)),
        Command::Eer { scores, manifest, report } => eer(&scores, &manifest, report.as_deref()),
        Command::Fuse {
            scores,
            method,
            weights,
            top_k,
            val_scores,
            val_manifest,
            manifest,
            out,
        } => {
            let method = Fusion::parse(&method, weights.as_deref())?;
            let top_k = match top_k {
                Some(k) => Some((k, val_scores.unwrap_or_default(), val_manifest.expect("clap requires it"))),
                None => None,
            };
            fuse(&scores, &method, top_k, manifest.as_deref(), out.as_deref())
        }
        Command::Ablate {
            config,
            grid,
            out,
            threads,
        } => ablate(&config, &grid, out.as_deref(), threads_or_default(threads)),
    }
}

fn threads_or_default(t: Option<usize>) -> usize {
    t.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidConfig(format!("cannot create output directory {}: {e}", dir.display())))
}

fn json_line(v: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Write through a temporary file so an interrupted run never leaves a torn file.
fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    ckpt.save(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn build_corpus(config: &Path, out: Option<&Path>, dry_run: bool) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let dir = run_path(out, "corpus");
    create_dir(&dir)?;
    cfg.echo(&dir)?;
    let builder = CorpusBuilder::new(cfg.corpus.clone(), &dir)?;
    let (manifest, summary) = builder.build(&dir, dry_run)?;
    write_manifest(&manifest, dir.join("manifest.jsonl"))?;
    if cfg.partition.is_enabled() {
        let [train, val, test] = cfg.partition.sizes(manifest.len());
        let parts = manifest.partition(&[(Split::Train, train), (Split::AdaptVal, val), (Split::Test, test)])?;
        for (name, m) in ["train", "val", "test"].iter().zip(&parts) {
            write_manifest(m, dir.join(format!("{name}.jsonl")))?;
        }
        println!("partition train={train} val={val} test={test}");
    }
    println!("{summary}");
    println!("manifest {}", dir.join("manifest.jsonl").display());
    Ok(())
}

fn features(config: &Path, manifest: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let m = read_manifest(manifest)?;
    let dir = run_path(out, "features");
    create_dir(&dir)?;
    cfg.echo(&dir)?;
    let prep = Preparer::new(cfg.train.feature, None, cfg.model.frames, 0)?;
    let mut failed = 0;
    for rec in &m.records {
        match prep.example(rec, id_stream(&rec.id)) {
            Ok(ex) => ex.features.save(dir.join(format!("{}.feat", rec.id)))?,
            Err(e @ Error::Numerical(_)) => return Err(e),
            Err(e) => {
                failed += 1;
                eprintln!("skipped {}: {e}", rec.id);
            }
        }
    }
    println!("wrote {} feature files to {}", m.len() - failed, dir.display());
    if failed > 0 {
        return Err(Error::InvalidInput(format!("{failed} records could not be featurized")));
    }
    Ok(())
}

fn log_line(l: &EpochLog) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".into(), |v| format!("{v:.6}"));
    format!(
        "epoch={} mean_loss={:.6} mean_l_qa={:.6} mean_l_af={:.6} val_eer={} val_span_iou={} seconds={:.1}",
        l.epoch,
        l.mean_loss,
        l.mean_l_qa,
        l.mean_l_af,
        opt(l.val_eer),
        opt(l.val_span_iou),
        l.seconds
    )
}

fn train(config: &Path, manifest: &Path, val: Option<&Path>, out: Option<&Path>, resume: bool) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let train_m = read_manifest(manifest)?;
    let val_m = val.map(read_manifest).transpose()?;
    let dir = run_path(out, "train");
    create_dir(&dir)?;
    let (last_path, best_path) = (dir.join("last.ckpt"), dir.join("best.ckpt"));
    let mut trainer = if resume {
        if !last_path.is_file() {
            return Err(Error::InvalidConfig(format!("nothing to resume: {} is missing", last_path.display())));
        }
        let last = Checkpoint::load(&last_path)?;
        if last.model.config() != &cfg.model {
            return Err(Error::InvalidConfig("the checkpoint was trained with a different model configuration".into()));
        }
        let best = best_path.is_file().then(|| Checkpoint::load(&best_path)).transpose()?;
        Trainer::resume(last, best, cfg.train.clone())?
    } else {
        Trainer::new(Model::new(cfg.model.clone())?, cfg.train.clone())?
    };
    cfg.echo(&dir)?;
    let mut log = OpenOptions::new()
        .create(true)
        .append(resume)
        .write(true)
        .truncate(!resume)
        .open(dir.join("train_log.jsonl"))?;
    if trainer.epochs_done() >= cfg.train.epochs {
        println!("already trained {} of {} epochs", trainer.epochs_done(), cfg.train.epochs);
    }
    trainer.fit(&train_m, val_m.as_ref(), |t, l| {
        save_checkpoint(&t.checkpoint(), &last_path)?;
        save_checkpoint(&t.best_checkpoint(), &best_path)?;
        writeln!(log, "{}", json_line(l)?)?;
        log.flush()?;
        println!("{}", log_line(l));
        Ok(())
    })?;
    if !best_path.is_file() {
        save_checkpoint(&trainer.best_checkpoint(), &best_path)?;
    }
    println!("best checkpoint {}", best_path.display());
    Ok(())
}

fn has_both_classes(m: &Manifest) -> bool {
    m.count(Label::Real) > 0 && m.count(Label::Fake) > 0
}

fn score(checkpoint: &Path, manifest: &Path, out: Option<&Path>, threads: usize) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let hash = file_hash(checkpoint)?;
    let m = read_manifest(manifest)?;
    let feature = ckpt.meta.feature.unwrap_or_else(FeatureConfig::default);
    let scoring = score_manifest(&ckpt.model, &m, &feature, threads)?;
    let dir = run_path(out, "score");
    create_dir(&dir)?;
    let scores: Vec<(String, f64)> = scoring.utterances.iter().map(|u| (u.id.clone(), u.score)).collect();
    ScoreFile::new(hash, scores).save(dir.join("scores.tsv"))?;
    if !scoring.errors.is_empty() {
        let mut text = String::new();
        for e in &scoring.errors {
            eprintln!("could not score {}: {}", e.id, e.message);
            text.push_str(&format!("{}\t{}\n", e.id, e.message.replace(['\t', '\n'], " ")));
        }
        std::fs::write(dir.join("errors.tsv"), text)?;
    }
    println!("scored {} utterances ({} errors)", scoring.utterances.len(), scoring.errors.len());
    let scored_both = scoring.utterances.iter().any(|u| u.label == Label::Real)
        && scoring.utterances.iter().any(|u| u.label == Label::Fake);
    if scored_both {
        let report = scoring.report(DEFAULT_TOLERANCE_FRAMES)?;
        std::fs::write(dir.join("report.json"), report.to_json())?;
        print_report(&report);
    }
    println!("scores {}", dir.join("scores.tsv").display());
    Ok(())
}

fn print_report(r: &EvalReport) {
    println!("eer\t{:?}", r.eer);
    println!("threshold\t{:?}", r.threshold);
    if let (Some(iou), Some(hits)) = (r.span_iou_median, r.span_hits_at_tolerance) {
        println!("span_iou_median\t{iou:?}");
        println!("span_hits@{}\t{hits:?}", r.tolerance_frames);
    }
}

fn load_genuine_high(path: &Path) -> Result<ScoreFile> {
    let f = ScoreFile::load(path)?;
    if f.polarity != GENUINE_HIGH {
        return Err(Error::InvalidInput(format!(
            "{} has polarity {}, expected {GENUINE_HIGH}",
            path.display(),
            f.polarity
        )));
    }
    Ok(f)
}

fn labelled_report(scores: &[(String, f64)], m: &Manifest) -> Result<EvalReport> {
    let set = ScoreSet::with_labels(scores, m)?;
    let (eer, threshold) = compute_eer(&set)?;
    let n_real = set.entries().iter().filter(|e| e.label == Label::Real).count();
    Ok(EvalReport {
        eer,
        threshold,
        span_iou_median: None,
        span_hits_at_tolerance: None,
        tolerance_frames: DEFAULT_TOLERANCE_FRAMES,
        n_real,
        n_fake: set.len() - n_real,
        n_errors: 0,
    })
}

fn eer(scores: &Path, manifest: &Path, report: Option<&Path>) -> Result<()> {
    let f = load_genuine_high(scores)?;
    let m = read_manifest(manifest)?;
    if !has_both_classes(&m) {
        return Err(Error::InvalidInput("EER needs REAL and FAKE records in the manifest".into()));
    }
    let r = labelled_report(&f.scores, &m)?;
    print_report(&r);
    if let Some(p) = report {
        std::fs::write(p, r.to_json())?;
    }
    Ok(())
}

fn fuse(
    paths: &[PathBuf],
    method: &Fusion,
    top_k: Option<(usize, Vec<PathBuf>, PathBuf)>,
    manifest: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let files = paths.iter().map(|p| ScoreFile::load(p)).collect::<Result<Vec<_>>>()?;
    let polarity = &files[0].polarity;
    if let Some((i, f)) = files.iter().enumerate().find(|(_, f)| &f.polarity != polarity) {
        return Err(Error::InvalidInput(format!(
            "polarity mismatch: {} is {polarity}, {} is {}",
            paths[0].display(),
            paths[i].display(),
            f.polarity
        )));
    }
    let mut chosen: Vec<usize> = (0..files.len()).collect();
    if let Some((k, val_paths, val_manifest)) = top_k {
        if val_paths.len() != files.len() {
            return Err(Error::InvalidConfig(format!(
                "{} validation score files for {} systems",
                val_paths.len(),
                files.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("--top-k must be at least 1".into()));
        }
        let vm = read_manifest(&val_manifest)?;
        let mut eers = Vec::new();
        for p in &val_paths {
            let f = load_genuine_high(p)?;
            eers.push(compute_eer(&ScoreSet::with_labels(&f.scores, &vm)?)?.0);
        }
        chosen = top_k_by_eer(&eers, k);
        for &i in &chosen {
            println!("selected {} (val eer {:?})", paths[i].display(), eers[i]);
        }
    }
    let method = match method {
        Fusion::Wavg(w) if w.len() == files.len() => Fusion::Wavg(chosen.iter().map(|&i| w[i]).collect()),
        other => other.clone(),
    };
    let lists: Vec<Vec<(String, f64)>> = chosen.iter().map(|&i| files[i].scores.clone()).collect();
    let fused = fuse_scores(&lists, &method)?;
    let tag = chosen.iter().map(|&i| files[i].checkpoint.as_str()).collect::<Vec<_>>().join("+");
    let dir = run_path(out, "fuse");
    create_dir(&dir)?;
    let fused_file = ScoreFile {
        polarity: polarity.clone(),
        checkpoint: tag,
        scores: fused,
    };
    fused_file.save(dir.join("fused_scores.tsv"))?;
    if let Some(mp) = manifest {
        if polarity != GENUINE_HIGH {
            return Err(Error::InvalidInput(format!("cannot evaluate {polarity} scores")));
        }
        let r = labelled_report(&fused_file.scores, &read_manifest(mp)?)?;
        std::fs::write(dir.join("report.json"), r.to_json())?;
        print_report(&r);
    }
    println!("fused {} systems into {}", chosen.len(), dir.join("fused_scores.tsv").display());
    Ok(())
}

fn ablate(config: &Path, axes: &[String], out: Option<&Path>, threads: usize) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut grid = AblationGrid::base(&cfg.corpus, &cfg.model, &cfg.train);
    for a in axes {
        grid.set_axis(a)?;
    }
    if !(cfg.partition.val_fraction > 0.0 && cfg.partition.test_fraction > 0.0) {
        return Err(Error::InvalidConfig("ablation needs non-empty validation and test partitions".into()));
    }
    let sizes = cfg.partition.sizes(cfg.corpus.size);
    let dir = run_path(out, "ablate");
    create_dir(&dir)?;
    cfg.echo(&dir)?;
    let mut jsonl = std::fs::File::create(dir.join("ablation.jsonl"))?;
    println!("{}", AblationRow::TSV_HEADER);
    let mut io_err = None;
    let rows = run_ablation(&cfg.corpus, sizes, &cfg.model, &cfg.train, &grid, &dir, threads, |row| {
        println!("{}", row.tsv());
        if let Err(e) = json_line(row).and_then(|l| Ok(writeln!(jsonl, "{l}")?)) {
            io_err.get_or_insert(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e);
    }
    let mut table = String::from(AblationRow::TSV_HEADER);
    table.push('\n');
    for r in &rows {
        table.push_str(&r.tsv());
        table.push('\n');
    }
    std::fs::write(dir.join("ablation.tsv"), table)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see the error column", rows.len());
    }
    Ok(())
}
