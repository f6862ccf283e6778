//! Construction of span-labelled partially fake utterances and their manifests.
//!
//! A fake utterance is a real host with one clip inserted at a uniformly drawn
//! position. Clips come from a pool of fake audio, from real utterances other than
//! the host, or from real audio re-synthesized through Griffin-Lim.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav, Waveform, SAMPLE_RATE};
use crate::dsp::{resynthesize, StftConfig, GRIFFIN_LIM_ITERS};
use crate::error::{Error, Result};
use crate::features::HOP;
use crate::rng::stream_rng;
use crate::span::SampleSpan;
use crate::toy::{synth_utterance, ToyVoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Class index used by the prediction head: 0 = fake, 1 = real.
    pub fn class_index(self) -> usize {
        match self {
            Label::Fake => 0,
            Label::Real => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InsertSource {
    FakePool,
    OtherReal,
    Resynth,
}

impl InsertSource {
    pub const ALL: [InsertSource; 3] = [InsertSource::FakePool, InsertSource::OtherReal, InsertSource::Resynth];
}

impl fmt::Display for InsertSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InsertSource::FakePool => "FAKE_POOL",
            InsertSource::OtherReal => "OTHER_REAL",
            InsertSource::Resynth => "RESYNTH",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Split {
    #[default]
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "dev")]
    Dev,
    #[serde(rename = "adapt-val")]
    AdaptVal,
    #[serde(rename = "test")]
    Test,
}

/// One labelled utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    pub span: Option<SampleSpan>,
    pub insert_source: Option<InsertSource>,
    pub host_id: Option<String>,
}

impl UtteranceRecord {
    pub fn real(id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            label: Label::Real,
            span: None,
            insert_source: None,
            host_id: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fake = self.label == Label::Fake;
        if fake != self.span.is_some() || fake != self.insert_source.is_some() {
            return Err(Error::invalid_input(format!(
                "record {}: a FAKE label requires span and insert_source, a REAL label forbids them",
                self.id
            )));
        }
        if let Some(s) = self.span {
            if s.start >= s.end {
                return Err(Error::invalid_input(format!(
                    "record {}: empty span [{}, {})",
                    self.id, s.start, s.end
                )));
            }
        }
        Ok(())
    }
}

/// Serialized form of a record: one JSON object per manifest line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    path: PathBuf,
    label: Label,
    #[serde(default)]
    span_start: Option<usize>,
    #[serde(default)]
    span_end: Option<usize>,
    #[serde(default)]
    insert_source: Option<InsertSource>,
    #[serde(default)]
    host_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    split: Split,
}

impl From<&UtteranceRecord> for RecordLine {
    fn from(r: &UtteranceRecord) -> Self {
        Self {
            id: r.id.clone(),
            path: r.path.clone(),
            label: r.label,
            span_start: r.span.map(|s| s.start),
            span_end: r.span.map(|s| s.end),
            insert_source: r.insert_source,
            host_id: r.host_id.clone(),
        }
    }
}

impl TryFrom<RecordLine> for UtteranceRecord {
    type Error = Error;

    fn try_from(l: RecordLine) -> Result<Self> {
        let span = match (l.span_start, l.span_end) {
            (Some(start), Some(end)) => Some(SampleSpan { start, end }),
            (None, None) => None,
            _ => return Err(Error::invalid_input("span_start and span_end must both be set or both be null")),
        };
        let rec = UtteranceRecord {
            id: l.id,
            path: l.path,
            label: l.label,
            span,
            insert_source: l.insert_source,
            host_id: l.host_id,
        };
        rec.validate()?;
        Ok(rec)
    }
}

/// An ordered list of records with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub split: Split,
    pub records: Vec<UtteranceRecord>,
}

impl Manifest {
    pub fn new(split: Split, records: Vec<UtteranceRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid_input(format!("duplicate id {}", r.id)));
            }
        }
        Ok(Self { split, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// Cut into consecutive blocks of the given sizes, each tagged with its split.
    /// Records are generated independently per index, so contiguous blocks are
    /// random partitions.
    pub fn partition(&self, parts: &[(Split, usize)]) -> Result<Vec<Manifest>> {
        let total: usize = parts.iter().map(|p| p.1).sum();
        if total != self.len() {
            return Err(Error::invalid_config(format!(
                "partition sizes sum to {total}, manifest has {} records",
                self.len()
            )));
        }
        let mut out = Vec::with_capacity(parts.len());
        let mut at = 0;
        for &(split, n) in parts {
            out.push(Manifest {
                split,
                records: self.records[at..at + n].to_vec(),
            });
            at += n;
        }
        Ok(out)
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        let header = serde_json::to_string(&HeaderLine { split: self.split }).map_err(io_err)?;
        writeln!(w, "{header}")?;
        for r in &self.records {
            let line = serde_json::to_string(&RecordLine::from(r)).map_err(io_err)?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Parse a manifest. The first line may be a `{"split": ...}` header; every other
    /// line is one record. `origin` only labels error messages.
    pub fn from_reader(r: impl BufRead, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut split = Split::default();
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                if let Ok(h) = serde_json::from_str::<HeaderLine>(&line) {
                    split = h.split;
                    continue;
                }
            }
            let raw: RecordLine =
                serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
            let rec = UtteranceRecord::try_from(raw).map_err(|e| parse_err(lineno, e.to_string()))?;
            if !seen.insert(rec.id.clone()) {
                return Err(parse_err(lineno, format!("duplicate id {}", rec.id)));
            }
            records.push(rec);
        }
        Ok(Self { split, records })
    }
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    m.to_writer(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    Manifest::from_reader(std::io::BufReader::new(f), path)
}

fn ms_to_samples(ms: f64) -> usize {
    (ms * SAMPLE_RATE as f64 / 1000.0).round() as usize
}

/// Insert `clip` into `host` before sample `position`.
///
/// With a crossfade, the clip's first and last samples overlap the host with
/// equal-power fades, shortening the output by the fade lengths. The returned span is
/// the clip's extent in the output.
pub fn splice_insert(
    host: &Waveform,
    clip: &Waveform,
    position: usize,
    crossfade_ms: f64,
) -> Result<(Waveform, SampleSpan)> {
    if position > host.len() {
        return Err(Error::invalid_input(format!(
            "insert position {position} beyond host length {}",
            host.len()
        )));
    }
    if clip.is_empty() {
        return Err(Error::invalid_input("empty clip"));
    }
    if !(crossfade_ms >= 0.0) {
        return Err(Error::invalid_input(format!("negative crossfade {crossfade_ms}")));
    }
    let fade = ms_to_samples(crossfade_ms);
    let left = fade.min(position).min(clip.len() / 2);
    let right = fade.min(host.len() - position).min(clip.len() - left);
    let h = &host.samples;
    let c = &clip.samples;
    let mut out = Vec::with_capacity(h.len() + c.len() - left - right);
    out.extend_from_slice(&h[..position - left]);
    for i in 0..left {
        let (fade_in, fade_out) = equal_power(i, left);
        out.push(h[position - left + i] * fade_out + c[i] * fade_in);
    }
    out.extend_from_slice(&c[left..c.len() - right]);
    for i in 0..right {
        let (fade_in, fade_out) = equal_power(i, right);
        out.push(c[c.len() - right + i] * fade_out + h[position + i] * fade_in);
    }
    out.extend_from_slice(&h[position + right..]);
    let start = position - left;
    Ok((
        Waveform::new(out, host.sample_rate),
        SampleSpan {
            start,
            end: start + c.len(),
        },
    ))
}

fn equal_power(i: usize, n: usize) -> (f64, f64) {
    let theta = 0.5 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
    (theta.sin(), theta.cos())
}

/// Crop or tile `wav` to exactly `target_len` samples.
///
/// Crops keep a window overlapping the span by at least `min(span length, 10 hops)`
/// samples; tiling repeats the waveform from its start. The span is re-expressed in
/// the output's coordinates and clipped to it.
pub fn fit_to_length(
    wav: &Waveform,
    span: Option<SampleSpan>,
    target_len: usize,
    rng: &mut impl Rng,
) -> Result<(Waveform, Option<SampleSpan>)> {
    if target_len == 0 {
        return Err(Error::invalid_input("target length must be positive"));
    }
    if wav.is_empty() {
        return Err(Error::invalid_input("cannot fit an empty waveform"));
    }
    let len = wav.len();
    if len == target_len {
        return Ok((wav.clone(), span));
    }
    if len < target_len {
        let samples: Vec<f64> = wav.samples.iter().cycle().take(target_len).copied().collect();
        return Ok((Waveform::new(samples, wav.sample_rate), span));
    }
    let (lo, hi) = match span {
        Some(s) => {
            let need = s.len().min(10 * HOP).min(target_len);
            let lo = (s.start + need).saturating_sub(target_len);
            let hi = (len - target_len).min(s.end - need);
            (lo, hi)
        }
        None => (0, len - target_len),
    };
    let start = rng.gen_range(lo..=hi);
    let samples = wav.samples[start..start + target_len].to_vec();
    let new_span = span.and_then(|s| {
        let a = s.start.max(start) - start;
        let b = s.end.min(start + target_len) - start;
        (a < b).then_some(SampleSpan { start: a, end: b })
    });
    Ok((Waveform::new(samples, wav.sample_rate), new_span))
}

/// Where a pool of utterances comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PoolSource {
    /// Flat directory of 16 kHz mono WAVs, enumerated lexicographically.
    Dir { path: PathBuf },
    /// Generated toy audio.
    Synthetic {
        count: usize,
        speakers: u64,
        duration_ms: [f64; 2],
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub hosts: PoolSource,
    pub fake_pool: PoolSource,
    /// Number of records to generate.
    pub size: usize,
    /// Probability that a record is a partially fake utterance.
    pub fake_fraction: f64,
    /// Probabilities of FAKE_POOL, OTHER_REAL and RESYNTH insertions.
    pub source_mix: [f64; 3],
    pub clip_len_range_ms: [f64; 2],
    pub crossfade_ms: f64,
    pub resynth_iters: usize,
    pub split: Split,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            hosts: PoolSource::Synthetic {
                count: 400,
                speakers: 40,
                duration_ms: [2000.0, 2600.0],
                seed: 1,
            },
            fake_pool: PoolSource::Synthetic {
                count: 100,
                speakers: 1,
                duration_ms: [1000.0, 3000.0],
                seed: 2,
            },
            size: 400,
            fake_fraction: 0.5,
            source_mix: [0.4, 0.3, 0.3],
            clip_len_range_ms: [500.0, 3000.0],
            crossfade_ms: 0.0,
            resynth_iters: GRIFFIN_LIM_ITERS,
            split: Split::Train,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.source_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.source_mix.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid_config(format!(
                "source_mix must be non-negative and sum to 1, got {:?}",
                self.source_mix
            )));
        }
        let [lo, hi] = self.clip_len_range_ms;
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::invalid_config(format!("clip length range [{lo}, {hi}] is invalid")));
        }
        if !(0.0..=1.0).contains(&self.fake_fraction) {
            return Err(Error::invalid_config("fake_fraction must lie in [0, 1]"));
        }
        if !(self.crossfade_ms >= 0.0) {
            return Err(Error::invalid_config("crossfade_ms must be non-negative"));
        }
        if self.resynth_iters == 0 {
            return Err(Error::invalid_config("resynth_iters must be positive"));
        }
        Ok(())
    }

    /// Renormalize the mix with re-synthesis disabled.
    pub fn without_resynthesis(mut self) -> Self {
        let [a, b, _] = self.source_mix;
        let s = a + b;
        self.source_mix = if s > 0.0 { [a / s, b / s, 0.0] } else { [0.5, 0.5, 0.0] };
        self
    }
}

/// A set of utterances held in memory with their ids and file paths.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    pub ids: Vec<String>,
    pub paths: Vec<PathBuf>,
    pub audio: Vec<Waveform>,
    /// Whether the audio was generated and still has to be written to `paths`.
    pub synthetic: bool,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn load(source: &PoolSource, voice: ToyVoice, synth_dir: &Path, prefix: &str) -> Result<Self> {
        match source {
            PoolSource::Dir { path } => {
                if !path.is_dir() {
                    return Err(Error::invalid_config(format!("pool directory {} does not exist", path.display())));
                }
                let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
                    .collect();
                files.sort();
                let audio = files.iter().map(read_wav).collect::<Result<Vec<_>>>()?;
                let ids = files
                    .iter()
                    .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
                    .collect();
                Ok(Self {
                    ids,
                    paths: files,
                    audio,
                    synthetic: false,
                })
            }
            PoolSource::Synthetic {
                count,
                speakers,
                duration_ms,
                seed,
            } => {
                let [lo, hi] = *duration_ms;
                if !(0.0 < lo && lo <= hi) {
                    return Err(Error::invalid_config(format!("duration range [{lo}, {hi}] is invalid")));
                }
                let speakers = (*speakers).max(1);
                let mut pool = Self {
                    synthetic: true,
                    ..Self::default()
                };
                for i in 0..*count {
                    let mut rng = stream_rng(*seed, i as u64);
                    let ms = rng.gen_range(lo..=hi);
                    let speaker = seed.wrapping_mul(1_000_003).wrapping_add(i as u64 % speakers);
                    let wav = synth_utterance(voice, speaker, ms_to_samples(ms).max(1), rng.gen());
                    let id = format!("{prefix}-{i:05}");
                    pool.paths.push(synth_dir.join(format!("{id}.wav")));
                    pool.ids.push(id);
                    pool.audio.push(wav);
                }
                Ok(pool)
            }
        }
    }

    pub fn write_audio(&self) -> Result<()> {
        for (path, wav) in self.paths.iter().zip(&self.audio) {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            write_wav(path, wav)?;
        }
        Ok(())
    }
}

/// Per-source record counts of a generated corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub total: usize,
    pub real: usize,
    pub by_source: BTreeMap<InsertSource, usize>,
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "total={} REAL={}", self.total, self.real)?;
        for s in InsertSource::ALL {
            write!(f, " {}={}", s, self.by_source.get(&s).copied().unwrap_or(0))?;
        }
        Ok(())
    }
}

/// A generated partially fake utterance before it is written out.
#[derive(Debug, Clone)]
pub struct PartialFake {
    pub audio: Waveform,
    pub span: SampleSpan,
    pub source: InsertSource,
    pub host_index: usize,
}

pub struct CorpusBuilder {
    spec: CorpusSpec,
    pub hosts: Pool,
    pub fakes: Pool,
}

impl CorpusBuilder {
    /// Load (or synthesize) the pools. Synthetic pools get paths under `out_dir/pool`.
    pub fn new(spec: CorpusSpec, out_dir: &Path) -> Result<Self> {
        spec.validate()?;
        let pool_dir = out_dir.join("pool");
        let hosts = Pool::load(&spec.hosts, ToyVoice::Real, &pool_dir.join("hosts"), "host")?;
        let fakes = if spec.source_mix[0] > 0.0 {
            Pool::load(&spec.fake_pool, ToyVoice::Fake, &pool_dir.join("fakes"), "fakesrc")?
        } else {
            Pool::default()
        };
        if hosts.is_empty() {
            return Err(Error::invalid_config("host pool is empty"));
        }
        Ok(Self { spec, hosts, fakes })
    }

    pub fn from_pools(spec: CorpusSpec, hosts: Pool, fakes: Pool) -> Result<Self> {
        spec.validate()?;
        if hosts.is_empty() {
            return Err(Error::invalid_config("host pool is empty"));
        }
        Ok(Self { spec, hosts, fakes })
    }

    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    fn draw_source(&self, rng: &mut impl Rng) -> InsertSource {
        let u: f64 = rng.gen();
        let [a, b, _] = self.spec.source_mix;
        if u < a {
            InsertSource::FakePool
        } else if u < a + b {
            InsertSource::OtherReal
        } else {
            InsertSource::Resynth
        }
    }

    fn segment(src: &Waveform, len: usize, rng: &mut impl Rng) -> Waveform {
        if src.len() <= len {
            return src.clone();
        }
        let start = rng.gen_range(0..=src.len() - len);
        Waveform::new(src.samples[start..start + len].to_vec(), src.sample_rate)
    }

    /// Build one partially fake utterance around host `host_index`.
    pub fn make_partial_fake(&self, host_index: usize, rng: &mut impl Rng) -> Result<PartialFake> {
        let host = &self.hosts.audio[host_index];
        let source = self.draw_source(rng);
        let [lo, hi] = self.spec.clip_len_range_ms;
        let clip_len = ms_to_samples(rng.gen_range(lo..=hi)).max(1);
        let clip = match source {
            InsertSource::FakePool => {
                if self.fakes.is_empty() {
                    return Err(Error::invalid_config("FAKE_POOL drawn but the fake pool is empty"));
                }
                let j = rng.gen_range(0..self.fakes.len());
                Self::segment(&self.fakes.audio[j], clip_len, rng)
            }
            InsertSource::OtherReal => {
                if self.hosts.len() < 2 {
                    return Err(Error::invalid_config("OTHER_REAL needs at least two host utterances"));
                }
                let mut j = rng.gen_range(0..self.hosts.len() - 1);
                if j >= host_index {
                    j += 1;
                }
                Self::segment(&self.hosts.audio[j], clip_len, rng)
            }
            InsertSource::Resynth => {
                let j = rng.gen_range(0..self.hosts.len());
                let seg = Self::segment(&self.hosts.audio[j], clip_len, rng);
                let mut out = resynthesize(&seg, StftConfig { n_fft: 384, hop: 128 }, self.spec.resynth_iters)?;
                out.samples.iter_mut().for_each(|s| *s = s.clamp(-1.0, 1.0));
                out
            }
        };
        let position = rng.gen_range(0..=host.len());
        let (mut audio, span) = splice_insert(host, &clip, position, self.spec.crossfade_ms)?;
        audio.quantize_pcm16();
        Ok(PartialFake {
            audio,
            span,
            source,
            host_index,
        })
    }

    /// Generate the corpus into `out_dir/audio`. With `dry_run`, nothing is written
    /// and the manifest refers to the paths that would have been written.
    pub fn build(&self, out_dir: &Path, dry_run: bool) -> Result<(Manifest, CorpusSummary)> {
        let split_tag = match self.spec.split {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::AdaptVal => "adapt-val",
            Split::Test => "test",
        };
        let audio_dir = out_dir.join("audio");
        if !dry_run {
            std::fs::create_dir_all(&audio_dir)?;
            if self.hosts.synthetic {
                self.hosts.write_audio()?;
            }
        }
        let mut summary = CorpusSummary::default();
        let mut records = Vec::with_capacity(self.spec.size);
        for i in 0..self.spec.size {
            let mut rng = stream_rng(self.spec.seed, i as u64);
            let host_index = i % self.hosts.len();
            let fake = rng.gen::<f64>() < self.spec.fake_fraction;
            if !fake {
                records.push(UtteranceRecord::real(
                    format!("{split_tag}-real-{i:06}"),
                    self.hosts.paths[host_index].clone(),
                ));
                summary.real += 1;
                continue;
            }
            let pf = self.make_partial_fake(host_index, &mut rng)?;
            let id = format!("{split_tag}-fake-{i:06}");
            let path = audio_dir.join(format!("{id}.wav"));
            if !dry_run {
                write_wav(&path, &pf.audio)?;
            }
            *summary.by_source.entry(pf.source).or_default() += 1;
            records.push(UtteranceRecord {
                id,
                path,
                label: Label::Fake,
                span: Some(pf.span),
                insert_source: Some(pf.source),
                host_id: Some(self.hosts.ids[host_index].clone()),
            });
        }
        summary.total = records.len();
        Ok((Manifest::new(self.spec.split, records)?, summary))
    }
}
