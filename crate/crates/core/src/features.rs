//! Fixed acoustic front-ends: log-mel spectrogram (MSTFT), MFCC and LFCC.
//!
//! All three produce `T × 80` matrices with `T = floor(samples / 128) + 1`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::dsp::{StftConfig, StftPlan};
use crate::error::{Error, Result};

pub const HOP: usize = 128;
pub const N_BINS: usize = 80;
pub const WINDOW_SIZES: [usize; 4] = [384, 512, 640, 768];
pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mstft,
    Mfcc,
    Lfcc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub n_fft: usize,
    pub hop: usize,
    pub n_bins: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::mstft(384)
    }
}

impl FeatureConfig {
    pub fn mstft(n_fft: usize) -> Self {
        Self {
            kind: FeatureKind::Mstft,
            n_fft,
            hop: HOP,
            n_bins: N_BINS,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }

    pub fn mfcc() -> Self {
        Self {
            kind: FeatureKind::Mfcc,
            ..Self::mstft(384)
        }
    }

    pub fn lfcc() -> Self {
        Self {
            kind: FeatureKind::Lfcc,
            ..Self::mstft(384)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop != HOP || self.n_bins != N_BINS {
            return Err(Error::invalid_config(format!(
                "hop must be {HOP} and n_bins {N_BINS}, got {} and {}",
                self.hop, self.n_bins
            )));
        }
        if !WINDOW_SIZES.contains(&self.n_fft) {
            return Err(Error::invalid_config(format!(
                "n_fft must be one of {WINDOW_SIZES:?}, got {}",
                self.n_fft
            )));
        }
        if self.kind != FeatureKind::Mstft && self.n_fft != 384 {
            return Err(Error::invalid_config(format!(
                "{:?} uses n_fft 384, got {}",
                self.kind, self.n_fft
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid_config("log_floor must be positive"));
        }
        Ok(())
    }

    pub fn stft_config(&self) -> StftConfig {
        StftConfig {
            n_fft: self.n_fft,
            hop: self.hop,
        }
    }
}

/// Row-major `frames × n_features` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub frames: usize,
    pub n_features: usize,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, frames: usize, n_features: usize) -> Result<Self> {
        if values.len() != frames * n_features {
            return Err(Error::invalid_input(format!(
                "feature buffer of {} values is not {frames}x{n_features}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            frames,
            n_features,
        })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_features..(t + 1) * self.n_features]
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.n_features + f]
    }

    /// Write the binary dump: `T` and `F` as little-endian u32, then `T·F` f32 values
    /// row-major.
    pub fn write_dump(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        w.write_all(&(self.n_features as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let frames = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n_features = u32::from_le_bytes(word) as usize;
        let mut bytes = vec![0u8; frames * n_features * 4];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(values, frames, n_features)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_dump(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_dump(std::io::BufReader::new(f))
    }
}

/// Triangular filters over the one-sided FFT bins, stored `n_fft_bins × n_filters`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub weights: Vec<f64>,
    pub n_fft_bins: usize,
    pub n_filters: usize,
    pub centers_hz: Vec<f64>,
}

impl FilterBank {
    pub fn weight(&self, bin: usize, filter: usize) -> f64 {
        self.weights[bin * self.n_filters + filter]
    }

    /// Apply to one magnitude frame of length `n_fft_bins`.
    pub fn apply(&self, frame: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (bin, &m) in frame.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let row = &self.weights[bin * self.n_filters..(bin + 1) * self.n_filters];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * m;
            }
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn triangular_bank(n_fft: usize, sample_rate: u32, edges_hz: &[f64]) -> Result<FilterBank> {
    let n_filters = edges_hz.len() - 2;
    let n_fft_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut weights = vec![0.0; n_fft_bins * n_filters];
    for m in 0..n_filters {
        let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for bin in 0..n_fft_bins {
            let f = bin as f64 * bin_hz;
            let w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            weights[bin * n_filters + m] = w;
        }
        if (0..n_fft_bins).all(|b| weights[b * n_filters + m] <= 0.0) {
            return Err(Error::invalid_config(format!(
                "filter {m} of {n_filters} covers no FFT bin at n_fft={n_fft}"
            )));
        }
    }
    Ok(FilterBank {
        weights,
        n_fft_bins,
        n_filters,
        centers_hz: edges_hz[1..=n_filters].to_vec(),
    })
}

/// HTK-style mel filterbank from 0 Hz to Nyquist.
pub fn mel_filterbank(n_fft: usize, n_filters: usize, sample_rate: u32) -> Result<FilterBank> {
    if n_filters == 0 {
        return Err(Error::invalid_config("need at least one filter"));
    }
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    triangular_bank(n_fft, sample_rate, &edges)
}

/// Filters with centers equally spaced on the linear frequency axis.
pub fn linear_filterbank(n_fft: usize, n_filters: usize, sample_rate: u32) -> Result<FilterBank> {
    if n_filters == 0 {
        return Err(Error::invalid_config("need at least one filter"));
    }
    let top = sample_rate as f64 / 2.0;
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| top * i as f64 / (n_filters + 1) as f64)
        .collect();
    triangular_bank(n_fft, sample_rate, &edges)
}

/// Orthonormal DCT-II matrix, `n × n`, row `k` holds basis vector `k`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            m[k * n + i] = scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

pub fn dct2(input: &[f64], basis: &[f64]) -> Vec<f64> {
    let n = input.len();
    (0..n)
        .map(|k| basis[k * n..(k + 1) * n].iter().zip(input).map(|(b, x)| b * x).sum())
        .collect()
}

/// Inverse of [`dct2`] (the orthonormal DCT-III).
pub fn idct2(coeffs: &[f64], basis: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    (0..n)
        .map(|i| (0..n).map(|k| basis[k * n + i] * coeffs[k]).sum())
        .collect()
}

/// Precomputed front-end for one [`FeatureConfig`].
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    plan: StftPlan,
    bank: FilterBank,
    dct: Option<Vec<f64>>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        let sr = crate::audio::SAMPLE_RATE;
        let bank = match config.kind {
            FeatureKind::Mstft | FeatureKind::Mfcc => mel_filterbank(config.n_fft, config.n_bins, sr)?,
            FeatureKind::Lfcc => linear_filterbank(config.n_fft, config.n_bins, sr)?,
        };
        let dct = match config.kind {
            FeatureKind::Mstft => None,
            _ => Some(dct_matrix(config.n_bins)),
        };
        Ok(Self {
            config,
            plan: StftPlan::new(config.stft_config())?,
            bank,
            dct,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Natural log of filterbank energies applied to the magnitude STFT.
    pub fn log_energies(&self, wav: &Waveform) -> Result<FeatureMatrix> {
        let spec = self.plan.stft(wav)?;
        let nb = self.config.n_bins;
        let mut values = vec![0.0; spec.frames * nb];
        let mut mags = vec![0.0; spec.n_bins()];
        for t in 0..spec.frames {
            for (m, c) in mags.iter_mut().zip(spec.frame(t)) {
                *m = c.norm();
            }
            let out = &mut values[t * nb..(t + 1) * nb];
            self.bank.apply(&mags, out);
            for v in out.iter_mut() {
                *v = (*v + self.config.log_floor).ln();
            }
        }
        FeatureMatrix::new(values, spec.frames, nb)
    }

    pub fn compute(&self, wav: &Waveform) -> Result<FeatureMatrix> {
        let mut feats = self.log_energies(wav)?;
        if let Some(basis) = &self.dct {
            let nb = feats.n_features;
            for t in 0..feats.frames {
                let row = &mut feats.values[t * nb..(t + 1) * nb];
                let c = dct2(row, basis);
                row.copy_from_slice(&c);
            }
        }
        Ok(feats)
    }
}

fn compute_kind(wav: &Waveform, cfg: &FeatureConfig, kind: FeatureKind) -> Result<FeatureMatrix> {
    if cfg.kind != kind {
        return Err(Error::invalid_config(format!(
            "expected a {kind:?} config, got {:?}",
            cfg.kind
        )));
    }
    FeatureExtractor::new(*cfg)?.compute(wav)
}

pub fn compute_mstft(wav: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    compute_kind(wav, cfg, FeatureKind::Mstft)
}

pub fn compute_mfcc(wav: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    compute_kind(wav, cfg, FeatureKind::Mfcc)
}

pub fn compute_lfcc(wav: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    compute_kind(wav, cfg, FeatureKind::Lfcc)
}

pub fn compute_features(wav: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(*cfg)?.compute(wav)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::at_pipeline_rate((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect())
    }

    #[test]
    fn mel_bank_is_non_negative_and_covers_every_filter() {
        let bank = mel_filterbank(384, 80, 16000).unwrap();
        assert_eq!((bank.n_fft_bins, bank.n_filters), (193, 80));
        assert!(bank.weights.iter().all(|&w| w >= 0.0));
        for m in 0..80 {
            let col: f64 = (0..193).map(|b| bank.weight(b, m)).sum();
            assert!(col > 0.0, "filter {m}");
        }
    }

    #[test]
    fn mel_first_center() {
        let bank = mel_filterbank(384, 80, 16000).unwrap();
        let expected = mel_to_hz(hz_to_mel(8000.0) / 81.0);
        assert!((bank.centers_hz[0] - expected).abs() < 1e-9);
        // closed form: 700 (10^(mel(8000)/(81*2595)) - 1)
        let mel8k = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        let direct = 700.0 * (10f64.powf(mel8k / 81.0 / 2595.0) - 1.0);
        assert!((bank.centers_hz[0] - direct).abs() < 1e-9);
    }

    #[test]
    fn triangles_overlap_at_most_pairwise() {
        for bank in [
            mel_filterbank(384, 80, 16000).unwrap(),
            linear_filterbank(384, 80, 16000).unwrap(),
        ] {
            let peak = bank.weights.iter().cloned().fold(0.0, f64::max);
            for b in 0..bank.n_fft_bins {
                let sum: f64 = (0..bank.n_filters).map(|m| bank.weight(b, m)).sum();
                let active = (0..bank.n_filters).filter(|&m| bank.weight(b, m) > 0.0).count();
                assert!(sum <= 2.0 * peak + 1e-12);
                assert!(active <= 2);
            }
        }
    }

    #[test]
    fn too_many_filters_is_a_config_error() {
        assert!(matches!(mel_filterbank(384, 400, 16000), Err(Error::InvalidConfig(_))));
        assert!(mel_filterbank(384, 0, 16000).is_err());
    }

    #[test]
    fn linear_centers() {
        let bank = linear_filterbank(384, 80, 16000).unwrap();
        for (i, c) in bank.centers_hz.iter().enumerate() {
            assert!((c - (i + 1) as f64 * 8000.0 / 81.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mstft_shapes_and_silence() {
        let cfg = FeatureConfig::mstft(384);
        let f = compute_mstft(&Waveform::zeros(64000), &cfg).unwrap();
        assert_eq!((f.frames, f.n_features), (501, 80));
        let floor = cfg.log_floor.ln();
        assert!(f.values.iter().all(|&v| v == floor));
        for n_fft in WINDOW_SIZES {
            let f = compute_mstft(&noise(32000, 1), &FeatureConfig::mstft(n_fft)).unwrap();
            assert_eq!(f.frames, 251);
        }
    }

    #[test]
    fn mstft_increases_with_amplitude() {
        let cfg = FeatureConfig::mstft(384);
        let wav = noise(8000, 2);
        let mut louder = wav.clone();
        louder.samples.iter_mut().for_each(|s| *s *= 2.0);
        let a = compute_mstft(&wav, &cfg).unwrap();
        let b = compute_mstft(&louder, &cfg).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(y > x);
        }
    }

    #[test]
    fn mfcc_of_silence() {
        let cfg = FeatureConfig::mfcc();
        let f = compute_mfcc(&Waveform::zeros(32000), &cfg).unwrap();
        assert_eq!((f.frames, f.n_features), (251, 80));
        let c0 = (80f64).sqrt() * cfg.log_floor.ln();
        for t in 0..f.frames {
            assert!((f.get(t, 0) - c0).abs() < 1e-9);
            for k in 1..80 {
                assert!(f.get(t, k).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lfcc_of_silence_and_shape() {
        let cfg = FeatureConfig::lfcc();
        let f = compute_lfcc(&Waveform::zeros(64000), &cfg).unwrap();
        assert_eq!((f.frames, f.n_features), (501, 80));
        for t in 0..f.frames {
            for k in 1..80 {
                assert!(f.get(t, k).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cepstra_invert_to_log_energies() {
        let wav = noise(6000, 5);
        for cfg in [FeatureConfig::mfcc(), FeatureConfig::lfcc()] {
            let ex = FeatureExtractor::new(cfg).unwrap();
            let logs = ex.log_energies(&wav).unwrap();
            let ceps = ex.compute(&wav).unwrap();
            let basis = dct_matrix(80);
            for t in 0..ceps.frames {
                let back = idct2(ceps.row(t), &basis);
                for (a, b) in back.iter().zip(logs.row(t)) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn front_ends_agree_on_frame_count_and_are_deterministic() {
        let wav = noise(20000, 6);
        let a = compute_features(&wav, &FeatureConfig::mstft(640)).unwrap();
        let b = compute_features(&wav, &FeatureConfig::mfcc()).unwrap();
        let c = compute_features(&wav, &FeatureConfig::lfcc()).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(b.frames, c.frames);
        let again = compute_features(&wav, &FeatureConfig::lfcc()).unwrap();
        assert!(c.values.iter().zip(&again.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn kind_mismatch_and_invalid_configs() {
        let wav = noise(1000, 1);
        assert!(compute_mfcc(&wav, &FeatureConfig::mstft(384)).is_err());
        let mut cfg = FeatureConfig::mfcc();
        cfg.n_fft = 512;
        assert!(cfg.validate().is_err());
        let mut cfg = FeatureConfig::mstft(384);
        cfg.hop = 160;
        assert!(cfg.validate().is_err());
        assert!(FeatureConfig::mstft(500).validate().is_err());
    }

    #[test]
    fn dump_round_trip() {
        let f = compute_features(&noise(3000, 7), &FeatureConfig::mstft(384)).unwrap();
        let mut buf = Vec::new();
        f.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + f.frames * 80 * 4);
        assert_eq!(&buf[..4], &(f.frames as u32).to_le_bytes());
        let back = FeatureMatrix::read_dump(&buf[..]).unwrap();
        assert_eq!((back.frames, back.n_features), (f.frames, 80));
        for (a, b) in f.values.iter().zip(&back.values) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}
