//! Centered short-time Fourier transform, its least-squares inverse, and the
//! Griffin-Lim phase reconstruction used to re-synthesize fake clips.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Frame layout of a short-time transform. The window is a periodic Hann taper of
/// length `n_fft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        let cfg = Self { n_fft, hop };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || self.n_fft % 2 != 0 {
            return Err(Error::invalid_config(format!(
                "n_fft must be positive and even, got {}",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::invalid_config(format!(
                "hop must satisfy 0 < hop <= n_fft, got hop={} n_fft={}",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Number of centered frames for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn window(&self) -> Vec<f64> {
        periodic_hann(self.n_fft)
    }
}

pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided complex STFT, row-major `frames × n_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Vec<Complex64>,
    pub frames: usize,
    pub config: StftConfig,
    /// Length of the analysed signal, needed to invert the transform exactly.
    pub signal_len: usize,
    pub sample_rate: u32,
}

/// Non-negative magnitude STFT, row-major `frames × n_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub config: StftConfig,
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let nb = self.n_bins();
        &self.values[t * nb..(t + 1) * nb]
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            values: self.values.iter().map(|c| c.norm()).collect(),
            frames: self.frames,
            config: self.config,
            signal_len: self.signal_len,
            sample_rate: self.sample_rate,
        }
    }
}

impl MagnitudeSpectrogram {
    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let nb = self.n_bins();
        &self.values[t * nb..(t + 1) * nb]
    }
}

/// Index of the source sample that padded position `j` reads from, for a signal of
/// length `len` reflection-padded by `pad` samples on both sides.
fn reflect_index(j: usize, pad: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1) as i64;
    let mut i = (j as i64 - pad as i64).rem_euclid(period);
    if i >= len as i64 {
        i = period - i;
    }
    i as usize
}

/// Reusable FFT plans and window for one [`StftConfig`].
#[derive(Clone)]
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("config", &self.config).finish_non_exhaustive()
    }
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            window: config.window(),
            forward: planner.plan_fft_forward(config.n_fft),
            inverse: planner.plan_fft_inverse(config.n_fft),
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn stft(&self, wav: &Waveform) -> Result<ComplexSpectrogram> {
        if wav.is_empty() {
            return Err(Error::invalid_input("stft of an empty waveform"));
        }
        wav.ensure_finite("stft")?;
        let StftConfig { n_fft, hop } = self.config;
        let len = wav.len();
        let pad = n_fft / 2;
        let frames = self.config.frame_count(len);
        let nb = self.config.n_bins();
        let mut values = Vec::with_capacity(frames * nb);
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            for (k, b) in buf.iter_mut().enumerate() {
                let src = reflect_index(t * hop + k, pad, len);
                *b = Complex64::new(wav.samples[src] * self.window[k], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            values.extend_from_slice(&buf[..nb]);
        }
        Ok(ComplexSpectrogram {
            values,
            frames,
            config: self.config,
            signal_len: len,
            sample_rate: wav.sample_rate,
        })
    }

    /// Least-squares inverse of [`StftPlan::stft`], including the reflection padding:
    /// every padded position contributes to the source sample it was copied from.
    pub fn istft(&self, spec: &ComplexSpectrogram) -> Result<Waveform> {
        if spec.config != self.config {
            return Err(Error::invalid_input("spectrogram config differs from plan"));
        }
        if let Some(i) = spec.values.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid_input(format!(
                "istft: non-finite spectrogram entry at {i}"
            )));
        }
        let StftConfig { n_fft, hop } = self.config;
        let len = spec.signal_len;
        let pad = n_fft / 2;
        let nb = self.config.n_bins();
        let padded_len = (spec.frames - 1) * hop + n_fft;
        let mut num = vec![0.0; padded_len];
        let mut den = vec![0.0; padded_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for t in 0..spec.frames {
            let frame = spec.frame(t);
            buf[..nb].copy_from_slice(frame);
            for k in nb..n_fft {
                buf[k] = frame[n_fft - k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let base = t * hop;
            for k in 0..n_fft {
                let w = self.window[k];
                num[base + k] += w * buf[k].re / n_fft as f64;
                den[base + k] += w * w;
            }
        }
        let mut acc_num = vec![0.0; len];
        let mut acc_den = vec![0.0; len];
        for j in 0..padded_len {
            let i = reflect_index(j, pad, len);
            acc_num[i] += num[j];
            acc_den[i] += den[j];
        }
        let samples = acc_num
            .iter()
            .zip(&acc_den)
            .map(|(&n, &d)| if d > 0.0 { n / d } else { 0.0 })
            .collect();
        Ok(Waveform::new(samples, spec.sample_rate))
    }
}

pub fn stft(wav: &Waveform, cfg: StftConfig) -> Result<ComplexSpectrogram> {
    StftPlan::new(cfg)?.stft(wav)
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    StftPlan::new(spec.config)?.istft(spec)
}

/// Frobenius distance between two one-sided magnitude spectrograms, measured on the
/// full conjugate-symmetric spectrum (interior bins count twice).
pub fn spectral_distance(a: &MagnitudeSpectrogram, b: &MagnitudeSpectrogram) -> f64 {
    let nb = a.n_bins();
    let mut acc = 0.0;
    for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        let k = i % nb;
        let w = if k == 0 || k == nb - 1 { 1.0 } else { 2.0 };
        acc += w * (x - y) * (x - y);
    }
    acc.sqrt()
}

/// Default iteration count for fake-clip re-synthesis.
pub const GRIFFIN_LIM_ITERS: usize = 32;

pub fn griffin_lim(mag: &MagnitudeSpectrogram, iters: usize) -> Result<Waveform> {
    griffin_lim_traced(mag, iters).map(|(w, _)| w)
}

/// Plain Griffin-Lim from zero phase. Returns the waveform after `iters` iterations
/// and the spectral error after each iteration; the error sequence never increases.
pub fn griffin_lim_traced(
    mag: &MagnitudeSpectrogram,
    iters: usize,
) -> Result<(Waveform, Vec<f64>)> {
    if iters == 0 {
        return Err(Error::invalid_input("griffin_lim needs at least one iteration"));
    }
    if let Some(i) = mag.values.iter().position(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::invalid_input(format!(
            "griffin_lim: magnitude entry {i} is negative or non-finite"
        )));
    }
    let plan = StftPlan::new(mag.config)?;
    let mut target = ComplexSpectrogram {
        values: mag.values.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
        frames: mag.frames,
        config: mag.config,
        signal_len: mag.signal_len,
        sample_rate: mag.sample_rate,
    };
    let mut wav = plan.istft(&target)?;
    let mut current = plan.stft(&wav)?;
    let mut errors = Vec::with_capacity(iters);
    for _ in 0..iters {
        for ((dst, &m), c) in target.values.iter_mut().zip(&mag.values).zip(&current.values) {
            let norm = c.norm();
            *dst = if norm > 0.0 {
                c * (m / norm)
            } else {
                Complex64::new(m, 0.0)
            };
        }
        wav = plan.istft(&target)?;
        current = plan.stft(&wav)?;
        errors.push(spectral_distance(&current.magnitude(), mag));
    }
    Ok((wav, errors))
}

/// Re-synthesize a waveform through its linear magnitude STFT, discarding phase.
pub fn resynthesize(wav: &Waveform, cfg: StftConfig, iters: usize) -> Result<Waveform> {
    let mag = stft(wav, cfg)?.magnitude();
    griffin_lim(&mag, iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg384() -> StftConfig {
        StftConfig::new(384, 128).unwrap()
    }

    fn tone(freq: f64, len: usize) -> Waveform {
        Waveform::at_pipeline_rate(
            (0..len)
                .map(|i| (2.0 * PI * freq * i as f64 / 16000.0).sin())
                .collect(),
        )
    }

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::at_pipeline_rate((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Direct O(N^2) DFT magnitude of one windowed frame.
    fn dft_magnitude(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, x) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
            .0
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(383, 128).is_err());
        assert!(StftConfig::new(384, 0).is_err());
        assert!(StftConfig::new(384, 385).is_err());
        assert!(StftConfig::new(384, 384).is_ok());
    }

    #[test]
    fn zero_signal_gives_zero_matrix() {
        let spec = stft(&Waveform::zeros(64000), cfg384()).unwrap();
        assert_eq!(spec.frames, 501);
        assert_eq!(spec.n_bins(), 193);
        assert!(spec.values.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn frame_count_is_independent_of_window() {
        for n_fft in [384, 512, 640, 768] {
            let spec = stft(&Waveform::zeros(64000), StftConfig::new(n_fft, 128).unwrap()).unwrap();
            assert_eq!(spec.frames, 501);
        }
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let wav = tone(1000.0, 16000);
        let spec = stft(&wav, cfg384()).unwrap();
        // interior frame, checked against a direct DFT of the same windowed segment
        let t = 40;
        let w = periodic_hann(384);
        let seg: Vec<f64> = (0..384).map(|k| wav.samples[t * 128 + k - 192] * w[k]).collect();
        let oracle = dft_magnitude(&seg);
        assert_eq!(argmax(&oracle), 24);
        let mags: Vec<f64> = spec.frame(t).iter().map(|c| c.norm()).collect();
        for (a, b) in mags.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        for t in 2..spec.frames - 2 {
            let mags: Vec<f64> = spec.frame(t).iter().map(|c| c.norm()).collect();
            assert_eq!(argmax(&mags), 24, "frame {t}");
        }
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(stft(&Waveform::zeros(0), cfg384()).is_err());
        let mut w = Waveform::zeros(100);
        w.samples[5] = f64::NAN;
        assert!(matches!(stft(&w, cfg384()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn round_trip_white_noise() {
        let wav = noise(16000, 3);
        let back = istft(&stft(&wav, cfg384()).unwrap()).unwrap();
        let err = wav.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "max error {err}");
    }

    #[test]
    fn round_trip_impulse() {
        for len in [1usize, 2, 50, 1000] {
            let mut wav = Waveform::zeros(len);
            wav.samples[len / 2] = 1.0;
            let back = istft(&stft(&wav, cfg384()).unwrap()).unwrap();
            assert_eq!(back.len(), len);
            let err = wav.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "len {len}: max error {err}");
        }
    }

    #[test]
    fn zero_spectrogram_inverts_to_zero() {
        let spec = stft(&Waveform::zeros(3000), cfg384()).unwrap();
        assert!(istft(&spec).unwrap().samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn istft_rejects_non_finite() {
        let mut spec = stft(&noise(1000, 1), cfg384()).unwrap();
        spec.values[7].im = f64::INFINITY;
        assert!(istft(&spec).is_err());
    }

    #[test]
    fn parseval_per_frame() {
        let wav = noise(5000, 9);
        let cfg = cfg384();
        let spec = stft(&wav, cfg).unwrap();
        let w = periodic_hann(384);
        let mut spec_energy = 0.0;
        let mut sig_energy = 0.0;
        for t in 0..spec.frames {
            for (k, wk) in w.iter().enumerate() {
                let x = wav.samples[reflect_index(t * 128 + k, 192, wav.len())] * wk;
                sig_energy += x * x;
            }
            for (k, c) in spec.frame(t).iter().enumerate() {
                let weight = if k == 0 || k == 192 { 1.0 } else { 2.0 };
                spec_energy += weight * c.norm_sqr();
            }
        }
        let ratio = spec_energy / (384.0 * sig_energy);
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn griffin_lim_error_is_monotone() {
        let wav = tone(220.0, 6000);
        let mut speechy = wav.clone();
        let n = noise(6000, 4);
        for (s, r) in speechy.samples.iter_mut().zip(&n.samples) {
            *s = 0.5 * *s + 0.1 * r;
        }
        let mag = stft(&speechy, cfg384()).unwrap().magnitude();
        let (_, errs) = griffin_lim_traced(&mag, 32).unwrap();
        assert_eq!(errs.len(), 32);
        for k in 1..errs.len() {
            assert!(errs[k] <= errs[k - 1] + 1e-7, "iteration {k}: {} > {}", errs[k], errs[k - 1]);
        }
        assert!(errs[31] <= errs[0]);
    }

    #[test]
    fn griffin_lim_zero_magnitude() {
        let mag = stft(&Waveform::zeros(2000), cfg384()).unwrap().magnitude();
        let (wav, errs) = griffin_lim_traced(&mag, 4).unwrap();
        assert!(wav.samples.iter().all(|&s| s == 0.0));
        assert!(errs.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn griffin_lim_keeps_tone_bin() {
        let wav = tone(440.0, 16000);
        let mag = stft(&wav, cfg384()).unwrap().magnitude();
        let out = griffin_lim(&mag, 32).unwrap();
        // 1 Hz resolution DFT over the whole second of audio
        let w = periodic_hann(16000);
        let windowed = |x: &Waveform| -> Vec<f64> { x.samples.iter().zip(&w).map(|(a, b)| a * b).collect() };
        let tone_bin = argmax(&dft_magnitude(&windowed(&wav)));
        assert_eq!(tone_bin, 440);
        assert_eq!(argmax(&dft_magnitude(&windowed(&out))), tone_bin);
    }

    #[test]
    fn griffin_lim_rejects_bad_input() {
        let mut mag = stft(&Waveform::zeros(500), cfg384()).unwrap().magnitude();
        assert!(griffin_lim(&mag, 0).is_err());
        mag.values[3] = -1.0;
        assert!(griffin_lim(&mag, 1).is_err());
    }
}
