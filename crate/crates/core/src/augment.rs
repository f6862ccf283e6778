//! On-the-fly waveform augmentation: additive noise at a target SNR, reverberation
//! through a room impulse response, and G.711-style companding.
//!
//! When no external noise or RIR directory is configured, synthetic white/pink
//! noise and exponentially decaying noise RIRs are generated from the utterance's
//! random stream.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    pub noise_prob: f64,
    pub rir_prob: f64,
    pub codec_prob: f64,
    pub snr_range_db: [f64; 2],
    pub rt60_range_ms: [f64; 2],
    pub noise_dir: Option<PathBuf>,
    pub rir_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            noise_prob: 0.5,
            rir_prob: 0.3,
            codec_prob: 0.3,
            snr_range_db: [5.0, 20.0],
            rt60_range_ms: [150.0, 600.0],
            noise_dir: None,
            rir_dir: None,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// A spec that never fires.
    pub fn disabled() -> Self {
        Self {
            noise_prob: 0.0,
            rir_prob: 0.0,
            codec_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.noise_prob == 0.0 && self.rir_prob == 0.0 && self.codec_prob == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("noise_prob", self.noise_prob),
            ("rir_prob", self.rir_prob),
            ("codec_prob", self.codec_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid_config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo <= hi) {
            return Err(Error::invalid_config(format!("snr range [{lo}, {hi}] is inverted")));
        }
        let [lo, hi] = self.rt60_range_ms;
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::invalid_config(format!("rt60 range [{lo}, {hi}] is invalid")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompandingLaw {
    ALaw,
    MuLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    White,
    Pink,
}

pub const MU: f64 = 255.0;
pub const A: f64 = 87.6;
/// Magnitude levels of the 8-bit sign-magnitude code.
const CODE_LEVELS: f64 = 127.0;

/// Mix `noise` into `wav` so that the power ratio of the two addends equals `snr_db`.
///
/// The noise is looped or cropped to the length of `wav`. An infinite SNR returns the
/// input unchanged. If the mixture would clip, it is scaled down to unit peak.
pub fn add_noise(wav: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    if snr_db == f64::INFINITY {
        return Ok(wav.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid_input(format!("snr must be finite or +inf, got {snr_db}")));
    }
    if noise.is_empty() || noise.is_silent() {
        return Err(Error::invalid_input("noise is silent"));
    }
    if wav.is_silent() {
        return Err(Error::invalid_input("cannot set an SNR against a silent signal"));
    }
    let segment: Vec<f64> = noise.samples.iter().cycle().take(wav.len()).copied().collect();
    let p_noise = segment.iter().map(|s| s * s).sum::<f64>() / segment.len() as f64;
    if p_noise == 0.0 {
        return Err(Error::invalid_input("noise segment is silent"));
    }
    let gain = (wav.power() / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut samples: Vec<f64> = wav
        .samples
        .iter()
        .zip(&segment)
        .map(|(s, n)| s + gain * n)
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        samples.iter_mut().for_each(|s| *s /= peak);
    }
    Ok(Waveform::new(samples, wav.sample_rate))
}

/// Linear convolution of `a` and `b`, truncated to `out_len` samples, via FFT.
pub(crate) fn fft_convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let full = a.len() + b.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let lift = |x: &[f64]| -> Vec<Complex64> {
        let mut v: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        v.resize(n, Complex64::new(0.0, 0.0));
        v
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa.iter().take(out_len).map(|c| c.re / n as f64).collect()
}

/// Reverberate `wav` with `rir`: full convolution truncated to the input length and
/// rescaled to the input's peak amplitude.
pub fn convolve_rir(wav: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if rir.is_empty() {
        return Err(Error::invalid_input("empty impulse response"));
    }
    if rir.len() > wav.len() {
        return Err(Error::invalid_input(format!(
            "impulse response ({}) longer than signal ({})",
            rir.len(),
            wav.len()
        )));
    }
    let mut samples = fft_convolve(&wav.samples, &rir.samples, wav.len());
    let (peak_in, peak_out) = (wav.peak(), samples.iter().fold(0.0f64, |m, s| m.max(s.abs())));
    if peak_out > 0.0 {
        let g = peak_in / peak_out;
        samples.iter_mut().for_each(|s| *s *= g);
    }
    Ok(Waveform::new(samples, wav.sample_rate))
}

fn compress(x: f64, law: CompandingLaw) -> f64 {
    let m = x.abs().min(1.0);
    let y = match law {
        CompandingLaw::MuLaw => (1.0 + MU * m).ln() / (1.0 + MU).ln(),
        CompandingLaw::ALaw => {
            if m < 1.0 / A {
                A * m / (1.0 + A.ln())
            } else {
                (1.0 + (A * m).ln()) / (1.0 + A.ln())
            }
        }
    };
    y.copysign(x)
}

fn expand(y: f64, law: CompandingLaw) -> f64 {
    let m = y.abs();
    let x = match law {
        CompandingLaw::MuLaw => ((1.0 + MU).powf(m) - 1.0) / MU,
        CompandingLaw::ALaw => {
            let k = 1.0 + A.ln();
            if m < 1.0 / k {
                m * k / A
            } else {
                (m * k - 1.0).exp() / A
            }
        }
    };
    x.copysign(y)
}

/// Encode one sample to its signed 8-bit code.
pub fn encode_sample(x: f64, law: CompandingLaw) -> i8 {
    (compress(x, law) * CODE_LEVELS).round() as i8
}

pub fn decode_sample(code: i8, law: CompandingLaw) -> f64 {
    expand(code as f64 / CODE_LEVELS, law)
}

/// Compand, quantize to 8 bits, and expand every sample.
pub fn codec(wav: &Waveform, law: CompandingLaw) -> Waveform {
    Waveform::new(
        wav.samples
            .iter()
            .map(|&x| decode_sample(encode_sample(x, law), law))
            .collect(),
        wav.sample_rate,
    )
}

fn normalize_rms(samples: &mut [f64]) {
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt();
    if rms > 0.0 {
        samples.iter_mut().for_each(|s| *s /= rms);
    }
}

/// Seeded unit-RMS noise.
pub fn synth_noise(kind: NoiseKind, len: usize, seed: u64) -> Result<Waveform> {
    if len == 0 {
        return Err(Error::invalid_input("noise length must be positive"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut samples: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    if kind == NoiseKind::Pink {
        let mut planner = FftPlanner::new();
        let mut spec: Vec<Complex64> = samples.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        planner.plan_fft_forward(len).process(&mut spec);
        spec[0] = Complex64::new(0.0, 0.0);
        for k in 1..len {
            let f = k.min(len - k) as f64;
            spec[k] /= f.sqrt();
        }
        planner.plan_fft_inverse(len).process(&mut spec);
        samples = spec.iter().map(|c| c.re).collect();
    }
    normalize_rms(&mut samples);
    Ok(Waveform::at_pipeline_rate(samples))
}

/// Exponentially decaying noise impulse response with a unit direct path at index 0
/// and a 60 dB amplitude decay after `rt60_ms`.
pub fn synth_rir(rt60_ms: f64, len: usize, seed: u64) -> Result<Waveform> {
    if !(rt60_ms > 0.0) {
        return Err(Error::invalid_input(format!("rt60 must be positive, got {rt60_ms}")));
    }
    if len == 0 {
        return Err(Error::invalid_input("rir length must be positive"));
    }
    let decay_samples = rt60_ms * SAMPLE_RATE as f64 / 1000.0;
    let mut rng = stream_rng(seed, 0);
    let mut samples = Vec::with_capacity(len);
    samples.push(1.0);
    for n in 1..len {
        let envelope = 10f64.powf(-3.0 * n as f64 / decay_samples);
        samples.push(envelope * rng.gen_range(-1.0..1.0));
    }
    Ok(Waveform::at_pipeline_rate(samples))
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid_config(format!("no .wav files in {}", dir.display())));
    }
    Ok(files)
}

/// Applies an [`AugmentSpec`] to utterances. External pools are read once at
/// construction.
#[derive(Debug, Clone)]
pub struct Augmenter {
    spec: AugmentSpec,
    noises: Vec<Waveform>,
    rirs: Vec<Waveform>,
}

impl Augmenter {
    pub fn new(spec: AugmentSpec) -> Result<Self> {
        spec.validate()?;
        let load = |dir: &Option<PathBuf>| -> Result<Vec<Waveform>> {
            match dir {
                Some(d) => list_wavs(d)?.iter().map(read_wav).collect(),
                None => Ok(Vec::new()),
            }
        };
        let noises = load(&spec.noise_dir)?;
        let rirs = load(&spec.rir_dir)?;
        if noises.iter().any(|n| n.is_silent()) {
            return Err(Error::invalid_config("noise directory contains a silent file"));
        }
        Ok(Self { spec, noises, rirs })
    }

    pub fn spec(&self) -> &AugmentSpec {
        &self.spec
    }

    /// Augment one utterance. The random draws come from the stream `stream` of the
    /// spec's seed, so the result depends only on (spec, stream, input).
    pub fn apply(&self, wav: &Waveform, stream: u64) -> Result<Waveform> {
        let mut rng = stream_rng(self.spec.seed, stream);
        // every draw happens unconditionally so that decisions do not shift the stream
        let do_rir = rng.gen::<f64>() < self.spec.rir_prob;
        let do_noise = rng.gen::<f64>() < self.spec.noise_prob;
        let do_codec = rng.gen::<f64>() < self.spec.codec_prob;
        let rir_seed: u64 = rng.gen();
        let noise_seed: u64 = rng.gen();
        let unit: f64 = rng.gen();
        let snr_unit: f64 = rng.gen();
        let pink = rng.gen::<bool>();
        let mu = rng.gen::<bool>();
        let pick: usize = rng.gen();

        let mut out = wav.clone();
        if wav.is_silent() || wav.is_empty() {
            return Ok(out);
        }
        if do_rir {
            let rir = if self.rirs.is_empty() {
                let [lo, hi] = self.spec.rt60_range_ms;
                let rt60 = lo + unit * (hi - lo);
                let len = ((rt60 * SAMPLE_RATE as f64 / 1000.0) as usize).clamp(1, out.len());
                synth_rir(rt60, len, rir_seed)?
            } else {
                let mut r = self.rirs[pick % self.rirs.len()].clone();
                r.samples.truncate(out.len());
                r
            };
            out = convolve_rir(&out, &rir)?;
        }
        if do_noise {
            let [lo, hi] = self.spec.snr_range_db;
            let snr = lo + snr_unit * (hi - lo);
            let noise = if self.noises.is_empty() {
                let kind = if pink { NoiseKind::Pink } else { NoiseKind::White };
                synth_noise(kind, out.len(), noise_seed)?
            } else {
                let src = &self.noises[pick % self.noises.len()];
                let offset = (noise_seed % src.len() as u64) as usize;
                let mut rotated = src.samples[offset..].to_vec();
                rotated.extend_from_slice(&src.samples[..offset]);
                Waveform::new(rotated, src.sample_rate)
            };
            if !out.is_silent() {
                out = add_noise(&out, &noise, snr)?;
            }
        }
        if do_codec {
            let law = if mu { CompandingLaw::MuLaw } else { CompandingLaw::ALaw };
            out = codec(&out, law);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, amp: f64, len: usize) -> Waveform {
        Waveform::at_pipeline_rate(
            (0..len)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin())
                .collect(),
        )
    }

    fn power(x: &[f64]) -> f64 {
        x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
    }

    fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
        10.0 * (power(signal) / power(noise)).log10()
    }

    /// Welch-averaged periodogram with non-overlapping Hann segments.
    fn welch(x: &[f64], seg: usize) -> Vec<f64> {
        let w = crate::dsp::periodic_hann(seg);
        let mut psd = vec![0.0; seg / 2 + 1];
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(seg);
        let count = x.len() / seg;
        for s in 0..count {
            let mut buf: Vec<Complex64> = (0..seg).map(|i| Complex64::new(x[s * seg + i] * w[i], 0.0)).collect();
            fft.process(&mut buf);
            for (p, c) in psd.iter_mut().zip(&buf) {
                *p += c.norm_sqr() / count as f64;
            }
        }
        psd
    }

    #[test]
    fn noise_is_mixed_at_requested_snr() {
        let wav = sine(300.0, 0.3, 16000);
        let noise = synth_noise(NoiseKind::White, 5000, 1).unwrap();
        for snr in [0.0, 5.0, 12.5, 20.0] {
            let out = add_noise(&wav, &noise, snr).unwrap();
            assert!(out.peak() <= 1.0);
            // unclipped at these levels, so the residual is exactly the scaled noise
            let residual: Vec<f64> = out.samples.iter().zip(&wav.samples).map(|(o, s)| o - s).collect();
            assert!((snr_db(&wav.samples, &residual) - snr).abs() < 0.01, "snr {snr}");
        }
    }

    #[test]
    fn snr_is_kept_when_mixture_is_peak_normalized() {
        let wav = sine(300.0, 0.95, 8000);
        let noise = synth_noise(NoiseKind::White, 8000, 2).unwrap();
        let out = add_noise(&wav, &noise, 0.0).unwrap();
        assert!(out.peak() <= 1.0 + 1e-12);
        // both addends share the normalization factor
        let g = (wav.power() / noise.power()).sqrt();
        let scale = out.samples[0] / (wav.samples[0] + g * noise.samples[0]);
        let scaled_wav: Vec<f64> = wav.samples.iter().map(|s| s * scale).collect();
        let residual: Vec<f64> = out.samples.iter().zip(&scaled_wav).map(|(o, s)| o - s).collect();
        assert!((snr_db(&scaled_wav, &residual)).abs() < 0.01);
    }

    #[test]
    fn infinite_snr_is_identity_and_silent_noise_is_rejected() {
        let wav = sine(300.0, 0.3, 1000);
        assert_eq!(add_noise(&wav, &Waveform::zeros(10), f64::INFINITY).unwrap(), wav);
        assert!(matches!(add_noise(&wav, &Waveform::zeros(10), 10.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unit_impulse_rir_is_identity() {
        let wav = synth_noise(NoiseKind::White, 4000, 3).unwrap();
        let wav = Waveform::at_pipeline_rate(wav.samples.iter().map(|s| s * 0.2).collect());
        let out = convolve_rir(&wav, &synth_rir(0.001, 1, 0).unwrap()).unwrap();
        for (a, b) in out.samples.iter().zip(&wav.samples) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn delayed_impulse_shifts() {
        let mut wav = sine(200.0, 0.5, 2000);
        wav.samples[100] = 0.9; // peak well inside the kept region
        let d = 37;
        let mut rir = vec![0.0; d + 1];
        rir[d] = 1.0;
        let out = convolve_rir(&wav, &Waveform::at_pipeline_rate(rir)).unwrap();
        for n in 0..wav.len() {
            let expected = if n >= d { wav.samples[n - d] } else { 0.0 };
            assert!((out.samples[n] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let x = synth_noise(NoiseKind::White, 3000, 4).unwrap();
        let h = synth_rir(20.0, 400, 5).unwrap();
        let fast = fft_convolve(&x.samples, &h.samples, x.len());
        for n in (0..x.len()).step_by(7) {
            let direct: f64 = (0..h.len().min(n + 1)).map(|k| h.samples[k] * x.samples[n - k]).sum();
            assert!((fast[n] - direct).abs() < 1e-9);
        }
        // autocorrelation at lag d agrees with the direct-sum oracle
        let out = convolve_rir(&x, &h).unwrap();
        let direct: Vec<f64> = (0..x.len())
            .map(|n| (0..h.len().min(n + 1)).map(|k| h.samples[k] * x.samples[n - k]).sum())
            .collect();
        let g = x.peak() / direct.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let acf = |v: &[f64], lag: usize| -> f64 { (lag..v.len()).map(|i| v[i] * v[i - lag]).sum() };
        for lag in [1, 5, 20] {
            let expected = acf(&direct, lag) * g * g;
            assert!((acf(&out.samples, lag) - expected).abs() < 1e-6 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn rir_preconditions() {
        let wav = sine(200.0, 0.5, 100);
        assert!(convolve_rir(&wav, &Waveform::zeros(0)).is_err());
        assert!(convolve_rir(&wav, &Waveform::zeros(101)).is_err());
    }

    #[test]
    fn codec_fixes_zero_and_is_idempotent() {
        let wav = sine(440.0, 1.0, 16000);
        for law in [CompandingLaw::MuLaw, CompandingLaw::ALaw] {
            assert_eq!(codec(&Waveform::zeros(3), law).samples, vec![0.0; 3]);
            let once = codec(&wav, law);
            let twice = codec(&once, law);
            assert_eq!(once.samples, twice.samples);
            let err: Vec<f64> = once.samples.iter().zip(&wav.samples).map(|(a, b)| a - b).collect();
            let snr = snr_db(&wav.samples, &err);
            assert!(snr >= 30.0, "{law:?}: {snr} dB");
        }
    }

    #[test]
    fn codes_cover_full_range() {
        assert_eq!(encode_sample(1.0, CompandingLaw::MuLaw), 127);
        assert_eq!(encode_sample(-1.0, CompandingLaw::ALaw), -127);
        for law in [CompandingLaw::MuLaw, CompandingLaw::ALaw] {
            for code in -127i8..=127 {
                assert_eq!(encode_sample(decode_sample(code, law), law), code);
            }
        }
    }

    #[test]
    fn synth_noise_is_deterministic_and_unit_rms() {
        for kind in [NoiseKind::White, NoiseKind::Pink] {
            let a = synth_noise(kind, 5000, 9).unwrap();
            let b = synth_noise(kind, 5000, 9).unwrap();
            assert_eq!(a, b);
            assert!((a.rms() - 1.0).abs() < 1e-9);
            assert_ne!(a, synth_noise(kind, 5000, 10).unwrap());
        }
        assert!(synth_noise(NoiseKind::White, 0, 1).is_err());
    }

    #[test]
    fn white_noise_is_flat() {
        let x = synth_noise(NoiseKind::White, 1 << 16, 11).unwrap();
        let psd = welch(&x.samples, 256);
        let inner = &psd[1..128];
        let geo = (inner.iter().map(|p| p.ln()).sum::<f64>() / inner.len() as f64).exp();
        let arith = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!(geo / arith > 0.9, "flatness {}", geo / arith);
    }

    #[test]
    fn pink_noise_slope() {
        let x = synth_noise(NoiseKind::Pink, 1 << 16, 12).unwrap();
        let seg = 1024;
        let psd = welch(&x.samples, seg);
        let bin_hz = 16000.0 / seg as f64;
        let pts: Vec<(f64, f64)> = (1..psd.len() - 1)
            .map(|k| k as f64 * bin_hz)
            .filter(|&f| (50.0..=6000.0).contains(&f))
            .map(|f| (f.log2(), 10.0 * psd[(f / bin_hz).round() as usize].log10()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 3.0103).abs() < 1.0, "slope {slope} dB/octave");
    }

    #[test]
    fn synth_rir_decays_sixty_db_at_rt60() {
        let rt60 = 300.0;
        let h = synth_rir(rt60, 8000, 13).unwrap();
        assert_eq!(h.samples[0], 1.0);
        assert!(h.samples[1..].iter().all(|s| s.abs() <= 1.0));
        let n60 = (rt60 * 16.0) as usize;
        let env = h.samples[n60 - 16..=n60 + 16].iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let db = 20.0 * env.log10();
        assert!((db + 60.0).abs() < 1.0, "envelope {db} dB");
        assert_eq!(h, synth_rir(rt60, 8000, 13).unwrap());
        assert!(synth_rir(0.0, 10, 1).is_err());
    }

    #[test]
    fn disabled_spec_is_bitwise_identity() {
        let aug = Augmenter::new(AugmentSpec::disabled()).unwrap();
        let wav = sine(300.0, 0.4, 4000);
        for stream in 0..10 {
            let out = aug.apply(&wav, stream).unwrap();
            assert!(out.samples.iter().zip(&wav.samples).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn augmentation_is_seeded_and_length_preserving() {
        let spec = AugmentSpec {
            noise_prob: 1.0,
            rir_prob: 1.0,
            codec_prob: 1.0,
            seed: 77,
            ..AugmentSpec::default()
        };
        let aug = Augmenter::new(spec).unwrap();
        let wav = sine(300.0, 0.4, 16000);
        let a = aug.apply(&wav, 5).unwrap();
        let b = aug.apply(&wav, 5).unwrap();
        let c = aug.apply(&wav, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), wav.len());
        assert_eq!(a.sample_rate, wav.sample_rate);
        assert!(a.peak() <= 1.0);
    }

    #[test]
    fn spec_validation() {
        let mut s = AugmentSpec::default();
        s.noise_prob = 1.5;
        assert!(s.validate().is_err());
        let mut s = AugmentSpec::default();
        s.snr_range_db = [20.0, 5.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn external_pools_are_read_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        for (name, seed) in [("b.wav", 1), ("a.wav", 2)] {
            let mut w = synth_noise(NoiseKind::White, 2000, seed).unwrap();
            w.samples.iter_mut().for_each(|s| *s *= 0.1);
            crate::audio::write_wav(dir.path().join(name), &w).unwrap();
        }
        let spec = AugmentSpec {
            noise_prob: 1.0,
            rir_prob: 0.0,
            codec_prob: 0.0,
            noise_dir: Some(dir.path().to_path_buf()),
            ..AugmentSpec::default()
        };
        let aug = Augmenter::new(spec).unwrap();
        assert_eq!(aug.noises.len(), 2);
        let first = crate::audio::read_wav(dir.path().join("a.wav")).unwrap();
        assert_eq!(aug.noises[0], first);
        let out = aug.apply(&sine(300.0, 0.4, 3000), 0).unwrap();
        assert_eq!(out.len(), 3000);
    }
}
