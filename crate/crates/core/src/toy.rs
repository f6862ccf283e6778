//! Synthetic stand-ins for real and fake speech, used for desk-scale experiments
//! when no corpus is available.
//!
//! Real utterances are additive harmonic "syllables" with a speaker-specific pitch
//! and two moving formant resonances. Fake utterances are monotone harmonic buzz
//! with a flat spectrum up to 7 kHz plus a band of high-frequency hiss.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyVoice {
    /// Speech-like host audio.
    Real,
    /// Spectrally distinct synthetic "fake" audio.
    Fake,
}

fn resonance(f: f64, center: f64, bandwidth: f64) -> f64 {
    let d = (f - center) / bandwidth;
    (-0.5 * d * d).exp()
}

/// One synthetic utterance of `len` samples from speaker `speaker`.
pub fn synth_utterance(voice: ToyVoice, speaker: u64, len: usize, seed: u64) -> Waveform {
    match voice {
        ToyVoice::Real => synth_speech(speaker, len, seed),
        ToyVoice::Fake => synth_buzz(len, seed),
    }
}

fn synth_speech(speaker: u64, len: usize, seed: u64) -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let mut voice_rng = stream_rng(speaker, 0x5eed);
    let f0_base: f64 = voice_rng.gen_range(95.0..240.0);
    let formant_shift: f64 = voice_rng.gen_range(0.85..1.2);
    let mut rng = stream_rng(seed, speaker);
    let mut out = vec![0.0; len];
    let mut pos = rng.gen_range(0..1600usize).min(len);
    while pos < len {
        let syl_len = rng.gen_range(1900..4800usize);
        let f0_start = f0_base * rng.gen_range(0.9..1.12);
        let f0_end = f0_start * rng.gen_range(0.85..1.15);
        let f1 = rng.gen_range(300.0..850.0) * formant_shift;
        let f2 = rng.gen_range(900.0..2400.0) * formant_shift;
        let f2_end = f2 * rng.gen_range(0.85..1.15);
        let gain = rng.gen_range(0.25..0.5);
        let mut phase = 0.0f64;
        let end = (pos + syl_len).min(len);
        for (i, n) in (pos..end).enumerate() {
            let u = i as f64 / syl_len as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            let f2n = f2 + (f2_end - f2) * u;
            phase += 2.0 * PI * f0 / sr;
            let env = (PI * u).sin().powf(0.6);
            let mut acc = 0.0;
            let mut h = 1;
            while (h as f64) * f0 < 4000.0 {
                let f = h as f64 * f0;
                let amp = (resonance(f, f1, 120.0) + 0.6 * resonance(f, f2n, 180.0) + 0.02) / (h as f64).sqrt();
                acc += amp * (h as f64 * phase).sin();
                h += 1;
            }
            out[n] += gain * env * acc;
        }
        pos = end + rng.gen_range(300..1800usize);
    }
    let mut floor_rng = stream_rng(seed ^ 0x9e37_79b9, speaker);
    for s in &mut out {
        *s += 0.002 * floor_rng.gen_range(-1.0..1.0);
    }
    finish(out)
}

fn synth_buzz(len: usize, seed: u64) -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let mut rng = stream_rng(seed, 0xbadf);
    let f0: f64 = rng.gen_range(110.0..260.0);
    let hiss_center: f64 = rng.gen_range(5000.0..7000.0);
    let mut out = vec![0.0; len];
    let mut phase = 0.0f64;
    let mut hiss_phase = 0.0f64;
    for (n, o) in out.iter_mut().enumerate() {
        phase += 2.0 * PI * f0 / sr;
        let mut acc = 0.0;
        let mut h = 1;
        while (h as f64) * f0 < 7000.0 {
            acc += (h as f64 * phase).sin() / (h as f64).powf(0.3);
            h += 1;
        }
        // narrow noise band around hiss_center: random-phase carrier with jitter
        hiss_phase += 2.0 * PI * (hiss_center + 300.0 * rng.gen_range(-1.0..1.0)) / sr;
        let am = 0.6 + 0.4 * (2.0 * PI * 4.0 * n as f64 / sr).sin();
        *o = 0.04 * am * acc + 0.05 * hiss_phase.sin() + 0.01 * rng.gen_range(-1.0..1.0);
    }
    finish(out)
}

fn finish(mut samples: Vec<f64>) -> Waveform {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = 0.6 / peak;
        samples.iter_mut().for_each(|s| *s *= g);
    }
    let mut wav = Waveform::at_pipeline_rate(samples);
    wav.quantize_pcm16();
    wav
}
