//! Mono waveforms and 16-bit PCM WAV input/output.

use std::path::Path;

use crate::error::{Error, Result};

/// Sample rate of every waveform that enters the pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// A mono sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    /// A waveform at the pipeline rate.
    pub fn at_pipeline_rate(samples: Vec<f64>) -> Self {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn zeros(len: usize) -> Self {
        Self::at_pipeline_rate(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid_input(format!(
                "{what}: non-finite sample at index {i}"
            )));
        }
        Ok(())
    }

    /// Snap every sample onto the 16-bit PCM grid used by [`write_wav`], so that a
    /// write/read round trip is lossless.
    pub fn quantize_pcm16(&mut self) {
        for s in &mut self.samples {
            *s = pcm16_from_sample(*s) as f64 / 32768.0;
        }
    }
}

fn pcm16_from_sample(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Read a RIFF PCM WAV file. Only 16-bit signed, mono, 16 kHz files are accepted.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let audio_err = |message: String| Error::Audio {
        path: path.to_path_buf(),
        message,
    };
    let reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(audio_err(format!(
            "expected 16-bit signed PCM, found {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(audio_err(format!(
            "expected mono, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(audio_err(format!(
            "expected {SAMPLE_RATE} Hz, found {} Hz",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| audio_err(e.to_string()))?;
    Ok(Waveform::at_pipeline_rate(samples))
}

/// Write a 16-bit mono PCM WAV file. Samples outside [-1, 1) saturate.
pub fn write_wav(path: impl AsRef<Path>, wav: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let audio_err = |e: hound::Error| Error::Audio {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(audio_err)?;
    for &s in &wav.samples {
        writer.write_sample(pcm16_from_sample(s)).map_err(audio_err)?;
    }
    writer.finalize().map_err(audio_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_lossless_on_pcm_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let mut wav = Waveform::at_pipeline_rate(
            (0..1000).map(|i| ((i as f64) * 0.01).sin() * 0.7).collect(),
        );
        wav.quantize_pcm16();
        write_wav(&path, &wav).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back, wav);
    }

    #[test]
    fn rejects_wrong_rate_and_channels() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&stereo), Err(Error::Audio { .. })));

        let rate = dir.path().join("rate.wav");
        write_wav(&rate, &Waveform::new(vec![0.0; 10], 8000)).unwrap();
        let err = read_wav(&rate).unwrap_err();
        assert!(err.to_string().contains("8000"));
    }
}
