//! Python bindings: EER and fusion, span metrics, losses, codecs, feature
//! extraction, and a `Detector` that scores WAV files with a trained checkpoint.

use fakespan::augment::{codec, CompandingLaw};
use fakespan::corpus::UtteranceRecord;
use fakespan::eval::{eer_from_scores, fuse_scores, span_iou, Fusion};
use fakespan::features::{compute_features, FeatureConfig, FeatureKind};
use fakespan::model::{af_loss, decode_span, qa_loss, Checkpoint, Mode, Model};
use fakespan::span::SpanTarget;
use fakespan::train::{id_stream, Preparer};
use fakespan::{Error, Waveform};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numerical(m) => PyArithmeticError::new_err(m),
        e @ (Error::Io(_) | Error::Audio { .. }) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Equal error rate and its threshold; higher scores mean more genuine.
#[pyfunction]
fn compute_eer(real: Vec<f64>, fake: Vec<f64>) -> PyResult<(f64, f64)> {
    eer_from_scores(&real, &fake).map_err(to_py)
}

/// Fuse score lists over the same ids with "avg", "wavg", "min" or "max".
#[pyfunction]
#[pyo3(signature = (sets, method="avg", weights=None))]
fn fuse(sets: Vec<Vec<(String, f64)>>, method: &str, weights: Option<Vec<f64>>) -> PyResult<Vec<(String, f64)>> {
    let m = Fusion::parse(method, weights.as_deref()).map_err(to_py)?;
    fuse_scores(&sets, &m).map_err(to_py)
}

/// IoU of two inclusive frame intervals `(start, end)`.
#[pyfunction]
fn span_overlap(pred: (usize, usize), truth: (usize, usize)) -> PyResult<f64> {
    let t = |(start, end): (usize, usize)| {
        if start > end {
            Err(PyValueError::new_err(format!("interval ({start}, {end}) is inverted")))
        } else {
            Ok(SpanTarget { start, end })
        }
    };
    Ok(span_iou(t(pred)?, t(truth)?))
}

/// Span loss for `T x 2` start/end logits and the true frames.
#[pyfunction]
fn span_loss(logits: Vec<[f64; 2]>, start: usize, end: usize) -> PyResult<f64> {
    let flat: Vec<f64> = logits.into_iter().flatten().collect();
    qa_loss(&flat, SpanTarget { start, end }).map_err(to_py)
}

/// Anti-spoofing loss for fake/real logits; `real` selects the class.
#[pyfunction]
fn class_loss(logits: [f64; 2], real: bool) -> f64 {
    af_loss(logits, usize::from(real))
}

fn law(name: &str) -> PyResult<CompandingLaw> {
    match name.to_ascii_lowercase().as_str() {
        "mu" | "mulaw" | "mu-law" => Ok(CompandingLaw::MuLaw),
        "a" | "alaw" | "a-law" => Ok(CompandingLaw::ALaw),
        other => Err(PyValueError::new_err(format!("unknown companding law {other:?}"))),
    }
}

/// 8-bit companding round trip with the "mu" or "a" law.
#[pyfunction]
#[pyo3(signature = (samples, law_name="mu"))]
fn codec_roundtrip(samples: Vec<f64>, law_name: &str) -> PyResult<Vec<f64>> {
    Ok(codec(&Waveform::at_pipeline_rate(samples), law(law_name)?).samples)
}

fn feature_config(kind: &str, n_fft: usize) -> PyResult<FeatureConfig> {
    let cfg = match kind.to_ascii_lowercase().as_str() {
        "mstft" => FeatureConfig::mstft(n_fft),
        "mfcc" => FeatureConfig { n_fft, ..FeatureConfig::mfcc() },
        "lfcc" => FeatureConfig { n_fft, ..FeatureConfig::lfcc() },
        other => return Err(PyValueError::new_err(format!("unknown feature kind {other:?}"))),
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Frame-major feature matrix (frames x 80) of 16 kHz samples.
#[pyfunction]
#[pyo3(signature = (samples, kind="mstft", n_fft=384))]
fn features(samples: Vec<f64>, kind: &str, n_fft: usize) -> PyResult<Vec<Vec<f64>>> {
    let cfg = feature_config(kind, n_fft)?;
    let m = compute_features(&Waveform::at_pipeline_rate(samples), &cfg).map_err(to_py)?;
    Ok((0..m.frames).map(|t| m.row(t).to_vec()).collect())
}

/// A trained checkpoint ready to score WAV files.
#[pyclass(frozen)]
struct Detector {
    model: Model,
    prep: Preparer,
}

#[pymethods]
impl Detector {
    #[new]
    fn new(checkpoint: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(checkpoint).map_err(to_py)?;
        let feature = ckpt.meta.feature.unwrap_or_default();
        let prep = Preparer::new(feature, None, ckpt.model.config().frames, 0).map_err(to_py)?;
        Ok(Self { model: ckpt.model, prep })
    }

    #[getter]
    fn frames(&self) -> usize {
        self.model.config().frames
    }

    /// `(score, start_frame, end_frame)`: genuineness in [0, 1] and the predicted
    /// fake span. Long files are cropped the same way as in batch scoring.
    fn score_wav(&self, py: Python<'_>, path: &str) -> PyResult<(f64, usize, usize)> {
        py.detach(|| {
            let rec = UtteranceRecord::real(path, path);
            let ex = self.prep.example(&rec, id_stream(path))?;
            let out = self.model.forward(&[&ex.features], Mode::Eval)?;
            let span = decode_span(&out[0].a);
            Ok((out[0].score(), span.start, span.end))
        })
        .map_err(to_py)
    }
}

#[pymodule]
pub fn fakespan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(compute_eer, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(span_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(span_loss, m)?)?;
    m.add_function(wrap_pyfunction!(class_loss, m)?)?;
    m.add_function(wrap_pyfunction!(codec_roundtrip, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_class::<Detector>()?;
    m.add("FEATURE_KINDS", [FeatureKind::Mstft, FeatureKind::Mfcc, FeatureKind::Lfcc].map(|k| format!("{k:?}").to_lowercase()).to_vec())?;
    Ok(())
}
