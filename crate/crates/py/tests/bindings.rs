use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module(f: impl FnOnce(&Bound<'_, PyModule>) -> PyResult<()>) {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(fakespan_py::fakespan_py)(py);
        f(m.bind(py).cast::<PyModule>().unwrap()).unwrap();
    });
}

#[test]
fn eer_and_fusion() {
    with_module(|m| {
        let (eer, thr): (f64, f64) = m.getattr("compute_eer")?.call1((vec![0.9, 0.8], vec![0.1, 0.2]))?.extract()?;
        assert_eq!(eer, 0.0);
        assert!(thr > 0.2 && thr <= 0.8);
        let a = vec![("x".to_string(), 0.2), ("y".to_string(), 0.9)];
        let b = vec![("y".to_string(), 0.1), ("x".to_string(), 0.6)];
        let fused: Vec<(String, f64)> = m.getattr("fuse")?.call1((vec![a.clone(), b], "wavg", vec![1.0, 0.0]))?.extract()?;
        assert_eq!(fused, a);
        Ok(())
    });
}

#[test]
fn losses_and_errors() {
    with_module(|m| {
        let zeros = vec![[0.0f64, 0.0]; 501];
        let l: f64 = m.getattr("span_loss")?.call1((zeros, 0usize, 500usize))?.extract()?;
        assert!((l - 2.0 * 501f64.ln()).abs() < 1e-9);
        let err = m.getattr("span_loss")?.call1((vec![[0.0f64, 0.0]; 4], 0usize, 9usize)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(m.py()));
        let err = m.getattr("Detector")?.call1(("/no/such.ckpt",)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyIOError>(m.py()));
        Ok(())
    });
}

#[test]
fn features_shape() {
    with_module(|m| {
        let x: Vec<f64> = (0..12800).map(|n| (n as f64 * 0.05).sin()).collect();
        let f: Vec<Vec<f64>> = m.getattr("features")?.call1((x, "lfcc"))?.extract()?;
        assert_eq!((f.len(), f[0].len()), (101, 80));
        Ok(())
    });
}
