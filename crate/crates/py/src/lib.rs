//! Python bindings for the biscaling pipeline.
//!
//! The module exposes the synthetic generators, the logscale-diagram
//! computation, scaling fits, frontier detection, and the full analyzer.
//! Scalar results come back as dicts; the full analysis report comes back
//! as its canonical JSON string so every field round-trips exactly as the
//! CLI writes it (`json.loads` gives the same structure).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use biscale_core::analyze::{run_analyze, AnalysisConfig, AnalysisInput};
use biscale_core::estimate::{bootstrap_ci, find_frontier, fit_scaling, BootstrapSource};
use biscale_core::leaders::{compute_leaders, cumulants, leader_structure_fn};
use biscale_core::wavelet::{dwt, structure_fn};
use biscale_core::{LdKind, LogscaleDiagram, ScalingEstimate, Wavelet};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kind_of(kind: &str, q: f64) -> PyResult<LdKind> {
    Ok(match kind {
        "sd" => LdKind::Log2Sd,
        "c1" => LdKind::C1,
        "c2" => LdKind::C2,
        "c3" => LdKind::C3,
        "sl" => LdKind::Log2Sl(q),
        other => {
            return Err(PyValueError::new_err(format!(
                "kind {other:?}: expected sd, c1, c2, c3, or sl"
            )))
        }
    })
}

fn diagram(
    values: &[f64],
    delta0: f64,
    kind: LdKind,
    moments: u32,
    gamma: f64,
    n_min: usize,
) -> PyResult<LogscaleDiagram> {
    let w = Wavelet::daubechies(moments).map_err(err)?;
    let pyr = dwt(values, delta0, w, n_min).map_err(err)?;
    Ok(match kind {
        LdKind::Log2Sd => structure_fn(&pyr),
        LdKind::Log2Sl(q) => {
            leader_structure_fn(&compute_leaders(&pyr, gamma).map_err(err)?, q).map_err(err)?
        }
        c => {
            let order = c.cumulant_order().unwrap();
            let lp = compute_leaders(&pyr, gamma).map_err(err)?;
            cumulants(&lp, order)
                .pop()
                .ok_or_else(|| PyValueError::new_err("no octave had enough leaders"))?
        }
    })
}

fn ld_to_dict<'py>(py: Python<'py>, ld: &LogscaleDiagram) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", serde_json::to_value(ld.kind).unwrap().as_str().map(str::to_owned)
        .unwrap_or_else(|| "log2_SL".to_string()))?;
    d.set_item("delta0", ld.delta0)?;
    d.set_item("j", PyList::new(py, ld.octaves.iter().map(|o| o.j))?)?;
    d.set_item("value", PyList::new(py, ld.octaves.iter().map(|o| o.value))?)?;
    d.set_item("variance", PyList::new(py, ld.octaves.iter().map(|o| o.variance))?)?;
    d.set_item("n", PyList::new(py, ld.octaves.iter().map(|o| o.n_j))?)?;
    Ok(d)
}

fn est_to_dict<'py>(py: Python<'py>, e: &ScalingEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", e.value)?;
    d.set_item("ci_low", e.ci_low)?;
    d.set_item("ci_high", e.ci_high)?;
    d.set_item("slope", e.slope)?;
    d.set_item("slope_se", e.slope_se)?;
    d.set_item("intercept", e.intercept)?;
    d.set_item("gof_p", e.gof_p)?;
    d.set_item("j1", e.j1)?;
    d.set_item("j2", e.j2)?;
    Ok(d)
}

/// Fractional Gaussian noise with Hurst exponent `h`.
#[pyfunction]
#[pyo3(signature = (h, n, seed=1))]
fn gen_fgn(h: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    biscale_core::synth::gen_fgn(h, n, seed).map_err(err)
}

/// Log-normal multiplicative cascade with cumulants (c1, c2), 2^depth samples.
#[pyfunction]
#[pyo3(signature = (c1, c2, depth, seed=1))]
fn gen_cascade(c1: f64, c2: f64, depth: u32, seed: u64) -> PyResult<Vec<f64>> {
    biscale_core::synth::gen_cascade(c1, c2, depth, seed).map_err(err)
}

/// Superposed Pareto On/Off sources, binned counts.
#[pyfunction]
#[pyo3(signature = (alpha, n_sources, mean_on, mean_off, rate_on, duration, delta0, seed=1))]
#[allow(clippy::too_many_arguments)]
fn gen_onoff(
    alpha: f64,
    n_sources: u32,
    mean_on: f64,
    mean_off: f64,
    rate_on: f64,
    duration: f64,
    delta0: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let (series, _) = biscale_core::synth::gen_onoff(
        alpha, n_sources, mean_on, mean_off, rate_on, duration, delta0, seed,
    )
    .map_err(err)?;
    Ok(series.samples())
}

/// One logscale diagram from a sample series.
///
/// `kind` is one of "sd", "c1", "c2", "c3", "sl"; `q` applies to "sl".
#[pyfunction]
#[pyo3(signature = (values, delta0, kind="sd", q=2.0, moments=3, gamma=1.0, n_min=8))]
#[allow(clippy::too_many_arguments)]
fn logscale_diagram<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    delta0: f64,
    kind: &str,
    q: f64,
    moments: u32,
    gamma: f64,
    n_min: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let ld = diagram(&values, delta0, kind_of(kind, q)?, moments, gamma, n_min)?;
    ld_to_dict(py, &ld)
}

/// Weighted fit of a diagram kind over octaves j1..j2.
///
/// With `bootstrap` > 0 the confidence interval comes from circular block
/// bootstrap resampling of the coefficients (or leaders), seeded and
/// deterministic; otherwise it is the analytic WLS interval. The returned
/// `value` is the mapped parameter: H for "sd", c_p for cumulants,
/// zeta(q) for "sl".
#[pyfunction]
#[pyo3(signature = (values, delta0, j1, j2, kind="sd", q=2.0, moments=3, gamma=1.0, n_min=8, bootstrap=0, seed=1))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    delta0: f64,
    j1: u32,
    j2: u32,
    kind: &str,
    q: f64,
    moments: u32,
    gamma: f64,
    n_min: usize,
    bootstrap: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let k = kind_of(kind, q)?;
    let est = if bootstrap > 0 {
        let w = Wavelet::daubechies(moments).map_err(err)?;
        let pyr = dwt(&values, delta0, w, n_min).map_err(err)?;
        match k {
            LdKind::Log2Sd => {
                bootstrap_ci(BootstrapSource::Coeffs(&pyr), k, j1, j2, bootstrap, seed)
                    .map_err(err)?
            }
            _ => {
                let lp = compute_leaders(&pyr, gamma).map_err(err)?;
                bootstrap_ci(BootstrapSource::Leaders(&lp), k, j1, j2, bootstrap, seed)
                    .map_err(err)?
            }
        }
    } else {
        let ld = diagram(&values, delta0, k, moments, gamma, n_min)?;
        fit_scaling(&ld, j1, j2).map_err(err)?
    };
    est_to_dict(py, &est)
}

/// Locate the fine/coarse scaling frontier of a diagram kind.
///
/// Returns a dict with "verdict" ("biscaling" or "monoscaling") and, when
/// biscaling, the interpolated octave "j_f" and time scale "delta_f".
#[pyfunction]
#[pyo3(signature = (values, delta0, fs, cs, kind="sd", q=2.0, moments=3, gamma=1.0, n_min=8, slope_gate=2.576))]
#[allow(clippy::too_many_arguments)]
fn frontier<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    delta0: f64,
    fs: (u32, u32),
    cs: (u32, u32),
    kind: &str,
    q: f64,
    moments: u32,
    gamma: f64,
    n_min: usize,
    slope_gate: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let ld = diagram(&values, delta0, kind_of(kind, q)?, moments, gamma, n_min)?;
    let outcome = find_frontier(&ld, fs, cs, slope_gate).map_err(err)?;
    let d = PyDict::new(py);
    match &outcome {
        biscale_core::FrontierOutcome::Biscaling { j_f, delta_f, fs_fit, cs_fit } => {
            d.set_item("verdict", "biscaling")?;
            d.set_item("j_f", *j_f)?;
            d.set_item("delta_f", *delta_f)?;
            d.set_item("fs_fit", est_to_dict(py, fs_fit)?)?;
            d.set_item("cs_fit", est_to_dict(py, cs_fit)?)?;
        }
        biscale_core::FrontierOutcome::Monoscaling { fs_fit, cs_fit } => {
            d.set_item("verdict", "monoscaling")?;
            d.set_item("fs_fit", est_to_dict(py, fs_fit)?)?;
            d.set_item("cs_fit", est_to_dict(py, cs_fit)?)?;
        }
    }
    Ok(d)
}

/// Run the full pipeline on a sample series and return the report JSON.
///
/// `config_json` takes the same fields as the CLI's TOML config, as a JSON
/// object (missing fields keep the built-in defaults). The result string
/// is the canonical report; parse it with `json.loads`.
#[pyfunction]
#[pyo3(signature = (values, delta0, config_json=None))]
fn analyze(values: Vec<f64>, delta0: f64, config_json: Option<&str>) -> PyResult<String> {
    let mut cfg: AnalysisConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(err)?,
        None => AnalysisConfig::default(),
    };
    cfg.delta0 = delta0;
    // Timestamps would make repeat calls differ byte for byte.
    cfg.timestamps = false;
    let report = run_analyze(AnalysisInput::Samples { delta0, values }, &cfg).map_err(err)?;
    serde_json::to_string_pretty(&report).map_err(err)
}

#[pymodule]
fn biscale_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(gen_fgn, m)?)?;
    m.add_function(wrap_pyfunction!(gen_cascade, m)?)?;
    m.add_function(wrap_pyfunction!(gen_onoff, m)?)?;
    m.add_function(wrap_pyfunction!(logscale_diagram, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(frontier, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
