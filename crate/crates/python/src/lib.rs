//! Python bindings for the rectifier model, the modem and the link-level
//! experiments.

use std::sync::OnceLock;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::rectenna::detection::{self, TableCache};
use ::rectenna::experiments::{self, BerScenario, Detector};
use ::rectenna::modem;
use ::rectenna::rectifier::{self, Drive, TransientOptions};

fn err(e: ::rectenna::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(TableCache::new)
}

#[pyclass(name = "CircuitParams", module = "rectenna", from_py_object)]
#[derive(Clone, Copy)]
struct PyCircuitParams {
    inner: rectifier::CircuitParams,
}

#[pymethods]
impl PyCircuitParams {
    #[new]
    #[pyo3(signature = (
        *,
        capacitance = 10e-9,
        source_resistance = 50.0,
        on_resistance = 5.0,
        off_resistance = 10e6,
        load_resistance = 1e3,
        diode_threshold = 0.25,
        carrier_frequency = 800e6,
    ))]
    fn new(
        capacitance: f64,
        source_resistance: f64,
        on_resistance: f64,
        off_resistance: f64,
        load_resistance: f64,
        diode_threshold: f64,
        carrier_frequency: f64,
    ) -> PyResult<Self> {
        let inner = rectifier::CircuitParams {
            capacitance,
            source_resistance,
            on_resistance,
            off_resistance,
            load_resistance,
            diode_threshold,
            carrier_frequency,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn capacitance(&self) -> f64 {
        self.inner.capacitance
    }
    #[getter]
    fn source_resistance(&self) -> f64 {
        self.inner.source_resistance
    }
    #[getter]
    fn on_resistance(&self) -> f64 {
        self.inner.on_resistance
    }
    #[getter]
    fn off_resistance(&self) -> f64 {
        self.inner.off_resistance
    }
    #[getter]
    fn load_resistance(&self) -> f64 {
        self.inner.load_resistance
    }
    #[getter]
    fn diode_threshold(&self) -> f64 {
        self.inner.diode_threshold
    }
    #[getter]
    fn carrier_frequency(&self) -> f64 {
        self.inner.carrier_frequency
    }

    /// Copy with a different load; `None` means an open circuit.
    #[pyo3(signature = (ohms=None))]
    fn with_load(&self, ohms: Option<f64>) -> PyResult<Self> {
        let inner = match ohms {
            Some(r) => self.inner.with_load(r),
            None => self.inner.open_circuit(),
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn carrier_period(&self) -> f64 {
        self.inner.carrier_period()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "CircuitParams(capacitance={:e}, source_resistance={}, on_resistance={}, off_resistance={:e}, load_resistance={}, diode_threshold={}, carrier_frequency={:e})",
            p.capacitance, p.source_resistance, p.on_resistance, p.off_resistance,
            p.load_resistance, p.diode_threshold, p.carrier_frequency
        )
    }
}

#[pyclass(name = "Trajectory", module = "rectenna", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    voltages: Vec<f64>,
    #[pyo3(get)]
    diode_on: Vec<bool>,
    #[pyo3(get)]
    switch_times: Vec<f64>,
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.times.len()
    }
}

impl From<rectifier::Trajectory> for PyTrajectory {
    fn from(t: rectifier::Trajectory) -> Self {
        Self {
            diode_on: t.diode_states.iter().map(|s| s.is_on()).collect(),
            switch_times: t.switch_events.iter().map(|e| e.time).collect(),
            times: t.sample_times,
            voltages: t.output_voltage,
        }
    }
}

#[pyclass(name = "Constellation", module = "rectenna", frozen, from_py_object)]
#[derive(Clone)]
struct PyConstellation {
    inner: modem::Constellation,
}

#[pymethods]
impl PyConstellation {
    #[new]
    fn new(amplitudes: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: modem::Constellation::new(amplitudes).map_err(err)?,
        })
    }

    #[getter]
    fn amplitudes(&self) -> Vec<f64> {
        self.inner.amplitudes().to_vec()
    }
    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }
    #[getter]
    fn bits_per_symbol(&self) -> usize {
        self.inner.bits_per_symbol()
    }
    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    /// Gray label of each amplitude index.
    fn labels(&self) -> Vec<usize> {
        (0..self.inner.order()).map(|i| self.inner.label(i)).collect()
    }

    fn average_power(&self) -> f64 {
        modem::average_symbol_power(&self.inner)
    }

    fn modulate(&self, bits: Vec<u8>) -> PyResult<Vec<f64>> {
        modem::modulate(&bits, &self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Constellation({:?})", self.inner.amplitudes())
    }
}

#[pyclass(name = "SequenceTable", module = "rectenna", frozen)]
struct PySequenceTable {
    inner: detection::SequenceOutputTable,
}

#[pymethods]
impl PySequenceTable {
    /// Sampled outputs of every window-length symbol sequence from an empty
    /// capacitor.
    #[staticmethod]
    #[pyo3(signature = (params, constellation, symbol_period, window, initial_voltage=0.0))]
    fn build(
        py: Python<'_>,
        params: PyCircuitParams,
        constellation: PyConstellation,
        symbol_period: f64,
        window: usize,
        initial_voltage: f64,
    ) -> PyResult<Self> {
        let inner = py
            .detach(|| {
                detection::build_sequence_table(
                    &params.inner,
                    &constellation.inner,
                    symbol_period,
                    window,
                    initial_voltage,
                )
            })
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_outputs(order: usize, window: usize, symbol_period: f64, outputs: Vec<f64>) -> PyResult<Self> {
        let inner = detection::SequenceOutputTable::from_outputs(order, window, symbol_period, outputs)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }
    #[getter]
    fn window(&self) -> usize {
        self.inner.window()
    }

    fn entry(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!("index {index} out of range")));
        }
        Ok(self.inner.entry(index).to_vec())
    }

    fn symbols_of(&self, index: usize) -> Vec<usize> {
        self.inner.symbols_of(index)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn refined(on: bool) -> TransientOptions {
    if on {
        TransientOptions::refined()
    } else {
        TransientOptions::default()
    }
}

/// Capacitor voltage under a constant-amplitude carrier.
#[pyfunction]
#[pyo3(signature = (params, amplitude, duration, *, refined_switching=false, initial_voltage=0.0, samples_per_period=100))]
fn simulate_transient(
    py: Python<'_>,
    params: PyCircuitParams,
    amplitude: f64,
    duration: f64,
    refined_switching: bool,
    initial_voltage: f64,
    samples_per_period: usize,
) -> PyResult<PyTrajectory> {
    let drive = Drive::constant(amplitude, duration).map_err(err)?;
    let opts = refined(refined_switching)
        .with_initial_voltage(initial_voltage)
        .with_samples_per_period(samples_per_period);
    py.detach(|| rectifier::simulate_transient(&params.inner, &drive, &opts))
        .map(Into::into)
        .map_err(err)
}

/// Capacitor voltage under a sequence of symbol amplitudes.
#[pyfunction]
#[pyo3(signature = (params, amplitudes, symbol_period, *, refined_switching=false))]
fn simulate_symbols(
    py: Python<'_>,
    params: PyCircuitParams,
    amplitudes: Vec<f64>,
    symbol_period: f64,
    refined_switching: bool,
) -> PyResult<PyTrajectory> {
    let drive = Drive::symbols(&amplitudes, symbol_period).map_err(err)?;
    let opts = refined(refined_switching);
    py.detach(|| rectifier::simulate_transient(&params.inner, &drive, &opts))
        .map(Into::into)
        .map_err(err)
}

/// Fixed-step reference integration of the same circuit.
#[pyfunction]
#[pyo3(signature = (params, amplitude, duration, steps_per_period=200.0))]
fn simulate_oracle(
    py: Python<'_>,
    params: PyCircuitParams,
    amplitude: f64,
    duration: f64,
    steps_per_period: f64,
) -> PyResult<PyTrajectory> {
    let drive = Drive::constant(amplitude, duration).map_err(err)?;
    let step = params.inner.carrier_period() / steps_per_period;
    py.detach(|| rectifier::simulate_transient_oracle(&params.inner, &drive, step, 0.0))
        .map(Into::into)
        .map_err(err)
}

/// `(level, settle_time)` for a constant amplitude.
#[pyfunction]
#[pyo3(signature = (params, amplitude, tolerance=1e-3))]
fn steady_state_output(
    py: Python<'_>,
    params: PyCircuitParams,
    amplitude: f64,
    tolerance: f64,
) -> PyResult<(f64, f64)> {
    let s = py
        .detach(|| rectifier::steady_state_output(&params.inner, amplitude, tolerance))
        .map_err(err)?;
    Ok((s.level, s.settle_time))
}

#[pyfunction]
#[pyo3(signature = (order, min_amplitude=0.5, average_power=5.0 / 16.0))]
fn build_constellation(order: usize, min_amplitude: f64, average_power: f64) -> PyResult<PyConstellation> {
    Ok(PyConstellation {
        inner: modem::build_constellation(order, min_amplitude, average_power).map_err(err)?,
    })
}

#[pyfunction]
fn noise_sigma(average_power: f64, eb_n0_db: f64, bits_per_symbol: usize) -> f64 {
    modem::noise_sigma(average_power, modem::db_to_linear(eb_n0_db), bits_per_symbol)
}

#[pyfunction]
fn q_function(x: f64) -> f64 {
    detection::q_function(x)
}

/// Nearest-reference decision per sample.
#[pyfunction]
fn ml_detect(y: Vec<f64>, references: Vec<f64>) -> Vec<usize> {
    detection::ml_detect(&y, &references).symbols
}

/// Minimum-distance sequence decision over one window.
#[pyfunction]
fn mlsd_detect(y: Vec<f64>, table: &PySequenceTable) -> PyResult<Vec<usize>> {
    Ok(detection::mlsd_detect(&y, &table.inner).map_err(err)?.symbols)
}

fn detector(name: &str) -> PyResult<Detector> {
    Detector::parse(name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown detector {name:?}, expected ml_steady, ml_bounded or mlsd"
        ))
    })
}

/// Monte-Carlo BER curve. Returns one dict per Eb/N0 point.
#[pyfunction]
#[pyo3(signature = (
    params, constellation, detector_name, symbol_period, *,
    block_length=6, window=6, eb_n0_db=None, target_bits=1_000_000, seed=1,
))]
#[allow(clippy::too_many_arguments)]
fn ber_curve<'py>(
    py: Python<'py>,
    params: PyCircuitParams,
    constellation: PyConstellation,
    detector_name: &str,
    symbol_period: f64,
    block_length: usize,
    window: usize,
    eb_n0_db: Option<Vec<f64>>,
    target_bits: u64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut s = BerScenario::new(params.inner, constellation.inner, detector(detector_name)?, symbol_period);
    s.block_length = block_length;
    s.window = window;
    s.target_bits = target_bits;
    s.seed = seed;
    if let Some(grid) = eb_n0_db {
        s.eb_n0_db = grid;
    }
    let results = py.detach(|| experiments::ber_curve(&s, cache())).map_err(err)?;
    results
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("eb_n0_db", r.eb_n0_db)?;
            d.set_item("detector", r.detector.name())?;
            d.set_item("modulation", r.modulation)?;
            d.set_item("symbol_period", r.symbol_period)?;
            d.set_item("window", r.window)?;
            d.set_item("block_length", r.block_length)?;
            d.set_item("bit_errors", r.bit_errors)?;
            d.set_item("bits_simulated", r.bits_simulated)?;
            d.set_item("ber", r.ber)?;
            d.set_item("ci95_halfwidth", r.ci95_halfwidth)?;
            d.set_item("theory", r.theory)?;
            d.set_item("theory_kind", r.theory_kind.map(|k| k.name()))?;
            Ok(d)
        })
        .collect()
}

/// Average harvested load power per symbol period.
#[pyfunction]
#[pyo3(signature = (params, constellation, symbol_periods, *, block_length=6, num_blocks=100_000, seed=1))]
fn eh_sweep<'py>(
    py: Python<'py>,
    params: PyCircuitParams,
    constellation: PyConstellation,
    symbol_periods: Vec<f64>,
    block_length: usize,
    num_blocks: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let results = py
        .detach(|| {
            experiments::eh_sweep(
                &params.inner,
                &constellation.inner,
                &symbol_periods,
                block_length,
                num_blocks,
                seed,
                cache(),
            )
        })
        .map_err(err)?;
    results
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("symbol_period", r.symbol_period)?;
            d.set_item("block_length", r.block_length)?;
            d.set_item("avg_sequence_power", r.avg_sequence_power)?;
            d.set_item("std_error", r.std_error)?;
            d.set_item("sequences_averaged", r.sequences_averaged)?;
            Ok(d)
        })
        .collect()
}

#[pymodule(name = "rectenna")]
fn rectenna_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCircuitParams>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyConstellation>()?;
    m.add_class::<PySequenceTable>()?;
    m.add("OPEN_CIRCUIT_LOAD", rectifier::OPEN_CIRCUIT_LOAD)?;
    m.add_function(wrap_pyfunction!(simulate_transient, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_symbols, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_output, m)?)?;
    m.add_function(wrap_pyfunction!(build_constellation, m)?)?;
    m.add_function(wrap_pyfunction!(noise_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(ml_detect, m)?)?;
    m.add_function(wrap_pyfunction!(mlsd_detect, m)?)?;
    m.add_function(wrap_pyfunction!(ber_curve, m)?)?;
    m.add_function(wrap_pyfunction!(eh_sweep, m)?)?;
    Ok(())
}
