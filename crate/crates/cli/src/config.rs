//! TOML run configuration.
//!
//! Every section is optional and falls back to the reference circuit and
//! the BASK link. Unknown keys are rejected. Semantic errors carry the line
//! of the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use rectenna::detection::DEFAULT_TABLE_BUDGET;
use rectenna::experiments::{default_eb_n0_grid, Detector};
use rectenna::modem::{build_constellation, Constellation};
use rectenna::rectifier::{CircuitParams, OPEN_CIRCUIT_LOAD};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}:{line}: {key}: {message}")]
    Invalid {
        path: String,
        line: usize,
        key: String,
        message: String,
    },
    #[error("{path}: cannot read: {message}")]
    Io { path: String, message: String },
}

/// A load resistance or the literal `"open"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Load {
    Ohms(f64),
    Named(NamedLoad),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedLoad {
    Open,
}

impl Load {
    pub fn ohms(self) -> f64 {
        match self {
            Load::Ohms(r) => r,
            Load::Named(NamedLoad::Open) => OPEN_CIRCUIT_LOAD,
        }
    }
}

impl fmt::Display for Load {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Load::Ohms(r) => write!(f, "{r}"),
            Load::Named(NamedLoad::Open) => f.write_str("open"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub carrier_frequency_hz: f64,
    pub capacitance_f: f64,
    pub source_resistance_ohm: f64,
    pub on_resistance_ohm: f64,
    pub off_resistance_ohm: f64,
    pub diode_threshold_v: f64,
    pub load_ohm: Load,
}

impl Default for CircuitSection {
    fn default() -> Self {
        let p = CircuitParams::default();
        Self {
            carrier_frequency_hz: p.carrier_frequency,
            capacitance_f: p.capacitance,
            source_resistance_ohm: p.source_resistance,
            on_resistance_ohm: p.on_resistance,
            off_resistance_ohm: p.off_resistance,
            diode_threshold_v: p.diode_threshold,
            load_ohm: Load::Ohms(p.load_resistance),
        }
    }
}

impl CircuitSection {
    pub fn params(&self) -> CircuitParams {
        self.params_with_load(self.load_ohm)
    }

    pub fn params_with_load(&self, load: Load) -> CircuitParams {
        CircuitParams {
            capacitance: self.capacitance_f,
            source_resistance: self.source_resistance_ohm,
            on_resistance: self.on_resistance_ohm,
            off_resistance: self.off_resistance_ohm,
            load_resistance: load.ohms(),
            diode_threshold: self.diode_threshold_v,
            carrier_frequency: self.carrier_frequency_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationSection {
    /// Constellation orders to run, e.g. `[2, 4]`.
    pub orders: Vec<usize>,
    pub min_amplitude_v: f64,
    pub average_power: f64,
}

impl Default for ModulationSection {
    fn default() -> Self {
        Self {
            orders: vec![2],
            min_amplitude_v: 0.5,
            average_power: 5.0 / 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Localization {
    Grid,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransientSection {
    pub amplitude_v: f64,
    pub duration_s: f64,
    pub loads: Vec<Load>,
    pub samples_per_period: usize,
    pub switch_localization: Localization,
    /// Keep every n-th sample in the CSV.
    pub output_stride: usize,
    /// Add an RK4 column next to the closed form.
    pub oracle: bool,
    pub oracle_steps_per_period: f64,
    /// Also report steady level and settle time per load.
    pub steady_state: bool,
    pub steady_tolerance: f64,
}

impl Default for TransientSection {
    fn default() -> Self {
        Self {
            amplitude_v: 1.0,
            duration_s: 20e-6,
            loads: vec![Load::Ohms(1e3), Load::Named(NamedLoad::Open)],
            samples_per_period: 100,
            switch_localization: Localization::Grid,
            output_stride: 100,
            oracle: false,
            oracle_steps_per_period: 200.0,
            steady_state: true,
            steady_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub symbol_periods_s: Vec<f64>,
    pub block_length: usize,
    /// MLSD window sizes K; each must divide the block length.
    pub windows: Vec<usize>,
    pub detectors: Vec<String>,
    pub eb_n0_db: Vec<f64>,
    pub target_bits: u64,
    pub steady_tolerance: f64,
    pub table_budget: usize,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            symbol_periods_s: vec![6.25e-6, 12.5e-6, 18.75e-6],
            block_length: 6,
            windows: vec![6],
            detectors: vec!["ml_bounded".into(), "mlsd".into()],
            eb_n0_db: default_eb_n0_grid(),
            target_bits: 1_000_000,
            steady_tolerance: 1e-3,
            table_budget: DEFAULT_TABLE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EhSection {
    pub num_blocks: usize,
}

impl Default for EhSection {
    fn default() -> Self {
        Self {
            num_blocks: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub amplitudes_v: Vec<f64>,
    pub duration_s: f64,
    pub oracle_steps_per_period: f64,
    /// Allowed deviation as a fraction of the drive amplitude.
    pub relative_tolerance: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            amplitudes_v: vec![1.0, 0.5, 0.0],
            duration_s: 20e-6,
            oracle_steps_per_period: 200.0,
            relative_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub emit_plots: bool,
    pub circuit: CircuitSection,
    pub modulation: ModulationSection,
    pub transient: TransientSection,
    pub link: LinkSection,
    pub eh: EhSection,
    pub verify: VerifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            emit_plots: false,
            circuit: CircuitSection::default(),
            modulation: ModulationSection::default(),
            transient: TransientSection::default(),
            link: LinkSection::default(),
            eh: EhSection::default(),
            verify: VerifySection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&src, &path.display().to_string())
    }

    /// Parses and validates `src`; `origin` names the source in errors.
    pub fn parse(src: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate(src, origin)?;
        Ok(cfg)
    }

    pub fn detectors(&self) -> Vec<Detector> {
        self.link
            .detectors
            .iter()
            .filter_map(|d| Detector::parse(d))
            .collect()
    }

    /// Constellations for every configured order.
    pub fn constellations(&self) -> Vec<Constellation> {
        self.modulation
            .orders
            .iter()
            .map(|&m| {
                build_constellation(m, self.modulation.min_amplitude_v, self.modulation.average_power)
                    .expect("validated at load time")
            })
            .collect()
    }

    fn validate(&self, src: &str, origin: &str) -> Result<(), ConfigError> {
        let fail = |section: &str, key: &str, message: String| ConfigError::Invalid {
            path: origin.to_string(),
            line: key_line(src, section, key),
            key: if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            },
            message,
        };

        let params = self.circuit.params();
        if let Err(e) = params.validate() {
            let key = circuit_key(&e);
            return Err(fail("circuit", key, e.to_string()));
        }
        for &load in &self.transient.loads {
            check_positive(load.ohms(), || {
                fail("transient", "loads", format!("load {load} must be positive"))
            })?;
        }

        let m = &self.modulation;
        if m.orders.is_empty() {
            return Err(fail("modulation", "orders", "at least one order is required".into()));
        }
        for &order in &m.orders {
            let c = build_constellation(order, m.min_amplitude_v, m.average_power)
                .map_err(|e| fail("modulation", "orders", format!("order {order}: {e}")))?;
            c.check_conducting(&params)
                .map_err(|e| fail("modulation", "min_amplitude_v", e.to_string()))?;
        }

        let t = &self.transient;
        if !t.amplitude_v.is_finite() || t.amplitude_v < 0.0 {
            return Err(fail("transient", "amplitude_v", "must be finite and ≥ 0".into()));
        }
        check_positive(t.duration_s, || fail("transient", "duration_s", "must be positive".into()))?;
        if t.samples_per_period == 0 {
            return Err(fail("transient", "samples_per_period", "must be at least 1".into()));
        }
        if t.output_stride == 0 {
            return Err(fail("transient", "output_stride", "must be at least 1".into()));
        }
        if t.oracle && t.oracle_steps_per_period < 200.0 {
            return Err(fail(
                "transient",
                "oracle_steps_per_period",
                "must be at least 200".into(),
            ));
        }
        check_unit_interval(t.steady_tolerance, || {
            fail("transient", "steady_tolerance", "must lie in (0, 1)".into())
        })?;

        let l = &self.link;
        for &ts in &l.symbol_periods_s {
            check_positive(ts, || {
                fail("link", "symbol_periods_s", format!("{ts} must be positive"))
            })?;
        }
        if l.block_length == 0 {
            return Err(fail("link", "block_length", "must be at least 1".into()));
        }
        for &k in &l.windows {
            if k == 0 || !l.block_length.is_multiple_of(k) {
                return Err(fail(
                    "link",
                    "windows",
                    format!("window {k} must divide block_length {}", l.block_length),
                ));
            }
        }
        for d in &l.detectors {
            if Detector::parse(d).is_none() {
                return Err(fail(
                    "link",
                    "detectors",
                    format!("unknown detector {d:?} (expected ml_steady, ml_bounded or mlsd)"),
                ));
            }
        }
        for &db in &l.eb_n0_db {
            if !db.is_finite() {
                return Err(fail("link", "eb_n0_db", "values must be finite".into()));
            }
        }
        if l.target_bits == 0 {
            return Err(fail("link", "target_bits", "must be positive".into()));
        }
        check_unit_interval(l.steady_tolerance, || {
            fail("link", "steady_tolerance", "must lie in (0, 1)".into())
        })?;

        if self.eh.num_blocks == 0 {
            return Err(fail("eh", "num_blocks", "must be at least 1".into()));
        }

        let v = &self.verify;
        for &a in &v.amplitudes_v {
            if !a.is_finite() || a < 0.0 {
                return Err(fail("verify", "amplitudes_v", format!("{a} must be finite and ≥ 0")));
            }
        }
        check_positive(v.duration_s, || fail("verify", "duration_s", "must be positive".into()))?;
        if v.oracle_steps_per_period < 200.0 {
            return Err(fail("verify", "oracle_steps_per_period", "must be at least 200".into()));
        }
        check_positive(v.relative_tolerance, || {
            fail("verify", "relative_tolerance", "must be positive".into())
        })?;
        Ok(())
    }
}

fn check_positive(x: f64, err: impl FnOnce() -> ConfigError) -> Result<(), ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(err())
    }
}

fn check_unit_interval(x: f64, err: impl FnOnce() -> ConfigError) -> Result<(), ConfigError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(err())
    }
}

fn circuit_key(e: &rectenna::Error) -> &'static str {
    match e {
        rectenna::Error::InvalidParameter { name, .. } => match *name {
            "capacitance" => "capacitance_f",
            "source_resistance" => "source_resistance_ohm",
            "on_resistance" => "on_resistance_ohm",
            "off_resistance" => "off_resistance_ohm",
            "load_resistance" => "load_ohm",
            "diode_threshold" => "diode_threshold_v",
            "carrier_frequency" => "carrier_frequency_hz",
            _ => "circuit",
        },
        _ => "circuit",
    }
}

/// 1-based line of `key` inside `[section]` (top level when empty); the
/// section header line, or 1, when the key is absent.
pub fn key_line(src: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some((lhs, _)) = line.split_once('=') {
            if lhs.trim() == key {
                return i + 1;
            }
        }
    }
    header.unwrap_or(1)
}
