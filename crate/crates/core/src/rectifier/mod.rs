//! Half-wave rectifier with a piecewise-linear diode.
//!
//! The diode is either conducting (series `Ron` plus a threshold source `Von`)
//! or blocking (`Roff`). In each state the capacitor voltage obeys a
//! first-order linear ODE driven by `A sin(ωt)`, so every segment between
//! diode switches has a closed-form solution. [`transient`] chains those
//! segments, [`oracle`] integrates the same ODEs numerically as a cross-check.

mod oracle;
mod segment;
mod steady;
mod transient;

pub use oracle::{simulate_transient_oracle, MIN_ORACLE_STEPS_PER_PERIOD};
pub use segment::{
    branch_currents, diode_switch_predicate, diode_voltage, segment_voltage_off,
    segment_voltage_on, BranchCurrents, SegmentStart,
};
pub use steady::{steady_state_output, steady_state_output_with, SteadyState, SteadyStateOptions};
pub use transient::{
    simulate_transient, Drive, DriveSegment, Propagator, SwitchEvent, SwitchLocalization,
    Trajectory, TransientOptions, DEFAULT_SAMPLES_PER_PERIOD,
};

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Load resistance used to stand in for an open-circuited output.
pub const OPEN_CIRCUIT_LOAD: f64 = 10e6;

/// Physical constants of the rectifier. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    pub capacitance: f64,
    pub source_resistance: f64,
    pub on_resistance: f64,
    pub off_resistance: f64,
    pub load_resistance: f64,
    pub diode_threshold: f64,
    pub carrier_frequency: f64,
}

impl Default for CircuitParams {
    /// 800 MHz carrier, 10 nF, 50 Ω antenna, 5 Ω / 10 MΩ diode, 0.25 V
    /// threshold, 1 kΩ load.
    fn default() -> Self {
        Self {
            capacitance: 10e-9,
            source_resistance: 50.0,
            on_resistance: 5.0,
            off_resistance: 10e6,
            load_resistance: 1e3,
            diode_threshold: 0.25,
            carrier_frequency: 800e6,
        }
    }
}

impl CircuitParams {
    pub fn with_load(mut self, load_resistance: f64) -> Self {
        self.load_resistance = load_resistance;
        self
    }

    pub fn open_circuit(self) -> Self {
        self.with_load(OPEN_CIRCUIT_LOAD)
    }

    pub fn carrier_period(&self) -> f64 {
        1.0 / self.carrier_frequency
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("capacitance", self.capacitance),
            ("source_resistance", self.source_resistance),
            ("on_resistance", self.on_resistance),
            ("off_resistance", self.off_resistance),
            ("load_resistance", self.load_resistance),
            ("diode_threshold", self.diode_threshold),
            ("carrier_frequency", self.carrier_frequency),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        for (name, value) in &fields[..5] {
            if *value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value: *value,
                    reason: "must be positive",
                });
            }
        }
        if self.off_resistance <= self.on_resistance {
            return Err(Error::InvalidParameter {
                name: "off_resistance",
                value: self.off_resistance,
                reason: "must exceed on_resistance",
            });
        }
        if self.diode_threshold < 0.0 {
            return Err(Error::InvalidParameter {
                name: "diode_threshold",
                value: self.diode_threshold,
                reason: "must be non-negative",
            });
        }
        if self.carrier_frequency <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "carrier_frequency",
                value: self.carrier_frequency,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    pub fn derive_constants(&self) -> DerivedConstants {
        DerivedConstants::new(self)
    }
}

/// Time constants and decay rates of the two linear ODEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Carrier angular frequency, rad/s.
    pub omega: f64,
    /// `C (Rs + Ron)`.
    pub t_on: f64,
    /// `C (Rs + Roff)`.
    pub t_off: f64,
    /// Decay rate while conducting, `1/t_on + 1/(Rl C)`.
    pub alpha: f64,
    /// Decay rate while blocking, `1/t_off + 1/(Rl C)`.
    pub beta: f64,
}

impl DerivedConstants {
    pub fn new(p: &CircuitParams) -> Self {
        let t_on = p.capacitance * (p.source_resistance + p.on_resistance);
        let t_off = p.capacitance * (p.source_resistance + p.off_resistance);
        let load_rate = 1.0 / (p.load_resistance * p.capacitance);
        Self {
            omega: TAU * p.carrier_frequency,
            t_on,
            t_off,
            alpha: 1.0 / t_on + load_rate,
            beta: 1.0 / t_off + load_rate,
        }
    }
}

pub fn derive_constants(params: &CircuitParams) -> DerivedConstants {
    DerivedConstants::new(params)
}

/// Diode conduction state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiodeState {
    On,
    Off,
}

impl DiodeState {
    pub fn flipped(self) -> Self {
        match self {
            DiodeState::On => DiodeState::Off,
            DiodeState::Off => DiodeState::On,
        }
    }

    pub fn is_on(self) -> bool {
        matches!(self, DiodeState::On)
    }
}

/// Carrier phase `ωt` reduced to `[0, 2π)`.
#[inline]
pub(crate) fn carrier_phase(frequency: f64, t: f64) -> f64 {
    TAU * (frequency * t).fract()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn derived_constants_reference_circuit() {
        let k = CircuitParams::default().derive_constants();
        assert_relative_eq!(k.t_on, 5.5e-7, max_relative = 1e-14);
        assert_relative_eq!(k.omega, 1.6 * PI * 1e9, max_relative = 1e-15);
        assert_relative_eq!(k.alpha, 1.0 / 5.5e-7 + 1.0 / 1e-5, max_relative = 1e-14);
        assert_relative_eq!(k.alpha, 1_918_181.818_181_818, max_relative = 1e-12);
        assert!(k.t_off > k.t_on && k.alpha > k.beta && k.beta > 0.0);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let p = CircuitParams::default();
        assert!(p.validate().is_ok());
        assert!(CircuitParams {
            capacitance: 0.0,
            ..p
        }
        .validate()
        .is_err());
        assert!(CircuitParams {
            off_resistance: 1.0,
            ..p
        }
        .validate()
        .is_err());
        assert!(CircuitParams {
            diode_threshold: -0.1,
            ..p
        }
        .validate()
        .is_err());
        assert!(CircuitParams {
            load_resistance: f64::NAN,
            ..p
        }
        .validate()
        .is_err());
        assert!(CircuitParams {
            carrier_frequency: f64::INFINITY,
            ..p
        }
        .validate()
        .is_err());
        assert!(CircuitParams {
            diode_threshold: 0.0,
            ..p
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn phase_reduction_matches_direct_evaluation() {
        let f = 800e6;
        for &t in &[0.0, 1.3e-9, 7.77e-6, 1.1e-4] {
            let direct = (TAU * f * t).sin();
            assert!((carrier_phase(f, t).sin() - direct).abs() < 1e-9);
        }
    }
}
