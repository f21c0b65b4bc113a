//! Closed-form capacitor voltage between diode switches.

use super::{carrier_phase, CircuitParams, DerivedConstants, DiodeState};

/// Initial condition of one constant-state, constant-amplitude segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentStart {
    pub start_time: f64,
    pub start_voltage: f64,
    pub state: DiodeState,
    pub drive_amplitude: f64,
}

/// A segment with its particular solution precomputed.
///
/// While the diode state and amplitude are fixed the capacitor voltage is
/// `V(t) = P(t) + (V0 - P(t0)) exp(-rate (t - t0))` with the sinusoidal
/// particular solution `P(t) = offset + c_cos cos(ωt) + c_sin sin(ωt)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub(crate) start: SegmentStart,
    frequency: f64,
    rate: f64,
    offset: f64,
    c_cos: f64,
    c_sin: f64,
    residual: f64,
}

impl Segment {
    pub(crate) fn new(
        start: SegmentStart,
        frequency: f64,
        k: &DerivedConstants,
        threshold: f64,
    ) -> Self {
        let (rate, tau, offset) = match start.state {
            DiodeState::On => (k.alpha, k.t_on, -threshold / (k.alpha * k.t_on)),
            DiodeState::Off => (k.beta, k.t_off, 0.0),
        };
        let denom = tau * (rate * rate + k.omega * k.omega);
        let a = start.drive_amplitude;
        let mut seg = Self {
            start,
            frequency,
            rate,
            offset,
            c_cos: -a * k.omega / denom,
            c_sin: a * rate / denom,
            residual: 0.0,
        };
        seg.residual = start.start_voltage - seg.particular(start.start_time);
        seg
    }

    #[inline]
    fn particular(&self, t: f64) -> f64 {
        let (s, c) = carrier_phase(self.frequency, t).sin_cos();
        self.offset + self.c_cos * c + self.c_sin * s
    }

    #[inline]
    pub(crate) fn voltage(&self, t: f64) -> f64 {
        let (s, c) = carrier_phase(self.frequency, t).sin_cos();
        self.voltage_with_phase(t, s, c)
    }

    /// Same as [`Segment::voltage`] with `sin(ωt)`, `cos(ωt)` supplied.
    #[inline]
    pub(crate) fn voltage_with_phase(&self, t: f64, sin: f64, cos: f64) -> f64 {
        let dt = t - self.start.start_time;
        if dt == 0.0 {
            return self.start.start_voltage;
        }
        self.offset + self.c_cos * cos + self.c_sin * sin + self.residual * (-self.rate * dt).exp()
    }
}

fn evaluate(t: f64, seg: &SegmentStart, state: DiodeState, k: &DerivedConstants, von: f64) -> f64 {
    let frequency = k.omega / std::f64::consts::TAU;
    let start = SegmentStart { state, ..*seg };
    Segment::new(start, frequency, k, von).voltage(t)
}

/// Capacitor voltage at `t` while the diode conducts since `seg.start_time`.
pub fn segment_voltage_on(t: f64, seg: &SegmentStart, k: &DerivedConstants, von: f64) -> f64 {
    debug_assert_eq!(seg.state, DiodeState::On);
    evaluate(t, seg, DiodeState::On, k, von)
}

/// Capacitor voltage at `t` while the diode blocks since `seg.start_time`.
pub fn segment_voltage_off(t: f64, seg: &SegmentStart, k: &DerivedConstants) -> f64 {
    debug_assert_eq!(seg.state, DiodeState::Off);
    evaluate(t, seg, DiodeState::Off, k, 0.0)
}

/// Returns true when the diode must leave `state` given source voltage `vs`
/// and capacitor voltage `vc`.
#[inline]
pub fn diode_switch_predicate(state: DiodeState, vs: f64, vc: f64, params: &CircuitParams) -> bool {
    let rs = params.source_resistance;
    match state {
        DiodeState::On => {
            let ron = params.on_resistance;
            (vs - vc - params.diode_threshold) * ron / (rs + ron) < 0.0
        }
        DiodeState::Off => {
            let roff = params.off_resistance;
            (vs - vc) * roff / (rs + roff) >= params.diode_threshold
        }
    }
}

/// Voltage across the diode terminals (threshold source included).
pub fn diode_voltage(state: DiodeState, vs: f64, vc: f64, params: &CircuitParams) -> f64 {
    let rs = params.source_resistance;
    let von = params.diode_threshold;
    match state {
        DiodeState::On => {
            let ron = params.on_resistance;
            von + (vs - vc - von) * ron / (rs + ron)
        }
        DiodeState::Off => {
            let roff = params.off_resistance;
            (vs - vc) * roff / (rs + roff)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchCurrents {
    pub diode: f64,
    pub capacitor: f64,
    pub load: f64,
}

/// Diode, capacitor and load currents at one instant.
pub fn branch_currents(
    state: DiodeState,
    vs: f64,
    vc: f64,
    dvc_dt: f64,
    params: &CircuitParams,
) -> BranchCurrents {
    let vd = diode_voltage(state, vs, vc, params);
    let diode = match state {
        DiodeState::On => (vd - params.diode_threshold) / params.on_resistance,
        DiodeState::Off => vd / params.off_resistance,
    };
    BranchCurrents {
        diode,
        capacitor: params.capacitance * dvc_dt,
        load: vc / params.load_resistance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn start(state: DiodeState, t0: f64, v0: f64, a: f64) -> SegmentStart {
        SegmentStart {
            start_time: t0,
            start_voltage: v0,
            state,
            drive_amplitude: a,
        }
    }

    #[test]
    fn continuity_at_segment_start() {
        let p = CircuitParams::default();
        let k = p.derive_constants();
        for &t0 in &[0.0, 3.3e-10, 1.234_567e-5] {
            let on = start(DiodeState::On, t0, 0.42, 1.0);
            let off = start(DiodeState::Off, t0, 0.37, 0.5);
            assert_eq!(segment_voltage_on(t0, &on, &k, p.diode_threshold), 0.42);
            assert_eq!(segment_voltage_off(t0, &off, &k), 0.37);
            let h = 1e-18;
            assert!((segment_voltage_on(t0 + h, &on, &k, p.diode_threshold) - 0.42).abs() < 1e-9);
            assert!((segment_voltage_off(t0 + h, &off, &k) - 0.37).abs() < 1e-9);
        }
    }

    #[test]
    fn on_segment_settles_about_threshold_offset() {
        let p = CircuitParams::default();
        let k = p.derive_constants();
        let seg = start(DiodeState::On, 0.0, 0.0, 1.0);
        let centre = -p.diode_threshold / (k.alpha * k.t_on);
        let swing = 1.0 / (k.t_on * (k.alpha * k.alpha + k.omega * k.omega).sqrt());
        let t = 50.0 / k.alpha;
        let v = segment_voltage_on(t, &seg, &k, p.diode_threshold);
        assert!((v - centre).abs() <= swing * (1.0 + 1e-9));
    }

    #[test]
    fn off_segment_without_drive_decays_exponentially() {
        let p = CircuitParams::default();
        let k = p.derive_constants();
        let seg = start(DiodeState::Off, 1e-6, 0.5, 0.0);
        for &dt in &[1e-9, 1e-6, 2e-5] {
            let v = segment_voltage_off(1e-6 + dt, &seg, &k);
            assert_relative_eq!(v, 0.5 * (-k.beta * dt).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn switch_predicate_cases() {
        let p = CircuitParams::default();
        assert!(!diode_switch_predicate(DiodeState::Off, 0.0, 0.0, &p));
        assert!(diode_switch_predicate(DiodeState::Off, 1.0, 0.0, &p));
        assert!(diode_switch_predicate(DiodeState::On, 0.2, 0.1, &p));
        assert!(!diode_switch_predicate(DiodeState::On, 1.0, 0.1, &p));
        // the off->on threshold sits a hair above the on->off one
        let vs = p.diode_threshold * (1.0 + 2e-6);
        assert!(!diode_switch_predicate(DiodeState::Off, vs, 0.0, &p));
        assert!(!diode_switch_predicate(DiodeState::On, vs, 0.0, &p));
    }

    #[test]
    fn branch_currents_basic() {
        let p = CircuitParams::default();
        let c = branch_currents(DiodeState::Off, 0.0, 0.0, 0.0, &p);
        assert_eq!((c.diode, c.capacitor, c.load), (0.0, 0.0, 0.0));
        let c = branch_currents(DiodeState::Off, 0.0, 0.5, 0.0, &p);
        assert_relative_eq!(c.load, 0.5e-3, max_relative = 1e-15);
        // conducting: the series current splits into the capacitor and the load
        let (vs, vc) = (1.0, 0.3);
        let i1 = (vs - vc - p.diode_threshold) / (p.source_resistance + p.on_resistance);
        let c = branch_currents(DiodeState::On, vs, vc, 0.0, &p);
        assert_relative_eq!(c.diode, i1, max_relative = 1e-12);
    }
}
