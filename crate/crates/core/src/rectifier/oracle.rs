//! Fixed-step RK4 integration of the switched rectifier ODE.
//!
//! Shares nothing with the closed-form path except the switch predicate: the
//! right-hand side is written directly from Kirchhoff's laws and the carrier
//! is evaluated as `sin(ωt)` without phase reduction.

use super::segment::diode_switch_predicate;
use super::transient::SwitchEvent;
use super::transient::{Drive, Trajectory};
use super::{CircuitParams, DiodeState};
use crate::error::{Error, Result};

pub const MIN_ORACLE_STEPS_PER_PERIOD: f64 = 200.0;

struct Ode {
    omega: f64,
    von: f64,
    t_on: f64,
    t_off: f64,
    alpha: f64,
    beta: f64,
}

impl Ode {
    fn new(p: &CircuitParams) -> Self {
        let t_on = p.capacitance * (p.source_resistance + p.on_resistance);
        let t_off = p.capacitance * (p.source_resistance + p.off_resistance);
        let rl_c = p.load_resistance * p.capacitance;
        Self {
            omega: 2.0 * std::f64::consts::PI * p.carrier_frequency,
            von: p.diode_threshold,
            t_on,
            t_off,
            alpha: 1.0 / t_on + 1.0 / rl_c,
            beta: 1.0 / t_off + 1.0 / rl_c,
        }
    }

    #[inline]
    fn rhs(&self, state: DiodeState, amplitude: f64, t: f64, v: f64) -> f64 {
        let vs = amplitude * (self.omega * t).sin();
        match state {
            DiodeState::On => (vs - self.von) / self.t_on - self.alpha * v,
            DiodeState::Off => vs / self.t_off - self.beta * v,
        }
    }

    fn rk4(&self, state: DiodeState, amplitude: f64, t: f64, v: f64, h: f64) -> f64 {
        let k1 = self.rhs(state, amplitude, t, v);
        let k2 = self.rhs(state, amplitude, t + 0.5 * h, v + 0.5 * h * k1);
        let k3 = self.rhs(state, amplitude, t + 0.5 * h, v + 0.5 * h * k2);
        let k4 = self.rhs(state, amplitude, t + h, v + h * k3);
        v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }
}

/// Integrates the rectifier over `drive` with RK4 steps of length `step`,
/// checking the switch predicate after every step and bisecting the
/// sub-step at which it first holds.
pub fn simulate_transient_oracle(
    params: &CircuitParams,
    drive: &Drive,
    step: f64,
    initial_voltage: f64,
) -> Result<Trajectory> {
    params.validate()?;
    let limit = params.carrier_period() / MIN_ORACLE_STEPS_PER_PERIOD;
    if !(step > 0.0 && step <= limit * (1.0 + 1e-12)) {
        return Err(Error::StepTooLarge { step, limit });
    }
    if !initial_voltage.is_finite() {
        return Err(Error::InvalidParameter {
            name: "initial_voltage",
            value: initial_voltage,
            reason: "must be finite",
        });
    }
    let ode = Ode::new(params);
    let per_period = (params.carrier_period() / step).round() as usize;
    let mut traj = Trajectory {
        sample_times: Vec::new(),
        output_voltage: Vec::new(),
        diode_states: Vec::new(),
        switch_events: Vec::new(),
        samples_per_period: per_period,
    };

    let mut state = DiodeState::Off;
    let mut t = 0.0;
    let mut v = initial_voltage;
    let mut n: u64 = 0;
    let mut segment_start = 0.0;
    for seg in drive.segments() {
        let amplitude = seg.amplitude;
        let seg_end = segment_start + seg.duration;
        loop {
            let grid_t = n as f64 * step;
            if grid_t > seg_end {
                break;
            }
            if grid_t > t {
                let (t0, v0) = (t, v);
                let h = grid_t - t0;
                v = ode.rk4(state, amplitude, t0, v0, h);
                let vs = amplitude * (ode.omega * grid_t).sin();
                if diode_switch_predicate(state, vs, v, params) {
                    // smallest sub-step after which the predicate holds
                    let fires = |theta: f64| {
                        let tt = t0 + theta;
                        let vv = ode.rk4(state, amplitude, t0, v0, theta);
                        diode_switch_predicate(
                            state,
                            amplitude * (ode.omega * tt).sin(),
                            vv,
                            params,
                        )
                    };
                    let (mut lo, mut hi) = (0.0, h);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if fires(mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let ts = t0 + hi;
                    let vsw = ode.rk4(state, amplitude, t0, v0, hi);
                    state = state.flipped();
                    traj.switch_events.push(SwitchEvent { time: ts, state });
                    v = ode.rk4(state, amplitude, ts, vsw, grid_t - ts);
                }
                t = grid_t;
            } else {
                let vs = amplitude * (ode.omega * grid_t).sin();
                if diode_switch_predicate(state, vs, v, params) {
                    state = state.flipped();
                    traj.switch_events.push(SwitchEvent {
                        time: grid_t,
                        state,
                    });
                }
            }
            traj.push(t, v, state);
            n += 1;
        }
        if seg_end > t {
            v = ode.rk4(state, amplitude, t, v, seg_end - t);
            t = seg_end;
        }
        segment_start = seg_end;
    }
    if traj.sample_times.last().is_none_or(|&last| last < t) {
        traj.push(t, v, state);
    }
    Ok(traj)
}
