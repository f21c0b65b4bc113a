//! Segment-by-segment transient analysis.

use std::f64::consts::TAU;
use std::sync::Arc;

use super::segment::{diode_switch_predicate, Segment, SegmentStart};
use super::{carrier_phase, CircuitParams, DerivedConstants, DiodeState};
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 100;

/// Switch instants are located to within this fraction of a grid step.
const SWITCH_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSegment {
    pub duration: f64,
    pub amplitude: f64,
}

/// Piecewise-constant amplitude schedule of the source `A(t) sin(ωt)`.
///
/// The carrier phase is global: amplitude steps never reset it.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    segments: Vec<DriveSegment>,
}

impl Drive {
    pub fn new(segments: Vec<DriveSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyDrive);
        }
        for s in &segments {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "duration",
                    value: s.duration,
                    reason: "must be positive and finite",
                });
            }
            if !(s.amplitude.is_finite() && s.amplitude >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "amplitude",
                    value: s.amplitude,
                    reason: "must be non-negative and finite",
                });
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(amplitude: f64, duration: f64) -> Result<Self> {
        Self::new(vec![DriveSegment {
            duration,
            amplitude,
        }])
    }

    /// One segment of length `period` per symbol amplitude.
    pub fn symbols(amplitudes: &[f64], period: f64) -> Result<Self> {
        Self::new(
            amplitudes
                .iter()
                .map(|&amplitude| DriveSegment {
                    duration: period,
                    amplitude,
                })
                .collect(),
        )
    }

    pub fn segments(&self) -> &[DriveSegment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.amplitude)
            .fold(0.0, f64::max)
    }

    /// Absolute end time of each segment.
    pub(crate) fn boundaries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut t = 0.0;
        self.segments.iter().map(move |s| {
            t += s.duration;
            (t, s.amplitude)
        })
    }
}

/// Where a diode switch is placed once the predicate fires at a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwitchLocalization {
    /// At the sample instant itself.
    #[default]
    SampleGrid,
    /// At the predicate crossing, searched inside the last sample interval.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientOptions {
    pub samples_per_period: usize,
    pub initial_voltage: f64,
    pub localization: SwitchLocalization,
}

impl Default for TransientOptions {
    fn default() -> Self {
        Self {
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
            initial_voltage: 0.0,
            localization: SwitchLocalization::SampleGrid,
        }
    }
}

impl TransientOptions {
    pub fn refined() -> Self {
        Self {
            localization: SwitchLocalization::Bisection,
            ..Self::default()
        }
    }

    pub fn with_initial_voltage(mut self, v: f64) -> Self {
        self.initial_voltage = v;
        self
    }

    pub fn with_samples_per_period(mut self, n: usize) -> Self {
        self.samples_per_period = n;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub state: DiodeState,
}

/// Sampled output of one transient run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    pub output_voltage: Vec<f64>,
    pub diode_states: Vec<DiodeState>,
    pub switch_events: Vec<SwitchEvent>,
    pub samples_per_period: usize,
}

impl Trajectory {
    fn with_capacity(n: usize, samples_per_period: usize) -> Self {
        Self {
            sample_times: Vec::with_capacity(n),
            output_voltage: Vec::with_capacity(n),
            diode_states: Vec::with_capacity(n),
            switch_events: Vec::new(),
            samples_per_period,
        }
    }

    pub(crate) fn push(&mut self, t: f64, v: f64, state: DiodeState) {
        self.sample_times.push(t);
        self.output_voltage.push(v);
        self.diode_states.push(state);
    }

    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    pub fn final_voltage(&self) -> Option<f64> {
        self.output_voltage.last().copied()
    }

    /// Largest |ΔV| between samples of `self` and `other` taken at the same
    /// instants (times matched within `time_tolerance`).
    pub fn max_deviation_from(&self, other: &Trajectory, time_tolerance: f64) -> Option<f64> {
        let (mut i, mut j) = (0, 0);
        let mut worst: Option<f64> = None;
        while i < self.len() && j < other.len() {
            let (a, b) = (self.sample_times[i], other.sample_times[j]);
            if (a - b).abs() <= time_tolerance {
                let d = (self.output_voltage[i] - other.output_voltage[j]).abs();
                worst = Some(worst.map_or(d, |w| w.max(d)));
                i += 1;
                j += 1;
            } else if a < b {
                i += 1;
            } else {
                j += 1;
            }
        }
        worst
    }
}

/// Incremental closed-form propagator.
///
/// Holds the active segment and the position on the global sample grid
/// `n / (f · samples_per_period)`. The switch predicate is checked only at
/// grid instants; [`Propagator::hold`] advances the state under a constant
/// amplitude. Cloning a propagator forks the simulation, which is how
/// candidate-sequence tables share prefixes.
#[derive(Debug, Clone)]
pub struct Propagator {
    params: CircuitParams,
    consts: DerivedConstants,
    seg: Segment,
    now: f64,
    last_check: f64,
    grid_step: f64,
    next_grid: u64,
    /// `(sin, cos)` of the carrier at each grid phase `2π j / samples_per_period`.
    grid_phases: Arc<[(f64, f64)]>,
    localization: SwitchLocalization,
    record_events: bool,
    events: Vec<SwitchEvent>,
}

impl Propagator {
    /// Starts with the diode off and the capacitor at `opts.initial_voltage`.
    pub fn new(params: &CircuitParams, opts: &TransientOptions, start_time: f64) -> Result<Self> {
        params.validate()?;
        if opts.samples_per_period < 2 {
            return Err(Error::InvalidParameter {
                name: "samples_per_period",
                value: opts.samples_per_period as f64,
                reason: "must be at least 2",
            });
        }
        if !opts.initial_voltage.is_finite() {
            return Err(Error::InvalidParameter {
                name: "initial_voltage",
                value: opts.initial_voltage,
                reason: "must be finite",
            });
        }
        if !(start_time.is_finite() && start_time >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "start_time",
                value: start_time,
                reason: "must be non-negative and finite",
            });
        }
        let consts = params.derive_constants();
        let grid_step = 1.0 / (params.carrier_frequency * opts.samples_per_period as f64);
        let mut next_grid = (start_time / grid_step).ceil() as u64;
        // an instant already at the start belongs to this run
        if next_grid > 0 && (next_grid - 1) as f64 * grid_step >= start_time {
            next_grid -= 1;
        }
        let start = SegmentStart {
            start_time,
            start_voltage: opts.initial_voltage,
            state: DiodeState::Off,
            drive_amplitude: 0.0,
        };
        Ok(Self {
            params: *params,
            consts,
            seg: Segment::new(
                start,
                params.carrier_frequency,
                &consts,
                params.diode_threshold,
            ),
            now: start_time,
            last_check: start_time,
            grid_step,
            next_grid,
            grid_phases: (0..opts.samples_per_period)
                .map(|j| (TAU * j as f64 / opts.samples_per_period as f64).sin_cos())
                .collect(),
            localization: opts.localization,
            record_events: false,
            events: Vec::new(),
        })
    }

    pub fn record_events(mut self, on: bool) -> Self {
        self.record_events = on;
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn state(&self) -> DiodeState {
        self.seg.start.state
    }

    pub fn voltage(&self) -> f64 {
        self.seg.voltage(self.now)
    }

    pub fn active_segment(&self) -> SegmentStart {
        self.seg.start
    }

    pub fn take_events(&mut self) -> Vec<SwitchEvent> {
        std::mem::take(&mut self.events)
    }

    fn restart(&mut self, t: f64, v: f64, state: DiodeState, amplitude: f64) {
        let start = SegmentStart {
            start_time: t,
            start_voltage: v,
            state,
            drive_amplitude: amplitude,
        };
        self.seg = Segment::new(
            start,
            self.params.carrier_frequency,
            &self.consts,
            self.params.diode_threshold,
        );
    }

    /// Signed distance from the switching threshold at `t`, positive once
    /// the predicate holds, together with the predicate itself.
    #[inline]
    fn margin(&self, t: f64) -> (f64, bool) {
        let (sin, cos) = carrier_phase(self.params.carrier_frequency, t).sin_cos();
        let vc = self.seg.voltage_with_phase(t, sin, cos);
        let vs = self.seg.start.drive_amplitude * sin;
        let state = self.seg.start.state;
        let fires = diode_switch_predicate(state, vs, vc, &self.params);
        let g = match state {
            DiodeState::On => self.params.diode_threshold - (vs - vc),
            DiodeState::Off => {
                let p = &self.params;
                (vs - vc) * p.off_resistance / (p.source_resistance + p.off_resistance)
                    - p.diode_threshold
            }
        };
        (g, fires)
    }

    /// First instant in `(lo, hi]` at which the active segment's predicate
    /// holds, given that it holds at `hi`, to within `SWITCH_RESOLUTION` grid
    /// steps.
    ///
    /// Illinois false position on the threshold margin; every probe that
    /// lands on one side is followed by a probe one resolution step across,
    /// so the bracket collapses as soon as the estimate is that close.
    fn locate_crossing(&self, mut lo: f64, mut hi: f64) -> f64 {
        let (mut g_lo, fires) = self.margin(lo);
        if fires {
            return lo;
        }
        let (mut g_hi, _) = self.margin(hi);
        let resolution = SWITCH_RESOLUTION * self.grid_step;
        let mut side = 0i8;
        for _ in 0..100 {
            if hi - lo <= resolution {
                break;
            }
            let mut t = if g_hi > g_lo {
                hi - g_hi * (hi - lo) / (g_hi - g_lo)
            } else {
                0.5 * (lo + hi)
            };
            if !(t > lo && t < hi) {
                t = 0.5 * (lo + hi);
            }
            let (g, fires) = self.margin(t);
            if fires {
                hi = t;
                g_hi = g;
                if side == 1 {
                    g_lo *= 0.5;
                }
                side = 1;
                let probe = t - resolution;
                if probe > lo {
                    let (gp, fp) = self.margin(probe);
                    if fp {
                        hi = probe;
                        g_hi = gp;
                    } else {
                        lo = probe;
                        g_lo = gp;
                    }
                }
            } else {
                lo = t;
                g_lo = g;
                if side == -1 {
                    g_hi *= 0.5;
                }
                side = -1;
                let probe = t + resolution;
                if probe < hi {
                    let (gp, fp) = self.margin(probe);
                    if fp {
                        hi = probe;
                        g_hi = gp;
                    } else {
                        lo = probe;
                        g_lo = gp;
                    }
                }
            }
        }
        hi
    }

    /// Evaluates at grid instant `t` (grid index `n`) and applies any diode
    /// switch.
    fn check(&mut self, t: f64, n: u64) -> f64 {
        let (sin, cos) = self.grid_phases[(n % self.grid_phases.len() as u64) as usize];
        let mut v = self.seg.voltage_with_phase(t, sin, cos);
        // hysteresis between the two thresholds bounds this loop; the cap
        // guards against degenerate parameters
        for _ in 0..4 {
            let vs = self.seg.start.drive_amplitude * sin;
            if !diode_switch_predicate(self.seg.start.state, vs, v, &self.params) {
                break;
            }
            let flipped = self.seg.start.state.flipped();
            let amplitude = self.seg.start.drive_amplitude;
            let switch_time = match self.localization {
                SwitchLocalization::SampleGrid => t,
                SwitchLocalization::Bisection => {
                    let lo = self.last_check.max(self.seg.start.start_time);
                    self.locate_crossing(lo, t)
                }
            };
            let v_switch = if switch_time == t {
                v
            } else {
                self.seg.voltage(switch_time)
            };
            self.restart(switch_time, v_switch, flipped, amplitude);
            if self.record_events {
                self.events.push(SwitchEvent {
                    time: switch_time,
                    state: flipped,
                });
            }
            v = self.seg.voltage_with_phase(t, sin, cos);
            if self.localization == SwitchLocalization::SampleGrid {
                break;
            }
        }
        self.last_check = t;
        v
    }

    /// Drives the circuit with amplitude `amplitude` until `until`, calling
    /// `observe(t, v, state)` at every grid instant in `(now, until]`.
    /// Returns the capacitor voltage at `until`.
    pub fn hold<F>(&mut self, amplitude: f64, until: f64, mut observe: F) -> f64
    where
        F: FnMut(f64, f64, DiodeState),
    {
        debug_assert!(until >= self.now);
        if amplitude != self.seg.start.drive_amplitude {
            let v = self.seg.voltage(self.now);
            self.restart(self.now, v, self.seg.start.state, amplitude);
        }
        loop {
            let n = self.next_grid;
            let t = n as f64 * self.grid_step;
            if t > until {
                break;
            }
            let v = self.check(t, n);
            observe(t, v, self.seg.start.state);
            self.next_grid += 1;
        }
        self.now = until;
        self.seg.voltage(until)
    }

    /// [`Propagator::hold`] without an observer.
    pub fn advance(&mut self, amplitude: f64, until: f64) -> f64 {
        self.hold(amplitude, until, |_, _, _| {})
    }
}

/// Runs the transient analysis over the whole drive schedule.
///
/// Samples are taken on the grid of `samples_per_period` points per carrier
/// period starting at t = 0; if the schedule ends off-grid, the end instant
/// is appended.
pub fn simulate_transient(
    params: &CircuitParams,
    drive: &Drive,
    opts: &TransientOptions,
) -> Result<Trajectory> {
    let mut prop = Propagator::new(params, opts, 0.0)?.record_events(true);
    let total = drive.total_duration();
    let estimate = (total * params.carrier_frequency * opts.samples_per_period as f64) as usize + 2;
    let mut traj = Trajectory::with_capacity(estimate, opts.samples_per_period);
    let mut end_v = 0.0;
    for (until, amplitude) in drive.boundaries() {
        end_v = prop.hold(amplitude, until, |t, v, s| traj.push(t, v, s));
    }
    let end = prop.now();
    if traj.sample_times.last().is_none_or(|&t| t < end) {
        traj.push(end, end_v, prop.state());
    }
    traj.switch_events = prop.take_events();
    Ok(traj)
}
