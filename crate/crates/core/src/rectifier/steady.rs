//! Steady-state output under a sustained constant-amplitude drive.

use super::transient::{Propagator, SwitchLocalization, TransientOptions};
use super::CircuitParams;
use crate::error::{Error, Result};

/// Periods averaged per convergence block.
const BLOCK_PERIODS: usize = 200;
/// Consecutive quiet blocks required before declaring convergence.
const QUIET_BLOCKS: usize = 3;
/// Allowed extrapolated drift, as a fraction of the tolerance.
const DRIFT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// Mean capacitor voltage over one carrier period at steady state.
    pub level: f64,
    /// Time to come within the tolerance of `level` from an empty capacitor.
    pub settle_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    pub rel_tolerance: f64,
    pub samples_per_period: usize,
    pub localization: SwitchLocalization,
    /// Simulation limit; `None` means `100 · Rl · C`.
    pub horizon: Option<f64>,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-3,
            samples_per_period: super::DEFAULT_SAMPLES_PER_PERIOD,
            localization: SwitchLocalization::Bisection,
            horizon: None,
        }
    }
}

pub fn steady_state_output(
    params: &CircuitParams,
    amplitude: f64,
    rel_tolerance: f64,
) -> Result<SteadyState> {
    let opts = SteadyStateOptions {
        rel_tolerance,
        ..SteadyStateOptions::default()
    };
    steady_state_output_with(params, amplitude, &opts)
}

/// Charges an empty capacitor at constant amplitude until the per-period
/// mean stops drifting.
///
/// Per-period means are grouped into blocks; the drift still to come is
/// extrapolated geometrically from the last two block-to-block changes and
/// must stay well below the tolerance for several blocks in a row.
/// The level is the mean over the next carrier period; the settle time is the
/// start of the first period after which every period mean is within
/// `rel_tolerance` of it.
pub fn steady_state_output_with(
    params: &CircuitParams,
    amplitude: f64,
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    params.validate()?;
    if !(amplitude.is_finite() && amplitude > params.diode_threshold) {
        return Err(Error::NotConducting {
            amplitude,
            threshold: params.diode_threshold,
        });
    }
    let tol = opts.rel_tolerance;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rel_tolerance",
            value: tol,
            reason: "must lie in (0, 1)",
        });
    }
    let horizon = opts
        .horizon
        .unwrap_or(100.0 * params.load_resistance * params.capacitance);
    let period = params.carrier_period();
    let spp = opts.samples_per_period;
    let topts = TransientOptions {
        samples_per_period: spp,
        initial_voltage: 0.0,
        localization: opts.localization,
    };
    let mut prop = Propagator::new(params, &topts, 0.0)?;

    let mut period_means: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    let mut count = 0usize;
    let mut block_means: Vec<f64> = Vec::new();
    let mut quiet = 0usize;
    let mut block = 0usize;
    loop {
        block += 1;
        let until = (block * BLOCK_PERIODS) as f64 * period;
        if until > horizon + period {
            return Err(Error::NoConvergence { amplitude, horizon });
        }
        prop.hold(amplitude, until, |_, v, _| {
            acc += v;
            count += 1;
            if count == spp {
                period_means.push(acc / spp as f64);
                acc = 0.0;
                count = 0;
            }
        });
        let start = block_means.len() * BLOCK_PERIODS;
        if period_means.len() < start + BLOCK_PERIODS {
            continue;
        }
        let m = period_means[start..start + BLOCK_PERIODS]
            .iter()
            .sum::<f64>()
            / BLOCK_PERIODS as f64;
        block_means.push(m);
        let j = block_means.len();
        if j < 3 {
            continue;
        }
        let d1 = block_means[j - 1] - block_means[j - 2];
        let d0 = block_means[j - 2] - block_means[j - 3];
        let ratio = if d0 != 0.0 { d1 / d0 } else { 0.0 };
        let tail = if d1 == 0.0 {
            0.0
        } else if ratio > 0.0 && ratio < 1.0 {
            d1.abs() * ratio / (1.0 - ratio)
        } else if ratio >= 1.0 {
            f64::INFINITY
        } else {
            d1.abs()
        };
        if tail <= DRIFT_FRACTION * tol * m.abs() {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= QUIET_BLOCKS {
            break;
        }
    }

    // one more full period after convergence
    let first = period_means.len() + usize::from(count > 0);
    while period_means.len() <= first {
        let until = prop.now() + period;
        prop.hold(amplitude, until, |_, v, _| {
            acc += v;
            count += 1;
            if count == spp {
                period_means.push(acc / spp as f64);
                acc = 0.0;
                count = 0;
            }
        });
    }
    let level = period_means[first];
    let last_outside = period_means
        .iter()
        .rposition(|m| (m - level).abs() > tol * level.abs());
    let settle_time = last_outside.map_or(0.0, |i| (i + 1) as f64 * period);
    Ok(SteadyState { level, settle_time })
}
