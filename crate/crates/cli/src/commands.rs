//! Subcommand bodies. Each returns the files to write and the report lines
//! to print; nothing touches the file system here.

use rayon::prelude::*;
use rectenna::detection::TableCache;
use rectenna::experiments::{ber_curve, eh_sweep, BerResult, BerScenario, Detector, EhResult};
use rectenna::modem::Constellation;
use rectenna::rectifier::{
    simulate_transient, simulate_transient_oracle, steady_state_output, CircuitParams, Drive,
    SteadyState, SwitchLocalization, Trajectory, TransientOptions,
};

use crate::config::{Load, Localization, RunConfig};
use crate::output::{fmt_sig9, Artifact, Table};
use crate::plots;

pub const TRANSIENT_HEADER: [&str; 4] = ["load_ohm", "time_s", "v_c_V", "diode_on"];
pub const TRANSIENT_ORACLE_COLUMN: &str = "v_c_oracle_V";
pub const SUMMARY_HEADER: [&str; 3] = ["load_ohm", "steady_level_V", "settle_time_s"];
pub const BER_HEADER: [&str; 12] = [
    "modulation",
    "detector",
    "symbol_period_s",
    "window_K",
    "block_length_L",
    "eb_n0_dB",
    "bit_errors",
    "bits_simulated",
    "ber",
    "ci95_halfwidth",
    "theory_ber",
    "theory_kind",
];
pub const EH_HEADER: [&str; 6] = [
    "modulation",
    "symbol_period_s",
    "block_length_L",
    "avg_sequence_power_W",
    "std_error_W",
    "sequences_averaged",
];
pub const VERIFY_HEADER: [&str; 5] = [
    "amplitude_V",
    "duration_s",
    "max_abs_deviation_V",
    "tolerance_V",
    "pass",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct RuntimeError(pub String);

impl RuntimeError {
    fn from_core(context: &str, e: rectenna::Error) -> Self {
        let hint = match &e {
            rectenna::Error::Overlap { .. } => {
                "; the bounded detector needs disjoint output ranges, use mlsd or a longer symbol period"
            }
            rectenna::Error::BudgetExceeded { .. } => {
                "; lower the window K or raise link.table_budget"
            }
            _ => "",
        };
        RuntimeError(format!("{context}: {e}{hint}"))
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub report: Vec<String>,
    pub verification_failed: bool,
}

fn localization(l: Localization) -> SwitchLocalization {
    match l {
        Localization::Grid => SwitchLocalization::SampleGrid,
        Localization::Refined => SwitchLocalization::Bisection,
    }
}

/// Closed-form value and matching oracle value (if any) per sample.
fn align_oracle(closed: &Trajectory, oracle: &Trajectory, tol: f64) -> Vec<Option<f64>> {
    let mut out = vec![None; closed.len()];
    let mut j = 0;
    for (i, &t) in closed.sample_times.iter().enumerate() {
        while j < oracle.len() && oracle.sample_times[j] < t - tol {
            j += 1;
        }
        if j < oracle.len() && (oracle.sample_times[j] - t).abs() <= tol {
            out[i] = Some(oracle.output_voltage[j]);
        }
    }
    out
}

struct LoadRun {
    load: Load,
    trajectory: Trajectory,
    oracle: Option<Vec<Option<f64>>>,
    steady: Option<SteadyState>,
}

pub fn cmd_transient(cfg: &RunConfig) -> Result<Outcome, RuntimeError> {
    let t = &cfg.transient;
    let opts = TransientOptions {
        samples_per_period: t.samples_per_period,
        initial_voltage: 0.0,
        localization: localization(t.switch_localization),
    };
    let drive = Drive::constant(t.amplitude_v, t.duration_s)
        .map_err(|e| RuntimeError::from_core("transient drive", e))?;
    let runs = t
        .loads
        .par_iter()
        .map(|&load| {
            let params = cfg.circuit.params_with_load(load);
            let ctx = format!("transient at load {load}");
            let trajectory = simulate_transient(&params, &drive, &opts)
                .map_err(|e| RuntimeError::from_core(&ctx, e))?;
            let oracle = if t.oracle {
                let step = params.carrier_period() / t.oracle_steps_per_period;
                let o = simulate_transient_oracle(&params, &drive, step, 0.0)
                    .map_err(|e| RuntimeError::from_core(&ctx, e))?;
                Some(align_oracle(&trajectory, &o, step * 1e-6))
            } else {
                None
            };
            let steady = if t.steady_state && t.amplitude_v > params.diode_threshold {
                Some(
                    steady_state_output(&params, t.amplitude_v, t.steady_tolerance)
                        .map_err(|e| RuntimeError::from_core(&ctx, e))?,
                )
            } else {
                None
            };
            Ok(LoadRun {
                load,
                trajectory,
                oracle,
                steady,
            })
        })
        .collect::<Result<Vec<_>, RuntimeError>>()?;

    let mut header = TRANSIENT_HEADER.to_vec();
    if t.oracle {
        header.push(TRANSIENT_ORACLE_COLUMN);
    }
    let mut table = Table::new("transient.csv", &header);
    let mut summary = Table::new("transient_summary.csv", &SUMMARY_HEADER);
    let mut report = Vec::new();
    for run in &runs {
        let tr = &run.trajectory;
        let load = fmt_sig9(run.load.ohms());
        for i in 0..tr.len() {
            if i % t.output_stride != 0 && i + 1 != tr.len() {
                continue;
            }
            let mut row = vec![
                load.clone(),
                fmt_sig9(tr.sample_times[i]),
                fmt_sig9(tr.output_voltage[i]),
                u8::from(tr.diode_states[i].is_on()).to_string(),
            ];
            if let Some(o) = &run.oracle {
                row.push(o[i].map(fmt_sig9).unwrap_or_default());
            }
            table.push(row);
        }
        let (level, settle) = match &run.steady {
            Some(s) => (fmt_sig9(s.level), fmt_sig9(s.settle_time)),
            None => (String::new(), String::new()),
        };
        if let Some(s) = &run.steady {
            report.push(format!(
                "load {}: steady level {:.6} V, settle time {:.3} us",
                run.load,
                s.level,
                s.settle_time * 1e6
            ));
        }
        summary.push(vec![load, level, settle]);
    }

    let mut artifacts = vec![Artifact::from(&table), Artifact::from(&summary)];
    if cfg.emit_plots {
        let series: Vec<(String, Vec<(f64, f64)>)> = runs
            .iter()
            .map(|r| {
                let tr = &r.trajectory;
                let pts = tr
                    .sample_times
                    .iter()
                    .zip(&tr.output_voltage)
                    .step_by(t.output_stride)
                    .map(|(&x, &y)| (x * 1e6, y))
                    .collect();
                (format!("Rl = {}", r.load), pts)
            })
            .collect();
        artifacts.push(Artifact {
            name: "transient.svg".into(),
            bytes: plots::line_chart("Output voltage", "time (us)", "V_C (V)", &series, false)
                .into_bytes(),
        });
    }
    Ok(Outcome {
        artifacts,
        report,
        verification_failed: false,
    })
}

/// File name for one BER curve, e.g. `ber_bask_mlsd_ts6250ns_k6.csv`.
pub fn ber_file_name(modulation: &str, detector: Detector, symbol_period: f64, window: usize) -> String {
    format!(
        "ber_{}_{}_ts{}ns_k{}.csv",
        modulation.to_lowercase(),
        detector.name(),
        (symbol_period * 1e9).round() as u64,
        window
    )
}

fn ber_table(name: String, rows: &[BerResult]) -> Table {
    let mut table = Table::new(name, &BER_HEADER);
    for r in rows {
        table.push(vec![
            r.modulation.clone(),
            r.detector.name().into(),
            fmt_sig9(r.symbol_period),
            r.window.to_string(),
            r.block_length.to_string(),
            fmt_sig9(r.eb_n0_db),
            r.bit_errors.to_string(),
            r.bits_simulated.to_string(),
            fmt_sig9(r.ber),
            fmt_sig9(r.ci95_halfwidth),
            r.theory.map(fmt_sig9).unwrap_or_default(),
            r.theory_kind.map(|k| k.name().to_string()).unwrap_or_default(),
        ]);
    }
    table
}

pub fn cmd_ber(cfg: &RunConfig) -> Result<Outcome, RuntimeError> {
    let params = cfg.circuit.params();
    let cache = TableCache::new();
    let l = &cfg.link;
    let mut artifacts = Vec::new();
    let mut report = Vec::new();
    for c in cfg.constellations() {
        let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for detector in cfg.detectors() {
            let windows = if detector == Detector::Mlsd {
                l.windows.clone()
            } else {
                vec![1]
            };
            for &ts in &l.symbol_periods_s {
                for &k in &windows {
                    let s = scenario(cfg, &params, &c, detector, ts, k);
                    let ctx = format!("{} {} Ts = {ts:e} s K = {k}", c.name(), detector);
                    let rows = ber_curve(&s, &cache).map_err(|e| RuntimeError::from_core(&ctx, e))?;
                    let name = ber_file_name(&c.name(), detector, ts, s_window(&s));
                    report.push(format!("{ctx}: {} points -> {name}", rows.len()));
                    curves.push((
                        format!("{} Ts={}us K={}", detector, ts * 1e6, s_window(&s)),
                        rows.iter().map(|r| (r.eb_n0_db, r.ber)).collect(),
                    ));
                    artifacts.push(Artifact::from(&ber_table(name, &rows)));
                }
            }
        }
        if cfg.emit_plots {
            let svg = plots::line_chart(
                &format!("{} bit error rate", c.name()),
                "Eb/N0 (dB)",
                "BER",
                &curves,
                true,
            );
            artifacts.push(Artifact {
                name: format!("ber_{}.svg", c.name().to_lowercase()),
                bytes: svg.into_bytes(),
            });
        }
    }
    Ok(Outcome {
        artifacts,
        report,
        verification_failed: false,
    })
}

fn s_window(s: &BerScenario) -> usize {
    if s.detector == Detector::Mlsd {
        s.window
    } else {
        1
    }
}

/// BER scenario for one curve of the configured link.
pub fn scenario(
    cfg: &RunConfig,
    params: &CircuitParams,
    c: &Constellation,
    detector: Detector,
    symbol_period: f64,
    window: usize,
) -> BerScenario {
    let l = &cfg.link;
    let mut s = BerScenario::new(*params, c.clone(), detector, symbol_period);
    s.block_length = l.block_length;
    s.window = window;
    s.eb_n0_db = l.eb_n0_db.clone();
    s.target_bits = l.target_bits;
    s.seed = cfg.seed;
    s.steady_tolerance = l.steady_tolerance;
    s.table_budget = l.table_budget;
    s
}

pub fn cmd_eh(cfg: &RunConfig) -> Result<Outcome, RuntimeError> {
    let params = cfg.circuit.params();
    let cache = TableCache::new();
    let l = &cfg.link;
    let mut table = Table::new("eh.csv", &EH_HEADER);
    let mut report = Vec::new();
    let mut series = Vec::new();
    for c in cfg.constellations() {
        let rows: Vec<EhResult> = eh_sweep(
            &params,
            &c,
            &l.symbol_periods_s,
            l.block_length,
            cfg.eh.num_blocks,
            cfg.seed,
            &cache,
        )
        .map_err(|e| RuntimeError::from_core(&format!("{} harvesting sweep", c.name()), e))?;
        for r in &rows {
            table.push(vec![
                c.name(),
                fmt_sig9(r.symbol_period),
                r.block_length.to_string(),
                fmt_sig9(r.avg_sequence_power),
                fmt_sig9(r.std_error),
                r.sequences_averaged.to_string(),
            ]);
            report.push(format!(
                "{} Ts = {:.3} us: P_L = {:.6e} W (se {:.2e})",
                c.name(),
                r.symbol_period * 1e6,
                r.avg_sequence_power,
                r.std_error
            ));
        }
        series.push((
            c.name(),
            rows.iter()
                .map(|r| (r.symbol_period * 1e6, r.avg_sequence_power * 1e3))
                .collect(),
        ));
    }
    let mut artifacts = vec![Artifact::from(&table)];
    if cfg.emit_plots {
        let svg = plots::line_chart(
            "Average sequence power",
            "Ts (us)",
            "P_L (mW)",
            &series,
            false,
        );
        artifacts.push(Artifact {
            name: "eh.svg".into(),
            bytes: svg.into_bytes(),
        });
    }
    Ok(Outcome {
        artifacts,
        report,
        verification_failed: false,
    })
}

/// Transient simulator under test in [`cmd_verify_with`].
pub type Simulator =
    dyn Fn(&CircuitParams, &Drive, &TransientOptions) -> rectenna::Result<Trajectory> + Sync;

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, RuntimeError> {
    cmd_verify_with(cfg, &simulate_transient)
}

/// Compares `simulate` (with refined switching) against the RK4 oracle for
/// every configured amplitude.
pub fn cmd_verify_with(cfg: &RunConfig, simulate: &Simulator) -> Result<Outcome, RuntimeError> {
    let v = &cfg.verify;
    let params = cfg.circuit.params();
    let step = params.carrier_period() / v.oracle_steps_per_period;
    let results = v
        .amplitudes_v
        .par_iter()
        .map(|&a| {
            let ctx = format!("verify at amplitude {a} V");
            let drive =
                Drive::constant(a, v.duration_s).map_err(|e| RuntimeError::from_core(&ctx, e))?;
            let closed = simulate(&params, &drive, &TransientOptions::refined())
                .map_err(|e| RuntimeError::from_core(&ctx, e))?;
            let oracle = simulate_transient_oracle(&params, &drive, step, 0.0)
                .map_err(|e| RuntimeError::from_core(&ctx, e))?;
            let dev = closed
                .max_deviation_from(&oracle, step * 1e-6)
                .ok_or_else(|| RuntimeError(format!("{ctx}: no common sample instants")))?;
            Ok((a, dev, v.relative_tolerance * a))
        })
        .collect::<Result<Vec<_>, RuntimeError>>()?;

    let mut table = Table::new("verify.csv", &VERIFY_HEADER);
    let mut report = Vec::new();
    let mut failed = false;
    for (a, dev, tol) in results {
        let pass = dev <= tol;
        failed |= !pass;
        table.push(vec![
            fmt_sig9(a),
            fmt_sig9(v.duration_s),
            fmt_sig9(dev),
            fmt_sig9(tol),
            pass.to_string(),
        ]);
        report.push(format!(
            "{} amplitude {a} V: max |dV| = {dev:.3e} V (limit {tol:.3e} V)",
            if pass { "PASS" } else { "FAIL" }
        ));
    }
    Ok(Outcome {
        artifacts: vec![Artifact::from(&table)],
        report,
        verification_failed: failed,
    })
}
