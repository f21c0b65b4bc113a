//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rectenna::detection::*;
use rectenna::experiments::*;
use rectenna::modem::*;
use rectenna::rectifier::*;
use rectenna_cli::{cmd_ber, output::write_atomic, RunConfig};

const BASK_PERIODS: [f64; 3] = [6.25e-6, 12.5e-6, 18.75e-6];

struct Check {
    pass: bool,
    detail: String,
}

fn bask() -> Constellation {
    Constellation::new(vec![0.5, 1.0]).unwrap()
}

fn scenario(detector: Detector, ts: f64) -> BerScenario {
    BerScenario::new(CircuitParams::default(), bask(), detector, ts)
}

fn oracle_equivalence() -> Check {
    let p = CircuitParams::default();
    let drive = Drive::constant(1.0, 20e-6).unwrap();
    let closed = simulate_transient(&p, &drive, &TransientOptions::refined()).unwrap();
    let step = p.carrier_period() / MIN_ORACLE_STEPS_PER_PERIOD;
    let oracle = simulate_transient_oracle(&p, &drive, step, 0.0).unwrap();
    let dev = closed.max_deviation_from(&oracle, step * 1e-6).unwrap();
    Check {
        pass: dev <= 1e-6,
        detail: format!("max |dV| = {dev:.3e} V over 20 us"),
    }
}

fn settle_time() -> Check {
    let s = steady_state_output(&CircuitParams::default(), 1.0, 1e-3).unwrap();
    Check {
        pass: (12e-6..=18e-6).contains(&s.settle_time),
        detail: format!("T0 = {:.3} us, level {:.6} V", s.settle_time * 1e6, s.level),
    }
}

fn open_circuit_plateau() -> Check {
    let p = CircuitParams::default().open_circuit();
    let s = steady_state_output(&p, 1.0, 1e-3).unwrap();
    Check {
        pass: (0.73..=0.76).contains(&s.level),
        detail: format!("plateau {:.6} V", s.level),
    }
}

fn qask_spacing() -> Check {
    let q = build_constellation(4, 0.5, 5.0 / 16.0).unwrap();
    let d = q.amplitude(1) - q.amplitude(0);
    let expected = (30f64.sqrt() - 3.0) / 14.0;
    let p_bask = average_symbol_power(&bask());
    Check {
        pass: (d - expected).abs() <= 1e-12 && p_bask == 5.0 / 16.0,
        detail: format!("d = {d:.15}, |d - d*| = {:.1e}, P_av(BASK) = {p_bask}", (d - expected).abs()),
    }
}

fn interference_free_ber(cache: &TableCache) -> Check {
    let r = ber_curve(&scenario(Detector::MlSteady, 18.75e-6), cache).unwrap();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut checked = 0;
    for x in r.iter().filter(|x| x.ber >= 1e-4) {
        let z = (x.ber - x.theory.unwrap()).abs() / x.std_error();
        worst = worst.max(z);
        pass &= z <= 3.0;
        checked += 1;
    }
    Check {
        pass: pass && checked > 0,
        detail: format!("{checked} points, worst |sim - Q| = {worst:.3} standard errors"),
    }
}

fn symbol_period_ordering(cache: &TableCache) -> (Check, Vec<Vec<BerResult>>) {
    let curves: Vec<Vec<BerResult>> = BASK_PERIODS
        .iter()
        .map(|&ts| ber_curve(&scenario(Detector::MlBounded, ts), cache).unwrap())
        .collect();
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for pair in curves.windows(2) {
        for (short, long) in pair[0].iter().zip(&pair[1]) {
            let se = (short.std_error().powi(2) + long.std_error().powi(2)).sqrt();
            let margin = (short.ber - long.ber) / se.max(f64::MIN_POSITIVE);
            worst = worst.min(margin);
            pass &= short.ber + 3.0 * se >= long.ber;
        }
    }
    let check = Check {
        pass,
        detail: format!("smallest (shorter - longer) gap = {worst:.2} standard errors"),
    };
    (check, curves)
}

fn mlsd_gain(cache: &TableCache, ml: &[Vec<BerResult>]) -> Check {
    let mlsd_short = ber_curve(&scenario(Detector::Mlsd, 6.25e-6), cache).unwrap();
    let mlsd_mid = ber_curve(&scenario(Detector::Mlsd, 12.5e-6), cache).unwrap();
    let mut gain = true;
    let mut gain_points = 0;
    for (s, m) in mlsd_short.iter().zip(&ml[0]) {
        if m.ber >= 1e-3 || s.ber >= 1e-3 {
            gain &= s.ber < m.ber;
            gain_points += 1;
        }
    }
    let mut overlap = true;
    let mut widest: f64 = 0.0;
    for (s, m) in mlsd_mid.iter().zip(&ml[1]) {
        let gap = (s.ber - m.ber).abs();
        overlap &= gap <= s.ci95_halfwidth + m.ci95_halfwidth;
        widest = widest.max(gap / (s.ci95_halfwidth + m.ci95_halfwidth));
    }
    Check {
        pass: gain && overlap && gain_points > 0,
        detail: format!(
            "6.25 us: MLSD below ML at {gain_points} points = {gain}; 12.5 us: CI overlap = {overlap} (max gap {widest:.2} of combined half-widths)"
        ),
    }
}

fn harvesting_trend(cache: &TableCache) -> Check {
    let r = eh_sweep(&CircuitParams::default(), &bask(), &BASK_PERIODS, 6, 1_000_000, 1, cache).unwrap();
    let mut pass = true;
    let mut seps = Vec::new();
    for w in r.windows(2) {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        let sep = (w[0].avg_sequence_power - w[1].avg_sequence_power) / se;
        pass &= sep >= 3.0;
        seps.push(format!("{sep:.1}"));
    }
    let powers: Vec<String> = r.iter().map(|x| format!("{:.5e}", x.avg_sequence_power)).collect();
    Check {
        pass,
        detail: format!("P_L = [{}] W, separations [{}] SE", powers.join(", "), seps.join(", ")),
    }
}

fn brute_force(y: &[f64], rows: &[&[f64]]) -> usize {
    let d = |x: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (1..rows.len()).fold(0, |best, i| if d(rows[i]) < d(rows[best]) { i } else { best })
}

fn detector_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let m = [2usize, 4][rng.random_range(0..2)];
        let k = rng.random_range(1..5);
        let n = m.pow(k as u32);
        let outputs: Vec<f64> = (0..n * k).map(|_| rng.random_range(0.0..1.0)).collect();
        let table = SequenceOutputTable::from_outputs(m, k, 1e-6, outputs.clone()).unwrap();
        let rows: Vec<&[f64]> = outputs.chunks(k).collect();
        let y: Vec<f64> = (0..k).map(|_| rng.random_range(-0.2..1.2)).collect();
        if mlsd_detect(&y, &table).unwrap().symbols != table.symbols_of(brute_force(&y, &rows)) {
            mismatches += 1;
        }
        let mut refs: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        refs.sort_by(f64::total_cmp);
        let single: Vec<[f64; 1]> = refs.iter().map(|&r| [r]).collect();
        let single: Vec<&[f64]> = single.iter().map(|r| r.as_slice()).collect();
        let ml = ml_detect(&y, &refs).symbols;
        for (&v, &s) in y.iter().zip(&ml) {
            if s != brute_force(&[v], &single) {
                mismatches += 1;
            }
        }
    }
    Check {
        pass: mismatches == 0,
        detail: format!("10000 random instances, {mismatches} mismatches"),
    }
}

fn determinism() -> Check {
    let src = "
seed = 7
[link]
symbol_periods_s = [6.25e-6, 12.5e-6]
detectors = [\"ml_bounded\", \"mlsd\"]
windows = [3, 6]
target_bits = 20000
";
    let cfg = RunConfig::parse(src, "determinism.toml").unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = cmd_ber(&cfg).unwrap();
        write_atomic(d.path(), &out.artifacts).unwrap();
    }
    let mut files: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    let identical = files.iter().all(|f| {
        std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap()
    });
    let count_match = std::fs::read_dir(dirs[1].path()).unwrap().count() == files.len();
    Check {
        pass: identical && count_match && !files.is_empty(),
        detail: format!("{} CSV files compared byte for byte", files.len()),
    }
}

fn main() -> ExitCode {
    let cache = TableCache::new();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, budget: Duration, run: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let check = run();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = check.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] criterion {n:>2} {name}: {} ({:.1} s of {} s)",
            if pass { "PASS" } else { "FAIL" },
            check.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    };
    let secs = Duration::from_secs;

    report(1, "oracle equivalence", secs(30), &mut oracle_equivalence);
    report(2, "settle time", secs(10), &mut settle_time);
    report(3, "open-circuit plateau", secs(10), &mut open_circuit_plateau);
    report(4, "QASK spacing", secs(1), &mut qask_spacing);
    report(5, "interference-free BER", secs(300), &mut || interference_free_ber(&cache));
    let mut ml_curves = Vec::new();
    report(6, "symbol-period ordering", secs(600), &mut || {
        let (check, curves) = symbol_period_ordering(&cache);
        ml_curves = curves;
        check
    });
    report(7, "MLSD gain and convergence", secs(900), &mut || mlsd_gain(&cache, &ml_curves));
    report(8, "harvesting trend", secs(300), &mut || harvesting_trend(&cache));
    report(9, "detector oracle", secs(60), &mut detector_oracle);
    report(10, "determinism", secs(120), &mut determinism);

    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
