use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rectenna::detection::*;
use rectenna::modem::*;
use rectenna::rectifier::CircuitParams;

fn bask() -> Constellation {
    Constellation::new(vec![0.5, 1.0]).unwrap()
}

fn cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(TableCache::new)
}

fn full_table(ts: f64) -> std::sync::Arc<SequenceOutputTable> {
    cache()
        .get(
            &CircuitParams::default(),
            &bask(),
            &TableRequest::new(ts, 6),
        )
        .unwrap()
}

fn brute_force(y: &[f64], candidates: &[Vec<f64>]) -> usize {
    let dist = |x: &Vec<f64>| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut best = 0;
    for i in 1..candidates.len() {
        if dist(&candidates[i]) < dist(&candidates[best]) {
            best = i;
        }
    }
    best
}

fn random_table(rng: &mut ChaCha8Rng, m: usize, k: usize) -> (SequenceOutputTable, Vec<Vec<f64>>) {
    let n = m.pow(k as u32);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let table = SequenceOutputTable::from_outputs(m, k, 1e-6, rows.concat()).unwrap();
    (table, rows)
}

#[test]
fn detectors_agree_with_brute_force_scans() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let m = [2, 4][rng.random_range(0..2)];
        let k = rng.random_range(1..4);
        let (table, rows) = random_table(&mut rng, m, k);
        let y: Vec<f64> = (0..k).map(|_| rng.random_range(-1.2..1.2)).collect();
        let got = mlsd_detect(&y, &table).unwrap().symbols;
        assert_eq!(got, table.symbols_of(brute_force(&y, &rows)));

        let mut refs: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        refs.sort_by(f64::total_cmp);
        let ml = ml_detect(&y, &refs).symbols;
        for (&v, &s) in y.iter().zip(&ml) {
            let singles: Vec<Vec<f64>> = refs.iter().map(|&r| vec![r]).collect();
            assert_eq!(s, brute_force(&[v], &singles));
        }
    }
}

#[test]
fn all_high_block_dominates_every_position() {
    let t = full_table(6.25e-6);
    let top = t.entry(t.len() - 1);
    for i in 0..t.len() {
        for (a, b) in t.entry(i).iter().zip(top) {
            assert!(a <= b);
        }
    }
}

#[test]
fn ranges_shrink_towards_steady_levels_as_period_grows() {
    let p = CircuitParams::default();
    let steady = compute_steady_states(&p, &bask(), 1e-3).unwrap().levels;
    let mid = 0.5 * (steady[0] + steady[1]);
    let mut last_width = f64::INFINITY;
    let mut last_offset = f64::INFINITY;
    for ts in [6.25e-6, 12.5e-6, 18.75e-6] {
        let r = OutputRanges::from_table(&full_table(ts));
        assert!(r.is_disjoint());
        let width = r.ranges.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        let offset = (r.thresholds().unwrap()[0] - mid).abs();
        assert!(width < last_width && offset < last_offset);
        last_width = width;
        last_offset = offset;
    }
    assert!(last_width < 2e-3);
    assert!(last_offset < 1e-3);
}

#[test]
fn noiseless_blocks_are_recovered_for_every_window() {
    let p = CircuitParams::default();
    let ts = 6.25e-6;
    let t = full_table(ts);
    for k in [1, 2, 3, 6] {
        let cfg = LinkConfig::new(ts, 6, k);
        for i in 0..t.len() {
            let got = detect_block(t.entry(i), &cfg, &p, &bask(), cache()).unwrap();
            assert_eq!(got.symbols, t.symbols_of(i), "K={k} block {i}");
        }
    }
}

#[test]
fn full_window_sequence_detection_beats_single_symbol_windows() {
    let p = CircuitParams::default();
    let ts = 6.25e-6;
    let t = full_table(ts);
    let sigma = noise_sigma(average_symbol_power(&bask()), db_to_linear(8.0), 1);
    let single = LinkConfig::new(ts, 6, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
    let (mut errors_full, mut errors_single) = (0u32, 0u32);
    for _ in 0..100_000 {
        let i = rng.random_range(0..t.len());
        let y: Vec<f64> = t.entry(i).iter().map(|&x| x + rng.sample(normal)).collect();
        if mlsd_index(&y, &t) != i {
            errors_full += 1;
        }
        if detect_block(&y, &single, &p, &bask(), cache())
            .unwrap()
            .symbols
            != t.symbols_of(i)
        {
            errors_single += 1;
        }
    }
    assert!(
        errors_full <= errors_single,
        "{errors_full} vs {errors_single}"
    );
}

#[test]
fn window_size_must_divide_block() {
    let cfg = LinkConfig::new(6.25e-6, 6, 4);
    let err = detect_block(&[0.0; 6], &cfg, &CircuitParams::default(), &bask(), cache());
    assert!(err.is_err());
}

proptest! {
    #[test]
    fn shifting_everything_keeps_decisions(
        seed in any::<u64>(),
        shift in -5.0..5.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (table, rows) = random_table(&mut rng, 2, 3);
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let moved_rows: Vec<f64> = rows.concat().iter().map(|x| x + shift).collect();
        let moved = SequenceOutputTable::from_outputs(2, 3, 1e-6, moved_rows).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| v + shift).collect();
        prop_assert_eq!(mlsd_index(&y, &table), mlsd_index(&y2, &moved));

        let refs = [-0.4, 0.1, 0.3, 0.9];
        let moved_refs: Vec<f64> = refs.iter().map(|r| r + shift).collect();
        prop_assert_eq!(ml_detect(&y, &refs), ml_detect(&y2, &moved_refs));
    }

    #[test]
    fn error_probability_is_mirror_symmetric(
        a0 in -2.0..2.0f64,
        gap in 0.0..2.0f64,
        sigma in 0.01..1.0f64,
    ) {
        let a1 = a0 + gap;
        let lhs = theoretical_pe_bask(a0, a1, sigma);
        let rhs = theoretical_pe_bask(-a1, -a0, sigma);
        prop_assert!((lhs - rhs).abs() <= 1e-15 * lhs.max(1e-300));
        prop_assert!((0.0..=0.5).contains(&lhs));
    }

    #[test]
    fn thresholds_partition_the_line(
        mut refs in prop::collection::vec(-1.0..1.0f64, 2..6),
        y in -2.0..2.0f64,
    ) {
        refs.sort_by(f64::total_cmp);
        refs.dedup();
        prop_assume!(refs.len() >= 2);
        let ranges = OutputRanges::from_table(
            &SequenceOutputTable::from_outputs(refs.len(), 1, 1e-6, refs.clone()).unwrap(),
        );
        let th = ranges.thresholds().unwrap();
        for (t, w) in th.iter().zip(refs.windows(2)) {
            prop_assert_eq!(*t, 0.5 * (w[0] + w[1]));
        }
        let by_threshold = threshold_decision(y, &th);
        let by_distance = nearest_reference(y, &refs);
        let dl = (y - refs[by_threshold]).abs();
        let dr = (y - refs[by_distance]).abs();
        prop_assert!((dl - dr).abs() <= 1e-15);
    }
}
