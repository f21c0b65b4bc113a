use proptest::prelude::*;
use rectenna::modem::*;
use rectenna::rectifier::CircuitParams;

proptest! {
    #[test]
    fn built_constellations_hit_the_target_power(
        log_m in 1u32..5,
        a_min in 0.3..1.0f64,
        extra in 0.01..2.0f64,
    ) {
        let m = 1usize << log_m;
        let target = a_min * a_min / 2.0 * (1.0 + extra);
        let c = build_constellation(m, a_min, target).unwrap();
        prop_assert!((average_symbol_power(&c) - target).abs() <= 1e-12 * target.max(1.0));
        let a = c.amplitudes();
        prop_assert_eq!(a[0], a_min);
        let d = a[1] - a[0];
        prop_assert!(d > 0.0);
        for w in a.windows(2) {
            prop_assert!((w[1] - w[0] - d).abs() <= 1e-12);
        }
    }

    #[test]
    fn adjacent_labels_differ_in_one_bit(log_m in 1u32..7) {
        let m = 1usize << log_m;
        let c = Constellation::new((1..=m).map(|k| k as f64).collect()).unwrap();
        for k in 0..m - 1 {
            prop_assert_eq!((c.label(k) ^ c.label(k + 1)).count_ones(), 1);
        }
        let bits: Vec<u8> = (0..m).flat_map(|k| {
            let mut out = Vec::new();
            c.push_bits(k, &mut out);
            out
        }).collect();
        prop_assert_eq!(bits_to_symbols(&bits, &c).unwrap(), (0..m).collect::<Vec<_>>());
    }

    #[test]
    fn noise_sigma_inverts_to_eb_n0(
        p_av in 0.01..2.0f64,
        db in -5.0..20.0f64,
        bits in 1usize..5,
    ) {
        let eb_n0 = db_to_linear(db);
        let sigma = noise_sigma(p_av, eb_n0, bits);
        let recovered = p_av / (2.0 * bits as f64 * sigma * sigma);
        prop_assert!((recovered / eb_n0 - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn concatenated_block_equals_continuation(
        syms in prop::collection::vec(0usize..2, 2..5),
        split in 1usize..4,
    ) {
        let p = CircuitParams::default();
        let amps: Vec<f64> = syms.iter().map(|&s| [0.5, 1.0][s]).collect();
        let split = split.min(amps.len() - 1);
        let ts = 2e-7;
        let cfg = LinkConfig::new(ts, amps.len(), 1);
        let whole = transmit_block(&amps, &cfg, &p).unwrap();
        let head = sample_symbol_ends(&p, &amps[..split], ts, 0.0, 0.0).unwrap();
        let tail = sample_symbol_ends(
            &p,
            &amps[split..],
            ts,
            *head.last().unwrap(),
            split as f64 * ts,
        )
        .unwrap();
        for (a, b) in whole.iter().zip(head.iter().chain(&tail)) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}
