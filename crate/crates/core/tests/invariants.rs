use corrkit_core::characterize::{collect_clicks, count_transmissions, naive_counts, CountMode};
use corrkit_core::crosscycle::{
    coincidence_oracle, cross_cycle_coincidences, naive_cross_cycle, slot_groups, BlockConfig, BsmPatternTable, MdiSymbol,
    Target,
};
use corrkit_core::model::{decode_pattern, encode_pattern};
use corrkit_core::photon::{click_probability, invert_click_rate, AfterPulseModel};
use corrkit_core::security::lp::{solve, Constraint, ConstraintFamily, LinearProgram, Relation};
use corrkit_core::sim::{simulate_bb84_repeated, CorrelationModel, DetectionEvent, RepeatedRun};
use proptest::prelude::*;

fn sorted_events(raw: Vec<(u64, u32, u8)>) -> Vec<DetectionEvent> {
    let mut e: Vec<DetectionEvent> = raw.into_iter().map(|(c, s, d)| DetectionEvent::new(c, s, d)).collect();
    e.sort();
    e.dedup();
    e
}

proptest! {
    #[test]
    fn pattern_codes_round_trip(p in 2usize..6, labels in prop::collection::vec(0usize..6, 1..5)) {
        let labels: Vec<usize> = labels.into_iter().map(|l| l % p).collect();
        let idx = encode_pattern(&labels, p).unwrap();
        prop_assert_eq!(decode_pattern(idx, p, labels.len()).unwrap(), labels);
    }

    #[test]
    fn streaming_counts_match_naive(
        seq in prop::collection::vec(0usize..4, 3..40),
        k in 1usize..4,
        r in 1u64..6,
        raw in prop::collection::vec((0u64..6, 0u32..40, 0u8..1), 0..80),
    ) {
        prop_assume!(seq.len() >= k);
        let n = seq.len() as u32;
        let events = sorted_events(raw.into_iter().filter(|e| e.0 < r && e.1 < n).collect());
        let tx = count_transmissions(&seq, 4, k, r, CountMode::Exact).unwrap();
        let counted = collect_clicks(&seq, &events, &tx).unwrap();
        let (t, c) = naive_counts(&seq, 4, k, r, &events).unwrap();
        prop_assert_eq!(&counted.t, &t);
        prop_assert_eq!(&counted.c, &c);
        prop_assert_eq!(t.iter().sum::<u64>(), r * seq.len() as u64 - (k as u64 - 1));
    }

    #[test]
    fn circular_mode_counts_every_window(seq in prop::collection::vec(0usize..4, 3..40), r in 1u64..6) {
        let c = count_transmissions(&seq, 4, 2, r, CountMode::Circular).unwrap();
        prop_assert_eq!(c.g.iter().sum::<u64>(), seq.len() as u64);
        prop_assert!(c.t.iter().zip(&c.g).all(|(t, g)| *t == g * r));
    }

    #[test]
    fn cross_cycle_matches_double_loop(
        len in 4usize..24,
        sym_seed in prop::collection::vec((0u8..8, 0u8..8), 24),
        raw in prop::collection::vec((0u64..12, 0u32..24, 0u8..4), 0..150),
        n_b in 2u64..6,
    ) {
        let a: Vec<MdiSymbol> = sym_seed[..len].iter().map(|s| MdiSymbol::new(s.0).unwrap()).collect();
        let b: Vec<MdiSymbol> = sym_seed[..len].iter().map(|s| MdiSymbol::new(s.1).unwrap()).collect();
        let groups = slot_groups(&a, &b, 2, Target::Alice).unwrap();
        let blocks = 12 / n_b;
        let events = sorted_events(raw.into_iter().filter(|e| (e.1 as usize) < len).collect());
        let block = BlockConfig::new(n_b, blocks).unwrap();
        let table = BsmPatternTable::default();
        let fast = cross_cycle_coincidences(&events, &groups, &table, block).unwrap();
        prop_assert_eq!(fast.per_block, naive_cross_cycle(&events, &groups, &table, block));
    }

    #[test]
    fn oracle_is_n_squared_d_squared(n_b in 1u64..30, d in 0.0f64..1.0) {
        let v = coincidence_oracle(n_b, d).unwrap();
        let want = (n_b as f64 * d).powi(2);
        prop_assert!((v - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn click_inversion_round_trips(eta in 1e-4f64..1.0, m in 1e-4f64..2.0, q in 0.0f64..0.1) {
        let rate = (1.0 + q) * click_probability(eta, m).unwrap();
        prop_assume!(rate / (1.0 + q) < 1.0 - 1e-9);
        let back = invert_click_rate(rate, eta, AfterPulseModel::new(q, 5).unwrap()).unwrap();
        prop_assert!((back - m).abs() <= 1e-9 * m.max(1.0));
    }

    #[test]
    fn simulation_ignores_shard_count(seed in any::<u64>(), shards in 1usize..9) {
        let seq: Vec<usize> = (0..37).map(|i| (i * 7 + 3) % 4).collect();
        let model = CorrelationModel::uncorrelated(4, 2).unwrap().with_epsilon(&[3], 1, 0.05).unwrap();
        let nominal = [0.01, 0.3, 0.9, 2.3];
        let run = |shards| RepeatedRun { sequence: &seq, model: &model, nominal: &nominal, cycles: 13, eta: 0.5, dark_rate: 1e-3, seed, shards };
        let one = simulate_bb84_repeated(&run(1)).unwrap();
        let many = simulate_bb84_repeated(&run(shards)).unwrap();
        prop_assert_eq!(one.events, many.events);
    }

    /// Random bounded LPs with the origin feasible: the optimum is feasible
    /// and no worse than any sampled feasible point.
    #[test]
    fn lp_optimum_dominates_feasible_samples(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..6),
        rhs in prop::collection::vec(0.0f64..2.0, 6),
        obj in prop::collection::vec(-1.0f64..1.0, 3),
        samples in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 20),
    ) {
        let mut constraints: Vec<Constraint> = rows
            .iter()
            .zip(&rhs)
            .map(|(c, &b)| Constraint { coeffs: c.clone(), relation: Relation::Le, rhs: b, family: ConstraintFamily::GainLower })
            .collect();
        for v in 0..3 {
            let mut c = vec![0.0; 3];
            c[v] = 1.0;
            constraints.push(Constraint { coeffs: c, relation: Relation::Le, rhs: 1.0, family: ConstraintFamily::Box });
        }
        let lp = LinearProgram { n_vars: 3, objective: obj.clone(), maximize: true, constraints };
        let sol = solve(&lp).unwrap();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        for con in &lp.constraints {
            prop_assert!(dot(&con.coeffs, &sol.x) <= con.rhs + 1e-9);
        }
        prop_assert!(sol.x.iter().all(|&x| x >= -1e-9));
        for s in &samples {
            if lp.constraints.iter().all(|c| dot(&c.coeffs, s) <= c.rhs) {
                prop_assert!(dot(&obj, s) <= sol.objective + 1e-9);
            }
        }
    }
}
