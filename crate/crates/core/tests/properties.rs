use multicode::analysis::{self, db_to_linear};
use multicode::cdma::{self, stream_count_extremes};
use multicode::fdma::{self, verify_kkt};
use multicode::model::{canonicalize, order_users, CorrelationPair};
use multicode::sequences::{
    build_virtual_users, construct_sequences, logdet_sum_rate, logdet_sum_rate_full, verify_gram,
};
use multicode::{
    solve_cdma, CdmaInstance, FdmaConstants, SplitStrategy, UserClass, UserProfile,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

prop_compose! {
    fn fdma_case(max_users: usize)(
        users in prop::collection::vec((log_uniform(1e-3, 1e3), 0.02f64..0.8), 1..=max_users),
        w_tot in log_uniform(0.1, 10.0),
        n0 in log_uniform(1e-2, 10.0),
    ) -> (UserProfile, FdmaConstants) {
        let (powers, fracs): (Vec<f64>, Vec<f64>) = users.into_iter().unzip();
        let caps = fracs.iter().map(|f| f * w_tot).collect();
        (
            UserProfile::with_bandwidths(powers, caps).unwrap(),
            FdmaConstants::new(w_tot, n0).unwrap(),
        )
    }
}

prop_compose! {
    fn cdma_case(max_users: usize, max_gain: u32, max_codes: u32)(
        users in prop::collection::vec((log_uniform(1e-2, 1e2), 1..=max_codes), 1..=max_users),
        n in 1..=max_gain,
        sigma2 in log_uniform(0.1, 10.0),
    ) -> CdmaInstance {
        let (powers, codes) = users.into_iter().unzip();
        CdmaInstance::new(powers, codes, n, sigma2).unwrap()
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ordering_is_non_increasing((p, _) in fdma_case(12)) {
        let order = order_users(&p);
        prop_assert!(order.minimal_psds.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(p.permuted(&order).is_sorted());
    }

    #[test]
    fn classification_is_monotone((p, c) in fdma_case(12)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        let cl = &a.classification;
        prop_assert!(cl.is_monotone());
        prop_assert!(cl.k1 <= cl.k2 && cl.k2 <= p.num_users());
        for (k, l) in cl.labels.iter().enumerate() {
            prop_assert_eq!(l.is_oversized(), k < cl.k1);
            prop_assert_eq!(l.is_undersized(), k >= cl.k2);
        }
    }

    #[test]
    fn closed_form_matches_iterative((p, c) in fdma_case(12)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        let b = fdma::allocate_iterative(&p, &c).unwrap();
        prop_assert_eq!(&a.classification.labels, &b.classification.labels);
        for (x, y) in a.bandwidths.iter().zip(&b.bandwidths) {
            prop_assert!((x - y).abs() <= 1e-12 * c.total_bandwidth.max(1.0));
        }
    }

    #[test]
    fn boundary_forms_agree((p, c) in fdma_case(12)) {
        let (w1, w2) = fdma::closed_form_variants(&p, &c).unwrap();
        for (x, y) in w1.iter().zip(&w2) {
            prop_assert!((x - y).abs() <= 1e-12 * c.total_bandwidth.max(1.0));
        }
        let (r1, r2) = fdma::sum_rate_variants(&p, &c).unwrap();
        prop_assert!(rel_close(r1, r2, 1e-12));
    }

    #[test]
    fn allocation_is_feasible((p, c) in fdma_case(12)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        for (k, w) in a.bandwidths.iter().enumerate() {
            prop_assert!(*w >= 0.0 && *w <= p.limits.value(k) * (1.0 + 1e-12));
        }
        let used: f64 = a.bandwidths.iter().sum();
        let caps: f64 = (0..p.num_users()).map(|k| p.limits.value(k)).sum();
        let expected = if a.classification.k1 < p.num_users() { c.total_bandwidth } else { caps };
        prop_assert!(rel_close(used, expected, 1e-12));
        prop_assert!(used <= c.total_bandwidth * (1.0 + 1e-12));
    }

    #[test]
    fn psds_have_the_common_level_structure((p, c) in fdma_case(12)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        let psd: Vec<f64> = a.sorted_psds().into_iter().map(Option::unwrap).collect();
        prop_assert!(psd.windows(2).all(|x| x[1] <= x[0] * (1.0 + 1e-12)));
        for (x, l) in psd.iter().zip(&a.classification.labels) {
            if l.is_oversized() {
                prop_assert!(*x > a.common_psd);
            } else {
                prop_assert!((x - a.common_psd).abs() <= 1e-10 * a.common_psd);
            }
        }
    }

    #[test]
    fn caps_move_bandwidth_towards_weaker_users((p, c) in fdma_case(12)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        let total: f64 = p.powers.iter().sum();
        let share = |k: usize| c.total_bandwidth * p.powers[k] / total;
        let sorted = a.order.permutation.clone();
        let k1 = a.classification.k1;
        for &k in &sorted[k1..] {
            let w = a.bandwidths[k];
            prop_assert!(w >= share(k) * (1.0 - 1e-12));
            if k1 == 0 {
                prop_assert!(rel_close(w, share(k), 1e-12));
            }
        }
        if k1 > 0 {
            let got: f64 = sorted[..k1].iter().map(|&k| a.bandwidths[k]).sum();
            let due: f64 = sorted[..k1].iter().map(|&k| share(k)).sum();
            prop_assert!(got < due);
        }
    }

    #[test]
    fn capacity_gap_sign_and_condition((p, c) in fdma_case(12)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        let mac = fdma::mac_sum_capacity(&p.powers, &c);
        prop_assert!(a.sum_rate <= mac * (1.0 + 1e-12));
        let first = a.order.permutation[0];
        let total: f64 = p.powers.iter().sum();
        let fits = c.total_bandwidth * p.powers[first] / total
            <= p.limits.value(first) * (1.0 + fdma::CRITICAL_TOLERANCE);
        prop_assert_eq!(fits, a.classification.k1 == 0);
        if fits {
            prop_assert!(rel_close(a.sum_rate, mac, 1e-12));
        }
    }

    #[test]
    fn optimum_is_certified((p, c) in fdma_case(12)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        prop_assert!(verify_kkt(&p, &c, &a.bandwidths).unwrap().is_valid());
    }

    #[test]
    fn oracle_agrees((p, c) in fdma_case(10)) {
        let a = fdma::allocate_closed_form(&p, &c).unwrap();
        let w = fdma::oracle_solve(&p, &c, 1e-9).unwrap();
        let rate = fdma::fdma_sum_rate(&p, &c, &w).unwrap();
        prop_assert!((rate - a.sum_rate).abs() <= 1e-6);
    }

    #[test]
    fn multicode_classification_matches_equivalent_fdma(inst in cdma_case(12, 64, 8)) {
        let sol = solve_cdma(&inst, SplitStrategy::default()).unwrap();
        let a = fdma::allocate_closed_form(&inst.fdma_profile(), &inst.constants.equivalent_fdma()).unwrap();
        prop_assert_eq!(&sol.classification.labels, &a.classification.labels);
        prop_assert_eq!(sol.sum_rate, a.sum_rate);
        let (r1, r2) = cdma::sum_rate_forms(&inst).unwrap();
        prop_assert!(rel_close(r1, r2, 1e-12));
        prop_assert!(rel_close(r1, sol.sum_rate, 1e-12));
    }

    #[test]
    fn both_splits_are_members(inst in cdma_case(12, 64, 8)) {
        let half_chip = 0.5 / f64::from(inst.processing_gain());
        let equal = solve_cdma(&inst, SplitStrategy::EqualPower).unwrap();
        let packed = solve_cdma(&inst, SplitStrategy::MinCountMaxOrthogonal).unwrap();
        prop_assert_eq!(equal.sum_rate, packed.sum_rate);
        for sol in [&equal, &packed] {
            let labels = sol.labels();
            for (k, label) in labels.iter().enumerate() {
                let w = &sol.streams.bandwidths[k];
                let p = &sol.streams.powers[k];
                prop_assert_eq!(w.len(), inst.code_limits[k] as usize);
                prop_assert!(w.iter().all(|x| *x >= 0.0 && *x <= half_chip * (1.0 + 1e-12)));
                prop_assert!(p.iter().all(|x| *x >= 0.0));
                prop_assert!(rel_close(w.iter().sum(), sol.bandwidths[k], 1e-12));
                prop_assert!(rel_close(p.iter().sum(), inst.powers[k], 1e-12));
                prop_assert!(sol.streams.active[k] <= inst.code_limits[k]);
                let even = inst.powers[k] / f64::from(inst.code_limits[k]);
                if !label.is_undersized() {
                    // either power branch gives the same split
                    for (pl, wl) in p.iter().zip(w) {
                        prop_assert!(rel_close(*pl, even, 1e-12));
                        prop_assert!(rel_close(*pl, wl / sol.bandwidths[k] * inst.powers[k], 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn stream_count_extremes_differ_by_at_most_one(inst in cdma_case(12, 64, 8)) {
        let sol = solve_cdma(&inst, SplitStrategy::MinCountMaxOrthogonal).unwrap();
        let counts = stream_count_extremes(&inst).unwrap();
        prop_assert_eq!(&counts.max_orthogonal, &sol.streams.orthogonal);
        prop_assert_eq!(&counts.min_active, &sol.streams.active);
        for (k, l) in sol.labels().iter().enumerate() {
            let d = counts.min_active[k] - counts.max_orthogonal[k];
            if l.is_undersized() {
                prop_assert!(d <= 1);
            } else {
                prop_assert_eq!(d, 0);
                prop_assert_eq!(counts.min_active[k], inst.code_limits[k]);
            }
        }
        let shared: u32 = sol.streams.active.iter().zip(&sol.streams.orthogonal).map(|(a, o)| a - o).sum();
        prop_assert!(shared as usize <= inst.num_users() - sol.classification.k2);
    }

    #[test]
    fn capacity_condition_is_exact(inst in cdma_case(12, 64, 8)) {
        let sol = solve_cdma(&inst, SplitStrategy::default()).unwrap();
        let reached = (sol.sum_rate - cdma::mac_capacity(&inst)).abs() <= 1e-12;
        prop_assert_eq!(cdma::achieves_mac_capacity(&inst).unwrap(), reached);
    }

    #[test]
    fn minimal_profile_reaches_capacity(
        powers in prop::collection::vec(log_uniform(1e-2, 1e2), 1..20),
        n in 1u32..128,
    ) {
        let m = cdma::minimal_upper_limit_profile(&powers, n).unwrap();
        prop_assert!((m.iter().sum::<u32>() as usize) < n as usize + powers.len());
        let inst = CdmaInstance::new(powers, m, n, 1.0).unwrap();
        prop_assert!(cdma::achieves_mac_capacity(&inst).unwrap());
    }

    #[test]
    fn symmetric_rate_grows_then_saturates(k in 1u32..40, n in 1u32..64, snr in log_uniform(0.1, 100.0)) {
        let rate = |n_bar: u32| {
            let inst = CdmaInstance::new(vec![snr; k as usize], vec![n_bar; k as usize], n, 1.0).unwrap();
            solve_cdma(&inst, SplitStrategy::default()).unwrap().sum_rate
        };
        let mut last = 0.0;
        for n_bar in 1..=n.max(2) {
            let r = rate(n_bar);
            prop_assert!(r >= last * (1.0 - 1e-12));
            if n_bar * k >= n {
                prop_assert!(rel_close(r, rate(n), 1e-12));
            }
            last = r;
        }
    }

    #[test]
    fn virtual_labels_match_full_width_streams(inst in cdma_case(6, 16, 4), seed in any::<u64>()) {
        let half_chip = 0.5 / f64::from(inst.processing_gain());
        for strategy in [SplitStrategy::EqualPower, SplitStrategy::MinCountMaxOrthogonal] {
            let sol = solve_cdma(&inst, strategy).unwrap();
            let vset = build_virtual_users(&sol, &inst.constants).unwrap();
            for (e, v) in vset.entries.iter().enumerate() {
                let full = rel_close(v.bandwidth, half_chip, 1e-9);
                prop_assert_eq!(full, vset.is_orthogonal(e));
                prop_assert_eq!(!v.label.is_undersized(), full);
            }
            for (k, n_perp) in sol.streams.orthogonal.iter().enumerate() {
                let count = vset.orthogonal.iter().filter(|&&e| vset.entries[e].user == k).count();
                prop_assert_eq!(count, *n_perp as usize);
            }

            let s = construct_sequences(&vset, seed).unwrap();
            prop_assert!(verify_gram(&s, &vset).unwrap().passes());
            let n = f64::from(inst.processing_gain());
            for v in vset.entries.iter().filter(|v| v.label == UserClass::CriticallySized) {
                let col = s.matrix.column(v.column);
                for other in vset.entries.iter().filter(|o| o.column != v.column) {
                    let dot = col.dot(&s.matrix.column(other.column));
                    prop_assert!(dot.abs() <= 1e-8 * n);
                }
            }
        }
    }

    #[test]
    fn logdet_is_rotation_invariant(inst in cdma_case(6, 16, 4), seed in any::<u64>()) {
        let sol = solve_cdma(&inst, SplitStrategy::EqualPower).unwrap();
        let vset = build_virtual_users(&sol, &inst.constants).unwrap();
        let s = construct_sequences(&vset, seed).unwrap();
        let sigma2 = inst.noise_variance();
        let base = logdet_sum_rate(&s.matrix, &s.powers, sigma2).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = s.matrix.ncols();
        let mut v = DMatrix::<f64>::zeros(cols, cols);
        let mut start = 0;
        for &m in &inst.code_limits {
            let m = m as usize;
            let g = DMatrix::<f64>::from_fn(m, m, |_, _| rng.sample(StandardNormal));
            v.view_mut((start, start), (m, m)).copy_from(&g.qr().q());
            start += m;
        }
        let p = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.powers.clone()));
        let rotated_s = &s.matrix * v.transpose();
        let rotated_p = &v * p * v.transpose();
        let rate = logdet_sum_rate_full(&rotated_s, &rotated_p, sigma2).unwrap();
        prop_assert!((rate - base).abs() <= 1e-10 * base.max(1.0));
        prop_assert!((base - sol.sum_rate).abs() <= 1e-9);
    }

    #[test]
    fn canonicalize_preserves_correlation(
        sizes in prop::collection::vec(1usize..=3, 1..=4),
        n in 1usize..=8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |r: usize, c: usize| DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal));
        let cols: usize = sizes.iter().sum();
        let seq = gauss(n, cols);
        let blocks: Vec<DMatrix<f64>> = sizes
            .iter()
            .map(|&m| {
                let a = gauss(m, m);
                let b = &a * a.transpose();
                (&b + b.transpose()) * 0.5
            })
            .collect();
        let mut powers = Vec::new();
        let mut start = 0;
        for b in &blocks {
            let s = seq.columns(start, b.nrows());
            powers.push((s * b * s.transpose()).trace() / n as f64);
            start += b.nrows();
        }
        let pair = CorrelationPair::new(blocks, seq, powers).unwrap();
        let out = canonicalize(&pair).unwrap();
        prop_assert!(out.is_diagonal());
        prop_assert!((out.signal_correlation() - pair.signal_correlation()).norm() <= 1e-10 * pair.signal_correlation().norm().max(1.0));
        for col in out.sequences.column_iter() {
            prop_assert!((col.norm_squared() - n as f64).abs() <= 1e-10 * n as f64);
        }
    }

    #[test]
    fn efficiency_back_substitutes(db in -1.5f64..30.0) {
        let e = db_to_linear(db);
        let c = analysis::single_user_efficiency(e).unwrap();
        prop_assert!((c - 0.5 * (1.0 + 2.0 * c * e).log2()).abs() <= 1e-12);
    }

    #[test]
    fn symmetric_efficiency_is_monotone(a in 0.0f64..4.0, b in 0.0f64..4.0, db in -1.0f64..20.0) {
        let e = db_to_linear(db);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let f = |x| analysis::symmetric_efficiency(x, e).unwrap();
        prop_assert!(f(lo) <= f(hi));
        if lo >= 1.0 {
            prop_assert_eq!(f(lo), f(hi));
        }
    }
}
