use famsplit::ablation::{ablation_report, ranking, Strategy as Rank};
use famsplit::eval::{surrogate_recall_idx, validate_benchmark, Aggregation};
use famsplit::manifest::SamplePool;
use famsplit::matrix::{save_matrix, load_matrix, synth_matrix, CrossErrorMatrix, SynthParams};
use famsplit::search::{candidate_pairs, generate_benchmark, search_split, Difficulty, SearchConfig};
use famsplit::stats::wilcoxon_exact;
use proptest::prelude::*;

mod common;

fn matrix_strategy(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = CrossErrorMatrix> {
    k.prop_flat_map(|k| {
        proptest::collection::vec(proptest::collection::vec(0u32..=1_000_000, k), k).prop_map(move |rows| {
            let rows = rows
                .into_iter()
                .map(|r| r.into_iter().map(|x| x as f64 / 1e6).collect())
                .collect();
            CrossErrorMatrix::new((0..k).map(|i| format!("f{i}")).collect(), rows).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_byte_stable(m in matrix_strategy(2..=9)) {
        let text = m.to_csv();
        let back = CrossErrorMatrix::from_csv(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn split_invariants_hold(m in matrix_strategy(6..=12), tau_ix in 0usize..3, seed in any::<u64>()) {
        let tau = [0.9, 0.5, 0.25][tau_ix];
        let cfg = SearchConfig { set_size: 3, ..SearchConfig::new(tau, seed) };
        let s = search_split(&m, &cfg).unwrap();
        prop_assert_eq!(s.train_families.len(), 3);
        prop_assert_eq!(s.test_families.len(), 3);
        prop_assert!(s.is_disjoint());
        prop_assert!(s.max_deviation(&m).unwrap() <= s.epsilon_final);
        prop_assert_eq!(s.epsilon_final, cfg.epsilon_at(s.relaxations));
        prop_assert_eq!(search_split(&m, &cfg).unwrap(), s);
    }

    #[test]
    fn validated_splits_stay_in_band(m in matrix_strategy(8..=12), seed in any::<u64>()) {
        let cfg = SearchConfig { set_size: 2, ..SearchConfig::new(0.5, seed) };
        let bench = generate_benchmark(&m, &cfg, 3, "x").unwrap();
        for agg in Aggregation::ALL {
            prop_assert_eq!(validate_benchmark(&m, &bench, agg).unwrap().flag_count, 0);
        }
    }

    #[test]
    fn aggregations_are_ordered(m in matrix_strategy(3..=8), pick in proptest::collection::vec(any::<prop::sample::Index>(), 1..5), target in any::<prop::sample::Index>()) {
        let trained: Vec<usize> = pick.iter().map(|i| i.index(m.k())).collect();
        let v = target.index(m.k());
        let lo = surrogate_recall_idx(&m, &trained, v, Aggregation::Min).unwrap();
        let mid = surrogate_recall_idx(&m, &trained, v, Aggregation::Mean).unwrap();
        let hi = surrogate_recall_idx(&m, &trained, v, Aggregation::Max).unwrap();
        prop_assert!(lo <= mid && mid <= hi);
    }

    #[test]
    fn max_aggregation_is_monotone(m in matrix_strategy(3..=8), extra in any::<prop::sample::Index>()) {
        let base = vec![m.family(0).to_string()];
        let mut grown = base.clone();
        let add = m.family(extra.index(m.k())).to_string();
        if !grown.contains(&add) { grown.push(add); }
        let a = ablation_report(&m, &base, Aggregation::Max).unwrap();
        let b = ablation_report(&m, &grown, Aggregation::Max).unwrap();
        for (f, x) in &a.per_family_recall {
            prop_assert!(b.per_family_recall[f] >= *x);
        }
    }

    #[test]
    fn rankings_match_brute_force_sort(m in matrix_strategy(2..=10)) {
        let means: Vec<f64> = (0..m.k()).map(|t| {
            let s: f64 = (0..m.k()).filter(|&v| v != t).map(|v| m.get(t, v)).sum();
            s / (m.k() - 1) as f64
        }).collect();
        let top = ranking(&m, Rank::Top);
        let worst = ranking(&m, Rank::Worst);
        let mut sorted = top.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..m.k()).collect::<Vec<_>>());
        for w in top.windows(2) {
            prop_assert!(means[w[0]] >= means[w[1]] - 1e-12);
        }
        for w in worst.windows(2) {
            prop_assert!(means[w[0]] <= means[w[1]] + 1e-12);
        }
    }

    #[test]
    fn wilcoxon_swap_and_scale(d in proptest::collection::vec(-20i32..=20, 1..12), k in 1u32..8) {
        prop_assume!(d.iter().any(|&x| x != 0));
        let a: Vec<f64> = d.iter().map(|&x| x as f64).collect();
        let b = vec![0.0; a.len()];
        let r = wilcoxon_exact(&a, &b).unwrap();
        let swapped = wilcoxon_exact(&b, &a).unwrap();
        prop_assert_eq!(r.p_two_sided, swapped.p_two_sided);
        prop_assert_eq!(r.p_one_sided, swapped.p_one_sided);
        prop_assert!(r.n_effective == 0 || r.w_plus == swapped.w_minus);
        if r.w_plus != r.w_minus {
            prop_assert_ne!(r.direction, swapped.direction);
        }
        let scaled: Vec<f64> = a.iter().map(|x| x * k as f64 + 0.0).collect();
        let shifted_b: Vec<f64> = b.iter().map(|x| x * k as f64).collect();
        let s = wilcoxon_exact(&scaled, &shifted_b).unwrap();
        prop_assert_eq!(s.p_two_sided, r.p_two_sided);
        prop_assert!(r.p_two_sided > 0.0 && r.p_two_sided <= 1.0);
        let n = r.n_effective as f64;
        prop_assert!(r.w_statistic <= n * (n + 1.0) / 2.0);
    }

    #[test]
    fn pool_text_round_trips(per_family in 1usize..5, train in 0usize..5, test in 0usize..5, seed in any::<u64>()) {
        let pool = SamplePool::synthetic(&["x", "y"], per_family, train, test, seed);
        prop_assert_eq!(SamplePool::parse(&pool.to_text()).unwrap(), pool);
    }
    #[test]
    fn wilcoxon_matches_sign_flip_enumeration(d in proptest::collection::vec(-6i32..=6, 1..=10)) {
        prop_assume!(d.iter().any(|&x| x != 0));
        let a: Vec<f64> = d.iter().map(|&x| x as f64 / 8.0).collect();
        let r = wilcoxon_exact(&a, &vec![0.0; a.len()]).unwrap();
        let (one, two) = common::brute_force_p(&a);
        prop_assert_eq!(r.p_one_sided, one);
        prop_assert_eq!(r.p_two_sided, two);
    }

    #[test]
    fn constant_off_diagonal_row_mean(k in 2usize..12, c in 0u32..=100) {
        let c = c as f64 / 100.0;
        let rows = (0..k).map(|t| (0..k).map(|v| if t == v { 1.0 } else { c }).collect()).collect();
        let m = CrossErrorMatrix::new((0..k).map(|i| format!("f{i}")).collect(), rows).unwrap();
        for t in 0..k {
            prop_assert!((m.row_mean_recall(t, false).unwrap() - c).abs() < 1e-12);
        }
    }
}

#[test]
fn loner_rows_generalize_worst() {
    let p = SynthParams::default();
    let (m, f) = famsplit::matrix::synth_matrix_with_factors(&p).unwrap();
    assert_eq!(f.loners.len(), p.loner_count());
    let means = m.off_diagonal_row_means();
    let loner_max = f.loners.iter().map(|&t| means[t]).fold(f64::MIN, f64::max);
    let other_min = (0..m.k())
        .filter(|t| !f.loners.contains(t))
        .map(|t| means[t])
        .fold(f64::MAX, f64::min);
    assert!(loner_max < other_min, "{loner_max} vs {other_min}");
}

#[test]
fn synthetic_diagonal_respects_floor() {
    let m = synth_matrix(&SynthParams::default()).unwrap();
    assert!((0..m.k()).all(|t| m.get(t, t) >= 0.99));
}

#[test]
fn default_matrix_has_candidates_for_every_tier() {
    let m = synth_matrix(&SynthParams::default()).unwrap();
    for d in Difficulty::ALL {
        assert!(!candidate_pairs(&m, d.tau(), None, 0.05).is_empty(), "{}", d.label());
    }
}

#[test]
fn real_family_names_load() {
    let m = synth_matrix(&SynthParams::default()).unwrap();
    let mut names = m.families().to_vec();
    names[0] = "allaple".into();
    names[1] = "zbot".into();
    names[2] = "virlock".into();
    let rows = (0..m.k()).map(|t| m.row(t).to_vec()).collect();
    let named = CrossErrorMatrix::new(names, rows).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    save_matrix(&named, &path).unwrap();
    let back = load_matrix(&path).unwrap();
    assert_eq!(back.k(), 184);
    assert_eq!(back.index_of("zbot").unwrap(), 1);
}

#[test]
fn synthetic_matrix_bytes_are_reproducible() {
    let a = synth_matrix(&SynthParams::default()).unwrap().to_csv();
    let b = synth_matrix(&SynthParams::default()).unwrap().to_csv();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 185);
}
