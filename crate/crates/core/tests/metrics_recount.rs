use proptest::prelude::*;
use vidnav_core::eval::{mean_rank, median_rank, recall_at_k, Trajectory};

fn trajectories(rounds: usize) -> impl Strategy<Value = Vec<Trajectory>> {
    prop::collection::vec(prop::collection::vec(1usize..500, rounds + 1), 1..60).prop_map(|all| {
        all.into_iter()
            .enumerate()
            .map(|(i, ranks)| Trajectory {
                session_id: format!("s{i}"),
                query_text: String::new(),
                target_id: format!("v{i}"),
                seed: 0,
                ranks,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn metrics_match_recount(ts in trajectories(5), k in 1usize..600, round in 0usize..=5) {
        let column: Vec<usize> = ts.iter().map(|t| t.ranks[round]).collect();
        let mut hits = 0usize;
        let mut total = 0usize;
        for &r in &column {
            if r <= k {
                hits += 1;
            }
            total += r;
        }
        let n = column.len() as f64;
        prop_assert_eq!(recall_at_k(&ts, k, round).unwrap(), hits as f64 / n);
        prop_assert!((mean_rank(&ts, round).unwrap() - total as f64 / n).abs() < 1e-9);

        let mut sorted = column.clone();
        sorted.sort();
        let below = |m: f64| sorted.iter().filter(|&&r| (r as f64) < m).count();
        let above = |m: f64| sorted.iter().filter(|&&r| (r as f64) > m).count();
        let median = median_rank(&ts, round).unwrap();
        prop_assert!(below(median) <= sorted.len() / 2 && above(median) <= sorted.len() / 2);
    }

    #[test]
    fn recall_is_monotone_in_k(ts in trajectories(3), round in 0usize..=3) {
        let mut last = 0.0;
        for k in 1..=500 {
            let r = recall_at_k(&ts, k, round).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(r >= last);
            last = r;
        }
        prop_assert_eq!(last, 1.0);
    }
}
