use ifdiv::latmodel::{InterfaceModel, LatencyCdf};
use ifdiv::strategy::{
    cloning_cdf, k_of_n_strategy, outcome_probability, outcome_table, weighted_cdf, CopyGroup,
    DecodeParams, GroupKind, Strategy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn arb_interface() -> impl Strategy2<Value = InterfaceModel> {
    (0.001f64..1.0, 1.0f64..800.0, 0.5f64..1.0)
        .prop_map(|(a, b, av)| InterfaceModel::new("i", a, b, av).unwrap())
}

use proptest::strategy::Strategy as Strategy2;

proptest! {
    #[test]
    fn outcome_probabilities_sum_to_one(probs in prop::collection::vec(0.0f64..=1.0, 1..=6)) {
        let table = outcome_table(probs.len()).unwrap();
        let total: f64 = table.rows().map(|h| outcome_probability(h, &probs)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn outcome_probabilities_sum_to_one_for_random_split(
        ifs in prop::collection::vec(arb_interface(), 1..=6),
        raw in prop::collection::vec(0.0f64..1.0, 6),
        x in 0.0f64..2000.0,
    ) {
        let p = DecodeParams::default();
        let n = ifs.len();
        let gammas: Vec<f64> = raw[..n].iter().map(|g| g * p.gamma_d).collect();
        let loads = Strategy::weighted("w", &gammas).interface_loads(n);
        let probs: Vec<f64> = ifs.iter().zip(&loads).map(|(m, &l)| m.cdf(x, l * 1500.0)).collect();
        let table = outcome_table(n).unwrap();
        let total: f64 = table.rows().map(|h| outcome_probability(h, &probs)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn two_of_three_matches_closed_form(
        m in arb_interface(),
        x in 0.0f64..3000.0,
        bytes in 10.0f64..5000.0,
    ) {
        let p = DecodeParams::default();
        let ifs = vec![m.clone(), m.clone(), m.clone()];
        let s = k_of_n_strategy(2, 3, &p).unwrap();
        let f = m.cdf(x, bytes * p.gamma_d / 2.0);
        let closed = 3.0 * f * f * (1.0 - f) + f * f * f;
        let got = weighted_cdf(&ifs, &s, x, bytes, &p).unwrap();
        prop_assert!((got - closed).abs() <= 1e-12, "{} vs {}", got, closed);
    }

    #[test]
    fn cloning_equals_replica_groups(
        ifs in prop::collection::vec(arb_interface(), 1..=5),
        x in 0.0f64..3000.0,
    ) {
        let p = DecodeParams::default();
        let s = Strategy::cloning(ifs.len());
        let via_table = weighted_cdf(&ifs, &s, x, 1500.0, &p).unwrap();
        prop_assert!((via_table - cloning_cdf(&ifs, x, 1500.0)).abs() <= 1e-12);
    }

    #[test]
    fn extra_interface_never_lowers_cloning(
        ifs in prop::collection::vec(arb_interface(), 1..=4),
        extra in arb_interface(),
        x in 0.0f64..3000.0,
    ) {
        let before = cloning_cdf(&ifs, x, 1500.0);
        let mut more = ifs.clone();
        more.push(extra);
        prop_assert!(cloning_cdf(&more, x, 1500.0) >= before - 1e-15);
    }

    #[test]
    fn reliability_bounded_by_cloning(
        ifs in prop::collection::vec(arb_interface(), 2..=4),
        k in 1usize..=4,
        x in 0.0f64..3000.0,
    ) {
        // a fragment is never slower than the full copy on the same interface
        let p = DecodeParams::default();
        let k = k.min(ifs.len());
        let s = k_of_n_strategy(k, ifs.len(), &p).unwrap();
        let w = weighted_cdf(&ifs, &s, x, 1500.0, &p).unwrap();
        let ceiling = 1.0 - ifs.iter().map(|m| 1.0 - m.availability()).product::<f64>();
        prop_assert!(w <= ceiling + 1e-12);
    }
}

/// Decode predicate written independently of the library.
fn oracle_decodes(groups: &[CopyGroup], arrived: &[bool], gamma_d: f64) -> bool {
    groups.iter().any(|g| {
        let got: f64 = g
            .assignments
            .iter()
            .filter(|a| arrived[a.0])
            .map(|a| a.1)
            .sum();
        match g.kind {
            GroupKind::Replica => got >= 1.0,
            GroupKind::RawSplit => got >= 1.0 - 1e-9,
            GroupKind::Coded => got >= gamma_d - 1e-9,
        }
    })
}

fn random_strategy(rng: &mut ChaCha8Rng, n: usize, p: &DecodeParams) -> Strategy {
    let mut groups = Vec::new();
    match rng.random_range(0..3) {
        0 => {
            let gammas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=p.gamma_d)).collect();
            groups.push(CopyGroup::coded(gammas.into_iter().enumerate().collect()));
        }
        1 => {
            let r = rng.random_range(0..n);
            groups.push(CopyGroup::replica(r));
            let rest: Vec<(usize, f64)> = (0..n)
                .filter(|&i| i != r)
                .map(|i| (i, rng.random_range(0.2..=p.gamma_d)))
                .collect();
            if !rest.is_empty() {
                groups.push(CopyGroup::coded(rest));
            }
        }
        _ => {
            let k = rng.random_range(1..=n);
            groups = k_of_n_strategy(k, n, p).unwrap().groups;
        }
    }
    Strategy::new("random", groups)
}

#[test]
fn weighted_cdf_matches_monte_carlo() {
    let p = DecodeParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 1_000_000u32;
    let bytes = 1500.0;
    for case in 0..20 {
        let n = rng.random_range(1..=4);
        let ifs: Vec<InterfaceModel> = (0..n)
            .map(|_| {
                InterfaceModel::new(
                    "i",
                    rng.random_range(0.01..0.6),
                    rng.random_range(10.0..500.0),
                    rng.random_range(0.8..1.0),
                )
                .unwrap()
            })
            .collect();
        let s = random_strategy(&mut rng, n, &p);
        let loads = s.interface_loads(n);
        let x = rng.random_range(50.0..900.0);
        let expected = weighted_cdf(&ifs, &s, x, bytes, &p).unwrap();
        let mut hits = 0u32;
        let mut arrived = vec![false; n];
        for _ in 0..draws {
            for (i, m) in ifs.iter().enumerate() {
                let up = rng.random::<f64>() < m.availability;
                let z: f64 = rng.sample(StandardNormal);
                let b = loads[i] * bytes;
                let t = (m.mean_latency(b) + m.sigma(b) * z).max(0.0);
                arrived[i] = up && loads[i] > 0.0 && t <= x;
            }
            if oracle_decodes(&s.groups, &arrived, p.gamma_d) {
                hits += 1;
            }
        }
        let est = hits as f64 / draws as f64;
        let se = (expected * (1.0 - expected) / draws as f64).sqrt();
        assert!(
            (est - expected).abs() <= 3.0 * se + 1e-12,
            "case {case}: MC {est} vs analytic {expected} (3 sigma = {})",
            3.0 * se
        );
    }
}
