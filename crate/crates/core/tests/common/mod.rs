#![allow(dead_code)]

use proptest::prelude::*;

use toda_brane::sigma_model::*;

/// Valid configurations with 3 to 5 factors, up to two scalars and one to
/// three branes, every brane containing the time factor.
pub fn config_strategy() -> impl Strategy<Value = BraneConfig> {
    (3usize..=5, 0usize..=2)
        .prop_flat_map(|(n, l)| {
            let dims = (2u32..=4, prop::collection::vec(1u32..=4, n - 2))
                .prop_map(|(d1, rest)| [vec![d1, 1], rest].concat());
            let h = prop::collection::vec(0.3f64..3.0, l);
            let brane = (
                prop::collection::vec(any::<bool>(), n - 2),
                any::<bool>(),
                prop::collection::vec(-1.5f64..1.5, l),
                prop::bool::ANY,
                0.2f64..3.0,
            );
            (Just(n), dims, h, prop::collection::vec(brane, 1..=3))
        })
        .prop_filter_map("invalid configuration", |(_, dims, h, specs)| {
            let l = h.len();
            let h_metric = (0..l).map(|a| (0..l).map(|b| if a == b { h[a] } else { 0.0 }).collect()).collect();
            let branes = specs
                .into_iter()
                .map(|(mask, electric, lambda, eps, q)| Brane {
                    color: "F".into(),
                    kind: if electric { BraneType::Electric } else { BraneType::Magnetic },
                    index_set: std::iter::once(2)
                        .chain(mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i + 3))
                        .collect(),
                    lambda,
                    epsilon: if eps { 1 } else { -1 },
                    charge: q,
                })
                .collect();
            BraneConfig::new(dims, h_metric, branes).ok()
        })
}

pub fn coupled() -> impl Strategy<Value = (BraneConfig, CouplingData)> {
    config_strategy().prop_filter_map("degenerate coupling", |c| scalar_products(&c).ok().map(|k| (c, k)))
}

pub fn seeded(cases: u32, salt: u64) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: proptest::test_runner::RngSeed::Fixed(toda_brane::seed_from_env(17) ^ salt),
        ..ProptestConfig::default()
    }
}
