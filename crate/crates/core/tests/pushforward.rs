use std::collections::BTreeMap;

use proptest::prelude::*;

use lmtp::data::HistoryView;
use lmtp::policy::{analytic_shifted_density, BaseDensity, PolicyRule, UpperBound};
use lmtp::Policy;

fn pmf_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec(0.0f64..1.0, 2..8).prop_map(|raw| {
        let total: f64 = raw.iter().sum::<f64>() + 1e-9;
        raw.iter()
            .enumerate()
            .map(|(k, p)| (k as f64, (p + 1e-9 / raw.len() as f64) / total))
            .collect()
    })
}

fn rule_strategy() -> impl Strategy<Value = PolicyRule> {
    prop_oneof![
        Just(PolicyRule::Identity {}),
        (0.0f64..4.0).prop_map(|threshold| PolicyRule::ClampedDecrement {
            threshold: threshold.round()
        }),
        (1u8..3, 3u8..8).prop_map(|(d, u)| PolicyRule::AdditiveShift {
            delta: f64::from(d),
            upper_bound: Some(UpperBound::Constant(f64::from(u))),
        }),
        (0u8..6).prop_map(|l| PolicyRule::Threshold {
            level: f64::from(l)
        }),
        prop::collection::vec(0u8..8, 8).prop_map(|images| PolicyRule::DiscreteMap {
            map: images
                .iter()
                .enumerate()
                .map(|(k, v)| (k.to_string(), f64::from(*v)))
                .collect::<BTreeMap<_, _>>(),
        }),
        (1u8..4).prop_map(|f| PolicyRule::MultiplicativeShift {
            factor: f64::from(f)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pushforward_conserves_mass(pmf in pmf_strategy(), rule in rule_strategy()) {
        let total: f64 = pmf.iter().map(|(_, p)| p).sum();
        prop_assume!((total - 1.0).abs() <= 1e-12);
        let policy = Policy::new(rule).unwrap();
        let h = HistoryView { index: 0, t: 1, values: Vec::new(), names: &[] };
        let shifted = analytic_shifted_density(&policy, 1, &BaseDensity::Discrete(pmf.clone()), &h).unwrap();
        prop_assert!((shifted.total_mass().unwrap() - 1.0).abs() <= 1e-12);
        // every image collects exactly the mass of its preimage
        for &(a, _) in &pmf {
            let image = policy.apply_value(1, a).unwrap();
            let preimage: f64 = pmf
                .iter()
                .filter(|(s, _)| policy.apply_value(1, *s).unwrap() == image)
                .map(|(_, p)| p)
                .sum();
            prop_assert!((shifted.density(image) - preimage).abs() <= 1e-12);
        }
    }
}

#[test]
fn unnormalized_base_is_rejected() {
    let h = HistoryView {
        index: 0,
        t: 1,
        values: Vec::new(),
        names: &[],
    };
    let base = BaseDensity::Discrete(vec![(0.0, 0.5), (1.0, 0.6)]);
    assert!(analytic_shifted_density(&Policy::identity(), 1, &base, &h).is_err());
}
