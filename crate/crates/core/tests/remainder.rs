use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lmtp::simulation::{ExactModel, Nuisance, PerturbedNuisance, ToyModel};
use lmtp::Policy;

/// `m_t - E[phi_{t+1}(Z; eta') | a_t, h_t] - Rem_t` over every supported prefix.
fn max_identity_gap(exact: &ExactModel, eta: &dyn Nuisance) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..exact.tau() {
        for prefix in exact.support_prefixes(t) {
            let lhs = exact.m_or_theta(t, &prefix);
            let mean_phi = exact
                .conditional_mean(&prefix, |z| exact.phi(t + 1, z, eta))
                .unwrap();
            let rem = exact.remainder(t, &prefix, eta).unwrap();
            worst = worst.max((lhs - mean_phi - rem).abs());
        }
    }
    worst
}

#[test]
fn exact_nuisances_have_no_remainder() {
    let toy = ToyModel::random(4);
    let exact = ExactModel::new(&toy, &Policy::clamped_decrement()).unwrap();
    for t in 0..2 {
        for prefix in exact.support_prefixes(t) {
            assert!(exact.remainder(t, &prefix, &exact).unwrap().abs() < 1e-15);
        }
    }
    assert!(max_identity_gap(&exact, &exact) < 1e-13);
}

#[test]
fn remainder_identity_under_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..100u64 {
        let toy = ToyModel::random(k % 7);
        let exact = ExactModel::new(&toy, &Policy::clamped_decrement()).unwrap();
        let eta = PerturbedNuisance {
            exact: &exact,
            seed: k,
            perturb_m: vec![rng.random(), rng.random()],
            perturb_r: vec![rng.random(), rng.random()],
        };
        let gap = max_identity_gap(&exact, &eta);
        assert!(gap < 1e-12, "perturbation {k}: gap {gap}");
    }
}

#[test]
fn one_exact_nuisance_per_time_suffices() {
    let toy = ToyModel::random(3);
    let exact = ExactModel::new(&toy, &Policy::clamped_decrement()).unwrap();
    // at each time either m or r is exact, the other perturbed
    for pattern in [[true, false], [false, true], [true, true], [false, false]] {
        let eta = PerturbedNuisance {
            exact: &exact,
            seed: 5,
            perturb_m: pattern.to_vec(),
            perturb_r: pattern.iter().map(|p| !p).collect(),
        };
        for t in 0..2 {
            for prefix in exact.support_prefixes(t) {
                let mean_phi = exact
                    .conditional_mean(&prefix, |z| exact.phi(t + 1, z, &eta))
                    .unwrap();
                assert!((mean_phi - exact.m_or_theta(t, &prefix)).abs() < 1e-12);
            }
        }
    }
    // with both perturbed at the last time the mean moves
    let both = PerturbedNuisance {
        exact: &exact,
        seed: 5,
        perturb_m: vec![false, true],
        perturb_r: vec![false, true],
    };
    let drift: f64 = exact
        .support_prefixes(1)
        .iter()
        .map(|p| {
            (exact
                .conditional_mean(p, |z| exact.phi(2, z, &both))
                .unwrap()
                - exact.m_or_theta(1, p))
            .abs()
        })
        .fold(0.0, f64::max);
    assert!(drift > 1e-3);
}
