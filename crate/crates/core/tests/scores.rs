use decoco::sim::{generate, SimConfig, SupportDesign};
use decoco::{score, score_corrected, score_naive, score_parts, NuisanceEstimate, ObservedSample, ScoreKind};
use proptest::prelude::*;

fn population(support: SupportDesign, tau0: f64) -> (decoco::Dataset, NuisanceEstimate, f64) {
    let cfg = SimConfig {
        n: 100_000,
        p: 6,
        s: 2,
        tau0,
        support,
        random_sign: false,
        replications: 1,
        seed: 7,
        ..SimConfig::default()
    };
    let (data, truth) = generate(&cfg, 0).unwrap();
    (data, truth.nuisance(), truth.theta0)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn shifted(eta: &NuisanceEstimate, coord: usize, h: f64) -> NuisanceEstimate {
    let p = eta.p();
    let mut out = eta.clone();
    if coord < p {
        out.beta[coord] += h;
    } else if coord < 2 * p {
        out.gamma[coord - p] += h;
    } else {
        out.tau += h;
    }
    out
}

/// Per-sample centred differences of the score along one coordinate of η.
fn derivative_draws(kind: ScoreKind, data: &decoco::Dataset, theta: f64, eta: &NuisanceEstimate, coord: usize) -> Vec<f64> {
    let h = 1e-4;
    let up = shifted(eta, coord, h);
    let down = shifted(eta, coord, -h);
    data.samples()
        .map(|s| (score(kind, s, theta, &up).unwrap() - score(kind, s, theta, &down).unwrap()) / (2.0 * h))
        .collect()
}

#[test]
fn corrected_score_has_mean_zero_at_truth() {
    let (data, eta, theta) = population(SupportDesign::Shared, 1.0);
    let values: Vec<f64> = data.samples().map(|s| score_corrected(s, theta, &eta).unwrap()).collect();
    let (mean, se) = mean_and_se(&values);
    assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn naive_score_is_off_centre_when_coefficients_overlap() {
    let (data, eta, theta) = population(SupportDesign::Shared, 1.0);
    let values: Vec<f64> = data.samples().map(|s| score_naive(s, theta, &eta).unwrap()).collect();
    let (mean, se) = mean_and_se(&values);
    assert!(mean > 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn corrected_score_is_orthogonal_in_every_coordinate() {
    let (data, eta, theta) = population(SupportDesign::Disjoint, 1.0);
    for coord in 0..2 * eta.p() + 1 {
        let draws = derivative_draws(ScoreKind::Corrected, &data, theta, &eta, coord);
        let (mean, se) = mean_and_se(&draws);
        assert!(mean.abs() <= 3.0 * se + 1e-9, "coordinate {coord}: derivative {mean}, se {se}");
    }
}

#[test]
fn naive_score_is_not_orthogonal_in_beta() {
    let (data, eta, theta) = population(SupportDesign::Disjoint, 1.0);
    let p = eta.p();
    let failing = (0..p)
        .filter(|&j| {
            let (mean, se) = mean_and_se(&derivative_draws(ScoreKind::Naive, &data, theta, &eta, j));
            mean.abs() > 3.0 * se
        })
        .count();
    assert!(failing >= 1);
}

fn sample_strategy(p: usize) -> impl Strategy<Value = (ObservedSample, NuisanceEstimate)> {
    (
        -10.0..10.0f64,
        -10.0..10.0f64,
        prop::collection::vec(-5.0..5.0f64, p),
        prop::collection::vec(-3.0..3.0f64, p),
        prop::collection::vec(-3.0..3.0f64, p),
        0.0..4.0f64,
    )
        .prop_map(|(y, d, z1, beta, gamma, tau)| {
            (ObservedSample { y, d, z1, z2: None }, NuisanceEstimate::new(beta, gamma, tau).unwrap())
        })
}

proptest! {
    #[test]
    fn parts_reproduce_the_score((obs, eta) in sample_strategy(4), theta in -20.0..20.0f64) {
        let s = obs.as_sample();
        let parts = score_parts(s, &eta).unwrap();
        let direct = score_corrected(s, theta, &eta).unwrap();
        let tol = 1e-12 * (parts.a * theta).abs().max(parts.b.abs()).max(1.0);
        prop_assert!((parts.at(theta) - direct).abs() <= tol);
    }

    #[test]
    fn zero_tau_reduces_to_naive((obs, mut eta) in sample_strategy(3), theta in -20.0..20.0f64) {
        eta.tau = 0.0;
        let s = obs.as_sample();
        prop_assert_eq!(score_corrected(s, theta, &eta).unwrap(), score_naive(s, theta, &eta).unwrap());
    }
}
