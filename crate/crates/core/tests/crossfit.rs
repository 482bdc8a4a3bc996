use decoco::crossfit::{
    estimate_effect, estimate_effect_with, fit_nuisance, make_folds, CrossFitSettings, EstimatorVariant,
};
use decoco::sim::{generate, SimConfig, SupportDesign};
use decoco::{Dataset, NuisanceEstimate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn small(tau0: f64, seed: u64) -> SimConfig {
    SimConfig {
        n: 120,
        p: 20,
        s: 3,
        tau0,
        seed,
        replications: 1,
        estimator: CrossFitSettings::desk(),
        ..SimConfig::default()
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn noiseless_oracle_is_exact() {
    let (n, p, theta) = (60, 4, 10.0);
    let mut r = decoco::rng::stream(3, 0, 1);
    let beta = [0.7, 0.0, -1.2, 0.4];
    let gamma = [0.0, 1.1, 0.5, 0.0];
    let x: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut r)).collect();
    let mut y = Vec::new();
    let mut d = Vec::new();
    for row in x.chunks_exact(p) {
        let xg: f64 = row.iter().zip(&gamma).map(|(a, b)| a * b).sum();
        let xb: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let di = xg + r.gen_range(-1.0..1.0);
        d.push(di);
        y.push(theta * di + xb);
    }
    let data = Dataset::new(y, d, x, None, p).unwrap();
    let truth = NuisanceEstimate::new(beta.to_vec(), gamma.to_vec(), 0.0).unwrap();
    let est = estimate_effect(&data, &EstimatorVariant::oracle(truth), 5, 1).unwrap();
    assert!((est.theta_hat - theta).abs() <= 1e-10, "{}", est.theta_hat);
}

#[test]
fn pooled_score_vanishes_at_the_estimate() {
    for (variant, seed) in [(EstimatorVariant::covariance_oblivious(), 1), (EstimatorVariant::naive(), 2)] {
        let cfg = small(1.0, seed);
        let (data, _) = generate(&cfg, 0).unwrap();
        let plan = make_folds(data.len(), 5, seed).unwrap();
        let est = estimate_effect_with(&data, &variant, &plan, &cfg.settings()).unwrap();
        let pooled: f64 = est.per_fold.iter().map(|f| f.mean_score).sum::<f64>() / 5.0;
        let scale: f64 = est.per_fold.iter().map(|f| (f.mean_a * est.theta_hat).abs().max(f.mean_b.abs())).fold(1.0, f64::max);
        assert!(pooled.abs() <= 1e-8 * scale, "pooled score {pooled}");
        assert!(est.sigma2_hat >= 0.0);
        assert!((est.std_error - (est.sigma2_hat / data.len() as f64).sqrt()).abs() <= 1e-15 * est.std_error.max(1.0));
        assert!(est.ci_low <= est.theta_hat && est.theta_hat <= est.ci_high);
    }
}

#[test]
fn row_order_does_not_matter_for_a_fixed_partition() {
    let cfg = small(1.0, 5);
    let (data, _) = generate(&cfg, 0).unwrap();
    let plan = make_folds(data.len(), 5, 11).unwrap();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.reverse();
    order.swap(3, 40);
    let shuffled = data.subset(&order).unwrap();
    let moved = plan.permuted(&order);
    for variant in [EstimatorVariant::covariance_oblivious(), EstimatorVariant::naive()] {
        let a = estimate_effect_with(&data, &variant, &plan, &cfg.settings()).unwrap();
        let b = estimate_effect_with(&shuffled, &variant, &moved, &cfg.settings()).unwrap();
        assert!((a.theta_hat - b.theta_hat).abs() <= 1e-10, "{} vs {}", a.theta_hat, b.theta_hat);
    }
}

#[test]
fn error_free_replicates_reduce_to_naive() {
    let cfg = small(0.0, 8);
    let (data, _) = generate(&cfg, 0).unwrap();
    let settings = CrossFitSettings::default();
    let co = fit_nuisance(&data, &EstimatorVariant::covariance_oblivious(), &settings, 4).unwrap();
    let naive = fit_nuisance(&data, &EstimatorVariant::naive(), &settings, 4).unwrap();
    assert_eq!(co.eta.tau, 0.0);
    assert!(l2(&co.eta.beta, &naive.eta.beta) <= 1e-6);
    assert!(l2(&co.eta.gamma, &naive.eta.gamma) <= 1e-6);
}

#[test]
fn known_error_variance_improves_the_outcome_fit() {
    let reps = 100;
    let mut wins = 0;
    for rep in 0..reps {
        let cfg = SimConfig {
            n: 200,
            p: 30,
            s: 4,
            tau0: 1.5,
            seed: 900,
            support: SupportDesign::Disjoint,
            replications: reps,
            estimator: CrossFitSettings::desk(),
            ..SimConfig::default()
        };
        let (data, truth) = generate(&cfg, rep as u64).unwrap();
        let settings = CrossFitSettings { admm: cfg.estimator.admm, ..CrossFitSettings::default() };
        let ca = fit_nuisance(&data, &EstimatorVariant::covariance_aware(1.5), &settings, rep as u64).unwrap();
        let naive = fit_nuisance(&data, &EstimatorVariant::naive(), &settings, rep as u64).unwrap();
        if l2(&ca.eta.beta, &truth.beta0) < l2(&naive.eta.beta, &truth.beta0) {
            wins += 1;
        }
    }
    assert!(wins >= 80, "{wins} of {reps}");
}
