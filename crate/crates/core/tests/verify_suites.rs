use gepnet::estimators::log_z_replicas;
use gepnet::model::{ActivationKind, ModelSpec, Readout, ReadoutFn};
use gepnet::posterior::Sampler;
use gepnet::rng::substream;
use gepnet::stats::{mean, variance};
use gepnet::verify::{
    nishimori_suite, pout_property_suite, scaling_exponent_fit, theorem2_gap_scan, NishimoriConfig, ScanBudget,
};
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn null_model_log_z_variance_is_closed_form() {
    // With f ≡ 0, log Z = Σ log N(Y_μ; 0, Δ) exactly, so Var((1/n) log Z) = 1/(2n).
    for n in [1usize, 4, 16] {
        let m = ModelSpec::new(ActivationKind::Tanh, Readout::zero(), 0.7, 3, 3, n).unwrap();
        let runs = log_z_replicas(&m, 0.5, 4000, &Sampler::Projected { m: 100 }, 42).unwrap();
        let per: Vec<f64> = runs.iter().map(|(l, _)| l / n as f64).collect();
        let v = variance(&per);
        let mu = mean(&per);
        let m4 = mean(&per.iter().map(|x| (x - mu).powi(4)).collect::<Vec<_>>());
        let se = ((m4 - v * v) / per.len() as f64).sqrt();
        let want = 1.0 / (2.0 * n as f64);
        assert!((v - want).abs() <= 3.0 * se, "n={n}: {v} vs {want} (se {se})");
    }
}

#[test]
fn scaling_interval_covers_true_exponent() {
    let xs = [4.0f64, 8.0, 16.0, 32.0, 64.0, 128.0];
    let mut rng = substream(7, &[]);
    let mut covered = 0;
    for trial in 0..100u64 {
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| {
                let z: f64 = rng.sample(StandardNormal);
                (x, 3.0 * x.powf(-0.5) * (1.0 + 0.1 * z))
            })
            .collect();
        let fit = scaling_exponent_fit(&pts, &mut substream(8, &[trial])).unwrap();
        if fit.exponent_ci.0 <= -0.5 && -0.5 <= fit.exponent_ci.1 {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered} of 100");
}

#[test]
fn pout_properties_hold_for_mixture_readout() {
    let m = ModelSpec::new(ActivationKind::Tanh, Readout::sign_mixture(), 0.5, 4, 3, 4).unwrap();
    let r = pout_property_suite(&m, 20_000, &mut substream(9, &[])).unwrap();
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn nishimori_identities_on_small_instance() {
    let m = ModelSpec::new(ActivationKind::Tanh, Readout::deterministic(ReadoutFn::Tanh), 0.5, 3, 2, 3).unwrap();
    let cfg = NishimoriConfig {
        n_datasets: 60,
        sampler: Sampler::Importance { m: 20_000, per_replica: 100 },
        pairs: 100,
        times: vec![0.0, 1.0],
    };
    let r = nishimori_suite(&m, &cfg, &mut substream(10, &[])).unwrap();
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn null_model_has_no_generalization_gap() {
    let delta = 0.4;
    let m = ModelSpec::new(ActivationKind::Tanh, Readout::zero(), delta, 8, 8, 2).unwrap();
    let seq = [(4, 4, 2), (8, 8, 2), (16, 16, 2)];
    let budget = ScanBudget { n_outer: 10, n_test: 5, sampler: Sampler::Projected { m: 200 } };
    let scan = theorem2_gap_scan(&m, &seq, &budget, &mut substream(11, &[])).unwrap();
    assert!(scan.report.passed(), "{}", scan.report.summary());
    for pt in &scan.points {
        assert_eq!(pt.gap.value, 0.0);
    }
}
