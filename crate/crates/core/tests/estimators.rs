use std::f64::consts::{E, PI};

use gepnet::estimators::{
    conditional_entropy_term, free_entropy, gen_error, gen_error_proxy, mutual_information, psi_at_scale, Estimate,
};
use gepnet::model::{ActivationKind, ModelSpec, OutputKernel, Readout, ReadoutFn};
use gepnet::posterior::Sampler;
use gepnet::quadrature::{gauss_hermite_expect, integrate, integrate_2d};
use gepnet::rng::substream;

fn model(readout: Readout, delta: f64, d: usize, p: usize, n: usize) -> ModelSpec {
    ModelSpec::new(ActivationKind::Tanh, readout, delta, d, p, n).unwrap()
}

fn tanh_readout() -> Readout {
    Readout::deterministic(ReadoutFn::Tanh)
}

/// `a` is not above `b` by more than 3 combined SE.
fn not_above(a: &Estimate, b: &Estimate) -> bool {
    a.value - b.value <= 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

#[test]
fn samplers_agree_on_free_entropy() {
    let m = model(tanh_readout(), 0.5, 3, 3, 2);
    let proj = free_entropy(&m, 0.5, 200, &Sampler::Projected { m: 20_000 }, &mut substream(1, &[])).unwrap();
    let imp = free_entropy(&m, 0.5, 200, &Sampler::Importance { m: 20_000, per_replica: 10 }, &mut substream(1, &[])).unwrap();
    // same datasets, independent prior draws: the difference is pure sampler noise
    let diff = proj.minus(&imp);
    assert!(diff.value.abs() < 0.01, "{proj:?} vs {imp:?}");
}

#[test]
fn identity_endpoints_are_close() {
    let m = ModelSpec::new(ActivationKind::Identity, tanh_readout(), 0.5, 4, 4, 2).unwrap();
    let s = Sampler::Projected { m: 20_000 };
    let f0 = free_entropy(&m, 0.0, 400, &s, &mut substream(2, &[])).unwrap();
    let f1 = free_entropy(&m, 1.0, 400, &s, &mut substream(3, &[])).unwrap();
    let gap = f0.minus(&f1);
    assert!(gap.value.abs() <= 3.0 * gap.stderr + gepnet::estimators::kappa(4, 4, 2).sqrt(), "{gap:?}");
}

#[test]
fn more_draws_do_not_lower_log_z() {
    let m = model(tanh_readout(), 0.5, 4, 4, 4);
    let est: Vec<Estimate> = [250usize, 1000, 4000]
        .iter()
        .map(|&mm| free_entropy(&m, 0.5, 200, &Sampler::Projected { m: mm }, &mut substream(4, &[])).unwrap())
        .collect();
    for w in est.windows(2) {
        assert!(not_above(&w[0], &w[1]), "{:?} then {:?}", w[0], w[1]);
    }
}

#[test]
fn conditional_entropy_of_gaussian_channel() {
    let m = model(tanh_readout(), 0.5, 8, 8, 1);
    let e = conditional_entropy_term(&m, 0.5, 100_000, &mut substream(5, &[])).unwrap();
    let exact = -0.5 * (2.0 * PI * E * 0.5).ln();
    assert!((e.value - exact).abs() <= 3.0 * e.stderr, "{e:?} vs {exact}");
}

#[test]
fn psi_matches_independent_quadrature() {
    let k = OutputKernel::new(Readout::sign_mixture(), 0.6).unwrap();
    let sigma = 0.8;
    let gz = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let want = integrate_2d(|z, y| gz(z) * k.density(y, sigma * z) * k.log_density(y, sigma * z), (-9.0, 9.0), (-9.0, 9.0), 1e-12);
    let got = psi_at_scale(&k, sigma).unwrap();
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn information_vanishes_as_noise_grows() {
    let s = Sampler::Projected { m: 4000 };
    let vals: Vec<Estimate> = [1.0, 10.0, 100.0]
        .iter()
        .map(|&delta| {
            let m = model(tanh_readout(), delta, 4, 4, 2);
            mutual_information(&m, 0.0, 200, &s, 200_000, &mut substream(6, &[])).unwrap()
        })
        .collect();
    for w in vals.windows(2) {
        assert!(not_above(&w[1], &w[0]), "{:?} then {:?}", w[0], w[1]);
    }
    assert!(vals[2].value.abs() < vals[0].value, "{vals:?}");
}

#[test]
fn prior_only_error_is_noise_plus_signal_power() {
    // d = 4 at t = 1: S | q ~ N(0, ρ² q + ε) with q = χ²₄/4 of density 4q e^{−2q}.
    let delta = 0.5;
    let m = model(tanh_readout(), delta, 4, 4, 0);
    let (rho, eps) = (m.params.rho, m.params.epsilon);
    let power = integrate(
        |q| 4.0 * q * (-2.0 * q).exp() * gauss_hermite_expect(|z| (z * (rho * rho * q + eps).sqrt()).tanh().powi(2), 60).unwrap(),
        0.0,
        40.0,
        1e-12,
    );
    let e = gen_error(&m, 1.0, 200, 10, &Sampler::Projected { m: 4000 }, &mut substream(7, &[])).unwrap();
    let want = delta + power;
    assert!((e.value - want).abs() <= 3.0 * e.stderr + 1e-3, "{e:?} vs {want}");
}

#[test]
fn more_data_does_not_hurt() {
    let s = Sampler::Projected { m: 5000 };
    let errs: Vec<Estimate> = [2usize, 8, 32]
        .iter()
        .map(|&n| gen_error(&model(tanh_readout(), 1.0, 8, 8, n), 0.0, 80, 10, &s, &mut substream(8, &[])).unwrap())
        .collect();
    for w in errs.windows(2) {
        assert!(not_above(&w[1], &w[0]), "{:?} then {:?}", w[0], w[1]);
    }
}

#[test]
fn side_channel_proxy_approaches_noise_floor() {
    let delta = 0.01;
    let m = model(tanh_readout(), delta, 3, 3, 3);
    let s = Sampler::Projected { m: 20_000 };
    let vals: Vec<Estimate> = [0.0, 10.0, 100.0]
        .iter()
        .map(|&l| gen_error_proxy(&m, 0.5, l, 1.0, 100, &s, &mut substream(9, &[])).unwrap())
        .collect();
    for w in vals.windows(2) {
        assert!(not_above(&w[1], &w[0]), "{:?} then {:?}", w[0], w[1]);
    }
    assert!(vals[2].value - delta < 0.5 * (vals[0].value - delta), "{vals:?}");
}
