use gepnet::model::{
    compute_epsilon, compute_rho, Activation, ActivationKind, OutputKernel, RatioKind, Readout, ReadoutFn,
};
use gepnet::quadrature::{gauss_hermite_expect, integrate};

fn tanh_kernel(delta: f64) -> OutputKernel {
    OutputKernel::new(Readout::deterministic(ReadoutFn::Tanh), delta).unwrap()
}

#[test]
fn cosine_expectation_closed_form() {
    let v = gauss_hermite_expect(f64::cos, 40).unwrap();
    assert!((v - (-0.5f64).exp()).abs() < 1e-10, "{v}");
}

#[test]
fn sine_constants_closed_form() {
    let phi = Activation::new(ActivationKind::Sine);
    let rho = compute_rho(&phi, 80).unwrap();
    let eps = compute_epsilon(&phi, 80).unwrap();
    assert!((rho - (-0.5f64).exp()).abs() < 1e-10);
    let want = (1.0 - (-2.0f64).exp()) / 2.0 - (-1.0f64).exp();
    assert!((eps - want).abs() < 1e-10, "{eps} vs {want}");
}

#[test]
fn tanh_constants_match_high_order_quadrature() {
    let phi = Activation::tanh();
    let rho200 = gauss_hermite_expect(|z| 1.0 - z.tanh().powi(2), 200).unwrap();
    let m2 = gauss_hermite_expect(|z| z.tanh().powi(2), 200).unwrap();
    let rho = compute_rho(&phi, 80).unwrap();
    let eps = compute_epsilon(&phi, 80).unwrap();
    assert!((rho - rho200).abs() < 1e-10);
    assert!((eps - (m2 - rho200 * rho200)).abs() < 1e-10);
    assert!((rho - 0.6057).abs() < 1e-4);
}

#[test]
fn sign_mixture_density_is_two_term_sum() {
    let k = OutputKernel::new(Readout::sign_mixture(), 1.0).unwrap();
    let n = |y: f64, m: f64| (-(y - m).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let t = 2.0f64.tanh();
    let want = 0.5 * n(0.5, t) + 0.5 * n(0.5, -t);
    assert!((k.density(0.5, 2.0) - want).abs() < 1e-14);
}

#[test]
fn u_prime_matches_difference_of_u() {
    let k = tanh_kernel(1.0);
    assert!((k.u_prime(1.0, 0.0) - 1.0).abs() < 1e-12);
    let h = 1e-5;
    for &(y, x) in &[(1.0, 0.0), (0.3, 0.7), (-1.2, 1.5)] {
        let fd = (k.u_value(y, x + h) - k.u_value(y, x - h)) / (2.0 * h);
        assert!((k.u_prime(y, x) - fd).abs() < 1e-8, "({y},{x})");
    }
}

#[test]
fn u_mu_mu_of_gaussian_log_density() {
    let k = tanh_kernel(1.0);
    let u11 = k.u_double_prime(0.0, 0.0) + k.u_prime(0.0, 0.0).powi(2);
    assert!((u11 + 1.0).abs() < 1e-12, "{u11}");
}

#[test]
fn yy_ratio_at_zero_residual() {
    let k = tanh_kernel(1.0);
    let x = 0.4f64;
    assert!((k.ratio(RatioKind::YY, x.tanh(), x) + 1.0).abs() < 1e-12);
}

#[test]
fn yx_ratio_matches_density_differences() {
    let k = tanh_kernel(1.0);
    let (y, x, h) = (0.3, 0.7, 1e-4);
    let p = |y: f64, x: f64| k.density(y, x);
    let mixed = (p(y + h, x + h) - p(y + h, x - h) - p(y - h, x + h) + p(y - h, x - h)) / (4.0 * h * h);
    let want = mixed / p(y, x);
    let got = k.ratio(RatioKind::YX, y, x);
    assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn conditional_mean_by_integration() {
    let k = tanh_kernel(1.0);
    let m = integrate(|y| y * k.density(y, 1.0), -20.0, 20.0, 1e-12);
    assert!((k.conditional_mean(1.0) - m).abs() < 1e-9);
    assert!((m - 0.761594).abs() < 1e-6);
}
