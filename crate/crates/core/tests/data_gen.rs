use gepnet::data::{
    dot, gen_dataset, gen_side_info, gen_test_points, preactivation_glm, preactivation_interp, preactivation_nn,
    sample_inputs, Dataset, TeacherGLM, TeacherNN,
};
use gepnet::model::{Activation, ActivationKind, GaussEquivParams, ModelSpec, Readout, ReadoutFn};
use gepnet::quadrature::gauss_hermite_expect;
use gepnet::rng::substream;
use gepnet::stats::{ks_test, mean, normal_cdf, variance};

fn tanh_model(d: usize, p: usize, n: usize) -> ModelSpec {
    ModelSpec::new(ActivationKind::Tanh, Readout::deterministic(ReadoutFn::Tanh), 0.5, d, p, n).unwrap()
}

fn nn_loop(a: &[f64], w: &[Vec<f64>], x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let mut out = 0.0;
    for i in 0..a.len() {
        let mut h = 0.0;
        for j in 0..x.len() {
            h += w[i][j] * x[j];
        }
        out += a[i] * (h / d.sqrt()).tanh();
    }
    out / (a.len() as f64).sqrt()
}

fn rows(nn: &TeacherNN) -> Vec<Vec<f64>> {
    (0..nn.p()).map(|i| nn.w_star.row(i).to_vec()).collect()
}

#[test]
fn input_row_norms_follow_chi_square() {
    let (n, d) = (1000, 50);
    let x = sample_inputs(n, d, &mut substream(11, &[]));
    let norms: Vec<f64> = (0..n).map(|i| dot(x.row(i), x.row(i)) / d as f64).collect();
    let m = mean(&norms);
    let tol = 4.0 * (2.0 / d as f64).sqrt() / (n as f64).sqrt();
    assert!((m - 1.0).abs() < tol, "{m}");
}

#[test]
fn network_preactivation_matches_loop() {
    let mut rng = substream(3, &[]);
    let phi = Activation::tanh();
    let nn = TeacherNN::sample(7, 9, &mut rng);
    let x = sample_inputs(5, 9, &mut rng);
    for mu in 0..5 {
        let got = preactivation_nn(&nn, x.row(mu), &phi).unwrap();
        let want = nn_loop(&nn.a_star, &rows(&nn), x.row(mu));
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn linear_preactivation_matches_loop() {
    let mut rng = substream(4, &[]);
    let params = GaussEquivParams::for_activation(&Activation::tanh()).unwrap();
    let glm = TeacherGLM::sample(9, 5, &mut rng);
    let x = sample_inputs(5, 9, &mut rng);
    for mu in 0..5 {
        let mut s = 0.0;
        for j in 0..9 {
            s += glm.v_star[j] * x.get(mu, j);
        }
        let want = params.rho * s / 3.0 + params.epsilon.sqrt() * glm.xi_star[mu];
        let got = preactivation_glm(&glm, x.row(mu), mu, &params).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn interpolated_preactivation_matches_loop() {
    let mut rng = substream(5, &[]);
    let phi = Activation::tanh();
    let params = GaussEquivParams::for_activation(&phi).unwrap();
    let nn = TeacherNN::sample(6, 8, &mut rng);
    let glm = TeacherGLM::sample(8, 4, &mut rng);
    let x = sample_inputs(4, 8, &mut rng);
    let t: f64 = 0.5;
    for mu in 0..4 {
        let s_nn = nn_loop(&nn.a_star, &rows(&nn), x.row(mu));
        let lin: f64 = (0..8).map(|j| glm.v_star[j] * x.get(mu, j)).sum::<f64>() / 8f64.sqrt();
        let want = (1.0 - t).sqrt() * s_nn + t.sqrt() * params.rho * lin + (t * params.epsilon).sqrt() * glm.xi_star[mu];
        let got = preactivation_interp(&nn, &glm, x.row(mu), mu, t, &phi, &params).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn endpoints_are_bitwise_pure_models() {
    let model = tanh_model(6, 5, 7);
    let ds = gen_dataset(&model, 0.0, &mut substream(21, &[])).unwrap();
    let sd = model.delta().sqrt();
    for mu in 0..ds.n {
        let s = preactivation_nn(&ds.nn, ds.x.row(mu), &model.activation).unwrap();
        assert_eq!(ds.s[mu].to_bits(), s.to_bits());
        assert_eq!(ds.y[mu].to_bits(), (s.tanh() + sd * ds.noise[mu]).to_bits());
    }
    let one = ds.at_time(&model, 1.0).unwrap();
    for mu in 0..ds.n {
        let s = preactivation_glm(&ds.glm, ds.x.row(mu), mu, &model.params).unwrap();
        assert_eq!(one.s[mu].to_bits(), s.to_bits());
    }
}

#[test]
fn responses_follow_semi_analytic_law() {
    // Given the linear teacher, S over fresh inputs is exactly N(0, ρ²|v|²/d + ε).
    let model = tanh_model(10, 10, 2);
    let ds: Dataset = gen_dataset(&model, 1.0, &mut substream(8, &[])).unwrap();
    let pts = gen_test_points(&model, &ds, 10_000, &mut substream(8, &[1])).unwrap();
    let v2 = dot(&ds.glm.v_star, &ds.glm.v_star) / 10.0;
    let sigma = (model.params.rho.powi(2) * v2 + model.params.epsilon).sqrt();
    let sd = model.delta().sqrt();
    let cdf = |y: f64| gauss_hermite_expect(|z| normal_cdf((y - (sigma * z).tanh()) / sd), 80).unwrap();
    let (ks, _) = ks_test(&pts.y, cdf);
    assert!(ks < 0.02, "KS distance {ks}");
}

#[test]
fn side_channel_variance_identity() {
    let model = tanh_model(4, 4, 2000);
    let ds = gen_dataset(&model, 0.5, &mut substream(9, &[])).unwrap();
    let side = gen_side_info(&model, &ds, 4.0, 1.0, &mut substream(9, &[1])).unwrap();
    assert_eq!(side.m(), 2000);
    let vy = variance(side.y_prime());
    let vt = variance(&side.y_tilde);
    // Var(Ỹ) = 4 Var(Y') + 1; the sampling error of the sum is about 2.3/√m.
    assert!((vt - (4.0 * vy + 1.0)).abs() < 4.0 * 2.3 / (2000f64).sqrt(), "{vt} vs {}", 4.0 * vy + 1.0);
}
