use std::f64::consts::{E, PI};

use rand::Rng;

use super::engine::{probe, probe_side, stack, ProbeOptions, ProbeTarget, SideTarget, PREDICT_ORDER};
use super::{count_flagged, importance_budget, n_inner, replicas, streams, Coords, Estimate};
use crate::data::{gen_dataset, gen_side_info, gen_test_points, Dataset, TestPoints};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::posterior::{bayes_predictor, importance_ensemble, mala_chain, LogTarget, Sampler};
use crate::quadrature::GaussHermite;
use crate::stats::mean_se;

/// Squared error of `prediction` against a fresh response at pre-activation
/// `s`, averaged over the response's own noise and readout atom:
/// `Δ + Var_A f(s;A) + (E[Y|s] − prediction)²`.
pub(crate) fn expected_sq_error(model: &ModelSpec, s: f64, prediction: f64) -> f64 {
    let r = model.kernel.conditional_mean(s) - prediction;
    model.delta() + model.readout().variance(s) + r * r
}

pub(crate) fn predictions<R: Rng + ?Sized>(
    model: &ModelSpec,
    ds: &Dataset,
    test: &TestPoints,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    match sampler {
        Sampler::Projected { m } => {
            let inputs = stack(&ds.x, &test.x);
            let targets = [ProbeTarget { t: ds.t, y: &ds.y }];
            let opts = ProbeOptions { draws: *m, predict: true, ..Default::default() };
            let r = probe(model, &inputs, ds.n, &targets, opts, rng)?;
            let r = r.into_iter().next().expect("one target");
            Ok((r.predictions, r.ess))
        }
        Sampler::Importance { m, .. } => {
            let target = LogTarget::new(ds, model)?;
            let ens = importance_ensemble(&target, *m, rng)?;
            let preds = (0..test.x.rows).map(|k| bayes_predictor(&target, test.x.row(k), &ens)).collect::<Result<_>>()?;
            Ok((preds, ens.ess))
        }
        Sampler::Mala(cfg) => {
            let target = LogTarget::new(ds, model)?;
            let chain = mala_chain(&target, cfg, rng)?;
            let gh = GaussHermite::new(PREDICT_ORDER)?;
            let kernel = &model.kernel;
            let preds = (0..test.x.rows)
                .map(|k| {
                    let sum: f64 = chain
                        .samples
                        .iter()
                        .map(|th| {
                            let (base, cxi) = target.new_point_parts(th, test.x.row(k));
                            gh.expect_unchecked(|z| kernel.conditional_mean(base + cxi * z))
                        })
                        .sum();
                    sum / chain.samples.len() as f64
                })
                .collect();
            Ok((preds, f64::INFINITY))
        }
    }
}

/// Bayes-optimal generalization error `E(Y_new − E[Y_new|D_n, X_new])²`.
///
/// The response noise and readout atom of each test point are integrated
/// out exactly, leaving Monte Carlo only over the data, the test inputs and
/// the posterior.
pub fn gen_error<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    n_outer: usize,
    n_test: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<Estimate> {
    if n_test == 0 {
        return Err(Error::Argument("generalization error needs at least one test point".into()));
    }
    let seed = rng.next_u64();
    let runs = replicas(n_outer, |k| {
        let mut s = streams(seed, k);
        let ds = gen_dataset(model, t, &mut s.data)?;
        let test = gen_test_points(model, &ds, n_test, &mut s.test)?;
        let (preds, ess) = predictions(model, &ds, &test, sampler, &mut s.sampler)?;
        let err = test.s.iter().zip(&preds).map(|(&sk, &pk)| expected_sq_error(model, sk, pk)).sum::<f64>() / n_test as f64;
        Ok((err, ess))
    })?;
    let errs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (value, stderr) = mean_se(&errs);
    Ok(Estimate::new(value, stderr, Coords::of(model, t))
        .with_budget(n_outer, n_inner(sampler), seed)
        .with_flagged(count_flagged(runs.iter().map(|r| &r.1))))
}

fn check_side_args(lambda: f64, eta: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!("side-information SNR must satisfy lambda >= 0, got {lambda}")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Argument(format!("side-information fraction must satisfy eta > 0, got {eta}")));
    }
    Ok(())
}

/// Per-replica side-information run at the SNRs `lambdas`, all sharing the
/// same data, side points, Gaussian channel noise and prior draws.
struct SideRun {
    log_z: f64,
    joint: Vec<f64>,
    errors: Vec<f64>,
    min_ess: f64,
    m: usize,
}

fn side_runs(
    model: &ModelSpec,
    t: f64,
    lambdas: &[f64],
    eta: f64,
    n_outer: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<SideRun>> {
    replicas(n_outer, |k| {
        let mut s = streams(seed, k);
        let ds = gen_dataset(model, t, &mut s.data)?;
        let base = gen_side_info(model, &ds, lambdas[0], eta, &mut s.side)?;
        let sides: Vec<_> = lambdas.iter().map(|&l| base.at_lambda(l)).collect();
        let inputs = stack(&ds.x, &base.points.x);
        let targets: Vec<SideTarget> = sides.iter().map(|si| SideTarget { lambda: si.lambda, y_tilde: &si.y_tilde }).collect();
        let (log_z, ess, res) = probe_side(model, &inputs, t, &ds.y, &targets, draws, &mut s.sampler)?;
        let m = base.m();
        let errors = res
            .iter()
            .map(|r| base.y_prime().iter().zip(&r.means).map(|(y, mh)| (y - mh).powi(2)).sum::<f64>() / m as f64)
            .collect();
        let min_ess = res.iter().map(|r| r.ess).fold(ess, f64::min);
        Ok(SideRun { log_z, joint: res.iter().map(|r| r.joint_log_z).collect(), errors, min_ess, m })
    })
}

/// Error on the side-information points of the posterior mean given both
/// the original data and the Gaussian channel `Ỹ = √λ Y' + Z'`.
pub fn gen_error_proxy<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    lambda: f64,
    eta: f64,
    n_outer: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<Estimate> {
    check_side_args(lambda, eta)?;
    let draws = importance_budget(sampler, "the side-information proxy")?;
    let seed = rng.next_u64();
    let runs = side_runs(model, t, &[lambda], eta, n_outer, draws, seed)?;
    let errs: Vec<f64> = runs.iter().map(|r| r.errors[0]).collect();
    let (value, stderr) = mean_se(&errs);
    Ok(Estimate::new(value, stderr, Coords::of(model, t))
        .with_budget(n_outer, draws, seed)
        .with_flagged(count_flagged(runs.iter().map(|r| &r.min_ess))))
}

/// `(1/n) I(Y'; √λY' + Z' | Y, X)`.
pub fn side_mutual_information<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    lambda: f64,
    eta: f64,
    n_outer: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<Estimate> {
    check_side_args(lambda, eta)?;
    if model.n == 0 {
        return Err(Error::Argument("the side mutual information is normalized by n >= 1".into()));
    }
    let draws = importance_budget(sampler, "the side-information mutual information")?;
    let seed = rng.next_u64();
    let runs = side_runs(model, t, &[lambda], eta, n_outer, draws, seed)?;
    let n = model.n as f64;
    let vals: Vec<f64> =
        runs.iter().map(|r| (-(r.joint[0] - r.log_z) - 0.5 * r.m as f64 * (2.0 * PI * E).ln()) / n).collect();
    let (value, stderr) = mean_se(&vals);
    Ok(Estimate::new(value, stderr, Coords::of(model, t))
        .with_budget(n_outer, draws, seed)
        .with_flagged(count_flagged(runs.iter().map(|r| &r.min_ess))))
}

/// `[λ − h, λ, λ + h]` with `h = λ/10`.
pub fn immse_grid(lambda_mid: f64) -> [f64; 3] {
    let h = 0.1 * lambda_mid;
    [lambda_mid - h, lambda_mid, lambda_mid + h]
}

#[derive(Debug, Clone)]
pub struct ImmseReport {
    pub lambda_mid: f64,
    pub h: f64,
    /// Central difference of `(1/n) I` over `λ`.
    pub derivative: Estimate,
    /// `(m/2n) · E_n(λ_mid)`.
    pub half_proxy: Estimate,
    /// Per-replica paired difference of the two sides.
    pub discrepancy: Estimate,
}

impl ImmseReport {
    /// Discrepancy in units of its standard error.
    pub fn z(&self) -> f64 {
        self.discrepancy.z_score(0.0)
    }
}

/// Checks `(1/n) ∂_λ I = (m/2n) E_n(λ)` at the middle of a symmetric
/// three-point grid; `m = ⌈nη⌉` side points.
pub fn immse_check<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    lambda_grid: &[f64],
    eta: f64,
    n_outer: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<ImmseReport> {
    if lambda_grid.len() < 3 {
        return Err(Error::Argument(format!("the SNR grid needs at least 3 points, got {}", lambda_grid.len())));
    }
    let mid = lambda_grid.len() / 2;
    let (lo, lm, hi) = (lambda_grid[mid - 1], lambda_grid[mid], lambda_grid[mid + 1]);
    let h = hi - lm;
    if !(h > 0.0) || ((lm - lo) - h).abs() > 1e-12 * h.max(1.0) {
        return Err(Error::Argument(format!("the SNR grid must be increasing and symmetric about {lm}")));
    }
    for l in [lo, lm, hi] {
        check_side_args(l, eta)?;
    }
    if model.n == 0 {
        return Err(Error::Argument("the I-MMSE check is normalized by n >= 1".into()));
    }
    let draws = importance_budget(sampler, "the I-MMSE check")?;
    let seed = rng.next_u64();
    let runs = side_runs(model, t, &[lm, lo, hi], eta, n_outer, draws, seed)?;
    let n = model.n as f64;
    let fd: Vec<f64> = runs.iter().map(|r| -(r.joint[2] - r.joint[1]) / (2.0 * h * n)).collect();
    let half: Vec<f64> = runs.iter().map(|r| r.m as f64 / (2.0 * n) * r.errors[0]).collect();
    let diff: Vec<f64> = fd.iter().zip(&half).map(|(a, b)| a - b).collect();
    let coords = Coords::of(model, t);
    let flagged = count_flagged(runs.iter().map(|r| &r.min_ess));
    let est = |xs: &[f64]| {
        let (v, se) = mean_se(xs);
        Estimate::new(v, se, coords).with_budget(n_outer, draws, seed).with_flagged(flagged)
    };
    Ok(ImmseReport { lambda_mid: lm, h, derivative: est(&fd), half_proxy: est(&half), discrepancy: est(&diff) })
}
