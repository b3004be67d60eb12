//! Per-dataset importance sampling on the projected prior.
//!
//! One pass over prior draws serves several targets at once (different `t`
//! or response vectors sharing the same inputs), which gives common random
//! numbers across the targets for free.

use rand::Rng;

use crate::data::{interp_combine, Matrix};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::posterior::{PathCoeffs, ProjectedPrior};
use crate::quadrature::GaussHermite;
use crate::stats::WeightedAccumulator;

/// Gauss–Hermite order used to integrate the fresh noise of a test point.
pub(crate) const PREDICT_ORDER: usize = 24;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ProbeTarget<'a> {
    pub t: f64,
    /// Responses of the first `y.len()` input rows.
    pub y: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ProbeOptions {
    pub draws: usize,
    /// Couple the linear block to the network block (see `ProjectedPrior::draw`).
    pub aligned: bool,
    /// Posterior means of `E[Y|s]` for the rows after the training rows.
    pub predict: bool,
    /// Posterior bracket of `Σ u'(s_μ) ds_μ/dt`.
    pub b_term: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct ProbeResult {
    pub log_z: f64,
    pub ess: f64,
    pub predictions: Vec<f64>,
    pub b: f64,
}

/// `ds/dt` for `s = √(1−t) nn + √t ρ lin + √(tε) ξ`.
#[inline]
fn ds_dt(nn: f64, lin: f64, xi: f64, t: f64, rho: f64, eps: f64) -> f64 {
    -nn / (2.0 * (1.0 - t).sqrt()) + rho * lin / (2.0 * t.sqrt()) + 0.5 * (eps / t).sqrt() * xi
}

pub(crate) fn probe<R: Rng + ?Sized>(
    model: &ModelSpec,
    inputs: &Matrix,
    n_train: usize,
    targets: &[ProbeTarget],
    opts: ProbeOptions,
    rng: &mut R,
) -> Result<Vec<ProbeResult>> {
    if targets.iter().any(|tg| tg.y.len() != n_train) {
        return Err(Error::Dimension("response vector length differs from the training rows".into()));
    }
    if opts.b_term && targets.iter().any(|tg| tg.t <= 0.0 || tg.t >= 1.0) {
        return Err(Error::Argument("the B bracket needs 0 < t < 1".into()));
    }
    let r = inputs.rows;
    let n_pred = if opts.predict { r - n_train } else { 0 };
    let n_obs = n_pred + usize::from(opts.b_term);
    let (rho, eps) = (model.params.rho, model.params.epsilon);
    let kernel = &model.kernel;
    let gh = GaussHermite::new(PREDICT_ORDER)?;
    let coeffs: Vec<PathCoeffs> = targets.iter().map(|tg| PathCoeffs::at(tg.t, rho, eps)).collect();
    let prior = ProjectedPrior::new(inputs, model.p, r);
    let mut draw = prior.empty_draw();
    let mut accs: Vec<WeightedAccumulator> = targets.iter().map(|_| WeightedAccumulator::new(n_obs)).collect();
    let mut obs = vec![0.0; n_obs];
    for _ in 0..opts.draws {
        prior.draw(&model.activation, opts.aligned, rng, &mut draw);
        for ((tg, c), acc) in targets.iter().zip(&coeffs).zip(accs.iter_mut()) {
            let mut lw = 0.0;
            let mut b = 0.0;
            for mu in 0..n_train {
                let s = interp_combine(draw.nn[mu], rho * draw.lin[mu], draw.xi[mu], tg.t, eps);
                lw += kernel.log_density(tg.y[mu], s);
                if opts.b_term {
                    b += kernel.u_prime(tg.y[mu], s) * ds_dt(draw.nn[mu], draw.lin[mu], draw.xi[mu], tg.t, rho, eps);
                }
            }
            for k in 0..n_pred {
                let row = n_train + k;
                let base = c.nn * draw.nn[row] + c.lin * draw.lin[row];
                obs[k] = if c.xi == 0.0 {
                    kernel.conditional_mean(base)
                } else {
                    gh.expect_unchecked(|z| kernel.conditional_mean(base + c.xi * z))
                };
            }
            if opts.b_term {
                obs[n_pred] = b;
            }
            acc.push(lw, &obs);
        }
    }
    accs.iter()
        .map(|acc| {
            if acc.is_degenerate() {
                return Err(Error::DegenerateTarget);
            }
            let means = acc.means();
            Ok(ProbeResult {
                log_z: acc.log_mean_weight(),
                ess: acc.ess(),
                predictions: means[..n_pred].to_vec(),
                b: if opts.b_term { means[n_pred] } else { 0.0 },
            })
        })
        .collect()
}

/// Side-information channel at one signal-to-noise ratio.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SideTarget<'a> {
    pub lambda: f64,
    pub y_tilde: &'a [f64],
}

#[derive(Debug, Clone)]
pub(crate) struct SideResult {
    /// `log` of the prior average of `P(Y|θ) P̃(Ỹ|θ)`.
    pub joint_log_z: f64,
    pub ess: f64,
    /// Posterior means of `E[Y'|s, Ỹ]` for each side point.
    pub means: Vec<f64>,
}

/// Training rows first, then the side points; `log Z(Y)` and, per `λ`, the
/// joint normalization and the side predictions, all from the same draws.
pub(crate) fn probe_side<R: Rng + ?Sized>(
    model: &ModelSpec,
    inputs: &Matrix,
    t: f64,
    y: &[f64],
    sides: &[SideTarget],
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64, Vec<SideResult>)> {
    let n_train = y.len();
    let m = inputs.rows - n_train;
    if sides.iter().any(|s| s.y_tilde.len() != m) {
        return Err(Error::Dimension("side responses do not match the side rows".into()));
    }
    let (rho, eps) = (model.params.rho, model.params.epsilon);
    let kernel = &model.kernel;
    let tildes: Vec<_> = sides.iter().map(|s| kernel.tilde_kernel(s.lambda)).collect();
    let prior = ProjectedPrior::new(inputs, model.p, inputs.rows);
    let mut draw = prior.empty_draw();
    let mut base = WeightedAccumulator::new(0);
    let mut accs: Vec<WeightedAccumulator> = sides.iter().map(|_| WeightedAccumulator::new(m)).collect();
    let mut s_side = vec![0.0; m];
    let mut obs = vec![0.0; m];
    for _ in 0..draws {
        prior.draw(&model.activation, false, rng, &mut draw);
        let mut lw = 0.0;
        for mu in 0..n_train {
            let s = interp_combine(draw.nn[mu], rho * draw.lin[mu], draw.xi[mu], t, eps);
            lw += kernel.log_density(y[mu], s);
        }
        base.push(lw, &[]);
        for (k, v) in s_side.iter_mut().enumerate() {
            let row = n_train + k;
            *v = interp_combine(draw.nn[row], rho * draw.lin[row], draw.xi[row], t, eps);
        }
        for ((side, tilde), acc) in sides.iter().zip(&tildes).zip(accs.iter_mut()) {
            let mut lj = lw;
            for k in 0..m {
                lj += tilde.log_density(side.y_tilde[k], s_side[k]);
                obs[k] = kernel.side_posterior_mean(s_side[k], side.y_tilde[k], side.lambda);
            }
            acc.push(lj, &obs);
        }
    }
    if base.is_degenerate() || accs.iter().any(|a| a.is_degenerate()) {
        return Err(Error::DegenerateTarget);
    }
    let results = accs
        .iter()
        .map(|a| SideResult { joint_log_z: a.log_mean_weight(), ess: a.ess(), means: a.means() })
        .collect();
    Ok((base.log_mean_weight(), base.ess(), results))
}

/// Training inputs stacked on top of extra rows.
pub(crate) fn stack(top: &Matrix, bottom: &Matrix) -> Matrix {
    let mut data = top.data.clone();
    data.extend_from_slice(&bottom.data);
    Matrix { rows: top.rows + bottom.rows, cols: top.cols, data }
}
