//! Log-posterior of the interpolating model, its gradient, and samplers.

mod mala;
mod projected;

pub use mala::{batch_means, mala_chain, thermodynamic_log_z, ChainConfig, ChainOutput, TiEstimate};
pub use projected::{cholesky_psd, ProjectedDraw, ProjectedPrior};

use rand::Rng;

use crate::data::{dot, interp_combine, sample_vec, Dataset, Matrix};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::quadrature::GaussHermite;
use crate::stats::WeightedAccumulator;

/// Student parameters: network block `(a, W)` and linear-model block `(v, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint {
    pub a: Vec<f64>,
    /// `p × d`.
    pub w: Matrix,
    pub v: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ParamPoint {
    pub fn zeros(d: usize, p: usize, n: usize) -> Self {
        Self { a: vec![0.0; p], w: Matrix::zeros(p, d), v: vec![0.0; d], xi: vec![0.0; n] }
    }

    pub fn sample_prior<R: Rng + ?Sized>(d: usize, p: usize, n: usize, rng: &mut R) -> Self {
        let a = sample_vec(p, rng);
        let w = Matrix::standard_normal(p, d, rng);
        let v = sample_vec(d, rng);
        let xi = sample_vec(n, rng);
        Self { a, w, v, xi }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w.cols, self.a.len(), self.xi.len())
    }

    pub fn len(&self) -> usize {
        self.a.len() + self.w.data.len() + self.v.len() + self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened as `a, W (row-major), v, ξ`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.a);
        out.extend_from_slice(&self.w.data);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.xi);
        out
    }

    pub fn from_slice(d: usize, p: usize, n: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != p + p * d + d + n {
            return Err(Error::Dimension(format!("{} values for a parameter point with d={d}, p={p}, n={n}", flat.len())));
        }
        let (a, rest) = flat.split_at(p);
        let (w, rest) = rest.split_at(p * d);
        let (v, xi) = rest.split_at(d);
        Ok(Self { a: a.to_vec(), w: Matrix::from_vec(p, d, w.to_vec())?, v: v.to_vec(), xi: xi.to_vec() })
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.a, &self.a) + dot(&self.w.data, &self.w.data) + dot(&self.v, &self.v) + dot(&self.xi, &self.xi)
    }
}

/// Coefficients of the three pre-activation parts at time `t`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PathCoeffs {
    pub nn: f64,
    pub lin: f64,
    pub xi: f64,
}

impl PathCoeffs {
    pub fn at(t: f64, rho: f64, epsilon: f64) -> Self {
        if t == 0.0 {
            Self { nn: 1.0, lin: 0.0, xi: 0.0 }
        } else if t == 1.0 {
            Self { nn: 0.0, lin: rho, xi: epsilon.sqrt() }
        } else {
            Self { nn: (1.0 - t).sqrt(), lin: t.sqrt() * rho, xi: (t * epsilon).sqrt() }
        }
    }
}

/// `exp(β Σ_μ u_{Y_μ}(s_tμ(θ)))` times the standard Gaussian prior.
#[derive(Debug, Clone, Copy)]
pub struct LogTarget<'a> {
    pub dataset: &'a Dataset,
    pub model: &'a ModelSpec,
    pub t: f64,
    pub beta: f64,
}

impl<'a> LogTarget<'a> {
    /// Target at the dataset's own interpolation time.
    pub fn new(dataset: &'a Dataset, model: &'a ModelSpec) -> Result<Self> {
        Self::at_time(dataset, model, dataset.t)
    }

    pub fn at_time(dataset: &'a Dataset, model: &'a ModelSpec, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Argument(format!("interpolation time must lie in [0, 1], got {t}")));
        }
        if dataset.d != model.d || dataset.p != model.p || dataset.n != model.n {
            return Err(Error::Dimension(format!(
                "dataset ({}, {}, {}) against model ({}, {}, {})",
                dataset.d, dataset.p, dataset.n, model.d, model.p, model.n
            )));
        }
        Ok(Self { dataset, model, t, beta: 1.0 })
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    fn check(&self, theta: &ParamPoint) -> Result<()> {
        let (d, p, n) = theta.dims();
        if d != self.model.d || p != self.model.p || n != self.model.n || theta.v.len() != d || theta.w.rows != p {
            return Err(Error::Dimension(format!(
                "parameter point ({d}, {p}, {n}) against model ({}, {}, {})",
                self.model.d, self.model.p, self.model.n
            )));
        }
        Ok(())
    }

    fn coeffs(&self) -> PathCoeffs {
        PathCoeffs::at(self.t, self.model.params.rho, self.model.params.epsilon)
    }

    /// Student pre-activations `s_tμ(θ)` for every training input.
    pub fn preactivations(&self, theta: &ParamPoint) -> Result<Vec<f64>> {
        self.check(theta)?;
        Ok(self.preactivations_unchecked(theta))
    }

    pub(crate) fn preactivations_unchecked(&self, theta: &ParamPoint) -> Vec<f64> {
        let x = &self.dataset.x;
        let (d, p) = (self.model.d as f64, self.model.p as f64);
        let phi = &self.model.activation;
        let c = self.coeffs();
        (0..self.model.n)
            .map(|mu| {
                let xm = x.row(mu);
                let nn = if c.nn != 0.0 {
                    let mut acc = 0.0;
                    for i in 0..self.model.p {
                        acc += theta.a[i] * phi.eval(dot(theta.w.row(i), xm) / d.sqrt());
                    }
                    acc / p.sqrt()
                } else {
                    0.0
                };
                let lin = dot(&theta.v, xm) / d.sqrt();
                interp_combine(nn, self.model.params.rho * lin, theta.xi[mu], self.t, self.model.params.epsilon)
            })
            .collect()
    }

    /// `Σ_μ u_{Y_μ}(s_tμ(θ))`.
    pub fn log_likelihood(&self, theta: &ParamPoint) -> Result<f64> {
        self.check(theta)?;
        Ok(self.log_likelihood_unchecked(theta))
    }

    pub(crate) fn log_likelihood_unchecked(&self, theta: &ParamPoint) -> f64 {
        let s = self.preactivations_unchecked(theta);
        let k = &self.model.kernel;
        s.iter().zip(&self.dataset.y).map(|(&sm, &y)| k.log_density(y, sm)).sum()
    }

    /// `β · log_likelihood − ½‖θ‖²`.
    pub fn log_posterior_unnorm(&self, theta: &ParamPoint) -> Result<f64> {
        Ok(self.beta * self.log_likelihood(theta)? - 0.5 * theta.norm_sq())
    }

    /// Gradient of [`log_posterior_unnorm`](Self::log_posterior_unnorm).
    pub fn grad_log_posterior(&self, theta: &ParamPoint) -> Result<ParamPoint> {
        self.check(theta)?;
        Ok(self.value_and_grad(theta).1)
    }

    /// Log-posterior and its gradient in one pass.
    pub fn value_and_grad(&self, theta: &ParamPoint) -> (f64, ParamPoint) {
        let (d, p, n) = (self.model.d, self.model.p, self.model.n);
        let (sd, sp) = ((d as f64).sqrt(), (p as f64).sqrt());
        let phi = &self.model.activation;
        let kernel = &self.model.kernel;
        let c = self.coeffs();
        let mut g = ParamPoint {
            a: theta.a.iter().map(|v| -v).collect(),
            w: Matrix { rows: p, cols: d, data: theta.w.data.iter().map(|v| -v).collect() },
            v: theta.v.iter().map(|v| -v).collect(),
            xi: theta.xi.iter().map(|v| -v).collect(),
        };
        let mut loglik = 0.0;
        let mut phis = vec![0.0; p];
        let mut dphis = vec![0.0; p];
        for mu in 0..n {
            let xm = self.dataset.x.row(mu);
            let mut nn = 0.0;
            if c.nn != 0.0 {
                for i in 0..p {
                    let (f, fp) = phi.eval_with_deriv(dot(theta.w.row(i), xm) / sd);
                    phis[i] = f;
                    dphis[i] = fp;
                    nn += theta.a[i] * f;
                }
                nn /= sp;
            }
            let lin = dot(&theta.v, xm) / sd;
            let s = interp_combine(nn, self.model.params.rho * lin, theta.xi[mu], self.t, self.model.params.epsilon);
            let y = self.dataset.y[mu];
            loglik += kernel.log_density(y, s);
            let up = self.beta * kernel.u_prime(y, s);
            if up == 0.0 {
                continue;
            }
            if c.nn != 0.0 {
                let ca = up * c.nn / sp;
                for i in 0..p {
                    g.a[i] += ca * phis[i];
                    let cw = ca * theta.a[i] * dphis[i] / sd;
                    for (gw, xj) in g.w.row_mut(i).iter_mut().zip(xm) {
                        *gw += cw * xj;
                    }
                }
            }
            if c.lin != 0.0 {
                let cv = up * c.lin / sd;
                for (gv, xj) in g.v.iter_mut().zip(xm) {
                    *gv += cv * xj;
                }
            }
            g.xi[mu] += up * c.xi;
        }
        (self.beta * loglik - 0.5 * theta.norm_sq(), g)
    }

    /// Prediction for a fresh input: `s_new(θ)` split into the part that
    /// depends on `θ` and the coefficient of the fresh noise `ξ_new`.
    pub(crate) fn new_point_parts(&self, theta: &ParamPoint, x_new: &[f64]) -> (f64, f64) {
        let (d, p) = (self.model.d as f64, self.model.p as f64);
        let c = self.coeffs();
        let phi = &self.model.activation;
        let mut nn = 0.0;
        if c.nn != 0.0 {
            for i in 0..self.model.p {
                nn += theta.a[i] * phi.eval(dot(theta.w.row(i), x_new) / d.sqrt());
            }
            nn /= p.sqrt();
        }
        let lin = dot(&theta.v, x_new) / d.sqrt();
        (c.nn * nn + c.lin * lin, c.xi)
    }
}

/// Prior draws with likelihood weights.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble {
    pub d: usize,
    pub p: usize,
    pub n: usize,
    flat: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub log_z_hat: f64,
    pub ess: f64,
}

impl WeightedEnsemble {
    fn stride(&self) -> usize {
        self.p + self.p * self.d + self.d + self.n
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn point(&self, k: usize) -> ParamPoint {
        let s = self.stride();
        ParamPoint::from_slice(self.d, self.p, self.n, &self.flat[k * s..(k + 1) * s]).expect("stride matches dims")
    }

    /// Readout weights `a` of draw `k`.
    pub fn a(&self, k: usize) -> &[f64] {
        let s = self.stride();
        &self.flat[k * s..k * s + self.p]
    }

    /// Hidden weights `W` (row-major) of draw `k`.
    pub fn w(&self, k: usize) -> &[f64] {
        let s = self.stride();
        &self.flat[k * s + self.p..k * s + self.p + self.p * self.d]
    }

    /// Normalized weights over the index range `range`.
    pub fn normalized_weights_in(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let lw = &self.log_weights[range];
        let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        self.normalized_weights_in(0..self.len())
    }

    /// Posterior mean of `g(θ)` using the draws in `range`.
    pub fn weighted_mean_in<F: FnMut(usize) -> f64>(&self, range: std::ops::Range<usize>, mut g: F) -> f64 {
        let start = range.start;
        let w = self.normalized_weights_in(range);
        w.iter().enumerate().map(|(k, wk)| if *wk == 0.0 { 0.0 } else { wk * g(start + k) }).sum()
    }

    /// `count` indices drawn with replacement from `range` proportionally to weight.
    pub fn resample<R: Rng + ?Sized>(&self, range: std::ops::Range<usize>, count: usize, rng: &mut R) -> Vec<usize> {
        let start = range.start;
        let w = self.normalized_weights_in(range);
        let mut cdf = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for x in &w {
            acc += x;
            cdf.push(acc);
        }
        (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                start + cdf.partition_point(|&c| c < u).min(w.len() - 1)
            })
            .collect()
    }
}

/// `M` prior draws weighted by the likelihood of `target`.
pub fn importance_ensemble<R: Rng + ?Sized>(target: &LogTarget, m: usize, rng: &mut R) -> Result<WeightedEnsemble> {
    if m < 100 {
        return Err(Error::Argument(format!("importance ensemble needs M >= 100, got {m}")));
    }
    let (d, p, n) = (target.model.d, target.model.p, target.model.n);
    let stride = p + p * d + d + n;
    let mut flat = Vec::with_capacity(m * stride);
    let mut log_weights = Vec::with_capacity(m);
    let mut acc = WeightedAccumulator::new(0);
    for _ in 0..m {
        let theta = ParamPoint::sample_prior(d, p, n, rng);
        let lw = target.beta * target.log_likelihood_unchecked(&theta);
        acc.push(lw, &[]);
        log_weights.push(lw);
        flat.extend_from_slice(&theta.a);
        flat.extend_from_slice(&theta.w.data);
        flat.extend_from_slice(&theta.v);
        flat.extend_from_slice(&theta.xi);
    }
    if acc.is_degenerate() {
        return Err(Error::DegenerateTarget);
    }
    let ess = acc.ess();
    if ess < crate::ESS_FLOOR {
        log::warn!("importance ensemble has ESS {ess:.1} below the floor {}", crate::ESS_FLOOR);
    }
    Ok(WeightedEnsemble { d, p, n, flat, log_weights, log_z_hat: acc.log_mean_weight(), ess })
}

/// How to produce posterior draws.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// Prior importance sampling with `m` draws, resampled into replicas.
    Importance { m: usize, per_replica: usize },
    Mala(ChainConfig),
    /// Importance sampling over only the coordinates the likelihood sees
    /// (see [`ProjectedPrior`]); yields normalizations and posterior means
    /// but no full parameter points.
    Projected { m: usize },
}

/// `k` conditionally independent posterior approximations for one dataset.
pub fn replica_draws<R: Rng + ?Sized>(target: &LogTarget, k: usize, sampler: &Sampler, rng: &mut R) -> Result<Vec<Vec<ParamPoint>>> {
    if k < 2 {
        return Err(Error::Argument(format!("replica draws need k >= 2, got {k}")));
    }
    match sampler {
        Sampler::Importance { m, per_replica } => {
            let ens = importance_ensemble(target, *m, rng)?;
            let block = ens.len() / k;
            if block == 0 {
                return Err(Error::Argument(format!("{m} draws cannot be split into {k} replicas")));
            }
            Ok((0..k)
                .map(|r| {
                    let idx = ens.resample(r * block..(r + 1) * block, *per_replica, rng);
                    idx.into_iter().map(|i| ens.point(i)).collect()
                })
                .collect())
        }
        Sampler::Mala(cfg) => (0..k).map(|_| mala_chain(target, cfg, rng).map(|c| c.samples)).collect(),
        Sampler::Projected { .. } => Err(Error::Argument("the projected sampler does not produce parameter points".into())),
    }
}

/// Posterior mean of `E[Y | s_new(θ)]`, integrating the fresh linear-model
/// noise by Gauss–Hermite quadrature.
pub fn bayes_predictor(target: &LogTarget, x_new: &[f64], ensemble: &WeightedEnsemble) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::Argument("empty ensemble".into()));
    }
    if x_new.len() != target.model.d {
        return Err(Error::Dimension(format!("input of length {} against d={}", x_new.len(), target.model.d)));
    }
    let gh = GaussHermite::new(24)?;
    let kernel = &target.model.kernel;
    Ok(ensemble.weighted_mean_in(0..ensemble.len(), |k| {
        let theta = ensemble.point(k);
        let (base, cxi) = target.new_point_parts(&theta, x_new);
        if cxi == 0.0 {
            kernel.conditional_mean(base)
        } else {
            gh.expect_unchecked(|z| kernel.conditional_mean(base + cxi * z))
        }
    }))
}
