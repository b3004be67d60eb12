use rand::Rng;

use super::engine::{probe, ProbeOptions, ProbeTarget};
use super::{count_flagged, importance_budget, replicas, streams, Coords, Estimate};
use crate::data::{gen_dataset, glm_signal, nn_unchecked};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::posterior::Sampler;
use crate::stats::{jackknife, mean_se};

/// The four pieces of `d f̄_n/dt = −A₁ + A₂ + A₃ + B`.
#[derive(Debug, Clone)]
pub struct DerivativeTerms {
    pub a1: Estimate,
    pub a2: Estimate,
    pub a3: Estimate,
    pub b: Estimate,
    pub total: Estimate,
}

// Column layout of the per-replica feature rows.
const L: usize = 0;
const G1: usize = 1;
const G2: usize = 2;
const G3: usize = 3;
const B: usize = 4;

/// `E[L G]` from replica means, unbiased when `E G = 0` and centered by the
/// across-replica mean of `L`.
fn centered(rows: &[f64], k: f64, g: usize) -> f64 {
    // rows holds column means of [L, G1, G2, G3, B, L·G1, L·G2, L·G3]
    k / (k - 1.0) * (rows[4 + g] - rows[L] * rows[g])
}

/// Monte Carlo estimates of `A₁, A₂, A₃, B` at `0 < t < 1`.
///
/// Each replica contributes its `log Ẑ_t`, the three teacher-side sums
/// `Σ_μ u'(Y_μ, S_μ) (∂S_μ/∂t piece)` and the posterior bracket of
/// `Σ_μ u'(Y_μ, s_μ) ds_μ/dt`. The `A` terms are covariances of `log Ẑ` with
/// the sums (`log Ẑ` centered by its replica mean); errors are jackknifed.
pub fn interp_derivative_terms<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    n_outer: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<DerivativeTerms> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Argument(format!("the derivative terms need 0 < t < 1, got {t}")));
    }
    if model.n == 0 {
        return Err(Error::Argument("the derivative terms need n >= 1".into()));
    }
    if n_outer < 2 {
        return Err(Error::Argument("the derivative terms need at least two replicas".into()));
    }
    let draws = importance_budget(sampler, "the interpolation derivative")?;
    let seed = rng.next_u64();
    let (rho, eps) = (model.params.rho, model.params.epsilon);
    let runs = replicas(n_outer, |k| {
        let mut s = streams(seed, k);
        let ds = gen_dataset(model, t, &mut s.data)?;
        let targets = [ProbeTarget { t, y: &ds.y }];
        let opts = ProbeOptions { draws, b_term: true, ..Default::default() };
        let r = probe(model, &ds.x, ds.n, &targets, opts, &mut s.sampler)?.remove(0);
        let mut g = [0.0; 3];
        for mu in 0..ds.n {
            let x = ds.x.row(mu);
            let up = model.kernel.u_prime(ds.y[mu], ds.s[mu]);
            let nn = nn_unchecked(&ds.nn.a_star, &ds.nn.w_star, x, &model.activation);
            g[0] += up * nn / (1.0 - t).sqrt();
            g[1] += up * glm_signal(&ds.glm.v_star, x, rho) / t.sqrt();
            g[2] += up * (eps / t).sqrt() * ds.glm.xi_star[mu];
        }
        let row = vec![r.log_z, g[0], g[1], g[2], r.b, r.log_z * g[0], r.log_z * g[1], r.log_z * g[2]];
        Ok((row, r.ess))
    })?;
    let rows: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
    let flagged = count_flagged(runs.iter().map(|r| &r.1));
    let k = n_outer as f64;
    let inv = 1.0 / (2.0 * model.n as f64);
    let n = model.n as f64;
    let coords = Coords::of(model, t);
    let wrap = |(v, se): (f64, f64)| {
        Estimate::new(v, se, coords).with_budget(n_outer, draws, seed).with_flagged(flagged)
    };
    let a1 = wrap(jackknife(&rows, |m| inv * centered(m, k, G1)));
    let a2 = wrap(jackknife(&rows, |m| inv * centered(m, k, G2)));
    let a3 = wrap(jackknife(&rows, |m| inv * centered(m, k, G3)));
    let b = wrap(jackknife(&rows, |m| m[B] / n));
    let total = wrap(jackknife(&rows, |m| {
        inv * (-centered(m, k, G1) + centered(m, k, G2) + centered(m, k, G3)) + m[B] / n
    }));
    Ok(DerivativeTerms { a1, a2, a3, b, total })
}

/// Central difference `(f̄(t+h) − f̄(t−h))/2h` with both ends built from the
/// same latent draws and the same prior draws.
pub fn fd_free_entropy_derivative<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    h: f64,
    n_outer: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<Estimate> {
    if !(h > 0.0) || t - h < 0.0 || t + h > 1.0 {
        return Err(Error::Argument(format!("the stencil [{}, {}] leaves [0, 1]", t - h, t + h)));
    }
    if model.n == 0 {
        return Err(Error::Argument("the free entropy needs n >= 1".into()));
    }
    let draws = importance_budget(sampler, "the finite-difference derivative")?;
    let seed = rng.next_u64();
    let runs = replicas(n_outer, |k| {
        let mut s = streams(seed, k);
        let lo = gen_dataset(model, t - h, &mut s.data)?;
        let hi = lo.at_time(model, t + h)?;
        let targets = [ProbeTarget { t: t - h, y: &lo.y }, ProbeTarget { t: t + h, y: &hi.y }];
        let opts = ProbeOptions { draws, ..Default::default() };
        let r = probe(model, &lo.x, lo.n, &targets, opts, &mut s.sampler)?;
        Ok(((r[1].log_z - r[0].log_z) / (2.0 * h * model.n as f64), r[0].ess.min(r[1].ess)))
    })?;
    let vals: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (value, stderr) = mean_se(&vals);
    Ok(Estimate::new(value, stderr, Coords::of(model, t))
        .with_budget(n_outer, draws, seed)
        .with_flagged(count_flagged(runs.iter().map(|r| &r.1))))
}
