use rand::Rng;
use rand_distr::StandardNormal;

use super::{LogTarget, ParamPoint};
use crate::error::{Error, Result};
use crate::stats::mean_se;

/// Metropolis-adjusted Langevin settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub step_size: f64,
    pub n_steps: usize,
    pub n_burn: usize,
    /// Acceptance rate targeted while adapting the step during burn-in.
    pub adapt_target: f64,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { step_size: 0.05, n_steps: 6000, n_burn: 1000, adapt_target: 0.574, thin: 1 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::Argument(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.n_steps <= self.n_burn {
            return Err(Error::Argument(format!("n_steps ({}) must exceed n_burn ({})", self.n_steps, self.n_burn)));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::Argument(format!("acceptance target must lie in (0, 1), got {}", self.adapt_target)));
        }
        if self.thin == 0 {
            return Err(Error::Argument("thinning must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<ParamPoint>,
    /// Log-likelihood (at β = 1 scale, without the β factor) of each kept sample.
    pub log_likelihoods: Vec<f64>,
    /// Acceptance rate after burn-in.
    pub acceptance: f64,
    pub step_size: f64,
}

struct State {
    x: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
    loglik: f64,
}

fn evaluate(target: &LogTarget, x: &[f64]) -> State {
    let (d, p, n) = (target.model.d, target.model.p, target.model.n);
    let theta = ParamPoint::from_slice(d, p, n, x).expect("consistent flat layout");
    let (logp, g) = target.value_and_grad(&theta);
    let loglik = if target.beta != 0.0 {
        (logp + 0.5 * theta.norm_sq()) / target.beta
    } else {
        target.log_likelihood_unchecked(&theta)
    };
    State { x: x.to_vec(), logp, grad: g.to_vec(), loglik }
}

/// `log q(to | from)` up to a constant for the Langevin proposal.
fn log_q(to: &[f64], from: &State, h: f64) -> f64 {
    let mut s = 0.0;
    for ((t, f), g) in to.iter().zip(&from.x).zip(&from.grad) {
        let r = t - f - 0.5 * h * g;
        s += r * r;
    }
    -s / (2.0 * h)
}

/// MALA chain from a prior draw.
pub fn mala_chain<R: Rng + ?Sized>(target: &LogTarget, config: &ChainConfig, rng: &mut R) -> Result<ChainOutput> {
    let (d, p, n) = (target.model.d, target.model.p, target.model.n);
    let start = ParamPoint::sample_prior(d, p, n, rng);
    mala_chain_from(target, config, start, rng)
}

pub(crate) fn mala_chain_from<R: Rng + ?Sized>(
    target: &LogTarget,
    config: &ChainConfig,
    start: ParamPoint,
    rng: &mut R,
) -> Result<ChainOutput> {
    config.validate()?;
    let (d, p, n) = (target.model.d, target.model.p, target.model.n);
    let mut cur = evaluate(target, &start.to_vec());
    let mut log_h = config.step_size.ln();
    let mut accepted = 0usize;
    let mut post = 0usize;
    let mut samples = Vec::new();
    let mut log_likelihoods = Vec::new();
    let mut prop = vec![0.0; cur.x.len()];
    for step in 0..config.n_steps {
        let h = log_h.exp();
        let sh = h.sqrt();
        for ((q, x), g) in prop.iter_mut().zip(&cur.x).zip(&cur.grad) {
            *q = x + 0.5 * h * g + sh * rng.sample::<f64, _>(StandardNormal);
        }
        let next = evaluate(target, &prop);
        let log_alpha = next.logp - cur.logp + log_q(&cur.x, &next, h) - log_q(&next.x, &cur, h);
        let alpha = if log_alpha.is_nan() { 0.0 } else { log_alpha.min(0.0).exp() };
        let accept = rng.random::<f64>() < alpha;
        if accept {
            cur = next;
        }
        if step < config.n_burn {
            let gain = 1.0 / ((step + 1) as f64).powf(0.6);
            log_h += gain * (alpha - config.adapt_target);
        } else {
            post += 1;
            if accept {
                accepted += 1;
            }
            if (step - config.n_burn) % config.thin == 0 {
                samples.push(ParamPoint::from_slice(d, p, n, &cur.x)?);
                log_likelihoods.push(cur.loglik);
            }
        }
    }
    let acceptance = accepted as f64 / post as f64;
    if acceptance < 0.05 {
        return Err(Error::MixingFailure { acceptance });
    }
    Ok(ChainOutput { samples, log_likelihoods, acceptance, step_size: log_h.exp() })
}

/// Thermodynamic-integration estimate of `log Z`.
#[derive(Debug, Clone)]
pub struct TiEstimate {
    pub log_z: f64,
    pub stderr: f64,
    pub betas: Vec<f64>,
    pub mean_log_lik: Vec<f64>,
}

/// `log Z = ∫₀¹ ⟨log L⟩_β dβ` on the ladder `β_k = (k/K)³` (Simpson in `k/K`),
/// with one annealed MALA chain and batch-means errors per rung; the `β = 0`
/// rung is a plain prior average over `prior_draws` draws.
pub fn thermodynamic_log_z<R: Rng + ?Sized>(
    target: &LogTarget,
    rungs: usize,
    config: &ChainConfig,
    prior_draws: usize,
    rng: &mut R,
) -> Result<TiEstimate> {
    if rungs < 2 || rungs % 2 != 0 {
        return Err(Error::Argument(format!("the rung count must be even and >= 2, got {rungs}")));
    }
    let (d, p, n) = (target.model.d, target.model.p, target.model.n);
    let mut betas = Vec::with_capacity(rungs + 1);
    let mut means = Vec::with_capacity(rungs + 1);
    let mut ses = Vec::with_capacity(rungs + 1);
    let base = target.with_beta(0.0);
    let prior_ll: Vec<f64> =
        (0..prior_draws).map(|_| base.log_likelihood_unchecked(&ParamPoint::sample_prior(d, p, n, rng))).collect();
    let (m0, s0) = mean_se(&prior_ll);
    betas.push(0.0);
    means.push(m0);
    ses.push(s0);
    let mut state = ParamPoint::sample_prior(d, p, n, rng);
    let mut cfg = config.clone();
    for k in 1..=rungs {
        let x = k as f64 / rungs as f64;
        let beta = x * x * x;
        let tb = target.with_beta(beta);
        let out = mala_chain_from(&tb, &cfg, state, rng)?;
        state = out.samples.last().cloned().expect("chain produced samples");
        cfg.step_size = out.step_size;
        let (m, se) = batch_means(&out.log_likelihoods, 20);
        betas.push(beta);
        means.push(m);
        ses.push(se);
    }
    // ∫ g(β) dβ = ∫ g(x³) 3x² dx, Simpson on the uniform x grid
    let hx = 1.0 / rungs as f64;
    let (mut log_z, mut var) = (0.0, 0.0);
    for k in 0..=rungs {
        let x = k as f64 * hx;
        let simpson = if k == 0 || k == rungs { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let w = simpson * hx / 3.0 * 3.0 * x * x;
        log_z += w * means[k];
        var += (w * ses[k]).powi(2);
    }
    Ok(TiEstimate { log_z, stderr: var.sqrt(), betas, mean_log_lik: means })
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    if size == 0 {
        return mean_se(xs);
    }
    let bm: Vec<f64> = (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let (_, se) = mean_se(&bm);
    let m = xs[..batches * size].iter().sum::<f64>() / (batches * size) as f64;
    (m, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ChainConfig::default().validate().is_ok());
        let bad = ChainConfig { n_steps: 10, n_burn: 10, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ChainConfig { adapt_target: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn batch_means_of_iid_series() {
        let xs: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (m, se) = batch_means(&xs, 10);
        assert_eq!(m, 0.0);
        assert_eq!(se, 0.0);
    }
}
