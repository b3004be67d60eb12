//! Monte Carlo estimators of free entropies, mutual informations,
//! generalization errors and the interpolation derivative.
//!
//! Every estimator averages over independent dataset replicas. Replica `k`
//! draws its data, sampler and test streams from substreams of one master
//! seed, so estimators called with the same seed share datasets.

mod derivative;
pub(crate) mod engine;
mod entropy;
mod generalization;

pub use derivative::{fd_free_entropy_derivative, interp_derivative_terms, DerivativeTerms};
pub use entropy::{conditional_entropy_term, psi_at_scale, psi_term, PsiMode, MIN_SINGLE_DRAWS};
pub use generalization::{
    gen_error, gen_error_proxy, immse_check, immse_grid, side_mutual_information, ImmseReport,
};
pub(crate) use generalization::{expected_sq_error, predictions};

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{gen_dataset, Dataset};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::posterior::{importance_ensemble, thermodynamic_log_z, LogTarget, Sampler};
use crate::rng::{substream, tag, SimRng};
use crate::stats::mean_se;
use engine::{probe, ProbeOptions, ProbeTarget};

pub const CSV_HEADER: &str = "d,p,n,t,quantity,value,stderr,n_outer,n_inner,kappa,seed";

/// Rungs of the inverse-temperature ladder when the sampler is MALA.
pub const TI_RUNGS: usize = 16;

/// `(1 + n/d)(n/p + n/d^{3/2} + 1/√d)`.
pub fn kappa(d: usize, p: usize, n: usize) -> f64 {
    let (d, p, n) = (d as f64, p as f64, n as f64);
    (1.0 + n / d) * (n / p + n / d.powf(1.5) + 1.0 / d.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coords {
    pub d: usize,
    pub p: usize,
    pub n: usize,
    pub t: f64,
}

impl Coords {
    pub fn of(model: &ModelSpec, t: f64) -> Self {
        Self { d: model.d, p: model.p, n: model.n, t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    /// Dataset replicas.
    pub n_outer: usize,
    /// Per-dataset sampler budget.
    pub n_inner: usize,
    pub coords: Coords,
    pub kappa: f64,
    /// Replicas whose effective sample size fell below [`crate::ESS_FLOOR`].
    pub flagged: usize,
    pub seed: u64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, coords: Coords) -> Self {
        Self {
            value,
            stderr,
            n_outer: 0,
            n_inner: 0,
            coords,
            kappa: kappa(coords.d, coords.p, coords.n),
            flagged: 0,
            seed: 0,
        }
    }

    pub(crate) fn with_budget(mut self, n_outer: usize, n_inner: usize, seed: u64) -> Self {
        self.n_outer = n_outer;
        self.n_inner = n_inner;
        self.seed = seed;
        self
    }

    pub(crate) fn with_flagged(mut self, flagged: usize) -> Self {
        self.flagged = flagged;
        self
    }

    /// `|value − other|` in units of the combined standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        if self.stderr == 0.0 {
            return if self.value == reference { 0.0 } else { f64::INFINITY };
        }
        (self.value - reference).abs() / self.stderr
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        let mut out = self.clone();
        out.value = self.value - other.value;
        out.stderr = self.stderr.hypot(other.stderr);
        out.flagged += other.flagged;
        out
    }

    pub fn csv_row(&self, quantity: &str) -> String {
        let c = &self.coords;
        format!(
            "{},{},{},{},{},{:e},{:e},{},{},{:e},{}",
            c.d, c.p, c.n, c.t, quantity, self.value, self.stderr, self.n_outer, self.n_inner, self.kappa, self.seed
        )
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ± {:.6}", self.value, self.stderr)?;
        if self.flagged > 0 {
            write!(f, " ({} of {} replicas below the ESS floor)", self.flagged, self.n_outer)?;
        }
        Ok(())
    }
}

/// Per-dataset sampler budget.
pub fn n_inner(sampler: &Sampler) -> usize {
    match sampler {
        Sampler::Importance { m, .. } | Sampler::Projected { m } => *m,
        Sampler::Mala(cfg) => cfg.n_steps,
    }
}

/// Streams for replica `k` of a run seeded with `seed`.
pub(crate) struct ReplicaStreams {
    pub data: SimRng,
    pub sampler: SimRng,
    pub test: SimRng,
    pub side: SimRng,
}

pub(crate) fn streams(seed: u64, k: usize) -> ReplicaStreams {
    let k = k as u64;
    ReplicaStreams {
        data: substream(seed, &[tag::DATA, k]),
        sampler: substream(seed, &[tag::SAMPLER, k]),
        test: substream(seed, &[tag::TEST, k]),
        side: substream(seed, &[tag::SIDE, k]),
    }
}

/// Runs `job` for every replica in parallel; results come back in index order.
pub(crate) fn replicas<T, F>(n_outer: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if n_outer == 0 {
        return Err(Error::Argument("at least one dataset replica is required".into()));
    }
    (0..n_outer).into_par_iter().map(&job).collect()
}

pub(crate) fn count_flagged<'a, I: IntoIterator<Item = &'a f64>>(ess: I) -> usize {
    ess.into_iter().filter(|e| **e < crate::ESS_FLOOR).count()
}

/// The importance budget of a sampler that must reweight prior draws.
pub(crate) fn importance_budget(sampler: &Sampler, what: &str) -> Result<usize> {
    match sampler {
        Sampler::Importance { m, .. } | Sampler::Projected { m } => Ok(*m),
        Sampler::Mala(_) => Err(Error::Argument(format!("{what} needs an importance sampler"))),
    }
}

/// `(log Ẑ, ESS)` for one dataset; MALA reports an infinite ESS.
pub fn log_z_for<R: Rng + ?Sized>(model: &ModelSpec, ds: &Dataset, sampler: &Sampler, rng: &mut R) -> Result<(f64, f64)> {
    if model.readout().is_null() {
        // the likelihood does not see the parameters: every weight is equal
        let log_z = ds.y.iter().map(|&y| model.kernel.log_density(y, 0.0)).sum();
        return Ok((log_z, n_inner(sampler) as f64));
    }
    match sampler {
        Sampler::Projected { m } => {
            let targets = [ProbeTarget { t: ds.t, y: &ds.y }];
            let opts = ProbeOptions { draws: *m, ..Default::default() };
            let r = probe(model, &ds.x, ds.n, &targets, opts, rng)?;
            Ok((r[0].log_z, r[0].ess))
        }
        Sampler::Importance { m, .. } => {
            let target = LogTarget::new(ds, model)?;
            let ens = importance_ensemble(&target, *m, rng)?;
            Ok((ens.log_z_hat, ens.ess))
        }
        Sampler::Mala(cfg) => {
            let target = LogTarget::new(ds, model)?;
            let ti = thermodynamic_log_z(&target, TI_RUNGS, cfg, cfg.n_steps, rng)?;
            Ok((ti.log_z, f64::INFINITY))
        }
    }
}

/// `(log Ẑ_k, ESS_k)` for replicas `k = 0..n_outer` at time `t`.
pub fn log_z_replicas(model: &ModelSpec, t: f64, n_outer: usize, sampler: &Sampler, seed: u64) -> Result<Vec<(f64, f64)>> {
    replicas(n_outer, |k| {
        let mut s = streams(seed, k);
        let ds = gen_dataset(model, t, &mut s.data)?;
        log_z_for(model, &ds, sampler, &mut s.sampler)
    })
}

/// `(1/n) E log Z_t`.
pub fn free_entropy<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    n_outer: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<Estimate> {
    if model.n == 0 {
        return Err(Error::Argument("the free entropy needs n >= 1".into()));
    }
    let seed = rng.next_u64();
    let runs = log_z_replicas(model, t, n_outer, sampler, seed)?;
    let per: Vec<f64> = runs.iter().map(|(l, _)| l / model.n as f64).collect();
    let (value, stderr) = mean_se(&per);
    let flagged = count_flagged(runs.iter().map(|(_, e)| e));
    if flagged > 0 {
        log::warn!("free entropy: {flagged} of {n_outer} replicas below the ESS floor");
    }
    Ok(Estimate::new(value, stderr, Coords::of(model, t))
        .with_budget(n_outer, n_inner(sampler), seed)
        .with_flagged(flagged))
}

/// `I_n/n = −f̄_n + E log P_out(Y₁|S₁)`.
pub fn mutual_information<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    n_outer: usize,
    sampler: &Sampler,
    m_single: usize,
    rng: &mut R,
) -> Result<Estimate> {
    let f = free_entropy(model, t, n_outer, sampler, rng)?;
    let c = conditional_entropy_term(model, t, m_single, rng)?;
    let mut out = c.minus(&f);
    out.n_outer = f.n_outer;
    out.n_inner = f.n_inner;
    out.seed = f.seed;
    Ok(out)
}
