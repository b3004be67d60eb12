use rand::Rng;

use super::{Assertion, Report, BOOTSTRAP_RESAMPLES, SE_THRESHOLD};
use crate::error::{Error, Result};
use crate::estimators::{count_flagged, log_z_replicas, n_inner, Coords, Estimate};
use crate::model::ModelSpec;
use crate::posterior::Sampler;
use crate::rng::substream;
use crate::stats::{fit_through_origin, variance};

/// Smallest replica count accepted per grid point.
pub const MIN_REPLICAS: usize = 100;

/// Required proportionality quality of the variance fit.
pub const MIN_R2: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationPoint {
    pub d: usize,
    pub n: usize,
    /// `1/d + 1/n`.
    pub x: f64,
    /// Sample variance of `(1/n) log Z_t` across replicas.
    pub variance: f64,
    /// Bootstrap standard error of `variance`.
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub points: Vec<ConcentrationPoint>,
    /// `c` in `Var ≈ c (1/d + 1/n)`.
    pub slope: f64,
    pub r2: f64,
    pub report: Report,
}

fn bootstrap_variance_se<R: Rng + ?Sized>(xs: &[f64], rng: &mut R) -> f64 {
    let k = xs.len();
    let mut buf = vec![0.0; k];
    let vars: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..k)];
            }
            variance(&buf)
        })
        .collect();
    variance(&vars).sqrt()
}

/// Variance of the normalized log-partition function over the `(d, n)` grid,
/// with `p = d`, fitted through the origin against `1/d + 1/n`.
pub fn concentration_check<R: Rng + ?Sized>(
    model: &ModelSpec,
    t: f64,
    grid: &[(usize, usize)],
    n_outer: usize,
    sampler: &Sampler,
    rng: &mut R,
) -> Result<ConcentrationReport> {
    if n_outer < MIN_REPLICAS {
        return Err(Error::Argument(format!("concentration needs at least {MIN_REPLICAS} replicas per point, got {n_outer}")));
    }
    if grid.is_empty() || grid.iter().any(|&(d, n)| d == 0 || n == 0) {
        return Err(Error::Argument("concentration needs a nonempty grid of positive (d, n)".into()));
    }
    let seed = rng.next_u64();
    let mut report = Report::new("concentration");
    let mut points = Vec::new();
    for (gi, &(d, n)) in grid.iter().enumerate() {
        let m = model.with_dims(d, d, n);
        let runs = log_z_replicas(&m, t, n_outer, sampler, crate::rng::derive_seed(seed, &[gi as u64]))?;
        let per: Vec<f64> = runs.iter().map(|(l, _)| l / n as f64).collect();
        let var = variance(&per);
        let se = bootstrap_variance_se(&per, &mut substream(seed, &[gi as u64, 1]));
        let flagged = count_flagged(runs.iter().map(|(_, e)| e));
        if flagged > 0 {
            report.notes.push(format!("d={d}, n={n}: {flagged} of {n_outer} replicas below the ESS floor"));
        }
        let e = Estimate::new(var, se, Coords::of(&m, t)).with_budget(n_outer, n_inner(sampler), seed).with_flagged(flagged);
        report.row("log_z_over_n_variance", &e);
        points.push(ConcentrationPoint { d, n, x: 1.0 / d as f64 + 1.0 / n as f64, variance: var, se });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.variance).collect();
    let (slope, r2) = fit_through_origin(&xs, &ys);
    if points.len() >= 3 {
        report.push(Assertion::in_range("concentration.r2", r2, 0.0, MIN_R2, 1.0).with_detail(format!("slope {slope:.4e}")));
    }
    // the theorem bounds the variance from above, so only excess over the fit counts
    for p in &points {
        let excess = p.variance - slope * p.x;
        report.push(
            Assertion::at_most(format!("concentration.point.d={}.n={}", p.d, p.n), excess, p.se, SE_THRESHOLD * p.se)
                .with_detail(format!("variance {:.4e} against fitted {:.4e}", p.variance, slope * p.x)),
        );
    }
    Ok(ConcentrationReport { points, slope, r2, report })
}
