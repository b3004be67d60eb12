use rand::Rng;

use super::{Assertion, Report, SE_THRESHOLD};
use crate::data::{gen_dataset, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{count_flagged, n_inner, replicas, streams, Coords, Estimate};
use crate::model::ModelSpec;
use crate::posterior::{importance_ensemble, mala_chain, LogTarget, ParamPoint, Sampler};
use crate::stats::mean_se;

#[derive(Debug, Clone, PartialEq)]
pub struct NishimoriConfig {
    pub n_datasets: usize,
    pub sampler: Sampler,
    /// Pairs of posterior draws averaged per dataset.
    pub pairs: usize,
    pub times: Vec<f64>,
}

impl Default for NishimoriConfig {
    fn default() -> Self {
        Self {
            n_datasets: 200,
            sampler: Sampler::Importance { m: 200_000, per_replica: 400 },
            pairs: 400,
            times: vec![0.0, 0.5, 1.0],
        }
    }
}

/// Observables `g(θ, θ'; D)`, each symmetric under swapping its two points.
const OBSERVABLES: [&str; 6] =
    ["readout_overlap", "hidden_overlap", "linear_overlap", "tanh_readout_overlap", "u_prime_product", "constant"];

struct PointView {
    theta: ParamPoint,
    s: Vec<f64>,
}

fn observables(model: &ModelSpec, ds: &Dataset, x: &PointView, y: &PointView, out: &mut [f64]) {
    let (d, p, n) = (model.d as f64, model.p as f64, model.n.max(1) as f64);
    let qa: f64 = x.theta.a.iter().zip(&y.theta.a).map(|(u, v)| u * v).sum();
    let qw: f64 = x.theta.w.data.iter().zip(&y.theta.w.data).map(|(u, v)| u * v).sum();
    let qv: f64 = x.theta.v.iter().zip(&y.theta.v).map(|(u, v)| u * v).sum();
    let k = &model.kernel;
    let up: f64 = (0..ds.n).map(|mu| k.u_prime(ds.y[mu], x.s[mu]) * k.u_prime(ds.y[mu], y.s[mu])).sum();
    out[0] = qa / p;
    out[1] = qw / (p * d);
    out[2] = qv / d;
    out[3] = (qa / p.sqrt()).tanh();
    out[4] = up / n;
    out[5] = 1.0;
}

/// Draw pairs `(θ¹_i, θ²_i)` from two conditionally independent posterior
/// approximations, and the ESS behind them.
fn posterior_pairs<R: Rng + ?Sized>(
    target: &LogTarget,
    sampler: &Sampler,
    pairs: usize,
    rng: &mut R,
) -> Result<(Vec<ParamPoint>, Vec<ParamPoint>, f64)> {
    match sampler {
        Sampler::Importance { m, .. } => {
            let ens = importance_ensemble(target, *m, rng)?;
            let half = ens.len() / 2;
            let ess_of = |r: std::ops::Range<usize>| {
                let w = ens.normalized_weights_in(r);
                1.0 / w.iter().map(|x| x * x).sum::<f64>()
            };
            let ess = ess_of(0..half).min(ess_of(half..2 * half));
            let a = ens.resample(0..half, pairs, rng).into_iter().map(|i| ens.point(i)).collect();
            let b = ens.resample(half..2 * half, pairs, rng).into_iter().map(|i| ens.point(i)).collect();
            Ok((a, b, ess))
        }
        Sampler::Mala(cfg) => {
            let c1 = mala_chain(target, cfg, rng)?;
            let c2 = mala_chain(target, cfg, rng)?;
            let take = |c: Vec<ParamPoint>| {
                let stride = (c.len() / pairs).max(1);
                c.into_iter().step_by(stride).take(pairs).collect::<Vec<_>>()
            };
            Ok((take(c1.samples), take(c2.samples), f64::INFINITY))
        }
        Sampler::Projected { .. } => {
            Err(Error::Argument("the Nishimori suite needs full parameter draws (importance or MALA)".into()))
        }
    }
}

/// Compares `E⟨g(θ*, θ¹)⟩` with `E⟨g(θ¹, θ²)⟩` for a battery of bounded
/// observables, at every requested interpolation time. Each dataset
/// contributes the paired difference of the two sides.
pub fn nishimori_suite<R: Rng + ?Sized>(model: &ModelSpec, cfg: &NishimoriConfig, rng: &mut R) -> Result<Report> {
    if cfg.pairs == 0 {
        return Err(Error::Argument("the Nishimori suite needs at least one draw pair".into()));
    }
    let mut report = Report::new("nishimori");
    for &t in &cfg.times {
        let seed = rng.next_u64();
        let runs = replicas(cfg.n_datasets, |k| {
            let mut s = streams(seed, k);
            let ds = gen_dataset(model, t, &mut s.data)?;
            let target = LogTarget::new(&ds, model)?;
            let (first, second, ess) = posterior_pairs(&target, &cfg.sampler, cfg.pairs, &mut s.sampler)?;
            let view = |th: ParamPoint| {
                let s = target.preactivations_unchecked(&th);
                PointView { theta: th, s }
            };
            let teacher = PointView {
                theta: ParamPoint {
                    a: ds.nn.a_star.clone(),
                    w: ds.nn.w_star.clone(),
                    v: ds.glm.v_star.clone(),
                    xi: ds.glm.xi_star.clone(),
                },
                s: ds.s.clone(),
            };
            let no = OBSERVABLES.len();
            let (mut tsum, mut rsum) = (vec![0.0; no], vec![0.0; no]);
            let mut buf = vec![0.0; no];
            let count = first.len().min(second.len());
            for (a, b) in first.into_iter().zip(second).take(count) {
                let (a, b) = (view(a), view(b));
                observables(model, &ds, &teacher, &a, &mut buf);
                for j in 0..no {
                    tsum[j] += 0.5 * buf[j];
                }
                observables(model, &ds, &teacher, &b, &mut buf);
                for j in 0..no {
                    tsum[j] += 0.5 * buf[j];
                }
                observables(model, &ds, &a, &b, &mut buf);
                for j in 0..no {
                    rsum[j] += buf[j];
                }
            }
            let c = count as f64;
            Ok((tsum.iter().map(|v| v / c).collect::<Vec<_>>(), rsum.iter().map(|v| v / c).collect::<Vec<_>>(), ess))
        })?;
        let flagged = count_flagged(runs.iter().map(|r| &r.2));
        if flagged > 0 {
            report.notes.push(format!("t={t}: {flagged} of {} datasets below the ESS floor", cfg.n_datasets));
        }
        let coords = Coords::of(model, t);
        for (j, name) in OBSERVABLES.iter().enumerate() {
            let teacher: Vec<f64> = runs.iter().map(|r| r.0[j]).collect();
            let replica: Vec<f64> = runs.iter().map(|r| r.1[j]).collect();
            let diff: Vec<f64> = teacher.iter().zip(&replica).map(|(a, b)| a - b).collect();
            let est = |xs: &[f64]| {
                let (v, se) = mean_se(xs);
                Estimate::new(v, se, coords).with_budget(cfg.n_datasets, n_inner(&cfg.sampler), seed).with_flagged(flagged)
            };
            let (et, er, ed) = (est(&teacher), est(&replica), est(&diff));
            report.row(format!("nishimori_{name}_teacher"), &et);
            report.row(format!("nishimori_{name}_replica"), &er);
            report.row(format!("nishimori_{name}_difference"), &ed);
            report.push(
                Assertion::within_se(format!("nishimori.{name}.t={t}"), ed.value, 0.0, ed.stderr, SE_THRESHOLD)
                    .with_detail(format!("teacher side {:.5}, replica side {:.5}", et.value, er.value)),
            );
        }
    }
    Ok(report)
}
