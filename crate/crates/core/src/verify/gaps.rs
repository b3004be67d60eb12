use rand::Rng;

use super::{scaling_exponent_fit, Assertion, Report, ScalingFit, ScalingPoint, SE_THRESHOLD};
use crate::data::{gen_dataset_coupled, gen_test_points, Coupling};
use crate::error::{Error, Result};
use crate::estimators::engine::{probe, stack, ProbeOptions, ProbeTarget};
use crate::estimators::{
    count_flagged, expected_sq_error, kappa, log_z_for, n_inner, predictions, replicas, streams, Coords, Estimate,
};
use crate::model::ModelSpec;
use crate::posterior::Sampler;
use crate::stats::mean_se;

/// Largest allowed spread (max/min) of `gap/√κ` along a scan.
pub const RATIO_BOUND: f64 = 5.0;

/// Replicas, test points and sampler used at every triplet of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanBudget {
    pub n_outer: usize,
    /// Test points per dataset (generalization scans only).
    pub n_test: usize,
    pub sampler: Sampler,
}

#[derive(Debug, Clone)]
pub struct GapScan {
    pub points: Vec<ScalingPoint>,
    /// `log gap` against `log κ`; `None` unless every gap is positive.
    pub fit: Option<ScalingFit>,
    pub report: Report,
}

fn check_sequence(seq: &[(usize, usize, usize)]) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Argument("a gap scan needs at least one (d, p, n) triplet".into()));
    }
    if let Some(&(d, p, n)) = seq.iter().find(|&&(d, p, n)| d == 0 || p == 0 || n == 0) {
        return Err(Error::Argument(format!("gap scans need positive sizes, got ({d}, {p}, {n})")));
    }
    for w in seq.windows(2) {
        let (a, b) = (kappa(w[0].0, w[0].1, w[0].2), kappa(w[1].0, w[1].1, w[1].2));
        if !(b < a) {
            return Err(Error::Argument(format!("kappa must strictly decrease along the scan: {w:?} gives {a} then {b}")));
        }
    }
    Ok(())
}

/// Per-replica `(endpoint 0 value, endpoint 1 value, min ESS)`.
type Endpoints = Vec<(f64, f64, f64)>;

fn scan<F>(name: &str, quantity: &str, model: &ModelSpec, seq: &[(usize, usize, usize)], budget: &ScanBudget, seed: u64, run: F) -> Result<GapScan>
where
    F: Fn(&ModelSpec, u64) -> Result<Endpoints>,
{
    check_sequence(seq)?;
    let mut report = Report::new(name);
    let mut points = Vec::new();
    for (i, &(d, p, n)) in seq.iter().enumerate() {
        let m = model.with_dims(d, p, n);
        let runs = run(&m, crate::rng::derive_seed(seed, &[i as u64]))?;
        let flagged = count_flagged(runs.iter().map(|r| &r.2));
        if flagged > 0 {
            report.notes.push(format!("d={d}, p={p}, n={n}: {flagged} of {} replicas below the ESS floor", budget.n_outer));
        }
        let est = |xs: &[f64], t: f64| {
            let (v, se) = mean_se(xs);
            Estimate::new(v, se, Coords::of(&m, t)).with_budget(budget.n_outer, n_inner(&budget.sampler), seed).with_flagged(flagged)
        };
        let v0: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let v1: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let diff: Vec<f64> = runs.iter().map(|r| r.0 - r.1).collect();
        report.row(quantity, &est(&v0, 0.0));
        report.row(quantity, &est(&v1, 1.0));
        let mut gap = est(&diff, 0.0);
        report.row(format!("{quantity}_gap"), &gap);
        gap.value = gap.value.abs();
        points.push(ScalingPoint { d, p, n, kappa: kappa(d, p, n), gap });
    }
    for w in points.windows(2) {
        let (a, b) = (&w[0].gap, &w[1].gap);
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        report.push(
            Assertion::at_most(format!("{name}.non_increasing.d={}->{}", w[0].d, w[1].d), b.value - a.value, se, SE_THRESHOLD * se)
                .with_detail(format!("gaps {:.4e} -> {:.4e}", a.value, b.value)),
        );
    }
    let ratios: Vec<f64> = points.iter().map(|pt| pt.gap.value / pt.kappa.sqrt()).collect();
    let spread = if ratios.iter().all(|&r| r == 0.0) {
        1.0
    } else {
        ratios.iter().cloned().fold(f64::MIN, f64::max) / ratios.iter().cloned().fold(f64::MAX, f64::min)
    };
    report.push(Assertion::at_most(format!("{name}.bounded_ratio"), spread, 0.0, RATIO_BOUND).with_detail(format!(
        "gap/sqrt(kappa) = [{}]",
        ratios.iter().map(|r| format!("{r:.4e}")).collect::<Vec<_>>().join(", ")
    )));
    let fit = if points.len() >= 3 && points.iter().all(|pt| pt.gap.value > 0.0) {
        let pairs: Vec<(f64, f64)> = points.iter().map(|pt| (pt.kappa, pt.gap.value)).collect();
        let f = scaling_exponent_fit(&pairs, &mut crate::rng::substream(seed, &[u64::MAX]))?;
        report.notes.push(format!(
            "gap ~ kappa^{:.3} (95% CI [{:.3}, {:.3}], r2 {:.3}); the bound predicts at most kappa^0.5 decay in the worst case",
            f.exponent, f.exponent_ci.0, f.exponent_ci.1, f.r2
        ));
        Some(f)
    } else {
        None
    };
    Ok(GapScan { points, fit, report })
}

/// Free-entropy gap `|f̄_n − f̄°_n|` along a `κ`-decreasing sequence.
///
/// Each replica draws the network and linear teachers coupled (see
/// [`Coupling::Aligned`]) and shares inputs, readout atoms and noises across
/// the two endpoints, so the per-replica difference has small variance.
pub fn theorem1_gap_scan<R: Rng + ?Sized>(
    model: &ModelSpec,
    seq: &[(usize, usize, usize)],
    budget: &ScanBudget,
    rng: &mut R,
) -> Result<GapScan> {
    let seed = rng.next_u64();
    scan("theorem1", "free_entropy", model, seq, budget, seed, |m, s| {
        replicas(budget.n_outer, |k| {
            let mut st = streams(s, k);
            let ds0 = gen_dataset_coupled(m, 0.0, Coupling::Aligned, &mut st.data)?;
            let ds1 = ds0.at_time(m, 1.0)?;
            let n = m.n as f64;
            match &budget.sampler {
                Sampler::Projected { m: draws } => {
                    let targets = [ProbeTarget { t: 0.0, y: &ds0.y }, ProbeTarget { t: 1.0, y: &ds1.y }];
                    let opts = ProbeOptions { draws: *draws, aligned: true, ..Default::default() };
                    let r = probe(m, &ds0.x, m.n, &targets, opts, &mut st.sampler)?;
                    Ok((r[0].log_z / n, r[1].log_z / n, r[0].ess.min(r[1].ess)))
                }
                sampler => {
                    let (l0, e0) = log_z_for(m, &ds0, sampler, &mut st.sampler)?;
                    let (l1, e1) = log_z_for(m, &ds1, sampler, &mut st.sampler)?;
                    Ok((l0 / n, l1 / n, e0.min(e1)))
                }
            }
        })
    })
}

/// Generalization-error gap `|E_n − E°_n|` along a `κ`-decreasing sequence,
/// with the same coupling as [`theorem1_gap_scan`] and shared test inputs.
pub fn theorem2_gap_scan<R: Rng + ?Sized>(
    model: &ModelSpec,
    seq: &[(usize, usize, usize)],
    budget: &ScanBudget,
    rng: &mut R,
) -> Result<GapScan> {
    if budget.n_test == 0 {
        return Err(Error::Argument("the generalization scan needs at least one test point".into()));
    }
    let seed = rng.next_u64();
    scan("theorem2", "gen_error", model, seq, budget, seed, |m, s| {
        replicas(budget.n_outer, |k| {
            let mut st = streams(s, k);
            let ds0 = gen_dataset_coupled(m, 0.0, Coupling::Aligned, &mut st.data)?;
            let ds1 = ds0.at_time(m, 1.0)?;
            let test0 = gen_test_points(m, &ds0, budget.n_test, &mut st.test)?;
            let test1 = test0.relabel(m, &ds1)?;
            let (p0, p1, ess) = match &budget.sampler {
                Sampler::Projected { m: draws } => {
                    let inputs = stack(&ds0.x, &test0.x);
                    let targets = [ProbeTarget { t: 0.0, y: &ds0.y }, ProbeTarget { t: 1.0, y: &ds1.y }];
                    let opts = ProbeOptions { draws: *draws, aligned: true, predict: true, ..Default::default() };
                    let mut r = probe(m, &inputs, m.n, &targets, opts, &mut st.sampler)?;
                    let ess = r[0].ess.min(r[1].ess);
                    let p1 = std::mem::take(&mut r[1].predictions);
                    (std::mem::take(&mut r[0].predictions), p1, ess)
                }
                sampler => {
                    let (p0, e0) = predictions(m, &ds0, &test0, sampler, &mut st.sampler)?;
                    let (p1, e1) = predictions(m, &ds1, &test1, sampler, &mut st.sampler)?;
                    (p0, p1, e0.min(e1))
                }
            };
            let err = |s: &[f64], p: &[f64]| {
                s.iter().zip(p).map(|(&sk, &pk)| expected_sq_error(m, sk, pk)).sum::<f64>() / budget.n_test as f64
            };
            Ok((err(&test0.s, &p0), err(&test1.s, &p1), ess))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_must_decrease() {
        assert!(check_sequence(&[(16, 16, 4), (64, 64, 4)]).is_ok());
        assert!(check_sequence(&[(64, 64, 4), (16, 16, 4)]).is_err());
        assert!(check_sequence(&[(16, 16, 4), (16, 16, 4)]).is_err());
        assert!(check_sequence(&[]).is_err());
    }
}
