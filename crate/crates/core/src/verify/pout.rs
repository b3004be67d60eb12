use rand::Rng;
use rand_distr::StandardNormal;

use super::{Assertion, Report, SE_THRESHOLD};
use crate::error::{Error, Result};
use crate::estimators::{Coords, Estimate};
use crate::model::{ModelSpec, RatioKind};
use crate::stats::mean_se;

/// Fixed pre-activations always included, besides random ones.
const FIXED_S: [f64; 2] = [0.3, -1.1];
const RANDOM_S: usize = 3;

/// Smallest number of response draws per pre-activation.
pub const MIN_POUT_DRAWS: usize = 10_000;

/// Zero conditional means of `u'`, `U_μμ = P''/P` and `U_μν = u'_μ u'_ν`,
/// and second moments under the readout-derived bounds, from `m` response
/// draws per pre-activation.
pub fn pout_property_suite<R: Rng + ?Sized>(model: &ModelSpec, m: usize, rng: &mut R) -> Result<Report> {
    if m < MIN_POUT_DRAWS {
        return Err(Error::Argument(format!("the P_out suite needs M >= {MIN_POUT_DRAWS}, got {m}")));
    }
    let kernel = &model.kernel;
    let bounds = kernel.moment_bounds();
    let scale = model.params.second_moment.sqrt();
    let mut svals = FIXED_S.to_vec();
    for _ in 0..RANDOM_S {
        svals.push(scale * rng.sample::<f64, _>(StandardNormal));
    }
    let mut report = Report::new("pout_properties");
    let coords = Coords::of(model, 0.0);
    let est = |xs: &[f64]| {
        let (v, se) = mean_se(xs);
        Estimate::new(v, se, coords).with_budget(m, 1, 0)
    };
    let draws = |s: f64, rng: &mut R| -> (Vec<f64>, Vec<f64>) {
        let mut up = Vec::with_capacity(m);
        let mut umm = Vec::with_capacity(m);
        for _ in 0..m {
            let (y, _, _) = kernel.sample(s, rng);
            up.push(kernel.u_prime(y, s));
            umm.push(kernel.ratio(RatioKind::XX, y, s));
        }
        (up, umm)
    };
    let mut per_s = Vec::new();
    for &s in &svals {
        let (up, umm) = draws(s, rng);
        let (e1, e2) = (est(&up), est(&umm));
        let sq1: Vec<f64> = up.iter().map(|v| v * v).collect();
        let sq2: Vec<f64> = umm.iter().map(|v| v * v).collect();
        let (m1, m2) = (est(&sq1), est(&sq2));
        report.row(format!("u_prime_mean_s={s:.4}"), &e1);
        report.row(format!("u_mumu_mean_s={s:.4}"), &e2);
        report.push(Assertion::within_se(format!("pout.u_prime_mean.s={s:.4}"), e1.value, 0.0, e1.stderr, SE_THRESHOLD));
        report.push(Assertion::within_se(format!("pout.u_mumu_mean.s={s:.4}"), e2.value, 0.0, e2.stderr, SE_THRESHOLD));
        report.push(Assertion::at_most(format!("pout.u_prime_sq.s={s:.4}"), m1.value, m1.stderr, bounds.u_prime_sq));
        report.push(Assertion::at_most(format!("pout.u_mumu_sq.s={s:.4}"), m2.value, m2.stderr, bounds.u_mumu_sq));
        per_s.push((s, up));
    }
    for w in per_s.windows(2) {
        let (s, a) = (&w[0].0, &w[0].1);
        let (s2, b) = (&w[1].0, &w[1].1);
        // independent responses at (S, S'): the two draw sets are independent
        let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let sq: Vec<f64> = prod.iter().map(|v| v * v).collect();
        let (e, q) = (est(&prod), est(&sq));
        let tag = format!("s={s:.4},s'={s2:.4}");
        report.row(format!("u_munu_mean_{tag}"), &e);
        report.push(Assertion::within_se(format!("pout.u_munu_mean.{tag}"), e.value, 0.0, e.stderr, SE_THRESHOLD));
        report.push(Assertion::at_most(format!("pout.u_munu_sq.{tag}"), q.value, q.stderr, bounds.u_munu_sq));
    }
    Ok(report)
}
