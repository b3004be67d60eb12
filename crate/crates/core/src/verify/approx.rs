use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{scaling_exponent_fit, Assertion, Report, ScalingFit, SE_THRESHOLD};
use crate::data::sample_inputs;
use crate::error::{Error, Result};
use crate::estimators::{Coords, Estimate};
use crate::model::{Activation, GaussEquivParams};
use crate::rng::substream;
use crate::stats::{mean_se, variance};

/// Inputs drawn per dimension (consecutive pairs form the `(μ, ν)` pairs).
pub const APPROX_INPUTS: usize = 48;

/// Allowed deviation of a residual-vs-remainder slope from 1.
pub const SLOPE_TOLERANCE: f64 = 0.3;

const DISPLAYS: [&str; 5] = ["phi_prime", "phi_square", "phi_phi", "phi_prime_phi_prime", "phi_square_phi_square"];

/// One display of the approximation suite across the dimension grid.
#[derive(Debug, Clone)]
pub struct ApproxDisplay {
    pub name: String,
    /// Per dimension: `(d, mean |residual|, mean predicted remainder, mean residual SE)`.
    pub per_d: Vec<(usize, f64, f64, f64)>,
    /// `log mean|residual|` against `log mean remainder`; `None` when every
    /// residual vanishes identically.
    pub fit: Option<ScalingFit>,
}

impl ApproxDisplay {
    pub fn slope_within(&self, tol: f64) -> bool {
        match &self.fit {
            Some(f) => (f.exponent - 1.0).abs() <= tol,
            None => self.per_d.iter().all(|r| r.1 == 0.0),
        }
    }
}

struct Moments {
    sum: [f64; 5],
    sum_sq: [f64; 5],
    count: usize,
}

/// Monte Carlo over `W*` for every display at fixed inputs, compared with
/// the leading terms; residual magnitudes are regressed on the predicted
/// remainders across `d_grid`.
///
/// The hidden pre-activations `(α_μ, α_ν) = (W_i X_μ, W_i X_ν)/√d` are drawn
/// from their exact bivariate law given the inputs. In the `φφ̃` display the
/// exactly known `E α_μ α_ν = X_μᵀX_ν/d` is used as a control variate.
pub fn approximation_suite<R: Rng + ?Sized>(
    phi: &Activation,
    d_grid: &[usize],
    m: usize,
    rng: &mut R,
) -> Result<(Vec<ApproxDisplay>, Report)> {
    if d_grid.len() < 3 {
        return Err(Error::Argument(format!("the approximation suite needs at least 3 dimensions, got {}", d_grid.len())));
    }
    if m < 2 {
        return Err(Error::Argument("the approximation suite needs at least 2 draws".into()));
    }
    let params = GaussEquivParams::for_activation(phi)?;
    let (rho, m2) = (params.rho, params.second_moment);
    let seed = rng.next_u64();
    let mut per_display: Vec<Vec<(usize, f64, f64, f64)>> = vec![Vec::new(); 5];
    for (gi, &d) in d_grid.iter().enumerate() {
        let x = sample_inputs(APPROX_INPUTS, d, &mut substream(seed, &[0, gi as u64]));
        let g = x.gram(d as f64);
        if (0..APPROX_INPUTS).any(|i| g.get(i, i) == 0.0) {
            return Err(Error::Argument("degenerate (zero) input".into()));
        }
        let mut res: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); 5];
        for k in 0..APPROX_INPUTS / 2 {
            let (mu, nu) = (2 * k, 2 * k + 1);
            let (qm, qn, c) = (g.get(mu, mu), g.get(nu, nu), g.get(mu, nu));
            let l21 = c / qm.sqrt();
            let l22 = (qn - l21 * l21).max(0.0).sqrt();
            let mut r = substream(seed, &[1, gi as u64, k as u64]);
            let mut mom = Moments { sum: [0.0; 5], sum_sq: [0.0; 5], count: 0 };
            // singles use α_μ and α_ν in turn, so they get two items per pair
            let mut single = [[0.0f64; 2]; 4];
            for _ in 0..m {
                let z1: f64 = r.sample(StandardNormal);
                let z2: f64 = r.sample(StandardNormal);
                let am = qm.sqrt() * z1;
                let an = l21 * z1 + l22 * z2;
                let (fm, dm) = phi.eval_with_deriv(am);
                let (fn_, dn) = phi.eval_with_deriv(an);
                let vals = [
                    dm - rho,
                    fm * fm - m2,
                    fm * fn_ - rho * rho * am * an,
                    dm * dn - rho * rho,
                    fm * fm * fn_ * fn_ - m2 * m2,
                ];
                for j in 0..5 {
                    mom.sum[j] += vals[j];
                    mom.sum_sq[j] += vals[j] * vals[j];
                }
                single[0][0] += dn - rho;
                single[0][1] += (dn - rho).powi(2);
                single[1][0] += fn_ * fn_ - m2;
                single[1][1] += (fn_ * fn_ - m2).powi(2);
                mom.count += 1;
            }
            let mf = mom.count as f64;
            let stat = |s: f64, s2: f64| {
                let mean = s / mf;
                let var = (s2 / mf - mean * mean).max(0.0) * mf / (mf - 1.0);
                (mean.abs(), (var / mf).sqrt())
            };
            let dev_m = (qm - 1.0).abs();
            let dev_n = (qn - 1.0).abs();
            let overlap = c.abs() / qn;
            for j in 0..5 {
                let (a, se) = stat(mom.sum[j], mom.sum_sq[j]);
                let pred = match j {
                    0 | 1 => dev_m,
                    2 => (c / qn).powi(2) + c * c / qn + c.abs() * dev_m,
                    _ => dev_m + overlap,
                };
                res[j].push((a, pred, se));
            }
            for j in 0..2 {
                let (a, se) = stat(single[j][0], single[j][1]);
                res[j].push((a, dev_n, se));
            }
        }
        for j in 0..5 {
            let items = &res[j];
            let k = items.len() as f64;
            let mr = items.iter().map(|v| v.0).sum::<f64>() / k;
            let mp = items.iter().map(|v| v.1).sum::<f64>() / k;
            let ms = items.iter().map(|v| v.2).sum::<f64>() / k;
            per_display[j].push((d, mr, mp, ms));
        }
    }
    let mut report = Report::new("approximations");
    let mut out = Vec::new();
    for (j, name) in DISPLAYS.iter().enumerate() {
        let rows = per_display[j].clone();
        let fit = if rows.iter().all(|r| r.1 == 0.0) {
            None
        } else {
            let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.2, r.1)).collect();
            Some(scaling_exponent_fit(&pairs, &mut substream(seed, &[2, j as u64]))?)
        };
        for r in &rows {
            let coords = Coords { d: r.0, p: 1, n: 0, t: 0.0 };
            let e = Estimate::new(r.1, r.3, coords).with_budget(APPROX_INPUTS, m, seed);
            report.row(format!("approx_{name}_abs_residual"), &e);
            let e = Estimate::new(r.2, 0.0, coords).with_budget(APPROX_INPUTS, m, seed);
            report.row(format!("approx_{name}_predicted_remainder"), &e);
        }
        let display = ApproxDisplay { name: name.to_string(), per_d: rows, fit };
        let a = match &display.fit {
            Some(f) => Assertion::in_range(
                format!("approx.{name}.slope"),
                f.exponent,
                (f.exponent_ci.1 - f.exponent_ci.0) / 4.0,
                1.0 - SLOPE_TOLERANCE,
                1.0 + SLOPE_TOLERANCE,
            )
            .with_detail(format!("r2 {:.3}, 95% CI [{:.3}, {:.3}]", f.r2, f.exponent_ci.0, f.exponent_ci.1)),
            None => Assertion::at_most(format!("approx.{name}.vanishes"), 0.0, 0.0, 0.0),
        };
        report.push(a);
        out.push(display);
    }
    Ok((out, report))
}

/// The ε-cancellation statistic across dimensions.
#[derive(Debug, Clone)]
pub struct EpsilonCheck {
    /// Per dimension: mean square of `ε − T`, with its standard error.
    pub per_d: Vec<(usize, f64, f64)>,
    /// Mean of `T = (‖φ(α)‖² − ραᵀφ(α))/p` at the largest dimension.
    pub mean_at_largest: Estimate,
    pub epsilon: f64,
    /// `None` when the mean square vanishes identically (linear `φ`).
    pub fit: Option<ScalingFit>,
}

/// `E(ε − [‖φ(α)‖² − ραᵀφ(α)]/p)²` over `m` joint draws of input and hidden
/// weights per dimension, with `α_i ~ N(0, ‖X‖²/d)` i.i.d. given the input.
pub fn epsilon_cancellation_check<R: Rng + ?Sized>(
    phi: &Activation,
    d_grid: &[usize],
    p: usize,
    m: usize,
    rng: &mut R,
) -> Result<(EpsilonCheck, Report)> {
    if d_grid.len() < 3 {
        return Err(Error::Argument(format!("the cancellation check needs at least 3 dimensions, got {}", d_grid.len())));
    }
    if p < 64 {
        return Err(Error::Argument(format!("the cancellation check needs p >= 64, got {p}")));
    }
    if m < 2 {
        return Err(Error::Argument("the cancellation check needs at least 2 draws".into()));
    }
    let params = GaussEquivParams::for_activation(phi)?;
    let (rho, eps) = (params.rho, params.epsilon);
    let seed = rng.next_u64();
    let mut per_d = Vec::new();
    let mut last_t = Vec::new();
    let mut report = Report::new("epsilon_cancellation");
    for (gi, &d) in d_grid.iter().enumerate() {
        let mut r = substream(seed, &[gi as u64]);
        let chi = ChiSquared::new(d as f64).map_err(|e| Error::Argument(e.to_string()))?;
        let mut ts = Vec::with_capacity(m);
        for _ in 0..m {
            let sq = (chi.sample(&mut r) / d as f64).sqrt();
            let mut acc = 0.0;
            for _ in 0..p {
                let a = sq * r.sample::<f64, _>(StandardNormal);
                let f = phi.eval(a);
                acc += f * f - rho * a * f;
            }
            ts.push(acc / p as f64);
        }
        let sq: Vec<f64> = ts.iter().map(|t| (eps - t).powi(2)).collect();
        let (ms, se) = mean_se(&sq);
        let coords = Coords { d, p, n: 0, t: 0.0 };
        report.row("epsilon_mean_square", &Estimate::new(ms, se, coords).with_budget(m, p, seed));
        let (mt, st) = mean_se(&ts);
        report.row("epsilon_statistic_mean", &Estimate::new(mt, st, coords).with_budget(m, p, seed));
        per_d.push((d, ms, se));
        last_t = ts;
    }
    let (mt, st) = mean_se(&last_t);
    let dl = *d_grid.last().expect("nonempty grid");
    let mean_at_largest = Estimate::new(mt, st, Coords { d: dl, p, n: 0, t: 0.0 }).with_budget(m, p, seed);
    report.push(Assertion::within_se(format!("epsilon.mean.d={dl}"), mt, eps, st, SE_THRESHOLD));
    let fit = if per_d.iter().all(|r| r.1 == 0.0) {
        None
    } else {
        let pairs: Vec<(f64, f64)> = per_d.iter().map(|r| (r.0 as f64, r.1)).collect();
        Some(scaling_exponent_fit(&pairs, &mut substream(seed, &[u64::MAX]))?)
    };
    match &fit {
        Some(f) => report.push(
            Assertion::in_range("epsilon.decay_exponent", f.exponent, (f.exponent_ci.1 - f.exponent_ci.0) / 4.0, -0.75, -0.25)
                .with_detail(format!("r2 {:.3}, 95% CI [{:.3}, {:.3}]", f.r2, f.exponent_ci.0, f.exponent_ci.1)),
        ),
        None => report.push(Assertion::at_most("epsilon.vanishes", 0.0, 0.0, 0.0)),
    }
    if variance(&last_t) == 0.0 {
        report.notes.push("the statistic is constant: linear activation".into());
    }
    Ok((EpsilonCheck { per_d, mean_at_largest, epsilon: eps, fit }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActivationKind;

    #[test]
    fn identity_phi_prime_residual_vanishes() {
        let (disp, _) = approximation_suite(&Activation::identity(), &[4, 8, 16], 50, &mut substream(1, &[])).unwrap();
        assert!(disp[0].fit.is_none());
        assert!(disp[0].per_d.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn identity_cancellation_is_exact() {
        let (chk, rep) = epsilon_cancellation_check(&Activation::identity(), &[4, 8, 16], 64, 20, &mut substream(2, &[])).unwrap();
        assert!(chk.per_d.iter().all(|r| r.1 == 0.0));
        assert!(rep.passed());
    }

    #[test]
    fn grid_too_small_is_rejected() {
        let phi = Activation::new(ActivationKind::Tanh);
        assert!(approximation_suite(&phi, &[4, 8], 10, &mut substream(3, &[])).is_err());
        assert!(epsilon_cancellation_check(&phi, &[4, 8, 16], 8, 10, &mut substream(3, &[])).is_err());
    }
}
