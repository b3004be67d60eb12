use rand::Rng;

use super::{Assertion, Report, SE_THRESHOLD};
use crate::error::Result;
use crate::estimators::{fd_free_entropy_derivative, interp_derivative_terms};
use crate::model::ModelSpec;
use crate::posterior::Sampler;

/// `B = 0` and `−A₁ + A₂ + A₃ + B` against a central difference of the free
/// entropy over `[t − h, t + h]`.
pub fn b_term_check<R: Rng + ?Sized>(model: &ModelSpec, t: f64, h: f64, n_outer: usize, sampler: &Sampler, rng: &mut R) -> Result<Report> {
    let terms = interp_derivative_terms(model, t, n_outer, sampler, rng)?;
    let fd = fd_free_entropy_derivative(model, t, h, n_outer, sampler, rng)?;
    let mut report = Report::new("b_term");
    for (q, e) in [("a1", &terms.a1), ("a2", &terms.a2), ("a3", &terms.a3), ("b", &terms.b), ("derivative_total", &terms.total)] {
        report.row(format!("interp_{q}"), e);
    }
    report.row("fd_derivative", &fd);
    report.push(Assertion::within_se(format!("b_term.zero.t={t}"), terms.b.value, 0.0, terms.b.stderr, SE_THRESHOLD));
    let diff = terms.total.minus(&fd);
    report.push(
        Assertion::within_se(format!("b_term.matches_fd.t={t}"), diff.value, 0.0, diff.stderr, SE_THRESHOLD)
            .with_detail(format!("decomposition {:.5e}, finite difference {:.5e}", terms.total.value, fd.value)),
    );
    Ok(report)
}
