//! Empirical checks of the identities, bounds and scaling statements.
//!
//! Each suite returns a [`Report`]: a list of pass/fail [`Assertion`]s with
//! the measured statistic, its standard error and the threshold, plus the
//! underlying estimates as CSV rows.

mod approx;
mod concentration;
mod gaps;
mod interp;
mod nishimori;
mod pout;

pub use approx::{approximation_suite, epsilon_cancellation_check, ApproxDisplay, EpsilonCheck};
pub use concentration::{concentration_check, ConcentrationPoint, ConcentrationReport, MIN_REPLICAS};
pub use gaps::{theorem1_gap_scan, theorem2_gap_scan, GapScan, ScanBudget};
pub use interp::b_term_check;
pub use nishimori::{nishimori_suite, NishimoriConfig};
pub use pout::{pout_property_suite, MIN_POUT_DRAWS};

use std::fmt::{self, Write as _};

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{Estimate, CSV_HEADER};
use crate::stats::{bootstrap_slope_ci, linear_fit};

/// Standard errors allowed by every "within SE" assertion.
pub const SE_THRESHOLD: f64 = 3.0;

/// Residual-bootstrap resamples behind every exponent interval.
pub const BOOTSTRAP_RESAMPLES: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub id: String,
    pub passed: bool,
    pub statistic: f64,
    pub se: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Assertion {
    /// `|value − reference| ≤ k · se`.
    pub fn within_se(id: impl Into<String>, value: f64, reference: f64, se: f64, k: f64) -> Self {
        let dev = (value - reference).abs();
        let passed = dev <= k * se || dev == 0.0;
        Self {
            id: id.into(),
            passed,
            statistic: value,
            se,
            threshold: k,
            detail: format!("reference {reference:.6e}, deviation {:.2} SE", if se > 0.0 { dev / se } else { 0.0 }),
        }
    }

    /// `value ≤ bound`.
    pub fn at_most(id: impl Into<String>, value: f64, se: f64, bound: f64) -> Self {
        Self { id: id.into(), passed: value <= bound, statistic: value, se, threshold: bound, detail: String::new() }
    }

    /// `lo ≤ value ≤ hi`; `threshold` records `hi`.
    pub fn in_range(id: impl Into<String>, value: f64, se: f64, lo: f64, hi: f64) -> Self {
        Self {
            id: id.into(),
            passed: value >= lo && value <= hi,
            statistic: value,
            se,
            threshold: hi,
            detail: format!("range [{lo}, {hi}]"),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        let extra = detail.into();
        if self.detail.is_empty() {
            self.detail = extra;
        } else {
            self.detail = format!("{}; {extra}", self.detail);
        }
        self
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {} statistic={:.6e} se={:.6e} threshold={:.6e} {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.statistic,
            self.se,
            self.threshold,
            self.detail
        )
        .trim_end()
        .to_string()
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary_line())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub suite: String,
    pub assertions: Vec<Assertion>,
    /// `(quantity, estimate)` pairs written as CSV rows.
    pub rows: Vec<(String, Estimate)>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(suite: impl Into<String>) -> Self {
        Self { suite: suite.into(), ..Default::default() }
    }

    pub fn push(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn row(&mut self, quantity: impl Into<String>, e: &Estimate) {
        self.rows.push((quantity.into(), e.clone()));
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn get(&self, id: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.id == id)
    }

    pub fn merge(&mut self, other: Report) {
        self.assertions.extend(other.assertions);
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for (q, e) in &self.rows {
            writeln!(out, "{}", e.csv_row(q)).unwrap();
        }
        out
    }

    /// One line per assertion, then a status line with a Bonferroni note.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for a in &self.assertions {
            writeln!(out, "{}", a.summary_line()).unwrap();
        }
        for n in &self.notes {
            writeln!(out, "# {n}").unwrap();
        }
        let k = self.assertions.len().max(1) as f64;
        let per = 0.0027;
        writeln!(
            out,
            "# suite {}: {} ({} assertions; chance of a spurious 3-SE failure under the null is at most {:.1}%)",
            self.suite,
            if self.passed() { "PASS" } else { "FAIL" },
            self.assertions.len(),
            100.0 * (per * k).min(1.0)
        )
        .unwrap();
        out
    }
}

/// Least squares on log-log coordinates with a residual-bootstrap interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    /// `(size, statistic)` pairs.
    pub points: Vec<(f64, f64)>,
    pub exponent: f64,
    pub exponent_ci: (f64, f64),
    pub r2: f64,
    pub intercept: f64,
}

/// One point of a `κ → 0` scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub d: usize,
    pub p: usize,
    pub n: usize,
    pub kappa: f64,
    pub gap: Estimate,
}

pub fn scaling_exponent_fit<R: Rng + ?Sized>(pairs: &[(f64, f64)], rng: &mut R) -> Result<ScalingFit> {
    if pairs.len() < 3 {
        return Err(Error::Argument(format!("a scaling fit needs at least 3 points, got {}", pairs.len())));
    }
    if let Some((x, y)) = pairs.iter().find(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return Err(Error::Argument(format!("scaling fits need positive sizes and statistics, got ({x}, {y})")));
    }
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let fit = linear_fit(&lx, &ly);
    let ci = bootstrap_slope_ci(&lx, &ly, BOOTSTRAP_RESAMPLES, 0.95, rng);
    Ok(ScalingFit { points: pairs.to_vec(), exponent: fit.slope, exponent_ci: ci, r2: fit.r2, intercept: fit.intercept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [4.0f64, 16.0, 64.0].iter().map(|&x| (x, x.powf(-0.5))).collect();
        let f = scaling_exponent_fit(&pts, &mut substream(1, &[])).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_statistic_has_zero_exponent() {
        let pts = vec![(1.0, 2.0), (2.0, 2.0), (4.0, 2.0)];
        let f = scaling_exponent_fit(&pts, &mut substream(1, &[])).unwrap();
        assert!(f.exponent.abs() < 1e-15);
    }

    #[test]
    fn nonpositive_statistic_is_rejected() {
        let pts = vec![(1.0, 2.0), (2.0, 0.0), (4.0, 2.0)];
        assert!(matches!(scaling_exponent_fit(&pts, &mut substream(1, &[])), Err(Error::Argument(_))));
        assert!(scaling_exponent_fit(&pts[..2], &mut substream(1, &[])).is_err());
    }

    #[test]
    fn report_status_and_csv() {
        let mut r = Report::new("demo");
        r.push(Assertion::within_se("a", 1.0, 1.1, 0.05, 3.0));
        assert!(r.passed());
        r.push(Assertion::at_most("b", 2.0, 0.0, 1.0));
        assert!(!r.passed());
        assert!(r.summary().contains("b FAIL"));
        assert_eq!(r.to_csv().lines().count(), 1);
    }
}
