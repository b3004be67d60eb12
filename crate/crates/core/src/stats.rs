//! Small statistics toolbox: moments, jackknife, log-sum-exp, weighted
//! streaming accumulators, regressions with bootstrap intervals, KS tests.

use rand::Rng;

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (v / n as f64).sqrt())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Delete-one jackknife for a statistic of the column means of `rows`.
///
/// `rows[k]` holds the per-replica feature vector; `stat` maps a vector of
/// feature means to the scalar of interest. Returns `(estimate, stderr)`.
pub fn jackknife<F: Fn(&[f64]) -> f64>(rows: &[Vec<f64>], stat: F) -> (f64, f64) {
    let k = rows.len();
    let dim = rows.first().map_or(0, |r| r.len());
    let mut totals = vec![0.0; dim];
    for r in rows {
        for (t, v) in totals.iter_mut().zip(r) {
            *t += v;
        }
    }
    let full: Vec<f64> = totals.iter().map(|t| t / k as f64).collect();
    let est = stat(&full);
    if k < 2 {
        return (est, f64::NAN);
    }
    let mut loo = Vec::with_capacity(k);
    let mut buf = vec![0.0; dim];
    for r in rows {
        for j in 0..dim {
            buf[j] = (totals[j] - r[j]) / (k - 1) as f64;
        }
        loo.push(stat(&buf));
    }
    let lm = mean(&loo);
    let var = (k - 1) as f64 / k as f64 * loo.iter().map(|x| (x - lm).powi(2)).sum::<f64>();
    (est, var.sqrt())
}

/// Self-normalized importance weights accumulated one draw at a time with a
/// running maximum, so that no log-weight is ever exponentiated unshifted.
#[derive(Debug, Clone)]
pub struct WeightedAccumulator {
    max: f64,
    sw: f64,
    sw2: f64,
    sums: Vec<f64>,
    count: usize,
}

impl WeightedAccumulator {
    pub fn new(n_obs: usize) -> Self {
        Self { max: f64::NEG_INFINITY, sw: 0.0, sw2: 0.0, sums: vec![0.0; n_obs], count: 0 }
    }

    fn rescale(&mut self, new_max: f64) {
        if self.max == f64::NEG_INFINITY {
            self.max = new_max;
            return;
        }
        let c = (self.max - new_max).exp();
        self.sw *= c;
        self.sw2 *= c * c;
        for s in &mut self.sums {
            *s *= c;
        }
        self.max = new_max;
    }

    /// Adds one draw; `obs` must have the length given at construction.
    #[inline]
    pub fn push(&mut self, log_w: f64, obs: &[f64]) {
        self.count += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.max {
            self.rescale(log_w);
        }
        let w = (log_w - self.max).exp();
        self.sw += w;
        self.sw2 += w * w;
        for (s, o) in self.sums.iter_mut().zip(obs) {
            *s += w * o;
        }
    }

    pub fn merge(&mut self, other: &WeightedAccumulator) {
        if other.max > self.max {
            self.rescale(other.max);
        }
        if other.max != f64::NEG_INFINITY {
            let c = (other.max - self.max).exp();
            self.sw += c * other.sw;
            self.sw2 += c * c * other.sw2;
            for (s, o) in self.sums.iter_mut().zip(&other.sums) {
                *s += c * o;
            }
        }
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == f64::NEG_INFINITY
    }

    /// `log( (1/M) Σ e^{log_w} )`.
    pub fn log_mean_weight(&self) -> f64 {
        self.max + self.sw.ln() - (self.count as f64).ln()
    }

    /// `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        if self.sw2 == 0.0 {
            return 0.0;
        }
        self.sw * self.sw / self.sw2
    }

    /// Self-normalized mean of observable `k`.
    pub fn mean(&self, k: usize) -> f64 {
        self.sums[k] / self.sw
    }

    pub fn means(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.sw).collect()
    }
}

/// Ordinary least squares `y = a + b x` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2.0 && sxx > 0.0 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LinearFit { intercept, slope, slope_se, r2 }
}

/// Residual bootstrap-t interval for the OLS slope, resampling
/// leverage-adjusted residuals `e_i / √(1 − h_i)` (recentered). Studentizing
/// each resample keeps the coverage near nominal with only a few points.
pub fn bootstrap_slope_ci<R: Rng + ?Sized>(x: &[f64], y: &[f64], resamples: usize, level: f64, rng: &mut R) -> (f64, f64) {
    let fit = linear_fit(x, y);
    let n = x.len();
    let mx = mean(x);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let mut adj: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let h = 1.0 / n as f64 + if sxx > 0.0 { (a - mx).powi(2) / sxx } else { 0.0 };
            let e = b - fit.intercept - fit.slope * a;
            if h < 1.0 - 1e-12 {
                e / (1.0 - h).sqrt()
            } else {
                e
            }
        })
        .collect();
    let am = mean(&adj);
    for e in &mut adj {
        *e -= am;
    }
    if fit.slope_se == 0.0 {
        return (fit.slope, fit.slope);
    }
    let mut ts = Vec::with_capacity(resamples);
    let mut yb = vec![0.0; n];
    for _ in 0..resamples {
        for i in 0..n {
            let e = adj[rng.random_range(0..n)];
            yb[i] = fit.intercept + fit.slope * x[i] + e;
        }
        let b = linear_fit(x, &yb);
        if b.slope_se > 0.0 {
            ts.push((b.slope - fit.slope) / b.slope_se);
        }
    }
    ts.sort_by(|a, b| a.total_cmp(b));
    let tlo = quantile_sorted(&ts, (1.0 - level) / 2.0);
    let thi = quantile_sorted(&ts, 1.0 - (1.0 - level) / 2.0);
    (fit.slope - thi * fit.slope_se, fit.slope - tlo * fit.slope_se)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Least squares through the origin `y = c x`; returns `(c, r²)` with the
/// coefficient of determination centered at the mean of `y`.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let c = sxy / sxx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - c * a).powi(2)).sum();
    let my = mean(y);
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (c, r2)
}

/// Two-sided one-sample Kolmogorov–Smirnov test; returns `(D, p-value)`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// Two-sample KS distance.
pub fn ks_distance_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.total_cmp(q));
    xb.sort_by(|p, q| p.total_cmp(q));
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        if xa[i] <= xb[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / xa.len() as f64 - j as f64 / xb.len() as f64).abs());
    }
    d
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
