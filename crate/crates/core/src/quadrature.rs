//! Gaussian expectations by Gauss–Hermite quadrature, plus an adaptive
//! Gauss–Kronrod integrator for finite intervals.

use crate::error::{Error, Result};

/// Default starting order for the self-refining expectation.
pub const DEFAULT_ORDER: usize = 80;
/// Largest order reached by doubling.
pub const MAX_ORDER: usize = 640;
const REFINE_TOL: f64 = 1e-10;

/// Nodes and weights for `E[h(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the rule with `order` nodes from the eigen-decomposition of the
    /// Jacobi matrix of the probabilists' Hermite polynomials (Golub–Welsch).
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Argument(format!("quadrature order must be >= 2, got {order}")));
        }
        let n = order;
        let mut diag = vec![0.0; n];
        // e[i] couples i and i+1; shifted so e[n-1] = 0 as tqli expects
        let mut off: Vec<f64> = (1..=n).map(|k| if k < n { (k as f64).sqrt() } else { 0.0 }).collect();
        let mut first = vec![0.0; n];
        first[0] = 1.0;
        tql_first_row(&mut diag, &mut off, &mut first)?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let mut nodes: Vec<f64> = idx.iter().map(|&i| diag[i]).collect();
        // symmetrize to remove round-off asymmetry
        for i in 0..n / 2 {
            let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            nodes[i] = -m;
            nodes[n - 1 - i] = m;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let mut weights: Vec<f64> = idx.iter().map(|&i| first[i] * first[i]).collect();
        for i in 0..n / 2 {
            let m = 0.5 * (weights[i] + weights[n - 1 - i]);
            weights[i] = m;
            weights[n - 1 - i] = m;
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ wᵢ h(zᵢ)`; fails on the first non-finite integrand value.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut h: F) -> Result<f64> {
        let mut acc = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            let v = h(z);
            if !v.is_finite() {
                return Err(Error::Quadrature { node: z, value: v });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Like [`expect`](Self::expect) but skips the error check; for hot loops
    /// over integrands known to be finite.
    #[inline]
    pub fn expect_unchecked<F: FnMut(f64) -> f64>(&self, mut h: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * h(z)).sum()
    }
}

/// Implicit QL on a symmetric tridiagonal matrix, tracking only the first
/// row of the eigenvector matrix.
fn tql_first_row(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Consistency("Gauss-Hermite eigen-solve did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// `E[h(Z)]` for `Z ~ N(0,1)` with a fixed order.
pub fn gauss_hermite_expect<F: FnMut(f64) -> f64>(h: F, order: usize) -> Result<f64> {
    GaussHermite::new(order)?.expect(h)
}

/// `E[h(Z)]` starting at `start_order` and doubling until successive values
/// differ by less than 1e-10 (or [`MAX_ORDER`] is reached).
pub fn gauss_hermite_expect_refined<F: FnMut(f64) -> f64>(mut h: F, start_order: usize) -> Result<f64> {
    let mut order = start_order.max(2);
    let mut prev = gauss_hermite_expect(&mut h, order)?;
    while order < MAX_ORDER {
        order = (order * 2).min(MAX_ORDER);
        let next = gauss_hermite_expect(&mut h, order)?;
        if (next - prev).abs() < REFINE_TOL {
            return Ok(next);
        }
        prev = next;
    }
    log::warn!("Gauss-Hermite refinement stopped at order {MAX_ORDER} without meeting 1e-10");
    Ok(prev)
}

// 15-point Kronrod extension of the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod on `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, tl, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        if err <= tl || depth >= 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * tl, depth + 1));
            stack.push((mid, hi, 0.5 * tl, depth + 1));
        }
    }
    total
}

/// Two-dimensional adaptive integral over a rectangle (iterated).
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(mut f: F, x: (f64, f64), y: (f64, f64), tol: f64) -> f64 {
    let span = (y.1 - y.0).abs().max(1.0);
    integrate(|u| integrate(|v| f(u, v), y.0, y.1, tol / span), x.0, x.1, tol)
}
