//! Prior draws of only what the likelihood sees.
//!
//! Given inputs `x_1..x_r`, the network likelihood depends on `W` only
//! through `α_i = W_i x/√d`, whose rows are i.i.d. `N(0, G)` with
//! `G = XXᵀ/d`; likewise `vᵀx/√d ~ N(0, G)`. Drawing these directly is exact
//! in law and costs nothing in `d`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{dot, Matrix};
use crate::model::Activation;

/// Lower Cholesky factor of a positive semi-definite matrix; pivots below
/// `tol · max diag` are treated as zero (their column is zeroed).
pub fn cholesky_psd(g: &Matrix, tol: f64) -> Matrix {
    let r = g.rows;
    let mut l = Matrix::zeros(r, r);
    let scale = (0..r).map(|i| g.get(i, i)).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..r {
        let mut diag = g.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k).powi(2);
        }
        if diag <= tol * scale {
            continue;
        }
        let ljj = diag.sqrt();
        l.data[j * r + j] = ljj;
        for i in j + 1..r {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.data[i * r + j] = s / ljj;
        }
    }
    l
}

/// Sampler of `(a, α, vᵀx/√d, ξ)` for a fixed set of inputs.
#[derive(Debug, Clone)]
pub struct ProjectedPrior {
    p: usize,
    n_xi: usize,
    /// `r × k` with `F Fᵀ = G`.
    factor: Matrix,
    lower: bool,
}

/// One draw: network output (before any `t`-scaling) and linear signal for
/// every input row, plus the per-sample noises.
#[derive(Debug, Clone)]
pub struct ProjectedDraw {
    /// `aᵀφ(α_·μ)/√p` per input row.
    pub nn: Vec<f64>,
    /// `vᵀx_μ/√d` per input row.
    pub lin: Vec<f64>,
    pub xi: Vec<f64>,
    pub a_norm_sq: f64,
    z: Vec<f64>,
    alpha: Vec<f64>,
}

impl ProjectedPrior {
    /// `inputs` is `r × d`; the first `n_xi` rows get a per-sample noise `ξ`.
    pub fn new(inputs: &Matrix, p: usize, n_xi: usize) -> Self {
        let (r, d) = (inputs.rows, inputs.cols);
        let sd = (d as f64).sqrt();
        if d <= r {
            let data = inputs.data.iter().map(|v| v / sd).collect();
            Self { p, n_xi, factor: Matrix { rows: r, cols: d, data }, lower: false }
        } else {
            let g = inputs.gram(d as f64);
            Self { p, n_xi, factor: cholesky_psd(&g, 1e-13), lower: true }
        }
    }

    pub fn rows(&self) -> usize {
        self.factor.rows
    }

    pub fn empty_draw(&self) -> ProjectedDraw {
        let r = self.factor.rows;
        ProjectedDraw {
            nn: vec![0.0; r],
            lin: vec![0.0; r],
            xi: vec![0.0; self.n_xi],
            a_norm_sq: 0.0,
            z: vec![0.0; self.factor.cols],
            alpha: vec![0.0; r],
        }
    }

    #[inline]
    fn correlate(&self, z: &[f64], out: &mut [f64]) {
        let k = self.factor.cols;
        for (mu, o) in out.iter_mut().enumerate() {
            let row = self.factor.row(mu);
            let end = if self.lower { (mu + 1).min(k) } else { k };
            *o = dot(&row[..end], &z[..end]);
        }
    }

    /// Fills `out` with a fresh prior draw. With `aligned`, the linear
    /// signal is `(Wᵀa/‖a‖)ᵀx/√d` instead of an independent draw: still
    /// exactly distributed as the prior, and coupled to the network block.
    pub fn draw<R: Rng + ?Sized>(&self, phi: &Activation, aligned: bool, rng: &mut R, out: &mut ProjectedDraw) {
        let r = self.factor.rows;
        out.nn.iter_mut().for_each(|v| *v = 0.0);
        out.lin.iter_mut().for_each(|v| *v = 0.0);
        let mut a_sq = 0.0;
        let mut z = std::mem::take(&mut out.z);
        let mut alpha = std::mem::take(&mut out.alpha);
        for _ in 0..self.p {
            let ai: f64 = rng.sample(StandardNormal);
            a_sq += ai * ai;
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            self.correlate(&z, &mut alpha);
            for mu in 0..r {
                out.nn[mu] += ai * phi.eval(alpha[mu]);
                if aligned {
                    out.lin[mu] += ai * alpha[mu];
                }
            }
        }
        let sp = (self.p as f64).sqrt();
        for v in out.nn.iter_mut() {
            *v /= sp;
        }
        if aligned {
            let an = a_sq.sqrt();
            for v in out.lin.iter_mut() {
                *v /= an;
            }
        } else {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            self.correlate(&z, &mut alpha);
            out.lin.copy_from_slice(&alpha);
        }
        for v in out.xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        out.a_norm_sq = a_sq;
        out.z = z;
        out.alpha = alpha;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn cholesky_reconstructs_gram() {
        let x = Matrix::standard_normal(4, 9, &mut substream(1, &[]));
        let g = x.gram(9.0);
        let l = cholesky_psd(&g, 1e-13);
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| l.get(i, k) * l.get(j, k)).sum();
                assert!((v - g.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_tolerates_rank_deficiency() {
        let x = Matrix::standard_normal(2, 3, &mut substream(2, &[]));
        let mut rows = x.data.clone();
        rows.extend_from_slice(x.row(0));
        let x3 = Matrix::from_vec(3, 3, rows).unwrap();
        let g = x3.gram(3.0);
        let l = cholesky_psd(&g, 1e-12);
        assert!(l.data.iter().all(|v| v.is_finite()));
        let v: f64 = (0..3).map(|k| l.get(2, k) * l.get(2, k)).sum();
        assert!((v - g.get(2, 2)).abs() < 1e-10);
    }

    #[test]
    fn projected_covariance_matches_gram() {
        let x = Matrix::standard_normal(3, 20, &mut substream(3, &[]));
        let g = x.gram(20.0);
        let prior = ProjectedPrior::new(&x, 1, 0);
        let phi = Activation::identity();
        let mut rng = substream(4, &[]);
        let mut draw = prior.empty_draw();
        let m = 200_000;
        let mut c01 = 0.0;
        let mut c00 = 0.0;
        for _ in 0..m {
            prior.draw(&phi, false, &mut rng, &mut draw);
            c01 += draw.lin[0] * draw.lin[1];
            c00 += draw.lin[0] * draw.lin[0];
        }
        assert!((c01 / m as f64 - g.get(0, 1)).abs() < 0.02);
        assert!((c00 / m as f64 - g.get(0, 0)).abs() < 0.03);
    }
}
