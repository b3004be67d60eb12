use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{Coords, Estimate};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, OutputKernel};
use crate::quadrature::{GaussHermite, DEFAULT_ORDER, MAX_ORDER};
use crate::stats::mean_se;

/// Inner quadrature order for the Monte Carlo modes of [`psi_term`].
const PSI_MC_ORDER: usize = 40;
const PSI_START_ORDER: usize = 20;

/// Which scale enters `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiMode {
    /// `‖φ(W*X/√d)‖²/p`.
    Nn,
    /// `ρ²‖X‖²/d + ε`.
    Glm,
    /// `Eφ²`.
    Limit,
}

impl fmt::Display for PsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsiMode::Nn => "nn",
            PsiMode::Glm => "glm",
            PsiMode::Limit => "limit",
        })
    }
}

impl FromStr for PsiMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(PsiMode::Nn),
            "glm" => Ok(PsiMode::Glm),
            "limit" => Ok(PsiMode::Limit),
            other => Err(Error::Parse(format!("unknown psi mode '{other}' (expected nn, glm or limit)"))),
        }
    }
}

/// `E_Z ∫dY P_out(Y|σZ) log P_out(Y|σZ)` on a product Gauss–Hermite grid
/// over the pre-activation and the label noise.
fn psi_fixed(kernel: &OutputKernel, sigma: f64, gh: &GaussHermite) -> f64 {
    let sd = kernel.delta.sqrt();
    let ro = &kernel.readout;
    let mut total = 0.0;
    for (&z, &wz) in gh.nodes().iter().zip(gh.weights()) {
        let x = sigma * z;
        let mut inner = 0.0;
        for (k, q) in ro.probs.iter().enumerate() {
            let f = ro.f(x, k);
            let e: f64 = gh.nodes().iter().zip(gh.weights()).map(|(&z2, &w2)| w2 * kernel.log_density(f + sd * z2, x)).sum();
            inner += q * e;
        }
        total += wz * inner;
    }
    total
}

/// [`psi_fixed`] with the order doubled until successive values agree to 1e−10.
pub fn psi_at_scale(kernel: &OutputKernel, sigma: f64) -> Result<f64> {
    let mut order = PSI_START_ORDER;
    let mut prev = psi_fixed(kernel, sigma, &GaussHermite::new(order)?);
    while order < MAX_ORDER.min(4 * DEFAULT_ORDER) {
        order *= 2;
        let next = psi_fixed(kernel, sigma, &GaussHermite::new(order)?);
        if (next - prev).abs() < 1e-10 {
            return Ok(next);
        }
        prev = next;
    }
    log::warn!("psi quadrature did not settle by order {order}");
    Ok(prev)
}

/// Squared scale of `S_t` given the input norm and hidden pre-activations,
/// drawn exactly in law: `‖X‖²/d ~ χ²_d/d` and `α_i ~ N(0, ‖X‖²/d)` i.i.d.
fn sample_scale_sq<R: Rng + ?Sized>(model: &ModelSpec, t: f64, rng: &mut R) -> f64 {
    let chi = ChiSquared::new(model.d as f64).expect("d > 0");
    let qx = chi.sample(rng) / model.d as f64;
    let (rho, eps) = (model.params.rho, model.params.epsilon);
    let glm = rho * rho * qx + eps;
    if t == 1.0 {
        return glm;
    }
    let sq = qx.sqrt();
    let mut acc = 0.0;
    for _ in 0..model.p {
        let z: f64 = rng.sample(StandardNormal);
        acc += model.activation.eval(sq * z).powi(2);
    }
    let nn = acc / model.p as f64;
    if t == 0.0 {
        nn
    } else {
        (1.0 - t) * nn + t * glm
    }
}

/// Smallest budget for the single-sample term.
pub const MIN_SINGLE_DRAWS: usize = 1000;

/// `E log P_out(Y₁|S₁)` over fresh teacher, input and response draws.
pub fn conditional_entropy_term<R: Rng + ?Sized>(model: &ModelSpec, t: f64, m: usize, rng: &mut R) -> Result<Estimate> {
    if m < MIN_SINGLE_DRAWS {
        return Err(Error::Argument(format!("the single-sample term needs M >= {MIN_SINGLE_DRAWS}, got {m}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Argument(format!("interpolation time must lie in [0, 1], got {t}")));
    }
    let seed = rng.next_u64();
    let mut r = crate::rng::substream(seed, &[]);
    let vals: Vec<f64> = (0..m)
        .map(|_| {
            let sigma = sample_scale_sq(model, t, &mut r).sqrt();
            let s = sigma * r.sample::<f64, _>(StandardNormal);
            let (y, _, _) = model.kernel.sample(s, &mut r);
            model.kernel.u_value(y, s)
        })
        .collect();
    let (value, stderr) = mean_se(&vals);
    Ok(Estimate::new(value, stderr, Coords::of(model, t)).with_budget(m, 1, seed))
}

/// `Ψ` at the finite-size scale of the network or linear model, or at its limit.
pub fn psi_term<R: Rng + ?Sized>(model: &ModelSpec, mode: PsiMode, m: usize, rng: &mut R) -> Result<Estimate> {
    let t = match mode {
        PsiMode::Nn => 0.0,
        PsiMode::Glm => 1.0,
        PsiMode::Limit => {
            let v = psi_at_scale(&model.kernel, model.params.second_moment.sqrt())?;
            return Ok(Estimate::new(v, 0.0, Coords::of(model, 0.0)));
        }
    };
    if m == 0 {
        return Err(Error::Argument("psi needs at least one scale draw".into()));
    }
    let seed = rng.next_u64();
    let mut r = crate::rng::substream(seed, &[]);
    let gh = GaussHermite::new(PSI_MC_ORDER)?;
    let vals: Vec<f64> = (0..m).map(|_| psi_fixed(&model.kernel, sample_scale_sq(model, t, &mut r).sqrt(), &gh)).collect();
    let (value, stderr) = mean_se(&vals);
    Ok(Estimate::new(value, stderr, Coords::of(model, t)).with_budget(m, PSI_MC_ORDER * PSI_MC_ORDER, seed))
}
