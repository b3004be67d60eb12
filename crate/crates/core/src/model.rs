//! Activations, readouts, the output kernel `P_out(y|x)` and the Gaussian
//! equivalence constants.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite_expect_refined, DEFAULT_ORDER};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Tanh,
    Sine,
    ScaledErf,
    Identity,
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sine => "sine",
            ActivationKind::ScaledErf => "scaled-erf",
            ActivationKind::Identity => "identity",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(ActivationKind::Tanh),
            "sine" | "sin" => Ok(ActivationKind::Sine),
            "scaled-erf" | "erf" => Ok(ActivationKind::ScaledErf),
            "identity" | "id" | "linear" => Ok(ActivationKind::Identity),
            other => Err(Error::Argument(format!("unknown activation '{other}'"))),
        }
    }
}

/// An odd, Lipschitz activation with bounded second and third derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub kind: ActivationKind,
    pub lipschitz_bound: f64,
    pub deriv2_bound: f64,
    pub deriv3_bound: f64,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        let c = (2.0 / PI).sqrt();
        let (l, d2, d3) = match kind {
            ActivationKind::Tanh => (1.0, 4.0 / (3.0 * 3f64.sqrt()), 2.0),
            ActivationKind::Sine => (1.0, 1.0, 1.0),
            // erf(x/√2): φ' = c e^{-x²/2}, max |φ''| at x = ±1, max |φ'''| at 0
            ActivationKind::ScaledErf => (c, c * (-0.5f64).exp(), c),
            ActivationKind::Identity => (1.0, 0.0, 0.0),
        };
        Self { kind, lipschitz_bound: l, deriv2_bound: d2, deriv3_bound: d3 }
    }

    pub fn tanh() -> Self {
        Self::new(ActivationKind::Tanh)
    }

    pub fn identity() -> Self {
        Self::new(ActivationKind::Identity)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sine => x.sin(),
            ActivationKind::ScaledErf => libm::erf(x / SQRT_2),
            ActivationKind::Identity => x,
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Sine => x.cos(),
            ActivationKind::ScaledErf => FRAC_2_SQRT_PI / SQRT_2 * (-0.5 * x * x).exp(),
            ActivationKind::Identity => 1.0,
        }
    }

    /// `(φ(x), φ'(x))` in one pass.
    #[inline]
    pub fn eval_with_deriv(&self, x: f64) -> (f64, f64) {
        match self.kind {
            ActivationKind::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            _ => (self.eval(x), self.deriv(x)),
        }
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            ActivationKind::Sine => -x.sin(),
            ActivationKind::ScaledErf => -x * self.deriv(x),
            ActivationKind::Identity => 0.0,
        }
    }

    pub fn deriv3(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => {
                let t = x.tanh();
                -2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t)
            }
            ActivationKind::Sine => -x.cos(),
            ActivationKind::ScaledErf => (x * x - 1.0) * self.deriv(x),
            ActivationKind::Identity => 0.0,
        }
    }
}

/// Shape function `g` of a readout `f(x; A) = A · g(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReadoutFn {
    Zero,
    Tanh,
    Identity,
}

impl ReadoutFn {
    #[inline]
    pub fn g(self, x: f64) -> f64 {
        match self {
            ReadoutFn::Zero => 0.0,
            ReadoutFn::Tanh => x.tanh(),
            ReadoutFn::Identity => x,
        }
    }

    /// `(g, g', g'')` at `x`.
    #[inline]
    pub fn jet(self, x: f64) -> (f64, f64, f64) {
        match self {
            ReadoutFn::Zero => (0.0, 0.0, 0.0),
            ReadoutFn::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s)
            }
            ReadoutFn::Identity => (x, 1.0, 0.0),
        }
    }

    fn sup_bound(self) -> Option<f64> {
        match self {
            ReadoutFn::Zero => Some(0.0),
            ReadoutFn::Tanh => Some(1.0),
            ReadoutFn::Identity => None,
        }
    }
}

impl fmt::Display for ReadoutFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReadoutFn::Zero => "zero",
            ReadoutFn::Tanh => "tanh",
            ReadoutFn::Identity => "identity",
        })
    }
}

impl FromStr for ReadoutFn {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" | "null" => Ok(ReadoutFn::Zero),
            "tanh" => Ok(ReadoutFn::Tanh),
            "identity" | "id" | "linear" => Ok(ReadoutFn::Identity),
            other => Err(Error::Argument(format!("unknown readout function '{other}'"))),
        }
    }
}

/// `f(x; A) = A · g(x)` with `A` drawn from a finite law `P_A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub g: ReadoutFn,
    /// Support points of `P_A`.
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
    /// `B_f` with `|f|, |f'|, |f''| <= B_f`; infinite when unbounded.
    pub bound: f64,
    pub satisfies_a2: bool,
}

impl Readout {
    /// Finite mixture; probabilities are normalized.
    pub fn mixture(g: ReadoutFn, atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::Argument("readout atoms and probabilities must be nonempty and equal length".into()));
        }
        if probs.iter().any(|&q| !(q > 0.0) || !q.is_finite()) || atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::Argument("readout probabilities must be positive and atoms finite".into()));
        }
        let total: f64 = probs.iter().sum();
        let probs: Vec<f64> = probs.iter().map(|q| q / total).collect();
        let amax = atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let (bound, satisfies_a2) = match g.sup_bound() {
            Some(b) => (b * amax, true),
            None => (f64::INFINITY, false),
        };
        Ok(Self { g, atoms, probs, bound, satisfies_a2 })
    }

    pub fn deterministic(g: ReadoutFn) -> Self {
        Self::mixture(g, vec![1.0], vec![1.0]).expect("single atom")
    }

    /// `f ≡ 0`: the null model in which responses carry no signal.
    pub fn zero() -> Self {
        Self::deterministic(ReadoutFn::Zero)
    }

    /// `f(x; A) = A tanh(x)`, `A = ±1` with equal probability.
    pub fn sign_mixture() -> Self {
        Self::mixture(ReadoutFn::Tanh, vec![1.0, -1.0], vec![0.5, 0.5]).expect("valid mixture")
    }

    /// `f(x) = x`; violates the bounded-readout assumption.
    pub fn identity_unbounded() -> Self {
        Self::deterministic(ReadoutFn::Identity)
    }

    /// The readout `c · f`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for a in &mut out.atoms {
            *a *= c;
        }
        out.bound = self.bound * c.abs();
        out
    }

    pub fn is_null(&self) -> bool {
        self.g == ReadoutFn::Zero || self.atoms.iter().all(|&a| a == 0.0)
    }

    pub fn is_deterministic(&self) -> bool {
        self.atoms.len() == 1
    }

    #[inline]
    pub fn f(&self, x: f64, atom: usize) -> f64 {
        self.atoms[atom] * self.g.g(x)
    }

    /// `Σ_A P_A(A) f(x; A)`.
    pub fn mean(&self, x: f64) -> f64 {
        let g = self.g.g(x);
        self.atoms.iter().zip(&self.probs).map(|(a, q)| q * a * g).sum()
    }

    /// `Var_A f(x; A)`.
    pub fn variance(&self, x: f64) -> f64 {
        let g = self.g.g(x);
        let m: f64 = self.atoms.iter().zip(&self.probs).map(|(a, q)| q * a).sum();
        let m2: f64 = self.atoms.iter().zip(&self.probs).map(|(a, q)| q * a * a).sum();
        (m2 - m * m).max(0.0) * g * g
    }

    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.atoms.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, q) in self.probs.iter().enumerate() {
            acc += q;
            if u < acc {
                return k;
            }
        }
        self.atoms.len() - 1
    }

    pub fn describe(&self) -> String {
        if self.is_deterministic() && self.atoms[0] == 1.0 {
            return self.g.to_string();
        }
        let parts: Vec<String> = self.atoms.iter().zip(&self.probs).map(|(a, q)| format!("{a}:{q}")).collect();
        format!("{}[{}]", self.g, parts.join(","))
    }
}

/// Which derivative ratio `P^{·}_out / P_out` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioKind {
    Y,
    X,
    YY,
    YX,
    XX,
}

impl FromStr for RatioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(RatioKind::Y),
            "x" => Ok(RatioKind::X),
            "yy" => Ok(RatioKind::YY),
            "yx" | "xy" => Ok(RatioKind::YX),
            "xx" => Ok(RatioKind::XX),
            other => Err(Error::Argument(format!("unsupported derivative tag '{other}' (expected y, x, yy, yx, xx)"))),
        }
    }
}

/// `P_out(y|x) = Σ_A P_A(A) N(y; f(x;A), Δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputKernel {
    pub readout: Readout,
    pub delta: f64,
}

/// Posterior-over-`A` averages of the residual polynomials entering the ratios.
#[derive(Debug, Clone, Copy)]
struct Brackets {
    r: f64,
    r2: f64,
    r_fp: f64,
    r2_fp: f64,
    fp: f64,
    fp2: f64,
    r2_fp2: f64,
    r_fpp: f64,
}

impl OutputKernel {
    pub fn new(readout: Readout, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Argument(format!("noise variance must satisfy delta > 0, got {delta}")));
        }
        Ok(Self { readout, delta })
    }

    pub fn density(&self, y: f64, x: f64) -> f64 {
        let norm = 1.0 / (2.0 * PI * self.delta).sqrt();
        let g = self.readout.g.g(x);
        self.readout
            .atoms
            .iter()
            .zip(&self.readout.probs)
            .map(|(a, q)| {
                let r = y - a * g;
                q * norm * (-r * r / (2.0 * self.delta)).exp()
            })
            .sum()
    }

    /// `u_y(x) = log P_out(y|x)`.
    #[inline]
    pub fn log_density(&self, y: f64, x: f64) -> f64 {
        let base = -0.5 * (LN_2PI + self.delta.ln());
        let g = self.readout.g.g(x);
        if self.readout.atoms.len() == 1 {
            let r = y - self.readout.atoms[0] * g;
            return base - r * r / (2.0 * self.delta);
        }
        let term = |a: f64, q: f64| {
            let r = y - a * g;
            q.ln() - r * r / (2.0 * self.delta)
        };
        let pairs = self.readout.atoms.iter().zip(&self.readout.probs);
        let m = pairs.clone().fold(f64::NEG_INFINITY, |m, (&a, &q)| m.max(term(a, q)));
        let s: f64 = pairs.map(|(&a, &q)| (term(a, q) - m).exp()).sum();
        base + m + s.ln()
    }

    pub fn u_value(&self, y: f64, x: f64) -> f64 {
        self.log_density(y, x)
    }

    fn brackets(&self, y: f64, x: f64) -> Brackets {
        let (g, gp, gpp) = self.readout.g.jet(x);
        let inv = 1.0 / (2.0 * self.delta);
        let mut lw_max = f64::NEG_INFINITY;
        for (a, q) in self.readout.atoms.iter().zip(&self.readout.probs) {
            let r = y - a * g;
            lw_max = lw_max.max(q.ln() - r * r * inv);
        }
        let mut b = Brackets { r: 0.0, r2: 0.0, r_fp: 0.0, r2_fp: 0.0, fp: 0.0, fp2: 0.0, r2_fp2: 0.0, r_fpp: 0.0 };
        let mut wsum = 0.0;
        for (a, q) in self.readout.atoms.iter().zip(&self.readout.probs) {
            let r = y - a * g;
            let w = (q.ln() - r * r * inv - lw_max).exp();
            let fp = a * gp;
            let fpp = a * gpp;
            wsum += w;
            b.r += w * r;
            b.r2 += w * r * r;
            b.r_fp += w * r * fp;
            b.r2_fp += w * r * r * fp;
            b.fp += w * fp;
            b.fp2 += w * fp * fp;
            b.r2_fp2 += w * r * r * fp * fp;
            b.r_fpp += w * r * fpp;
        }
        let s = 1.0 / wsum;
        b.r *= s;
        b.r2 *= s;
        b.r_fp *= s;
        b.r2_fp *= s;
        b.fp *= s;
        b.fp2 *= s;
        b.r2_fp2 *= s;
        b.r_fpp *= s;
        b
    }

    /// `P^{which}_out / P_out` at `(y, x)`.
    pub fn ratio(&self, which: RatioKind, y: f64, x: f64) -> f64 {
        let b = self.brackets(y, x);
        let dl = self.delta;
        match which {
            RatioKind::Y => -b.r / dl,
            RatioKind::X => b.r_fp / dl,
            RatioKind::YY => b.r2 / (dl * dl) - 1.0 / dl,
            RatioKind::YX => -b.r2_fp / (dl * dl) + b.fp / dl,
            RatioKind::XX => b.r2_fp2 / (dl * dl) - b.fp2 / dl + b.r_fpp / dl,
        }
    }

    /// `∂_x u_y(x)`.
    #[inline]
    pub fn u_prime(&self, y: f64, x: f64) -> f64 {
        if self.readout.atoms.len() == 1 {
            let a = self.readout.atoms[0];
            let (g, gp, _) = self.readout.g.jet(x);
            return (y - a * g) * a * gp / self.delta;
        }
        self.ratio(RatioKind::X, y, x)
    }

    /// `∂²_x u_y(x) = P^{xx}/P − (u')²`.
    pub fn u_double_prime(&self, y: f64, x: f64) -> f64 {
        let up = self.u_prime(y, x);
        self.ratio(RatioKind::XX, y, x) - up * up
    }

    /// `E[Y | x]`.
    pub fn conditional_mean(&self, x: f64) -> f64 {
        self.readout.mean(x)
    }

    /// Draws `(y, atom index, noise z)` from `P_out(·|x)`.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (f64, usize, f64) {
        let k = self.readout.sample_atom(rng);
        let z: f64 = rng.sample(StandardNormal);
        (self.readout.f(x, k) + self.delta.sqrt() * z, k, z)
    }

    /// Posterior mean of a fresh clean response `f(x; A)` given a noisy copy
    /// `ỹ = √λ f(x; A) + Z'` observed alongside the model noise, i.e. `E[Y'|x, Ỹ]`
    /// for `Y' = f(x;A) + √Δ Z`.
    pub fn side_posterior_mean(&self, x: f64, y_tilde: f64, lambda: f64) -> f64 {
        let sl = lambda.sqrt();
        let var = lambda * self.delta + 1.0;
        let g = self.readout.g.g(x);
        let prec = 1.0 / self.delta + lambda;
        let mut lw_max = f64::NEG_INFINITY;
        for (a, q) in self.readout.atoms.iter().zip(&self.readout.probs) {
            let r = y_tilde - sl * a * g;
            lw_max = lw_max.max(q.ln() - r * r / (2.0 * var));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (a, q) in self.readout.atoms.iter().zip(&self.readout.probs) {
            let fa = a * g;
            let r = y_tilde - sl * fa;
            let w = (q.ln() - r * r / (2.0 * var) - lw_max).exp();
            num += w * (fa / self.delta + sl * y_tilde) / prec;
            den += w;
        }
        num / den
    }

    /// The channel seen through `ỹ = √λ y + Z'`: readout `√λ f`, noise `λΔ + 1`.
    pub fn tilde_kernel(&self, lambda: f64) -> OutputKernel {
        OutputKernel { readout: self.readout.scaled(lambda.sqrt()), delta: lambda * self.delta + 1.0 }
    }

    /// `C` such that `|P^{which}/P| <= C (Z² + 1)` when `y = f(x; A₀) + √Δ Z`.
    pub fn ratio_envelope(&self, which: RatioKind) -> f64 {
        let b = self.readout.bound;
        let dl = self.delta;
        let sd = dl.sqrt();
        // residual r <= 2B + √Δ|Z| <= k1 (1 + Z²); r² <= k2 (1 + Z²)
        let k1 = 2.0 * b + 0.5 * sd;
        let k2 = (8.0 * b * b).max(2.0 * dl);
        let (alpha, beta, gamma) = match which {
            RatioKind::Y => (0.0, 1.0 / dl, 0.0),
            RatioKind::X => (0.0, b / dl, 0.0),
            RatioKind::YY => (1.0 / (dl * dl), 0.0, 1.0 / dl),
            RatioKind::YX => (b / (dl * dl), 0.0, b / dl),
            RatioKind::XX => (b * b / (dl * dl), b / dl, b * b / dl),
        };
        alpha * k2 + beta * k1 + gamma
    }

    /// Explicit readout-derived bounds on second moments of the score terms.
    pub fn moment_bounds(&self) -> MomentBounds {
        let b = self.readout.bound;
        let dl = self.delta;
        // moments of |Z|: E|Z|^k for k = 0..4
        let m = [1.0, (2.0 / PI).sqrt(), 1.0, 2.0 * (2.0 / PI).sqrt(), 3.0];
        let r = [2.0 * b, dl.sqrt()];
        let r2 = poly_mul(&r, &r);
        let u1_sq: f64 = poly_expect(&poly_scale(&r2, b * b / (dl * dl)), &m);
        // |P^xx/P| <= (r²/Δ² + 1/Δ) B² + r B/Δ
        let mut q = poly_scale(&r2, b * b / (dl * dl));
        q[0] += b * b / dl;
        q[0] += r[0] * b / dl;
        q[1] += r[1] * b / dl;
        let q2 = poly_mul(&q, &q);
        let umm_sq = poly_expect(&q2, &m);
        MomentBounds { u_prime_sq: u1_sq, u_mumu_sq: umm_sq, u_munu_sq: u1_sq * u1_sq }
    }
}

/// Upper bounds on `E[(u')²|S]`, `E[U_μμ²|S]`, `E[U_μν²|S,S']`.
#[derive(Debug, Clone, Copy)]
pub struct MomentBounds {
    pub u_prime_sq: f64,
    pub u_mumu_sq: f64,
    pub u_munu_sq: f64,
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

fn poly_expect(a: &[f64], moments: &[f64]) -> f64 {
    a.iter().zip(moments).map(|(x, m)| x * m).sum()
}

/// `ρ`, `ε = Eφ² − ρ²` and `Eφ²` under the standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussEquivParams {
    pub rho: f64,
    pub epsilon: f64,
    pub second_moment: f64,
}

impl GaussEquivParams {
    pub fn for_activation(phi: &Activation) -> Result<Self> {
        if phi.kind == ActivationKind::Identity {
            return Ok(Self { rho: 1.0, epsilon: 0.0, second_moment: 1.0 });
        }
        let rho = compute_rho(phi, DEFAULT_ORDER)?;
        let second_moment = gauss_hermite_expect_refined(|z| phi.eval(z).powi(2), DEFAULT_ORDER)?;
        let epsilon = checked_epsilon(second_moment, rho)?;
        Ok(Self { rho, epsilon, second_moment })
    }
}

fn checked_epsilon(second_moment: f64, rho: f64) -> Result<f64> {
    let eps = second_moment - rho * rho;
    if eps < -1e-12 {
        return Err(Error::Consistency(format!("Eφ² − ρ² = {eps} is negative")));
    }
    Ok(eps.max(0.0))
}

/// `E φ'(Z)`, refined by order doubling from `order`.
pub fn compute_rho(phi: &Activation, order: usize) -> Result<f64> {
    gauss_hermite_expect_refined(|z| phi.deriv(z), order)
}

/// `E φ(Z)² − ρ²`.
pub fn compute_epsilon(phi: &Activation, order: usize) -> Result<f64> {
    let rho = compute_rho(phi, order)?;
    let m2 = gauss_hermite_expect_refined(|z| phi.eval(z).powi(2), order)?;
    checked_epsilon(m2, rho)
}

/// Everything that defines a teacher-student problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub activation: Activation,
    pub kernel: OutputKernel,
    pub d: usize,
    pub p: usize,
    pub n: usize,
    pub params: GaussEquivParams,
}

impl ModelSpec {
    /// Fails with [`Error::AssumptionViolation`] for readouts outside the
    /// bounded class; see [`ModelSpec::allow_unbounded_readout`].
    pub fn new(activation: ActivationKind, readout: Readout, delta: f64, d: usize, p: usize, n: usize) -> Result<Self> {
        if !readout.satisfies_a2 {
            return Err(Error::AssumptionViolation);
        }
        Self::build(activation, readout, delta, d, p, n)
    }

    /// Same as [`ModelSpec::new`] but accepts an unbounded readout, logging a warning.
    pub fn allow_unbounded_readout(
        activation: ActivationKind,
        readout: Readout,
        delta: f64,
        d: usize,
        p: usize,
        n: usize,
    ) -> Result<Self> {
        if !readout.satisfies_a2 {
            log::warn!("readout '{}' violates the bounded-readout assumption", readout.describe());
        }
        Self::build(activation, readout, delta, d, p, n)
    }

    fn build(activation: ActivationKind, readout: Readout, delta: f64, d: usize, p: usize, n: usize) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::Argument(format!("dimensions must be positive, got d={d}, p={p}")));
        }
        let activation = Activation::new(activation);
        let params = GaussEquivParams::for_activation(&activation)?;
        Ok(Self { activation, kernel: OutputKernel::new(readout, delta)?, d, p, n, params })
    }

    /// The same model at other sizes.
    pub fn with_dims(&self, d: usize, p: usize, n: usize) -> Self {
        Self { d, p, n, ..self.clone() }
    }

    pub fn delta(&self) -> f64 {
        self.kernel.delta
    }

    pub fn readout(&self) -> &Readout {
        &self.kernel.readout
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_are_odd() {
        for kind in [ActivationKind::Tanh, ActivationKind::Sine, ActivationKind::ScaledErf, ActivationKind::Identity] {
            let phi = Activation::new(kind);
            assert_eq!(phi.eval(0.0), 0.0);
            for k in 0..50 {
                let x = -5.0 + 0.2 * k as f64;
                assert!((phi.eval(-x) + phi.eval(x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn derivative_bounds_hold_on_grid() {
        for kind in [ActivationKind::Tanh, ActivationKind::Sine, ActivationKind::ScaledErf] {
            let phi = Activation::new(kind);
            for k in 0..=4000 {
                let x = -8.0 + 0.004 * k as f64;
                assert!(phi.deriv(x).abs() <= phi.lipschitz_bound + 1e-12, "{kind} φ' at {x}");
                assert!(phi.deriv2(x).abs() <= phi.deriv2_bound + 1e-12, "{kind} φ'' at {x}");
                assert!(phi.deriv3(x).abs() <= phi.deriv3_bound + 1e-12, "{kind} φ''' at {x}");
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let h = 1e-5;
        for kind in [ActivationKind::Tanh, ActivationKind::Sine, ActivationKind::ScaledErf] {
            let phi = Activation::new(kind);
            for &x in &[-1.3, -0.2, 0.4, 2.1] {
                let d1 = (phi.eval(x + h) - phi.eval(x - h)) / (2.0 * h);
                let d2 = (phi.deriv(x + h) - phi.deriv(x - h)) / (2.0 * h);
                let d3 = (phi.deriv2(x + h) - phi.deriv2(x - h)) / (2.0 * h);
                assert!((d1 - phi.deriv(x)).abs() < 1e-8);
                assert!((d2 - phi.deriv2(x)).abs() < 1e-8);
                assert!((d3 - phi.deriv3(x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unknown_ratio_tag_is_rejected() {
        assert!("xyz".parse::<RatioKind>().is_err());
        assert_eq!("yx".parse::<RatioKind>().unwrap(), RatioKind::YX);
    }

    #[test]
    fn log_density_is_stable_far_in_tails() {
        let k = OutputKernel::new(Readout::sign_mixture(), 0.01).unwrap();
        let u = k.log_density(40.0, 3.0);
        assert!(u.is_finite());
        let expected = -0.5 * (LN_2PI + 0.01f64.ln()) + 0.5f64.ln() - (40.0 - 3f64.tanh()).powi(2) / 0.02;
        assert!((u - expected).abs() < 1e-6);
    }

    #[test]
    fn scaled_readout_multiplies_atoms() {
        let r = Readout::sign_mixture().scaled(2.0);
        assert_eq!(r.atoms, vec![2.0, -2.0]);
        assert_eq!(r.bound, 2.0);
    }

    #[test]
    fn unbounded_readout_requires_opt_in() {
        let r = ModelSpec::new(ActivationKind::Tanh, Readout::identity_unbounded(), 1.0, 2, 2, 2);
        assert!(matches!(r, Err(Error::AssumptionViolation)));
        assert!(ModelSpec::allow_unbounded_readout(ActivationKind::Tanh, Readout::identity_unbounded(), 1.0, 2, 2, 2).is_ok());
    }

    #[test]
    fn nonpositive_delta_rejected() {
        assert!(OutputKernel::new(Readout::zero(), 0.0).is_err());
        assert!(OutputKernel::new(Readout::zero(), -1.0).is_err());
    }
}
