//! Teachers, inputs and responses for the network, the linear model and the
//! path between them.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Activation, GaussEquivParams, ModelSpec};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `A Aᵀ / scale`.
    pub fn gram(&self, scale: f64) -> Matrix {
        let mut g = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j)) / scale;
                g.data[i * self.rows + j] = v;
                g.data[j * self.rows + i] = v;
            }
        }
        g
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sample_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `n × d` matrix of i.i.d. standard normals.
pub fn sample_inputs<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Matrix {
    Matrix::standard_normal(n, d, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherNN {
    pub a_star: Vec<f64>,
    /// `p × d`.
    pub w_star: Matrix,
}

impl TeacherNN {
    pub fn sample<R: Rng + ?Sized>(p: usize, d: usize, rng: &mut R) -> Self {
        let a_star = sample_vec(p, rng);
        let w_star = Matrix::standard_normal(p, d, rng);
        Self { a_star, w_star }
    }

    pub fn p(&self) -> usize {
        self.a_star.len()
    }

    pub fn d(&self) -> usize {
        self.w_star.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherGLM {
    pub v_star: Vec<f64>,
    pub xi_star: Vec<f64>,
}

impl TeacherGLM {
    pub fn sample<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Self {
        Self { v_star: sample_vec(d, rng), xi_star: sample_vec(n, rng) }
    }
}

/// `(a*ᵀ/√p) φ(W* x/√d)`.
pub fn preactivation_nn(teacher: &TeacherNN, x: &[f64], phi: &Activation) -> Result<f64> {
    if x.len() != teacher.d() || teacher.w_star.rows != teacher.a_star.len() {
        return Err(Error::Dimension(format!(
            "input of length {} against a {}x{} hidden layer with {} readout weights",
            x.len(),
            teacher.w_star.rows,
            teacher.w_star.cols,
            teacher.a_star.len()
        )));
    }
    Ok(nn_unchecked(&teacher.a_star, &teacher.w_star, x, phi))
}

#[inline]
pub(crate) fn nn_unchecked(a: &[f64], w: &Matrix, x: &[f64], phi: &Activation) -> f64 {
    let sd = (w.cols as f64).sqrt();
    let mut acc = 0.0;
    for (i, ai) in a.iter().enumerate() {
        acc += ai * phi.eval(dot(w.row(i), x) / sd);
    }
    acc / (a.len() as f64).sqrt()
}

/// `ρ vᵀx/√d`.
#[inline]
pub fn glm_signal(v: &[f64], x: &[f64], rho: f64) -> f64 {
    rho * dot(v, x) / (x.len() as f64).sqrt()
}

/// `ρ v*ᵀx/√d + √ε ξ*_μ`.
pub fn preactivation_glm(teacher: &TeacherGLM, x: &[f64], mu: usize, params: &GaussEquivParams) -> Result<f64> {
    if x.len() != teacher.v_star.len() {
        return Err(Error::Dimension(format!("input of length {} against v* of length {}", x.len(), teacher.v_star.len())));
    }
    let xi = *teacher
        .xi_star
        .get(mu)
        .ok_or_else(|| Error::Argument(format!("sample index {mu} out of range for {} noise draws", teacher.xi_star.len())))?;
    Ok(glm_signal(&teacher.v_star, x, params.rho) + params.epsilon.sqrt() * xi)
}

/// Combines the two pre-activation parts at time `t`; exact at the endpoints.
#[inline]
pub fn interp_combine(nn: f64, glm_signal: f64, xi: f64, t: f64, epsilon: f64) -> f64 {
    if t == 0.0 {
        nn
    } else if t == 1.0 {
        glm_signal + epsilon.sqrt() * xi
    } else {
        (1.0 - t).sqrt() * nn + t.sqrt() * glm_signal + (t * epsilon).sqrt() * xi
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Argument(format!("interpolation time must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// `√(1−t) S_NN + √t ρ v*ᵀx/√d + √(tε) ξ*_μ`.
pub fn preactivation_interp(
    nn: &TeacherNN,
    glm: &TeacherGLM,
    x: &[f64],
    mu: usize,
    t: f64,
    phi: &Activation,
    params: &GaussEquivParams,
) -> Result<f64> {
    check_t(t)?;
    let s_nn = preactivation_nn(nn, x, phi)?;
    if x.len() != glm.v_star.len() {
        return Err(Error::Dimension(format!("input of length {} against v* of length {}", x.len(), glm.v_star.len())));
    }
    let xi = *glm
        .xi_star
        .get(mu)
        .ok_or_else(|| Error::Argument(format!("sample index {mu} out of range for {} noise draws", glm.xi_star.len())))?;
    Ok(interp_combine(s_nn, glm_signal(&glm.v_star, x, params.rho), xi, t, params.epsilon))
}

/// How the linear-model teacher relates to the network teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// `v*` drawn independently.
    #[default]
    Independent,
    /// `v* = W*ᵀa*/‖a*‖`: still exactly `N(0, I_d)` and independent of the
    /// inputs, but correlated with the network teacher so that paired
    /// comparisons of the two endpoints have small variance.
    Aligned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub p: usize,
    pub n: usize,
    pub t: f64,
    pub seed: u64,
    /// `n × d`.
    pub x: Matrix,
    pub y: Vec<f64>,
    pub nn: TeacherNN,
    pub glm: TeacherGLM,
    /// Realized readout atoms `A_μ` (indices into the readout support).
    pub atoms: Vec<usize>,
    /// Realized standardized noises `Z_μ`.
    pub noise: Vec<f64>,
    /// Realized pre-activations `S_tμ`.
    pub s: Vec<f64>,
}

/// Draws teachers, inputs, readout atoms and noises in a fixed order from one
/// stream and builds `Y_μ = f(S_tμ; A_μ) + √Δ Z_μ`.
pub fn gen_dataset<R: Rng + ?Sized>(model: &ModelSpec, t: f64, rng: &mut R) -> Result<Dataset> {
    gen_dataset_coupled(model, t, Coupling::Independent, rng)
}

pub fn gen_dataset_coupled<R: Rng + ?Sized>(model: &ModelSpec, t: f64, coupling: Coupling, rng: &mut R) -> Result<Dataset> {
    check_t(t)?;
    let (d, p, n) = (model.d, model.p, model.n);
    let nn = TeacherNN::sample(p, d, rng);
    let mut glm = TeacherGLM::sample(d, n, rng);
    if coupling == Coupling::Aligned {
        let norm = dot(&nn.a_star, &nn.a_star).sqrt();
        for (j, v) in glm.v_star.iter_mut().enumerate() {
            *v = (0..p).map(|i| nn.w_star.get(i, j) * nn.a_star[i]).sum::<f64>() / norm;
        }
    }
    let x = sample_inputs(n, d, rng);
    let mut atoms = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..n {
        atoms.push(model.readout().sample_atom(rng));
    }
    for _ in 0..n {
        noise.push(rng.sample::<f64, _>(StandardNormal));
    }
    let mut ds = Dataset { d, p, n, t, seed: 0, x, y: vec![0.0; n], nn, glm, atoms, noise, s: vec![0.0; n] };
    ds.rebuild_responses(model)?;
    Ok(ds)
}

impl Dataset {
    /// Recomputes `S` and `Y` from the stored latents (after changing `t`).
    pub fn rebuild_responses(&mut self, model: &ModelSpec) -> Result<()> {
        let sd = model.delta().sqrt();
        for mu in 0..self.n {
            let s = preactivation_interp(&self.nn, &self.glm, self.x.row(mu), mu, self.t, &model.activation, &model.params)?;
            self.s[mu] = s;
            self.y[mu] = model.readout().f(s, self.atoms[mu]) + sd * self.noise[mu];
        }
        Ok(())
    }

    /// The same latent draws viewed at another interpolation time.
    pub fn at_time(&self, model: &ModelSpec, t: f64) -> Result<Dataset> {
        check_t(t)?;
        let mut out = self.clone();
        out.t = t;
        out.rebuild_responses(model)?;
        Ok(out)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// CSV text: a `d,p,n,t,seed` header, then one tagged line per row of
    /// `X`, `Y`, and the teacher and noise blocks.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        writeln!(out, "d,p,n,t,seed").unwrap();
        writeln!(out, "{},{},{},{:?},{}", self.d, self.p, self.n, self.t, self.seed).unwrap();
        for mu in 0..self.n {
            writeln!(out, "X,{}", join(self.x.row(mu))).unwrap();
        }
        writeln!(out, "Y,{}", join(&self.y)).unwrap();
        writeln!(out, "a_star,{}", join(&self.nn.a_star)).unwrap();
        for i in 0..self.p {
            writeln!(out, "W_star,{}", join(self.nn.w_star.row(i))).unwrap();
        }
        writeln!(out, "v_star,{}", join(&self.glm.v_star)).unwrap();
        writeln!(out, "xi_star,{}", join(&self.glm.xi_star)).unwrap();
        let atoms: Vec<String> = self.atoms.iter().map(|a| a.to_string()).collect();
        writeln!(out, "A,{}", atoms.join(",")).unwrap();
        writeln!(out, "Z,{}", join(&self.noise)).unwrap();
        writeln!(out, "S,{}", join(&self.s)).unwrap();
        out
    }

    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, msg: &str| Error::Parse(format!("line {}: {msg}", line + 1));
        let (hl, header) = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        if header.trim() != "d,p,n,t,seed" {
            return Err(bad(hl, "expected header 'd,p,n,t,seed'"));
        }
        let (vl, vals) = lines.next().ok_or_else(|| bad(hl, "missing size line"))?;
        let f: Vec<&str> = vals.split(',').collect();
        if f.len() != 5 {
            return Err(bad(vl, "size line needs five fields"));
        }
        let usize_at = |k: usize| f[k].trim().parse::<usize>().map_err(|_| bad(vl, "bad integer"));
        let (d, p, n) = (usize_at(0)?, usize_at(1)?, usize_at(2)?);
        let t: f64 = f[3].trim().parse().map_err(|_| bad(vl, "bad t"))?;
        let seed: u64 = f[4].trim().parse().map_err(|_| bad(vl, "bad seed"))?;
        let mut blocks: std::collections::HashMap<String, Vec<(usize, Vec<String>)>> = Default::default();
        for (ln, line) in lines {
            let mut parts = line.split(',');
            let tag = parts.next().unwrap_or_default().trim().to_string();
            let rest: Vec<String> = parts.map(|s| s.trim().to_string()).collect();
            blocks.entry(tag).or_default().push((ln, rest));
        }
        let take_rows = |tag: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let got = blocks.get(tag).map(|v| v.as_slice()).unwrap_or(&[]);
            if got.len() != rows {
                return Err(Error::Parse(format!("block {tag}: expected {rows} rows, found {}", got.len())));
            }
            let mut out = Vec::with_capacity(rows * cols);
            for (ln, fields) in got {
                let fields: &[String] = if cols == 0 && fields.len() == 1 && fields[0].is_empty() { &[] } else { fields };
                if fields.len() != cols {
                    return Err(bad(*ln, &format!("block {tag}: expected {cols} values, found {}", fields.len())));
                }
                for s in fields {
                    out.push(s.parse::<f64>().map_err(|_| bad(*ln, &format!("block {tag}: bad number '{s}'")))?);
                }
            }
            Ok(out)
        };
        let x = Matrix::from_vec(n, d, take_rows("X", n, d)?)?;
        let y = take_rows("Y", 1, n)?;
        let a_star = take_rows("a_star", 1, p)?;
        let w_star = Matrix::from_vec(p, d, take_rows("W_star", p, d)?)?;
        let v_star = take_rows("v_star", 1, d)?;
        let xi_star = take_rows("xi_star", 1, n)?;
        let atoms = take_rows("A", 1, n)?.into_iter().map(|a| a as usize).collect();
        let noise = take_rows("Z", 1, n)?;
        let s = take_rows("S", 1, n)?;
        Ok(Dataset {
            d,
            p,
            n,
            t,
            seed,
            x,
            y,
            nn: TeacherNN { a_star, w_star },
            glm: TeacherGLM { v_star, xi_star },
            atoms,
            noise,
            s,
        })
    }
}

/// Fresh inputs labelled by the teacher of an existing dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoints {
    /// `m × d`.
    pub x: Matrix,
    /// Fresh linear-model noises `ξ_new` (one per point).
    pub xi: Vec<f64>,
    pub atoms: Vec<usize>,
    pub noise: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn gen_test_points<R: Rng + ?Sized>(model: &ModelSpec, dataset: &Dataset, m: usize, rng: &mut R) -> Result<TestPoints> {
    let x = sample_inputs(m, dataset.d, rng);
    let xi = sample_vec(m, rng);
    let atoms: Vec<usize> = (0..m).map(|_| model.readout().sample_atom(rng)).collect();
    let noise = sample_vec(m, rng);
    let sd = model.delta().sqrt();
    let mut s = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for k in 0..m {
        let nn = preactivation_nn(&dataset.nn, x.row(k), &model.activation)?;
        let sig = glm_signal(&dataset.glm.v_star, x.row(k), model.params.rho);
        let sk = interp_combine(nn, sig, xi[k], dataset.t, model.params.epsilon);
        s.push(sk);
        y.push(model.readout().f(sk, atoms[k]) + sd * noise[k]);
    }
    Ok(TestPoints { x, xi, atoms, noise, s, y })
}

impl TestPoints {
    /// The same draws labelled by `dataset`'s teacher at `dataset.t`.
    pub fn relabel(&self, model: &ModelSpec, dataset: &Dataset) -> Result<TestPoints> {
        let sd = model.delta().sqrt();
        let mut out = self.clone();
        for k in 0..self.x.rows {
            let nn = preactivation_nn(&dataset.nn, self.x.row(k), &model.activation)?;
            let sig = glm_signal(&dataset.glm.v_star, self.x.row(k), model.params.rho);
            out.s[k] = interp_combine(nn, sig, self.xi[k], dataset.t, model.params.epsilon);
            out.y[k] = model.readout().f(out.s[k], self.atoms[k]) + sd * self.noise[k];
        }
        Ok(out)
    }
}

/// Extra labelled points whose clean responses are also seen through a
/// Gaussian channel `Ỹ = √λ Y' + Z'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInfo {
    pub points: TestPoints,
    pub y_tilde: Vec<f64>,
    pub z_prime: Vec<f64>,
    pub lambda: f64,
    pub eta: f64,
}

impl SideInfo {
    pub fn m(&self) -> usize {
        self.y_tilde.len()
    }

    pub fn y_prime(&self) -> &[f64] {
        &self.points.y
    }

    /// The same draws at another signal-to-noise ratio.
    pub fn at_lambda(&self, lambda: f64) -> SideInfo {
        let sl = lambda.sqrt();
        let y_tilde = self.points.y.iter().zip(&self.z_prime).map(|(y, z)| sl * y + z).collect();
        SideInfo { points: self.points.clone(), y_tilde, z_prime: self.z_prime.clone(), lambda, eta: self.eta }
    }
}

/// `m = ⌈n η⌉` side-information points for `dataset`.
pub fn gen_side_info<R: Rng + ?Sized>(model: &ModelSpec, dataset: &Dataset, lambda: f64, eta: f64, rng: &mut R) -> Result<SideInfo> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!("side-information SNR must satisfy lambda >= 0, got {lambda}")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Argument(format!("side-information fraction must satisfy eta > 0, got {eta}")));
    }
    let m = ((dataset.n as f64) * eta).ceil() as usize;
    let points = gen_test_points(model, dataset, m, rng)?;
    let z_prime = sample_vec(m, rng);
    let sl = lambda.sqrt();
    let y_tilde = points.y.iter().zip(&z_prime).map(|(y, z)| sl * y + z).collect();
    Ok(SideInfo { points, y_tilde, z_prime, lambda, eta })
}

/// Draws `(y, S)` pairs for one fresh sample from the model at time `t`,
/// without materializing a dataset: used for single-sample expectations.
pub fn sample_single<R: Rng + ?Sized>(model: &ModelSpec, t: f64, rng: &mut R) -> Result<(f64, f64)> {
    let one = model.with_dims(model.d, model.p, 1);
    let ds = gen_dataset(&one, t, rng)?;
    Ok((ds.y[0], ds.s[0]))
}
