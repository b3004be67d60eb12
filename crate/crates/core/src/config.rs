//! Experiment configuration: a sectioned `key = value` text format.
//!
//! ```text
//! seed = 7
//! output_dir = out
//! suites = free_entropy, theorem1
//!
//! [model]
//! activation = tanh
//! readout = tanh
//! delta = 0.5
//!
//! [sizes]
//! d = 16, 64, 256
//! n = 4
//! ```
//!
//! Keys before the first section header belong to the top level. Lists are
//! comma separated. `#` starts a comment. Within `[sizes]`, the lists `d`,
//! `p` and `n` are zipped into `(d, p, n)` triplets; a list of length one is
//! repeated, and `p` defaults to `d`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ActivationKind, ModelSpec, Readout, ReadoutFn};
use crate::posterior::{ChainConfig, Sampler};
use crate::estimators::MIN_SINGLE_DRAWS;
use crate::verify::{MIN_POUT_DRAWS, MIN_REPLICAS};

/// Estimators and suites the runner knows about.
pub const KNOWN_SUITES: [&str; 17] = [
    "free_entropy",
    "mutual_information",
    "gen_error",
    "conditional_entropy",
    "psi",
    "b_term",
    "side_mutual_information",
    "gen_error_proxy",
    "immse",
    "nishimori",
    "pout",
    "approximations",
    "epsilon",
    "concentration",
    "theorem1",
    "theorem2",
    "constants",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlock {
    pub activation: ActivationKind,
    pub readout: ReadoutFn,
    /// Support of `P_A`.
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
    pub delta: f64,
    pub allow_unbounded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizesBlock {
    pub d: Vec<usize>,
    pub p: Vec<usize>,
    pub n: Vec<usize>,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Projected,
    Importance,
    Mala,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Projected => "projected",
            Method::Importance => "importance",
            Method::Mala => "mala",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projected" => Ok(Method::Projected),
            "importance" => Ok(Method::Importance),
            "mala" => Ok(Method::Mala),
            other => Err(Error::Argument(format!("unknown sampler method '{other}' (projected, importance, mala)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerBlock {
    pub method: Method,
    pub m: usize,
    pub per_replica: usize,
    pub chain: ChainConfig,
    pub n_outer: usize,
    pub n_test: usize,
    /// Draws for the single-sample conditional entropy and `Ψ` terms.
    pub m_single: usize,
}

impl SamplerBlock {
    pub fn sampler(&self) -> Sampler {
        match self.method {
            Method::Projected => Sampler::Projected { m: self.m },
            Method::Importance => Sampler::Importance { m: self.m, per_replica: self.per_replica },
            Method::Mala => Sampler::Mala(self.chain.clone()),
        }
    }
}

/// Budgets of the verification suites that do not follow the size grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyBlock {
    pub pairs: usize,
    pub fd_h: f64,
    pub pout_m: usize,
    pub approx_d: Vec<usize>,
    pub approx_m: usize,
    pub epsilon_d: Vec<usize>,
    pub epsilon_p: usize,
    pub epsilon_m: usize,
    pub concentration_d: Vec<usize>,
    pub concentration_n: Vec<usize>,
    pub concentration_t: f64,
    /// Dataset replicas per grid point.
    pub concentration_replicas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub suites: Vec<String>,
    pub model: ModelBlock,
    pub sizes: SizesBlock,
    pub sampler: SamplerBlock,
    pub verify: VerifyBlock,
}

impl ExperimentConfig {
    /// `(d, p, n)` triplets of the size grid.
    pub fn triplets(&self) -> Vec<(usize, usize, usize)> {
        let s = &self.sizes;
        let len = s.d.len().max(s.p.len()).max(s.n.len());
        let at = |v: &[usize], i: usize| if v.len() == 1 { v[0] } else { v[i] };
        (0..len).map(|i| (at(&s.d, i), at(&s.p, i), at(&s.n, i))).collect()
    }

    pub fn readout(&self) -> Result<Readout> {
        Readout::mixture(self.model.readout, self.model.atoms.clone(), self.model.probs.clone())
    }

    pub fn model_at(&self, d: usize, p: usize, n: usize) -> Result<ModelSpec> {
        let r = self.readout()?;
        if self.model.allow_unbounded {
            ModelSpec::allow_unbounded_readout(self.model.activation, r, self.model.delta, d, p, n)
        } else {
            ModelSpec::new(self.model.activation, r, self.model.delta, d, p, n)
        }
    }

    /// Normalized text form; `parse_config` of it gives back `self`.
    pub fn serialize(&self) -> String {
        format!("output_dir = {}\n{}", self.output_dir.display(), self.serialize_experiment())
    }

    /// Normalized text form without the output location: everything that
    /// determines the results.
    pub fn serialize_experiment(&self) -> String {
        let mut o = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let ulist = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let m = &self.model;
        let s = &self.sizes;
        let sm = &self.sampler;
        let v = &self.verify;
        let _ = writeln!(o, "seed = {}", self.seed);
        let _ = writeln!(o, "suites = {}", self.suites.join(", "));
        let _ = writeln!(o, "\n[model]");
        let _ = writeln!(o, "activation = {}", m.activation);
        let _ = writeln!(o, "readout = {}", m.readout);
        let _ = writeln!(o, "atoms = {}", list(&m.atoms));
        let _ = writeln!(o, "probs = {}", list(&m.probs));
        let _ = writeln!(o, "delta = {:?}", m.delta);
        let _ = writeln!(o, "allow_unbounded = {}", m.allow_unbounded);
        let _ = writeln!(o, "\n[sizes]");
        let _ = writeln!(o, "d = {}", ulist(&s.d));
        let _ = writeln!(o, "p = {}", ulist(&s.p));
        let _ = writeln!(o, "n = {}", ulist(&s.n));
        let _ = writeln!(o, "t = {}", list(&s.t));
        let _ = writeln!(o, "lambda = {}", list(&s.lambda));
        let _ = writeln!(o, "eta = {}", list(&s.eta));
        let _ = writeln!(o, "\n[sampler]");
        let _ = writeln!(o, "method = {}", sm.method);
        let _ = writeln!(o, "m = {}", sm.m);
        let _ = writeln!(o, "per_replica = {}", sm.per_replica);
        let _ = writeln!(o, "n_outer = {}", sm.n_outer);
        let _ = writeln!(o, "n_test = {}", sm.n_test);
        let _ = writeln!(o, "m_single = {}", sm.m_single);
        let _ = writeln!(o, "step_size = {:?}", sm.chain.step_size);
        let _ = writeln!(o, "n_steps = {}", sm.chain.n_steps);
        let _ = writeln!(o, "n_burn = {}", sm.chain.n_burn);
        let _ = writeln!(o, "adapt_target = {:?}", sm.chain.adapt_target);
        let _ = writeln!(o, "thin = {}", sm.chain.thin);
        let _ = writeln!(o, "\n[verify]");
        let _ = writeln!(o, "pairs = {}", v.pairs);
        let _ = writeln!(o, "fd_h = {:?}", v.fd_h);
        let _ = writeln!(o, "pout_m = {}", v.pout_m);
        let _ = writeln!(o, "approx_d = {}", ulist(&v.approx_d));
        let _ = writeln!(o, "approx_m = {}", v.approx_m);
        let _ = writeln!(o, "epsilon_d = {}", ulist(&v.epsilon_d));
        let _ = writeln!(o, "epsilon_p = {}", v.epsilon_p);
        let _ = writeln!(o, "epsilon_m = {}", v.epsilon_m);
        let _ = writeln!(o, "concentration_d = {}", ulist(&v.concentration_d));
        let _ = writeln!(o, "concentration_n = {}", ulist(&v.concentration_n));
        let _ = writeln!(o, "concentration_t = {:?}", v.concentration_t);
        let _ = writeln!(o, "concentration_replicas = {}", v.concentration_replicas);
        o
    }
}

/// A raw value and the line it came from.
struct Entry {
    value: String,
    line: usize,
}

/// Pulls typed values out of the raw entries, collecting every problem.
struct Reader {
    entries: BTreeMap<(String, String), Entry>,
    headers: BTreeMap<String, usize>,
    /// Lines of entries already taken out of `entries`.
    consumed: BTreeMap<(String, String), usize>,
    last_line: usize,
    errors: Vec<String>,
}

impl Reader {
    fn raw(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let k = (section.to_string(), key.to_string());
        let e = self.entries.remove(&k)?;
        self.consumed.insert(k, e.line);
        Some((e.value, e.line))
    }

    fn name(section: &str, key: &str) -> String {
        if section.is_empty() {
            key.to_string()
        } else {
            format!("[{section}] {key}")
        }
    }

    fn parse_one<T: FromStr>(&mut self, section: &str, key: &str, text: &str, line: usize, what: &str) -> Option<T> {
        match text.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("line {line}: {}: expected {what}, got '{text}'", Self::name(section, key)));
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str, what: &str, default: T) -> T {
        match self.raw(section, key) {
            Some((text, line)) => self.parse_one(section, key, &text, line, what).unwrap_or(default),
            None => default,
        }
    }

    fn require<T: FromStr>(&mut self, section: &str, key: &str, what: &str, fallback: T) -> T {
        match self.raw(section, key) {
            Some((text, line)) => self.parse_one(section, key, &text, line, what).unwrap_or(fallback),
            None => {
                let line = self.headers.get(section).copied().unwrap_or(self.last_line);
                self.errors.push(format!("line {line}: missing required key {}", Self::name(section, key)));
                fallback
            }
        }
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str, what: &str, default: Vec<T>, required: bool) -> (Vec<T>, usize) {
        let Some((text, line)) = self.raw(section, key) else {
            if required {
                let line = self.headers.get(section).copied().unwrap_or(self.last_line);
                self.errors.push(format!("line {line}: missing required key {}", Self::name(section, key)));
            }
            return (default, 0);
        };
        if text.is_empty() {
            return (Vec::new(), line);
        }
        let mut out = Vec::new();
        for item in text.split(',').map(str::trim) {
            if let Some(v) = self.parse_one(section, key, item, line, what) {
                out.push(v);
            }
        }
        (out, line)
    }

    fn check(&mut self, ok: bool, line: usize, msg: impl Into<String>) {
        if !ok {
            self.errors.push(format!("line {line}: {}", msg.into()));
        }
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        let k = (section.to_string(), key.to_string());
        self.entries.get(&k).map(|e| e.line).or_else(|| self.consumed.get(&k).copied()).unwrap_or(0)
    }
}

const SECTIONS: [&str; 5] = ["", "model", "sizes", "sampler", "verify"];

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "" => &["seed", "output_dir", "suites"],
        "model" => &["activation", "readout", "atoms", "probs", "delta", "allow_unbounded"],
        "sizes" => &["d", "p", "n", "t", "lambda", "eta"],
        "sampler" => &["method", "m", "per_replica", "n_outer", "n_test", "m_single", "step_size", "n_steps", "n_burn", "adapt_target", "thin"],
        "verify" => &[
            "pairs",
            "fd_h",
            "pout_m",
            "approx_d",
            "approx_m",
            "epsilon_d",
            "epsilon_p",
            "epsilon_m",
            "concentration_d",
            "concentration_n",
            "concentration_t",
            "concentration_replicas",
        ],
        _ => &[],
    }
}

/// Parses and validates a configuration, reporting every error found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
    let mut headers = BTreeMap::new();
    let mut section = String::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                errors.push(format!("line {line}: malformed section header '{content}'"));
                continue;
            };
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) || name.is_empty() {
                errors.push(format!("line {line}: unknown section [{name}]"));
            } else if let Some(prev) = headers.get(&name) {
                errors.push(format!("line {line}: section [{name}] repeated (first at line {prev})"));
            } else {
                headers.insert(name.clone(), line);
            }
            section = name;
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(format!("line {line}: expected 'key = value', got '{content}'"));
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !known_keys(&section).contains(&key.as_str()) {
            errors.push(format!("line {line}: unknown key {}", Reader::name(&section, &key)));
            continue;
        }
        let slot = (section.clone(), key.clone());
        if let Some(prev) = entries.get(&slot) {
            errors.push(format!("line {line}: duplicate key {} (lines {} and {line})", Reader::name(&section, &key), prev.line));
            continue;
        }
        entries.insert(slot, Entry { value, line });
    }
    let mut r = Reader { entries, headers, consumed: BTreeMap::new(), last_line, errors };
    let defaults = ChainConfig::default();

    let seed = r.get("", "seed", "a non-negative integer", 0u64);
    let output_dir = PathBuf::from(r.get("", "output_dir", "a path", "out".to_string()));
    let suites_line = r.line_of("", "suites");
    let (suites, _) = r.list::<String>("", "suites", "a suite name", Vec::new(), false);
    for s in &suites {
        r.check(KNOWN_SUITES.contains(&s.as_str()), suites_line, format!("unknown suite '{s}' (known: {})", KNOWN_SUITES.join(", ")));
    }

    let activation = r.get("model", "activation", "an activation (tanh, sine, scaled-erf, identity)", ActivationKind::Tanh);
    let readout_line = r.line_of("model", "readout");
    let readout = match r.raw("model", "readout") {
        Some((text, line)) => match text.as_str() {
            "zero" => ReadoutFn::Zero,
            "tanh" => ReadoutFn::Tanh,
            "identity" => ReadoutFn::Identity,
            other => {
                r.errors.push(format!("line {line}: [model] readout: expected a readout (zero, tanh, identity), got '{other}'"));
                ReadoutFn::Tanh
            }
        },
        None => ReadoutFn::Tanh,
    };
    let (atoms, atoms_line) = r.list("model", "atoms", "a number", vec![1.0], false);
    let default_probs = vec![1.0 / atoms.len().max(1) as f64; atoms.len()];
    let (probs, probs_line) = r.list("model", "probs", "a number", default_probs, false);
    let delta_line = r.line_of("model", "delta");
    let delta: f64 = r.require("model", "delta", "a number", 1.0);
    r.check(delta > 0.0 && delta.is_finite(), delta_line, format!("[model] delta = {delta} violates the constraint delta > 0"));
    let allow_unbounded = r.get("model", "allow_unbounded", "true or false", false);
    r.check(!atoms.is_empty(), atoms_line, "[model] atoms must not be empty");
    r.check(atoms.len() == probs.len(), probs_line.max(atoms_line), "[model] atoms and probs must have equal length");
    r.check(probs.iter().all(|&q| q > 0.0), probs_line, "[model] probs must be positive");
    if readout == ReadoutFn::Identity && !allow_unbounded {
        r.errors.push(format!(
            "line {readout_line}: [model] readout = identity is unbounded; set allow_unbounded = true to accept it"
        ));
    }

    let (d, d_line) = r.list::<usize>("sizes", "d", "a positive integer", Vec::new(), true);
    let (p, p_line) = r.list::<usize>("sizes", "p", "a positive integer", d.clone(), false);
    let (n, n_line) = r.list::<usize>("sizes", "n", "a positive integer", Vec::new(), true);
    let (t, t_line) = r.list("sizes", "t", "a number", vec![0.0, 0.5, 1.0], false);
    let (lambda, l_line) = r.list("sizes", "lambda", "a number", vec![0.5], false);
    let (eta, e_line) = r.list("sizes", "eta", "a number", vec![1.0], false);
    r.check(d.iter().all(|&x| x > 0), d_line, "[sizes] d must be positive");
    r.check(p.iter().all(|&x| x > 0), p_line, "[sizes] p must be positive");
    r.check(n.iter().all(|&x| x > 0), n_line, "[sizes] n must be positive");
    let lens: Vec<usize> = [d.len(), p.len(), n.len()].into_iter().filter(|&l| l > 1).collect();
    r.check(lens.windows(2).all(|w| w[0] == w[1]), n_line.max(d_line), "[sizes] d, p and n lists must have equal length or length 1");
    r.check(t.iter().all(|&x| (0.0..=1.0).contains(&x)), t_line, "[sizes] t must lie in [0, 1]");
    r.check(lambda.iter().all(|&x| x >= 0.0), l_line, "[sizes] lambda must be >= 0");
    r.check(eta.iter().all(|&x| x > 0.0), e_line, "[sizes] eta must be > 0");

    let method = r.get("sampler", "method", "a sampler method (projected, importance, mala)", Method::Projected);
    let positive = |r: &mut Reader, key: &str, default: usize| {
        let line = r.line_of("sampler", key);
        let v = r.get("sampler", key, "a positive integer", default);
        r.check(v > 0, line, format!("[sampler] {key} must be positive"));
        v
    };
    let m = positive(&mut r, "m", 20_000);
    let per_replica = positive(&mut r, "per_replica", 400);
    let n_outer = positive(&mut r, "n_outer", 100);
    let n_test = positive(&mut r, "n_test", 20);
    let m_single = positive(&mut r, "m_single", 100_000);
    let chain = ChainConfig {
        step_size: r.get("sampler", "step_size", "a number", defaults.step_size),
        n_steps: r.get("sampler", "n_steps", "a non-negative integer", defaults.n_steps),
        n_burn: r.get("sampler", "n_burn", "a non-negative integer", defaults.n_burn),
        adapt_target: r.get("sampler", "adapt_target", "a number", defaults.adapt_target),
        thin: r.get("sampler", "thin", "a non-negative integer", defaults.thin),
    };
    if let Err(e) = chain.validate() {
        let line = r.headers.get("sampler").copied().unwrap_or(0);
        r.errors.push(format!("line {line}: [sampler] {e}"));
    }

    let verify = VerifyBlock {
        pairs: r.get("verify", "pairs", "a positive integer", 400),
        fd_h: r.get("verify", "fd_h", "a number", 0.05),
        pout_m: r.get("verify", "pout_m", "a positive integer", 100_000),
        approx_d: r.list("verify", "approx_d", "a positive integer", vec![16, 64, 256], false).0,
        approx_m: r.get("verify", "approx_m", "a positive integer", 1_000_000),
        epsilon_d: r.list("verify", "epsilon_d", "a positive integer", vec![16, 64, 256], false).0,
        epsilon_p: r.get("verify", "epsilon_p", "a positive integer", 1024),
        epsilon_m: r.get("verify", "epsilon_m", "a positive integer", 20_000),
        concentration_d: r.list("verify", "concentration_d", "a positive integer", vec![8, 32, 128], false).0,
        concentration_n: r.list("verify", "concentration_n", "a positive integer", vec![1, 4, 16], false).0,
        concentration_t: r.get("verify", "concentration_t", "a number", 0.5),
        concentration_replicas: r.get("verify", "concentration_replicas", "a positive integer", 200),
    };
    let h_line = r.line_of("verify", "fd_h");
    r.check(verify.fd_h > 0.0 && verify.fd_h < 0.5, h_line, "[verify] fd_h must lie in (0, 0.5)");

    // Preconditions of the selected suites; defaulted keys point at the suites line.
    let at = |r: &Reader, section: &str, key: &str| match r.line_of(section, key) {
        0 => suites_line,
        l => l,
    };
    let wants = |name: &str| suites.iter().any(|s| s == name);
    if wants("pout") {
        let l = at(&r, "verify", "pout_m");
        r.check(verify.pout_m >= MIN_POUT_DRAWS, l, format!("[verify] pout_m must be >= {MIN_POUT_DRAWS} for the pout suite"));
    }
    if wants("concentration") {
        let l = at(&r, "verify", "concentration_replicas");
        r.check(
            verify.concentration_replicas >= MIN_REPLICAS,
            l,
            format!("[verify] concentration_replicas must be >= {MIN_REPLICAS}"),
        );
    }
    if wants("mutual_information") || wants("conditional_entropy") {
        let l = at(&r, "sampler", "m_single");
        r.check(m_single >= MIN_SINGLE_DRAWS, l, format!("[sampler] m_single must be >= {MIN_SINGLE_DRAWS} for the single-sample term"));
    }
    if wants("approximations") {
        let l = at(&r, "verify", "approx_d");
        r.check(verify.approx_d.len() >= 3, l, "[verify] approx_d needs at least 3 dimensions");
    }
    if wants("epsilon") {
        let l = at(&r, "verify", "epsilon_d");
        r.check(verify.epsilon_d.len() >= 3, l, "[verify] epsilon_d needs at least 3 dimensions");
        let l = at(&r, "verify", "epsilon_p");
        r.check(verify.epsilon_p >= 64, l, "[verify] epsilon_p must be >= 64");
    }
    if method == Method::Mala {
        for s in ["b_term", "side_mutual_information", "gen_error_proxy", "immse"] {
            if wants(s) {
                let l = at(&r, "sampler", "method");
                r.check(false, l, format!("suite {s} needs an importance sampler (projected or importance), not mala"));
            }
        }
    }

    if !r.errors.is_empty() {
        r.errors.sort_by_key(|e| e.split(':').next().and_then(|l| l.trim_start_matches("line ").parse::<usize>().ok()).unwrap_or(0));
        return Err(Error::Config(r.errors));
    }
    Ok(ExperimentConfig {
        seed,
        output_dir,
        suites,
        model: ModelBlock { activation, readout, atoms, probs, delta, allow_unbounded },
        sizes: SizesBlock { d, p, n, t, lambda, eta },
        sampler: SamplerBlock { method, m, per_replica, chain, n_outer, n_test, m_single },
        verify,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\ndelta = 0.5\n[sizes]\nd = 8\nn = 2\n";

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.sizes.p, vec![8]);
        assert_eq!(c.sizes.t, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.model.activation, ActivationKind::Tanh);
        assert_eq!(c.sampler.method, Method::Projected);
        assert!(c.suites.is_empty());
        assert_eq!(c.triplets(), vec![(8, 8, 2)]);
    }

    #[test]
    fn negative_delta_names_the_constraint() {
        let e = errors("[model]\ndelta = -1\n[sizes]\nd = 8\nn = 2\n");
        assert_eq!(e.len(), 1);
        assert!(e[0].contains("delta > 0") && e[0].starts_with("line 2"), "{e:?}");
    }

    #[test]
    fn suite_preconditions_are_config_errors() {
        let e = errors("suites = pout, concentration\n[model]\ndelta = 0.5\n[sizes]\nd = 8\nn = 2\n[verify]\npout_m = 500\nconcentration_replicas = 50\n");
        assert_eq!(e.len(), 2, "{e:?}");
        assert!(e[0].starts_with("line 8") && e[0].contains("pout_m"), "{e:?}");
        assert!(e[1].starts_with("line 9") && e[1].contains("concentration_replicas"), "{e:?}");
        let e = errors("suites = immse\n[model]\ndelta = 0.5\n[sizes]\nd = 8\nn = 2\n[sampler]\nmethod = mala\n");
        assert!(e[0].starts_with("line 8") && e[0].contains("immse"), "{e:?}");
        let e = errors("[model]\ndelta = 0.5\n[sizes]\nd = 8\nn = 2\n[verify]\nfd_h = 0.9\n");
        assert!(e[0].starts_with("line 7") && e[0].contains("fd_h"), "{e:?}");
    }

    #[test]
    fn duplicate_key_lists_both_lines() {
        let e = errors("[model]\ndelta = 0.5\n\ndelta = 0.6\n[sizes]\nd = 8\nn = 2\n");
        assert!(e.iter().any(|m| m.contains("lines 2 and 4")), "{e:?}");
    }

    #[test]
    fn all_errors_are_reported() {
        let e = errors("seed = x\nbogus = 1\n[model]\ndelta = abc\n[sizes]\nd = 8\n");
        assert!(e.iter().any(|m| m.starts_with("line 1:") && m.contains("seed")));
        assert!(e.iter().any(|m| m.starts_with("line 2:") && m.contains("unknown key bogus")));
        assert!(e.iter().any(|m| m.starts_with("line 4:") && m.contains("expected a number")));
        assert!(e.iter().any(|m| m.contains("missing required key [sizes] n")));
    }

    #[test]
    fn serialize_round_trips() {
        let text = "seed = 9\nsuites = gen_error, theorem1\n[model]\nactivation = sine\natoms = 1, -1\ndelta = 0.25\n\
                    [sizes]\nd = 16, 64\nn = 4\nt = 0.5\n[sampler]\nmethod = mala\nn_steps = 300\nn_burn = 100\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.serialize()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.serialize(), again.serialize());
        assert_eq!(c.model.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn unknown_suite_is_rejected() {
        let e = errors("suites = nope\n[model]\ndelta = 1\n[sizes]\nd = 4\nn = 2\n");
        assert!(e[0].contains("unknown suite 'nope'"));
    }
}
