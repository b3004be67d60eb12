//! Job planning and execution for a parsed [`ExperimentConfig`].
//!
//! Each selected suite expands into jobs over the size grid. A job's seed is
//! derived from the master seed and a digest of its id, so adding or removing
//! jobs leaves the others untouched. Every job writes one CSV; the run also
//! writes `summary.txt` (one line per assertion), `config.txt` (normalized
//! config without the output directory) and `manifest.txt` (seeds, timings, statuses).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::estimators::{
    conditional_entropy_term, free_entropy, gen_error, gen_error_proxy, immse_check, immse_grid, mutual_information,
    psi_term, side_mutual_information, Coords, Estimate, PsiMode,
};
use crate::model::{Activation, GaussEquivParams};
use crate::posterior::Sampler;
use crate::rng::{derive_seed, substream};
use crate::verify::{
    approximation_suite, b_term_check, concentration_check, epsilon_cancellation_check, nishimori_suite,
    pout_property_suite, theorem1_gap_scan, theorem2_gap_scan, NishimoriConfig, Report, ScanBudget,
};

/// Semantic version plus a digest of the sources this binary was built from.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (build ", env!("GEPNET_SOURCE_HASH"), ")");

pub fn version_stamp() -> String {
    VERSION.to_string()
}

/// First 16 hex digits of the SHA-256 of the normalized config, leaving
/// out the output directory.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let d = Sha256::digest(cfg.serialize_experiment().as_bytes());
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn job_seed(master: u64, id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    let key = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    derive_seed(master, &[key])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: String,
    pub suite: String,
    pub dims: Option<(usize, usize, usize)>,
    pub t: Option<f64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
}

impl Job {
    fn new(suite: &str) -> Self {
        Self { id: suite.to_string(), suite: suite.to_string(), dims: None, t: None, lambda: None, eta: None }
    }

    fn dims(mut self, (d, p, n): (usize, usize, usize)) -> Self {
        self.dims = Some((d, p, n));
        self.id = format!("{}_d{d}_p{p}_n{n}", self.id);
        self
    }

    fn t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self.id = format!("{}_t{t:?}", self.id);
        self
    }

    fn side(mut self, lambda: f64, eta: f64) -> Self {
        self.lambda = Some(lambda);
        self.eta = Some(eta);
        self.id = format!("{}_lambda{lambda:?}_eta{eta:?}", self.id);
        self
    }
}

/// Expands the suite selection into jobs, in a fixed order.
pub fn plan(cfg: &ExperimentConfig) -> Vec<Job> {
    let trip = cfg.triplets();
    let s = &cfg.sizes;
    let h = cfg.verify.fd_h;
    let mut jobs = Vec::new();
    for suite in &cfg.suites {
        let base = Job::new(suite);
        match suite.as_str() {
            "free_entropy" | "mutual_information" | "gen_error" | "conditional_entropy" => {
                for &x in &trip {
                    for &t in &s.t {
                        jobs.push(base.clone().dims(x).t(t));
                    }
                }
            }
            "b_term" => {
                for &x in &trip {
                    for &t in s.t.iter().filter(|&&t| t - h >= 0.0 && t + h <= 1.0 && t > 0.0 && t < 1.0) {
                        jobs.push(base.clone().dims(x).t(t));
                    }
                }
            }
            "psi" | "nishimori" => jobs.extend(trip.iter().map(|&x| base.clone().dims(x))),
            "side_mutual_information" | "gen_error_proxy" | "immse" => {
                for &x in &trip {
                    for &t in &s.t {
                        for &l in &s.lambda {
                            for &e in &s.eta {
                                jobs.push(base.clone().dims(x).t(t).side(l, e));
                            }
                        }
                    }
                }
            }
            _ => jobs.push(base),
        }
    }
    jobs
}

fn single(quantity: &str, e: Estimate) -> Report {
    let mut r = Report::new(quantity);
    r.row(quantity, &e);
    r
}

/// Full-parameter sampler for suites that need posterior points.
fn full_sampler(cfg: &ExperimentConfig) -> Sampler {
    match cfg.sampler.method {
        Method::Projected => Sampler::Importance { m: cfg.sampler.m, per_replica: cfg.sampler.per_replica },
        _ => cfg.sampler.sampler(),
    }
}

/// Runs one job.
pub fn execute(cfg: &ExperimentConfig, job: &Job, seed: u64) -> Result<Report> {
    let mut rng = substream(seed, &[]);
    let sm = &cfg.sampler;
    let sampler = sm.sampler();
    let (d, p, n) = job.dims.unwrap_or_else(|| cfg.triplets()[0]);
    let model = cfg.model_at(d, p, n)?;
    let t = job.t.unwrap_or(0.0);
    let name = job.suite.as_str();
    Ok(match name {
        "constants" => {
            let params = GaussEquivParams::for_activation(&Activation::new(cfg.model.activation))?;
            let c = Coords { d: 0, p: 0, n: 0, t: 0.0 };
            let mut r = Report::new(name);
            r.row("rho", &Estimate::new(params.rho, 0.0, c));
            r.row("epsilon", &Estimate::new(params.epsilon, 0.0, c));
            r.row("second_moment", &Estimate::new(params.second_moment, 0.0, c));
            r
        }
        "free_entropy" => single(name, free_entropy(&model, t, sm.n_outer, &sampler, &mut rng)?),
        "mutual_information" => single(name, mutual_information(&model, t, sm.n_outer, &sampler, sm.m_single, &mut rng)?),
        "gen_error" => single(name, gen_error(&model, t, sm.n_outer, sm.n_test, &sampler, &mut rng)?),
        "conditional_entropy" => single(name, conditional_entropy_term(&model, t, sm.m_single, &mut rng)?),
        "psi" => {
            let mut r = Report::new(name);
            for mode in [PsiMode::Nn, PsiMode::Glm, PsiMode::Limit] {
                r.row(format!("psi_{mode}"), &psi_term(&model, mode, sm.m_single, &mut rng)?);
            }
            r
        }
        "b_term" => b_term_check(&model, t, cfg.verify.fd_h, sm.n_outer, &sampler, &mut rng)?,
        "side_mutual_information" | "gen_error_proxy" => {
            let (l, e) = (job.lambda.unwrap_or(0.5), job.eta.unwrap_or(1.0));
            let est = if name == "gen_error_proxy" {
                gen_error_proxy(&model, t, l, e, sm.n_outer, &sampler, &mut rng)?
            } else {
                side_mutual_information(&model, t, l, e, sm.n_outer, &sampler, &mut rng)?
            };
            single(name, est)
        }
        "immse" => {
            let (l, e) = (job.lambda.unwrap_or(0.5), job.eta.unwrap_or(1.0));
            let rep = immse_check(&model, t, &immse_grid(l), e, sm.n_outer, &sampler, &mut rng)?;
            let mut r = Report::new(name);
            r.row("immse_derivative", &rep.derivative);
            r.row("immse_half_gen_error", &rep.half_proxy);
            r.row("immse_discrepancy", &rep.discrepancy);
            r.push(crate::verify::Assertion::within_se(
                format!("immse.lambda={l:?}"),
                rep.discrepancy.value,
                0.0,
                rep.discrepancy.stderr,
                crate::verify::SE_THRESHOLD,
            ));
            r
        }
        "nishimori" => {
            let nc = NishimoriConfig { n_datasets: sm.n_outer, sampler: full_sampler(cfg), pairs: cfg.verify.pairs, times: cfg.sizes.t.clone() };
            nishimori_suite(&model, &nc, &mut rng)?
        }
        "pout" => pout_property_suite(&model, cfg.verify.pout_m, &mut rng)?,
        "approximations" => approximation_suite(&model.activation, &cfg.verify.approx_d, cfg.verify.approx_m, &mut rng)?.1,
        "epsilon" => {
            epsilon_cancellation_check(&model.activation, &cfg.verify.epsilon_d, cfg.verify.epsilon_p, cfg.verify.epsilon_m, &mut rng)?.1
        }
        "concentration" => {
            let v = &cfg.verify;
            let grid: Vec<(usize, usize)> =
                v.concentration_d.iter().flat_map(|&d| v.concentration_n.iter().map(move |&n| (d, n))).collect();
            concentration_check(&model, v.concentration_t, &grid, v.concentration_replicas, &sampler, &mut rng)?.report
        }
        "theorem1" | "theorem2" => {
            let budget = ScanBudget { n_outer: sm.n_outer, n_test: sm.n_test, sampler };
            let scan = if name == "theorem1" {
                theorem1_gap_scan(&model, &cfg.triplets(), &budget, &mut rng)?
            } else {
                theorem2_gap_scan(&model, &cfg.triplets(), &budget, &mut rng)?
            };
            scan.report
        }
        other => return Err(Error::Argument(format!("unknown suite '{other}'"))),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobStatus {
    /// Estimates only, no assertions.
    Done,
    Passed,
    Failed,
    Error(String),
}

#[derive(Debug, Clone)]
pub struct JobRecord {
    pub id: String,
    pub seed: u64,
    pub seconds: f64,
    pub status: JobStatus,
    pub file: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub jobs: Vec<JobRecord>,
}

impl RunManifest {
    /// No job errored and no assertion failed.
    pub fn passed(&self) -> bool {
        self.jobs.iter().all(|j| matches!(j.status, JobStatus::Done | JobStatus::Passed))
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "config_hash = {}", self.config_hash);
        let _ = writeln!(o, "version = {}", self.version);
        let _ = writeln!(o, "seed = {}", self.seed);
        let _ = writeln!(o, "jobs = {}", self.jobs.len());
        for j in &self.jobs {
            let status = match &j.status {
                JobStatus::Done => "done".to_string(),
                JobStatus::Passed => "passed".to_string(),
                JobStatus::Failed => "failed".to_string(),
                JobStatus::Error(e) => format!("error: {e}"),
            };
            let _ = writeln!(
                o,
                "{} seed={} seconds={:.3} status={} file={}",
                j.id,
                j.seed,
                j.seconds,
                status,
                j.file.as_deref().unwrap_or("-")
            );
        }
        o
    }
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_text(report: &Report, version: &str, hash: &str) -> String {
    format!("# gepnet {version} config {hash}\n{}", report.to_csv())
}

/// Runs every planned job on a pool of `workers` threads and writes the
/// outputs to `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<RunManifest> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let version = version_stamp();
    let hash = config_hash(cfg);
    let jobs = plan(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start the worker pool: {e}")))?;
    let results: Vec<(JobRecord, Option<Report>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let seed = job_seed(cfg.seed, &job.id);
                let start = Instant::now();
                let res = execute(cfg, job, seed);
                let seconds = start.elapsed().as_secs_f64();
                let (status, report) = match res {
                    Ok(r) if r.assertions.is_empty() => (JobStatus::Done, Some(r)),
                    Ok(r) if r.passed() => (JobStatus::Passed, Some(r)),
                    Ok(r) => (JobStatus::Failed, Some(r)),
                    Err(e) => (JobStatus::Error(e.to_string()), None),
                };
                log::info!("{} finished in {seconds:.2}s", job.id);
                (JobRecord { id: job.id.clone(), seed, seconds, status, file: None }, report)
            })
            .collect()
    });
    let mut summary = format!("# gepnet {version} manifest {hash}\n");
    let mut records = Vec::new();
    for (mut rec, report) in results {
        let _ = writeln!(summary, "## {}", rec.id);
        match report {
            Some(r) => {
                let file = format!("{}.csv", rec.id);
                write_atomic(&out.join(&file), csv_text(&r, &version, &hash).as_bytes())?;
                rec.file = Some(file);
                summary.push_str(&r.summary());
            }
            None => {
                if let JobStatus::Error(e) = &rec.status {
                    let _ = writeln!(summary, "{} ERROR {e}", rec.id);
                }
            }
        }
        records.push(rec);
    }
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    write_atomic(&out.join("config.txt"), cfg.serialize_experiment().as_bytes())?;
    let manifest = RunManifest { config_hash: hash, version, seed: cfg.seed, jobs: records };
    write_atomic(&out.join("manifest.txt"), manifest.to_text().as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(suites: &str) -> ExperimentConfig {
        parse_config(&format!("suites = {suites}\n[model]\ndelta = 0.5\n[sizes]\nd = 4, 8\nn = 2\nt = 0, 0.5\n")).unwrap()
    }

    #[test]
    fn plan_expands_grid() {
        let jobs = plan(&cfg("free_entropy, theorem1, b_term"));
        let ids: Vec<&str> = jobs.iter().map(|j| j.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "free_entropy_d4_p4_n2_t0.0",
                "free_entropy_d4_p4_n2_t0.5",
                "free_entropy_d8_p8_n2_t0.0",
                "free_entropy_d8_p8_n2_t0.5",
                "theorem1",
                "b_term_d4_p4_n2_t0.5",
                "b_term_d8_p8_n2_t0.5",
            ]
        );
    }

    #[test]
    fn job_seeds_depend_only_on_id() {
        assert_eq!(job_seed(3, "gen_error_d4_p4_n2_t0.0"), job_seed(3, "gen_error_d4_p4_n2_t0.0"));
        assert_ne!(job_seed(3, "a"), job_seed(3, "b"));
        assert_ne!(job_seed(3, "a"), job_seed(4, "a"));
    }

    #[test]
    fn version_is_nonempty_and_stable() {
        assert!(!version_stamp().is_empty());
        assert_eq!(version_stamp(), version_stamp());
        assert!(version_stamp().starts_with(env!("CARGO_PKG_VERSION")));
    }
}
