use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gepnet::config::{parse_config, ExperimentConfig};
use gepnet::data::gen_dataset;
use gepnet::model::{Activation, ActivationKind, GaussEquivParams};
use gepnet::rng::{derive_seed, substream};
use gepnet::runner::{run, write_atomic, VERSION};
use gepnet::Error;

const ESTIMATES: [&str; 9] = [
    "free_entropy",
    "mutual_information",
    "gen_error",
    "conditional_entropy",
    "psi",
    "side_mutual_information",
    "gen_error_proxy",
    "b_term",
    "immse",
];
const SUITES: [&str; 6] = ["nishimori", "pout", "approximations", "epsilon", "concentration", "b_term"];

#[derive(Parser)]
#[command(name = "gepnet", version = VERSION, about = "Teacher-student networks and their equivalent noisy GLM")]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print rho and epsilon for an activation.
    Constants {
        #[arg(default_value = "tanh")]
        activation: String,
    },
    /// Emit a dataset at the first grid point of the config.
    Gen {
        /// Interpolation time.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
    /// Run one estimator over the configured grid.
    Estimate { quantity: String },
    /// Run one verification suite.
    Verify { suite: String },
    /// Run a gap scan (`theorem1` or `theorem2`) along the configured sizes.
    Scan { which: String },
    /// Run every suite selected in the config.
    Run,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("this command needs --config PATH".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run_suites(cli: &Cli, suites: Vec<String>) -> Result<u8, Failure> {
    let mut cfg = load(cli)?;
    cfg.suites = suites;
    let manifest = run(&cfg, cli.workers)?;
    let summary = std::fs::read_to_string(cfg.output_dir.join("summary.txt")).map_err(|e| Failure::Run(e.to_string()))?;
    print!("{summary}");
    println!("# {} jobs, outputs in {}", manifest.jobs.len(), cfg.output_dir.display());
    Ok(manifest.exit_code() as u8)
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Constants { activation } => {
            let kind: ActivationKind = activation.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
            let p = GaussEquivParams::for_activation(&Activation::new(kind))?;
            println!("activation = {kind}\nrho = {:.12}\nepsilon = {:.12}\nsecond_moment = {:.12}", p.rho, p.epsilon, p.second_moment);
            Ok(0)
        }
        Command::Gen { t } => {
            let cfg = load(cli)?;
            let (d, p, n) = cfg.triplets()[0];
            let model = cfg.model_at(d, p, n)?;
            let seed = derive_seed(cfg.seed, &[0]);
            let ds = gen_dataset(&model, *t, &mut substream(seed, &[]))?.with_seed(seed);
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Failure::Run(e.to_string()))?;
            let path = cfg.output_dir.join(format!("dataset_d{d}_p{p}_n{n}_t{t:?}.csv"));
            write_atomic(&path, ds.to_csv().as_bytes())?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Estimate { quantity } => {
            if !ESTIMATES.contains(&quantity.as_str()) {
                return Err(Failure::Config(format!("unknown quantity '{quantity}' (known: {})", ESTIMATES.join(", "))));
            }
            run_suites(cli, vec![quantity.clone()])
        }
        Command::Verify { suite } => {
            if !SUITES.contains(&suite.as_str()) {
                return Err(Failure::Config(format!("unknown suite '{suite}' (known: {})", SUITES.join(", "))));
            }
            run_suites(cli, vec![suite.clone()])
        }
        Command::Scan { which } => {
            if which != "theorem1" && which != "theorem2" {
                return Err(Failure::Config(format!("unknown scan '{which}' (theorem1, theorem2)")));
            }
            run_suites(cli, vec![which.clone()])
        }
        Command::Run => {
            let cfg = load(cli)?;
            run_suites(cli, cfg.suites)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
