//! Command-line experiment runner for `demix`.
//!
//! The binary is a thin wrapper around [`run`], which parses arguments,
//! executes one subcommand and returns the process exit code:
//! 0 ok, 1 I/O or usage, 2 validation, 3 solver non-optimal, 4 not certified.

pub mod config;
pub mod experiment;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use demix::recover::{certify, recover};
use demix::scenario::{load_scenario, save_scenario, AmplitudeDist, MessageMode, SensingMode};
use demix::sdp::{AdmmSolver, SolverBackend};
use demix::{
    assemble_dual_sdp, generate_scenario, synthesize_measurements, DualPolynomialSet, DualSolution,
    Error, GenConfig, MeasurementModel, Scenario,
};

use config::{apply_override, ExperimentConfig, ResolvedConfig};
use experiment::run_experiment;
use output::Provenance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_NOT_CERTIFIED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "demix", version, about = "Gridless blind deconvolution and demixing experiments")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// First repetition seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// fig2, fig3a, fig3b-text, fig3b-caption, fig3c or fig4.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Use the published problem sizes instead of the desk-scale ones.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Override a tolerance, e.g. `--tol eps_abs=1e-8 --tol threshold=0.99`.
    #[arg(long = "tol", global = true, value_name = "KEY=VALUE")]
    tol: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct ScenarioArgs {
    /// Samples N.
    #[arg(long)]
    n: Option<usize>,
    /// Users K.
    #[arg(long)]
    k: Option<usize>,
    /// Paths per user, one value or K comma-separated values.
    #[arg(long, value_delimiter = ',')]
    paths: Vec<usize>,
    /// Message size per user, one value or K comma-separated values.
    #[arg(long, value_delimiter = ',')]
    msg: Vec<usize>,
    /// Entrywise positive messages.
    #[arg(long)]
    positive: bool,
    /// Keep M uniformly spaced samples.
    #[arg(long, value_name = "M")]
    subsample: Option<usize>,
    /// Unit-modulus amplitudes with random phase.
    #[arg(long)]
    unit_modulus: bool,
    /// Minimum delay separation (default 1/N).
    #[arg(long)]
    min_sep: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a scenario and write scenario.json.
    Gen {
        #[command(flatten)]
        gen: ScenarioArgs,
    },
    /// Solve the dual SDP and write solution.json.
    Solve {
        /// Existing scenario file; drawn from the config otherwise.
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
        #[command(flatten)]
        gen: ScenarioArgs,
    },
    /// Extract delays from a solution; writes delays.json and the curve CSVs.
    Localize {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        #[arg(long, value_name = "FILE")]
        solution: PathBuf,
    },
    /// Localize, then recover messages and amplitudes; writes recovery.json.
    Recover {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        #[arg(long, value_name = "FILE")]
        solution: PathBuf,
    },
    /// Full pipeline over the configured repetitions.
    Pipeline {
        #[command(flatten)]
        gen: ScenarioArgs,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Pipeline over several N with paired seeds; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        gen: ScenarioArgs,
        /// Sample counts, comma-separated.
        #[arg(long, value_delimiter = ',')]
        n_values: Vec<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Check the optimality certificate of a solution against its scenario.
    Certify {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        #[arg(long, value_name = "FILE")]
        solution: PathBuf,
    },
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::Shape(_) => EXIT_IO,
            Error::Domain(_) | Error::Generation(_) | Error::NoEnergy(_) => EXIT_VALIDATION,
            Error::Solver(_) => EXIT_SOLVER,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Parse `args` (program name first) and run the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::from_default_env()
            .filter_level(log::LevelFilter::Info)
            .try_init();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

impl ScenarioArgs {
    fn is_set(&self) -> bool {
        self.n.is_some()
            || self.k.is_some()
            || !self.paths.is_empty()
            || !self.msg.is_empty()
            || self.positive
            || self.subsample.is_some()
            || self.unit_modulus
            || self.min_sep.is_some()
    }

    fn to_gen_config(&self) -> std::result::Result<GenConfig, Failure> {
        let n = self
            .n
            .ok_or_else(|| Failure::usage("--n is required when describing a scenario by flags"))?;
        let k = self
            .k
            .unwrap_or_else(|| self.paths.len().max(self.msg.len()).max(1));
        let per_user = |v: &[usize], what: &str| -> std::result::Result<Vec<usize>, Failure> {
            match v.len() {
                0 => Ok(vec![1; k]),
                1 => Ok(vec![v[0]; k]),
                l if l == k => Ok(v.to_vec()),
                l => Err(Failure::usage(format!("--{what} has {l} values for {k} users"))),
            }
        };
        let mut g = GenConfig::new(n, per_user(&self.paths, "paths")?, per_user(&self.msg, "msg")?);
        if self.positive {
            g.messages = MessageMode::UnitSpherePositive;
        }
        if self.unit_modulus {
            g.amplitudes = AmplitudeDist::UnitModulusRandomPhase;
        }
        if let Some(m) = self.subsample {
            g.sensing = SensingMode::UniformSubsample(m);
        }
        g.min_separation = self.min_sep;
        Ok(g)
    }
}

fn build_config(
    cli: &Cli,
    gen: Option<&ScenarioArgs>,
    repetitions: Option<usize>,
    n_values: Option<&[usize]>,
) -> std::result::Result<ResolvedConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| with_path(p)(e.into()))?;
            ExperimentConfig::from_json(&text).map_err(with_path(p))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &cli.preset {
        cfg.preset = Some(p.clone());
        cfg.scenario = None;
    }
    if cli.paper_scale {
        cfg.paper_scale = true;
    }
    if let Some(g) = gen.filter(|g| g.is_set()) {
        cfg.scenario = Some(g.to_gen_config()?);
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
        cfg.seeds = None;
    }
    if repetitions.is_some() {
        cfg.repetitions = repetitions;
        cfg.seeds = None;
    }
    if let Some(v) = n_values.filter(|v| !v.is_empty()) {
        cfg.n_values = Some(v.to_vec());
    }
    if cfg.preset.is_none() && cfg.scenario.is_none() {
        return Err(Failure::usage(
            "no scenario: give --preset, --n with scenario flags, or a config file",
        ));
    }
    for t in &cli.tol {
        apply_override(&mut cfg, t).map_err(Failure::usage)?;
    }
    Ok(cfg.resolve()?)
}

fn ensure_dir(dir: &Path) -> std::result::Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::usage(format!("cannot create output directory {}: {e}", dir.display())))
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let f = Failure::from(e);
        Failure {
            code: f.code,
            message: format!("{}: {}", path.display(), f.message),
        }
    }
}

fn load_checked(path: &Path) -> std::result::Result<Scenario, Failure> {
    let (s, report) = load_scenario(path).map_err(with_path(path))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.is_valid() {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("invalid scenario: {}", report.violations.join("; ")),
        });
    }
    Ok(s)
}

fn load_solution(path: &Path, scenario: &Scenario) -> std::result::Result<DualSolution, Failure> {
    let text = fs::read_to_string(path).map_err(|e| with_path(path)(e.into()))?;
    let sol = DualSolution::from_json(&text).map_err(with_path(path))?;
    let n = scenario.n_samples;
    let m = scenario.measurement_count();
    if sol.lambda.len() != m || sol.q.shape() != (n, n) {
        return Err(Failure::usage(format!(
            "solution has lambda of length {} and Q of {:?}; scenario needs {m} and ({n}, {n})",
            sol.lambda.len(),
            sol.q.shape()
        )));
    }
    Ok(sol)
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Gen { gen } => cmd_gen(cli, gen),
        Command::Solve { scenario, gen } => cmd_solve(cli, scenario.as_deref(), gen),
        Command::Localize { scenario, solution } => cmd_localize(cli, scenario, solution, false),
        Command::Recover { scenario, solution } => cmd_localize(cli, scenario, solution, true),
        Command::Pipeline { gen, repetitions } => cmd_pipeline(cli, gen, *repetitions),
        Command::Sweep {
            gen,
            n_values,
            repetitions,
        } => cmd_sweep(cli, gen, n_values, *repetitions),
        Command::Certify { scenario, solution } => cmd_certify(cli, scenario, solution),
    }
}

fn cmd_gen(cli: &Cli, gen: &ScenarioArgs) -> Outcome {
    let cfg = build_config(cli, Some(gen), None, None)?;
    let g = cfg.scenario_for(cfg.scenario.n_samples, cfg.seeds[0])?;
    let s = generate_scenario(&g)?;
    let report = s.validate();
    ensure_dir(&cli.out)?;
    save_scenario(&s, cli.out.join("scenario.json"))?;
    output::write_json(&cli.out.join("config.json"), &cfg)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(if report.is_valid() { EXIT_OK } else { EXIT_VALIDATION })
}

fn cmd_solve(cli: &Cli, scenario: Option<&Path>, gen: &ScenarioArgs) -> Outcome {
    let mut cfg = match scenario {
        Some(_) => build_config_for_files(cli)?,
        None => build_config(cli, Some(gen), None, None)?,
    };
    let s = match scenario {
        Some(p) => {
            let s = load_checked(p)?;
            describe_loaded(&mut cfg, &s);
            s
        }
        None => generate_scenario(&cfg.scenario_for(cfg.scenario.n_samples, cfg.seeds[0])?)?,
    };
    let y = synthesize_measurements(&s)?;
    let model = MeasurementModel::from_scenario(&s)?;
    let sol = AdmmSolver.solve(&assemble_dual_sdp(&model, &y)?, &cfg.solver, None)?;
    ensure_dir(&cli.out)?;
    if scenario.is_none() {
        save_scenario(&s, cli.out.join("scenario.json"))?;
    }
    fs::write(cli.out.join("solution.json"), sol.to_json()?)?;
    output::write_json(&cli.out.join("config.json"), &cfg)?;
    eprintln!(
        "status {:?}, {} iterations, objective {}",
        sol.status, sol.iterations, sol.objective
    );
    Ok(if sol.is_optimal() { EXIT_OK } else { EXIT_SOLVER })
}

fn cmd_localize(cli: &Cli, scenario: &Path, solution: &Path, and_recover: bool) -> Outcome {
    let mut cfg = build_config_for_files(cli)?;
    let s = load_checked(scenario)?;
    describe_loaded(&mut cfg, &s);
    let sol = load_solution(solution, &s)?;
    let model = MeasurementModel::from_scenario(&s)?;
    let polys = DualPolynomialSet::from_solution(&model, &sol)?;
    let est = polys.localize(&cfg.localize)?;
    ensure_dir(&cli.out)?;
    let json = cfg.to_compact_json();
    let prov = Provenance {
        command: if and_recover { "recover" } else { "localize" },
        config_json: &json,
    };
    output::write_json(&cli.out.join("delays.json"), &est)?;
    output::write_curves(&cli.out.join("curves.csv"), &prov, &polys, &s, &est)?;
    output::write_support(&cli.out.join("support.csv"), &prov, &polys, &s, &est)?;
    if and_recover {
        let y = synthesize_measurements(&s)?;
        let mut r = recover(&y, &model, &est)?;
        r.evaluate(&s)?;
        output::write_json(&cli.out.join("recovery.json"), &r)?;
    }
    output::write_json(&cli.out.join("config.json"), &cfg)?;
    Ok(EXIT_OK)
}

/// Commands that read a scenario file still honour `--config` and `--tol`
/// for their options; the scenario itself comes from the file.
fn build_config_for_files(cli: &Cli) -> std::result::Result<ResolvedConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| with_path(p)(e.into()))?;
            ExperimentConfig::from_json(&text).map_err(with_path(p))?
        }
        None => ExperimentConfig::default(),
    };
    if cfg.preset.is_none() && cfg.scenario.is_none() {
        // placeholder so the config resolves; never used to draw anything
        cfg.scenario = Some(GenConfig::new(1, vec![1], vec![1]));
        cfg.scenario.as_mut().unwrap().min_separation = Some(0.5);
    }
    for t in &cli.tol {
        apply_override(&mut cfg, t).map_err(Failure::usage)?;
    }
    Ok(cfg.resolve()?)
}

/// Point the resolved config at a scenario read from disk.
fn describe_loaded(cfg: &mut ResolvedConfig, s: &Scenario) {
    let mut g = GenConfig::new(
        s.n_samples,
        s.channels.iter().map(|c| c.path_count()).collect(),
        s.message_dims(),
    );
    if !s.sensing.is_identity() {
        g.sensing = SensingMode::UniformSubsample(s.measurement_count());
    }
    if s.messages.iter().all(|m| m.positive) {
        g.messages = MessageMode::UnitSpherePositive;
    }
    g.min_separation = s.min_separation_all_users();
    g.seed = s.seed;
    cfg.preset = None;
    cfg.scenario = g;
    cfg.seeds = vec![s.seed];
    cfg.n_values = vec![s.n_samples];
}

fn write_run_files(
    dir: &Path,
    prov: &Provenance,
    o: &experiment::RunOutcome,
    suffix: &str,
) -> std::result::Result<(), Failure> {
    let a = &o.artifacts;
    output::write_curves(&dir.join(format!("curves{suffix}.csv")), prov, &a.polys, &a.scenario, &a.estimates)?;
    output::write_support(&dir.join(format!("support{suffix}.csv")), prov, &a.polys, &a.scenario, &a.estimates)?;
    output::write_polar(&dir.join(format!("polar{suffix}.csv")), prov, &a.polys, &a.scenario, &a.estimates)?;
    Ok(())
}

fn cmd_pipeline(cli: &Cli, gen: &ScenarioArgs, repetitions: Option<usize>) -> Outcome {
    let mut cfg = build_config(cli, Some(gen), repetitions, None)?;
    cfg.n_values = vec![cfg.scenario.n_samples];
    ensure_dir(&cli.out)?;
    let (result, outcomes, timing) = run_experiment(&cfg);
    let json = cfg.to_compact_json();
    let prov = Provenance {
        command: "pipeline",
        config_json: &json,
    };
    output::write_json(&cli.out.join("result.json"), &result)?;
    output::write_runs(&cli.out.join("runs.csv"), &prov, &result.runs)?;
    output::write_timing(&cli.out.join("timing.csv"), &prov, &timing)?;
    let single = outcomes.len() == 1 && result.runs.len() == 1;
    for o in &outcomes {
        let suffix = if single {
            String::new()
        } else {
            format!("_seed{}", o.record.seed)
        };
        write_run_files(&cli.out, &prov, o, &suffix)?;
    }
    for s in &result.summary {
        eprintln!(
            "N={} success {:.2} certified {:.2} mse_mean {}",
            s.n_samples,
            s.success_rate,
            s.certified_rate,
            output::num(s.mse_mean)
        );
    }
    Ok(if result.all_optimal() { EXIT_OK } else { EXIT_SOLVER })
}

fn cmd_sweep(cli: &Cli, gen: &ScenarioArgs, n_values: &[usize], repetitions: Option<usize>) -> Outcome {
    let cfg = build_config(cli, Some(gen), repetitions, Some(n_values))?;
    if cfg.n_values.len() < 2 {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: "a sweep needs at least two values of N".into(),
        });
    }
    ensure_dir(&cli.out)?;
    let (result, _, timing) = run_experiment(&cfg);
    let json = cfg.to_compact_json();
    let prov = Provenance {
        command: "sweep",
        config_json: &json,
    };
    output::write_json(&cli.out.join("result.json"), &result)?;
    output::write_sweep(&cli.out.join("sweep.csv"), &prov, &result.summary)?;
    output::write_runs(&cli.out.join("runs.csv"), &prov, &result.runs)?;
    output::write_timing(&cli.out.join("timing.csv"), &prov, &timing)?;
    for s in &result.summary {
        eprintln!(
            "N={} mse_mean {} success {:.2}",
            s.n_samples,
            output::num(s.mse_mean),
            s.success_rate
        );
    }
    Ok(EXIT_OK)
}

fn cmd_certify(cli: &Cli, scenario: &Path, solution: &Path) -> Outcome {
    let cfg = build_config_for_files(cli)?;
    let s = load_checked(scenario)?;
    let sol = load_solution(solution, &s)?;
    let y = synthesize_measurements(&s)?;
    let report = certify(&s, &y, &sol.lambda, cfg.cert_tol)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(if report.certified { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}
