use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use spectral_oplearn::config::{ExperimentConfig, GroundTruth, PackingParams};
use spectral_oplearn::estimators::analytic_bias;
use spectral_oplearn::harness::{run_convergence, trial_seed, Experiment, ExperimentPlan};
use spectral_oplearn::io::{
    save_dataset, write_contour_csv, write_report_dir, write_report_json, write_schedule_csv,
    write_summary_csv,
};
use spectral_oplearn::oracle;
use spectral_oplearn::schedules::{contour_points, multilevel_schedule, ContourKind};
use spectral_oplearn::spectral::{bg_norm, powf};
use spectral_oplearn::synth::{make_dataset, packing_operator};
use spectral_oplearn::{Error, EstimatorKind};

#[derive(Parser, Debug)]
#[command(
    name = "oplearn",
    version,
    about = "Multilevel kernel operator learning on spectral surrogates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON); defaults to the built-in template.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or output directory for `rates`; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 20)]
    trials: usize,
    /// Comma-separated sample counts.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = [1024usize, 2048, 4096, 8192, 16384, 32768, 65536])]
    n_list: Vec<usize>,
    #[arg(long, global = true, default_value = "all")]
    estimator: EstimatorArg,
    #[arg(long, global = true, default_value = "csv")]
    format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Sample count for `schedule`, `contours` and `simulate`.
    #[arg(long, global = true, default_value_t = 16384)]
    n: usize,
    /// Record wall-clock timings in `rates` output (makes it non-reproducible).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a config template.
    GenConfig,
    /// Multilevel staircase for `--n` samples.
    Schedule,
    /// Bias and variance contours through the staircase levels for `--n` samples.
    Contours {
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// One dataset and one fit per estimator.
    Simulate {
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Also write the dataset (raw f64 plus a `.json` header).
        #[arg(long)]
        save_data: Option<PathBuf>,
    },
    /// Convergence sweep over `--n-list`.
    Rates,
    /// Randomized checks against closed forms; exit 1 on failure.
    OracleCheck,
    /// A packing-family operator on the config's spectra.
    Packing {
        #[arg(long, default_value_t = 4)]
        m1: usize,
        #[arg(long, default_value_t = 0)]
        m2: usize,
        #[arg(long = "k", default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Single,
    Variance,
    Bias,
    Multilevel,
    All,
}

impl EstimatorArg {
    fn kinds(self) -> Vec<EstimatorKind> {
        match self {
            EstimatorArg::Single => vec![EstimatorKind::Single],
            EstimatorArg::Variance => vec![EstimatorKind::Variance],
            EstimatorArg::Bias => vec![EstimatorKind::Bias],
            EstimatorArg::Multilevel => vec![EstimatorKind::Multilevel],
            EstimatorArg::All => EstimatorKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Oracle,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Oracle) => ExitCode::from(1),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Failure::Config(Error::InvalidConfig {
                field: path.display().to_string(),
                reason: io.to_string(),
            }),
            other => other.into(),
        })?,
        None => ExperimentConfig::template(),
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn output(cli: &Cli) -> Result<Box<dyn Write>, Failure> {
    Ok(match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(cli: &Cli, value: &serde_json::Value) -> Result<(), Failure> {
    let mut out = output(cli)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn workers(cli: &Cli) -> usize {
    cli.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenConfig => {
            let cfg = match cli.seed {
                Some(s) => ExperimentConfig::template().with_seed(s),
                None => ExperimentConfig::template(),
            };
            let mut out = output(cli)?;
            writeln!(out, "{}", cfg.to_json_pretty())?;
            out.flush()?;
            Ok(())
        }
        Command::Schedule => {
            let cfg = load_config(cli)?;
            let schedule = multilevel_schedule(&cfg.problem, cli.n)?;
            match cli.format {
                Format::Csv => {
                    let out = output(cli)?;
                    write_schedule_csv(out, &schedule)?;
                    Ok(())
                }
                Format::Json => {
                    write_json(cli, &serde_json::to_value(&schedule).map_err(Error::from)?)
                }
            }
        }
        Command::Contours { samples } => contours(cli, *samples),
        Command::Simulate { trial, save_data } => simulate(cli, *trial, save_data.as_deref()),
        Command::Rates => rates(cli),
        Command::OracleCheck => {
            let seed = cli.seed.unwrap_or(0);
            let results = oracle::run_all(seed)?;
            let mut failed = false;
            for r in &results {
                println!("{r}");
                failed |= !r.passed;
            }
            if failed {
                Err(Failure::Oracle)
            } else {
                Ok(())
            }
        }
        Command::Packing { m1, m2, k, eps } => packing(cli, *m1, *m2, *k, *eps),
    }
}

fn contours(cli: &Cli, samples: usize) -> Result<(), Failure> {
    let cfg = load_config(cli)?.problem;
    let rates = cfg.rates();
    let nf = cli.n as f64;
    let x_max = (cfg.d_in as f64).max(1.0);
    let curves = vec![
        (
            ContourKind::Bias,
            contour_points(
                ContourKind::Bias,
                powf(nf, rates.eta1),
                &cfg,
                (1.0, x_max),
                samples,
            )?,
        ),
        (
            ContourKind::Variance,
            contour_points(
                ContourKind::Variance,
                powf(nf, rates.eta2),
                &cfg,
                (1.0, x_max),
                samples,
            )?,
        ),
    ];
    match cli.format {
        Format::Csv => {
            write_contour_csv(output(cli)?, &curves)?;
            Ok(())
        }
        Format::Json => {
            let v: Vec<_> = curves
                .iter()
                .map(|(k, pts)| json!({"kind": k.as_str(), "points": pts}))
                .collect();
            write_json(
                cli,
                &json!({"n": cli.n, "eta1": rates.eta1, "eta2": rates.eta2, "curves": v}),
            )
        }
    }
}

fn simulate(cli: &Cli, trial: usize, save_data: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let experiment = Experiment::new(cfg)?;
    let kinds = cli.estimator.kinds();
    let outcomes = experiment.run_cell(cli.n, trial, &kinds)?;
    let seed = trial_seed(experiment.cfg().seed, cli.n, trial);
    let a0 = experiment.a0();
    let mut rows = Vec::new();
    for o in &outcomes {
        let lmap = experiment.lambda_map(o.estimator, cli.n)?;
        let bias = match &experiment.truth.source {
            Some(src) => Some(analytic_bias(
                src,
                &lmap,
                a0.input_decay(),
                a0.output_decay(),
                experiment.cfg(),
            )?),
            None => None,
        };
        rows.push(json!({
            "estimator": o.estimator,
            "error_sq": o.error_sq,
            "analytic_bias_sq": bias.map(|b| b * b),
            "learned_rows": lmap.learned(),
        }));
    }
    if let Some(path) = save_data {
        let data = make_dataset(a0, cli.n, &experiment.config.noise, seed)?;
        save_dataset(path, &data)?;
    }
    let cfg = experiment.cfg();
    write_json(
        cli,
        &json!({
            "n": cli.n,
            "trial": trial,
            "dataset_seed": seed,
            "ground_truth": experiment.config.ground_truth.kind(),
            "truth_norm": bg_norm(a0, cfg.beta_prime, cfg.gamma_prime),
            "theoretical_eta1": cfg.rates().eta1,
            "results": rows,
        }),
    )
}

fn rates(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let mut plan = ExperimentPlan::new(cfg, cli.n_list.clone(), cli.trials);
    plan.estimators = cli.estimator.kinds();
    plan.workers = workers(cli);
    plan.record_timings = cli.timings;
    let report = run_convergence(&plan)?;
    for f in &report.fits {
        eprintln!(
            "{:<10} slope {:+.4} (theory {:+.4}), r^2 {:.4}",
            f.estimator.as_str(),
            f.fit.slope,
            report.theoretical_slope,
            f.fit.r_squared
        );
    }
    match (&cli.out, cli.format) {
        (Some(dir), _) => write_report_dir(dir, &report)?,
        (None, Format::Csv) => write_summary_csv(io::stdout().lock(), &report.summaries)?,
        (None, Format::Json) => write_report_json(io::stdout().lock(), &report)?,
    }
    Ok(())
}

fn packing(cli: &Cli, m1: usize, m2: usize, k: usize, eps: f64) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let params = match &cfg.ground_truth {
        GroundTruth::Packing(p) => p.clone(),
        _ => PackingParams {
            m1,
            m2,
            k,
            eps,
            omega: None,
        },
    };
    let truth = GroundTruth::Packing(params.clone());
    let problem = cfg.problem;
    ExperimentConfig::new(problem.clone(), truth).map_err(Failure::Config)?;
    let omega = params.omega(problem.seed)?;
    let op = packing_operator(
        &params.block(),
        &omega,
        Arc::new(problem.input_decay()?),
        Arc::new(problem.output_decay()?),
        problem.beta_prime,
        problem.gamma_prime,
    )?;
    match cli.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(output(cli)?);
            w.write_record(["row", "col", "value"])
                .map_err(Error::from)?;
            for j in 0..op.d_out() {
                for i in 0..op.d_in() {
                    let v = op.matrix()[(j, i)];
                    if v != 0.0 {
                        w.write_record([(j + 1).to_string(), (i + 1).to_string(), v.to_string()])
                            .map_err(Error::from)?;
                    }
                }
            }
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let omega_rows: Vec<Vec<u8>> = (0..omega.nrows())
                .map(|i| omega.row(i).iter().copied().collect())
                .collect();
            let entries: Vec<_> = (0..op.d_out())
                .flat_map(|j| (0..op.d_in()).map(move |i| (j, i)))
                .filter(|&(j, i)| op.matrix()[(j, i)] != 0.0)
                .map(|(j, i)| json!([j + 1, i + 1, op.matrix()[(j, i)]]))
                .collect();
            write_json(
                cli,
                &json!({
                    "block": params.block(),
                    "amplitude": params.block().amplitude(),
                    "omega": omega_rows,
                    "norm_sq": bg_norm(&op, problem.beta_prime, problem.gamma_prime).powi(2),
                    "entries": entries,
                }),
            )
        }
    }
}
