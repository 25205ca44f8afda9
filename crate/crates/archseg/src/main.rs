use std::path::{Path, PathBuf};
use std::process::ExitCode;

use archseg::commands::{
    cmd_ablate_arch, cmd_ablate_sampling, cmd_eval, cmd_fit_arch, cmd_generate, cmd_report, cmd_run,
    cmd_simulate_votes, open_dataset, report_table, write_table,
};
use archseg::io::write_json;
use archseg::{ExperimentConfig, HarnessError, Result};
use archseg_core::detect::SamplingMethod;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "archseg", version, about = "Arch-prior tooth detection and segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the dataset seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the sampling method.
    #[arg(long, value_parser = parse_method)]
    sampling: Option<SamplingMethod>,
    /// Overrides the number of retained centroids.
    #[arg(long)]
    centroids: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline over a dataset and write the report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; generated from the config when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// FPS vs APS at 20 and 30 centroids.
    AblateSampling {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Direct, coarse and coarse+fine arch estimation.
    AblateArch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the artifacts of an earlier run.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory of the run to score.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a table CSV or report JSON as text.
    Report { file: PathBuf },
    /// Fit an arch to a votes file.
    FitArch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        votes: PathBuf,
        /// Model PLY (with its JSON sidecar) to score the arch against.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate votes for one model.
    SimulateVotes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> std::result::Result<SamplingMethod, String> {
    s.parse().map_err(|e: archseg_core::Error| e.to_string())
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.dataset.seed = s;
    }
    if let Some(m) = c.sampling {
        cfg.sampling.method = m;
    }
    if let Some(k) = c.centroids {
        cfg.detection.max_centroids = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pool<R: Send>(c: &Common, f: impl FnOnce() -> R + Send) -> R {
    archseg::report::with_jobs(c.jobs, f)
}

fn finish_report(report: &archseg::MetricsReport, out: &Path) -> Result<()> {
    print!("{}", report_table(report).to_text());
    eprintln!("report written to {}", out.display());
    match report.failure() {
        Some(e) => {
            for row in report.models.iter().filter(|r| r.error.is_some()) {
                eprintln!("{}: {}", row.name, row.error.as_deref().unwrap_or_default());
            }
            Err(e)
        }
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let cfg = load_config(&common)?;
            let manifest = pool(&common, || cmd_generate(&cfg, &out))?;
            println!("{}", manifest.display());
        }
        Command::Run { common, dataset, out } => {
            let cfg = load_config(&common)?;
            let report = pool(&common, || {
                let data = open_dataset(&cfg, dataset.as_deref())?;
                cmd_run(&cfg, &data, Some(&out))
            })?;
            finish_report(&report, &out)?;
        }
        Command::AblateSampling { common, dataset, out } => {
            let cfg = load_config(&common)?;
            let table = pool(&common, || cmd_ablate_sampling(&cfg, &open_dataset(&cfg, dataset.as_deref())?))?;
            write_table(&table, &out, "ablate_sampling")?;
            print!("{}", table.to_text());
        }
        Command::AblateArch { common, dataset, out } => {
            let cfg = load_config(&common)?;
            let table = pool(&common, || cmd_ablate_arch(&cfg, &open_dataset(&cfg, dataset.as_deref())?))?;
            write_table(&table, &out, "ablate_arch")?;
            print!("{}", table.to_text());
        }
        Command::Eval {
            common,
            dataset,
            predictions,
            out,
        } => {
            let cfg = load_config(&common)?;
            let report = pool(&common, || cmd_eval(&cfg, &open_dataset(&cfg, Some(&dataset))?, &predictions))?;
            write_json(&out.join("eval.json"), &report)?;
            finish_report(&report, &out)?;
        }
        Command::Report { file } => print!("{}", cmd_report(&file)?),
        Command::FitArch {
            common,
            votes,
            model,
            out,
        } => {
            let cfg = load_config(&common)?;
            let (arch, mse) = cmd_fit_arch(&cfg, &votes, model.as_deref())?;
            write_json(&out, &arch)?;
            if let Some(mse) = mse {
                println!("arch MSE (1e-4): {:.4}", mse * 1e4);
            }
        }
        Command::SimulateVotes { common, model, out } => {
            let cfg = load_config(&common)?;
            let votes = cmd_simulate_votes(&cfg, &model)?;
            write_json(&out, &votes)?;
            println!("{} votes", votes.votes.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(HarnessError::exit_code(&e) as u8)
        }
    }
}
