use std::path::PathBuf;
use std::process::ExitCode;

use advop::datagen::{generate_dataset, read_dataset, write_dataset, Equation};
use advop::harness::{
    emit_report, format_table, load_data, read_report_csv, run_experiment, run_table_with, table_from_rows,
    Architecture, ExperimentConfig, ExperimentReport, ReportFormat, TrainedModel, DEFAULT_SEEDS,
};
use advop::Error;
use clap::{Args, Parser, Subcommand};

/// Operator learning with optional adversarial latent regularization.
#[derive(Parser)]
#[command(name = "advop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve random problems and write a dataset file.
    Generate {
        #[arg(long)]
        equation: Equation,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration and write its report, loss history and checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Mean relative L2 error of a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file; every sample is evaluated.
        #[arg(long, conflicts_with = "config")]
        data: Option<PathBuf>,
        /// Otherwise, the test split of this configuration is used.
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Summarize a report CSV in table form.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
    /// Paired plain/adversarial runs over equations and seeds.
    Table {
        /// Comma-separated equations; all five by default.
        #[arg(long, value_delimiter = ',')]
        equations: Vec<Equation>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "ADVOP_OUT_DIR", default_value = "advop-out")]
    out_dir: PathBuf,
    /// `csv` or `toml`.
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
}

/// Overrides applied on top of the config file, or the defaults.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Experiment configuration in TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    equation: Option<Equation>,
    #[arg(long)]
    architecture: Option<String>,
    #[arg(long)]
    adversarial: Option<bool>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    test_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    swa_fraction: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    deeponet_latent_dim: Option<usize>,
    #[arg(long)]
    encoding_dim: Option<usize>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    discriminator_hidden: Option<Vec<usize>>,
    #[arg(long)]
    discriminator_lr: Option<f64>,
    #[arg(long)]
    data_path: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> advop::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_toml(&std::fs::read_to_string(p)?)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(equation, adversarial, test_samples, seed, epochs, lr, beta1, beta2, eps, swa_fraction);
        set!(hidden, deeponet_latent_dim, encoding_dim, noise_scale, discriminator_hidden, discriminator_lr);
        if let Some(a) = &self.architecture {
            c.architecture = Some(a.parse::<Architecture>()?);
        }
        if self.train_samples.is_some() {
            c.train_samples = self.train_samples;
        }
        if self.clip_norm.is_some() {
            c.clip_norm = self.clip_norm;
        }
        if self.data_path.is_some() {
            c.data_path = self.data_path.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn write_outputs(report: &ExperimentReport, output: &OutputArgs) -> advop::Result<PathBuf> {
    emit_report(report, &output.out_dir, output.format)
}

fn progress(r: &advop::harness::RunReport) {
    eprintln!(
        "{} {} adversarial={} seed={}: error {:.4e} ({:.1}s)",
        r.config.equation,
        r.config.architecture(),
        r.config.adversarial,
        r.config.seed,
        r.error,
        r.wall_clock_s
    );
}

fn run(cli: Cli) -> advop::Result<()> {
    match cli.command {
        Command::Generate { equation, samples, seed, out } => {
            let ds = generate_dataset::<f64>(equation, samples, seed)?;
            write_dataset(&ds, &out)?;
            println!("wrote {samples} {equation} samples to {} (checksum {:016x})", out.display(), ds.checksum());
        }
        Command::Train { config, output } => {
            let cfg = config.resolve()?;
            let r = run_experiment(&cfg)?;
            progress(&r);
            let path = write_outputs(&ExperimentReport::new(vec![r]), &output)?;
            println!("{}", path.display());
        }
        Command::Evaluate { checkpoint, data, config } => {
            let (model, _) = TrainedModel::load(&checkpoint)?;
            let error = match data {
                Some(p) => model.evaluate(&read_dataset(&p)?)?,
                None => model.evaluate(&load_data(&config.resolve()?)?.1)?,
            };
            println!("{error:e}");
        }
        Command::Report { input } => {
            let rows = read_report_csv(std::fs::File::open(&input)?)?;
            print!("{}", format_table(&table_from_rows(&rows)));
        }
        Command::Table { equations, seeds, config, output } => {
            let base = config.resolve()?;
            let equations = if equations.is_empty() { Equation::ALL.to_vec() } else { equations };
            let seeds = if seeds.is_empty() { DEFAULT_SEEDS.to_vec() } else { seeds };
            let report = run_table_with(&equations, &seeds, &base, progress)?;
            let path = write_outputs(&report, &output)?;
            print!("{}", format_table(&report.table()));
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Diverged { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
