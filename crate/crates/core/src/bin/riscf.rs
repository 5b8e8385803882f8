use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riscf::harness::{run_campaign, write_csv_file, CampaignSpec, Preset, RunOptions};
use riscf::Error;

#[derive(Parser)]
#[command(name = "riscf", version, about = "RIS-assisted cell-free massive MIMO simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign and write the result CSV.
    Run(RunArgs),
    /// Print the effective campaign config as TOML.
    ShowConfig(SpecArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// TOML campaign file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in campaign: desk, paper or equal-area.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    threads: Option<usize>,
    /// Print per-stage timing to stderr.
    #[arg(long)]
    profile: bool,
}

fn load(args: &SpecArgs) -> riscf::Result<CampaignSpec> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), _) => CampaignSpec::from_file(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
            other => other,
        })?,
        (None, Some(name)) => CampaignSpec::preset(name.parse::<Preset>()?),
        (None, None) => CampaignSpec::preset(Preset::Desk),
    };
    if let Some(seed) = args.seed {
        spec.scenario.master_seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output.path = out.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cmd: Command) -> riscf::Result<()> {
    match cmd {
        Command::ShowConfig(args) => {
            print!("{}", load(&args)?.to_toml());
            Ok(())
        }
        Command::Run(args) => {
            if args.threads == Some(0) {
                return Err(Error::Config("--threads must be positive".into()));
            }
            let spec = load(&args.spec)?;
            let out = run_campaign(&spec, RunOptions { threads: args.threads })?;
            write_csv_file(&out.rows, &spec.output.path)?;
            log::info!("{} rows -> {}", out.rows.len(), spec.output.path.display());
            if args.profile {
                let t = out.times;
                eprintln!("wall        {:>10.3} s", out.wall.as_secs_f64());
                eprintln!("deployment  {:>10.3} s", t.deployment.as_secs_f64());
                eprintln!("configure   {:>10.3} s", t.configure.as_secs_f64());
                eprintln!("covariance  {:>10.3} s", t.covariance.as_secs_f64());
                eprintln!("estimation  {:>10.3} s", t.estimation.as_secs_f64());
                eprintln!("combining   {:>10.3} s", t.combining.as_secs_f64());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Csv(_) => ExitCode::from(3),
                Error::Config(_) | Error::InfeasiblePlan { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
