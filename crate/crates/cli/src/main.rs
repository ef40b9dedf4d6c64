use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lmmg_cli::{
    export_solution, report_slope, summarize, write_run_logs, CliError, CliResult, ExperimentConfig,
    ExportFormat,
};
use lmmg_core::{run_lmmg, Refinement};

#[derive(Parser)]
#[command(name = "lmmg", version, about = "Adaptive local minimax Galerkin solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefinementArg {
    Adaptive,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportArg {
    Vtk,
    Native,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive iteration and write CSV logs plus the solution.
    Run {
        #[arg(long)]
        preset: Option<String>,
        /// key=value file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_elements: Option<String>,
        #[arg(long, value_enum)]
        refinement: Option<RefinementArg>,
        /// Previous solutions spanning L (native export stems or files).
        #[arg(long = "L", value_delimiter = ',')]
        l_files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additional export besides the native files.
        #[arg(long, value_enum)]
        export: Option<ExportArg>,
    },
    /// Least-squares slope of log(eta) against log(elements).
    Slope {
        csv: PathBuf,
        #[arg(long, default_value_t = 8)]
        last: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Slope { csv, last } => {
            let s = report_slope(&csv, last)?;
            println!("{s:.6}");
            Ok(())
        }
        Command::Run {
            preset,
            config,
            gamma,
            lambda,
            theta,
            epsilon,
            max_elements,
            refinement,
            l_files,
            out,
            export,
        } => {
            let mut exp = match &preset {
                Some(p) => ExperimentConfig::preset(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(path) = &config {
                exp.apply_file(path)?;
            }
            let flag = |key: &str, value: String, exp: &mut ExperimentConfig| {
                exp.set(key, &value).map_err(|message| CliError::Config {
                    key: format!("--{}", key.replace('_', "-")),
                    line: 0,
                    message,
                })
            };
            if let Some(v) = gamma {
                flag("gamma", v.to_string(), &mut exp)?;
            }
            if let Some(v) = lambda {
                flag("lambda", v.to_string(), &mut exp)?;
            }
            if let Some(v) = theta {
                flag("theta", v.to_string(), &mut exp)?;
            }
            if let Some(v) = epsilon {
                flag("epsilon", v.to_string(), &mut exp)?;
            }
            if let Some(v) = max_elements {
                flag("max_elements", v, &mut exp)?;
            }
            if let Some(r) = refinement {
                exp.refinement = match r {
                    RefinementArg::Adaptive => Refinement::Adaptive,
                    RefinementArg::Uniform => Refinement::Uniform,
                };
            }
            if !l_files.is_empty() {
                exp.l_files = l_files;
            }
            if let Some(o) = out {
                exp.output_dir = o;
            }
            if let Some(e) = export {
                exp.export = Some(match e {
                    ExportArg::Vtk => ExportFormat::Vtk,
                    ExportArg::Native => ExportFormat::Native,
                });
            }
            run(&exp)
        }
    }
}

fn run(exp: &ExperimentConfig) -> CliResult<()> {
    let config = exp.to_lmmg()?;
    let name = exp.problem.clone();
    match run_lmmg(&config) {
        Ok(output) => {
            let csv = write_run_logs(&output.log, &exp.output_dir, &name)?;
            let stem = exp.output_dir.join(format!("{name}_solution"));
            let mut written = export_solution(&output.solution, ExportFormat::Native, &stem)?;
            if exp.export == Some(ExportFormat::Vtk) {
                written.extend(export_solution(&output.solution, ExportFormat::Vtk, &stem)?);
            }
            summarize(&output.log, &mut std::io::stdout()).ok();
            println!("log: {}", csv.display());
            for p in written {
                println!("solution: {}", p.display());
            }
            Ok(())
        }
        Err(failure) => {
            let csv = write_run_logs(&failure.log, &exp.output_dir, &name)?;
            summarize(&failure.log, &mut std::io::stderr()).ok();
            eprintln!("partial log: {}", csv.display());
            Err(CliError::Core(failure.error))
        }
    }
}
