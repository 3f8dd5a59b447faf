use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use bjel_cli::{
    analyze, format_analysis_text, parse_sizes, read_analysis_csv, sample_csv, simulate,
    AnalysisRequest, CliError, CliResult, SimulationConfig,
};
use bjel_core::bjel::Method;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bjel",
    version,
    about = "Jackknife empirical likelihood intervals for survey U-statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a coverage study from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Overrides the replicate count in the config.
        #[arg(long)]
        replicates: Option<usize>,
        /// Writes the JSON result here and the table next to it (`.txt`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute an interval from a CSV file.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        method: Method,
        /// Column holding the study variable.
        #[arg(long, default_value = "y")]
        y_col: String,
        #[arg(long)]
        weight_col: Option<String>,
        #[arg(long, value_delimiter = ',')]
        aux_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        aux_totals: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Draw one sample and print `index,pi,d` rows.
    Sample {
        #[arg(long)]
        population_size: usize,
        #[arg(long)]
        sample_size: usize,
        /// Size measures: a CSV file (header, first column) or an inline list.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn write(path: &PathBuf, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write '{}': {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            replicates,
            out,
        } => {
            let mut cfg = SimulationConfig::load(&config)?;
            if let Some(b) = replicates {
                cfg.replicates = b;
            }
            let (result, quality) = simulate(&cfg, seed)?;
            let table = result.to_table();
            print!("{table}");
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&result).expect("study result serialises");
                write(&path, &(json + "\n"))?;
                write(&path.with_extension("txt"), &table)?;
            }
            for msg in &result.failure_examples {
                eprintln!("warning: {msg}");
            }
            quality.map_or(Ok(()), Err)
        }
        Command::Analyze {
            input,
            kernel,
            method,
            y_col,
            weight_col,
            aux_cols,
            aux_totals,
            level,
            format,
        } => {
            let data = read_analysis_csv(&input, &y_col, weight_col.as_deref(), &aux_cols)?;
            let req = AnalysisRequest {
                kernel,
                method,
                aux_totals: (!aux_totals.is_empty()).then_some(aux_totals),
                level,
            };
            let (out, diagnostics) = analyze(&data, &req)?;
            for d in diagnostics {
                eprintln!("note: {d}");
            }
            match format {
                Format::Json => println!(
                    "{}",
                    serde_json::to_string(&out).expect("analysis output serialises")
                ),
                Format::Text => print!("{}", format_analysis_text(&out, level)),
            }
            Ok(())
        }
        Command::Sample {
            population_size,
            sample_size,
            sizes,
            seed,
        } => {
            let z = sizes.as_deref().map(parse_sizes).transpose()?;
            print!("{}", sample_csv(population_size, sample_size, z, seed)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
