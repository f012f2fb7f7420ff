//! `setrlusi` command-line runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use setrlusi::data::{gen_synthetic_domains, save_csv_dataset, SyntheticSpec};
use setrlusi::experiment::{
    emit_results, parse_results, run_experiment, stats_from_records, Config, ExperimentConfig, ModelConfig,
    OutputFormat, ScalingConfig, TaskConfig, Timing,
};
use setrlusi::{Error, ErrorCategory, Execution};

#[derive(Parser)]
#[command(name = "setrlusi", version, about = "Stochastic ensemble multi-source transfer learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    JsonLines,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::JsonLines => OutputFormat::JsonLines,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial and method of an experiment config.
    Run {
        config: PathBuf,
        /// Overrides `experiment.output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Write wall times into the result records.
        #[arg(long)]
        inline_timing: bool,
        #[arg(long)]
        sequential: bool,
    },
    /// Friedman test and Nemenyi critical difference over result files.
    Stats {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.10)]
        alpha: f64,
        #[arg(long)]
        json: bool,
    },
    /// Training time against target size.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200, 400])]
        q: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, default_value_t = 3)]
        sources: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        json: bool,
    },
    /// Write the twelve synthetic domains as CSV files plus a ready config.
    Gen {
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_per_domain: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zero-based target domain.
        #[arg(long, default_value_t = 11)]
        target: usize,
        /// Zero-based source domains.
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 4, 8])]
        sources: Vec<usize>,
    },
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn run(
    config_path: &Path,
    output: Option<PathBuf>,
    format: Option<Format>,
    trials: Option<usize>,
    workers: Option<usize>,
    inline_timing: bool,
    sequential: bool,
) -> setrlusi::Result<()> {
    let mut config = Config::load(config_path)?;
    if let Some(o) = output {
        config.experiment.output = o;
    }
    if let Some(f) = format {
        config.experiment.format = f.into();
    }
    if let Some(t) = trials {
        config.experiment.trials = t;
    }
    if let Some(w) = workers {
        config.experiment.workers = w;
    }
    if inline_timing {
        config.experiment.timing = Timing::Inline;
    }
    if sequential {
        config.model.execution = Execution::Sequential;
    }
    config.validate()?;
    let results = run_experiment(&config)?;
    let files = emit_results(
        &results,
        &config.experiment.output,
        config.experiment.format,
        config.experiment.timing,
    )?;
    println!("{:<16} {:>8} {:>8} {:>10}", "method", "AC", "Std", "time(s)");
    for r in &results {
        println!(
            "{:<16} {:>8.2} {:>8.2} {:>10.3}",
            r.method_name,
            100.0 * r.accuracy_mean,
            100.0 * r.accuracy_std,
            r.wall_time_seconds
        );
    }
    println!("results: {}", files.results.display());
    Ok(())
}

fn stats(paths: &[PathBuf], alpha: f64, json: bool) -> setrlusi::Result<()> {
    let mut records = Vec::new();
    for p in paths {
        records.extend(parse_results(p)?);
    }
    let report = stats_from_records(&records, alpha)?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| Error::Serde(e.to_string()))?
        );
        return Ok(());
    }
    println!("{} tasks x {} methods", report.tasks.len(), report.methods.len());
    for (m, r) in report.methods.iter().zip(&report.friedman.average_ranks) {
        println!("  {m:<16} average rank {r:.3}");
    }
    println!("chi2_F = {:.4}", report.friedman.chi_square_f);
    println!("F_F = {:.4}", report.friedman.f_f);
    println!("CD (alpha = {}) = {:.4}", report.alpha, report.critical_difference);
    Ok(())
}

fn bench(cfg: ScalingConfig, json: bool) -> setrlusi::Result<()> {
    let report = setrlusi::experiment::scaling_benchmark(&cfg)?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| Error::Serde(e.to_string()))?
        );
        return Ok(());
    }
    for p in &report.points {
        println!("q = {:>5}  {:.4}s", p.q, p.seconds);
    }
    println!("log-log slope {:.3}", report.slope);
    Ok(())
}

fn gen(output: &Path, n_per_domain: usize, seed: u64, target: usize, sources: Vec<usize>) -> setrlusi::Result<()> {
    let spec = SyntheticSpec::grid12(n_per_domain, seed);
    let domains = gen_synthetic_domains(&spec)?;
    if target >= domains.len() || sources.iter().any(|&s| s >= domains.len() || s == target) {
        return Err(Error::Config(format!(
            "domain indices must lie in 0..{} and sources must differ from the target",
            domains.len()
        )));
    }
    std::fs::create_dir_all(output).map_err(|e| Error::Io {
        path: output.to_path_buf(),
        source: e,
    })?;
    let file = |i: usize| PathBuf::from(format!("domain{:02}.csv", i + 1));
    for (i, d) in domains.iter().enumerate() {
        save_csv_dataset(output.join(file(i)), d)?;
    }
    let config = Config {
        task: TaskConfig {
            name: "synthetic12".into(),
            split_fraction: 0.1,
            seed,
            label_column: Some("label".into()),
            feature_columns: None,
            positive_label: None,
            source_csvs: Some(sources.iter().map(|&s| file(s)).collect()),
            target_csv: Some(file(target)),
            cluster: None,
            synthetic_spec: None,
        },
        model: ModelConfig::default(),
        experiment: ExperimentConfig::default(),
    };
    let path = output.join("config.toml");
    std::fs::write(&path, config.to_toml_string()?).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let spec_path = output.join("spec.json");
    let text = serde_json::to_string_pretty(&spec).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&spec_path, text).map_err(|e| Error::Io {
        path: spec_path.clone(),
        source: e,
    })?;
    println!("wrote {} domains and {}", domains.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output,
            format,
            trials,
            workers,
            inline_timing,
            sequential,
        } => run(&config, output, format, trials, workers, inline_timing, sequential),
        Command::Stats { results, alpha, json } => stats(&results, alpha, json),
        Command::Bench {
            q,
            rounds,
            sources,
            repeats,
            seed,
            sequential,
            json,
        } => bench(
            ScalingConfig {
                q_values: q,
                rounds,
                n_sources: sources,
                repeats,
                seed,
                execution: execution(sequential),
                ..ScalingConfig::default()
            },
            json,
        ),
        Command::Gen {
            output,
            n_per_domain,
            seed,
            target,
            sources,
        } => gen(&output, n_per_domain, seed, target, sources),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Training => 3,
                ErrorCategory::Io => 4,
            })
        }
    }
}
