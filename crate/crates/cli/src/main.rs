//! Command-line front end for the decentralized SGD simulator.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use quantimed::harness::{self, Format, RunRecord};
use quantimed::metrics::time_to_loss;
use quantimed::Error;

#[derive(Parser)]
#[command(name = "quantimed", version, about = "Simulate quantized, deadline-based decentralized SGD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration; metrics go to --out or stdout.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Extra `key=value` lines applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
    },
    /// Run several configurations and write one CSV and JSON record each,
    /// plus summary.csv.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Report the simulated time at which each run first reaches this loss.
        #[arg(long)]
        loss_threshold: Option<f64>,
    },
    /// Print the graph and mixing-matrix diagnostics of a configuration.
    TopoReport {
        #[arg(long)]
        config: PathBuf,
        /// Also write the edge list here.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Tabulate the rate envelopes for a list of horizons.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "T-list", value_delimiter = ',', required = true)]
        t_list: Vec<u64>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn io_runtime(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn load_config(path: &Path, overrides: &[String]) -> Result<harness::ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    harness::parse_with_overrides(&text, overrides).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_runtime(path, e))
}

fn cmd_run(config: &Path, seed: Option<u64>, mut overrides: Vec<String>, out: Option<PathBuf>, format: OutFormat) -> Result<(), Failure> {
    if let Some(s) = seed {
        overrides.push(format!("seed = {s}"));
    }
    let overrides: Vec<String> = overrides.into_iter().map(|o| o.replacen('=', " = ", 1)).collect();
    let cfg = load_config(config, &overrides)?;
    let record = harness::run_experiment(&cfg)?;
    let format = match format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    match out {
        Some(path) => harness::write_record(&record, &path, format).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => {
            let bytes = match format {
                Format::Csv => record.to_csv()?,
                Format::Json => record.to_json()?,
            };
            io::stdout().write_all(&bytes).map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}

fn stem(path: &Path, index: usize) -> String {
    let base = path.file_stem().map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
    format!("{index:02}-{base}")
}

fn cmd_compare(configs: &[PathBuf], out: &Path, jobs: usize, threshold: Option<f64>) -> Result<(), Failure> {
    let named = configs
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((stem(p, i), load_config(p, &[])?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    fs::create_dir_all(out).map_err(|e| io_runtime(out, e))?;
    let results = harness::sweep(&named, jobs.max(1));

    let mut summary = String::from("name,algo,seed,final_time_s,final_loss,mean_grad_norm_sq,mean_consensus,time_to_threshold_s\n");
    for ((name, cfg), result) in named.iter().zip(results) {
        let record: RunRecord = result?;
        write_file(&out.join(format!("{name}.csv")), &record.to_csv()?)?;
        write_file(&out.join(format!("{name}.json")), &record.to_json()?)?;
        let last = record.rows.last().expect("records always hold the initial row");
        let reached = threshold.and_then(|t| time_to_loss(&record.rows, t)).map_or(String::new(), |t| format!("{t:?}"));
        let _ = writeln!(
            summary,
            "{name},{},{},{:?},{:?},{:?},{:?},{reached}",
            cfg.algo.name(),
            cfg.seed,
            last.sim_time_s,
            last.loss,
            record.summary.mean_grad_norm_sq,
            record.summary.mean_consensus
        );
    }
    write_file(&out.join("summary.csv"), summary.as_bytes())
}

fn cmd_topo(config: &Path, edges: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(config, &[])?;
    let r = harness::topology_report(&cfg)?;
    let mut s = String::new();
    let _ = writeln!(s, "nodes            {}", r.n);
    let _ = writeln!(s, "edges            {}", r.edges);
    let _ = writeln!(s, "degree range     {}..{}", r.min_degree, r.max_degree);
    let _ = writeln!(s, "lambda_max(L)    {:.12}", r.lambda_max);
    let _ = writeln!(s, "kappa            {:.12}", r.kappa);
    let _ = writeln!(s, "beta             {:.12}", r.beta);
    let _ = writeln!(s, "spectral gap     {:.12}", r.spectral_gap);
    let shown: Vec<String> = r.eigenvalues.iter().map(|v| format!("{v:.6}")).collect();
    let _ = writeln!(s, "eigenvalues      {}", shown.join(" "));
    for c in &r.checks {
        let _ = writeln!(s, "check {:<26} {}  {}", c.name, if c.passed { "ok  " } else { "FAIL" }, c.detail);
    }
    print!("{s}");
    if let Some(path) = edges {
        write_file(&path, r.edge_list.as_bytes())?;
    }
    if r.checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure::Runtime("mixing matrix failed validation".into()))
    }
}

fn cmd_bounds(config: &Path, t_list: &[u64]) -> Result<(), Failure> {
    let cfg = load_config(config, &[])?;
    let r = harness::bounds_report(&cfg, t_list)?;
    let c = &r.constants;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# mu={:?} K={:?} gamma_sq={:?} sigma_sq={:?} beta={:?} D_sq={:?} n={} m={} T_d={:?} E[1/V]={:?}",
        c.mu, c.k, c.gamma_sq, c.sigma_sq, c.beta, c.d_sq, c.n, c.m, c.deadline, c.expected_inverse_speed
    );
    if let Some(t_min) = r.convex_min_iterations {
        let _ = writeln!(s, "# convex envelope applies from T >= {t_min:e} (informational)");
    }
    let _ = writeln!(s, "T,convex_leading,convex_noise,convex_total,nonconvex_convergence,nonconvex_consensus");
    for row in &r.rows {
        let t1 = row.convex.map_or(",,".to_string(), |(a, b, t)| format!("{a:e},{b:e},{t:e}"));
        let _ = writeln!(s, "{},{t1},{:e},{:e}", row.t, row.nonconvex.0, row.nonconvex.1);
    }
    print!("{s}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, overrides, out, format } => cmd_run(&config, seed, overrides, out, format),
        Command::Compare { configs, out, jobs, loss_threshold } => cmd_compare(&configs, &out, jobs, loss_threshold),
        Command::TopoReport { config, edges } => cmd_topo(&config, edges),
        Command::Bounds { config, t_list } => cmd_bounds(&config, &t_list),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
