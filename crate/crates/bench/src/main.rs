use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use squirrel_bench::report;
use squirrel_bench::runner::{self, OptimizerKind};
use squirrel_bench::select_functions;
use squirrel_core::protocol::{ErrorClass, Session};
use squirrel_core::warmstart::STORED_CONFIGS;
use squirrel_core::{ConfigSpace, History, Optimizer, OptimizerConfig, Portfolio, Registry};

#[derive(Parser)]
#[command(name = "bench", about = "Benchmark and serve the squirrel batch optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run optimizers on builtin functions and write a results CSV.
    Run {
        #[arg(long, default_value = "all")]
        functions: String,
        /// squirrel, random, or a comma-separated list.
        #[arg(long, default_value = "squirrel,random")]
        optimizer: String,
        /// Inclusive range `a..b` or a comma-separated list.
        #[arg(long, default_value = "0..19")]
        seeds: String,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// JSON array of triplets replacing the default portfolio.
        #[arg(long)]
        portfolio: Option<PathBuf>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Ask/tell over line-delimited JSON on stdin/stdout.
    Serve {
        /// Space spec; without it the session waits for an `init` request.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        portfolio: Option<PathBuf>,
        /// History CSV to replay before serving.
        #[arg(long, requires = "space")]
        resume: Option<PathBuf>,
        /// Rewritten after every observation.
        #[arg(long, requires = "space")]
        history_out: Option<PathBuf>,
    },
    /// Summarize a results CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Add the best configurations of a history CSV to a registry file.
    MakeRegistry {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        history: PathBuf,
        /// Created if missing, otherwise updated in place.
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Config(String),
    Protocol(String),
    Runtime(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        let (code, msg) = match self {
            CliError::Config(m) => (2, m),
            CliError::Protocol(m) => (3, m),
            CliError::Runtime(m) => (1, m),
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_space(path: &Path) -> Result<ConfigSpace, CliError> {
    ConfigSpace::parse(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_registry(path: Option<&PathBuf>) -> Result<Option<Registry>, CliError> {
    path.map(Registry::load).transpose().map_err(config_err)
}

fn optimizer_config(portfolio: Option<&PathBuf>) -> Result<OptimizerConfig, CliError> {
    let mut config = OptimizerConfig::default();
    if let Some(path) = portfolio {
        config.portfolio = Portfolio::parse(&read_text(path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(config)
}

fn cmd_run(
    functions: &str,
    optimizer: &str,
    seeds: &str,
    registry: Option<&PathBuf>,
    portfolio: Option<&PathBuf>,
    out: &Path,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let functions = select_functions(functions).map_err(config_err)?;
    let kinds: Vec<OptimizerKind> = optimizer
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(CliError::Config)?;
    let seeds = runner::parse_seeds(seeds).map_err(CliError::Config)?;
    let registry = load_registry(registry)?;
    let config = optimizer_config(portfolio)?;
    let threads = threads
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);
    let file = File::create(out).map_err(|e| runtime_err(format!("{}: {e}", out.display())))?;
    let results = runner::run_experiment(&functions, &kinds, &seeds, registry.as_ref(), &config, threads);
    report::write_csv(&results, BufWriter::new(file)).map_err(runtime_err)?;
    print!("{}", report::format_summary(&report::summarize(&results)));
    Ok(())
}

fn save_history(opt: &Optimizer, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
    opt.history().write_csv(BufWriter::new(file)).map_err(runtime_err)
}

fn cmd_serve(
    space: Option<&PathBuf>,
    seed: u64,
    registry: Option<&PathBuf>,
    portfolio: Option<&PathBuf>,
    resume: Option<&PathBuf>,
    history_out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let config = optimizer_config(portfolio)?;
    let mut session = match space {
        None => Session::new(config),
        Some(path) => {
            let space = load_space(path)?;
            let registry = load_registry(registry)?;
            let opt = match resume {
                None => Optimizer::new(space, config, registry.as_ref(), seed),
                Some(h) => {
                    let file = File::open(h).map_err(|e| config_err(format!("{}: {e}", h.display())))?;
                    let history = History::read_csv(space.clone(), file).map_err(config_err)?;
                    Optimizer::resume(space, config, registry.as_ref(), seed, &history)
                        .map_err(|e| CliError::Config(format!("cannot resume: {e}")))?
                }
            };
            Session::with_optimizer(opt)
        }
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(runtime_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let response = session.handle_line(&line);
        writeln!(stdout, "{}", response.body).map_err(runtime_err)?;
        stdout.flush().map_err(runtime_err)?;
        match response.error {
            Some(ErrorClass::Config) => return Err(CliError::Config(error_text(&response.body))),
            Some(ErrorClass::Protocol) => return Err(CliError::Protocol(error_text(&response.body))),
            None => {}
        }
        if let (Some(path), Some(opt)) = (history_out, session.optimizer()) {
            save_history(opt, path)?;
        }
    }
    Ok(())
}

fn error_text(body: &serde_json::Value) -> String {
    body["error"].as_str().unwrap_or("request failed").to_string()
}

fn cmd_report(input: &Path) -> Result<(), CliError> {
    let file = File::open(input).map_err(|e| config_err(format!("{}: {e}", input.display())))?;
    let results = report::read_csv(file).map_err(config_err)?;
    print!("{}", report::format_summary(&report::summarize(&results)));
    Ok(())
}

fn cmd_make_registry(space: &Path, history: &Path, out: &Path) -> Result<(), CliError> {
    let space = load_space(space)?;
    let file = File::open(history).map_err(|e| config_err(format!("{}: {e}", history.display())))?;
    let history = History::read_csv(space.clone(), file).map_err(config_err)?;
    let mut trials: Vec<_> = history.trials().iter().filter(|t| t.y.is_finite()).collect();
    trials.sort_by(|a, b| a.y.total_cmp(&b.y));
    let mut configs = Vec::new();
    for t in trials {
        if configs.len() == STORED_CONFIGS {
            break;
        }
        if !configs.contains(&t.config) {
            configs.push(t.config.clone());
        }
    }
    let mut registry = if out.exists() {
        Registry::load(out).map_err(config_err)?
    } else {
        Registry::new()
    };
    let count = configs.len();
    registry.insert(space, configs);
    std::fs::write(out, registry.to_json()).map_err(|e| runtime_err(format!("{}: {e}", out.display())))?;
    println!("stored {count} configurations; registry now has {} spaces", registry.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run {
            functions,
            optimizer,
            seeds,
            registry,
            portfolio,
            out,
            threads,
        } => cmd_run(
            functions,
            optimizer,
            seeds,
            registry.as_ref(),
            portfolio.as_ref(),
            out,
            *threads,
        ),
        Command::Serve {
            space,
            seed,
            registry,
            portfolio,
            resume,
            history_out,
        } => cmd_serve(
            space.as_ref(),
            *seed,
            registry.as_ref(),
            portfolio.as_ref(),
            resume.as_ref(),
            history_out.as_ref(),
        ),
        Command::Report { input } => cmd_report(input),
        Command::MakeRegistry { space, history, out } => cmd_make_registry(space, history, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
