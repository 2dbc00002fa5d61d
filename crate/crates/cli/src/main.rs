use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::Parser;
use log::{info, warn};

use qcurl::config::{parse_config, Experiment};
use qcurl::experiments::{run_experiment, VERSION};

/// Runs one experiment and writes raw.csv, aggregate.csv and manifest.txt.
///
/// Settings come from built-in defaults, then --config FILE, then
/// `--key value` (or `--key=value`) overrides.
#[derive(Parser, Debug)]
#[command(name = "qcurl", version = VERSION)]
struct Cli {
    /// weights, game, phase, heatmap or easy_hard
    experiment: Experiment,
    /// --config FILE, --threads N and --key value overrides
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OPTIONS")]
    options: Vec<String>,
}

struct Options {
    config: Option<PathBuf>,
    threads: Option<usize>,
    overrides: Vec<(String, String)>,
}

fn parse_options(args: &[String]) -> Result<Options> {
    let mut opts = Options { config: None, threads: None, overrides: Vec::new() };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let flag = arg
            .strip_prefix("--")
            .ok_or_else(|| anyhow!("expected --key value, got {arg:?}"))?;
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| anyhow!("missing value for --{flag}"))?;
                (flag.to_string(), v.clone())
            }
        };
        match key.as_str() {
            "config" => opts.config = Some(PathBuf::from(value)),
            "threads" => {
                opts.threads = Some(value.parse().map_err(|e| anyhow!("invalid --threads {value:?}: {e}"))?)
            }
            _ => opts.overrides.push((key, value)),
        }
    }
    Ok(opts)
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("QCURL_THREADS") {
        Ok(v) => match v.parse() {
            Ok(n) => Ok(Some(n)),
            Err(e) => bail!("invalid QCURL_THREADS {v:?}: {e}"),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    let opts = parse_options(&cli.options)?;
    let (cfg, warnings) = parse_config(cli.experiment, opts.config.as_deref(), &opts.overrides)?;
    for w in warnings {
        warn!("{w}");
    }
    let threads = match opts.threads {
        Some(n) => n,
        None => threads_from_env()?.unwrap_or(0),
    };
    info!("running {} into {}", cfg.experiment, cfg.output_dir.display());
    run_experiment(&cfg, threads)?;
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
