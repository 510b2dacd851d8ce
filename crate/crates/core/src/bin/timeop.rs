use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;

use timeop::config::parse_config_with_overrides;
use timeop::run::{emit_report, run, Command};

/// Run a time-operator experiment from a config file.
#[derive(Parser)]
#[command(name = "timeop", version)]
struct Cli {
    command: Command,
    /// Line-oriented `key = value` config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out`, then $TIMEOP_OUT, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings applied over the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

const EXIT_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("timeop: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn execute(cli: &Cli) -> Result<u8, String> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| format!("cannot read {}: {e}", cli.config.display()))?;
    let cfg = parse_config_with_overrides(&text, &cli.overrides)
        .map_err(|e| format!("invalid config {}:\n{e}", cli.config.display()))?;
    let base_dir = cli.config.parent();
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os("TIMEOP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let report = run(cli.command, &cfg, base_dir).map_err(|e| e.to_string())?;
    let elapsed = clock.elapsed().as_secs_f64();

    let paths = emit_report(&report, &out).map_err(|e| e.to_string())?;
    // Wall-clock data lives apart from report.json so reports stay byte-identical.
    let timing = serde_json::json!({ "started_unix": started, "elapsed_seconds": elapsed });
    let timing_path = out.join("timing.json");
    std::fs::write(&timing_path, format!("{timing}\n"))
        .map_err(|e| format!("cannot write {}: {e}", timing_path.display()))?;

    for p in &paths {
        println!("{}", p.display());
    }
    println!("status: {}", serde_json::to_value(report.status).map_err(|e| e.to_string())?.as_str().unwrap_or("?"));
    Ok(report.status.exit_code())
}
