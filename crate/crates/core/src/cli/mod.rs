//! Command-line front end: scenario files in, CSV tables and JSON summaries out.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;

use config::{from_value, parse_config, parse_quantity, to_value, ConfigError, Dim, PumpSpec, ScenarioConfig};
use run::{Command, RunError};

#[derive(Debug, Parser)]
#[command(name = "twpa", version, about = "Three-wave-mixing TWPA and peripheral-network simulator")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario JSON; omitted means the reference design.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub points: Option<usize>,
    /// Sweep start, in Hz or with a unit such as "4 GHz".
    #[arg(long)]
    pub fmin: Option<String>,
    #[arg(long)]
    pub fmax: Option<String>,
    #[arg(long)]
    pub topology: Option<String>,
    /// Mid-band gain in dB the pump is tuned to.
    #[arg(long)]
    pub gain_target: Option<f64>,
}

fn hertz(text: &str, pointer: &str) -> Result<f64, ConfigError> {
    text.trim()
        .parse::<f64>()
        .or_else(|_| parse_quantity(text, Dim::Hertz))
        .map_err(|message| ConfigError::UnitError {
            pointer: pointer.into(),
            message,
        })
}

/// Loads the scenario and applies the command-line overrides, which then go
/// through the same validation as the file.
pub fn load(cli: &Cli) -> Result<ScenarioConfig, ConfigError> {
    let mut c = match &cli.config {
        None => parse_config("{}")?,
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::Json(format!("{}: {e}", p.display())))?;
            parse_config(&text)?
        }
    };
    if let Some(n) = cli.points {
        c.sweep.points = n;
    }
    if let Some(f) = &cli.fmin {
        c.sweep.f_lo = hertz(f, "/sweep/f_lo")?;
    }
    if let Some(f) = &cli.fmax {
        c.sweep.f_hi = hertz(f, "/sweep/f_hi")?;
    }
    if let Some(t) = &cli.topology {
        c.topology.name = t.clone();
    }
    if let Some(g) = cli.gain_target {
        c.pump = PumpSpec::GainTarget(g);
    }
    from_value(&to_value(&c))
}

fn init_threads() {
    if let Some(n) = std::env::var("TWPA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn report(cmd: Command, out: &Path, e: &RunError) -> i32 {
    eprintln!("twpa {}: {e}", cmd.name());
    if std::fs::create_dir_all(out).is_ok() {
        let _ = run::write_summary(cmd, out, None, Err(e));
    }
    e.exit_code()
}

/// Exit status: 0 success, 2 invalid input, 3 numerical failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_threads();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return report(cli.command, &cli.out, &e.into()),
    };
    match run::run(cli.command, &cfg, &cli.out) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("twpa {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("twpa").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn overrides_apply_and_validate() {
        let c = load(&cli(&["gain", "--points", "7", "--fmin", "4.5 GHz", "--fmax", "7e9", "--gain-target", "18"]))
            .unwrap();
        assert_eq!(c.sweep.points, 7);
        assert_eq!(c.sweep.f_lo, 4.5e9);
        assert_eq!(c.sweep.f_hi, 7e9);
        assert_eq!(c.pump, PumpSpec::GainTarget(18.0));
        let e = load(&cli(&["gain", "--topology", "triple"])).unwrap_err();
        assert_eq!(e.pointer(), Some("/topology/name"));
        let e = load(&cli(&["gain", "--fmin", "9 GHz", "--fmax", "8 GHz"])).unwrap_err();
        assert_eq!(e.pointer(), Some("/sweep/f_hi"));
    }

    #[test]
    fn command_names() {
        assert_eq!(cli(&["optimize-matching"]).command, Command::OptimizeMatching);
        assert_eq!(cli(&["table1"]).command, Command::Table1);
        assert!(Cli::try_parse_from(["twpa", "bogus"]).is_err());
    }

    #[test]
    fn invalid_config_exits_with_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.json");
        std::fs::write(&cfg, r#"{"device":{"alpha":1.5}}"#).unwrap();
        let out = dir.path().join("out");
        let code = main_with_args(["twpa", "gain", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 2);
        let s: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("gain.json")).unwrap()).unwrap();
        assert_eq!(s["status"], "error");
        assert_eq!(s["error"]["pointer"], "/device/alpha");
    }
}
