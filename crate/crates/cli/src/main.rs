use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use delone_lab::runner::{self, Command, RunOutput, MANIFEST_NAME};
use delone_lab::LabError;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "delone-lab", version, about = "Finite-volume experiments for Delone-Anderson operators")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Materialize a point set and one colouring.
    Generate(Common),
    /// Certify Delone radii on a window.
    Verify(Common),
    /// Averaged finite-volume IDS curves.
    Ids(Common),
    /// IDS at one energy over growing cubes.
    Convergence(Common),
    /// Dirichlet-Neumann bracketing and sub/superadditivity.
    Bracketing(Common),
    /// Temple lower bound on the Neumann ground state.
    Temple(Common),
    /// Large-deviation probabilities of the truncated mean coupling.
    LdRate(Common),
    /// Eigenvalue counts in small intervals.
    Wegner(Common),
    /// Lifshitz exponent fit with the free control.
    Lifshitz(Common),
    /// Annulus point set: frequency and IDS oscillation.
    Counterexample(CounterexampleArgs),
    /// Closed-form constants and thresholds.
    Bounds(BoundsArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML (or JSON) configuration file; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset; defaults to the one matching the subcommand.
    #[arg(long)]
    preset: Option<String>,
    /// Sets every `master_seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; files go to `<out>/<subcommand>/`.
    #[arg(long, env = "DELONE_LAB_OUT", default_value = "delone-lab-out")]
    out: PathBuf,
    /// Worker threads, 0 for all cores. Never changes the outputs.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// `KEY=VALUE` with a dotted key path and a TOML value; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    q1: Option<u32>,
    #[arg(long)]
    q2: Option<u32>,
    #[arg(long)]
    kmax: Option<u32>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long = "R")]
    big_r: Option<f64>,
}

fn toml_scalar(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|t| t.get("v").cloned())
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn load_config(path: &Path) -> Result<Value, LabError> {
    let text = fs::read_to_string(path)
        .map_err(|e| LabError::invalid("config", format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| LabError::invalid("config", e.to_string()))
    } else {
        let table: toml::Table = toml::from_str(&text).map_err(|e| LabError::invalid("config", e.to_string()))?;
        serde_json::to_value(table).map_err(|e| LabError::invalid("config", e.to_string()))
    }
}

fn build_config(
    command: Command,
    common: &Common,
    extra: &[(&str, Option<Value>)],
) -> Result<(Option<String>, Value), LabError> {
    let (preset, mut config) = match (&common.config, &common.preset) {
        (Some(path), _) => (None, load_config(path)?),
        (None, name) => {
            let name = name.clone().unwrap_or_else(|| command.default_preset().to_string());
            let (cmd, v) = runner::preset(&name)?;
            if cmd != command {
                return Err(LabError::invalid(
                    "preset",
                    format!("`{name}` belongs to `{}`, not `{}`", cmd.name(), command.name()),
                ));
            }
            (Some(name), v)
        }
    };
    for (key, value) in extra {
        if let Some(v) = value {
            runner::apply_override(&mut config, key, v.clone())?;
        }
    }
    for o in &common.overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| LabError::invalid(o.as_str(), "override must look like KEY=VALUE"))?;
        runner::apply_override(&mut config, key.trim(), toml_scalar(raw.trim()))?;
    }
    if let Some(seed) = common.seed {
        runner::set_seed(&mut config, seed);
    }
    Ok((preset, config))
}

fn write_outputs(dir: &Path, output: &RunOutput) -> Result<(), LabError> {
    fs::create_dir_all(dir)?;
    for a in &output.artifacts {
        fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

/// Report echoed on stdout for the quick closed-form commands.
fn primary(command: Command) -> Option<&'static str> {
    match command {
        Command::Bounds => Some("bounds.json"),
        Command::Counterexample => Some("frequency.json"),
        _ => None,
    }
}

fn execute(command: Command, common: &Common, extra: &[(&str, Option<Value>)]) -> Result<i32, LabError> {
    let started = Instant::now();
    let (preset, config) = build_config(command, common, extra)?;
    let output = runner::run(command, &config, common.threads)?;
    let dir = common.out.join(command.name());
    write_outputs(&dir, &output)?;
    let manifest = runner::manifest(command, preset.as_deref(), &config, common.threads, &output, started);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_NAME), text)?;

    if let Some(report) = primary(command).and_then(|n| output.get(n)) {
        print!("{report}");
    }
    for a in &output.artifacts {
        eprintln!("wrote {}", dir.join(&a.name).display());
    }
    if output.censored > 0 {
        eprintln!("censored points: {}", output.censored);
    }
    match &output.failure {
        Some(why) => {
            eprintln!("error: {why}");
            Ok(2)
        }
        None => Ok(0),
    }
}

fn dispatch(cli: Cli) -> Result<i32, LabError> {
    let plain = |c: Command, a: &Common| execute(c, a, &[]);
    match &cli.command {
        Sub::Generate(a) => plain(Command::Generate, a),
        Sub::Verify(a) => plain(Command::Verify, a),
        Sub::Ids(a) => plain(Command::Ids, a),
        Sub::Convergence(a) => plain(Command::Convergence, a),
        Sub::Bracketing(a) => plain(Command::Bracketing, a),
        Sub::Temple(a) => plain(Command::Temple, a),
        Sub::LdRate(a) => plain(Command::LdRate, a),
        Sub::Wegner(a) => plain(Command::Wegner, a),
        Sub::Lifshitz(a) => plain(Command::Lifshitz, a),
        Sub::Counterexample(a) => execute(
            Command::Counterexample,
            &a.common,
            &[
                ("annulus.dim", a.d.map(Value::from)),
                ("annulus.q1", a.q1.map(Value::from)),
                ("annulus.q2", a.q2.map(Value::from)),
                ("annulus.k_max", a.kmax.map(Value::from)),
            ],
        ),
        Sub::Bounds(a) => execute(
            Command::Bounds,
            &a.common,
            &[("d", a.d.map(Value::from)), ("R", a.big_r.map(Value::from))],
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    let code = match panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => 3,
    };
    ExitCode::from(code as u8)
}
