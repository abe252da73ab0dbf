//! Named presets and the batch driver shared by the command line and the tests.
//!
//! A run takes a JSON configuration tree, deserializes it into the config type of its
//! command, executes on a private rayon pool and returns every artifact in memory. Writing
//! files is left to the caller.

use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{bounds_report, threshold_sweep_csv, BoundsInputs};
use crate::colouring::{sample_colouring, SingleSiteDistribution};
use crate::counterexample::{frequency_sequence, ids_oscillation, AnnulusParams, IdsOscillationConfig};
use crate::error::{LabError, Result};
use crate::hamiltonian::{Boundary, SingleSitePotential};
use crate::ids::{
    bracketing_scan, growth_point_check, ids_convergence, large_deviation_rate, lifshitz_fit, mc_ids_curve,
    subadditivity_scan, temple_check, wegner_scan, ExperimentConfig, LdConfig, LifshitzConfig, SideRule,
};
use crate::pointset::{materialize, points_csv, verify_delone, Pattern, PointSetSpec, Window};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Generate,
    Verify,
    Ids,
    Convergence,
    Bracketing,
    Temple,
    LdRate,
    Wegner,
    Lifshitz,
    Counterexample,
    Bounds,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Generate,
        Command::Verify,
        Command::Ids,
        Command::Convergence,
        Command::Bracketing,
        Command::Temple,
        Command::LdRate,
        Command::Wegner,
        Command::Lifshitz,
        Command::Counterexample,
        Command::Bounds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Verify => "verify",
            Command::Ids => "ids",
            Command::Convergence => "convergence",
            Command::Bracketing => "bracketing",
            Command::Temple => "temple",
            Command::LdRate => "ld-rate",
            Command::Wegner => "wegner",
            Command::Lifshitz => "lifshitz",
            Command::Counterexample => "counterexample",
            Command::Bounds => "bounds",
        }
    }

    /// Preset used when neither a config file nor a preset is given.
    pub fn default_preset(self) -> &'static str {
        match self {
            Command::Lifshitz => "lifshitz-d1",
            other => other.name(),
        }
    }
}

// ---------------------------------------------------------------------------
// Per-command configuration types.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub point_set: PointSetSpec,
    pub dist: SingleSiteDistribution,
    #[serde(rename = "L")]
    pub side: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    pub master_seed: u64,
    #[serde(default)]
    pub sample_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub point_set: PointSetSpec,
    #[serde(rename = "L")]
    pub side: f64,
    /// Defaults to a quarter of the nominal discreteness radius.
    #[serde(default)]
    pub probe_spacing: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceRun {
    pub experiment: ExperimentConfig,
    #[serde(rename = "E")]
    pub e: f64,
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubadditivityRun {
    #[serde(rename = "L_small")]
    pub l_small: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketingRun {
    /// Bracketing is scanned on every side of `experiment.l_list`.
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub subadditivity: Option<SubadditivityRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WegnerRun {
    pub experiment: ExperimentConfig,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub widths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifshitzRun {
    pub fit: LifshitzConfig,
    /// Same protocol without disorder, on its own energy window.
    #[serde(default)]
    pub control: Option<LifshitzConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleIds {
    pub potential: SingleSitePotential,
    pub coupling: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub h: f64,
    pub reference_side: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleRun {
    pub annulus: AnnulusParams,
    /// Side of the single-point pattern counted by the frequency sequence.
    #[serde(default = "unit_side")]
    pub pattern_side: f64,
    #[serde(default)]
    pub ids: Option<CounterexampleIds>,
}

fn unit_side() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

/// Bounds inputs plus an optional `sweep` table, all at the top level of the config.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsRun {
    pub inputs: BoundsInputs,
    pub sweep: Option<SweepRange>,
}

impl BoundsRun {
    pub fn to_value(&self) -> Value {
        let mut v = to_value(&self.inputs);
        if let Some(s) = &self.sweep {
            v["sweep"] = to_value(s);
        }
        v
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let mut v = v.clone();
        let sweep = match v.as_object_mut().and_then(|m| m.remove("sweep")) {
            Some(s) => Some(parse::<SweepRange>(&s).map_err(|e| prefix_key("sweep", e))?),
            None => None,
        };
        Ok(Self {
            inputs: parse(&v)?,
            sweep,
        })
    }
}

fn prefix_key(prefix: &str, e: LabError) -> LabError {
    match e {
        LabError::Invalid { key, reason } => LabError::invalid(format!("{prefix}.{key}"), reason),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Presets.

pub const PRESETS: [&str; 12] = [
    "lifshitz-d1",
    "lifshitz-d2",
    "bracketing",
    "temple",
    "ld-rate",
    "wegner",
    "convergence",
    "generate",
    "verify",
    "ids",
    "counterexample",
    "bounds",
];

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn base_experiment(dim: usize, w: f64) -> ExperimentConfig {
    ExperimentConfig {
        point_set: PointSetSpec::lattice(dim, 1.0),
        potential: SingleSitePotential::boxed(1.0, 0.375),
        dist: SingleSiteDistribution::Uniform { w },
        h: Some(0.25),
        master_seed: 1,
        n_samples: 100,
        n_translates: 1,
        e_grid: Vec::new(),
        l_list: Vec::new(),
        boundaries: vec![Boundary::Dirichlet, Boundary::Neumann],
    }
}

/// Strong-disorder alloy in `dim` dimensions with the free operator as control.
fn lifshitz_preset(dim: usize) -> LifshitzRun {
    // In d = 2 the tail is only resolvable on the smallest cube over about half a decade.
    let (c, e_lo, e_hi, n_e, samples, control_grid, l_max) = match dim {
        1 => (8.0, 1.0, 10.0, 10, 200_000, (0.002, 0.02), 128.0),
        _ => (4.0, 3.0, 10.0, 7, 20_000, (0.02, 0.2), 16.0),
    };
    let fit = LifshitzConfig {
        experiment: ExperimentConfig {
            n_samples: samples,
            e_grid: log_grid(e_lo, e_hi, n_e),
            boundaries: vec![Boundary::Neumann, Boundary::Dirichlet],
            ..base_experiment(dim, 300.0)
        },
        side_rule: SideRule::Scaled {
            c,
            quantum: 1.0,
            min: 4.0,
            max: l_max,
        },
        n_boot: 200,
        min_points: 6,
    };
    let control = LifshitzConfig {
        experiment: ExperimentConfig {
            dist: SingleSiteDistribution::Uniform { w: 0.0 },
            n_samples: 1,
            e_grid: log_grid(control_grid.0, control_grid.1, 10),
            ..fit.experiment.clone()
        },
        ..fit.clone()
    };
    LifshitzRun {
        fit,
        control: Some(control),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config types serialize")
}

/// The configuration tree of a named preset together with its command.
pub fn preset(name: &str) -> Result<(Command, Value)> {
    let v = match name {
        "lifshitz-d1" => (Command::Lifshitz, to_value(&lifshitz_preset(1))),
        "lifshitz-d2" => (Command::Lifshitz, to_value(&lifshitz_preset(2))),
        "bracketing" => (
            Command::Bracketing,
            to_value(&BracketingRun {
                experiment: ExperimentConfig {
                    n_samples: 50,
                    e_grid: log_grid(0.05, 2.0, 20),
                    l_list: vec![8.0, 16.0],
                    ..base_experiment(1, 1.0)
                },
                subadditivity: Some(SubadditivityRun { l_small: 8.0, k: 2 }),
            }),
        ),
        "temple" => (
            Command::Temple,
            to_value(&ExperimentConfig {
                n_samples: 100,
                l_list: vec![8.0, 16.0, 32.0],
                ..base_experiment(1, 1.0)
            }),
        ),
        "ld-rate" => (
            Command::LdRate,
            to_value(&LdConfig {
                point_set: PointSetSpec::lattice(1, 1.0),
                dist: SingleSiteDistribution::Uniform { w: 1.0 },
                alpha: 2000.0,
                l_list: vec![8.0, 16.0, 24.0, 32.0],
                e_level: 0.35,
                n_samples: 10_000,
                master_seed: 1,
            }),
        ),
        "wegner" => (
            Command::Wegner,
            to_value(&WegnerRun {
                experiment: ExperimentConfig {
                    n_samples: 2000,
                    l_list: vec![32.0, 64.0],
                    boundaries: vec![Boundary::Dirichlet],
                    ..base_experiment(1, 1.0)
                },
                e0: 0.5,
                widths: vec![0.02, 0.04, 0.08],
            }),
        ),
        "convergence" => (
            Command::Convergence,
            to_value(&ConvergenceRun {
                experiment: ExperimentConfig {
                    n_samples: 200,
                    n_translates: 1,
                    l_list: vec![8.0, 16.0, 32.0, 64.0],
                    ..base_experiment(1, 1.0)
                },
                e: 0.5,
                boundary: Boundary::Neumann,
            }),
        ),
        "generate" => (
            Command::Generate,
            to_value(&GenerateConfig {
                point_set: PointSetSpec::perturbed_lattice(2, 1.0, 0.1, 3),
                dist: SingleSiteDistribution::Uniform { w: 1.0 },
                side: 16.0,
                center: vec![0.0, 0.0],
                master_seed: 1,
                sample_index: 0,
            }),
        ),
        "verify" => (
            Command::Verify,
            to_value(&VerifyConfig {
                point_set: PointSetSpec::perturbed_lattice(2, 1.0, 0.1, 3),
                side: 16.0,
                probe_spacing: None,
            }),
        ),
        "ids" => (
            Command::Ids,
            to_value(&ExperimentConfig {
                n_samples: 100,
                e_grid: log_grid(0.05, 2.0, 25),
                l_list: vec![8.0, 16.0],
                ..base_experiment(1, 1.0)
            }),
        ),
        "counterexample" => (
            Command::Counterexample,
            to_value(&CounterexampleRun {
                annulus: AnnulusParams {
                    dim: 1,
                    q1: 1,
                    q2: 2,
                    annulus_alpha: 2.0,
                    initial_side: 8.0,
                    k_max: 3,
                },
                pattern_side: 1.0,
                ids: Some(CounterexampleIds {
                    potential: SingleSitePotential::boxed(4.0, 0.25),
                    coupling: 1.0,
                    e: 2.0,
                    h: 0.125,
                    reference_side: 1024.0,
                }),
            }),
        ),
        "bounds" => (
            Command::Bounds,
            BoundsRun {
                inputs: BoundsInputs::default(),
                sweep: Some(SweepRange {
                    r_min: 2.0,
                    r_max: 1000.0,
                    points: 50,
                }),
            }
            .to_value(),
        ),
        other => {
            return Err(LabError::invalid(
                "preset",
                format!("unknown preset `{other}`; known: {}", PRESETS.join(", ")),
            ))
        }
    };
    Ok(v)
}

// ---------------------------------------------------------------------------
// Editing configuration trees.

/// Sets every `master_seed` in the tree; returns whether any was found.
pub fn set_seed(v: &mut Value, seed: u64) -> bool {
    match v {
        Value::Object(map) => {
            let mut found = false;
            for (k, child) in map.iter_mut() {
                if k == "master_seed" {
                    *child = json!(seed);
                    found = true;
                } else {
                    found |= set_seed(child, seed);
                }
            }
            found
        }
        Value::Array(items) => items.iter_mut().fold(false, |acc, c| set_seed(c, seed) | acc),
        _ => false,
    }
}

/// First `master_seed` met in a depth-first walk.
pub fn find_seed(v: &Value) -> Option<u64> {
    match v {
        Value::Object(map) => map
            .get("master_seed")
            .and_then(Value::as_u64)
            .or_else(|| map.values().find_map(find_seed)),
        Value::Array(items) => items.iter().find_map(find_seed),
        _ => None,
    }
}

/// Replaces the value at a dotted path, creating intermediate tables.
///
/// Numeric path segments index into arrays.
pub fn apply_override(v: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(LabError::invalid(key, "malformed override path"));
    }
    let mut node = v;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| json!({}))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| LabError::invalid(key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| LabError::invalid(key, format!("index {idx} out of range (len {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(LabError::invalid(key, format!("`{part}` does not name a table"))),
        };
    }
    Ok(())
}

fn parse<T: DeserializeOwned>(config: &Value) -> Result<T> {
    serde_path_to_error::deserialize(config.clone()).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "config".to_string() } else { path };
        LabError::invalid(key, e.into_inner().to_string())
    })
}

// ---------------------------------------------------------------------------
// Running.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Points excluded from fits because their Monte Carlo estimate was zero.
    pub censored: usize,
    /// Set when censoring left too few points for a fit; the artifacts are still complete.
    pub failure: Option<String>,
}

impl RunOutput {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.contents.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub preset: Option<String>,
    pub version: String,
    pub master_seed: Option<u64>,
    pub threads: usize,
    pub config: Value,
    pub outputs: Vec<OutputEntry>,
    pub censored: usize,
    pub failure: Option<String>,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST_NAME: &str = "manifest.json";

struct Out {
    artifacts: Vec<Artifact>,
    censored: usize,
    failure: Option<String>,
}

impl Out {
    fn new() -> Self {
        Self {
            artifacts: Vec::new(),
            censored: 0,
            failure: None,
        }
    }

    fn text(&mut self, name: impl Into<String>, contents: String) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents,
        });
    }

    fn json<T: Serialize>(&mut self, name: impl Into<String>, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.text(name, s);
        Ok(())
    }

    fn fail(&mut self, why: String) {
        if self.failure.is_none() {
            self.failure = Some(why);
        }
    }
}

fn fmt_side(side: f64) -> String {
    if side.fract() == 0.0 {
        format!("{}", side as i64)
    } else {
        format!("{side}")
    }
}

/// Runs `command` on `config` with `threads` workers (0 means all cores).
pub fn run(command: Command, config: &Value, threads: usize) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Invariant(format!("thread pool: {e}")))?;
    let out = pool.install(|| dispatch(command, config))?;
    Ok(RunOutput {
        artifacts: out.artifacts,
        censored: out.censored,
        failure: out.failure,
    })
}

/// Manifest describing a finished run; `wall_clock_seconds` is the only non-reproducible field.
pub fn manifest(
    command: Command,
    preset: Option<&str>,
    config: &Value,
    threads: usize,
    output: &RunOutput,
    started: Instant,
) -> RunManifest {
    RunManifest {
        command,
        preset: preset.map(str::to_string),
        version: VERSION.to_string(),
        master_seed: find_seed(config),
        threads,
        config: config.clone(),
        outputs: output
            .artifacts
            .iter()
            .map(|a| OutputEntry {
                path: a.name.clone(),
                bytes: a.contents.len(),
            })
            .collect(),
        censored: output.censored,
        failure: output.failure.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    }
}

fn dispatch(command: Command, config: &Value) -> Result<Out> {
    let mut out = Out::new();
    match command {
        Command::Generate => {
            let c: GenerateConfig = parse(config)?;
            let dim = c.point_set.dim;
            let center = if c.center.is_empty() { vec![0.0; dim] } else { c.center.clone() };
            let w = Window::new(dim, &center, c.side)?;
            let cw = sample_colouring(&c.point_set, &w, &c.dist, c.master_seed, c.sample_index)?;
            out.text("points.csv", points_csv(&materialize(&c.point_set, &w)?, dim));
            out.text("colouring.csv", cw.to_csv());
            out.json("colouring.json", &cw)?;
        }
        Command::Verify => {
            let c: VerifyConfig = parse(config)?;
            c.point_set.validate()?;
            let dim = c.point_set.dim;
            let probe = c.probe_spacing.unwrap_or(c.point_set.nominal_radii().0 / 4.0);
            let cert = verify_delone(&c.point_set, &Window::centered(dim, c.side)?, probe)?;
            out.json("delone.json", &cert)?;
        }
        Command::Ids => {
            let c: ExperimentConfig = parse(config)?;
            c.validate()?;
            if c.l_list.is_empty() || c.e_grid.is_empty() {
                return Err(LabError::invalid("l_list", "ids needs a non-empty l_list and e_grid"));
            }
            let mut curves = Vec::new();
            for &side in &c.l_list {
                for &bc in &c.boundaries {
                    let curve = mc_ids_curve(&c, side, bc)?;
                    out.text(format!("ids_L{}_{}.csv", fmt_side(side), bc.name()), curve.to_csv());
                    curves.push(curve);
                }
            }
            out.json("ids.json", &curves)?;
            let side = *c.l_list.last().expect("checked non-empty");
            let growth = growth_point_check(&c, side, Boundary::Neumann)?;
            out.json("growth.json", &growth)?;
        }
        Command::Convergence => {
            let c: ConvergenceRun = parse(config)?;
            c.experiment.validate()?;
            let rep = ids_convergence(&c.experiment, c.e, c.boundary)?;
            let mut csv = String::from("L,mean,stderr\n");
            for r in &rep.rows {
                csv.push_str(&format!("{},{:e},{:e}\n", r.side, r.mean, r.stderr));
            }
            out.text("convergence.csv", csv);
            out.json("convergence.json", &rep)?;
        }
        Command::Bracketing => {
            let c: BracketingRun = parse(config)?;
            c.experiment.validate()?;
            if c.experiment.l_list.is_empty() {
                return Err(LabError::invalid("experiment.l_list", "needs at least one side"));
            }
            let mut csv = String::from("L,E,dirichlet_mean,dirichlet_stderr,neumann_mean,neumann_stderr,violations\n");
            let mut reports = Vec::new();
            for &side in &c.experiment.l_list {
                for r in bracketing_scan(&c.experiment, side)? {
                    csv.push_str(&format!(
                        "{},{},{:e},{:e},{:e},{:e},{}\n",
                        r.side,
                        r.e,
                        r.dirichlet_mean,
                        r.dirichlet_stderr,
                        r.neumann_mean,
                        r.neumann_stderr,
                        r.pathwise_violations
                    ));
                    reports.push(r);
                }
            }
            out.text("bracketing.csv", csv);
            out.json("bracketing.json", &reports)?;
            if let Some(s) = &c.subadditivity {
                let reps = subadditivity_scan(&c.experiment, s.l_small, s.k, &c.experiment.e_grid)?;
                let mut csv = String::from("E,L_small,k,samples,neumann_violations,dirichlet_violations\n");
                for r in &reps {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        r.e, r.l_small, r.k, r.samples, r.neumann_violations, r.dirichlet_violations
                    ));
                }
                out.text("subadditivity.csv", csv);
                out.json("subadditivity.json", &reps)?;
            }
        }
        Command::Temple => {
            let c: ExperimentConfig = parse(config)?;
            c.validate()?;
            let mut csv = String::from("L,sample,ground_state,bound\n");
            let mut reports = Vec::new();
            for &side in &c.l_list {
                let rep = temple_check(&c, side, c.n_samples)?;
                for row in &rep.rows {
                    csv.push_str(&format!("{},{},{:e},{:e}\n", side, row.sample, row.ground_state, row.bound));
                }
                reports.push(rep);
            }
            out.text("temple.csv", csv);
            out.json("temple.json", &reports)?;
        }
        Command::LdRate => {
            let c: LdConfig = parse(config)?;
            let rep = large_deviation_rate(&c)?;
            let mut csv = String::from("L,x,hits,samples,probability,censored\n");
            for r in &rep.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{:e},{}\n",
                    r.side, r.x, r.hits, r.samples, r.probability, r.censored
                ));
            }
            out.censored += rep.censored;
            if rep.rows.len() - rep.censored < 3 {
                out.fail(format!("ld-rate: only {} uncensored sides", rep.rows.len() - rep.censored));
            }
            out.text("ld_rate.csv", csv);
            out.json("ld_rate.json", &rep)?;
        }
        Command::Wegner => {
            let c: WegnerRun = parse(config)?;
            c.experiment.validate()?;
            let mut csv = String::from("L,width,mean_count,stderr\n");
            let mut reports = Vec::new();
            for &side in &c.experiment.l_list {
                let rep = wegner_scan(&c.experiment, c.e0, &c.widths, side)?;
                for (i, w) in rep.widths.iter().enumerate() {
                    csv.push_str(&format!("{},{},{:e},{:e}\n", side, w, rep.mean_counts[i], rep.stderr[i]));
                }
                reports.push(rep);
            }
            out.text("wegner.csv", csv);
            out.json("wegner.json", &reports)?;
        }
        Command::Lifshitz => {
            let c: LifshitzRun = parse(config)?;
            let rep = lifshitz_fit(&c.fit)?;
            let used = rep.neumann.as_ref().map_or(0, |f| f.points);
            out.censored += rep.points.len() - used;
            if used < c.fit.min_points {
                out.fail(format!(
                    "lifshitz: {used} uncensored Neumann energies, {} required",
                    c.fit.min_points
                ));
            }
            out.text("lifshitz.csv", rep.to_csv());
            out.json("lifshitz.json", &rep)?;
            if let Some(ctrl) = &c.control {
                let rep = lifshitz_fit(ctrl)?;
                out.text("lifshitz_control.csv", rep.to_csv());
                out.json("lifshitz_control.json", &rep)?;
            }
        }
        Command::Counterexample => {
            let c: CounterexampleRun = parse(config)?;
            let pattern = Pattern::single_point(c.annulus.dim, c.pattern_side);
            let freq = frequency_sequence(&c.annulus, &pattern)?;
            out.text("frequency.csv", freq.to_csv());
            out.json("frequency.json", &freq)?;
            if let Some(ids) = &c.ids {
                let rep = ids_oscillation(&IdsOscillationConfig {
                    annulus: c.annulus.clone(),
                    potential: ids.potential,
                    coupling: ids.coupling,
                    e: ids.e,
                    h: ids.h,
                    reference_side: ids.reference_side,
                })?;
                out.text("ids_oscillation.csv", rep.oscillation.to_csv());
                out.json("ids_oscillation.json", &rep)?;
            }
        }
        Command::Bounds => {
            let c = BoundsRun::from_value(config)?;
            let rep = bounds_report(&c.inputs)?;
            out.json("bounds.json", &rep)?;
            if let Some(s) = &c.sweep {
                out.text("bounds_sweep.csv", threshold_sweep_csv(&c.inputs, s.r_min, s.r_max, s.points)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in PRESETS {
            let (cmd, v) = preset(name).unwrap();
            let ok = match cmd {
                Command::Generate => parse::<GenerateConfig>(&v).is_ok(),
                Command::Verify => parse::<VerifyConfig>(&v).is_ok(),
                Command::Ids | Command::Temple => parse::<ExperimentConfig>(&v).is_ok(),
                Command::Convergence => parse::<ConvergenceRun>(&v).is_ok(),
                Command::Bracketing => parse::<BracketingRun>(&v).is_ok(),
                Command::LdRate => parse::<LdConfig>(&v).is_ok(),
                Command::Wegner => parse::<WegnerRun>(&v).is_ok(),
                Command::Lifshitz => parse::<LifshitzRun>(&v).is_ok(),
                Command::Counterexample => parse::<CounterexampleRun>(&v).is_ok(),
                Command::Bounds => BoundsRun::from_value(&v).is_ok(),
            };
            assert!(ok, "{name}");
        }
        for cmd in Command::ALL {
            assert_eq!(preset(cmd.default_preset()).unwrap().0, cmd);
        }
    }

    #[test]
    fn overrides_and_seeds() {
        let (_, mut v) = preset("lifshitz-d1").unwrap();
        assert!(set_seed(&mut v, 42));
        assert_eq!(v["fit"]["experiment"]["master_seed"], 42);
        assert_eq!(v["control"]["experiment"]["master_seed"], 42);
        assert_eq!(find_seed(&v), Some(42));
        apply_override(&mut v, "fit.experiment.e_grid.0", json!(0.5)).unwrap();
        assert_eq!(v["fit"]["experiment"]["e_grid"][0], 0.5);
        apply_override(&mut v, "fit.n_boot", json!(10)).unwrap();
        assert_eq!(v["fit"]["n_boot"], 10);
        assert!(apply_override(&mut v, "fit.n_boot.x", json!(1)).is_err());
        assert!(apply_override(&mut v, "a..b", json!(1)).is_err());
    }

    #[test]
    fn bad_keys_are_named() {
        let (_, mut v) = preset("bounds").unwrap();
        apply_override(&mut v, "R", json!("ten")).unwrap();
        match run(Command::Bounds, &v, 1) {
            Err(LabError::Invalid { key, .. }) => assert_eq!(key, "R"),
            other => panic!("{other:?}"),
        }
        let (_, mut v) = preset("temple").unwrap();
        apply_override(&mut v, "n_sample", json!(3)).unwrap();
        match run(Command::Temple, &v, 1) {
            Err(e @ LabError::Invalid { .. }) => assert!(e.to_string().contains("n_sample")),
            other => panic!("{other:?}"),
        }
    }
}
