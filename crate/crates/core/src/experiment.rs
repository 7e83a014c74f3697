//! Experiment files and the commands that run them.
//!
//! An experiment is one JSON document:
//!
//! ```json
//! {
//!   "system": {"A": [[0.5]], "B": [[1.0]]},
//!   "synthesis": {"T": 3},
//!   "architecture": "all",
//!   "disturbance": {"kind": "random", "seed": 7, "amplitude": 1.0},
//!   "horizon": 50,
//!   "failures": [{"node": "s0", "t_fail": 10}],
//!   "out": "out/scalar"
//! }
//! ```
//!
//! `system` may be replaced by `system_file` and `synthesis` by
//! `response_file`; relative paths resolve against the experiment file.
//! Commands return a [`CommandOutput`] instead of touching the file system,
//! so they are easy to test and deterministic byte for byte.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::architecture::{build, cost_report, Architecture, ArchitectureGraph, NodeKind};
use crate::error::{Error, Result};
use crate::lti::LtiSystem;
use crate::report::{comparison_csv, comparison_text, cost_csv, ComparisonRow};
use crate::simulator::{
    compare_to_reference, impulse, internal_stability_report, random_disturbance, simulate, spof_sweep,
    StabilityReport,
};
use crate::synthesis::{achievability_residual, synthesize_h2, SynthesisProblem, SystemResponse, FEASIBILITY_TOL};
use crate::trace::FailureEvent;

pub const DEFAULT_DEVIATION_TOL: f64 = 1e-9;
pub const DEFAULT_STABILITY_TOL: f64 = 1e-6;
const DEFAULT_SPOF_SEED: u64 = 0;
const SPOF_T_FAIL: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_x: Option<Vec<Vec<bool>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_u: Option<Vec<Vec<bool>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    /// Unit impulse on state `direction` at `t = 0`.
    Impulse {
        #[serde(default)]
        direction: usize,
    },
    /// Uniform in `[-amplitude, amplitude]` at every step of the horizon.
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// Explicit `d_x[0], d_x[1], ..`; zero past the end.
    Sequence { values: Vec<Vec<f64>> },
}

fn unit() -> f64 {
    1.0
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        DisturbanceSpec::Impulse { direction: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<LtiSystem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_file: Option<PathBuf>,
    /// An architecture name or `all`.
    #[serde(default = "all")]
    pub architecture: String,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Seed for the single-point-of-failure sweep when the disturbance is not random.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn all() -> String {
    "all".into()
}

fn default_horizon() -> usize {
    50
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub architecture: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
}

impl ExperimentSpec {
    pub fn from_json(s: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut spec: ExperimentSpec = serde_json::from_str(s)?;
        spec.base_dir = base_dir.into();
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(a) = &o.architecture {
            self.architecture = a.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
            if let DisturbanceSpec::Random { seed: s, .. } = &mut self.disturbance {
                *s = Some(seed);
            }
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(tol) = o.tol {
            self.tol = Some(tol);
        }
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks the whole spec, reporting every violation at once.
    pub fn resolve(&self) -> Result<Experiment> {
        let mut v: Vec<String> = Vec::new();

        let system = match (&self.system, &self.system_file) {
            (Some(s), None) => Some(s.clone()),
            (None, Some(f)) => match read_json::<LtiSystem>(&self.path(f)) {
                Ok(s) => Some(s),
                Err(e) => {
                    v.push(format!("system_file {}: {e}", f.display()));
                    None
                }
            },
            (Some(_), Some(_)) => {
                v.push("give exactly one of `system` and `system_file`, not both".into());
                None
            }
            (None, None) => {
                v.push("missing `system` (or `system_file`)".into());
                None
            }
        };

        let source = match (&self.synthesis, &self.response_file) {
            (Some(syn), None) => system.as_ref().and_then(|sys| match synthesis_problem(sys, syn) {
                Ok(p) => {
                    v.extend(p.violations());
                    Some(ResponseSource::Synthesize(p))
                }
                Err(errs) => {
                    v.extend(errs);
                    None
                }
            }),
            (None, Some(f)) => match read_json::<SystemResponse>(&self.path(f)) {
                Ok(r) => {
                    if let Some(sys) = &system {
                        if r.nx() != sys.nx() || r.nu() != sys.nu() {
                            v.push(format!(
                                "response_file is {}x{} per tap, system needs {}x{}",
                                r.nu(),
                                r.nx(),
                                sys.nu(),
                                sys.nx()
                            ));
                        }
                    }
                    Some(ResponseSource::Given(r))
                }
                Err(e) => {
                    v.push(format!("response_file {}: {e}", f.display()));
                    None
                }
            },
            (Some(_), Some(_)) => {
                v.push("give exactly one of `synthesis` and `response_file`, not both".into());
                None
            }
            (None, None) => {
                v.push("missing `synthesis` (or `response_file`)".into());
                None
            }
        };

        let architectures = if self.architecture == "all" {
            Architecture::ALL.to_vec()
        } else {
            match self.architecture.parse::<Architecture>() {
                Ok(a) => vec![a],
                Err(e) => {
                    v.push(format!("{e}; expected one of centralized, original, global_state, naive, conservative, all"));
                    Vec::new()
                }
            }
        };

        let nx = system.as_ref().map(LtiSystem::nx);
        let nu = system.as_ref().map(LtiSystem::nu);
        match &self.disturbance {
            DisturbanceSpec::Impulse { direction } => {
                if nx.is_some_and(|n| *direction >= n) {
                    v.push(format!("impulse direction {direction} is out of range"));
                }
            }
            DisturbanceSpec::Random { seed, amplitude } => {
                if seed.is_none() {
                    v.push("random disturbance requires a `seed`".into());
                }
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    v.push("random disturbance amplitude must be finite and non-negative".into());
                }
            }
            DisturbanceSpec::Sequence { values } => {
                if let Some(n) = nx {
                    if let Some(t) = values.iter().position(|d| d.len() != n) {
                        v.push(format!("disturbance value {t} must have {n} entries"));
                    }
                }
                if values.iter().flatten().any(|e| !e.is_finite()) {
                    v.push("disturbance values must be finite".into());
                }
            }
        }
        if self.horizon == 0 {
            v.push("horizon must be at least 1".into());
        }
        if self.stability_horizon == Some(0) {
            v.push("stability_horizon must be at least 1".into());
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                v.push("tol must be positive and finite".into());
            }
        }
        if let (Some(nx), Some(nu)) = (nx, nu) {
            for f in &self.failures {
                match node_kind(&f.node, nx, nu) {
                    None => v.push(format!("failure names unknown node `{}`", f.node)),
                    Some(kind) => {
                        if architectures.len() == 1 && !has_node(architectures[0], kind) {
                            v.push(format!("architecture {} has no node `{}`", architectures[0], f.node));
                        }
                    }
                }
            }
        }

        if !v.is_empty() {
            return Err(Error::InvalidExperiment(v));
        }
        let system = system.expect("validated");
        let d_x = match &self.disturbance {
            DisturbanceSpec::Impulse { direction } => impulse(system.nx(), *direction),
            DisturbanceSpec::Random { seed, amplitude } => {
                random_disturbance(seed.expect("validated"), system.nx(), self.horizon, *amplitude)
            }
            DisturbanceSpec::Sequence { values } => {
                values.iter().map(|d| DVector::from_column_slice(d)).collect()
            }
        };
        let seed = match &self.disturbance {
            DisturbanceSpec::Random { seed, .. } => *seed,
            _ => None,
        }
        .or(self.seed)
        .unwrap_or(DEFAULT_SPOF_SEED);
        Ok(Experiment {
            system,
            source: source.expect("validated"),
            architectures,
            d_x,
            horizon: self.horizon,
            stability_horizon: self.stability_horizon,
            failures: self.failures.clone(),
            tol: self.tol,
            seed,
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn matrix(rows: &[Vec<f64>], name: &str, shape: (usize, usize), errs: &mut Vec<String>) -> Option<DMatrix<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        errs.push(format!("{name} must be {}x{}", shape.0, shape.1));
        return None;
    }
    Some(DMatrix::from_row_iterator(shape.0, shape.1, rows.iter().flatten().copied()))
}

fn mask(rows: &[Vec<bool>], name: &str, shape: (usize, usize), errs: &mut Vec<String>) -> Option<DMatrix<bool>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        errs.push(format!("{name} must be {}x{}", shape.0, shape.1));
        return None;
    }
    Some(DMatrix::from_row_iterator(shape.0, shape.1, rows.iter().flatten().copied()))
}

fn synthesis_problem(sys: &LtiSystem, s: &SynthesisSpec) -> std::result::Result<SynthesisProblem, Vec<String>> {
    let (nx, nu) = (sys.nx(), sys.nu());
    let mut errs = Vec::new();
    let q = s.q.as_ref().map(|q| matrix(q, "Q", (nx, nx), &mut errs));
    let r = s.r.as_ref().map(|r| matrix(r, "R", (nu, nu), &mut errs));
    let mx = s.mask_x.as_ref().map(|m| mask(m, "mask_x", (nx, nx), &mut errs));
    let mu = s.mask_u.as_ref().map(|m| mask(m, "mask_u", (nu, nx), &mut errs));
    if !errs.is_empty() {
        return Err(errs);
    }
    let mut p = SynthesisProblem::new(sys.clone(), s.horizon).with_masks(mx.flatten(), mu.flatten());
    if let Some(Some(q)) = q {
        p.q = q;
    }
    if let Some(Some(r)) = r {
        p.r = r;
    }
    Ok(p)
}

fn node_kind(name: &str, nx: usize, nu: usize) -> Option<NodeKind> {
    let index = |prefix: &str| name.strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok());
    match name {
        "controller" => Some(NodeKind::CentralController),
        "gsk" => Some(NodeKind::Gsk),
        _ => match (index("s"), index("a")) {
            (Some(i), _) if i < nx => Some(NodeKind::Sensor(i)),
            (_, Some(k)) if k < nu => Some(NodeKind::Actuator(k)),
            _ => None,
        },
    }
}

fn has_node(arch: Architecture, kind: NodeKind) -> bool {
    match kind {
        NodeKind::Sensor(_) | NodeKind::Actuator(_) => true,
        NodeKind::CentralController => matches!(arch, Architecture::Centralized | Architecture::Original),
        NodeKind::Gsk => arch == Architecture::GlobalState,
    }
}

#[derive(Debug, Clone)]
pub enum ResponseSource {
    Synthesize(SynthesisProblem),
    Given(SystemResponse),
}

/// A validated experiment with its disturbance materialized.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub system: LtiSystem,
    pub source: ResponseSource,
    pub architectures: Vec<Architecture>,
    pub d_x: Vec<DVector<f64>>,
    pub horizon: usize,
    pub stability_horizon: Option<usize>,
    pub failures: Vec<FailureEvent>,
    pub tol: Option<f64>,
    pub seed: u64,
}

/// What a command produced: files relative to the output directory, text
/// for standard output, and a process exit status.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutput {
    pub files: Vec<(PathBuf, String)>,
    pub stdout: String,
    pub exit_code: i32,
}

impl CommandOutput {
    fn file(&mut self, name: impl Into<PathBuf>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn say(&mut self, line: impl AsRef<str>) {
        self.stdout.push_str(line.as_ref());
        self.stdout.push('\n');
    }

    /// Writes every file under `dir`, creating directories as needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, contents) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, contents)?;
        }
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

impl Experiment {
    /// The response to deploy, synthesizing it if needed.
    pub fn response(&self) -> Result<SystemResponse> {
        match &self.source {
            ResponseSource::Synthesize(p) => Ok(synthesize_h2(p)?.response),
            ResponseSource::Given(r) => Ok(r.clone()),
        }
    }

    fn graphs(&self, resp: &SystemResponse) -> Result<Vec<ArchitectureGraph>> {
        self.architectures.iter().map(|&a| build(a, &self.system, resp)).collect()
    }

    fn failures_for(&self, g: &ArchitectureGraph) -> Vec<FailureEvent> {
        self.failures.iter().filter(|f| g.node_id(&f.node).is_ok()).cloned().collect()
    }
}

#[derive(Serialize)]
struct SynthesisSummary<'a> {
    residual: f64,
    initial: f64,
    closure: f64,
    recursion: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    warnings: &'a [String],
}

pub fn cmd_synthesize(exp: &Experiment) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let (resp, objective, warnings) = match &exp.source {
        ResponseSource::Synthesize(p) => match synthesize_h2(p) {
            Ok(s) => (s.response, Some(s.objective), s.warnings),
            Err(Error::Infeasible { residual }) => {
                out.say(format!("infeasible: constraint residual {residual:.3e}"));
                out.exit_code = 1;
                return Ok(out);
            }
            Err(e) => return Err(e),
        },
        ResponseSource::Given(r) => (r.clone(), None, Vec::new()),
    };
    let ach = achievability_residual(&resp, &exp.system)?;
    for w in &warnings {
        out.say(format!("warning: {w}"));
    }
    out.say(format!("achievability residual {:.3e}", ach.residual));
    if let Some(obj) = objective {
        out.say(format!("objective {obj:.12e}"));
    }
    let summary = SynthesisSummary {
        residual: ach.residual,
        initial: ach.initial,
        closure: ach.closure,
        recursion: &ach.recursion,
        objective,
        warnings: &warnings,
    };
    out.file("response.json", json(&resp)?);
    out.file("achievability.json", json(&summary)?);
    if ach.residual > FEASIBILITY_TOL {
        out.say("response is not achievable");
        out.exit_code = 1;
    }
    Ok(out)
}

pub fn cmd_build(exp: &Experiment) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let resp = exp.response()?;
    for g in exp.graphs(&resp)? {
        out.say(format!(
            "{}: {} nodes, {} links, {} phases",
            g.architecture,
            g.nodes.len(),
            g.links.len(),
            g.schedule.len()
        ));
        out.file(format!("graph_{}.json", g.architecture), json(&g)?);
    }
    Ok(out)
}

pub fn cmd_simulate(exp: &Experiment) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let resp = exp.response()?;
    let tol = exp.tol.unwrap_or(DEFAULT_DEVIATION_TOL);
    for g in exp.graphs(&resp)? {
        let failures = exp.failures_for(&g);
        let trace = simulate(&g, &exp.system, &exp.d_x, exp.horizon, &failures)?;
        let mut line = format!("{}: max |x| {:.3e}, max |u| {:.3e}", g.architecture, amax(&trace.x), amax(&trace.u));
        if failures.is_empty() {
            let dev = compare_to_reference(&g, &exp.system, &resp, &exp.d_x, exp.horizon)?;
            line.push_str(&format!(", deviation from reference {dev:.3e}"));
            if dev > tol {
                out.exit_code = 1;
            }
        } else {
            let names: Vec<&str> = failures.iter().map(|f| f.node.as_str()).collect();
            line.push_str(&format!(", failed: {}", names.join(" ")));
        }
        for f in &trace.flags {
            line.push_str(&format!(" [{f}]"));
        }
        out.say(line);
        out.file(format!("trace_{}.csv", g.architecture), trace.to_csv_string()?);
        out.file(format!("trace_{}.json", g.architecture), json(&trace)?);
    }
    Ok(out)
}

fn amax(v: &[DVector<f64>]) -> f64 {
    v.iter().map(|e| e.amax()).fold(0.0, f64::max)
}

pub fn cmd_compare(exp: &Experiment) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let resp = exp.response()?;
    let tol = exp.tol.unwrap_or(DEFAULT_DEVIATION_TOL);
    let rows = exp
        .graphs(&resp)?
        .iter()
        .map(|g| {
            let cost = cost_report(g)?;
            let dev = compare_to_reference(g, &exp.system, &resp, &exp.d_x, exp.horizon)?;
            let sweep = spof_sweep(g, &exp.system, exp.seed, SPOF_T_FAIL)?;
            let nodes = sweep.paralyzing_nodes().into_iter().map(String::from).collect();
            Ok(ComparisonRow::new(&cost, nodes, dev))
        })
        .collect::<Result<Vec<_>>>()?;
    let text = comparison_text(&rows);
    out.stdout.push_str(&text);
    if rows.iter().any(|r| r.max_deviation > tol) {
        out.say(format!("deviation exceeds {tol:e}"));
        out.exit_code = 1;
    }
    out.file("comparison.txt", text);
    out.file("comparison.csv", comparison_csv(&rows)?);
    out.file("comparison.json", json(&rows)?);
    Ok(out)
}

pub fn cmd_stability(exp: &Experiment) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let resp = exp.response()?;
    let horizon = exp
        .stability_horizon
        .unwrap_or_else(|| StabilityReport::default_horizon(resp.horizon()));
    let tol = exp.tol.unwrap_or(DEFAULT_STABILITY_TOL);
    let rep = internal_stability_report(&exp.system, resp.phi_u_blocks(), horizon, tol)?;
    out.stdout.push_str(&rep.to_text());
    for f in &rep.flags {
        out.say(format!("warning: {f}"));
    }
    if !rep.passed {
        out.exit_code = 1;
    }
    out.file("stability.txt", rep.to_text());
    out.file("stability.json", json(&rep)?);
    Ok(out)
}

pub fn cmd_cost(exp: &Experiment) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let resp = exp.response()?;
    for g in exp.graphs(&resp)? {
        let rep = cost_report(&g)?;
        out.say(format!(
            "{}: memory {} (nnz {}), mults/step {} (nnz {}), comm/step {} (nnz {})",
            rep.architecture,
            rep.dense.memory_scalars,
            rep.nnz.memory_scalars,
            rep.dense.mults_per_step,
            rep.nnz.mults_per_step,
            rep.dense.comm_scalars_per_step,
            rep.nnz.comm_scalars_per_step
        ));
        out.file(format!("cost_{}.csv", rep.architecture), cost_csv(&rep)?);
        out.file(format!("cost_{}.json", rep.architecture), json(&rep)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synthesize,
    Build,
    Simulate,
    Compare,
    Stability,
    Cost,
}

pub fn run(cmd: Command, exp: &Experiment) -> Result<CommandOutput> {
    match cmd {
        Command::Synthesize => cmd_synthesize(exp),
        Command::Build => cmd_build(exp),
        Command::Simulate => cmd_simulate(exp),
        Command::Compare => cmd_compare(exp),
        Command::Stability => cmd_stability(exp),
        Command::Cost => cmd_cost(exp),
    }
}
