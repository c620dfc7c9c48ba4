//! The `mmot` command-line tool.
//!
//! Every subcommand writes a JSON report (to `--out` or stdout) and exits
//! with 0 when all of its checks pass, 2 when one fails or a result cannot
//! be certified, and 1 on usage errors.

pub mod experiments;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

use crate::cost::CostModel;
use crate::diff::three_marginal_criterion;
use crate::error::{Error, Result};
use crate::extremal::{check_thm41, is_vertex, lemma_trip_check, symmetry_witness, GraphMap};
use crate::instances;
use crate::io::{coupling_from_json, marginal_from_json, potentials_from_json, CouplingJson, PotentialsJson};
use crate::solver::{duality_gap, solve_exact};
use crate::space::{Coupling, ProductSpace};
use crate::structure::{
    check_c_monotone, decompose_graphs, splitting_support, twist_multiplicity, TOL_GRAD, TOL_MASS, TOL_MONO,
};

pub use experiments::{experiment_registry, find_experiment, run_experiment, Check, ExperimentSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(name = "mmot", version, about = "Exact discrete multi-marginal optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Points per axis for generated grids.
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Mass below which a cell is outside the support; also the splitting tolerance.
    #[arg(long, global = true)]
    pub tol_support: Option<f64>,
    /// Bound on the duality gap.
    #[arg(long, global = true)]
    pub tol_dual: Option<f64>,
    /// Relative radius for gradient clustering.
    #[arg(long, global = true)]
    pub tol_grad: Option<f64>,
    /// Report path; stdout if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `csv` writes the support cells of the command's coupling instead of the report.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Grid and cost. Without `--marginal`, a uniform grid of `--grid-size`
/// points on `[0,1]` is used on every axis.
#[derive(Debug, Args, Serialize)]
pub struct Instance {
    /// Marginal JSON file; repeat once per axis, or give one file to reuse on all `--n` axes.
    #[arg(long = "marginal")]
    pub marginals: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value = "coulomb1d")]
    pub cost: String,
}

#[derive(Debug, Args, Serialize)]
pub struct Sampling {
    #[arg(long, default_value = "expcos")]
    pub cost: String,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Number of points per sample for costs of variable arity.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Optimal coupling, potentials and value.
    Solve(#[command(flatten)] Instance),
    /// Split a coupling into weighted graphs over the first axis.
    Decompose {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        coupling: PathBuf,
    },
    /// Pairwise c-monotonicity of a coupling's support.
    CheckMonotone {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        coupling: PathBuf,
    },
    /// Splitting set of given potentials, optionally containing a coupling's support.
    CheckSplitting {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        potentials: PathBuf,
        #[arg(long)]
        coupling: Option<PathBuf>,
    },
    /// Gradient-cluster multiplicity on the splitting set of an optimal solution.
    TwistCount {
        #[command(flatten)]
        instance: Instance,
        /// Use these potentials instead of solving.
        #[arg(long)]
        potentials: Option<PathBuf>,
    },
    /// Inertia of the off-diagonal Hessian at random points, one line per sample.
    Signature(#[command(flatten)] Sampling),
    /// Three-marginal product test at random points.
    Criterion3(#[command(flatten)] Sampling),
    /// Whether a coupling is a vertex of its transport polytope.
    Extremal {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        coupling: PathBuf,
    },
    /// Hypotheses of the multi-graph extremality criterion for maps in a JSON file.
    Thm41 {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        maps: PathBuf,
    },
    /// Second optimizer from a permutation-invariant plan.
    Witness {
        #[command(flatten)]
        instance: Instance,
        #[arg(long)]
        coupling: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        s1: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        s2: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        s3: Vec<usize>,
    },
    /// Run a registered experiment.
    Repro {
        /// Experiment name; omit to list the registry.
        name: Option<String>,
    },
}

/// Input of `thm41`: index maps over axis 1 and optional θ over axis 3.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapsJson {
    pub maps: Vec<MapJson>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapJson {
    pub h: Vec<Option<usize>>,
    pub k: Vec<Option<usize>>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub spec: Value,
    pub seed: Option<u64>,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub result: Box<RawValue>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Settings {
    grid_size: usize,
    seed: u64,
    tol_support: f64,
    tol_dual: f64,
    tol_grad: f64,
}

struct Outcome {
    checks: Vec<Check>,
    result: Box<RawValue>,
    plan: Option<(ProductSpace, Coupling)>,
    /// Plain-text lines for stdout.
    lines: Vec<String>,
    spec: Option<Value>,
    seed: Option<u64>,
}

impl Outcome {
    fn new(checks: Vec<Check>, result: &impl Serialize) -> Result<Self> {
        Ok(Outcome { checks, result: raw(result)?, plan: None, lines: Vec::new(), spec: None, seed: None })
    }

    fn with_plan(mut self, space: ProductSpace, plan: Coupling) -> Self {
        self.plan = Some((space, plan));
        self
    }
}

fn raw(v: &impl Serialize) -> Result<Box<RawValue>> {
    Ok(RawValue::from_string(serde_json::to_string_pretty(v)?)?)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error that stopped a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::Precondition(_) | Error::Json(_) | Error::Io(_) | Error::UndefinedRegion(..) => {
            EXIT_USAGE
        }
        _ => EXIT_FAILED,
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let s = Settings {
        grid_size: cli.grid_size.unwrap_or(10),
        seed: cli.seed.unwrap_or(0),
        tol_support: cli.tol_support.unwrap_or(TOL_MASS),
        tol_dual: cli.tol_dual.unwrap_or(crate::solver::TOL_DUAL),
        tol_grad: cli.tol_grad.unwrap_or(TOL_GRAD),
    };
    for (label, t) in [("tol-support", s.tol_support), ("tol-dual", s.tol_dual), ("tol-grad", s.tol_grad)] {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::arg(format!("--{label} must be positive, got {t}")));
        }
    }
    Ok(s)
}

fn execute(cli: &Cli) -> Result<i32> {
    let start = Instant::now();
    let set = settings(cli)?;
    if let Command::Repro { name: None } = &cli.command {
        for e in experiment_registry() {
            println!("{:<26} {}", e.name, e.description);
        }
        return Ok(EXIT_OK);
    }
    let out = dispatch(cli, set)?;
    let passed = out.checks.iter().all(|c| c.passed);
    let command = serde_json::to_value(&cli.command)?;
    let report = Report {
        tool: "mmot",
        version: env!("CARGO_PKG_VERSION"),
        command: command.as_object().and_then(|o| o.keys().next().cloned()).unwrap_or_else(|| command.to_string()),
        spec: out.spec.unwrap_or_else(|| json!({ "command": command, "settings": set })),
        seed: out.seed,
        passed,
        checks: out.checks,
        result: out.result,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    for line in &out.lines {
        println!("{line}");
    }
    match cli.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match (&cli.out, out.lines.is_empty()) {
                (Some(path), _) => std::fs::write(path, text)?,
                (None, true) => std::io::stdout().write_all(text.as_bytes())?,
                (None, false) => {}
            }
        }
        Format::Csv => {
            let Some((space, plan)) = &out.plan else {
                return Err(Error::arg("this command produces no coupling to export as CSV"));
            };
            write_csv(space, plan, cli.out.as_deref())?;
        }
    }
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

fn write_csv(space: &ProductSpace, plan: &Coupling, out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let (n, d) = (space.n(), space.dim());
    let mut header: Vec<String> = (1..=n).map(|i| format!("idx{i}")).collect();
    for i in 1..=n {
        header.extend((1..=d).map(|k| if d == 1 { format!("x{i}") } else { format!("x{i}_{k}") }));
    }
    header.push("mass".into());
    w.write_record(&header).map_err(csv_err)?;
    for (cell, m) in plan.entries() {
        let mut row: Vec<String> = cell.iter().map(usize::to_string).collect();
        for p in space.coords(cell) {
            row.extend(p.iter().map(f64::to_string));
        }
        row.push(format!("{m:.16e}"));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::arg(format!("cannot read {}: {e}", path.display())))
}

fn cost(name: &str) -> Result<CostModel> {
    CostModel::builtin(name)
        .ok_or_else(|| Error::arg(format!("unknown cost '{name}' (expected coulomb1d, expcos, xyz or twowell)")))
}

fn load_instance(inst: &Instance, set: Settings) -> Result<(ProductSpace, CostModel)> {
    let model = cost(&inst.cost)?;
    let space = match inst.marginals.as_slice() {
        [] => instances::uniform_grid(set.grid_size, inst.n)?,
        [one] => ProductSpace::repeated(marginal_from_json(&read(one)?)?, inst.n)?,
        many => ProductSpace::new(many.iter().map(|p| marginal_from_json(&read(p)?)).collect::<Result<_>>()?)?,
    };
    model.check_space(&space)?;
    Ok((space, model))
}

fn load_coupling(path: &Path, space: &ProductSpace) -> Result<Coupling> {
    let plan = coupling_from_json(&read(path)?, space.shape())?;
    let dev = space.marginal_deviation(&plan);
    if dev > 1e-9 {
        return Err(Error::arg(format!("coupling does not have the given marginals (deviation {dev:e})")));
    }
    Ok(plan)
}

fn dispatch(cli: &Cli, set: Settings) -> Result<Outcome> {
    match &cli.command {
        Command::Solve(inst) => {
            let (space, model) = load_instance(inst, set)?;
            let sol = solve_exact(&model, &space)?;
            let gap = duality_gap(&model, &space, &sol.plan, &sol.duals)?;
            #[derive(Serialize)]
            struct Solved {
                value: f64,
                dual_value: f64,
                duality_gap: f64,
                iterations: usize,
                coupling: CouplingJson,
                potentials: PotentialsJson,
            }
            let result = Solved {
                value: sol.primal_value,
                dual_value: sol.dual_value,
                duality_gap: gap,
                iterations: sol.iterations,
                coupling: (&sol.plan).into(),
                potentials: (&sol.duals).into(),
            };
            let checks = vec![Check::at_most("duality gap", gap.abs(), set.tol_dual)];
            Ok(Outcome::new(checks, &result)?.with_plan(space, sol.plan))
        }
        Command::Decompose { instance, coupling } => {
            let (space, _) = load_instance(instance, set)?;
            let plan = load_coupling(coupling, &space)?;
            let dec = decompose_graphs(&plan, &space)?;
            let rebuilt = dec.reconstruct(&space)?;
            let err = plan.tv_distance(&rebuilt);
            let branches: Vec<Value> = dec
                .branches
                .iter()
                .enumerate()
                .flat_map(|(x1, bs)| {
                    bs.iter().map(move |b| json!({ "x1": x1, "graph": b.label, "target": b.target, "alpha": b.alpha }))
                })
                .collect();
            let checks = vec![Check::at_most("reconstruction", err, 1e-12)];
            Outcome::new(checks, &json!({ "graph_count": dec.k, "branches": branches }))
        }
        Command::CheckMonotone { instance, coupling } => {
            let (space, model) = load_instance(instance, set)?;
            let plan = load_coupling(coupling, &space)?;
            let cells: Vec<_> = plan.support(set.tol_support).into_iter().cloned().collect();
            let v = check_c_monotone(&model, &space, &cells, TOL_MONO)?;
            let checks = vec![Check::new("support is c-monotone", v.is_empty(), format!("{} violations", v.len()))];
            let rows: Vec<Value> = v
                .iter()
                .map(|x| json!({ "first": x.first, "second": x.second, "plus": x.plus, "defect": x.defect }))
                .collect();
            Outcome::new(checks, &json!({ "support_size": cells.len(), "violations": rows }))
        }
        Command::CheckSplitting { instance, potentials, coupling } => {
            let (space, model) = load_instance(instance, set)?;
            let duals = potentials_from_json(&read(potentials)?)?;
            let rep = splitting_support(&model, &space, &duals, set.tol_support)?;
            let mut checks = Vec::new();
            if let Some(path) = coupling {
                let plan = load_coupling(path, &space)?;
                let outside = plan.support(set.tol_support).into_iter().find(|c| !rep.contains(c));
                checks.push(Check::new(
                    "coupling support inside the splitting set",
                    outside.is_none(),
                    outside.map(|c| format!("{c:?}")).unwrap_or_default(),
                ));
            }
            Outcome::new(checks, &json!({ "cells": rep.cells, "max_violation": rep.max_violation }))
        }
        Command::TwistCount { instance, potentials } => {
            let (space, model) = load_instance(instance, set)?;
            let duals = match potentials {
                Some(p) => potentials_from_json(&read(p)?)?,
                None => solve_exact(&model, &space)?.duals,
            };
            let split = splitting_support(&model, &space, &duals, set.tol_support)?;
            let twist = twist_multiplicity(&model, &split, &space, set.tol_grad)?;
            let clusters: Vec<Value> = twist
                .clusters
                .iter()
                .map(|c| json!({ "x1": c.x1, "cells": c.cells, "gradient": c.gradient }))
                .collect();
            Outcome::new(
                Vec::new(),
                &json!({
                    "splitting_set_size": split.cells.len(),
                    "max_multiplicity": twist.max_multiplicity,
                    "witness": twist.witness,
                    "excluded": twist.excluded,
                    "clusters": clusters,
                }),
            )
        }
        Command::Signature(s) => signature_command(s, set),
        Command::Criterion3(s) => criterion_command(s, set),
        Command::Extremal { instance, coupling } => {
            let (space, _) = load_instance(instance, set)?;
            let plan = load_coupling(coupling, &space)?;
            let cert = is_vertex(&plan, &space)?;
            let composed = if space.n() == 3 { Some(lemma_trip_check(&plan, &space)?) } else { None };
            let mut checks = Vec::new();
            if composed == Some(true) {
                checks.push(Check::new("composed check implies vertex", cert.is_extremal, ""));
            }
            Outcome::new(
                checks,
                &json!({
                    "is_extremal": cert.is_extremal,
                    "kernel_direction": cert.kernel_direction.map(|d| d.into_iter().map(|(c, v)| json!({ "idx": c, "value": v })).collect::<Vec<_>>()),
                    "composed_check": composed,
                }),
            )
        }
        Command::Thm41 { instance, maps } => {
            let (space, _) = load_instance(instance, set)?;
            let input: MapsJson = serde_json::from_str(&read(maps)?)?;
            let maps: Vec<GraphMap> = input.maps.into_iter().map(|m| GraphMap { h: m.h, k: m.k }).collect();
            let rep = check_thm41(&space, &maps, input.theta.as_deref())?;
            let checks = vec![
                Check::new("hypothesis (i)", rep.hypothesis_i, ""),
                Check::new("hypothesis (ii)", rep.hypothesis_ii, ""),
                Check::new("hypothesis (iii)", rep.hypothesis_iii, ""),
            ];
            Outcome::new(
                checks,
                &json!({
                    "theta": rep.theta,
                    "cycle": rep.cycle,
                    "collision": rep.collision.map(|c| json!({ "maps": [c.maps.0, c.maps.1], "axis3_point": c.axis3_point })),
                    "failures": rep.failures,
                }),
            )
        }
        Command::Witness { instance, coupling, s1, s2, s3 } => {
            let (space, model) = load_instance(instance, set)?;
            let plan = load_coupling(coupling, &space)?;
            let w = symmetry_witness(&plan, &space, [s1, s2, s3], &model)?;
            let dev = space.marginal_deviation(&w.coupling);
            let mut checks = vec![
                Check::at_most("marginals preserved", dev, 1e-12),
                Check::new("differs from the plan", w.tv_distance > 1e-12, format!("{:e}", w.tv_distance)),
            ];
            if model.is_permutation_symmetric() {
                let rel = (w.cost_after - w.cost_before).abs() / (1.0 + w.cost_before.abs());
                checks.push(Check::at_most("cost preserved", rel, 1e-9));
            }
            #[derive(Serialize)]
            struct Witnessed {
                cost_before: f64,
                cost_after: f64,
                tv_distance: f64,
                coupling: CouplingJson,
            }
            let result = Witnessed {
                cost_before: w.cost_before,
                cost_after: w.cost_after,
                tv_distance: w.tv_distance,
                coupling: (&w.coupling).into(),
            };
            Ok(Outcome::new(checks, &result)?.with_plan(space, w.coupling))
        }
        Command::Repro { name } => {
            let name = name.as_deref().unwrap_or_default();
            let Some(mut spec) = find_experiment(name) else {
                let names: Vec<String> = experiment_registry().into_iter().map(|e| e.name).collect();
                return Err(Error::arg(format!("unknown experiment '{name}'; available: {}", names.join(", "))));
            };
            if let Some(g) = cli.grid_size {
                spec.grid_size = g;
            }
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            spec.tol_support = cli.tol_support.unwrap_or(spec.tol_support);
            spec.tol_dual = cli.tol_dual.unwrap_or(spec.tol_dual);
            spec.tol_grad = cli.tol_grad.unwrap_or(spec.tol_grad);
            let res = run_experiment(&spec)?;
            Ok(Outcome {
                checks: res.checks,
                result: raw(&res.result)?,
                plan: res.plan,
                lines: Vec::new(),
                seed: Some(spec.seed),
                spec: Some(serde_json::to_value(&spec)?),
            })
        }
    }
}

fn sample_points(model: &CostModel, s: &Sampling, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    Ok(match model {
        CostModel::Coulomb1D => instances::separated_samples(seed, s.samples, s.n, experiments::COULOMB_MIN_GAP),
        CostModel::ExpCos => instances::cube_samples(seed, s.samples, 3, 2),
        CostModel::ProductXYZ | CostModel::TwoWell => instances::cube_samples(seed, s.samples, 3, 1),
        _ => return Err(Error::arg("sampling needs a built-in cost")),
    })
}

fn signature_command(s: &Sampling, set: Settings) -> Result<Outcome> {
    let model = cost(&s.cost)?;
    let pts = sample_points(&model, s, set.seed)?;
    let sigs = experiments::sample_signatures(&model, &pts)?;
    let lines: Vec<String> = sigs.iter().map(|(a, b, c)| format!("({a},{b},{c})")).collect();
    let mut checks = Vec::new();
    if matches!(model, CostModel::ExpCos | CostModel::Coulomb1D) {
        let (n, d) = (pts.first().map_or(0, Vec::len), pts.first().and_then(|p| p.first()).map_or(0, Vec::len));
        let expected = (n * d - d, d, 0);
        let hits = sigs.iter().filter(|&&t| t == expected).count();
        checks.push(Check::new(
            format!("signature ({},{},{})", expected.0, expected.1, expected.2),
            hits == sigs.len(),
            format!("{hits}/{}", sigs.len()),
        ));
    }
    let mut out = Outcome::new(checks, &json!({ "points": pts, "signatures": lines }))?;
    out.lines = lines;
    out.seed = Some(set.seed);
    Ok(out)
}

fn criterion_command(s: &Sampling, set: Settings) -> Result<Outcome> {
    let model = cost(&s.cost)?;
    let pts = sample_points(&model, s, set.seed)?;
    let mut rows = Vec::new();
    let mut negative = 0;
    for p in &pts {
        let refs: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        match three_marginal_criterion(&model, &refs) {
            Ok(c) => {
                negative += usize::from(c.negative_definite);
                rows.push(json!({ "eigenvalues": c.eigenvalues, "negative_definite": c.negative_definite }));
            }
            Err(e @ Error::Singular { .. }) => rows.push(json!({ "error": e.to_string() })),
            Err(e) => return Err(e),
        }
    }
    let checks = vec![Check::new(
        "negative definite at every sample",
        negative == pts.len(),
        format!("{negative}/{}", pts.len()),
    )];
    let mut out = Outcome::new(checks, &json!({ "points": pts, "samples": rows }))?;
    out.seed = Some(set.seed);
    Ok(out)
}
