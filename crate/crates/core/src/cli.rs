//! Command-line front end: flag and config-file parsing, experiment drivers
//! and artifact emission.
//!
//! Every driver writes into `output_dir` and echoes the fully resolved
//! configuration as `config.toml`, which can be passed back with `--config`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, ConservationAudit, ConvergenceTable, InfSupResult, ManufacturedCase, MinresRow, NormKind, ParamGrid,
};
use crate::assembly::{BlockSystem, DgConfig, Rhs, Spaces, assemble_block_system, assemble_rhs};
use crate::elements::{Triple, project_qh};
use crate::error::{BiotError, Result};
use crate::mesh::{Point, TriMesh};
use crate::params::{FieldScaling, PhysicalParams, ReducedParams, compose_timestep_rhs, reduce};
use crate::solver::{Solution, SolveReport, build_preconditioner, direct_solve, minres_solve};
use crate::sparse;

#[derive(Parser, Debug)]
#[command(name = "biot", version, about = "H(div)-conforming DG solver and analysis tools for the three-field Biot model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Subcommand, Debug)]
pub enum CommandArgs {
    /// Solve one static system and audit mass conservation.
    Solve(CommonArgs),
    /// Preconditioned MINRES over a parameter grid.
    Sweep(CommonArgs),
    /// Discrete inf-sup constants over meshes and a parameter grid.
    Infsup(CommonArgs),
    /// Manufactured-solution convergence table.
    Convergence(CommonArgs),
    /// Backward-Euler time stepping in physical units.
    Timestep(CommonArgs),
}

impl CommandArgs {
    fn split(self) -> (Command, CommonArgs) {
        match self {
            CommandArgs::Solve(a) => (Command::Solve, a),
            CommandArgs::Sweep(a) => (Command::Sweep, a),
            CommandArgs::Infsup(a) => (Command::Infsup, a),
            CommandArgs::Convergence(a) => (Command::Convergence, a),
            CommandArgs::Timestep(a) => (Command::Timestep, a),
        }
    }
}

/// Flags shared by all subcommands. Flags override values from `--config`.
#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mesh resolution (n x n squares, two triangles each).
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated mesh resolutions.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Element triple, e.g. `bdm1-rt0-p0`.
    #[arg(long)]
    pub triple: Option<Triple>,
    /// Norms for the inf-sup computation: `paper` or `natural`.
    #[arg(long)]
    pub norms: Option<NormKind>,
    /// Reduced lambda values.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Reduced inverse permeability values.
    #[arg(long, value_delimiter = ',')]
    pub rp_inv: Option<Vec<f64>>,
    /// Reduced storage values.
    #[arg(long, value_delimiter = ',')]
    pub alpha_p: Option<Vec<f64>>,
    /// Shear modulus (physical input).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Lamé parameter (physical input).
    #[arg(long)]
    pub lame: Option<f64>,
    /// Biot-Willis constant (physical input).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Hydraulic conductivity (physical input).
    #[arg(long)]
    pub conductivity: Option<f64>,
    /// Time-step length (physical input).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Storage coefficient (physical input).
    #[arg(long)]
    pub c_pp: Option<f64>,
    /// Interior-penalty parameter.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Relative MINRES tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Number of time steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Load data: `manufactured`, `zero` or `g=<value>` (constant g, f = 0).
    #[arg(long)]
    pub source: Option<Source>,
    /// `minres` or `direct`.
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Also estimate the preconditioned condition number (dense, small n).
    #[arg(long)]
    pub condition: bool,
    /// Write the monolithic matrix and norm blocks as Matrix Market files.
    #[arg(long)]
    pub export_matrices: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Sweep,
    Infsup,
    Convergence,
    Timestep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Infsup => "infsup",
            Command::Convergence => "convergence",
            Command::Timestep => "timestep",
        }
    }
}

/// Right-hand side data of the static or time-stepped problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source {
    /// Sources of the manufactured solution.
    Manufactured,
    Zero,
    /// `f = 0`, constant `g`.
    ConstantG(f64),
}

impl Source {
    pub fn f(&self, params: ReducedParams, x: Point) -> [f64; 2] {
        match self {
            Source::Manufactured => ManufacturedCase::new(params).f(x),
            Source::Zero | Source::ConstantG(_) => [0.0, 0.0],
        }
    }

    pub fn g(&self, params: ReducedParams, x: Point) -> f64 {
        match self {
            Source::Manufactured => ManufacturedCase::new(params).g(x),
            Source::Zero => 0.0,
            Source::ConstantG(g) => *g,
        }
    }

    fn tag(&self) -> String {
        match self {
            Source::Manufactured => "manufactured".into(),
            Source::Zero => "zero".into(),
            Source::ConstantG(g) => format!("g={g}"),
        }
    }
}

impl std::str::FromStr for Source {
    type Err = BiotError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manufactured" => Ok(Source::Manufactured),
            "zero" => Ok(Source::Zero),
            _ => s
                .strip_prefix("g=")
                .and_then(|v| v.parse().ok())
                .map(Source::ConstantG)
                .ok_or_else(|| BiotError::ConfigError(format!("unknown source `{s}` (manufactured|zero|g=<value>)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Minres,
    Direct,
}

impl std::str::FromStr for SolverKind {
    type Err = BiotError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minres" => Ok(SolverKind::Minres),
            "direct" => Ok(SolverKind::Direct),
            other => Err(BiotError::ConfigError(format!("unknown solver `{other}` (minres|direct)"))),
        }
    }
}

impl SolverKind {
    fn name(self) -> &'static str {
        match self {
            SolverKind::Minres => "minres",
            SolverKind::Direct => "direct",
        }
    }
}

/// A scalar or a list in the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Flat config-file schema. `lambda` is the physical Lamé parameter;
/// the reduced triple uses `lambda_red`, `rp_inv`, `alpha_p`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Informational in echoes; the subcommand always decides.
    pub command: Option<String>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub tau: Option<f64>,
    pub c_pp: Option<f64>,
    pub lambda_red: Option<OneOrMany>,
    pub rp_inv: Option<OneOrMany>,
    pub alpha_p: Option<OneOrMany>,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub triple: Option<String>,
    pub norms: Option<String>,
    pub eta: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub steps: Option<usize>,
    pub source: Option<String>,
    pub solver: Option<String>,
    pub condition: Option<bool>,
    pub export_matrices: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| BiotError::ConfigError(format!("{}: {e}", path.display())))
    }
}

/// Physical parameters or explicit reduced lists, never both.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamSource {
    Physical(PhysicalParams),
    Reduced(ParamGrid),
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub mesh_n: usize,
    pub n_list: Vec<usize>,
    pub triple: Triple,
    pub norms: NormKind,
    pub params: ParamSource,
    pub eta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub output_dir: PathBuf,
    pub steps: usize,
    pub source: Source,
    pub solver: SolverKind,
    pub condition: bool,
    pub export_matrices: bool,
}

impl RunConfig {
    /// Defaults for `command` with the unit reduced triple.
    pub fn new(command: Command) -> Self {
        let params = match command {
            Command::Sweep => ParamGrid::robustness(),
            _ => ParamGrid {
                lambdas: vec![1.0],
                rp_invs: vec![1.0],
                alpha_ps: vec![0.0],
            },
        };
        Self {
            command,
            mesh_n: 4,
            n_list: match command {
                Command::Convergence => vec![4, 8, 16],
                _ => vec![4],
            },
            triple: Triple::STABLE,
            norms: NormKind::Weighted,
            params: ParamSource::Reduced(params),
            eta: DgConfig::default().eta,
            tol: 1e-8,
            max_iter: 1000,
            output_dir: PathBuf::from("out"),
            steps: 1,
            source: Source::Manufactured,
            solver: SolverKind::Minres,
            condition: false,
            export_matrices: false,
        }
    }

    /// Merges flags over the optional config file and validates the result.
    pub fn resolve(command: Command, args: CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let mut cfg = Self::new(command);

        let n = args.n.or(file.n);
        let n_list = args.n_list.or(file.n_list);
        if let Some(n) = n {
            cfg.mesh_n = n;
            cfg.n_list = vec![n];
        }
        if let Some(list) = n_list {
            if n.is_some() && command != Command::Convergence {
                return Err(BiotError::ConfigError("give either n or n_list, not both".into()));
            }
            cfg.n_list = list;
            cfg.mesh_n = *cfg.n_list.last().unwrap_or(&cfg.mesh_n);
        }
        if cfg.mesh_n == 0 || cfg.n_list.is_empty() || cfg.n_list.contains(&0) {
            return Err(BiotError::ConfigError("mesh resolutions must be positive".into()));
        }
        if let Some(t) = args.triple.or(parse(&file.triple)?) {
            cfg.triple = t;
        }
        if let Some(k) = args.norms.or(parse(&file.norms)?) {
            cfg.norms = k;
        }
        if cfg.norms == NormKind::Natural && command != Command::Infsup {
            return Err(BiotError::ConfigError("natural norms are only valid for infsup".into()));
        }
        if let Some(eta) = args.eta.or(file.eta) {
            cfg.eta = DgConfig::new(eta)?.eta;
        }
        if let Some(tol) = args.tol.or(file.tol) {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(BiotError::ConfigError(format!("tol = {tol} must lie in (0, 1)")));
            }
            cfg.tol = tol;
        }
        if let Some(m) = args.max_iter.or(file.max_iter) {
            cfg.max_iter = m;
        }
        if let Some(d) = args.output_dir.or(file.output_dir) {
            cfg.output_dir = d;
        }
        if let Some(s) = args.steps.or(file.steps) {
            cfg.steps = s;
        }
        if let Some(s) = args.source.or(parse(&file.source)?) {
            cfg.source = s;
        }
        if let Some(s) = args.solver.or(parse(&file.solver)?) {
            cfg.solver = s;
        }
        cfg.condition = args.condition || file.condition.unwrap_or(false);
        cfg.export_matrices = args.export_matrices || file.export_matrices.unwrap_or(false);

        let physical = [
            ("mu", args.mu.or(file.mu)),
            ("lambda", args.lame.or(file.lambda)),
            ("alpha", args.alpha.or(file.alpha)),
            ("K", args.conductivity.or(file.k)),
            ("tau", args.tau.or(file.tau)),
            ("c_pp", args.c_pp.or(file.c_pp)),
        ];
        let lambdas = args.lambda.or(file.lambda_red.map(OneOrMany::into_vec));
        let rp_invs = args.rp_inv.or(file.rp_inv.map(OneOrMany::into_vec));
        let alpha_ps = args.alpha_p.or(file.alpha_p.map(OneOrMany::into_vec));
        let any_physical = physical.iter().any(|(_, v)| v.is_some());
        let any_reduced = lambdas.is_some() || rp_invs.is_some() || alpha_ps.is_some();
        if any_physical && any_reduced {
            return Err(BiotError::ConfigError(
                "physical and reduced parameters are mutually exclusive".into(),
            ));
        }
        if any_physical {
            let get = |name: &str| -> Result<f64> {
                physical
                    .iter()
                    .find(|(k, _)| *k == name)
                    .and_then(|(_, v)| *v)
                    .ok_or_else(|| BiotError::ConfigError(format!("physical parameter `{name}` missing")))
            };
            let phys = PhysicalParams {
                mu: get("mu")?,
                lambda: get("lambda")?,
                alpha: get("alpha")?,
                k: get("K")?,
                tau: get("tau")?,
                c_pp: get("c_pp").unwrap_or(0.0),
            };
            reduce(&phys)?;
            cfg.params = ParamSource::Physical(phys);
        } else if any_reduced {
            let default = ReducedParams::default();
            let grid = ParamGrid {
                lambdas: lambdas.unwrap_or(vec![default.lambda()]),
                rp_invs: rp_invs.unwrap_or(vec![default.rp_inv()]),
                alpha_ps: alpha_ps.unwrap_or(vec![default.alpha_p()]),
            };
            if grid.lambdas.is_empty() || grid.rp_invs.is_empty() || grid.alpha_ps.is_empty() {
                return Err(BiotError::ConfigError("parameter lists must not be empty".into()));
            }
            grid.points()?;
            cfg.params = ParamSource::Reduced(grid);
        }
        if command == Command::Timestep && !matches!(cfg.params, ParamSource::Physical(_)) {
            return Err(BiotError::ConfigError(
                "timestep needs physical parameters (mu, lambda, alpha, K, tau, c_pp)".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn dg(&self) -> DgConfig {
        DgConfig { eta: self.eta }
    }

    /// Reduced parameter points with the field scaling of each.
    pub fn reduced_points(&self) -> Result<Vec<(ReducedParams, FieldScaling)>> {
        match &self.params {
            ParamSource::Physical(p) => Ok(vec![reduce(p)?]),
            ParamSource::Reduced(grid) => Ok(grid
                .points()?
                .into_iter()
                .map(|p| (p, FieldScaling::identity()))
                .collect()),
        }
    }

    /// The single parameter point of commands that need one.
    pub fn single_point(&self) -> Result<(ReducedParams, FieldScaling)> {
        let pts = self.reduced_points()?;
        match pts.as_slice() {
            [one] => Ok(*one),
            _ => Err(BiotError::ConfigError(format!(
                "{} needs a single parameter point, got {}",
                self.command.name(),
                pts.len()
            ))),
        }
    }

    /// The flat file schema, loadable again with `--config`.
    pub fn to_file(&self) -> ConfigFile {
        let mut f = ConfigFile {
            command: Some(self.command.name().into()),
            n: Some(self.mesh_n),
            n_list: Some(self.n_list.clone()),
            triple: Some(self.triple.tag()),
            norms: Some(self.norms.name().into()),
            eta: Some(self.eta),
            tol: Some(self.tol),
            max_iter: Some(self.max_iter),
            output_dir: Some(self.output_dir.clone()),
            steps: Some(self.steps),
            source: Some(self.source.tag()),
            solver: Some(self.solver.name().into()),
            condition: Some(self.condition),
            export_matrices: Some(self.export_matrices),
            ..Default::default()
        };
        // Drop whichever of n / n_list was not the user's intent on reload.
        if self.command == Command::Infsup || self.command == Command::Convergence {
            f.n = None;
        } else {
            f.n_list = None;
        }
        match &self.params {
            ParamSource::Physical(p) => {
                f.mu = Some(p.mu);
                f.lambda = Some(p.lambda);
                f.alpha = Some(p.alpha);
                f.k = Some(p.k);
                f.tau = Some(p.tau);
                f.c_pp = Some(p.c_pp);
            }
            ParamSource::Reduced(g) => {
                f.lambda_red = Some(OneOrMany::Many(g.lambdas.clone()));
                f.rp_inv = Some(OneOrMany::Many(g.rp_invs.clone()));
                f.alpha_p = Some(OneOrMany::Many(g.alpha_ps.clone()));
            }
        }
        f
    }
}

// ---------------------------------------------------------------------------
// Drivers

/// Outcome of a single static solve.
pub struct SolveOutcome {
    pub system: BlockSystem,
    pub solution: Solution,
    pub report: SolveReport,
    pub conservation: ConservationAudit,
}

/// Solves `system` with the configured solver. Direct solves report the
/// relative residual `||b - A x|| / ||b||` as a one-entry history.
pub fn solve_system(system: &BlockSystem, solver: SolverKind, tol: f64, max_iter: usize) -> Result<(Solution, SolveReport)> {
    match solver {
        SolverKind::Minres => {
            let pre = build_preconditioner(system, &system.norms())?;
            minres_solve(system, &pre, tol, max_iter)
        }
        SolverKind::Direct => {
            let start = Instant::now();
            let sol = direct_solve(system)?;
            let mut x = sol.u.clone();
            x.extend_from_slice(&sol.v);
            x.extend_from_slice(&sol.p);
            let b = system.rhs.concat();
            let r: Vec<f64> = b.iter().zip(system.apply(&x)).map(|(b, ax)| b - ax).collect();
            let bn = sparse::dot(&b, &b).sqrt();
            let rel = if bn > 0.0 { sparse::dot(&r, &r).sqrt() / bn } else { 0.0 };
            let report = SolveReport {
                iterations: 0,
                residual_history: vec![rel],
                converged: true,
                cond_estimate: None,
                wall_time: start.elapsed().as_secs_f64(),
            };
            Ok((sol, report))
        }
    }
}

fn parse<T: std::str::FromStr<Err = BiotError>>(s: &Option<String>) -> Result<Option<T>> {
    s.as_deref().map(str::parse).transpose()
}

fn spaces_for(cfg: &RunConfig, n: usize) -> Result<Spaces> {
    Spaces::new(Arc::new(TriMesh::structured(n)), cfg.triple)
}

/// Static solve at the single configured parameter point on `mesh_n`.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveOutcome> {
    let (params, scaling) = cfg.single_point()?;
    let spaces = spaces_for(cfg, cfg.mesh_n)?;
    let source = cfg.source;
    // Sources are given in physical units and rescaled like the equations.
    let rhs = assemble_rhs(
        &spaces,
        |x| scaling.f_to_reduced(source.f(params, x)),
        |x| source.g(params, x) * scaling.g_scale,
    );
    let system = assemble_block_system(&spaces, params, cfg.dg())?.with_rhs(rhs);
    let (solution, mut report) = solve_system(&system, cfg.solver, cfg.tol, cfg.max_iter)?;
    if cfg.condition {
        report.cond_estimate = Some(crate::solver::estimate_condition(&system, &system.norms())?);
    }
    let qh_g: Vec<f64> = project_qh(|x| source.g(params, x), spaces.mesh())
        .iter()
        .map(|g| g * scaling.g_scale)
        .collect();
    let conservation = analysis::conservation_audit(&system.spaces, &solution, &qh_g, &params)?;
    Ok(SolveOutcome {
        system,
        solution,
        report,
        conservation,
    })
}

pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<MinresRow>> {
    let grid = reduced_grid(cfg)?;
    if cfg.triple != Triple::STABLE {
        return Err(BiotError::ConfigError("sweep runs the stable bdm1-rt0-p0 triple".into()));
    }
    analysis::minres_sweep(cfg.mesh_n, &grid, cfg.tol, cfg.max_iter, cfg.dg(), cfg.condition)
}

pub fn run_infsup(cfg: &RunConfig) -> Result<Vec<InfSupResult>> {
    let grid = reduced_grid(cfg)?;
    analysis::infsup_sweep(cfg.triple, cfg.norms, &cfg.n_list, &grid, cfg.dg())
}

pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceTable> {
    let (params, _) = cfg.single_point()?;
    analysis::convergence_study(params, &cfg.n_list, cfg.triple, cfg.dg())
}

fn reduced_grid(cfg: &RunConfig) -> Result<ParamGrid> {
    match &cfg.params {
        ParamSource::Reduced(g) => Ok(g.clone()),
        ParamSource::Physical(p) => {
            let (r, _) = reduce(p)?;
            Ok(ParamGrid {
                lambdas: vec![r.lambda()],
                rp_invs: vec![r.rp_inv()],
                alpha_ps: vec![r.alpha_p()],
            })
        }
    }
}

/// Previous-step fields in physical units: free displacement coefficients
/// and cell pressures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeStepState {
    pub u_prev: Vec<f64>,
    pub p_prev: Vec<f64>,
    pub step: usize,
    pub tau: f64,
}

impl TimeStepState {
    pub fn zeros(spaces: &Spaces, tau: f64) -> Self {
        Self {
            u_prev: vec![0.0; spaces.n_u()],
            p_prev: vec![0.0; spaces.n_p()],
            step: 0,
            tau,
        }
    }
}

/// One backward-Euler step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Composed continuity right-hand side per cell, physical units.
    pub g_tilde: Vec<f64>,
    pub report: SolveReport,
    pub conservation: ConservationAudit,
}

pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub state: TimeStepState,
    /// Flux of the last step in physical units.
    pub v_last: Vec<f64>,
}

/// Assembles the reduced static system of one time step: body force `f`
/// (physical) and the composed continuity data `g_tilde` (physical, per cell).
pub fn timestep_system(
    spaces: &Spaces,
    params: ReducedParams,
    scaling: &FieldScaling,
    dg: DgConfig,
    f: impl Fn(Point) -> [f64; 2],
    g_tilde: &[f64],
) -> Result<BlockSystem> {
    let mut rhs: Rhs = assemble_rhs(spaces, |x| scaling.f_to_reduced(f(x)), |_| 0.0);
    let areas = crate::assembly::cell_areas(spaces.mesh());
    rhs.p = scaling.g_to_reduced(g_tilde).iter().zip(&areas).map(|(g, a)| g * a).collect();
    Ok(assemble_block_system(spaces, params, dg)?.with_rhs(rhs))
}

/// Backward-Euler driver over the static solver with time-independent
/// sources. Each step composes the continuity data from `g` and the previous
/// fields, solves, and audits local mass conservation.
pub fn timestep_drive(cfg: &RunConfig, n_steps: usize, initial: Option<TimeStepState>) -> Result<Trajectory> {
    let ParamSource::Physical(phys) = cfg.params.clone() else {
        return Err(BiotError::ConfigError("timestep needs physical parameters".into()));
    };
    let (params, scaling) = reduce(&phys)?;
    let spaces = spaces_for(cfg, cfg.mesh_n)?;
    let mut state = initial.unwrap_or_else(|| TimeStepState::zeros(&spaces, phys.tau));
    if state.u_prev.len() != spaces.n_u() || state.p_prev.len() != spaces.n_p() {
        return Err(BiotError::DimensionMismatch(format!(
            "initial fields have {}/{} entries, spaces need {}/{}",
            state.u_prev.len(),
            state.p_prev.len(),
            spaces.n_u(),
            spaces.n_p()
        )));
    }
    let source = cfg.source;
    let g_cells = project_qh(|x| source.g(params, x), spaces.mesh());
    let mut steps = Vec::with_capacity(n_steps);
    let mut v_last = vec![0.0; spaces.n_v()];
    for _ in 0..n_steps {
        let g_tilde = compose_timestep_rhs(&g_cells, (&spaces.u, &state.u_prev), &state.p_prev, &phys)?;
        let system = timestep_system(&spaces, params, &scaling, cfg.dg(), |x| source.f(params, x), &g_tilde)?;
        let (sol, report) = solve_system(&system, cfg.solver, cfg.tol, cfg.max_iter)?;
        let conservation =
            analysis::conservation_audit(&system.spaces, &sol, &scaling.g_to_reduced(&g_tilde), &params)?;
        state.u_prev = scaling.u_to_physical(&sol.u);
        state.p_prev = scaling.p_to_physical(&sol.p);
        state.step += 1;
        v_last = scaling.v_to_physical(&sol.v);
        steps.push(StepRecord {
            step: state.step,
            g_tilde,
            report,
            conservation,
        });
    }
    Ok(Trajectory { steps, state, v_last })
}

// ---------------------------------------------------------------------------
// Artifacts

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_conservation_csv<W: Write>(audit: &ConservationAudit, mut w: W) -> std::io::Result<()> {
    writeln!(w, "cell,residual")?;
    for (k, r) in audit.residuals.iter().enumerate() {
        writeln!(w, "{k},{}", analysis::fmt_f64(*r))?;
    }
    Ok(())
}

fn export_matrices(dir: &Path, system: &BlockSystem) -> Result<()> {
    let norms = system.norms();
    for (name, m) in [
        ("matrix.mtx", system.matrix()),
        ("norm_u.mtx", norms.n_u),
        ("norm_v.mtx", norms.n_v),
        ("norm_p.mtx", norms.n_p),
    ] {
        let mut w = create(dir, name)?;
        sparse::write_matrix_market(&m, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Runs the configured driver and writes its artifacts.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir)?;
    let echo = toml::to_string(&cfg.to_file()).map_err(|e| BiotError::ConfigError(e.to_string()))?;
    write_text(dir, "config.toml", &echo)?;
    match cfg.command {
        Command::Solve => {
            let out = run_solve(cfg)?;
            write_text(dir, "solve_report.json", &out.report.to_json())?;
            out.report.write_residual_csv(create(dir, "residuals.csv")?)?;
            write_conservation_csv(&out.conservation, create(dir, "conservation.csv")?)?;
            if cfg.export_matrices {
                export_matrices(dir, &out.system)?;
            }
        }
        Command::Sweep => {
            let rows = run_sweep(cfg)?;
            analysis::write_minres_csv(&rows, create(dir, "minres.csv")?)?;
        }
        Command::Infsup => {
            let rows = run_infsup(cfg)?;
            analysis::write_infsup_csv(&rows, create(dir, "infsup.csv")?)?;
        }
        Command::Convergence => {
            let table = run_convergence(cfg)?;
            table.write_csv(create(dir, "convergence.csv")?)?;
        }
        Command::Timestep => {
            let traj = timestep_drive(cfg, cfg.steps, None)?;
            let mut w = create(dir, "timestep.csv")?;
            writeln!(w, "step,iterations,converged,conservation_max")?;
            for s in &traj.steps {
                writeln!(
                    w,
                    "{},{},{},{}",
                    s.step,
                    s.report.iterations,
                    s.report.converged,
                    analysis::fmt_f64(s.conservation.max_abs)
                )?;
                write_text(dir, &format!("step_{:04}.json", s.step), &s.report.to_json())?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Machine-readable error record printed on stderr by the binary.
pub fn error_record(err: &BiotError) -> String {
    serde_json::json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprintln!("{}", error_record(&BiotError::ConfigError(e.to_string())));
            return 2;
        }
    };
    let (command, args) = cli.command.split();
    match RunConfig::resolve(command, args).and_then(|cfg| run(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            1
        }
    }
}
