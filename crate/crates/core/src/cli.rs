//! Command-line front end. Every command reads an optional JSON config,
//! applies flag overrides and writes `# schema=1` CSV files to `--out`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::closed_form::{self, Boundaries, ClosedFormError};
use crate::io::{Cell, CsvTable, ParsedCsv};
use crate::model::{EquilibriumKind, GameParams, ModelError, ValidParams};
use crate::simulate::{compare_all, sim_csv, simulate, SimConfig, SimError, SimResult, Strategy};
use crate::target::{compute_boundaries_numeric, solve_leader, BoundaryGrid, LeaderGrid, LeaderSolution, TargetError};

/// Grids coarser than this many space nodes get a warning.
const COARSE_NODES: usize = 21;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "stackelberg", version, about = "Stackelberg equilibria of a leader-follower stochastic game")]
pub struct Cli {
    /// JSON file with a "params" object and optional "grid" and "sim" objects.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Monte Carlo seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form values of the analytic equilibria (values.csv).
    ClosedForms,
    /// Numerical band edges against their closed forms (boundaries.csv).
    Boundaries {
        #[arg(long, default_value_t = 201)]
        nt: usize,
        #[arg(long, default_value_t = 201)]
        nx: usize,
    },
    /// Closed-loop leader problem (surface.csv, boundaries.csv, summary.csv).
    Leader(GridArgs),
    /// Monte Carlo estimate for one equilibrium kind (sim.csv).
    Simulate(SimulateArgs),
    /// Values of every kind over a range of initial states (sweep.csv).
    Sweep(SweepArgs),
    /// Analytic values next to Monte Carlo estimates (compare.csv, sim.csv).
    Compare {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct GridArgs {
    /// Time levels of the leader grid.
    #[arg(long)]
    pub nt: Option<usize>,
    /// Space nodes across the widest slice of the band.
    #[arg(long)]
    pub nu: Option<usize>,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct SimArgs {
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Fb,
    Aol,
    Af,
    Aclm,
    Acl,
    Cl,
}

impl From<KindArg> for EquilibriumKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Fb => EquilibriumKind::FirstBest,
            KindArg::Aol => EquilibriumKind::Aol,
            KindArg::Af => EquilibriumKind::Af,
            KindArg::Aclm => EquilibriumKind::Aclm,
            KindArg::Acl => EquilibriumKind::Acl,
            KindArg::Cl => EquilibriumKind::Cl,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[command(flatten)]
    pub sim: SimArgs,
    /// ACLM gain; defaults to the largest admissible gain.
    #[arg(long)]
    pub k: Option<f64>,
    /// CL start value of the follower's promise; defaults to the optimum.
    #[arg(long)]
    pub y0: Option<f64>,
    /// Solve the CL leader problem instead of reading a prior `leader` run.
    #[arg(long)]
    pub solve: bool,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x0_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub x0_max: f64,
    /// Number of initial states, at least 2.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub n: u64,
    /// Solve the CL problem at every initial state instead of shifting one solve.
    #[arg(long)]
    pub no_shift: bool,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    params: Option<Value>,
    grid: Option<GridSection>,
    sim: Option<SimSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n_time: Option<usize>,
    n_space: Option<usize>,
    window_sigmas: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    n_paths: Option<usize>,
    n_steps: Option<usize>,
    seed: Option<u64>,
    antithetic: Option<bool>,
}

/// Resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ValidParams,
    pub leader_grid: LeaderGrid,
    pub window_sigmas: f64,
    pub sim: SimConfig,
    pub out: PathBuf,
}

/// Benchmark constants overlaid with the keys of `params`.
fn merge_params(params: Option<Value>) -> Result<GameParams, CliError> {
    let mut merged = serde_json::to_value(GameParams::benchmark()).expect("params serialise");
    if let Some(given) = params {
        let Value::Object(given) = given else {
            return Err(CliError::Config("\"params\" must be an object".into()));
        };
        let base = merged.as_object_mut().expect("object");
        for (key, value) in given {
            if !base.contains_key(&key) {
                return Err(CliError::Config(format!("unknown parameter `{key}`")));
            }
            base.insert(key, value);
        }
    }
    serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))
}

impl RunConfig {
    pub fn load(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let file: ConfigFile = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let params = merge_params(file.params)?.validate()?;
        let grid = file.grid.unwrap_or_default();
        let mut leader_grid = LeaderGrid::default();
        leader_grid.n_time = grid.n_time.unwrap_or(leader_grid.n_time);
        leader_grid.n_space = grid.n_space.unwrap_or(leader_grid.n_space);
        let s = file.sim.unwrap_or_default();
        let d = SimConfig::default();
        let sim = SimConfig {
            n_paths: s.n_paths.unwrap_or(d.n_paths),
            n_steps: s.n_steps.unwrap_or(d.n_steps),
            seed: seed.or(s.seed).unwrap_or(d.seed),
            antithetic: s.antithetic.unwrap_or(d.antithetic),
        };
        Ok(Self {
            params,
            leader_grid,
            window_sigmas: grid.window_sigmas.unwrap_or(BoundaryGrid::default().window_sigmas),
            sim,
            out: out.to_path_buf(),
        })
    }

    fn grid(&self, args: GridArgs) -> LeaderGrid {
        let mut g = self.leader_grid;
        g.n_time = args.nt.unwrap_or(g.n_time);
        g.n_space = args.nu.unwrap_or(g.n_space);
        g
    }

    fn sim(&self, args: SimArgs) -> SimConfig {
        SimConfig {
            n_paths: args.paths.unwrap_or(self.sim.n_paths),
            n_steps: args.steps.unwrap_or(self.sim.n_steps),
            antithetic: args.antithetic || self.sim.antithetic,
            ..self.sim
        }
    }

    fn write(&self, name: &str, table: &CsvTable) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        table.write(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn read(&self, name: &str) -> Result<ParsedCsv, CliError> {
        let path = self.out.join(name);
        let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        ParsedCsv::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.out, cli.seed)?;
    match cli.command {
        Command::ClosedForms => cmd_closed_forms(&cfg),
        Command::Boundaries { nt, nx } => cmd_boundaries(&cfg, nt, nx),
        Command::Leader(grid) => cmd_leader(&cfg, grid),
        Command::Simulate(args) => cmd_simulate(&cfg, &args),
        Command::Sweep(args) => cmd_sweep(&cfg, &args),
        Command::Compare { grid, sim } => cmd_compare(&cfg, grid, sim),
    }
}

fn num_or_blank(x: Option<f64>) -> Cell {
    x.map_or(Cell::Text(String::new()), Cell::Num)
}

fn status(certified: bool) -> Cell {
    if certified { "certified" } else { "not-certified" }.into()
}

pub fn cmd_closed_forms(cfg: &RunConfig) -> Result<(), CliError> {
    let mut table = CsvTable::new(&["kind", "status", "x0", "leader_value", "follower_value"]);
    for (kind, result) in closed_form::table(&cfg.params) {
        let report = result.as_ref().ok();
        match &result {
            Ok(r) => println!("{:<5} {:>12.9} {:>12.9}", kind.label(), r.leader_value, r.follower_value),
            Err(e) => println!("{:<5} not certified: {e}", kind.label()),
        }
        table.push(vec![
            kind.label().into(),
            status(report.is_some()),
            cfg.params.x0.into(),
            num_or_blank(report.map(|r| r.leader_value)),
            num_or_blank(report.map(|r| r.follower_value)),
        ]);
    }
    cfg.write("values.csv", &table)?;
    Ok(())
}

pub fn cmd_boundaries(cfg: &RunConfig, nt: usize, nx: usize) -> Result<(), CliError> {
    let grid = BoundaryGrid {
        n_time: nt,
        n_space: nx,
        window_sigmas: cfg.window_sigmas,
    };
    let nb = compute_boundaries_numeric(&cfg.params, &grid)?;
    println!("max |w - w_exact| = {:e}", nb.max_error());
    cfg.write("boundaries.csv", &nb.to_csv())?;
    Ok(())
}

fn warn_if_coarse(grid: &LeaderGrid) {
    if grid.n_space < COARSE_NODES {
        eprintln!(
            "warning: {} space nodes is a very coarse grid; expect a large discretisation error",
            grid.n_space
        );
    }
    if grid.n_time < grid.n_space {
        eprintln!(
            "warning: fewer time levels ({}) than space nodes ({}); the time error will dominate",
            grid.n_time, grid.n_space
        );
    }
}

/// Band edges at `x0` and the leader's value on them, per time level.
fn band_csv(solution: &LeaderSolution) -> CsvTable {
    let s = &solution.surface;
    let x0 = solution.x0();
    let w = &solution.boundaries;
    let mut table = CsvTable::new(&["t", "w_minus", "w_plus", "v_minus", "v_plus"]);
    for k in 0..s.grid.n_time() {
        let t = s.grid.time(k);
        let (lo, hi) = s.edge_values[k];
        table.push(vec![
            t.into(),
            w.w_minus(t, x0).into(),
            w.w_plus(t, x0).into(),
            (x0 + lo).into(),
            (x0 + hi).into(),
        ]);
    }
    table
}

pub fn cmd_leader(cfg: &RunConfig, args: GridArgs) -> Result<(), CliError> {
    let grid = cfg.grid(args);
    warn_if_coarse(&grid);
    let solution = solve_leader(&cfg.params, &grid)?;
    println!(
        "V_CL = {:.9}  y0* = {:.9}  saturated = {:.3}",
        solution.v_cl, solution.y0_star, solution.surface.stats.saturated_fraction
    );
    cfg.write("surface.csv", &solution.surface_csv())?;
    cfg.write("boundaries.csv", &band_csv(&solution))?;
    cfg.write("summary.csv", &solution.summary_csv())?;
    Ok(())
}

fn print_sim(r: &SimResult) {
    let kind = r.kind.map_or("custom", EquilibriumKind::label);
    print!(
        "{kind:<5} J_L = {:.6} ± {:.6}  J_F = {:.6} ± {:.6}",
        r.jl_mean, r.jl_se, r.jf_mean, r.jf_se
    );
    match r.gap {
        Some(g) => println!("  |Y_T - X_T| mean {:.3e} max {:.3e}", g.mean, g.max),
        None => println!(),
    }
}

pub fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<(), CliError> {
    let sim = cfg.sim(args.sim);
    let p = &cfg.params;
    let kind = EquilibriumKind::from(args.kind);
    let result = if kind == EquilibriumKind::Cl {
        let solution = if args.solve {
            let grid = cfg.grid(args.grid);
            warn_if_coarse(&grid);
            solve_leader(p, &grid)?
        } else {
            let surface = cfg.read("surface.csv").map_err(|e| {
                CliError::Usage(format!("{e}; run `leader` first or pass --solve"))
            })?;
            LeaderSolution::from_csv(p, &surface, &cfg.read("summary.csv")?)?
        };
        let policy = solution.policy();
        let y0 = args.y0.unwrap_or(solution.y0_star);
        simulate(p, Strategy::Feedback { policy: &policy, y0 }, &sim)?
    } else {
        let report = match kind {
            EquilibriumKind::FirstBest => closed_form::first_best(p)?,
            EquilibriumKind::Aol => closed_form::aol(p)?,
            EquilibriumKind::Af => closed_form::af(p)?,
            EquilibriumKind::Aclm => match args.k {
                Some(k) => closed_form::aclm(p, k)?,
                None => closed_form::aclm_optimal(p)?,
            },
            EquilibriumKind::Acl => closed_form::acl(p)?,
            EquilibriumKind::Cl => unreachable!(),
        };
        simulate(p, Strategy::Descriptor(&report.strategy), &sim)?.with_kind(kind)
    };
    print_sim(&result);
    cfg.write("sim.csv", &sim_csv(&[result]))?;
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, args: &SweepArgs) -> Result<(), CliError> {
    if !(args.x0_min <= args.x0_max) {
        return Err(CliError::Usage(format!(
            "--x0-min {} exceeds --x0-max {}",
            args.x0_min, args.x0_max
        )));
    }
    let grid = cfg.grid(args.grid);
    warn_if_coarse(&grid);
    let n = args.n as usize;
    let xs: Vec<f64> = (0..n)
        .map(|i| args.x0_min + (args.x0_max - args.x0_min) * i as f64 / (n - 1) as f64)
        .collect();
    let base = if args.no_shift { None } else { Some(solve_leader(&cfg.params, &grid)?) };
    let mut table = CsvTable::new(&["kind", "x0", "leader_value", "follower_value", "status"]);
    for &x0 in &xs {
        let p = cfg.params.with_x0(x0);
        for (kind, result) in closed_form::table(&p) {
            let report = result.ok();
            table.push(vec![
                kind.label().into(),
                x0.into(),
                num_or_blank(report.as_ref().map(|r| r.leader_value)),
                num_or_blank(report.as_ref().map(|r| r.follower_value)),
                status(report.is_some()),
            ]);
        }
        let cl = match &base {
            Some(s) => s.shifted(x0),
            None => solve_leader(&p, &grid)?,
        };
        table.push(vec![
            "CL".into(),
            x0.into(),
            cl.v_cl.into(),
            cl.v_f_cl.into(),
            status(true),
        ]);
    }
    let path = cfg.write("sweep.csv", &table)?;
    println!("{} initial states x0 in [{}, {}] -> {}", n, args.x0_min, args.x0_max, path.display());
    Ok(())
}

pub fn cmd_compare(cfg: &RunConfig, grid: GridArgs, sim: SimArgs) -> Result<(), CliError> {
    let grid = cfg.grid(grid);
    warn_if_coarse(&grid);
    let cmp = compare_all(&cfg.params, &cfg.sim(sim), &grid)?;
    let mut runs = Vec::new();
    for row in &cmp.rows {
        match (&row.report, &row.mc) {
            (Some(r), Some(mc)) => {
                println!("{:<5} analytic {:>12.6}", row.kind.label(), r.leader_value);
                print_sim(mc);
                runs.push(mc.clone());
            }
            _ => println!("{:<5} not certified: {}", row.kind.label(), row.note.as_deref().unwrap_or("")),
        }
    }
    if let Some(d) = cmp.cl_minus_aclm {
        println!("V_CL - V_ACLM = {d:.6}");
    }
    cfg.write("compare.csv", &cmp.to_csv())?;
    cfg.write("sim.csv", &sim_csv(&runs))?;
    Ok(())
}
