//! Argument parsing and command execution for the `nlgrad` binary.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nlgrad::domain::Support;
use nlgrad::io::{write_svg, write_sweep_csv};
use nlgrad::operators::nonlocal_gradient;
use nlgrad::selftest::{self, KNOWN_UNATTAINABLE};
use nlgrad::spectral::TorusTransform;
use nlgrad::variational::{
    localization_sweep, poincare_constant, PoincareMode, Reference, SweepConfig, SweepRow,
};
use nlgrad::zero_grad::{build_n_basis, smooth_n_member, CollocationSolver};
use nlgrad::{BoundaryData, DomainGrid, Error, Field, KernelTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;

const RESIDUAL_TOL: f64 = 1e-8;
const MEMBERSHIP_TOL: f64 = 1e-4;
const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "nlgrad",
    version,
    about = "Finite-horizon fractional gradients on an interval"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Endpoints of Omega.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [-3.0, 3.0])]
    pub omega: Vec<f64>,
    /// Horizon.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Plateau fraction of the cutoff.
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Cells on Omega_delta.
    #[arg(long, default_value_t = 2000)]
    pub n_cells: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional SVG line plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulates Q, the cutoff and d on the grid stencil.
    Kernel {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solves the zero-gradient boundary problem for (c, g).
    SolveC {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        c: f64,
        /// Boundary data on Gamma_delta: const:<v>, linear, or csv:<path>.
        #[arg(long, default_value = "const:-1")]
        g: GSpec,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Builds a member of N from 1 + 5 phi(x + 4) - 2 phi(x - 4).
    SmoothN {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Neumann minimizer for the cosine forcing at one s.
    Neumann {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Neumann minimizers over a list of s against the classical limit.
    Localize {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9, 0.99])]
        s_list: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Poincare constants for both constraint sets.
    Poincare {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Runs the acceptance suite.
    Selftest {
        /// Directory for the CSV artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the randomized linearity check.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Boundary data descriptor for `--g`.
#[derive(Debug, Clone, PartialEq)]
pub enum GSpec {
    Const(f64),
    Linear,
    Csv(PathBuf),
}

impl FromStr for GSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "linear" {
            Ok(Self::Linear)
        } else if let Some(v) = s.strip_prefix("const:") {
            v.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Self::Const)
                .ok_or_else(|| format!("`{v}` is not a finite number"))
        } else if let Some(p) = s.strip_prefix("csv:") {
            Ok(Self::Csv(PathBuf::from(p)))
        } else {
            Err("expected const:<v>, linear, or csv:<path>".into())
        }
    }
}

/// A usage error naming the offending flag.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Geometry after validation.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub grid: Arc<DomainGrid>,
    pub mu: f64,
}

impl Geometry {
    fn table(&self, s: f64) -> nlgrad::Result<KernelTable> {
        KernelTable::for_grid(&self.grid, self.mu, s)
    }
}

#[derive(Debug, Clone)]
pub enum Task {
    Kernel { s: f64 },
    SolveC { s: f64, c: f64, g: Vec<f64> },
    SmoothN { s: f64 },
    Neumann { s: f64 },
    Localize { s_list: Vec<f64> },
    Poincare { s: f64 },
    Selftest { seed: u64 },
}

/// A fully validated invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: Option<Geometry>,
    pub task: Task,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn check_unit(flag: &str, v: f64) -> Result<(), UsageError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(UsageError(format!(
            "--{flag} = {v} is out of range; legal range is (0, 1)"
        )))
    }
}

fn geometry(args: &GeometryArgs) -> Result<Geometry, UsageError> {
    let (a, b) = (args.omega[0], args.omega[1]);
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(UsageError(format!("--omega {a} {b}: need finite A < B")));
    }
    let half = (b - a) / 2.0;
    if !(args.delta > 0.0 && args.delta < half) {
        return Err(UsageError(format!(
            "--delta = {} is out of range; legal range is (0, (B-A)/2) = (0, {half})",
            args.delta
        )));
    }
    check_unit("mu", args.mu)?;
    let grid = DomainGrid::new(a, b, args.delta, args.n_cells)
        .map_err(|e| UsageError(format!("--n-cells = {}: {e}", args.n_cells)))?;
    Ok(Geometry {
        grid: Arc::new(grid),
        mu: args.mu,
    })
}

fn table_for(geometry: &Geometry, s: f64) -> Result<(), UsageError> {
    check_unit("s", s)?;
    geometry
        .table(s)
        .map(|_| ())
        .map_err(|e| UsageError(format!("--s = {s}: {e}")))
}

/// Reads boundary values from the last column of a CSV, one row per
/// Gamma_delta node in increasing x. A header row is allowed.
pub fn read_boundary_csv(path: &Path, expected: usize) -> Result<Vec<f64>, UsageError> {
    let bad = |msg: String| UsageError(format!("--g csv:{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let Some(field) = record.iter().next_back() else {
            continue;
        };
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => return Err(bad(format!("row {} is not finite", i + 1))),
            Err(_) if i == 0 => {}
            Err(_) => return Err(bad(format!("row {} is not a number", i + 1))),
        }
    }
    if values.len() != expected {
        return Err(bad(format!(
            "{} values, but Gamma_delta has {expected} nodes",
            values.len()
        )));
    }
    Ok(values)
}

/// Validates every flag before any computation or output.
pub fn parse_args(cli: Cli) -> Result<RunConfig, UsageError> {
    let plain = |geometry, task, output: OutputArgs| RunConfig {
        geometry: Some(geometry),
        task,
        out: output.out,
        svg: output.svg,
    };
    Ok(match cli.command {
        Command::Kernel {
            geometry: g,
            s,
            output,
        } => {
            let g = geometry(&g)?;
            table_for(&g, s)?;
            plain(g, Task::Kernel { s }, output)
        }
        Command::SolveC {
            geometry: g,
            s,
            c,
            g: spec,
            output,
        } => {
            let geo = geometry(&g)?;
            table_for(&geo, s)?;
            if !c.is_finite() {
                return Err(UsageError(format!("--c = {c} must be finite")));
            }
            let grid = &geo.grid;
            let values = match spec {
                GSpec::Const(v) => vec![v; grid.n_gamma()],
                GSpec::Linear => grid.positions(Support::GammaDelta),
                GSpec::Csv(path) => read_boundary_csv(&path, grid.n_gamma())?,
            };
            plain(geo, Task::SolveC { s, c, g: values }, output)
        }
        Command::SmoothN {
            geometry: g,
            s,
            output,
        } => {
            let g = geometry(&g)?;
            table_for(&g, s)?;
            plain(g, Task::SmoothN { s }, output)
        }
        Command::Neumann {
            geometry: g,
            s,
            output,
        } => {
            let g = geometry(&g)?;
            table_for(&g, s)?;
            plain(g, Task::Neumann { s }, output)
        }
        Command::Localize {
            geometry: g,
            s_list,
            output,
        } => {
            let g = geometry(&g)?;
            if s_list.is_empty() {
                return Err(UsageError("--s-list must not be empty".into()));
            }
            for &s in &s_list {
                check_unit("s-list", s)?;
                table_for(&g, s)?;
            }
            plain(g, Task::Localize { s_list }, output)
        }
        Command::Poincare {
            geometry: g,
            s,
            output,
        } => {
            let g = geometry(&g)?;
            table_for(&g, s)?;
            plain(g, Task::Poincare { s }, output)
        }
        Command::Selftest { out, seed } => {
            if let Some(dir) = &out {
                if dir.exists() && !dir.is_dir() {
                    return Err(UsageError(format!(
                        "--out {}: not a directory",
                        dir.display()
                    )));
                }
            }
            RunConfig {
                geometry: None,
                task: Task::Selftest { seed },
                out,
                svg: None,
            }
        }
    })
}

/// Maps a library error to an exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Residual { .. }
        | Error::NotConverged { .. }
        | Error::NotConstant(_)
        | Error::Uniqueness(_)
        | Error::RankDeficient(_) => EXIT_TOLERANCE,
        _ => EXIT_RUNTIME,
    }
}

fn create(path: &Path) -> nlgrad::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn emit_field(config: &RunConfig, field: &Field, title: &str) -> nlgrad::Result<()> {
    if let Some(path) = &config.out {
        let mut w = create(path)?;
        field.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &config.svg {
        let mut w = create(path)?;
        write_svg(&mut w, title, &field.positions(), field.values())?;
        w.flush()?;
    }
    Ok(())
}

fn emit_sweep(config: &RunConfig, rows: &[SweepRow<f64>]) -> nlgrad::Result<()> {
    if let Some(path) = &config.out {
        let mut w = create(path)?;
        write_sweep_csv(&mut w, rows)?;
        w.flush()?;
    }
    if let Some(path) = &config.svg {
        let s: Vec<f64> = rows.iter().map(|r| r.s).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
        let mut w = create(path)?;
        write_svg(&mut w, "L2 error against the classical limit", &s, &e)?;
        w.flush()?;
    }
    Ok(())
}

/// Cosine forcing with zero mean on Omega and its classical Neumann solution.
fn cosine_pair(grid: &DomainGrid) -> (impl Fn(f64) -> f64 + Sync, impl Fn(f64) -> f64 + Sync) {
    let mid = (grid.a() + grid.b()) / 2.0;
    let half = (grid.b() - grid.a()) / 2.0;
    let forcing = move |x: f64| (PI * (x - mid) / half).cos();
    let exact = move |x: f64| (half / PI).powi(2) * (PI * (x - mid) / half).cos();
    (forcing, exact)
}

fn sweep(geo: &Geometry, s_list: Vec<f64>) -> nlgrad::Result<Vec<SweepRow<f64>>> {
    let grid = &geo.grid;
    let config = SweepConfig {
        a: grid.a(),
        b: grid.b(),
        delta: grid.delta_requested(),
        mu: geo.mu,
        n_cells: grid.n_cells(),
        s_list,
    };
    let (forcing, exact) = cosine_pair(grid);
    localization_sweep(&config, &forcing, Reference::Exact(&exact))
}

fn verdict(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    }
}

fn run_kernel(config: &RunConfig, geo: &Geometry, s: f64) -> nlgrad::Result<i32> {
    let table = geo.table(s)?;
    let kernel = table.kernel();
    let r = table.radius() as isize;
    let h = table.grid_h();
    let mut xs = Vec::new();
    let mut rows = Vec::new();
    for k in (-r..=r).filter(|&k| k != 0) {
        let x = k as f64 * h;
        let q = kernel.q(x)?;
        xs.push(x);
        rows.push((x, q, table.profile().eval(x.abs()), kernel.d(x)?));
    }
    let mass = table.q_weights().iter().sum::<f64>() * h;
    if let Some(path) = &config.out {
        let mut w = create(path)?;
        writeln!(w, "x,Q,w,d")?;
        for (x, q, c, d) in &rows {
            writeln!(w, "{x:.16e},{q:.16e},{c:.16e},{d:.16e}")?;
        }
        w.flush()?;
    }
    if let Some(path) = &config.svg {
        let qs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        write_svg(create(path)?, &format!("Q for s = {s}"), &xs, &qs)?;
    }
    let ok = (mass - 1.0).abs() <= MASS_TOL;
    println!(
        "c_norm = {:.16e}, sum(Q) h = {mass:.16e}, rescale factor = {:.6}, stencil = {} cells",
        table.c_norm(),
        table.rescale_factor(),
        table.radius()
    );
    Ok(verdict(ok))
}

fn run_solve_c(
    config: &RunConfig,
    geo: &Geometry,
    s: f64,
    c: f64,
    g: &[f64],
) -> nlgrad::Result<i32> {
    let table = geo.table(s)?;
    let grid = &geo.grid;
    let data = BoundaryData::new(
        c,
        Field::new(grid.clone(), Support::GammaDelta, g.to_vec())?,
    )?;
    let solution = CollocationSolver::new(&table, grid)?.solve(&data)?;
    let d = nonlocal_gradient(&table, &solution.field)?.max_abs();
    emit_field(
        config,
        &solution.field,
        &format!("solution for c = {c}, s = {s}"),
    )?;
    println!(
        "residual = {:.3e}, max |D h| on Omega = {d:.3e}, rows = {}",
        solution.residual,
        solution.field.len()
    );
    Ok(verdict(solution.residual <= RESIDUAL_TOL))
}

fn run_smooth_n(config: &RunConfig, geo: &Geometry, s: f64) -> nlgrad::Result<i32> {
    let table = geo.table(s)?;
    let grid = &geo.grid;
    let torus = TorusTransform::for_grid(&table, grid)?;
    let v = torus.sample(|x| 1.0 + 5.0 * selftest::bump(x + 4.0) - 2.0 * selftest::bump(x - 4.0));
    let w = smooth_n_member(&torus, &v, grid)?;
    let d = nonlocal_gradient(&table, &w)?.max_abs();
    emit_field(config, &w, &format!("member of N for s = {s}"))?;
    println!(
        "max |D w| on Omega = {d:.3e}, torus modes = {}, min Re q_hat = {:.3e}",
        torus.n_modes(),
        torus.min_real_q_hat()
    );
    Ok(verdict(d <= MEMBERSHIP_TOL))
}

fn run_sweep(config: &RunConfig, geo: &Geometry, s_list: Vec<f64>) -> nlgrad::Result<i32> {
    let rows = sweep(geo, s_list)?;
    emit_sweep(config, &rows)?;
    let worst = rows.iter().map(|r| r.el_residual).fold(0.0, f64::max);
    let summary: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "s = {}: l2_error = {:.3e}, iterations = {}",
                r.s, r.l2_error, r.iterations
            )
        })
        .collect();
    println!("{}; max EL residual = {worst:.3e}", summary.join("; "));
    Ok(verdict(worst <= RESIDUAL_TOL))
}

fn run_poincare(config: &RunConfig, geo: &Geometry, s: f64) -> nlgrad::Result<i32> {
    let table = geo.table(s)?;
    let basis = build_n_basis(&table, &geo.grid)?;
    let mut estimates = Vec::new();
    for mode in [PoincareMode::ZeroTraceZeroMean, PoincareMode::Perp] {
        estimates.push((mode, poincare_constant(&basis, &table, &geo.grid, mode)?));
    }
    if let Some(path) = &config.out {
        let mut w = create(path)?;
        writeln!(w, "mode,constant,lambda_min,iterations,last_change")?;
        for (mode, e) in &estimates {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{},{:.16e}",
                mode.name(),
                e.constant,
                e.lambda_min,
                e.iterations,
                e.last_change
            )?;
        }
        w.flush()?;
    }
    let line: Vec<String> = estimates
        .iter()
        .map(|(mode, e)| {
            format!(
                "{}: C = {:.6}, lambda_min = {:.6e}, iterations = {}, last change = {:.2e}",
                mode.name(),
                e.constant,
                e.lambda_min,
                e.iterations,
                e.last_change
            )
        })
        .collect();
    println!("{}", line.join("; "));
    Ok(verdict(
        estimates
            .iter()
            .all(|(_, e)| e.constant.is_finite() && e.constant > 0.0),
    ))
}

/// Linearity of the nonlocal gradient on random data drawn from `seed`.
pub fn seeded_linearity(seed: u64) -> nlgrad::Result<(bool, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::new(DomainGrid::new(-3.0, 3.0, 1.0, 400)?);
    let s = rng.random_range(0.05..0.95);
    let table = KernelTable::for_grid(&grid, 0.5, s)?;
    let mut draw = || -> Vec<f64> {
        (0..grid.n_cells())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    };
    let u = Field::new(grid.clone(), Support::OmegaDelta, draw())?;
    let v = Field::new(grid.clone(), Support::OmegaDelta, draw())?;
    let alpha = rng.random_range(-5.0..5.0);
    let lhs = nonlocal_gradient(&table, &u.axpby(alpha, &v, 1.0))?;
    let rhs = nonlocal_gradient(&table, &u)?.axpby(alpha, &nonlocal_gradient(&table, &v)?, 1.0);
    let gap = lhs.axpby(1.0, &rhs, -1.0).max_abs() / (1.0 + rhs.max_abs());
    Ok((gap <= 1e-12, gap))
}

fn run_selftest(config: &RunConfig, seed: u64) -> nlgrad::Result<i32> {
    let report = selftest::run_all();
    for check in &report.checks {
        let note = if !check.passed && KNOWN_UNATTAINABLE.contains(&check.id) {
            " [known]"
        } else {
            ""
        };
        println!("{check}{note}");
    }
    let (linear, gap) = seeded_linearity(seed)?;
    println!(
        "[{}]    seeded linearity (seed {seed}): relative gap {gap:.2e} (tol 1e-12)",
        if linear { "PASS" } else { "FAIL" }
    );
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir)?;
        for a in &report.artifacts {
            std::fs::write(dir.join(a.name), &a.bytes)?;
        }
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!(
        "{passed}/{} criteria passed; known unattainable: {KNOWN_UNATTAINABLE:?}",
        report.checks.len()
    );
    Ok(verdict(report.passed() && linear))
}

/// Executes a validated config and returns the process exit code.
pub fn run(config: &RunConfig) -> nlgrad::Result<i32> {
    let geo = config.geometry.as_ref();
    let geo = || geo.ok_or_else(|| Error::Geometry("missing geometry".into()));
    match &config.task {
        Task::Kernel { s } => run_kernel(config, geo()?, *s),
        Task::SolveC { s, c, g } => run_solve_c(config, geo()?, *s, *c, g),
        Task::SmoothN { s } => run_smooth_n(config, geo()?, *s),
        Task::Neumann { s } => run_sweep(config, geo()?, vec![*s]),
        Task::Localize { s_list } => run_sweep(config, geo()?, s_list.clone()),
        Task::Poincare { s } => run_poincare(config, geo()?, *s),
        Task::Selftest { seed } => run_selftest(config, *seed),
    }
}

/// Caps the global thread pool from `NLGRAD_THREADS`.
pub fn configure_threads() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("NLGRAD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        UsageError(format!(
            "NLGRAD_THREADS = `{raw}` must be a positive integer"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("NLGRAD_THREADS: {e}")))
}
