//! Command-line front end: flows, chart tests, composition/inversion,
//! jets, and the self-check suites, with deterministic CSV/JSON output.

mod workspace;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use diffk_core::contraction::{curve_problem, picard_solve};
use diffk_core::evolution::{evolve, field_flow, field_flow_trajectory, ParametricFlowSpec};
use diffk_core::fields::LieAlgebraCurve;
use diffk_core::jets::{taylor_extract, JetDescriptor};
use diffk_core::verify::{self, Suite};

use workspace::Workspace;

#[derive(Parser)]
#[command(
    name = "diffk",
    version,
    about = "Flows, group elements, and jets of boundary-fixing diffeomorphisms of compact convex bodies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the chart conditions (Jacobian, interior point, injectivity)
    /// for an element
    CheckChart {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        element: String,
        /// Interior sample count for the grid checks
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Override the distinguished interior point, e.g. "0.5,0.5"
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate `outer . inner` on seeded interior samples (CSV x -> y)
    Compose {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        outer: String,
        #[arg(long)]
        inner: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve `phi(x) = y` for one point
    InvertAt {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        element: String,
        /// Target point, e.g. "0.55" or "0.3,0.4"
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract the Taylor jet of an element around a point
    JetOf {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        element: String,
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 1e-2)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated composition of two jet files (matching mode and shape)
    JetCompose {
        #[arg(long)]
        lhs: PathBuf,
        #[arg(long)]
        rhs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compositional inverse of a unit jet file
    JetInvert {
        #[arg(long)]
        jet: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a field curve into snapshot CSVs plus diagnostics JSON
    Evolve {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long, default_value_t = 64)]
        snapshots: usize,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes <prefix>_snapNNN.csv and
        /// <prefix>_diagnostics.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Single trajectory CSV `t,y1..yn`
    Flow {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        t: f64,
        /// Parameter values for fields using p1..pm, e.g. "0.4"
        #[arg(long)]
        param: Option<String>,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Advect a seeded interior point set; one CSV per time slice
    FlowGrid {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 8)]
        slices: usize,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Output prefix; writes <prefix>_tNNN.csv and <prefix>_times.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference flow sensitivities in the parameters and the
    /// initial point (JSON matrices)
    Sensitivity {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long)]
        param: Option<String>,
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an invariant suite; nonzero exit iff a check fails
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON report to stdout instead of the summary lines
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Geometry,
    Fields,
    Contraction,
    Diffeo,
    Jets,
    Evolution,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Geometry => Suite::Geometry,
            SuiteArg::Fields => Suite::Fields,
            SuiteArg::Contraction => Suite::Contraction,
            SuiteArg::Diffeo => Suite::Diffeo,
            SuiteArg::Jets => Suite::Jets,
            SuiteArg::Evolution => Suite::Evolution,
            SuiteArg::All => Suite::All,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::CheckChart {
            workspace,
            element,
            grid,
            x0,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let phi = ws.element(&element)?;
            let x0 = x0.map(|s| parse_point(&s)).transpose()?;
            let report = phi.chart_membership(grid, x0.as_deref())?;
            let payload = serde_json::to_string_pretty(&report)? + "\n";
            emit(out.as_deref(), &payload)?;
            Ok(0)
        }
        Command::Compose {
            workspace,
            outer,
            inner,
            samples,
            seed,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let outer = ws.element(&outer)?;
            let inner = ws.element(&inner)?;
            let composed = diffk_core::diffeo::Diffeo::compose(&outer, &inner)?;
            let n = composed.body().dim();
            let mut csv = String::new();
            for j in 1..=n {
                csv.push_str(&format!("{}x{j}", if j == 1 { "" } else { "," }));
            }
            for j in 1..=n {
                csv.push_str(&format!(",y{j}"));
            }
            csv.push('\n');
            for x in composed.body().sample_interior(samples, seed) {
                let y = composed.apply(&x)?;
                csv.push_str(&csv_row(x.iter().chain(y.iter())));
            }
            emit(out.as_deref(), &csv)?;
            Ok(0)
        }
        Command::InvertAt {
            workspace,
            element,
            point,
            tol,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let phi = ws.element(&element)?;
            let y = parse_point(&point)?;
            let (x, iterations) = phi.invert_at_counted(&y, tol)?;
            let image = phi.apply(&x)?;
            let residual = diffk_core::linalg::dist(&image, &y);
            let payload = serde_json::to_string_pretty(&json!({
                "preimage": x,
                "residual": residual,
                "iterations": iterations,
            }))? + "\n";
            emit(out.as_deref(), &payload)?;
            Ok(0)
        }
        Command::JetOf {
            workspace,
            element,
            x0,
            order,
            step,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let phi = ws.element(&element)?;
            let x0 = parse_point(&x0)?;
            let extraction = taylor_extract(&phi, &x0, order, step)?;
            let payload = serde_json::to_string_pretty(&json!({
                "jet": JetDescriptor::from_double(&extraction.jet),
                "constant": extraction.constant,
                "accuracy": extraction.accuracy,
                "low_confidence_corner": extraction.low_confidence_corner,
            }))? + "\n";
            emit(out.as_deref(), &payload)?;
            Ok(0)
        }
        Command::JetCompose { lhs, rhs, out } => {
            let a = read_jet(&lhs)?;
            let b = read_jet(&rhs)?;
            let composed = match (&a, &b) {
                (JetFile::Rational(p), JetFile::Rational(q)) => {
                    JetDescriptor::from_rational(&p.compose(q)?)
                }
                (JetFile::Double(p), JetFile::Double(q)) => {
                    JetDescriptor::from_double(&p.compose(q)?)
                }
                _ => bail!("jet files must share the same mode"),
            };
            let payload = serde_json::to_string_pretty(&composed)? + "\n";
            emit(out.as_deref(), &payload)?;
            Ok(0)
        }
        Command::JetInvert { jet, out } => {
            let descriptor = match read_jet(&jet)? {
                JetFile::Rational(p) => JetDescriptor::from_rational(&p.invert()?),
                JetFile::Double(p) => JetDescriptor::from_double(&p.invert()?),
            };
            let payload = serde_json::to_string_pretty(&descriptor)? + "\n";
            emit(out.as_deref(), &payload)?;
            Ok(0)
        }
        Command::Evolve {
            workspace,
            field,
            snapshots,
            grid,
            tol,
            samples,
            seed,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let field = ws.field(&field)?;
            let curve = Arc::new(LieAlgebraCurve::new(field)?);
            let result = evolve(&curve, snapshots, grid, tol)?;
            let n_grid = grid.div_ceil(snapshots) * snapshots;
            let stride = n_grid / snapshots;
            let points = curve.body().sample_interior(samples, seed);
            // one fine trajectory per sample; snapshots read off the grid
            let mut trajectories = Vec::with_capacity(points.len());
            for x in &points {
                if curve.body().distance_to_boundary(x)? == 0.0 {
                    trajectories.push(None);
                    continue;
                }
                let problem = curve_problem(&curve, x)?;
                trajectories.push(Some(picard_solve(&problem, n_grid, tol, 400)?));
            }
            let n = curve.body().dim();
            for j in 0..result.times.len() {
                let mut csv = String::new();
                for c in 1..=n {
                    csv.push_str(&format!("{}x{c}", if c == 1 { "" } else { "," }));
                }
                for c in 1..=n {
                    csv.push_str(&format!(",y{c}"));
                }
                csv.push('\n');
                for (x, solved) in points.iter().zip(&trajectories) {
                    let y = match solved {
                        Some(s) => s.states[j * stride].clone(),
                        None => x.clone(),
                    };
                    csv.push_str(&csv_row(x.iter().chain(y.iter())));
                }
                write_atomic(&suffixed(&out, &format!("_snap{j:03}.csv")), &csv)?;
            }
            let diag = serde_json::to_string_pretty(&json!({
                "times": result.times,
                "snapshots": snapshots,
                "grid": n_grid,
                "logderiv_residual": result.logderiv_residual,
            }))? + "\n";
            write_atomic(&suffixed(&out, "_diagnostics.json"), &diag)?;
            println!(
                "wrote {} snapshots, logderiv residual {:.3e}",
                result.times.len(),
                result.logderiv_residual
            );
            Ok(0)
        }
        Command::Flow {
            workspace,
            field,
            x0,
            t0,
            t,
            param,
            grid,
            tol,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let family = ws.field_family(&field)?;
            let p = param.map(|s| parse_point(&s)).transpose()?.unwrap_or_default();
            if family.param_dim() > p.len() {
                bail!(
                    "field `{field}` needs {} parameter value(s); pass --param",
                    family.param_dim()
                );
            }
            let bound = Arc::new(family.bind(&p)?);
            let x0 = parse_point(&x0)?;
            let trajectory = field_flow_trajectory(&bound, t0, t, &x0, grid, tol)?;
            emit(out.as_deref(), &trajectory.to_csv())?;
            if let Some(out) = &out {
                let diag = serde_json::to_string_pretty(&json!({
                    "panels": trajectory.panel_diagnostics,
                    "final_state": trajectory.final_state(),
                }))? + "\n";
                write_atomic(&suffixed(out, ".diagnostics.json"), &diag)?;
            }
            Ok(0)
        }
        Command::FlowGrid {
            workspace,
            field,
            t0,
            t,
            slices,
            points,
            seed,
            grid,
            tol,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let field = ws.field(&field)?;
            if slices == 0 {
                bail!("need at least one time slice");
            }
            let n = field.body().dim();
            let mut positions = field.body().sample_interior(points, seed);
            let mut times_csv = String::from("slice,t\n");
            for j in 0..=slices {
                let s = t0 + (t - t0) * j as f64 / slices as f64;
                times_csv.push_str(&format!("{j},{s:.16e}\n"));
                if j > 0 {
                    let s_prev = t0 + (t - t0) * (j - 1) as f64 / slices as f64;
                    for pos in positions.iter_mut() {
                        *pos = field_flow(&field, s_prev, s, pos, grid, tol)?;
                    }
                }
                let mut csv = String::new();
                for c in 1..=n {
                    csv.push_str(&format!("{}y{c}", if c == 1 { "" } else { "," }));
                }
                csv.push('\n');
                for pos in &positions {
                    csv.push_str(&csv_row(pos.iter()));
                }
                write_atomic(&suffixed(&out, &format!("_t{j:03}.csv")), &csv)?;
            }
            write_atomic(&suffixed(&out, "_times.csv"), &times_csv)?;
            println!("wrote {} slices of {} points", slices + 1, positions.len());
            Ok(0)
        }
        Command::Sensitivity {
            workspace,
            field,
            param,
            x0,
            t0,
            t,
            step,
            grid,
            tol,
            out,
        } => {
            let ws = Workspace::load(&workspace)?;
            let family = ws.field_family(&field)?;
            let p = param.map(|s| parse_point(&s)).transpose()?.unwrap_or_default();
            if p.len() != family.param_dim() {
                bail!(
                    "field `{field}` has {} parameter(s); pass --param with that many values",
                    family.param_dim()
                );
            }
            // the CLI validates parameters inside a unit box around the query
            let param_box: Vec<(f64, f64)> = p.iter().map(|v| (v - 1.0, v + 1.0)).collect();
            let spec = ParametricFlowSpec::new(family, param_box, grid, tol)?;
            let x0 = parse_point(&x0)?;
            let sens = spec.flow_sensitivity(&p, t0, t, &x0, step)?;
            let payload = serde_json::to_string_pretty(&json!({
                "d_param": matrix_rows(&sens.d_param),
                "d_x0": matrix_rows(&sens.d_x0),
                "step_param": sens.step_param,
                "step_x0": sens.step_x0,
                "param_error_estimate": sens.param_error_estimate,
                "x0_error_estimate": sens.x0_error_estimate,
                "param_richardson_ratio": sens.param_richardson_ratio,
                "x0_richardson_ratio": sens.x0_richardson_ratio,
            }))? + "\n";
            emit(out.as_deref(), &payload)?;
            Ok(0)
        }
        Command::Verify { suite, out, json } => {
            let reports = verify::run_suite(suite.into());
            let all_pass = reports.iter().all(|r| r.passed);
            let payload = serde_json::to_string_pretty(&reports)? + "\n";
            if let Some(path) = &out {
                write_atomic(path, &payload)?;
            }
            if json {
                print!("{payload}");
            } else {
                for report in &reports {
                    for check in &report.checks {
                        println!(
                            "{} [{}] {}",
                            if check.passed { "PASS" } else { "FAIL" },
                            report.suite,
                            check.name
                        );
                    }
                }
            }
            Ok(if all_pass { 0 } else { 1 })
        }
    }
}

enum JetFile {
    Rational(diffk_core::jets::JetPoly<num::BigRational>),
    Double(diffk_core::jets::JetPoly<f64>),
}

fn read_jet(path: &Path) -> Result<JetFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read jet file `{}`", path.display()))?;
    let descriptor: JetDescriptor = serde_json::from_str(&text)
        .with_context(|| format!("malformed jet file `{}`", path.display()))?;
    match descriptor.mode.as_str() {
        "rational" => Ok(JetFile::Rational(descriptor.to_rational()?)),
        "double" => Ok(JetFile::Double(descriptor.to_double()?)),
        other => bail!("unknown jet mode `{other}`"),
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("invalid coordinate `{part}`"))
        })
        .collect()
}

fn csv_row<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    let mut row = String::new();
    for (i, v) in values.enumerate() {
        if i > 0 {
            row.push(',');
        }
        row.push_str(&format!("{v:.16e}"));
    }
    row.push('\n');
    row
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

/// Write to the target path, or to stdout when no path is given.
fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => {
            write_atomic(path, contents)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Atomic write: temp file in the same directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = suffixed(path, ".tmp");
    std::fs::write(&tmp, contents)
        .with_context(|| format!("cannot write `{}`", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot rename into `{}`", path.display()))?;
    Ok(())
}
