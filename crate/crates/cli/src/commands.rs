use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use degenlab::fdm::{assemble_system, solve_slab_fdm, FdmOptions};
use degenlab::geometry::{full_grid_points, GridFunction, Point, SlabGrid};
use degenlab::holder::{ck_2alpha_norm, ck_alpha_norm, GridDerivatives, HolderOptions};
use degenlab::operators::apply_operator;
use degenlab::probes::{
    band_limited_forcing, boundary_flatness_probe, flatness_battery, global_schauder_quotient,
    interpolation_probe, max_principle_probe, schauder_quotient, summary_csv,
    taylor_remainder_probe, xd_du_holder_probe, ProbeReport,
};
use degenlab::special::{hyp1f1, hyperu, wronskian, KummerParams};
use degenlab::spectral::{solve_constant_slab, SpectralOptions};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Prepared, ProbeSpec, Problem, SolverSpec};
use crate::error::{io_err, CliError, Result};
use crate::field::{read_field, same_grid, write_field};

/// A solved problem: the field, its pointwise residual `A u - f` (zero on
/// the top level) and the solver report.
pub struct Solved {
    pub u: GridFunction,
    pub residual: Vec<f64>,
    pub report: Value,
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Core(e.into()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn pointwise_residual(p: &Prepared, u: &GridFunction) -> Result<Vec<f64>> {
    let au = apply_operator(&p.coeffs, u)?;
    let below = p.grid.n_vertical() * p.grid.level_size();
    let mut r: Vec<f64> = au
        .values()
        .iter()
        .zip(p.f.values())
        .map(|(a, f)| a - f)
        .collect();
    r[below..].iter_mut().for_each(|v| *v = 0.0);
    Ok(r)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `problem` with `solver`; `matrix` receives the finite-difference
/// system in coordinate text form.
pub fn solve(
    problem: &Problem,
    solver: &SolverSpec,
    seed: u64,
    matrix: Option<&Path>,
) -> Result<Solved> {
    let p = problem.prepare(seed)?;
    let (u, mut report) = match solver {
        SolverSpec::Spectral(opts) => {
            if matrix.is_some() {
                return Err(CliError::Config(
                    "--matrix applies to the finite-difference solver".into(),
                ));
            }
            let sol = solve_constant_slab(&p.coeffs, &p.f, opts)?;
            (
                sol.u,
                serde_json::to_value(&sol.diagnostics).map_err(|e| CliError::Core(e.into()))?,
            )
        }
        SolverSpec::Fdm(opts) => {
            let system = assemble_system(&p.coeffs, &p.f, &p.top, opts.scheme)?;
            if let Some(path) = matrix {
                write_text(path, &system.to_coordinate_text())?;
            }
            let rep = solve_slab_fdm(&system, opts)?;
            let value = serde_json::to_value(&rep).map_err(|e| CliError::Core(e.into()))?;
            (rep.u, value)
        }
    };
    let residual = pointwise_residual(&p, &u)?;
    if let Value::Object(map) = &mut report {
        map.insert("u_sup".into(), json!(u.max_abs()));
        map.insert("residual_sup".into(), json!(sup(&residual)));
    }
    let report = json!({
        "problem": problem.name,
        "method": solver.method(),
        "grid": problem.grid,
        "coefficients": p.coeffs.label(),
        "report": report,
    });
    Ok(Solved {
        u,
        residual,
        report,
    })
}

/// `solve-spectral` / `solve-fdm`: solves one problem of the config with the
/// requested method, keeping the problem's options when they match.
pub fn solve_command(
    config: &ExperimentConfig,
    problem: Option<&str>,
    method: &str,
    out: &Path,
    report: Option<&Path>,
    matrix: Option<&Path>,
) -> Result<Solved> {
    let problem = match problem {
        Some(name) => config.problem(name)?,
        None => &config.problems[0],
    };
    let solver = match (method, &problem.solver) {
        ("spectral", s @ SolverSpec::Spectral(_)) | ("fdm", s @ SolverSpec::Fdm(_)) => s.clone(),
        ("spectral", _) => SolverSpec::Spectral(SpectralOptions::default()),
        _ => SolverSpec::Fdm(FdmOptions::default()),
    };
    let mut adjusted = problem.clone();
    adjusted.solver = solver.clone();
    let mut wrapped = config.clone();
    wrapped.problems = vec![adjusted.clone()];
    wrapped.probes.clear();
    wrapped.validate()?;
    let solved = solve(&adjusted, &solver, config.seed, matrix)?;
    write_solution(out, &solved)?;
    if let Some(path) = report {
        write_text(path, &to_json(&solved.report)?)?;
    }
    Ok(solved)
}

fn write_solution(path: &Path, s: &Solved) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    write_field(path, &s.u, &[("residual", &s.residual)])
}

fn boundary_point(grid: &SlabGrid, center: &Option<Vec<f64>>) -> Result<Point> {
    let mut x = center
        .clone()
        .unwrap_or_else(|| vec![0.5 * grid.period(); grid.dim() - 1]);
    x.push(0.0);
    Ok(Point::new(x)?)
}

/// Runs one probe against the cached solutions.
pub fn run_probe(
    config: &ExperimentConfig,
    spec: &ProbeSpec,
    solutions: &mut BTreeMap<String, Solved>,
) -> Result<ProbeReport> {
    let problem = config.problem(spec.problem())?;
    if !solutions.contains_key(&problem.name)
        && !matches!(spec, ProbeSpec::Flatness { .. } | ProbeSpec::Maxp { .. })
    {
        let solved = solve(problem, &problem.solver, config.seed, None)?;
        solutions.insert(problem.name.clone(), solved);
    }
    let p = problem.prepare(config.seed)?;
    let u = solutions.get(&problem.name).map(|s| &s.u);
    let mut rep = match spec {
        ProbeSpec::Schauder {
            center,
            r,
            r0,
            alpha,
            cap,
            ..
        } => schauder_quotient(
            u.expect("solved"),
            &p.coeffs,
            &boundary_point(&p.grid, center)?,
            *r,
            *r0,
            *alpha,
            *cap,
        )?,
        ProbeSpec::Global { alpha, k, cap, .. } => {
            global_schauder_quotient(u.expect("solved"), &p.coeffs, *alpha, *k, *cap)?
        }
        ProbeSpec::Taylor {
            center,
            radii,
            r0,
            alpha,
            cap,
            ..
        } => taylor_remainder_probe(
            u.expect("solved"),
            &boundary_point(&p.grid, center)?,
            radii,
            *r0,
            *alpha,
            *cap,
        )?,
        ProbeSpec::Flatness {
            levels, battery, ..
        } => {
            if battery.seeds.is_empty() {
                let single = solve_on_refinements(problem, config.seed, *levels)?;
                boundary_flatness_probe(&single)?
            } else {
                flatness_battery(&p.coeffs, &p.grid, *levels, battery)?
            }
        }
        ProbeSpec::Interp {
            center,
            r0,
            alpha,
            eps,
            battery,
            ..
        } => {
            let functions: Vec<GridFunction> = battery
                .seeds
                .iter()
                .map(|&s| {
                    let f = band_limited_forcing(&p.grid, s, battery.max_mode);
                    Ok(solve_constant_slab(&p.coeffs, &f, &battery.spectral)?.u)
                })
                .collect::<Result<_>>()?;
            interpolation_probe(
                &functions,
                &boundary_point(&p.grid, center)?,
                *r0,
                *alpha,
                eps,
            )?
        }
        ProbeSpec::Xddu {
            center,
            radii,
            alpha,
            ..
        } => xd_du_holder_probe(
            u.expect("solved"),
            &boundary_point(&p.grid, center)?,
            radii,
            *alpha,
        )?,
        ProbeSpec::Maxp { tol, fdm, .. } => {
            max_principle_probe(&p.coeffs, &p.f, &p.top, fdm, *tol)?
        }
    };
    if let Value::Object(map) = &mut rep.metadata {
        map.insert("problem".into(), json!(problem.name));
    }
    Ok(rep)
}

/// The problem's own solver on vertical refinements of its grid.
fn solve_on_refinements(problem: &Problem, seed: u64, levels: usize) -> Result<Vec<GridFunction>> {
    let base = problem.slab()?;
    degenlab::probes::refinements(&base, levels, true)?
        .into_iter()
        .map(|g| {
            let mut p = problem.clone();
            p.grid = g.into();
            Ok(solve(&p, &p.solver, seed, None)?.u)
        })
        .collect()
}

/// Outcome of `probe`: a single report, or an array plus a CSV table.
pub fn probe_command(
    config: &ExperimentConfig,
    name: &str,
    out: &Path,
) -> Result<Vec<ProbeReport>> {
    let specs: Vec<&ProbeSpec> = config.probes.iter().filter(|p| p.name() == name).collect();
    if specs.is_empty() {
        return Err(CliError::Config(format!(
            "the config has no {name:?} probe"
        )));
    }
    let mut solutions = BTreeMap::new();
    let reports: Vec<ProbeReport> = specs
        .iter()
        .map(|s| run_probe(config, s, &mut solutions))
        .collect::<Result<_>>()?;
    if reports.len() == 1 {
        write_text(out, &reports[0].to_json()?)?;
    } else {
        write_text(out, &to_json(&reports)?)?;
        write_text(&out.with_extension("csv"), &summary_csv(&reports))?;
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::ProbesFailed(failed));
    }
    Ok(reports)
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub problems: Vec<Value>,
    pub probes: Vec<Value>,
    pub pass: bool,
}

/// Solves every problem, runs every probe and writes the artifacts into
/// `out_dir` (default: the config's `output_dir`).
pub fn run(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunSummary> {
    let dir: PathBuf = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut solutions = BTreeMap::new();
    let mut problems = Vec::new();
    for problem in &config.problems {
        let solved = solve(problem, &problem.solver, config.seed, None)?;
        let csv = format!("{}.csv", problem.name);
        let report = format!("{}.json", problem.name);
        write_solution(&dir.join(&csv), &solved)?;
        write_text(&dir.join(&report), &to_json(&solved.report)?)?;
        problems.push(json!({
            "name": problem.name,
            "method": problem.solver.method(),
            "u_sup": solved.u.max_abs(),
            "residual_sup": sup(&solved.residual),
            "solution": csv,
            "report": report,
        }));
        solutions.insert(problem.name.clone(), solved);
    }
    let mut reports = Vec::new();
    for spec in &config.probes {
        reports.push(run_probe(config, spec, &mut solutions)?);
    }
    if !reports.is_empty() {
        write_text(&dir.join("probes.json"), &to_json(&reports)?)?;
        write_text(&dir.join("probes.csv"), &summary_csv(&reports))?;
    }
    let probes: Vec<Value> = config
        .probes
        .iter()
        .zip(&reports)
        .map(|(s, r)| json!({"name": s.name(), "problem": s.problem(), "pass": r.pass, "anomaly": r.anomaly}))
        .collect();
    let summary = RunSummary {
        seed: config.seed,
        pass: reports.iter().all(|r| r.pass),
        problems,
        probes,
    };
    write_text(&dir.join("summary.json"), &to_json(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct LayerDifference {
    pub x_d: f64,
    pub sup: f64,
    pub l2: f64,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub nodes: usize,
    pub sup: f64,
    /// Riemann sum over grid cells.
    pub l2: f64,
    pub layers: Vec<LayerDifference>,
}

pub fn compare(a: &Path, b: &Path) -> Result<Comparison> {
    let (fa, fb) = (read_field(a)?, read_field(b)?);
    let grid = fa.u.grid().clone();
    if !same_grid(&grid, fb.u.grid()) {
        return Err(CliError::Config(format!(
            "grid mismatch between {} and {}",
            a.display(),
            b.display()
        )));
    }
    let diff = fa.u.zip_with(&fb.u, |p, q| p - q)?;
    let cell = grid.h_tangential().powi(grid.dim() as i32 - 1) * grid.h_vertical();
    let layers: Vec<LayerDifference> = (0..grid.levels())
        .map(|j| {
            let v = diff.level(j);
            LayerDifference {
                x_d: grid.x_d(j),
                sup: sup(v),
                l2: (v.iter().map(|x| x * x).sum::<f64>()
                    * grid.h_tangential().powi(grid.dim() as i32 - 1))
                .sqrt(),
            }
        })
        .collect();
    Ok(Comparison {
        nodes: grid.node_count(),
        sup: diff.max_abs(),
        l2: (diff.values().iter().map(|x| x * x).sum::<f64>() * cell).sqrt(),
        layers,
    })
}

/// Weighted Hölder norm of a CSV field over all grid nodes, with derivatives
/// from the grid stencils. `two_plus` selects the `C^{k,2+alpha}_s` norm.
pub fn norms(
    path: &Path,
    opts: &HolderOptions,
    two_plus: bool,
) -> Result<degenlab::holder::HolderReport> {
    let field = read_field(path)?;
    let points = full_grid_points(field.u.grid());
    let src = GridDerivatives::new(&field.u);
    Ok(if two_plus {
        ck_2alpha_norm(&src, &points, opts)?
    } else {
        ck_alpha_norm(&src, &points, opts)?
    })
}

/// `M(a, b, y)`, `U(a, b, y)` and their Wronskian.
pub fn kummer_eval(a_re: f64, a_im: f64, b: f64, y: f64) -> Result<Value> {
    let a = Complex64::new(a_re, a_im);
    let m = hyp1f1(a, b, y)?;
    let u = hyperu(a, b, y)?;
    let w = wronskian(&KummerParams::new(a, b)?, y)?;
    let pair = |z: Complex64| json!([z.re, z.im]);
    Ok(json!({
        "a": [a_re, a_im],
        "b": b,
        "y": y,
        "M": pair(m.value),
        "M_rel_error": m.rel_error,
        "U": pair(u.value),
        "U_rel_error": u.rel_error,
        "W": pair(w),
    }))
}
