//! Experiment configuration (JSON).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use degenlab::fdm::FdmOptions;
use degenlab::geometry::{GridDescriptor, GridFunction, SlabGrid};
use degenlab::operators::{max_principle_constants, CoefficientField, CoefficientSpec};
use degenlab::probes::{band_limited_forcing, BatteryOptions};
use degenlab::spectral::SpectralOptions;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub problems: Vec<Problem>,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One boundary value problem: `A u = f` in the slab, `u = top` on the top
/// level.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub name: String,
    pub grid: GridDescriptor,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub forcing: Forcing,
    #[serde(default)]
    pub top: f64,
    pub solver: SolverSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Forcing {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// Random trigonometric polynomial seeded from the experiment seed.
    BandLimited {
        max_mode: usize,
        #[serde(default)]
        seed_offset: u64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SolverSpec {
    Spectral(SpectralOptions),
    Fdm(FdmOptions),
}

impl SolverSpec {
    pub fn method(&self) -> &'static str {
        match self {
            SolverSpec::Spectral(_) => "spectral",
            SolverSpec::Fdm(_) => "fdm",
        }
    }
}

fn default_alpha() -> f64 {
    0.5
}

fn default_tol() -> f64 {
    1e-8
}

/// Probes read the solution of the named problem. `center` holds the
/// tangential coordinates of the boundary point (default: mid-period).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    Schauder {
        problem: String,
        #[serde(default)]
        center: Option<Vec<f64>>,
        r: f64,
        r0: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        cap: Option<f64>,
    },
    Global {
        problem: String,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        k: usize,
        #[serde(default)]
        cap: Option<f64>,
    },
    Taylor {
        problem: String,
        #[serde(default)]
        center: Option<Vec<f64>>,
        radii: Vec<f64>,
        r0: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        cap: f64,
    },
    /// Seed battery on vertical refinements of the problem's grid.
    Flatness {
        problem: String,
        levels: usize,
        #[serde(default)]
        battery: BatteryOptions,
    },
    /// Battery of band-limited solutions on the problem's grid.
    Interp {
        problem: String,
        #[serde(default)]
        center: Option<Vec<f64>>,
        r0: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        eps: Vec<f64>,
        #[serde(default)]
        battery: BatteryOptions,
    },
    Xddu {
        problem: String,
        #[serde(default)]
        center: Option<Vec<f64>>,
        radii: Vec<f64>,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Re-solves the problem with the finite-difference scheme.
    Maxp {
        problem: String,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        fdm: FdmOptions,
    },
}

impl ProbeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeSpec::Schauder { .. } => "schauder",
            ProbeSpec::Global { .. } => "global",
            ProbeSpec::Taylor { .. } => "taylor",
            ProbeSpec::Flatness { .. } => "flatness",
            ProbeSpec::Interp { .. } => "interp",
            ProbeSpec::Xddu { .. } => "xddu",
            ProbeSpec::Maxp { .. } => "maxp",
        }
    }

    pub fn problem(&self) -> &str {
        match self {
            ProbeSpec::Schauder { problem, .. }
            | ProbeSpec::Global { problem, .. }
            | ProbeSpec::Taylor { problem, .. }
            | ProbeSpec::Flatness { problem, .. }
            | ProbeSpec::Interp { problem, .. }
            | ProbeSpec::Xddu { problem, .. }
            | ProbeSpec::Maxp { problem, .. } => problem,
        }
    }

    fn alpha(&self) -> Option<f64> {
        match self {
            ProbeSpec::Schauder { alpha, .. }
            | ProbeSpec::Global { alpha, .. }
            | ProbeSpec::Taylor { alpha, .. }
            | ProbeSpec::Interp { alpha, .. }
            | ProbeSpec::Xddu { alpha, .. } => Some(*alpha),
            ProbeSpec::Flatness { battery, .. } => Some(battery.alpha),
            ProbeSpec::Maxp { .. } => None,
        }
    }
}

pub const PROBE_NAMES: [&str; 7] = [
    "schauder", "global", "taylor", "flatness", "interp", "xddu", "maxp",
];

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn problem(&self, name: &str) -> Result<&Problem> {
        self.problems
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| invalid(format!("no problem named {name:?}")))
    }

    /// Checks everything that can be checked without solving, including
    /// the coefficient hypotheses on each problem's grid.
    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() {
            return Err(invalid("at least one problem is required"));
        }
        let mut names = BTreeSet::new();
        for p in &self.problems {
            if !names.insert(p.name.as_str()) {
                return Err(invalid(format!("duplicate problem name {:?}", p.name)));
            }
            if p.name.is_empty() || p.name.contains(['/', '\\']) {
                return Err(invalid(format!(
                    "problem name {:?} is not a plain file stem",
                    p.name
                )));
            }
            p.validate()?;
        }
        for probe in &self.probes {
            let p = self.problem(probe.problem())?;
            if let Some(alpha) = probe.alpha() {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(invalid(format!(
                        "{} probe: alpha = {alpha} outside (0, 1)",
                        probe.name()
                    )));
                }
            }
            match probe {
                ProbeSpec::Schauder { r, r0, center, .. } => {
                    positive("r", *r)?;
                    if r >= r0 {
                        return Err(invalid(format!(
                            "schauder probe: r = {r} must be below r0 = {r0}"
                        )));
                    }
                    check_center(center, &p.grid)?;
                }
                ProbeSpec::Taylor {
                    radii,
                    r0,
                    center,
                    cap,
                    ..
                } => {
                    positive("cap", *cap)?;
                    positive("r0", *r0)?;
                    check_radii(radii)?;
                    check_center(center, &p.grid)?;
                }
                ProbeSpec::Xddu { radii, center, .. } => {
                    check_radii(radii)?;
                    check_center(center, &p.grid)?;
                }
                ProbeSpec::Interp {
                    eps, r0, center, ..
                } => {
                    positive("r0", *r0)?;
                    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                        return Err(invalid("interp probe: eps values must lie in (0, 1)"));
                    }
                    check_center(center, &p.grid)?;
                }
                ProbeSpec::Flatness {
                    levels, battery, ..
                } => {
                    if *levels < 2 {
                        return Err(invalid("flatness probe: at least 2 refinement levels"));
                    }
                    positive("battery tolerance", battery.tolerance)?;
                }
                ProbeSpec::Maxp { tol, fdm, .. } => {
                    positive("maxp tol", *tol)?;
                    check_fdm(fdm)?;
                    let grid = p.slab()?;
                    let coeffs = p.coefficients.build(&grid)?;
                    max_principle_constants(&coeffs, &grid)?;
                    let min_c = coeffs.min_c(&grid);
                    if min_c < 0.0 {
                        return Err(invalid(format!(
                            "maxp probe: c = {min_c} < 0 on problem {:?}",
                            p.name
                        )));
                    }
                }
                ProbeSpec::Global { cap, .. } => {
                    if let Some(c) = cap {
                        positive("cap", *c)?;
                    }
                }
            }
            let needs_constant = match probe {
                ProbeSpec::Flatness { battery, .. } => !battery.seeds.is_empty(),
                ProbeSpec::Interp { .. } => true,
                _ => false,
            };
            if needs_constant && !p.coefficients_are_constant() {
                return Err(invalid(format!(
                    "{} probe needs constant coefficients (problem {:?})",
                    probe.name(),
                    p.name
                )));
            }
        }
        Ok(())
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(invalid("empty radius list"));
    }
    radii.iter().try_for_each(|&r| positive("radius", r))
}

fn check_center(center: &Option<Vec<f64>>, grid: &GridDescriptor) -> Result<()> {
    match center {
        Some(c) if c.len() != grid.d - 1 => Err(invalid(format!(
            "center needs {} tangential coordinates, got {}",
            grid.d - 1,
            c.len()
        ))),
        _ => Ok(()),
    }
}

fn check_fdm(o: &FdmOptions) -> Result<()> {
    positive("fdm tol", o.tol)?;
    if o.max_iter == 0 {
        return Err(invalid("fdm max_iter must be positive"));
    }
    Ok(())
}

impl Problem {
    pub fn slab(&self) -> Result<SlabGrid> {
        Ok(SlabGrid::try_from(self.grid.clone())?)
    }

    fn coefficients_are_constant(&self) -> bool {
        matches!(self.coefficients, CoefficientSpec::Constant { .. })
    }

    fn validate(&self) -> Result<()> {
        let grid = self.slab()?;
        let coeffs = self.coefficients.build(&grid)?;
        if coeffs.dim() != grid.dim() {
            return Err(invalid(format!(
                "problem {:?}: coefficients have dimension {}, grid {}",
                self.name,
                coeffs.dim(),
                grid.dim()
            )));
        }
        match &self.solver {
            SolverSpec::Spectral(o) => {
                positive("spectral quad_tol", o.quad_tol)?;
                if !coeffs.is_constant() {
                    return Err(invalid(format!(
                        "problem {:?}: the spectral solver needs constant coefficients",
                        self.name
                    )));
                }
                if self.top != 0.0 {
                    return Err(invalid(format!(
                        "problem {:?}: the spectral solver takes zero top data",
                        self.name
                    )));
                }
            }
            SolverSpec::Fdm(o) => check_fdm(o)?,
        }
        // the bottom-row drift must point into the slab
        let d = grid.dim();
        for n in 0..grid.level_size() {
            let x = grid.coords(n);
            let bd = coeffs.sample(&x).b[d - 1];
            if bd.is_nan() || bd <= 0.0 {
                return Err(invalid(format!(
                    "problem {:?}: b^d = {bd} at bottom node {x:?}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Grid, coefficients, forcing and top data.
    pub fn prepare(&self, seed: u64) -> Result<Prepared> {
        let grid = self.slab()?;
        let coeffs = self.coefficients.build(&grid)?;
        let f = match &self.forcing {
            Forcing::Zero => GridFunction::zeros(&grid),
            Forcing::Constant { value } => GridFunction::from_fn(&grid, |_| *value),
            Forcing::BandLimited {
                max_mode,
                seed_offset,
            } => band_limited_forcing(&grid, seed.wrapping_add(*seed_offset), *max_mode),
        };
        let top = vec![self.top; grid.level_size()];
        Ok(Prepared {
            grid,
            coeffs,
            f,
            top,
        })
    }
}

pub struct Prepared {
    pub grid: SlabGrid,
    pub coeffs: CoefficientField,
    pub f: GridFunction,
    pub top: Vec<f64>,
}
