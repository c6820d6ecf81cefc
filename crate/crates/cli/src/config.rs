//! Run configuration: a TOML document with one table per pipeline.
//!
//! ```toml
//! command = "contact"          # verify-wulff | solve | barrier-check | contact | rigidity
//! seed = 7
//!
//! [integrand]
//! family = "ellipsoidal"       # isotropic | ellipsoidal | perturbed-isotropic
//! q = [[1.2, 0.1, 0.0], [0.1, 1.0, 0.0], [0.0, 0.0, 0.9]]
//!
//! [contact]
//! deltas = [0.1, 0.05, 0.025]
//! ```
//!
//! Every table rejects unknown keys. Only the table named by `command` is
//! used; the others fall back to their defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wulffgraph::calibration::ExcisionOptions;
use wulffgraph::contact::ContactOptions;
use wulffgraph::graph_pde::SolveOptions;
use wulffgraph::grid::{Domain, GridSpec};
use wulffgraph::rigidity::{ExperimentOptions, FarData, HalfSpaceSetup, Linear, Case};
use wulffgraph::wulff::{AnisotropyIntegrand, Family, IdentityTolerances};

/// Smallest number of grid nodes allowed along each axis.
pub const MIN_NODES_PER_AXIS: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyWulff,
    Solve,
    BarrierCheck,
    Contact,
    Rigidity,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyWulff => "verify-wulff",
            Command::Solve => "solve",
            Command::BarrierCheck => "barrier-check",
            Command::Contact => "contact",
            Command::Rigidity => "rigidity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrand: IntegrandConfig,
    #[serde(default)]
    pub verify_wulff: VerifyWulffConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub rigidity: RigidityConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Isotropic,
    Ellipsoidal,
    PerturbedIsotropic,
}

/// Integrand on `ℝ³`. `negate = true` replaces `K` by `−K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandConfig {
    pub family: FamilyName,
    pub q: Option<Vec<Vec<f64>>>,
    pub amplitude: Option<f64>,
    pub wavenumber: Option<f64>,
    pub phase: Option<f64>,
    #[serde(default)]
    pub negate: bool,
}

impl Default for IntegrandConfig {
    fn default() -> Self {
        Self {
            family: FamilyName::Isotropic,
            q: None,
            amplitude: None,
            wavenumber: None,
            phase: None,
            negate: false,
        }
    }
}

impl IntegrandConfig {
    pub fn family(&self) -> Result<Family, (String, String)> {
        let unused = |key: &str, present: bool| -> Result<(), (String, String)> {
            if present {
                Err((key.to_string(), format!("`{key}` does not apply to this family")))
            } else {
                Ok(())
            }
        };
        match self.family {
            FamilyName::Isotropic => {
                unused("q", self.q.is_some())?;
                unused("amplitude", self.amplitude.is_some())?;
                unused("wavenumber", self.wavenumber.is_some())?;
                unused("phase", self.phase.is_some())?;
                Ok(Family::Isotropic)
            }
            FamilyName::Ellipsoidal => {
                unused("amplitude", self.amplitude.is_some())?;
                unused("wavenumber", self.wavenumber.is_some())?;
                unused("phase", self.phase.is_some())?;
                let q = self.q.clone().ok_or_else(|| ("q".to_string(), "ellipsoidal integrands need `q`".to_string()))?;
                Ok(Family::Ellipsoidal { q })
            }
            FamilyName::PerturbedIsotropic => {
                unused("q", self.q.is_some())?;
                let need = |key: &str, v: Option<f64>| v.ok_or_else(|| (key.to_string(), format!("perturbed integrands need `{key}`")));
                Ok(Family::PerturbedIsotropic {
                    amplitude: need("amplitude", self.amplitude)?,
                    wavenumber: need("wavenumber", self.wavenumber)?,
                    phase: self.phase.unwrap_or(0.0),
                })
            }
        }
    }

    pub fn build(&self) -> Result<AnisotropyIntegrand, (String, String)> {
        let family = self.family()?;
        let phi = AnisotropyIntegrand::from_family(3, &family).map_err(|e| ("family".to_string(), e.to_string()))?;
        Ok(if self.negate { phi.negated() } else { phi })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyWulffConfig {
    /// Directions `b` (also the lattice for the pointwise identities).
    pub b_samples: usize,
    /// Probes `a` for the calibration inequality.
    pub a_samples: usize,
    /// Extra ellipsoidal integrands with random SPD matrices drawn from the seed.
    pub random_ellipsoids: usize,
    pub tolerances: IdentityTolerances,
}

impl Default for VerifyWulffConfig {
    fn default() -> Self {
        Self {
            b_samples: 500,
            a_samples: 100,
            random_ellipsoids: 0,
            tolerances: IdentityTolerances::default(),
        }
    }
}

/// Boundary data for the `solve` pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// `slope·x + constant`; the affine function is the exact solution.
    Affine { slope: [f64; 2], constant: f64 },
    /// `ln cos x₁ − ln cos x₂`, an exact isotropic solution on `(−π/2, π/2)²`.
    Scherk,
    /// `c₀x₁ + c₁x₂ + c₂ sin(1.3x₁ + 0.7x₂) + c₃x₁x₂ + c₄x₁ cos 2x₂`.
    Smooth { coefficients: [f64; 5] },
}

impl DataSpec {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match self {
            DataSpec::Affine { slope, constant } => constant + slope[0] * p[0] + slope[1] * p[1],
            DataSpec::Scherk => p[0].cos().ln() - p[1].cos().ln(),
            DataSpec::Smooth { coefficients: c } => {
                c[0] * p[0] + c[1] * p[1] + c[2] * (1.3 * p[0] + 0.7 * p[1]).sin() + c[3] * p[0] * p[1] + c[4] * (2.0 * p[1]).cos() * p[0]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub domain: Domain,
    pub h: f64,
    pub data: DataSpec,
    pub solver: SolveOptions,
    /// Graph file (CSV or WGRF) on the same grid used as the initial iterate.
    pub initial_guess: Option<PathBuf>,
    /// Random zero-boundary competitors audited against the solution.
    pub competitors: usize,
    /// Nodes closer than this to `∂Ω` are left out of the divergence check
    /// (`0` checks every interior node).
    pub divergence_margin: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Rectangle {
                x_min: -1.0,
                x_max: 1.0,
                y_min: -1.0,
                y_max: 1.0,
            },
            h: 1.0 / 32.0,
            data: DataSpec::Affine {
                slope: [0.3, -0.2],
                constant: 0.1,
            },
            solver: SolveOptions::default(),
            initial_guess: None,
            competitors: 20,
            divergence_margin: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierConfig {
    /// Pucci parameter; defaults to the integrand's ellipticity ratio for
    /// gradients up to 1.
    pub lambda: Option<f64>,
    pub n: usize,
    pub delta: f64,
    pub sweep_radii: usize,
    /// `λ` values for which the numeric exponent is compared with `M + 1 > (n − 1)/λ²`.
    pub consistency_lambdas: Vec<f64>,
    /// Expected exponent, checked when given.
    pub expect_exponent: Option<f64>,
    /// Grid spacing on `[−1, 1]²` for the `ε₀` ladder; `0` skips the ladder.
    pub ladder_h: f64,
    pub max_rungs: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            n: 2,
            delta: 0.1,
            sweep_radii: 1000,
            consistency_lambdas: vec![0.3, 0.5, 0.8],
            expect_exponent: None,
            ladder_h: 0.005,
            max_rungs: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactConfig {
    /// Grid spacing of the pinched test surface; `1/h` must be an integer.
    pub h: f64,
    pub deltas: Vec<f64>,
    /// Center height `ε = epsilon_factor · δ^{3/2}`.
    pub epsilon_factor: f64,
    pub c2: f64,
    pub c3: Option<f64>,
    pub rim_slope: f64,
    /// Accepted range of `deficit / δ^{1/2}`.
    pub band: [f64; 2],
    /// Smallest accepted exponent of the deficit in `δ` (needs two or more `δ`).
    pub min_exponent: f64,
    /// Also run the flat surface, which must give zero deficit and unit determinants.
    pub flat_check: bool,
    pub solver: SolveOptions,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            h: 1.0 / 64.0,
            deltas: vec![0.05],
            epsilon_factor: 0.5,
            c2: 1.0,
            c3: None,
            rim_slope: 5.0,
            band: [0.0, 2.0],
            min_exponent: 0.45,
            flat_check: true,
            solver: SolveOptions::default(),
        }
    }
}

impl ContactConfig {
    pub fn options(&self, delta: f64) -> ContactOptions {
        ContactOptions {
            delta,
            c2: self.c2,
            c3: self.c3,
            rim_slope: self.rim_slope,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcisionConfig {
    pub height: f64,
    pub width: f64,
    pub h: f64,
    pub spacing: f64,
    pub options: ExcisionOptions,
}

impl Default for ExcisionConfig {
    fn default() -> Self {
        Self {
            height: 4.0,
            width: 0.002,
            h: 0.125,
            spacing: 1.0 / 256.0,
            options: ExcisionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigidityConfig {
    pub setup: HalfSpaceSetup,
    pub radii: Vec<f64>,
    pub options: ExperimentOptions,
    /// Fail unless the Hopf improvement certifies at every scale.
    pub require_hopf: bool,
    pub excision: Option<ExcisionConfig>,
}

impl Default for RigidityConfig {
    fn default() -> Self {
        Self {
            setup: HalfSpaceSetup {
                case: Case::B,
                radius: 4.0,
                slab_width: 4.0,
                wedge_half_angle: std::f64::consts::FRAC_PI_4,
                boundary: Linear {
                    slope: [0.0, 0.25],
                    constant: 0.0,
                },
                far: FarData::Perturbed { a: 0.0, amplitude: 1.0 },
            },
            radii: vec![4.0, 8.0, 16.0],
            options: ExperimentOptions {
                hopf_scales: vec![],
                ..ExperimentOptions::default()
            },
            require_hopf: false,
            excision: None,
        }
    }
}

/// A configuration error anchored to a line of the source when possible.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.file, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// 1-based line of `key` inside the table `table` (dotted, `""` for the root),
/// falling back to the table header.
pub fn locate(src: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (n, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                header = Some(n + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(n + 1);
                }
            }
        }
    }
    header
}

/// Parses and validates a configuration.
pub fn parse(src: &str, file: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError {
        file: file.to_string(),
        line: e.span().map(|s| line_of_offset(src, s.start)),
        message: e.message().trim().to_string(),
    })?;
    validate(&cfg).map_err(|(table, key, message)| ConfigError {
        file: file.to_string(),
        line: locate(src, &table, &key),
        message: if table.is_empty() { format!("`{key}`: {message}") } else { format!("`{table}.{key}`: {message}") },
    })?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let file = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: file.clone(),
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    parse(&src, &file)
}

type Invalid = (String, String, String);

fn bad(table: &str, key: &str, message: impl Into<String>) -> Invalid {
    (table.to_string(), key.to_string(), message.into())
}

fn check_nodes(table: &str, key: &str, domain: &Domain, h: f64) -> Result<(), Invalid> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(bad(table, key, format!("spacing must be positive, got {h}")));
    }
    let grid = GridSpec::covering(domain, h).map_err(|e| bad(table, key, e.to_string()))?;
    if grid.nx < MIN_NODES_PER_AXIS || grid.ny < MIN_NODES_PER_AXIS {
        return Err(bad(
            table,
            key,
            format!("grid has {}×{} nodes; at least {MIN_NODES_PER_AXIS} per axis are required", grid.nx, grid.ny),
        ));
    }
    Ok(())
}

fn unit_square() -> Domain {
    Domain::Rectangle {
        x_min: -1.0,
        x_max: 1.0,
        y_min: -1.0,
        y_max: 1.0,
    }
}

/// Semantic checks for the table selected by `command`.
pub fn validate(cfg: &RunConfig) -> Result<(), Invalid> {
    cfg.integrand.build().map_err(|(key, msg)| bad("integrand", &key, msg))?;
    match cfg.command {
        Command::VerifyWulff => {
            let v = &cfg.verify_wulff;
            if v.b_samples == 0 || v.a_samples == 0 {
                return Err(bad("verify_wulff", "b_samples", "sample counts must be positive"));
            }
        }
        Command::Solve => {
            let s = &cfg.solve;
            if s.domain.dims() != 2 {
                return Err(bad("solve", "domain", "the solve pipeline needs a planar domain"));
            }
            check_nodes("solve", "h", &s.domain, s.h)?;
            if let Some(p) = &s.initial_guess {
                if !p.exists() {
                    return Err(bad("solve", "initial_guess", format!("{} does not exist", p.display())));
                }
            }
            if !(s.divergence_margin >= 0.0) {
                return Err(bad("solve", "divergence_margin", "must be nonnegative"));
            }
        }
        Command::BarrierCheck => {
            let b = &cfg.barrier;
            if let Some(l) = b.lambda {
                if !(l > 0.0 && l < 1.0) {
                    return Err(bad("barrier", "lambda", format!("must lie in (0, 1), got {l}")));
                }
            }
            if !(b.delta > 0.0 && b.delta < 1.0 / 3.0) {
                return Err(bad("barrier", "delta", format!("must lie in (0, 1/3), got {}", b.delta)));
            }
            if b.n == 0 || b.sweep_radii == 0 {
                return Err(bad("barrier", "n", "dimension and sweep size must be positive"));
            }
            if let Some(l) = b.consistency_lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
                return Err(bad("barrier", "consistency_lambdas", format!("{l} is not in (0, 1)")));
            }
            if b.ladder_h != 0.0 {
                if b.n != 2 {
                    return Err(bad("barrier", "ladder_h", "the ε₀ ladder runs on planar grids only (n = 2)"));
                }
                check_nodes("barrier", "ladder_h", &unit_square(), b.ladder_h)?;
            }
        }
        Command::Contact => {
            let c = &cfg.contact;
            check_nodes("contact", "h", &unit_square(), c.h)?;
            let per_unit = 1.0 / c.h;
            if (per_unit - per_unit.round()).abs() > 1e-9 {
                return Err(bad("contact", "h", "1/h must be an integer so that the origin is a node"));
            }
            if c.deltas.is_empty() {
                return Err(bad("contact", "deltas", "at least one δ is required"));
            }
            if let Some(d) = c.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0 / 3.0)) {
                return Err(bad("contact", "deltas", format!("δ = {d} is not in (0, 1/3)")));
            }
            if !(c.epsilon_factor > 0.0) {
                return Err(bad("contact", "epsilon_factor", "must be positive"));
            }
            if !(c.band[0] <= c.band[1]) {
                return Err(bad("contact", "band", "lower end exceeds upper end"));
            }
        }
        Command::Rigidity => {
            let r = &cfg.rigidity;
            r.setup.validate().map_err(|e| bad("rigidity.setup", "case", e.to_string()))?;
            if r.radii.is_empty() {
                return Err(bad("rigidity", "radii", "at least one radius is required"));
            }
            for &radius in &r.radii {
                let mut s = r.setup.clone();
                s.radius = radius;
                s.validate().map_err(|e| bad("rigidity", "radii", e.to_string()))?;
                check_nodes("rigidity.options", "h", &s.domain(), r.options.h)?;
            }
            if let Some(e) = &r.excision {
                if !(e.height > 0.0 && e.width > 0.0 && e.h > 0.0 && e.spacing > 0.0) {
                    return Err(bad("rigidity.excision", "height", "height, width, h and spacing must be positive"));
                }
            }
        }
    }
    Ok(())
}
