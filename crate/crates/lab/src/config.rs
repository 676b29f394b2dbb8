//! Run configuration: a TOML document with a `schema_version` field and
//! fixed blocks. Unknown keys anywhere are rejected.

use std::path::Path;
use std::sync::Arc;

use cahn_core::manifold::{Sphere, TorusGrid};
use cahn_core::solver::SolveOptions;
use cahn_core::{Field, Manifold, Mode, Potential, Torus, TorusMetric};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, LabResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub manifold: ManifoldConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    #[default]
    Torus,
    Sphere,
}

/// A Fourier mode `amplitude * cos(2 pi k.x + phase)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub k: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    #[serde(default)]
    pub kind: ManifoldKind,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    /// Row-major entries of the constant metric matrix; identity when absent.
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    /// Conformal exponent `phi` as a list of modes (torus, `d = 2`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phi: Vec<ModeConfig>,
    #[serde(rename = "R", default = "default_radius")]
    pub r: f64,
    #[serde(rename = "L", default = "default_degree")]
    pub l: usize,
}

fn default_d() -> usize {
    2
}
fn default_n() -> usize {
    16
}
fn default_radius() -> f64 {
    1.0
}
fn default_degree() -> usize {
    10
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        Self {
            kind: ManifoldKind::Torus,
            d: 2,
            n: 16,
            g: None,
            phi: Vec::new(),
            r: 1.0,
            l: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    DoubleWell,
    Polynomial,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub kind: PotentialKind,
    /// Polynomial coefficients, low to high.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(rename = "K1", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(rename = "K2", default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    /// Sample range of the growth validation.
    #[serde(default = "default_range")]
    pub range: [f64; 2],
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_range() -> [f64; 2] {
    [-10.0, 10.0]
}
fn default_samples() -> usize {
    2001
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: PotentialKind::DoubleWell,
            coefficients: None,
            p: None,
            k1: None,
            k2: None,
            range: default_range(),
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking halvings per Newton step.
    pub max_halvings: usize,
    pub polish_steps: usize,
    /// Largest augmented dimension handled densely.
    pub dense_limit: usize,
    pub flow_dt: f64,
    pub flow_steps: usize,
    /// Degeneracy threshold relative to the largest singular value.
    pub tau: f64,
    /// Smallest continuation step and bisection width.
    pub continuation_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 20,
            polish_steps: 2,
            dense_limit: cahn_core::manifold::DENSE_LIMIT,
            flow_dt: 0.5,
            flow_steps: 200,
            tau: 1e-8,
            continuation_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    #[default]
    Constant,
    Continued,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    Solve {
        eps: f64,
        #[serde(default)]
        nu: f64,
        /// Initial field as modes added to the constant `nu / vol`.
        #[serde(default)]
        init: Vec<ModeConfig>,
        /// Run the gradient flow before Newton.
        #[serde(default)]
        flow: bool,
    },
    Sweep {
        eps_min: f64,
        eps_max: f64,
        eps_step: f64,
        nu: f64,
        #[serde(default)]
        branch: Branch,
        #[serde(default)]
        init: Vec<ModeConfig>,
        #[serde(default = "default_jmax")]
        j_max: usize,
    },
    DegenerateEps {
        nu: f64,
        #[serde(default = "default_jmax")]
        j_max: usize,
    },
    CheckCalculus {
        #[serde(default = "default_calculus_samples")]
        samples: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_adjoint_pairs")]
        adjoint_pairs: usize,
    },
    ProbeGeneric {
        #[serde(default = "default_probe_samples")]
        samples: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_eps_range")]
        eps_range: [f64; 2],
        #[serde(default = "default_probe_nu")]
        nu: f64,
        #[serde(default = "default_offset")]
        openness_offset: f64,
        #[serde(default = "default_phi_amplitude")]
        phi_amplitude: f64,
        #[serde(default = "default_striped_n")]
        striped_n: usize,
        #[serde(default = "default_striped_factor")]
        striped_eps_factor: f64,
    },
    Census {
        eps: f64,
        #[serde(default)]
        nu: f64,
        #[serde(default = "default_starts")]
        starts: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_census_amplitude")]
        amplitude: f64,
        #[serde(default = "default_dedup")]
        dedup_tol: f64,
        /// Grid resolution of the census (fine enough for the oracle comparison).
        #[serde(default = "default_striped_n")]
        n: usize,
    },
    Oracle1d {
        eps: f64,
        #[serde(default)]
        nu: f64,
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default = "default_mesh")]
        mesh: usize,
        /// Torus resolution of the 2D cross-check (0 skips it).
        #[serde(default = "default_striped_n")]
        compare_n: usize,
    },
}

fn default_jmax() -> usize {
    4
}
fn default_calculus_samples() -> usize {
    50
}
fn default_adjoint_pairs() -> usize {
    100
}
fn default_probe_samples() -> usize {
    200
}
fn default_delta() -> f64 {
    0.2
}
fn default_eps_range() -> [f64; 2] {
    [0.05, 0.3]
}
fn default_probe_nu() -> f64 {
    0.1
}
fn default_offset() -> f64 {
    1e-3
}
fn default_phi_amplitude() -> f64 {
    0.05
}
fn default_striped_n() -> usize {
    32
}
fn default_striped_factor() -> f64 {
    0.9
}
fn default_starts() -> usize {
    12
}
fn default_census_amplitude() -> f64 {
    0.5
}
fn default_dedup() -> f64 {
    1e-6
}
fn default_period() -> f64 {
    1.0
}
fn default_mesh() -> usize {
    256
}

impl ExperimentConfig {
    pub fn command(&self) -> &'static str {
        match self {
            ExperimentConfig::Solve { .. } => "solve",
            ExperimentConfig::Sweep { .. } => "sweep",
            ExperimentConfig::DegenerateEps { .. } => "degenerate-eps",
            ExperimentConfig::CheckCalculus { .. } => "check-calculus",
            ExperimentConfig::ProbeGeneric { .. } => "probe-generic",
            ExperimentConfig::Census { .. } => "census",
            ExperimentConfig::Oracle1d { .. } => "oracle1d",
        }
    }

    /// Built-in experiment used when a command runs without a config block.
    pub fn default_for(command: &str) -> LabResult<Self> {
        let e1 = 1.0 / (2.0 * std::f64::consts::PI);
        Ok(match command {
            "solve" => ExperimentConfig::Solve {
                eps: 0.9 * e1,
                nu: 0.0,
                init: vec![ModeConfig {
                    k: vec![1, 0],
                    amplitude: 0.5,
                    phase: 0.0,
                }],
                flow: false,
            },
            "sweep" => ExperimentConfig::Sweep {
                eps_min: 0.10,
                eps_max: 0.20,
                eps_step: 1e-3,
                nu: 0.1,
                branch: Branch::Constant,
                init: Vec::new(),
                j_max: 4,
            },
            "degenerate-eps" => ExperimentConfig::DegenerateEps { nu: 0.1, j_max: 4 },
            "check-calculus" => ExperimentConfig::CheckCalculus {
                samples: 50,
                seed: Some(1),
                adjoint_pairs: 100,
            },
            "probe-generic" => ExperimentConfig::ProbeGeneric {
                samples: 200,
                seed: Some(1),
                delta: 0.2,
                eps_range: default_eps_range(),
                nu: 0.1,
                openness_offset: 1e-3,
                phi_amplitude: 0.05,
                striped_n: 32,
                striped_eps_factor: 0.9,
            },
            "census" => ExperimentConfig::Census {
                eps: 0.5 * e1,
                nu: 0.0,
                starts: 12,
                seed: Some(1),
                amplitude: 0.5,
                dedup_tol: 1e-6,
                n: 32,
            },
            "oracle1d" => ExperimentConfig::Oracle1d {
                eps: 0.9 * e1,
                nu: 0.0,
                period: 1.0,
                mesh: 256,
                compare_n: 32,
            },
            other => return Err(LabError::Config(format!("no experiment for command `{other}`"))),
        })
    }

    /// Applies a command-line seed to stochastic experiments.
    pub fn set_seed(&mut self, value: u64) {
        match self {
            ExperimentConfig::CheckCalculus { seed, .. }
            | ExperimentConfig::ProbeGeneric { seed, .. }
            | ExperimentConfig::Census { seed, .. } => *seed = Some(value),
            _ => {}
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ExperimentConfig::CheckCalculus { seed, .. }
            | ExperimentConfig::ProbeGeneric { seed, .. }
            | ExperimentConfig::Census { seed, .. } => *seed,
            _ => None,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            ExperimentConfig::CheckCalculus { .. } | ExperimentConfig::ProbeGeneric { .. } | ExperimentConfig::Census { .. }
        )
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            manifold: ManifoldConfig::default(),
            potential: PotentialConfig::default(),
            solver: SolverConfig::default(),
            experiment: None,
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> LabResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| LabError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(LabError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Fills in the experiment block for `command`, checking that a
    /// configured block matches it and that stochastic runs carry a seed.
    pub fn resolve(mut self, command: &str, seed: Option<u64>) -> LabResult<Self> {
        let mut exp = match self.experiment.take() {
            Some(e) if e.command() != command => {
                return Err(LabError::Config(format!(
                    "config describes a `{}` experiment but `{command}` was requested",
                    e.command()
                )))
            }
            Some(e) => e,
            None => ExperimentConfig::default_for(command)?,
        };
        if let Some(s) = seed {
            exp.set_seed(s);
        }
        if exp.is_stochastic() && exp.seed().is_none() {
            return Err(LabError::Config(format!("`{command}` is stochastic and needs a seed (config or --seed)")));
        }
        self.experiment = Some(exp);
        Ok(self)
    }

    pub fn experiment(&self) -> &ExperimentConfig {
        self.experiment.as_ref().expect("resolved config")
    }

    pub fn solve_options(&self) -> SolveOptions<f64> {
        SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            max_halvings: self.solver.max_halvings,
            polish_steps: self.solver.polish_steps,
            dense_limit: Some(self.solver.dense_limit),
        }
    }

    pub fn degeneracy_options(&self) -> cahn_core::degeneracy::DegeneracyOptions<f64> {
        cahn_core::degeneracy::DegeneracyOptions {
            tau: self.solver.tau,
            dense_limit: self.solver.dense_limit,
            ..Default::default()
        }
    }

    /// Hex SHA-256 of the canonical JSON rendering of this config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn metric_hash(&self) -> String {
        let m = &self.manifold;
        let text = serde_json::to_string(&(m.kind, m.d, &m.g, &m.phi, m.r)).expect("metric serializes");
        hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    pub fn potential(&self) -> LabResult<Potential<f64>> {
        let c = &self.potential;
        let range = (c.range[0], c.range[1]);
        let mut pot = match c.kind {
            PotentialKind::DoubleWell => {
                if c.coefficients.is_some() {
                    return Err(LabError::Config("double_well takes no coefficients".into()));
                }
                Potential::double_well()
            }
            PotentialKind::Polynomial => {
                let coeffs = c
                    .coefficients
                    .clone()
                    .ok_or_else(|| LabError::Config("polynomial potential needs `coefficients`".into()))?;
                Potential::polynomial(coeffs, c.p, range, c.samples)?
            }
        };
        if let Some(p) = c.p {
            pot.p = p;
        }
        if let Some(k) = c.k1 {
            pot.k1 = k;
        }
        if let Some(k) = c.k2 {
            pot.k2 = k;
        }
        Ok(pot)
    }

    /// The potential after the (mandatory in CLI mode) growth validation.
    pub fn validated_potential(&self) -> LabResult<(Potential<f64>, cahn_core::potential::GrowthReport<f64>)> {
        let pot = self.potential()?;
        let c = &self.potential;
        let n = match self.manifold.kind {
            ManifoldKind::Torus => self.manifold.d,
            ManifoldKind::Sphere => 2,
        };
        let report = pot.validate_growth(n, (c.range[0], c.range[1]), c.samples)?;
        if !report.ok {
            return Err(LabError::Config(format!(
                "potential violates the growth conditions on [{}, {}]: worst ratio {:.6e} at t = {}, exponent ok = {}",
                c.range[0], c.range[1], report.worst_ratio, report.worst_t, report.exponent_ok
            )));
        }
        Ok((pot, report))
    }

    pub fn manifold(&self) -> LabResult<Manifold<f64>> {
        match self.manifold.kind {
            ManifoldKind::Torus => Ok(Manifold::Torus(self.torus()?)),
            ManifoldKind::Sphere => {
                if self.manifold.g.is_some() || !self.manifold.phi.is_empty() {
                    return Err(LabError::Config("sphere metrics take no `G` or `phi`".into()));
                }
                Ok(Manifold::Sphere(Sphere::new(self.manifold.r, self.manifold.l)?))
            }
        }
    }

    pub fn torus(&self) -> LabResult<Torus<f64>> {
        self.torus_with_n(self.manifold.n)
    }

    /// The configured torus metric on an `n`-point grid.
    pub fn torus_with_n(&self, n: usize) -> LabResult<Torus<f64>> {
        let m = &self.manifold;
        if m.kind != ManifoldKind::Torus {
            return Err(LabError::Unsupported("this experiment runs on tori only".into()));
        }
        let grid = TorusGrid::new(m.d, n)?;
        let mut metric = match &m.g {
            None => TorusMetric::identity(m.d),
            Some(g) => {
                if g.len() != m.d * m.d {
                    return Err(LabError::Config(format!("`G` needs {} entries, got {}", m.d * m.d, g.len())));
                }
                TorusMetric::constant(DMatrix::from_row_slice(m.d, m.d, g))
            }
        };
        if !m.phi.is_empty() {
            metric = metric.with_phi(modes_field(&grid, &m.phi, m.d)?);
        }
        Ok(Torus::new(grid, metric)?)
    }
}

/// Field `sum_i a_i cos(2 pi k_i.x + phase_i)` on `grid`.
pub fn modes_field(grid: &Arc<TorusGrid<f64>>, modes: &[ModeConfig], d: usize) -> LabResult<Field<f64>> {
    let modes = modes
        .iter()
        .map(|m| {
            if m.k.len() != d {
                return Err(LabError::Config(format!("mode wavevector {:?} must have {d} entries", m.k)));
            }
            let mut k = [0i64; 3];
            k[..d].copy_from_slice(&m.k);
            Ok(Mode {
                wavevector: k,
                amplitude: m.amplitude,
                phase: m.phase,
            })
        })
        .collect::<LabResult<Vec<_>>>()?;
    Ok(Field::from_modes(grid, &modes)?)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> LabResult<RunConfig> {
        RunConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("schema_version = 1").unwrap();
        assert_eq!(c, RunConfig::default());
        let c = c.resolve("sweep", None).unwrap();
        assert_eq!(c.experiment().command(), "sweep");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("schema_version = 1\nbogus = 2").is_err());
        assert!(parse("schema_version = 1\n[manifold]\nNN = 16").is_err());
        assert!(parse("schema_version = 1\n[solver]\ntolerance = 1e-3").is_err());
        assert!(parse("schema_version = 1\n[experiment]\nkind = \"sweep\"\neps_min = 0.1\neps_max = 0.2\neps_step = 0.01\nnu = 0.1\nextra = 1").is_err());
        assert!(parse("schema_version = 1\n[experiment]\nkind = \"nonsense\"").is_err());
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(parse("schema_version = 2").is_err());
        assert!(parse("[manifold]\nd = 2").is_err());
    }

    #[test]
    fn experiment_block_must_match_command() {
        let c = parse("schema_version = 1\n[experiment]\nkind = \"degenerate-eps\"\nnu = 0.2").unwrap();
        assert!(c.clone().resolve("sweep", None).is_err());
        let c = c.resolve("degenerate-eps", None).unwrap();
        assert_eq!(c.experiment(), &ExperimentConfig::DegenerateEps { nu: 0.2, j_max: 4 });
    }

    #[test]
    fn stochastic_runs_need_a_seed() {
        let c = parse("schema_version = 1\n[experiment]\nkind = \"census\"\neps = 0.1").unwrap();
        assert!(c.clone().resolve("census", None).is_err());
        let c = c.resolve("census", Some(7)).unwrap();
        assert_eq!(c.experiment().seed(), Some(7));
    }

    #[test]
    fn builds_metric_and_potential() {
        let c = parse(
            "schema_version = 1\n[manifold]\nG = [4.0, 0.0, 0.0, 1.0]\n[potential]\nkind = \"polynomial\"\ncoefficients = [0.25, 0.0, -0.5, 0.0, 0.25]",
        )
        .unwrap();
        assert!((c.torus().unwrap().volume() - 2.0).abs() < 1e-15);
        let (pot, report) = c.validated_potential().unwrap();
        assert!(report.ok);
        assert!((pot.dw(0.3) - (0.027 - 0.3)).abs() < 1e-15);
        let bad = parse("schema_version = 1\n[manifold]\nG = [1.0, 0.0, 0.0]").unwrap();
        assert!(bad.torus().is_err());
    }

    #[test]
    fn hashes_are_stable() {
        let a = RunConfig::default();
        assert_eq!(a.hash(), RunConfig::default().hash());
        let mut b = a.clone();
        b.solver.tol = 1e-9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.metric_hash(), b.metric_hash());
    }
}
