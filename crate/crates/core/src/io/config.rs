//! Run configuration: JSON schema, defaults, and canonical serialization.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dfs::{Grid, SphereField};
use crate::dynamics::{
    PenaltyTreatment, SchemeOptions, SnoSystem, SokSystem, Startup, StopCriterion,
};
use crate::energetics::{SnoParams, SokParams, VolumeIntegral, DEFAULT_INV_NORM_BOUND};
use crate::error::{Error, Result};
use crate::experiments::{
    init_circle, init_from_circles, init_random_blocks, init_semi_random, init_two_circles, Model,
    SpeciesCircle,
};
use crate::io::output::read_snapshot;

pub const DEFAULT_GRID: usize = 256;
pub const DEFAULT_TAU_SOK: f64 = 1e-3;
pub const DEFAULT_TAU_SNO: f64 = 2e-4;
pub const DEFAULT_KAPPA: f64 = 2000.0;
pub const DEFAULT_M: f64 = 1000.0;
pub const DEFAULT_OMEGA_SOK: f64 = 0.15;
pub const DEFAULT_OMEGA_SNO: f64 = 0.09;
/// Default interface width in units of the mesh size `h = 2π/n_φ`.
pub const DEFAULT_EPSILON_OVER_H: f64 = 10.0;
pub const DEFAULT_BLOCK_RATIO: usize = 16;
pub const DEFAULT_RECORD_EVERY: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Sok,
    Sno,
}

fn default_ratio() -> usize {
    DEFAULT_BLOCK_RATIO
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    RandomBlocks {
        #[serde(default = "default_ratio")]
        ratio: usize,
    },
    Circle,
    TwoCircles,
    SemiRandom,
    Circles {
        circles: Vec<SpeciesCircle>,
    },
    /// Snapshot written by a previous run (path without extension).
    File {
        path: PathBuf,
    },
}

/// On-disk schema. Every key is optional; [`RunConfig::from_raw`] applies
/// defaults and rejects keys that do not belong to the chosen system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub system: Option<SystemKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_phi: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_star: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma11: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma22: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma12: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_star1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_star2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_star1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_star2: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Absent means no time cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_modified_energy: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_integral: Option<VolumeIntegral>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty: Option<PenaltyTreatment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub startup: Option<Startup>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inv_norm_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    Sok(SokParams),
    Sno(SnoParams),
}

/// Validated configuration with every default applied.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub grid: Grid,
    pub init: InitSpec,
    pub seed: u64,
    pub stop: StopCriterion,
    pub record_every: usize,
    pub check_modified_energy: bool,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub scheme: SchemeOptions,
    pub inv_norm_bound: f64,
}

fn required(name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("missing required key `{name}`")))
}

fn reject(system: &str, keys: &[(&str, bool)]) -> Result<()> {
    for (k, present) in keys {
        if *present {
            return Err(Error::Config(format!(
                "key `{k}` does not apply to system {system}"
            )));
        }
    }
    Ok(())
}

impl RawConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let system = raw
            .system
            .ok_or_else(|| Error::Config("missing required key `system`".into()))?;
        let n_phi = raw.n_phi.unwrap_or(DEFAULT_GRID);
        let n_theta = raw.n_theta.unwrap_or(DEFAULT_GRID);
        let grid = Grid::new(n_phi, n_theta)?;
        let epsilon = raw.epsilon.unwrap_or(DEFAULT_EPSILON_OVER_H * grid.h_phi());
        let params = match system {
            SystemKind::Sok => {
                reject(
                    "sok",
                    &[
                        ("omega1", raw.omega1.is_some()),
                        ("omega2", raw.omega2.is_some()),
                        ("gamma11", raw.gamma11.is_some()),
                        ("gamma22", raw.gamma22.is_some()),
                        ("gamma12", raw.gamma12.is_some()),
                        ("m1", raw.m1.is_some()),
                        ("m2", raw.m2.is_some()),
                        ("kappa1", raw.kappa1.is_some()),
                        ("kappa2", raw.kappa2.is_some()),
                        ("beta1", raw.beta1.is_some()),
                        ("beta2", raw.beta2.is_some()),
                        ("kappa_star1", raw.kappa_star1.is_some()),
                        ("kappa_star2", raw.kappa_star2.is_some()),
                        ("beta_star1", raw.beta_star1.is_some()),
                        ("beta_star2", raw.beta_star2.is_some()),
                    ],
                )?;
                let kappa = raw.kappa.unwrap_or(DEFAULT_KAPPA);
                let p = SokParams {
                    epsilon,
                    omega: raw.omega.unwrap_or(DEFAULT_OMEGA_SOK),
                    gamma: required("gamma", raw.gamma)?,
                    m: raw.m.unwrap_or(DEFAULT_M),
                    kappa,
                    beta: raw.beta.unwrap_or(0.0),
                    kappa_star: raw.kappa_star.unwrap_or(kappa),
                    beta_star: raw.beta_star.unwrap_or(0.0),
                    tau: raw.tau.unwrap_or(DEFAULT_TAU_SOK),
                };
                p.validate()?;
                ModelParams::Sok(p)
            }
            SystemKind::Sno => {
                reject(
                    "sno",
                    &[
                        ("omega", raw.omega.is_some()),
                        ("gamma", raw.gamma.is_some()),
                        ("m", raw.m.is_some()),
                        ("kappa", raw.kappa.is_some()),
                        ("beta", raw.beta.is_some()),
                        ("kappa_star", raw.kappa_star.is_some()),
                        ("beta_star", raw.beta_star.is_some()),
                    ],
                )?;
                let kappa = [
                    raw.kappa1.unwrap_or(DEFAULT_KAPPA),
                    raw.kappa2.unwrap_or(DEFAULT_KAPPA),
                ];
                let p = SnoParams {
                    epsilon,
                    omega: [
                        raw.omega1.unwrap_or(DEFAULT_OMEGA_SNO),
                        raw.omega2.unwrap_or(DEFAULT_OMEGA_SNO),
                    ],
                    gamma11: required("gamma11", raw.gamma11)?,
                    gamma22: required("gamma22", raw.gamma22)?,
                    gamma12: raw.gamma12.unwrap_or(0.0),
                    m: [raw.m1.unwrap_or(DEFAULT_M), raw.m2.unwrap_or(DEFAULT_M)],
                    kappa,
                    beta: [raw.beta1.unwrap_or(0.0), raw.beta2.unwrap_or(0.0)],
                    kappa_star: [
                        raw.kappa_star1.unwrap_or(kappa[0]),
                        raw.kappa_star2.unwrap_or(kappa[1]),
                    ],
                    beta_star: [raw.beta_star1.unwrap_or(0.0), raw.beta_star2.unwrap_or(0.0)],
                    tau: raw.tau.unwrap_or(DEFAULT_TAU_SNO),
                };
                p.validate()?;
                ModelParams::Sno(p)
            }
        };
        let init = raw.init.clone().unwrap_or(match system {
            SystemKind::Sok => InitSpec::RandomBlocks {
                ratio: DEFAULT_BLOCK_RATIO,
            },
            SystemKind::Sno => InitSpec::SemiRandom,
        });
        let species_ok = matches!(
            (system, &init),
            (_, InitSpec::File { .. })
                | (
                    SystemKind::Sok,
                    InitSpec::RandomBlocks { .. } | InitSpec::Circle
                )
                | (
                    SystemKind::Sno,
                    InitSpec::TwoCircles | InitSpec::SemiRandom | InitSpec::Circles { .. }
                )
        );
        if !species_ok {
            return Err(Error::Config(format!(
                "init kind {init:?} does not apply to system {system:?}"
            )));
        }
        let stop = StopCriterion {
            tol: raw.tol.unwrap_or(StopCriterion::default().tol),
            max_steps: raw.max_steps.unwrap_or(StopCriterion::default().max_steps),
            max_time: raw.max_time.unwrap_or(f64::INFINITY),
        };
        stop.validate()?;
        let record_every = raw.record_every.unwrap_or(DEFAULT_RECORD_EVERY);
        if record_every == 0 {
            return Err(Error::Config(
                "key `record_every` must be at least 1".into(),
            ));
        }
        let mut snapshot_times = raw.snapshot_times.clone().unwrap_or_default();
        if snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config(
                "key `snapshot_times` must hold finite nonnegative times".into(),
            ));
        }
        snapshot_times.sort_by(f64::total_cmp);
        let inv_norm_bound = raw.inv_norm_bound.unwrap_or(DEFAULT_INV_NORM_BOUND);
        if !(inv_norm_bound > 0.0) {
            return Err(Error::Config(
                "key `inv_norm_bound` must be positive".into(),
            ));
        }
        Ok(Self {
            params,
            grid,
            init,
            seed: raw.seed.unwrap_or(0),
            stop,
            record_every,
            check_modified_energy: raw.check_modified_energy.unwrap_or(false),
            snapshot_times,
            output_dir: raw
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("out")),
            scheme: SchemeOptions {
                penalty: raw.penalty.unwrap_or_default(),
                volume: raw.volume_integral.unwrap_or_default(),
                startup: raw.startup.unwrap_or_default(),
            },
            inv_norm_bound,
        })
    }

    /// Fully explicit schema form; `from_raw(to_raw(c)) == c`.
    pub fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig {
            n_phi: Some(self.grid.n_phi()),
            n_theta: Some(self.grid.n_theta()),
            init: Some(self.init.clone()),
            seed: Some(self.seed),
            tol: Some(self.stop.tol),
            max_steps: Some(self.stop.max_steps),
            max_time: self.stop.max_time.is_finite().then_some(self.stop.max_time),
            record_every: Some(self.record_every),
            check_modified_energy: Some(self.check_modified_energy),
            snapshot_times: Some(self.snapshot_times.clone()),
            output_dir: Some(self.output_dir.clone()),
            volume_integral: Some(self.scheme.volume),
            penalty: Some(self.scheme.penalty),
            startup: Some(self.scheme.startup),
            inv_norm_bound: Some(self.inv_norm_bound),
            ..Default::default()
        };
        match &self.params {
            ModelParams::Sok(p) => {
                raw.system = Some(SystemKind::Sok);
                raw.epsilon = Some(p.epsilon);
                raw.tau = Some(p.tau);
                raw.omega = Some(p.omega);
                raw.gamma = Some(p.gamma);
                raw.m = Some(p.m);
                raw.kappa = Some(p.kappa);
                raw.beta = Some(p.beta);
                raw.kappa_star = Some(p.kappa_star);
                raw.beta_star = Some(p.beta_star);
            }
            ModelParams::Sno(p) => {
                raw.system = Some(SystemKind::Sno);
                raw.epsilon = Some(p.epsilon);
                raw.tau = Some(p.tau);
                raw.omega1 = Some(p.omega[0]);
                raw.omega2 = Some(p.omega[1]);
                raw.gamma11 = Some(p.gamma11);
                raw.gamma22 = Some(p.gamma22);
                raw.gamma12 = Some(p.gamma12);
                raw.m1 = Some(p.m[0]);
                raw.m2 = Some(p.m[1]);
                raw.kappa1 = Some(p.kappa[0]);
                raw.kappa2 = Some(p.kappa[1]);
                raw.beta1 = Some(p.beta[0]);
                raw.beta2 = Some(p.beta[1]);
                raw.kappa_star1 = Some(p.kappa_star[0]);
                raw.kappa_star2 = Some(p.kappa_star[1]);
                raw.beta_star1 = Some(p.beta_star[0]);
                raw.beta_star2 = Some(p.beta_star[1]);
            }
        }
        raw
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("config serializes")
    }

    pub fn system(&self) -> SystemKind {
        match self.params {
            ModelParams::Sok(_) => SystemKind::Sok,
            ModelParams::Sno(_) => SystemKind::Sno,
        }
    }

    pub fn model(&self) -> Model {
        match &self.params {
            ModelParams::Sok(p) => Model::Sok(SokSystem {
                params: p.clone(),
                scheme: self.scheme,
                inv_norm_bound: self.inv_norm_bound,
            }),
            ModelParams::Sno(p) => Model::Sno(SnoSystem {
                params: p.clone(),
                scheme: self.scheme,
                inv_norm_bound: self.inv_norm_bound,
            }),
        }
    }

    /// Initial fields for seed `seed` (the configured seed for single runs).
    pub fn initial_fields(&self, seed: u64) -> Result<Vec<SphereField>> {
        let g = self.grid;
        let fields = match (&self.init, &self.params) {
            (InitSpec::RandomBlocks { ratio }, _) => vec![init_random_blocks(g, *ratio, seed)?],
            (InitSpec::Circle, ModelParams::Sok(p)) => vec![init_circle(g, p.omega, seed)?],
            (InitSpec::TwoCircles, ModelParams::Sno(p)) => {
                init_two_circles(g, p.omega[0], p.omega[1], seed)?.into()
            }
            (InitSpec::SemiRandom, ModelParams::Sno(p)) => {
                init_semi_random(g, p.omega[0], p.omega[1], seed)?.into()
            }
            (InitSpec::Circles { circles }, _) => init_from_circles(g, circles)?.into(),
            (InitSpec::File { path }, _) => {
                let (meta, fields) = read_snapshot(path)?;
                if meta.n_phi != g.n_phi() || meta.n_theta != g.n_theta() {
                    return Err(Error::Config(format!(
                        "snapshot grid {}x{} differs from configured {}x{}",
                        meta.n_phi,
                        meta.n_theta,
                        g.n_phi(),
                        g.n_theta()
                    )));
                }
                fields
            }
            (spec, _) => {
                return Err(Error::Config(format!(
                    "init kind {spec:?} does not apply to this system"
                )))
            }
        };
        let want = match self.system() {
            SystemKind::Sok => 1,
            SystemKind::Sno => 2,
        };
        if fields.len() != want {
            return Err(Error::Config(format!(
                "initial data has {} species, system needs {want}",
                fields.len()
            )));
        }
        Ok(fields)
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_raw(&RawConfig::parse(&text, path)?)
}

/// Mesh size `2π/n` of a square grid, used for `ε = 10h` style defaults.
pub fn mesh_size(n: usize) -> f64 {
    2.0 * PI / n as f64
}
