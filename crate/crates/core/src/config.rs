//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [scene]
//! bound_M = 1.0
//! body = { shape = "disk", params = { center = [0.0, 0.0], radius = 0.7 } }
//! intensity = { profile = "sharp", level = 1.0 }
//!
//! [kernel]
//! family = "sobolev"
//! beta = 1.0
//! L = 1.0
//!
//! [noise]
//! eps = 0.001
//! mode = "grid"
//!
//! [sweep]
//! eps = [0.03, 0.01, 0.003, 0.001]
//! reps = 200
//! directions = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::geometry::{ConvexBody, Direction, Point};
use crate::grid::GridSpec;
use crate::kernel::{BlurKernel, KernelFamily};
use crate::scene::{IntensityModel, IntensityProfile, DEFAULT_CLASS_DELTA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(rename = "bound_M", default = "one")]
    pub bound_m: f64,
    #[serde(default)]
    pub body: BodyConfig,
    #[serde(default)]
    pub intensity: IntensityConfig,
    /// Largest slab depth used when probing the mass class.
    #[serde(default = "class_delta")]
    pub class_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "lowercase")]
pub enum BodyConfig {
    Disk {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityConfig {
    Sharp {
        #[serde(default = "one")]
        level: f64,
    },
    BoundaryPower {
        gamma: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default)]
    pub beta: f64,
    #[serde(rename = "L", default = "one")]
    pub l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "extent")]
    pub extent: f64,
    #[serde(default = "grid_n")]
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Grid,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "eps")]
    pub eps: f64,
    #[serde(default = "mode")]
    pub mode: NoiseMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(rename = "C3", default = "c3")]
    pub c3: f64,
    #[serde(default = "r_grid_n")]
    pub r_grid_n: usize,
    #[serde(default)]
    pub delta_override: Option<f64>,
    #[serde(default)]
    pub theta_override: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "sweep_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "reps")]
    pub reps: usize,
    /// 1 probes a single direction at `direction_angle`; `N >= 3` uses the uniform grid.
    #[serde(default = "one_usize")]
    pub directions: usize,
    #[serde(default)]
    pub direction_angle: f64,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn class_delta() -> f64 {
    DEFAULT_CLASS_DELTA
}
fn extent() -> f64 {
    4.0
}
fn grid_n() -> usize {
    512
}
fn eps() -> f64 {
    1e-3
}
fn mode() -> NoiseMode {
    NoiseMode::Grid
}
fn c3() -> f64 {
    8.0
}
fn r_grid_n() -> usize {
    512
}
fn sweep_eps() -> Vec<f64> {
    vec![3e-2, 1e-2, 3e-3, 1e-3]
}
fn reps() -> usize {
    200
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            bound_m: 1.0,
            body: BodyConfig::default(),
            intensity: IntensityConfig::default(),
            class_delta: DEFAULT_CLASS_DELTA,
        }
    }
}

impl Default for BodyConfig {
    fn default() -> Self {
        BodyConfig::Disk {
            center: [0.0, 0.0],
            radius: 0.7,
        }
    }
}

impl Default for IntensityConfig {
    fn default() -> Self {
        IntensityConfig::Sharp { level: 1.0 }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Sobolev,
            beta: 1.0,
            l: 1.0,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            extent: extent(),
            n: grid_n(),
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            eps: eps(),
            mode: mode(),
        }
    }
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            c3: c3(),
            r_grid_n: r_grid_n(),
            delta_override: None,
            theta_override: None,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps: sweep_eps(),
            reps: reps(),
            directions: 1,
            direction_angle: 0.0,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneConfig::default(),
            kernel: KernelConfig::default(),
            grid: GridConfig::default(),
            noise: NoiseConfig::default(),
            estimator: EstimatorSection::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn body(&self) -> Result<ConvexBody> {
        match &self.scene.body {
            BodyConfig::Disk { center, radius } => ConvexBody::disk(Point::new(center[0], center[1]), *radius),
            BodyConfig::Ellipse { a, b } => ConvexBody::ellipse(*a, *b),
            BodyConfig::Polygon { vertices } => {
                ConvexBody::polygon(vertices.iter().map(|v| Point::new(v[0], v[1])).collect())
            }
        }
        .map_err(as_config)
    }

    pub fn intensity(&self) -> Result<IntensityModel> {
        let profile = match self.scene.intensity {
            IntensityConfig::Sharp { level } => IntensityProfile::Sharp { level },
            IntensityConfig::BoundaryPower { gamma, scale } => IntensityProfile::BoundaryPower { gamma, scale },
        };
        IntensityModel::new(self.body()?, profile, self.scene.bound_m).map_err(as_config)
    }

    pub fn kernel(&self) -> Result<BlurKernel> {
        let k = &self.kernel;
        match k.family {
            KernelFamily::Identity => {
                if k.beta != 0.0 {
                    return Err(Error::config("identity kernel has β = 0"));
                }
                BlurKernel::with_declared(KernelFamily::Identity, 0.0, k.l, 0.0)
            }
            KernelFamily::Sobolev => BlurKernel::with_declared(KernelFamily::Sobolev, k.beta, k.l, k.beta),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.extent, self.grid.n)
    }

    /// Estimator settings at noise level `eps`.
    pub fn estimator(&self, eps: f64) -> EstimatorConfig {
        let k = self.kernel.clone();
        let beta = if k.family == KernelFamily::Identity { 0.0 } else { k.beta };
        EstimatorConfig {
            eps,
            l: k.l,
            beta,
            m: self.scene.bound_m,
            c3: self.estimator.c3,
            delta_override: self.estimator.delta_override,
            theta_override: self.estimator.theta_override,
            r_grid_n: self.estimator.r_grid_n,
        }
    }

    /// Directions probed by sweeps and single-direction commands.
    pub fn directions(&self) -> Result<Vec<Direction>> {
        match self.sweep.directions {
            0 | 2 => Err(Error::config("sweep.directions must be 1 or >= 3")),
            1 => Ok(vec![Direction::from_angle(self.sweep.direction_angle)]),
            n => crate::geometry::direction_grid(n),
        }
    }

    /// Checks the sweep block: strictly decreasing ε in (0, 1), at least 50 reps.
    pub fn validate_sweep(&self) -> Result<()> {
        let e = &self.sweep.eps;
        if e.is_empty() {
            return Err(Error::config("sweep.eps is empty"));
        }
        if e.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::config("sweep.eps values must lie in (0, 1)"));
        }
        if e.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("sweep.eps must be strictly decreasing"));
        }
        if self.sweep.reps < 50 {
            return Err(Error::config(format!("sweep.reps must be >= 50, got {}", self.sweep.reps)));
        }
        self.directions()?;
        Ok(())
    }

    /// Identifier of the scene for provenance records.
    pub fn scene_id(&self) -> String {
        let body = match &self.scene.body {
            BodyConfig::Disk { center, radius } => format!("disk({},{};{})", center[0], center[1], radius),
            BodyConfig::Ellipse { a, b } => format!("ellipse({a},{b})"),
            BodyConfig::Polygon { vertices } => format!("polygon({})", vertices.len()),
        };
        let profile = match self.scene.intensity {
            IntensityConfig::Sharp { level } => format!("sharp({level})"),
            IntensityConfig::BoundaryPower { gamma, scale } => format!("boundary_power({gamma},{scale})"),
        };
        format!("{body}/{profile}")
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Argument(m) => Error::Config(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            seed = 7
            [scene]
            bound_M = 1.0
            body = { shape = "disk", params = { center = [0.0, 0.0], radius = 0.7 } }
            intensity = { profile = "sharp", level = 1.0 }
            [kernel]
            family = "sobolev"
            beta = 1.0
            L = 1.0
            [noise]
            eps = 0.001
            mode = "grid"
            [sweep]
            eps = [0.03, 0.01, 0.003, 0.001]
            reps = 200
            directions = 1
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grid.n, 512);
        assert_eq!(cfg.estimator.c3, 8.0);
        cfg.validate_sweep().unwrap();
        assert_eq!(cfg.body().unwrap().support_function(&Direction::from_angle(0.0)), 0.7);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.scene.body = BodyConfig::Polygon {
            vertices: vec![[0.5, -0.5], [0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5]],
        };
        cfg.scene.intensity = IntensityConfig::BoundaryPower { gamma: 1.0, scale: 2.0 };
        cfg.estimator.delta_override = Some(0.05);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_blocks() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("[kernel]\nfamily = \"boxcar\""),
            Err(Error::Config(_))
        ));
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.eps = vec![0.01, 0.03];
        assert!(cfg.validate_sweep().is_err());
        cfg.sweep.eps = vec![0.03];
        cfg.sweep.reps = 10;
        assert!(cfg.validate_sweep().is_err());
        cfg.sweep.reps = 50;
        cfg.sweep.directions = 2;
        assert!(cfg.validate_sweep().is_err());
        cfg.sweep.directions = 1;
        cfg.scene.body = BodyConfig::Disk { center: [0.0, 0.0], radius: 1.5 };
        assert!(matches!(cfg.body(), Err(Error::Config(_))));
    }
}
