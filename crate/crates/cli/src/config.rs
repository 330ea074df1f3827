//! Experiment configuration: a TOML file with `[kernel]`, `[simulation]` and
//! `[experiment]` tables. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use jumplab_core::quadrature::TestFunction;
use jumplab_core::{
    Cap, ConeSystem, ExteriorData, JumpKernel, Modulator, Pt, RadialProfile, Region, SimConfig, SlowlyVarying,
    TailRule, UnitVector,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub dim: usize,
    pub alpha: f64,
    #[serde(default = "one")]
    pub delta: f64,
    /// No caps means the full sphere (an isotropic kernel).
    #[serde(default)]
    pub caps: Vec<CapSpec>,
    #[serde(default)]
    pub ell: SlowlyVarying,
    #[serde(default = "power_tail")]
    pub tail: TailRule,
    #[serde(default = "one")]
    pub kappa: f64,
    /// Defaults to α/2.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "constant_one")]
    pub modulator: Modulator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapSpec {
    pub axis: Vec<f64>,
    #[serde(default)]
    pub cos_theta: Option<f64>,
    #[serde(default)]
    pub chordal_radius: Option<f64>,
    /// Defaults to the kernel's lower value δ.
    #[serde(default)]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    #[serde(default)]
    pub time_horizon: Option<f64>,
    /// Interpret ε as a fraction of the experiment's length scale.
    #[serde(default)]
    pub relative_epsilon: bool,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            n: default_n(),
            max_events: default_max_events(),
            time_horizon: None,
            relative_epsilon: false,
        }
    }
}

/// Kind-specific parameters; each command reads the keys it needs and
/// falls back to documented defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub center: Option<Vec<f64>>,
    pub start: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub time_scales: Option<Vec<f64>>,
    pub extrapolate: Option<bool>,
    pub lambda: Option<f64>,
    pub fractions: Option<Vec<f64>>,
    pub data: Option<DataSpec>,
    pub negative: Option<Vec<PieceSpec>>,
    pub amplitudes: Option<Vec<f64>>,
    pub safety: Option<f64>,
    pub probes: Option<usize>,
    pub tail_probes: Option<usize>,
    pub scales: Option<Vec<f64>>,
    pub points: Option<Vec<Vec<f64>>>,
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub region_a: Option<RegionSpec>,
    pub region_b: Option<RegionSpec>,
    pub stop_time: Option<f64>,
    pub stop_radius: Option<f64>,
    pub rate_grid: Option<usize>,
    pub rhos: Option<Vec<f64>>,
    pub r_grid: Option<Vec<f64>>,
    pub j_max: Option<u32>,
    pub function: Option<FunctionSpec>,
    pub ell: Option<SlowlyVarying>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub trials: Option<usize>,
    pub inflate: Option<f64>,
    pub inflated_trials: Option<usize>,
    pub target: Option<Vec<f64>>,
    pub dump_replicas: Option<usize>,
    pub radial_points: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub tolerance: Option<f64>,
    pub pair_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    BallComplement { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub region: RegionSpec,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Constant {
        value: f64,
    },
    IndicatorOfBall {
        center: Vec<f64>,
        radius: f64,
    },
    /// Non-negative values on `positive` regions, negated values on `negative`.
    Pieces {
        #[serde(default)]
        positive: Vec<PieceSpec>,
        #[serde(default)]
        negative: Vec<PieceSpec>,
    },
    Radial {
        center: Vec<f64>,
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant { value: f64 },
    CompactBump { center: Vec<f64>, radius: f64, height: f64 },
    Cosine { frequency: Vec<f64> },
    Barrier { center: Vec<f64>, r: f64 },
}

fn one() -> f64 {
    1.0
}
fn power_tail() -> TailRule {
    TailRule::Power
}
fn constant_one() -> Modulator {
    Modulator::ConstantOne
}
fn default_epsilon() -> f64 {
    0.02
}
fn default_n() -> usize {
    1000
}
fn default_max_events() -> u64 {
    1_000_000
}

/// Pads a point given with `dim` coordinates to the internal representation.
pub fn point(v: &[f64], dim: usize, what: &str) -> Result<Pt, CliError> {
    if v.len() != dim {
        return Err(CliError::Config(format!("{what}: expected {dim} coordinates, got {}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(CliError::Config(format!("{what}: coordinates must be finite")));
    }
    let mut p = [0.0; 3];
    p[..dim].copy_from_slice(v);
    Ok(p)
}

impl RegionSpec {
    pub fn build(&self, dim: usize) -> Result<Region, CliError> {
        Ok(match self {
            RegionSpec::Ball { center, radius } => Region::Ball { center: point(center, dim, "region centre")?, radius: *radius },
            RegionSpec::Annulus { center, inner, outer } => {
                Region::Annulus { center: point(center, dim, "region centre")?, inner: *inner, outer: *outer }
            }
            RegionSpec::BallComplement { center, radius } => {
                Region::BallComplement { center: point(center, dim, "region centre")?, radius: *radius }
            }
        })
    }
}

pub fn pieces(list: &[PieceSpec], dim: usize) -> Result<Vec<(Region, f64)>, CliError> {
    list.iter().map(|p| Ok((p.region.build(dim)?, p.value))).collect()
}

impl DataSpec {
    pub fn build(&self, dim: usize) -> Result<ExteriorData, CliError> {
        let data = match self {
            DataSpec::Constant { value } => ExteriorData::Constant { value: *value },
            DataSpec::IndicatorOfBall { center, radius } => {
                ExteriorData::IndicatorOfBall { center: point(center, dim, "data centre")?, radius: *radius }
            }
            DataSpec::Pieces { positive, negative } => {
                ExteriorData::SignedBump { positive: pieces(positive, dim)?, negative: pieces(negative, dim)? }
            }
            DataSpec::Radial { center, radii, values } => ExteriorData::RadialProfileData {
                center: point(center, dim, "data centre")?,
                radii: radii.clone(),
                values: values.clone(),
            },
        };
        data.check()?;
        Ok(data)
    }
}

impl FunctionSpec {
    pub fn build(&self, dim: usize) -> Result<TestFunction, CliError> {
        Ok(match self {
            FunctionSpec::Constant { value } => TestFunction::Constant { value: *value },
            FunctionSpec::CompactBump { center, radius, height } => TestFunction::CompactBump {
                center: point(center, dim, "function centre")?,
                radius: *radius,
                height: *height,
            },
            FunctionSpec::Cosine { frequency } => TestFunction::Cosine { frequency: point(frequency, dim, "frequency")? },
            FunctionSpec::Barrier { center, r } => {
                TestFunction::Barrier { center: point(center, dim, "barrier centre")?, r: *r }
            }
        })
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<JumpKernel, CliError> {
        let dim = self.dim;
        if !(1..=3).contains(&dim) {
            return Err(CliError::Config(format!("kernel.dim = {dim} unsupported (1..=3)")));
        }
        let (caps, upper) = if self.caps.is_empty() {
            let mut e1 = vec![0.0; dim];
            e1[0] = 1.0;
            (vec![Cap::new(UnitVector::new(&e1)?, 2.0)?], vec![self.delta])
        } else {
            let mut caps = Vec::with_capacity(self.caps.len());
            let mut upper = Vec::with_capacity(self.caps.len());
            for (i, c) in self.caps.iter().enumerate() {
                let axis = UnitVector::normalized(&c.axis)?;
                let cap = match (c.cos_theta, c.chordal_radius) {
                    (Some(ct), None) => Cap::from_cos(axis, ct)?,
                    (None, Some(rho)) => Cap::new(axis, rho)?,
                    _ => {
                        return Err(CliError::Config(format!(
                            "kernel.caps[{i}]: give exactly one of cos_theta and chordal_radius"
                        )))
                    }
                };
                caps.push(cap);
                upper.push(c.upper.unwrap_or(self.delta));
            }
            (caps, upper)
        };
        let cones = ConeSystem::new(caps, self.delta, upper)?;
        let sigma = self.sigma.unwrap_or(self.alpha / 2.0);
        let radial = RadialProfile::new(dim, self.alpha, self.ell.clone(), self.tail.clone(), self.kappa, sigma)?;
        Ok(JumpKernel::new(cones, radial, self.modulator.clone())?)
    }
}

impl SimulationSpec {
    /// Simulation settings at length scale `scale` (used when ε is relative).
    pub fn at_scale(&self, seed: u64, scale: f64) -> Result<SimConfig, CliError> {
        if self.n < 2 {
            return Err(CliError::Config("simulation.n must be at least 2".into()));
        }
        let epsilon = if self.relative_epsilon { self.epsilon * scale } else { self.epsilon };
        let cfg = SimConfig { epsilon, max_events: self.max_events, time_horizon: self.time_horizon, seed };
        cfg.check()?;
        Ok(cfg)
    }
}

/// Sets `path` (dotted) in `table` to `raw`, parsed as a TOML value when
/// possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> Result<(), CliError> {
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("malformed override key '{path}'")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override '{path}': '{k}' is not a table"))),
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Parses a configuration text with `key=value` overrides applied.
pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig, CliError> {
    if overrides.is_empty() {
        return toml::from_str(text).map_err(|e| CliError::Config(e.to_string()));
    }
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let merged = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
    toml::from_str(&merged).map_err(|e| CliError::Config(format!("after overrides: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[kernel]\ndim = 2\nalpha = 1.0\n";

    #[test]
    fn minimal_config_builds_isotropic_kernel() {
        let cfg = parse(MINIMAL, &[]).unwrap();
        let k = cfg.kernel.build().unwrap();
        assert!(k.cones.covers_sphere());
        assert_eq!(cfg.simulation.n, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse("[kernel]\ndim = 2\nalpha = 1.0\nbogus = 3\n", &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 4"), "{msg}");
        assert!(parse(MINIMAL, &[("experiment.nonsense".into(), "1".into())]).is_err());
    }

    #[test]
    fn overrides_set_nested_scalars() {
        let cfg = parse(
            MINIMAL,
            &[
                ("simulation.epsilon".into(), "0.005".into()),
                ("kernel.alpha".into(), "1.5".into()),
                ("experiment.radii".into(), "[0.1, 0.2]".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.simulation.epsilon, 0.005);
        assert_eq!(cfg.kernel.alpha, 1.5);
        assert_eq!(cfg.experiment.radii.unwrap(), vec![0.1, 0.2]);
    }

    #[test]
    fn caps_need_one_angle() {
        let text = "[kernel]\ndim = 2\nalpha = 1.0\n[[kernel.caps]]\naxis = [1.0, 0.0]\n";
        assert!(parse(text, &[]).unwrap().kernel.build().is_err());
        let text = "[kernel]\ndim = 2\nalpha = 1.0\n[[kernel.caps]]\naxis = [1.0, 1.0]\ncos_theta = 0.9\nupper = 2.0\n";
        let k = parse(text, &[]).unwrap().kernel.build().unwrap();
        assert_eq!(k.cones.upper_values(), &[2.0]);
    }
}
