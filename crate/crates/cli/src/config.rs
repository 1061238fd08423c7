//! Run configuration: a JSON document with a `schema_version`, strict
//! field checking and dotted-path overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gflow::flow::oracle_radius;
use gflow::monitor::MonitorConfig;
use gflow::neck::NeckParams;
use gflow::scenario::{cylinder_profile, sphere_profile, BulbChain};
use gflow::surgery::{SurgeryParams, SurgeryThresholds};
use gflow::{Dimension, EndKind, FlowError, ModelSurface, ProfileCurve, StepControl};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::output::read_snapshot;

pub const SCHEMA_VERSION: u32 = 1;

fn default_dim() -> usize {
    3
}

fn one() -> f64 {
    1.0
}

fn default_waist() -> f64 {
    0.3
}

fn default_waists() -> [f64; 2] {
    [0.3, 0.32]
}

fn default_separation() -> f64 {
    BulbChain::dumbbell().tube_length
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Sphere {
        #[serde(default = "one")]
        r0: f64,
    },
    Cylinder {
        #[serde(default = "one")]
        r0: f64,
        #[serde(default = "one")]
        length: f64,
    },
    Dumbbell {
        #[serde(default = "one")]
        bulb_r: f64,
        #[serde(default = "default_waist")]
        waist_r: f64,
        /// Length of the flat part of the tube.
        #[serde(default = "default_separation")]
        separation: f64,
    },
    ThreeBulb {
        #[serde(default = "one")]
        bulb_r: f64,
        #[serde(default = "default_waists")]
        waist_r: [f64; 2],
        #[serde(default = "default_separation")]
        separation: f64,
    },
    FromFile {
        path: PathBuf,
    },
}

/// Plain flow to `t_end`, or the flow with surgeries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Plain,
    Surgery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Flow time between snapshot files; `0` disables periodic snapshots.
    pub snapshot_interval: f64,
    /// Steps between `step_summary` events.
    pub summary_every: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            snapshot_interval: 0.05,
            summary_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub scenario: Scenario,
    /// Defaults to `plain` for spheres and cylinders, `surgery` otherwise.
    #[serde(default)]
    pub mode: Option<RunMode>,
    /// End time of plain runs; defaults to 90% of the model lifespan.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default)]
    pub neck: NeckParams,
    #[serde(default)]
    pub thresholds: SurgeryThresholds,
    #[serde(default)]
    pub surgery: SurgeryParams,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Seed for randomised sampling in the validation suite.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Default configuration for a scenario.
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dim: default_dim(),
            scenario,
            mode: None,
            t_end: None,
            step: StepControl::default(),
            neck: NeckParams::default(),
            thresholds: SurgeryThresholds::default(),
            surgery: SurgeryParams::default(),
            monitor: MonitorConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
        }
    }

    pub fn dimension(&self) -> Result<Dimension> {
        Dimension::new(self.dim).map_err(|e| anyhow!("dim: {e}"))
    }

    pub fn mode(&self) -> RunMode {
        self.mode.unwrap_or(match self.scenario {
            Scenario::Sphere { .. } | Scenario::Cylinder { .. } => RunMode::Plain,
            _ => RunMode::Surgery,
        })
    }

    /// End time of a plain run.
    pub fn plain_end(&self) -> Result<f64> {
        if let Some(t) = self.t_end {
            return Ok(t);
        }
        let dim = self.dimension()?;
        let model = match self.scenario {
            Scenario::Sphere { r0 } => ModelSurface::Sphere(r0),
            Scenario::Cylinder { r0, .. } => ModelSurface::Cylinder(r0),
            _ => bail!("t_end: required for plain runs of this scenario"),
        };
        match oracle_radius(model, dim, f64::INFINITY) {
            Err(FlowError::PastExtinction { extinction, .. }) => Ok(0.9 * extinction),
            _ => bail!("t_end: cannot derive a lifespan"),
        }
    }

    /// Checks every embedded invariant; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                self.schema_version
            );
        }
        self.dimension()?;
        self.step.validate().map_err(|e| anyhow!("step: {e}"))?;
        self.neck.validate().map_err(|e| anyhow!("neck: {e}"))?;
        self.thresholds
            .validate()
            .map_err(|e| anyhow!("thresholds: {e} (g1 < g2 < g3)"))?;
        self.surgery.validate().map_err(|e| anyhow!("surgery: {e}"))?;
        self.monitor.validate().map_err(|e| anyhow!("monitor: {e}"))?;
        if !(self.output.snapshot_interval >= 0.0) {
            bail!("output.snapshot_interval: must be non-negative");
        }
        if self.output.summary_every == 0 {
            bail!("output.summary_every: must be at least 1");
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0) {
                bail!("t_end: must be positive");
            }
        }
        if self.mode() == RunMode::Plain {
            self.plain_end()?;
        }
        Ok(())
    }

    /// Initial components, checked for two-convexity.
    pub fn initial_components(&self) -> Result<Vec<ProfileCurve>> {
        let dim = self.dimension()?;
        let h = self.step.spacing;
        let curve = match &self.scenario {
            Scenario::Sphere { r0 } => sphere_profile(*r0, h),
            Scenario::Cylinder { r0, length } => cylinder_profile(*r0, *length, h),
            Scenario::Dumbbell {
                bulb_r,
                waist_r,
                separation,
            } => chain(*bulb_r, vec![*waist_r], *separation).profile(h),
            Scenario::ThreeBulb {
                bulb_r,
                waist_r,
                separation,
            } => chain(*bulb_r, waist_r.to_vec(), *separation).profile(h),
            Scenario::FromFile { path } => {
                let snap = read_snapshot(path).with_context(|| format!("scenario.path: {}", path.display()))?;
                Ok(snap)
            }
        }
        .map_err(|e| anyhow!("scenario: {e}"))?;
        if let Err(i) = curve.speeds(dim) {
            bail!(
                "scenario: initial data is not two-convex at node {i} (x = {:.6})",
                curve.points()[i].x
            );
        }
        Ok(vec![curve])
    }
}

/// Bulb chain scaled so that its bulbs have radius `bulb_r`; waists and
/// separation are taken as given.
fn chain(bulb_r: f64, waists: Vec<f64>, separation: f64) -> BulbChain {
    let base = BulbChain::dumbbell();
    let c = bulb_r / base.bulb_radius;
    BulbChain {
        bulb_radius: bulb_r,
        waists,
        tube_length: separation,
        shoulder_radius: base.shoulder_radius * c,
        shoulder_length: base.shoulder_length * c,
        taper_length: base.taper_length * c,
        bulb_length: base.bulb_length * c,
    }
}

/// Infers end kinds from a profile: ends on the axis are poles.
pub fn end_kinds(us: &[f64]) -> (EndKind, EndKind) {
    let kind = |u: f64| if u == 0.0 { EndKind::Pole } else { EndKind::Reflect };
    (kind(us[0]), kind(us[us.len() - 1]))
}

/// A parsed `KEY=VALUE` override. The value is JSON when it parses as
/// JSON and a plain string otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{s}' is not of the form KEY=VALUE"))?;
        let path: Vec<String> = key.split('.').map(str::to_string).collect();
        if path.iter().any(|p| p.is_empty()) {
            bail!("override key '{key}' has an empty component");
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Self { path, value })
    }
}

impl std::fmt::Display for Override {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.path.join("."), self.value)
    }
}

/// Sets `doc[path] = value`, creating intermediate objects.
pub fn apply_override(doc: &mut Value, o: &Override) -> Result<()> {
    let mut cur = doc;
    for (k, key) in o.path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("override {}: '{}' is not an object", o, o.path[..k].join(".")))?;
        if k + 1 == o.path.len() {
            obj.insert(key.clone(), o.value.clone());
            return Ok(());
        }
        cur = obj
            .entry(key.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
}

/// Parses and validates a document after applying overrides.
pub fn from_document(mut doc: Value, overrides: &[Override]) -> Result<RunConfig> {
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| anyhow!("config: {e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, overrides and validates a configuration file. Without overrides
/// parse errors carry the line and column in the file.
pub fn load(path: &Path, overrides: &[Override]) -> Result<RunConfig> {
    let ctx = || format!("invalid configuration {}", path.display());
    if overrides.is_empty() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow!("config: {e}"))
            .with_context(ctx)?;
        cfg.validate().with_context(ctx)?;
        return Ok(cfg);
    }
    from_document(read_document(path)?, overrides).with_context(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn minimal_document_takes_defaults() {
        let cfg = from_document(doc(r#"{"schema_version":1,"scenario":{"kind":"dumbbell"}}"#), &[]).unwrap();
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.mode(), RunMode::Surgery);
        assert_eq!(cfg.thresholds, SurgeryThresholds::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = from_document(doc(r#"{"schema_version":1,"scenario":{"kind":"sphere"},"bogus":1}"#), &[]);
        assert!(e.unwrap_err().to_string().contains("bogus"));
        let e = from_document(doc(r#"{"schema_version":1,"scenario":{"kind":"sphere","radius":2}}"#), &[]);
        assert!(e.is_err());
        let e = from_document(doc(r#"{"schema_version":1,"scenario":{"kind":"sphere"},"neck":{"eps":0.1}}"#), &[]);
        assert!(e.is_err());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let e = from_document(doc(r#"{"schema_version":2,"scenario":{"kind":"sphere"}}"#), &[]).unwrap_err();
        assert!(e.to_string().contains("schema_version"));
    }

    #[test]
    fn threshold_chain_diagnostic() {
        let o: Override = "thresholds.g2=2.0".parse().unwrap();
        let e = from_document(doc(r#"{"schema_version":1,"scenario":{"kind":"dumbbell"}}"#), &[o]).unwrap_err();
        let msg = format!("{e:#}");
        assert!(msg.contains("thresholds") && msg.contains("g1 < g2"), "{msg}");
    }

    #[test]
    fn overrides_set_nested_values() {
        let os: Vec<Override> = ["neck.epsilon=0.05", "neck.rho=mean_curvature", "scenario.r0=2", "step.cfl=0.2"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let cfg = from_document(doc(r#"{"schema_version":1,"scenario":{"kind":"sphere"}}"#), &os).unwrap();
        assert_eq!(cfg.neck.epsilon, 0.05);
        assert_eq!(cfg.neck.rho, gflow::neck::RhoLaw::MeanCurvature);
        assert_eq!(cfg.scenario, Scenario::Sphere { r0: 2.0 });
        assert_eq!(cfg.step.cfl, 0.2);
        assert!(cfg.step.spacing > 0.0);
    }

    #[test]
    fn plain_end_defaults_to_most_of_the_lifespan() {
        let cfg = RunConfig::for_scenario(Scenario::Sphere { r0: 1.0 });
        assert!((cfg.plain_end().unwrap() - 0.675).abs() < 1e-12);
        let cfg = RunConfig::for_scenario(Scenario::Cylinder { r0: 1.0, length: 1.0 });
        assert!((cfg.plain_end().unwrap() - 1.125).abs() < 1e-12);
    }

    #[test]
    fn bad_override_syntax() {
        assert!("novalue".parse::<Override>().is_err());
        assert!("a..b=1".parse::<Override>().is_err());
        let o: Override = "a.b=[1,2]".parse().unwrap();
        assert_eq!(o.value, serde_json::json!([1, 2]));
    }
}
