//! Run configuration read from TOML.
//!
//! Quantities are either bare numbers in SI units (meters) or strings with a unit
//! suffix: `"15mm"`, `"20um"`, `"20µm"`, `"100m"`, `"1.5km"`. Grid spacing also
//! accepts a density such as `"3/cm"` or `"300/m"`.
//!
//! ```toml
//! [rig]
//! baseline = "100m"
//! focal_length = "15mm"
//! pixel_size = "20um"
//! pixel_count = 2048
//!
//! [target]
//! position = [0, 0, "100m"]
//!
//! [grid]
//! spacing = "3/cm"
//! margin = 1.25
//! phase = "centered"        # or "target", or [fx, fy, fz] in cell fractions
//! max_points = 200000000
//!
//! [sweep]
//! parameter = "baseline"    # baseline | focal | pixel | distance | spacing
//! values = ["5m", "10m", "20m"]
//!
//! [plane]
//! plane = "XY"
//! center = [0, 0, "100m"]
//! extent = "100m"
//! step = "5m"
//!
//! [converge]
//! densities = ["0.1/cm", "1/cm", "3/cm"]
//! baselines = ["20m", "100m"]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::Deserialize;

use crate::experiment::{LocalGrid, Plane, PlaneSpec, RigParams, Scenario, SweepParameter};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("{field}: cannot parse quantity {value:?}")]
    Quantity { field: String, value: String },
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: String, value: f64 },
    #[error("unknown sweep parameter {0:?}")]
    UnknownParameter(String),
    #[error("unknown plane {0:?}; expected XY, XZ or YZ")]
    UnknownPlane(String),
    #[error("invalid grid phase: {0}")]
    Phase(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum PhaseSpec {
    Named(String),
    Fractions([f64; 3]),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    rig: RawRig,
    #[serde(default)]
    target: RawTarget,
    #[serde(default)]
    grid: RawGrid,
    sweep: Option<RawSweep>,
    #[serde(default)]
    plane: RawPlane,
    #[serde(default)]
    converge: RawConverge,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRig {
    baseline: Option<Quantity>,
    focal_length: Option<Quantity>,
    pixel_size: Option<Quantity>,
    pixel_count: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    position: Option<[Quantity; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    spacing: Option<Quantity>,
    margin: Option<f64>,
    phase: Option<PhaseSpec>,
    max_points: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Option<Vec<Quantity>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlane {
    plane: Option<String>,
    center: Option<[Quantity; 3]>,
    extent: Option<Quantity>,
    step: Option<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConverge {
    densities: Option<Vec<Quantity>>,
    baselines: Option<Vec<Quantity>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    /// SI units.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeSpec {
    /// Grid points per meter.
    pub densities: Vec<f64>,
    pub baselines: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub sweep: SweepSpec,
    pub plane: PlaneSpec,
    pub converge: ConvergeSpec,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scenario = Scenario::default();
        Self {
            sweep: SweepSpec {
                parameter: SweepParameter::Baseline,
                values: default_sweep_values(SweepParameter::Baseline),
            },
            plane: PlaneSpec { plane: Plane::XY, center: scenario.target, half_extent: 100.0, step: 5.0 },
            converge: ConvergeSpec {
                densities: [0.1, 0.25, 0.5, 1.0, 2.0, 3.0].iter().map(|d| d * 100.0).collect(),
                baselines: vec![10.0, 25.0, 50.0, 100.0],
            },
            output_dir: PathBuf::from("out"),
            scenario,
        }
    }
}

/// Values spanning the axes of the published sweep figures.
pub fn default_sweep_values(parameter: SweepParameter) -> Vec<f64> {
    match parameter {
        SweepParameter::Baseline => {
            let mut v = vec![5.0];
            v.extend((1..=10).map(|i| f64::from(i) * 10.0));
            v
        }
        SweepParameter::FocalLength => (2..=8).map(|i| f64::from(i) * 5e-3).collect(),
        SweepParameter::PixelSize => (2..=8).map(|i| f64::from(i) * 5e-6).collect(),
        SweepParameter::Distance => (2..=6).map(|i| f64::from(i) * 50.0).collect(),
        SweepParameter::Spacing => [1.0, 1.5, 2.0, 3.0, 4.0].iter().map(|d| 0.01 / d).collect(),
    }
}

/// Parses a length such as `"15mm"` or `"2.5 cm"` into meters.
pub fn parse_length(text: &str) -> Option<f64> {
    const UNITS: [(&str, f64); 8] =
        [("km", 1e3), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6), ("µm", 1e-6), ("μm", 1e-6), ("nm", 1e-9), ("m", 1.0)];
    let t = text.trim();
    let (num, scale) = UNITS
        .iter()
        .find_map(|(unit, scale)| t.strip_suffix(unit).map(|n| (n, *scale)))
        .unwrap_or((t, 1.0));
    let value: f64 = num.trim().parse().ok()?;
    value.is_finite().then_some(value * scale)
}

/// Parses a grid density such as `"3/cm"` into points per meter.
pub fn parse_density(text: &str) -> Option<f64> {
    let (count, unit) = text.split_once('/')?;
    let count: f64 = count.trim().parse().ok()?;
    let per = parse_length(&format!("1{}", unit.trim()))?;
    Some(count / per)
}

/// Parses a grid spacing given either as a length or as a density.
pub fn parse_spacing(text: &str) -> Option<f64> {
    if text.contains('/') {
        parse_density(text).map(|d| 1.0 / d)
    } else {
        parse_length(text)
    }
}

fn positive(field: &str, value: f64) -> Result<f64, ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ConfigError::NonPositive { field: field.into(), value })
    }
}

fn quantity(field: &str, q: &Quantity, parse: fn(&str) -> Option<f64>) -> Result<f64, ConfigError> {
    match q {
        Quantity::Number(v) => Ok(*v),
        Quantity::Text(s) => parse(s).ok_or_else(|| ConfigError::Quantity { field: field.into(), value: s.clone() }),
    }
}

fn length(field: &str, q: &Quantity) -> Result<f64, ConfigError> {
    positive(field, quantity(field, q, parse_length)?)
}

fn coordinate(field: &str, q: &[Quantity; 3]) -> Result<Point3<f64>, ConfigError> {
    let mut p = Point3::origin();
    for (a, v) in q.iter().enumerate() {
        p[a] = quantity(field, v, parse_length)?;
    }
    Ok(p)
}

fn density(field: &str, q: &Quantity) -> Result<f64, ConfigError> {
    positive(field, quantity(field, q, parse_density)?)
}

fn spacing(field: &str, q: &Quantity) -> Result<f64, ConfigError> {
    positive(field, quantity(field, q, parse_spacing)?)
}

/// Parses a phase given as `"centered"`, `"target"` or three cell fractions.
pub fn parse_phase(text: &str) -> Result<Vector3<f64>, ConfigError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "centered" | "center" => Ok(LocalGrid::CELL_CENTERED),
        "target" | "aligned" => Ok(Vector3::zeros()),
        other => {
            let parts: Vec<f64> = other
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| ConfigError::Phase(text.into()))?;
            check_phase(&parts).map_err(|_| ConfigError::Phase(text.into()))
        }
    }
}

fn check_phase(parts: &[f64]) -> Result<Vector3<f64>, ConfigError> {
    if parts.len() != 3 || parts.iter().any(|f| !(0.0..1.0).contains(f)) {
        return Err(ConfigError::Phase(format!("{parts:?}; expected three fractions in [0, 1)")));
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut cfg = RunConfig::default();

        let rig = &mut cfg.scenario.rig;
        if let Some(q) = &raw.rig.baseline {
            rig.baseline = length("rig.baseline", q)?;
        }
        if let Some(q) = &raw.rig.focal_length {
            rig.focal_length = length("rig.focal_length", q)?;
        }
        if let Some(q) = &raw.rig.pixel_size {
            rig.pixel_size = length("rig.pixel_size", q)?;
        }
        if let Some(n) = raw.rig.pixel_count {
            rig.pixel_count = n;
            positive("rig.pixel_count", f64::from(n))?;
        }
        if let Some(p) = &raw.target.position {
            cfg.scenario.target = coordinate("target.position", p)?;
        }

        let local = &mut cfg.scenario.local;
        if let Some(q) = &raw.grid.spacing {
            local.spacing = spacing("grid.spacing", q)?;
        }
        if let Some(m) = raw.grid.margin {
            local.margin = positive("grid.margin", m)?;
        }
        match &raw.grid.phase {
            Some(PhaseSpec::Named(s)) => local.phase = parse_phase(s)?,
            Some(PhaseSpec::Fractions(f)) => local.phase = check_phase(f)?,
            None => {}
        }
        if let Some(n) = raw.grid.max_points {
            local.max_points = n;
        }

        if let Some(sweep) = &raw.sweep {
            let parameter = SweepParameter::parse(&sweep.parameter)
                .ok_or_else(|| ConfigError::UnknownParameter(sweep.parameter.clone()))?;
            let values = match &sweep.values {
                Some(vs) => vs
                    .iter()
                    .map(|q| match parameter {
                        SweepParameter::Spacing => spacing("sweep.values", q),
                        _ => length("sweep.values", q),
                    })
                    .collect::<Result<_, _>>()?,
                None => default_sweep_values(parameter),
            };
            cfg.sweep = SweepSpec { parameter, values };
        }

        cfg.plane.center = cfg.scenario.target;
        if let Some(name) = &raw.plane.plane {
            cfg.plane.plane = Plane::parse(name).ok_or_else(|| ConfigError::UnknownPlane(name.clone()))?;
        }
        if let Some(c) = &raw.plane.center {
            cfg.plane.center = coordinate("plane.center", c)?;
        }
        if let Some(q) = &raw.plane.extent {
            cfg.plane.half_extent = length("plane.extent", q)?;
        }
        if let Some(q) = &raw.plane.step {
            cfg.plane.step = length("plane.step", q)?;
        }

        if let Some(ds) = &raw.converge.densities {
            cfg.converge.densities = ds.iter().map(|q| density("converge.densities", q)).collect::<Result<_, _>>()?;
        }
        if let Some(bs) = &raw.converge.baselines {
            cfg.converge.baselines = bs.iter().map(|q| length("converge.baselines", q)).collect::<Result<_, _>>()?;
        }
        if let Some(dir) = raw.output.dir {
            cfg.output_dir = dir;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn rig(&self) -> RigParams {
        self.scenario.rig
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn lengths() {
        assert!(close(parse_length("15mm").unwrap(), 0.015));
        assert!(close(parse_length("20um").unwrap(), 20e-6));
        assert!(close(parse_length("20µm").unwrap(), 20e-6));
        assert!(close(parse_length("100 m").unwrap(), 100.0));
        assert!(close(parse_length("2.5cm").unwrap(), 0.025));
        assert!(close(parse_length("0.1").unwrap(), 0.1));
        assert_eq!(parse_length("3 parsecs"), None);
        assert_eq!(parse_length("mm"), None);
        assert!(close(parse_length("1.5e-3m").unwrap(), 1.5e-3));
        assert!(close(parse_length("-2").unwrap(), -2.0));
    }

    #[test]
    fn densities_and_spacings() {
        assert!(close(parse_density("3/cm").unwrap(), 300.0));
        assert!(close(parse_density("300/m").unwrap(), 300.0));
        assert!(close(parse_spacing("3/cm").unwrap(), 1.0 / 300.0));
        assert!(close(parse_spacing("1cm").unwrap(), 0.01));
        assert_eq!(parse_density("3cm"), None);
    }

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.scenario.rig, RigParams::default());
        assert_eq!(cfg.scenario.target, Point3::new(0.0, 0.0, 100.0));
        assert!(close(cfg.scenario.local.spacing, 1.0 / 300.0));
        assert_eq!(cfg.sweep.values.len(), 11);
    }

    #[test]
    fn full_config() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [rig]
            baseline = "50m"
            focal_length = "25mm"
            pixel_size = 1e-5
            pixel_count = 4096
            [target]
            position = [1, "-2m", "150m"]
            [grid]
            spacing = "2/cm"
            margin = 2.0
            phase = "target"
            [sweep]
            parameter = "focal"
            values = ["10mm", "20mm", "40mm"]
            [plane]
            plane = "xz"
            extent = "50m"
            step = "10m"
            [converge]
            densities = ["1/cm", "300/m"]
            baselines = [20]
            [output]
            dir = "results"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scenario.rig.baseline, 50.0);
        assert!(close(cfg.scenario.rig.focal_length, 0.025));
        assert_eq!(cfg.scenario.rig.pixel_count, 4096);
        assert_eq!(cfg.scenario.target, Point3::new(1.0, -2.0, 150.0));
        assert!(close(cfg.scenario.local.spacing, 0.005));
        assert_eq!(cfg.scenario.local.phase, Vector3::zeros());
        assert_eq!(cfg.sweep.parameter, SweepParameter::FocalLength);
        assert!(close(cfg.sweep.values[2], 0.04));
        assert_eq!(cfg.plane.plane, Plane::XZ);
        assert_eq!(cfg.plane.center, cfg.scenario.target);
        assert!(close(cfg.converge.densities[1], 300.0));
        assert_eq!(cfg.output_dir, PathBuf::from("results"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::from_toml_str("[rig]\nbaseline = \"-3m\""), Err(ConfigError::NonPositive { .. })));
        assert!(matches!(RunConfig::from_toml_str("[rig]\nbaseline = \"3 furlongs\""), Err(ConfigError::Quantity { .. })));
        assert!(matches!(RunConfig::from_toml_str("[sweep]\nparameter = \"zoom\""), Err(ConfigError::UnknownParameter(_))));
        assert!(matches!(RunConfig::from_toml_str("[plane]\nplane = \"XW\""), Err(ConfigError::UnknownPlane(_))));
        assert!(matches!(RunConfig::from_toml_str("[grid]\nphase = [0.5, 1.5, 0]"), Err(ConfigError::Phase(_))));
        assert!(matches!(RunConfig::from_toml_str("[rig]\nbogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml_str("[grid]\nmargin = 0"), Err(ConfigError::NonPositive { .. })));
    }

    #[test]
    fn phase_strings() {
        assert_eq!(parse_phase("centered").unwrap(), LocalGrid::CELL_CENTERED);
        assert_eq!(parse_phase("0.1, 0.2, 0.3").unwrap(), Vector3::new(0.1, 0.2, 0.3));
        assert!(parse_phase("0.1,0.2").is_err());
    }
}
