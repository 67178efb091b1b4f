//! Run configuration: a TOML or JSON document, overridden by flags.

use std::path::{Path, PathBuf};

use inhomo::ensemble::QuadratureGrid;
use inhomo::optimize::{FigureId, ParamPath, SweepAxis, SweepQuantity};
use inhomo::scheme::{preset, LevelScheme, PresetKind, PresetParams, COUPLING_ID, PROBE_ID, RECOVERY_ID};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const WORKERS_ENV: &str = "INHOMO_WORKERS";

/// Where the level scheme comes from. At most one of `preset`, `file` and
/// `definition` may be set; a bare config means the N-type preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub preset: Option<String>,
    /// Overrides on the preset's default parameters.
    pub params: Option<Map<String, Value>>,
    /// JSON file holding a full scheme.
    pub file: Option<PathBuf>,
    /// Full scheme given inline.
    pub definition: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: usize,
    /// Half-width of the ensemble grid in units of sigma.
    pub span: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nodes: inhomo::ensemble::DEFAULT_NODES, span: inhomo::ensemble::DEFAULT_SPAN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub output: Option<PathBuf>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { from: -600.0, to: 400.0, points: 1001, output: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Recovery Rabi bounds; defaults to the plan value +-15 MHz.
    pub omega_r: Option<(f64, f64)>,
    /// Recovery detuning bounds; defaults to the plan value +-50 MHz.
    pub delta_r: Option<(f64, f64)>,
    pub grid_points: usize,
    pub output: Option<PathBuf>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig { omega_r: None, delta_r: None, grid_points: 11, output: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<SweepAxis>,
    pub quantity: SweepQuantity,
    pub output: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { axes: Vec::new(), quantity: SweepQuantity::Beta, output: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    pub id: Option<FigureId>,
    pub out_dir: PathBuf,
}

impl Default for FigureConfig {
    fn default() -> Self {
        FigureConfig { id: None, out_dir: PathBuf::from("figures") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {
    pub criteria: Vec<u8>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig { criteria: inhomo::acceptance::CRITERIA.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Workers {
    Count(usize),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workers: Option<Workers>,
    pub scheme: SchemeConfig,
    pub grid: GridConfig,
    pub spectrum: SpectrumConfig,
    pub optimize: OptimizeConfig,
    pub sweep: SweepConfig,
    pub figure: FigureConfig,
    pub selftest: SelftestConfig,
}

/// Parse a config document; TOML unless the path ends in `.json`.
pub fn parse_document(text: &str, path: &Path) -> Result<RunConfig, CliError> {
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
            message: e.to_string(),
        })?
    } else {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Parse {
            location: match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("{}:{line}", path.display())
                }
                None => path.display().to_string(),
            },
            message: e.message().to_string(),
        })?;
        serde_json::to_value(table).map_err(|e| CliError::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?
    };
    from_value(value)
}

pub fn from_value(value: Value) -> Result<RunConfig, CliError> {
    let config: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Validation {
        field: "config".into(),
        message: e.to_string(),
    })?;
    // surface bad preset parameters now rather than at first use
    config.preset_params()?;
    Ok(config)
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation {
        field: "--config".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_document(&text, path)
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Validation { field: field.into(), message: message.into() }
}

impl RunConfig {
    pub fn preset_kind(&self) -> Result<Option<PresetKind>, CliError> {
        let s = &self.scheme;
        let sources = [s.preset.is_some(), s.file.is_some(), s.definition.is_some()];
        if sources.iter().filter(|x| **x).count() > 1 {
            return Err(invalid("scheme", "set only one of preset, file and definition"));
        }
        if s.params.is_some() && s.preset.is_none() && (s.file.is_some() || s.definition.is_some()) {
            return Err(invalid("scheme.params", "parameters apply to presets only"));
        }
        if s.file.is_some() || s.definition.is_some() {
            return Ok(None);
        }
        let name = s.preset.as_deref().unwrap_or("n_type");
        name.parse().map(Some).map_err(|e: inhomo::Error| invalid("scheme.preset", e.to_string()))
    }

    /// Preset defaults for the chosen kind with the configured overrides.
    pub fn preset_params(&self) -> Result<Option<PresetParams>, CliError> {
        let Some(kind) = self.preset_kind()? else { return Ok(None) };
        let defaults = match kind {
            PresetKind::LadderRydberg => PresetParams::ladder(),
            _ => PresetParams::default(),
        };
        let mut merged = match serde_json::to_value(defaults) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("preset parameters serialize to an object"),
        };
        for (k, v) in self.scheme.params.iter().flatten() {
            if !merged.contains_key(k) {
                return Err(invalid(&format!("scheme.params.{k}"), format!("unknown parameter {k:?}")));
            }
            merged.insert(k.clone(), v.clone());
        }
        serde_json::from_value(Value::Object(merged))
            .map(Some)
            .map_err(|e| invalid("scheme.params", e.to_string()))
    }

    /// Record a preset-parameter override from a flag.
    pub fn set_param(&mut self, key: &str, value: Value) {
        self.scheme.params.get_or_insert_with(Map::new).insert(key.to_string(), value);
    }

    pub fn build_scheme(&self) -> Result<LevelScheme, CliError> {
        if let Some(p) = self.preset_params()? {
            return Ok(preset(self.preset_kind()?.unwrap(), &p)?);
        }
        if let Some(path) = &self.scheme.file {
            if !path.exists() {
                return Err(invalid("scheme.file", format!("{} does not exist", path.display())));
            }
            let text = std::fs::read_to_string(path).map_err(|e| invalid("scheme.file", e.to_string()))?;
            return Ok(LevelScheme::from_json(&text)?);
        }
        let def = self.scheme.definition.clone().unwrap();
        Ok(LevelScheme::from_json(&def.to_string())?)
    }

    pub fn grid(&self) -> Result<QuadratureGrid, CliError> {
        QuadratureGrid::new(self.grid.nodes, self.grid.span).map_err(|e| invalid("grid", e.to_string()))
    }

    /// Worker count: config or flag first, then the environment, else all cores.
    pub fn worker_count(&self) -> Result<Option<usize>, CliError> {
        match &self.workers {
            Some(Workers::Count(0)) => Err(invalid("workers", "must be at least 1")),
            Some(Workers::Count(n)) => Ok(Some(*n)),
            Some(Workers::Auto(_)) => Ok(None),
            None => match std::env::var(WORKERS_ENV) {
                Ok(v) if v == "auto" || v.is_empty() => Ok(None),
                Ok(v) => match v.parse::<usize>() {
                    Ok(n) if n > 0 => Ok(Some(n)),
                    _ => Err(invalid(WORKERS_ENV, format!("expected a positive count or \"auto\", got {v:?}"))),
                },
                Err(_) => Ok(None),
            },
        }
    }

    pub fn validate_spectrum(&self) -> Result<(), CliError> {
        let s = &self.spectrum;
        if !(s.from < s.to) {
            return Err(invalid("spectrum", format!("empty range [{}, {}]", s.from, s.to)));
        }
        if s.points < 2 {
            return Err(invalid("spectrum.points", "need at least 2 points"));
        }
        Ok(())
    }
}

/// Apply field overrides to a scheme loaded from a file or inline
/// definition, where preset parameters do not exist.
pub fn apply_field_overrides(scheme: LevelScheme, overrides: &[(&str, f64)]) -> Result<LevelScheme, CliError> {
    let mut s = scheme;
    for (key, value) in overrides {
        s = match *key {
            "omega" => s.with_rabi(COUPLING_ID, *value)?,
            "delta" => s.with_detuning(COUPLING_ID, *value)?,
            "omega_r" => s.with_rabi(RECOVERY_ID, *value)?,
            "delta_r" => s.with_detuning(RECOVERY_ID, *value)?,
            "probe_rabi" => s.with_rabi(PROBE_ID, *value)?,
            "probe_detuning" => s.with_detuning(PROBE_ID, *value)?,
            other => return Err(invalid(other, "only field parameters can be overridden on a scheme file")),
        };
    }
    Ok(s)
}

/// `path=from:to:n` or `path=v1,v2,...`.
pub fn parse_axis(text: &str) -> Result<SweepAxis, CliError> {
    let (path, spec) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("axis {text:?} is not <path>=<values>")))?;
    let path: ParamPath = path.parse().map_err(|e: inhomo::Error| CliError::Usage(e.to_string()))?;
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number {s:?} in axis {text:?}")));
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!("range axis {text:?} must be from:to:n")));
        }
        let n: usize = parts[2].trim().parse().map_err(|_| CliError::Usage(format!("bad count in axis {text:?}")))?;
        if n == 0 {
            return Err(CliError::Usage(format!("axis {text:?} has no points")));
        }
        inhomo::ensemble::linspace(number(parts[0])?, number(parts[1])?, n)
    } else {
        spec.split(',').map(number).collect::<Result<_, _>>()?
    };
    Ok(SweepAxis { path, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toml(text: &str) -> Result<RunConfig, CliError> {
        parse_document(text, Path::new("run.toml"))
    }

    #[test]
    fn minimal_preset_fills_defaults() {
        let c = toml("[scheme]\npreset = \"n_type\"\n").unwrap();
        assert_eq!(c.grid, GridConfig { nodes: 4001, span: 5.0 });
        let s = c.build_scheme().unwrap();
        assert!((s.probe().rabi - 0.02875).abs() < 1e-15);
        assert_eq!(s.inhom().sigma, 220.0);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = toml("[scheme]\npreset = \"n_type\"\n[scheme.params]\nsigmma = 200\n").unwrap_err();
        assert!(matches!(err, CliError::Validation { .. }));
        assert!(err.to_string().contains("sigmma"), "{err}");
        let err = toml("[grid]\nnodez = 11\n").unwrap_err();
        assert!(err.to_string().contains("nodez"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let err = toml("[grid]\nnodes = = 3\n").unwrap_err();
        match err {
            CliError::Parse { location, .. } => assert_eq!(location, "run.toml:2"),
            other => panic!("{other:?}"),
        }
        let err = parse_document("{\"grid\": }", Path::new("run.json")).unwrap_err();
        assert!(matches!(err, CliError::Parse { .. }));
    }

    #[test]
    fn ladder_defaults_and_overrides() {
        let mut c = toml("[scheme]\npreset = \"ladder_rydberg\"\n[scheme.params]\ndelta_r = 5.0\n").unwrap();
        let p = c.preset_params().unwrap().unwrap();
        assert_eq!((p.omega, p.omega_r, p.delta_r), (55.0, 45.0, 5.0));
        c.set_param("delta_r", Value::from(-3.0));
        assert_eq!(c.preset_params().unwrap().unwrap().delta_r, -3.0);
    }

    #[test]
    fn conflicting_sources_rejected() {
        let err = toml("[scheme]\npreset = \"n_type\"\nfile = \"x.json\"\n").unwrap_err();
        assert!(matches!(err, CliError::Validation { .. }));
        let c = toml("[scheme]\nfile = \"/nonexistent/scheme.json\"\n").unwrap();
        assert!(c.build_scheme().is_err());
    }

    #[test]
    fn workers() {
        assert_eq!(toml("workers = 3\n").unwrap().worker_count().unwrap(), Some(3));
        assert_eq!(toml("workers = \"auto\"\n").unwrap().worker_count().unwrap(), None);
        assert!(toml("workers = 0\n").unwrap().worker_count().is_err());
        assert!(toml("workers = \"many\"\n").is_err());
    }

    #[test]
    fn axes() {
        let a = parse_axis("recovery.rabi=20:30:3").unwrap();
        assert_eq!(a.values, vec![20.0, 25.0, 30.0]);
        let a = parse_axis("coupling.detuning=-270,-260").unwrap();
        assert_eq!(a.values, vec![-270.0, -260.0]);
        assert!(parse_axis("recovery.rabi").is_err());
        assert!(parse_axis("recovery.width=1,2").is_err());
        assert!(parse_axis("recovery.rabi=1:2").is_err());
    }

    #[test]
    fn sweep_section_from_toml() {
        let c = toml(
            "[sweep]\nquantity = \"peak_detuning\"\n[[sweep.axes]]\npath = \"recovery.detuning\"\nvalues = [-280.0, -270.0]\n",
        )
        .unwrap();
        assert_eq!(c.sweep.quantity, SweepQuantity::PeakDetuning);
        assert_eq!(c.sweep.axes[0].path.to_string(), "recovery.detuning");
    }
}
