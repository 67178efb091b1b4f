use std::io::Write;
use std::path::Path;

use inhomo::acceptance;
use inhomo::ensemble;
use inhomo::format::sig9;
use inhomo::optimize::{self, FigureId, OptimizeBounds, OptimizeOptions, SweepSpec};
use inhomo::recovery::{compensation_plan, predict as predict_beta, EnhancementInputs};
use inhomo::scheme::{LevelScheme, COUPLING_ID, RECOVERY_ID};
use serde::Serialize;
use serde_json::Value;

use crate::config::{apply_field_overrides, RunConfig};
use crate::error::CliError;

pub fn parse_pair(flag: &str, text: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    let bad = || CliError::Usage(format!("{flag} expects lo,hi, got {text:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo = parts[0].trim().parse().map_err(|_| bad())?;
    let hi = parts[1].trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

/// Round every float to nine significant digits.
fn round9(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            sig9(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round9).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round9(v))).collect()),
        other => other,
    }
}

fn to_json(value: &impl Serialize) -> String {
    let v = serde_json::to_value(value).expect("report serializes");
    serde_json::to_string_pretty(&round9(v)).expect("json value serializes")
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Output { path: p.display().to_string(), message: e.to_string() }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
                .map_err(|e| CliError::Output { path: "stdout".into(), message: e.to_string() })
        }
    }
}

pub fn print_config(config: &RunConfig) -> Result<(), CliError> {
    write_out(None, &serde_json::to_string_pretty(config).expect("config serializes"))
}

fn scheme(config: &RunConfig, overrides: &[(&str, f64)]) -> Result<LevelScheme, CliError> {
    apply_field_overrides(config.build_scheme()?, overrides)
}

pub fn spectrum(config: &RunConfig, overrides: &[(&str, f64)]) -> Result<(), CliError> {
    config.validate_spectrum()?;
    let s = scheme(config, overrides)?;
    let c = &config.spectrum;
    let sp = ensemble::spectrum(&s, (c.from, c.to), c.points, &config.grid()?)?;
    match &config.spectrum.output {
        Some(path) => Ok(sp.write(path)?),
        None => write_out(None, &sp.to_csv()),
    }
}

/// Coupling Rabi frequency, detuning and shift ratio of the configured scheme.
fn coupling_and_eta(config: &RunConfig, overrides: &[(&str, f64)]) -> Result<(f64, f64, f64), CliError> {
    if let Some(p) = config.preset_params()? {
        return Ok((p.omega, p.delta, p.eta));
    }
    let s = scheme(config, overrides)?;
    let c = s.field(COUPLING_ID).ok_or_else(|| CliError::Validation {
        field: "scheme".into(),
        message: "no coupling field".into(),
    })?;
    let eta = match s.field(RECOVERY_ID) {
        Some(r) if c.shift_coefficient != 0.0 => r.shift_coefficient / c.shift_coefficient,
        _ => 1.0,
    };
    Ok((c.rabi, c.detuning, eta))
}

pub fn plan(config: &RunConfig, overrides: &[(&str, f64)]) -> Result<(), CliError> {
    let (omega, delta, eta) = coupling_and_eta(config, overrides)?;
    write_out(None, &to_json(&compensation_plan(omega, delta, eta)?))
}

pub fn predict(config: &RunConfig) -> Result<(), CliError> {
    let p = config.preset_params()?.ok_or_else(|| CliError::Validation {
        field: "scheme".into(),
        message: "predict needs a preset scheme and its parameters".into(),
    })?;
    let inputs = EnhancementInputs {
        omega: p.omega,
        delta: p.delta,
        sigma: p.sigma,
        gamma: p.gamma,
        omega_r: p.omega_r,
        delta_r: p.delta_r,
        sigma_r: p.eta * p.sigma,
        gamma_r: p.gamma_r,
        gamma_sg: p.gamma_sg,
    };
    write_out(None, &to_json(&predict_beta(&inputs)?))
}

pub fn optimize(config: &RunConfig, overrides: &[(&str, f64)]) -> Result<(), CliError> {
    let s = scheme(config, overrides)?;
    let (omega, delta, eta) = coupling_and_eta(config, overrides)?;
    let around = OptimizeBounds::around_plan(omega, delta, eta, 15.0, 50.0)?;
    let bounds = OptimizeBounds {
        omega_r: config.optimize.omega_r.unwrap_or(around.omega_r),
        delta_r: config.optimize.delta_r.unwrap_or(around.delta_r),
    };
    let options = OptimizeOptions { grid_points: config.optimize.grid_points, ..OptimizeOptions::default() };
    let report = optimize::maximize_beta(&s, bounds, &config.grid()?, &options)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_out(config.optimize.output.as_deref(), &to_json(&report))
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    output: &'a Path,
    scheme_digest: String,
    grid_nodes: usize,
    grid_span: f64,
    axes: Vec<String>,
    quantity: optimize::SweepQuantity,
    rows: usize,
    failed_rows: usize,
}

pub fn sweep(config: &RunConfig, overrides: &[(&str, f64)]) -> Result<(), CliError> {
    if config.sweep.axes.is_empty() {
        return Err(CliError::Usage("sweep needs at least one --axis".into()));
    }
    let spec = SweepSpec {
        base: scheme(config, overrides)?,
        axes: config.sweep.axes.clone(),
        quantity: config.sweep.quantity,
        search: Default::default(),
    };
    let grid = config.grid()?;
    let table = optimize::sweep(&spec, &grid)?;
    let out = config.sweep.output.as_deref();
    write_out(out, &table.to_csv())?;
    if let Some(path) = out {
        let manifest = SweepManifest {
            output: path,
            scheme_digest: spec.base.digest(),
            grid_nodes: grid.len(),
            grid_span: grid.span(),
            axes: table.axes.clone(),
            quantity: table.quantity,
            rows: table.rows.len(),
            failed_rows: table.rows.iter().filter(|r| r.result.is_none()).count(),
        };
        let mut name = path.as_os_str().to_owned();
        name.push(".manifest.json");
        write_out(Some(Path::new(&name)), &to_json(&manifest))?;
    }
    Ok(())
}

pub fn figure(config: &RunConfig) -> Result<(), CliError> {
    let ids: Vec<FigureId> = match config.figure.id {
        Some(id) => vec![id],
        None => FigureId::ALL.to_vec(),
    };
    let grid = config.grid()?;
    for id in ids {
        let manifest = optimize::reproduce_figure(id, &config.figure.out_dir, &grid)?;
        write_out(None, &to_json(&manifest))?;
    }
    Ok(())
}

pub fn selftest(config: &RunConfig) -> Result<bool, CliError> {
    let grid = config.grid()?;
    let reports = acceptance::run(&config.selftest.criteria, &grid, |r| println!("{r}"));
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("{passed} of {} criteria passed", reports.len());
    Ok(passed == reports.len())
}
