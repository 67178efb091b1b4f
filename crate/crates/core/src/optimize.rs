//! Enhancement measurement, parameter sweeps, recovery-field optimization and
//! figure reproduction.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{linspace, locate_peak, spectrum_at, EnsembleEvaluator, Peak, QuadratureGrid, Spectrum};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::liouville::{level_energy_at_rest, SolveDiagnostics};
use crate::recovery::{self, compensation_plan, omega_for_mu, EnhancementInputs};
use crate::scheme::{preset, LevelScheme, PresetKind, PresetParams, COUPLING_ID, RECOVERY_ID};

/// How a two-photon peak is searched for around its expected position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakSearch {
    /// Half-width of the search interval, MHz.
    pub half_width: f64,
    pub coarse: usize,
    /// Final bracket width, MHz.
    pub tol: f64,
}

impl Default for PeakSearch {
    fn default() -> Self {
        PeakSearch { half_width: 6.0, coarse: 25, tol: 1e-3 }
    }
}

/// The level reached from the probe transition by the coupling field.
pub fn two_photon_level(scheme: &LevelScheme) -> Result<usize> {
    let probe = scheme.probe();
    let coupling = scheme
        .field(COUPLING_ID)
        .ok_or_else(|| Error::InvalidScheme("no coupling field".into()))?;
    [coupling.lower, coupling.upper]
        .into_iter()
        .find(|l| *l != probe.lower && *l != probe.upper)
        .ok_or_else(|| Error::InvalidScheme("coupling field does not leave the probe transition".into()))
}

/// Probe detuning at which the absorber at rest is two-photon resonant.
pub fn two_photon_resonance(scheme: &LevelScheme) -> Result<f64> {
    let level = two_photon_level(scheme)?;
    let e0 = level_energy_at_rest(scheme, level, 0.0);
    let slope = level_energy_at_rest(scheme, level, 1.0) - e0;
    if slope == 0.0 {
        return Err(Error::InvalidScheme("two-photon level does not depend on the probe".into()));
    }
    Ok(-e0 / slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub peak: Peak,
}

/// Measures enhancement factors against a fixed bare one-photon reference
/// and keeps the worst solve diagnostics seen.
pub struct BetaProbe {
    grid: QuadratureGrid,
    reference: Peak,
    search: PeakSearch,
    diagnostics: Mutex<SolveDiagnostics>,
}

impl BetaProbe {
    /// Reference taken from `scheme` with every non-probe field switched off.
    pub fn new(scheme: &LevelScheme, grid: &QuadratureGrid, search: PeakSearch) -> Result<Self> {
        let probe = BetaProbe {
            grid: grid.clone(),
            reference: Peak { detuning: 0.0, height: 1.0, at_edge: false },
            search,
            diagnostics: Mutex::new(SolveDiagnostics::default()),
        };
        let bare = scheme.bare();
        let w = (3.0 * bare.probe_gamma()).max(0.5 * bare.inhom().sigma);
        let reference = probe.peak_of(&bare, 0.0, w, 41, 1e-3)?;
        Ok(BetaProbe { reference, ..probe })
    }

    pub fn reference(&self) -> Peak {
        self.reference
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn diagnostics(&self) -> SolveDiagnostics {
        *self.diagnostics.lock().unwrap()
    }

    fn peak_of(&self, scheme: &LevelScheme, center: f64, half_width: f64, coarse: usize, tol: f64) -> Result<Peak> {
        let ev = EnsembleEvaluator::new(scheme, &self.grid);
        locate_peak(
            |x| {
                let v = ev.eval(x)?;
                self.diagnostics.lock().unwrap().merge(&v.diagnostics);
                Ok(v.absorption)
            },
            center - half_width,
            center + half_width,
            coarse,
            tol,
        )
    }

    /// Two-photon peak of `scheme` relative to the reference peak.
    pub fn measure(&self, scheme: &LevelScheme) -> Result<BetaPoint> {
        let center = two_photon_resonance(scheme)?;
        let s = self.search;
        let peak = self.peak_of(scheme, center, s.half_width, s.coarse, s.tol)?;
        Ok(BetaPoint { beta: peak.height / self.reference.height, peak })
    }
}

/// A scheme parameter addressed as `<field id>.rabi` or `<field id>.detuning`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ParamPath {
    pub field: String,
    pub attribute: FieldAttribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldAttribute {
    Rabi,
    Detuning,
}

impl FromStr for ParamPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (field, attr) = s
            .rsplit_once('.')
            .ok_or_else(|| Error::BadSweep(format!("parameter path {s:?} is not <field>.<attribute>")))?;
        let attribute = match attr {
            "rabi" => FieldAttribute::Rabi,
            "detuning" => FieldAttribute::Detuning,
            other => return Err(Error::BadSweep(format!("unknown attribute {other:?} (rabi or detuning)"))),
        };
        Ok(ParamPath { field: field.to_string(), attribute })
    }
}

impl TryFrom<String> for ParamPath {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ParamPath> for String {
    fn from(p: ParamPath) -> String {
        p.to_string()
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let attr = match self.attribute {
            FieldAttribute::Rabi => "rabi",
            FieldAttribute::Detuning => "detuning",
        };
        write!(f, "{}.{}", self.field, attr)
    }
}

impl ParamPath {
    pub fn apply(&self, scheme: &LevelScheme, value: f64) -> Result<LevelScheme> {
        match self.attribute {
            FieldAttribute::Rabi => scheme.with_rabi(&self.field, value),
            FieldAttribute::Detuning => scheme.with_detuning(&self.field, value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: ParamPath,
    pub values: Vec<f64>,
}

/// Derived quantity reported for each sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepQuantity {
    /// Enhancement factor against the bare reference.
    Beta,
    /// Height of the two-photon peak, normalized absorption.
    Peak,
    /// Probe detuning of the two-photon peak.
    PeakDetuning,
    /// Transmission-window width at half the bare background, MHz.
    WindowWidth,
}

impl SweepQuantity {
    fn column(self) -> &'static str {
        match self {
            SweepQuantity::Beta => "beta",
            SweepQuantity::Peak => "peak_absorption_norm",
            SweepQuantity::PeakDetuning => "peak_detuning_mhz",
            SweepQuantity::WindowWidth => "window_width_mhz",
        }
    }
}

/// Width of the transmission window around the two-photon resonance,
/// sampled every `step` MHz out to a range set by the drive strengths.
pub fn window_width(scheme: &LevelScheme, grid: &QuadratureGrid, threshold: f64, step: f64) -> Result<f64> {
    let center = two_photon_resonance(scheme)?;
    let drive: f64 = scheme.fields().iter().filter(|f| f.id != crate::scheme::PROBE_ID).map(|f| f.rabi).sum();
    let half = 2.0 * drive + 20.0 * scheme.probe_gamma();
    let n = (2.0 * half / step).round() as usize + 1;
    let x = linspace(center - half, center + half, n);
    let with_fields = spectrum_at(scheme, &x, grid)?;
    let background = spectrum_at(&scheme.bare(), &x, grid)?;
    recovery::at_window_width(&with_fields, &background, center, threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: LevelScheme,
    pub axes: Vec<SweepAxis>,
    pub quantity: SweepQuantity,
    pub search: PeakSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub result: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub quantity: SweepQuantity,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let quantity = self.quantity.column();
        let mut out = self.axes.join(",");
        out.push_str(&format!(",{quantity},error\n"));
        for row in &self.rows {
            for v in &row.values {
                out.push_str(&sig9(*v));
                out.push(',');
            }
            if let Some(r) = row.result {
                out.push_str(&sig9(r));
            }
            out.push(',');
            if let Some(e) = &row.error {
                out.push_str(&e.replace([',', '\n'], ";"));
            }
            out.push('\n');
        }
        out
    }
}

/// Cartesian sweep; rows come out in lexicographic axis order (last axis
/// fastest). A failing row is flagged and the sweep continues.
pub fn sweep(spec: &SweepSpec, grid: &QuadratureGrid) -> Result<SweepTable> {
    if spec.axes.is_empty() {
        return Err(Error::BadSweep("no sweep axes".into()));
    }
    for axis in &spec.axes {
        if axis.values.is_empty() {
            return Err(Error::BadSweep(format!("axis {} has no values", axis.path)));
        }
        if spec.base.field(&axis.path.field).is_none() {
            return Err(Error::BadSweep(format!("no field {:?} in the scheme", axis.path.field)));
        }
    }
    let total: usize = spec.axes.iter().map(|a| a.values.len()).product();
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut k| {
            let mut v = vec![0.0; spec.axes.len()];
            for (i, axis) in spec.axes.iter().enumerate().rev() {
                v[i] = axis.values[k % axis.values.len()];
                k /= axis.values.len();
            }
            v
        })
        .collect();
    let probe = BetaProbe::new(&spec.base, grid, spec.search)?;
    let rows = points
        .into_par_iter()
        .map(|values| {
            let outcome = spec
                .axes
                .iter()
                .zip(&values)
                .try_fold(spec.base.clone(), |s, (axis, v)| axis.path.apply(&s, *v))
                .and_then(|s| match spec.quantity {
                    SweepQuantity::WindowWidth => window_width(&s, grid, 0.5, 0.5).map(|w| (w, false)),
                    q => probe.measure(&s).map(|p| {
                        let v = match q {
                            SweepQuantity::Beta => p.beta,
                            SweepQuantity::Peak => p.peak.height,
                            _ => p.peak.detuning,
                        };
                        (v, p.peak.at_edge)
                    }),
                });
            match outcome {
                Ok((v, at_edge)) => SweepRow {
                    values,
                    result: Some(v),
                    error: at_edge.then(|| "peak at search-window edge".to_string()),
                },
                Err(e) => SweepRow { values, result: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(SweepTable {
        axes: spec.axes.iter().map(|a| a.path.to_string()).collect(),
        quantity: spec.quantity,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeBounds {
    pub omega_r: (f64, f64),
    pub delta_r: (f64, f64),
}

impl OptimizeBounds {
    /// Window of `±omega_span` and `±delta_span` around the compensation plan.
    pub fn around_plan(omega: f64, delta: f64, eta: f64, omega_span: f64, delta_span: f64) -> Result<Self> {
        let plan = compensation_plan(omega, delta, eta)?;
        Ok(OptimizeBounds {
            omega_r: ((plan.omega_r - omega_span).max(0.0), plan.omega_r + omega_span),
            delta_r: (plan.delta_r - delta_span, plan.delta_r + delta_span),
        })
    }

    fn contains(&self, omega_r: f64, delta_r: f64) -> bool {
        (self.omega_r.0..=self.omega_r.1).contains(&omega_r) && (self.delta_r.0..=self.delta_r.1).contains(&delta_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub grid_points: usize,
    /// Simplex size at which the search stops, MHz.
    pub step_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub search: PeakSearch,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            grid_points: 11,
            step_tol: 0.1,
            rel_tol: 1e-3,
            max_iterations: 200,
            search: PeakSearch::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub omega_r: f64,
    pub delta_r: f64,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub omega_r: f64,
    pub delta_r: f64,
    pub beta: f64,
    pub evaluations: usize,
    pub reference_height: f64,
    /// Worst solve health over every evaluation.
    pub solve_health: SolveDiagnostics,
    pub trace: Vec<TracePoint>,
    pub warnings: Vec<String>,
}

/// Maximize the enhancement over recovery Rabi frequency and detuning:
/// a uniform scan of the bounds followed by Nelder-Mead from the best node.
pub fn maximize_beta(
    scheme: &LevelScheme,
    bounds: OptimizeBounds,
    grid: &QuadratureGrid,
    options: &OptimizeOptions,
) -> Result<OptimumReport> {
    let recovery = scheme
        .field(RECOVERY_ID)
        .ok_or_else(|| Error::InvalidScheme("no recovery field to optimize".into()))?;
    let coupling = scheme
        .field(COUPLING_ID)
        .ok_or_else(|| Error::InvalidScheme("no coupling field".into()))?;
    for (name, (lo, hi)) in [("omega_r", bounds.omega_r), ("delta_r", bounds.delta_r)] {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BadSweep(format!("bad {name} bounds [{lo}, {hi}]")));
        }
    }
    if bounds.omega_r.0 < 0.0 {
        return Err(Error::NonPhysicalParams { name: "omega_r lower bound", value: bounds.omega_r.0 });
    }
    let mut warnings = Vec::new();
    if coupling.shift_coefficient != 0.0 {
        let eta = recovery.shift_coefficient / coupling.shift_coefficient;
        if eta > 0.0 {
            let plan = compensation_plan(coupling.rabi, coupling.detuning, eta)?;
            if !bounds.contains(plan.omega_r, plan.delta_r) {
                warnings.push(format!(
                    "bounds exclude the compensation plan (omega_r {}, delta_r {})",
                    sig9(plan.omega_r),
                    sig9(plan.delta_r)
                ));
            }
        }
    }

    let probe = BetaProbe::new(scheme, grid, options.search)?;
    let trace = Mutex::new(Vec::new());
    let clamp = |x: [f64; 2]| [x[0].clamp(bounds.omega_r.0, bounds.omega_r.1), x[1].clamp(bounds.delta_r.0, bounds.delta_r.1)];
    let objective = |x: [f64; 2]| -> f64 {
        let x = clamp(x);
        let beta = scheme
            .with_rabi(RECOVERY_ID, x[0])
            .and_then(|s| s.with_detuning(RECOVERY_ID, x[1]))
            .and_then(|s| probe.measure(&s))
            .ok()
            .map(|p| p.beta);
        trace.lock().unwrap().push(TracePoint { omega_r: x[0], delta_r: x[1], beta });
        beta.unwrap_or(f64::NEG_INFINITY)
    };

    let n = options.grid_points.max(1);
    let axis = |b: (f64, f64)| if b.0 == b.1 || n == 1 { vec![b.0] } else { linspace(b.0, b.1, n) };
    let (om_axis, de_axis) = (axis(bounds.omega_r), axis(bounds.delta_r));
    let nodes: Vec<[f64; 2]> = om_axis.iter().flat_map(|o| de_axis.iter().map(move |d| [*o, *d])).collect();
    let values: Vec<f64> = nodes.par_iter().map(|x| objective(*x)).collect();
    // par_iter pushes to the trace in completion order; restore scan order
    {
        let mut t = trace.lock().unwrap();
        t.clear();
        for (x, v) in nodes.iter().zip(&values) {
            t.push(TracePoint { omega_r: x[0], delta_r: x[1], beta: v.is_finite().then_some(*v) });
        }
    }
    let best = (0..nodes.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    if !values[best].is_finite() {
        return Err(Error::BadSweep("every grid point failed".into()));
    }
    let step = |a: &[f64]| if a.len() > 1 { a[1] - a[0] } else { 0.0 };
    let steps = [step(&om_axis), step(&de_axis)];
    let (x, fx) = nelder_mead(
        |x| -objective(x),
        nodes[best],
        -values[best],
        steps,
        [bounds.omega_r.1, bounds.delta_r.1],
        options,
    );
    let x = clamp(x);
    let trace = trace.into_inner().unwrap();
    Ok(OptimumReport {
        omega_r: x[0],
        delta_r: x[1],
        beta: -fx,
        evaluations: trace.len(),
        reference_height: probe.reference().height,
        solve_health: probe.diagnostics(),
        trace,
        warnings,
    })
}

/// Nelder-Mead minimization over the coordinates with a nonzero step.
fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    x0: [f64; 2],
    f0: f64,
    steps: [f64; 2],
    upper: [f64; 2],
    options: &OptimizeOptions,
) -> ([f64; 2], f64) {
    let free: Vec<usize> = (0..2).filter(|&i| steps[i] > 0.0).collect();
    if free.is_empty() {
        return (x0, f0);
    }
    let mut simplex = vec![(x0, f0)];
    for &i in &free {
        let mut x = x0;
        x[i] += if x0[i] + steps[i] <= upper[i] { steps[i] } else { -steps[i] };
        simplex.push((x, f(x)));
    }
    let combine = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..options.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0], simplex[simplex.len() - 1]);
        let size = simplex
            .iter()
            .map(|(x, _)| ((x[0] - best.0[0]).powi(2) + (x[1] - best.0[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        let spread = (worst.1 - best.1).abs() / best.1.abs().max(f64::MIN_POSITIVE);
        if size < options.step_tol && spread < options.rel_tol {
            break;
        }
        let m = simplex.len() - 1;
        let mut centroid = [0.0; 2];
        for (x, _) in &simplex[..m] {
            centroid[0] += x[0] / m as f64;
            centroid[1] += x[1] / m as f64;
        }
        let xr = combine(centroid, worst.0, -1.0);
        let fr = f(xr);
        if fr < best.1 {
            let xe = combine(centroid, worst.0, -2.0);
            let fe = f(xe);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = combine(centroid, xr, 0.5);
                (xc, f(xc))
            } else {
                let xc = combine(centroid, worst.0, 0.5);
                (xc, f(xc))
            };
            if fc < worst.1.min(fr) {
                simplex[m] = (xc, fc);
            } else {
                for k in 1..simplex.len() {
                    let x = combine(best.0, simplex[k].0, 0.5);
                    simplex[k] = (x, f(x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Columns of numbers written as a CSV with nine significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| sig9(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1bd,
    Fig2,
    Fig3a,
    Fig3b,
    Fig4,
    Fig5,
}

impl FigureId {
    pub const ALL: [FigureId; 6] = [
        FigureId::Fig1bd,
        FigureId::Fig2,
        FigureId::Fig3a,
        FigureId::Fig3b,
        FigureId::Fig4,
        FigureId::Fig5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig1bd => "fig1bd",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3a => "fig3a",
            FigureId::Fig3b => "fig3b",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
        }
    }
}

impl FromStr for FigureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFigure(s.to_string()))
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tables of one figure plus a JSON summary of its parameters and headline
/// numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub figure: FigureId,
    pub tables: Vec<(String, Table)>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureManifest {
    pub figure: FigureId,
    pub grid_nodes: usize,
    pub grid_span: f64,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// N-type parameters for the far-detuned saturation study: both fields at
/// -5 GHz with equal linewidths.
pub fn far_detuned_params() -> PresetParams {
    PresetParams {
        delta: -5000.0,
        delta_r: -5000.0,
        gamma_r: 2.875,
        ..PresetParams::default()
    }
}

/// Saturation parameters of the far-detuned study: eight log-spaced values
/// on [0.3, 3] followed by points deep in saturation.
pub fn fig4_mu_values() -> Vec<f64> {
    let mut mu: Vec<f64> = (0..8).map(|i| 0.3 * 10f64.powf(i as f64 / 7.0)).collect();
    mu.extend([4.0, 6.0, 8.0, 12.0]);
    mu
}

fn detuning_grid(coarse: (f64, f64, usize), fine: &[(f64, f64, usize)]) -> Vec<f64> {
    let mut x = linspace(coarse.0, coarse.1, coarse.2);
    for &(lo, hi, n) in fine {
        x.extend(linspace(lo, hi, n));
    }
    x.sort_by(f64::total_cmp);
    x.dedup();
    x
}

fn spectra_table(columns: &[&str], x: &[f64], spectra: &[&Spectrum], extra: &[f64]) -> Table {
    let mut t = Table::new(columns);
    for (i, d) in x.iter().enumerate() {
        let mut row = vec![*d];
        row.extend(spectra.iter().map(|s| s.absorption[i]));
        row.extend_from_slice(extra);
        t.rows.push(row);
    }
    t
}

fn recovery_off(scheme: &LevelScheme) -> Result<LevelScheme> {
    scheme.with_rabi(RECOVERY_ID, 0.0)
}

fn fig1bd(grid: &QuadratureGrid) -> Result<FigureData> {
    let params = PresetParams::default();
    let on = preset(PresetKind::NType, &params)?;
    let off = recovery_off(&on)?;
    let probe = BetaProbe::new(&on, grid, PeakSearch::default())?;
    let limit = probe.reference().height;
    let center = params.delta;
    let x = detuning_grid((center - 20.0, center + 20.0, 401), &[(center - 2.0, center + 2.0, 201)]);
    let classes = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut tables = Vec::new();
    let mut summary = serde_json::Map::new();
    for (name, scheme) in [("fig1b", &off), ("fig1d", &on)] {
        let ev = EnsembleEvaluator::new(scheme, grid);
        let ensemble = ev.eval_many(&x)?;
        let model = crate::liouville::AbsorberModel::new(scheme);
        let mut cols = vec!["probe_detuning_mhz".to_string()];
        cols.extend(classes.iter().map(|u| format!("absorber_u{u:+}")));
        let mut absorbers = Table { columns: cols, rows: Vec::new() };
        for d in &x {
            let mut row = vec![*d];
            for u in classes {
                row.push(model.absorption(u, *d)?.0);
            }
            absorbers.rows.push(row);
        }
        let mut sum = Table::new(&["probe_detuning_mhz", "absorption_norm", "inhomogeneous_limit"]);
        for (d, v) in x.iter().zip(&ensemble) {
            sum.rows.push(vec![*d, v.absorption, limit]);
        }
        let max = ensemble.iter().map(|v| v.absorption).fold(f64::NEG_INFINITY, f64::max);
        summary.insert(format!("{name}_max_over_limit"), (max / limit).into());
        tables.push((format!("{name}_absorbers.csv"), absorbers));
        tables.push((format!("{name}_ensemble.csv"), sum));
    }
    summary.insert("scheme_digest".into(), on.digest().into());
    Ok(FigureData { figure: FigureId::Fig1bd, tables, summary: summary.into() })
}

fn spectra_with_limit(
    figure: FigureId,
    on: &LevelScheme,
    coarse: (f64, f64, usize),
    fine_half_width: f64,
    grid: &QuadratureGrid,
) -> Result<FigureData> {
    let off = recovery_off(on)?;
    let bare = on.bare();
    let center = two_photon_resonance(on)?;
    let x = detuning_grid(coarse, &[(center - fine_half_width, center + fine_half_width, 201)]);
    let s_on = spectrum_at(on, &x, grid)?;
    let s_off = spectrum_at(&off, &x, grid)?;
    let s_bare = spectrum_at(&bare, &x, grid)?;
    let probe = BetaProbe::new(on, grid, PeakSearch::default())?;
    let limit = probe.reference().height;
    let with_recovery = probe.measure(on)?;
    let without_recovery = probe.measure(&off)?;
    let table = spectra_table(
        &["probe_detuning_mhz", "recovery_on", "recovery_off", "bare", "inhomogeneous_limit"],
        &x,
        &[&s_on, &s_off, &s_bare],
        &[limit],
    );
    let mut diag = s_on.diagnostics();
    diag.merge(&s_off.diagnostics());
    diag.merge(&s_bare.diagnostics());
    diag.merge(&probe.diagnostics());
    let summary = serde_json::json!({
        "scheme_digest": on.digest(),
        "two_photon_resonance_mhz": center,
        "inhomogeneous_limit": limit,
        "beta_recovery_on": with_recovery.beta,
        "beta_recovery_off": without_recovery.beta,
        "peak_detuning_recovery_on_mhz": with_recovery.peak.detuning,
        "solves_healthy": diag.healthy(),
    });
    Ok(FigureData { figure, tables: vec![(format!("{}_spectra.csv", figure.name()), table)], summary })
}

fn fig3a(grid: &QuadratureGrid) -> Result<FigureData> {
    let base = preset(PresetKind::NType, &PresetParams::default())?;
    let probe = BetaProbe::new(&base, grid, PeakSearch::default())?;
    let mut table = Table::new(&["omega_mhz", "omega_r_mhz", "delta_r_mhz", "beta"]);
    let mut best_delta = serde_json::Map::new();
    for omega in [15.0, 22.0, 29.0, 36.0] {
        let s = base.with_rabi(COUPLING_ID, omega)?.with_rabi(RECOVERY_ID, omega)?;
        let delta = s.field(COUPLING_ID).unwrap().detuning;
        let opt = locate_peak(
            |dr| probe.measure(&s.with_detuning(RECOVERY_ID, dr)?).map(|p| p.beta),
            delta - 50.0,
            delta + 50.0,
            11,
            0.5,
        )?;
        best_delta.insert(format!("{omega}"), opt.detuning.into());
        let s = s.with_detuning(RECOVERY_ID, opt.detuning)?;
        for omega_r in linspace(0.5 * omega, 1.5 * omega, 11) {
            let beta = probe.measure(&s.with_rabi(RECOVERY_ID, omega_r)?)?.beta;
            table.rows.push(vec![omega, omega_r, opt.detuning, beta]);
        }
    }
    let summary = serde_json::json!({
        "scheme_digest": base.digest(),
        "optimized_delta_r_mhz": best_delta,
        "solves_healthy": probe.diagnostics().healthy(),
    });
    Ok(FigureData { figure: FigureId::Fig3a, tables: vec![("fig3a_beta_vs_omega_r.csv".into(), table)], summary })
}

fn fig3b(grid: &QuadratureGrid) -> Result<FigureData> {
    let base = preset(PresetKind::NType, &PresetParams::default())?;
    let probe = BetaProbe::new(&base, grid, PeakSearch::default())?;
    let mut table = Table::new(&["delta_r_mhz", "beta", "peak_detuning_mhz"]);
    for dr in linspace(-330.0, -210.0, 25) {
        let p = probe.measure(&base.with_detuning(RECOVERY_ID, dr)?)?;
        table.rows.push(vec![dr, p.beta, p.peak.detuning]);
    }
    let summary = serde_json::json!({
        "scheme_digest": base.digest(),
        "solves_healthy": probe.diagnostics().healthy(),
    });
    Ok(FigureData { figure: FigureId::Fig3b, tables: vec![("fig3b_beta_vs_delta_r.csv".into(), table)], summary })
}

/// Simulated and closed-form enhancement against the saturation parameter
/// for the far-detuned symmetric scheme.
pub fn fig4_table(grid: &QuadratureGrid) -> Result<(Table, SolveDiagnostics)> {
    let p = far_detuned_params();
    let base = preset(PresetKind::NType, &p)?;
    let probe = BetaProbe::new(&base, grid, PeakSearch { half_width: 3.0, ..PeakSearch::default() })?;
    let beta0 = recovery::inhomogeneous_limit(p.sigma, p.gamma)?;
    let asymptote = beta0 * p.gamma / (p.gamma + p.gamma_r);
    let mut table = Table::new(&[
        "mu",
        "omega_mhz",
        "beta_simulated",
        "beta_closed_form",
        "saturation_asymptote",
    ]);
    for mu in fig4_mu_values() {
        let omega = omega_for_mu(mu, p.delta, p.sigma, p.gamma, p.gamma_r, p.gamma_sg);
        let s = base.with_rabi(COUPLING_ID, omega)?.with_rabi(RECOVERY_ID, omega)?;
        let sim = probe.measure(&s)?;
        let closed = recovery::predict(&EnhancementInputs {
            omega,
            delta: p.delta,
            sigma: p.sigma,
            gamma: p.gamma,
            omega_r: omega,
            delta_r: p.delta_r,
            sigma_r: p.sigma,
            gamma_r: p.gamma_r,
            gamma_sg: p.gamma_sg,
        })?;
        table.rows.push(vec![mu, omega, sim.beta, closed.beta, asymptote]);
    }
    Ok((table, probe.diagnostics()))
}

fn fig4(grid: &QuadratureGrid) -> Result<FigureData> {
    let (table, diag) = fig4_table(grid)?;
    let summary = serde_json::json!({
        "scheme_digest": preset(PresetKind::NType, &far_detuned_params())?.digest(),
        "solves_healthy": diag.healthy(),
    });
    Ok(FigureData { figure: FigureId::Fig4, tables: vec![("fig4_beta_vs_mu.csv".into(), table)], summary })
}

/// Compute one figure's tables.
pub fn figure_data(id: FigureId, grid: &QuadratureGrid) -> Result<FigureData> {
    match id {
        FigureId::Fig1bd => fig1bd(grid),
        FigureId::Fig2 => {
            let on = preset(PresetKind::NType, &PresetParams::default())?;
            spectra_with_limit(id, &on, (-600.0, 400.0, 1001), 5.0, grid)
        }
        FigureId::Fig3a => fig3a(grid),
        FigureId::Fig3b => fig3b(grid),
        FigureId::Fig4 => fig4(grid),
        FigureId::Fig5 => {
            let on = preset(PresetKind::LadderRydberg, &PresetParams::ladder())?;
            spectra_with_limit(id, &on, (-150.0, 150.0, 601), 3.0, grid)
        }
    }
}

/// Write a figure's CSV files and a `<figure>_manifest.json` into `out_dir`.
pub fn reproduce_figure(id: FigureId, out_dir: &Path, grid: &QuadratureGrid) -> Result<FigureManifest> {
    let data = figure_data(id, grid)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    for (name, table) in &data.tables {
        let path = out_dir.join(name);
        std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
        files.push(PathBuf::from(name));
    }
    let manifest = FigureManifest {
        figure: id,
        grid_nodes: grid.len(),
        grid_span: grid.span(),
        files,
        summary: data.summary,
    };
    let path = out_dir.join(format!("{}_manifest.json", id.name()));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_paths() {
        let p: ParamPath = "recovery.rabi".parse().unwrap();
        assert_eq!(p.field, "recovery");
        assert_eq!(p.attribute, FieldAttribute::Rabi);
        assert_eq!(p.to_string(), "recovery.rabi");
        assert!("recovery".parse::<ParamPath>().is_err());
        assert!("recovery.sigma".parse::<ParamPath>().is_err());
    }

    #[test]
    fn resonance_positions() {
        let n = preset(PresetKind::NType, &PresetParams::default()).unwrap();
        assert!((two_photon_resonance(&n).unwrap() + 270.0).abs() < 1e-12);
        let l = preset(PresetKind::LadderRydberg, &PresetParams { delta: 40.0, ..PresetParams::ladder() }).unwrap();
        assert!((two_photon_resonance(&l).unwrap() + 40.0).abs() < 1e-12);
        let two = preset(PresetKind::TwoLevel, &PresetParams::default()).unwrap();
        assert!(two_photon_resonance(&two).is_err());
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let opts = OptimizeOptions { step_tol: 1e-4, rel_tol: 1e-9, ..OptimizeOptions::default() };
        let f = |x: [f64; 2]| 1.0 + (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let (x, fx) = nelder_mead(f, [0.0, 0.0], f([0.0, 0.0]), [1.0, 1.0], [10.0, 10.0], &opts);
        assert!((x[0] - 3.0).abs() < 1e-3 && (x[1] + 1.0).abs() < 1e-3, "{x:?}");
        assert!((fx - 1.0).abs() < 1e-6);
        // one frozen coordinate
        let (x, _) = nelder_mead(f, [0.0, 0.0], f([0.0, 0.0]), [1.0, 0.0], [10.0, 10.0], &opts);
        assert!((x[0] - 3.0).abs() < 1e-3 && x[1] == 0.0);
    }

    #[test]
    fn figure_ids() {
        for f in FigureId::ALL {
            assert_eq!(f.name().parse::<FigureId>().unwrap(), f);
        }
        assert_eq!("fig9".parse::<FigureId>(), Err(Error::UnknownFigure("fig9".into())));
    }

    #[test]
    fn table_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec![1.0, -0.5]);
        assert_eq!(t.to_csv(), "a,b\n1.00000000e0,-5.00000000e-1\n");
        assert_eq!(t.column("b"), Some(vec![-0.5]));
    }

    #[test]
    fn sweep_row_order_and_errors() {
        let grid = QuadratureGrid::new(101, 5.0).unwrap();
        let base = preset(PresetKind::NType, &PresetParams::default()).unwrap();
        let spec = SweepSpec {
            base,
            axes: vec![
                SweepAxis { path: "recovery.rabi".parse().unwrap(), values: vec![0.0, 29.0] },
                SweepAxis { path: "coupling.rabi".parse().unwrap(), values: vec![-1.0, 29.0] },
            ],
            quantity: SweepQuantity::Beta,
            search: PeakSearch::default(),
        };
        let t = sweep(&spec, &grid).unwrap();
        let order: Vec<_> = t.rows.iter().map(|r| r.values.clone()).collect();
        assert_eq!(order, vec![vec![0.0, -1.0], vec![0.0, 29.0], vec![29.0, -1.0], vec![29.0, 29.0]]);
        assert!(t.rows[0].error.is_some() && t.rows[0].result.is_none());
        assert!(t.rows[3].result.unwrap() > t.rows[1].result.unwrap());
        assert!(t.to_csv().starts_with("recovery.rabi,coupling.rabi,beta,error\n"));
    }
}
