//! Gaussian ensemble averaging, spectra and peak location.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig9;
use crate::liouville::{AbsorberModel, SolveDiagnostics};
use crate::scheme::LevelScheme;

pub const DEFAULT_NODES: usize = 4001;
pub const DEFAULT_SPAN: f64 = 5.0;

/// Uniform nodes in the standard-normal ensemble variable with normalized
/// Gaussian weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    span: f64,
}

impl QuadratureGrid {
    pub fn new(n: usize, span: f64) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::BadGridParams(format!("node count must be odd and >= 3, got {n}")));
        }
        if !(span >= 4.0) || !span.is_finite() {
            return Err(Error::BadGridParams(format!("span must be >= 4 sigma, got {span}")));
        }
        let half = (n / 2) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| span * (i as f64 - half) / half).collect();
        let raw: Vec<f64> = nodes.iter().map(|u| (-0.5 * u * u).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        Ok(QuadratureGrid { nodes, weights, span })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same span with `2n - 1` nodes (every old node kept).
    pub fn refined(&self) -> Self {
        QuadratureGrid::new(2 * self.len() - 1, self.span).expect("refining a valid grid")
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid::new(DEFAULT_NODES, DEFAULT_SPAN).expect("default grid")
    }
}

/// Ensemble-averaged absorption together with the worst solve health seen.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleValue {
    pub absorption: f64,
    pub diagnostics: SolveDiagnostics,
}

fn average_nodes(model: &AbsorberModel, probe_detuning: f64, grid: &QuadratureGrid, parallel: bool) -> Result<EnsembleValue> {
    let eval = |u: &f64| model.absorption(*u, probe_detuning);
    let values: Vec<Result<(f64, SolveDiagnostics)>> = if parallel {
        grid.nodes.par_iter().map(eval).collect()
    } else {
        grid.nodes.iter().map(eval).collect()
    };
    let mut absorption = 0.0;
    let mut diagnostics = SolveDiagnostics::default();
    for (v, w) in values.into_iter().zip(&grid.weights) {
        let (a, d) = v?;
        absorption += w * a;
        diagnostics.merge(&d);
    }
    Ok(EnsembleValue { absorption, diagnostics })
}

/// Weighted sum of single-absorber absorption over the grid. Summation order
/// is fixed, so results do not depend on the number of worker threads.
pub fn ensemble_absorption(scheme: &LevelScheme, probe_detuning: f64, grid: &QuadratureGrid) -> Result<f64> {
    ensemble_absorption_detailed(scheme, probe_detuning, grid).map(|v| v.absorption)
}

pub fn ensemble_absorption_detailed(
    scheme: &LevelScheme,
    probe_detuning: f64,
    grid: &QuadratureGrid,
) -> Result<EnsembleValue> {
    average_nodes(&AbsorberModel::new(scheme), probe_detuning, grid, true)
}

/// Reusable evaluator for many probe detunings of one scheme.
#[derive(Debug, Clone)]
pub struct EnsembleEvaluator {
    model: AbsorberModel,
    grid: QuadratureGrid,
}

impl EnsembleEvaluator {
    pub fn new(scheme: &LevelScheme, grid: &QuadratureGrid) -> Self {
        EnsembleEvaluator {
            model: AbsorberModel::new(scheme),
            grid: grid.clone(),
        }
    }

    pub fn scheme(&self) -> &LevelScheme {
        self.model.scheme()
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn eval(&self, probe_detuning: f64) -> Result<EnsembleValue> {
        average_nodes(&self.model, probe_detuning, &self.grid, true)
    }

    /// Evaluate many detunings, parallel over detunings.
    pub fn eval_many(&self, detunings: &[f64]) -> Result<Vec<EnsembleValue>> {
        detunings
            .par_iter()
            .map(|d| average_nodes(&self.model, *d, &self.grid, false))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMetadata {
    pub scheme_digest: String,
    pub grid_nodes: usize,
    pub grid_span: f64,
    pub probe_rabi: f64,
    pub max_residual: f64,
    pub max_hermiticity_error: f64,
    pub max_trace_error: f64,
    pub all_psd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub probe_detunings: Vec<f64>,
    pub absorption: Vec<f64>,
    pub metadata: SpectrumMetadata,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.probe_detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probe_detunings.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.absorption.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn diagnostics(&self) -> SolveDiagnostics {
        SolveDiagnostics {
            residual_norm: self.metadata.max_residual,
            trace_error: self.metadata.max_trace_error,
            hermiticity_error: self.metadata.max_hermiticity_error,
            psd: self.metadata.all_psd,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe_detuning_mhz,absorption_norm\n");
        for (d, a) in self.probe_detunings.iter().zip(&self.absorption) {
            out.push_str(&format!("{},{}\n", sig9(*d), sig9(*a)));
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }

    /// Write `path` (CSV) and `path.meta.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let meta = sidecar_path(path);
        std::fs::write(&meta, self.metadata_json()).map_err(|e| Error::io(&meta, e))
    }

    /// Parse the CSV part back. Metadata comes from the sidecar if present.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("probe_detuning_mhz,absorption_norm") {
            return Err(Error::Serialization(format!("{}: unexpected spectrum header", path.display())));
        }
        let mut probe_detunings = Vec::new();
        let mut absorption = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Serialization(format!("{}: bad row {}", path.display(), i + 2)))
            };
            probe_detunings.push(parse(parts.next())?);
            absorption.push(parse(parts.next())?);
        }
        let meta_path = sidecar_path(path);
        let metadata = match std::fs::read_to_string(&meta_path) {
            Ok(t) => serde_json::from_str(&t).map_err(|e| Error::Serialization(e.to_string()))?,
            Err(_) => SpectrumMetadata {
                scheme_digest: String::new(),
                grid_nodes: 0,
                grid_span: 0.0,
                probe_rabi: 0.0,
                max_residual: 0.0,
                max_hermiticity_error: 0.0,
                max_trace_error: 0.0,
                all_psd: true,
            },
        };
        Ok(Spectrum { probe_detunings, absorption, metadata })
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Inclusive uniform grid of `n` points.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
}

fn metadata(scheme: &LevelScheme, grid: &QuadratureGrid, diag: &SolveDiagnostics) -> SpectrumMetadata {
    SpectrumMetadata {
        scheme_digest: scheme.digest(),
        grid_nodes: grid.len(),
        grid_span: grid.span(),
        probe_rabi: scheme.probe().rabi,
        max_residual: diag.residual_norm,
        max_hermiticity_error: diag.hermiticity_error,
        max_trace_error: diag.trace_error,
        all_psd: diag.psd,
    }
}

/// Ensemble absorption on an explicit list of probe detunings.
pub fn spectrum_at(scheme: &LevelScheme, detunings: &[f64], grid: &QuadratureGrid) -> Result<Spectrum> {
    let values = EnsembleEvaluator::new(scheme, grid).eval_many(detunings)?;
    let mut diag = SolveDiagnostics::default();
    for v in &values {
        diag.merge(&v.diagnostics);
    }
    Ok(Spectrum {
        probe_detunings: detunings.to_vec(),
        absorption: values.iter().map(|v| v.absorption).collect(),
        metadata: metadata(scheme, grid, &diag),
    })
}

/// Ensemble absorption on a uniform probe-detuning grid.
pub fn spectrum(scheme: &LevelScheme, detuning_range: (f64, f64), n_points: usize, grid: &QuadratureGrid) -> Result<Spectrum> {
    if n_points < 2 {
        return Err(Error::BadGridParams(format!("spectrum needs at least 2 points, got {n_points}")));
    }
    spectrum_at(scheme, &linspace(detuning_range.0, detuning_range.1, n_points), grid)
}

/// Average of spectra over a beam profile: each entry is
/// `(intensity fraction, weight)`; non-probe Rabi frequencies scale with the
/// square root of the intensity fraction.
pub fn intensity_average(
    scheme: &LevelScheme,
    detuning_range: (f64, f64),
    n_points: usize,
    grid: &QuadratureGrid,
    beam_profile: &[(f64, f64)],
) -> Result<Spectrum> {
    if beam_profile.is_empty() {
        return Err(Error::BadProfile("empty profile".into()));
    }
    let total: f64 = beam_profile.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadProfile(format!("weights sum to {total}, not 1")));
    }
    if let Some(bad) = beam_profile.iter().find(|p| !(p.0 > 0.0) || !(p.1 >= 0.0)) {
        return Err(Error::BadProfile(format!("bad entry {bad:?}")));
    }
    let mut acc: Option<Spectrum> = None;
    let mut diag = SolveDiagnostics::default();
    for &(fraction, weight) in beam_profile {
        let scaled = scheme.with_drive_scale(fraction.sqrt())?;
        let s = spectrum(&scaled, detuning_range, n_points, grid)?;
        diag.merge(&s.diagnostics());
        match &mut acc {
            None => {
                let mut first = s;
                first.absorption.iter_mut().for_each(|a| *a *= weight);
                acc = Some(first);
            }
            Some(a) => {
                for (x, y) in a.absorption.iter_mut().zip(&s.absorption) {
                    *x += weight * y;
                }
            }
        }
    }
    let mut out = acc.unwrap();
    out.metadata = metadata(scheme, grid, &diag);
    Ok(out)
}

/// Intensity samples of a Gaussian beam seen by a smaller probe: `n`
/// equal-area annuli of a beam whose 1/e^2 radius is `ratio` times the probe
/// waist, weighted by the probe's own Gaussian intensity.
pub fn gaussian_beam_profile(n: usize, ratio: f64) -> Vec<(f64, f64)> {
    // probe weight density in r^2 is exp(-2 r^2 / w_p^2); sample its quantiles
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let q = (i as f64 + 0.5) / n as f64;
        // r^2 / w_p^2 at probe-weight quantile q
        let x = -0.5 * (1.0 - q).ln();
        let fraction = (-2.0 * x / (ratio * ratio)).exp();
        out.push((fraction, 1.0 / n as f64));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub detuning: f64,
    pub height: f64,
    /// The maximum sits on the window boundary; no refinement was possible.
    pub at_edge: bool,
}

/// Largest sample inside `window`, refined by a parabola through it and its
/// two neighbours.
pub fn peak(spectrum: &Spectrum, window: (f64, f64)) -> Result<Peak> {
    let (lo, hi) = (window.0.min(window.1), window.0.max(window.1));
    let inside: Vec<usize> = (0..spectrum.len())
        .filter(|&i| spectrum.probe_detunings[i] >= lo && spectrum.probe_detunings[i] <= hi)
        .collect();
    let Some(&best) = inside
        .iter()
        .max_by(|&&a, &&b| spectrum.absorption[a].total_cmp(&spectrum.absorption[b]))
    else {
        return Err(Error::EmptyWindow { lo, hi });
    };
    let first = inside[0];
    let last = *inside.last().unwrap();
    let x = &spectrum.probe_detunings;
    let y = &spectrum.absorption;
    if best == first || best == last {
        return Ok(Peak { detuning: x[best], height: y[best], at_edge: true });
    }
    let (detuning, height) = parabola_vertex((x[best - 1], y[best - 1]), (x[best], y[best]), (x[best + 1], y[best + 1]));
    Ok(Peak { detuning, height, at_edge: false })
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let d1 = (b.1 - a.1) / (b.0 - a.0);
    let d2 = (c.1 - b.1) / (c.0 - b.0);
    let curvature = (d2 - d1) / (c.0 - a.0);
    if !(curvature < 0.0) {
        return b;
    }
    let slope_mid = d1 - curvature * (b.0 - a.0);
    // y = b.1 + slope_mid (x - b.0) + curvature (x - b.0)^2 around b
    let dx = -slope_mid / (2.0 * curvature);
    let dx = dx.clamp(a.0 - b.0, c.0 - b.0);
    (b.0 + dx, b.1 + slope_mid * dx + curvature * dx * dx)
}

/// Maximize a scalar function of probe detuning on `[lo, hi]`: uniform scan
/// with `coarse` points, then golden-section search in the bracket around the
/// best sample until it is narrower than `tol`.
pub fn locate_peak(f: impl Fn(f64) -> Result<f64> + Sync, lo: f64, hi: f64, coarse: usize, tol: f64) -> Result<Peak> {
    let xs = linspace(lo, hi, coarse.max(3));
    let ys: Vec<f64> = xs.par_iter().map(|x| f(*x)).collect::<Result<_>>()?;
    let best = (0..xs.len()).max_by(|&a, &b| ys[a].total_cmp(&ys[b])).unwrap();
    if best == 0 || best == xs.len() - 1 {
        return Ok(Peak { detuning: xs[best], height: ys[best], at_edge: true });
    }
    let (mut a, mut b) = (xs[best - 1], xs[best + 1]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let (mut best_x, mut best_y) = (xs[best], ys[best]);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
        for (x, y) in [(c, fc), (d, fd)] {
            if y > best_y {
                best_x = x;
                best_y = y;
            }
        }
    }
    Ok(Peak { detuning: best_x, height: best_y, at_edge: false })
}
