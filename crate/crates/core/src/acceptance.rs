//! The physics acceptance suite. Each criterion returns a report with its
//! measured values; the `acceptance` test target and `inhomo selftest` both
//! run it.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ensemble::{ensemble_absorption_detailed, linspace, locate_peak, spectrum_at, EnsembleEvaluator, QuadratureGrid};
use crate::error::Result;
use crate::liouville::{build_hamiltonian, build_liouvillian, evolve_oracle, steady_state, ShiftSample, SolveDiagnostics};
use crate::optimize::{fig4_table, maximize_beta, two_photon_resonance, BetaProbe, OptimizeBounds, OptimizeOptions, PeakSearch};
use crate::recovery::{at_window_width, extract_beta, inhomogeneous_limit};
use crate::scheme::{
    build_scheme, preset, DephasingChannel, DriveField, InhomogeneityModel, Level, LevelScheme, PresetKind, PresetParams,
    COUPLING_ID, PROBE_ID, RECOVERY_ID,
};
use crate::voigt::voigt_peak;

pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub diagnostics: SolveDiagnostics,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {verdict} {}: {}", self.id, self.name, self.detail)
    }
}

fn report(id: u8, name: &'static str, outcome: Result<(bool, String, SolveDiagnostics)>) -> CriterionReport {
    match outcome {
        Ok((passed, detail, diagnostics)) => CriterionReport { id, name, passed, detail, diagnostics },
        Err(e) => CriterionReport {
            id,
            name,
            passed: false,
            detail: format!("error: {e}"),
            diagnostics: SolveDiagnostics::default(),
        },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn criterion_1() -> CriterionReport {
    report(1, "inhomogeneous limit formula", (|| {
        let a = inhomogeneous_limit(220.0, 2.875)?;
        let b = inhomogeneous_limit(5000.0, 50.0)?;
        let exact_a = (2.0 / std::f64::consts::PI).sqrt() * 220.0 / 2.875;
        let exact_b = (2.0 / std::f64::consts::PI).sqrt() * 100.0;
        let passed = (a - 61.06).abs() < 5e-3 && (b - 79.8).abs() < 5e-2 && a == exact_a && rel(b, exact_b) < 1e-15;
        Ok((passed, format!("beta0(220, 2.875) = {a:.4}, beta0(5000, 50) = {b:.4}"), SolveDiagnostics::default()))
    })())
}

pub fn criterion_2(grid: &QuadratureGrid) -> CriterionReport {
    report(2, "Voigt oracle", (|| {
        let s = preset(PresetKind::TwoLevel, &PresetParams::default())?;
        let v = ensemble_absorption_detailed(&s, 0.0, grid)?;
        let oracle = voigt_peak(2.875, 220.0);
        let err = rel(v.absorption, oracle);
        Ok((
            err < 5e-3,
            format!("ensemble {:.7} vs closed form {oracle:.7} (rel {err:.2e}, tol 5e-3)", v.absorption),
            v.diagnostics,
        ))
    })())
}

/// Largest ensemble absorption of a spectrum: dense sampling followed by a
/// golden-section refinement of every local maximum.
fn spectrum_max(scheme: &LevelScheme, x: &[f64], grid: &QuadratureGrid, diag: &mut SolveDiagnostics) -> Result<(f64, f64)> {
    let s = spectrum_at(scheme, x, grid)?;
    diag.merge(&s.diagnostics());
    let ev = EnsembleEvaluator::new(scheme, grid);
    let y = &s.absorption;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..y.len() {
        let left = if i > 0 { y[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < y.len() { y[i + 1] } else { f64::NEG_INFINITY };
        if y[i] >= left && y[i] >= right {
            let (lo, hi) = (x[i.saturating_sub(1)], x[(i + 1).min(y.len() - 1)]);
            let p = locate_peak(|d| ev.eval(d).map(|v| v.absorption), lo, hi, 5, 1e-4)?;
            if p.height > best.0 {
                best = (p.height, p.detuning);
            }
        }
    }
    Ok(best)
}

pub fn criterion_3(grid: &QuadratureGrid) -> CriterionReport {
    report(3, "inhomogeneous limit bound", (|| {
        let limit = {
            let two = preset(PresetKind::TwoLevel, &PresetParams::default())?;
            ensemble_absorption_detailed(&two, 0.0, grid)?.absorption
        };
        let mut diag = SolveDiagnostics::default();
        let mut worst = (0.0f64, 0.0, 0.0, 0.0);
        for omega in [5.0, 15.0, 30.0, 60.0] {
            for delta in [0.0, -100.0, -270.0, -500.0] {
                let s = preset(PresetKind::Lambda, &PresetParams { omega, delta, ..PresetParams::default() })?;
                let mut x = linspace(-800.0, 800.0, 801);
                let half = 10.0 + omega;
                x.extend(linspace(delta - half, delta + half, (20.0 * half) as usize + 1));
                x.sort_by(f64::total_cmp);
                x.dedup();
                let (m, at) = spectrum_max(&s, &x, grid, &mut diag)?;
                if m / limit > worst.0 {
                    worst = (m / limit, omega, delta, at);
                }
            }
        }
        Ok((
            worst.0 <= 1.02,
            format!(
                "max spectrum / two-level peak = {:.5} (omega {}, delta {}, at {:.2} MHz; bound 1.02)",
                worst.0, worst.1, worst.2, worst.3
            ),
            diag,
        ))
    })())
}

/// Single scale `c` minimizing the squared log-residuals between `beta` and
/// `amplitude * (c mu)^2 / (1 + (c mu)^2)`.
pub fn fit_mu_scale(mu: &[f64], beta: &[f64], amplitude: f64) -> f64 {
    let cost = |log_c: f64| -> f64 {
        let c = log_c.exp();
        mu.iter()
            .zip(beta)
            .map(|(m, b)| {
                let x = (c * m).powi(2);
                (b / (amplitude * x / (1.0 + x))).ln().powi(2)
            })
            .sum()
    };
    let (mut a, mut b) = ((0.01f64).ln(), (100.0f64).ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if cost(c) <= cost(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (0.5 * (a + b)).exp()
}

pub fn criterion_4(grid: &QuadratureGrid) -> CriterionReport {
    report(4, "saturation formula agreement", (|| {
        let (table, diag) = fig4_table(grid)?;
        let mu = table.column("mu").unwrap();
        let beta = table.column("beta_simulated").unwrap();
        let asymptote = table.column("saturation_asymptote").unwrap()[0];
        let p = crate::optimize::far_detuned_params();
        let half = inhomogeneous_limit(p.sigma, p.gamma)? / 2.0;
        let (fit_mu, fit_beta): (Vec<f64>, Vec<f64>) =
            mu.iter().zip(&beta).filter(|(m, _)| (0.3 - 1e-9..=3.0 + 1e-9).contains(*m)).unzip();
        let c = fit_mu_scale(&fit_mu, &fit_beta, half);
        let collapse = fit_mu
            .iter()
            .zip(&fit_beta)
            .map(|(m, b)| {
                let x = (c * m).powi(2);
                rel(*b, half * x / (1.0 + x))
            })
            .fold(0.0, f64::max);
        let saturated: Vec<f64> = mu.iter().zip(&beta).filter(|(m, _)| c * *m >= 3.0).map(|(_, b)| *b).collect();
        let asym_err = saturated.iter().map(|b| rel(*b, asymptote)).fold(0.0, f64::max);
        let max_beta = beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let monotone = beta.windows(2).all(|w| w[1] >= w[0]);
        let passed = fit_mu.len() == 8 && collapse < 0.15 && !saturated.is_empty() && asym_err < 0.10;
        Ok((
            passed,
            format!(
                "fitted mu scale {c:.4}, worst collapse residual {:.1}% (tol 15%); {} saturated points, worst deviation from asymptote {asymptote:.2} is {:.1}% (tol 10%); largest simulated beta {max_beta:.2}; beta monotone in mu: {monotone}",
                100.0 * collapse,
                saturated.len(),
                100.0 * asym_err
            ),
            diag,
        ))
    })())
}

pub fn criterion_5(grid: &QuadratureGrid) -> CriterionReport {
    report(5, "compensation optimum", (|| {
        let s = preset(PresetKind::NType, &PresetParams::default())?;
        let bounds = OptimizeBounds::around_plan(29.0, -270.0, 1.0, 15.0, 50.0)?;
        let opt = maximize_beta(&s, bounds, grid, &OptimizeOptions::default())?;
        let probe = BetaProbe::new(&s, grid, PeakSearch::default())?;
        let at = |dr: f64| -> Result<f64> {
            let s = s.with_rabi(RECOVERY_ID, opt.omega_r)?.with_detuning(RECOVERY_ID, dr)?;
            Ok(probe.measure(&s)?.beta)
        };
        let lower = opt.beta / at(opt.delta_r - 25.0)?;
        let upper = opt.beta / at(opt.delta_r + 25.0)?;
        let plan_beta = probe.measure(&s)?.beta;
        let mut diag = probe.diagnostics();
        diag.merge(&opt.solve_health);
        let failed = opt.trace.iter().filter(|t| t.beta.is_none()).count();
        let located = (opt.omega_r - 29.0).abs() <= 3.0 && (opt.delta_r + 270.0).abs() <= 10.0;
        let sharp = lower.max(upper) >= 2.0;
        Ok((
            located && sharp && failed == 0,
            format!(
                "optimum omega_r {:.3}, delta_r {:.3}, beta {:.4} ({} evaluations, {failed} failed; plan-point beta {plan_beta:.4}); beta falls by {lower:.3}x at -25 MHz and {upper:.3}x at +25 MHz",
                opt.omega_r, opt.delta_r, opt.beta, opt.evaluations
            ),
            diag,
        ))
    })())
}

/// Schemes of the exceedance criterion: the N-type system at compensation and
/// the ladder with a 1 MHz residual two-photon width.
pub fn exceedance_schemes() -> Result<Vec<(&'static str, LevelScheme)>> {
    Ok(vec![
        ("n_type", preset(PresetKind::NType, &PresetParams::default())?),
        ("ladder", preset(PresetKind::LadderRydberg, &PresetParams { sigma2: 1.0, ..PresetParams::ladder() })?),
    ])
}

/// `extract_beta` on sampled spectra: 0.01 MHz steps across the two-photon
/// window, 0.5 MHz steps across the one-photon reference.
pub fn sampled_beta(scheme: &LevelScheme, grid: &QuadratureGrid, diag: &mut SolveDiagnostics) -> Result<f64> {
    let center = two_photon_resonance(scheme)?;
    let window = (center - 3.0, center + 3.0);
    let with_fields = spectrum_at(scheme, &linspace(window.0, window.1, 601), grid)?;
    let reference = spectrum_at(&scheme.bare(), &linspace(-20.0, 20.0, 81), grid)?;
    diag.merge(&with_fields.diagnostics());
    diag.merge(&reference.diagnostics());
    Ok(extract_beta(&with_fields, &reference, window, (-20.0, 20.0))?.beta)
}

pub fn criterion_6(grid: &QuadratureGrid) -> CriterionReport {
    report(6, "exceedance of the inhomogeneous limit", (|| {
        let mut diag = SolveDiagnostics::default();
        let mut parts = Vec::new();
        let mut passed = true;
        for (name, s) in exceedance_schemes()? {
            let beta = sampled_beta(&s, grid, &mut diag)?;
            passed &= beta > 3.0;
            parts.push(format!("{name} beta {beta:.3}"));
        }
        Ok((passed, format!("{} (threshold 3)", parts.join(", ")), diag))
    })())
}

pub fn criterion_7(grid: &QuadratureGrid) -> CriterionReport {
    report(7, "Autler-Townes window", (|| {
        let mut diag = SolveDiagnostics::default();
        let cases = [
            ("n_type", preset(PresetKind::NType, &PresetParams::default())?),
            ("ladder", preset(PresetKind::LadderRydberg, &PresetParams::ladder())?),
        ];
        let mut passed = true;
        let mut parts = Vec::new();
        for (name, s) in cases {
            let omega = s.field(COUPLING_ID).unwrap().rabi;
            let omega_r = s.field(RECOVERY_ID).unwrap().rabi;
            let expected = 2.0 * omega + 2.0 * omega_r;
            let center = two_photon_resonance(&s)?;
            let x = linspace(center - 200.0, center + 200.0, 801);
            let with_fields = spectrum_at(&s, &x, grid)?;
            let background = spectrum_at(&s.bare(), &x, grid)?;
            diag.merge(&with_fields.diagnostics());
            diag.merge(&background.diagnostics());
            let width = at_window_width(&with_fields, &background, center, 0.5)?;
            let err = rel(width, expected);
            passed &= err <= 0.25;
            parts.push(format!(
                "{name} ({omega}, {omega_r}): width {width:.1} MHz vs 2(omega+omega_r) = {expected} ({:.0}% off, tol 25%)",
                100.0 * err
            ));
        }
        Ok((passed, parts.join("; "), diag))
    })())
}

/// A reproducible random scheme of 3 to 5 levels for solver checks: a random
/// drive tree rooted at the probe, decay of every excited level into lower
/// levels and one random dephasing channel.
pub fn random_scheme(seed: u64) -> Result<LevelScheme> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=5usize);
    let mut levels = vec![Level::stable(0, "l0")];
    for i in 1..n {
        let rate = rng.random_range(0.5..10.0);
        let k = rng.random_range(1..=i);
        let mut targets: Vec<usize> = (0..i).collect();
        for j in (1..targets.len()).rev() {
            targets.swap(j, rng.random_range(0..=j));
        }
        let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let branches: Vec<(usize, f64)> = targets[..k].iter().cloned().zip(weights).collect();
        levels.push(Level::new(i, &format!("l{i}"), rate, &branches));
    }
    let mut fields = vec![DriveField::new(
        PROBE_ID,
        0,
        1,
        rng.random_range(0.1..5.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-50.0..50.0),
    )];
    for i in 2..n {
        let other = rng.random_range(0..i);
        fields.push(DriveField::new(
            &format!("f{i}"),
            other,
            i,
            rng.random_range(0.5..20.0),
            rng.random_range(-30.0..30.0),
            rng.random_range(-50.0..50.0),
        ));
    }
    let a = rng.random_range(0..n);
    let b = (a + rng.random_range(1..n)) % n;
    let dephasing = vec![DephasingChannel { levels: (a, b), rate: rng.random_range(0.0..2.0) }];
    build_scheme(levels, fields, dephasing, InhomogeneityModel::gaussian(100.0))
}

/// Largest entrywise difference between the direct steady state of a random
/// scheme and the state reached by time evolution from the lowest level.
pub fn oracle_difference(seed: u64) -> Result<(f64, SolveDiagnostics)> {
    let s = random_scheme(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let sample = ShiftSample::new(&s, rng.random_range(-2.0..2.0));
    let h = build_hamiltonian(&s, &sample, rng.random_range(-10.0..10.0));
    let l = build_liouvillian(&h, &s);
    let sol = steady_state(&l)?;
    let n = s.dim();
    let mut rho0 = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    rho0[(0, 0)] = Complex64::new(1.0, 0.0);
    let slowest = s
        .levels()
        .iter()
        .map(|l| l.population_decay_rate)
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut t = 60.0 / slowest;
    let mut prev = evolve_oracle(&l, &rho0, t)?;
    // keep integrating while the trajectory still moves
    for _ in 0..6 {
        let next = evolve_oracle(&l, &prev, t)?;
        let moved = (&next - &prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prev = next;
        t *= 2.0;
        if moved < 1e-9 {
            break;
        }
    }
    let diff = (&prev - &sol.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok((diff, sol.diagnostics))
}

pub fn criterion_8(earlier: &[CriterionReport]) -> CriterionReport {
    report(8, "solver correctness", (|| {
        let mut worst = 0.0f64;
        let mut diag = SolveDiagnostics::default();
        for seed in 0..25 {
            let (d, sd) = oracle_difference(seed)?;
            worst = worst.max(d);
            diag.merge(&sd);
        }
        let mut upstream = SolveDiagnostics::default();
        let covered: Vec<u8> = earlier.iter().filter(|r| (2..=7).contains(&r.id)).map(|r| r.id).collect();
        for r in earlier.iter().filter(|r| (2..=7).contains(&r.id)) {
            upstream.merge(&r.diagnostics);
        }
        let all_covered = (2..=7).all(|id| covered.contains(&id));
        let passed = worst < 1e-6 && diag.healthy() && upstream.healthy() && all_covered;
        Ok((
            passed,
            format!(
                "25 random schemes: max |steady - evolved| = {worst:.2e} (tol 1e-6); criteria {covered:?} solves: residual {:.1e}, trace {:.1e}, hermiticity {:.1e}, psd {}{}",
                upstream.residual_norm,
                upstream.trace_error,
                upstream.hermiticity_error,
                upstream.psd,
                if all_covered { "" } else { " (criteria 2-7 must run first)" }
            ),
            diag,
        ))
    })())
}

fn beta_variants(s: &LevelScheme, grid: &QuadratureGrid, search: PeakSearch) -> Result<[f64; 3]> {
    let measure = |s: &LevelScheme, g: &QuadratureGrid| -> Result<f64> { Ok(BetaProbe::new(s, g, search)?.measure(s)?.beta) };
    let base = measure(s, grid)?;
    let half_probe = s.with_rabi(PROBE_ID, 0.5 * s.probe().rabi)?;
    Ok([base, measure(&half_probe, grid)?, measure(s, &grid.refined())?])
}

pub fn criterion_9(grid: &QuadratureGrid) -> CriterionReport {
    report(9, "numerics hygiene", (|| {
        let far = preset(PresetKind::NType, &crate::optimize::far_detuned_params())?;
        let p = crate::optimize::far_detuned_params();
        let mut configs: Vec<(String, LevelScheme, PeakSearch)> = Vec::new();
        for mu in crate::optimize::fig4_mu_values() {
            let omega = crate::recovery::omega_for_mu(mu, p.delta, p.sigma, p.gamma, p.gamma_r, p.gamma_sg);
            let s = far.with_rabi(COUPLING_ID, omega)?.with_rabi(RECOVERY_ID, omega)?;
            configs.push((format!("mu {mu:.3}"), s, PeakSearch { half_width: 3.0, ..PeakSearch::default() }));
        }
        for (name, s) in exceedance_schemes()? {
            configs.push((name.to_string(), s, PeakSearch::default()));
        }
        let (mut lin, mut conv) = ((0.0f64, String::new()), (0.0f64, String::new()));
        for (name, s, search) in &configs {
            let [base, half, fine] = beta_variants(s, grid, *search)?;
            if rel(half, base) > lin.0 {
                lin = (rel(half, base), name.clone());
            }
            if rel(fine, base) > conv.0 {
                conv = (rel(fine, base), name.clone());
            }
        }
        Ok((
            lin.0 < 1e-4 && conv.0 < 1e-3,
            format!(
                "{} configurations; probe halving changes beta by at most {:.1e} ({}; tol 1e-4); grid doubling by at most {:.1e} ({}; tol 1e-3)",
                configs.len(),
                lin.0,
                lin.1,
                conv.0,
                conv.1
            ),
            SolveDiagnostics::default(),
        ))
    })())
}

pub fn criterion_10(grid: &QuadratureGrid) -> CriterionReport {
    report(10, "determinism across worker counts", (|| {
        let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let mut outputs = Vec::new();
        for workers in [1, 4, max] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| crate::Error::InvalidScheme(e.to_string()))?;
            let csv = pool.install(|| fig4_table(grid).map(|(t, _)| t.to_csv()))?;
            outputs.push((workers, csv));
        }
        let identical = outputs.windows(2).all(|w| w[0].1 == w[1].1);
        Ok((
            identical,
            format!(
                "saturation dataset with {:?} workers: {}",
                outputs.iter().map(|o| o.0).collect::<Vec<_>>(),
                if identical { "byte-identical" } else { "differs" }
            ),
            SolveDiagnostics::default(),
        ))
    })())
}

/// Run the selected criteria in order. Criterion 8 folds in the solve
/// health of criteria 2 to 7 from the same run.
pub fn run(ids: &[u8], grid: &QuadratureGrid, mut on_report: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    let mut out: Vec<CriterionReport> = Vec::new();
    for &id in ids {
        let r = match id {
            1 => criterion_1(),
            2 => criterion_2(grid),
            3 => criterion_3(grid),
            4 => criterion_4(grid),
            5 => criterion_5(grid),
            6 => criterion_6(grid),
            7 => criterion_7(grid),
            8 => criterion_8(&out),
            9 => criterion_9(grid),
            10 => criterion_10(grid),
            _ => report(id, "unknown criterion", Ok((false, "no such criterion".into(), SolveDiagnostics::default()))),
        };
        on_report(&r);
        out.push(r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_schemes_are_reproducible_and_valid() {
        for seed in 0..40 {
            let a = random_scheme(seed).unwrap();
            assert_eq!(a, random_scheme(seed).unwrap());
            assert!((3..=5).contains(&a.dim()));
        }
    }

    #[test]
    fn mu_scale_fit_recovers_known_scale() {
        let mu: Vec<f64> = (0..8).map(|i| 0.3 * 10f64.powf(i as f64 / 7.0)).collect();
        let beta: Vec<f64> = mu.iter().map(|m| {
            let x = (0.4 * m) * (0.4 * m);
            30.0 * x / (1.0 + x)
        }).collect();
        assert!((fit_mu_scale(&mu, &beta, 30.0) - 0.4).abs() < 1e-8);
    }

    #[test]
    fn first_criterion_passes() {
        let r = criterion_1();
        assert!(r.passed, "{r}");
    }
}
