//! Closed-form layer: inhomogeneous limit, compensation planning, scattering
//! rates and the enhancement predictor, plus the spectrum-based enhancement
//! and transmission-window measurements.

use serde::{Deserialize, Serialize};

use crate::ensemble::{peak, Peak, Spectrum};
use crate::error::{Error, Result};

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveInput { name, value })
    }
}

/// Factor by which Gaussian broadening of width `sigma` lowers the peak of a
/// Lorentzian line of HWHM `gamma` (for `sigma >> gamma`).
pub fn inhomogeneous_limit(sigma: f64, gamma: f64) -> Result<f64> {
    positive("sigma", sigma)?;
    positive("gamma", gamma)?;
    Ok((2.0 / std::f64::consts::PI).sqrt() * sigma / gamma)
}

/// Recovery-field settings that cancel the coupling field's inhomogeneous
/// light shift when the recovery shifts are `eta` times the coupling shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationPlan {
    pub omega_r: f64,
    pub delta_r: f64,
    pub eta: f64,
}

impl CompensationPlan {
    /// Coupling light shift `omega^2 / (delta - shift)` minus the recovery
    /// shift `omega_r^2 / (delta_r - eta * shift)`; zero for every shift.
    pub fn residual(&self, omega: f64, delta: f64, shift: f64) -> f64 {
        omega * omega / (delta - shift) - self.omega_r * self.omega_r / (self.delta_r - self.eta * shift)
    }
}

pub fn compensation_plan(omega: f64, delta: f64, eta: f64) -> Result<CompensationPlan> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::NonPositiveEta(eta));
    }
    Ok(CompensationPlan {
        omega_r: omega * eta.sqrt(),
        delta_r: delta * eta,
        eta,
    })
}

/// Ensemble-averaged scattering rates of one far-detuned field:
/// `omega^2 / (delta^2 + sigma^2) * gamma`.
fn scattering_rate(omega: f64, delta: f64, sigma: f64, gamma: f64) -> f64 {
    omega * omega / (delta * delta + sigma * sigma) * gamma
}

/// `(Gamma, Gamma_r)` for the coupling and recovery fields.
#[allow(clippy::too_many_arguments)]
pub fn scattering_rates(
    omega: f64,
    delta: f64,
    sigma: f64,
    gamma: f64,
    omega_r: f64,
    delta_r: f64,
    sigma_r: f64,
    gamma_r: f64,
) -> Result<(f64, f64)> {
    positive("sigma", sigma)?;
    positive("gamma", gamma)?;
    positive("sigma_r", sigma_r)?;
    positive("gamma_r", gamma_r)?;
    for (name, v) in [("omega", omega), ("omega_r", omega_r)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveInput { name, value: v });
        }
    }
    Ok((
        scattering_rate(omega, delta, sigma, gamma),
        scattering_rate(omega_r, delta_r, sigma_r, gamma_r),
    ))
}

/// All inputs of the closed-form enhancement prediction (MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhancementInputs {
    pub omega: f64,
    pub delta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub omega_r: f64,
    pub delta_r: f64,
    pub sigma_r: f64,
    pub gamma_r: f64,
    pub gamma_sg: f64,
}

impl EnhancementInputs {
    /// Coupling and recovery share detuning, Rabi frequency and width.
    pub fn is_symmetric(&self) -> bool {
        self.omega == self.omega_r && self.delta == self.delta_r && self.sigma == self.sigma_r
    }

    /// Values of the N-type measurement with the recovery field on.
    pub fn n_type_measurement() -> Self {
        EnhancementInputs {
            omega: 29.0,
            delta: -270.0,
            sigma: 220.0,
            gamma: 2.875,
            omega_r: 29.6,
            delta_r: -300.0,
            sigma_r: 220.0,
            gamma_r: 3.033,
            gamma_sg: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementPrediction {
    pub beta0: f64,
    /// Coupling-field scattering rate, MHz.
    pub gamma_sc: f64,
    /// Recovery-field scattering rate, MHz.
    pub gamma_sc_r: f64,
    /// Saturation parameter, `sqrt((Gamma + Gamma_r) / gamma_sg)`.
    pub mu: f64,
    pub beta: f64,
    /// Saturation form `beta0 gamma/(gamma+gamma_r) mu^2/(1+mu^2)`, present
    /// for symmetric inputs.
    pub beta_saturation_form: Option<f64>,
}

/// Enhancement `beta0 Gamma / (Gamma + Gamma_r + gamma_sg)` from the
/// scattering rates.
pub fn predicted_beta(rates: (f64, f64), gamma_sg: f64, beta0: f64) -> Result<EnhancementPrediction> {
    if !(gamma_sg >= 0.0) {
        return Err(Error::NonPositiveInput { name: "gamma_sg", value: gamma_sg });
    }
    let (gamma_sc, gamma_sc_r) = rates;
    let total = gamma_sc + gamma_sc_r + gamma_sg;
    let beta = if total > 0.0 { beta0 * gamma_sc / total } else { 0.0 };
    let mu = if gamma_sg > 0.0 {
        ((gamma_sc + gamma_sc_r) / gamma_sg).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(EnhancementPrediction {
        beta0,
        gamma_sc,
        gamma_sc_r,
        mu,
        beta,
        beta_saturation_form: None,
    })
}

/// Full prediction from physical inputs, including the saturation form in
/// the symmetric case.
pub fn predict(inputs: &EnhancementInputs) -> Result<EnhancementPrediction> {
    let beta0 = inhomogeneous_limit(inputs.sigma, inputs.gamma)?;
    let rates = scattering_rates(
        inputs.omega,
        inputs.delta,
        inputs.sigma,
        inputs.gamma,
        inputs.omega_r,
        inputs.delta_r,
        inputs.sigma_r,
        inputs.gamma_r,
    )?;
    let mut p = predicted_beta(rates, inputs.gamma_sg, beta0)?;
    if inputs.is_symmetric() {
        let mu2 = saturation_parameter_sq(inputs.omega, inputs.delta, inputs.sigma, inputs.gamma, inputs.gamma_r, inputs.gamma_sg);
        p.beta_saturation_form = Some(saturation_form(beta0, inputs.gamma, inputs.gamma_r, mu2));
    }
    Ok(p)
}

/// `mu^2 = omega^2 (gamma + gamma_r) / ((delta^2 + sigma^2) gamma_sg)`.
pub fn saturation_parameter_sq(omega: f64, delta: f64, sigma: f64, gamma: f64, gamma_r: f64, gamma_sg: f64) -> f64 {
    omega * omega * (gamma + gamma_r) / ((delta * delta + sigma * sigma) * gamma_sg)
}

/// Coupling Rabi frequency giving saturation parameter `mu` (inverse of
/// [`saturation_parameter_sq`]).
pub fn omega_for_mu(mu: f64, delta: f64, sigma: f64, gamma: f64, gamma_r: f64, gamma_sg: f64) -> f64 {
    mu * ((delta * delta + sigma * sigma) * gamma_sg / (gamma + gamma_r)).sqrt()
}

pub fn saturation_form(beta0: f64, gamma: f64, gamma_r: f64, mu2: f64) -> f64 {
    beta0 * gamma / (gamma + gamma_r) * mu2 / (1.0 + mu2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaMeasurement {
    pub beta: f64,
    pub two_photon: Peak,
    pub reference: Peak,
}

/// Ratio of the two-photon peak of `with_fields` to the one-photon peak of
/// the bare reference spectrum (coupling and recovery off).
pub fn extract_beta(
    with_fields: &Spectrum,
    reference_bare: &Spectrum,
    two_photon_window: (f64, f64),
    one_photon_window: (f64, f64),
) -> Result<BetaMeasurement> {
    let two_photon = peak(with_fields, two_photon_window)?;
    let reference = peak(reference_bare, one_photon_window)?;
    Ok(BetaMeasurement {
        beta: two_photon.height / reference.height,
        two_photon,
        reference,
    })
}

/// Full width of the transmission window around `center`.
///
/// Walking outward from the enhanced peak at `center`, the spectrum first
/// drops below `threshold * background` and then climbs back above it at the
/// window edge; the edges are located by linear interpolation. `background`
/// is the bare one-photon spectrum on the same detunings.
pub fn at_window_width(spectrum: &Spectrum, background: &Spectrum, center: f64, threshold: f64) -> Result<f64> {
    if spectrum.probe_detunings != background.probe_detunings {
        return Err(Error::NoWindowFound("spectrum and background use different detunings".into()));
    }
    let x = &spectrum.probe_detunings;
    let ratio: Vec<f64> = spectrum
        .absorption
        .iter()
        .zip(&background.absorption)
        .map(|(a, b)| if *b > 0.0 { a / b } else { f64::INFINITY })
        .collect();
    let start = x
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - center).abs().total_cmp(&(b.1 - center).abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::NoWindowFound("empty spectrum".into()))?;

    let edge = |step: isize| -> Result<f64> {
        let mut i = start as isize;
        let mut dipped = false;
        let n = x.len() as isize;
        while i + step >= 0 && i + step < n {
            let (a, b) = (i as usize, (i + step) as usize);
            if !dipped {
                if ratio[b] < threshold {
                    dipped = true;
                }
            } else if ratio[b] >= threshold {
                let t = (threshold - ratio[a]) / (ratio[b] - ratio[a]);
                return Ok(x[a] + t * (x[b] - x[a]));
            }
            i += step;
        }
        Err(Error::NoWindowFound(format!(
            "no {} edge below {threshold} of the background",
            if step < 0 { "lower" } else { "upper" }
        )))
    };
    let lo = edge(-1)?;
    let hi = edge(1)?;
    Ok(hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inhomogeneous_limit_values() {
        assert_abs_diff_eq!(inhomogeneous_limit(220.0, 2.875).unwrap(), 61.0550, epsilon = 1e-3);
        assert_abs_diff_eq!(inhomogeneous_limit(5000.0, 50.0).unwrap(), 79.788, epsilon = 1e-3);
        assert_abs_diff_eq!(inhomogeneous_limit(2.875, 2.875).unwrap(), 0.797_884_560_8, epsilon = 1e-9);
        assert!(inhomogeneous_limit(0.0, 1.0).is_err());
        assert!(inhomogeneous_limit(1.0, -1.0).is_err());
    }

    #[test]
    fn plans() {
        let p = compensation_plan(29.0, -270.0, 1.0).unwrap();
        assert_eq!((p.omega_r, p.delta_r), (29.0, -270.0));
        let p = compensation_plan(29.0, -270.0, 795.0 / 780.0).unwrap();
        assert_abs_diff_eq!(p.omega_r, 29.27752, epsilon = 1e-4);
        assert_abs_diff_eq!(p.delta_r, -275.1923, epsilon = 1e-4);
        assert_eq!(compensation_plan(1.0, 1.0, 0.0), Err(Error::NonPositiveEta(0.0)));
    }

    #[test]
    fn fig2_rates_and_prediction() {
        let p = predict(&EnhancementInputs::n_type_measurement()).unwrap();
        assert_abs_diff_eq!(p.gamma_sc, 0.019933, epsilon = 1e-5);
        assert_abs_diff_eq!(p.gamma_sc_r, 0.019202, epsilon = 1e-5);
        assert_abs_diff_eq!(p.beta, 3.128, epsilon = 2e-3);
        assert!(p.beta_saturation_form.is_none());
    }

    #[test]
    fn symmetric_mu() {
        let inputs = EnhancementInputs {
            omega_r: 29.0,
            delta_r: -270.0,
            gamma_r: 3.033,
            ..EnhancementInputs::n_type_measurement()
        };
        let p = predict(&inputs).unwrap();
        assert_abs_diff_eq!(p.mu, 0.342, epsilon = 1e-3);
        // both forms agree in the symmetric case
        let eq2 = p.beta_saturation_form.unwrap();
        assert!((eq2 - p.beta).abs() <= 1e-12 * p.beta.max(1.0));
    }

    #[test]
    fn zero_drive_scatters_nothing() {
        let (g, _) = scattering_rates(0.0, -270.0, 220.0, 2.875, 1.0, -270.0, 220.0, 3.0).unwrap();
        assert_eq!(g, 0.0);
        let mut last = f64::INFINITY;
        for d in [100.0, 1e3, 1e4, 1e5] {
            let (g, _) = scattering_rates(29.0, d, 220.0, 2.875, 1.0, d, 220.0, 3.0).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn saturation_toward_half() {
        let beta0 = inhomogeneous_limit(220.0, 2.875).unwrap();
        let inputs = EnhancementInputs {
            omega: 1e6,
            delta: -5000.0,
            sigma: 220.0,
            gamma: 2.875,
            omega_r: 1e6,
            delta_r: -5000.0,
            sigma_r: 220.0,
            gamma_r: 2.875,
            gamma_sg: 0.35,
        };
        let p = predict(&inputs).unwrap();
        assert!((p.beta - beta0 / 2.0).abs() < 1e-3);
    }

    #[test]
    fn mu_round_trip() {
        let om = omega_for_mu(1.7, -5000.0, 220.0, 2.875, 2.875, 0.35);
        let mu2 = saturation_parameter_sq(om, -5000.0, 220.0, 2.875, 2.875, 0.35);
        assert_abs_diff_eq!(mu2, 1.7 * 1.7, epsilon = 1e-12);
    }
}
