//! Closed-form Voigt line center, independent of the quadrature path.

use statrs::function::erf::erfc;

/// Peak of the Gaussian-averaged Lorentzian (HWHM `gamma`, Gaussian standard
/// deviation `sigma`), normalized to the bare Lorentzian peak:
/// `sqrt(pi/2) (gamma/sigma) exp(y^2) erfc(y)` with `y = gamma / (sqrt(2) sigma)`.
pub fn voigt_peak(gamma: f64, sigma: f64) -> f64 {
    let y = gamma / (std::f64::consts::SQRT_2 * sigma);
    (std::f64::consts::PI / 2.0).sqrt() * (gamma / sigma) * erfcx(y)
}

/// Scaled complementary error function `exp(y^2) erfc(y)` for `y >= 0`.
pub fn erfcx(y: f64) -> f64 {
    if y < 25.0 {
        (y * y).exp() * erfc(y)
    } else {
        // asymptotic series; the first omitted term is below 1e-12 here
        let t = 1.0 / (2.0 * y * y);
        (1.0 - t + 3.0 * t * t - 15.0 * t * t * t) / (y * std::f64::consts::PI.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits() {
        // sigma >> gamma: sqrt(pi/2) gamma / sigma
        let v = voigt_peak(1e-3, 1.0);
        assert!((v / ((std::f64::consts::PI / 2.0).sqrt() * 1e-3) - 1.0).abs() < 1e-3);
        // sigma << gamma: homogeneous line
        assert!((voigt_peak(1.0, 1e-4) - 1.0).abs() < 1e-6);
        assert!((voigt_peak(2.875, 220.0) - 0.01621).abs() < 5e-5);
    }
}
