//! Fixed numeric formatting for every emitted file.

/// Nine significant digits in scientific notation.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0.00000000e0"
        return "0.00000000e0".to_string();
    }
    format!("{x:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig9(61.0623), "6.10623000e1");
        assert_eq!(sig9(-270.0), "-2.70000000e2");
        assert_eq!(sig9(-0.0), "0.00000000e0");
        assert_eq!(sig9(1.0 / 3.0), "3.33333333e-1");
    }
}
