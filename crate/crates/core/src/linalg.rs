//! Dense complex Gaussian elimination for the small (at most 36x36)
//! steady-state systems. Row-major storage, partial pivoting.

use num_complex::Complex64;

/// Solve `a * x = b` in place; `b` is overwritten with `x`.
///
/// Returns the ratio between the smallest and largest pivot magnitude, which
/// callers use to detect a non-unique solution.
pub(crate) fn solve_in_place(a: &mut [Complex64], b: &mut [Complex64], n: usize) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut min_pivot = f64::INFINITY;
    let mut max_pivot = 0.0f64;
    for col in 0..n {
        let mut best = col;
        let mut best_mag = a[col * n + col].norm_sqr();
        for row in col + 1..n {
            let mag = a[row * n + col].norm_sqr();
            if mag > best_mag {
                best = row;
                best_mag = mag;
            }
        }
        let pivot_mag = best_mag.sqrt();
        min_pivot = min_pivot.min(pivot_mag);
        max_pivot = max_pivot.max(pivot_mag);
        if pivot_mag == 0.0 {
            return 0.0;
        }
        if best != col {
            for k in 0..n {
                a.swap(col * n + k, best * n + k);
            }
            b.swap(col, best);
        }
        let inv = a[col * n + col].inv();
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            a[row * n + col] = Complex64::new(0.0, 0.0);
            for k in col + 1..n {
                let upper = a[col * n + k];
                a[row * n + k] -= factor * upper;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    if max_pivot == 0.0 {
        0.0
    } else {
        min_pivot / max_pivot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_against_nalgebra() {
        let n = 5;
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = ((i * 7 + j * 3) % 11) as f64 - 5.0;
                let y = ((i * 2 + j * 5) % 7) as f64 - 3.0;
                a.push(Complex64::new(x + if i == j { 10.0 } else { 0.0 }, y));
            }
        }
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
        let expected = m.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        let mut a2 = a.clone();
        let mut x = b.clone();
        let ratio = solve_in_place(&mut a2, &mut x, n);
        assert!(ratio > 0.0);
        for i in 0..n {
            assert!((x[i] - expected[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_reports_zero_ratio() {
        let mut a = vec![Complex64::new(1.0, 0.0); 4];
        let mut b = vec![Complex64::new(1.0, 0.0); 2];
        assert_eq!(solve_in_place(&mut a, &mut b, 2), 0.0);
    }
}
