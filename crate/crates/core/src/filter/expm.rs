use nalgebra::{DMatrix, SMatrix};

/// Coefficients of the diagonal [6/6] Padé approximant of `e^x`.
const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Scaled matrices are brought below this 1-norm before the Padé step.
const SCALE_NORM: f64 = 0.5;

fn norm1<const N: usize>(a: &SMatrix<f64, N, N>) -> f64 {
    a.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a [6/6] Padé approximant.
pub fn expm<const N: usize>(a: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let norm = norm1(a);
    let s = if norm > SCALE_NORM { (norm / SCALE_NORM).log2().ceil() as i32 } else { 0 };
    let a = a * 2f64.powi(-s);

    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let id = SMatrix::<f64, N, N>::identity();
    let even = id * PADE6[0] + a2 * PADE6[2] + a4 * PADE6[4] + a6 * PADE6[6];
    let odd = a * (id * PADE6[1] + a2 * PADE6[3] + a4 * PADE6[5]);
    let num = even + odd;
    let den = even - odd;
    // The denominator is a small perturbation of the identity after scaling.
    let den = DMatrix::from_column_slice(N, N, den.as_slice());
    let num = DMatrix::from_column_slice(N, N, num.as_slice());
    let sol = den.lu().solve(&num).expect("Padé denominator is nonsingular after scaling");
    let mut r = SMatrix::<f64, N, N>::from_column_slice(sol.as_slice());
    for _ in 0..s {
        r = r * r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, Matrix3};

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&Matrix3::<f64>::zeros()), Matrix3::identity());
    }

    #[test]
    fn rotation_generator() {
        let t = 2.5f64;
        let e = expm(&Matrix2::new(0.0, -t, t, 0.0));
        let expected = Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos());
        assert!((e - expected).abs().max() < 1e-14);
    }

    #[test]
    fn nilpotent_is_truncated_series() {
        let n = Matrix3::new(0.0, 3.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0);
        let expected = Matrix3::identity() + n + n * n * 0.5;
        assert!((expm(&n) - expected).abs().max() < 1e-13);
    }

    #[test]
    fn diagonal_with_large_norm() {
        let d = Matrix2::new(7.0, 0.0, 0.0, -3.0);
        let e = expm(&d);
        assert!((e[(0, 0)] / 7f64.exp() - 1.0).abs() < 1e-13);
        assert!((e[(1, 1)] / (-3f64).exp() - 1.0).abs() < 1e-13);
    }
}
