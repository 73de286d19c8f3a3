//! Dense helpers for small generator matrices.
//!
//! The propagator is a scaling-and-squaring Padé(13) matrix exponential
//! (Higham 2005). Rate matrices can be defective or badly conditioned, so no
//! eigendecomposition shortcut is taken.

use nalgebra::{SMatrix, SVector};

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = SVector<f64, 7>;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which Padé(13) needs no scaling.
const THETA13: f64 = 5.371920351148152;

fn norm1<const D: usize>(a: &SMatrix<f64, D, D>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential `e^A`.
///
/// Returns `None` when `A` has non-finite entries.
pub fn expm<const D: usize>(a: &SMatrix<f64, D, D>) -> Option<SMatrix<f64, D, D>> {
    let (mut r, squarings) = pade_scaled(a)?;
    for _ in 0..squarings {
        r = r * r;
    }
    Some(r)
}

/// `e^{R t}` for a generator `R` (columns summing to zero).
///
/// Each squaring is followed by rescaling every column to unit sum, which
/// holds exactly for the true propagator; otherwise round-off in the column
/// sums doubles with every squaring and long horizons drift off the simplex.
pub fn propagator(r: &Matrix7, t: f64) -> Option<Matrix7> {
    let (mut p, squarings) = pade_scaled(&(r * t))?;
    for _ in 0..squarings {
        p = p * p;
        for mut c in p.column_iter_mut() {
            let s = c.sum();
            if s > 0.0 {
                c /= s;
            }
        }
    }
    Some(p)
}

/// Padé(13) approximant of `e^{A / 2^s}` and the number of squarings `s`.
fn pade_scaled<const D: usize>(a: &SMatrix<f64, D, D>) -> Option<(SMatrix<f64, D, D>, i32)> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let norm = norm1(a);
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let a = a * 2f64.powi(-squarings);
    let b = &PADE13;
    let ident = SMatrix::<f64, D, D>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;

    let u_inner = a6 * (a6 * b[13] + a4 * b[11] + a2 * b[9]) + a6 * b[7] + a4 * b[5] + a2 * b[3] + ident * b[1];
    let u = a * u_inner;
    let v = a6 * (a6 * b[12] + a4 * b[10] + a2 * b[8]) + a6 * b[6] + a4 * b[4] + a2 * b[2] + ident * b[0];

    Some((solve(v - u, v + u)?, squarings))
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
fn solve<const D: usize>(mut a: SMatrix<f64, D, D>, mut b: SMatrix<f64, D, D>) -> Option<SMatrix<f64, D, D>> {
    for col in 0..D {
        let (pivot, max) =
            (col..D).map(|r| (r, a[(r, col)].abs())).fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if max == 0.0 || !max.is_finite() {
            return None;
        }
        a.swap_rows(col, pivot);
        b.swap_rows(col, pivot);
        let d = a[(col, col)];
        for r in col + 1..D {
            let f = a[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..D {
                a[(r, c)] -= f * a[(col, c)];
            }
            for c in 0..D {
                b[(r, c)] -= f * b[(col, c)];
            }
        }
    }
    for col in (0..D).rev() {
        let d = a[(col, col)];
        for c in 0..D {
            let mut acc = b[(col, c)];
            for k in col + 1..D {
                acc -= a[(col, k)] * b[(k, c)];
            }
            b[(col, c)] = acc / d;
        }
    }
    Some(b)
}

/// Returns `(e^{R t}, ∫₀ᵗ e^{R s} ds)` for a 7×7 generator.
///
/// Both blocks come from a single exponential of the augmented matrix
/// `[[R t, I t], [0, 0]]`.
pub fn propagator_with_integral(r: &Matrix7, t: f64) -> Option<(Matrix7, Matrix7)> {
    let mut aug = SMatrix::<f64, 14, 14>::zeros();
    aug.fixed_view_mut::<7, 7>(0, 0).copy_from(&(r * t));
    aug.fixed_view_mut::<7, 7>(0, 7).copy_from(&(Matrix7::identity() * t));
    let e = expm(&aug)?;
    Some((e.fixed_view::<7, 7>(0, 0).into_owned(), e.fixed_view::<7, 7>(0, 7).into_owned()))
}

/// Right singular vector of the smallest singular value, with the full
/// (ascending) singular spectrum.
pub fn null_vector(a: &Matrix7) -> (Vector7, Vec<f64>) {
    let svd = a.svd_unordered(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut spectrum: Vec<f64> = svd.singular_values.iter().copied().collect();
    spectrum.sort_by(f64::total_cmp);
    (v_t.row(imin).transpose(), spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;

    #[test]
    fn expm_of_zero_is_identity() {
        let z = Matrix7::zeros();
        assert_eq!(expm(&z).unwrap(), Matrix7::identity());
    }

    #[test]
    fn long_horizon_propagator_stays_stochastic() {
        // Chain with rates spanning six decades.
        let mut r = Matrix7::zeros();
        for i in 0..6 {
            let k = 10f64.powi(i as i32 - 3);
            r[(i + 1, i)] += k;
            r[(i, i)] -= k;
            r[(i, i + 1)] += 2.0 * k;
            r[(i + 1, i + 1)] -= 2.0 * k;
        }
        let p = propagator(&r, 1e9).unwrap();
        for c in p.column_iter() {
            assert!((c.sum() - 1.0).abs() < 1e-13);
        }
        // Every column converges to the same stationary vector.
        for j in 1..7 {
            assert!((p.column(j) - p.column(0)).amax() < 1e-10);
        }
    }

    #[test]
    fn expm_two_state_closed_form() {
        // Two-state generator with rates a (1→2) and b (2→1).
        let (a, b) = (3.0, 1.0);
        let r = Matrix2::new(-a, b, a, -b);
        for &t in &[0.01, 0.5, 2.0, 40.0] {
            let e = expm(&(r * t)).unwrap();
            let s = a + b;
            let decay = (-s * t).exp();
            let expect =
                Matrix2::new((b + a * decay) / s, (b - b * decay) / s, (a - a * decay) / s, (a + b * decay) / s);
            assert_relative_eq!(e, expect, epsilon = 1e-13, max_relative = 1e-12);
        }
    }

    #[test]
    fn expm_rejects_non_finite() {
        let mut m = Matrix7::zeros();
        m[(2, 3)] = f64::NAN;
        assert!(expm(&m).is_none());
    }

    #[test]
    fn integral_of_zero_generator_is_time() {
        let (p, i) = propagator_with_integral(&Matrix7::zeros(), 2.5).unwrap();
        assert_relative_eq!(p, Matrix7::identity(), epsilon = 1e-15);
        assert_relative_eq!(i, Matrix7::identity() * 2.5, epsilon = 1e-14);
    }

    #[test]
    fn integral_matches_quadrature() {
        let mut r = Matrix7::zeros();
        r[(1, 0)] = 0.3;
        r[(0, 0)] = -0.3;
        r[(0, 1)] = 0.1;
        r[(1, 1)] = -0.1;
        let t = 7.0;
        let (_, integral) = propagator_with_integral(&r, t).unwrap();
        // composite Simpson on e^{Rs}
        let n = 2000;
        let h = t / n as f64;
        let mut acc = Matrix7::zeros();
        for k in 0..=n {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += expm(&(r * (k as f64 * h))).unwrap() * w;
        }
        acc *= h / 3.0;
        assert_relative_eq!(integral, acc, epsilon = 1e-10);
    }
}
