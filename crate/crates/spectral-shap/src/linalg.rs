//! Dense symmetric solves for the small least-squares systems in this crate
//! (KernelSHAP reductions, low-degree regression refits).

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, p x p)
/// by Cholesky factorization. Returns the solution and a rough condition
/// estimate `(max diag(L) / min diag(L))^2`, or `None` when a pivot is not
/// positive.
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], p: usize) -> Option<(Vec<f64>, f64)> {
    debug_assert_eq!(a.len(), p * p);
    debug_assert_eq!(b.len(), p);
    let mut l = vec![0.0f64; p * p];
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                let d = sum.sqrt();
                l[i * p + i] = d;
                dmin = dmin.min(d);
                dmax = dmax.max(d);
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }

    // Forward then backward substitution.
    let mut y = vec![0.0f64; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * p + k] * y[k];
        }
        y[i] = sum / l[i * p + i];
    }
    let mut x = vec![0.0f64; p];
    for i in (0..p).rev() {
        let mut sum = y[i];
        for k in i + 1..p {
            sum -= l[k * p + i] * x[k];
        }
        x[i] = sum / l[i * p + i];
    }

    let ratio = dmax / dmin;
    Some((x, ratio * ratio))
}
