//! Small dense symmetric solve for the dual Newton step.

/// Solves `a x = b` for symmetric positive semidefinite `a` (row-major,
/// `k x k`) by Cholesky factorisation.
///
/// The system is first scaled to unit diagonal. A small ridge is added so
/// singular systems still yield a step, and raised if the factorisation
/// breaks down. Returns `None` for a non-positive diagonal or if no ridge
/// up to `1e-2` helps.
pub(crate) fn solve_psd(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let scale: Vec<f64> = (0..k)
        .map(|i| {
            let d = a[i * k + i];
            (d > 0.0 && d.is_finite()).then(|| 1.0 / d.sqrt())
        })
        .collect::<Option<_>>()?;
    let scaled: Vec<f64> = (0..k * k)
        .map(|p| a[p] * scale[p / k] * scale[p % k])
        .collect();
    let rhs: Vec<f64> = b.iter().zip(&scale).map(|(v, s)| v * s).collect();
    let mut ridge = 1e-12;
    while ridge <= 1e-2 {
        if let Some(mut y) = cholesky_solve(&scaled, &rhs, k, ridge) {
            for (v, s) in y.iter_mut().zip(&scale) {
                *v *= s;
            }
            return Some(y);
        }
        ridge *= 100.0;
    }
    None
}

fn cholesky_solve(a: &[f64], b: &[f64], k: usize, ridge: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            if i == j {
                s += ridge;
            }
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= l[i * k + p] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= l[p * k + i] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    Some(y)
}
