//! Real Schur form by Francis double-shift QR with exceptional shifts.

use nalgebra::DMatrix;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;
const EXCEPTIONAL_EVERY: usize = 10;

/// Householder vector `v` (with `v[0] = 1`) and `β` such that `(I − βvvᵀ)x = ±‖x‖e₁`.
fn householder<const N: usize>(x: [f64; N]) -> Option<([f64; N], f64)> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x;
    v[0] -= alpha;
    let vv: f64 = v.iter().map(|e| e * e).sum();
    if vv == 0.0 {
        return None;
    }
    Some((v, 2.0 / vv))
}

/// `H ← (I − βvvᵀ)H` on rows `r0..r0+N`, columns `cols`.
fn reflect_rows<const N: usize>(h: &mut DMatrix<f64>, r0: usize, cols: std::ops::Range<usize>, v: &[f64; N], beta: f64) {
    for c in cols {
        let dot: f64 = (0..N).map(|i| v[i] * h[(r0 + i, c)]).sum::<f64>() * beta;
        for i in 0..N {
            h[(r0 + i, c)] -= dot * v[i];
        }
    }
}

/// `H ← H(I − βvvᵀ)` on columns `c0..c0+N`, rows `rows`.
fn reflect_cols<const N: usize>(h: &mut DMatrix<f64>, c0: usize, rows: std::ops::Range<usize>, v: &[f64; N], beta: f64) {
    for r in rows {
        let dot: f64 = (0..N).map(|i| v[i] * h[(r, c0 + i)]).sum::<f64>() * beta;
        for i in 0..N {
            h[(r, c0 + i)] -= dot * v[i];
        }
    }
}

/// Returns `(Q, T)` with `A = QTQᵀ`, `Q` orthogonal and `T` upper quasi-triangular.
pub(crate) fn real_schur(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n == 0 || a.iter().any(|v| !v.is_finite()) {
        return (n == 0).then(|| (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)));
    }
    let (mut q, mut h) = a.clone().hessenberg().unpack();
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = 0.0;
        }
    }
    let norm = h.norm().max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let mut budget = MAX_SWEEPS_PER_EIGENVALUE * n;
    let mut since_deflation = 0;
    let mut hi = n - 1;
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            // local test, or roundoff relative to the whole matrix inside eigenvalue clusters
            let local = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            let sub = h[(l, l - 1)].abs();
            if sub <= eps * local || sub <= eps * norm {
                h[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        if l + 1 == hi {
            if hi < 2 {
                break;
            }
            hi -= 2;
            since_deflation = 0;
            continue;
        }
        if budget == 0 {
            return None;
        }
        budget -= 1;
        since_deflation += 1;

        let (tr, det) = if since_deflation % EXCEPTIONAL_EVERY == 0 {
            let s = h[(hi, hi - 1)].abs() + h[(hi - 1, hi - 2)].abs();
            (1.5 * s, 0.5625 * s * s + 0.4375 * s * s)
        } else {
            let (p, r, s, t) = (h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
            (p + t, p * t - r * s)
        };
        let mut x = h[(l, l)] * h[(l, l)] + h[(l, l + 1)] * h[(l + 1, l)] - tr * h[(l, l)] + det;
        let mut y = h[(l + 1, l)] * (h[(l, l)] + h[(l + 1, l + 1)] - tr);
        let mut z = h[(l + 1, l)] * h[(l + 2, l + 1)];
        for k in l..hi - 1 {
            if let Some((v, beta)) = householder([x, y, z]) {
                let c0 = if k > l { k - 1 } else { l };
                reflect_rows(&mut h, k, c0..n, &v, beta);
                reflect_cols(&mut h, k, 0..(k + 4).min(hi + 1), &v, beta);
                reflect_cols(&mut q, k, 0..n, &v, beta);
            }
            x = h[(k + 1, k)];
            y = h[(k + 2, k)];
            if k + 3 <= hi {
                z = h[(k + 3, k)];
            }
            if k > l {
                h[(k + 1, k - 1)] = 0.0;
                h[(k + 2, k - 1)] = 0.0;
            }
        }
        if let Some((v, beta)) = householder([x, y]) {
            reflect_rows(&mut h, hi - 1, (hi - 2)..n, &v, beta);
            reflect_cols(&mut h, hi - 1, 0..hi + 1, &v, beta);
            reflect_cols(&mut q, hi - 1, 0..n, &v, beta);
        }
        h[(hi, hi - 2)] = 0.0;
        for k in (l + 2)..=hi {
            h[(k, k - 2)] = 0.0;
            if k >= 3 {
                h[(k, k - 3)] = 0.0;
            }
        }
    }
    Some((q, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(a: &DMatrix<f64>) {
        let (q, t) = real_schur(a).expect("converged");
        let n = a.nrows();
        assert!((&q * &t * q.transpose() - a).norm() <= 1e-12 * a.norm().max(1.0));
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(n, n)).norm() <= 1e-12);
        for j in 0..n {
            for i in (j + 2)..n {
                assert_eq!(t[(i, j)], 0.0);
            }
        }
        for i in 1..n.saturating_sub(1) {
            assert!(t[(i, i - 1)] == 0.0 || t[(i + 1, i)] == 0.0, "adjacent 2x2 blocks overlap");
        }
    }

    #[test]
    fn cyclic_permutation_needs_exceptional_shift() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        check(&p);
    }

    #[test]
    fn assorted_matrices() {
        check(&DMatrix::from_element(1, 1, -3.0));
        check(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        check(&-DMatrix::<f64>::identity(5, 5));
        let m = DMatrix::from_fn(9, 9, |i, j| ((3 * i + 7 * j) as f64 * 0.91).sin());
        check(&m);
        let mut jordan = DMatrix::from_diagonal_element(6, 6, -0.5);
        for i in 0..5 {
            jordan[(i, i + 1)] = 1.0;
        }
        check(&jordan);
    }

    #[test]
    fn clustered_spectrum_far_below_the_norm() {
        let u = DMatrix::from_fn(8, 4, |i, j| ((i * 5 + j * 3) as f64 * 0.77).cos() * 40.0);
        let v = DMatrix::from_fn(4, 8, |i, j| ((i * 2 + j * 7) as f64 * 0.41).sin());
        // rank four, so the eigenvalue -0.05 has multiplicity four after the shift
        let a = &u * &v - DMatrix::<f64>::identity(8, 8) * 0.05;
        check(&a);
    }
}
