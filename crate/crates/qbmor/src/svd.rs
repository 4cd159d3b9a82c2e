//! Thin SVD refined by one-sided Jacobi rotations.

use nalgebra::{DMatrix, DVector};

const MAX_SWEEPS: usize = 60;

/// Thin SVD `M = U diag(σ) Vᵀ` with `σ` descending.
///
/// Starts from the bidiagonal-QR factors and orthogonalizes the columns of `M V₀`
/// with Jacobi rotations, which restores small singular triplets to working accuracy.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (DMatrix::zeros(rows, 0), DVector::zeros(0), DMatrix::zeros(cols, 0));
    }
    let start = m.clone().svd(false, true);
    let mut v = start.v_t.expect("right singular vectors requested").transpose();
    let mut b = m * &v;
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = b.column(p).norm_squared();
                let beta = b.column(q).norm_squared();
                let gamma = b.column(p).dot(&b.column(q));
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut b, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|j| b.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DMatrix::zeros(rows, k);
    let mut vs = DMatrix::zeros(cols, k);
    let mut sigma = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        if norms[src] > 0.0 {
            u.column_mut(dst).copy_from(&(b.column(src) / norms[src]));
        }
        vs.column_mut(dst).copy_from(&v.column(src));
    }
    (u, sigma, vs)
}

fn rotate(x: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..x.nrows() {
        let (xp, xq) = (x[(i, p)], x[(i, q)]);
        x[(i, p)] = c * xp - s * xq;
        x[(i, q)] = s * xp + c * xq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graded(rows: usize, cols: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(rows, rows, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin()).qr().q();
        let b = DMatrix::from_fn(cols, cols, |i, j| ((i * 5 + j * 11) as f64 * 0.53).cos()).qr().q();
        let k = rows.min(cols);
        let d = DMatrix::from_fn(rows, cols, |i, j| if i == j && i < k { 10f64.powf(-(i as f64) * 0.8) } else { 0.0 });
        a * d * b.transpose()
    }

    #[test]
    fn diagonalizes_graded_matrices() {
        for (rows, cols) in [(12, 12), (15, 9), (8, 14)] {
            let m = graded(rows, cols);
            let (u, s, v) = thin_svd(&m);
            let k = rows.min(cols);
            assert_eq!(s.len(), k);
            assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
            let d = u.transpose() * &m * &v - DMatrix::from_diagonal(&s);
            assert!(d.amax() <= 1e-15 * s[0], "{}", d.amax());
            for i in 0..k {
                let expected = 10f64.powf(-(i as f64) * 0.8);
                assert!((s[i] - expected).abs() <= 1e-14 * s[0]);
            }
            assert!((v.transpose() * &v - DMatrix::<f64>::identity(k, k)).amax() < 1e-14);
        }
    }

    #[test]
    fn empty_and_zero_inputs() {
        let (u, s, v) = thin_svd(&DMatrix::zeros(3, 0));
        assert_eq!((u.shape(), s.len(), v.shape()), ((3, 0), 0, (0, 0)));
        let (_, s, _) = thin_svd(&DMatrix::zeros(2, 2));
        assert_eq!(s.as_slice(), &[0.0, 0.0]);
    }
}
