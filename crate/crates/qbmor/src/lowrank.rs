use nalgebra::{DMatrix, DVector, SymmetricEigen, QR};

use crate::error::{QbError, Result};

/// Symmetric PSD matrix held as `Z diag(D) Zᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    z: DMatrix<f64>,
    d: Option<DVector<f64>>,
}

impl LowRankFactor {
    pub fn new(z: DMatrix<f64>) -> Self {
        Self { z, d: None }
    }

    pub fn weighted(z: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if d.len() != z.ncols() {
            return Err(QbError::dim("factor weights", z.ncols(), d.len()));
        }
        if let Some(bad) = d.iter().find(|v| **v < 0.0 || !v.is_finite()) {
            return Err(QbError::Invalid(format!("factor weight {bad} is not a nonnegative number")));
        }
        Ok(Self { z, d: Some(d) })
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DMatrix::zeros(n, 0))
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn weights(&self) -> Option<&DVector<f64>> {
        self.d.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.z.nrows()
    }

    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    /// `Z diag(√D)`, so that the represented matrix is `F Fᵀ`.
    pub fn scaled(&self) -> DMatrix<f64> {
        match &self.d {
            None => self.z.clone(),
            Some(d) => {
                let mut f = self.z.clone();
                for (j, w) in d.iter().enumerate() {
                    f.column_mut(j).scale_mut(w.sqrt());
                }
                f
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let f = self.scaled();
        &f * f.transpose()
    }
}

/// Result of [`factorize_psd`].
#[derive(Debug, Clone)]
pub struct PsdFactor {
    pub factor: LowRankFactor,
    /// Sum of the magnitudes of the discarded negative eigenvalues.
    pub negative_mass: f64,
}

/// Eigenpairs sorted by decreasing eigenvalue, each vector's largest entry made positive.
pub(crate) fn sorted_eigen(x: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let eig = SymmetricEigen::new(x);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iamax();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    (values, vectors)
}

fn symmetric_part(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// PSD factor `Z = U₊ Λ₊^{1/2}`; eigenvalues below `clip_tol · λ_max` are dropped.
pub fn factorize_psd(x: &DMatrix<f64>, clip_tol: f64) -> Result<PsdFactor> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(QbError::dim("factorize_psd", format!("{n}x{n}"), format!("{}x{}", n, x.ncols())));
    }
    if n == 0 {
        return Ok(PsdFactor { factor: LowRankFactor::zeros(0), negative_mass: 0.0 });
    }
    let (values, vectors) = sorted_eigen(symmetric_part(x));
    let top = values[0].max(0.0);
    let negative_mass = values.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let keep = values.iter().take_while(|v| **v > 0.0 && **v > clip_tol * top).count();
    let mut z = vectors.columns(0, keep).into_owned();
    for j in 0..keep {
        z.column_mut(j).scale_mut(values[j].sqrt());
    }
    Ok(PsdFactor { factor: LowRankFactor::new(z), negative_mass })
}

/// Number of leading values whose discarded tail satisfies `√Σ_tail σ² ≤ τ √Σ σ²`.
fn retained_count(values: &[f64], tau: f64) -> usize {
    let total: f64 = values.iter().map(|s| s * s).sum();
    let budget = tau * tau * total;
    let mut tail = 0.0;
    let mut keep = values.len();
    while keep > 0 {
        let s = values[keep - 1];
        if tail + s * s > budget && s > 0.0 {
            break;
        }
        tail += s * s;
        keep -= 1;
    }
    keep
}

/// Rank truncation `T_τ`: compresses `Z D Zᵀ` with relative Frobenius error at most `tau`.
pub fn truncate_factor(f: &LowRankFactor, tau: f64) -> Result<LowRankFactor> {
    if !(0.0..1.0).contains(&tau) {
        return Err(QbError::Invalid(format!("tau = {tau} must lie in [0, 1)")));
    }
    let n = f.nrows();
    let r = f.rank();
    if r == 0 || n == 0 {
        return Ok(LowRankFactor::zeros(n));
    }
    let weight = |m: &mut DMatrix<f64>| {
        if let Some(d) = f.weights() {
            for (j, w) in d.iter().enumerate() {
                m.column_mut(j).scale_mut(*w);
            }
        }
    };
    // Small core eigenproblem: R D Rᵀ when the factor is thin, Z D Zᵀ otherwise.
    let (basis, core) = if r <= n {
        let qr = QR::new(f.z().clone());
        let rf = qr.r();
        let mut rd = rf.clone();
        weight(&mut rd);
        (Some(qr.q()), symmetric_part(&(rd * rf.transpose())))
    } else {
        let mut zd = f.z().clone();
        weight(&mut zd);
        (None, symmetric_part(&(zd * f.z().transpose())))
    };
    truncate_core(basis, core, tau)
}

fn truncate_core(basis: Option<DMatrix<f64>>, core: DMatrix<f64>, tau: f64) -> Result<LowRankFactor> {
    let (values, vectors) = sorted_eigen(core);
    let top = values[0].max(0.0);
    if let Some(worst) = values.iter().cloned().reduce(f64::min) {
        if worst < -1e-12 * top || (top == 0.0 && worst < 0.0) {
            return Err(QbError::NotPsd { eigenvalue: worst, largest: top });
        }
    }
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let keep = retained_count(&clipped, tau);
    let mut u = vectors.columns(0, keep).into_owned();
    for j in 0..keep {
        u.column_mut(j).scale_mut(clipped[j].sqrt());
    }
    let z = match basis {
        Some(q) => q * u,
        None => u,
    };
    Ok(LowRankFactor::new(z))
}

/// `T_τ` applied to a PSD matrix given densely (the Gram matrix of a wide factor).
pub fn truncate_gram(w: &DMatrix<f64>, tau: f64) -> Result<LowRankFactor> {
    if !(0.0..1.0).contains(&tau) {
        return Err(QbError::Invalid(format!("tau = {tau} must lie in [0, 1)")));
    }
    if w.nrows() == 0 {
        return Ok(LowRankFactor::zeros(0));
    }
    truncate_core(None, symmetric_part(w), tau)
}
