use nalgebra::{DMatrix, DVector};

use crate::error::{QbError, Result};
use crate::tensor::HessianTensor;

/// Quadratic-bilinear system `ẋ = Ax + H(x⊗x) + Σ N_k x u_k + Bu`, `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QbSystem {
    a: DMatrix<f64>,
    h: HessianTensor,
    bilinear: Vec<DMatrix<f64>>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl QbSystem {
    /// Validates dimensions and symmetrizes the Hessian.
    pub fn new(
        a: DMatrix<f64>,
        h: HessianTensor,
        bilinear: Vec<DMatrix<f64>>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(QbError::dim("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
        }
        if h.dims() != [n, n, n] {
            return Err(QbError::dim("H", format!("{n}x{}", n * n), format!("{:?}", h.dims())));
        }
        if b.nrows() != n {
            return Err(QbError::dim("B rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(QbError::dim("C columns", n, c.ncols()));
        }
        if bilinear.len() != b.ncols() {
            return Err(QbError::dim("number of N_k", b.ncols(), bilinear.len()));
        }
        for nk in &bilinear {
            if nk.shape() != (n, n) {
                return Err(QbError::dim("N_k", format!("{n}x{n}"), format!("{}x{}", nk.nrows(), nk.ncols())));
            }
        }
        let h = if h.is_symmetric() { h } else { h.symmetrize()? };
        Ok(Self { a, h, bilinear, b, c })
    }

    /// Linear system `ẋ = Ax + Bu` (H = 0, N_k = 0).
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let bilinear = vec![DMatrix::zeros(n, n); b.ncols()];
        Self::new(a, HessianTensor::zeros(n), bilinear, b, c)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn h(&self) -> &HessianTensor {
        &self.h
    }

    pub fn bilinear(&self) -> &[DMatrix<f64>] {
        &self.bilinear
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Copy with `A ← A − sI`.
    pub fn shift_a(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n() {
            out.a[(i, i)] -= s;
        }
        out
    }

    /// `Ax + H(x⊗x) + Σ N_k x u_k + Bu`.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(QbError::dim("state", self.n(), x.len()));
        }
        if u.len() != self.m() {
            return Err(QbError::dim("input", self.m(), u.len()));
        }
        let mut out = self.h.apply_quadratic(x)?;
        out.gemv(1.0, &self.a, x, 1.0);
        for (nk, uk) in self.bilinear.iter().zip(u.iter()) {
            if *uk != 0.0 {
                out.gemv(*uk, nk, x, 1.0);
            }
        }
        out.gemv(1.0, &self.b, u, 1.0);
        Ok(out)
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    /// Petrov-Galerkin projection `(WᵀAV, WᵀH(V⊗V), WᵀN_kV, WᵀB, CV)`.
    pub fn project(&self, w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Self> {
        let n = self.n();
        if w.nrows() != n || v.nrows() != n || w.ncols() != v.ncols() {
            return Err(QbError::dim("projection bases", format!("{n}xr pair"), format!("{:?} and {:?}", w.shape(), v.shape())));
        }
        let wt = w.transpose();
        let vt = v.transpose();
        let a = &wt * &self.a * v;
        let h = self.h.mode_products(&wt, &vt, &vt)?;
        let bilinear = self.bilinear.iter().map(|nk| &wt * nk * v).collect();
        let b = &wt * &self.b;
        let c = &self.c * v;
        Self::new(a, h, bilinear, b, c)
    }
}
