//! Order-3 Hessian tensors and their unfoldings.
//!
//! Entry `(i, j, k)` is the coefficient of `x_j * y_k` in `[H (x ⊗ y)]_i`, so the
//! mode-1 unfolding stores it at row `i`, column `j * d3 + k` (0-based), which is
//! the ordering of the standard Kronecker product. The other two unfoldings are
//! the transposes with respect to each Kronecker slot:
//!
//! * mode 2: row `k`, column `j * d1 + i`, so that `H2 (x ⊗ z)` is the gradient of
//!   `zᵀ H (x ⊗ y)` with respect to `y`;
//! * mode 3: row `j`, column `k * d1 + i`, the gradient of `zᵀ H (y ⊗ x)` in `y`.
//!
//! With this layout `F = H ×₁ Xᵀ ×₂ Yᵀ ×₃ Zᵀ` satisfies
//! `F1 = Xᵀ H1 (Y ⊗ Z)`, `F2 = Zᵀ H2 (Y ⊗ X)` and `F3 = Yᵀ H3 (Z ⊗ X)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{QbError, Result};

/// One nonzero of a coordinate-stored tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(DMatrix<f64>),
    Sparse(Vec<TensorEntry>),
}

/// Quadratic term of a QB system, dense or coordinate-sparse behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianTensor {
    dims: [usize; 3],
    storage: Storage,
    symmetric: bool,
}

fn check_mode(mode: usize) -> Result<()> {
    if (1..=3).contains(&mode) {
        Ok(())
    } else {
        Err(QbError::InvalidMode(mode))
    }
}

/// Row count and Kronecker factor sizes `(rows, first, second)` of an unfolding.
fn unfold_shape(dims: [usize; 3], mode: usize) -> (usize, usize, usize) {
    let [d1, d2, d3] = dims;
    match mode {
        1 => (d1, d2, d3),
        2 => (d3, d2, d1),
        _ => (d2, d3, d1),
    }
}

/// Position of entry `(i, j, k)` in the given unfolding.
fn unfold_index(dims: [usize; 3], mode: usize, i: usize, j: usize, k: usize) -> (usize, usize) {
    let [d1, _, d3] = dims;
    match mode {
        1 => (i, j * d3 + k),
        2 => (k, j * d1 + i),
        _ => (j, k * d1 + i),
    }
}

fn sort_and_merge(mut entries: Vec<TensorEntry>) -> Vec<TensorEntry> {
    entries.sort_by_key(|e| (e.i, e.j, e.k));
    let mut merged: Vec<TensorEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        match merged.last_mut() {
            Some(last) if (last.i, last.j, last.k) == (e.i, e.j, e.k) => last.value += e.value,
            _ => merged.push(e),
        }
    }
    merged.retain(|e| e.value != 0.0);
    merged
}

impl HessianTensor {
    /// All-zero cubic tensor of size `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            dims: [n, n, n],
            storage: Storage::Sparse(Vec::new()),
            symmetric: true,
        }
    }

    /// Cubic tensor from its dense mode-1 unfolding (`n × n²`).
    pub fn from_mode1(h: DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n * n {
            return Err(QbError::dim("Hessian unfolding", format!("{n}x{}", n * n), format!("{}x{}", n, h.ncols())));
        }
        Self::from_unfolding([n, n, n], 1, &h)
    }

    /// Dense tensor of arbitrary shape from any of its unfoldings.
    pub fn from_unfolding(dims: [usize; 3], mode: usize, m: &DMatrix<f64>) -> Result<Self> {
        check_mode(mode)?;
        let (rows, a, b) = unfold_shape(dims, mode);
        if m.nrows() != rows || m.ncols() != a * b {
            return Err(QbError::dim("tensor unfolding", format!("{rows}x{}", a * b), format!("{}x{}", m.nrows(), m.ncols())));
        }
        let data = if mode == 1 {
            m.clone()
        } else {
            let [d1, d2, d3] = dims;
            let mut h = DMatrix::zeros(d1, d2 * d3);
            for i in 0..d1 {
                for j in 0..d2 {
                    for k in 0..d3 {
                        let (r, c) = unfold_index(dims, mode, i, j, k);
                        h[(i, j * d3 + k)] = m[(r, c)];
                    }
                }
            }
            h
        };
        Ok(Self {
            dims,
            storage: Storage::Dense(data),
            symmetric: false,
        })
    }

    /// Coordinate-sparse tensor; duplicate positions are summed.
    pub fn from_entries(dims: [usize; 3], entries: Vec<TensorEntry>) -> Result<Self> {
        for e in &entries {
            if e.i >= dims[0] || e.j >= dims[1] || e.k >= dims[2] {
                return Err(QbError::dim("tensor entry", format!("< {dims:?}"), format!("({}, {}, {})", e.i, e.j, e.k)));
            }
        }
        Ok(Self {
            dims,
            storage: Storage::Sparse(sort_and_merge(entries)),
            symmetric: false,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Size of the first mode (the state dimension for a system Hessian).
    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn is_cubic(&self) -> bool {
        self.dims[0] == self.dims[1] && self.dims[1] == self.dims[2]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    /// Stored nonzeros (dense storage counts exact nonzero values).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(h) => h.iter().filter(|v| **v != 0.0).count(),
            Storage::Sparse(e) => e.len(),
        }
    }

    /// Nonzero entries in `(i, j, k)` order.
    pub fn entries(&self) -> Vec<TensorEntry> {
        match &self.storage {
            Storage::Sparse(e) => e.clone(),
            Storage::Dense(h) => {
                let [d1, d2, d3] = self.dims;
                let mut out = Vec::new();
                for i in 0..d1 {
                    for j in 0..d2 {
                        for k in 0..d3 {
                            let v = h[(i, j * d3 + k)];
                            if v != 0.0 {
                                out.push(TensorEntry { i, j, k, value: v });
                            }
                        }
                    }
                }
                out
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.storage {
            Storage::Dense(h) => h.iter().all(|v| *v == 0.0),
            Storage::Sparse(e) => e.is_empty(),
        }
    }

    /// Dense mode-`mode` unfolding.
    pub fn mode_unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        check_mode(mode)?;
        if let (1, Storage::Dense(h)) = (mode, &self.storage) {
            return Ok(h.clone());
        }
        let (rows, a, b) = unfold_shape(self.dims, mode);
        let mut m = DMatrix::zeros(rows, a * b);
        match &self.storage {
            Storage::Sparse(entries) => {
                for e in entries {
                    let (r, c) = unfold_index(self.dims, mode, e.i, e.j, e.k);
                    m[(r, c)] = e.value;
                }
            }
            Storage::Dense(h) => {
                let [d1, d2, d3] = self.dims;
                for i in 0..d1 {
                    for j in 0..d2 {
                        for k in 0..d3 {
                            let (r, c) = unfold_index(self.dims, mode, i, j, k);
                            m[(r, c)] = h[(i, j * d3 + k)];
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Averages each entry with its partner under swapping the two Kronecker slots.
    pub fn symmetrize(&self) -> Result<Self> {
        let [d1, d2, d3] = self.dims;
        if d2 != d3 {
            return Err(QbError::dim("symmetrize", format!("d2 = d3 = {d2}"), format!("d3 = {d3}")));
        }
        let storage = match &self.storage {
            Storage::Dense(h) => {
                let mut s = h.clone();
                for i in 0..d1 {
                    for j in 0..d2 {
                        for k in 0..j {
                            let v = 0.5 * (h[(i, j * d3 + k)] + h[(i, k * d3 + j)]);
                            s[(i, j * d3 + k)] = v;
                            s[(i, k * d3 + j)] = v;
                        }
                    }
                }
                Storage::Dense(s)
            }
            Storage::Sparse(entries) => {
                let mut halves = Vec::with_capacity(2 * entries.len());
                for e in entries {
                    if e.j == e.k {
                        halves.push(*e);
                    } else {
                        let v = 0.5 * e.value;
                        halves.push(TensorEntry { value: v, ..*e });
                        halves.push(TensorEntry { j: e.k, k: e.j, value: v, ..*e });
                    }
                }
                Storage::Sparse(sort_and_merge(halves))
            }
        };
        Ok(Self {
            dims: self.dims,
            storage,
            symmetric: true,
        })
    }

    /// `H (x ⊗ y)`.
    pub fn apply_bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let [d1, d2, d3] = self.dims;
        if x.len() != d2 || y.len() != d3 {
            return Err(QbError::dim("apply_bilinear", format!("({d2}, {d3})"), format!("({}, {})", x.len(), y.len())));
        }
        let mut out = DVector::zeros(d1);
        match &self.storage {
            Storage::Dense(h) => {
                for j in 0..d2 {
                    if x[j] != 0.0 {
                        out.gemv(x[j], &h.columns(j * d3, d3), y, 1.0);
                    }
                }
            }
            Storage::Sparse(entries) => {
                for e in entries {
                    out[e.i] += e.value * x[e.j] * y[e.k];
                }
            }
        }
        Ok(out)
    }

    /// `H (x ⊗ x)` without forming the Kronecker product.
    pub fn apply_quadratic(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.apply_bilinear(x, x)
    }

    /// `H^(mode) (Z ⊗ X)`, using the coordinate structure when available.
    pub fn gamma(&self, mode: usize, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_mode(mode)?;
        let (rows, a, b) = unfold_shape(self.dims, mode);
        match &self.storage {
            Storage::Dense(h) if mode == 1 => gamma_product(h, z, x),
            Storage::Dense(_) => gamma_product(&self.mode_unfold(mode)?, z, x),
            Storage::Sparse(entries) => {
                if z.nrows() != a || x.nrows() != b {
                    return Err(QbError::dim("gamma_product", format!("factors with {a} and {b} rows"), format!("{} and {}", z.nrows(), x.nrows())));
                }
                let (r, s) = (z.ncols(), x.ncols());
                let mut out = DMatrix::zeros(rows, r * s);
                for e in entries {
                    let (row, col) = unfold_index(self.dims, mode, e.i, e.j, e.k);
                    let (ia, ib) = (col / b, col % b);
                    for p in 0..r {
                        let zp = e.value * z[(ia, p)];
                        if zp == 0.0 {
                            continue;
                        }
                        for q in 0..s {
                            out[(row, p * s + q)] += zp * x[(ib, q)];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// `H ×₁ Xᵀ ×₂ Yᵀ ×₃ Zᵀ` for factors given as `xt`, `yt`, `zt`.
    pub fn mode_products(&self, xt: &DMatrix<f64>, yt: &DMatrix<f64>, zt: &DMatrix<f64>) -> Result<Self> {
        let [d1, d2, d3] = self.dims;
        if xt.ncols() != d1 || yt.ncols() != d2 || zt.ncols() != d3 {
            return Err(QbError::dim(
                "mode_products",
                format!("factor widths {d1}, {d2}, {d3}"),
                format!("{}, {}, {}", xt.ncols(), yt.ncols(), zt.ncols()),
            ));
        }
        let inner = self.gamma(1, &yt.transpose(), &zt.transpose())?;
        let f1 = xt * inner;
        let mut out = Self::from_unfolding([xt.nrows(), yt.nrows(), zt.nrows()], 1, &f1)?;
        out.symmetric = false;
        Ok(out)
    }

    /// `H^(mode) H^(mode)ᵀ`, assembled without the dense unfolding for sparse storage.
    pub fn unfolding_gram(&self, mode: usize) -> Result<DMatrix<f64>> {
        check_mode(mode)?;
        match &self.storage {
            Storage::Dense(_) => {
                let m = self.mode_unfold(mode)?;
                Ok(&m * m.transpose())
            }
            Storage::Sparse(entries) => {
                let (rows, _, _) = unfold_shape(self.dims, mode);
                let mut keyed: Vec<(usize, usize, f64)> = entries
                    .iter()
                    .map(|e| {
                        let (r, c) = unfold_index(self.dims, mode, e.i, e.j, e.k);
                        (c, r, e.value)
                    })
                    .collect();
                keyed.sort_by_key(|t| (t.0, t.1));
                let mut g = DMatrix::zeros(rows, rows);
                let mut start = 0;
                while start < keyed.len() {
                    let mut end = start + 1;
                    while end < keyed.len() && keyed[end].0 == keyed[start].0 {
                        end += 1;
                    }
                    for a in &keyed[start..end] {
                        for b in &keyed[start..end] {
                            g[(a.1, b.1)] += a.2 * b.2;
                        }
                    }
                    start = end;
                }
                Ok(g)
            }
        }
    }

    /// Spectral norm of the given unfolding.
    pub fn spectral_norm(&self, mode: usize) -> Result<f64> {
        let g = self.unfolding_gram(mode)?;
        if g.nrows() == 0 {
            return Ok(0.0);
        }
        let top = g.symmetric_eigenvalues().iter().cloned().fold(0.0_f64, f64::max);
        Ok(top.max(0.0).sqrt())
    }
}

/// `H_mode (Z ⊗ X)` for a dense unfolding, one Kronecker slot at a time.
///
/// Only `rows × s` intermediates are formed; the `n² × r·s` Kronecker factor never is.
pub fn gamma_product(h_mode: &DMatrix<f64>, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (z.nrows(), x.nrows());
    if h_mode.ncols() != a * b {
        return Err(QbError::dim("gamma_product", format!("{} columns", a * b), format!("{}", h_mode.ncols())));
    }
    let (r, s) = (z.ncols(), x.ncols());
    let mut out = DMatrix::zeros(h_mode.nrows(), r * s);
    if r == 0 || s == 0 {
        return Ok(out);
    }
    for ia in 0..a {
        let block = h_mode.columns(ia * b, b) * x;
        for p in 0..r {
            let w = z[(ia, p)];
            if w != 0.0 {
                let mut dst = out.columns_mut(p * s, s);
                dst += &block * w;
            }
        }
    }
    Ok(out)
}
