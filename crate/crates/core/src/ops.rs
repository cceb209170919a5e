//! Structured linear operators for the constraint term `Ap - Bq`.
//!
//! Operators are applied matrix-free. Dense materialization happens only
//! for spectral queries without a Kronecker shortcut, and in tests.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Largest dense dimension accepted by [`StructuredOperator::spectral_bounds`].
pub const DEFAULT_DENSE_LIMIT: usize = 4096;

/// Eigenvalues of the Gram matrix below this fraction of the largest are
/// treated as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StructuredOperator {
    Identity(usize),
    /// `I_{n_z} ⊗ vᵀ`: maps a z-major block of `n_z * v.len()` entries to `n_z`.
    KronRowVec {
        n_z: usize,
        v: Vec<f64>,
    },
    /// `I_{n_z} ⊗ Wᵀ` with `W` stored row-major as `rows × cols`: maps a
    /// z-major block of `n_z * rows` entries to `n_z * cols`.
    KronMat {
        n_z: usize,
        w: Vec<f64>,
        rows: usize,
        cols: usize,
    },
    VStack(Vec<StructuredOperator>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    /// Largest singular value.
    pub max_singular: f64,
    /// Smallest of the `min(m, n)` singular values (zero when rank deficient).
    pub min_singular: f64,
    /// Smallest positive eigenvalue of `op · opᵀ`.
    pub min_positive_gram_eig: f64,
}

impl StructuredOperator {
    pub fn kron_row(n_z: usize, v: Vec<f64>) -> Self {
        StructuredOperator::KronRowVec { n_z, v }
    }

    pub fn kron_mat(n_z: usize, w: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        check_len(rows * cols, w.len())?;
        Ok(StructuredOperator::KronMat { n_z, w, rows, cols })
    }

    pub fn vstack(children: Vec<StructuredOperator>) -> Result<Self> {
        let first = children
            .first()
            .ok_or_else(|| Error::InvalidInput("empty operator stack".into()))?;
        let n = first.input_dim();
        for c in &children {
            check_len(n, c.input_dim())?;
        }
        Ok(StructuredOperator::VStack(children))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            StructuredOperator::Identity(n) => *n,
            StructuredOperator::KronRowVec { n_z, v } => n_z * v.len(),
            StructuredOperator::KronMat { n_z, rows, .. } => n_z * rows,
            StructuredOperator::VStack(c) => c.first().map_or(0, Self::input_dim),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            StructuredOperator::Identity(n) => *n,
            StructuredOperator::KronRowVec { n_z, .. } => *n_z,
            StructuredOperator::KronMat { n_z, cols, .. } => n_z * cols,
            StructuredOperator::VStack(c) => c.iter().map(Self::output_dim).sum(),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), v.len())?;
        let mut out = vec![0.0; self.output_dim()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    pub fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.output_dim(), u.len())?;
        let mut out = vec![0.0; self.input_dim()];
        self.apply_transpose_add(u, &mut out);
        Ok(out)
    }

    /// `out = op · v`; lengths must already match.
    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            StructuredOperator::Identity(_) => out.copy_from_slice(v),
            StructuredOperator::KronRowVec { v: row, .. } => {
                let k = row.len();
                for (z, o) in out.iter_mut().enumerate() {
                    *o = v[z * k..(z + 1) * k]
                        .iter()
                        .zip(row)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
            StructuredOperator::KronMat { n_z, w, rows, cols } => {
                for z in 0..*n_z {
                    let block = &v[z * rows..(z + 1) * rows];
                    let dst = &mut out[z * cols..(z + 1) * cols];
                    dst.iter_mut().for_each(|d| *d = 0.0);
                    for (x, &bx) in block.iter().enumerate() {
                        let wrow = &w[x * cols..(x + 1) * cols];
                        for (d, &wxy) in dst.iter_mut().zip(wrow) {
                            *d += wxy * bx;
                        }
                    }
                }
            }
            StructuredOperator::VStack(children) => {
                let mut off = 0;
                for c in children {
                    let m = c.output_dim();
                    c.apply_into(v, &mut out[off..off + m]);
                    off += m;
                }
            }
        }
    }

    /// `out += opᵀ · u`.
    pub(crate) fn apply_transpose_add(&self, u: &[f64], out: &mut [f64]) {
        match self {
            StructuredOperator::Identity(_) => {
                out.iter_mut().zip(u).for_each(|(o, a)| *o += a);
            }
            StructuredOperator::KronRowVec { v: row, .. } => {
                let k = row.len();
                for (z, &uz) in u.iter().enumerate() {
                    for (o, &r) in out[z * k..(z + 1) * k].iter_mut().zip(row) {
                        *o += uz * r;
                    }
                }
            }
            StructuredOperator::KronMat { n_z, w, rows, cols } => {
                for z in 0..*n_z {
                    let uz = &u[z * cols..(z + 1) * cols];
                    let dst = &mut out[z * rows..(z + 1) * rows];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let wrow = &w[x * cols..(x + 1) * cols];
                        *d += wrow.iter().zip(uz).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            StructuredOperator::VStack(children) => {
                let mut off = 0;
                for c in children {
                    let m = c.output_dim();
                    c.apply_transpose_add(&u[off..off + m], out);
                    off += m;
                }
            }
        }
    }

    /// Squared spectral norm. Exact when a spectrum is available, otherwise
    /// estimated by power iteration on `MᵀM`.
    pub fn norm_sq(&self) -> f64 {
        if let Ok(b) = self.spectral_bounds() {
            return b.max_singular * b.max_singular;
        }
        let n = self.input_dim();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut mv = vec![0.0; self.output_dim()];
        let mut lambda = 0.0;
        for _ in 0..200 {
            self.apply_into(&v, &mut mv);
            let mut w = vec![0.0; n];
            self.apply_transpose_add(&mv, &mut w);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let converged = (norm - lambda).abs() <= 1e-12 * norm;
            lambda = norm;
            v = w.into_iter().map(|x| x / norm).collect();
            if converged {
                break;
            }
        }
        lambda
    }

    /// Row-major `output_dim × input_dim` matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let (m, n) = (self.output_dim(), self.input_dim());
        let mut dense = vec![0.0; m * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            for i in 0..m {
                dense[i * n + j] = col[i];
            }
            e[j] = 0.0;
        }
        dense
    }

    /// Factor `M` (rows × cols) such that the operator equals `I_{n_z} ⊗ Mᵀ`
    /// up to a permutation of output rows.
    fn kron_factor(&self) -> Option<(usize, Vec<f64>, usize, usize)> {
        match self {
            StructuredOperator::Identity(n) => Some((*n, vec![1.0], 1, 1)),
            StructuredOperator::KronRowVec { n_z, v } => Some((*n_z, v.clone(), v.len(), 1)),
            StructuredOperator::KronMat { n_z, w, rows, cols } => {
                Some((*n_z, w.clone(), *rows, *cols))
            }
            StructuredOperator::VStack(children) => {
                let parts: Vec<_> = children
                    .iter()
                    .map(Self::kron_factor)
                    .collect::<Option<_>>()?;
                let (n_z, _, rows, _) = parts[0];
                if parts.iter().any(|p| p.0 != n_z || p.2 != rows) {
                    return None;
                }
                let cols: usize = parts.iter().map(|p| p.3).sum();
                let mut m = vec![0.0; rows * cols];
                let mut off = 0;
                for (_, f, _, c) in &parts {
                    for r in 0..rows {
                        m[r * cols + off..r * cols + off + c]
                            .copy_from_slice(&f[r * c..(r + 1) * c]);
                    }
                    off += c;
                }
                Some((n_z, m, rows, cols))
            }
        }
    }

    pub fn spectral_bounds(&self) -> Result<SpectralBounds> {
        self.spectral_bounds_with_limit(DEFAULT_DENSE_LIMIT)
    }

    /// Singular-value extremes. Kronecker-structured operators reduce to the
    /// small factor since the singular values of `I ⊗ Wᵀ` are those of `W`;
    /// anything else is materialized, up to `dense_limit` in either dimension.
    pub fn spectral_bounds_with_limit(&self, dense_limit: usize) -> Result<SpectralBounds> {
        if let Some((_, m, rows, cols)) = self.kron_factor() {
            return Ok(bounds_from_matrix(&m, rows, cols));
        }
        let (m, n) = (self.output_dim(), self.input_dim());
        if m.max(n) > dense_limit {
            return Err(Error::Capability(format!(
                "{m}x{n} operator exceeds dense limit {dense_limit}"
            )));
        }
        Ok(bounds_from_matrix(&self.to_dense(), m, n))
    }
}

fn bounds_from_matrix(a: &[f64], m: usize, n: usize) -> SpectralBounds {
    let eig = gram_eigenvalues(a, m, n);
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let min_pos = eig
        .iter()
        .cloned()
        .filter(|&e| e > RANK_TOL * max)
        .fold(f64::INFINITY, f64::min);
    SpectralBounds {
        max_singular: max.sqrt(),
        min_singular: if min > RANK_TOL * max {
            min.sqrt()
        } else {
            0.0
        },
        min_positive_gram_eig: if min_pos.is_finite() { min_pos } else { 0.0 },
    }
}

/// Eigenvalues of the smaller Gram matrix (`AAᵀ` or `AᵀA`) of a row-major
/// `m × n` matrix.
fn gram_eigenvalues(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let k = m.min(n);
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let s: f64 = if m <= n {
                (0..n).map(|t| a[i * n + t] * a[j * n + t]).sum()
            } else {
                (0..m).map(|t| a[t * n + i] * a[t * n + j]).sum()
            };
            g[i * k + j] = s;
            g[j * k + i] = s;
        }
    }
    jacobi_eigenvalues(g, k)
}

/// Cyclic Jacobi rotations on a symmetric `k × k` matrix.
fn jacobi_eigenvalues(mut a: Vec<f64>, k: usize) -> Vec<f64> {
    let idx = |i: usize, j: usize| i * k + j;
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[idx(i, j)] * a[idx(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[idx(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let arp = a[idx(r, p)];
                    let arq = a[idx(r, q)];
                    a[idx(r, p)] = c * arp - s * arq;
                    a[idx(r, q)] = s * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[idx(p, r)];
                    let aqr = a[idx(q, r)];
                    a[idx(p, r)] = c * apr - s * aqr;
                    a[idx(q, r)] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..k).map(|i| a[idx(i, i)]).collect()
}
