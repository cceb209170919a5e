//! Discrete probability primitives.
//!
//! Every information measure here is reported in bits. Conditional masses use
//! the z-major layout: entry `(i, j)` of a channel with `n_in` inputs lives at
//! index `i * n_in + j` and holds `p(out_i | in_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Absolute tolerance on column sums. Inputs within it are renormalized
/// silently, inputs beyond it are rejected.
pub const NORM_TOL: f64 = 1e-12;

/// `log2(e)`, the factor carried by every base-2 entropy gradient.
pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// `x log2 x` with the convention `0 log 0 = 0`.
#[inline]
pub fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

fn validate_column(col: impl Iterator<Item = f64>, what: &str) -> Result<f64> {
    let mut sum = 0.0;
    for (i, v) in col.enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "{what}: entry {i} is {v}"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidDistribution(format!("{what}: sums to {sum}")));
    }
    Ok(sum)
}

/// A probability mass vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        let sum = validate_column(values.iter().copied(), "probability vector")?;
        values.iter_mut().for_each(|v| *v /= sum);
        Ok(ProbVector(values))
    }

    pub fn uniform(n: usize) -> Self {
        ProbVector(vec![1.0 / n as f64; n])
    }

    /// Point mass on `index`.
    pub fn delta(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        ProbVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Clamp every mass to at least `eps` and renormalize.
    pub fn floored(&self, eps: f64) -> Result<Self> {
        let mut v = self.0.clone();
        floor_columns(&mut v, self.len(), 1, eps)?;
        Ok(ProbVector(v))
    }
}

/// A channel `p(out | in)` stored z-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondProbVector {
    values: Vec<f64>,
    n_out: usize,
    n_in: usize,
}

impl CondProbVector {
    pub fn new(mut values: Vec<f64>, n_out: usize, n_in: usize) -> Result<Self> {
        if n_out == 0 || n_in == 0 {
            return Err(Error::InvalidDistribution("empty channel".into()));
        }
        check_len(n_out * n_in, values.len())?;
        for j in 0..n_in {
            let sum = validate_column(
                (0..n_out).map(|i| values[i * n_in + j]),
                &format!("channel column {j}"),
            )?;
            for i in 0..n_out {
                values[i * n_in + j] /= sum;
            }
        }
        Ok(CondProbVector {
            values,
            n_out,
            n_in,
        })
    }

    /// Builds a channel from its columns, `columns[j][i] = p(out_i | in_j)`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n_in = columns.len();
        let n_out = columns.first().map_or(0, Vec::len);
        let mut values = vec![0.0; n_out * n_in];
        for (j, col) in columns.iter().enumerate() {
            check_len(n_out, col.len())?;
            for (i, v) in col.iter().enumerate() {
                values[i * n_in + j] = *v;
            }
        }
        Self::new(values, n_out, n_in)
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        CondProbVector {
            values,
            n_out: n,
            n_in: n,
        }
    }

    /// Every column equal to `column`.
    pub fn constant(column: &ProbVector, n_in: usize) -> Self {
        let n_out = column.len();
        let mut values = vec![0.0; n_out * n_in];
        for i in 0..n_out {
            for j in 0..n_in {
                values[i * n_in + j] = column.as_slice()[i];
            }
        }
        CondProbVector {
            values,
            n_out,
            n_in,
        }
    }

    pub(crate) fn from_raw(values: Vec<f64>, n_out: usize, n_in: usize) -> Self {
        debug_assert_eq!(values.len(), n_out * n_in);
        CondProbVector {
            values,
            n_out,
            n_in,
        }
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, out: usize, input: usize) -> f64 {
        self.values[out * self.n_in + input]
    }

    pub fn column(&self, input: usize) -> Vec<f64> {
        (0..self.n_out).map(|i| self.get(i, input)).collect()
    }

    /// Output marginal `Σ_j p(out | in_j) prior(j)`.
    pub fn marginal(&self, prior: &ProbVector) -> Result<ProbVector> {
        check_len(self.n_in, prior.len())?;
        Ok(ProbVector(marginalize(
            &self.values,
            self.n_out,
            prior.as_slice(),
        )))
    }

    pub fn floored(&self, eps: f64) -> Result<Self> {
        let mut v = self.values.clone();
        floor_columns(&mut v, self.n_out, self.n_in, eps)?;
        Ok(CondProbVector::from_raw(v, self.n_out, self.n_in))
    }
}

pub(crate) fn marginalize(values: &[f64], n_out: usize, prior: &[f64]) -> Vec<f64> {
    let n_in = prior.len();
    (0..n_out)
        .map(|i| {
            values[i * n_in..(i + 1) * n_in]
                .iter()
                .zip(prior)
                .map(|(v, p)| v * p)
                .sum()
        })
        .collect()
}

pub fn entropy_bits(p: &ProbVector) -> f64 {
    -p.as_slice().iter().map(|&v| xlog2x(v)).sum::<f64>()
}

pub fn conditional_entropy_bits(cond: &CondProbVector, prior: &ProbVector) -> Result<f64> {
    check_len(cond.n_in(), prior.len())?;
    Ok(raw_conditional_entropy(
        cond.as_slice(),
        cond.n_out(),
        prior.as_slice(),
    ))
}

pub(crate) fn raw_conditional_entropy(values: &[f64], n_out: usize, prior: &[f64]) -> f64 {
    let n_in = prior.len();
    let mut h = 0.0;
    for i in 0..n_out {
        for (j, &pj) in prior.iter().enumerate() {
            h -= pj * xlog2x(values[i * n_in + j]);
        }
    }
    h
}

/// `H(out) - H(out | in)` for the joint induced by `prior` and `cond`.
///
/// Evaluated as `Σ prior(j) p(i|j) log2(p(i|j) / p(i))`, which is
/// nonnegative term by term up to rounding; the result is clamped at zero.
pub fn mutual_information_bits(cond: &CondProbVector, prior: &ProbVector) -> Result<f64> {
    check_len(cond.n_in(), prior.len())?;
    Ok(raw_mutual_information(
        cond.as_slice(),
        cond.n_out(),
        prior.as_slice(),
    ))
}

pub(crate) fn raw_mutual_information(values: &[f64], n_out: usize, prior: &[f64]) -> f64 {
    let n_in = prior.len();
    let marg = marginalize(values, n_out, prior);
    let mut mi = 0.0;
    for (i, &m) in marg.iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        for (j, &pj) in prior.iter().enumerate() {
            let c = values[i * n_in + j];
            if c > 0.0 && pj > 0.0 {
                mi += pj * c * (c / m).log2();
            }
        }
    }
    mi.max(0.0)
}

/// A known joint distribution `p(x, y)` with its derived marginals and
/// reverse channels.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    table: Vec<f64>,
    n_x: usize,
    n_y: usize,
    p_x: ProbVector,
    p_y: ProbVector,
    x_given_y: CondProbVector,
    y_given_x: CondProbVector,
}

/// Normalizes a nonnegative `N_x × N_y` table into a [`JointPmf`].
pub fn build_joint(table: &[Vec<f64>]) -> Result<JointPmf> {
    let n_x = table.len();
    let n_y = table.first().map_or(0, Vec::len);
    if n_x == 0 || n_y == 0 {
        return Err(Error::InvalidInput("empty joint table".into()));
    }
    let mut flat = Vec::with_capacity(n_x * n_y);
    for (x, row) in table.iter().enumerate() {
        if row.len() != n_y {
            return Err(Error::InvalidInput(format!(
                "row {x} has {} entries, expected {n_y}",
                row.len()
            )));
        }
        for (y, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!("entry ({x}, {y}) is {v}")));
            }
            flat.push(v);
        }
    }
    JointPmf::from_flat(flat, n_x, n_y)
}

impl JointPmf {
    /// Row-major `N_x × N_y` table.
    pub fn from_flat(mut flat: Vec<f64>, n_x: usize, n_y: usize) -> Result<Self> {
        check_len(n_x * n_y, flat.len())?;
        if let Some((i, v)) = flat
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "entry ({}, {}) is {v}",
                i / n_y,
                i % n_y
            )));
        }
        let total: f64 = flat.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("joint table sums to zero".into()));
        }
        flat.iter_mut().for_each(|v| *v /= total);

        let p_x: Vec<f64> = (0..n_x)
            .map(|x| flat[x * n_y..(x + 1) * n_y].iter().sum())
            .collect();
        let p_y: Vec<f64> = (0..n_y)
            .map(|y| (0..n_x).map(|x| flat[x * n_y + y]).sum())
            .collect();

        // x_given_y: n_out = N_x, n_in = N_y; zero-mass conditioning
        // values get a uniform column.
        let mut xy = vec![0.0; n_x * n_y];
        for y in 0..n_y {
            for x in 0..n_x {
                xy[x * n_y + y] = if p_y[y] > 0.0 {
                    flat[x * n_y + y] / p_y[y]
                } else {
                    1.0 / n_x as f64
                };
            }
        }
        let mut yx = vec![0.0; n_y * n_x];
        for x in 0..n_x {
            for y in 0..n_y {
                yx[y * n_x + x] = if p_x[x] > 0.0 {
                    flat[x * n_y + y] / p_x[x]
                } else {
                    1.0 / n_y as f64
                };
            }
        }
        Ok(JointPmf {
            table: flat,
            n_x,
            n_y,
            p_x: ProbVector(p_x),
            p_y: ProbVector(p_y),
            x_given_y: CondProbVector::from_raw(xy, n_x, n_y),
            y_given_x: CondProbVector::from_raw(yx, n_y, n_x),
        })
    }

    /// Joint from a prior over `x` and the channel `p(y | x)`.
    pub fn from_channel(p_x: &ProbVector, y_given_x: &CondProbVector) -> Result<Self> {
        check_len(y_given_x.n_in(), p_x.len())?;
        let (n_x, n_y) = (p_x.len(), y_given_x.n_out());
        let mut flat = vec![0.0; n_x * n_y];
        for x in 0..n_x {
            for y in 0..n_y {
                flat[x * n_y + y] = p_x.as_slice()[x] * y_given_x.get(y, x);
            }
        }
        Self::from_flat(flat, n_x, n_y)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.table[x * self.n_y + y]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.table.chunks(self.n_y).map(<[f64]>::to_vec).collect()
    }

    pub fn p_x(&self) -> &ProbVector {
        &self.p_x
    }

    pub fn p_y(&self) -> &ProbVector {
        &self.p_y
    }

    /// `W_{x|y}`: `p(x | y)` with `x` as the output index.
    pub fn x_given_y(&self) -> &CondProbVector {
        &self.x_given_y
    }

    /// `W_{y|x}`: `p(y | x)` with `y` as the output index.
    pub fn y_given_x(&self) -> &CondProbVector {
        &self.y_given_x
    }

    pub fn mutual_information_bits(&self) -> f64 {
        raw_mutual_information(self.y_given_x.as_slice(), self.n_y, self.p_x.as_slice())
    }
}

/// Clamps every column of a z-major block to at least `eps` and renormalizes
/// it to sum to one.
///
/// Entries pushed to the floor stay pinned at `eps`; the remaining mass is
/// rescaled to `1 - k * eps`, repeating while rescaling drops new entries
/// below the floor. A column that is already `eps`-infimal and normalized is
/// left untouched.
pub fn floor_columns(values: &mut [f64], n_out: usize, n_in: usize, eps: f64) -> Result<()> {
    check_len(n_out * n_in, values.len())?;
    let limit = 1.0 / n_out as f64;
    if !(eps > 0.0) || eps >= limit {
        return Err(Error::InfeasibleFloor { eps, n_out, limit });
    }
    let mut pinned = vec![false; n_out];
    for j in 0..n_in {
        pinned.iter_mut().for_each(|p| *p = false);
        let idx = |i: usize| i * n_in + j;
        let mut n_pinned = 0usize;
        loop {
            for i in 0..n_out {
                if !pinned[i] && !(values[idx(i)] >= eps) {
                    pinned[i] = true;
                    n_pinned += 1;
                }
            }
            let free_sum: f64 = (0..n_out)
                .filter(|&i| !pinned[i])
                .map(|i| values[idx(i)])
                .sum();
            if n_pinned == 0 && (free_sum - 1.0).abs() <= 4.0 * f64::EPSILON {
                break;
            }
            if n_pinned == n_out || !(free_sum > 0.0) {
                for i in 0..n_out {
                    values[idx(i)] = limit;
                }
                break;
            }
            let scale = (1.0 - n_pinned as f64 * eps) / free_sum;
            for i in 0..n_out {
                values[idx(i)] = if pinned[i] {
                    eps
                } else {
                    values[idx(i)] * scale
                };
            }
            if (0..n_out).all(|i| pinned[i] || values[idx(i)] >= eps) {
                break;
            }
        }
    }
    Ok(())
}
