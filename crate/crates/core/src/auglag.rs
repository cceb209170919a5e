//! The augmented Lagrangian
//! `L_c(p, q, ν) = F(p) + G(q) + <ν, Ap - Bq> + (c/2)|Ap - Bq|²`
//! with `F` and `G` written as weighted sums of entropy terms.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::formulations::Formulation;
use crate::ops::StructuredOperator;
use crate::prob::{JointPmf, LOG2_E};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EntropyKind {
    /// `H(Z) = -Σ u log2 u`.
    Marginal,
    /// `H(Z|V) = -Σ_v prior(v) Σ_z u(z|v) log2 u(z|v)` on a z-major view.
    Conditional { prior: Vec<f64> },
}

/// `weight · H(view)`, where the view is a slice of the block, optionally
/// pushed through a linear map first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTerm {
    pub weight: f64,
    pub kind: EntropyKind,
    pub slice: Range<usize>,
    pub transform: Option<StructuredOperator>,
}

impl EntropyTerm {
    pub fn marginal(weight: f64, slice: Range<usize>) -> Self {
        EntropyTerm {
            weight,
            kind: EntropyKind::Marginal,
            slice,
            transform: None,
        }
    }

    pub fn conditional(weight: f64, prior: Vec<f64>, slice: Range<usize>) -> Self {
        EntropyTerm {
            weight,
            kind: EntropyKind::Conditional { prior },
            slice,
            transform: None,
        }
    }

    /// Evaluate the entropy on `op · block[slice]` instead of the raw slice.
    pub fn through(mut self, op: StructuredOperator) -> Self {
        self.transform = Some(op);
        self
    }

    fn view_len(&self) -> usize {
        match &self.transform {
            Some(op) => op.output_dim(),
            None => self.slice.len(),
        }
    }

    fn validate(&self, block_len: usize) -> Result<()> {
        if self.slice.end > block_len || self.slice.start >= self.slice.end {
            return Err(Error::Config(format!(
                "term slice {:?} outside block of length {block_len}",
                self.slice
            )));
        }
        if let Some(op) = &self.transform {
            check_len(op.input_dim(), self.slice.len())?;
        }
        if let EntropyKind::Conditional { prior } = &self.kind {
            if prior.is_empty() || !self.view_len().is_multiple_of(prior.len()) {
                return Err(Error::Config(format!(
                    "view of length {} is not a multiple of prior length {}",
                    self.view_len(),
                    prior.len()
                )));
            }
        }
        Ok(())
    }

    fn view(&self, block: &[f64]) -> Vec<f64> {
        let raw = &block[self.slice.clone()];
        match &self.transform {
            Some(op) => {
                let mut out = vec![0.0; op.output_dim()];
                op.apply_into(raw, &mut out);
                out
            }
            None => raw.to_vec(),
        }
    }

    #[inline]
    fn mass(&self, t: usize) -> f64 {
        match &self.kind {
            EntropyKind::Marginal => 1.0,
            EntropyKind::Conditional { prior } => prior[t % prior.len()],
        }
    }

    pub fn value(&self, block: &[f64]) -> f64 {
        let u = self.view(block);
        let s: f64 = u
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(t, &v)| self.mass(t) * v * v.log2())
            .sum();
        -self.weight * s
    }

    /// Adds the gradient of this term with respect to the block into `out`.
    pub fn add_gradient(&self, block: &[f64], out: &mut [f64]) {
        let u = self.view(block);
        let g: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(t, &v)| -self.weight * self.mass(t) * (v.log2() + LOG2_E))
            .collect();
        let dst = &mut out[self.slice.clone()];
        match &self.transform {
            Some(op) => op.apply_transpose_add(&g, dst),
            None => dst.iter_mut().zip(&g).for_each(|(d, v)| *d += v),
        }
    }
}

/// One group of simplex columns inside a block: `n_out × n_in` entries from
/// `offset`, z-major, each of the `n_in` columns summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub offset: usize,
    pub n_out: usize,
    pub n_in: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.n_out * self.n_in
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Simplex structure of a block variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub segments: Vec<Segment>,
}

impl BlockLayout {
    pub fn single(n_out: usize, n_in: usize) -> Self {
        BlockLayout {
            segments: vec![Segment {
                offset: 0,
                n_out,
                n_in,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let mut next = 0;
        for s in &self.segments {
            if s.offset != next || s.n_out == 0 || s.n_in == 0 {
                return Err(Error::Config(
                    "block layout segments must tile the block".into(),
                ));
            }
            next += s.len();
        }
        Ok(())
    }

    /// Subtracts the per-column mean so a step along the result keeps every
    /// column sum fixed.
    pub fn center(&self, g: &mut [f64]) {
        for s in &self.segments {
            for j in 0..s.n_in {
                let idx = |i: usize| s.offset + i * s.n_in + j;
                let mean = (0..s.n_out).map(|i| g[idx(i)]).sum::<f64>() / s.n_out as f64;
                for i in 0..s.n_out {
                    g[idx(i)] -= mean;
                }
            }
        }
    }

    pub fn floor(&self, w: &mut [f64], eps: f64) -> Result<()> {
        for s in &self.segments {
            crate::prob::floor_columns(&mut w[s.range()], s.n_out, s.n_in, eps)?;
        }
        Ok(())
    }

    /// Largest deviation of any column sum from one.
    pub fn max_column_error(&self, w: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.segments {
            for j in 0..s.n_in {
                let sum: f64 = (0..s.n_out).map(|i| w[s.offset + i * s.n_in + j]).sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    P,
    Q,
}

/// What a problem encodes, for reporting information-plane coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemMeta {
    pub formulation: Formulation,
    pub tradeoff: f64,
    pub n_z: usize,
    /// Block that holds the encoder `p(z|x)` (the whole block).
    pub encoder: Block,
    pub joint: JointPmf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitProblem {
    f_terms: Vec<EntropyTerm>,
    g_terms: Vec<EntropyTerm>,
    a: StructuredOperator,
    b: StructuredOperator,
    p_layout: BlockLayout,
    q_layout: BlockLayout,
    c: f64,
    alpha: f64,
    eps_floor: f64,
    meta: Option<ProblemMeta>,
    a_norm_sq: f64,
    b_norm_sq: f64,
}

/// Default floor kept on every iterate mass.
pub const DEFAULT_EPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub r: Vec<f64>,
    pub l1sq: f64,
}

fn check_partition(terms: &[EntropyTerm], len: usize, which: &str) -> Result<()> {
    let mut ranges: Vec<Range<usize>> = terms.iter().map(|t| t.slice.clone()).collect();
    ranges.sort_by_key(|r| (r.start, r.end));
    ranges.dedup();
    let mut next = 0;
    for r in &ranges {
        if r.start != next {
            return Err(Error::Config(format!(
                "{which} term slices overlap or leave a gap at {next}"
            )));
        }
        next = r.end;
    }
    if next != len {
        return Err(Error::Config(format!(
            "{which} term slices cover {next} of {len} entries"
        )));
    }
    Ok(())
}

impl SplitProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f_terms: Vec<EntropyTerm>,
        g_terms: Vec<EntropyTerm>,
        a: StructuredOperator,
        b: StructuredOperator,
        p_layout: BlockLayout,
        q_layout: BlockLayout,
        c: f64,
        alpha: f64,
    ) -> Result<Self> {
        p_layout.validate()?;
        q_layout.validate()?;
        check_len(p_layout.len(), a.input_dim())?;
        check_len(q_layout.len(), b.input_dim())?;
        check_len(a.output_dim(), b.output_dim())?;
        for t in &f_terms {
            t.validate(p_layout.len())?;
        }
        for t in &g_terms {
            t.validate(q_layout.len())?;
        }
        check_partition(&f_terms, p_layout.len(), "F")?;
        check_partition(&g_terms, q_layout.len(), "G")?;
        let problem = SplitProblem {
            f_terms,
            g_terms,
            a_norm_sq: a.norm_sq(),
            b_norm_sq: b.norm_sq(),
            a,
            b,
            p_layout,
            q_layout,
            c: 1.0,
            alpha: 1.0,
            eps_floor: DEFAULT_EPS_FLOOR,
            meta: None,
        };
        problem.with_penalty(c)?.with_alpha(alpha)
    }

    /// Curvature `c |M|²` of the penalty term in one block, `M` being the
    /// block's constraint operator.
    pub fn penalty_curvature(&self, block: Block) -> f64 {
        self.c
            * match block {
                Block::P => self.a_norm_sq,
                Block::Q => self.b_norm_sq,
            }
    }

    pub fn with_penalty(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Config(format!(
                "penalty c = {c} must be finite and >= 0"
            )));
        }
        self.c = c;
        Ok(self)
    }

    /// Relaxation in `(0, 2]`. Each algorithm narrows this further at run time.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::Config(format!("alpha = {alpha} outside (0, 2]")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_eps_floor(mut self, eps: f64) -> Result<Self> {
        let widest = self
            .p_layout
            .segments
            .iter()
            .chain(&self.q_layout.segments)
            .map(|s| s.n_out)
            .max()
            .unwrap_or(1);
        if !(eps > 0.0 && eps < 1.0 / widest as f64) {
            return Err(Error::InfeasibleFloor {
                eps,
                n_out: widest,
                limit: 1.0 / widest as f64,
            });
        }
        self.eps_floor = eps;
        Ok(self)
    }

    pub(crate) fn with_meta(mut self, meta: ProblemMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eps_floor(&self) -> f64 {
        self.eps_floor
    }

    pub fn a(&self) -> &StructuredOperator {
        &self.a
    }

    pub fn b(&self) -> &StructuredOperator {
        &self.b
    }

    pub fn f_terms(&self) -> &[EntropyTerm] {
        &self.f_terms
    }

    pub fn g_terms(&self) -> &[EntropyTerm] {
        &self.g_terms
    }

    pub fn layout(&self, block: Block) -> &BlockLayout {
        match block {
            Block::P => &self.p_layout,
            Block::Q => &self.q_layout,
        }
    }

    pub fn meta(&self) -> Option<&ProblemMeta> {
        self.meta.as_ref()
    }

    pub fn dim_p(&self) -> usize {
        self.p_layout.len()
    }

    pub fn dim_q(&self) -> usize {
        self.q_layout.len()
    }

    pub fn dim_nu(&self) -> usize {
        self.a.output_dim()
    }

    pub fn check_state(&self, s: &BlockState) -> Result<()> {
        check_len(self.dim_p(), s.p.len())?;
        check_len(self.dim_q(), s.q.len())?;
        check_len(self.dim_nu(), s.nu.len())
    }

    pub fn f_value(&self, p: &[f64]) -> f64 {
        self.f_terms.iter().map(|t| t.value(p)).sum()
    }

    pub fn g_value(&self, q: &[f64]) -> f64 {
        self.g_terms.iter().map(|t| t.value(q)).sum()
    }

    pub(crate) fn residual_raw(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let m = self.dim_nu();
        let mut ap = vec![0.0; m];
        let mut bq = vec![0.0; m];
        self.a.apply_into(p, &mut ap);
        self.b.apply_into(q, &mut bq);
        ap.iter_mut().zip(&bq).for_each(|(x, y)| *x -= y);
        ap
    }

    /// `L_c` without dimension checks; `G(q)` may be supplied when only `p`
    /// moves, and vice versa.
    pub(crate) fn eval_raw(&self, p: &[f64], q: &[f64], nu: &[f64]) -> f64 {
        let r = self.residual_raw(p, q);
        let lin: f64 = nu.iter().zip(&r).map(|(a, b)| a * b).sum();
        let sq: f64 = r.iter().map(|v| v * v).sum();
        self.f_value(p) + self.g_value(q) + lin + 0.5 * self.c * sq
    }

    pub fn eval(&self, s: &BlockState) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.eval_raw(&s.p, &s.q, &s.nu))
    }

    fn check_floor(&self, w: &[f64], base: usize) -> Result<()> {
        // Rounding in the floor's rescale can land a hair under eps.
        let floor = self.eps_floor * (1.0 - 1e-9);
        match w.iter().position(|&v| !(v >= floor)) {
            Some(i) => Err(Error::NumericalDomain {
                index: base + i,
                value: w[i],
                floor: self.eps_floor,
            }),
            None => Ok(()),
        }
    }

    pub(crate) fn grad_raw(&self, block: Block, p: &[f64], q: &[f64], nu: &[f64]) -> Vec<f64> {
        let r = self.residual_raw(p, q);
        let y: Vec<f64> = nu.iter().zip(&r).map(|(n, r)| n + self.c * r).collect();
        match block {
            Block::P => {
                let mut g = vec![0.0; p.len()];
                self.f_terms.iter().for_each(|t| t.add_gradient(p, &mut g));
                self.a.apply_transpose_add(&y, &mut g);
                g
            }
            Block::Q => {
                let mut g = vec![0.0; q.len()];
                self.g_terms.iter().for_each(|t| t.add_gradient(q, &mut g));
                let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                self.b.apply_transpose_add(&neg, &mut g);
                g
            }
        }
    }

    /// `∇F(p) + Aᵀ(ν + c(Ap - Bq))`.
    pub fn grad_p(&self, s: &BlockState) -> Result<Vec<f64>> {
        self.check_state(s)?;
        self.check_floor(&s.p, 0)?;
        Ok(self.grad_raw(Block::P, &s.p, &s.q, &s.nu))
    }

    /// `∇G(q) - Bᵀ(ν + c(Ap - Bq))`.
    pub fn grad_q(&self, s: &BlockState) -> Result<Vec<f64>> {
        self.check_state(s)?;
        self.check_floor(&s.q, 0)?;
        Ok(self.grad_raw(Block::Q, &s.p, &s.q, &s.nu))
    }

    pub fn primal_residual(&self, s: &BlockState) -> Result<Residual> {
        self.check_state(s)?;
        let r = self.residual_raw(&s.p, &s.q);
        let l1: f64 = r.iter().map(|v| v.abs()).sum();
        Ok(Residual { r, l1sq: l1 * l1 })
    }
}
