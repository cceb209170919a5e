//! The two relaxed splitting loops.
//!
//! Alg1 relaxes the dual, updates `p`, ascends, then updates `q`. Alg2
//! updates `p`, relaxes, updates `q` with the half-step dual, then ascends.
//! `α = 1` gives ADMM and `α = 2` the Peaceman-Rachford reflection.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::auglag::{Block, BlockState, SplitProblem};
use crate::diagnostics::info_plane_raw;
use crate::error::{Error, Result};
use crate::inner::{minimize_raw, InnerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Alg1,
    Alg2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Alg1 => "alg1",
            Variant::Alg2 => "alg2",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Variant::Alg1),
            "alg2" => Ok(Variant::Alg2),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Threshold on `|Ap - Bq|_1²`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            tol: 2e-6,
            max_iters: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    MaxIters,
    /// Every variable came back bit-identical without meeting the tolerance.
    Stalled,
    NumericalFailure,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max_iters",
            RunStatus::Stalled => "stalled",
            RunStatus::NumericalFailure => "numerical_failure",
        })
    }
}

impl FromStr for RunStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(RunStatus::Converged),
            "max_iters" => Ok(RunStatus::MaxIters),
            "stalled" => Ok(RunStatus::Stalled),
            "numerical_failure" => Ok(RunStatus::NumericalFailure),
            other => Err(Error::Parse {
                location: "status".into(),
                message: format!("unknown run status '{other}'"),
            }),
        }
    }
}

/// State of iteration `k`. Displacements compare against iteration `k - 1`
/// and are zero on the first row. Norms are Euclidean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    #[serde(rename = "L_c_bits")]
    pub l_c: f64,
    pub residual_l1sq: f64,
    pub dp2: f64,
    pub dq2: f64,
    #[serde(rename = "dBq2")]
    pub dbq2: f64,
    pub dnu2: f64,
    #[serde(rename = "I_xz_bits")]
    pub i_xz: f64,
    #[serde(rename = "I_yz_bits")]
    pub i_yz: f64,
    /// `|A Δp|`; kept in memory only.
    #[serde(skip)]
    pub dap2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
}

impl Trace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least one row")
    }

    pub fn iterations(&self) -> usize {
        self.last().k
    }

    pub fn final_lagrangian(&self) -> f64 {
        self.last().l_c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub state: BlockState,
    pub trace: Trace,
}

/// `ν - (1 - α) c r`.
pub fn dual_relaxation_step(nu: &[f64], c: f64, alpha: f64, r: &[f64]) -> Vec<f64> {
    let s = (1.0 - alpha) * c;
    nu.iter().zip(r).map(|(n, r)| n - s * r).collect()
}

/// `ν_half + c r`.
pub fn dual_ascent_step(nu_half: &[f64], c: f64, r: &[f64]) -> Vec<f64> {
    nu_half.iter().zip(r).map(|(n, r)| n + c * r).collect()
}

/// Draws every simplex column of both blocks from a flat Dirichlet and
/// floors it; the dual starts at zero.
pub fn random_state<R: Rng + ?Sized>(problem: &SplitProblem, rng: &mut R) -> Result<BlockState> {
    let gamma = Gamma::new(1.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let mut draw = |block: Block| -> Result<Vec<f64>> {
        let layout = problem.layout(block);
        let mut w = vec![0.0; layout.len()];
        for s in &layout.segments {
            for j in 0..s.n_in {
                let g: Vec<f64> = (0..s.n_out).map(|_| gamma.sample(rng)).collect();
                let tot: f64 = g.iter().sum();
                for (i, gi) in g.iter().enumerate() {
                    w[s.offset + i * s.n_in + j] = gi / tot;
                }
            }
        }
        layout.floor(&mut w, problem.eps_floor())?;
        Ok(w)
    };
    let p = draw(Block::P)?;
    let q = draw(Block::Q)?;
    Ok(BlockState {
        p,
        q,
        nu: vec![0.0; problem.dim_nu()],
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

struct Recorder<'a> {
    problem: &'a SplitProblem,
    rows: Vec<TraceRow>,
}

impl Recorder<'_> {
    fn push(&mut self, k: usize, s: &BlockState, prev: Option<&BlockState>) -> TraceRow {
        let pr = self.problem;
        let r = pr.residual_raw(&s.p, &s.q);
        let l1: f64 = r.iter().map(|v| v.abs()).sum();
        let (i_xz, i_yz) = match pr.meta() {
            Some(m) => {
                let enc = match m.encoder {
                    Block::P => &s.p,
                    Block::Q => &s.q,
                };
                info_plane_raw(enc, &m.joint, m.n_z)
            }
            None => (f64::NAN, f64::NAN),
        };
        let (dp2, dq2, dbq2, dnu2, dap2) = match prev {
            None => (0.0, 0.0, 0.0, 0.0, 0.0),
            Some(o) => {
                let dq: Vec<f64> = s.q.iter().zip(&o.q).map(|(a, b)| a - b).collect();
                let dp: Vec<f64> = s.p.iter().zip(&o.p).map(|(a, b)| a - b).collect();
                let bdq = pr.b().apply(&dq).expect("dims checked");
                let adp = pr.a().apply(&dp).expect("dims checked");
                (
                    dist(&s.p, &o.p),
                    dist(&s.q, &o.q),
                    bdq.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    dist(&s.nu, &o.nu),
                    adp.iter().map(|v| v * v).sum::<f64>().sqrt(),
                )
            }
        };
        let row = TraceRow {
            k,
            l_c: pr.eval_raw(&s.p, &s.q, &s.nu),
            residual_l1sq: l1 * l1,
            dp2,
            dq2,
            dbq2,
            dnu2,
            i_xz,
            i_yz,
            dap2: Some(dap2),
        };
        self.rows.push(row);
        row
    }
}

pub(crate) fn check_run_config(
    problem: &SplitProblem,
    variant: Variant,
    stop: &StopRule,
) -> Result<()> {
    if !(problem.c() > 0.0) {
        return Err(Error::Config(format!(
            "penalty c = {} must be > 0",
            problem.c()
        )));
    }
    let a = problem.alpha();
    match variant {
        Variant::Alg1 if !(a > 0.0 && a <= 2.0) => {
            return Err(Error::Config(format!(
                "alpha = {a} outside (0, 2] for alg1"
            )))
        }
        Variant::Alg2 if !(a > 0.0 && a < 2.0) => {
            return Err(Error::Config(format!(
                "alpha = {a} outside (0, 2) for alg2"
            )))
        }
        _ => {}
    }
    if !(stop.tol > 0.0) {
        return Err(Error::Config(format!("tol = {} must be > 0", stop.tol)));
    }
    Ok(())
}

fn check_init(problem: &SplitProblem, init: &BlockState) -> Result<()> {
    problem.check_state(init)?;
    for (block, w) in [(Block::P, &init.p), (Block::Q, &init.q)] {
        let layout = problem.layout(block);
        if layout.max_column_error(w) > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "initial {block:?} block columns do not sum to one"
            )));
        }
        let floor = problem.eps_floor() * (1.0 - 1e-9);
        if let Some(i) = w.iter().position(|&v| !(v >= floor)) {
            return Err(Error::NumericalDomain {
                index: i,
                value: w[i],
                floor: problem.eps_floor(),
            });
        }
    }
    Ok(())
}

/// Runs one variant from `init` until the residual test passes or the
/// iteration budget is spent.
pub fn run(
    problem: &SplitProblem,
    variant: Variant,
    init: BlockState,
    stop: &StopRule,
    inner: &InnerConfig,
) -> Result<RunOutput> {
    check_run_config(problem, variant, stop)?;
    inner.validate()?;
    check_init(problem, &init)?;
    let (c, alpha) = (problem.c(), problem.alpha());
    let mut rec = Recorder {
        problem,
        rows: Vec::new(),
    };
    let mut s = init;
    let mut prev: Option<BlockState> = None;
    let mut k = 0;
    let status = loop {
        let row = rec.push(k, &s, prev.as_ref());
        if !row.l_c.is_finite() {
            break RunStatus::NumericalFailure;
        }
        if k > 0 && row.residual_l1sq < stop.tol {
            break RunStatus::Converged;
        }
        if prev.as_ref() == Some(&s) {
            break RunStatus::Stalled;
        }
        if k >= stop.max_iters {
            break RunStatus::MaxIters;
        }
        let next = step(problem, variant, &s, c, alpha, inner);
        prev = Some(std::mem::replace(&mut s, next));
        k += 1;
    };
    Ok(RunOutput {
        state: s,
        trace: Trace {
            rows: rec.rows,
            status,
        },
    })
}

/// One outer iteration.
pub(crate) fn step(
    problem: &SplitProblem,
    variant: Variant,
    s: &BlockState,
    c: f64,
    alpha: f64,
    inner: &InnerConfig,
) -> BlockState {
    match variant {
        Variant::Alg1 => {
            let r = problem.residual_raw(&s.p, &s.q);
            let nu_half = dual_relaxation_step(&s.nu, c, alpha, &r);
            let p = minimize_raw(problem, &s.p, &s.q, &nu_half, Block::P, inner).block;
            let r = problem.residual_raw(&p, &s.q);
            let nu = dual_ascent_step(&nu_half, c, &r);
            let q = minimize_raw(problem, &p, &s.q, &nu, Block::Q, inner).block;
            BlockState { p, q, nu }
        }
        Variant::Alg2 => {
            let p = minimize_raw(problem, &s.p, &s.q, &s.nu, Block::P, inner).block;
            let r = problem.residual_raw(&p, &s.q);
            let nu_half = dual_relaxation_step(&s.nu, c, alpha, &r);
            let q = minimize_raw(problem, &p, &s.q, &nu_half, Block::Q, inner).block;
            let r = problem.residual_raw(&p, &q);
            let nu = dual_ascent_step(&nu_half, c, &r);
            BlockState { p, q, nu }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulations::{build_ib_mv, build_ib_th};
    use crate::harness::benchmark_joint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_one_relaxation_is_identity() {
        let nu = vec![0.3, -1.2, 7.5];
        let r = vec![1e3, -2.0, 0.5];
        assert_eq!(dual_relaxation_step(&nu, 8.0, 1.0, &r), nu);
    }

    #[test]
    fn alpha_two_reflects() {
        let nu = vec![0.3, -1.2];
        let r = vec![0.5, 0.25];
        let out = dual_relaxation_step(&nu, 4.0, 2.0, &r);
        assert!((out[0] - 2.3).abs() < 1e-15 && (out[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_maps_are_identity() {
        let nu = vec![0.3, -1.2];
        let r = vec![0.0, 0.0];
        assert_eq!(dual_relaxation_step(&nu, 4.0, 1.7, &r), nu);
        assert_eq!(dual_ascent_step(&nu, 4.0, &r), nu);
    }

    #[test]
    fn rejects_bad_alpha_and_penalty() {
        let j = benchmark_joint();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pr = build_ib_mv(0.3, &j, 3).unwrap().with_alpha(2.0).unwrap();
        let init = random_state(&pr, &mut rng).unwrap();
        let err = run(
            &pr,
            Variant::Alg2,
            init.clone(),
            &StopRule::default(),
            &InnerConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
        let pr = pr.with_alpha(1.0).unwrap().with_penalty(0.0).unwrap();
        let err = run(
            &pr,
            Variant::Alg2,
            init,
            &StopRule::default(),
            &InnerConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn random_state_is_floored_simplex() {
        let j = benchmark_joint();
        let pr = build_ib_mv(0.3, &j, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_state(&pr, &mut rng).unwrap();
        assert!(pr.layout(Block::P).max_column_error(&s.p) < 1e-12);
        assert!(pr.layout(Block::Q).max_column_error(&s.q) < 1e-12);
        assert!(s.nu.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_rows_are_contiguous() {
        let j = benchmark_joint();
        let pr = build_ib_th(0.3, &j, 3).unwrap().with_penalty(4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let init = random_state(&pr, &mut rng).unwrap();
        let stop = StopRule {
            tol: 1e-30,
            max_iters: 25,
        };
        let out = run(&pr, Variant::Alg1, init, &stop, &InnerConfig::default()).unwrap();
        assert_eq!(out.trace.status, RunStatus::MaxIters);
        assert_eq!(out.trace.rows.len(), 26);
        for (i, r) in out.trace.rows.iter().enumerate() {
            assert_eq!(r.k, i);
        }
    }
}
