//! Approximate block minimization by mean-subtracted gradient steps.
//!
//! Each step moves along the block gradient with its per-column mean removed,
//! floors the result back onto the `ε`-infimal simplex, and backtracks until
//! `L_c` does not increase.

use serde::{Deserialize, Serialize};

use crate::auglag::{Block, BlockState, SplitProblem};
use crate::error::{Error, Result};

/// How `step0` is turned into the first trial step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepScale {
    /// `step0` is the step itself.
    Absolute,
    /// `step0` is divided by the block's penalty curvature `c |M|²`.
    #[default]
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub inner_steps: usize,
    pub step0: f64,
    #[serde(default)]
    pub scale: StepScale,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Sufficient-decrease factor: a trial `w'` is accepted when
    /// `L_c(w') <= L_c(w) - armijo |w' - w|² / η`. Zero accepts any
    /// non-increase.
    #[serde(default)]
    pub armijo: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            inner_steps: 1,
            step0: 2.0,
            scale: StepScale::Penalty,
            backtrack: 0.5,
            max_backtracks: 40,
            armijo: 0.0,
        }
    }
}

impl InnerConfig {
    /// Fixed first trial step of `step0`.
    pub fn absolute(step0: f64) -> Self {
        InnerConfig {
            step0,
            scale: StepScale::Absolute,
            ..InnerConfig::default()
        }
    }

    /// First trial step for a block whose penalty curvature is `curvature`.
    /// Falls back to `step0` when the curvature vanishes.
    pub fn initial_step(&self, curvature: f64) -> f64 {
        match self.scale {
            StepScale::Penalty if curvature > 0.0 => self.step0 / curvature,
            _ => self.step0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::Config("inner_steps must be at least 1".into()));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(Error::Config(format!(
                "step0 = {} must be positive",
                self.step0
            )));
        }
        if !(self.armijo >= 0.0 && self.armijo.is_finite()) {
            return Err(Error::Config(format!(
                "armijo = {} must be nonnegative",
                self.armijo
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!(
                "backtrack = {} outside (0, 1)",
                self.backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockUpdate {
    pub block: Vec<f64>,
    /// Set when some step exhausted its backtracking budget.
    pub stalled: bool,
    pub accepted_steps: usize,
}

/// Runs `cfg.inner_steps` descent steps on one block with the other block
/// and the dual held fixed.
pub fn block_minimize(
    problem: &SplitProblem,
    state: &BlockState,
    block: Block,
    cfg: &InnerConfig,
) -> Result<BlockUpdate> {
    cfg.validate()?;
    problem.check_state(state)?;
    Ok(minimize_raw(
        problem, &state.p, &state.q, &state.nu, block, cfg,
    ))
}

pub(crate) fn minimize_raw(
    problem: &SplitProblem,
    p: &[f64],
    q: &[f64],
    nu: &[f64],
    block: Block,
    cfg: &InnerConfig,
) -> BlockUpdate {
    let layout = problem.layout(block);
    let eps = problem.eps_floor();
    let mut w = match block {
        Block::P => p.to_vec(),
        Block::Q => q.to_vec(),
    };
    let objective = |w: &[f64]| match block {
        Block::P => problem.eval_raw(w, q, nu),
        Block::Q => problem.eval_raw(p, w, nu),
    };
    let eta0 = cfg.initial_step(problem.penalty_curvature(block));
    let mut trial = vec![0.0; w.len()];
    let mut accepted = 0;
    let mut stalled = false;
    for _ in 0..cfg.inner_steps {
        let mut g = match block {
            Block::P => problem.grad_raw(Block::P, &w, q, nu),
            Block::Q => problem.grad_raw(Block::Q, p, &w, nu),
        };
        layout.center(&mut g);
        if g.iter().all(|&v| v == 0.0) {
            break;
        }
        let l0 = objective(&w);
        let mut eta = eta0;
        let mut ok = false;
        for _ in 0..=cfg.max_backtracks {
            for ((t, wi), gi) in trial.iter_mut().zip(&w).zip(&g) {
                *t = wi - eta * gi;
            }
            // eps is validated against the layout when the problem is built
            if layout.floor(&mut trial, eps).is_ok() {
                let l1 = objective(&trial);
                let moved: f64 = trial.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
                if l1 <= l0 - cfg.armijo * moved / eta {
                    ok = true;
                    break;
                }
            }
            eta *= cfg.backtrack;
        }
        if !ok {
            stalled = true;
            break;
        }
        std::mem::swap(&mut w, &mut trial);
        accepted += 1;
    }
    BlockUpdate {
        block: w,
        stalled,
        accepted_steps: accepted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulations::build_ib_th;
    use crate::harness::benchmark_joint;
    use approx::assert_abs_diff_eq;

    fn th_state() -> (SplitProblem, BlockState) {
        let j = benchmark_joint();
        let pr = build_ib_th(0.3, &j, 3).unwrap().with_penalty(4.0).unwrap();
        let s = BlockState {
            p: vec![0.2, 0.5, 0.3],
            q: vec![0.6, 0.2, 0.1, 0.3, 0.5, 0.1, 0.1, 0.3, 0.8],
            nu: vec![0.1, -0.3, 0.2],
        };
        (pr, s)
    }

    #[test]
    fn preserves_column_sums_and_floor() {
        let (pr, s) = th_state();
        for block in [Block::P, Block::Q] {
            let up = block_minimize(&pr, &s, block, &InnerConfig::default()).unwrap();
            assert!(pr.layout(block).max_column_error(&up.block) < 1e-12);
            assert!(up.block.iter().all(|&v| v >= pr.eps_floor()));
        }
    }

    #[test]
    fn never_increases_objective() {
        let (pr, mut s) = th_state();
        let cfg = InnerConfig::absolute(0.5);
        let mut last = pr.eval(&s).unwrap();
        for _ in 0..100 {
            s.q = block_minimize(&pr, &s, Block::Q, &cfg).unwrap().block;
            s.p = block_minimize(&pr, &s, Block::P, &cfg).unwrap().block;
            let now = pr.eval(&s).unwrap();
            assert!(now <= last + 1e-15);
            last = now;
        }
    }

    #[test]
    fn converges_on_scaled_negative_entropy_slice() {
        // With q fixed and c = 0, the p-block objective is (1-γ)·(-H(p)) plus a
        // linear term; its tangent-space minimizer is p ∝ 2^{-ν/(1-γ)}.
        let (pr, mut s) = th_state();
        let pr = pr.with_penalty(0.0).unwrap();
        let cfg = InnerConfig::absolute(1.0);
        for _ in 0..2000 {
            s.p = block_minimize(&pr, &s, Block::P, &cfg).unwrap().block;
        }
        let w: Vec<f64> = s.nu.iter().map(|v| (-v / 0.7).exp2()).collect();
        let z: f64 = w.iter().sum();
        for (pi, wi) in s.p.iter().zip(&w) {
            assert_abs_diff_eq!(*pi, wi / z, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_centered_gradient_leaves_block() {
        // At the uniform p with ν = 0 and q consistent, the centered p-gradient vanishes.
        let (pr, _) = th_state();
        let s = BlockState {
            p: vec![1.0 / 3.0; 3],
            q: vec![1.0 / 3.0; 9],
            nu: vec![0.0; 3],
        };
        let up = block_minimize(&pr, &s, Block::P, &InnerConfig::default()).unwrap();
        for (a, b) in up.block.iter().zip(&s.p) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
        assert!(!up.stalled);
    }

    #[test]
    fn rejects_bad_config() {
        let (pr, s) = th_state();
        let cfg = InnerConfig {
            backtrack: 1.5,
            ..InnerConfig::default()
        };
        assert!(block_minimize(&pr, &s, Block::P, &cfg).is_err());
    }

    #[test]
    fn initial_step_scaling() {
        let pen = InnerConfig::default();
        assert_abs_diff_eq!(pen.initial_step(8.0), 0.25, epsilon = 1e-15);
        assert_eq!(pen.initial_step(0.0), 2.0);
        assert_eq!(InnerConfig::absolute(0.01).initial_step(8.0), 0.01);
    }

    #[test]
    fn armijo_steps_decrease_by_the_requested_margin() {
        let (pr, s) = th_state();
        let cfg = InnerConfig {
            armijo: 0.25,
            ..InnerConfig::default()
        };
        let eta = cfg.initial_step(pr.penalty_curvature(Block::Q));
        let up = block_minimize(&pr, &s, Block::Q, &cfg).unwrap();
        let moved: f64 = up
            .block
            .iter()
            .zip(&s.q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(moved > 0.0);
        let after = pr
            .eval(&BlockState {
                q: up.block,
                ..s.clone()
            })
            .unwrap();
        // The accepted step is at most eta, so moved / eta bounds the margin from below.
        assert!(after <= pr.eval(&s).unwrap() - 0.25 * moved / eta);
        let bad = InnerConfig {
            armijo: -1.0,
            ..InnerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
