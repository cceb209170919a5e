//! Problem builders for the three splittings and their advisory penalty
//! thresholds.
//!
//! | form  | p          | q               | A              | B        | solver |
//! |-------|------------|-----------------|----------------|----------|--------|
//! | IB-TH | p_z        | p_{z\|x}        | I              | Q_x      | Alg1   |
//! | IB-MV | p_{z\|x}   | [p_z; p_{z\|y}] | [Q_x; Q_{x\|y}]| I        | Alg2   |
//! | PF    | p_{z\|y}   | p_{z\|x}        | I              | Q_{x\|y} | Alg2   |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auglag::{Block, BlockLayout, EntropyTerm, ProblemMeta, SplitProblem};
use crate::drs::Variant;
use crate::error::{Error, Result};
use crate::ops::StructuredOperator;
use crate::prob::JointPmf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    IbTh,
    IbMv,
    Pf,
}

impl Formulation {
    /// The algorithm each splitting is analyzed under.
    pub fn default_variant(self) -> Variant {
        match self {
            Formulation::IbTh => Variant::Alg1,
            Formulation::IbMv | Formulation::Pf => Variant::Alg2,
        }
    }

    pub fn build(self, tradeoff: f64, joint: &JointPmf, n_z: usize) -> Result<SplitProblem> {
        match self {
            Formulation::IbTh => build_ib_th(tradeoff, joint, n_z),
            Formulation::IbMv => build_ib_mv(tradeoff, joint, n_z),
            Formulation::Pf => build_pf(tradeoff, joint, n_z),
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::IbTh => "ib-th",
            Formulation::IbMv => "ib-mv",
            Formulation::Pf => "pf",
        })
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ib-th" => Ok(Formulation::IbTh),
            "ib-mv" => Ok(Formulation::IbMv),
            "pf" => Ok(Formulation::Pf),
            other => Err(Error::Config(format!("unknown formulation '{other}'"))),
        }
    }
}

/// `I_{N_z} ⊗ p_xᵀ`.
pub fn q_x(joint: &JointPmf, n_z: usize) -> StructuredOperator {
    StructuredOperator::kron_row(n_z, joint.p_x().as_slice().to_vec())
}

/// `I_{N_z} ⊗ W_{x|y}ᵀ`, mapping `p(z|x)` to `p(z|y)`.
pub fn q_x_given_y(joint: &JointPmf, n_z: usize) -> StructuredOperator {
    StructuredOperator::KronMat {
        n_z,
        w: joint.x_given_y().as_slice().to_vec(),
        rows: joint.n_x(),
        cols: joint.n_y(),
    }
}

fn check_common(name: &str, tradeoff: f64, n_z: usize) -> Result<()> {
    if n_z < 2 {
        return Err(Error::Config(format!("N_z = {n_z}; need at least 2")));
    }
    if !(tradeoff.is_finite() && tradeoff > 0.0) {
        return Err(Error::Config(format!(
            "{name} = {tradeoff} must be positive"
        )));
    }
    Ok(())
}

fn warn_trivial_ib(gamma: f64) {
    if gamma >= 1.0 {
        log::warn!("gamma = {gamma} >= 1: IB minimizers are trivial");
    }
}

pub fn build_ib_th(gamma: f64, joint: &JointPmf, n_z: usize) -> Result<SplitProblem> {
    check_common("gamma", gamma, n_z)?;
    warn_trivial_ib(gamma);
    let (nx, px, py) = (joint.n_x(), joint.p_x().as_slice(), joint.p_y().as_slice());
    let enc = 0..n_z * nx;
    let problem = SplitProblem::new(
        vec![EntropyTerm::marginal(gamma - 1.0, 0..n_z)],
        vec![
            EntropyTerm::conditional(-gamma, px.to_vec(), enc.clone()),
            EntropyTerm::conditional(1.0, py.to_vec(), enc).through(q_x_given_y(joint, n_z)),
        ],
        StructuredOperator::Identity(n_z),
        q_x(joint, n_z),
        BlockLayout::single(n_z, 1),
        BlockLayout::single(n_z, nx),
        1.0,
        1.0,
    )?;
    Ok(problem.with_meta(ProblemMeta {
        formulation: Formulation::IbTh,
        tradeoff: gamma,
        n_z,
        encoder: Block::Q,
        joint: joint.clone(),
    }))
}

pub fn build_ib_mv(gamma: f64, joint: &JointPmf, n_z: usize) -> Result<SplitProblem> {
    check_common("gamma", gamma, n_z)?;
    warn_trivial_ib(gamma);
    let (nx, ny) = (joint.n_x(), joint.n_y());
    let (px, py) = (joint.p_x().as_slice(), joint.p_y().as_slice());
    let nq = n_z * (ny + 1);
    let q_layout = BlockLayout {
        segments: vec![
            crate::auglag::Segment {
                offset: 0,
                n_out: n_z,
                n_in: 1,
            },
            crate::auglag::Segment {
                offset: n_z,
                n_out: n_z,
                n_in: ny,
            },
        ],
    };
    let problem = SplitProblem::new(
        vec![EntropyTerm::conditional(-gamma, px.to_vec(), 0..n_z * nx)],
        vec![
            EntropyTerm::marginal(gamma - 1.0, 0..n_z),
            EntropyTerm::conditional(1.0, py.to_vec(), n_z..nq),
        ],
        StructuredOperator::vstack(vec![q_x(joint, n_z), q_x_given_y(joint, n_z)])?,
        StructuredOperator::Identity(nq),
        BlockLayout::single(n_z, nx),
        q_layout,
        1.0,
        1.0,
    )?;
    Ok(problem.with_meta(ProblemMeta {
        formulation: Formulation::IbMv,
        tradeoff: gamma,
        n_z,
        encoder: Block::P,
        joint: joint.clone(),
    }))
}

pub fn build_pf(beta: f64, joint: &JointPmf, n_z: usize) -> Result<SplitProblem> {
    check_common("beta", beta, n_z)?;
    if beta <= 1.0 {
        log::warn!("beta = {beta} <= 1: privacy funnel solutions are typically trivial");
    }
    let (nx, ny) = (joint.n_x(), joint.n_y());
    let (px, py) = (joint.p_x().as_slice(), joint.p_y().as_slice());
    let enc = 0..n_z * nx;
    let problem = SplitProblem::new(
        vec![EntropyTerm::conditional(-beta, py.to_vec(), 0..n_z * ny)],
        vec![
            EntropyTerm::marginal(beta - 1.0, enc.clone()).through(q_x(joint, n_z)),
            EntropyTerm::conditional(1.0, px.to_vec(), enc),
        ],
        StructuredOperator::Identity(n_z * ny),
        q_x_given_y(joint, n_z),
        BlockLayout::single(n_z, ny),
        BlockLayout::single(n_z, nx),
        1.0,
        1.0,
    )?;
    Ok(problem.with_meta(ProblemMeta {
        formulation: Formulation::Pf,
        tradeoff: beta,
        n_z,
        encoder: Block::Q,
        joint: joint.clone(),
    }))
}

/// Infimality floors used by the threshold calculators. These are modeling
/// parameters, unrelated to the iterate floor kept by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    pub eps_z: f64,
    pub eps_zx: f64,
    pub eps_zy: f64,
}

impl Default for SmoothnessProfile {
    fn default() -> Self {
        SmoothnessProfile {
            eps_z: 0.01,
            eps_zx: 0.01,
            eps_zy: 0.01,
        }
    }
}

impl SmoothnessProfile {
    fn validate(&self) -> Result<()> {
        for (name, e) in [
            ("eps_z", self.eps_z),
            ("eps_zx", self.eps_zx),
            ("eps_zy", self.eps_zy),
        ] {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("{name} = {e} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Smoothness and convexity constants of one formulation under a profile.
/// Entries that the formulation's analysis does not use are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub l_p: f64,
    pub l_q: f64,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub omega_g: f64,
    pub m_q: f64,
    /// Smallest and largest singular value of `A`.
    pub mu_a: f64,
    pub lambda_a: f64,
    pub mu_b: f64,
    pub lambda_b: f64,
    pub mu_bbt: f64,
    pub zeta_y: Vec<f64>,
    pub zeta: f64,
}

/// `ζ(y) = max_x p(y|x) - min_x p(y|x)`.
pub fn channel_spread(joint: &JointPmf) -> Vec<f64> {
    let w = joint.y_given_x();
    (0..joint.n_y())
        .map(|y| {
            let col: Vec<f64> = (0..joint.n_x()).map(|x| w.get(y, x)).collect();
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect()
}

/// `ζ = Σ_y ζ(y)² / p(y)`.
pub fn spread_coefficient(joint: &JointPmf) -> f64 {
    channel_spread(joint)
        .iter()
        .zip(joint.p_y().as_slice())
        .filter(|(_, &py)| py > 0.0)
        .map(|(z, py)| z * z / py)
        .sum()
}

pub fn derived_constants(
    formulation: Formulation,
    tradeoff: f64,
    profile: &SmoothnessProfile,
    joint: &JointPmf,
    n_z: usize,
) -> Result<DerivedConstants> {
    profile.validate()?;
    let problem = formulation.build(tradeoff, joint, n_z)?;
    let sa = problem.a().spectral_bounds()?;
    let sb = problem.b().spectral_bounds()?;
    let (nz, nx, ny) = (n_z as f64, joint.n_x() as f64, joint.n_y() as f64);
    let zeta_y = channel_spread(joint);
    let zeta = spread_coefficient(joint);
    let mut k = DerivedConstants {
        l_p: 0.0,
        l_q: 0.0,
        sigma_f: 0.0,
        sigma_g: 0.0,
        omega_g: 0.0,
        m_q: 0.0,
        mu_a: sa.min_singular,
        lambda_a: sa.max_singular,
        mu_b: sb.min_singular,
        lambda_b: sb.max_singular,
        mu_bbt: sb.min_positive_gram_eig,
        zeta_y,
        zeta,
    };
    let p = profile;
    match formulation {
        Formulation::IbTh => {
            k.l_p = 1.0 / p.eps_z;
            k.l_q = 1.0 / p.eps_zx;
            k.sigma_f = (1.0 - tradeoff).max(0.0);
            // A negative deficit means G is already convex along B.
            k.omega_g = (2.0 * nz * nx * zeta / p.eps_z - tradeoff).max(0.0);
        }
        Formulation::IbMv => {
            k.l_p = 1.0 / p.eps_zx;
            k.l_q = 1.0 / p.eps_z.min(p.eps_zy);
            k.sigma_g = 2.0 * nz * ny / p.eps_zy;
        }
        Formulation::Pf => {
            k.l_p = 1.0 / p.eps_zy;
            k.l_q = 1.0 / p.eps_zx;
            k.sigma_g = 2.0 * nz * ((tradeoff - 1.0).abs() + nx) / p.eps_zx;
            k.m_q = 2.0 * p.eps_zx.log2().abs();
        }
    }
    Ok(k)
}

fn check_alpha_open(alpha: f64) -> Result<()> {
    if alpha == 2.0 {
        return Err(Error::Config(
            "alpha = 2 makes the denominator 4 - 2 alpha vanish".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 2)")));
    }
    Ok(())
}

/// Alg1 row: `max{ω_G, (L_p + σ_F) / (α μ_A²)}`.
pub fn alg1_threshold(omega_g: f64, l_p: f64, sigma_f: f64, mu_a: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 2]")));
    }
    Ok(omega_g.max((l_p + sigma_f) / (alpha * mu_a * mu_a)))
}

/// Alg2 row with positive-definite `B`:
/// `[ασ_G + sqrt(α²σ_G² + 8(2-α)L_q²μ_B⁴)] / ((4-2α)μ_B²)`.
pub fn alg2_threshold(sigma_g: f64, l_q: f64, mu_b: f64, alpha: f64) -> Result<f64> {
    check_alpha_open(alpha)?;
    let root =
        (alpha * alpha * sigma_g * sigma_g + 8.0 * (2.0 - alpha) * l_q * l_q * mu_b.powi(4)).sqrt();
    Ok((alpha * sigma_g + root) / ((4.0 - 2.0 * alpha) * mu_b * mu_b))
}

/// The Lipschitz-`G` row appears twice with different radicands: once
/// without `L_q²` and once (in the application to PF) with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LipschitzRow {
    WithoutSmoothness,
    WithSmoothness,
}

/// `M_q [M_q α σ_G + sqrt(M_q² α² σ_G² + 8(2-α) [L_q²] λ_B² μ_{BBᵀ})] / (4-2α)`.
pub fn alg2_lipschitz_threshold(
    m_q: f64,
    sigma_g: f64,
    l_q: f64,
    lambda_b: f64,
    mu_bbt: f64,
    alpha: f64,
    row: LipschitzRow,
) -> Result<f64> {
    check_alpha_open(alpha)?;
    let lq2 = match row {
        LipschitzRow::WithoutSmoothness => 1.0,
        LipschitzRow::WithSmoothness => l_q * l_q,
    };
    let a = m_q * alpha * sigma_g;
    let root = (a * a + 8.0 * (2.0 - alpha) * lq2 * lambda_b * lambda_b * mu_bbt).sqrt();
    Ok(m_q * (a + root) / (4.0 - 2.0 * alpha))
}

/// Smallest penalty the convergence analysis certifies for a formulation.
/// Advisory only: solvers accept any `c > 0`.
pub fn penalty_threshold(
    formulation: Formulation,
    tradeoff: f64,
    alpha: f64,
    profile: &SmoothnessProfile,
    joint: &JointPmf,
    n_z: usize,
) -> Result<f64> {
    let k = derived_constants(formulation, tradeoff, profile, joint, n_z)?;
    let (nz, nx) = (n_z as f64, joint.n_x() as f64);
    match formulation {
        Formulation::IbTh => {
            if !(alpha > 0.0 && alpha <= 2.0) {
                return Err(Error::Config(format!("alpha = {alpha} outside (0, 2]")));
            }
            let first = 2.0 * nz * nx / profile.eps_zx;
            let second = (1.0 / profile.eps_z + (1.0 - tradeoff)) / alpha;
            Ok(first.max(second))
        }
        Formulation::IbMv => alg2_threshold(k.sigma_g, k.l_q, 1.0, alpha),
        Formulation::Pf => alg2_lipschitz_threshold(
            k.m_q,
            k.sigma_g,
            k.l_q,
            k.lambda_b,
            k.mu_bbt,
            alpha,
            LipschitzRow::WithSmoothness,
        ),
    }
}

/// Warns when `c` sits below the certified threshold. Never fails the run.
pub fn warn_if_below_threshold(
    formulation: Formulation,
    tradeoff: f64,
    alpha: f64,
    c: f64,
    profile: &SmoothnessProfile,
    joint: &JointPmf,
    n_z: usize,
) {
    match penalty_threshold(formulation, tradeoff, alpha, profile, joint, n_z) {
        Ok(t) if c < t => log::warn!("c = {c} is below the certified threshold {t:.4}"),
        Ok(_) => {}
        Err(e) => log::debug!("no threshold available: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::benchmark_joint;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dimensions() {
        let j = benchmark_joint();
        let th = build_ib_th(0.3, &j, 3).unwrap();
        assert_eq!((th.dim_p(), th.dim_q(), th.dim_nu()), (3, 9, 3));
        let mv = build_ib_mv(0.3, &j, 3).unwrap();
        assert_eq!((mv.dim_p(), mv.dim_q(), mv.dim_nu()), (9, 12, 12));
        let pf = build_pf(3.0, &j, 3).unwrap();
        assert_eq!((pf.dim_p(), pf.dim_q(), pf.dim_nu()), (9, 9, 9));
    }

    #[test]
    fn small_alphabet_rejected() {
        let j = benchmark_joint();
        assert!(matches!(build_ib_th(0.3, &j, 1), Err(Error::Config(_))));
        assert!(matches!(build_pf(-1.0, &j, 3), Err(Error::Config(_))));
    }

    #[test]
    fn th_threshold_hand_value() {
        let j = benchmark_joint();
        let prof = SmoothnessProfile {
            eps_z: 0.1,
            eps_zx: 0.01,
            eps_zy: 0.01,
        };
        let c = penalty_threshold(Formulation::IbTh, 0.5, 1.0, &prof, &j, 3).unwrap();
        assert_abs_diff_eq!(c, 1800.0, epsilon = 1e-9);
    }

    #[test]
    fn alpha_two_rejected_for_alg2_rows() {
        let j = benchmark_joint();
        let prof = SmoothnessProfile::default();
        assert!(penalty_threshold(Formulation::IbMv, 0.3, 2.0, &prof, &j, 3).is_err());
        assert!(penalty_threshold(Formulation::Pf, 3.0, 2.0, &prof, &j, 3).is_err());
        let near = penalty_threshold(Formulation::IbMv, 0.3, 2.0 - 1e-9, &prof, &j, 3).unwrap();
        assert!(near > 1e10);
    }

    #[test]
    fn lipschitz_row_with_identity_b_reduces_to_alg2_row() {
        let (sigma, lq, alpha) = (600.0, 100.0, 1.3);
        let mv = alg2_threshold(sigma, lq, 1.0, alpha).unwrap();
        let pf1 = alg2_lipschitz_threshold(
            1.0,
            sigma,
            lq,
            1.0,
            1.0,
            alpha,
            LipschitzRow::WithSmoothness,
        )
        .unwrap();
        assert_abs_diff_eq!(mv, pf1, epsilon = 1e-9);
        let mq = 13.3;
        let pf =
            alg2_lipschitz_threshold(mq, sigma, lq, 1.0, 1.0, alpha, LipschitzRow::WithSmoothness)
                .unwrap();
        let by_hand = mq
            * (mq * alpha * sigma
                + (mq * mq * alpha * alpha * sigma * sigma + 8.0 * (2.0 - alpha) * lq * lq).sqrt())
            / (4.0 - 2.0 * alpha);
        assert_abs_diff_eq!(pf, by_hand, epsilon = 1e-9);
    }

    #[test]
    fn spread_of_benchmark_channel() {
        let j = benchmark_joint();
        let z = channel_spread(&j);
        assert_abs_diff_eq!(z[0], 0.90 - 0.08, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1], 0.82 - 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(z[2], 0.55 - 0.075, epsilon = 1e-12);
        let want: f64 = z
            .iter()
            .zip(j.p_y().as_slice())
            .map(|(a, b)| a * a / b)
            .sum();
        assert_abs_diff_eq!(spread_coefficient(&j), want, epsilon = 1e-12);
    }

    #[test]
    fn formulation_names_round_trip() {
        for f in [Formulation::IbTh, Formulation::IbMv, Formulation::Pf] {
            assert_eq!(f.to_string().parse::<Formulation>().unwrap(), f);
        }
        assert!("ib".parse::<Formulation>().is_err());
    }
}
