//! Certificates and summaries computed from finished runs.

use serde::{Deserialize, Serialize};

use crate::drs::{RunStatus, Trace, Variant};
use crate::error::{check_len, Error, Result};
use crate::prob::{raw_mutual_information, CondProbVector, JointPmf};

/// `(I(X;Z), I(Y;Z))` for a raw z-major encoder `p(z|x)`.
pub(crate) fn info_plane_raw(encoder: &[f64], joint: &JointPmf, n_z: usize) -> (f64, f64) {
    let (nx, ny) = (joint.n_x(), joint.n_y());
    let i_xz = raw_mutual_information(encoder, n_z, joint.p_x().as_slice());
    let w = joint.x_given_y().as_slice();
    let mut pzy = vec![0.0; n_z * ny];
    for z in 0..n_z {
        for x in 0..nx {
            let e = encoder[z * nx + x];
            for y in 0..ny {
                pzy[z * ny + y] += e * w[x * ny + y];
            }
        }
    }
    let i_yz = raw_mutual_information(&pzy, n_z, joint.p_y().as_slice());
    (i_xz, i_yz)
}

/// Information-plane coordinates `(I(X;Z), I(Y;Z))` in bits, with `p(z|y)`
/// induced through the Markov chain `Y - X - Z`.
pub fn info_plane_point(encoder: &CondProbVector, joint: &JointPmf) -> Result<(f64, f64)> {
    check_len(joint.n_x(), encoder.n_in())?;
    Ok(info_plane_raw(encoder.as_slice(), joint, encoder.n_out()))
}

/// Constants entering the sufficient-decrease inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecreaseConstants {
    pub sigma_f: f64,
    pub l_p: f64,
    pub omega_g: f64,
    pub sigma_g: f64,
    pub l_q: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub c: f64,
    pub alpha: f64,
}

impl DecreaseConstants {
    pub fn from_derived(k: &crate::formulations::DerivedConstants, c: f64, alpha: f64) -> Self {
        DecreaseConstants {
            sigma_f: k.sigma_f,
            l_p: k.l_p,
            omega_g: k.omega_g,
            sigma_g: k.sigma_g,
            l_q: k.l_q,
            mu_a: k.mu_a,
            mu_b: k.mu_b,
            c,
            alpha,
        }
    }
}

/// Alg1 coefficients. The strong-convexity terms admit two placements of
/// `μ_A²`: divided out (`*_inv_mu`) or multiplied in (`*_mu`). Both are kept
/// and the smaller value binds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alg1Deltas {
    pub delta_p_inv_mu: f64,
    pub delta_nu_inv_mu: f64,
    pub delta_p_mu: f64,
    pub delta_nu_mu: f64,
    pub delta_p: f64,
    pub delta_q: f64,
    pub delta_nu: f64,
}

impl Alg1Deltas {
    pub fn new(k: &DecreaseConstants) -> Self {
        let (s, l, mu2) = (k.sigma_f, k.l_p, k.mu_a * k.mu_a);
        let relax = 1.0 / k.alpha - 0.5;
        let delta_p_inv_mu = s * l / (mu2 * (l + s)) + k.c * relax;
        let delta_nu_inv_mu = 1.0 / (mu2 * (l + s)) - 1.0 / (k.c * k.alpha);
        let delta_p_mu = s * l / (l + s) + k.c * mu2 * relax;
        let delta_nu_mu = mu2 / (l + s) - 1.0 / (k.c * k.alpha);
        Alg1Deltas {
            delta_p_inv_mu,
            delta_nu_inv_mu,
            delta_p_mu,
            delta_nu_mu,
            delta_p: delta_p_inv_mu.min(delta_p_mu),
            delta_q: (k.c - k.omega_g) / 2.0,
            delta_nu: delta_nu_inv_mu.min(delta_nu_mu),
        }
    }

    pub fn certified(&self) -> bool {
        self.delta_p >= 0.0 && self.delta_q >= 0.0 && self.delta_nu >= 0.0
    }
}

/// Net coefficient on `|Δq|²` once the dual term is bounded through the
/// smoothness of `G`: `μ_B²[c(1/α - 1/2) - L_q²/(αc)] - σ_G/2`.
pub fn alg2_net_coefficient(k: &DecreaseConstants) -> f64 {
    let mu2 = k.mu_b * k.mu_b;
    mu2 * (k.c * (1.0 / k.alpha - 0.5) - k.l_q * k.l_q / (k.alpha * k.c)) - k.sigma_g / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    /// Iterations `k` where `L^k - L^{k+1}` fell short of the bound.
    pub violations: Vec<usize>,
    pub fraction_ok: f64,
    /// Whether the constants make every coefficient of the bound nonnegative.
    pub certified: bool,
    pub alg1: Option<Alg1Deltas>,
}

/// Slack for rounding in `L^k - L^{k+1}`.
const DECREASE_SLACK: f64 = 1e-12;

pub fn sufficient_decrease_report(
    trace: &Trace,
    variant: Variant,
    k: &DecreaseConstants,
) -> Result<DecreaseReport> {
    let rows = &trace.rows;
    if rows.is_empty() {
        return Err(Error::Diagnostic("empty trace".into()));
    }
    for r in rows {
        if [r.dp2, r.dq2, r.dbq2, r.dnu2, r.l_c]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Diagnostic(format!(
                "row {} lacks displacement norms",
                r.k
            )));
        }
    }
    let alg1 = match variant {
        Variant::Alg1 => Some(Alg1Deltas::new(k)),
        Variant::Alg2 => None,
    };
    let mut violations = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let decrease = a.l_c - b.l_c;
        let bound = match &alg1 {
            Some(d) => {
                d.delta_p * b.dp2.powi(2) + d.delta_q * b.dbq2.powi(2) + d.delta_nu * b.dnu2.powi(2)
            }
            None => {
                // Without |AΔp| on record, μ_A|Δp| is a valid lower bound.
                let adp = b.dap2.unwrap_or(k.mu_a * b.dp2);
                0.5 * k.c * adp.powi(2) - 0.5 * k.sigma_g * b.dq2.powi(2)
                    + k.c * (1.0 / k.alpha - 0.5) * b.dbq2.powi(2)
                    - b.dnu2.powi(2) / (k.alpha * k.c)
            }
        };
        let slack = DECREASE_SLACK * (1.0 + a.l_c.abs());
        if decrease < bound - slack {
            violations.push(a.k);
        }
    }
    let steps = rows.len() - 1;
    let fraction_ok = if steps == 0 {
        1.0
    } else {
        1.0 - violations.len() as f64 / steps as f64
    };
    let certified = match &alg1 {
        Some(d) => d.certified(),
        None => alg2_net_coefficient(k) >= 0.0,
    };
    Ok(DecreaseReport {
        violations,
        fraction_ok,
        certified,
        alg1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Per-iteration contraction of the gap `L^k - L*`.
    pub q: f64,
    pub r2: f64,
    pub slope: f64,
    pub points: usize,
}

/// Least-squares fit of `log2(L^k - L*)` against `k` over the last
/// `tail_fraction` of the trace. The tail is cut at the first non-positive
/// gap.
pub fn rate_fit(trace: &Trace, l_star: f64, tail_fraction: f64) -> Result<RateFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "tail_fraction = {tail_fraction} outside (0, 1]"
        )));
    }
    let rows = &trace.rows;
    let n = ((rows.len() as f64) * tail_fraction).ceil() as usize;
    let start = rows.len().saturating_sub(n);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in &rows[start..] {
        let gap = r.l_c - l_star;
        if !(gap > 0.0) {
            break;
        }
        xs.push(r.k as f64);
        ys.push(gap.log2());
    }
    if xs.len() < 3 {
        return Err(Error::Diagnostic(format!(
            "only {} positive gaps in the tail",
            xs.len()
        )));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy <= 1e-20 * m {
        return Err(Error::Diagnostic("gap is flat over the tail".into()));
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    Ok(RateFit {
        q: slope.exp2(),
        r2: 1.0 - ss_res / syy,
        slope,
        points: xs.len(),
    })
}

/// Default reference value for rate fits: the best final `L_c` over a
/// family of runs, less a small slack.
pub fn reference_lagrangian<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Option<f64> {
    traces
        .into_iter()
        .map(Trace::final_lagrangian)
        .filter(|v| v.is_finite())
        .reduce(f64::min)
        .map(|v| v - 1e-9)
}

pub fn convergence_percentage(statuses: &[RunStatus]) -> Result<f64> {
    if statuses.is_empty() {
        return Err(Error::InvalidInput("no runs to aggregate".into()));
    }
    let n = statuses
        .iter()
        .filter(|s| **s == RunStatus::Converged)
        .count();
    Ok(n as f64 / statuses.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drs::TraceRow;
    use crate::harness::benchmark_joint;
    use approx::assert_abs_diff_eq;

    fn row(k: usize, l_c: f64) -> TraceRow {
        TraceRow {
            k,
            l_c,
            residual_l1sq: 0.0,
            dp2: 0.0,
            dq2: 0.0,
            dbq2: 0.0,
            dnu2: 0.0,
            i_xz: 0.0,
            i_yz: 0.0,
            dap2: None,
        }
    }

    fn trace(vals: &[f64]) -> Trace {
        Trace {
            rows: vals.iter().enumerate().map(|(k, &v)| row(k, v)).collect(),
            status: RunStatus::Converged,
        }
    }

    #[test]
    fn product_encoder_is_origin() {
        let j = benchmark_joint();
        let enc = CondProbVector::new(vec![0.2; 3].into_iter().chain(vec![0.8; 3]).collect(), 2, 3)
            .unwrap();
        let (a, b) = info_plane_point(&enc, &j).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_encoder_reaches_corner() {
        let j = benchmark_joint();
        let (a, b) = info_plane_point(&CondProbVector::identity(3), &j).unwrap();
        assert_abs_diff_eq!(a, 3f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(b, j.mutual_information_bits(), epsilon = 1e-12);
    }

    #[test]
    fn geometric_gap_fits_exactly() {
        let vals: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        let f = rate_fit(&trace(&vals), 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(f.q, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_tail_is_a_diagnostic() {
        let f = rate_fit(&trace(&[1e-9; 50]), 0.0, 0.5);
        assert!(matches!(f, Err(Error::Diagnostic(_))));
        let f = rate_fit(&trace(&[0.0; 50]), 0.0, 0.5);
        assert!(matches!(f, Err(Error::Diagnostic(_))));
    }

    #[test]
    fn stationary_tail_satisfies_decrease() {
        let k = DecreaseConstants {
            sigma_f: 0.5,
            l_p: 10.0,
            omega_g: 3.0,
            sigma_g: 0.0,
            l_q: 10.0,
            mu_a: 1.0,
            mu_b: 1.0,
            c: 20.0,
            alpha: 1.0,
        };
        let rep = sufficient_decrease_report(&trace(&[-0.3; 10]), Variant::Alg1, &k).unwrap();
        assert!(rep.violations.is_empty());
        assert_eq!(rep.fraction_ok, 1.0);
        assert!(rep.certified);
    }

    #[test]
    fn penalty_below_omega_is_uncertified() {
        let k = DecreaseConstants {
            sigma_f: 0.5,
            l_p: 10.0,
            omega_g: 30.0,
            sigma_g: 0.0,
            l_q: 10.0,
            mu_a: 1.0,
            mu_b: 1.0,
            c: 20.0,
            alpha: 1.0,
        };
        let d = Alg1Deltas::new(&k);
        assert!(d.delta_q < 0.0);
        let rep = sufficient_decrease_report(&trace(&[0.0; 3]), Variant::Alg1, &k).unwrap();
        assert!(!rep.certified);
    }

    #[test]
    fn binding_deltas_take_the_weaker_placement() {
        let k = DecreaseConstants {
            sigma_f: 0.5,
            l_p: 10.0,
            omega_g: 0.0,
            sigma_g: 0.0,
            l_q: 0.0,
            mu_a: 0.5,
            mu_b: 1.0,
            c: 20.0,
            alpha: 1.5,
        };
        let d = Alg1Deltas::new(&k);
        assert_eq!(d.delta_p, d.delta_p_inv_mu.min(d.delta_p_mu));
        assert_eq!(d.delta_nu, d.delta_nu_inv_mu.min(d.delta_nu_mu));
        assert!(d.delta_p_inv_mu != d.delta_p_mu);
    }

    #[test]
    fn convergence_fraction() {
        use RunStatus::*;
        assert_eq!(
            convergence_percentage(&[Converged, Converged]).unwrap(),
            1.0
        );
        assert_eq!(convergence_percentage(&[MaxIters, Stalled]).unwrap(), 0.0);
        assert_eq!(convergence_percentage(&[Converged, MaxIters]).unwrap(), 0.5);
        assert!(convergence_percentage(&[]).is_err());
    }
}
