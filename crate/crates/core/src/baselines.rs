//! Reference solvers: the self-consistent IB iteration and greedy
//! merge-two clustering for the privacy funnel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::info_plane_raw;
use crate::error::{Error, Result};
use crate::prob::{xlog2x, CondProbVector, JointPmf};

/// Floor on `p(y|z)` so the KL exponent stays finite.
const BA_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaConfig {
    /// Max-norm change of `p(z|x)` below which the iteration stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BaConfig {
    fn default() -> Self {
        BaConfig {
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaResult {
    pub encoder: CondProbVector,
    pub i_xz: f64,
    pub i_yz: f64,
    /// `γ I(X;Z) - I(Y;Z)`.
    pub lagrangian: f64,
    pub iters: usize,
    pub converged: bool,
}

/// One self-consistent update with inverse temperature `1/γ`:
/// `p(z|x) ∝ p(z) 2^{-D(p(y|x) || p(y|z)) / γ}`.
pub fn ba_step(encoder: &[f64], gamma: f64, joint: &JointPmf, n_z: usize) -> Vec<f64> {
    let (nx, ny) = (joint.n_x(), joint.n_y());
    let px = joint.p_x().as_slice();
    let pyx = joint.y_given_x();
    let pz: Vec<f64> = (0..n_z)
        .map(|z| (0..nx).map(|x| encoder[z * nx + x] * px[x]).sum())
        .collect();
    // p(y|z) = Σ_x p(y|x) p(z|x) p(x) / p(z)
    let mut pyz = vec![0.0; n_z * ny];
    for z in 0..n_z {
        if pz[z] <= 0.0 {
            continue;
        }
        for y in 0..ny {
            let s: f64 = (0..nx)
                .map(|x| pyx.get(y, x) * encoder[z * nx + x] * px[x])
                .sum();
            pyz[z * ny + y] = (s / pz[z]).max(BA_FLOOR);
        }
    }
    let mut next = vec![0.0; n_z * nx];
    let mut logw = vec![0.0; n_z];
    for x in 0..nx {
        for z in 0..n_z {
            logw[z] = if pz[z] > 0.0 {
                let kl: f64 = (0..ny)
                    .map(|y| {
                        let a = pyx.get(y, x);
                        xlog2x(a)
                            - if a > 0.0 {
                                a * pyz[z * ny + y].log2()
                            } else {
                                0.0
                            }
                    })
                    .sum();
                pz[z].log2() - kl / gamma
            } else {
                f64::NEG_INFINITY
            };
        }
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tot: f64 = logw.iter().map(|l| (l - top).exp2()).sum();
        for z in 0..n_z {
            next[z * nx + x] = (logw[z] - top).exp2() / tot;
        }
    }
    next
}

fn dirichlet_encoder(rng: &mut ChaCha8Rng, n_z: usize, n_x: usize) -> Vec<f64> {
    use rand_distr::{Distribution, Exp1};
    let mut enc = vec![0.0; n_z * n_x];
    for x in 0..n_x {
        let g: Vec<f64> = (0..n_z).map(|_| Exp1.sample(rng)).collect();
        let tot: f64 = g.iter().sum();
        for z in 0..n_z {
            enc[z * n_x + x] = g[z] / tot;
        }
    }
    enc
}

pub fn ba_ib(
    gamma: f64,
    joint: &JointPmf,
    n_z: usize,
    cfg: &BaConfig,
    seed: u64,
) -> Result<BaResult> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma = {gamma} must be positive")));
    }
    if n_z < 1 {
        return Err(Error::Config("N_z must be at least 1".into()));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::Config(format!("tol = {} must be positive", cfg.tol)));
    }
    let nx = joint.n_x();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = dirichlet_encoder(&mut rng, n_z, nx);
    let mut iters = 0;
    let mut converged = false;
    while iters < cfg.max_iters {
        let next = ba_step(&enc, gamma, joint, n_z);
        iters += 1;
        let change = next
            .iter()
            .zip(&enc)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        enc = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let (i_xz, i_yz) = info_plane_raw(&enc, joint, n_z);
    Ok(BaResult {
        encoder: CondProbVector::new(enc, n_z, nx)?,
        i_xz,
        i_yz,
        lagrangian: gamma * i_xz - i_yz,
        iters,
        converged,
    })
}

/// Best of `restarts` runs by `γ I(X;Z) - I(Y;Z)`, seeds `seed, seed+1, ...`.
pub fn ba_ib_best(
    gamma: f64,
    joint: &JointPmf,
    n_z: usize,
    cfg: &BaConfig,
    seed: u64,
    restarts: usize,
) -> Result<BaResult> {
    let mut best: Option<BaResult> = None;
    for r in 0..restarts.max(1) {
        let res = ba_ib(gamma, joint, n_z, cfg, seed.wrapping_add(r as u64))?;
        if best.as_ref().is_none_or(|b| res.lagrangian < b.lagrangian) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyPoint {
    /// Cluster index of every `x`.
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
    pub i_xz: f64,
    pub i_yz: f64,
}

impl GreedyPoint {
    pub fn encoder(&self) -> CondProbVector {
        let nx = self.assignment.len();
        let mut v = vec![0.0; self.n_clusters * nx];
        for (x, &z) in self.assignment.iter().enumerate() {
            v[z * nx + x] = 1.0;
        }
        CondProbVector::new(v, self.n_clusters, nx).expect("one-hot columns")
    }
}

/// Plane point of a hard clustering given as lists of `x` indices.
pub fn partition_point(joint: &JointPmf, clusters: &[Vec<usize>]) -> (f64, f64) {
    let mut h_z = 0.0;
    let mut i_yz = 0.0;
    let py = joint.p_y().as_slice();
    for members in clusters {
        let pz: f64 = members.iter().map(|&x| joint.p_x().as_slice()[x]).sum();
        h_z -= xlog2x(pz);
        for (y, &p_y) in py.iter().enumerate() {
            let pzy: f64 = members.iter().map(|&x| joint.p(x, y)).sum();
            if pzy > 0.0 {
                i_yz += pzy * (pzy / (pz * p_y)).log2();
            }
        }
    }
    (h_z.max(0.0), i_yz.max(0.0))
}

fn point_from(joint: &JointPmf, clusters: &[Vec<usize>]) -> GreedyPoint {
    let mut assignment = vec![0; joint.n_x()];
    for (z, members) in clusters.iter().enumerate() {
        for &x in members {
            assignment[x] = z;
        }
    }
    let (i_xz, i_yz) = partition_point(joint, clusters);
    GreedyPoint {
        assignment,
        n_clusters: clusters.len(),
        i_xz,
        i_yz,
    }
}

/// Pair `(a, b)` whose merge loses the most `I(Z;Y)`; ties go to the
/// lexicographically smallest pair.
pub fn best_merge(joint: &JointPmf, clusters: &[Vec<usize>]) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for a in 0..clusters.len() {
        for b in a + 1..clusters.len() {
            let mut merged: Vec<Vec<usize>> = clusters.to_vec();
            let moved = merged.remove(b);
            merged[a].extend(moved);
            let (_, iyz) = partition_point(joint, &merged);
            if best.is_none_or(|(_, v)| iyz < v) {
                best = Some(((a, b), iyz));
            }
        }
    }
    best.map(|(pair, _)| pair)
}

/// Greedy agglomeration from `Z = X` down to a single cluster. The first
/// point is the identity partition and each later point follows one merge.
pub fn greedy_pf_merge_two(joint: &JointPmf) -> Vec<GreedyPoint> {
    let mut clusters: Vec<Vec<usize>> = (0..joint.n_x()).map(|x| vec![x]).collect();
    let mut out = vec![point_from(joint, &clusters)];
    while let Some((a, b)) = best_merge(joint, &clusters) {
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
        out.push(point_from(joint, &clusters));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::benchmark_joint;
    use approx::assert_abs_diff_eq;

    #[test]
    fn large_gamma_is_trivial() {
        let j = benchmark_joint();
        let r = ba_ib(1.5, &j, 3, &BaConfig::default(), 4).unwrap();
        assert!(r.i_xz < 1e-6 && r.i_yz < 1e-6, "{:?}", r);
    }

    #[test]
    fn small_gamma_saturates() {
        let j = benchmark_joint();
        let r = ba_ib_best(0.02, &j, 3, &BaConfig::default(), 0, 5).unwrap();
        assert_abs_diff_eq!(r.i_yz, j.mutual_information_bits(), epsilon = 1e-3);
    }

    #[test]
    fn converged_encoder_is_a_fixed_point() {
        let j = benchmark_joint();
        let cfg = BaConfig::default();
        let r = ba_ib(0.3, &j, 3, &cfg, 1).unwrap();
        assert!(r.converged);
        let again = ba_step(r.encoder.as_slice(), 0.3, &j, 3);
        let change = again
            .iter()
            .zip(r.encoder.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(change < cfg.tol);
    }

    #[test]
    fn greedy_endpoints() {
        let j = benchmark_joint();
        let pts = greedy_pf_merge_two(&j);
        assert_eq!(pts.len(), 3);
        assert_abs_diff_eq!(pts[0].i_xz, 3f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(pts[0].i_yz, j.mutual_information_bits(), epsilon = 1e-12);
        assert_abs_diff_eq!(pts[2].i_xz, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[2].i_yz, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn greedy_first_merge_matches_exhaustive() {
        let j = benchmark_joint();
        let pts = greedy_pf_merge_two(&j);
        // Exhaustive over the three pairs of the identity partition.
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let mut best = (f64::INFINITY, (0, 0));
        for &(a, b) in &pairs {
            let c = (0..3).find(|&x| x != a && x != b).unwrap();
            let (_, iyz) = partition_point(&j, &[vec![a, b], vec![c]]);
            if iyz < best.0 {
                best = (iyz, (a, b));
            }
        }
        let asg = &pts[1].assignment;
        assert_eq!(asg[best.1 .0], asg[best.1 .1]);
        assert_abs_diff_eq!(pts[1].i_yz, best.0, epsilon = 1e-15);
    }

    #[test]
    fn greedy_encoder_round_trip() {
        let j = benchmark_joint();
        for p in greedy_pf_merge_two(&j) {
            let (a, b) = crate::diagnostics::info_plane_point(&p.encoder(), &j).unwrap();
            assert_abs_diff_eq!(a, p.i_xz, epsilon = 1e-12);
            assert_abs_diff_eq!(b, p.i_yz, epsilon = 1e-12);
        }
    }
}
