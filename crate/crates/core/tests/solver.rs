use infosplit::drs::random_state;
use infosplit::formulations::alg1_threshold;
use infosplit::harness::{
    ingest_records_csv, read_csv, read_trace_csv, restart_seed, sweep_joint,
    synthetic_binary_records, write_binary_records, write_csv, write_sweep, write_trace_csv,
};
use infosplit::inner::block_minimize;
use infosplit::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn th(gamma: f64, c: f64) -> SplitProblem {
    build_ib_th(gamma, &benchmark_joint(), 3)
        .unwrap()
        .with_penalty(c)
        .unwrap()
}

/// Textbook two-block ADMM: p-minimization, dual ascent, q-minimization.
fn plain_admm(pr: &SplitProblem, mut s: BlockState, iters: usize) -> Vec<BlockState> {
    let inner = InnerConfig::default();
    let mut out = vec![s.clone()];
    for _ in 0..iters {
        s.p = block_minimize(pr, &s, Block::P, &inner).unwrap().block;
        let r = pr.primal_residual(&s).unwrap().r;
        for (n, r) in s.nu.iter_mut().zip(&r) {
            *n += pr.c() * r;
        }
        s.q = block_minimize(pr, &s, Block::Q, &inner).unwrap().block;
        out.push(s.clone());
    }
    out
}

#[test]
fn alg1_with_unit_relaxation_is_plain_admm() {
    let pr = th(0.286, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let init = random_state(&pr, &mut rng).unwrap();
    let reference = plain_admm(&pr, init.clone(), 40);
    let stop = StopRule {
        tol: f64::MIN_POSITIVE,
        max_iters: 40,
    };
    let out = run(&pr, Variant::Alg1, init, &stop, &InnerConfig::default()).unwrap();
    assert_eq!(out.state, reference[40]);
    for (row, s) in out.trace.rows.iter().zip(&reference) {
        assert_eq!(row.l_c, pr.eval(s).unwrap());
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let pr = build_ib_mv(0.286, &benchmark_joint(), 3)
        .unwrap()
        .with_penalty(15.0)
        .unwrap();
    let go = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init = random_state(&pr, &mut rng).unwrap();
        run(
            &pr,
            Variant::Alg2,
            init,
            &StopRule::default(),
            &InnerConfig::default(),
        )
        .unwrap()
    };
    assert_eq!(go(), go());
}

#[test]
fn minimizer_condition_residual_shrinks() {
    // |centered(∇F(p) + Aᵀν)| at the end of a converged IB-TH run against
    // its value a few iterations in.
    let pr = th(0.286, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let init = random_state(&pr, &mut rng).unwrap();
    let stationarity = |iters: usize| {
        let stop = StopRule {
            tol: 2e-6,
            max_iters: iters,
        };
        let out = run(
            &pr,
            Variant::Alg1,
            init.clone(),
            &stop,
            &InnerConfig::default(),
        )
        .unwrap();
        let s = out.state;
        let mut g = pr.grad_p(&s).unwrap();
        // Remove the penalty part so only ∇F + Aᵀν remains.
        let r = pr.primal_residual(&s).unwrap().r;
        for (gi, ri) in g.iter_mut().zip(&r) {
            *gi -= pr.c() * ri;
        }
        pr.layout(Block::P).center(&mut g);
        (
            g.iter().map(|v| v * v).sum::<f64>().sqrt(),
            out.trace.status,
        )
    };
    let (early, _) = stationarity(5);
    let (late, status) = stationarity(20_000);
    assert_eq!(status, RunStatus::Converged);
    assert!(late < 0.1 * early, "early {early}, late {late}");
}

#[test]
fn sweep_csv_is_byte_identical_across_runs() {
    let joint = benchmark_joint();
    let mut cfg = SweepConfig::new(Formulation::IbTh, vec![0.2, 0.4], vec![2.0, 8.0]);
    cfg.restarts = 1;
    cfg.seed = 77;
    let bytes = || {
        let runs = sweep_joint(&cfg, &joint).unwrap();
        let recs: Vec<PlaneRecord> = runs.into_iter().map(|r| r.record).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        buf
    };
    let a = bytes();
    assert_eq!(a, bytes());
    let header = String::from_utf8(a).unwrap();
    assert!(header.starts_with(
        "formulation,variant,alpha,c,tradeoff,seed,status,iters,L_c_bits,I_xz_bits,I_yz_bits\n"
    ));
}

#[test]
fn plane_and_trace_csv_round_trip() {
    let joint = benchmark_joint();
    let mut cfg = SweepConfig::new(Formulation::Pf, vec![2.0, 5.0], vec![16.0]);
    cfg.n_z = 2;
    cfg.restarts = 2;
    cfg.traces = true;
    cfg.stop.max_iters = 300;
    let runs = sweep_joint(&cfg, &joint).unwrap();
    let recs: Vec<PlaneRecord> = runs.iter().map(|r| r.record.clone()).collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &recs).unwrap();
    let back: Vec<PlaneRecord> = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, recs);

    let trace = runs[0].trace.clone().unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &trace).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("k,L_c_bits,residual_l1sq,dp2,dq2,dBq2,dnu2,I_xz_bits,I_yz_bits\n"));
    let back = read_trace_csv(buf.as_slice()).unwrap();
    for (a, b) in back.rows.iter().zip(&trace.rows) {
        assert_eq!(*a, TraceRow { dap2: None, ..*b });
    }
}

#[test]
fn write_sweep_lays_out_directory() {
    let joint = benchmark_joint();
    let mut cfg = SweepConfig::new(Formulation::IbTh, vec![0.3], vec![4.0]);
    cfg.restarts = 2;
    cfg.traces = true;
    let runs = sweep_joint(&cfg, &joint).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sweep(dir.path(), &runs).unwrap();
    assert!(dir.path().join("plane.csv").is_file());
    assert!(dir.path().join("plane_avg.csv").is_file());
    let traces = std::fs::read_dir(dir.path().join("traces"))
        .unwrap()
        .count();
    assert_eq!(traces, 2);
}

#[test]
fn failed_configuration_is_reported_up_front() {
    let joint = benchmark_joint();
    let mut cfg = SweepConfig::new(Formulation::IbMv, vec![0.3], vec![4.0]);
    cfg.alphas = vec![2.0];
    assert!(matches!(sweep_joint(&cfg, &joint), Err(Error::Config(_))));
}

#[test]
fn restart_seeds_are_distinct() {
    let seeds: std::collections::HashSet<u64> = (0..1000).map(|r| restart_seed(1, r)).collect();
    assert_eq!(seeds.len(), 1000);
}

#[test]
fn synthetic_records_ingest_to_sixteen_by_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    let recs = synthetic_binary_records(299, 4);
    write_binary_records(std::fs::File::create(&path).unwrap(), &recs).unwrap();
    let y = vec!["sex".to_string(), "DEATH_EVENT".to_string()];
    let j = ingest_records_csv(&path, &y, None, 1e-3).unwrap();
    assert_eq!((j.n_x(), j.n_y()), (16, 4));
    assert!(j.table().iter().all(|&v| v > 0.0));
}

#[test]
fn thresholds_fall_with_epsilon_and_rise_with_alpha() {
    let joint = benchmark_joint();
    let loose = SmoothnessProfile {
        eps_z: 0.05,
        eps_zx: 0.05,
        eps_zy: 0.05,
    };
    let tight = SmoothnessProfile::default();
    for f in [Formulation::IbTh, Formulation::IbMv, Formulation::Pf] {
        let t = if f == Formulation::Pf { 3.0 } else { 0.3 };
        let a = penalty_threshold(f, t, 1.0, &tight, &joint, 3).unwrap();
        let b = penalty_threshold(f, t, 1.0, &loose, &joint, 3).unwrap();
        assert!(b < a, "{f}: {b} !< {a}");
    }
    for f in [Formulation::IbMv, Formulation::Pf] {
        let t = if f == Formulation::Pf { 3.0 } else { 0.3 };
        let th: Vec<f64> = [0.5, 1.0, 1.5, 1.9]
            .iter()
            .map(|&a| penalty_threshold(f, t, a, &tight, &joint, 3).unwrap())
            .collect();
        assert!(th.windows(2).all(|w| w[1] > w[0]), "{f}: {th:?}");
    }
}

#[test]
fn exact_inner_solves_certify_a_tiny_instance() {
    let joint = build_joint(&[vec![0.4, 0.1], vec![0.15, 0.35]]).unwrap();
    let profile = SmoothnessProfile::default();
    let k = derived_constants(Formulation::IbTh, 0.4, &profile, &joint, 2).unwrap();
    let c = 1.1 * alg1_threshold(k.omega_g, k.l_p, k.sigma_f, k.mu_a, 1.0).unwrap();
    let pr = build_ib_th(0.4, &joint, 2)
        .unwrap()
        .with_penalty(c)
        .unwrap()
        .with_eps_floor(0.01)
        .unwrap();
    let inner = InnerConfig {
        inner_steps: 200,
        ..InnerConfig::default()
    };
    let consts = infosplit::diagnostics::DecreaseConstants::from_derived(&k, c, 1.0);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = random_state(&pr, &mut rng).unwrap();
        let out = run(&pr, Variant::Alg1, init, &StopRule::default(), &inner).unwrap();
        let rep = sufficient_decrease_report(&out.trace, Variant::Alg1, &consts).unwrap();
        assert!(rep.certified);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }
}
