use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use infosplit::diagnostics::{reference_lagrangian, DecreaseConstants};
use infosplit::harness::{
    read_trace_csv, restart_seed, run_one, write_csv, write_sweep, write_trace_csv, InputSource,
};
use infosplit::*;
use serde_json::json;

mod range;

use range::parse_values;

#[derive(Parser)]
#[command(
    name = "infosplit",
    version,
    about = "Splitting solvers for information bottleneck and privacy funnel problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the information bottleneck over gamma.
    IbSweep(IbSweep),
    /// Sweep the privacy funnel over beta.
    PfSweep(PfSweep),
    /// Blahut-Arimoto information bottleneck curve.
    Ba(Ba),
    /// Single configuration with a trace dump.
    Run(RunCmd),
    /// Greedy merge-two privacy funnel frontier.
    GreedyPf(GreedyPf),
    /// Print the certified penalty threshold and derived constants.
    Threshold(Threshold),
    /// Sufficient-decrease and rate report for a trace file.
    Check(Check),
}

#[derive(Args, Clone)]
struct Input {
    /// Joint table CSV: rows x, columns y, optional header.
    #[arg(long, conflicts_with = "records")]
    input: Option<PathBuf>,
    /// Categorical records CSV with a header row.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Columns forming Y (records input).
    #[arg(long, value_delimiter = ',', requires = "records")]
    y_cols: Vec<String>,
    /// Columns forming X; defaults to every other column.
    #[arg(long, value_delimiter = ',', requires = "records")]
    x_cols: Option<Vec<String>>,
    /// Count added to every (x, y) cell.
    #[arg(long, default_value_t = 1e-3)]
    smoothing: f64,
}

impl Input {
    fn source(&self) -> Result<InputSource> {
        Ok(match (&self.input, &self.records) {
            (Some(path), None) => InputSource::JointCsv { path: path.clone() },
            (None, Some(path)) => {
                if self.y_cols.is_empty() {
                    bail!("--records needs --y-cols");
                }
                InputSource::RecordsCsv {
                    path: path.clone(),
                    y_columns: self.y_cols.clone(),
                    x_columns: self.x_cols.clone(),
                    smoothing: self.smoothing,
                }
            }
            _ => InputSource::Benchmark,
        })
    }

    fn load(&self) -> Result<JointPmf> {
        Ok(self.source()?.load()?)
    }
}

#[derive(Args, Clone)]
struct Solver {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    nz: Option<usize>,
    /// Relaxation; single value or lo:hi:steps.
    #[arg(long, default_value = "1")]
    alpha: String,
    /// Penalty; single value or lo:hi:steps.
    #[arg(long, default_value = "8")]
    c: String,
    #[arg(long, default_value_t = 2e-6)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1)]
    inner_steps: usize,
    /// First trial step as a multiple of 1 / (c |M|²).
    #[arg(long, default_value_t = 2.0)]
    step0: f64,
    /// Sufficient-decrease factor for backtracking; 0 accepts any non-increase.
    #[arg(long, default_value_t = 0.0)]
    armijo: f64,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_formulation(s: &str) -> Result<Formulation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    solver: Solver,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; plane CSV goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-run trace CSVs under <out>/traces.
    #[arg(long, requires = "out")]
    trace: bool,
    /// JSON sweep configuration; overrides every other flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct IbSweep {
    /// ib-th or ib-mv.
    #[arg(long, default_value = "ib-th", value_parser = parse_formulation)]
    formulation: Formulation,
    /// Single value or lo:hi:steps.
    #[arg(long, default_value = "0.1:0.9:9")]
    gamma: String,
    #[command(flatten)]
    sweep: Sweep,
}

#[derive(Args)]
struct PfSweep {
    #[arg(long, default_value = "1.5:10:8")]
    beta: String,
    #[command(flatten)]
    sweep: Sweep,
}

#[derive(Args)]
struct Ba {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value = "0.02:0.98:20")]
    gamma: String,
    #[arg(long)]
    nz: Option<usize>,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunCmd {
    #[arg(long, value_parser = parse_formulation)]
    formulation: Formulation,
    /// gamma for the bottleneck, beta for the funnel.
    #[arg(long)]
    tradeoff: f64,
    #[command(flatten)]
    solver: Solver,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GreedyPf {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Profile {
    #[arg(long, default_value_t = 0.01)]
    eps_z: f64,
    #[arg(long, default_value_t = 0.01)]
    eps_zx: f64,
    #[arg(long, default_value_t = 0.01)]
    eps_zy: f64,
}

impl From<&Profile> for SmoothnessProfile {
    fn from(p: &Profile) -> Self {
        SmoothnessProfile {
            eps_z: p.eps_z,
            eps_zx: p.eps_zx,
            eps_zy: p.eps_zy,
        }
    }
}

#[derive(Args)]
struct Threshold {
    #[arg(long, value_parser = parse_formulation)]
    formulation: Formulation,
    #[arg(long)]
    tradeoff: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    nz: Option<usize>,
    #[command(flatten)]
    profile: Profile,
    #[command(flatten)]
    input: Input,
}

#[derive(Args)]
struct Check {
    /// Trace CSV written by `run` or a sweep.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_parser = parse_formulation)]
    formulation: Formulation,
    #[arg(long)]
    tradeoff: f64,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    nz: Option<usize>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Reference loss for the rate fit; defaults to the trace minimum.
    #[arg(long)]
    l_star: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    tail: f64,
    #[command(flatten)]
    profile: Profile,
    #[command(flatten)]
    input: Input,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::IbSweep(a) => {
            if !matches!(a.formulation, Formulation::IbTh | Formulation::IbMv) {
                bail!("ib-sweep takes ib-th or ib-mv");
            }
            sweep_cmd(a.formulation, &a.gamma, a.sweep)
        }
        Command::PfSweep(a) => sweep_cmd(Formulation::Pf, &a.beta, a.sweep),
        Command::Ba(a) => ba_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::GreedyPf(a) => greedy_cmd(a),
        Command::Threshold(a) => threshold_cmd(a),
        Command::Check(a) => check_cmd(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn sweep_cmd(formulation: Formulation, tradeoffs: &str, a: Sweep) -> Result<()> {
    let cfg = match &a.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SweepConfig::from_json(&text)?
        }
        None => {
            let s = &a.solver;
            let joint_nz = |input: &InputSource| -> Result<usize> { Ok(input.load()?.n_x()) };
            let input = s.input.source()?;
            let mut cfg =
                SweepConfig::new(formulation, parse_values(tradeoffs)?, parse_values(&s.c)?);
            cfg.alphas = parse_values(&s.alpha)?;
            cfg.n_z = match s.nz {
                Some(n) => n,
                None => joint_nz(&input)?,
            };
            cfg.restarts = a.restarts;
            cfg.seed = a.seed;
            cfg.stop = StopRule {
                tol: s.tol,
                max_iters: s.max_iters,
            };
            cfg.inner = inner_config(s);
            cfg.variant = s.variant;
            cfg.input = input;
            cfg.traces = a.trace;
            cfg
        }
    };
    let runs = sweep(&cfg)?;
    let conv = runs
        .iter()
        .filter(|r| r.record.status == RunStatus::Converged)
        .count();
    log::info!("{conv} of {} runs converged", runs.len());
    match &a.out {
        Some(dir) => {
            write_sweep(dir, &runs)?;
            fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
            eprintln!(
                "{} runs ({conv} converged) written to {}",
                runs.len(),
                dir.display()
            );
        }
        None => {
            let recs: Vec<PlaneRecord> = runs.into_iter().map(|r| r.record).collect();
            write_csv(io::stdout().lock(), &recs)?;
        }
    }
    Ok(())
}

fn inner_config(s: &Solver) -> InnerConfig {
    InnerConfig {
        inner_steps: s.inner_steps,
        step0: s.step0,
        armijo: s.armijo,
        ..InnerConfig::default()
    }
}

fn ba_cmd(a: Ba) -> Result<()> {
    let joint = a.input.load()?;
    let nz = a.nz.unwrap_or(joint.n_x());
    let cfg = BaConfig {
        tol: a.tol,
        max_iters: a.max_iters,
    };
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record([
        "gamma",
        "I_xz_bits",
        "I_yz_bits",
        "L_bits",
        "iters",
        "converged",
    ])?;
    for g in parse_values(&a.gamma)? {
        let r = ba_ib_best(g, &joint, nz, &cfg, a.seed, a.restarts)?;
        w.serialize((g, r.i_xz, r.i_yz, r.lagrangian, r.iters, r.converged))?;
    }
    w.flush()?;
    Ok(())
}

fn run_cmd(a: RunCmd) -> Result<()> {
    let s = &a.solver;
    let joint = s.input.load()?;
    let nz = s.nz.unwrap_or(joint.n_x());
    let variant = s.variant.unwrap_or(a.formulation.default_variant());
    let c = single(&s.c, "--c")?;
    let alpha = single(&s.alpha, "--alpha")?;
    let stop = StopRule {
        tol: s.tol,
        max_iters: s.max_iters,
    };
    let seed = restart_seed(a.seed, 0);
    let out = run_one(
        a.formulation,
        variant,
        a.tradeoff,
        c,
        alpha,
        &joint,
        nz,
        seed,
        &stop,
        &inner_config(s),
    )?;
    let last = out.trace.last();
    println!(
        "{}",
        json!({
            "formulation": a.formulation.to_string(),
            "variant": variant.to_string(),
            "status": out.trace.status,
            "iters": out.trace.iterations(),
            "L_c_bits": last.l_c,
            "I_xz_bits": last.i_xz,
            "I_yz_bits": last.i_yz,
            "seed": seed,
        })
    );
    if let Some(path) = &a.out {
        write_trace_csv(output(Some(path))?, &out.trace)?;
    }
    Ok(())
}

fn single(spec: &str, flag: &str) -> Result<f64> {
    match parse_values(spec)?.as_slice() {
        [v] => Ok(*v),
        _ => bail!("{flag} takes a single value here"),
    }
}

fn greedy_cmd(a: GreedyPf) -> Result<()> {
    let joint = a.input.load()?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["n_clusters", "I_xz_bits", "I_yz_bits", "assignment"])?;
    for p in greedy_pf_merge_two(&joint) {
        let asg: Vec<String> = p.assignment.iter().map(|v| v.to_string()).collect();
        w.serialize((p.n_clusters, p.i_xz, p.i_yz, asg.join(" ")))?;
    }
    w.flush()?;
    Ok(())
}

fn threshold_cmd(a: Threshold) -> Result<()> {
    let joint = a.input.load()?;
    let nz = a.nz.unwrap_or(joint.n_x());
    let profile = SmoothnessProfile::from(&a.profile);
    let c = penalty_threshold(a.formulation, a.tradeoff, a.alpha, &profile, &joint, nz)?;
    let k = derived_constants(a.formulation, a.tradeoff, &profile, &joint, nz)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "c_min": c, "constants": k }))?
    );
    Ok(())
}

fn check_cmd(a: Check) -> Result<()> {
    let trace = read_trace_csv(
        File::open(&a.trace).with_context(|| format!("opening {}", a.trace.display()))?,
    )?;
    let joint = a.input.load()?;
    let nz = a.nz.unwrap_or(joint.n_x());
    let profile = SmoothnessProfile::from(&a.profile);
    let variant = a.variant.unwrap_or(a.formulation.default_variant());
    let k = derived_constants(a.formulation, a.tradeoff, &profile, &joint, nz)?;
    let consts = DecreaseConstants::from_derived(&k, a.c, a.alpha);
    let report = sufficient_decrease_report(&trace, variant, &consts)?;
    let l_star = match a.l_star {
        Some(v) => v,
        None => reference_lagrangian([&trace]).context("empty trace")?,
    };
    let rate = match rate_fit(&trace, l_star, a.tail) {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "rows": trace.rows.len(),
            "violations": report.violations.len(),
            "first_violations": report.violations.iter().take(10).collect::<Vec<_>>(),
            "fraction_ok": report.fraction_ok,
            "certified": report.certified,
            "alg1_deltas": report.alg1,
            "l_star": l_star,
            "rate": rate,
        }))?
    );
    Ok(())
}
