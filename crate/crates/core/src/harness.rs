//! Data ingestion, sweeps and CSV output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drs::{self, RunStatus, StopRule, Trace, TraceRow, Variant};
use crate::error::{Error, Result};
use crate::formulations::{Formulation, SmoothnessProfile};
use crate::inner::InnerConfig;
use crate::prob::{build_joint, JointPmf};

/// The 3×3 synthetic channel `p(y|x)` used throughout the examples, rows
/// indexed by `y` and columns by `x`.
pub const BENCHMARK_CHANNEL: [[f64; 3]; 3] =
    [[0.90, 0.08, 0.40], [0.025, 0.82, 0.05], [0.075, 0.10, 0.55]];

/// Bundled copy of the same joint as a CSV table.
pub const BENCHMARK_FIXTURE: &str = include_str!("../fixtures/benchmark_joint.csv");

/// The synthetic channel above with a uniform `p(x)`.
pub fn benchmark_joint() -> JointPmf {
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|x| (0..3).map(|y| BENCHMARK_CHANNEL[y][x] / 3.0).collect())
        .collect();
    build_joint(&rows).expect("fixed table is a valid joint")
}

fn parse_joint_table(text: &str, origin: &str) -> Result<JointPmf> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    location: format!("{origin}:{}", i + 1),
                    message: e.to_string(),
                })
            }
        };
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                return Err(Error::Parse {
                    location: format!("{origin}:{}", i + 1),
                    message: format!("expected {} fields, found {}", first.len(), vals.len()),
                });
            }
        }
        if let Some(j) = vals.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{origin}: entry at row {}, column {} is {}",
                rows.len(),
                j,
                vals[j]
            )));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{origin}: no numeric rows")));
    }
    build_joint(&rows)
}

/// Reads an `N_x × N_y` table of nonnegative weights. A first row that
/// does not parse as numbers is taken as a header.
pub fn ingest_joint_csv(path: impl AsRef<Path>) -> Result<JointPmf> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_joint_table(&text, &path.display().to_string())
}

/// Tabulates categorical records. `Y` ranges over the observed value
/// combinations of `y_columns` and `X` over those of `x_columns` (all
/// remaining columns when `None`); each alphabet is the product of the
/// sorted per-column value sets. `smoothing` is added to every cell.
pub fn ingest_records<R: Read>(
    reader: R,
    y_columns: &[String],
    x_columns: Option<&[String]>,
    smoothing: f64,
) -> Result<JointPmf> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::Config(format!(
            "smoothing = {smoothing} must be >= 0"
        )));
    }
    if y_columns.is_empty() {
        return Err(Error::Config("no Y columns selected".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &String| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column {name:?}")))
    };
    let y_idx: Vec<usize> = y_columns.iter().map(find).collect::<Result<_>>()?;
    let x_idx: Vec<usize> = match x_columns {
        Some(cols) => cols.iter().map(find).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|i| !y_idx.contains(i)).collect(),
    };
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::InvalidInput("no records".into()));
    }
    let alphabet = |col: usize| -> Vec<String> {
        let set: BTreeSet<&str> = records.iter().map(|r| r.get(col).unwrap_or("")).collect();
        set.into_iter().map(str::to_owned).collect()
    };
    let x_alpha: Vec<Vec<String>> = x_idx.iter().map(|&c| alphabet(c)).collect();
    let y_alpha: Vec<Vec<String>> = y_idx.iter().map(|&c| alphabet(c)).collect();
    let index = |rec: &csv::StringRecord, cols: &[usize], alpha: &[Vec<String>]| -> usize {
        cols.iter().zip(alpha).fold(0, |acc, (&c, a)| {
            let v = rec.get(c).unwrap_or("");
            acc * a.len() + a.iter().position(|s| s == v).expect("value seen")
        })
    };
    let nx: usize = x_alpha.iter().map(Vec::len).product();
    let ny: usize = y_alpha.iter().map(Vec::len).product();
    let mut counts = vec![smoothing; nx * ny];
    for rec in &records {
        let x = index(rec, &x_idx, &x_alpha);
        let y = index(rec, &y_idx, &y_alpha);
        counts[x * ny + y] += 1.0;
    }
    JointPmf::from_flat(counts, nx, ny)
}

pub fn ingest_records_csv(
    path: impl AsRef<Path>,
    y_columns: &[String],
    x_columns: Option<&[String]>,
    smoothing: f64,
) -> Result<JointPmf> {
    let f = fs::File::open(path)?;
    ingest_records(f, y_columns, x_columns, smoothing)
}

/// Column names of [`synthetic_binary_records`].
pub const SYNTHETIC_COLUMNS: [&str; 6] = [
    "anaemia",
    "diabetes",
    "high_blood_pressure",
    "sex",
    "smoking",
    "DEATH_EVENT",
];

/// Stand-in for a clinical table with six binary attributes. Smoking
/// depends on sex and the outcome on the other attributes, so the two
/// `Y` columns `sex` and `DEATH_EVENT` share information with the rest.
pub fn synthetic_binary_records(n: usize, seed: u64) -> Vec<[u8; 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bit = |p: f64, rng: &mut ChaCha8Rng| u8::from(rng.random::<f64>() < p);
    (0..n)
        .map(|_| {
            let anaemia = bit(0.43, &mut rng);
            let diabetes = bit(0.42, &mut rng);
            let hbp = bit(0.35, &mut rng);
            let sex = bit(0.65, &mut rng);
            let smoking = bit(if sex == 1 { 0.47 } else { 0.04 }, &mut rng);
            let risk = 0.15
                + 0.12 * f64::from(anaemia)
                + 0.08 * f64::from(diabetes)
                + 0.18 * f64::from(hbp)
                + 0.05 * f64::from(smoking);
            let death = bit(risk, &mut rng);
            [anaemia, diabetes, hbp, sex, smoking, death]
        })
        .collect()
}

pub fn write_binary_records<W: Write>(out: W, records: &[[u8; 6]]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SYNTHETIC_COLUMNS)?;
    for r in records {
        w.write_record(r.iter().map(u8::to_string))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSource {
    /// The bundled 3×3 synthetic joint.
    Benchmark,
    JointCsv {
        path: PathBuf,
    },
    RecordsCsv {
        path: PathBuf,
        y_columns: Vec<String>,
        #[serde(default)]
        x_columns: Option<Vec<String>>,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    Synthetic {
        records: usize,
        seed: u64,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
}

fn default_smoothing() -> f64 {
    1e-3
}

impl InputSource {
    pub fn load(&self) -> Result<JointPmf> {
        match self {
            InputSource::Benchmark => Ok(benchmark_joint()),
            InputSource::JointCsv { path } => ingest_joint_csv(path),
            InputSource::RecordsCsv {
                path,
                y_columns,
                x_columns,
                smoothing,
            } => ingest_records_csv(path, y_columns, x_columns.as_deref(), *smoothing),
            InputSource::Synthetic {
                records,
                seed,
                smoothing,
            } => {
                let mut buf = Vec::new();
                write_binary_records(&mut buf, &synthetic_binary_records(*records, *seed))?;
                let y = ["sex".to_owned(), "DEATH_EVENT".to_owned()];
                ingest_records(buf.as_slice(), &y, None, *smoothing)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub formulation: Formulation,
    /// Defaults to the formulation's own variant.
    #[serde(default)]
    pub variant: Option<Variant>,
    pub alphas: Vec<f64>,
    pub cs: Vec<f64>,
    pub tradeoffs: Vec<f64>,
    pub n_z: usize,
    pub restarts: usize,
    pub seed: u64,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub inner: InnerConfig,
    #[serde(default)]
    pub profile: SmoothnessProfile,
    #[serde(default = "default_input")]
    pub input: InputSource,
    /// Keep per-run traces in the output.
    #[serde(default)]
    pub traces: bool,
}

fn default_input() -> InputSource {
    InputSource::Benchmark
}

impl SweepConfig {
    pub fn new(formulation: Formulation, tradeoffs: Vec<f64>, cs: Vec<f64>) -> Self {
        SweepConfig {
            formulation,
            variant: None,
            alphas: vec![1.0],
            cs,
            tradeoffs,
            n_z: 3,
            restarts: 1,
            seed: 0,
            stop: StopRule::default(),
            inner: InnerConfig::default(),
            profile: SmoothnessProfile::default(),
            input: InputSource::Benchmark,
            traces: false,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant.unwrap_or(self.formulation.default_variant())
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.cs.is_empty() || self.tradeoffs.is_empty() {
            return Err(Error::Config(
                "alpha, c and trade-off lists must be nonempty".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if !(self.stop.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol = {} must be > 0",
                self.stop.tol
            )));
        }
        self.inner.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seed of restart `r` under `master`: the first word of ChaCha8 stream `r`.
/// Restarts share their seed across the other sweep axes, so every
/// `(tradeoff, c, alpha)` cell starts from the same initial points.
pub fn restart_seed(master: u64, restart: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(restart);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneRecord {
    pub formulation: Formulation,
    pub variant: Variant,
    pub alpha: f64,
    pub c: f64,
    pub tradeoff: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub iters: usize,
    #[serde(rename = "L_c_bits")]
    pub l_c: f64,
    #[serde(rename = "I_xz_bits")]
    pub i_xz: f64,
    #[serde(rename = "I_yz_bits")]
    pub i_yz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub record: PlaneRecord,
    pub trace: Option<Trace>,
}

/// Runs a single configuration from the initial point drawn with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_one(
    formulation: Formulation,
    variant: Variant,
    tradeoff: f64,
    c: f64,
    alpha: f64,
    joint: &JointPmf,
    n_z: usize,
    seed: u64,
    stop: &StopRule,
    inner: &InnerConfig,
) -> Result<drs::RunOutput> {
    let problem = formulation
        .build(tradeoff, joint, n_z)?
        .with_penalty(c)?
        .with_alpha(alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = drs::random_state(&problem, &mut rng)?;
    drs::run(&problem, variant, init, stop, inner)
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRun>> {
    cfg.validate()?;
    let joint = cfg.input.load()?;
    sweep_joint(cfg, &joint)
}

/// As [`sweep`] with the joint already loaded.
pub fn sweep_joint(cfg: &SweepConfig, joint: &JointPmf) -> Result<Vec<SweepRun>> {
    cfg.validate()?;
    let variant = cfg.variant();
    // Configuration errors surface before any work is scheduled.
    for &t in &cfg.tradeoffs {
        let pr = cfg.formulation.build(t, joint, cfg.n_z)?;
        for &c in &cfg.cs {
            for &a in &cfg.alphas {
                let configured = pr.clone().with_penalty(c)?.with_alpha(a)?;
                drs::check_run_config(&configured, variant, &cfg.stop)?;
                crate::formulations::warn_if_below_threshold(
                    cfg.formulation,
                    t,
                    a,
                    c,
                    &cfg.profile,
                    joint,
                    cfg.n_z,
                );
            }
        }
    }
    let mut jobs = Vec::new();
    for &t in &cfg.tradeoffs {
        for &c in &cfg.cs {
            for &a in &cfg.alphas {
                for r in 0..cfg.restarts {
                    jobs.push((t, c, a, restart_seed(cfg.seed, r as u64)));
                }
            }
        }
    }
    let runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|&(t, c, a, seed)| {
            let out = run_one(
                cfg.formulation,
                variant,
                t,
                c,
                a,
                joint,
                cfg.n_z,
                seed,
                &cfg.stop,
                &cfg.inner,
            );
            let mut record = PlaneRecord {
                formulation: cfg.formulation,
                variant,
                alpha: a,
                c,
                tradeoff: t,
                seed,
                status: RunStatus::NumericalFailure,
                iters: 0,
                l_c: f64::NAN,
                i_xz: f64::NAN,
                i_yz: f64::NAN,
            };
            match out {
                Ok(o) => {
                    let last = o.trace.last();
                    record.status = o.trace.status;
                    record.iters = last.k;
                    record.l_c = last.l_c;
                    record.i_xz = last.i_xz;
                    record.i_yz = last.i_yz;
                    SweepRun {
                        record,
                        trace: cfg.traces.then_some(o.trace),
                    }
                }
                Err(e) => {
                    log::warn!("run t={t} c={c} alpha={a} seed={seed} failed: {e}");
                    SweepRun {
                        record,
                        trace: None,
                    }
                }
            }
        })
        .collect();
    Ok(runs)
}

/// Mean over restarts of one `(tradeoff, c, alpha)` cell. The `all_*`
/// means include every run, the `conv_*` means only converged ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneAverage {
    pub formulation: Formulation,
    pub variant: Variant,
    pub alpha: f64,
    pub c: f64,
    pub tradeoff: f64,
    pub runs: usize,
    pub converged: usize,
    #[serde(rename = "all_I_xz_bits")]
    pub all_i_xz_bits: f64,
    #[serde(rename = "all_I_yz_bits")]
    pub all_i_yz_bits: f64,
    #[serde(rename = "all_L_c_bits")]
    pub all_l_c_bits: f64,
    #[serde(rename = "conv_I_xz_bits")]
    pub conv_i_xz_bits: f64,
    #[serde(rename = "conv_I_yz_bits")]
    pub conv_i_yz_bits: f64,
    #[serde(rename = "conv_L_c_bits")]
    pub conv_l_c_bits: f64,
    #[serde(rename = "best_L_c_bits")]
    pub best_l_c_bits: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn average_plane(records: &[PlaneRecord]) -> Vec<PlaneAverage> {
    let mut groups: BTreeMap<(usize, usize, usize), Vec<&PlaneRecord>> = BTreeMap::new();
    // Keys keep first-seen order of each axis value.
    let mut axes: [Vec<u64>; 3] = Default::default();
    let mut slot = |axis: usize, v: f64| {
        let bits = v.to_bits();
        match axes[axis].iter().position(|&b| b == bits) {
            Some(i) => i,
            None => {
                axes[axis].push(bits);
                axes[axis].len() - 1
            }
        }
    };
    for r in records {
        let key = (slot(0, r.tradeoff), slot(1, r.c), slot(2, r.alpha));
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let conv: Vec<&&PlaneRecord> = g
                .iter()
                .filter(|r| r.status == RunStatus::Converged)
                .collect();
            let f = g[0];
            PlaneAverage {
                formulation: f.formulation,
                variant: f.variant,
                alpha: f.alpha,
                c: f.c,
                tradeoff: f.tradeoff,
                runs: g.len(),
                converged: conv.len(),
                all_i_xz_bits: mean(g.iter().map(|r| r.i_xz)),
                all_i_yz_bits: mean(g.iter().map(|r| r.i_yz)),
                all_l_c_bits: mean(g.iter().map(|r| r.l_c)),
                conv_i_xz_bits: mean(conv.iter().map(|r| r.i_xz)),
                conv_i_yz_bits: mean(conv.iter().map(|r| r.i_yz)),
                conv_l_c_bits: mean(conv.iter().map(|r| r.l_c)),
                best_l_c_bits: g
                    .iter()
                    .map(|r| r.l_c)
                    .filter(|v| v.is_finite())
                    .fold(f64::NAN, f64::min),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(input);
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn write_trace_csv<W: Write>(out: W, trace: &Trace) -> Result<()> {
    write_csv(out, &trace.rows)
}

/// Reads a trace file. The status is not stored in the file and comes
/// back as `MaxIters`.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Trace> {
    let rows: Vec<TraceRow> = read_csv(input)?;
    if rows.is_empty() {
        return Err(Error::InvalidInput("trace file has no rows".into()));
    }
    Ok(Trace {
        rows,
        status: RunStatus::MaxIters,
    })
}

pub fn trace_file_name(r: &PlaneRecord) -> String {
    format!(
        "trace_{}_{}_t{}_c{}_a{}_s{}.csv",
        r.formulation, r.variant, r.tradeoff, r.c, r.alpha, r.seed
    )
}

/// Writes `plane.csv`, `plane_avg.csv` and, when traces were kept, one
/// file per run under `traces/`.
pub fn write_sweep(dir: impl AsRef<Path>, runs: &[SweepRun]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let records: Vec<PlaneRecord> = runs.iter().map(|r| r.record.clone()).collect();
    write_csv(fs::File::create(dir.join("plane.csv"))?, &records)?;
    write_csv(
        fs::File::create(dir.join("plane_avg.csv"))?,
        &average_plane(&records),
    )?;
    if runs.iter().any(|r| r.trace.is_some()) {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir)?;
        for r in runs {
            if let Some(t) = &r.trace {
                write_trace_csv(fs::File::create(tdir.join(trace_file_name(&r.record)))?, t)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fixture_matches_builtin_joint() {
        let a = parse_joint_table(BENCHMARK_FIXTURE, "fixture").unwrap();
        let b = benchmark_joint();
        for (x, y) in a.table().iter().zip(b.table()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
        for v in a.p_x().as_slice() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn all_ones_table_is_uniform() {
        let j = parse_joint_table("a,b\n1,1\n1,1\n", "t").unwrap();
        assert!(j.table().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn table_errors() {
        let e = parse_joint_table("1,2\n3,-1\n", "t")
            .unwrap_err()
            .to_string();
        assert!(e.contains("row 1") && e.contains("column 1"), "{e}");
        assert!(parse_joint_table("1,2\n3\n", "t").is_err());
        assert!(parse_joint_table("", "t").is_err());
        assert!(parse_joint_table("x,y\n", "t").is_err());
    }

    #[test]
    fn records_alphabet_sizes() {
        let mut buf = Vec::new();
        write_binary_records(&mut buf, &synthetic_binary_records(299, 7)).unwrap();
        let y = ["sex".to_owned(), "DEATH_EVENT".to_owned()];
        let j = ingest_records(buf.as_slice(), &y, None, 1e-3).unwrap();
        assert_eq!((j.n_x(), j.n_y()), (16, 4));
        assert!(j.table().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn single_record_without_smoothing() {
        let y = ["b".to_owned()];
        let j = ingest_records("a,b\n1,0\n".as_bytes(), &y, None, 0.0).unwrap();
        assert_eq!(j.table(), &[1.0]);
    }

    #[test]
    fn record_errors() {
        let y = ["zz".to_owned()];
        assert!(ingest_records("a,b\n1,0\n".as_bytes(), &y, None, 1e-3).is_err());
        let y = ["b".to_owned()];
        assert!(ingest_records("a,b\n".as_bytes(), &y, None, 1e-3).is_err());
    }

    #[test]
    fn restart_seeds_are_distinct_and_stable() {
        let s: Vec<u64> = (0..100).map(|r| restart_seed(42, r)).collect();
        let set: BTreeSet<u64> = s.iter().copied().collect();
        assert_eq!(set.len(), 100);
        assert_eq!(s[3], restart_seed(42, 3));
        assert_ne!(restart_seed(41, 3), s[3]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SweepConfig::new(Formulation::IbTh, vec![0.3], vec![4.0]);
        assert!(cfg.validate().is_ok());
        cfg.restarts = 0;
        assert!(cfg.validate().is_err());
        cfg.restarts = 1;
        cfg.cs.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = SweepConfig::new(Formulation::Pf, vec![2.0, 3.0], vec![50.0]);
        cfg.input = InputSource::Synthetic {
            records: 100,
            seed: 3,
            smoothing: 1e-3,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SweepConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn averages_split_by_status() {
        let base = PlaneRecord {
            formulation: Formulation::IbTh,
            variant: Variant::Alg1,
            alpha: 1.0,
            c: 2.0,
            tradeoff: 0.3,
            seed: 0,
            status: RunStatus::Converged,
            iters: 10,
            l_c: -0.2,
            i_xz: 1.0,
            i_yz: 0.5,
        };
        let other = PlaneRecord {
            status: RunStatus::MaxIters,
            l_c: 0.0,
            i_xz: 0.0,
            i_yz: 0.0,
            ..base.clone()
        };
        let avg = average_plane(&[base, other]);
        assert_eq!(avg.len(), 1);
        assert_eq!((avg[0].runs, avg[0].converged), (2, 1));
        assert_eq!(avg[0].all_i_xz_bits, 0.5);
        assert_eq!(avg[0].conv_i_xz_bits, 1.0);
        assert_eq!(avg[0].best_l_c_bits, -0.2);
    }
}
