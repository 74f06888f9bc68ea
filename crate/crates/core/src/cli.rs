//! The `edgewise` command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 resource refusal,
//! 3 internal failure. `EDGEWISE_MEM_LIMIT` overrides `--mem-limit`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::oracle::{edge_matrix_by_order_enumeration, MAX_ORACLE_VARS};
use crate::posterior::{edge_posteriors_serial, edge_posteriors_with_stats, estimate_worker_bytes, EdgePosteriorMatrix};
use crate::runtime::{Backend, HypercubeFabric};
use crate::scoring::{load_csv, DataMatrix, PriorSpec};
use crate::synth::{generate, SynthSpec};
use crate::Error;

pub const MEM_LIMIT_ENV: &str = "EDGEWISE_MEM_LIMIT";
pub const DEFAULT_MEM_LIMIT: u64 = 4 << 30;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RESOURCE: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

/// Real minimizer of `k 2^k (n-k)^d` under the approximation used for the
/// worker-count advice: `n (ln 2 + 1) / (ln 2 + 1 + d)`.
pub fn k_star(n: usize, d: usize) -> f64 {
    let c = std::f64::consts::LN_2 + 1.0;
    n as f64 * c / (c + d as f64)
}

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Memory { .. } | Error::Allocation(_) => EXIT_RESOURCE,
        Error::Data(_) | Error::Score(_) | Error::InvalidInput(_) => EXIT_USAGE,
        Error::Fabric(crate::FabricError::TooManyWorkers { .. }) => EXIT_RESOURCE,
        Error::Fabric(_) => EXIT_INTERNAL,
        Error::Stage { source, .. } => exit_code(source),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Sim,
    Par,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Sim => Backend::Simulated,
            BackendArg::Par => Backend::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "edgewise", version, about = "Exact edge posteriors for Bayesian networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior of every directed edge for a CSV data set.
    Posteriors(PosteriorsArgs),
    /// Serial versus hypercube timings on synthetic data, as CSV.
    Bench(BenchArgs),
    /// Compare the hypercube result with brute-force order enumeration.
    Check(CheckArgs),
    /// Suggested hypercube dimension for n variables and indegree d.
    Kstar(KstarArgs),
    /// Write a synthetic data set as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct ResourceArgs {
    /// Per-worker memory limit in bytes (suffixes K, M, G, KiB, MiB, GiB).
    #[arg(long, value_parser = parse_bytes)]
    pub mem_limit: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PosteriorsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short = 'd')]
    pub max_indegree: usize,
    /// Number of workers, a power of two.
    #[arg(long, default_value_t = 1)]
    pub workers: u64,
    #[arg(long, value_enum, default_value_t = BackendArg::Sim)]
    pub backend: BackendArg,
    /// `bdeu:<ess>`, `bdeu` (ess 1) or `k2`.
    #[arg(long, default_value = "bdeu:1", value_parser = parse_score)]
    pub score: PriorSpec,
    /// Output file; standard output when absent or `-`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Also report whether the unfiltered sums reproduce P(D) in every column.
    #[arg(long)]
    pub self_test: bool,
    /// Write per-endpoint fabric counters as JSON.
    #[arg(long)]
    pub counters: Option<PathBuf>,
    #[command(flatten)]
    pub resources: ResourceArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "12")]
    pub n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub d_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub k_list: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = BackendArg::Sim)]
    pub backend: BackendArg,
    #[arg(long, default_value = "bdeu:1", value_parser = parse_score)]
    pub score: PriorSpec,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub resources: ResourceArgs,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// CSV data; a synthetic data set is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, short = 'd', default_value_t = 2)]
    pub max_indegree: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub k_list: Vec<usize>,
    #[arg(long, value_enum, default_value_t = BackendArg::Sim)]
    pub backend: BackendArg,
    #[arg(long, default_value = "bdeu:1", value_parser = parse_score)]
    pub score: PriorSpec,
    /// Relative tolerance on every posterior.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct KstarArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, short = 'd')]
    pub d: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, short = 'd', default_value_t = 2)]
    pub max_indegree: usize,
    #[arg(long, default_value_t = 2)]
    pub arity: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `k2`, `bdeu` or `bdeu:<ess>`.
pub fn parse_score(s: &str) -> Result<PriorSpec, String> {
    let lower = s.to_ascii_lowercase();
    let prior = match lower.split_once(':') {
        None if lower == "k2" => PriorSpec::k2(),
        None if lower == "bdeu" => PriorSpec::bdeu(1.0),
        Some(("bdeu", ess)) => {
            let ess: f64 = ess.parse().map_err(|_| format!("bad equivalent sample size `{ess}`"))?;
            PriorSpec::bdeu(ess)
        }
        _ => return Err(format!("unknown score `{s}`, expected k2 or bdeu:<ess>")),
    };
    prior.validate().map_err(|e| e.to_string())?;
    Ok(prior)
}

/// Byte counts with optional decimal or binary suffix.
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let split = t.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let scale: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" => 1_000,
        "m" | "mb" => 1_000_000,
        "g" | "gb" => 1_000_000_000,
        "kib" => 1 << 10,
        "mib" => 1 << 20,
        "gib" => 1 << 30,
        other => return Err(format!("unknown size unit `{other}`")),
    };
    let value: f64 = num.trim().parse().map_err(|_| format!("bad size `{s}`"))?;
    if value.is_nan() || value < 0.0 {
        return Err(format!("bad size `{s}`"));
    }
    Ok((value * scale as f64) as u64)
}

/// `log2(workers)`, provided `workers` is a power of two.
pub fn workers_to_dim(workers: u64) -> Result<usize, Error> {
    if workers == 0 || !workers.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "workers must be a power of two, got {workers}"
        )));
    }
    Ok(workers.trailing_zeros() as usize)
}

/// The effective memory limit: the environment variable wins over the flag.
pub fn resolve_mem_limit(flag: Option<u64>) -> Result<u64, Error> {
    match std::env::var(MEM_LIMIT_ENV) {
        Ok(v) => parse_bytes(&v).map_err(|e| Error::InvalidInput(format!("{MEM_LIMIT_ENV}: {e}"))),
        Err(_) => Ok(flag.unwrap_or(DEFAULT_MEM_LIMIT)),
    }
}

/// Refuse runs whose per-worker tables would not fit.
pub fn check_memory(n: usize, k: usize, limit: u64) -> Result<u64, Error> {
    let required = estimate_worker_bytes(n, k);
    if required > limit {
        return Err(Error::Memory { required, limit });
    }
    Ok(required)
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    match path {
        Some(p) if p != Path::new("-") => {
            let f = File::create(p).map_err(|e| io_error(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Data(crate::DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_err(e: io::Error) -> Error {
    Error::InvalidInput(format!("cannot write output: {e}"))
}

/// Posterior matrix as TSV: a `# log_evidence=` line, a header of target
/// names, then one row per source with 17 significant digits and `-` on the
/// diagonal.
pub fn write_tsv(matrix: &EdgePosteriorMatrix, names: &[String], out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "# log_evidence={:.16e}", matrix.log_evidence())?;
    write!(out, "from\\to")?;
    for name in names {
        write!(out, "\t{name}")?;
    }
    writeln!(out)?;
    for u in 0..matrix.n() {
        write!(out, "{}", names[u])?;
        for v in 0..matrix.n() {
            if u == v {
                write!(out, "\t-")?;
            } else {
                write!(out, "\t{:.16e}", matrix.get(u, v))?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonEdge<'a> {
    from: &'a str,
    to: &'a str,
    posterior: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    log_evidence: f64,
    edges: Vec<JsonEdge<'a>>,
}

/// Edge list sorted by posterior, highest first; ties by `(from, to)`.
pub fn write_json(matrix: &EdgePosteriorMatrix, names: &[String], out: &mut dyn Write) -> io::Result<()> {
    let n = matrix.n();
    let mut pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .map(|(u, v)| (u, v, matrix.get(u, v)))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let report = JsonReport {
        log_evidence: matrix.log_evidence(),
        edges: pairs
            .iter()
            .map(|&(u, v, p)| JsonEdge {
                from: &names[u],
                to: &names[v],
                posterior: p,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)
}

/// The line printed by `--self-test`.
pub fn self_test_line(matrix: &EdgePosteriorMatrix, tolerance: f64) -> (bool, String) {
    let dev = matrix.self_test_deviation();
    let ok = dev <= tolerance;
    let verdict = if ok { "PASS" } else { "FAIL" };
    (
        ok,
        format!("all-edges trivial-feature posterior = 1.0: {verdict} (max |log ratio| = {dev:.3e})"),
    )
}

/// Largest self-test deviation accepted by `--self-test`.
pub const SELF_TEST_TOLERANCE: f64 = 1e-9;

fn cmd_posteriors(args: &PosteriorsArgs, stdout: &mut dyn Write) -> Result<u8, Error> {
    let k = workers_to_dim(args.workers)?;
    let limit = resolve_mem_limit(args.resources.mem_limit)?;
    let data = load_csv(&args.data)?;
    check_memory(data.vars(), k.min(data.vars()), limit)?;
    let mut fabric = HypercubeFabric::spawn(k, args.backend.into())?;
    let run = edge_posteriors_with_stats(&mut fabric, &data, &args.score, args.max_indegree)?;
    let mut out = open_out(&args.out)?;
    match args.format {
        Format::Tsv => write_tsv(&run.matrix, data.names(), &mut out),
        Format::Json => write_json(&run.matrix, data.names(), &mut out),
    }
    .and_then(|_| out.flush())
    .map_err(write_err)?;
    if let Some(path) = &args.counters {
        let f = File::create(path).map_err(|e| io_error(path, e))?;
        serde_json::to_writer_pretty(f, &fabric.counters_json()).map_err(|e| write_err(e.into()))?;
    }
    if args.self_test {
        let (ok, line) = self_test_line(&run.matrix, SELF_TEST_TOLERANCE);
        writeln!(stdout, "{line}").map_err(write_err)?;
        if !ok {
            return Ok(EXIT_INTERNAL);
        }
    }
    Ok(EXIT_OK)
}

/// One line of the benchmark CSV.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub wall_seconds: f64,
    pub speedup: f64,
    pub efficiency: f64,
    pub peak_bytes_per_worker: u64,
    pub msgs_per_worker: u64,
}

/// Time the serial baseline and the hypercube pipeline for every
/// `(n, d, k)`. Per-worker figures are the maximum over workers.
pub fn run_bench(args: &BenchArgs) -> Result<Vec<BenchRow>, Error> {
    let limit = resolve_mem_limit(args.resources.mem_limit)?;
    let mut rows = Vec::new();
    for &n in &args.n_list {
        for &d in &args.d_list {
            for &k in &args.k_list {
                if k > n {
                    return Err(Error::InvalidInput(format!("k = {k} exceeds n = {n}")));
                }
                check_memory(n, k, limit)?;
            }
            let data = generate(&SynthSpec {
                vars: n,
                samples: args.samples,
                max_indegree: d,
                arity: 2,
                seed: args.seed,
            })?
            .data;
            let start = Instant::now();
            edge_posteriors_serial(&data, &args.score, d)?;
            let serial = start.elapsed().as_secs_f64();
            for &k in &args.k_list {
                let mut fabric = HypercubeFabric::spawn(k, args.backend.into())?;
                let start = Instant::now();
                edge_posteriors_with_stats(&mut fabric, &data, &args.score, d)?;
                let wall = start.elapsed().as_secs_f64();
                let counters = fabric.counters();
                rows.push(BenchRow {
                    n,
                    d,
                    k,
                    wall_seconds: wall,
                    speedup: serial / wall,
                    efficiency: serial / ((1u64 << k) as f64 * wall),
                    peak_bytes_per_worker: counters.iter().map(|c| c.peak_table_bytes).max().unwrap_or(0),
                    msgs_per_worker: counters.iter().map(|c| c.sent_msgs).max().unwrap_or(0),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], out: &mut dyn Write) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::InvalidInput(format!("cannot write csv: {e}")))?;
    }
    w.flush().map_err(write_err)
}

fn cmd_bench(args: &BenchArgs) -> Result<u8, Error> {
    let rows = run_bench(args)?;
    let mut out = open_out(&args.out)?;
    write_bench_csv(&rows, &mut out)?;
    Ok(EXIT_OK)
}

fn max_rel_error(a: &EdgePosteriorMatrix, log_joint: &[f64], log_evidence: f64) -> f64 {
    let n = a.n();
    let mut worst = (a.log_evidence() - log_evidence).abs().exp_m1();
    for u in 0..n {
        for v in (0..n).filter(|&v| v != u) {
            let want = (log_joint[u * n + v] - log_evidence).exp();
            let got = a.get(u, v);
            worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        }
    }
    worst
}

fn cmd_check(args: &CheckArgs, stdout: &mut dyn Write) -> Result<u8, Error> {
    let data: DataMatrix = match &args.data {
        Some(path) => load_csv(path)?,
        None => {
            generate(&SynthSpec {
                vars: args.n,
                samples: args.samples,
                max_indegree: args.max_indegree,
                arity: 2,
                seed: args.seed,
            })?
            .data
        }
    };
    if data.vars() > MAX_ORACLE_VARS {
        return Err(Error::InvalidInput(format!(
            "check enumerates all orders and supports at most {MAX_ORACLE_VARS} variables"
        )));
    }
    let oracle = edge_matrix_by_order_enumeration(&data, &args.score, args.max_indegree)?;
    let mut all_ok = true;
    for &k in &args.k_list {
        let mut fabric = HypercubeFabric::spawn(k, args.backend.into())?;
        let run = edge_posteriors_with_stats(&mut fabric, &data, &args.score, args.max_indegree)?;
        let err = max_rel_error(&run.matrix, &oracle.log_joint, oracle.log_evidence);
        let ok = err <= args.tolerance && fabric.locality_violations() == 0;
        all_ok &= ok;
        writeln!(
            stdout,
            "k={k}: max relative error {err:.3e}, non-neighbor messages {}: {}",
            fabric.locality_violations(),
            if ok { "PASS" } else { "FAIL" }
        )
        .map_err(write_err)?;
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_INTERNAL })
}

fn cmd_kstar(args: &KstarArgs, stdout: &mut dyn Write) -> Result<u8, Error> {
    if args.n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let k = k_star(args.n, args.d);
    writeln!(stdout, "k* = {k:.4} (use k = {})", k.round()).map_err(write_err)?;
    Ok(EXIT_OK)
}

fn cmd_generate(args: &GenerateArgs) -> Result<u8, Error> {
    if args.arity < 2 {
        return Err(Error::InvalidInput("arity must be at least 2".into()));
    }
    let net = generate(&SynthSpec {
        vars: args.n,
        samples: args.samples,
        max_indegree: args.max_indegree,
        arity: args.arity,
        seed: args.seed,
    })?;
    let out = open_out(&args.out)?;
    let mut w = csv::Writer::from_writer(out);
    let data = &net.data;
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("cannot write csv: {e}"));
    w.write_record(data.names()).map_err(csv_err)?;
    for row in 0..data.samples() {
        w.write_record((0..data.vars()).map(|c| data.column(c)[row].to_string()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(write_err)?;
    Ok(EXIT_OK)
}

/// Parse `args` and run the command. Diagnostics go to `stderr`; reports
/// that are not written to a file go to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Posteriors(a) => cmd_posteriors(a, stdout),
        Command::Bench(a) => cmd_bench(a),
        Command::Check(a) => cmd_check(a, stdout),
        Command::Kstar(a) => cmd_kstar(a, stdout),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_star_formula() {
        assert_eq!(k_star(10, 0), 10.0);
        assert!((k_star(25, 4) - 7.435).abs() < 1e-3);
        assert!((k_star(23, 4) - 6.840).abs() < 1e-3);
    }

    #[test]
    fn parses_scores_and_sizes() {
        assert_eq!(parse_score("k2").unwrap(), PriorSpec::k2());
        assert_eq!(parse_score("bdeu:2.5").unwrap(), PriorSpec::bdeu(2.5));
        assert!(parse_score("bdeu:0").is_err());
        assert!(parse_score("bic").is_err());
        assert_eq!(parse_bytes("4GiB").unwrap(), 4 << 30);
        assert_eq!(parse_bytes("1500").unwrap(), 1500);
        assert_eq!(parse_bytes("2 M").unwrap(), 2_000_000);
        assert!(parse_bytes("lots").is_err());
    }

    #[test]
    fn workers_must_be_powers_of_two() {
        assert_eq!(workers_to_dim(1).unwrap(), 0);
        assert_eq!(workers_to_dim(8).unwrap(), 3);
        let err = workers_to_dim(3).unwrap_err();
        assert!(err.to_string().contains("workers must be a power of two"));
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn memory_refusal_maps_to_exit_two() {
        let err = check_memory(30, 0, 1 << 30).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_RESOURCE);
        assert!(check_memory(10, 0, 1 << 30).is_ok());
    }
}
