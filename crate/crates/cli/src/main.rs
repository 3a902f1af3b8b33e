use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use grasscode::analysis::{ami_lower_bound, kappa, lambda_star, snr_crossover, union_bound_conventional, union_bound_lenient, NoiseModel};
use grasscode::baselines::{expmap_constellation, ExpMapConfig};
use grasscode::designer::{design_mcd_manopt, design_mcpd_manopt, design_rank_deficient_reference, design_sparse, DesignConfig, DesignReport};
use grasscode::io::{
    load_constellation, read_json, save_constellation, to_sparse_store, write_bounds_csv, write_json, write_results_csv, BoundsRow, StorageFormat,
};
use grasscode::schubert::{allocate_patterns, count_patterns, enumerate_patterns, materialize, ParamSet};
use grasscode::simulator::{estimate_ami, estimate_ser, transmit, ChannelRealization, DenseDetector, OpCount, SimConfig, SparseDetector};
use grasscode::{rng, Constellation, Error, C64};

const SEED_ENV: &str = "GRASSCODE_SEED";
const PATTERN_TABLE_LIMIT: u64 = 10_000;

#[derive(Parser)]
#[command(name = "grasscode", version, about = "Design and evaluate sparse Grassmannian constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count and list the sparsity patterns of (T, M, s).
    Patterns(PatternsArgs),
    /// Design a constellation and write it with its report.
    Design(DesignArgs),
    /// Simulated symbol error rate over an SNR sweep.
    Ser(SimArgs),
    /// Simulated noncoherent AMI over an SNR sweep.
    Ami(SimArgs),
    /// Union bound, AMI lower bound and κ(λ★) over an SNR sweep.
    Bounds(BoundsArgs),
    /// Dense vs sparse GLRT detection cost.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PatternsArgs {
    #[arg(long)]
    t: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    s: usize,
    /// Write the pattern table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    Sparse,
    Mcd,
    Mcpd,
    Expmap,
    RankDeficient,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Dense,
    Ellpack,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    m: usize,
    /// Nonzeros per codeword (sparse only); defaults to T.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    card: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// DesignConfig JSON; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Allow more codewords than sparsity patterns by reusing rank-safe ones.
    #[arg(long)]
    allow_reuse: bool,
    /// Storage format; ELLPACK for sparse and rank-deficient designs, dense otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    constellation: PathBuf,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Vec<f64>,
    /// Frame cap per SNR (SER) or Monte Carlo samples per SNR (AMI).
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    target_errors: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Receive antennas; defaults to M.
    #[arg(long)]
    n: Option<usize>,
    /// SimConfig JSON; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    constellation: PathBuf,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    snr: Vec<f64>,
    /// Receive antennas; defaults to M.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 6)]
    t: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3])]
    m: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    card: usize,
    #[arg(long, default_value_t = 20_000)]
    frames: usize,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the measurements as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Infeasible(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Infeasible(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) => Failure::Usage(e.to_string()),
            Error::Infeasible(_) | Error::Unsupported(_) => Failure::Infeasible(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Value,
    seed: Option<u64>,
    version: &'static str,
    wall_time_s: f64,
    unix_time_s: u64,
    outputs: Vec<String>,
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn write_manifest(out: &Path, command: &str, config: Value, seed: Option<u64>, started: Instant, outputs: &[&Path]) -> CmdResult {
    let manifest = RunManifest {
        command,
        config,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: started.elapsed().as_secs_f64(),
        unix_time_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(&manifest, manifest_path(out)).map_err(runtime)
}

/// Flag, then config file, then `GRASSCODE_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> std::result::Result<u64, Failure> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Parses a JSON config into `T`, also returning the raw value so the caller
/// can tell which keys were actually present.
fn load_config<T: for<'de> serde::Deserialize<'de> + Default>(path: Option<&Path>) -> std::result::Result<(T, Value), Failure> {
    match path {
        None => Ok((T::default(), Value::Null)),
        Some(p) => {
            let raw: Value = read_json(p).map_err(|e| Failure::Usage(format!("config {}: {e}", p.display())))?;
            let cfg = serde_json::from_value(raw.clone()).map_err(|e| Failure::Usage(format!("config {}: {e}", p.display())))?;
            Ok((cfg, raw))
        }
    }
}

fn load_for_run(path: &Path) -> std::result::Result<Constellation, Failure> {
    load_constellation(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_patterns(a: &PatternsArgs) -> CmdResult {
    let started = Instant::now();
    if a.m == 0 || a.t <= a.m || a.s < a.m || a.s > a.t {
        return Err(Failure::Usage(format!("need 1 <= M < T and M <= s <= T, got T={}, M={}, s={}", a.t, a.m, a.s)));
    }
    let count = count_patterns(a.t, a.m, a.s)?;
    println!("n({},{},{}) = {count}", a.t, a.m, a.s);
    if count > PATTERN_TABLE_LIMIT {
        println!("(table omitted above {PATTERN_TABLE_LIMIT} patterns)");
        return Ok(());
    }
    let records: Vec<_> = enumerate_patterns(a.t, a.m, a.s)?.iter().map(|p| p.record()).collect();
    println!("{:>5}  {:<12}  {:<32}  rank-safe", "index", "pivots", "supports");
    for (k, r) in records.iter().enumerate() {
        let pivots = r.pivots.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let supports = r
            .supports
            .iter()
            .map(|s| format!("{{{}}}", s.iter().map(usize::to_string).collect::<Vec<_>>().join(",")))
            .collect::<Vec<_>>()
            .join(" ");
        println!("{:>5}  {:<12}  {:<32}  {}", k + 1, pivots, supports, if r.rank_safe { "yes" } else { "no" });
    }
    let safe = records.iter().filter(|r| r.rank_safe).count();
    println!("{safe} rank-safe");
    if let Some(out) = &a.json {
        let doc = json!({ "T": a.t, "M": a.m, "s": a.s, "count": count, "patterns": records });
        write_json(&doc, out).map_err(runtime)?;
        write_manifest(out, "patterns", json!({ "t": a.t, "m": a.m, "s": a.s }), None, started, &[out])?;
    }
    Ok(())
}

fn cmd_design(a: &DesignArgs) -> CmdResult {
    let started = Instant::now();
    let (mut cfg, raw): (DesignConfig, Value) = load_config(a.config.as_deref())?;
    cfg.seed = resolve_seed(a.seed, raw.get("seed").and_then(Value::as_u64))?;
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(it) = a.max_iterations {
        cfg.max_iterations = it;
    }
    cfg.allow_pattern_reuse = a.allow_reuse || raw.get("allow_pattern_reuse").and_then(Value::as_bool).unwrap_or(false);
    cfg.validate()?;
    let s = a.s.unwrap_or(a.t);

    let (mut c, report): (Constellation, Option<DesignReport>) = match a.method {
        Method::Sparse => {
            let total = count_patterns(a.t, a.m, s)?;
            if a.card as u64 > total {
                if !cfg.allow_pattern_reuse {
                    return Err(Failure::Infeasible(format!(
                        "{} codewords requested but (T,M,s)=({},{},{s}) has only {total} sparsity patterns; pass --allow-reuse to reuse rank-safe patterns",
                        a.card, a.t, a.m
                    )));
                }
                eprintln!("warning: {} of {} codewords reuse rank-safe patterns", a.card as u64 - total, a.card);
            }
            let (c, r) = design_sparse(a.t, a.m, s, a.card, &cfg)?;
            (c, Some(r))
        }
        Method::Mcd => design_mcd_manopt(a.t, a.m, a.card, &cfg).map(|(c, r)| (c, Some(r)))?,
        Method::Mcpd => design_mcpd_manopt(a.t, a.m, a.card, &cfg).map(|(c, r)| (c, Some(r)))?,
        Method::RankDeficient => design_rank_deficient_reference(a.t, a.m, a.card, &cfg).map(|(c, r)| (c, Some(r)))?,
        Method::Expmap => (expmap_constellation(a.t, a.m, a.card, &ExpMapConfig::default())?, None),
    };

    let format = match a.format {
        Some(FormatArg::Dense) => StorageFormat::Dense,
        Some(FormatArg::Ellpack) => StorageFormat::Ellpack,
        None if matches!(a.method, Method::Sparse | Method::RankDeficient) => StorageFormat::Ellpack,
        None => StorageFormat::Dense,
    };
    let manifest = manifest_path(&a.out);
    if let Value::Object(map) = &mut c.provenance {
        map.insert("manifest".into(), json!(manifest.display().to_string()));
    } else {
        c.provenance = json!({ "method": a.method, "manifest": manifest.display().to_string() });
    }
    save_constellation(&c, &a.out, format)?;

    let (mcd, mcpd) = match &report {
        Some(r) => (r.mcd, r.mcpd),
        None => (
            grasscode::grassmann::min_pairwise(&c, grasscode::DistanceMetric::Chordal)?.0,
            grasscode::grassmann::min_pairwise(&c, grasscode::DistanceMetric::ChordalProduct)?.0,
        ),
    };
    let report_path = a.out.with_extension("report.json");
    let report_doc = match &report {
        Some(r) => serde_json::to_value(r).map_err(runtime)?,
        None => json!({ "method": "expmap", "mcd": mcd, "mcpd": mcpd }),
    };
    write_json(&report_doc, &report_path).map_err(runtime)?;
    let name = a.method.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    println!("method {name} T={} M={} |X|={} format {format:?}", a.t, a.m, a.card);
    println!("MCD  {mcd:.6}");
    println!("MCPD {mcpd:.6}");
    if let Some(r) = &report {
        if let Some(alloc) = &r.allocation {
            println!("allocation {alloc}");
        }
        if !r.rank_deficient_pairs.is_empty() {
            println!("{} rank-deficient pairs", r.rank_deficient_pairs.len());
        }
    }
    let config = json!({ "method": a.method, "t": a.t, "m": a.m, "s": s, "card": a.card, "design": cfg });
    write_manifest(&a.out, "design", config, Some(cfg.seed), started, &[&a.out, &report_path])
}

fn sim_config(a: &SimArgs, c: &Constellation, ser: bool) -> std::result::Result<SimConfig, Failure> {
    let (mut cfg, raw): (SimConfig, Value) = load_config(a.config.as_deref())?;
    if !a.snr.is_empty() {
        cfg.snr_db = a.snr.clone();
    } else if raw.get("snr_db").is_none() {
        return Err(Failure::Usage("no SNR values given (--snr)".into()));
    }
    if cfg.snr_db.is_empty() {
        return Err(Failure::Usage("SNR list is empty".into()));
    }
    cfg.seed = resolve_seed(a.seed, raw.get("seed").and_then(Value::as_u64))?;
    if let Some(f) = a.frames {
        if ser {
            cfg.max_frames = f;
        } else {
            cfg.mc_samples = f;
        }
    }
    if let Some(e) = a.target_errors {
        cfg.target_error_count = e;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.receive_antennas = a.n.or_else(|| raw.get("receive_antennas").and_then(Value::as_u64).map(|v| v as usize)).unwrap_or(c.m_antennas());
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sim(a: &SimArgs, ser: bool) -> CmdResult {
    let started = Instant::now();
    let c = load_for_run(&a.constellation)?;
    let cfg = sim_config(a, &c, ser)?;
    let result = if ser { estimate_ser(&c, &cfg)? } else { estimate_ami(&c, &cfg)? };
    println!("{:>8}  {:>12}  {:>10}  {:>12}", "snr_db", result.metric.name(), "±95%", "frames");
    for p in &result.points {
        println!("{:>8.2}  {:>12.4e}  {:>10.2e}  {:>12}", p.snr_db, p.value, p.half_width, p.frames);
    }
    write_results_csv(&result.rows(), &a.out).map_err(runtime)?;
    let config = json!({ "constellation": a.constellation.display().to_string(), "sim": cfg });
    write_manifest(&a.out, if ser { "ser" } else { "ami" }, config, Some(cfg.seed), started, &[&a.out])
}

fn cmd_bounds(a: &BoundsArgs) -> CmdResult {
    let started = Instant::now();
    let c = load_for_run(&a.constellation)?;
    let n = a.n.unwrap_or(c.m_antennas());
    let (t, m) = (c.t_slots(), c.m_antennas());
    let crossover = snr_crossover();
    let mut rows = Vec::with_capacity(a.snr.len());
    let mut reported = false;
    for &snr in &a.snr {
        let noise = NoiseModel::from_snr_db(snr)?;
        let (ub, degenerate) = union_bound_lenient(&c, &noise, n)?;
        if !degenerate.is_empty() && !reported {
            for (i, j) in &degenerate {
                eprintln!("degenerate pair ({i}, {j}): same subspace, left out of the union bound");
            }
            reported = true;
        }
        let ls = lambda_star(&noise, t, m);
        rows.push(BoundsRow {
            snr_db: snr,
            union_bound: ub,
            union_bound_conventional: union_bound_conventional(&c, &noise, n)?,
            ami_lower_bound: ami_lower_bound(&c, &noise, n, ls)?,
            lambda_star: ls,
            kappa: kappa(ls, &noise, t, m)?,
            crossover_db: crossover,
        });
    }
    println!(
        "{:>8}  {:>12}  {:>12}  {:>10}  {:>8}  {:>10}",
        "snr_db", "union", "conventional", "ami_lb", "lambda*", "kappa"
    );
    for r in &rows {
        println!(
            "{:>8.2}  {:>12.4e}  {:>12.4e}  {:>10.4}  {:>8.4}  {:>10.4}",
            r.snr_db, r.union_bound, r.union_bound_conventional, r.ami_lower_bound, r.lambda_star, r.kappa
        );
    }
    println!("kappa(lambda*) = 1 at {crossover:.4} dB");
    write_bounds_csv(&rows, &a.out).map_err(runtime)?;
    let config = json!({ "constellation": a.constellation.display().to_string(), "snr_db": a.snr, "n": n });
    write_manifest(&a.out, "bounds", config, None, started, &[&a.out])
}

#[derive(Serialize)]
struct BenchRow {
    t: usize,
    m: usize,
    cardinality: usize,
    n: usize,
    frames: usize,
    dense_ns_per_detection: f64,
    sparse_ns_per_detection: f64,
    dense_ops: OpCount,
    sparse_ops: OpCount,
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let started = Instant::now();
    if a.frames == 0 || a.n == 0 || a.card < 2 {
        return Err(Failure::Usage("need frames >= 1, n >= 1 and card >= 2".into()));
    }
    let seed = resolve_seed(a.seed, None)?;
    let mut rows = Vec::new();
    for &m in &a.m {
        if m == 0 || a.t <= m {
            return Err(Failure::Usage(format!("need 1 <= M < T, got T={}, M={m}", a.t)));
        }
        let mut r = rng::stream(seed, &[m as u64]);
        let points = allocate_patterns(a.t, m, a.t, a.card)?
            .iter()
            .map(|p| materialize(p, &ParamSet::random(p, &mut r)))
            .collect::<grasscode::Result<Vec<_>>>()?;
        let c = Constellation::new(points)?;
        let store = to_sparse_store(&c)?;
        let dense = DenseDetector::new(&c);
        let sparse = SparseDetector::new(&store);
        let noise = NoiseModel::from_snr_db(10.0)?;
        let ys: Vec<Vec<C64>> = (0..a.frames)
            .map(|f| {
                let k = f % a.card;
                let ch = ChannelRealization::sample(a.t, m, a.n, &noise, &mut r);
                transmit(&c.points()[k], &ch).map(|y| y.iter().copied().collect())
            })
            .collect::<grasscode::Result<_>>()?;
        for (f, y) in ys.iter().enumerate() {
            let (d, s) = (dense.detect(y, a.n), sparse.detect(y, a.n));
            if d != s {
                return Err(Failure::Runtime(format!("detector mismatch at M={m}, frame {f}: dense {d}, sparse {s}")));
            }
        }
        let mut dense_ops = OpCount::default();
        let mut sparse_ops = OpCount::default();
        dense.detect_counted(&ys[0], a.n, &mut dense_ops);
        sparse.detect_counted(&ys[0], a.n, &mut sparse_ops);
        let time = |f: &dyn Fn(&[C64]) -> usize| {
            let t0 = Instant::now();
            let mut sink = 0usize;
            for y in &ys {
                sink = sink.wrapping_add(f(y));
            }
            std::hint::black_box(sink);
            t0.elapsed().as_nanos() as f64 / ys.len() as f64
        };
        let dense_ns = time(&|y| dense.detect(y, a.n));
        let sparse_ns = time(&|y| sparse.detect(y, a.n));
        rows.push(BenchRow {
            t: a.t,
            m,
            cardinality: a.card,
            n: a.n,
            frames: a.frames,
            dense_ns_per_detection: dense_ns,
            sparse_ns_per_detection: sparse_ns,
            dense_ops,
            sparse_ops,
        });
    }
    println!(
        "{:>3} {:>3} {:>5} {:>3}  {:>10} {:>10}  {:>10} {:>10}  {:>9} {:>9}",
        "T", "M", "|X|", "N", "dense_ns", "sparse_ns", "dense_mac", "sparse_mac", "dense_sq", "sparse_sq"
    );
    for r in &rows {
        println!(
            "{:>3} {:>3} {:>5} {:>3}  {:>10.1} {:>10.1}  {:>10} {:>10}  {:>9} {:>9}",
            r.t, r.m, r.cardinality, r.n, r.dense_ns_per_detection, r.sparse_ns_per_detection, r.dense_ops.macs, r.sparse_ops.macs, r.dense_ops.squarings, r.sparse_ops.squarings
        );
    }
    println!("dense and sparse decisions agree on all {} frames per M", a.frames);
    if let Some(out) = &a.out {
        write_json(&rows, out).map_err(runtime)?;
        let config = json!({ "t": a.t, "m": a.m, "card": a.card, "frames": a.frames, "n": a.n });
        write_manifest(out, "bench", config, Some(seed), started, &[out])?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Patterns(a) => cmd_patterns(a),
        Command::Design(a) => cmd_design(a),
        Command::Ser(a) => cmd_sim(a, true),
        Command::Ami(a) => cmd_sim(a, false),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
