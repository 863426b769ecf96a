//! Command-line front end: builds instances from descriptors, runs the
//! estimators and exact oracles, and prints one JSON (or CSV) record per result.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use serde_json::{json, Map, Value};

use levelwalk::chain::{burn_in_steps, kernel_is_stochastic, local_kernel, trajectory};
use levelwalk::descriptor::TreeDescriptor;
use levelwalk::estimate::{
    additive_parameters, estimate_alpha, estimate_probability, estimate_size_additive,
    estimate_size_uniform, knuth_estimate, resolve_burn_in, AlphaEstimate, BurnIn,
    EstimatorConfig, SizeEstimate,
};
use levelwalk::exact::{
    conductance_bound, conductance_exact, level_counts_from_alphas, mixing_time_exact,
    pruned_alpha_inverses, size_from_alpha_inverses, stationary_exact, transition_matrix,
    verify_detailed_balance, verify_stationary,
};
use levelwalk::tree::{enumerate, exact_count, validate_prefix_closed};
use levelwalk::{Error, RandomStream, SuccinctTree};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_CAP: u8 = 4;
pub const EXIT_GUARANTEE: u8 = 5;

const EXIT_HELP: &str = "\
Exit status:
  0  success
  1  runtime failure
  2  usage error (unknown flag, missing or out-of-range parameter)
  3  input error (unreadable file, malformed DIMACS or tree descriptor)
  4  a cap was exceeded (--enum-cap, --matrix-cap, --conductance-cap)
  5  a checked guarantee was violated (validate, conductance)";

#[derive(Debug, Clone, Parser)]
#[command(name = "levelwalk", version, about, after_help = EXIT_HELP)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Master seed; required, there is no ambient entropy.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Burn-in rule for chain samples.
    #[arg(long = "burn-in", global = true, value_enum, default_value_t = BurnInMode::Bound)]
    pub burn_in_mode: BurnInMode,

    /// Constant C of the burn-in bound.
    #[arg(long, global = true, default_value_t = 2.0, value_parser = positive)]
    pub burn_in_constant: f64,

    /// Constant c_m of the per-batch sample size.
    #[arg(long, global = true, default_value_t = 4.0, value_parser = positive)]
    pub sample_constant: f64,

    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub enum_cap: u64,

    #[arg(long, global = true, default_value_t = 4096)]
    pub matrix_cap: usize,

    #[arg(long, global = true, default_value_t = 18)]
    pub conductance_cap: usize,

    /// Variable order for cnf instances, e.g. `3,1,2`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub order: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BurnInMode {
    Bound,
    ExactMeasured,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Build an instance and describe it.
    Gen(GenArgs),
    /// Exact node count by enumeration.
    Count(TreeArgs),
    /// Additive-error size estimate via the level-weighted chain.
    EstimateSize(SizeArgs),
    /// Normalizing-factor estimate within (1 ± zeta).
    EstimateAlpha(AlphaArgs),
    /// Additive estimate of |S| / 2^n.
    EstimateProb(SizeArgs),
    /// Draw chain samples from the stationary law.
    Sample(SampleArgs),
    /// Run the exact oracles on a small instance.
    Validate(TreeArgs),
    /// Exhaustive conductance of the lazy chain.
    Conductance(TreeArgs),
    /// Exact TV mixing times from the root.
    Mixing(MixingArgs),
    /// Resource scaling over a range of n.
    Bench(BenchArgs),
    /// Uniform-sampling size baseline.
    Baseline(SizeArgs),
    /// Knuth's random-descent estimator.
    Knuth(KnuthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    /// Instance: full:<n>, path:<n>, comb:<n>, root:<n>, hash:<n>:<q>:<seed>, cnf:<file>
    #[arg(long, value_parser = descriptor)]
    pub tree: TreeDescriptor,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Also list every node address.
    #[arg(long)]
    pub nodes: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SizeArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long, value_parser = unit_closed)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.1, value_parser = unit_open)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AlphaArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long, value_parser = unit_closed)]
    pub zeta: f64,
    #[arg(long, default_value_t = 0.1, value_parser = unit_open)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Number of independent restarts.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long, default_value_t = 0.01, value_parser = unit_open)]
    pub tv_epsilon: f64,
    /// Write every trajectory as `restart<TAB>step<TAB>address` lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Include the sampled addresses in the record.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MixingArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// TV thresholds as fractions or decimals; repeatable.
    #[arg(long, value_parser = rational, default_values = ["1/4"])]
    pub eps: Vec<BigRational>,
    /// Use the plain (non-lazy) kernel.
    #[arg(long)]
    pub non_lazy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchEstimator {
    Alpha,
    Size,
    Uniform,
    Knuth,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Instance family: full, path, comb or hash:<q>:<seed>.
    #[arg(long, default_value = "full")]
    pub family: String,
    #[arg(long, default_value_t = 1)]
    pub n_min: u32,
    #[arg(long, default_value_t = 6)]
    pub n_max: u32,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["alpha", "uniform", "knuth"])]
    pub estimators: Vec<BenchEstimator>,
    #[arg(long, default_value_t = 0.5, value_parser = unit_closed)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.25, value_parser = unit_closed)]
    pub zeta: f64,
    #[arg(long, default_value_t = 0.1, value_parser = unit_open)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub knuth_runs: u64,
}

#[derive(Debug, Clone, Args)]
pub struct KnuthArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
}

fn descriptor(s: &str) -> Result<TreeDescriptor, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn number(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("{s:?} is not a number"))
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    (v > 0.0 && v.is_finite()).then_some(v).ok_or_else(|| format!("{v} must be positive"))
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    (v > 0.0 && v < 1.0).then_some(v).ok_or_else(|| format!("{v} must lie in (0, 1)"))
}

fn unit_closed(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    (v > 0.0 && v <= 1.0).then_some(v).ok_or_else(|| format!("{v} must lie in (0, 1]"))
}

/// Parses `a/b` or a plain decimal exactly.
pub fn rational(s: &str) -> Result<BigRational, String> {
    let bad = || format!("{s:?} is not a fraction or decimal");
    let value = if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d == BigInt::from(0) {
            return Err(bad());
        }
        BigRational::new(n, d)
    } else {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if !frac.chars().all(|c| c.is_ascii_digit()) || int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        let digits: BigInt = format!("{}{frac}", if int.is_empty() { "0" } else { int })
            .parse()
            .map_err(|_| bad())?;
        BigRational::new(digits, BigInt::from(10).pow(frac.len() as u32))
    };
    let zero = BigRational::from_integer(0.into());
    let one = BigRational::from_integer(1.into());
    if value > zero && value < one {
        Ok(value)
    } else {
        Err(format!("{s} must lie in (0, 1)"))
    }
}

/// Parses and validates a command line (the first item is the program name).
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = RunConfig::try_parse_from(argv)?;
    if config.common.seed.is_none() {
        return Err(RunConfig::command().error(
            ErrorKind::MissingRequiredArgument,
            "--seed <SEED> is required; runs are always reproducible from an explicit seed",
        ));
    }
    for (name, cap) in [
        ("--enum-cap", config.common.enum_cap),
        ("--matrix-cap", config.common.matrix_cap as u64),
        ("--conductance-cap", config.common.conductance_cap as u64),
    ] {
        if cap == 0 {
            return Err(RunConfig::command().error(ErrorKind::ValueValidation, format!("{name} must be at least 1")));
        }
    }
    if let Command::Bench(b) = &config.command {
        if b.n_min > b.n_max {
            return Err(RunConfig::command().error(ErrorKind::ValueValidation, "--n-min exceeds --n-max"));
        }
        bench_descriptor(&b.family, b.n_min).map_err(|e| RunConfig::command().error(ErrorKind::ValueValidation, e))?;
    }
    Ok(config)
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(Error::Parse { .. } | Error::Io(_) | Error::InvalidTree(_)) => EXIT_INPUT,
            Failure::Core(Error::CapExceeded { .. }) => EXIT_CAP,
            Failure::Core(Error::InvalidParameter(_)) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Other(s) => f.write_str(s),
        }
    }
}

struct Outcome {
    records: Vec<Map<String, Value>>,
    violation: bool,
}

impl Outcome {
    fn one(record: Map<String, Value>) -> Self {
        Self {
            records: vec![record],
            violation: false,
        }
    }
}

/// Runs the command, writing records to `out` and diagnostics to `err`.
/// Returns the process exit status.
pub fn execute(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let started = Instant::now();
    let result = match &config.command {
        Command::Gen(a) => cmd_gen(config, a),
        Command::Count(a) => cmd_count(config, a),
        Command::EstimateSize(a) => cmd_estimate_size(config, a),
        Command::EstimateAlpha(a) => cmd_estimate_alpha(config, a),
        Command::EstimateProb(a) => cmd_estimate_prob(config, a),
        Command::Sample(a) => cmd_sample(config, a),
        Command::Validate(a) => cmd_validate(config, a),
        Command::Conductance(a) => cmd_conductance(config, a),
        Command::Mixing(a) => cmd_mixing(config, a),
        Command::Bench(a) => cmd_bench(config, a),
        Command::Baseline(a) => cmd_baseline(config, a),
        Command::Knuth(a) => cmd_knuth(config, a),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    };
    let written = match config.common.format {
        Format::Json => write_json(&outcome.records, out),
        Format::Csv => write_csv(&outcome.records, out),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write output: {e}");
        return EXIT_FAILURE;
    }
    let _ = writeln!(err, "elapsed: {:.3}s", started.elapsed().as_secs_f64());
    if outcome.violation {
        let _ = writeln!(err, "error: a checked guarantee was violated");
        EXIT_GUARANTEE
    } else {
        EXIT_OK
    }
}

fn write_json(records: &[Map<String, Value>], out: &mut dyn Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn flatten(prefix: &str, value: &Value, into: &mut Map<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, into);
            }
        }
        other => {
            into.insert(prefix.to_string(), other.clone());
        }
    }
}

/// Flat projection: nested objects become dotted columns, arrays are JSON text.
fn write_csv(records: &[Map<String, Value>], out: &mut dyn Write) -> std::io::Result<()> {
    let flat: Vec<Map<String, Value>> = records
        .iter()
        .map(|r| {
            let mut m = Map::new();
            flatten("", &Value::Object(r.clone()), &mut m);
            m
        })
        .collect();
    let mut columns: Vec<String> = flat.iter().flat_map(|m| m.keys().cloned()).collect();
    columns.sort();
    columns.dedup();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&columns)?;
    for m in &flat {
        w.write_record(columns.iter().map(|c| match m.get(c) {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
        }))?;
    }
    w.flush()
}

fn seed(config: &RunConfig) -> u64 {
    config.common.seed.expect("checked by parse_args")
}

fn burn_in(config: &RunConfig) -> BurnIn {
    match config.common.burn_in_mode {
        BurnInMode::Bound => BurnIn::Bound {
            constant: config.common.burn_in_constant,
        },
        BurnInMode::ExactMeasured => BurnIn::ExactMeasured {
            matrix_cap: config.common.matrix_cap,
        },
    }
}

fn estimator_config(config: &RunConfig) -> EstimatorConfig {
    EstimatorConfig {
        sample_constant: config.common.sample_constant,
        burn_in: burn_in(config),
    }
}

fn common_params(config: &RunConfig) -> Map<String, Value> {
    let c = &config.common;
    let mut p = Map::new();
    p.insert("burn_in_mode".into(), json!(match c.burn_in_mode {
        BurnInMode::Bound => "bound",
        BurnInMode::ExactMeasured => "exact-measured",
    }));
    p.insert("burn_in_constant".into(), json!(c.burn_in_constant));
    p.insert("sample_constant".into(), json!(c.sample_constant));
    p.insert("enum_cap".into(), json!(c.enum_cap));
    p.insert("matrix_cap".into(), json!(c.matrix_cap));
    p.insert("conductance_cap".into(), json!(c.conductance_cap));
    p.insert("order".into(), json!(c.order));
    p
}

fn record(config: &RunConfig, command: &str, tree: Option<&dyn SuccinctTree>, extra: Value) -> Map<String, Value> {
    let mut params = common_params(config);
    if let Value::Object(m) = extra {
        params.extend(m);
    }
    let mut r = Map::new();
    r.insert("command".into(), json!(command));
    r.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    r.insert("seed".into(), json!(seed(config)));
    if let Some(t) = tree {
        r.insert("tree".into(), json!(t.label()));
        r.insert("level_budget".into(), json!(t.level_budget()));
    }
    r.insert("params".into(), Value::Object(params));
    r
}

fn set(r: &mut Map<String, Value>, fields: Value) {
    if let Value::Object(m) = fields {
        r.extend(m);
    }
}

fn build(config: &RunConfig, args: &TreeArgs) -> Result<Box<dyn SuccinctTree>, Failure> {
    Ok(args.tree.build(config.common.order.clone())?)
}

fn decimal(v: &BigUint) -> Value {
    json!(v.to_string())
}

fn fraction(v: &BigRational) -> Value {
    json!(format!("{}/{}", v.numer(), v.denom()))
}

fn cmd_gen(config: &RunConfig, args: &GenArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let cap = config.common.enum_cap;
    let counterexample = validate_prefix_closed(tree.as_ref(), cap);
    let mut r = record(config, "gen", Some(tree.as_ref()), json!({"nodes": args.nodes}));
    set(&mut r, json!({
        "prefix_closed": counterexample.is_none(),
        "counterexample": counterexample.map(|a| a.to_string()),
    }));
    match enumerate(tree.as_ref(), cap) {
        Ok(explicit) => {
            set(&mut r, json!({
                "size": explicit.len(),
                "height": explicit.height(),
                "level_counts": explicit.level_counts(),
            }));
            if args.nodes {
                r.insert("node_list".into(), json!(explicit.nodes()));
            }
        }
        Err(Error::CapExceeded { partial, .. }) => {
            set(&mut r, json!({"size": null, "size_at_least": partial}));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Outcome::one(r))
}

fn cmd_count(config: &RunConfig, args: &TreeArgs) -> Result<Outcome, Failure> {
    let tree = build(config, args)?;
    let size = exact_count(tree.as_ref(), config.common.enum_cap)?;
    let mut r = record(config, "count", Some(tree.as_ref()), json!({}));
    set(&mut r, json!({"size": size, "counters": {"nodes_visited": size}}));
    Ok(Outcome::one(r))
}

fn alpha_json(a: &AlphaEstimate) -> Value {
    json!({
        "level": a.level_budget,
        "value": a.value,
        "tv_epsilon": a.tv_epsilon,
        "batches": a.batches,
        "samples_per_batch": a.samples_per_batch,
        "burn_in": a.burn_in,
        "chain_steps": a.chain_steps_total,
    })
}

fn size_fields(est: &SizeEstimate) -> Value {
    let (zeta, epsilon) = additive_parameters(est.level_budget, est.xi);
    json!({
        "estimate": est.value,
        "a_hat": est.a_hat,
        "b_hat": est.b_hat,
        "additive_error": est.xi * (est.level_budget as f64).exp2(),
        "zeta": zeta,
        "epsilon": epsilon,
        "per_level": est.per_level_alphas.iter().map(alpha_json).collect::<Vec<_>>(),
        "counters": {"chain_steps": est.chain_steps_total, "samples": est.samples},
    })
}

fn cmd_estimate_size(config: &RunConfig, args: &SizeArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let est = estimate_size_additive(
        tree.as_ref(),
        args.xi,
        args.delta,
        &estimator_config(config),
        &RandomStream::new(seed(config)),
    )?;
    let mut r = record(config, "estimate-size", Some(tree.as_ref()), json!({"xi": args.xi, "delta": args.delta}));
    set(&mut r, size_fields(&est));
    Ok(Outcome::one(r))
}

fn cmd_estimate_prob(config: &RunConfig, args: &SizeArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let est = estimate_probability(
        tree.as_ref(),
        args.xi,
        args.delta,
        &estimator_config(config),
        &RandomStream::new(seed(config)),
    )?;
    let mut r = record(config, "estimate-prob", Some(tree.as_ref()), json!({"xi": args.xi, "delta": args.delta}));
    set(&mut r, size_fields(&est.size));
    set(&mut r, json!({"probability": est.value, "size_estimate": est.size.value}));
    r.remove("estimate");
    Ok(Outcome::one(r))
}

fn cmd_estimate_alpha(config: &RunConfig, args: &AlphaArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let est = estimate_alpha(
        tree.as_ref(),
        args.zeta,
        args.delta,
        &estimator_config(config),
        &RandomStream::new(seed(config)),
    )?;
    let mut r = record(config, "estimate-alpha", Some(tree.as_ref()), json!({"zeta": args.zeta, "delta": args.delta}));
    set(&mut r, json!({
        "alpha": est.value,
        "alpha_inverse": 1.0 / est.value,
        "tv_epsilon": est.tv_epsilon,
        "batches": est.batches,
        "samples_per_batch": est.samples_per_batch,
        "burn_in": est.burn_in,
        "batch_values": est.batch_values,
        "counters": {"chain_steps": est.chain_steps_total, "samples": est.batches * est.samples_per_batch},
    }));
    Ok(Outcome::one(r))
}

fn cmd_sample(config: &RunConfig, args: &SampleArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let steps = resolve_burn_in(tree.as_ref(), args.tv_epsilon, &burn_in(config))?;
    let mut rng = RandomStream::new(seed(config)).rng();
    let mut trace = match &args.trace {
        Some(path) => Some(std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Failure::Core(Error::Io(format!("cannot create {}: {e}", path.display()))))?,
        )),
        None => None,
    };
    let mut samples = Vec::with_capacity(args.m as usize);
    for restart in 0..args.m {
        let path = trajectory(tree.as_ref(), steps, true, &mut rng);
        if let Some(w) = trace.as_mut() {
            for (t, a) in path.iter().enumerate() {
                writeln!(w, "{restart}\t{t}\t{a}").map_err(|e| Failure::Other(format!("trace: {e}")))?;
            }
        }
        samples.push(*path.last().expect("trajectory includes the start"));
    }
    if let Some(mut w) = trace {
        w.flush().map_err(|e| Failure::Other(format!("trace: {e}")))?;
    }
    let mut histogram = vec![0u64; tree.level_budget() as usize + 1];
    for s in &samples {
        histogram[s.depth() as usize] += 1;
    }
    let roots = histogram[0];
    let mut r = record(config, "sample", Some(tree.as_ref()), json!({
        "m": args.m,
        "tv_epsilon": args.tv_epsilon,
        "lazy": true,
    }));
    set(&mut r, json!({
        "burn_in": steps,
        "depth_histogram": histogram,
        "root_fraction": roots as f64 / args.m as f64,
        "counters": {"chain_steps": steps * args.m},
    }));
    if args.list {
        r.insert("samples".into(), json!(samples));
    }
    Ok(Outcome::one(r))
}

fn cmd_validate(config: &RunConfig, args: &TreeArgs) -> Result<Outcome, Failure> {
    let tree = build(config, args)?;
    let cap = config.common.enum_cap;
    let counterexample = validate_prefix_closed(tree.as_ref(), cap);
    let explicit = enumerate(tree.as_ref(), cap)?;
    let n = explicit.level_budget();
    let profile = stationary_exact(&explicit);
    let lazy = transition_matrix(&explicit, true, config.common.matrix_cap)?;
    let plain = transition_matrix(&explicit, false, config.common.matrix_cap)?;
    let kernels_ok = explicit.nodes().iter().all(|&a| {
        [true, false]
            .iter()
            .all(|&l| local_kernel(&explicit, a, l).map(|k| kernel_is_stochastic(&k)).unwrap_or(false))
    });
    let alphas = pruned_alpha_inverses(tree.as_ref(), cap)?;
    let size = explicit.len() as u64;
    let telescoped = size_from_alpha_inverses(&alphas)?;
    let levels = level_counts_from_alphas(&alphas);
    let direct_levels: Vec<BigUint> = explicit.level_counts().into_iter().map(BigUint::from).collect();
    let max_alpha_inverse = BigUint::from(n + 1) << n;
    let is_full = size as u128 == (1u128 << (n + 1)) - 1;
    let root_bound = BigRational::new(BigInt::from(1), BigInt::from(n + 1));

    let checks = json!({
        "prefix_closed": counterexample.is_none(),
        "kernels_stochastic": kernels_ok && lazy.rows_stochastic() && plain.rows_stochastic(),
        "stationary_lazy": verify_stationary(&lazy, &profile),
        "stationary_non_lazy": verify_stationary(&plain, &profile),
        "detailed_balance_lazy": verify_detailed_balance(&lazy, &profile),
        "detailed_balance_non_lazy": verify_detailed_balance(&plain, &profile),
        "telescoping_identity": telescoped == BigInt::from(size),
        "level_counts": levels.as_ref().map(|l| l.counts == direct_levels).unwrap_or(false),
        "alpha_inverse_bound": profile.alpha_inverse <= max_alpha_inverse
            && ((profile.alpha_inverse == max_alpha_inverse) == is_full),
        "root_probability_bound": profile.root_prob() >= root_bound,
    });
    let all_ok = checks.as_object().expect("object").values().all(|v| v == &json!(true));
    let mut r = record(config, "validate", Some(tree.as_ref()), json!({}));
    set(&mut r, json!({
        "size": size,
        "alpha_inverse": decimal(&profile.alpha_inverse),
        "root_probability": fraction(&profile.root_prob()),
        "pruned_alpha_inverses": alphas.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        "telescoped_size": telescoped.to_string(),
        "counterexample": counterexample.map(|a| a.to_string()),
        "checks": checks,
        "all_ok": all_ok,
    }));
    Ok(Outcome {
        records: vec![r],
        violation: !all_ok,
    })
}

fn cmd_conductance(config: &RunConfig, args: &TreeArgs) -> Result<Outcome, Failure> {
    let tree = build(config, args)?;
    let explicit = enumerate(tree.as_ref(), config.common.enum_cap)?;
    let chain = transition_matrix(&explicit, true, config.common.matrix_cap)?;
    let profile = stationary_exact(&explicit);
    let phi = conductance_exact(&chain, &profile, config.common.conductance_cap)?;
    let bound = conductance_bound(explicit.level_budget());
    let ok = phi >= bound;
    let mut r = record(config, "conductance", Some(tree.as_ref()), json!({"lazy": true}));
    set(&mut r, json!({
        "states": explicit.len(),
        "conductance": fraction(&phi),
        "bound": fraction(&bound),
        "bound_ok": ok,
        "alpha_inverse": decimal(&profile.alpha_inverse),
        "counters": {"subsets": (1u64 << explicit.len()) - 1},
    }));
    Ok(Outcome {
        records: vec![r],
        violation: !ok,
    })
}

fn cmd_mixing(config: &RunConfig, args: &MixingArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let explicit = enumerate(tree.as_ref(), config.common.enum_cap)?;
    let lazy = !args.non_lazy;
    let chain = transition_matrix(&explicit, lazy, config.common.matrix_cap)?;
    let profile = stationary_exact(&explicit);
    let n = explicit.level_budget();
    let mut rows = Vec::new();
    for eps in &args.eps {
        let eps_f = num_traits::ToPrimitive::to_f64(eps).expect("finite");
        let bound = burn_in_steps(n, eps_f, 2.0)?;
        let tau = mixing_time_exact(&chain, &profile, eps, bound.saturating_mul(10))?;
        rows.push(json!({"eps": fraction(eps), "tau": tau, "bound_c2": bound}));
    }
    let mut r = record(config, "mixing", Some(tree.as_ref()), json!({
        "lazy": lazy,
        "eps": args.eps.iter().map(fraction).collect::<Vec<_>>(),
    }));
    set(&mut r, json!({
        "states": explicit.len(),
        "alpha_inverse": decimal(&profile.alpha_inverse),
        "mixing": rows,
    }));
    Ok(Outcome::one(r))
}

fn bench_descriptor(family: &str, n: u32) -> Result<TreeDescriptor, String> {
    let text = match family.split_once(':') {
        None => format!("{family}:{n}"),
        Some(("hash", rest)) => format!("hash:{n}:{rest}"),
        Some(_) => return Err(format!("unknown bench family {family:?}")),
    };
    match text.parse::<TreeDescriptor>() {
        Ok(TreeDescriptor::Cnf { .. }) | Err(_) => Err(format!("unknown bench family {family:?}")),
        Ok(d) => Ok(d),
    }
}

fn cmd_bench(config: &RunConfig, args: &BenchArgs) -> Result<Outcome, Failure> {
    let est_config = estimator_config(config);
    let mut records = Vec::new();
    for n in args.n_min..=args.n_max {
        let desc = bench_descriptor(&args.family, n).map_err(Failure::Other)?;
        let tree = desc.build(None)?;
        let stream = RandomStream::new(seed(config)).substream(n as u64);
        let exact = enumerate(tree.as_ref(), config.common.enum_cap).ok();
        for &which in &args.estimators {
            let mut r = record(config, "bench", Some(tree.as_ref()), json!({
                "family": args.family, "xi": args.xi, "zeta": args.zeta,
                "delta": args.delta, "knuth_runs": args.knuth_runs,
            }));
            r.insert("n".into(), json!(n));
            let fields = match which {
                BenchEstimator::Alpha => {
                    let est = estimate_alpha(tree.as_ref(), args.zeta, args.delta, &est_config, &stream)?;
                    json!({
                        "estimator": "alpha",
                        "value": est.value,
                        "exact": exact.as_ref().map(|e| 1.0 / stationary_exact(e).alpha_inverse.to_string().parse::<f64>().unwrap_or(f64::INFINITY)),
                        "burn_in": est.burn_in,
                        "chain_steps": est.chain_steps_total,
                        "samples": est.batches * est.samples_per_batch,
                    })
                }
                BenchEstimator::Size => {
                    let est = estimate_size_additive(tree.as_ref(), args.xi, args.delta, &est_config, &stream)?;
                    json!({
                        "estimator": "size",
                        "value": est.value,
                        "exact": exact.as_ref().map(|e| e.len()),
                        "chain_steps": est.chain_steps_total,
                        "samples": est.samples,
                    })
                }
                BenchEstimator::Uniform => {
                    let est = estimate_size_uniform(tree.as_ref(), args.xi, args.delta, &stream)?;
                    json!({
                        "estimator": "uniform",
                        "value": est.value,
                        "exact": exact.as_ref().map(|e| e.len()),
                        "chain_steps": 0,
                        "samples": est.samples,
                    })
                }
                BenchEstimator::Knuth => {
                    let mut rng = stream.substream(u64::MAX).rng();
                    let sum: f64 = (0..args.knuth_runs).map(|_| knuth_estimate(tree.as_ref(), &mut rng)).sum();
                    json!({
                        "estimator": "knuth",
                        "value": sum / args.knuth_runs as f64,
                        "exact": exact.as_ref().map(|e| e.len()),
                        "chain_steps": 0,
                        "samples": args.knuth_runs,
                    })
                }
            };
            set(&mut r, fields);
            records.push(r);
        }
    }
    Ok(Outcome {
        records,
        violation: false,
    })
}

fn cmd_baseline(config: &RunConfig, args: &SizeArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let est = estimate_size_uniform(tree.as_ref(), args.xi, args.delta, &RandomStream::new(seed(config)))?;
    let mut r = record(config, "baseline", Some(tree.as_ref()), json!({"xi": args.xi, "delta": args.delta}));
    set(&mut r, json!({
        "estimate": est.value,
        "additive_error": est.xi * (est.level_budget as f64).exp2(),
        "counters": {"samples": est.samples, "chain_steps": 0},
    }));
    Ok(Outcome::one(r))
}

fn cmd_knuth(config: &RunConfig, args: &KnuthArgs) -> Result<Outcome, Failure> {
    let tree = build(config, &args.tree)?;
    let mut rng = RandomStream::new(seed(config)).rng();
    let values: Vec<f64> = (0..args.runs).map(|_| knuth_estimate(tree.as_ref(), &mut rng)).collect();
    let runs = args.runs as f64;
    let mean = values.iter().sum::<f64>() / runs;
    let std_error = if args.runs > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1.0) / runs).sqrt()
    } else {
        0.0
    };
    let mut r = record(config, "knuth", Some(tree.as_ref()), json!({"runs": args.runs}));
    set(&mut r, json!({
        "mean": mean,
        "std_error": std_error,
        "min": values.iter().copied().fold(f64::INFINITY, f64::min),
        "max": values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "counters": {"descents": args.runs},
    }));
    Ok(Outcome::one(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> Result<RunConfig, clap::Error> {
        parse_args(std::iter::once("levelwalk").chain(args.split_whitespace()))
    }

    #[test]
    fn parse_examples() {
        let c = parse("count --tree full:3 --seed 1").unwrap();
        assert!(matches!(c.command, Command::Count(ref t) if t.tree == TreeDescriptor::Full(3)));
        assert_eq!(c.common.seed, Some(1));
        assert_eq!(c.common.format, Format::Json);
        assert_eq!(c.common.burn_in_mode, BurnInMode::Bound);

        let c = parse("estimate-size --tree cnf:f.cnf --xi 0.1 --delta 0.1 --seed 7").unwrap();
        match c.command {
            Command::EstimateSize(a) => {
                assert_eq!(a.xi, 0.1);
                assert_eq!(a.delta, 0.1);
            }
            other => panic!("{other:?}"),
        }
        let err = parse("estimate-size --tree full:3").unwrap_err();
        assert_eq!(err.kind(), ErrorKind::MissingRequiredArgument);
    }

    #[test]
    fn defaults_and_usage_errors() {
        let c = parse("baseline --tree full:3 --xi 0.2 --seed 0").unwrap();
        let Command::Baseline(a) = c.command else { panic!() };
        assert_eq!(a.delta, 0.1);
        assert_eq!(c.common.enum_cap, 1_000_000);
        assert_eq!(c.common.matrix_cap, 4096);
        assert_eq!(c.common.conductance_cap, 18);
        for bad in [
            "count --tree full:3 --seed 1 --bogus",
            "estimate-size --tree full:3 --seed 1",
            "estimate-size --tree full:3 --xi 1.5 --seed 1",
            "estimate-alpha --tree full:3 --zeta 0.1 --delta 1 --seed 1",
            "count --tree nope:3 --seed 1",
            "count --tree full:3 --seed 1 --enum-cap 0",
            "mixing --tree full:3 --eps 2 --seed 1",
            "bench --family cnf:x --seed 1",
        ] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rationals() {
        assert_eq!(rational("1/4").unwrap(), BigRational::new(1.into(), 4.into()));
        assert_eq!(rational("0.25").unwrap(), BigRational::new(1.into(), 4.into()));
        assert_eq!(rational(".5").unwrap(), BigRational::new(1.into(), 2.into()));
        assert!(rational("1").is_err());
        assert!(rational("1/0").is_err());
        assert!(rational("x").is_err());
    }

    fn run(args: &str) -> (u8, String) {
        let c = parse(args).unwrap();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = execute(&c, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap())
    }

    fn json_line(s: &str) -> Value {
        serde_json::from_str(s.lines().next().unwrap()).unwrap()
    }

    #[test]
    fn execute_examples() {
        let (code, out) = run("count --tree full:2 --seed 1");
        assert_eq!(code, EXIT_OK);
        assert_eq!(json_line(&out)["size"], json!(7));

        let (code, out) = run("validate --tree path:4 --seed 1");
        assert_eq!(code, EXIT_OK, "{out}");
        let v = json_line(&out);
        assert_eq!(v["all_ok"], json!(true));
        assert_eq!(v["checks"]["telescoping_identity"], json!(true));
        assert_eq!(v["checks"]["stationary_lazy"], json!(true));
        assert_eq!(v["checks"]["detailed_balance_lazy"], json!(true));

        let (code, out) = run("conductance --tree full:2 --seed 1");
        assert_eq!(code, EXIT_OK);
        let v = json_line(&out);
        assert_eq!(v["bound_ok"], json!(true));
        assert_eq!(v["bound"], json!("1/12"));
        assert!(v["conductance"].as_str().unwrap().contains('/'));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run("count --tree full:10 --seed 1 --enum-cap 5").0, EXIT_CAP);
        assert_eq!(run("count --tree cnf:/no/such/file.cnf --seed 1").0, EXIT_INPUT);
        assert_eq!(run("conductance --tree full:4 --seed 1").0, EXIT_CAP);
        assert_eq!(run("conductance --tree root:3 --seed 1").0, EXIT_FAILURE);
    }

    #[test]
    fn csv_projection() {
        let (code, out) = run("mixing --tree full:2 --eps 1/4 --eps 0.1 --seed 3 --format csv");
        assert_eq!(code, EXIT_OK);
        let mut lines = out.lines();
        let header = lines.next().unwrap();
        assert!(header.contains("params.matrix_cap"));
        assert!(header.contains("mixing"));
        assert_eq!(lines.count(), 1);
    }
}
