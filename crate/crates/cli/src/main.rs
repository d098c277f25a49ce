use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use margin_adapt::binomial::FloorMode;
use margin_adapt::distributions::{build_counterexample, build_margin_gap, Truth};
use margin_adapt::harness::{
    self, auto_t, ConstantRule, CounterexampleConfig, CoverageConfig, ExternalRule, GeneralConfig,
    LabelFrequencyRule, MarginGapConfig, NestedConfig, ReplicateRecord, SelectionRule,
};
use serde_json::Value;

const CSV_COLUMNS: &str = "\
CSV columns (one row per replicate, sorted by scenario, n, replicate):
  experiment, scenario, n, replicate, seed, chosen, excess, benchmark,
  assumptions_ok, rhs, conclusion_ok, saturated, elapsed_us
Empty cells mean the column does not apply to the experiment. elapsed_us is
only filled with --timing, which makes the CSV non-reproducible.";

#[derive(Parser)]
#[command(name = "margin-adapt", version, about = "Margin-adaptive model selection experiments", after_help = CSV_COLUMNS)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Output {
    /// Directory for the CSV and JSON outputs.
    #[arg(long, env = "MARGIN_ADAPT_OUT", default_value = ".")]
    out: PathBuf,
    /// Record per-replicate wall time in the CSV.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Empirical minimization between two constant predictors on the
    /// two-point counterexample.
    #[command(after_help = CSV_COLUMNS)]
    Counterexample(CounterexampleArgs),
    /// Local Rademacher penalties on the nested chain of odd flips.
    #[command(after_help = CSV_COLUMNS)]
    Nested(NestedArgs),
    /// Frequency of the Bernstein event for each model.
    #[command(after_help = CSV_COLUMNS)]
    Coverage(CoverageArgs),
    /// Exact checks on the margin-gap sequence.
    MarginGap(MarginGapArgs),
    /// Scan of sqrt(n) P(Z = k) over the central window.
    BinomialFloor(FloorArgs),
    /// Oracle penalties on a non-nested three-model family.
    #[command(after_help = CSV_COLUMNS)]
    General(GeneralArgs),
    /// Print an instance as JSON.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TruthArg {
    P0,
    P1,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Erm,
    Constant0,
    Constant1,
    LabelFrequency,
    External,
}

#[derive(Args)]
struct CounterexampleArgs {
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "p1")]
    truth: TruthArg,
    /// Scale of the threshold ratio c4 sqrt(n)/ln(n).
    #[arg(long, default_value_t = 1.0 / 3.0)]
    c4: f64,
    #[arg(long, value_enum, default_value = "erm")]
    rule: RuleArg,
    /// Program (and arguments) of an external rule; implies --rule external.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    rule_cmd: Vec<String>,
    /// Also replay the rule on samples conditioned on X = b everywhere, with
    /// this many samples per label count.
    #[arg(long)]
    replay_reps: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct NestedArgs {
    #[arg(long, default_value = "prop1-odd")]
    family: String,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Confidence level, or `auto` for ln|M_n| + 3 ln n.
    #[arg(long, default_value = "auto")]
    t: String,
    /// Number of models in the chain.
    #[arg(long, default_value_t = 4)]
    models: usize,
    #[arg(long, default_value_t = 12)]
    depth: usize,
    #[arg(long, default_value_t = 1.0)]
    kbar: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    khat: f64,
    #[arg(long, default_value_t = 2.0)]
    chat: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,400")]
    n: Vec<usize>,
    /// Comma-separated confidence levels; `lnX` stands for ln(X).
    #[arg(long, value_delimiter = ',', default_value = "ln20,ln100")]
    t: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MarginGapArgs {
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, value_delimiter = ',', default_value = "256,1024,4096")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct FloorArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 0.4)]
    c: f64,
    /// Scan a uniform p-grid of this many points instead of the exact
    /// endpoint scan.
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GeneralArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    /// Confidence level, or `auto` for ln|M_n| + 3 ln n.
    #[arg(long, default_value = "auto")]
    t: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum InstanceArg {
    Counterexample,
    MarginGap,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, value_enum)]
    instance: InstanceArg,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 16)]
    models: usize,
}

/// Outcome of a command: `false` means an acceptance check failed.
type Verdict = bool;

fn parse_t(raw: &str) -> anyhow::Result<Option<f64>> {
    if raw == "auto" {
        return Ok(None);
    }
    parse_level(raw).map(Some)
}

fn parse_level(raw: &str) -> anyhow::Result<f64> {
    let value = match raw.strip_prefix("ln") {
        Some(rest) => rest.parse::<f64>().map(f64::ln),
        None => raw.parse::<f64>(),
    }
    .with_context(|| format!("invalid confidence level {raw:?}"))?;
    if value.is_nan() || value <= 0.0 || !value.is_finite() {
        bail!("confidence level must be positive, got {raw}");
    }
    Ok(value)
}

fn write_outputs(output: &Output, name: &str, summary: &Value, records: Option<&[ReplicateRecord]>) -> anyhow::Result<()> {
    fs::create_dir_all(&output.out).with_context(|| format!("cannot create {}", output.out.display()))?;
    let json_path = output.out.join(format!("{name}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(summary)? + "\n")
        .with_context(|| format!("cannot write {}", json_path.display()))?;
    if let Some(records) = records {
        write_csv(&output.out.join(format!("{name}.csv")), records)?;
    }
    Ok(())
}

fn write_csv(path: &Path, records: &[ReplicateRecord]) -> anyhow::Result<()> {
    let mut sorted: Vec<&ReplicateRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.scenario, a.n, a.replicate).cmp(&(&b.scenario, b.n, b.replicate)));
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in sorted {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn rule_from(args: &CounterexampleArgs) -> anyhow::Result<Arc<dyn SelectionRule>> {
    if !args.rule_cmd.is_empty() {
        let (program, rest) = args.rule_cmd.split_first().expect("nonempty");
        return Ok(Arc::new(ExternalRule { program: program.clone(), args: rest.to_vec() }));
    }
    Ok(match args.rule {
        RuleArg::Erm => Arc::new(harness::default_erm_rule()),
        RuleArg::Constant0 => Arc::new(ConstantRule(0)),
        RuleArg::Constant1 => Arc::new(ConstantRule(1)),
        RuleArg::LabelFrequency => Arc::new(LabelFrequencyRule),
        RuleArg::External => bail!("--rule external needs --rule-cmd"),
    })
}

fn counterexample(args: CounterexampleArgs) -> anyhow::Result<Verdict> {
    let rule = rule_from(&args)?;
    let cfg = CounterexampleConfig {
        truth: match args.truth {
            TruthArg::P0 => Truth::P0,
            TruthArg::P1 => Truth::P1,
        },
        c4: args.c4,
        rule: rule.clone(),
        timing: args.output.timing,
        ..CounterexampleConfig::new(args.n.clone(), args.reps, args.seed)
    };
    let (summary, records) = harness::run_counterexample(&cfg)?;
    for b in &summary.blocks {
        println!(
            "n={} benchmark={:.6} threshold={:.6} p_hat={:.4} (se {:.4}) mean_excess/benchmark={:.3}",
            b.n, b.benchmark, b.threshold, b.p_hat, b.std_error, b.mean_excess_over_benchmark
        );
    }
    let mut value = serde_json::to_value(&summary)?;
    let mut identical = true;
    if let Some(reps) = args.replay_reps {
        let mut replays = Vec::new();
        for &n in &args.n {
            let report = harness::replay_conditioned(&build_counterexample(n)?, rule.as_ref(), reps, args.seed)?;
            println!(
                "n={} replay identical={} dichotomy_lower_bound={:.3e}",
                n, report.identical, report.dichotomy_lower_bound
            );
            identical &= report.identical;
            replays.push(serde_json::to_value(report)?);
        }
        value["replay"] = Value::Array(replays);
    }
    write_outputs(&args.output, "counterexample", &value, Some(&records))?;
    Ok(identical)
}

fn nested(args: NestedArgs) -> anyhow::Result<Verdict> {
    if args.family != "prop1-odd" {
        bail!("unknown family {:?} (available: prop1-odd)", args.family);
    }
    let t = parse_t(&args.t)?.unwrap_or_else(|| auto_t(args.models, args.n));
    let mut cfg = NestedConfig::prop1_odd(args.kappa, args.n, args.reps, args.seed);
    cfg.models = args.models;
    cfg.depth = args.depth;
    cfg.complexity.kbar = args.kbar;
    cfg.complexity.q = args.q;
    cfg.complexity.khat = args.khat;
    cfg.complexity.chat = args.chat;
    cfg.complexity.t = t;
    cfg.c2 = 2.0 / (args.kbar * args.q);
    cfg.timing = args.output.timing;
    let (summary, records) = harness::run_nested(&cfg)?;
    println!(
        "n={} t={:.4} assumptions {}/{} conclusion {}/{} saturated {:.3}",
        summary.n,
        summary.t,
        summary.assumptions_satisfied,
        summary.reps,
        summary.conclusion_holds,
        summary.assumptions_satisfied,
        summary.saturated_fraction
    );
    write_outputs(&args.output, "nested", &serde_json::to_value(&summary)?, Some(&records))?;
    Ok(summary.conclusion_holds == summary.assumptions_satisfied)
}

fn coverage(args: CoverageArgs) -> anyhow::Result<Verdict> {
    let t_list = args.t.iter().map(|t| parse_level(t)).collect::<anyhow::Result<Vec<_>>>()?;
    let cfg = CoverageConfig { n_list: args.n, t_list, reps: args.reps, seed: args.seed, timing: args.output.timing };
    let (summary, records) = harness::run_coverage(&cfg)?;
    let mut ok = true;
    for c in &summary.cells {
        let pass = c.coverage >= c.nominal - 0.01;
        ok &= pass;
        println!(
            "n={} t={:.4} model={} coverage={:.4} nominal={:.4}{}",
            c.n,
            c.t,
            c.model,
            c.coverage,
            c.nominal,
            if pass { "" } else { " BELOW" }
        );
    }
    write_outputs(&args.output, "coverage", &serde_json::to_value(&summary)?, Some(&records))?;
    Ok(ok)
}

fn margin_gap(args: MarginGapArgs) -> anyhow::Result<Verdict> {
    let cfg = MarginGapConfig {
        kappa: args.kappa,
        n_list: args.n_list,
        k_max: args.k_max,
        probes: args.probes,
        seed: args.seed,
    };
    let summary = harness::run_margin_gap(&cfg)?;
    for g in &summary.gap {
        println!(
            "n={} M_n={} local={:.6} bound={:.6} shape={:.6} ratio={:.4} argmin={}",
            g.n, g.m_n, g.local, g.local_bound, g.global_shape, g.ratio, g.argmin
        );
    }
    println!("proposition checks passed={}", summary.passed);
    write_outputs(&args.output, "margin-gap", &serde_json::to_value(&summary)?, None)?;
    Ok(summary.passed)
}

fn binomial_floor(args: FloorArgs) -> anyhow::Result<Verdict> {
    let mode = match args.grid {
        Some(points) => FloorMode::Grid(points),
        None => FloorMode::Exact,
    };
    let summary = harness::run_binomial_floor(&args.n_list, args.a, args.b, args.c, mode)?;
    fs::create_dir_all(&args.output.out)?;
    let path = args.output.out.join("binomial-floor.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["n", "a", "b", "c", "k_min", "k_max", "p_min", "p_max", "points", "floor", "argmin_k", "argmin_p"])?;
    for f in &summary.floors {
        w.write_record([
            f.n.to_string(),
            f.a.to_string(),
            f.b.to_string(),
            f.c.to_string(),
            f.k_min.to_string(),
            f.k_max.to_string(),
            f.p_min.to_string(),
            f.p_max.to_string(),
            f.points_scanned.to_string(),
            f.min_value.to_string(),
            f.argmin_k.to_string(),
            f.argmin_p.to_string(),
        ])?;
        println!("n={} floor={:.6e} at k={} p={:.6}", f.n, f.min_value, f.argmin_k, f.argmin_p);
    }
    w.flush()?;
    let json_path = args.output.out.join("binomial-floor.json");
    fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary.floors.iter().all(|f| f.min_value > 0.0))
}

fn general(args: GeneralArgs) -> anyhow::Result<Verdict> {
    let cfg = GeneralConfig {
        c: args.c,
        t: parse_t(&args.t)?,
        timing: args.output.timing,
        ..GeneralConfig::new(args.n, args.reps, args.seed)
    };
    let (summary, records) = harness::run_general(&cfg)?;
    println!(
        "n={} t={:.4} assumptions {}/{} conclusion {}/{}",
        summary.n, summary.t, summary.assumptions_satisfied, summary.reps, summary.conclusion_holds, summary.assumptions_satisfied
    );
    write_outputs(&args.output, "general", &serde_json::to_value(&summary)?, Some(&records))?;
    Ok(summary.conclusion_holds == summary.assumptions_satisfied)
}

fn export(args: ExportArgs) -> anyhow::Result<Verdict> {
    let doc = match args.instance {
        InstanceArg::Counterexample => serde_json::to_value(build_counterexample(args.n)?.document())?,
        InstanceArg::MarginGap => serde_json::to_value(build_margin_gap(args.kappa, args.depth, args.models)?.document())?,
    };
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(true)
}

fn run(cmd: Cmd) -> anyhow::Result<Verdict> {
    match cmd {
        Cmd::Counterexample(a) => counterexample(a),
        Cmd::Nested(a) => nested(a),
        Cmd::Coverage(a) => coverage(a),
        Cmd::MarginGap(a) => margin_gap(a),
        Cmd::BinomialFloor(a) => binomial_floor(a),
        Cmd::General(a) => general(a),
        Cmd::Export(a) => export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("acceptance check failed; see the JSON summary");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
