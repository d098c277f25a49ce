//! Seeded Monte Carlo experiments.
//!
//! Every experiment takes an explicit configuration, runs its replicates in
//! parallel with per-replicate derived seeds, and returns a summary plus one
//! [`ReplicateRecord`] per replicate in replicate order. Summaries carry
//! `schema: 1`.

use std::io::{BufRead, BufReader, Write as _};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::binomial::{binom_pmf, central_value, pmf_floor, FloorMode, FloorReport};
use crate::classes::{build_family, PredictorClassSpec};
use crate::complexity::{assumption_checker, bernstein_event, AssumptionInputs, ComplexityConfig};
use crate::distributions::{build_counterexample, build_margin_gap, oracle_benchmark_under, CounterexampleInstance, Truth};
use crate::domain::{
    draw_sample, excess_risk, population_variance, Atom, DiscreteDistribution, Domain, LossFunction, Model,
    ModelFamily, Sample,
};
use crate::error::{param, Error, Result};
use crate::rng::{derive_path, stream_rng};
use crate::selection::{
    compute_penalties, extract_margin, oracle_rhs_general, oracle_rhs_nested, select_with_penalties,
    GeneralRhsInputs, NestedRhsInputs, PenaltySpec,
};
use crate::CHECK_TOL;

pub const SCHEMA_VERSION: u32 = 1;

/// `ε ∈ {0.1, 0.2, …, 0.9}`.
pub fn default_eps_grid() -> Vec<f64> {
    (1..=9).map(|i| f64::from(i) / 10.0).collect()
}

/// `t = ln|M_n| + 3 ln n`.
pub fn auto_t(models: usize, n: usize) -> f64 {
    (models as f64).ln() + 3.0 * (n as f64).ln()
}

/// One CSV row. Columns appear in field order; absent values are empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub experiment: &'static str,
    /// Sub-configuration label, e.g. the truth or the confidence level.
    pub scenario: String,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub chosen: Option<usize>,
    pub excess: Option<f64>,
    pub benchmark: Option<f64>,
    pub assumptions_ok: Option<bool>,
    pub rhs: Option<f64>,
    pub conclusion_ok: Option<bool>,
    pub saturated: Option<bool>,
    /// Wall time of the replicate; filled only when timing is requested.
    pub elapsed_us: Option<u64>,
}

impl ReplicateRecord {
    fn new(experiment: &'static str, scenario: impl Into<String>, n: usize, replicate: usize, seed: u64) -> Self {
        ReplicateRecord {
            experiment,
            scenario: scenario.into(),
            n,
            replicate,
            seed,
            chosen: None,
            excess: None,
            benchmark: None,
            assumptions_ok: None,
            rhs: None,
            conclusion_ok: None,
            saturated: None,
            elapsed_us: None,
        }
    }
}

fn elapsed(start: Instant, timing: bool) -> Option<u64> {
    timing.then(|| start.elapsed().as_micros() as u64)
}

/// Binomial standard error of a frequency.
pub fn frequency_std_error(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Selection rules for the two-candidate problem

/// Output of a selection rule: a model index, or the probability of picking
/// model 1 for randomized rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Decision {
    Model(usize),
    ProbabilityOfOne(f64),
}

impl Decision {
    /// Realize the decision; randomized decisions draw from `seed`.
    pub fn resolve(self, seed: u64) -> Result<usize> {
        match self {
            Decision::Model(m) if m <= 1 => Ok(m),
            Decision::Model(m) => Err(Error::Rule(format!("rule chose model {m}, expected 0 or 1"))),
            Decision::ProbabilityOfOne(p) if (0.0..=1.0).contains(&p) => {
                let u: f64 = stream_rng(seed, 7).gen();
                Ok(usize::from(u < p))
            }
            Decision::ProbabilityOfOne(p) => Err(Error::Rule(format!("rule returned probability {p}"))),
        }
    }
}

pub trait SelectionRule: Send + Sync {
    fn name(&self) -> String;
    fn decide(&self, sample: &Sample) -> Result<Decision>;
}

/// Empirical minimization between the singletons `{f_0}` and `{f_1}`.
pub struct ErmRule {
    family: ModelFamily,
}

impl ErmRule {
    pub fn new(f0: &LossFunction, f1: &LossFunction) -> Result<Self> {
        let family = ModelFamily::new(
            vec![Model::new("f0", vec![f0.clone()])?, Model::new("f1", vec![f1.clone()])?],
            false,
        )?;
        Ok(ErmRule { family })
    }

    pub fn for_instance(inst: &CounterexampleInstance) -> Result<Self> {
        Self::new(&inst.f0, &inst.f1)
    }
}

impl SelectionRule for ErmRule {
    fn name(&self) -> String {
        "erm".into()
    }

    fn decide(&self, sample: &Sample) -> Result<Decision> {
        Ok(Decision::Model(select_with_penalties(&self.family, sample, &[0.0, 0.0], None)?.chosen))
    }
}

/// ERM between the two constant predictors; their loss tables do not depend
/// on `n`, so one rule serves every sample size.
pub fn default_erm_rule() -> ErmRule {
    let inst = build_counterexample(2).expect("n = 2 is a valid size");
    ErmRule::for_instance(&inst).expect("the two singletons form a valid family")
}

pub struct ConstantRule(pub usize);

impl SelectionRule for ConstantRule {
    fn name(&self) -> String {
        format!("constant{}", self.0)
    }

    fn decide(&self, _sample: &Sample) -> Result<Decision> {
        Ok(Decision::Model(self.0))
    }
}

/// Picks model 1 with probability `P_n(Y = 1)`.
pub struct LabelFrequencyRule;

impl SelectionRule for LabelFrequencyRule {
    fn name(&self) -> String {
        "label-frequency".into()
    }

    fn decide(&self, sample: &Sample) -> Result<Decision> {
        let ones = sample.atoms().filter(|a| a.y == 1).count();
        Ok(Decision::ProbabilityOfOne(ones as f64 / sample.len() as f64))
    }
}

/// A rule run as a subprocess. The sample is written to its standard input
/// as JSON lines `{"x": "<label>", "y": 0|1}`; the first line of its output
/// is either a model index (`0`, `1`) or a probability of choosing model 1.
pub struct ExternalRule {
    pub program: String,
    pub args: Vec<String>,
}

#[derive(Serialize)]
struct DrawLine<'a> {
    x: &'a str,
    y: u8,
}

/// Parse one line of rule output.
pub fn parse_decision(line: &str) -> Result<Decision> {
    let line = line.trim();
    if let Ok(m) = line.parse::<usize>() {
        return Ok(Decision::Model(m));
    }
    match line.parse::<f64>() {
        Ok(p) if (0.0..=1.0).contains(&p) => Ok(Decision::ProbabilityOfOne(p)),
        _ => Err(Error::Rule(format!("cannot parse rule output {line:?}"))),
    }
}

impl SelectionRule for ExternalRule {
    fn name(&self) -> String {
        format!("external:{}", self.program)
    }

    fn decide(&self, sample: &Sample) -> Result<Decision> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Rule(format!("cannot start {}: {e}", self.program)))?;
        let labels = sample.domain().x_labels();
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            let mut buf = Vec::new();
            for atom in sample.atoms() {
                serde_json::to_writer(&mut buf, &DrawLine { x: &labels[atom.x], y: atom.y })?;
                buf.push(b'\n');
            }
            // a rule may stop reading early; that is its business
            let _ = stdin.write_all(&buf);
        }
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("stdout is piped")).read_line(&mut line)?;
        let status = child.wait()?;
        if !status.success() {
            return Err(Error::Rule(format!("{} exited with {status}", self.program)));
        }
        parse_decision(&line)
    }
}

// ---------------------------------------------------------------------------
// Counterexample

pub struct CounterexampleConfig {
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub truth: Truth,
    /// The threshold ratio is `c4 · sqrt(n) / ln n`.
    pub c4: f64,
    pub rule: Arc<dyn SelectionRule>,
    pub timing: bool,
}

impl CounterexampleConfig {
    pub fn new(n_list: Vec<usize>, reps: usize, seed: u64) -> Self {
        CounterexampleConfig {
            n_list,
            reps,
            seed,
            truth: Truth::P1,
            c4: 1.0 / 3.0,
            rule: Arc::new(default_erm_rule()),
            timing: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleBlock {
    pub n: usize,
    pub alpha: f64,
    pub h: f64,
    pub benchmark: f64,
    pub threshold_ratio: f64,
    pub threshold: f64,
    pub failures: usize,
    /// Fraction of replicates with excess ≥ threshold.
    pub p_hat: f64,
    pub std_error: f64,
    /// Fraction of replicates choosing the model that is wrong under the
    /// truth.
    pub wrong_choice: f64,
    pub mean_excess: f64,
    pub mean_excess_over_benchmark: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleSummary {
    pub schema: u32,
    pub experiment: &'static str,
    pub rule: String,
    pub truth: Truth,
    pub reps: usize,
    pub seed: u64,
    pub c4: f64,
    pub blocks: Vec<CounterexampleBlock>,
}

fn check_reps(reps: usize, n_list: &[usize]) -> Result<()> {
    if reps == 0 {
        return param("at least one replicate is required");
    }
    if n_list.is_empty() {
        return param("the list of sample sizes is empty");
    }
    Ok(())
}

pub fn run_counterexample(cfg: &CounterexampleConfig) -> Result<(CounterexampleSummary, Vec<ReplicateRecord>)> {
    check_reps(cfg.reps, &cfg.n_list)?;
    if !(cfg.c4 > 0.0) {
        return param(format!("C4 must be positive, got {}", cfg.c4));
    }
    let mut blocks = Vec::new();
    let mut records = Vec::new();
    for &n in &cfg.n_list {
        let inst = build_counterexample(n)?;
        let law = inst.law(cfg.truth);
        let (benchmark, _) = oracle_benchmark_under(&inst, cfg.truth)?;
        let ratio = cfg.c4 * (n as f64).sqrt() / (n as f64).ln();
        let threshold = ratio * benchmark;
        let excess = [inst.excess(0, cfg.truth)?, inst.excess(1, cfg.truth)?];
        let scenario = format!("{:?}", cfg.truth);
        let rows: Vec<ReplicateRecord> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let start = Instant::now();
                let seed = derive_path(cfg.seed, &[n as u64, r as u64]);
                let sample = draw_sample(law, n, seed)?;
                let m = cfg.rule.decide(&sample)?.resolve(derive_path(seed, &[1]))?;
                let mut rec = ReplicateRecord::new("counterexample", scenario.clone(), n, r, seed);
                rec.chosen = Some(m);
                rec.excess = Some(excess[m]);
                rec.benchmark = Some(benchmark);
                rec.rhs = Some(threshold);
                rec.elapsed_us = elapsed(start, cfg.timing);
                Ok(rec)
            })
            .collect::<Result<_>>()?;
        let failures = rows.iter().filter(|r| r.excess.unwrap() >= threshold).count();
        let wrong = 1 - cfg.truth.index();
        let wrong_choice = rows.iter().filter(|r| r.chosen == Some(wrong)).count() as f64 / cfg.reps as f64;
        let mean_excess = rows.iter().map(|r| r.excess.unwrap()).sum::<f64>() / cfg.reps as f64;
        let p_hat = failures as f64 / cfg.reps as f64;
        blocks.push(CounterexampleBlock {
            n,
            alpha: inst.alpha,
            h: inst.h,
            benchmark,
            threshold_ratio: ratio,
            threshold,
            failures,
            p_hat,
            std_error: frequency_std_error(p_hat, cfg.reps),
            wrong_choice,
            mean_excess,
            mean_excess_over_benchmark: mean_excess / benchmark,
        });
        records.extend(rows);
    }
    let summary = CounterexampleSummary {
        schema: SCHEMA_VERSION,
        experiment: "counterexample",
        rule: cfg.rule.name(),
        truth: cfg.truth,
        reps: cfg.reps,
        seed: cfg.seed,
        c4: cfg.c4,
        blocks,
    };
    Ok((summary, records))
}

/// Samples of size `n` with every `X = b` and exactly `k` labels equal to 1,
/// in a uniformly random order drawn from `seed`.
pub fn conditioned_sample(domain: &Arc<Domain>, n: usize, k: usize, seed: u64) -> Result<Sample> {
    if k > n {
        return param(format!("k = {k} exceeds n = {n}"));
    }
    let b = domain.x_index("b").ok_or_else(|| Error::InvalidDomain("no point labelled b".into()))?;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < k)).collect();
    labels.shuffle(&mut stream_rng(seed, 0));
    let atoms: Vec<Atom> = labels.into_iter().map(|y| Atom::new(b, y)).collect();
    Sample::from_atoms(domain.clone(), &atoms, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub schema: u32,
    pub n: usize,
    pub rule: String,
    pub reps_per_k: usize,
    /// `π_k` estimated from the replay under the `P_0`-labelled generator.
    pub pi_p0: Vec<f64>,
    /// Same, under the `P_1`-labelled generator.
    pub pi_p1: Vec<f64>,
    /// Decision streams under both generators are byte-identical.
    pub identical: bool,
    /// `(1−α)^n Σ_k Bin(n, 1/2+h)(k) (1 − π_k)`: probability under `P_1` of
    /// the all-`b` event intersected with choosing model 0.
    pub p1_all_b_wrong: f64,
    /// `(1−α)^n Σ_k Bin(n, 1/2−h)(k) π_k`, the mirrored quantity under `P_0`.
    pub p0_all_b_wrong: f64,
    /// `max` of the two: a lower bound on `max_j Prob_{P_j}(m̂ = 1−j)`.
    pub dichotomy_lower_bound: f64,
}

/// Replay the rule on samples conditioned on the all-`b` event, once under
/// each labelled generator, and compare the decision streams.
pub fn replay_conditioned(
    inst: &CounterexampleInstance,
    rule: &dyn SelectionRule,
    reps_per_k: usize,
    seed: u64,
) -> Result<ReplayReport> {
    if reps_per_k == 0 {
        return param("at least one replicate per k is required");
    }
    let n = inst.n;
    let run = |truth: Truth| -> Result<Vec<Vec<usize>>> {
        // the two generators share the domain, so a conditioned sample is
        // the same object whichever label the generator carries
        let domain = inst.law(truth).domain();
        (0..=n)
            .into_par_iter()
            .map(|k| {
                (0..reps_per_k)
                    .map(|r| {
                        let s = derive_path(seed, &[k as u64, r as u64]);
                        let sample = conditioned_sample(domain, n, k, s)?;
                        rule.decide(&sample)?.resolve(derive_path(s, &[1]))
                    })
                    .collect()
            })
            .collect()
    };
    let d0 = run(Truth::P0)?;
    let d1 = run(Truth::P1)?;
    let encode = |d: &Vec<Vec<usize>>| -> Vec<u8> { d.iter().flatten().map(|&m| m as u8).collect() };
    let identical = encode(&d0) == encode(&d1);
    let pi = |d: &Vec<Vec<usize>>| -> Vec<f64> {
        d.iter().map(|v| v.iter().sum::<usize>() as f64 / reps_per_k as f64).collect()
    };
    let (pi_p0, pi_p1) = (pi(&d0), pi(&d1));
    let all_b = (1.0 - inst.alpha).powi(n as i32);
    let mut p1_wrong = 0.0;
    let mut p0_wrong = 0.0;
    for k in 0..=n {
        p1_wrong += binom_pmf(n as u64, 0.5 + inst.h, k as u64)? * (1.0 - pi_p1[k]);
        p0_wrong += binom_pmf(n as u64, 0.5 - inst.h, k as u64)? * pi_p0[k];
    }
    let (p1_all_b_wrong, p0_all_b_wrong) = (all_b * p1_wrong, all_b * p0_wrong);
    Ok(ReplayReport {
        schema: SCHEMA_VERSION,
        n,
        rule: rule.name(),
        reps_per_k,
        pi_p0,
        pi_p1,
        identical,
        p1_all_b_wrong,
        p0_all_b_wrong,
        dichotomy_lower_bound: p1_all_b_wrong.max(p0_all_b_wrong),
    })
}

// ---------------------------------------------------------------------------
// Nested chain with local Rademacher penalties

pub struct NestedConfig {
    pub kappa: f64,
    /// Number of models in the chain (prefixes of the odd flips).
    pub models: usize,
    /// Truncation depth of the margin-gap law.
    pub depth: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// `t` is taken from `complexity.t`.
    pub complexity: ComplexityConfig,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub eps_grid: Vec<f64>,
    pub timing: bool,
}

impl NestedConfig {
    /// The chain of odd flips with `t = ln|M_n| + 3 ln n`, `c = 5/7`,
    /// `C_1 = √2`, `C_2 = 2/(K̄q)` and default complexity constants.
    pub fn prop1_odd(kappa: f64, n: usize, reps: usize, seed: u64) -> Self {
        let models = 4;
        let complexity = ComplexityConfig { seed, ..Default::default() }.with_t(auto_t(models, n));
        NestedConfig {
            kappa,
            models,
            depth: 12,
            n,
            reps,
            seed,
            c: 5.0 / 7.0,
            c1: 2f64.sqrt(),
            c2: 2.0 / (complexity.kbar * complexity.q),
            complexity,
            eps_grid: default_eps_grid(),
            timing: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NestedSummary {
    pub schema: u32,
    pub experiment: &'static str,
    pub kappa: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub t: f64,
    pub model_sizes: Vec<usize>,
    pub assumptions_satisfied: usize,
    pub assumption_fraction: f64,
    pub lower_bound_fraction: f64,
    pub pair_condition_fraction: f64,
    pub bernstein_fraction: f64,
    pub conclusion_holds: usize,
    /// Fraction of assumption-satisfying replicates where the conclusion
    /// holds for every ε on the grid; `1.0` when none satisfied them.
    pub conclusion_fraction: f64,
    pub saturated_fraction: f64,
    /// Fraction of (replicate, model) pairs with `δ̂_n ≥ δ̄_n`.
    pub delta_hat_above_ideal: f64,
    pub ideal_complexities: Vec<f64>,
    pub excess_quantiles: Quantiles,
    pub population_excess: Vec<f64>,
    pub selection_counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            return Quantiles { min: f64::NAN, q25: f64::NAN, median: f64::NAN, q75: f64::NAN, max: f64::NAN };
        }
        let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        Quantiles { min: v[0], q25: at(0.25), median: at(0.5), q75: at(0.75), max: v[v.len() - 1] }
    }
}

/// The chain `{f_1} ⊂ {f_1, f_3} ⊂ …` of odd flips of the margin-gap law.
pub fn prop1_odd_chain(kappa: f64, models: usize, depth: usize) -> Result<(ModelFamily, DiscreteDistribution, LossFunction)> {
    if models == 0 || models > depth {
        return param(format!("the odd chain needs 1 ≤ models ≤ depth, got {models} with depth {depth}"));
    }
    let inst = build_margin_gap(kappa, depth, 2 * models)?;
    let odd: Vec<LossFunction> = (0..models).map(|k| inst.fs[2 * k + 1].clone()).collect();
    let family = build_family(&PredictorClassSpec::PrefixNested(odd), inst.domain())?;
    Ok((family, inst.p, inst.fstar))
}

struct Checked {
    assumptions: bool,
    lower: bool,
    pair: bool,
    bernstein: bool,
}

fn bernstein_all(family: &ModelFamily, sample: &Sample, p: &DiscreteDistribution, fstar: &LossFunction, t: &[f64]) -> Result<bool> {
    for (model, tm) in family.models().iter().zip(t) {
        if !bernstein_event(model, sample, p, fstar, *tm)?.holds {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn run_nested(cfg: &NestedConfig) -> Result<(NestedSummary, Vec<ReplicateRecord>)> {
    check_reps(cfg.reps, &[cfg.n])?;
    if cfg.eps_grid.is_empty() {
        return param("ε grid is empty");
    }
    let (family, p, fstar) = prop1_odd_chain(cfg.kappa, cfg.models, cfg.depth)?;
    let k = family.len();
    let t = vec![cfg.complexity.t; k];
    let margins: Vec<_> = family
        .models()
        .iter()
        .map(|m| Ok(extract_margin(m, &p, &fstar)?.phi))
        .collect::<Result<_>>()?;
    let ideal: Vec<f64> = family
        .models()
        .iter()
        .map(|m| Ok(crate::complexity::fixed_point(crate::complexity::FixedPointKind::Ideal { p: &p, n: cfg.n }, m, &cfg.complexity)?.delta))
        .collect::<Result<_>>()?;
    let spec = PenaltySpec::local_rademacher(cfg.complexity);
    let outcomes: Vec<(ReplicateRecord, Checked, Vec<f64>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            let seed = derive_path(cfg.seed, &[cfg.n as u64, r as u64]);
            let sample = draw_sample(&p, cfg.n, seed)?;
            let pens = compute_penalties(&family, &sample, &spec, None)?;
            let reports = pens.complexity.expect("local Rademacher penalties carry reports");
            let out = select_with_penalties(&family, &sample, &pens.values, Some((&p, &fstar)))?;
            let rep = assumption_checker(&AssumptionInputs {
                family: &family,
                sample: &sample,
                p: &p,
                fstar: &fstar,
                pen: &pens.values,
                t: &t,
                c: cfg.c,
                c1: cfg.c1,
                c2: cfg.c2,
            })?;
            let bernstein = bernstein_all(&family, &sample, &p, &fstar, &t)?;
            let excess = out.excess.expect("truth supplied");
            let mut tightest = f64::INFINITY;
            let mut holds = true;
            for &eps in &cfg.eps_grid {
                let rhs = oracle_rhs_nested(&NestedRhsInputs {
                    family: &family,
                    p: &p,
                    fstar: &fstar,
                    pen: &pens.values,
                    t: &t,
                    margins: &margins,
                    n: cfg.n,
                    c1: cfg.c1,
                    c2: cfg.c2,
                    eps,
                })?;
                holds &= excess <= rhs.value + CHECK_TOL;
                tightest = tightest.min(rhs.value);
            }
            let checked = Checked {
                assumptions: rep.lower_bound_holds && rep.pair_condition_holds && bernstein,
                lower: rep.lower_bound_holds,
                pair: rep.pair_condition_holds,
                bernstein,
            };
            let mut rec = ReplicateRecord::new("nested", format!("kappa={}", cfg.kappa), cfg.n, r, seed);
            rec.chosen = Some(out.chosen);
            rec.excess = Some(excess);
            rec.assumptions_ok = Some(checked.assumptions);
            rec.rhs = Some(tightest);
            rec.conclusion_ok = Some(holds);
            rec.saturated = Some(reports.iter().any(|r| r.saturated));
            rec.elapsed_us = elapsed(start, cfg.timing);
            let deltas = reports.iter().map(|r| r.delta).collect();
            Ok((rec, checked, deltas))
        })
        .collect::<Result<_>>()?;
    let reps = cfg.reps as f64;
    let frac = |f: &dyn Fn(&Checked) -> bool| outcomes.iter().filter(|o| f(&o.1)).count() as f64 / reps;
    let satisfied: Vec<&ReplicateRecord> =
        outcomes.iter().filter(|o| o.1.assumptions).map(|o| &o.0).collect();
    let conclusion_holds = satisfied.iter().filter(|r| r.conclusion_ok == Some(true)).count();
    let above = outcomes
        .iter()
        .flat_map(|o| o.2.iter().zip(&ideal).map(|(h, i)| h >= i))
        .filter(|b| *b)
        .count() as f64
        / (reps * k as f64);
    let mut selection_counts = vec![0; k];
    for o in &outcomes {
        selection_counts[o.0.chosen.unwrap()] += 1;
    }
    let excesses: Vec<f64> = outcomes.iter().map(|o| o.0.excess.unwrap()).collect();
    let population_excess = family
        .models()
        .iter()
        .map(|m| excess_risk(crate::erm::population_minimizer(m, &p)?, &p, &fstar))
        .collect::<Result<_>>()?;
    let summary = NestedSummary {
        schema: SCHEMA_VERSION,
        experiment: "nested",
        kappa: cfg.kappa,
        n: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        t: cfg.complexity.t,
        model_sizes: family.models().iter().map(Model::len).collect(),
        assumptions_satisfied: satisfied.len(),
        assumption_fraction: satisfied.len() as f64 / reps,
        lower_bound_fraction: frac(&|c| c.lower),
        pair_condition_fraction: frac(&|c| c.pair),
        bernstein_fraction: frac(&|c| c.bernstein),
        conclusion_holds,
        conclusion_fraction: if satisfied.is_empty() { 1.0 } else { conclusion_holds as f64 / satisfied.len() as f64 },
        saturated_fraction: outcomes.iter().filter(|o| o.0.saturated == Some(true)).count() as f64 / reps,
        delta_hat_above_ideal: above,
        ideal_complexities: ideal,
        excess_quantiles: Quantiles::of(&excesses),
        population_excess,
        selection_counts,
    };
    Ok((summary, outcomes.into_iter().map(|o| o.0).collect()))
}

// ---------------------------------------------------------------------------
// Non-nested family with oracle penalties

pub struct GeneralConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub c: f64,
    /// Common `t_m`; `None` means `ln|M_n| + 3 ln n`.
    pub t: Option<f64>,
    pub eps_grid: Vec<f64>,
    pub timing: bool,
}

impl GeneralConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        GeneralConfig { n, reps, seed, c: 0.5, t: None, eps_grid: default_eps_grid(), timing: false }
    }
}

/// Four points, eight atoms, three overlapping but non-nested models of
/// three predictors each. The Bayes predictor `0011` sits in the first.
pub fn general_instance() -> Result<(ModelFamily, DiscreteDistribution, LossFunction)> {
    let domain = Arc::new(Domain::product(["x0", "x1", "x2", "x3"])?);
    let p = DiscreteDistribution::from_regression(domain.clone(), &[0.4, 0.3, 0.2, 0.1], &[0.1, 0.45, 0.7, 0.95])?;
    let predictor = |bits: &str| -> Vec<u8> { bits.bytes().map(|b| b - b'0').collect() };
    let loss = |bits: &str| -> Result<LossFunction> {
        let u = predictor(bits);
        let id = u.iter().fold(0usize, |acc, b| acc << 1 | usize::from(*b));
        LossFunction::zero_one(id, domain.clone(), &u)
    };
    let model = |name: &str, members: &[&str]| -> Result<Model> {
        Model::new(name, members.iter().map(|b| loss(b)).collect::<Result<_>>()?)
    };
    let family = ModelFamily::new(
        vec![
            model("A", &["0011", "0001", "0111"])?,
            model("B", &["0101", "0111", "1111"])?,
            model("C", &["0000", "1001", "0101"])?,
        ],
        false,
    )?;
    let fstar = LossFunction::zero_one(crate::distributions::BAYES_ID, domain, &p.bayes_predictor())?;
    Ok((family, p, fstar))
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneralSummary {
    pub schema: u32,
    pub experiment: &'static str,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub c: f64,
    pub t: f64,
    pub assumptions_satisfied: usize,
    pub assumption_fraction: f64,
    pub conclusion_holds: usize,
    pub conclusion_fraction: f64,
    pub excess_quantiles: Quantiles,
    pub selection_counts: Vec<usize>,
}

pub fn run_general(cfg: &GeneralConfig) -> Result<(GeneralSummary, Vec<ReplicateRecord>)> {
    check_reps(cfg.reps, &[cfg.n])?;
    let (family, p, fstar) = general_instance()?;
    let k = family.len();
    let t_common = cfg.t.unwrap_or_else(|| auto_t(k, cfg.n));
    let t = vec![t_common; k];
    let spec = PenaltySpec::IdealOracle { c: cfg.c, t: t.clone() };
    let records: Vec<ReplicateRecord> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            let seed = derive_path(cfg.seed, &[cfg.n as u64, r as u64]);
            let sample = draw_sample(&p, cfg.n, seed)?;
            let truth = Some((&p, &fstar));
            let pens = compute_penalties(&family, &sample, &spec, truth)?;
            let out = select_with_penalties(&family, &sample, &pens.values, truth)?;
            let rep = assumption_checker(&AssumptionInputs {
                family: &family,
                sample: &sample,
                p: &p,
                fstar: &fstar,
                pen: &pens.values,
                t: &t,
                c: cfg.c,
                c1: 0.0,
                c2: 0.0,
            })?;
            let bernstein = bernstein_all(&family, &sample, &p, &fstar, &t)?;
            let excess = out.excess.expect("truth supplied");
            let mut holds = true;
            let mut tightest = f64::INFINITY;
            for &eps in &cfg.eps_grid {
                let rhs = oracle_rhs_general(&GeneralRhsInputs {
                    family: &family,
                    p: &p,
                    fstar: &fstar,
                    pen: &pens.values,
                    t: &t,
                    n: cfg.n,
                    c: cfg.c,
                    eps,
                })?;
                holds &= excess <= rhs.total() + CHECK_TOL;
                tightest = tightest.min(rhs.total());
            }
            let mut rec = ReplicateRecord::new("general", format!("c={}", cfg.c), cfg.n, r, seed);
            rec.chosen = Some(out.chosen);
            rec.excess = Some(excess);
            rec.assumptions_ok = Some(rep.lower_bound_holds && bernstein);
            rec.rhs = Some(tightest);
            rec.conclusion_ok = Some(holds);
            rec.elapsed_us = elapsed(start, cfg.timing);
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let satisfied: Vec<&ReplicateRecord> = records.iter().filter(|r| r.assumptions_ok == Some(true)).collect();
    let conclusion_holds = satisfied.iter().filter(|r| r.conclusion_ok == Some(true)).count();
    let mut selection_counts = vec![0; k];
    for r in &records {
        selection_counts[r.chosen.unwrap()] += 1;
    }
    let excesses: Vec<f64> = records.iter().map(|r| r.excess.unwrap()).collect();
    let summary = GeneralSummary {
        schema: SCHEMA_VERSION,
        experiment: "general",
        n: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        c: cfg.c,
        t: t_common,
        assumptions_satisfied: satisfied.len(),
        assumption_fraction: satisfied.len() as f64 / cfg.reps as f64,
        conclusion_holds,
        conclusion_fraction: if satisfied.is_empty() { 1.0 } else { conclusion_holds as f64 / satisfied.len() as f64 },
        excess_quantiles: Quantiles::of(&excesses),
        selection_counts,
    };
    Ok((summary, records))
}

// ---------------------------------------------------------------------------
// Bernstein coverage

pub struct CoverageConfig {
    pub n_list: Vec<usize>,
    pub t_list: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub timing: bool,
}

/// Two points of mass 1/2. At `c` the label is a fair coin, at `d` it is 1
/// with probability 0.8. Models are the singletons `{f*}`, the flip at `c`
/// (`f − f* = ±1` with equal probability on `c`) and the flip at `d`.
pub fn coverage_instance() -> Result<(ModelFamily, DiscreteDistribution, LossFunction)> {
    let domain = Arc::new(Domain::product(["c", "d"])?);
    let p = DiscreteDistribution::from_regression(domain.clone(), &[0.5, 0.5], &[0.5, 0.8])?;
    let s = p.bayes_predictor();
    let fstar = LossFunction::zero_one(0, domain.clone(), &s)?;
    let flip = |x: usize, id: usize| -> Result<LossFunction> {
        let mut u = s.clone();
        u[x] = 1 - u[x];
        LossFunction::zero_one(id, domain.clone(), &u)
    };
    let family = ModelFamily::new(
        vec![
            Model::new("bayes", vec![fstar.clone()])?,
            Model::new("fair-flip", vec![flip(0, 1)?])?,
            Model::new("noisy-flip", vec![flip(1, 2)?])?,
        ],
        false,
    )?;
    Ok((family, p, fstar))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageCell {
    pub n: usize,
    pub t: f64,
    pub model: String,
    pub variance: f64,
    pub coverage: f64,
    pub std_error: f64,
    /// `1 − 2e^{−t}`.
    pub nominal: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageSummary {
    pub schema: u32,
    pub experiment: &'static str,
    pub reps: usize,
    pub seed: u64,
    pub cells: Vec<CoverageCell>,
}

pub fn run_coverage(cfg: &CoverageConfig) -> Result<(CoverageSummary, Vec<ReplicateRecord>)> {
    check_reps(cfg.reps, &cfg.n_list)?;
    if cfg.t_list.is_empty() || cfg.t_list.iter().any(|t| !(*t > 0.0)) {
        return param("t values must be positive and nonempty");
    }
    let (family, p, fstar) = coverage_instance()?;
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for &n in &cfg.n_list {
        for &t in &cfg.t_list {
            let rows: Vec<(ReplicateRecord, Vec<bool>)> = (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let start = Instant::now();
                    let seed = derive_path(cfg.seed, &[n as u64, t.to_bits(), r as u64]);
                    let sample = draw_sample(&p, n, seed)?;
                    let hits = family
                        .models()
                        .iter()
                        .map(|m| Ok(bernstein_event(m, &sample, &p, &fstar, t)?.holds))
                        .collect::<Result<Vec<bool>>>()?;
                    let mut rec = ReplicateRecord::new("coverage", format!("t={t:.6}"), n, r, seed);
                    rec.conclusion_ok = Some(hits.iter().all(|h| *h));
                    rec.elapsed_us = elapsed(start, cfg.timing);
                    Ok((rec, hits))
                })
                .collect::<Result<_>>()?;
            for (m, model) in family.models().iter().enumerate() {
                let coverage = rows.iter().filter(|(_, h)| h[m]).count() as f64 / cfg.reps as f64;
                cells.push(CoverageCell {
                    n,
                    t,
                    model: model.name().to_string(),
                    variance: population_variance(&model.functions()[0], &fstar, &p)?,
                    coverage,
                    std_error: frequency_std_error(coverage, cfg.reps),
                    nominal: 1.0 - 2.0 * (-t).exp(),
                });
            }
            records.extend(rows.into_iter().map(|(r, _)| r));
        }
    }
    Ok((CoverageSummary { schema: SCHEMA_VERSION, experiment: "coverage", reps: cfg.reps, seed: cfg.seed, cells }, records))
}

// ---------------------------------------------------------------------------
// Margin gap

pub struct MarginGapConfig {
    pub kappa: f64,
    pub n_list: Vec<usize>,
    /// Per-level checks run for `k ≤ k_max`.
    pub k_max: usize,
    pub probes: usize,
    pub seed: u64,
}

/// `M_n = ⌈2 log₂ n⌉`.
pub fn model_count(n: usize) -> usize {
    (2.0 * (n as f64).log2()).ceil() as usize
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Row {
    pub k: usize,
    pub b: f64,
    pub bracket_lower: f64,
    pub bracket_upper: f64,
    pub excess_even: f64,
    pub excess_odd: f64,
    /// Both excess risks equal `b(k)` and `b(k)` sits in its bracket.
    pub bracket_ok: bool,
    pub variance_odd: f64,
    /// `Var(f_{2k+1} − f*) ≥ 2^{-k-3}` and `Var^κ / b(k) ≥ 2^{1−3κ}`.
    pub tightness_ok: bool,
    pub variance_even: f64,
    /// `Var(f_{2k} − f*) ≤ P(f_{2k} − f*)`.
    pub local_margin_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub m_n: usize,
    pub local: f64,
    pub local_bound: f64,
    pub local_ok: bool,
    pub argmin: usize,
    /// Largest even `j ≤ M_n` with `P(f_j − f*) ≤ ln(n)/n`.
    pub expected_argmin: Option<usize>,
    /// `n^{-κ/(2κ−1)}`.
    pub global_shape: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginGapSummary {
    pub schema: u32,
    pub experiment: &'static str,
    pub kappa: f64,
    pub depth: usize,
    pub prop1: Vec<Prop1Row>,
    pub gap: Vec<GapRow>,
    pub ratio_decreasing: bool,
    /// `min P(f − f*) / Var(f − f*)^κ` over random predictors (diagnostic).
    pub probe_min_ratio: f64,
    pub probes: usize,
    pub passed: bool,
}

pub fn prop1_checks(kappa: f64, k_max: usize) -> Result<Vec<Prop1Row>> {
    let inst = build_margin_gap(kappa, k_max + 2, 2 * (k_max + 1))?;
    (0..=k_max)
        .map(|k| {
            let b = inst.b(k);
            let kf = k as f64;
            let bracket_lower = 2f64.powf(-kf * kappa - 2.0);
            let bracket_upper = 2f64.powf(-kf * kappa - 1.0);
            let excess_even = inst.excess(2 * k)?;
            let excess_odd = inst.excess(2 * k + 1)?;
            let variance_even = inst.variance(2 * k)?;
            let variance_odd = inst.variance(2 * k + 1)?;
            let close = |a: f64, b: f64| (a - b).abs() <= CHECK_TOL * b.max(1e-300).max(1.0) * 1e-2 + 1e-15;
            Ok(Prop1Row {
                k,
                b,
                bracket_lower,
                bracket_upper,
                excess_even,
                excess_odd,
                bracket_ok: close(excess_even, b)
                    && close(excess_odd, b)
                    && bracket_lower <= b
                    && b <= bracket_upper,
                variance_odd,
                tightness_ok: variance_odd >= 2f64.powf(-kf - 3.0)
                    && variance_odd.powf(kappa) / b >= 2f64.powf(1.0 - 3.0 * kappa),
                variance_even,
                local_margin_ok: variance_even <= excess_even,
            })
        })
        .collect()
}

pub fn run_margin_gap(cfg: &MarginGapConfig) -> Result<MarginGapSummary> {
    if cfg.n_list.iter().any(|n| *n < 2) || cfg.n_list.is_empty() {
        return param("margin gap needs sample sizes ≥ 2");
    }
    let prop1 = prop1_checks(cfg.kappa, cfg.k_max)?;
    let max_models = cfg.n_list.iter().map(|n| model_count(*n)).max().unwrap() + 1;
    let depth = max_models.div_ceil(2) + 1;
    let inst = build_margin_gap(cfg.kappa, depth, 2 * depth)?;
    let gamma = cfg.kappa / (2.0 * cfg.kappa - 1.0);
    let gap: Vec<GapRow> = cfg
        .n_list
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let ln_n_over_n = nf.ln() / nf;
            let m_n = model_count(n);
            let mut local = f64::INFINITY;
            let mut argmin = 0;
            let mut expected_argmin = None;
            for j in (0..=m_n).step_by(2) {
                let e = inst.excess(j)?;
                if e + ln_n_over_n < local {
                    local = e + ln_n_over_n;
                    argmin = j;
                }
                if e <= ln_n_over_n {
                    expected_argmin = Some(j);
                }
            }
            let global_shape = nf.powf(-gamma);
            Ok(GapRow {
                n,
                m_n,
                local,
                local_bound: 2.0 * ln_n_over_n,
                local_ok: local <= 2.0 * ln_n_over_n + CHECK_TOL,
                argmin,
                expected_argmin,
                global_shape,
                ratio: local / global_shape,
            })
        })
        .collect::<Result<_>>()?;
    let mut sorted = gap.clone();
    sorted.sort_by_key(|r| r.n);
    let ratio_decreasing = sorted.windows(2).all(|w| w[1].ratio < w[0].ratio || w[1].n == w[0].n);

    let xs = inst.domain().x_count();
    let mut rng = stream_rng(cfg.seed, 3);
    let mut probe_min_ratio = f64::INFINITY;
    for i in 0..cfg.probes {
        let u: Vec<u8> = (0..xs).map(|_| rng.gen_range(0..=1)).collect();
        let f = LossFunction::zero_one(i, inst.domain().clone(), &u)?;
        let var = population_variance(&f, &inst.fstar, &inst.p)?;
        if var > 0.0 {
            probe_min_ratio = probe_min_ratio.min(excess_risk(&f, &inst.p, &inst.fstar)? / var.powf(cfg.kappa));
        }
    }
    let passed = prop1.iter().all(|r| r.bracket_ok && r.tightness_ok && r.local_margin_ok)
        && gap.iter().all(|g| g.local_ok && Some(g.argmin) == g.expected_argmin)
        && ratio_decreasing;
    Ok(MarginGapSummary {
        schema: SCHEMA_VERSION,
        experiment: "margin-gap",
        kappa: cfg.kappa,
        depth,
        prop1,
        gap,
        ratio_decreasing,
        probe_min_ratio,
        probes: cfg.probes,
        passed,
    })
}

// ---------------------------------------------------------------------------
// Binomial floor

#[derive(Debug, Clone, Serialize)]
pub struct BinomialFloorSummary {
    pub schema: u32,
    pub experiment: &'static str,
    pub floors: Vec<FloorReport>,
    /// `sqrt(n) P(Z = n/2)` at `p = 1/2` for `central_n`.
    pub central_n: u64,
    pub central_value: f64,
    pub central_limit: f64,
}

pub fn run_binomial_floor(n_list: &[u64], a: f64, b: f64, c: f64, mode: FloorMode) -> Result<BinomialFloorSummary> {
    if n_list.is_empty() {
        return param("the list of sample sizes is empty");
    }
    let floors = n_list
        .par_iter()
        .map(|&n| pmf_floor(n, a, b, c, mode))
        .collect::<Result<Vec<_>>>()?;
    let central_n = 10_000;
    Ok(BinomialFloorSummary {
        schema: SCHEMA_VERSION,
        experiment: "binomial-floor",
        floors,
        central_n,
        central_value: central_value(central_n)?,
        central_limit: (2.0 / std::f64::consts::PI).sqrt(),
    })
}
