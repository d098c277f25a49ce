//! Explicit problem instances.
//!
//! - [`CounterexampleInstance`]: two constant predictors on a two-point `X`,
//!   with a sample-size dependent law under which one of them is far better
//!   than it looks.
//! - [`MarginGapInstance`]: a countable sequence of one-point flips of the
//!   Bayes predictor, truncated at a finite depth, where even-indexed flips
//!   enjoy a much stronger margin than odd-indexed ones.

use std::sync::Arc;

use serde::Serialize;

use crate::domain::{
    excess_risk, population_mean, population_variance, Atom, DiscreteDistribution, Domain, LossFunction,
};
use crate::error::{param, Result};

/// Id given to Bayes loss functions so they never collide with class members.
pub const BAYES_ID: usize = 1 << 40;

/// Which of the two mirrored laws of the counterexample is the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Truth {
    P0,
    P1,
}

impl Truth {
    pub fn index(self) -> usize {
        match self {
            Truth::P0 => 0,
            Truth::P1 => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CounterexampleInstance {
    pub n: usize,
    /// `(2n)^{-1}`: mass of the point `a`.
    pub alpha: f64,
    /// `(2n)^{-1/2}`: bias of the label at `b`.
    pub h: f64,
    pub p0: DiscreteDistribution,
    pub p1: DiscreteDistribution,
    /// Loss of the constant predictor 0, `(x, y) ↦ 1{y ≠ 0}`.
    pub f0: LossFunction,
    /// Loss of the constant predictor 1, `(x, y) ↦ 1{y ≠ 1}`.
    pub f1: LossFunction,
    pub fstar0: LossFunction,
    pub fstar1: LossFunction,
}

impl CounterexampleInstance {
    pub fn domain(&self) -> &Arc<Domain> {
        self.p1.domain()
    }

    pub fn law(&self, truth: Truth) -> &DiscreteDistribution {
        match truth {
            Truth::P0 => &self.p0,
            Truth::P1 => &self.p1,
        }
    }

    pub fn bayes(&self, truth: Truth) -> &LossFunction {
        match truth {
            Truth::P0 => &self.fstar0,
            Truth::P1 => &self.fstar1,
        }
    }

    /// `[f_0, f_1]`, indexed by the model label.
    pub fn candidates(&self) -> [&LossFunction; 2] {
        [&self.f0, &self.f1]
    }

    pub fn excess(&self, m: usize, truth: Truth) -> Result<f64> {
        excess_risk(self.candidates()[m], self.law(truth), self.bayes(truth))
    }
}

/// Build the two-point counterexample for sample size `n ≥ 2`.
pub fn build_counterexample(n: usize) -> Result<CounterexampleInstance> {
    if n < 2 {
        return param(format!("counterexample needs n ≥ 2, got {n}"));
    }
    let alpha = 1.0 / (2.0 * n as f64);
    let h = (2.0 * n as f64).powf(-0.5);
    let domain = Arc::new(Domain::product(["a", "b"])?);
    let p1 = DiscreteDistribution::from_regression(domain.clone(), &[alpha, 1.0 - alpha], &[0.0, 0.5 + h])?;
    let p0 = p1.flip_labels()?;
    let f0 = LossFunction::zero_one(0, domain.clone(), &[0, 0])?;
    let f1 = LossFunction::zero_one(1, domain.clone(), &[1, 1])?;
    let fstar1 = LossFunction::zero_one(BAYES_ID, domain.clone(), &p1.bayes_predictor())?;
    let fstar0 = LossFunction::zero_one(BAYES_ID + 1, domain, &p0.bayes_predictor())?;
    Ok(CounterexampleInstance { n, alpha, h, p0, p1, f0, f1, fstar0, fstar1 })
}

/// One branch of the benchmark `P(f_m − f*) + v̄(m) + ln(n)/(n h_m)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BenchmarkBranch {
    pub excess: f64,
    pub variance: f64,
    pub v_bar: f64,
    /// `P(f_m − f*) / Var_P(f_m − f*)`, `+∞` when the variance vanishes.
    pub h_m: f64,
    pub value: f64,
}

/// Benchmark branch for a candidate `f` under `(P, f*)` at sample size `n`.
pub fn benchmark_branch(
    f: &LossFunction,
    p: &DiscreteDistribution,
    fstar: &LossFunction,
    n: usize,
) -> Result<BenchmarkBranch> {
    let ln_n = (n as f64).ln();
    let excess = excess_risk(f, p, fstar)?;
    let variance = population_variance(f, fstar, p)?;
    let v_bar = (2.0 * ln_n * variance / n as f64).sqrt();
    let h_m = if variance > 0.0 { excess / variance } else { f64::INFINITY };
    // ln(n)/(n·∞) = 0; an excess of zero with positive variance gives h = 0
    // and an infinite branch.
    let tail = if h_m.is_infinite() { 0.0 } else { ln_n / (n as f64 * h_m) };
    Ok(BenchmarkBranch { excess, variance, v_bar, h_m, value: excess + v_bar + tail })
}

/// `min_m {P(f_m − f*) + v̄(m) + ln(n)/(n h_m)}` under the chosen law.
pub fn oracle_benchmark_under(inst: &CounterexampleInstance, truth: Truth) -> Result<(f64, [BenchmarkBranch; 2])> {
    let p = inst.law(truth);
    let fstar = inst.bayes(truth);
    let b0 = benchmark_branch(&inst.f0, p, fstar, inst.n)?;
    let b1 = benchmark_branch(&inst.f1, p, fstar, inst.n)?;
    Ok((b0.value.min(b1.value), [b0, b1]))
}

/// The benchmark under `P_1`.
pub fn oracle_benchmark(inst: &CounterexampleInstance) -> Result<f64> {
    Ok(oracle_benchmark_under(inst, Truth::P1)?.0)
}

/// Truncated margin-gap construction.
#[derive(Debug, Clone)]
pub struct MarginGapInstance {
    pub kappa: f64,
    /// `κ − 1`.
    pub lambda: f64,
    /// Truncation depth: pairs `(x_{2k}, x_{2k+1})` exist for `k < depth`.
    pub depth: usize,
    pub p: DiscreteDistribution,
    /// `f_j` for `j < M`: the 0-1 loss of the Bayes predictor flipped at `x_j`.
    pub fs: Vec<LossFunction>,
    pub fstar: LossFunction,
    /// `p_k = 2^{-k-1}`.
    pub p_seq: Vec<f64>,
    /// `δ_k = 2^{-kλ}`.
    pub delta_seq: Vec<f64>,
    /// `q_k = δ_k / (1 + δ_k)`.
    pub q_seq: Vec<f64>,
}

impl MarginGapInstance {
    pub fn domain(&self) -> &Arc<Domain> {
        self.p.domain()
    }

    /// `b(k) = p_k q_k`, the excess risk shared by `f_{2k}` and `f_{2k+1}`.
    pub fn b(&self, k: usize) -> f64 {
        self.p_seq[k] * self.q_seq[k]
    }

    pub fn excess(&self, j: usize) -> Result<f64> {
        excess_risk(&self.fs[j], &self.p, &self.fstar)
    }

    pub fn variance(&self, j: usize) -> Result<f64> {
        population_variance(&self.fs[j], &self.fstar, &self.p)
    }

    pub fn bayes_risk(&self) -> Result<f64> {
        population_mean(&self.fstar, &self.p)
    }
}

/// Build the margin-gap instance with exponent `kappa > 1`, truncation depth
/// `depth ≥ 2` and `model_count ≤ 2·depth` loss functions.
///
/// The residual mass `2^{-depth}` sits on an extra atom with `η = 0`, where
/// every `f_j` agrees with the Bayes loss.
pub fn build_margin_gap(kappa: f64, depth: usize, model_count: usize) -> Result<MarginGapInstance> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return param(format!("margin gap needs κ > 1, got {kappa}"));
    }
    if depth < 2 {
        return param(format!("margin gap needs depth ≥ 2, got {depth}"));
    }
    if depth > 60 {
        return param("margin gap depth above 60 underflows the residual mass");
    }
    if model_count > 2 * depth {
        return param(format!("at most {} functions at depth {depth}", 2 * depth));
    }
    let lambda = kappa - 1.0;
    let p_seq: Vec<f64> = (0..depth).map(|k| 2f64.powi(-(k as i32) - 1)).collect();
    let delta_seq: Vec<f64> = (0..depth).map(|k| 2f64.powf(-(k as f64) * lambda)).collect();
    let q_seq: Vec<f64> = delta_seq.iter().map(|d| d / (1.0 + d)).collect();

    let mut labels: Vec<String> = (0..2 * depth).map(|j| format!("x{j}")).collect();
    labels.push("absorb".into());
    let domain = Arc::new(Domain::product(labels)?);
    let mut x_masses = Vec::with_capacity(2 * depth + 1);
    let mut eta = Vec::with_capacity(2 * depth + 1);
    for k in 0..depth {
        x_masses.push(p_seq[k] * q_seq[k]);
        eta.push(0.0);
        x_masses.push(p_seq[k] * (1.0 - q_seq[k]));
        eta.push((1.0 + delta_seq[k]) / 2.0);
    }
    x_masses.push(2f64.powi(-(depth as i32)));
    eta.push(0.0);
    let p = DiscreteDistribution::from_regression(domain.clone(), &x_masses, &eta)?;

    let s = p.bayes_predictor();
    let fstar = LossFunction::zero_one(BAYES_ID, domain.clone(), &s)?;
    let fs = (0..model_count)
        .map(|j| {
            let mut u = s.clone();
            u[j] = 1 - u[j];
            LossFunction::zero_one(j, domain.clone(), &u)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginGapInstance { kappa, lambda, depth, p, fs, fstar, p_seq, delta_seq, q_seq })
}

#[derive(Debug, Clone, Serialize)]
pub struct AtomEntry {
    pub x: usize,
    pub x_label: String,
    pub y: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedMasses {
    pub name: String,
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedLoss {
    pub name: String,
    pub id: usize,
    pub values: Vec<f64>,
}

/// JSON document describing an instance: atoms, laws and loss tables.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceDocument {
    pub schema: u32,
    pub kind: String,
    pub parameters: serde_json::Value,
    pub atoms: Vec<AtomEntry>,
    pub distributions: Vec<NamedMasses>,
    pub losses: Vec<NamedLoss>,
}

fn atom_entries(domain: &Domain) -> Vec<AtomEntry> {
    domain
        .atoms()
        .iter()
        .map(|&Atom { x, y }| AtomEntry { x, x_label: domain.x_labels()[x].clone(), y })
        .collect()
}

fn named_loss(name: impl Into<String>, f: &LossFunction) -> NamedLoss {
    NamedLoss { name: name.into(), id: f.id(), values: f.values().to_vec() }
}

impl CounterexampleInstance {
    pub fn document(&self) -> InstanceDocument {
        InstanceDocument {
            schema: 1,
            kind: "counterexample".into(),
            parameters: serde_json::json!({ "n": self.n, "alpha": self.alpha, "h": self.h }),
            atoms: atom_entries(self.domain()),
            distributions: vec![
                NamedMasses { name: "P0".into(), masses: self.p0.masses().to_vec() },
                NamedMasses { name: "P1".into(), masses: self.p1.masses().to_vec() },
            ],
            losses: vec![
                named_loss("f0", &self.f0),
                named_loss("f1", &self.f1),
                named_loss("fstar0", &self.fstar0),
                named_loss("fstar1", &self.fstar1),
            ],
        }
    }
}

impl MarginGapInstance {
    pub fn document(&self) -> InstanceDocument {
        let mut losses: Vec<NamedLoss> =
            self.fs.iter().enumerate().map(|(j, f)| named_loss(format!("f{j}"), f)).collect();
        losses.push(named_loss("fstar", &self.fstar));
        InstanceDocument {
            schema: 1,
            kind: "margin-gap".into(),
            parameters: serde_json::json!({
                "kappa": self.kappa,
                "lambda": self.lambda,
                "depth": self.depth,
                "models": self.fs.len(),
            }),
            atoms: atom_entries(self.domain()),
            distributions: vec![NamedMasses { name: "P".into(), masses: self.p.masses().to_vec() }],
            losses,
        }
    }
}
