//! Penalized model selection and the right-hand sides of the two oracle
//! inequalities.
//!
//! The selected index is `m̂ ∈ argmin_m {P_n(f̂_m) + pen(m)}`, ties broken by
//! the smallest index.

use rayon::prelude::*;
use serde::Serialize;

use crate::complexity::{
    bernstein_radius, centered_ideal_penalty, ComplexityConfig, ComplexityReport, EmpiricalProfile,
};
use crate::domain::{
    empirical_mean, population_mean, population_variance, DiscreteDistribution, LossFunction, Model,
    ModelFamily, Sample,
};
use crate::erm::{erm, population_minimizer, rademacher_signs};
use crate::error::{param, Error, Result};
use crate::margin::MarginFunction;
use crate::rng::derive_path;

/// Penalty scale of the local Rademacher procedure.
pub const LOCAL_RADEMACHER_SCALE: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VEstimate {
    /// Exact `v(m)`; needs the true distribution.
    Oracle,
    /// `sqrt(2 t_m P_n(f̂_m)/n)`, computable from the data.
    PlugIn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltySpec {
    /// `pen(m) = scale · δ̂_n(F_m; t)`.
    LocalRademacher { scale: f64, cfg: ComplexityConfig },
    /// `pen(m) = max{0, (P − P_n)(f̂_m − f_m) + t_m/n} / (1 − c)`, the
    /// smallest penalty meeting the lower-bound condition with constant `c`
    /// whenever that condition can be met at all.
    IdealOracle { c: f64, t: Vec<f64> },
    /// `base(m) + v(m)/c`, with `v(m)` exact or estimated.
    VAugmented { base: Box<PenaltySpec>, c: f64, t: Vec<f64>, estimate: VEstimate },
    Constant(Vec<f64>),
}

impl PenaltySpec {
    pub fn local_rademacher(cfg: ComplexityConfig) -> Self {
        PenaltySpec::LocalRademacher { scale: LOCAL_RADEMACHER_SCALE, cfg }
    }

    pub fn zero(models: usize) -> Self {
        PenaltySpec::Constant(vec![0.0; models])
    }

    pub fn needs_distribution(&self) -> bool {
        match self {
            PenaltySpec::IdealOracle { .. } => true,
            PenaltySpec::VAugmented { base, estimate, .. } => {
                *estimate == VEstimate::Oracle || base.needs_distribution()
            }
            _ => false,
        }
    }

    pub fn validate(&self, models: usize) -> Result<()> {
        let per_model = |what: &str, len: usize| {
            if len == models {
                Ok(())
            } else {
                param(format!("{what} has {len} entries for {models} models"))
            }
        };
        match self {
            PenaltySpec::LocalRademacher { scale, cfg } => {
                if !(*scale > 0.0) {
                    return param(format!("penalty scale must be positive, got {scale}"));
                }
                cfg.validate()
            }
            PenaltySpec::IdealOracle { c, t } => {
                check_c(*c)?;
                per_model("t", t.len())
            }
            PenaltySpec::VAugmented { base, c, t, .. } => {
                check_c(*c)?;
                per_model("t", t.len())?;
                base.validate(models)
            }
            PenaltySpec::Constant(values) => {
                per_model("constant penalty", values.len())?;
                if values.iter().any(|v| !(*v >= 0.0)) {
                    return param("constant penalties must be nonnegative");
                }
                Ok(())
            }
        }
    }
}

fn check_c(c: f64) -> Result<()> {
    if 0.0 < c && c < 1.0 {
        Ok(())
    } else {
        param(format!("c must lie in (0,1), got {c}"))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if 0.0 < eps && eps < 1.0 {
        Ok(())
    } else {
        param(format!("ε must lie in (0,1), got {eps}"))
    }
}

/// Seed of the sign vector used for model `m` on a given sample.
pub fn sign_seed(cfg: &ComplexityConfig, sample: &Sample, m: usize) -> u64 {
    derive_path(cfg.seed, &[sample.seed(), m as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Penalties {
    pub values: Vec<f64>,
    /// Fixed-point reports, for local Rademacher penalties.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Vec<ComplexityReport>>,
}

/// `δ̂_n(F_m; t)` for every model, one sign vector per `(sample, model)`.
pub fn local_rademacher_complexities(
    family: &ModelFamily,
    sample: &Sample,
    cfg: &ComplexityConfig,
) -> Result<Vec<ComplexityReport>> {
    cfg.validate()?;
    family
        .models()
        .par_iter()
        .enumerate()
        .map(|(m, model)| {
            let eps = rademacher_signs(sample.len(), sign_seed(cfg, sample, m));
            Ok(EmpiricalProfile::new(model, sample, &eps)?.fixed_point(cfg))
        })
        .collect()
}

pub fn compute_penalties(
    family: &ModelFamily,
    sample: &Sample,
    spec: &PenaltySpec,
    truth: Option<(&DiscreteDistribution, &LossFunction)>,
) -> Result<Penalties> {
    spec.validate(family.len())?;
    if spec.needs_distribution() && truth.is_none() {
        return param("this penalty needs the true distribution and f*");
    }
    let n = sample.len() as f64;
    match spec {
        PenaltySpec::LocalRademacher { scale, cfg } => {
            let reports = local_rademacher_complexities(family, sample, cfg)?;
            Ok(Penalties { values: reports.iter().map(|r| scale * r.delta).collect(), complexity: Some(reports) })
        }
        PenaltySpec::IdealOracle { c, t } => {
            let (p, _) = truth.expect("checked above");
            let values = family
                .models()
                .iter()
                .zip(t)
                .map(|(model, tm)| Ok((centered_ideal_penalty(model, sample, p)? + tm / n).max(0.0) / (1.0 - c)))
                .collect::<Result<_>>()?;
            Ok(Penalties { values, complexity: None })
        }
        PenaltySpec::VAugmented { base, c, t, estimate } => {
            let mut out = compute_penalties(family, sample, base, truth)?;
            for ((value, model), tm) in out.values.iter_mut().zip(family.models()).zip(t) {
                let v = match estimate {
                    VEstimate::Oracle => {
                        let (p, fstar) = truth.expect("checked above");
                        bernstein_radius(model, p, fstar, *tm, sample.len())?
                    }
                    VEstimate::PlugIn => (2.0 * tm * empirical_mean(erm(model, sample)?, sample)? / n).sqrt(),
                };
                *value += v / c;
            }
            Ok(out)
        }
        PenaltySpec::Constant(values) => Ok(Penalties { values: values.clone(), complexity: None }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelRow {
    pub erm_id: usize,
    pub empirical_risk: f64,
    pub pen: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionOutcome {
    pub chosen: usize,
    pub chosen_id: usize,
    pub per_model: Vec<ModelRow>,
    /// `P(f̂_m̂ − f*)`, when the truth was supplied.
    pub excess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Vec<ComplexityReport>>,
}

/// Penalized ERM with given penalty values.
pub fn select_with_penalties(
    family: &ModelFamily,
    sample: &Sample,
    pen: &[f64],
    truth: Option<(&DiscreteDistribution, &LossFunction)>,
) -> Result<SelectionOutcome> {
    if family.is_empty() {
        return Err(Error::InvalidFamily("cannot select from an empty family".into()));
    }
    if pen.len() != family.len() {
        return param(format!("{} penalties for {} models", pen.len(), family.len()));
    }
    let per_model: Vec<ModelRow> = family
        .models()
        .iter()
        .zip(pen)
        .map(|(model, &pen)| {
            let f = erm(model, sample)?;
            let empirical_risk = empirical_mean(f, sample)?;
            Ok(ModelRow { erm_id: f.id(), empirical_risk, pen, criterion: empirical_risk + pen })
        })
        .collect::<Result<_>>()?;
    let mut chosen = 0;
    for (m, row) in per_model.iter().enumerate() {
        if row.criterion < per_model[chosen].criterion {
            chosen = m;
        }
    }
    let excess = match truth {
        Some((p, fstar)) => {
            let f = erm(&family.models()[chosen], sample)?;
            Some(crate::domain::excess_risk(f, p, fstar)?)
        }
        None => None,
    };
    Ok(SelectionOutcome { chosen, chosen_id: per_model[chosen].erm_id, per_model, excess, complexity: None })
}

pub fn select(
    family: &ModelFamily,
    sample: &Sample,
    penalty: &PenaltySpec,
    truth: Option<(&DiscreteDistribution, &LossFunction)>,
) -> Result<SelectionOutcome> {
    let pens = compute_penalties(family, sample, penalty, truth)?;
    let mut out = select_with_penalties(family, sample, &pens.values, truth)?;
    out.complexity = pens.complexity;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginPoint {
    pub id: usize,
    pub excess: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginFit {
    /// `φ(x) = h x²` with the largest valid `h`; `h = ∞` when no member
    /// constrains it and `h = 0` when some member has zero excess but
    /// positive variance.
    pub phi: MarginFunction,
    pub cloud: Vec<MarginPoint>,
}

impl MarginFit {
    pub fn h(&self) -> f64 {
        match self.phi {
            MarginFunction::Power { h, .. } => h,
            MarginFunction::Tabulated { .. } => unreachable!("fits are quadratic"),
        }
    }
}

/// Largest quadratic local margin `P(f − f*) ≥ h Var_P(f − f*)` over the
/// model, with the raw `(excess, variance)` cloud.
pub fn extract_margin(model: &Model, p: &DiscreteDistribution, fstar: &LossFunction) -> Result<MarginFit> {
    let star = population_mean(fstar, p)?;
    let cloud: Vec<MarginPoint> = model
        .functions()
        .iter()
        .map(|f| {
            Ok(MarginPoint {
                id: f.id(),
                excess: population_mean(f, p)? - star,
                variance: population_variance(f, fstar, p)?,
            })
        })
        .collect::<Result<_>>()?;
    let h = cloud
        .iter()
        .filter(|pt| pt.variance > 0.0)
        .map(|pt| pt.excess.max(0.0) / pt.variance)
        .fold(f64::INFINITY, f64::min);
    Ok(MarginFit { phi: MarginFunction::Power { h, kappa: 1.0 }, cloud })
}

/// Per-model population quantities shared by both right-hand sides.
struct ModelTerms {
    excess: Vec<f64>,
    v: Vec<f64>,
}

fn model_terms(
    family: &ModelFamily,
    p: &DiscreteDistribution,
    fstar: &LossFunction,
    t: &[f64],
    n: usize,
) -> Result<ModelTerms> {
    let star = population_mean(fstar, p)?;
    let mut excess = Vec::with_capacity(family.len());
    let mut v = Vec::with_capacity(family.len());
    for (model, tm) in family.models().iter().zip(t) {
        excess.push(population_mean(population_minimizer(model, p)?, p)? - star);
        v.push(bernstein_radius(model, p, fstar, *tm, n)?);
    }
    Ok(ModelTerms { excess, v })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedRhs {
    pub value: f64,
    pub argmin: usize,
    pub per_model: Vec<f64>,
}

pub struct NestedRhsInputs<'a> {
    pub family: &'a ModelFamily,
    pub p: &'a DiscreteDistribution,
    pub fstar: &'a LossFunction,
    pub pen: &'a [f64],
    pub t: &'a [f64],
    pub margins: &'a [MarginFunction],
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
    pub eps: f64,
}

/// Right-hand side of the nested-family oracle inequality:
/// `(1−ε)^{-1} inf_m {(1 + ε + C_2 + ε C_1) P(f_m − f*) + pen(m)
///   + (1 + max{1, C_1}) min{φ_m*(sqrt(2t_m/(ε²n))), sqrt(2t_m/n)} + t_m/(3n)}`.
pub fn oracle_rhs_nested(inputs: &NestedRhsInputs<'_>) -> Result<NestedRhs> {
    let NestedRhsInputs { family, p, fstar, pen, t, margins, n, c1, c2, eps } = *inputs;
    check_eps(eps)?;
    let k = family.len();
    if pen.len() != k || t.len() != k || margins.len() != k {
        return param("penalties, confidence levels and margins need one entry per model");
    }
    let nf = n as f64;
    let terms = model_terms(family, p, fstar, t, n)?;
    let per_model: Vec<f64> = (0..k)
        .map(|m| {
            let remainder = margins[m]
                .conjugate((2.0 * t[m] / (eps * eps * nf)).sqrt())
                .min((2.0 * t[m] / nf).sqrt());
            ((1.0 + eps + c2 + eps * c1) * terms.excess[m]
                + pen[m]
                + (1.0 + c1.max(1.0)) * remainder
                + t[m] / (3.0 * nf))
                / (1.0 - eps)
        })
        .collect();
    let argmin = argmin(&per_model);
    Ok(NestedRhs { value: per_model[argmin], argmin, per_model })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralRhs {
    /// `(1−ε)^{-1} inf_m {P(f_m − f*) + pen(m) + v(m) + t_m/(3n)}`.
    pub main: f64,
    /// `(1−ε)^{-1} sup_m {v(m) − ε P(f_m − f*) − c pen(m)}`.
    pub v_n: f64,
    pub argmin: usize,
    pub per_model: Vec<f64>,
}

impl GeneralRhs {
    pub fn total(&self) -> f64 {
        self.main + self.v_n
    }
}

pub struct GeneralRhsInputs<'a> {
    pub family: &'a ModelFamily,
    pub p: &'a DiscreteDistribution,
    pub fstar: &'a LossFunction,
    pub pen: &'a [f64],
    pub t: &'a [f64],
    pub n: usize,
    pub c: f64,
    pub eps: f64,
}

pub fn oracle_rhs_general(inputs: &GeneralRhsInputs<'_>) -> Result<GeneralRhs> {
    let GeneralRhsInputs { family, p, fstar, pen, t, n, c, eps } = *inputs;
    check_eps(eps)?;
    check_c(c)?;
    let k = family.len();
    if pen.len() != k || t.len() != k {
        return param("penalties and confidence levels need one entry per model");
    }
    let nf = n as f64;
    let terms = model_terms(family, p, fstar, t, n)?;
    let per_model: Vec<f64> = (0..k)
        .map(|m| (terms.excess[m] + pen[m] + terms.v[m] + t[m] / (3.0 * nf)) / (1.0 - eps))
        .collect();
    let v_n = (0..k)
        .map(|m| terms.v[m] - eps * terms.excess[m] - c * pen[m])
        .fold(f64::NEG_INFINITY, f64::max)
        / (1.0 - eps);
    let argmin = argmin(&per_model);
    Ok(GeneralRhs { main: per_model[argmin], v_n, argmin, per_model })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{build_counterexample, build_margin_gap};
    use crate::domain::draw_sample;

    fn singletons(fs: &[LossFunction]) -> ModelFamily {
        ModelFamily::new(
            fs.iter().map(|f| Model::new(format!("f{}", f.id()), vec![f.clone()]).unwrap()).collect(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn zero_penalty_between_singletons_is_erm() {
        let inst = build_counterexample(64).unwrap();
        let fam = singletons(&[inst.f0.clone(), inst.f1.clone()]);
        let union = Model::new("union", vec![inst.f0.clone(), inst.f1.clone()]).unwrap();
        for seed in 0..20 {
            let s = draw_sample(&inst.p1, 64, seed).unwrap();
            let out = select(&fam, &s, &PenaltySpec::zero(2), None).unwrap();
            assert_eq!(out.chosen_id, erm(&union, &s).unwrap().id());
        }
    }

    #[test]
    fn smaller_criterion_wins() {
        let inst = build_counterexample(4).unwrap();
        let fam = singletons(&[inst.f0.clone(), inst.f1.clone()]);
        let s = draw_sample(&inst.p1, 4, 0).unwrap();
        let risks: Vec<f64> = [&inst.f0, &inst.f1].iter().map(|f| empirical_mean(f, &s).unwrap()).collect();
        // criteria 0.30 and 0.25
        let pen = [0.30 - risks[0], 0.25 - risks[1]];
        let pen = [pen[0] + 1.0, pen[1] + 1.0];
        let out = select_with_penalties(&fam, &s, &pen, None).unwrap();
        assert_eq!(out.chosen, 1);
        assert!((out.per_model[0].criterion - 1.30).abs() < 1e-12);
    }

    #[test]
    fn extract_margin_examples() {
        let inst = build_counterexample(2).unwrap();
        let fit = extract_margin(&Model::new("f1", vec![inst.f1.clone()]).unwrap(), &inst.p1, &inst.fstar1).unwrap();
        assert!((fit.h() - 4.0 / 3.0).abs() < 1e-12);
        let fit = extract_margin(&Model::new("star", vec![inst.fstar1.clone()]).unwrap(), &inst.p1, &inst.fstar1)
            .unwrap();
        assert!(fit.h().is_infinite());
        let gap = build_margin_gap(2.0, 8, 16).unwrap();
        for k in 0..8 {
            let m = Model::new("even", vec![gap.fs[2 * k].clone()]).unwrap();
            assert!(extract_margin(&m, &gap.p, &gap.fstar).unwrap().h() >= 1.0);
        }
    }

    #[test]
    fn nested_rhs_vanishes_for_bayes_singleton() {
        let inst = build_counterexample(8).unwrap();
        let fam = singletons(std::slice::from_ref(&inst.fstar1));
        let fit = extract_margin(&fam.models()[0], &inst.p1, &inst.fstar1).unwrap();
        let rhs = oracle_rhs_nested(&NestedRhsInputs {
            family: &fam,
            p: &inst.p1,
            fstar: &inst.fstar1,
            pen: &[0.0],
            t: &[0.0],
            margins: &[fit.phi],
            n: 8,
            c1: 2f64.sqrt(),
            c2: 1.0,
            eps: 0.5,
        })
        .unwrap();
        assert_eq!(rhs.value, 0.0);
    }

    #[test]
    fn general_rhs_single_model_and_vn_sign() {
        let inst = build_counterexample(16).unwrap();
        let fam = singletons(std::slice::from_ref(&inst.fstar1));
        let rhs = oracle_rhs_general(&GeneralRhsInputs {
            family: &fam,
            p: &inst.p1,
            fstar: &inst.fstar1,
            pen: &[0.1],
            t: &[1.0],
            n: 16,
            c: 0.5,
            eps: 0.5,
        })
        .unwrap();
        assert!((rhs.main - (0.1 + 1.0 / 48.0) / 0.5).abs() < 1e-12);
        assert!(rhs.v_n <= 0.0);
        assert!(oracle_rhs_general(&GeneralRhsInputs { eps: 1.0, ..GeneralRhsInputs {
            family: &fam,
            p: &inst.p1,
            fstar: &inst.fstar1,
            pen: &[0.1],
            t: &[1.0],
            n: 16,
            c: 0.5,
            eps: 0.5,
        } })
        .is_err());
    }

    #[test]
    fn ideal_oracle_penalty_meets_lower_bound_when_feasible() {
        use crate::complexity::{assumption_checker, AssumptionInputs};
        let inst = build_counterexample(32).unwrap();
        let fam = ModelFamily::new(
            vec![
                Model::new("f0", vec![inst.f0.clone()]).unwrap(),
                Model::new("both", vec![inst.f0.clone(), inst.f1.clone()]).unwrap(),
            ],
            true,
        )
        .unwrap();
        let t = vec![1.0, 1.0];
        let c = 0.3;
        for seed in 0..20 {
            let s = draw_sample(&inst.p1, 32, seed).unwrap();
            let truth = Some((&inst.p1, &inst.fstar1));
            let pen = compute_penalties(&fam, &s, &PenaltySpec::IdealOracle { c, t: t.clone() }, truth).unwrap();
            let rep = assumption_checker(&AssumptionInputs {
                family: &fam,
                sample: &s,
                p: &inst.p1,
                fstar: &inst.fstar1,
                pen: &pen.values,
                t: &t,
                c,
                c1: 0.0,
                c2: 0.0,
            })
            .unwrap();
            let feasible = rep.per_model.iter().all(|r| r.centered >= 0.0);
            assert_eq!(rep.lower_bound_holds, feasible);
        }
    }

    #[test]
    fn v_augmented_adds_radius_over_c() {
        let inst = build_counterexample(16).unwrap();
        let fam = singletons(&[inst.f0.clone(), inst.f1.clone()]);
        let s = draw_sample(&inst.p1, 16, 5).unwrap();
        let t = vec![2.0, 2.0];
        let spec = PenaltySpec::VAugmented {
            base: Box::new(PenaltySpec::zero(2)),
            c: 0.5,
            t: t.clone(),
            estimate: VEstimate::Oracle,
        };
        let pen = compute_penalties(&fam, &s, &spec, Some((&inst.p1, &inst.fstar1))).unwrap();
        for (m, model) in fam.models().iter().enumerate() {
            let v = bernstein_radius(model, &inst.p1, &inst.fstar1, 2.0, 16).unwrap();
            assert!((pen.values[m] - 2.0 * v).abs() < 1e-15);
        }
        assert!(compute_penalties(&fam, &s, &spec, None).is_err());
        let plug = PenaltySpec::VAugmented {
            base: Box::new(PenaltySpec::zero(2)),
            c: 0.5,
            t,
            estimate: VEstimate::PlugIn,
        };
        assert!(compute_penalties(&fam, &s, &plug, None).is_ok());
    }
}
