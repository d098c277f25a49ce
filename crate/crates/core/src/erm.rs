//! Empirical minimization and the geometry of δ-minimal sets.
//!
//! Everything here enumerates pairs directly; the complexity module has a
//! faster prefix-based evaluator that is tested against these functions.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{
    draw_sample, empirical_mean, empirical_sq_distance, population_mean, population_sq_distance,
    DiscreteDistribution, LossFunction, Model, Sample,
};
use crate::error::{param, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::MEMBERSHIP_TOL;

/// Measure under which risks and distances are taken.
#[derive(Debug, Clone, Copy)]
pub enum Basis<'a> {
    Empirical(&'a Sample),
    Population(&'a DiscreteDistribution),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Empirical,
    Population,
}

impl Basis<'_> {
    pub fn kind(&self) -> BasisKind {
        match self {
            Basis::Empirical(_) => BasisKind::Empirical,
            Basis::Population(_) => BasisKind::Population,
        }
    }

    pub fn risk(&self, f: &LossFunction) -> Result<f64> {
        match self {
            Basis::Empirical(s) => empirical_mean(f, s),
            Basis::Population(p) => population_mean(f, p),
        }
    }

    pub fn sq_distance(&self, f: &LossFunction, g: &LossFunction) -> Result<f64> {
        match self {
            Basis::Empirical(s) => empirical_sq_distance(f, g, s),
            Basis::Population(p) => population_sq_distance(f, g, p),
        }
    }

    pub fn risks(&self, model: &Model) -> Result<Vec<f64>> {
        model.functions().iter().map(|f| self.risk(f)).collect()
    }
}

/// Index of the smallest risk; ties go to the smallest id.
pub(crate) fn argmin_by_id(model: &Model, risks: &[f64]) -> usize {
    let fs = model.functions();
    (0..fs.len())
        .min_by(|&i, &j| risks[i].total_cmp(&risks[j]).then(fs[i].id().cmp(&fs[j].id())))
        .expect("models are nonempty")
}

/// `f̂_m ∈ argmin_{f ∈ F_m} P_n(f)`, ties broken by smallest id.
pub fn erm<'m>(model: &'m Model, sample: &Sample) -> Result<&'m LossFunction> {
    let risks = Basis::Empirical(sample).risks(model)?;
    Ok(&model.functions()[argmin_by_id(model, &risks)])
}

/// `f_m ∈ argmin_{f ∈ F_m} P(f)`, ties broken by smallest id.
pub fn population_minimizer<'m>(model: &'m Model, p: &DiscreteDistribution) -> Result<&'m LossFunction> {
    let risks = Basis::Population(p).risks(model)?;
    Ok(&model.functions()[argmin_by_id(model, &risks)])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalSet {
    /// Ids in model order.
    pub member_ids: Vec<usize>,
    pub level: f64,
    pub basis: BasisKind,
}

fn check_level(delta: f64) -> Result<()> {
    if delta >= 0.0 {
        Ok(())
    } else {
        param(format!("minimal-set level must be ≥ 0, got {delta}"))
    }
}

fn minimal_members<'m>(model: &'m Model, basis: Basis<'_>, delta: f64) -> Result<Vec<&'m LossFunction>> {
    check_level(delta)?;
    let risks = basis.risks(model)?;
    let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(model
        .functions()
        .iter()
        .zip(&risks)
        .filter(|(_, r)| **r - best <= delta + MEMBERSHIP_TOL)
        .map(|(f, _)| f)
        .collect())
}

/// `{f ∈ F_m : Q(f) − inf_g Q(g) ≤ δ}` for the basis measure `Q`.
pub fn minimal_set(model: &Model, basis: Basis<'_>, delta: f64) -> Result<MinimalSet> {
    let members = minimal_members(model, basis, delta)?;
    Ok(MinimalSet { member_ids: members.iter().map(|f| f.id()).collect(), level: delta, basis: basis.kind() })
}

/// Diameter of the δ-minimal set.
///
/// Population basis: `D_P = sqrt(sup P((f − g)²))`. Empirical basis:
/// `D̂_n = sup P_n((f − g)²)`, without the square root.
pub fn diameter(model: &Model, basis: Basis<'_>, delta: f64) -> Result<f64> {
    let members = minimal_members(model, basis, delta)?;
    let mut sup = 0.0f64;
    for (i, f) in members.iter().enumerate() {
        for g in &members[i + 1..] {
            sup = sup.max(basis.sq_distance(f, g)?);
        }
    }
    Ok(match basis {
        Basis::Population(_) => sup.sqrt(),
        Basis::Empirical(_) => sup,
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

impl ModulusEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        ModulusEstimate { mean, std_error: (var / k).sqrt(), reps: values.len() }
    }
}

/// `φ_n(F_m; P; δ) = E sup_{f,g ∈ F_{m,P}(δ)} |(P_n − P)(f − g)|`, averaged
/// over `reps` samples of size `n`. Replicate `r` draws with seed
/// `derive_seed(seed, r)`.
pub fn expected_modulus(
    model: &Model,
    p: &DiscreteDistribution,
    n: usize,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<ModulusEstimate> {
    if reps == 0 {
        return param("expected modulus needs at least one replicate");
    }
    let members = minimal_members(model, Basis::Population(p), delta)?;
    let pop: Vec<f64> = members.iter().map(|f| population_mean(f, p)).collect::<Result<_>>()?;
    let values = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = draw_sample(p, n, derive_seed(seed, r as u64))?;
            let centered: Vec<f64> = members
                .iter()
                .zip(&pop)
                .map(|(f, m)| Ok(empirical_mean(f, &s)? - m))
                .collect::<Result<_>>()?;
            let mut sup = 0.0f64;
            for i in 0..centered.len() {
                for j in i + 1..centered.len() {
                    sup = sup.max((centered[i] - centered[j]).abs());
                }
            }
            Ok(sup)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ModulusEstimate::from_values(&values))
}

/// i.i.d. Rademacher signs.
pub fn rademacher_signs(n: usize, seed: u64) -> Vec<i8> {
    let mut rng = stream_rng(seed, 1);
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

/// `φ̂_n(F_m; δ) = sup_{f,g ∈ F̂_{n,m}(δ)} |n^{-1} Σ ε_i (f(ξ_i) − g(ξ_i))|`
/// for the given sign vector.
pub fn rademacher_modulus(model: &Model, sample: &Sample, delta: f64, eps: &[i8]) -> Result<f64> {
    if eps.len() != sample.len() {
        return param(format!("{} signs for {} draws", eps.len(), sample.len()));
    }
    let members = minimal_members(model, Basis::Empirical(sample), delta)?;
    let n = sample.len() as f64;
    let mut sup = 0.0f64;
    for (i, f) in members.iter().enumerate() {
        for g in &members[i + 1..] {
            let s: f64 = sample
                .draws()
                .iter()
                .zip(eps)
                .map(|(&d, &e)| f64::from(e) * (f.value(d) - g.value(d)))
                .sum();
            sup = sup.max((s / n).abs());
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::distributions::build_counterexample;
    use crate::domain::{Atom, Domain};

    fn line(k: usize) -> Arc<Domain> {
        Arc::new(Domain::product((0..k).map(|i| format!("p{i}"))).unwrap())
    }

    #[test]
    fn singleton_erm() {
        let d = line(2);
        let f = LossFunction::constant(3, d.clone(), 0.4).unwrap();
        let m = Model::new("one", vec![f.clone()]).unwrap();
        let s = Sample::new(d, vec![0, 1, 2], 0).unwrap();
        assert_eq!(erm(&m, &s).unwrap(), &f);
    }

    #[test]
    fn erm_prefers_smaller_risk_then_smaller_id() {
        let d = line(5);
        // draws on atoms 0..10; f has risk 0.3, g has risk 0.2
        let mut fv = vec![0.0; 10];
        let mut gv = vec![0.0; 10];
        fv[..3].fill(1.0);
        gv[..2].fill(1.0);
        let f = LossFunction::new(0, d.clone(), fv).unwrap();
        let g = LossFunction::new(1, d.clone(), gv.clone()).unwrap();
        let s = Sample::new(d.clone(), (0..10).collect(), 0).unwrap();
        let m = Model::new("m", vec![f, g.clone()]).unwrap();
        assert_eq!(erm(&m, &s).unwrap().id(), 1);
        let twin_hi = LossFunction::new(9, d.clone(), gv.clone()).unwrap();
        let twin_lo = LossFunction::new(4, d, gv).unwrap();
        let m = Model::new("tie", vec![twin_hi, g, twin_lo]).unwrap();
        assert_eq!(erm(&m, &s).unwrap().id(), 1);
    }

    #[test]
    fn erm_counts_disagreements_on_counterexample_draw() {
        let inst = build_counterexample(64).unwrap();
        let s = draw_sample(&inst.p1, 64, 7).unwrap();
        let m = Model::new("pair", vec![inst.f0.clone(), inst.f1.clone()]).unwrap();
        let ones = s.atoms().filter(|a| a.y == 1).count();
        let zeros = 64 - ones;
        // f_0 disagrees with every label 1, f_1 with every label 0
        let expected = if ones <= zeros { 0 } else { 1 };
        assert_eq!(erm(&m, &s).unwrap().id(), expected);
    }

    fn three_risks() -> (Model, DiscreteDistribution) {
        let d = Arc::new(Domain::new(vec!["x".into()], vec![Atom::new(0, 0)]).unwrap());
        let p = DiscreteDistribution::new(d.clone(), vec![1.0]).unwrap();
        let fs = [0.10, 0.17, 0.30]
            .iter()
            .enumerate()
            .map(|(i, v)| LossFunction::constant(i, d.clone(), *v).unwrap())
            .collect();
        (Model::new("three", fs).unwrap(), p)
    }

    #[test]
    fn minimal_set_levels() {
        let (m, p) = three_risks();
        let basis = Basis::Population(&p);
        assert_eq!(minimal_set(&m, basis, 0.0).unwrap().member_ids, vec![0]);
        assert_eq!(minimal_set(&m, basis, 0.1).unwrap().member_ids, vec![0, 1]);
        assert_eq!(minimal_set(&m, basis, 1.0).unwrap().member_ids, vec![0, 1, 2]);
        assert!(minimal_set(&m, basis, -0.1).is_err());
    }

    #[test]
    fn diameter_of_pair_is_mass_of_disagreement() {
        let d = line(5);
        let p = DiscreteDistribution::new(d.clone(), vec![0.1; 10]).unwrap();
        let mut fv = vec![0.0; 10];
        fv[0] = 1.0;
        fv[1] = 1.0;
        let mut gv = vec![0.0; 10];
        gv[2] = 1.0;
        gv[3] = 1.0;
        // equal risks, disagreement on 4 atoms of mass 0.1 each
        let m = Model::new(
            "pair",
            vec![LossFunction::new(0, d.clone(), fv).unwrap(), LossFunction::new(1, d, gv).unwrap()],
        )
        .unwrap();
        let dp = diameter(&m, Basis::Population(&p), 0.0).unwrap();
        assert!((dp - 0.4f64.sqrt()).abs() < 1e-12);
        let single = Model::new("s", vec![m.functions()[0].clone()]).unwrap();
        assert_eq!(diameter(&single, Basis::Population(&p), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn counterexample_full_diameter() {
        let inst = build_counterexample(2).unwrap();
        let m = Model::new("pair", vec![inst.f0.clone(), inst.f1.clone()]).unwrap();
        // the constant predictors disagree on every atom, so (f_0 − f_1)² ≡ 1
        let d = diameter(&m, Basis::Population(&inst.p1), 1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_modulus_trivial_cases() {
        let (m, p) = three_risks();
        assert_eq!(expected_modulus(&m, &p, 10, 0.0, 5, 1).unwrap().mean, 0.0);
        assert!(expected_modulus(&m, &p, 10, 0.0, 0, 1).is_err());
    }

    #[test]
    fn rademacher_examples() {
        let d = line(2);
        let f = LossFunction::new(0, d.clone(), vec![1.0; 4]).unwrap();
        let g = LossFunction::new(1, d.clone(), vec![0.0; 4]).unwrap();
        let pair = Model::new("pair", vec![f.clone(), g.clone()]).unwrap();
        let s = Sample::new(d.clone(), vec![0; 10], 0).unwrap();
        let eps = [1, 1, 1, 1, 1, 1, -1, -1, -1, -1];
        // f − g ≡ 1 and 60% positive signs; the minimal set at level 1 is the whole pair
        assert!((rademacher_modulus(&pair, &s, 1.0, &eps).unwrap() - 0.2).abs() < 1e-12);
        let single = Model::new("s", vec![f]).unwrap();
        assert_eq!(rademacher_modulus(&single, &s, 1.0, &eps).unwrap(), 0.0);
        // pattern (1,1,0,0) with signs (+,−,+,−) cancels
        let h = LossFunction::new(2, d.clone(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let s4 = Sample::new(d, vec![0, 0, 1, 1], 0).unwrap();
        let pair = Model::new("p", vec![h, g]).unwrap();
        assert_eq!(rademacher_modulus(&pair, &s4, 1.0, &[1, -1, 1, -1]).unwrap(), 0.0);
        assert!(rademacher_modulus(&pair, &s4, 1.0, &[1, -1]).is_err());
    }
}
