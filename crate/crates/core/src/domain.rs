//! Finite-support probability model shared by every other module.
//!
//! A [`Domain`] is an ordered list of atoms `(x, y)` with `x` an index into a
//! finite label set and `y ∈ {0, 1}`. Distributions, loss functions and
//! samples all refer to a domain through an `Arc`, and every functional checks
//! that its arguments live on the same domain.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::CHECK_TOL;

/// One point `(x, y)` of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub x: usize,
    pub y: u8,
}

impl Atom {
    pub fn new(x: usize, y: u8) -> Self {
        Atom { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    x_labels: Vec<String>,
    atoms: Vec<Atom>,
}

impl Domain {
    pub fn new(x_labels: Vec<String>, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDomain("no atoms".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &atoms {
            if a.x >= x_labels.len() {
                return Err(Error::InvalidDomain(format!("atom x index {} has no label", a.x)));
            }
            if a.y > 1 {
                return Err(Error::InvalidDomain(format!("label y = {} is not binary", a.y)));
            }
            if !seen.insert(*a) {
                return Err(Error::InvalidDomain(format!("duplicate atom {:?}", a)));
            }
        }
        Ok(Domain { x_labels, atoms })
    }

    /// The product domain `X × {0,1}`, ordered by `x` then `y`.
    pub fn product<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let x_labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let atoms = (0..x_labels.len())
            .flat_map(|x| [Atom::new(x, 0), Atom::new(x, 1)])
            .collect();
        Domain::new(x_labels, atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn x_count(&self) -> usize {
        self.x_labels.len()
    }

    pub fn index_of(&self, atom: Atom) -> Option<usize> {
        self.atoms.iter().position(|a| *a == atom)
    }

    pub fn x_index(&self, label: &str) -> Option<usize> {
        self.x_labels.iter().position(|l| l == label)
    }
}

fn same_domain(a: &Arc<Domain>, b: &Arc<Domain>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// A probability measure with exact point masses on a finite domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    domain: Arc<Domain>,
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    /// Masses must be nonnegative and sum to one within `1e-9`; they are
    /// renormalized to remove the residual rounding.
    pub fn new(domain: Arc<Domain>, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != domain.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} masses for {} atoms",
                masses.len(),
                domain.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidDistribution(format!("mass {m} is not a probability")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        let masses = masses.into_iter().map(|m| m / total).collect();
        Ok(DiscreteDistribution { domain, masses })
    }

    /// Build `P` on the product domain from the marginal of `X` and the
    /// regression function `η(x) = P(Y = 1 | X = x)`.
    pub fn from_regression(domain: Arc<Domain>, x_masses: &[f64], eta: &[f64]) -> Result<Self> {
        if x_masses.len() != domain.x_count() || eta.len() != domain.x_count() {
            return Err(Error::InvalidDistribution("marginal/regression length mismatch".into()));
        }
        if let Some(e) = eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::InvalidDistribution(format!("η = {e} outside [0,1]")));
        }
        let mut masses = vec![0.0; domain.len()];
        let mut covered = vec![0u8; domain.x_count()];
        for (i, a) in domain.atoms().iter().enumerate() {
            let cond = if a.y == 1 { eta[a.x] } else { 1.0 - eta[a.x] };
            masses[i] = x_masses[a.x] * cond;
            covered[a.x] += 1;
        }
        if covered.iter().any(|c| *c != 2) {
            return Err(Error::InvalidDistribution(
                "regression form needs both labels for every x".into(),
            ));
        }
        DiscreteDistribution::new(domain, masses)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, atom: Atom) -> f64 {
        self.domain.index_of(atom).map_or(0.0, |i| self.masses[i])
    }

    /// Marginal law of `X`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.x_count()];
        for (a, m) in self.domain.atoms().iter().zip(&self.masses) {
            out[a.x] += m;
        }
        out
    }

    /// `η(x) = P(Y = 1 | X = x)`; zero where `X = x` has no mass.
    pub fn regression(&self) -> Vec<f64> {
        let marginal = self.x_marginal();
        let mut ones = vec![0.0; self.domain.x_count()];
        for (a, m) in self.domain.atoms().iter().zip(&self.masses) {
            if a.y == 1 {
                ones[a.x] += m;
            }
        }
        ones.iter()
            .zip(&marginal)
            .map(|(o, m)| if *m > 0.0 { o / m } else { 0.0 })
            .collect()
    }

    /// The Bayes predictor `s(x) = 1{η(x) ≥ 1/2}`.
    pub fn bayes_predictor(&self) -> Vec<u8> {
        self.regression().iter().map(|e| u8::from(*e >= 0.5)).collect()
    }

    /// Law of `(X, 1 − Y)` when `(X, Y)` follows `self`.
    pub fn flip_labels(&self) -> Result<Self> {
        let mut masses = vec![0.0; self.domain.len()];
        for (a, m) in self.domain.atoms().iter().zip(&self.masses) {
            let flipped = Atom::new(a.x, 1 - a.y);
            let j = self.domain.index_of(flipped).ok_or_else(|| {
                Error::InvalidDistribution(format!("domain is not closed under label flip at {a:?}"))
            })?;
            masses[j] = *m;
        }
        Ok(DiscreteDistribution { domain: self.domain.clone(), masses })
    }

    fn cumulative(&self) -> Vec<f64> {
        self.masses
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }
}

/// A function `Ξ → [0,1]` tabulated on every atom of a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LossFunction {
    id: usize,
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl LossFunction {
    pub fn new(id: usize, domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidLoss {
                id,
                reason: format!("{} values for {} atoms", values.len(), domain.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidLoss { id, reason: format!("value {v} outside [0,1]") });
        }
        Ok(LossFunction { id, domain, values })
    }

    /// Constant loss.
    pub fn constant(id: usize, domain: Arc<Domain>, value: f64) -> Result<Self> {
        let values = vec![value; domain.len()];
        LossFunction::new(id, domain, values)
    }

    /// The 0-1 loss `(x, y) ↦ 1{u(x) ≠ y}` of a predictor `u: X → {0,1}`.
    pub fn zero_one(id: usize, domain: Arc<Domain>, predictor: &[u8]) -> Result<Self> {
        if predictor.len() != domain.x_count() {
            return Err(Error::InvalidLoss {
                id,
                reason: format!("predictor has {} entries for {} labels", predictor.len(), domain.x_count()),
            });
        }
        let values = domain
            .atoms()
            .iter()
            .map(|a| if predictor[a.x] != a.y { 1.0 } else { 0.0 })
            .collect();
        Ok(LossFunction { id, domain, values })
    }

    /// Same table under a different id.
    pub fn with_id(&self, id: usize) -> Self {
        LossFunction { id, ..self.clone() }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, atom_index: usize) -> f64 {
        self.values[atom_index]
    }

    pub fn is_zero_one(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0 || *v == 1.0)
    }
}

/// A finite ordered set of loss functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    name: String,
    functions: Vec<LossFunction>,
}

impl Model {
    pub fn new(name: impl Into<String>, functions: Vec<LossFunction>) -> Result<Self> {
        let name = name.into();
        let Some(first) = functions.first() else {
            return Err(Error::InvalidModel { name, reason: "no functions".into() });
        };
        let mut ids = BTreeSet::new();
        for f in &functions {
            if !ids.insert(f.id) {
                return Err(Error::InvalidModel { name, reason: format!("duplicate id {}", f.id) });
            }
            if !same_domain(f.domain(), first.domain()) {
                return Err(Error::InvalidModel { name, reason: "functions on different domains".into() });
            }
        }
        Ok(Model { name, functions })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn functions(&self) -> &[LossFunction] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.functions[0].domain()
    }

    pub fn ids(&self) -> BTreeSet<usize> {
        self.functions.iter().map(LossFunction::id).collect()
    }

    /// Set inclusion by id.
    pub fn is_subset_of(&self, other: &Model) -> bool {
        self.ids().is_subset(&other.ids())
    }

    pub fn get(&self, id: usize) -> Option<&LossFunction> {
        self.functions.iter().find(|f| f.id == id)
    }
}

/// An ordered collection of models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamily {
    models: Vec<Model>,
    nested: bool,
}

impl ModelFamily {
    /// `nested = true` is verified: every model must be contained in its
    /// successor.
    pub fn new(models: Vec<Model>, nested: bool) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidFamily("no models".into()));
        }
        let domain = models[0].domain().clone();
        if models.iter().any(|m| !same_domain(m.domain(), &domain)) {
            return Err(Error::InvalidFamily("models on different domains".into()));
        }
        // The same id must denote the same table everywhere in the family.
        let mut tables: HashMap<usize, &LossFunction> = HashMap::new();
        for f in models.iter().flat_map(Model::functions) {
            if let Some(prev) = tables.insert(f.id(), f) {
                if prev.values() != f.values() {
                    return Err(Error::InvalidFamily(format!("id {} names two different tables", f.id())));
                }
            }
        }
        if nested && !Self::chain_holds(&models) {
            return Err(Error::InvalidFamily("declared nested but inclusion fails".into()));
        }
        Ok(ModelFamily { models, nested })
    }

    /// Sets the nested flag iff consecutive inclusion holds.
    pub fn detect(models: Vec<Model>) -> Result<Self> {
        let nested = !models.is_empty() && Self::chain_holds(&models);
        ModelFamily::new(models, nested)
    }

    fn chain_holds(models: &[Model]) -> bool {
        models.windows(2).all(|w| w[0].is_subset_of(&w[1]))
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn is_nested(&self) -> bool {
        self.nested
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.models[0].domain()
    }

    /// Pairs `(m, m')` with `F_{m'} ⊆ F_m`, including `m' = m`.
    pub fn inclusion_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, big) in self.models.iter().enumerate() {
            for (j, small) in self.models.iter().enumerate() {
                if small.is_subset_of(big) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// `n` draws from a distribution's domain, stored as atom indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    domain: Arc<Domain>,
    draws: Vec<usize>,
    counts: Vec<u32>,
    seed: u64,
}

impl Sample {
    pub fn new(domain: Arc<Domain>, draws: Vec<usize>, seed: u64) -> Result<Self> {
        let mut counts = vec![0u32; domain.len()];
        for &d in &draws {
            *counts
                .get_mut(d)
                .ok_or_else(|| Error::InvalidDomain(format!("draw {d} is not an atom index")))? += 1;
        }
        Ok(Sample { domain, draws, counts, seed })
    }

    pub fn from_atoms(domain: Arc<Domain>, atoms: &[Atom], seed: u64) -> Result<Self> {
        let draws = atoms
            .iter()
            .map(|a| domain.index_of(*a).ok_or_else(|| Error::InvalidDomain(format!("{a:?} is not an atom"))))
            .collect::<Result<Vec<_>>>()?;
        Sample::new(domain, draws, seed)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn draws(&self) -> &[usize] {
        &self.draws
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.draws.iter().map(|&d| self.domain.atoms()[d])
    }

    /// Multiplicity of each atom.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// The empirical measure `P_n` as per-atom masses.
    pub fn empirical_masses(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        self.counts.iter().map(|c| f64::from(*c) / n).collect()
    }
}

fn check_loss(f: &LossFunction, p: &DiscreteDistribution) -> Result<()> {
    if same_domain(f.domain(), p.domain()) {
        Ok(())
    } else {
        Err(Error::DomainMismatch("loss function and distribution"))
    }
}

/// `P(f)`, exact over the finite support.
pub fn population_mean(f: &LossFunction, p: &DiscreteDistribution) -> Result<f64> {
    check_loss(f, p)?;
    Ok(f.values.iter().zip(&p.masses).map(|(v, m)| v * m).sum())
}

/// `Var_P(f − g)`.
pub fn population_variance(f: &LossFunction, g: &LossFunction, p: &DiscreteDistribution) -> Result<f64> {
    check_loss(f, p)?;
    check_loss(g, p)?;
    let mut mean = 0.0;
    let mut second = 0.0;
    for ((a, b), m) in f.values.iter().zip(&g.values).zip(&p.masses) {
        let d = a - b;
        mean += m * d;
        second += m * d * d;
    }
    Ok((second - mean * mean).max(0.0))
}

/// `P((f − g)²)`; for 0-1 losses this is the mass where `f` and `g` differ.
pub fn population_sq_distance(f: &LossFunction, g: &LossFunction, p: &DiscreteDistribution) -> Result<f64> {
    check_loss(f, p)?;
    check_loss(g, p)?;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .zip(&p.masses)
        .map(|((a, b), m)| m * (a - b) * (a - b))
        .sum())
}

/// `P(f − f*)`. Errors when the result is below `-CHECK_TOL`, which means
/// `fstar` is not a minimizer; tiny negative rounding is clamped to zero.
pub fn excess_risk(f: &LossFunction, p: &DiscreteDistribution, fstar: &LossFunction) -> Result<f64> {
    let d = population_mean(f, p)? - population_mean(fstar, p)?;
    if d < -CHECK_TOL {
        return Err(Error::InvalidMinimizer(d));
    }
    Ok(d.max(0.0))
}

fn check_sample(f: &LossFunction, s: &Sample) -> Result<()> {
    if s.is_empty() {
        return Err(Error::EmptySample);
    }
    if same_domain(f.domain(), s.domain()) {
        Ok(())
    } else {
        Err(Error::DomainMismatch("loss function and sample"))
    }
}

/// `P_n(f)`.
pub fn empirical_mean(f: &LossFunction, s: &Sample) -> Result<f64> {
    check_sample(f, s)?;
    let total: f64 = s.counts.iter().zip(&f.values).map(|(c, v)| f64::from(*c) * v).sum();
    Ok(total / s.len() as f64)
}

/// `P_n((f − g)²)`.
pub fn empirical_sq_distance(f: &LossFunction, g: &LossFunction, s: &Sample) -> Result<f64> {
    check_sample(f, s)?;
    check_sample(g, s)?;
    let total: f64 = s
        .counts
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(c, (a, b))| f64::from(*c) * (a - b) * (a - b))
        .sum();
    Ok(total / s.len() as f64)
}

/// `n` i.i.d. draws by inverse CDF over the declared atom order.
///
/// The generator is ChaCha8 seeded with `seed`, so identical `(P, n, seed)`
/// produce identical draws on every platform.
pub fn draw_sample(p: &DiscreteDistribution, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::Parameter("sample size must be at least 1".into()));
    }
    let cum = p.cumulative();
    let last_positive = p.masses.iter().rposition(|m| *m > 0.0).unwrap_or(0);
    let mut rng = stream_rng(seed, 0);
    let draws = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let i = cum.partition_point(|c| *c <= u);
            i.min(last_positive)
        })
        .collect();
    Sample::new(p.domain.clone(), draws, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_atoms() -> (Arc<Domain>, DiscreteDistribution) {
        let d = Arc::new(
            Domain::new(
                vec!["a".into(), "b".into(), "c".into()],
                vec![Atom::new(0, 0), Atom::new(1, 0), Atom::new(2, 1)],
            )
            .unwrap(),
        );
        let p = DiscreteDistribution::new(d.clone(), vec![0.5, 0.25, 0.25]).unwrap();
        (d, p)
    }

    #[test]
    fn constant_loss_mean() {
        let (d, p) = three_atoms();
        let f = LossFunction::constant(0, d, 0.5).unwrap();
        assert_eq!(population_mean(&f, &p).unwrap(), 0.5);
    }

    #[test]
    fn weighted_sum_mean() {
        let (d, p) = three_atoms();
        let f = LossFunction::new(0, d, vec![0.0, 1.0, 1.0]).unwrap();
        assert!((population_mean(&f, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn variance_of_identical_functions_is_zero() {
        let (d, p) = three_atoms();
        let f = LossFunction::new(0, d, vec![0.2, 0.7, 1.0]).unwrap();
        assert_eq!(population_variance(&f, &f, &p).unwrap(), 0.0);
    }

    #[test]
    fn bernoulli_indicator_variance() {
        let d = Arc::new(Domain::product(["a", "b"]).unwrap());
        // difference equals one on an event of mass 1/4
        let p = DiscreteDistribution::new(d.clone(), vec![0.25, 0.0, 0.75, 0.0]).unwrap();
        let f = LossFunction::new(0, d.clone(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let g = LossFunction::constant(1, d, 0.0).unwrap();
        let var = population_variance(&f, &g, &p).unwrap();
        // enumeration: E[D²] − E[D]² with D ∈ {0, 1}
        let e: f64 = 0.25;
        assert!((var - (e - e * e)).abs() < 1e-15);
        assert!((var - 3.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn domain_mismatch_is_reported() {
        let (d, p) = three_atoms();
        let other = Arc::new(Domain::product(["z"]).unwrap());
        let f = LossFunction::constant(0, other, 0.0).unwrap();
        assert!(matches!(population_mean(&f, &p), Err(Error::DomainMismatch(_))));
        let g = LossFunction::constant(1, d, 0.0).unwrap();
        assert!(population_variance(&f, &g, &p).is_err());
    }

    #[test]
    fn invalid_minimizer_detected() {
        let (d, p) = three_atoms();
        let good = LossFunction::constant(0, d.clone(), 0.1).unwrap();
        let bad = LossFunction::constant(1, d, 0.6).unwrap();
        assert!(matches!(excess_risk(&good, &p, &bad), Err(Error::InvalidMinimizer(_))));
        assert_eq!(excess_risk(&bad, &p, &bad).unwrap(), 0.0);
    }

    #[test]
    fn empirical_means() {
        let d = Arc::new(Domain::product(["a", "b"]).unwrap());
        let f = LossFunction::new(0, d.clone(), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        // draws (a,0),(a,0),(b,0),(b,0)
        let s = Sample::new(d.clone(), vec![0, 0, 2, 2], 0).unwrap();
        assert_eq!(empirical_mean(&f, &s).unwrap(), 0.5);
        let one = LossFunction::constant(1, d.clone(), 1.0).unwrap();
        assert_eq!(empirical_mean(&one, &s).unwrap(), 1.0);
        let s5 = Sample::new(d.clone(), vec![0, 2, 3, 1, 2], 0).unwrap();
        assert!((empirical_mean(&f, &s5).unwrap() - 0.6).abs() < 1e-15);
        let empty = Sample::new(d, vec![], 0).unwrap();
        assert!(matches!(empirical_mean(&f, &empty), Err(Error::EmptySample)));
    }

    #[test]
    fn point_mass_sampling() {
        let d = Arc::new(Domain::product(["a", "b"]).unwrap());
        let p = DiscreteDistribution::new(d, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let s = draw_sample(&p, 50, 9).unwrap();
        assert!(s.draws().iter().all(|&i| i == 2));
    }

    #[test]
    fn sampling_is_deterministic() {
        let (_, p) = three_atoms();
        assert_eq!(draw_sample(&p, 100, 4).unwrap(), draw_sample(&p, 100, 4).unwrap());
        assert_ne!(draw_sample(&p, 100, 4).unwrap().draws(), draw_sample(&p, 100, 5).unwrap().draws());
    }

    #[test]
    fn fair_coin_frequency() {
        let d = Arc::new(Domain::new(vec!["a".into()], vec![Atom::new(0, 0), Atom::new(0, 1)]).unwrap());
        let p = DiscreteDistribution::new(d, vec![0.5, 0.5]).unwrap();
        let s = draw_sample(&p, 10_000, 1).unwrap();
        let freq = f64::from(s.counts()[0]) / 1e4;
        // two-sided binomial tail at 0.02 for n = 1e4 is below 1e-4
        assert!((freq - 0.5).abs() < 0.02, "{freq}");
    }

    #[test]
    fn flip_twice_is_identity() {
        let d = Arc::new(Domain::product(["a", "b"]).unwrap());
        let p = DiscreteDistribution::from_regression(d, &[0.3, 0.7], &[0.1, 0.8]).unwrap();
        let back = p.flip_labels().unwrap().flip_labels().unwrap();
        assert_eq!(p, back);
        assert_eq!(p.bayes_predictor(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = Arc::new(Domain::product(["a"]).unwrap());
        assert!(DiscreteDistribution::new(d.clone(), vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(d.clone(), vec![1.5, -0.5]).is_err());
        assert!(LossFunction::new(0, d.clone(), vec![0.0, 1.2]).is_err());
        assert!(Domain::new(vec!["a".into()], vec![Atom::new(0, 0), Atom::new(0, 0)]).is_err());
        let f = LossFunction::constant(0, d.clone(), 0.0).unwrap();
        assert!(Model::new("dup", vec![f.clone(), f.clone()]).is_err());
        assert!(Model::new("empty", vec![]).is_err());
        let g = LossFunction::constant(1, d, 1.0).unwrap();
        let small = Model::new("s", vec![g.clone()]).unwrap();
        let big = Model::new("b", vec![f, g]).unwrap();
        assert!(ModelFamily::new(vec![big.clone(), small.clone()], true).is_err());
        let fam = ModelFamily::detect(vec![small, big]).unwrap();
        assert!(fam.is_nested());
        assert_eq!(fam.inclusion_pairs(), vec![(0, 0), (1, 0), (1, 1)]);
    }
}
