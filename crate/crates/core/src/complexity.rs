//! Local complexities and the penalty-side assumptions.
//!
//! The ideal functional is
//! `U_n(σ) = K̄ (φ_n(F_m; P; σ) + D_P(F_m; σ) sqrt(t/n) + t/n)` and its data
//! counterpart is
//! `Û_n(σ) = K̂ (φ̂_n(F_m; ĉσ) + D̂_n(F_m; ĉσ) sqrt(t/n) + t/n)`.
//! The complexity is the smallest grid point `δ` with
//! `sup_{σ ≥ δ} U(σ)/σ ≤ 1/(2q)`.
//!
//! Minimal sets of a finite model only change at finitely many levels, so
//! both functionals are precomputed per minimal-set prefix (functions sorted
//! by risk, ties by id) and then read off for every grid point.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{
    draw_sample, empirical_mean, population_mean, population_variance, DiscreteDistribution, LossFunction,
    Model, ModelFamily, Sample,
};
use crate::erm::{
    diameter, erm, expected_modulus, population_minimizer, rademacher_modulus, Basis, ModulusEstimate,
};
use crate::error::{param, Result};
use crate::rng::derive_seed;
use crate::{CHECK_TOL, MEMBERSHIP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricGrid {
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
}

impl Default for GeometricGrid {
    fn default() -> Self {
        GeometricGrid { min: 1e-6, max: 4.0, ratio: 1.05 }
    }
}

impl GeometricGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min < self.max && self.max.is_finite()) {
            return param(format!("grid needs 0 < min < max, got [{}, {}]", self.min, self.max));
        }
        if !(self.ratio > 1.0) {
            return param(format!("grid ratio must exceed 1, got {}", self.ratio));
        }
        Ok(())
    }

    /// `min · ratio^i` up to `max`; `max` itself is always the last point.
    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0i32;
        loop {
            let s = self.min * self.ratio.powi(i);
            if s >= self.max * (1.0 - 1e-12) {
                break;
            }
            out.push(s);
            i += 1;
        }
        out.push(self.max);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityConfig {
    /// `K̄`, scale of the ideal functional.
    pub kbar: f64,
    /// `q > 1`; the fixed-point threshold is `1/(2q)`.
    pub q: f64,
    /// `K̂`, scale of the data-driven functional.
    pub khat: f64,
    /// `ĉ`, level inflation of the empirical minimal sets.
    pub chat: f64,
    /// Confidence parameter `t`.
    pub t: f64,
    pub grid: GeometricGrid,
    /// Replicates for the expected modulus `φ_n`.
    pub mc_reps: usize,
    pub seed: u64,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            kbar: 1.0,
            q: 2.0,
            khat: 1.0,
            chat: 2.0,
            t: 1.0,
            grid: GeometricGrid::default(),
            mc_reps: 400,
            seed: 0,
        }
    }
}

impl ComplexityConfig {
    pub fn with_t(self, t: f64) -> Self {
        ComplexityConfig { t, ..self }
    }

    pub fn threshold(&self) -> f64 {
        1.0 / (2.0 * self.q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 1.0) {
            return param(format!("q must exceed 1, got {}", self.q));
        }
        for (name, v) in [("K̄", self.kbar), ("K̂", self.khat), ("ĉ", self.chat), ("t", self.t)] {
            if !(v > 0.0) || !v.is_finite() {
                return param(format!("{name} must be positive and finite, got {v}"));
            }
        }
        self.grid.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificatePoint {
    pub sigma: f64,
    pub u: f64,
    /// `U(σ)/σ`.
    pub ratio: f64,
    /// `max_{σ' ≥ σ on the grid} U(σ')/σ'`.
    pub suffix_sup: f64,
    /// Monte Carlo standard error of `U(σ)` (ideal functional only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub delta: f64,
    /// True when no grid point satisfies the condition; `delta` is then the
    /// grid maximum.
    pub saturated: bool,
    pub threshold: f64,
    pub certificate: Vec<CertificatePoint>,
}

impl ComplexityReport {
    /// Re-verify the certificate: every grid point at or above `delta` has
    /// `U/σ ≤ threshold + tol`, and the point just below has a suffix
    /// supremum above the threshold.
    pub fn is_valid_certificate(&self, tol: f64) -> bool {
        if self.saturated {
            return self.certificate.iter().all(|c| c.suffix_sup > self.threshold);
        }
        let Some(idx) = self.certificate.iter().position(|c| c.sigma == self.delta) else {
            return false;
        };
        let above = self.certificate[idx..].iter().all(|c| c.ratio <= self.threshold + tol);
        let minimal = idx == 0 || self.certificate[idx - 1].suffix_sup > self.threshold;
        above && minimal
    }
}

/// Smallest grid point whose suffix supremum of `U(σ)/σ` is at most
/// `threshold`.
pub fn fixed_point_from_values(
    sigmas: &[f64],
    values: &[f64],
    std_errors: Option<&[f64]>,
    threshold: f64,
) -> ComplexityReport {
    let mut certificate: Vec<CertificatePoint> = sigmas
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (&sigma, &u))| CertificatePoint {
            sigma,
            u,
            ratio: u / sigma,
            suffix_sup: 0.0,
            std_error: std_errors.map(|e| e[i]),
        })
        .collect();
    let mut running = f64::NEG_INFINITY;
    for c in certificate.iter_mut().rev() {
        running = running.max(c.ratio);
        c.suffix_sup = running;
    }
    match certificate.iter().position(|c| c.suffix_sup <= threshold) {
        Some(i) => ComplexityReport { delta: certificate[i].sigma, saturated: false, threshold, certificate },
        None => ComplexityReport {
            delta: *sigmas.last().expect("grid is nonempty"),
            saturated: true,
            threshold,
            certificate,
        },
    }
}

/// Functions sorted by `(risk, id)` with their excess over the best risk.
fn sorted_by_risk(model: &Model, risks: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let fs = model.functions();
    let mut order: Vec<usize> = (0..fs.len()).collect();
    order.sort_by(|&i, &j| risks[i].total_cmp(&risks[j]).then(fs[i].id().cmp(&fs[j].id())));
    let best = risks[order[0]];
    let excess = order.iter().map(|&i| risks[i] - best).collect();
    (order, excess)
}

fn prefix_len(excess_sorted: &[f64], level: f64) -> usize {
    excess_sorted.partition_point(|e| *e <= level + MEMBERSHIP_TOL)
}

/// Running `sup_{i<j≤s} dist(i, j)` over prefixes.
fn prefix_pairwise_sup(len: usize, dist: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut sup = 0.0f64;
    for j in 0..len {
        for i in 0..j {
            sup = sup.max(dist(i, j));
        }
        out.push(sup);
    }
    out
}

/// Running `max − min` over prefixes, i.e. the sup of `|a_i − a_j|`.
fn prefix_spread(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    values
        .map(|v| {
            lo = lo.min(v);
            hi = hi.max(v);
            hi - lo
        })
        .collect()
}

/// Per-prefix population geometry of one model: `D_P` and `φ_n` for every
/// distinct minimal set, with common random numbers across levels.
#[derive(Debug, Clone)]
pub struct PopulationProfile {
    pub excess_sorted: Vec<f64>,
    pub diameters: Vec<f64>,
    pub modulus: Vec<ModulusEstimate>,
    pub n: usize,
}

impl PopulationProfile {
    pub fn new(model: &Model, p: &DiscreteDistribution, n: usize, reps: usize, seed: u64) -> Result<Self> {
        if reps == 0 {
            return param("expected modulus needs at least one replicate");
        }
        let fs = model.functions();
        let risks: Vec<f64> = fs.iter().map(|f| population_mean(f, p)).collect::<Result<_>>()?;
        let (order, excess_sorted) = sorted_by_risk(model, &risks);
        let sorted: Vec<&LossFunction> = order.iter().map(|&i| &fs[i]).collect();
        let sq: Vec<Vec<f64>> = sorted
            .iter()
            .map(|f| {
                sorted
                    .iter()
                    .map(|g| Basis::Population(p).sq_distance(f, g))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let diameters = prefix_pairwise_sup(sorted.len(), |i, j| sq[i][j]).into_iter().map(f64::sqrt).collect();
        let sorted_risks: Vec<f64> = order.iter().map(|&i| risks[i]).collect();
        let per_rep: Vec<Vec<f64>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let s = draw_sample(p, n, derive_seed(seed, r as u64))?;
                let centered = sorted
                    .iter()
                    .zip(&sorted_risks)
                    .map(|(f, m)| Ok(empirical_mean(f, &s)? - m))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(prefix_spread(centered.into_iter()))
            })
            .collect::<Result<_>>()?;
        let modulus = (0..sorted.len())
            .map(|k| ModulusEstimate::from_values(&per_rep.iter().map(|v| v[k]).collect::<Vec<_>>()))
            .collect();
        Ok(PopulationProfile { excess_sorted, diameters, modulus, n })
    }

    /// `(U_n(σ), standard error)`.
    pub fn u(&self, sigma: f64, kbar: f64, t: f64) -> (f64, f64) {
        let k = prefix_len(&self.excess_sorted, sigma) - 1;
        let tn = t / self.n as f64;
        let m = self.modulus[k];
        (kbar * (m.mean + self.diameters[k] * tn.sqrt() + tn), kbar * m.std_error)
    }

    pub fn fixed_point(&self, cfg: &ComplexityConfig) -> ComplexityReport {
        let sigmas = cfg.grid.points();
        let (values, errors): (Vec<f64>, Vec<f64>) = sigmas.iter().map(|s| self.u(*s, cfg.kbar, cfg.t)).unzip();
        fixed_point_from_values(&sigmas, &values, Some(&errors), cfg.threshold())
    }
}

/// Per-prefix empirical geometry of one model for one sample and one sign
/// vector.
#[derive(Debug, Clone)]
pub struct EmpiricalProfile {
    pub excess_sorted: Vec<f64>,
    /// `D̂_n` (no square root) per prefix.
    pub diameters: Vec<f64>,
    pub rademacher: Vec<f64>,
    pub n: usize,
}

impl EmpiricalProfile {
    pub fn new(model: &Model, sample: &Sample, eps: &[i8]) -> Result<Self> {
        if eps.len() != sample.len() {
            return param(format!("{} signs for {} draws", eps.len(), sample.len()));
        }
        let fs = model.functions();
        let risks: Vec<f64> = fs.iter().map(|f| empirical_mean(f, sample)).collect::<Result<_>>()?;
        let (order, excess_sorted) = sorted_by_risk(model, &risks);
        let sorted: Vec<&LossFunction> = order.iter().map(|&i| &fs[i]).collect();
        let counts = sample.counts();
        let n = sample.len();
        let nf = n as f64;
        // signed multiplicity of each atom: Σ_{i: ξ_i = atom} ε_i
        let mut signed = vec![0.0f64; counts.len()];
        for (&d, &e) in sample.draws().iter().zip(eps) {
            signed[d] += f64::from(e);
        }
        let sq_dist = |f: &LossFunction, g: &LossFunction| -> f64 {
            counts
                .iter()
                .zip(f.values().iter().zip(g.values()))
                .map(|(c, (a, b))| f64::from(*c) * (a - b) * (a - b))
                .sum::<f64>()
                / nf
        };
        let diameters = prefix_pairwise_sup(sorted.len(), |i, j| sq_dist(sorted[i], sorted[j]));
        let rademacher =
            prefix_spread(sorted.iter().map(|f| signed.iter().zip(f.values()).map(|(s, v)| s * v).sum::<f64>() / nf));
        Ok(EmpiricalProfile { excess_sorted, diameters, rademacher, n })
    }

    pub fn u_hat(&self, sigma: f64, cfg: &ComplexityConfig) -> f64 {
        let k = prefix_len(&self.excess_sorted, cfg.chat * sigma) - 1;
        let tn = cfg.t / self.n as f64;
        cfg.khat * (self.rademacher[k] + self.diameters[k] * tn.sqrt() + tn)
    }

    pub fn fixed_point(&self, cfg: &ComplexityConfig) -> ComplexityReport {
        let sigmas = cfg.grid.points();
        let values: Vec<f64> = sigmas.iter().map(|s| self.u_hat(*s, cfg)).collect();
        fixed_point_from_values(&sigmas, &values, None, cfg.threshold())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdealValue {
    pub value: f64,
    pub modulus: ModulusEstimate,
    pub diameter: f64,
}

/// `U_n(F_m; σ; t)` evaluated directly from its definition.
pub fn u_ideal(model: &Model, p: &DiscreteDistribution, n: usize, sigma: f64, cfg: &ComplexityConfig) -> Result<IdealValue> {
    if !(sigma > 0.0) {
        return param(format!("σ must be positive, got {sigma}"));
    }
    let modulus = expected_modulus(model, p, n, sigma, cfg.mc_reps, cfg.seed)?;
    let diameter = diameter(model, Basis::Population(p), sigma)?;
    let tn = cfg.t / n as f64;
    Ok(IdealValue { value: cfg.kbar * (modulus.mean + diameter * tn.sqrt() + tn), modulus, diameter })
}

/// `Û_n(F_m; σ; t)` evaluated directly from its definition.
pub fn u_hat(model: &Model, sample: &Sample, sigma: f64, cfg: &ComplexityConfig, eps: &[i8]) -> Result<f64> {
    if !(sigma > 0.0) {
        return param(format!("σ must be positive, got {sigma}"));
    }
    let level = cfg.chat * sigma;
    let modulus = rademacher_modulus(model, sample, level, eps)?;
    let diameter = diameter(model, Basis::Empirical(sample), level)?;
    let tn = cfg.t / sample.len() as f64;
    Ok(cfg.khat * (modulus + diameter * tn.sqrt() + tn))
}

pub enum FixedPointKind<'a> {
    /// `δ̄_n`: population minimal sets, Monte Carlo modulus.
    Ideal { p: &'a DiscreteDistribution, n: usize },
    /// `δ̂_n`: empirical minimal sets, one realized sign vector.
    Empirical { sample: &'a Sample, eps: &'a [i8] },
}

pub fn fixed_point(kind: FixedPointKind<'_>, model: &Model, cfg: &ComplexityConfig) -> Result<ComplexityReport> {
    cfg.validate()?;
    match kind {
        FixedPointKind::Ideal { p, n } => {
            Ok(PopulationProfile::new(model, p, n, cfg.mc_reps, cfg.seed)?.fixed_point(cfg))
        }
        FixedPointKind::Empirical { sample, eps } => Ok(EmpiricalProfile::new(model, sample, eps)?.fixed_point(cfg)),
    }
}

/// `v(m) = sqrt(2 t/n · Var_P(f_m − f*))`.
pub fn bernstein_radius(
    model: &Model,
    p: &DiscreteDistribution,
    fstar: &LossFunction,
    t: f64,
    n: usize,
) -> Result<f64> {
    let fm = population_minimizer(model, p)?;
    let var = population_variance(fm, fstar, p)?;
    Ok((2.0 * t / n as f64 * var).sqrt())
}

/// The realized Bernstein event `|(P_n − P)(f_m − f*)| ≤ v(m) + t/(3n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinEvent {
    pub deviation: f64,
    pub radius: f64,
    pub holds: bool,
}

pub fn bernstein_event(
    model: &Model,
    sample: &Sample,
    p: &DiscreteDistribution,
    fstar: &LossFunction,
    t: f64,
) -> Result<BernsteinEvent> {
    let n = sample.len();
    let fm = population_minimizer(model, p)?;
    let deviation = (empirical_mean(fm, sample)? - empirical_mean(fstar, sample)?)
        - (population_mean(fm, p)? - population_mean(fstar, p)?);
    let radius = bernstein_radius(model, p, fstar, t, n)? + t / (3.0 * n as f64);
    Ok(BernsteinEvent { deviation, radius, holds: deviation.abs() <= radius + CHECK_TOL })
}

/// `penid(m) = (P − P_n)(f̂_m)`.
pub fn ideal_penalty(model: &Model, sample: &Sample, p: &DiscreteDistribution) -> Result<f64> {
    let fhat = erm(model, sample)?;
    Ok(population_mean(fhat, p)? - empirical_mean(fhat, sample)?)
}

/// `(P − P_n)(f̂_m − f_m)`, the part of the ideal penalty the lower-bound
/// assumption controls.
pub fn centered_ideal_penalty(model: &Model, sample: &Sample, p: &DiscreteDistribution) -> Result<f64> {
    let fhat = erm(model, sample)?;
    let fm = population_minimizer(model, p)?;
    Ok((population_mean(fhat, p)? - empirical_mean(fhat, sample)?) - (population_mean(fm, p)? - empirical_mean(fm, sample)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyBoundCheck {
    pub model: usize,
    /// `(1 − c) pen(m)`.
    pub lhs: f64,
    /// `(P − P_n)(f̂_m − f_m) + t_m/n`.
    pub centered: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCheck {
    pub m: usize,
    pub m_prime: usize,
    /// `c pen(m)`.
    pub lhs: f64,
    /// `v(m) − C_1 v(m') − C_2 P(f_{m'} − f*)`.
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub per_model: Vec<PenaltyBoundCheck>,
    pub pairs: Vec<PairCheck>,
    /// `v(m)` per model.
    pub v: Vec<f64>,
    pub lower_bound_holds: bool,
    pub pair_condition_holds: bool,
}

pub struct AssumptionInputs<'a> {
    pub family: &'a ModelFamily,
    pub sample: &'a Sample,
    pub p: &'a DiscreteDistribution,
    pub fstar: &'a LossFunction,
    pub pen: &'a [f64],
    pub t: &'a [f64],
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Evaluate both penalty conditions exactly on one replicate:
///
/// - per model, `(1 − c) pen(m) ≥ (P − P_n)(f̂_m − f_m) + t_m/n ≥ 0`;
/// - per pair with `F_{m'} ⊆ F_m`, `c pen(m) ≥ v(m) − C_1 v(m') − C_2 P(f_{m'} − f*)`.
pub fn assumption_checker(inputs: &AssumptionInputs<'_>) -> Result<AssumptionReport> {
    let AssumptionInputs { family, sample, p, fstar, pen, t, c, c1, c2 } = *inputs;
    if pen.len() != family.len() || t.len() != family.len() {
        return param("penalty and confidence vectors must have one entry per model");
    }
    if !(0.0 < c && c < 1.0) {
        return param(format!("c must lie in (0,1), got {c}"));
    }
    let n = sample.len();
    let models = family.models();
    let mut per_model = Vec::with_capacity(models.len());
    let mut v = Vec::with_capacity(models.len());
    let mut excess_fm = Vec::with_capacity(models.len());
    for (m, model) in models.iter().enumerate() {
        let centered = centered_ideal_penalty(model, sample, p)? + t[m] / n as f64;
        let lhs = (1.0 - c) * pen[m];
        per_model.push(PenaltyBoundCheck {
            model: m,
            lhs,
            centered,
            holds: lhs >= centered - CHECK_TOL && centered >= -CHECK_TOL,
        });
        v.push(bernstein_radius(model, p, fstar, t[m], n)?);
        let fm = population_minimizer(model, p)?;
        excess_fm.push(population_mean(fm, p)? - population_mean(fstar, p)?);
    }
    let pairs: Vec<PairCheck> = family
        .inclusion_pairs()
        .into_iter()
        .map(|(m, mp)| {
            let lhs = c * pen[m];
            let rhs = v[m] - c1 * v[mp] - c2 * excess_fm[mp];
            PairCheck { m, m_prime: mp, lhs, rhs, holds: lhs >= rhs - CHECK_TOL }
        })
        .collect();
    Ok(AssumptionReport {
        lower_bound_holds: per_model.iter().all(|c| c.holds),
        pair_condition_holds: pairs.iter().all(|c| c.holds),
        per_model,
        pairs,
        v,
    })
}
