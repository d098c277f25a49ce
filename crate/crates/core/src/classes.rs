//! Model families built from explicit predictor enumerations.
//!
//! Every predictor `u: X → {0,1}` becomes its 0-1 loss `(x, y) ↦ 1{u(x) ≠ y}`.
//! Within a model, functions keep construction order; ERM breaks ties by id,
//! so ids are assigned deterministically from the predictor itself.

use std::sync::Arc;

use crate::domain::{Domain, LossFunction, Model, ModelFamily};
use crate::error::{param, Result};

/// Largest supported dyadic depth (256 predictors in the finest model).
pub const MAX_DYADIC_DEPTH: u32 = 3;

#[derive(Debug, Clone)]
pub enum PredictorClassSpec {
    /// One model per function.
    Singletons(Vec<LossFunction>),
    /// Models are the prefixes of the sequence, of lengths `1..=len`.
    PrefixNested(Vec<LossFunction>),
    /// `order` lists the `x` indices from smallest to largest. Model `d`
    /// (`d = 1..=|X|`) holds the thresholds `t_j(x) = 1{rank(x) < j}` for
    /// `j = 0..=d`, so it has `d + 1` members.
    Thresholds { order: Vec<usize> },
    /// `order` lists the leaves of a complete binary partition tree of depth
    /// `max_depth`. Model `d` (`d = 0..=max_depth`) holds every predictor
    /// constant on the `2^d` dyadic cells.
    DyadicHistograms { order: Vec<usize>, max_depth: u32 },
}

fn check_order(order: &[usize], domain: &Domain) -> Result<()> {
    let mut seen = vec![false; domain.x_count()];
    if order.len() != domain.x_count() {
        return param(format!(
            "ordering lists {} points but the domain has {}",
            order.len(),
            domain.x_count()
        ));
    }
    for &x in order {
        match seen.get_mut(x) {
            Some(s) if !*s => *s = true,
            _ => return param(format!("ordering is not a permutation of X (at {x})")),
        }
    }
    Ok(())
}

fn predictor_from_ranks(order: &[usize], value_at_rank: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut u = vec![0u8; order.len()];
    for (rank, &x) in order.iter().enumerate() {
        u[x] = value_at_rank(rank);
    }
    u
}

/// Materialize a family. The nested flag is set iff consecutive inclusion
/// holds.
pub fn build_family(spec: &PredictorClassSpec, domain: &Arc<Domain>) -> Result<ModelFamily> {
    let models = match spec {
        PredictorClassSpec::Singletons(fs) => fs
            .iter()
            .map(|f| Model::new(format!("f{}", f.id()), vec![f.clone()]))
            .collect::<Result<Vec<_>>>()?,
        PredictorClassSpec::PrefixNested(fs) => (1..=fs.len())
            .map(|len| Model::new(format!("prefix{len}"), fs[..len].to_vec()))
            .collect::<Result<Vec<_>>>()?,
        PredictorClassSpec::Thresholds { order } => {
            check_order(order, domain)?;
            let g = order.len();
            let thresholds = (0..=g)
                .map(|j| {
                    let u = predictor_from_ranks(order, |rank| u8::from(rank < j));
                    LossFunction::zero_one(j, domain.clone(), &u)
                })
                .collect::<Result<Vec<_>>>()?;
            (1..=g)
                .map(|d| Model::new(format!("threshold{d}"), thresholds[..=d].to_vec()))
                .collect::<Result<Vec<_>>>()?
        }
        PredictorClassSpec::DyadicHistograms { order, max_depth } => {
            check_order(order, domain)?;
            if *max_depth > MAX_DYADIC_DEPTH {
                return param(format!("dyadic depth {max_depth} exceeds {MAX_DYADIC_DEPTH}"));
            }
            let g = order.len();
            if g != 1 << max_depth {
                return param(format!("dyadic depth {max_depth} needs {} points, got {g}", 1 << max_depth));
            }
            (0..=*max_depth)
                .map(|d| {
                    let cells = 1usize << d;
                    let width = g / cells;
                    let functions = (0..(1u64 << cells))
                        .map(|pattern| {
                            let at_rank = |rank: usize| ((pattern >> (rank / width)) & 1) as u8;
                            // id: the predictor's values as a bitmask over ranks
                            let id = (0..g).fold(0usize, |acc, r| acc | (usize::from(at_rank(r)) << r));
                            let u = predictor_from_ranks(order, at_rank);
                            LossFunction::zero_one(id, domain.clone(), &u)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Model::new(format!("dyadic{d}"), functions)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    ModelFamily::detect(models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{build_counterexample, build_margin_gap};

    fn grid(g: usize) -> Arc<Domain> {
        Arc::new(Domain::product((0..g).map(|i| format!("g{i}"))).unwrap())
    }

    #[test]
    fn counterexample_singletons_not_nested() {
        let inst = build_counterexample(16).unwrap();
        let fam = build_family(
            &PredictorClassSpec::Singletons(vec![inst.f0.clone(), inst.f1.clone()]),
            inst.domain(),
        )
        .unwrap();
        assert_eq!(fam.len(), 2);
        assert!(!fam.is_nested());
    }

    #[test]
    fn prefix_chain_of_odd_flips_is_nested() {
        let inst = build_margin_gap(2.0, 8, 16).unwrap();
        let odd: Vec<_> = (0..4).map(|k| inst.fs[2 * k + 1].clone()).collect();
        let fam = build_family(&PredictorClassSpec::PrefixNested(odd), inst.domain()).unwrap();
        assert!(fam.is_nested());
        let sizes: Vec<usize> = fam.models().iter().map(Model::len).collect();
        assert_eq!(sizes, vec![1, 2, 3, 4]);
    }

    #[test]
    fn threshold_sizes_on_eight_points() {
        let d = grid(8);
        let fam = build_family(&PredictorClassSpec::Thresholds { order: (0..8).collect() }, &d).unwrap();
        assert!(fam.is_nested());
        let sizes: Vec<usize> = fam.models().iter().map(Model::len).collect();
        assert_eq!(sizes, (2..=9).collect::<Vec<_>>());
        for w in fam.models().windows(2) {
            assert!(w[0].is_subset_of(&w[1]));
        }
        for f in fam.models().iter().flat_map(Model::functions) {
            assert!(f.is_zero_one());
        }
    }

    #[test]
    fn thresholds_need_a_permutation() {
        let d = grid(4);
        assert!(build_family(&PredictorClassSpec::Thresholds { order: vec![0, 1, 2] }, &d).is_err());
        assert!(build_family(&PredictorClassSpec::Thresholds { order: vec![0, 1, 1, 2] }, &d).is_err());
    }

    #[test]
    fn dyadic_histograms_are_nested() {
        let d = grid(8);
        let fam = build_family(
            &PredictorClassSpec::DyadicHistograms { order: vec![3, 1, 0, 2, 7, 6, 5, 4], max_depth: 3 },
            &d,
        )
        .unwrap();
        assert!(fam.is_nested());
        let sizes: Vec<usize> = fam.models().iter().map(Model::len).collect();
        assert_eq!(sizes, vec![2, 4, 16, 256]);
        assert!(build_family(&PredictorClassSpec::DyadicHistograms { order: (0..8).collect(), max_depth: 2 }, &d)
            .is_err());
    }
}
