//! Calderón–Zygmund stopping time on a trapezoid.

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use super::split::{split_trapezoid, weighted_split_floor, SplitRule};
use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::Rational;
use crate::prefix::PrefixSums;
use crate::trapezoid::{intersects, Trapezoid, Window};
use crate::tree::TruncatedTree;
use crate::weights::{SubsetSampler, SubsetWitness, Weight};

#[derive(Clone, Debug, Serialize)]
pub struct CzPiece {
    pub trapezoid: Trapezoid,
    #[serde(with = "crate::numeric::rational_serde")]
    pub average: Rational,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CzProperties {
    /// Every selected piece has average at least λ.
    pub i: bool,
    /// Every selected piece has average below `D_CZ λ`.
    pub ii: bool,
    /// `|f| < λ` at every vertex of `R0` outside the family.
    pub iii: bool,
    pub disjoint: bool,
    /// Every split used was an exact partition.
    pub partitions: bool,
}

impl CzProperties {
    pub fn all(&self) -> bool {
        self.i && self.ii && self.iii && self.disjoint && self.partitions
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CzFamily {
    #[serde(with = "crate::numeric::rational_serde")]
    pub lambda: Rational,
    pub root: Trapezoid,
    pub pieces: Vec<CzPiece>,
    #[serde(with = "crate::numeric::rational_serde")]
    pub d_cz: Rational,
    pub weighted: bool,
    pub splits: usize,
    pub properties: CzProperties,
    pub residual_ok: bool,
}

struct Averager<'t> {
    num: PrefixSums<'t, Rational>,
    den: PrefixSums<'t, Rational>,
}

impl Averager<'_> {
    fn avg(&self, r: &Trapezoid) -> Rational {
        self.num.sum(r) / self.den.sum(r)
    }
}

fn run(
    m: &FlowMeasure,
    beta: crate::trapezoid::Beta,
    f: &[Rational],
    lambda: &Rational,
    r0: &Trapezoid,
    av: &Averager<'_>,
    d_cz: Rational,
    weighted: bool,
) -> Result<CzFamily> {
    let t = m.tree();
    if *lambda <= Rational::zero() {
        return Err(invalid("λ must be positive"));
    }
    if !r0.is_admissible(beta) {
        return Err(invalid(format!("{r0} is not admissible")));
    }
    r0.ensure_fits(t)?;
    let a0 = av.avg(r0);
    if a0 >= *lambda {
        return Err(FlowError::Inapplicable(format!("average {a0} over {r0} is not below λ = {lambda}")));
    }
    let mut pieces = Vec::new();
    let mut partitions = true;
    let mut splits = 0;
    let mut stack = vec![*r0];
    while let Some(e) = stack.pop() {
        if e.is_singleton() {
            continue;
        }
        let s = split_trapezoid(m, beta, &e)?;
        splits += 1;
        partitions &= s.is_partition(t)?;
        for p in s.pieces.into_iter().rev() {
            let a = av.avg(&p);
            if a >= *lambda {
                pieces.push(CzPiece { trapezoid: p, average: a });
            } else {
                stack.push(p);
            }
        }
    }
    pieces.sort_by(|a, b| a.trapezoid.cmp(&b.trapezoid));
    let properties = certify(t, f, lambda, r0, &pieces, &d_cz, partitions)?;
    Ok(CzFamily {
        lambda: lambda.clone(),
        root: *r0,
        residual_ok: properties.iii,
        pieces,
        d_cz,
        weighted,
        splits,
        properties,
    })
}

fn certify(
    t: &TruncatedTree,
    f: &[Rational],
    lambda: &Rational,
    r0: &Trapezoid,
    pieces: &[CzPiece],
    d_cz: &Rational,
    partitions: bool,
) -> Result<CzProperties> {
    let i = pieces.iter().all(|p| p.average >= *lambda);
    let cap = d_cz * lambda;
    let ii = pieces.iter().all(|p| p.average < cap);
    let mut disjoint = true;
    for (k, a) in pieces.iter().enumerate() {
        for b in &pieces[k + 1..] {
            if intersects(t, &a.trapezoid, &b.trapezoid) {
                disjoint = false;
            }
        }
    }
    let mut covered = vec![false; t.len()];
    for p in pieces {
        for y in p.trapezoid.members(t)? {
            covered[y.idx()] = true;
        }
    }
    let iii = r0.members(t)?.iter().all(|y| covered[y.idx()] || f[y.idx()].abs() < *lambda);
    Ok(CzProperties { i, ii, iii, disjoint, partitions })
}

/// Stopping-time decomposition of `R0` at level `λ` under `μ`.
pub fn cz_decompose(m: &FlowMeasure, rule: &SplitRule, f: &[Rational], lambda: &Rational, r0: &Trapezoid, window: &Window) -> Result<CzFamily> {
    let t = m.tree();
    if f.len() != t.len() {
        return Err(invalid("function length does not match the tree"));
    }
    let av = Averager {
        num: PrefixSums::new(t, f.iter().zip(m.values()).map(|(a, b)| a.abs() * b).collect()),
        den: PrefixSums::new(t, m.values().to_vec()),
    };
    run(m, window.beta, f, lambda, r0, &av, rule.d_cz.clone(), false)
}

#[derive(Clone, Debug, Serialize)]
pub struct Assumption1 {
    /// `C_D` of the split rule; subsets have `μ(S) <= (1 − C_D) μ(R)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub c_d: Rational,
    /// Largest sampled `w_μ(S)/w_μ(R)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub eta: Rational,
    pub worst: SubsetWitness,
    pub pairs: usize,
    #[serde(with = "crate::numeric::rational_serde")]
    pub margin: Rational,
    pub passes: bool,
    /// `w_μ(S) < α w_μ(R) ⇒ μ(S) < C_D μ(R)` with `α = 1 − η`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub alpha: Rational,
}

/// Samples `S ⊆ R` with `μ(S) <= (1 − C_D) μ(R)` and checks `w_μ(S) <= η w_μ(R)`, `η < 1 − margin`.
pub fn assumption1_check(
    m: &FlowMeasure,
    w: &Weight,
    rule: &SplitRule,
    window: &Window,
    sampler: &SubsetSampler,
    margin: &Rational,
) -> Result<Assumption1> {
    let xi = Rational::one() - &rule.c_d;
    let (worst, pairs) = crate::weights::worst_subset_pairs(w, m, window, &xi, sampler)?;
    let eta = worst.ratio.clone();
    Ok(Assumption1 {
        c_d: rule.c_d.clone(),
        passes: eta < Rational::one() - margin,
        alpha: Rational::one() - &eta,
        eta,
        worst,
        pairs,
        margin: margin.clone(),
    })
}

/// The same stopping time with `wμ` averages; `D'_CZ` is the reciprocal of the
/// weighted split floor on the window.
pub fn cz_decompose_weighted(
    m: &FlowMeasure,
    w: &Weight,
    rule: &SplitRule,
    f: &[Rational],
    lambda: &Rational,
    r0: &Trapezoid,
    window: &Window,
    sampler: &SubsetSampler,
) -> Result<CzFamily> {
    let t = m.tree();
    if f.len() != t.len() {
        return Err(invalid("function length does not match the tree"));
    }
    w.check_tree(t)?;
    let a1 = assumption1_check(m, w, rule, window, sampler, &Rational::zero())?;
    if !a1.passes {
        return Err(FlowError::Inapplicable(format!(
            "assumption 1 fails: w_μ(S)/w_μ(R) = {} on {} with {} vertices in S",
            a1.eta,
            a1.worst.trapezoid,
            a1.worst.subset.len()
        )));
    }
    let (floor, _) = weighted_split_floor(m, w, window)?;
    let wm: Vec<Rational> = w.values().iter().zip(m.values()).map(|(a, b)| a * b).collect();
    let av = Averager {
        num: PrefixSums::new(t, f.iter().zip(&wm).map(|(a, b)| a.abs() * b).collect()),
        den: PrefixSums::new(t, wm),
    };
    run(m, window.beta, f, lambda, r0, &av, floor.recip(), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maximal::certify_split_rule;
    use crate::numeric::{int, ratio};
    use crate::trapezoid::Beta;
    use crate::weights::LevelWeight;
    use std::sync::Arc;

    fn setup() -> (Arc<TruncatedTree>, FlowMeasure, SplitRule, Window) {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, 7, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let win = Window::full(Beta::default());
        let rule = certify_split_rule(&m, &win).unwrap();
        (t, m, rule, win)
    }

    #[test]
    fn constant_below_lambda_is_empty() {
        let (t, m, rule, win) = setup();
        let f = vec![int(1); t.len()];
        let r0 = Trapezoid { root: t.top(), h1: 1, h2: 6 };
        let c = cz_decompose(&m, &rule, &f, &int(2), &r0, &win).unwrap();
        assert!(c.pieces.is_empty() && c.properties.all());
        assert!(cz_decompose(&m, &rule, &f, &int(1), &r0, &win).is_err());
    }

    #[test]
    fn point_mass_at_a_leaf() {
        let (t, m, rule, win) = setup();
        let mut f = vec![int(0); t.len()];
        let leaf = t.bottom_vertices()[3];
        f[leaf.idx()] = int(100);
        let r0 = Trapezoid { root: t.top(), h1: 1, h2: 8 };
        let lambda = ratio(1, 2);
        let c = cz_decompose(&m, &rule, &f, &lambda, &r0, &win).unwrap();
        assert!(!c.pieces.is_empty());
        assert!(c.properties.all(), "{:?}", c.properties);
        assert!(c.pieces.iter().all(|p| p.trapezoid.contains_vertex(&t, leaf)));
    }

    #[test]
    fn weighted_variant() {
        let (t, m, rule, win) = setup();
        let w = Weight::from_level(&t, &LevelWeight::periodic(vec![int(2), int(1)]).unwrap());
        let mut f = vec![int(0); t.len()];
        f[t.bottom_vertices()[0].idx()] = int(50);
        let r0 = Trapezoid { root: t.top(), h1: 1, h2: 8 };
        let s = SubsetSampler::default();
        let c = cz_decompose_weighted(&m, &w, &rule, &f, &int(1), &r0, &win, &s).unwrap();
        assert!(c.properties.all());
        let one = Weight::constant(&t, int(1)).unwrap();
        let a = cz_decompose_weighted(&m, &one, &rule, &f, &int(1), &r0, &win, &s).unwrap();
        let b = cz_decompose(&m, &rule, &f, &int(1), &r0, &win).unwrap();
        let ta: Vec<_> = a.pieces.iter().map(|p| p.trapezoid).collect();
        let tb: Vec<_> = b.pieces.iter().map(|p| p.trapezoid).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn assumption_one_for_unit_weight() {
        let (t, m, rule, win) = setup();
        let one = Weight::constant(&t, int(1)).unwrap();
        let a = assumption1_check(&m, &one, &rule, &win, &SubsetSampler::default(), &Rational::zero()).unwrap();
        assert!(a.eta <= Rational::one() - &rule.c_d);
        assert!(a.passes);
    }
}
