//! Reverse Hölder inequalities, openness of A_p, and the A_∞ conditions.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ap::{ainfty_constant, ap_constant, ApKernel};
use super::{mu_of, sup_over, Backend, Field, Weight, WeightSums};
use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{int, ConstantValue, Interval, Rational};
use crate::trapezoid::{Trapezoid, Window};
use crate::tree::VertexId;

#[derive(Clone, Debug, Serialize)]
pub struct ReverseHolderRow {
    #[serde(with = "crate::numeric::rational_serde")]
    pub eps: Rational,
    pub c: ConstantValue,
    pub argmax: Trapezoid,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReverseHolderResult {
    /// Largest grid ε whose constant stays within the cap.
    #[serde(with = "opt_rational")]
    pub eps: Option<Rational>,
    pub c: ConstantValue,
    /// Smallest rational dominating `c`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub c_upper: Rational,
    #[serde(with = "crate::numeric::rational_serde")]
    pub cap: Rational,
    pub series: Vec<ReverseHolderRow>,
    /// No grid ε works; only the trivial `ε = 0, C = 1` remains.
    pub degenerate: bool,
}

mod opt_rational {
    use crate::numeric::Rational;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_str(&r.to_string()),
            None => s.serialize_none(),
        }
    }
}

/// `{1, 1/2, …, 2^{-k}}`.
pub fn dyadic_grid(k: u32) -> Vec<Rational> {
    (0..=k).map(|i| Rational::new(1.into(), num_bigint::BigInt::from(1u64) << i)).collect()
}

fn check_grid(grid: &[Rational]) -> Result<Vec<Rational>> {
    if grid.is_empty() || grid.iter().any(|e| *e <= Rational::zero()) {
        return Err(invalid("ε grid must be nonempty and positive"));
    }
    let mut g = grid.to_vec();
    g.sort();
    g.dedup();
    g.reverse();
    Ok(g)
}

fn pick(series: Vec<ReverseHolderRow>, cap: &Rational) -> ReverseHolderResult {
    let chosen = series.iter().find(|r| r.c.certainly_le(&ConstantValue::Exact(cap.clone())));
    let (eps, c) = match chosen {
        Some(r) => (Some(r.eps.clone()), r.c.clone()),
        None => (None, ConstantValue::one()),
    };
    ReverseHolderResult {
        degenerate: eps.is_none(),
        c_upper: c.upper_rational(),
        eps,
        c,
        cap: cap.clone(),
        series,
    }
}

/// Largest grid `ε` with `(avg_R w^{1+ε})^{1/(1+ε)} <= C avg_R w` over the window, `C <= cap`.
pub fn reverse_holder_search(
    w: &Weight,
    m: &FlowMeasure,
    window: &Window,
    eps_grid: &[Rational],
    cap: &Rational,
) -> Result<ReverseHolderResult> {
    let t = m.tree();
    w.check_tree(t)?;
    let grid = check_grid(eps_grid)?;
    let sums = WeightSums::new(t, w, m);
    let mut series = Vec::new();
    for eps in grid {
        let e1 = &eps + Rational::one();
        let field = Field::power_times_mass(w, m, &e1)?.prefix(t);
        let inv = Rational::one() / &e1;
        let (c, argmax) = sup_over(t, window, |r| {
            let mu_r = mu_of(m, r);
            if sums.is_constant_on(r, &mu_r) {
                return Ok(ConstantValue::one());
            }
            let mu = ConstantValue::Exact(mu_r);
            let lhs = field.sum(r).div(&mu)?.pow(&inv)?;
            let avg = ConstantValue::Exact(sums.w_mu.sum(r)).div(&mu)?;
            Ok(lhs.div(&avg)?.clamp_below(1.0))
        })?
        .ok_or(FlowError::EmptyWindow)?;
        series.push(ReverseHolderRow { eps, c, argmax });
    }
    Ok(pick(series, cap))
}

/// Reverse Hölder for `w^{-1}` under `wμ`:
/// `(Σ_R w^{-ε} μ / w_μ(R))^{1/(1+ε)} <= C μ(R)/w_μ(R)`.
pub fn weighted_reverse_holder(
    w: &Weight,
    m: &FlowMeasure,
    window: &Window,
    eps_grid: &[Rational],
    cap: &Rational,
) -> Result<ReverseHolderResult> {
    let t = m.tree();
    w.check_tree(t)?;
    let grid = check_grid(eps_grid)?;
    let sums = WeightSums::new(t, w, m);
    let mut series = Vec::new();
    for eps in grid {
        let field = Field::power_times_mass(w, m, &-eps.clone())?.prefix(t);
        let inv = Rational::one() / (&eps + Rational::one());
        let (c, argmax) = sup_over(t, window, |r| {
            let mu_r = mu_of(m, r);
            if sums.is_constant_on(r, &mu_r) {
                return Ok(ConstantValue::one());
            }
            let wr = ConstantValue::Exact(sums.w_mu.sum(r));
            let lhs = field.sum(r).div(&wr)?.pow(&inv)?;
            Ok(lhs.mul(&wr.div(&ConstantValue::Exact(mu_r))?).clamp_below(1.0))
        })?
        .ok_or(FlowError::EmptyWindow)?;
        series.push(ReverseHolderRow { eps, c, argmax });
    }
    Ok(pick(series, cap))
}

/// `(D_CZ/γ)^ε η < 1`, the smallness condition closing the stopping-time proof.
pub fn reverse_holder_proof_condition(d_cz: &Rational, gamma: &Rational, eta: &Rational, eps: &Rational) -> Result<bool> {
    let base = Interval::from_rational(&(d_cz / gamma));
    let v = base.pow_rational(eps)? * Interval::from_rational(eta);
    Ok(v.hi < 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct OpennessCheck {
    #[serde(with = "crate::numeric::rational_serde")]
    pub p: Rational,
    #[serde(with = "crate::numeric::rational_serde")]
    pub eps: Rational,
    #[serde(with = "crate::numeric::rational_serde")]
    pub delta: Rational,
    #[serde(with = "crate::numeric::rational_serde")]
    pub s: Rational,
    /// `[w^δ]_{A_s}` on the window.
    pub lhs: ConstantValue,
    /// `[w]_{A_p}^δ` on the window.
    pub rhs: ConstantValue,
    pub holds: bool,
}

/// With `δ = 1/(1+ε)` and `s = (p+ε)/(1+ε)`: `[w^δ]_{A_s} <= [w]_{A_p}^δ`.
pub fn openness_check(w: &Weight, m: &FlowMeasure, window: &Window, p: &Rational, eps: &Rational) -> Result<OpennessCheck> {
    if *eps <= Rational::zero() {
        return Err(invalid("ε must be positive"));
    }
    let t = m.tree();
    w.check_tree(t)?;
    let one = Rational::one();
    let delta = &one / (&one + eps);
    let s = (p + eps) / (&one + eps);
    let ap = ap_constant(w, m, window, p, Backend::Exact)?;
    let kernel = ApKernel::new(t, w, m, p, Backend::Exact)?;
    // (w^δ)^{-1/(s-1)} = w^{-1/(p-1)}, so the σ sums are shared with A_p.
    let wd = Field::power_times_mass(w, m, &delta)?.prefix(t);
    let outer = (p - &one) * &delta;
    let (lhs, _) = sup_over(t, window, |r| {
        let mu_r = mu_of(m, r);
        if kernel.sums.is_constant_on(r, &mu_r) {
            return Ok(ConstantValue::one());
        }
        let mu = ConstantValue::Exact(mu_r);
        let a = wd.sum(r).div(&mu)?;
        let b = kernel.sigma.sum(r).div(&mu)?.pow(&outer)?;
        Ok(a.mul(&b).clamp_below(1.0))
    })?
    .ok_or(FlowError::EmptyWindow)?;
    let rhs = ap.constant.pow(&delta)?.clamp_below(1.0);
    let holds = lhs.certainly_le(&rhs) || lhs == rhs;
    Ok(OpennessCheck { p: p.clone(), eps: eps.clone(), delta, s, lhs, rhs, holds })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionIiiRow {
    #[serde(with = "crate::numeric::rational_serde")]
    pub gamma: Rational,
    /// `max_R μ({w <= γ avg_R w} ∩ R)/μ(R)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub delta: Rational,
    pub argmax: Trapezoid,
    /// `log(1+[w]_{A∞}) / log(1+(γ[w]_{A∞})^{-1})`.
    pub formula_bound: Interval,
    pub within_bound: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionIii {
    pub a_inf_constant: ConstantValue,
    pub rows: Vec<ConditionIiiRow>,
    pub non_increasing: bool,
    pub all_within_bound: bool,
}

fn low_fraction(w: &Weight, m: &FlowMeasure, members: &[VertexId], mu_r: &Rational, thresh: &Rational) -> Rational {
    let low = members.iter().filter(|y| w.value(**y) <= thresh).fold(Rational::zero(), |a, y| a + m.value(*y));
    low / mu_r
}

/// The empirical `δ(γ)` of the level-set condition, one row per `γ`.
pub fn thainf_condition_iii_check(w: &Weight, m: &FlowMeasure, window: &Window, gammas: &[Rational]) -> Result<ConditionIii> {
    let t = m.tree();
    w.check_tree(t)?;
    if gammas.iter().any(|g| *g <= Rational::zero()) {
        return Err(invalid("γ must be positive"));
    }
    let ainf = ainfty_constant(w, m, window, &[])?.a_inf_constant;
    let sums = WeightSums::new(t, w, m);
    let ai = ainf.interval();
    let mut rows = Vec::new();
    for g in gammas {
        // (root, h1, h2) order, so ties resolve like `Sup`
        let best = (0..t.len() as u32)
            .into_par_iter()
            .map(|i| -> Result<Option<(Rational, Trapezoid)>> {
                let mut best: Option<(Rational, Trapezoid)> = None;
                for r in window.at_root(t, VertexId(i)) {
                    let mu_r = mu_of(m, &r);
                    let thresh = g * sums.w_mu.sum(&r) / &mu_r;
                    let d = low_fraction(w, m, &r.members(t)?, &mu_r, &thresh);
                    if best.as_ref().is_none_or(|(b, _)| d > *b) {
                        best = Some((d, r));
                    }
                }
                Ok(best)
            })
            .try_reduce(
                || None,
                |a, b| {
                    Ok(match (a, b) {
                        (None, x) | (x, None) => x,
                        (Some(a), Some(b)) => {
                            if b.0 > a.0 || b.0 == a.0 && b.1 < a.1 {
                                Some(b)
                            } else {
                                Some(a)
                            }
                        }
                    })
                },
            )?;
        let (delta, argmax) = best.ok_or(FlowError::EmptyWindow)?;
        let one = Interval::point(1.0);
        let gi = Interval::from_rational(g);
        let bound = ((one + ai).ln()? / (one + (gi * ai).recip()?).ln()?)?;
        let within_bound = Interval::from_rational(&delta).certainly_le(&Interval::point(bound.lo)) || delta.is_zero();
        rows.push(ConditionIiiRow { gamma: g.clone(), delta, argmax, formula_bound: bound, within_bound });
    }
    let mut by_gamma: Vec<&ConditionIiiRow> = rows.iter().collect();
    by_gamma.sort_by(|a, b| a.gamma.cmp(&b.gamma));
    let non_increasing = by_gamma.windows(2).all(|p| p[0].delta <= p[1].delta);
    let all_within_bound = rows.iter().all(|r| r.within_bound);
    Ok(ConditionIii { a_inf_constant: ainf, rows, non_increasing, all_within_bound })
}

/// How subsets `S ⊆ R` with `μ(S) <= ξ μ(R)` are produced.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SubsetSampler {
    pub seed: u64,
    /// Random subsets per trapezoid, besides the greedy heaviest one.
    pub random_per_trapezoid: usize,
    /// Visit at most this many trapezoids (evenly strided).
    pub max_trapezoids: Option<usize>,
}

impl Default for SubsetSampler {
    fn default() -> Self {
        SubsetSampler { seed: 0x5eed, random_per_trapezoid: 4, max_trapezoids: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SubsetWitness {
    pub trapezoid: Trapezoid,
    pub subset: Vec<VertexId>,
    /// `w_μ(S)/w_μ(R)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub ratio: Rational,
    /// `μ(S)/μ(R)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub mass_fraction: Rational,
}

fn greedy_heavy(w: &Weight, m: &FlowMeasure, members: &[VertexId], budget: &Rational) -> Vec<VertexId> {
    let mut order = members.to_vec();
    order.sort_by(|a, b| w.value(*b).cmp(w.value(*a)).then(a.cmp(b)));
    let mut used = Rational::zero();
    let mut s = Vec::new();
    for y in order {
        let next = &used + m.value(y);
        if next <= *budget {
            used = next;
            s.push(y);
        }
    }
    s
}

fn random_subset(rng: &mut ChaCha8Rng, m: &FlowMeasure, members: &[VertexId], budget: &Rational) -> Vec<VertexId> {
    let mut order = members.to_vec();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let keep = rng.gen_range(0..=order.len());
    let mut used = Rational::zero();
    let mut s = Vec::new();
    for y in order.into_iter().take(keep) {
        let next = &used + m.value(y);
        if next <= *budget {
            used = next;
            s.push(y);
        }
    }
    s.sort();
    s
}

/// Sampled pairs `(R, S)`; returns the largest `w_μ(S)/w_μ(R)` and the number of pairs.
pub fn worst_subset(
    w: &Weight,
    m: &FlowMeasure,
    window: &Window,
    xi: &Rational,
    sampler: &SubsetSampler,
) -> Result<(SubsetWitness, usize)> {
    if *xi <= Rational::zero() || *xi >= Rational::one() {
        return Err(invalid("ξ must lie in (0, 1)"));
    }
    let t = m.tree();
    w.check_tree(t)?;
    let family: Vec<Trapezoid> = window.enumerate(t).collect();
    let stride = match sampler.max_trapezoids {
        Some(n) if n > 0 && family.len() > n => family.len().div_ceil(n),
        _ => 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut best: Option<SubsetWitness> = None;
    let mut pairs = 0;
    for r in family.iter().step_by(stride) {
        let members = r.members(t)?;
        let mu_r = mu_of(m, r);
        let wr = w.weighted_measure(m, &members);
        let budget = xi * &mu_r;
        let mut candidates = vec![greedy_heavy(w, m, &members, &budget)];
        for _ in 0..sampler.random_per_trapezoid {
            candidates.push(random_subset(&mut rng, m, &members, &budget));
        }
        for s in candidates {
            pairs += 1;
            let ratio = w.weighted_measure(m, &s) / &wr;
            if best.as_ref().is_none_or(|b| ratio > b.ratio) {
                let mass_fraction = m.set_measure(&s) / &mu_r;
                best = Some(SubsetWitness { trapezoid: *r, subset: s, ratio, mass_fraction });
            }
        }
    }
    best.map(|b| (b, pairs)).ok_or(FlowError::EmptyWindow)
}

#[derive(Clone, Debug, Serialize)]
pub struct PreReverseCheck {
    #[serde(with = "crate::numeric::rational_serde")]
    pub xi: Rational,
    pub ap_constant: ConstantValue,
    /// `1 − (1−ξ)^p/[w]_{A_p}`.
    pub bound: ConstantValue,
    pub worst: SubsetWitness,
    pub pairs: usize,
    pub holds: bool,
}

/// `μ(S) <= ξ μ(R) ⇒ w_μ(S) <= (1 − (1−ξ)^p/[w]_{A_p}) w_μ(R)` on sampled pairs.
pub fn lemma_pre_reverse_check(
    w: &Weight,
    m: &FlowMeasure,
    window: &Window,
    p: &Rational,
    xi: &Rational,
    sampler: &SubsetSampler,
) -> Result<PreReverseCheck> {
    let ap = ap_constant(w, m, window, p, Backend::Exact)?.constant;
    let (worst, pairs) = worst_subset(w, m, window, xi, sampler)?;
    let bound = pre_reverse_bound(&ap, p, xi)?;
    let holds = ConstantValue::Exact(worst.ratio.clone()).certainly_le(&bound);
    Ok(PreReverseCheck { xi: xi.clone(), ap_constant: ap, bound, worst, pairs, holds })
}

pub(crate) fn pre_reverse_bound(ap: &ConstantValue, p: &Rational, xi: &Rational) -> Result<ConstantValue> {
    let one = ConstantValue::one();
    let shrink = ConstantValue::Exact(Rational::one() - xi).pow(p)?.div(ap)?;
    Ok(match (&one, &shrink) {
        (ConstantValue::Exact(a), ConstantValue::Exact(b)) => ConstantValue::Exact(a - b),
        _ => ConstantValue::Enclosure(one.interval() - shrink.interval()),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionIv {
    #[serde(with = "crate::numeric::rational_serde")]
    pub xi: Rational,
    /// Largest sampled `w_μ(S)/w_μ(R)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub eta: Rational,
    pub worst: SubsetWitness,
    pub pairs: usize,
    /// `1 − (1−ξ)^2/[w]_{A_2}` on the same window.
    pub pre_reverse_bound: ConstantValue,
    pub below_one: bool,
    pub within_pre_reverse: bool,
}

/// `η(ξ) = max w_μ(S)/w_μ(R)` over sampled `S ⊆ R`, `μ(S) <= ξ μ(R)`.
pub fn thainf_condition_iv_check(
    w: &Weight,
    m: &FlowMeasure,
    window: &Window,
    xi: &Rational,
    sampler: &SubsetSampler,
) -> Result<ConditionIv> {
    let (worst, pairs) = worst_subset(w, m, window, xi, sampler)?;
    let a2 = ap_constant(w, m, window, &int(2), Backend::Exact)?.constant;
    let bound = pre_reverse_bound(&a2, &int(2), xi)?;
    let eta = worst.ratio.clone();
    Ok(ConditionIv {
        xi: xi.clone(),
        below_one: eta < Rational::one(),
        within_pre_reverse: ConstantValue::Exact(eta.clone()).certainly_le(&bound),
        eta,
        worst,
        pairs,
        pre_reverse_bound: bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;
    use crate::trapezoid::Beta;
    use crate::tree::TruncatedTree;
    use crate::weights::LevelWeight;
    use std::sync::Arc;

    fn setup(depth: i64) -> (Arc<TruncatedTree>, FlowMeasure, Weight) {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, depth, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let w = Weight::from_level(&t, &LevelWeight::periodic(vec![int(2), int(1)]).unwrap());
        (t, m, w)
    }

    #[test]
    fn unit_weight_reverse_holder() {
        let (t, m, _) = setup(5);
        let one = Weight::constant(&t, int(3)).unwrap();
        let win = Window::full(Beta::default());
        let r = reverse_holder_search(&one, &m, &win, &dyadic_grid(4), &int(2)).unwrap();
        assert_eq!(r.eps, Some(int(1)));
        assert_eq!(r.c, ConstantValue::one());
        let r = weighted_reverse_holder(&one, &m, &win, &dyadic_grid(4), &int(2)).unwrap();
        assert_eq!(r.c, ConstantValue::one());
    }

    #[test]
    fn alternating_reverse_holder() {
        let (_, m, w) = setup(6);
        let win = Window::full(Beta::default());
        let r = reverse_holder_search(&w, &m, &win, &dyadic_grid(6), &int(2)).unwrap();
        assert!(!r.degenerate);
        // bounded by max w / min w
        assert!(r.series.iter().all(|row| row.c.hi() <= 2.0 + 1e-9));
        let r = weighted_reverse_holder(&w, &m, &win, &dyadic_grid(6), &int(2)).unwrap();
        assert!(r.eps.is_some());
    }

    #[test]
    fn openness_and_level_sets() {
        let (_, m, w) = setup(6);
        let win = Window::full(Beta::default());
        let o = openness_check(&w, &m, &win, &int(2), &ratio(1, 2)).unwrap();
        assert!(o.holds, "{o:?}");
        assert_eq!(o.s, ratio(5, 3));
        let gammas: Vec<Rational> = (1..=4).map(|k| ratio(1, 1 << k)).collect();
        let c = thainf_condition_iii_check(&w, &m, &win, &gammas).unwrap();
        assert!(c.non_increasing && c.all_within_bound, "{c:?}");
    }

    #[test]
    fn subset_conditions() {
        let (t, m, w) = setup(5);
        let win = Window::full(Beta::default());
        let s = SubsetSampler::default();
        let c = lemma_pre_reverse_check(&w, &m, &win, &int(2), &ratio(1, 2), &s).unwrap();
        assert!(c.holds);
        assert!(c.worst.mass_fraction <= ratio(1, 2));
        let iv = thainf_condition_iv_check(&w, &m, &win, &ratio(1, 2), &s).unwrap();
        assert!(iv.below_one && iv.within_pre_reverse);
        let one = Weight::constant(&t, int(1)).unwrap();
        let iv = thainf_condition_iv_check(&one, &m, &win, &ratio(1, 2), &s).unwrap();
        assert!(iv.eta <= ratio(1, 2));
    }

    #[test]
    fn proof_condition() {
        assert!(reverse_holder_proof_condition(&int(4), &ratio(1, 2), &ratio(1, 2), &ratio(1, 16)).unwrap());
        assert!(!reverse_holder_proof_condition(&int(4), &ratio(1, 2), &ratio(1, 2), &int(1)).unwrap());
    }
}
