//! Weights and the constants attached to them.

mod ap;
mod bmo;
mod reverse;
mod th1;

pub use ap::{
    a1_constant, ainfty_constant, ap_constant, ap_duality_characterization_check, ap_product, level_ap_constant,
    theorem_th01_check, AinftyReport, DualityCheck, LevelApResult, Th01Certificate,
};
pub use ap::{th01_witness_level, AinftyComparison};
pub use bmo::{bmo_log_weight_check, bmo_norm, bmo_to_ainfty, BmoLogCheck, BmoReport, BmoToAinfty, LambdaRow, VertexFunction};
pub use reverse::{
    dyadic_grid, lemma_pre_reverse_check, openness_check, reverse_holder_proof_condition, reverse_holder_search,
    thainf_condition_iii_check, thainf_condition_iv_check, weighted_reverse_holder, ConditionIii, ConditionIiiRow,
    ConditionIv, OpennessCheck, PreReverseCheck, ReverseHolderResult, ReverseHolderRow, SubsetSampler, SubsetWitness,
};
pub use reverse::worst_subset as worst_subset_pairs;
pub use th1::{envelope_ratio, sparse_slab_counts, theorem_th1_check, Th1Certificate};



use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{pow_i, rational_vec_serde, ConstantValue, Interval, Rational};
use crate::prefix::PrefixSums;
use crate::trapezoid::{Trapezoid, Window};
use crate::tree::{Shape, TruncatedTree, VertexId};

/// A strictly positive vertex function.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    values: Vec<Rational>,
}

/// `W: ℤ → (0,∞)`, inducing `w(x) = W(ℓ(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevelWeight {
    /// `W(ℓ) = pattern[ℓ mod len]`.
    Periodic {
        #[serde(with = "rational_vec_serde")]
        pattern: Vec<Rational>,
    },
    /// `W(ℓ) = base^ℓ`.
    Power {
        #[serde(with = "crate::numeric::rational_serde")]
        base: Rational,
    },
}

impl LevelWeight {
    pub fn periodic(pattern: Vec<Rational>) -> Result<Self> {
        if pattern.is_empty() || pattern.iter().any(|v| *v <= Rational::zero()) {
            return Err(invalid("periodic level weight needs a nonempty positive pattern"));
        }
        Ok(LevelWeight::Periodic { pattern })
    }

    pub fn power(base: Rational) -> Result<Self> {
        if base <= Rational::zero() {
            return Err(invalid("level weight base must be positive"));
        }
        Ok(LevelWeight::Power { base })
    }

    pub fn at(&self, level: i64) -> Rational {
        match self {
            LevelWeight::Periodic { pattern } => pattern[level.rem_euclid(pattern.len() as i64) as usize].clone(),
            LevelWeight::Power { base } => pow_i(base, level),
        }
    }
}

impl Weight {
    pub fn from_values(values: Vec<Rational>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| *v <= Rational::zero()) {
            return Err(invalid(format!("weight at vertex {i} is not positive")));
        }
        Ok(Weight { values })
    }

    pub fn constant(t: &TruncatedTree, c: Rational) -> Result<Self> {
        Self::from_values(vec![c; t.len()])
    }

    pub fn from_level(t: &TruncatedTree, w: &LevelWeight) -> Self {
        Weight { values: t.ids().map(|x| w.at(t.level(x))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn value(&self, x: VertexId) -> &Rational {
        &self.values[x.idx()]
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn scaled(&self, lambda: &Rational) -> Result<Self> {
        Self::from_values(self.values.iter().map(|v| v * lambda).collect())
    }

    /// `w^k` for an integer exponent.
    pub fn powi(&self, k: i64) -> Self {
        Weight { values: self.values.iter().map(|v| pow_i(v, k)).collect() }
    }

    pub fn check_tree(&self, t: &TruncatedTree) -> Result<()> {
        if self.values.len() != t.len() {
            return Err(invalid(format!("weight has {} values, tree has {} vertices", self.values.len(), t.len())));
        }
        Ok(())
    }

    /// `w_μ(E) = Σ_{y∈E} w(y) μ(y)`.
    pub fn weighted_measure(&self, m: &FlowMeasure, set: &[VertexId]) -> Rational {
        set.iter().fold(Rational::zero(), |acc, y| acc + &self.values[y.idx()] * m.value(*y))
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|p| p[0] == p[1])
    }
}

/// Vertex values that are exact when possible.
#[derive(Clone, Debug)]
pub enum Field {
    Exact(Vec<Rational>),
    Approx(Vec<Interval>),
}

impl Field {
    /// `w(x)^e μ(x)`.
    pub fn power_times_mass(w: &Weight, m: &FlowMeasure, e: &Rational) -> Result<Field> {
        if e.is_integer() {
            let k = e.to_integer();
            let k: i64 = num_traits::ToPrimitive::to_i64(&k).ok_or_else(|| invalid("exponent too large"))?;
            return Ok(Field::Exact(w.values.iter().zip(m.values()).map(|(v, mu)| pow_i(v, k) * mu).collect()));
        }
        let ei = Interval::from_rational(e);
        let mut out = Vec::with_capacity(w.len());
        for (v, mu) in w.values.iter().zip(m.values()) {
            let x = Interval::from_rational(v).pow(&ei)? * Interval::from_rational(mu);
            if !x.is_finite() {
                return Err(FlowError::Numeric(format!("w^{e} μ overflows f64")));
            }
            out.push(x);
        }
        Ok(Field::Approx(out))
    }

    pub fn prefix<'t>(&self, t: &'t TruncatedTree) -> FieldSums<'t> {
        match self {
            Field::Exact(v) => FieldSums::Exact(PrefixSums::new(t, v.clone())),
            Field::Approx(v) => FieldSums::Approx(PrefixSums::new(t, v.clone())),
        }
    }
}

pub enum FieldSums<'t> {
    Exact(PrefixSums<'t, Rational>),
    Approx(PrefixSums<'t, Interval>),
}

impl FieldSums<'_> {
    pub fn sum(&self, r: &Trapezoid) -> ConstantValue {
        match self {
            FieldSums::Exact(p) => ConstantValue::Exact(p.sum(r)),
            FieldSums::Approx(p) => ConstantValue::Enclosure(p.sum(r)),
        }
    }
}

/// Exact per-trapezoid sums of `wμ`, `w^{-1}μ`, reused across constants.
pub struct WeightSums<'t> {
    pub w_mu: PrefixSums<'t, Rational>,
    pub winv_mu: PrefixSums<'t, Rational>,
}

impl<'t> WeightSums<'t> {
    pub fn new(t: &'t TruncatedTree, w: &Weight, m: &FlowMeasure) -> Self {
        let w_mu = w.values.iter().zip(m.values()).map(|(a, b)| a * b).collect();
        let winv_mu = w.values.iter().zip(m.values()).map(|(a, b)| b / a).collect();
        WeightSums { w_mu: PrefixSums::new(t, w_mu), winv_mu: PrefixSums::new(t, winv_mu) }
    }

    /// `w` is constant on `R` iff Cauchy–Schwarz is an equality:
    /// `w_μ(R) · (w^{-1})_μ(R) = μ(R)^2`.
    pub fn is_constant_on(&self, r: &Trapezoid, mu_r: &Rational) -> bool {
        r.is_singleton() || self.w_mu.sum(r) * self.winv_mu.sum(r) == mu_r * mu_r
    }
}

pub fn mu_of(m: &FlowMeasure, r: &Trapezoid) -> Rational {
    crate::numeric::int(r.height() as i64) * m.value(r.root)
}

/// Running supremum with a deterministic argmax.
#[derive(Clone, Debug)]
pub struct Sup {
    best: Option<(ConstantValue, Trapezoid)>,
    lo: f64,
    hi: f64,
    all_exact: bool,
}

impl Default for Sup {
    fn default() -> Self {
        Sup { best: None, lo: f64::NEG_INFINITY, hi: f64::NEG_INFINITY, all_exact: true }
    }
}

impl Sup {
    pub fn push(&mut self, v: ConstantValue, r: Trapezoid) {
        let iv = v.interval();
        self.lo = self.lo.max(iv.lo);
        self.hi = self.hi.max(iv.hi);
        self.all_exact &= v.exact().is_some();
        let replace = match &self.best {
            None => true,
            Some((b, br)) => match v.rank_cmp(b) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => r < *br,
                std::cmp::Ordering::Less => false,
            },
        };
        if replace {
            self.best = Some((v, r));
        }
    }

    pub fn merge(mut self, other: Sup) -> Sup {
        self.lo = self.lo.max(other.lo);
        self.hi = self.hi.max(other.hi);
        self.all_exact &= other.all_exact;
        if let Some((v, r)) = other.best {
            let keep_exact = self.all_exact;
            self.push(v, r);
            self.all_exact = keep_exact;
        }
        self
    }

    /// The supremum (exact when every term was exact) and its argmax.
    pub fn finish(self) -> Option<(ConstantValue, Trapezoid)> {
        let (v, r) = self.best?;
        if self.all_exact {
            Some((v, r))
        } else {
            Some((ConstantValue::Enclosure(Interval { lo: self.lo, hi: self.hi }), r))
        }
    }
}

/// Parallel supremum of `f` over the window family, partitioned by root.
pub fn sup_over<F>(t: &TruncatedTree, window: &Window, f: F) -> Result<Option<(ConstantValue, Trapezoid)>>
where
    F: Fn(&Trapezoid) -> Result<ConstantValue> + Sync,
{
    let sup = (0..t.len() as u32)
        .into_par_iter()
        .map(|i| {
            let mut s = Sup::default();
            for r in window.at_root(t, VertexId(i)) {
                s.push(f(&r)?, r);
            }
            Ok::<Sup, FlowError>(s)
        })
        .try_reduce(Sup::default, |a, b| Ok(a.merge(b)))?;
    Ok(sup.finish())
}

/// Description of the enumeration window a constant was computed over.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowDescriptor {
    pub shape: Shape,
    pub vertices: usize,
    pub beta: u32,
    pub envelope_fit: bool,
    pub max_h2: Option<u32>,
    pub family_size: usize,
}

impl WindowDescriptor {
    pub fn new(t: &TruncatedTree, w: &Window) -> Self {
        WindowDescriptor {
            shape: t.shape(),
            vertices: t.len(),
            beta: w.beta.get(),
            envelope_fit: w.envelope_fit,
            max_h2: w.max_h2,
            family_size: w.count(t),
        }
    }
}

/// Numeric path selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Exact wherever the exponents allow it, certified enclosures elsewhere.
    #[default]
    Exact,
    /// Certified floating enclosures throughout.
    Float,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApReport {
    #[serde(with = "crate::numeric::rational_serde")]
    pub p: Rational,
    /// `None` encodes `p′ = ∞` (the case `p = 1`).
    pub p_conj: Option<String>,
    pub constant: ConstantValue,
    pub argmax_trapezoid: Trapezoid,
    pub window: WindowDescriptor,
}

pub(crate) fn conjugate(p: &Rational) -> Option<Rational> {
    if p.is_one() {
        None
    } else {
        Some(p / (p - Rational::one()))
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{int, ratio};
    use std::sync::Arc;

    #[test]
    fn level_weight_values() {
        let w = LevelWeight::periodic(vec![int(2), int(1)]).unwrap();
        assert_eq!(w.at(0), int(2));
        assert_eq!(w.at(-1), int(1));
        assert_eq!(w.at(3), int(1));
        let e = LevelWeight::power(int(2)).unwrap();
        assert_eq!(e.at(-2), ratio(1, 4));
        assert!(LevelWeight::periodic(vec![]).is_err());
    }

    #[test]
    fn weighted_measure_basics() {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, 3, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let one = Weight::constant(&t, int(1)).unwrap();
        let all: Vec<_> = t.ids().collect();
        assert_eq!(one.weighted_measure(&m, &all), m.set_measure(&all));
        let w = Weight::from_level(&t, &LevelWeight::periodic(vec![int(2), int(1)]).unwrap());
        let x = t.top();
        assert_eq!(w.weighted_measure(&m, &[x]), w.value(x) * m.value(x));
        assert!(Weight::from_values(vec![int(1), int(0)]).is_err());
    }

    #[test]
    fn sup_prefers_first_on_ties() {
        let a = Trapezoid::singleton(VertexId(3));
        let b = Trapezoid::singleton(VertexId(1));
        let mut s = Sup::default();
        s.push(ConstantValue::one(), a);
        s.push(ConstantValue::one(), b);
        assert_eq!(s.finish().unwrap().1, b);
    }
}
