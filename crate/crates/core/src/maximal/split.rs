//! Splitting a trapezoid into a few admissible pieces of comparable measure.
//!
//! For `R = R_{h1}^{h2}(x)`:
//! - `h1 = 1, h2 = 2`: the successors `{y}`, `y ∈ s(x)`;
//! - `h1 = 1, h2 >= 3`: for each successor, `{y}` and `R_1^{h2−1}(y)`;
//! - `h1 >= 2, h2 <= β(h1−1)+1`: `R_{h1−1}^{h2−1}(y)` for each successor;
//! - otherwise: `R_{h1}^{2h1}(x)` and `R_{2h1}^{h2}(x)`.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::Rational;
use crate::trapezoid::{Beta, Trapezoid, Window};
use crate::tree::TruncatedTree;
use crate::weights::{mu_of, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitCase {
    Successors,
    ChildAndTail,
    PushDown,
    HeightSplit,
}

#[derive(Clone, Debug, Serialize)]
pub struct Split {
    pub parent: Trapezoid,
    pub case: SplitCase,
    pub pieces: Vec<Trapezoid>,
    /// `min μ(piece)/μ(parent)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub min_ratio: Rational,
}

pub fn split_trapezoid(m: &FlowMeasure, beta: Beta, r: &Trapezoid) -> Result<Split> {
    let t = m.tree();
    if r.is_singleton() {
        return Err(invalid(format!("{r} is an atom")));
    }
    if !r.is_admissible(beta) {
        return Err(invalid(format!("{r} is not admissible")));
    }
    r.ensure_fits(t)?;
    let (x, h1, h2, b) = (r.root, r.h1, r.h2, beta.get());
    let succ = t.succ(x);
    let (case, pieces) = if h1 == 1 && h2 == 2 {
        (SplitCase::Successors, succ.iter().map(|y| Trapezoid::singleton(*y)).collect())
    } else if h1 == 1 {
        let mut v = Vec::with_capacity(2 * succ.len());
        for y in succ {
            v.push(Trapezoid::singleton(*y));
            v.push(Trapezoid { root: *y, h1: 1, h2: h2 - 1 });
        }
        (SplitCase::ChildAndTail, v)
    } else if h2 <= b * (h1 - 1) + 1 {
        (SplitCase::PushDown, succ.iter().map(|y| Trapezoid { root: *y, h1: h1 - 1, h2: h2 - 1 }).collect())
    } else {
        (SplitCase::HeightSplit, vec![Trapezoid { root: x, h1, h2: 2 * h1 }, Trapezoid { root: x, h1: 2 * h1, h2 }])
    };
    for p in &pieces {
        if !p.is_admissible(beta) {
            return Err(FlowError::Inapplicable(format!("split piece {p} of {r} is not admissible")));
        }
        p.ensure_fits(t)?;
    }
    let mu_r = mu_of(m, r);
    let min_ratio = pieces.iter().map(|p| mu_of(m, p) / &mu_r).min().expect("nonempty split");
    Ok(Split { parent: *r, case, pieces, min_ratio })
}

impl Split {
    /// Pieces are disjoint and their union is the parent: the concatenated
    /// member lists are a permutation of the parent's.
    pub fn is_partition(&self, t: &TruncatedTree) -> Result<bool> {
        let mut parent = self.parent.members(t)?;
        let mut union = Vec::with_capacity(parent.len());
        for p in &self.pieces {
            union.extend(p.members(t)?);
        }
        parent.sort();
        union.sort();
        Ok(parent == union)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitRule {
    /// Certified floor of `μ(piece)/μ(parent)` over the window.
    #[serde(with = "crate::numeric::rational_serde")]
    pub c_d: Rational,
    /// `D_CZ = 1/C_D`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub d_cz: Rational,
    /// Largest number of pieces.
    pub n: usize,
    pub witness: Trapezoid,
    pub splits_checked: usize,
    pub all_partitions: bool,
}

/// Splits every non-singleton trapezoid of the window and records the worst ratio.
pub fn certify_split_rule(m: &FlowMeasure, window: &Window) -> Result<SplitRule> {
    let t = m.tree();
    let mut c_d = Rational::one();
    let mut witness = None;
    let mut n = 0;
    let mut count = 0;
    let mut all_partitions = true;
    for r in window.enumerate(t) {
        if r.is_singleton() {
            continue;
        }
        let s = split_trapezoid(m, window.beta, &r)?;
        count += 1;
        n = n.max(s.pieces.len());
        all_partitions &= s.is_partition(t)?;
        if s.min_ratio < c_d || witness.is_none() {
            c_d = s.min_ratio.clone();
            witness = Some(r);
        }
    }
    let witness = witness.ok_or(FlowError::EmptyWindow)?;
    if c_d.is_zero() {
        return Err(FlowError::Numeric("zero split ratio".into()));
    }
    Ok(SplitRule { d_cz: c_d.recip(), c_d, n, witness, splits_checked: count, all_partitions })
}

/// `min w_μ(piece)/w_μ(parent)` over all splits in the window.
pub fn weighted_split_floor(m: &FlowMeasure, w: &Weight, window: &Window) -> Result<(Rational, Trapezoid)> {
    let t = m.tree();
    let mut best: Option<(Rational, Trapezoid)> = None;
    for r in window.enumerate(t) {
        if r.is_singleton() {
            continue;
        }
        let s = split_trapezoid(m, window.beta, &r)?;
        let wr = w.weighted_measure(m, &r.members(t)?);
        for p in &s.pieces {
            let v = w.weighted_measure(m, &p.members(t)?) / &wr;
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, r));
            }
        }
    }
    best.ok_or(FlowError::EmptyWindow)
}
