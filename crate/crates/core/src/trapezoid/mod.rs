//! Trapezoids `R_{h1}^{h2}(x) = {y <= x : h1 <= d(x,y) < h2}`, admissibility,
//! envelopes and enumeration of the family ℛ.
//!
//! A singleton `{x}` is stored as `R_0^1(x)`, which is the same set.

mod cover;
mod vitali;

pub use cover::{CoverCase, EnvelopeCover, OverlapCertificate};
pub use vitali::{vitali_select, VitaliOutcome};

use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{int, Rational};
use crate::tree::{TruncatedTree, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trapezoid {
    pub root: VertexId,
    pub h1: u32,
    pub h2: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Beta(u32);

impl Beta {
    pub const MIN: u32 = 12;

    pub fn new(beta: u32) -> Result<Self> {
        if beta < Self::MIN {
            return Err(invalid(format!("beta must be >= {}, got {beta}", Self::MIN)));
        }
        Ok(Beta(beta))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl Default for Beta {
    fn default() -> Self {
        Beta(Self::MIN)
    }
}

impl fmt::Display for Trapezoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_singleton() {
            write!(f, "{{{}}}", self.root)
        } else {
            write!(f, "R_{}^{}({})", self.h1, self.h2, self.root)
        }
    }
}

impl Trapezoid {
    pub fn new(root: VertexId, h1: u32, h2: u32) -> Result<Self> {
        if h1 >= h2 {
            return Err(invalid(format!("trapezoid heights need h1 < h2, got {h1}, {h2}")));
        }
        Ok(Trapezoid { root, h1, h2 })
    }

    pub fn singleton(root: VertexId) -> Self {
        Trapezoid { root, h1: 0, h2: 1 }
    }

    pub fn is_singleton(&self) -> bool {
        self.h1 == 0 && self.h2 == 1
    }

    /// Member of ℛ: a singleton, or `2 h1 <= h2 <= β h1`.
    pub fn is_admissible(&self, beta: Beta) -> bool {
        self.is_singleton() || (self.h1 >= 1 && 2 * self.h1 <= self.h2 && self.h2 <= beta.get() * self.h1)
    }

    /// `R_{⌈h1/β⌉}^{h2 β}(x)`; a singleton is its own envelope.
    pub fn envelope(&self, beta: Beta) -> Trapezoid {
        if self.is_singleton() {
            return *self;
        }
        let b = beta.get();
        Trapezoid { root: self.root, h1: self.h1.div_ceil(b), h2: self.h2 * b }
    }

    /// Number of levels covered; `μ(R) = height · μ(root)`.
    pub fn height(&self) -> u32 {
        self.h2 - self.h1
    }

    pub fn fits(&self, t: &TruncatedTree) -> bool {
        t.contains(self.root) && self.h2 <= t.fit_height(self.root)
    }

    pub fn ensure_fits(&self, t: &TruncatedTree) -> Result<()> {
        if self.fits(t) {
            Ok(())
        } else {
            Err(FlowError::WindowTooSmall(format!("{self} does not fit the truncation")))
        }
    }

    pub fn members(&self, t: &TruncatedTree) -> Result<Vec<VertexId>> {
        self.ensure_fits(t)?;
        let mut out = Vec::new();
        let mut cur = vec![self.root];
        for depth in 0..self.h2 {
            if depth >= self.h1 {
                out.extend_from_slice(&cur);
            }
            if depth + 1 < self.h2 {
                let mut next = Vec::with_capacity(cur.len() * 2);
                for v in &cur {
                    next.extend_from_slice(t.succ(*v));
                }
                cur = next;
            }
        }
        Ok(out)
    }

    /// `(h2 − h1) μ(root)`, which is also `μ({root})` for singletons.
    pub fn measure(&self, m: &FlowMeasure) -> Result<Rational> {
        self.ensure_fits(m.tree())?;
        Ok(int(self.height() as i64) * m.value(self.root))
    }

    pub fn contains_vertex(&self, t: &TruncatedTree, y: VertexId) -> bool {
        let dl = t.level(self.root) - t.level(y);
        if dl < self.h1 as i64 || dl >= self.h2 as i64 {
            return false;
        }
        t.ancestor(y, dl as u32) == Some(self.root)
    }
}

/// The set `{y <= base : lo <= d(base, y) < hi}`; its measure is `(hi − lo) μ(base)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Band {
    pub base: VertexId,
    pub lo: u32,
    pub hi: u32,
}

impl Band {
    pub fn height(&self) -> u32 {
        self.hi - self.lo
    }
}

// Some((lower, upper, k)) when the roots are comparable, `k = d(lower, upper)`.
fn order_roots(t: &TruncatedTree, a: VertexId, b: VertexId) -> Option<(bool, u32)> {
    let (la, lb) = (t.level(a), t.level(b));
    if la <= lb {
        let k = (lb - la) as u32;
        (t.ancestor(a, k) == Some(b)).then_some((true, k))
    } else {
        let k = (la - lb) as u32;
        (t.ancestor(b, k) == Some(a)).then_some((false, k))
    }
}

// Whether the k steps from `upper` down towards `lower` pass only through
// vertices with a single successor, so that the whole cone of `upper` below
// depth k is the cone of `lower`.
fn single_chain(t: &TruncatedTree, lower: VertexId, k: u32) -> bool {
    let mut v = lower;
    for _ in 0..k {
        let p = match t.pred(v) {
            Some(p) => p,
            None => return false,
        };
        if t.succ(p).len() != 1 {
            return false;
        }
        v = p;
    }
    true
}

/// Exact intersection of two trapezoids as a band, or `None` when disjoint.
/// Assumes both fit the truncation, so every depth of a cone is populated.
pub fn intersection(t: &TruncatedTree, r1: &Trapezoid, r2: &Trapezoid) -> Option<Band> {
    let (r1_lower, k) = order_roots(t, r1.root, r2.root)?;
    let (lower, upper) = if r1_lower { (r1, r2) } else { (r2, r1) };
    // depths measured from the lower root
    let lo = lower.h1.max(upper.h1.saturating_sub(k));
    let hi = lower.h2.min(upper.h2.saturating_sub(k));
    (lo < hi).then_some(Band { base: lower.root, lo, hi })
}

pub fn intersects(t: &TruncatedTree, r1: &Trapezoid, r2: &Trapezoid) -> bool {
    intersection(t, r1, r2).is_some()
}

/// Exact `inner ⊆ outer`.
pub fn is_subset(t: &TruncatedTree, inner: &Trapezoid, outer: &Trapezoid) -> bool {
    let Some((inner_lower, k)) = order_roots(t, inner.root, outer.root) else {
        return false;
    };
    if inner_lower {
        outer.h1 <= inner.h1 + k && inner.h2 + k <= outer.h2
    } else {
        // inner's root lies strictly above outer's
        inner.h1 >= k && single_chain(t, outer.root, k) && outer.h1 + k <= inner.h1 && inner.h2 <= outer.h2 + k
    }
}

/// Result of checking the intersection lemma on one ordered pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LemmaPair {
    pub r1: Trapezoid,
    pub r2: Trapezoid,
    pub holds: bool,
}

/// For intersecting `R1, R2 ∈ ℛ` with `μ(x1) >= μ(x2)`, whether `R2 ⊆ R̃1`.
pub fn check_lemma_intersection(
    beta: Beta,
    r1: &Trapezoid,
    r2: &Trapezoid,
    m: &FlowMeasure,
) -> Result<bool> {
    let t = m.tree();
    if !r1.is_admissible(beta) || !r2.is_admissible(beta) {
        return Err(FlowError::Inapplicable(format!("{r1} or {r2} is not admissible")));
    }
    if !intersects(t, r1, r2) {
        return Err(FlowError::Inapplicable(format!("{r1} and {r2} are disjoint")));
    }
    if m.value(r1.root) < m.value(r2.root) {
        return Err(FlowError::Inapplicable(format!("root mass of {r1} is below that of {r2}")));
    }
    Ok(is_subset(t, r2, &r1.envelope(beta)))
}

/// Enumeration window over the family ℛ of a truncation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub beta: Beta,
    /// Keep only trapezoids whose envelope also fits.
    pub envelope_fit: bool,
    /// Optional cap on `h2`.
    pub max_h2: Option<u32>,
}

impl Window {
    pub fn full(beta: Beta) -> Self {
        Window { beta, envelope_fit: false, max_h2: None }
    }

    pub fn with_envelopes(beta: Beta) -> Self {
        Window { beta, envelope_fit: true, max_h2: None }
    }

    // Largest h2 allowed at a root with fit height `fit`.
    fn h2_limit(&self, fit: u32) -> u32 {
        let mut lim = if self.envelope_fit { fit / self.beta.get() } else { fit };
        if let Some(c) = self.max_h2 {
            lim = lim.min(c);
        }
        lim
    }

    /// Admissible trapezoids rooted at `x`, singleton first, then by `(h1, h2)`.
    pub fn at_root(&self, t: &TruncatedTree, x: VertexId) -> RootIter {
        let lim = self.h2_limit(t.fit_height(x));
        RootIter { root: x, beta: self.beta.get(), limit: lim, h1: 0, h2: 1, singleton_done: false }
    }

    pub fn enumerate<'a>(&'a self, t: &'a TruncatedTree) -> impl Iterator<Item = Trapezoid> + 'a {
        t.ids().flat_map(move |x| self.at_root(t, x))
    }

    pub fn count(&self, t: &TruncatedTree) -> usize {
        t.ids().map(|x| self.at_root(t, x).count()).sum()
    }

    pub fn admits(&self, t: &TruncatedTree, r: &Trapezoid) -> bool {
        r.is_admissible(self.beta)
            && t.contains(r.root)
            && (r.is_singleton() || r.h2 <= self.h2_limit(t.fit_height(r.root)))
    }

    /// Members of the window containing `y`, sorted by `(root, h1, h2)`.
    pub fn containing(&self, t: &TruncatedTree, y: VertexId) -> Vec<Trapezoid> {
        let mut out = vec![Trapezoid::singleton(y)];
        let mut a = y;
        let mut k = 0u32;
        while let Some(p) = t.pred(a) {
            a = p;
            k += 1;
            let lim = self.h2_limit(t.fit_height(a));
            let b = self.beta.get();
            for h1 in 1..=k {
                let lo = (2 * h1).max(k + 1);
                let hi = (b * h1).min(lim);
                for h2 in lo..=hi {
                    out.push(Trapezoid { root: a, h1, h2 });
                }
            }
        }
        out.sort();
        out
    }
}

pub struct RootIter {
    root: VertexId,
    beta: u32,
    limit: u32,
    h1: u32,
    h2: u32,
    singleton_done: bool,
}

impl Iterator for RootIter {
    type Item = Trapezoid;

    fn next(&mut self) -> Option<Trapezoid> {
        if !self.singleton_done {
            self.singleton_done = true;
            self.h1 = 1;
            self.h2 = 1;
            return Some(Trapezoid::singleton(self.root));
        }
        loop {
            if 2 * self.h1 > self.limit {
                return None;
            }
            let lo = 2 * self.h1;
            let hi = (self.beta * self.h1).min(self.limit);
            if self.h2 < lo {
                self.h2 = lo;
            } else {
                self.h2 += 1;
            }
            if self.h2 <= hi {
                return Some(Trapezoid { root: self.root, h1: self.h1, h2: self.h2 });
            }
            self.h1 += 1;
            self.h2 = 0;
        }
    }
}

/// All singletons and admissible trapezoids inside the truncation, optionally
/// restricted to those whose envelope fits too.
pub fn enumerate_admissible(t: &TruncatedTree, beta: Beta, envelopes_in_window: bool) -> Vec<Trapezoid> {
    let w = Window { beta, envelope_fit: envelopes_in_window, max_h2: None };
    w.enumerate(t).collect()
}

pub fn containing_trapezoids(t: &TruncatedTree, beta: Beta, y: VertexId) -> Vec<Trapezoid> {
    Window::full(beta).containing(t, y)
}

/// Sum of `μ` over a band.
pub fn band_measure(m: &FlowMeasure, b: &Band) -> Rational {
    if b.lo >= b.hi {
        return Rational::zero();
    }
    int(b.height() as i64) * m.value(b.base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::SuccCounts;
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn b12() -> Beta {
        Beta::default()
    }

    #[test]
    fn members_and_measure() {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, 6, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let x = t.top();
        let r12 = Trapezoid::new(x, 1, 2).unwrap();
        assert_eq!(r12.members(&t).unwrap(), t.succ(x).to_vec());
        assert_eq!(Trapezoid::singleton(x).members(&t).unwrap(), vec![x]);
        let r24 = Trapezoid::new(x, 2, 4).unwrap();
        assert_eq!(r24.members(&t).unwrap().len(), 12);
        let x5 = t.descendants_at(x, 1)[0];
        assert_eq!(r24.measure(&m).unwrap(), int(2 * 64));
        let r = Trapezoid::new(x5, 2, 4).unwrap();
        assert_eq!(r.measure(&m).unwrap(), int(64));
        assert_eq!(r.measure(&m).unwrap(), m.set_measure(&r.members(&t).unwrap()));
        assert!(Trapezoid::new(x, 2, 8).unwrap().members(&t).is_err());
    }

    #[test]
    fn measure_display_value() {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, 6, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let x = t.descendants_at(t.top(), 1)[0];
        assert_eq!(*m.value(x), int(32));
        assert_eq!(Trapezoid::new(x, 3, 6).unwrap().measure(&m).unwrap(), int(96));
    }

    #[test]
    fn envelopes() {
        let x = VertexId(0);
        let r = Trapezoid::new(x, 3, 6).unwrap();
        assert_eq!(r.envelope(b12()), Trapezoid { root: x, h1: 1, h2: 72 });
        assert_eq!(Trapezoid::singleton(x).envelope(b12()), Trapezoid::singleton(x));
        let r = Trapezoid::new(x, 12, 24).unwrap();
        assert_eq!(r.envelope(b12()), Trapezoid { root: x, h1: 1, h2: 288 });
        assert!(!r.envelope(b12()).is_admissible(b12()));
    }

    #[test]
    fn admissibility_bounds() {
        let x = VertexId(0);
        assert!(Trapezoid::new(x, 2, 4).unwrap().is_admissible(b12()));
        assert!(!Trapezoid::new(x, 2, 3).unwrap().is_admissible(b12()));
        assert!(Trapezoid::new(x, 2, 24).unwrap().is_admissible(b12()));
        assert!(!Trapezoid::new(x, 2, 25).unwrap().is_admissible(b12()));
        assert!(!Trapezoid::new(x, 0, 2).unwrap().is_admissible(b12()));
        assert!(Beta::new(11).is_err());
    }

    #[test]
    fn path_enumeration() {
        let t = TruncatedTree::general_slab(&SuccCounts::PerLevel(vec![1; 3]), 3, 0).unwrap();
        let fam = enumerate_admissible(&t, b12(), false);
        let non_single: Vec<_> = fam.iter().filter(|r| !r.is_singleton()).map(|r| (r.root.0, r.h1, r.h2)).collect();
        assert_eq!(non_single, vec![(0, 1, 2), (0, 1, 3), (0, 1, 4), (0, 2, 4), (1, 1, 2), (1, 1, 3), (2, 1, 2)]);
        assert_eq!(fam.iter().filter(|r| r.is_singleton()).count(), 4);
        let one = TruncatedTree::homogeneous_slab(2, 1, 0).unwrap();
        let fam = enumerate_admissible(&one, b12(), false);
        assert_eq!(fam.len(), 3 + 1);
        assert!(fam.contains(&Trapezoid { root: one.top(), h1: 1, h2: 2 }));
    }

    #[test]
    fn containing_matches_filter() {
        let t = TruncatedTree::homogeneous_slab(2, 7, 0).unwrap();
        let w = Window::full(b12());
        let fam: Vec<_> = w.enumerate(&t).collect();
        for y in t.ids().step_by(7) {
            let want: Vec<_> = fam.iter().copied().filter(|r| r.contains_vertex(&t, y)).collect();
            assert_eq!(w.containing(&t, y), want);
        }
        assert_eq!(w.containing(&t, t.top()), vec![Trapezoid::singleton(t.top())]);
    }

    fn member_set(t: &TruncatedTree, r: &Trapezoid) -> BTreeSet<VertexId> {
        r.members(t).unwrap().into_iter().collect()
    }

    #[test]
    fn band_arithmetic_matches_member_sets() {
        for t in [
            TruncatedTree::homogeneous_slab(2, 5, 0).unwrap(),
            TruncatedTree::general_slab(&SuccCounts::PerLevel(vec![1, 2, 1, 1, 2]), 5, 0).unwrap(),
        ] {
            let fam: Vec<_> = Window::full(b12()).enumerate(&t).collect();
            let m = FlowMeasure::from_bottom(Arc::new(t.clone()), &vec![int(1); t.bottom_vertices().len()]).unwrap();
            for a in &fam {
                let sa = member_set(&t, a);
                for b in &fam {
                    let sb = member_set(&t, b);
                    let inter: Vec<_> = sa.intersection(&sb).copied().collect();
                    match intersection(&t, a, b) {
                        None => assert!(inter.is_empty(), "{a} {b}"),
                        Some(band) => assert_eq!(band_measure(&m, &band), m.set_measure(&inter), "{a} {b}"),
                    }
                    assert_eq!(is_subset(&t, a, b), sa.is_subset(&sb), "{a} {b}");
                }
            }
        }
    }
}
