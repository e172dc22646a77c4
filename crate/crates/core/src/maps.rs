//! Bijections of trees, their Jacobians, and metric diagnostics.

use std::collections::VecDeque;
use std::sync::Arc;

use num_traits::One;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{int, pow_i, Rational};
use crate::trapezoid::Trapezoid;
use crate::tree::{TruncatedTree, VertexId};
use crate::weights::Weight;

/// A bijection of the vertex set of a truncation.
#[derive(Clone, Debug)]
pub struct TreeBijection {
    tree: Arc<TruncatedTree>,
    forward: Vec<VertexId>,
    inverse: Vec<VertexId>,
}

impl TreeBijection {
    pub fn from_forward(tree: Arc<TruncatedTree>, forward: Vec<VertexId>) -> Result<Self> {
        if forward.len() != tree.len() {
            return Err(invalid(format!("map has {} entries, tree has {} vertices", forward.len(), tree.len())));
        }
        let mut inverse = vec![VertexId(u32::MAX); tree.len()];
        for (i, y) in forward.iter().enumerate() {
            tree.check(*y)?;
            if inverse[y.idx()].0 != u32::MAX {
                return Err(invalid(format!("vertex {y} has two preimages")));
            }
            inverse[y.idx()] = VertexId(i as u32);
        }
        Ok(TreeBijection { tree, forward, inverse })
    }

    pub fn identity(tree: Arc<TruncatedTree>) -> Self {
        let forward: Vec<VertexId> = tree.ids().collect();
        TreeBijection { inverse: forward.clone(), forward, tree }
    }

    pub fn tree(&self) -> &Arc<TruncatedTree> {
        &self.tree
    }

    pub fn apply(&self, x: VertexId) -> VertexId {
        self.forward[x.idx()]
    }

    pub fn invert(&self, y: VertexId) -> VertexId {
        self.inverse[y.idx()]
    }

    pub fn forward(&self) -> &[VertexId] {
        &self.forward
    }

    pub fn is_consistent(&self) -> bool {
        self.tree.ids().all(|x| self.invert(self.apply(x)) == x && self.apply(self.invert(x)) == x)
    }
}

// Neighbours of `v` other than `toward`, in canonical order.
fn away(t: &TruncatedTree, v: VertexId, toward: Option<VertexId>) -> Vec<VertexId> {
    t.neighbours(v).filter(|u| Some(*u) != toward).collect()
}

/// The isometry of `B(o, radius)` in `T_q` fixing `o` and sending `x_n` to `x_{−n}`.
pub fn reflection_isometry(q: u32, radius: u32) -> Result<TreeBijection> {
    if radius < 1 {
        return Err(invalid("reflection needs radius >= 1"));
    }
    let t = Arc::new(TruncatedTree::ball(q, radius)?);
    let o = t.top();
    let (x1, xm1) = (t.frame(1).expect("frame"), t.frame(-1).expect("frame"));
    let n = t.len();
    let mut forward = vec![VertexId(u32::MAX); n];
    // parent toward o in the ball, for both the source and the image
    let mut toward: Vec<Option<VertexId>> = vec![None; n];
    forward[o.idx()] = o;
    let mut queue = VecDeque::new();
    for u in t.neighbours(o) {
        let img = if u == x1 {
            xm1
        } else if u == xm1 {
            x1
        } else {
            u
        };
        forward[u.idx()] = img;
        toward[u.idx()] = Some(o);
        toward[img.idx()] = Some(o);
        queue.push_back(u);
    }
    while let Some(v) = queue.pop_front() {
        let fv = forward[v.idx()];
        let src = away(&t, v, toward[v.idx()]);
        let dst = away(&t, fv, toward[fv.idx()]);
        if src.len() != dst.len() {
            return Err(FlowError::Inapplicable(format!("degree mismatch between {v} and {fv}")));
        }
        for (a, b) in src.into_iter().zip(dst) {
            forward[a.idx()] = b;
            toward[a.idx()] = Some(v);
            toward[b.idx()] = Some(fv);
            queue.push_back(a);
        }
    }
    TreeBijection::from_forward(t, forward)
}

/// `J_f(x) = μ(f(x))/μ(x)`.
pub fn jacobian(f: &TreeBijection, m: &FlowMeasure) -> Result<Weight> {
    let t = m.tree();
    if !Arc::ptr_eq(t, f.tree()) && t.len() != f.tree().len() {
        return Err(invalid("map and measure live on different trees"));
    }
    Weight::from_values(t.ids().map(|x| m.value(f.apply(x)) / m.value(x)).collect())
}

/// `μ(f(E))`.
pub fn image_measure(f: &TreeBijection, m: &FlowMeasure, set: &[VertexId]) -> Rational {
    let img: Vec<VertexId> = set.iter().map(|x| f.apply(*x)).collect();
    m.set_measure(&img)
}

#[derive(Clone, Debug, Serialize)]
pub struct IsometryCheck {
    pub pairs: usize,
    pub max_defect: u32,
    pub witness: Option<(VertexId, VertexId)>,
    pub is_isometry: bool,
}

/// Exhaustive `d(f(u), f(v)) = d(u, v)` check.
pub fn d_isometry_check(f: &TreeBijection) -> Result<IsometryCheck> {
    let t = f.tree();
    let n = t.len() as u32;
    let rows: Vec<(u32, Option<(VertexId, VertexId)>)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(u32, Option<(VertexId, VertexId)>)> {
            let u = VertexId(i);
            let mut worst = (0u32, None);
            for j in i + 1..n {
                let v = VertexId(j);
                let d = t.geodesic_distance(u, v)?;
                let fd = t.geodesic_distance(f.apply(u), f.apply(v))?;
                let defect = d.abs_diff(fd);
                if defect > worst.0 {
                    worst = (defect, Some((u, v)));
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let (max_defect, witness) = rows.into_iter().fold((0, None), |a, b| if b.0 > a.0 { b } else { a });
    let pairs = (n as usize) * (n as usize).saturating_sub(1) / 2;
    Ok(IsometryCheck { pairs, max_defect, witness, is_isometry: max_defect == 0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleRow {
    pub q: u32,
    pub n: u32,
    pub r_n: Trapezoid,
    /// `μ(E_n)/μ(R_n)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub xi: Rational,
    #[serde(with = "crate::numeric::rational_serde")]
    pub mu_image_e: Rational,
    /// `q^{2n−1}`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub mu_image_e_lower: Rational,
    #[serde(with = "crate::numeric::rational_serde")]
    pub mu_image_rest: Rational,
    /// `3n q^{n−1}`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub mu_image_rest_upper: Rational,
    /// `μ(f(E_n))/μ(f(R_n)) = (J_f)_μ(E_n)/(J_f)_μ(R_n)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub image_ratio: Rational,
    /// `1/(1 + 3n q^{−n})`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub image_ratio_lower: Rational,
    /// Image ratio recomputed as a Jacobian-weighted measure ratio.
    #[serde(with = "crate::numeric::rational_serde")]
    pub jacobian_ratio: Rational,
    pub consistent: bool,
}

/// `R_n = R_n^{2n}(o)`, `E_n = {x <= x_{−n}} ∩ R_n` on `B(o, 2n−1)` under the reflection.
pub fn counterexample_ratios(q: u32, n: u32) -> Result<CounterexampleRow> {
    if n < 1 {
        return Err(invalid("n must be at least 1"));
    }
    let f = reflection_isometry(q, (2 * n - 1).max(1))?;
    let t = f.tree().clone();
    let m = FlowMeasure::canonical(t.clone())?;
    let o = t.top();
    let r_n = Trapezoid { root: o, h1: n, h2: 2 * n };
    let members = r_n.members(&t)?;
    let xmn = t.frame(-(n as i64)).ok_or_else(|| FlowError::WindowTooSmall(format!("x_-{n} outside the ball")))?;
    let (e, rest): (Vec<VertexId>, Vec<VertexId>) = members.iter().partition(|y| t.is_below(**y, xmn));
    let xi = m.set_measure(&e) / m.set_measure(&members);
    let mu_image_e = image_measure(&f, &m, &e);
    let mu_image_rest = image_measure(&f, &m, &rest);
    let image_ratio = &mu_image_e / (&mu_image_e + &mu_image_rest);
    let qq = int(q as i64);
    let mu_image_e_lower = pow_i(&qq, 2 * n as i64 - 1);
    let mu_image_rest_upper = int(3 * n as i64) * pow_i(&qq, n as i64 - 1);
    let image_ratio_lower = Rational::one() / (Rational::one() + int(3 * n as i64) * pow_i(&qq, -(n as i64)));
    let j = jacobian(&f, &m)?;
    let jacobian_ratio = j.weighted_measure(&m, &e) / j.weighted_measure(&m, &members);
    let consistent = xi == pow_i(&qq, -(n as i64))
        && mu_image_e >= mu_image_e_lower
        && mu_image_rest <= mu_image_rest_upper
        && image_ratio >= image_ratio_lower
        && jacobian_ratio == image_ratio;
    Ok(CounterexampleRow {
        q,
        n,
        r_n,
        xi,
        mu_image_e,
        mu_image_e_lower,
        mu_image_rest,
        mu_image_rest_upper,
        image_ratio,
        image_ratio_lower,
        jacobian_ratio,
        consistent,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AinftyFailure {
    pub rows: Vec<CounterexampleRow>,
    /// `ξ_n` strictly decreasing and image ratios strictly increasing.
    pub monotone: bool,
    pub all_consistent: bool,
}

/// The table of counterexample rows for `n` in the range.
pub fn ainfty_failure_certificate(q: u32, ns: std::ops::RangeInclusive<u32>) -> Result<AinftyFailure> {
    let rows: Vec<CounterexampleRow> = ns.map(|n| counterexample_ratios(q, n)).collect::<Result<_>>()?;
    let monotone = rows.windows(2).all(|p| p[1].xi < p[0].xi && p[1].image_ratio > p[0].image_ratio);
    let all_consistent = rows.iter().all(|r| r.consistent);
    Ok(AinftyFailure { rows, monotone, all_consistent })
}

/// Level-preserving automorphism of a homogeneous slab permuting successors at random.
pub fn random_automorphism(tree: Arc<TruncatedTree>, seed: u64) -> Result<TreeBijection> {
    if !tree.is_slab() {
        return Err(invalid("automorphisms are generated on slabs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forward = vec![VertexId(u32::MAX); tree.len()];
    forward[tree.top().idx()] = tree.top();
    let mut stack = vec![tree.top()];
    while let Some(x) = stack.pop() {
        let fx = forward[x.idx()];
        let src = tree.succ(x);
        let mut dst = tree.succ(fx).to_vec();
        if src.len() != dst.len() {
            return Err(FlowError::Inapplicable(format!("{x} and {fx} have different successor counts")));
        }
        dst.shuffle(&mut rng);
        for (a, b) in src.iter().zip(dst) {
            forward[a.idx()] = b;
            stack.push(*a);
        }
    }
    TreeBijection::from_forward(tree, forward)
}

/// Swaps each listed vertex with its predecessor (disjoint pairs only).
pub fn parent_swaps(tree: Arc<TruncatedTree>, vertices: &[VertexId]) -> Result<TreeBijection> {
    let mut forward: Vec<VertexId> = tree.ids().collect();
    let mut used = vec![false; tree.len()];
    for &x in vertices {
        let p = tree.pred(x).ok_or_else(|| invalid(format!("{x} has no predecessor")))?;
        if used[x.idx()] || used[p.idx()] {
            return Err(invalid(format!("swap of {x} overlaps another swap")));
        }
        used[x.idx()] = true;
        used[p.idx()] = true;
        forward.swap(x.idx(), p.idx());
    }
    TreeBijection::from_forward(tree, forward)
}

#[derive(Clone, Debug, Serialize)]
pub struct GromovCheck {
    pub pairs_checked: usize,
    /// Pairs whose confluent (or that of the images) escapes the truncation.
    pub pairs_excluded: usize,
    pub rho_isometry: bool,
    pub rho_witness: Option<(VertexId, VertexId)>,
    pub level_preserving: bool,
    pub order_preserving: bool,
    /// ρ-isometry ⇔ level- and order-preserving.
    pub consistent: bool,
}

/// ρ-isometry on the truncation against level and order preservation.
pub fn gromov_isometry_check(f: &TreeBijection) -> Result<GromovCheck> {
    let t = f.tree();
    let n = t.len() as u32;
    let level_preserving = t.ids().all(|x| t.level(f.apply(x)) == t.level(x));
    let rows: Vec<(usize, usize, Option<(VertexId, VertexId)>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = VertexId(i);
            let (mut checked, mut excluded, mut witness, mut order) = (0, 0, None, true);
            for j in 0..n {
                let v = VertexId(j);
                if t.is_below(u, v) != t.is_below(f.apply(u), f.apply(v)) {
                    order = false;
                }
                if j <= i {
                    continue;
                }
                match (t.gromov_exponent(u, v), t.gromov_exponent(f.apply(u), f.apply(v))) {
                    (Ok(a), Ok(b)) => {
                        checked += 1;
                        if a != b && witness.is_none() {
                            witness = Some((u, v));
                        }
                    }
                    _ => excluded += 1,
                }
            }
            (checked, excluded, witness, order)
        })
        .collect();
    let pairs_checked = rows.iter().map(|r| r.0).sum();
    let pairs_excluded = rows.iter().map(|r| r.1).sum();
    let rho_witness = rows.iter().find_map(|r| r.2);
    let order_preserving = rows.iter().all(|r| r.3);
    let rho_isometry = rho_witness.is_none();
    let consistent = rho_isometry == (level_preserving && order_preserving);
    Ok(GromovCheck { pairs_checked, pairs_excluded, rho_isometry, rho_witness, level_preserving, order_preserving, consistent })
}

#[derive(Clone, Debug, Serialize)]
pub struct BilipschitzReport {
    /// `max |log ρ(x,y) − log ρ(f x, f y)|` over checked pairs.
    pub c: u32,
    pub max_level_displacement: u32,
    /// `max(J_f, 1/J_f)` against `q^C`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub jacobian_sup: Rational,
    pub jacobian_within: bool,
    /// `max |d(f x, f y) − d(x, y)|`.
    pub quasi_isometry_defect: u32,
    pub pairs_checked: usize,
    pub pairs_excluded: usize,
    /// Level displacement `<= C`, Jacobian `<= q^C`, defect `<= 4C`.
    pub holds: bool,
}

/// Bilipschitz constant of `f` for ρ and the consequences it implies.
///
/// Vertices are restricted to `interior` (all vertices when `None`); pairs
/// whose confluents escape the truncation are excluded and counted.
pub fn bilipschitz_diagnostics(f: &TreeBijection, m: &FlowMeasure, interior: Option<&[VertexId]>) -> Result<BilipschitzReport> {
    let t = f.tree();
    let q = t.q().ok_or_else(|| invalid("bilipschitz diagnostics need a homogeneous tree"))?;
    let verts: Vec<VertexId> = match interior {
        Some(v) => v.to_vec(),
        None => t.ids().collect(),
    };
    let rows: Vec<(u32, u32, usize, usize)> = verts
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            let (mut c, mut dd, mut checked, mut excluded) = (0u32, 0u32, 0usize, 0usize);
            for &v in &verts[i + 1..] {
                let (fu, fv) = (f.apply(u), f.apply(v));
                match (t.confluent(u, v), t.confluent(fu, fv)) {
                    (Ok(a), Ok(b)) => {
                        checked += 1;
                        c = c.max(t.level(a).abs_diff(t.level(b)) as u32);
                        let d = (2 * t.level(a) - t.level(u) - t.level(v)) as u32;
                        let fd = (2 * t.level(b) - t.level(fu) - t.level(fv)) as u32;
                        dd = dd.max(d.abs_diff(fd));
                    }
                    _ => excluded += 1,
                }
            }
            (c, dd, checked, excluded)
        })
        .collect();
    let c = rows.iter().map(|r| r.0).max().unwrap_or(0);
    let defect = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let pairs_checked = rows.iter().map(|r| r.2).sum();
    let pairs_excluded = rows.iter().map(|r| r.3).sum();
    let max_level_displacement = verts.iter().map(|x| t.level(*x).abs_diff(t.level(f.apply(*x))) as u32).max().unwrap_or(0);
    let j = jacobian(f, m)?;
    let jacobian_sup = verts
        .iter()
        .map(|x| {
            let v = j.value(*x);
            if *v >= Rational::one() {
                v.clone()
            } else {
                v.recip()
            }
        })
        .max()
        .unwrap_or_else(Rational::one);
    let jacobian_within = jacobian_sup <= pow_i(&int(q as i64), c as i64);
    let holds = max_level_displacement <= c && jacobian_within && defect <= 4 * c;
    Ok(BilipschitzReport {
        c,
        max_level_displacement,
        jacobian_sup,
        jacobian_within,
        quasi_isometry_defect: defect,
        pairs_checked,
        pairs_excluded,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;

    #[test]
    fn reflection_on_small_balls() {
        let f = reflection_isometry(2, 4).unwrap();
        let t = f.tree().clone();
        assert_eq!(t.len(), 46);
        assert!(f.is_consistent());
        assert_eq!(f.apply(t.top()), t.top());
        for n in -4..=4i64 {
            assert_eq!(f.apply(t.frame(n).unwrap()), t.frame(-n).unwrap());
        }
        assert!(d_isometry_check(&f).unwrap().is_isometry);
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let j = jacobian(&f, &m).unwrap();
        for n in -4..=4i64 {
            assert_eq!(*j.value(t.frame(n).unwrap()), pow_i(&int(2), -2 * n));
        }
        let g = gromov_isometry_check(&f).unwrap();
        assert!(!g.rho_isometry && g.consistent);
    }

    #[test]
    fn counterexample_numbers() {
        let r = counterexample_ratios(2, 3).unwrap();
        assert_eq!(r.xi, ratio(1, 8));
        assert!(r.mu_image_e >= int(32));
        assert_eq!(r.image_ratio_lower, ratio(8, 17));
        assert!(r.consistent, "{r:?}");
        let c = ainfty_failure_certificate(2, 1..=5).unwrap();
        assert!(c.monotone && c.all_consistent);
    }

    #[test]
    fn automorphisms_and_swaps() {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, 5, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let id = TreeBijection::identity(t.clone());
        let b = bilipschitz_diagnostics(&id, &m, None).unwrap();
        assert_eq!((b.c, b.quasi_isometry_defect), (0, 0));
        let a = random_automorphism(t.clone(), 3).unwrap();
        let g = gromov_isometry_check(&a).unwrap();
        assert!(g.rho_isometry && g.level_preserving && g.order_preserving && g.consistent);
        let b = bilipschitz_diagnostics(&a, &m, None).unwrap();
        assert_eq!(b.c, 0);
        assert!(b.holds);
        let x = t.succ(t.succ(t.top())[0])[1];
        let s = parent_swaps(t.clone(), &[x]).unwrap();
        let b = bilipschitz_diagnostics(&s, &m, None).unwrap();
        assert!(b.c >= 1 && b.holds, "{b:?}");
        let g = gromov_isometry_check(&s).unwrap();
        assert!(!g.rho_isometry && !g.level_preserving && g.consistent);
    }
}
