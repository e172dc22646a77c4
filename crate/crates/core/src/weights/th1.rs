//! Envelope doubling for A_p weights: `w_μ(R̃) <= C (  [w] + [w]^2 ) w_μ(R)`.
//!
//! For admissible `X, Y` with `X ∩ Y ≠ ∅`, testing the A_p inequality on `X`
//! with `f = χ_{X∩Y}` gives `w_μ(X) <= P_X (μ(X)/μ(X∩Y))^p w_μ(Y)`, where
//! `P_X <= [w]` is the product of `X`. Chaining this along the cover pieces
//! bounds each piece by `w_μ(R)`.

use serde::Serialize;

use super::ap::ApKernel;
use super::{Backend, Weight};
use crate::error::{FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{ConstantValue, Rational};
use crate::trapezoid::{CoverCase, EnvelopeCover};
use crate::trapezoid::{Beta, Trapezoid, Window};

#[derive(Clone, Debug, Serialize)]
pub struct Th1Certificate {
    #[serde(with = "crate::numeric::rational_serde")]
    pub p: Rational,
    /// Sup of A_p products over the checked trapezoids and all their cover pieces.
    pub ap_constant: ConstantValue,
    /// Geometric constant: the larger of the linear and quadratic coefficient
    /// sums in the chain, maximized over the checked trapezoids.
    pub c_cover: ConstantValue,
    /// `c_cover · (ap_constant + ap_constant²)`.
    pub bound: ConstantValue,
    #[serde(with = "crate::numeric::rational_serde")]
    pub max_ratio: Rational,
    pub argmax: Trapezoid,
    pub checked: usize,
    /// Trapezoids of the window whose cover pieces do not fit.
    pub skipped: usize,
    /// Trapezoids whose ratio exceeds their own chained bound.
    pub per_trapezoid_failures: Vec<Trapezoid>,
    pub holds: bool,
}

/// `w_μ(R̃)/w_μ(R)`; the envelope must fit.
pub fn envelope_ratio(w: &Weight, m: &FlowMeasure, beta: Beta, r: &Trapezoid) -> Result<Rational> {
    let t = m.tree();
    let env = r.envelope(beta);
    let num = w.weighted_measure(m, &env.members(t)?);
    let den = w.weighted_measure(m, &r.members(t)?);
    Ok(num / den)
}

// a_XY = (μ(X)/μ(X∩Y))^p
fn a(cover: &EnvelopeCover, x: &str, y: &str, p: &Rational) -> Result<ConstantValue> {
    let r = cover.ratio(x, y).ok_or_else(|| FlowError::Inapplicable(format!("no overlap certificate {x}/{y}")))?;
    ConstantValue::Exact(r.clone()).pow(p)
}

struct Chain {
    // bound = Σ lin_i P_i + Σ quad_j P_j P_k, grouped into the two coefficient sums.
    bound: ConstantValue,
    lin: ConstantValue,
    quad: ConstantValue,
}

fn chain(cover: &EnvelopeCover, p: &Rational, prod: &dyn Fn(&str) -> ConstantValue) -> Result<Chain> {
    let pr = |n: &str| prod(n);
    Ok(match cover.case_tag {
        CoverCase::Deep => {
            let (a01, a1r, a2r, a32) = (a(cover, "R0", "R1", p)?, a(cover, "R1", "R", p)?, a(cover, "R2", "R", p)?, a(cover, "R3", "R2", p)?);
            // w(R1) <= P1 a1R w(R), w(R0) <= P0 a01 P1 a1R w(R), w(R2) <= P2 a2R w(R), w(R3) <= P3 a32 P2 a2R w(R)
            let bound = pr("R1")
                .mul(&a1r)
                .add(&pr("R0").mul(&a01).mul(&pr("R1")).mul(&a1r))
                .add(&pr("R2").mul(&a2r))
                .add(&pr("R3").mul(&a32).mul(&pr("R2")).mul(&a2r));
            Chain { bound, lin: a1r.add(&a2r), quad: a01.mul(&a1r).add(&a32.mul(&a2r)) }
        }
        CoverCase::Shallow => {
            let (a0r, a12, a2r, a32) =
                (a(cover, "Rbar0", "R", p)?, a(cover, "Rbar1", "R2", p)?, a(cover, "R2", "R", p)?, a(cover, "R3", "R2", p)?);
            let bound = pr("Rbar0")
                .mul(&a0r)
                .add(&pr("Rbar1").mul(&a12).mul(&pr("R2")).mul(&a2r))
                .add(&pr("R2").mul(&a2r))
                .add(&pr("R3").mul(&a32).mul(&pr("R2")).mul(&a2r));
            Chain { bound, lin: a0r.add(&a2r), quad: a12.mul(&a2r).add(&a32.mul(&a2r)) }
        }
        CoverCase::Minimal => {
            let (a0r, a10) = (a(cover, "Rbar0", "R", p)?, a(cover, "Rbar1", "Rbar0", p)?);
            let bound = pr("Rbar0").mul(&a0r).add(&pr("Rbar1").mul(&a10).mul(&pr("Rbar0")).mul(&a0r));
            Chain { bound, lin: a0r.clone(), quad: a10.mul(&a0r) }
        }
    })
}

fn cmax(a: Option<ConstantValue>, b: &ConstantValue) -> Option<ConstantValue> {
    Some(match a {
        None => b.clone(),
        Some(a) => a.max(b),
    })
}

fn le(a: &ConstantValue, b: &ConstantValue) -> bool {
    a.certainly_le(b)
}

/// Checks the envelope bound on every window trapezoid whose cover pieces fit.
pub fn theorem_th1_check(w: &Weight, m: &FlowMeasure, window: &Window, p: &Rational) -> Result<Th1Certificate> {
    let t = m.tree();
    w.check_tree(t)?;
    let beta = window.beta;
    let kernel = ApKernel::new(t, w, m, p, Backend::Exact)?;
    let mut ap: Option<ConstantValue> = None;
    let mut c_cover: Option<ConstantValue> = None;
    let mut best: Option<(Rational, Trapezoid)> = None;
    let mut ratios: Vec<(Trapezoid, Rational, ConstantValue)> = Vec::new();
    let mut skipped = 0;
    for x in t.ids() {
        let fit = t.fit_height(x);
        for r in window.at_root(t, x) {
            if r.is_singleton() {
                continue;
            }
            let cover = EnvelopeCover::new(beta, &r)?;
            if cover.reach() > fit {
                skipped += 1;
                continue;
            }
            let mut prods = vec![("R".to_string(), kernel.product(m, &r)?)];
            for (n, piece) in &cover.pieces {
                prods.push((n.clone(), kernel.product(m, piece)?));
            }
            for (_, v) in &prods {
                ap = cmax(ap, v);
            }
            let lookup = |n: &str| prods.iter().find(|(k, _)| k == n).map(|(_, v)| v.clone()).expect("piece product");
            let ch = chain(&cover, p, &lookup)?;
            c_cover = cmax(c_cover, &ch.lin.max(&ch.quad));
            let env = cover.envelope;
            let ratio = kernel.sums.w_mu.sum(&env) / kernel.sums.w_mu.sum(&r);
            if best.as_ref().is_none_or(|(b, br)| ratio > *b || ratio == *b && r < *br) {
                best = Some((ratio.clone(), r));
            }
            ratios.push((r, ratio, ch.bound));
        }
    }
    let (max_ratio, argmax) = best.ok_or_else(|| {
        FlowError::WindowTooSmall("no trapezoid in the window has a cover that fits the truncation".into())
    })?;
    let ap = ap.unwrap_or_else(ConstantValue::one);
    let c_cover = c_cover.unwrap_or_else(ConstantValue::one);
    let bound = c_cover.mul(&ap.add(&ap.mul(&ap)));
    let per_trapezoid_failures: Vec<Trapezoid> = ratios
        .iter()
        .filter(|(_, ratio, b)| !le(&ConstantValue::Exact(ratio.clone()), b))
        .map(|(r, _, _)| *r)
        .collect();
    let holds = per_trapezoid_failures.is_empty() && le(&ConstantValue::Exact(max_ratio.clone()), &bound);
    Ok(Th1Certificate {
        p: p.clone(),
        ap_constant: ap,
        c_cover,
        bound,
        max_ratio,
        argmax,
        checked: ratios.len(),
        skipped,
        per_trapezoid_failures,
        holds,
    })
}

/// A slab deep enough for covers to fit: a single chain with a binary split
/// every `gap` levels.
pub fn sparse_slab_counts(depth: usize, gap: usize) -> crate::tree::SuccCounts {
    crate::tree::SuccCounts::PerLevel((0..depth).map(|k| if k % gap == gap - 1 { 2 } else { 1 }).collect())
}
