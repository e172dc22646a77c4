use num_traits::{One, Zero};
use serde::Serialize;

use super::{
    conjugate, mu_of, sup_over, ApReport, Backend, Field, FieldSums, LevelWeight, Weight, WeightSums,
    WindowDescriptor,
};
use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{int, ConstantValue, Interval, Rational};
use crate::prefix::PrefixSums;
use crate::trapezoid::{Beta, Trapezoid, Window};
use crate::tree::{TruncatedTree, VertexId};

fn check_p(p: &Rational) -> Result<()> {
    if *p <= Rational::one() {
        return Err(invalid(format!("p must exceed 1, got {p}")));
    }
    Ok(())
}

fn sigma_exponent(p: &Rational) -> Rational {
    -(Rational::one() / (p - Rational::one()))
}

pub(crate) struct ApKernel<'t> {
    pub(crate) sums: WeightSums<'t>,
    pub(crate) sigma: FieldSums<'t>,
    pub(crate) pm1: Rational,
    pub(crate) backend: Backend,
}

impl<'t> ApKernel<'t> {
    pub(crate) fn new(t: &'t TruncatedTree, w: &Weight, m: &FlowMeasure, p: &Rational, backend: Backend) -> Result<Self> {
        let sums = WeightSums::new(t, w, m);
        let sigma = Field::power_times_mass(w, m, &sigma_exponent(p))?.prefix(t);
        Ok(ApKernel { sums, sigma, pm1: p - Rational::one(), backend })
    }

    pub(crate) fn product(&self, m: &FlowMeasure, r: &Trapezoid) -> Result<ConstantValue> {
        if r.is_singleton() {
            return Ok(ConstantValue::one());
        }
        let mu_r = mu_of(m, r);
        let exact_possible = self.pm1.is_integer() && matches!(self.sigma, FieldSums::Exact(_));
        if !exact_possible && self.sums.is_constant_on(r, &mu_r) {
            return Ok(ConstantValue::one());
        }
        let mu = ConstantValue::Exact(mu_r);
        let avg_w = ConstantValue::Exact(self.sums.w_mu.sum(r)).div(&mu)?;
        let avg_s = self.sigma.sum(r).div(&mu)?;
        let mut v = avg_w.mul(&avg_s.pow(&self.pm1)?);
        if self.backend == Backend::Float {
            v = v.to_float();
        }
        Ok(v.clamp_below(1.0))
    }
}

/// `(avg_R w)(avg_R w^{−1/(p−1)})^{p−1}` for a single trapezoid.
pub fn ap_product(w: &Weight, m: &FlowMeasure, p: &Rational, r: &Trapezoid) -> Result<ConstantValue> {
    check_p(p)?;
    let t = m.tree();
    w.check_tree(t)?;
    r.ensure_fits(t)?;
    ApKernel::new(t, w, m, p, Backend::Exact)?.product(m, r)
}

/// `[w]_{A_p(μ)}` over the window family.
pub fn ap_constant(w: &Weight, m: &FlowMeasure, window: &Window, p: &Rational, backend: Backend) -> Result<ApReport> {
    check_p(p)?;
    let t = m.tree();
    w.check_tree(t)?;
    let kernel = ApKernel::new(t, w, m, p, backend)?;
    let (constant, argmax) = sup_over(t, window, |r| kernel.product(m, r))?.ok_or(FlowError::EmptyWindow)?;
    Ok(ApReport {
        p: p.clone(),
        p_conj: conjugate(p).map(|c| c.to_string()),
        constant,
        argmax_trapezoid: argmax,
        window: WindowDescriptor::new(t, window),
    })
}

// rows[x][k]: vertex of least weight exactly k below x, for k < fit(x).
struct MinTable {
    rows: Vec<Vec<VertexId>>,
}

impl MinTable {
    fn new(t: &TruncatedTree, w: &Weight) -> Self {
        let mut rows: Vec<Vec<VertexId>> = vec![Vec::new(); t.len()];
        for x in t.ids_by_level_ascending() {
            let h = t.fit_height(x) as usize;
            let mut row = Vec::with_capacity(h);
            row.push(x);
            for k in 1..h {
                let best = t
                    .succ(x)
                    .iter()
                    .map(|c| rows[c.idx()][k - 1])
                    .min_by(|a, b| w.value(*a).cmp(w.value(*b)).then(a.cmp(b)))
                    .expect("vertex with fit height > 1 has successors");
                row.push(best);
            }
            rows[x.idx()] = row;
        }
        MinTable { rows }
    }

    fn min_on<'w>(&self, w: &'w Weight, r: &Trapezoid) -> &'w Rational {
        let row = &self.rows[r.root.idx()];
        (r.h1..r.h2).map(|k| w.value(row[k as usize])).min().expect("nonempty trapezoid")
    }
}

/// `[w]_{A_1(μ)} = sup_R (avg_R w) · max_R w^{-1}`, exact.
pub fn a1_constant(w: &Weight, m: &FlowMeasure, window: &Window) -> Result<ApReport> {
    let t = m.tree();
    w.check_tree(t)?;
    let sums = WeightSums::new(t, w, m);
    let mins = MinTable::new(t, w);
    let (constant, argmax) = sup_over(t, window, |r| {
        if r.is_singleton() {
            return Ok(ConstantValue::one());
        }
        let mu_r = mu_of(m, r);
        Ok(ConstantValue::Exact(sums.w_mu.sum(r) / mu_r / mins.min_on(w, r)))
    })?
    .ok_or(FlowError::EmptyWindow)?;
    Ok(ApReport {
        p: Rational::one(),
        p_conj: None,
        constant,
        argmax_trapezoid: argmax,
        window: WindowDescriptor::new(t, window),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AinftyComparison {
    #[serde(with = "crate::numeric::rational_serde")]
    pub p: Rational,
    pub ap_constant: ConstantValue,
    /// Certified `[w]_{A_∞} <= [w]_{A_p}`.
    pub ainfty_below: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AinftyReport {
    pub a_inf_constant: ConstantValue,
    pub argmax_trapezoid: Trapezoid,
    pub window: WindowDescriptor,
    pub comparisons: Vec<AinftyComparison>,
}

pub(crate) struct LogSums<'t> {
    pub sums: PrefixSums<'t, Interval>,
}

impl<'t> LogSums<'t> {
    /// Prefix sums of `(log w) μ`.
    pub fn new(t: &'t TruncatedTree, w: &Weight, m: &FlowMeasure) -> Result<Self> {
        let mut vals = Vec::with_capacity(t.len());
        for (a, b) in w.values().iter().zip(m.values()) {
            vals.push(Interval::from_rational(a).ln()? * Interval::from_rational(b));
        }
        Ok(LogSums { sums: PrefixSums::new(t, vals) })
    }
}

/// `sup_R (avg_R w) exp(avg_R log w^{-1})`, compared against `[w]_{A_p}` for each `p` in `ps`.
pub fn ainfty_constant(w: &Weight, m: &FlowMeasure, window: &Window, ps: &[Rational]) -> Result<AinftyReport> {
    let t = m.tree();
    w.check_tree(t)?;
    let sums = WeightSums::new(t, w, m);
    let logs = LogSums::new(t, w, m)?;
    let (constant, argmax) = sup_over(t, window, |r| {
        if r.is_singleton() {
            return Ok(ConstantValue::one());
        }
        let mu_r = mu_of(m, r);
        if sums.is_constant_on(r, &mu_r) {
            return Ok(ConstantValue::one());
        }
        let mu = Interval::from_rational(&mu_r);
        let avg_w = Interval::from_rational(&sums.w_mu.sum(r)) / mu;
        let avg_log = (logs.sums.sum(r) / mu)?;
        let v = avg_w? * (Interval::point(0.0) - avg_log).exp();
        Ok(ConstantValue::Enclosure(v).clamp_below(1.0))
    })?
    .ok_or(FlowError::EmptyWindow)?;
    let mut comparisons = Vec::new();
    for p in ps {
        let ap = ap_constant(w, m, window, p, Backend::Exact)?;
        comparisons.push(AinftyComparison {
            p: p.clone(),
            ainfty_below: constant.certainly_le(&ap.constant) || constant == ap.constant,
            ap_constant: ap.constant,
        });
    }
    Ok(AinftyReport { a_inf_constant: constant, argmax_trapezoid: argmax, window: WindowDescriptor::new(t, window), comparisons })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityCheck {
    pub trapezoid: Trapezoid,
    /// `(avg_R |f|)^p`.
    pub lhs: ConstantValue,
    /// `P_R · (1/w_μ(R)) Σ_R |f|^p w μ`, with `P_R` the A_p product of `R`.
    pub rhs: ConstantValue,
    pub holds: bool,
    /// `lhs == rhs` exactly (the extremal family).
    pub equality: bool,
}

/// The duality characterization of A_p on one trapezoid, with the trapezoid's
/// own A_p product in place of `[w]_{A_p}` (which dominates it).
pub fn ap_duality_characterization_check(
    w: &Weight,
    m: &FlowMeasure,
    p: &Rational,
    f: &[Rational],
    r: &Trapezoid,
) -> Result<DualityCheck> {
    check_p(p)?;
    let t = m.tree();
    w.check_tree(t)?;
    if f.len() != t.len() {
        return Err(invalid("function length does not match the tree"));
    }
    let members = r.members(t)?;
    if members.iter().all(|y| f[y.idx()].is_zero()) {
        return Err(FlowError::Inapplicable(format!("f vanishes on {r}")));
    }
    let mu_r = ConstantValue::Exact(mu_of(m, r));
    let mut f_mu = Rational::zero();
    let mut fp_w_mu = ConstantValue::Exact(Rational::zero());
    let mut w_r = Rational::zero();
    for y in &members {
        let fy = num_traits::Signed::abs(&f[y.idx()]);
        f_mu += &fy * m.value(*y);
        w_r += w.value(*y) * m.value(*y);
        if !fy.is_zero() {
            let term = ConstantValue::Exact(fy).pow(p)?.mul(&ConstantValue::Exact(w.value(*y) * m.value(*y)));
            fp_w_mu = fp_w_mu.add(&term);
        }
    }
    let lhs = ConstantValue::Exact(f_mu).div(&mu_r)?.pow(p)?;
    let prod = ap_product(w, m, p, r)?;
    let rhs = prod.mul(&fp_w_mu.div(&ConstantValue::Exact(w_r))?);
    let equality = matches!((&lhs, &rhs), (ConstantValue::Exact(a), ConstantValue::Exact(b)) if a == b);
    let holds = lhs.certainly_le(&rhs) || lhs.interval().overlaps(&rhs.interval()) && !rhs.certainly_le(&lhs);
    Ok(DualityCheck { trapezoid: *r, lhs, rhs, holds: holds || equality, equality })
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelApResult {
    pub constant: ConstantValue,
    pub argmax: (i64, i64),
    pub intervals_checked: usize,
}

// Counting-measure A_p product on [a, b] given level prefix sums.
fn interval_product(
    wsum: &[Rational],
    ssum: &FieldLevelSums,
    pm1: &Rational,
    lo: i64,
    a: i64,
    b: i64,
) -> Result<ConstantValue> {
    let (i, j) = ((a - lo) as usize, (b - lo + 1) as usize);
    if j - i == 1 {
        return Ok(ConstantValue::one());
    }
    let n = ConstantValue::Exact(int((b - a + 1) as i64));
    let avg_w = ConstantValue::Exact(&wsum[j] - &wsum[i]).div(&n)?;
    let avg_s = ssum.range(i, j).div(&n)?;
    Ok(avg_w.mul(&avg_s.pow(pm1)?).clamp_below(1.0))
}

enum FieldLevelSums {
    Exact(Vec<Rational>),
    Approx(Vec<Interval>),
}

impl FieldLevelSums {
    fn range(&self, i: usize, j: usize) -> ConstantValue {
        match self {
            FieldLevelSums::Exact(v) => ConstantValue::Exact(&v[j] - &v[i]),
            FieldLevelSums::Approx(v) => ConstantValue::Enclosure(v[j] - v[i]),
        }
    }
}

fn level_tables(w: &LevelWeight, p: &Rational, lo: i64, hi: i64) -> Result<(Vec<Rational>, FieldLevelSums)> {
    let e = sigma_exponent(p);
    let mut wsum = vec![Rational::zero()];
    for l in lo..=hi {
        let next = wsum.last().unwrap() + w.at(l);
        wsum.push(next);
    }
    let ssum = if e.is_integer() {
        let k = num_traits::ToPrimitive::to_i64(&e.to_integer()).ok_or_else(|| invalid("exponent too large"))?;
        let mut v = vec![Rational::zero()];
        for l in lo..=hi {
            let next = v.last().unwrap() + crate::numeric::pow_i(&w.at(l), k);
            v.push(next);
        }
        FieldLevelSums::Exact(v)
    } else {
        let ei = Interval::from_rational(&e);
        let mut v = vec![Interval::point(0.0)];
        for l in lo..=hi {
            let next = *v.last().unwrap() + Interval::from_rational(&w.at(l)).pow(&ei)?;
            v.push(next);
        }
        FieldLevelSums::Approx(v)
    };
    Ok((wsum, ssum))
}

/// `[W]_{A_p(ℤ)}` over integer intervals inside `[lo, hi]` of length at most `max_len`.
pub fn level_ap_constant(w: &LevelWeight, p: &Rational, lo: i64, hi: i64, max_len: Option<usize>) -> Result<LevelApResult> {
    check_p(p)?;
    if hi < lo {
        return Err(FlowError::EmptyWindow);
    }
    let (wsum, ssum) = level_tables(w, p, lo, hi)?;
    let pm1 = p - Rational::one();
    let mut best: Option<(ConstantValue, (i64, i64))> = None;
    let mut enclosure = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut all_exact = true;
    let mut n = 0;
    for a in lo..=hi {
        for b in a..=hi {
            if max_len.is_some_and(|m| (b - a + 1) as usize > m) {
                break;
            }
            let v = interval_product(&wsum, &ssum, &pm1, lo, a, b)?;
            n += 1;
            let iv = v.interval();
            enclosure = (enclosure.0.max(iv.lo), enclosure.1.max(iv.hi));
            all_exact &= v.exact().is_some();
            if best.as_ref().is_none_or(|(bv, _)| v.rank_cmp(bv) == std::cmp::Ordering::Greater) {
                best = Some((v, (a, b)));
            }
        }
    }
    let (v, argmax) = best.ok_or(FlowError::EmptyWindow)?;
    let constant = if all_exact { v } else { ConstantValue::Enclosure(Interval { lo: enclosure.0, hi: enclosure.1 }) };
    Ok(LevelApResult { constant, argmax, intervals_checked: n })
}

#[derive(Clone, Debug, Serialize)]
pub struct Th01Certificate {
    pub q: u32,
    pub depth: u32,
    #[serde(with = "crate::numeric::rational_serde")]
    pub p: Rational,
    pub tree_constant: ConstantValue,
    pub tree_argmax: Trapezoid,
    /// Maximum over representable intervals.
    pub interval_constant: ConstantValue,
    pub interval_argmax: (i64, i64),
    /// Every trapezoid's product equals its interval's product.
    pub products_matched: usize,
    pub product_mismatches: Vec<Trapezoid>,
    pub representable_intervals: usize,
    pub excluded_intervals: Vec<(i64, i64)>,
    /// Unrestricted interval constant over all intervals in the level range.
    pub unrestricted_interval_constant: ConstantValue,
    pub equal: bool,
}

/// Root level `L` of a witness trapezoid for `[a, b]` in a slab with top level `top`.
pub fn th01_witness_level(beta: Beta, a: i64, b: i64, top: i64) -> Option<i64> {
    let bb = beta.get() as i64;
    let num = bb * b + 1 - a;
    let lo = (b + 1).max((num + bb - 2).div_euclid(bb - 1));
    let hi = (2 * b + 1 - a).min(top);
    (lo <= hi).then_some(lo)
}

/// The tree constant of a level weight on a `T_q` slab against the ℤ constant on matched intervals.
pub fn theorem_th01_check(w: &LevelWeight, q: u32, p: &Rational, depth: u32, beta: Beta) -> Result<Th01Certificate> {
    check_p(p)?;
    let t = std::sync::Arc::new(TruncatedTree::homogeneous_slab(q, depth as i64, 0)?);
    let m = FlowMeasure::canonical(t.clone())?;
    let wt = Weight::from_level(&t, w);
    let window = Window::full(beta);
    let tree = ap_constant(&wt, &m, &window, p, Backend::Exact)?;

    let (lo, hi) = (0i64, depth as i64);
    let (wsum, ssum) = level_tables(w, p, lo, hi)?;
    let pm1 = p - Rational::one();

    let kernel = ApKernel::new(&t, &wt, &m, p, Backend::Exact)?;
    let mut matched = 0;
    let mut mismatches = Vec::new();
    for r in window.enumerate(&t) {
        if r.is_singleton() {
            continue;
        }
        let l = t.level(r.root);
        let (a, b) = (l - r.h2 as i64 + 1, l - r.h1 as i64);
        let tp = kernel.product(&m, &r)?;
        let ip = interval_product(&wsum, &ssum, &pm1, lo, a, b)?;
        let same = match (&tp, &ip) {
            (ConstantValue::Exact(x), ConstantValue::Exact(y)) => x == y,
            _ => tp.interval().overlaps(&ip.interval()),
        };
        if same {
            matched += 1;
        } else {
            mismatches.push(r);
        }
    }

    let mut best: Option<(ConstantValue, (i64, i64))> = None;
    let mut enclosure = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut all_exact = true;
    let mut representable = 0;
    let mut excluded = Vec::new();
    for a in lo..=hi {
        for b in a..=hi {
            if th01_witness_level(beta, a, b, hi).is_none() {
                excluded.push((a, b));
                continue;
            }
            representable += 1;
            let v = interval_product(&wsum, &ssum, &pm1, lo, a, b)?;
            let iv = v.interval();
            enclosure = (enclosure.0.max(iv.lo), enclosure.1.max(iv.hi));
            all_exact &= v.exact().is_some();
            if best.as_ref().is_none_or(|(bv, _)| v.rank_cmp(bv) == std::cmp::Ordering::Greater) {
                best = Some((v, (a, b)));
            }
        }
    }
    let (iv, iarg) = best.ok_or(FlowError::EmptyWindow)?;
    let interval_constant = if all_exact { iv } else { ConstantValue::Enclosure(Interval { lo: enclosure.0, hi: enclosure.1 }) };
    let unrestricted = level_ap_constant(w, p, lo, hi, None)?;
    let equal = match (&tree.constant, &interval_constant) {
        (ConstantValue::Exact(x), ConstantValue::Exact(y)) => x == y,
        (x, y) => x.interval().overlaps(&y.interval()),
    } && mismatches.is_empty();
    Ok(Th01Certificate {
        q,
        depth,
        p: p.clone(),
        tree_constant: tree.constant,
        tree_argmax: tree.argmax_trapezoid,
        interval_constant,
        interval_argmax: iarg,
        products_matched: matched,
        product_mismatches: mismatches,
        representable_intervals: representable,
        excluded_intervals: excluded,
        unrestricted_interval_constant: unrestricted.constant,
        equal,
    })
}
