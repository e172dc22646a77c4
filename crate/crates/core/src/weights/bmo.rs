//! Mean oscillation and the passage between BMO and A_∞.

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use super::{ap_constant, mu_of, sup_over, Backend, Weight, WeightSums, WindowDescriptor};
use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{ConstantValue, Interval, Rational};
use crate::prefix::PrefixSums;
use crate::trapezoid::{Trapezoid, Window};
use crate::tree::TruncatedTree;

/// A real vertex function, exact or enclosed.
#[derive(Clone, Debug)]
pub enum VertexFunction {
    Exact(Vec<Rational>),
    Approx(Vec<Interval>),
}

impl VertexFunction {
    /// `log w`, enclosed.
    pub fn log_of(w: &Weight) -> Result<Self> {
        let v: Result<Vec<Interval>> = w.values().iter().map(|x| Interval::from_rational(x).ln()).collect();
        Ok(VertexFunction::Approx(v?))
    }

    pub fn len(&self) -> usize {
        match self {
            VertexFunction::Exact(v) => v.len(),
            VertexFunction::Approx(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn interval(&self, i: usize) -> Interval {
        match self {
            VertexFunction::Exact(v) => Interval::from_rational(&v[i]),
            VertexFunction::Approx(v) => v[i],
        }
    }

    fn intervals(&self) -> Vec<Interval> {
        (0..self.len()).map(|i| self.interval(i)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BmoReport {
    pub norm: ConstantValue,
    pub argmax_trapezoid: Trapezoid,
    pub window: WindowDescriptor,
}

fn oscillation(t: &TruncatedTree, m: &FlowMeasure, f: &VertexFunction, r: &Trapezoid) -> Result<ConstantValue> {
    if r.is_singleton() {
        return Ok(ConstantValue::Exact(Rational::zero()));
    }
    let members = r.members(t)?;
    let mu_r = mu_of(m, r);
    match f {
        VertexFunction::Exact(v) => {
            let avg = members.iter().fold(Rational::zero(), |a, y| a + &v[y.idx()] * m.value(*y)) / &mu_r;
            let osc = members.iter().fold(Rational::zero(), |a, y| a + (&v[y.idx()] - &avg).abs() * m.value(*y));
            Ok(ConstantValue::Exact(osc / mu_r))
        }
        VertexFunction::Approx(v) => {
            let mu = Interval::from_rational(&mu_r);
            let mut s = Interval::point(0.0);
            for y in &members {
                s = s + v[y.idx()] * Interval::from_rational(m.value(*y));
            }
            let avg = (s / mu)?;
            let mut osc = Interval::point(0.0);
            for y in &members {
                osc = osc + (v[y.idx()] - avg).abs() * Interval::from_rational(m.value(*y));
            }
            let o = (osc / mu)?;
            Ok(ConstantValue::Enclosure(Interval { lo: o.lo.max(0.0), hi: o.hi }))
        }
    }
}

/// `sup_R (1/μ(R)) Σ_R |f − f_R| μ` over the window.
pub fn bmo_norm(f: &VertexFunction, m: &FlowMeasure, window: &Window) -> Result<BmoReport> {
    let t = m.tree();
    if f.len() != t.len() {
        return Err(invalid("function length does not match the tree"));
    }
    let (norm, argmax) = sup_over(t, window, |r| oscillation(t, m, f, r))?.ok_or(FlowError::EmptyWindow)?;
    Ok(BmoReport { norm, argmax_trapezoid: argmax, window: WindowDescriptor::new(t, window) })
}

#[derive(Clone, Debug, Serialize)]
pub struct BmoLogCheck {
    pub bmo: ConstantValue,
    pub argmax_trapezoid: Trapezoid,
    pub a2_constant: ConstantValue,
    /// `log [w]_{A_2}`.
    pub log_a2: Interval,
    /// `‖log w‖_BMO <= log [w]_{A_2}` is certified.
    pub log_bound_holds: bool,
    /// `log(2 [w]_{A_2})`, from `avg e^{|f−f_R|} <= avg e^{f−f_R} + avg e^{f_R−f} <= 2 [w]_{A_2}`.
    pub jensen_bound: Interval,
    pub jensen_bound_holds: bool,
}

/// `‖log w‖_BMO` against `log [w]_{A_2}` and against `log(2 [w]_{A_2})`.
pub fn bmo_log_weight_check(w: &Weight, m: &FlowMeasure, window: &Window) -> Result<BmoLogCheck> {
    let t = m.tree();
    w.check_tree(t)?;
    let f = VertexFunction::log_of(w)?;
    let sums = WeightSums::new(t, w, m);
    let (norm, argmax) = sup_over(t, window, |r| {
        if sums.is_constant_on(r, &mu_of(m, r)) {
            return Ok(ConstantValue::Exact(Rational::zero()));
        }
        oscillation(t, m, &f, r)
    })?
    .ok_or(FlowError::EmptyWindow)?;
    let b = BmoReport { norm, argmax_trapezoid: argmax, window: WindowDescriptor::new(t, window) };
    let a2 = ap_constant(w, m, window, &crate::numeric::int(2), Backend::Exact)?.constant;
    let ai = a2.interval();
    let log_a2 = ai.ln()?;
    let jensen_bound = (Interval::point(2.0) * ai).ln()?;
    let bi = b.norm.interval();
    // a constant weight has zero oscillation and [w] = 1 exactly
    let zero = b.norm.exact().is_some_and(|v| v.is_zero());
    Ok(BmoLogCheck {
        log_bound_holds: zero || bi.hi <= log_a2.lo,
        jensen_bound_holds: zero || bi.hi <= jensen_bound.lo,
        bmo: b.norm,
        argmax_trapezoid: b.argmax_trapezoid,
        a2_constant: a2,
        log_a2,
        jensen_bound,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaRow {
    #[serde(with = "crate::numeric::rational_serde")]
    pub lambda: Rational,
    /// `[e^{λf}]_{A_p}` on the window.
    pub ap_constant: Interval,
    pub within_cap: bool,
    /// `η = λ max(1, 1/(p−1))`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub eta: Rational,
    /// `sup_R avg_R e^{η|f−f_R|}`.
    pub exp_moment: Interval,
}

#[derive(Clone, Debug, Serialize)]
pub struct BmoToAinfty {
    #[serde(with = "crate::numeric::rational_serde")]
    pub p: Rational,
    #[serde(with = "crate::numeric::rational_serde")]
    pub cap: Rational,
    pub rows: Vec<LambdaRow>,
    /// Grid values whose constant stays under the cap, ascending.
    #[serde(with = "crate::numeric::rational_vec_serde")]
    pub workable: Vec<Rational>,
    /// Grid values where the cap is exceeded.
    #[serde(with = "crate::numeric::rational_vec_serde")]
    pub divergent: Vec<Rational>,
}

fn exp_moment(t: &TruncatedTree, m: &FlowMeasure, f: &[Interval], eta: Interval, window: &Window) -> Result<Interval> {
    let best = (0..t.len() as u32)
        .into_par_iter()
        .map(|i| -> Result<Interval> {
            let mut hi = Interval::point(1.0);
            for r in window.at_root(t, crate::tree::VertexId(i)) {
                if r.is_singleton() {
                    continue;
                }
                let members = r.members(t)?;
                let mu = Interval::from_rational(&mu_of(m, &r));
                let mut s = Interval::point(0.0);
                for y in &members {
                    s = s + f[y.idx()] * Interval::from_rational(m.value(*y));
                }
                let avg = (s / mu)?;
                let mut e = Interval::point(0.0);
                for y in &members {
                    e = e + (eta * (f[y.idx()] - avg).abs()).exp() * Interval::from_rational(m.value(*y));
                }
                hi = hi.max(&(e / mu)?);
            }
            Ok(hi)
        })
        .try_reduce(|| Interval::point(1.0), |a, b| Ok(a.max(&b)))?;
    Ok(best)
}

/// Sweeps `λ` over the grid: A_p constant of `ψ = e^{λf}` and the exponential
/// moment the John–Nirenberg step needs.
pub fn bmo_to_ainfty(
    f: &VertexFunction,
    m: &FlowMeasure,
    window: &Window,
    lambda_grid: &[Rational],
    p: &Rational,
    cap: &Rational,
) -> Result<BmoToAinfty> {
    let t = m.tree();
    if f.len() != t.len() {
        return Err(invalid("function length does not match the tree"));
    }
    let one = Rational::from_integer(1.into());
    if *p <= one {
        return Err(invalid("p must exceed 1"));
    }
    let fi = f.intervals();
    let pm1 = p - &one;
    let pm1_i = Interval::from_rational(&pm1);
    let mut grid = lambda_grid.to_vec();
    grid.sort();
    grid.dedup();
    let mut rows = Vec::new();
    for lambda in grid {
        if lambda <= Rational::zero() {
            return Err(invalid("λ must be positive"));
        }
        let li = Interval::from_rational(&lambda);
        let mut a = Vec::with_capacity(t.len());
        let mut b = Vec::with_capacity(t.len());
        for (i, x) in fi.iter().enumerate() {
            let mu = Interval::from_rational(m.value(crate::tree::VertexId(i as u32)));
            a.push((li * *x).exp() * mu);
            b.push(((Interval::point(0.0) - li * *x) / pm1_i)?.exp() * mu);
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(FlowError::Numeric(format!("e^(λf) overflows at λ = {lambda}")));
        }
        let sa = PrefixSums::new(t, a);
        let sb = PrefixSums::new(t, b);
        let (c, _) = sup_over(t, window, |r| {
            if r.is_singleton() {
                return Ok(ConstantValue::one());
            }
            let mu = Interval::from_rational(&mu_of(m, r));
            let v = (sa.sum(r) / mu)? * (sb.sum(r) / mu)?.pow(&pm1_i)?;
            Ok(ConstantValue::Enclosure(v).clamp_below(1.0))
        })?
        .ok_or(FlowError::EmptyWindow)?;
        let c = c.interval();
        let eta = &lambda * if pm1 < one { &one / &pm1 } else { one.clone() };
        let moment = exp_moment(t, m, &fi, Interval::from_rational(&eta), window)?;
        rows.push(LambdaRow {
            within_cap: c.hi <= crate::numeric::to_f64(cap),
            lambda,
            ap_constant: c,
            eta,
            exp_moment: moment,
        });
    }
    let workable = rows.iter().filter(|r| r.within_cap).map(|r| r.lambda.clone()).collect();
    let divergent = rows.iter().filter(|r| !r.within_cap).map(|r| r.lambda.clone()).collect();
    Ok(BmoToAinfty { p: p.clone(), cap: cap.clone(), rows, workable, divergent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{int, ratio};
    use crate::trapezoid::Beta;
    use crate::weights::LevelWeight;
    use std::sync::Arc;

    fn setup(depth: i64) -> (Arc<TruncatedTree>, FlowMeasure) {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, depth, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        (t, m)
    }

    #[test]
    fn constants_have_zero_oscillation() {
        let (t, m) = setup(5);
        let f = VertexFunction::Exact(vec![int(4); t.len()]);
        let r = bmo_norm(&f, &m, &Window::full(Beta::default())).unwrap();
        assert_eq!(r.norm, ConstantValue::Exact(int(0)));
        let w = Weight::constant(&t, int(5)).unwrap();
        let c = bmo_log_weight_check(&w, &m, &Window::full(Beta::default())).unwrap();
        assert!(c.log_bound_holds && c.jensen_bound_holds);
    }

    #[test]
    fn level_sign_brute_force() {
        let (t, m) = setup(5);
        let lambda = ratio(3, 2);
        let vals: Vec<Rational> = t.ids().map(|x| if t.level(x) % 2 == 0 { lambda.clone() } else { -lambda.clone() }).collect();
        let win = Window::full(Beta::default());
        let rep = bmo_norm(&VertexFunction::Exact(vals.clone()), &m, &win).unwrap();
        let mut best = int(0);
        for r in win.enumerate(&t) {
            let mem = r.members(&t).unwrap();
            let mu: Rational = m.set_measure(&mem);
            let avg = mem.iter().fold(int(0), |a, y| a + &vals[y.idx()] * m.value(*y)) / &mu;
            let o = mem.iter().fold(int(0), |a, y| a + (&vals[y.idx()] - &avg).abs() * m.value(*y)) / &mu;
            if o > best {
                best = o;
            }
        }
        assert_eq!(rep.norm, ConstantValue::Exact(best));
    }

    #[test]
    fn log_alternating_weight() {
        let (t, m) = setup(6);
        let w = Weight::from_level(&t, &LevelWeight::periodic(vec![int(2), int(1)]).unwrap());
        let c = bmo_log_weight_check(&w, &m, &Window::full(Beta::default())).unwrap();
        assert!(c.jensen_bound_holds);
        assert!(!c.log_bound_holds);
    }

    #[test]
    fn round_trip_lambda_one() {
        let (t, m) = setup(5);
        let w = Weight::from_level(&t, &LevelWeight::periodic(vec![int(2), int(1)]).unwrap());
        let win = Window::full(Beta::default());
        let f = VertexFunction::log_of(&w).unwrap();
        let r = bmo_to_ainfty(&f, &m, &win, &[int(1)], &int(2), &int(10)).unwrap();
        let exact = ap_constant(&w, &m, &win, &int(2), Backend::Exact).unwrap().constant;
        assert!(r.rows[0].ap_constant.contains(exact.approx()));
        assert_eq!(r.workable, vec![int(1)]);
        let big = bmo_to_ainfty(&f, &m, &win, &[int(40)], &int(2), &int(10)).unwrap();
        assert_eq!(big.divergent, vec![int(40)]);
        let zero = VertexFunction::Exact(vec![int(0); t.len()]);
        let z = bmo_to_ainfty(&zero, &m, &win, &[int(1), int(7)], &int(2), &int(2)).unwrap();
        assert_eq!(z.workable.len(), 2);
    }
}
