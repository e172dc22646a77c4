//! Maximal operators on the family ℛ and empirical operator bounds.

mod cz;
mod split;

pub use cz::{
    assumption1_check, cz_decompose, cz_decompose_weighted, Assumption1, CzFamily, CzPiece, CzProperties,
};
pub use split::{certify_split_rule, split_trapezoid, weighted_split_floor, Split, SplitCase, SplitRule};

use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FlowError, Result};
use crate::measure::FlowMeasure;
use crate::numeric::{int, rational_vec_serde, ConstantValue, Interval, Rational};
use crate::prefix::PrefixSums;
use crate::trapezoid::{Trapezoid, Window};
use crate::tree::{TruncatedTree, VertexId};
use crate::weights::{a1_constant, ap_constant, Backend, Weight};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaximalField {
    #[serde(with = "rational_vec_serde")]
    pub values: Vec<Rational>,
    pub argmax_trapezoid: Vec<Trapezoid>,
}

impl MaximalField {
    pub fn value(&self, x: VertexId) -> &Rational {
        &self.values[x.idx()]
    }
}

type Best = Option<(Rational, Trapezoid)>;

fn better(v: &Rational, r: &Trapezoid, cur: &Best) -> bool {
    match cur {
        None => true,
        Some((b, br)) => v > b || (v == b && r < br),
    }
}

// best[a][k]: largest num/den over window trapezoids at `a` containing the level k below `a`.
fn field(
    t: &TruncatedTree,
    window: &Window,
    num: &PrefixSums<'_, Rational>,
    den: &PrefixSums<'_, Rational>,
    point: &(dyn Fn(VertexId) -> Rational + Sync),
) -> MaximalField {
    let best: Vec<Vec<Best>> = (0..t.len() as u32)
        .into_par_iter()
        .map(|i| {
            let a = VertexId(i);
            let mut row: Vec<Best> = vec![None; t.fit_height(a) as usize];
            for r in window.at_root(t, a) {
                if r.is_singleton() {
                    continue;
                }
                let v = num.sum(&r) / den.sum(&r);
                for k in r.h1..r.h2 {
                    if better(&v, &r, &row[k as usize]) {
                        row[k as usize] = Some((v.clone(), r));
                    }
                }
            }
            row
        })
        .collect();
    let (values, argmax_trapezoid): (Vec<Rational>, Vec<Trapezoid>) = (0..t.len() as u32)
        .into_par_iter()
        .map(|i| {
            let y = VertexId(i);
            let mut cur: Best = Some((point(y), Trapezoid::singleton(y)));
            let mut a = y;
            let mut k = 0usize;
            while let Some(p) = t.pred(a) {
                a = p;
                k += 1;
                if let Some(Some((v, r))) = best[a.idx()].get(k) {
                    if better(v, r, &cur) {
                        cur = Some((v.clone(), *r));
                    }
                }
            }
            cur.expect("singleton candidate")
        })
        .unzip();
    MaximalField { values, argmax_trapezoid }
}

fn check_len(t: &TruncatedTree, f: &[Rational]) -> Result<()> {
    if f.len() != t.len() {
        return Err(invalid(format!("function has {} values, tree has {} vertices", f.len(), t.len())));
    }
    Ok(())
}

/// `M_μ f(x) = max_{R ∋ x} (1/μ(R)) Σ_R |f| μ` over the window.
pub fn maximal_function(m: &FlowMeasure, f: &[Rational], window: &Window) -> Result<MaximalField> {
    let t = m.tree();
    check_len(t, f)?;
    let num = PrefixSums::new(t, f.iter().zip(m.values()).map(|(a, b)| a.abs() * b).collect());
    let den = PrefixSums::new(t, m.values().to_vec());
    Ok(field(t, window, &num, &den, &|y| f[y.idx()].abs()))
}

/// `M^w_μ f(x) = max_{R ∋ x} (1/w_μ(R)) Σ_R |f| w μ`.
pub fn weighted_maximal_function(m: &FlowMeasure, w: &Weight, f: &[Rational], window: &Window) -> Result<MaximalField> {
    let t = m.tree();
    check_len(t, f)?;
    w.check_tree(t)?;
    let wm: Vec<Rational> = w.values().iter().zip(m.values()).map(|(a, b)| a * b).collect();
    let num = PrefixSums::new(t, f.iter().zip(&wm).map(|(a, b)| a.abs() * b).collect());
    let den = PrefixSums::new(t, wm);
    Ok(field(t, window, &num, &den, &|y| f[y.idx()].abs()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaximalKind {
    #[default]
    Plain,
    Weighted,
}

#[derive(Clone, Debug, Serialize)]
pub struct Weak11Row {
    #[serde(with = "crate::numeric::rational_serde")]
    pub lambda: Rational,
    /// `λ w_μ({M f > λ}) / ‖f‖_{L¹_μ(w)}`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub ratio: Rational,
}

#[derive(Clone, Debug, Serialize)]
pub struct Weak11Report {
    pub kind: MaximalKind,
    #[serde(with = "crate::numeric::rational_serde")]
    pub constant: Rational,
    pub rows: Vec<Weak11Row>,
}

/// Empirical weak type (1,1) constant over a grid of levels.
pub fn weak11_constant(
    m: &FlowMeasure,
    w: &Weight,
    f: &[Rational],
    lambda_grid: &[Rational],
    kind: MaximalKind,
    window: &Window,
) -> Result<Weak11Report> {
    let t = m.tree();
    check_len(t, f)?;
    w.check_tree(t)?;
    if lambda_grid.iter().any(|l| *l <= Rational::zero()) {
        return Err(invalid("λ must be positive"));
    }
    let norm = t.ids().fold(Rational::zero(), |a, y| a + f[y.idx()].abs() * w.value(y) * m.value(y));
    let mf = match kind {
        MaximalKind::Plain => maximal_function(m, f, window)?,
        MaximalKind::Weighted => weighted_maximal_function(m, w, f, window)?,
    };
    let mut rows = Vec::new();
    let mut constant = Rational::zero();
    for l in lambda_grid {
        let ratio = if norm.is_zero() {
            Rational::zero()
        } else {
            let level = t
                .ids()
                .filter(|y| mf.value(*y) > l)
                .fold(Rational::zero(), |a, y| a + w.value(y) * m.value(y));
            l * level / &norm
        };
        if ratio > constant {
            constant = ratio.clone();
        }
        rows.push(Weak11Row { lambda: l.clone(), ratio });
    }
    Ok(Weak11Report { kind, constant, rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct A1Pointwise {
    pub a1_constant: ConstantValue,
    /// `max_x M_μ w(x) / w(x)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub worst_ratio: Rational,
    pub worst_vertex: VertexId,
    pub holds: bool,
}

/// `M_μ w <= [w]_{A_1} w` at every vertex, exactly.
pub fn a1_pointwise_check(m: &FlowMeasure, w: &Weight, window: &Window) -> Result<A1Pointwise> {
    let t = m.tree();
    let a1 = a1_constant(w, m, window)?.constant;
    let mw = maximal_function(m, w.values(), window)?;
    let mut worst = (Rational::zero(), t.top());
    for y in t.ids() {
        let r = mw.value(y) / w.value(y);
        if r > worst.0 {
            worst = (r, y);
        }
    }
    let holds = ConstantValue::Exact(worst.0.clone()).certainly_le(&a1);
    Ok(A1Pointwise { a1_constant: a1, worst_ratio: worst.0, worst_vertex: worst.1, holds })
}

/// Test functions for operator-norm estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleFunction {
    Constant {
        #[serde(with = "crate::numeric::rational_serde")]
        value: Rational,
    },
    PointMass {
        vertex: VertexId,
    },
    Indicator {
        trapezoid: Trapezoid,
    },
    /// `w^{-1/(p-1)} χ_R`, the extremal function of the A_p condition.
    Adversarial {
        trapezoid: Trapezoid,
    },
    /// `±1` with one random sign per level.
    RandomPm1 {
        seed: u64,
    },
    Custom {
        #[serde(with = "rational_vec_serde")]
        values: Vec<Rational>,
    },
}

impl SampleFunction {
    pub fn name(&self) -> String {
        match self {
            SampleFunction::Constant { value } => format!("constant {value}"),
            SampleFunction::PointMass { vertex } => format!("point-mass {vertex}"),
            SampleFunction::Indicator { trapezoid } => format!("indicator {trapezoid}"),
            SampleFunction::Adversarial { trapezoid } => format!("adversarial {trapezoid}"),
            SampleFunction::RandomPm1 { seed } => format!("random-pm1 {seed}"),
            SampleFunction::Custom { .. } => "custom".to_string(),
        }
    }

    /// Vertex values; the adversarial sample is rounded to a rational when the
    /// exponent is not an integer (any positive function gives a valid lower bound).
    pub fn materialize(&self, m: &FlowMeasure, w: &Weight, p: &Rational) -> Result<Vec<Rational>> {
        let t = m.tree();
        let n = t.len();
        Ok(match self {
            SampleFunction::Constant { value } => vec![value.clone(); n],
            SampleFunction::PointMass { vertex } => {
                t.check(*vertex)?;
                let mut v = vec![Rational::zero(); n];
                v[vertex.idx()] = Rational::one();
                v
            }
            SampleFunction::Indicator { trapezoid } => {
                let mut v = vec![Rational::zero(); n];
                for y in trapezoid.members(t)? {
                    v[y.idx()] = Rational::one();
                }
                v
            }
            SampleFunction::Adversarial { trapezoid } => {
                let e = -(Rational::one() / (p - Rational::one()));
                let mut v = vec![Rational::zero(); n];
                for y in trapezoid.members(t)? {
                    v[y.idx()] = if e.is_integer() {
                        crate::numeric::pow_i(w.value(y), e.to_integer().to_i64().ok_or_else(|| invalid("exponent too large"))?)
                    } else {
                        let x = Interval::from_rational(w.value(y)).pow_rational(&e)?.mid();
                        Rational::from_float(x).ok_or_else(|| FlowError::Numeric("adversarial sample overflows".into()))?
                    };
                }
                v
            }
            SampleFunction::RandomPm1 { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let (top, bot) = (t.level_top(), t.level_bot());
                let signs: Vec<i64> = (bot..=top).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
                t.ids().map(|y| int(signs[(t.level(y) - bot) as usize])).collect()
            }
            SampleFunction::Custom { values } => {
                check_len(t, values)?;
                values.clone()
            }
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OpNormRow {
    pub sample: String,
    /// `‖M f‖^p / ‖f‖^p` in `L^p_μ(w)`.
    pub ratio_pow_p: ConstantValue,
    pub ratio: ConstantValue,
}

#[derive(Clone, Debug, Serialize)]
pub struct OpNormReport {
    #[serde(with = "crate::numeric::rational_serde")]
    pub p: Rational,
    /// Largest sample ratio: a lower bound for the operator norm.
    pub norm_lower_bound: ConstantValue,
    pub best_sample: String,
    pub rows: Vec<OpNormRow>,
}

fn lp_mass(vals: &[Rational], w: &Weight, m: &FlowMeasure, p: &Rational) -> Result<ConstantValue> {
    let mut acc = ConstantValue::Exact(Rational::zero());
    for (i, v) in vals.iter().enumerate() {
        if v.is_zero() {
            continue;
        }
        let y = VertexId(i as u32);
        let term = ConstantValue::Exact(v.abs()).pow(p)?.mul(&ConstantValue::Exact(w.value(y) * m.value(y)));
        acc = acc.add(&term);
    }
    Ok(acc)
}

/// Default sample family: constants, point masses along a leftmost chain,
/// trapezoid indicators at the top, a level-sign function, and the
/// adversarial function on the argmax of `[w]_{A_p}`.
pub fn default_samples(m: &FlowMeasure, w: &Weight, p: &Rational, window: &Window) -> Result<Vec<SampleFunction>> {
    let t = m.tree();
    let mut out = vec![SampleFunction::Constant { value: Rational::one() }];
    let mut chain = vec![t.top()];
    while let Some(c) = t.succ(*chain.last().unwrap()).first() {
        chain.push(*c);
    }
    for k in [0, chain.len() / 2, chain.len() - 1] {
        out.push(SampleFunction::PointMass { vertex: chain[k] });
    }
    let fit = t.fit_height(t.top());
    for h2 in [2u32, 3, 4] {
        if h2 <= fit {
            out.push(SampleFunction::Indicator { trapezoid: Trapezoid { root: t.top(), h1: 1, h2 } });
        }
    }
    out.push(SampleFunction::RandomPm1 { seed: 7 });
    if *p > Rational::one() {
        let arg = ap_constant(w, m, window, p, Backend::Exact)?.argmax_trapezoid;
        out.push(SampleFunction::Adversarial { trapezoid: arg });
    }
    Ok(out)
}

/// Largest `‖M_μ f‖_{L^p_μ(w)}/‖f‖_{L^p_μ(w)}` over the samples.
pub fn lp_operator_norm(
    m: &FlowMeasure,
    w: &Weight,
    p: &Rational,
    samples: &[SampleFunction],
    window: &Window,
) -> Result<OpNormReport> {
    if *p < Rational::one() {
        return Err(invalid("p must be at least 1"));
    }
    let t = m.tree();
    w.check_tree(t)?;
    let inv = Rational::one() / p;
    let mut rows = Vec::new();
    for s in samples {
        let f = s.materialize(m, w, p)?;
        let den = lp_mass(&f, w, m, p)?;
        if den.hi() <= 0.0 {
            continue;
        }
        let mf = maximal_function(m, &f, window)?;
        let num = lp_mass(&mf.values, w, m, p)?;
        let ratio_pow_p = num.div(&den)?.clamp_below(1.0);
        let ratio = ratio_pow_p.pow(&inv)?.clamp_below(1.0);
        rows.push(OpNormRow { sample: s.name(), ratio_pow_p, ratio });
    }
    let best = rows
        .iter()
        .max_by(|a, b| a.ratio_pow_p.rank_cmp(&b.ratio_pow_p))
        .ok_or_else(|| invalid("no nonzero sample function"))?;
    Ok(OpNormReport {
        p: p.clone(),
        norm_lower_bound: best.ratio.clone(),
        best_sample: best.sample.clone(),
        rows: rows.clone(),
    })
}
