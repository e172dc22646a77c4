//! Scenario files, verification suites and run reports.
//!
//! A scenario names a tree, a measure, a list of weights and the suites to
//! run. Reports are deterministic: the same scenario always serializes to the
//! same bytes. Wall-clock timings are returned separately.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, FlowError, Result};
use crate::maps;
use crate::maximal::{
    a1_pointwise_check, assumption1_check, certify_split_rule, cz_decompose, cz_decompose_weighted, default_samples,
    lp_operator_norm, maximal_function, weak11_constant, MaximalKind,
};
use crate::measure::FlowMeasure;
use crate::numeric::{int, ratio, rational_serde, rational_vec_serde, ConstantValue, Rational};
use crate::trapezoid::{check_lemma_intersection, intersects, vitali_select, Beta, EnvelopeCover, Trapezoid, Window};
use crate::tree::{SuccCounts, TruncatedTree, VertexId};
use crate::weights::{
    a1_constant, ainfty_constant, ap_constant, ap_product, bmo_log_weight_check, bmo_norm, dyadic_grid,
    openness_check, reverse_holder_search, sparse_slab_counts, thainf_condition_iii_check, thainf_condition_iv_check,
    theorem_th01_check, theorem_th1_check, weighted_reverse_holder, Backend, LevelWeight, SubsetSampler,
    VertexFunction, Weight,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TreeSpec {
    HomogeneousSlab {
        q: u32,
        level_top: i64,
        #[serde(default)]
        level_bot: i64,
    },
    GeneralSlab {
        succ_counts: Vec<u32>,
        /// Counts are per vertex in construction order instead of per level.
        #[serde(default)]
        per_vertex: bool,
        level_top: i64,
        #[serde(default)]
        level_bot: i64,
    },
    Ball {
        q: u32,
        radius: u32,
    },
}

impl TreeSpec {
    pub fn build(&self) -> Result<TruncatedTree> {
        match self {
            TreeSpec::HomogeneousSlab { q, level_top, level_bot } => TruncatedTree::homogeneous_slab(*q, *level_top, *level_bot),
            TreeSpec::GeneralSlab { succ_counts, per_vertex, level_top, level_bot } => {
                let c = if *per_vertex {
                    SuccCounts::PerVertex(succ_counts.clone())
                } else {
                    SuccCounts::PerLevel(succ_counts.clone())
                };
                TruncatedTree::general_slab(&c, *level_top, *level_bot)
            }
            TreeSpec::Ball { q, radius } => TruncatedTree::ball(*q, *radius),
        }
    }

    /// Same family at another depth (slab height or ball radius).
    pub fn with_depth(&self, depth: u32) -> TreeSpec {
        match self.clone() {
            TreeSpec::HomogeneousSlab { q, level_bot, .. } => {
                TreeSpec::HomogeneousSlab { q, level_top: level_bot + depth as i64, level_bot }
            }
            TreeSpec::GeneralSlab { succ_counts, per_vertex, level_bot, .. } => {
                TreeSpec::GeneralSlab { succ_counts, per_vertex, level_top: level_bot + depth as i64, level_bot }
            }
            TreeSpec::Ball { q, .. } => TreeSpec::Ball { q, radius: depth },
        }
    }

    pub fn depth(&self) -> u32 {
        match self {
            TreeSpec::HomogeneousSlab { level_top, level_bot, .. } | TreeSpec::GeneralSlab { level_top, level_bot, .. } => {
                (level_top - level_bot).max(0) as u32
            }
            TreeSpec::Ball { radius, .. } => *radius,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureSpec {
    #[default]
    Canonical,
    /// Flow aggregated from bottom values; all ones when `values` is empty.
    BottomValues {
        #[serde(default, with = "rational_vec_serde")]
        values: Vec<Rational>,
    },
}

impl MeasureSpec {
    pub fn build(&self, t: Arc<TruncatedTree>) -> Result<FlowMeasure> {
        match self {
            MeasureSpec::Canonical => FlowMeasure::canonical(t),
            MeasureSpec::BottomValues { values } => {
                let n = t.bottom_vertices().len();
                if values.is_empty() {
                    FlowMeasure::from_bottom(t, &vec![Rational::one(); n])
                } else {
                    FlowMeasure::from_bottom(t, values)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKind {
    Constant {
        #[serde(with = "rational_serde")]
        value: Rational,
    },
    /// `W(ℓ) = pattern[ℓ mod len]`.
    Periodic {
        #[serde(with = "rational_vec_serde")]
        pattern: Vec<Rational>,
    },
    /// `W(ℓ) = base^ℓ`.
    Power {
        #[serde(with = "rational_serde")]
        base: Rational,
    },
    Values {
        #[serde(with = "rational_vec_serde")]
        values: Vec<Rational>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: WeightKind,
}

impl WeightSpec {
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            WeightKind::Constant { value } => format!("constant {value}"),
            WeightKind::Periodic { pattern } => {
                format!("periodic {}", pattern.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","))
            }
            WeightKind::Power { base } => format!("power {base}"),
            WeightKind::Values { .. } => "values".to_string(),
        }
    }

    pub fn level_weight(&self) -> Result<Option<LevelWeight>> {
        Ok(match &self.kind {
            WeightKind::Constant { value } => Some(LevelWeight::periodic(vec![value.clone()])?),
            WeightKind::Periodic { pattern } => Some(LevelWeight::periodic(pattern.clone())?),
            WeightKind::Power { base } => Some(LevelWeight::power(base.clone())?),
            WeightKind::Values { .. } => None,
        })
    }

    pub fn build(&self, t: &TruncatedTree) -> Result<Weight> {
        match &self.kind {
            WeightKind::Constant { value } => Weight::constant(t, value.clone()),
            WeightKind::Values { values } => {
                let w = Weight::from_values(values.clone())?;
                w.check_tree(t)?;
                Ok(w)
            }
            _ => Ok(Weight::from_level(t, &self.level_weight()?.expect("level weight"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Flow,
    Trapezoids,
    Ap,
    Ainfty,
    ReverseHolder,
    Bmo,
    Th01,
    Th1,
    Maximal,
    Cz,
    Maps,
    Counterexample,
}

impl Suite {
    pub const ALL: [Suite; 12] = [
        Suite::Flow,
        Suite::Trapezoids,
        Suite::Ap,
        Suite::Ainfty,
        Suite::ReverseHolder,
        Suite::Bmo,
        Suite::Th01,
        Suite::Th1,
        Suite::Maximal,
        Suite::Cz,
        Suite::Maps,
        Suite::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Flow => "flow",
            Suite::Trapezoids => "trapezoids",
            Suite::Ap => "ap",
            Suite::Ainfty => "ainfty",
            Suite::ReverseHolder => "reverse-holder",
            Suite::Bmo => "bmo",
            Suite::Th01 => "th01",
            Suite::Th1 => "th1",
            Suite::Maximal => "maximal",
            Suite::Cz => "cz",
            Suite::Maps => "maps",
            Suite::Counterexample => "counterexample",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapsSpec {
    #[serde(default = "two")]
    pub q: u32,
    #[serde(default = "four")]
    pub radius: u32,
    #[serde(default = "fifty")]
    pub automorphisms: usize,
    /// Depth of the slab carrying automorphisms and bounded shifts.
    #[serde(default = "four")]
    pub slab_depth: u32,
    /// Largest `n` in the counterexample table.
    #[serde(default = "five")]
    pub n_max: u32,
}

fn two() -> u32 {
    2
}
fn four() -> u32 {
    4
}
fn five() -> u32 {
    5
}
fn fifty() -> usize {
    50
}

impl Default for MapsSpec {
    fn default() -> Self {
        MapsSpec { q: 2, radius: 4, automorphisms: 50, slab_depth: 4, n_max: 5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Per-trapezoid A_p products for the first weight and exponent.
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub tree: TreeSpec,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default = "default_weights")]
    pub weights: Vec<WeightSpec>,
    #[serde(default = "default_beta")]
    pub beta: u32,
    #[serde(default = "default_p", with = "rational_vec_serde")]
    pub p: Vec<Rational>,
    /// Depth sweep; empty means the tree exactly as given.
    #[serde(default)]
    pub depths: Vec<u32>,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub maps: MapsSpec,
    /// Seeded CZ instances per depth.
    #[serde(default = "default_cz_instances")]
    pub cz_instances: usize,
    /// Height cap of the window used by the envelope-doubling suite.
    #[serde(default = "default_th1_max_h2")]
    pub th1_max_h2: u32,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_weights() -> Vec<WeightSpec> {
    vec![WeightSpec { name: None, kind: WeightKind::Constant { value: int(1) } }]
}
fn default_beta() -> u32 {
    Beta::default().get()
}
fn default_p() -> Vec<Rational> {
    vec![int(2)]
}
fn default_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}
fn default_seed() -> u64 {
    0x5eed
}
fn default_cz_instances() -> usize {
    20
}
fn default_th1_max_h2() -> u32 {
    8
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FlowError::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn beta(&self) -> Result<Beta> {
        Beta::new(self.beta)
    }
}

/// One suite evaluated on one tree of the sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteRun {
    pub depth: u32,
    pub label: String,
    pub passed: bool,
    pub data: Value,
    /// Concrete counterexample object when `passed` is false.
    pub witness: Option<Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub runs: Vec<SuiteRun>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn failures(&self) -> impl Iterator<Item = (Suite, &SuiteRun)> {
        self.suites.iter().flat_map(|s| s.runs.iter().filter(|r| !r.passed).map(move |r| (s.suite, r)))
    }
}

/// A report and the wall-clock time per suite.
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Vec<(Suite, Duration)>,
}

struct Ctx<'a> {
    sc: &'a Scenario,
    depth: u32,
    m: FlowMeasure,
    beta: Beta,
}

impl Ctx<'_> {
    fn tree(&self) -> &Arc<TruncatedTree> {
        self.m.tree()
    }

    fn window(&self) -> Window {
        Window::full(self.beta)
    }

    fn run(&self, label: impl Into<String>, passed: bool, data: Value, witness: Option<Value>) -> SuiteRun {
        SuiteRun { depth: self.depth, label: label.into(), passed, data, witness: if passed { None } else { witness } }
    }

    fn weights(&self) -> Vec<(String, Result<Weight>)> {
        self.sc.weights.iter().map(|s| (s.label(), s.build(self.tree()))).collect()
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn err_run(depth: u32, label: impl Into<String>, e: &FlowError) -> SuiteRun {
    SuiteRun { depth, label: label.into(), passed: false, data: Value::Null, witness: Some(json!({ "error": e.to_string() })) }
}

fn per_weight(ctx: &Ctx, f: impl Fn(&str, &Weight) -> Result<SuiteRun>) -> Vec<SuiteRun> {
    ctx.weights()
        .into_iter()
        .map(|(label, w)| match w.and_then(|w| f(&label, &w)) {
            Ok(r) => r,
            Err(e) => err_run(ctx.depth, label, &e),
        })
        .collect()
}

fn suite_flow(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let t = ctx.tree();
    let m = &ctx.m;
    let check = m.validate();
    let mut conservation: Option<(VertexId, u32)> = None;
    if t.is_slab() {
        'outer: for x in t.ids() {
            for k in 1..=t.fit_height(x).saturating_sub(1) {
                if m.set_measure(&t.descendants_at(x, k)) != *m.value(x) {
                    conservation = Some((x, k));
                    break 'outer;
                }
            }
        }
    }
    let threshold = int(t.degree_bound().max(1) as i64);
    let doubling = m.doubling_report(&threshold);
    let passed = check.ok && conservation.is_none();
    let witness = check
        .first_violation
        .map(|v| json!({ "flow_violation": v }))
        .or(conservation.map(|(x, k)| json!({ "conservation_violation": { "vertex": x, "depth": k } })));
    Ok(vec![ctx.run(
        "measure",
        passed,
        json!({ "vertices": t.len(), "degree_bound": t.degree_bound(), "doubling": doubling }),
        witness,
    )])
}

fn suite_trapezoids(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let t = ctx.tree();
    let m = &ctx.m;
    let family: Vec<Trapezoid> = ctx.window().enumerate(t).collect();
    let lstv: Vec<(usize, Option<(Trapezoid, Trapezoid)>)> = family
        .par_iter()
        .map(|r1| {
            let mut n = 0;
            for r2 in &family {
                if m.value(r1.root) < m.value(r2.root) || !intersects(t, r1, r2) {
                    continue;
                }
                n += 1;
                if !check_lemma_intersection(ctx.beta, r1, r2, m).unwrap_or(false) {
                    return (n, Some((*r1, *r2)));
                }
            }
            (n, None)
        })
        .collect();
    let pairs: usize = lstv.iter().map(|r| r.0).sum();
    let lstv_witness = lstv.iter().find_map(|r| r.1);
    let mut covers = 0usize;
    let mut cover_witness = None;
    for r in family.iter().filter(|r| !r.is_singleton()) {
        let c = EnvelopeCover::new(ctx.beta, r)?;
        covers += 1;
        if !(c.covers && c.pieces_admissible && c.deep_overlap_bound_holds(ctx.beta)) && cover_witness.is_none() {
            cover_witness = Some(c);
        }
    }
    let env_family: Vec<Trapezoid> = Window::with_envelopes(ctx.beta).enumerate(t).collect();
    let vitali = vitali_select(ctx.beta, m, &env_family);
    let vitali_ok = vitali.all_covered();
    let vitali_witness = vitali.covered_by.iter().find(|(_, c)| c.is_none()).map(|(r, _)| *r);
    let mut runs = vec![
        ctx.run(
            "intersection lemma",
            lstv_witness.is_none(),
            json!({ "pairs": pairs }),
            lstv_witness.map(|(a, b)| json!({ "r1": a, "r2": b })),
        ),
        ctx.run("envelope cover", cover_witness.is_none(), json!({ "covers_checked": covers }), cover_witness.map(|c| to_value(&c))),
    ];
    runs.push(ctx.run(
        "vitali",
        vitali_ok,
        json!({ "family": env_family.len(), "selected": vitali.selected.len() }),
        vitali_witness.map(|r| to_value(&r)),
    ));
    Ok(runs)
}

fn suite_ap(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let m = &ctx.m;
    let win = ctx.window();
    let mut runs = Vec::new();
    for p in &ctx.sc.p {
        runs.extend(per_weight(ctx, |label, w| {
            let rep = ap_constant(w, m, &win, p, ctx.sc.backend)?;
            let scaled = ap_constant(&w.scaled(&int(3))?, m, &win, p, ctx.sc.backend)?;
            let a1 = a1_constant(w, m, &win)?;
            let scale_ok = scaled.constant == rep.constant && scaled.argmax_trapezoid == rep.argmax_trapezoid;
            let below_a1 = rep.constant.certainly_le(&a1.constant) || rep.constant.lo() <= a1.constant.hi();
            let at_least_one = ConstantValue::one().certainly_le(&rep.constant) || rep.constant.hi() >= 1.0;
            let passed = scale_ok && below_a1 && at_least_one;
            let witness = json!({ "argmax": rep.argmax_trapezoid, "scaled_argmax": scaled.argmax_trapezoid });
            Ok(ctx.run(
                format!("{label} p={p}"),
                passed,
                json!({ "ap": rep, "a1": a1.constant, "a1_argmax": a1.argmax_trapezoid, "scale_invariant": scale_ok, "below_a1": below_a1 }),
                Some(witness),
            ))
        }));
    }
    Ok(runs)
}

fn gammas() -> Vec<Rational> {
    (1..=6).map(|k| ratio(1, 1 << k)).collect()
}

fn suite_ainfty(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let m = &ctx.m;
    let win = ctx.window();
    let sampler = SubsetSampler { seed: ctx.sc.seed, ..SubsetSampler::default() };
    Ok(per_weight(ctx, |label, w| {
        let rep = ainfty_constant(w, m, &win, &ctx.sc.p)?;
        let iii = thainf_condition_iii_check(w, m, &win, &gammas())?;
        let iv = thainf_condition_iv_check(w, m, &win, &ratio(1, 2), &sampler)?;
        let below = rep.comparisons.iter().all(|c| c.ainfty_below);
        let passed = below && iii.non_increasing && iii.all_within_bound && iv.below_one && iv.within_pre_reverse;
        let witness = json!({ "argmax": rep.argmax_trapezoid, "worst_subset": iv.worst });
        Ok(ctx.run(label, passed, json!({ "ainfty": rep, "condition_iii": iii, "condition_iv": iv }), Some(witness)))
    }))
}

fn suite_reverse_holder(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let m = &ctx.m;
    let win = ctx.window();
    let grid = dyadic_grid(10);
    let cap = int(64);
    let rule = certify_split_rule(m, &win)?;
    let sampler = SubsetSampler { seed: ctx.sc.seed, ..SubsetSampler::default() };
    Ok(per_weight(ctx, |label, w| {
        let rh = reverse_holder_search(w, m, &win, &grid, &cap)?;
        let mut data = json!({ "reverse_holder": rh });
        let mut passed = rh.eps.is_some();
        if w.is_constant() {
            passed &= rh.c == ConstantValue::one();
        }
        if let Some(eps) = &rh.eps {
            let p = ctx.sc.p.first().cloned().unwrap_or_else(|| int(2));
            let open = openness_check(w, m, &win, &p, eps)?;
            passed &= open.holds;
            data["openness"] = to_value(&open);
        }
        let a1 = assumption1_check(m, w, &rule, &win, &sampler, &Rational::zero())?;
        if a1.passes {
            let wrh = weighted_reverse_holder(w, m, &win, &grid, &cap)?;
            passed &= wrh.eps.is_some();
            data["weighted_reverse_holder"] = to_value(&wrh);
        }
        data["assumption1"] = to_value(&a1);
        let witness = rh.series.last().map(|r| json!({ "eps": r.eps.to_string(), "argmax": r.argmax }));
        Ok(ctx.run(label, passed, data, witness))
    }))
}

fn suite_bmo(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let m = &ctx.m;
    let win = ctx.window();
    let n = ctx.tree().len();
    let zero = bmo_norm(&VertexFunction::Exact(vec![int(5); n]), m, &win)?;
    let mut runs = vec![ctx.run(
        "constant function",
        zero.norm == ConstantValue::Exact(Rational::zero()),
        to_value(&zero),
        Some(to_value(&zero.argmax_trapezoid)),
    )];
    runs.extend(per_weight(ctx, |label, w| {
        let c = bmo_log_weight_check(w, m, &win)?;
        let witness = json!({ "argmax": c.argmax_trapezoid });
        Ok(ctx.run(format!("log {label}"), c.jensen_bound_holds, to_value(&c), Some(witness)))
    }));
    Ok(runs)
}

fn suite_th01(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let t = ctx.tree();
    let Some(q) = t.q().filter(|_| t.is_slab()) else {
        return Ok(vec![ctx.run("skipped", true, json!({ "skipped": "needs a homogeneous slab" }), None)]);
    };
    let mut runs = Vec::new();
    for p in &ctx.sc.p {
        for spec in &ctx.sc.weights {
            let label = format!("{} p={p}", spec.label());
            let run = spec.level_weight().and_then(|lw| match lw {
                None => Ok(ctx.run(label.clone(), true, json!({ "skipped": "not a level weight" }), None)),
                Some(lw) => {
                    let c = theorem_th01_check(&lw, q, p, ctx.depth, ctx.beta)?;
                    let witness = json!({ "tree_argmax": c.tree_argmax, "interval_argmax": c.interval_argmax, "mismatches": c.product_mismatches });
                    Ok(ctx.run(label.clone(), c.equal, to_value(&c), Some(witness)))
                }
            });
            runs.push(run.unwrap_or_else(|e| err_run(ctx.depth, label, &e)));
        }
    }
    Ok(runs)
}

fn suite_th1(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let win = Window { beta: ctx.beta, envelope_fit: false, max_h2: Some(ctx.sc.th1_max_h2) };
    let mut runs = Vec::new();
    for p in &ctx.sc.p {
        runs.extend(per_weight(ctx, |label, w| match theorem_th1_check(w, &ctx.m, &win, p) {
            Ok(c) => {
                let witness = json!({ "argmax": c.argmax, "failures": c.per_trapezoid_failures });
                Ok(ctx.run(format!("{label} p={p}"), c.holds, to_value(&c), Some(witness)))
            }
            Err(FlowError::WindowTooSmall(why)) => {
                Ok(ctx.run(format!("{label} p={p}"), true, json!({ "skipped": why }), None))
            }
            Err(e) => Err(e),
        }));
    }
    Ok(runs)
}

fn suite_maximal(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let t = ctx.tree();
    let m = &ctx.m;
    let win = ctx.window();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.sc.seed);
    let f: Vec<Rational> = t.ids().map(|_| int(rng.gen_range(-3..=3))).collect();
    let field = maximal_function(m, &f, &win)?;
    let mut mismatch = None;
    for _ in 0..t.len().min(200) {
        let y = VertexId(rng.gen_range(0..t.len() as u32));
        let mut best = Rational::zero();
        for r in win.containing(t, y) {
            let mem = r.members(t)?;
            let s = mem.iter().fold(Rational::zero(), |a, z| a + f[z.idx()].abs() * m.value(*z));
            let avg = s / m.set_measure(&mem);
            if avg > best {
                best = avg;
            }
        }
        if best != *field.value(y) {
            mismatch = Some(y);
            break;
        }
    }
    let mut runs = vec![ctx.run(
        "prefix field vs brute force",
        mismatch.is_none(),
        json!({ "sampled": t.len().min(200) }),
        mismatch.map(|y| json!({ "vertex": y })),
    )];
    let grid: Vec<Rational> = (0..4).map(|k| ratio(1, 1 << k)).collect();
    let p = ctx.sc.p.first().cloned().unwrap_or_else(|| int(2));
    runs.extend(per_weight(ctx, |label, w| {
        let a1 = a1_pointwise_check(m, w, &win)?;
        let weak = weak11_constant(m, w, &f, &grid, MaximalKind::Plain, &win)?;
        let samples = default_samples(m, w, &p, &win)?;
        let op = lp_operator_norm(m, w, &p, &samples, &win)?;
        let witness = json!({ "vertex": a1.worst_vertex });
        Ok(ctx.run(label, a1.holds, json!({ "a1_pointwise": a1, "weak11": weak, "operator_norm": op }), Some(witness)))
    }));
    Ok(runs)
}

fn suite_cz(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let t = ctx.tree();
    let m = &ctx.m;
    let win = ctx.window();
    let rule = certify_split_rule(m, &win)?;
    let roots: Vec<Trapezoid> = win.enumerate(t).filter(|r| !r.is_singleton()).collect();
    let mut runs = vec![ctx.run("split rule", rule.all_partitions, to_value(&rule), Some(to_value(&rule.witness)))];
    if roots.is_empty() {
        return Ok(runs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.sc.seed);
    let mut instances = Vec::new();
    for _ in 0..ctx.sc.cz_instances {
        let r0 = roots[rng.gen_range(0..roots.len())];
        let f: Vec<Rational> = t.ids().map(|_| int(rng.gen_range(0..=8))).collect();
        let mem = r0.members(t)?;
        let avg = mem.iter().fold(Rational::zero(), |a, z| a + &f[z.idx()] * m.value(*z)) / m.set_measure(&mem);
        let lambda = (avg + Rational::one()) * ratio(rng.gen_range(4..=12), 4);
        instances.push((r0, f, lambda));
    }
    let mut failed = None;
    let mut pieces = 0usize;
    for (r0, f, lambda) in &instances {
        let fam = cz_decompose(m, &rule, f, lambda, r0, &win)?;
        pieces += fam.pieces.len();
        if !(fam.properties.all() && fam.residual_ok) && failed.is_none() {
            failed = Some(fam);
        }
    }
    runs.push(ctx.run(
        "decompositions",
        failed.is_none(),
        json!({ "instances": instances.len(), "pieces": pieces, "d_cz": rule.d_cz.to_string() }),
        failed.map(|f| to_value(&f)),
    ));
    let sampler = SubsetSampler { seed: ctx.sc.seed, ..SubsetSampler::default() };
    runs.extend(per_weight(ctx, |label, w| {
        let a = assumption1_check(m, w, &rule, &win, &sampler, &Rational::zero())?;
        if !a.passes {
            return Ok(ctx.run(format!("weighted {label}"), true, json!({ "assumption1": a, "skipped": "assumption fails" }), None));
        }
        let (r0, f, lambda) = &instances[0];
        let wmem = r0.members(t)?;
        let wavg = w.weighted_measure(m, &wmem);
        let num = wmem.iter().fold(Rational::zero(), |acc, z| acc + &f[z.idx()] * w.value(*z) * m.value(*z));
        let lam = (num / wavg + Rational::one()).max(lambda.clone());
        let fam = cz_decompose_weighted(m, w, &rule, f, &lam, r0, &win, &sampler)?;
        let ok = fam.properties.all() && fam.residual_ok;
        Ok(ctx.run(format!("weighted {label}"), ok, json!({ "assumption1": a, "family": fam }), Some(json!({ "root": r0 }))))
    }));
    Ok(runs)
}

fn suite_maps(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let ms = &ctx.sc.maps;
    let f = maps::reflection_isometry(ms.q, ms.radius)?;
    let iso = maps::d_isometry_check(&f)?;
    let mut runs = vec![ctx.run(
        "reflection",
        iso.is_isometry,
        json!({ "vertices": f.tree().len(), "check": iso }),
        iso.witness.map(|w| to_value(&w)),
    )];
    let t = Arc::new(TruncatedTree::homogeneous_slab(ms.q, ms.slab_depth as i64, 0)?);
    let m = FlowMeasure::canonical(t.clone())?;
    let mut gromov_fail = None;
    let mut bil_fail = None;
    for k in 0..ms.automorphisms {
        let a = maps::random_automorphism(t.clone(), ctx.sc.seed.wrapping_add(k as u64))?;
        let g = maps::gromov_isometry_check(&a)?;
        if !(g.rho_isometry && g.consistent) && gromov_fail.is_none() {
            gromov_fail = Some(json!({ "seed": ctx.sc.seed.wrapping_add(k as u64), "pair": g.rho_witness }));
        }
        let b = maps::bilipschitz_diagnostics(&a, &m, None)?;
        if !(b.c == 0 && b.quasi_isometry_defect == 0) && bil_fail.is_none() {
            bil_fail = Some(json!({ "automorphism_seed": ctx.sc.seed.wrapping_add(k as u64), "report": b }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.sc.seed);
    // A bottom vertex swapped with its parent keeps every confluent on the truncation.
    let interior: Vec<VertexId> = t.ids().filter(|x| t.pred(*x).is_some() && !t.is_bottom(*x)).collect();
    let mut shifts = Vec::new();
    for _ in 0..ms.automorphisms {
        let x = interior[rng.gen_range(0..interior.len())];
        let s = maps::parent_swaps(t.clone(), &[x])?;
        let b = maps::bilipschitz_diagnostics(&s, &m, None)?;
        let g = maps::gromov_isometry_check(&s)?;
        if !(b.holds && g.consistent) && bil_fail.is_none() {
            bil_fail = Some(json!({ "swap": x, "report": b }));
        }
        shifts.push(b.c);
    }
    runs.push(ctx.run(
        "automorphisms",
        gromov_fail.is_none(),
        json!({ "count": ms.automorphisms, "slab_depth": ms.slab_depth }),
        gromov_fail,
    ));
    runs.push(ctx.run(
        "bilipschitz",
        bil_fail.is_none(),
        json!({ "bounded_shifts": shifts.len(), "max_c": shifts.iter().max() }),
        bil_fail,
    ));
    Ok(runs)
}

fn suite_counterexample(ctx: &Ctx) -> Result<Vec<SuiteRun>> {
    let ms = &ctx.sc.maps;
    let c = maps::ainfty_failure_certificate(ms.q, 1..=ms.n_max)?;
    let witness = c.rows.iter().find(|r| !r.consistent).map(to_value);
    Ok(vec![ctx.run(format!("q={}", ms.q), c.all_consistent && c.monotone, to_value(&c), witness)])
}

fn run_suite(ctx: &Ctx, s: Suite) -> Vec<SuiteRun> {
    let r = match s {
        Suite::Flow => suite_flow(ctx),
        Suite::Trapezoids => suite_trapezoids(ctx),
        Suite::Ap => suite_ap(ctx),
        Suite::Ainfty => suite_ainfty(ctx),
        Suite::ReverseHolder => suite_reverse_holder(ctx),
        Suite::Bmo => suite_bmo(ctx),
        Suite::Th01 => suite_th01(ctx),
        Suite::Th1 => suite_th1(ctx),
        Suite::Maximal => suite_maximal(ctx),
        Suite::Cz => suite_cz(ctx),
        Suite::Maps => suite_maps(ctx),
        Suite::Counterexample => suite_counterexample(ctx),
    };
    r.unwrap_or_else(|e| vec![err_run(ctx.depth, s.name(), &e)])
}

// Suites that do not depend on the scenario tree run once.
fn tree_independent(s: Suite) -> bool {
    matches!(s, Suite::Maps | Suite::Counterexample)
}

/// Executes every selected suite over the depth sweep.
pub fn execute(sc: &Scenario) -> Result<RunOutcome> {
    let beta = sc.beta()?;
    if sc.p.iter().any(|p| *p <= Rational::one()) {
        return Err(invalid("every exponent p must exceed 1"));
    }
    let specs: Vec<TreeSpec> =
        if sc.depths.is_empty() { vec![sc.tree.clone()] } else { sc.depths.iter().map(|d| sc.tree.with_depth(*d)).collect() };
    let mut ctxs = Vec::new();
    for spec in specs {
        let t = Arc::new(spec.build()?);
        let m = sc.measure.build(t)?;
        ctxs.push(Ctx { sc, depth: spec.depth(), m, beta });
    }
    let mut suites = sc.suites.clone();
    suites.sort();
    suites.dedup();
    let results: Vec<(Suite, Vec<SuiteRun>, Duration)> = suites
        .par_iter()
        .map(|&s| {
            let start = Instant::now();
            let runs: Vec<SuiteRun> = if tree_independent(s) {
                run_suite(&ctxs[0], s)
            } else {
                ctxs.iter().flat_map(|c| run_suite(c, s)).collect()
            };
            (s, runs, start.elapsed())
        })
        .collect();
    let mut timings = Vec::new();
    let mut reports = Vec::new();
    for (s, runs, d) in results {
        timings.push((s, d));
        reports.push(SuiteReport { suite: s, passed: runs.iter().all(|r| r.passed), runs });
    }
    let passed = reports.iter().all(|r| r.passed);
    Ok(RunOutcome { report: RunReport { seed: sc.seed, passed, suites: reports }, timings })
}

/// Per-trapezoid A_p products of the first weight and exponent, as CSV.
pub fn ap_table_csv(sc: &Scenario) -> Result<String> {
    let t = Arc::new(sc.tree.build()?);
    let m = sc.measure.build(t.clone())?;
    let spec = sc.weights.first().ok_or_else(|| invalid("scenario has no weights"))?;
    let w = spec.build(&t)?;
    let p = sc.p.first().ok_or_else(|| invalid("scenario has no exponents"))?;
    let mut out = String::from("root,level,h1,h2,mu,product_lo,product_hi\n");
    for r in Window::full(sc.beta()?).enumerate(&t) {
        let v = ap_product(&w, &m, p, &r)?;
        let mu = if r.is_singleton() { m.value(r.root).clone() } else { r.measure(&m)? };
        out.push_str(&format!("{},{},{},{},{},{},{}\n", r.root, t.level(r.root), r.h1, r.h2, mu, v.lo(), v.hi()));
    }
    Ok(out)
}

/// Loads, executes and writes the configured outputs of a scenario file.
pub fn run_scenario(path: &Path) -> Result<RunOutcome> {
    let sc = Scenario::load(path)?;
    let out = execute(&sc)?;
    if let Some(p) = &sc.output.report {
        std::fs::write(p, out.report.to_json())?;
    }
    if let Some(p) = &sc.output.csv {
        std::fs::write(p, ap_table_csv(&sc)?)?;
    }
    Ok(out)
}

/// The full property battery on a binary slab of the given depth.
pub fn verify_all(depth: u32) -> Result<RunOutcome> {
    if depth == 0 {
        return Err(invalid("depth must be at least 1"));
    }
    let sc = verify_scenario(depth);
    let mut out = execute(&sc)?;
    // The envelope-doubling suite needs covers that fit, which binary slabs
    // of desk depth never provide; it runs on a sparse deep slab instead.
    let th1 = Scenario {
        tree: TreeSpec::GeneralSlab {
            succ_counts: match sparse_slab_counts(120, 40) {
                SuccCounts::PerLevel(v) => v,
                SuccCounts::PerVertex(v) => v,
            },
            per_vertex: false,
            level_top: 120,
            level_bot: 0,
        },
        measure: MeasureSpec::BottomValues { values: Vec::new() },
        suites: vec![Suite::Th1],
        ..sc.clone()
    };
    let extra = execute(&th1)?;
    for s in extra.report.suites {
        out.report.suites.retain(|r| r.suite != s.suite);
        out.report.suites.push(s);
    }
    out.report.suites.sort_by_key(|s| s.suite);
    out.report.passed = out.report.suites.iter().all(|s| s.passed);
    out.timings.extend(extra.timings);
    Ok(out)
}

/// The scenario behind [`verify_all`].
pub fn verify_scenario(depth: u32) -> Scenario {
    let w = |name: &str, kind: WeightKind| WeightSpec { name: Some(name.into()), kind };
    Scenario {
        tree: TreeSpec::HomogeneousSlab { q: 2, level_top: depth as i64, level_bot: 0 },
        measure: MeasureSpec::Canonical,
        weights: vec![
            w("unit", WeightKind::Constant { value: int(1) }),
            w("alternating", WeightKind::Periodic { pattern: vec![int(2), int(1)] }),
            w("period-3", WeightKind::Periodic { pattern: vec![int(1), int(3), int(2)] }),
        ],
        beta: default_beta(),
        p: vec![int(2)],
        depths: Vec::new(),
        suites: default_suites(),
        seed: default_seed(),
        backend: Backend::Exact,
        maps: MapsSpec::default(),
        cz_instances: 100,
        th1_max_h2: default_th1_max_h2(),
        output: OutputSpec::default(),
    }
}
