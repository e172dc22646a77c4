//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p flowtree --test acceptance -- --nocapture` to see
//! the lines. Criterion 10 is a known failure: the stated inequality is false
//! for the alternating level weight (see `KNOWN_FAILURES`).

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use flowtree::maps;
use flowtree::maximal::{
    a1_pointwise_check, assumption1_check, certify_split_rule, cz_decompose, default_samples, lp_operator_norm,
    maximal_function,
};
use flowtree::numeric::{int, pow_i, ratio};
use flowtree::scenario::verify_all;
use flowtree::trapezoid::{check_lemma_intersection, intersects, Beta, EnvelopeCover, Trapezoid, Window};
use flowtree::weights::{
    a1_constant, ainfty_constant, ap_constant, ap_product, bmo_log_weight_check, bmo_norm, dyadic_grid,
    envelope_ratio, reverse_holder_search, sparse_slab_counts, thainf_condition_iii_check, thainf_condition_iv_check,
    theorem_th01_check, theorem_th1_check, weighted_reverse_holder, Backend, LevelWeight, SubsetSampler,
    VertexFunction, Weight,
};
use flowtree::{ConstantValue, FlowMeasure, Rational, SuccCounts, TruncatedTree, VertexId};

const KNOWN_FAILURES: &[u32] = &[10];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn slab(q: u32, depth: i64) -> (Arc<TruncatedTree>, FlowMeasure) {
    let t = Arc::new(TruncatedTree::homogeneous_slab(q, depth, 0).unwrap());
    let m = FlowMeasure::canonical(t.clone()).unwrap();
    (t, m)
}

fn sparse(depth: usize, gap: usize) -> (Arc<TruncatedTree>, FlowMeasure) {
    let t = Arc::new(TruncatedTree::general_slab(&sparse_slab_counts(depth, gap), depth as i64, 0).unwrap());
    let m = FlowMeasure::from_bottom(t.clone(), &vec![int(1); t.bottom_vertices().len()]).unwrap();
    (t, m)
}

fn periodic(t: &TruncatedTree, pat: &[i64]) -> Weight {
    Weight::from_level(t, &LevelWeight::periodic(pat.iter().map(|x| int(*x)).collect()).unwrap())
}

fn a2_patterns() -> Vec<Vec<i64>> {
    vec![vec![2, 1], vec![1, 3, 2], vec![1, 1, 4, 2]]
}

fn beta() -> Beta {
    Beta::default()
}

// Members of R_{h1}^{h2}(x) by walking successor lists level by level.
fn members(t: &TruncatedTree, r: &Trapezoid) -> Vec<VertexId> {
    let mut level = vec![r.root];
    let mut out = Vec::new();
    for k in 0..r.h2 {
        if k >= r.h1 {
            out.extend(level.iter().copied());
        }
        level = level.iter().flat_map(|v| t.succ(*v).iter().copied()).collect();
    }
    out
}

fn mass(m: &FlowMeasure, set: &[VertexId]) -> Rational {
    set.iter().fold(Rational::zero(), |a, v| a + m.value(*v))
}

fn c1_constant_weight() -> Outcome {
    let start = Instant::now();
    let c = ratio(7, 3);
    let mut ok = true;
    let mut n = 0;
    let counts = SuccCounts::PerLevel(vec![3, 1, 2, 2, 1, 2]);
    let gen = Arc::new(TruncatedTree::general_slab(&counts, 6, 0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bottoms: Vec<Rational> = gen.bottom_vertices().iter().map(|_| int(rng.gen_range(1..5))).collect();
    let cases = vec![slab(2, 6), slab(3, 4), (gen.clone(), FlowMeasure::from_bottom(gen.clone(), &bottoms).unwrap())];
    for (t, m) in &cases {
        let w = Weight::constant(t, c.clone()).unwrap();
        let win = Window::full(beta());
        for p in [ratio(3, 2), int(2), int(3)] {
            ok &= ap_constant(&w, m, &win, &p, Backend::Exact).unwrap().constant == ConstantValue::one();
            n += 1;
        }
        ok &= a1_constant(&w, m, &win).unwrap().constant == ConstantValue::one();
        ok &= ainfty_constant(&w, m, &win, &[int(2)]).unwrap().a_inf_constant == ConstantValue::one();
        ok &= bmo_log_weight_check(&w, m, &win).unwrap().bmo == ConstantValue::Exact(Rational::zero());
        let rh = reverse_holder_search(&w, m, &win, &dyadic_grid(10), &int(2)).unwrap();
        ok &= rh.series.len() == 11 && rh.series.iter().all(|r| r.c == ConstantValue::one());
        n += 4;
    }
    let el = start.elapsed();
    ok &= el < Duration::from_secs(1);
    Outcome { id: 1, pass: ok, detail: format!("{n} exact checks on 3 trees in {el:.2?}") }
}

// Interval product for a level weight: averages over levels ℓ−h2+1..ℓ−h1.
fn interval_product(w: &LevelWeight, top: i64, h1: u32, h2: u32) -> Rational {
    let n = int((h2 - h1) as i64);
    let levels: Vec<i64> = (h1..h2).map(|k| top - k as i64).collect();
    let a = levels.iter().fold(Rational::zero(), |s, l| s + w.at(*l)) / &n;
    let b = levels.iter().fold(Rational::zero(), |s, l| s + w.at(*l).recip()) / &n;
    a * b
}

fn c2_th01() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut lines = Vec::new();
    for (q, depth) in [(2u32, 12u32), (3, 8)] {
        for pat in a2_patterns() {
            let lw = LevelWeight::periodic(pat.iter().map(|x| int(*x)).collect()).unwrap();
            let c = theorem_th01_check(&lw, q, &int(2), depth, beta()).unwrap();
            ok &= c.equal && c.product_mismatches.is_empty() && c.tree_constant == c.interval_constant;
            lines.push(format!("T_{q} d{depth} {pat:?}: {}", c.tree_constant.approx()));
        }
    }
    // closed-form oracle for a few trapezoids on T_3
    let (t, m) = slab(3, 8);
    let lw = LevelWeight::periodic(vec![int(1), int(3), int(2)]).unwrap();
    let w = Weight::from_level(&t, &lw);
    for x in [VertexId(0), VertexId(1), VertexId(5)] {
        for (h1, h2) in [(1, 2), (1, 5), (2, 4), (3, 7)] {
            let r = Trapezoid::new(x, h1, h2).unwrap();
            if !r.fits(&t) {
                continue;
            }
            ok &= ap_product(&w, &m, &int(2), &r).unwrap() == ConstantValue::Exact(interval_product(&lw, t.level(x), h1, h2));
        }
    }
    let el = start.elapsed();
    ok &= el < Duration::from_secs(30);
    Outcome { id: 2, pass: ok, detail: format!("{} in {el:.2?}", lines.join("; ")) }
}

fn lstv_oracle(t: &TruncatedTree, r1: &Trapezoid, r2: &Trapezoid) -> bool {
    let env: BTreeSet<VertexId> = members(t, &r1.envelope(beta())).into_iter().collect();
    members(t, r2).iter().all(|y| env.contains(y))
}

fn c3_lstv() -> Outcome {
    let (t, m) = slab(2, 8);
    let win = Window::full(beta());
    let fam: Vec<Trapezoid> = win.enumerate(&t).collect();
    let res: Vec<(usize, usize)> = fam
        .par_iter()
        .map(|r1| {
            let (mut n, mut bad) = (0, 0);
            for r2 in &fam {
                if m.value(r1.root) < m.value(r2.root) || !intersects(&t, r1, r2) {
                    continue;
                }
                n += 1;
                if !check_lemma_intersection(beta(), r1, r2, &m).unwrap() {
                    bad += 1;
                }
            }
            (n, bad)
        })
        .collect();
    let pairs: usize = res.iter().map(|r| r.0).sum();
    let bad: usize = res.iter().map(|r| r.1).sum();

    let (t12, m12) = slab(2, 12);
    let fam12: Vec<Trapezoid> = win.enumerate(&t12).collect();
    let bad12: usize = (0..100_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let a = fam12[rng.gen_range(0..fam12.len())];
            let mem = members(&t12, &a);
            let y = mem[rng.gen_range(0..mem.len())];
            let cont = win.containing(&t12, y);
            let b = cont[rng.gen_range(0..cont.len())];
            let (r1, r2) = if m12.value(a.root) >= m12.value(b.root) { (a, b) } else { (b, a) };
            let lib = check_lemma_intersection(beta(), &r1, &r2, &m12).unwrap();
            // independent membership oracle on a sparse subsample
            let oracle_ok = i % 50 != 0 || lstv_oracle(&t12, &r1, &r2) == lib;
            usize::from(!lib || !oracle_ok)
        })
        .sum();
    Outcome {
        id: 3,
        pass: bad == 0 && bad12 == 0 && pairs > 0,
        detail: format!("depth 8: {pairs} ordered intersecting pairs, {bad} failures; depth 12: 100000 random pairs, {bad12} failures"),
    }
}

fn cover_oracle(t: &TruncatedTree, m: &FlowMeasure, r: &Trapezoid, c: &EnvelopeCover) -> bool {
    let union: BTreeSet<VertexId> = c.pieces.iter().flat_map(|(_, p)| members(t, p)).collect();
    let mut ok = members(t, &c.envelope).iter().all(|y| union.contains(y));
    if let (Some(r0), Some(r1)) = (c.piece("R0"), c.piece("R1")) {
        let s1: BTreeSet<VertexId> = members(t, r1).into_iter().collect();
        let inter: Vec<VertexId> = members(t, r0).into_iter().filter(|y| s1.contains(y)).collect();
        ok &= mass(m, &inter) * int(beta().get() as i64) >= m.value(r.root) * int(r.h1 as i64);
    }
    ok
}

fn c4_rtilde() -> Outcome {
    // deep covers reach about 36 (h1 + h2) levels, hence the tall sparse slab
    let (t, m) = sparse(400, 100);
    let win = Window::with_envelopes(beta());
    let (mut n, mut bad) = (0, 0);
    let (mut deep, mut other) = (Vec::new(), Vec::new());
    for r in win.enumerate(&t).filter(|r| !r.is_singleton()) {
        let c = EnvelopeCover::new(beta(), &r).unwrap();
        n += 1;
        let ok = c.covers && c.pieces_admissible && c.pieces.iter().all(|(_, p)| p.is_admissible(beta())) && c.deep_overlap_bound_holds(beta());
        bad += usize::from(!ok);
        if c.pieces.iter().all(|(_, p)| p.fits(&t)) {
            if c.piece("R0").is_some() {
                deep.push((r, c));
            } else {
                other.push((r, c));
            }
        }
    }
    // member-set oracle on a seeded sample of covers that fit
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sampled = 0;
    let mut oracle_bad = 0;
    for list in [&deep, &other] {
        for _ in 0..150.min(list.len()) {
            let (r, c) = &list[rng.gen_range(0..list.len())];
            sampled += 1;
            oracle_bad += usize::from(!cover_oracle(&t, &m, r, c));
        }
    }
    // abstract height cover on every admissible (h1, h2) with h2 <= 400
    let mut abstract_bad = 0;
    for h1 in 1..=200u32 {
        for h2 in 2 * h1..=(12 * h1).min(400) {
            let r = Trapezoid::new(VertexId(0), h1, h2).unwrap();
            let c = EnvelopeCover::new(beta(), &r).unwrap();
            let env = r.envelope(beta());
            let covered = (env.h1..env.h2).all(|k| c.pieces.iter().any(|(_, p)| p.h1 <= k && k < p.h2));
            abstract_bad += usize::from(!(covered && c.pieces_admissible && c.deep_overlap_bound_holds(beta())));
        }
    }
    Outcome {
        id: 4,
        pass: bad == 0 && oracle_bad == 0 && abstract_bad == 0 && !deep.is_empty(),
        detail: format!(
            "{n} in-window trapezoids, {bad} failures; member oracle on {sampled} fitting covers ({} deep available), {oracle_bad} failures; abstract heights: {abstract_bad} failures",
            deep.len()
        ),
    }
}

fn c5_th1() -> Outcome {
    let (t, m) = sparse(120, 40);
    let win = Window { beta: beta(), envelope_fit: false, max_h2: Some(8) };
    let mut ok = true;
    let mut parts = Vec::new();
    let mut weights = vec![("unit".to_string(), Weight::constant(&t, int(1)).unwrap())];
    for pat in a2_patterns() {
        weights.push((format!("{pat:?}"), periodic(&t, &pat)));
    }
    for (name, w) in &weights {
        let c = theorem_th1_check(w, &m, &win, &int(2)).unwrap();
        ok &= c.holds && c.checked > 0;
        parts.push(format!("{name}: {}<= {:.0}", c.max_ratio, c.bound.hi()));
    }
    let (pt, pm) = sparse(80, 100);
    let r = Trapezoid::new(pt.top(), 3, 6).unwrap();
    let got = envelope_ratio(&Weight::constant(&pt, int(1)).unwrap(), &pm, beta(), &r).unwrap();
    let b = beta().get() as i64;
    let oracle = ratio(6 * b - (3 + b - 1) / b, 3);
    ok &= got == oracle && got == ratio(71, 3);
    Outcome { id: 5, pass: ok, detail: format!("{}; R_3^6 ratio {got}", parts.join(", ")) }
}

fn c6_muckenhoupt() -> Outcome {
    // (a) nested family R_1^{n+1}(top) for W = 2^ℓ
    let (t, m) = slab(2, 12);
    let w = Weight::from_level(&t, &LevelWeight::power(int(2)).unwrap());
    let mut series = Vec::new();
    let mut a_ok = true;
    for n in 6..=12u32 {
        let r = Trapezoid::new(t.top(), 1, n + 1).unwrap();
        let v = ap_product(&w, &m, &int(2), &r).unwrap();
        let oracle = (pow_i(&int(2), n as i64) - int(1)) * (int(2) - pow_i(&int(2), 1 - n as i64)) / int((n * n) as i64);
        a_ok &= v == ConstantValue::Exact(oracle.clone());
        series.push(oracle);
    }
    a_ok &= series.windows(2).all(|p| p[1] >= &p[0] * ratio(11, 10));
    // full-window constants across depths grow as well
    let mut full = Vec::new();
    for d in 6..=10 {
        let (t, m) = slab(2, d);
        let w = Weight::from_level(&t, &LevelWeight::power(int(2)).unwrap());
        full.push(ap_constant(&w, &m, &Window::full(beta()), &int(2), Backend::Exact).unwrap().constant.upper_rational());
    }
    a_ok &= full.windows(2).all(|p| p[1] >= &p[0] * ratio(11, 10));

    // (b) operator norm stability for the alternating weight
    let mut norms = Vec::new();
    for d in 8..=12 {
        let (t, m) = slab(2, d);
        let w = periodic(&t, &[2, 1]);
        let win = Window::full(beta());
        let samples = default_samples(&m, &w, &int(2), &win).unwrap();
        norms.push(lp_operator_norm(&m, &w, &int(2), &samples, &win).unwrap().norm_lower_bound.approx());
    }
    let (lo, hi) = norms.iter().fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
    let b_ok = (hi - lo) / lo <= 0.10;

    // (c) A_1 pointwise bound
    let (t, m) = slab(2, 8);
    let mut c_ok = true;
    for pat in a2_patterns() {
        c_ok &= a1_pointwise_check(&m, &periodic(&t, &pat), &Window::full(beta())).unwrap().holds;
    }
    let growth: Vec<String> = series.windows(2).map(|p| format!("{:.2}", flowtree::numeric::to_f64(&(&p[1] / &p[0])))).collect();
    Outcome {
        id: 6,
        pass: a_ok && b_ok && c_ok,
        detail: format!(
            "(a) {} step factors [{}]; (b) {} norms {:?}; (c) {}",
            if a_ok { "ok" } else { "FAIL" },
            growth.join(", "),
            if b_ok { "ok" } else { "FAIL" },
            norms.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            if c_ok { "ok" } else { "FAIL" }
        ),
    }
}

fn c7_cz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let gen = Arc::new(TruncatedTree::general_slab(&SuccCounts::PerLevel(vec![2, 3, 1, 2, 2, 1, 3]), 7, 0).unwrap());
    let bottoms: Vec<Rational> = gen.bottom_vertices().iter().map(|_| int(rng.gen_range(1..6))).collect();
    let classes = vec![
        ("T_2", slab(2, 7)),
        ("T_3", slab(3, 5)),
        ("mixed", (gen.clone(), FlowMeasure::from_bottom(gen.clone(), &bottoms).unwrap())),
    ];
    let win = Window::full(beta());
    let mut ok = true;
    let mut total = 0;
    let mut pieces = 0;
    for (_, (t, m)) in &classes {
        let rule = certify_split_rule(m, &win).unwrap();
        ok &= rule.all_partitions && rule.d_cz == rule.c_d.recip();
        let roots: Vec<Trapezoid> = win.enumerate(t).filter(|r| !r.is_singleton()).collect();
        for _ in 0..100 {
            let r0 = roots[rng.gen_range(0..roots.len())];
            let f: Vec<Rational> = t.ids().map(|_| int(rng.gen_range(-6..=6))).collect();
            let mem0 = members(t, &r0);
            let avg0 = mem0.iter().fold(Rational::zero(), |a, y| a + f[y.idx()].abs() * m.value(*y)) / mass(m, &mem0);
            let lambda = (avg0 + Rational::one()) * ratio(rng.gen_range(4..=16), 4);
            let fam = cz_decompose(m, &rule, &f, &lambda, &r0, &win).unwrap();
            total += 1;
            pieces += fam.pieces.len();
            ok &= fam.properties.all() && fam.residual_ok;
            // independent checks from member sets
            let mut seen = BTreeSet::new();
            for p in &fam.pieces {
                let mem = members(t, &p.trapezoid);
                let avg = mem.iter().fold(Rational::zero(), |a, y| a + f[y.idx()].abs() * m.value(*y)) / mass(m, &mem);
                ok &= avg == p.average && avg >= lambda && avg < &rule.d_cz * &lambda;
                for y in mem {
                    ok &= seen.insert(y) && r0.contains_vertex(t, y);
                }
            }
            for y in mem0 {
                if !seen.contains(&y) {
                    ok &= f[y.idx()].abs() < lambda;
                }
            }
        }
    }
    Outcome { id: 7, pass: ok, detail: format!("{total} decompositions, {pieces} pieces") }
}

fn c8_reverse_holder() -> Outcome {
    let (t, m) = slab(2, 10);
    let win = Window::full(beta());
    let grid = dyadic_grid(10);
    let cap = int(64);
    let mut ok = true;
    let mut parts = Vec::new();
    let rule = certify_split_rule(&m, &win).unwrap();
    let sampler = SubsetSampler::default();
    for pat in a2_patterns() {
        let w = periodic(&t, &pat);
        let rh = reverse_holder_search(&w, &m, &win, &grid, &cap).unwrap();
        let eps = rh.eps.clone();
        ok &= eps.as_ref().is_some_and(|e| *e >= ratio(1, 1024)) && rh.c.hi().is_finite();
        let a = assumption1_check(&m, &w, &rule, &win, &sampler, &Rational::zero()).unwrap();
        let weighted = if a.passes {
            let wr = weighted_reverse_holder(&w, &m, &win, &grid, &cap).unwrap();
            ok &= wr.eps.as_ref().is_some_and(|e| e.is_positive());
            format!("{:?}", wr.eps.map(|e| e.to_string()))
        } else {
            "n/a".into()
        };
        parts.push(format!("{pat:?}: eps {} C <= {:.4}, weighted {weighted}", eps.map(|e| e.to_string()).unwrap_or("-".into()), rh.c.hi()));
    }
    let one = Weight::constant(&t, int(1)).unwrap();
    let rh = reverse_holder_search(&one, &m, &win, &grid, &cap).unwrap();
    ok &= rh.c == ConstantValue::one() && rh.eps == Some(int(1));
    Outcome { id: 8, pass: ok, detail: parts.join("; ") }
}

fn c9_ainfty() -> Outcome {
    let (t, m) = slab(2, 8);
    let win = Window::full(beta());
    let gammas: Vec<Rational> = (1..=6).map(|k| ratio(1, 1 << k)).collect();
    let mut ok = true;
    for pat in a2_patterns() {
        let w = periodic(&t, &pat);
        let iii = thainf_condition_iii_check(&w, &m, &win, &gammas).unwrap();
        ok &= iii.non_increasing && iii.all_within_bound;
        let iv = thainf_condition_iv_check(&w, &m, &win, &ratio(1, 2), &SubsetSampler::default()).unwrap();
        ok &= iv.below_one && iv.within_pre_reverse;
    }
    let cert = maps::ainfty_failure_certificate(2, 1..=5).unwrap();
    ok &= cert.all_consistent && cert.monotone;
    for r in &cert.rows {
        let qn = pow_i(&int(2), -(r.n as i64));
        ok &= r.xi == qn;
        ok &= r.image_ratio >= Rational::one() / (Rational::one() + int(3 * r.n as i64) * &qn);
        ok &= r.mu_image_e >= pow_i(&int(2), 2 * r.n as i64 - 1);
    }
    let r3 = &cert.rows[2];
    ok &= r3.xi == ratio(1, 8) && r3.mu_image_e >= int(32) && r3.image_ratio >= ratio(32, 32 + 36);
    Outcome {
        id: 9,
        pass: ok,
        detail: format!(
            "n=3: xi {} image ratio {} >= 32/68; n=5 image ratio {:.4}",
            r3.xi,
            r3.image_ratio,
            flowtree::numeric::to_f64(&cert.rows[4].image_ratio)
        ),
    }
}

fn c10_bmo() -> Outcome {
    let mut ok = true;
    let mut jensen = true;
    let mut worst = String::new();
    for d in [6, 8] {
        let (t, m) = slab(2, d);
        let win = Window::full(beta());
        ok &= bmo_norm(&VertexFunction::Exact(vec![int(3); t.len()]), &m, &win).unwrap().norm == ConstantValue::Exact(Rational::zero());
        for pat in a2_patterns() {
            let c = bmo_log_weight_check(&periodic(&t, &pat), &m, &win).unwrap();
            ok &= c.log_bound_holds;
            jensen &= c.jensen_bound_holds;
            if !c.log_bound_holds && worst.is_empty() {
                worst = format!(
                    "depth {d} {pat:?}: BMO {:.5} > log[w] {:.5} at {}",
                    c.bmo.approx(),
                    c.log_a2.hi,
                    c.argmax_trapezoid
                );
            }
        }
    }
    Outcome { id: 10, pass: ok, detail: format!("{worst}; log(2[w]) bound holds everywhere: {jensen}") }
}

fn c11_maps() -> Outcome {
    let f = maps::reflection_isometry(2, 4).unwrap();
    let iso = maps::d_isometry_check(&f).unwrap();
    let mut ok = f.tree().len() == 46 && iso.is_isometry && iso.pairs == 46 * 45 / 2;
    let (t, m) = slab(2, 5);
    let mut autos = 0;
    for s in 0..50 {
        let a = maps::random_automorphism(t.clone(), s).unwrap();
        let g = maps::gromov_isometry_check(&a).unwrap();
        let b = maps::bilipschitz_diagnostics(&a, &m, None).unwrap();
        ok &= g.rho_isometry && g.level_preserving && g.order_preserving && g.consistent;
        ok &= b.c == 0 && b.quasi_isometry_defect == 0;
        autos += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inner: Vec<VertexId> = t.ids().filter(|x| t.pred(*x).is_some() && !t.is_bottom(*x)).collect();
    let mut max_c = 0;
    for _ in 0..50 {
        let x = inner[rng.gen_range(0..inner.len())];
        let s = maps::parent_swaps(t.clone(), &[x]).unwrap();
        let b = maps::bilipschitz_diagnostics(&s, &m, None).unwrap();
        let g = maps::gromov_isometry_check(&s).unwrap();
        ok &= b.quasi_isometry_defect <= 4 * b.c && b.holds && g.consistent && !g.rho_isometry;
        max_c = max_c.max(b.c);
    }
    Outcome {
        id: 11,
        pass: ok,
        detail: format!("reflection on {} vertices, {} pairs; {autos} automorphisms; 50 bounded shifts, max C {max_c}", f.tree().len(), iso.pairs),
    }
}

fn c12_performance() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let rep = pool.install(|| verify_all(6)).unwrap();
    let verify_time = start.elapsed();

    let (t, m) = slab(2, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f: Vec<i64> = t.ids().map(|_| rng.gen_range(-9..=9)).collect();
    let fr: Vec<Rational> = f.iter().map(|x| int(*x)).collect();
    let win = Window::full(beta());
    let start = Instant::now();
    let field = maximal_function(&m, &fr, &win).unwrap();
    let field_time = start.elapsed();
    // integer brute force: canonical masses are powers of two
    let mu: Vec<i128> = t.ids().map(|x| 1i128 << t.level(x)).collect();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let y = VertexId(rng.gen_range(0..t.len() as u32));
        let mut best = Rational::zero();
        for r in win.containing(&t, y) {
            let mem = members(&t, &r);
            let num: i128 = mem.iter().map(|v| (f[v.idx()].abs() as i128) * mu[v.idx()]).sum();
            let den: i128 = mem.iter().map(|v| mu[v.idx()]).sum();
            let avg = Rational::new(BigInt::from(num), BigInt::from(den));
            if avg > best {
                best = avg;
            }
        }
        mismatches += usize::from(best != *field.value(y));
    }
    Outcome {
        id: 12,
        pass: rep.report.passed && verify_time <= Duration::from_secs(60) && field_time <= Duration::from_secs(5) && mismatches == 0,
        detail: format!(
            "verify --depth 6 single-threaded {verify_time:.2?} (passed {}); depth-12 field {field_time:.2?} over {} vertices, {mismatches}/1000 mismatches",
            rep.report.passed,
            t.len()
        ),
    }
}

#[test]
fn acceptance() {
    let criteria: Vec<fn() -> Outcome> = vec![
        c1_constant_weight,
        c2_th01,
        c3_lstv,
        c4_rtilde,
        c5_th1,
        c6_muckenhoupt,
        c7_cz,
        c8_reverse_holder,
        c9_ainfty,
        c10_bmo,
        c11_maps,
        c12_performance,
    ];
    let mut unexpected = Vec::new();
    for c in criteria {
        let o = c();
        println!("{} criterion {:>2}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
        let known = KNOWN_FAILURES.contains(&o.id);
        if o.pass == known {
            unexpected.push(o.id);
        }
    }
    assert!(unexpected.is_empty(), "criteria with unexpected outcome: {unexpected:?}");
}
