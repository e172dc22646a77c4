use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use flowtree::maps;
use flowtree::maximal::{
    certify_split_rule, cz_decompose, default_samples, lp_operator_norm, maximal_function, weak11_constant, MaximalKind,
    SampleFunction,
};
use flowtree::numeric::{int, parse_rational, Rational};
use flowtree::scenario::{self, MeasureSpec, RunOutcome, Scenario, TreeSpec, WeightKind, WeightSpec};
use flowtree::trapezoid::{Beta, Trapezoid, Window};
use flowtree::weights::{
    a1_constant, ainfty_constant, ap_constant, bmo_norm, dyadic_grid, reverse_holder_search, sparse_slab_counts,
    thainf_condition_iii_check, thainf_condition_iv_check, theorem_th01_check, theorem_th1_check, Backend,
    SubsetSampler, VertexFunction,
};
use flowtree::{FlowMeasure, TruncatedTree, VertexId};

#[derive(Parser)]
#[command(name = "flowtree", version, about = "A_p weights on trees with flow measures")]
struct Cli {
    /// Exact rational arithmetic (default).
    #[arg(long, global = true, conflicts_with = "float")]
    exact: bool,
    /// Outward-rounded floating intervals.
    #[arg(long, global = true)]
    float: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct TreeArgs {
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[arg(long, default_value_t = 6)]
    depth: u32,
    #[arg(long, default_value_t = 12)]
    beta: u32,
    /// `constant:c`, `periodic:a,b,...` or `power:b`.
    #[arg(long, default_value = "periodic:2,1")]
    weight: String,
}

impl TreeArgs {
    fn build(&self) -> Result<(FlowMeasure, flowtree::weights::Weight, Window)> {
        let t = Arc::new(TruncatedTree::homogeneous_slab(self.q, self.depth as i64, 0)?);
        let m = FlowMeasure::canonical(t.clone())?;
        let w = parse_weight(&self.weight)?.build(&t)?;
        Ok((m, w, Window::full(Beta::new(self.beta)?)))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario file; exit status 0 iff every assertion passes.
    Run {
        scenario: PathBuf,
    },
    /// The full property battery on a binary slab.
    Verify {
        #[arg(long, default_value_t = 6)]
        depth: u32,
    },
    ApConstant {
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long, default_value = "2")]
        p: String,
        /// Per-trapezoid CSV table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    A1Constant {
        #[command(flatten)]
        tree: TreeArgs,
    },
    AinftyCheck {
        #[command(flatten)]
        tree: TreeArgs,
        /// Comma-separated γ values for condition iii.
        #[arg(long, default_value = "1/2,1/4,1/8,1/16,1/32,1/64")]
        gamma: String,
        #[arg(long, default_value = "1/2")]
        xi: String,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    ReverseHolder {
        #[command(flatten)]
        tree: TreeArgs,
        /// Grid `{2^-k : k <= grid}`.
        #[arg(long, default_value_t = 10)]
        grid: u32,
        #[arg(long, default_value = "64")]
        cap: String,
    },
    /// BMO norm of `log w`.
    BmoNorm {
        #[command(flatten)]
        tree: TreeArgs,
    },
    Th01Verify {
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long, default_value = "2")]
        p: String,
    },
    Th1Verify {
        #[arg(long, default_value_t = 120)]
        depth: usize,
        /// Levels between binary splits of the sparse slab.
        #[arg(long, default_value_t = 40)]
        gap: usize,
        #[arg(long, default_value_t = 8)]
        max_h2: u32,
        #[arg(long, default_value = "periodic:2,1")]
        weight: String,
        #[arg(long, default_value = "2")]
        p: String,
    },
    Maximal {
        #[command(flatten)]
        tree: TreeArgs,
        /// Function spec as JSON, e.g. `{"kind": "point-mass", "vertex": 0}`.
        #[arg(long)]
        f: String,
        /// Weighted by `w` instead of plain.
        #[arg(long)]
        weighted: bool,
    },
    CzDecompose {
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long)]
        lambda: String,
        #[arg(long, default_value_t = 0)]
        root: u32,
        #[arg(long, default_value_t = 1)]
        h1: u32,
        #[arg(long, default_value_t = 4)]
        h2: u32,
        #[arg(long, default_value = r#"{"kind": "random-pm1", "seed": 7}"#)]
        f: String,
    },
    Weak11 {
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long, default_value = r#"{"kind": "point-mass", "vertex": 0}"#)]
        f: String,
        /// Comma-separated λ values.
        #[arg(long, default_value = "1,1/2,1/4,1/8")]
        grid: String,
        #[arg(long)]
        weighted: bool,
    },
    Opnorm {
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long, default_value = "2")]
        p: String,
        /// JSON array of function specs; the default family otherwise.
        #[arg(long)]
        samples: Option<String>,
    },
    /// CSV table of the reflection counterexample.
    JacobianDemo {
        #[arg(long, default_value_t = 2)]
        q: u32,
        #[arg(long, default_value_t = 5)]
        n_max: u32,
    },
    /// Diagnostics for an explicit bijection `{"tree": ..., "forward": [...]}`.
    MapCheck {
        #[arg(long)]
        spec: PathBuf,
    },
}

fn parse_weight(s: &str) -> Result<WeightSpec> {
    let (kind, rest) = s.split_once(':').with_context(|| format!("weight spec {s:?} needs kind:values"))?;
    let vals = parse_list(rest)?;
    let kind = match kind {
        "constant" => WeightKind::Constant { value: one_value(vals)? },
        "periodic" => WeightKind::Periodic { pattern: vals },
        "power" => WeightKind::Power { base: one_value(vals)? },
        "values" => WeightKind::Values { values: vals },
        k => bail!("unknown weight kind {k:?}"),
    };
    Ok(WeightSpec { name: None, kind })
}

fn one_value(mut v: Vec<Rational>) -> Result<Rational> {
    if v.len() != 1 {
        bail!("expected a single value");
    }
    Ok(v.remove(0))
}

fn parse_list(s: &str) -> Result<Vec<Rational>> {
    s.split(',').map(|x| Ok(parse_rational(x.trim())?)).collect()
}

fn rat(s: &str) -> Result<Rational> {
    Ok(parse_rational(s)?)
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn finish(out: RunOutcome) -> Result<ExitCode> {
    for (s, d) in &out.timings {
        eprintln!("{:>15}  {:.3}s", s.name(), d.as_secs_f64());
    }
    for (s, r) in out.report.failures() {
        eprintln!("FAILED {} [{}] depth {}", s.name(), r.label, r.depth);
    }
    println!("{}", out.report.to_json());
    Ok(if out.report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[derive(serde::Deserialize)]
struct MapCheckInput {
    tree: TreeSpec,
    #[serde(default)]
    measure: MeasureSpec,
    forward: Vec<VertexId>,
}

#[derive(Serialize)]
struct MapCheckReport {
    isometry: maps::IsometryCheck,
    gromov: maps::GromovCheck,
    bilipschitz: Option<maps::BilipschitzReport>,
    #[serde(with = "flowtree::numeric::rational_vec_serde")]
    jacobian: Vec<Rational>,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("FLOWTREE_THREADS") {
        let n: usize = n.parse().context("FLOWTREE_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let backend = if cli.float { Backend::Float } else { Backend::Exact };
    match cli.cmd {
        Cmd::Run { scenario } => {
            let mut sc = Scenario::load(&scenario)?;
            if cli.float || cli.exact {
                sc.backend = backend;
            }
            let out = scenario::execute(&sc)?;
            if let Some(p) = &sc.output.report {
                std::fs::write(p, out.report.to_json())?;
            }
            if let Some(p) = &sc.output.csv {
                std::fs::write(p, scenario::ap_table_csv(&sc)?)?;
            }
            return finish(out);
        }
        Cmd::Verify { depth } => return finish(scenario::verify_all(depth)?),
        Cmd::ApConstant { tree, p, csv } => {
            let (m, w, win) = tree.build()?;
            let p = rat(&p)?;
            print(&ap_constant(&w, &m, &win, &p, backend)?)?;
            if let Some(path) = csv {
                let sc = Scenario {
                    tree: TreeSpec::HomogeneousSlab { q: tree.q, level_top: tree.depth as i64, level_bot: 0 },
                    weights: vec![parse_weight(&tree.weight)?],
                    p: vec![p],
                    beta: tree.beta,
                    ..scenario::verify_scenario(tree.depth)
                };
                std::fs::write(path, scenario::ap_table_csv(&sc)?)?;
            }
        }
        Cmd::A1Constant { tree } => {
            let (m, w, win) = tree.build()?;
            print(&a1_constant(&w, &m, &win)?)?;
        }
        Cmd::AinftyCheck { tree, gamma, xi, seed } => {
            let (m, w, win) = tree.build()?;
            let sampler = SubsetSampler { seed, ..SubsetSampler::default() };
            print(&serde_json::json!({
                "ainfty": ainfty_constant(&w, &m, &win, &[int(2)])?,
                "condition_iii": thainf_condition_iii_check(&w, &m, &win, &parse_list(&gamma)?)?,
                "condition_iv": thainf_condition_iv_check(&w, &m, &win, &rat(&xi)?, &sampler)?,
            }))?;
        }
        Cmd::ReverseHolder { tree, grid, cap } => {
            let (m, w, win) = tree.build()?;
            print(&reverse_holder_search(&w, &m, &win, &dyadic_grid(grid), &rat(&cap)?)?)?;
        }
        Cmd::BmoNorm { tree } => {
            let (m, w, win) = tree.build()?;
            print(&bmo_norm(&VertexFunction::log_of(&w)?, &m, &win)?)?;
        }
        Cmd::Th01Verify { tree, p } => {
            let lw = parse_weight(&tree.weight)?.level_weight()?.context("th01 needs a level weight")?;
            let c = theorem_th01_check(&lw, tree.q, &rat(&p)?, tree.depth, Beta::new(tree.beta)?)?;
            print(&c)?;
            if !c.equal {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Th1Verify { depth, gap, max_h2, weight, p } => {
            let t = Arc::new(TruncatedTree::general_slab(&sparse_slab_counts(depth, gap), depth as i64, 0)?);
            let m = FlowMeasure::from_bottom(t.clone(), &vec![int(1); t.bottom_vertices().len()])?;
            let w = parse_weight(&weight)?.build(&t)?;
            let win = Window { beta: Beta::default(), envelope_fit: false, max_h2: Some(max_h2) };
            let c = theorem_th1_check(&w, &m, &win, &rat(&p)?)?;
            print(&c)?;
            if !c.holds {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Maximal { tree, f, weighted } => {
            let (m, w, win) = tree.build()?;
            let spec: SampleFunction = serde_json::from_str(&f)?;
            let vals = spec.materialize(&m, &w, &int(2))?;
            let field = if weighted {
                flowtree::maximal::weighted_maximal_function(&m, &w, &vals, &win)?
            } else {
                maximal_function(&m, &vals, &win)?
            };
            print(&field)?;
        }
        Cmd::CzDecompose { tree, lambda, root, h1, h2, f } => {
            let (m, w, win) = tree.build()?;
            let spec: SampleFunction = serde_json::from_str(&f)?;
            let vals = spec.materialize(&m, &w, &int(2))?;
            let rule = certify_split_rule(&m, &win)?;
            let r0 = Trapezoid::new(VertexId(root), h1, h2)?;
            let fam = cz_decompose(&m, &rule, &vals, &rat(&lambda)?, &r0, &win)?;
            print(&serde_json::json!({ "split_rule": rule, "family": fam }))?;
        }
        Cmd::Weak11 { tree, f, grid, weighted } => {
            let (m, w, win) = tree.build()?;
            let spec: SampleFunction = serde_json::from_str(&f)?;
            let vals = spec.materialize(&m, &w, &int(2))?;
            let kind = if weighted { MaximalKind::Weighted } else { MaximalKind::Plain };
            print(&weak11_constant(&m, &w, &vals, &parse_list(&grid)?, kind, &win)?)?;
        }
        Cmd::Opnorm { tree, p, samples } => {
            let (m, w, win) = tree.build()?;
            let p = rat(&p)?;
            let samples: Vec<SampleFunction> = match samples {
                Some(s) => serde_json::from_str(&s)?,
                None => default_samples(&m, &w, &p, &win)?,
            };
            print(&lp_operator_norm(&m, &w, &p, &samples, &win)?)?;
        }
        Cmd::JacobianDemo { q, n_max } => {
            let c = maps::ainfty_failure_certificate(q, 1..=n_max)?;
            println!("n,xi,image_ratio,bound,mu_image_e,consistent");
            for r in &c.rows {
                println!("{},{},{},{},{},{}", r.n, r.xi, r.image_ratio, r.image_ratio_lower, r.mu_image_e, r.consistent);
            }
            eprintln!("monotone: {}, consistent: {}", c.monotone, c.all_consistent);
            if !c.all_consistent {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::MapCheck { spec } => {
            let input: MapCheckInput = serde_json::from_str(&std::fs::read_to_string(&spec)?)?;
            let t = Arc::new(input.tree.build()?);
            let m = input.measure.build(t.clone())?;
            let f = maps::TreeBijection::from_forward(t.clone(), input.forward)?;
            let bilipschitz = if t.q().is_some() { Some(maps::bilipschitz_diagnostics(&f, &m, None)?) } else { None };
            let j = maps::jacobian(&f, &m)?;
            print(&MapCheckReport {
                isometry: maps::d_isometry_check(&f)?,
                gromov: maps::gromov_isometry_check(&f)?,
                bilipschitz,
                jacobian: j.values().to_vec(),
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
