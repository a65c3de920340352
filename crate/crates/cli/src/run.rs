//! The experiment pipelines behind each subcommand.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use dioph_core::detmethod::{choose_degree, cover_grid_adaptive, cover_points, Cover, DetError, HeightValue, Strategy};
use dioph_core::funcdsl::{substitute, ChainSpec, Expr, GraphFibre, MembershipOracle, SimpleDomain, ToleranceMode};
use dioph_core::holofam::{b_lambda, cauchy_check, family_proof_bound, kappa_and_m, normalize_family, TaylorFamily};
use dioph_core::mildness::{
    compose_certs, interior_grid, monomial_cert, root_cert, rescale_to_unit, substitute_powers, verify_cert, MildCert,
    Order, Verdict,
};
use dioph_core::multiidx::{
    d_count, exponent_sum_asymptotic, exponent_sum_b, l_count, taylor_order, taylor_order_asymptotic,
};
use dioph_core::detmethod::{companion_powers, lemma_bounds_hold};
use dioph_core::pfaffian::{component_bound, cx_apply, validate_chain, Complexity, CxOp};
use dioph_core::rationals::{count_graph_points, count_points, format_rational, PointCloud};
use dioph_core::{Integer, Rational};

use crate::config::{
    expr, invalid, rational, CertSpec, ConfigError, ExperimentConfig, Kind, MildDerive, OrderSpec, ResolvedSet,
    StrategyName,
};

pub const DEFAULT_PRECISION: u32 = dioph_core::funcdsl::MAX_PRECISION;

/// A finished experiment: the deterministic report body, wall-clock timings
/// kept apart from it, and CSV point dumps by file name.
#[derive(Debug, Clone)]
pub struct Report {
    pub body: Value,
    pub timings: BTreeMap<String, f64>,
    pub csv: Vec<(String, String)>,
    /// False when an experiment ran but a check inside it failed.
    pub passed: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {message}")]
    Experiment { context: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Experiment { .. } => 1,
        }
    }
}

fn fail(context: impl Into<String>, e: impl ToString) -> RunError {
    RunError::Experiment {
        context: context.into(),
        message: e.to_string(),
    }
}

/// Wall-clock time per stage, in seconds.
struct Clock(BTreeMap<String, f64>);

impl Clock {
    fn time<T>(&mut self, key: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(key.into(), start.elapsed().as_secs_f64());
        out
    }
}

struct Ctx {
    seed: u64,
    precision: u32,
    clock: Clock,
    csv: Vec<(String, String)>,
    write_csv: bool,
    passed: bool,
    tags: BTreeMap<String, String>,
}

/// Runs the experiment named by `kind` (or the config's own kind).
pub fn run(cfg: &ExperimentConfig, kind: Option<Kind>, precision: Option<u32>) -> Result<Report, RunError> {
    cfg.validate()?;
    let kind = match (kind, cfg.kind) {
        (Some(k), Some(c)) if k != c => {
            return Err(ConfigError::KindMismatch {
                config: c.name(),
                command: k.name(),
            }
            .into())
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => return Err(invalid("kind", "no experiment kind given").into()),
    };
    let mut ctx = Ctx {
        seed: cfg.seed,
        precision: precision.or(cfg.precision).unwrap_or(DEFAULT_PRECISION),
        clock: Clock(BTreeMap::new()),
        csv: Vec::new(),
        write_csv: cfg.output.as_ref().map_or(true, |o| o.csv),
        passed: true,
        tags: BTreeMap::new(),
    };
    let start = Instant::now();
    let results = match kind {
        Kind::Count => run_count(cfg, &mut ctx)?,
        Kind::Cover => run_cover(cfg, &mut ctx)?,
        Kind::Mild => run_mild(cfg, &mut ctx)?,
        Kind::Pfaff => run_pfaff(cfg, &mut ctx)?,
        Kind::Holo => run_holo(cfg, &mut ctx)?,
        Kind::Comb => run_comb(cfg, &mut ctx)?,
    };
    ctx.clock.0.insert("total".into(), start.elapsed().as_secs_f64());
    let body = json!({
        "schema_version": 1,
        "tool": {"name": "dioph", "version": env!("CARGO_PKG_VERSION")},
        "kind": kind.name(),
        "seed": cfg.seed,
        "precision": ctx.precision,
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "results": results,
        "passed": ctx.passed,
        "derivation_tags": ctx.tags,
    });
    Ok(Report {
        body,
        timings: ctx.clock.0,
        csv: ctx.csv,
        passed: ctx.passed,
    })
}

fn section<'a, T>(s: &'a Option<T>, name: &'static str) -> Result<&'a T, RunError> {
    s.as_ref().ok_or(RunError::Config(ConfigError::Missing(name)))
}

fn q(x: &Rational) -> String {
    format_rational(x)
}

fn points_for(set: &ResolvedSet, h: u64, precision: u32) -> Result<PointCloud, RunError> {
    let ctx = format!("H = {h}");
    let out = if let Some(f) = &set.graph {
        if set.dim < 2 {
            return Err(invalid("set.dim", "a graph needs dimension at least 2").into());
        }
        let fibre = GraphFibre::new(f.clone(), set.dim - 1, set.params.clone())
            .map_err(|e| invalid("set.graph", e.to_string()))?
            .with_max_precision(precision);
        count_graph_points(|lead: &[(i64, i64)]| fibre.fibre_pairs(lead, h), set.dim, h, &set.bounds)
    } else {
        let oracle = MembershipOracle::new(
            set.equations.clone(),
            set.dim,
            set.params.clone(),
            ToleranceMode::Refine {
                start: 53,
                max: precision,
            },
        )
        .map_err(|e| invalid("set.equations", e.to_string()))?;
        count_points(&oracle, set.dim, h, &set.bounds)
    };
    out.map(|(_, pc)| pc).map_err(|e| fail(ctx, e))
}

fn run_count(cfg: &ExperimentConfig, ctx: &mut Ctx) -> Result<Value, RunError> {
    let set = section(&cfg.set, "set")?.resolve()?;
    let count = section(&cfg.count, "count")?;
    let mut rows = Vec::new();
    for &h in &count.heights {
        let pc = ctx.clock.time(format!("count H={h}"), || points_for(&set, h, ctx.precision))?;
        if ctx.write_csv {
            ctx.csv.push((format!("count_H{h}.csv"), pc.to_csv()));
        }
        rows.push(json!({"H": h, "N": pc.len(), "points": pc.to_json_strings()}));
    }
    Ok(json!({ "counts": rows }))
}

fn cover_json(c: &Cover, pc: &PointCloud) -> Value {
    json!({
        "degree": c.degree,
        "size": c.size(),
        "strategy": c.strategy.tag(),
        "radius": c.radius.as_ref().map(q),
        "uncovered": c.uncovered.len(),
        "verified": c.verify(pc),
        "hypersurfaces": c.pieces.iter().map(|p| json!({
            "coefficients": p.hypersurface.coeffs.iter().map(Integer::to_string).collect::<Vec<_>>(),
            "points": p.point_indices.len(),
        })).collect::<Vec<_>>(),
    })
}

fn run_cover(cfg: &ExperimentConfig, ctx: &mut Ctx) -> Result<Value, RunError> {
    let set = section(&cfg.set, "set")?.resolve()?;
    let cover = section(&cfg.cover, "cover")?;
    let mut rows = Vec::new();
    for &h in &cover.heights {
        let pc = ctx.clock.time(format!("points H={h}"), || points_for(&set, h, ctx.precision))?;
        let d = match cover.degree {
            Some(d) => d,
            None => {
                let d = choose_degree(&HeightValue::Int(Integer::from(h)), cover.m, set.dim)
                    .map_err(|e| fail(format!("choose_degree at H = {h}"), e))?;
                u32::try_from(d.max(1)).map_err(|e| fail("degree", e))?
            }
        };
        let c = ctx.clock.time(format!("cover H={h}"), || match cover.strategy {
            StrategyName::Greedy => cover_points(&pc, None, d, Strategy::Greedy, None),
            StrategyName::Grid => {
                let start = cover.radius.as_deref().map_or(Ok(Rational::from((1, 2))), |r| rational("cover.radius", r));
                let floor = cover.floor.as_deref().map_or(Ok(Rational::from((1, 1024))), |r| rational("cover.floor", r));
                let (start, floor) = match (start, floor) {
                    (Ok(s), Ok(f)) => (s, f),
                    _ => unreachable!("validated"),
                };
                // the first m coordinates serve as the parameter point
                let params: Vec<Vec<Rational>> =
                    pc.points.iter().map(|p| p.coords()[..cover.m.min(p.dim())].to_vec()).collect();
                cover_grid_adaptive(&pc, &params, d, &start, &floor)
            }
        });
        let c = match c {
            Ok(c) => c,
            Err(e @ DetError::CoverFailure { .. }) => return Err(fail(format!("cover at H = {h}"), e)),
            Err(e) => return Err(fail(format!("cover at H = {h}"), e)),
        };
        if !c.verify(&pc) {
            ctx.passed = false;
        }
        if ctx.write_csv {
            ctx.csv.push((format!("cover_H{h}.csv"), pc.to_csv()));
        }
        rows.push(json!({"H": h, "N": pc.len(), "degree": d, "cover": cover_json(&c, &pc)}));
    }
    if cover.strategy == StrategyName::Grid {
        ctx.tags.insert(
            "grid_parameters".into(),
            "first m coordinates of each point; radius halved from the start value down to the floor".into(),
        );
    }
    Ok(json!({ "covers": rows }))
}

fn order_of(field: &str, o: &OrderSpec) -> Result<Order, ConfigError> {
    match o {
        OrderSpec::Finite(k) => Ok(Order::Finite(*k)),
        OrderSpec::Named(s) if s == "inf" => Ok(Order::Infinite),
        OrderSpec::Named(s) => Err(invalid(field, format!("order must be an integer or \"inf\", got {s}"))),
    }
}

fn cert_of(field: &str, spec: &CertSpec, m: usize) -> Result<MildCert, ConfigError> {
    let a = rational(&format!("{field}.a"), &spec.a)?;
    let c = rational(&format!("{field}.c"), &spec.c)?;
    if a <= 0 || c < 0 || m == 0 {
        return Err(invalid(field, "need A > 0, C ≥ 0 and m ≥ 1"));
    }
    Ok(MildCert::new(a, c, order_of(&format!("{field}.order"), &spec.order)?, spec.weak, m))
}

pub fn cert_json(c: &MildCert) -> Value {
    json!({
        "A": q(&c.a),
        "C": q(&c.c),
        "order": c.order.to_string(),
        "weak": c.weak,
        "m": c.m,
        "derivation_tag": c.derivation,
    })
}

fn verdict_json(v: &Verdict) -> Value {
    json!({
        "passed": v.passed,
        "checks": v.checks,
        "worst": v.worst.as_ref().map(|w| json!({
            "alpha": w.alpha.0,
            "point": w.point.iter().map(q).collect::<Vec<_>>(),
            "ratio": w.ratio,
        })),
    })
}

fn mild_grid(m: usize, n: u32, extra: usize, seed: u64) -> Vec<Vec<Rational>> {
    let mut grid = interior_grid(m, n, &Rational::from(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let den = 1u32 << 20;
    for _ in 0..extra {
        grid.push((0..m).map(|_| Rational::from((rng.gen_range(1..den), den))).collect());
    }
    grid
}

fn check_order(cert: &MildCert, max_order: u32) -> u32 {
    match cert.order {
        Order::Finite(k) => k.min(max_order),
        Order::Infinite => max_order,
    }
}

fn run_mild(cfg: &ExperimentConfig, ctx: &mut Ctx) -> Result<Value, RunError> {
    let mild = section(&cfg.mild, "mild")?;
    let mut named: BTreeMap<String, (Expr, MildCert)> = BTreeMap::new();
    let mut functions = Vec::new();
    for (i, f) in mild.functions.iter().enumerate() {
        let field = format!("mild.functions[{i}]");
        let e = expr(&format!("{field}.expr"), &f.expr)?;
        let cert = cert_of(&format!("{field}.cert"), &f.cert, f.m)?;
        let grid = mild_grid(f.m, mild.grid, mild.random_points, ctx.seed.wrapping_add(i as u64));
        let order = check_order(&cert, mild.max_order);
        let v = ctx
            .clock
            .time(format!("verify {}", f.name), || verify_cert(&e, &cert, &grid, order))
            .map_err(|e| fail(format!("verify {}", f.name), e))?;
        ctx.passed &= v.passed;
        functions.push(json!({
            "name": f.name,
            "expr": e.to_string(),
            "cert": cert_json(&cert),
            "checked_order": order,
            "grid_points": grid.len(),
            "verdict": verdict_json(&v),
        }));
        named.insert(f.name.clone(), (e, cert));
    }
    let lookup = |field: &str, name: &str| {
        named
            .get(name)
            .cloned()
            .ok_or_else(|| RunError::from(invalid(field, format!("no function named {name}"))))
    };
    let mut derived = Vec::new();
    for (i, d) in mild.derive.iter().enumerate() {
        let field = format!("mild.derive[{i}]");
        let ctx_name = format!("derive[{i}]");
        let row = match d {
            MildDerive::Rescale { of, r } => {
                let (_, c) = lookup(&field, of)?;
                let s = rescale_to_unit(&c, *r).map_err(|e| fail(&ctx_name, e))?;
                json!({"op": "rescale", "of": of, "r": r, "s": q(&s),
                       "derivation_tag": format!("rescale(s = A·r^ceil(C+1), r = {r})")})
            }
            MildDerive::Substitute { of, l, r } => {
                let (e, c) = lookup(&field, of)?;
                let out = substitute_powers(&c, l, *r).map_err(|e| fail(&ctx_name, e))?;
                let g = substitute(&e, &|i| {
                    l.get(i - 1)
                        .map(|&li| Expr::pow(Expr::var(i), Expr::int(i64::from(li))))
                });
                let v = self_check(ctx, &g, &out, mild, &ctx_name)?;
                json!({"op": "substitute", "of": of, "l": l, "cert": cert_json(&out), "verdict": verdict_json(&v)})
            }
            MildDerive::Compose { f, g, r } => {
                let (fe, fc) = lookup(&field, f)?;
                let (ge, gc) = lookup(&field, g)?;
                if fc.m != 1 {
                    return Err(invalid(&field, "the outer function must have one variable").into());
                }
                let out = compose_certs(&fc, &gc, order_of(&format!("{field}.r"), r)?)
                    .map_err(|e| fail(&ctx_name, e))?;
                let h = substitute(&fe, &|i| (i == 1).then(|| ge.clone()));
                let v = self_check(ctx, &h, &out, mild, &ctx_name)?;
                json!({"op": "compose", "f": f, "g": g, "cert": cert_json(&out), "verdict": verdict_json(&v)})
            }
            MildDerive::Root { of, eps, ell, partial } => {
                let (_, c) = lookup(&field, of)?;
                let eps = rational(&format!("{field}.eps"), eps)?;
                let out = root_cert(&c, &eps, *ell, *partial).map_err(|e| fail(&ctx_name, e))?;
                json!({"op": "root", "of": of, "ell": ell, "eps": q(&eps), "cert": cert_json(&out.cert),
                       "a_poly": out.a_poly.0.iter().map(q).collect::<Vec<_>>(),
                       "c_poly": out.c_poly.0.iter().map(q).collect::<Vec<_>>()})
            }
            MildDerive::Monomial { mu } => {
                let mu: Vec<Rational> = mu
                    .iter()
                    .enumerate()
                    .map(|(k, s)| rational(&format!("{field}.mu[{k}]"), s))
                    .collect::<Result<_, _>>()?;
                let out = monomial_cert(&mu).map_err(|e| fail(&ctx_name, e))?;
                let mono = mu
                    .iter()
                    .enumerate()
                    .map(|(k, m)| Expr::pow(Expr::var(k + 1), Expr::constant(m.clone())))
                    .reduce(Expr::mul)
                    .unwrap_or_else(|| Expr::int(1));
                let v = self_check(ctx, &mono, &out, mild, &ctx_name)?;
                json!({"op": "monomial", "mu": mu.iter().map(q).collect::<Vec<_>>(),
                       "cert": cert_json(&out), "verdict": verdict_json(&v)})
            }
        };
        derived.push(row);
    }
    if !mild.derive.is_empty() {
        ctx.tags.insert(
            "mild_constants".into(),
            "constructor constants derived in docs/mildness.md; each cert carries its own derivation_tag".into(),
        );
    }
    Ok(json!({"functions": functions, "derived": derived}))
}

fn self_check(
    ctx: &mut Ctx,
    f: &Expr,
    cert: &MildCert,
    mild: &crate::config::MildConfig,
    name: &str,
) -> Result<Verdict, RunError> {
    let grid = mild_grid(cert.m, mild.grid, mild.random_points, ctx.seed);
    let order = check_order(cert, mild.max_order);
    let v = ctx
        .clock
        .time(format!("verify {name}"), || verify_cert(f, cert, &grid, order))
        .map_err(|e| fail(name, e))?;
    ctx.passed &= v.passed;
    Ok(v)
}

fn cx_json(c: &Complexity) -> Value {
    json!([c.r, c.alpha, c.beta])
}

fn run_pfaff(cfg: &ExperimentConfig, ctx: &mut Ctx) -> Result<Value, RunError> {
    let p = section(&cfg.pfaff, "pfaff")?;
    let cx = |field: &str, [r, a, b]: [u32; 3]| {
        if a == 0 || b == 0 {
            Err(invalid(field, "α and β must be at least 1"))
        } else {
            Ok(Complexity::new(r, a, b))
        }
    };
    let mut ops = Vec::new();
    for (i, o) in p.ops.iter().enumerate() {
        let field = format!("pfaff.ops[{i}]");
        let need_d = || o.d.ok_or_else(|| invalid(&field, "this operation needs d"));
        let op = match o.op.as_str() {
            "sum" => CxOp::Sum,
            "product" => CxOp::Product,
            "partial" => CxOp::PartialDerivative,
            "compose" => CxOp::PolyCompose(need_d()?),
            "singular" => CxOp::SingularSet(need_d()?),
            other => return Err(invalid(&field, format!("unknown operation {other}")).into()),
        };
        let inputs: Vec<Complexity> = o.inputs.iter().map(|&t| cx(&field, t)).collect::<Result<_, _>>()?;
        let out = cx_apply(op, &inputs).map_err(|e| fail(&field, e))?;
        ops.push(json!({"op": o.op, "d": o.d, "inputs": inputs.iter().map(cx_json).collect::<Vec<_>>(), "result": cx_json(&out)}));
    }
    let mut bounds = Vec::new();
    for (i, b) in p.bounds.iter().enumerate() {
        let field = format!("pfaff.bounds[{i}]");
        let c = cx(&field, b.cx)?;
        let c6 = expr(&format!("{field}.c6"), &b.c6)?;
        let c7 = expr(&format!("{field}.c7"), &b.c7)?;
        let v = component_bound(c, b.d, &c6, &c7).map_err(|e| fail(&field, e))?;
        bounds.push(json!({"cx": cx_json(&c), "d": b.d, "c6": c6.to_string(), "c7": c7.to_string(), "bound": v.to_string()}));
    }
    if p.bounds.iter().any(|_| true) {
        ctx.tags.insert("component_bound_cutoff".into(), "bounds above 2^(10^6) are reported as inf".into());
    }
    let mut chains = Vec::new();
    for (i, c) in p.chains.iter().enumerate() {
        let field = format!("pfaff.chains[{i}]");
        let g: Vec<Vec<Expr>> = c
            .g
            .iter()
            .enumerate()
            .map(|(a, row)| {
                row.iter()
                    .enumerate()
                    .map(|(b, s)| expr(&format!("{field}.g[{a}][{b}]"), s))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let spec = ChainSpec::new(c.n, c.degree, SimpleDomain::OpenUnitBox, g).map_err(|e| invalid(&field, e.to_string()))?;
        let sols: Vec<Expr> = c
            .solutions
            .iter()
            .enumerate()
            .map(|(a, s)| expr(&format!("{field}.solutions[{a}]"), s))
            .collect::<Result<_, _>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.wrapping_add(i as u64));
        let den = 1u32 << 16;
        let samples: Vec<Vec<Rational>> = (0..c.samples)
            .map(|_| (0..c.n).map(|_| Rational::from((rng.gen_range(1..den), den))).collect())
            .collect();
        let prec = ctx.precision.min(1024);
        let chk = ctx
            .clock
            .time(format!("chain {}", c.name), || validate_chain(&spec, &sols, &samples, prec))
            .map_err(|e| fail(&field, e))?;
        ctx.passed &= chk.passed;
        chains.push(json!({
            "name": c.name,
            "passed": chk.passed,
            "checks": chk.checks,
            "max_residual": q(&chk.max_residual),
            "failure": chk.failure.as_ref().map(|r| json!({"point": r.point, "i": r.i, "j": r.j, "value": r.value.to_string()})),
        }));
    }
    Ok(json!({"ops": ops, "bounds": bounds, "chains": chains}))
}

fn run_holo(cfg: &ExperimentConfig, ctx: &mut Ctx) -> Result<Value, RunError> {
    let h = section(&cfg.holo, "holo")?;
    let g = expr("holo.generator", &h.generator)?;
    let lo = rational("holo.t_grid.lo", &h.t_grid.lo)?;
    let hi = rational("holo.t_grid.hi", &h.t_grid.hi)?;
    let n = h.t_grid.count;
    let ts: Vec<Rational> = (0..n)
        .map(|k| {
            if n == 1 {
                lo.clone()
            } else {
                Rational::from(&hi - &lo) * Rational::from((k as u64, (n - 1) as u64)) + &lo
            }
        })
        .collect();
    let radius = rational("holo.radius", &h.radius)?;
    let bound = rational("holo.bound", &h.bound)?;
    let fam = ctx
        .clock
        .time("series", || TaylorFamily::from_generator(&g, h.m, radius, bound, h.truncation, &h.param, &ts))
        .map_err(|e| fail("holo family", e))?;
    let cauchy = ctx.clock.time("cauchy", || cauchy_check(&fam));
    ctx.passed &= cauchy.passed;
    let kappa = ctx.clock.time("kappa", || kappa_and_m(&fam)).map_err(|e| fail("kappa", e))?;
    let mut out = json!({
        "members": fam.members.len(),
        "truncation": fam.truncation(),
        "cauchy": {
            "passed": cauchy.passed,
            "violations": cauchy.violations,
            "undecided": cauchy.undecided,
            "worst": cauchy.worst.as_ref().map(|w| json!({"member": w.member, "alpha": w.alpha.0, "ratio": w.ratio})),
        },
        "kappa": kappa.entries.iter().map(|e| json!({
            "member": e.member, "kappa_sq": q(&e.kappa_sq), "kappa": e.kappa, "alpha": e.alpha.0,
        })).collect::<Vec<_>>(),
        "m_empirical": kappa.m_empirical,
    });
    ctx.tags.insert(
        "kappa_certification".into(),
        "maximum certified against the Cauchy tail K/R^(T+1) unless the member is a polynomial of degree ≤ T".into(),
    );
    if let Some(steps) = h.proof_steps {
        let pb = ctx
            .clock
            .time("proof bound", || family_proof_bound(&fam, steps))
            .map_err(|e| fail("proof bound", e))?;
        out["proof"] = json!({"eps": pb.eps, "D": pb.constants.d, "M": pb.constants.m_bound,
                              "dominates_empirical": kappa.m_empirical <= pb.constants.m_bound});
        ctx.passed &= kappa.m_empirical <= pb.constants.m_bound;
        ctx.tags.insert(
            "epsilon_search".into(),
            format!("largest ε on the lattice R/{steps}; θ from torus grids of the truncated series"),
        );
    }
    if let Some([r, r0]) = &h.b_lambda {
        let r = rational("holo.b_lambda[0]", r)?;
        let r0 = rational("holo.b_lambda[1]", r0)?;
        let b = ctx.clock.time("b_lambda", || b_lambda(&fam, &r, &r0)).map_err(|e| fail("b_lambda", e))?;
        ctx.passed &= b.passed;
        out["b_lambda"] = json!({"r": q(&r), "r0": q(&r0), "B": q(&b.b), "M_star": b.m_star,
                                 "passed": b.passed, "worst_ratio": b.worst_ratio});
    }
    if let Some(r) = &h.normalize_to {
        let r = rational("holo.normalize_to", r)?;
        let nf = ctx
            .clock
            .time("normalize", || normalize_family(&fam, &r))
            .map_err(|e| fail("normalize", e))?;
        out["normalized"] = json!({"radius": q(&nf.family.radius), "K0": q(&nf.family.bound)});
    }
    Ok(out)
}

fn run_comb(cfg: &ExperimentConfig, ctx: &mut Ctx) -> Result<Value, RunError> {
    let c = section(&cfg.comb, "comb")?;
    let mut table = Vec::new();
    for k in 1..=c.k_max {
        let mut identity = true;
        let mut row = Vec::new();
        let mut running = Integer::new();
        for delta in 0..=c.delta_max {
            running += l_count(k, delta);
            let d = d_count(k, delta);
            identity &= running == d;
            row.push(d.to_string());
        }
        ctx.passed &= identity;
        table.push(json!({"k": k, "D": row, "sum_identity": identity}));
    }
    let mut triples = Vec::new();
    for (i, &[m, n, d]) in c.triples.iter().enumerate() {
        let (m, n) = (m as usize, n as usize);
        if !(m >= 1 && m < n && d >= 1) {
            return Err(invalid(&format!("comb.triples[{i}]"), "need 1 ≤ m < n and d ≥ 1").into());
        }
        let t = taylor_order(m, n, d, 1);
        let big_b = exponent_sum_b(m, n, d, 1);
        triples.push(json!({
            "m": m, "n": n, "d": d,
            "D_n_d": d_count(n, d).to_string(),
            "b": t.b,
            "B": big_b.to_string(),
            "b_ratio": t.b as f64 / taylor_order_asymptotic(m, n, d, 1),
            "B_ratio": big_b.to_f64() / exponent_sum_asymptotic(m, n, d),
        }));
    }
    let mut companion = Vec::new();
    if let (Some(big_n), Some(nu_max)) = (c.companion_n, c.companion_nu) {
        for nn in 1..=big_n {
            for nu in 0..=nu_max {
                let qs = companion_powers(nn, nu);
                let ok = lemma_bounds_hold(&qs, nu);
                ctx.passed &= ok;
                companion.push(json!({"N": nn, "nu": nu, "holds": ok,
                    "max_monomials": qs.iter().map(|q| q.monomial_count()).max().unwrap_or(0),
                    "max_degree": qs.iter().map(|q| q.degree()).max().unwrap_or(0)}));
            }
        }
    }
    Ok(json!({"D_table": table, "triples": triples, "companion": companion}))
}
