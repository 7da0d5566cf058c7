//! Batch runner: manifold spec files, named verification suites, JSON/CSV reports.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{transition_matrix, AtomicCurrent, ChartMap, CurrentPair, Fiber};
use crate::connection::ChartConnection;
use crate::covderiv::*;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::linalg;
use crate::multialg::{binomial, key_string, AntiIndex, Key, MetricSignature, TensorExtElement, Word};
use crate::operators::*;
use crate::sample::Sampler;
use crate::scalar::{Mode, Rational, Scalar};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    spec_version: u32,
    name: String,
    coordinates: Vec<String>,
    domain: Option<Vec<[f64; 2]>>,
    metric: Option<Vec<String>>,
    christoffel: Option<Vec<String>>,
    fiber: Option<RawFiber>,
    orientation: Option<i8>,
    signature: Option<Vec<i8>>,
    probes: Option<Vec<Vec<f64>>>,
    seed: Option<u64>,
    #[serde(default)]
    charts: Vec<RawChart>,
    #[serde(default)]
    maps: Vec<RawMap>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFiber {
    dimension: usize,
    connection: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChart {
    name: String,
    coordinates: Vec<String>,
    metric: Option<Vec<String>>,
    christoffel: Option<Vec<String>>,
    /// This chart's coordinates as expressions in the primary coordinates.
    from_primary: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    from: String,
    to: String,
    components: Vec<String>,
}

/// A secondary chart reachable from the primary one.
#[derive(Debug, Clone)]
pub struct ExtraChart {
    pub name: String,
    pub chart: ChartConnection,
    pub from_primary: ChartMap,
}

/// A coordinate change between two secondary charts.
#[derive(Debug, Clone)]
pub struct ChartLink {
    pub from: String,
    pub to: String,
    pub map: ChartMap,
}

#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub name: String,
    pub chart: ChartConnection,
    pub probes: Vec<Vec<f64>>,
    pub seed: u64,
    pub charts: Vec<ExtraChart>,
    pub links: Vec<ChartLink>,
}

fn parse_exprs(items: &[String], syms: &Arc<[String]>, loc: &str) -> Result<Vec<Expression>> {
    items
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Expression::parse_with(t, syms.clone()).map_err(|e| Error::spec(format!("{loc}[{}]", i + 1), e.to_string()))
        })
        .collect()
}

fn base_chart(name: &str, syms: &Arc<[String]>, metric: &Option<Vec<String>>, gamma: &Option<Vec<String>>, loc: &str) -> Result<ChartConnection> {
    let n = syms.len();
    match (metric, gamma) {
        (Some(g), None) => {
            if g.len() != n * n {
                return Err(Error::spec(format!("{loc}metric"), format!("expected {} components, found {}", n * n, g.len())));
            }
            ChartConnection::from_metric(name, syms.clone(), parse_exprs(g, syms, &format!("{loc}metric"))?)
        }
        (None, Some(c)) => {
            if c.len() != n * n * n {
                return Err(Error::spec(format!("{loc}christoffel"), format!("expected {} components, found {}", n * n * n, c.len())));
            }
            ChartConnection::from_christoffel(name, syms.clone(), parse_exprs(c, syms, &format!("{loc}christoffel"))?)
        }
        _ => Err(Error::spec(format!("{loc}metric"), "exactly one of `metric` and `christoffel` is required")),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, col)
}

/// Sign pattern from leading principal minors.
fn inertia(g: &[Vec<f64>]) -> Option<(usize, usize)> {
    let n = g.len();
    let mut prev = 1.0;
    let mut neg = 0;
    for m in 1..=n {
        let sub: Vec<Vec<f64>> = (0..m).map(|i| g[i][..m].to_vec()).collect();
        let d = linalg::determinant(&sub);
        if d.abs() < 1e-12 {
            return None;
        }
        if d * prev < 0.0 {
            neg += 1;
        }
        prev = d;
    }
    Some((n - neg, neg))
}

impl ManifoldSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::spec(path.display().to_string(), e.to_string()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| {
            let loc = match e.span() {
                Some(s) => {
                    let (l, c) = line_col(text, s.start);
                    format!("{origin}:{l}:{c}")
                }
                None => origin.to_string(),
            };
            Error::spec(loc, e.message().to_string())
        })?;
        if raw.spec_version != SPEC_VERSION {
            return Err(Error::spec(format!("{origin}: spec_version"), format!("unsupported version {}", raw.spec_version)));
        }
        let n = raw.coordinates.len();
        if n == 0 {
            return Err(Error::spec(format!("{origin}: coordinates"), "no coordinates"));
        }
        let syms: Arc<[String]> = raw.coordinates.clone().into();
        let loc = format!("{origin}: ");
        let mut chart = base_chart(&raw.name, &syms, &raw.metric, &raw.christoffel, &loc)?;
        if let Some(f) = &raw.fiber {
            let exprs = parse_exprs(&f.connection, &syms, &format!("{loc}fiber.connection"))?;
            chart = chart
                .with_fiber(f.dimension, exprs)
                .map_err(|e| Error::spec(format!("{loc}fiber"), e.to_string()))?;
        }
        if let Some(dom) = &raw.domain {
            chart = chart
                .with_domain(dom.iter().map(|b| (b[0], b[1])).collect())
                .map_err(|e| Error::spec(format!("{loc}domain"), e.to_string()))?;
        }
        if let Some(o) = raw.orientation {
            if o != 1 && o != -1 {
                return Err(Error::spec(format!("{loc}orientation"), "must be 1 or -1"));
            }
            chart = chart.with_orientation(o);
        }
        chart.validate().map_err(|e| match e {
            Error::Torsion { .. } | Error::Spec { .. } => e,
            other => Error::spec(origin.to_string(), other.to_string()),
        })?;
        let seed = raw.seed.unwrap_or(0);
        let probes = match raw.probes {
            Some(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    chart
                        .check_domain(p)
                        .map_err(|e| Error::spec(format!("{loc}probes[{}]", i + 1), e.to_string()))?;
                }
                ps
            }
            None => sample_probes(&chart, seed, 5),
        };
        if probes.is_empty() {
            return Err(Error::spec(format!("{loc}probes"), "no probe points"));
        }
        if let Some(sig) = &raw.signature {
            if sig.len() != n || sig.iter().any(|s| *s != 1 && *s != -1) {
                return Err(Error::spec(format!("{loc}signature"), "expected one ±1 per coordinate"));
            }
            if chart.has_metric() {
                let want = sig.iter().filter(|s| **s < 0).count();
                for p in &probes {
                    let local = chart.local::<f64>(p, 0).map_err(|e| Error::spec(format!("{loc}metric"), e.to_string()))?;
                    let g = local.metric_at()?;
                    if inertia(&g).map(|(_, neg)| neg) != Some(want) {
                        return Err(Error::spec(format!("{loc}signature"), format!("metric does not have this signature at probe {p:?}")));
                    }
                }
            }
            chart = chart.with_signature(MetricSignature(sig.clone()));
        }
        let mut charts = Vec::new();
        for (i, c) in raw.charts.iter().enumerate() {
            let cl = format!("{loc}charts[{}].", i + 1);
            let csyms: Arc<[String]> = c.coordinates.clone().into();
            if csyms.len() != n || c.from_primary.len() != n {
                return Err(Error::spec(format!("{cl}coordinates"), "dimension differs from the primary chart"));
            }
            let cc = base_chart(&c.name, &csyms, &c.metric, &c.christoffel, &cl)?;
            cc.validate()?;
            let map = ChartMap::new(parse_exprs(&c.from_primary, &syms, &format!("{cl}from_primary"))?);
            charts.push(ExtraChart {
                name: c.name.clone(),
                chart: cc,
                from_primary: map,
            });
        }
        let mut links = Vec::new();
        for (i, m) in raw.maps.iter().enumerate() {
            let ml = format!("{loc}maps[{}]", i + 1);
            let from = charts
                .iter()
                .find(|c| c.name == m.from)
                .ok_or_else(|| Error::spec(&ml, format!("unknown chart {}", m.from)))?;
            if !charts.iter().any(|c| c.name == m.to) {
                return Err(Error::spec(&ml, format!("unknown chart {}", m.to)));
            }
            let map = ChartMap::new(parse_exprs(&m.components, from.chart.symbols(), &format!("{ml}.components"))?);
            links.push(ChartLink {
                from: m.from.clone(),
                to: m.to.clone(),
                map,
            });
        }
        Ok(ManifoldSpec {
            name: raw.name,
            chart,
            probes,
            seed,
            charts,
            links,
        })
    }
}

/// Probe points drawn from the interior of the domain box (`[-1,1]ⁿ` when none is given).
pub fn sample_probes(chart: &ChartConnection, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = chart.domain().map(|d| d.to_vec()).unwrap_or_else(|| vec![(-1.0, 1.0); chart.dim()]);
    (0..count)
        .map(|_| {
            dom.iter()
                .map(|(a, b)| {
                    // quarter steps keep rational probes short
                    let steps: i64 = rng.random_range(1..=7);
                    let raw = a + (b - a) * steps as f64 / 8.0;
                    (raw * 4.0).round() / 4.0
                })
                .map(|x| x.clamp(f64::MIN, f64::MAX))
                .collect::<Vec<f64>>()
        })
        .map(|p| {
            if chart.check_domain(&p).is_ok() {
                p
            } else {
                dom.iter().map(|(a, b)| (a + b) / 2.0).collect()
            }
        })
        .collect()
}

/// A named suite with its anchor.
#[derive(Debug, Clone, Copy)]
pub struct Suite {
    pub name: &'static str,
    pub anchor: &'static str,
    pub description: &'static str,
}

pub const SUITES: &[Suite] = &[
    Suite { name: "composition", anchor: "composition of higher covariant derivatives", description: "∇_v∘∇_w against the ∇̂-expansion on random fields" },
    Suite { name: "leibniz", anchor: "Leibniz rule", description: "∇_v(α⊗β) against the deshuffle sum" },
    Suite { name: "shuffle", anchor: "shuffle formula", description: "∇_v(ω∧η) against the deshuffle wedge sum" },
    Suite { name: "contraction", anchor: "contraction and interior products", description: "∇_v commutes with contraction and interior products" },
    Suite { name: "coproduct-commutation", anchor: "coproduct commutation", description: "∇_v commutes with the wedge and tensor coproducts" },
    Suite { name: "fundamental-commutation", anchor: "Fundamental Commutation Lemma", description: "antisymmetrized pairs of derivatives against curvature terms" },
    Suite { name: "christoffel", anchor: "higher order Christoffel symbols", description: "recursion against the direct ∇-tower of coordinate fields" },
    Suite { name: "pbw", anchor: "forms a basis of the kernel", description: "kernel elements annihilate probes; span and count against the kernel dimension" },
    Suite { name: "pbw-image", anchor: "PBW image", description: "rank of the probe evaluation matrix" },
    Suite { name: "coalgebra", anchor: "co-algebra homomorphism", description: "coproduct dual to ∧; counit; coassociativity" },
    Suite { name: "curvature-quotient", anchor: "kernel element with curvature", description: "commutators of derivatives reduce to curvature in PBW coordinates" },
    Suite { name: "transition", anchor: "transition matrices", description: "identity chart change and the cocycle over secondary charts" },
    Suite { name: "operators", anchor: "operator calculus", description: "𝔼, 𝔻, ⊥, 𝔼†, 𝔻† identities on the coordinate basis" },
    Suite { name: "dualities", anchor: "dual operators on forms", description: "𝔼/ι, 𝔻/∇, ⊥/⋆, 𝔻†/−div−∇, tr(𝔻𝔼)/−δ through probes" },
    Suite { name: "boundary", anchor: "boundary operator on finitely supported currents", description: "∂²=0, ε∘∂=0, ∂ dual to d, trace route, co-Leibniz" },
    Suite { name: "trace-lift", anchor: "trace lift", description: "tr(𝔻𝔼†) preserves the kernel, is a coderivation, raises order and drops degree" },
];

pub fn find_suite(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub suite: String,
    pub order: usize,
    pub degree: usize,
    pub mode: Mode,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            suite: "all".into(),
            order: 2,
            degree: 1,
            mode: Mode::Float,
            tol: None,
            seed: None,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub suite: String,
    pub id: String,
    pub anchor: String,
    pub probe: Vec<f64>,
    pub residual: Option<f64>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub spec: String,
    pub mode: String,
    pub order: usize,
    pub degree: usize,
    pub seed: u64,
    pub tol: f64,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

impl SuiteReport {
    pub fn exit_code(&self) -> i32 {
        if self.summary.errors > 0 {
            3
        } else if self.summary.failed > 0 {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,id,probe,residual,status,wall_ms\n");
        for c in &self.checks {
            let probe: Vec<String> = c.probe.iter().map(|x| x.to_string()).collect();
            let res = c.residual.map(|r| format!("{r:e}")).unwrap_or_default();
            let status = serde_json::to_value(c.status).expect("status");
            out.push_str(&format!(
                "{},\"{}\",\"{}\",{},{},{:.3}\n",
                c.suite,
                c.id.replace('"', "'"),
                probe.join(" "),
                res,
                status.as_str().unwrap_or(""),
                c.wall_ms
            ));
        }
        out
    }
}

struct Row {
    id: String,
    residual: Option<f64>,
    note: Option<String>,
}

fn row(id: impl Into<String>, residual: f64) -> Row {
    Row {
        id: id.into(),
        residual: Some(residual),
        note: None,
    }
}

fn skip(id: impl Into<String>, why: impl Into<String>) -> Row {
    Row {
        id: id.into(),
        residual: None,
        note: Some(why.into()),
    }
}

fn ws(w: &Word) -> String {
    if w.is_empty() {
        "()".into()
    } else {
        w.letters().iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join("")
    }
}

fn words_upto(n: usize, len: usize) -> Vec<Word> {
    (0..=len).flat_map(|l| Word::all_of_length(n, l)).collect()
}

struct Env<'a, S: Scalar> {
    spec: &'a ManifoldSpec,
    pf: Vec<f64>,
    p: Vec<S>,
    r: usize,
    k: usize,
    seed: u64,
}

impl<S: Scalar> Env<'_, S> {
    fn cc(&self) -> &ChartConnection {
        &self.spec.chart
    }

    fn ctx(&self, order: usize) -> Result<SharedCtx<S>> {
        Ok(Arc::new(CovContext::at(self.cc(), &self.p, order)?))
    }

    fn sampler(&self, salt: u64) -> Sampler {
        Sampler::new(self.seed.wrapping_mul(0x9E37_79B9).wrapping_add(salt), self.cc().symbols().clone(), 2)
    }

    fn field(&self, s: &mut Sampler, ctx: &CovContext<S>, reps: Vec<Rep>, order: usize) -> Result<LocalField<S>> {
        s.field(reps, self.cc().dim(), self.cc().fiber_dim())?.local(ctx, order)
    }

    fn n(&self) -> usize {
        self.cc().dim()
    }

    fn d(&self) -> usize {
        self.cc().fiber_dim()
    }

    fn float(&self) -> bool {
        S::MODE == Mode::Float
    }

    fn rank_tol(&self) -> f64 {
        if self.float() {
            1e-9
        } else {
            0.0
        }
    }
}

fn random_current<S: Scalar>(s: &mut Sampler, keys: &[Key], k: usize) -> AtomicCurrent<S> {
    let mut t = AtomicCurrent::zero(k);
    for key in keys {
        let c: i64 = s.rng().random_range(-3..=3);
        t.add_term(key.clone(), S::from_ratio(c as i128, 2));
    }
    t
}

fn suite_composition<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let ctx = e.ctx(6)?;
    let mut s = e.sampler(1);
    let mut reps = vec![vec![Rep::Tangent], vec![Rep::Cotangent]];
    if !ctx.tangent_fiber() {
        reps.push(vec![Rep::Fiber]);
    }
    let mut rows = Vec::new();
    for trial in 0..20 {
        let rep = reps[trial % reps.len()].clone();
        let f = e.field(&mut s, &ctx, rep, 5)?;
        let lv = 1 + s.index(2);
        let lw = 1 + s.index(2);
        let v = s.word(e.n(), lv);
        let w = s.word(e.n(), lw);
        rows.push(row(format!("compose#{trial} v={} w={}", ws(&v), ws(&w)), nabla_compose_check(&ctx, &f, &v, &w)?));
    }
    Ok(rows)
}

fn suite_leibniz<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let ctx = e.ctx(4)?;
    let mut s = e.sampler(2);
    let a = e.field(&mut s, &ctx, vec![Rep::Tangent], 3)?;
    let b = e.field(&mut s, &ctx, vec![Rep::CoFiberExt(1)], 3)?;
    words_upto(e.n(), 2)
        .iter()
        .map(|v| Ok(row(format!("leibniz v={}", ws(v)), leibniz_check(&ctx, &a, &b, v)?)))
        .collect()
}

fn suite_shuffle<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let ctx = e.ctx(4)?;
    let mut s = e.sampler(3);
    let om = e.field(&mut s, &ctx, vec![Rep::CoFiberExt(1)], 3)?;
    let ke = if e.d() >= 2 { 1 } else { 0 };
    let eta = e.field(&mut s, &ctx, vec![Rep::CoFiberExt(ke)], 3)?;
    words_upto(e.n(), 2)
        .iter()
        .map(|v| Ok(row(format!("shuffle v={}", ws(v)), shuffle_check(&ctx, &om, &eta, v)?)))
        .collect()
}

fn suite_contraction<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let ctx = e.ctx(4)?;
    let mut s = e.sampler(4);
    let k = e.k.min(e.d());
    let om = e.field(&mut s, &ctx, vec![Rep::CoFiberExt(k)], 3)?;
    let al = e.field(&mut s, &ctx, vec![Rep::FiberExt(k)], 3)?;
    let ki = e.k.clamp(1, e.d());
    let x = e.field(&mut s, &ctx, vec![Rep::Fiber], 3)?;
    let om2 = e.field(&mut s, &ctx, vec![Rep::CoFiberExt(ki)], 3)?;
    let mut rows = Vec::new();
    for v in words_upto(e.n(), 2) {
        rows.push(row(format!("contraction v={}", ws(&v)), contraction_check(&ctx, &om, &al, &v)?));
        rows.push(row(format!("interior v={}", ws(&v)), interior_check(&ctx, &x, &om2, &v)?));
    }
    Ok(rows)
}

fn suite_coproduct_commutation<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let ctx = e.ctx(4)?;
    let mut s = e.sampler(5);
    let al = e.field(&mut s, &ctx, vec![Rep::FiberExt(e.k.clamp(1, e.d()))], 3)?;
    let y = e.field(&mut s, &ctx, vec![Rep::Tangent, Rep::Tangent], 3)?;
    let mut rows = Vec::new();
    for v in words_upto(e.n(), 2) {
        rows.push(row(format!("wedge-coproduct v={}", ws(&v)), coproduct_commutation_check(&ctx, &al, &v)?));
        rows.push(row(format!("tensor-coproduct v={}", ws(&v)), tensor_coproduct_commutation_check(&ctx, &y, &v)?));
    }
    Ok(rows)
}

fn suite_fundamental<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let ctx = e.ctx(7)?;
    let mut s = e.sampler(6);
    let rep = if ctx.tangent_fiber() { Rep::Tangent } else { Rep::Fiber };
    let f = e.field(&mut s, &ctx, vec![rep], 6)?;
    let n = e.n();
    let mut rows = Vec::new();
    for u in words_upto(n, 1) {
        for v in words_upto(n, 1) {
            for a in 0..n {
                for b in a + 1..n {
                    let id = format!("u={} v={} a={} b={}", ws(&u), ws(&v), a + 1, b + 1);
                    rows.push(row(id, fundamental_commutation_check(&ctx, &f, &u, &v, a, b)?));
                }
            }
        }
    }
    if rows.is_empty() {
        rows.push(skip("pairs", "dimension 1 has no index pairs"));
    }
    Ok(rows)
}

fn suite_christoffel<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let ctx = e.ctx(5)?;
    let mut s = e.sampler(7);
    let mut rows = Vec::new();
    for b in words_upto(e.n(), 2) {
        let lw = 1 + s.index(2);
        let w = s.word(e.n(), lw);
        let a = nabla_hat_word(&ctx, &b, &w)?;
        let c = nabla_hat_word_christoffel(&ctx, &b, &w)?;
        rows.push(row(format!("B={} W={}", ws(&b), ws(&w)), max_diff(&a, &c)));
    }
    Ok(rows)
}

fn fiber<S: Scalar>(e: &Env<S>, r: usize, extra: usize) -> Result<Fiber<S>> {
    Fiber::new(e.ctx(r + extra)?, r)
}

fn element_coords<S: Scalar>(x: &TensorExtElement<S>, n: usize, d: usize, r: usize, k: usize) -> Vec<S> {
    let kb = AntiIndex::all(d, k);
    let words = words_upto(n, r);
    let mut v = Vec::with_capacity(words.len() * kb.len());
    for w in &words {
        for kk in &kb {
            v.push(x.get(w, kk));
        }
    }
    v
}

fn suite_pbw<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let (n, d, r) = (e.n(), e.d(), e.r);
    let k = e.k.min(d);
    let f = fiber(e, r, 1)?;
    let basis = f.kernel_basis(k)?;
    let mut worst: f64 = 0.0;
    for el in &basis {
        for v in f.probe_values(&el.element, k)? {
            worst = worst.max(v.magnitude());
        }
    }
    let dim = Fiber::<S>::kernel_dimension(n, d, r, k);
    let rows_m: Vec<Vec<S>> = basis.iter().map(|el| element_coords(&el.element, n, d, r, k)).collect();
    let rank = if rows_m.is_empty() { 0 } else { linalg::rank(&rows_m, e.rank_tol()) };
    Ok(vec![
        row(format!("annihilation r={r} k={k}"), worst),
        row(format!("span-rank r={r} k={k}"), (rank as f64 - dim as f64).abs()),
        row(format!("count r={r} k={k} ({} vs {dim})", basis.len()), (basis.len() as f64 - dim as f64).abs()),
    ])
}

fn suite_pbw_image<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let (n, d, r) = (e.n(), e.d(), e.r);
    let k = e.k.min(d);
    let f = fiber(e, r, 1)?;
    let rank = f.probe_rank(k, e.rank_tol())?;
    let want = binomial(n + r, n) * binomial(d, k);
    Ok(vec![row(format!("probe-rank r={r} k={k} ({rank} vs {want})"), (rank as f64 - want as f64).abs())])
}

type Triple = BTreeMap<(Key, Key, Key), f64>;

fn triple<S: Scalar>(f: &Fiber<S>, pair: &CurrentPair<S>, split_left: bool) -> Result<Triple> {
    let mut out = Triple::new();
    for ((l, r), c) in pair {
        let (split, keep) = if split_left { (l, r) } else { (r, l) };
        let one = AtomicCurrent::basis(split.0.clone(), split.1.clone())?;
        for ((x, y), c2) in f.coproduct(&one)? {
            let key = if split_left { (x, y, keep.clone()) } else { (keep.clone(), x, y) };
            *out.entry(key).or_insert(0.0) += (*c * c2).to_f64();
        }
    }
    Ok(out)
}

fn suite_coalgebra<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let (d, r) = (e.d(), e.r);
    let k = e.k.min(d);
    let f = fiber(e, r, 1)?;
    let keys = f.table(k)?.keys().to_vec();
    let mut s = e.sampler(8);
    let mut rows = Vec::new();
    for trial in 0..10 {
        let t = random_current::<S>(&mut s, &keys, k);
        let ka = s.index(k + 1);
        let om = e.field(&mut s, f.ctx(), vec![Rep::CoFiberExt(ka)], r)?;
        let et = e.field(&mut s, f.ctx(), vec![Rep::CoFiberExt(k - ka)], r)?;
        let lhs = f.eval_pair(&f.coproduct(&t)?, &om, &et)?;
        let rhs = f.eval(&t, &wedge_fields(f.ctx(), &om, &et)?)?;
        let scale = 1.0 + rhs.magnitude();
        rows.push(row(format!("duality#{trial} |ω|={ka}"), (lhs - rhs).magnitude() / scale));
    }
    let t = random_current::<S>(&mut s, &keys, k);
    let pair = f.coproduct(&t)?;
    let mut back = AtomicCurrent::zero(k);
    for ((l, rr), c) in &pair {
        if l.0.is_empty() && l.1.is_empty() {
            back.add_term(rr.clone(), *c);
        }
    }
    rows.push(row("counit", back.sub(&t).max_abs()));
    let (a, b) = (triple(&f, &pair, true)?, triple(&f, &pair, false)?);
    let mut worst: f64 = 0.0;
    for key in a.keys().chain(b.keys()) {
        worst = worst.max((a.get(key).copied().unwrap_or(0.0) - b.get(key).copied().unwrap_or(0.0)).abs());
    }
    rows.push(row("coassociativity", worst));
    Ok(rows)
}

fn suite_curvature_quotient<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let (n, d) = (e.n(), e.d());
    let f = fiber(e, e.r.max(2), 1)?;
    let curv = f.ctx().chart().curvature()?;
    let mut rows = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in 0..d {
                let kc = AntiIndex::new(&[c as u8])?;
                let mut x = TensorExtElement::basis(Word::from_slice(&[a as u8, b as u8]), kc.clone());
                x.add_term(Word::from_slice(&[b as u8, a as u8]), kc, -S::one());
                let lhs = f.to_pbw(&x, 1)?;
                let mut rx = TensorExtElement::zero();
                for bb in 0..d {
                    rx.add_term(Word::empty(), AntiIndex::new(&[bb as u8])?, curv.fiber(bb, c, a, b));
                }
                let rhs = f.to_pbw(&rx, 1)?.scale(-S::one());
                rows.push(row(format!("a={} b={} c={}", a + 1, b + 1, c + 1), lhs.sub(&rhs).max_abs()));
            }
        }
    }
    if rows.is_empty() {
        rows.push(skip("pairs", "dimension 1 has no index pairs"));
    }
    Ok(rows)
}

fn suite_transition<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    let n = e.n();
    let mut rows = Vec::new();
    if !e.cc().fiber_is_tangent() {
        return Ok(vec![skip("transition", "needs the tangent bundle")]);
    }
    let r = e.r.min(3);
    let f = fiber(e, r, 2)?;
    let ident = ChartMap::new(
        e.cc()
            .symbols()
            .iter()
            .map(|x| Expression::parse_with(x, e.cc().symbols().clone()))
            .collect::<Result<Vec<_>>>()?,
    );
    for k in 0..=n.min(e.k.max(1)) {
        let m = transition_matrix(&f, &f, &ident, k)?;
        rows.push(row(format!("identity k={k}"), linalg::max_diff(&m, &linalg::identity::<S>(m.len()))));
    }
    for link in &e.spec.links {
        let b = e.spec.charts.iter().find(|c| c.name == link.from).expect("validated");
        let c = e.spec.charts.iter().find(|c| c.name == link.to).expect("validated");
        let pb = b.from_primary.image(&e.p)?;
        let pc = c.from_primary.image(&e.p)?;
        let fb = Fiber::new(Arc::new(CovContext::at(&b.chart, &pb, r + 2)?), r)?;
        let fc = Fiber::new(Arc::new(CovContext::at(&c.chart, &pc, r + 2)?), r)?;
        for k in 0..=n.min(e.k.max(1)) {
            let g_ba = transition_matrix(&f, &fb, &b.from_primary, k)?;
            let g_cb = transition_matrix(&fb, &fc, &link.map, k)?;
            let g_ca = transition_matrix(&f, &fc, &c.from_primary, k)?;
            let prod = linalg::mat_mul(&g_cb, &g_ba);
            rows.push(row(format!("cocycle {}→{} k={k}", link.from, link.to), linalg::max_diff(&prod, &g_ca)));
        }
    }
    Ok(rows)
}

fn metric_ready<S: Scalar>(e: &Env<S>) -> Option<Row> {
    if !e.cc().has_metric() {
        Some(skip("metric", "no metric configured"))
    } else if !e.cc().fiber_is_tangent() {
        Some(skip("fiber", "needs the tangent bundle"))
    } else {
        None
    }
}

fn suite_operators<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    if let Some(r) = metric_ready(e) {
        return Ok(vec![r]);
    }
    let n = e.n();
    let c = e.ctx(8)?;
    let ops = Operators::new(c.clone(), 6);
    let degrees: Vec<usize> = (0..=n).collect();
    let basis = coordinate_basis::<S>(n, n, e.r.min(2), &degrees);
    let mut s = e.sampler(9);
    let mv = |f: &LocalField<S>| MixedField::from_ext(&c, f);
    let tn = |f: &LocalField<S>| MixedField::from_tensor(&c, f);
    let x1 = e.field(&mut s, &c, vec![Rep::FiberExt(1)], 6)?;
    let x0 = e.field(&mut s, &c, vec![], 6)?;
    let v1 = e.field(&mut s, &c, vec![Rep::Tangent], 6)?;
    let v2 = e.field(&mut s, &c, vec![Rep::Tangent], 6)?;
    let y2 = e.field(&mut s, &c, vec![Rep::Tangent, Rep::Tangent], 6)?;
    let mut rows = vec![
        row("𝔼𝔼", ops.ee_check(&mv(&x1)?, &mv(&x0)?, &basis)?),
        row("𝔻𝔻", ops.dd_check(&tn(&v1)?, &tn(&v2)?, &basis)?),
        row("𝔻𝔻 rank 2", ops.dd_check(&tn(&y2)?, &tn(&v1)?, &basis)?),
        row("𝔼𝔻 exchange", ops.ed_check(&mv(&x1)?, &y2, &basis)?),
        row("{𝔼,𝔼†}", ops.e_edag_check(&v1, &v2, &basis)?),
        row("𝔼†𝔼† reversal", ops.edag_edag_check(&mv(&x1)?, &mv(&x0)?, &basis)?),
        row("𝔼† routes", ops.edag_routes_check(&mv(&x1)?, &basis)?),
        row("[𝔻,𝔻]", ops.dd_commutator_check(&v1, &v2, &basis)?),
        row("[𝔻,𝔻†]", ops.d_ddag_commutator_check(&v1, &v2, &basis)?),
        row("[𝔻†,𝔻†]", ops.ddag_ddag_commutator_check(&v1, &v2, &basis)?),
    ];
    if e.float() {
        rows.push(row("Clifford/⊥", ops.clifford_check(&basis)?));
    } else {
        rows.push(skip("Clifford/⊥", "orthonormal frames need square roots"));
    }
    Ok(rows)
}

fn suite_dualities<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    if let Some(r) = metric_ready(e) {
        return Ok(vec![r]);
    }
    let n = e.n();
    let c = e.ctx(7)?;
    let f = Fiber::new(c.clone(), e.r.min(2))?;
    let ops = Operators::new(c.clone(), 5);
    let mut s = e.sampler(10);
    let v = e.field(&mut s, &c, vec![Rep::Tangent], 6)?;
    let vf = LocalField::new(&c, vec![Rep::Fiber], v.comps().to_vec())?;
    let e_op = ops.op_e(&ops.as_multivector(&v)?)?;
    let d_op = ops.op_d_tensor(&v)?;
    let perp = ops.op_perp()?;
    let ddag = ops.op_ddag(&v)?;
    let trde = ops.trace_de(Frame::Coordinate)?;
    let div = divergence(&c, &v)?;
    let mut worst = BTreeMap::<&str, f64>::new();
    let mut bump = |name: &'static str, x: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(x);
    };
    for k in 0..=n {
        let om = e.field(&mut s, &c, vec![Rep::CoFiberExt(k)], 6)?;
        let om_c = e.field(&mut s, &c, vec![Rep::CoFiberExt(n - k)], 6)?;
        let om_up = if k < n { Some(e.field(&mut s, &c, vec![Rep::CoFiberExt(k + 1)], 6)?) } else { None };
        let nab = nabla_tensor(&c, &v, &om)?;
        let adj = om.mul_jet(&div.comps()[0]).scale(-S::one()).sub(&nabla_along(&c, &v, &om)?)?;
        let star = hodge_star_form(&c, &om_c)?;
        for x in coordinate_basis::<S>(n, n, f.order(), &[k]) {
            bump("𝔻/∇", duality_residual(&f, &d_op, &x, &om, &nab)?);
            bump("𝔻†/−div−∇", duality_residual(&f, &ddag, &x, &om, &adj)?);
            bump("⊥/⋆", duality_residual(&f, &perp, &x, &om_c, &star)?);
            if let Some(om_up) = &om_up {
                bump("𝔼/ι", duality_residual(&f, &e_op, &x, om_up, &interior_field(&c, &vf, om_up)?)?);
                if x.max_word_len() + 1 <= f.order() {
                    let delta = codifferential(&c, om_up)?.scale(-S::one());
                    bump("tr(𝔻𝔼)/−δ", duality_residual(&f, &trde, &x, om_up, &delta)?);
                }
            }
        }
    }
    Ok(worst.into_iter().map(|(k, v)| row(k, v)).collect())
}

fn suite_boundary<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    if !e.cc().fiber_is_tangent() {
        return Ok(vec![skip("boundary", "needs the tangent bundle")]);
    }
    let n = e.n();
    let k = e.k.clamp(1, n);
    let rt = e.r.min(2);
    let c = e.ctx(rt + 4)?;
    let f = Fiber::new(c.clone(), rt + 2)?;
    let mut s = e.sampler(11);
    let keys = Fiber::<S>::pbw_keys(n, n, rt, k);
    let mut rows = Vec::new();
    let t = random_current::<S>(&mut s, &keys, k);
    let b = boundary(&f, &t)?;
    rows.push(row(format!("∂² k={k}"), boundary(&f, &b)?.max_abs()));
    let t1 = random_current::<S>(&mut s, &Fiber::<S>::pbw_keys(n, n, rt, 1), 1);
    rows.push(row("ε∘∂", f.counit(&boundary(&f, &t1)?).magnitude()));
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let kk = 1 + i % n;
        let t = random_current::<S>(&mut s, &Fiber::<S>::pbw_keys(n, n, rt, kk), kk);
        let om = e.field(&mut s, &c, vec![Rep::CoFiberExt(kk - 1)], rt + 3)?;
        let lhs = f.eval(&boundary(&f, &t)?, &om)?;
        let rhs = f.eval(&t, &exterior_derivative(&c, &om)?)?;
        worst = worst.max((lhs - rhs).magnitude() / (1.0 + rhs.magnitude()));
    }
    rows.push(row("dual to d", worst));
    if e.cc().has_metric() {
        let ops = Operators::new(c.clone(), rt + 2);
        rows.push(row("trace route (coordinate frame)", boundary_trace(&ops, &f, &t, Frame::Coordinate)?.sub(&b).max_abs()));
        if e.float() {
            rows.push(row("trace route (orthonormal frame)", boundary_trace(&ops, &f, &t, Frame::Orthonormal)?.sub(&b).max_abs()));
        }
    }
    let dt = f.coproduct(&t)?;
    let dbt = f.coproduct(&b)?;
    let mut worst: f64 = 0.0;
    for k1 in 0..k {
        let om = e.field(&mut s, &c, vec![Rep::CoFiberExt(k1)], rt + 3)?;
        let eta = e.field(&mut s, &c, vec![Rep::CoFiberExt(k - 1 - k1)], rt + 3)?;
        let lhs = f.eval_pair(&dbt, &om, &eta)?;
        let sg = if k1 % 2 == 0 { S::one() } else { -S::one() };
        let rhs = f.eval_pair(&dt, &exterior_derivative(&c, &om)?, &eta)? + sg * f.eval_pair(&dt, &om, &exterior_derivative(&c, &eta)?)?;
        worst = worst.max((lhs - rhs).magnitude());
    }
    rows.push(row("co-Leibniz", worst));
    Ok(rows)
}

fn suite_trace_lift<S: Scalar>(e: &Env<S>) -> Result<Vec<Row>> {
    if let Some(r) = metric_ready(e) {
        return Ok(vec![r]);
    }
    let k = e.k.min(e.n());
    if k == 0 {
        return Ok(vec![skip("trace-lift", "degree 0 has no trace")]);
    }
    let r = e.r.min(2);
    let c = e.ctx(r + 4)?;
    let ops = Operators::new(c.clone(), r + 2);
    let f_in = Fiber::new(c.clone(), r)?;
    let f_out = Fiber::new(c.clone(), r + 1)?;
    let rep = trace_lift_check(&ops, &f_in, &f_out, k, 0.0)?;
    Ok(vec![
        row(format!("kernel preservation k={k}"), rep.kernel_residual),
        row(format!("Δ_⊗ coderivation k={k}"), rep.coproduct_residual),
        row(format!("order raise r={r}"), rep.max_word_len.saturating_sub(r + 1) as f64),
        row(format!("degree drop k={k}"), if rep.degree_drops { 0.0 } else { 1.0 }),
    ])
}

fn run_suite<S: Scalar>(name: &str, e: &Env<S>) -> Result<Vec<Row>> {
    match name {
        "composition" => suite_composition(e),
        "leibniz" => suite_leibniz(e),
        "shuffle" => suite_shuffle(e),
        "contraction" => suite_contraction(e),
        "coproduct-commutation" => suite_coproduct_commutation(e),
        "fundamental-commutation" => suite_fundamental(e),
        "christoffel" => suite_christoffel(e),
        "pbw" => suite_pbw(e),
        "pbw-image" => suite_pbw_image(e),
        "coalgebra" => suite_coalgebra(e),
        "curvature-quotient" => suite_curvature_quotient(e),
        "transition" => suite_transition(e),
        "operators" => suite_operators(e),
        "dualities" => suite_dualities(e),
        "boundary" => suite_boundary(e),
        "trace-lift" => suite_trace_lift(e),
        _ => Err(Error::invalid(format!("unknown suite {name}"))),
    }
}

fn run_mode<S: Scalar>(spec: &ManifoldSpec, suites: &[&'static Suite], opts: &RunOptions, seed: u64, tol: f64) -> Result<Vec<CheckRecord>> {
    let points: Vec<(Vec<f64>, Vec<S>)> = spec
        .probes
        .iter()
        .map(|p| Ok((p.clone(), p.iter().map(|x| S::from_f64(*x)).collect::<Result<Vec<S>>>()?)))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..suites.len()).flat_map(|i| (0..points.len()).map(move |j| (i, j))).collect();
    let results: Vec<Vec<CheckRecord>> = tasks
        .par_iter()
        .map(|&(si, pi)| {
            let suite = suites[si];
            let (pf, p) = &points[pi];
            let env = Env {
                spec,
                pf: pf.clone(),
                p: p.clone(),
                r: opts.order,
                k: opts.degree,
                seed: seed.wrapping_add(pi as u64 * 7919),
            };
            let start = Instant::now();
            let out = run_suite::<S>(suite.name, &env);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let rec = |id: String, residual: Option<f64>, status: Status, message: Option<String>| CheckRecord {
                suite: suite.name.into(),
                id,
                anchor: suite.anchor.into(),
                probe: env.pf.clone(),
                residual,
                status,
                message,
                wall_ms: ms,
            };
            match out {
                Ok(rows) => rows
                    .into_iter()
                    .map(|r| match r.residual {
                        Some(x) => {
                            let ok = x.is_finite() && x <= tol;
                            rec(r.id, Some(x), if ok { Status::Pass } else { Status::Fail }, r.note)
                        }
                        None => rec(r.id, None, Status::Skipped, r.note),
                    })
                    .collect(),
                Err(err) => vec![rec(suite.name.into(), None, Status::Error, Some(err.to_string()))],
            }
        })
        .collect();
    Ok(results.into_iter().flatten().collect())
}

/// Run `opts.suite` ("all" for every suite) over the spec's probe points.
pub fn run(spec: &ManifoldSpec, spec_label: &str, opts: &RunOptions) -> Result<SuiteReport> {
    let suites: Vec<&'static Suite> = if opts.suite == "all" {
        SUITES.iter().collect()
    } else {
        vec![find_suite(&opts.suite).ok_or_else(|| Error::invalid(format!("unknown suite \"{}\"", opts.suite)))?]
    };
    let seed = opts.seed.unwrap_or(spec.seed);
    let tol = opts.tol.unwrap_or(match opts.mode {
        Mode::Rational => 0.0,
        Mode::Float => 1e-7,
    });
    let work = || match opts.mode {
        Mode::Rational => run_mode::<Rational>(spec, &suites, opts, seed, tol),
        Mode::Float => run_mode::<f64>(spec, &suites, opts, seed, tol),
    };
    let checks = match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let mut summary = Summary {
        total: checks.len(),
        ..Summary::default()
    };
    for c in &checks {
        match c.status {
            Status::Pass => summary.passed += 1,
            Status::Fail => summary.failed += 1,
            Status::Skipped => summary.skipped += 1,
            Status::Error => summary.errors += 1,
        }
    }
    Ok(SuiteReport {
        suite: opts.suite.clone(),
        spec: spec_label.to_string(),
        mode: opts.mode.name().into(),
        order: opts.order,
        degree: opts.degree,
        seed,
        tol,
        checks,
        summary,
    })
}

/// TOML for a random polynomial metric `g = UᵀU` with `U` unit upper triangular, so `det g = 1`.
pub fn random_metric_spec(n: usize, seed: u64, degree: usize) -> String {
    let syms: Vec<String> = (0..n).map(|i| format!("x{}", i + 1)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<Vec<String>> = vec![vec!["0".to_string(); n]; n];
    for i in 0..n {
        u[i][i] = "1".into();
        for j in i + 1..n {
            let mut terms = Vec::new();
            for _ in 0..rng.random_range(1..=2usize) {
                let c: i64 = rng.random_range(1..=3) * if rng.random_bool(0.5) { 1 } else { -1 };
                let deg = rng.random_range(1..=degree.max(1));
                let mut t = format!("({c})");
                for _ in 0..deg {
                    t.push('*');
                    t.push_str(&syms[rng.random_range(0..n)]);
                }
                terms.push(t);
            }
            u[i][j] = format!("({})", terms.join(" + "));
        }
    }
    let mut g = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let terms: Vec<String> = (0..=a.min(b))
                .filter(|&m| u[m][a] != "0" && u[m][b] != "0")
                .map(|m| match (u[m][a].as_str(), u[m][b].as_str()) {
                    ("1", "1") => "1".to_string(),
                    ("1", y) => y.to_string(),
                    (x, "1") => x.to_string(),
                    (x, y) => format!("{x}*{y}"),
                })
                .collect();
            g.push(format!("\"{}\"", if terms.is_empty() { "0".into() } else { terms.join(" + ") }));
        }
    }
    let coords: Vec<String> = syms.iter().map(|s| format!("\"{s}\"")).collect();
    let domain: Vec<String> = (0..n).map(|_| "[-1.0, 1.0]".to_string()).collect();
    format!(
        "spec_version = 1\nname = \"random-poly-{n}d-{seed}\"\ncoordinates = [{}]\ndomain = [{}]\nmetric = [{}]\nseed = {seed}\n",
        coords.join(", "),
        domain.join(", "),
        g.join(", ")
    )
}

/// Lines of `list-suites`.
pub fn suite_listing() -> String {
    let mut out = String::new();
    for s in SUITES {
        out.push_str(&format!("{:<24} {}  [{}]\n", s.name, s.description, s.anchor));
    }
    out.push_str(&format!("{:<24} every suite above\n", "all"));
    out
}

/// Map an error to an exit code: 2 for spec problems, 3 otherwise.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Spec { .. } | Error::Torsion { .. } | Error::Syntax { .. } | Error::UndeclaredSymbol(_) => 2,
        _ => 3,
    }
}

pub fn key_label(k: &Key) -> String {
    key_string(k)
}
