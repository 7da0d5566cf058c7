//! Charts with a torsion-free connection on `TM` and a connection on a fiber bundle `E`.
//!
//! Conventions: `∇_{e_i} e_j = Γ^k_{i,j} e_k` on the base and
//! `∇_{e_i} ε_a = A^b_{i,a} ε_b` on the fiber. Flattened storage is
//! `[k][i][j]` for Γ and `[b][i][a]` for A.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::jet::{determinant_jet, invert_jet_matrix, Jet, JetFamily};
use crate::multialg::{MetricSignature, Word};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub enum BaseSpec {
    Christoffel(Vec<Expression>),
    Metric(Vec<Expression>),
}

#[derive(Debug, Clone)]
pub struct ChartConnection {
    name: String,
    symbols: Arc<[String]>,
    n: usize,
    d: usize,
    base: BaseSpec,
    perturbation: Option<Vec<Expression>>,
    fiber: Option<Vec<Expression>>,
    orientation: i8,
    signature: Option<MetricSignature>,
    domain: Option<Vec<(f64, f64)>>,
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(", "))
}

impl ChartConnection {
    pub fn from_metric(name: &str, symbols: Arc<[String]>, metric: Vec<Expression>) -> Result<Self> {
        let n = symbols.len();
        if metric.len() != n * n {
            return Err(Error::invalid(format!("metric needs {} components", n * n)));
        }
        Ok(ChartConnection {
            name: name.to_string(),
            symbols,
            n,
            d: n,
            base: BaseSpec::Metric(metric),
            perturbation: None,
            fiber: None,
            orientation: 1,
            signature: None,
            domain: None,
        })
    }

    /// Christoffel symbols flattened as `[k][i][j]`.
    pub fn from_christoffel(name: &str, symbols: Arc<[String]>, gamma: Vec<Expression>) -> Result<Self> {
        let n = symbols.len();
        if gamma.len() != n * n * n {
            return Err(Error::invalid(format!("Christoffel symbols need {} components", n * n * n)));
        }
        Ok(ChartConnection {
            name: name.to_string(),
            symbols,
            n,
            d: n,
            base: BaseSpec::Christoffel(gamma),
            perturbation: None,
            fiber: None,
            orientation: 1,
            signature: None,
            domain: None,
        })
    }

    /// Parse string components; convenience for tests and the CLI.
    pub fn parse_metric(name: &str, symbols: &[&str], metric: &[&str]) -> Result<Self> {
        let sym: Arc<[String]> = symbols.iter().map(|s| s.to_string()).collect();
        let exprs = metric
            .iter()
            .map(|t| Expression::parse_with(t, sym.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_metric(name, sym, exprs)
    }

    pub fn parse_christoffel(name: &str, symbols: &[&str], gamma: &[&str]) -> Result<Self> {
        let sym: Arc<[String]> = symbols.iter().map(|s| s.to_string()).collect();
        let exprs = gamma
            .iter()
            .map(|t| Expression::parse_with(t, sym.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_christoffel(name, sym, exprs)
    }

    /// Add a symmetric tensor `[k][i][j]` to the base Christoffel symbols.
    pub fn with_perturbation(mut self, delta: Vec<Expression>) -> Result<Self> {
        let n = self.n;
        if delta.len() != n * n * n {
            return Err(Error::invalid("perturbation has wrong size"));
        }
        self.perturbation = Some(delta);
        Ok(self)
    }

    /// Fiber connection `A^b_{i,a}` flattened as `[b][i][a]`.
    pub fn with_fiber(mut self, d: usize, coeffs: Vec<Expression>) -> Result<Self> {
        if coeffs.len() != d * self.n * d {
            return Err(Error::invalid("fiber connection has wrong size"));
        }
        self.d = d;
        self.fiber = Some(coeffs);
        Ok(self)
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Result<Self> {
        if domain.len() != self.n || domain.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::invalid("domain box must be nonempty in every coordinate"));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn with_orientation(mut self, orientation: i8) -> Self {
        self.orientation = if orientation < 0 { -1 } else { 1 };
        self
    }

    pub fn with_signature(mut self, sig: MetricSignature) -> Self {
        self.signature = Some(sig);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn symbols(&self) -> &Arc<[String]> {
        &self.symbols
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fiber_dim(&self) -> usize {
        self.d
    }

    /// True when the fiber is the tangent bundle with the base connection.
    pub fn fiber_is_tangent(&self) -> bool {
        self.fiber.is_none()
    }

    pub fn has_metric(&self) -> bool {
        matches!(self.base, BaseSpec::Metric(_))
    }

    pub fn orientation(&self) -> i8 {
        self.orientation
    }

    pub fn signature(&self) -> Option<&MetricSignature> {
        self.signature.as_ref()
    }

    pub fn domain(&self) -> Option<&[(f64, f64)]> {
        self.domain.as_deref()
    }

    pub fn base(&self) -> &BaseSpec {
        &self.base
    }

    pub fn check_domain(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n {
            return Err(Error::invalid(format!("probe needs {} coordinates", self.n)));
        }
        if let Some(dom) = &self.domain {
            for (x, (a, b)) in p.iter().zip(dom) {
                if !(x > a && x < b) {
                    return Err(Error::OutOfDomain(fmt_point(p)));
                }
            }
        }
        Ok(())
    }

    /// Deterministic interior sample points of the domain box.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        let fracs = [0.3, 0.55, 0.8];
        let dom = self
            .domain
            .clone()
            .unwrap_or_else(|| vec![(-1.0, 1.0); self.n]);
        let total = fracs.len().pow(self.n as u32);
        (0..total)
            .map(|mut code| {
                (0..self.n)
                    .map(|i| {
                        let f = fracs[code % fracs.len()];
                        code /= fracs.len();
                        let (a, b) = dom[i];
                        a + f * (b - a)
                    })
                    .collect()
            })
            .collect()
    }

    /// Torsion-freeness and metric symmetry at the sample points.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let pts = self.sample_points();
        match &self.base {
            BaseSpec::Metric(g) => {
                for p in &pts {
                    for i in 0..n {
                        for j in 0..i {
                            let a: f64 = g[i * n + j].eval(p)?;
                            let b: f64 = g[j * n + i].eval(p)?;
                            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                                return Err(Error::spec(
                                    format!("metric[{}][{}]", i + 1, j + 1),
                                    format!("metric not symmetric at probe {}", fmt_point(p)),
                                ));
                            }
                        }
                    }
                }
            }
            BaseSpec::Christoffel(gamma) => Self::check_symmetric(gamma, n, &pts)?,
        }
        if let Some(delta) = &self.perturbation {
            Self::check_symmetric(delta, n, &pts)?;
        }
        Ok(())
    }

    fn check_symmetric(gamma: &[Expression], n: usize, pts: &[Vec<f64>]) -> Result<()> {
        for p in pts {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..i {
                        let a: f64 = gamma[(k * n + i) * n + j].eval(p)?;
                        let b: f64 = gamma[(k * n + j) * n + i].eval(p)?;
                        if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                            return Err(Error::Torsion {
                                probe: fmt_point(p),
                                detail: format!(
                                    "Gamma^{k}_{{{i},{j}}} = {a} but Gamma^{k}_{{{j},{i}}} = {b}",
                                    k = k + 1,
                                    i = i + 1,
                                    j = j + 1
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Jets of all connection data at `p`, with Γ and A known to `order`.
    pub fn local<S: Scalar>(&self, p: &[S], order: usize) -> Result<LocalChart<S>> {
        let pf: Vec<f64> = p.iter().map(|v| v.to_f64()).collect();
        self.check_domain(&pf)?;
        let n = self.n;
        let fam = JetFamily::new(n, order + 1);
        let (mut gamma, metric) = match &self.base {
            BaseSpec::Christoffel(exprs) => (
                exprs
                    .iter()
                    .map(|e| e.eval_jet(p, &fam, order))
                    .collect::<Result<Vec<_>>>()?,
                None,
            ),
            BaseSpec::Metric(exprs) => {
                let g: Vec<Jet<S>> = exprs
                    .iter()
                    .map(|e| e.eval_jet(p, &fam, order + 1))
                    .collect::<Result<_>>()?;
                let rows: Vec<Vec<Jet<S>>> = (0..n).map(|i| g[i * n..(i + 1) * n].to_vec()).collect();
                let ginv = invert_jet_matrix(&rows)
                    .map_err(|_| Error::Singular(format!("metric singular at probe {}", fmt_point(&pf))))?;
                let dg: Vec<Vec<Jet<S>>> = (0..n)
                    .map(|l| g.iter().map(|x| x.deriv(l)).collect())
                    .collect();
                let half = S::from_ratio(1, 2);
                let mut gamma = Vec::with_capacity(n * n * n);
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut acc = Jet::zero(&fam, order);
                            for l in 0..n {
                                let t = dg[i][j * n + l]
                                    .add(&dg[j][i * n + l])
                                    .sub(&dg[l][i * n + j]);
                                acc.add_assign(&ginv[k][l].mul(&t));
                            }
                            gamma.push(acc.scale(half));
                        }
                    }
                }
                let g_flat: Vec<Jet<S>> = g.iter().map(|x| x.truncate(order + 1)).collect();
                let ginv_flat: Vec<Jet<S>> = ginv.into_iter().flatten().collect();
                (gamma, Some((g_flat, ginv_flat)))
            }
        };
        if let Some(delta) = &self.perturbation {
            for (g, e) in gamma.iter_mut().zip(delta) {
                *g = g.add(&e.eval_jet(p, &fam, order)?);
            }
        }
        for g in &gamma {
            g.check()?;
        }
        let fiber = match &self.fiber {
            Some(exprs) => exprs
                .iter()
                .map(|e| e.eval_jet(p, &fam, order))
                .collect::<Result<Vec<_>>>()?,
            None => gamma.clone(),
        };
        Ok(LocalChart {
            n,
            d: self.d,
            order,
            point: p.to_vec(),
            fam,
            gamma,
            fiber,
            metric,
            orientation: self.orientation,
        })
    }
}

/// Connection jets at a point; the unit of per-point caching.
#[derive(Debug, Clone)]
pub struct LocalChart<S: Scalar> {
    n: usize,
    d: usize,
    order: usize,
    point: Vec<S>,
    fam: Arc<JetFamily>,
    gamma: Vec<Jet<S>>,
    fiber: Vec<Jet<S>>,
    metric: Option<(Vec<Jet<S>>, Vec<Jet<S>>)>,
    orientation: i8,
}

/// Higher-order connection coefficients `C^b_{I,a}` keyed by word, flattened `[b][a]`.
#[derive(Debug, Clone)]
pub struct HigherTable<S: Scalar> {
    pub dim: usize,
    pub max_len: usize,
    pub table: HashMap<Word, Vec<Jet<S>>>,
}

impl<S: Scalar> HigherTable<S> {
    pub fn get(&self, w: &Word) -> &[Jet<S>] {
        &self.table[w]
    }

    /// Value of `C^b_{I,a}` at the base point; the identity for the empty word.
    pub fn value(&self, w: &Word, b: usize, a: usize) -> S {
        if w.is_empty() {
            return if a == b { S::one() } else { S::zero() };
        }
        self.table[w][b * self.dim + a].value()
    }

    /// `(C^b_{I,a})_b` at the base point.
    pub fn column(&self, w: &Word, a: usize) -> Vec<S> {
        (0..self.dim).map(|b| self.value(w, b, a)).collect()
    }
}

impl<S: Scalar> LocalChart<S> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fiber_dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn point(&self) -> &[S] {
        &self.point
    }

    pub fn family(&self) -> &Arc<JetFamily> {
        &self.fam
    }

    pub fn orientation(&self) -> i8 {
        self.orientation
    }

    pub fn gamma(&self, k: usize, i: usize, j: usize) -> &Jet<S> {
        &self.gamma[(k * self.n + i) * self.n + j]
    }

    pub fn fiber_coeff(&self, b: usize, i: usize, a: usize) -> &Jet<S> {
        &self.fiber[(b * self.n + i) * self.d + a]
    }

    pub fn has_metric(&self) -> bool {
        self.metric.is_some()
    }

    pub fn metric_jet(&self, i: usize, j: usize) -> Result<&Jet<S>> {
        let (g, _) = self.metric.as_ref().ok_or(Error::NoMetric)?;
        Ok(&g[i * self.n + j])
    }

    pub fn inverse_metric_jet(&self, i: usize, j: usize) -> Result<&Jet<S>> {
        let (_, gi) = self.metric.as_ref().ok_or(Error::NoMetric)?;
        Ok(&gi[i * self.n + j])
    }

    pub fn metric_at(&self) -> Result<Vec<Vec<S>>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| Ok(self.metric_jet(i, j)?.value())).collect())
            .collect()
    }

    pub fn inverse_metric_at(&self) -> Result<Vec<Vec<S>>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| Ok(self.inverse_metric_jet(i, j)?.value())).collect())
            .collect()
    }

    /// `√|det g|` as a jet of the local order.
    pub fn volume_density(&self) -> Result<Jet<S>> {
        let n = self.n;
        let rows: Vec<Vec<Jet<S>>> = (0..n)
            .map(|i| (0..n).map(|j| self.metric_jet(i, j).cloned()).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let det = determinant_jet(&rows);
        let det = if det.value().to_f64() < 0.0 { det.neg() } else { det };
        det.sqrt()
    }

    /// Base connection coefficients with the value bundle `TM`.
    pub fn base_higher(&self, max_len: usize) -> HigherTable<S> {
        self.higher(max_len, self.n, |b, i, a| self.gamma(b, i, a).clone())
    }

    /// Fiber connection coefficients.
    pub fn fiber_higher(&self, max_len: usize) -> HigherTable<S> {
        self.higher(max_len, self.d, |b, i, a| self.fiber_coeff(b, i, a).clone())
    }

    /// The recursion
    /// `C_{I,a} = ∂_{i1} C_{I',a} + C^c_{I',a} C_{i1,c} − Σ_r Γ^l_{i1,I'_r} C_{I'[r→l],a}`,
    /// with `r` running over every position of `I'`.
    pub fn higher(&self, max_len: usize, dim: usize, first: impl Fn(usize, usize, usize) -> Jet<S>) -> HigherTable<S> {
        let n = self.n;
        let mut table: HashMap<Word, Vec<Jet<S>>> = HashMap::new();
        if max_len == 0 {
            return HigherTable { dim, max_len, table };
        }
        let firsts: Vec<Vec<Jet<S>>> = (0..n)
            .map(|i| {
                let mut v = Vec::with_capacity(dim * dim);
                for b in 0..dim {
                    for a in 0..dim {
                        v.push(first(b, i, a));
                    }
                }
                v
            })
            .collect();
        for (i, v) in firsts.iter().enumerate() {
            table.insert(Word::letter(i), v.clone());
        }
        for len in 2..=max_len {
            if len > self.order + 1 {
                break;
            }
            for w in Word::all_of_length(n, len) {
                let i1 = w.letters()[0] as usize;
                let tail = Word::from_slice(&w.letters()[1..]);
                let prev = &table[&tail];
                let mut out = Vec::with_capacity(dim * dim);
                for b in 0..dim {
                    for a in 0..dim {
                        let mut acc = prev[b * dim + a].deriv(i1);
                        for c in 0..dim {
                            acc.add_assign(&prev[c * dim + a].mul(&firsts[i1][b * dim + c]));
                        }
                        for (r, &letter) in tail.letters().iter().enumerate() {
                            for l in 0..n {
                                let g = self.gamma(l, i1, letter as usize);
                                if g.is_zero() {
                                    continue;
                                }
                                let swapped = &table[&tail.replace(r, l as u8)];
                                acc = acc.sub(&g.mul(&swapped[b * dim + a]));
                            }
                        }
                        out.push(acc);
                    }
                }
                table.insert(w, out);
            }
        }
        HigherTable { dim, max_len, table }
    }

    /// `Γ^k_{I,j}` at the base point.
    pub fn higher_christoffel(&self, word: &Word, j: usize) -> Result<Vec<S>> {
        if word.is_empty() {
            return Err(Error::invalid("higher Christoffel symbols need a nonempty word"));
        }
        if word.len() > self.order + 1 {
            return Err(Error::InsufficientOrder {
                need: word.len() - 1,
                have: self.order,
            });
        }
        let t = self.base_higher(word.len());
        Ok(t.column(word, j))
    }

    pub fn curvature(&self) -> Result<CurvatureAt<S>> {
        if self.order < 1 {
            return Err(Error::InsufficientOrder { need: 1, have: 0 });
        }
        let base = curvature_from(&self.base_higher(2), self.n);
        let fiber = curvature_from(&self.fiber_higher(2), self.n);
        Ok(CurvatureAt {
            n: self.n,
            d: self.d,
            base: base.iter().map(|j| j.value()).collect(),
            fiber: fiber.iter().map(|j| j.value()).collect(),
        })
    }

    /// Curvature jets `R^b_{a,u,v}` flattened `[u][v][b][a]` for base or fiber.
    pub fn curvature_jets(&self, fiber: bool) -> Vec<Jet<S>> {
        if fiber {
            curvature_from(&self.fiber_higher(2), self.n)
        } else {
            curvature_from(&self.base_higher(2), self.n)
        }
    }

    /// Dual-fiber coefficients `D^a_{i,b}` with `∇*_{e_i} ε^a = D^a_{i,b} ε^b`, flattened `[a][i][b]`.
    pub fn dual_connection(&self) -> Vec<S> {
        let (n, d) = (self.n, self.d);
        let mut out = Vec::with_capacity(d * n * d);
        for a in 0..d {
            for i in 0..n {
                for b in 0..d {
                    out.push(-self.fiber_coeff(a, i, b).value());
                }
            }
        }
        out
    }
}

fn curvature_from<S: Scalar>(t: &HigherTable<S>, n: usize) -> Vec<Jet<S>> {
    let dim = t.dim;
    let mut out = Vec::with_capacity(n * n * dim * dim);
    for u in 0..n {
        for v in 0..n {
            let uv = &t.table[&Word::from_slice(&[u as u8, v as u8])];
            let vu = &t.table[&Word::from_slice(&[v as u8, u as u8])];
            for idx in 0..dim * dim {
                out.push(uv[idx].sub(&vu[idx]));
            }
        }
    }
    out
}

/// Curvature components at a point: `R^k_{j,u,v}` with `R_{e_u,e_v} e_j = R^k_{j,u,v} e_k`.
#[derive(Debug, Clone)]
pub struct CurvatureAt<S: Scalar> {
    n: usize,
    d: usize,
    base: Vec<S>,
    fiber: Vec<S>,
}

impl<S: Scalar> CurvatureAt<S> {
    pub fn base(&self, k: usize, j: usize, u: usize, v: usize) -> S {
        let n = self.n;
        self.base[((u * n + v) * n + k) * n + j]
    }

    pub fn fiber(&self, b: usize, a: usize, u: usize, v: usize) -> S {
        let d = self.d;
        self.fiber[((u * self.n + v) * d + b) * d + a]
    }

    pub fn max_abs(&self) -> f64 {
        crate::scalar::max_magnitude(self.base.iter().chain(self.fiber.iter()).copied())
    }
}
