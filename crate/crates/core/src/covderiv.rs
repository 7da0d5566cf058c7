//! Higher covariant derivatives of component jets.
//!
//! A [`LocalField`] is a tensor product of representation factors with one jet
//! per component (row-major, first factor most significant). The covariant
//! derivative prepends a `T*M` factor:
//! `(∇F)_{i,a} = ∂_i F_a + Σ_factors K_i[a_f][b] F_{a[f→b]}`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::connection::{ChartConnection, LocalChart};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::jet::Jet;
use crate::multialg::{binomial, deshuffles, sort_with_sign, tensor_coproduct, wedge, AntiIndex, TensorExtElement, Word};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rep {
    Tangent,
    Cotangent,
    Fiber,
    CoFiber,
    FiberExt(usize),
    CoFiberExt(usize),
}

impl Rep {
    pub fn dual(self) -> Rep {
        match self {
            Rep::Tangent => Rep::Cotangent,
            Rep::Cotangent => Rep::Tangent,
            Rep::Fiber => Rep::CoFiber,
            Rep::CoFiber => Rep::Fiber,
            Rep::FiberExt(k) => Rep::CoFiberExt(k),
            Rep::CoFiberExt(k) => Rep::FiberExt(k),
        }
    }

    pub fn dim(self, n: usize, d: usize) -> usize {
        match self {
            Rep::Tangent | Rep::Cotangent => n,
            Rep::Fiber | Rep::CoFiber => d,
            Rep::FiberExt(k) | Rep::CoFiberExt(k) => binomial(d, k),
        }
    }
}

/// Source-indexed sparse action: `by_source[i][y] = [(x, K_i[x][y])]`.
type Action<S> = Vec<Vec<Vec<(usize, Jet<S>)>>>;

/// Connection actions of every representation at a point.
#[derive(Debug, Clone)]
pub struct CovContext<S: Scalar> {
    chart: LocalChart<S>,
    actions: HashMap<Rep, Action<S>>,
    tangent_fiber: bool,
}

impl<S: Scalar> CovContext<S> {
    pub fn new(chart: LocalChart<S>, tangent_fiber: bool) -> Self {
        let (n, d) = (chart.dim(), chart.fiber_dim());
        let mut actions = HashMap::new();
        let vector = |dim: usize, coeff: &dyn Fn(usize, usize, usize) -> Jet<S>| -> Action<S> {
            (0..n)
                .map(|i| {
                    (0..dim)
                        .map(|y| {
                            (0..dim)
                                .filter_map(|x| {
                                    let j = coeff(x, i, y);
                                    (!j.is_zero()).then_some((x, j))
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        actions.insert(Rep::Tangent, vector(n, &|x, i, y| chart.gamma(x, i, y).clone()));
        actions.insert(Rep::Fiber, vector(d, &|x, i, y| chart.fiber_coeff(x, i, y).clone()));
        for k in 0..=d {
            let basis = AntiIndex::all(d, k);
            let dim = basis.len();
            let mut m: Vec<Vec<Vec<Option<Jet<S>>>>> = vec![vec![vec![None; dim]; dim]; n];
            for i in 0..n {
                for (y, kk) in basis.iter().enumerate() {
                    for pos in 0..k {
                        for b in 0..d {
                            let a = chart.fiber_coeff(b, i, kk.letters()[pos] as usize);
                            if a.is_zero() {
                                continue;
                            }
                            let mut letters: Vec<u8> = kk.letters().to_vec();
                            letters[pos] = b as u8;
                            if let Some((sign, target)) = sort_with_sign(&letters) {
                                let x = target.rank(d);
                                let term = a.scale(S::from_int(sign as i64));
                                let slot = &mut m[i][x][y];
                                *slot = Some(match slot.take() {
                                    Some(j) => j.add(&term),
                                    None => term,
                                });
                            }
                        }
                    }
                }
            }
            let act: Action<S> = (0..n)
                .map(|i| {
                    (0..dim)
                        .map(|y| {
                            (0..dim)
                                .filter_map(|x| m[i][x][y].clone().filter(|j| !j.is_zero()).map(|j| (x, j)))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            actions.insert(Rep::FiberExt(k), act);
        }
        let reps: Vec<Rep> = actions.keys().copied().collect();
        for rep in reps {
            let dual = dualize(&actions[&rep]);
            actions.insert(rep.dual(), dual);
        }
        CovContext {
            chart,
            actions,
            tangent_fiber,
        }
    }

    /// Context for `cc` at `p` with connection jets of `order`.
    pub fn at(cc: &ChartConnection, p: &[S], order: usize) -> Result<Self> {
        Ok(Self::new(cc.local(p, order)?, cc.fiber_is_tangent()))
    }

    pub fn chart(&self) -> &LocalChart<S> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.chart.fiber_dim()
    }

    pub fn tangent_fiber(&self) -> bool {
        self.tangent_fiber
    }

    pub fn rep_dim(&self, r: Rep) -> usize {
        r.dim(self.dim(), self.fiber_dim())
    }

    fn action(&self, r: Rep) -> &Action<S> {
        &self.actions[&r]
    }

    pub fn constant_jet(&self, v: S, order: usize) -> Jet<S> {
        Jet::constant(self.chart.family(), order, v)
    }
}

fn dualize<S: Scalar>(act: &Action<S>) -> Action<S> {
    act.iter()
        .map(|by_src| {
            let dim = by_src.len();
            let mut out: Vec<Vec<(usize, Jet<S>)>> = vec![Vec::new(); dim];
            for (y, entries) in by_src.iter().enumerate() {
                for (x, j) in entries {
                    // vector: target x, source y; dual: target y, source x
                    out[*x].push((y, j.neg()));
                }
            }
            out
        })
        .collect()
}

/// Component jets of a tensor-product field near a point.
#[derive(Debug, Clone)]
pub struct LocalField<S: Scalar> {
    reps: Vec<Rep>,
    dims: Vec<usize>,
    comps: Vec<Jet<S>>,
}

impl<S: Scalar> LocalField<S> {
    pub fn new(ctx: &CovContext<S>, reps: Vec<Rep>, comps: Vec<Jet<S>>) -> Result<Self> {
        let dims: Vec<usize> = reps.iter().map(|r| ctx.rep_dim(*r)).collect();
        let total: usize = dims.iter().product();
        if comps.len() != total {
            return Err(Error::invalid(format!(
                "field with factors {reps:?} needs {total} components, got {}",
                comps.len()
            )));
        }
        Ok(LocalField { reps, dims, comps })
    }

    pub fn scalar(f: Jet<S>) -> Self {
        LocalField {
            reps: Vec::new(),
            dims: Vec::new(),
            comps: vec![f],
        }
    }

    /// A field with constant components.
    pub fn constant(ctx: &CovContext<S>, reps: Vec<Rep>, values: &[S], order: usize) -> Result<Self> {
        let comps = values.iter().map(|v| ctx.constant_jet(*v, order)).collect();
        Self::new(ctx, reps, comps)
    }

    pub fn zeros(ctx: &CovContext<S>, reps: Vec<Rep>, order: usize) -> Self {
        let dims: Vec<usize> = reps.iter().map(|r| ctx.rep_dim(*r)).collect();
        let total: usize = dims.iter().product();
        LocalField {
            reps,
            dims,
            comps: vec![ctx.constant_jet(S::zero(), order); total],
        }
    }

    pub fn reps(&self) -> &[Rep] {
        &self.reps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn comps(&self) -> &[Jet<S>] {
        &self.comps
    }

    pub fn comps_mut(&mut self) -> &mut [Jet<S>] {
        &mut self.comps
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn order(&self) -> usize {
        self.comps.iter().map(|c| c.order()).min().unwrap_or(0)
    }

    pub fn values(&self) -> Vec<S> {
        self.comps.iter().map(|c| c.value()).collect()
    }

    pub fn truncate(&self, order: usize) -> Self {
        LocalField {
            reps: self.reps.clone(),
            dims: self.dims.clone(),
            comps: self.comps.iter().map(|c| c.truncate(order)).collect(),
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.reps != other.reps {
            return Err(Error::invalid("field shapes differ"));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(LocalField {
            reps: self.reps.clone(),
            dims: self.dims.clone(),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(LocalField {
            reps: self.reps.clone(),
            dims: self.dims.clone(),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect(),
        })
    }

    pub fn scale(&self, s: S) -> Self {
        LocalField {
            reps: self.reps.clone(),
            dims: self.dims.clone(),
            comps: self.comps.iter().map(|c| c.scale(s)).collect(),
        }
    }

    pub fn mul_jet(&self, f: &Jet<S>) -> Self {
        LocalField {
            reps: self.reps.clone(),
            dims: self.dims.clone(),
            comps: self.comps.iter().map(|c| c.mul(f)).collect(),
        }
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut comps = Vec::with_capacity(self.comps.len() * other.comps.len());
        for a in &self.comps {
            for b in &other.comps {
                comps.push(a.mul(b));
            }
        }
        LocalField {
            reps: self.reps.iter().chain(&other.reps).copied().collect(),
            dims: self.dims.iter().chain(&other.dims).copied().collect(),
            comps,
        }
    }

    /// Fix the leading slots to the letters of `w`.
    pub fn slice(&self, w: &Word) -> Self {
        let inner: usize = self.dims[w.len()..].iter().product();
        let mut offset = 0;
        for (pos, &l) in w.letters().iter().enumerate() {
            offset = offset * self.dims[pos] + l as usize;
        }
        let start = offset * inner;
        LocalField {
            reps: self.reps[w.len()..].to_vec(),
            dims: self.dims[w.len()..].to_vec(),
            comps: self.comps[start..start + inner].to_vec(),
        }
    }

    /// Contract the leading `m` tangent-word slots with a point tensor of order `m`.
    pub fn contract_leading(&self, tensor: &[S], m: usize) -> Self {
        let inner: usize = self.dims[m..].iter().product();
        let fam = self.comps[0].family().clone();
        let order = self.order();
        let mut comps = vec![Jet::zero(&fam, order); inner];
        for (w, t) in tensor.iter().enumerate() {
            if t.is_zero() {
                continue;
            }
            for (a, c) in comps.iter_mut().enumerate() {
                c.add_scaled(*t, &self.comps[w * inner + a]);
            }
        }
        LocalField {
            reps: self.reps[m..].to_vec(),
            dims: self.dims[m..].to_vec(),
            comps,
        }
    }

    /// Covariant derivative; the new leading factor is `T*M`.
    pub fn nabla(&self, ctx: &CovContext<S>) -> Result<Self> {
        let order = self.order();
        if order == 0 {
            return Err(Error::InsufficientOrder { need: 1, have: 0 });
        }
        let n = ctx.dim();
        let inner = self.comps.len();
        let mut strides = vec![1usize; self.dims.len()];
        for f in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[f] = strides[f + 1] * self.dims[f + 1];
        }
        let mut comps = Vec::with_capacity(n * inner);
        for i in 0..n {
            let mut block: Vec<Jet<S>> = self.comps.iter().map(|c| c.deriv(i)).collect();
            for (f, rep) in self.reps.iter().enumerate() {
                let act = &ctx.action(*rep)[i];
                let (stride, dim) = (strides[f], self.dims[f]);
                for (a, src) in self.comps.iter().enumerate() {
                    if src.is_zero() {
                        continue;
                    }
                    let y = (a / stride) % dim;
                    for (x, k) in &act[y] {
                        let target = a + x * stride - y * stride;
                        let t = k.mul(src);
                        block[target].add_assign(&t);
                    }
                }
            }
            comps.extend(block);
        }
        let mut reps = Vec::with_capacity(self.reps.len() + 1);
        reps.push(Rep::Cotangent);
        reps.extend_from_slice(&self.reps);
        let mut dims = Vec::with_capacity(self.dims.len() + 1);
        dims.push(n);
        dims.extend_from_slice(&self.dims);
        Ok(LocalField { reps, dims, comps })
    }

    /// `[F, ∇F, ∇²F, …, ∇^depth F]`.
    pub fn tower(&self, ctx: &CovContext<S>, depth: usize) -> Result<Vec<Self>> {
        if self.order() < depth {
            return Err(Error::InsufficientOrder {
                need: depth,
                have: self.order(),
            });
        }
        let mut out = vec![self.clone()];
        for _ in 0..depth {
            let next = out.last().expect("nonempty").nabla(ctx)?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn max_abs_value(&self) -> f64 {
        crate::scalar::max_magnitude(self.values())
    }
}

/// Values of `∇_{e_w} F` at the base point.
pub fn nabla_word<S: Scalar>(tower: &[LocalField<S>], w: &Word) -> Result<Vec<S>> {
    let level = tower.get(w.len()).ok_or(Error::InsufficientOrder {
        need: w.len(),
        have: tower.len().saturating_sub(1),
    })?;
    Ok(level.slice(w).values())
}

/// Expression-level field: representation factors plus one expression per component.
#[derive(Debug, Clone)]
pub struct Field {
    reps: Vec<Rep>,
    comps: Vec<Expression>,
}

impl Field {
    pub fn new(reps: Vec<Rep>, comps: Vec<Expression>) -> Self {
        Field { reps, comps }
    }

    pub fn scalar(e: Expression) -> Self {
        Field::new(Vec::new(), vec![e])
    }

    pub fn tensor(m: usize, comps: Vec<Expression>) -> Self {
        Field::new(vec![Rep::Tangent; m], comps)
    }

    pub fn form(k: usize, comps: Vec<Expression>) -> Self {
        Field::new(vec![Rep::CoFiberExt(k)], comps)
    }

    pub fn ext_vector(k: usize, comps: Vec<Expression>) -> Self {
        Field::new(vec![Rep::FiberExt(k)], comps)
    }

    pub fn reps(&self) -> &[Rep] {
        &self.reps
    }

    pub fn comps(&self) -> &[Expression] {
        &self.comps
    }

    pub fn local<S: Scalar>(&self, ctx: &CovContext<S>, order: usize) -> Result<LocalField<S>> {
        let fam = ctx.chart().family();
        let p = ctx.chart().point();
        let comps = self
            .comps
            .iter()
            .map(|e| e.eval_jet(p, fam, order))
            .collect::<Result<Vec<_>>>()?;
        LocalField::new(ctx, self.reps.clone(), comps)
    }
}

/// `∇_{e_I}` of an expression field at `p`.
pub fn nabla<S: Scalar>(cc: &ChartConnection, field: &Field, word: &Word, p: &[S]) -> Result<Vec<S>> {
    let ctx = CovContext::at(cc, p, word.len().max(1))?;
    let f = field.local(&ctx, word.len())?;
    nabla_word(&f.tower(&ctx, word.len())?, word)
}

/// Coordinate tensor field `e_W` (constant components).
pub fn word_field<S: Scalar>(ctx: &CovContext<S>, w: &Word, order: usize) -> LocalField<S> {
    let n = ctx.dim();
    let m = w.len();
    let mut vals = vec![S::zero(); n.pow(m as u32)];
    vals[w.flat_index(n)] = S::one();
    LocalField::constant(ctx, vec![Rep::Tangent; m], &vals, order).expect("shape")
}

/// `(∇̂_{e_B} e_W)_p` as a tensor of order `|W|`.
pub fn nabla_hat_word<S: Scalar>(ctx: &CovContext<S>, b: &Word, w: &Word) -> Result<Vec<S>> {
    let f = word_field(ctx, w, b.len());
    nabla_word(&f.tower(ctx, b.len())?, b)
}

/// Same tensor assembled from higher Christoffel symbols by the Leibniz rule.
pub fn nabla_hat_word_christoffel<S: Scalar>(ctx: &CovContext<S>, b: &Word, w: &Word) -> Result<Vec<S>> {
    let n = ctx.dim();
    let table = ctx.chart().base_higher(b.len());
    let m = w.len();
    let mut out = vec![S::zero(); n.pow(m as u32)];
    for parts in deshuffles(b, m.max(1)) {
        if m == 0 {
            if b.is_empty() {
                out[0] = S::one();
            }
            break;
        }
        let cols: Vec<Vec<S>> = parts
            .iter()
            .zip(w.letters())
            .map(|(part, &j)| table.column(part, j as usize))
            .collect();
        for (idx, slot) in out.iter_mut().enumerate() {
            let word = Word::from_flat_index(idx, m, n);
            let mut prod = S::one();
            for (t, &l) in word.letters().iter().enumerate() {
                prod *= cols[t][l as usize];
                if prod.is_zero() {
                    break;
                }
            }
            *slot += prod;
        }
    }
    Ok(out)
}

/// Tensor product of point tensors of orders `ma`, `mb` (flattened).
pub fn tensor_values<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(*x * *y);
        }
    }
    out
}

pub fn max_diff<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x - *y;
            if d.is_valid() {
                d.magnitude()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Residual of `∇_v ∘ ∇_w = Σ ∇_{v(1) ⊗ ∇̂_{v(2)} w}` on `field`.
pub fn nabla_compose_check<S: Scalar>(ctx: &CovContext<S>, field: &LocalField<S>, v: &Word, w: &Word) -> Result<f64> {
    let tower = field.tower(ctx, v.len() + w.len())?;
    let inner = tower[w.len()].slice(w);
    let lhs = nabla_word(&inner.tower(ctx, v.len())?, v)?;
    let mut rhs = vec![S::zero(); lhs.len()];
    for (v1, v2) in tensor_coproduct(v) {
        let t = nabla_hat_word(ctx, &v2, w)?;
        let level = tower[v1.len() + w.len()].slice(&v1);
        let c = level.contract_leading(&t, w.len()).values();
        for (r, x) in rhs.iter_mut().zip(c) {
            *r += x;
        }
    }
    Ok(max_diff(&lhs, &rhs))
}

/// Residual of `∇_v(α⊗β) = Σ ∇_{v(1)}α ⊗ ∇_{v(2)}β`.
pub fn leibniz_check<S: Scalar>(ctx: &CovContext<S>, a: &LocalField<S>, b: &LocalField<S>, v: &Word) -> Result<f64> {
    let depth = v.len();
    let lhs = nabla_word(&a.tensor(b).tower(ctx, depth)?, v)?;
    let ta = a.tower(ctx, depth)?;
    let tb = b.tower(ctx, depth)?;
    let mut rhs = vec![S::zero(); lhs.len()];
    for (v1, v2) in tensor_coproduct(v) {
        let t = tensor_values(&nabla_word(&ta, &v1)?, &nabla_word(&tb, &v2)?);
        for (r, x) in rhs.iter_mut().zip(t) {
            *r += x;
        }
    }
    Ok(max_diff(&lhs, &rhs))
}

/// Wedge product of two fields with a single exterior factor each (both forms or both multivectors).
pub fn wedge_fields<S: Scalar>(ctx: &CovContext<S>, a: &LocalField<S>, b: &LocalField<S>) -> Result<LocalField<S>> {
    let (ka, kb, dual) = match (a.reps(), b.reps()) {
        ([Rep::CoFiberExt(x)], [Rep::CoFiberExt(y)]) => (*x, *y, true),
        ([Rep::FiberExt(x)], [Rep::FiberExt(y)]) => (*x, *y, false),
        _ => return Err(Error::invalid("wedge needs two exterior fields of the same variance")),
    };
    let d = ctx.fiber_dim();
    let k = ka + kb;
    if k > d {
        return Ok(LocalField::zeros(
            ctx,
            vec![if dual { Rep::CoFiberExt(d) } else { Rep::FiberExt(d) }],
            a.order().min(b.order()),
        )
        .truncate(0));
    }
    let order = a.order().min(b.order());
    let rep = if dual { Rep::CoFiberExt(k) } else { Rep::FiberExt(k) };
    let mut out = LocalField::zeros(ctx, vec![rep], order);
    let ba = AntiIndex::all(d, ka);
    let bb = AntiIndex::all(d, kb);
    for (i, x) in ba.iter().enumerate() {
        for (j, y) in bb.iter().enumerate() {
            if let Some((sign, z)) = wedge(x, y) {
                let t = a.comps()[i].mul(&b.comps()[j]).scale(S::from_int(sign as i64));
                out.comps_mut()[z.rank(d)].add_assign(&t);
            }
        }
    }
    Ok(out)
}

fn wedge_values<S: Scalar>(d: usize, ka: usize, a: &[S], kb: usize, b: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); binomial(d, ka + kb)];
    for (i, x) in AntiIndex::all(d, ka).iter().enumerate() {
        for (j, y) in AntiIndex::all(d, kb).iter().enumerate() {
            if let Some((sign, z)) = wedge(x, y) {
                out[z.rank(d)] += a[i] * b[j] * S::from_int(sign as i64);
            }
        }
    }
    out
}

fn ext_degree(f: &LocalField<impl Scalar>) -> Result<usize> {
    match f.reps() {
        [Rep::CoFiberExt(k)] | [Rep::FiberExt(k)] => Ok(*k),
        _ => Err(Error::invalid("expected an exterior field")),
    }
}

/// Residual of the shuffle formula `∇_v(ω∧η) = Σ ∇_{v(1)}ω ∧ ∇_{v(2)}η`.
pub fn shuffle_check<S: Scalar>(ctx: &CovContext<S>, omega: &LocalField<S>, eta: &LocalField<S>, v: &Word) -> Result<f64> {
    let (ka, kb) = (ext_degree(omega)?, ext_degree(eta)?);
    let depth = v.len();
    let lhs = nabla_word(&wedge_fields(ctx, omega, eta)?.tower(ctx, depth)?, v)?;
    let ta = omega.tower(ctx, depth)?;
    let tb = eta.tower(ctx, depth)?;
    let mut rhs = vec![S::zero(); lhs.len()];
    for (v1, v2) in tensor_coproduct(v) {
        let t = wedge_values(ctx.fiber_dim(), ka, &nabla_word(&ta, &v1)?, kb, &nabla_word(&tb, &v2)?);
        for (r, x) in rhs.iter_mut().zip(t) {
            *r += x;
        }
    }
    Ok(max_diff(&lhs, &rhs))
}

/// Residual of `∇_v(ω(α)) = Σ (∇_{v(1)}ω)(∇_{v(2)}α)` for a form and a multivector of equal degree.
pub fn contraction_check<S: Scalar>(ctx: &CovContext<S>, omega: &LocalField<S>, alpha: &LocalField<S>, v: &Word) -> Result<f64> {
    if omega.len() != alpha.len() {
        return Err(Error::invalid("contraction needs equal degrees"));
    }
    let mut pairing = Jet::zero(ctx.chart().family(), omega.order().min(alpha.order()));
    for (a, b) in omega.comps().iter().zip(alpha.comps()) {
        pairing.add_assign(&a.mul(b));
    }
    let depth = v.len();
    let lhs = nabla_word(&LocalField::scalar(pairing).tower(ctx, depth)?, v)?;
    let ta = omega.tower(ctx, depth)?;
    let tb = alpha.tower(ctx, depth)?;
    let mut rhs = S::zero();
    for (v1, v2) in tensor_coproduct(v) {
        let x = nabla_word(&ta, &v1)?;
        let y = nabla_word(&tb, &v2)?;
        for (a, b) in x.iter().zip(&y) {
            rhs += *a * *b;
        }
    }
    Ok(max_diff(&lhs, &[rhs]))
}

/// Interior product `ι_X ω` of a fiber vector with a form, as values.
fn interior_values<S: Scalar>(d: usize, k: usize, x: &[S], omega: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); binomial(d, k - 1)];
    for (j, kp) in AntiIndex::all(d, k - 1).iter().enumerate() {
        for (a, xa) in x.iter().enumerate() {
            if kp.contains(a) {
                continue;
            }
            let (sign, full) = wedge(&AntiIndex::single(a), kp).expect("disjoint");
            out[j] += *xa * omega[full.rank(d)] * S::from_int(sign as i64);
        }
    }
    out
}

pub fn interior_field<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>, omega: &LocalField<S>) -> Result<LocalField<S>> {
    let k = match omega.reps() {
        [Rep::CoFiberExt(k)] if *k >= 1 => *k,
        _ => return Err(Error::invalid("interior product needs a form of degree ≥ 1")),
    };
    if x.reps() != [Rep::Fiber] {
        return Err(Error::invalid("interior product needs a fiber vector field"));
    }
    let d = ctx.fiber_dim();
    let order = x.order().min(omega.order());
    let mut out = LocalField::zeros(ctx, vec![Rep::CoFiberExt(k - 1)], order);
    for (j, kp) in AntiIndex::all(d, k - 1).iter().enumerate() {
        for a in 0..d {
            if kp.contains(a) {
                continue;
            }
            let (sign, full) = wedge(&AntiIndex::single(a), kp).expect("disjoint");
            let t = x.comps()[a].mul(&omega.comps()[full.rank(d)]).scale(S::from_int(sign as i64));
            out.comps_mut()[j].add_assign(&t);
        }
    }
    Ok(out)
}

/// Residual of `∇_v(ι_X ω) = Σ ι_{∇_{v(1)}X}(∇_{v(2)}ω)`.
pub fn interior_check<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>, omega: &LocalField<S>, v: &Word) -> Result<f64> {
    let k = ext_degree(omega)?;
    let depth = v.len();
    let lhs = nabla_word(&interior_field(ctx, x, omega)?.tower(ctx, depth)?, v)?;
    let tx = x.tower(ctx, depth)?;
    let to = omega.tower(ctx, depth)?;
    let mut rhs = vec![S::zero(); lhs.len()];
    for (v1, v2) in tensor_coproduct(v) {
        let t = interior_values(ctx.fiber_dim(), k, &nabla_word(&tx, &v1)?, &nabla_word(&to, &v2)?);
        for (r, x) in rhs.iter_mut().zip(t) {
            *r += x;
        }
    }
    Ok(max_diff(&lhs, &rhs))
}

/// Coproduct of a multivector field into `∧^a ⊗ ∧^{k−a}` components, for every `a`.
fn ext_coproduct_field<S: Scalar>(ctx: &CovContext<S>, alpha: &LocalField<S>) -> Result<Vec<LocalField<S>>> {
    let k = match alpha.reps() {
        [Rep::FiberExt(k)] => *k,
        _ => return Err(Error::invalid("expected a multivector field")),
    };
    let d = ctx.fiber_dim();
    let basis = AntiIndex::all(d, k);
    let mut out = Vec::new();
    for a in 0..=k {
        let mut f = LocalField::zeros(ctx, vec![Rep::FiberExt(a), Rep::FiberExt(k - a)], alpha.order());
        let inner = binomial(d, k - a);
        for (idx, kk) in basis.iter().enumerate() {
            for (sign, x, y) in crate::multialg::wedge_coproduct(kk) {
                if x.len() != a {
                    continue;
                }
                let t = alpha.comps()[idx].scale(S::from_int(sign as i64));
                f.comps_mut()[x.rank(d) * inner + y.rank(d)].add_assign(&t);
            }
        }
        out.push(f);
    }
    Ok(out)
}

fn ext_coproduct_values<S: Scalar>(d: usize, k: usize, alpha: &[S]) -> Vec<Vec<S>> {
    let basis = AntiIndex::all(d, k);
    (0..=k)
        .map(|a| {
            let inner = binomial(d, k - a);
            let mut v = vec![S::zero(); binomial(d, a) * inner];
            for (idx, kk) in basis.iter().enumerate() {
                for (sign, x, y) in crate::multialg::wedge_coproduct(kk) {
                    if x.len() == a {
                        v[x.rank(d) * inner + y.rank(d)] += alpha[idx] * S::from_int(sign as i64);
                    }
                }
            }
            v
        })
        .collect()
}

/// Residual of `∇_v(Δα) = Δ(∇_v α)` for a multivector field.
pub fn coproduct_commutation_check<S: Scalar>(ctx: &CovContext<S>, alpha: &LocalField<S>, v: &Word) -> Result<f64> {
    let k = ext_degree(alpha)?;
    let depth = v.len();
    let rhs = ext_coproduct_values(ctx.fiber_dim(), k, &nabla_word(&alpha.tower(ctx, depth)?, v)?);
    let mut worst: f64 = 0.0;
    for (part, want) in ext_coproduct_field(ctx, alpha)?.iter().zip(&rhs) {
        let lhs = nabla_word(&part.tower(ctx, depth)?, v)?;
        worst = worst.max(max_diff(&lhs, want));
    }
    Ok(worst)
}

/// Residual of `∇_v(Δ Y) = Δ(∇_v Y)` for a tangent tensor field of order `m` under the deshuffle coproduct.
pub fn tensor_coproduct_commutation_check<S: Scalar>(ctx: &CovContext<S>, y: &LocalField<S>, v: &Word) -> Result<f64> {
    let m = y.reps().len();
    if y.reps().iter().any(|r| *r != Rep::Tangent) {
        return Err(Error::invalid("expected a tangent tensor field"));
    }
    let n = ctx.dim();
    let depth = v.len();
    let nv = nabla_word(&y.tower(ctx, depth)?, v)?;
    let mut worst: f64 = 0.0;
    for mask in 0..(1usize << m) {
        // split positions by mask into a field of order (|A|, m−|A|)
        let mut f = LocalField::zeros(ctx, vec![Rep::Tangent; m], y.order());
        let mut want = vec![S::zero(); n.pow(m as u32)];
        for idx in 0..n.pow(m as u32) {
            let w = Word::from_flat_index(idx, m, n);
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (pos, &l) in w.letters().iter().enumerate() {
                if mask & (1 << pos) != 0 {
                    a.push(l);
                } else {
                    b.push(l);
                }
            }
            let target = Word::from_slice(&[a, b].concat()).flat_index(n);
            f.comps_mut()[target].add_assign(&y.comps()[idx]);
            want[target] += nv[idx];
        }
        let lhs = nabla_word(&f.tower(ctx, depth)?, v)?;
        worst = worst.max(max_diff(&lhs, &want));
    }
    Ok(worst)
}

/// Curvature of a representation as an `End`-valued field with factors `[T*, T*, rep, rep*]`.
pub fn curvature_field<S: Scalar>(ctx: &CovContext<S>, rep: Rep) -> Result<LocalField<S>> {
    let n = ctx.dim();
    let dim = ctx.rep_dim(rep);
    let act = ctx.action(rep);
    let order = ctx.chart().order().saturating_sub(1);
    let mut out = LocalField::zeros(ctx, vec![Rep::Cotangent, Rep::Cotangent, rep, rep.dual()], order);
    // R_{uv} = ∂_u K_v − ∂_v K_u + K_u K_v − K_v K_u on component actions
    let dense = |i: usize| -> Vec<Vec<Option<&Jet<S>>>> {
        let mut m = vec![vec![None; dim]; dim];
        for (y, entries) in act[i].iter().enumerate() {
            for (x, j) in entries {
                m[*x][y] = Some(j);
            }
        }
        m
    };
    let mats: Vec<_> = (0..n).map(dense).collect();
    for u in 0..n {
        for v in 0..n {
            for x in 0..dim {
                for y in 0..dim {
                    let mut acc = Jet::zero(ctx.chart().family(), order);
                    if let Some(j) = mats[v][x][y] {
                        acc.add_assign(&j.deriv(u));
                    }
                    if let Some(j) = mats[u][x][y] {
                        acc = acc.sub(&j.deriv(v));
                    }
                    for z in 0..dim {
                        if let (Some(a), Some(b)) = (mats[u][x][z], mats[v][z][y]) {
                            acc.add_assign(&a.mul(b));
                        }
                        if let (Some(a), Some(b)) = (mats[v][x][z], mats[u][z][y]) {
                            acc = acc.sub(&a.mul(b));
                        }
                    }
                    out.comps_mut()[((u * n + v) * dim + x) * dim + y] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Towers of the curvature fields of the given representations.
pub fn curvature_towers<S: Scalar>(ctx: &CovContext<S>, reps: &[Rep], depth: usize) -> Result<HashMap<Rep, Vec<LocalField<S>>>> {
    let mut towers = HashMap::new();
    for rep in reps {
        if !towers.contains_key(rep) {
            towers.insert(*rep, curvature_field(ctx, *rep)?.tower(ctx, depth)?);
        }
    }
    Ok(towers)
}

/// Covariant derivative of curvature acting as a derivation on a tensor-product shape, at the base point:
/// returns the matrix `[target][source]` of `(∇_W R)_{x,y}` contracted with `xy` tensor `t2`.
pub fn curvature_on_shape<S: Scalar>(
    ctx: &CovContext<S>,
    towers: &HashMap<Rep, Vec<LocalField<S>>>,
    reps: &[Rep],
    w: &Word,
    t2: &[S],
) -> Result<Vec<Vec<S>>> {
    let dims: Vec<usize> = reps.iter().map(|r| ctx.rep_dim(*r)).collect();
    let total: usize = dims.iter().product();
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    let mut out = vec![vec![S::zero(); total]; total];
    for (f, rep) in reps.iter().enumerate() {
        let dim = dims[f];
        let level = towers[rep][w.len()].slice(w).contract_leading(t2, 2).values();
        for a in 0..total {
            let y = (a / strides[f]) % dim;
            for x in 0..dim {
                let c = level[x * dim + y];
                if c.is_zero() {
                    continue;
                }
                let target = a + x * strides[f] - y * strides[f];
                out[target][a] += c;
            }
        }
    }
    Ok(out)
}

/// Residual of the fundamental commutation identity for words `u`, `v` and indices `a`, `b`.
pub fn fundamental_commutation_check<S: Scalar>(
    ctx: &CovContext<S>,
    field: &LocalField<S>,
    u: &Word,
    v: &Word,
    a: usize,
    b: usize,
) -> Result<f64> {
    let depth = u.len() + v.len() + 2;
    let tower = field.tower(ctx, depth)?;
    let ab = Word::from_slice(&[a as u8, b as u8]);
    let ba = Word::from_slice(&[b as u8, a as u8]);
    let abv = ab.concat(v);
    let bav = ba.concat(v);
    // left side
    let mut lhs = vec![S::zero(); field.len()];
    for (u1, u2) in tensor_coproduct(u) {
        let t = nabla_hat_word(ctx, &u2, &abv)?;
        let t2 = nabla_hat_word(ctx, &u2, &bav)?;
        let t: Vec<S> = t.iter().zip(&t2).map(|(x, y)| *x - *y).collect();
        let c = tower[u1.len() + abv.len()].slice(&u1).contract_leading(&t, abv.len()).values();
        for (l, x) in lhs.iter_mut().zip(c) {
            *l += x;
        }
    }
    let mut reps_needed: Vec<Rep> = field.reps().to_vec();
    reps_needed.push(Rep::Tangent);
    let towers = curvature_towers(ctx, &reps_needed, u.len())?;
    let mut rhs = vec![S::zero(); field.len()];
    for parts in deshuffles(u, 4) {
        let (u1, u2, u3, u4) = (&parts[0], &parts[1], &parts[2], &parts[3]);
        let hab = nabla_hat_word(ctx, u2, &ab)?;
        let rm = curvature_on_shape(ctx, &towers, field.reps(), u1, &hab)?;
        let hv = nabla_hat_word(ctx, u4, v)?;
        let inner = tower[u3.len() + v.len()].slice(u3).contract_leading(&hv, v.len()).values();
        for (x, row) in rm.iter().enumerate() {
            for (y, c) in row.iter().enumerate() {
                rhs[x] += *c * inner[y];
            }
        }
    }
    let shape = vec![Rep::Tangent; v.len()];
    for parts in deshuffles(u, 4) {
        let (u1, u2, u3, u4) = (&parts[0], &parts[1], &parts[2], &parts[3]);
        let hab = nabla_hat_word(ctx, u3, &ab)?;
        let hv = nabla_hat_word(ctx, u4, v)?;
        let rm = curvature_on_shape(ctx, &towers, &shape, u2, &hab)?;
        let mut z = vec![S::zero(); hv.len()];
        for (x, row) in rm.iter().enumerate() {
            for (y, c) in row.iter().enumerate() {
                z[x] += *c * hv[y];
            }
        }
        let c = tower[u1.len() + v.len()].slice(u1).contract_leading(&z, v.len()).values();
        for (r, x) in rhs.iter_mut().zip(c) {
            *r -= x;
        }
    }
    Ok(max_diff(&lhs, &rhs))
}

/// Exterior derivative of a form on `E = TM` via `Σ e^i ∧ ∇_{e_i} ω`.
pub fn exterior_derivative<S: Scalar>(ctx: &CovContext<S>, omega: &LocalField<S>) -> Result<LocalField<S>> {
    let k = match omega.reps() {
        [Rep::CoFiberExt(k)] => *k,
        [] => 0,
        _ => return Err(Error::invalid("exterior derivative needs a form")),
    };
    if !ctx.tangent_fiber() {
        return Err(Error::invalid("exterior derivative needs the tangent fiber"));
    }
    let n = ctx.dim();
    let nab = omega.nabla(ctx)?;
    let inner = binomial(n, k);
    let mut out = LocalField::zeros(ctx, vec![Rep::CoFiberExt(k + 1)], nab.order());
    for (jdx, jj) in AntiIndex::all(n, k + 1).iter().enumerate() {
        for m in 0..=k {
            let i = jj.letters()[m] as usize;
            let rest = jj.without_pos(m);
            let src = &nab.comps()[i * inner + rest.rank(n)];
            let t = if m % 2 == 0 { src.clone() } else { src.neg() };
            out.comps_mut()[jdx].add_assign(&t);
        }
    }
    Ok(out)
}

/// Exterior derivative from plain partial derivatives (connection-free reference).
pub fn exterior_derivative_partial<S: Scalar>(ctx: &CovContext<S>, omega: &LocalField<S>) -> Result<LocalField<S>> {
    let k = match omega.reps() {
        [Rep::CoFiberExt(k)] => *k,
        [] => 0,
        _ => return Err(Error::invalid("exterior derivative needs a form")),
    };
    let n = ctx.dim();
    let order = omega.order().checked_sub(1).ok_or(Error::InsufficientOrder { need: 1, have: 0 })?;
    let mut out = LocalField::zeros(ctx, vec![Rep::CoFiberExt(k + 1)], order);
    for (jdx, jj) in AntiIndex::all(n, k + 1).iter().enumerate() {
        for m in 0..=k {
            let i = jj.letters()[m] as usize;
            let rest = jj.without_pos(m);
            let d = omega.comps()[rest.rank(n)].deriv(i);
            let t = if m % 2 == 0 { d } else { d.neg() };
            out.comps_mut()[jdx].add_assign(&t);
        }
    }
    Ok(out)
}

/// Tangent-tensor and multivector parts keyed by `(tensor order, exterior degree)`;
/// each part has factors `[Tangent; m] + [FiberExt(k)]`.
#[derive(Debug, Clone, Default)]
pub struct MixedField<S: Scalar> {
    parts: BTreeMap<(usize, usize), LocalField<S>>,
}

impl<S: Scalar> MixedField<S> {
    pub fn new() -> Self {
        MixedField { parts: BTreeMap::new() }
    }

    pub fn reps(m: usize, k: usize) -> Vec<Rep> {
        let mut r = vec![Rep::Tangent; m];
        r.push(Rep::FiberExt(k));
        r
    }

    /// Insert or accumulate a part.
    pub fn add_part(&mut self, m: usize, k: usize, f: LocalField<S>) -> Result<()> {
        if f.reps() != Self::reps(m, k).as_slice() {
            return Err(Error::invalid("part has the wrong factors"));
        }
        match self.parts.remove(&(m, k)) {
            Some(old) => {
                let order = old.order().min(f.order());
                self.parts.insert((m, k), old.truncate(order).add(&f.truncate(order))?);
            }
            None => {
                self.parts.insert((m, k), f);
            }
        }
        Ok(())
    }

    pub fn parts(&self) -> impl Iterator<Item = (&(usize, usize), &LocalField<S>)> {
        self.parts.iter()
    }

    pub fn part(&self, m: usize, k: usize) -> Option<&LocalField<S>> {
        self.parts.get(&(m, k))
    }

    pub fn order(&self) -> usize {
        self.parts.values().map(|f| f.order()).min().unwrap_or(usize::MAX)
    }

    /// A pure tangent tensor field of order `m`.
    pub fn from_tensor(ctx: &CovContext<S>, f: &LocalField<S>) -> Result<Self> {
        let m = f.reps().len();
        if f.reps().iter().any(|r| *r != Rep::Tangent) {
            return Err(Error::invalid("expected a tangent tensor field"));
        }
        let g = LocalField::new(ctx, Self::reps(m, 0), f.comps().to_vec())?;
        let mut out = Self::new();
        out.add_part(m, 0, g)?;
        Ok(out)
    }

    /// A pure multivector field of degree `k`.
    pub fn from_ext(ctx: &CovContext<S>, f: &LocalField<S>) -> Result<Self> {
        let k = match f.reps() {
            [Rep::FiberExt(k)] => *k,
            [] => 0,
            _ => return Err(Error::invalid("expected a multivector field")),
        };
        let g = LocalField::new(ctx, Self::reps(0, k), f.comps().to_vec())?;
        let mut out = Self::new();
        out.add_part(0, k, g)?;
        Ok(out)
    }

    pub fn unit(ctx: &CovContext<S>, order: usize) -> Self {
        let mut out = Self::new();
        out.add_part(0, 0, LocalField::constant(ctx, Self::reps(0, 0), &[S::one()], order).expect("shape"))
            .expect("shape");
        out
    }

    /// Values at the base point as an element of `⊗ ⊠ ∧`.
    pub fn value(&self, ctx: &CovContext<S>) -> TensorExtElement<S> {
        let mut out = TensorExtElement::zero();
        let (n, d) = (ctx.dim(), ctx.fiber_dim());
        for ((m, k), f) in &self.parts {
            let basis = AntiIndex::all(d, *k);
            let inner = basis.len();
            for (idx, c) in f.comps().iter().enumerate() {
                let w = Word::from_flat_index(idx / inner, *m, n);
                out.add_term(w, basis[idx % inner].clone(), c.value());
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for ((m, k), f) in &other.parts {
            out.add_part(*m, *k, f.scale(-S::one()))?;
        }
        Ok(out)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.parts
            .values()
            .flat_map(|f| f.comps().iter())
            .flat_map(|j| j.coeffs().iter().copied())
            .map(|v| if v.is_valid() { v.magnitude() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Values `(∇_{e_B} F)_p` of a mixed field for all words `B` up to a depth.
#[derive(Debug, Clone)]
pub struct PointTower<S: Scalar> {
    depth: usize,
    values: HashMap<Word, TensorExtElement<S>>,
}

impl<S: Scalar> PointTower<S> {
    pub fn new(ctx: &CovContext<S>, f: &MixedField<S>, depth: usize) -> Result<Self> {
        let (n, d) = (ctx.dim(), ctx.fiber_dim());
        let mut values: HashMap<Word, TensorExtElement<S>> = HashMap::new();
        for len in 0..=depth {
            for w in Word::all_of_length(n, len) {
                values.insert(w, TensorExtElement::zero());
            }
        }
        for ((m, k), part) in f.parts() {
            let tower = part.tower(ctx, depth)?;
            let basis = AntiIndex::all(d, *k);
            let inner = basis.len();
            for (len, level) in tower.iter().enumerate() {
                let block = n.pow(*m as u32) * inner;
                for (idx, c) in level.comps().iter().enumerate() {
                    let v = c.value();
                    if v.is_zero() {
                        continue;
                    }
                    let b = Word::from_flat_index(idx / block, len, n);
                    let rest = idx % block;
                    let w = Word::from_flat_index(rest / inner, *m, n);
                    values
                        .get_mut(&b)
                        .expect("word present")
                        .add_term(w, basis[rest % inner].clone(), v);
                }
            }
        }
        Ok(PointTower { depth, values })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn at(&self, b: &Word) -> Result<&TensorExtElement<S>> {
        self.values.get(b).ok_or(Error::InsufficientOrder {
            need: b.len(),
            have: self.depth,
        })
    }
}

/// Covariant product `X ⊙ Y = X(1) ⊗ ∇_{X(2)} Y` at jet level; `X` must be a tangent tensor field.
pub fn covariant_product<S: Scalar>(ctx: &CovContext<S>, x: &MixedField<S>, y: &MixedField<S>) -> Result<MixedField<S>> {
    let n = ctx.dim();
    let d = ctx.fiber_dim();
    let mut out = MixedField::new();
    let max_m = x.parts().map(|((m, _), _)| *m).max().unwrap_or(0);
    let mut ytowers: Vec<((usize, usize), Vec<LocalField<S>>)> = Vec::new();
    for ((my, ky), f) in y.parts() {
        ytowers.push(((*my, *ky), f.tower(ctx, max_m)?));
    }
    for ((mx, kx), xf) in x.parts() {
        if *kx != 0 {
            return Err(Error::invalid("left factor of ⊙ must be a tangent tensor field"));
        }
        for wi in 0..n.pow(*mx as u32) {
            let coeff = &xf.comps()[wi];
            if coeff.is_zero() {
                continue;
            }
            let w = Word::from_flat_index(wi, *mx, n);
            for (a, b) in tensor_coproduct(&w) {
                for ((my, ky), tower) in &ytowers {
                    let slice = tower[b.len()].slice(&b).mul_jet(coeff);
                    let inner = n.pow(*my as u32) * binomial(d, *ky);
                    let m_out = a.len() + my;
                    let mut part = LocalField::zeros(ctx, MixedField::<S>::reps(m_out, *ky), slice.order());
                    let base = a.flat_index(n) * inner;
                    for (idx, c) in slice.comps().iter().enumerate() {
                        part.comps_mut()[base + idx] = c.clone();
                    }
                    out.add_part(m_out, *ky, part)?;
                }
            }
        }
    }
    Ok(out)
}

/// Smash-type product `(v⊠α)♯(w⊠β) = (w(1)⊙v) ⊠ (∇_{w(2)}α)∧β` at jet level.
pub fn sharp<S: Scalar>(ctx: &CovContext<S>, a: &MixedField<S>, b: &MixedField<S>) -> Result<MixedField<S>> {
    let n = ctx.dim();
    let d = ctx.fiber_dim();
    let mut out = MixedField::new();
    let max_mb = b.parts().map(|((m, _), _)| *m).max().unwrap_or(0);
    for ((ma, ka), af) in a.parts() {
        let inner_a = binomial(d, *ka);
        for wa in 0..n.pow(*ma as u32) {
            let wa_word = Word::from_flat_index(wa, *ma, n);
            let alpha_w = LocalField::new(ctx, MixedField::<S>::reps(0, *ka), af.comps()[wa * inner_a..(wa + 1) * inner_a].to_vec())?;
            let a_tower = alpha_w.tower(ctx, max_mb)?;
            let ew_tower = word_field(ctx, &wa_word, ctx.chart().order()).tower(ctx, max_mb)?;
            for ((mb, kb), bf) in b.parts() {
                let inner_b = binomial(d, *kb);
                let kk = ka + kb;
                if kk > d {
                    continue;
                }
                let inner_out = binomial(d, kk);
                for wb in 0..n.pow(*mb as u32) {
                    let wb_word = Word::from_flat_index(wb, *mb, n);
                    let beta: Vec<&Jet<S>> = (0..inner_b).map(|k| &bf.comps()[wb * inner_b + k]).collect();
                    if beta.iter().all(|j| j.is_zero()) {
                        continue;
                    }
                    for (aw, bw) in tensor_coproduct(&wb_word) {
                        // (∇_{e_B} α_W) ∧ β_{W'}
                        let alpha_b = a_tower[bw.len()].slice(&bw);
                        let base = 0;
                        let order = alpha_b.order().min(bf.order());
                        let mut ext = vec![Jet::zero(ctx.chart().family(), order); inner_out];
                        let mut any = false;
                        for (i, x) in AntiIndex::all(d, *ka).iter().enumerate() {
                            let aj = &alpha_b.comps()[base + i];
                            if aj.is_zero() {
                                continue;
                            }
                            for (j, y) in AntiIndex::all(d, *kb).iter().enumerate() {
                                if beta[j].is_zero() {
                                    continue;
                                }
                                if let Some((sign, z)) = wedge(x, y) {
                                    let t = aj.mul(beta[j]).scale(S::from_int(sign as i64));
                                    ext[z.rank(d)].add_assign(&t);
                                    any = true;
                                }
                            }
                        }
                        if !any {
                            continue;
                        }
                        // e_A ⊙ e_W = Σ e_{A1} ⊗ ∇_{A2} e_W
                        for (a1, a2) in tensor_coproduct(&aw) {
                            let t = ew_tower[a2.len()].slice(&a2);
                            let m_out = a1.len() + ma;
                            let mut part = LocalField::zeros(ctx, MixedField::<S>::reps(m_out, kk), order.min(t.order()));
                            let blk = n.pow(*ma as u32);
                            let base_out = a1.flat_index(n) * blk;
                            for (ti, tj) in t.comps().iter().enumerate() {
                                if tj.is_zero() {
                                    continue;
                                }
                                for (e, ej) in ext.iter().enumerate() {
                                    let slot = (base_out + ti) * inner_out + e;
                                    let prod = tj.mul(ej);
                                    part.comps_mut()[slot].add_assign(&prod);
                                }
                            }
                            out.add_part(m_out, kk, part)?;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Wrap a shared context for closures.
pub type SharedCtx<S> = Arc<CovContext<S>>;
