//! Distinguished endomorphisms of `⊗(TₚM) ⊠ ∧(Eₚ)` at a point: creation operators
//! `𝔼`, `𝔻`, the dual Hodge star `⊥`, the adjoints `𝔼†`, `𝔻†`, the ♯-actions,
//! traces and the boundary of point-supported currents.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::atomic::{AtomicCurrent, Fiber};
use crate::covderiv::{covariant_product, exterior_derivative, sharp, word_field, CovContext, LocalField, MixedField, PointTower, Rep, SharedCtx};
use crate::error::{Error, Result};
use crate::jet::{determinant_jet, Jet};
use crate::linalg::determinant;
use crate::multialg::{binomial, deshuffles, tensor_coproduct, wedge, AntiIndex, ExtVec, Hodge, Key, TensorExtElement, TensorPair, Word};
use crate::scalar::Scalar;

/// Elements of `C^∞(⊗(TM) ⊠ ∧(E))` near the point, as jets.
pub type SharpElement<S> = MixedField<S>;

type EndoFn<S> = dyn Fn(&TensorExtElement<S>) -> Result<TensorExtElement<S>> + Send + Sync;

/// A linear endomorphism of the fiber at one point, tagged with its construction.
#[derive(Clone)]
pub struct FiberEndo<S: Scalar> {
    tag: String,
    f: Arc<EndoFn<S>>,
}

impl<S: Scalar> fmt::Debug for FiberEndo<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FiberEndo({})", self.tag)
    }
}

impl<S: Scalar> FiberEndo<S> {
    pub fn new(
        tag: impl Into<String>,
        f: impl Fn(&TensorExtElement<S>) -> Result<TensorExtElement<S>> + Send + Sync + 'static,
    ) -> Self {
        FiberEndo {
            tag: tag.into(),
            f: Arc::new(f),
        }
    }

    pub fn identity() -> Self {
        Self::new("id", |x| Ok(x.clone()))
    }

    pub fn zero() -> Self {
        Self::new("0", |_| Ok(TensorExtElement::zero()))
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn retag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn apply(&self, x: &TensorExtElement<S>) -> Result<TensorExtElement<S>> {
        (self.f)(x)
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Self) -> Self {
        let (a, b) = (self.f.clone(), other.f.clone());
        Self::new(format!("{}∘{}", self.tag, other.tag), move |x| a(&b(x)?))
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (self.f.clone(), other.f.clone());
        Self::new(format!("({}+{})", self.tag, other.tag), move |x| Ok(a(x)?.add(&b(x)?)))
    }

    pub fn sub(&self, other: &Self) -> Self {
        let (a, b) = (self.f.clone(), other.f.clone());
        Self::new(format!("({}−{})", self.tag, other.tag), move |x| Ok(a(x)?.sub(&b(x)?)))
    }

    pub fn scale(&self, s: S) -> Self {
        let a = self.f.clone();
        Self::new(format!("{s}·{}", self.tag), move |x| Ok(a(x)?.scale(s)))
    }

    /// `[self, other] = self∘other − other∘self`
    pub fn commutator(&self, other: &Self) -> Self {
        self.compose(other).sub(&other.compose(self))
    }

    /// `{self, other} = self∘other + other∘self`
    pub fn anticommutator(&self, other: &Self) -> Self {
        self.compose(other).add(&other.compose(self))
    }

    pub fn sum(tag: impl Into<String>, terms: Vec<Self>) -> Self {
        let fs: Vec<Arc<EndoFn<S>>> = terms.into_iter().map(|t| t.f).collect();
        Self::new(tag, move |x| {
            let mut out = TensorExtElement::zero();
            for f in &fs {
                out.add_assign(&f(x)?);
            }
            Ok(out)
        })
    }

    /// Apply `g(k, x_k)` to each homogeneous exterior component.
    pub fn by_degree(
        tag: impl Into<String>,
        g: impl Fn(usize, &TensorExtElement<S>) -> Result<TensorExtElement<S>> + Send + Sync + 'static,
    ) -> Self {
        Self::new(tag, move |x| {
            let mut out = TensorExtElement::zero();
            for (k, part) in split_degrees(x) {
                out.add_assign(&g(k, &part)?);
            }
            Ok(out)
        })
    }
}

/// Homogeneous components by exterior degree.
pub fn split_degrees<S: Scalar>(x: &TensorExtElement<S>) -> BTreeMap<usize, TensorExtElement<S>> {
    let mut out: BTreeMap<usize, TensorExtElement<S>> = BTreeMap::new();
    for ((w, k), c) in x.iter() {
        out.entry(k.len()).or_default().add_term(w.clone(), k.clone(), *c);
    }
    out
}

/// Coordinate basis `e_W ⊠ e_K` of `⊗^{≤r} ⊠ ∧^k` for the listed degrees.
pub fn coordinate_basis<S: Scalar>(n: usize, d: usize, r: usize, degrees: &[usize]) -> Vec<TensorExtElement<S>> {
    let mut out = Vec::new();
    for len in 0..=r {
        for w in Word::all_of_length(n, len) {
            for &k in degrees {
                for kk in AntiIndex::all(d, k) {
                    out.push(TensorExtElement::basis(w.clone(), kk));
                }
            }
        }
    }
    out
}

/// `max_x |a(x) − b(x)|` over a basis.
pub fn endo_residual<S: Scalar>(a: &FiberEndo<S>, b: &FiberEndo<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
    let rs = basis
        .par_iter()
        .map(|x| Ok(a.apply(x)?.sub(&b.apply(x)?).max_abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rs.into_iter().fold(0.0, f64::max))
}

fn sign<S: Scalar>(e: usize) -> S {
    if e % 2 == 0 {
        S::one()
    } else {
        -S::one()
    }
}

/// `Σ_{L} (−1)^{l_1+…+l_r+r(r+1)/2} pair(e_{K_L}) e_{K∖K_L}` over increasing position sets `L`.
fn koszul_contract<S: Scalar>(k: &AntiIndex, r: usize, mut pair: impl FnMut(&AntiIndex) -> S) -> Vec<(AntiIndex, S)> {
    let kk = k.len();
    let mut out = Vec::new();
    if r > kk {
        return out;
    }
    for pos in AntiIndex::all(kk, r) {
        let sub: Vec<u8> = pos.letters().iter().map(|&i| k.letters()[i as usize]).collect();
        let v = pair(&AntiIndex::new(&sub).expect("increasing"));
        if v.is_zero() {
            continue;
        }
        let rest: Vec<u8> = (0..kk).filter(|i| !pos.contains(*i)).map(|i| k.letters()[i]).collect();
        let e = pos.letters().iter().map(|&i| i as usize + 1).sum::<usize>() + r * (r + 1) / 2;
        out.push((AntiIndex::new(&rest).expect("increasing"), sign::<S>(e) * v));
    }
    out
}

fn single<S: Scalar>(k: &AntiIndex) -> ExtVec<S> {
    [(k.clone(), S::one())].into_iter().collect()
}

/// Hodge star on `∧(TₚM)` from the metric at the point.
pub fn point_hodge<S: Scalar>(ctx: &CovContext<S>) -> Result<Hodge<S>> {
    if !ctx.tangent_fiber() {
        return Err(Error::invalid("⊥ needs the tangent fiber"));
    }
    let g = ctx.chart().metric_at()?;
    let det = determinant(&g);
    let abs = if det.to_f64() < 0.0 { -det } else { det };
    let vol = (S::one() / abs.sqrt()?).checked()?;
    Ok(Hodge::new(g, vol, ctx.chart().orientation()))
}

/// Which local frame a trace is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Coordinate,
    /// Gram–Schmidt on the coordinate frame.
    Orthonormal,
}

/// A local frame `(e_i)`, its dual coframe `(e^i)` and the signs `⟨e_i,e_i⟩` (orthonormal only).
#[derive(Debug, Clone)]
pub struct FrameFields<S: Scalar> {
    pub vectors: Vec<LocalField<S>>,
    pub coframe: Vec<LocalField<S>>,
    pub signs: Vec<i8>,
}

/// Operator factory at one point; towers are computed to `depth`.
pub struct Operators<S: Scalar> {
    ctx: SharedCtx<S>,
    depth: usize,
    hodge: std::result::Result<Hodge<S>, Error>,
}

impl<S: Scalar> Operators<S> {
    pub fn new(ctx: SharedCtx<S>, depth: usize) -> Self {
        let hodge = point_hodge(&ctx);
        Operators { ctx, depth, hodge }
    }

    pub fn ctx(&self) -> &SharedCtx<S> {
        &self.ctx
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn hodge(&self) -> Result<&Hodge<S>> {
        self.hodge.as_ref().map_err(|e| e.clone())
    }

    fn order(&self) -> usize {
        self.ctx.chart().order()
    }

    fn tower(&self, f: &MixedField<S>) -> Result<PointTower<S>> {
        PointTower::new(&self.ctx, f, self.depth.min(f.order()))
    }

    /// Vector field with the given component jets.
    pub fn vector_field(&self, comps: Vec<Jet<S>>) -> Result<LocalField<S>> {
        LocalField::new(&self.ctx, vec![Rep::Tangent], comps)
    }

    /// `c·e_W`
    pub fn tensor_term(&self, c: &Jet<S>, w: &Word) -> LocalField<S> {
        let n = self.ctx.dim();
        let mut f = LocalField::zeros(&self.ctx, vec![Rep::Tangent; w.len()], c.order());
        f.comps_mut()[w.flat_index(n)] = c.clone();
        f
    }

    /// Constant coordinate multivector `e_K`.
    pub fn ext_constant(&self, k: &AntiIndex) -> LocalField<S> {
        let d = self.ctx.fiber_dim();
        let mut vals = vec![S::zero(); binomial(d, k.len())];
        vals[k.rank(d)] = S::one();
        LocalField::constant(&self.ctx, vec![Rep::FiberExt(k.len())], &vals, self.order()).expect("shape")
    }

    /// A tangent vector field read as a section of `∧¹(E)` (requires `E = TM`).
    pub fn as_multivector(&self, v: &LocalField<S>) -> Result<MixedField<S>> {
        if v.reps() != [Rep::Tangent] || !self.ctx.tangent_fiber() {
            return Err(Error::invalid("expected a vector field on E = TM"));
        }
        MixedField::from_ext(&self.ctx, &LocalField::new(&self.ctx, vec![Rep::FiberExt(1)], v.comps().to_vec())?)
    }

    /// `𝔼_X(v⊠α) = v(1) ⊠ (∇_{v(2)}X)_p ∧ α`
    pub fn op_e(&self, x: &MixedField<S>) -> Result<FiberEndo<S>> {
        if x.parts().any(|((m, _), _)| *m != 0) {
            return Err(Error::invalid("𝔼 needs a multivector field"));
        }
        let t = self.tower(x)?;
        Ok(FiberEndo::new("E", move |v| {
            let mut out = TensorExtElement::zero();
            for ((w, k), c) in v.iter() {
                for (a, b) in tensor_coproduct(w) {
                    for ((_, kx), cx) in t.at(&b)?.iter() {
                        if let Some((sg, kk)) = wedge(kx, k) {
                            out.add_term(a.clone(), kk, *c * *cx * S::from_int(sg as i64));
                        }
                    }
                }
            }
            Ok(out)
        }))
    }

    /// `f⌟ = 𝔼_f`
    pub fn op_f(&self, f: &LocalField<S>) -> Result<FiberEndo<S>> {
        Ok(self.op_e(&MixedField::from_ext(&self.ctx, f)?)?.retag("f⌟"))
    }

    /// `𝔻_Y(v⊠α) = v(1) ⊗ (∇_{v(2)}Y)_p ⊠ α`
    pub fn op_d(&self, y: &MixedField<S>) -> Result<FiberEndo<S>> {
        if y.parts().any(|((_, k), _)| *k != 0) {
            return Err(Error::invalid("𝔻 needs a tangent tensor field"));
        }
        let t = self.tower(y)?;
        Ok(FiberEndo::new("D", move |v| {
            let mut out = TensorExtElement::zero();
            for ((w, k), c) in v.iter() {
                for (a, b) in tensor_coproduct(w) {
                    for ((wy, _), cy) in t.at(&b)?.iter() {
                        out.add_term(a.concat(wy), k.clone(), *c * *cy);
                    }
                }
            }
            Ok(out)
        }))
    }

    /// `𝔻_Y` for a tangent tensor field given as a [`LocalField`].
    pub fn op_d_tensor(&self, y: &LocalField<S>) -> Result<FiberEndo<S>> {
        self.op_d(&MixedField::from_tensor(&self.ctx, y)?)
    }

    /// `⊥(v⊠α) = v ⊠ ⋆⁻¹α`
    pub fn op_perp(&self) -> Result<FiberEndo<S>> {
        let h = self.hodge()?.clone();
        Ok(FiberEndo::new("perp", move |x| Ok(h.perp(x))))
    }

    pub fn op_perp_inverse(&self) -> Result<FiberEndo<S>> {
        let h = self.hodge()?.clone();
        Ok(FiberEndo::new("perp⁻¹", move |x| Ok(h.perp_inverse(x))))
    }

    /// `𝔼†_X(v⊠α) = v(1) ⊠ 𝔼†_{(∇_{v(2)}X)_p} α` by the signed contraction sum.
    pub fn op_edag(&self, x: &MixedField<S>) -> Result<FiberEndo<S>> {
        if x.parts().any(|((m, _), _)| *m != 0) {
            return Err(Error::invalid("𝔼† needs a multivector field"));
        }
        let h = self.hodge()?.clone();
        let t = self.tower(x)?;
        Ok(FiberEndo::new("E†", move |v| {
            let mut out = TensorExtElement::zero();
            for ((w, k), c) in v.iter() {
                for (a, b) in tensor_coproduct(w) {
                    let mut by_deg: BTreeMap<usize, ExtVec<S>> = BTreeMap::new();
                    for ((_, kz), cz) in t.at(&b)?.iter() {
                        by_deg.entry(kz.len()).or_default().insert(kz.clone(), *cz);
                    }
                    for (r, z) in &by_deg {
                        for (rest, val) in koszul_contract(k, *r, |sub| h.inner(z, &single(sub))) {
                            out.add_term(a.clone(), rest, *c * val);
                        }
                    }
                }
            }
            Ok(out)
        }))
    }

    /// `𝔼†_X = (−1)^{r(k+r)} ⊥∘𝔼_X∘⊥⁻¹` on input degree `k`.
    pub fn op_edag_perp(&self, x: &MixedField<S>) -> Result<FiberEndo<S>> {
        let h = self.hodge()?.clone();
        let mut parts: Vec<(usize, FiberEndo<S>)> = Vec::new();
        for ((m, r), f) in x.parts() {
            if *m != 0 {
                return Err(Error::invalid("𝔼† needs a multivector field"));
            }
            let mut single_part = MixedField::new();
            single_part.add_part(0, *r, f.clone())?;
            parts.push((*r, self.op_e(&single_part)?));
        }
        Ok(FiberEndo::by_degree("E†⊥", move |k, xk| {
            let y = h.perp_inverse(xk);
            let mut out = TensorExtElement::zero();
            for (r, e) in &parts {
                let z = h.perp(&e.apply(&y)?);
                out.add_scaled(sign::<S>(r * (k + r)), &z);
            }
            Ok(out)
        }))
    }

    /// `𝔼†_θ` for a form field `θ`, pairing by `θ_p(α_L)` (no metric).
    pub fn op_edag_theta(&self, theta: &LocalField<S>) -> Result<FiberEndo<S>> {
        let r = match theta.reps() {
            [Rep::CoFiberExt(r)] => *r,
            [] => 0,
            _ => return Err(Error::invalid("𝔼†_θ needs a form field")),
        };
        let d = self.ctx.fiber_dim();
        let vals = point_values(&self.ctx, theta, self.depth)?;
        Ok(FiberEndo::new("E†θ", move |v| {
            let mut out = TensorExtElement::zero();
            for ((w, k), c) in v.iter() {
                for (a, b) in tensor_coproduct(w) {
                    let th = vals.get(&b).ok_or(Error::InsufficientOrder {
                        need: b.len(),
                        have: 0,
                    })?;
                    for (rest, val) in koszul_contract(k, r, |sub| th[sub.rank(d)]) {
                        out.add_term(a.clone(), rest, *c * val);
                    }
                }
            }
            Ok(out)
        }))
    }

    /// `𝔻†_f = f⌟`, `𝔻†_X = −div(X)⌟ − 𝔻_X`, and for higher tensors
    /// `𝔻†_{X⊗Z} = 𝔻†_X∘𝔻†_Z − 𝔻†_{∇_X Z}` over coordinate components.
    pub fn op_ddag(&self, y: &LocalField<S>) -> Result<FiberEndo<S>> {
        if y.reps().iter().any(|r| *r != Rep::Tangent) {
            return Err(Error::invalid("𝔻† needs a tangent tensor field"));
        }
        self.hodge()?;
        let ctx = &*self.ctx;
        let n = ctx.dim();
        let m = y.reps().len();
        match m {
            0 => self.op_f(y),
            1 => {
                let div = divergence(ctx, y)?;
                Ok(self.op_f(&div)?.add(&self.op_d_tensor(y)?).scale(-S::one()).retag("D†"))
            }
            _ => {
                let mut terms = Vec::new();
                for (idx, c) in y.comps().iter().enumerate() {
                    if c.is_zero() {
                        continue;
                    }
                    let w = Word::from_flat_index(idx, m, n);
                    let mut xc = vec![Jet::zero(ctx.chart().family(), c.order()); n];
                    xc[w.letters()[0] as usize] = c.clone();
                    let x = self.vector_field(xc)?;
                    let z = word_field(ctx, &Word::from_slice(&w.letters()[1..]), y.order());
                    let nxz = nabla_along(ctx, &x, &z)?;
                    terms.push(self.op_ddag(&x)?.compose(&self.op_ddag(&z)?).sub(&self.op_ddag(&nxz)?));
                }
                Ok(FiberEndo::sum("D†", terms))
            }
        }
    }

    pub fn sharp(&self, a: &SharpElement<S>, b: &SharpElement<S>) -> Result<SharpElement<S>> {
        sharp(&self.ctx, a, b)
    }

    fn sharp_terms(&self, a: &SharpElement<S>) -> Vec<(LocalField<S>, AntiIndex)> {
        let (n, d) = (self.ctx.dim(), self.ctx.fiber_dim());
        let mut out = Vec::new();
        for ((m, k), f) in a.parts() {
            let basis = AntiIndex::all(d, *k);
            let inner = basis.len();
            for (idx, c) in f.comps().iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let w = Word::from_flat_index(idx / inner, *m, n);
                out.push((self.tensor_term(c, &w), basis[idx % inner].clone()));
            }
        }
        out
    }

    /// `𝔻𝔼_{v⊠α} = 𝔻_v∘𝔼_α`
    pub fn op_de(&self, a: &SharpElement<S>) -> Result<FiberEndo<S>> {
        let mut terms = Vec::new();
        for (y, k) in self.sharp_terms(a) {
            let e = MixedField::from_ext(&self.ctx, &self.ext_constant(&k))?;
            terms.push(self.op_d_tensor(&y)?.compose(&self.op_e(&e)?));
        }
        Ok(FiberEndo::sum("DE", terms))
    }

    /// `𝔻𝔼†_{v⊠α} = 𝔻_v∘𝔼†_α`
    pub fn op_dedag(&self, a: &SharpElement<S>) -> Result<FiberEndo<S>> {
        let mut terms = Vec::new();
        for (y, k) in self.sharp_terms(a) {
            let e = MixedField::from_ext(&self.ctx, &self.ext_constant(&k))?;
            terms.push(self.op_d_tensor(&y)?.compose(&self.op_edag(&e)?));
        }
        Ok(FiberEndo::sum("DE†", terms))
    }

    pub fn frame(&self, kind: Frame) -> Result<FrameFields<S>> {
        let ctx = &*self.ctx;
        let n = ctx.dim();
        let order = self.order();
        let fam = ctx.chart().family();
        match kind {
            Frame::Coordinate => {
                let vectors = (0..n).map(|i| word_field(ctx, &Word::letter(i), order)).collect();
                let coframe = (0..n)
                    .map(|i| {
                        let mut vals = vec![S::zero(); n];
                        vals[i] = S::one();
                        LocalField::constant(ctx, vec![Rep::CoFiberExt(1)], &vals, order)
                    })
                    .collect::<Result<_>>()?;
                Ok(FrameFields {
                    vectors,
                    coframe,
                    signs: vec![1; n],
                })
            }
            Frame::Orthonormal => {
                let g: Vec<Vec<Jet<S>>> = (0..n)
                    .map(|a| (0..n).map(|b| ctx.chart().metric_jet(a, b).cloned()).collect::<Result<_>>())
                    .collect::<Result<_>>()?;
                let pair = |u: &[Jet<S>], v: &[Jet<S>]| {
                    let mut acc = Jet::zero(fam, order);
                    for a in 0..n {
                        for b in 0..n {
                            acc.add_assign(&u[a].mul(&v[b]).mul(&g[a][b]));
                        }
                    }
                    acc
                };
                let mut es: Vec<Vec<Jet<S>>> = Vec::new();
                let mut signs = Vec::new();
                for j in 0..n {
                    let mut u: Vec<Jet<S>> = (0..n)
                        .map(|a| Jet::constant(fam, order, if a == j { S::one() } else { S::zero() }))
                        .collect();
                    for (e, s) in es.iter().zip(&signs) {
                        let c = pair(&u, e).scale(S::from_int(*s as i64));
                        for a in 0..n {
                            u[a] = u[a].sub(&c.mul(&e[a]));
                        }
                    }
                    let q = pair(&u, &u);
                    let s: i8 = if q.value().to_f64() < 0.0 { -1 } else { 1 };
                    let norm = if s < 0 { q.neg() } else { q }.sqrt()?.recip()?;
                    es.push(u.iter().map(|c| c.mul(&norm)).collect());
                    signs.push(s);
                }
                let mut coframe = Vec::new();
                for (e, s) in es.iter().zip(&signs) {
                    let comps: Vec<Jet<S>> = (0..n)
                        .map(|b| {
                            let mut acc = Jet::zero(fam, order);
                            for a in 0..n {
                                acc.add_assign(&e[a].mul(&g[a][b]));
                            }
                            acc.scale(S::from_int(*s as i64))
                        })
                        .collect();
                    coframe.push(LocalField::new(ctx, vec![Rep::CoFiberExt(1)], comps)?);
                }
                let vectors = es.into_iter().map(|e| self.vector_field(e)).collect::<Result<_>>()?;
                Ok(FrameFields { vectors, coframe, signs })
            }
        }
    }

    /// `tr(𝔻𝔼†) = Σᵢ 𝔻_{eᵢ}∘𝔼†_{eⁱ}`; the coordinate frame uses `𝔼†_θ`, the orthonormal
    /// frame the metric form `Σᵢ sᵢ 𝔻_{eᵢ}∘𝔼†_{eᵢ}`.
    pub fn trace_dedag(&self, kind: Frame) -> Result<FiberEndo<S>> {
        let fr = self.frame(kind)?;
        let mut terms = Vec::new();
        for i in 0..fr.vectors.len() {
            let d = self.op_d_tensor(&fr.vectors[i])?;
            let t = match kind {
                Frame::Coordinate => d.compose(&self.op_edag_theta(&fr.coframe[i])?),
                Frame::Orthonormal => d
                    .compose(&self.op_edag(&self.as_multivector(&fr.vectors[i])?)?)
                    .scale(S::from_int(fr.signs[i] as i64)),
            };
            terms.push(t);
        }
        Ok(FiberEndo::sum("tr(DE†)", terms))
    }

    /// `tr(𝔻𝔼) = Σᵢ 𝔻_{eᵢ}∘𝔼_{eⁱ}` with `eⁱ` raised by the metric.
    pub fn trace_de(&self, kind: Frame) -> Result<FiberEndo<S>> {
        let fr = self.frame(kind)?;
        let ctx = &*self.ctx;
        let n = ctx.dim();
        let mut terms = Vec::new();
        for i in 0..n {
            let d = self.op_d_tensor(&fr.vectors[i])?;
            let t = match kind {
                Frame::Coordinate => {
                    let comps = (0..n)
                        .map(|j| ctx.chart().inverse_metric_jet(i, j).cloned())
                        .collect::<Result<Vec<_>>>()?;
                    d.compose(&self.op_e(&self.as_multivector(&self.vector_field(comps)?)?)?)
                }
                Frame::Orthonormal => d
                    .compose(&self.op_e(&self.as_multivector(&fr.vectors[i])?)?)
                    .scale(S::from_int(fr.signs[i] as i64)),
            };
            terms.push(t);
        }
        Ok(FiberEndo::sum("tr(DE)", terms))
    }
}

/// `(∇_{e_B} f)_p` for every word `B` up to `depth`.
pub fn point_values<S: Scalar>(ctx: &CovContext<S>, f: &LocalField<S>, depth: usize) -> Result<HashMap<Word, Vec<S>>> {
    let depth = depth.min(f.order());
    let tower = f.tower(ctx, depth)?;
    let mut out = HashMap::new();
    for (len, level) in tower.iter().enumerate() {
        for w in Word::all_of_length(ctx.dim(), len) {
            out.insert(w.clone(), level.slice(&w).values());
        }
    }
    Ok(out)
}

/// `∇_X T` for a vector field `X`.
pub fn nabla_along<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>, t: &LocalField<S>) -> Result<LocalField<S>> {
    if x.reps() != [Rep::Tangent] {
        return Err(Error::invalid("expected a vector field"));
    }
    let nab = t.nabla(ctx)?;
    let block = t.len();
    let order = nab.order().min(x.order());
    let mut out = LocalField::zeros(ctx, t.reps().to_vec(), order);
    for (i, xi) in x.comps().iter().enumerate() {
        if xi.is_zero() {
            continue;
        }
        for j in 0..block {
            let prod = xi.mul(&nab.comps()[i * block + j]);
            out.comps_mut()[j].add_assign(&prod);
        }
    }
    Ok(out)
}

/// `∇_Y ω = Σ_W Y^W (∇^m ω)(e_W)` for a tangent tensor field `Y` of order `m`.
pub fn nabla_tensor<S: Scalar>(ctx: &CovContext<S>, y: &LocalField<S>, omega: &LocalField<S>) -> Result<LocalField<S>> {
    let m = y.reps().len();
    if y.reps().iter().any(|r| *r != Rep::Tangent) {
        return Err(Error::invalid("expected a tangent tensor field"));
    }
    let tower = omega.tower(ctx, m)?;
    let level = &tower[m];
    let order = level.order().min(y.order());
    let mut out = LocalField::zeros(ctx, omega.reps().to_vec(), order);
    for (idx, c) in y.comps().iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let s = level.slice(&Word::from_flat_index(idx, m, ctx.dim()));
        for (o, v) in out.comps_mut().iter_mut().zip(s.comps()) {
            o.add_assign(&c.mul(v));
        }
    }
    Ok(out)
}

/// `div X = Σᵢ (∇X)^i_i`
pub fn divergence<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>) -> Result<LocalField<S>> {
    if x.reps() != [Rep::Tangent] {
        return Err(Error::invalid("expected a vector field"));
    }
    let n = ctx.dim();
    let nab = x.nabla(ctx)?;
    let mut acc = nab.comps()[0].clone();
    for i in 1..n {
        acc.add_assign(&nab.comps()[i * n + i]);
    }
    Ok(LocalField::scalar(acc))
}

/// `[X, Y] = ∇_X Y − ∇_Y X`
pub fn lie_bracket<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>, y: &LocalField<S>) -> Result<LocalField<S>> {
    nabla_along(ctx, x, y)?.sub(&nabla_along(ctx, y, x)?)
}

/// `⟨X, Y⟩ = g_ab X^a Y^b`
pub fn metric_pairing<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>, y: &LocalField<S>) -> Result<LocalField<S>> {
    let n = ctx.dim();
    let order = x.order().min(y.order());
    let mut acc = Jet::zero(ctx.chart().family(), order);
    for a in 0..n {
        for b in 0..n {
            acc.add_assign(&x.comps()[a].mul(&y.comps()[b]).mul(ctx.chart().metric_jet(a, b)?));
        }
    }
    Ok(LocalField::scalar(acc))
}

/// `X(f)` for a vector field `X` and scalar `f`.
pub fn directional<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>, f: &LocalField<S>) -> Result<LocalField<S>> {
    nabla_along(ctx, x, f)
}

fn form_degree<S: Scalar>(f: &LocalField<S>) -> Result<usize> {
    match f.reps() {
        [Rep::CoFiberExt(k)] => Ok(*k),
        [] => Ok(0),
        _ => Err(Error::invalid("expected a form field")),
    }
}

/// Hodge star on forms of `E = TM` at jet level: `α ∧ ⋆β = ⟨α,β⟩ vol`.
pub fn hodge_star_form<S: Scalar>(ctx: &CovContext<S>, omega: &LocalField<S>) -> Result<LocalField<S>> {
    let k = form_degree(omega)?;
    if !ctx.tangent_fiber() {
        return Err(Error::invalid("⋆ needs the tangent fiber"));
    }
    let chart = ctx.chart();
    let n = ctx.dim();
    let vol = chart.volume_density()?;
    let order = omega.order().min(vol.order());
    let orient = S::from_int(chart.orientation() as i64);
    let mut out = LocalField::zeros(ctx, vec![Rep::CoFiberExt(n - k)], order);
    let basis = AntiIndex::all(n, k);
    for (jr, jj) in basis.iter().enumerate() {
        let w = &omega.comps()[jr.min(omega.len() - 1)];
        if w.is_zero() {
            continue;
        }
        for jp in &basis {
            let minor = if k == 0 {
                ctx.constant_jet(S::one(), order)
            } else {
                let rows: Vec<Vec<Jet<S>>> = jp
                    .letters()
                    .iter()
                    .map(|&a| {
                        jj.letters()
                            .iter()
                            .map(|&b| chart.inverse_metric_jet(a as usize, b as usize).cloned())
                            .collect::<Result<_>>()
                    })
                    .collect::<Result<_>>()?;
                determinant_jet(&rows)
            };
            if minor.is_zero() {
                continue;
            }
            let comp = jp.complement(n);
            let (sg, _) = wedge(jp, &comp).expect("complementary");
            let t = w.mul(&minor).mul(&vol).scale(orient * S::from_int(sg as i64));
            out.comps_mut()[comp.rank(n)].add_assign(&t);
        }
    }
    Ok(out)
}

/// `⋆⁻¹ = (−1)^{k(n−k)} s ⋆` on `k`-forms.
pub fn hodge_star_inverse_form<S: Scalar>(ctx: &CovContext<S>, omega: &LocalField<S>) -> Result<LocalField<S>> {
    let k = form_degree(omega)?;
    let n = ctx.dim();
    let det = determinant(&ctx.chart().metric_at()?);
    let s = if det.to_f64() < 0.0 { -S::one() } else { S::one() };
    Ok(hodge_star_form(ctx, omega)?.scale(sign::<S>(k * (n - k)) * s))
}

/// `δ = (−1)^k ⋆⁻¹ d ⋆` on `k`-forms.
pub fn codifferential<S: Scalar>(ctx: &CovContext<S>, omega: &LocalField<S>) -> Result<LocalField<S>> {
    let k = form_degree(omega)?;
    if k == 0 {
        return Err(Error::invalid("δ of a function"));
    }
    let star = hodge_star_form(ctx, omega)?;
    let dstar = exterior_derivative(ctx, &as_form(ctx, &star)?)?;
    Ok(hodge_star_inverse_form(ctx, &dstar)?.scale(sign::<S>(k)))
}

fn as_form<S: Scalar>(ctx: &CovContext<S>, f: &LocalField<S>) -> Result<LocalField<S>> {
    match f.reps() {
        [] => LocalField::new(ctx, vec![Rep::CoFiberExt(0)], f.comps().to_vec()),
        _ => Ok(f.clone()),
    }
}

/// Boundary by duality: `(∂T)(P) = T(dP)` on every probe of degree `k−1`, then re-solved in PBW
/// coordinates. Degree-zero currents map to the zero functional.
pub fn boundary<S: Scalar>(fiber: &Fiber<S>, t: &AtomicCurrent<S>) -> Result<AtomicCurrent<S>> {
    let k = t.degree();
    if k == 0 {
        return Ok(AtomicCurrent::zero(0));
    }
    if !fiber.ctx().tangent_fiber() {
        return Err(Error::invalid("∂ needs the tangent fiber"));
    }
    if t.is_zero() {
        return Ok(AtomicCurrent::zero(k - 1));
    }
    if t.order() + 1 > fiber.order() {
        return Err(Error::InsufficientOrder {
            need: t.order() + 1,
            have: fiber.order(),
        });
    }
    let table = fiber.table(k - 1)?;
    let vals = table
        .keys()
        .par_iter()
        .map(|key| {
            let p = fiber.probe_field(key)?;
            let dp = exterior_derivative(fiber.ctx(), &p)?;
            fiber.eval(t, &dp)
        })
        .collect::<Result<Vec<S>>>()?;
    fiber.from_probe_values(k - 1, &vals)
}

/// Boundary through the trace lift `tr(𝔻𝔼†)`.
pub fn boundary_trace<S: Scalar>(ops: &Operators<S>, fiber: &Fiber<S>, t: &AtomicCurrent<S>, kind: Frame) -> Result<AtomicCurrent<S>> {
    let k = t.degree();
    if k == 0 {
        return Ok(AtomicCurrent::zero(0));
    }
    let x = ops.trace_dedag(kind)?.apply(&t.lift())?;
    fiber.to_pbw(&x, k - 1)
}

/// `max |Φ_p(x)(P)|` over probes, degree by degree.
pub fn phi_residual<S: Scalar>(fiber: &Fiber<S>, x: &TensorExtElement<S>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (k, part) in split_degrees(x) {
        for v in fiber.probe_values(&part, k)? {
            worst = worst.max(if v.is_valid() { v.magnitude() } else { f64::INFINITY });
        }
    }
    Ok(worst)
}

/// Largest probe value of `Φ(endo(κ))` over the kernel elements of degree `k` of `fiber_in`;
/// `fiber_out` must reach the output word length.
pub fn kernel_preservation<S: Scalar>(fiber_in: &Fiber<S>, fiber_out: &Fiber<S>, endo: &FiberEndo<S>, k: usize) -> Result<f64> {
    let kernel = fiber_in.kernel_basis(k)?;
    let rs = kernel
        .par_iter()
        .map(|e| phi_residual(fiber_out, &endo.apply(&e.element)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rs.into_iter().fold(0.0, f64::max))
}

/// `|Φ(endo x)(ω) − Φ(x)(ω')|` where `ω'` is the dual operator applied to `ω`.
pub fn duality_residual<S: Scalar>(
    fiber: &Fiber<S>,
    endo: &FiberEndo<S>,
    x: &TensorExtElement<S>,
    omega: &LocalField<S>,
    dual_omega: &LocalField<S>,
) -> Result<f64> {
    let lhs = fiber.phi_apply(&endo.apply(x)?, &as_form(fiber.ctx(), omega)?)?;
    let rhs = fiber.phi_apply(x, &as_form(fiber.ctx(), dual_omega)?)?;
    Ok((lhs - rhs).magnitude())
}

/// `(F⊗id + (−1)^{|a|} id⊗F)(Σ a⊗b)` for an operator of odd exterior degree.
pub fn coderivation<S: Scalar>(f: &FiberEndo<S>, pair: &TensorPair<S>) -> Result<TensorPair<S>> {
    let mut out = TensorPair::zero();
    for ((a, b), c) in pair.iter() {
        let fa = f.apply(&TensorExtElement::basis(a.0.clone(), a.1.clone()))?;
        for (ka, ca) in fa.iter() {
            out.add_term(ka.clone(), b.clone(), *c * *ca);
        }
        let fb = f.apply(&TensorExtElement::basis(b.0.clone(), b.1.clone()))?;
        let s = sign::<S>(a.1.len());
        for (kb, cb) in fb.iter() {
            out.add_term(a.clone(), kb.clone(), s * *c * *cb);
        }
    }
    Ok(out)
}

/// The local-frame display of `tr(𝔻𝔼†)(e_I ⊠ e_K)`:
/// `Σ (−1)^{j+1} Γ^r_{I(1),i} Γ^s_{I(2),i} ⟨e_r, e_{K_j}⟩ e_{I(3)}⊗e_s ⊠ e_{K∖K_j}` in the
/// coordinate frame, with `Γ_{∅,i} = δ`. `derivative_terms` keeps only the summands in which
/// both `I(1)` and `I(2)` are nonempty.
#[derive(Debug, Clone)]
pub struct TraceDisplay<S: Scalar> {
    pub full: TensorExtElement<S>,
    pub derivative_terms: TensorExtElement<S>,
}

pub fn trace_display<S: Scalar>(ctx: &CovContext<S>, key: &Key) -> Result<TraceDisplay<S>> {
    let (big_i, kk) = key;
    let n = ctx.dim();
    let table = ctx.chart().base_higher(big_i.len());
    let g = ctx.chart().metric_at()?;
    let mut full = TensorExtElement::zero();
    let mut derivative_terms = TensorExtElement::zero();
    for parts in deshuffles(big_i, 3) {
        let (i1, i2, i3) = (&parts[0], &parts[1], &parts[2]);
        for i in 0..n {
            let c1 = table.column(i1, i);
            let c2 = table.column(i2, i);
            for j in 0..kk.len() {
                let rest = kk.without_pos(j);
                let kj = kk.letters()[j] as usize;
                for (r, a) in c1.iter().enumerate() {
                    if a.is_zero() || g[r][kj].is_zero() {
                        continue;
                    }
                    for (s, b) in c2.iter().enumerate() {
                        if b.is_zero() {
                            continue;
                        }
                        let c = sign::<S>(j) * *a * *b * g[r][kj];
                        let w = i3.concat(&Word::letter(s));
                        full.add_term(w.clone(), rest.clone(), c);
                        if !i1.is_empty() && !i2.is_empty() {
                            derivative_terms.add_term(w, rest.clone(), c);
                        }
                    }
                }
            }
        }
    }
    Ok(TraceDisplay { full, derivative_terms })
}

/// Report of the trace-lift properties on the coordinate basis of `⊗^{≤r} ⊠ ∧^k`.
#[derive(Debug, Clone)]
pub struct TraceLiftReport {
    /// Largest probe value of `Φ(tr κ)` over kernel elements `κ`.
    pub kernel_residual: f64,
    /// Largest coefficient of `Δ∘tr − (tr⊗id + (−1)^{|a|} id⊗tr)∘Δ`.
    pub coproduct_residual: f64,
    /// Longest output word.
    pub max_word_len: usize,
    /// Every output component has exterior degree `k−1`.
    pub degree_drops: bool,
    /// Some basis element has `tr(tr(x)) ≠ 0`.
    pub square_nonzero: bool,
}

pub fn trace_lift_check<S: Scalar>(ops: &Operators<S>, fiber_in: &Fiber<S>, fiber_out: &Fiber<S>, k: usize, tol: f64) -> Result<TraceLiftReport> {
    let tr = ops.trace_dedag(Frame::Coordinate)?;
    let r = fiber_in.order();
    let ctx = ops.ctx();
    let basis = coordinate_basis::<S>(ctx.dim(), ctx.fiber_dim(), r, &[k]);
    let kernel_residual = if k == 0 { 0.0 } else { kernel_preservation(fiber_in, fiber_out, &tr, k)? };
    let rows = basis
        .par_iter()
        .map(|x| {
            let y = tr.apply(x)?;
            let lhs = y.coproduct();
            let rhs = coderivation(&tr, &x.coproduct())?;
            let res = lhs.sub(&rhs).max_abs();
            let len = y.max_word_len();
            let deg = y.iter().all(|((_, kk), _)| kk.len() + 1 == k);
            let sq = tr.apply(&y)?.max_abs() > tol;
            Ok((res, len, deg, sq))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = TraceLiftReport {
        kernel_residual,
        coproduct_residual: 0.0,
        max_word_len: 0,
        degree_drops: true,
        square_nonzero: false,
    };
    for (res, len, deg, sq) in rows {
        rep.coproduct_residual = rep.coproduct_residual.max(res);
        rep.max_word_len = rep.max_word_len.max(len);
        rep.degree_drops &= deg;
        rep.square_nonzero |= sq;
    }
    Ok(rep)
}

/// Residuals of the operator identities on a basis.
impl<S: Scalar> Operators<S> {
    /// `𝔼_X∘𝔼_{X′} = 𝔼_{X∧X′}`
    pub fn ee_check(&self, x: &MixedField<S>, x2: &MixedField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let lhs = self.op_e(x)?.compose(&self.op_e(x2)?);
        let rhs = self.op_e(&self.sharp(x, x2)?)?;
        endo_residual(&lhs, &rhs, basis)
    }

    /// `𝔻_Y∘𝔻_{Y′} = 𝔻_{Y′⊙Y}`
    pub fn dd_check(&self, y: &MixedField<S>, y2: &MixedField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let lhs = self.op_d(y)?.compose(&self.op_d(y2)?);
        let rhs = self.op_d(&covariant_product(&self.ctx, y2, y)?)?;
        endo_residual(&lhs, &rhs, basis)
    }

    /// `𝔼_X∘𝔻_Y = 𝔻_{Y(1)}∘𝔼_{∇_{Y(2)}X}`, with the Sweedler factors of `Y = Σ Y^W e_W` taken
    /// as `Y^W e_{W(1)} ⊗ e_{W(2)}`.
    pub fn ed_check(&self, x: &MixedField<S>, y: &LocalField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let ctx = &*self.ctx;
        let n = ctx.dim();
        let m = y.reps().len();
        let lhs = self.op_e(x)?.compose(&self.op_d_tensor(y)?);
        let xparts: Vec<((usize, usize), Vec<LocalField<S>>)> = x
            .parts()
            .map(|(key, f)| Ok((*key, f.tower(ctx, m)?)))
            .collect::<Result<_>>()?;
        let mut terms = Vec::new();
        for (idx, c) in y.comps().iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let w = Word::from_flat_index(idx, m, n);
            for (w1, w2) in tensor_coproduct(&w) {
                let mut nx = MixedField::new();
                for ((_, k), tower) in &xparts {
                    let s = tower[w2.len()].slice(&w2);
                    nx.add_part(0, *k, LocalField::new(ctx, MixedField::<S>::reps(0, *k), s.comps().to_vec())?)?;
                }
                terms.push(self.op_d_tensor(&self.tensor_term(c, &w1))?.compose(&self.op_e(&nx)?));
            }
        }
        endo_residual(&lhs, &FiberEndo::sum("rhs", terms), basis)
    }

    /// `{𝔼_X, 𝔼†_Y} = ⟨X,Y⟩⌟` for vector fields.
    pub fn e_edag_check(&self, x: &LocalField<S>, y: &LocalField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let lhs = self.op_e(&self.as_multivector(x)?)?.anticommutator(&self.op_edag(&self.as_multivector(y)?)?);
        let rhs = self.op_f(&metric_pairing(&self.ctx, x, y)?)?;
        endo_residual(&lhs, &rhs, basis)
    }

    /// `𝔼†_X∘𝔼†_{X′} = 𝔼†_{X′∧X}`
    pub fn edag_edag_check(&self, x: &MixedField<S>, x2: &MixedField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let lhs = self.op_edag(x)?.compose(&self.op_edag(x2)?);
        let rhs = self.op_edag(&self.sharp(x2, x)?)?;
        endo_residual(&lhs, &rhs, basis)
    }

    /// Contraction-sum route against the ⊥-conjugation route.
    pub fn edag_routes_check(&self, x: &MixedField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        endo_residual(&self.op_edag(x)?, &self.op_edag_perp(x)?, basis)
    }

    /// `(−1)^{k(k−1)/2} ∏ᵢ sᵢ(𝔼_{eᵢ} + 𝔼†_{eᵢ}) = ⊥` on `∧^k`, orthonormal frame.
    pub fn clifford_check(&self, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let fr = self.frame(Frame::Orthonormal)?;
        let mut prod = FiberEndo::identity();
        for (e, s) in fr.vectors.iter().zip(&fr.signs) {
            let v = self.as_multivector(e)?;
            let c = self.op_e(&v)?.add(&self.op_edag(&v)?).scale(S::from_int(*s as i64));
            prod = prod.compose(&c);
        }
        let lhs = FiberEndo::by_degree("Cl(vol)", move |k, xk| Ok(prod.apply(xk)?.scale(sign::<S>(k * (k.max(1) - 1) / 2))));
        endo_residual(&lhs, &self.op_perp()?, basis)
    }

    /// `ℝ_{X,Y} = 𝔻_{Y⊗X − X⊗Y}`
    pub fn curvature_op(&self, x: &LocalField<S>, y: &LocalField<S>) -> Result<FiberEndo<S>> {
        self.op_d_tensor(&y.tensor(x).sub(&x.tensor(y))?)
    }

    /// `[𝔻_X, 𝔻_Y] = ℝ_{X,Y} − 𝔻_{[X,Y]}`
    pub fn dd_commutator_check(&self, x: &LocalField<S>, y: &LocalField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let lhs = self.op_d_tensor(x)?.commutator(&self.op_d_tensor(y)?);
        let br = lie_bracket(&self.ctx, x, y)?;
        let rhs = self.curvature_op(x, y)?.sub(&self.op_d_tensor(&br)?);
        endo_residual(&lhs, &rhs, basis)
    }

    /// `[𝔻_X, 𝔻†_Y] = X(div Y)⌟ − ℝ_{X,Y} + 𝔻_{[X,Y]}`
    pub fn d_ddag_commutator_check(&self, x: &LocalField<S>, y: &LocalField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let ctx = &*self.ctx;
        let lhs = self.op_d_tensor(x)?.commutator(&self.op_ddag(y)?);
        let xdiv = directional(ctx, x, &divergence(ctx, y)?)?;
        let br = lie_bracket(ctx, x, y)?;
        let rhs = self.op_f(&xdiv)?.sub(&self.curvature_op(x, y)?).add(&self.op_d_tensor(&br)?);
        endo_residual(&lhs, &rhs, basis)
    }

    /// `[𝔻†_X, 𝔻†_Y] = −div[X,Y]⌟ + ℝ_{X,Y} − 𝔻_{[X,Y]}`
    pub fn ddag_ddag_commutator_check(&self, x: &LocalField<S>, y: &LocalField<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let ctx = &*self.ctx;
        let lhs = self.op_ddag(x)?.commutator(&self.op_ddag(y)?);
        let br = lie_bracket(ctx, x, y)?;
        let rhs = self
            .curvature_op(x, y)?
            .sub(&self.op_f(&divergence(ctx, &br)?)?)
            .sub(&self.op_d_tensor(&br)?);
        endo_residual(&lhs, &rhs, basis)
    }

    /// `𝔻𝔼_{a♯b} = 𝔻𝔼_a∘𝔻𝔼_b`
    pub fn de_action_check(&self, a: &SharpElement<S>, b: &SharpElement<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let lhs = self.op_de(&self.sharp(a, b)?)?;
        let rhs = self.op_de(a)?.compose(&self.op_de(b)?);
        endo_residual(&lhs, &rhs, basis)
    }

    /// `𝔻𝔼†_{a♯b} = (−1)^{|α||β|} 𝔻𝔼†_a∘𝔻𝔼†_b` for homogeneous exterior parts.
    pub fn dedag_action_check(&self, a: &SharpElement<S>, b: &SharpElement<S>, basis: &[TensorExtElement<S>]) -> Result<f64> {
        let ka = ext_degree(a)?;
        let kb = ext_degree(b)?;
        let lhs = self.op_dedag(&self.sharp(a, b)?)?;
        let rhs = self.op_dedag(a)?.compose(&self.op_dedag(b)?).scale(sign::<S>(ka * kb));
        endo_residual(&lhs, &rhs, basis)
    }
}

fn ext_degree<S: Scalar>(a: &MixedField<S>) -> Result<usize> {
    let mut ks = a.parts().map(|((_, k), _)| *k);
    let k = ks.next().unwrap_or(0);
    if ks.any(|j| j != k) {
        return Err(Error::invalid("exterior part is not homogeneous"));
    }
    Ok(k)
}
