//! Point-supported currents in PBW coordinates.
//!
//! The fiber at `p` is realized through probe forms `P_{T,L} = (e−p)^T/T!·ε^L`
//! with `|T| ≤ r`. Probes are indexed exactly like PBW keys `(I, K)` with `I`
//! a sorted word, so the Gram matrix of PBW functionals against probes is
//! unit lower-triangular when keys are ordered by word length.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use crate::connection::ChartConnection;
use crate::covderiv::{curvature_on_shape, curvature_towers, nabla_hat_word, CovContext, LocalField, Rep};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::jet::{determinant_jet, Jet};
use crate::linalg::{rank, Matrix};
use crate::multialg::{
    binomial, deshuffles, key_string, parse_key, tensor_coproduct, wedge_coproduct, AntiIndex, Key, TensorExtElement, Word,
};
use crate::scalar::Scalar;

/// Coefficients over PBW keys `(sorted I, K)`; the functional `ω ↦ Σ c·(∇_{e_I}ω)_p(ε_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicCurrent<S: Scalar> {
    k: usize,
    coeffs: BTreeMap<Key, S>,
}

impl<S: Scalar> AtomicCurrent<S> {
    pub fn zero(k: usize) -> Self {
        AtomicCurrent {
            k,
            coeffs: BTreeMap::new(),
        }
    }

    /// Single PBW functional.
    pub fn basis(i: Word, k: AntiIndex) -> Result<Self> {
        if !i.is_sorted() {
            return Err(Error::invalid(format!("PBW word {i} is not sorted")));
        }
        let mut t = Self::zero(k.len());
        t.coeffs.insert((i, k), S::one());
        Ok(t)
    }

    /// The Dirac mass `()⊠∅`.
    pub fn dirac() -> Self {
        Self::basis(Word::empty(), AntiIndex::empty()).expect("sorted")
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    /// Largest word length with a nonzero coefficient.
    pub fn order(&self) -> usize {
        self.coeffs.keys().map(|(w, _)| w.len()).max().unwrap_or(0)
    }

    pub fn get(&self, key: &Key) -> S {
        self.coeffs.get(key).copied().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &S)> {
        self.coeffs.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add_term(&mut self, key: Key, c: S) {
        let slot = self.coeffs.entry(key.clone()).or_insert_with(S::zero);
        *slot += c;
        if slot.is_zero() {
            self.coeffs.remove(&key);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (key, c) in &other.coeffs {
            out.add_term(key.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: S) -> Self {
        let mut out = Self::zero(self.k);
        for (key, c) in &self.coeffs {
            out.add_term(key.clone(), *c * s);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-S::one()))
    }

    pub fn max_abs(&self) -> f64 {
        crate::scalar::max_magnitude(self.coeffs.values().copied())
    }

    /// Sorted words are their own Φ-preimages.
    pub fn lift(&self) -> TensorExtElement<S> {
        let mut out = TensorExtElement::zero();
        for ((w, k), c) in &self.coeffs {
            out.add_term(w.clone(), k.clone(), *c);
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> =
            self.coeffs.iter().map(|(key, c)| (key_string(key), c.to_json())).collect();
        serde_json::json!({ "degree": self.k, "coefficients": map })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let k = v
            .get("degree")
            .and_then(|d| d.as_u64())
            .ok_or_else(|| Error::invalid("current JSON needs an integer \"degree\""))? as usize;
        let map = v
            .get("coefficients")
            .and_then(|m| m.as_object())
            .ok_or_else(|| Error::invalid("current JSON needs a \"coefficients\" object"))?;
        let mut out = Self::zero(k);
        for (key, c) in map {
            let key = parse_key(key)?;
            if !key.0.is_sorted() || key.1.len() != k {
                return Err(Error::invalid(format!("{} is not a PBW key of degree {k}", key_string(&key))));
            }
            out.add_term(key, S::from_json(c)?);
        }
        Ok(out)
    }
}

/// Formal sum of pairs of PBW keys.
pub type CurrentPair<S> = BTreeMap<(Key, Key), S>;

/// An element of the kernel of Φ together with its labels.
#[derive(Debug, Clone)]
pub struct KernelElement<S: Scalar> {
    pub big_i: Word,
    pub i: usize,
    pub j: usize,
    pub big_j: Word,
    pub k: AntiIndex,
    pub element: TensorExtElement<S>,
}

/// Probe values and PBW keys for one exterior degree.
#[derive(Debug)]
pub struct PbwTable<S: Scalar> {
    k: usize,
    keys: Vec<Key>,
    index: HashMap<Key, usize>,
    /// word → probe → K-rank → `(∇_{e_W} P)_p(ε_K)`
    values: HashMap<Word, Vec<Vec<S>>>,
}

impl<S: Scalar> PbwTable<S> {
    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn index_of(&self, key: &Key) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    fn value(&self, w: &Word, probe: usize, kr: usize) -> Result<S> {
        let v = self.values.get(w).ok_or(Error::InsufficientOrder {
            need: w.len(),
            have: self.keys.last().map_or(0, |k| k.0.len()),
        })?;
        Ok(v[probe][kr])
    }
}

/// The fiber of point-supported currents of order `≤ r` at a point.
pub struct Fiber<S: Scalar> {
    ctx: Arc<CovContext<S>>,
    r: usize,
    tables: Vec<OnceLock<std::result::Result<Arc<PbwTable<S>>, Error>>>,
}

impl<S: Scalar> Fiber<S> {
    pub fn new(ctx: Arc<CovContext<S>>, r: usize) -> Result<Self> {
        if ctx.chart().order() < r {
            return Err(Error::InsufficientOrder {
                need: r,
                have: ctx.chart().order(),
            });
        }
        let d = ctx.fiber_dim();
        Ok(Fiber {
            ctx,
            r,
            tables: (0..=d).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn at(cc: &ChartConnection, p: &[S], r: usize) -> Result<Self> {
        Self::new(Arc::new(CovContext::at(cc, p, r.max(1))?), r)
    }

    pub fn ctx(&self) -> &Arc<CovContext<S>> {
        &self.ctx
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.ctx.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.ctx.fiber_dim()
    }

    /// PBW keys `(I, K)` ordered by word length, then word, then `K`.
    pub fn pbw_keys(n: usize, d: usize, r: usize, k: usize) -> Vec<Key> {
        let mut keys = Vec::new();
        for w in Word::sorted_words(n, r) {
            for kk in AntiIndex::all(d, k) {
                keys.push((w.clone(), kk));
            }
        }
        keys
    }

    /// Probe `(e−p)^T/T!·ε^L` for a PBW key `(T, L)`.
    pub fn probe_field(&self, key: &Key) -> Result<LocalField<S>> {
        let (t, l) = key;
        let d = self.fiber_dim();
        let k = l.len();
        let fam = self.ctx.chart().family();
        let mono = Jet::monomial(fam, self.r, &t.multi_index(self.dim()));
        let mut comps = vec![Jet::zero(fam, self.r); binomial(d, k)];
        comps[l.rank(d)] = mono;
        LocalField::new(&self.ctx, vec![Rep::CoFiberExt(k)], comps)
    }

    pub fn table(&self, k: usize) -> Result<Arc<PbwTable<S>>> {
        let slot = self
            .tables
            .get(k)
            .ok_or(Error::DegreeMismatch {
                expected: self.fiber_dim(),
                found: k,
            })?;
        slot.get_or_init(|| self.build_table(k).map(Arc::new)).clone()
    }

    fn build_table(&self, k: usize) -> Result<PbwTable<S>> {
        let (n, d) = (self.dim(), self.fiber_dim());
        let keys = Self::pbw_keys(n, d, self.r, k);
        let index = keys.iter().enumerate().map(|(i, key)| (key.clone(), i)).collect();
        let mut values: HashMap<Word, Vec<Vec<S>>> = HashMap::new();
        for len in 0..=self.r {
            for w in Word::all_of_length(n, len) {
                values.insert(w, Vec::with_capacity(keys.len()));
            }
        }
        for key in &keys {
            let tower = self.probe_field(key)?.tower(&self.ctx, self.r)?;
            for (len, level) in tower.iter().enumerate() {
                for w in Word::all_of_length(n, len) {
                    let v = level.slice(&w).values();
                    values.get_mut(&w).expect("word").push(v);
                }
            }
        }
        Ok(PbwTable { k, keys, index, values })
    }

    fn check_degree(x: &TensorExtElement<S>, k: usize) -> Result<()> {
        for ((_, kk), _) in x.iter() {
            if kk.len() != k {
                return Err(Error::DegreeMismatch {
                    expected: k,
                    found: kk.len(),
                });
            }
        }
        Ok(())
    }

    /// Values of `Φ_p(x)` on every probe of degree `k`.
    pub fn probe_values(&self, x: &TensorExtElement<S>, k: usize) -> Result<Vec<S>> {
        Self::check_degree(x, k)?;
        let table = self.table(k)?;
        let d = self.fiber_dim();
        let mut out = vec![S::zero(); table.len()];
        for ((w, kk), c) in x.iter() {
            if w.len() > self.r {
                return Err(Error::InsufficientOrder {
                    need: w.len(),
                    have: self.r,
                });
            }
            let kr = kk.rank(d);
            for (j, o) in out.iter_mut().enumerate() {
                let v = table.value(w, j, kr)?;
                if !v.is_zero() {
                    *o += *c * v;
                }
            }
        }
        Ok(out)
    }

    /// Probe values of a current.
    pub fn current_probe_values(&self, t: &AtomicCurrent<S>) -> Result<Vec<S>> {
        self.probe_values(&t.lift(), t.degree())
    }

    /// Solve PBW coordinates from probe values by back-substitution in descending word length.
    pub fn from_probe_values(&self, k: usize, v: &[S]) -> Result<AtomicCurrent<S>> {
        let table = self.table(k)?;
        if v.len() != table.len() {
            return Err(Error::invalid("probe value vector has the wrong length"));
        }
        let d = self.fiber_dim();
        let mut c = vec![S::zero(); table.len()];
        for idx in (0..table.len()).rev() {
            let deg = table.keys[idx].0.len();
            let mut acc = v[idx];
            for m in idx + 1..table.len() {
                let (wm, km) = &table.keys[m];
                if wm.len() <= deg || c[m].is_zero() {
                    continue;
                }
                let g = table.value(wm, idx, km.rank(d))?;
                acc -= c[m] * g;
            }
            c[idx] = acc.checked()?;
        }
        let mut out = AtomicCurrent::zero(k);
        for (key, ci) in table.keys.iter().zip(c) {
            out.add_term(key.clone(), ci);
        }
        Ok(out)
    }

    /// PBW coordinates of `Φ_p(x)` for `x` homogeneous of degree `k`.
    pub fn to_pbw(&self, x: &TensorExtElement<S>, k: usize) -> Result<AtomicCurrent<S>> {
        let v = self.probe_values(x, k)?;
        self.from_probe_values(k, &v)
    }

    /// `Φ_p(x)(ω)` for an arbitrary form field.
    pub fn phi_apply(&self, x: &TensorExtElement<S>, omega: &LocalField<S>) -> Result<S> {
        let k = match omega.reps() {
            [Rep::CoFiberExt(k)] => *k,
            _ => return Err(Error::invalid("Φ needs a form field")),
        };
        Self::check_degree(x, k)?;
        let depth = x.max_word_len();
        let tower = omega.tower(&self.ctx, depth)?;
        let d = self.fiber_dim();
        let mut acc = S::zero();
        for ((w, kk), c) in x.iter() {
            let v = tower[w.len()].slice(w).comps()[kk.rank(d)].value();
            acc += *c * v;
        }
        Ok(acc)
    }

    pub fn eval(&self, t: &AtomicCurrent<S>, omega: &LocalField<S>) -> Result<S> {
        if t.is_zero() {
            return Ok(S::zero());
        }
        self.phi_apply(&t.lift(), omega)
    }

    /// Probe-evaluation matrix of the full coordinate basis of `⊗^{≤r} ⊠ ∧^k` (rows) against probes.
    pub fn probe_matrix(&self, k: usize) -> Result<Matrix<S>> {
        let (n, d) = (self.dim(), self.fiber_dim());
        let mut rows = Vec::new();
        for len in 0..=self.r {
            for w in Word::all_of_length(n, len) {
                for kk in AntiIndex::all(d, k) {
                    rows.push(self.probe_values(&TensorExtElement::basis(w.clone(), kk), k)?);
                }
            }
        }
        Ok(rows)
    }

    pub fn probe_rank(&self, k: usize, rel_tol: f64) -> Result<usize> {
        Ok(rank(&self.probe_matrix(k)?, rel_tol))
    }

    /// `E_{I,i,j,J,K}`.
    pub fn kernel_element(&self, big_i: &Word, i: usize, j: usize, big_j: &Word, k: &AntiIndex) -> Result<TensorExtElement<S>> {
        let ctx = &*self.ctx;
        let n = self.dim();
        let d = self.fiber_dim();
        let ei = Word::letter(i);
        let ej = Word::letter(j);
        let mut out = TensorExtElement::zero();
        for parts in deshuffles(big_i, 4) {
            let a_i = nabla_hat_word(ctx, &parts[1], &ei)?;
            let b_j = nabla_hat_word(ctx, &parts[2], &ej)?;
            let a_j = nabla_hat_word(ctx, &parts[1], &ej)?;
            let b_i = nabla_hat_word(ctx, &parts[2], &ei)?;
            let cj = nabla_hat_word(ctx, &parts[3], big_j)?;
            for x in 0..n {
                for y in 0..n {
                    let c = a_i[x] * b_j[y] - a_j[x] * b_i[y];
                    if c.is_zero() {
                        continue;
                    }
                    for (z, cz) in cj.iter().enumerate() {
                        if cz.is_zero() {
                            continue;
                        }
                        let tail = Word::from_slice(&[x as u8, y as u8]).concat(&Word::from_flat_index(z, big_j.len(), n));
                        out.add_term(parts[0].concat(&tail), k.clone(), c * *cz);
                    }
                }
            }
        }
        let kdeg = k.len();
        let ext_rep = Rep::FiberExt(kdeg);
        let shape_j = vec![Rep::Tangent; big_j.len()];
        let towers = curvature_towers(ctx, &[ext_rep, Rep::Tangent], big_i.len())?;
        let ext_basis = AntiIndex::all(d, kdeg);
        let kr = k.rank(d);
        for parts in deshuffles(big_i, 5) {
            // e_{I1} ⊗ ∇_{I2} e_J ⊠ (∇_{I3} R^E)_{∇_{I4} e_i ⊗ ∇_{I5} e_j} ε_K
            let hij = pair_tensor(&nabla_hat_word(ctx, &parts[3], &ei)?, &nabla_hat_word(ctx, &parts[4], &ej)?);
            let re = curvature_on_shape(ctx, &towers, &[ext_rep], &parts[2], &hij)?;
            let hj = nabla_hat_word(ctx, &parts[1], big_j)?;
            for (z, cz) in hj.iter().enumerate() {
                if cz.is_zero() {
                    continue;
                }
                let word = parts[0].concat(&Word::from_flat_index(z, big_j.len(), n));
                for (target, row) in re.iter().enumerate() {
                    let c = row[kr];
                    if !c.is_zero() {
                        out.add_term(word.clone(), ext_basis[target].clone(), *cz * c);
                    }
                }
            }
            // e_{I1} ⊗ (∇_{I2} R^TM)_{∇_{I3} e_i ⊗ ∇_{I4} e_j}(∇_{I5} e_J) ⊠ ε_K
            let hij = pair_tensor(&nabla_hat_word(ctx, &parts[2], &ei)?, &nabla_hat_word(ctx, &parts[3], &ej)?);
            let rt = curvature_on_shape(ctx, &towers, &shape_j, &parts[1], &hij)?;
            let hj = nabla_hat_word(ctx, &parts[4], big_j)?;
            for (target, row) in rt.iter().enumerate() {
                let mut c = S::zero();
                for (src, v) in row.iter().enumerate() {
                    c += *v * hj[src];
                }
                if !c.is_zero() {
                    let word = parts[0].concat(&Word::from_flat_index(target, big_j.len(), n));
                    out.add_term(word, k.clone(), c);
                }
            }
        }
        Ok(out)
    }

    /// All `E_{I,i,j,J,K}` with `i < j`, `|I| + |J| + 2 ≤ r`, `|K| = k`.
    pub fn kernel_basis(&self, k: usize) -> Result<Vec<KernelElement<S>>> {
        let (n, d) = (self.dim(), self.fiber_dim());
        let mut out = Vec::new();
        if self.r < 2 {
            return Ok(out);
        }
        for li in 0..=self.r - 2 {
            for lj in 0..=self.r - 2 - li {
                for big_i in Word::all_of_length(n, li) {
                    for i in 0..n {
                        for j in i + 1..n {
                            for big_j in Word::all_of_length(n, lj) {
                                for kk in AntiIndex::all(d, k) {
                                    let element = self.kernel_element(&big_i, i, j, &big_j, &kk)?;
                                    out.push(KernelElement {
                                        big_i: big_i.clone(),
                                        i,
                                        j,
                                        big_j: big_j.clone(),
                                        k: kk,
                                        element,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `dim ⊗^{≤r} − dim S^{≤r}`, times `C(d,k)`.
    pub fn kernel_dimension(n: usize, d: usize, r: usize, k: usize) -> usize {
        let tensor: usize = (0..=r).map(|l| n.pow(l as u32)).sum();
        (tensor - binomial(n + r, n)) * binomial(d, k)
    }

    /// Coproduct in PBW coordinates; sorted words deshuffle into sorted words.
    pub fn coproduct(&self, t: &AtomicCurrent<S>) -> Result<CurrentPair<S>> {
        let mut out: CurrentPair<S> = BTreeMap::new();
        for ((w, k), c) in t.iter() {
            for (w1, w2) in tensor_coproduct(w) {
                for (sign, k1, k2) in wedge_coproduct(k) {
                    let key = ((w1.clone(), k1), (w2.clone(), k2));
                    let slot = out.entry(key.clone()).or_insert_with(S::zero);
                    *slot += *c * S::from_int(sign as i64);
                    if slot.is_zero() {
                        out.remove(&key);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Re-project both sides of a pair sum through `to_pbw`.
    pub fn project_pair(&self, pair: &BTreeMap<(Key, Key), S>) -> Result<CurrentPair<S>> {
        let mut cache: HashMap<Key, AtomicCurrent<S>> = HashMap::new();
        let mut proj = |key: &Key| -> Result<AtomicCurrent<S>> {
            if let Some(t) = cache.get(key) {
                return Ok(t.clone());
            }
            let t = self.to_pbw(&TensorExtElement::basis(key.0.clone(), key.1.clone()), key.1.len())?;
            cache.insert(key.clone(), t.clone());
            Ok(t)
        };
        let mut out: CurrentPair<S> = BTreeMap::new();
        for ((a, b), c) in pair {
            let ta = proj(a)?;
            let tb = proj(b)?;
            for (ka, ca) in ta.iter() {
                for (kb, cb) in tb.iter() {
                    *out.entry((ka.clone(), kb.clone())).or_insert_with(S::zero) += *c * *ca * *cb;
                }
            }
        }
        out.retain(|_, v| !v.is_zero());
        Ok(out)
    }

    /// `(ω ⊗ η)(Σ T₁ ⊗ T₂)`, summing only pairs whose degrees match the forms.
    pub fn eval_pair(&self, pair: &CurrentPair<S>, omega: &LocalField<S>, eta: &LocalField<S>) -> Result<S> {
        let ka = form_degree(omega)?;
        let kb = form_degree(eta)?;
        let mut acc = S::zero();
        for ((a, b), c) in pair {
            if a.1.len() != ka || b.1.len() != kb {
                continue;
            }
            let va = self.phi_apply(&TensorExtElement::basis(a.0.clone(), a.1.clone()), omega)?;
            if va.is_zero() {
                continue;
            }
            let vb = self.phi_apply(&TensorExtElement::basis(b.0.clone(), b.1.clone()), eta)?;
            acc += *c * va * vb;
        }
        Ok(acc)
    }

    /// `ε(T) = T(1)`.
    pub fn counit(&self, t: &AtomicCurrent<S>) -> S {
        t.get(&(Word::empty(), AntiIndex::empty()))
    }

    /// Lift of `f⌟`: `v⊠α ↦ (∇_{v(1)} f)_p v(2) ⊠ α`.
    pub fn f_lift(&self, f_tower: &[LocalField<S>], x: &TensorExtElement<S>) -> Result<TensorExtElement<S>> {
        let mut out = TensorExtElement::zero();
        for ((w, k), c) in x.iter() {
            for (w1, w2) in tensor_coproduct(w) {
                let level = f_tower.get(w1.len()).ok_or(Error::InsufficientOrder {
                    need: w1.len(),
                    have: f_tower.len().saturating_sub(1),
                })?;
                let v = level.slice(&w1).values()[0];
                if !v.is_zero() {
                    out.add_term(w2, k.clone(), *c * v);
                }
            }
        }
        Ok(out)
    }

    pub fn f_action(&self, f: &LocalField<S>, t: &AtomicCurrent<S>) -> Result<AtomicCurrent<S>> {
        if !f.reps().is_empty() {
            return Err(Error::invalid("f⌟ needs a scalar field"));
        }
        let tower = f.tower(&self.ctx, t.order())?;
        let x = self.f_lift(&tower, &t.lift())?;
        self.to_pbw(&x, t.degree())
    }
}

fn pair_tensor<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    crate::covderiv::tensor_values(a, b)
}

fn form_degree<S: Scalar>(f: &LocalField<S>) -> Result<usize> {
    match f.reps() {
        [Rep::CoFiberExt(k)] => Ok(*k),
        _ => Err(Error::invalid("expected a form field")),
    }
}

/// A coordinate change from chart A to chart B: B coordinates as expressions in A coordinates.
#[derive(Debug, Clone)]
pub struct ChartMap {
    pub components: Vec<Expression>,
}

impl ChartMap {
    pub fn new(components: Vec<Expression>) -> Self {
        ChartMap { components }
    }

    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|e| e.eval(p)).collect()
    }

    /// Image point in the scalar mode.
    pub fn image<S: Scalar>(&self, p: &[S]) -> Result<Vec<S>> {
        let fam = crate::jet::JetFamily::new(p.len(), 0);
        self.components.iter().map(|e| Ok(e.eval_jet(p, &fam, 0)?.value())).collect()
    }
}

/// Matrix carrying chart-A PBW coordinates to chart-B PBW coordinates (rows B keys, columns A keys).
/// Both fibers must be tangent-bundle fibers of the same order at corresponding points.
pub fn transition_matrix<S: Scalar>(fa: &Fiber<S>, fb: &Fiber<S>, map: &ChartMap, k: usize) -> Result<Matrix<S>> {
    let n = fa.dim();
    if fb.dim() != n || map.components.len() != n || !fa.ctx().tangent_fiber() || !fb.ctx().tangent_fiber() {
        return Err(Error::invalid("transition needs two tangent-bundle charts of equal dimension"));
    }
    let r = fa.order().min(fb.order());
    let ctx = fa.ctx();
    let fam = ctx.chart().family();
    let p = ctx.chart().point();
    let ys = map
        .components
        .iter()
        .map(|e| e.eval_jet(p, fam, r + 1))
        .collect::<Result<Vec<_>>>()?;
    let jac: Vec<Vec<Jet<S>>> = ys.iter().map(|y| (0..n).map(|i| y.deriv(i)).collect()).collect();
    let jac_at: Matrix<S> = jac.iter().map(|row| row.iter().map(|j| j.value()).collect()).collect();
    if crate::linalg::determinant(&jac_at).is_zero() {
        return Err(Error::Singular("chart change has a singular Jacobian".into()));
    }
    let shifted: Vec<Jet<S>> = ys.iter().map(|y| y.add_scalar(-y.value()).truncate(r)).collect();
    let tb = fb.table(k)?;
    let ta = fa.table(k)?;
    let kforms = AntiIndex::all(n, k);
    let mut values: Vec<Vec<S>> = Vec::with_capacity(tb.len());
    for (t, l) in tb.keys() {
        // (y − y(p))^T / T! · dy^L, expressed in chart A
        let mi = t.multi_index(n);
        let mut mono = Jet::constant(fam, r, S::one());
        for (m, &e) in mi.iter().enumerate() {
            let pw = shifted[m].powi(e as i64)?.scale(S::from_ratio(1, crate::jet::factorial(e as usize)));
            mono = mono.mul(&pw);
        }
        let comps: Vec<Jet<S>> = kforms
            .iter()
            .map(|kk| {
                let minor: Vec<Vec<Jet<S>>> = l
                    .letters()
                    .iter()
                    .map(|&a| kk.letters().iter().map(|&b| jac[a as usize][b as usize].truncate(r)).collect())
                    .collect();
                if minor.is_empty() {
                    mono.clone()
                } else {
                    determinant_jet(&minor).mul(&mono)
                }
            })
            .collect();
        let probe = LocalField::new(ctx, vec![Rep::CoFiberExt(k)], comps)?;
        let tower = probe.tower(ctx, r)?;
        let row: Vec<S> = ta
            .keys()
            .iter()
            .map(|(w, kk)| tower[w.len()].slice(w).comps()[kk.rank(n)].value())
            .collect();
        values.push(row);
    }
    // column A-key: its values on all B probes → B coordinates
    let mut out = vec![vec![S::zero(); ta.len()]; tb.len()];
    for col in 0..ta.len() {
        let v: Vec<S> = values.iter().map(|row| row[col]).collect();
        let t = fb.from_probe_values(k, &v)?;
        for (key, c) in t.iter() {
            let row = tb.index_of(key).expect("key");
            out[row][col] = *c;
        }
    }
    Ok(out)
}

