//! Pointwise graded multilinear algebra on `⊗(V) ⊠ ∧(E)`.
//!
//! Letters are stored 0-based and printed 1-based. Keys are ordered by
//! word length, then lexicographically, then by subset size and lexicographically;
//! this order is also the PBW basis order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::linalg::{determinant, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(pub SmallVec<[u8; 8]>);

impl Word {
    pub fn empty() -> Self {
        Word(SmallVec::new())
    }

    pub fn from_slice(letters: &[u8]) -> Self {
        Word(letters.iter().copied().collect())
    }

    pub fn letter(i: usize) -> Self {
        Word(SmallVec::from_slice(&[i as u8]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut w = self.0.clone();
        w.extend_from_slice(&other.0);
        Word(w)
    }

    pub fn is_sorted(&self) -> bool {
        self.0.windows(2).all(|p| p[0] <= p[1])
    }

    pub fn sorted(&self) -> Word {
        let mut w = self.0.clone();
        w.sort_unstable();
        Word(w)
    }

    /// Exponent vector of the letters, of length `n`.
    pub fn multi_index(&self, n: usize) -> SmallVec<[u8; 4]> {
        let mut t: SmallVec<[u8; 4]> = SmallVec::from_elem(0, n);
        for &l in &self.0 {
            t[l as usize] += 1;
        }
        t
    }

    /// The sorted word with exponent vector `t`.
    pub fn from_multi_index(t: &[u8]) -> Word {
        let mut w = SmallVec::new();
        for (i, &k) in t.iter().enumerate() {
            for _ in 0..k {
                w.push(i as u8);
            }
        }
        Word(w)
    }

    /// Base-`n` position among all words of the same length.
    pub fn flat_index(&self, n: usize) -> usize {
        self.0.iter().fold(0, |acc, &l| acc * n + l as usize)
    }

    pub fn from_flat_index(mut idx: usize, len: usize, n: usize) -> Word {
        let mut w: SmallVec<[u8; 8]> = SmallVec::from_elem(0, len);
        for slot in w.iter_mut().rev() {
            *slot = (idx % n) as u8;
            idx /= n;
        }
        Word(w)
    }

    /// All words of length `len` in `n` letters, in lexicographic order.
    pub fn all_of_length(n: usize, len: usize) -> Vec<Word> {
        (0..n.pow(len as u32)).map(|i| Word::from_flat_index(i, len, n)).collect()
    }

    /// All nondecreasing words of length ≤ `r`, in key order.
    pub fn sorted_words(n: usize, r: usize) -> Vec<Word> {
        let mut out = Vec::new();
        for len in 0..=r {
            for w in Word::all_of_length(n, len) {
                if w.is_sorted() {
                    out.push(w);
                }
            }
        }
        out
    }

    pub fn replace(&self, pos: usize, letter: u8) -> Word {
        let mut w = self.0.clone();
        w[pos] = letter;
        Word(w)
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn write_letters(f: &mut fmt::Formatter<'_>, letters: &[u8]) -> fmt::Result {
    for (i, l) in letters.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{}", *l as usize + 1)?;
    }
    Ok(())
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        write_letters(f, &self.0)?;
        write!(f, ")")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_letters(f, &self.0)
    }
}

/// Strictly increasing subset of fiber indices.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct AntiIndex(pub SmallVec<[u8; 4]>);

impl AntiIndex {
    pub fn empty() -> Self {
        AntiIndex(SmallVec::new())
    }

    pub fn new(letters: &[u8]) -> Result<Self> {
        if letters.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::invalid("antisymmetric index must be strictly increasing"));
        }
        Ok(AntiIndex(letters.iter().copied().collect()))
    }

    pub fn single(i: usize) -> Self {
        AntiIndex(SmallVec::from_slice(&[i as u8]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&(i as u8))
    }

    /// All subsets of `{0..d}` of size `k`, lexicographically.
    pub fn all(d: usize, k: usize) -> Vec<AntiIndex> {
        fn rec(start: usize, d: usize, k: usize, cur: &mut SmallVec<[u8; 4]>, out: &mut Vec<AntiIndex>) {
            if cur.len() == k {
                out.push(AntiIndex(cur.clone()));
                return;
            }
            for i in start..d {
                cur.push(i as u8);
                rec(i + 1, d, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if k <= d {
            rec(0, d, k, &mut SmallVec::new(), &mut out);
        }
        out
    }

    pub fn complement(&self, d: usize) -> AntiIndex {
        AntiIndex((0..d as u8).filter(|i| !self.0.contains(i)).collect())
    }

    /// Position in `AntiIndex::all(d, self.len())`.
    pub fn rank(&self, d: usize) -> usize {
        let k = self.0.len();
        let mut r = 0;
        let mut prev = 0usize;
        for (pos, &l) in self.0.iter().enumerate() {
            for skip in prev..l as usize {
                r += binomial(d - skip - 1, k - pos - 1);
            }
            prev = l as usize + 1;
        }
        r
    }

    /// Remove the element at position `pos`.
    pub fn without_pos(&self, pos: usize) -> AntiIndex {
        let mut v = self.0.clone();
        v.remove(pos);
        AntiIndex(v)
    }
}

impl Ord for AntiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for AntiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for AntiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        write_letters(f, &self.0)?;
        write!(f, "}}")
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Sign of moving `a` past `b` when both are sorted: `ε_a ∧ ε_b = sign · ε_{a∪b}`.
pub fn wedge(a: &AntiIndex, b: &AntiIndex) -> Option<(i8, AntiIndex)> {
    let mut inversions = 0;
    for &x in &a.0 {
        for &y in &b.0 {
            match x.cmp(&y) {
                Ordering::Equal => return None,
                Ordering::Greater => inversions += 1,
                Ordering::Less => {}
            }
        }
    }
    let mut v: SmallVec<[u8; 4]> = a.0.iter().chain(b.0.iter()).copied().collect();
    v.sort_unstable();
    Some((if inversions % 2 == 0 { 1 } else { -1 }, AntiIndex(v)))
}

/// Sort a list of distinct letters; `None` if a letter repeats.
pub fn sort_with_sign(letters: &[u8]) -> Option<(i8, AntiIndex)> {
    let mut v: SmallVec<[u8; 4]> = letters.iter().copied().collect();
    let mut sign = 1i8;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            match v[j].cmp(&v[j + 1]) {
                Ordering::Equal => return None,
                Ordering::Greater => {
                    v.swap(j, j + 1);
                    sign = -sign;
                }
                Ordering::Less => {}
            }
        }
    }
    if v.windows(2).any(|p| p[0] == p[1]) {
        return None;
    }
    Some((sign, AntiIndex(v)))
}

/// Deshuffle coproduct of a word.
pub fn tensor_coproduct(w: &Word) -> Vec<(Word, Word)> {
    deshuffles(w, 2)
        .into_iter()
        .map(|mut parts| {
            let b = parts.pop().expect("two parts");
            let a = parts.pop().expect("two parts");
            (a, b)
        })
        .collect()
}

/// Iterated deshuffle: every assignment of positions to `m` ordered parts.
pub fn deshuffles(w: &Word, m: usize) -> Vec<Vec<Word>> {
    let len = w.len();
    let total = m.pow(len as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut parts = vec![Word::empty(); m];
        let mut c = code;
        let mut assign: SmallVec<[usize; 8]> = SmallVec::from_elem(0, len);
        for slot in assign.iter_mut().rev() {
            *slot = c % m;
            c /= m;
        }
        for (pos, &part) in assign.iter().enumerate() {
            parts[part].0.push(w.0[pos]);
        }
        out.push(parts);
    }
    out
}

/// Koszul-signed coproduct of `ε_K`.
pub fn wedge_coproduct(k: &AntiIndex) -> Vec<(i8, AntiIndex, AntiIndex)> {
    let len = k.len();
    let mut out = Vec::with_capacity(1 << len);
    for mask in 0..(1u32 << len) {
        let mut a = SmallVec::new();
        let mut b = SmallVec::new();
        for pos in 0..len {
            if mask & (1 << pos) != 0 {
                a.push(k.0[pos]);
            } else {
                b.push(k.0[pos]);
            }
        }
        let (a, b) = (AntiIndex(a), AntiIndex(b));
        let (sign, _) = wedge(&a, &b).expect("disjoint");
        out.push((sign, a, b));
    }
    out.sort_by(|x, y| y.1.len().cmp(&x.1.len()).then_with(|| x.1 .0.cmp(&y.1 .0)));
    out
}

pub type Key = (Word, AntiIndex);

pub fn key_string(key: &Key) -> String {
    format!("{}|{}", key.0, {
        let mut s = String::new();
        for (i, l) in key.1 .0.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&(*l as usize + 1).to_string());
        }
        s
    })
}

fn parse_letters(s: &str) -> Result<SmallVec<[u8; 8]>> {
    if s.trim().is_empty() {
        return Ok(SmallVec::new());
    }
    s.split(',')
        .map(|t| {
            let v: usize = t.trim().parse().map_err(|_| Error::invalid(format!("bad letter \"{t}\"")))?;
            if v == 0 || v > 255 {
                return Err(Error::invalid(format!("letter out of range \"{t}\"")));
            }
            Ok((v - 1) as u8)
        })
        .collect()
}

pub fn parse_key(s: &str) -> Result<Key> {
    let (w, k) = s
        .split_once('|')
        .ok_or_else(|| Error::invalid(format!("key \"{s}\" lacks '|'")))?;
    let word = Word(parse_letters(w)?);
    let k = AntiIndex::new(&parse_letters(k)?)?;
    Ok((word, k))
}

/// Finitely supported element of `⊗(V) ⊠ ∧(E)`, possibly of mixed degree.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorExtElement<S: Scalar> {
    terms: BTreeMap<Key, S>,
}

impl<S: Scalar> Default for TensorExtElement<S> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<S: Scalar> TensorExtElement<S> {
    pub fn zero() -> Self {
        TensorExtElement { terms: BTreeMap::new() }
    }

    pub fn unit() -> Self {
        Self::basis(Word::empty(), AntiIndex::empty())
    }

    pub fn basis(w: Word, k: AntiIndex) -> Self {
        let mut e = Self::zero();
        e.add_term(w, k, S::one());
        e
    }

    pub fn add_term(&mut self, w: Word, k: AntiIndex, c: S) {
        if c.is_zero() {
            return;
        }
        let key = (w, k);
        let entry = self.terms.entry(key.clone()).or_insert_with(S::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn get(&self, w: &Word, k: &AntiIndex) -> S {
        self.terms
            .get(&(w.clone(), k.clone()))
            .copied()
            .unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &S)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, s: S) -> Self {
        let mut out = Self::zero();
        for ((w, k), c) in &self.terms {
            out.add_term(w.clone(), k.clone(), *c * s);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((w, k), c) in &other.terms {
            self.add_term(w.clone(), k.clone(), *c);
        }
    }

    pub fn add_scaled(&mut self, s: S, other: &Self) {
        for ((w, k), c) in &other.terms {
            self.add_term(w.clone(), k.clone(), s * *c);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-S::one(), other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        crate::scalar::max_magnitude(self.terms.values().copied())
    }

    pub fn max_word_len(&self) -> usize {
        self.terms.keys().map(|(w, _)| w.len()).max().unwrap_or(0)
    }

    /// The exterior degree if all keys share it.
    pub fn degree(&self) -> Option<usize> {
        let mut it = self.terms.keys().map(|(_, k)| k.len());
        let first = it.next()?;
        it.all(|d| d == first).then_some(first)
    }

    /// `(v⊠α)(w⊠β) = vw ⊠ α∧β`
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for ((w1, k1), c1) in &self.terms {
            for ((w2, k2), c2) in &other.terms {
                if let Some((sign, k)) = wedge(k1, k2) {
                    out.add_term(w1.concat(w2), k, *c1 * *c2 * S::from_int(sign as i64));
                }
            }
        }
        out
    }

    /// Apply a linear map given on basis keys.
    pub fn map_linear(&self, mut f: impl FnMut(&Word, &AntiIndex) -> Result<Self>) -> Result<Self> {
        let mut out = Self::zero();
        for ((w, k), c) in &self.terms {
            out.add_scaled(*c, &f(w, k)?);
        }
        Ok(out)
    }

    /// Counit: coefficient of `() ⊠ ∅`.
    pub fn counit(&self) -> S {
        self.get(&Word::empty(), &AntiIndex::empty())
    }

    pub fn coproduct(&self) -> TensorPair<S> {
        let mut out = TensorPair::zero();
        for ((w, k), c) in &self.terms {
            for (w1, w2) in tensor_coproduct(w) {
                for (sign, k1, k2) in wedge_coproduct(k) {
                    out.add_term(
                        (w1.clone(), k1),
                        (w2.clone(), k2),
                        *c * S::from_int(sign as i64),
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .terms
            .iter()
            .map(|(k, c)| (key_string(k), c.to_json()))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::invalid("expected a JSON object"))?;
        let mut out = Self::zero();
        for (k, c) in obj {
            let (w, a) = parse_key(k)?;
            out.add_term(w, a, S::from_json(c)?);
        }
        Ok(out)
    }
}

/// Element of a tensor square, keyed by pairs of keys.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPair<S: Scalar> {
    terms: BTreeMap<(Key, Key), S>,
}

impl<S: Scalar> TensorPair<S> {
    pub fn zero() -> Self {
        TensorPair { terms: BTreeMap::new() }
    }

    pub fn add_term(&mut self, a: Key, b: Key, c: S) {
        if c.is_zero() {
            return;
        }
        let key = (a, b);
        let entry = self.terms.entry(key.clone()).or_insert_with(S::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Key, Key), &S)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for ((a, b), c) in &other.terms {
            out.add_term(a.clone(), b.clone(), -*c);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        crate::scalar::max_magnitude(self.terms.values().copied())
    }

    /// Apply `f ⊗ g` where both are given on single basis keys.
    pub fn map_each(
        &self,
        mut f: impl FnMut(&Key) -> Result<TensorExtElement<S>>,
        mut g: impl FnMut(&Key) -> Result<TensorExtElement<S>>,
    ) -> Result<Self> {
        let mut out = Self::zero();
        for ((a, b), c) in &self.terms {
            let fa = f(a)?;
            let gb = g(b)?;
            for (ka, ca) in fa.iter() {
                for (kb, cb) in gb.iter() {
                    out.add_term(ka.clone(), kb.clone(), *c * *ca * *cb);
                }
            }
        }
        Ok(out)
    }
}

pub type ExtVec<S> = BTreeMap<AntiIndex, S>;

/// Determinant of the evaluation matrix `(α^i(v_j))`.
pub fn det_pairing<S: Scalar>(covectors: &[Vec<S>], vectors: &[Vec<S>]) -> Result<S> {
    if covectors.len() != vectors.len() {
        return Err(Error::DegreeMismatch {
            expected: covectors.len(),
            found: vectors.len(),
        });
    }
    let m: Matrix<S> = covectors
        .iter()
        .map(|a| {
            vectors
                .iter()
                .map(|v| {
                    let mut acc = S::zero();
                    for (x, y) in a.iter().zip(v.iter()) {
                        acc += *x * *y;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    if m.is_empty() {
        return Ok(S::one());
    }
    Ok(determinant(&m))
}

/// Pairing of a dual-basis expansion with a basis expansion.
pub fn pair_ext<S: Scalar>(omega: &ExtVec<S>, alpha: &ExtVec<S>) -> S {
    let mut acc = S::zero();
    for (k, c) in omega {
        if let Some(a) = alpha.get(k) {
            acc += *c * *a;
        }
    }
    acc
}

/// Diagonal signs of an orthonormal frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSignature(pub Vec<i8>);

impl MetricSignature {
    pub fn euclidean(n: usize) -> Self {
        MetricSignature(vec![1; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn product(&self, idx: &[u8]) -> i8 {
        idx.iter().map(|&i| self.0[i as usize]).product()
    }
}

/// Hodge star for a non-degenerate symmetric Gram matrix.
///
/// `vol_scale` multiplies the coordinate volume element: `1/√|det g|` on vectors,
/// `√|det g|` on covectors (where `gram` is then the inverse metric).
#[derive(Debug, Clone)]
pub struct Hodge<S: Scalar> {
    n: usize,
    gram: Matrix<S>,
    vol_scale: S,
    det_sign: i8,
    orientation: i8,
}

fn minor<S: Scalar>(g: &Matrix<S>, rows: &[u8], cols: &[u8]) -> S {
    if rows.is_empty() {
        return S::one();
    }
    let m: Matrix<S> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| g[r as usize][c as usize]).collect())
        .collect();
    determinant(&m)
}

impl<S: Scalar> Hodge<S> {
    pub fn orthonormal(sig: &MetricSignature, orientation: i8) -> Self {
        let n = sig.dim();
        let gram = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { S::from_int(sig.0[i] as i64) } else { S::zero() })
                    .collect()
            })
            .collect();
        Hodge {
            n,
            gram,
            vol_scale: S::one(),
            det_sign: sig.0.iter().product(),
            orientation,
        }
    }

    pub fn new(gram: Matrix<S>, vol_scale: S, orientation: i8) -> Self {
        let det = determinant(&gram);
        Hodge {
            n: gram.len(),
            det_sign: if det.to_f64() < 0.0 { -1 } else { 1 },
            gram,
            vol_scale,
            orientation,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Sign of `det g`.
    pub fn det_sign(&self) -> i8 {
        self.det_sign
    }

    pub fn star_basis(&self, j: &AntiIndex) -> ExtVec<S> {
        let mut out = ExtVec::new();
        for jp in AntiIndex::all(self.n, j.len()) {
            let m = minor(&self.gram, jp.letters(), j.letters());
            if m.is_zero() {
                continue;
            }
            let comp = jp.complement(self.n);
            let (sign, _) = wedge(&jp, &comp).expect("complementary");
            let c = m * self.vol_scale * S::from_int((sign * self.orientation) as i64);
            *out.entry(comp).or_insert_with(S::zero) += c;
        }
        out
    }

    pub fn star(&self, alpha: &ExtVec<S>) -> ExtVec<S> {
        let mut out = ExtVec::new();
        for (k, c) in alpha {
            for (kk, v) in self.star_basis(k) {
                *out.entry(kk).or_insert_with(S::zero) += *c * v;
            }
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    /// `⋆⁻¹ = (−1)^{m(n−m)} s ⋆` on degree `m`.
    pub fn star_inverse(&self, alpha: &ExtVec<S>) -> ExtVec<S> {
        let mut out = ExtVec::new();
        for (k, c) in alpha {
            let m = k.len();
            let sign = if (m * (self.n - m)) % 2 == 0 { 1 } else { -1 } * self.det_sign as i64;
            for (kk, v) in self.star_basis(k) {
                *out.entry(kk).or_insert_with(S::zero) += *c * v * S::from_int(sign);
            }
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    /// Apply `⋆⁻¹` to the exterior part of every key.
    pub fn perp(&self, x: &TensorExtElement<S>) -> TensorExtElement<S> {
        let mut out = TensorExtElement::zero();
        for ((w, k), c) in x.iter() {
            let single: ExtVec<S> = [(k.clone(), *c)].into_iter().collect();
            for (kk, v) in self.star_inverse(&single) {
                out.add_term(w.clone(), kk, v);
            }
        }
        out
    }

    pub fn perp_inverse(&self, x: &TensorExtElement<S>) -> TensorExtElement<S> {
        let mut out = TensorExtElement::zero();
        for ((w, k), c) in x.iter() {
            let single: ExtVec<S> = [(k.clone(), *c)].into_iter().collect();
            for (kk, v) in self.star(&single) {
                out.add_term(w.clone(), kk, v);
            }
        }
        out
    }

    /// Metric pairing `⟨e_A, e_B⟩ = det g_{AB}` extended to multivectors.
    pub fn inner(&self, a: &ExtVec<S>, b: &ExtVec<S>) -> S {
        let mut acc = S::zero();
        for (ka, ca) in a {
            for (kb, cb) in b {
                if ka.len() == kb.len() {
                    acc += *ca * *cb * minor(&self.gram, ka.letters(), kb.letters());
                }
            }
        }
        acc
    }

    pub fn gram(&self) -> &Matrix<S> {
        &self.gram
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn ai(l: &[u8]) -> AntiIndex {
        AntiIndex::new(l).unwrap()
    }

    #[test]
    fn coproduct_examples() {
        let w = Word::from_slice(&[0, 1]);
        let cop = tensor_coproduct(&w);
        assert_eq!(cop.len(), 4);
        assert!(cop.contains(&(Word::from_slice(&[0]), Word::from_slice(&[1]))));
        assert!(cop.contains(&(Word::from_slice(&[1]), Word::from_slice(&[0]))));
        assert_eq!(tensor_coproduct(&Word::empty()), vec![(Word::empty(), Word::empty())]);
        let k = wedge_coproduct(&ai(&[0, 1]));
        assert_eq!(
            k,
            vec![
                (1, ai(&[0, 1]), ai(&[])),
                (1, ai(&[0]), ai(&[1])),
                (-1, ai(&[1]), ai(&[0])),
                (1, ai(&[]), ai(&[0, 1])),
            ]
        );
    }

    #[test]
    fn det_pairing_examples() {
        let e = |i: usize| -> Vec<Rational> {
            (0..3).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect()
        };
        assert_eq!(det_pairing(&[e(0), e(1)], &[e(0), e(1)]).unwrap(), Rational::one());
        assert_eq!(det_pairing(&[e(0), e(1)], &[e(1), e(0)]).unwrap(), -Rational::one());
        assert_eq!(det_pairing(&[e(0), e(1)], &[e(0), e(2)]).unwrap(), Rational::zero());
        assert!(det_pairing(&[e(0)], &[e(0), e(1)]).is_err());
    }

    #[test]
    fn hodge_examples() {
        let h2 = Hodge::<Rational>::orthonormal(&MetricSignature::euclidean(2), 1);
        assert_eq!(h2.star_basis(&ai(&[])), [(ai(&[0, 1]), Rational::one())].into_iter().collect());
        assert_eq!(h2.star_basis(&ai(&[0, 1])), [(ai(&[]), Rational::one())].into_iter().collect());
        let h3 = Hodge::<Rational>::orthonormal(&MetricSignature::euclidean(3), 1);
        assert_eq!(h3.star_basis(&ai(&[0])), [(ai(&[1, 2]), Rational::one())].into_iter().collect());
    }

    #[test]
    fn key_round_trip() {
        let key = (Word::from_slice(&[0, 2]), ai(&[1]));
        assert_eq!(key_string(&key), "1,3|2");
        assert_eq!(parse_key("1,3|2").unwrap(), key);
        assert_eq!(parse_key("|").unwrap(), (Word::empty(), AntiIndex::empty()));
    }

    #[test]
    fn anti_index_rank() {
        for d in 1..5 {
            for k in 0..=d {
                for (i, a) in AntiIndex::all(d, k).iter().enumerate() {
                    assert_eq!(a.rank(d), i);
                }
            }
        }
    }
}
