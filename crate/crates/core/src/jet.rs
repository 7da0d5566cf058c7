//! Truncated multivariate Taylor series.
//!
//! Coefficients are stored densely in graded-lexicographic order, so the
//! multi-indices of degree ≤ R form a prefix of those of degree ≤ R' ≥ R.

use std::collections::HashMap;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type MultiIndex = SmallVec<[u8; 4]>;

const NONE: u32 = u32::MAX;

/// Index tables shared by all jets in `n` variables up to `max_order`.
#[derive(Debug)]
pub struct JetFamily {
    n: usize,
    max_order: usize,
    indices: Vec<MultiIndex>,
    degrees: Vec<usize>,
    offsets: Vec<usize>,
    rank: HashMap<MultiIndex, usize>,
    sum: Vec<u32>,
    shift: Vec<Vec<u32>>,
}

fn push_degree(n: usize, d: usize, prefix: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == n {
        prefix.push(d as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=d).rev() {
        prefix.push(first as u8);
        push_degree(n, d - first, prefix, out);
        prefix.pop();
    }
}

impl JetFamily {
    pub fn new(n: usize, max_order: usize) -> Arc<Self> {
        assert!(n >= 1, "jets need at least one variable");
        let mut indices = Vec::new();
        let mut offsets = Vec::with_capacity(max_order + 2);
        for d in 0..=max_order {
            offsets.push(indices.len());
            push_degree(n, d, &mut MultiIndex::new(), &mut indices);
        }
        offsets.push(indices.len());
        let degrees: Vec<usize> = indices
            .iter()
            .map(|t| t.iter().map(|&x| x as usize).sum())
            .collect();
        let rank: HashMap<MultiIndex, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let len = indices.len();
        let mut sum = vec![NONE; len * len];
        for a in 0..len {
            for b in 0..len {
                if degrees[a] + degrees[b] <= max_order {
                    let t: MultiIndex = indices[a]
                        .iter()
                        .zip(indices[b].iter())
                        .map(|(x, y)| x + y)
                        .collect();
                    sum[a * len + b] = rank[&t] as u32;
                }
            }
        }
        let shift = (0..n)
            .map(|i| {
                (0..len)
                    .map(|a| {
                        if degrees[a] < max_order {
                            let mut t = indices[a].clone();
                            t[i] += 1;
                            rank[&t] as u32
                        } else {
                            NONE
                        }
                    })
                    .collect()
            })
            .collect();
        Arc::new(JetFamily {
            n,
            max_order,
            indices,
            degrees,
            offsets,
            rank,
            sum,
            shift,
        })
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of multi-indices of degree ≤ `order`.
    pub fn count(&self, order: usize) -> usize {
        self.offsets[order + 1]
    }

    pub fn index(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn rank_of(&self, t: &[u8]) -> Option<usize> {
        self.rank.get(t).copied()
    }
}

pub fn factorial(m: usize) -> i128 {
    (1..=m as i128).product()
}

pub fn multi_factorial(t: &[u8]) -> i128 {
    t.iter().map(|&x| factorial(x as usize)).product()
}

/// Truncated Taylor expansion `Σ c_T (x − p)^T` with `c_T = ∂^T f(p) / T!`.
#[derive(Debug, Clone)]
pub struct Jet<S: Scalar> {
    fam: Arc<JetFamily>,
    order: usize,
    c: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn zero(fam: &Arc<JetFamily>, order: usize) -> Self {
        Self::constant(fam, order, S::zero())
    }

    pub fn constant(fam: &Arc<JetFamily>, order: usize, v: S) -> Self {
        assert!(order <= fam.max_order, "jet order exceeds family");
        let mut c = vec![S::zero(); fam.count(order)];
        c[0] = v;
        Jet {
            fam: fam.clone(),
            order,
            c,
        }
    }

    /// The coordinate function `x_i` expanded at a point with `x_i = v`.
    pub fn variable(fam: &Arc<JetFamily>, order: usize, i: usize, v: S) -> Self {
        let mut j = Self::constant(fam, order, v);
        if order >= 1 {
            j.c[1 + i] = S::one();
        }
        j
    }

    /// `(x − p)^T / T!` expanded at `p`.
    pub fn monomial(fam: &Arc<JetFamily>, order: usize, t: &[u8]) -> Self {
        let mut j = Self::zero(fam, order);
        let deg: usize = t.iter().map(|&x| x as usize).sum();
        if deg <= order {
            let r = fam.rank_of(t).expect("multi-index in family");
            j.c[r] = S::from_ratio(1, multi_factorial(t));
        }
        j
    }

    pub fn from_coeffs(fam: &Arc<JetFamily>, order: usize, c: Vec<S>) -> Self {
        assert_eq!(c.len(), fam.count(order));
        Jet {
            fam: fam.clone(),
            order,
            c,
        }
    }

    pub fn family(&self) -> &Arc<JetFamily> {
        &self.fam
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c
    }

    pub fn value(&self) -> S {
        self.c[0]
    }

    /// Taylor coefficient at `t`, zero beyond the stored order.
    pub fn coeff(&self, t: &[u8]) -> S {
        match self.fam.rank_of(t) {
            Some(r) if r < self.c.len() => self.c[r],
            _ => S::zero(),
        }
    }

    /// The partial derivative `∂^T f(p)`.
    pub fn partial(&self, t: &[u8]) -> S {
        self.coeff(t) * S::from_ratio(multi_factorial(t), 1)
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|v| v.is_zero())
    }

    pub fn check(&self) -> Result<()> {
        for v in &self.c {
            v.checked()?;
        }
        Ok(())
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Jet {
            fam: self.fam.clone(),
            order,
            c: self.c[..self.fam.count(order)].to_vec(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        let order = self.order.min(other.order);
        let len = self.fam.count(order);
        Jet {
            fam: self.fam.clone(),
            order,
            c: (0..len).map(|i| f(self.c[i], other.c[i])).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Self {
        self.scale(-S::one())
    }

    pub fn scale(&self, s: S) -> Self {
        Jet {
            fam: self.fam.clone(),
            order: self.order,
            c: self.c.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: S) -> Self {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    pub fn add_assign(&mut self, other: &Self) {
        if other.order < self.order {
            *self = self.truncate(other.order);
        }
        for (a, b) in self.c.iter_mut().zip(other.c.iter()) {
            *a += *b;
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: S, other: &Self) {
        if other.order < self.order {
            *self = self.truncate(other.order);
        }
        if s.is_zero() {
            return;
        }
        for (a, b) in self.c.iter_mut().zip(other.c.iter()) {
            *a += s * *b;
        }
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let fam = &self.fam;
        let len = fam.count(order);
        let stride = fam.indices.len();
        let mut c = vec![S::zero(); len];
        for a in 0..len {
            let x = self.c[a];
            if x.is_zero() {
                continue;
            }
            let blen = fam.count(order - fam.degrees[a]);
            let row = &fam.sum[a * stride..a * stride + blen];
            for b in 0..blen {
                let y = other.c[b];
                if !y.is_zero() {
                    c[row[b] as usize] += x * y;
                }
            }
        }
        Jet {
            fam: fam.clone(),
            order,
            c,
        }
    }

    /// `∂f/∂x_i`, one order lower.
    pub fn deriv(&self, i: usize) -> Self {
        assert!(self.order >= 1, "derivative of an order-0 jet");
        let order = self.order - 1;
        let len = self.fam.count(order);
        let shift = &self.fam.shift[i];
        let c = (0..len)
            .map(|a| {
                let t = shift[a] as usize;
                let k = self.fam.indices[t][i] as i64;
                self.c[t] * S::from_int(k)
            })
            .collect();
        Jet {
            fam: self.fam.clone(),
            order,
            c,
        }
    }

    /// `Σ_m series[m] (f − f(p))^m`, truncated; `series[m] = g^(m)(f(p)) / m!`.
    pub fn compose(&self, series: &[S]) -> Self {
        let mut h = self.clone();
        h.c[0] = S::zero();
        let top = self.order.min(series.len() - 1);
        let mut acc = Jet::constant(&self.fam, self.order, series[top]);
        for m in (0..top).rev() {
            acc = acc.mul(&h).add_scalar(series[m]);
        }
        acc
    }

    pub fn recip(&self) -> Result<Self> {
        let a = self.value();
        if a.is_zero() {
            return Err(Error::Domain("division by a function vanishing at the base point".into()));
        }
        let inv = S::one() / a;
        let mut series = Vec::with_capacity(self.order + 1);
        let mut t = inv;
        for _ in 0..=self.order {
            series.push(t);
            t = -(t * inv);
        }
        Ok(self.compose(&series))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn powi(&self, e: i64) -> Result<Self> {
        if e < 0 {
            return self.recip()?.powi(-e);
        }
        let mut result = Jet::constant(&self.fam, self.order, S::one());
        let mut base = self.clone();
        let mut k = e as u64;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        Ok(result)
    }

    fn inv_factorials(&self) -> Vec<S> {
        (0..=self.order)
            .map(|m| S::from_ratio(1, factorial(m)))
            .collect()
    }

    pub fn exp(&self) -> Result<Self> {
        let e = self.value().exp()?;
        let series = self.inv_factorials().into_iter().map(|f| e * f).collect::<Vec<_>>();
        Ok(self.compose(&series))
    }

    pub fn ln(&self) -> Result<Self> {
        let a = self.value();
        let l = a.ln()?;
        let inv = S::one() / a;
        let mut series = vec![l];
        let mut pw = inv;
        for m in 1..=self.order {
            let sign = if m % 2 == 1 { S::one() } else { -S::one() };
            series.push(sign * pw / S::from_int(m as i64));
            pw = pw * inv;
        }
        Ok(self.compose(&series))
    }

    fn trig_series(&self, cycle: [S; 4]) -> Vec<S> {
        self.inv_factorials()
            .into_iter()
            .enumerate()
            .map(|(m, f)| cycle[m % 4] * f)
            .collect()
    }

    pub fn sin(&self) -> Result<Self> {
        let (s, c) = (self.value().sin()?, self.value().cos()?);
        Ok(self.compose(&self.trig_series([s, c, -s, -c])))
    }

    pub fn cos(&self) -> Result<Self> {
        let (s, c) = (self.value().sin()?, self.value().cos()?);
        Ok(self.compose(&self.trig_series([c, -s, -c, s])))
    }

    pub fn tan(&self) -> Result<Self> {
        self.sin()?.div(&self.cos()?)
    }

    pub fn sinh(&self) -> Result<Self> {
        let (s, c) = (self.value().sinh()?, self.value().cosh()?);
        Ok(self.compose(&self.trig_series([s, c, s, c])))
    }

    pub fn cosh(&self) -> Result<Self> {
        let (s, c) = (self.value().sinh()?, self.value().cosh()?);
        Ok(self.compose(&self.trig_series([c, s, c, s])))
    }

    pub fn sqrt(&self) -> Result<Self> {
        let a = self.value();
        let r = a.sqrt()?;
        if self.order > 0 && a.is_zero() {
            return Err(Error::Domain("sqrt is not smooth at 0".into()));
        }
        let half = S::from_ratio(1, 2);
        let mut series = vec![r];
        let mut b = S::one();
        let mut pw = S::one();
        let inv = if a.is_zero() { S::zero() } else { S::one() / a };
        for m in 1..=self.order {
            b = b * (half - S::from_int(m as i64 - 1)) / S::from_int(m as i64);
            pw = pw * inv;
            series.push(r * b * pw);
        }
        Ok(self.compose(&series))
    }
}

/// Inverse of a square matrix of jets by Gauss-Jordan elimination.
/// Cofactor expansion along the first row.
pub fn determinant_jet<S: Scalar>(m: &[Vec<Jet<S>>]) -> Jet<S> {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = Jet::zero(m[0][0].family(), m[0][0].order());
    for col in 0..n {
        let sub: Vec<Vec<Jet<S>>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(c, _)| *c != col).map(|(_, j)| j.clone()).collect())
            .collect();
        let term = m[0][col].mul(&determinant_jet(&sub));
        acc = if col % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
    }
    acc
}

pub fn invert_jet_matrix<S: Scalar>(m: &[Vec<Jet<S>>]) -> Result<Vec<Vec<Jet<S>>>> {
    let n = m.len();
    let fam = m[0][0].family().clone();
    let order = m.iter().flatten().map(|j| j.order()).min().unwrap_or(0);
    let mut a: Vec<Vec<Jet<S>>> = m
        .iter()
        .map(|row| row.iter().map(|j| j.truncate(order)).collect())
        .collect();
    let mut inv: Vec<Vec<Jet<S>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(&fam, order, if i == j { S::one() } else { S::zero() }))
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[r][col].value().is_zero())
            .max_by(|&x, &y| {
                a[x][col]
                    .value()
                    .magnitude()
                    .total_cmp(&a[y][col].value().magnitude())
            })
            .ok_or_else(|| Error::Singular("matrix not invertible at the base point".into()))?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].recip()?;
        for j in 0..n {
            a[col][j] = a[col][j].mul(&p);
            inv[col][j] = inv[col][j].mul(&p);
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for j in 0..n {
                let t = f.mul(&a[col][j]);
                a[r][j] = a[r][j].sub(&t);
                let t = f.mul(&inv[col][j]);
                inv[r][j] = inv[r][j].sub(&t);
            }
        }
    }
    Ok(inv)
}
