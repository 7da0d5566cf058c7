//! Seeded random polynomial fields.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covderiv::{Field, Rep};
use crate::error::Result;
use crate::expr::Expression;
use crate::multialg::Word;

pub struct Sampler {
    rng: ChaCha8Rng,
    symbols: Arc<[String]>,
    degree: usize,
}

impl Sampler {
    pub fn new(seed: u64, symbols: Arc<[String]>, degree: usize) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            symbols,
            degree,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Small nonzero rational `a/b` with `|a| ≤ 5`, `b ∈ {1,2,3}`.
    fn coeff_text(&mut self) -> String {
        let mut a: i64 = self.rng.random_range(-5..=5);
        if a == 0 {
            a = 1;
        }
        let b: i64 = self.rng.random_range(1..=3);
        if b == 1 {
            format!("({a})")
        } else {
            format!("({a}/{b})")
        }
    }

    /// Random polynomial of total degree `≤ degree` with a few terms.
    pub fn polynomial(&mut self) -> Result<Expression> {
        let n = self.symbols.len();
        let terms = self.rng.random_range(1..=4);
        let mut parts = Vec::new();
        for _ in 0..terms {
            let deg = self.rng.random_range(0..=self.degree);
            let mut t = self.coeff_text();
            for _ in 0..deg {
                let v = self.rng.random_range(0..n);
                t.push('*');
                t.push_str(&self.symbols[v]);
            }
            parts.push(t);
        }
        Expression::parse_with(&parts.join(" + "), self.symbols.clone())
    }

    pub fn field(&mut self, reps: Vec<Rep>, n: usize, d: usize) -> Result<Field> {
        let total: usize = reps.iter().map(|r| r.dim(n, d)).product();
        let comps = (0..total).map(|_| self.polynomial()).collect::<Result<Vec<_>>>()?;
        Ok(Field::new(reps, comps))
    }

    pub fn word(&mut self, n: usize, len: usize) -> Word {
        let letters: Vec<u8> = (0..len).map(|_| self.rng.random_range(0..n) as u8).collect();
        Word::from_slice(&letters)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}
