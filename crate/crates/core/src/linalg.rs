//! Small dense matrices over a scalar mode.

use crate::error::{Error, Result};
use crate::scalar::{Mode, Scalar};

pub type Matrix<S> = Vec<Vec<S>>;

pub fn identity<S: Scalar>(n: usize) -> Matrix<S> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { S::one() } else { S::zero() }).collect())
        .collect()
}

pub fn mat_mul<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Matrix<S> {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut acc = S::zero();
                    for k in 0..inner {
                        acc += row[k] * b[k][j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn pivot_row<S: Scalar>(a: &Matrix<S>, col: usize, from: usize, tol: f64) -> Option<usize> {
    let best = (from..a.len()).max_by(|&x, &y| a[x][col].magnitude().total_cmp(&a[y][col].magnitude()))?;
    let v = a[best][col];
    if v.is_zero() || (S::MODE == Mode::Float && v.magnitude() <= tol) {
        None
    } else {
        Some(best)
    }
}

pub fn determinant<S: Scalar>(m: &Matrix<S>) -> S {
    let n = m.len();
    let mut a = m.clone();
    let mut det = S::one();
    for col in 0..n {
        let Some(p) = pivot_row(&a, col, col, 0.0) else {
            return S::zero();
        };
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        let piv = a[col][col];
        det *= piv;
        for r in col + 1..n {
            let f = a[r][col] / piv;
            if f.is_zero() {
                continue;
            }
            for c in col..n {
                let t = f * a[col][c];
                a[r][c] -= t;
            }
        }
    }
    det
}

/// Rank by elimination; exact in rational mode, relative tolerance in float mode.
pub fn rank<S: Scalar>(m: &Matrix<S>, rel_tol: f64) -> usize {
    let mut a = m.clone();
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let scale = a.iter().flatten().map(|v| v.magnitude()).fold(0.0, f64::max);
    let tol = rel_tol * scale.max(1.0);
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = pivot_row(&a, col, r, tol) else {
            continue;
        };
        a.swap(p, r);
        let piv = a[r][col];
        for i in r + 1..rows {
            let f = a[i][col] / piv;
            if f.is_zero() {
                continue;
            }
            for c in col..cols {
                let t = f * a[r][c];
                a[i][c] -= t;
            }
        }
        r += 1;
    }
    r
}

pub fn inverse<S: Scalar>(m: &Matrix<S>) -> Result<Matrix<S>> {
    let n = m.len();
    let mut a = m.clone();
    let mut inv = identity::<S>(n);
    for col in 0..n {
        let p = pivot_row(&a, col, col, 0.0).ok_or_else(|| Error::Singular("matrix not invertible".into()))?;
        a.swap(p, col);
        inv.swap(p, col);
        let piv = S::one() / a[col][col];
        for c in 0..n {
            a[col][c] *= piv;
            inv[col][c] *= piv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f.is_zero() {
                continue;
            }
            for c in 0..n {
                let t = f * a[col][c];
                a[r][c] -= t;
                let t = f * inv[col][c];
                inv[r][c] -= t;
            }
        }
    }
    for v in inv.iter().flatten() {
        v.checked()?;
    }
    Ok(inv)
}

/// Largest entrywise difference.
pub fn max_diff<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (*x - *y).magnitude())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn r(n: i128) -> Rational {
        Rational::new(n, 1)
    }

    #[test]
    fn det_and_inverse() {
        let m = vec![vec![r(2), r(1), r(0)], vec![r(1), r(3), r(1)], vec![r(0), r(1), r(4)]];
        assert_eq!(determinant(&m), r(18));
        let inv = inverse(&m).unwrap();
        assert_eq!(mat_mul(&m, &inv), identity(3));
    }

    #[test]
    fn rank_of_singular() {
        let m = vec![vec![r(1), r(2)], vec![r(2), r(4)], vec![r(0), r(0)]];
        assert_eq!(rank(&m, 0.0), 1);
        assert_eq!(determinant(&vec![vec![r(1), r(2)], vec![r(2), r(4)]]), r(0));
    }
}
