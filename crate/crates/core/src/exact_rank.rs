//! Rank over the rationals of integer sparse matrices.
//!
//! Rows are reduced against pivot rows by integer cross-multiplication and
//! then divided by their content, so no fractions and no tolerances appear.
//! Arithmetic starts in i128 and restarts with big integers on overflow.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::sparse::CsrMatrix;

trait RankInt: Clone + Zero + PartialEq {
    fn mul_sub(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self>;
    fn gcd_of(a: &Self, b: &Self) -> Self;
    fn exact_div(&self, g: &Self) -> Self;
    fn is_unit(&self) -> bool;
    fn from_i64(v: i64) -> Self;
}

impl RankInt for i128 {
    fn mul_sub(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self> {
        a.checked_mul(*x)?.checked_sub(b.checked_mul(*y)?)
    }
    fn gcd_of(a: &Self, b: &Self) -> Self {
        a.gcd(b)
    }
    fn exact_div(&self, g: &Self) -> Self {
        self / g
    }
    fn is_unit(&self) -> bool {
        self.abs() == 1
    }
    fn from_i64(v: i64) -> Self {
        v as i128
    }
}

impl RankInt for BigInt {
    fn mul_sub(a: &Self, x: &Self, b: &Self, y: &Self) -> Option<Self> {
        Some(a * x - b * y)
    }
    fn gcd_of(a: &Self, b: &Self) -> Self {
        a.gcd(b)
    }
    fn exact_div(&self, g: &Self) -> Self {
        self / g
    }
    fn is_unit(&self) -> bool {
        self.abs() == BigInt::from(1)
    }
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
}

type Row<T> = Vec<(usize, T)>;

/// `pa * r - ra * p` over the union of the supports.
fn combine<T: RankInt>(r: &Row<T>, p: &Row<T>, pa: &T, ra: &T) -> Option<Row<T>> {
    let mut out = Vec::with_capacity(r.len() + p.len());
    let (mut i, mut j) = (0, 0);
    let zero = T::zero();
    while i < r.len() || j < p.len() {
        let ci = r.get(i).map_or(usize::MAX, |e| e.0);
        let cj = p.get(j).map_or(usize::MAX, |e| e.0);
        let c = ci.min(cj);
        let x = if ci == c { i += 1; &r[i - 1].1 } else { &zero };
        let y = if cj == c { j += 1; &p[j - 1].1 } else { &zero };
        let v = T::mul_sub(pa, x, ra, y)?;
        if !v.is_zero() {
            out.push((c, v));
        }
    }
    Some(out)
}

fn normalize<T: RankInt>(row: &mut Row<T>) {
    let mut g = T::zero();
    for (_, v) in row.iter() {
        g = T::gcd_of(&g, v);
        if g.is_unit() {
            return;
        }
    }
    if !g.is_zero() {
        for (_, v) in row.iter_mut() {
            *v = v.exact_div(&g);
        }
    }
}

fn rank_generic<T: RankInt>(rows: &[Vec<(usize, i64)>]) -> Option<usize> {
    let mut pivots: HashMap<usize, Row<T>> = HashMap::new();
    for src in rows {
        let mut r: Row<T> = src.iter().map(|&(c, v)| (c, T::from_i64(v))).collect();
        while let Some((lead, ra)) = r.first().cloned() {
            match pivots.get(&lead) {
                None => break,
                Some(p) => {
                    let pa = p[0].1.clone();
                    r = combine(&r, p, &pa, &ra)?;
                    normalize(&mut r);
                }
            }
        }
        if let Some(&(lead, _)) = r.first() {
            pivots.insert(lead, r);
        }
    }
    Some(pivots.len())
}

/// Rank over ℚ. Sparse rows are processed shortest first to limit fill.
pub fn exact_rank(m: &CsrMatrix<i64>) -> usize {
    let a = if m.nrows() > m.ncols() { m.transpose() } else { m.clone() };
    let mut rows: Vec<Vec<(usize, i64)>> = (0..a.nrows()).map(|r| a.row(r).collect()).filter(|r: &Vec<_>| !r.is_empty()).collect();
    rows.sort_by_key(|r| (r.len(), r.first().map(|e| e.0)));
    rank_generic::<i128>(&rows).unwrap_or_else(|| rank_generic::<BigInt>(&rows).expect("big integers cannot overflow"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[i64]]) -> CsrMatrix<i64> {
        let nc = rows[0].len();
        let trip = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &v)| (r, c, v)))
            .collect();
        CsrMatrix::from_triplets(rows.len(), nc, trip)
    }

    #[test]
    fn small_ranks() {
        assert_eq!(exact_rank(&dense(&[&[1, 2], &[2, 4]])), 1);
        assert_eq!(exact_rank(&dense(&[&[1, 2], &[3, 4]])), 2);
        assert_eq!(exact_rank(&dense(&[&[0, 0], &[0, 0]])), 0);
        assert_eq!(exact_rank(&dense(&[&[2, 0, 2], &[0, 3, 3], &[1, 1, 2]])), 2);
    }

    #[test]
    fn large_entries_agree_across_integer_types() {
        let big = 1i64 << 62;
        // det = big*(big-2) - (big-1)^2 = -1
        let m = dense(&[&[big, big - 1], &[big - 1, big - 2]]);
        assert_eq!(exact_rank(&m), 2);
        let rows = vec![vec![(0, big), (1, big - 1)], vec![(0, big - 1), (1, big - 2)]];
        assert_eq!(rank_generic::<BigInt>(&rows), Some(2));
        assert_eq!(rank_generic::<i128>(&rows), Some(2));
    }

    #[test]
    fn i128_overflow_is_detected() {
        let a: i128 = 1 << 100;
        assert_eq!(<i128 as RankInt>::mul_sub(&a, &a, &1, &1), None);
    }
}
