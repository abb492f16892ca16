//! Sparse LDLᵀ for symmetric quasi-definite matrices (up-looking, after the
//! elimination-tree scheme of QDLDL). No pivoting: the caller supplies an
//! ordering that keeps every pivot nonzero.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    pub fn new(a: &CsrMatrix<f64>, perm: &[usize]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::Factorization("matrix must be square and the ordering complete".into()));
        }
        let mut inv = vec![NONE; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv[old] != NONE {
                return Err(Error::Factorization("ordering is not a permutation".into()));
            }
            inv[old] = new;
        }
        // upper triangle of the permuted matrix, column by column
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in a.triplets() {
            let (i, j) = (inv[r], inv[c]);
            if i <= j {
                cols[j].push((i, v));
            }
        }
        for c in &mut cols {
            c.sort_unstable_by_key(|e| e.0);
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &(i0, _) in &cols[j] {
                let mut i = i0;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let mut li = vec![0usize; lp[n]];
        let mut lx = vec![0.0; lp[n]];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next = lp[..n].to_vec();
        let mut marked = vec![false; n];
        let mut yvals = vec![0.0; n];
        let mut yidx = vec![0usize; n];
        let mut buf = vec![0usize; n];

        for k in 0..n {
            let mut nnz_y = 0;
            for &(b, v) in &cols[k] {
                if b == k {
                    d[k] = v;
                    continue;
                }
                yvals[b] = v;
                if !marked[b] {
                    marked[b] = true;
                    buf[0] = b;
                    let mut ne = 1;
                    let mut nx = etree[b];
                    while nx != NONE && nx < k {
                        if marked[nx] {
                            break;
                        }
                        marked[nx] = true;
                        buf[ne] = nx;
                        ne += 1;
                        nx = etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        yidx[nnz_y] = buf[ne];
                        nnz_y += 1;
                    }
                }
            }
            for t in (0..nnz_y).rev() {
                let c = yidx[t];
                let tmp = next[c];
                let yc = yvals[c];
                for p in lp[c]..tmp {
                    yvals[li[p]] -= lx[p] * yc;
                }
                li[tmp] = k;
                lx[tmp] = yc * dinv[c];
                d[k] -= yc * lx[tmp];
                next[c] += 1;
                yvals[c] = 0.0;
                marked[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::Factorization(format!("zero pivot at position {k}")));
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor { n, perm: perm.to_vec(), lp, li, lx, d })
    }

    /// Number of positive and negative pivots.
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.n - pos)
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..self.n {
            let xi = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                x[self.li[p]] -= self.lx[p] * xi;
            }
        }
        for i in 0..self.n {
            x[i] /= self.d[i];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[i] = s;
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

/// Reverse Cuthill–McKee ordering of a symmetric sparsity pattern.
pub fn rcm(pattern: &CsrMatrix<f64>) -> Vec<usize> {
    let n = pattern.nrows();
    let adj: Vec<Vec<usize>> = (0..n).map(|r| pattern.row(r).map(|(c, _)| c).filter(|&c| c != r).collect()).collect();
    let deg: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut starts: Vec<usize> = (0..n).collect();
    starts.sort_by_key(|&v| (deg[v], v));
    for s in starts {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        let mut head = order.len();
        order.push(s);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nb.sort_by_key(|&u| (deg[u], u));
            for u in nb {
                if !visited[u] {
                    visited[u] = true;
                    order.push(u);
                }
            }
        }
    }
    order.reverse();
    order
}
