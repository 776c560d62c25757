use crate::error::Result;
use crate::scalar::Scalar;

use super::singular;

/// Band LU factorization with partial pivoting.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl`
/// superdiagonals hold fill created by row interchanges.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
    pivots: Vec<usize>,
    factored: bool,
}

impl<T: Scalar> BandedLu<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
            pivots: Vec::new(),
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + j + self.kl - i
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(!self.factored);
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band ({}, {})",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let (kl, ku, w) = (self.kl, self.ku, self.width);
        self.pivots = vec![0; n];
        let mut scale = T::zero();
        for v in &self.data {
            scale = scale.max(v.abs());
        }
        let tiny = scale * T::epsilon() * T::lit(1e-3);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let ucol = (k + kl + ku).min(n - 1);

            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(singular("zero pivot in band LU"));
            }
            self.pivots[k] = p;
            if p != k {
                for c in k..=ucol {
                    let (a, b) = (self.idx(k, c), self.idx(p, c));
                    self.data.swap(a, b);
                }
            }

            let pivot = self.data[self.idx(k, k)];
            let len = ucol - k;
            for i in k + 1..=last {
                let lik = self.data[self.idx(i, k)] / pivot;
                let li = self.idx(i, k);
                self.data[li] = lik;
                if lik == T::zero() || len == 0 {
                    continue;
                }
                // rows k and i are disjoint slices since i > k
                let ks = k * w + (k + 1) + kl - k;
                let is = i * w + (k + 1) + kl - i;
                let (head, tail) = self.data.split_at_mut(i * w);
                let krow = &head[ks..ks + len];
                let irow = &mut tail[is - i * w..is - i * w + len];
                for (a, &b) in irow.iter_mut().zip(krow) {
                    *a -= lik * b;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert!(self.factored, "solve before factor");
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + self.kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let ucol = (k + self.kl + self.ku).min(n - 1);
            let mut s = b[k];
            let start = self.idx(k, k);
            let row = &self.data[start..start + (ucol - k) + 1];
            for (off, &a) in row.iter().enumerate().skip(1) {
                s -= a * b[k + off];
            }
            b[k] = s / row[0];
        }
    }
}

/// Band Cholesky factorization `A = L Lᵀ` of a symmetric positive definite
/// matrix. Only the lower band (`kb` subdiagonals) is stored.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T> {
    n: usize,
    kb: usize,
    data: Vec<T>,
    factored: bool,
}

impl<T: Scalar> BandedCholesky<T> {
    pub fn zeros(n: usize, kb: usize) -> Self {
        Self {
            n,
            kb,
            data: vec![T::zero(); n * (kb + 1)],
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.kb);
        i * (self.kb + 1) + self.kb + j - i
    }

    /// Adds `v` to the lower-triangle entry `(i, j)`, `j ≤ i`.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(!self.factored);
        assert!(j <= i && i - j <= self.kb, "entry ({i}, {j}) outside lower band {}", self.kb);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn factor(&mut self) -> Result<()> {
        let kb = self.kb;
        for i in 0..self.n {
            let j0 = i.saturating_sub(kb);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(kb));
                let mut s = self.data[self.idx(i, j)];
                for k in k0..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                if j == i {
                    if !(s > T::zero()) {
                        return Err(singular("matrix not positive definite"));
                    }
                    let d = self.idx(i, i);
                    self.data[d] = s.sqrt();
                } else {
                    let d = self.data[self.idx(j, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] = s / d;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert!(self.factored, "solve before factor");
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(self.kb)..i {
                s -= self.data[self.idx(i, k)] * b[k];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + self.kb + 1).min(n) {
                s -= self.data[self.idx(k, i)] * b[k];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }

    /// Product of the diagonal of `L`, squared, in log form: `ln det A`.
    pub fn log_det(&self) -> T {
        (0..self.n)
            .map(|i| self.data[self.idx(i, i)].ln())
            .sum::<T>()
            * T::lit(2.0)
    }
}
