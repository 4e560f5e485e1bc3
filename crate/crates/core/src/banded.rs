//! Banded matrices with partial-pivoting LU, for real and complex scalars.
//!
//! Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` slots on
//! the right absorb fill-in from row interchanges.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Send
    + Sync
{
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn scale(self, a: f64) -> Self;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn scale(self, a: f64) -> Self {
        self * a
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn scale(self, a: f64) -> Self {
        self * a
    }
}

#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::default(); n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.kl + self.ku {
            return None;
        }
        Some(i * self.width + (j + self.kl - i))
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> T {
        match self.slot(i, j) {
            Some(s) if j <= i + self.ku => self.data[s],
            _ => T::default(),
        }
    }

    /// Adds `v` to entry `(i, j)`. Panics outside the declared band.
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j).unwrap();
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(j + self.kl >= i && j <= i + self.ku);
        let s = self.slot(i, j).unwrap();
        self.data[s] = v;
    }

    /// Columns with a stored (possibly zero) entry in row `i`.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku + 1).min(self.n);
        lo..hi
    }

    /// Stored entries of row `i` over `row_range(i)`.
    #[inline]
    pub fn row_entries(&self, i: usize) -> &[T] {
        let r = self.row_range(i);
        let start = i * self.width + (r.start + self.kl - i);
        &self.data[start..start + r.len()]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = T::default();
                for (a, v) in self.row_entries(i).iter().zip(&x[self.row_range(i)]) {
                    acc += *a * *v;
                }
                acc
            })
            .collect()
    }

    /// `A^T x`.
    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::default(); self.n];
        for i in 0..self.n {
            for j in self.row_range(i) {
                y[j] += self.get(i, j) * x[i];
            }
        }
        y
    }

    /// Elementwise map into another scalar type, keeping the band layout.
    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> BandMatrix<U> {
        BandMatrix {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + c * other` (same shape).
    pub fn axpy(&self, c: T, other: &BandMatrix<T>) -> BandMatrix<T> {
        assert_eq!(self.n, other.n);
        assert_eq!((self.kl, self.ku), (other.kl, other.ku));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + c * b)
            .collect();
        BandMatrix {
            data,
            ..self.clone()
        }
    }

    pub fn add_diagonal(&mut self, d: &[T]) {
        assert_eq!(d.len(), self.n);
        for (i, &v) in d.iter().enumerate() {
            self.add_to(i, i, v);
        }
    }

    /// The matrix with row and column `k` removed; the band is preserved.
    pub fn without(&self, k: usize) -> BandMatrix<T> {
        let m = self.n - 1;
        let mut out = BandMatrix::zeros(m, self.kl, self.ku);
        let shrink = |i: usize| if i > k { i - 1 } else { i };
        for i in (0..self.n).filter(|&i| i != k) {
            for j in self.row_range(i).filter(|&j| j != k) {
                out.set(shrink(i), shrink(j), self.get(i, j));
            }
        }
        out
    }

    pub fn factor(&self) -> Result<BandLu<T>> {
        BandLu::new(self.clone())
    }
}

/// LU factors with row interchanges, `P A = L U` in interleaved form.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    a: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    fn new(mut a: BandMatrix<T>) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let reach = kl + a.ku;
        let mut piv = vec![0; n];
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
        if scale == 0.0 {
            return Err(Error::Singular("zero matrix".into()));
        }
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.data[a.slot(k, k).unwrap()].modulus();
            for i in k + 1..=last_row {
                let v = a.data[a.slot(i, k).unwrap()].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * 1e-300 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let sk = a.slot(k, j).unwrap();
                    let sp = a.slot(p, j).unwrap();
                    a.data.swap(sk, sp);
                }
            }
            let pivot = a.data[a.slot(k, k).unwrap()];
            for i in k + 1..=last_row {
                let si = a.slot(i, k).unwrap();
                let l = a.data[si] / pivot;
                a.data[si] = l;
                if l == T::default() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let skj = a.slot(k, j).unwrap();
                    let sij = a.slot(i, j).unwrap();
                    let u = a.data[skj];
                    a.data[sij] -= l * u;
                }
            }
        }
        Ok(Self { a, piv })
    }

    pub fn n(&self) -> usize {
        self.a.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let a = &self.a;
        let (n, kl, w) = (a.n, a.kl, a.width);
        assert_eq!(x.len(), n);
        // entry (i, j) sits at i*w + j + kl - i
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= a.data[i * w + k + kl - i] * xk;
            }
        }
        let reach = kl + a.ku;
        for k in (0..n).rev() {
            let hi = (k + reach).min(n - 1);
            let row = &a.data[k * w + kl..=k * w + kl + (hi - k)];
            let mut acc = x[k];
            for (c, xj) in row[1..].iter().zip(&x[k + 1..=hi]) {
                acc -= *c * *xj;
            }
            x[k] = acc / row[0];
        }
    }
}

/// Solves the bordered system `A x + sigma u = y`, `c^T x = 0`.
///
/// `A` may be singular with a one-dimensional kernel as long as it becomes
/// invertible once row and column `skip` are removed. For `L_-`, whose kernel
/// is the ground state, any node where the ground state is large will do.
pub fn solve_bordered(a: &BandMatrix<f64>, u: &[f64], c: &[f64], y: &[f64], skip: usize) -> Result<(Vec<f64>, f64)> {
    let n = a.n();
    assert!(skip < n);
    let lu = a.without(skip).factor()?;
    let rest = |v: &[f64]| -> Vec<f64> { (0..n).filter(|&i| i != skip).map(|i| v[i]).collect() };
    let col: Vec<f64> = (0..n).filter(|&i| i != skip).map(|i| a.get(i, skip)).collect();
    let row: Vec<f64> = (0..n).filter(|&j| j != skip).map(|j| a.get(skip, j)).collect();
    let (ur, cr) = (rest(u), rest(c));
    let xy = lu.solve(&rest(y));
    let xa = lu.solve(&col);
    let xu = lu.solve(&ur);
    // x_rest = xy - x_k xa - sigma xu
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
    let a11 = a.get(skip, skip) - dot(&row, &xa);
    let a12 = u[skip] - dot(&row, &xu);
    let r1 = y[skip] - dot(&row, &xy);
    let a21 = c[skip] - dot(&cr, &xa);
    let a22 = -dot(&cr, &xu);
    let r2 = -dot(&cr, &xy);
    let det = a11 * a22 - a12 * a21;
    let scale = (a11.abs() + a12.abs()) * (a21.abs() + a22.abs());
    if det.abs() <= 1e-14 * scale || !det.is_finite() {
        return Err(Error::Singular("bordered 2x2 block".into()));
    }
    let xk = (r1 * a22 - a12 * r2) / det;
    let sigma = (a11 * r2 - a21 * r1) / det;
    let mut x = Vec::with_capacity(n);
    let mut it = (0..n - 1).map(|i| xy[i] - xk * xa[i] - sigma * xu[i]);
    for i in 0..n {
        x.push(if i == skip { xk } else { it.next().unwrap() });
    }
    Ok((x, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())
                .unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for i in k + 1..n {
                let l = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= l * m[k][j];
                }
                x[i] -= l * x[k];
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for j in k + 1..n {
                acc -= m[k][j] * x[j];
            }
            x[k] = acc / m[k][k];
        }
        x
    }

    #[test]
    fn pivoting_lu_matches_dense_on_indefinite_band() {
        let n = 40;
        let (kl, ku) = (3, 2);
        let mut a = BandMatrix::<f64>::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in a.row_range(i) {
                // small diagonal forces row interchanges
                let v = if i == j {
                    0.01 * ((i % 3) as f64 - 1.0)
                } else {
                    ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4
                };
                a.set(i, j, v);
                dense[i][j] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = a.factor().unwrap().solve(&b);
        let xd = dense_solve(&dense, &b);
        for (p, q) in x.iter().zip(&xd) {
            assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
        let back = a.matvec(&x);
        for (p, q) in back.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn complex_solve_roundtrip() {
        let n = 25;
        let mut a = BandMatrix::<Complex64>::zeros(n, 2, 2);
        for i in 0..n {
            for j in a.row_range(i) {
                let v = if i == j {
                    Complex64::new(1.0, 4.0)
                } else {
                    Complex64::new(0.0, -1.0)
                };
                a.set(i, j, v);
            }
        }
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = a.factor().unwrap().solve(&b);
        let back = a.matvec(&x);
        for (p, q) in back.iter().zip(&b) {
            assert!((p - q).norm() < 1e-10);
        }
    }

    #[test]
    fn bordered_solve_handles_singular_laplacian() {
        // 1-D Neumann Laplacian: kernel = constants
        let n = 30;
        let mut a = BandMatrix::<f64>::zeros(n, 1, 1);
        for i in 0..n {
            let mut d = 0.0;
            if i > 0 {
                a.set(i, i - 1, -1.0);
                d += 1.0;
            }
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
                d += 1.0;
            }
            a.set(i, i, d);
        }
        let ones = vec![1.0; n];
        let y: Vec<f64> = (0..n).map(|i| (i as f64 / 5.0).cos()).collect();
        let (x, sigma) = solve_bordered(&a, &ones, &ones, &y, 7).unwrap();
        let mean_y = y.iter().sum::<f64>() / n as f64;
        assert!((sigma - mean_y).abs() < 1e-10);
        let (x0, _) = solve_bordered(&a, &ones, &ones, &y, 0).unwrap();
        assert!(x.iter().zip(&x0).all(|(p, q)| (p - q).abs() < 1e-10));
        assert!(x.iter().sum::<f64>().abs() < 1e-10);
        let ax = a.matvec(&x);
        for i in 0..n {
            assert!((ax[i] + sigma - y[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn transpose_product_matches_definition() {
        let mut a = BandMatrix::<f64>::zeros(6, 1, 2);
        for i in 0..6 {
            for j in a.row_range(i) {
                a.set(i, j, (i * 10 + j) as f64);
            }
        }
        let x = [1.0, -1.0, 2.0, 0.5, 0.0, 3.0];
        let y = a.matvec_transpose(&x);
        for j in 0..6 {
            let expect: f64 = (0..6).map(|i| a.get(i, j) * x[i]).sum();
            assert_eq!(y[j], expect);
        }
    }
}
