//! Small dense linear algebra and Krylov solvers used by the collocation and
//! variational modules.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, tolerance, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols, |i, j| columns[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T x`.
    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != T::zero() {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        out.data
            .par_chunks_mut(other.cols.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                for (k, &a) in self.row(i).iter().enumerate() {
                    if a != T::zero() {
                        axpy(a, other.row(k), row);
                    }
                }
            });
        out
    }

    /// `self^T self`.
    pub fn gram(&self) -> Self {
        self.transpose().matmul(self)
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

pub fn norm2<T: Scalar>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

/// `y += alpha * x`.
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn max_abs<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
    condition: T,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(mut a: DenseMatrix<T>) -> Result<Self> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pivot > T::epsilon() * from_usize(n) * scale) {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.data.swap(p * n + j, k * n + j);
                }
            }
            let (head, tail) = a.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..];
            let akk = pivot_row[k];
            let update = |row: &mut [T]| {
                let l = row[k] / akk;
                row[k] = l;
                if l != T::zero() {
                    for (r, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                        *r = *r - l * u;
                    }
                }
            };
            if n - k > 192 {
                tail.par_chunks_mut(n).for_each(update);
            } else {
                tail.chunks_mut(n).for_each(update);
            }
        }
        let diag: Vec<T> = (0..n).map(|i| a[(i, i)].abs()).collect();
        let hi = diag.iter().fold(T::zero(), |m, &v| m.max(v));
        let lo = diag.iter().fold(T::infinity(), |m, &v| m.min(v));
        Ok(Self {
            lu: a,
            perm,
            condition: hi / lo,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Ratio of extreme pivots; a cheap lower bound on the condition number.
    pub fn condition_estimate(&self) -> T {
        self.condition
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = x[i] - s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

/// Cholesky factorization `A = L L^T` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: DenseMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.rows;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let s = dot(&l.row(j)[..j], &l.row(j)[..j]);
            let d = a[(j, j)] - s;
            if !(d > T::zero()) {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            let (head, tail) = l.data.split_at_mut((j + 1) * n);
            let row_j = &head[j * n..j * n + j];
            tail.par_chunks_mut(n).enumerate().for_each(|(off, row)| {
                let i = j + 1 + off;
                let s = dot(&row[..j], row_j);
                row[j] = (a[(i, j)] - s) / d;
            });
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            y[i] = (y[i] - dot(&row[..i], &y[..i])) / row[i];
        }
        for i in (0..n).rev() {
            let s = (i + 1..n).fold(y[i], |acc, k| acc - self.l[(k, i)] * y[k]);
            y[i] = s / self.l[(i, i)];
        }
        y
    }
}

/// Solves a tridiagonal system by the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` unused), `upper[i]`
/// multiplies `x[i+1]` (`upper[n-1]` unused).
pub fn solve_tridiagonal<T: Scalar>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &[T],
) -> Result<Vec<T>> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut denom = diag[0];
    for i in 0..n {
        if i > 0 {
            denom = diag[i] - lower[i] * c[i - 1];
        }
        if denom == T::zero() {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        c[i] = if i + 1 < n {
            upper[i] / denom
        } else {
            T::zero()
        };
        let prev = if i > 0 {
            lower[i] * d[i - 1]
        } else {
            T::zero()
        };
        d[i] = (rhs[i] - prev) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    Ok(d)
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeReport<T> {
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side norm.
    pub relative_residual: T,
}

/// Conjugate gradients for a symmetric positive (semi)definite operator.
///
/// `observe` is called with every iterate and its residual `b - A x`,
/// starting with `x0`.
pub fn conjugate_gradient<T: Scalar>(
    apply: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    x0: Vec<T>,
    rel_tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[T], &[T]),
) -> Result<(Vec<T>, IterativeReport<T>)> {
    let tol: T = tolerance(rel_tol);
    let bnorm = norm2(b);
    let mut x = x0;
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        observe(&x, b);
        return Ok((
            x,
            IterativeReport {
                iterations: 0,
                relative_residual: T::zero(),
            },
        ));
    }
    let ax = apply(&x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    observe(&x, &r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        let rel = rr.sqrt() / bnorm;
        if rel <= tol {
            return Ok((
                x,
                IterativeReport {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::NotConverged {
                method: "conjugate gradients (operator not positive)",
                iterations: it,
                residual: to_f64(rel),
            });
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        observe(&x, &r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    let rel = rr.sqrt() / bnorm;
    if rel <= tol {
        return Ok((
            x,
            IterativeReport {
                iterations: max_iter,
                relative_residual: rel,
            },
        ));
    }
    Err(Error::NotConverged {
        method: "conjugate gradients",
        iterations: max_iter,
        residual: to_f64(rel),
    })
}

/// Restarted GMRES with modified Gram–Schmidt Arnoldi and Givens rotations.
pub fn gmres<T: Scalar>(
    apply: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    x0: Vec<T>,
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<T>, IterativeReport<T>)> {
    let tol: T = tolerance(rel_tol);
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0;
    if bnorm == T::zero() {
        return Ok((
            vec![T::zero(); n],
            IterativeReport {
                iterations: 0,
                relative_residual: T::zero(),
            },
        ));
    }
    let mut total = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok((
                x,
                IterativeReport {
                    iterations: total,
                    relative_residual: rel,
                },
            ));
        }
        if total >= max_iter {
            return Err(Error::NotConverged {
                method: "GMRES",
                iterations: total,
                residual: to_f64(rel),
            });
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<T>> = vec![r.iter().map(|&v| v / beta).collect()];
        let mut hess = vec![vec![T::zero(); m]; m + 1];
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![T::zero(); m];
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&basis[k]);
            for (j, v) in basis.iter().enumerate() {
                let hjk = dot(&w, v);
                hess[j][k] = hjk;
                axpy(-hjk, v, &mut w);
            }
            let wn = norm2(&w);
            hess[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + hess[k + 1][k] * hess[k + 1][k]).sqrt();
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            k_used = k + 1;
            total += 1;
            if g[k + 1].abs() / bnorm <= tol || wn == T::zero() {
                break;
            }
            basis.push(w.iter().map(|&v| v / wn).collect());
        }
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let s: T = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut x);
        }
    }
}

/// Orthonormalizes `columns` in place (classical Gram–Schmidt, applied twice)
/// and returns the upper-triangular factor, so that `A = Q R`.
pub fn orthonormalize<T: Scalar>(columns: &mut [Vec<T>]) -> Result<DenseMatrix<T>> {
    let k = columns.len();
    let mut r = DenseMatrix::zeros(k, k);
    for j in 0..k {
        let (done, rest) = columns.split_at_mut(j);
        let v = &mut rest[0];
        let original = norm2(v);
        for _ in 0..2 {
            let coeffs: Vec<T> = done.par_iter().map(|q| dot(q, v)).collect();
            for (i, (c, q)) in coeffs.iter().zip(done.iter()).enumerate() {
                axpy(-*c, q, v);
                r[(i, j)] = r[(i, j)] + *c;
            }
        }
        let nv = norm2(v);
        if !(nv > T::epsilon() * original) || nv == T::zero() {
            return Err(Error::RankDeficient(to_f64(nv)));
        }
        r[(j, j)] = nv;
        v.iter_mut().for_each(|x| *x = *x / nv);
    }
    Ok(r)
}

/// Bounds on the smallest singular value of an upper-triangular matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularBounds<T> {
    /// `1 / ||R^{-1}||_F`, a guaranteed lower bound.
    pub lower: T,
    /// Inverse-iteration estimate (an upper bound on the true value).
    pub estimate: T,
}

fn solve_upper<T: Scalar>(r: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = r.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let row = r.row(i);
        x[i] = (x[i] - dot(&row[i + 1..], &x[i + 1..])) / row[i];
    }
    x
}

fn solve_upper_transpose<T: Scalar>(r: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = r.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        x[i] = x[i] / r[(i, i)];
        let xi = x[i];
        let row = r.row(i);
        for k in i + 1..n {
            x[k] = x[k] - row[k] * xi;
        }
    }
    x
}

/// Smallest singular value of an upper-triangular matrix.
pub fn smallest_singular_value<T: Scalar>(r: &DenseMatrix<T>) -> SingularBounds<T> {
    let n = r.rows();
    if (0..n).any(|i| r[(i, i)] == T::zero()) {
        return SingularBounds {
            lower: T::zero(),
            estimate: T::zero(),
        };
    }
    // ||R^{-1}||_F^2 = sum over unit vectors of ||R^{-1} e_j||^2
    let inv_frob: T = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let x = solve_upper(r, &e);
            dot(&x, &x)
        })
        .collect::<Vec<T>>()
        .into_iter()
        .sum();
    let lower = inv_frob.sqrt().recip();

    let mut x: Vec<T> = (0..n)
        .map(|i| T::one() + lit::<T>(0.1) * from_usize(i % 7))
        .collect();
    let mut est = T::infinity();
    for _ in 0..500 {
        let xn = norm2(&x);
        x.iter_mut().for_each(|v| *v = *v / xn);
        let y = solve_upper(r, &solve_upper_transpose(r, &x));
        let grow = norm2(&y);
        let next = grow.recip().sqrt();
        let converged = (est - next).abs() <= lit::<T>(1e-10) * next;
        est = next;
        x = y;
        if converged {
            break;
        }
    }
    SingularBounds {
        lower,
        estimate: est,
    }
}
