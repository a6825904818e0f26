//! Dense complex linear algebra: storage, a cyclic Jacobi eigensolver for
//! Hermitian matrices, LU determinants and characteristic polynomials.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex<T>]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_real_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "square input required");
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = Complex::new(v, T::zero());
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<Complex<T>> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Complex::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Self { n: self.n, data }
    }

    pub fn add(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Self { n: self.n, data }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&a| a * s).collect() }
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// `max |M - M*|` entrywise.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Principal submatrix with row and column `k` removed.
    pub fn minor(&self, k: usize) -> Self {
        let keep: Vec<usize> = (0..self.n).filter(|&i| i != k).collect();
        let mut out = Self::zeros(self.n - 1);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    /// Converts the scalar type, e.g. for `f64` reference checks of `f32` runs.
    pub fn cast<U: Real>(&self) -> CMatrix<U> {
        CMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::lit(z.re.to_f64().unwrap()), U::lit(z.im.to_f64().unwrap())))
                .collect(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.n + j]
    }
}

pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm2<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

pub fn norm1<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm()).sum()
}

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 64;

/// Raw output of the Hermitian eigensolver: ascending eigenvalues and the
/// matching orthonormal eigenvectors (one `Vec` per eigenvector).
#[derive(Debug, Clone)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<Complex<T>>>,
}

/// Cyclic complex Jacobi diagonalization of a Hermitian matrix.
///
/// Each rotation first removes the phase of the pivot and then applies a real
/// Givens rotation. Eigenvalues come back ascending; ties keep the original
/// diagonal order, so repeated calls are bitwise identical.
pub fn jacobi_eigh<T: Real>(m: &CMatrix<T>, want_vectors: bool) -> Result<HermitianEigen<T>> {
    let n = m.dim();
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] = Complex::new(a[(i, i)].re, T::zero());
    }
    let mut v = if want_vectors { Some(CMatrix::<T>::identity(n)) } else { None };
    let scale = m.frobenius_norm();
    if !scale.is_finite() {
        return Err(Error::NonFinite("matrix entries"));
    }
    let tiny = T::min_positive_value();
    let tol = T::unit_roundoff() * T::unit_roundoff() * scale * scale;

    let off = |a: &CMatrix<T>| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s = s + a[(i, j)].norm_sqr();
                }
            }
        }
        s
    };

    let mut converged = n <= 1 || scale <= tiny;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g <= tiny {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = apq / g;
                let theta = (aqq - app) / (g + g);
                let t = {
                    let r = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                    if theta < T::zero() {
                        -r
                    } else {
                        r
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // W e_p = c e_p - s conj(phase) e_q,  W e_q = s e_p + c conj(phase) e_q
                let ph_c = phase.conj();
                // A <- A W (columns)
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * ph_c * s;
                    a[(k, q)] = akp * s + akq * ph_c * c;
                }
                // A <- W* A (rows)
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * phase * s;
                    a[(q, k)] = apk * s + aqk * phase * c;
                }
                a[(p, q)] = Complex::zero();
                a[(q, p)] = Complex::zero();
                a[(p, p)] = Complex::new(a[(p, p)].re, T::zero());
                a[(q, q)] = Complex::new(a[(q, q)].re, T::zero());
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * c - vkq * ph_c * s;
                        v[(k, q)] = vkp * s + vkq * ph_c * c;
                    }
                }
            }
        }
        converged = off(&a) <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = match v {
        Some(v) => order.iter().map(|&col| (0..n).map(|k| v[(k, col)]).collect()).collect(),
        None => Vec::new(),
    };
    Ok(HermitianEigen { values, vectors })
}

/// Determinant by LU with partial pivoting.
pub fn determinant<T: Real>(m: &CMatrix<T>) -> Complex<T> {
    let n = m.dim();
    let mut a = m.clone();
    let mut det = Complex::<T>::one();
    for col in 0..n {
        let mut piv = col;
        let mut best = a[(col, col)].norm();
        for r in col + 1..n {
            let v = a[(r, col)].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == T::zero() {
            return Complex::zero();
        }
        if piv != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(piv, k)];
                a[(piv, k)] = tmp;
            }
            det = -det;
        }
        let d = a[(col, col)];
        det = det * d;
        for r in col + 1..n {
            let f = a[(r, col)] / d;
            if f == Complex::zero() {
                continue;
            }
            for k in col..n {
                let v = a[(col, k)];
                a[(r, k)] = a[(r, k)] - f * v;
            }
        }
    }
    det
}

/// Householder reduction to upper Hessenberg form (similarity transform).
pub fn hessenberg<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let n = m.dim();
    let mut a = m.clone();
    if n < 3 {
        return a;
    }
    for k in 0..n - 2 {
        let alpha_norm = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<T>().sqrt();
        if alpha_norm == T::zero() {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == T::zero() { Complex::one() } else { x0 / x0.norm() };
        // v = x + phase*|x| e_1
        let mut v: Vec<Complex<T>> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] = v[0] + phase * alpha_norm;
        let vnorm2: T = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        // A <- H A, H = I - 2 v v*/|v|^2 acting on rows k+1..n
        for col in 0..n {
            let mut s = Complex::zero();
            for (t, i) in (k + 1..n).enumerate() {
                s = s + v[t].conj() * a[(i, col)];
            }
            let f = s * (two / vnorm2);
            for (t, i) in (k + 1..n).enumerate() {
                a[(i, col)] = a[(i, col)] - v[t] * f;
            }
        }
        // A <- A H
        for row in 0..n {
            let mut s = Complex::zero();
            for (t, j) in (k + 1..n).enumerate() {
                s = s + a[(row, j)] * v[t];
            }
            let f = s * (two / vnorm2);
            for (t, j) in (k + 1..n).enumerate() {
                a[(row, j)] = a[(row, j)] - f * v[t].conj();
            }
        }
        for i in k + 2..n {
            a[(i, k)] = Complex::zero();
        }
    }
    a
}

/// Coefficients `c_0..c_n` (with `c_n = 1`) of `det(λ - M)`.
///
/// Reduces to Hessenberg form and runs the La Budde recurrence, so the result
/// never passes through eigenvalues.
pub fn char_poly_coeffs<T: Real>(m: &CMatrix<T>) -> Vec<Complex<T>> {
    let n = m.dim();
    let h = hessenberg(m);
    // polys[i] = characteristic polynomial of the leading i×i block, ascending coefficients
    let mut polys: Vec<Vec<Complex<T>>> = Vec::with_capacity(n + 1);
    polys.push(vec![Complex::one()]);
    for i in 1..=n {
        let hii = h[(i - 1, i - 1)];
        let prev = &polys[i - 1];
        let mut next = vec![Complex::zero(); i + 1];
        for (d, &c) in prev.iter().enumerate() {
            next[d + 1] = next[d + 1] + c;
            next[d] = next[d] - hii * c;
        }
        let mut beta_prod = Complex::<T>::one();
        for m_ in 1..i {
            // row i-m_, column i (1-based) -> (i-m_-1, i-1); sub-diagonal β_{i-m_+1}
            beta_prod = beta_prod * h[(i - m_, i - m_ - 1)];
            let coef = h[(i - m_ - 1, i - 1)] * beta_prod;
            if coef == Complex::zero() {
                continue;
            }
            for (d, &c) in polys[i - m_ - 1].iter().enumerate() {
                next[d] = next[d] - coef * c;
            }
        }
        polys.push(next);
    }
    polys.pop().unwrap()
}

/// Evaluates a polynomial given by ascending coefficients (Horner).
pub fn poly_eval<T: Real>(coeffs: &[Complex<T>], x: Complex<T>) -> Complex<T> {
    coeffs.iter().rev().fold(Complex::zero(), |acc, &c| acc * x + c)
}

/// Sylvester matrix of `a` and `b` (ascending coefficients, formal degrees
/// `a.len()-1` and `b.len()-1`, both at least one).
pub fn sylvester_matrix<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> CMatrix<T> {
    let m = a.len() - 1;
    let n = b.len() - 1;
    let mut s = CMatrix::<T>::zeros(m + n);
    // rows 0..n: shifted copies of a (descending order), rows n..n+m: copies of b
    for r in 0..n {
        for (d, &c) in a.iter().enumerate() {
            s[(r, r + (m - d))] = c;
        }
    }
    for r in 0..m {
        for (d, &c) in b.iter().enumerate() {
            s[(n + r, r + (n - d))] = c;
        }
    }
    s
}

/// Resultant `Res(a, b)` via the Sylvester determinant, for ascending
/// coefficient vectors with formal degrees `a.len()-1` and `b.len()-1`.
pub fn resultant<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    let m = a.len() - 1;
    let n = b.len() - 1;
    if m == 0 {
        return a[0].powu(n as u32);
    }
    if n == 0 {
        return b[0].powu(m as u32);
    }
    determinant(&sylvester_matrix(a, b))
}

/// Hadamard bound `∏ ‖row‖₂` for `|det M|`.
pub fn hadamard_bound<T: Real>(m: &CMatrix<T>) -> T {
    (0..m.dim()).map(|i| norm2(m.row(i))).fold(T::one(), |acc, r| acc * r)
}

/// Eigenvalues of a general complex matrix via a complex Schur decomposition.
pub fn general_eigenvalues(m: &CMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.dim();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
    let schur = nalgebra::Schur::try_new(mat, f64::EPSILON, 10_000)
        .ok_or(Error::ConvergenceFailure { sweeps: 10_000 })?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix<f64> {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(rng.gen_range(-2.0..2.0), 0.0);
            for j in i + 1..n {
                let z = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn jacobi_rejects_non_finite_entries() {
        let mut m = CMatrix::<f64>::zeros(2);
        m[(0, 0)] = Complex::new(f64::NAN, 0.0);
        assert_eq!(jacobi_eigh(&m, false).unwrap_err(), Error::NonFinite("matrix entries"));
        m[(0, 0)] = Complex::new(f64::INFINITY, 0.0);
        assert!(jacobi_eigh(&m, true).is_err());
    }

    #[test]
    fn jacobi_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 5, 8, 17] {
            let m = random_hermitian(n, &mut rng);
            let e = jacobi_eigh(&m, true).unwrap();
            for w in e.values.windows(2) {
                assert!(w[0] <= w[1]);
            }
            for (l, v) in e.vectors.iter().enumerate() {
                let mv = m.mul_vec(v);
                let r: f64 = mv.iter().zip(v).map(|(a, b)| (a - b * e.values[l]).norm_sqr()).sum::<f64>().sqrt();
                assert!(r < 1e-12, "residual {r}");
                for (k, w) in e.vectors.iter().enumerate() {
                    let ip = inner(v, w).norm();
                    let want = if k == l { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn jacobi_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m64 = random_hermitian(6, &mut rng);
        let m32: CMatrix<f32> = m64.cast();
        let e32 = jacobi_eigh(&m32, false).unwrap();
        let e64 = jacobi_eigh(&m64, false).unwrap();
        for (a, b) in e32.values.iter().zip(&e64.values) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    #[test]
    fn determinant_and_char_poly_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..7 {
            let m = random_hermitian(n, &mut rng);
            let cp = char_poly_coeffs(&m);
            assert_eq!(cp.len(), n + 1);
            assert!((cp[n] - Complex::one()).norm() < 1e-14);
            let lambda = Complex::new(0.3, -0.2);
            let shifted = CMatrix::identity(n).scale(1.0).sub(&m);
            let shifted = {
                let mut s = shifted;
                for i in 0..n {
                    s[(i, i)] += lambda - Complex::new(1.0, 0.0);
                }
                s
            };
            let d = determinant(&shifted);
            let p = poly_eval(&cp, lambda);
            assert!((d - p).norm() < 1e-10 * (1.0 + d.norm()), "n={n} {d} vs {p}");
        }
    }

    #[test]
    fn resultant_of_hand_example() {
        // P(E) = E^2 - 5, P'(E) = 2E; Res = P'(√5) P'(-√5) = -20
        let p = [Complex::new(-5.0, 0.0), Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)];
        let dp = [Complex::new(0.0, 0.0), Complex::new(2.0, 0.0)];
        assert!((resultant(&p, &dp) - Complex::new(-20.0, 0.0)).norm() < 1e-12);
        // degree-one with degree-zero: Res(E - a, c) = c
        let lin = [Complex::new(-3.0, 0.0), Complex::new(1.0, 0.0)];
        let c = [Complex::new(1.5, 0.0)];
        assert!((resultant(&lin, &c) - Complex::new(1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn schur_eigenvalues_of_diagonal() {
        let d = [Complex::new(1.0, 2.0), Complex::new(-3.0, 0.5), Complex::new(0.0, -1.0)];
        let ev = general_eigenvalues(&CMatrix::from_diagonal(&d)).unwrap();
        for z in d {
            assert!(ev.iter().any(|w| (w - z).norm() < 1e-12));
        }
    }
}
