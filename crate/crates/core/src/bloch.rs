//! Floquet–Bloch fiber operators `Ĥ_x` on `ℓ²(B_p)`.
//!
//! `(Ĥ_x ψ)(k) = Σ_j 2cos(2π(x_j + k_j)) ψ(k) + Σ_l V̂(l) ψ(k + l)`, so the
//! entry at `(k, k')` is `V̂(k' - k)` off the diagonal.

use num_complex::Complex;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Period;
use crate::linalg::CMatrix;
use crate::potential::PeriodicPotential;
use crate::scalar::{complex_cos, complex_sin, e2pi, Real};

/// A fiber matrix together with the quasi-momentum it was assembled at.
#[derive(Debug, Clone, Serialize)]
pub struct BlochMatrix<T: Real> {
    pub period: Period,
    /// Quasi-momentum; real fibers have zero imaginary parts.
    pub quasi: Vec<Complex<T>>,
    #[serde(skip)]
    pub matrix: CMatrix<T>,
    pub hermitian: bool,
}

impl<T: Real> BlochMatrix<T> {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Real parts of the quasi-momentum.
    pub fn x(&self) -> Vec<T> {
        self.quasi.iter().map(|z| z.re).collect()
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Canonical index of `k' - k mod 1` for canonical indices `k`, `k'`.
fn difference_index(p: &Period, k: &[usize], kp: &[usize]) -> usize {
    let diff: Vec<usize> = k
        .iter()
        .zip(kp)
        .zip(p.comps())
        .map(|((&a, &b), &pj)| (b + pj - a) % pj)
        .collect();
    p.flatten(&diff)
}

fn fill_convolution<T: Real>(v: &PeriodicPotential<T>, m: &mut CMatrix<T>) {
    let p = v.period();
    let sites: Vec<Vec<usize>> = (0..p.size()).map(|i| p.unflatten(i)).collect();
    for (a, ka) in sites.iter().enumerate() {
        for (b, kb) in sites.iter().enumerate() {
            m[(a, b)] = v.coeff(difference_index(p, ka, kb));
        }
    }
}

/// `Ĥ_x` for a real quasi-momentum.
pub fn assemble<T: Real>(v: &PeriodicPotential<T>, x: &[T]) -> Result<BlochMatrix<T>> {
    let p = v.period();
    check_dim(p.dim(), x.len())?;
    let mut m = CMatrix::zeros(p.size());
    fill_convolution(v, &mut m);
    let two = T::lit(2.0);
    for a in 0..p.size() {
        let k = p.unflatten(a);
        let kinetic: T = (0..p.dim())
            .map(|j| {
                let t = x[j] + T::from_usize_lossy(k[j]) / T::from_usize_lossy(p.comp(j));
                two * (T::TAU() * t).cos()
            })
            .sum();
        m[(a, a)] = Complex::new(kinetic + v.coeff(0).re, T::zero());
    }
    // exact Hermitian symmetry: the reality condition holds only to rounding
    for a in 0..p.size() {
        for b in a + 1..p.size() {
            let avg = (m[(a, b)] + m[(b, a)].conj()) * T::lit(0.5);
            m[(a, b)] = avg;
            m[(b, a)] = avg.conj();
        }
    }
    Ok(BlochMatrix {
        period: p.clone(),
        quasi: x.iter().map(|&t| Complex::new(t, T::zero())).collect(),
        matrix: m,
        hermitian: true,
    })
}

/// `Ĥ_z` for a complex quasi-momentum (not Hermitian in general).
pub fn assemble_complex<T: Real>(v: &PeriodicPotential<T>, z: &[Complex<T>]) -> Result<BlochMatrix<T>> {
    let p = v.period();
    check_dim(p.dim(), z.len())?;
    let mut m = CMatrix::zeros(p.size());
    fill_convolution(v, &mut m);
    let two = T::lit(2.0);
    for a in 0..p.size() {
        let k = p.unflatten(a);
        let kinetic = (0..p.dim()).fold(Complex::<T>::zero(), |acc: Complex<T>, j| {
            let t = z[j] + T::from_usize_lossy(k[j]) / T::from_usize_lossy(p.comp(j));
            acc + complex_cos(t * T::TAU()) * two
        });
        m[(a, a)] = kinetic + v.coeff(0);
    }
    let hermitian = z.iter().all(|w| w.im == T::zero());
    Ok(BlochMatrix { period: p.clone(), quasi: z.to_vec(), matrix: m, hermitian })
}

/// Diagonal of `∂Ĥ/∂x_j`: `-4π sin(2π(x_j + k_j))`. Independent of the potential.
pub fn derivative_matrix<T: Real>(p: &Period, x: &[T], direction: usize) -> Result<Vec<T>> {
    check_dim(p.dim(), x.len())?;
    if direction >= p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: direction + 1 });
    }
    let four_pi = T::lit(4.0) * T::PI();
    Ok((0..p.size())
        .map(|a| {
            let k = p.unflatten(a)[direction];
            let t = x[direction] + T::from_usize_lossy(k) / T::from_usize_lossy(p.comp(direction));
            -four_pi * (T::TAU() * t).sin()
        })
        .collect())
}

/// Complex counterpart of [`derivative_matrix`].
pub fn derivative_matrix_complex<T: Real>(p: &Period, z: &[Complex<T>], direction: usize) -> Result<Vec<Complex<T>>> {
    check_dim(p.dim(), z.len())?;
    if direction >= p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: direction + 1 });
    }
    let four_pi = T::lit(4.0) * T::PI();
    Ok((0..p.size())
        .map(|a| {
            let k = p.unflatten(a)[direction];
            let t = z[direction] + T::from_usize_lossy(k) / T::from_usize_lossy(p.comp(direction));
            -complex_sin(t * T::TAU()) * four_pi
        })
        .collect())
}

/// Imaginary shift `y` with `y_j = (1/2π) log(p_1⋯p_j 2^j (4(d + ‖V‖∞) + 1))`.
pub fn separation_shift(p: &Period, sup_norm: f64) -> Vec<f64> {
    let d = p.dim() as f64;
    let mut prod = 1.0;
    (0..p.dim())
        .map(|j| {
            prod *= p.comp(j) as f64 * 2.0;
            (prod * (4.0 * (d + sup_norm) + 1.0)).ln() / std::f64::consts::TAU
        })
        .collect()
}

/// Whether `y` satisfies `e^{2πy_1} ≥ A p_1/2π` and
/// `e^{2πy_j} ≥ p_j (1/π + 1/p_{j-1}) e^{2πy_{j-1}}`.
pub fn separation_recursion_holds(p: &Period, y: &[f64], a: f64) -> bool {
    let tau = std::f64::consts::TAU;
    let pi = std::f64::consts::PI;
    let first = (tau * y[0]).exp() >= a * p.comp(0) as f64 / tau;
    first
        && (1..p.dim()).all(|j| {
            (tau * y[j]).exp()
                >= p.comp(j) as f64 * (1.0 / pi + 1.0 / p.comp(j - 1) as f64) * (tau * y[j - 1]).exp()
        })
}

/// The diagonal `d(k, y) = Σ_j e(k_j/p_j) e^{2π y_j}` of the dominant part at `x = iy`.
#[derive(Debug, Clone, Serialize)]
pub struct DiagonalProfile {
    pub y: Vec<f64>,
    pub values: Vec<Complex<f64>>,
}

impl DiagonalProfile {
    pub fn new(p: &Period, y: &[f64]) -> Self {
        let values = (0..p.size())
            .map(|a| {
                let k = p.unflatten(a);
                (0..p.dim()).fold(Complex::zero(), |acc, j| {
                    acc + e2pi(k[j] as f64 / p.comp(j) as f64) * (std::f64::consts::TAU * y[j]).exp()
                })
            })
            .collect();
        Self { y: y.to_vec(), values }
    }

    /// Smallest pairwise distance (`+∞` for a single point).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.values.iter().enumerate() {
            for b in &self.values[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }
}

/// `Δ + V` on the box `∏{0..p_j-1}` with twisted boundary hopping.
///
/// Sites are ordered like the cell of `V`. A hop that leaves the box through
/// the upper face of axis `j` picks up `e(-x_j p_j)` and through the lower face
/// `e(x_j p_j)`, matching Bloch waves `u(n + p_j e_j) = e(-x_j p_j) u(n)`.
/// The result is unitarily equivalent to [`assemble`] at the same `x`.
pub fn realspace_twisted_matrix<T: Real>(v: &PeriodicPotential<T>, x: &[T]) -> Result<CMatrix<T>> {
    let p = v.period();
    check_dim(p.dim(), x.len())?;
    let n = p.size();
    let mut m = CMatrix::zeros(n);
    for a in 0..n {
        let site = p.unflatten(a);
        m[(a, a)] = m[(a, a)] + Complex::new(v.cell()[a], T::zero());
        for j in 0..p.dim() {
            let pj = p.comp(j);
            let twist = e2pi(-x[j] * T::from_usize_lossy(pj));
            let mut up = site.clone();
            let mut down = site.clone();
            let up_wraps = site[j] + 1 == pj;
            let down_wraps = site[j] == 0;
            up[j] = (site[j] + 1) % pj;
            down[j] = (site[j] + pj - 1) % pj;
            let b_up = p.flatten(&up);
            let b_down = p.flatten(&down);
            let w_up = if up_wraps { twist } else { Complex::new(T::one(), T::zero()) };
            let w_down = if down_wraps { twist.conj() } else { Complex::new(T::one(), T::zero()) };
            m[(a, b_up)] = m[(a, b_up)] + w_up;
            m[(a, b_down)] = m[(a, b_down)] + w_down;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_eigh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn per(v: &[i64]) -> Period {
        Period::new(v).unwrap()
    }

    fn close(a: Complex<f64>, re: f64, im: f64, tol: f64) -> bool {
        (a.re - re).abs() <= tol && (a.im - im).abs() <= tol
    }

    #[test]
    fn free_two_site_matrix() {
        let v = PeriodicPotential::<f64>::zero(&per(&[2]));
        let h = assemble(&v, &[0.0]).unwrap();
        assert!(close(h.matrix[(0, 0)], 2.0, 0.0, 1e-15));
        assert!(close(h.matrix[(1, 1)], -2.0, 0.0, 1e-15));
        assert!(close(h.matrix[(0, 1)], 0.0, 0.0, 1e-15));
    }

    #[test]
    fn alternating_potential_matrix() {
        let v = PeriodicPotential::from_cell(&per(&[2]), vec![1.0, -1.0]).unwrap();
        let h = assemble(&v, &[0.0]).unwrap();
        let want = [[2.0, 1.0], [1.0, -2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(h.matrix[(i, j)], want[i][j], 0.0, 1e-15));
            }
        }
    }

    #[test]
    fn single_site_quarter_momentum() {
        let v = PeriodicPotential::<f64>::zero(&per(&[1]));
        let h = assemble(&v, &[0.25]).unwrap();
        assert!(h.matrix[(0, 0)].norm() < 1e-15);
        assert!(matches!(assemble(&v, &[0.1, 0.2]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn complex_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = per(&[3]);
        let v = PeriodicPotential::from_cell(&p, (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let real = assemble(&v, &[0.0]).unwrap();
        let cplx = assemble_complex(&v, &[Complex::new(0.0, 0.0)]).unwrap();
        assert!(cplx.hermitian);
        assert!(real.matrix.sub(&cplx.matrix).max_abs() < 1e-15);

        let y = 0.31;
        let free = assemble_complex(&PeriodicPotential::<f64>::zero(&per(&[1])), &[Complex::new(0.0, y)]).unwrap();
        let want = 2.0 * (std::f64::consts::TAU * y).cosh();
        assert!(close(free.matrix[(0, 0)], want, 0.0, 1e-13));
    }

    #[test]
    fn complex_operator_norm_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = per(&[2, 2]);
            let v = PeriodicPotential::from_cell(&p, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let z: Vec<Complex<f64>> = (0..2).map(|_| Complex::new(rng.gen_range(0.0..1.0), rng.gen_range(-0.3..0.3))).collect();
            let h = assemble_complex(&v, &z).unwrap();
            // ‖M‖ ≤ ‖M‖_F is too loose; use the spectral norm via M*M eigenvalues
            let mh = h.matrix.conj_transpose();
            let mut prod = CMatrix::<f64>::zeros(4);
            for i in 0..4 {
                for j in 0..4 {
                    prod[(i, j)] = (0..4).fold(Complex::zero(), |acc, k| acc + mh[(i, k)] * h.matrix[(k, j)]);
                }
            }
            let top = jacobi_eigh(&prod, false).unwrap().values[3].sqrt();
            // |2cos(2πz)| ≤ 2e^{2π|Im z|}; convolution by V̂ has norm ‖V‖∞
            let bound: f64 = z.iter().map(|w| 2.0 * (std::f64::consts::TAU * w.im.abs()).exp()).sum::<f64>() + v.sup_norm() + 1e-12;
            assert!(top <= bound, "{top} > {bound}");
        }
    }

    #[test]
    fn derivative_examples() {
        let p1 = per(&[1]);
        let d = derivative_matrix(&p1, &[0.125], 0).unwrap();
        assert!((d[0] + 4.0 * std::f64::consts::PI * (std::f64::consts::PI / 4.0).sin()).abs() < 1e-12);
        assert!((d[0] + 8.885765876316732).abs() < 1e-12);
        let d2 = derivative_matrix::<f64>(&per(&[2]), &[0.0], 0).unwrap();
        assert!(d2.iter().all(|v| v.abs() < 1e-14));
        assert!(derivative_matrix(&p1, &[0.1], 1).is_err());
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = per(&[3, 2]);
        let v = PeriodicPotential::from_cell(&p, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let x = [0.07, 0.21];
        let h = 1e-5;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let a = assemble(&v, &xp).unwrap().matrix;
            let b = assemble(&v, &xm).unwrap().matrix;
            let fd = a.sub(&b).scale(1.0 / (2.0 * h));
            let dm: Vec<f64> = derivative_matrix(&p, &x, j).unwrap();
            for i in 0..6 {
                assert!((fd[(i, i)].re - dm[i]).abs() < 1e-8);
                for k in 0..6 {
                    if k != i {
                        assert!(fd[(i, k)].norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn separation_shift_values() {
        let y = separation_shift(&per(&[2]), 0.0);
        assert!((y[0] - 20f64.ln() / std::f64::consts::TAU).abs() < 1e-15);
        assert!((y[0] - 0.476786).abs() < 1e-6);
        let y1 = separation_shift(&per(&[1]), 0.0);
        assert!((y1[0] - 10f64.ln() / std::f64::consts::TAU).abs() < 1e-15);
        for (p, vn) in [(per(&[2, 3]), 0.0), (per(&[2, 3]), 1.0), (per(&[5]), 0.4), (per(&[3, 4, 2]), 0.2)] {
            let y = separation_shift(&p, vn);
            let a = p.dim() as f64 + vn + 1.0;
            assert!(separation_recursion_holds(&p, &y, a));
            let prof = DiagonalProfile::new(&p, &y);
            assert!(prof.min_separation() >= a, "{p}: {}", prof.min_separation());
        }
    }

    #[test]
    fn twisted_oracle_examples() {
        let z2 = PeriodicPotential::<f64>::zero(&per(&[2]));
        let m = realspace_twisted_matrix(&z2, &[0.0]).unwrap();
        let e: Vec<f64> = jacobi_eigh(&m, false).unwrap().values;
        assert!((e[0] + 2.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
        let z1 = PeriodicPotential::<f64>::zero(&per(&[1]));
        for x in [0.0, 0.1, 0.37] {
            let m = realspace_twisted_matrix(&z1, &[x]).unwrap();
            assert!((m[(0, 0)].re - 2.0 * (std::f64::consts::TAU * x).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn twisted_oracle_matches_fiber_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for p in [per(&[3]), per(&[4]), per(&[2, 3]), per(&[3, 3])] {
            for _ in 0..20 {
                let v = PeriodicPotential::from_cell(&p, (0..p.size()).map(|_| rng.gen_range(-1.5..1.5)).collect())
                    .unwrap();
                let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
                let a = jacobi_eigh(&assemble(&v, &x).unwrap().matrix, false).unwrap().values;
                let b = jacobi_eigh(&realspace_twisted_matrix(&v, &x).unwrap(), false).unwrap().values;
                for (u, w) in a.iter().zip(&b) {
                    assert!((u - w).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn hermitian_and_shift_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = per(&[4]);
        let v = PeriodicPotential::from_cell(&p, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let x = 0.11;
        let h = assemble(&v, &[x]).unwrap();
        assert!(h.matrix.hermitian_defect() <= 1e-14 * (1.0 + v.sup_norm()));
        let hs = assemble(&v, &[x + 0.25]).unwrap();
        // x -> x + 1/4 permutes B_4 by k -> k + 1/4
        for a in 0..4 {
            for b in 0..4 {
                let lhs = hs.matrix[(a, b)];
                let rhs = h.matrix[((a + 1) % 4, (b + 1) % 4)];
                assert!((lhs - rhs).norm() < 1e-13);
            }
        }
    }
}
