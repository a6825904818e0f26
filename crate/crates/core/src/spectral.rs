//! Eigendecomposition of fiber operators with deterministic conventions, plus
//! the spectral quantities derived from it: gaps, band velocities, the
//! discriminant `f`, the resultant `g`, and eigenvector distances.

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::bloch::{derivative_matrix_complex, BlochMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    char_poly_coeffs, general_eigenvalues, inner, jacobi_eigh, norm2, poly_eval, resultant, CMatrix,
};
use crate::scalar::Real;

/// Eigenvalues closer than this are treated as degenerate for velocity purposes.
pub const SIMPLE_GAP_TOL: f64 = 1e-8;
/// Largest fiber dimension for which the Sylvester route is attempted.
pub const RESULTANT_CAP: usize = 64;
/// Relative tolerance used to break ties in the phase convention.
const PHASE_TIE_TOL: f64 = 1e-12;

/// Ascending eigenvalues, phase-fixed orthonormal eigenvectors, residuals.
#[derive(Debug, Clone, Serialize)]
pub struct EigenSystem<T: Real> {
    pub x: Vec<Complex<T>>,
    pub values: Vec<T>,
    /// `vectors[ℓ]` is the eigenvector of `values[ℓ]`, in canonical dual-lattice order.
    pub vectors: Vec<Vec<Complex<T>>>,
    pub residuals: Vec<T>,
}

impl<T: Real> EigenSystem<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest `|⟨ψ_a, ψ_b⟩ - δ_ab|`.
    pub fn orthonormality_defect(&self) -> T {
        let mut worst = T::zero();
        for (a, u) in self.vectors.iter().enumerate() {
            for (b, v) in self.vectors.iter().enumerate() {
                let target = if a == b { Complex::one() } else { Complex::zero() };
                worst = worst.max((inner(u, v) - target).norm());
            }
        }
        worst
    }
}

fn hermitian_tolerance<T: Real>(m: &CMatrix<T>) -> T {
    T::lit(64.0) * T::unit_roundoff() * (T::one() + m.max_abs())
}

/// Rotates `v` so that its largest-modulus entry is real and positive. Entries
/// within a relative `1e-12` of the maximum count as ties; the lowest index wins.
pub fn fix_phase<T: Real>(v: &mut [Complex<T>]) {
    let top = v.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    if top == T::zero() {
        return;
    }
    let cutoff = top * (T::one() - T::lit(PHASE_TIE_TOL));
    let pivot = v.iter().position(|z| z.norm() >= cutoff).unwrap_or(0);
    let z = v[pivot];
    let rot = z.conj() / z.norm();
    for c in v.iter_mut() {
        *c = *c * rot;
    }
    v[pivot] = Complex::new(v[pivot].re, T::zero());
}

/// Full eigendecomposition of a Hermitian fiber matrix.
pub fn eigensystem<T: Real>(m: &BlochMatrix<T>) -> Result<EigenSystem<T>> {
    let mat = &m.matrix;
    let defect = mat.hermitian_defect();
    if defect > hermitian_tolerance(mat) {
        return Err(Error::NotHermitian { defect: defect.to_f64().unwrap_or(f64::NAN) });
    }
    let raw = jacobi_eigh(mat, true)?;
    let mut vectors = raw.vectors;
    for v in vectors.iter_mut() {
        fix_phase(v);
    }
    let residuals = raw
        .values
        .iter()
        .zip(&vectors)
        .map(|(&e, v)| {
            let hv = mat.mul_vec(v);
            let r: Vec<Complex<T>> = hv.iter().zip(v).map(|(a, b)| *a - *b * e).collect();
            norm2(&r)
        })
        .collect();
    Ok(EigenSystem { x: m.quasi.clone(), values: raw.values, vectors, residuals })
}

/// Ascending eigenvalues only.
pub fn eigenvalues<T: Real>(m: &BlochMatrix<T>) -> Result<Vec<T>> {
    let defect = m.matrix.hermitian_defect();
    if defect > hermitian_tolerance(&m.matrix) {
        return Err(Error::NotHermitian { defect: defect.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(jacobi_eigh(&m.matrix, false)?.values)
}

/// Smallest consecutive difference of a sorted list and the 1-based index `ℓ`
/// of the lower eigenvalue; `(+∞, None)` when there is a single value.
pub fn min_gap<T: Real>(e: &[T]) -> (T, Option<usize>) {
    let mut best = (T::infinity(), None);
    for (l, w) in e.windows(2).enumerate() {
        let g = w[1] - w[0];
        if g < best.0 {
            best = (g, Some(l + 1));
        }
    }
    best
}

/// Gaps to the neighbours below and above each eigenvalue (`+∞` at the ends).
pub fn neighbour_gaps<T: Real>(e: &[T]) -> Vec<(T, T)> {
    (0..e.len())
        .map(|l| {
            let below = if l == 0 { T::infinity() } else { e[l] - e[l - 1] };
            let above = if l + 1 == e.len() { T::infinity() } else { e[l + 1] - e[l] };
            (below, above)
        })
        .collect()
}

fn unit_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::lit(64.0) * T::unit_roundoff())
}

fn check_unit<T: Real>(v: &[Complex<T>]) -> Result<()> {
    let n = norm2(v);
    if (n - T::one()).abs() > unit_tolerance::<T>() {
        return Err(Error::NotNormalized { norm: n.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(())
}

/// `inf_{|c|=1} ‖φ - cψ‖ = sqrt(2 - 2|⟨φ,ψ⟩|)` for unit vectors.
pub fn eig_distance<T: Real>(phi: &[Complex<T>], psi: &[Complex<T>]) -> Result<T> {
    if phi.len() != psi.len() {
        return Err(Error::DimensionMismatch { expected: phi.len(), got: psi.len() });
    }
    check_unit(phi)?;
    check_unit(psi)?;
    Ok(aligned_distance(phi, psi))
}

/// `‖φ - cψ‖` with `c = ⟨ψ,φ⟩/|⟨ψ,φ⟩|`, the minimizing phase. Equal to
/// `sqrt(2 - 2|⟨φ,ψ⟩|)` for unit vectors but computed without cancellation, so
/// it stays accurate for nearly parallel vectors.
pub fn aligned_distance<T: Real>(phi: &[Complex<T>], psi: &[Complex<T>]) -> T {
    let ov = inner(psi, phi);
    let c = if ov.norm() > T::zero() { ov / ov.norm() } else { Complex::one() };
    let diff: Vec<Complex<T>> = phi.iter().zip(psi).map(|(a, b)| *a - c * *b).collect();
    norm2(&diff)
}

/// Checks `d(φ, ψ) ≤ 2ε/δ` after validating the hypotheses: `A` Hermitian with
/// exactly one eigenvalue in `[-δ, δ]`, `Aψ = 0`, `‖Aφ‖ ≤ ε`, unit vectors.
pub fn perturbation_bound_check<T: Real>(
    a: &CMatrix<T>,
    delta: T,
    psi: &[Complex<T>],
    phi: &[Complex<T>],
    eps: T,
) -> Result<bool> {
    if !(delta > T::zero()) {
        return Err(Error::PreconditionViolated("gap must be positive".into()));
    }
    if a.hermitian_defect() > hermitian_tolerance(a) {
        return Err(Error::PreconditionViolated("matrix is not Hermitian".into()));
    }
    check_unit(psi).map_err(|_| Error::PreconditionViolated("ψ is not a unit vector".into()))?;
    check_unit(phi).map_err(|_| Error::PreconditionViolated("φ is not a unit vector".into()))?;
    let values = jacobi_eigh(a, false)?.values;
    let inside = values.iter().filter(|&&e| e.abs() <= delta).count();
    if inside != 1 {
        return Err(Error::PreconditionViolated(format!(
            "expected exactly one eigenvalue in [-δ, δ], found {inside}"
        )));
    }
    let scale = T::one() + a.max_abs() * T::from_usize_lossy(a.dim());
    let slack = T::lit(1e-10).max(T::lit(64.0) * T::unit_roundoff()) * scale;
    if norm2(&a.mul_vec(psi)) > slack {
        return Err(Error::PreconditionViolated("ψ is not in the kernel of A".into()));
    }
    if norm2(&a.mul_vec(phi)) > eps + slack {
        return Err(Error::PreconditionViolated("‖Aφ‖ exceeds ε".into()));
    }
    Ok(eig_distance(phi, psi)? <= T::lit(2.0) * eps / delta + slack)
}

/// Band velocities `⟨ψ_ℓ, ∂Ĥ ψ_ℓ⟩` with a reliability flag per band.
#[derive(Debug, Clone, Serialize)]
pub struct Velocities<T: Real> {
    pub values: Vec<T>,
    /// `false` where the eigenvalue is within [`SIMPLE_GAP_TOL`] of a neighbour.
    pub reliable: Vec<bool>,
}

impl<T: Real> Velocities<T> {
    pub fn all_reliable(&self) -> bool {
        self.reliable.iter().all(|&r| r)
    }
}

/// Hellmann–Feynman velocities from the (diagonal) derivative of `Ĥ`.
pub fn hellmann_feynman<T: Real>(es: &EigenSystem<T>, deriv_diag: &[T]) -> Result<Velocities<T>> {
    if deriv_diag.len() != es.len() {
        return Err(Error::DimensionMismatch { expected: es.len(), got: deriv_diag.len() });
    }
    let values = es
        .vectors
        .iter()
        .map(|v| v.iter().zip(deriv_diag).map(|(c, &d)| c.norm_sqr() * d).sum())
        .collect();
    let tol = T::lit(SIMPLE_GAP_TOL);
    let reliable = neighbour_gaps(&es.values).iter().map(|&(b, a)| b >= tol && a >= tol).collect();
    Ok(Velocities { values, reliable })
}

/// `f = ∏_{j<ℓ} (E_j - E_ℓ)²`; the empty product is 1.
pub fn discriminant<T: Real>(e: &[T]) -> T {
    let mut f = T::one();
    for (i, &a) in e.iter().enumerate() {
        for &b in &e[i + 1..] {
            f = f * (a - b) * (a - b);
        }
    }
    f
}

/// `ln f`, which stays finite for large fibers where `f` under- or overflows.
pub fn log_discriminant<T: Real>(e: &[T]) -> T {
    let mut s = T::zero();
    for (i, &a) in e.iter().enumerate() {
        for &b in &e[i + 1..] {
            s = s + T::lit(2.0) * (a - b).abs().ln();
        }
    }
    s
}

/// Lower bound `sqrt(f)/(2d + ‖V‖∞)^{P²/2}` on the smallest eigenvalue gap.
pub fn gap_from_discriminant(f: f64, d: usize, sup_norm: f64, p: usize) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let base = 2.0 * d as f64 + sup_norm;
    let pp = (p * p) as f64;
    (0.5 * f.ln() - 0.5 * pp * base.ln()).exp()
}

/// `g = f · ∏_ℓ ∂E_ℓ`; requires every band to be simple.
pub fn g_value<T: Real>(e: &[T], velocities: &Velocities<T>) -> Result<T> {
    if let Some(l) = velocities.reliable.iter().position(|&r| !r) {
        let (below, above) = neighbour_gaps(e)[l];
        return Err(Error::DegenerateEigenvalue {
            index: l + 1,
            gap: below.min(above).to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(velocities.values.iter().fold(discriminant(e), |acc, &v| acc * v))
}

/// Monic characteristic polynomial `det(E - Ĥ)`, ascending coefficients
/// (the last entry is the leading 1).
#[derive(Debug, Clone, Serialize)]
pub struct CharPoly<T: Real> {
    pub coeffs: Vec<Complex<T>>,
}

impl<T: Real> CharPoly<T> {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, e: Complex<T>) -> Complex<T> {
        poly_eval(&self.coeffs, e)
    }

    /// Coefficients of `∂_E P`.
    pub fn derivative(&self) -> Vec<Complex<T>> {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * T::from_usize_lossy(k))
            .collect()
    }
}

pub fn char_poly<T: Real>(m: &CMatrix<T>) -> CharPoly<T> {
    CharPoly { coeffs: char_poly_coeffs(m) }
}

/// Coefficients (degree `P-1`, ascending) of `∂_{x_d} det(E - Ĥ)` via
/// `-Σ_k D_kk det((E - Ĥ) with row and column k removed)`.
pub fn char_poly_derivative<T: Real>(m: &CMatrix<T>, deriv_diag: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = m.dim();
    let mut out = vec![Complex::zero(); n.max(1)];
    if n == 1 {
        out[0] = -deriv_diag[0];
        return out;
    }
    for (k, &dk) in deriv_diag.iter().enumerate() {
        let minor = char_poly_coeffs(&m.minor(k));
        for (c, &mc) in out.iter_mut().zip(&minor) {
            *c = *c - dk * mc;
        }
    }
    out
}

/// `f` and `g` computed through resultants of the characteristic polynomial,
/// independently of any eigenvalue computation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResultantPair {
    pub f_res: Complex<f64>,
    pub g_res: Complex<f64>,
    /// Magnitudes below which the corresponding value is dominated by rounding.
    pub f_threshold: f64,
    pub g_threshold: f64,
}

impl ResultantPair {
    pub fn f_conditioned(&self) -> bool {
        self.f_res.norm() >= self.f_threshold
    }

    pub fn g_conditioned(&self) -> bool {
        self.g_res.norm() >= self.g_threshold
    }

    /// `Ok` when both values are above their thresholds.
    pub fn require_conditioned(&self) -> Result<()> {
        if !self.f_conditioned() {
            return Err(Error::IllConditioned { f: self.f_res.norm(), threshold: self.f_threshold });
        }
        if !self.g_conditioned() {
            return Err(Error::IllConditioned { f: self.g_res.norm(), threshold: self.g_threshold });
        }
        Ok(())
    }
}

fn parity_sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `10⁶ · u · max|a|^{deg b} · max|b|^{deg a}`, with `u` the unit roundoff.
/// The product is the size of the largest monomials of the Sylvester
/// determinant, so `u` times it is the rounding floor; values above the
/// threshold are reproducible to better than one part in 10⁶.
fn conditioning_threshold(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    let top = |v: &[Complex<f64>]| v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    1e6 * f64::EPSILON * top(a).powi((b.len() - 1) as i32) * top(b).powi((a.len() - 1) as i32)
}

/// Resultant route to `f` and `g` for the derivative along axis `direction`.
///
/// `f = (-1)^{P(P-1)/2} Res(P, ∂_E P)`, `g = (-1)^{P + P(P-1)/2} Res(P, ∂_{x_d} P)`;
/// the extra sign makes `g` coincide with `f · ∏ ∂E`. Each value carries the
/// magnitude below which it is declared ill-conditioned.
pub fn resultant_check(m: &BlochMatrix<f64>, direction: usize) -> Result<ResultantPair> {
    let n = m.dim();
    if n > RESULTANT_CAP {
        return Err(Error::PreconditionViolated(format!("fiber dimension {n} exceeds {RESULTANT_CAP}")));
    }
    let cp = char_poly(&m.matrix);
    let dz = derivative_matrix_complex(&m.period, &m.quasi, direction)?;
    let dx = char_poly_derivative(&m.matrix, &dz);
    let sign_f = parity_sign(n * (n - 1) / 2);
    let sign_g = parity_sign(n + n * (n - 1) / 2);
    if n == 1 {
        // Res(P, c) = c for linear monic P and constant c
        return Ok(ResultantPair {
            f_res: Complex::one(),
            g_res: dx[0] * sign_g,
            f_threshold: 0.0,
            g_threshold: 0.0,
        });
    }
    let de = cp.derivative();
    let f_res = resultant(&cp.coeffs, &de) * sign_f;
    let g_res = resultant(&cp.coeffs, &dx) * sign_g;
    let f_threshold = conditioning_threshold(&cp.coeffs, &de);
    let g_threshold = conditioning_threshold(&cp.coeffs, &dx);
    Ok(ResultantPair { f_res, g_res, f_threshold, g_threshold })
}

/// Eigenvalues of a (possibly non-Hermitian) fiber matrix, sorted by real then
/// imaginary part for reporting. The order carries no band meaning.
pub fn nonhermitian_spectrum(m: &BlochMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.dim() > RESULTANT_CAP {
        return Err(Error::PreconditionViolated(format!("fiber dimension {} exceeds {RESULTANT_CAP}", m.dim())));
    }
    let mut ev = general_eigenvalues(&m.matrix)?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// `f` and `∏ (E_j - E_ℓ)` style quantities for an unordered complex spectrum:
/// returns `(|f|, min pairwise distance)`.
pub fn complex_separation(ev: &[Complex<f64>]) -> (f64, f64) {
    let mut f = 1.0;
    let mut sep = f64::INFINITY;
    for (i, a) in ev.iter().enumerate() {
        for b in &ev[i + 1..] {
            let d = (a - b).norm();
            f *= d * d;
            sep = sep.min(d);
        }
    }
    (f, sep)
}

/// Output of [`manufactured_instance`].
#[derive(Debug, Clone)]
pub struct ManufacturedInstance {
    pub a: CMatrix<f64>,
    pub delta: f64,
    pub psi: Vec<Complex<f64>>,
    pub phi: Vec<Complex<f64>>,
    pub eps: f64,
}

/// Random test case for the perturbation bound: a Hermitian matrix with a single eigenvalue 0 isolated by `δ`, its kernel
/// vector, and a perturbed unit vector with `‖Aφ‖ = ε`.
pub fn manufactured_instance<R: rand::Rng>(n: usize, rng: &mut R) -> ManufacturedInstance {
    let delta = rng.gen_range(0.05..1.0);
    // random unitary from the eigenvectors of a random Hermitian matrix
    let mut h = CMatrix::<f64>::zeros(n);
    for i in 0..n {
        for j in i..n {
            let z = Complex::new(rng.gen_range(-1.0..1.0), if i == j { 0.0 } else { rng.gen_range(-1.0..1.0) });
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    let u = jacobi_eigh(&h, true).unwrap().vectors;
    let mut spectrum = vec![0.0];
    for _ in 1..n {
        let mag = delta * (1.0 + 1e-6) + rng.gen_range(0.0..2.0);
        spectrum.push(if rng.gen_bool(0.5) { mag } else { -mag });
    }
    let mut a = CMatrix::<f64>::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = (0..n).fold(Complex::zero(), |acc, k| acc + u[k][i] * spectrum[k] * u[k][j].conj());
        }
    }
    let psi = u[0].clone();
    // φ = unit(ψ + t·w) with w a random unit vector orthogonal to ψ
    let mut w: Vec<Complex<f64>> =
        (0..n).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let proj = inner(&psi, &w);
    for (wi, pi) in w.iter_mut().zip(&psi) {
        *wi -= pi * proj;
    }
    let wn = norm2(&w);
    w.iter_mut().for_each(|c| *c /= wn);
    let t = rng.gen_range(0.0..0.5);
    let mut phi: Vec<Complex<f64>> = psi.iter().zip(&w).map(|(a, b)| a + b * t).collect();
    let pn = norm2(&phi);
    phi.iter_mut().for_each(|c| *c /= pn);
    let eps = norm2(&a.mul_vec(&phi));
    ManufacturedInstance { a, delta, psi, phi, eps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{assemble, assemble_complex, derivative_matrix, separation_shift};
    use crate::lattice::Period;
    use crate::potential::PeriodicPotential;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn per(v: &[i64]) -> Period {
        Period::new(v).unwrap()
    }

    fn random_potential(p: &Period, amp: f64, rng: &mut ChaCha8Rng) -> PeriodicPotential<f64> {
        PeriodicPotential::from_cell(p, (0..p.size()).map(|_| rng.gen_range(-amp..amp)).collect()).unwrap()
    }

    fn bloch_from_rows(rows: &[Vec<f64>]) -> BlochMatrix<f64> {
        let n = rows.len();
        BlochMatrix {
            period: per(&[n as i64]),
            quasi: vec![Complex::zero()],
            matrix: CMatrix::from_real_rows(rows),
            hermitian: true,
        }
    }

    #[test]
    fn eigensystem_examples() {
        let es = eigensystem(&bloch_from_rows(&[vec![2.0, 0.0], vec![0.0, -2.0]])).unwrap();
        assert_eq!(es.values, vec![-2.0, 2.0]);
        assert!((es.vectors[0][1] - Complex::one()).norm() < 1e-15 && es.vectors[0][0].norm() < 1e-15);
        assert!((es.vectors[1][0] - Complex::one()).norm() < 1e-15);

        let es = eigensystem(&bloch_from_rows(&[vec![2.0, 1.0], vec![1.0, -2.0]])).unwrap();
        assert!((es.values[0] + 5f64.sqrt()).abs() < 1e-14);
        assert!((es.values[1] - 5f64.sqrt()).abs() < 1e-14);

        let es = eigensystem(&bloch_from_rows(&[vec![0.7]])).unwrap();
        assert_eq!(es.values, vec![0.7]);
        assert_eq!(es.vectors[0], vec![Complex::one()]);
    }

    #[test]
    fn eigensystem_contract_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for p in [per(&[6]), per(&[2, 3]), per(&[3, 3])] {
            let v = random_potential(&p, 1.0, &mut rng);
            let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let h = assemble(&v, &x).unwrap();
            let es = eigensystem(&h).unwrap();
            assert!(es.values.windows(2).all(|w| w[0] <= w[1]));
            assert!(es.orthonormality_defect() <= 1e-10);
            let scale = 1.0 + h.matrix.frobenius_norm();
            assert!(es.residuals.iter().all(|&r| r <= 1e-10 * scale));
            for v in &es.vectors {
                let top = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let pivot = v.iter().position(|z| z.norm() >= top * (1.0 - 1e-12)).unwrap();
                assert!(v[pivot].im == 0.0 && v[pivot].re > 0.0);
            }
            let again = eigensystem(&h).unwrap();
            assert_eq!(format!("{:?}", es.vectors), format!("{:?}", again.vectors));
            assert_eq!(es.values, again.values);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = bloch_from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(eigensystem(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn min_gap_examples() {
        assert_eq!(min_gap(&[-2.0, 2.0]), (4.0, Some(1)));
        assert_eq!(min_gap(&[0.0, 0.0, 1.0]), (0.0, Some(1)));
        let (g, l) = min_gap(&[1.5f64]);
        assert!(g.is_infinite() && l.is_none());
        let free = PeriodicPotential::<f64>::zero(&per(&[2]));
        let e = eigenvalues(&assemble(&free, &[0.25]).unwrap()).unwrap();
        assert!(min_gap(&e).0.abs() < 1e-15);
    }

    #[test]
    fn eig_distance_examples() {
        let a = vec![Complex::new(1.0, 0.0), Complex::zero()];
        let b = vec![Complex::zero(), Complex::new(0.0, 1.0)];
        assert_eq!(eig_distance(&a, &a).unwrap(), 0.0);
        assert!((eig_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let c = vec![Complex::new(0.5, 0.0), Complex::new(0.0, 0.75f64.sqrt())];
        assert!((eig_distance(&a, &c).unwrap() - 1.0).abs() < 1e-15);
        let bad = vec![Complex::new(2.0, 0.0), Complex::zero()];
        assert!(matches!(eig_distance(&bad, &a), Err(Error::NotNormalized { .. })));
        // phase invariance
        let rot: Vec<Complex<f64>> = c.iter().map(|z| z * Complex::from_polar(1.0, 0.7)).collect();
        assert!((eig_distance(&a, &rot).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn perturbation_bound_examples() {
        let a = CMatrix::from_real_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]);
        let psi = vec![Complex::one(), Complex::zero()];
        assert!(perturbation_bound_check(&a, 0.5, &psi, &psi, 0.0).unwrap());
        let s: f64 = 0.1;
        let c = (1.0 - s * s).sqrt();
        let phi = vec![Complex::new(c, 0.0), Complex::new(s, 0.0)];
        assert!(perturbation_bound_check(&a, 0.5, &psi, &phi, 0.1).unwrap());
        let d = eig_distance(&phi, &psi).unwrap();
        assert!((d - (2.0 - 2.0 * c).sqrt()).abs() < 1e-15 && (d - 0.1001).abs() < 1e-4);
        // hypotheses are reported
        let err = perturbation_bound_check(&a, 2.0, &psi, &phi, 0.1).unwrap_err();
        assert!(matches!(err, Error::PreconditionViolated(ref m) if m.contains("exactly one")));
        let err = perturbation_bound_check(&a, 0.5, &psi, &phi, 0.01).unwrap_err();
        assert!(matches!(err, Error::PreconditionViolated(ref m) if m.contains("ε")));
    }

    #[test]
    fn velocity_examples() {
        let free = PeriodicPotential::<f64>::zero(&per(&[1]));
        let x = [0.125];
        let es = eigensystem(&assemble(&free, &x).unwrap()).unwrap();
        let v = hellmann_feynman(&es, &derivative_matrix(&per(&[1]), &x, 0).unwrap()).unwrap();
        assert!((v.values[0] + 8.885765876316732).abs() < 1e-12);
        let g = g_value(&es.values, &v).unwrap();
        assert!((g + 8.885765876316732).abs() < 1e-12);
        let es0 = eigensystem(&assemble(&free, &[0.0]).unwrap()).unwrap();
        let v0 = hellmann_feynman(&es0, &derivative_matrix(&per(&[1]), &[0.0], 0).unwrap()).unwrap();
        assert!(v0.values[0].abs() < 1e-15);
        assert_eq!(g_value(&es0.values, &v0).unwrap(), 0.0);
    }

    #[test]
    fn velocities_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = per(&[3]);
        let h = 1e-5;
        let mut checked = 0;
        for _ in 0..20 {
            let v = random_potential(&p, 1.0, &mut rng);
            let x = rng.gen_range(0.0..1.0);
            let es = eigensystem(&assemble(&v, &[x]).unwrap()).unwrap();
            if min_gap(&es.values).0 < 1e-3 {
                continue;
            }
            let vel = hellmann_feynman(&es, &derivative_matrix(&p, &[x], 0).unwrap()).unwrap();
            let up = eigenvalues(&assemble(&v, &[x + h]).unwrap()).unwrap();
            let dn = eigenvalues(&assemble(&v, &[x - h]).unwrap()).unwrap();
            for l in 0..3 {
                assert!(((up[l] - dn[l]) / (2.0 * h) - vel.values[l]).abs() < 1e-6);
            }
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn degenerate_velocity_flagged() {
        let free = PeriodicPotential::<f64>::zero(&per(&[2]));
        let es = eigensystem(&assemble(&free, &[0.25]).unwrap()).unwrap();
        let v = hellmann_feynman(&es, &derivative_matrix(&per(&[2]), &[0.25], 0).unwrap()).unwrap();
        assert!(!v.all_reliable());
        assert!(matches!(g_value(&es.values, &v), Err(Error::DegenerateEigenvalue { .. })));
    }

    #[test]
    fn discriminant_examples() {
        assert_eq!(discriminant(&[-2.0, 2.0]), 16.0);
        assert_eq!(discriminant(&[0.0, 0.0, 1.0]), 0.0);
        let r5 = 5f64.sqrt();
        assert!((discriminant(&[-r5, r5]) - 20.0).abs() < 1e-13);
        assert_eq!(discriminant::<f64>(&[3.0]), 1.0);
        assert!((log_discriminant(&[-r5, r5]) - 20f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn gap_bound_examples() {
        assert_eq!(gap_from_discriminant(16.0, 1, 0.0, 2), 1.0);
        assert_eq!(gap_from_discriminant(0.0, 1, 0.0, 2), 0.0);
        assert!((gap_from_discriminant(20.0, 1, 1.0, 2) - 20f64.sqrt() / 9.0).abs() < 1e-15);
        assert!((gap_from_discriminant(20.0, 1, 1.0, 2) - 0.4969).abs() < 1e-4);
    }

    #[test]
    fn gap_bound_dominated_by_actual_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for p in [per(&[2]), per(&[3]), per(&[4]), per(&[2, 2]), per(&[6])] {
            let v = random_potential(&p, 0.8, &mut rng);
            for i in 0..200 {
                let x: Vec<f64> = (0..p.dim()).map(|j| (i as f64 + 0.37 * j as f64) / 200.0).collect();
                let e = eigenvalues(&assemble(&v, &x).unwrap()).unwrap();
                let bound = gap_from_discriminant(discriminant(&e), p.dim(), v.sup_norm(), p.size());
                assert!(min_gap(&e).0 >= bound * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn char_poly_vanishes_at_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let p = per(&[6]);
        let v = random_potential(&p, 1.0, &mut rng);
        let h = assemble(&v, &[0.3]).unwrap();
        let cp = char_poly(&h.matrix);
        assert_eq!(cp.degree(), 6);
        assert_eq!(cp.coeffs[6], Complex::one());
        let scale = cp.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for e in eigenvalues(&h).unwrap() {
            assert!(cp.eval(Complex::new(e, 0.0)).norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn resultant_examples() {
        let m = bloch_from_rows(&[vec![2.0, 1.0], vec![1.0, -2.0]]);
        let cp = char_poly(&m.matrix);
        assert!((cp.coeffs[0] + 5.0).norm() < 1e-13 && cp.coeffs[1].norm() < 1e-13);
        let r = resultant_check(&m, 0).unwrap();
        assert!((r.f_res - 20.0).norm() < 1e-12);

        let m = bloch_from_rows(&[vec![2.0, 0.0], vec![0.0, -2.0]]);
        assert!((resultant_check(&m, 0).unwrap().f_res - 16.0).norm() < 1e-12);
        assert_eq!(discriminant(&[-2.0, 2.0]), 16.0);

        let free = PeriodicPotential::<f64>::zero(&per(&[1]));
        let r = resultant_check(&assemble(&free, &[0.125]).unwrap(), 0).unwrap();
        assert_eq!(r.f_res, Complex::one());
        assert!((r.g_res.re + 8.885765876316732).abs() < 1e-12);
    }

    #[test]
    fn resultant_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut compared = 0;
        let mut conditioned = 0;
        for p in [per(&[2]), per(&[3]), per(&[6]), per(&[2, 3])] {
            for _ in 0..10 {
                let v = random_potential(&p, 1.0, &mut rng);
                let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
                let h = assemble(&v, &x).unwrap();
                let es = eigensystem(&h).unwrap();
                if min_gap(&es.values).0 < 1e-3 {
                    continue;
                }
                let d = p.dim() - 1;
                let vel = hellmann_feynman(&es, &derivative_matrix(&p, &x, d).unwrap()).unwrap();
                let f = discriminant(&es.values);
                let g = g_value(&es.values, &vel).unwrap();
                let r = resultant_check(&h, d).unwrap();
                // the conditioning flag is conservative: agreement holds even on flagged instances
                if r.f_conditioned() && r.g_conditioned() {
                    conditioned += 1;
                }
                assert!((r.f_res - f).norm() <= 1e-6 * f.abs(), "f {f} vs {}", r.f_res);
                assert!((r.g_res - g).norm() <= 1e-6 * g.abs(), "g {g} vs {}", r.g_res);
                compared += 1;
            }
        }
        assert!(compared >= 30);
        assert!(conditioned * 10 >= compared * 8);
    }

    #[test]
    fn alternating_potential_g_cross_check() {
        let p = per(&[2]);
        let v = PeriodicPotential::from_cell(&p, vec![1.0, -1.0]).unwrap();
        let x = [0.1];
        let h = assemble(&v, &x).unwrap();
        let es = eigensystem(&h).unwrap();
        let vel = hellmann_feynman(&es, &derivative_matrix(&p, &x, 0).unwrap()).unwrap();
        let g = g_value(&es.values, &vel).unwrap();
        let r = resultant_check(&h, 0).unwrap();
        assert!((r.g_res - g).norm() <= 1e-6 * g.abs());
    }

    #[test]
    fn nonhermitian_examples() {
        let diag = BlochMatrix {
            period: per(&[3]),
            quasi: vec![Complex::new(0.0, 0.2)],
            matrix: CMatrix::from_diagonal(&[Complex::new(1.0, 2.0), Complex::new(-1.0, 0.0), Complex::new(0.5, -1.0)]),
            hermitian: false,
        };
        let ev = nonhermitian_spectrum(&diag).unwrap();
        assert!((ev[0] - Complex::new(-1.0, 0.0)).norm() < 1e-14);
        assert!((ev[1] - Complex::new(0.5, -1.0)).norm() < 1e-14);
        assert!((ev[2] - Complex::new(1.0, 2.0)).norm() < 1e-14);

        let y = 0.3;
        let free = PeriodicPotential::<f64>::zero(&per(&[1]));
        let ev = nonhermitian_spectrum(&assemble_complex(&free, &[Complex::new(0.0, y)]).unwrap()).unwrap();
        assert!((ev[0].re - 2.0 * (std::f64::consts::TAU * y).cosh()).abs() < 1e-12);
    }

    #[test]
    fn complex_separation_at_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for p in [per(&[2]), per(&[3]), per(&[2, 2])] {
            let v = random_potential(&p, 0.2, &mut rng);
            let y = separation_shift(&p, v.sup_norm());
            let z: Vec<Complex<f64>> = y.iter().map(|&t| Complex::new(0.0, t)).collect();
            let h = assemble_complex(&v, &z).unwrap();
            let ev = nonhermitian_spectrum(&h).unwrap();
            let (f, sep) = complex_separation(&ev);
            assert!(sep >= 1.0 && f >= 1.0);
            // |g(iy)| ≥ 1 via the resultant route
            let r = resultant_check(&h, p.dim() - 1).unwrap();
            assert!(r.g_res.norm() >= 1.0);
            assert!(r.f_res.norm() >= 1.0);
        }
    }

    #[test]
    fn discriminant_growth_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for p in [per(&[2]), per(&[3]), per(&[2, 2])] {
            let v = random_potential(&p, 0.7, &mut rng);
            let d = p.dim() as f64;
            let pp = (p.size() * p.size()) as i32;
            for _ in 0..20 {
                let z: Vec<Complex<f64>> =
                    (0..p.dim()).map(|_| Complex::new(rng.gen_range(0.0..1.0), rng.gen_range(-0.5..0.5))).collect();
                let abs_z = z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
                let r = resultant_check(&assemble_complex(&v, &z).unwrap(), p.dim() - 1).unwrap();
                let bound = (4.0 * d * (std::f64::consts::TAU * abs_z).exp() + v.sup_norm()).powi(pp);
                assert!(r.f_res.norm() <= bound);
            }
        }
    }

    #[test]
    fn derivative_of_char_poly_lower_bound() {
        // |∂_{x_d} P(x; E_ℓ)| ≥ |g| / (4d + 2‖V‖ + 1)^{P(P-1)}
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        for p in [per(&[2]), per(&[3])] {
            let v = random_potential(&p, 0.5, &mut rng);
            let n = p.size();
            for i in 0..50 {
                let x = [(i as f64 + 0.5) / 50.0];
                let h = assemble(&v, &x).unwrap();
                let es = eigensystem(&h).unwrap();
                let vel = hellmann_feynman(&es, &derivative_matrix(&p, &x, 0).unwrap()).unwrap();
                let Ok(g) = g_value(&es.values, &vel) else { continue };
                let dz = derivative_matrix_complex(&p, &h.quasi, 0).unwrap();
                let dp = char_poly_derivative(&h.matrix, &dz);
                let denom = (4.0 + 2.0 * v.sup_norm() + 1.0).powi((n * (n - 1)) as i32);
                for &e in &es.values {
                    let val = poly_eval(&dp, Complex::new(e, 0.0)).norm();
                    assert!(val >= g.abs() / denom * (1.0 - 1e-9));
                }
            }
        }
    }

    #[test]
    fn complex_eigenvalue_norm_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for p in [per(&[3]), per(&[2, 2])] {
            let v = random_potential(&p, 1.0, &mut rng);
            for _ in 0..20 {
                let z: Vec<Complex<f64>> =
                    (0..p.dim()).map(|_| Complex::new(rng.gen_range(0.0..1.0), rng.gen_range(-0.2..0.2))).collect();
                let ev = nonhermitian_spectrum(&assemble_complex(&v, &z).unwrap()).unwrap();
                let bound = p.dim() as f64
                    + z.iter().map(|w| (std::f64::consts::TAU * w.im.abs()).exp()).sum::<f64>()
                    + v.sup_norm();
                // |2cos(2πz)| ≤ 2cosh(2π Im z) ≤ 1 + e^{2π|Im z|}
                assert!(ev.iter().all(|e| e.norm() <= bound + 1e-12));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn weyl_perturbation(seed in any::<u64>(), x in 0.0f64..1.0, w_amp in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = per(&[4]);
            let v = random_potential(&p, 1.0, &mut rng);
            let w = random_potential(&p, w_amp.max(1e-9), &mut rng);
            let a = eigenvalues(&assemble(&v, &[x]).unwrap()).unwrap();
            let b = eigenvalues(&assemble(&v.add(&w).unwrap(), &[x]).unwrap()).unwrap();
            for (u, t) in a.iter().zip(&b) {
                prop_assert!((u - t).abs() <= w.sup_norm() + 1e-10);
            }
        }

        #[test]
        fn perturbation_bound_random(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ManufacturedInstance { a, delta, psi, phi, eps } = manufactured_instance(5, &mut rng);
            prop_assert!(perturbation_bound_check(&a, delta, &psi, &phi, eps).unwrap());
        }

        #[test]
        fn gap_bound_below_every_gap(seed in any::<u64>(), x in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = per(&[3]);
            let v = random_potential(&p, 1.0, &mut rng);
            let e = eigenvalues(&assemble(&v, &[x]).unwrap()).unwrap();
            let bound = gap_from_discriminant(discriminant(&e), 1, v.sup_norm(), 3);
            prop_assert!(min_gap(&e).0 >= bound * (1.0 - 1e-9));
        }
    }
}
