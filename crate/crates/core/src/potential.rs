//! Periodic potential layers and their Fourier coefficients on `B_p`.
//!
//! Normalization: `V̂(k) = (1/P) Σ_n V(n) e(-k·n)`, so that
//! `V(n) = Σ_k V̂(k) e(k·n)`.

use num_complex::Complex;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Period, PeriodTower};
use crate::scalar::{e2pi, Real};

/// Tolerance on the reality condition of coefficient input.
pub const REALITY_TOL: f64 = 1e-10;

/// `k·n mod 1` computed in exact integer arithmetic, then converted.
fn phase_fraction<T: Real>(p: &Period, k: &[usize], n: &[usize]) -> T {
    // common denominator P keeps the sum exact
    let big = p.size();
    let mut acc: usize = 0;
    for j in 0..p.dim() {
        let pj = p.comp(j);
        let term = (k[j] * n[j]) % pj;
        acc = (acc + term * (big / pj)) % big;
    }
    T::from_usize_lossy(acc) / T::from_usize_lossy(big)
}

/// One periodic layer: cell values and Fourier coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicPotential<T> {
    period: Period,
    cell: Vec<T>,
    coeffs: Vec<Complex<T>>,
    sup_norm: T,
}

impl<T: Real> PeriodicPotential<T> {
    pub fn from_cell(period: &Period, cell: Vec<T>) -> Result<Self> {
        let coeffs = fourier_forward(&cell, period)?;
        let sup_norm = cell.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        Ok(Self { period: period.clone(), cell, coeffs, sup_norm })
    }

    pub fn from_coeffs(period: &Period, coeffs: Vec<Complex<T>>) -> Result<Self> {
        let cell = fourier_inverse(&coeffs, period)?;
        let sup_norm = cell.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        Ok(Self { period: period.clone(), cell, coeffs, sup_norm })
    }

    pub fn zero(period: &Period) -> Self {
        let n = period.size();
        Self {
            period: period.clone(),
            cell: vec![T::zero(); n],
            coeffs: vec![Complex::zero(); n],
            sup_norm: T::zero(),
        }
    }

    /// Builds a cell from a function of the site multi-index.
    pub fn from_fn(period: &Period, f: impl Fn(&[usize]) -> T) -> Result<Self> {
        let cell = (0..period.size()).map(|i| f(&period.unflatten(i))).collect();
        Self::from_cell(period, cell)
    }

    pub fn period(&self) -> &Period {
        &self.period
    }

    pub fn dim(&self) -> usize {
        self.period.dim()
    }

    pub fn cell(&self) -> &[T] {
        &self.cell
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    /// `V̂(k)` for a canonical index `k`.
    pub fn coeff(&self, k: usize) -> Complex<T> {
        self.coeffs[k]
    }

    pub fn sup_norm(&self) -> T {
        self.sup_norm
    }

    /// `V(n mod p)` for a site `n ∈ Z^d`.
    pub fn evaluate(&self, n: &[i64]) -> T {
        self.cell[self.period.cell_index(n)]
    }

    /// Periodic extension onto a multiple of the period.
    pub fn embed(&self, fine: &Period) -> Result<Self> {
        if !self.period.divides(fine) {
            return Err(Error::DivisibilityViolation { step: 1, coord: 1 });
        }
        let cell = (0..fine.size())
            .map(|i| {
                let n: Vec<i64> = fine.unflatten(i).iter().map(|&v| v as i64).collect();
                self.evaluate(&n)
            })
            .collect();
        Self::from_cell(fine, cell)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            period: self.period.clone(),
            cell: self.cell.iter().map(|&v| v * s).collect(),
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
            sup_norm: self.sup_norm * s.abs(),
        }
    }

    /// Sum of two layers, embedded into the finer of the two periods.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let (fine, a, b) = if self.period.divides(&other.period) {
            (other.period.clone(), self.embed(&other.period)?, other.clone())
        } else if other.period.divides(&self.period) {
            (self.period.clone(), self.clone(), other.embed(&self.period)?)
        } else {
            return Err(Error::DivisibilityViolation { step: 1, coord: 1 });
        };
        let cell = a.cell.iter().zip(&b.cell).map(|(&x, &y)| x + y).collect();
        Self::from_cell(&fine, cell)
    }
}

/// Forward transform of cell values.
pub fn fourier_forward<T: Real>(cell: &[T], p: &Period) -> Result<Vec<Complex<T>>> {
    let n_pts = p.size();
    if cell.len() != n_pts {
        return Err(Error::ShapeMismatch { expected: n_pts, got: cell.len() });
    }
    let sites: Vec<Vec<usize>> = (0..n_pts).map(|i| p.unflatten(i)).collect();
    let inv = T::one() / T::from_usize_lossy(n_pts);
    Ok((0..n_pts)
        .map(|ki| {
            let k = &sites[ki];
            let sum = sites.iter().zip(cell).fold(Complex::zero(), |acc, (n, &v)| {
                acc + e2pi(-phase_fraction::<T>(p, k, n)) * v
            });
            sum * inv
        })
        .collect())
}

/// Largest violation of `V̂(-k) = conj(V̂(k))`.
pub fn reality_defect<T: Real>(coeffs: &[Complex<T>], p: &Period) -> T {
    let mut worst = T::zero();
    for ki in 0..p.size() {
        let k = p.unflatten(ki);
        let neg: Vec<usize> = k.iter().zip(p.comps()).map(|(&a, &pj)| (pj - a) % pj).collect();
        let nk = p.flatten(&neg);
        worst = worst.max((coeffs[nk] - coeffs[ki].conj()).norm());
    }
    worst
}

/// Inverse transform; rejects coefficients that do not describe a real potential.
pub fn fourier_inverse<T: Real>(coeffs: &[Complex<T>], p: &Period) -> Result<Vec<T>> {
    let n_pts = p.size();
    if coeffs.len() != n_pts {
        return Err(Error::ShapeMismatch { expected: n_pts, got: coeffs.len() });
    }
    let scale = coeffs.iter().fold(T::one(), |m, c| m.max(c.norm()));
    // 1e-10 in double precision; single precision needs the roundoff floor
    let tol = T::lit(REALITY_TOL).max(T::lit(64.0) * T::unit_roundoff() * scale);
    let defect = reality_defect(coeffs, p);
    if defect > tol {
        return Err(Error::NotRealizable { residue: defect.to_f64().unwrap_or(f64::NAN) });
    }
    let sites: Vec<Vec<usize>> = (0..n_pts).map(|i| p.unflatten(i)).collect();
    let mut out = Vec::with_capacity(n_pts);
    for n in &sites {
        let v = sites.iter().zip(coeffs).fold(Complex::<T>::zero(), |acc, (k, &c)| {
            acc + c * e2pi(phase_fraction::<T>(p, k, n))
        });
        if v.im.abs() > tol {
            return Err(Error::NotRealizable { residue: v.im.abs().to_f64().unwrap_or(f64::NAN) });
        }
        out.push(v.re);
    }
    Ok(out)
}

/// A limit-periodic tower truncated at finitely many layers.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialTower<T> {
    tower: PeriodTower,
    layers: Vec<PeriodicPotential<T>>,
}

impl<T: Real> PotentialTower<T> {
    pub fn new(tower: PeriodTower, layers: Vec<PeriodicPotential<T>>) -> Result<Self> {
        if layers.len() > tower.len() {
            return Err(Error::StageOutOfRange { stage: layers.len(), len: tower.len() });
        }
        for (j, layer) in layers.iter().enumerate() {
            if layer.period() != tower.stage(j + 1) {
                return Err(Error::PreconditionViolated(format!(
                    "layer {} has period {} but the tower prescribes {}",
                    j + 1,
                    layer.period(),
                    tower.stage(j + 1)
                )));
            }
        }
        Ok(Self { tower, layers })
    }

    pub fn tower(&self) -> &PeriodTower {
        &self.tower
    }

    pub fn layers(&self) -> &[PeriodicPotential<T>] {
        &self.layers
    }

    /// `ε̄_j = ‖V_j‖∞` per layer.
    pub fn layer_norms(&self) -> Vec<T> {
        self.layers.iter().map(|l| l.sup_norm()).collect()
    }

    pub fn push(&mut self, layer: PeriodicPotential<T>) -> Result<()> {
        let j = self.layers.len() + 1;
        if j > self.tower.len() {
            return Err(Error::StageOutOfRange { stage: j, len: self.tower.len() });
        }
        if layer.period() != self.tower.stage(j) {
            return Err(Error::PreconditionViolated(format!(
                "layer {j} has period {} but the tower prescribes {}",
                layer.period(),
                self.tower.stage(j)
            )));
        }
        self.layers.push(layer);
        Ok(())
    }
}

/// Partial sum `V_1 + ⋯ + V_J` as a `p^J`-periodic potential.
pub fn accumulate<T: Real>(tower: &PotentialTower<T>, stage: usize) -> Result<PeriodicPotential<T>> {
    if stage == 0 || stage > tower.layers.len() {
        return Err(Error::StageOutOfRange { stage, len: tower.layers.len() });
    }
    let fine = tower.tower.stage(stage).clone();
    let mut cell = vec![T::zero(); fine.size()];
    for layer in &tower.layers[..stage] {
        for (i, c) in cell.iter_mut().enumerate() {
            let n: Vec<i64> = fine.unflatten(i).iter().map(|&v| v as i64).collect();
            *c = *c + layer.evaluate(&n);
        }
    }
    PeriodicPotential::from_cell(&fine, cell)
}
