//! Spectral projections onto parameter sets, spectral-measure quadrature and
//! density bounds, root counting along the last quasi-momentum axis, and the
//! projection/measure checks of a finite-depth construction.

use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{assemble, derivative_matrix};
use crate::certify::GoodSetCertificate;
use crate::error::{Error, Result};
use crate::hierarchy::{chain_table, good_chain, HierarchyState};
use crate::lattice::{FiberGrid, Period};
use crate::linalg::{inner, norm2};
use crate::potential::PeriodicPotential;
use crate::scalar::e2pi;
use crate::spectral::{eigensystem, eigenvalues};

/// Cells per work chunk; partial results are merged in chunk order, so
/// reductions do not depend on the number of worker threads.
const CHUNK: usize = 64;

// ---------------------------------------------------------------------------
// parameter sets

/// A subset of `V × {1..P}` sampled on a fiber grid; `mask[cell * P + ℓ - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    grid: FiberGrid,
    mask: Vec<bool>,
}

impl ParamSet {
    pub fn new(grid: FiberGrid, mask: Vec<bool>) -> Result<Self> {
        let expected = grid.len() * grid.period().size();
        if mask.len() != expected {
            return Err(Error::ShapeMismatch { expected, got: mask.len() });
        }
        Ok(Self { grid, mask })
    }

    pub fn full(grid: &FiberGrid) -> Self {
        Self { mask: vec![true; grid.len() * grid.period().size()], grid: grid.clone() }
    }

    pub fn empty(grid: &FiberGrid) -> Self {
        Self { mask: vec![false; grid.len() * grid.period().size()], grid: grid.clone() }
    }

    pub fn from_certificate(cert: &GoodSetCertificate) -> Result<Self> {
        Self::new(FiberGrid::new(&cert.period, &cert.resolution)?, cert.mask.clone())
    }

    pub fn grid(&self) -> &FiberGrid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, cell: usize, band0: usize) -> bool {
        self.mask[cell * self.grid.period().size() + band0]
    }

    /// Marked fraction with `|V × {1..P}| = 1`.
    pub fn measure(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    pub fn complement(&self) -> Self {
        Self { grid: self.grid.clone(), mask: self.mask.iter().map(|m| !m).collect() }
    }

    pub fn is_subset_of(&self, other: &ParamSet) -> bool {
        self.grid == other.grid && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    /// Run lengths of alternating values starting with `first`.
    pub fn to_rle(&self) -> RleMask {
        let mut runs = Vec::new();
        let mut current = self.mask[0];
        let mut len = 0usize;
        for &m in &self.mask {
            if m == current {
                len += 1;
            } else {
                runs.push(len);
                current = m;
                len = 1;
            }
        }
        runs.push(len);
        RleMask { period: self.grid.period().clone(), res: self.grid.res().to_vec(), first: self.mask[0], runs }
    }

    pub fn from_rle(rle: &RleMask) -> Result<Self> {
        let grid = FiberGrid::new(&rle.period, &rle.res)?;
        let mut mask = Vec::with_capacity(grid.len() * rle.period.size());
        let mut value = rle.first;
        for &r in &rle.runs {
            mask.extend(std::iter::repeat(value).take(r));
            value = !value;
        }
        Self::new(grid, mask)
    }
}

/// Run-length encoded serialization of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RleMask {
    pub period: Period,
    pub res: Vec<usize>,
    pub first: bool,
    pub runs: Vec<usize>,
}

impl Serialize for ParamSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rle().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rle = RleMask::deserialize(d)?;
        ParamSet::from_rle(&rle).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// lattice vectors

/// A finitely supported vector on `Z^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeVector {
    dim: usize,
    entries: Vec<(Vec<i64>, Complex<f64>)>,
}

impl LatticeVector {
    pub fn new(dim: usize, entries: Vec<(Vec<i64>, Complex<f64>)>) -> Result<Self> {
        if let Some((n, _)) = entries.iter().find(|(n, _)| n.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: n.len() });
        }
        Ok(Self { dim, entries })
    }

    /// The unit vector at site `n`.
    pub fn delta(n: &[i64]) -> Self {
        Self { dim: n.len(), entries: vec![(n.to_vec(), Complex::new(1.0, 0.0))] }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(Vec<i64>, Complex<f64>)] {
        &self.entries
    }

    pub fn ell1(&self) -> f64 {
        self.entries.iter().map(|(_, c)| c.norm()).sum()
    }

    pub fn ell2(&self) -> f64 {
        self.entries.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest `|n_j|` over the support.
    pub fn radius(&self) -> i64 {
        self.entries.iter().flat_map(|(n, _)| n.iter().map(|c| c.abs())).max().unwrap_or(0)
    }

    /// Fiber transform `φ̂_x(t) = Σ_n φ(n) e((t + x)·n)` on `B_p`.
    pub fn fiber(&self, p: &Period, x: &[f64]) -> Vec<Complex<f64>> {
        (0..p.size())
            .map(|k| {
                let t: Vec<f64> =
                    p.unflatten(k).iter().zip(p.comps()).zip(x).map(|((&kj, &pj), &xj)| kj as f64 / pj as f64 + xj).collect();
                self.entries.iter().fold(Complex::zero(), |acc, (n, c)| {
                    let phase: f64 = t.iter().zip(n).map(|(tj, &nj)| (tj * nj as f64).rem_euclid(1.0)).sum();
                    acc + c * e2pi(phase)
                })
            })
            .collect()
    }
}

fn check_grid(v: &PeriodicPotential<f64>, grid: &FiberGrid, phi: &LatticeVector) -> Result<()> {
    if grid.period() != v.period() {
        return Err(Error::GridMismatch("parameter set and potential have different periods".into()));
    }
    if phi.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: phi.dim() });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// projections

/// A vector held as sampled fiber components `ĝ_x ∈ ℓ²(B_p)`, one per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberVector {
    pub grid: FiberGrid,
    pub fibers: Vec<Vec<Complex<f64>>>,
}

impl FiberVector {
    /// Samples the fiber transform of a lattice vector.
    pub fn from_lattice(phi: &LatticeVector, grid: &FiberGrid) -> Self {
        let p = grid.period();
        let fibers = (0..grid.len()).into_par_iter().map(|c| phi.fiber(p, &grid.point(c))).collect();
        Self { grid: grid.clone(), fibers }
    }

    /// Quadrature inner product `Σ_x w ⟨f_x, g_x⟩` (exact for trigonometric
    /// polynomials resolved by the grid).
    pub fn inner(&self, other: &FiberVector) -> Complex<f64> {
        let w = self.grid.cell_weight();
        self.fibers.iter().zip(&other.fibers).fold(Complex::zero(), |acc, (a, b)| acc + inner(a, b)) * w
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// Largest sampled `|ĝ_x(t)|`.
    pub fn sup(&self) -> f64 {
        self.fibers.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &FiberVector) -> Self {
        let fibers = self
            .fibers
            .iter()
            .zip(&other.fibers)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Self { grid: self.grid.clone(), fibers }
    }

    /// Inverse transform `g(n) = Σ_x w Σ_t ĝ_x(t) e(-(t + x)·n)` at `sites`.
    pub fn to_lattice(&self, sites: &[Vec<i64>]) -> Vec<Complex<f64>> {
        let p = self.grid.period();
        let w = self.grid.cell_weight();
        sites
            .par_iter()
            .map(|n| {
                let mut acc = Complex::zero();
                for (c, f) in self.fibers.iter().enumerate() {
                    let x = self.grid.point(c);
                    for (k, &val) in f.iter().enumerate() {
                        let phase: f64 = p
                            .unflatten(k)
                            .iter()
                            .zip(p.comps())
                            .zip(&x)
                            .zip(n)
                            .map(|(((&kj, &pj), &xj), &nj)| ((kj as f64 / pj as f64 + xj) * nj as f64).rem_euclid(1.0))
                            .sum();
                        acc += val * e2pi(-phase);
                    }
                }
                acc * w
            })
            .collect()
    }
}

/// `Q_A φ`: per fiber, expand `φ̂_x` in the eigenbasis of `Ĥ_x` and keep the
/// marked band terms.
pub fn project(v: &PeriodicPotential<f64>, phi: &LatticeVector, set: &ParamSet) -> Result<FiberVector> {
    let grid = set.grid();
    check_grid(v, grid, phi)?;
    let p = v.period().size();
    let fibers = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let x = grid.point(c);
            let f = phi.fiber(v.period(), &x);
            let mut out = vec![Complex::zero(); p];
            if (0..p).any(|l| set.contains(c, l)) {
                let es = eigensystem(&assemble(v, &x)?)?;
                for (l, psi) in es.vectors.iter().enumerate() {
                    if set.contains(c, l) {
                        let coef = inner(psi, &f);
                        for (o, &s) in out.iter_mut().zip(psi) {
                            *o += coef * s;
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FiberVector { grid: grid.clone(), fibers })
}

/// `P^{3/2} |A|^{1/2} ‖f̂‖∞`, the operator bound on `‖Q_A f‖`.
pub fn projection_bound(p: usize, set_measure: f64, sup_transform: f64) -> f64 {
    (p as f64).powf(1.5) * set_measure.sqrt() * sup_transform
}

// ---------------------------------------------------------------------------
// spectral measures

/// Uniform energy bins on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl EnergyBins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo < hi) || count == 0 {
            return Err(Error::BinRangeError { lo, hi });
        }
        Ok(Self { lo, hi, count })
    }

    /// Bins on the spectral window `[-2d - ‖V‖∞, 2d + ‖V‖∞]`.
    pub fn spectral_window(d: usize, sup_norm: f64, count: usize) -> Result<Self> {
        let r = 2.0 * d as f64 + sup_norm;
        Self::new(-r, r, count)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.count).map(|i| self.lo + i as f64 * self.width()).collect()
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.lo <= lo && self.hi >= hi
    }

    fn index(&self, e: f64) -> usize {
        (((e - self.lo) / self.width()).floor().max(0.0) as usize).min(self.count - 1)
    }

    /// Adds `mass` at `e`, spread uniformly over `[e - half, e + half]`.
    fn deposit(&self, masses: &mut [f64], e: f64, half: f64, mass: f64) {
        if half <= 0.0 {
            masses[self.index(e)] += mass;
            return;
        }
        let (a, b) = (e - half, e + half);
        let (ia, ib) = (self.index(a), self.index(b));
        if ia == ib {
            masses[ia] += mass;
            return;
        }
        let w = self.width();
        let density = mass / (b - a);
        let mut placed = 0.0;
        for (i, m) in masses.iter_mut().enumerate().take(ib).skip(ia) {
            let hi = self.lo + (i + 1) as f64 * w;
            let lo = if i == ia { a } else { hi - w };
            let part = density * (hi - lo);
            *m += part;
            placed += part;
        }
        // remainder keeps the deposited mass exact
        masses[ib] += mass - placed;
    }
}

/// How a fiber sample's mass is distributed over energy bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// All mass in the bin containing `E(x, ℓ)`.
    Point,
    /// Mass spread over the linearized band range of the sample cell,
    /// `E ± Σ_j |∂_{x_j} E| h_j / 2`.
    #[default]
    Linear,
}

/// Which stage, vector and set a histogram describes.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Provenance {
    pub stage: Option<usize>,
    pub vector: String,
    pub set: String,
}

/// Binned spectral measure of a vector restricted to a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureHistogram {
    pub bins: EnergyBins,
    pub masses: Vec<f64>,
    pub total: f64,
    /// Largest single-sample mass; one such sample may land in either of two
    /// adjacent bins, which bounds the quadrature error per bin.
    pub max_sample_mass: f64,
    pub assignment: Assignment,
    pub provenance: Provenance,
}

impl MeasureHistogram {
    pub fn densities(&self) -> Vec<f64> {
        let w = self.bins.width();
        self.masses.iter().map(|m| m / w).collect()
    }

    /// `Σ_bins |mass - ∫_bin ρ|` against an exact cumulative distribution.
    pub fn l1_error_against(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let edges = self.bins.edges();
        self.masses.iter().enumerate().map(|(i, m)| (m - (cdf(edges[i + 1]) - cdf(edges[i]))).abs()).sum()
    }
}

/// One quadrature sample: energy, spreading half width, mass.
#[derive(Debug, Clone, Copy)]
struct Sample {
    energy: f64,
    half: f64,
    mass: f64,
}

fn histogram_from_samples(
    bins: EnergyBins,
    cells: Vec<Vec<Sample>>,
    assignment: Assignment,
    provenance: Provenance,
) -> MeasureHistogram {
    let partials: Vec<(Vec<f64>, f64)> = cells
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut m = vec![0.0; bins.count];
            let mut biggest = 0.0f64;
            for s in chunk.iter().flatten() {
                let half = if assignment == Assignment::Linear { s.half } else { 0.0 };
                bins.deposit(&mut m, s.energy, half, s.mass);
                biggest = biggest.max(s.mass);
            }
            (m, biggest)
        })
        .collect();
    let mut masses = vec![0.0; bins.count];
    let mut max_sample_mass = 0.0f64;
    for (m, b) in partials {
        for (acc, v) in masses.iter_mut().zip(m) {
            *acc += v;
        }
        max_sample_mass = max_sample_mass.max(b);
    }
    let total = masses.iter().sum();
    MeasureHistogram { bins, masses, total, max_sample_mass, assignment, provenance }
}

/// `∂_{x_j} E = ⟨ψ, ∂_{x_j}Ĥ ψ⟩` for every direction.
pub fn band_velocities(p: &Period, x: &[f64], psi: &[Complex<f64>]) -> Result<Vec<f64>> {
    (0..p.dim())
        .map(|j| Ok(derivative_matrix(p, x, j)?.iter().zip(psi).map(|(d, c)| d * c.norm_sqr()).sum()))
        .collect()
}

fn spread_half_width(grid: &FiberGrid, velocities: &[f64]) -> f64 {
    velocities.iter().zip(grid.torus_res()).map(|(v, n)| v.abs() / (2.0 * n as f64)).sum()
}

/// Spectral measure of `φ` restricted to `set`: every marked `(x, ℓ)` adds
/// `w |⟨ψ(x,ℓ), φ̂_x⟩|²` at `E(x, ℓ)`, with `w` the cell weight, so the full
/// set carries `‖φ‖²`.
pub fn spectral_measure(
    v: &PeriodicPotential<f64>,
    phi: &LatticeVector,
    set: &ParamSet,
    bins: EnergyBins,
    assignment: Assignment,
) -> Result<MeasureHistogram> {
    let grid = set.grid();
    check_grid(v, grid, phi)?;
    let r = 2.0 * v.dim() as f64 + v.sup_norm();
    if !bins.covers(-r, r) {
        return Err(Error::BinRangeError { lo: -r, hi: r });
    }
    let p = v.period();
    let w = grid.cell_weight();
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let x = grid.point(c);
            if !(0..p.size()).any(|l| set.contains(c, l)) {
                return Ok(Vec::new());
            }
            let f = phi.fiber(p, &x);
            let es = eigensystem(&assemble(v, &x)?)?;
            let mut out = Vec::new();
            for (l, psi) in es.vectors.iter().enumerate() {
                if set.contains(c, l) {
                    let vel = band_velocities(p, &x, psi)?;
                    out.push(Sample {
                        energy: es.values[l],
                        half: spread_half_width(grid, &vel),
                        mass: w * inner(psi, &f).norm_sqr(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(histogram_from_samples(bins, cells, assignment, Provenance::default()))
}

/// Density of states of the free operator on `Z`: `1/(π √(4 - E²))`.
pub fn free_dos_1d(e: f64) -> f64 {
    if e.abs() >= 2.0 {
        0.0
    } else {
        1.0 / (std::f64::consts::PI * (4.0 - e * e).sqrt())
    }
}

/// Cumulative distribution of [`free_dos_1d`].
pub fn free_dos_1d_cdf(e: f64) -> f64 {
    0.5 + (e.clamp(-2.0, 2.0) / 2.0).asin() / std::f64::consts::PI
}

/// Constants of the density bound `4 (C₁ ‖φ‖₁)² / γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityConstants {
    /// ℓ¹ bound on the fiber eigenvectors of the set.
    pub c1: f64,
    /// `‖φ‖₁`.
    pub ell1: f64,
    /// Velocity lower bound on the set; `None` if uncertified.
    pub gamma: Option<f64>,
}

/// Outcome of [`density_bound_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub bound: f64,
    pub slack: f64,
    pub densities: Vec<f64>,
    pub max_density: f64,
    /// First bin exceeding the bound.
    pub offending_bin: Option<usize>,
    pub pass: bool,
}

/// Checks `mass / width ≤ 4 (C₁ ‖φ‖₁)² / γ + slack` in every bin; the slack is
/// two samples' worth of mass per bin width.
pub fn density_bound_check(hist: &MeasureHistogram, consts: &DensityConstants) -> Result<DensityReport> {
    let gamma = consts
        .gamma
        .filter(|g| *g >= 0.0 && !g.is_nan())
        .ok_or_else(|| Error::MissingCertificate("velocity lower bound γ".into()))?;
    let bound = if gamma == 0.0 { f64::INFINITY } else { 4.0 * (consts.c1 * consts.ell1).powi(2) / gamma };
    let slack = 2.0 * hist.max_sample_mass / hist.bins.width();
    let densities = hist.densities();
    let offending_bin = densities.iter().position(|&d| d > bound + slack);
    Ok(DensityReport {
        bound,
        slack,
        max_density: densities.iter().copied().fold(0.0, f64::max),
        densities,
        offending_bin,
        pass: offending_bin.is_none(),
    })
}

/// Histogram CSV with columns `bin_lo,bin_hi,mass,density,bound,pass`.
pub fn histogram_csv(hist: &MeasureHistogram, report: Option<&DensityReport>) -> String {
    let edges = hist.bins.edges();
    let mut out = String::from("bin_lo,bin_hi,mass,density,bound,pass\n");
    for (i, m) in hist.masses.iter().enumerate() {
        let density = m / hist.bins.width();
        let (bound, pass) = match report {
            Some(r) => (r.bound, density <= r.bound + r.slack),
            None => (f64::INFINITY, true),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            crate::format::num(edges[i]),
            crate::format::num(edges[i + 1]),
            crate::format::num(*m),
            crate::format::num(density),
            crate::format::num(bound),
            pass
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// root counting

/// Scan points per fiber dimension.
pub const ROOT_SCAN_FACTOR: usize = 64;
/// Bisection stops once the bracket is narrower than this.
pub const ROOT_TOL: f64 = 1e-12;
/// A band minimum of `|E(x) - E|` below this without a sign change is a tangency.
pub const TANGENCY_TOL: f64 = 1e-9;

/// Quasi-momenta `x_d ∈ [0, 1/p_d)` with `E ∈ σ(Ĥ_{(x′, x_d)})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootCount {
    pub count: usize,
    pub roots: Vec<f64>,
    /// `2 p_1 ⋯ p_{d-1}`.
    pub bound: usize,
    /// A near-zero dip without sign change was seen; `count` is then a lower bound.
    pub tangency: bool,
}

fn det_sign_and_dist(v: &PeriodicPotential<f64>, x_prime: &[f64], t: f64, e: f64) -> Result<(f64, f64)> {
    let mut x = x_prime.to_vec();
    x.push(t);
    let ev = eigenvalues(&assemble(v, &x)?)?;
    let sign = ev.iter().map(|l| (l - e).signum()).product::<f64>();
    let dist = ev.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min);
    Ok((sign * dist, dist))
}

/// Counts the roots of `x_d ↦ det(Ĥ_{(x′, x_d)} - E)` on `[0, 1/p_d)` by sign
/// changes on a `64 P` point scan refined by bisection.
pub fn root_count(v: &PeriodicPotential<f64>, x_prime: &[f64], e: f64) -> Result<RootCount> {
    let p = v.period();
    let d = p.dim();
    if x_prime.len() + 1 != d {
        return Err(Error::DimensionMismatch { expected: d - 1, got: x_prime.len() });
    }
    let len = 1.0 / p.comp(d - 1) as f64;
    let m = ROOT_SCAN_FACTOR * p.size();
    let h = len / m as f64;
    let samples = (0..m)
        .into_par_iter()
        .map(|i| det_sign_and_dist(v, x_prime, i as f64 * h, e))
        .collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    let mut tangency = false;
    for i in 0..m {
        let (a, b) = (samples[i].0, samples[(i + 1) % m].0);
        let t0 = i as f64 * h;
        if a == 0.0 {
            roots.push(t0);
            continue;
        }
        if b != 0.0 && a.signum() != b.signum() {
            let (mut lo, mut hi, mut flo) = (t0, t0 + h, a);
            while hi - lo > ROOT_TOL {
                let mid = 0.5 * (lo + hi);
                let fm = det_sign_and_dist(v, x_prime, mid, e)?.0;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push((0.5 * (lo + hi)).rem_euclid(len));
            continue;
        }
        // discrete local minimum of the distance without a sign change
        let prev = samples[(i + m - 1) % m].1;
        let here = samples[i].1;
        let next = samples[(i + 1) % m].1;
        if here <= prev && here <= next && here < 1e-3 {
            let (mut lo, mut hi) = (t0 - h, t0 + h);
            for _ in 0..100 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if det_sign_and_dist(v, x_prime, m1, e)?.1 < det_sign_and_dist(v, x_prime, m2, e)?.1 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            if det_sign_and_dist(v, x_prime, 0.5 * (lo + hi), e)?.1 < TANGENCY_TOL {
                tangency = true;
            }
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    Ok(RootCount { count: roots.len(), roots, bound: 2 * p.transverse_size(), tangency })
}

// ---------------------------------------------------------------------------
// construction-level checks

/// Stage-`m` fiber coefficients `⟨ψ^m(x, ℓ), φ̂_x⟩`, indexed by flat point.
fn stage_coefficients(state: &HierarchyState, m: usize, phi: &LatticeVector) -> Result<Vec<Complex<f64>>> {
    let st = state.stage(m)?;
    let rows: Vec<Vec<Complex<f64>>> = st
        .survey
        .rows
        .par_iter()
        .map(|row| {
            let f = phi.fiber(&st.period, &row.x);
            row.vectors.iter().map(|psi| inner(psi, &f)).collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Report of [`projection_cascade_check`] for one test vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeEntry {
    pub norm: f64,
    pub sup_transform: f64,
    /// `‖(I - P_{j,j}) φ‖`.
    pub defect: f64,
    /// `P_j^{3/2} |complement|^{1/2} ‖φ̂‖∞`.
    pub defect_bound: f64,
    /// Whether `defect ≤ 2 η_j P_j² ‖φ̂‖∞` (reported, not enforced).
    pub within_nominal: bool,
    /// `‖(P_{k+1,j} - P_{k,j}) φ‖` for `k = j..K-1`.
    pub differences: Vec<f64>,
    /// `δ_k ‖φ‖` for the same `k`.
    pub difference_bounds: Vec<f64>,
    /// `2 max d(ψ^{k+1}, ψ^k) ‖φ‖`, the tracking-controlled bound.
    pub tracking_bounds: Vec<f64>,
    /// `⟨φ, P_{K,j} φ⟩` and `⟨φ, P_{K,j+1} φ⟩` (when `j < K`).
    pub quadratic_forms: (f64, Option<f64>),
    pub pass: bool,
}

/// Report of [`projection_cascade_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeReport {
    pub j: usize,
    pub depth: usize,
    pub chain_measure: f64,
    /// Chains from stage `j` continue inside the chain set of stage `j + 1`.
    pub mask_nested: Option<bool>,
    pub entries: Vec<CascadeEntry>,
    pub pass: bool,
}

/// Projection checks along the chains of stage `j` up to depth `K` for a
/// family of test vectors (operator-norm statements are only tested on the
/// family, never proven).
pub fn projection_cascade_check(
    state: &HierarchyState,
    j: usize,
    depth: usize,
    tests: &[LatticeVector],
) -> Result<CascadeReport> {
    let chains = chain_table(state, j, depth)?;
    let base = state.stage(j)?;
    let mask = good_chain(state, j, depth)?;
    let chain_measure = crate::hierarchy::mask_measure(&mask);
    let w = base.grid.cell_weight();
    let pj = base.period.size() as f64;

    // nesting of chain sets at the next stage
    let (mask_nested, upper_chains) = if j < depth {
        let upper = good_chain(state, j + 1, depth)?;
        let nested = chains.iter().all(|c| upper[c[1]]);
        (Some(nested), Some(chain_table(state, j + 1, depth)?))
    } else {
        (None, None)
    };

    let mut entries = Vec::new();
    for phi in tests {
        let coeffs: Vec<Vec<Complex<f64>>> =
            (j..=depth).map(|m| stage_coefficients(state, m, phi)).collect::<Result<_>>()?;
        let fv = FiberVector::from_lattice(phi, &base.grid);
        let norm = fv.norm();
        let sup_transform = fv.sup();

        let defect = (coeffs[0]
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .map(|(c, _)| c.norm_sqr())
            .sum::<f64>()
            * w)
            .sqrt();
        let defect_bound = projection_bound(base.period.size(), 1.0 - chain_measure, sup_transform);
        let within_nominal = defect <= 2.0 * base.schedule.eta * pj * pj * sup_transform;

        let mut differences = Vec::new();
        let mut difference_bounds = Vec::new();
        let mut tracking_bounds = Vec::new();
        for k in j..depth {
            let fine = state.stage(k + 1)?;
            let coarse = state.stage(k)?;
            let table = fine.tracking.as_ref().ok_or_else(|| Error::ChainBroken(format!("stage {} untracked", k + 1)))?;
            let shifts = crate::lattice::coset_shifts(&coarse.period, &fine.period)?;
            let fp = fine.period.size();
            let mut acc = 0.0;
            let mut max_dist = 0.0f64;
            for chain in &chains {
                let pt = chain[k + 1 - j];
                let rec = table.accepted_record(pt).ok_or_else(|| Error::ChainBroken(format!("stage {} point {pt}", k + 1)))?;
                let row = &fine.survey.rows[pt / fp];
                let psi = &row.vectors[pt % fp];
                let shift = shifts
                    .iter()
                    .find(|s| s.steps() == rec.shift.as_slice())
                    .ok_or_else(|| Error::CosetMismatch("recorded shift not found".into()))?;
                let coarse_psi = &coarse.survey.rows[rec.coarse_cell].vectors[rec.coarse_band - 1];
                let emb = crate::hierarchy::embed_eigenvector(coarse_psi, &coarse.period, shift, &fine.period)?;
                let f = phi.fiber(&fine.period, &row.x);
                let (a, b) = (inner(psi, &f), inner(&emb, &f));
                let diff: Vec<Complex<f64>> = psi.iter().zip(&emb).map(|(x, y)| a * x - b * y).collect();
                acc += norm2(&diff).powi(2);
                max_dist = max_dist.max(rec.distance);
            }
            differences.push((acc * w).sqrt());
            difference_bounds.push(coarse.schedule.delta * norm);
            tracking_bounds.push(2.0 * max_dist * norm);
        }

        let last = coeffs.last().unwrap();
        let q_j = chains.iter().map(|c| last[*c.last().unwrap()].norm_sqr()).sum::<f64>() * w;
        let q_next = upper_chains.as_ref().map(|ch| ch.iter().map(|c| last[*c.last().unwrap()].norm_sqr()).sum::<f64>() * w);
        let forms_ok = q_next.is_none_or(|q| q_j <= q * (1.0 + 1e-12) + 1e-15);
        let pass = defect <= defect_bound * (1.0 + 1e-12) + 1e-15
            && differences.iter().zip(&difference_bounds).all(|(d, b)| d <= b)
            && forms_ok;
        entries.push(CascadeEntry {
            norm,
            sup_transform,
            defect,
            defect_bound,
            within_nominal,
            differences,
            difference_bounds,
            tracking_bounds,
            quadratic_forms: (q_j, q_next),
            pass,
        });
    }
    let pass = entries.iter().all(|e| e.pass) && mask_nested.unwrap_or(true);
    Ok(CascadeReport { j, depth, chain_measure, mask_nested, entries, pass })
}

/// Report of [`measure_decomposition_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub depth: usize,
    /// `μ_j` for `j = 1..=K`, all evaluated with `H^K`.
    pub measures: Vec<MeasureHistogram>,
    pub density: Vec<DensityReport>,
    /// Largest `μ_{j-1}(bin) - μ_j(bin)`.
    pub max_decrease: f64,
    pub monotone: bool,
    /// `|μ_1 + Σ (μ_j - μ_{j-1}) - μ_K|` summed over bins.
    pub telescoping_error: f64,
    pub pass: bool,
}

/// Slack on the monotonicity of the stage measures.
pub const MONOTONE_SLACK: f64 = 1e-6;

/// Stage measures `μ_j` of `φ` at depth `K`: chains from stage `j`, evaluated
/// with the stage-`K` fiber data.
pub fn measure_decomposition_check(
    state: &HierarchyState,
    phi: &LatticeVector,
    depth: usize,
    bins: EnergyBins,
    assignment: Assignment,
) -> Result<DecompositionReport> {
    let top = state.stage(depth)?;
    let v = state.potential(depth)?;
    let r = 2.0 * v.dim() as f64 + v.sup_norm();
    if !bins.covers(-r, r) {
        return Err(Error::BinRangeError { lo: -r, hi: r });
    }
    let coeffs = stage_coefficients(state, depth, phi)?;
    let w = top.grid.cell_weight();
    let tp = top.period.size();
    let half: Vec<f64> = top
        .survey
        .rows
        .par_iter()
        .map(|row| {
            row.vectors
                .iter()
                .map(|psi| Ok(spread_half_width(&top.grid, &band_velocities(&top.period, &row.x, psi)?)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut measures = Vec::new();
    let mut density = Vec::new();
    for j in 1..=depth {
        let chains = chain_table(state, j, depth)?;
        let mut cells: Vec<Vec<Sample>> = vec![Vec::new(); top.grid.len()];
        let mut points: Vec<usize> = chains.iter().map(|c| *c.last().unwrap()).collect();
        points.sort_unstable();
        for pt in points {
            cells[pt / tp].push(Sample {
                energy: top.survey.rows[pt / tp].eigenvalues[pt % tp],
                half: half[pt],
                mass: w * coeffs[pt].norm_sqr(),
            });
        }
        let prov = Provenance { stage: Some(j), vector: "test".into(), set: format!("chains from stage {j} to {depth}") };
        let hist = histogram_from_samples(bins, cells, assignment, prov);
        let sj = state.stage(j)?;
        let consts = DensityConstants {
            c1: (sj.period.size() as f64).sqrt() + 2.0 * sj.schedule.delta.min(1.0).powi(8),
            ell1: phi.ell1(),
            gamma: Some(sj.schedule.gamma / 2.0),
        };
        density.push(density_bound_check(&hist, &consts)?);
        measures.push(hist);
    }
    let mut max_decrease = f64::NEG_INFINITY;
    for pair in measures.windows(2) {
        for (a, b) in pair[0].masses.iter().zip(&pair[1].masses) {
            max_decrease = max_decrease.max(a - b);
        }
    }
    if measures.len() < 2 {
        max_decrease = 0.0;
    }
    let monotone = max_decrease <= MONOTONE_SLACK;
    let mut telescoped = measures[0].masses.clone();
    for pair in measures.windows(2) {
        for (t, (a, b)) in telescoped.iter_mut().zip(pair[0].masses.iter().zip(&pair[1].masses)) {
            *t += b - a;
        }
    }
    let telescoping_error =
        telescoped.iter().zip(&measures.last().unwrap().masses).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let pass = monotone && density.iter().all(|d| d.pass);
    Ok(DecompositionReport { depth, measures, density, max_decrease, monotone, telescoping_error, pass })
}

/// Report of [`velocity_stability_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityReport {
    pub j: usize,
    pub k: usize,
    pub points: usize,
    pub min_velocity: f64,
    /// `γ_j / 2`.
    pub threshold: f64,
    pub slack: f64,
    /// Largest `|v_k - v_j| - 8π d(ψ_k, ψ_j)` over single tracking steps.
    pub max_excess: f64,
    pub pass: bool,
}

/// Stage-`k` velocity at the end of the chain starting at stage-`j` point `pt`.
pub fn chain_velocity(state: &HierarchyState, j: usize, pt: usize, k: usize) -> Result<f64> {
    let mask = good_chain(state, j, k)?;
    if !mask.get(pt).copied().unwrap_or(false) {
        return Err(Error::ChainBroken(format!("point {pt} of stage {j} is not in the chain set")));
    }
    let chain = crate::hierarchy::resolve_chain(state, j, pt, k)?;
    let st = state.stage(k)?;
    let p = st.period.size();
    let end = *chain.points.last().unwrap();
    Ok(st.survey.rows[end / p].velocities[end % p])
}

/// Checks `|∂_{x_d} E^k| ≥ γ_j / 2` at the chained points.
pub fn velocity_stability_check(state: &HierarchyState, j: usize, k: usize) -> Result<VelocityReport> {
    let chains = chain_table(state, j, k)?;
    let gamma = state.stage(j)?.schedule.gamma;
    let mut min_velocity = f64::INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    let mut slack = 0.0;
    for m in j + 1..=k {
        let st = state.stage(m)?;
        if let Some(t) = &st.tracking {
            slack += 8.0 * std::f64::consts::PI * t.vector_slack;
        }
    }
    for chain in &chains {
        for (i, &pt) in chain.iter().enumerate() {
            let m = j + i;
            let st = state.stage(m)?;
            let p = st.period.size();
            let vel = st.survey.rows[pt / p].velocities[pt % p];
            if m == k {
                min_velocity = min_velocity.min(vel.abs());
            }
            if i > 0 {
                let rec = st.tracking.as_ref().and_then(|t| t.accepted_record(pt)).ok_or_else(|| {
                    Error::ChainBroken(format!("stage {m} point {pt} is not tracked"))
                })?;
                let coarse = state.stage(m - 1)?;
                let cv = coarse.survey.rows[rec.coarse_cell].velocities[rec.coarse_band - 1];
                max_excess = max_excess.max((vel - cv).abs() - 8.0 * std::f64::consts::PI * rec.distance);
            }
        }
    }
    if chains.is_empty() {
        min_velocity = f64::NAN;
    }
    if k == j {
        max_excess = 0.0;
    }
    let threshold = gamma / 2.0;
    let pass = chains.is_empty() || min_velocity >= threshold - slack;
    Ok(VelocityReport { j, k, points: chains.len(), min_velocity, threshold, slack, max_excess, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::HierarchyOptions;
    use crate::lattice::make_period_tower;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn period(c: &[i64]) -> Period {
        Period::new(c).unwrap()
    }

    fn random_potential(p: &Period, amp: f64, rng: &mut ChaCha8Rng) -> PeriodicPotential<f64> {
        let cell = (0..p.size()).map(|_| rng.gen_range(-amp..amp)).collect();
        PeriodicPotential::from_cell(p, cell).unwrap()
    }

    fn random_vector(d: usize, r: i64, rng: &mut ChaCha8Rng) -> LatticeVector {
        let entries = crate::hierarchy::lattice_box(d, r)
            .into_iter()
            .map(|n| (n, Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            .collect();
        LatticeVector::new(d, entries).unwrap()
    }

    fn demo_state(zero_layer: bool) -> HierarchyState {
        let tower = make_period_tower(&[vec![2], vec![4]]).unwrap();
        let v1 = PeriodicPotential::from_cell(tower.stage(1), vec![0.3, -0.3]).unwrap();
        let opts = HierarchyOptions { torus_res: vec![512], eta_override: vec![], with_theory: false };
        let mut st = HierarchyState::new(tower.clone(), v1, opts).unwrap();
        let seed = if zero_layer {
            PeriodicPotential::zero(tower.stage(2))
        } else {
            PeriodicPotential::from_fn(tower.stage(2), |n| (std::f64::consts::PI * n[0] as f64 / 2.0).cos()).unwrap()
        };
        st.extend(&seed).unwrap();
        st
    }

    #[test]
    fn rle_round_trip() {
        let grid = FiberGrid::uniform(&period(&[2]), 5).unwrap();
        let mask = vec![true, true, false, true, false, false, false, true, true, true];
        let set = ParamSet::new(grid, mask).unwrap();
        let rle = set.to_rle();
        assert_eq!(rle.runs, vec![2, 1, 1, 3, 3]);
        let json = serde_json::to_string(&set).unwrap();
        let back: ParamSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
        assert!((set.measure() + set.complement().measure() - 1.0).abs() < 1e-15);
        assert!(serde_json::from_str::<ParamSet>(&json.replace("\"first\"", "\"extra\":1,\"first\"")).is_err());
    }

    #[test]
    fn full_projection_reproduces_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = period(&[2, 1]);
        let v = random_potential(&p, 0.7, &mut rng);
        let phi = random_vector(2, 1, &mut rng);
        let grid = FiberGrid::new(&p, &[4, 8]).unwrap();
        let full = project(&v, &phi, &ParamSet::full(&grid)).unwrap();
        let direct = FiberVector::from_lattice(&phi, &grid);
        assert!(full.sub(&direct).norm() <= 1e-8 * phi.ell2());
        // Parseval and inverse transform on the support
        assert!((direct.norm() - phi.ell2()).abs() < 1e-12);
        let sites: Vec<Vec<i64>> = phi.entries().iter().map(|(n, _)| n.clone()).collect();
        let back = full.to_lattice(&sites);
        for (b, (_, c)) in back.iter().zip(phi.entries()) {
            assert!((b - c).norm() < 1e-10);
        }
        let empty = project(&v, &phi, &ParamSet::empty(&grid)).unwrap();
        assert_eq!(empty.norm(), 0.0);
    }

    #[test]
    fn complement_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = period(&[3]);
        let v = random_potential(&p, 1.0, &mut rng);
        let phi = random_vector(1, 2, &mut rng);
        let grid = FiberGrid::uniform(&p, 16).unwrap();
        let mask = (0..grid.len() * 3).map(|_| rng.gen_bool(0.4)).collect();
        let a = ParamSet::new(grid.clone(), mask).unwrap();
        let qa = project(&v, &phi, &a).unwrap();
        let qc = project(&v, &phi, &a.complement()).unwrap();
        let direct = FiberVector::from_lattice(&phi, &grid);
        let sum = FiberVector {
            grid: grid.clone(),
            fibers: qa.fibers.iter().zip(&qc.fibers).map(|(x, y)| x.iter().zip(y).map(|(a, b)| a + b).collect()).collect(),
        };
        assert!(sum.sub(&direct).norm() < 1e-12);
        assert!(qa.inner(&qc).norm() < 1e-12);
    }

    #[test]
    fn projection_bound_example() {
        assert!((projection_bound(2, 0.5, 1.0) - 2.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn projections_bounded_and_monotone(seed in 0u64..10_000, frac in 0.05f64..0.95) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = period(&[2]);
            let v = random_potential(&p, 1.0, &mut rng);
            let phi = random_vector(1, 1, &mut rng);
            let grid = FiberGrid::uniform(&p, 8).unwrap();
            let big: Vec<bool> = (0..grid.len() * 2).map(|_| rng.gen_bool(frac)).collect();
            let small: Vec<bool> = big.iter().map(|&b| b && rng.gen_bool(0.5)).collect();
            let a = ParamSet::new(grid.clone(), small).unwrap();
            let b = ParamSet::new(grid.clone(), big).unwrap();
            let qa = project(&v, &phi, &a).unwrap();
            let qb = project(&v, &phi, &b).unwrap();
            let sup = FiberVector::from_lattice(&phi, &grid).sup();
            prop_assert!(qa.norm() <= projection_bound(2, a.measure(), sup) + 1e-12);
            prop_assert!(qa.norm() <= qb.norm() + 1e-12);
        }
    }

    #[test]
    fn free_dos_matches_arcsine_density() {
        let p = period(&[1]);
        let v = PeriodicPotential::zero(&p);
        let grid = FiberGrid::uniform(&p, 4096).unwrap();
        let bins = EnergyBins::new(-2.0, 2.0, 256).unwrap();
        let phi = LatticeVector::delta(&[0]);
        let hist = spectral_measure(&v, &phi, &ParamSet::full(&grid), bins, Assignment::Linear).unwrap();
        assert!((hist.total - 1.0).abs() < 1e-8);
        assert!(hist.l1_error_against(free_dos_1d_cdf) <= 1e-2);
        // density at the centre
        let mid = hist.densities()[128];
        assert!((mid - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-3, "{mid}");
        let point = spectral_measure(&v, &phi, &ParamSet::full(&grid), bins, Assignment::Point).unwrap();
        assert!((point.total - 1.0).abs() < 1e-8);
        let zero = spectral_measure(&v, &LatticeVector::zero(1), &ParamSet::full(&grid), bins, Assignment::Linear).unwrap();
        assert!(zero.masses.iter().all(|&m| m == 0.0));
        assert!(matches!(
            spectral_measure(&v, &phi, &ParamSet::full(&grid), EnergyBins::new(-1.0, 1.0, 8).unwrap(), Assignment::Point),
            Err(Error::BinRangeError { .. })
        ));
    }

    #[test]
    fn parseval_on_periodic_potential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = period(&[2, 3]);
        let v = random_potential(&p, 0.5, &mut rng);
        let phi = random_vector(2, 1, &mut rng);
        let grid = FiberGrid::new(&p, &[3, 2]).unwrap();
        let bins = EnergyBins::spectral_window(2, v.sup_norm(), 64).unwrap();
        let hist = spectral_measure(&v, &phi, &ParamSet::full(&grid), bins, Assignment::Linear).unwrap();
        assert!((hist.total - phi.ell2().powi(2)).abs() <= 1e-8 * phi.ell2().powi(2));
        assert!(hist.masses.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn free_density_bound_with_velocity_cut() {
        let p = period(&[1]);
        let v = PeriodicPotential::zero(&p);
        let grid = FiberGrid::uniform(&p, 4096).unwrap();
        let gamma = 2.0;
        let mask: Vec<bool> = (0..grid.len())
            .map(|c| (4.0 * std::f64::consts::PI * (std::f64::consts::TAU * grid.point(c)[0]).sin()).abs() >= gamma)
            .collect();
        let set = ParamSet::new(grid, mask).unwrap();
        let bins = EnergyBins::new(-2.0, 2.0, 256).unwrap();
        let phi = LatticeVector::delta(&[0]);
        for a in [Assignment::Point, Assignment::Linear] {
            let hist = spectral_measure(&v, &phi, &set, bins, a).unwrap();
            let rep = density_bound_check(&hist, &DensityConstants { c1: 1.0, ell1: 1.0, gamma: Some(gamma) }).unwrap();
            assert!(rep.pass, "{:?}", rep.offending_bin);
            // the true density here is 2/|v| ≤ 2/γ
            assert!(rep.max_density <= 2.0 / gamma + rep.slack);
        }
        let hist = spectral_measure(&v, &phi, &set, bins, Assignment::Point).unwrap();
        let vac = density_bound_check(&hist, &DensityConstants { c1: 1.0, ell1: 1.0, gamma: Some(0.0) }).unwrap();
        assert!(vac.pass && vac.bound.is_infinite());
        assert!(matches!(
            density_bound_check(&hist, &DensityConstants { c1: 1.0, ell1: 1.0, gamma: None }),
            Err(Error::MissingCertificate(_))
        ));
        let csv = histogram_csv(&hist, None);
        assert_eq!(csv.lines().next().unwrap(), "bin_lo,bin_hi,mass,density,bound,pass");
        assert_eq!(csv.lines().count(), 257);
    }

    #[test]
    fn root_count_examples() {
        let p = period(&[1]);
        let v = PeriodicPotential::zero(&p);
        let rc = root_count(&v, &[], 0.0).unwrap();
        assert_eq!(rc.count, 2);
        assert_eq!(rc.bound, 2);
        assert!((rc.roots[0] - 0.25).abs() < 1e-11 && (rc.roots[1] - 0.75).abs() < 1e-11);
        assert_eq!(root_count(&v, &[], 5.0).unwrap().count, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p2 = period(&[2, 1]);
        for _ in 0..20 {
            let v = random_potential(&p2, 0.5, &mut rng);
            let rc = root_count(&v, &[rng.gen::<f64>() / 2.0], rng.gen_range(-4.5..4.5)).unwrap();
            assert!(rc.count <= 4);
        }
    }

    #[test]
    fn band_edge_is_tangent() {
        // E = 2 is attained only at x = 0 where the free band has zero slope
        let v = PeriodicPotential::zero(&period(&[1]));
        let rc = root_count(&v, &[], 2.0).unwrap();
        assert!(rc.count <= 2);
        assert!(rc.count == 1 || rc.tangency);
    }

    #[test]
    fn zero_layer_cascade_is_exact() {
        let st = demo_state(true);
        let rep = projection_cascade_check(&st, 1, 2, &[LatticeVector::delta(&[0])]).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.entries[0].differences[0] < 1e-12);
        let vel = velocity_stability_check(&st, 1, 2).unwrap();
        assert!(vel.pass && vel.max_excess <= 1e-12);
    }

    #[test]
    fn demo_cascade_and_decomposition() {
        let st = demo_state(false);
        let tests = [LatticeVector::delta(&[0]), LatticeVector::new(1, vec![(vec![0], Complex::new(0.5, 0.0)), (vec![1], Complex::new(0.0, 0.5))]).unwrap()];
        let rep = projection_cascade_check(&st, 1, 2, &tests).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.mask_nested, Some(true));
        for e in &rep.entries {
            assert!(e.differences[0] <= e.tracking_bounds[0] + 1e-12);
            assert!(e.differences[0] < st.stages[0].schedule.delta);
        }
        let bins = EnergyBins::spectral_window(1, st.potential(2).unwrap().sup_norm(), 128).unwrap();
        let dec = measure_decomposition_check(&st, &tests[0], 2, bins, Assignment::Linear).unwrap();
        assert!(dec.pass, "{:?} {:?}", dec.max_decrease, dec.density.iter().map(|d| (d.max_density, d.bound)).collect::<Vec<_>>());
        assert!(dec.telescoping_error == 0.0);
        let k1 = measure_decomposition_check(&st, &tests[0], 1, bins, Assignment::Linear).unwrap();
        assert_eq!(k1.measures.len(), 1);
        let vel = velocity_stability_check(&st, 1, 2).unwrap();
        assert!(vel.pass && vel.max_excess <= 1e-9, "{vel:?}");
        let outside = good_chain(&st, 1, 2).unwrap().iter().position(|&m| !m).unwrap();
        assert!(matches!(chain_velocity(&st, 1, outside, 2), Err(Error::ChainBroken(_))));
    }
}
