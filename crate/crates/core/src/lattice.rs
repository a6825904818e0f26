//! Periods, dual lattices and coset bookkeeping.
//!
//! All arithmetic on dual points is exact: a point stores integer numerators
//! together with the period it is written over, and equality compares
//! cross-multiplied numerators. Floating-point coordinates are derived views.
//!
//! The canonical order of the dual lattice `B_p` is lexicographic in the
//! numerators with the last coordinate running fastest. Every matrix and
//! vector index in the crate refers to this order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice period `p = (p_1, …, p_d)` with all components positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct Period {
    comps: Vec<usize>,
    size: usize,
}

impl Period {
    pub fn new(comps: &[i64]) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::Empty("period"));
        }
        if comps.iter().any(|&c| c < 1) {
            return Err(Error::NonPositivePeriod(comps.to_vec()));
        }
        let comps: Vec<usize> = comps
            .iter()
            .map(|&c| usize::try_from(c).map_err(|_| Error::Overflow))
            .collect::<Result<_>>()?;
        let mut size: usize = 1;
        for &c in &comps {
            size = size.checked_mul(c).ok_or(Error::Overflow)?;
        }
        // keep every index representable as i64 as well
        if i64::try_from(size).is_err() {
            return Err(Error::Overflow);
        }
        Ok(Self { comps, size })
    }

    /// Period `(1, …, 1)` in dimension `d`.
    pub fn unit(d: usize) -> Self {
        Self { comps: vec![1; d.max(1)], size: 1 }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comps(&self) -> &[usize] {
        &self.comps
    }

    pub fn comp(&self, j: usize) -> usize {
        self.comps[j]
    }

    /// `P = p_1 ⋯ p_d`, the fiber dimension.
    pub fn size(&self) -> usize {
        self.size
    }

    /// `p_1 ⋯ p_{d-1}` (1 in dimension one).
    pub fn transverse_size(&self) -> usize {
        self.comps[..self.dim() - 1].iter().product()
    }

    pub fn divides(&self, other: &Period) -> bool {
        self.dim() == other.dim() && self.comps.iter().zip(&other.comps).all(|(a, b)| b % a == 0)
    }

    /// Multi-index of the flat canonical index `idx` (last coordinate fastest).
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            out[j] = idx % self.comps[j];
            idx /= self.comps[j];
        }
        out
    }

    /// Flat canonical index of a multi-index with entries reduced mod `p_j`.
    pub fn flatten(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.comps)
            .fold(0, |acc, (&m, &p)| acc * p + m % p)
    }

    /// Flat index of a lattice site `n ∈ Z^d` reduced into the cell.
    pub fn cell_index(&self, n: &[i64]) -> usize {
        let reduced: Vec<usize> = n
            .iter()
            .zip(&self.comps)
            .map(|(&v, &p)| v.rem_euclid(p as i64) as usize)
            .collect();
        self.flatten(&reduced)
    }
}

impl TryFrom<Vec<i64>> for Period {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        Period::new(&v)
    }
}

impl From<Period> for Vec<i64> {
    fn from(p: Period) -> Self {
        p.comps.iter().map(|&c| c as i64).collect()
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.comps.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// An increasing period sequence: `p^ℓ_j` divides `p^{ℓ+1}_j` for all `ℓ, j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodTower {
    periods: Vec<Period>,
}

impl PeriodTower {
    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.periods[0].dim()
    }

    /// Period of stage `j` (1-based).
    pub fn stage(&self, j: usize) -> &Period {
        &self.periods[j - 1]
    }
}

/// Validates a period sequence and builds the tower.
pub fn make_period_tower(periods: &[Vec<i64>]) -> Result<PeriodTower> {
    if periods.is_empty() {
        return Err(Error::Empty("period tower"));
    }
    let parsed: Vec<Period> = periods.iter().map(|p| Period::new(p)).collect::<Result<_>>()?;
    let d = parsed[0].dim();
    for p in &parsed {
        if p.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
        }
    }
    for (step, w) in parsed.windows(2).enumerate() {
        for j in 0..d {
            if w[1].comp(j) % w[0].comp(j) != 0 {
                return Err(Error::DivisibilityViolation { step: step + 1, coord: j + 1 });
            }
        }
    }
    Ok(PeriodTower { periods: parsed })
}

/// A point `(k_1/p_1, …, k_d/p_d)` of a dual lattice, `0 ≤ k_j < p_j`.
#[derive(Debug, Clone, Eq, Serialize)]
pub struct DualPoint {
    num: Vec<usize>,
    den: Vec<usize>,
}

impl DualPoint {
    pub fn new(num: Vec<usize>, period: &Period) -> Result<Self> {
        if num.len() != period.dim() {
            return Err(Error::DimensionMismatch { expected: period.dim(), got: num.len() });
        }
        if num.iter().zip(period.comps()).any(|(k, p)| k >= p) {
            return Err(Error::PreconditionViolated(format!(
                "numerators {num:?} out of range for period {period}"
            )));
        }
        Ok(Self { num, den: period.comps().to_vec() })
    }

    pub fn zero(period: &Period) -> Self {
        Self { num: vec![0; period.dim()], den: period.comps().to_vec() }
    }

    pub fn numerators(&self) -> &[usize] {
        &self.num
    }

    pub fn denominators(&self) -> &[usize] {
        &self.den
    }

    pub fn dim(&self) -> usize {
        self.num.len()
    }

    /// Floating-point view of the coordinates.
    pub fn coords(&self) -> Vec<f64> {
        self.num.iter().zip(&self.den).map(|(&k, &p)| k as f64 / p as f64).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&k| k == 0)
    }

    /// Rewrites the point over a multiple of its period.
    pub fn lift(&self, fine: &Period) -> Result<Self> {
        let mut num = Vec::with_capacity(self.dim());
        for (j, (&k, &p)) in self.num.iter().zip(&self.den).enumerate() {
            let f = fine.comp(j);
            if f % p != 0 {
                return Err(Error::DivisibilityViolation { step: 1, coord: j + 1 });
            }
            num.push(k * (f / p));
        }
        Ok(Self { num, den: fine.comps().to_vec() })
    }

    /// Sum modulo one, written over `fine` (which both operands must divide).
    pub fn add_mod1(&self, other: &DualPoint, fine: &Period) -> Result<Self> {
        let a = self.lift(fine)?;
        let b = other.lift(fine)?;
        let num = a
            .num
            .iter()
            .zip(&b.num)
            .zip(fine.comps())
            .map(|((x, y), p)| (x + y) % p)
            .collect();
        Ok(Self { num, den: fine.comps().to_vec() })
    }

    /// Difference modulo one over `fine`.
    pub fn sub_mod1(&self, other: &DualPoint, fine: &Period) -> Result<Self> {
        let a = self.lift(fine)?;
        let b = other.lift(fine)?;
        let num = a
            .num
            .iter()
            .zip(&b.num)
            .zip(fine.comps())
            .map(|((x, y), p)| (x + p - y) % p)
            .collect();
        Ok(Self { num, den: fine.comps().to_vec() })
    }

    /// `-k mod 1`.
    pub fn neg_mod1(&self) -> Self {
        let num = self.num.iter().zip(&self.den).map(|(&k, &p)| (p - k) % p).collect();
        Self { num, den: self.den.clone() }
    }
}

impl PartialEq for DualPoint {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self
                .num
                .iter()
                .zip(&self.den)
                .zip(other.num.iter().zip(&other.den))
                .all(|((&a, &b), (&c, &d))| (a as u128) * (d as u128) == (c as u128) * (b as u128))
    }
}

impl fmt::Display for DualPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (k, p)) in self.num.iter().zip(&self.den).enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if *k == 0 {
                write!(f, "0")?;
            } else {
                let g = num_integer::gcd(*k, *p);
                write!(f, "{}/{}", k / g, p / g)?;
            }
        }
        write!(f, ")")
    }
}

/// The dual lattice `B_p` in canonical order.
pub fn dual_lattice(p: &Period) -> Vec<DualPoint> {
    (0..p.size())
        .map(|idx| DualPoint { num: p.unflatten(idx), den: p.comps().to_vec() })
        .collect()
}

/// An element of `S_{j+1}`: numerators `s_k < p_fine_k / p_coarse_k` over `p_fine`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CosetShift {
    point: DualPoint,
    /// Shift measured in units of the coarse period, i.e. the `s_k` themselves.
    steps: Vec<usize>,
}

impl CosetShift {
    pub fn point(&self) -> &DualPoint {
        &self.point
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn coords(&self) -> Vec<f64> {
        self.point.coords()
    }
}

fn refinement_ratio(p_coarse: &Period, p_fine: &Period) -> Result<Vec<usize>> {
    if p_coarse.dim() != p_fine.dim() {
        return Err(Error::DimensionMismatch { expected: p_coarse.dim(), got: p_fine.dim() });
    }
    (0..p_fine.dim())
        .map(|j| {
            if p_fine.comp(j) % p_coarse.comp(j) != 0 {
                Err(Error::DivisibilityViolation { step: 1, coord: j + 1 })
            } else {
                Ok(p_fine.comp(j) / p_coarse.comp(j))
            }
        })
        .collect()
}

/// All coset shifts `S` with `B_fine = ⋃_s (B_coarse + s)`, in lexicographic order.
pub fn coset_shifts(p_coarse: &Period, p_fine: &Period) -> Result<Vec<CosetShift>> {
    let ratio = refinement_ratio(p_coarse, p_fine)?;
    let count: usize = ratio.iter().product();
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let mut rem = idx;
        let mut steps = vec![0; ratio.len()];
        for j in (0..ratio.len()).rev() {
            steps[j] = rem % ratio[j];
            rem /= ratio[j];
        }
        out.push(CosetShift {
            point: DualPoint { num: steps.clone(), den: p_fine.comps().to_vec() },
            steps,
        });
    }
    Ok(out)
}

/// Unique decomposition `k = k' + s (mod 1)` with `k' ∈ B_coarse`, `s ∈ S`.
pub fn coset_decompose(k: &DualPoint, p_coarse: &Period) -> Result<(CosetShift, DualPoint)> {
    let fine = Period::new(&k.den.iter().map(|&v| v as i64).collect::<Vec<_>>())?;
    let ratio = refinement_ratio(p_coarse, &fine)?;
    let steps: Vec<usize> = k.num.iter().zip(&ratio).map(|(&n, &r)| n % r).collect();
    let coarse_num: Vec<usize> = k.num.iter().zip(&ratio).map(|(&n, &r)| n / r).collect();
    Ok((
        CosetShift {
            point: DualPoint { num: steps.clone(), den: fine.comps().to_vec() },
            steps,
        },
        DualPoint { num: coarse_num, den: p_coarse.comps().to_vec() },
    ))
}

/// Canonical index in `B_fine` of `k' + s` for `k' ∈ B_coarse` (flat index) and a shift.
pub fn embed_index(coarse_idx: usize, p_coarse: &Period, shift: &CosetShift, p_fine: &Period) -> usize {
    let multi = p_coarse.unflatten(coarse_idx);
    let fine: Vec<usize> = multi
        .iter()
        .zip(shift.steps())
        .enumerate()
        .map(|(j, (&k, &s))| k * (p_fine.comp(j) / p_coarse.comp(j)) + s)
        .collect();
    p_fine.flatten(&fine)
}

/// The fundamental domain `V = ∏_j [0, 1/p_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FundamentalDomain {
    pub upper: Vec<f64>,
    /// `P`, so that the volume is exactly `1/P`.
    pub inverse_volume: usize,
}

impl FundamentalDomain {
    pub fn volume(&self) -> f64 {
        1.0 / self.inverse_volume as f64
    }
}

pub fn fundamental_domain(p: &Period) -> FundamentalDomain {
    FundamentalDomain {
        upper: p.comps().iter().map(|&c| 1.0 / c as f64).collect(),
        inverse_volume: p.size(),
    }
}

/// Cell-centred sampling grid on the fundamental domain of a period.
///
/// Axis `j` carries `res_j` cells of width `1/(res_j p_j)`; cell `i` is sampled
/// at its centre `(i + 1/2)/(res_j p_j)`. Cells are ordered lexicographically,
/// last axis fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiberGrid {
    period: Period,
    res: Vec<usize>,
}

impl FiberGrid {
    pub fn new(period: &Period, res: &[usize]) -> Result<Self> {
        if res.len() != period.dim() {
            return Err(Error::DimensionMismatch { expected: period.dim(), got: res.len() });
        }
        if res.iter().any(|&r| r == 0) {
            return Err(Error::GridMismatch("zero resolution".into()));
        }
        Ok(Self { period: period.clone(), res: res.to_vec() })
    }

    pub fn uniform(period: &Period, res: usize) -> Result<Self> {
        Self::new(period, &vec![res; period.dim()])
    }

    pub fn period(&self) -> &Period {
        &self.period
    }

    pub fn res(&self) -> &[usize] {
        &self.res
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells per unit length along each axis, `res_j p_j`.
    pub fn torus_res(&self) -> Vec<usize> {
        self.res.iter().zip(self.period.comps()).map(|(r, p)| r * p).collect()
    }

    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.res.len()];
        for j in (0..self.res.len()).rev() {
            out[j] = idx % self.res[j];
            idx /= self.res[j];
        }
        out
    }

    pub fn flatten(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.res).fold(0, |acc, (&m, &r)| acc * r + m)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx)
            .iter()
            .zip(self.torus_res())
            .map(|(&i, n)| (i as f64 + 0.5) / n as f64)
            .collect()
    }

    /// Per-cell measure with `|V × {1..P}| = 1` normalization, i.e. `1/∏(res_j p_j)`.
    pub fn cell_weight(&self) -> f64 {
        1.0 / self.torus_res().iter().product::<usize>() as f64
    }

    /// Grid on the coarser domain with the same spacing; `None` unless the
    /// refinement is exact.
    pub fn coarsen(&self, p_coarse: &Period) -> Option<FiberGrid> {
        if !p_coarse.divides(&self.period) {
            return None;
        }
        let res = self
            .res
            .iter()
            .enumerate()
            .map(|(j, r)| r * self.period.comp(j) / p_coarse.comp(j))
            .collect();
        Some(FiberGrid { period: p_coarse.clone(), res })
    }

    /// Index of the coarse cell containing `x + s` for fine cell `idx`.
    pub fn shifted_into(&self, idx: usize, shift: &CosetShift, coarse: &FiberGrid) -> Result<usize> {
        if coarse.torus_res() != self.torus_res() {
            return Err(Error::GridMismatch("grids have different spacing".into()));
        }
        let multi = self.unflatten(idx);
        let shifted: Vec<usize> = multi
            .iter()
            .zip(shift.steps())
            .zip(&self.res)
            .map(|((&i, &s), &r)| i + s * r)
            .collect();
        for (v, r) in shifted.iter().zip(coarse.res()) {
            if v >= r {
                return Err(Error::CosetMismatch("shifted cell leaves the coarse domain".into()));
            }
        }
        Ok(coarse.flatten(&shifted))
    }

    /// Inverse of [`FiberGrid::shifted_into`]: the fine cell and shift index whose
    /// image is coarse cell `coarse_idx`.
    pub fn preimage(&self, coarse_idx: usize, coarse: &FiberGrid, shifts: &[CosetShift]) -> Option<(usize, usize)> {
        let multi = coarse.unflatten(coarse_idx);
        let steps: Vec<usize> = multi.iter().zip(&self.res).map(|(&c, &r)| c / r).collect();
        let fine: Vec<usize> = multi.iter().zip(&self.res).map(|(&c, &r)| c % r).collect();
        let s_idx = shifts.iter().position(|s| s.steps() == steps.as_slice())?;
        Some((self.flatten(&fine), s_idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn per(v: &[i64]) -> Period {
        Period::new(v).unwrap()
    }

    #[test]
    fn tower_examples() {
        let t = make_period_tower(&[vec![2], vec![4], vec![8]]).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 1);
        assert_eq!(
            make_period_tower(&[vec![2], vec![3]]),
            Err(Error::DivisibilityViolation { step: 1, coord: 1 })
        );
        let t2 = make_period_tower(&[vec![2, 1], vec![4, 3], vec![8, 3]]).unwrap();
        assert_eq!(t2.dim(), 2);
        assert_eq!(
            make_period_tower(&[vec![2, 2], vec![4, 4], vec![8, 6]]),
            Err(Error::DivisibilityViolation { step: 2, coord: 2 })
        );
    }

    #[test]
    fn tower_rejects_bad_input() {
        assert_eq!(make_period_tower(&[]), Err(Error::Empty("period tower")));
        assert!(matches!(make_period_tower(&[vec![0]]), Err(Error::NonPositivePeriod(_))));
        assert_eq!(Period::new(&[i64::MAX, i64::MAX]), Err(Error::Overflow));
    }

    #[test]
    fn dual_lattice_examples() {
        let b = dual_lattice(&per(&[2]));
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].coords(), vec![0.5]);
        assert_eq!(dual_lattice(&per(&[1])).len(), 1);
        let b23 = dual_lattice(&per(&[2, 3]));
        let got: Vec<String> = b23.iter().map(|k| k.to_string()).collect();
        assert_eq!(got, ["(0,0)", "(0,1/3)", "(0,2/3)", "(1/2,0)", "(1/2,1/3)", "(1/2,2/3)"]);
    }

    #[test]
    fn coset_shift_examples() {
        let s = coset_shifts(&per(&[2]), &per(&[6])).unwrap();
        let got: Vec<String> = s.iter().map(|c| c.point().to_string()).collect();
        assert_eq!(got, ["(0)", "(1/6)", "(1/3)"]);
        assert_eq!(coset_shifts(&per(&[2]), &per(&[2])).unwrap().len(), 1);
        let s2 = coset_shifts(&per(&[1, 1]), &per(&[2, 2])).unwrap();
        let got: Vec<String> = s2.iter().map(|c| c.point().to_string()).collect();
        assert_eq!(got, ["(0,0)", "(0,1/2)", "(1/2,0)", "(1/2,1/2)"]);
        assert!(matches!(
            coset_shifts(&per(&[4]), &per(&[6])),
            Err(Error::DivisibilityViolation { .. })
        ));
    }

    #[test]
    fn coset_decompose_examples() {
        let p6 = per(&[6]);
        let p2 = per(&[2]);
        let k = DualPoint::new(vec![4], &p6).unwrap();
        let (s, kc) = coset_decompose(&k, &p2).unwrap();
        assert_eq!(s.point().to_string(), "(1/6)");
        assert_eq!(kc.to_string(), "(1/2)");
        let (s0, k0) = coset_decompose(&DualPoint::zero(&p6), &p2).unwrap();
        assert!(s0.point().is_zero() && k0.is_zero());
        let (s5, k5) = coset_decompose(&DualPoint::new(vec![5], &p6).unwrap(), &p2).unwrap();
        assert_eq!(s5.point().to_string(), "(1/3)");
        assert_eq!(k5.to_string(), "(1/2)");
    }

    #[test]
    fn exact_equality_across_periods() {
        let a = DualPoint::new(vec![1], &per(&[2])).unwrap();
        let b = DualPoint::new(vec![3], &per(&[6])).unwrap();
        let c = DualPoint::new(vec![2], &per(&[6])).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fundamental_domain_examples() {
        let v = fundamental_domain(&per(&[2]));
        assert_eq!(v.upper, vec![0.5]);
        assert_eq!(v.volume(), 0.5);
        assert_eq!(fundamental_domain(&per(&[1])).volume(), 1.0);
        let v23 = fundamental_domain(&per(&[2, 3]));
        assert_eq!(v23.inverse_volume, 6);
        assert_eq!(v23.upper, vec![0.5, 1.0 / 3.0]);
    }

    #[test]
    fn grid_shift_round_trip() {
        let fine = FiberGrid::uniform(&per(&[4, 2]), 3).unwrap();
        let coarse = fine.coarsen(&per(&[2, 1])).unwrap();
        assert_eq!(coarse.res(), &[6, 6]);
        let shifts = coset_shifts(&per(&[2, 1]), &per(&[4, 2])).unwrap();
        let mut seen = vec![false; coarse.len()];
        for idx in 0..fine.len() {
            for (si, s) in shifts.iter().enumerate() {
                let c = fine.shifted_into(idx, s, &coarse).unwrap();
                assert!(!seen[c]);
                seen[c] = true;
                assert_eq!(fine.preimage(c, &coarse, &shifts), Some((idx, si)));
                // same physical point
                let xf = fine.point(idx);
                let xc = coarse.point(c);
                for j in 0..2 {
                    assert!((xf[j] + s.coords()[j] - xc[j]).abs() < 1e-15);
                }
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn refinement() -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
            prop::collection::vec((1i64..5, 1i64..4), 1..=3).prop_map(|v| {
                let coarse: Vec<i64> = v.iter().map(|(c, _)| *c).collect();
                let fine: Vec<i64> = v.iter().map(|(c, r)| c * r).collect();
                (coarse, fine)
            })
        }

        proptest! {
            #[test]
            fn cosets_partition_the_fine_lattice((c, f) in refinement()) {
                let pc = Period::new(&c).unwrap();
                let pf = Period::new(&f).unwrap();
                let mut hit = vec![0usize; pf.size()];
                for s in coset_shifts(&pc, &pf).unwrap() {
                    for k in dual_lattice(&pc) {
                        let sum = k.add_mod1(s.point(), &pf).unwrap();
                        hit[pf.flatten(sum.numerators())] += 1;
                    }
                }
                prop_assert!(hit.iter().all(|&h| h == 1));
            }

            #[test]
            fn decompose_inverts_addition((c, f) in refinement()) {
                let pc = Period::new(&c).unwrap();
                let pf = Period::new(&f).unwrap();
                for (ci, k) in dual_lattice(&pc).into_iter().enumerate() {
                    for s in coset_shifts(&pc, &pf).unwrap() {
                        let sum = k.add_mod1(s.point(), &pf).unwrap();
                        prop_assert_eq!(pf.flatten(sum.numerators()), embed_index(ci, &pc, &s, &pf));
                        let (s2, k2) = coset_decompose(&sum, &pc).unwrap();
                        prop_assert_eq!(&s2, &s);
                        prop_assert_eq!(&k2, &k);
                    }
                }
            }

            #[test]
            fn lattice_size_times_volume_is_one(c in prop::collection::vec(1i64..7, 1..=3)) {
                let p = Period::new(&c).unwrap();
                let v = fundamental_domain(&p);
                prop_assert_eq!(dual_lattice(&p).len(), v.inverse_volume);
                prop_assert!((dual_lattice(&p).len() as f64 * v.volume() - 1.0).abs() < 1e-12);
            }
        }
    }
}
