//! Simplicity certification: Cartan sublevel thresholds, the theoretical
//! gap/velocity pipeline, empirical grid surveys and good-set certificates.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::bloch::{assemble, derivative_matrix, separation_shift, DiagonalProfile};
use crate::error::{Error, Result};
use crate::lattice::{FiberGrid, Period};
use crate::linalg::CMatrix;
use crate::potential::PeriodicPotential;
use crate::spectral::{
    discriminant, eigensystem, g_value, hellmann_feynman, log_discriminant, min_gap, neighbour_gaps,
    resultant_check, RESULTANT_CAP,
};

const E: f64 = std::f64::consts::E;
const TAU: f64 = std::f64::consts::TAU;

/// Smallest grid size accepted by [`sublevel_measure`].
pub const MIN_SUBLEVEL_SAMPLES: usize = 1 << 10;
/// Witness points with `|y| ≤ 1` are scaled to this norm.
pub const WITNESS_FLOOR: f64 = 1.0 + 1e-9;

fn check_cartan_args(y_abs: f64, eps: f64) -> Result<()> {
    if !(y_abs > 1.0) {
        return Err(Error::HypothesisViolation(format!("witness norm |y| = {y_abs} must exceed 1")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::HypothesisViolation(format!("ε = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

/// `log δ = log(ε/(60e³|y|)) · sup_log` for the one-variable estimate.
pub fn cartan_1d_log_threshold(sup_log: f64, y_abs: f64, eps: f64) -> Result<f64> {
    check_cartan_args(y_abs, eps)?;
    if !(sup_log >= 0.0) {
        return Err(Error::HypothesisViolation(format!("log-sup bound {sup_log} must be nonnegative")));
    }
    if sup_log == 0.0 {
        return Ok(0.0);
    }
    Ok((eps / (60.0 * E.powi(3) * y_abs)).ln() * sup_log)
}

/// The one-variable level `δ`: off a set of measure `ε` in `[0,1]`, `|g| > δκ`.
pub fn cartan_1d_threshold(sup_log: f64, y_abs: f64, eps: f64) -> Result<f64> {
    Ok(cartan_1d_log_threshold(sup_log, y_abs, eps)?.exp())
}

/// Inputs of the several-variable estimate: `|f(y)| ≥ κ` and
/// `log sup_{|z| ≤ 4e|y|} |f(z)| ≤ A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CartanBudget {
    pub kappa: f64,
    pub log_sup: f64,
    pub y_abs: f64,
    pub eps: f64,
    pub d: usize,
}

impl CartanBudget {
    pub fn validate(&self) -> Result<()> {
        check_cartan_args(self.y_abs, self.eps)?;
        if !(self.kappa > 0.0) {
            return Err(Error::HypothesisViolation(format!("κ = {} must be positive", self.kappa)));
        }
        if !(self.log_sup >= self.kappa.ln()) {
            return Err(Error::HypothesisViolation(format!(
                "A = {} is below log κ = {}",
                self.log_sup,
                self.kappa.ln()
            )));
        }
        if self.d == 0 {
            return Err(Error::HypothesisViolation("dimension must be positive".into()));
        }
        Ok(())
    }
}

/// `log(κ · (ε/(60e³ d|y|))^{dA})`.
pub fn cartan_nd_log_threshold(b: &CartanBudget) -> Result<f64> {
    b.validate()?;
    let d = b.d as f64;
    if b.log_sup == 0.0 {
        return Ok(b.kappa.ln());
    }
    Ok(b.kappa.ln() + d * b.log_sup * (b.eps / (60.0 * E.powi(3) * d * b.y_abs)).ln())
}

/// `κ · (ε/(60e³ d|y|))^{dA}`; may underflow to zero, use the log form then.
pub fn cartan_nd_threshold(b: &CartanBudget) -> Result<f64> {
    Ok(cartan_nd_log_threshold(b)?.exp())
}

/// Fraction of samples with `value ≤ level`.
pub fn sublevel_measure(values: &[f64], level: f64) -> Result<f64> {
    if values.len() < MIN_SUBLEVEL_SAMPLES {
        return Err(Error::PreconditionViolated(format!(
            "sublevel grid has {} points, need at least {MIN_SUBLEVEL_SAMPLES}",
            values.len()
        )));
    }
    Ok(values.iter().filter(|&&v| v <= level).count() as f64 / values.len() as f64)
}

/// The explicit constant `C = log(max(4π, 5d) · 2^{4ed} · (4d + ‖V‖∞ + 1)^{4e})`.
pub fn log_bound_constant(d: usize, sup_norm: f64) -> f64 {
    let d = d as f64;
    (4.0 * std::f64::consts::PI).max(5.0 * d).ln()
        + 4.0 * E * d * std::f64::consts::LN_2
        + 4.0 * E * (4.0 * d + sup_norm + 1.0).ln()
}

/// Direct bound on `log sup |f|` over `|z| ≤ r`: `P² log(4d e^{2πr} + ‖V‖∞)`.
fn direct_log_sup_f(p: usize, d: usize, sup_norm: f64, r: f64) -> f64 {
    let pp = (p * p) as f64;
    let d = d as f64;
    // log(4d e^{2πr} + V) computed without overflow
    pp * (TAU * r + (4.0 * d + sup_norm * (-TAU * r).exp()).ln())
}

/// Direct bound on `log sup |g|` over `|z| ≤ r` from `|g| = ∏_ℓ |∂_{x_d}P(E_ℓ)|`,
/// `|E| ≤ R = d(1 + e^{2πr}) + ‖V‖∞` and `|∂_{x_d}P(E)| ≤ P · 4π cosh(2πr) · (2R)^{P-1}`.
fn direct_log_sup_g(p: usize, d: usize, sup_norm: f64, r: f64) -> f64 {
    let pf = p as f64;
    let d = d as f64;
    let log_r = TAU * r + (d * (1.0 + (-TAU * r).exp()) + sup_norm * (-TAU * r).exp()).ln();
    let log_cosh = TAU * r + (0.5 * (1.0 + (-2.0 * TAU * r).exp())).ln();
    pf * (pf.ln() + (4.0 * std::f64::consts::PI).ln() + log_cosh + (pf - 1.0) * (std::f64::consts::LN_2 + log_r))
}

/// Every intermediate constant of the theoretical simplicity pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryAudit {
    pub fiber_dim: usize,
    pub d: usize,
    pub sup_norm: f64,
    pub eta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub y: Vec<f64>,
    pub y_abs: f64,
    pub y_scaled: bool,
    pub kappa: f64,
    /// `|f(iy)|` and `|g(iy)|` evaluated through resultants (absent above the size cap).
    pub witness_f: Option<f64>,
    pub witness_g: Option<f64>,
    pub dominance_margin: f64,
    pub a_f_lemma: f64,
    pub a_f_direct: f64,
    #[serde(rename = "A_f")]
    pub a_f: f64,
    pub a_g_lemma: f64,
    pub a_g_direct: f64,
    #[serde(rename = "A_g")]
    pub a_g: f64,
    pub eps: f64,
    pub log_level_f: f64,
    pub log_level_g: f64,
    pub log_delta: f64,
    pub log_gamma: f64,
    /// `c` with `δ = η^c`, and `c / (P² log P)`.
    pub delta_exponent: f64,
    pub delta_exponent_normalized: f64,
    pub gamma_exponent: f64,
}

/// Theoretical gap and velocity levels with the audit trail that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryBounds {
    pub delta: f64,
    pub gamma: f64,
    pub audit: TheoryAudit,
}

/// Runs the Cartan pipeline: witness `iy` from the separation shift (scaled to
/// `|y| > 1` if needed), `κ = 1`, log-sup budgets `A_f`, `A_g`, Cartan levels at
/// `ε = η/2`, then conversion to a gap bound `δ` and a velocity bound `γ`.
///
/// Each budget is the larger of the closed-form constant and a direct bound
/// valid for any radius, so scaling the witness never leaves the budget stale.
pub fn theoretical_simplicity(v: &PeriodicPotential<f64>, eta: f64) -> Result<TheoryBounds> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::HypothesisViolation(format!("η = {eta} must lie in (0, 1/2)")));
    }
    let p = v.period();
    let n = p.size();
    let d = p.dim();
    let sup = v.sup_norm();
    let c = log_bound_constant(d, sup);

    let mut y = separation_shift(p, sup);
    let mut y_abs = y.iter().map(|t| t * t).sum::<f64>().sqrt();
    let y_scaled = y_abs <= 1.0;
    if y_scaled {
        let s = WITNESS_FLOOR / y_abs;
        y.iter_mut().for_each(|t| *t *= s);
        y_abs = y.iter().map(|t| t * t).sum::<f64>().sqrt();
    }
    if !(y_abs > 1.0) {
        return Err(Error::HypothesisViolation("could not place the witness at |y| > 1".into()));
    }
    let dominance_margin = DiagonalProfile::new(p, &y).min_separation() - (d as f64 + sup + 1.0);
    if dominance_margin < 0.0 {
        return Err(Error::HypothesisViolation("diagonal dominance fails at the witness".into()));
    }
    let (witness_f, witness_g) = if n <= RESULTANT_CAP {
        let z: Vec<Complex<f64>> = y.iter().map(|&t| Complex::new(0.0, t)).collect();
        let r = resultant_check(&crate::bloch::assemble_complex(v, &z)?, d - 1)?;
        (Some(r.f_res.norm()), Some(r.g_res.norm()))
    } else {
        (None, None)
    };
    let kappa = 1.0;
    for (name, w) in [("f", witness_f), ("g", witness_g)] {
        if let Some(w) = w {
            if w < kappa {
                return Err(Error::HypothesisViolation(format!("|{name}(iy)| = {w} is below κ = 1")));
            }
        }
    }

    let log_p = (n as f64).ln();
    let nn = n as f64;
    let radius = 4.0 * E * y_abs;
    let a_f_lemma = nn * nn * (4.0 * E * log_p + c);
    let a_f_direct = direct_log_sup_f(n, d, sup, radius);
    let a_f = a_f_lemma.max(a_f_direct);
    let a_g_lemma = nn * (nn + 1.0) * (4.0 * E * log_p + c);
    let a_g_direct = direct_log_sup_g(n, d, sup, radius);
    let a_g = a_g_lemma.max(a_g_direct);

    let eps = eta / 2.0;
    let log_level_f = cartan_nd_log_threshold(&CartanBudget { kappa, log_sup: a_f, y_abs, eps, d })?;
    let log_level_g = cartan_nd_log_threshold(&CartanBudget { kappa, log_sup: a_g, y_abs, eps, d })?;

    let df = d as f64;
    let log_delta = if n == 1 {
        f64::INFINITY
    } else {
        0.5 * log_level_f - 0.5 * nn * nn * (2.0 * df + sup).ln()
    };
    // |∂E| = |∂_{x_d}P| / |∂_E P| with |∂_{x_d}P(E_ℓ)| ≥ |g|/(4d+2‖V‖+1)^{P(P-1)}
    // and |∂_E P(E_ℓ)| = ∏_{j≠ℓ}|E_ℓ - E_j| ≤ (2(2d+‖V‖))^{P-1}
    let log_gamma = log_level_g
        - nn * (nn - 1.0) * (4.0 * df + 2.0 * sup + 1.0).ln()
        - (nn - 1.0) * (2.0 * (2.0 * df + sup)).ln();
    let delta_exponent = log_delta / eta.ln();
    let audit = TheoryAudit {
        fiber_dim: n,
        d,
        sup_norm: sup,
        eta,
        c,
        y,
        y_abs,
        y_scaled,
        kappa,
        witness_f,
        witness_g,
        dominance_margin,
        a_f_lemma,
        a_f_direct,
        a_f,
        a_g_lemma,
        a_g_direct,
        a_g,
        eps,
        log_level_f,
        log_level_g,
        log_delta,
        log_gamma,
        delta_exponent,
        delta_exponent_normalized: if n > 1 { delta_exponent / (nn * nn * log_p) } else { f64::NAN },
        gamma_exponent: log_gamma / eta.ln(),
    };
    Ok(TheoryBounds { delta: log_delta.exp(), gamma: log_gamma.exp(), audit })
}

/// Per-cell spectral data of a grid survey.
#[derive(Debug, Clone, Serialize)]
pub struct SurveyRow {
    pub x: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// `∂_{x_d} E(x, ℓ)`.
    pub velocities: Vec<f64>,
    pub reliable: Vec<bool>,
    pub gap_below: Vec<f64>,
    pub gap_above: Vec<f64>,
    pub min_gap: f64,
    pub f: f64,
    pub log_f: f64,
    /// `None` where some band is degenerate.
    pub g: Option<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<Complex<f64>>>,
}

/// Spectral data over a fiber grid, rows in grid order.
#[derive(Debug, Clone, Serialize)]
pub struct Survey {
    pub grid: FiberGrid,
    pub rows: Vec<SurveyRow>,
}

fn survey_cell(v: &PeriodicPotential<f64>, x: Vec<f64>, keep_vectors: bool) -> Result<SurveyRow> {
    let p = v.period();
    let es = eigensystem(&assemble(v, &x)?)?;
    let vel = hellmann_feynman(&es, &derivative_matrix(p, &x, p.dim() - 1)?)?;
    let gaps = neighbour_gaps(&es.values);
    let g = g_value(&es.values, &vel).ok();
    Ok(SurveyRow {
        min_gap: min_gap(&es.values).0,
        f: discriminant(&es.values),
        log_f: log_discriminant(&es.values),
        g,
        gap_below: gaps.iter().map(|g| g.0).collect(),
        gap_above: gaps.iter().map(|g| g.1).collect(),
        velocities: vel.values,
        reliable: vel.reliable,
        eigenvalues: es.values,
        vectors: if keep_vectors { es.vectors } else { Vec::new() },
        x,
    })
}

/// Surveys every cell centre of `grid`; cells are processed in parallel and
/// gathered in grid order, so the result does not depend on the thread count.
pub fn grid_survey(v: &PeriodicPotential<f64>, grid: &FiberGrid, keep_vectors: bool) -> Result<Survey> {
    if grid.period() != v.period() {
        return Err(Error::GridMismatch("survey grid and potential have different periods".into()));
    }
    let rows = (0..grid.len())
        .into_par_iter()
        .map(|i| survey_cell(v, grid.point(i), keep_vectors))
        .collect::<Result<Vec<_>>>()?;
    Ok(Survey { grid: grid.clone(), rows })
}

/// `ln |f|` at every cell centre (no eigenvectors kept).
pub fn log_discriminant_samples(v: &PeriodicPotential<f64>, grid: &FiberGrid) -> Result<Vec<f64>> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| Ok(log_discriminant(&crate::spectral::eigenvalues(&assemble(v, &grid.point(i))?)?)))
        .collect()
}

/// Largest level `t` among `samples` such that at most `floor(frac · n)`
/// samples lie strictly below `t`.
pub fn lower_quantile(samples: &[f64], frac: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let allowed = ((frac * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[allowed]
}

/// Grid certificate of `δ`-simplicity and velocity `≥ γ` on all but `η` of the
/// parameter space `V × {1..P}`.
#[derive(Debug, Clone, Serialize)]
pub struct GoodSetCertificate {
    pub period: Period,
    pub eta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub resolution: Vec<usize>,
    pub measure_good: f64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<TheoryAudit>,
    /// `mask[cell * P + (ℓ-1)]`.
    #[serde(skip)]
    pub mask: Vec<bool>,
}

impl GoodSetCertificate {
    pub fn is_good(&self, cell: usize, band: usize) -> bool {
        self.mask[cell * self.period.size() + band]
    }
}

/// Builds a certificate from a survey: `η/2` of the cells may fail the gap
/// level, `η/2` of the band points may fail the velocity level.
pub fn good_set_from_survey(survey: &Survey, eta: f64) -> Result<GoodSetCertificate> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::PreconditionViolated(format!("η = {eta} must lie in (0, 1)")));
    }
    let p = survey.grid.period().size();
    let gaps: Vec<f64> = survey.rows.iter().map(|r| r.min_gap).collect();
    let speeds: Vec<f64> = survey
        .rows
        .iter()
        .flat_map(|r| r.velocities.iter().zip(&r.reliable).map(|(v, &ok)| if ok { v.abs() } else { 0.0 }))
        .collect();
    if gaps.iter().any(|g| g.is_nan()) || speeds.iter().any(|s| s.is_nan()) {
        return Err(Error::CertificateFailure("survey contains NaN values".into()));
    }
    let delta = lower_quantile(&gaps, eta / 2.0);
    let gamma = lower_quantile(&speeds, eta / 2.0);
    let mut mask = Vec::with_capacity(speeds.len());
    for &g in &gaps {
        for _ in 0..p {
            let s = speeds[mask.len()];
            mask.push(g >= delta && s >= gamma);
        }
    }
    let measure_good = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
    Ok(GoodSetCertificate {
        period: survey.grid.period().clone(),
        eta,
        delta,
        gamma,
        resolution: survey.grid.res().to_vec(),
        measure_good,
        accepted: measure_good >= 1.0 - eta,
        audit: None,
        mask,
    })
}

/// Surveys `v` at `resolution` cells per axis and certifies the good set.
pub fn good_set(v: &PeriodicPotential<f64>, eta: f64, resolution: &[usize]) -> Result<GoodSetCertificate> {
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::PreconditionViolated("survey resolution must be at least 2 per axis".into()));
    }
    let grid = FiberGrid::new(v.period(), resolution)?;
    good_set_from_survey(&grid_survey(v, &grid, false)?, eta)
}

/// Whether the dominant diagonal at `y` separates all dual-lattice points by
/// at least `d + ‖V‖∞ + 1`.
pub fn diagonal_dominance_at(p: &Period, y: &[f64], sup_norm: f64) -> bool {
    DiagonalProfile::new(p, y).min_separation() >= p.dim() as f64 + sup_norm + 1.0
}

/// [`diagonal_dominance_at`] for the standard separation shift.
pub fn diagonal_dominance_check(p: &Period, sup_norm: f64) -> bool {
    diagonal_dominance_at(p, &separation_shift(p, sup_norm), sup_norm)
}

/// Gershgorin-style check that the complex fiber at `iy` keeps its eigenvalues
/// apart: the off-diagonal mass of every row is below half the diagonal
/// separation minus one.
pub fn gershgorin_separated(m: &CMatrix<f64>) -> bool {
    let n = m.dim();
    let radii: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| m[(i, j)].norm()).sum()).collect();
    for i in 0..n {
        for j in i + 1..n {
            if (m[(i, i)] - m[(j, j)]).norm() < radii[i] + radii[j] + 1.0 {
                return false;
            }
        }
    }
    true
}
