//! The limit-periodic construction at finite depth: schedules, layer scaling,
//! eigenpair tracking between period refinements, good chains, and synthesis
//! of generalized eigenfunctions.

use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{good_set_from_survey, grid_survey, theoretical_simplicity, GoodSetCertificate, Survey};
use crate::error::{Error, Result};
use crate::lattice::{coset_shifts, embed_index, CosetShift, FiberGrid, Period, PeriodTower};
use crate::linalg::{inner, norm1};
use crate::potential::{accumulate, PeriodicPotential, PotentialTower};
use crate::scalar::e2pi;
use crate::spectral::aligned_distance;

/// Stages stop once the scheduled layer size falls below this value.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
/// Required overlap lead of the selected tracking candidate over the runner-up.
pub const MATCH_MARGIN: f64 = 0.5;

/// `η_j = 2^{-j} / P_j²`.
pub fn default_eta(j: usize, fiber_dim: usize) -> f64 {
    0.5f64.powi(j as i32) / (fiber_dim * fiber_dim) as f64
}

/// `ε_{j+1} = min(δ_{j+1}^{10}, γ_j δ_{j+1} / 100)`.
pub fn schedule_next(delta_next: f64, gamma_current: f64) -> f64 {
    delta_next.powi(10).min(gamma_current * delta_next / 100.0)
}

/// Rounding floor for eigenvalues of a fiber matrix of size `p` and norm `h_norm`.
pub fn energy_slack(p: usize, h_norm: f64) -> f64 {
    16.0 * p as f64 * f64::EPSILON * (1.0 + h_norm)
}

/// Rounding floor for eigenvectors separated by a gap `delta`.
pub fn vector_slack(p: usize, h_norm: f64, delta: f64) -> f64 {
    energy_slack(p, h_norm) / delta.min(1.0)
}

/// One inequality of the construction, evaluated.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Check {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, pass: lhs <= rhs }
    }
}

/// Schedule values of one stage; stage 1 has no `ε` rule (its layer is given).
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleEntry {
    pub stage: usize,
    pub fiber_dim: usize,
    pub eta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub eps: f64,
    pub layer_norm: f64,
    /// `log δ` of the theoretical pipeline, for comparison (absent when `η ≥ 1/2`).
    pub log_delta_theory: Option<f64>,
}

/// Match of a stage-`(j+1)` band point with its stage-`j` ancestor.
#[derive(Debug, Clone, Serialize)]
pub struct TrackingRecord {
    pub cell: usize,
    /// 1-based band index at the fine stage.
    pub band: usize,
    pub shift: Vec<usize>,
    pub coarse_cell: usize,
    pub coarse_band: usize,
    pub energy_mismatch: f64,
    pub distance: f64,
    pub overlap: f64,
    pub margin: f64,
    pub accepted: bool,
}

/// Outcome of tracking every point of a stage's good set.
#[derive(Debug, Clone, Serialize)]
pub struct TrackingTable {
    pub stage: usize,
    /// Indexed by `cell * P + (band - 1)`; `None` outside the good set or on failure.
    #[serde(skip)]
    pub records: Vec<Option<TrackingRecord>>,
    pub points: usize,
    pub attempted: usize,
    pub accepted: usize,
    pub ambiguous: usize,
    pub no_candidate: usize,
    pub max_energy_mismatch: f64,
    pub max_distance: f64,
    pub energy_slack: f64,
    pub vector_slack: f64,
}

impl TrackingTable {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.points as f64
    }

    pub fn accepted_record(&self, point: usize) -> Option<&TrackingRecord> {
        self.records[point].as_ref().filter(|r| r.accepted)
    }
}

/// Everything computed for one stage.
#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub schedule: ScheduleEntry,
    pub period: Period,
    pub grid: FiberGrid,
    /// Certificate of the previous partial sum viewed at this period (stage 1:
    /// of the first layer itself); its mask is the domain of the tracking map.
    pub certificate: GoodSetCertificate,
    /// Spectral data of the partial sum through this stage, with eigenvectors.
    #[serde(skip)]
    pub survey: Survey,
    pub tracking: Option<TrackingTable>,
    pub checks: Vec<Check>,
}

/// Grid, schedule and tracking options of a construction.
#[derive(Debug, Clone, Serialize)]
pub struct HierarchyOptions {
    /// Cells per unit length along each axis; must be divisible by every period.
    pub torus_res: Vec<usize>,
    /// Replaces `η_j` for the listed stages.
    pub eta_override: Vec<f64>,
    /// Also run the theoretical pipeline per stage.
    pub with_theory: bool,
}

/// Potentials, schedule, certificates and tracking tables of a construction.
#[derive(Debug, Clone, Serialize)]
pub struct HierarchyState {
    #[serde(skip)]
    pub potentials: PotentialTower<f64>,
    pub options: HierarchyOptions,
    pub stages: Vec<Stage>,
    pub stop_reason: Option<String>,
    pub warnings: Vec<String>,
}

fn stage_grid(p: &Period, torus_res: &[usize]) -> Result<FiberGrid> {
    if torus_res.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: torus_res.len() });
    }
    let res: Vec<usize> = torus_res
        .iter()
        .zip(p.comps())
        .map(|(&n, &pj)| {
            if n % pj != 0 || n / pj < 2 {
                Err(Error::GridMismatch(format!("torus resolution {n} is not a multiple ≥ 2 of period {pj}")))
            } else {
                Ok(n / pj)
            }
        })
        .collect::<Result<_>>()?;
    FiberGrid::new(p, &res)
}

fn stage_eta(opts: &HierarchyOptions, j: usize, fiber_dim: usize) -> f64 {
    opts.eta_override.get(j - 1).copied().unwrap_or_else(|| default_eta(j, fiber_dim))
}

fn theory_log_delta(v: &PeriodicPotential<f64>, eta: f64, enabled: bool) -> Option<f64> {
    if !enabled || !(eta > 0.0 && eta < 0.5) {
        return None;
    }
    theoretical_simplicity(v, eta).ok().map(|t| t.audit.log_delta)
}

impl HierarchyState {
    /// Starts a construction from the first layer.
    pub fn new(tower: PeriodTower, first: PeriodicPotential<f64>, options: HierarchyOptions) -> Result<Self> {
        let potentials = PotentialTower::new(tower, vec![first.clone()])?;
        let p = first.period().clone();
        let grid = stage_grid(&p, &options.torus_res)?;
        let eta = stage_eta(&options, 1, p.size());
        let survey = grid_survey(&first, &grid, true)?;
        let certificate = good_set_from_survey(&survey, eta)?;
        let schedule = ScheduleEntry {
            stage: 1,
            fiber_dim: p.size(),
            eta,
            delta: certificate.delta,
            gamma: certificate.gamma,
            eps: first.sup_norm(),
            layer_norm: first.sup_norm(),
            log_delta_theory: theory_log_delta(&first, eta, options.with_theory),
        };
        let checks = vec![
            Check::le("eta_below_one", eta, 1.0),
            Check { name: "certificate_accepted".into(), lhs: certificate.measure_good, rhs: 1.0 - eta, pass: certificate.accepted },
        ];
        Ok(Self {
            potentials,
            options,
            stages: vec![Stage { schedule, period: p, grid, certificate, survey, tracking: None, checks }],
            stop_reason: None,
            warnings: Vec::new(),
        })
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, j: usize) -> Result<&Stage> {
        self.stages.get(j.wrapping_sub(1)).ok_or(Error::StageOutOfRange { stage: j, len: self.stages.len() })
    }

    /// The partial sum `V_1 + ⋯ + V_j`.
    pub fn potential(&self, j: usize) -> Result<PeriodicPotential<f64>> {
        accumulate(&self.potentials, j)
    }

    /// Appends the next layer `ε_{j+1} · Ṽ / ‖Ṽ‖∞`.
    ///
    /// `δ_{j+1}`, `γ_{j+1}` come from the certificate of the current partial sum
    /// viewed at the new period; `ε_{j+1}` from [`schedule_next`]. A zero seed
    /// gives a zero layer. Once `ε_{j+1}` drops below [`UNDERFLOW_FLOOR`] the
    /// layer is flushed to zero and the construction stops.
    pub fn extend(&mut self, seed: &PeriodicPotential<f64>) -> Result<()> {
        if let Some(reason) = &self.stop_reason {
            return Err(Error::PreconditionViolated(format!("construction stopped: {reason}")));
        }
        let j = self.depth();
        let next = j + 1;
        if next > self.potentials.tower().len() {
            return Err(Error::StageOutOfRange { stage: next, len: self.potentials.tower().len() });
        }
        let p = self.potentials.tower().stage(next).clone();
        if seed.period() != &p {
            return Err(Error::PreconditionViolated(format!("seed has period {} but stage {next} needs {p}", seed.period())));
        }
        let grid = stage_grid(&p, &self.options.torus_res)?;
        let eta = stage_eta(&self.options, next, p.size());
        let refined = self.potential(j)?.embed(&p)?;
        let pre_survey = grid_survey(&refined, &grid, false)?;
        let certificate = good_set_from_survey(&pre_survey, eta)?;
        let gamma_prev = self.stages[j - 1].schedule.gamma;
        let delta = certificate.delta;
        let mut eps = schedule_next(delta.min(1.0), gamma_prev);
        let seed_norm = seed.sup_norm();
        let mut layer = if seed_norm == 0.0 { PeriodicPotential::zero(&p) } else { seed.scaled(eps / seed_norm) };
        if eps < UNDERFLOW_FLOOR {
            self.warnings.push(format!("stage {next}: ε = {eps:e} below {UNDERFLOW_FLOOR:e}, layer flushed to zero"));
            self.stop_reason = Some(format!("ε underflow at stage {next}"));
            layer = PeriodicPotential::zero(&p);
            eps = 0.0;
        }
        self.potentials.push(layer.clone())?;
        let full = self.potential(next)?;
        let survey = grid_survey(&full, &grid, true)?;

        let schedule = ScheduleEntry {
            stage: next,
            fiber_dim: p.size(),
            eta,
            delta,
            gamma: certificate.gamma,
            eps,
            layer_norm: layer.sup_norm(),
            log_delta_theory: theory_log_delta(&refined, eta, self.options.with_theory),
        };
        let mut stage = Stage { schedule, period: p, grid, certificate, survey, tracking: None, checks: Vec::new() };
        let table = track_stage(&self.stages[j - 1], &stage, full.sup_norm())?;
        stage.checks = stage_checks(&stage, &table, gamma_prev, self.stages[j - 1].schedule.eta);
        stage.tracking = Some(table);
        self.stages.push(stage);
        Ok(())
    }

    /// Whether every evaluated inequality of every stage holds.
    pub fn all_checks_pass(&self) -> bool {
        self.stages.iter().all(|s| s.checks.iter().all(|c| c.pass))
    }

    /// One JSON object per stage, newline separated.
    pub fn stage_report_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.stages {
            let rec = serde_json::json!({
                "stage": s.schedule.stage,
                "period": s.period,
                "schedule": s.schedule,
                "certificate": {
                    "delta": s.certificate.delta,
                    "gamma": s.certificate.gamma,
                    "measure_good": s.certificate.measure_good,
                    "accepted": s.certificate.accepted,
                    "resolution": s.certificate.resolution,
                },
                "tracking": s.tracking.as_ref().map(|t| serde_json::json!({
                    "acceptance_rate": t.acceptance_rate(),
                    "max_energy_mismatch": t.max_energy_mismatch,
                    "max_distance": t.max_distance,
                    "ambiguous": t.ambiguous,
                    "no_candidate": t.no_candidate,
                })),
                "checks": s.checks,
            });
            out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Io(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// `2 Σ_j 1/res_j`: measure of the cells that straddle a sampled feature.
pub fn grid_slack(grid: &FiberGrid) -> f64 {
    2.0 * grid.res().iter().map(|&r| 1.0 / r as f64).sum::<f64>()
}

fn stage_checks(stage: &Stage, table: &TrackingTable, gamma_prev: f64, eta_prev: f64) -> Vec<Check> {
    let s = &stage.schedule;
    let slack = grid_slack(&stage.grid);
    let mut checks = vec![
        Check::le("eps_le_delta_pow10", s.eps, s.delta.min(1.0).powi(10)),
        Check::le("eps_le_gamma_delta_over_100", s.eps, gamma_prev * s.delta / 100.0),
        Check::le("layer_norm_le_eps", s.layer_norm, s.eps),
        Check::le("hundred_delta_sq_le_gamma_prev", 100.0 * s.delta * s.delta, gamma_prev),
        Check::le("eta_below_one", s.eta, 1.0),
        Check { name: "certificate_accepted".into(), lhs: stage.certificate.measure_good, rhs: 1.0 - s.eta, pass: stage.certificate.accepted },
        Check::le("tracking_rejections", 1.0 - table.acceptance_rate(), eta_prev + slack),
        Check::le("energy_mismatch", table.max_energy_mismatch, s.eps + table.energy_slack),
        Check::le(
            "eigenfunction_distance",
            table.max_distance,
            if s.delta > 0.0 { 2.0 * s.eps / s.delta } else { 0.0 } + table.vector_slack,
        ),
        Check::le("ambiguous_matches", table.ambiguous as f64, 0.0),
    ];
    checks.retain(|c| !(c.lhs.is_nan() || c.rhs.is_nan()));
    checks
}

/// Places a stage-`j` fiber vector (at `x + s`) into `ℓ²(B_{p^{j+1}})` at `x`.
pub fn embed_eigenvector(
    psi: &[Complex<f64>],
    p_coarse: &Period,
    shift: &CosetShift,
    p_fine: &Period,
) -> Result<Vec<Complex<f64>>> {
    if psi.len() != p_coarse.size() {
        return Err(Error::CosetMismatch(format!("vector of length {} for period {p_coarse}", psi.len())));
    }
    if !p_coarse.divides(p_fine) || shift.steps().len() != p_fine.dim() {
        return Err(Error::CosetMismatch(format!("{p_coarse} does not refine to {p_fine} with this shift")));
    }
    let mut out = vec![Complex::zero(); p_fine.size()];
    for (k, &c) in psi.iter().enumerate() {
        out[embed_index(k, p_coarse, shift, p_fine)] = c;
    }
    Ok(out)
}

/// Tracks one fine band point against all coarse candidates.
pub fn track_point(coarse: &Stage, fine: &Stage, cell: usize, band: usize, h_norm: f64) -> Result<TrackingRecord> {
    let pf = fine.period.size();
    if !fine.certificate.is_good(cell, band - 1) {
        return Err(Error::PreconditionViolated(format!("point ({cell}, {band}) is outside the good set")));
    }
    let shifts = coset_shifts(&coarse.period, &fine.period)?;
    let row = &fine.survey.rows[cell];
    let energy = row.eigenvalues[band - 1];
    let psi = &row.vectors[band - 1];
    let eps = fine.schedule.eps;
    let window = eps + energy_slack(pf, h_norm);
    let mut cands: Vec<(usize, usize, usize, f64, f64)> = Vec::new();
    for (si, s) in shifts.iter().enumerate() {
        let cc = fine.grid.shifted_into(cell, s, &coarse.grid)?;
        let crow = &coarse.survey.rows[cc];
        for (lt, &e) in crow.eigenvalues.iter().enumerate() {
            let mismatch = (energy - e).abs();
            if mismatch <= window {
                let emb = embed_eigenvector(&crow.vectors[lt], &coarse.period, s, &fine.period)?;
                cands.push((si, cc, lt, mismatch, inner(&emb, psi).norm()));
            }
        }
    }
    if cands.is_empty() {
        return Err(Error::NoCandidate);
    }
    cands.sort_by(|a, b| b.4.total_cmp(&a.4).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));
    let best = cands[0];
    let margin = if cands.len() > 1 { best.4 - cands[1].4 } else { best.4 };
    if margin < MATCH_MARGIN {
        return Err(Error::AmbiguousMatch { margin });
    }
    let crow = &coarse.survey.rows[best.1];
    let emb = embed_eigenvector(&crow.vectors[best.2], &coarse.period, &shifts[best.0], &fine.period)?;
    let distance = aligned_distance(psi, &emb);
    let delta = fine.schedule.delta;
    let bound = if delta > 0.0 { 2.0 * eps / delta } else { f64::INFINITY };
    let accepted = distance <= bound + vector_slack(pf, h_norm, delta);
    Ok(TrackingRecord {
        cell,
        band,
        shift: shifts[best.0].steps().to_vec(),
        coarse_cell: best.1,
        coarse_band: best.2 + 1,
        energy_mismatch: best.3,
        distance,
        overlap: best.4,
        margin,
        accepted,
    })
}

/// Tracks every good point of `fine` (parallel over cells, gathered in order).
pub fn track_stage(coarse: &Stage, fine: &Stage, sup_norm: f64) -> Result<TrackingTable> {
    let pf = fine.period.size();
    let h_norm = 2.0 * fine.period.dim() as f64 + sup_norm;
    let outcomes: Vec<Vec<Option<Result<TrackingRecord>>>> = (0..fine.grid.len())
        .into_par_iter()
        .map(|cell| {
            (1..=pf)
                .map(|band| {
                    if fine.certificate.is_good(cell, band - 1) {
                        Some(track_point(coarse, fine, cell, band, h_norm))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let mut table = TrackingTable {
        stage: fine.schedule.stage,
        records: Vec::with_capacity(fine.grid.len() * pf),
        points: fine.grid.len() * pf,
        attempted: 0,
        accepted: 0,
        ambiguous: 0,
        no_candidate: 0,
        max_energy_mismatch: 0.0,
        max_distance: 0.0,
        energy_slack: energy_slack(pf, h_norm),
        vector_slack: vector_slack(pf, h_norm, fine.schedule.delta),
    };
    for outcome in outcomes.into_iter().flatten() {
        let rec = match outcome {
            None => None,
            Some(res) => {
                table.attempted += 1;
                match res {
                    Ok(r) => {
                        if r.accepted {
                            table.accepted += 1;
                            table.max_energy_mismatch = table.max_energy_mismatch.max(r.energy_mismatch);
                            table.max_distance = table.max_distance.max(r.distance);
                        }
                        Some(r)
                    }
                    Err(Error::AmbiguousMatch { .. }) => {
                        table.ambiguous += 1;
                        None
                    }
                    Err(Error::NoCandidate) => {
                        table.no_candidate += 1;
                        None
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        table.records.push(rec);
    }
    Ok(table)
}

/// Stage-`j` points (flat `cell * P_j + band - 1`) that are images of good
/// points of every stage up to `depth` under the tracking maps.
pub fn good_chain(state: &HierarchyState, j: usize, depth: usize) -> Result<Vec<bool>> {
    if depth < j || depth > state.depth() {
        return Err(Error::StageOutOfRange { stage: depth, len: state.depth() });
    }
    let base = state.stage(j)?;
    let mut reach: Option<Vec<bool>> = None;
    // reachable set at stage m, built from the top down
    for m in (j + 1..=depth).rev() {
        let st = state.stage(m)?;
        let table = st.tracking.as_ref().ok_or_else(|| Error::ChainBroken(format!("stage {m} has no tracking table")))?;
        let coarse = state.stage(m - 1)?;
        let mut img = vec![false; coarse.grid.len() * coarse.period.size()];
        for (pt, rec) in table.records.iter().enumerate() {
            let Some(r) = rec.as_ref().filter(|r| r.accepted) else { continue };
            if reach.as_ref().is_some_and(|mask| !mask[pt]) {
                continue;
            }
            img[r.coarse_cell * coarse.period.size() + r.coarse_band - 1] = true;
        }
        if m - 1 > j {
            // intermediate points must themselves be tracked further down
            let lower = state.stage(m - 1)?.tracking.as_ref();
            if let Some(t) = lower {
                for (pt, flag) in img.iter_mut().enumerate() {
                    *flag = *flag && t.accepted_record(pt).is_some();
                }
            }
        }
        reach = Some(img);
    }
    Ok(match reach {
        None => base.certificate.mask.clone(),
        Some(r) => r.iter().zip(&base.certificate.mask).map(|(&a, &b)| a && b).collect(),
    })
}

/// Measure of a mask over `V × {1..P}` with `|ℙ| = 1`.
pub fn mask_measure(mask: &[bool]) -> f64 {
    mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64
}

/// A resolved chain: for each stage from `j` to `k`, the flat point index.
#[derive(Debug, Clone, Serialize)]
pub struct Chain {
    pub start_stage: usize,
    /// `points[i]` lives at stage `start_stage + i`.
    pub points: Vec<usize>,
}

/// Follows accepted tracking records upward from stage-`j` point `point` to stage `k`.
pub fn resolve_chain(state: &HierarchyState, j: usize, point: usize, k: usize) -> Result<Chain> {
    if k < j || k > state.depth() {
        return Err(Error::StageOutOfRange { stage: k, len: state.depth() });
    }
    let mut points = vec![point];
    for m in j + 1..=k {
        let st = state.stage(m)?;
        let table = st.tracking.as_ref().ok_or_else(|| Error::ChainBroken(format!("stage {m} has no tracking table")))?;
        let coarse_p = state.stage(m - 1)?.period.size();
        let target = *points.last().unwrap();
        let found = table
            .records
            .iter()
            .enumerate()
            .find(|(_, r)| {
                r.as_ref().is_some_and(|r| r.accepted && r.coarse_cell * coarse_p + r.coarse_band - 1 == target)
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::ChainBroken(format!("point {target} of stage {} has no tracked preimage", m - 1)))?;
        points.push(found);
    }
    Ok(Chain { start_stage: j, points })
}

/// All chains from the good-chain set of stage `j` (depth `k`): one entry per
/// chain, listing its flat point index at each stage `j..=k`.
pub fn chain_table(state: &HierarchyState, j: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    let mask = good_chain(state, j, k)?;
    // descendant maps: coarse point → accepted fine point
    let mut maps = Vec::new();
    for m in j + 1..=k {
        let st = state.stage(m)?;
        let table = st.tracking.as_ref().ok_or_else(|| Error::ChainBroken(format!("stage {m} has no tracking table")))?;
        let coarse = state.stage(m - 1)?;
        let cp = coarse.period.size();
        let mut map = vec![None; coarse.grid.len() * cp];
        for (pt, rec) in table.records.iter().enumerate() {
            if let Some(r) = rec.as_ref().filter(|r| r.accepted) {
                map[r.coarse_cell * cp + r.coarse_band - 1] = Some(pt);
            }
        }
        maps.push(map);
    }
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(pt, _)| {
            let mut points = vec![pt];
            for (i, map) in maps.iter().enumerate() {
                let next = map[*points.last().unwrap()]
                    .ok_or_else(|| Error::ChainBroken(format!("stage {} point has no descendant", j + i)))?;
                points.push(next);
            }
            Ok(points)
        })
        .collect()
}

/// Fiber data `(x, E, ψ)` of stage `m` at flat point `pt`.
pub fn fiber_point(state: &HierarchyState, m: usize, pt: usize) -> Result<(Vec<f64>, f64, Vec<Complex<f64>>)> {
    let st = state.stage(m)?;
    let p = st.period.size();
    let row = st.survey.rows.get(pt / p).ok_or_else(|| Error::ChainBroken(format!("point {pt} outside stage {m}")))?;
    Ok((row.x.clone(), row.eigenvalues[pt % p], row.vectors[pt % p].clone()))
}

/// Lattice box `[-R, R]^d` in lexicographic order.
pub fn lattice_box(d: usize, r: i64) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut n = vec![0i64; d];
            for c in n.iter_mut().rev() {
                *c = (idx % side) as i64 - r;
                idx /= side;
            }
            n
        })
        .collect()
}

/// `φ(n) = Σ_t ψ(t) e(-(t + x)·n)` over the box `[-R, R]^d`.
pub fn bloch_wave(p: &Period, x: &[f64], psi: &[Complex<f64>], r: i64) -> Vec<Complex<f64>> {
    let pts: Vec<Vec<f64>> = (0..p.size())
        .map(|k| p.unflatten(k).iter().zip(p.comps()).zip(x).map(|((&kj, &pj), &xj)| kj as f64 / pj as f64 + xj).collect())
        .collect();
    lattice_box(p.dim(), r)
        .iter()
        .map(|n| {
            psi.iter().zip(&pts).fold(Complex::zero(), |acc, (&c, t)| {
                // reduce the phase mod 1 before exponentiating
                let phase: f64 = t.iter().zip(n).map(|(tj, &nj)| (tj * nj as f64).rem_euclid(1.0)).sum();
                acc + c * e2pi(-phase)
            })
        })
        .collect()
}

/// Synthesized stage-`k` eigenfunction on the box together with its energy and
/// the sup of `|(H - E)φ|` over the box interior.
#[derive(Debug, Clone, Serialize)]
pub struct Eigenfunction {
    pub stage: usize,
    pub x: Vec<f64>,
    pub energy: f64,
    pub radius: i64,
    #[serde(skip)]
    pub values: Vec<Complex<f64>>,
    pub residual: f64,
}

/// `sup_{n ∈ interior} |(Δ + V)φ(n) - Eφ(n)|` for values on `[-R, R]^d`.
pub fn box_residual(v: &PeriodicPotential<f64>, values: &[Complex<f64>], energy: f64, r: i64) -> f64 {
    let d = v.dim();
    let side = (2 * r + 1) as usize;
    let index = |n: &[i64]| n.iter().fold(0usize, |acc, &c| acc * side + (c + r) as usize);
    let mut worst = 0.0f64;
    for n in lattice_box(d, r) {
        if n.iter().any(|&c| c.abs() >= r) {
            continue;
        }
        let mut acc = values[index(&n)] * (v.evaluate(&n) - energy);
        for j in 0..d {
            let mut up = n.clone();
            up[j] += 1;
            let mut dn = n.clone();
            dn[j] -= 1;
            acc += values[index(&up)] + values[index(&dn)];
        }
        worst = worst.max(acc.norm());
    }
    worst
}

/// Synthesizes the stage-`k` member of the chain starting at stage-`j` point `point`.
pub fn synthesize_eigenfunction(state: &HierarchyState, j: usize, point: usize, k: usize, r: i64) -> Result<Eigenfunction> {
    let chain = resolve_chain(state, j, point, k)?;
    let pt = *chain.points.last().unwrap();
    let (x, energy, psi) = fiber_point(state, k, pt)?;
    let p = &state.stage(k)?.period;
    let values = bloch_wave(p, &x, &psi, r);
    let residual = box_residual(&state.potential(k)?, &values, energy, r);
    Ok(Eigenfunction { stage: k, x, energy, radius: r, values, residual })
}

/// Birkhoff average `(1/#Λ_R) Σ_{n ∈ Λ_R} φ(n) e(n·θ)` over `[-R, R]^d`.
pub fn frequency_amplitude(values: &[Complex<f64>], d: usize, r: i64, theta: &[f64]) -> Complex<f64> {
    let pts = lattice_box(d, r);
    let sum = pts.iter().zip(values).fold(Complex::zero(), |acc, (n, &v)| {
        let phase: f64 = n.iter().zip(theta).map(|(&nj, tj)| (nj as f64 * tj).rem_euclid(1.0)).sum();
        acc + v * e2pi(phase)
    });
    sum / pts.len() as f64
}

/// Results of the ℓ¹ and Cauchy checks along one chain.
#[derive(Debug, Clone, Serialize)]
pub struct Ell1Report {
    /// `‖ψ^k‖₁` per stage `k` of the chain.
    pub ell1: Vec<f64>,
    /// `√P_j + 2δ_j^8` with `j` the chain's first stage.
    pub ell1_bound: f64,
    /// `d(ψ^{k+1}, embed ψ^k)` per consecutive pair.
    pub distances: Vec<f64>,
    /// `2δ_k^9` plus the eigenvector rounding floor, per consecutive pair.
    pub cauchy_bounds: Vec<f64>,
    pub pass: bool,
}

/// Checks `‖ψ^k‖₁ ≤ √P_j + 2δ_j^8` and `d(ψ^{k+1}, ψ^k) ≤ 2δ_{k+1}^9` along the chain.
pub fn ell1_tracking_check(state: &HierarchyState, j: usize, point: usize, k: usize) -> Result<Ell1Report> {
    let chain = resolve_chain(state, j, point, k)?;
    let sj = state.stage(j)?;
    let delta_j = sj.schedule.delta.min(1.0);
    let ell1_floor = (sj.period.size() as f64).sqrt();
    let mut ell1 = Vec::new();
    let mut distances = Vec::new();
    let mut cauchy_bounds = Vec::new();
    let mut slack_total = 0.0;
    for (i, &pt) in chain.points.iter().enumerate() {
        let m = j + i;
        let (_, _, psi) = fiber_point(state, m, pt)?;
        ell1.push(norm1(&psi));
        if i > 0 {
            let st = state.stage(m)?;
            let rec = st.tracking.as_ref().and_then(|t| t.accepted_record(pt)).ok_or_else(|| {
                Error::ChainBroken(format!("stage {m} point {pt} is not tracked"))
            })?;
            distances.push(rec.distance);
            let vs = st.tracking.as_ref().map(|t| t.vector_slack).unwrap_or(0.0);
            slack_total += vs * (st.period.size() as f64).sqrt();
            cauchy_bounds.push(2.0 * st.schedule.delta.min(1.0).powi(9) + vs);
        }
    }
    let ell1_bound = ell1_floor + 2.0 * delta_j.powi(8);
    let pass = ell1.iter().all(|&v| v <= ell1_bound + slack_total + 1e-12)
        && distances.iter().zip(&cauchy_bounds).all(|(d, b)| d <= b);
    Ok(Ell1Report { ell1, ell1_bound, distances, cauchy_bounds, pass })
}
