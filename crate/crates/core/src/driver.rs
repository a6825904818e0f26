//! Subcommand implementations. Each command turns a validated configuration
//! into named text artifacts plus a status; writing them is left to the caller.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::acmeasure::{
    free_dos_1d_cdf, histogram_csv, measure_decomposition_check, spectral_measure, velocity_stability_check,
    EnergyBins, ParamSet,
};
use crate::bloch::{assemble, derivative_matrix};
use crate::certify::{good_set_from_survey, grid_survey, theoretical_simplicity, GoodSetCertificate};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::format::{num, row};
use crate::hierarchy::{
    bloch_wave, box_residual, chain_table, ell1_tracking_check, embed_eigenvector, fiber_point, frequency_amplitude,
    good_chain, lattice_box, HierarchyState, Stage,
};
use crate::lattice::{coset_shifts, FiberGrid, Period};
use crate::potential::PeriodicPotential;
use crate::spectral::{eigensystem, hellmann_feynman, min_gap, neighbour_gaps};

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Non-error outcome classes that still map to a nonzero exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    CertificateFailure(String),
    InequalityFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub status: Status,
}

impl Outcome {
    fn ok(artifacts: Vec<Artifact>) -> Self {
        Self { artifacts, status: Status::Ok }
    }
}

/// Process exit status for a command result.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) => match o.status {
            Status::Ok => 0,
            Status::CertificateFailure(_) => 4,
            Status::InequalityFailure(_) => 5,
        },
        Err(e) => error_exit_code(e),
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::CertificateFailure(_) => 4,
        Error::ChainBroken(_) => 6,
        Error::Io(_) => 1,
        _ => 3,
    }
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact { name: name.into(), contents }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Runs the construction through every configured layer.
pub fn build_state(cfg: &RunConfig) -> Result<HierarchyState> {
    let tower = cfg.tower()?;
    let mut state = HierarchyState::new(tower.clone(), cfg.layer(1)?, cfg.hierarchy_options()?)?;
    for j in 2..=tower.len() {
        if state.stop_reason.is_some() {
            break;
        }
        state.extend(&cfg.layer(j)?)?;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// bands

#[derive(Debug, Clone, Serialize)]
struct BandSummary {
    period: Period,
    resolution: Vec<usize>,
    points: usize,
    global_min_gap: f64,
    /// 1-based lower band of the smallest gap.
    min_gap_band: Option<usize>,
    argmin_x: Vec<f64>,
    min_abs_velocity: f64,
    band_ranges: Vec<[f64; 2]>,
}

/// Band energies, velocities and gaps on the vertex grid
/// `x_j = i/(res_j p_j)`, `i = 0..res_j-1`.
pub fn cmd_bands(cfg: &RunConfig) -> Result<Outcome> {
    let v = cfg.layer(1)?;
    let p = v.period().clone();
    let res = cfg.resolution();
    let grid = FiberGrid::new(&p, &res).map_err(config_err)?;
    let n: Vec<usize> = grid.torus_res();
    let rows = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = grid.unflatten(i).iter().zip(&n).map(|(&k, &m)| k as f64 / m as f64).collect();
            let es = eigensystem(&assemble(&v, &x)?)?;
            let vel = hellmann_feynman(&es, &derivative_matrix(&p, &x, p.dim() - 1)?)?;
            Ok((x, es.values, vel.values))
        })
        .collect::<Result<Vec<_>>>()?;
    let d = p.dim();
    let mut csv = String::from("point,");
    for j in 1..=d {
        csv.push_str(&format!("x{j},"));
    }
    csv.push_str("band,energy,velocity,gap_below,gap_above\n");
    let mut best = (f64::INFINITY, None, Vec::new());
    let mut min_speed = f64::INFINITY;
    let mut ranges = vec![[f64::INFINITY, f64::NEG_INFINITY]; p.size()];
    for (i, (x, e, vel)) in rows.iter().enumerate() {
        let gaps = neighbour_gaps(e);
        for l in 0..e.len() {
            csv.push_str(&format!(
                "{i},{},{},{},{},{},{}\n",
                row(x),
                l + 1,
                num(e[l]),
                num(vel[l]),
                num(gaps[l].0),
                num(gaps[l].1)
            ));
            min_speed = min_speed.min(vel[l].abs());
            ranges[l][0] = ranges[l][0].min(e[l]);
            ranges[l][1] = ranges[l][1].max(e[l]);
        }
        let (g, at) = min_gap(e);
        if g < best.0 {
            best = (g, at, x.clone());
        }
    }
    let summary = BandSummary {
        period: p,
        resolution: res,
        points: rows.len(),
        global_min_gap: best.0,
        min_gap_band: best.1,
        argmin_x: best.2,
        min_abs_velocity: min_speed,
        band_ranges: ranges,
    };
    Ok(Outcome::ok(vec![artifact("bands.csv", csv), artifact("bands_summary.json", to_json(&summary)?)]))
}

// ---------------------------------------------------------------------------
// certify

/// Grid certificate of the first layer at `certify.eta`, with the theoretical
/// audit attached when requested.
pub fn certify_config(cfg: &RunConfig) -> Result<GoodSetCertificate> {
    let v = cfg.layer(1)?;
    let grid = FiberGrid::new(v.period(), &cfg.resolution()).map_err(config_err)?;
    let survey = grid_survey(&v, &grid, false)?;
    let mut cert = good_set_from_survey(&survey, cfg.certify.eta)?;
    if cfg.certify.theory {
        let theory = theoretical_simplicity(&v, cfg.certify.eta).map_err(|e| match e {
            Error::HypothesisViolation(m) => Error::Config(m),
            other => other,
        })?;
        cert.audit = Some(theory.audit);
    }
    Ok(cert)
}

pub fn cmd_certify(cfg: &RunConfig) -> Result<Outcome> {
    let cert = certify_config(cfg)?;
    let set = ParamSet::from_certificate(&cert)?;
    let artifacts = vec![artifact("certificate.json", to_json(&cert)?), artifact("good_set.json", to_json(&set)?)];
    let status = if cert.accepted {
        Status::Ok
    } else {
        Status::CertificateFailure(format!("good set measure {} < 1 - η = {}", cert.measure_good, 1.0 - cert.eta))
    };
    Ok(Outcome { artifacts, status })
}

// ---------------------------------------------------------------------------
// cartan

/// Sublevel fraction of the discriminant at the Cartan level, per `ε`.
#[derive(Debug, Clone, Serialize)]
pub struct CartanRow {
    pub eps: f64,
    pub log_level: f64,
    pub fraction: f64,
    pub allowed: f64,
    pub pass: bool,
}

/// Compares `|{x ∈ [0,1)^d : |f(x)| ≤ level}|` with `ε + 2d/resolution` on
/// a uniform grid of about `points` samples.
pub fn cartan_check(v: &PeriodicPotential<f64>, eps_list: &[f64], points: usize) -> Result<Vec<CartanRow>> {
    let d = v.dim();
    let per_axis = ((points as f64).powf(1.0 / d as f64).round() as usize).max(2);
    let total = per_axis.pow(d as u32);
    let log_f = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut idx = i;
            let mut x = vec![0.0; d];
            for c in x.iter_mut().rev() {
                *c = ((idx % per_axis) as f64 + 0.5) / per_axis as f64;
                idx /= per_axis;
            }
            Ok(crate::spectral::log_discriminant(&crate::spectral::eigenvalues(&assemble(v, &x)?)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    eps_list
        .iter()
        .map(|&eps| {
            let audit = theoretical_simplicity(v, 2.0 * eps)?.audit;
            let fraction = crate::certify::sublevel_measure(&log_f, audit.log_level_f)?;
            let allowed = eps + 2.0 * d as f64 / per_axis as f64;
            Ok(CartanRow { eps, log_level: audit.log_level_f, fraction, allowed, pass: fraction <= allowed })
        })
        .collect()
}

pub fn cmd_cartan(cfg: &RunConfig) -> Result<Outcome> {
    let v = cfg.layer(1)?;
    let rows = cartan_check(&v, &cfg.cartan.eps, cfg.cartan.points)?;
    Ok(Outcome::ok(vec![artifact("cartan.json", to_json(&json!({ "period": v.period(), "rows": rows }))?)]))
}

// ---------------------------------------------------------------------------
// construct

pub fn cmd_construct(cfg: &RunConfig) -> Result<Outcome> {
    let state = build_state(cfg)?;
    let jsonl = state.stage_report_jsonl()?;
    let archive = json!({
        "periods": cfg.periods,
        "layers": state.potentials.layers().iter().map(|l| json!({"period": l.period(), "cell": l.cell()})).collect::<Vec<_>>(),
        "stages": state.stages.iter().map(|s| json!({
            "schedule": s.schedule,
            "certificate": s.certificate,
            "good_set": ParamSet::new(s.grid.clone(), s.certificate.mask.clone()).ok(),
            "tracking": s.tracking,
        })).collect::<Vec<_>>(),
        "stop_reason": state.stop_reason,
        "warnings": state.warnings,
        "all_checks_pass": state.all_checks_pass(),
    });
    let artifacts = vec![artifact("stages.jsonl", jsonl), artifact("state.json", to_json(&archive)?)];
    let failed: Vec<String> = state
        .stages
        .iter()
        .flat_map(|s| s.checks.iter().filter(|c| !c.pass).map(move |c| format!("stage {}: {}", s.schedule.stage, c.name)))
        .collect();
    let status = if failed.is_empty() { Status::Ok } else { Status::InequalityFailure(failed.join("; ")) };
    Ok(Outcome { artifacts, status })
}

// ---------------------------------------------------------------------------
// eigfun

/// Residual and resonance data of one synthesized eigenfunction.
#[derive(Debug, Clone, Serialize)]
pub struct EigfunReport {
    pub stage: usize,
    pub chain: Vec<usize>,
    pub x: Vec<f64>,
    pub energy: f64,
    pub radius: i64,
    pub residual: f64,
    pub residual_tolerance: f64,
    pub theta: Vec<f64>,
    pub amplitude: [f64; 2],
    /// `|ψ^1|` at the dominant frequency, carried to the last stage.
    pub first_stage_coefficient: f64,
    /// `2 δ_1^8` plus the exact off-frequency leakage of the finite box.
    pub amplitude_tolerance: f64,
    pub amplitude_pass: bool,
    pub ell1: crate::hierarchy::Ell1Report,
    pub pass: bool,
}

/// `|(1/(2R+1)) Σ_{|n|≤R} e(u n)|`.
fn dirichlet_average(u: f64, r: i64) -> f64 {
    let m = (2 * r + 1) as f64;
    let s = (std::f64::consts::PI * u).sin();
    if s.abs() < 1e-15 {
        1.0
    } else {
        ((std::f64::consts::PI * u * m).sin() / (m * s)).abs()
    }
}

/// Stage-1 vector carried along the chain's shifts into the last fiber.
fn carried_first_vector(state: &HierarchyState, chain: &[usize]) -> Result<Vec<Complex<f64>>> {
    let (_, _, mut psi) = fiber_point(state, 1, chain[0])?;
    for (i, &pt) in chain.iter().enumerate().skip(1) {
        let m = i + 1;
        let fine: &Stage = state.stage(m)?;
        let coarse = state.stage(m - 1)?;
        let rec = fine
            .tracking
            .as_ref()
            .and_then(|t| t.accepted_record(pt))
            .ok_or_else(|| Error::ChainBroken(format!("stage {m} point {pt} is not tracked")))?;
        let shifts = coset_shifts(&coarse.period, &fine.period)?;
        let s = shifts
            .iter()
            .find(|s| s.steps() == rec.shift.as_slice())
            .ok_or_else(|| Error::CosetMismatch("recorded shift not found".into()))?;
        psi = embed_eigenvector(&psi, &coarse.period, s, &fine.period)?;
    }
    Ok(psi)
}

/// Synthesizes the last-stage eigenfunction of the chain starting at stage-1
/// point `start` and evaluates residual, ℓ¹ and resonance checks.
pub fn eigfun_report(state: &HierarchyState, start: usize, radius: i64) -> Result<(EigfunReport, Vec<Complex<f64>>)> {
    let k = state.depth();
    let mask = good_chain(state, 1, k)?;
    if !mask.get(start).copied().unwrap_or(false) {
        return Err(Error::ChainBroken(format!("stage-1 point {start} is not in the chain set")));
    }
    let chain = crate::hierarchy::resolve_chain(state, 1, start, k)?.points;
    let top = state.stage(k)?;
    let (x, energy, psi) = fiber_point(state, k, *chain.last().unwrap())?;
    let values = bloch_wave(&top.period, &x, &psi, radius);
    let residual = box_residual(&state.potential(k)?, &values, energy, radius);
    let residual_tolerance = 1e-8 * (1.0 + energy.abs());

    let carried = carried_first_vector(state, &chain)?;
    let (t0, c1) = carried
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()).then(b.0.cmp(&a.0)))
        .map(|(i, c)| (i, c.norm()))
        .unwrap();
    let p = &top.period;
    let frac = |k: usize| -> Vec<f64> { p.unflatten(k).iter().zip(p.comps()).map(|(&a, &b)| a as f64 / b as f64).collect() };
    let theta: Vec<f64> = frac(t0).iter().zip(&x).map(|(t, xi)| t + xi).collect();
    let amp = frequency_amplitude(&values, p.dim(), radius, &theta);
    let leakage: f64 = (0..p.size())
        .filter(|&t| t != t0)
        .map(|t| {
            let u: Vec<f64> = frac(t).iter().zip(frac(t0)).map(|(a, b)| a - b).collect();
            psi[t].norm() * u.iter().map(|&uj| dirichlet_average(uj, radius)).product::<f64>()
        })
        .sum();
    let delta1 = state.stage(1)?.schedule.delta.min(1.0);
    let amplitude_tolerance = 2.0 * delta1.powi(8) + leakage;
    let amplitude_pass = (amp.norm() - c1).abs() <= amplitude_tolerance;
    let ell1 = ell1_tracking_check(state, 1, start, k)?;
    let pass = residual <= residual_tolerance && amplitude_pass && ell1.pass;
    Ok((
        EigfunReport {
            stage: k,
            chain,
            x,
            energy,
            radius,
            residual,
            residual_tolerance,
            theta,
            amplitude: [amp.re, amp.im],
            first_stage_coefficient: c1,
            amplitude_tolerance,
            amplitude_pass,
            ell1,
            pass,
        },
        values,
    ))
}

pub fn cmd_eigfun(cfg: &RunConfig) -> Result<Outcome> {
    let state = build_state(cfg)?;
    let k = state.depth();
    let start = match cfg.eigfun.point {
        Some(p) => p,
        None => *chain_table(&state, 1, k)?
            .first()
            .ok_or_else(|| Error::ChainBroken("the chain set is empty".into()))?
            .first()
            .unwrap(),
    };
    let (report, values) = eigfun_report(&state, start, cfg.eigfun.radius)?;
    let d = cfg.dim;
    let mut csv = String::new();
    for j in 1..=d {
        csv.push_str(&format!("n{j},"));
    }
    csv.push_str("re,im,abs\n");
    for (n, v) in lattice_box(d, cfg.eigfun.radius).iter().zip(&values) {
        let sites: Vec<String> = n.iter().map(|c| c.to_string()).collect();
        csv.push_str(&format!("{},{},{},{}\n", sites.join(","), num(v.re), num(v.im), num(v.norm())));
    }
    let status = if report.pass {
        Status::Ok
    } else {
        Status::InequalityFailure("eigenfunction checks failed".into())
    };
    Ok(Outcome { artifacts: vec![artifact("eigfun.csv", csv), artifact("eigfun_report.json", to_json(&report)?)], status })
}

// ---------------------------------------------------------------------------
// measure

pub fn cmd_measure(cfg: &RunConfig) -> Result<Outcome> {
    let phi = cfg.test_vector()?;
    let state = build_state(cfg)?;
    let k = state.depth();
    let v = state.potential(k)?;
    let bins = EnergyBins::spectral_window(cfg.dim, v.sup_norm(), cfg.measure.bins)?;
    let top = state.stage(k)?;
    let full = spectral_measure(&v, &phi, &ParamSet::full(&top.grid), bins, cfg.measure.assignment)?;
    let mut artifacts = vec![artifact("measure_full.csv", histogram_csv(&full, None))];
    let free_l1 = if v.sup_norm() == 0.0 && cfg.dim == 1 && phi == crate::acmeasure::LatticeVector::delta(&[0]) {
        Some(full.l1_error_against(free_dos_1d_cdf))
    } else {
        None
    };
    let dec = measure_decomposition_check(&state, &phi, k, bins, cfg.measure.assignment)?;
    for (j, (h, rep)) in dec.measures.iter().zip(&dec.density).enumerate() {
        artifacts.push(artifact(&format!("measure_stage{}.csv", j + 1), histogram_csv(h, Some(rep))));
    }
    let velocity = (1..=k).map(|j| velocity_stability_check(&state, j, k)).collect::<Result<Vec<_>>>()?;
    let report = json!({
        "depth": k,
        "vector_ell1": phi.ell1(),
        "vector_ell2": phi.ell2(),
        "full_total": full.total,
        "free_dos_l1_error": free_l1,
        "stage_totals": dec.measures.iter().map(|m| m.total).collect::<Vec<_>>(),
        "density": dec.density.iter().map(|d| json!({"bound": d.bound, "slack": d.slack, "max_density": d.max_density, "offending_bin": d.offending_bin, "pass": d.pass})).collect::<Vec<_>>(),
        "monotone": dec.monotone,
        "max_decrease": dec.max_decrease,
        "telescoping_error": dec.telescoping_error,
        "velocity_stability": velocity,
        "pass": dec.pass,
    });
    artifacts.push(artifact("measure_report.json", to_json(&report)?));
    let status = if dec.pass { Status::Ok } else { Status::InequalityFailure("measure checks failed".into()) };
    Ok(Outcome { artifacts, status })
}

// ---------------------------------------------------------------------------
// verify

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let report = crate::verify::run(cfg)?;
    let status = if report.all_pass() {
        Status::Ok
    } else {
        Status::InequalityFailure("acceptance criteria failed".into())
    };
    Ok(Outcome {
        artifacts: vec![artifact("verify_report.json", to_json(&report)?), artifact("verify_report.txt", report.text())],
        status,
    })
}

/// Dispatches a subcommand by name.
pub fn run_command(name: &str, cfg: &RunConfig) -> Result<Outcome> {
    match name {
        "bands" => cmd_bands(cfg),
        "certify" => cmd_certify(cfg),
        "cartan" => cmd_cartan(cfg),
        "construct" => cmd_construct(cfg),
        "eigfun" => cmd_eigfun(cfg),
        "measure" => cmd_measure(cfg),
        "verify" => cmd_verify(cfg),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    }
}
