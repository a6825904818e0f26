//! Run configuration: one JSON document per run, unknown keys rejected.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::acmeasure::{Assignment, LatticeVector};
use crate::error::{Error, Result};
use crate::hierarchy::HierarchyOptions;
use crate::lattice::{make_period_tower, PeriodTower};
use crate::potential::PeriodicPotential;

/// One potential layer: real cell values in site order, or Fourier
/// coefficients `[re, im]` in dual-lattice order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<[f64; 2]>>,
}

/// Sampling resolutions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cells per axis of the fundamental domain for `bands` and `certify`
    /// (default 512 in one dimension, 64 otherwise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Vec<usize>>,
    /// Cells per unit length for the construction; a multiple of every period
    /// (default: the last period times `max(2, 1024/p)` in one dimension,
    /// `max(2, 32/p)` otherwise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus_res: Option<Vec<usize>>,
}

/// Construction schedule options.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Replaces `η_j = 2^{-j}/P_j²` for the first stages.
    #[serde(default)]
    pub eta_override: Vec<f64>,
    /// Also evaluate the theoretical gap bound per stage.
    #[serde(default)]
    pub theory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default = "default_certify_eta")]
    pub eta: f64,
    /// Attach the theoretical audit (requires `η < 1/2`).
    #[serde(default = "default_true")]
    pub theory: bool,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { eta: default_certify_eta(), theory: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartanConfig {
    #[serde(default = "default_cartan_eps")]
    pub eps: Vec<f64>,
    /// Total number of sample points on `[0, 1)^d`.
    #[serde(default = "default_cartan_points")]
    pub points: usize,
}

impl Default for CartanConfig {
    fn default() -> Self {
        Self { eps: default_cartan_eps(), points: default_cartan_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigfunConfig {
    /// Box radius `R` of `[-R, R]^d`.
    #[serde(default = "default_radius")]
    pub radius: i64,
    /// Flat stage-1 point `cell * P_1 + ℓ - 1` starting the chain (default:
    /// the first point of the chain set).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
}

impl Default for EigfunConfig {
    fn default() -> Self {
        Self { radius: default_radius(), point: None }
    }
}

/// One entry `(site, [re, im])` of a finitely supported vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorEntry {
    pub site: Vec<i64>,
    pub value: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Test vector (default: the unit vector at the origin).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<VectorEntry>>,
    #[serde(default)]
    pub assignment: Assignment,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self { bins: default_bins(), vector: None, assignment: Assignment::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Subset of criteria to run (default: all).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<usize>>,
}

/// A complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    /// Period tower, coarsest first.
    pub periods: Vec<Vec<i64>>,
    /// First layer followed by the seed shapes of later layers.
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub cartan: CartanConfig,
    #[serde(default)]
    pub eigfun: EigfunConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Seed of every randomized check.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_true() -> bool {
    true
}
fn default_certify_eta() -> f64 {
    0.2
}
fn default_cartan_eps() -> Vec<f64> {
    vec![0.1, 0.01]
}
fn default_cartan_points() -> usize {
    100_000
}
fn default_radius() -> i64 {
    50
}
fn default_bins() -> usize {
    256
}
fn default_seed() -> u64 {
    20_240_601
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The two-stage demo: tower `(2), (4)`, `V_1 = 0.3 (-1)^n`, seed `cos(πn/2)`.
    pub fn demo() -> Self {
        Self::minimal(
            vec![vec![2], vec![4]],
            vec![
                LayerSpec { cell: Some(vec![0.3, -0.3]), coeffs: None },
                LayerSpec { cell: Some(vec![1.0, 0.0, -1.0, 0.0]), coeffs: None },
            ],
        )
    }

    /// Three-stage extension of [`RunConfig::demo`] with seed `(-1)^{⌊n/4⌋}`.
    pub fn demo3() -> Self {
        let mut c = Self::demo();
        c.periods.push(vec![8]);
        c.layers.push(LayerSpec { cell: Some(vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]), coeffs: None });
        c
    }

    /// One-dimensional free operator.
    pub fn free() -> Self {
        Self::minimal(vec![vec![1]], vec![LayerSpec { cell: Some(vec![0.0]), coeffs: None }])
    }

    pub fn minimal(periods: Vec<Vec<i64>>, layers: Vec<LayerSpec>) -> Self {
        Self {
            dim: periods[0].len(),
            periods,
            layers,
            grid: GridConfig::default(),
            schedule: ScheduleConfig::default(),
            certify: CertifyConfig::default(),
            cartan: CartanConfig::default(),
            eigfun: EigfunConfig::default(),
            measure: MeasureConfig::default(),
            verify: VerifyConfig::default(),
            seed: default_seed(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(cfg_err("dim must be at least 1"));
        }
        if self.periods.is_empty() {
            return Err(cfg_err("periods must not be empty"));
        }
        if let Some(p) = self.periods.iter().find(|p| p.len() != self.dim) {
            return Err(cfg_err(format!("period {p:?} does not have dimension {}", self.dim)));
        }
        let tower = self.tower()?;
        if self.layers.len() != self.periods.len() {
            return Err(cfg_err(format!("{} layers given for {} periods", self.layers.len(), self.periods.len())));
        }
        for j in 1..=tower.len() {
            self.layer(j)?;
        }
        if let Some(r) = &self.grid.resolution {
            if r.len() != self.dim || r.iter().any(|&v| v < 2) {
                return Err(cfg_err("grid.resolution needs one entry ≥ 2 per axis"));
            }
        }
        let top = tower.stage(tower.len());
        let torus = self.torus_res()?;
        for (j, (&n, &p)) in torus.iter().zip(top.comps()).enumerate() {
            if n % p != 0 || n / p < 2 {
                return Err(cfg_err(format!("grid.torus_res[{j}] = {n} must be a multiple ≥ 2 of {p}")));
            }
        }
        if self.schedule.eta_override.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(cfg_err("schedule.eta_override entries must lie in (0, 1)"));
        }
        if !(self.certify.eta > 0.0 && self.certify.eta < 1.0) {
            return Err(cfg_err("certify.eta must lie in (0, 1)"));
        }
        if self.certify.theory && self.certify.eta >= 0.5 {
            return Err(cfg_err("certify.eta must lie in (0, 1/2) when the theoretical audit is requested"));
        }
        if self.cartan.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(cfg_err("cartan.eps entries must lie in (0, 1)"));
        }
        if self.cartan.points < crate::certify::MIN_SUBLEVEL_SAMPLES {
            return Err(cfg_err(format!("cartan.points must be at least {}", crate::certify::MIN_SUBLEVEL_SAMPLES)));
        }
        if self.eigfun.radius < 1 {
            return Err(cfg_err("eigfun.radius must be positive"));
        }
        if self.measure.bins == 0 {
            return Err(cfg_err("measure.bins must be positive"));
        }
        self.test_vector()?;
        if let Some(c) = &self.verify.criteria {
            if c.iter().any(|&k| !(1..=crate::verify::CRITERIA).contains(&k)) {
                return Err(cfg_err(format!("verify.criteria entries must lie in 1..={}", crate::verify::CRITERIA)));
            }
        }
        Ok(())
    }

    pub fn tower(&self) -> Result<PeriodTower> {
        make_period_tower(&self.periods).map_err(|e| cfg_err(e.to_string()))
    }

    /// Layer `j` (1-based) as given: the first layer, or a seed shape.
    pub fn layer(&self, j: usize) -> Result<PeriodicPotential<f64>> {
        let tower = self.tower()?;
        let p = tower.stage(j);
        let entry = &self.layers[j - 1];
        let built = match (&entry.cell, &entry.coeffs) {
            (Some(cell), None) => PeriodicPotential::from_cell(p, cell.clone()),
            (None, Some(c)) => PeriodicPotential::from_coeffs(p, c.iter().map(|[re, im]| Complex::new(*re, *im)).collect()),
            _ => return Err(cfg_err(format!("layer {j} needs exactly one of `cell` or `coeffs`"))),
        };
        let v = built.map_err(|e| cfg_err(format!("layer {j}: {e}")))?;
        if v.cell().iter().any(|x| !x.is_finite()) {
            return Err(cfg_err(format!("layer {j} has non-finite values")));
        }
        Ok(v)
    }

    /// Survey resolution per axis for `bands` and `certify`.
    pub fn resolution(&self) -> Vec<usize> {
        self.grid.resolution.clone().unwrap_or_else(|| vec![if self.dim == 1 { 512 } else { 64 }; self.dim])
    }

    pub fn torus_res(&self) -> Result<Vec<usize>> {
        if let Some(t) = &self.grid.torus_res {
            if t.len() != self.dim {
                return Err(cfg_err("grid.torus_res needs one entry per axis"));
            }
            return Ok(t.clone());
        }
        let last = self.periods.last().unwrap();
        let base = if self.dim == 1 { 1024 } else { 32 };
        Ok(last.iter().map(|&p| p as usize * (base / p as usize).max(2)).collect())
    }

    pub fn hierarchy_options(&self) -> Result<HierarchyOptions> {
        Ok(HierarchyOptions {
            torus_res: self.torus_res()?,
            eta_override: self.schedule.eta_override.clone(),
            with_theory: self.schedule.theory,
        })
    }

    pub fn test_vector(&self) -> Result<LatticeVector> {
        match &self.measure.vector {
            None => Ok(LatticeVector::delta(&vec![0; self.dim])),
            Some(entries) => LatticeVector::new(
                self.dim,
                entries.iter().map(|e| (e.site.clone(), Complex::new(e.value[0], e.value[1]))).collect(),
            )
            .map_err(|e| cfg_err(format!("measure.vector: {e}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_round_trips() {
        let c = RunConfig::demo();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), c);
        assert_eq!(c.torus_res().unwrap(), vec![1024]);
        RunConfig::demo3().validate().unwrap();
        RunConfig::free().validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let bad_key = r#"{"dim":1,"periods":[[1]],"layers":[{"cell":[0]}],"colour":1}"#;
        assert!(matches!(RunConfig::from_json(bad_key), Err(Error::Config(_))));
        let nested = r#"{"dim":1,"periods":[[1]],"layers":[{"cell":[0]}],"grid":{"res":[4]}}"#;
        assert!(matches!(RunConfig::from_json(nested), Err(Error::Config(_))));
        let both = r#"{"dim":1,"periods":[[1]],"layers":[{"cell":[0],"coeffs":[[0,0]]}]}"#;
        assert!(matches!(RunConfig::from_json(both), Err(Error::Config(_))));
        let divis = r#"{"dim":1,"periods":[[2],[3]],"layers":[{"cell":[0,0]},{"cell":[0,0,0]}]}"#;
        assert!(matches!(RunConfig::from_json(divis), Err(Error::Config(_))));
        let eta = r#"{"dim":1,"periods":[[2]],"layers":[{"cell":[0,0]}],"certify":{"eta":0.5}}"#;
        assert!(matches!(RunConfig::from_json(eta), Err(Error::Config(_))));
        let shape = r#"{"dim":1,"periods":[[2]],"layers":[{"cell":[0]}]}"#;
        assert!(matches!(RunConfig::from_json(shape), Err(Error::Config(_))));
        let imag = r#"{"dim":1,"periods":[[2]],"layers":[{"coeffs":[[0,0],[0,1]]}]}"#;
        assert!(matches!(RunConfig::from_json(imag), Err(Error::Config(_))));
    }

    #[test]
    fn coefficient_layers() {
        let text = r#"{"dim":1,"periods":[[2]],"layers":[{"coeffs":[[0,0],[0.3,0]]}]}"#;
        let c = RunConfig::from_json(text).unwrap();
        let v = c.layer(1).unwrap();
        assert!((v.cell()[0] - 0.3).abs() < 1e-15 && (v.cell()[1] + 0.3).abs() < 1e-15);
    }
}
