//! Sweep experiments for uniform gradient bounds, their configuration files
//! and report output.
//!
//! A sweep runs one solve per member of a scale family (and per forcing),
//! records plain numbers, and derives verdicts from those numbers only, so a
//! saved `report.json` can be re-judged offline with
//! [`ExperimentReport::recompute_verdicts`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::{
    lift_quasiperiodic, parse_cell_profile, ExprKernel, FieldExpr, Holder, Kernel, MultiscaleCoefficient,
};
use crate::diophantine::{simultaneous_approx, DEFAULT_SEARCH_CAP};
use crate::elliptic::{cell_gradient, solve_dirichlet, Domain, Forcing, Scalar, SolveOptions, Vector};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::operators::{lp_norm, mean_square, region_weights, Region};
use crate::quadrature::gauss_on;
use crate::reduction::fit_rate;

// ---------------------------------------------------------------------------
// Configuration

/// Top-level sweep configuration (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: u64,
    pub coefficient: CoefficientConfig,
    pub family: FamilyConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub cz: CzConfig,
    #[serde(default)]
    pub lipschitz: LipschitzConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasiperiodic: Option<QuasiConfig>,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    /// Expression in `x` and `y1..yn`; for quasiperiodic sweeps, the profile
    /// `B` in the components `y1[1..N]`.
    pub expr: String,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<Holder>,
}

/// How the scale vectors of a family are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyRule {
    /// `scales` lists every member.
    #[default]
    Explicit,
    /// `eps_2 = eps_1 (1/3 + sqrt(eps_1))`.
    Paper,
    /// `eps_2 = eps_1 (1/3 + delta)`.
    Shifted,
    /// `eps_i = eps_1 ratios[i]`.
    Ratios,
    /// One scale, `eps_1`.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default)]
    pub rule: FamilyRule,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scales: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps1: Vec<f64>,
    /// `eps_1 = 2^-k` for `k` from the first to the second entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyadic: Option<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl FamilyConfig {
    fn eps1_values(&self) -> Result<Vec<f64>> {
        match (&self.dyadic, self.eps1.is_empty()) {
            (Some(_), false) => Err(config_err("family", "give either `eps1` or `dyadic`, not both")),
            (Some([a, b]), true) => {
                if a > b {
                    return Err(config_err("family.dyadic", "first exponent must not exceed the second"));
                }
                Ok((*a..=*b).map(|k| 2f64.powi(-k)).collect())
            }
            (None, false) => Ok(self.eps1.clone()),
            (None, true) => Err(config_err("family", "need `eps1` or `dyadic`")),
        }
    }

    /// Scale vectors, coarsest member first.
    pub fn members(&self) -> Result<Vec<Vec<f64>>> {
        let out: Vec<Vec<f64>> = match self.rule {
            FamilyRule::Explicit => {
                if self.scales.is_empty() {
                    return Err(config_err("family.scales", "explicit family needs `scales`"));
                }
                self.scales.clone()
            }
            FamilyRule::Paper => self.eps1_values()?.iter().map(|&e| vec![e, e * (1.0 / 3.0 + e.sqrt())]).collect(),
            FamilyRule::Shifted => self.eps1_values()?.iter().map(|&e| vec![e, e * (1.0 / 3.0 + self.delta)]).collect(),
            FamilyRule::Ratios => {
                if self.ratios.is_empty() {
                    return Err(config_err("family.ratios", "ratio family needs `ratios`"));
                }
                self.eps1_values()?.iter().map(|&e| self.ratios.iter().map(|r| e * r).collect()).collect()
            }
            FamilyRule::Single => self.eps1_values()?.iter().map(|&e| vec![e]).collect(),
        };
        for (i, m) in out.iter().enumerate() {
            if m.is_empty() || m.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(config_err(&format!("family[{i}]"), "scales must be positive and finite"));
            }
        }
        if out.windows(2).any(|w| !(w[1].last().unwrap() < w[0].last().unwrap())) {
            return Err(config_err("family", "members must be sorted by decreasing finest scale"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub origin: [f64; 2],
    #[serde(default = "one_f")]
    pub length: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { origin: [0.0, 0.0], length: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    /// `div f` sources for CZ sweeps: `smooth`, `piecewise`, or an expression
    /// in `x` (a vector `[.., ..]` in two dimensions).
    #[serde(default = "default_f")]
    pub f: Vec<String>,
    #[serde(default, rename = "F", skip_serializing_if = "Option::is_none")]
    pub big_f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        ForcingConfig { f: default_f(), big_f: None, boundary: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_cpp")]
    pub cells_per_period: f64,
    #[serde(default = "default_min_cells")]
    pub min_cells: usize,
    /// Instances needing more cells per axis are skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cells: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { cells_per_period: default_cpp(), min_cells: default_min_cells(), max_cells: None }
    }
}

impl GridConfig {
    fn cells(&self, length: f64, finest: f64, dim: usize) -> (usize, bool) {
        let want = ((self.cells_per_period * length / finest).ceil() as usize).max(self.min_cells);
        let cap = self.max_cells.unwrap_or(if dim == 1 { 1 << 21 } else { 1024 });
        (want, want <= cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CzConfig {
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_slope_tol")]
    pub slope_tol: f64,
    #[serde(default = "default_spread")]
    pub spread_max: f64,
}

impl Default for CzConfig {
    fn default() -> Self {
        CzConfig { p: default_p(), slope_tol: default_slope_tol(), spread_max: default_spread() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub center: [f64; 2],
    /// Outer radius; the solve runs on the box of this half-width.
    #[serde(default = "one_f")]
    pub radius: f64,
    /// Radii per ladder inside the window.
    #[serde(default = "default_rungs")]
    pub rungs: usize,
    #[serde(default = "default_lip_f", rename = "F")]
    pub big_f: String,
    #[serde(default = "default_lip_boundary")]
    pub boundary: String,
    /// Exponent of the forcing norm.
    #[serde(default = "default_forcing_p")]
    pub forcing_p: f64,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
    /// Allowed relative deviation of `K` from its mean across the family.
    #[serde(default = "default_k_stability")]
    pub k_stability: f64,
    /// One-based index `j` with `delta = eps_j` for three or more scales;
    /// the finest scale by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_slot: Option<usize>,
    /// Explicit `delta` in `[eps_n, radius)` that need not be one of the
    /// scales; all `n` ratios are then approximated and `alpha <= 1/n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        LipschitzConfig {
            alpha: default_alpha(),
            center: [0.0, 0.0],
            radius: 1.0,
            rungs: default_rungs(),
            big_f: default_lip_f(),
            boundary: default_lip_boundary(),
            forcing_p: default_forcing_p(),
            k_max: default_k_max(),
            k_stability: default_k_stability(),
            delta_slot: None,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiConfig {
    /// Dimension `N` of the profile's torus.
    pub profile_dim: usize,
    /// Frequency matrix, `N` rows of length `d`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<Vec<f64>>,
    /// `liouville`: `M = [1, L]` with `L = sum_k 10^(-k!)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "default_liouville_terms")]
    pub liouville_terms: u32,
}

impl QuasiConfig {
    pub fn matrix(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        match self.preset.as_deref() {
            None => {
                if self.m.is_empty() {
                    return Err(config_err("quasiperiodic.m", "need a frequency matrix or a preset"));
                }
                Ok(self.m.clone())
            }
            Some("liouville") => {
                if self.profile_dim != 2 {
                    return Err(config_err("quasiperiodic.profile_dim", "the liouville preset has N = 2"));
                }
                let l = liouville(self.liouville_terms);
                Ok(if dim == 1 { vec![vec![1.0], vec![l]] } else { vec![vec![1.0, l], vec![l, 1.0]] })
            }
            Some(other) => Err(config_err("quasiperiodic.preset", &format!("unknown preset `{other}`"))),
        }
    }
}

/// `sum_{k=1}^{terms} 10^(-k!)` in double precision.
pub fn liouville(terms: u32) -> f64 {
    let mut s = 0.0;
    let mut fact = 1u64;
    for k in 1..=terms as u64 {
        fact = fact.saturating_mul(k);
        s += 10f64.powf(-(fact as f64));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_center")]
    pub center: [f64; 2],
    /// Fixed `Q`; the `(r/eps_n)^(theta/(n-1))` schedule when absent.
    #[serde(default, rename = "Q", skip_serializing_if = "Option::is_none")]
    pub big_q: Option<f64>,
    #[serde(default = "default_lattice")]
    pub lattice: usize,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig { theta: default_theta(), r: default_r(), center: default_center(), big_q: None, lattice: default_lattice() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default = "default_rates")]
    pub rates: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), report: default_report(), profile: default_profile(), rates: default_rates() }
    }
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    0.25
}
fn default_delta() -> f64 {
    1e-3
}
fn default_f() -> Vec<String> {
    vec!["smooth".into(), "piecewise".into()]
}
fn default_cpp() -> f64 {
    16.0
}
fn default_min_cells() -> usize {
    64
}
fn default_p() -> Vec<f64> {
    vec![2.0]
}
fn default_slope_tol() -> f64 {
    0.05
}
fn default_spread() -> f64 {
    3.0
}
fn default_alpha() -> f64 {
    0.25
}
fn default_rungs() -> usize {
    8
}
fn default_lip_f() -> String {
    "1".into()
}
fn default_lip_boundary() -> String {
    "x[1]".into()
}
fn default_forcing_p() -> f64 {
    4.0
}
fn default_k_max() -> f64 {
    4.0
}
fn default_k_stability() -> f64 {
    0.2
}
fn default_liouville_terms() -> u32 {
    4
}
fn default_theta() -> f64 {
    0.5
}
fn default_r() -> f64 {
    0.25
}
fn default_center() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_lattice() -> usize {
    32
}
fn default_dir() -> String {
    "out".into()
}
fn default_report() -> String {
    "report.json".into()
}
fn default_profile() -> String {
    "profile.csv".into()
}
fn default_rates() -> String {
    "rates.csv".into()
}

fn config_err(path: &str, msg: &str) -> Error {
    Error::Config { path: path.to_string(), msg: msg.to_string() }
}

/// Parses and validates a configuration given as TOML text.
pub fn parse_config_str(text: &str) -> Result<SweepConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| config_err("", e.message()))?;
    let cfg: SweepConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(&path, e.inner().message())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<SweepConfig> {
    parse_config_str(&fs::read_to_string(path)?)
}

impl SweepConfig {
    /// Canonical TOML text; parsing it gives back an equal configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.coefficient.dim;
        if !(1..=2).contains(&d) {
            return Err(config_err("coefficient.dim", "dimension must be 1 or 2"));
        }
        if let Some(p) = self.cz.p.iter().find(|p| !(**p > 1.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!("exponent p = {p} must lie in (1, inf)")));
        }
        if !(self.lipschitz.forcing_p > 1.0) {
            return Err(Error::InvalidInput("lipschitz.forcing_p must exceed 1".into()));
        }
        let members = self.family.members()?;
        match &self.quasiperiodic {
            None => {
                for m in &members {
                    self.coefficient_for(m)?;
                }
            }
            Some(q) => {
                parse_cell_profile(&self.coefficient.expr, d, q.profile_dim)
                    .map_err(|e| config_err("coefficient.expr", &e.to_string()))?;
                q.matrix(d)?;
            }
        }
        for (i, f) in self.forcing.f.iter().enumerate() {
            source_vector(f, d, self.seed).map_err(|e| config_err(&format!("forcing.f[{i}]"), &e.to_string()))?;
        }
        for (name, v) in [("forcing.F", &self.forcing.big_f), ("forcing.boundary", &self.forcing.boundary)] {
            if let Some(t) = v {
                FieldExpr::parse(t, d).map_err(|e| config_err(name, &e.to_string()))?;
            }
        }
        FieldExpr::parse(&self.lipschitz.big_f, d).map_err(|e| config_err("lipschitz.F", &e.to_string()))?;
        FieldExpr::parse(&self.lipschitz.boundary, d).map_err(|e| config_err("lipschitz.boundary", &e.to_string()))?;
        Ok(())
    }

    /// The coefficient with the given scales.
    pub fn coefficient_for(&self, scales: &[f64]) -> Result<MultiscaleCoefficient> {
        let mut c = MultiscaleCoefficient::from_expr(&self.coefficient.expr, self.coefficient.dim, scales.to_vec(), self.coefficient.lambda)
            .map_err(|e| config_err("coefficient.expr", &e.to_string()))?;
        c.holder = self.coefficient.holder;
        Ok(c)
    }

    fn domain(&self) -> Domain {
        Domain { dim: self.coefficient.dim, origin: self.domain.origin, length: self.domain.length }
    }
}

fn scalar_source(text: &Option<String>, d: usize) -> Result<Scalar> {
    match text {
        None => Ok(Scalar::Zero),
        Some(t) => Ok(Scalar::expr(FieldExpr::parse(t, d)?)),
    }
}

/// The named `div f` presets, or a parsed expression.
pub fn source_vector(name: &str, d: usize, seed: u64) -> Result<Vector> {
    use std::f64::consts::PI;
    match name {
        "zero" => Ok(Vector::Zero),
        "smooth" => Ok(if d == 1 {
            Vector::func(|x| [(2.0 * PI * x[0]).sin() + 0.5 * (6.0 * PI * x[0]).cos() + 0.25, 0.0])
        } else {
            Vector::func(|x| {
                [
                    (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.25,
                    0.5 * (4.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin(),
                ]
            })
        }),
        "piecewise" => {
            // Random constants on an 8^d block partition of the unit box.
            const B: usize = 8;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let blocks: Vec<[f64; 2]> =
                (0..B.pow(d as u32)).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            Ok(Vector::func(move |x| {
                let idx = |t: f64| ((t.clamp(0.0, 1.0) * B as f64) as usize).min(B - 1);
                let k = if d == 1 { idx(x[0]) } else { idx(x[1]) * B + idx(x[0]) };
                let v = blocks[k];
                [v[0], if d == 2 { v[1] } else { 0.0 }]
            }))
        }
        text => {
            let e = FieldExpr::parse(text, d)?;
            if e.components() != d {
                return Err(Error::InvalidInput(format!("f needs {d} components, got {}", e.components())));
            }
            Ok(Vector::expr(e))
        }
    }
}

// ---------------------------------------------------------------------------
// Reports

/// One CZ instance at one exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzRecord {
    pub key: String,
    pub config_hash: String,
    pub forcing: String,
    pub p: f64,
    pub eps: Vec<f64>,
    pub eps_n: f64,
    pub h: f64,
    pub cells: usize,
    pub grad_norm: Option<f64>,
    pub f_norm: Option<f64>,
    /// `||grad u||_p / ||f||_p`.
    pub ratio: Option<f64>,
    /// `ok`, `skipped: ...` or `error: ...`.
    pub status: String,
}

/// One radius of a Lipschitz profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub key: String,
    pub config_hash: String,
    pub eps_n: f64,
    pub r: f64,
    /// `(mean_{B_r} |grad u|^2)^(1/2)`.
    pub profile: f64,
    pub in_window: bool,
    /// `profile / (reference + forcing_norm)`.
    pub ratio: f64,
}

/// Summary of one Lipschitz instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzInstance {
    pub key: String,
    pub config_hash: String,
    pub eps: Vec<f64>,
    pub h: f64,
    pub cells: usize,
    pub q: u64,
    /// `q <= delta^(-(n-1) alpha)` for the three-or-more-scale path.
    pub q_bound_ok: bool,
    pub window: [f64; 2],
    pub reference_radius: f64,
    pub reference: f64,
    pub forcing_norm: f64,
    /// Largest in-window ratio.
    pub k: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub slope: Option<f64>,
    pub spread: Option<f64>,
    pub k: Option<f64>,
    pub detail: String,
}

/// Thresholds the verdicts are computed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub slope_tol: f64,
    pub spread_max: f64,
    pub k_max: f64,
    pub k_stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub created_unix: u64,
    pub thresholds: Thresholds,
    pub cz: Vec<CzRecord>,
    pub lipschitz: Vec<LipschitzInstance>,
    pub profile: Vec<ProfileRecord>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl ExperimentReport {
    fn new(kind: &str, cfg: &SweepConfig) -> Self {
        ExperimentReport {
            kind: kind.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            thresholds: Thresholds {
                slope_tol: cfg.cz.slope_tol,
                spread_max: cfg.cz.spread_max,
                k_max: cfg.lipschitz.k_max,
                k_stability: cfg.lipschitz.k_stability,
            },
            cz: Vec::new(),
            lipschitz: Vec::new(),
            profile: Vec::new(),
            verdicts: Vec::new(),
            pass: false,
        }
    }

    /// Verdicts from the recorded numbers alone.
    pub fn recompute_verdicts(&self) -> Vec<Verdict> {
        let mut out = cz_verdicts(&self.cz, &self.thresholds);
        out.extend(lipschitz_verdicts(&self.lipschitz, &self.thresholds));
        out
    }

    fn finish(mut self) -> Self {
        self.verdicts = self.recompute_verdicts();
        self.pass = !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.pass);
        self
    }

    /// The CZ records as CSV text.
    pub fn rates_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["key", "forcing", "p", "eps", "eps_n", "h", "cells", "grad_norm", "f_norm", "ratio", "status", "config_hash"])?;
        for r in &self.cz {
            let eps = r.eps.iter().map(|e| fmt_f(*e)).collect::<Vec<_>>().join(" ");
            w.write_record([
                r.key.clone(),
                r.forcing.clone(),
                fmt_f(r.p),
                eps,
                fmt_f(r.eps_n),
                fmt_f(r.h),
                r.cells.to_string(),
                fmt_opt(r.grad_norm),
                fmt_opt(r.f_norm),
                fmt_opt(r.ratio),
                r.status.clone(),
                r.config_hash.clone(),
            ])?;
        }
        csv_text(w)
    }

    /// The Lipschitz profiles as CSV text.
    pub fn profile_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["key", "eps_n", "r", "profile", "in_window", "ratio", "config_hash"])?;
        for r in &self.profile {
            w.write_record([
                r.key.clone(),
                fmt_f(r.eps_n),
                fmt_f(r.r),
                fmt_f(r.profile),
                r.in_window.to_string(),
                fmt_f(r.ratio),
                r.config_hash.clone(),
            ])?;
        }
        csv_text(w)
    }
}

fn csv_text(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fmt_f(v: f64) -> String {
    format!("{v:.15e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub report: PathBuf,
    pub rates: PathBuf,
    pub profile: PathBuf,
}

/// Writes `report.json`, `rates.csv` and `profile.csv` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path, names: &OutputConfig) -> Result<EmittedFiles> {
    fs::create_dir_all(dir)?;
    let files = EmittedFiles { report: dir.join(&names.report), rates: dir.join(&names.rates), profile: dir.join(&names.profile) };
    fs::write(&files.report, serde_json::to_string_pretty(report)?)?;
    fs::write(&files.rates, report.rates_csv()?)?;
    fs::write(&files.profile, report.profile_csv()?)?;
    Ok(files)
}

/// Reads a report written by [`emit_report`].
pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

// ---------------------------------------------------------------------------
// Verdicts

fn cz_verdicts(records: &[CzRecord], t: &Thresholds) -> Vec<Verdict> {
    let mut groups: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !groups.iter().any(|(f, p)| *f == r.forcing && *p == r.p) {
            groups.push((r.forcing.clone(), r.p));
        }
    }
    groups
        .into_iter()
        .map(|(forcing, p)| {
            let name = format!("cz[{forcing}, p={p}]");
            let group: Vec<&CzRecord> = records.iter().filter(|r| r.forcing == forcing && r.p == p).collect();
            let ok: Vec<(f64, f64)> = group.iter().filter_map(|r| r.ratio.map(|v| (1.0 / r.eps_n, v))).collect();
            let failed = group.len() - ok.len();
            if ok.len() < 3 {
                return Verdict {
                    name,
                    pass: false,
                    slope: None,
                    spread: None,
                    k: None,
                    detail: format!("only {} usable instances ({failed} skipped or failed)", ok.len()),
                };
            }
            let max = ok.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
            let min = ok.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            let spread = max / min;
            match fit_rate(&ok) {
                Ok(fit) => {
                    let pass = fit.slope.abs() <= t.slope_tol && spread <= t.spread_max && failed == 0;
                    Verdict {
                        name,
                        pass,
                        slope: Some(fit.slope),
                        spread: Some(spread),
                        k: Some(max),
                        detail: format!(
                            "|slope| {:.3e} (<= {}), spread {:.4} (<= {}), {failed} skipped or failed",
                            fit.slope.abs(),
                            t.slope_tol,
                            spread,
                            t.spread_max
                        ),
                    }
                }
                Err(e) => Verdict { name, pass: false, slope: None, spread: Some(spread), k: None, detail: e.to_string() },
            }
        })
        .collect()
}

fn lipschitz_verdicts(instances: &[LipschitzInstance], t: &Thresholds) -> Vec<Verdict> {
    if instances.is_empty() {
        return Vec::new();
    }
    let ks: Vec<f64> = instances.iter().filter_map(|i| i.k).collect();
    let failed = instances.len() - ks.len();
    let kmax = ks.iter().copied().fold(0.0, f64::max);
    let bound = Verdict {
        name: "lipschitz-bound".into(),
        pass: failed == 0 && kmax <= t.k_max,
        slope: None,
        spread: None,
        k: Some(kmax),
        detail: format!("max K {kmax:.4} (<= {}), {failed} instances without a profile", t.k_max),
    };
    let mut out = vec![bound];
    if ks.len() >= 2 {
        let mean = ks.iter().sum::<f64>() / ks.len() as f64;
        let dev = ks.iter().map(|k| (k / mean - 1.0).abs()).fold(0.0, f64::max);
        out.push(Verdict {
            name: "lipschitz-k-stability".into(),
            pass: failed == 0 && dev <= t.k_stability,
            slope: None,
            spread: Some(dev),
            k: Some(mean),
            detail: format!("max |K/mean - 1| {dev:.4} (<= {}), mean K {mean:.4}", t.k_stability),
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Sweeps

fn cell_average_f(f: &Vector, like: &GridField) -> GridField {
    let d = like.dim;
    let mut out = like.like(d);
    let g = gauss_on(2, 0.0, 1.0);
    let inner: Vec<(f64, f64)> = if d == 1 { vec![(0.0, 1.0)] } else { g.clone() };
    for k in 0..out.n_points() {
        let (i, j) = out.split(k);
        let mut acc = [0.0; 2];
        for &(s, ws) in &g {
            for &(t, wt) in &inner {
                let x = [like.origin[0] + (i as f64 + s) * like.h, like.origin[1] + (j as f64 + t) * like.h];
                let v = f.value(&x[..d]);
                acc[0] += ws * wt * v[0];
                acc[1] += ws * wt * v[1];
            }
        }
        for c in 0..d {
            out.set(k, c, acc[c]);
        }
    }
    out
}

fn cz_instances(
    cfg: &SweepConfig,
    coefs: &[(Vec<f64>, Result<MultiscaleCoefficient>)],
    hash: &str,
) -> Result<Vec<CzRecord>> {
    let d = cfg.coefficient.dim;
    let domain = cfg.domain();
    let big_f = scalar_source(&cfg.forcing.big_f, d)?;
    let boundary = scalar_source(&cfg.forcing.boundary, d)?;
    let forcings: Vec<(String, Vector)> =
        cfg.forcing.f.iter().map(|name| Ok((name.clone(), source_vector(name, d, cfg.seed)?))).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..forcings.len()).flat_map(|fi| (0..coefs.len()).map(move |ei| (fi, ei))).collect();
    let per_job: Vec<Vec<CzRecord>> = jobs
        .par_iter()
        .map(|&(fi, ei)| {
            let (name, f) = &forcings[fi];
            let (eps, coef) = &coefs[ei];
            let eps_n = *eps.last().unwrap();
            let (cells, fits) = cfg.grid.cells(domain.length, eps_n, d);
            let h = domain.length / cells as f64;
            let record = |p: f64, grad: Option<f64>, fnorm: Option<f64>, status: String| CzRecord {
                key: format!("f{fi:02}-e{ei:03}-p{p}"),
                config_hash: hash.to_string(),
                forcing: name.clone(),
                p,
                eps: eps.clone(),
                eps_n,
                h,
                cells,
                grad_norm: grad,
                f_norm: fnorm,
                ratio: match (grad, fnorm) {
                    (Some(g), Some(n)) if n > 0.0 => Some(g / n),
                    _ => None,
                },
                status,
            };
            let fail = |msg: String| cfg.cz.p.iter().map(|&p| record(p, None, None, msg.clone())).collect::<Vec<_>>();
            if !fits {
                return fail(format!("skipped: needs {cells} cells per axis"));
            }
            let coef = match coef {
                Ok(c) => c,
                Err(e) => return fail(format!("error: {e}")),
            };
            let forcing = Forcing { f: f.clone(), big_f: big_f.clone(), boundary: boundary.clone() };
            match solve_dirichlet(coef, &domain, &forcing, &SolveOptions::new(cells)) {
                Err(e) => fail(format!("error: {e}")),
                Ok(sol) => {
                    let g = cell_gradient(&sol.u);
                    let fbar = cell_average_f(f, &g);
                    cfg.cz
                        .p
                        .iter()
                        .map(|&p| {
                            let gn = lp_norm(&g, p, &Region::Whole).ok();
                            let fnm = lp_norm(&fbar, p, &Region::Whole).ok();
                            record(p, gn, fnm, "ok".into())
                        })
                        .collect()
                }
            }
        })
        .collect();
    let mut records: Vec<CzRecord> = per_job.into_iter().flatten().collect();
    records.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(records)
}

/// Uniform `W^{1,p}` proxy: `||grad u||_p / ||f||_p` across the family for
/// `-div(A_eps grad u) = div f`.
pub fn run_cz_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.quasiperiodic.is_some() {
        return run_quasiperiodic(cfg);
    }
    let members = cfg.family.members()?;
    let coefs: Vec<(Vec<f64>, Result<MultiscaleCoefficient>)> = members.iter().map(|m| (m.clone(), cfg.coefficient_for(m))).collect();
    let mut report = ExperimentReport::new("cz", cfg);
    report.cz = cz_instances(cfg, &coefs, &report.config_hash)?;
    Ok(report.finish())
}

/// The CZ sweep for the lift of a quasiperiodic `B(Mx/eps)`; the family's
/// finest scale is `eps`.
pub fn run_quasiperiodic(cfg: &SweepConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let q = cfg.quasiperiodic.as_ref().ok_or_else(|| config_err("quasiperiodic", "section missing"))?;
    let d = cfg.coefficient.dim;
    let profile = parse_cell_profile(&cfg.coefficient.expr, d, q.profile_dim)?;
    let b: Arc<dyn Kernel> = Arc::new(ExprKernel::new(profile, 1)?);
    let m = q.matrix(d)?;
    let coefs: Vec<(Vec<f64>, Result<MultiscaleCoefficient>)> = cfg
        .family
        .members()?
        .iter()
        .map(|member| {
            let eps = *member.last().unwrap();
            let c = lift_quasiperiodic(b.clone(), cfg.coefficient.lambda, &m, eps);
            let scales = c.as_ref().map(|c| c.scales.clone()).unwrap_or_else(|_| vec![eps]);
            (scales, c)
        })
        .collect();
    let mut report = ExperimentReport::new("quasiperiodic", cfg);
    report.cz = cz_instances(cfg, &coefs, &report.config_hash)?;
    Ok(report.finish())
}

fn ball_mean_pow(field: &GridField, center: [f64; 2], r: f64, p: f64) -> f64 {
    let w = region_weights(field, &Region::Ball { center, r });
    let vol: f64 = w.iter().map(|x| x.1).sum();
    if vol == 0.0 {
        return 0.0;
    }
    w.iter().map(|(k, wt)| wt * field.magnitude(*k).powf(p)).sum::<f64>() / vol
}

/// Radius window `[lo, hi]`, reference radius and `q` for one member.
fn lipschitz_window(cfg: &LipschitzConfig, eps: &[f64]) -> Result<([f64; 2], f64, u64, bool)> {
    let n = eps.len();
    let big_r = cfg.radius;
    let alpha = cfg.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    match n {
        0 | 1 => Err(Error::InvalidInput("Lipschitz profiles need at least two scales".into())),
        2 => {
            let lo = eps[1].powf(1.0 - alpha) * big_r;
            if lo >= big_r {
                return Err(Error::WindowEmpty { lo, hi: big_r });
            }
            Ok(([lo, big_r], big_r, 1, true))
        }
        _ => {
            // Either delta is a scale (n - 1 ratios) or a free value (all n).
            let (delta_abs, alphas, dof) = match (cfg.delta, cfg.delta_slot) {
                (Some(_), Some(_)) => return Err(config_err("lipschitz.delta", "conflicts with lipschitz.delta_slot")),
                (Some(dl), None) => {
                    if !(dl >= eps[n - 1] * (1.0 - 1e-12) && dl < big_r) {
                        return Err(config_err("lipschitz.delta", "must lie in [eps_n, radius)"));
                    }
                    (dl, eps.iter().map(|e| (dl / e).fract()).collect::<Vec<_>>(), n)
                }
                (None, slot) => {
                    let j = slot.unwrap_or(n);
                    if !(1..=n).contains(&j) {
                        return Err(config_err("lipschitz.delta_slot", "index out of range"));
                    }
                    let dl = eps[j - 1];
                    (dl, (0..n).filter(|&i| i != j - 1).map(|i| (dl / eps[i]).fract()).collect(), n - 1)
                }
            };
            if alpha > 1.0 / dof as f64 + 1e-12 {
                return Err(Error::InvalidInput(format!("alpha must not exceed 1/{dof} = {}", 1.0 / dof as f64)));
            }
            let delta = delta_abs / big_r;
            let big_q = delta.powf(-alpha);
            let approx = simultaneous_approx(&alphas, big_q, DEFAULT_SEARCH_CAP)?;
            let q = approx.q;
            let bound_ok = (q as f64) <= delta.powf(-(dof as f64) * alpha) * (1.0 + 1e-12);
            let lo = q as f64 * delta * big_r;
            let hi = (q as f64 * delta.powf(1.0 - alpha)).min(1.0) * big_r;
            if lo >= hi {
                return Err(Error::WindowEmpty { lo, hi });
            }
            Ok(([lo, hi], hi, q, bound_ok))
        }
    }
}

/// Geometric ladder of radii: `rungs` inside the window and two below it.
pub fn radius_ladder(window: [f64; 2], rungs: usize) -> Vec<(f64, bool)> {
    let [lo, hi] = window;
    let mut out = vec![(lo / 4.0, false), (lo / 2.0, false)];
    let k = rungs.max(2);
    for i in 0..k {
        let t = i as f64 / (k - 1) as f64;
        out.push((lo * (hi / lo).powf(t), true));
    }
    out
}

/// Profile of `r -> (mean_{B_r} |grad u|^2)^(1/2)` against its bound.
pub fn run_lipschitz(cfg: &SweepConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let d = cfg.coefficient.dim;
    let lip = &cfg.lipschitz;
    let members = cfg.family.members()?;
    let big_f_expr = FieldExpr::parse(&lip.big_f, d)?;
    let boundary = Scalar::expr(FieldExpr::parse(&lip.boundary, d)?);
    let mut report = ExperimentReport::new("lipschitz", cfg);
    let hash = report.config_hash.clone();
    let domain = Domain::centered(d, lip.center, lip.radius);

    let results: Vec<(LipschitzInstance, Vec<ProfileRecord>)> = members
        .par_iter()
        .enumerate()
        .map(|(ei, eps)| {
            let key = format!("e{ei:03}");
            let eps_n = *eps.last().unwrap();
            let (cells, fits) = cfg.grid.cells(domain.length, eps_n, d);
            let h = domain.length / cells as f64;
            let mut inst = LipschitzInstance {
                key: key.clone(),
                config_hash: hash.clone(),
                eps: eps.clone(),
                h,
                cells,
                q: 0,
                q_bound_ok: false,
                window: [0.0, 0.0],
                reference_radius: 0.0,
                reference: 0.0,
                forcing_norm: 0.0,
                k: None,
                status: "ok".into(),
            };
            let (window, r1, q, q_ok) = match lipschitz_window(lip, eps) {
                Ok(w) => w,
                Err(e) => {
                    inst.status = format!("error: {e}");
                    return (inst, Vec::new());
                }
            };
            inst.window = window;
            inst.reference_radius = r1;
            inst.q = q;
            inst.q_bound_ok = q_ok;
            if !fits {
                inst.status = format!("skipped: needs {cells} cells per axis");
                return (inst, Vec::new());
            }
            let solved = cfg.coefficient_for(eps).and_then(|coef| {
                let e = big_f_expr.clone();
                let forcing = Forcing { f: Vector::Zero, big_f: Scalar::expr(e), boundary: boundary.clone() };
                solve_dirichlet(&coef, &domain, &forcing, &SolveOptions::new(cells))
            });
            let sol = match solved {
                Ok(s) => s,
                Err(e) => {
                    inst.status = format!("error: {e}");
                    return (inst, Vec::new());
                }
            };
            let g = cell_gradient(&sol.u);
            let mut f_cells = g.like(1);
            f_cells.fill(|p, _| big_f_expr.eval(p, 0));
            let c = lip.center;
            let reference = mean_square(&g, &Region::Ball { center: c, r: r1 }).sqrt();
            let mut forcing_norm = ball_mean_pow(&f_cells, c, r1, lip.forcing_p).powf(1.0 / lip.forcing_p);
            if eps.len() > 2 {
                forcing_norm *= (r1 / lip.radius).powf(1.0 - d as f64 / lip.forcing_p);
            }
            inst.reference = reference;
            inst.forcing_norm = forcing_norm;
            let denom = reference + forcing_norm;
            let mut rows = Vec::new();
            for (r, in_window) in radius_ladder(window, lip.rungs) {
                if r < 2.0 * h {
                    continue;
                }
                let profile = mean_square(&g, &Region::Ball { center: c, r }).sqrt();
                rows.push(ProfileRecord {
                    key: key.clone(),
                    config_hash: hash.clone(),
                    eps_n,
                    r,
                    profile,
                    in_window,
                    ratio: if denom > 0.0 { profile / denom } else { 0.0 },
                });
            }
            inst.k = rows.iter().filter(|r| r.in_window).map(|r| r.ratio).reduce(f64::max);
            if inst.k.is_none() {
                inst.status = "error: no resolved radius in the window".into();
            }
            (inst, rows)
        })
        .collect();
    for (inst, rows) in results {
        report.lipschitz.push(inst);
        report.profile.extend(rows);
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[coefficient]
expr = "2 + sin(2*pi*y1)"

[family]
rule = "single"
eps1 = [0.1, 0.05, 0.025]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.coefficient.dim, 1);
        assert_eq!(c.cz.p, vec![2.0]);
        assert_eq!(c.forcing.f, vec!["smooth".to_string(), "piecewise".to_string()]);
        assert_eq!(c.output.report, "report.json");
        assert_eq!(c.family.members().unwrap().len(), 3);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\n[grid]\ncells_per_perod = 4\n");
        let err = parse_config_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cells_per_perod"), "{msg}");
        assert!(msg.contains("grid"), "{msg}");
    }

    #[test]
    fn p_one_is_rejected() {
        let text = format!("{MINIMAL}\n[cz]\np = [1.0, 2.0]\n");
        assert!(matches!(parse_config_str(&text), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unsorted_family_is_rejected() {
        let text = MINIMAL.replace("[0.1, 0.05, 0.025]", "[0.05, 0.1]");
        assert!(matches!(parse_config_str(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn bad_expression_is_reported_with_path() {
        let text = MINIMAL.replace("2 + sin(2*pi*y1)", "2 + sin(y1)");
        match parse_config_str(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "coefficient.expr"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_round_trip() {
        let text = r#"
seed = 9
[coefficient]
expr = "(2 + sin(2*pi*y1))*(2 + cos(2*pi*y2))"
lambda = 0.1
[family]
rule = "paper"
dyadic = [4, 6]
[forcing]
f = ["smooth", "sin(2*pi*x)"]
F = "1"
[cz]
p = [2.0, 4.0]
"#;
        let a = parse_config_str(text).unwrap();
        let b = parse_config_str(&a.to_toml()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn family_rules() {
        let f = FamilyConfig { rule: FamilyRule::Paper, scales: vec![], eps1: vec![0.25], dyadic: None, ratios: vec![], delta: 1e-3 };
        let m = f.members().unwrap();
        assert!((m[0][1] - 0.25 * (1.0 / 3.0 + 0.5)).abs() < 1e-15);
        let f = FamilyConfig { rule: FamilyRule::Ratios, ratios: vec![1.0, 0.5, 0.2], ..f };
        assert_eq!(f.members().unwrap()[0], vec![0.25, 0.125, 0.05]);
    }

    #[test]
    fn liouville_constant() {
        assert!((liouville(4) - 0.110001).abs() < 1e-15);
        assert!((liouville(2) - 0.11).abs() < 1e-16);
    }

    #[test]
    fn constant_coefficient_ratio_is_eps_independent() {
        let text = r#"
[coefficient]
expr = "2"
[family]
rule = "single"
eps1 = [0.1, 0.05, 0.025, 0.0125]
[grid]
min_cells = 1024
[cz]
p = [2.0]
"#;
        let cfg = parse_config_str(text).unwrap();
        let rep = run_cz_sweep(&cfg).unwrap();
        assert!(rep.pass, "{:?}", rep.verdicts);
        for forcing in ["smooth", "piecewise"] {
            let r: Vec<f64> = rep.cz.iter().filter(|c| c.forcing == forcing).map(|c| c.ratio.unwrap()).collect();
            for v in &r {
                assert!((v / r[0] - 1.0).abs() < 1e-6);
            }
        }
        assert_eq!(rep.recompute_verdicts(), rep.verdicts);
        assert!(rep.cz.iter().all(|c| c.config_hash == rep.config_hash));
    }

    #[test]
    fn failing_instance_does_not_abort() {
        let text = r#"
[coefficient]
expr = "2 + sin(2*pi*y1)"
[family]
rule = "single"
eps1 = [0.1, 0.05, 0.025, 0.001]
[grid]
max_cells = 2000
[forcing]
f = ["smooth"]
"#;
        let cfg = parse_config_str(text).unwrap();
        let rep = run_cz_sweep(&cfg).unwrap();
        assert_eq!(rep.cz.len(), 4);
        assert!(rep.cz[3].status.starts_with("skipped"));
        assert!(rep.cz[..3].iter().all(|c| c.status == "ok"));
        assert!(!rep.pass);
    }

    #[test]
    fn window_for_three_scales() {
        let lip = LipschitzConfig { alpha: 0.5, ..Default::default() };
        let eps = [0.1, 0.1 * (1.0 / 3.0 + 0.01), 0.004];
        let (w, r1, q, ok) = lipschitz_window(&lip, &eps).unwrap();
        assert!(ok);
        assert!((q as f64) <= 0.004f64.powf(-1.0));
        assert!((w[0] - q as f64 * 0.004).abs() < 1e-15);
        assert_eq!(r1, w[1]);
        let lip = LipschitzConfig { alpha: 0.9, ..Default::default() };
        assert!(lipschitz_window(&lip, &eps).is_err());
    }

    #[test]
    fn window_for_free_delta() {
        let eps = [0.1, 0.1 * (1.0 / 3.0 + 0.01), 0.004];
        let lip = LipschitzConfig { alpha: 1.0 / 3.0, delta: Some(0.01), ..Default::default() };
        let (w, _, q, ok) = lipschitz_window(&lip, &eps).unwrap();
        assert!(ok && (q as f64) <= 0.01f64.powf(-1.0) * (1.0 + 1e-12));
        assert!((w[0] - q as f64 * 0.01).abs() < 1e-15);
        // All n ratios count now, so 1/(n-1) is too large.
        let lip = LipschitzConfig { alpha: 0.5, delta: Some(0.01), ..Default::default() };
        assert!(lipschitz_window(&lip, &eps).is_err());
        let lip = LipschitzConfig { delta: Some(0.001), ..Default::default() };
        assert!(lipschitz_window(&lip, &eps).is_err());
        let lip = LipschitzConfig { delta: Some(0.01), delta_slot: Some(2), ..Default::default() };
        assert!(lipschitz_window(&lip, &eps).is_err());
    }

    #[test]
    fn empty_window_is_reported() {
        let lip = LipschitzConfig { alpha: 0.1, ..Default::default() };
        assert!(matches!(lipschitz_window(&lip, &[1.5, 1.2]), Err(Error::WindowEmpty { .. })));
    }

    #[test]
    fn harmonic_profile_grows_with_radius() {
        let text = r#"
[coefficient]
expr = "1"
dim = 2
[family]
rule = "explicit"
scales = [[0.25, 0.125]]
[grid]
min_cells = 128
[lipschitz]
F = "0"
boundary = "x[1]*x[1] - x[2]*x[2] + x[1]*x[2]*x[2] - x[1]*x[1]*x[1]/3"
alpha = 0.25
rungs = 6
"#;
        let cfg = parse_config_str(text).unwrap();
        let rep = run_lipschitz(&cfg).unwrap();
        let prof: Vec<f64> = rep.profile.iter().map(|r| r.profile).collect();
        assert!(prof.len() >= 6);
        for w in prof.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-3), "{prof:?}");
        }
    }
}
