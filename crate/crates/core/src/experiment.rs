//! Experiment configs, end-to-end runs and the JSON report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::estimators::{EstimatorOptions, DEFAULT_DELTA};
use crate::noise::NoiseModel;
use crate::pauli::{load_hamiltonian, PauliSum};
use crate::pipeline::{
    compare_resources, exact_matrices, hadamard_matrices, hadamard_setting_count, shadow_matrices, solve_gevp,
    ElementFlag, GevpResult, GroupTable, MatrixElementEstimates, Method, PulledReference, ReferenceDatasets,
    ReferenceSpec, ResourceComparison, Shots, DEFAULT_S_MIN,
};
use crate::shadows::derive_seed;
use crate::sim::Circuit;
use crate::zne::{zne_hadamard_matrices, ZneConfig};
use crate::C64;

pub const DEFAULT_SWEEP_LAMBDAS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub label: String,
    pub circuit: PathBuf,
    /// Occupation bitstring of the Hartree-Fock determinant; inferred when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hf: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    DEFAULT_SWEEP_LAMBDAS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hamiltonian: PathBuf,
    pub references: Vec<ReferenceEntry>,
    pub method: Method,
    /// Snapshots per dataset (shadow) or shots per setting (Hadamard, 0 = exact).
    pub budget: u64,
    #[serde(default = "default_m")]
    pub estimator_m: usize,
    #[serde(default)]
    pub distill: bool,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default = "default_s_min")]
    pub s_min: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<PathBuf>,
    /// Bootstrap resamples for shadow SEs.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zne: Option<ZneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_m() -> usize {
    3
}
fn default_s_min() -> f64 {
    DEFAULT_S_MIN
}
fn default_bootstrap() -> usize {
    200
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl ExperimentConfig {
    pub fn parse(bytes: &[u8], location: &str) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            location: location.to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: &str| Err(contract(format!("config field `{name}`: {msg}")));
        if self.references.is_empty() {
            return field("references", "needs at least one reference");
        }
        for (k, r) in self.references.iter().enumerate() {
            if self.references[..k].iter().any(|o| o.label == r.label) {
                return field("references", &format!("duplicate label {:?}", r.label));
            }
            if r.label.is_empty() || r.label.contains(['/', '\\']) {
                return field("references", &format!("label {:?} must be a plain name", r.label));
            }
        }
        if !(1..=3).contains(&self.estimator_m) {
            return field("estimator_m", "must be 1, 2 or 3");
        }
        if !(self.s_min > 0.0 && self.s_min < 1.0) {
            return field("s_min", "must lie in (0, 1)");
        }
        if !(self.delta >= 0.0) {
            return field("delta", "must be >= 0");
        }
        if self.method == Method::Shadow && self.budget == 0 {
            return field("budget", "shadow method needs at least one snapshot");
        }
        if let Some(n) = &self.noise {
            n.validate().map_err(|e| contract(format!("config field `noise`: {e}")))?;
        }
        if let Some(z) = &self.zne {
            z.validate().map_err(|e| contract(format!("config field `zne`: {e}")))?;
        }
        if let Some(s) = &self.sweep {
            if s.lambdas.is_empty() || s.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return field("sweep.lambdas", "must be a non-empty list of finite values >= 0");
            }
        }
        Ok(())
    }

    pub fn estimator_options(&self, distill: bool) -> EstimatorOptions {
        EstimatorOptions {
            m: self.estimator_m,
            distill,
            delta: self.delta,
            bootstrap: self.bootstrap,
            seed: derive_seed(self.seed, "bootstrap"),
        }
    }
}

/// A validated config with every referenced input loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub specs: Vec<ReferenceSpec>,
    pub hamiltonian: PauliSum,
    pub groups: Option<GroupTable>,
}

impl Experiment {
    /// Reads a config file; relative input paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = crate::io::read(path)?;
        let config = ExperimentConfig::parse(&bytes, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(config, base)
    }

    pub fn from_config(config: ExperimentConfig, base: &Path) -> Result<Self> {
        config.validate()?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let hamiltonian = load_hamiltonian(&resolve(&config.hamiltonian))?;
        let specs = config
            .references
            .iter()
            .map(|r| {
                let c = Circuit::load(&resolve(&r.circuit))?;
                ReferenceSpec::new(&r.label, c, r.hf.as_deref())
            })
            .collect::<Result<Vec<_>>>()?;
        if specs.iter().any(|s| s.num_qubits != hamiltonian.num_qubits()) {
            return Err(contract("config field `references`: circuit width differs from the Hamiltonian"));
        }
        let groups = config.groups.as_ref().map(|g| GroupTable::load(&resolve(g))).transpose()?;
        Ok(Experiment {
            config,
            specs,
            hamiltonian,
            groups,
        })
    }

    pub fn labels(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.label.clone()).collect()
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.config.noise.as_ref()
    }

    /// Hadamard shots per setting that spend the same total as the shadow path
    /// (three datasets of `budget` snapshots per reference).
    pub fn matched_hadamard_shots(&self) -> u64 {
        let total = 3 * self.specs.len() as u64 * self.config.budget;
        let settings = hadamard_setting_count(&self.specs, &self.hamiltonian, self.groups.as_ref()) as u64;
        (total / settings.max(1)).max(1)
    }
}

/// Complex matrix as rows of [re, im].
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

fn to_json(m: &DMatrix<C64>) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn from_json(rows: &MatrixJson, name: &str) -> Result<DMatrix<C64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Format {
            location: name.to_string(),
            message: "matrix must be square and non-empty".into(),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub labels: Vec<String>,
    pub s: MatrixJson,
    pub h: MatrixJson,
    pub s_se: Option<MatrixJson>,
    pub h_se: Option<MatrixJson>,
    pub flags: Vec<ElementFlag>,
    pub overlap_residuals: Vec<(usize, usize, f64)>,
    pub shots: u64,
}

impl From<&MatrixElementEstimates> for MatrixReport {
    fn from(e: &MatrixElementEstimates) -> Self {
        MatrixReport {
            labels: e.labels.clone(),
            s: to_json(&e.s),
            h: to_json(&e.h),
            s_se: e.s_se.as_ref().map(to_json),
            h_se: e.h_se.as_ref().map(to_json),
            flags: e.flags.clone(),
            overlap_residuals: e.overlap_residuals.clone(),
            shots: e.shots,
        }
    }
}

impl MatrixReport {
    pub fn to_estimates(&self) -> Result<MatrixElementEstimates> {
        let s = from_json(&self.s, "s")?;
        let h = from_json(&self.h, "h")?;
        if s.nrows() != self.labels.len() || h.nrows() != self.labels.len() {
            return Err(Error::Format {
                location: "matrices".into(),
                message: "matrix size differs from the label count".into(),
            });
        }
        Ok(MatrixElementEstimates {
            labels: self.labels.clone(),
            s,
            h,
            s_se: self.s_se.as_ref().map(|m| from_json(m, "s_se")).transpose()?,
            h_se: self.h_se.as_ref().map(|m| from_json(m, "h_se")).transpose()?,
            flags: self.flags.clone(),
            overlap_residuals: self.overlap_residuals.clone(),
            shots: self.shots,
        })
    }
}

/// Estimates as written by `estimate` and read by `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub method: Method,
    pub raw: MatrixReport,
    pub distilled: Option<MatrixReport>,
}

impl EstimatesFile {
    /// The distilled matrices when present, else the raw ones.
    pub fn preferred(&self) -> &MatrixReport {
        self.distilled.as_ref().unwrap_or(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZneSummary {
    pub scales: Vec<f64>,
    pub shots_per_scale: u64,
    pub per_scale_ground: Vec<f64>,
    pub fits: usize,
    pub linear_fallbacks: usize,
    pub total_shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub method: Method,
    pub exact_mode: bool,
    pub matrices: Option<MatrixReport>,
    pub gevp: Option<GevpResult>,
    /// Raw estimates when `matrices` holds the distilled ones.
    pub raw_matrices: Option<MatrixReport>,
    pub raw_gevp: Option<GevpResult>,
    pub ground_energy: Option<f64>,
    pub exact_energies: Vec<f64>,
    pub abs_error: Option<f64>,
    pub resources: ResourceComparison,
    pub zne: Option<ZneSummary>,
    pub sweep_rows: Option<usize>,
    pub shots: u64,
    pub timing: Timing,
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    /// Report skeleton for `exp`; numeric sections are filled by the commands.
    pub fn new(command: &str, exp: &Experiment, exact_mode: bool) -> Result<Self> {
        let exact = exact_matrices(&exp.specs, &exp.hamiltonian)?;
        let exact_energies = solve_gevp(&exact.s, &exact.h, exp.config.s_min)?.energies;
        Ok(ExperimentReport {
            version: format!("noqe {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed: exp.config.seed,
            config: exp.config.clone(),
            method: if exact_mode { Method::Exact } else { exp.config.method },
            exact_mode,
            matrices: None,
            gevp: None,
            raw_matrices: None,
            raw_gevp: None,
            ground_energy: None,
            exact_energies,
            abs_error: None,
            resources: compare_resources(&exp.specs)?,
            zne: None,
            sweep_rows: None,
            shots: 0,
            timing: Timing { wall_seconds: 0.0 },
            artifacts: Vec::new(),
        })
    }

    /// Records the primary matrices and their GEVP solution.
    pub fn set_solution(&mut self, m: &MatrixElementEstimates, gevp: GevpResult) {
        self.ground_energy = gevp.energies.first().copied();
        self.abs_error = match (self.ground_energy, self.exact_energies.first()) {
            (Some(e), Some(e0)) => Some((e - e0).abs()),
            _ => None,
        };
        self.matrices = Some(m.into());
        self.gevp = Some(gevp);
        self.shots = m.shots;
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }
}

/// Shadow matrices from in-memory datasets: raw, plus distilled when asked.
pub fn shadow_estimates(
    exp: &Experiment,
    refs: &[PulledReference],
    distill: bool,
) -> Result<(MatrixElementEstimates, Option<MatrixElementEstimates>)> {
    let labels = exp.labels();
    let raw = shadow_matrices(&labels, refs, &exp.hamiltonian, &exp.config.estimator_options(false))?;
    let distilled = distill
        .then(|| shadow_matrices(&labels, refs, &exp.hamiltonian, &exp.config.estimator_options(true)))
        .transpose()?;
    Ok((raw, distilled))
}

pub fn pull_datasets(datasets: &[ReferenceDatasets]) -> Vec<PulledReference> {
    datasets.iter().map(PulledReference::new).collect()
}

/// Matrices for the configured method; `exact_mode` swaps in the statevector oracle.
/// Returns the primary estimates and, for distilled shadow runs, the raw ones.
pub fn run_matrices(
    exp: &Experiment,
    exact_mode: bool,
) -> Result<(MatrixElementEstimates, Option<MatrixElementEstimates>)> {
    let cfg = &exp.config;
    if exact_mode || cfg.method == Method::Exact {
        return Ok((exact_matrices(&exp.specs, &exp.hamiltonian)?, None));
    }
    match cfg.method {
        Method::Hadamard => {
            let shots = if cfg.budget == 0 {
                Shots::Exact
            } else {
                Shots::PerSetting(cfg.budget)
            };
            let m = hadamard_matrices(&exp.specs, &exp.hamiltonian, shots, exp.noise(), cfg.seed, exp.groups.as_ref())?;
            Ok((m, None))
        }
        Method::Shadow => {
            let refs = exp
                .specs
                .iter()
                .map(|s| PulledReference::acquire(s, cfg.budget as usize, exp.noise(), cfg.seed))
                .collect::<Result<Vec<_>>>()?;
            let (raw, distilled) = shadow_estimates(exp, &refs, cfg.distill)?;
            Ok(match distilled {
                Some(d) => (d, Some(raw)),
                None => (raw, None),
            })
        }
        Method::Exact => unreachable!("handled above"),
    }
}

/// End-to-end run: matrices for the configured method, GEVP, report.
pub fn noqe_energy(exp: &Experiment, exact_mode: bool) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("run", exp, exact_mode)?;
    let (primary, raw) = run_matrices(exp, exact_mode)?;
    let gevp = solve_gevp(&primary.s, &primary.h, exp.config.s_min)?;
    report.set_solution(&primary, gevp);
    if let Some(raw) = raw {
        report.raw_gevp = Some(solve_gevp(&raw.s, &raw.h, exp.config.s_min)?);
        report.raw_matrices = Some((&raw).into());
    }
    report.timing.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// ZNE-mitigated Hadamard run; needs a `zne` block in the config.
pub fn zne_energy(exp: &Experiment, exact_mode: bool) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut cfg = exp
        .config
        .zne
        .clone()
        .ok_or_else(|| contract("config field `zne`: required by the zne command"))?;
    if exact_mode {
        cfg.shots_per_scale = 0;
    }
    let z = zne_hadamard_matrices(
        &exp.specs,
        &exp.hamiltonian,
        exp.groups.as_ref(),
        &cfg,
        exp.noise(),
        exp.config.seed,
    )?;
    let mut report = ExperimentReport::new("zne", exp, exact_mode)?;
    report.method = Method::Hadamard;
    let per_scale_ground = z
        .per_scale
        .iter()
        .map(|m| Ok(solve_gevp(&m.s, &m.h, exp.config.s_min)?.energies[0]))
        .collect::<Result<Vec<_>>>()?;
    let gevp = solve_gevp(&z.mitigated.s, &z.mitigated.h, exp.config.s_min)?;
    report.set_solution(&z.mitigated, gevp);
    report.raw_matrices = Some((&z.per_scale[0]).into());
    report.raw_gevp = Some(solve_gevp(&z.per_scale[0].s, &z.per_scale[0].h, exp.config.s_min)?);
    report.shots = z.total_shots;
    report.zne = Some(ZneSummary {
        scales: cfg.scales.clone(),
        shots_per_scale: cfg.shots_per_scale,
        per_scale_ground,
        fits: z.fits,
        linear_fallbacks: z.linear_fallbacks,
        total_shots: z.total_shots,
    });
    report.timing.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// One CSV row of a noise sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub method: String,
    pub quantity: String,
    pub value: f64,
    pub se: Option<f64>,
    pub true_value: f64,
    pub abs_error: f64,
}

fn quantity_rows(lambda: f64, method: &str, m: &MatrixElementEstimates, exact: &MatrixElementEstimates, e: f64, e0: f64) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let mut push = |quantity: String, value: f64, se: Option<f64>, true_value: f64| {
        rows.push(SweepRow {
            lambda,
            method: method.to_string(),
            quantity,
            value,
            se,
            true_value,
            abs_error: (value - true_value).abs(),
        })
    };
    let size = m.size();
    for i in 0..size {
        for j in i..size {
            let tag = format!("{}{}", i + 1, j + 1);
            if i == j {
                let se = m.h_se.as_ref().map(|s| s[(i, i)].re);
                push(format!("H{tag}"), m.h[(i, i)].re, se, exact.h[(i, i)].re);
                continue;
            }
            for (name, mat, se, ex) in [("S", &m.s, &m.s_se, &exact.s), ("H", &m.h, &m.h_se, &exact.h)] {
                let se = se.as_ref().map(|s| s[(i, j)]);
                push(format!("{name}{tag}_re"), mat[(i, j)].re, se.map(|s| s.re), ex[(i, j)].re);
                push(format!("{name}{tag}_im"), mat[(i, j)].im, se.map(|s| s.im), ex[(i, j)].im);
            }
        }
    }
    push("E0".into(), e, None, e0);
    rows
}

/// Noise sweep over the configured lambdas. At each lambda the shadow path runs
/// with `budget` snapshots per dataset (raw, plus distilled when enabled) and the
/// Hadamard path with the matched per-setting shot count, or exact expectations
/// under `exact_mode`.
pub fn run_sweep(exp: &Experiment, exact_mode: bool) -> Result<Vec<SweepRow>> {
    let cfg = &exp.config;
    let lambdas = cfg.sweep.as_ref().map(|s| s.lambdas.clone()).unwrap_or_else(default_lambdas);
    let exact = exact_matrices(&exp.specs, &exp.hamiltonian)?;
    let e0 = solve_gevp(&exact.s, &exact.h, cfg.s_min)?.energies[0];
    let base = cfg.noise.clone().unwrap_or_default();
    let ground = |m: &MatrixElementEstimates| -> Result<f64> { Ok(solve_gevp(&m.s, &m.h, cfg.s_min)?.energies[0]) };
    let mut rows = Vec::new();
    for (k, &lambda) in lambdas.iter().enumerate() {
        let noise = NoiseModel { lambda, ..base.clone() };
        let seed = derive_seed(cfg.seed, &format!("sweep/{k}"));
        let refs = exp
            .specs
            .iter()
            .map(|s| PulledReference::acquire(s, cfg.budget as usize, Some(&noise), seed))
            .collect::<Result<Vec<_>>>()?;
        let (raw, distilled) = shadow_estimates(exp, &refs, cfg.distill)?;
        drop(refs);
        rows.extend(quantity_rows(lambda, "shadow", &raw, &exact, ground(&raw)?, e0));
        if let Some(d) = distilled {
            rows.extend(quantity_rows(lambda, "shadow_distilled", &d, &exact, ground(&d)?, e0));
        }
        let shots = if exact_mode {
            Shots::Exact
        } else {
            Shots::PerSetting(exp.matched_hadamard_shots())
        };
        let had = hadamard_matrices(&exp.specs, &exp.hamiltonian, shots, Some(&noise), seed, exp.groups.as_ref())?;
        rows.extend(quantity_rows(lambda, "hadamard", &had, &exact, ground(&had)?, e0));
    }
    // group rows by method and quantity so each block lists every lambda
    let order = |r: &SweepRow| (r.method.clone(), r.quantity.clone());
    rows.sort_by(|a, b| order(a).cmp(&order(b)).then(a.lambda.total_cmp(&b.lambda)));
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| contract(format!("csv: {e}"));
    w.write_record(["lambda", "method", "quantity", "value", "se", "true_value", "abs_error"])
        .map_err(err)?;
    for r in rows {
        let se = r.se.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            r.lambda.to_string(),
            r.method.clone(),
            r.quantity.clone(),
            r.value.to_string(),
            se,
            r.true_value.to_string(),
            r.abs_error.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| contract(format!("csv: {e}")))
}
