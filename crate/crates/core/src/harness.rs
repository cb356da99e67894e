//! End-to-end discovery pipeline, Monte-Carlo experiment sweeps over noise
//! level and resolution, and support-recovery metrics.
//!
//! A sweep simulates one fine clean dataset per system, subsamples it down a
//! resolution ladder, and for every (noise level, resolution, trial) cell
//! draws an independently seeded noise instantiation, runs the discovery
//! pipeline (optional filter → weak-system assembly → MSTLS), and records
//! support recovery and the maximum relative coefficient error.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{Dataset, LevelMode, NoiseDistribution, NoiseSpec};
use crate::error::{Error, Result};
use crate::filtering;
use crate::numeric::{mix_seed, monomials_grlex};
use crate::simulate::{SimConfig, System};
use crate::sparsereg::{self, SparseModel};
use crate::weaksys::{assemble, choose_query_points, LibrarySpec};

/// The experiment library, true coefficients, and defaults for one system.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub system: System,
    pub library: LibrarySpec,
    /// Per response column, length 𝔍 each.
    pub w_true: Vec<Vec<f64>>,
    pub support_fraction: Vec<f64>,
}

/// Places a coefficient on the column for derivative block `s` (0-based over
/// the trial operators) and monomial exponent vector `expon`.
fn place(
    lib: &LibrarySpec,
    w: &mut [f64],
    s: usize,
    expon: &[u32],
    value: f64,
) {
    let monos = monomials_grlex(lib.state_dim(), lib.poly_max_total_degree().unwrap());
    let j = monos
        .iter()
        .position(|m| m.as_slice() == expon)
        .expect("exponent in library");
    w[s * lib.j_per_block() + j] = value;
}

/// The experiment setup for a system: library, true weights, and the default
/// test-function support fraction per axis.
pub fn system_spec(system: System) -> SystemSpec {
    match system {
        System::Lorenz => {
            let lib = LibrarySpec::polynomial(3, 6, vec![vec![1], vec![0]]).unwrap();
            let total = lib.total_columns();
            let mut w1 = vec![0.0; total];
            let mut w2 = vec![0.0; total];
            let mut w3 = vec![0.0; total];
            place(&lib, &mut w1, 0, &[1, 0, 0], -10.0);
            place(&lib, &mut w1, 0, &[0, 1, 0], 10.0);
            place(&lib, &mut w2, 0, &[1, 0, 0], 28.0);
            place(&lib, &mut w2, 0, &[0, 1, 0], -1.0);
            place(&lib, &mut w2, 0, &[1, 0, 1], -1.0);
            place(&lib, &mut w3, 0, &[0, 0, 1], -8.0 / 3.0);
            place(&lib, &mut w3, 0, &[1, 1, 0], 1.0);
            SystemSpec { system, library: lib, w_true: vec![w1, w2, w3], support_fraction: vec![0.02] }
        }
        System::CubicOscillator => {
            let lib = LibrarySpec::polynomial(2, 6, vec![vec![1], vec![0]]).unwrap();
            let total = lib.total_columns();
            let mut w1 = vec![0.0; total];
            let mut w2 = vec![0.0; total];
            place(&lib, &mut w1, 0, &[3, 0], -0.1);
            place(&lib, &mut w1, 0, &[0, 3], 2.0);
            place(&lib, &mut w2, 0, &[3, 0], -2.0);
            place(&lib, &mut w2, 0, &[0, 3], -0.1);
            SystemSpec { system, library: lib, w_true: vec![w1, w2], support_fraction: vec![0.02] }
        }
        System::BurgersNl => {
            let mut alphas = vec![vec![0, 1]];
            alphas.extend((0..=6).map(|q| vec![q, 0]));
            let lib = LibrarySpec::polynomial(1, 6, alphas).unwrap();
            let total = lib.total_columns();
            let mut w = vec![0.0; total];
            place(&lib, &mut w, 0, &[0], 1.0);
            place(&lib, &mut w, 0, &[2], 2.0);
            place(&lib, &mut w, 0, &[3], -1.0);
            place(&lib, &mut w, 1, &[2], -0.5);
            place(&lib, &mut w, 2, &[1], 0.01);
            SystemSpec { system, library: lib, w_true: vec![w], support_fraction: vec![0.25, 0.25] }
        }
        System::HyperKs => {
            let mut alphas = vec![vec![0, 1]];
            alphas.extend((0..=8).map(|q| vec![q, 0]));
            let lib = LibrarySpec::polynomial(1, 8, alphas).unwrap();
            let total = lib.total_columns();
            let mut w = vec![0.0; total];
            place(&lib, &mut w, 4, &[1], 1.0);
            place(&lib, &mut w, 6, &[1], 0.75);
            place(&lib, &mut w, 1, &[2], -0.5);
            place(&lib, &mut w, 3, &[2], 0.1);
            // Test-function support covers 1/25 of the space-time domain,
            // i.e. one fifth of each axis.
            SystemSpec { system, library: lib, w_true: vec![w], support_fraction: vec![0.2, 0.2] }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionMode {
    /// Full STLS inner loops over a user grid (default: log₁₀ linspace(−4,0,100)).
    Grid,
    /// One thresholding round per candidate over the w⁰ midpoint grid.
    OneShot,
}

impl RegressionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(RegressionMode::Grid),
            "oneshot" => Ok(RegressionMode::OneShot),
            other => Err(Error::InvalidArgument(format!("unknown regression mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilteringMode {
    Off,
    /// Moving average with the static width rule from σ_est and the prior τ*.
    Heuristic,
    /// Moving average with the adaptive per-axis width iteration.
    Adaptive,
}

impl FilteringMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(FilteringMode::Off),
            "heuristic" => Ok(FilteringMode::Heuristic),
            "adaptive" => Ok(FilteringMode::Adaptive),
            other => Err(Error::InvalidArgument(format!("unknown filtering mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscoveryParams {
    pub library: LibrarySpec,
    pub support_fraction: Vec<f64>,
    /// Explicit per-axis stencil half-widths; overrides the fraction rule.
    pub radii_override: Option<Vec<usize>>,
    pub query_budget: usize,
    pub mode: RegressionMode,
    pub filtering: FilteringMode,
    /// Prior on min|w*|/‖w*‖_∞ used by the heuristic filter width.
    pub tau_star: f64,
    pub lambda_grid: Vec<f64>,
    pub stls_iters: usize,
}

impl DiscoveryParams {
    pub fn new(library: LibrarySpec, support_fraction: Vec<f64>) -> Self {
        let stls_iters = library.total_columns();
        Self {
            library,
            support_fraction,
            radii_override: None,
            query_budget: 1000,
            mode: RegressionMode::Grid,
            filtering: FilteringMode::Off,
            tau_star: 0.01,
            lambda_grid: sparsereg::default_lambda_grid(),
            stls_iters,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscoveryOutput {
    /// One sparse model per response column of `b`.
    pub models: Vec<SparseModel>,
    pub radii: Vec<usize>,
    /// Realized test-function support in grid points, m = ∏(2m_q+1).
    pub support_size: usize,
    pub realized_fraction: Vec<f64>,
    pub num_query_points: usize,
    pub filter_widths: Option<Vec<usize>>,
    pub sigma_est: Option<f64>,
}

/// Half-widths from a per-axis support fraction, rounded down, at least 1.
pub fn radii_from_fraction(counts: &[usize], fraction: &[f64]) -> Vec<usize> {
    counts
        .iter()
        .zip(fraction)
        .map(|(&n, &f)| {
            let target = f * n as f64;
            (((target - 1.0) / 2.0).floor().max(1.0) as usize).min((n - 1) / 2)
        })
        .collect()
}

/// Optional filter, weak-system assembly, MSTLS per response column.
pub fn run_discovery(dataset: &Dataset, params: &DiscoveryParams) -> Result<DiscoveryOutput> {
    let counts = dataset.grid.counts();
    let radii = match &params.radii_override {
        Some(r) => r.clone(),
        None => {
            if params.support_fraction.len() == 1 && counts.len() > 1 {
                radii_from_fraction(counts, &vec![params.support_fraction[0]; counts.len()])
            } else {
                radii_from_fraction(counts, &params.support_fraction)
            }
        }
    };
    let support_size: usize = radii.iter().map(|m| 2 * m + 1).product();

    let mut filter_widths = None;
    let mut sigma_est = None;
    let filtered;
    let working: &Dataset = match params.filtering {
        FilteringMode::Off => dataset,
        FilteringMode::Heuristic => {
            let est = filtering::estimate_sigma(dataset)?;
            sigma_est = Some(est.sigma_est);
            let p_max = params.library.poly_max_total_degree().unwrap_or(6);
            let widths = filtering::filter_width_heuristic(
                est.sigma_est,
                p_max,
                params.tau_star,
                dataset.grid.dims() - 1,
                support_size,
            );
            let spec = filtering::FilterSpec::new(widths.clone())?;
            filter_widths = Some(widths);
            filtered = filtering::moving_average(dataset, &spec)?;
            &filtered
        }
        FilteringMode::Adaptive => {
            let est = filtering::estimate_sigma(dataset)?;
            sigma_est = Some(est.sigma_est);
            // Adaptive width per axis from the middle lane of component 0.
            let mut widths = Vec::with_capacity(counts.len());
            for axis in 0..counts.len() {
                let series = middle_lane(dataset, axis);
                let h = dataset.grid.resolution()[axis];
                let n_max = (counts[axis] / 4).max(3);
                let r = filtering::adaptive_smaf_width(&series, est.sigma_est, h, 2.0, 1e-6, n_max);
                widths.push(r.width.min(counts[axis]));
            }
            let spec = filtering::FilterSpec::new(widths.clone())?;
            filter_widths = Some(widths);
            filtered = filtering::moving_average(dataset, &spec)?;
            &filtered
        }
    };

    let query_points = choose_query_points(&working.grid, &radii, params.query_budget)?;
    let ws = assemble(working, &params.library, &radii, &query_points)?;

    let models: Vec<SparseModel> = (0..working.state_dim)
        .map(|col| {
            let b = ws.b.column(col).into_owned();
            match params.mode {
                RegressionMode::Grid => {
                    sparsereg::mstls(&ws.g, &b, &params.lambda_grid, params.stls_iters)
                }
                RegressionMode::OneShot => sparsereg::mstls_oneshot(&ws.g, &b),
            }
        })
        .collect::<Result<_>>()?;

    let realized_fraction = radii
        .iter()
        .zip(counts)
        .map(|(&m, &n)| (2 * m + 1) as f64 / n as f64)
        .collect();

    Ok(DiscoveryOutput {
        models,
        radii,
        support_size,
        realized_fraction,
        num_query_points: query_points.len(),
        filter_widths,
        sigma_est,
    })
}

fn middle_lane(dataset: &Dataset, axis: usize) -> Vec<f64> {
    let counts = dataset.grid.counts();
    let n = counts[axis];
    let mut out = Vec::with_capacity(n);
    let mut idx: Vec<usize> = counts.iter().map(|&c| c / 2).collect();
    for i in 0..n {
        idx[axis] = i;
        let mut full = idx.clone();
        full.push(0);
        out.push(dataset.values[ndarray::IxDyn(&full)]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryMetrics {
    pub support_exact: bool,
    pub support_subset: bool,
    /// max_{j∈S*} |ŵ_j − w*_j| / |w*_j| over all response columns.
    pub e_inf: f64,
}

/// Compares recovered models against the true coefficient matrix (one column
/// per response). E_∞ is computed over the true support regardless of the
/// support match; a dropped true term contributes ratio 1.
pub fn metrics(models: &[SparseModel], w_true: &[Vec<f64>]) -> RecoveryMetrics {
    assert_eq!(models.len(), w_true.len(), "one model per response column");
    let mut exact = true;
    let mut subset = true;
    let mut e_inf = 0.0f64;
    for (model, truth) in models.iter().zip(w_true) {
        for (j, (&w_hat, &w_star)) in model.weights.iter().zip(truth).enumerate() {
            let _ = j;
            if w_star != 0.0 {
                if w_hat == 0.0 {
                    exact = false;
                }
                e_inf = e_inf.max((w_hat - w_star).abs() / w_star.abs());
            } else if w_hat != 0.0 {
                exact = false;
                subset = false;
            }
        }
    }
    RecoveryMetrics { support_exact: exact, support_subset: subset, e_inf }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: System,
    /// Fine-grid simulation counts (system default when empty).
    pub sim_counts: Vec<usize>,
    /// Per-level subsampling factors applied to every grid axis.
    pub factors: Vec<usize>,
    pub sigma_mode: LevelMode,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub support_fraction: Vec<f64>,
    pub radii_override: Option<Vec<usize>>,
    pub query_budget: usize,
    pub mode: RegressionMode,
    pub filtering: FilteringMode,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn new(system: System) -> Self {
        let spec = system_spec(system);
        Self {
            system,
            sim_counts: Vec::new(),
            factors: vec![1],
            sigma_mode: LevelMode::NoiseRatio,
            sigmas: vec![0.01],
            trials: 20,
            support_fraction: spec.support_fraction.clone(),
            radii_override: None,
            query_budget: 1000,
            mode: RegressionMode::Grid,
            filtering: FilteringMode::Off,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub sigma_index: usize,
    pub level_index: usize,
    pub trial: usize,
    /// The configured level value (σ or σ_NR depending on sigma_mode).
    pub sigma_level: f64,
    pub m_total: usize,
    pub support_exact: bool,
    pub support_subset: bool,
    pub e_inf: f64,
    pub lambda_hat: f64,
    pub runtime_ms: f64,
    pub seed: u64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct CellAggregate {
    pub sigma_level: f64,
    pub m_total: usize,
    pub p_exact: f64,
    pub p_subset: f64,
    pub mean_e_inf_exact: f64,
    pub mean_e_inf_all: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone)]
pub struct LevelMeta {
    pub level_index: usize,
    pub factor: usize,
    pub counts: Vec<usize>,
    pub radii: Vec<usize>,
    pub m_total: usize,
    pub realized_fraction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub system: System,
    pub sigma_mode: LevelMode,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Vec<CellAggregate>,
    pub levels: Vec<LevelMeta>,
}

/// Runs the full sweep: every (σ, resolution) cell gets `trials` independent
/// noise draws with per-trial seeds derived from the master seed; individual
/// trial failures are recorded as failed rows without aborting the sweep.
/// Results are merged in (σ, level, trial) order regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let spec = system_spec(config.system);
    let mut sim = SimConfig::defaults(config.system);
    if !config.sim_counts.is_empty() {
        sim = sim.with_counts(config.sim_counts.clone());
    }
    let fine = crate::simulate::simulate(&sim)?;

    // Subsample the ladder once.
    let mut levels = Vec::new();
    let mut level_data = Vec::new();
    for (li, &f) in config.factors.iter().enumerate() {
        let factors = vec![f; fine.grid.dims()];
        let ds = fine.subsample(&factors)?;
        let radii = match &config.radii_override {
            Some(r) => r.clone(),
            None => {
                let frac = if config.support_fraction.len() == 1 && ds.grid.dims() > 1 {
                    vec![config.support_fraction[0]; ds.grid.dims()]
                } else {
                    config.support_fraction.clone()
                };
                radii_from_fraction(ds.grid.counts(), &frac)
            }
        };
        let m_total = radii.iter().map(|m| 2 * m + 1).product();
        levels.push(LevelMeta {
            level_index: li,
            factor: f,
            counts: ds.grid.counts().to_vec(),
            radii: radii.clone(),
            m_total,
            realized_fraction: radii
                .iter()
                .zip(ds.grid.counts())
                .map(|(&m, &n)| (2 * m + 1) as f64 / n as f64)
                .collect(),
        });
        level_data.push((ds, radii));
    }

    let mut jobs = Vec::new();
    for si in 0..config.sigmas.len() {
        for li in 0..config.factors.len() {
            for trial in 0..config.trials {
                jobs.push((si, li, trial));
            }
        }
    }

    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(si, li, trial)| {
            let (ds, radii) = &level_data[li];
            let seed = mix_seed(config.master_seed, &[si as u64, li as u64, trial as u64]);
            let spec_noise = NoiseSpec {
                distribution: NoiseDistribution::Gaussian,
                level_mode: config.sigma_mode,
                level: config.sigmas[si],
                seed,
            };
            let started = Instant::now();
            let outcome = ds.add_noise(&spec_noise).and_then(|noisy| {
                let mut params =
                    DiscoveryParams::new(spec.library.clone(), config.support_fraction.clone());
                params.radii_override = Some(radii.clone());
                params.query_budget = config.query_budget;
                params.mode = config.mode;
                params.filtering = config.filtering;
                run_discovery(&noisy, &params)
            });
            let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
            let m_total = radii.iter().map(|m| 2 * m + 1).product();
            match outcome {
                Ok(out) => {
                    let m = metrics(&out.models, &spec.w_true);
                    TrialRecord {
                        sigma_index: si,
                        level_index: li,
                        trial,
                        sigma_level: config.sigmas[si],
                        m_total,
                        support_exact: m.support_exact,
                        support_subset: m.support_subset,
                        e_inf: m.e_inf,
                        lambda_hat: out.models[0].lambda_hat,
                        runtime_ms,
                        seed,
                        status: "ok".into(),
                    }
                }
                Err(e) => TrialRecord {
                    sigma_index: si,
                    level_index: li,
                    trial,
                    sigma_level: config.sigmas[si],
                    m_total,
                    support_exact: false,
                    support_subset: false,
                    e_inf: f64::NAN,
                    lambda_hat: f64::NAN,
                    runtime_ms,
                    seed,
                    status: format!("failed: {e}"),
                },
            }
        })
        .collect();

    let mut records = records;
    records.sort_by_key(|r| (r.sigma_index, r.level_index, r.trial));
    let aggregates = aggregate(&records);
    Ok(ExperimentResult {
        system: config.system,
        sigma_mode: config.sigma_mode,
        trials: records,
        aggregates,
        levels,
    })
}

/// Per-cell aggregates recomputed exactly from the trial rows.
pub fn aggregate(records: &[TrialRecord]) -> Vec<CellAggregate> {
    let mut cells: BTreeMap<(usize, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.sigma_index, r.level_index)).or_default().push(r);
    }
    cells
        .values()
        .map(|rows| {
            let n = rows.len();
            let exact: Vec<&&TrialRecord> = rows.iter().filter(|r| r.support_exact).collect();
            let ok: Vec<&&TrialRecord> =
                rows.iter().filter(|r| r.status == "ok" && r.e_inf.is_finite()).collect();
            let mean_exact = if exact.is_empty() {
                f64::NAN
            } else {
                exact.iter().map(|r| r.e_inf).sum::<f64>() / exact.len() as f64
            };
            let mean_all = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| r.e_inf).sum::<f64>() / ok.len() as f64
            };
            CellAggregate {
                sigma_level: rows[0].sigma_level,
                m_total: rows[0].m_total,
                p_exact: rows.iter().filter(|r| r.support_exact).count() as f64 / n as f64,
                p_subset: rows.iter().filter(|r| r.support_subset).count() as f64 / n as f64,
                mean_e_inf_exact: mean_exact,
                mean_e_inf_all: mean_all,
                n_trials: n,
            }
        })
        .collect()
}

pub fn trials_csv(result: &ExperimentResult) -> String {
    let mut s = String::from(
        "system,sigma_mode,sigma,m,trial,support_exact,support_subset,e_inf,lambda_hat,runtime_ms,seed,status\n",
    );
    let mode = match result.sigma_mode {
        LevelMode::AbsoluteSigma => "absolute",
        LevelMode::NoiseRatio => "noise_ratio",
    };
    for r in &result.trials {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            result.system.name(),
            mode,
            r.sigma_level,
            r.m_total,
            r.trial,
            r.support_exact,
            r.support_subset,
            r.e_inf,
            r.lambda_hat,
            r.runtime_ms,
            r.seed,
            r.status
        ));
    }
    s
}

pub fn aggregates_csv(result: &ExperimentResult) -> String {
    let mut s =
        String::from("system,sigma,m,p_exact,p_subset,mean_e_inf_exact,mean_e_inf_all,n_trials\n");
    for a in &result.aggregates {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            result.system.name(),
            a.sigma_level,
            a.m_total,
            a.p_exact,
            a.p_subset,
            a.mean_e_inf_exact,
            a.mean_e_inf_all,
            a.n_trials
        ));
    }
    s
}

/// Per-level metadata (factor, counts, per-axis radii, total m, realized
/// support fraction) as CSV; complements the fixed trial/aggregate schemas.
pub fn levels_csv(result: &ExperimentResult) -> String {
    let mut s = String::from("system,level,factor,counts,radii,m,realized_fraction\n");
    for l in &result.levels {
        let counts: Vec<String> = l.counts.iter().map(|c| c.to_string()).collect();
        let radii: Vec<String> = l.radii.iter().map(|c| c.to_string()).collect();
        let frac: Vec<String> = l.realized_fraction.iter().map(|f| format!("{f:.6}")).collect();
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            result.system.name(),
            l.level_index,
            l.factor,
            counts.join("x"),
            radii.join("x"),
            l.m_total,
            frac.join("x")
        ));
    }
    s
}

/// Parses the flat `key=value` experiment configuration format. Lines
/// starting with `#` and blank lines are ignored.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let mut system = None;
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("config line without '=': {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "system" {
            system = Some(System::parse(value)?);
        } else {
            pairs.push((key.to_string(), value.to_string()));
        }
    }
    let system = system.ok_or_else(|| Error::InvalidArgument("config missing 'system'".into()))?;
    let mut config = ExperimentConfig::new(system);
    for (key, value) in pairs {
        match key.as_str() {
            "sim_counts" => config.sim_counts = parse_list(&value, "sim_counts")?,
            "factors" => config.factors = parse_list(&value, "factors")?,
            "sigma_mode" => {
                config.sigma_mode = match value.as_str() {
                    "absolute" => LevelMode::AbsoluteSigma,
                    "noise_ratio" => LevelMode::NoiseRatio,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "unknown sigma_mode {other:?}"
                        )))
                    }
                }
            }
            "sigmas" => config.sigmas = parse_list(&value, "sigmas")?,
            "trials" => config.trials = parse_scalar(&value, "trials")?,
            "support_fraction" => config.support_fraction = parse_list(&value, "support_fraction")?,
            "radii" => config.radii_override = Some(parse_list(&value, "radii")?),
            "query_budget" => config.query_budget = parse_scalar(&value, "query_budget")?,
            "regression_mode" => config.mode = RegressionMode::parse(&value)?,
            "filtering" => config.filtering = FilteringMode::parse(&value)?,
            "master_seed" => config.master_seed = parse_scalar(&value, "master_seed")?,
            other => {
                return Err(Error::InvalidArgument(format!("unknown config key {other:?}")))
            }
        }
    }
    if config.trials == 0 || config.factors.is_empty() || config.sigmas.is_empty() {
        return Err(Error::InvalidArgument(
            "config needs trials >= 1, nonempty factors and sigmas".into(),
        ));
    }
    Ok(config)
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("bad {key} entry {v:?}")))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::InvalidArgument(format!("bad {key} value {value:?}")))
}
