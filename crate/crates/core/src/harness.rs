//! Monte-Carlo experiments: simulate many paths from a known model, fit the
//! true order for RMSE tables, run order selection under each criterion and
//! aggregate everything into a deterministic report.
//!
//! Replication `i` of a span uses the seed
//! `replication_seed(replication_seed(master_seed, span.stream_key()), i)`
//! for both the simulation and the fitting restarts. Results therefore do
//! not depend on thread scheduling, nor on which other spans are configured.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HawkesError, Result};
use crate::inference::{relative_rmse, rmse, FitOptions};
use crate::io::write_json;
use crate::mean_intensity::{expected_count, stationary_mean_intensity};
use crate::model::{EventSequence, HawkesModel};
use crate::selection::{AiccThreshold, CandidateFits, Criterion};
use crate::simulate::{replication_seed, simulate_count, simulate_horizon, GENERATOR_ID};

/// Share of failed replications above which a cell is flagged invalid.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

/// Stream index reserved for the mean-count comparison paths.
const FIGURE_STREAM: u64 = u64::MAX;

/// Length of one simulated path: a time horizon or a target event count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    Horizon(f64),
    Count(usize),
}

impl Span {
    pub fn kind(&self) -> &'static str {
        match self {
            Span::Horizon(_) => "horizon",
            Span::Count(_) => "count",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Span::Horizon(t) => t,
            Span::Count(n) => n as f64,
        }
    }

    /// Seed stream identifier derived from the span itself.
    pub fn stream_key(&self) -> u64 {
        match *self {
            Span::Horizon(t) => t.to_bits(),
            Span::Count(n) => (n as u64) | (1 << 63),
        }
    }

    pub fn simulate(&self, model: &HawkesModel, seed: u64) -> Result<EventSequence> {
        match *self {
            Span::Horizon(t) => simulate_horizon(model, t, seed),
            Span::Count(n) => simulate_count(model, n, seed),
        }
    }
}

/// Paths simulated to a fixed event count, compared against the expected
/// counting function of the true model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCountConfig {
    pub paths: usize,
    pub events_per_path: usize,
    pub grid_points: usize,
}

impl Default for MeanCountConfig {
    fn default() -> Self {
        Self {
            paths: 200,
            events_per_path: 1000,
            grid_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub true_model: HawkesModel,
    pub spans: Vec<Span>,
    pub replications: usize,
    #[serde(default = "default_orders")]
    pub candidate_orders: Vec<usize>,
    #[serde(default)]
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub fit_options: FitOptions,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub aicc_threshold: AiccThreshold,
    #[serde(default)]
    pub mean_count: Option<MeanCountConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_orders() -> Vec<usize> {
    vec![1, 2, 3]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(HawkesError::Config("replications must be >= 1".into()));
        }
        if self.spans.is_empty() {
            return Err(HawkesError::Config("at least one span is required".into()));
        }
        for span in &self.spans {
            let ok = match *span {
                Span::Horizon(t) => t.is_finite() && t > 0.0,
                Span::Count(n) => n > 0,
            };
            if !ok {
                return Err(HawkesError::Config(format!("invalid span {span:?}")));
            }
        }
        if !self.criteria.is_empty() && self.candidate_orders.is_empty() {
            return Err(HawkesError::Config("criteria given without candidate orders".into()));
        }
        if self.candidate_orders.contains(&0) {
            return Err(HawkesError::Config("candidate orders must be >= 1".into()));
        }
        if let Some(mc) = &self.mean_count {
            if mc.paths == 0 || mc.events_per_path == 0 || mc.grid_points == 0 {
                return Err(HawkesError::Config("mean_count sizes must be >= 1".into()));
            }
        }
        self.fit_options.validate()
    }

    /// Copy with the replication count replaced.
    pub fn scaled(&self, replications: usize) -> Result<Self> {
        let mut out = self.clone();
        out.replications = replications;
        out.validate()?;
        Ok(out)
    }

    /// SHA-256 of the canonical JSON of the config without its output path.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn sorted_candidates(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.candidate_orders.iter().copied().collect();
        set.into_iter().collect()
    }

    fn sorted_criteria(&self) -> Vec<Criterion> {
        let set: BTreeSet<Criterion> = self.criteria.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub sample_size: usize,
    /// True-order estimate `(μ, α.., β..)`.
    pub estimate: Option<Vec<f64>>,
    pub converged: bool,
    /// Chosen order per criterion, aligned with the report's criterion list.
    pub chosen: Vec<Option<usize>>,
    pub error: Option<String>,
}

impl ReplicationRecord {
    fn failed(&self) -> bool {
        self.error.is_some() || !self.converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub criterion: Criterion,
    pub orders: Vec<usize>,
    pub counts: Vec<usize>,
    /// Percent of `selected`, one decimal.
    pub percent: Vec<f64>,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub span: Span,
    pub replications: usize,
    pub average_sample_size: f64,
    pub sample_size_standard_error: f64,
    /// Expected event count of the true model, for horizon spans.
    pub expected_count: Option<f64>,
    /// Per parameter; empty when no estimate was usable.
    pub rmse_abs: Vec<f64>,
    pub rmse_rel: Vec<f64>,
    /// Estimates entering the RMSE (converged true-order fits).
    pub rmse_estimates: usize,
    pub convergence_failures: usize,
    pub errors: usize,
    pub invalid: bool,
    pub selection: Vec<SelectionTable>,
    pub records: Vec<ReplicationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCountRow {
    pub t: f64,
    pub empirical: f64,
    pub standard_error: f64,
    pub theoretical_nonstationary: f64,
    pub theoretical_stationary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub master_seed: u64,
    pub generator_id: String,
    pub package_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub parameter_names: Vec<String>,
    pub true_parameters: Vec<f64>,
    pub criteria: Vec<Criterion>,
    pub cells: Vec<CellReport>,
    pub mean_count: Option<Vec<MeanCountRow>>,
    pub valid: bool,
}

/// Mean of `N(t)` over paths at each grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPoint {
    pub t: f64,
    pub mean: f64,
    pub standard_error: f64,
}

/// Average counting function over `paths` with per-node standard errors.
///
/// Every node must lie within the shortest path horizon.
pub fn empirical_average_count(paths: &[EventSequence], grid: &[f64]) -> Result<Vec<CountPoint>> {
    if paths.is_empty() {
        return Err(HawkesError::Domain("no paths to average".into()));
    }
    let common = paths
        .iter()
        .map(EventSequence::horizon)
        .fold(f64::INFINITY, f64::min);
    if let Some(&t) = grid.iter().find(|&&t| !(t >= 0.0 && t <= common)) {
        return Err(HawkesError::Domain(format!(
            "grid node {t} outside the common horizon [0, {common}]"
        )));
    }
    let n = paths.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let counts: Vec<f64> = paths.iter().map(|p| p.count_at(t) as f64).collect();
            let (mean, se) = mean_and_se(&counts);
            debug_assert!(n >= 1.0);
            CountPoint {
                t,
                mean,
                standard_error: se,
            }
        })
        .collect())
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Paths and the comparison table for the mean-count check.
pub fn mean_count_comparison(
    model: &HawkesModel,
    config: &MeanCountConfig,
    master_seed: u64,
) -> Result<(Vec<EventSequence>, Vec<MeanCountRow>)> {
    let stream = replication_seed(master_seed, FIGURE_STREAM);
    let paths = (0..config.paths)
        .into_par_iter()
        .map(|i| simulate_count(model, config.events_per_path, replication_seed(stream, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let common = paths
        .iter()
        .map(EventSequence::horizon)
        .fold(f64::INFINITY, f64::min);
    let g = config.grid_points;
    let grid: Vec<f64> = (1..=g)
        .map(|k| if k == g { common } else { common * k as f64 / g as f64 })
        .collect();
    let level = stationary_mean_intensity(model)?;
    let rows = empirical_average_count(&paths, &grid)?
        .into_iter()
        .map(|p| {
            Ok(MeanCountRow {
                t: p.t,
                empirical: p.mean,
                standard_error: p.standard_error,
                theoretical_nonstationary: expected_count(model, p.t)?,
                theoretical_stationary: level * p.t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((paths, rows))
}

/// Runs every cell of `config`. Deterministic for a fixed config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let true_order = config.true_model.order();
    let candidates = config.sorted_candidates();
    let criteria = config.sorted_criteria();
    let mut fitted_orders = if criteria.is_empty() {
        Vec::new()
    } else {
        candidates.clone()
    };
    if !fitted_orders.contains(&true_order) {
        fitted_orders.push(true_order);
        fitted_orders.sort_unstable();
    }
    let truth = config.true_model.params();

    let mut cells = Vec::with_capacity(config.spans.len());
    for span in &config.spans {
        let stream = replication_seed(config.master_seed, span.stream_key());
        let records: Vec<ReplicationRecord> = (0..config.replications)
            .into_par_iter()
            .map(|i| {
                let seed = replication_seed(stream, i as u64);
                run_replication(config, span, i, seed, &fitted_orders, &candidates, &criteria)
            })
            .collect();
        cells.push(summarize_cell(config, *span, &truth, &candidates, &criteria, records)?);
    }

    let mean_count = match &config.mean_count {
        Some(mc) => Some(mean_count_comparison(&config.true_model, mc, config.master_seed)?.1),
        None => None,
    };
    let valid = cells.iter().all(|c| !c.invalid);
    Ok(ExperimentReport {
        provenance: Provenance {
            config_sha256: config.hash(),
            master_seed: config.master_seed,
            generator_id: GENERATOR_ID.to_string(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        config: config.clone(),
        parameter_names: HawkesModel::param_names(true_order),
        true_parameters: truth,
        criteria,
        cells,
        mean_count,
        valid,
    })
}

fn run_replication(
    config: &ExperimentConfig,
    span: &Span,
    index: usize,
    seed: u64,
    fitted_orders: &[usize],
    candidates: &[usize],
    criteria: &[Criterion],
) -> ReplicationRecord {
    let mut record = ReplicationRecord {
        index,
        seed,
        sample_size: 0,
        estimate: None,
        converged: false,
        chosen: vec![None; criteria.len()],
        error: None,
    };
    let events = match span.simulate(&config.true_model, seed) {
        Ok(ev) => ev,
        Err(e) => {
            record.error = Some(format!("simulation: {e}"));
            return record;
        }
    };
    record.sample_size = events.len();
    let options = FitOptions {
        seed,
        ..config.fit_options.clone()
    };
    let fits = match CandidateFits::fit(&events, fitted_orders, &options) {
        Ok(f) => f,
        Err(e) => {
            record.error = Some(format!("fit: {e}"));
            return record;
        }
    };
    let true_order = config.true_model.order();
    match fits.get(true_order) {
        Some(fit) => {
            record.estimate = Some(fit.model.params());
            record.converged = fit.converged;
        }
        None => record.error = Some(format!("order {true_order} could not be fitted")),
    }
    let restricted = fits.restricted(candidates);
    for (slot, &criterion) in record.chosen.iter_mut().zip(criteria) {
        *slot = restricted
            .as_ref()
            .and_then(|f| f.select(criterion, config.aicc_threshold).ok())
            .map(|r| r.chosen_order);
    }
    record
}

fn summarize_cell(
    config: &ExperimentConfig,
    span: Span,
    truth: &[f64],
    candidates: &[usize],
    criteria: &[Criterion],
    records: Vec<ReplicationRecord>,
) -> Result<CellReport> {
    let sizes: Vec<f64> = records
        .iter()
        .filter(|r| !r.error.as_deref().is_some_and(|e| e.starts_with("simulation")))
        .map(|r| r.sample_size as f64)
        .collect();
    let (average_sample_size, sample_size_standard_error) = if sizes.is_empty() {
        (0.0, 0.0)
    } else {
        mean_and_se(&sizes)
    };
    let expected = match span {
        Span::Horizon(t) if config.true_model.is_stationary() => {
            Some(expected_count(&config.true_model, t)?)
        }
        _ => None,
    };

    let used: Vec<&Vec<f64>> = records
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| r.estimate.as_ref())
        .collect();
    let (rmse_abs, rmse_rel) = if used.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let mut abs = Vec::with_capacity(truth.len());
        let mut rel = Vec::with_capacity(truth.len());
        for (j, &theta) in truth.iter().enumerate() {
            let column: Vec<f64> = used.iter().map(|e| e[j]).collect();
            abs.push(rmse(theta, &column)?);
            rel.push(relative_rmse(theta, &column)?);
        }
        (abs, rel)
    };
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let convergence_failures = records
        .iter()
        .filter(|r| r.error.is_none() && !r.converged)
        .count();
    let failures = errors + convergence_failures;
    let invalid = failures as f64 > MAX_FAILURE_SHARE * records.len() as f64;

    let selection = criteria
        .iter()
        .enumerate()
        .map(|(c, &criterion)| {
            let mut counts = vec![0usize; candidates.len()];
            for r in &records {
                if let Some(order) = r.chosen[c] {
                    let slot = candidates.iter().position(|&p| p == order).expect("candidate order");
                    counts[slot] += 1;
                }
            }
            let selected: usize = counts.iter().sum();
            let percent = counts
                .iter()
                .map(|&k| {
                    if selected == 0 {
                        0.0
                    } else {
                        round1(100.0 * k as f64 / selected as f64)
                    }
                })
                .collect();
            SelectionTable {
                criterion,
                orders: candidates.to_vec(),
                counts,
                percent,
                selected,
            }
        })
        .collect();

    Ok(CellReport {
        span,
        replications: records.len(),
        average_sample_size,
        sample_size_standard_error,
        expected_count: expected,
        rmse_abs,
        rmse_rel,
        rmse_estimates: used.len(),
        convergence_failures,
        errors,
        invalid,
        selection,
        records,
    })
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: Provenance,
    pub valid: bool,
    pub files: Vec<ManifestEntry>,
}

/// Writes `report.json`, the CSV tables and `manifest.json` into `dir`.
/// Returns the written file names, manifest last.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    files.push(("report.json".into(), json));
    files.push(("rmse_abs.csv".into(), rmse_csv(report, |c| &c.rmse_abs)));
    files.push(("rmse_rel.csv".into(), rmse_csv(report, |c| &c.rmse_rel)));
    for (c, criterion) in report.criteria.iter().enumerate() {
        files.push((format!("selection_{}.csv", criterion.name()), selection_csv(report, c)));
    }
    if let Some(rows) = &report.mean_count {
        files.push(("figure1.csv".into(), figure_csv(rows)));
    }

    let mut entries = Vec::with_capacity(files.len());
    for (name, content) in &files {
        fs::write(dir.join(name), content)?;
        entries.push(ManifestEntry {
            file: name.clone(),
            bytes: content.len() as u64,
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
        });
    }
    let manifest = Manifest {
        provenance: report.provenance.clone(),
        valid: report.valid,
        files: entries,
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    let mut names: Vec<String> = files.into_iter().map(|(n, _)| n).collect();
    names.push("manifest.json".into());
    Ok(names)
}

fn rmse_csv(report: &ExperimentReport, pick: impl Fn(&CellReport) -> &Vec<f64>) -> String {
    let mut out = String::from("span,value,average_sample_size,estimates");
    for name in &report.parameter_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for cell in &report.cells {
        let _ = write!(
            out,
            "{},{},{},{}",
            cell.span.kind(),
            cell.span.value(),
            cell.average_sample_size,
            cell.rmse_estimates
        );
        let values = pick(cell);
        for j in 0..report.parameter_names.len() {
            match values.get(j) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn selection_csv(report: &ExperimentReport, c: usize) -> String {
    let mut out = String::from("span,value,average_sample_size,selected");
    let orders = report.cells.first().map(|cell| cell.selection[c].orders.clone()).unwrap_or_default();
    for p in &orders {
        let _ = write!(out, ",P={p}");
    }
    out.push('\n');
    for cell in &report.cells {
        let table = &cell.selection[c];
        let _ = write!(
            out,
            "{},{},{},{}",
            cell.span.kind(),
            cell.span.value(),
            cell.average_sample_size,
            table.selected
        );
        for v in &table.percent {
            let _ = write!(out, ",{v:.1}");
        }
        out.push('\n');
    }
    out
}

fn figure_csv(rows: &[MeanCountRow]) -> String {
    let mut out = String::from("t,empirical,theoretical_nonstationary,theoretical_stationary\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.t, r.empirical, r.theoretical_nonstationary, r.theoretical_stationary
        );
    }
    out
}
