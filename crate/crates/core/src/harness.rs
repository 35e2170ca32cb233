//! Seeded trial batches, K-scaling fits and the three experiment drivers.
//!
//! Every trial is a pure function of `(instance spec, algorithm spec,
//! master seed, trial id)`, so results do not depend on the number of
//! worker threads. Aggregation is a fold over records sorted by trial id.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algo::{run_batch_racing, run_cascade_bai, AlgoError, OrderingPolicy, RunConfig, RunResult};
use crate::bounds::{upper_bound_terms, BoundReport};
use crate::env::RngSpec;
use crate::instance::{Instance, InstanceError, InstanceSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("degenerate fit points: {0}")]
    DegeneratePoints(String),
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Cascade,
    /// Semi-bandit racing pulling `b` items per step.
    BatRac {
        b: usize,
    },
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Cascade => f.write_str("cascade"),
            Algorithm::BatRac { b } => write!(f, "batrac({b})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgoSpec {
    pub algorithm: Algorithm,
    pub config: RunConfig,
}

impl AlgoSpec {
    pub fn cascade() -> Self {
        Self { algorithm: Algorithm::Cascade, config: RunConfig::default() }
    }

    pub fn batrac(b: usize) -> Self {
        Self { algorithm: Algorithm::BatRac { b }, config: RunConfig::default() }
    }

    pub fn with_ordering(mut self, ordering: OrderingPolicy) -> Self {
        self.config.ordering = ordering;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.config.max_steps = max_steps;
        self
    }

    /// Runs one trial on `instance` with the stream for `seed`.
    pub fn run(&self, instance: &Instance<f64>, seed: u64) -> Result<RunResult, AlgoError> {
        let mut rng = crate::env::stream_from_seed(seed);
        match self.algorithm {
            Algorithm::Cascade => Ok(run_cascade_bai(instance, &self.config, &mut rng)),
            Algorithm::BatRac { b } => run_batch_racing(instance, b, &self.config, &mut rng),
        }
    }

    fn ordering_label(&self) -> &'static str {
        match self.algorithm {
            Algorithm::Cascade => self.config.ordering.name(),
            Algorithm::BatRac { .. } => OrderingPolicy::TCount.name(),
        }
    }
}

/// One row of a trials CSV. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub seed: u64,
    pub algorithm: String,
    pub ordering: String,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub steps: u64,
    pub success: u8,
    pub total_observations: u64,
    pub stop_reason: String,
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))
}

/// Runs `n_trials` independent trials on up to `parallelism` threads.
/// Records come back sorted by trial id.
pub fn run_trials(
    spec: &InstanceSpec,
    algo: &AlgoSpec,
    n_trials: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<Vec<TrialRecord>, HarnessError> {
    if n_trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    let instance = spec.build::<f64>()?;
    let run_one = |trial_id: u64| -> Result<TrialRecord, HarnessError> {
        let seed = RngSpec::new(master_seed, trial_id).seed();
        let r = algo.run(&instance, seed)?;
        Ok(TrialRecord {
            trial_id,
            seed,
            algorithm: algo.algorithm.to_string(),
            ordering: algo.ordering_label().to_string(),
            l: instance.l(),
            k: instance.k(),
            delta: spec.delta,
            epsilon: spec.epsilon,
            steps: r.steps,
            success: r.success as u8,
            total_observations: r.total_observations,
            stop_reason: r.stop_reason.name().to_string(),
        })
    };
    pool(parallelism)?.install(|| (0..n_trials as u64).into_par_iter().map(run_one).collect())
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// Writes `rows` as CSV with a header row and LF line endings.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), HarnessError> {
    let mut w = csv_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<T: Serialize>(rows: &[T]) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate of one batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub family: String,
    pub algorithm: String,
    pub ordering: String,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_trials: usize,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub mean_observations: f64,
    pub success_rate: f64,
    pub capped: usize,
}

impl SummaryRow {
    pub fn from_records(experiment: &str, family: &str, records: &[TrialRecord]) -> Self {
        let steps: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
        let obs: Vec<f64> = records.iter().map(|r| r.total_observations as f64).collect();
        let (mean_steps, std_steps) = mean_std(&steps);
        let first = &records[0];
        SummaryRow {
            experiment: experiment.to_string(),
            family: family.to_string(),
            algorithm: first.algorithm.clone(),
            ordering: first.ordering.clone(),
            l: first.l,
            k: first.k,
            n_trials: records.len(),
            mean_steps,
            std_steps,
            mean_observations: mean_std(&obs).0,
            success_rate: records.iter().map(|r| r.success as f64).sum::<f64>() / records.len() as f64,
            capped: records.iter().filter(|r| r.stop_reason == "step-cap").count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `c1 K + c2`
    #[serde(alias = "linear-in-k")]
    Linear,
    /// `c1 K^2 + c2`
    #[serde(alias = "quadratic-in-k")]
    Quadratic,
}

impl FitModel {
    pub fn power(self) -> i32 {
        match self {
            FitModel::Linear => 1,
            FitModel::Quadratic => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitModel::Linear => "linear",
            FitModel::Quadratic => "quadratic",
        }
    }
}

impl FromStr for FitModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(FitModel::Linear),
            "quadratic" => Ok(FitModel::Quadratic),
            other => Err(format!("unknown fit model {other:?} (expected linear or quadratic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
}

impl FitResult {
    pub fn predict(&self, k: f64) -> f64 {
        self.c1 * k.powi(self.model.power()) + self.c2
    }
}

/// Least-squares fit of `y = c1 K^p + c2` to `(K, y)` points.
///
/// When the responses are constant, `R^2` is 1 if the fit is exact and 0
/// otherwise.
pub fn fit_scaling(points: &[(f64, f64)], model: FitModel) -> Result<FitResult, HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::DegeneratePoints(format!("need at least 3 points, got {}", points.len())));
    }
    let mut ks: Vec<f64> = points.iter().map(|p| p.0).collect();
    ks.sort_by(f64::total_cmp);
    if ks.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::DegeneratePoints("K values must be distinct".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.powi(model.power())).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let c1 = sxy / sxx;
    let c2 = my - c1 * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - (c1 * x + c2)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(FitResult { model, c1, c2, r_squared })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Two-probability weight families indexed by `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `w* = 1/K`, `w' = 1/K^2`
    InvK,
    /// `w* = 1 - 1/K^2`, `w' = 1 - 1/K`
    NearOneSq,
    /// `w* = 1/sqrt(K)`, `w' = 1/K`
    InvSqrtK,
    /// `w* = 1 - 1/K`, `w' = 1 - 1/sqrt(K)`
    NearOneSqrt,
    /// `w* = 1 - 1/K`, `w' = 1/K`
    Spread,
}

impl Family {
    pub const ALL: [Family; 5] =
        [Family::InvK, Family::NearOneSq, Family::InvSqrtK, Family::NearOneSqrt, Family::Spread];

    /// `(w*, w')` for list size `k`.
    pub fn weights(self, k: usize) -> (f64, f64) {
        let k = k as f64;
        match self {
            Family::InvK => (1.0 / k, 1.0 / (k * k)),
            Family::NearOneSq => (1.0 - 1.0 / (k * k), 1.0 - 1.0 / k),
            Family::InvSqrtK => (1.0 / k.sqrt(), 1.0 / k),
            Family::NearOneSqrt => (1.0 - 1.0 / k, 1.0 - 1.0 / k.sqrt()),
            Family::Spread => (1.0 - 1.0 / k, 1.0 / k),
        }
    }

    /// Growth model the upper bound predicts for this family.
    pub fn model(self) -> FitModel {
        match self {
            Family::NearOneSq | Family::Spread => FitModel::Quadratic,
            _ => FitModel::Linear,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::InvK => "w*=1/K;w'=1/K^2",
            Family::NearOneSq => "w*=1-1/K^2;w'=1-1/K",
            Family::InvSqrtK => "w*=1/sqrt(K);w'=1/K",
            Family::NearOneSqrt => "w*=1-1/K;w'=1-1/sqrt(K)",
            Family::Spread => "w*=1-1/K;w'=1/K",
        }
    }

    pub fn spec(self, k: usize, l: usize, delta: f64) -> InstanceSpec {
        let (ws, wp) = self.weights(k);
        InstanceSpec::two_prob(ws, wp, k, l, delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentName {
    Ordering,
    Semifeedback,
    Kscaling,
}

impl FromStr for ExperimentName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordering" => Ok(ExperimentName::Ordering),
            "semifeedback" => Ok(ExperimentName::Semifeedback),
            "kscaling" => Ok(ExperimentName::Kscaling),
            other => Err(format!("unknown experiment {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(format!("unknown scale {other:?} (expected desk or paper)")),
        }
    }
}

/// Settings shared by the experiment drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(rename = "L")]
    pub l: usize,
    pub k_grid: Vec<usize>,
    pub n_trials: usize,
    pub delta: f64,
    pub master_seed: u64,
    pub parallelism: usize,
    pub max_steps: u64,
    /// Families swept by the semi-feedback and K-scaling drivers.
    pub families: Vec<Family>,
    /// Linearly spaced weight range used by the ordering driver.
    pub ordering_weights: (f64, f64),
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentConfig {
    pub fn preset(name: ExperimentName, scale: Scale) -> Self {
        let paper_grid: Vec<usize> = (20..=60).step_by(5).collect();
        let (l, k_grid, families, max_steps) = match (name, scale) {
            (ExperimentName::Ordering, Scale::Desk) => (32, vec![8], vec![], 10_000_000),
            (ExperimentName::Ordering, Scale::Paper) => (64, vec![16], vec![], 10_000_000),
            (ExperimentName::Semifeedback, Scale::Desk) => {
                (32, vec![8, 12, 16], vec![Family::InvK, Family::NearOneSq], 100_000_000)
            }
            (ExperimentName::Semifeedback, Scale::Paper) => {
                (128, paper_grid, vec![Family::InvK, Family::NearOneSq], 1_000_000_000)
            }
            (ExperimentName::Kscaling, Scale::Desk) => (64, vec![8, 12, 16, 20, 24], Family::ALL.to_vec(), 100_000_000),
            (ExperimentName::Kscaling, Scale::Paper) => (128, paper_grid, Family::ALL.to_vec(), 1_000_000_000),
        };
        Self {
            l,
            k_grid,
            n_trials: 20,
            delta: 0.1,
            master_seed: 0,
            parallelism: available_threads(),
            max_steps,
            families,
            ordering_weights: (0.9, 0.15),
        }
    }

    fn check_grid(&self) -> Result<(), HarnessError> {
        if self.k_grid.is_empty() {
            return Err(HarnessError::BadGrid("K grid is empty".into()));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| k == 0 || k >= self.l) {
            return Err(HarnessError::BadGrid(format!("K={k} must lie in [1, L-1] with L={}", self.l)));
        }
        if self.n_trials == 0 {
            return Err(HarnessError::NoTrials);
        }
        Ok(())
    }

    fn batch(&self, spec: &InstanceSpec, algo: AlgoSpec) -> Result<Vec<TrialRecord>, HarnessError> {
        run_trials(spec, &algo.with_max_steps(self.max_steps), self.n_trials, self.master_seed, self.parallelism)
    }
}

/// Mean/std steps of all seven ordering policies on linearly spaced weights.
pub fn experiment_ordering(config: &ExperimentConfig) -> Result<Vec<SummaryRow>, HarnessError> {
    config.check_grid()?;
    let (hi, lo) = config.ordering_weights;
    let family = format!("linspace({hi},{lo})");
    let mut rows = Vec::new();
    for &k in &config.k_grid {
        let spec = InstanceSpec::linspace(hi, lo, config.l, k, config.delta);
        for policy in OrderingPolicy::ALL {
            let records = config.batch(&spec, AlgoSpec::cascade().with_ordering(policy))?;
            rows.push(SummaryRow::from_records("ordering", &family, &records));
        }
    }
    Ok(rows)
}

/// `CascadeBAI`, `BatRac(1)` and `BatRac(K)` over the K grid.
pub fn experiment_semifeedback(config: &ExperimentConfig) -> Result<Vec<SummaryRow>, HarnessError> {
    config.check_grid()?;
    let mut rows = Vec::new();
    for &family in &config.families {
        for &k in &config.k_grid {
            let spec = family.spec(k, config.l, config.delta);
            for algo in [AlgoSpec::cascade(), AlgoSpec::batrac(1), AlgoSpec::batrac(k)] {
                let records = config.batch(&spec, algo)?;
                rows.push(SummaryRow::from_records("semifeedback", family.label(), &records));
            }
        }
    }
    Ok(rows)
}

/// Fit of mean steps against `K` for one family.
#[derive(Debug)]
pub struct FamilyFit {
    pub family: Family,
    pub fit: Result<FitResult, HarnessError>,
}

#[derive(Debug)]
pub struct KScalingReport {
    pub rows: Vec<SummaryRow>,
    pub fits: Vec<FamilyFit>,
}

/// Runs `CascadeBAI` on each family over the K grid and fits the family's
/// growth model to the mean steps.
pub fn experiment_kscaling(config: &ExperimentConfig) -> Result<KScalingReport, HarnessError> {
    config.check_grid()?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &family in &config.families {
        let mut points = Vec::new();
        for &k in &config.k_grid {
            let records = config.batch(&family.spec(k, config.l, config.delta), AlgoSpec::cascade())?;
            let row = SummaryRow::from_records("kscaling", family.label(), &records);
            points.push((k as f64, row.mean_steps));
            rows.push(row);
        }
        fits.push(FamilyFit { family, fit: fit_scaling(&points, family.model()) });
    }
    Ok(KScalingReport { rows, fits })
}

/// Analytic bound quantities for `spec`.
pub fn bounds_report(spec: &InstanceSpec) -> Result<BoundReport<f64>, HarnessError> {
    let instance = spec.build::<f64>()?;
    let gaps = instance.gaps()?;
    Ok(upper_bound_terms(&instance, &gaps))
}
