//! Experiment runners: the Gaussian toy study and the four-scenario
//! benchmark over injected shifts.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment_with_noise, binarize_labels, standardize, subsample, Dataset, Labels, Task};
use crate::error::{Error, Result};
use crate::ess::{empirical_ess, isotropic_shift_divergence, WeightVector};
use crate::linalg::{mean, sample_std};
use crate::logistic::TuningConfig;
use crate::mi::{forward_select, MiConfig};
use crate::ratio::{fit_density_ratio, predict_weights};
use crate::rng::{derive_seed, fork_seed, substream};
use crate::shift::{calibrate_sigma, sample_direction, ShiftAssignment};
use crate::tree::{evaluate, fit_tree, tune_min_leaf, TreeConfig};

/// Flat table for CSV emission. Cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Shortest decimal that parses back to the same value, written the same way
/// as in JSON output. Non-finite values become `NaN`, `inf` or `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite floats serialize")
    } else {
        format!("{v}").to_lowercase().replace("nan", "NaN")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyCurveRow {
    pub lambda: f64,
    pub dim: usize,
    pub d2: f64,
    pub ess_star: f64,
}

/// `D2 = d lambda^2` and `ESS* = exp(-D2)` for every `(lambda, d)` pair.
pub fn analytic_toy_curves(lambdas: &[f64], dims: &[usize]) -> Vec<ToyCurveRow> {
    lambdas
        .iter()
        .flat_map(|&lambda| {
            dims.iter().map(move |&dim| {
                let (d2, ess_star) = isotropic_shift_divergence(dim, lambda);
                ToyCurveRow { lambda, dim, d2, ess_star }
            })
        })
        .collect()
}

/// `n x d` matrix whose column `j` comes from its own substream, so a pair
/// drawn for `d` shares its first columns with every pair of smaller `d` drawn
/// from the same master seed.
fn normal_columns(master: u64, side: u64, n: usize, d: usize, shift: f64) -> Array2<f64> {
    let mut x = Array2::zeros((n, d));
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        let mut rng = substream(master, &[side, j as u64]);
        col.iter_mut().for_each(|v| *v = shift + rng.sample::<f64, _>(StandardNormal));
    }
    x
}

fn toy_labels(x: &Array2<f64>, master: u64, side: u64) -> Labels {
    let mut rng = substream(master, &[side, u64::MAX]);
    Labels::Real(x.column(0).iter().map(|v| 100.0 * v + rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Training rows from `N(0, I_d)`, test rows from `N(lambda 1, I_d)`, labels
/// `100 x_1 + N(0, 1)`, and the exact density ratio on the training rows.
///
/// One master seed is taken from `rng`; every feature column and noise vector
/// then has its own substream. Pairs of different `d` drawn from equal
/// generator states therefore share columns (common random numbers), which
/// keeps comparisons across dimensions free of unrelated sampling noise.
pub fn gaussian_shift_pair<R: Rng + ?Sized>(
    d: usize,
    lambda: f64,
    n: usize,
    rng: &mut R,
) -> Result<(Dataset, Dataset, WeightVector)> {
    if d == 0 || n == 0 {
        return Err(Error::arg("dimension and sample size must be positive"));
    }
    if !lambda.is_finite() {
        return Err(Error::arg("shift must be finite"));
    }
    let master = fork_seed(rng);
    let train_x = normal_columns(master, 0, n, d, 0.0);
    let train_y = toy_labels(&train_x, master, 0);
    let test_x = normal_columns(master, 1, n, d, lambda);
    let test_y = toy_labels(&test_x, master, 1);
    let half = d as f64 * lambda * lambda / 2.0;
    let w = train_x.outer_iter().map(|r| (lambda * r.sum() - half).exp()).collect();
    let w = WeightVector::new(w)?;
    let train = Dataset::from_features(train_x)?.with_labels(Some(train_y))?;
    let test = Dataset::from_features(test_x)?.with_labels(Some(test_y))?;
    Ok((train, test, w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub lambdas: Vec<f64>,
    pub dims: Vec<usize>,
    pub n_per_set: usize,
    pub replications: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl ToyConfig {
    pub fn new(lambdas: Vec<f64>, dims: Vec<usize>, n_per_set: usize, replications: usize, seed: u64) -> Self {
        ToyConfig { lambdas, dims, n_per_set, replications, min_samples_leaf: 10, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.dims.is_empty() {
            return Err(Error::arg("need at least one shift and one dimension"));
        }
        if self.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::arg("shifts must be finite"));
        }
        if self.dims.contains(&0) {
            return Err(Error::arg("dimensions must be at least 1"));
        }
        if self.n_per_set == 0 || self.replications == 0 || self.min_samples_leaf == 0 {
            return Err(Error::arg("sample size, replications and min leaf size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub lambda: f64,
    pub dim: usize,
    pub d2: f64,
    pub ess_star: f64,
    pub mean_rmse: f64,
    /// Sample standard deviation over replications (0 for a single one).
    pub sd_rmse: f64,
    pub mean_empirical_ess: f64,
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub config: ToyConfig,
    pub rows: Vec<ToyRow>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let sd = if v.len() > 1 { sample_std(v) } else { 0.0 };
    (mean(v), sd)
}

/// One weighted tree per `(lambda, d, replication)`, trained with the true
/// weights and scored by test RMSE. Replication `r` of a given `lambda` uses
/// the same generator seed for every `d`, so the dimensions are compared on
/// shared draws.
pub fn run_toy(config: &ToyConfig) -> Result<ToyReport> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = (0..config.lambdas.len())
        .flat_map(|li| (0..config.dims.len()).map(move |di| (li, di)))
        .collect();
    let runs: Vec<(usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(li, di)| (0..config.replications).map(move |r| (li, di, r)))
        .collect();
    let results = runs
        .par_iter()
        .map(|&(li, di, r)| {
            let lambda = config.lambdas[li];
            let d = config.dims[di];
            let mut rng = substream(config.seed, &[li as u64, r as u64]);
            let (train, test, w) = gaussian_shift_pair(d, lambda, config.n_per_set, &mut rng)?;
            let labels = train.labels().expect("toy data is labeled");
            let tree = fit_tree(train.features(), labels, &w, &TreeConfig::new(Task::Regression, config.min_samples_leaf))?;
            let pred = tree.predict(test.features())?;
            let truth = test.labels().expect("toy data is labeled").as_real();
            let mse = evaluate(&pred, &truth, Task::Regression, None)?;
            Ok((mse.sqrt(), empirical_ess(&w)))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, &(li, di))| {
            let chunk = &results[c * config.replications..(c + 1) * config.replications];
            let rmse: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            let ess: Vec<f64> = chunk.iter().map(|r| r.1).collect();
            let (mean_rmse, sd_rmse) = mean_sd(&rmse);
            let (d2, ess_star) = isotropic_shift_divergence(config.dims[di], config.lambdas[li]);
            ToyRow {
                lambda: config.lambdas[li],
                dim: config.dims[di],
                d2,
                ess_star,
                mean_rmse,
                sd_rmse,
                mean_empirical_ess: mean(&ess),
                rmse,
            }
        })
        .collect();
    Ok(ToyReport { config: config.clone(), rows })
}

impl ToyReport {
    pub fn table(&self) -> Table {
        Table {
            columns: cols(&["lambda", "dim", "d2", "ess_star", "mean_rmse", "sd_rmse", "mean_empirical_ess"]),
            rows: self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.lambda),
                        r.dim.to_string(),
                        fmt_f64(r.d2),
                        fmt_f64(r.ess_star),
                        fmt_f64(r.mean_rmse),
                        fmt_f64(r.sd_rmse),
                        fmt_f64(r.mean_empirical_ess),
                    ]
                })
                .collect(),
        }
    }
}

/// Ten Uniform[0,1] features, `y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4
/// + 5 x5 + N(0, 1)`; the last five features are irrelevant.
pub fn generate_friedman<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::arg("need at least one row"));
    }
    let x = Array2::from_shape_fn((n, 10), |_| rng.gen::<f64>());
    let y = x
        .outer_iter()
        .map(|r| {
            10.0 * (std::f64::consts::PI * r[0] * r[1]).sin()
                + 20.0 * (r[2] - 0.5).powi(2)
                + 10.0 * r[3]
                + 5.0 * r[4]
                + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Dataset::from_features(x)?.with_labels(Some(Labels::Real(y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Unweighted,
    TrueWeights,
    EstimatedWeights,
    SelectedEstimated,
}

pub const SCENARIOS: [Scenario; 4] =
    [Scenario::Unweighted, Scenario::TrueWeights, Scenario::EstimatedWeights, Scenario::SelectedEstimated];

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Unweighted => "unweighted",
            Scenario::TrueWeights => "true-weights",
            Scenario::EstimatedWeights => "estimated-weights",
            Scenario::SelectedEstimated => "selected-estimated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub simulations: usize,
    pub ess_target: f64,
    pub noise_target_width: usize,
    pub max_rows: usize,
    pub selection: MiConfig,
    pub ratio_tuning: TuningConfig,
    /// Share of the test side used to fit the ratio models; the rest scores.
    pub ratio_train_fraction: f64,
    pub max_direction_draws: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(simulations: usize, seed: u64) -> Self {
        BenchConfig {
            simulations,
            ess_target: 0.01,
            noise_target_width: 32,
            max_rows: 8000,
            selection: MiConfig::default(),
            ratio_tuning: TuningConfig::default(),
            ratio_train_fraction: 0.8,
            max_direction_draws: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.simulations == 0 {
            return Err(Error::arg("need at least one simulation"));
        }
        if !(self.ess_target > 0.0 && self.ess_target <= 1.0) {
            return Err(Error::arg(format!("ESS target must lie in (0, 1], got {}", self.ess_target)));
        }
        if !(self.ratio_train_fraction > 0.0 && self.ratio_train_fraction < 1.0) {
            return Err(Error::arg("ratio training fraction must lie in (0, 1)"));
        }
        if self.max_rows == 0 || self.max_direction_draws == 0 {
            return Err(Error::arg("row cap and direction draws must be positive"));
        }
        self.selection.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub test_error: f64,
    pub relative_error: f64,
    pub ess: f64,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub index: usize,
    /// `None` when the simulation completed.
    pub skipped: Option<String>,
    pub direction_draws: usize,
    pub sigma: Option<f64>,
    pub shift_ess: Option<f64>,
    pub n_train: usize,
    pub n_ratio_target: usize,
    pub n_eval: usize,
    pub selected: Vec<usize>,
    pub scenarios: Vec<ScenarioOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub mean_relative_error: f64,
    pub sd_relative_error: f64,
    pub mean_test_error: f64,
    pub mean_ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub task: Task,
    pub config: BenchConfig,
    pub completed: usize,
    pub skipped: usize,
    pub mean_selected: f64,
    pub sd_selected: f64,
    /// Share of completed simulations where the selected-feature weights have
    /// at least the ESS of the all-feature estimated weights.
    pub selected_ess_majority: f64,
    pub summary: Vec<ScenarioSummary>,
    pub simulations: Vec<SimulationRecord>,
}

struct Prepared {
    x: Array2<f64>,
    labels: Labels,
}

fn prepare<R: Rng + ?Sized>(ds: &Dataset, config: &BenchConfig, task: Task, rng: &mut R) -> Result<Prepared> {
    let ds = subsample(ds, config.max_rows, rng)?;
    let ds = augment_with_noise(&ds, config.noise_target_width.max(ds.n_features()), rng)?;
    let (ds, _) = standardize(&ds)?;
    let ds = match (task, ds.labels()) {
        (Task::Classification, Some(Labels::Real(_))) => binarize_labels(&ds)?,
        _ => ds,
    };
    let labels = ds.labels().ok_or_else(|| Error::State("benchmark data needs labels".into()))?.for_task(task)?;
    let (x, _, _) = ds.into_parts();
    Ok(Prepared { x, labels })
}

fn inject<R: Rng + ?Sized>(x: &Array2<f64>, config: &BenchConfig, rng: &mut R) -> Result<(Option<ShiftAssignment>, usize)> {
    for draw in 1..=config.max_direction_draws {
        let u = sample_direction(x.ncols(), rng);
        match calibrate_sigma(x.view(), &u, rng, config.ess_target) {
            Ok(a) => return Ok((Some(a), draw)),
            Err(Error::Calibration(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok((None, config.max_direction_draws))
}

fn run_simulation(ds: &Dataset, config: &BenchConfig, task: Task, index: usize) -> Result<SimulationRecord> {
    let sim_seed = derive_seed(config.seed, &[index as u64]);
    let mut rng = substream(sim_seed, &[0]);
    let data = prepare(ds, config, task, &mut rng)?;
    let (assignment, draws) = inject(&data.x, config, &mut substream(sim_seed, &[1]))?;
    let mut record = SimulationRecord {
        index,
        skipped: None,
        direction_draws: draws,
        sigma: None,
        shift_ess: None,
        n_train: 0,
        n_ratio_target: 0,
        n_eval: 0,
        selected: Vec::new(),
        scenarios: Vec::new(),
    };
    let Some(a) = assignment else {
        record.skipped = Some(format!("no direction reached the ESS target in {draws} draws"));
        return Ok(record);
    };
    record.sigma = Some(a.sigma);
    record.shift_ess = Some(a.ess);
    let train = a.train_rows();
    let mut test = a.test_rows();
    test.shuffle(&mut substream(sim_seed, &[2]));
    let n_fit = ((test.len() as f64) * config.ratio_train_fraction).round() as usize;
    let (ratio_rows, eval_rows) = test.split_at(n_fit.min(test.len() - 1));
    record.n_train = train.len();
    record.n_ratio_target = ratio_rows.len();
    record.n_eval = eval_rows.len();

    match scenarios(&data, config, task, sim_seed, &a, &train, ratio_rows, eval_rows) {
        Ok((outcomes, selected)) => {
            record.scenarios = outcomes;
            record.selected = selected;
        }
        Err(e) => record.skipped = Some(format!("scenario fit failed: {e}")),
    }
    Ok(record)
}

#[allow(clippy::too_many_arguments)]
fn scenarios(
    data: &Prepared,
    config: &BenchConfig,
    task: Task,
    sim_seed: u64,
    a: &ShiftAssignment,
    train: &[usize],
    ratio_rows: &[usize],
    eval_rows: &[usize],
) -> Result<(Vec<ScenarioOutcome>, Vec<usize>)> {
    let x_train = data.x.select(Axis(0), train);
    let y_train = data.labels.select(train);
    let x_ratio = data.x.select(Axis(0), ratio_rows);
    let x_eval = data.x.select(Axis(0), eval_rows);
    let y_eval = data.labels.select(eval_rows).as_real();

    let estimated = {
        let mut rng = substream(sim_seed, &[3]);
        let (model, _) = fit_density_ratio(x_train.view(), x_ratio.view(), &config.ratio_tuning, &mut rng)?;
        predict_weights(&model, x_train.view())?
    };
    let selection = forward_select(x_train.view(), &y_train, &config.selection, &mut substream(sim_seed, &[4]))?;
    let mut selected = selection.selected;
    let xs_train = x_train.select(Axis(1), &selected);
    let xs_eval = x_eval.select(Axis(1), &selected);
    let selected_weights = {
        let xs_ratio = x_ratio.select(Axis(1), &selected);
        let mut rng = substream(sim_seed, &[5]);
        let (model, _) = fit_density_ratio(xs_train.view(), xs_ratio.view(), &config.ratio_tuning, &mut rng)?;
        predict_weights(&model, xs_train.view())?
    };

    let n = train.len();
    let plans: [(Scenario, &Array2<f64>, &Array2<f64>, WeightVector); 4] = [
        (Scenario::Unweighted, &x_train, &x_eval, WeightVector::uniform(n)),
        (Scenario::TrueWeights, &x_train, &x_eval, a.true_weights_train.clone()),
        (Scenario::EstimatedWeights, &x_train, &x_eval, estimated),
        (Scenario::SelectedEstimated, &xs_train, &xs_eval, selected_weights),
    ];
    let mut outcomes = Vec::with_capacity(4);
    for (k, (scenario, xt, xe, w)) in plans.into_iter().enumerate() {
        let mut rng = substream(sim_seed, &[10 + k as u64]);
        let tuned = tune_min_leaf(xt.view(), &y_train, &w, task, &mut rng)?;
        let err = evaluate(&tuned.tree.predict(xe.view())?, &y_eval, task, None)?;
        outcomes.push(ScenarioOutcome {
            scenario,
            test_error: err,
            relative_error: f64::NAN,
            ess: empirical_ess(&w),
            min_samples_leaf: tuned.min_samples_leaf,
        });
    }
    let base = outcomes[0].test_error;
    for o in &mut outcomes {
        o.relative_error = if base > 0.0 { o.test_error / base } else { f64::NAN };
    }
    selected.shrink_to_fit();
    Ok((outcomes, selected))
}

/// Runs `config.simulations` independent shift injections on `ds` and fits
/// the four training scenarios in each.
pub fn run_benchmark(ds: &Dataset, config: &BenchConfig, task: Task) -> Result<BenchReport> {
    config.validate()?;
    if ds.labels().is_none() {
        return Err(Error::State("benchmark data needs labels".into()));
    }
    let simulations = (0..config.simulations)
        .into_par_iter()
        .map(|i| run_simulation(ds, config, task, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(task, config, simulations))
}

fn summarize(task: Task, config: &BenchConfig, simulations: Vec<SimulationRecord>) -> BenchReport {
    let done: Vec<&SimulationRecord> = simulations.iter().filter(|s| s.skipped.is_none()).collect();
    let summary = SCENARIOS
        .iter()
        .enumerate()
        .map(|(k, &scenario)| {
            let rel: Vec<f64> =
                done.iter().map(|s| s.scenarios[k].relative_error).filter(|v| v.is_finite()).collect();
            let (mean_rel, sd_rel) = mean_sd(&rel);
            let errs: Vec<f64> = done.iter().map(|s| s.scenarios[k].test_error).collect();
            let ess: Vec<f64> = done.iter().map(|s| s.scenarios[k].ess).collect();
            ScenarioSummary {
                scenario,
                mean_relative_error: mean_rel,
                sd_relative_error: sd_rel,
                mean_test_error: mean_sd(&errs).0,
                mean_ess: mean_sd(&ess).0,
            }
        })
        .collect();
    let counts: Vec<f64> = done.iter().map(|s| s.selected.len() as f64).collect();
    let (mean_selected, sd_selected) = mean_sd(&counts);
    let majority = if done.is_empty() {
        f64::NAN
    } else {
        done.iter().filter(|s| s.scenarios[3].ess >= s.scenarios[2].ess).count() as f64 / done.len() as f64
    };
    BenchReport {
        task,
        config: config.clone(),
        completed: done.len(),
        skipped: simulations.len() - done.len(),
        mean_selected,
        sd_selected,
        selected_ess_majority: majority,
        summary,
        simulations,
    }
}

impl BenchReport {
    pub fn summary_for(&self, scenario: Scenario) -> &ScenarioSummary {
        self.summary.iter().find(|s| s.scenario == scenario).expect("all scenarios summarized")
    }

    /// One row per simulation and scenario; skipped simulations get a single
    /// row with empty numeric cells.
    pub fn table(&self) -> Table {
        let mut rows = Vec::new();
        for s in &self.simulations {
            match &s.skipped {
                Some(reason) => rows.push(vec![
                    s.index.to_string(),
                    format!("skipped: {reason}"),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]),
                None => {
                    for o in &s.scenarios {
                        rows.push(vec![
                            s.index.to_string(),
                            "ok".to_string(),
                            o.scenario.name().to_string(),
                            fmt_f64(o.test_error),
                            fmt_f64(o.relative_error),
                            fmt_f64(o.ess),
                            o.min_samples_leaf.to_string(),
                            s.selected.len().to_string(),
                        ]);
                    }
                }
            }
        }
        Table {
            columns: cols(&[
                "simulation",
                "status",
                "scenario",
                "test_error",
                "relative_error",
                "ess",
                "min_samples_leaf",
                "n_selected",
            ]),
            rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn analytic_rows() {
        let rows = analytic_toy_curves(&[1.0, 0.5, -0.5], &[4, 10]);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].d2, 4.0);
        assert!((rows[0].ess_star - 0.018_315_638_888_734_18).abs() < 1e-15);
        assert!((rows[3].ess_star - 0.082_084_998_623_898_8).abs() < 1e-15);
        assert_eq!(rows[3], ToyCurveRow { lambda: 0.5, ..rows[3] });
        assert_eq!((rows[5].d2, rows[5].ess_star), (rows[3].d2, rows[3].ess_star));
    }

    #[test]
    fn zero_shift_has_unit_weights() {
        let (_, _, w) = gaussian_shift_pair(3, 0.0, 100, &mut seeded(1)).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pairs_of_different_dimension_share_columns() {
        let (a_train, a_test, _) = gaussian_shift_pair(2, 0.3, 50, &mut seeded(4)).unwrap();
        let (b_train, b_test, _) = gaussian_shift_pair(5, 0.3, 50, &mut seeded(4)).unwrap();
        assert_eq!(a_train.features(), b_train.features().slice(ndarray::s![.., ..2]));
        assert_eq!(a_test.features(), b_test.features().slice(ndarray::s![.., ..2]));
        assert_eq!(a_train.labels(), b_train.labels());
        assert_eq!(a_test.labels(), b_test.labels());
        let w = gaussian_shift_pair(5, 0.3, 50, &mut seeded(4)).unwrap().2;
        let x = b_train.features();
        for (wi, row) in w.as_slice().iter().zip(x.outer_iter()) {
            assert!((wi - (0.3 * row.sum() - 5.0 * 0.09 / 2.0).exp()).abs() < 1e-12 * wi);
        }
    }

    #[test]
    fn test_labels_follow_the_generator() {
        let (_, test, _) = gaussian_shift_pair(2, 0.5, 20_000, &mut seeded(2)).unwrap();
        let x: Vec<f64> = test.features().column(0).to_vec();
        let y = test.labels().unwrap().as_real();
        let (mx, my) = (mean(&x), mean(&y));
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        assert!((sxy / sxx - 100.0).abs() < 1.0);
    }

    #[test]
    fn friedman_generator() {
        let ds = generate_friedman(20_000, &mut seeded(3)).unwrap();
        assert_eq!(ds.n_features(), 10);
        assert!(ds.features().iter().all(|v| (0.0..=1.0).contains(v)));
        let x: Vec<f64> = ds.features().column(3).to_vec();
        let y = ds.labels().unwrap().as_real();
        let (mx, my) = (mean(&x), mean(&y));
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        assert!((sxy / sxx - 10.0).abs() < 0.5);
        let var = sample_std(&y).powi(2);
        assert!((var - 25.0).abs() < 3.0, "{var}");
    }

    #[test]
    fn single_replication_has_zero_spread() {
        let cfg = ToyConfig::new(vec![0.25], vec![1, 2], 500, 1, 4);
        let r = run_toy(&cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.sd_rmse == 0.0 && row.rmse.len() == 1));
        assert_eq!(run_toy(&cfg).unwrap(), r);
    }

    #[test]
    fn config_validation() {
        assert!(ToyConfig::new(vec![], vec![1], 10, 1, 0).validate().is_err());
        assert!(ToyConfig::new(vec![0.1], vec![0], 10, 1, 0).validate().is_err());
        let mut b = BenchConfig::new(1, 0);
        b.ratio_train_fraction = 1.0;
        assert!(b.validate().is_err());
        assert!(BenchConfig::new(0, 0).validate().is_err());
    }
}
