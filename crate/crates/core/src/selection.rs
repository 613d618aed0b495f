//! Validation-driven model selection over checkpoints and hyperparameter
//! grids, and the four-way submodel comparison.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccb::{train_with, CcbModel, DiagnosticsCollector, PredictMode, TrainDiagnostics, TrainingConfig};
use crate::data::{Example, FeatureSchema, SplitDataset};
use crate::metrics::{evaluate_with_index, k_nearest, EvaluationReport, NeighborIndex};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionCriterion {
    /// Lowest validation discrimination.
    Discrimination,
    /// Highest validation `accuracy - discrimination`.
    Delta,
}

impl SelectionCriterion {
    pub const ALL: [SelectionCriterion; 2] = [SelectionCriterion::Discrimination, SelectionCriterion::Delta];

    /// Score where larger is better.
    pub fn score(self, report: &EvaluationReport) -> f64 {
        match self {
            SelectionCriterion::Discrimination => -report.discrimination,
            SelectionCriterion::Delta => report.delta,
        }
    }

    /// Secondary comparison for equal scores across grid points; `Greater`
    /// means `a` is preferred.
    pub fn tie_break(self, a: &EvaluationReport, b: &EvaluationReport) -> Ordering {
        match self {
            SelectionCriterion::Discrimination => a.accuracy.total_cmp(&b.accuracy),
            SelectionCriterion::Delta => b.discrimination.total_cmp(&a.discrimination),
        }
    }
}

impl FromStr for SelectionCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrimination" => Ok(SelectionCriterion::Discrimination),
            "delta" => Ok(SelectionCriterion::Delta),
            other => Err(Error::Config(format!("unknown selection criterion {other:?}"))),
        }
    }
}

impl fmt::Display for SelectionCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionCriterion::Discrimination => "discrimination",
            SelectionCriterion::Delta => "delta",
        })
    }
}

/// Validation report of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub step: u64,
    pub report: EvaluationReport,
}

/// Position of the best report; equal scores go to the later step.
pub fn select_from_reports(reports: &[CheckpointReport], criterion: SelectionCriterion) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (sb, si) = (criterion.score(&reports[b].report), criterion.score(&r.report));
                if si > sb || (si == sb && r.step >= reports[b].step) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or_else(|| Error::Config("no checkpoints to select from".into()))
}

/// Greedy `original`-mode validation reports for every checkpoint.
pub fn evaluate_checkpoints<T: Scalar>(
    checkpoints: &[CcbModel<T>],
    validation: &[Example<T>],
    index: &NeighborIndex,
) -> Result<Vec<CheckpointReport>> {
    checkpoints
        .par_iter()
        .map(|model| {
            let preds = model.predict_split(validation, PredictMode::Original)?;
            Ok(CheckpointReport {
                step: model.step,
                report: evaluate_with_index(&preds, validation, index, "validation")?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Position in the checkpoint list.
    pub position: usize,
    pub step: u64,
    pub report: EvaluationReport,
}

pub fn select_checkpoint_with_index<T: Scalar>(
    checkpoints: &[CcbModel<T>],
    validation: &[Example<T>],
    criterion: SelectionCriterion,
    index: &NeighborIndex,
) -> Result<Selection> {
    if checkpoints.is_empty() {
        return Err(Error::Config("no checkpoints to select from".into()));
    }
    let reports = evaluate_checkpoints(checkpoints, validation, index)?;
    let position = select_from_reports(&reports, criterion)?;
    Ok(Selection {
        position,
        step: reports[position].step,
        report: reports[position].report.clone(),
    })
}

/// Evaluate every checkpoint on validation and return the best one under
/// `criterion`.
pub fn select_checkpoint<T: Scalar>(
    checkpoints: &[CcbModel<T>],
    validation: &[Example<T>],
    schema: &FeatureSchema,
    criterion: SelectionCriterion,
    k: usize,
) -> Result<Selection> {
    let index = k_nearest(validation, k, schema)?;
    select_checkpoint_with_index(checkpoints, validation, criterion, &index)
}

/// Hyperparameter grid. Every point trains with each seed in `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub hidden: Vec<usize>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    /// Defaults to `default_steps(|train|)`.
    pub steps: Option<u64>,
    /// Defaults to 1% of the steps.
    pub checkpoint_every: Option<u64>,
}

impl GridSpec {
    pub fn configs(&self, n_train: usize) -> Vec<TrainingConfig> {
        let mut out = Vec::new();
        for &lambda in &self.lambdas {
            for &hidden in &self.hidden {
                for &seed in &self.seeds {
                    let mut cfg = TrainingConfig::with_defaults(lambda, hidden, seed, n_train);
                    cfg.alpha = self.alpha;
                    if let Some(steps) = self.steps {
                        cfg.steps = steps;
                        cfg.checkpoint_every = crate::ccb::default_checkpoint_every(steps);
                    }
                    if let Some(every) = self.checkpoint_every {
                        cfg.checkpoint_every = every;
                    }
                    out.push(cfg);
                }
            }
        }
        out
    }
}

/// One trained grid point with all of its checkpoints and their validation
/// reports.
#[derive(Debug, Clone)]
pub struct GridRun<T> {
    pub config: TrainingConfig,
    pub checkpoints: Vec<CcbModel<T>>,
    pub reports: Vec<CheckpointReport>,
    pub diagnostics: TrainDiagnostics,
}

impl<T: Scalar> GridRun<T> {
    pub fn select(&self, criterion: SelectionCriterion) -> Result<Selection> {
        let position = select_from_reports(&self.reports, criterion)?;
        Ok(Selection {
            position,
            step: self.reports[position].step,
            report: self.reports[position].report.clone(),
        })
    }

    pub fn selected_model(&self, criterion: SelectionCriterion) -> Result<&CcbModel<T>> {
        Ok(&self.checkpoints[self.select(criterion)?.position])
    }
}

/// Train and validate one configuration.
pub fn run_config<T: Scalar>(
    dataset: &SplitDataset<T>,
    config: &TrainingConfig,
    validation_index: &NeighborIndex,
) -> Result<GridRun<T>> {
    let mut diag = DiagnosticsCollector::new(config.steps);
    let checkpoints = train_with(&dataset.train, config, |rec| diag.observe(rec))?;
    let reports = evaluate_checkpoints(&checkpoints, &dataset.validation, validation_index)?;
    Ok(GridRun {
        config: config.clone(),
        checkpoints,
        reports,
        diagnostics: diag.finish(),
    })
}

/// Train every grid point (at most `jobs` concurrently). Each run derives
/// all of its randomness from its own configuration, so results do not
/// depend on grid order or scheduling.
pub fn grid_train<T: Scalar>(
    dataset: &SplitDataset<T>,
    spec: &GridSpec,
    validation_index: &NeighborIndex,
    jobs: usize,
) -> Result<Vec<GridRun<T>>> {
    let configs = spec.configs(dataset.train.len());
    if configs.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| run_config(dataset, cfg, validation_index))
            .collect()
    })
}

/// Order grid runs best-first by their selected checkpoint's validation
/// score. Exact ties (common when several points reach zero
/// discrimination) go to the higher accuracy under `Discrimination` and the
/// lower discrimination under `Delta`, then to `(lambda, hidden, seed)`.
pub fn rank_runs<T: Scalar>(runs: &[GridRun<T>], criterion: SelectionCriterion) -> Result<Vec<(usize, Selection)>> {
    let mut ranked = runs
        .iter()
        .enumerate()
        .map(|(i, run)| run.select(criterion).map(|s| (i, s)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|(ia, a), (ib, b)| {
        let (ca, cb) = (&runs[*ia].config, &runs[*ib].config);
        criterion
            .score(&b.report)
            .partial_cmp(&criterion.score(&a.report))
            .unwrap_or(Ordering::Equal)
            .then_with(|| criterion.tie_break(&b.report, &a.report))
            .then(ca.lambda.total_cmp(&cb.lambda))
            .then(ca.hidden_dim.cmp(&cb.hidden_dim))
            .then(ca.seed.cmp(&cb.seed))
    });
    Ok(ranked)
}

#[derive(Debug, Clone)]
pub struct GridResult<T> {
    pub runs: Vec<GridRun<T>>,
    /// `(run position, its selection)`, best first.
    pub ranking: Vec<(usize, Selection)>,
    pub criterion: SelectionCriterion,
}

impl<T: Scalar> GridResult<T> {
    pub fn best(&self) -> (&GridRun<T>, &Selection) {
        let (i, sel) = &self.ranking[0];
        (&self.runs[*i], sel)
    }

    pub fn best_model(&self) -> &CcbModel<T> {
        let (run, sel) = self.best();
        &run.checkpoints[sel.position]
    }
}

/// Train the whole grid, select a checkpoint per point and rank the points.
pub fn grid_search<T: Scalar>(
    dataset: &SplitDataset<T>,
    schema: &FeatureSchema,
    spec: &GridSpec,
    criterion: SelectionCriterion,
    k: usize,
    jobs: usize,
) -> Result<GridResult<T>> {
    let index = k_nearest(&dataset.validation, k, schema)?;
    let runs = grid_train(dataset, spec, &index, jobs)?;
    let ranking = rank_runs(&runs, criterion)?;
    Ok(GridResult {
        runs,
        ranking,
        criterion,
    })
}

pub const GRID_CSV_HEADER: &str = "lambda,hidden,seed,step,val_acc,val_discr,val_delta,selected";

/// One row per (grid point, checkpoint); `selected` marks each point's
/// chosen checkpoint under `criterion`.
pub fn write_grid_csv<T: Scalar, W: Write>(mut w: W, runs: &[GridRun<T>], criterion: SelectionCriterion) -> Result<()> {
    writeln!(w, "{GRID_CSV_HEADER}")?;
    for run in runs {
        let chosen = run.select(criterion)?.position;
        for (i, r) in run.reports.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{:.4},{:.4},{:.4},{}",
                run.config.lambda,
                run.config.hidden_dim,
                run.config.seed,
                r.step,
                r.report.accuracy,
                r.report.discrimination,
                r.report.delta,
                u8::from(i == chosen)
            )?;
        }
    }
    Ok(())
}

/// Test-split reports for the four prediction modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelReport {
    pub rows: Vec<(PredictMode, EvaluationReport)>,
}

impl SubmodelReport {
    pub fn label(mode: PredictMode) -> &'static str {
        match mode {
            PredictMode::Model0 => "Model 0",
            PredictMode::Model1 => "Model 1",
            PredictMode::Reversed => "Reversed Model",
            PredictMode::Original => "Original Model",
        }
    }

    pub fn get(&self, mode: PredictMode) -> &EvaluationReport {
        &self.rows.iter().find(|(m, _)| *m == mode).expect("all four modes present").1
    }

    /// Largest pairwise difference of `metric` across the four rows.
    pub fn max_gap(&self, metric: impl Fn(&EvaluationReport) -> f64) -> f64 {
        let values: Vec<f64> = self.rows.iter().map(|(_, r)| metric(r)).collect();
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

pub fn submodel_report_with_index<T: Scalar>(
    model: &CcbModel<T>,
    test: &[Example<T>],
    index: &NeighborIndex,
) -> Result<SubmodelReport> {
    let rows = PredictMode::ALL
        .iter()
        .map(|&mode| {
            let preds = model.predict_split(test, mode)?;
            Ok((mode, evaluate_with_index(&preds, test, index, "test")?))
        })
        .collect::<Result<_>>()?;
    Ok(SubmodelReport { rows })
}

pub fn submodel_report<T: Scalar>(
    model: &CcbModel<T>,
    test: &[Example<T>],
    schema: &FeatureSchema,
    k: usize,
) -> Result<SubmodelReport> {
    let index = k_nearest(test, k, schema)?;
    submodel_report_with_index(model, test, &index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(acc: f64, discr: f64) -> EvaluationReport {
        EvaluationReport::new("validation", 10, 1, acc, discr, 1.0)
    }

    fn at(step: u64, acc: f64, discr: f64) -> CheckpointReport {
        CheckpointReport { step, report: report(acc, discr) }
    }

    #[test]
    fn single_checkpoint_is_selected() {
        let reports = [at(5, 0.1, 0.9)];
        for c in SelectionCriterion::ALL {
            assert_eq!(select_from_reports(&reports, c).unwrap(), 0);
        }
        assert!(select_from_reports(&[], SelectionCriterion::Delta).is_err());
    }

    #[test]
    fn discrimination_is_minimised() {
        let reports = [at(1, 0.9, 0.10), at(2, 0.6, 0.02)];
        assert_eq!(select_from_reports(&reports, SelectionCriterion::Discrimination).unwrap(), 1);
    }

    #[test]
    fn delta_is_maximised() {
        let reports = [at(1, 0.80, 0.05), at(2, 0.75, 0.01)];
        assert_eq!(select_from_reports(&reports, SelectionCriterion::Delta).unwrap(), 0);
    }

    #[test]
    fn ties_prefer_later_steps() {
        let reports = [at(10, 0.7, 0.0), at(20, 0.8, 0.0), at(30, 0.6, 0.0)];
        assert_eq!(select_from_reports(&reports, SelectionCriterion::Discrimination).unwrap(), 2);
    }

    fn run(lambda: f64, reports: Vec<CheckpointReport>) -> GridRun<f64> {
        GridRun {
            config: TrainingConfig::with_defaults(lambda, 4, 0, 10),
            checkpoints: Vec::new(),
            reports,
            diagnostics: TrainDiagnostics::default(),
        }
    }

    #[test]
    fn grid_ties_use_secondary_metric() {
        // Both points reach zero discrimination; the all-positive one is worse.
        let runs = [run(10.0, vec![at(1, 0.25, 0.0)]), run(50.0, vec![at(1, 0.75, 0.0)])];
        let ranked = rank_runs(&runs, SelectionCriterion::Discrimination).unwrap();
        assert_eq!(ranked[0].0, 1);

        let runs = [run(10.0, vec![at(1, 0.75, 0.25)]), run(50.0, vec![at(1, 0.625, 0.125)])];
        let ranked = rank_runs(&runs, SelectionCriterion::Delta).unwrap();
        assert_eq!(ranked[0].0, 1);

        let runs = [run(50.0, vec![at(1, 0.5, 0.1)]), run(10.0, vec![at(1, 0.5, 0.1)])];
        let ranked = rank_runs(&runs, SelectionCriterion::Delta).unwrap();
        assert_eq!(ranked[0].0, 1);
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("delta".parse::<SelectionCriterion>().unwrap(), SelectionCriterion::Delta);
        assert!("accuracy".parse::<SelectionCriterion>().is_err());
        for c in SelectionCriterion::ALL {
            assert_eq!(c.to_string().parse::<SelectionCriterion>().unwrap(), c);
        }
    }
}
