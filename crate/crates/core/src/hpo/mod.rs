//! Hyper-parameter optimization: search spaces, cross-validated scoring,
//! GS/RS/GA search, and the split → tune → refit → test pipeline.

pub mod cv;
pub mod report;
pub mod search;
pub mod space;

use serde::{Deserialize, Serialize};

pub use cv::{cv_folds, cv_score, cv_score_on, CvEvaluator, CvResult};
pub use search::{
    default_rs_budget, genetic_search, grid_search, random_search, Evaluation, GaConfig, HpoResult, Method, Objective,
};
pub use space::{Candidate, Dimension, Domain, Gene, Scale, SearchSpace};

use crate::dataset::{kfold, split, Dataset, Wavelength};
use crate::error::Result;
use crate::metrics::{self, ErrorStats};
use crate::models::{HyperParams, ModelKind, TrainedModel};
use crate::seed;

pub const TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRequest {
    pub method: Method,
    pub model: ModelKind,
    pub wavelength: Wavelength,
    pub seed: u64,
    /// RS evaluation count; ignored by GS and GA.
    pub budget: Option<usize>,
    pub k: usize,
    /// GA settings; the seed field is replaced by the request seed.
    pub ga: GaConfig,
}

impl TuneRequest {
    pub fn new(method: Method, model: ModelKind, wavelength: Wavelength, seed: u64) -> Self {
        Self {
            method,
            model,
            wavelength,
            seed,
            budget: None,
            k: DEFAULT_K,
            ga: GaConfig::default(),
        }
    }
}

/// Held-out test errors of a refit model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub rmse: f64,
    pub rmspe: f64,
    pub abs_error: ErrorStats,
    pub signed_mean: f64,
    pub signed_std: f64,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TestReport {
    pub fn new(y: &[f64], yhat: Vec<f64>) -> Result<Self> {
        let (signed_mean, signed_std) = metrics::signed_error_stats(y, &yhat)?;
        Ok(Self {
            rmse: metrics::rmse(y, &yhat)?,
            rmspe: metrics::rmspe(y, &yhat)?,
            abs_error: metrics::abs_error_stats(y, &yhat)?,
            signed_mean,
            signed_std,
            predictions: yhat,
            targets: y.to_vec(),
        })
    }
}

/// Deterministic record of one tuning run (`best_params.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub model: ModelKind,
    pub wavelength: Wavelength,
    pub seed: u64,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub evaluations: usize,
    pub best_params: HyperParams,
    pub cv_rmse: f64,
    pub cv_std: f64,
    pub test: TestReport,
    pub default_params: HyperParams,
    pub default_cv_rmse: f64,
    pub default_test: TestReport,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub summary: RunSummary,
    pub hpo: HpoResult,
    pub model: TrainedModel,
}

fn test_report(train: &Dataset, test: &Dataset, params: &HyperParams, seed: u64) -> Result<(TrainedModel, TestReport)> {
    let model = TrainedModel::train(&train.features(), &train.targets(), params, seed)?;
    let yhat = model.predict_all(&test.features())?;
    let report = TestReport::new(&test.targets(), yhat)?;
    Ok((model, report))
}

/// Splits 80/20, tunes on the training part with `k`-fold CV, refits the
/// winner and the default configuration on the whole training part, and
/// scores both on the held-out rows.
pub fn tune(table: &Dataset, req: &TuneRequest) -> Result<TuneOutcome> {
    let ds = table.with_target(req.wavelength);
    let (train, test) = split(&ds, TEST_FRACTION, seed::derive(req.seed, seed::SPLIT))?;
    let (x, y) = (train.features(), train.targets());
    let plan = kfold(train.len(), req.k, seed::derive(req.seed, seed::FOLDS))?;
    let objective = CvEvaluator::new(&x, &y, &plan, req.seed);
    let space = SearchSpace::default_for(req.model);
    let hpo = match req.method {
        Method::Gs => grid_search(&space, &objective, req.seed)?,
        Method::Rs => {
            let budget = req.budget.unwrap_or_else(|| default_rs_budget(&space));
            random_search(&space, budget, &objective, req.seed)?
        }
        Method::Ga => {
            let ga = GaConfig { seed: req.seed, ..req.ga };
            genetic_search(&space, &ga, &objective, None)?
        }
    };
    let default_params = HyperParams::default_for(req.model);
    let default_cv = objective.evaluate(&default_params)?;
    let final_seed = seed::derive(req.seed, seed::FINAL);
    let (model, test_rep) = test_report(&train, &test, &hpo.best_params, final_seed)?;
    let (_, default_test) = test_report(&train, &test, &default_params, final_seed)?;
    let summary = RunSummary {
        method: req.method,
        model: req.model,
        wavelength: req.wavelength,
        seed: req.seed,
        k: req.k,
        n_train: train.len(),
        n_test: test.len(),
        evaluations: hpo.log.len(),
        best_params: hpo.best_params,
        cv_rmse: hpo.best_score,
        cv_std: hpo.log[hpo.best_index].std,
        test: test_rep,
        default_params,
        default_cv_rmse: default_cv.mean,
        default_test,
    };
    Ok(TuneOutcome { summary, hpo, model })
}

/// One cell of a comparison sweep; failures are kept per cell.
#[derive(Debug, Clone)]
pub struct ComparisonCell {
    pub request: TuneRequest,
    pub outcome: std::result::Result<(RunSummary, f64), String>,
}

/// Runs every method × model × wavelength × seed combination. Each cell is
/// independent; a failing cell does not stop the others.
pub fn run_comparison(
    table: &Dataset,
    k: usize,
    seeds: &[u64],
    methods: &[Method],
    models: &[ModelKind],
    wavelengths: &[Wavelength],
    rs_budget: Option<usize>,
    ga: GaConfig,
) -> Vec<ComparisonCell> {
    let mut cells = Vec::new();
    for &model in models {
        for &wavelength in wavelengths {
            for &method in methods {
                for &s in seeds {
                    let request = TuneRequest {
                        budget: rs_budget,
                        k,
                        ga,
                        ..TuneRequest::new(method, model, wavelength, s)
                    };
                    let outcome = tune(table, &request)
                        .map(|o| (o.summary, o.hpo.computational_time))
                        .map_err(|e| e.to_string());
                    cells.push(ComparisonCell { request, outcome });
                }
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::shipped_table;

    #[test]
    fn svr_rs_pipeline_shapes() {
        let req = TuneRequest {
            budget: Some(4),
            ..TuneRequest::new(Method::Rs, ModelKind::Svr, Wavelength::Nm493_4, 2)
        };
        let out = tune(&shipped_table(), &req).unwrap();
        assert_eq!((out.summary.n_train, out.summary.n_test), (43, 11));
        assert_eq!(out.hpo.log.len(), 4);
        assert_eq!(out.summary.test.predictions.len(), 11);
        let again = tune(&shipped_table(), &req).unwrap();
        assert_eq!(out.summary, again.summary);
    }

    #[test]
    fn comparison_reports_failures_per_cell() {
        let cells = run_comparison(
            &shipped_table(),
            5,
            &[1],
            &[Method::Rs],
            &[ModelKind::Svr],
            &[Wavelength::Nm821_4],
            Some(0),
            GaConfig::default(),
        );
        assert_eq!(cells.len(), 1);
        assert!(cells[0].outcome.is_err());
        let cells = run_comparison(
            &shipped_table(),
            5,
            &[1],
            &[Method::Rs],
            &[ModelKind::Svr],
            &[Wavelength::Nm821_4],
            Some(3),
            GaConfig::default(),
        );
        assert!(cells[0].outcome.is_ok());
    }
}
