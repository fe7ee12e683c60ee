//! K-fold cross-validated RMSE.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{kfold, Dataset, FoldPlan, Standardizer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics;
use crate::models::mlp::{adaptive_matches_constant, StopCriteria};
use crate::models::{FittedModel, HyperParams, LearningRate, MlpParams, Solver};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub params: HyperParams,
    pub seed: u64,
}

impl CvResult {
    pub fn from_folds(params: HyperParams, seed: u64, folds: Vec<f64>) -> Self {
        Self {
            mean: metrics::mean(&folds),
            std: metrics::population_std(&folds),
            folds,
            params,
            seed,
        }
    }
}

/// Runs `fit_predict(train_x, train_y, held_x, fold)` on every fold of `plan`,
/// with features standardized on the training part of each fold.
pub fn cv_folds<F>(x: &Matrix, y: &[f64], plan: &FoldPlan, mut fit_predict: F) -> Result<Vec<f64>>
where
    F: FnMut(&Matrix, &[f64], &Matrix, usize) -> Result<Vec<f64>>,
{
    if x.rows() != y.len() || plan.assignments.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: x.rows(),
        });
    }
    (0..plan.k)
        .map(|fold| {
            let wrap = |e: Error| Error::Fold {
                fold,
                source: Box::new(e),
            };
            let (train, held) = plan.indices(fold);
            let xt = x.select_rows(&train);
            let scaler = Standardizer::fit(&xt).map_err(wrap)?;
            let xt = scaler.apply(&xt).map_err(wrap)?;
            let xh = scaler.apply(&x.select_rows(&held)).map_err(wrap)?;
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let yh: Vec<f64> = held.iter().map(|&i| y[i]).collect();
            let pred = fit_predict(&xt, &yt, &xh, fold).map_err(wrap)?;
            metrics::rmse(&yh, &pred).map_err(wrap)
        })
        .collect()
}

/// Cross-validated score of one configuration on a fixed fold plan.
/// Network initialization in fold `f` is seeded from `(seed, "init", f)`.
pub fn cv_score_on(x: &Matrix, y: &[f64], plan: &FoldPlan, params: &HyperParams, seed: u64) -> Result<CvResult> {
    let folds = cv_folds(x, y, plan, |xt, yt, xh, fold| {
        let model = FittedModel::fit(xt, yt, params, seed::derive_indexed(seed, seed::INIT, fold))?;
        xh.iter_rows().map(|r| model.predict_standardized(r)).collect()
    })?;
    Ok(CvResult::from_folds(*params, seed, folds))
}

struct CachedFold {
    predictions: Vec<f64>,
    adaptive_equivalent: bool,
}

/// Scores configurations on one fixed fold plan, reusing per-fold MLP fits
/// whose results are identical by construction: the learning-rate schedule
/// has no effect on L-BFGS, and an adaptive Adam run equals the constant run
/// until the loss first stalls. Scores match [`cv_score_on`] exactly.
pub struct CvEvaluator<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    plan: &'a FoldPlan,
    seed: u64,
    cache: Mutex<HashMap<(MlpParams, usize), std::sync::Arc<CachedFold>>>,
}

impl<'a> CvEvaluator<'a> {
    pub fn new(x: &'a Matrix, y: &'a [f64], plan: &'a FoldPlan, seed: u64) -> Self {
        Self {
            x,
            y,
            plan,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn lookup(&self, p: &MlpParams, fold: usize) -> Option<Vec<f64>> {
        let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        let canonical = canonical(p);
        if let Some(hit) = cache.get(&(canonical, fold)) {
            return Some(hit.predictions.clone());
        }
        if p.solver == Solver::Adam && p.learning_rate == LearningRate::Adaptive {
            let constant = MlpParams { learning_rate: LearningRate::Constant, ..*p };
            if let Some(hit) = cache.get(&(constant, fold)) {
                if hit.adaptive_equivalent {
                    return Some(hit.predictions.clone());
                }
            }
        }
        None
    }

    pub fn evaluate(&self, params: &HyperParams) -> Result<CvResult> {
        let folds = cv_folds(self.x, self.y, self.plan, |xt, yt, xh, fold| {
            let init = seed::derive_indexed(self.seed, seed::INIT, fold);
            let HyperParams::Mlp(p) = params else {
                let model = FittedModel::fit(xt, yt, params, init)?;
                return xh.iter_rows().map(|r| model.predict_standardized(r)).collect();
            };
            if let Some(pred) = self.lookup(p, fold) {
                return Ok(pred);
            }
            let model = FittedModel::fit(xt, yt, params, init)?;
            let predictions: Vec<f64> = xh.iter_rows().map(|r| model.predict_standardized(r)).collect::<Result<_>>()?;
            let adaptive_equivalent = match &model {
                FittedModel::Mlp(m) => {
                    p.solver == Solver::Adam
                        && adaptive_matches_constant(&m.loss_log, StopCriteria::default_for(Solver::Adam))
                }
                FittedModel::Svr(_) => false,
            };
            let entry = CachedFold {
                predictions: predictions.clone(),
                adaptive_equivalent,
            };
            self.cache
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .insert((canonical(p), fold), std::sync::Arc::new(entry));
            Ok(predictions)
        })?;
        Ok(CvResult::from_folds(*params, self.seed, folds))
    }
}

fn canonical(p: &MlpParams) -> MlpParams {
    match p.solver {
        Solver::Lbfgs => MlpParams { learning_rate: LearningRate::Constant, ..*p },
        Solver::Adam => *p,
    }
}

impl super::Objective for CvEvaluator<'_> {
    fn evaluate(&self, params: &HyperParams) -> Result<CvResult> {
        CvEvaluator::evaluate(self, params)
    }
}

/// Folds are drawn from `(seed, "folds")`.
pub fn cv_score(params: &HyperParams, ds: &Dataset, k: usize, seed: u64) -> Result<CvResult> {
    let plan = kfold(ds.len(), k, seed::derive(seed, seed::FOLDS))?;
    cv_score_on(&ds.features(), &ds.targets(), &plan, params, seed)
}
