//! Grid, random and genetic search over a [`SearchSpace`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::CvResult;
use super::space::{Candidate, Domain, Gene, SearchSpace};
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::HyperParams;
use crate::seed;

/// Scores a configuration; lower mean is better.
pub trait Objective: Sync {
    fn evaluate(&self, params: &HyperParams) -> Result<CvResult>;
}

impl<F> Objective for F
where
    F: Fn(&HyperParams) -> Result<CvResult> + Sync,
{
    fn evaluate(&self, params: &HyperParams) -> Result<CvResult> {
        self(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gs,
    Rs,
    Ga,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gs, Method::Rs, Method::Ga];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gs => "gs",
            Method::Rs => "rs",
            Method::Ga => "ga",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}` (expected gs, rs or ga)")))
    }
}

/// One evaluated candidate. Failed evaluations score `+inf` and keep the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: HyperParams,
    pub folds: Vec<f64>,
    pub score: f64,
    pub std: f64,
    pub error: Option<String>,
}

impl Evaluation {
    fn from_result(params: HyperParams, r: Result<CvResult>) -> Self {
        match r {
            Ok(cv) if cv.mean.is_finite() => Self {
                params,
                folds: cv.folds,
                score: cv.mean,
                std: cv.std,
                error: None,
            },
            Ok(cv) => Self {
                params,
                folds: cv.folds,
                score: f64::INFINITY,
                std: f64::NAN,
                error: Some("non-finite CV score".into()),
            },
            Err(e) => Self {
                params,
                folds: Vec::new(),
                score: f64::INFINITY,
                std: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoResult {
    pub method: Method,
    pub best_params: HyperParams,
    pub best_score: f64,
    pub best_index: usize,
    pub log: Vec<Evaluation>,
    pub computational_time: f64,
    pub seed: u64,
    pub budget: usize,
    /// Best-so-far score after each GA generation (generation 0 = initial population).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

/// Index of the lowest score; ties go to the earliest.
fn argmin(log: &[Evaluation]) -> usize {
    let mut best = 0;
    for (i, e) in log.iter().enumerate() {
        if e.score < log[best].score {
            best = i;
        }
    }
    best
}

fn evaluate_batch(space: &SearchSpace, batch: &[Candidate], objective: &dyn Objective) -> Result<Vec<Evaluation>> {
    let params: Vec<HyperParams> = batch.iter().map(|c| space.decode(c)).collect::<Result<_>>()?;
    Ok(params
        .par_iter()
        .map(|p| Evaluation::from_result(*p, objective.evaluate(p)))
        .collect())
}

fn finish(method: Method, log: Vec<Evaluation>, seed: u64, ct: f64, history: Vec<f64>) -> Result<HpoResult> {
    if log.is_empty() {
        return Err(Error::InvalidInput("search evaluated no candidates".into()));
    }
    let best = argmin(&log);
    if !log[best].score.is_finite() {
        return Err(Error::InvalidInput(format!(
            "every candidate failed; first error: {}",
            log[0].error.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(HpoResult {
        method,
        best_params: log[best].params,
        best_score: log[best].score,
        best_index: best,
        budget: log.len(),
        log,
        computational_time: ct,
        seed,
        history,
    })
}

/// Evaluates every grid point once, in [`SearchSpace::grid`] order.
pub fn grid_search(space: &SearchSpace, objective: &dyn Objective, seed: u64) -> Result<HpoResult> {
    space.validate()?;
    let (log, ct) = metrics::timed(|| evaluate_batch(space, &space.grid(), objective));
    let log = log?;
    if log.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    finish(Method::Gs, log, seed, ct, Vec::new())
}

/// Grid size divided by four, rounded.
pub fn default_rs_budget(space: &SearchSpace) -> usize {
    ((space.grid_size() as f64 / 4.0).round() as usize).max(1)
}

/// Draws `budget` candidates from `(seed, "search")`, then evaluates them.
pub fn random_search(space: &SearchSpace, budget: usize, objective: &dyn Objective, seed: u64) -> Result<HpoResult> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::InvalidInput("random search budget must be at least 1".into()));
    }
    let (log, ct) = metrics::timed(|| {
        let mut rng = seed::rng(seed::derive(seed, seed::SEARCH));
        let batch: Vec<Candidate> = (0..budget).map(|_| space.sample(&mut rng)).collect();
        evaluate_batch(space, &batch, objective)
    });
    finish(Method::Rs, log?, seed, ct, Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    /// Standard deviation of the log-normal factor applied by numeric mutation.
    pub mutation_sigma: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            generations: 25,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            elitism: 1,
            mutation_sigma: 0.2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.population < 2 {
            return bad(format!("population {} < 2", self.population));
        }
        if self.elitism < 1 || self.elitism >= self.population {
            return bad(format!("elitism {} outside [1, population)", self.elitism));
        }
        if self.tournament < 1 {
            return bad("tournament size must be at least 1".into());
        }
        for (name, r) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} rate {r} outside [0, 1]"));
            }
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return bad(format!("mutation sigma {} must be finite and >= 0", self.mutation_sigma));
        }
        Ok(())
    }

    /// Evaluations in a full run: the initial population, then the non-elite
    /// offspring of each generation.
    pub fn evaluations(&self) -> usize {
        self.population + self.generations * (self.population - self.elitism)
    }
}

fn tournament<R: Rng>(scores: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..scores.len());
    for _ in 1..size {
        let c = rng.random_range(0..scores.len());
        if scores[c] < scores[best] || (scores[c] == scores[best] && c < best) {
            best = c;
        }
    }
    best
}

fn mutate<R: Rng>(space: &SearchSpace, c: &mut Candidate, ga: &GaConfig, rng: &mut R) {
    for (d, g) in space.dims.iter().zip(c.iter_mut()) {
        if rng.random::<f64>() >= ga.mutation_rate {
            continue;
        }
        match (&d.domain, g) {
            (Domain::Categorical(_), g) => *g = SearchSpace::sample_gene(d, rng),
            (Domain::Range { lo, hi, integer, .. }, Gene::Num(v)) => {
                let z: f64 = StandardNormal.sample(rng);
                let mut x = (*v * (ga.mutation_sigma * z).exp()).clamp(*lo, *hi);
                if *integer {
                    x = x.round().clamp(lo.ceil(), hi.floor());
                }
                *v = x;
            }
            (Domain::Range { .. }, g) => *g = SearchSpace::sample_gene(d, rng),
        }
    }
}

/// Generational GA. Fitness is the negated CV score; failed evaluations get
/// the worst fitness. The best `elitism` individuals pass unchanged into the
/// next generation without re-evaluation. `initial` seeds the population
/// (topped up with random individuals).
pub fn genetic_search(
    space: &SearchSpace,
    ga: &GaConfig,
    objective: &dyn Objective,
    initial: Option<Vec<Candidate>>,
) -> Result<HpoResult> {
    space.validate()?;
    ga.validate()?;
    if let Some(init) = &initial {
        if init.len() > ga.population || !init.iter().all(|c| space.contains(c)) {
            return Err(Error::InvalidInput("initial population does not fit the space".into()));
        }
    }
    let run = || -> Result<(Vec<Evaluation>, Vec<f64>)> {
        let mut rng = seed::rng(seed::derive(ga.seed, seed::SEARCH));
        let mut pop: Vec<Candidate> = initial.clone().unwrap_or_default();
        while pop.len() < ga.population {
            pop.push(space.sample(&mut rng));
        }
        let mut log = evaluate_batch(space, &pop, objective)?;
        let mut scores: Vec<f64> = log.iter().map(|e| e.score).collect();
        let mut history = vec![scores.iter().copied().fold(f64::INFINITY, f64::min)];

        for _ in 0..ga.generations {
            let mut order: Vec<usize> = (0..pop.len()).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            let mut next: Vec<Candidate> = order[..ga.elitism].iter().map(|&i| pop[i].clone()).collect();
            let mut next_scores: Vec<f64> = order[..ga.elitism].iter().map(|&i| scores[i]).collect();
            let mut children = Vec::with_capacity(ga.population - ga.elitism);
            while next.len() + children.len() < ga.population {
                let a = &pop[tournament(&scores, ga.tournament, &mut rng)];
                let b = &pop[tournament(&scores, ga.tournament, &mut rng)];
                let mut child = if rng.random::<f64>() < ga.crossover_rate {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| if rng.random::<bool>() { *x } else { *y })
                        .collect()
                } else {
                    a.clone()
                };
                mutate(space, &mut child, ga, &mut rng);
                children.push(child);
            }
            let evals = evaluate_batch(space, &children, objective)?;
            next_scores.extend(evals.iter().map(|e| e.score));
            next.extend(children);
            log.extend(evals);
            pop = next;
            scores = next_scores;
            let gen_best = scores.iter().copied().fold(f64::INFINITY, f64::min);
            history.push(gen_best.min(*history.last().unwrap()));
        }
        Ok((log, history))
    };
    let (out, ct) = metrics::timed(run);
    let (log, history) = out?;
    finish(Method::Ga, log, ga.seed, ct, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpo::space::{Dimension, Scale};
    use crate::models::{Activation, MlpParams, ModelKind, Solver, SvrParams};

    fn stub(score: impl Fn(&HyperParams) -> f64 + Sync) -> impl Fn(&HyperParams) -> Result<CvResult> + Sync {
        move |p| Ok(CvResult::from_folds(*p, 0, vec![score(p)]))
    }

    fn svr_c(p: &HyperParams) -> f64 {
        match p {
            HyperParams::Svr(s) => s.c,
            _ => unreachable!(),
        }
    }

    fn hidden(p: &HyperParams) -> f64 {
        match p {
            HyperParams::Mlp(m) => m.hidden_layer_size as f64,
            _ => unreachable!(),
        }
    }

    fn two_by_two() -> SearchSpace {
        SearchSpace {
            kind: ModelKind::Mlp,
            dims: vec![
                Dimension { name: "activation", domain: Domain::Categorical(vec!["relu", "tanh"]) },
                Dimension { name: "solver", domain: Domain::Categorical(vec!["adam", "lbfgs"]) },
            ],
        }
    }

    #[test]
    fn grid_counts_and_argmin() {
        let table = |p: &HyperParams| match p {
            HyperParams::Mlp(m) => match (m.activation, m.solver) {
                (Activation::Relu, Solver::Adam) => 4.0,
                (Activation::Relu, Solver::Lbfgs) => 2.0,
                (Activation::Tanh, Solver::Adam) => 1.0,
                _ => 3.0,
            },
            _ => unreachable!(),
        };
        let r = grid_search(&two_by_two(), &stub(table), 0).unwrap();
        assert_eq!(r.log.len(), 4);
        assert_eq!(r.budget, 4);
        assert_eq!(
            r.best_params,
            HyperParams::Mlp(MlpParams { activation: Activation::Tanh, solver: Solver::Adam, ..MlpParams::default() })
        );
    }

    #[test]
    fn ties_go_to_the_earliest() {
        let r = grid_search(&two_by_two(), &stub(|_| 1.0), 0).unwrap();
        assert_eq!(r.best_index, 0);
    }

    #[test]
    fn failures_score_infinity() {
        let obj = |p: &HyperParams| -> Result<CvResult> {
            match p {
                HyperParams::Mlp(m) if m.solver == Solver::Adam => Err(Error::InvalidInput("no".into())),
                _ => Ok(CvResult::from_folds(*p, 0, vec![1.0])),
            }
        };
        let r = grid_search(&two_by_two(), &obj, 0).unwrap();
        assert_eq!(r.log.iter().filter(|e| e.score.is_infinite()).count(), 2);
        assert_eq!(r.best_score, 1.0);
    }

    #[test]
    fn random_search_budget_bounds_and_reproducibility() {
        let space = SearchSpace::default_for(ModelKind::Svr);
        let f = stub(svr_c);
        let a = random_search(&space, 10, &f, 5).unwrap();
        let b = random_search(&space, 10, &f, 5).unwrap();
        assert_eq!(a.log.len(), 10);
        assert_eq!(a.log, b.log);
        for e in &a.log {
            let HyperParams::Svr(s) = e.params else { unreachable!() };
            assert!((1.0..=1e4).contains(&s.c) && (1e-4..=1.0).contains(&s.epsilon));
        }
        assert_eq!(default_rs_budget(&space), 19);
        assert_eq!(default_rs_budget(&SearchSpace::default_for(ModelKind::Mlp)), 144);
    }

    #[test]
    fn random_search_finds_planted_optimum() {
        let space = SearchSpace::default_for(ModelKind::Svr);
        let r = random_search(&space, 1000, &stub(|p| (svr_c(p) - 851.0).powi(2)), 9).unwrap();
        let c = svr_c(&r.best_params);
        assert!((c - 851.0).abs() <= 0.05 * 851.0, "{c}");
        let min = r.log.iter().map(|e| e.score).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_score, min);
    }

    #[test]
    fn ga_elitism_keeps_planted_optimum() {
        let space = SearchSpace::default_for(ModelKind::Svr);
        let opt = HyperParams::Svr(SvrParams { c: 851.0, ..SvrParams::default() });
        let init = vec![space.encode(&opt).unwrap()];
        let ga = GaConfig { generations: 10, ..GaConfig::with_seed(3) };
        let r = genetic_search(&space, &ga, &stub(|p| (svr_c(p) - 851.0).abs()), Some(init)).unwrap();
        assert_eq!(r.best_params, opt);
        assert_eq!(r.log.len(), ga.evaluations());
    }

    #[test]
    fn ga_history_is_monotone() {
        let space = SearchSpace::default_for(ModelKind::Mlp);
        let ga = GaConfig::with_seed(4);
        let r = genetic_search(&space, &ga, &stub(|p| (hidden(p) - 120.0).powi(2)), None).unwrap();
        assert_eq!(r.history.len(), ga.generations + 1);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*r.history.last().unwrap(), r.best_score);
        assert!(r.log.iter().all(|e| (20.0..=250.0).contains(&hidden(&e.params))));
    }

    #[test]
    fn ga_converges_near_enumerated_optimum() {
        let f = |h: f64| -(h - 120.0).powi(2);
        let oracle = (20..=250).map(f64::from).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        let space = SearchSpace::default_for(ModelKind::Mlp);
        for s in 0..5 {
            let ga = GaConfig { generations: 30, ..GaConfig::with_seed(s) };
            let r = genetic_search(&space, &ga, &stub(|p| -f(hidden(p))), None).unwrap();
            assert!((hidden(&r.best_params) - oracle).abs() <= 10.0, "seed {s}");
        }
    }

    #[test]
    fn ga_config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        assert!(GaConfig { population: 1, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { elitism: 0, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { mutation_rate: 1.5, ..GaConfig::default() }.validate().is_err());
        assert_eq!(GaConfig::default().evaluations(), 20 + 25 * 19);
    }

    #[test]
    fn log_scale_sampling_covers_decades() {
        let d = Dimension {
            name: "C",
            domain: Domain::Range { lo: 1.0, hi: 1e4, scale: Scale::Log, integer: false, grid: vec![] },
        };
        let mut rng = seed::rng(0);
        let below_10 = (0..4000)
            .filter(|_| matches!(SearchSpace::sample_gene(&d, &mut rng), Gene::Num(v) if v < 10.0))
            .count();
        assert!((800..1200).contains(&below_10), "{below_10}");
    }
}
