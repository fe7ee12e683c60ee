//! Hyper-parameter search spaces and their candidate encoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Activation, HyperParams, KernelKind, LearningRate, MlpParams, ModelKind, Solver, SvrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Categorical(Vec<&'static str>),
    Range {
        lo: f64,
        hi: f64,
        scale: Scale,
        integer: bool,
        /// Points used by grid search, ascending.
        grid: Vec<f64>,
    },
}

impl Domain {
    fn grid_len(&self) -> usize {
        match self {
            Domain::Categorical(c) => c.len(),
            Domain::Range { grid, .. } => grid.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: &'static str,
    pub domain: Domain,
}

/// One gene per dimension: a category index or a numeric value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gene {
    Cat(usize),
    Num(f64),
}

pub type Candidate = Vec<Gene>;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub kind: ModelKind,
    pub dims: Vec<Dimension>,
}

fn names<T: Copy>(all: &[T], f: impl Fn(T) -> &'static str) -> Vec<&'static str> {
    all.iter().map(|&v| f(v)).collect()
}

impl SearchSpace {
    /// The standard search space with the default grid discretization:
    /// hidden sizes 20..=250 step 10, C and epsilon one point per decade.
    pub fn default_for(kind: ModelKind) -> Self {
        let dims = match kind {
            ModelKind::Mlp => vec![
                Dimension { name: "activation", domain: Domain::Categorical(names(Activation::ALL, Activation::as_str)) },
                Dimension { name: "solver", domain: Domain::Categorical(names(Solver::ALL, Solver::as_str)) },
                Dimension { name: "learning_rate", domain: Domain::Categorical(names(LearningRate::ALL, LearningRate::as_str)) },
                Dimension {
                    name: "hidden_layer_sizes",
                    domain: Domain::Range {
                        lo: 20.0,
                        hi: 250.0,
                        scale: Scale::Linear,
                        integer: true,
                        grid: (0..24).map(|i| 20.0 + 10.0 * i as f64).collect(),
                    },
                },
            ],
            ModelKind::Svr => vec![
                Dimension { name: "kernel", domain: Domain::Categorical(names(KernelKind::ALL, KernelKind::as_str)) },
                Dimension {
                    name: "C",
                    domain: Domain::Range {
                        lo: 1.0,
                        hi: 1e4,
                        scale: Scale::Log,
                        integer: false,
                        grid: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
                    },
                },
                Dimension {
                    name: "epsilon",
                    domain: Domain::Range {
                        lo: 1e-4,
                        hi: 1.0,
                        scale: Scale::Log,
                        integer: false,
                        grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
                    },
                },
            ],
        };
        Self { kind, dims }
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.dims {
            match &d.domain {
                Domain::Categorical(c) => {
                    let mut s = c.clone();
                    s.sort_unstable();
                    s.dedup();
                    if c.is_empty() || s.len() != c.len() {
                        return Err(Error::InvalidInput(format!("`{}` needs distinct, non-empty choices", d.name)));
                    }
                }
                Domain::Range { lo, hi, scale, grid, .. } => {
                    if !(lo < hi) || (*scale == Scale::Log && *lo <= 0.0) {
                        return Err(Error::InvalidInput(format!("`{}` has bad bounds [{lo}, {hi}]", d.name)));
                    }
                    if grid.iter().any(|g| g < lo || g > hi) {
                        return Err(Error::InvalidInput(format!("`{}` grid leaves its bounds", d.name)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of grid points: the product of per-dimension grid sizes.
    pub fn grid_size(&self) -> usize {
        self.dims.iter().map(|d| d.domain.grid_len()).product()
    }

    /// Every grid point, last dimension varying fastest.
    pub fn grid(&self) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = vec![Vec::new()];
        for d in &self.dims {
            let genes: Vec<Gene> = match &d.domain {
                Domain::Categorical(c) => (0..c.len()).map(Gene::Cat).collect(),
                Domain::Range { grid, .. } => grid.iter().map(|&v| Gene::Num(v)).collect(),
            };
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    genes.iter().map(move |g| {
                        let mut c = prefix.clone();
                        c.push(*g);
                        c
                    })
                })
                .collect();
        }
        if self.dims.is_empty() {
            return Vec::new();
        }
        out
    }

    /// Uniform over categories; uniform on the declared scale over ranges.
    pub fn sample_gene<R: Rng>(dim: &Dimension, rng: &mut R) -> Gene {
        match &dim.domain {
            Domain::Categorical(c) => Gene::Cat(rng.random_range(0..c.len())),
            Domain::Range { lo, hi, scale, integer, .. } => {
                if *integer {
                    return Gene::Num(rng.random_range(lo.round() as i64..=hi.round() as i64) as f64);
                }
                let v = match scale {
                    Scale::Linear => rng.random_range(*lo..=*hi),
                    Scale::Log => rng.random_range(lo.ln()..=hi.ln()).exp(),
                };
                Gene::Num(v.clamp(*lo, *hi))
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Candidate {
        self.dims.iter().map(|d| Self::sample_gene(d, rng)).collect()
    }

    pub fn contains(&self, c: &Candidate) -> bool {
        c.len() == self.dims.len()
            && self.dims.iter().zip(c).all(|(d, g)| match (&d.domain, g) {
                (Domain::Categorical(ch), Gene::Cat(i)) => *i < ch.len(),
                (Domain::Range { lo, hi, integer, .. }, Gene::Num(v)) => {
                    v >= lo && v <= hi && (!integer || v.fract() == 0.0)
                }
                _ => false,
            })
    }

    fn lookup(&self, c: &Candidate, name: &str) -> Option<Result<String>> {
        let pos = self.dims.iter().position(|d| d.name == name)?;
        Some(match (&self.dims[pos].domain, c.get(pos)) {
            (Domain::Categorical(ch), Some(Gene::Cat(i))) if *i < ch.len() => Ok(ch[*i].to_string()),
            (Domain::Range { .. }, Some(Gene::Num(v))) => Ok(v.to_string()),
            _ => Err(Error::InvalidInput(format!("candidate gene for `{name}` does not fit the space"))),
        })
    }

    fn value<T: std::str::FromStr>(&self, c: &Candidate, name: &str, default: T) -> Result<T> {
        match self.lookup(c, name) {
            None => Ok(default),
            Some(s) => {
                let s = s?;
                s.parse()
                    .map_err(|_| Error::InvalidInput(format!("`{s}` is not valid for `{name}`")))
            }
        }
    }

    /// Maps a candidate to model hyper-parameters; dimensions absent from the
    /// space take the model defaults.
    pub fn decode(&self, c: &Candidate) -> Result<HyperParams> {
        Ok(match self.kind {
            ModelKind::Mlp => {
                let d = MlpParams::default();
                let hidden: f64 = self.value(c, "hidden_layer_sizes", d.hidden_layer_size as f64)?;
                HyperParams::Mlp(MlpParams {
                    activation: self.value(c, "activation", d.activation)?,
                    solver: self.value(c, "solver", d.solver)?,
                    learning_rate: self.value(c, "learning_rate", d.learning_rate)?,
                    hidden_layer_size: hidden.round() as usize,
                })
            }
            ModelKind::Svr => {
                let d = SvrParams::default();
                HyperParams::Svr(SvrParams {
                    kernel: self.value(c, "kernel", d.kernel)?,
                    c: self.value(c, "C", d.c)?,
                    epsilon: self.value(c, "epsilon", d.epsilon)?,
                })
            }
        })
    }

    /// Inverse of [`decode`](Self::decode) for dimensions present in the space.
    pub fn encode(&self, p: &HyperParams) -> Result<Candidate> {
        let text = |name: &str| -> Option<String> {
            match p {
                HyperParams::Mlp(m) => match name {
                    "activation" => Some(m.activation.to_string()),
                    "solver" => Some(m.solver.to_string()),
                    "learning_rate" => Some(m.learning_rate.to_string()),
                    "hidden_layer_sizes" => Some(m.hidden_layer_size.to_string()),
                    _ => None,
                },
                HyperParams::Svr(s) => match name {
                    "kernel" => Some(s.kernel.to_string()),
                    "C" => Some(s.c.to_string()),
                    "epsilon" => Some(s.epsilon.to_string()),
                    _ => None,
                },
            }
        };
        self.dims
            .iter()
            .map(|d| {
                let t = text(d.name)
                    .ok_or_else(|| Error::InvalidInput(format!("no value for `{}`", d.name)))?;
                match &d.domain {
                    Domain::Categorical(ch) => ch
                        .iter()
                        .position(|c| *c == t)
                        .map(Gene::Cat)
                        .ok_or_else(|| Error::InvalidInput(format!("`{t}` not a choice of `{}`", d.name))),
                    Domain::Range { .. } => t
                        .parse()
                        .map(Gene::Num)
                        .map_err(|_| Error::InvalidInput(format!("`{t}` for `{}`", d.name))),
                }
            })
            .collect()
    }
}
