use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::InvalidInput(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

string_enum!(Activation { Relu => "relu", Tanh => "tanh", Logistic => "logistic", Identity => "identity" });
string_enum!(Solver { Adam => "adam", Lbfgs => "lbfgs" });
string_enum!(LearningRate { Constant => "constant", Adaptive => "adaptive", Invscaling => "invscaling" });
string_enum!(KernelKind { Poly => "poly", Rbf => "rbf", Sigmoid => "sigmoid" });
string_enum!(ModelKind { Mlp => "mlp", Svr => "svr" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpParams {
    pub activation: Activation,
    pub solver: Solver,
    pub learning_rate: LearningRate,
    pub hidden_layer_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            activation: Activation::Relu,
            solver: Solver::Adam,
            learning_rate: LearningRate::Constant,
            hidden_layer_size: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub kernel: KernelKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            c: 1.0,
            epsilon: 0.1,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.epsilon >= 0.0) || !self.c.is_finite() || !self.epsilon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "SVR needs C > 0 and epsilon >= 0, got C = {}, epsilon = {}",
                self.c, self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum HyperParams {
    Mlp(MlpParams),
    Svr(SvrParams),
}

impl HyperParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            HyperParams::Mlp(_) => ModelKind::Mlp,
            HyperParams::Svr(_) => ModelKind::Svr,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mlp => HyperParams::Mlp(MlpParams::default()),
            ModelKind::Svr => HyperParams::Svr(SvrParams::default()),
        }
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::Mlp(p) => write!(
                f,
                "activation={} solver={} learning_rate={} hidden_layer_sizes={}",
                p.activation, p.solver, p.learning_rate, p.hidden_layer_size
            ),
            HyperParams::Svr(p) => write!(f, "kernel={} C={} epsilon={}", p.kernel, p.c, p.epsilon),
        }
    }
}
