use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvType {
    Sage,
    Gat,
    Hgt,
}

impl ConvType {
    pub const ALL: [ConvType; 3] = [ConvType::Sage, ConvType::Gat, ConvType::Hgt];

    pub fn name(self) -> &'static str {
        match self {
            ConvType::Sage => "sage",
            ConvType::Gat => "gat",
            ConvType::Hgt => "hgt",
        }
    }
}

impl fmt::Display for ConvType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConvType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConvType::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown convolution {s:?}; expected sage, gat or hgt")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Relu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Elu => tape.elu(v),
            Activation::Relu => tape.relu(v),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Final representation of the article's news node.
    #[default]
    NewsNode,
    MeanAll,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    #[default]
    Hetero,
    Homo,
}

pub const N_LAYERS: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv: ConvType,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub heads: usize,
    pub activation: Activation,
    pub readout: Readout,
    pub mode: GraphMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(ConvType::Hgt, GraphMode::Hetero)
    }
}

impl ModelConfig {
    pub fn new(conv: ConvType, mode: GraphMode) -> Self {
        Self {
            conv,
            hidden_dim: 64,
            n_layers: N_LAYERS,
            heads: 1,
            activation: Activation::Elu,
            readout: Readout::NewsNode,
            mode,
        }
    }

    pub fn with_hidden(mut self, hidden_dim: usize, heads: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self.heads = heads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers != N_LAYERS {
            return Err(Error::Config(format!("n_layers must be {N_LAYERS}, got {}", self.n_layers)));
        }
        if self.hidden_dim == 0 || self.heads == 0 {
            return Err(Error::Config("hidden_dim and heads must be positive".into()));
        }
        if self.conv != ConvType::Sage && !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        Ok(())
    }
}
