use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::edm::{assemble_final, DistanceMatrix};
use crate::error::{Error, Result};
use crate::net::{symmetrize_and_clamp, NetworkParams, StackInput, StackedNet};
use crate::pose::JointMask;
use crate::represent::Representation;
use crate::sparse::{recover_sparse, Dictionary, LassoOptions};

/// Fills in the occluded rows and columns of a 2D EDM.
pub trait Recoverer: Sync {
    fn label(&self) -> String;
    /// Scheme used to build the occluded input and its ground truth.
    fn representation(&self) -> Representation;
    /// Recovered matrix for record `index`. Only the occluded rows and
    /// columns are used; the harness restores the observed entries.
    fn recover(&self, index: usize, input: &DistanceMatrix, mask: &JointMask) -> Result<DistanceMatrix>;
}

/// Maps an occluded 2D EDM to a 3D EDM.
pub trait Pipeline: Sync {
    fn label(&self) -> String;
    fn representation(&self) -> Representation;
    fn predict_3d(&self, index: usize, input: &DistanceMatrix, mask: &JointMask) -> Result<DistanceMatrix>;
}

/// The available recovery methods, by report label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Identity,
    ZeroNet,
    AveNet,
    Sparse,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Identity, Method::ZeroNet, Method::AveNet, Method::Sparse];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Identity => "identity",
            Method::ZeroNet => "zero-net",
            Method::AveNet => "ave-net",
            Method::Sparse => "sparse",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::invalid(format!("unknown method '{s}' (expected identity, zero-net, ave-net or sparse)"))
        })
    }
}

/// No recovery: the occluded input passes through unchanged.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub representation: Representation,
}

impl Recoverer for Identity {
    fn label(&self) -> String {
        Method::Identity.to_string()
    }

    fn representation(&self) -> Representation {
        self.representation
    }

    fn recover(&self, _: usize, input: &DistanceMatrix, _: &JointMask) -> Result<DistanceMatrix> {
        Ok(input.clone())
    }
}

/// Recovery network applied to the representation it was trained on.
#[derive(Debug, Clone)]
pub struct NetRecoverer {
    pub params: NetworkParams,
    pub representation: Representation,
}

impl Recoverer for NetRecoverer {
    fn label(&self) -> String {
        match self.representation {
            Representation::Zero => Method::ZeroNet.to_string(),
            Representation::Average => Method::AveNet.to_string(),
        }
    }

    fn representation(&self) -> Representation {
        self.representation
    }

    fn recover(&self, _: usize, input: &DistanceMatrix, _: &JointMask) -> Result<DistanceMatrix> {
        symmetrize_and_clamp(&self.params.forward(input)?, input.n())
    }
}

/// Masked sparse coding against a learned dictionary.
#[derive(Debug, Clone)]
pub struct SparseRecoverer {
    pub dictionary: Dictionary,
    pub lambda: f64,
    pub options: LassoOptions,
}

impl Recoverer for SparseRecoverer {
    fn label(&self) -> String {
        Method::Sparse.to_string()
    }

    fn representation(&self) -> Representation {
        Representation::Zero
    }

    fn recover(&self, _: usize, input: &DistanceMatrix, mask: &JointMask) -> Result<DistanceMatrix> {
        Ok(recover_sparse(input, mask, &self.dictionary, self.lambda, &self.options)?.matrix)
    }
}

/// A recoverer followed by the 2D→3D network.
pub struct TwoStage<'a> {
    pub recoverer: &'a dyn Recoverer,
    pub regressor: &'a NetworkParams,
}

impl Pipeline for TwoStage<'_> {
    fn label(&self) -> String {
        self.recoverer.label()
    }

    fn representation(&self) -> Representation {
        self.recoverer.representation()
    }

    fn predict_3d(&self, index: usize, input: &DistanceMatrix, mask: &JointMask) -> Result<DistanceMatrix> {
        let recovered = self.recoverer.recover(index, input, mask)?;
        let full = assemble_final(input, &recovered, mask)?;
        symmetrize_and_clamp(&self.regressor.forward(&full)?, input.n())
    }
}

/// End-to-end fine-tuned recovery and regression nets.
pub struct StackedPipeline<'a> {
    pub net: &'a StackedNet,
    pub representation: Representation,
}

impl Pipeline for StackedPipeline<'_> {
    fn label(&self) -> String {
        "stacked".into()
    }

    fn representation(&self) -> Representation {
        self.representation
    }

    fn predict_3d(&self, _: usize, input: &DistanceMatrix, mask: &JointMask) -> Result<DistanceMatrix> {
        use crate::net::Model;
        let raw = self.net.predict(&StackInput { edm: input.clone(), mask: mask.clone() })?;
        symmetrize_and_clamp(&raw, input.n())
    }
}
