use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fconv::{NetConfig, NetworkParams, LAYER_NAMES};
use super::stack::StackedNet;
use crate::error::{Error, Result};
use crate::represent::Representation;

pub const MODEL_FORMAT: &str = "edmrec-fconv";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// What a saved network was trained to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    /// Occluded 2D EDM → complete 2D EDM.
    Recover2d,
    /// Complete 2D EDM → 3D EDM.
    Regress3d,
    /// Both of the above, fine-tuned end to end.
    Stack,
}

impl ModelRole {
    fn net_count(self) -> usize {
        match self {
            ModelRole::Stack => 2,
            _ => 1,
        }
    }
}

/// A saved model: one network, or two for [`ModelRole::Stack`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub role: ModelRole,
    /// Occlusion representation the recovery stage was trained on.
    pub representation: Option<Representation>,
    pub nets: Vec<NetworkParams>,
}

#[derive(Serialize, Deserialize)]
struct RawFile {
    format: String,
    format_version: u32,
    library_version: String,
    role: ModelRole,
    representation: Option<Representation>,
    nets: Vec<RawNet>,
}

#[derive(Serialize, Deserialize)]
struct RawNet {
    config: NetConfig,
    layers: Vec<RawLayer>,
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    name: String,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ModelFile {
    pub fn single(role: ModelRole, representation: Option<Representation>, net: NetworkParams) -> Self {
        ModelFile { role, representation, nets: vec![net] }
    }

    pub fn stacked(representation: Option<Representation>, net: StackedNet) -> Self {
        ModelFile { role: ModelRole::Stack, representation, nets: vec![net.recover, net.regress] }
    }

    /// The only network of a single-net file with the expected role.
    pub fn into_net(self, role: ModelRole) -> Result<NetworkParams> {
        if self.role != role {
            return Err(Error::Format(format!("expected a {role:?} model, found {:?}", self.role)));
        }
        Ok(self.nets.into_iter().next().expect("validated on load"))
    }

    pub fn into_stacked(self) -> Result<StackedNet> {
        if self.role != ModelRole::Stack {
            return Err(Error::Format(format!("expected a stacked model, found {:?}", self.role)));
        }
        let mut it = self.nets.into_iter();
        StackedNet::new(it.next().unwrap(), it.next().unwrap())
    }

    pub fn to_json(&self) -> Result<String> {
        let nets = self
            .nets
            .iter()
            .map(|p| RawNet {
                config: *p.config(),
                layers: p
                    .layer_tensors()
                    .into_iter()
                    .map(|(name, w, b)| RawLayer { name: name.into(), weights: w.to_vec(), bias: b.to_vec() })
                    .collect(),
            })
            .collect();
        let raw = RawFile {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            library_version: crate::VERSION.into(),
            role: self.role,
            representation: self.representation,
            nets,
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(text)?;
        if raw.format != MODEL_FORMAT {
            return Err(Error::Format(format!("expected a '{MODEL_FORMAT}' file, found '{}'", raw.format)));
        }
        if raw.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} (written by {}) is not supported; this build reads version {}",
                raw.format_version, raw.library_version, MODEL_FORMAT_VERSION
            )));
        }
        if raw.nets.len() != raw.role.net_count() {
            return Err(Error::Format(format!("{:?} model must hold {} network(s)", raw.role, raw.role.net_count())));
        }
        let mut nets = Vec::with_capacity(raw.nets.len());
        for net in raw.nets {
            let names: Vec<&str> = net.layers.iter().map(|l| l.name.as_str()).collect();
            if names != LAYER_NAMES {
                return Err(Error::Format(format!("unexpected layer list {names:?}")));
            }
            let data: Vec<f64> = net.layers.into_iter().flat_map(|l| l.weights.into_iter().chain(l.bias)).collect();
            let params = NetworkParams::from_parts(net.config, data).map_err(|e| Error::Format(e.to_string()))?;
            // the flat length can match while a single layer is off
            let fresh = super::fconv::net_init(net.config, 0)?;
            let sizes_ok = fresh
                .layer_tensors()
                .iter()
                .zip(params.layer_tensors())
                .all(|(a, b)| a.1.len() == b.1.len() && a.2.len() == b.2.len());
            if !sizes_ok {
                return Err(Error::Format("layer tensor sizes do not match the config".into()));
            }
            nets.push(params);
        }
        Ok(ModelFile { role: raw.role, representation: raw.representation, nets })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::net_init;

    #[test]
    fn round_trip_is_exact() {
        let p = net_init(NetConfig::with_channels(3), 9).unwrap();
        let f = ModelFile::single(ModelRole::Recover2d, Some(Representation::Average), p.clone());
        let back = ModelFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.into_net(ModelRole::Recover2d).unwrap(), p);
    }

    #[test]
    fn wrong_role_or_version_is_rejected() {
        let p = net_init(NetConfig::with_channels(2), 1).unwrap();
        let text = ModelFile::single(ModelRole::Regress3d, None, p).to_json().unwrap();
        let f = ModelFile::from_json(&text).unwrap();
        assert!(f.clone().into_net(ModelRole::Recover2d).is_err());
        assert!(f.into_stacked().is_err());
        let bumped = text.replace("\"format_version\":1", "\"format_version\":2");
        assert!(matches!(ModelFile::from_json(&bumped), Err(Error::Format(_))));
    }

    #[test]
    fn stacked_round_trip() {
        let cfg = NetConfig::with_channels(2);
        let s = StackedNet::new(net_init(cfg, 1).unwrap(), net_init(cfg, 2).unwrap()).unwrap();
        let text = ModelFile::stacked(Some(Representation::Zero), s.clone()).to_json().unwrap();
        assert_eq!(ModelFile::from_json(&text).unwrap().into_stacked().unwrap(), s);
    }
}
