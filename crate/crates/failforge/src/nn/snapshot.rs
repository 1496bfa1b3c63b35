//! Versioned serialized adversary parameters.
//!
//! A snapshot is a JSON document holding the architecture descriptor and
//! the flat 64-bit parameter arrays, in the order documented on
//! [`ActorCriticNet::to_flat`]: extractor layers (weights row-major, then
//! bias), actor head, critic head. Provenance fields tie the snapshot to
//! the action catalog and training configuration that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActorCriticNet, LayerSpec, Network, Shape};
use crate::digest::hex_digest;
use crate::error::{Error, Result};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input: Shape,
    pub extractor_layers: Vec<LayerSpec>,
    /// Layers of the separate critic tower; empty when the critic shares
    /// the actor's extractor.
    #[serde(default)]
    pub critic_extractor_layers: Vec<LayerSpec>,
    pub feature_dim: usize,
    pub action_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub format_version: u32,
    pub architecture: ArchDescriptor,
    pub extractor_params: Vec<f64>,
    #[serde(default)]
    pub critic_extractor_params: Vec<f64>,
    pub actor_w: Vec<f64>,
    pub actor_b: Vec<f64>,
    pub critic_w: Vec<f64>,
    pub critic_b: Vec<f64>,
    pub action_catalog_hash: String,
    pub training_config_digest: String,
    pub seed: u64,
}

impl PolicySnapshot {
    pub fn from_net(
        net: &ActorCriticNet,
        action_catalog_hash: String,
        training_config_digest: String,
        seed: u64,
    ) -> Self {
        let mut extractor_params = Vec::with_capacity(net.extractor.param_count());
        net.extractor.append_flat(&mut extractor_params);
        let mut critic_extractor_params = Vec::new();
        if let Some(tower) = &net.critic_extractor {
            tower.append_flat(&mut critic_extractor_params);
        }
        PolicySnapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            architecture: ArchDescriptor {
                input: net.input_shape(),
                extractor_layers: net.extractor.layers.iter().map(|l| l.spec).collect(),
                critic_extractor_layers: net
                    .critic_extractor
                    .as_ref()
                    .map(|t| t.layers.iter().map(|l| l.spec).collect())
                    .unwrap_or_default(),
                feature_dim: net.feature_dim(),
                action_count: net.n_actions(),
            },
            extractor_params,
            critic_extractor_params,
            actor_w: net.actor.w.clone(),
            actor_b: net.actor.b.clone(),
            critic_w: net.critic.w.clone(),
            critic_b: net.critic.b.clone(),
            action_catalog_hash,
            training_config_digest,
            seed,
        }
    }

    /// Reconstructs the network; fails on version or shape mismatch.
    pub fn to_net(&self) -> Result<ActorCriticNet> {
        if self.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "snapshot format_version {} not supported (expected {SNAPSHOT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut extractor = Network::new(self.architecture.input, &self.architecture.extractor_layers)?;
        let used = extractor.load_flat(&self.extractor_params)?;
        if used != self.extractor_params.len() {
            return Err(Error::Format("extractor parameter count mismatch".into()));
        }
        let critic_extractor = if self.architecture.critic_extractor_layers.is_empty() {
            if !self.critic_extractor_params.is_empty() {
                return Err(Error::Format(
                    "critic tower parameters present without layer specs".into(),
                ));
            }
            None
        } else {
            let mut tower = Network::new(
                self.architecture.input,
                &self.architecture.critic_extractor_layers,
            )?;
            let used = tower.load_flat(&self.critic_extractor_params)?;
            if used != self.critic_extractor_params.len() {
                return Err(Error::Format("critic tower parameter count mismatch".into()));
            }
            Some(tower)
        };
        let mut net = ActorCriticNet::from_towers(
            extractor,
            critic_extractor,
            self.architecture.action_count,
        )?;
        if net.actor.w.len() != self.actor_w.len() || net.critic.w.len() != self.critic_w.len() {
            return Err(Error::Format("head parameter count mismatch".into()));
        }
        net.actor.w.copy_from_slice(&self.actor_w);
        net.actor.b.copy_from_slice(&self.actor_b);
        net.critic.w.copy_from_slice(&self.critic_w);
        net.critic.b.copy_from_slice(&self.critic_b);
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Format(format!("cannot read snapshot {}: {e}", path.display()))
        })?;
        let snap: PolicySnapshot = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("malformed snapshot {}: {e}", path.display())))?;
        if snap.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "snapshot format_version {} not supported",
                snap.format_version
            )));
        }
        Ok(snap)
    }

    /// Content digest of the snapshot's canonical JSON form.
    pub fn digest(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("serializable").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn snapshot_roundtrip_is_exact() {
        let mut rng = SeedStream::new(7);
        let net = ActorCriticNet::new_mlp(14, 9, &mut rng).unwrap();
        let snap = PolicySnapshot::from_net(&net, "cat".into(), "cfg".into(), 7);
        let json = snap.to_json().unwrap();
        let back: PolicySnapshot = serde_json::from_str(&json).unwrap();
        let net2 = back.to_net().unwrap();
        assert_eq!(net, net2);
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let mut rng = SeedStream::new(7);
        let net = ActorCriticNet::new_mlp(4, 3, &mut rng).unwrap();
        let mut snap = PolicySnapshot::from_net(&net, "c".into(), "t".into(), 0);
        snap.format_version = 99;
        assert!(matches!(snap.to_net(), Err(Error::Format(_))));
    }

    #[test]
    fn digest_changes_with_params() {
        let mut rng = SeedStream::new(7);
        let net = ActorCriticNet::new_mlp(4, 3, &mut rng).unwrap();
        let a = PolicySnapshot::from_net(&net, "c".into(), "t".into(), 0);
        let mut b = a.clone();
        b.actor_b[0] += 1.0;
        assert_ne!(a.digest(), b.digest());
    }
}
