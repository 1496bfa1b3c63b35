//! Reading a trained adversary back out as failure-mode probabilities.
//!
//! The adversary's softmax action distribution at an observation is the
//! per-mode failure likelihood; its Shannon entropy summarizes how spread
//! out the discovered failures are. The distribution is treated as a
//! ranking signal: agreement with the enumeration oracle is asserted at
//! the ranking level, not on probability magnitudes.

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::dist::{entropy, log_softmax, softmax, validate_distribution};
use crate::nn::snapshot::PolicySnapshot;

pub const PROFILE_FORMAT_VERSION: u32 = 1;

/// One adversary's distribution over perturbation actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureProfile {
    pub format_version: u32,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    pub entropy_nats: f64,
    pub snapshot_digest: String,
    pub observation_digest: String,
}

impl FailureProfile {
    /// Checks normalization and entropy consistency to 1e-9.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.probs.len() {
            return Err(Error::Contract(format!(
                "{} labels for {} probabilities",
                self.labels.len(),
                self.probs.len()
            )));
        }
        validate_distribution(&self.probs)?;
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "probabilities sum to {sum}, expected 1 within 1e-9"
            )));
        }
        let h = entropy(&self.probs)?;
        if (h - self.entropy_nats).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "stored entropy {} differs from recomputed {h}",
                self.entropy_nats
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read profile {}: {e}", path.display())))?;
        let profile: FailureProfile = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("malformed profile {}: {e}", path.display())))?;
        if profile.format_version != PROFILE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "profile format_version {} not supported",
                profile.format_version
            )));
        }
        profile.validate()?;
        Ok(profile)
    }
}

/// Failure probabilities across several policies under test (rows) and
/// perturbation actions (columns). Each row is one adversary's softmax
/// output, so each row sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureMatrix {
    pub format_version: u32,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FailureMatrix {
    pub fn from_profiles(row_labels: Vec<String>, profiles: &[FailureProfile]) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::Contract("failure matrix needs at least one row".into()));
        }
        if row_labels.len() != profiles.len() {
            return Err(Error::Contract("one row label per profile required".into()));
        }
        let col_labels = profiles[0].labels.clone();
        for p in profiles {
            p.validate()?;
            if p.labels != col_labels {
                return Err(Error::Contract("profiles disagree on action labels".into()));
            }
        }
        Ok(FailureMatrix {
            format_version: PROFILE_FORMAT_VERSION,
            row_labels,
            col_labels,
            rows: profiles.iter().map(|p| p.probs.clone()).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Contract("empty failure matrix".into()));
        }
        if self.row_labels.len() != self.rows.len() {
            return Err(Error::Contract("row label count mismatch".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.col_labels.len() {
                return Err(Error::Contract(format!("row {i} length mismatch")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!(
                    "row {i} sums to {sum}, expected 1 within 1e-9"
                )));
            }
        }
        Ok(())
    }

    /// Column-major view: contributions of each row to one action.
    pub fn transposed(&self) -> FailureMatrix {
        let mut rows = vec![vec![0.0; self.rows.len()]; self.col_labels.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                rows[j][i] = v;
            }
        }
        FailureMatrix {
            format_version: self.format_version,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.rows) {
            out.push_str(label);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Softmax of the snapshot's actor logits at one observation.
pub fn failure_distribution(
    snapshot: &PolicySnapshot,
    observation: &Observation,
    labels: &[String],
) -> Result<FailureProfile> {
    let net = snapshot.to_net()?;
    if observation.shape() != net.input_shape() {
        return Err(Error::Contract(format!(
            "observation shape {:?} does not match snapshot input {:?}",
            observation.shape(),
            net.input_shape()
        )));
    }
    if labels.len() != net.n_actions() {
        return Err(Error::Contract(format!(
            "{} labels for {} actions",
            labels.len(),
            net.n_actions()
        )));
    }
    let (logits, _, _) = net.forward(observation.data())?;
    let probs = softmax(&logits)?;
    let log_probs = log_softmax(&logits)?;
    for (p, lp) in probs.iter().zip(&log_probs) {
        debug_assert!((p - lp.exp()).abs() <= 1e-12);
    }
    let entropy_nats = entropy(&probs)?;
    let profile = FailureProfile {
        format_version: PROFILE_FORMAT_VERSION,
        labels: labels.to_vec(),
        probs,
        entropy_nats,
        snapshot_digest: snapshot.digest(),
        observation_digest: observation.digest(),
    };
    profile.validate()?;
    Ok(profile)
}

/// Arithmetic mean of per-observation distributions. A convex combination
/// of distributions, so it stays normalized; entropy is recomputed on the
/// mean.
pub fn mean_profile(
    snapshot: &PolicySnapshot,
    observations: &[Observation],
    labels: &[String],
) -> Result<FailureProfile> {
    if observations.is_empty() {
        return Err(Error::Contract("mean_profile needs at least one observation".into()));
    }
    let mut acc: Option<Vec<f64>> = None;
    let mut obs_digests = String::new();
    for obs in observations {
        let p = failure_distribution(snapshot, obs, labels)?;
        obs_digests.push_str(&p.observation_digest);
        match &mut acc {
            Some(a) => {
                for (ai, pi) in a.iter_mut().zip(&p.probs) {
                    *ai += pi;
                }
            }
            None => acc = Some(p.probs),
        }
    }
    let mut probs = acc.expect("non-empty");
    let n = observations.len() as f64;
    for p in &mut probs {
        *p /= n;
    }
    let entropy_nats = entropy(&probs)?;
    let profile = FailureProfile {
        format_version: PROFILE_FORMAT_VERSION,
        labels: labels.to_vec(),
        probs,
        entropy_nats,
        snapshot_digest: snapshot.digest(),
        observation_digest: crate::digest::hex_digest(obs_digests.as_bytes()),
    };
    profile.validate()?;
    Ok(profile)
}

/// Shannon entropy of the profile in nats.
pub fn profile_entropy(profile: &FailureProfile) -> Result<f64> {
    profile.validate()?;
    entropy(&profile.probs)
}

/// Actions sorted by descending probability; ties break toward the lower
/// action id.
pub fn rank_failure_modes(profile: &FailureProfile) -> Result<Vec<(String, f64)>> {
    profile.validate()?;
    let mut order: Vec<usize> = (0..profile.probs.len()).collect();
    order.sort_by(|&a, &b| {
        profile.probs[b]
            .partial_cmp(&profile.probs[a])
            .expect("finite probabilities")
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .map(|i| (profile.labels[i].clone(), profile.probs[i]))
        .collect())
}
