//! Environment and policy-profile configuration with documented defaults.

use serde::{Deserialize, Serialize};

use super::Color;
use crate::digest::json_digest;
use crate::error::{Error, Result};

/// One entry of the perturbation-action catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpec {
    NoOp,
    SetTableColor(Color),
    SetCubeColor(Color),
    DisplaceCube { magnitude: f64 },
    AddDistractor { color: Color },
}

impl ActionSpec {
    pub fn label(&self) -> String {
        match self {
            ActionSpec::NoOp => "no_op".into(),
            ActionSpec::SetTableColor(c) => format!("table_{c}"),
            ActionSpec::SetCubeColor(c) => format!("cube_{c}"),
            ActionSpec::DisplaceCube { .. } => "displace_cube".into(),
            ActionSpec::AddDistractor { color } => format!("{color}_distractor"),
        }
    }
}

/// The default 9-action catalog, matching the actor head width.
pub fn default_catalog() -> Vec<ActionSpec> {
    vec![
        ActionSpec::NoOp,
        ActionSpec::SetTableColor(Color::Red),
        ActionSpec::SetTableColor(Color::Green),
        ActionSpec::SetTableColor(Color::Blue),
        ActionSpec::SetCubeColor(Color::Red),
        ActionSpec::SetCubeColor(Color::Green),
        ActionSpec::SetCubeColor(Color::Blue),
        ActionSpec::DisplaceCube { magnitude: 0.15 },
        ActionSpec::AddDistractor { color: Color::Red },
    ]
}

pub fn catalog_labels(catalog: &[ActionSpec]) -> Vec<String> {
    catalog.iter().map(|a| a.label()).collect()
}

/// Content hash of the catalog, embedded in snapshots for provenance.
pub fn catalog_hash(catalog: &[ActionSpec]) -> String {
    json_digest(&catalog)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub cube_nominal: [f64; 2],
    pub target: [f64; 2],
    pub gripper: [f64; 2],
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            cube_nominal: [0.2, 0.5],
            target: [0.8, 0.5],
            gripper: [0.1, 0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Palette {
    pub table: Color,
    pub cube: Color,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            table: Color::Gray,
            cube: Color::Red,
        }
    }
}

/// Single perturbation per episode, or a budget of `K` perturbations
/// before the rollout fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    Single,
    Multi(usize),
}

impl Default for EpisodeMode {
    fn default() -> Self {
        EpisodeMode::Single
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObsMode {
    #[default]
    Features,
    Raster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub geometry: Geometry,
    pub palette: Palette,
    pub max_horizon: usize,
    pub episode: EpisodeMode,
    pub observation: ObsMode,
    pub catalog: Vec<ActionSpec>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            geometry: Geometry::default(),
            palette: Palette::default(),
            max_horizon: 100,
            episode: EpisodeMode::Single,
            observation: ObsMode::Features,
            catalog: default_catalog(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |p: [f64; 2]| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
        if !in_unit(self.geometry.cube_nominal) {
            return Err(Error::config("geometry.cube_nominal", "must lie in [0,1]^2"));
        }
        if !in_unit(self.geometry.target) {
            return Err(Error::config("geometry.target", "must lie in [0,1]^2"));
        }
        if !in_unit(self.geometry.gripper) {
            return Err(Error::config("geometry.gripper", "must lie in [0,1]^2"));
        }
        if self.max_horizon < 1 {
            return Err(Error::config("max_horizon", "must be >= 1"));
        }
        if let EpisodeMode::Multi(k) = self.episode {
            if k < 1 {
                return Err(Error::config("episode", "multi-step budget must be >= 1"));
            }
        }
        if self.catalog.is_empty() {
            return Err(Error::config("catalog", "must contain at least one action"));
        }
        for (i, spec) in self.catalog.iter().enumerate() {
            if let ActionSpec::DisplaceCube { magnitude } = spec {
                if !(0.0..=0.5).contains(magnitude) {
                    return Err(Error::config(
                        format!("catalog[{i}].magnitude"),
                        "displacement must lie in [0, 0.5]",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The four scripted policies under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Vision-only: camouflage and distractors corrupt perception.
    VisionBrittle,
    /// Proprioception-only: always perceives the cube at its nominal pose.
    ProprioBlind,
    /// Follows a "reddest object" grounding rule.
    LanguageGrounded,
    /// Clean perception; the no-failure baseline.
    Robust,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vision_brittle" => Ok(ProfileKind::VisionBrittle),
            "proprio_blind" => Ok(ProfileKind::ProprioBlind),
            "language_grounded" => Ok(ProfileKind::LanguageGrounded),
            "robust" => Ok(ProfileKind::Robust),
            other => Err(Error::config(
                "profile.kind",
                format!(
                    "unknown profile `{other}` (expected vision_brittle, proprio_blind, \
                     language_grounded, or robust)"
                ),
            )),
        }
    }
}

impl std::fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProfileKind::VisionBrittle => "vision_brittle",
            ProfileKind::ProprioBlind => "proprio_blind",
            ProfileKind::LanguageGrounded => "language_grounded",
            ProfileKind::Robust => "robust",
        };
        f.write_str(s)
    }
}

/// Perception and controller parameters of a policy under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyProfile {
    pub kind: ProfileKind,
    /// Base perception noise sigma_0 (table units, per axis).
    pub base_noise: f64,
    /// Multiplier on the persistent perception bias when the table color
    /// matches the cube color.
    pub camouflage_mult: f64,
    /// Probability q that a color-matching distractor hijacks perception
    /// for the whole episode (vision profiles).
    pub distractor_lock: f64,
    /// Gripper speed per controller step.
    pub speed: f64,
    /// Grasp attempt radius.
    pub grasp_eps: f64,
    /// Task-success radius around the target.
    pub target_eps: f64,
    /// Grasp success probability falls as `1 - slope * alignment_error`.
    pub grasp_fail_slope: f64,
}

impl Default for PolicyProfile {
    fn default() -> Self {
        PolicyProfile::preset(ProfileKind::VisionBrittle)
    }
}

impl PolicyProfile {
    pub fn preset(kind: ProfileKind) -> Self {
        let base = PolicyProfile {
            kind,
            base_noise: 0.01,
            camouflage_mult: 8.0,
            distractor_lock: 0.85,
            speed: 0.05,
            grasp_eps: 0.05,
            target_eps: 0.05,
            grasp_fail_slope: 20.0,
        };
        match kind {
            ProfileKind::VisionBrittle => base,
            ProfileKind::ProprioBlind => PolicyProfile {
                distractor_lock: 0.0,
                camouflage_mult: 1.0,
                ..base
            },
            ProfileKind::LanguageGrounded => PolicyProfile {
                distractor_lock: 0.0,
                ..base
            },
            ProfileKind::Robust => PolicyProfile {
                camouflage_mult: 1.0,
                distractor_lock: 0.0,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.distractor_lock) {
            return Err(Error::config("profile.distractor_lock", "must lie in [0,1]"));
        }
        if self.base_noise < 0.0 {
            return Err(Error::config("profile.base_noise", "must be >= 0"));
        }
        if self.speed <= 0.0 {
            return Err(Error::config("profile.speed", "must be > 0"));
        }
        if self.grasp_eps <= 0.0 || self.target_eps <= 0.0 {
            return Err(Error::config("profile", "grasp_eps and target_eps must be > 0"));
        }
        if self.camouflage_mult < 1.0 {
            return Err(Error::config("profile.camouflage_mult", "must be >= 1"));
        }
        if self.grasp_fail_slope < 0.0 {
            return Err(Error::config("profile.grasp_fail_slope", "must be >= 0"));
        }
        Ok(())
    }
}
