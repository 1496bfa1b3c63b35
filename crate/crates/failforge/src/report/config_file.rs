//! TOML configuration ingestion with strict key checking.
//!
//! Resolution precedence is documented defaults, then the config file,
//! then CLI flags. Unknown keys are rejected with a nearest-match
//! suggestion so a typo like `gama` points at `gamma`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EpisodeMode, ObsMode, PolicyProfile, ProfileKind};
use crate::error::{Error, Result};
use crate::ppo::TrainConfig;

/// Fully resolved run configuration, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub profile: PolicyProfile,
}

impl Default for ResolvedConfig {
    fn default() -> Self {
        ResolvedConfig {
            seed: 0,
            train: TrainConfig::default(),
            env: EnvConfig::default(),
            profile: PolicyProfile::default(),
        }
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.env.validate()?;
        self.profile.validate()
    }
}

const TOP_KEYS: &[&str] = &["seed", "train", "env", "profile"];
const TRAIN_KEYS: &[&str] = &[
    "learning_rate",
    "n_steps",
    "batch_size",
    "n_epochs",
    "gamma",
    "lambda",
    "ent_coef",
    "vf_coef",
    "max_grad_norm",
    "clip_eps",
    "total_steps",
    "advantage_normalization",
];
const ENV_KEYS: &[&str] = &["max_horizon", "observation", "episode"];
const PROFILE_KEYS: &[&str] = &[
    "kind",
    "base_noise",
    "camouflage_mult",
    "distractor_lock",
    "speed",
    "grasp_eps",
    "target_eps",
    "grasp_fail_slope",
];

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn unknown_key_error(table: &str, key: &str, known: &[&str]) -> Error {
    let suggestion = known
        .iter()
        .map(|&k| (levenshtein(key, k), k))
        .min()
        .filter(|&(d, _)| d <= 2)
        .map(|(_, k)| format!(" (did you mean `{k}`?)"))
        .unwrap_or_default();
    let path = if table.is_empty() {
        key.to_string()
    } else {
        format!("{table}.{key}")
    };
    Error::config(path, format!("unknown key{suggestion}"))
}

fn check_keys(value: &toml::Value, table: &str, known: &[&str]) -> Result<()> {
    if let Some(t) = value.as_table() {
        for key in t.keys() {
            if !known.contains(&key.as_str()) {
                return Err(unknown_key_error(table, key, known));
            }
        }
    }
    Ok(())
}

/// Parses `multi:K` / `single` episode-mode strings.
pub fn parse_episode_mode(s: &str) -> Result<EpisodeMode> {
    if s == "single" {
        return Ok(EpisodeMode::Single);
    }
    if let Some(k) = s.strip_prefix("multi:") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::config("episode", format!("invalid budget in `{s}`")))?;
        if k < 1 {
            return Err(Error::config("episode", "multi-step budget must be >= 1"));
        }
        return Ok(EpisodeMode::Multi(k));
    }
    Err(Error::config(
        "episode",
        format!("unknown episode mode `{s}` (expected `single` or `multi:K`)"),
    ))
}

pub fn parse_obs_mode(s: &str) -> Result<ObsMode> {
    match s {
        "features" => Ok(ObsMode::Features),
        "raster" => Ok(ObsMode::Raster),
        other => Err(Error::config(
            "observation",
            format!("unknown observation mode `{other}` (expected `features` or `raster`)"),
        )),
    }
}

fn apply_train(cfg: &mut TrainConfig, table: &toml::Value) -> Result<()> {
    check_keys(table, "train", TRAIN_KEYS)?;
    let t = table
        .as_table()
        .ok_or_else(|| Error::config("train", "must be a table"))?;
    for (key, v) in t {
        let num = || {
            v.as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .ok_or_else(|| Error::config(format!("train.{key}"), "must be a number"))
        };
        let int = || {
            v.as_integer()
                .filter(|&i| i >= 0)
                .map(|i| i as usize)
                .ok_or_else(|| Error::config(format!("train.{key}"), "must be a non-negative integer"))
        };
        match key.as_str() {
            "learning_rate" => cfg.learning_rate = num()?,
            "n_steps" => cfg.n_steps = int()?,
            "batch_size" => cfg.batch_size = int()?,
            "n_epochs" => cfg.n_epochs = int()?,
            "gamma" => cfg.gamma = num()?,
            "lambda" => cfg.lambda = num()?,
            "ent_coef" => cfg.ent_coef = num()?,
            "vf_coef" => cfg.vf_coef = num()?,
            "max_grad_norm" => cfg.max_grad_norm = num()?,
            "clip_eps" => cfg.clip_eps = num()?,
            "total_steps" => cfg.total_steps = int()?,
            "advantage_normalization" => {
                cfg.advantage_normalization = v.as_bool().ok_or_else(|| {
                    Error::config("train.advantage_normalization", "must be a boolean")
                })?
            }
            _ => unreachable!("checked above"),
        }
    }
    Ok(())
}

fn apply_env(cfg: &mut EnvConfig, table: &toml::Value) -> Result<()> {
    check_keys(table, "env", ENV_KEYS)?;
    let t = table
        .as_table()
        .ok_or_else(|| Error::config("env", "must be a table"))?;
    for (key, v) in t {
        match key.as_str() {
            "max_horizon" => {
                cfg.max_horizon = v
                    .as_integer()
                    .filter(|&i| i >= 0)
                    .map(|i| i as usize)
                    .ok_or_else(|| Error::config("env.max_horizon", "must be a non-negative integer"))?
            }
            "observation" => {
                let s = v
                    .as_str()
                    .ok_or_else(|| Error::config("env.observation", "must be a string"))?;
                cfg.observation = parse_obs_mode(s)?;
            }
            "episode" => {
                let s = v
                    .as_str()
                    .ok_or_else(|| Error::config("env.episode", "must be a string"))?;
                cfg.episode = parse_episode_mode(s)?;
            }
            _ => unreachable!("checked above"),
        }
    }
    Ok(())
}

fn apply_profile(profile: &mut PolicyProfile, table: &toml::Value) -> Result<()> {
    check_keys(table, "profile", PROFILE_KEYS)?;
    let t = table
        .as_table()
        .ok_or_else(|| Error::config("profile", "must be a table"))?;
    // Apply `kind` first so it re-seeds the preset, then layer overrides.
    if let Some(v) = t.get("kind") {
        let s = v
            .as_str()
            .ok_or_else(|| Error::config("profile.kind", "must be a string"))?;
        *profile = PolicyProfile::preset(s.parse::<ProfileKind>()?);
    }
    for (key, v) in t {
        if key == "kind" {
            continue;
        }
        let num = v
            .as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::config(format!("profile.{key}"), "must be a number"))?;
        match key.as_str() {
            "base_noise" => profile.base_noise = num,
            "camouflage_mult" => profile.camouflage_mult = num,
            "distractor_lock" => profile.distractor_lock = num,
            "speed" => profile.speed = num,
            "grasp_eps" => profile.grasp_eps = num,
            "target_eps" => profile.target_eps = num,
            "grasp_fail_slope" => profile.grasp_fail_slope = num,
            _ => unreachable!("checked above"),
        }
    }
    Ok(())
}

/// Parses and layers a TOML file over the documented defaults. CLI flags
/// are applied by the caller afterward, giving them the last word.
pub fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    apply_config_text(&text)
}

/// The file-layer half of [`load_config`], usable on in-memory text.
pub fn apply_config_text(text: &str) -> Result<ResolvedConfig> {
    let value: toml::Value = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
    check_keys(&value, "", TOP_KEYS)?;
    let mut cfg = ResolvedConfig::default();
    let table = value
        .as_table()
        .ok_or_else(|| Error::config("config", "top level must be a table"))?;
    if let Some(v) = table.get("seed") {
        cfg.seed = v
            .as_integer()
            .filter(|&i| i >= 0)
            .map(|i| i as u64)
            .ok_or_else(|| Error::config("seed", "must be a non-negative integer"))?;
    }
    if let Some(v) = table.get("train") {
        apply_train(&mut cfg.train, v)?;
    }
    if let Some(v) = table.get("env") {
        apply_env(&mut cfg.env, v)?;
    }
    if let Some(v) = table.get("profile") {
        apply_profile(&mut cfg.profile, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
