//! Deterministic seeded 2D tabletop world.
//!
//! The world is a unit-square desk: a colored table, a cube with a nominal
//! and a true pose, a target marker, a gripper, and optionally one
//! distractor cube. The adversary perturbs this world through a discrete
//! action catalog, then a scripted policy under test attempts a
//! pick-and-place rollout. Everything stochastic flows through the world's
//! own [`SeedStream`], so `(seed, config, action sequence)` fully
//! determines every outcome.

pub mod config;
pub mod rollout;

use serde::{Deserialize, Serialize};

use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::rng::SeedStream;

pub use config::{
    catalog_hash, catalog_labels, default_catalog, ActionSpec, EnvConfig, EpisodeMode, ObsMode,
    PolicyProfile, ProfileKind,
};

pub const FEATURE_DIM: usize = 14;
pub const RASTER_SIZE: usize = 32;
pub const RASTER_CHANNELS: usize = 3;

/// Palette for the desk. Gray is the unperturbed default, so every color
/// perturbation is visible in the one-hot encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Gray,
    Red,
    Green,
    Blue,
}

impl Color {
    pub fn one_hot_index(self) -> usize {
        match self {
            Color::Gray => 0,
            Color::Red => 1,
            Color::Green => 2,
            Color::Blue => 3,
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Gray => [0.5, 0.5, 0.5],
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
        }
    }
}

impl std::fmt::Display for Color {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Color::Gray => "gray",
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub pos: [f64; 2],
    pub color: Color,
}

/// Ground-truth tabletop configuration plus its RNG stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub table_color: Color,
    pub cube_color: Color,
    pub cube_true_pos: [f64; 2],
    pub cube_nominal_pos: [f64; 2],
    pub target_pos: [f64; 2],
    pub gripper_pos: [f64; 2],
    pub distractor: Option<Distractor>,
    pub rng: SeedStream,
}

impl WorldState {
    /// Cube displacement magnitude from its nominal pose.
    pub fn displacement(&self) -> f64 {
        dist(self.cube_true_pos, self.cube_nominal_pos)
    }

    /// Content digest over all fields including the RNG state.
    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn clamp_unit(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

/// Success flag, steps consumed, and the adversary's terminal reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub steps: usize,
    pub reward: f64,
}

/// Terminal adversary reward: failure pays 1000, success is penalized
/// inversely to how long the policy took.
pub fn adversary_reward(success: bool, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Contract("steps must be >= 1".into()));
    }
    Ok(if success { -100.0 / steps as f64 } else { 1000.0 })
}

/// Adversary-visible encoding of a [`WorldState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    /// 14-dim layout: table one-hot(4), cube one-hot(4), distractor
    /// flag(1), displacement magnitude(1), cube_true_pos(2), target_pos(2).
    Features(Vec<f64>),
    /// Channel-major `3 x 32 x 32` top-down color grid, values in [0, 1].
    Raster(Vec<f64>),
}

impl Observation {
    pub fn data(&self) -> &[f64] {
        match self {
            Observation::Features(v) => v,
            Observation::Raster(v) => v,
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Observation::Features(v) => Shape::Flat { dim: v.len() },
            Observation::Raster(_) => Shape::Grid {
                c: RASTER_CHANNELS,
                h: RASTER_SIZE,
                w: RASTER_SIZE,
            },
        }
    }

    pub fn digest(&self) -> String {
        crate::digest::f64_digest(self.data())
    }
}

/// Canonical reset: gray table, red cube at its nominal pose, no
/// distractor, RNG stream initialized from the seed.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<(WorldState, Observation)> {
    config.validate()?;
    let state = WorldState {
        table_color: config.palette.table,
        cube_color: config.palette.cube,
        cube_true_pos: config.geometry.cube_nominal,
        cube_nominal_pos: config.geometry.cube_nominal,
        target_pos: config.geometry.target,
        gripper_pos: config.geometry.gripper,
        distractor: None,
        rng: SeedStream::derive(seed, &[0x5245_5345_54]), // "RESET"
    };
    let obs = observe(&state, config.observation);
    Ok((state, obs))
}

/// Applies one catalog action; exactly the cataloged fields change.
/// Displacement and distractor placement draw from the state's RNG stream.
pub fn apply_perturbation(
    state: &WorldState,
    action: usize,
    catalog: &[ActionSpec],
) -> Result<WorldState> {
    let spec = catalog.get(action).ok_or_else(|| {
        Error::Contract(format!(
            "action {action} out of catalog bounds (|A| = {})",
            catalog.len()
        ))
    })?;
    let mut next = state.clone();
    match *spec {
        ActionSpec::NoOp => {}
        ActionSpec::SetTableColor(c) => next.table_color = c,
        ActionSpec::SetCubeColor(c) => next.cube_color = c,
        ActionSpec::DisplaceCube { magnitude } => {
            let theta = next.rng.next_f64() * std::f64::consts::TAU;
            next.cube_true_pos = clamp_unit([
                next.cube_nominal_pos[0] + magnitude * theta.cos(),
                next.cube_nominal_pos[1] + magnitude * theta.sin(),
            ]);
        }
        ActionSpec::AddDistractor { color } => {
            let theta = next.rng.next_f64() * std::f64::consts::TAU;
            let r = 0.08 + 0.04 * next.rng.next_f64();
            next.distractor = Some(Distractor {
                pos: clamp_unit([
                    next.target_pos[0] + r * theta.cos(),
                    next.target_pos[1] + r * theta.sin(),
                ]),
                color,
            });
        }
    }
    Ok(next)
}

/// Encodes the state for the adversary.
pub fn observe(state: &WorldState, mode: ObsMode) -> Observation {
    match mode {
        ObsMode::Features => {
            let mut v = vec![0.0; FEATURE_DIM];
            v[state.table_color.one_hot_index()] = 1.0;
            v[4 + state.cube_color.one_hot_index()] = 1.0;
            v[8] = if state.distractor.is_some() { 1.0 } else { 0.0 };
            v[9] = state.displacement();
            v[10] = state.cube_true_pos[0];
            v[11] = state.cube_true_pos[1];
            v[12] = state.target_pos[0];
            v[13] = state.target_pos[1];
            Observation::Features(v)
        }
        ObsMode::Raster => Observation::Raster(render_raster(state)),
    }
}

fn raster_cell(pos: [f64; 2]) -> (usize, usize) {
    let col = ((pos[0] * RASTER_SIZE as f64) as usize).min(RASTER_SIZE - 1);
    let row = ((pos[1] * RASTER_SIZE as f64) as usize).min(RASTER_SIZE - 1);
    (row, col)
}

fn render_raster(state: &WorldState) -> Vec<f64> {
    let n = RASTER_SIZE * RASTER_SIZE;
    let mut grid = vec![0.0; RASTER_CHANNELS * n];
    let bg = state.table_color.rgb();
    for c in 0..RASTER_CHANNELS {
        for i in 0..n {
            grid[c * n + i] = bg[c];
        }
    }
    let mut paint = |pos: [f64; 2], rgb: [f64; 3]| {
        let (row, col) = raster_cell(pos);
        for (c, &v) in rgb.iter().enumerate() {
            grid[c * n + row * RASTER_SIZE + col] = v;
        }
    };
    paint(state.target_pos, [1.0, 1.0, 1.0]);
    if let Some(d) = state.distractor {
        paint(d.pos, d.color.rgb());
    }
    paint(state.gripper_pos, [0.0, 0.0, 0.0]);
    paint(state.cube_true_pos, state.cube_color.rgb());
    grid
}

/// Adversary-facing environment: perturb-then-rollout episodes.
///
/// In single-step mode every `step` triggers a rollout of the policy under
/// test and terminates the episode. In multi-step mode with budget `K`,
/// the first `K - 1` perturbations return reward 0 and the `K`-th triggers
/// the rollout.
#[derive(Debug, Clone)]
pub struct AdversaryEnv {
    config: EnvConfig,
    profile: PolicyProfile,
    state: WorldState,
    steps_in_episode: usize,
    episode_index: u64,
    seed: u64,
}

impl AdversaryEnv {
    pub fn new(config: EnvConfig, profile: PolicyProfile, seed: u64) -> Result<Self> {
        config.validate()?;
        profile.validate()?;
        let (state, _) = reset(&config, derived_episode_seed(seed, 0))?;
        Ok(AdversaryEnv {
            config,
            profile,
            state,
            steps_in_episode: 0,
            episode_index: 0,
            seed,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn action_count(&self) -> usize {
        self.config.catalog.len()
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, self.config.observation)
    }

    /// Starts a fresh episode with an RNG stream split off the base seed.
    pub fn reset(&mut self) -> Result<Observation> {
        self.episode_index += 1;
        let (state, obs) = reset(
            &self.config,
            derived_episode_seed(self.seed, self.episode_index),
        )?;
        self.state = state;
        self.steps_in_episode = 0;
        Ok(obs)
    }

    /// Applies one perturbation; returns `(observation', reward, done)`.
    pub fn step(&mut self, action: usize) -> Result<(Observation, f64, bool)> {
        self.state = apply_perturbation(&self.state, action, &self.config.catalog)?;
        self.steps_in_episode += 1;
        let budget = match self.config.episode {
            EpisodeMode::Single => 1,
            EpisodeMode::Multi(k) => k,
        };
        let obs = self.observe();
        if self.steps_in_episode >= budget {
            let outcome = rollout::rollout_policy_under_test(
                &mut self.state,
                &self.profile,
                self.config.max_horizon,
            )?;
            Ok((obs, outcome.reward, true))
        } else {
            Ok((obs, 0.0, false))
        }
    }
}

fn derived_episode_seed(seed: u64, episode: u64) -> u64 {
    SeedStream::derive(seed, &[0x45_50, episode]).state()
}

/// One standalone perturb-then-rollout episode; the oracle's unit of work.
pub fn run_episode(
    config: &EnvConfig,
    profile: &PolicyProfile,
    action: usize,
    seed: u64,
) -> Result<EpisodeOutcome> {
    let (state, _) = reset(config, seed)?;
    let mut state = apply_perturbation(&state, action, &config.catalog)?;
    rollout::rollout_policy_under_test(&mut state, profile, config.max_horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        let cfg = EnvConfig::default();
        let (a, _) = reset(&cfg, 42).unwrap();
        let (b, _) = reset(&cfg, 42).unwrap();
        assert_eq!(a.digest(), b.digest());
        let (c, _) = reset(&cfg, 43).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn default_reset_feature_layout() {
        let cfg = EnvConfig::default();
        let (_, obs) = reset(&cfg, 0).unwrap();
        let Observation::Features(v) = obs else {
            panic!("expected features")
        };
        assert_eq!(v.len(), FEATURE_DIM);
        assert_eq!(v[Color::Gray.one_hot_index()], 1.0); // table gray
        assert_eq!(v[4 + Color::Red.one_hot_index()], 1.0); // cube red
        assert_eq!(v[8], 0.0); // no distractor
        assert_eq!(v[9], 0.0); // no displacement
        assert_eq!(&v[10..12], &[0.2, 0.5]);
        assert_eq!(&v[12..14], &[0.8, 0.5]);
    }

    #[test]
    fn invalid_target_is_config_error() {
        let mut cfg = EnvConfig::default();
        cfg.geometry.target = [1.4, 0.5];
        let err = reset(&cfg, 0).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert!(err.to_string().contains("geometry.target"), "{err}");
    }

    #[test]
    fn noop_leaves_state_and_rng_untouched() {
        let cfg = EnvConfig::default();
        let (state, _) = reset(&cfg, 5).unwrap();
        let next = apply_perturbation(&state, 0, &cfg.catalog).unwrap();
        assert_eq!(state, next);
    }

    #[test]
    fn table_recolor_changes_only_table_color() {
        let cfg = EnvConfig::default();
        let (state, _) = reset(&cfg, 5).unwrap();
        let next = apply_perturbation(&state, 1, &cfg.catalog).unwrap();
        assert_eq!(next.table_color, Color::Red);
        assert_eq!(next.cube_color, state.cube_color);
        assert_eq!(next.cube_true_pos, state.cube_true_pos);
        assert_eq!(next.distractor, state.distractor);
        assert_eq!(next.rng, state.rng);
    }

    #[test]
    fn displacement_has_exact_magnitude() {
        let cfg = EnvConfig::default();
        let (state, _) = reset(&cfg, 5).unwrap();
        let next = apply_perturbation(&state, 7, &cfg.catalog).unwrap();
        assert!((next.displacement() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_action_is_contract_error() {
        let cfg = EnvConfig::default();
        let (state, _) = reset(&cfg, 5).unwrap();
        assert!(matches!(
            apply_perturbation(&state, 9, &cfg.catalog),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn feature_obs_has_two_one_hot_blocks() {
        let cfg = EnvConfig::default();
        let (state, _) = reset(&cfg, 1).unwrap();
        let Observation::Features(v) = observe(&state, ObsMode::Features) else {
            panic!()
        };
        assert_eq!(v[0..4].iter().sum::<f64>(), 1.0);
        assert_eq!(v[4..8].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn raster_cube_cell_carries_full_color_channel() {
        let cfg = EnvConfig::default();
        let (state, _) = reset(&cfg, 1).unwrap();
        let Observation::Raster(grid) = observe(&state, ObsMode::Raster) else {
            panic!()
        };
        let n = RASTER_SIZE * RASTER_SIZE;
        let (row, col) = raster_cell(state.cube_true_pos);
        // Red cube: channel 0 at 1.0.
        assert_eq!(grid[row * RASTER_SIZE + col], 1.0);
        assert!(grid.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(grid.len(), RASTER_CHANNELS * n);
    }

    #[test]
    fn displaced_cube_reflected_in_features() {
        let cfg = EnvConfig::default();
        let (state, _) = reset(&cfg, 5).unwrap();
        let next = apply_perturbation(&state, 7, &cfg.catalog).unwrap();
        let Observation::Features(v) = observe(&next, ObsMode::Features) else {
            panic!()
        };
        assert!((v[9] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn reward_values() {
        assert_eq!(adversary_reward(false, 42).unwrap(), 1000.0);
        assert_eq!(adversary_reward(true, 100).unwrap(), -1.0);
        assert_eq!(adversary_reward(true, 50).unwrap(), -2.0);
        assert_eq!(adversary_reward(true, 1).unwrap(), -100.0);
        assert!(adversary_reward(true, 0).is_err());
    }

    #[test]
    fn single_step_mode_terminates_immediately() {
        let cfg = EnvConfig::default();
        let mut env = AdversaryEnv::new(cfg, PolicyProfile::preset(ProfileKind::Robust), 3).unwrap();
        let (_, _, done) = env.step(0).unwrap();
        assert!(done);
    }

    #[test]
    fn multi_step_mode_defers_rollout_to_budget() {
        let mut cfg = EnvConfig::default();
        cfg.episode = EpisodeMode::Multi(3);
        let mut env = AdversaryEnv::new(cfg, PolicyProfile::preset(ProfileKind::Robust), 3).unwrap();
        let mut rewards = Vec::new();
        let mut dones = Vec::new();
        for a in [1, 5, 0] {
            let (_, r, d) = env.step(a).unwrap();
            rewards.push(r);
            dones.push(d);
        }
        assert_eq!(&dones, &[false, false, true]);
        assert_eq!(rewards[0], 0.0);
        assert_eq!(rewards[1], 0.0);
        assert!(rewards[2] == 1000.0 || rewards[2] < 0.0);
    }

    #[test]
    fn episode_outcomes_are_reproducible() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::VisionBrittle);
        for action in 0..9 {
            let a = run_episode(&cfg, &profile, action, 99).unwrap();
            let b = run_episode(&cfg, &profile, action, 99).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rewards_obey_dichotomy() {
        let cfg = EnvConfig::default();
        for kind in [
            ProfileKind::VisionBrittle,
            ProfileKind::ProprioBlind,
            ProfileKind::LanguageGrounded,
            ProfileKind::Robust,
        ] {
            let profile = PolicyProfile::preset(kind);
            for action in 0..9 {
                for seed in 0..20 {
                    let o = run_episode(&cfg, &profile, action, seed).unwrap();
                    if o.success {
                        assert!((-100.0..=-1.0).contains(&o.reward), "{:?}", o);
                        assert!(o.steps >= 1 && o.steps <= 100);
                    } else {
                        assert_eq!(o.reward, 1000.0);
                    }
                }
            }
        }
    }
}
