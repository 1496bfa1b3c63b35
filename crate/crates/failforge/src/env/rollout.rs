//! Scripted pick-and-place rollout of the policy under test.
//!
//! The controller is the same for every profile: perceive the object,
//! move toward the perceived position, grasp when close, carry to the
//! target. What differs between profiles is the perception model, and
//! that is where failures come from:
//!
//! - `vision_brittle` / `robust`: perceive the cube's true position with a
//!   persistent per-episode calibration bias plus per-step jitter. When
//!   the table color matches the cube color the bias is inflated by the
//!   camouflage multiplier. A color-matching distractor hijacks the whole
//!   episode with probability `distractor_lock`.
//! - `proprio_blind`: perceives the cube at its nominal pose, exactly.
//!   Displacing the cube is invisible to it.
//! - `language_grounded`: grounds "the red cube" to the reddest object on
//!   the desk. Recoloring the cube removes its grounding; adding a red
//!   distractor makes the grounding ambiguous.

use super::{adversary_reward, dist, EpisodeOutcome, PolicyProfile, ProfileKind, WorldState};
use crate::env::Color;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Which physical object the controller ends up pursuing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pursuit {
    Cube,
    Distractor,
    /// Grounding failed: the controller has nothing to move toward.
    Nothing,
}

/// Runs the scripted controller to termination. Success iff the cube ends
/// within `target_eps` of the target before `max_horizon` steps; on
/// failure `steps == max_horizon`.
pub fn rollout_policy_under_test(
    state: &mut WorldState,
    profile: &PolicyProfile,
    max_horizon: usize,
) -> Result<EpisodeOutcome> {
    if max_horizon < 1 {
        return Err(Error::Contract("max_horizon must be >= 1".into()));
    }
    profile.validate()?;

    let cube_start = state.cube_true_pos;
    let nominal = state.cube_nominal_pos;
    let target = state.target_pos;
    let table = state.table_color;
    let cube_color = state.cube_color;
    let distractor = state.distractor;
    let mut gripper = state.gripper_pos;
    let rng = &mut state.rng;

    let pursuit = choose_pursuit(cube_color, distractor.map(|d| d.color), profile, rng);
    let mut object_pos = match pursuit {
        Pursuit::Cube | Pursuit::Nothing => cube_start,
        Pursuit::Distractor => distractor.expect("pursuit implies distractor").pos,
    };

    // Persistent per-episode calibration bias; camouflage inflates it.
    let camouflaged = pursuit == Pursuit::Cube && table == cube_color;
    let bias_sigma = match profile.kind {
        ProfileKind::ProprioBlind => 0.0,
        _ => {
            profile.base_noise
                * if camouflaged {
                    profile.camouflage_mult
                } else {
                    1.0
                }
        }
    };
    let bias = [rng.next_normal() * bias_sigma, rng.next_normal() * bias_sigma];

    let mut grasped = false;
    let mut cube_pos = cube_start;
    for step in 1..=max_horizon {
        if pursuit == Pursuit::Nothing {
            continue; // nothing to ground; burn the horizon
        }
        let perceived = match profile.kind {
            ProfileKind::ProprioBlind => nominal,
            _ => {
                let jitter = profile.base_noise;
                [
                    object_pos[0] + bias[0] + rng.next_normal() * jitter,
                    object_pos[1] + bias[1] + rng.next_normal() * jitter,
                ]
            }
        };
        if !grasped {
            gripper = advance(gripper, perceived, profile.speed);
            if dist(gripper, perceived) <= profile.grasp_eps {
                let align_err = dist(gripper, object_pos);
                let p = (1.0 - profile.grasp_fail_slope * align_err).clamp(0.0, 1.0);
                if rng.next_f64() < p {
                    grasped = true;
                }
            }
        } else {
            gripper = advance(gripper, target, profile.speed);
            object_pos = gripper;
            if pursuit == Pursuit::Cube {
                cube_pos = gripper;
            }
        }
        if dist(cube_pos, target) <= profile.target_eps {
            state.gripper_pos = gripper;
            state.cube_true_pos = cube_pos;
            let reward = adversary_reward(true, step)?;
            return Ok(EpisodeOutcome {
                success: true,
                steps: step,
                reward,
            });
        }
    }
    state.gripper_pos = gripper;
    state.cube_true_pos = cube_pos;
    let reward = adversary_reward(false, max_horizon)?;
    Ok(EpisodeOutcome {
        success: false,
        steps: max_horizon,
        reward,
    })
}

// Takes destructured fields so the caller can hold a mutable borrow of
// state.rng at the same time.
fn choose_pursuit(
    cube_color: Color,
    distractor_color: Option<Color>,
    profile: &PolicyProfile,
    rng: &mut SeedStream,
) -> Pursuit {
    match profile.kind {
        ProfileKind::ProprioBlind => Pursuit::Cube,
        ProfileKind::VisionBrittle | ProfileKind::Robust => {
            let matching = distractor_color.map(|c| c == cube_color).unwrap_or(false);
            if matching && rng.next_f64() < profile.distractor_lock {
                Pursuit::Distractor
            } else {
                Pursuit::Cube
            }
        }
        ProfileKind::LanguageGrounded => {
            let cube_red = cube_color == Color::Red;
            let distractor_red = distractor_color.map(|c| c == Color::Red).unwrap_or(false);
            match (cube_red, distractor_red) {
                (true, false) => Pursuit::Cube,
                (false, true) => Pursuit::Distractor,
                (true, true) => {
                    if rng.next_f64() < 0.5 {
                        Pursuit::Distractor
                    } else {
                        Pursuit::Cube
                    }
                }
                (false, false) => Pursuit::Nothing,
            }
        }
    }
}

fn advance(from: [f64; 2], to: [f64; 2], speed: f64) -> [f64; 2] {
    let d = dist(from, to);
    if d <= speed {
        return [to[0].clamp(0.0, 1.0), to[1].clamp(0.0, 1.0)];
    }
    let s = speed / d;
    [
        (from[0] + (to[0] - from[0]) * s).clamp(0.0, 1.0),
        (from[1] + (to[1] - from[1]) * s).clamp(0.0, 1.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{apply_perturbation, reset, EnvConfig};

    fn outcome(
        cfg: &EnvConfig,
        profile: &PolicyProfile,
        action: Option<usize>,
        seed: u64,
    ) -> EpisodeOutcome {
        let (state, _) = reset(cfg, seed).unwrap();
        let mut state = match action {
            Some(a) => apply_perturbation(&state, a, &cfg.catalog).unwrap(),
            None => state,
        };
        rollout_policy_under_test(&mut state, profile, cfg.max_horizon).unwrap()
    }

    #[test]
    fn robust_profile_succeeds_quickly_at_pinned_seed() {
        // Simulation oracle value recorded at this pinned seed.
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::Robust);
        let o = outcome(&cfg, &profile, None, 7);
        assert!(o.success, "{o:?}");
        assert!(o.steps <= 40, "{o:?}");
    }

    #[test]
    fn camouflage_breaks_vision_brittle() {
        // Monte Carlo oracle: table recolored red to match the red cube.
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::VisionBrittle);
        // True rate is about 0.74 at the default x8 multiplier; 65 leaves
        // roughly 2 sigma of sampling slack.
        let failures = (0..100)
            .filter(|&seed| !outcome(&cfg, &profile, Some(1), seed).success)
            .count();
        assert!(failures >= 65, "failure rate {}/100", failures);
    }

    #[test]
    fn proprio_blind_cannot_reach_displaced_cube() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::ProprioBlind);
        for seed in 0..50 {
            let o = outcome(&cfg, &profile, Some(7), seed);
            assert!(!o.success, "seed {seed}: {o:?}");
            assert_eq!(o.steps, cfg.max_horizon);
        }
    }

    #[test]
    fn robust_profile_baseline_failure_rate() {
        // Regression bound frozen after tuning: <= 5% failures under the
        // no-op action over 1000 seeds.
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::Robust);
        let failures = (0..1000)
            .filter(|&seed| !outcome(&cfg, &profile, Some(0), seed).success)
            .count();
        assert!(failures <= 50, "failure rate {}/1000", failures);
    }

    #[test]
    fn red_distractor_hijacks_vision_brittle() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::VisionBrittle);
        let failures = (0..200)
            .filter(|&seed| !outcome(&cfg, &profile, Some(8), seed).success)
            .count();
        // Lock probability is 0.85; allow sampling slack.
        assert!((150..=190).contains(&failures), "failures {failures}/200");
    }

    #[test]
    fn recoloring_cube_ungrounds_language_profile() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::LanguageGrounded);
        for seed in 0..50 {
            // Action 5: cube -> green. No red object remains.
            let o = outcome(&cfg, &profile, Some(5), seed);
            assert!(!o.success, "seed {seed}");
        }
    }

    #[test]
    fn red_distractor_confuses_language_profile_sometimes() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::LanguageGrounded);
        let failures = (0..200)
            .filter(|&seed| !outcome(&cfg, &profile, Some(8), seed).success)
            .count();
        // Ambiguity resolves 50/50.
        assert!((70..=130).contains(&failures), "failures {failures}/200");
    }

    #[test]
    fn zero_horizon_is_contract_error() {
        let cfg = EnvConfig::default();
        let (mut state, _) = reset(&cfg, 0).unwrap();
        let profile = PolicyProfile::preset(ProfileKind::Robust);
        assert!(rollout_policy_under_test(&mut state, &profile, 0).is_err());
    }
}
