//! Brute-force ground truth: exhaustive per-action Monte Carlo failure
//! rates with Wilson intervals, plus agreement metrics between the
//! learned distribution and those rates.
//!
//! Trials draw their episode seeds from order-insensitive seed
//! derivation, so any execution schedule over (action, trial) pairs
//! yields identical aggregates.

use serde::{Deserialize, Serialize};

use crate::analysis::FailureProfile;
use crate::env::{catalog_labels, run_episode, EnvConfig, PolicyProfile};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub const ORACLE_FORMAT_VERSION: u32 = 1;

/// z for a central 95% normal interval.
const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRates {
    pub format_version: u32,
    pub labels: Vec<String>,
    pub rates: Vec<f64>,
    pub trials_per_action: usize,
    /// Wilson 95% score intervals, one `[lo, hi]` per action.
    pub intervals: Vec<[f64; 2]>,
    pub seed: u64,
}

impl OracleRates {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_action < 1 {
            return Err(Error::Contract("trials_per_action must be >= 1".into()));
        }
        if self.rates.len() != self.labels.len() || self.intervals.len() != self.rates.len() {
            return Err(Error::Contract("oracle array length mismatch".into()));
        }
        for (i, (&r, iv)) in self.rates.iter().zip(&self.intervals).enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Contract(format!("rate[{i}] = {r} outside [0,1]")));
            }
            if !(iv[0] <= r && r <= iv[1]) {
                return Err(Error::Contract(format!(
                    "interval [{}, {}] excludes its point estimate {r}",
                    iv[0], iv[1]
                )));
            }
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
            .map_err(|e| Error::Format(format!("cannot read oracle {}: {e}", path.display())))?;
        let rates: OracleRates = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("malformed oracle {}: {e}", path.display())))?;
        if rates.format_version != ORACLE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "oracle format_version {} not supported",
                rates.format_version
            )));
        }
        rates.validate()?;
        Ok(rates)
    }

    /// Argmax with ties toward the lower action id.
    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.rates)
    }
}

/// Wilson 95% score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> Result<[f64; 2]> {
    if n < 1 || successes > n {
        return Err(Error::Contract(format!(
            "invalid Wilson inputs: {successes}/{n}"
        )));
    }
    let k = successes;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    // Degenerate cases collapse analytically: at p = 0 the lower bound is
    // exactly 0 and at p = 1 the upper is exactly 1; computing them
    // numerically leaves last-ulp residue, so pin them.
    if k == 0 {
        return Ok([0.0, z2 / (n + z2)]);
    }
    if p == 1.0 {
        return Ok([n / (n + z2), 1.0]);
    }
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (Z_95 / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok([(center - half).max(0.0), (center + half).min(1.0)])
}

/// Runs `trials_per_action` independent perturb-then-rollout episodes for
/// every catalog action. Episode seeds come from
/// `derive(seed, [action, trial])`, so results are schedule-independent.
pub fn exhaustive_failure_rates(
    env_config: &EnvConfig,
    profile: &PolicyProfile,
    trials_per_action: usize,
    seed: u64,
) -> Result<OracleRates> {
    if trials_per_action < 1 {
        return Err(Error::Contract("trials_per_action must be >= 1".into()));
    }
    env_config.validate()?;
    profile.validate()?;
    let n_actions = env_config.catalog.len();
    let mut rates = Vec::with_capacity(n_actions);
    let mut intervals = Vec::with_capacity(n_actions);
    for action in 0..n_actions {
        let mut failures = 0usize;
        for trial in 0..trials_per_action {
            let episode_seed =
                SeedStream::derive(seed, &[action as u64, trial as u64]).state();
            let outcome = run_episode(env_config, profile, action, episode_seed)?;
            if !outcome.success {
                failures += 1;
            }
        }
        rates.push(failures as f64 / trials_per_action as f64);
        intervals.push(wilson_interval(failures, trials_per_action)?);
    }
    let rates = OracleRates {
        format_version: ORACLE_FORMAT_VERSION,
        labels: catalog_labels(&env_config.catalog),
        rates,
        trials_per_action,
        intervals,
        seed,
    };
    rates.validate()?;
    Ok(rates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub format_version: u32,
    pub top1_match: bool,
    pub spearman_rho: f64,
    pub learned_argmax: usize,
    pub learned_argmax_prob: f64,
    pub oracle_argmax: usize,
    pub oracle_argmax_rate: f64,
}

impl AgreementReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Compares the learned distribution with the oracle: top-1 agreement and
/// Spearman rank correlation with average-rank tie handling.
pub fn agreement(profile: &FailureProfile, rates: &OracleRates) -> Result<AgreementReport> {
    profile.validate()?;
    rates.validate()?;
    if profile.probs.len() != rates.rates.len() {
        return Err(Error::Contract(format!(
            "learned distribution has {} actions, oracle has {}",
            profile.probs.len(),
            rates.rates.len()
        )));
    }
    let learned_argmax = argmax_lowest(&profile.probs);
    let oracle_argmax = rates.argmax();
    Ok(AgreementReport {
        format_version: ORACLE_FORMAT_VERSION,
        top1_match: learned_argmax == oracle_argmax,
        spearman_rho: spearman_rho(&profile.probs, &rates.rates)?,
        learned_argmax,
        learned_argmax_prob: profile.probs[learned_argmax],
        oracle_argmax,
        oracle_argmax_rate: rates.rates[oracle_argmax],
    })
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of the average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract("Spearman inputs differ in length".into()));
    }
    if a.len() < 2 {
        return Err(Error::Contract("Spearman needs at least two points".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        // A constant ranking carries no order information; define the
        // correlation as 0 rather than dividing by zero.
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::PROFILE_FORMAT_VERSION;
    use crate::env::ProfileKind;
    use crate::nn::dist::entropy;

    #[test]
    fn wilson_degenerate_rate_zero_matches_closed_form() {
        // p = 0: lo = 0, hi = z^2 / (n + z^2).
        for n in [1usize, 10, 100, 1000] {
            let [lo, hi] = wilson_interval(0, n).unwrap();
            let z2 = Z_95 * Z_95;
            assert_eq!(lo, 0.0);
            assert!((hi - z2 / (n as f64 + z2)).abs() <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn wilson_degenerate_rate_one_matches_closed_form() {
        // p = 1: hi = 1, lo = n / (n + z^2).
        for n in [1usize, 10, 100, 1000] {
            let [lo, hi] = wilson_interval(n, n).unwrap();
            let z2 = Z_95 * Z_95;
            assert_eq!(hi, 1.0);
            assert!((lo - n as f64 / (n as f64 + z2)).abs() <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn wilson_contains_point_estimate() {
        for n in 1..=30 {
            for k in 0..=n {
                let [lo, hi] = wilson_interval(k, n).unwrap();
                let p = k as f64 / n as f64;
                assert!(lo <= p && p <= hi, "{k}/{n}");
            }
        }
    }

    #[test]
    fn spearman_self_and_reverse() {
        for n in [9usize, 8] {
            let v: Vec<f64> = (0..n).map(|i| i as f64 * 0.7 + 0.1).collect();
            let r: Vec<f64> = v.iter().rev().copied().collect();
            assert!((spearman_rho(&v, &v).unwrap() - 1.0).abs() <= 1e-12, "n = {n}");
            assert!((spearman_rho(&v, &r).unwrap() + 1.0).abs() <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        // Hand-computed: a ranks [4, 3, 1.5, 1.5], b ranks [4, 3, 1.5, 1.5].
        let a = [0.9, 0.5, 0.1, 0.1];
        let b = [10.0, 7.0, 1.0, 1.0];
        assert!((spearman_rho(&a, &b).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn proprio_blind_displacement_fails_always() {
        // Action 7 moves the cube; the blind profile cannot see that.
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::ProprioBlind);
        let rates = exhaustive_failure_rates(&cfg, &profile, 25, 0).unwrap();
        assert_eq!(rates.rates[7], 1.0);
        assert_eq!(rates.intervals[7][1], 1.0);
    }

    #[test]
    fn robust_noop_rate_is_low() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::Robust);
        let rates = exhaustive_failure_rates(&cfg, &profile, 200, 0).unwrap();
        assert!(rates.rates[0] <= 0.05, "rate {}", rates.rates[0]);
    }

    #[test]
    fn rates_are_seed_deterministic() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::VisionBrittle);
        let a = exhaustive_failure_rates(&cfg, &profile, 20, 5).unwrap();
        let b = exhaustive_failure_rates(&cfg, &profile, 20, 5).unwrap();
        assert_eq!(a, b);
        let c = exhaustive_failure_rates(&cfg, &profile, 20, 6).unwrap();
        assert_eq!(a.labels, c.labels);
    }

    #[test]
    fn zero_trials_is_contract_error() {
        let cfg = EnvConfig::default();
        let profile = PolicyProfile::preset(ProfileKind::Robust);
        assert!(exhaustive_failure_rates(&cfg, &profile, 0, 0).is_err());
    }

    fn hand_profile(probs: Vec<f64>) -> FailureProfile {
        let labels = (0..probs.len()).map(|i| format!("a{i}")).collect();
        let entropy_nats = entropy(&probs).unwrap();
        FailureProfile {
            format_version: PROFILE_FORMAT_VERSION,
            labels,
            probs,
            entropy_nats,
            snapshot_digest: String::new(),
            observation_digest: String::new(),
        }
    }

    fn hand_rates(rates: Vec<f64>) -> OracleRates {
        let n = rates.len();
        OracleRates {
            format_version: ORACLE_FORMAT_VERSION,
            labels: (0..n).map(|i| format!("a{i}")).collect(),
            intervals: rates.iter().map(|&r| [r, r]).collect(),
            rates,
            trials_per_action: 1,
            seed: 0,
        }
    }

    #[test]
    fn identical_rankings_agree_perfectly() {
        let p = hand_profile(vec![0.5, 0.3, 0.2]);
        let o = hand_rates(vec![0.9, 0.6, 0.1]);
        let rep = agreement(&p, &o).unwrap();
        assert!(rep.top1_match);
        assert!((rep.spearman_rho - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn reversed_rankings_anticorrelate() {
        let p = hand_profile(vec![0.05, 0.1, 0.15, 0.2, 0.5]);
        let o = hand_rates(vec![0.9, 0.7, 0.5, 0.3, 0.1]);
        let rep = agreement(&p, &o).unwrap();
        assert!(!rep.top1_match);
        assert!((rep.spearman_rho + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let p = hand_profile(vec![0.5, 0.5]);
        let o = hand_rates(vec![1.0, 0.0, 0.0]);
        assert!(agreement(&p, &o).is_err());
    }
}
