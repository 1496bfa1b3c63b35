//! failforge command-line interface.
//!
//! Subcommands cover the whole pipeline: `train` an adversary, `analyze`
//! its snapshot into a failure profile, run the enumeration `oracle`,
//! `compare` the two, render `report` figures, and run `gradcheck` as a
//! numerical smoke test. Every command that gets past argument parsing
//! writes a run manifest. Exit codes: 0 success, 1 config/runtime error,
//! 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failforge::analysis::{failure_distribution, FailureMatrix, FailureProfile};
use failforge::env::{catalog_labels, observe, reset, ObsMode, ProfileKind};
use failforge::nn::snapshot::PolicySnapshot;
use failforge::nn::{ActorCriticNet, Shape};
use failforge::oracle::{agreement, exhaustive_failure_rates, OracleRates};
use failforge::ppo::{batch_loss_and_grads, train, BatchSample};
use failforge::report::chart::{emit_chart, ChartData, ChartKind};
use failforge::report::config_file::{
    load_config, parse_episode_mode, parse_obs_mode, ResolvedConfig,
};
use failforge::report::RunManifest;
use failforge::rng::SeedStream;
use failforge::{Error, Result};

#[derive(Parser)]
#[command(name = "failforge", version, about = "Adversarial failure-mode discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources shared by pipeline commands. Precedence is
/// documented defaults, then `--config`, then these flags.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for training, environment resets, and oracle trials.
    #[arg(long)]
    seed: Option<u64>,
    /// Policy under test: vision_brittle, proprio_blind,
    /// language_grounded, or robust.
    #[arg(long)]
    profile: Option<String>,
    /// Observation mode: features or raster.
    #[arg(long)]
    mode: Option<String>,
    /// Episode mode: single or multi:K.
    #[arg(long)]
    episode_mode: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    ent_coef: Option<f64>,
    #[arg(long)]
    vf_coef: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_grad_norm: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    n_epochs: Option<usize>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    max_horizon: Option<usize>,
    #[arg(long)]
    camouflage_mult: Option<f64>,
    #[arg(long)]
    distractor_lock: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ResolvedConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ResolvedConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(kind) = &self.profile {
            // A kind switch re-seeds the whole preset; numeric flags below
            // still override individual fields afterward.
            cfg.profile = failforge::env::PolicyProfile::preset(kind.parse::<ProfileKind>()?);
        }
        if let Some(mode) = &self.mode {
            cfg.env.observation = parse_obs_mode(mode)?;
        }
        if let Some(mode) = &self.episode_mode {
            cfg.env.episode = parse_episode_mode(mode)?;
        }
        macro_rules! set {
            ($($field:ident => $slot:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $slot = v; })*
            };
        }
        set! {
            gamma => cfg.train.gamma,
            lambda => cfg.train.lambda,
            clip_eps => cfg.train.clip_eps,
            ent_coef => cfg.train.ent_coef,
            vf_coef => cfg.train.vf_coef,
            learning_rate => cfg.train.learning_rate,
            max_grad_norm => cfg.train.max_grad_norm,
            n_steps => cfg.train.n_steps,
            batch_size => cfg.train.batch_size,
            n_epochs => cfg.train.n_epochs,
            total_steps => cfg.train.total_steps,
            max_horizon => cfg.env.max_horizon,
            camouflage_mult => cfg.profile.camouflage_mult,
            distractor_lock => cfg.profile.distractor_lock,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a PPO adversary and write its snapshot, training log, and
    /// manifest.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Snapshot output path; log.csv, log.json, and manifest.json are
        /// written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a snapshot back out as a failure profile at the canonical
    /// reset observation.
    Analyze {
        #[arg(long)]
        snapshot: PathBuf,
        /// Profile output path; printed to standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Exhaustive per-action failure rates with Wilson intervals.
    Oracle {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement between a learned profile and oracle rates.
    Compare {
        /// FailureProfile JSON produced by `analyze`.
        #[arg(long)]
        profile: PathBuf,
        /// OracleRates JSON produced by `oracle`.
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a figure (SVG plus a CSV data sidecar).
    Report {
        /// radar, heatmap, stacked_bar, or grouped_bar.
        #[arg(long)]
        kind: String,
        /// FailureProfile JSON (radar).
        #[arg(long)]
        profile: Option<PathBuf>,
        /// FailureMatrix JSON (heatmap and bar charts).
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("FAILFORGE_LOG")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn manifest_path(out: Option<&Path>) -> PathBuf {
    match out.and_then(|p| p.parent()).filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => dir.join("manifest.json"),
        None => PathBuf::from("manifest.json"),
    }
}

/// Runs `body`, then writes the manifest whether or not it failed.
fn with_manifest(
    mut manifest: RunManifest,
    path: &Path,
    body: impl FnOnce(&mut RunManifest) -> Result<()>,
) -> Result<()> {
    let result = body(&mut manifest);
    if let Err(e) = &result {
        manifest.error = Some(e.to_string());
    }
    manifest.finish(path)?;
    result
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { cfg, out } => cmd_train(&cfg, &out),
        Command::Analyze { snapshot, out, cfg } => cmd_analyze(&snapshot, out.as_deref(), &cfg),
        Command::Oracle { cfg, trials, out } => cmd_oracle(&cfg, trials, out.as_deref()),
        Command::Compare { profile, oracle, out } => cmd_compare(&profile, &oracle, out.as_deref()),
        Command::Report { kind, profile, matrix, out } => {
            cmd_report(&kind, profile.as_deref(), matrix.as_deref(), &out)
        }
        Command::Gradcheck { seeds } => cmd_gradcheck(seeds),
    }
}

fn cmd_train(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = args.resolve()?;
    let manifest = RunManifest::new("train", serde_json::to_value(&cfg)?, cfg.seed);
    with_manifest(manifest, &manifest_path(Some(out)), |manifest| {
        let result = train(&cfg.train, &cfg.env, &cfg.profile, cfg.seed)?;
        result.snapshot.save(out)?;
        manifest.record_output(out)?;
        let dir = out.parent().unwrap_or_else(|| Path::new("."));
        let log_csv = dir.join("log.csv");
        std::fs::write(&log_csv, result.log.to_csv())?;
        manifest.record_output(&log_csv)?;
        let log_json = dir.join("log.json");
        std::fs::write(&log_json, serde_json::to_string_pretty(&result.log)?)?;
        manifest.record_output(&log_json)?;
        if let Some(abort) = result.aborted {
            return Err(Error::Numeric(format!(
                "training aborted at iteration {}: {} (last good snapshot saved to {})",
                abort.iteration,
                abort.reason,
                out.display()
            )));
        }
        Ok(())
    })
}

fn cmd_analyze(snapshot_path: &Path, out: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let manifest = RunManifest::new("analyze", serde_json::to_value(&cfg)?, cfg.seed);
    with_manifest(manifest, &manifest_path(out), |manifest| {
        let snapshot = PolicySnapshot::load(snapshot_path)?;
        manifest.record_input(snapshot_path)?;
        // Observation mode follows the snapshot architecture, not the
        // config, so a raster-trained snapshot analyzes correctly even
        // under a default config.
        let mode = match snapshot.architecture.input {
            Shape::Flat { .. } => ObsMode::Features,
            Shape::Grid { .. } => ObsMode::Raster,
        };
        let (state, _) = reset(&cfg.env, cfg.seed)?;
        let obs = observe(&state, mode);
        let labels = catalog_labels(&cfg.env.catalog);
        let profile = failure_distribution(&snapshot, &obs, &labels)?;
        let json = profile.to_json()?;
        match out {
            Some(path) => {
                std::fs::write(path, &json)?;
                manifest.record_output(path)?;
            }
            None => println!("{json}"),
        }
        Ok(())
    })
}

fn cmd_oracle(args: &ConfigArgs, trials: usize, out: Option<&Path>) -> Result<()> {
    let cfg = args.resolve()?;
    let manifest = RunManifest::new("oracle", serde_json::to_value(&cfg)?, cfg.seed);
    with_manifest(manifest, &manifest_path(out), |manifest| {
        let rates = exhaustive_failure_rates(&cfg.env, &cfg.profile, trials, cfg.seed)?;
        let json = rates.to_json()?;
        match out {
            Some(path) => {
                std::fs::write(path, &json)?;
                manifest.record_output(path)?;
            }
            None => println!("{json}"),
        }
        Ok(())
    })
}

fn cmd_compare(profile_path: &Path, oracle_path: &Path, out: Option<&Path>) -> Result<()> {
    let manifest = RunManifest::new("compare", serde_json::Value::Null, 0);
    with_manifest(manifest, &manifest_path(out), |manifest| {
        let profile = FailureProfile::load(profile_path)?;
        manifest.record_input(profile_path)?;
        let rates = OracleRates::load(oracle_path)?;
        manifest.record_input(oracle_path)?;
        let report = agreement(&profile, &rates)?;
        let json = report.to_json()?;
        println!("{json}");
        if let Some(path) = out {
            std::fs::write(path, &json)?;
            manifest.record_output(path)?;
        }
        Ok(())
    })
}

fn cmd_report(
    kind: &str,
    profile: Option<&Path>,
    matrix: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let kind: ChartKind = kind.parse()?;
    let manifest = RunManifest::new("report", serde_json::Value::Null, 0);
    with_manifest(manifest, &manifest_path(Some(out)), |manifest| {
        let (data, csv) = match (kind, profile, matrix) {
            (ChartKind::Radar, Some(path), _) => {
                let p = FailureProfile::load(path)?;
                manifest.record_input(path)?;
                let mut csv = String::from("action,probability\n");
                for (l, v) in p.labels.iter().zip(&p.probs) {
                    csv.push_str(&format!("{l},{v}\n"));
                }
                (
                    ChartData {
                        title: "failure profile".into(),
                        row_labels: vec!["profile".into()],
                        col_labels: p.labels.clone(),
                        rows: vec![p.probs.clone()],
                        entropy_nats: Some(p.entropy_nats),
                    },
                    csv,
                )
            }
            (ChartKind::Radar, None, _) => {
                return Err(Error::Contract("radar reports require --profile".into()))
            }
            (_, _, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Format(format!("cannot read matrix {}: {e}", path.display()))
                })?;
                let m: FailureMatrix = serde_json::from_str(&text).map_err(|e| {
                    Error::Format(format!("malformed matrix {}: {e}", path.display()))
                })?;
                manifest.record_input(path)?;
                let csv = m.to_csv();
                (
                    ChartData {
                        title: "failure matrix".into(),
                        row_labels: m.row_labels,
                        col_labels: m.col_labels,
                        rows: m.rows,
                        entropy_nats: None,
                    },
                    csv,
                )
            }
            (_, _, None) => {
                return Err(Error::Contract(format!(
                    "{kind:?} reports require --matrix"
                )))
            }
        };
        emit_chart(kind, &data, out)?;
        manifest.record_output(out)?;
        let csv_path = out.with_extension("csv");
        std::fs::write(&csv_path, csv)?;
        manifest.record_output(&csv_path)?;
        Ok(())
    })
}

/// Central finite differences over a strided sample of parameters for
/// several seeds; fails when any relative error exceeds 1e-4.
fn cmd_gradcheck(seeds: u64) -> Result<()> {
    let env_cfg = failforge::env::EnvConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = SeedStream::new(seed);
        let net = ActorCriticNet::new_mlp(failforge::env::FEATURE_DIM, 9, &mut rng)?;
        let observations: Vec<_> = (0..4)
            .map(|i| {
                let (state, _) = reset(&env_cfg, seed * 100 + i)?;
                Ok(observe(&state, ObsMode::Features))
            })
            .collect::<Result<_>>()?;
        let samples: Vec<BatchSample<'_>> = observations
            .iter()
            .enumerate()
            .map(|(i, obs)| BatchSample {
                obs,
                action: i * 2 % 9,
                log_prob_old: -2.0 - 0.1 * i as f64,
                advantage: if i % 2 == 0 { 1.3 } else { -0.8 },
                ret: 0.5 * i as f64,
            })
            .collect();
        let eval = batch_loss_and_grads(&net, &samples, 0.2, 0.5, 0.01)?;
        let analytic = eval.grads.to_flat();
        let base = net.to_flat();
        let loss_at = |flat: &[f64]| -> Result<f64> {
            let mut perturbed = net.clone();
            perturbed.apply_flat(flat)?;
            Ok(batch_loss_and_grads(&perturbed, &samples, 0.2, 0.5, 0.01)?.loss)
        };
        let h = 1e-5;
        let stride = (base.len() / 200).max(1);
        for i in (0..base.len()).step_by(stride) {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
    }
    println!("gradcheck: max relative error {worst:.3e} over {seeds} seeds");
    if worst > 1e-4 {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {worst:.3e} > 1e-4"
        )));
    }
    Ok(())
}
