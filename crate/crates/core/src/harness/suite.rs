use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::log::{read_jsonl, rollout_episode, write_jsonl, StepRecord};
use super::metrics::{compute_metrics, mean_sd, MetricsRecord};
use crate::env::{presets, Env, ScenarioConfig};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::trainer::{algo_setup, save_agents, stream_rng, train_with, Algo, Stream, TrainConfig, TrainRecord, TRACKING_THRESHOLD};

pub const BUILD_TAG: &str = env!("SDAMARL_BUILD_TAG");

/// Snapshot written to every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub algo: Algo,
    pub seed: u64,
    pub build_tag: String,
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub preset: String,
    pub algo: Algo,
    pub seed: u64,
    pub eval_episodes: usize,
    pub tracking_accuracy: f64,
    pub velocity_diff: f64,
    pub path_length: f64,
    pub reward: f64,
    pub final_window_train_reward: f64,
}

pub struct RunResult {
    pub dir: PathBuf,
    pub train: Vec<TrainRecord>,
    pub eval: Vec<MetricsRecord>,
    pub summary: RunSummary,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Scenario-level training overrides, then the run seed.
pub fn resolve_config(base: &TrainConfig, scenario: &ScenarioConfig, seed: u64) -> TrainConfig {
    let mut c = base.clone();
    scenario.train.apply(&mut c);
    c.seed = seed;
    c
}

/// Frozen-policy evaluation episodes; reset seeds come from the run seed's
/// evaluation stream.
pub fn evaluate(
    actors: &[Mlp],
    scenario: &ScenarioConfig,
    episode_len: usize,
    episodes: usize,
    seed: u64,
) -> Result<(Vec<MetricsRecord>, Vec<StepRecord>)> {
    let mut rng = stream_rng(seed, Stream::Eval);
    let mut env = Env::new(scenario.clone(), episode_len, 0)?;
    let mut metrics = Vec::with_capacity(episodes);
    let mut steps = Vec::new();
    for ep in 0..episodes {
        let log = rollout_episode(&mut env, actors, ep, rng.random())?;
        metrics.push(compute_metrics(&log, seed, TRACKING_THRESHOLD)?);
        steps.extend(log.records);
    }
    Ok((metrics, steps))
}

/// Mean training reward over the last `window` episodes.
pub fn final_window_reward(records: &[TrainRecord], window: usize) -> f64 {
    let tail = &records[records.len().saturating_sub(window)..];
    tail.iter().map(|r| r.mean_reward).sum::<f64>() / tail.len() as f64
}

/// Train, checkpoint and evaluate one (scenario, algorithm, seed) triple,
/// writing everything under `dir`.
pub fn run_single(scenario: &ScenarioConfig, base: &TrainConfig, algo: Algo, seed: u64, dir: &Path) -> Result<RunResult> {
    std::fs::create_dir_all(dir)?;
    let (config, with_diffusion) = algo_setup(resolve_config(base, scenario, seed), algo);
    config.validate()?;
    let resolved = ResolvedConfig {
        algo,
        seed,
        build_tag: BUILD_TAG.to_string(),
        scenario: scenario.clone(),
        train: config.clone(),
    };
    serde_json::to_writer_pretty(create(&dir.join("resolved_config.json"))?, &resolved)?;

    let mut train_log = create(&dir.join("train.jsonl"))?;
    let mut timings = create(&dir.join("timings.jsonl"))?;
    let ckpt = dir.join("checkpoint");
    let outcome = train_with(config.clone(), scenario.clone(), with_diffusion, Some(&ckpt), |r, wall| {
        serde_json::to_writer(&mut train_log, r)?;
        train_log.write_all(b"\n")?;
        writeln!(timings, "{{\"episode\":{},\"wall_time\":{}}}", r.episode, wall)?;
        Ok(())
    })?;
    train_log.flush()?;
    timings.flush()?;
    save_agents(&outcome.agents, &ckpt)?;

    let mut curve = create(&dir.join("reward_curve.csv"))?;
    writeln!(curve, "episode,mean_reward")?;
    for r in &outcome.records {
        writeln!(curve, "{},{}", r.episode, r.mean_reward)?;
    }
    curve.flush()?;

    let actors: Vec<Mlp> = outcome.agents.iter().map(|a| a.actor.clone()).collect();
    let (eval, steps) = evaluate(&actors, scenario, config.episode_len, config.eval_episodes, seed)?;
    write_jsonl(create(&dir.join("eval.jsonl"))?, &eval)?;
    write_jsonl(create(&dir.join("trajectories.jsonl"))?, &steps)?;

    let summary = summarize_run(&scenario.name, algo, seed, &eval, &outcome.records);
    serde_json::to_writer_pretty(create(&dir.join("summary.json"))?, &summary)?;
    Ok(RunResult {
        dir: dir.to_path_buf(),
        train: outcome.records,
        eval,
        summary,
    })
}

pub fn summarize_run(preset: &str, algo: Algo, seed: u64, eval: &[MetricsRecord], train: &[TrainRecord]) -> RunSummary {
    let avg = |f: &dyn Fn(&MetricsRecord) -> f64| eval.iter().map(f).sum::<f64>() / eval.len() as f64;
    RunSummary {
        preset: preset.to_string(),
        algo,
        seed,
        eval_episodes: eval.len(),
        tracking_accuracy: avg(&|m| m.tracking_accuracy),
        velocity_diff: avg(&|m| m.velocity_diff_mean),
        path_length: avg(&|m| m.path_length_mean),
        reward: avg(&|m| m.mean_cumulative_reward),
        final_window_train_reward: final_window_reward(train, 50),
    }
}

pub fn run_dir(out: &Path, preset: &str, algo: Algo, seed: u64) -> PathBuf {
    out.join(preset).join(algo.name()).join(format!("seed{seed}"))
}

pub const SUMMARY_HEADER: &str = "preset,algo,n_seeds,tracking_accuracy_mean,tracking_accuracy_sd,\
velocity_diff_mean,velocity_diff_sd,path_length_mean,path_length_sd,reward_mean,reward_sd";

/// Builds `summary.csv` from the `eval.jsonl` files alone. Each statistic
/// is the mean and sample SD over seeds of the per-seed mean across
/// evaluation episodes.
pub fn write_summary(out: &Path, presets: &[String], algos: &[Algo], seeds: &[u64]) -> Result<Vec<String>> {
    let mut rows = Vec::new();
    for p in presets {
        for &a in algos {
            let mut cols: [Vec<f64>; 4] = Default::default();
            for &s in seeds {
                let path = run_dir(out, p, a, s).join("eval.jsonl");
                let eval: Vec<MetricsRecord> = read_jsonl(BufReader::new(File::open(&path)?))?;
                if eval.is_empty() {
                    return Err(Error::InvalidConfig(format!("{} is empty", path.display())));
                }
                let avg = |f: &dyn Fn(&MetricsRecord) -> f64| eval.iter().map(f).sum::<f64>() / eval.len() as f64;
                cols[0].push(avg(&|m| m.tracking_accuracy));
                cols[1].push(avg(&|m| m.velocity_diff_mean));
                cols[2].push(avg(&|m| m.path_length_mean));
                cols[3].push(avg(&|m| m.mean_cumulative_reward));
            }
            let mut row = format!("{p},{},{}", a.name(), seeds.len());
            for c in &cols {
                let (m, sd) = mean_sd(c);
                row.push_str(&format!(",{m},{sd}"));
            }
            rows.push(row);
        }
    }
    let mut w = create(&out.join("summary.csv"))?;
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in &rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(rows)
}

/// Every (preset, algorithm, seed) run followed by the summary table.
pub fn run_suite(presets_: &[String], algos: &[Algo], seeds: &[u64], base: &TrainConfig, out: &Path) -> Result<Vec<String>> {
    let scenarios = presets_
        .iter()
        .map(|p| presets::preset(p))
        .collect::<Result<Vec<_>>>()?;
    for sc in &scenarios {
        for &a in algos {
            for &s in seeds {
                run_single(sc, base, a, s, &run_dir(out, &sc.name, a, s))?;
            }
        }
    }
    write_summary(out, presets_, algos, seeds)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRun {
    pub steps: usize,
    pub seed: u64,
    pub curve: Vec<f64>,
    /// Mean wall time of one action sample.
    pub sample_seconds: f64,
    pub curve_file: PathBuf,
}

/// One SDA-MARL training run per (T, seed), each emitting its reward curve.
pub fn sweep_diffusion_steps(
    values: &[usize],
    scenario: &ScenarioConfig,
    base: &TrainConfig,
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<SweepRun>> {
    if values.contains(&0) {
        return Err(Error::InvalidConfig("diffusion step counts must be at least 1".into()));
    }
    std::fs::create_dir_all(out)?;
    let mut runs = Vec::new();
    for &t in values {
        for &seed in seeds {
            let mut config = resolve_config(base, scenario, seed);
            config.diffusion_steps = t;
            let outcome = train_with(config, scenario.clone(), true, None, |_, _| Ok(()))?;
            let curve: Vec<f64> = outcome.records.iter().map(|r| r.mean_reward).collect();
            let curve_file = out.join(format!("t{t}_seed{seed}.csv"));
            let mut w = create(&curve_file)?;
            writeln!(w, "episode,mean_reward")?;
            for (i, r) in curve.iter().enumerate() {
                writeln!(w, "{i},{r}")?;
            }
            w.flush()?;
            let sample_seconds = time_sampling(&outcome.agents[0].diffusion.as_ref().unwrap().policy, 50);
            runs.push(SweepRun {
                steps: t,
                seed,
                curve,
                sample_seconds,
                curve_file,
            });
        }
    }
    serde_json::to_writer_pretty(create(&out.join("sweep.json"))?, &runs)?;
    Ok(runs)
}

pub fn time_sampling(policy: &crate::diffusion::DiffusionPolicy, samples: usize) -> f64 {
    let mut rng = stream_rng(0, Stream::Eval);
    let state = vec![0.1; policy.state_dim()];
    let start = Instant::now();
    for _ in 0..samples {
        let _ = policy.sample_action(&state, &mut rng, true);
    }
    start.elapsed().as_secs_f64() / samples.max(1) as f64
}

/// Document accepted by `--config`: an optional full scenario replacing the
/// named preset, and training overrides layered on the chosen profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub train: crate::trainer::TrainOverrides,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if let Some(s) = &c.scenario {
            s.validate()?;
        }
        Ok(c)
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidConfig(format!("bad seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}
