use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use sdamarl::env::{presets, ScenarioConfig};
use sdamarl::harness::{
    evaluate, mean_sd, parse_seeds, run_dir, run_single, run_suite, sweep_diffusion_steps, ResolvedConfig, RunConfig,
};
use sdamarl::trainer::{load_actors, Algo, TrainConfig};

#[derive(Parser)]
#[command(name = "sdamarl", version, about = "Multi-AUV target tracking experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Profile {
    /// Use full-length training values instead of the desk-scale profile.
    #[arg(long)]
    paper_scale: bool,
    /// JSON document with an optional `scenario` and `train` overrides.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Profile {
    fn resolve(&self, scenario_name: &str) -> anyhow::Result<(ScenarioConfig, TrainConfig)> {
        let mut base = if self.paper_scale {
            TrainConfig::paper_scale()
        } else {
            TrainConfig::default()
        };
        let mut scenario = presets::preset(scenario_name)?;
        if let Some(path) = &self.config {
            let rc = RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
            if let Some(s) = rc.scenario {
                scenario = s;
            }
            rc.train.apply(&mut base);
        }
        Ok((scenario, base))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one algorithm on one scenario and evaluate the result.
    Train {
        #[arg(long, default_value = "auv2_tgt1")]
        scenario: String,
        #[arg(long, default_value = "sda_marl")]
        algo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        #[command(flatten)]
        profile: Profile,
    },
    /// Evaluate a checkpoint directory written by `train` or `suite`.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 1000)]
        seed: u64,
    },
    /// Seed sweep over presets and algorithms with a summary table.
    Suite {
        #[arg(long, default_value = "auv2_tgt1")]
        presets: String,
        #[arg(long, default_value = "sda_marl,maddpg")]
        algos: String,
        /// `a..b` (inclusive) or a comma list.
        #[arg(long, default_value = "0..2")]
        seeds: String,
        #[arg(long, default_value = "runs/suite")]
        out: PathBuf,
        #[command(flatten)]
        profile: Profile,
    },
    /// Reward curves for several diffusion step counts.
    SweepT {
        #[arg(long, default_value = "5,10,20,50")]
        values: String,
        #[arg(long, default_value = "auv2_tgt1")]
        scenario: String,
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long, default_value = "runs/sweep_t")]
        out: PathBuf,
        #[command(flatten)]
        profile: Profile,
    },
}

fn split(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn find_resolved(checkpoint: &Path) -> anyhow::Result<ResolvedConfig> {
    for dir in [checkpoint, checkpoint.parent().unwrap_or(checkpoint)] {
        let p = dir.join("resolved_config.json");
        if p.exists() {
            return Ok(serde_json::from_str(&std::fs::read_to_string(&p)?)?);
        }
    }
    bail!("no resolved_config.json next to {}", checkpoint.display())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Train {
            scenario,
            algo,
            seed,
            out,
            profile,
        } => {
            let (sc, base) = profile.resolve(&scenario)?;
            let algo = Algo::parse(&algo)?;
            let r = run_single(&sc, &base, algo, seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&r.summary)?);
        }
        Cmd::Eval {
            checkpoint,
            episodes,
            seed,
        } => {
            let resolved = find_resolved(&checkpoint)?;
            let dir = if checkpoint.join("agent0").exists() {
                checkpoint.clone()
            } else {
                checkpoint.join("checkpoint")
            };
            let actors = load_actors(&dir, resolved.scenario.n_auvs)?;
            let (metrics, _) = evaluate(&actors, &resolved.scenario, resolved.train.episode_len, episodes, seed)?;
            let col = |f: &dyn Fn(&sdamarl::harness::MetricsRecord) -> f64| {
                mean_sd(&metrics.iter().map(f).collect::<Vec<_>>())
            };
            let (acc, acc_sd) = col(&|m| m.tracking_accuracy);
            let (vd, vd_sd) = col(&|m| m.velocity_diff_mean);
            let (pl, pl_sd) = col(&|m| m.path_length_mean);
            let (rw, rw_sd) = col(&|m| m.mean_cumulative_reward);
            println!("episodes            {episodes}");
            println!("tracking accuracy   {acc:.4} ± {acc_sd:.4}");
            println!("velocity difference {vd:.4} ± {vd_sd:.4}");
            println!("path length         {pl:.4} ± {pl_sd:.4}");
            println!("cumulative reward   {rw:.4} ± {rw_sd:.4}");
        }
        Cmd::Suite {
            presets: p,
            algos,
            seeds,
            out,
            profile,
        } => {
            let preset_names = split(&p);
            let algos = split(&algos).iter().map(|a| Algo::parse(a)).collect::<Result<Vec<_>, _>>()?;
            let seeds = parse_seeds(&seeds)?;
            let (_, base) = profile.resolve(&preset_names[0])?;
            let rows = run_suite(&preset_names, &algos, &seeds, &base, &out)?;
            println!("{}", sdamarl::harness::SUMMARY_HEADER);
            for r in rows {
                println!("{r}");
            }
            eprintln!("first run directory: {}", run_dir(&out, &preset_names[0], algos[0], seeds[0]).display());
        }
        Cmd::SweepT {
            values,
            scenario,
            seeds,
            out,
            profile,
        } => {
            let values = split(&values)
                .iter()
                .map(|v| v.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .context("--values must be integers")?;
            let (sc, base) = profile.resolve(&scenario)?;
            let runs = sweep_diffusion_steps(&values, &sc, &base, &parse_seeds(&seeds)?, &out)?;
            for r in runs {
                println!(
                    "T={:<3} seed={} final reward {:.4}  sample {:.3} ms  -> {}",
                    r.steps,
                    r.seed,
                    r.curve.last().copied().unwrap_or(f64::NAN),
                    r.sample_seconds * 1e3,
                    r.curve_file.display()
                );
            }
        }
    }
    Ok(())
}
