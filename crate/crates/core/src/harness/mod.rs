//! Experiment harness: trajectory logs, episode metrics, seed sweeps and
//! summary tables.

mod log;
mod metrics;
mod suite;

pub use log::{read_jsonl, rollout_episode, write_jsonl, EpisodeLog, StepRecord};
pub use metrics::{compute_metrics, mean_sd, MetricsRecord};
pub use suite::{
    evaluate, final_window_reward, resolve_config, run_dir, run_single, run_suite, summarize_run, sweep_diffusion_steps,
    parse_seeds, time_sampling, write_summary, ResolvedConfig, RunConfig, RunResult, RunSummary, SweepRun, BUILD_TAG, SUMMARY_HEADER,
};
