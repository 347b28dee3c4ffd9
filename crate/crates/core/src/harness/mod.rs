//! Experiment orchestration: episodes, trials and multi-seed aggregates.
//!
//! A trial owns one agent, one environment, one replay buffer and one
//! random stream, all derived from the trial seed, and runs its episodes
//! strictly in order. Trials share nothing, so an experiment runs them on a
//! worker pool and writes one CSV per trial.

mod config;
pub mod metrics;

pub use config::{parse_assignments, CircuitPreset, ConfigError, ExperimentConfig, Preset};
pub use metrics::{mean_std, moving_average, moving_averages, solved_at};

use crate::agent::{AgentError, AngcAgent};
use crate::checkpoint::{self, AgentCheckpoint, CheckpointError, RngState, TrialCheckpoint};
use crate::envs::{EnvError, Environment};
use crate::replay::{ReplayBuffer, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "episode,return,combined_return,moving_avg,epsilon,steps";
pub const AGGREGATE_HEADER: &str = "episode,mean_mu,std_mu";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("episode {episode}, step {step}: {source}")]
    Agent {
        episode: usize,
        step: usize,
        #[source]
        source: AgentError,
    },
    #[error("episode {episode}, step {step}: {source}")]
    Env {
        episode: usize,
        step: usize,
        #[source]
        source: EnvError,
    },
    #[error("trial with seed {seed}: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    /// Sum of environment rewards.
    pub external_return: f64,
    /// Sum of the combined rewards that were stored for learning.
    pub combined_return: f64,
    /// Moving average of `external_return`.
    pub moving_avg: f64,
    /// ε after the end-of-episode decay.
    pub epsilon: f64,
    pub steps: usize,
}

impl EpisodeRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.episode, self.external_return, self.combined_return, self.moving_avg, self.epsilon, self.steps
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub solved_at: Option<usize>,
}

impl TrialResult {
    pub fn returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.external_return).collect()
    }

    pub fn to_csv(&self) -> String {
        records_csv(&self.records)
    }
}

pub fn records_csv(records: &[EpisodeRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Parses a per-trial CSV back into records.
pub fn parse_records_csv(text: &str) -> Result<Vec<EpisodeRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(format!("expected 6 fields in `{l}`"));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("`{}`: {e}", f[i]));
            let int = |i: usize| f[i].parse::<usize>().map_err(|e| format!("`{}`: {e}", f[i]));
            Ok(EpisodeRecord {
                episode: int(0)?,
                external_return: num(1)?,
                combined_return: num(2)?,
                moving_avg: num(3)?,
                epsilon: num(4)?,
                steps: int(5)?,
            })
        })
        .collect()
}

/// What one episode produced, before the moving average is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub external_return: f64,
    pub combined_return: f64,
    pub steps: usize,
    pub epsilon: f64,
}

/// Plays one episode: act, observe, score surprise, store, learn; then
/// decays ε. `episode` is only used for error context.
pub fn run_episode<R: Rng>(
    agent: &mut AngcAgent,
    env: &mut dyn Environment,
    buffer: &mut ReplayBuffer,
    rng: &mut R,
    learn: bool,
    episode: usize,
) -> Result<EpisodeOutcome, HarnessError> {
    let mut obs = env.reset(rng.gen());
    let mut out = EpisodeOutcome {
        external_return: 0.0,
        combined_return: 0.0,
        steps: 0,
        epsilon: agent.epsilon(),
    };
    loop {
        let step = out.steps + 1;
        let agent_err = |source| HarnessError::Agent { episode, step, source };
        let action = agent.select_action(&obs, rng).map_err(agent_err)?;
        let result = env
            .step(action)
            .map_err(|source| HarnessError::Env { episode, step, source })?;
        let r_ep = agent
            .epistemic_reward(&obs, action, &result.next_obs)
            .map_err(agent_err)?;
        let reward = agent.combine_rewards(r_ep, result.reward);
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward,
            next_obs: result.next_obs.clone(),
            done: result.done,
        });
        if learn {
            agent.learn_step(buffer, rng).map_err(agent_err)?;
        }
        out.external_return += result.reward;
        out.combined_return += reward;
        out.steps = step;
        let finished = result.finished();
        obs = result.next_obs;
        if finished {
            break;
        }
    }
    agent.decay_epsilon();
    out.epsilon = agent.epsilon();
    Ok(out)
}

/// A trial in progress.
pub struct Trial<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    agent: AngcAgent,
    env: Box<dyn Environment>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    records: Vec<EpisodeRecord>,
}

impl<'a> Trial<'a> {
    pub fn new(cfg: &'a ExperimentConfig, seed: u64) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = cfg.env_spec();
        let agent = AngcAgent::new(cfg.agent.clone(), spec.obs_dim, spec.n_actions, rng.gen()).map_err(|source| {
            HarnessError::Agent {
                episode: 0,
                step: 0,
                source,
            }
        })?;
        Ok(Self {
            cfg,
            seed,
            agent,
            env: cfg.env.make(cfg.max_steps),
            buffer: ReplayBuffer::new(cfg.agent.replay_capacity),
            rng,
            records: Vec::new(),
        })
    }

    /// Continues a trial from a checkpoint taken at an episode boundary.
    pub fn resume(cfg: &'a ExperimentConfig, state: TrialCheckpoint) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let TrialCheckpoint {
            checkpoint,
            buffer,
            records,
        } = state;
        Ok(Self {
            cfg,
            seed: checkpoint.seed,
            agent: checkpoint.agent,
            env: cfg.env.make(cfg.max_steps),
            buffer,
            rng: checkpoint.rng.restore(),
            records,
        })
    }

    pub fn agent(&self) -> &AngcAgent {
        &self.agent
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn episodes_done(&self) -> usize {
        self.records.len()
    }

    pub fn run_next_episode(&mut self) -> Result<&EpisodeRecord, HarnessError> {
        let episode = self.records.len() + 1;
        let out = run_episode(
            &mut self.agent,
            self.env.as_mut(),
            &mut self.buffer,
            &mut self.rng,
            self.cfg.learn,
            episode,
        )?;
        let prev = self.records.last().map(|r| r.moving_avg);
        self.records.push(EpisodeRecord {
            episode,
            external_return: out.external_return,
            combined_return: out.combined_return,
            moving_avg: moving_average(prev, out.external_return),
            epsilon: out.epsilon,
            steps: out.steps,
        });
        Ok(self.records.last().unwrap())
    }

    pub fn agent_checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            env: self.cfg.env,
            max_steps: self.cfg.max_steps,
            seed: self.seed,
            agent: self.agent.clone(),
            rng: RngState::capture(&self.rng),
        }
    }

    pub fn checkpoint(&self) -> TrialCheckpoint {
        TrialCheckpoint {
            checkpoint: self.agent_checkpoint(),
            buffer: self.buffer.clone(),
            records: self.records.clone(),
        }
    }

    pub fn result(&self) -> TrialResult {
        let returns: Vec<f64> = self.records.iter().map(|r| r.external_return).collect();
        TrialResult {
            seed: self.seed,
            solved_at: solved_at(&returns, self.cfg.env_spec().solve_threshold),
            records: self.records.clone(),
        }
    }

    /// Runs the remaining episodes. With an output directory, checkpoints
    /// land in `<dir>/checkpoints/<stem>_ep<k>.json` and the final agent in
    /// `<dir>/<stem>_final.json`.
    pub fn run_to_end(&mut self, files: Option<(&Path, &str)>) -> Result<TrialResult, HarnessError> {
        while self.records.len() < self.cfg.episodes {
            let rec = self.run_next_episode()?.clone();
            if self.cfg.log_every > 0 && rec.episode % self.cfg.log_every == 0 {
                log::info!(
                    "seed {} episode {}: return {} mu {:.3} eps {:.3} steps {}",
                    self.seed,
                    rec.episode,
                    rec.external_return,
                    rec.moving_avg,
                    rec.epsilon,
                    rec.steps
                );
            }
            if let Some((dir, stem)) = files {
                if self.cfg.checkpoint_every > 0 && rec.episode % self.cfg.checkpoint_every == 0 {
                    let path = dir.join("checkpoints").join(format!("{stem}_ep{}.json", rec.episode));
                    checkpoint::save(&path, &self.checkpoint())?;
                    write_file(&dir.join(format!("{stem}.csv")), &records_csv(&self.records))?;
                }
            }
        }
        if let Some((dir, stem)) = files {
            write_file(&dir.join(format!("{stem}.csv")), &records_csv(&self.records))?;
            checkpoint::save(&dir.join(format!("{stem}_final.json")), &self.agent_checkpoint())?;
        }
        Ok(self.result())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// File stem for trial `index`.
pub fn trial_stem(index: usize, seed: u64) -> String {
    format!("trial_{index:02}_seed{seed}")
}

/// One fresh trial without any file output.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialResult, HarnessError> {
    Trial::new(cfg, seed)?.run_to_end(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub episode: usize,
    pub mean_mu: f64,
    pub std_mu: f64,
}

/// Per-episode mean and population std of the moving average across trials.
pub fn aggregate(trials: &[&TrialResult]) -> Vec<AggregateRow> {
    let episodes = trials.iter().map(|t| t.records.len()).min().unwrap_or(0);
    (0..episodes)
        .map(|e| {
            let mus: Vec<f64> = trials.iter().map(|t| t.records[e].moving_avg).collect();
            let (mean_mu, std_mu) = mean_std(&mus);
            AggregateRow {
                episode: e + 1,
                mean_mu,
                std_mu,
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.episode, r.mean_mu, r.std_mu);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: usize,
    pub seed: u64,
    pub episodes: usize,
    pub solved_at: Option<usize>,
    pub final_moving_avg: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub env: String,
    pub solve_threshold: f64,
    pub trials: Vec<TrialSummary>,
    pub n_solved: usize,
    pub mean_solved_at: Option<f64>,
    pub std_solved_at: Option<f64>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub trials: Vec<Result<TrialResult, HarnessError>>,
    pub aggregate: Vec<AggregateRow>,
    pub summary: ExperimentSummary,
}

/// Runs every trial (up to `workers` at a time). A failing trial is
/// recorded in the summary and the others carry on.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    use rayon::prelude::*;
    cfg.validate()?;
    if let Some(dir) = &cfg.output_dir {
        write_file(&dir.join("config.txt"), &cfg.to_assignments())?;
    }
    let run_one = |(index, &seed): (usize, &u64)| -> Result<TrialResult, HarnessError> {
        let stem = trial_stem(index, seed);
        let files = cfg.output_dir.as_deref().map(|d| (d, stem.as_str()));
        Trial::new(cfg, seed)
            .and_then(|mut t| t.run_to_end(files))
            .map_err(|e| HarnessError::Trial {
                seed,
                source: Box::new(e),
            })
    };
    let trials: Vec<Result<TrialResult, HarnessError>> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .expect("thread pool");
        pool.install(|| cfg.seeds.par_iter().enumerate().map(run_one).collect())
    } else {
        cfg.seeds.iter().enumerate().map(run_one).collect()
    };

    let ok: Vec<&TrialResult> = trials.iter().filter_map(|t| t.as_ref().ok()).collect();
    let rows = aggregate(&ok);
    let summary = summarize(cfg, &trials);
    if let Some(dir) = &cfg.output_dir {
        write_file(&dir.join("aggregate.csv"), &aggregate_csv(&rows))?;
        let json = serde_json::to_string_pretty(&summary).expect("summary is plain data");
        write_file(&dir.join("summary.json"), &(json + "\n"))?;
    }
    Ok(ExperimentOutcome {
        trials,
        aggregate: rows,
        summary,
    })
}

fn summarize(cfg: &ExperimentConfig, trials: &[Result<TrialResult, HarnessError>]) -> ExperimentSummary {
    let rows: Vec<TrialSummary> = trials
        .iter()
        .enumerate()
        .map(|(index, t)| match t {
            Ok(t) => TrialSummary {
                index,
                seed: t.seed,
                episodes: t.records.len(),
                solved_at: t.solved_at,
                final_moving_avg: t.records.last().map(|r| r.moving_avg),
                error: None,
            },
            Err(e) => TrialSummary {
                index,
                seed: cfg.seeds[index],
                episodes: 0,
                solved_at: None,
                final_moving_avg: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let solved: Vec<f64> = rows.iter().filter_map(|r| r.solved_at.map(|s| s as f64)).collect();
    let (mean, std) = if solved.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&solved);
        (Some(m), Some(s))
    };
    ExperimentSummary {
        env: cfg.env.to_string(),
        solve_threshold: cfg.env_spec().solve_threshold,
        n_solved: solved.len(),
        trials: rows,
        mean_solved_at: mean,
        std_solved_at: std,
    }
}

/// Greedy (ε = 0) evaluation without learning. Returns each episode's
/// external return.
pub fn evaluate(ckpt: &AgentCheckpoint, episodes: usize, seed: u64) -> Result<Vec<f64>, HarnessError> {
    let mut agent = ckpt.agent.clone();
    agent.set_epsilon(0.0);
    let mut env = ckpt.env.make(ckpt.max_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for episode in 1..=episodes {
        let mut obs = env.reset(rng.gen());
        let mut total = 0.0;
        let mut step = 0;
        loop {
            step += 1;
            let action = agent
                .select_action(&obs, &mut rng)
                .map_err(|source| HarnessError::Agent { episode, step, source })?;
            let r = env
                .step(action)
                .map_err(|source| HarnessError::Env { episode, step, source })?;
            total += r.reward;
            obs = r.next_obs;
            if r.done || r.truncated {
                break;
            }
        }
        returns.push(total);
    }
    Ok(returns)
}
