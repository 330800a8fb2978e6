use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{AblationMode, RunConfig, StartSource};
use super::diagnostics::{energy_distance, evaluate, mean_std, replay_pairs};
use super::metrics::{write_step_log, DeploymentMetrics, RunMetrics};
use crate::dynamics_model::{rollout, DynamicsEnsemble};
use crate::environments::Env;
use crate::error::{Error, Result};
use crate::explorer::{collect_batch, novelty, CollectOptions, CollectPolicy, DataStore, GaussianPolicy};
use crate::harness::{save_config, RunDir, SeedStreams, Table};
use crate::trpo::{
    bc_init, compute_advantages, trpo_step, LabeledTrajectory, StepReport, TrpoBatch, ValueBaseline,
    MIN_BATCH_STEPS,
};
use crate::uncertainty::LabelerEnsemble;

/// Initial policy standard deviation in unit action space.
const INIT_LOG_STD: f64 = -0.5;
const BASELINE_BATCH: usize = 64;

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub policy: GaussianPolicy,
    pub dynamics: DynamicsEnsemble,
    pub labeler: LabelerEnsemble,
    pub store: DataStore,
}

/// Called after every trust-region step with the batch and the policies
/// before and after it.
pub trait StepObserver {
    fn on_step(
        &mut self,
        deployment: usize,
        batch: &TrpoBatch,
        before: &GaussianPolicy,
        after: &GaussianPolicy,
        report: &StepReport,
    );
}

impl StepObserver for () {
    fn on_step(&mut self, _: usize, _: &TrpoBatch, _: &GaussianPolicy, _: &GaussianPolicy, _: &StepReport) {}
}

#[derive(Debug, Serialize, Deserialize)]
struct Progress {
    completed: usize,
}

struct Runner<'a> {
    cfg: RunConfig,
    env: Env,
    streams: SeedStreams,
    policy: GaussianPolicy,
    dynamics: DynamicsEnsemble,
    labeler: LabelerEnsemble,
    store: DataStore,
    metrics: RunMetrics,
    dir: Option<&'a RunDir>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &RunConfig, dir: Option<&'a RunDir>) -> Result<Self> {
        cfg.validate()?;
        let env = Env::by_name(&cfg.env)?;
        let streams = SeedStreams::new(cfg.seed);
        let spec = env.spec().clone();
        let policy = GaussianPolicy::new(&spec, &cfg.policy_hidden, INIT_LOG_STD, &mut streams.stream("policy_init", 0))?;
        let dynamics = DynamicsEnsemble::new(
            spec.state_dim,
            spec.action_dim,
            &cfg.dynamics_hidden,
            cfg.ensemble_size,
            &mut streams.stream("dynamics_init", 0),
        )?;
        let mut labeler = LabelerEnsemble::new(
            spec.state_dim,
            spec.action_dim,
            &cfg.labeler_hidden,
            cfg.labeler_size,
            cfg.alpha,
            &mut streams.stream("labeler_init", 0),
        )?;
        labeler.pair_resample = cfg.pair_resample;
        Ok(Self {
            cfg: cfg.clone(),
            env,
            streams,
            policy,
            dynamics,
            labeler,
            store: DataStore::new(spec.state_dim, spec.action_dim),
            metrics: RunMetrics::default(),
            dir,
        })
    }

    fn mode(&self) -> AblationMode {
        self.cfg.ablation
    }

    fn deployment(&mut self, i: usize, observer: &mut dyn StepObserver) -> Result<()> {
        let cfg = self.cfg.clone();
        let opts = CollectOptions {
            const_noise_std: cfg.const_noise_std,
            use_zeta: self.mode().explores(),
        };
        let mut rng = self.streams.stream("collect", i as u64);
        let collected = if i == 1 {
            collect_batch(&self.env, CollectPolicy::Random, None, cfg.batch_size, &opts, &mut rng)?
        } else {
            collect_batch(
                &self.env,
                CollectPolicy::Gaussian(&self.policy),
                Some(&self.labeler),
                cfg.batch_size,
                &opts,
                &mut rng,
            )?
        };
        let (nov_min, nov_mean) = if self.store.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let prev: Vec<&[f64]> = self.store.all().iter().map(|t| t.state.as_slice()).collect();
            let cur: Vec<&[f64]> = collected.transitions.iter().map(|t| t.state.as_slice()).collect();
            let n = novelty(&cur, &prev)?;
            (n.min_pairing, n.mean_pairing)
        };
        self.store.push_batch(collected.transitions.clone())?;
        if let Some(dir) = self.dir {
            let path = dir.batch_csv(i);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            self.store.write_batch_csv(i - 1, file)?;
        }

        let data = self.store.all_cloned();
        let dyn_fit = self
            .dynamics
            .fit(&data, &cfg.model_fit, &mut self.streams.stream("dynamics_fit", i as u64))?;
        let labeler_val = if self.mode() == AblationMode::None {
            f64::NAN
        } else {
            self.labeler
                .fit(&data, &cfg.model_fit, &mut self.streams.stream("labeler_fit", i as u64))?
                .mean_val_loss()
        };

        let (steps, mean_label) = self.train_session(i, observer)?;

        let returns = evaluate(
            &self.env,
            &self.policy,
            cfg.eval_episodes,
            &mut self.streams.stream("eval", i as u64),
        )?;
        let (eval_mean, eval_std) = mean_std(&returns);
        let horizon = cfg.rollout_length.min(self.env.spec().horizon);
        let pairs = replay_pairs(
            &self.env,
            &self.dynamics,
            &self.policy,
            horizon,
            cfg.diagnostic_pairs,
            &mut self.streams.stream("diagnostics", i as u64),
        )?;
        let row = DeploymentMetrics {
            deployment: i,
            eval_return_mean: eval_mean,
            eval_return_std: eval_std,
            deploy_return_mean: mean_std(&collected.episode_returns).0,
            novelty: nov_min,
            novelty_mean_pairing: nov_mean,
            energy_distance: energy_distance(&pairs.real_states, &pairs.model_states)?,
            trajectory_mse: pairs.mse,
            mean_label,
            mean_zeta: collected.mean_zeta,
            dynamics_val_loss: dyn_fit.mean_val_loss(),
            labeler_val_loss: labeler_val,
            steps_accepted: steps.iter().filter(|s| s.step_accepted).count(),
            steps_total: steps.len(),
            transitions_total: self.store.len(),
        };
        log::info!(
            "deployment {i}: eval return {:.3} (+- {:.3}), {} / {} steps accepted",
            row.eval_return_mean,
            row.eval_return_std,
            row.steps_accepted,
            row.steps_total
        );
        self.metrics.deployments.push(row);
        self.metrics.trpo_steps.push(steps);
        self.persist(i)
    }

    fn start_states(&self) -> Vec<Vec<f64>> {
        match self.cfg.rollout_start_source {
            StartSource::All => self.store.all().iter().map(|t| t.state.clone()).collect(),
            StartSource::Newest => self
                .store
                .newest()
                .unwrap_or(&[])
                .iter()
                .map(|t| t.state.clone())
                .collect(),
        }
    }

    /// Behavioral cloning, then `training_iterations` rounds of
    /// `optimization_steps` trust-region steps on fresh fictitious rollouts
    /// from one sampled ensemble member.
    fn train_session(&mut self, i: usize, observer: &mut dyn StepObserver) -> Result<(Vec<StepReport>, f64)> {
        let cfg = self.cfg.clone();
        let newest = self.store.newest().unwrap_or(&[]).to_vec();
        bc_init(&mut self.policy, &newest, &cfg.bc_fit, &mut self.streams.stream("bc", i as u64))?;
        let mut baseline = ValueBaseline::new(
            self.env.spec().state_dim,
            &cfg.value_hidden,
            &mut self.streams.stream("baseline_init", i as u64),
        )?;
        let starts = self.start_states();
        let mut rng = self.streams.stream("train", i as u64);
        let weighted = self.mode().weights_updates();
        let mut reports = Vec::new();
        let (mut label_sum, mut label_count) = (0.0, 0usize);
        for it in 0..cfg.training_iterations {
            let member = rng.random_range(0..self.dynamics.len());
            let mut iteration_trajs: Vec<LabeledTrajectory> = Vec::new();
            for step in 0..cfg.optimization_steps {
                let mut trajs = Vec::new();
                let mut total = 0;
                let mut attempts = 0;
                while trajs.len() < cfg.rollouts_per_step || total < MIN_BATCH_STEPS {
                    if attempts >= 50 * cfg.rollouts_per_step.max(MIN_BATCH_STEPS / cfg.rollout_length + 1) {
                        return Err(Error::Numeric(format!(
                            "only {total} finite fictitious steps after {attempts} rollouts"
                        )));
                    }
                    attempts += 1;
                    let start = &starts[rng.random_range(0..starts.len())];
                    let traj = rollout(
                        &self.dynamics,
                        &self.policy,
                        &self.env,
                        std::slice::from_ref(start),
                        cfg.rollout_length,
                        Some(member),
                        &mut rng,
                    )?
                    .remove(0);
                    if !traj.is_empty() {
                        total += traj.len();
                        trajs.push(traj);
                    }
                }
                let mut labeled = if weighted {
                    trajs
                        .iter()
                        .map(|t| self.labeler.label_trajectory(t, &mut rng))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    trajs.iter().map(LabeledTrajectory::unit_labeled).collect()
                };
                compute_advantages(&mut labeled, &baseline, &cfg.trpo)?;
                let batch = if weighted {
                    TrpoBatch::weighted(&labeled, &self.policy)?
                } else {
                    TrpoBatch::unweighted(&labeled, &self.policy)?
                };
                let before = self.policy.clone();
                let mut report = trpo_step(&mut self.policy, &batch, &cfg.trpo)?;
                report.iteration = it * cfg.optimization_steps + step;
                observer.on_step(i, &batch, &before, &self.policy, &report);
                for t in &labeled {
                    label_sum += t.labels.iter().sum::<f64>();
                    label_count += t.len();
                }
                reports.push(report);
                iteration_trajs.extend(labeled);
            }
            baseline.fit(&iteration_trajs, cfg.baseline_epochs, cfg.baseline_lr, BASELINE_BATCH, &mut rng)?;
        }
        let mean_label = if label_count > 0 {
            label_sum / label_count as f64
        } else {
            f64::NAN
        };
        Ok((reports, mean_label))
    }

    fn persist(&self, i: usize) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        write_atomic(&dir.checkpoint("policy", i), &self.policy.to_bytes())?;
        write_atomic(&dir.checkpoint("dynamics", i), &self.dynamics.to_bytes())?;
        write_atomic(&dir.checkpoint("labeler", i), &self.labeler.to_bytes())?;
        write_atomic(&dir.store_binary(), &self.store.to_binary())?;
        let mut log = Vec::new();
        write_step_log(self.metrics.trpo_steps.last().map(Vec::as_slice).unwrap_or(&[]), &mut log)?;
        write_atomic(&dir.trpo_log(i), &log)?;
        write_atomic(&dir.metrics(), self.metrics.to_csv().as_bytes())?;
        let progress = serde_json::to_vec(&Progress { completed: i }).expect("progress serializes");
        write_atomic(&dir.progress(), &progress)
    }

    fn drive(&mut self, first: usize, observer: &mut dyn StepObserver) -> Result<()> {
        for i in first..=self.cfg.deployments {
            if let Err(e) = self.deployment(i, observer) {
                if let Some(dir) = self.dir {
                    let note = format!("deployment {i} failed: {e}\nresume with the same run directory\n");
                    let _ = fs::write(dir.root().join("halted.txt"), note);
                }
                return Err(e);
            }
        }
        Ok(())
    }

    fn finish(self) -> RunOutcome {
        RunOutcome {
            metrics: self.metrics,
            policy: self.policy,
            dynamics: self.dynamics,
            labeler: self.labeler,
            store: self.store,
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs every deployment in memory without touching the filesystem.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    run_observed(cfg, None, &mut ())
}

/// Runs every deployment, persisting the config snapshot, batches,
/// checkpoints, TRPO logs and metrics under `dir`.
pub fn run_in(cfg: &RunConfig, dir: &RunDir) -> Result<RunOutcome> {
    run_observed(cfg, Some(dir), &mut ())
}

pub fn run_observed(cfg: &RunConfig, dir: Option<&RunDir>, observer: &mut dyn StepObserver) -> Result<RunOutcome> {
    let mut runner = Runner::new(cfg, dir)?;
    if let Some(dir) = dir {
        save_config(&runner.cfg, &dir.config())?;
    }
    runner.drive(1, observer)?;
    Ok(runner.finish())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_step_log(path: &Path) -> Result<Vec<StepReport>> {
    let text = String::from_utf8(read(path)?).map_err(|e| Error::Parse(e.to_string()))?;
    let table = Table::parse(&text)?;
    Ok(table
        .rows
        .iter()
        .map(|r| StepReport {
            iteration: r[0] as usize,
            surrogate_before: r[1],
            surrogate_after: r[2],
            kl: r[3],
            step_accepted: r[4] != 0.0,
            mean_label: r[5],
            backtracks: 0,
            diagnostic: None,
        })
        .collect())
}

/// Continues a halted run from its last completed deployment.
pub fn resume(dir: &RunDir) -> Result<RunOutcome> {
    let cfg = crate::harness::load_config(&dir.config())?;
    let progress: Progress = match fs::read(dir.progress()) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("progress.json: {e}")))?,
        Err(_) => Progress { completed: 0 },
    };
    let mut runner = Runner::new(&cfg, Some(dir))?;
    let k = progress.completed;
    if k > 0 {
        runner.policy = GaussianPolicy::from_bytes(&read(&dir.checkpoint("policy", k))?)?;
        runner.dynamics = DynamicsEnsemble::from_bytes(&read(&dir.checkpoint("dynamics", k))?)?;
        let mut labeler = LabelerEnsemble::from_bytes(&read(&dir.checkpoint("labeler", k))?)?;
        labeler.pair_resample = cfg.pair_resample;
        runner.labeler = labeler;
        let mut store = DataStore::from_binary(&read(&dir.store_binary())?)?;
        if store.num_batches() != k {
            return Err(Error::State(format!(
                "stored data has {} batches but {k} deployments completed",
                store.num_batches()
            )));
        }
        std::mem::swap(&mut runner.store, &mut store);
        let text = String::from_utf8(read(&dir.metrics())?).map_err(|e| Error::Parse(e.to_string()))?;
        let mut metrics = RunMetrics::from_csv(&text)?;
        metrics.deployments.truncate(k);
        for d in 1..=k {
            metrics.trpo_steps.push(read_step_log(&dir.trpo_log(d))?);
        }
        runner.metrics = metrics;
    }
    let _ = fs::remove_file(dir.root().join("halted.txt"));
    runner.drive(k + 1, &mut ())?;
    Ok(runner.finish())
}
