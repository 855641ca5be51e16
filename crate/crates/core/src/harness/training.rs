//! Training loop with run control.
//!
//! Commands (pause, resume, evaluate, stop) are queued on a channel and
//! applied only between control steps, so a command issued while a step is
//! running takes effect before the next one.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};

use crate::agents::Agent;
use crate::env::{MountainCarEnv, RunLifecycle};
use crate::error::{Error, Result};

use super::episode::{run_episode, Episode, EpisodeOptions};
use super::telemetry::{layout, EpisodeRecord, RunWriter, TelemetrySample};
use super::{build_agent, derive_seed, RunConfig, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Pause,
    Resume,
    /// Run one greedy episode with a snapshot of the current agent.
    Evaluate,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// 1-based evaluation number; the trace is stored as `evals/{index}.jsonl`.
    pub index: u64,
    pub record: EpisodeRecord,
}

/// Acknowledgement of an applied command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    /// Lifecycle state the command leads to.
    pub state: RunLifecycle,
    /// Global step count when the command was issued.
    pub issued_step: u64,
    /// Global step count when the loop applied it.
    pub applied_step: u64,
    pub evaluation: Option<EvalOutcome>,
}

pub type Reply = Box<dyn FnOnce(Result<CommandOutcome>) + Send>;

struct Envelope {
    command: Command,
    issued_step: u64,
    reply: Option<Reply>,
}

/// Live state of a run, shared between the loop and its controllers.
#[derive(Debug)]
pub struct RunStatus {
    lifecycle: Mutex<RunLifecycle>,
    steps: AtomicU64,
    episodes: AtomicU64,
    evaluations: AtomicU64,
}

impl Default for RunStatus {
    fn default() -> Self {
        Self {
            lifecycle: Mutex::new(RunLifecycle::Idle),
            steps: AtomicU64::new(0),
            episodes: AtomicU64::new(0),
            evaluations: AtomicU64::new(0),
        }
    }
}

impl RunStatus {
    pub fn lifecycle(&self) -> RunLifecycle {
        *self.lifecycle.lock().expect("lifecycle lock")
    }

    fn set_lifecycle(&self, state: RunLifecycle) {
        *self.lifecycle.lock().expect("lifecycle lock") = state;
    }

    /// Training steps taken so far, across all episodes.
    pub fn steps(&self) -> u64 {
        self.steps.load(Ordering::SeqCst)
    }

    pub fn episodes(&self) -> u64 {
        self.episodes.load(Ordering::SeqCst)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }
}

/// Sending side of a run's command queue.
#[derive(Clone)]
pub struct RunControl {
    tx: Sender<Envelope>,
    status: Arc<RunStatus>,
}

/// Receiving side, handed to [`run_training`].
pub struct ControlReceiver {
    rx: Receiver<Envelope>,
    status: Arc<RunStatus>,
}

pub fn control_channel() -> (RunControl, ControlReceiver) {
    let (tx, rx) = mpsc::channel();
    let status = Arc::new(RunStatus::default());
    (
        RunControl {
            tx,
            status: status.clone(),
        },
        ControlReceiver { rx, status },
    )
}

impl RunControl {
    pub fn status(&self) -> &Arc<RunStatus> {
        &self.status
    }

    /// Queue `command`; `reply` is called once the loop has applied it.
    /// Fails when the run has already ended.
    pub fn send(&self, command: Command, reply: Option<Reply>) -> Result<()> {
        let envelope = Envelope {
            command,
            issued_step: self.status.steps(),
            reply,
        };
        self.tx.send(envelope).map_err(|e| {
            let envelope = e.0;
            let err = || Error::IllegalTransition {
                from: RunLifecycle::Finished.to_string(),
                to: format!("{:?}", envelope.command).to_lowercase(),
            };
            if let Some(reply) = envelope.reply {
                reply(Err(err()));
            }
            err()
        })
    }

    /// Queue `command` and block until it is applied.
    pub fn request(&self, command: Command) -> Result<CommandOutcome> {
        let (tx, rx) = mpsc::channel();
        self.send(
            command,
            Some(Box::new(move |outcome| {
                let _ = tx.send(outcome);
            })),
        )?;
        rx.recv().unwrap_or_else(|_| {
            Err(Error::IllegalTransition {
                from: RunLifecycle::Finished.to_string(),
                to: format!("{command:?}").to_lowercase(),
            })
        })
    }
}

/// Hooks for live consumers of a run. Persistence is handled separately
/// and never drops data.
pub trait RunObserver {
    fn on_sample(&mut self, _sample: &TelemetrySample) {}
    fn on_episode(&mut self, _record: &EpisodeRecord) {}
    fn on_evaluation(&mut self, _outcome: &EvalOutcome, _trace: &[TelemetrySample]) {}
    fn on_lifecycle(&mut self, _state: RunLifecycle) {}
}

impl RunObserver for () {}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    /// Completed episodes, in order.
    pub curve: Vec<EpisodeRecord>,
    pub evaluations: Vec<EvalOutcome>,
    /// True when a stop command ended the run early.
    pub stopped: bool,
}

enum Flow {
    Continue,
    Stop,
}

struct Trainer<'a> {
    config: &'a RunConfig,
    env: MountainCarEnv,
    agent: Box<dyn Agent>,
    writer: Option<RunWriter>,
    control: Option<ControlReceiver>,
    status: Arc<RunStatus>,
    observer: &'a mut dyn RunObserver,
    dump_steps: HashSet<u64>,
    report: TrainingReport,
}

impl<'a> Trainer<'a> {
    fn new(
        config: &'a RunConfig,
        control: Option<ControlReceiver>,
        observer: &'a mut dyn RunObserver,
    ) -> Result<Self> {
        config.validate()?;
        let env = MountainCarEnv::new(config.env.clone(), derive_seed(config.seed, SeedStream::Perception))?;
        let agent = build_agent(config)?;
        let writer = config
            .out_dir
            .as_deref()
            .map(|dir| RunWriter::create(dir, &config.to_kv_string()))
            .transpose()?;
        if let Some(dir) = &config.dump_dir {
            std::fs::create_dir_all(dir).map_err(|source| Error::OutputUnwritable {
                path: dir.display().to_string(),
                source,
            })?;
        }
        let status = control
            .as_ref()
            .map(|c| c.status.clone())
            .unwrap_or_default();
        Ok(Self {
            config,
            env,
            agent,
            writer,
            control,
            status,
            observer,
            dump_steps: config.dump_steps.iter().copied().collect(),
            report: TrainingReport::default(),
        })
    }

    fn set_lifecycle(&mut self, to: RunLifecycle) -> Result<()> {
        let next = self.status.lifecycle().transition(to)?;
        self.status.set_lifecycle(next);
        self.observer.on_lifecycle(next);
        Ok(())
    }

    fn outcome(&self, issued_step: u64, state: RunLifecycle) -> CommandOutcome {
        CommandOutcome {
            state,
            issued_step,
            applied_step: self.status.steps(),
            evaluation: None,
        }
    }

    /// Apply every queued command. Blocks while paused.
    fn service_commands(&mut self) -> Result<Flow> {
        loop {
            let Some(control) = &self.control else {
                return Ok(Flow::Continue);
            };
            let paused = self.status.lifecycle() == RunLifecycle::Paused;
            let envelope = if paused {
                if let Some(w) = self.writer.as_mut() {
                    w.flush()?;
                }
                match control.rx.recv() {
                    Ok(e) => e,
                    // Nobody can resume a paused run whose controllers are gone.
                    Err(_) => return Ok(Flow::Stop),
                }
            } else {
                match control.rx.try_recv() {
                    Ok(e) => e,
                    Err(TryRecvError::Empty) => return Ok(Flow::Continue),
                    Err(TryRecvError::Disconnected) => {
                        self.control = None;
                        return Ok(Flow::Continue);
                    }
                }
            };
            if let Flow::Stop = self.apply(envelope)? {
                return Ok(Flow::Stop);
            }
        }
    }

    fn apply(&mut self, envelope: Envelope) -> Result<Flow> {
        let Envelope {
            command,
            issued_step,
            reply,
        } = envelope;
        let respond = |outcome: Result<CommandOutcome>| {
            if let Some(reply) = reply {
                reply(outcome);
            }
        };
        match command {
            Command::Pause | Command::Resume => {
                let to = if command == Command::Pause {
                    RunLifecycle::Paused
                } else {
                    RunLifecycle::Learning
                };
                match self.set_lifecycle(to) {
                    Ok(()) => respond(Ok(self.outcome(issued_step, to))),
                    Err(e) => respond(Err(e)),
                }
                Ok(Flow::Continue)
            }
            Command::Stop => {
                respond(Ok(self.outcome(issued_step, RunLifecycle::Finished)));
                Ok(Flow::Stop)
            }
            Command::Evaluate => {
                let prior = self.status.lifecycle();
                if let Err(e) = self.set_lifecycle(RunLifecycle::Evaluating) {
                    respond(Err(e));
                    return Ok(Flow::Continue);
                }
                let mut outcome = self.outcome(issued_step, prior);
                let (evaluation, after, flow) = self.evaluate(prior)?;
                outcome.evaluation = evaluation;
                outcome.state = after;
                respond(Ok(outcome));
                Ok(flow)
            }
        }
    }

    /// One greedy episode on a separate rig instance, so the interrupted
    /// training episode resumes untouched. Pause and resume received
    /// meanwhile choose the state entered afterwards.
    fn evaluate(&mut self, prior: RunLifecycle) -> Result<(Option<EvalOutcome>, RunLifecycle, Flow)> {
        let index = self.status.evaluations() + 1;
        let seed = derive_seed(derive_seed(self.config.seed, SeedStream::Evaluation), index);
        let mut env = MountainCarEnv::new(self.config.env.clone(), seed)?;
        let mut agent = self.agent.boxed_clone();
        let mut episode = Episode::begin(&mut env, EpisodeOptions::evaluation(index, self.config.env.step_cap))?;
        let mut trace = Vec::new();
        let mut after = prior;
        let mut flow = Flow::Continue;

        'run: while !episode.is_done() {
            while let Some(envelope) = self.control.as_ref().and_then(|c| c.rx.try_recv().ok()) {
                let result = match envelope.command {
                    Command::Pause => {
                        after = RunLifecycle::Paused;
                        Ok(self.outcome(envelope.issued_step, after))
                    }
                    Command::Resume => {
                        after = RunLifecycle::Learning;
                        Ok(self.outcome(envelope.issued_step, after))
                    }
                    Command::Stop => {
                        flow = Flow::Stop;
                        Ok(self.outcome(envelope.issued_step, RunLifecycle::Finished))
                    }
                    Command::Evaluate => Err(Error::IllegalTransition {
                        from: RunLifecycle::Evaluating.to_string(),
                        to: RunLifecycle::Evaluating.to_string(),
                    }),
                };
                if let Some(reply) = envelope.reply {
                    reply(result);
                }
                if let Flow::Stop = flow {
                    break 'run;
                }
            }
            trace.push(episode.step(&mut env, agent.as_mut())?);
        }

        if let Flow::Stop = flow {
            return Ok((None, RunLifecycle::Finished, flow));
        }
        let outcome = EvalOutcome {
            index,
            record: episode.record(),
        };
        if let Some(writer) = &self.writer {
            writer.eval_trace(index, &trace)?;
        }
        self.status.evaluations.store(index, Ordering::SeqCst);
        self.observer.on_evaluation(&outcome, &trace);
        self.report.evaluations.push(outcome.clone());
        self.set_lifecycle(after)?;
        Ok((Some(outcome), after, flow))
    }

    fn dump_frame(&self, global_step: u64) -> Result<()> {
        if let Some(dir) = &self.config.dump_dir {
            if self.dump_steps.contains(&global_step) {
                let path = dir.join(format!("frame_{global_step:08}.ppm"));
                self.env.perception().frame().write_ppm(&path)?;
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<TrainingReport> {
        self.set_lifecycle(RunLifecycle::Learning)?;
        let step_cap = self.config.env.step_cap;
        'episodes: for index in 1..=self.config.episodes {
            let mut episode = Episode::begin(&mut self.env, EpisodeOptions::training(index, step_cap))?;
            while !episode.is_done() {
                if let Flow::Stop = self.service_commands()? {
                    self.report.stopped = true;
                    break 'episodes;
                }
                let sample = episode.step(&mut self.env, self.agent.as_mut())?;
                let global = self.status.steps.fetch_add(1, Ordering::SeqCst) + 1;
                self.dump_frame(global)?;
                if let Some(w) = self.writer.as_mut() {
                    w.sample(&sample)?;
                }
                self.observer.on_sample(&sample);
            }
            let record = episode.record();
            if let Some(w) = self.writer.as_mut() {
                w.episode(&record)?;
            }
            self.status.episodes.store(index, Ordering::SeqCst);
            self.observer.on_episode(&record);
            self.report.curve.push(record);
        }
        self.finish()
    }

    fn finish(mut self) -> Result<TrainingReport> {
        if let Some(writer) = self.writer.as_mut() {
            writer.flush()?;
            if let Some(weights) = self.agent.weights() {
                weights.save(&writer.dir().join(layout::WEIGHTS))?;
            }
        }
        self.set_lifecycle(RunLifecycle::Finished)?;
        Ok(self.report)
    }
}

/// Train for `config.episodes` episodes with one persistent agent.
///
/// With an output directory the run writes `config.snapshot`,
/// `telemetry.jsonl`, `curve.csv`, evaluation traces under `evals/` and,
/// for learning agents, the final `qweights.bin`.
pub fn run_training(
    config: &RunConfig,
    control: Option<ControlReceiver>,
    observer: &mut dyn RunObserver,
) -> Result<TrainingReport> {
    Trainer::new(config, control, observer)?.run()
}

/// Run `config.episodes` greedy episodes without learning, typically with a
/// checkpoint loaded through `eval.checkpoint`. Persists the same files as
/// [`run_training`].
pub fn run_evaluation(config: &RunConfig, observer: &mut dyn RunObserver) -> Result<TrainingReport> {
    config.validate()?;
    let mut env = MountainCarEnv::new(
        config.env.clone(),
        derive_seed(derive_seed(config.seed, SeedStream::Evaluation), 0u64),
    )?;
    let mut agent = build_agent(config)?;
    let mut writer = config
        .out_dir
        .as_deref()
        .map(|dir| RunWriter::create(dir, &config.to_kv_string()))
        .transpose()?;
    let mut report = TrainingReport::default();
    for index in 1..=config.episodes {
        let record = run_episode(
            &mut env,
            agent.as_mut(),
            EpisodeOptions::evaluation(index, config.env.step_cap),
            |sample| {
                if let Some(w) = writer.as_mut() {
                    w.sample(sample)?;
                }
                observer.on_sample(sample);
                Ok(())
            },
        )?;
        if let Some(w) = writer.as_mut() {
            w.episode(&record)?;
        }
        observer.on_episode(&record);
        report.curve.push(record);
    }
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }
    Ok(report)
}
