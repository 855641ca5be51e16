use std::path::Path;
use std::thread;
use std::time::Duration;

use mcar_core::agents::{Agent, QWeights};
use mcar_core::env::{Action, DoneReason, EnvConfig, MountainCarEnv, Observation, RunLifecycle};
use mcar_core::harness::{
    control_channel, layout, read_curve, read_telemetry, run_episode, run_evaluation, run_training, AgentKind,
    Command, EpisodeOptions, EpisodeRecord, RunConfig, RunObserver, TelemetrySample, CURVE_HEADER,
};
use mcar_core::Error;

/// Pushes along the estimated velocity, so it pumps energy deterministically.
#[derive(Clone)]
struct Pumper;

impl Agent for Pumper {
    fn name(&self) -> &'static str {
        "pumper"
    }
    fn act(&mut self, obs: &Observation, _greedy: bool) -> mcar_core::Result<Action> {
        Ok(if obs.v_est >= 0.0 { Action::Left } else { Action::Right })
    }
    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[derive(Clone)]
struct Constant(Action);

impl Agent for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn act(&mut self, _obs: &Observation, _greedy: bool) -> mcar_core::Result<Action> {
        Ok(self.0)
    }
    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

fn without_wall_time(records: &[EpisodeRecord]) -> Vec<(u64, u64, u64, DoneReason)> {
    records
        .iter()
        .map(|r| (r.episode, r.steps, r.ret.to_bits(), r.done_reason))
        .collect()
}

#[test]
fn goal_episode_return_counts_steps() {
    let mut env = MountainCarEnv::new(EnvConfig::default(), 1).unwrap();
    let mut samples = Vec::new();
    let record = run_episode(&mut env, &mut Pumper, EpisodeOptions::training(1, 12_000), |s| {
        samples.push(s.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(record.done_reason, DoneReason::Goal);
    assert_eq!(record.ret, -(record.steps as f64));
    assert_eq!(samples.len() as u64, record.steps);
    assert!(env.true_state().x <= -80.0);
    for (i, s) in samples.iter().enumerate() {
        assert_eq!(s.step, i as u64 + 1);
        assert_eq!(s.ret, -(s.step as f64));
        assert_eq!(s.reward, -1.0);
    }
}

#[test]
fn constant_push_times_out() {
    let mut env = MountainCarEnv::new(EnvConfig::default(), 1).unwrap();
    for action in Action::ALL {
        let record = run_episode(&mut env, &mut Constant(action), EpisodeOptions::training(1, 3000), |_| Ok(())).unwrap();
        assert_eq!(record.done_reason, DoneReason::Timeout);
        assert_eq!(record.steps, 3000);
        assert_eq!(record.ret, -3000.0);
    }
}

fn small_config(agent: AgentKind, episodes: u64, cap: u64, seed: u64) -> RunConfig {
    let mut config = RunConfig { agent, episodes, seed, ..RunConfig::default() };
    config.env.step_cap = cap;
    config
}

#[derive(Default)]
struct Trace(Vec<(u64, u64)>);

impl RunObserver for Trace {
    fn on_sample(&mut self, s: &TelemetrySample) {
        self.0.push((s.x_est.to_bits(), s.v_est.to_bits()));
    }
}

#[test]
fn same_seed_same_run() {
    for agent in [AgentKind::Reference, AgentKind::QLearning] {
        let config = small_config(agent, 3, 2000, 42);
        let (mut ta, mut tb, mut tc) = (Trace::default(), Trace::default(), Trace::default());
        let a = run_training(&config, None, &mut ta).unwrap();
        let b = run_training(&config, None, &mut tb).unwrap();
        assert_eq!(without_wall_time(&a.curve), without_wall_time(&b.curve));
        assert_eq!(ta.0, tb.0);
        run_training(&small_config(agent, 3, 2000, 43), None, &mut tc).unwrap();
        assert_ne!(ta.0, tc.0);
    }
}

#[test]
fn reference_run_writes_curve_without_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(AgentKind::Reference, 5, 3000, 7);
    config.out_dir = Some(dir.path().to_path_buf());
    let report = run_training(&config, None, &mut ()).unwrap();
    assert_eq!(report.curve.len(), 5);
    let curve = read_curve(&dir.path().join(layout::CURVE)).unwrap();
    assert_eq!(curve.len(), 5);
    for (row, rec) in curve.iter().zip(&report.curve) {
        assert_eq!((row.episode, row.steps, row.ret, row.reason), (rec.episode, rec.steps, rec.ret, rec.done_reason));
    }
    assert!(!dir.path().join(layout::WEIGHTS).exists());
}

fn telemetry_bytes(dir: &Path) -> Vec<u8> {
    std::fs::read(dir.join(layout::TELEMETRY)).unwrap()
}

#[test]
fn persisted_run_layout_and_reproducibility() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut config = small_config(AgentKind::QLearning, 2, 1500, 3);
    config.out_dir = Some(a.path().to_path_buf());
    let report = run_training(&config, None, &mut ()).unwrap();
    config.out_dir = Some(b.path().to_path_buf());
    run_training(&config, None, &mut ()).unwrap();

    assert_eq!(telemetry_bytes(a.path()), telemetry_bytes(b.path()));
    let curve_text = std::fs::read_to_string(a.path().join(layout::CURVE)).unwrap();
    assert_eq!(curve_text.lines().next().unwrap(), CURVE_HEADER);

    // The snapshot is a complete config: loading it reproduces the run.
    let snapshot = RunConfig::load(&a.path().join(layout::CONFIG)).unwrap();
    assert_eq!(snapshot.seed, 3);
    assert_eq!(snapshot.env, config.env);

    let telemetry = read_telemetry(&a.path().join(layout::TELEMETRY)).unwrap();
    let total: u64 = report.curve.iter().map(|r| r.steps).sum();
    assert_eq!(telemetry.len() as u64, total);
    for rec in &report.curve {
        let steps: Vec<&TelemetrySample> = telemetry.iter().filter(|s| s.episode == rec.episode).collect();
        assert_eq!(steps.len() as u64, rec.steps);
        assert!(steps.iter().enumerate().all(|(i, s)| s.step == i as u64 + 1));
        assert_eq!(steps.last().unwrap().ret, rec.ret);
        assert!(steps.iter().all(|s| s.state == RunLifecycle::Learning));
    }

    let weights = QWeights::load(&a.path().join(layout::WEIGHTS)).unwrap();
    assert_eq!(weights.feature_count(), 8 * 8 * 8);
    assert!(weights.as_slice().iter().any(|&w| w != 0.0));
}

#[test]
fn checkpoint_evaluation_is_greedy_and_persisted() {
    let train_dir = tempfile::tempdir().unwrap();
    let eval_dir = tempfile::tempdir().unwrap();
    let mut config = small_config(AgentKind::QLearning, 3, 3000, 5);
    config.out_dir = Some(train_dir.path().to_path_buf());
    run_training(&config, None, &mut ()).unwrap();

    let mut eval = small_config(AgentKind::QLearning, 2, 3000, 5);
    eval.eval_checkpoint = Some(train_dir.path().join(layout::WEIGHTS));
    eval.out_dir = Some(eval_dir.path().to_path_buf());
    let a = run_evaluation(&eval, &mut ()).unwrap();
    eval.out_dir = None;
    let b = run_evaluation(&eval, &mut ()).unwrap();
    assert_eq!(without_wall_time(&a.curve), without_wall_time(&b.curve));
    let telemetry = read_telemetry(&eval_dir.path().join(layout::TELEMETRY)).unwrap();
    assert!(telemetry.iter().all(|s| s.state == RunLifecycle::Evaluating));
    assert_eq!(read_curve(&eval_dir.path().join(layout::CURVE)).unwrap().len(), 2);

    eval.eval_checkpoint = Some(train_dir.path().join("missing.bin"));
    assert!(run_evaluation(&eval, &mut ()).is_err());
}

#[derive(Default)]
struct Collect {
    samples: usize,
    episodes: usize,
    states: Vec<RunLifecycle>,
}

impl RunObserver for Collect {
    fn on_sample(&mut self, _s: &TelemetrySample) {
        self.samples += 1;
    }
    fn on_episode(&mut self, _r: &EpisodeRecord) {
        self.episodes += 1;
    }
    fn on_lifecycle(&mut self, s: RunLifecycle) {
        self.states.push(s);
    }
}

#[test]
fn observer_sees_every_step() {
    let mut obs = Collect::default();
    let report = run_training(&small_config(AgentKind::Reference, 3, 2000, 1), None, &mut obs).unwrap();
    assert_eq!(obs.samples as u64, report.curve.iter().map(|r| r.steps).sum::<u64>());
    assert_eq!(obs.episodes, 3);
    assert_eq!(obs.states, vec![RunLifecycle::Learning, RunLifecycle::Finished]);
}

fn paced_config(dir: &Path) -> RunConfig {
    let mut config = small_config(AgentKind::QLearning, 1000, 12_000, 9);
    config.env.realtime = true;
    config.out_dir = Some(dir.to_path_buf());
    config
}

#[test]
fn pause_and_resume_take_effect_within_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let config = paced_config(dir.path());
    let (control, rx) = control_channel();
    let handle = thread::spawn(move || run_training(&config, Some(rx), &mut ()));
    thread::sleep(Duration::from_millis(100));

    let paused = control.request(Command::Pause).unwrap();
    assert_eq!(paused.state, RunLifecycle::Paused);
    assert!(paused.applied_step - paused.issued_step <= 1);
    assert_eq!(control.status().lifecycle(), RunLifecycle::Paused);
    let frozen = control.status().steps();
    thread::sleep(Duration::from_millis(100));
    assert_eq!(control.status().steps(), frozen);

    // Pausing twice is not a transition.
    assert!(matches!(control.request(Command::Pause), Err(Error::IllegalTransition { .. })));

    let resumed = control.request(Command::Resume).unwrap();
    assert_eq!(resumed.state, RunLifecycle::Learning);
    assert_eq!(resumed.applied_step, frozen);
    thread::sleep(Duration::from_millis(100));
    assert!(control.status().steps() > frozen);

    let stopped = control.request(Command::Stop).unwrap();
    assert_eq!(stopped.state, RunLifecycle::Finished);
    let report = handle.join().unwrap().unwrap();
    assert!(report.stopped);
    assert_eq!(control.status().lifecycle(), RunLifecycle::Finished);
    assert!(control.request(Command::Resume).is_err());
    // Weights are still written after a stop.
    assert!(dir.path().join(layout::WEIGHTS).exists());
}

#[test]
fn evaluation_returns_to_prior_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = paced_config(dir.path());
    config.env.realtime = false;
    let (control, rx) = control_channel();
    let handle = thread::spawn(move || run_training(&config, Some(rx), &mut ()));
    thread::sleep(Duration::from_millis(50));

    let during_learning = control.request(Command::Evaluate).unwrap();
    assert_eq!(during_learning.state, RunLifecycle::Learning);
    let eval = during_learning.evaluation.unwrap();
    assert_eq!(eval.index, 1);

    control.request(Command::Pause).unwrap();
    let steps = control.status().steps();
    let during_pause = control.request(Command::Evaluate).unwrap();
    assert_eq!(during_pause.state, RunLifecycle::Paused);
    assert_eq!(during_pause.evaluation.unwrap().index, 2);
    // Evaluation does not advance training.
    assert_eq!(control.status().steps(), steps);
    assert_eq!(control.status().lifecycle(), RunLifecycle::Paused);

    control.request(Command::Stop).unwrap();
    let report = handle.join().unwrap().unwrap();
    assert_eq!(report.evaluations.len(), 2);
    for (n, outcome) in report.evaluations.iter().enumerate() {
        let trace = read_telemetry(&dir.path().join(layout::eval_trace(n as u64 + 1))).unwrap();
        assert_eq!(trace.len() as u64, outcome.record.steps);
        assert!(trace.iter().all(|s| s.state == RunLifecycle::Evaluating));
    }
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut config = small_config(AgentKind::QLearning, 1, 100, 0);
    config.qlearning.epsilon = 2.0;
    assert!(matches!(run_training(&config, None, &mut ()), Err(Error::Config(_))));
    assert!(RunConfig::from_text("unknown.key = 3").is_err());
    assert!(RunConfig::from_text("episodes = many").is_err());
}

#[test]
fn frames_are_dumped_at_requested_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(AgentKind::Reference, 1, 50, 0);
    config.dump_dir = Some(dir.path().join("frames"));
    config.dump_steps = vec![1, 25, 50, 51];
    run_training(&config, None, &mut ()).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("frames"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["frame_00000001.ppm", "frame_00000025.ppm", "frame_00000050.ppm"]);
    let ppm = std::fs::read(dir.path().join("frames/frame_00000001.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n256 120\n255\n"));
}
