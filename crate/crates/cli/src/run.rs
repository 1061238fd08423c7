//! Run orchestration: drives a plain flow or the surgery loop and records
//! snapshots, events and estimates as the run progresses.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gflow::monitor::scan;
use gflow::neck::{detect, NeckError, NeckRegion};
use gflow::surgery::{surgery_loop, ComponentVerdict, LoopObserver, SurgeryError, SurgeryRecord, TerminationVerdict};
use gflow::{FlowError, FlowState};
use serde::Serialize;
use thiserror::Error;

use crate::config::{RunConfig, RunMode};
use crate::output::{write_snapshot, EstimateLog, EventLog, RunEvent, ESTIMATES_FILE, EVENTS_FILE, SNAPSHOT_DIR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_TOO_MANY_SURGERIES: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_NO_NECK: i32 = 5;

pub fn surgery_exit_code(e: &SurgeryError) -> i32 {
    match e {
        SurgeryError::AbortTooManySurgeries(_) => EXIT_TOO_MANY_SURGERIES,
        SurgeryError::BadThresholds(_) | SurgeryError::BadParams(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub verdict: Option<TerminationVerdict>,
    pub error: Option<String>,
    pub surgeries: usize,
    pub necks_detected: usize,
    pub t: f64,
    pub steps: u64,
}

/// Writes events, snapshots and estimates; forwards every hook to `inner`.
struct Recorder<'a> {
    cfg: &'a RunConfig,
    dim: gflow::Dimension,
    snapshots: PathBuf,
    events: EventLog,
    estimates: EstimateLog,
    next_snapshot: f64,
    necks_detected: usize,
    surgeries: usize,
    error: Option<anyhow::Error>,
    inner: &'a mut dyn LoopObserver,
}

impl Recorder<'_> {
    fn keep(&mut self, r: Result<()>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }

    fn snapshot_all(&mut self, state: &FlowState) {
        let r = state
            .components()
            .iter()
            .try_for_each(|(&id, c)| write_snapshot(&self.snapshots, state.time(), id, c, self.dim).map(|_| ()));
        self.keep(r);
    }

    fn sample(&mut self, state: &FlowState) -> Result<()> {
        let Ok(s) = scan(state, &self.cfg.monitor, self.dim) else {
            return Ok(());
        };
        self.estimates.push(&s)?;
        for v in self.cfg.monitor.violations(&s) {
            self.events.emit(&RunEvent::EstimateViolation {
                t: s.t,
                quantity: v.quantity,
                value: v.value,
                bound: v.bound,
            })?;
        }
        Ok(())
    }

    fn summary(&mut self, state: &FlowState) -> Result<()> {
        let max_g = state.max_speed(self.dim).ok().flatten().map_or(0.0, |m| m.g);
        self.events.emit(&RunEvent::StepSummary {
            t: state.time(),
            steps: state.steps(),
            components: state.components().len(),
            max_g,
            area: state.total_area(self.dim),
        })
    }
}

impl LoopObserver for Recorder<'_> {
    fn on_step(&mut self, state: &FlowState) {
        let steps = state.steps();
        if steps % self.cfg.output.summary_every == 0 {
            let r = self.summary(state);
            self.keep(r);
        }
        if steps % self.cfg.monitor.sample_stride == 0 {
            let r = self.sample(state);
            self.keep(r);
        }
        let every = self.cfg.output.snapshot_interval;
        if every > 0.0 && state.time() >= self.next_snapshot {
            self.snapshot_all(state);
            while self.next_snapshot <= state.time() {
                self.next_snapshot += every;
            }
        }
        self.inner.on_step(state);
    }

    fn on_necks(&mut self, state: &FlowState, necks: &[NeckRegion], trigger: bool) {
        self.necks_detected += necks.len();
        for n in necks {
            let r = self.events.emit(&RunEvent::NeckDetected {
                t: state.time(),
                trigger,
                region: n,
            });
            self.keep(r);
        }
        if trigger {
            self.snapshot_all(state);
        }
        self.inner.on_necks(state, necks, trigger);
    }

    fn on_surgery(&mut self, state: &FlowState, record: &SurgeryRecord) {
        let r = self.events.emit(&RunEvent::Surgery {
            t: record.time,
            index: self.surgeries,
            record,
        });
        self.surgeries += 1;
        self.keep(r);
        self.snapshot_all(state);
        self.inner.on_surgery(state, record);
    }

    fn on_discard(&mut self, t: f64, verdict: &ComponentVerdict) {
        let r = self.events.emit(&RunEvent::ComponentDiscarded { t, verdict });
        self.keep(r);
        self.inner.on_discard(t, verdict);
    }
}

/// Plain flow to `t_end` with neck detection whenever max G grows by the
/// detection factor.
pub fn plain_run(
    state: &mut FlowState,
    cfg: &RunConfig,
    t_end: f64,
    obs: &mut dyn LoopObserver,
) -> Result<(), PlainError> {
    let dim = cfg.dimension().map_err(|_| FlowError::BadControl("dim"))?;
    let growth = cfg.surgery.detect_growth;
    let mut next_detect = cfg.neck.g0;
    while state.time() < t_end && !state.is_empty() {
        if let Some(m) = state.max_speed(dim)? {
            if m.g >= next_detect {
                let necks = detect(state, &cfg.neck, dim)?;
                obs.on_necks(state, &necks, false);
                while next_detect <= m.g {
                    next_detect *= growth;
                }
            }
        }
        state.step(&cfg.step, dim, t_end - state.time())?;
        obs.on_step(state);
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum PlainError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Neck(#[from] NeckError),
}

/// Runs a validated configuration, writing into `out`. Only I/O problems
/// are returned as errors; numerical outcomes are reported in the
/// [`RunOutcome`] and the termination event.
pub fn execute(cfg: &RunConfig, out: &Path, inner: &mut dyn LoopObserver) -> Result<RunOutcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dim = cfg.dimension()?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let mut state = FlowState::new(cfg.initial_components()?);
    let mut rec = Recorder {
        cfg,
        dim,
        snapshots: out.join(SNAPSHOT_DIR),
        events: EventLog::create(&out.join(EVENTS_FILE))?,
        estimates: EstimateLog::create(&out.join(ESTIMATES_FILE))?,
        next_snapshot: 0.0,
        necks_detected: 0,
        surgeries: 0,
        error: None,
        inner,
    };
    if cfg.output.snapshot_interval > 0.0 {
        rec.snapshot_all(&state);
        rec.next_snapshot = cfg.output.snapshot_interval;
    }
    let (exit_code, verdict, error) = match cfg.mode() {
        RunMode::Surgery => {
            match surgery_loop(
                &mut state,
                &cfg.thresholds,
                &cfg.neck,
                &cfg.surgery,
                &cfg.step,
                dim,
                &mut rec,
            ) {
                Ok(rep) => (EXIT_OK, Some(rep.verdict), None),
                Err(e) => (surgery_exit_code(&e), None, Some(e.to_string())),
            }
        }
        RunMode::Plain => {
            let t_end = cfg.plain_end()?;
            match plain_run(&mut state, cfg, t_end, &mut rec) {
                Ok(()) => {
                    rec.snapshot_all(&state);
                    (EXIT_OK, None, None)
                }
                Err(e) => (EXIT_NUMERICAL, None, Some(e.to_string())),
            }
        }
    };
    let outcome = RunOutcome {
        exit_code,
        verdict,
        error,
        surgeries: state.surgery_log().len(),
        necks_detected: rec.necks_detected,
        t: state.time(),
        steps: state.steps(),
    };
    rec.events.emit(&RunEvent::Termination {
        t: outcome.t,
        steps: outcome.steps,
        surgeries: outcome.surgeries,
        exit_code,
        verdict: verdict.map(|v| v.to_string()),
        error: outcome.error.clone(),
    })?;
    rec.events.flush()?;
    rec.estimates.flush()?;
    if let Some(e) = rec.error.take() {
        return Err(e);
    }
    Ok(outcome)
}
