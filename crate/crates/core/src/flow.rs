//! Explicit time integration of `dF/dt = -G nu` on axisymmetric profiles.
//!
//! Nodes move along the inward normal with speed `G`, which in the profile
//! plane is the velocity `G (sin phi, -cos phi)`. Pole nodes therefore slide
//! along the axis and reflecting ends move radially only.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ComponentId, GeometryError, ProfileCurve};
use crate::speed::{Dimension, ModelSurface};
use crate::surgery::SurgeryLog;

/// Smallest admissible time step.
pub const MIN_DT: f64 = 1e-14;

/// Largest number of decimated snapshots kept in the history.
pub const HISTORY_CAPACITY: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("lost two-convexity on component {component_id} at s = {s:.6}, x = {x:.6} (t = {t:.6})")]
    LostTwoConvexity {
        component_id: ComponentId,
        s: f64,
        x: f64,
        t: f64,
    },
    #[error("time step {dt:e} below {MIN_DT:e}")]
    TimeStepUnderflow { dt: f64 },
    #[error("history does not cover the requested window")]
    InsufficientHistory,
    #[error("time {t} is past the extinction time {extinction}")]
    PastExtinction { t: f64, extinction: f64 },
    #[error("invalid step control: {0}")]
    BadControl(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub cfl: f64,
    pub dt_max: f64,
    /// Target node spacing.
    pub spacing: f64,
    /// Relative spacing drift that triggers a resample.
    pub resample_drift: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            cfl: 0.1,
            dt_max: 1e-2,
            spacing: 1e-2,
            resample_drift: 0.25,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(FlowError::BadControl("cfl must lie in (0, 0.5]"));
        }
        if !(self.dt_max > 0.0) {
            return Err(FlowError::BadControl("dt_max must be positive"));
        }
        if !(self.spacing > 0.0) {
            return Err(FlowError::BadControl("spacing must be positive"));
        }
        if !(self.resample_drift > 0.0) {
            return Err(FlowError::BadControl("resample_drift must be positive"));
        }
        Ok(())
    }

    /// `min(dt_max, cfl h_min^2, cfl / max_g^2)`.
    pub fn time_step(&self, h_min: f64, max_g: f64) -> f64 {
        self.dt_max
            .min(self.cfl * h_min * h_min)
            .min(self.cfl / (max_g * max_g))
    }
}

/// A set of components at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// Incremented by every surgery.
    pub surgery_epoch: u64,
    /// Incremented by every resample or surgery.
    pub layout_epoch: u64,
    pub components: BTreeMap<ComponentId, Arc<ProfileCurve>>,
}

/// Decimated snapshot buffer plus a ring of the last three steps.
#[derive(Debug, Clone, Default)]
pub struct History {
    snapshots: VecDeque<Snapshot>,
    stride: u64,
    counter: u64,
    recent: VecDeque<Snapshot>,
}

impl History {
    fn new() -> Self {
        Self {
            snapshots: VecDeque::new(),
            stride: 1,
            counter: 0,
            recent: VecDeque::new(),
        }
    }

    fn push(&mut self, snap: Snapshot) {
        if self.recent.len() == 3 {
            self.recent.pop_front();
        }
        self.recent.push_back(snap.clone());
        if self.counter % self.stride == 0 {
            if self.snapshots.len() == HISTORY_CAPACITY {
                let kept: VecDeque<Snapshot> = self
                    .snapshots
                    .drain(..)
                    .enumerate()
                    .filter(|(i, _)| i % 2 == 0)
                    .map(|(_, s)| s)
                    .collect();
                self.snapshots = kept;
                self.stride *= 2;
            }
            self.snapshots.push_back(snap);
        }
        self.counter += 1;
    }

    /// Decimated snapshots, oldest first.
    pub fn snapshots(&self) -> impl DoubleEndedIterator<Item = &Snapshot> + ExactSizeIterator {
        self.snapshots.iter()
    }

    /// The last (up to) three accepted steps, oldest first.
    pub fn recent(&self) -> impl DoubleEndedIterator<Item = &Snapshot> + ExactSizeIterator {
        self.recent.iter()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }

    /// Earliest time reachable from `now` without crossing a surgery.
    pub fn earliest_in_epoch(&self, epoch: u64) -> Option<f64> {
        self.snapshots
            .iter()
            .find(|s| s.surgery_epoch == epoch)
            .map(|s| s.t)
    }

    /// Snapshots with `t` in `[t0, t1]` belonging to `epoch`.
    pub fn window(&self, epoch: u64, t0: f64, t1: f64) -> impl Iterator<Item = &Snapshot> {
        self.snapshots
            .iter()
            .chain(self.recent.iter().last())
            .filter(move |s| s.surgery_epoch == epoch && s.t >= t0 && s.t <= t1)
    }

    /// Linear interpolation in time of a scalar extracted from snapshots.
    ///
    /// Refuses to interpolate across a surgery.
    pub fn interpolate(
        &self,
        epoch: u64,
        t: f64,
        f: impl Fn(&Snapshot) -> Option<f64>,
    ) -> Result<f64, FlowError> {
        let all: Vec<&Snapshot> = self
            .snapshots
            .iter()
            .chain(self.recent.iter().last())
            .collect();
        let j = all.partition_point(|s| s.t < t);
        let exact = all.get(j).filter(|s| s.t == t);
        if let Some(s) = exact {
            if s.surgery_epoch != epoch {
                return Err(FlowError::InsufficientHistory);
            }
            return f(s).ok_or(FlowError::InsufficientHistory);
        }
        if j == 0 || j >= all.len() {
            return Err(FlowError::InsufficientHistory);
        }
        let (a, b) = (all[j - 1], all[j]);
        if a.surgery_epoch != epoch || b.surgery_epoch != epoch {
            return Err(FlowError::InsufficientHistory);
        }
        let fa = f(a).ok_or(FlowError::InsufficientHistory)?;
        let fb = f(b).ok_or(FlowError::InsufficientHistory)?;
        let w = (t - a.t) / (b.t - a.t);
        Ok((1.0 - w) * fa + w * fb)
    }
}

/// The evolving hypersurface.
#[derive(Debug, Clone)]
pub struct FlowState {
    t: f64,
    components: BTreeMap<ComponentId, Arc<ProfileCurve>>,
    next_id: ComponentId,
    history: History,
    surgery_log: SurgeryLog,
    surgery_epoch: u64,
    layout_epoch: u64,
    steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopCondition {
    TEnd { t: f64 },
    MaxGReaches { g: f64 },
    MinRadiusBelow { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum StopReason {
    TEnd,
    MaxGReached {
        component_id: ComponentId,
        s: f64,
        x: f64,
        g: f64,
    },
    MinRadiusBelow {
        r: f64,
    },
    Extinct,
}

/// Location and value of the largest speed over all components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedMaximum {
    pub component_id: ComponentId,
    pub index: usize,
    pub s: f64,
    pub x: f64,
    pub g: f64,
}

impl FlowState {
    pub fn new(components: Vec<ProfileCurve>) -> Self {
        let mut map = BTreeMap::new();
        for (i, c) in components.into_iter().enumerate() {
            map.insert(i as ComponentId, Arc::new(c));
        }
        let next_id = map.len() as ComponentId;
        let mut state = Self {
            t: 0.0,
            components: map,
            next_id,
            history: History::new(),
            surgery_log: SurgeryLog::default(),
            surgery_epoch: 0,
            layout_epoch: 0,
            steps: 0,
        };
        state.record();
        state
    }

    pub fn single(curve: ProfileCurve) -> Self {
        Self::new(vec![curve])
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn components(&self) -> &BTreeMap<ComponentId, Arc<ProfileCurve>> {
        &self.components
    }

    pub fn component(&self, id: ComponentId) -> Option<&ProfileCurve> {
        self.components.get(&id).map(|c| c.as_ref())
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn surgery_log(&self) -> &SurgeryLog {
        &self.surgery_log
    }

    pub fn surgery_log_mut(&mut self) -> &mut SurgeryLog {
        &mut self.surgery_log
    }

    pub fn surgery_epoch(&self) -> u64 {
        self.surgery_epoch
    }

    pub fn layout_epoch(&self) -> u64 {
        self.layout_epoch
    }

    fn record(&mut self) {
        self.history.push(Snapshot {
            t: self.t,
            surgery_epoch: self.surgery_epoch,
            layout_epoch: self.layout_epoch,
            components: self.components.clone(),
        });
    }

    /// Removes a component, returning it.
    pub fn remove_component(&mut self, id: ComponentId) -> Option<Arc<ProfileCurve>> {
        self.components.remove(&id)
    }

    /// Replaces one component by several new ones, opening a surgery epoch.
    /// Returns the ids assigned to the new components.
    pub fn replace_component(
        &mut self,
        id: ComponentId,
        pieces: Vec<ProfileCurve>,
    ) -> Vec<ComponentId> {
        self.components.remove(&id);
        let ids = pieces
            .into_iter()
            .map(|p| {
                let nid = self.next_id;
                self.next_id += 1;
                self.components.insert(nid, Arc::new(p));
                nid
            })
            .collect();
        ids
    }

    /// Marks the end of a batch of surgeries at the current time.
    pub fn close_surgery_epoch(&mut self) {
        self.surgery_epoch += 1;
        self.layout_epoch += 1;
        self.record();
    }

    pub fn total_area(&self, dim: Dimension) -> f64 {
        self.components.values().map(|c| c.total_area(dim)).sum()
    }

    /// Largest speed over all components; `LostTwoConvexity` if some node has
    /// no defined speed.
    pub fn max_speed(&self, dim: Dimension) -> Result<Option<SpeedMaximum>, FlowError> {
        let mut best: Option<SpeedMaximum> = None;
        for (&id, c) in &self.components {
            let g = c.speeds(dim).map_err(|i| self.lost(id, c, i))?;
            for (i, &gi) in g.iter().enumerate() {
                if best.map_or(true, |b| gi > b.g) {
                    let p = c.points()[i];
                    best = Some(SpeedMaximum {
                        component_id: id,
                        index: i,
                        s: p.s,
                        x: p.x,
                        g: gi,
                    });
                }
            }
        }
        Ok(best)
    }

    fn lost(&self, id: ComponentId, c: &ProfileCurve, i: usize) -> FlowError {
        let p = c.points()[i];
        FlowError::LostTwoConvexity {
            component_id: id,
            s: p.s,
            x: p.x,
            t: self.t,
        }
    }

    /// Time step the next call to [`FlowState::step`] would take.
    pub fn next_dt(&self, ctl: &StepControl, dim: Dimension) -> Result<f64, FlowError> {
        let h_min = self
            .components
            .values()
            .map(|c| c.min_spacing())
            .fold(f64::INFINITY, f64::min);
        let max_g = self.max_speed(dim)?.map_or(0.0, |m| m.g);
        Ok(ctl.time_step(h_min, max_g))
    }

    /// One forward Euler step of at most `dt_cap`.
    pub fn step(&mut self, ctl: &StepControl, dim: Dimension, dt_cap: f64) -> Result<f64, FlowError> {
        let mut speeds = Vec::with_capacity(self.components.len());
        let mut h_min = f64::INFINITY;
        let mut max_g: f64 = 0.0;
        for (&id, c) in &self.components {
            let g = c.speeds(dim).map_err(|i| self.lost(id, c, i))?;
            max_g = g.iter().cloned().fold(max_g, f64::max);
            h_min = h_min.min(c.min_spacing());
            speeds.push(g);
        }
        let dt_rule = ctl.time_step(h_min, max_g);
        if !(dt_rule >= MIN_DT) {
            return Err(FlowError::TimeStepUnderflow { dt: dt_rule });
        }
        let dt = dt_rule.min(dt_cap);
        let mut resampled = false;
        let mut next = BTreeMap::new();
        for ((&id, c), g) in self.components.iter().zip(speeds) {
            let pts = c.points();
            let mut xs = Vec::with_capacity(pts.len());
            let mut us = Vec::with_capacity(pts.len());
            for (p, gi) in pts.iter().zip(&g) {
                xs.push(p.x + dt * gi * p.phi.sin());
                us.push(p.u - dt * gi * p.phi.cos());
            }
            let mut curve = ProfileCurve::from_xu(xs, us, c.start_kind(), c.end_kind())?;
            if curve.spacing_drift(ctl.spacing) > ctl.resample_drift {
                curve = curve.resample(ctl.spacing)?;
                resampled = true;
            }
            next.insert(id, Arc::new(curve));
        }
        self.components = next;
        self.t += dt;
        self.steps += 1;
        if resampled {
            self.layout_epoch += 1;
        }
        self.record();
        Ok(dt)
    }

    /// Steps until a stop condition fires.
    pub fn run_until(
        &mut self,
        ctl: &StepControl,
        dim: Dimension,
        stop: StopCondition,
    ) -> Result<StopReason, FlowError> {
        ctl.validate()?;
        loop {
            if self.components.is_empty() {
                return Ok(StopReason::Extinct);
            }
            match stop {
                StopCondition::TEnd { t } => {
                    if self.t >= t {
                        return Ok(StopReason::TEnd);
                    }
                }
                StopCondition::MaxGReaches { g } => {
                    if let Some(m) = self.max_speed(dim)? {
                        if m.g >= g {
                            return Ok(StopReason::MaxGReached {
                                component_id: m.component_id,
                                s: m.s,
                                x: m.x,
                                g: m.g,
                            });
                        }
                    }
                }
                StopCondition::MinRadiusBelow { r } => {
                    let rmax = self
                        .components
                        .values()
                        .map(|c| c.max_radius())
                        .fold(0.0, f64::max);
                    if rmax < r {
                        return Ok(StopReason::MinRadiusBelow { r: rmax });
                    }
                }
            }
            let cap = match stop {
                StopCondition::TEnd { t } => t - self.t,
                _ => f64::INFINITY,
            };
            self.step(ctl, dim, cap)?;
        }
    }

    /// Residuals of `dH/dt = Delta G + |A|^2 G` and of
    /// `d(area)/dt = -int G H` over the last three steps.
    pub fn verify_evolution_identities(&self, dim: Dimension) -> Result<EvolutionResiduals, FlowError> {
        let recent: Vec<&Snapshot> = self.history.recent().collect();
        if recent.len() < 3 {
            return Err(FlowError::InsufficientHistory);
        }
        let (a, b, c) = (recent[0], recent[1], recent[2]);
        if a.layout_epoch != c.layout_epoch || a.components.keys().ne(c.components.keys()) {
            return Err(FlowError::InsufficientHistory);
        }
        let dt2 = c.t - a.t;
        let mut max_r1: f64 = 0.0;
        let mut max_dh: f64 = 0.0;
        let mut area_rate = 0.0;
        let mut gh_integral = 0.0;
        for (id, mid) in &b.components {
            let before = &a.components[id];
            let after = &c.components[id];
            let n_nodes = mid.len();
            let g = mid.speeds(dim).map_err(|i| self.lost(*id, mid, i))?;
            let pts = mid.points();
            let len = mid.length();
            for i in 1..n_nodes - 1 {
                // Skip the axis neighbourhood, where the rotational term of the
                // Laplacian is a 0/0 limit.
                if pts[i].s < 0.2 * len && mid.pole_start() || pts[i].s > (1.0 - 0.2) * len && mid.pole_end() {
                    continue;
                }
                let h0 = pts[i].s - pts[i - 1].s;
                let h1 = pts[i + 1].s - pts[i].s;
                let gs = (g[i + 1] - g[i - 1]) / (h0 + h1);
                let gss = 2.0 * ((g[i + 1] - g[i]) / h1 - (g[i] - g[i - 1]) / h0) / (h0 + h1);
                let lap = gss + (dim.as_f64() - 1.0) * pts[i].phi.sin() / pts[i].u * gs;
                let rhs = lap + mid.node_norm_sq(i, dim) * g[i];
                let dh = (after.node_mean_curvature(i, dim) - before.node_mean_curvature(i, dim)) / dt2;
                max_r1 = max_r1.max((dh - rhs).abs());
                max_dh = max_dh.max(dh.abs());
            }
            area_rate += (after.total_area(dim) - before.total_area(dim)) / dt2;
            let w = mid.area_weights(dim);
            gh_integral += (0..n_nodes)
                .map(|i| w[i] * g[i] * mid.node_mean_curvature(i, dim))
                .sum::<f64>();
        }
        Ok(EvolutionResiduals {
            t: b.t,
            max_r1,
            max_dh_dt: max_dh,
            area_rate,
            gh_integral,
            r2: area_rate + gh_integral,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolutionResiduals {
    pub t: f64,
    /// Largest `|dH/dt - Delta G - |A|^2 G|` over interior nodes.
    pub max_r1: f64,
    /// Largest `|dH/dt|`, for scale.
    pub max_dh_dt: f64,
    pub area_rate: f64,
    pub gh_integral: f64,
    /// `d(area)/dt + int G H`.
    pub r2: f64,
}

impl EvolutionResiduals {
    pub fn r2_relative(&self) -> f64 {
        self.r2.abs() / self.gh_integral.abs()
    }
}

/// Exact radius of a shrinking sphere or cylinder under the flow.
pub fn oracle_radius(model: ModelSurface, dim: Dimension, t: f64) -> Result<f64, FlowError> {
    let r0 = model.radius();
    let n = dim.as_f64();
    let c = match model {
        ModelSurface::Sphere(_) => 8.0 / (n * (n - 1.0)),
        ModelSurface::Cylinder(_) => 8.0 / ((n - 1.0) * (n + 2.0)),
    };
    let extinction = r0 * r0 / c;
    if t >= extinction {
        return Err(FlowError::PastExtinction { t, extinction });
    }
    Ok((r0 * r0 - c * t).sqrt())
}
