//! Standard surgery on certified necks and the flow-with-surgeries loop.
//!
//! A surgery cuts a component at the two cross-sections of radius `r*`
//! bounding a high-curvature neck, closes every exposed end with a convex
//! cap, and discards the removed middle piece. Caps are arcs of ellipses
//! centred on the axis, joined to the profile with matching tangent; their
//! tip curvature is fixed so that the cap speed sits at a chosen fraction of
//! `K*`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowError, FlowState, StepControl};
use crate::neck::{detect, NeckError, NeckParams, NeckRegion};
use crate::profile::{ComponentId, EndKind, GeometryError, ProfileCurve};
use crate::speed::Dimension;

#[derive(Debug, Error)]
pub enum SurgeryError {
    #[error("threshold chain violated: {0}")]
    BadThresholds(&'static str),
    #[error("invalid surgery parameters: {0}")]
    BadParams(&'static str),
    #[error("max G = {g:.4e} is below the trigger g3 = {g3:.4e}")]
    BelowTrigger { g: f64, g3: f64 },
    #[error("initial max G = {g:.4e} already reaches g3 = {g3:.4e}")]
    InitialAboveTrigger { g: f64, g3: f64 },
    #[error("no cross-section of radius r* = {r_star:.4e} around the neck: {reason}")]
    NoSuitableCrossSection { r_star: f64, reason: String },
    #[error("cap construction failed: {0}")]
    CapConstructionFailed(String),
    #[error("post-surgery max G = {max_g:.6e} exceeds g2 = {g2:.6e}")]
    PostSurgeryBound { max_g: f64, g2: f64 },
    #[error("surgery did not decrease area ({before:.6e} -> {after:.6e})")]
    AreaNotDecreasing { before: f64, after: f64 },
    #[error("trigger reached at t = {t:.6} (max G = {g:.4e}) without a certified neck")]
    NoCertifiedNeck { t: f64, g: f64 },
    #[error("aborted after {0} surgeries")]
    AbortTooManySurgeries(usize),
    #[error("time limit {0} reached before termination")]
    TimeLimit(f64),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Neck(#[from] NeckError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The curvature levels `g1 < g2 = omega2 g1 < g3 = omega3 g2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurgeryThresholds {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

impl SurgeryThresholds {
    pub fn new(g1: f64, g2: f64, g3: f64) -> Result<Self, SurgeryError> {
        let t = Self { g1, g2, g3 };
        t.validate()?;
        Ok(t)
    }

    pub fn from_omegas(g1: f64, omega2: f64, omega3: f64) -> Result<Self, SurgeryError> {
        if !(omega2 > 1.0) || !(omega3 > 1.0) {
            return Err(SurgeryError::BadThresholds("omega2 and omega3 must exceed 1"));
        }
        Self::new(g1, omega2 * g1, omega3 * omega2 * g1)
    }

    pub fn validate(&self) -> Result<(), SurgeryError> {
        if !(self.g1 > 0.0) || !self.g3.is_finite() {
            return Err(SurgeryError::BadThresholds("g1 must be positive and g3 finite"));
        }
        if !(self.g1 < self.g2) {
            return Err(SurgeryError::BadThresholds("g1 < g2 required"));
        }
        if !(self.g2 < self.g3) {
            return Err(SurgeryError::BadThresholds("g2 < g3 required"));
        }
        Ok(())
    }

    pub fn omega2(&self) -> f64 {
        self.g2 / self.g1
    }

    pub fn omega3(&self) -> f64 {
        self.g3 / self.g2
    }

    /// Curvature scale of every surgery, `g3 / omega3 = g2`.
    pub fn k_star(&self) -> f64 {
        self.g2
    }
}

impl Default for SurgeryThresholds {
    fn default() -> Self {
        Self {
            g1: 2.5,
            g2: 5.0,
            g3: 10.0,
        }
    }
}

/// How the cut radius follows from `K*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutRule {
    /// `r* = (n-1)/K*`.
    Operational,
    /// `r* = (n-1)(n-2)/(2K*)`.
    MeanRadius,
}

impl CutRule {
    pub fn r_star(self, k_star: f64, dim: Dimension) -> f64 {
        let n = dim.as_f64();
        match self {
            CutRule::Operational => (n - 1.0) / k_star,
            CutRule::MeanRadius => (n - 1.0) * (n - 2.0) / (2.0 * k_star),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurgeryParams {
    pub max_surgeries: usize,
    pub cut_rule: CutRule,
    /// Cap tip speed as a fraction of `K*`.
    pub cap_tip_fraction: f64,
    /// `lambda1 >= -tol * max G` counts as convex.
    pub convexity_tolerance: f64,
    /// Detection runs whenever max G grows by this factor.
    pub detect_growth: f64,
    /// Components are classified every this many steps.
    pub classify_every: u64,
    /// The loop fails once the flow time passes this.
    pub max_time: f64,
}

impl Default for SurgeryParams {
    fn default() -> Self {
        Self {
            max_surgeries: 100,
            cut_rule: CutRule::Operational,
            cap_tip_fraction: 0.75,
            convexity_tolerance: 1e-10,
            detect_growth: 1.25,
            classify_every: 100,
            max_time: 10.0,
        }
    }
}

impl SurgeryParams {
    pub fn validate(&self) -> Result<(), SurgeryError> {
        if self.max_surgeries == 0 {
            return Err(SurgeryError::BadParams("max_surgeries must be at least 1"));
        }
        if !(self.cap_tip_fraction >= 0.5 && self.cap_tip_fraction <= 2.0) {
            return Err(SurgeryError::BadParams("cap_tip_fraction must lie in [0.5, 2]"));
        }
        if !(self.convexity_tolerance >= 0.0) {
            return Err(SurgeryError::BadParams("convexity_tolerance must be non-negative"));
        }
        if !(self.detect_growth > 1.0) {
            return Err(SurgeryError::BadParams("detect_growth must exceed 1"));
        }
        if self.classify_every == 0 {
            return Err(SurgeryError::BadParams("classify_every must be at least 1"));
        }
        if !(self.max_time > 0.0) {
            return Err(SurgeryError::BadParams("max_time must be positive"));
        }
        Ok(())
    }
}

/// One performed surgery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryRecord {
    pub time: f64,
    pub component_id: ComponentId,
    /// Arclength (on the pre-surgery profile) of the two cut cross-sections.
    pub cut_s: [f64; 2],
    pub r_star: f64,
    pub k_star: f64,
    /// Axial interval of caps and removed piece together.
    pub modified_interval: [f64; 2],
    pub pre_max_g: f64,
    /// Largest speed on the retained pieces.
    pub post_max_g: f64,
    /// Largest speed on each retained cap.
    pub cap_max_g: Vec<f64>,
    pub removed_component_max_g: Option<f64>,
    /// Total area of the component before, and of the retained pieces after.
    pub area_before: f64,
    pub area_after: f64,
}

/// Time-ordered list of surgeries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurgeryLog {
    records: Vec<SurgeryRecord>,
}

impl SurgeryLog {
    pub fn records(&self) -> &[SurgeryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record; times must be non-decreasing.
    pub fn push(&mut self, record: SurgeryRecord) {
        debug_assert!(self.records.last().map_or(true, |r| r.time <= record.time));
        self.records.push(record);
    }
}

/// Where to cut around a neck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutSelection {
    pub component_id: ComponentId,
    pub cut_s: [f64; 2],
    pub k_star: f64,
    pub r_star: f64,
}

/// Walks outward from the neck centre on both sides to the first
/// cross-section of radius `r*`.
pub fn select_cut(
    neck: &NeckRegion,
    state: &FlowState,
    thresholds: &SurgeryThresholds,
    params: &SurgeryParams,
    dim: Dimension,
) -> Result<CutSelection, SurgeryError> {
    let curve = state
        .component(neck.component_id)
        .ok_or(NeckError::UnknownComponent(neck.component_id))?;
    let g = curve.speeds(dim).map_err(|_| NeckError::NotTwoConvex)?;
    let max_g = g.iter().cloned().fold(0.0, f64::max);
    if max_g < thresholds.g3 {
        return Err(SurgeryError::BelowTrigger {
            g: max_g,
            g3: thresholds.g3,
        });
    }
    let k_star = thresholds.k_star();
    let r_star = params.cut_rule.r_star(k_star, dim);
    let no_cut = |reason: String| SurgeryError::NoSuitableCrossSection { r_star, reason };
    let pts = curve.points();
    let c = curve.nearest_node(neck.center_s)?;
    if pts[c].u > r_star * 10.0 / 11.0 {
        return Err(no_cut(format!("neck radius {:.4e} above 10/11 r*", pts[c].u)));
    }
    let crossing = |i: usize, j: usize| {
        let w = (r_star - pts[i].u) / (pts[j].u - pts[i].u);
        pts[i].s + w * (pts[j].s - pts[i].s)
    };
    let left = (1..=c)
        .rev()
        .find(|&i| pts[i - 1].u >= r_star)
        .map(|i| crossing(i, i - 1))
        .ok_or_else(|| no_cut("radius stays below r* towards the start".into()))?;
    let right = (c..pts.len() - 1)
        .find(|&i| pts[i + 1].u >= r_star)
        .map(|i| crossing(i, i + 1))
        .ok_or_else(|| no_cut("radius stays below r* towards the end".into()))?;
    for s in [left, right] {
        let ratio = curve.u_at(s)? / r_star;
        if !(0.8..=1.25).contains(&ratio) {
            return Err(no_cut(format!("u/r* = {ratio:.3} at the cut")));
        }
    }
    Ok(CutSelection {
        component_id: neck.component_id,
        cut_s: [left, right],
        k_star,
        r_star,
    })
}

/// Radius of the tip of a cap whose tip speed is `fraction * k_star`.
pub fn cap_tip_radius(k_star: f64, fraction: f64, dim: Dimension) -> f64 {
    let n = dim.as_f64();
    4.0 / (n * (n - 1.0) * fraction * k_star)
}

/// Points closing a profile that leaves `(x_c, u_c)` at angle `phi_c`
/// with an arc of the ellipse `(x0 + a cos t, b sin t)`, `b^2/a = r_tip`.
/// The junction itself is excluded; the last point lies on the axis.
/// Consecutive points are at most `step` apart.
pub fn end_cap_points(
    x_c: f64,
    u_c: f64,
    phi_c: f64,
    r_tip: f64,
    step: f64,
) -> Result<Vec<(f64, f64)>, SurgeryError> {
    let c = -u_c * phi_c.tan() / r_tip;
    if !(u_c > 0.0) || !(r_tip > 0.0) || !(step > 0.0) {
        return Err(SurgeryError::CapConstructionFailed("degenerate cap data".into()));
    }
    if !(c.abs() < 1.0) {
        return Err(SurgeryError::CapConstructionFailed(format!(
            "cut slope too steep: |u tan phi| = {:.4e} >= tip radius {r_tip:.4e}",
            (u_c * phi_c.tan()).abs()
        )));
    }
    let tau_c = c.acos();
    let b = u_c / tau_c.sin();
    let a = b * b / r_tip;
    let x0 = x_c - a * c;
    let n = ((a.max(b) * tau_c / step).ceil() as usize).max(8);
    Ok((1..=n)
        .map(|k| {
            let tau = tau_c * (1.0 - k as f64 / n as f64);
            let u = if k == n { 0.0 } else { b * tau.sin() };
            (x0 + a * tau.cos(), u)
        })
        .collect())
}

/// Mirror image of [`end_cap_points`] for a profile arriving at
/// `(x_c, u_c)` with angle `phi_c`: runs from the axis to just before the
/// junction.
pub fn start_cap_points(
    x_c: f64,
    u_c: f64,
    phi_c: f64,
    r_tip: f64,
    step: f64,
) -> Result<Vec<(f64, f64)>, SurgeryError> {
    let mut pts = end_cap_points(-x_c, u_c, -phi_c, r_tip, step)?;
    pts.reverse();
    for p in &mut pts {
        p.0 = -p.0;
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CapSide {
    Start,
    End,
}

/// A capped piece together with the arclength fraction range of its caps.
struct Piece {
    curve: ProfileCurve,
    caps: Vec<(CapSide, f64)>,
}

impl Piece {
    fn in_cap(&self, s: f64, margin: f64) -> bool {
        let len = self.curve.length();
        self.caps.iter().any(|&(side, frac)| match side {
            CapSide::Start => s <= frac * len - margin,
            CapSide::End => s >= frac * len + margin,
        })
    }

    fn cap_nodes(&self, side: CapSide, margin: f64) -> Vec<usize> {
        let len = self.curve.length();
        let Some(&(_, frac)) = self.caps.iter().find(|c| c.0 == side) else {
            return Vec::new();
        };
        self.curve
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| match side {
                CapSide::Start => p.s <= frac * len - margin,
                CapSide::End => p.s >= frac * len + margin,
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Builds a piece from the nodes of `curve` with arclength in `(s0, s1)`,
/// capping every open end.
#[allow(clippy::too_many_arguments)]
fn build_piece(
    curve: &ProfileCurve,
    s0: Option<f64>,
    s1: Option<f64>,
    r_tip: f64,
    spacing: f64,
) -> Result<Piece, SurgeryError> {
    let pts = curve.points();
    let fine = spacing / 8.0;
    let phi_at = |s: f64| curve.interpolate(s, |i| pts[i].phi);
    let lo = s0.map_or(f64::NEG_INFINITY, |s| s + 0.25 * spacing);
    let hi = s1.map_or(f64::INFINITY, |s| s - 0.25 * spacing);
    let mut xs = Vec::new();
    let mut us = Vec::new();
    let mut caps = Vec::new();
    if let Some(s) = s0 {
        let (x, u, phi) = (curve.x_at(s)?, curve.u_at(s)?, phi_at(s)?);
        for (cx, cu) in start_cap_points(x, u, phi, r_tip, fine)? {
            xs.push(cx);
            us.push(cu);
        }
        caps.push((CapSide::Start, xs.len()));
        xs.push(x);
        us.push(u);
    }
    for p in pts.iter().filter(|p| p.s > lo && p.s < hi) {
        xs.push(p.x);
        us.push(p.u);
    }
    if let Some(s) = s1 {
        let (x, u, phi) = (curve.x_at(s)?, curve.u_at(s)?, phi_at(s)?);
        xs.push(x);
        us.push(u);
        caps.push((CapSide::End, xs.len() - 1));
        for (cx, cu) in end_cap_points(x, u, phi, r_tip, fine)? {
            xs.push(cx);
            us.push(cu);
        }
    }
    let start = if s0.is_some() { EndKind::Pole } else { curve.start_kind() };
    let end = if s1.is_some() { EndKind::Pole } else { curve.end_kind() };
    let raw = ProfileCurve::from_xu(xs, us, start, end)?;
    let len = raw.length();
    let caps = caps
        .into_iter()
        .map(|(side, j)| (side, raw.points()[j].s / len))
        .collect();
    Ok(Piece {
        curve: raw.resample(spacing)?,
        caps,
    })
}

/// One Laplacian smoothing pass over the cap nodes of a piece.
fn smooth_caps(piece: &Piece) -> Result<Piece, SurgeryError> {
    let c = &piece.curve;
    let pts = c.points();
    let n = pts.len();
    let mut xs = c.xs();
    let mut us = c.us();
    for i in 1..n - 1 {
        if piece.in_cap(pts[i].s, 0.0) {
            xs[i] = 0.25 * pts[i - 1].x + 0.5 * pts[i].x + 0.25 * pts[i + 1].x;
            us[i] = 0.25 * pts[i - 1].u + 0.5 * pts[i].u + 0.25 * pts[i + 1].u;
        }
    }
    Ok(Piece {
        curve: ProfileCurve::from_xu(xs, us, c.start_kind(), c.end_kind())?,
        caps: piece.caps.clone(),
    })
}

/// Largest speed on each cap, or why the cap fails the band
/// `[k*/2, 2k*]` with `lambda1 > 0` away from the junction.
fn check_caps(piece: &Piece, k_star: f64, spacing: f64, dim: Dimension) -> Result<Vec<f64>, String> {
    let g = piece
        .curve
        .speeds(dim)
        .map_err(|i| format!("speed undefined at node {i}"))?;
    let mut out = Vec::new();
    for side in [CapSide::Start, CapSide::End] {
        let nodes = piece.cap_nodes(side, 0.0);
        if nodes.is_empty() {
            continue;
        }
        let max = nodes.iter().map(|&i| g[i]).fold(0.0, f64::max);
        if !(max >= 0.5 * k_star && max <= 2.0 * k_star) {
            return Err(format!("cap max G {max:.4e} outside [{:.4e}, {:.4e}]", 0.5 * k_star, 2.0 * k_star));
        }
        for i in piece.cap_nodes(side, 2.0 * spacing) {
            if !(piece.curve.node_lambda1(i) > 0.0) {
                return Err(format!("cap not convex at s = {:.4e}", piece.curve.points()[i].s));
            }
        }
        out.push(max);
    }
    Ok(out)
}

fn checked_piece(
    curve: &ProfileCurve,
    s0: Option<f64>,
    s1: Option<f64>,
    r_tip: f64,
    k_star: f64,
    spacing: f64,
    dim: Dimension,
) -> Result<(Piece, Vec<f64>), SurgeryError> {
    let piece = build_piece(curve, s0, s1, r_tip, spacing)?;
    match check_caps(&piece, k_star, spacing, dim) {
        Ok(m) => Ok((piece, m)),
        Err(_) => {
            let smoothed = smooth_caps(&piece)?;
            let m = check_caps(&smoothed, k_star, spacing, dim).map_err(SurgeryError::CapConstructionFailed)?;
            Ok((smoothed, m))
        }
    }
}

fn axial_hull(curves: &[&ProfileCurve], filter: impl Fn(usize, f64) -> bool) -> [f64; 2] {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (k, c) in curves.iter().enumerate() {
        for p in c.points() {
            if filter(k, p.s) {
                lo = lo.min(p.x);
                hi = hi.max(p.x);
            }
        }
    }
    [lo, hi]
}

/// Result of one surgery.
#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryOutcome {
    pub record: SurgeryRecord,
    /// New ids of the retained pieces.
    pub retained: Vec<ComponentId>,
    /// New id of the capped middle piece. Its caps are not checked against
    /// the curvature band and may overlap the retained pieces.
    pub removed: ComponentId,
}

/// Cuts the component at both cross-sections, caps all ends and installs
/// the three pieces. The caller closes the surgery epoch once all surgeries
/// at this time are done.
pub fn perform(
    state: &mut FlowState,
    cut: &CutSelection,
    params: &SurgeryParams,
    spacing: f64,
    dim: Dimension,
) -> Result<SurgeryOutcome, SurgeryError> {
    let curve = state
        .component(cut.component_id)
        .ok_or(NeckError::UnknownComponent(cut.component_id))?
        .clone();
    let g = curve.speeds(dim).map_err(|_| NeckError::NotTwoConvex)?;
    let pre_max_g = g.iter().cloned().fold(0.0, f64::max);
    let k = cut.k_star;
    let r_tip = cap_tip_radius(k, params.cap_tip_fraction, dim);
    let [sa, sb] = cut.cut_s;
    let (left, m_left) = checked_piece(&curve, None, Some(sa), r_tip, k, spacing, dim)?;
    let middle = build_piece(&curve, Some(sa), Some(sb), r_tip, spacing)?;
    let (right, m_right) = checked_piece(&curve, Some(sb), None, r_tip, k, spacing, dim)?;

    let area_before = curve.total_area(dim);
    let area_after = left.curve.total_area(dim) + right.curve.total_area(dim);
    if !(area_after < area_before) {
        return Err(SurgeryError::AreaNotDecreasing {
            before: area_before,
            after: area_after,
        });
    }
    let max_of = |c: &ProfileCurve| -> Result<f64, SurgeryError> {
        let g = c.speeds(dim).map_err(|_| NeckError::NotTwoConvex)?;
        Ok(g.into_iter().fold(0.0, f64::max))
    };
    let post_max_g = max_of(&left.curve)?.max(max_of(&right.curve)?);
    let removed_max = max_of(&middle.curve)?;
    let modified_interval = axial_hull(&[&left.curve, &curve, &right.curve], |k, s| match k {
        0 => left.in_cap(s, 0.0),
        1 => s >= sa && s <= sb,
        _ => right.in_cap(s, 0.0),
    });

    let ids = state.replace_component(cut.component_id, vec![left.curve, middle.curve, right.curve]);
    let record = SurgeryRecord {
        time: state.time(),
        component_id: cut.component_id,
        cut_s: cut.cut_s,
        r_star: cut.r_star,
        k_star: k,
        modified_interval,
        pre_max_g,
        post_max_g,
        cap_max_g: m_left.into_iter().chain(m_right).collect(),
        removed_component_max_g: Some(removed_max),
        area_before,
        area_after,
    };
    state.surgery_log_mut().push(record.clone());
    Ok(SurgeryOutcome {
        record,
        retained: vec![ids[0], ids[2]],
        removed: ids[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    DiscardSphere,
    DiscardConvex,
    Retain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentVerdict {
    pub component_id: ComponentId,
    pub verdict: Verdict,
    pub pole_to_pole: bool,
    pub min_l1_over_g: f64,
    pub max_g: f64,
    /// Index in the surgery log of the surgery that removed this piece.
    pub motivating_surgery: Option<usize>,
    /// The removed piece has no point with `G >= 10 K*`.
    pub g3_violation: bool,
}

/// Sorts components into discard and retain verdicts.
///
/// `removed` maps middle pieces of surgeries to their log index; `necks`
/// are certified neck bands (axial intervals per component).
pub fn classify_components(
    state: &FlowState,
    removed: &[(ComponentId, usize)],
    necks: &[NeckRegion],
    params: &SurgeryParams,
    dim: Dimension,
) -> Result<Vec<ComponentVerdict>, SurgeryError> {
    let mut out = Vec::new();
    for (&id, c) in state.components() {
        let g = c.speeds(dim).map_err(|_| NeckError::NotTwoConvex)?;
        let max_g = g.iter().cloned().fold(0.0, f64::max);
        let tol = params.convexity_tolerance * max_g;
        let min_l1 = (0..c.len()).map(|i| c.node_lambda1(i) / g[i]).fold(f64::INFINITY, f64::min);
        let closed = c.is_closed();
        let convex = (0..c.len()).all(|i| c.node_lambda1(i) > -tol);
        let motivating = removed.iter().find(|r| r.0 == id).map(|r| r.1);
        let banded = (0..c.len()).all(|i| {
            let x = c.points()[i].x;
            c.node_lambda1(i) > -tol
                || necks
                    .iter()
                    .any(|n| n.component_id == id && x >= n.axial_interval[0] && x <= n.axial_interval[1])
        });
        let verdict = if closed && convex {
            Verdict::DiscardConvex
        } else if closed && (motivating.is_some() || banded) {
            Verdict::DiscardSphere
        } else {
            Verdict::Retain
        };
        let g3_violation = match motivating {
            Some(k) => {
                let k_star = state.surgery_log().records()[k].k_star;
                max_g < 10.0 * k_star
            }
            None => false,
        };
        out.push(ComponentVerdict {
            component_id: id,
            verdict,
            pole_to_pole: closed,
            min_l1_over_g: min_l1,
            max_g,
            motivating_surgery: motivating,
            g3_violation,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationVerdict {
    /// Every component was convex without any surgery.
    Convex,
    /// All components were discarded as spheres or convex after surgery.
    AllSpheres,
}

impl std::fmt::Display for TerminationVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminationVerdict::Convex => "convex",
            TerminationVerdict::AllSpheres => "all components spheres",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminationReport {
    pub verdict: TerminationVerdict,
    pub surgeries: usize,
    pub t: f64,
    pub steps: u64,
    pub discarded: Vec<ComponentVerdict>,
}

/// Hooks called by [`surgery_loop`] as the run progresses.
pub trait LoopObserver {
    fn on_step(&mut self, _state: &FlowState) {}
    /// Necks certified by a detection pass; `trigger` marks the pass at `g3`.
    fn on_necks(&mut self, _state: &FlowState, _necks: &[NeckRegion], _trigger: bool) {}
    /// Called after the surgery epoch is closed and removed pieces are gone.
    fn on_surgery(&mut self, _state: &FlowState, _record: &SurgeryRecord) {}
    fn on_discard(&mut self, _t: f64, _verdict: &ComponentVerdict) {}
}

impl LoopObserver for () {}

fn discard(
    state: &mut FlowState,
    verdicts: Vec<ComponentVerdict>,
    out: &mut Vec<ComponentVerdict>,
    obs: &mut dyn LoopObserver,
) {
    for v in verdicts {
        if v.verdict != Verdict::Retain {
            state.remove_component(v.component_id);
            obs.on_discard(state.time(), &v);
            out.push(v);
        }
    }
}

fn next_level(g0: f64, growth: f64, above: f64) -> f64 {
    let mut level = g0;
    while level <= above {
        level *= growth;
    }
    level
}

/// Runs the flow with surgeries until every component is discarded.
pub fn surgery_loop(
    state: &mut FlowState,
    thresholds: &SurgeryThresholds,
    neck_params: &NeckParams,
    params: &SurgeryParams,
    ctl: &StepControl,
    dim: Dimension,
    obs: &mut dyn LoopObserver,
) -> Result<TerminationReport, SurgeryError> {
    thresholds.validate()?;
    params.validate()?;
    neck_params.validate()?;
    ctl.validate()?;
    if let Some(m) = state.max_speed(dim)? {
        if m.g >= thresholds.g3 {
            return Err(SurgeryError::InitialAboveTrigger {
                g: m.g,
                g3: thresholds.g3,
            });
        }
    }
    let mut discarded = Vec::new();
    let mut surgeries = 0;
    let mut next_detect = next_level(neck_params.g0, params.detect_growth, 0.0);
    let mut since_classify = 0;
    loop {
        if since_classify == 0 {
            let v = classify_components(state, &[], &[], params, dim)?;
            discard(state, v, &mut discarded, obs);
        }
        since_classify = (since_classify + 1) % params.classify_every;
        let Some(max) = state.max_speed(dim)? else {
            let verdict = if surgeries == 0 {
                TerminationVerdict::Convex
            } else {
                TerminationVerdict::AllSpheres
            };
            return Ok(TerminationReport {
                verdict,
                surgeries,
                t: state.time(),
                steps: state.steps(),
                discarded,
            });
        };
        if state.time() > params.max_time {
            return Err(SurgeryError::TimeLimit(params.max_time));
        }
        if max.g >= thresholds.g3 {
            let necks = detect(state, neck_params, dim)?;
            obs.on_necks(state, &necks, true);
            let best = necks
                .iter()
                .filter(|n| n.certified_shrinking && n.component_id == max.component_id)
                .max_by(|a, b| a.center_g.total_cmp(&b.center_g));
            let Some(neck) = best else {
                let v = classify_components(state, &[], &[], params, dim)?;
                let argmax_convex = v
                    .iter()
                    .any(|v| v.component_id == max.component_id && v.verdict == Verdict::DiscardConvex);
                if argmax_convex {
                    discard(state, v, &mut discarded, obs);
                    continue;
                }
                return Err(SurgeryError::NoCertifiedNeck {
                    t: state.time(),
                    g: max.g,
                });
            };
            if surgeries == params.max_surgeries {
                return Err(SurgeryError::AbortTooManySurgeries(surgeries));
            }
            let cut = select_cut(neck, state, thresholds, params, dim)?;
            let outcome = perform(state, &cut, params, ctl.spacing, dim)?;
            surgeries += 1;
            state.close_surgery_epoch();
            let log_index = state.surgery_log().len() - 1;
            let v = classify_components(state, &[(outcome.removed, log_index)], &necks, params, dim)?;
            let removed_ids: BTreeSet<ComponentId> = [outcome.removed].into();
            let (forced, rest): (Vec<_>, Vec<_>) = v.into_iter().partition(|v| removed_ids.contains(&v.component_id));
            discard(state, forced, &mut discarded, obs);
            discard(state, rest, &mut discarded, obs);
            let post = state.max_speed(dim)?.map_or(0.0, |m| m.g);
            if post > thresholds.g2 {
                return Err(SurgeryError::PostSurgeryBound {
                    max_g: post,
                    g2: thresholds.g2,
                });
            }
            obs.on_surgery(state, &outcome.record);
            next_detect = next_level(neck_params.g0, params.detect_growth, post);
            continue;
        }
        if max.g >= next_detect {
            let necks = detect(state, neck_params, dim)?;
            obs.on_necks(state, &necks, false);
            next_detect = next_level(neck_params.g0, params.detect_growth, max.g);
        }
        state.step(ctl, dim, f64::INFINITY)?;
        obs.on_step(state);
    }
}
