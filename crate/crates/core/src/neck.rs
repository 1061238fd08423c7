//! Neck detection: backward parabolic neighbourhoods, the surgery-free test,
//! geometric certification of cylindrical stretches and the convexity
//! dichotomy search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowError, FlowState, Snapshot};
use crate::profile::{ComponentId, GeometryError, ProfileCurve, SurfacePointRef};
use crate::speed::Dimension;
use crate::surgery::SurgeryLog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeckError {
    #[error("history does not cover the backward neighbourhood")]
    InsufficientHistory,
    #[error("no component with id {0}")]
    UnknownComponent(ComponentId),
    #[error("speed undefined at the query point (not two-convex)")]
    NotTwoConvex,
    #[error("dichotomy hypothesis not met: {0}")]
    HypothesisNotMet(String),
    #[error("dichotomy search ball holds no witness but does not exhaust the component")]
    Inconclusive,
    #[error("invalid neck parameters: {0}")]
    BadParams(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Which law the past radii of a shrinking neck are compared with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoLaw {
    /// `8/((n-1)(n+2))`, the cylinder law of this flow.
    Derived,
    /// `2(n-1)`, the mean curvature flow cylinder law.
    MeanCurvature,
    Custom(f64),
}

impl RhoLaw {
    pub fn coefficient(self, dim: Dimension) -> f64 {
        let n = dim.as_f64();
        match self {
            RhoLaw::Derived => 8.0 / ((n - 1.0) * (n + 2.0)),
            RhoLaw::MeanCurvature => 2.0 * (n - 1.0),
            RhoLaw::Custom(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeckParams {
    pub epsilon: f64,
    /// Neighbourhood length in units of `r_hat`.
    #[serde(rename = "L")]
    pub l: f64,
    pub theta: f64,
    pub eta0: f64,
    pub g0: f64,
    pub rho: RhoLaw,
    /// Every `stride`-th node is a candidate centre.
    pub stride: usize,
    /// Upper bound for `theta` when known.
    pub d_sharp: Option<f64>,
}

impl Default for NeckParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            l: 10.0,
            theta: 0.1,
            eta0: 0.1,
            g0: 4.0,
            rho: RhoLaw::Derived,
            stride: 4,
            d_sharp: None,
        }
    }
}

impl NeckParams {
    pub fn validate(&self) -> Result<(), NeckError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.2) {
            return Err(NeckError::BadParams("epsilon must lie in (0, 0.2]"));
        }
        if !(self.l >= 10.0) {
            return Err(NeckError::BadParams("L must be at least 10"));
        }
        if !(self.theta >= 0.0) {
            return Err(NeckError::BadParams("theta must be non-negative"));
        }
        if let Some(d) = self.d_sharp {
            if self.theta > d {
                return Err(NeckError::BadParams("theta must not exceed d#"));
            }
        }
        if !(self.eta0 > 0.0) {
            return Err(NeckError::BadParams("eta0 must be positive"));
        }
        if !(self.g0 > 0.0) {
            return Err(NeckError::BadParams("g0 must be positive"));
        }
        if !(self.rho.coefficient(Dimension::new(3).expect("valid")) > 0.0) {
            return Err(NeckError::BadParams("rho coefficient must be positive"));
        }
        if self.stride == 0 {
            return Err(NeckError::BadParams("stride must be at least 1"));
        }
        Ok(())
    }
}

/// `(n-1)(n-2)/(2G)`.
pub fn r_hat(g: f64, dim: Dimension) -> f64 {
    let n = dim.as_f64();
    (n - 1.0) * (n - 2.0) / (2.0 * g)
}

/// `1/(2 (n-1)^2 (n-2)^2 c#)`.
pub fn d_sharp(c_sharp: f64, dim: Dimension) -> f64 {
    let n = dim.as_f64();
    1.0 / (2.0 * (n - 1.0).powi(2) * (n - 2.0).powi(2) * c_sharp)
}

/// `(1/(8 c# K), 1/(8 c# K^2))`: radius and duration of the neighbourhood
/// around a point with `G >= 2K` that no surgery at scale `K` can reach.
pub fn surgery_free_window_from_k(c_sharp: f64, k: f64) -> (f64, f64) {
    (1.0 / (8.0 * c_sharp * k), 1.0 / (8.0 * c_sharp * k * k))
}

/// `max(G0, 5K)`, the curvature level from which necks adjacent to a
/// surgery region are guaranteed.
pub fn adjacency_threshold(g0: f64, k: f64) -> f64 {
    g0.max(5.0 * k)
}

/// Backward parabolic neighbourhood of a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParabolicNbhd {
    pub center: SurfacePointRef,
    pub t: f64,
    pub spatial_radius: f64,
    pub time_window: f64,
    /// Axial extent of the meridional ball at time `t`.
    pub axial_extent: [f64; 2],
}

pub(crate) fn curve_of(state: &FlowState, id: ComponentId) -> Result<&ProfileCurve, NeckError> {
    state.component(id).ok_or(NeckError::UnknownComponent(id))
}

/// Interpolated speed at a point of a curve.
pub fn speed_at(curve: &ProfileCurve, s: f64, dim: Dimension) -> Result<f64, NeckError> {
    let g = curve.speeds(dim).map_err(|_| NeckError::NotTwoConvex)?;
    Ok(curve.interpolate(s, |i| g[i])?)
}

fn axial_extent(curve: &ProfileCurve, s0: f64, s1: f64) -> [f64; 2] {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in curve.points().iter().filter(|p| p.s >= s0 && p.s <= s1) {
        lo = lo.min(p.x);
        hi = hi.max(p.x);
    }
    for s in [s0, s1] {
        if let Ok(x) = curve.x_at(s.clamp(0.0, curve.length())) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    [lo, hi]
}

pub fn build_nbhd(
    state: &FlowState,
    p: SurfacePointRef,
    params: &NeckParams,
    dim: Dimension,
) -> Result<ParabolicNbhd, NeckError> {
    let curve = curve_of(state, p.component_id)?;
    let g = speed_at(curve, p.s, dim)?;
    let rh = r_hat(g, dim);
    let radius = rh * params.l;
    let window = params.theta * rh * rh;
    let t = state.time();
    if window > 0.0 {
        let earliest = state
            .history()
            .earliest_in_epoch(state.surgery_epoch())
            .unwrap_or(t);
        if t - window < earliest - 1e-12 * t.abs().max(1.0) {
            return Err(NeckError::InsufficientHistory);
        }
    }
    Ok(ParabolicNbhd {
        center: p,
        t,
        spatial_radius: radius,
        time_window: window,
        axial_extent: axial_extent(curve, p.s - radius, p.s + radius),
    })
}

/// True iff no logged surgery falls into the neighbourhood. The axial
/// extent is inflated by one spatial radius on each side.
pub fn surgery_free(nbhd: &ParabolicNbhd, log: &SurgeryLog) -> bool {
    let lo = nbhd.axial_extent[0] - nbhd.spatial_radius;
    let hi = nbhd.axial_extent[1] + nbhd.spatial_radius;
    let t0 = nbhd.t - nbhd.time_window;
    !log.records().iter().any(|r| {
        r.time >= t0 && r.time <= nbhd.t && r.modified_interval[0] <= hi && r.modified_interval[1] >= lo
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nd1Report {
    pub passes: bool,
    pub g: f64,
    pub l1_over_g: f64,
}

pub fn check_nd1(
    state: &FlowState,
    p: SurfacePointRef,
    params: &NeckParams,
    dim: Dimension,
) -> Result<Nd1Report, NeckError> {
    let curve = curve_of(state, p.component_id)?;
    let g = speed_at(curve, p.s, dim)?;
    let l1 = curve.curvatures_at(p.s, dim)?.lambda1();
    let l1_over_g = l1 / g;
    Ok(Nd1Report {
        passes: g >= params.g0 && l1_over_g <= params.eta0,
        g,
        l1_over_g,
    })
}

/// A certified cylindrical stretch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeckRegion {
    pub component_id: ComponentId,
    /// Arclength interval `[s_a, s_b]`.
    pub interval: [f64; 2],
    pub axial_interval: [f64; 2],
    pub center_s: f64,
    pub center_x: f64,
    pub center_g: f64,
    pub mean_radius: f64,
    pub radius_deviation: f64,
    pub axis_deviation: f64,
    pub center_l1_over_g: f64,
    pub certified_shrinking: bool,
    /// `mean_radius / r_hat(center_g)`.
    pub radius_over_rhat: f64,
    /// Largest `|measured - predicted| / mean_radius` of past radii.
    pub shrink_error: f64,
}

/// Mean radius over an axial interval, on the contiguous run of nodes of
/// `curve` around the node closest to `near`.
fn mean_radius_on(curve: &ProfileCurve, x: [f64; 2], near: (f64, f64)) -> Option<f64> {
    let pts = curve.points();
    let j = pts
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.x - near.0).hypot(a.1.u - near.1);
            let db = (b.1.x - near.0).hypot(b.1.u - near.1);
            da.total_cmp(&db)
        })?
        .0;
    let inside = |i: usize| pts[i].x >= x[0] && pts[i].x <= x[1];
    if !inside(j) {
        return None;
    }
    let mut a = j;
    while a > 0 && inside(a - 1) {
        a -= 1;
    }
    let mut b = j;
    while b + 1 < pts.len() && inside(b + 1) {
        b += 1;
    }
    Some(pts[a..=b].iter().map(|p| p.u).sum::<f64>() / (b - a + 1) as f64)
}

struct Candidate {
    region: NeckRegion,
}

fn certify(
    state: &FlowState,
    id: ComponentId,
    curve: &ProfileCurve,
    g: &[f64],
    i: usize,
    params: &NeckParams,
    dim: Dimension,
) -> Result<Option<Candidate>, NeckError> {
    let p = curve.points()[i];
    let rh = r_hat(g[i], dim);
    let half = params.l * rh;
    let len = curve.length();
    let (mut sa, mut sb) = (p.s - half, p.s + half);
    // A window may run past a mirror end (the reflected surface continues
    // it) but not past a pole.
    if sa < 0.0 {
        if curve.pole_start() {
            return Ok(None);
        }
        sa = 0.0;
    }
    if sb > len {
        if curve.pole_end() {
            return Ok(None);
        }
        sb = len;
    }
    let nodes: Vec<usize> = (0..curve.len())
        .filter(|&k| curve.points()[k].s >= sa && curve.points()[k].s <= sb)
        .collect();
    if nodes.is_empty() {
        return Ok(None);
    }
    let pts = curve.points();
    let mean = nodes.iter().map(|&k| pts[k].u).sum::<f64>() / nodes.len() as f64;
    let radius_deviation = nodes
        .iter()
        .map(|&k| (pts[k].u - mean).abs() / mean)
        .fold(0.0, f64::max);
    let axis_deviation = nodes
        .iter()
        .map(|&k| pts[k].phi.sin().abs())
        .fold(0.0, f64::max);
    if radius_deviation > params.epsilon || axis_deviation > params.epsilon {
        return Ok(None);
    }
    let nbhd = build_nbhd(state, SurfacePointRef { component_id: id, s: p.s }, params, dim);
    let nbhd = match nbhd {
        Ok(n) => n,
        Err(NeckError::InsufficientHistory) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !surgery_free(&nbhd, state.surgery_log()) {
        return Ok(None);
    }
    let x = axial_extent(curve, sa, sb);
    let window = nbhd.time_window;
    let c = params.rho.coefficient(dim);
    let mut shrink_error: f64 = 0.0;
    let mut shrinking = true;
    if window > 0.0 {
        let epoch = state.surgery_epoch();
        let t = state.time();
        let eval = |snap: &Snapshot| {
            snap.components
                .get(&id)
                .and_then(|c| mean_radius_on(c, x, (p.x, p.u)))
        };
        for k in 1..=4 {
            let tau = t - window * k as f64 / 4.0;
            match state.history().interpolate(epoch, tau, eval) {
                Ok(r) => {
                    let predicted = (mean * mean + c * (t - tau)).sqrt();
                    let err = (r - predicted).abs() / mean;
                    shrink_error = shrink_error.max(err);
                    let sandwich = r >= mean && r <= 2.0 * mean;
                    if err > params.epsilon || !sandwich || predicted > 2.0 * mean {
                        shrinking = false;
                    }
                }
                Err(_) => shrinking = false,
            }
        }
    }
    let l1 = curve.node_lambda1(i);
    Ok(Some(Candidate {
        region: NeckRegion {
            component_id: id,
            interval: [sa, sb],
            axial_interval: x,
            center_s: p.s,
            center_x: p.x,
            center_g: g[i],
            mean_radius: mean,
            radius_deviation,
            axis_deviation,
            center_l1_over_g: l1 / g[i],
            certified_shrinking: shrinking,
            radius_over_rhat: mean / rh,
            shrink_error,
        },
    }))
}

/// Certified necks, merged where windows overlap, ordered by component and
/// arclength.
pub fn detect(state: &FlowState, params: &NeckParams, dim: Dimension) -> Result<Vec<NeckRegion>, NeckError> {
    params.validate()?;
    let mut out = Vec::new();
    for (&id, curve) in state.components() {
        let g = match curve.speeds(dim) {
            Ok(g) => g,
            Err(_) => return Err(NeckError::NotTwoConvex),
        };
        let mut found: Vec<NeckRegion> = Vec::new();
        for i in (0..curve.len()).step_by(params.stride) {
            if g[i] < params.g0 || curve.node_lambda1(i) / g[i] > params.eta0 {
                continue;
            }
            if let Some(c) = certify(state, id, curve, &g, i, params, dim)? {
                found.push(c.region);
            }
        }
        found.sort_by(|a, b| a.interval[0].total_cmp(&b.interval[0]));
        let mut merged: Vec<NeckRegion> = Vec::new();
        for r in found {
            match merged.last_mut() {
                Some(m) if r.interval[0] <= m.interval[1] => {
                    let lo = m.interval[0].min(r.interval[0]);
                    let hi = m.interval[1].max(r.interval[1]);
                    let xlo = m.axial_interval[0].min(r.axial_interval[0]);
                    let xhi = m.axial_interval[1].max(r.axial_interval[1]);
                    let better = r.center_l1_over_g < m.center_l1_over_g
                        || (r.center_l1_over_g == m.center_l1_over_g && r.center_s < m.center_s);
                    if better {
                        *m = r;
                    }
                    m.interval = [lo, hi];
                    m.axial_interval = [xlo, xhi];
                }
                _ => merged.push(r),
            }
        }
        out.extend(merged);
    }
    Ok(out)
}

/// `alpha_0 = (exp(c# pi / eta0) - 1) / c#` and `gamma_0 = 1 + c# alpha_0`.
pub fn dichotomy_constants(eta0: f64, c_sharp: f64) -> (f64, f64) {
    let alpha = ((c_sharp * std::f64::consts::PI / eta0).exp() - 1.0) / c_sharp;
    (alpha, 1.0 + c_sharp * alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum Dichotomy {
    AllConvex,
    Witness {
        point: SurfacePointRef,
        g: f64,
        l1_over_g: f64,
        distance: f64,
        /// `G(q) >= G(p) / gamma_0`.
        bound_holds: bool,
    },
}

/// Searches the ball of radius `alpha_0 / G(p)` around a uniformly convex
/// point for a point with `l1 <= eta0 G`.
pub fn convexity_dichotomy(
    state: &FlowState,
    p: SurfacePointRef,
    eta0: f64,
    c_sharp: f64,
    g_sharp: f64,
    dim: Dimension,
) -> Result<Dichotomy, NeckError> {
    let curve = curve_of(state, p.component_id)?;
    let g = curve.speeds(dim).map_err(|_| NeckError::NotTwoConvex)?;
    let gp = curve.interpolate(p.s, |i| g[i])?;
    let l1p = curve.curvatures_at(p.s, dim)?.lambda1();
    let (alpha, gamma) = dichotomy_constants(eta0, c_sharp);
    if !(l1p > eta0 * gp) {
        return Err(NeckError::HypothesisNotMet(format!(
            "l1/G = {:.4} <= eta0 = {eta0}",
            l1p / gp
        )));
    }
    if !(gp >= gamma * g_sharp) {
        return Err(NeckError::HypothesisNotMet(format!(
            "G = {gp:.4e} < gamma0 G# = {:.4e}",
            gamma * g_sharp
        )));
    }
    let radius = alpha / gp;
    let mut best: Option<(f64, usize)> = None;
    for (i, q) in curve.points().iter().enumerate() {
        let d = (q.s - p.s).abs();
        if d <= radius && curve.node_lambda1(i) <= eta0 * g[i] && best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    if let Some((d, i)) = best {
        let q = curve.points()[i];
        return Ok(Dichotomy::Witness {
            point: SurfacePointRef {
                component_id: p.component_id,
                s: q.s,
            },
            g: g[i],
            l1_over_g: curve.node_lambda1(i) / g[i],
            distance: d,
            bound_holds: g[i] >= gp / gamma,
        });
    }
    let covers = p.s - radius <= 0.0 && p.s + radius >= curve.length();
    if covers {
        Ok(Dichotomy::AllConvex)
    } else {
        Err(NeckError::Inconclusive)
    }
}
