//! Running measurements of the curvature estimates: convexity and
//! cylindrical ratios, the gradient ratios `|grad G|/G^2` and
//! `|dG/dt|/G^3`, and the curvature-control inequality that follows from a
//! gradient bound.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowState;
use crate::neck::{curve_of, NeckError};
use crate::profile::SurfacePointRef;
use crate::speed::Dimension;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("G(p0) = {g:.4e} is below gamma * threshold = {needed:.4e}")]
    ThresholdNotMet { g: f64, needed: f64 },
    #[error("speed undefined on the state (not two-convex)")]
    NotTwoConvex,
    #[error(transparent)]
    Neck(#[from] NeckError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed estimates record on line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// The threshold `G#` above which ratios are collected.
    pub g_threshold: f64,
    /// Scan every `sample_stride` accepted steps.
    pub sample_stride: u64,
    /// Report samples with `min l1/G` below this.
    pub convexity_floor: Option<f64>,
    /// Report samples with `|grad G|/G^2` above this.
    pub gradient_ceiling: Option<f64>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            g_threshold: 2.0,
            sample_stride: 50,
            convexity_floor: None,
            gradient_ceiling: None,
        }
    }
}

/// Estimate quantities at one instant. Ratio fields are `None` when no
/// point reaches the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSnapshot {
    pub t: f64,
    pub max_g: f64,
    pub min_l1_over_g: Option<f64>,
    pub max_h_over_g: Option<f64>,
    pub grad_ratio: Option<f64>,
    pub time_ratio: Option<f64>,
    pub area: f64,
}

/// A sampled quantity outside its configured bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateViolation {
    pub quantity: &'static str,
    pub value: f64,
    pub bound: f64,
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.g_threshold > 0.0) {
            return Err("g_threshold must be positive");
        }
        if self.sample_stride == 0 {
            return Err("sample_stride must be at least 1");
        }
        Ok(())
    }

    /// Configured bounds the snapshot breaks.
    pub fn violations(&self, s: &EstimateSnapshot) -> Vec<EstimateViolation> {
        let mut out = Vec::new();
        if let (Some(bound), Some(value)) = (self.convexity_floor, s.min_l1_over_g) {
            if value < bound {
                out.push(EstimateViolation {
                    quantity: "min_l1_over_g",
                    value,
                    bound,
                });
            }
        }
        if let (Some(bound), Some(value)) = (self.gradient_ceiling, s.grad_ratio) {
            if value > bound {
                out.push(EstimateViolation {
                    quantity: "grad_ratio",
                    value,
                    bound,
                });
            }
        }
        out
    }
}

fn fold_opt(acc: Option<f64>, v: f64, f: fn(f64, f64) -> f64) -> Option<f64> {
    Some(acc.map_or(v, |a| f(a, v)))
}

/// Discrete `|grad G|/G^2` on the segment `[i, i+1]`:
/// `|G_{i+1} - G_i| / (h min(G_i, G_{i+1})^2)`.
///
/// This bounds `|1/G_{i+1} - 1/G_i| / h`, which is what the curvature
/// control inequality integrates.
pub fn segment_grad_ratio(g0: f64, g1: f64, h: f64) -> f64 {
    let m = g0.min(g1);
    (g1 - g0).abs() / (h * m * m)
}

pub fn scan(state: &FlowState, cfg: &MonitorConfig, dim: Dimension) -> Result<EstimateSnapshot, MonitorError> {
    let thr = cfg.g_threshold;
    let mut max_g: f64 = 0.0;
    let mut min_l1 = None;
    let mut max_h = None;
    let mut grad = None;
    for c in state.components().values() {
        let g = c.speeds(dim).map_err(|_| MonitorError::NotTwoConvex)?;
        let pts = c.points();
        for i in 0..c.len() {
            max_g = max_g.max(g[i]);
            if g[i] >= thr {
                min_l1 = fold_opt(min_l1, c.node_lambda1(i) / g[i], f64::min);
                max_h = fold_opt(max_h, c.node_mean_curvature(i, dim) / g[i], f64::max);
            }
            if i + 1 < c.len() && g[i] >= thr && g[i + 1] >= thr {
                let r = segment_grad_ratio(g[i], g[i + 1], pts[i + 1].s - pts[i].s);
                grad = fold_opt(grad, r, f64::max);
            }
        }
    }
    Ok(EstimateSnapshot {
        t: state.time(),
        max_g,
        min_l1_over_g: min_l1,
        max_h_over_g: max_h,
        grad_ratio: grad,
        time_ratio: time_ratio(state, thr, dim),
        area: state.total_area(dim),
    })
}

/// `max |dG/dt| / G^3` over the threshold set, from the two latest steps at
/// matched arclength fractions. `None` without a usable previous step.
fn time_ratio(state: &FlowState, thr: f64, dim: Dimension) -> Option<f64> {
    let recent: Vec<_> = state.history().recent().collect();
    if recent.len() < 2 {
        return None;
    }
    let (prev, now) = (recent[recent.len() - 2], recent[recent.len() - 1]);
    if prev.surgery_epoch != now.surgery_epoch || now.t <= prev.t {
        return None;
    }
    let dt = now.t - prev.t;
    let mut out = None;
    for (id, c) in &now.components {
        let old = prev.components.get(id)?;
        let g = c.speeds(dim).ok()?;
        let g_old = old.speeds(dim).ok()?;
        let (len, len_old) = (c.length(), old.length());
        for (i, p) in c.points().iter().enumerate() {
            if g[i] < thr {
                continue;
            }
            let s_old = p.s / len * len_old;
            let go = old.interpolate(s_old, |k| g_old[k]).ok()?;
            out = fold_opt(out, (g[i] - go).abs() / dt / g[i].powi(3), f64::max);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlReport {
    pub g_p0: f64,
    /// Search radius `(gamma - 1)/(c# G(p0))`.
    pub radius: f64,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `G(q) - G(p0)/(1 + c# d G(p0))` over the samples.
    pub worst_margin: f64,
}

/// Checks `G(q) >= G(p0) / (1 + c# d(p0, q) G(p0))` at every node within
/// `(gamma - 1)/(c# G(p0))` of `p0`, and at `p0` itself.
pub fn curvature_control_check(
    state: &FlowState,
    p0: SurfacePointRef,
    gamma: f64,
    c_sharp: f64,
    cfg: &MonitorConfig,
    dim: Dimension,
) -> Result<ControlReport, MonitorError> {
    let curve = curve_of(state, p0.component_id)?;
    let g = curve.speeds(dim).map_err(|_| MonitorError::NotTwoConvex)?;
    let gp = curve
        .interpolate(p0.s, |i| g[i])
        .map_err(|e| MonitorError::Neck(e.into()))?;
    if !(gp >= gamma * cfg.g_threshold) {
        return Err(MonitorError::ThresholdNotMet {
            g: gp,
            needed: gamma * cfg.g_threshold,
        });
    }
    let radius = (gamma - 1.0) / (c_sharp * gp);
    let tol = 1e-12 * gp;
    let mut samples = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut check = |d: f64, gq: f64| {
        let margin = gq - gp / (1.0 + c_sharp * d * gp);
        samples += 1;
        if margin < -tol {
            violations += 1;
        }
        worst = worst.min(margin);
    };
    check(0.0, gp);
    for (i, q) in curve.points().iter().enumerate() {
        let d = (q.s - p0.s).abs();
        if d <= radius {
            check(d, g[i]);
        }
    }
    Ok(ControlReport {
        g_p0: gp,
        radius,
        samples,
        violations,
        worst_margin: worst,
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), num)
}

/// One line of the estimates series, numbers to 17 significant digits.
pub fn format_record(s: &EstimateSnapshot) -> String {
    format!(
        "{{\"t\":{},\"max_g\":{},\"min_l1_over_g\":{},\"max_h_over_g\":{},\"grad_ratio\":{},\"time_ratio\":{},\"area\":{}}}",
        num(s.t),
        num(s.max_g),
        opt(s.min_l1_over_g),
        opt(s.max_h_over_g),
        opt(s.grad_ratio),
        opt(s.time_ratio),
        num(s.area)
    )
}

/// Writes a whole series, one record per line.
pub fn persist(series: &[EstimateSnapshot], path: &Path) -> Result<(), MonitorError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in series {
        writeln!(w, "{}", format_record(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<EstimateSnapshot>, MonitorError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(&line).map_err(|source| MonitorError::Parse { line: k + 1, source })?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_format_has_seventeen_digits_and_nulls() {
        let s = EstimateSnapshot {
            t: 0.1,
            max_g: 2.0 / 3.0,
            min_l1_over_g: None,
            max_h_over_g: Some(4.5),
            grad_ratio: None,
            time_ratio: None,
            area: 1.0,
        };
        let line = format_record(&s);
        assert!(line.contains("\"t\":1.0000000000000001e-1"), "{line}");
        assert!(line.contains("\"min_l1_over_g\":null"));
        let back: EstimateSnapshot = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn segment_ratio_bounds_reciprocal_difference() {
        let (a, b, h) = (3.0, 3.6, 0.05);
        let r = segment_grad_ratio(a, b, h);
        assert!((1.0 / a - 1.0 / b).abs() / h <= r);
    }
}
