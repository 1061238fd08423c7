//! Rotationally symmetric hypersurfaces through their generating curve.
//!
//! A hypersurface of revolution in `R^{n+1}` is stored as a planar polyline
//! `(x_i, u_i)` in the half-plane `u >= 0`, where `x` runs along the axis and
//! `u` is the distance to it. Each end of the polyline either meets the axis
//! (a *pole*) or is closed off by a mirror condition (a *reflecting* end,
//! used for the infinite-cylinder emulation).
//!
//! Orientation: the curve is traversed so that the round sphere has all
//! principal curvatures equal to `+1/r`. With tangent angle `phi`,
//! the profile curvature is `-dphi/ds`, the rotational curvatures are
//! `cos(phi)/u`, and the outward normal is `(-sin phi, cos phi)`.
//!
//! Discretisation: `phi` at a node is the direction of the centred chord,
//! `dphi/ds` is the turning angle between the two adjacent segments divided
//! by their mean length. Both ends are handled by a mirrored ghost node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::speed::{axisym_speed, CurvatureSpectrum, Dimension, SpeedError};
use crate::spline::CubicSpline;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("arclength {s} outside [0, {len}]")]
    OutOfRange { s: f64, len: f64 },
    #[error("non-positive radius {u:e} at interior node {index}")]
    DegenerateRadius { index: usize, u: f64 },
    #[error("curve has {0} points, at least 4 are needed")]
    CurveTooShort(usize),
    #[error("coincident consecutive nodes at index {0}")]
    CoincidentNodes(usize),
    #[error("target spacing must be positive")]
    BadSpacing,
    #[error("non-finite coordinate at node {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Speed(#[from] SpeedError),
}

/// How an end of the profile closes off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndKind {
    /// The curve meets the axis perpendicularly.
    Pole,
    /// Mirror symmetry across the plane `x = const` through the end node.
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub s: f64,
    pub x: f64,
    pub u: f64,
    pub phi: f64,
}

/// Identifier of a connected component in a [`crate::flow::FlowState`].
pub type ComponentId = u32;

/// A point on a particular component, addressed by arclength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePointRef {
    pub component_id: ComponentId,
    pub s: f64,
}

/// Immutable discretised generating curve with cached nodal curvatures.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    points: Vec<ProfilePoint>,
    start: EndKind,
    end: EndKind,
    l_profile: Vec<f64>,
    l_rot: Vec<f64>,
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = a % TAU;
    if a > PI {
        a -= TAU;
    } else if a <= -PI {
        a += TAU;
    }
    a
}

impl ProfileCurve {
    /// Builds a curve from node coordinates. Pole ends get `u = 0` exactly.
    pub fn from_xu(
        xs: Vec<f64>,
        mut us: Vec<f64>,
        start: EndKind,
        end: EndKind,
    ) -> Result<Self, GeometryError> {
        let n = xs.len();
        if n < 4 || us.len() != n {
            return Err(GeometryError::CurveTooShort(n.min(us.len())));
        }
        for i in 0..n {
            if !xs[i].is_finite() || !us[i].is_finite() {
                return Err(GeometryError::NonFinite(i));
            }
        }
        if start == EndKind::Pole {
            us[0] = 0.0;
        }
        if end == EndKind::Pole {
            us[n - 1] = 0.0;
        }
        for i in 0..n {
            let interior = (i > 0 || start == EndKind::Reflect) && (i + 1 < n || end == EndKind::Reflect);
            if interior && us[i] <= 0.0 {
                return Err(GeometryError::DegenerateRadius { index: i, u: us[i] });
            }
        }
        let mut s = vec![0.0; n];
        let mut seg = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let h = (xs[i + 1] - xs[i]).hypot(us[i + 1] - us[i]);
            if !(h > 0.0) {
                return Err(GeometryError::CoincidentNodes(i));
            }
            seg[i] = h;
            s[i + 1] = s[i] + h;
        }

        // Ghost nodes mirror the neighbour of each end node.
        let ghost = |kind: EndKind, end_i: usize, nb: usize, xs: &[f64], us: &[f64]| match kind {
            EndKind::Pole => (xs[nb], -us[nb]),
            EndKind::Reflect => (2.0 * xs[end_i] - xs[nb], us[nb]),
        };
        let (gx0, gu0) = ghost(start, 0, 1, &xs, &us);
        let (gx1, gu1) = ghost(end, n - 1, n - 2, &xs, &us);
        let px = |i: isize| -> (f64, f64) {
            if i < 0 {
                (gx0, gu0)
            } else if i as usize >= n {
                (gx1, gu1)
            } else {
                (xs[i as usize], us[i as usize])
            }
        };
        // Segment angles, including the two ghost segments.
        let theta: Vec<f64> = (-1..n as isize)
            .map(|i| {
                let (x0, u0) = px(i);
                let (x1, u1) = px(i + 1);
                (u1 - u0).atan2(x1 - x0)
            })
            .collect();
        let mut phi = vec![0.0; n];
        let mut l_profile = vec![0.0; n];
        let mut l_rot = vec![0.0; n];
        for i in 0..n {
            let (xa, ua) = px(i as isize - 1);
            let (xb, ub) = px(i as isize + 1);
            phi[i] = (ub - ua).atan2(xb - xa);
            let h_left = if i == 0 { seg[0] } else { seg[i - 1] };
            let h_right = if i == n - 1 { seg[n - 2] } else { seg[i] };
            let turn = wrap_angle(theta[i + 1] - theta[i]);
            l_profile[i] = -turn / (0.5 * (h_left + h_right));
        }
        match start {
            EndKind::Pole => {
                phi[0] = phi[0].signum() * std::f64::consts::FRAC_PI_2;
                l_rot[0] = l_profile[0];
            }
            EndKind::Reflect => {}
        }
        match end {
            EndKind::Pole => {
                phi[n - 1] = phi[n - 1].signum() * std::f64::consts::FRAC_PI_2;
                l_rot[n - 1] = l_profile[n - 1];
            }
            EndKind::Reflect => {}
        }
        for i in 0..n {
            let pole = (i == 0 && start == EndKind::Pole) || (i == n - 1 && end == EndKind::Pole);
            if !pole {
                l_rot[i] = phi[i].cos() / us[i];
            }
        }
        let points = (0..n)
            .map(|i| ProfilePoint {
                s: s[i],
                x: xs[i],
                u: us[i],
                phi: phi[i],
            })
            .collect();
        Ok(Self {
            points,
            start,
            end,
            l_profile,
            l_rot,
        })
    }

    pub fn points(&self) -> &[ProfilePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_kind(&self) -> EndKind {
        self.start
    }

    pub fn end_kind(&self) -> EndKind {
        self.end
    }

    pub fn pole_start(&self) -> bool {
        self.start == EndKind::Pole
    }

    pub fn pole_end(&self) -> bool {
        self.end == EndKind::Pole
    }

    /// Closed pole-to-pole profile, i.e. a topological sphere.
    pub fn is_closed(&self) -> bool {
        self.pole_start() && self.pole_end()
    }

    pub fn length(&self) -> f64 {
        self.points.last().map(|p| p.s).unwrap_or(0.0)
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn us(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.u).collect()
    }

    pub fn profile_curvatures(&self) -> &[f64] {
        &self.l_profile
    }

    pub fn rotational_curvatures(&self) -> &[f64] {
        &self.l_rot
    }

    pub fn spacings(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1].s - w[0].s)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.u))
    }

    pub fn axial_range(&self) -> (f64, f64) {
        self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.x), hi.max(p.x))
        })
    }

    /// Spectrum at node `i`.
    pub fn node_spectrum(&self, i: usize, dim: Dimension) -> Result<CurvatureSpectrum, GeometryError> {
        Ok(CurvatureSpectrum::axisymmetric(
            self.l_profile[i],
            self.l_rot[i],
            dim,
        )?)
    }

    /// Smallest principal curvature at node `i`.
    pub fn node_lambda1(&self, i: usize) -> f64 {
        self.l_profile[i].min(self.l_rot[i])
    }

    pub fn node_mean_curvature(&self, i: usize, dim: Dimension) -> f64 {
        self.l_profile[i] + (dim.as_f64() - 1.0) * self.l_rot[i]
    }

    /// `|A|^2` at node `i`.
    pub fn node_norm_sq(&self, i: usize, dim: Dimension) -> f64 {
        self.l_profile[i].powi(2) + (dim.as_f64() - 1.0) * self.l_rot[i].powi(2)
    }

    /// `G` at node `i`, or `None` where the node is not two-convex.
    pub fn node_speed(&self, i: usize, dim: Dimension) -> Option<f64> {
        axisym_speed(self.l_profile[i], self.l_rot[i], dim)
    }

    /// Nodal speeds, or the index of the first node that is not two-convex.
    pub fn speeds(&self, dim: Dimension) -> Result<Vec<f64>, usize> {
        (0..self.len())
            .map(|i| self.node_speed(i, dim).ok_or(i))
            .collect()
    }

    /// Index `i` such that `s` lies in `[s_i, s_{i+1}]`, and the fraction.
    fn locate(&self, s: f64) -> Result<(usize, f64), GeometryError> {
        let len = self.length();
        let slack = 1e-12 * len.max(1.0);
        if !(s >= -slack && s <= len + slack) {
            return Err(GeometryError::OutOfRange { s, len });
        }
        let s = s.clamp(0.0, len);
        let idx = self.points.partition_point(|p| p.s <= s);
        let i = idx.saturating_sub(1).min(self.len() - 2);
        let h = self.points[i + 1].s - self.points[i].s;
        Ok((i, ((s - self.points[i].s) / h).clamp(0.0, 1.0)))
    }

    /// Index of the node nearest to arclength `s`.
    pub fn nearest_node(&self, s: f64) -> Result<usize, GeometryError> {
        let (i, f) = self.locate(s)?;
        Ok(if f < 0.5 { i } else { i + 1 })
    }

    /// Linear interpolation of node data at arclength `s`.
    pub fn interpolate(&self, s: f64, f: impl Fn(usize) -> f64) -> Result<f64, GeometryError> {
        let (i, w) = self.locate(s)?;
        Ok((1.0 - w) * f(i) + w * f(i + 1))
    }

    /// Principal curvatures at arclength `s`, linearly interpolated between
    /// nodes.
    pub fn curvatures_at(&self, s: f64, dim: Dimension) -> Result<CurvatureSpectrum, GeometryError> {
        let (i, w) = self.locate(s)?;
        let u = (1.0 - w) * self.points[i].u + w * self.points[i + 1].u;
        let at_pole = (w == 0.0 && i == 0 && self.pole_start())
            || (w == 1.0 && i + 2 == self.len() && self.pole_end());
        if u <= 0.0 && !at_pole {
            return Err(GeometryError::DegenerateRadius { index: i, u });
        }
        let lp = (1.0 - w) * self.l_profile[i] + w * self.l_profile[i + 1];
        let lr = (1.0 - w) * self.l_rot[i] + w * self.l_rot[i + 1];
        Ok(CurvatureSpectrum::axisymmetric(lp, lr, dim)?)
    }

    pub fn mean_curvature_at(&self, s: f64, dim: Dimension) -> Result<f64, GeometryError> {
        Ok(self.curvatures_at(s, dim)?.mean_curvature())
    }

    pub fn x_at(&self, s: f64) -> Result<f64, GeometryError> {
        self.interpolate(s, |i| self.points[i].x)
    }

    pub fn u_at(&self, s: f64) -> Result<f64, GeometryError> {
        self.interpolate(s, |i| self.points[i].u)
    }

    /// Meridional distance `|s1 - s2|`.
    pub fn intrinsic_distance(&self, s1: f64, s2: f64) -> Result<f64, GeometryError> {
        self.locate(s1)?;
        self.locate(s2)?;
        Ok((s1 - s2).abs())
    }

    /// `int |S^{n-1}| u^{n-1} ds`, trapezoidal in arclength.
    pub fn total_area(&self, dim: Dimension) -> f64 {
        let k = dim.get() as i32 - 1;
        let w = dim.unit_sphere_area();
        self.points
            .windows(2)
            .map(|p| 0.5 * (p[0].u.powi(k) + p[1].u.powi(k)) * (p[1].s - p[0].s))
            .sum::<f64>()
            * w
    }

    /// Nodal quadrature weights `|S^{n-1}| u^{n-1} ds` for integrals over the
    /// hypersurface.
    pub fn area_weights(&self, dim: Dimension) -> Vec<f64> {
        let k = dim.get() as i32 - 1;
        let w = dim.unit_sphere_area();
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n - 1 {
            let h = self.points[i + 1].s - self.points[i].s;
            out[i] += 0.5 * h * self.points[i].u.powi(k) * w;
            out[i + 1] += 0.5 * h * self.points[i + 1].u.powi(k) * w;
        }
        out
    }

    /// Scales space by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, GeometryError> {
        Self::from_xu(
            self.points.iter().map(|p| p.x * c).collect(),
            self.points.iter().map(|p| p.u * c).collect(),
            self.start,
            self.end,
        )
    }

    /// Largest relative deviation of a segment length from `target`.
    pub fn spacing_drift(&self, target: f64) -> f64 {
        self.spacings()
            .map(|h| (h - target).abs() / target)
            .fold(0.0, f64::max)
    }

    /// Arclength-uniform resampling through a cubic spline of `(x(s), u(s))`.
    ///
    /// The number of segments is `round(L / target_spacing)` (at least 3).
    /// New nodes lie on the spline with equal chord lengths, so a curve that is
    /// already uniform at that segment count is returned unchanged. End
    /// nodes are kept exactly.
    pub fn resample(&self, target_spacing: f64) -> Result<Self, GeometryError> {
        if !(target_spacing > 0.0) || !target_spacing.is_finite() {
            return Err(GeometryError::BadSpacing);
        }
        let n_old = self.len();
        if n_old < 4 {
            return Err(GeometryError::CurveTooShort(n_old));
        }
        let len = self.length();
        let segments = ((len / target_spacing).round() as usize).max(3);

        // Splines over the original arclength, extended by mirrored ghosts so
        // that end derivatives respect the symmetry of each end.
        let ghosts = (n_old - 1).min(8);
        let mut knots = Vec::with_capacity(n_old + 2 * ghosts);
        let mut gx = Vec::with_capacity(n_old + 2 * ghosts);
        let mut gu = Vec::with_capacity(n_old + 2 * ghosts);
        let p = &self.points;
        let first = p[0];
        let last = p[n_old - 1];
        for k in (1..=ghosts).rev() {
            knots.push(-p[k].s);
            match self.start {
                EndKind::Pole => {
                    gx.push(p[k].x);
                    gu.push(-p[k].u);
                }
                EndKind::Reflect => {
                    gx.push(2.0 * first.x - p[k].x);
                    gu.push(p[k].u);
                }
            }
        }
        for q in p {
            knots.push(q.s);
            gx.push(q.x);
            gu.push(q.u);
        }
        for k in 1..=ghosts {
            let q = p[n_old - 1 - k];
            knots.push(2.0 * len - q.s);
            match self.end {
                EndKind::Pole => {
                    gx.push(q.x);
                    gu.push(-q.u);
                }
                EndKind::Reflect => {
                    gx.push(2.0 * last.x - q.x);
                    gu.push(q.u);
                }
            }
        }
        let sx = CubicSpline::natural(knots.clone(), gx);
        let su = CubicSpline::natural(knots, gu);

        let mut sigma: Vec<f64> = (0..=segments)
            .map(|k| len * k as f64 / segments as f64)
            .collect();
        let mut xs = vec![0.0; segments + 1];
        let mut us = vec![0.0; segments + 1];
        let mut cum = vec![0.0; segments + 1];
        for _ in 0..60 {
            for k in 0..=segments {
                xs[k] = sx.eval(sigma[k]);
                us[k] = su.eval(sigma[k]);
            }
            xs[0] = first.x;
            us[0] = first.u;
            xs[segments] = last.x;
            us[segments] = last.u;
            for k in 0..segments {
                cum[k + 1] = cum[k] + (xs[k + 1] - xs[k]).hypot(us[k + 1] - us[k]);
            }
            let total = cum[segments];
            let err = (0..=segments)
                .map(|k| (cum[k] - total * k as f64 / segments as f64).abs())
                .fold(0.0, f64::max);
            if err <= 1e-14 * total {
                break;
            }
            // Invert the piecewise-linear map sigma -> cumulative chord.
            let mut next = sigma.clone();
            let mut j = 0;
            for (k, nk) in next.iter_mut().enumerate().take(segments).skip(1) {
                let goal = total * k as f64 / segments as f64;
                while j + 1 < segments && cum[j + 1] < goal {
                    j += 1;
                }
                let w = (goal - cum[j]) / (cum[j + 1] - cum[j]);
                *nk = sigma[j] + w * (sigma[j + 1] - sigma[j]);
            }
            sigma = next;
        }
        Self::from_xu(xs, us, self.start, self.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;
    use std::f64::consts::PI;

    fn d3() -> Dimension {
        Dimension::new(3).unwrap()
    }

    #[test]
    fn sphere_curvatures_are_umbilic() {
        let c = scenario::sphere_profile(1.0, 0.01).unwrap();
        for i in 0..c.len() {
            let lp = c.profile_curvatures()[i];
            let lr = c.rotational_curvatures()[i];
            assert!((lp - 1.0).abs() < 1e-4, "node {i}: {lp}");
            assert!((lr - 1.0).abs() < 1e-4, "node {i}: {lr}");
        }
        let spec = c.curvatures_at(0.5 * c.length(), d3()).unwrap();
        assert!((spec.lambda1() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn pole_tangent_is_vertical() {
        let c = scenario::sphere_profile(0.7, 0.02).unwrap();
        let p = c.points();
        assert!((p[0].phi - PI / 2.0).abs() < 1e-12);
        assert!((p[p.len() - 1].phi + PI / 2.0).abs() < 1e-12);
        assert!(c.is_closed());
    }

    #[test]
    fn cylinder_curvatures() {
        let c = scenario::cylinder_profile(0.5, 2.0, 0.05).unwrap();
        for i in 0..c.len() {
            assert!(c.profile_curvatures()[i].abs() < 1e-12);
            assert!((c.rotational_curvatures()[i] - 2.0).abs() < 1e-12);
        }
        let h = c.mean_curvature_at(1.0, d3()).unwrap();
        assert!((h - 4.0).abs() < 1e-12);
        let g = c.node_speed(3, d3()).unwrap();
        assert!((h / g - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_mean_curvature() {
        let c = scenario::sphere_profile(2.0, 0.01).unwrap();
        let h = c.mean_curvature_at(1.0, d3()).unwrap();
        assert!((h - 1.5).abs() < 1e-4);
    }

    #[test]
    fn out_of_range_queries() {
        let c = scenario::cylinder_profile(1.0, 3.0, 0.1).unwrap();
        assert!(matches!(
            c.curvatures_at(3.5, d3()),
            Err(GeometryError::OutOfRange { .. })
        ));
        assert!(c.intrinsic_distance(-1.0, 0.0).is_err());
        assert_eq!(c.intrinsic_distance(0.0, 3.0).unwrap(), 3.0);
        assert_eq!(c.intrinsic_distance(1.2, 1.2).unwrap(), 0.0);
        assert_eq!(
            c.intrinsic_distance(0.4, 2.1).unwrap(),
            c.intrinsic_distance(2.1, 0.4).unwrap()
        );
    }

    #[test]
    fn areas_of_models() {
        let s = scenario::sphere_profile(1.0, 0.005).unwrap();
        let want = 2.0 * PI * PI;
        assert!(((s.total_area(d3()) - want) / want).abs() < 1e-4);
        let c = scenario::cylinder_profile(0.5, 2.0, 0.05).unwrap();
        let want = 4.0 * PI * 0.25 * 2.0;
        assert!(((c.total_area(d3()) - want) / want).abs() < 1e-12);
        let big = s.scaled(2.0).unwrap();
        assert!((big.total_area(d3()) / s.total_area(d3()) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn resample_is_identity_on_uniform_input() {
        let c = scenario::sphere_profile(1.0, 0.02).unwrap();
        let h = c.length() / (c.len() - 1) as f64;
        let r = c.resample(h).unwrap();
        assert_eq!(r.len(), c.len());
        for (a, b) in r.points().iter().zip(c.points()) {
            assert!((a.x - b.x).abs() < 1e-12 && (a.u - b.u).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_keeps_cylinder_radius_and_poles() {
        let c = scenario::cylinder_profile(0.8, 2.0, 0.1).unwrap();
        let r = c.resample(0.037).unwrap();
        assert!(r.us().iter().all(|&u| u == 0.8));
        let s = scenario::sphere_profile(1.0, 0.02).unwrap();
        let r = s.resample(0.013).unwrap();
        assert_eq!(r.points()[0].x, s.points()[0].x);
        assert_eq!(r.points()[0].u, 0.0);
        assert_eq!(r.points().last().unwrap().u, 0.0);
    }

    #[test]
    fn resample_preserves_length_and_is_idempotent() {
        let s = scenario::sphere_profile(1.0, 0.01).unwrap();
        // a non-uniform curve: perturb the node distribution along the circle
        let n = s.len();
        let (xs, us): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let t = t + 0.05 * (2.0 * PI * t).sin() / (2.0 * PI);
                let a = PI * t;
                (-a.cos(), a.sin())
            })
            .unzip();
        let c = ProfileCurve::from_xu(xs, us, EndKind::Pole, EndKind::Pole).unwrap();
        let r1 = c.resample(0.01).unwrap();
        assert!(((r1.length() - c.length()) / c.length()).abs() < 1e-6);
        assert!(r1.spacing_drift(r1.length() / (r1.len() - 1) as f64) < 1e-12);
        let r2 = r1.resample(0.01).unwrap();
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.points().iter().zip(r2.points()) {
            assert!((a.x - b.x).abs() < 1e-10 && (a.u - b.u).abs() < 1e-10);
        }
    }

    #[test]
    fn sphere_curvature_converges_at_second_order() {
        let err = |h: f64| {
            let c = scenario::sphere_profile(1.0, h).unwrap();
            (0..c.len())
                .map(|i| {
                    (c.profile_curvatures()[i] - 1.0)
                        .abs()
                        .max((c.rotational_curvatures()[i] - 1.0).abs())
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn resampled_curvature_converges() {
        // Resample a fine circle onto coarser grids; error should drop ~4x per halving.
        let fine = scenario::sphere_profile(1.0, 0.0025).unwrap();
        let err = |h: f64| {
            let c = fine.resample(h).unwrap();
            (0..c.len())
                .map(|i| (c.profile_curvatures()[i] - 1.0).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.04) / err(0.02);
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn too_short_and_degenerate_curves() {
        assert!(matches!(
            ProfileCurve::from_xu(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], EndKind::Pole, EndKind::Pole),
            Err(GeometryError::CurveTooShort(3))
        ));
        assert!(matches!(
            ProfileCurve::from_xu(
                vec![0.0, 1.0, 2.0, 3.0],
                vec![0.0, 1.0, -0.1, 0.0],
                EndKind::Pole,
                EndKind::Pole
            ),
            Err(GeometryError::DegenerateRadius { index: 2, .. })
        ));
    }
}
