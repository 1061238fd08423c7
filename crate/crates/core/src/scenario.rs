//! Initial data presets.
//!
//! Every preset is built densely from closed-form pieces and then resampled
//! to the requested spacing, so the returned curves are arclength-uniform.

use serde::{Deserialize, Serialize};

use crate::profile::{EndKind, GeometryError, ProfileCurve};

/// Round sphere of radius `r`, nodes equally spaced in angle.
pub fn sphere_profile(r: f64, spacing: f64) -> Result<ProfileCurve, GeometryError> {
    if !(r > 0.0) || !(spacing > 0.0) {
        return Err(GeometryError::BadSpacing);
    }
    let segments = ((std::f64::consts::PI * r / spacing).round() as usize).max(3);
    let (xs, us) = (0..=segments)
        .map(|k| {
            let a = std::f64::consts::PI * k as f64 / segments as f64;
            (-r * a.cos(), r * a.sin())
        })
        .unzip();
    ProfileCurve::from_xu(xs, us, EndKind::Pole, EndKind::Pole)
}

/// Cylinder `u = r` over `x in [0, length]` with mirror ends.
pub fn cylinder_profile(r: f64, length: f64, spacing: f64) -> Result<ProfileCurve, GeometryError> {
    if !(r > 0.0) || !(spacing > 0.0) || !(length > 0.0) {
        return Err(GeometryError::BadSpacing);
    }
    let segments = ((length / spacing).round() as usize).max(3);
    let xs = (0..=segments)
        .map(|k| length * k as f64 / segments as f64)
        .collect();
    ProfileCurve::from_xu(xs, vec![r; segments + 1], EndKind::Reflect, EndKind::Reflect)
}

/// `C^infinity` step from 0 at `z <= 0` to 1 at `z >= 1`.
pub fn smooth_step(z: f64) -> f64 {
    fn psi(z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            (-1.0 / z).exp()
        }
    }
    if z <= 0.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else {
        let a = psi(z);
        a / (a + psi(1.0 - z))
    }
}

/// A chain of round bulbs joined by long thin tubes.
///
/// Along the axis: hemispherical end, bulb body, then for every waist a
/// taper down to the waist radius, a flat tube, a taper back up, and a bulb
/// body; the chain closes with another hemisphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BulbChain {
    pub bulb_radius: f64,
    /// One entry per neck.
    pub waists: Vec<f64>,
    /// Length of the flat part of each tube.
    pub tube_length: f64,
    /// Radius reached by the gentle first stage of each taper.
    pub shoulder_radius: f64,
    /// Length of the gentle first stage.
    pub shoulder_length: f64,
    /// Length of the second stage, from the shoulder up to the bulb.
    pub taper_length: f64,
    /// Length of the cylindrical body of each bulb.
    pub bulb_length: f64,
}

impl BulbChain {
    pub fn dumbbell() -> Self {
        Self {
            bulb_radius: 1.0,
            waists: vec![0.3],
            tube_length: 4.4,
            shoulder_radius: 0.6,
            shoulder_length: 2.0,
            taper_length: 2.5,
            bulb_length: 0.0,
        }
    }

    pub fn three_bulb() -> Self {
        Self {
            waists: vec![0.3, 0.32],
            ..Self::dumbbell()
        }
    }

    fn neck_length(&self) -> f64 {
        self.tube_length + 2.0 * (self.shoulder_length + self.taper_length)
    }

    /// Axial length of the part between the two hemispheres.
    pub fn body_length(&self) -> f64 {
        let k = self.waists.len() as f64;
        (k + 1.0) * self.bulb_length + k * self.neck_length()
    }

    /// Centres of the tubes, with the left hemisphere centre at `x = 0`.
    pub fn waist_centres(&self) -> Vec<f64> {
        (0..self.waists.len())
            .map(|k| {
                (k as f64 + 1.0) * self.bulb_length
                    + k as f64 * self.neck_length()
                    + 0.5 * self.neck_length()
            })
            .collect()
    }

    /// Radius as a function of the axial coordinate on the body.
    pub fn radius_at(&self, x: f64) -> f64 {
        let r = self.bulb_radius;
        let period = self.bulb_length + self.neck_length();
        let k = ((x - self.bulb_length) / period).floor();
        if k < 0.0 || k as usize >= self.waists.len() {
            return r;
        }
        let w = self.waists[k as usize];
        let local = x - self.bulb_length - k * period - 0.5 * self.neck_length();
        let d = local.abs() - 0.5 * self.tube_length;
        let m = self.shoulder_radius.max(w);
        w + (m - w) * smooth_step(d / self.shoulder_length)
            + (r - m) * smooth_step((d - self.shoulder_length) / self.taper_length)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.bulb_radius > 0.0
            && !self.waists.is_empty()
            && self.waists.iter().all(|&w| w > 0.0 && w < self.bulb_radius)
            && self.tube_length >= 0.0
            && self.shoulder_radius < self.bulb_radius
            && self.shoulder_length > 0.0
            && self.taper_length > 0.0
            && self.bulb_length >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::BadSpacing)
        }
    }

    pub fn profile(&self, spacing: f64) -> Result<ProfileCurve, GeometryError> {
        self.validate()?;
        if !(spacing > 0.0) {
            return Err(GeometryError::BadSpacing);
        }
        let r = self.bulb_radius;
        let fine = spacing / 16.0;
        let body = self.body_length();
        let mut xs = Vec::new();
        let mut us = Vec::new();
        let arc = ((0.5 * std::f64::consts::PI * r / fine).ceil() as usize).max(4);
        for k in 0..arc {
            let a = std::f64::consts::PI * (1.0 - 0.5 * k as f64 / arc as f64);
            xs.push(r * a.cos());
            us.push(r * a.sin());
        }
        let m = ((body / fine).ceil() as usize).max(1);
        for k in 0..m {
            let x = body * k as f64 / m as f64;
            xs.push(x);
            us.push(self.radius_at(x));
        }
        for k in 0..=arc {
            let a = 0.5 * std::f64::consts::PI * (1.0 - k as f64 / arc as f64);
            xs.push(body + r * a.cos());
            us.push(r * a.sin());
        }
        ProfileCurve::from_xu(xs, us, EndKind::Pole, EndKind::Pole)?.resample(spacing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed::Dimension;

    #[test]
    fn smooth_step_is_monotone_and_symmetric() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 1..100 {
            let z = k as f64 / 100.0;
            let v = smooth_step(z);
            assert!(v >= prev);
            assert!((v + smooth_step(1.0 - z) - 1.0).abs() < 1e-14);
            prev = v;
        }
    }

    #[test]
    fn presets_are_two_convex() {
        let d = Dimension::new(3).unwrap();
        for chain in [BulbChain::dumbbell(), BulbChain::three_bulb()] {
            let c = chain.profile(0.01).unwrap();
            assert!(c.speeds(d).is_ok());
            let min_sum = (0..c.len())
                .map(|i| {
                    let lp = c.profile_curvatures()[i];
                    let lr = c.rotational_curvatures()[i];
                    (lp + lr).min(2.0 * lr)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(min_sum > 0.0);
        }
    }

    #[test]
    fn dumbbell_waist_is_a_saddle() {
        let d = Dimension::new(3).unwrap();
        let chain = BulbChain::dumbbell();
        let c = chain.profile(0.01).unwrap();
        let xc = chain.waist_centres()[0];
        let s = c
            .points()
            .iter()
            .min_by(|a, b| (a.x - xc - 0.5 * chain.tube_length - 0.3 * chain.shoulder_length).abs()
                .total_cmp(&(b.x - xc - 0.5 * chain.tube_length - 0.3 * chain.shoulder_length).abs()))
            .unwrap()
            .s;
        let spec = c.curvatures_at(s, d).unwrap();
        assert!(spec.lambda1() < 0.0);
        assert!(spec.two_sum() > 0.0);
    }
}
