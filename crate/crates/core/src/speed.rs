//! Pointwise algebra of the speed function
//! `G = (sum_{i<j} 1/(l_i + l_j))^{-1}` of a principal-curvature spectrum.
//!
//! Everything here is a pure function of the sorted spectrum. The flow,
//! monitor and neck modules only ever see curvature through these routines
//! (or through [`axisym_speed`], the fast path for spectra of the form
//! `(l_profile, l_rot, ..., l_rot)`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error("spectrum is not two-convex: l1 + l2 = {sum:e}")]
    NotTwoConvex { sum: f64 },
    #[error("dimension must be at least 3, got {0}")]
    BadDimension(usize),
    #[error("spectrum has {got} entries, dimension is {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("non-finite principal curvature")]
    NonFinite,
    #[error("model radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("simplex ascent did not converge after {0} iterations")]
    NoConvergence(usize),
}

/// Hypersurface dimension `n >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Dimension(usize);

impl Dimension {
    pub fn new(n: usize) -> Result<Self, SpeedError> {
        if n < 3 {
            return Err(SpeedError::BadDimension(n));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// `(n-1)^2 (n+2) / 4`, the value of `H/G` on a round cylinder.
    pub fn cylinder_h_over_g(self) -> f64 {
        let n = self.as_f64();
        (n - 1.0) * (n - 1.0) * (n + 2.0) / 4.0
    }

    /// `n^2 (n-1) / 4`, the value of `H/G` on a round sphere.
    pub fn sphere_h_over_g(self) -> f64 {
        let n = self.as_f64();
        n * n * (n - 1.0) / 4.0
    }

    /// Area of the unit `(n-1)`-sphere.
    pub fn unit_sphere_area(self) -> f64 {
        // |S^{k}| = 2 pi^{(k+1)/2} / Gamma((k+1)/2), with k = n - 1
        let half = self.as_f64() / 2.0;
        2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(half)
    }
}

impl TryFrom<usize> for Dimension {
    type Error = SpeedError;
    fn try_from(n: usize) -> Result<Self, Self::Error> {
        Self::new(n)
    }
}

impl From<Dimension> for usize {
    fn from(d: Dimension) -> usize {
        d.0
    }
}

// Gamma at positive integers and half-integers.
fn gamma_half_integer(x: f64) -> f64 {
    let mut acc = 1.0;
    let mut y = x;
    while y > 1.0 + 1e-12 {
        y -= 1.0;
        acc *= y;
    }
    if (y - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// Principal curvatures at a point, stored ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSpectrum {
    lambdas: Vec<f64>,
}

impl CurvatureSpectrum {
    /// Sorts the input.
    pub fn new(mut lambdas: Vec<f64>) -> Result<Self, SpeedError> {
        if lambdas.iter().any(|l| !l.is_finite()) {
            return Err(SpeedError::NonFinite);
        }
        lambdas.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { lambdas })
    }

    /// Spectrum `{l_profile, l_rot x (n-1)}` of a surface of revolution.
    pub fn axisymmetric(l_profile: f64, l_rot: f64, dim: Dimension) -> Result<Self, SpeedError> {
        let mut v = vec![l_rot; dim.get()];
        v[0] = l_profile;
        Self::new(v)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambda1(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn mean_curvature(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.lambdas.iter().map(|l| l * l).sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self, SpeedError> {
        Self::new(self.lambdas.iter().map(|l| l * c).collect())
    }

    /// `l1 + l2`.
    pub fn two_sum(&self) -> f64 {
        self.lambdas[0] + self.lambdas[1]
    }

    pub fn is_two_convex(&self) -> bool {
        two_convex(self.two_sum(), self.scale())
    }

    fn scale(&self) -> f64 {
        self.lambdas.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
    }

    fn check(&self, dim: Dimension) -> Result<(), SpeedError> {
        if self.lambdas.len() != dim.get() {
            return Err(SpeedError::LengthMismatch {
                got: self.lambdas.len(),
                want: dim.get(),
            });
        }
        if !self.is_two_convex() {
            return Err(SpeedError::NotTwoConvex {
                sum: self.two_sum(),
            });
        }
        Ok(())
    }
}

fn two_convex(sum: f64, scale: f64) -> bool {
    sum > f64::EPSILON * scale && sum > 0.0
}

/// Normal speed `G > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SpeedValue(pub f64);

impl SpeedValue {
    pub fn get(self) -> f64 {
        self.0
    }
}

/// `dG/dl_i`, in spectrum order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedDerivative(pub Vec<f64>);

impl SpeedDerivative {
    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn pair_reciprocal_sum(l: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..l.len() {
        for j in (i + 1)..l.len() {
            acc += 1.0 / (l[i] + l[j]);
        }
    }
    acc
}

pub fn speed(spec: &CurvatureSpectrum, dim: Dimension) -> Result<SpeedValue, SpeedError> {
    spec.check(dim)?;
    Ok(SpeedValue(1.0 / pair_reciprocal_sum(&spec.lambdas)))
}

/// `dG/dl_i = G^2 sum_{j != i} (l_i + l_j)^{-2}`.
pub fn speed_gradient(
    spec: &CurvatureSpectrum,
    dim: Dimension,
) -> Result<SpeedDerivative, SpeedError> {
    let g = speed(spec, dim)?.0;
    let l = &spec.lambdas;
    let dg = (0..l.len())
        .map(|i| {
            let s: f64 = (0..l.len())
                .filter(|&j| j != i)
                .map(|j| (l[i] + l[j]).powi(-2))
                .sum();
            g * g * s
        })
        .collect();
    Ok(SpeedDerivative(dg))
}

/// Evaluates `G` as a ratio of products of pair sums,
/// `prod_{i<j} s_ij / sum_{i<j} prod_{(k,l) != (i,j)} s_kl`.
///
/// Independent evaluation path used to cross-check [`speed`]. The products
/// are accumulated in log-scaled form so that `n = 5` spectra with ten
/// pair sums do not overflow.
pub fn speed_rational_form(
    spec: &CurvatureSpectrum,
    dim: Dimension,
) -> Result<SpeedValue, SpeedError> {
    spec.check(dim)?;
    let l = &spec.lambdas;
    let mut pairs = Vec::new();
    for i in 0..l.len() {
        for j in (i + 1)..l.len() {
            pairs.push(l[i] + l[j]);
        }
    }
    // Normalise every pair sum by the largest one; G scales linearly so the
    // factor is restored at the end.
    let scale = pairs.iter().cloned().fold(0.0_f64, f64::max);
    let s: Vec<f64> = pairs.iter().map(|p| p / scale).collect();
    let numerator: f64 = s.iter().product();
    let mut denominator = 0.0;
    for skip in 0..s.len() {
        let prod: f64 = s
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != skip)
            .map(|(_, v)| *v)
            .product();
        denominator += prod;
    }
    Ok(SpeedValue(scale * numerator / denominator))
}

/// Outcome of the pointwise bound checks `(l1+l2)/n <= G <= l1+l2`.
///
/// The pair-count bound `(l1+l2)/C(n,2) <= G` holds in every dimension and
/// agrees with the `1/n` form at `n = 3`; for `n >= 4` the `1/n` form fails
/// at umbilic points (all `l_i = 1` gives `G = 2/C(n,2) < 2/n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    pub g: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// `(l1+l2)/C(n,2)`.
    pub pair_lower: f64,
    pub pair_lower_ok: bool,
    /// `H/G`, recorded for the ratio monitor.
    pub h_over_g: f64,
    /// `H/G` stays within the largest model value (the sphere, `n^2(n-1)/4`)
    /// is not a theorem for arbitrary spectra; this flag only records
    /// whether `G <= H` holds, which does follow from the sandwich.
    pub h_ratio_ok: bool,
}

pub fn check_bounds(spec: &CurvatureSpectrum, dim: Dimension) -> Result<BoundsReport, SpeedError> {
    let g = speed(spec, dim)?.0;
    let two = spec.two_sum();
    let lower = two / dim.as_f64();
    let upper = two;
    let tol = 1e-12 * upper.abs().max(g.abs());
    let h = spec.mean_curvature();
    let n = dim.as_f64();
    let pair_lower = two / (0.5 * n * (n - 1.0));
    Ok(BoundsReport {
        g,
        lower,
        upper,
        lower_ok: lower <= g + tol,
        pair_lower,
        pair_lower_ok: pair_lower <= g + tol,
        upper_ok: g <= upper + tol,
        h_over_g: h / g,
        h_ratio_ok: g <= h + tol,
    })
}

/// Round model hypersurfaces with closed-form speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "radius", rename_all = "snake_case")]
pub enum ModelSurface {
    Sphere(f64),
    Cylinder(f64),
}

impl ModelSurface {
    pub fn radius(self) -> f64 {
        match self {
            ModelSurface::Sphere(r) | ModelSurface::Cylinder(r) => r,
        }
    }

    pub fn spectrum(self, dim: Dimension) -> Result<CurvatureSpectrum, SpeedError> {
        let r = self.radius();
        if r <= 0.0 || !r.is_finite() {
            return Err(SpeedError::NonPositiveRadius(r));
        }
        match self {
            ModelSurface::Sphere(_) => CurvatureSpectrum::new(vec![1.0 / r; dim.get()]),
            ModelSurface::Cylinder(_) => CurvatureSpectrum::axisymmetric(0.0, 1.0 / r, dim),
        }
    }
}

/// Sphere: `4/(n(n-1)r)`; cylinder: `4/((n-1)(n+2)r)`.
pub fn model_speed(model: ModelSurface, dim: Dimension) -> Result<SpeedValue, SpeedError> {
    let r = model.radius();
    if r <= 0.0 || !r.is_finite() {
        return Err(SpeedError::NonPositiveRadius(r));
    }
    let n = dim.as_f64();
    let g = match model {
        ModelSurface::Sphere(_) => 4.0 / (n * (n - 1.0) * r),
        ModelSurface::Cylinder(_) => 4.0 / ((n - 1.0) * (n + 2.0) * r),
    };
    Ok(SpeedValue(g))
}

/// Speed of the spectrum `(l_profile, l_rot, ..., l_rot)` without building it.
///
/// Returns `None` when the spectrum is not two-convex.
#[inline]
pub fn axisym_speed(l_profile: f64, l_rot: f64, dim: Dimension) -> Option<f64> {
    let m = dim.as_f64() - 1.0;
    let mixed = l_profile + l_rot;
    let rot = 2.0 * l_rot;
    let sum = mixed.min(rot);
    let scale = l_profile.abs().max(l_rot.abs());
    if !two_convex(sum, scale) {
        return None;
    }
    let recip = m / mixed + 0.5 * m * (m - 1.0) / rot;
    Some(1.0 / recip)
}

/// Result of the constrained maximisation of `G(0, a_1, ..., a_{n-1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceMaximum {
    pub argmax: Vec<f64>,
    pub max_value: f64,
    pub iterations: usize,
}

const SLICE_MAX_ITER: usize = 100_000;

/// Maximises `G(0, a)` over the open simplex `sum a_i = 1, a_i > 0` from the
/// barycentre perturbed towards the first vertex.
pub fn maximize_on_cylinder_slice(dim: Dimension, tol: f64) -> Result<SliceMaximum, SpeedError> {
    let m = dim.get() - 1;
    let mut start: Vec<f64> = (0..m).map(|i| 1.0 + 0.5 * (m - i) as f64).collect();
    let total: f64 = start.iter().sum();
    start.iter_mut().for_each(|a| *a /= total);
    maximize_on_cylinder_slice_from(dim, tol, &start)
}

/// Projected gradient ascent with backtracking on the slice simplex.
pub fn maximize_on_cylinder_slice_from(
    dim: Dimension,
    tol: f64,
    start: &[f64],
) -> Result<SliceMaximum, SpeedError> {
    if !(tol > 0.0) {
        return Err(SpeedError::BadTolerance);
    }
    let m = dim.get() - 1;
    if start.len() != m {
        return Err(SpeedError::LengthMismatch {
            got: start.len(),
            want: m,
        });
    }
    let total: f64 = start.iter().sum();
    let mut a: Vec<f64> = start.iter().map(|v| v / total).collect();
    let eval = |a: &[f64]| -> Option<(f64, Vec<f64>)> {
        if a.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let mut lam = Vec::with_capacity(m + 1);
        lam.push(0.0);
        lam.extend_from_slice(a);
        let spec = CurvatureSpectrum::new(lam).ok()?;
        let g = speed(&spec, dim).ok()?.0;
        // Gradient with respect to a_i: the spectrum is sorted with the zero
        // first, so entry i + 1 corresponds to a sorted a; recompute directly.
        let grad = (0..m)
            .map(|i| {
                let mut s = 1.0 / (a[i] * a[i]);
                for (j, &aj) in a.iter().enumerate() {
                    if j != i {
                        s += 1.0 / ((a[i] + aj) * (a[i] + aj));
                    }
                }
                g * g * s
            })
            .collect();
        Some((g, grad))
    };
    let (mut g, mut grad) = eval(&a).ok_or(SpeedError::NonFinite)?;
    let mut step = 0.1;
    for it in 0..SLICE_MAX_ITER {
        let mean = grad.iter().sum::<f64>() / m as f64;
        let dir: Vec<f64> = grad.iter().map(|v| v - mean).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < tol * 1e-3 {
            return Ok(SliceMaximum {
                argmax: a,
                max_value: g,
                iterations: it,
            });
        }
        let mut accepted = false;
        let mut trial_step = step;
        for _ in 0..60 {
            let trial: Vec<f64> = a
                .iter()
                .zip(&dir)
                .map(|(ai, di)| ai + trial_step * di)
                .collect();
            if let Some((gt, gradt)) = eval(&trial) {
                // Armijo condition; once G no longer resolves the increase,
                // progress is judged by the projected gradient instead.
                let mean_t = gradt.iter().sum::<f64>() / m as f64;
                let norm_t = gradt.iter().map(|v| (v - mean_t).powi(2)).sum::<f64>().sqrt();
                if gt >= g + 1e-4 * trial_step * norm * norm && (gt > g || norm_t < norm) {
                    a = trial;
                    g = gt;
                    grad = gradt;
                    accepted = true;
                    step = (trial_step * 2.0).min(1.0);
                    break;
                }
            }
            trial_step *= 0.5;
        }
        if !accepted {
            // Step underflow at a stationary point within rounding.
            return Ok(SliceMaximum {
                argmax: a,
                max_value: g,
                iterations: it,
            });
        }
    }
    Err(SpeedError::NoConvergence(SLICE_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    fn spec(v: &[f64]) -> CurvatureSpectrum {
        CurvatureSpectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_spectrum_speed() {
        let g = speed(&spec(&[1.0, 1.0, 1.0]), dim(3)).unwrap().0;
        assert!((g - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cylinder_slice_value_is_one_fifth() {
        let g = speed(&spec(&[0.0, 0.5, 0.5]), dim(3)).unwrap().0;
        assert!((g - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_two_sum_is_rejected() {
        let err = speed(&spec(&[-1.0, 1.0, 1.0]), dim(3)).unwrap_err();
        assert!(matches!(err, SpeedError::NotTwoConvex { .. }));
    }

    #[test]
    fn constructor_sorts() {
        let s = spec(&[2.0, -0.5, 1.0]);
        assert_eq!(s.lambdas(), &[-0.5, 1.0, 2.0]);
    }

    #[test]
    fn dimension_below_three_rejected() {
        assert!(Dimension::new(2).is_err());
        assert!(Dimension::new(3).is_ok());
    }

    #[test]
    fn gradient_on_symmetric_and_cylinder_spectra() {
        let dg = speed_gradient(&spec(&[1.0, 1.0, 1.0]), dim(3)).unwrap();
        for v in dg.components() {
            assert!((v - 2.0 / 9.0).abs() < 1e-15);
        }
        let dg = speed_gradient(&spec(&[0.0, 1.0, 1.0]), dim(3)).unwrap();
        let want = [0.32, 0.2, 0.2];
        for (a, b) in dg.components().iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn rational_form_matches() {
        let d = dim(3);
        let s = spec(&[0.1, 0.5, 2.0]);
        let a = speed(&s, d).unwrap().0;
        let b = speed_rational_form(&s, d).unwrap().0;
        assert!(((a - b) / a).abs() < 1e-12);
        let third = 1.0 / 3.0;
        let g = speed_rational_form(&spec(&[0.0, third, third, third]), dim(4)).unwrap().0;
        assert!((g - 4.0 / 54.0).abs() < 1e-14);
    }

    #[test]
    fn bounds_on_examples() {
        let r = check_bounds(&spec(&[0.0, 1.0, 1.0]), dim(3)).unwrap();
        assert!(r.lower_ok && r.upper_ok);
        assert!((r.g - 0.4).abs() < 1e-15);
        assert!((r.lower - 1.0 / 3.0).abs() < 1e-15);
        let r = check_bounds(&spec(&[1.0, 1.0, 1.0]), dim(3)).unwrap();
        assert!(r.lower_ok && r.upper_ok);
        assert!((r.g - r.lower).abs() < 1e-15);
        assert_eq!(r.lower, r.pair_lower);
    }

    #[test]
    fn one_over_n_lower_bound_fails_at_umbilic_points_for_n_above_three() {
        let r = check_bounds(&spec(&[1.0; 4]), dim(4)).unwrap();
        assert!((r.g - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.lower - 0.5).abs() < 1e-15);
        assert!(!r.lower_ok);
        assert!(r.pair_lower_ok && r.upper_ok);
        assert!((r.g - r.pair_lower).abs() < 1e-15);
    }

    #[test]
    fn model_speeds() {
        let d = dim(3);
        assert!((model_speed(ModelSurface::Sphere(1.0), d).unwrap().0 - 2.0 / 3.0).abs() < 1e-15);
        assert!((model_speed(ModelSurface::Cylinder(1.0), d).unwrap().0 - 0.4).abs() < 1e-15);
        let half = model_speed(ModelSurface::Cylinder(2.0), d).unwrap().0;
        assert!((half - 0.2).abs() < 1e-15);
        assert!(model_speed(ModelSurface::Sphere(0.0), d).is_err());
        for n in 3..7 {
            for m in [ModelSurface::Sphere(0.7), ModelSurface::Cylinder(0.7)] {
                let closed = model_speed(m, dim(n)).unwrap().0;
                let direct = speed(&m.spectrum(dim(n)).unwrap(), dim(n)).unwrap().0;
                assert!(((closed - direct) / direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn axisym_fast_path_agrees() {
        for n in 3..6 {
            let d = dim(n);
            for &(lp, lr) in &[(0.3, 1.0), (-0.4, 1.0), (2.0, 0.5), (0.0, 3.0)] {
                let fast = axisym_speed(lp, lr, d).unwrap();
                let slow = speed(&CurvatureSpectrum::axisymmetric(lp, lr, d).unwrap(), d)
                    .unwrap()
                    .0;
                assert!(((fast - slow) / slow).abs() < 1e-13);
            }
            assert!(axisym_speed(-1.0, 1.0, d).is_none());
            assert!(axisym_speed(1.0, -0.1, d).is_none());
        }
    }

    #[test]
    fn slice_maximum_n3_n4() {
        let r = maximize_on_cylinder_slice(dim(3), 1e-10).unwrap();
        assert!((r.max_value - 0.2).abs() < 1e-12);
        for a in &r.argmax {
            assert!((a - 0.5).abs() < 1e-8);
        }
        let r = maximize_on_cylinder_slice(dim(4), 1e-10).unwrap();
        assert!((r.max_value - 4.0 / 54.0).abs() < 1e-12);
        for a in &r.argmax {
            assert!((a - 1.0 / 3.0).abs() < 1e-8);
        }
        let r = maximize_on_cylinder_slice_from(dim(3), 1e-10, &[0.9, 0.1]).unwrap();
        for a in &r.argmax {
            assert!((a - 0.5).abs() < 1e-8);
        }
        assert!(maximize_on_cylinder_slice(dim(3), 0.0).is_err());
    }

    #[test]
    fn unit_sphere_areas() {
        use std::f64::consts::PI;
        assert!((dim(3).unit_sphere_area() - 4.0 * PI).abs() < 1e-12);
        assert!((dim(4).unit_sphere_area() - 2.0 * PI * PI).abs() < 1e-12);
    }
}
