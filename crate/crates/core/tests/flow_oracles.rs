//! The flow against exact solutions: shrinking spheres and cylinders, stop
//! conditions, and the evolution identities.

use std::f64::consts::PI;

use gflow::flow::oracle_radius;
use gflow::scenario::{cylinder_profile, sphere_profile, BulbChain};
use gflow::{Dimension, FlowState, ModelSurface, StepControl, StopCondition, StopReason};

fn d3() -> Dimension {
    Dimension::new(3).unwrap()
}

fn ctl(h: f64) -> StepControl {
    StepControl {
        spacing: h,
        ..StepControl::default()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn sphere_radius_follows_the_oracle() {
    let mut st = FlowState::single(sphere_profile(1.0, 0.01).unwrap());
    st.run_until(&ctl(0.01), d3(), StopCondition::TEnd { t: 0.1 }).unwrap();
    assert!((st.time() - 0.1).abs() < 1e-12);
    let r = st.component(0).unwrap().max_radius();
    assert!(rel(r, (13.0f64 / 15.0).sqrt()) <= 1e-3, "r = {r}");
    let oracle = oracle_radius(ModelSurface::Sphere(1.0), d3(), 0.1).unwrap();
    assert!((oracle - (13.0f64 / 15.0).sqrt()).abs() < 1e-15);
}

#[test]
fn cylinder_radius_follows_the_oracle() {
    let mut st = FlowState::single(cylinder_profile(1.0, 1.0, 0.01).unwrap());
    st.run_until(&ctl(0.01), d3(), StopCondition::TEnd { t: 0.5 }).unwrap();
    let exact = 0.6f64.sqrt();
    for p in st.component(0).unwrap().points() {
        assert!(rel(p.u, exact) <= 1e-3, "u = {}", p.u);
    }
}

#[test]
fn sphere_stops_near_extinction() {
    let mut st = FlowState::single(sphere_profile(1.0, 0.01).unwrap());
    let reason = st
        .run_until(&ctl(0.01), d3(), StopCondition::MinRadiusBelow { r: 0.1 })
        .unwrap();
    assert!(matches!(reason, StopReason::MinRadiusBelow { .. }));
    assert!((st.time() - 0.75 * 0.99).abs() <= 1e-2, "t = {}", st.time());
}

#[test]
fn dumbbell_reaches_the_trigger_at_the_waist() {
    let chain = BulbChain::dumbbell();
    let mut st = FlowState::single(chain.profile(0.01).unwrap());
    let reason = st
        .run_until(&ctl(0.01), d3(), StopCondition::MaxGReaches { g: 10.0 })
        .unwrap();
    let StopReason::MaxGReached { x, g, .. } = reason else {
        panic!("unexpected stop {reason:?}");
    };
    assert!(g >= 10.0);
    let waist = chain.waist_centres()[0];
    assert!((x - waist).abs() < 1.0, "max at x = {x}, waist at {waist}");
}

#[test]
fn zero_end_time_takes_no_steps() {
    let mut st = FlowState::single(sphere_profile(1.0, 0.05).unwrap());
    let reason = st.run_until(&ctl(0.05), d3(), StopCondition::TEnd { t: 0.0 }).unwrap();
    assert_eq!(reason, StopReason::TEnd);
    assert_eq!(st.steps(), 0);
    assert_eq!(st.time(), 0.0);
}

#[test]
fn time_step_formula() {
    let c = StepControl {
        cfl: 0.1,
        dt_max: 1.0,
        spacing: 0.01,
        resample_drift: 0.25,
    };
    assert!((c.time_step(0.01, 10.0) - 1e-5).abs() < 1e-20);
    assert!(StepControl { cfl: 0.6, ..c }.validate().is_err());
}

#[test]
fn oracle_radii() {
    assert_eq!(oracle_radius(ModelSurface::Sphere(1.0), d3(), 0.0).unwrap(), 1.0);
    let r = oracle_radius(ModelSurface::Cylinder(1.0), d3(), 1.0).unwrap();
    assert!((r - 0.2f64.sqrt()).abs() < 1e-15);
    assert!(oracle_radius(ModelSurface::Sphere(1.0), d3(), 0.75).is_err());
}

fn sphere_residuals(h: f64, t: f64) -> gflow::flow::EvolutionResiduals {
    let mut st = FlowState::single(sphere_profile(1.0, h).unwrap());
    st.run_until(&ctl(h), d3(), StopCondition::TEnd { t }).unwrap();
    st.verify_evolution_identities(d3()).unwrap()
}

#[test]
fn evolution_residual_converges_on_refinement() {
    let coarse = sphere_residuals(0.02, 0.1);
    let fine = sphere_residuals(0.01, 0.1);
    assert!(coarse.max_r1 / fine.max_r1 >= 3.0, "{} / {}", coarse.max_r1, fine.max_r1);
}

#[test]
fn area_decreases_at_the_rate_of_the_gh_integral() {
    let r = sphere_residuals(0.01, 1e-3);
    assert!(rel(r.area_rate, -4.0 * PI * PI) <= 1e-2, "rate {}", r.area_rate);
    assert!(r.r2_relative() <= 1e-2);
}

#[test]
fn cylinder_satisfies_the_evolution_identity() {
    let mut st = FlowState::single(cylinder_profile(1.0, 1.0, 0.01).unwrap());
    st.run_until(&ctl(0.01), d3(), StopCondition::TEnd { t: 0.1 }).unwrap();
    let r = st.verify_evolution_identities(d3()).unwrap();
    assert!(r.max_r1 <= 1e-3 * r.max_dh_dt.max(1.0), "r1 = {}", r.max_r1);
}

#[test]
fn surgery_free_runs_are_deterministic() {
    let run = || {
        let mut st = FlowState::single(BulbChain::dumbbell().profile(0.02).unwrap());
        st.run_until(&ctl(0.02), d3(), StopCondition::TEnd { t: 0.02 }).unwrap();
        st.component(0).unwrap().points().to_vec()
    };
    assert_eq!(run(), run());
}
