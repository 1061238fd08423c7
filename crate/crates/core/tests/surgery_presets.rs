//! Surgery on the scenario presets: cut selection, capping, classification
//! and complete runs of the surgery loop.

use gflow::neck::{detect, NeckParams, NeckRegion};
use gflow::scenario::{cylinder_profile, sphere_profile, BulbChain};
use gflow::surgery::{
    classify_components, perform, select_cut, surgery_loop, SurgeryError, SurgeryParams, SurgeryThresholds,
    TerminationVerdict, Verdict,
};
use gflow::{Dimension, FlowState, StepControl, StopCondition};

fn d3() -> Dimension {
    Dimension::new(3).unwrap()
}

/// Dumbbell flowed to the trigger and its certified waist neck.
fn dumbbell_at_trigger() -> (FlowState, NeckRegion) {
    let mut st = FlowState::single(BulbChain::dumbbell().profile(0.01).unwrap());
    st.run_until(&StepControl::default(), d3(), StopCondition::MaxGReaches { g: 10.0 })
        .unwrap();
    let m = st.max_speed(d3()).unwrap().unwrap();
    let neck = detect(&st, &NeckParams::default(), d3())
        .unwrap()
        .into_iter()
        .filter(|n| n.certified_shrinking && n.component_id == m.component_id)
        .max_by(|a, b| a.center_g.total_cmp(&b.center_g))
        .expect("certified neck at the trigger");
    (st, neck)
}

#[test]
fn cut_lands_where_the_radius_is_r_star() {
    let (st, neck) = dumbbell_at_trigger();
    let cut = select_cut(&neck, &st, &SurgeryThresholds::default(), &SurgeryParams::default(), d3()).unwrap();
    assert!((cut.r_star - 0.4).abs() < 1e-15);
    assert_eq!(cut.k_star, 5.0);
    let c = st.component(cut.component_id).unwrap();
    for s in cut.cut_s {
        assert!((c.u_at(s).unwrap() - 0.4).abs() < 0.01, "u = {}", c.u_at(s).unwrap());
    }
    assert!(cut.cut_s[0] < neck.center_s && neck.center_s < cut.cut_s[1]);
}

#[test]
fn cut_below_trigger_is_refused() {
    let (st, neck) = dumbbell_at_trigger();
    let high = SurgeryThresholds::new(5.0, 10.0, 20.0).unwrap();
    let err = select_cut(&neck, &st, &high, &SurgeryParams::default(), d3()).unwrap_err();
    assert!(matches!(err, SurgeryError::BelowTrigger { .. }));
}

#[test]
fn thin_cylinder_has_no_cross_section_of_radius_r_star() {
    let st = FlowState::single(cylinder_profile(2.0, 40.0, 0.05).unwrap());
    let p = NeckParams {
        g0: 0.1,
        theta: 0.0,
        ..NeckParams::default()
    };
    let neck = detect(&st, &p, d3()).unwrap().remove(0);
    let t = SurgeryThresholds::new(0.05, 0.1, 0.2).unwrap();
    let err = select_cut(&neck, &st, &t, &SurgeryParams::default(), d3()).unwrap_err();
    assert!(matches!(err, SurgeryError::NoSuitableCrossSection { .. }), "{err}");
}

#[test]
fn surgery_splits_the_dumbbell_into_capped_halves() {
    let (mut st, neck) = dumbbell_at_trigger();
    let th = SurgeryThresholds::default();
    let params = SurgeryParams::default();
    let cut = select_cut(&neck, &st, &th, &params, d3()).unwrap();
    let out = perform(&mut st, &cut, &params, 0.01, d3()).unwrap();
    st.close_surgery_epoch();
    assert_eq!(st.components().len(), 3);
    let r = &out.record;
    assert!(r.area_after < r.area_before);
    assert!(r.post_max_g <= th.g2);
    assert_eq!(r.cap_max_g.len(), 2);
    for &g in &r.cap_max_g {
        assert!((2.5..=10.0).contains(&g), "cap max G {g}");
    }
    assert!(r.modified_interval[0] < neck.center_x && neck.center_x < r.modified_interval[1]);
    for id in &out.retained {
        assert!(st.component(*id).unwrap().is_closed());
    }
    let v = classify_components(&st, &[(out.removed, 0)], &[], &params, d3()).unwrap();
    let removed = v.iter().find(|v| v.component_id == out.removed).unwrap();
    assert_eq!(removed.verdict, Verdict::DiscardSphere);
    assert_eq!(removed.motivating_surgery, Some(0));
    assert!(removed.g3_violation, "the removed piece never reaches 10 K*");
    for id in &out.retained {
        let r = v.iter().find(|v| v.component_id == *id).unwrap();
        assert!(r.pole_to_pole);
        assert!(!r.g3_violation);
    }
}

#[test]
fn round_sphere_is_discarded_without_surgery() {
    let st = FlowState::single(sphere_profile(1.0, 0.02).unwrap());
    let v = classify_components(&st, &[], &[], &SurgeryParams::default(), d3()).unwrap();
    assert_eq!(v[0].verdict, Verdict::DiscardConvex);
    let mut st = st;
    let rep = surgery_loop(
        &mut st,
        &SurgeryThresholds::default(),
        &NeckParams::default(),
        &SurgeryParams::default(),
        &StepControl {
            spacing: 0.02,
            ..StepControl::default()
        },
        d3(),
        &mut (),
    )
    .unwrap();
    assert_eq!(rep.verdict, TerminationVerdict::Convex);
    assert_eq!(rep.surgeries, 0);
}

fn run_chain(chain: BulbChain, params: SurgeryParams) -> (FlowState, Result<gflow::surgery::TerminationReport, SurgeryError>) {
    let mut st = FlowState::single(chain.profile(0.01).unwrap());
    let r = surgery_loop(
        &mut st,
        &SurgeryThresholds::default(),
        &NeckParams::default(),
        &params,
        &StepControl::default(),
        d3(),
        &mut (),
    );
    (st, r)
}

#[test]
fn dumbbell_needs_exactly_one_surgery() {
    let (st, rep) = run_chain(BulbChain::dumbbell(), SurgeryParams::default());
    let rep = rep.unwrap();
    assert_eq!(rep.surgeries, 1);
    assert_eq!(rep.verdict, TerminationVerdict::AllSpheres);
    assert_eq!(rep.verdict.to_string(), "all components spheres");
    assert!(st.is_empty());
    let halves = rep.discarded.iter().filter(|v| v.motivating_surgery.is_none()).count();
    assert_eq!(halves, 2);
    assert!(rep
        .discarded
        .iter()
        .all(|v| v.verdict == Verdict::DiscardSphere || v.verdict == Verdict::DiscardConvex));
}

#[test]
fn three_bulbs_need_two_surgeries() {
    let (st, rep) = run_chain(BulbChain::three_bulb(), SurgeryParams::default());
    let rep = rep.unwrap();
    assert_eq!(rep.surgeries, 2);
    assert_eq!(st.surgery_log().len(), 2);
    let finals = rep.discarded.iter().filter(|v| v.motivating_surgery.is_none()).count();
    assert_eq!(finals, 3);
    let [a, b] = [&st.surgery_log().records()[0], &st.surgery_log().records()[1]];
    assert!(a.time <= b.time);
    assert!(a.modified_interval[1] < b.modified_interval[0] || b.modified_interval[1] < a.modified_interval[0]);
}

#[test]
fn surgery_budget_is_enforced() {
    let params = SurgeryParams {
        max_surgeries: 1,
        ..SurgeryParams::default()
    };
    let (_, rep) = run_chain(BulbChain::three_bulb(), params);
    assert!(matches!(rep, Err(SurgeryError::AbortTooManySurgeries(1))), "{rep:?}");
}

#[test]
fn initial_data_above_the_trigger_is_refused() {
    let mut st = FlowState::single(sphere_profile(0.05, 0.002).unwrap());
    let r = surgery_loop(
        &mut st,
        &SurgeryThresholds::default(),
        &NeckParams::default(),
        &SurgeryParams::default(),
        &StepControl::default(),
        d3(),
        &mut (),
    );
    assert!(matches!(r, Err(SurgeryError::InitialAboveTrigger { .. })));
}
