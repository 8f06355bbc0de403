mod common;

use chcross::convergence::InitialCondition;
use chcross::diagnostics::{dissipation_residual, energy, mass, mean, mu_mean_bound, Monitor};
use chcross::fem::h1_norm;
use chcross::mesh::NodalFunction;
use chcross::potential::Potential;
use chcross::stepper::{SchemeParams, State, Stepper};
use chcross::Error;
use common::box_mesh;

fn start(p: &SchemeParams, ic: &InitialCondition) -> (Stepper, State) {
    let stepper = Stepper::new(p.clone()).unwrap();
    let (phi, c) = ic.fields(&p.mesh).unwrap();
    let s0 = stepper.initial_state(phi, c).unwrap();
    (stepper, s0)
}

#[test]
fn one_step_of_the_benchmark() {
    let mesh = box_mesh(32);
    let p = SchemeParams::new(mesh, 1e-3, 0.3, 1.0, 0.128);
    let (mut stepper, s0) = start(&p, &InitialCondition::Exp1);
    let s1 = stepper.advance(&s0).unwrap();
    assert_eq!(s1.step_index, 1);
    assert_eq!(s1.t, 1e-3);
    assert!(stepper.last_residual() <= 1e-10);
    assert!((mass(&s1.phi) - mass(&s0.phi)).abs() <= 1e-9 * mass(&s0.phi).abs());
    assert!((mass(&s1.c) - mass(&s0.c)).abs() <= 1e-9 * mass(&s0.c).abs());
    assert!(energy(&s1, &p).unwrap() < energy(&s0, &p).unwrap());
    // means: phi 0.3, c 0.5
    assert!((mean(&s1.phi) - 0.3).abs() < 1e-3);
    assert!((mean(&s1.c) - 0.5).abs() < 1e-3);
}

#[test]
fn final_time_sets_the_number_of_steps() {
    let mesh = box_mesh(6);
    let p = SchemeParams::new(mesh, 1e-3, 0.3, 1.0, 0.128);
    let (mut stepper, s0) = start(&p, &InitialCondition::Exp1);
    let mut calls = 0;
    let last = stepper
        .run(s0, |prev, next| {
            assert_eq!(next.step_index, prev.step_index + 1);
            calls += 1;
            Ok(())
        })
        .unwrap();
    assert_eq!(calls, 128);
    assert_eq!(last.step_index, 128);
    assert!((last.t - 0.128).abs() < 1e-15);
}

#[test]
fn energy_records_telescope() {
    let mesh = box_mesh(12);
    let p = SchemeParams::new(mesh, 0.05, 0.3, 3.0, 0.8).with_potential(Potential::truncated(1.5).unwrap());
    let (mut stepper, s0) = start(&p, &InitialCondition::Exp1);
    let e0 = energy(&s0, &p).unwrap();
    let mut monitor = Monitor::new(p.clone());
    let mut direct = Vec::new();
    let last = stepper
        .run(s0, |a, b| {
            direct.push(dissipation_residual(a, b, &p)?);
            monitor.observe(a, b)?;
            Ok(())
        })
        .unwrap();
    assert_eq!(monitor.records.len(), 16);
    let res = monitor.residuals();
    let total: f64 = res.iter().sum();
    let diss: f64 = monitor.records.iter().map(|r| r.dissipation).sum();
    let e_n = energy(&last, &p).unwrap();
    assert!((total - (e_n - e0 + diss)).abs() <= 1e-10);
    for (a, b) in res.iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + e0.abs()));
        assert!(*a <= 1e-8 * (1.0 + e0.abs()));
    }
    assert!(monitor.report.is_finite());
}

#[test]
fn time_error_halves_with_the_step() {
    let mesh = box_mesh(16);
    let run = |tau: f64| {
        let p = SchemeParams::new(mesh.clone(), tau, 0.3, 1.0, 0.004);
        let (mut stepper, s0) = start(&p, &InitialCondition::Exp1);
        stepper.run(s0, |_, _| Ok(())).unwrap()
    };
    // the stiff stabilization term keeps tau ~ 1e-3 pre-asymptotic
    let (a, b, c) = (run(2.5e-4), run(1.25e-4), run(6.25e-5));
    let d1 = h1_norm(&a.phi.difference(&b.phi).unwrap()).unwrap();
    let d2 = h1_norm(&b.phi.difference(&c.phi).unwrap()).unwrap();
    let ratio = d1 / d2;
    assert!((1.8..=2.2).contains(&ratio), "Richardson ratio {ratio}");
}

#[test]
fn mean_chemical_potential_stays_below_its_bound() {
    let mesh = box_mesh(12);
    let (k1, k2) = (0.125, 1.0);
    let p = SchemeParams::new(mesh, 0.1, 0.3, 3.0, 2.0)
        .with_potential(Potential::truncated(1.5).unwrap())
        .with_coercivity(k1, k2);
    let ic = InitialCondition::Custom(std::sync::Arc::new(|x: f64, y: f64| {
        (0.8 * (x.sin() * (2.0 * y).cos()), 0.5 + 0.4 * (x + y).cos())
    }));
    let (mut stepper, s0) = start(&p, &ic);
    let bound = mu_mean_bound(&p, energy(&s0, &p).unwrap(), mean(&s0.c), k1, k2).unwrap();
    let mut worst = mean(&s0.mu).abs();
    stepper
        .run(s0, |_, next| {
            worst = worst.max(mean(&next.mu).abs());
            Ok(())
        })
        .unwrap();
    assert!(worst <= bound, "|mean mu| reached {worst}, bound {bound}");
}

#[test]
fn failures_name_the_step() {
    let mesh = box_mesh(4);
    let other = box_mesh(5);
    let p = SchemeParams::new(mesh, 1e-2, 0.3, 1.0, 1e-1);
    let mut stepper = Stepper::new(p).unwrap();
    let bad = State::new(
        NodalFunction::zeros(other.clone()),
        NodalFunction::zeros(other.clone()),
        NodalFunction::zeros(other),
        0.3,
        7,
    )
    .unwrap();
    match stepper.advance(&bad) {
        Err(Error::Step { step_index, .. }) => assert_eq!(step_index, 7),
        other => panic!("expected a step error, got {other:?}"),
    }
}
