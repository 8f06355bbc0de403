//! Quick invariant checks behind `chcross selftest`.

use std::sync::Arc;

use crate::convergence::InitialCondition;
use crate::diagnostics::{dissipation_residual, energy, inverse_laplacian, mass};
use crate::mesh::{Mesh, NodalFunction};
use crate::potential::Potential;
use crate::stepper::{SchemeParams, Stepper};
use crate::Result;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn box_mesh(n: usize) -> Result<Arc<Mesh>> {
    let l = 2.0 * std::f64::consts::PI;
    Mesh::rectangle(0.0, l, 0.0, l, n, n)
}

fn gluing() -> Result<(bool, String)> {
    let pot = Potential::truncated(1.5)?;
    let m = 1.5f64;
    let q = m * m - 1.0;
    let inner = (0.25 * q * q, m * m * m - m);
    let outer = (pot.value(m + 1e-13), pot.derivative(m + 1e-13));
    let gap = (inner.0 - outer.0).abs().max((inner.1 - outer.1).abs());
    Ok((gap <= 1e-11, format!("jump {gap:e} at |s| = M")))
}

fn finite_differences() -> Result<(bool, String)> {
    let pot = Potential::truncated(1.5)?;
    let h = 1e-5;
    let worst = (0..1000)
        .map(|i| -3.0 + 6.0 * i as f64 / 999.0)
        .map(|s| ((pot.value(s + h) - pot.value(s - h)) / (2.0 * h) - pot.derivative(s)).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-6, format!("max |FD - f| = {worst:e}")))
}

fn fixed_point() -> Result<(bool, String)> {
    let mesh = box_mesh(8)?;
    let p = SchemeParams::new(mesh.clone(), 1e-2, 0.3, 1.0, 1e-2);
    let mut stepper = Stepper::new(p)?;
    let s0 = stepper.initial_state(NodalFunction::constant(mesh.clone(), 0.2), NodalFunction::constant(mesh, 0.4))?;
    let s1 = stepper.advance(&s0)?;
    let mut worst = 0.0f64;
    for (a, b) in [(&s0.phi, &s1.phi), (&s0.c, &s1.c), (&s0.mu, &s1.mu)] {
        for (x, y) in a.values().iter().zip(b.values()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max change {worst:e}")))
}

fn mass_conservation() -> Result<(bool, String)> {
    let mesh = box_mesh(16)?;
    let p = SchemeParams::new(mesh.clone(), 1e-3, 0.3, 1.0, 8e-3);
    let mut stepper = Stepper::new(p)?;
    let (phi, c) = InitialCondition::Exp1.fields(&mesh)?;
    let s0 = stepper.initial_state(phi, c)?;
    let (m_phi, m_c) = (mass(&s0.phi), mass(&s0.c));
    let mut worst = 0.0f64;
    stepper.run(s0, |_, next| {
        worst = worst
            .max((mass(&next.phi) - m_phi).abs() / m_phi.abs())
            .max((mass(&next.c) - m_c).abs() / m_c.abs());
        Ok(())
    })?;
    let residual = stepper.last_residual();
    Ok((
        worst <= 1e-9 && residual <= 1e-10,
        format!("relative drift {worst:e}, solver residual {residual:e}"),
    ))
}

fn energy_decay() -> Result<(bool, String)> {
    let mesh = box_mesh(16)?;
    let p = SchemeParams::new(mesh.clone(), 0.1, 0.3, 3.0, 0.5).with_potential(Potential::truncated(1.5)?);
    let mut stepper = Stepper::new(p.clone())?;
    let (phi, c) = InitialCondition::Exp1.fields(&mesh)?;
    let s0 = stepper.initial_state(phi, c)?;
    let e0 = energy(&s0, &p)?;
    let mut worst = f64::NEG_INFINITY;
    stepper.run(s0, |prev, next| {
        worst = worst.max(dissipation_residual(prev, next, &p)?);
        Ok(())
    })?;
    Ok((worst <= 1e-8 * (1.0 + e0.abs()), format!("max residual {worst:e}")))
}

fn inverse_laplacian_constant() -> Result<(bool, String)> {
    let mesh = box_mesh(8)?;
    let u = inverse_laplacian(&mesh, &NodalFunction::constant(mesh.clone(), 3.5))?;
    let worst = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((worst == 0.0, format!("max |u| = {worst:e}")))
}

pub fn run_selftest() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<(bool, String)>); 6] = [
        ("potential C1 gluing", gluing),
        ("potential finite differences", finite_differences),
        ("constant state is a fixed point", fixed_point),
        ("mass conservation", mass_conservation),
        ("energy dissipation", energy_decay),
        ("inverse Laplacian of a constant", inverse_laplacian_constant),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => Check { name, passed, detail },
            Err(e) => Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}
