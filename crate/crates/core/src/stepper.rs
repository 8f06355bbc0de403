//! The stabilized backward-Euler step and the time loop.
//!
//! Each step solves one coupled linear system for `(phi, c, mu)` at the new
//! time level. The potential force `f(phi^n)` and the cross-diffusion
//! weights `c^n` are lagged, so nothing inside a step is iterated:
//!
//! ```text
//! (1/tau) M phi - K_c c + K mu                  = (1/tau) M phi^n - K_c phi^n
//! ((1/tau) M + K_c2 + g K) c - K_c mu           = (1/tau) M c^n + (K_c2 + g K) phi^n
//! -(K + (S/eps^2) M) phi + M c + M mu           = (1/eps^2) <f(phi^n), .> - (S/eps^2) M phi^n
//! ```
//!
//! with `K_c`, `K_c2` the stiffness matrices weighted by `c^n` and `(c^n)^2`.

use std::fmt;
use std::sync::Arc;

use crate::fem::Assembler;
use crate::linalg::{BlockSystem, DirectSolver, Field, SparseMatrix};
use crate::mesh::{Mesh, NodalFunction};
use crate::potential::Potential;
use crate::{Error, Result};

/// Scalar controls of the scheme and the mesh they apply to.
#[derive(Clone, Debug)]
pub struct SchemeParams {
    pub tau: f64,
    pub eps: f64,
    /// Stabilization coefficient `S`.
    pub stabilization: f64,
    /// Constant mobility `g`.
    pub mobility: f64,
    pub potential: Potential,
    pub final_time: f64,
    pub mesh: Arc<Mesh>,
    /// Optional `(K1, K2)` with `F(s) >= K1 s^2 - K2`, used only for checks.
    pub coercivity: Option<(f64, f64)>,
}

impl SchemeParams {
    /// Parameters with `g = 1`, no truncation and no coercivity constants.
    pub fn new(mesh: Arc<Mesh>, tau: f64, eps: f64, stabilization: f64, final_time: f64) -> Self {
        SchemeParams {
            tau,
            eps,
            stabilization,
            mobility: 1.0,
            potential: Potential::Untruncated,
            final_time,
            mesh,
            coercivity: None,
        }
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn with_mobility(mut self, g: f64) -> Self {
        self.mobility = g;
        self
    }

    pub fn with_coercivity(mut self, k1: f64, k2: f64) -> Self {
        self.coercivity = Some((k1, k2));
        self
    }

    /// Energy stability is guaranteed: truncated potential and `S > L/2`.
    pub fn is_certified(&self) -> bool {
        self.potential
            .lipschitz_bound()
            .is_ok_and(|l| self.stabilization > 0.5 * l)
    }

    /// Number of steps `T / tau`, which must be an integer to within one ulp.
    pub fn step_count(&self) -> Result<usize> {
        step_count(self.final_time, self.tau)
    }
}

pub fn step_count(final_time: f64, tau: f64) -> Result<usize> {
    if !(tau > 0.0) || !(final_time >= 0.0) || !final_time.is_finite() {
        return Err(Error::Argument(format!("cannot divide T = {final_time} into steps of {tau}")));
    }
    let ratio = final_time / tau;
    let n = ratio.round();
    if (ratio - n).abs() > f64::EPSILON * n.max(1.0) {
        return Err(Error::Argument(format!(
            "T / tau = {ratio} is not an integer; give an explicit step count"
        )));
    }
    Ok(n as usize)
}

/// Non-fatal findings of [`validate_params`].
#[derive(Clone, Debug, PartialEq)]
pub enum ParamWarning {
    /// `S <= L/2`, or `L` does not exist (untruncated potential).
    StabilityNotCertified { stabilization: f64, lipschitz: Option<f64> },
    /// `K1 + 2S <= L + 2 eps^2`, the sufficient condition for solvability.
    ExistenceConditionFails { lhs: f64, rhs: f64 },
    /// `K1 <= eps^2`.
    CoercivityConstantSmall { k1: f64, eps_sq: f64 },
    /// `F(s) >= K1 s^2 - K2` fails on the sampled range.
    CoercivityViolated { k1: f64, k2: f64 },
}

impl fmt::Display for ParamWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamWarning::StabilityNotCertified { stabilization, lipschitz: Some(l) } => write!(
                f,
                "stability not certified: S = {stabilization} <= L/2 = {}",
                0.5 * l
            ),
            ParamWarning::StabilityNotCertified { lipschitz: None, .. } => {
                write!(f, "stability not certified: untruncated potential has no Lipschitz bound")
            }
            ParamWarning::ExistenceConditionFails { lhs, rhs } => {
                write!(f, "solvability condition K1 + 2S > L + 2 eps^2 fails ({lhs} <= {rhs})")
            }
            ParamWarning::CoercivityConstantSmall { k1, eps_sq } => {
                write!(f, "coercivity constant K1 = {k1} does not exceed eps^2 = {eps_sq}")
            }
            ParamWarning::CoercivityViolated { k1, k2 } => {
                write!(f, "F(s) >= {k1} s^2 - {k2} fails on the sampled range")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub warnings: Vec<ParamWarning>,
    pub tau_over_h: f64,
}

/// Hard errors for unusable parameters, warnings for uncertified ones.
pub fn validate_params(p: &SchemeParams) -> Result<ParamCheck> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Argument(format!("{name} must be positive and finite, got {v}")))
        }
    };
    positive("tau", p.tau)?;
    positive("eps", p.eps)?;
    if !(p.stabilization >= 0.0) || !p.stabilization.is_finite() {
        return Err(Error::Argument(format!("S must be >= 0, got {}", p.stabilization)));
    }
    if !(p.mobility >= 0.0) || !p.mobility.is_finite() {
        return Err(Error::Argument(format!("mobility must be >= 0, got {}", p.mobility)));
    }
    if !(p.final_time >= p.tau) || !p.final_time.is_finite() {
        return Err(Error::Argument(format!(
            "final time {} must be at least one step ({})",
            p.final_time, p.tau
        )));
    }

    let mut warnings = Vec::new();
    let lipschitz = p.potential.lipschitz_bound().ok();
    if !p.is_certified() {
        warnings.push(ParamWarning::StabilityNotCertified {
            stabilization: p.stabilization,
            lipschitz,
        });
    }
    if let Some((k1, k2)) = p.coercivity {
        let eps_sq = p.eps * p.eps;
        if k1 <= eps_sq {
            warnings.push(ParamWarning::CoercivityConstantSmall { k1, eps_sq });
        }
        if let Some(l) = lipschitz {
            let (lhs, rhs) = (k1 + 2.0 * p.stabilization, l + 2.0 * eps_sq);
            if lhs <= rhs {
                warnings.push(ParamWarning::ExistenceConditionFails { lhs, rhs });
            }
        }
        let s_max = 10.0 * p.potential.truncation().unwrap_or(1.0);
        if !p.potential.check_coercivity(k1, k2, s_max, 10_001) {
            warnings.push(ParamWarning::CoercivityViolated { k1, k2 });
        }
    }
    Ok(ParamCheck {
        warnings,
        tau_over_h: p.tau / p.mesh.h(),
    })
}

/// `(phi, c, mu)` at time level `step_index`.
#[derive(Clone, Debug)]
pub struct State {
    pub phi: NodalFunction,
    pub c: NodalFunction,
    pub mu: NodalFunction,
    pub t: f64,
    pub step_index: usize,
}

impl State {
    pub fn new(phi: NodalFunction, c: NodalFunction, mu: NodalFunction, t: f64, step_index: usize) -> Result<Self> {
        let mesh = phi.mesh();
        if !mesh.same_as(c.mesh()) || !mesh.same_as(mu.mesh()) {
            return Err(Error::MeshMismatch("state fields live on different meshes".into()));
        }
        if !t.is_finite() {
            return Err(Error::Data(format!("non-finite time {t}")));
        }
        Ok(State {
            phi,
            c,
            mu,
            t,
            step_index,
        })
    }

    /// Initial state at `t = 0`; `mu` is the L2 projection of
    /// `-lap phi + eps^-2 f(phi) - c`, i.e. the chemical-potential equation
    /// without the stabilization term.
    pub fn initial(phi: NodalFunction, c: NodalFunction, p: &SchemeParams) -> Result<Self> {
        let ops = StepOperators::new(phi.mesh().clone());
        ops.check(&phi)?;
        ops.check(&c)?;
        let kphi = ops.stiffness.matvec(phi.values())?;
        let mc = ops.mass.matvec(c.values())?;
        let fload = ops.assembler.load(&phi, |s| p.potential.derivative(s))?;
        let inv_eps2 = 1.0 / (p.eps * p.eps);
        let rhs: Vec<f64> = (0..kphi.len()).map(|i| kphi[i] + inv_eps2 * fload[i] - mc[i]).collect();
        let mu = DirectSolver::new().solve_matrix(&ops.mass, &rhs)?.x;
        let mu = NodalFunction::new(phi.mesh().clone(), mu)?;
        State::new(phi, c, mu, 0.0, 0)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.phi.mesh()
    }
}

/// Matrices that do not change between steps.
#[derive(Clone, Debug)]
pub struct StepOperators {
    pub assembler: Assembler,
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
}

impl StepOperators {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let assembler = Assembler::new(mesh);
        let mass = assembler.mass();
        let stiffness = assembler.stiffness();
        StepOperators {
            assembler,
            mass,
            stiffness,
        }
    }

    fn check(&self, f: &NodalFunction) -> Result<()> {
        if self.assembler.mesh().same_as(f.mesh()) {
            Ok(())
        } else {
            Err(Error::MeshMismatch("field does not live on the scheme's mesh".into()))
        }
    }
}

/// Assemble the coupled system for one step from `state_n`.
pub fn build_step_system(state_n: &State, p: &SchemeParams, ops: &StepOperators) -> Result<BlockSystem> {
    if !p.mesh.same_as(ops.assembler.mesh()) {
        return Err(Error::MeshMismatch("operators and parameters use different meshes".into()));
    }
    for f in [&state_n.phi, &state_n.c] {
        ops.check(f)?;
    }
    let asm = &ops.assembler;
    let (m, k) = (&ops.mass, &ops.stiffness);
    let inv_tau = 1.0 / p.tau;
    let inv_eps2 = 1.0 / (p.eps * p.eps);
    let s_eps = p.stabilization * inv_eps2;

    let k_c = asm.weighted_stiffness(&state_n.c, 1)?;
    let k_c2 = asm.weighted_stiffness(&state_n.c, 2)?;

    let phi_n = state_n.phi.values();
    let c_n = state_n.c.values();

    let a_phi_phi = m.scaled(inv_tau);
    let a_phi_c = k_c.scaled(-1.0);
    let a_phi_mu = k.clone();
    let c_diffusion = SparseMatrix::linear_combination(&[(1.0, &k_c2), (p.mobility, k)])?;
    let a_c_c = SparseMatrix::linear_combination(&[(inv_tau, m), (1.0, &k_c2), (p.mobility, k)])?;
    let a_c_mu = k_c.scaled(-1.0);
    let a_mu_phi = SparseMatrix::linear_combination(&[(-1.0, k), (-s_eps, m)])?;

    let m_phi = m.matvec(phi_n)?;
    let m_c = m.matvec(c_n)?;
    let kc_phi = k_c.matvec(phi_n)?;
    let diff_phi = c_diffusion.matvec(phi_n)?;
    let f_load = asm.load(&state_n.phi, |s| p.potential.derivative(s))?;

    let n = phi_n.len();
    let mut rhs = vec![0.0; 3 * n];
    for i in 0..n {
        rhs[i] = inv_tau * m_phi[i] - kc_phi[i];
        rhs[n + i] = inv_tau * m_c[i] + diff_phi[i];
        rhs[2 * n + i] = inv_eps2 * f_load[i] - s_eps * m_phi[i];
    }
    BlockSystem::new(
        [
            [Some(a_phi_phi), Some(a_phi_c), Some(a_phi_mu)],
            [None, Some(a_c_c), Some(a_c_mu)],
            [Some(a_mu_phi), Some(m.clone()), Some(m.clone())],
        ],
        rhs,
    )
}

/// Relative tolerance of the per-step mass check.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Owns the constant operators and the cached factorization for one run.
#[derive(Debug)]
pub struct Stepper {
    params: SchemeParams,
    ops: StepOperators,
    solver: DirectSolver,
    last_residual: f64,
}

impl Stepper {
    pub fn new(params: SchemeParams) -> Result<Self> {
        validate_params(&params)?;
        let ops = StepOperators::new(params.mesh.clone());
        Ok(Stepper {
            params,
            ops,
            solver: DirectSolver::new(),
            last_residual: 0.0,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn operators(&self) -> &StepOperators {
        &self.ops
    }

    /// Relative residual of the most recent solve.
    pub fn last_residual(&self) -> f64 {
        self.last_residual
    }

    /// Consistent initial state from nodal fields (see [`State::initial`]).
    pub fn initial_state(&self, phi: NodalFunction, c: NodalFunction) -> Result<State> {
        State::initial(phi, c, &self.params)
    }

    /// One step of the scheme.
    pub fn advance(&mut self, state_n: &State) -> Result<State> {
        let step_index = state_n.step_index;
        let wrap = |e: Error| Error::Step {
            step_index,
            source: Box::new(e),
        };
        let sys = build_step_system(state_n, &self.params, &self.ops).map_err(wrap)?;
        let sol = self.solver.solve(&sys).map_err(wrap)?;
        self.last_residual = sol.residual;
        let mesh = self.params.mesh.clone();
        let field = |f: Field| NodalFunction::new(mesh.clone(), sys.field(&sol.x, f).to_vec());
        let phi = field(Field::Phi).map_err(wrap)?;
        let c = field(Field::C).map_err(wrap)?;
        let mu = field(Field::Mu).map_err(wrap)?;

        let ones = vec![1.0; mesh.node_count()];
        let m1 = self.ops.mass.matvec(&ones).map_err(wrap)?;
        for (name, old, new) in [("phi", &state_n.phi, &phi), ("c", &state_n.c, &c)] {
            let before = crate::linalg::dot(&m1, old.values());
            let after = crate::linalg::dot(&m1, new.values());
            if (after - before).abs() > MASS_TOLERANCE * (1.0 + before.abs()) {
                return Err(wrap(Error::Data(format!(
                    "mass of {name} drifted from {before:e} to {after:e}"
                ))));
            }
        }
        State::new(phi, c, mu, (step_index + 1) as f64 * self.params.tau, step_index + 1).map_err(wrap)
    }

    /// `T / tau` steps; `observer(prev, next)` runs after each one.
    pub fn run<F>(&mut self, initial: State, observer: F) -> Result<State>
    where
        F: FnMut(&State, &State) -> Result<()>,
    {
        let n = self.params.step_count()?;
        self.run_steps(initial, n, observer)
    }

    /// Exactly `steps` steps regardless of the configured final time.
    pub fn run_steps<F>(&mut self, initial: State, steps: usize, mut observer: F) -> Result<State>
    where
        F: FnMut(&State, &State) -> Result<()>,
    {
        let mut state = initial;
        for _ in 0..steps {
            let next = self.advance(&state)?;
            observer(&state, &next)?;
            state = next;
        }
        Ok(state)
    }
}

/// Build a stepper and run `initial` to the configured final time.
pub fn run<F>(initial: State, p: SchemeParams, observer: F) -> Result<State>
where
    F: FnMut(&State, &State) -> Result<()>,
{
    Stepper::new(p)?.run(initial, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::interpolate_nodal;

    fn params(n: usize) -> SchemeParams {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, n, n).unwrap();
        SchemeParams::new(mesh, 0.01, 0.3, 1.0, 0.05)
    }

    #[test]
    fn validation_examples() {
        let mut p = params(4).with_potential(Potential::truncated(1.5).unwrap());
        p.stabilization = 3.0;
        let check = validate_params(&p).unwrap();
        assert!(check.warnings.is_empty());
        assert!((check.tau_over_h - 0.01 / (0.25f64 * 2f64.sqrt())).abs() < 1e-15);

        let q = params(4);
        let w = validate_params(&q).unwrap().warnings;
        assert_eq!(
            w,
            vec![ParamWarning::StabilityNotCertified {
                stabilization: 1.0,
                lipschitz: None
            }]
        );
        assert!(w[0].to_string().contains("stability not certified"));

        let mut bad = params(4);
        bad.tau = 0.0;
        assert!(matches!(validate_params(&bad), Err(Error::Argument(_))));
        let mut bad = params(4);
        bad.eps = -1.0;
        assert!(matches!(validate_params(&bad), Err(Error::Argument(_))));
    }

    #[test]
    fn existence_condition_warning() {
        let mut p = params(2)
            .with_potential(Potential::truncated(1.5).unwrap())
            .with_coercivity(0.05, 1.0);
        p.stabilization = 2.9;
        let w = validate_params(&p).unwrap().warnings;
        // 0.05 + 5.8 <= 5.75 + 0.18 and K1 < eps^2
        assert!(w.iter().any(|x| matches!(x, ParamWarning::ExistenceConditionFails { .. })));
        assert!(w.iter().any(|x| matches!(x, ParamWarning::CoercivityConstantSmall { .. })));
        assert!(!w.iter().any(|x| matches!(x, ParamWarning::StabilityNotCertified { .. })));
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.128, 1e-3).unwrap(), 128);
        assert_eq!(step_count(0.128, 5e-4).unwrap(), 256);
        assert_eq!(step_count(0.128, 16e-3).unwrap(), 8);
        assert_eq!(step_count(2.0, 0.1).unwrap(), 20);
        assert!(step_count(1.0, 0.016).is_err());
        assert!(step_count(0.128, 0.1).is_err());
    }

    #[test]
    fn zero_mobility_drops_the_mobility_term_exactly() {
        let p = params(3).with_mobility(0.0);
        let ops = StepOperators::new(p.mesh.clone());
        let phi = interpolate_nodal(&p.mesh, |x, y| 0.2 * x - y * y).unwrap();
        let c = interpolate_nodal(&p.mesh, |x, y| 0.5 + 0.1 * x * y).unwrap();
        let state = State::new(phi, c.clone(), NodalFunction::zeros(p.mesh.clone()), 0.0, 0).unwrap();
        let sys = build_step_system(&state, &p, &ops).unwrap();
        let k_c2 = ops.assembler.weighted_stiffness(&c, 2).unwrap();
        let expected = SparseMatrix::linear_combination(&[(1.0 / p.tau, &ops.mass), (1.0, &k_c2)]).unwrap();
        assert_eq!(sys.block(Field::C, Field::C).unwrap().values(), expected.values());
        let rhs_c = k_c2.matvec(state.phi.values()).unwrap();
        let m_c = ops.mass.matvec(c.values()).unwrap();
        let n = rhs_c.len();
        for i in 0..n {
            assert_eq!(sys.rhs()[n + i], (1.0 / p.tau) * m_c[i] + rhs_c[i]);
        }
    }

    #[test]
    fn empty_run_returns_initial() {
        let p = params(2);
        let mesh = p.mesh.clone();
        let mut stepper = Stepper::new(p).unwrap();
        let init = stepper
            .initial_state(NodalFunction::constant(mesh.clone(), 0.3), NodalFunction::constant(mesh, 0.5))
            .unwrap();
        let mut calls = 0;
        let out = stepper
            .run_steps(init.clone(), 0, |_, _| {
                calls += 1;
                Ok(())
            })
            .unwrap();
        assert_eq!(calls, 0);
        assert_eq!(out.phi.values(), init.phi.values());
        assert_eq!(out.step_index, 0);
    }

    #[test]
    fn mesh_mismatch_is_rejected() {
        let p = params(2);
        let ops = StepOperators::new(p.mesh.clone());
        let other = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 3, 3).unwrap();
        let z = NodalFunction::zeros(other);
        let s = State::new(z.clone(), z.clone(), z, 0.0, 0).unwrap();
        assert!(matches!(build_step_system(&s, &p, &ops), Err(Error::MeshMismatch(_))));
    }
}
