//! Discrete energy, masses, dissipation and the a-priori monitor sums.
//!
//! Everything here works elementwise on immutable states: quadratic terms are
//! integrated exactly for P1 data and `<F(phi), 1>` uses the same degree-4
//! rule as the load vector of the scheme, so the energy inequality is tested
//! against exactly the quantities the solver sees.

use std::sync::Arc;

use crate::fem::{element_mass, grad_lp_norm, w1p_norm, Assembler, QuadratureRule};
use crate::linalg::{DirectSolver, SparseMatrix};
use crate::mesh::{Mesh, NodalFunction};
use crate::stepper::{SchemeParams, State};
use crate::{Error, Result};

fn same_mesh(a: &NodalFunction, b: &NodalFunction) -> Result<()> {
    if a.mesh().same_as(b.mesh()) {
        Ok(())
    } else {
        Err(Error::MeshMismatch("fields live on different meshes".into()))
    }
}

/// Exact `<u, v>` for P1 fields.
pub fn l2_inner(u: &NodalFunction, v: &NodalFunction) -> Result<f64> {
    same_mesh(u, v)?;
    let mesh = u.mesh();
    let (uv, vv) = (u.values(), v.values());
    let mut total = 0.0;
    for (nodes, geom) in mesh.elements().iter().zip(mesh.geometries()) {
        let m = element_mass(geom.area);
        for a in 0..3 {
            for b in 0..3 {
                total += m[a][b] * uv[nodes[a]] * vv[nodes[b]];
            }
        }
    }
    Ok(total)
}

/// Exact `<grad u, grad v>` for P1 fields.
pub fn grad_inner(u: &NodalFunction, v: &NodalFunction) -> Result<f64> {
    same_mesh(u, v)?;
    let mesh = u.mesh();
    let (uv, vv) = (u.values(), v.values());
    let mut total = 0.0;
    for (nodes, geom) in mesh.elements().iter().zip(mesh.geometries()) {
        let gu = element_gradient(nodes, &geom.grad_basis, uv);
        let gv = element_gradient(nodes, &geom.grad_basis, vv);
        total += geom.area * (gu[0] * gv[0] + gu[1] * gv[1]);
    }
    Ok(total)
}

fn element_gradient(nodes: &[usize; 3], grads: &[[f64; 2]; 3], v: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for a in 0..3 {
        g[0] += v[nodes[a]] * grads[a][0];
        g[1] += v[nodes[a]] * grads[a][1];
    }
    g
}

/// `<v, 1>`.
pub fn mass(v: &NodalFunction) -> f64 {
    let mesh = v.mesh();
    let vv = v.values();
    mesh.elements()
        .iter()
        .zip(mesh.geometries())
        .map(|(n, g)| g.area * (vv[n[0]] + vv[n[1]] + vv[n[2]]) / 3.0)
        .sum()
}

/// `<v, 1> / |Omega|`.
pub fn mean(v: &NodalFunction) -> f64 {
    mass(v) / v.mesh().domain_area()
}

/// `E = 1/2 |grad phi|^2 + eps^-2 <F(phi), 1> + 1/2 |c|^2 - <phi, c>`.
pub fn energy(state: &State, p: &SchemeParams) -> Result<f64> {
    let phi = &state.phi;
    let c = &state.c;
    same_mesh(phi, c)?;
    let rule = QuadratureRule::degree4();
    let mesh = phi.mesh();
    let (pv, cv) = (phi.values(), c.values());
    let (mut grad2, mut pot, mut c2, mut pc) = (0.0, 0.0, 0.0, 0.0);
    for (nodes, geom) in mesh.elements().iter().zip(mesh.geometries()) {
        let g = element_gradient(nodes, &geom.grad_basis, pv);
        grad2 += geom.area * (g[0] * g[0] + g[1] * g[1]);
        let vals = nodes.map(|k| pv[k]);
        let mut local = 0.0;
        for (lam, w) in rule.iter() {
            local += w * p.potential.value(lam[0] * vals[0] + lam[1] * vals[1] + lam[2] * vals[2]);
        }
        pot += geom.area * local;
        let m = element_mass(geom.area);
        for a in 0..3 {
            for b in 0..3 {
                c2 += m[a][b] * cv[nodes[a]] * cv[nodes[b]];
                pc += m[a][b] * pv[nodes[a]] * cv[nodes[b]];
            }
        }
    }
    let e = 0.5 * grad2 + pot / (p.eps * p.eps) + 0.5 * c2 - pc;
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::Data("non-finite energy".into()))
    }
}

/// The two squared norms dissipated by one step, before the factor `tau`:
/// `|grad mu - c^n grad w|^2` and `|grad w|^2` with `w = c^{n+1} - phi^n`.
pub fn dissipation_terms(s_n: &State, s_np1: &State) -> Result<(f64, f64)> {
    same_mesh(&s_n.phi, &s_np1.phi)?;
    let mesh = s_n.phi.mesh();
    let (phi_n, c_n) = (s_n.phi.values(), s_n.c.values());
    let (c_new, mu) = (s_np1.c.values(), s_np1.mu.values());
    let (mut flux, mut coupling) = (0.0, 0.0);
    for (nodes, geom) in mesh.elements().iter().zip(mesh.geometries()) {
        let gm = element_gradient(nodes, &geom.grad_basis, mu);
        let gc = element_gradient(nodes, &geom.grad_basis, c_new);
        let gp = element_gradient(nodes, &geom.grad_basis, phi_n);
        let gw = [gc[0] - gp[0], gc[1] - gp[1]];
        let [a, b, c] = nodes.map(|k| c_n[k]);
        let int_c = geom.area * (a + b + c) / 3.0;
        let (ab, bc, ca) = ((a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0);
        let int_c2 = geom.area * (ab * ab + bc * bc + ca * ca) / 3.0;
        let mm = gm[0] * gm[0] + gm[1] * gm[1];
        let mw = gm[0] * gw[0] + gm[1] * gw[1];
        let ww = gw[0] * gw[0] + gw[1] * gw[1];
        flux += geom.area * mm - 2.0 * int_c * mw + int_c2 * ww;
        coupling += geom.area * ww;
    }
    Ok((flux.max(0.0), coupling))
}

/// `E(n+1) - E(n) + tau |grad mu - c^n grad w|^2 + g tau |grad w|^2`;
/// non-positive (up to rounding) for certified parameters.
pub fn dissipation_residual(s_n: &State, s_np1: &State, p: &SchemeParams) -> Result<f64> {
    let (flux, coupling) = dissipation_terms(s_n, s_np1)?;
    Ok(energy(s_np1, p)? - energy(s_n, p)? + p.tau * (flux + p.mobility * coupling))
}

/// Per-step quantities written to the energy CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRecord {
    pub step_index: usize,
    pub t: f64,
    /// Energy of the new state.
    pub energy: f64,
    pub mass_phi: f64,
    pub mass_c: f64,
    /// `flux_term + g * coupling_term`.
    pub dissipation: f64,
    pub mu_mean: f64,
    /// `|mu|_{W^{1,6/5}}` of the new state.
    pub mu_w16_5: f64,
    /// `tau |grad mu^{n+1} - c^n grad(c^{n+1} - phi^n)|^2`.
    pub flux_term: f64,
    /// `tau |grad(c^{n+1} - phi^n)|^2`.
    pub coupling_term: f64,
}

/// Diagnostics of the step `s_n -> s_np1`.
pub fn record(s_n: &State, s_np1: &State, p: &SchemeParams) -> Result<EnergyRecord> {
    let (flux, coupling) = dissipation_terms(s_n, s_np1)?;
    let flux_term = p.tau * flux;
    let coupling_term = p.tau * coupling;
    Ok(EnergyRecord {
        step_index: s_np1.step_index,
        t: s_np1.t,
        energy: energy(s_np1, p)?,
        mass_phi: mass(&s_np1.phi),
        mass_c: mass(&s_np1.c),
        dissipation: flux_term + p.mobility * coupling_term,
        mu_mean: mean(&s_np1.mu),
        mu_w16_5: w1p_norm(&s_np1.mu, 1.2)?,
        flux_term,
        coupling_term,
    })
}

/// Running sums of the uniform a-priori estimates. Increments use plain
/// differences `v^{k+1} - v^k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonitorReport {
    pub steps: usize,
    /// `sum |c^{k+1} - c^k|^2`
    pub sum_dc_sq: f64,
    /// `sum |grad(phi^{k+1} - phi^k)|^2`
    pub sum_grad_dphi_sq: f64,
    /// `sum tau |grad mu^{k+1} - c^k grad(c^{k+1} - phi^k)|^2`
    pub sum_flux: f64,
    /// `sum tau |grad(c^{k+1} - phi^k)|^2`
    pub sum_coupling: f64,
    /// `sum tau |mu^{k+1}|_{W^{1,6/5}}^{4/3}`
    pub sum_mu_w43: f64,
    pub sup_phi_h1: f64,
    pub sup_c_l2: f64,
    pub sup_abs_mu_mean: f64,
    /// Largest `|mean(mu^{n+1})| / (|f(phi^n)|^2 + 1)`.
    pub max_mu_mean_ratio: f64,
}

impl MonitorReport {
    /// Named running sums, in a fixed order.
    pub fn sums(&self) -> [(&'static str, f64); 5] {
        [
            ("sum_dc_sq", self.sum_dc_sq),
            ("sum_grad_dphi_sq", self.sum_grad_dphi_sq),
            ("sum_flux", self.sum_flux),
            ("sum_coupling", self.sum_coupling),
            ("sum_mu_w43", self.sum_mu_w43),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.sums().iter().all(|(_, v)| v.is_finite())
            && self.sup_phi_h1.is_finite()
            && self.sup_c_l2.is_finite()
            && self.max_mu_mean_ratio.is_finite()
    }
}

/// Add the contributions of the step `s_n -> s_np1` described by `rec`.
pub fn accumulate(
    report: &MonitorReport,
    rec: &EnergyRecord,
    s_n: &State,
    s_np1: &State,
    p: &SchemeParams,
) -> Result<MonitorReport> {
    let dc = s_np1.c.difference(&s_n.c)?;
    let dphi = s_np1.phi.difference(&s_n.phi)?;
    let dc_sq = l2_inner(&dc, &dc)?;
    let gdphi = grad_lp_norm(&dphi, 2.0)?;
    let phi_h1 = (l2_inner(&s_np1.phi, &s_np1.phi)? + grad_inner(&s_np1.phi, &s_np1.phi)?).sqrt();
    let c_l2 = l2_inner(&s_np1.c, &s_np1.c)?.sqrt();
    let f_sq = Assembler::new(s_n.phi.mesh().clone()).integrate(&s_n.phi, |s| {
        let f = p.potential.derivative(s);
        f * f
    })?;
    let mut out = report.clone();
    out.steps += 1;
    out.sum_dc_sq += dc_sq;
    out.sum_grad_dphi_sq += gdphi * gdphi;
    out.sum_flux += rec.flux_term;
    out.sum_coupling += rec.coupling_term;
    out.sum_mu_w43 += p.tau * rec.mu_w16_5.powf(4.0 / 3.0);
    out.sup_phi_h1 = out.sup_phi_h1.max(phi_h1);
    out.sup_c_l2 = out.sup_c_l2.max(c_l2);
    out.sup_abs_mu_mean = out.sup_abs_mu_mean.max(rec.mu_mean.abs());
    out.max_mu_mean_ratio = out.max_mu_mean_ratio.max(rec.mu_mean.abs() / (f_sq + 1.0));
    Ok(out)
}

/// Collects records and monitor sums along a run; plug into
/// [`crate::stepper::Stepper::run`] through [`Monitor::observe`].
#[derive(Clone, Debug)]
pub struct Monitor {
    params: SchemeParams,
    pub records: Vec<EnergyRecord>,
    pub report: MonitorReport,
    pub initial_energy: Option<f64>,
}

impl Monitor {
    pub fn new(params: SchemeParams) -> Self {
        Monitor {
            params,
            records: Vec::new(),
            report: MonitorReport::default(),
            initial_energy: None,
        }
    }

    pub fn observe(&mut self, s_n: &State, s_np1: &State) -> Result<&EnergyRecord> {
        if self.initial_energy.is_none() {
            self.initial_energy = Some(energy(s_n, &self.params)?);
        }
        let rec = record(s_n, s_np1, &self.params)?;
        self.report = accumulate(&self.report, &rec, s_n, s_np1, &self.params)?;
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    /// `E(n+1) - E(n) + dissipation` for every recorded step.
    pub fn residuals(&self) -> Vec<f64> {
        let mut prev = self.initial_energy.unwrap_or(0.0);
        self.records
            .iter()
            .map(|r| {
                let res = r.energy - prev + r.dissipation;
                prev = r.energy;
                res
            })
            .collect()
    }
}

/// Run-constant bound on `|mean(mu^n)|` for truncated potentials.
///
/// Testing the chemical-potential equation with 1 and using mass
/// conservation gives `|Omega| mean(mu) = eps^-2 <f(phi^n), 1> - <c^0, 1>`.
/// With `|f(s)| <= L |s|`, the energy bound `E(n) <= E(0)` and
/// `F(s) >= K1 s^2 - K2` this yields
/// `|mean(mu)| <= L |phi|_max / (eps^2 |Omega|^{1/2}) + |mean(c^0)|` where
/// `|phi|_max^2 = (E(0) + K2 |Omega| / eps^2) / (K1 / eps^2 - 1/2)`.
pub fn mu_mean_bound(p: &SchemeParams, initial_energy: f64, c0_mean: f64, k1: f64, k2: f64) -> Result<f64> {
    let l = p.potential.lipschitz_bound()?;
    let inv_eps2 = 1.0 / (p.eps * p.eps);
    let area = p.mesh.domain_area();
    let denom = k1 * inv_eps2 - 0.5;
    if denom <= 0.0 {
        return Err(Error::Argument(format!(
            "coercivity constant K1 = {k1} too small for the bound (needs K1 > eps^2 / 2)"
        )));
    }
    let phi_max = ((initial_energy + k2 * area * inv_eps2) / denom).max(0.0).sqrt();
    Ok(l * phi_max * inv_eps2 / area.sqrt() + c0_mean.abs())
}

/// Discrete inverse Neumann Laplacian: the mean-free `u` with
/// `<grad u, grad eta> = <xi, eta> - |Omega|^-1 <xi, 1> <eta, 1>` for all `eta`.
pub fn inverse_laplacian(mesh: &Arc<Mesh>, xi: &NodalFunction) -> Result<NodalFunction> {
    if !mesh.same_as(xi.mesh()) {
        return Err(Error::MeshMismatch("inverse Laplacian of a field on another mesh".into()));
    }
    let asm = Assembler::new(mesh.clone());
    let m = asm.mass();
    let k = asm.stiffness();
    let ones = vec![1.0; mesh.node_count()];
    let m1 = m.matvec(&ones)?;
    let mut rhs = m.matvec(xi.values())?;
    let full = crate::linalg::norm2(&rhs);
    let avg = rhs.iter().sum::<f64>() / mesh.domain_area();
    for (r, w) in rhs.iter_mut().zip(&m1) {
        *r -= avg * w;
    }
    // Constants (and zero) project to rounding noise.
    if crate::linalg::norm2(&rhs) <= 1e-14 * full {
        return Ok(NodalFunction::zeros(mesh.clone()));
    }
    // Pin node 0 to fix the constant; the compatible right-hand side makes
    // the dropped row redundant.
    let pinned = pin_first_node(&k)?;
    rhs[0] = 0.0;
    let mut u = DirectSolver::new().solve_matrix(&pinned, &rhs)?.x;
    let field = NodalFunction::new(mesh.clone(), u.clone())?;
    let shift = mean(&field);
    for v in u.iter_mut() {
        *v -= shift;
    }
    NodalFunction::new(mesh.clone(), u)
}

fn pin_first_node(k: &SparseMatrix) -> Result<SparseMatrix> {
    let pattern = k.pattern().clone();
    let mut values = k.values().to_vec();
    for i in 0..pattern.nrows() {
        for idx in pattern.row_ptr()[i]..pattern.row_ptr()[i + 1] {
            let j = pattern.col_idx()[idx];
            if i == 0 || j == 0 {
                values[idx] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    SparseMatrix::from_parts(pattern, values)
}
