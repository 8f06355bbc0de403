//! P1 bilinear forms, load vectors and discrete norms.
//!
//! All matrices produced by one [`Assembler`] share a single node-adjacency
//! sparsity pattern, so they can be combined entrywise without re-indexing.
//! Element loops run in fixed element order with serial accumulation, which
//! makes every assembled quantity bit-reproducible.

mod quadrature;

use std::sync::Arc;

pub use quadrature::QuadratureRule;

use crate::linalg::{SparseMatrix, SparsityPattern};
use crate::mesh::{ElementGeometry, Mesh, NodalFunction};
use crate::{Error, Result};

/// Exact P1 element mass matrix `|K|/12 * [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Element stiffness scaled by `weight_integral`, the integral of the weight
/// over the element (the area for the unweighted form).
pub fn element_stiffness(geom: &ElementGeometry, weight_integral: f64) -> [[f64; 3]; 3] {
    let g = &geom.grad_basis;
    let mut k = [[0.0; 3]; 3];
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = weight_integral * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// Builds matrices and vectors on one mesh, reusing its sparsity pattern.
#[derive(Clone, Debug)]
pub struct Assembler {
    mesh: Arc<Mesh>,
    pattern: Arc<SparsityPattern>,
    load_rule: QuadratureRule,
}

impl Assembler {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let mut rows = vec![Vec::with_capacity(7); mesh.node_count()];
        for e in mesh.elements() {
            for &a in e {
                rows[a].extend_from_slice(e);
            }
        }
        let pattern = SparsityPattern::from_rows(mesh.node_count(), rows).expect("element indices are in range");
        Assembler {
            mesh,
            pattern: Arc::new(pattern),
            load_rule: QuadratureRule::degree4(),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Rule used for nonlinear loads and potential integrals (degree 4).
    pub fn load_rule(&self) -> &QuadratureRule {
        &self.load_rule
    }

    fn assemble(&self, mut local: impl FnMut(usize, &ElementGeometry) -> [[f64; 3]; 3]) -> SparseMatrix {
        let mut m = SparseMatrix::zeros(self.pattern.clone());
        for (e, (nodes, geom)) in self.mesh.elements().iter().zip(self.mesh.geometries()).enumerate() {
            let k = local(e, geom);
            for a in 0..3 {
                for b in 0..3 {
                    m.add(nodes[a], nodes[b], k[a][b]).expect("pattern covers element couplings");
                }
            }
        }
        m.set_symmetric_flag(true);
        m
    }

    /// Consistent mass matrix of the L2 inner product.
    pub fn mass(&self) -> SparseMatrix {
        self.assemble(|_, g| element_mass(g.area))
    }

    /// Stiffness matrix of `<grad u, grad v>`.
    pub fn stiffness(&self) -> SparseMatrix {
        self.assemble(|_, g| element_stiffness(g, g.area))
    }

    /// Matrix of `<w^p grad u, grad v>` for `p` in {1, 2}; the element
    /// integral of `w^p` is exact for P1 `w`.
    pub fn weighted_stiffness(&self, w: &NodalFunction, p: u32) -> Result<SparseMatrix> {
        self.check_mesh(w)?;
        if !(1..=2).contains(&p) {
            return Err(Error::Argument(format!("weight exponent must be 1 or 2, got {p}")));
        }
        let wv = w.values();
        let elements = self.mesh.elements();
        Ok(self.assemble(|e, g| {
            let [a, b, c] = elements[e].map(|k| wv[k]);
            let mean = if p == 1 {
                (a + b + c) / 3.0
            } else {
                let (ab, bc, ca) = ((a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0);
                (ab * ab + bc * bc + ca * ca) / 3.0
            };
            element_stiffness(g, g.area * mean)
        }))
    }

    /// Load vector `b_i = <g(u), psi_i>` with the degree-4 rule.
    pub fn load(&self, u: &NodalFunction, g: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        self.check_mesh(u)?;
        let uv = u.values();
        let mut b = vec![0.0; uv.len()];
        for (nodes, geom) in self.mesh.elements().iter().zip(self.mesh.geometries()) {
            let vals = nodes.map(|k| uv[k]);
            for (lam, w) in self.load_rule.iter() {
                let uq = lam[0] * vals[0] + lam[1] * vals[1] + lam[2] * vals[2];
                let gq = g(uq);
                if !gq.is_finite() {
                    return Err(Error::Data(format!("non-finite load integrand at u = {uq}")));
                }
                let s = geom.area * w * gq;
                for a in 0..3 {
                    b[nodes[a]] += s * lam[a];
                }
            }
        }
        Ok(b)
    }

    /// `int g(u) dx` with the same degree-4 rule as [`Assembler::load`].
    pub fn integrate(&self, u: &NodalFunction, g: impl Fn(f64) -> f64) -> Result<f64> {
        self.check_mesh(u)?;
        integrate_with(&self.mesh, u.values(), &self.load_rule, g)
    }

    fn check_mesh(&self, f: &NodalFunction) -> Result<()> {
        if self.mesh.same_as(f.mesh()) {
            Ok(())
        } else {
            Err(Error::MeshMismatch("field does not live on the assembler's mesh".into()))
        }
    }
}

fn integrate_with(mesh: &Mesh, uv: &[f64], rule: &QuadratureRule, g: impl Fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    for (nodes, geom) in mesh.elements().iter().zip(mesh.geometries()) {
        let vals = nodes.map(|k| uv[k]);
        let mut local = 0.0;
        for (lam, w) in rule.iter() {
            local += w * g(lam[0] * vals[0] + lam[1] * vals[1] + lam[2] * vals[2]);
        }
        total += geom.area * local;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Data("non-finite integral".into()))
    }
}

pub fn assemble_mass(mesh: &Arc<Mesh>) -> SparseMatrix {
    Assembler::new(mesh.clone()).mass()
}

pub fn assemble_stiffness(mesh: &Arc<Mesh>) -> SparseMatrix {
    Assembler::new(mesh.clone()).stiffness()
}

pub fn assemble_weighted_stiffness(mesh: &Arc<Mesh>, w: &NodalFunction, p: u32) -> Result<SparseMatrix> {
    Assembler::new(mesh.clone()).weighted_stiffness(w, p)
}

pub fn assemble_load(mesh: &Arc<Mesh>, u: &NodalFunction, g: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    Assembler::new(mesh.clone()).load(u, g)
}

/// `||v||_{L^p}`: exact-degree quadrature of `|v|^p` for integer `p`,
/// the degree-4 rule otherwise.
pub fn lp_norm(v: &NodalFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Argument(format!("L^p norm needs finite p >= 1, got {p}")));
    }
    let rule = if p.fract() == 0.0 {
        QuadratureRule::exact_for(p as usize + 1)
    } else {
        QuadratureRule::degree4()
    };
    let integral = integrate_with(v.mesh(), v.values(), &rule, |s| s.abs().powf(p))?;
    Ok(integral.max(0.0).powf(1.0 / p))
}

/// `||grad v||_{L^p}`, exact for P1 fields: `(sum_K |grad v_K|^p |K|)^{1/p}`.
pub fn grad_lp_norm(v: &NodalFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Argument(format!("L^p norm needs finite p >= 1, got {p}")));
    }
    let uv = v.values();
    let mesh = v.mesh();
    let mut total = 0.0;
    for (nodes, geom) in mesh.elements().iter().zip(mesh.geometries()) {
        let (mut gx, mut gy) = (0.0, 0.0);
        for a in 0..3 {
            gx += uv[nodes[a]] * geom.grad_basis[a][0];
            gy += uv[nodes[a]] * geom.grad_basis[a][1];
        }
        total += gx.hypot(gy).powf(p) * geom.area;
    }
    Ok(total.powf(1.0 / p))
}

/// `(||v||^2 + ||grad v||^2)^{1/2}`.
pub fn h1_norm(v: &NodalFunction) -> Result<f64> {
    let l2 = lp_norm(v, 2.0)?;
    let g = grad_lp_norm(v, 2.0)?;
    Ok(l2.hypot(g))
}

/// `(||v||_{L^p}^p + ||grad v||_{L^p}^p)^{1/p}`.
pub fn w1p_norm(v: &NodalFunction, p: f64) -> Result<f64> {
    let a = lp_norm(v, p)?;
    let b = grad_lp_norm(v, p)?;
    Ok((a.powf(p) + b.powf(p)).powf(1.0 / p))
}
